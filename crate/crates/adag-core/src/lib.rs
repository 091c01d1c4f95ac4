//! Multi-domain DAG learning with a linear-attention kernel map.
//!
//! The crate implements the full pipeline: sampling linear structural
//! equation models and multi-domain corpora, a reverse-mode tape over dense
//! f64 matrices, the attention network that maps a d×n observation block to
//! a d×d weighted adjacency estimate, augmented-Lagrangian training of that
//! network across domains, a single-task baseline built on the same
//! machinery, and the evaluation suite (SHD, relative error, edge counts,
//! inference latency, covariance spectra).

pub mod corpus_io;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod expm;
pub mod matfile;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod notears;
pub mod parallel;
pub mod rng;
pub mod spectra;
pub mod tape;
pub mod trainer;

pub use datagen::{
    connectivity_matrix, make_corpus, sample_er_dag, sample_weights, simulate_sem, Corpus,
    CorpusSetting, CorpusSpec, DomainDataset, NoiseKind, TopologicalOrder, WeightedAdjacency,
};
pub use error::{Error, Result};
pub use eval::{
    augment_observations, evaluate_suite, infer, EvalMethod, EvalOptions, MetricsRecord,
};
pub use expm::{acyclicity, expm, expm_trace, AcyclicityResult};
pub use matrix::Matrix;
pub use metrics::{relative_error, shd, support_graph, threshold_graph, BinaryGraph};
pub use model::{
    attention_scores, forward, reconstruction_loss, AttentionParams, ForwardTrace, ModelDims,
};
pub use notears::{notears_fit, NotearsFit, SingleTaskConfig};
pub use spectra::{jacobi_eigh, spectra, SpectrumReport};
pub use tape::{Gradients, NodeId, Tape};
pub use trainer::{
    adam_step, augmented_objective, inner_solve, lr_schedule, train, AdamConfig, AdamState,
    Phase, TrainConfig, TrainOutcome, TrainState,
};
