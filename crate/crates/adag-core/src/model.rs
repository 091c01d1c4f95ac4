//! The attention kernel map from a d×n observation block to a d×d weighted
//! adjacency estimate.
//!
//! The network is a stack of L residual linear-attention layers followed by
//! an output head:
//!
//! ```text
//! H_0 = X
//! H_l = rmsnorm( Attn(H_{l-1}; Wq_l, Wk_l) · H_{l-1} + H_{l-1} )
//! Â   = Wp · Attn(H_L; out_q, out_k)
//! ```
//!
//! where `Attn(H; Wq, Wk) = σ(H·Wq·Wkᵀ·Hᵀ / √d)` and σ is the identity. The
//! whole forward pass is recorded on a [`Tape`] so gradients with respect to
//! every parameter come from one reverse sweep seeded at the Â node.
//!
//! The per-layer RMS renormalization (a no-op at the canonical unit-RMS
//! operating point, identity on zero blocks) pins the hidden-state scale:
//! without it the scores' quadratic dependence on H compounds doubly
//! exponentially through a 15-layer stack and tail-scale domains overflow
//! f64 for any usable weight scale.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matfile::{fnv1a64, read_payload, read_u32, write_payload};
use crate::matrix::Matrix;
use crate::tape::{NodeId, Tape};

pub const CKPT_MAGIC: &[u8; 4] = b"ADAG";
pub const CKPT_VERSION: u32 = 1;

/// Gain applied on top of the 1/√n baseline when initializing the per-layer
/// query/key matrices. The residual stack cubes hidden magnitudes layer by
/// layer, so at L = 15 the baseline scale overflows within the first forward
/// pass; this gain keeps the initial per-layer amplification small while
/// leaving the weights large enough that early Adam steps (±lr per entry)
/// are a modest relative perturbation.
pub const QK_INIT_GAIN: f64 = 0.1;

/// Initialization scale of the output projection, keeping the initial Â
/// near zero (feasible for the acyclicity constraint).
pub const OUT_P_INIT_STD: f64 = 0.01;

/// Model dimensions: one checkpoint is bound to one (d, n, k, L).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Variable count.
    pub d: usize,
    /// Samples per domain.
    pub n: usize,
    /// Attention head dimension.
    pub k: usize,
    /// Number of residual attention layers.
    pub l: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::InvalidParameter(format!(
                "model dims need positive d and n, got d={} n={}",
                self.d, self.n
            )));
        }
        if self.l < 1 {
            return Err(Error::InvalidParameter("need at least one layer".into()));
        }
        if self.k < 1 || self.k > self.n {
            return Err(Error::InvalidParameter(format!(
                "head dimension k={} must satisfy 1 <= k <= n={}",
                self.k, self.n
            )));
        }
        Ok(())
    }
}

/// Activation applied to attention scores. The identity enables the linear
/// attention formulation; the hook exists so other activations can be
/// swapped in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Identity,
}

impl Activation {
    fn apply_on_tape(&self, _tape: &mut Tape, id: NodeId) -> NodeId {
        match self {
            Activation::Identity => id,
        }
    }

    fn apply(&self, m: Matrix) -> Matrix {
        match self {
            Activation::Identity => m,
        }
    }
}

/// Trainable parameters: L pairs of n×k query/key matrices plus the output
/// head (n×k query/key and a d×d projection).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub layers: Vec<(Matrix, Matrix)>,
    pub out_q: Matrix,
    pub out_k: Matrix,
    pub out_p: Matrix,
    pub dims: ModelDims,
}

impl AttentionParams {
    /// Random initialization: query/key entries N(0, gain/√n), output
    /// projection N(0, 0.01).
    pub fn init(dims: ModelDims, rng: &mut impl Rng) -> Result<AttentionParams> {
        dims.validate()?;
        let qk_std = QK_INIT_GAIN / (dims.n as f64).sqrt();
        let head_std = 1.0 / (dims.n as f64).sqrt();
        let qk = Normal::new(0.0, qk_std).unwrap();
        let head = Normal::new(0.0, head_std).unwrap();
        let proj = Normal::new(0.0, OUT_P_INIT_STD).unwrap();
        let mut draw =
            |rows: usize, cols: usize, dist: Normal<f64>| Matrix::from_fn(rows, cols, |_, _| dist.sample(rng));
        let layers = (0..dims.l)
            .map(|_| (draw(dims.n, dims.k, qk), draw(dims.n, dims.k, qk)))
            .collect();
        let out_q = draw(dims.n, dims.k, head);
        let out_k = draw(dims.n, dims.k, head);
        let out_p = draw(dims.d, dims.d, proj);
        Ok(AttentionParams {
            layers,
            out_q,
            out_k,
            out_p,
            dims,
        })
    }

    /// All-zero parameters; the forward pass then returns Â = 0 exactly.
    pub fn zeros(dims: ModelDims) -> Result<AttentionParams> {
        dims.validate()?;
        Ok(AttentionParams {
            layers: (0..dims.l)
                .map(|_| (Matrix::zeros(dims.n, dims.k), Matrix::zeros(dims.n, dims.k)))
                .collect(),
            out_q: Matrix::zeros(dims.n, dims.k),
            out_k: Matrix::zeros(dims.n, dims.k),
            out_p: Matrix::zeros(dims.d, dims.d),
            dims,
        })
    }

    pub fn tensor_count(&self) -> usize {
        2 * self.dims.l + 3
    }

    /// Parameter matrices in canonical order: wq_1, wk_1, …, wq_L, wk_L,
    /// out_q, out_k, out_p. Checkpoints, gradients and optimizer moments all
    /// use this order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(self.tensor_count());
        for (wq, wk) in &self.layers {
            out.push(wq);
            out.push(wk);
        }
        out.push(&self.out_q);
        out.push(&self.out_k);
        out.push(&self.out_p);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::with_capacity(2 * self.dims.l + 3);
        for (wq, wk) in &mut self.layers {
            out.push(wq);
            out.push(wk);
        }
        out.push(&mut self.out_q);
        out.push(&mut self.out_k);
        out.push(&mut self.out_p);
        out
    }

    /// Zero matrices shaped like each parameter tensor.
    pub fn zeros_like_tensors(&self) -> Vec<Matrix> {
        self.tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect()
    }

    /// Serializes to the checkpoint format: magic `ADAG`, version, dims,
    /// tensor payloads in canonical order, FNV-1a checksum of prior bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        for dim in [self.dims.d, self.dims.n, self.dims.k, self.dims.l] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for tensor in self.tensors() {
            write_payload(&mut out, tensor);
        }
        let checksum = fnv1a64(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<AttentionParams> {
        if bytes.len() < 8 + 16 + 8 {
            return Err(Error::format(path, "checkpoint too short"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        let actual = fnv1a64(body);
        if stored != actual {
            return Err(Error::format(
                path,
                format!("checksum failure: stored {stored:#018x}, computed {actual:#018x}"),
            ));
        }
        let mut reader = body;
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic).unwrap();
        if &magic != CKPT_MAGIC {
            return Err(Error::format(path, "bad magic (expected ADAG)"));
        }
        let version = read_u32(&mut reader, path)?;
        if version != CKPT_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let d = read_u32(&mut reader, path)? as usize;
        let n = read_u32(&mut reader, path)? as usize;
        let k = read_u32(&mut reader, path)? as usize;
        let l = read_u32(&mut reader, path)? as usize;
        let dims = ModelDims { d, n, k, l };
        dims.validate()
            .map_err(|e| Error::format(path, format!("bad dims: {e}")))?;

        let mut expect = |rows: usize, cols: usize, name: &str| -> Result<Matrix> {
            let m = read_payload(&mut reader, path)?;
            if m.shape() != (rows, cols) {
                return Err(Error::format(
                    path,
                    format!(
                        "{name} has shape {}x{}, expected {rows}x{cols}",
                        m.rows(),
                        m.cols()
                    ),
                ));
            }
            m.validate_finite(name)?;
            Ok(m)
        };
        let mut layers = Vec::with_capacity(l);
        for i in 0..l {
            let wq = expect(n, k, &format!("wq_{}", i + 1))?;
            let wk = expect(n, k, &format!("wk_{}", i + 1))?;
            layers.push((wq, wk));
        }
        let out_q = expect(n, k, "out_q")?;
        let out_k = expect(n, k, "out_k")?;
        let out_p = expect(d, d, "out_p")?;
        if !reader.is_empty() {
            return Err(Error::format(path, "trailing bytes in checkpoint"));
        }
        Ok(AttentionParams {
            layers,
            out_q,
            out_k,
            out_p,
            dims,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<AttentionParams> {
        let bytes = std::fs::read(path)?;
        AttentionParams::from_bytes(&bytes, &path.display().to_string())
    }
}

/// The recorded forward pass of one domain.
#[derive(Debug)]
pub struct ForwardTrace {
    pub tape: Tape,
    /// Node ids of H_0..H_L.
    pub hidden: Vec<NodeId>,
    /// Node id of the adjacency estimate.
    pub a_hat: NodeId,
    /// Node id of the input block.
    pub x: NodeId,
    /// Parameter leaf ids in canonical tensor order.
    pub param_nodes: Vec<NodeId>,
}

impl ForwardTrace {
    pub fn a_hat_value(&self) -> &Matrix {
        self.tape.value(self.a_hat)
    }

    pub fn hidden_value(&self, l: usize) -> &Matrix {
        self.tape.value(self.hidden[l])
    }
}

/// Scalar canonicalization of an observation block: divide by the RMS entry
/// so every domain presents to the network at unit scale. A linear SEM is
/// invariant under scalar data scaling (x/s solves the same SEM with noise
/// e/s), so the adjacency a block encodes is unchanged while the network
/// never sees the heavy-tailed per-domain variance that would blow up the
/// quadratic attention scores. Zero blocks pass through unchanged.
pub fn canonicalize_block(x: &Matrix) -> Matrix {
    crate::tape::rms_normalized(x)
}

/// One attention block outside a tape: `σ(H·Wq·Wkᵀ·Hᵀ / √d)`.
pub fn attention_scores(h: &Matrix, wq: &Matrix, wk: &Matrix) -> Result<Matrix> {
    attention_scores_with(h, wq, wk, Activation::Identity)
}

pub fn attention_scores_with(
    h: &Matrix,
    wq: &Matrix,
    wk: &Matrix,
    activation: Activation,
) -> Result<Matrix> {
    let d = h.rows();
    let q = h.matmul(wq)?;
    let scores = q.matmul_nt(&h.matmul(wk)?)?;
    Ok(activation.apply(scores.scale(1.0 / (d as f64).sqrt())))
}

/// Runs the attention stack on one observation block, recording every step
/// on a fresh tape. Pure: identical inputs give bit-identical traces.
pub fn forward(x: &Matrix, params: &AttentionParams) -> Result<ForwardTrace> {
    forward_with(x, params, Activation::Identity)
}

pub fn forward_with(
    x: &Matrix,
    params: &AttentionParams,
    activation: Activation,
) -> Result<ForwardTrace> {
    let dims = params.dims;
    if x.shape() != (dims.d, dims.n) {
        return Err(Error::dim(
            "forward input",
            format!("{}x{}", x.rows(), x.cols()),
            format!("{}x{}", dims.d, dims.n),
        ));
    }
    let inv_sqrt_d = 1.0 / (dims.d as f64).sqrt();
    let mut tape = Tape::new();
    let x_id = tape.leaf(x.clone());

    let mut param_nodes = Vec::with_capacity(params.tensor_count());
    let mut layer_nodes = Vec::with_capacity(dims.l);
    for (wq, wk) in &params.layers {
        let wq_id = tape.leaf(wq.clone());
        let wk_id = tape.leaf(wk.clone());
        param_nodes.push(wq_id);
        param_nodes.push(wk_id);
        layer_nodes.push((wq_id, wk_id));
    }
    let out_q_id = tape.leaf(params.out_q.clone());
    let out_k_id = tape.leaf(params.out_k.clone());
    let out_p_id = tape.leaf(params.out_p.clone());
    param_nodes.extend([out_q_id, out_k_id, out_p_id]);

    let scores_block = |tape: &mut Tape, h: NodeId, wq: NodeId, wk: NodeId| -> Result<NodeId> {
        let q = tape.matmul(h, wq)?;
        let k_t = tape.transpose(wk)?;
        let qk = tape.matmul(q, k_t)?;
        let h_t = tape.transpose(h)?;
        let raw = tape.matmul(qk, h_t)?;
        let scaled = tape.scale(raw, inv_sqrt_d)?;
        Ok(activation.apply_on_tape(tape, scaled))
    };

    let mut hidden = vec![x_id];
    let mut h = x_id;
    for &(wq_id, wk_id) in &layer_nodes {
        let scores = scores_block(&mut tape, h, wq_id, wk_id)?;
        let attended = tape.matmul(scores, h)?;
        let residual = tape.add(attended, h)?;
        h = tape.rms_norm(residual)?;
        hidden.push(h);
    }
    let out_scores = scores_block(&mut tape, h, out_q_id, out_k_id)?;
    let a_hat = tape.matmul(out_p_id, out_scores)?;

    Ok(ForwardTrace {
        tape,
        hidden,
        a_hat,
        x: x_id,
        param_nodes,
    })
}

/// Reconstruction loss of one domain and its gradient with respect to Â:
/// `(1/2n)·‖X − Âᵀ·X‖_F²` and `−(1/n)·X·(X − Âᵀ·X)ᵀ`.
pub fn domain_reconstruction(x: &Matrix, a_hat: &Matrix) -> Result<(f64, Matrix)> {
    let n = x.cols();
    let predicted = a_hat.matmul_tn(x)?;
    let residual = x.sub(&predicted)?;
    let loss = residual.data().iter().map(|v| v * v).sum::<f64>() / (2.0 * n as f64);
    let grad = x.matmul_nt(&residual)?.scale(-1.0 / n as f64);
    Ok((loss, grad))
}

/// Mean reconstruction loss over a batch of traced domains.
pub fn reconstruction_loss(batch: &[(&Matrix, &ForwardTrace)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter(
            "reconstruction loss over an empty batch".into(),
        ));
    }
    let mut total = 0.0;
    for (x, trace) in batch {
        total += domain_reconstruction(x, trace.a_hat_value())?.0;
    }
    Ok(total / batch.len() as f64)
}
