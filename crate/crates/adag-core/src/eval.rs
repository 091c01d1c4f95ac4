//! Zero-shot inference over held-out domains and the metric suite: SHD,
//! relative error, edge counts and per-domain inference wall-clock, plus the
//! domain-count ablation. Emits plot-ready CSV (comma delimiter, `.`
//! decimal, LF endings) and a JSON summary.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use crate::datagen::Corpus;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{relative_error, shd, support_graph, threshold_graph};
use crate::model::{canonicalize_block, domain_reconstruction, forward, AttentionParams};
use crate::notears::{notears_fit, SingleTaskConfig};
use crate::parallel::parallel_map;
use crate::rng::{mix64, seeded_rng};
use crate::spectra::SpectrumReport;
use crate::trainer::TrainConfig;

/// Zero-shot inference: scalar input canonicalization followed by one
/// forward pass, no per-domain optimization.
pub fn infer(x: &Matrix, params: &AttentionParams) -> Result<Matrix> {
    let x = canonicalize_block(x);
    Ok(forward(&x, params)?.a_hat_value().clone())
}

/// Pads a low-sample block to `target_n` columns: the originals first, then
/// duplicates drawn uniformly with replacement.
pub fn augment_observations(x: &Matrix, target_n: usize, rng: &mut impl Rng) -> Result<Matrix> {
    let n = x.cols();
    if n > target_n {
        return Err(Error::InvalidParameter(format!(
            "cannot augment {n} samples down to {target_n}"
        )));
    }
    let d = x.rows();
    let mut out = Matrix::zeros(d, target_n);
    for j in 0..target_n {
        let src = if j < n { j } else { rng.random_range(0..n) };
        for i in 0..d {
            out[(i, j)] = x[(i, src)];
        }
    }
    Ok(out)
}

/// Per-domain evaluation outcome.
#[derive(Debug, Clone)]
pub struct DomainMetrics {
    pub domain_idx: usize,
    pub shd: usize,
    /// `None` when the ground truth has zero norm.
    pub rel_err: Option<f64>,
    /// Edge count of the thresholded estimate.
    pub n_edges: usize,
    /// Wall-clock of the estimate itself (forward pass or single-task fit).
    pub runtime_s: f64,
}

/// Averages over domains. `rel_err` averages the defined values only.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub shd: f64,
    pub rel_err: f64,
    pub n_edges: f64,
    pub runtime_s: f64,
}

/// How estimates are produced during evaluation.
pub enum EvalMethod<'a> {
    /// Zero-shot inference with a trained kernel map.
    Adag(&'a AttentionParams),
    /// An independent single-task fit per domain.
    Notears(&'a SingleTaskConfig),
}

impl EvalMethod<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMethod::Adag(_) => "adag",
            EvalMethod::Notears(_) => "notears",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Edge threshold applied to estimates.
    pub omega: f64,
    /// Duplicate-augment every domain to this sample count before
    /// estimating.
    pub augment_to: Option<usize>,
    /// Seed stream for the duplicate draws.
    pub augment_seed: u64,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            omega: 0.3,
            augment_to: None,
            augment_seed: 0,
            threads: 1,
        }
    }
}

/// Runs the metric suite over every domain of a corpus: estimate (timed),
/// threshold, SHD against the ground-truth support, relative error on the
/// raw estimate, edge count.
pub fn evaluate_suite(
    corpus: &Corpus,
    method: &EvalMethod<'_>,
    opts: &EvalOptions,
) -> Result<(MetricsRecord, Vec<DomainMetrics>)> {
    if let EvalMethod::Adag(params) = method {
        let expected_n = opts.augment_to.unwrap_or(corpus.n);
        if params.dims.d != corpus.d || params.dims.n != expected_n {
            return Err(Error::dim(
                "evaluate_suite",
                format!("model {}x{}", params.dims.d, params.dims.n),
                format!("corpus {}x{expected_n}", corpus.d),
            ));
        }
    }
    let rows = parallel_map(corpus.m(), opts.threads, |idx| -> Result<DomainMetrics> {
        let domain = &corpus.domains[idx];
        let x = match opts.augment_to {
            Some(target) => {
                let mut rng = seeded_rng(mix64(opts.augment_seed, idx as u64));
                augment_observations(&domain.x, target, &mut rng)?
            }
            None => domain.x.clone(),
        };
        let start = Instant::now();
        let a_hat = match method {
            EvalMethod::Adag(params) => infer(&x, params)?,
            EvalMethod::Notears(cfg) => notears_fit(&x, cfg)?.weights,
        };
        let runtime_s = start.elapsed().as_secs_f64();
        let estimate = threshold_graph(&a_hat, opts.omega)?;
        let truth = support_graph(&domain.a_gt);
        Ok(DomainMetrics {
            domain_idx: idx,
            shd: shd(&estimate, &truth)?,
            rel_err: relative_error(&a_hat, domain.a_gt.weights())?,
            n_edges: estimate.edge_count(),
            runtime_s,
        })
    });

    let mut out = Vec::with_capacity(corpus.m());
    for row in rows {
        out.push(row?);
    }
    Ok((summarize(&out), out))
}

/// Means over a slice of per-domain rows.
pub fn summarize(rows: &[DomainMetrics]) -> MetricsRecord {
    let m = rows.len().max(1) as f64;
    let defined: Vec<f64> = rows.iter().filter_map(|r| r.rel_err).collect();
    MetricsRecord {
        shd: rows.iter().map(|r| r.shd as f64).sum::<f64>() / m,
        rel_err: if defined.is_empty() {
            f64::NAN
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        },
        n_edges: rows.iter().map(|r| r.n_edges as f64).sum::<f64>() / m,
        runtime_s: rows.iter().map(|r| r.runtime_s).sum::<f64>() / m,
    }
}

/// Writes `metrics.csv`: one row per domain plus a method column.
pub fn write_metrics_csv(path: &Path, method: &str, rows: &[DomainMetrics]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(file, "domain_idx,shd,rel_err,n_edges,runtime_s,method\n")?;
    for row in rows {
        let rel = match row.rel_err {
            Some(v) => format!("{v}"),
            None => "nan".to_string(),
        };
        write!(
            file,
            "{},{},{},{},{},{}\n",
            row.domain_idx, row.shd, rel, row.n_edges, row.runtime_s, method
        )?;
    }
    Ok(())
}

/// Writes `metrics_summary.json`.
pub fn write_metrics_summary(
    path: &Path,
    method: &str,
    record: &MetricsRecord,
    rows: &[DomainMetrics],
    opts: &EvalOptions,
) -> Result<()> {
    let defined = rows.iter().filter(|r| r.rel_err.is_some()).count();
    let json = serde_json::json!({
        "method": method,
        "domains": rows.len(),
        "mean_shd": record.shd,
        "mean_rel_err": record.rel_err,
        "rel_err_defined_domains": defined,
        "mean_n_edges": record.n_edges,
        "mean_runtime_s": record.runtime_s,
        "omega": opts.omega,
        "augment_to": opts.augment_to,
    });
    std::fs::write(path, serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

/// Writes `spectra.csv`: eigenvalue index, value, flattened eigenvector.
pub fn write_spectra_csv(path: &Path, report: &SpectrumReport) -> Result<()> {
    let dim = report.eigenvalues.len();
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = String::from("index,eigenvalue");
    for i in 0..dim {
        header.push_str(&format!(",v{i}"));
    }
    write!(file, "{header}\n")?;
    for (idx, &value) in report.eigenvalues.iter().enumerate() {
        let mut line = format!("{idx},{value}");
        for i in 0..dim {
            line.push_str(&format!(",{}", report.vectors[(i, idx)]));
        }
        write!(file, "{line}\n")?;
    }
    Ok(())
}

/// One row of the domain-count ablation.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub m: usize,
    /// Mean test reconstruction loss.
    pub test_recon: f64,
    /// Mean test relative error (defined domains).
    pub test_rel_err: f64,
}

/// Trains one model per requested domain count on nested prefix sub-corpora
/// and evaluates reconstruction and relative error on a held-out corpus.
pub fn ablate_domains(
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    m_values: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    if m_values.is_empty() {
        return Err(Error::InvalidParameter("empty ablation M list".into()));
    }
    let mut rows = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let sub = train_corpus.prefix(m)?;
        let outcome = crate::trainer::train(&sub, cfg)?;
        rows.push(ablation_row(m, test_corpus, &outcome.state.params, cfg.threads)?);
    }
    Ok(rows)
}

/// Evaluates one trained model for an ablation row.
pub fn ablation_row(
    m: usize,
    test_corpus: &Corpus,
    params: &AttentionParams,
    threads: usize,
) -> Result<AblationRow> {
    let evals = parallel_map(test_corpus.m(), threads, |idx| -> Result<(f64, Option<f64>)> {
        let domain = &test_corpus.domains[idx];
        let a_hat = infer(&domain.x, params)?;
        let (recon, _) = domain_reconstruction(&canonicalize_block(&domain.x), &a_hat)?;
        let rel = relative_error(&a_hat, domain.a_gt.weights())?;
        Ok((recon, rel))
    });
    let mut recon_sum = 0.0;
    let mut rel_sum = 0.0;
    let mut rel_count = 0usize;
    for eval in evals {
        let (recon, rel) = eval?;
        recon_sum += recon;
        if let Some(r) = rel {
            rel_sum += r;
            rel_count += 1;
        }
    }
    Ok(AblationRow {
        m,
        test_recon: recon_sum / test_corpus.m() as f64,
        test_rel_err: if rel_count == 0 {
            f64::NAN
        } else {
            rel_sum / rel_count as f64
        },
    })
}

/// Writes `ablation.csv`.
pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(file, "m,test_recon,test_rel_err\n")?;
    for row in rows {
        write!(file, "{},{},{}\n", row.m, row.test_recon, row.test_rel_err)?;
    }
    Ok(())
}
