//! Implementations of the CLI subcommands.

use std::path::Path;

use anyhow::{bail, Context, Result};

use adag_core::corpus_io::{load_corpus, save_corpus};
use adag_core::datagen::{make_corpus, CorpusSetting, CorpusSpec, NoiseKind, TopologicalOrder};
use adag_core::eval::{
    ablation_row, evaluate_suite, infer, write_ablation_csv, write_metrics_csv,
    write_metrics_summary, write_spectra_csv, AblationRow, EvalMethod, EvalOptions,
};
use adag_core::matfile::{read_mat, write_mat};
use adag_core::model::AttentionParams;
use adag_core::notears::SingleTaskConfig;
use adag_core::parallel::parallel_map;
use adag_core::spectra::spectra;
use adag_core::trainer::{train_from, AdamConfig, TrainConfig, TrainState};

use crate::config::ConfigBag;
use crate::observer::RunLogger;
use crate::{
    AblateArgs, EvaluateArgs, GenerateArgs, InferArgs, SpectraArgs, TrainArgs, TrainFlags,
};

fn parse_order(text: &str) -> Result<TopologicalOrder> {
    let positions: Vec<usize> = text
        .split(',')
        .map(|tok| tok.trim().parse::<usize>().context("parsing --order"))
        .collect::<Result<_>>()?;
    Ok(TopologicalOrder::new(positions)?)
}

pub fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mut bag = ConfigBag::load(args.config.as_deref())?;
    let setting: String = bag.get("setting", args.setting, "heterogeneous".into())?;
    let spec = CorpusSpec {
        setting: setting.parse::<CorpusSetting>()?,
        d: bag.get("d", args.d, 5)?,
        n: bag.get("n", args.n, 100)?,
        m: bag.get("m", args.m, 100)?,
        degree: bag.get("degree", args.degree, 1)?,
        noise_kind: bag
            .get("noise", args.noise, "gaussian-equal-variance".to_string())?
            .parse::<NoiseKind>()?,
        master_seed: bag.get("seed", args.seed, 0)?,
        fixed_order: bag
            .get_opt("order", args.order)?
            .map(|text: String| parse_order(&text))
            .transpose()?,
    };
    bag.record("out", args.out.display());
    bag.reject_unknown()?;

    let corpus = make_corpus(&spec)?;
    save_corpus(&corpus, &args.out)?;
    bag.write_resolved(&args.out)?;

    let edges: f64 = corpus
        .domains
        .iter()
        .map(|d| d.a_gt.edge_count() as f64)
        .sum::<f64>()
        / corpus.m() as f64;
    println!(
        "corpus: setting {} d {} n {} M {} degree {} noise {} seed {} mean edges {:.2} -> {}",
        corpus.setting,
        corpus.d,
        corpus.n,
        corpus.m(),
        corpus.degree,
        corpus.noise_kind,
        corpus.master_seed,
        edges,
        args.out.display()
    );
    Ok(())
}

/// Resolves the shared training keys (used by train and ablate-domains).
pub fn resolve_train_config(
    bag: &mut ConfigBag,
    flags: &TrainFlags,
    threads: usize,
) -> Result<TrainConfig> {
    let defaults = TrainConfig::default();
    let adam_defaults = AdamConfig::default();
    Ok(TrainConfig {
        alpha0: bag.get("alpha0", flags.alpha0, defaults.alpha0)?,
        rho0: bag.get("rho0", flags.rho0, defaults.rho0)?,
        c: bag.get("c", flags.progress_rate, defaults.c)?,
        eps: bag.get("eps", flags.eps, defaults.eps)?,
        rho_factor: bag.get("rho_factor", flags.rho_factor, defaults.rho_factor)?,
        rho_cap: bag.get("rho_cap", flags.rho_cap, defaults.rho_cap)?,
        max_outer: bag.get("max_outer", flags.max_outer, defaults.max_outer)?,
        batch_size: bag.get("batch_size", flags.batch_size, defaults.batch_size)?,
        epochs_first: bag.get("epochs_first", flags.epochs_first, defaults.epochs_first)?,
        epochs_rest: bag.get("epochs_rest", flags.epochs_rest, defaults.epochs_rest)?,
        lr_first: bag.get("lr_first", flags.lr_first, defaults.lr_first)?,
        lr_rest: bag.get("lr_rest", flags.lr_rest, defaults.lr_rest)?,
        lr_decay: bag.get("lr_decay", flags.lr_decay, defaults.lr_decay)?,
        lr_decay_every: bag.get("lr_decay_every", flags.lr_decay_every, defaults.lr_decay_every)?,
        adam: AdamConfig {
            beta1: bag.get("beta1", None, adam_defaults.beta1)?,
            beta2: bag.get("beta2", None, adam_defaults.beta2)?,
            eps: bag.get("adam_eps", None, adam_defaults.eps)?,
        },
        seed: bag.get("seed", flags.seed, defaults.seed)?,
        k: bag.get_opt("k", flags.k)?,
        layers: bag.get_opt("layers", flags.layers)?,
        omega: bag.get("omega", flags.omega, defaults.omega)?,
        threads,
    })
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut bag = ConfigBag::load(args.config.as_deref())?;
    let threads = args.common.resolve_threads(&mut bag)?;
    let cfg = resolve_train_config(&mut bag, &args.train, threads)?;
    let log_every = bag.get("log_every", args.log_every, 100usize)?;
    let resume: Option<String> = bag.get_opt("resume", args.resume.clone())?;
    bag.record("corpus", args.corpus.display());
    bag.record("out", args.out.display());
    bag.reject_unknown()?;

    let corpus = load_corpus(&args.corpus)?;
    let state = match &resume {
        Some(dir) => {
            let state = TrainState::load(Path::new(dir))?;
            println!(
                "resuming from {} at outer iteration {}",
                dir, state.outer_iter
            );
            state
        }
        None => TrainState::init(cfg.model_dims(&corpus), &cfg)?,
    };

    bag.write_resolved(&args.out)?;
    let mut logger = RunLogger::create(args.out.clone(), log_every)?;
    let outcome = train_from(&corpus, &cfg, state, &mut logger)?;
    logger.finish()?;
    outcome.state.save(&args.out)?;

    let last = outcome.state.history.last();
    let summary = serde_summary(&outcome, last);
    std::fs::write(args.out.join("train_summary.json"), summary)?;
    println!(
        "training {}: outer iterations {}, final mean_h {:.3e} -> {}",
        if outcome.converged {
            "converged"
        } else {
            "did NOT converge"
        },
        outcome.state.outer_iter,
        last.map(|r| r.mean_h).unwrap_or(f64::NAN),
        args.out.join("theta.ckpt").display()
    );
    Ok(())
}

fn serde_summary(
    outcome: &adag_core::trainer::TrainOutcome,
    last: Option<&adag_core::trainer::OuterRecord>,
) -> String {
    format!(
        "{{\n  \"converged\": {},\n  \"outer_iterations\": {},\n  \"final_mean_h\": {},\n  \"final_mean_recon\": {},\n  \"alpha\": {},\n  \"rho\": {}\n}}\n",
        outcome.converged,
        outcome.state.outer_iter,
        last.map(|r| r.mean_h).unwrap_or(f64::NAN),
        last.map(|r| r.mean_recon).unwrap_or(f64::NAN),
        outcome.state.alpha,
        outcome.state.rho
    )
}

pub fn cmd_infer(args: InferArgs) -> Result<()> {
    let mut bag = ConfigBag::load(args.config.as_deref())?;
    let threads = args.common.resolve_threads(&mut bag)?;
    bag.record("corpus", args.corpus.display());
    bag.record("ckpt", args.ckpt.display());
    bag.record("out", args.out.display());
    bag.reject_unknown()?;

    let corpus = load_corpus(&args.corpus)?;
    let params = AttentionParams::load(&args.ckpt)?;
    if params.dims.d != corpus.d || params.dims.n != corpus.n {
        bail!(
            "checkpoint dims {}x{} do not match corpus {}x{}",
            params.dims.d,
            params.dims.n,
            corpus.d,
            corpus.n
        );
    }
    std::fs::create_dir_all(&args.out)?;
    bag.write_resolved(&args.out)?;

    let estimates = parallel_map(corpus.m(), threads, |idx| {
        infer(&corpus.domains[idx].x, &params)
    });
    for (idx, estimate) in estimates.into_iter().enumerate() {
        write_mat(&args.out.join(format!("a_hat_{idx}.mat")), &estimate?)?;
    }
    println!(
        "inferred {} adjacency estimates -> {}",
        corpus.m(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let mut bag = ConfigBag::load(args.config.as_deref())?;
    let threads = args.common.resolve_threads(&mut bag)?;
    let method: String = bag.get("method", args.method, "adag".into())?;
    let opts = EvalOptions {
        omega: bag.get("omega", args.omega, 0.3)?,
        augment_to: bag.get_opt("augment_to", args.augment_to)?,
        augment_seed: bag.get("augment_seed", args.augment_seed, 0)?,
        threads,
    };
    let ckpt: Option<String> = bag.get_opt("ckpt", args.ckpt.clone())?;
    let st_defaults = SingleTaskConfig::default();
    let single_task = SingleTaskConfig {
        lambda1: bag.get("lambda1", args.lambda1, st_defaults.lambda1)?,
        lr: bag.get("notears_lr", args.notears_lr, st_defaults.lr)?,
        steps: bag.get("notears_steps", args.notears_steps, st_defaults.steps)?,
        max_outer: bag.get("notears_max_outer", args.notears_max_outer, st_defaults.max_outer)?,
        omega: opts.omega,
        ..st_defaults
    };
    bag.record("corpus", args.corpus.display());
    bag.record("out", args.out.display());
    bag.reject_unknown()?;

    let corpus = load_corpus(&args.corpus)?;
    let params;
    let method = match method.as_str() {
        "adag" => {
            let Some(ckpt) = &ckpt else {
                bail!("--ckpt is required for method adag");
            };
            params = AttentionParams::load(Path::new(ckpt))?;
            EvalMethod::Adag(&params)
        }
        "notears" => EvalMethod::Notears(&single_task),
        other => bail!("unknown method '{other}' (expected adag or notears)"),
    };

    std::fs::create_dir_all(&args.out)?;
    bag.write_resolved(&args.out)?;
    let (record, rows) = evaluate_suite(&corpus, &method, &opts)?;
    write_metrics_csv(&args.out.join("metrics.csv"), method.name(), &rows)?;
    write_metrics_summary(
        &args.out.join("metrics_summary.json"),
        method.name(),
        &record,
        &rows,
        &opts,
    )?;
    println!(
        "{} over {} domains: shd {:.4} rel_err {:.4} edges {:.3} runtime {:.2e}s -> {}",
        method.name(),
        rows.len(),
        record.shd,
        record.rel_err,
        record.n_edges,
        record.runtime_s,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_spectra(args: SpectraArgs) -> Result<()> {
    let mut bag = ConfigBag::load(args.config.as_deref())?;
    let top_m = bag.get("top", args.top, 5usize)?;
    bag.record("inferred", args.inferred.display());
    bag.record("out", args.out.display());
    bag.reject_unknown()?;

    let mut estimates = Vec::new();
    for idx in 0.. {
        let path = args.inferred.join(format!("a_hat_{idx}.mat"));
        if !path.exists() {
            break;
        }
        estimates.push(read_mat(&path)?);
    }
    if estimates.len() < 2 {
        bail!(
            "need at least 2 inferred matrices (a_hat_<idx>.mat) in {}, found {}",
            args.inferred.display(),
            estimates.len()
        );
    }
    let report = spectra(&estimates, top_m)?;
    std::fs::create_dir_all(&args.out)?;
    bag.write_resolved(&args.out)?;
    write_spectra_csv(&args.out.join("spectra.csv"), &report)?;
    let shown = report.eigenvalues.iter().take(6).collect::<Vec<_>>();
    println!(
        "spectra over {} estimates: leading eigenvalues {:?} -> {}",
        estimates.len(),
        shown,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_ablate_domains(args: AblateArgs) -> Result<()> {
    let mut bag = ConfigBag::load(args.config.as_deref())?;
    let threads = args.common.resolve_threads(&mut bag)?;
    let cfg = resolve_train_config(&mut bag, &args.train, threads)?;
    let m_list_text: String = bag.get("m_list", args.m_list, "500,2000".into())?;
    bag.record("corpus", args.corpus.display());
    bag.record("test_corpus", args.test_corpus.display());
    bag.record("out", args.out.display());
    bag.reject_unknown()?;

    let m_values: Vec<usize> = m_list_text
        .split(',')
        .map(|tok| tok.trim().parse::<usize>().context("parsing m list"))
        .collect::<Result<_>>()?;
    if m_values.is_empty() {
        bail!("empty M list");
    }

    let train_corpus = load_corpus(&args.corpus)?;
    let test_corpus = load_corpus(&args.test_corpus)?;
    std::fs::create_dir_all(&args.out)?;
    bag.write_resolved(&args.out)?;

    let mut rows: Vec<AblationRow> = Vec::new();
    for &m in &m_values {
        println!("ablation: training on the first {m} domains");
        let sub = train_corpus.prefix(m)?;
        let outcome = adag_core::trainer::train(&sub, &cfg)?;
        let row = ablation_row(m, &test_corpus, &outcome.state.params, threads)?;
        println!(
            "ablation M={m}: test recon {:.5} rel_err {:.4} (converged: {})",
            row.test_recon, row.test_rel_err, outcome.converged
        );
        outcome.state.save(&args.out.join(format!("model_m{m}")))?;
        rows.push(row);
    }
    write_ablation_csv(&args.out.join("ablation.csv"), &rows)?;
    println!("ablation table -> {}", args.out.join("ablation.csv").display());
    Ok(())
}

/// Shared by commands that honor `--threads` / `ADAG_THREADS`.
pub fn resolve_threads_value(
    bag: &mut ConfigBag,
    cli: Option<usize>,
) -> Result<usize> {
    let env = match std::env::var("ADAG_THREADS") {
        Ok(text) => Some(
            text.parse::<usize>()
                .context("parsing ADAG_THREADS environment variable")?,
        ),
        Err(_) => None,
    };
    bag.get("threads", cli.or(env), 1)
}

