//! Synthetic linear-SEM data: ground-truth DAG sampling, observation
//! simulation, and multi-domain corpus assembly.
//!
//! Corpora come in two settings. Heterogeneous: every domain shares one DAG
//! structure and resamples edge weights. Order-consistent: every domain
//! resamples its structure among the pairs allowed by a shared topological
//! ordering. Generation is a pure function of the parameters and a master
//! seed; each domain derives its own stream via [`mix64`], so corpora are
//! bit-reproducible and domains can be generated in any order.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gumbel, StandardNormal};

use crate::error::{Error, Result};
use crate::expm::acyclicity;
use crate::matrix::Matrix;
use crate::rng::{mix64, seeded_rng};

/// Acyclicity tolerance used when validating generated structures.
pub const ACYCLICITY_TOL: f64 = 1e-10;

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Seed stream reserved for the corpus-level structure draw, outside the
/// per-domain index range.
const STRUCTURE_STREAM: u64 = u64::MAX;

/// Exogenous noise family for the SEM, unit scale and centered at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Standard normal, identical variance on every coordinate.
    GaussianEqualVariance,
    /// Exponential with rate 1, shifted by its mean 1.
    Exponential,
    /// Gumbel with location 0 and scale 1, shifted by its mean γ.
    Gumbel,
}

impl NoiseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::GaussianEqualVariance => "gaussian-equal-variance",
            NoiseKind::Exponential => "exponential",
            NoiseKind::Gumbel => "gumbel",
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            NoiseKind::GaussianEqualVariance => StandardNormal.sample(rng),
            NoiseKind::Exponential => Exp::new(1.0).unwrap().sample(rng) - 1.0,
            NoiseKind::Gumbel => Gumbel::new(0.0, 1.0).unwrap().sample(rng) - EULER_MASCHERONI,
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<NoiseKind> {
        match s {
            "gaussian-equal-variance" | "gaussian" => Ok(NoiseKind::GaussianEqualVariance),
            "exponential" => Ok(NoiseKind::Exponential),
            "gumbel" => Ok(NoiseKind::Gumbel),
            other => Err(Error::InvalidParameter(format!(
                "unknown noise kind '{other}' (expected gaussian-equal-variance, exponential or gumbel)"
            ))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A topological ordering, stored as positions: `perm[i]` is the position of
/// variable `i` in the causal ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologicalOrder {
    perm: Vec<usize>,
}

impl TopologicalOrder {
    pub fn new(perm: Vec<usize>) -> Result<TopologicalOrder> {
        let d = perm.len();
        let mut seen = vec![false; d];
        for &p in &perm {
            if p >= d || seen[p] {
                return Err(Error::InvalidParameter(format!(
                    "order {perm:?} is not a permutation of 0..{d}"
                )));
            }
            seen[p] = true;
        }
        Ok(TopologicalOrder { perm })
    }

    pub fn identity(d: usize) -> TopologicalOrder {
        TopologicalOrder {
            perm: (0..d).collect(),
        }
    }

    pub fn random(d: usize, rng: &mut impl Rng) -> TopologicalOrder {
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(rng);
        TopologicalOrder { perm }
    }

    pub fn d(&self) -> usize {
        self.perm.len()
    }

    /// Position of variable `i` in the ordering.
    pub fn position(&self, i: usize) -> usize {
        self.perm[i]
    }

    pub fn positions(&self) -> &[usize] {
        &self.perm
    }
}

/// Connectivity matrix of an ordering: `C[i][j] = 1` iff `π(i) < π(j)`, the
/// maximal support compatible with the order.
pub fn connectivity_matrix(order: &TopologicalOrder) -> Matrix {
    let d = order.d();
    Matrix::from_fn(d, d, |i, j| {
        if order.position(i) < order.position(j) {
            1.0
        } else {
            0.0
        }
    })
}

/// Weighted adjacency matrix of a DAG: entry (i, j) is the coefficient of
/// the edge X_i → X_j. The support is validated to be acyclic.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAdjacency {
    weights: Matrix,
}

impl WeightedAdjacency {
    pub fn new(weights: Matrix) -> Result<WeightedAdjacency> {
        if !weights.is_square() {
            return Err(Error::dim(
                "weighted adjacency",
                format!("{}x{}", weights.rows(), weights.cols()),
                "square",
            ));
        }
        weights.validate_finite("weighted adjacency")?;
        for i in 0..weights.rows() {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "weighted adjacency has nonzero diagonal at ({i},{i})"
                )));
            }
        }
        let h = acyclicity(&weights)?.value;
        if h >= ACYCLICITY_TOL {
            return Err(Error::CyclicSupport(h));
        }
        Ok(WeightedAdjacency { weights })
    }

    pub fn d(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Binary support: 1 where the weight is nonzero.
    pub fn support(&self) -> Matrix {
        self.weights.map(|w| if w != 0.0 { 1.0 } else { 0.0 })
    }

    pub fn edge_count(&self) -> usize {
        self.weights.data().iter().filter(|&&w| w != 0.0).count()
    }
}

/// One domain: a d×n observation block with its ground truth.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    pub x: Matrix,
    pub a_gt: WeightedAdjacency,
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusSetting {
    Heterogeneous,
    OrderConsistent,
}

impl CorpusSetting {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorpusSetting::Heterogeneous => "heterogeneous",
            CorpusSetting::OrderConsistent => "order-consistent",
        }
    }
}

impl std::str::FromStr for CorpusSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<CorpusSetting> {
        match s {
            "heterogeneous" => Ok(CorpusSetting::Heterogeneous),
            "order-consistent" => Ok(CorpusSetting::OrderConsistent),
            other => Err(Error::InvalidParameter(format!(
                "unknown corpus setting '{other}' (expected heterogeneous or order-consistent)"
            ))),
        }
    }
}

impl std::fmt::Display for CorpusSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of a corpus draw.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub setting: CorpusSetting,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub degree: usize,
    pub noise_kind: NoiseKind,
    pub master_seed: u64,
    /// Optional user-supplied ordering for the order-consistent setting;
    /// sampled from the master seed when absent.
    pub fixed_order: Option<TopologicalOrder>,
}

/// An ordered collection of domains sharing one setting.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub setting: CorpusSetting,
    pub d: usize,
    pub n: usize,
    pub degree: usize,
    pub noise_kind: NoiseKind,
    pub master_seed: u64,
    /// Shared binary support (heterogeneous setting).
    pub shared_structure: Option<Matrix>,
    /// Shared topological ordering (order-consistent setting).
    pub shared_order: Option<TopologicalOrder>,
    pub domains: Vec<DomainDataset>,
}

impl Corpus {
    pub fn m(&self) -> usize {
        self.domains.len()
    }

    /// A corpus over the first `m` domains, for nested-subset ablations.
    pub fn prefix(&self, m: usize) -> Result<Corpus> {
        if m == 0 || m > self.domains.len() {
            return Err(Error::InvalidParameter(format!(
                "prefix size {m} out of range 1..={}",
                self.domains.len()
            )));
        }
        Ok(Corpus {
            domains: self.domains[..m].to_vec(),
            shared_structure: self.shared_structure.clone(),
            shared_order: self.shared_order.clone(),
            ..*self
        })
    }

    /// Checks the setting invariants over all domains.
    pub fn validate(&self) -> Result<()> {
        for (idx, dom) in self.domains.iter().enumerate() {
            if dom.x.shape() != (self.d, self.n) {
                return Err(Error::dim(
                    "corpus domain",
                    format!("{}x{}", dom.x.rows(), dom.x.cols()),
                    format!("{}x{}", self.d, self.n),
                ));
            }
            dom.x.validate_finite("domain observations")?;
            match self.setting {
                CorpusSetting::Heterogeneous => {
                    let shared = self.shared_structure.as_ref().ok_or_else(|| {
                        Error::InvalidParameter(
                            "heterogeneous corpus missing shared_structure".into(),
                        )
                    })?;
                    if dom.a_gt.support() != *shared {
                        return Err(Error::InvalidParameter(format!(
                            "domain {idx} support differs from the shared structure"
                        )));
                    }
                }
                CorpusSetting::OrderConsistent => {
                    let order = self.shared_order.as_ref().ok_or_else(|| {
                        Error::InvalidParameter(
                            "order-consistent corpus missing shared_order".into(),
                        )
                    })?;
                    let c = connectivity_matrix(order);
                    for i in 0..self.d {
                        for j in 0..self.d {
                            if dom.a_gt.weights()[(i, j)] != 0.0 && c[(i, j)] == 0.0 {
                                return Err(Error::InvalidParameter(format!(
                                    "domain {idx} has edge ({i},{j}) outside the shared order"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn er_edge_probability(d: usize, degree: usize) -> f64 {
    (2.0 * degree as f64 / (d - 1) as f64).min(1.0)
}

fn check_er_params(d: usize, degree: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 variables, got d={d}"
        )));
    }
    if degree < 1 {
        return Err(Error::InvalidParameter(format!(
            "degree must be at least 1, got {degree}"
        )));
    }
    if degree > d - 1 {
        return Err(Error::InvalidParameter(format!(
            "degree {degree} infeasible for d={d} (must be at most d-1)"
        )));
    }
    Ok(())
}

/// Samples a support among the pairs allowed by `order`, including each with
/// the Erdős–Rényi probability `min(1, 2·degree/(d−1))` so the expected edge
/// count is `degree·d`.
fn sample_support_for_order(
    order: &TopologicalOrder,
    degree: usize,
    rng: &mut impl Rng,
) -> Matrix {
    let d = order.d();
    let p = er_edge_probability(d, degree);
    let mut support = Matrix::zeros(d, d);
    for u in 0..d {
        for v in (u + 1)..d {
            if rng.random_range(0.0..1.0) < p {
                if order.position(u) < order.position(v) {
                    support[(u, v)] = 1.0;
                } else {
                    support[(v, u)] = 1.0;
                }
            }
        }
    }
    support
}

/// Samples an Erdős–Rényi DAG: a uniform random ordering plus independent
/// order-respecting edges. The result is acyclic by construction.
pub fn sample_er_dag(
    d: usize,
    degree: usize,
    rng: &mut impl Rng,
) -> Result<(Matrix, TopologicalOrder)> {
    check_er_params(d, degree)?;
    let order = TopologicalOrder::random(d, rng);
    let support = sample_support_for_order(&order, degree, rng);
    Ok((support, order))
}

/// Assigns a weight to every support entry: fair-coin sign, magnitude
/// uniform in [0.5, 2].
pub fn sample_weights(support: &Matrix, rng: &mut impl Rng) -> Result<WeightedAdjacency> {
    if !support.is_square() {
        return Err(Error::dim(
            "sample_weights",
            format!("{}x{}", support.rows(), support.cols()),
            "square",
        ));
    }
    let h = acyclicity(support)?.value;
    if h >= ACYCLICITY_TOL {
        return Err(Error::CyclicSupport(h));
    }
    let d = support.rows();
    let mut weights = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if support[(i, j)] != 0.0 {
                let magnitude = rng.random_range(0.5..=2.0);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                weights[(i, j)] = sign * magnitude;
            }
        }
    }
    WeightedAdjacency::new(weights)
}

/// Topological order of an acyclic support (Kahn's algorithm, smallest
/// index first, so the result is deterministic).
fn topological_sort(support: &Matrix) -> Vec<usize> {
    let d = support.rows();
    let mut indegree = vec![0usize; d];
    for i in 0..d {
        for j in 0..d {
            if support[(i, j)] != 0.0 {
                indegree[j] += 1;
            }
        }
    }
    let mut order = Vec::with_capacity(d);
    let mut placed = vec![false; d];
    while order.len() < d {
        let v = (0..d)
            .find(|&v| !placed[v] && indegree[v] == 0)
            .expect("support is acyclic");
        placed[v] = true;
        order.push(v);
        for j in 0..d {
            if support[(v, j)] != 0.0 {
                indegree[j] -= 1;
            }
        }
    }
    order
}

/// Simulates `n` samples of the linear SEM `x = Aᵀx + e`.
///
/// Noise is drawn per sample in variable-index order; values are then filled
/// in topological order, so each column satisfies the SEM recursion exactly.
pub fn simulate_sem(
    a: &WeightedAdjacency,
    n: usize,
    noise_kind: NoiseKind,
    rng: &mut impl Rng,
) -> Matrix {
    let d = a.d();
    let order = topological_sort(&a.support());
    let weights = a.weights();
    let mut x = Matrix::zeros(d, n);
    let mut noise = vec![0.0; d];
    for j in 0..n {
        for slot in noise.iter_mut() {
            *slot = noise_kind.sample(rng);
        }
        for &v in &order {
            let mut value = noise[v];
            for i in 0..d {
                let w = weights[(i, v)];
                if w != 0.0 {
                    value += w * x[(i, j)];
                }
            }
            x[(v, j)] = value;
        }
    }
    x
}

/// Draws a full corpus. Domain `η` uses the stream `mix64(master_seed, η)`;
/// the shared structure or ordering uses a reserved stream.
pub fn make_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    check_er_params(spec.d, spec.degree)?;
    if spec.n == 0 || spec.m == 0 {
        return Err(Error::InvalidParameter(format!(
            "corpus needs positive n and M, got n={} M={}",
            spec.n, spec.m
        )));
    }
    if let Some(order) = &spec.fixed_order {
        if spec.setting != CorpusSetting::OrderConsistent {
            return Err(Error::InvalidParameter(
                "a fixed ordering only applies to the order-consistent setting".into(),
            ));
        }
        if order.d() != spec.d {
            return Err(Error::InvalidParameter(format!(
                "fixed ordering has {} variables, corpus has {}",
                order.d(),
                spec.d
            )));
        }
    }

    let mut structure_rng = seeded_rng(mix64(spec.master_seed, STRUCTURE_STREAM));
    let (shared_structure, shared_order) = match spec.setting {
        CorpusSetting::Heterogeneous => {
            let (support, _) = sample_er_dag(spec.d, spec.degree, &mut structure_rng)?;
            (Some(support), None)
        }
        CorpusSetting::OrderConsistent => {
            let order = match &spec.fixed_order {
                Some(order) => order.clone(),
                None => TopologicalOrder::random(spec.d, &mut structure_rng),
            };
            (None, Some(order))
        }
    };

    let mut domains = Vec::with_capacity(spec.m);
    for eta in 0..spec.m {
        let seed = mix64(spec.master_seed, eta as u64);
        let mut rng = seeded_rng(seed);
        let a_gt = match spec.setting {
            CorpusSetting::Heterogeneous => {
                sample_weights(shared_structure.as_ref().unwrap(), &mut rng)?
            }
            CorpusSetting::OrderConsistent => {
                let support = sample_support_for_order(
                    shared_order.as_ref().unwrap(),
                    spec.degree,
                    &mut rng,
                );
                sample_weights(&support, &mut rng)?
            }
        };
        let x = simulate_sem(&a_gt, spec.n, spec.noise_kind, &mut rng);
        domains.push(DomainDataset {
            x,
            a_gt,
            noise_kind: spec.noise_kind,
            seed,
        });
    }

    Ok(Corpus {
        setting: spec.setting,
        d: spec.d,
        n: spec.n,
        degree: spec.degree,
        noise_kind: spec.noise_kind,
        master_seed: spec.master_seed,
        shared_structure,
        shared_order,
        domains,
    })
}
