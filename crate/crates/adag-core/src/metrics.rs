//! Graph-level evaluation metrics: edge thresholding, structural Hamming
//! distance and relative weight error.

use std::collections::BTreeSet;

use crate::datagen::WeightedAdjacency;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A directed graph as a set of edges, no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGraph {
    d: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl BinaryGraph {
    pub fn new(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<BinaryGraph> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidParameter(format!(
                    "self-loop ({i},{i}) is not allowed"
                )));
            }
            if i >= d || j >= d {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i},{j}) out of range for d={d}"
                )));
            }
            set.insert((i, j));
        }
        Ok(BinaryGraph { d, edges: set })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }
}

/// Thresholds an estimate: edge (i, j) iff |a[i][j]| strictly exceeds ω.
/// The diagonal is ignored.
pub fn threshold_graph(a: &Matrix, omega: f64) -> Result<BinaryGraph> {
    if !a.is_square() {
        return Err(Error::dim(
            "threshold_graph",
            format!("{}x{}", a.rows(), a.cols()),
            "square",
        ));
    }
    if omega <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "threshold must be positive, got {omega}"
        )));
    }
    let d = a.rows();
    let mut edges = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if i != j && a[(i, j)].abs() > omega {
                edges.push((i, j));
            }
        }
    }
    BinaryGraph::new(d, edges)
}

/// The support of a ground-truth weighted adjacency (no thresholding:
/// generated weights have magnitude at least 0.5).
pub fn support_graph(a: &WeightedAdjacency) -> BinaryGraph {
    let d = a.d();
    let mut edges = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if a.weights()[(i, j)] != 0.0 {
                edges.push((i, j));
            }
        }
    }
    BinaryGraph::new(d, edges).expect("weighted adjacency has a zero diagonal")
}

/// Structural Hamming distance: extra, missing and reversed edges counted
/// per unordered pair. A reversal costs 1; a pair where one graph has both
/// directions and the other none costs 2; both-vs-one costs 1.
pub fn shd(g1: &BinaryGraph, g2: &BinaryGraph) -> Result<usize> {
    if g1.d() != g2.d() {
        return Err(Error::dim(
            "shd",
            format!("d={}", g1.d()),
            format!("d={}", g2.d()),
        ));
    }
    let d = g1.d();
    let mut total = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            let c1 = g1.has_edge(i, j) as u8 + g1.has_edge(j, i) as u8;
            let c2 = g2.has_edge(i, j) as u8 + g2.has_edge(j, i) as u8;
            total += match (c1, c2) {
                (0, 0) | (2, 2) => 0,
                (2, 0) | (0, 2) => 2,
                (1, 1) => {
                    if g1.has_edge(i, j) == g2.has_edge(i, j) {
                        0
                    } else {
                        1
                    }
                }
                // one direction vs none, or both vs one
                _ => 1,
            };
        }
    }
    Ok(total)
}

/// Relative Frobenius error `‖Â − A‖_F / ‖A‖_F`. `None` when the ground
/// truth has zero norm (the ratio is undefined, not an error).
pub fn relative_error(a_hat: &Matrix, a_gt: &Matrix) -> Result<Option<f64>> {
    if a_hat.shape() != a_gt.shape() {
        return Err(Error::dim(
            "relative_error",
            format!("{}x{}", a_hat.rows(), a_hat.cols()),
            format!("{}x{}", a_gt.rows(), a_gt.cols()),
        ));
    }
    let denom = a_gt.frobenius_norm();
    if denom == 0.0 {
        return Ok(None);
    }
    Ok(Some(a_hat.sub(a_gt)?.frobenius_norm() / denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    /// Brute-force pair classification: enumerate the four direction booleans
    /// explicitly, spelled out case by case.
    fn shd_oracle(g1: &BinaryGraph, g2: &BinaryGraph) -> usize {
        let d = g1.d();
        let mut total = 0;
        for i in 0..d {
            for j in (i + 1)..d {
                let a = (g1.has_edge(i, j), g1.has_edge(j, i));
                let b = (g2.has_edge(i, j), g2.has_edge(j, i));
                total += match (a, b) {
                    ((false, false), (false, false)) => 0,
                    ((true, false), (true, false)) => 0,
                    ((false, true), (false, true)) => 0,
                    ((true, true), (true, true)) => 0,
                    ((true, false), (false, true)) => 1,
                    ((false, true), (true, false)) => 1,
                    ((true, false), (false, false)) => 1,
                    ((false, true), (false, false)) => 1,
                    ((false, false), (true, false)) => 1,
                    ((false, false), (false, true)) => 1,
                    ((true, true), (true, false)) => 1,
                    ((true, true), (false, true)) => 1,
                    ((true, false), (true, true)) => 1,
                    ((false, true), (true, true)) => 1,
                    ((true, true), (false, false)) => 2,
                    ((false, false), (true, true)) => 2,
                };
            }
        }
        total
    }

    fn random_graph(d: usize, p: f64, rng: &mut impl Rng) -> BinaryGraph {
        let mut edges = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if i != j && rng.random_range(0.0..1.0) < p {
                    edges.push((i, j));
                }
            }
        }
        BinaryGraph::new(d, edges).unwrap()
    }

    #[test]
    fn shd_identical_graphs_is_zero() {
        let g = random_graph(5, 0.4, &mut seeded_rng(1));
        assert_eq!(shd(&g, &g).unwrap(), 0);
    }

    #[test]
    fn shd_reversal_counts_once() {
        let g1 = BinaryGraph::new(3, [(0, 1)]).unwrap();
        let g2 = BinaryGraph::new(3, [(1, 0)]).unwrap();
        assert_eq!(shd(&g1, &g2).unwrap(), 1);
    }

    #[test]
    fn shd_two_cycle_conventions() {
        let both = BinaryGraph::new(2, [(0, 1), (1, 0)]).unwrap();
        let one = BinaryGraph::new(2, [(0, 1)]).unwrap();
        let none = BinaryGraph::new(2, []).unwrap();
        assert_eq!(shd(&both, &one).unwrap(), 1);
        assert_eq!(shd(&both, &none).unwrap(), 2);
    }

    #[test]
    fn shd_matches_case_enumeration_oracle() {
        let mut rng = seeded_rng(2);
        for _ in 0..500 {
            let d = *[3usize, 5, 8].iter().nth(rng.random_range(0..3)).unwrap();
            let g1 = random_graph(d, 0.35, &mut rng);
            let g2 = random_graph(d, 0.35, &mut rng);
            assert_eq!(shd(&g1, &g2).unwrap(), shd_oracle(&g1, &g2));
        }
    }

    #[test]
    fn shd_is_symmetric_and_zero_iff_equal() {
        let mut rng = seeded_rng(3);
        for _ in 0..200 {
            let g1 = random_graph(5, 0.3, &mut rng);
            let g2 = random_graph(5, 0.3, &mut rng);
            let ab = shd(&g1, &g2).unwrap();
            assert_eq!(ab, shd(&g2, &g1).unwrap());
            assert_eq!(ab == 0, g1 == g2);
        }
    }

    #[test]
    fn shd_rejects_dimension_mismatch() {
        let g1 = BinaryGraph::new(3, []).unwrap();
        let g2 = BinaryGraph::new(4, []).unwrap();
        assert!(shd(&g1, &g2).is_err());
    }

    #[test]
    fn threshold_zero_matrix_is_empty() {
        let g = threshold_graph(&Matrix::zeros(4, 4), 0.3).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn threshold_is_strict_and_ignores_diagonal() {
        let mut a = Matrix::zeros(3, 3);
        a[(0, 1)] = 0.3; // exactly at the threshold: excluded
        a[(1, 2)] = -0.31;
        a[(2, 2)] = 5.0; // diagonal: ignored
        let g = threshold_graph(&a, 0.3).unwrap();
        assert!(!g.has_edge(0, 1));
        assert!(g.has_edge(1, 2));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn threshold_is_monotone_in_omega() {
        let mut rng = seeded_rng(4);
        for _ in 0..50 {
            let a = Matrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let loose = threshold_graph(&a, 0.2).unwrap();
            let tight = threshold_graph(&a, 0.5).unwrap();
            for edge in tight.edges() {
                assert!(loose.has_edge(edge.0, edge.1));
            }
        }
    }

    #[test]
    fn relative_error_basic_identities() {
        let mut rng = seeded_rng(5);
        let a = Matrix::from_fn(4, 4, |i, j| if i != j { rng.random_range(-1.0..1.0) } else { 0.0 });
        assert_eq!(relative_error(&a, &a).unwrap(), Some(0.0));
        let zero = Matrix::zeros(4, 4);
        assert_eq!(relative_error(&zero, &a).unwrap(), Some(1.0));
        let twice = a.scale(2.0);
        let err = relative_error(&twice, &a).unwrap().unwrap();
        assert!((err - 1.0).abs() < 1e-12);
        // Zero-norm ground truth: undefined, not a crash.
        assert_eq!(relative_error(&a, &zero).unwrap(), None);
    }

    #[test]
    fn relative_error_is_homogeneous_in_the_error() {
        let mut rng = seeded_rng(6);
        let a = Matrix::from_fn(3, 3, |i, j| if i != j { rng.random_range(-1.0..1.0) } else { 0.0 });
        let delta = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let e1 = relative_error(&a.add(&delta).unwrap(), &a).unwrap().unwrap();
        let e3 = relative_error(&a.add(&delta.scale(3.0)).unwrap(), &a)
            .unwrap()
            .unwrap();
        assert!((e3 - 3.0 * e1).abs() < 1e-12);
    }

    #[test]
    fn graph_construction_rejects_self_loops() {
        assert!(BinaryGraph::new(3, [(1, 1)]).is_err());
        assert!(BinaryGraph::new(3, [(0, 7)]).is_err());
    }
}
