//! Reverse-mode differentiation tape over [`Matrix`] values.
//!
//! Operations are recorded in topological order as they execute; `backward`
//! replays them in reverse, accumulating adjoints by the chain rule. The
//! primitive set (matmul, transpose, add, scale, hadamard) is exactly what
//! the attention forward pass needs. Scalar losses and the acyclicity
//! penalty are differentiated in closed form outside the tape and enter as
//! an external gradient seed on the node that holds the network output.
//!
//! A tape is single-writer: one forward/backward pass owns it exclusively.
//! Independent tapes may run in parallel.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Handle to a recorded node. Only valid for the tape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    /// Input or parameter; no upstream dependencies.
    Leaf,
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Hadamard(NodeId, NodeId),
    /// Rescale to unit RMS entry; identity on all-zero input.
    RmsNorm(NodeId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::NodeNotFound(id.0, self.nodes.len()))
        }
    }

    /// Records an input or parameter matrix.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        Ok(self.push(Op::Matmul(a, b), value))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let value = self.nodes[a.0].value.transpose();
        Ok(self.push(Op::Transpose(a), value))
    }

    /// Elementwise sum; also serves as the residual connection.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let value = self.nodes[a.0].value.add(&self.nodes[b.0].value)?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        self.check(a)?;
        let value = self.nodes[a.0].value.scale(s);
        Ok(self.push(Op::Scale(a, s), value))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let value = self.nodes[a.0].value.hadamard(&self.nodes[b.0].value)?;
        Ok(self.push(Op::Hadamard(a, b), value))
    }

    /// Rescales a matrix to unit RMS entry (`x·√N/‖x‖_F`); an all-zero
    /// matrix passes through unchanged. Keeps the residual attention stack
    /// scale-stable regardless of depth.
    pub fn rms_norm(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let value = rms_normalized(&self.nodes[a.0].value);
        Ok(self.push(Op::RmsNorm(a), value))
    }

    /// Reverse sweep from `output`, seeded with an externally computed
    /// upstream gradient of matching shape. Returns adjoints for every node
    /// reachable from the seed.
    pub fn backward(&self, output: NodeId, seed: &Matrix) -> Result<Gradients> {
        self.check(output)?;
        let out_shape = self.nodes[output.0].value.shape();
        if seed.shape() != out_shape {
            return Err(Error::dim(
                "backward seed",
                format!("{}x{}", seed.rows(), seed.cols()),
                format!("{}x{}", out_shape.0, out_shape.1),
            ));
        }
        let mut adjoints: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[output.0] = Some(seed.clone());

        for id in (0..=output.0).rev() {
            if adjoints[id].is_none() {
                continue;
            }
            // Inputs always precede `id`, so the slice split lets us read the
            // upstream adjoint while accumulating into earlier slots.
            let (earlier, rest) = adjoints.split_at_mut(id);
            let up = rest[0].as_ref().unwrap();
            match self.nodes[id].op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let ga = up.matmul_nt(&self.nodes[b.0].value)?;
                    accumulate(&mut earlier[a.0], ga)?;
                    let gb = self.nodes[a.0].value.matmul_tn(up)?;
                    accumulate(&mut earlier[b.0], gb)?;
                }
                Op::Transpose(a) => {
                    accumulate(&mut earlier[a.0], up.transpose())?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut earlier[a.0], up.clone())?;
                    accumulate(&mut earlier[b.0], up.clone())?;
                }
                Op::Scale(a, s) => {
                    accumulate(&mut earlier[a.0], up.scale(s))?;
                }
                Op::Hadamard(a, b) => {
                    let ga = up.hadamard(&self.nodes[b.0].value)?;
                    accumulate(&mut earlier[a.0], ga)?;
                    let gb = up.hadamard(&self.nodes[a.0].value)?;
                    accumulate(&mut earlier[b.0], gb)?;
                }
                Op::RmsNorm(a) => {
                    // y = s·x with s = √N/‖x‖: ∂L/∂x = s·(g − ⟨x,g⟩·x/‖x‖²).
                    let x = &self.nodes[a.0].value;
                    let norm = x.frobenius_norm();
                    if norm == 0.0 {
                        accumulate(&mut earlier[a.0], up.clone())?;
                    } else {
                        let scale = (x.data().len() as f64).sqrt() / norm;
                        let dot: f64 = x.data().iter().zip(up.data()).map(|(a, b)| a * b).sum();
                        let mut grad = up.clone();
                        grad.add_scaled_assign(-dot / (norm * norm), x)?;
                        accumulate(&mut earlier[a.0], grad.scale(scale))?;
                    }
                }
            }
        }
        Ok(Gradients { adjoints })
    }
}

/// `x·√N/‖x‖_F`; all-zero input is returned unchanged.
pub fn rms_normalized(x: &Matrix) -> Matrix {
    let norm = x.frobenius_norm();
    if norm == 0.0 {
        x.clone()
    } else {
        x.scale((x.data().len() as f64).sqrt() / norm)
    }
}

fn accumulate(slot: &mut Option<Matrix>, grad: Matrix) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&grad),
        None => {
            *slot = Some(grad);
            Ok(())
        }
    }
}

/// Adjoints produced by [`Tape::backward`], indexed by node id.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Adjoint of a node, if it was reachable from the seeded output.
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.adjoints.get(id.0).and_then(|a| a.as_ref())
    }

    /// Adjoint of a node, or a zero matrix of the node's shape.
    pub fn get_or_zeros(&self, id: NodeId, shape: (usize, usize)) -> Matrix {
        match self.get(id) {
            Some(m) => m.clone(),
            None => Matrix::zeros(shape.0, shape.1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn matmul_backward_identity_seed() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::identity(3));
        let b = tape.leaf(Matrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64));
        let c = tape.matmul(a, b).unwrap();
        let grads = tape.backward(c, &Matrix::identity(3)).unwrap();
        // dC/dB with A = I and seed I is the identity.
        assert_eq!(grads.get(b).unwrap(), &Matrix::identity(3));
    }

    #[test]
    fn elementwise_square_trace_gradient() {
        // f = sum of (a .* a) entries, seeded with an all-ones matrix on the
        // hadamard node: gradient of each entry is 2a.
        let mut tape = Tape::new();
        let m = Matrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64 * 0.25);
        let a = tape.leaf(m.clone());
        let sq = tape.hadamard(a, a).unwrap();
        let ones = Matrix::from_fn(3, 3, |_, _| 1.0);
        let grads = tape.backward(sq, &ones).unwrap();
        let got = grads.get(a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((got[(i, j)] - 2.0 * m[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rms_norm_value_and_zero_passthrough() {
        let mut tape = Tape::new();
        let x = Matrix::from_vec(2, 2, vec![3.0, 0.0, 0.0, 4.0]).unwrap();
        let a = tape.leaf(x);
        let y = tape.rms_norm(a).unwrap();
        // ‖x‖ = 5, √N = 2: entries scale by 0.4.
        assert!((tape.value(y)[(0, 0)] - 1.2).abs() < 1e-15);
        assert!((tape.value(y)[(1, 1)] - 1.6).abs() < 1e-15);
        let rms = tape.value(y).frobenius_norm() / 2.0;
        assert!((rms - 1.0).abs() < 1e-15);

        let z = tape.leaf(Matrix::zeros(2, 3));
        let zn = tape.rms_norm(z).unwrap();
        assert_eq!(tape.value(zn), &Matrix::zeros(2, 3));
        let grads = tape.backward(zn, &Matrix::from_fn(2, 3, |_, _| 1.0)).unwrap();
        assert_eq!(grads.get(z).unwrap(), &Matrix::from_fn(2, 3, |_, _| 1.0));
    }

    #[test]
    fn backward_rejects_unknown_node_and_bad_seed() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::zeros(2, 2));
        assert!(matches!(
            tape.backward(NodeId(5), &Matrix::zeros(2, 2)),
            Err(Error::NodeNotFound(5, 1))
        ));
        assert!(tape.backward(a, &Matrix::zeros(3, 2)).is_err());
    }

    /// Central finite differences on a scalar function of the leaf entries.
    fn finite_diff(
        base: &[Matrix],
        eval: impl Fn(&[Matrix]) -> f64,
        which: usize,
        i: usize,
        j: usize,
    ) -> f64 {
        let step = 1e-5;
        let mut plus = base.to_vec();
        plus[which][(i, j)] += step;
        let mut minus = base.to_vec();
        minus[which][(i, j)] -= step;
        (eval(&plus) - eval(&minus)) / (2.0 * step)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn primitive_chain_matches_finite_differences() {
        // f(a, b, c) = sum of entries of rmsnorm(scale(a*b, 1.7) + (a*b) .* c)^T,
        // exercising every primitive in one graph.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let leaves = vec![
                random_matrix(&mut rng, 3, 4),
                random_matrix(&mut rng, 4, 3),
                random_matrix(&mut rng, 3, 3),
            ];
            let eval = |ms: &[Matrix]| {
                let ab = ms[0].matmul(&ms[1]).unwrap();
                let scaled = ab.scale(1.7);
                let had = ab.hadamard(&ms[2]).unwrap();
                let summed = scaled.add(&had).unwrap();
                rms_normalized(&summed).transpose().data().iter().sum()
            };

            let mut tape = Tape::new();
            let a = tape.leaf(leaves[0].clone());
            let b = tape.leaf(leaves[1].clone());
            let c = tape.leaf(leaves[2].clone());
            let ab = tape.matmul(a, b).unwrap();
            let scaled = tape.scale(ab, 1.7).unwrap();
            let had = tape.hadamard(ab, c).unwrap();
            let sum = tape.add(scaled, had).unwrap();
            let normed = tape.rms_norm(sum).unwrap();
            let out = tape.transpose(normed).unwrap();
            let grads = tape.backward(out, &Matrix::from_fn(3, 3, |_, _| 1.0)).unwrap();

            for (which, id) in [(0, a), (1, b), (2, c)] {
                let analytic = grads.get(id).unwrap();
                for i in 0..leaves[which].rows() {
                    for j in 0..leaves[which].cols() {
                        let fd = finite_diff(&leaves, eval, which, i, j);
                        assert!(
                            rel_err(analytic[(i, j)], fd) < 1e-5,
                            "leaf {which} entry ({i},{j}): analytic {} vs fd {fd}",
                            analytic[(i, j)]
                        );
                    }
                }
            }
        }
    }
}
