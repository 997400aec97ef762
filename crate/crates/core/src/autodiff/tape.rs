//! Scalar reverse-mode tape.
//!
//! Nodes are appended in evaluation order and carry the local partials of
//! their (at most two) inputs, so the node list is topologically sorted by
//! construction and a backward pass is a single reverse sweep.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Scalar;
use crate::{Error, Result};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug)]
struct Node {
    inputs: [u32; 2],
    partials: [f64; 2],
    arity: u8,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    values: RefCell<Vec<f64>>,
    params: RefCell<Vec<NodeId>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.len())
            .field("parameters", &self.params.borrow().len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
            values: RefCell::new(Vec::with_capacity(n)),
            params: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop every node and parameter registration, keeping allocations.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.values.get_mut().clear();
        self.params.get_mut().clear();
    }

    fn push(&self, value: f64, inputs: [u32; 2], partials: [f64; 2], arity: u8) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { inputs, partials, arity });
        self.values.borrow_mut().push(value);
        Var { tape: self, id: id as u32, val: value }
    }

    /// A differentiable leaf; its adjoint is reported by [`Tape::backward`].
    pub fn parameter(&self, value: f64) -> Var<'_> {
        let v = self.push(value, [0, 0], [0.0, 0.0], 0);
        self.params.borrow_mut().push(v.id());
        v
    }

    /// Register every entry of `values` as a parameter, in order.
    pub fn parameters(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.parameter(v)).collect()
    }

    /// A leaf that is not reported as a parameter.
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push(value, [0, 0], [0.0, 0.0], 0)
    }

    pub fn parameter_ids(&self) -> Vec<NodeId> {
        self.params.borrow().clone()
    }

    pub fn value(&self, id: NodeId) -> Option<f64> {
        self.values.borrow().get(id).copied()
    }

    fn unary(&self, a: &Var<'_>, value: f64, da: f64) -> Var<'_> {
        self.push(value, [a.id, 0], [da, 0.0], 1)
    }

    fn binary(&self, a: &Var<'_>, b: &Var<'_>, value: f64, da: f64, db: f64) -> Var<'_> {
        self.push(value, [a.id, b.id], [da, db], 2)
    }

    /// Adjoints of every parameter node for `∂output/∂θ`.
    pub fn backward(&self, output: NodeId) -> Result<Vec<f64>> {
        self.backward_seeded(&[(output, 1.0)])
    }

    /// Adjoints of every parameter node for `Σ seed_k · node_k`.
    pub fn backward_seeded(&self, seeds: &[(NodeId, f64)]) -> Result<Vec<f64>> {
        let adjoint = self.adjoints(seeds)?;
        Ok(self.params.borrow().iter().map(|&p| adjoint[p]).collect())
    }

    /// Adjoints of every node for `Σ seed_k · node_k`.
    pub fn adjoints(&self, seeds: &[(NodeId, f64)]) -> Result<Vec<f64>> {
        let nodes = self.nodes.borrow();
        let mut adjoint = vec![0.0; nodes.len()];
        let mut top = 0;
        for &(id, seed) in seeds {
            if id >= nodes.len() {
                return Err(Error::Contract(format!("node {id} is not on a tape of {} nodes", nodes.len())));
            }
            adjoint[id] += seed;
            top = top.max(id + 1);
        }
        for i in (0..top).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for k in 0..node.arity as usize {
                adjoint[node.inputs[k] as usize] += a * node.partials[k];
            }
        }
        Ok(adjoint)
    }
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{} = {})", self.id, self.val)
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id as NodeId
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn check(&self, other: &Var<'t>) {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "variables from different tapes");
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.check(&rhs);
        self.tape.binary(&self, &rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.check(&rhs);
        self.tape.binary(&self, &rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.check(&rhs);
        self.tape.binary(&self, &rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        self.check(&rhs);
        let q = self.val / rhs.val;
        self.tape.binary(&self, &rhs, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.tape.unary(&self, -self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, k: f64) -> Self {
        self.tape.unary(&self, self.val + k, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, k: f64) -> Self {
        self.tape.unary(&self, self.val - k, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, k: f64) -> Self {
        self.tape.unary(&self, self.val * k, k)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, k: f64) -> Self {
        self.tape.unary(&self, self.val / k, 1.0 / k)
    }
}

impl Scalar for Var<'_> {
    fn value(&self) -> f64 {
        self.val
    }

    fn constant_like(&self, c: f64) -> Self {
        self.tape.constant(c)
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.tape.unary(&self, t, 1.0 - t * t)
    }

    fn sin(self) -> Self {
        self.tape.unary(&self, self.val.sin(), self.val.cos())
    }

    fn cos(self) -> Self {
        self.tape.unary(&self, self.val.cos(), -self.val.sin())
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.tape.unary(&self, e, e)
    }

    fn powi(self, n: i32) -> Self {
        let d = if n == 0 { 0.0 } else { f64::from(n) * self.val.powi(n - 1) };
        self.tape.unary(&self, self.val.powi(n), d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_gradient() {
        let tape = Tape::new();
        let a = tape.parameter(3.0);
        let b = tape.parameter(5.0);
        let f = a * b;
        assert_eq!(tape.backward(f.id()).unwrap(), vec![5.0, 3.0]);
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let tape = Tape::new();
        let t = tape.parameter(0.0);
        let f = Scalar::tanh(t);
        assert_eq!(tape.backward(f.id()).unwrap(), vec![1.0]);
    }

    #[test]
    fn dangling_node_is_contract_violation() {
        let tape = Tape::new();
        let _ = tape.parameter(1.0);
        assert!(matches!(tape.backward(7), Err(Error::Contract(_))));
    }

    #[test]
    fn node_ids_increase_and_constants_are_not_parameters() {
        let tape = Tape::new();
        let a = tape.parameter(2.0);
        let c = tape.constant(4.0);
        let f = a * c + 1.0;
        assert!(a.id() < c.id() && c.id() < f.id());
        assert_eq!(tape.backward(f.id()).unwrap(), vec![4.0]);
        assert_eq!(tape.value(f.id()), Some(9.0));
    }

    #[test]
    fn reused_subexpression_accumulates() {
        let tape = Tape::new();
        let x = tape.parameter(1.5);
        let y = x * x * x - x / 2.0;
        let g = tape.backward(y.id()).unwrap();
        assert!((g[0] - (3.0 * 1.5f64.powi(2) - 0.5)).abs() < 1e-15);
    }
}
