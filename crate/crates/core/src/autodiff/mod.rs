//! Define-by-run reverse-mode automatic differentiation over dense `f64`
//! tensors of rank one to three.
//!
//! A [`Tensor`] is an immutable, reference-counted node. Operations build new
//! nodes that remember their inputs only when at least one input requires a
//! gradient, so constant subgraphs are freed as soon as they go out of scope.
//! [`backward`] walks the graph from a scalar output and returns the
//! gradients of every node that requires one.
//!
//! Tensors are `!Send`: each thread builds its own graph. Parameter values are
//! plain `Vec<f64>` and are copied into fresh leaves per pass.

mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, grad_check_one_sided, GradReport};

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};

pub(crate) const MAX_RANK: usize = 3;

#[derive(Clone)]
pub struct Tensor(Rc<Node>);

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Recorded operation with the inputs its backward rule needs.
enum Op {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f64),
    AddScalar(Tensor),
    MatMul(Tensor, Tensor),
    Transpose(Tensor),
    Relu(Tensor),
    Abs(Tensor),
    TriangleWindow(Tensor),
    SoftmaxRows(Tensor),
    LogSoftmaxRows(Tensor),
    Cumsum(Tensor),
    Colsum(Tensor),
    Sum(Tensor),
    Repeat(Tensor),
    Concat(Tensor, Tensor),
    Reshape(Tensor),
    Gather(Tensor, Vec<usize>),
    StackContract(Tensor, Tensor),
    StackScale(Tensor, Tensor),
    AddBroadcast(Tensor, Tensor),
}

impl Op {
    fn inputs(&self) -> Vec<&Tensor> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) | Concat(a, b) | StackContract(a, b)
            | StackScale(a, b) | AddBroadcast(a, b) => vec![a, b],
            Scale(a, _) | AddScalar(a) | Transpose(a) | Relu(a) | Abs(a) | TriangleWindow(a)
            | SoftmaxRows(a) | LogSoftmaxRows(a) | Cumsum(a) | Colsum(a) | Sum(a) | Repeat(a)
            | Reshape(a) | Gather(a, _) => vec![a],
        }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("data", &self.0.data)
            .finish()
    }
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::Autodiff(format!("rank {} not in 1..={MAX_RANK}", shape.len())));
    }
    if shape.iter().product::<usize>() != len {
        return Err(Error::Autodiff(format!("shape {shape:?} does not hold {len} values")));
    }
    Ok(())
}

impl Tensor {
    /// Constant tensor (no gradient).
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::raw(shape.to_vec(), data, false, Op::Leaf))
    }

    /// Leaf that requires a gradient.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::raw(shape.to_vec(), data, true, Op::Leaf))
    }

    pub fn scalar(x: f64) -> Self {
        Self::raw(vec![1], vec![x], false, Op::Leaf)
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self::raw(vec![data.len()], data, false, Op::Leaf)
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, vec![0.0; shape.iter().product()])
    }

    /// Row-major matrix from nested rows.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Autodiff("ragged matrix rows".into()));
        }
        Self::new(&[rows.len(), cols], rows.concat())
    }

    fn raw(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Self {
        Tensor(Rc::new(Node { shape, data, requires_grad, op }))
    }

    /// Output node of `op`. Inputs are dropped when none needs a gradient.
    fn from_op(shape: Vec<usize>, data: Vec<f64>, op: Op) -> Self {
        let requires_grad = op.inputs().iter().any(|t| t.requires_grad());
        let op = if requires_grad { op } else { Op::Leaf };
        Self::raw(shape, data, requires_grad, op)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn len(&self) -> usize {
        self.0.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.0.data.as_slice() {
            [x] => Ok(*x),
            _ => Err(Error::Autodiff(format!("item() on shape {:?}", self.0.shape))),
        }
    }

    /// Value at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        debug_assert_eq!(index.len(), self.0.shape.len());
        let mut flat = 0;
        for (i, s) in index.iter().zip(&self.0.shape) {
            flat = flat * s + i;
        }
        self.0.data[flat]
    }

    /// Rows of a 2-D tensor.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let cols = *self.0.shape.last().unwrap_or(&1);
        self.0.data.chunks(cols.max(1)).map(|r| r.to_vec()).collect()
    }

    /// Same values with no history.
    pub fn detach(&self) -> Tensor {
        Self::raw(self.0.shape.clone(), self.0.data.clone(), false, Op::Leaf)
    }

    fn key(&self) -> *const Node {
        Rc::as_ptr(&self.0)
    }
}

/// Topologically ordered record of the operations reachable from an output
/// through nodes that require a gradient. Inputs precede their consumers.
pub struct Tape {
    nodes: Vec<Tensor>,
}

impl Tape {
    pub fn from_output(output: &Tensor) -> Self {
        let mut nodes = Vec::new();
        if !output.requires_grad() {
            return Tape { nodes };
        }
        let mut visited: std::collections::HashSet<*const Node> = Default::default();
        // (node, inputs already pushed)
        let mut stack = vec![(output.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                nodes.push(t);
                continue;
            }
            if !visited.insert(t.key()) {
                continue;
            }
            stack.push((t.clone(), true));
            for input in t.0.op.inputs() {
                if input.requires_grad() && !visited.contains(&input.key()) {
                    stack.push((input.clone(), false));
                }
            }
        }
        Tape { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gradients produced by [`backward`], keyed by node identity.
pub struct Gradients {
    grads: HashMap<*const Node, Vec<f64>>,
    // Keeps keyed nodes alive so pointers are never reused while we hold them.
    _tape: Tape,
}

impl Gradients {
    /// Gradient of `t`, or `None` when `t` is not upstream of the output.
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.grads.get(&t.key()).map(|g| g.as_slice())
    }

    /// Gradient of `t`, zeros when `t` does not influence the output.
    pub fn get_or_zeros(&self, t: &Tensor) -> Vec<f64> {
        self.get(t).map_or_else(|| vec![0.0; t.len()], |g| g.to_vec())
    }
}

/// Reverse pass from a scalar output.
pub fn backward(output: &Tensor) -> Result<Gradients> {
    if output.len() != 1 {
        return Err(Error::Autodiff(format!("backward from non-scalar of shape {:?}", output.shape())));
    }
    if !output.requires_grad() {
        return Err(Error::Autodiff("output does not depend on any parameter".into()));
    }
    let tape = Tape::from_output(output);
    let mut grads: HashMap<*const Node, Vec<f64>> = HashMap::with_capacity(tape.len());
    grads.insert(output.key(), vec![1.0]);
    for t in tape.nodes.iter().rev() {
        let Some(g) = grads.get(&t.key()).cloned() else { continue };
        ops::propagate(t, &g, &mut |input: &Tensor, contrib: Vec<f64>| {
            if !input.requires_grad() {
                return;
            }
            match grads.get_mut(&input.key()) {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                None => {
                    grads.insert(input.key(), contrib);
                }
            }
        });
    }
    Ok(Gradients { grads, _tape: tape })
}
