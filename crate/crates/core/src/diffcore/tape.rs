//! Tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] replays the tape in reverse and consumes it: a second
//! call returns [`Error::TapeConsumed`]. Graphs are rebuilt for every batch.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the input `x` and the output `y = apply(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−[t·log σ(l) + (1−t)·log(1−σ(l))]` in log-sum-exp form.
pub fn bce_with_logits(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

#[derive(Debug)]
enum Op {
    Leaf { param: Option<String> },
    MatMul(usize, usize),
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    ScaleRows(usize, Vec<f64>),
    Pointwise(usize, Activation),
    Sum(usize),
    SumSquares(usize),
    BceLogits(usize, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

/// Result of [`Tape::backward`]: gradients for every node plus a
/// name-indexed view for parameters.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    /// Gradient with respect to any node; zero-filled if the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match &self.nodes[var.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(var.value().shape()),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, value: Tensor) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a non-trainable input.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Leaf { param: None }, value)
    }

    /// Records the current value of parameter `name`.
    pub fn param(&self, params: &ParamSet, name: &str) -> Result<Var<'_>> {
        let value = params
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?
            .clone();
        Ok(self.push(
            Op::Leaf {
                param: Some(name.to_string()),
            },
            value,
        ))
    }

    fn value_of(&self, id: usize) -> std::cell::Ref<'_, Tensor> {
        std::cell::Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse pass from a scalar `loss`. Trainable parameters of `params`
    /// that never appeared on the tape receive zero gradients.
    pub fn backward(&self, loss: Var<'_>, params: &ParamSet) -> Result<Gradients> {
        if self.consumed.get() {
            return Err(Error::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id].value;
        if !root.is_scalar() {
            return Err(Error::NonScalarLoss(root.shape().to_vec()));
        }
        self.consumed.set(true);

        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::full(root.shape(), 1.0));

        // Node ids are a topological order: inputs are always pushed first.
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            match &node.op {
                Op::Leaf { .. } => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(&nodes[*b].value)?;
                    let db = nodes[*a].value.t_matmul(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddRow(a, bias) => {
                    let db = g.sum_rows();
                    let db = Tensor::new(nodes[*bias].value.shape().to_vec(), db.into_data())?;
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.map(|v| v * c)),
                Op::ScaleRows(a, w) => accumulate(&mut grads, *a, g.scale_rows(w)?),
                Op::Pointwise(a, act) => {
                    let x = &nodes[*a].value;
                    let y = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data().iter().zip(y.data()))
                        .map(|(&gv, (&xv, &yv))| gv * act.derivative(xv, yv))
                        .collect();
                    accumulate(&mut grads, *a, Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::Sum(a) => {
                    let s = g.item();
                    accumulate(&mut grads, *a, Tensor::full(nodes[*a].value.shape(), s));
                }
                Op::SumSquares(a) => {
                    let s = g.item();
                    accumulate(&mut grads, *a, nodes[*a].value.map(|v| 2.0 * v * s));
                }
                Op::BceLogits(a, targets) => {
                    let s = g.item();
                    let x = &nodes[*a].value;
                    let data = x
                        .data()
                        .iter()
                        .zip(targets)
                        .map(|(&l, &t)| (sigmoid(l) - t) * s)
                        .collect();
                    accumulate(&mut grads, *a, Tensor::new(x.shape().to_vec(), data)?);
                }
            }
            grads[id] = Some(g);
        }

        let mut by_name = BTreeMap::new();
        for (id, node) in nodes.iter().enumerate() {
            if let Op::Leaf { param: Some(name) } = &node.op {
                let g = grads[id]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                // The same parameter may be recorded more than once.
                match by_name.get_mut(name) {
                    None => {
                        by_name.insert(name.clone(), g);
                    }
                    Some(acc) => add_into(acc, &g),
                }
            }
        }
        for (name, tensor) in params.trainable() {
            by_name
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(tensor.shape()));
        }
        Ok(Gradients {
            nodes: grads,
            params: by_name,
        })
    }
}

fn add_into(acc: &mut Tensor, g: &Tensor) {
    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
        *a += b;
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(acc) => add_into(acc, &g),
        slot @ None => *slot = Some(g),
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_of(self.id).shape().to_vec()
    }

    /// Scalar value of a single-element node.
    pub fn item(&self) -> f64 {
        self.tape.value_of(self.id).item()
    }

    fn binary(
        self,
        rhs: Var<'t>,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
        op: Op,
    ) -> Result<Var<'t>> {
        let value = f(&self.tape.value_of(self.id), &self.tape.value_of(rhs.id))?;
        Ok(self.tape.push(op, value))
    }

    fn unary(self, f: impl FnOnce(&Tensor) -> Result<Tensor>, op: Op) -> Result<Var<'t>> {
        let value = f(&self.tape.value_of(self.id))?;
        Ok(self.tape.push(op, value))
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, |a, b| a.matmul(b), Op::MatMul(self.id, rhs.id))
    }

    /// Broadcast-adds a bias vector to every row.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>> {
        self.binary(bias, |a, b| a.add_row(b), Op::AddRow(self.id, bias.id))
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, |a, b| a.zip_map(b, "add", |x, y| x + y), Op::Add(self.id, rhs.id))
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, |a, b| a.zip_map(b, "sub", |x, y| x - y), Op::Sub(self.id, rhs.id))
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        self.unary(|a| Ok(a.map(|v| v * c)), Op::Scale(self.id, c))
    }

    pub fn scale_rows(self, weights: &[f64]) -> Result<Var<'t>> {
        self.unary(|a| a.scale_rows(weights), Op::ScaleRows(self.id, weights.to_vec()))
    }

    pub fn pointwise(self, act: Activation) -> Result<Var<'t>> {
        self.unary(|a| Ok(a.map(|v| act.apply(v))), Op::Pointwise(self.id, act))
    }

    pub fn sum(self) -> Result<Var<'t>> {
        self.unary(|a| Ok(Tensor::scalar(a.sum())), Op::Sum(self.id))
    }

    pub fn sum_squares(self) -> Result<Var<'t>> {
        self.unary(
            |a| Ok(Tensor::scalar(a.data().iter().map(|v| v * v).sum())),
            Op::SumSquares(self.id),
        )
    }

    /// `∑ (self − target)²` over all entries.
    pub fn sq_error(self, target: Var<'t>) -> Result<Var<'t>> {
        target.sub(self)?.sum_squares()
    }

    /// Summed binary cross-entropy of logits against `{0,1}` targets.
    pub fn bce_with_logits(self, targets: &[f64]) -> Result<Var<'t>> {
        self.unary(
            |a| {
                if a.len() != targets.len() {
                    return Err(Error::Shape {
                        op: "bce_with_logits",
                        left: a.shape().to_vec(),
                        right: vec![targets.len()],
                    });
                }
                let total = a
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&l, &t)| bce_with_logits(l, t))
                    .sum();
                Ok(Tensor::scalar(total))
            },
            Op::BceLogits(self.id, targets.to_vec()),
        )
    }
}
