use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tape::Gradients;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Param {
    value: Tensor,
    trainable: bool,
}

/// Named parameters. Names are unique and shapes are fixed at insertion.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    params: BTreeMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        self.params.insert(name, Param { value, trainable });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Replaces the value of an existing parameter; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        p.value.same_shape(&value, "param_set")?;
        p.value = value;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.value))
    }

    pub fn trainable(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(k, p)| (k.as_str(), &p.value))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }
}

/// One SGD update with coupled weight decay: `p ← p − lr·(g + wd·p)`.
pub fn sgd_step(params: &mut ParamSet, grads: &Gradients, lr: f64, weight_decay: f64) -> Result<()> {
    if !(lr > 0.0) || !(weight_decay >= 0.0) {
        return Err(Error::Config(format!(
            "sgd needs lr > 0 and weight_decay >= 0, got lr={lr}, weight_decay={weight_decay}"
        )));
    }
    for (name, p) in params.params.iter_mut().filter(|(_, p)| p.trainable) {
        let g = grads
            .param(name)
            .ok_or_else(|| Error::MissingGradient(name.clone()))?;
        p.value.same_shape(g, "sgd_step")?;
        for (w, &gv) in p.value.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * (gv + weight_decay * *w);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tape;

    fn single(value: f64, grad_scale: f64) -> (ParamSet, Gradients) {
        let mut ps = ParamSet::new();
        ps.insert("p", Tensor::scalar(value), true).unwrap();
        let t = Tape::new();
        let loss = t.param(&ps, "p").unwrap().scale(grad_scale).unwrap();
        let g = t.backward(loss, &ps).unwrap();
        (ps, g)
    }

    #[test]
    fn plain_step() {
        let (mut ps, g) = single(1.0, 0.5);
        sgd_step(&mut ps, &g, 0.1, 0.0).unwrap();
        assert!((ps.get("p").unwrap().item() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn decay_only_step() {
        let (mut ps, g) = single(1.0, 0.0);
        sgd_step(&mut ps, &g, 0.1, 0.1).unwrap();
        assert!((ps.get("p").unwrap().item() - 0.99).abs() < 1e-15);
    }

    #[test]
    fn coupled_decay_equals_l2_penalised_loss() {
        // Route A: decayed step on loss. Route B: plain step on loss + wd/2·‖p‖².
        let values = vec![0.7, -1.3, 2.2, 0.05];
        let wd = 0.03;
        let lr = 0.2;
        let mut a = ParamSet::new();
        a.insert("w", Tensor::new(vec![2, 2], values.clone()).unwrap(), true).unwrap();
        let mut b = a.clone();

        let t = Tape::new();
        let w = t.param(&a, "w").unwrap();
        let loss = w.pointwise(crate::diffcore::Activation::Tanh).unwrap().sum().unwrap();
        let ga = t.backward(loss, &a).unwrap();
        sgd_step(&mut a, &ga, lr, wd).unwrap();

        let t = Tape::new();
        let w = t.param(&b, "w").unwrap();
        let base = w.pointwise(crate::diffcore::Activation::Tanh).unwrap().sum().unwrap();
        let penalty = w.sum_squares().unwrap().scale(wd / 2.0).unwrap();
        let loss = base.add(penalty).unwrap();
        let gb = t.backward(loss, &b).unwrap();
        sgd_step(&mut b, &gb, lr, 0.0).unwrap();

        for (x, y) in a.get("w").unwrap().data().iter().zip(b.get("w").unwrap().data()) {
            assert!((x - y).abs() < 1e-14, "{x} vs {y}");
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let (_, g) = single(1.0, 1.0);
        let mut other = ParamSet::new();
        other.insert("q", Tensor::scalar(1.0), true).unwrap();
        assert!(matches!(sgd_step(&mut other, &g, 0.1, 0.0), Err(Error::MissingGradient(_))));
    }

    #[test]
    fn frozen_parameters_are_untouched() {
        let mut ps = ParamSet::new();
        ps.insert("frozen", Tensor::scalar(3.0), false).unwrap();
        ps.insert("p", Tensor::scalar(1.0), true).unwrap();
        let t = Tape::new();
        let loss = t.param(&ps, "p").unwrap().add(t.param(&ps, "frozen").unwrap()).unwrap();
        let g = t.backward(loss, &ps).unwrap();
        sgd_step(&mut ps, &g, 0.5, 0.1).unwrap();
        assert_eq!(ps.get("frozen").unwrap().item(), 3.0);
    }

    #[test]
    fn names_are_unique_and_shapes_fixed() {
        let mut ps = ParamSet::new();
        ps.insert("a", Tensor::zeros(&[2]), true).unwrap();
        assert!(ps.insert("a", Tensor::zeros(&[2]), true).is_err());
        assert!(ps.set("a", Tensor::zeros(&[3])).is_err());
        assert!(ps.set("a", Tensor::full(&[2], 1.0)).is_ok());
    }
}
