//! Central finite differences for checking reverse-mode gradients.
//!
//! Entry `v` is perturbed by `h·max(1, |v|)`.

use std::collections::BTreeMap;

use super::{ParamSet, Tensor};
use crate::error::Result;

/// Numerical gradient of `f` with respect to each entry of each input.
pub fn numeric_grads(
    inputs: &[Tensor],
    h: f64,
    f: impl Fn(&[Tensor]) -> Result<f64>,
) -> Result<Vec<Tensor>> {
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[k].shape());
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            let step = h * orig.abs().max(1.0);
            work[k].data_mut()[i] = orig + step;
            let up = f(&work)?;
            work[k].data_mut()[i] = orig - step;
            let down = f(&work)?;
            work[k].data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * step);
        }
        out.push(g);
    }
    Ok(out)
}

/// Numerical gradient of `f` with respect to every trainable parameter.
pub fn numeric_param_grads(
    params: &ParamSet,
    h: f64,
    f: impl Fn(&ParamSet) -> Result<f64>,
) -> Result<BTreeMap<String, Tensor>> {
    let mut work = params.clone();
    let mut out = BTreeMap::new();
    let names: Vec<(String, Tensor)> = params.trainable().map(|(n, t)| (n.to_string(), t.clone())).collect();
    for (name, value) in names {
        let mut g = Tensor::zeros(value.shape());
        let mut probe = value.clone();
        for i in 0..value.len() {
            let orig = value.data()[i];
            let step = h * orig.abs().max(1.0);
            probe.data_mut()[i] = orig + step;
            work.set(&name, probe.clone())?;
            let up = f(&work)?;
            probe.data_mut()[i] = orig - step;
            work.set(&name, probe.clone())?;
            let down = f(&work)?;
            probe.data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * step);
        }
        work.set(&name, value)?;
        out.insert(name, g);
    }
    Ok(out)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both are zero.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    let scale = norm(a.data()).max(norm(b.data()));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
