use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Activation, Tensor};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::Rng;

pub const MIX_SLOPE: f64 = 0.2;

/// Fixed two-layer leaky-ReLU map `R^{d_z} → R^{d_x}`.
///
/// Weights are stored `[in × out]` and applied to row vectors. Both weight
/// matrices have full rank `in`, so with the bijective activation the whole
/// map is injective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingFunction {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

fn rank_condition(w: &Tensor) -> f64 {
    let (r, c) = w.dims2();
    linalg::condition_number(&DMatrix::from_row_slice(r, c, w.data()))
}

impl MixingFunction {
    pub fn new(w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Result<Self> {
        let (d_z, hidden) = w1.dims2();
        let (h2, d_x) = w2.dims2();
        if h2 != hidden || b1.len() != hidden || b2.len() != d_x {
            return Err(Error::Shape {
                op: "mixing",
                left: w1.shape().to_vec(),
                right: w2.shape().to_vec(),
            });
        }
        if d_x <= d_z || hidden < d_z || hidden > d_x {
            return Err(Error::Config(format!(
                "mixing needs d_z < d_x and d_z <= hidden <= d_x (d_z={d_z}, hidden={hidden}, d_x={d_x})"
            )));
        }
        for (name, w) in [("w1", &w1), ("w2", &w2)] {
            let cond = rank_condition(w);
            if !(cond < 1e8) {
                return Err(Error::Config(format!("mixing weight {name} is rank deficient (cond {cond:e})")));
            }
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    /// Draws Gaussian weights scaled by `1/√fan_in`, redrawing until both
    /// layers are well conditioned.
    pub fn random(d_z: usize, d_x: usize, bias_scale: f64, rng: &mut Rng) -> Result<Self> {
        let hidden = d_x;
        let mut draw = |rows: usize, cols: usize, scale: f64| {
            let data = (0..rows * cols)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Tensor::new(vec![rows, cols], data)
        };
        for _ in 0..100 {
            let w1 = draw(d_z, hidden, 1.0 / (d_z as f64).sqrt())?;
            let b1 = draw(1, hidden, bias_scale)?;
            let w2 = draw(hidden, d_x, 1.0 / (hidden as f64).sqrt())?;
            let b2 = draw(1, d_x, bias_scale)?;
            if rank_condition(&w1) < 1e3 && rank_condition(&w2) < 1e3 {
                let shape = |t: Tensor, n| Tensor::new(vec![n], t.into_data());
                return Self::new(w1, shape(b1, hidden)?, w2, shape(b2, d_x)?);
            }
        }
        Err(Error::Config("could not draw well-conditioned mixing weights".into()))
    }

    pub fn d_z(&self) -> usize {
        self.w1.dims2().0
    }

    pub fn d_x(&self) -> usize {
        self.w2.dims2().1
    }

    /// Applies the map to every row of `z` (`[n × d_z]`).
    pub fn apply_batch(&self, z: &Tensor) -> Result<Tensor> {
        let act = Activation::LeakyRelu { slope: MIX_SLOPE };
        let h = z.matmul(&self.w1)?.add_row(&self.b1)?.map(|v| act.apply(v));
        Ok(h.matmul(&self.w2)?.add_row(&self.b2)?.map(|v| act.apply(v)))
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let zt = Tensor::new(vec![1, z.len()], z.to_vec()).expect("latent row");
        self.apply_batch(&zt).expect("mixing shapes checked at construction").into_data()
    }
}
