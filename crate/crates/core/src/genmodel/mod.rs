//! Synthetic latent generative models for artifact-bearing (`PL`) and
//! artifact-free (`PH`) fake-image distributions.
//!
//! Both regimes share the class prior, the latent prior `p(z|y)` and the
//! mixing network. They differ only in the observation model:
//!
//! ```text
//! PL:  x = mix(z) + κ·a_y + s_x·ε
//! PH:  x = mix(z)         + s_x·ε
//! ```
//!
//! with `a_0 = 0`, so `PH` with any label equals `PL` with `y = 0`.

mod dataset;
mod expfamily;
mod mixing;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, LabeledSample};
pub use expfamily::{check_condition_b, ConditionBReport, ExpFamilySpec, CONDITION_LIMIT, K_Z};
pub use mixing::{MixingFunction, MIX_SLOPE};

use crate::error::{Error, Result};
use crate::rng::{self, tags, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    PL,
    PH,
}

/// Class-dependent additive artifact patterns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSpec {
    /// One unit-norm pattern per class; row 0 is all zeros.
    patterns: Vec<Vec<f64>>,
    kappa: f64,
}

impl ArtifactSpec {
    pub fn new(patterns: Vec<Vec<f64>>, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(Error::Config(format!("artifact magnitude must be >= 0, got {kappa}")));
        }
        let Some(first) = patterns.first() else {
            return Err(Error::Config("artifact spec needs at least one class".into()));
        };
        if first.iter().any(|&v| v != 0.0) {
            return Err(Error::Config("pristine artifact pattern must be zero".into()));
        }
        for (k, p) in patterns.iter().enumerate().skip(1) {
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if p.len() != first.len() || (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("artifact pattern {k} must have unit norm")));
            }
        }
        Ok(Self { patterns, kappa })
    }

    /// A low-frequency sinusoid over the coordinate index plus one sharp
    /// spike, normalised to unit length. The phase and spike position are
    /// drawn per class.
    pub fn random(classes: usize, d_x: usize, kappa: f64, rng: &mut Rng) -> Result<Self> {
        let mut patterns = vec![vec![0.0; d_x]];
        for _ in 1..classes {
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let spike = rng.random_range(0..d_x);
            let mut p: Vec<f64> = (0..d_x)
                .map(|j| (std::f64::consts::TAU * j as f64 / d_x as f64 + phase).sin())
                .collect();
            p[spike] += 3.0;
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            p.iter_mut().for_each(|v| *v /= norm);
            patterns.push(p);
        }
        Self::new(patterns, kappa)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn pattern(&self, y: usize) -> &[f64] {
        &self.patterns[y]
    }
}

/// Knobs for building a [`GenModelParams`]. Unset latent moments are drawn
/// from the world seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub d_z: usize,
    pub d_x: usize,
    pub classes: usize,
    pub priors: Option<Vec<f64>>,
    pub means: Option<Vec<Vec<f64>>>,
    pub variances: Option<Vec<Vec<f64>>>,
    /// Random means are uniform on `[-mean_scale, mean_scale]`.
    pub mean_scale: f64,
    /// Random variances are uniform on `[var_min, var_max]`.
    pub var_min: f64,
    pub var_max: f64,
    pub kappa: f64,
    pub noise: f64,
    pub mix_bias_scale: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            d_z: 2,
            d_x: 16,
            classes: 2,
            priors: None,
            means: None,
            variances: None,
            mean_scale: 1.0,
            var_min: 0.5,
            var_max: 1.5,
            kappa: 3.0,
            noise: 0.0,
            mix_bias_scale: 0.0,
            seed: 0,
        }
    }
}

/// Full description of one synthetic world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenModelParams {
    pub priors: Vec<f64>,
    pub latent: ExpFamilySpec,
    pub mixing: MixingFunction,
    pub artifact: ArtifactSpec,
    pub noise: f64,
    pub seed: u64,
}

impl GenModelParams {
    pub fn new(
        priors: Vec<f64>,
        latent: ExpFamilySpec,
        mixing: MixingFunction,
        artifact: ArtifactSpec,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        let m = priors.len();
        if m < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if priors.iter().any(|&p| !(p >= 0.0)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("class priors must be non-negative and sum to 1: {priors:?}")));
        }
        if latent.classes() != m || artifact.patterns.len() != m {
            return Err(Error::Config("priors, latent spec and artifacts disagree on class count".into()));
        }
        if latent.d_z() != mixing.d_z() || artifact.pattern(0).len() != mixing.d_x() {
            return Err(Error::Config("latent/observed dimensions disagree with mixing network".into()));
        }
        if !(noise >= 0.0) {
            return Err(Error::Config(format!("noise scale must be >= 0, got {noise}")));
        }
        Ok(Self { priors, latent, mixing, artifact, noise, seed })
    }

    pub fn from_config(cfg: &GeneratorConfig) -> Result<Self> {
        let m = cfg.classes;
        if m < 2 || cfg.d_z == 0 || cfg.d_x <= cfg.d_z {
            return Err(Error::Config(format!(
                "need classes >= 2 and 0 < d_z < d_x (classes={m}, d_z={}, d_x={})",
                cfg.d_z, cfg.d_x
            )));
        }
        let mut world = rng::substream(cfg.seed, tags::WORLD, 0);
        let mixing = MixingFunction::random(cfg.d_z, cfg.d_x, cfg.mix_bias_scale, &mut world)?;
        let artifact = ArtifactSpec::random(m, cfg.d_x, cfg.kappa, &mut world)?;

        let mut latent_rng = rng::substream(cfg.seed, tags::WORLD, 1);
        let means = match &cfg.means {
            Some(m) => m.clone(),
            None => (0..m)
                .map(|_| {
                    (0..cfg.d_z)
                        .map(|_| latent_rng.random_range(-1.0..=1.0) * cfg.mean_scale)
                        .collect()
                })
                .collect(),
        };
        let variances = match &cfg.variances {
            Some(v) => v.clone(),
            None => {
                if !(cfg.var_min > 0.0 && cfg.var_max >= cfg.var_min) {
                    return Err(Error::Config("need 0 < var_min <= var_max".into()));
                }
                (0..m)
                    .map(|_| {
                        (0..cfg.d_z)
                            .map(|_| cfg.var_min + latent_rng.random::<f64>() * (cfg.var_max - cfg.var_min))
                            .collect()
                    })
                    .collect()
            }
        };
        if means.len() != m || variances.len() != m {
            return Err(Error::Config(format!("means/variances must list {m} classes")));
        }
        let latent = ExpFamilySpec::new(means, variances)?;
        if latent.d_z() != cfg.d_z {
            return Err(Error::Config(format!("latent rows must have d_z = {} entries", cfg.d_z)));
        }
        let priors = cfg.priors.clone().unwrap_or_else(|| vec![1.0 / m as f64; m]);
        Self::new(priors, latent, mixing, artifact, cfg.noise, cfg.seed)
    }

    pub fn classes(&self) -> usize {
        self.priors.len()
    }

    pub fn d_z(&self) -> usize {
        self.latent.d_z()
    }

    pub fn d_x(&self) -> usize {
        self.mixing.d_x()
    }

    /// Draws a class label from the prior.
    pub fn sample_y(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (y, p) in self.priors.iter().enumerate() {
            acc += p;
            if u < acc {
                return y;
            }
        }
        // rounding in the cumulative sum
        self.priors.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub fn sample_z_given_y(&self, y: usize, rng: &mut Rng) -> Vec<f64> {
        self.latent
            .mean(y)
            .iter()
            .zip(self.latent.variance(y))
            .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Deterministic pristine-branch mixing `g(z)`.
    pub fn mix(&self, z: &[f64]) -> Vec<f64> {
        self.mixing.apply(z)
    }

    /// Observation given latent `z`, label `y` and a standard-normal noise vector.
    pub fn observe(&self, z: &[f64], y: usize, eps: &[f64], regime: Regime) -> Vec<f64> {
        let mut x = self.mix(z);
        if regime == Regime::PL {
            let k = self.artifact.kappa();
            for (v, a) in x.iter_mut().zip(self.artifact.pattern(y)) {
                *v += k * a;
            }
        }
        if self.noise > 0.0 {
            for (v, e) in x.iter_mut().zip(eps) {
                *v += self.noise * e;
            }
        }
        x
    }

    /// Draws the observation noise and applies [`Self::observe`]. The noise
    /// vector is always drawn so that streams stay aligned across regimes.
    pub fn generate_x(&self, z: &[f64], y: usize, rng: &mut Rng, regime: Regime) -> Vec<f64> {
        let eps: Vec<f64> = (0..self.d_x()).map(|_| rng.sample(StandardNormal)).collect();
        self.observe(z, y, &eps, regime)
    }

    /// Sample `index` of stream `stream`; a pure function of its arguments.
    pub fn sample_one(&self, stream: u64, index: u64, regime: Regime) -> LabeledSample {
        let mut r = rng::substream(self.seed, stream, index);
        let y = self.sample_y(&mut r);
        let z = self.sample_z_given_y(y, &mut r);
        let x = self.generate_x(&z, y, &mut r, regime);
        LabeledSample::new(x, z, y)
    }

    /// `n` i.i.d. samples. The same `stream` in both regimes yields paired
    /// samples that share `(y, z, ε)` and differ only in the artifact term.
    pub fn sample_dataset(&self, n: usize, regime: Regime, stream: u64) -> Dataset {
        let samples = (0..n as u64).map(|i| self.sample_one(stream, i, regime)).collect();
        Dataset::new(samples, self.d_z(), self.d_x()).expect("generated samples are consistent")
    }

    /// Bayes posterior `p(y|z)`; depends only on the priors and the latent spec.
    pub fn bayes_posterior(&self, z: &[f64]) -> Vec<f64> {
        bayes_posterior(&self.priors, &self.latent, z)
    }
}

/// `softmax_y(log π_y + log p(z|y))`.
pub fn bayes_posterior(priors: &[f64], latent: &ExpFamilySpec, z: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = priors
        .iter()
        .enumerate()
        .map(|(y, &p)| p.ln() + latent.log_density(z, y))
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
