use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diffcore::{sgd_step, Tape};
use crate::error::{Error, Result};
use crate::evalkit::{accuracy_precision, ScoredSet, DEFAULT_THRESHOLD};
use crate::genmodel::Dataset;
use crate::rng::{self, tags};

use super::losses::{build_losses, Batch};
use super::model::{Bound, InTeLeModel, Mode};

/// Optimisation settings. Loss weights, learning rate and weight decay
/// default to λ1 = 2, λ2 = 0.25, α = 4, lr = 0.02, wd = 1e-4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda1: 2.0,
            lambda2: 0.25,
            alpha: 4.0,
            lr: 0.02,
            weight_decay: 1e-4,
            batch_size: 20,
            epochs: 50,
            seed: 0,
            mode: Mode::Intele,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("alpha", self.alpha)] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("need lr > 0 and weight_decay >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-sample averages over one epoch, plus accuracy of the end-of-epoch
/// parameters on the full training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_ae: Option<f64>,
    pub l_ce: Option<f64>,
    pub l_aux: Option<f64>,
    pub l_cls: f64,
    pub total: f64,
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

/// Accuracy at the default threshold of `model` on `data`.
pub fn accuracy_on(model: &InTeLeModel, data: &Dataset) -> Result<f64> {
    let scores = model.predict(&data.x_matrix())?;
    let set = ScoredSet::new(scores, data.binary_labels())?;
    Ok(accuracy_precision(&set, DEFAULT_THRESHOLD).accuracy)
}

fn check_finite(term: &'static str, value: f64, epoch: usize, batch: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss { term, epoch, batch, value })
    }
}

/// Mini-batch SGD on the mode's objective.
///
/// Each step minimises the batch total divided by the batch size. Batches
/// are drawn from a fresh permutation every epoch.
pub fn train(mut model: InTeLeModel, data: &Dataset, hp: &HyperParams) -> Result<(InTeLeModel, TrainLog)> {
    hp.validate()?;
    if model.mode != hp.mode {
        return Err(Error::Config(format!(
            "model built for mode {} but hyper-parameters request {}",
            model.mode, hp.mode
        )));
    }
    if data.is_empty() || hp.batch_size > data.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds training set of {}",
            hp.batch_size,
            data.len()
        )));
    }
    if data.d_x() != model.d_x {
        return Err(Error::Shape {
            op: "train",
            left: vec![data.d_x()],
            right: vec![model.d_x],
        });
    }

    let x_all = data.x_matrix();
    let labels = data.binary_labels();
    let n = data.len();
    let mut log = TrainLog::default();

    for epoch in 0..hp.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::substream(hp.seed, tags::SHUFFLE, epoch as u64));

        let mut sums = [0.0f64; 5];
        for (b, idx) in order.chunks(hp.batch_size).enumerate() {
            let batch = Batch {
                x: x_all.gather_rows(idx),
                labels: idx.iter().map(|&i| labels[i]).collect(),
            };
            let tape = Tape::new();
            let bound = Bound::new(&tape, &model.params)?;
            let g = build_losses(&tape, &bound, &model, &batch)?;

            let parts = [("L_AE", g.ae), ("L_CE", g.ce), ("L_aux", g.aux), ("L_cls", Some(g.cls))];
            for (k, (name, var)) in parts.into_iter().enumerate() {
                if let Some(v) = var {
                    sums[k] += check_finite(name, v.item(), epoch, b)?;
                }
            }
            let total = g.total(model.mode, hp)?;
            sums[4] += check_finite("total", total.item(), epoch, b)?;

            let loss = total.scale(1.0 / idx.len() as f64)?;
            let grads = tape.backward(loss, &model.params)?;
            sgd_step(&mut model.params, &grads, hp.lr, hp.weight_decay)?;
        }

        let mean = |s: f64| s / n as f64;
        let mode = model.mode;
        log.records.push(EpochRecord {
            epoch,
            l_ae: mode.has_decoders().then(|| mean(sums[0])),
            l_ce: mode.has_fsc().then(|| mean(sums[1])),
            l_aux: mode.has_fsc().then(|| mean(sums[2])),
            l_cls: mean(sums[3]),
            total: mean(sums[4]),
            train_accuracy: accuracy_on(&model, data)?,
        });
    }
    Ok((model, log))
}
