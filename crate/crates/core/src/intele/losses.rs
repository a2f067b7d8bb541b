//! Training objective.
//!
//! With binary labels `y`, encoder `Enc`, decoders `f_0`/`f_1`, semantic
//! classifier `f_SC` and invariant classifier `f_cls` (both emitting logits):
//!
//! ```text
//! L_AE  = ∑ [y=0]‖x − f_0(Enc x)‖² + [y=1]‖x − f_1(Enc x)‖²
//! L_CE  = ∑ BCE(f_SC(f_0(Enc x)), 0) + BCE(f_SC(f_1(Enc x)), 1)     (every sample)
//! L_aux = ∑ BCE(f_SC(x), y)
//! L_cls = ∑ BCE(f_cls(Enc x), y)
//! total = L_AE + λ1·(L_CE + α·L_aux) + λ2·L_cls
//! ```
//!
//! `L_CE` reaches the encoder and both decoders as well as `f_SC`; `L_aux`
//! only sees raw inputs, so it reaches `f_SC` alone.

use crate::diffcore::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::genmodel::Dataset;

use super::model::{Bound, InTeLeModel, Mode};
use super::train::HyperParams;

/// Observations with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub labels: Vec<u8>,
}

impl Batch {
    pub fn new(x: Tensor, labels: Vec<u8>) -> Result<Self> {
        let (n, _) = x.dims2();
        if n != labels.len() || labels.iter().any(|&l| l > 1) {
            return Err(Error::Data(format!(
                "batch has {n} rows and {} labels (labels must be 0/1)",
                labels.len()
            )));
        }
        Ok(Self { x, labels })
    }

    pub fn from_dataset(ds: &Dataset, idx: &[usize]) -> Self {
        let x = ds.x_matrix().gather_rows(idx);
        let labels = idx.iter().map(|&i| ds.samples()[i].binary_y()).collect();
        Self { x, labels }
    }

    pub fn full(ds: &Dataset) -> Self {
        Self {
            x: ds.x_matrix(),
            labels: ds.binary_labels(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn targets(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| f64::from(l)).collect()
    }
}

/// Loss nodes of one forward pass. Terms the mode does not use are `None`.
pub struct LossGraph<'t> {
    pub ae: Option<Var<'t>>,
    pub ce: Option<Var<'t>>,
    pub aux: Option<Var<'t>>,
    pub cls: Var<'t>,
}

/// Records every loss term of `model`'s mode on `tape`, sharing one forward pass.
pub fn build_losses<'t>(
    tape: &'t Tape,
    bound: &Bound<'t>,
    model: &InTeLeModel,
    batch: &Batch,
) -> Result<LossGraph<'t>> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    let x = tape.constant(batch.x.clone());
    let targets = batch.targets();
    let h = model.enc.forward(bound, x)?;

    let (mut ae, mut ce, mut aux) = (None, None, None);
    if let (Some(f0), Some(f1)) = (&model.f0, &model.f1) {
        let rec0 = f0.forward(bound, h)?;
        let rec1 = f1.forward(bound, h)?;
        let pristine: Vec<f64> = targets.iter().map(|t| 1.0 - t).collect();
        let err0 = x.sub(rec0)?.scale_rows(&pristine)?.sum_squares()?;
        let err1 = x.sub(rec1)?.scale_rows(&targets)?.sum_squares()?;
        ae = Some(err0.add(err1)?);

        if let Some(fsc) = &model.fsc {
            let s0 = fsc.forward(bound, rec0)?.bce_with_logits(&vec![0.0; n])?;
            let s1 = fsc.forward(bound, rec1)?.bce_with_logits(&vec![1.0; n])?;
            ce = Some(s0.add(s1)?);
            aux = Some(fsc.forward(bound, x)?.bce_with_logits(&targets)?);
        }
    }
    let cls = model.fcls.forward(bound, h)?.bce_with_logits(&targets)?;
    Ok(LossGraph { ae, ce, aux, cls })
}

impl<'t> LossGraph<'t> {
    /// Mode-dependent weighted sum.
    pub fn total(&self, mode: Mode, hp: &HyperParams) -> Result<Var<'t>> {
        match mode {
            Mode::CeBaseline => Ok(self.cls),
            Mode::NoFsc => {
                let ae = self.ae.ok_or_else(|| missing("L_AE"))?;
                ae.add(self.cls.scale(hp.lambda2)?)
            }
            Mode::Intele => {
                let ae = self.ae.ok_or_else(|| missing("L_AE"))?;
                let ce = self.ce.ok_or_else(|| missing("L_CE"))?;
                let aux = self.aux.ok_or_else(|| missing("L_aux"))?;
                let sc = ce.add(aux.scale(hp.alpha)?)?;
                ae.add(sc.scale(hp.lambda1)?)?.add(self.cls.scale(hp.lambda2)?)
            }
        }
    }
}

fn missing(term: &str) -> Error {
    Error::Config(format!("loss term {term} is not available in this mode"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossTerm {
    Ae,
    Ce,
    Aux,
    Cls,
    Total,
}

/// Value and parameter gradients of one loss term, summed over the batch.
pub fn loss_with_grads(
    model: &InTeLeModel,
    batch: &Batch,
    hp: &HyperParams,
    term: LossTerm,
) -> Result<(f64, Gradients)> {
    let tape = Tape::new();
    let bound = Bound::new(&tape, &model.params)?;
    let g = build_losses(&tape, &bound, model, batch)?;
    let node = match term {
        LossTerm::Ae => g.ae.ok_or_else(|| missing("L_AE"))?,
        LossTerm::Ce => g.ce.ok_or_else(|| missing("L_CE"))?,
        LossTerm::Aux => g.aux.ok_or_else(|| missing("L_aux"))?,
        LossTerm::Cls => g.cls,
        LossTerm::Total => g.total(model.mode, hp)?,
    };
    let value = node.item();
    let grads = tape.backward(node, &model.params)?;
    Ok((value, grads))
}

fn value_of(model: &InTeLeModel, batch: &Batch, term: LossTerm, hp: &HyperParams) -> Result<f64> {
    let tape = Tape::new();
    let bound = Bound::new(&tape, &model.params)?;
    let g = build_losses(&tape, &bound, model, batch)?;
    Ok(match term {
        LossTerm::Ae => g.ae.ok_or_else(|| missing("L_AE"))?.item(),
        LossTerm::Ce => g.ce.ok_or_else(|| missing("L_CE"))?.item(),
        LossTerm::Aux => g.aux.ok_or_else(|| missing("L_aux"))?.item(),
        LossTerm::Cls => g.cls.item(),
        LossTerm::Total => g.total(model.mode, hp)?.item(),
    })
}

pub fn loss_ae(model: &InTeLeModel, batch: &Batch) -> Result<f64> {
    value_of(model, batch, LossTerm::Ae, &HyperParams::default())
}

pub fn loss_ce_sc(model: &InTeLeModel, batch: &Batch) -> Result<f64> {
    value_of(model, batch, LossTerm::Ce, &HyperParams::default())
}

pub fn loss_aux(model: &InTeLeModel, batch: &Batch) -> Result<f64> {
    value_of(model, batch, LossTerm::Aux, &HyperParams::default())
}

pub fn loss_cls(model: &InTeLeModel, batch: &Batch) -> Result<f64> {
    value_of(model, batch, LossTerm::Cls, &HyperParams::default())
}

pub fn total_loss(model: &InTeLeModel, batch: &Batch, hp: &HyperParams) -> Result<f64> {
    value_of(model, batch, LossTerm::Total, hp)
}
