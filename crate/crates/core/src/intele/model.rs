use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Activation, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{self, tags};

/// Which parts of the model exist and which loss terms train them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Full objective: auto-encoder, semantic classifier and invariant classifier.
    Intele,
    /// Auto-encoder and invariant classifier; no semantic classifier.
    NoFsc,
    /// Encoder plus classifier trained by cross-entropy alone.
    #[serde(rename = "ce")]
    CeBaseline,
}

impl Mode {
    pub fn has_decoders(self) -> bool {
        !matches!(self, Mode::CeBaseline)
    }

    pub fn has_fsc(self) -> bool {
        matches!(self, Mode::Intele)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Intele => "intele",
            Mode::NoFsc => "no_fsc",
            Mode::CeBaseline => "ce",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intele" => Ok(Mode::Intele),
            "no_fsc" => Ok(Mode::NoFsc),
            "ce" | "ce_baseline" => Ok(Mode::CeBaseline),
            other => Err(Error::Config(format!("unknown mode `{other}` (intele | no_fsc | ce)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Layer widths. Defaults: encoder 3×64, decoders 2×64, semantic
/// classifier one hidden layer of 8, invariant classifier one of 32.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_h: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    pub sc_hidden: usize,
    pub cls_hidden: usize,
    pub slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_h: 8,
            enc_hidden: vec![64, 64, 64],
            dec_hidden: vec![64, 64],
            sc_hidden: 8,
            cls_hidden: 32,
            slope: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_h == 0 {
            return Err(Error::Config("d_h must be positive".into()));
        }
        if self.enc_hidden.len() < 3 {
            return Err(Error::Config("encoder needs at least 3 hidden layers".into()));
        }
        if self.enc_hidden.iter().chain(&self.dec_hidden).any(|&w| w == 0) || self.sc_hidden == 0 || self.cls_hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(Error::Config(format!("leaky-ReLU slope must be in (0,1), got {}", self.slope)));
        }
        Ok(())
    }
}

/// Fully connected network with leaky-ReLU hidden layers and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub name: String,
    pub dims: Vec<usize>,
    pub slope: f64,
}

impl Mlp {
    pub fn new(name: &str, dims: Vec<usize>, slope: f64) -> Self {
        Self { name: name.to_string(), dims, slope }
    }

    pub fn weight(&self, layer: usize) -> String {
        format!("{}.{layer}.w", self.name)
    }

    pub fn bias(&self, layer: usize) -> String {
        format!("{}.{layer}.b", self.name)
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers() {
            Activation::Identity
        } else {
            Activation::LeakyRelu { slope: self.slope }
        }
    }

    /// Adds `uniform(−1/√fan_in, 1/√fan_in)` weights and biases drawn from `stream`.
    pub fn init(&self, params: &mut ParamSet, seed: u64, stream: u64) -> Result<()> {
        let mut r = rng::substream(seed, tags::INIT, stream);
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| r.random_range(-bound..bound)).collect() };
            let w = Tensor::new(vec![fan_in, fan_out], draw(fan_in * fan_out))?;
            let b = Tensor::new(vec![fan_out], draw(fan_out))?;
            params.insert(self.weight(l), w, true)?;
            params.insert(self.bias(l), b, true)?;
        }
        Ok(())
    }

    pub fn forward<'t>(&self, bound: &Bound<'t>, input: Var<'t>) -> Result<Var<'t>> {
        let mut h = input;
        for l in 0..self.layers() {
            h = h.matmul(bound.get(&self.weight(l))?)?.add_row(bound.get(&self.bias(l))?)?;
            let act = self.activation(l);
            if act != Activation::Identity {
                h = h.pointwise(act)?;
            }
        }
        Ok(h)
    }

    /// Same arithmetic as [`Self::forward`] without recording a tape.
    pub fn apply(&self, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
        let mut h = input.clone();
        for l in 0..self.layers() {
            let w = lookup(params, &self.weight(l))?;
            let b = lookup(params, &self.bias(l))?;
            h = h.matmul(w)?.add_row(b)?;
            let act = self.activation(l);
            if act != Activation::Identity {
                h = h.map(|v| act.apply(v));
            }
        }
        Ok(h)
    }
}

fn lookup<'a>(params: &'a ParamSet, name: &str) -> Result<&'a Tensor> {
    params.get(name).ok_or_else(|| Error::UnknownParameter(name.to_string()))
}

/// Every parameter of a model recorded once on a tape.
pub struct Bound<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn new(tape: &'t Tape, params: &ParamSet) -> Result<Self> {
        let mut vars = BTreeMap::new();
        for name in params.names() {
            vars.insert(name.to_string(), tape.param(params, name)?);
        }
        Ok(Self { vars })
    }

    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }
}

/// Encoder, two decoder branches, semantic classifier and invariant
/// classifier. Absent modules (per [`Mode`]) have no parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InTeLeModel {
    pub d_x: usize,
    pub config: ModelConfig,
    pub mode: Mode,
    pub enc: Mlp,
    pub f0: Option<Mlp>,
    pub f1: Option<Mlp>,
    pub fsc: Option<Mlp>,
    pub fcls: Mlp,
    pub params: ParamSet,
}

/// Init streams. `f0` and `f1` share one so the branches start identical.
const STREAM_ENC: u64 = 0;
const STREAM_DEC: u64 = 1;
const STREAM_FSC: u64 = 2;
const STREAM_CLS: u64 = 3;

impl InTeLeModel {
    pub fn new(d_x: usize, config: &ModelConfig, mode: Mode, seed: u64) -> Result<Self> {
        config.validate()?;
        if d_x == 0 {
            return Err(Error::Config("d_x must be positive".into()));
        }
        let slope = config.slope;
        let enc_dims: Vec<usize> = std::iter::once(d_x)
            .chain(config.enc_hidden.iter().copied())
            .chain(std::iter::once(config.d_h))
            .collect();
        let dec_dims: Vec<usize> = std::iter::once(config.d_h)
            .chain(config.dec_hidden.iter().copied())
            .chain(std::iter::once(d_x))
            .collect();
        let enc = Mlp::new("enc", enc_dims, slope);
        let fcls = Mlp::new("fcls", vec![config.d_h, config.cls_hidden, 1], slope);
        let (f0, f1) = if mode.has_decoders() {
            (
                Some(Mlp::new("f0", dec_dims.clone(), slope)),
                Some(Mlp::new("f1", dec_dims, slope)),
            )
        } else {
            (None, None)
        };
        let fsc = mode
            .has_fsc()
            .then(|| Mlp::new("fsc", vec![d_x, config.sc_hidden, 1], slope));

        let mut params = ParamSet::new();
        enc.init(&mut params, seed, STREAM_ENC)?;
        if let (Some(a), Some(b)) = (&f0, &f1) {
            a.init(&mut params, seed, STREAM_DEC)?;
            b.init(&mut params, seed, STREAM_DEC)?;
        }
        if let Some(s) = &fsc {
            s.init(&mut params, seed, STREAM_FSC)?;
        }
        fcls.init(&mut params, seed, STREAM_CLS)?;

        Ok(Self {
            d_x,
            config: config.clone(),
            mode,
            enc,
            f0,
            f1,
            fsc,
            fcls,
            params,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c) = x.dims2();
        if c != self.d_x || x.shape().len() != 2 {
            return Err(Error::Shape {
                op: "model input",
                left: x.shape().to_vec(),
                right: vec![self.d_x],
            });
        }
        Ok(())
    }

    /// Encoder output `[n × d_h]`.
    pub fn embed(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.enc.apply(&self.params, x)
    }

    /// `σ(f_cls(Enc(x)))` per row; higher means more likely fake.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let h = self.embed(x)?;
        let logits = self.fcls.apply(&self.params, &h)?;
        Ok(logits.data().iter().map(|&l| crate::diffcore::sigmoid(l)).collect())
    }

    /// Decoder reconstructions `(f_0(Enc(x)), f_1(Enc(x)))`.
    pub fn reconstruct(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (Some(f0), Some(f1)) = (&self.f0, &self.f1) else {
            return Err(Error::Config(format!("mode {} has no decoders", self.mode)));
        };
        let h = self.embed(x)?;
        Ok((f0.apply(&self.params, &h)?, f1.apply(&self.params, &h)?))
    }

    /// Semantic-classifier probability for each row of `x`.
    pub fn semantic_score(&self, x: &Tensor) -> Result<Vec<f64>> {
        let Some(fsc) = &self.fsc else {
            return Err(Error::Config(format!("mode {} has no semantic classifier", self.mode)));
        };
        self.check_input(x)?;
        let logits = fsc.apply(&self.params, x)?;
        Ok(logits.data().iter().map(|&l| crate::diffcore::sigmoid(l)).collect())
    }

    /// Mean of `σ(f_SC(f_1(Enc(x)))) − σ(f_SC(f_0(Enc(x))))`.
    pub fn branch_gap(&self, x: &Tensor) -> Result<f64> {
        let (r0, r1) = self.reconstruct(x)?;
        let s0 = self.semantic_score(&r0)?;
        let s1 = self.semantic_score(&r1)?;
        let n = s0.len() as f64;
        Ok(s1.iter().zip(&s0).map(|(a, b)| a - b).sum::<f64>() / n)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            format: MODEL_FORMAT.to_string(),
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Data(format!("unsupported model format `{}`", file.format)));
        }
        let m = file.model;
        let mut expect = ParamSet::new();
        for mlp in [Some(&m.enc), m.f0.as_ref(), m.f1.as_ref(), m.fsc.as_ref(), Some(&m.fcls)]
            .into_iter()
            .flatten()
        {
            mlp.init(&mut expect, 0, 0)?;
        }
        for (name, t) in expect.iter() {
            match m.params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                _ => return Err(Error::Data(format!("model file missing or misshapen parameter `{name}`"))),
            }
        }
        if expect.len() != m.params.len() {
            return Err(Error::Data("model file has unexpected parameters".into()));
        }
        Ok(m)
    }
}

const MODEL_FORMAT: &str = "intele-model/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    model: InTeLeModel,
}
