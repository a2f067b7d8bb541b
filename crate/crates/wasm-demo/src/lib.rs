//! Browser bindings. Every export takes plain numbers or JSON text and
//! returns JSON text, so the page needs no extra glue.

use intele_core::evalkit::{auc_mann_whitney, roc_points, RocCurve, ScoredSet};
use intele_core::genmodel::{check_condition_b, ExpFamilySpec, GenModelParams, GeneratorConfig, Regime};
use intele_core::intele::{train, HyperParams, InTeLeModel, Mode, ModelConfig};
use intele_core::rng::tags;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(js_err)
}

fn world(kappa: f64, separation: f64, seed: u64) -> Result<GenModelParams, JsValue> {
    let cfg = GeneratorConfig {
        seed,
        kappa,
        means: Some(vec![vec![-separation; 2], vec![separation; 2]]),
        variances: Some(vec![vec![1.0; 2]; 2]),
        ..Default::default()
    };
    GenModelParams::from_config(&cfg).map_err(js_err)
}

#[derive(Serialize)]
struct ScatterPoint {
    y: u8,
    /// Bayes log-odds of the fake class given the latent texture.
    texture: f64,
    /// Projection of x on the fake-class artifact direction.
    artifact: f64,
}

#[derive(Serialize)]
struct Scatter {
    pl: Vec<ScatterPoint>,
    ph: Vec<ScatterPoint>,
}

/// Paired P^L / P^H samples summarised by their texture and artifact coordinates.
#[wasm_bindgen]
pub fn sample_scatter(kappa: f64, separation: f64, n: usize, seed: u64) -> Result<String, JsValue> {
    let g = world(kappa, separation, seed)?;
    let dir = g.artifact.pattern(1).to_vec();
    let points = |regime| {
        g.sample_dataset(n, regime, tags::TEST)
            .samples()
            .iter()
            .map(|s| {
                let post = g.bayes_posterior(&s.z_true);
                ScatterPoint {
                    y: s.binary_y(),
                    texture: (post[1] / post[0]).ln(),
                    artifact: s.x.iter().zip(&dir).map(|(a, b)| a * b).sum(),
                }
            })
            .collect()
    };
    to_json(&Scatter { pl: points(Regime::PL), ph: points(Regime::PH) })
}

#[derive(Serialize)]
struct ModeResult {
    mode: Mode,
    auc_pl: f64,
    auc_ph: f64,
    roc_ph: RocCurve,
    branch_gap: Option<f64>,
}

/// Trains the CE baseline and the full model on a small artifact-bearing set
/// and scores both on artifact-free test data.
#[wasm_bindgen]
pub fn train_compare(kappa: f64, separation: f64, epochs: usize, n_train: usize, seed: u64) -> Result<String, JsValue> {
    let g = world(kappa, separation, seed)?;
    let train_set = g.sample_dataset(n_train, Regime::PL, tags::TRAIN);
    let test_pl = g.sample_dataset(500, Regime::PL, tags::TEST);
    let test_ph = g.sample_dataset(500, Regime::PH, tags::TEST);
    let model_cfg = ModelConfig { d_h: 3, ..Default::default() };
    let mut out = Vec::new();
    for mode in [Mode::CeBaseline, Mode::Intele] {
        let hp = HyperParams { mode, seed, epochs, ..Default::default() };
        let model = InTeLeModel::new(g.d_x(), &model_cfg, mode, seed).map_err(js_err)?;
        let (model, _) = train(model, &train_set, &hp).map_err(js_err)?;
        let score = |ds: &intele_core::genmodel::Dataset| -> Result<ScoredSet, JsValue> {
            let p = model.predict(&ds.x_matrix()).map_err(js_err)?;
            ScoredSet::new(p, ds.binary_labels()).map_err(js_err)
        };
        let (pl, ph) = (score(&test_pl)?, score(&test_ph)?);
        out.push(ModeResult {
            mode,
            auc_pl: auc_mann_whitney(&pl).map_err(js_err)?,
            auc_ph: auc_mann_whitney(&ph).map_err(js_err)?,
            roc_ph: roc_points(&ph).map_err(js_err)?,
            branch_gap: if mode.has_fsc() {
                Some(model.branch_gap(&test_pl.x_matrix()).map_err(js_err)?)
            } else {
                None
            },
        });
    }
    to_json(&out)
}

/// Checks the natural-parameter diversity condition for class moments given
/// as JSON `{"means": [[..], ..], "variances": [[..], ..]}`.
#[wasm_bindgen]
pub fn condition_b(moments_json: &str) -> Result<String, JsValue> {
    #[derive(serde::Deserialize)]
    struct Moments {
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    }
    let m: Moments = serde_json::from_str(moments_json).map_err(js_err)?;
    let spec = ExpFamilySpec::new(m.means, m.variances).map_err(js_err)?;
    to_json(&check_condition_b(&spec))
}
