//! Affine identifiability check.
//!
//! The true sufficient statistics `T(z) = (z, z²)` are regressed on a
//! learned representation by ordinary least squares with an intercept.
//! High R² on held-out rows means the representation determines `T(z)` up
//! to an affine map.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::linalg;
use crate::genmodel::{check_condition_b, ConditionBReport, Dataset, GenModelParams, Regime};
use crate::intele::{train, HyperParams, InTeLeModel, ModelConfig};
use crate::rng::tags;
use crate::serde_util::nonfinite;

/// Rows `(z_1..z_d, z_1²..z_d²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuffStatMatrix(pub Tensor);

pub fn suffstats(z: &Tensor) -> SuffStatMatrix {
    let (n, d) = z.dims2();
    let mut data = Vec::with_capacity(n * 2 * d);
    for i in 0..n {
        let row = z.row(i);
        data.extend_from_slice(row);
        data.extend(row.iter().map(|v| v * v));
    }
    SuffStatMatrix(Tensor::new(vec![n, 2 * d], data).expect("non-empty latent matrix"))
}

fn to_matrix(t: &Tensor) -> DMatrix<f64> {
    let (r, c) = t.dims2();
    DMatrix::from_row_slice(r, c, t.data())
}

/// Fitted map `target ≈ A·source + b` with in-sample diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFitReport {
    /// `q × p`, one row per target column.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub r2: Vec<f64>,
    pub mean_r2: f64,
    pub weak_mcc: f64,
    pub design_rank: usize,
    /// Set when `[source, 1]` is rank deficient and the minimum-norm solution was used.
    pub min_norm_fallback: bool,
    pub a_rank: usize,
    #[serde(with = "nonfinite")]
    pub a_condition: f64,
}

/// Scores of a fixed affine map on some rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitScores {
    pub r2: Vec<f64>,
    pub mean_r2: f64,
    pub weak_mcc: f64,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn r_squared(actual: &[f64], fitted: &[f64]) -> f64 {
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = actual.iter().zip(fitted).map(|(a, f)| (a - f) * (a - f)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

impl AffineFitReport {
    /// Applies `A·s + b` to every row of `source`.
    pub fn predict(&self, source: &Tensor) -> Result<Tensor> {
        let (n, p) = source.dims2();
        let q = self.b.len();
        if self.a.first().map_or(0, Vec::len) != p {
            return Err(Error::Shape {
                op: "affine predict",
                left: source.shape().to_vec(),
                right: vec![q, self.a.first().map_or(0, Vec::len)],
            });
        }
        let mut out = Vec::with_capacity(n * q);
        for i in 0..n {
            let s = source.row(i);
            for (row, b) in self.a.iter().zip(&self.b) {
                out.push(row.iter().zip(s).map(|(w, v)| w * v).sum::<f64>() + b);
            }
        }
        Tensor::new(vec![n, q], out)
    }

    /// R² and weak MCC of this map on other rows.
    pub fn score(&self, source: &Tensor, target: &Tensor) -> Result<FitScores> {
        let fitted = self.predict(source)?;
        score_columns(target, &fitted)
    }
}

fn column(t: &Tensor, j: usize) -> Vec<f64> {
    let (n, _) = t.dims2();
    (0..n).map(|i| t.row(i)[j]).collect()
}

fn score_columns(target: &Tensor, fitted: &Tensor) -> Result<FitScores> {
    target.same_shape(fitted, "score")?;
    let (_, q) = target.dims2();
    let mut r2 = Vec::with_capacity(q);
    let mut mcc = 0.0;
    for j in 0..q {
        let (t, f) = (column(target, j), column(fitted, j));
        r2.push(r_squared(&t, &f));
        mcc += pearson(&t, &f).abs();
    }
    let mean_r2 = r2.iter().sum::<f64>() / q as f64;
    Ok(FitScores {
        r2,
        mean_r2,
        weak_mcc: mcc / q as f64,
    })
}

/// Least squares of every target column on `[source, 1]`.
///
/// Solved by Householder QR; if the design is rank deficient the
/// minimum-norm solution from an SVD is used instead and flagged.
pub fn fit_affine(source: &Tensor, target: &Tensor) -> Result<AffineFitReport> {
    let (n, p) = source.dims2();
    let (n2, q) = target.dims2();
    if n != n2 {
        return Err(Error::Shape {
            op: "fit_affine",
            left: source.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    if n <= p + 1 {
        return Err(Error::Data(format!("fit_affine needs more than {} rows, got {n}", p + 1)));
    }
    let mut design = DMatrix::from_element(n, p + 1, 1.0);
    design.view_mut((0, 0), (n, p)).copy_from(&to_matrix(source));
    let y = to_matrix(target);

    let sv = linalg::singular_values(&design);
    let tol = linalg::rank_tolerance(&sv, n, p + 1);
    let design_rank = sv.iter().filter(|&&s| s > tol).count();
    let min_norm_fallback = design_rank < p + 1;

    let coef = if min_norm_fallback {
        linalg::min_norm_solve(&design, &y, tol)
    } else {
        let qr = design.qr();
        let qty = qr.q().transpose() * &y;
        qr.r()
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::Data("singular triangular factor".into()))?
    };

    let a: Vec<Vec<f64>> = (0..q).map(|j| (0..p).map(|i| coef[(i, j)]).collect()).collect();
    let b: Vec<f64> = (0..q).map(|j| coef[(p, j)]).collect();

    let a_mat = DMatrix::from_fn(q, p, |r, c| a[r][c]);
    let a_sv = linalg::singular_values(&a_mat);
    let a_tol = linalg::rank_tolerance(&a_sv, q, p);
    let a_rank = a_sv.iter().filter(|&&s| s > a_tol).count();
    let a_condition = if a_rank == q.min(p) && a_rank > 0 {
        a_sv[0] / a_sv[a_rank - 1]
    } else {
        f64::INFINITY
    };

    let mut report = AffineFitReport {
        a,
        b,
        r2: Vec::new(),
        mean_r2: 0.0,
        weak_mcc: 0.0,
        design_rank,
        min_norm_fallback,
        a_rank,
        a_condition,
    };
    let scores = report.score(source, target)?;
    report.r2 = scores.r2;
    report.mean_r2 = scores.mean_r2;
    report.weak_mcc = scores.weak_mcc;
    Ok(report)
}

/// What to regress the true statistics on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// The trained encoder's embedding.
    Encoder,
    /// `suffstats(z_true)` itself; an upper-bound sanity check.
    Oracle,
}

/// Result of one identifiability run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentReport {
    pub source: SourceKind,
    pub condition_b: ConditionBReport,
    /// Fit on the first 80% of the held-out test set.
    pub fit: AffineFitReport,
    /// The same map scored on the remaining 20%.
    pub heldout: FitScores,
    pub final_train_accuracy: Option<f64>,
    pub n_fit: usize,
    pub n_heldout: usize,
}

/// Samples `PL` train/test sets, trains the model (unless `source` is the
/// oracle) and fits `suffstats(z_true)` from the representation of the
/// test set. Condition (b) is reported whether or not it holds.
pub fn identifiability_experiment(
    gen: &GenModelParams,
    model_cfg: &ModelConfig,
    hp: &HyperParams,
    n_train: usize,
    n_test: usize,
    source: SourceKind,
) -> Result<IdentReport> {
    let condition_b = check_condition_b(&gen.latent);
    let test = gen.sample_dataset(n_test, Regime::PL, tags::TEST);

    let (features, final_train_accuracy) = match source {
        SourceKind::Oracle => (suffstats(&test.z_matrix()).0, None),
        SourceKind::Encoder => {
            let train_set = gen.sample_dataset(n_train, Regime::PL, tags::TRAIN);
            let model = InTeLeModel::new(gen.d_x(), model_cfg, hp.mode, hp.seed)?;
            let (model, log) = train(model, &train_set, hp)?;
            let acc = log.records.last().map(|r| r.train_accuracy);
            (model.embed(&test.x_matrix())?, acc)
        }
    };
    heldout_fit(&features, &test, source, condition_b, final_train_accuracy)
}

/// Fits on the first 80% of rows and scores on the rest.
pub fn heldout_fit(
    features: &Tensor,
    test: &Dataset,
    source: SourceKind,
    condition_b: ConditionBReport,
    final_train_accuracy: Option<f64>,
) -> Result<IdentReport> {
    let n = test.len();
    let n_fit = n * 4 / 5;
    let fit_idx: Vec<usize> = (0..n_fit).collect();
    let hold_idx: Vec<usize> = (n_fit..n).collect();
    let stats = suffstats(&test.z_matrix()).0;
    let fit = fit_affine(&features.gather_rows(&fit_idx), &stats.gather_rows(&fit_idx))?;
    let heldout = fit.score(&features.gather_rows(&hold_idx), &stats.gather_rows(&hold_idx))?;
    Ok(IdentReport {
        source,
        condition_b,
        fit,
        heldout,
        final_train_accuracy,
        n_fit,
        n_heldout: n - n_fit,
    })
}
