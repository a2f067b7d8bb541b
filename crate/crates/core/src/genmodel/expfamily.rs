use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::serde_util::nonfinite;

/// Number of sufficient statistics per latent dimension for the Gaussian family.
pub const K_Z: usize = 2;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Class-conditional latent prior: independent Gaussians per dimension,
/// with sufficient statistics `T(z_i) = (z_i, z_i²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpFamilySpec {
    d_z: usize,
    /// `means[y][i]`
    means: Vec<Vec<f64>>,
    /// `variances[y][i]`, all strictly positive
    variances: Vec<Vec<f64>>,
}

impl ExpFamilySpec {
    pub fn new(means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let d_z = means.first().map_or(0, Vec::len);
        if d_z == 0 || means.is_empty() {
            return Err(Error::Config("latent spec needs at least one class and one dimension".into()));
        }
        if variances.len() != means.len()
            || means.iter().chain(&variances).any(|row| row.len() != d_z)
        {
            return Err(Error::Config(format!(
                "latent means and variances must both be {} x {d_z}",
                means.len()
            )));
        }
        for (y, row) in variances.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Config(format!("variance[{y}][{i}] = {v} must be > 0")));
                }
            }
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::Config("latent means must be finite".into()));
        }
        Ok(Self { d_z, means, variances })
    }

    /// Builds the spec from natural parameters laid out like [`Self::natural_params`].
    pub fn from_natural(d_z: usize, gammas: &[Vec<f64>]) -> Result<Self> {
        let mut means = Vec::with_capacity(gammas.len());
        let mut variances = Vec::with_capacity(gammas.len());
        for g in gammas {
            if g.len() != K_Z * d_z {
                return Err(Error::Config(format!(
                    "natural parameter vector must have {} entries",
                    K_Z * d_z
                )));
            }
            let (lin, quad) = g.split_at(d_z);
            if quad.iter().any(|&q| !(q < 0.0)) {
                return Err(Error::Config("second natural parameter must be < 0".into()));
            }
            variances.push(quad.iter().map(|q| -0.5 / q).collect::<Vec<_>>());
            means.push(lin.iter().zip(quad).map(|(l, q)| -l / (2.0 * q)).collect());
        }
        Self::new(means, variances)
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self, y: usize) -> &[f64] {
        &self.means[y]
    }

    pub fn variance(&self, y: usize) -> &[f64] {
        &self.variances[y]
    }

    /// `Γ_y` flattened as `(μ_i/σ²_i for all i, −1/(2σ²_i) for all i)`,
    /// the same layout as the sufficient-statistic rows `(z, z²)`.
    pub fn natural_params(&self, y: usize) -> Vec<f64> {
        let (mu, var) = (&self.means[y], &self.variances[y]);
        let lin = mu.iter().zip(var).map(|(m, v)| m / v);
        let quad = var.iter().map(|v| -0.5 / v);
        lin.chain(quad).collect()
    }

    /// Log normaliser `A_{y,i}` in natural form.
    pub fn log_normalizer(&self, y: usize, i: usize) -> f64 {
        let g = self.natural_params(y);
        let (lin, quad) = (g[i], g[self.d_z + i]);
        -lin * lin / (4.0 * quad) - 0.5 * (-2.0 * quad).ln()
    }

    /// `log p(z|y)` through `⟨T(z), Γ_y⟩ + ∑B(z_i) − ∑A_{y,i}`.
    pub fn log_density_natural(&self, z: &[f64], y: usize) -> f64 {
        let g = self.natural_params(y);
        (0..self.d_z)
            .map(|i| {
                let base = -0.5 * LN_2PI;
                z[i] * g[i] + z[i] * z[i] * g[self.d_z + i] + base - self.log_normalizer(y, i)
            })
            .sum()
    }

    /// `log p(z|y)` from means and variances directly.
    pub fn log_density(&self, z: &[f64], y: usize) -> f64 {
        z.iter()
            .zip(self.means[y].iter().zip(&self.variances[y]))
            .map(|(&zi, (&m, &v))| -0.5 * (LN_2PI + v.ln()) - (zi - m) * (zi - m) / (2.0 * v))
            .sum()
    }
}

/// Outcome of checking the natural-parameter diversity condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionBReport {
    pub satisfied: bool,
    #[serde(with = "nonfinite")]
    pub condition_number: f64,
    pub m_required: usize,
    pub m_available: usize,
    pub reason: Option<String>,
}

/// Condition numbers at or above this count as singular.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Checks that classes `1..=k_z·d_z` have natural parameters whose
/// differences from class 0 form an invertible matrix.
pub fn check_condition_b(spec: &ExpFamilySpec) -> ConditionBReport {
    let dim = K_Z * spec.d_z();
    let m_required = dim + 1;
    let m_available = spec.classes();
    if m_available < m_required {
        return ConditionBReport {
            satisfied: false,
            condition_number: f64::INFINITY,
            m_required,
            m_available,
            reason: Some("insufficient classes".into()),
        };
    }
    let base = spec.natural_params(0);
    let mut mat = DMatrix::zeros(dim, dim);
    for k in 1..m_required {
        let g = spec.natural_params(k);
        for r in 0..dim {
            mat[(r, k - 1)] = g[r] - base[r];
        }
    }
    let condition_number = linalg::condition_number(&mat);
    let satisfied = condition_number < CONDITION_LIMIT;
    ConditionBReport {
        satisfied,
        condition_number,
        m_required,
        m_available,
        reason: (!satisfied).then(|| "natural-parameter differences are singular".into()),
    }
}
