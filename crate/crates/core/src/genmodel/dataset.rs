use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// One draw `(x, z, y)`. `z_true` is kept for oracle checks only; training
/// code never reads it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub z_true: Vec<f64>,
    pub y: usize,
}

impl LabeledSample {
    pub fn new(x: Vec<f64>, z_true: Vec<f64>, y: usize) -> Self {
        Self { x, z_true, y }
    }

    /// 0 for pristine, 1 for any fake class.
    pub fn binary_y(&self) -> u8 {
        u8::from(self.y != 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    d_z: usize,
    d_x: usize,
}

/// Formats a float with 17 significant digits.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>, d_z: usize, d_x: usize) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != d_x || s.z_true.len() != d_z {
                return Err(Error::Data(format!(
                    "row {i}: expected d_x={d_x}, d_z={d_z}, got {} and {}",
                    s.x.len(),
                    s.z_true.len()
                )));
            }
        }
        Ok(Self { samples, d_z, d_x })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    /// Observations as an `[n × d_x]` matrix.
    pub fn x_matrix(&self) -> Tensor {
        let data = self.samples.iter().flat_map(|s| s.x.iter().copied()).collect();
        Tensor::new(vec![self.len(), self.d_x], data).expect("non-empty dataset")
    }

    /// True latents as an `[n × d_z]` matrix.
    pub fn z_matrix(&self) -> Tensor {
        let data = self.samples.iter().flat_map(|s| s.z_true.iter().copied()).collect();
        Tensor::new(vec![self.len(), self.d_z], data).expect("non-empty dataset")
    }

    pub fn binary_labels(&self) -> Vec<u8> {
        self.samples.iter().map(LabeledSample::binary_y).collect()
    }

    /// Subset by row index.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            d_z: self.d_z,
            d_x: self.d_x,
        }
    }

    /// CSV with header `y,z_0..,x_0..`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y");
        for i in 0..self.d_z {
            let _ = write!(out, ",z_{i}");
        }
        for i in 0..self.d_x {
            let _ = write!(out, ",x_{i}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{}", s.y);
            for v in s.z_true.iter().chain(&s.x) {
                out.push(',');
                out.push_str(&fmt17(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Data("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"y") {
            return Err(Error::Data("CSV header must start with `y`".into()));
        }
        let d_z = cols.iter().filter(|c| c.starts_with("z_")).count();
        let d_x = cols.iter().filter(|c| c.starts_with("x_")).count();
        let expected: Vec<String> = std::iter::once("y".to_string())
            .chain((0..d_z).map(|i| format!("z_{i}")))
            .chain((0..d_x).map(|i| format!("x_{i}")))
            .collect();
        if cols != expected {
            return Err(Error::Data(format!("unexpected CSV header `{header}`")));
        }
        let mut samples = Vec::new();
        for (row, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 1 + d_z + d_x {
                return Err(Error::Data(format!("row {row}: expected {} fields", 1 + d_z + d_x)));
            }
            let y = fields[0]
                .parse()
                .map_err(|e| Error::Data(format!("row {row}: bad label: {e}")))?;
            let nums = fields[1..]
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Data(format!("row {row}: {e}")))?;
            let (z, x) = nums.split_at(d_z);
            samples.push(LabeledSample::new(x.to_vec(), z.to_vec(), y));
        }
        Self::new(samples, d_z, d_x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_layout() {
        let ds = Dataset::new(vec![LabeledSample::new(vec![0.1, 0.2, 0.3], vec![1.0], 2)], 1, 3).unwrap();
        let csv = ds.to_csv();
        assert!(csv.starts_with("y,z_0,x_0,x_1,x_2\n2,"));
        let back = Dataset::from_csv(&csv).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.binary_labels(), vec![1]);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(Dataset::from_csv("").is_err());
        assert!(Dataset::from_csv("y,x_0\n0,abc\n").is_err());
        assert!(Dataset::from_csv("y,x_1\n0,1.0\n").is_err());
        assert!(Dataset::from_csv("y,z_0,x_0\n0,1.0\n").is_err());
    }
}
