//! ROC, AUC, accuracy and precision.
//!
//! AUC is computed two independent ways: by exhaustive pair counting
//! (Mann–Whitney, ties get half credit) and by trapezoidal integration of
//! the ROC curve. The two agree to rounding error on any input.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores paired with binary labels (1 = fake / positive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Data("scores must not be NaN".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.labels.len() - pos)
    }

    /// Same labels, scores passed through `f`.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            scores: self.scores.iter().map(|&s| f(s)).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// `P(score_pos > score_neg) + ½·P(tie)` by counting every pair.
pub fn auc_mann_whitney(s: &ScoredSet) -> Result<f64> {
    let (n_pos, n_neg) = s.class_counts();
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined);
    }
    let (pos, neg): (Vec<_>, Vec<_>) = s.scores.iter().zip(&s.labels).partition(|(_, &l)| l == 1);
    // doubled counts keep the tie half-credit exact in integers
    let mut twice: u64 = 0;
    for (p, _) in &pos {
        for (n, _) in &neg {
            twice += match p.partial_cmp(n) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    Ok(twice as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// `(fpr, tpr)` points from threshold `+∞` down to `−∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// Two-column `fpr,tpr` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            let _ = writeln!(out, "{f:.16e},{t:.16e}");
        }
        out
    }
}

/// Sweeps each distinct score as a threshold, highest first.
pub fn roc_points(s: &ScoredSet) -> Result<RocCurve> {
    let (n_pos, n_neg) = s.class_counts();
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined);
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.scores[b].total_cmp(&s.scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = s.scores[order[i]];
        while i < order.len() && s.scores[order[i]] == threshold {
            if s.labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(RocCurve { points })
}

/// Trapezoidal area under the curve.
pub fn auc_trapezoid(c: &RocCurve) -> f64 {
    c.points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPrecision {
    pub accuracy: f64,
    /// `None` when nothing is predicted positive.
    pub precision: Option<f64>,
}

/// Predicts positive when `score >= threshold`.
pub fn accuracy_precision(s: &ScoredSet, threshold: f64) -> AccuracyPrecision {
    let (mut tp, mut fp, mut correct) = (0usize, 0usize, 0usize);
    for (&score, &label) in s.scores.iter().zip(&s.labels) {
        let pred = u8::from(score >= threshold);
        if pred == label {
            correct += 1;
        }
        if pred == 1 {
            if label == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let accuracy = if s.is_empty() { 0.0 } else { correct as f64 / s.len() as f64 };
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    AccuracyPrecision { accuracy, precision }
}

/// Classification summary for one scored dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub auc_mann_whitney: f64,
    pub auc_trapezoid: f64,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub threshold: f64,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn metrics_report(s: &ScoredSet) -> Result<(MetricsReport, RocCurve)> {
    let roc = roc_points(s)?;
    let ap = accuracy_precision(s, DEFAULT_THRESHOLD);
    Ok((
        MetricsReport {
            n: s.len(),
            auc_mann_whitney: auc_mann_whitney(s)?,
            auc_trapezoid: auc_trapezoid(&roc),
            accuracy: ap.accuracy,
            precision: ap.precision,
            threshold: DEFAULT_THRESHOLD,
        },
        roc,
    ))
}

/// SVG plot with axes, a chance diagonal and one polyline per curve.
pub fn roc_svg(curves: &[(&str, &RocCurve)]) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let full = SIZE + 2.0 * PAD;
    let px = |f: f64| PAD + f * SIZE;
    let py = |t: f64| PAD + (1.0 - t) * SIZE;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}">"#
    );
    let _ = writeln!(svg, r#"  <rect x="0" y="0" width="{full}" height="{full}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"  <line x1="{a}" y1="{b}" x2="{c}" y2="{b}" stroke="black"/>"#,
        a = px(0.0),
        b = py(0.0),
        c = px(1.0)
    );
    let _ = writeln!(
        svg,
        r#"  <line x1="{a}" y1="{b}" x2="{a}" y2="{c}" stroke="black"/>"#,
        a = px(0.0),
        b = py(0.0),
        c = py(1.0)
    );
    let _ = writeln!(
        svg,
        r##"  <line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{}" font-size="11" text-anchor="middle">{v:.2}</text>"#,
            px(v),
            py(0.0) + 16.0
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{}" font-size="11" text-anchor="end">{v:.2}</text>"#,
            px(0.0) - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"  <text x="{}" y="{}" font-size="13" text-anchor="middle">false positive rate</text>"#,
        px(0.5),
        full - 10.0
    );
    let _ = writeln!(
        svg,
        r#"  <text x="14" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {})">true positive rate</text>"#,
        py(0.5),
        py(0.5)
    );
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|(f, t)| format!("{:.3},{:.3}", px(*f), py(*t)))
            .collect();
        let _ = writeln!(
            svg,
            r#"  <polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            px(0.55),
            py(0.15) + 16.0 * i as f64,
            xml_escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
