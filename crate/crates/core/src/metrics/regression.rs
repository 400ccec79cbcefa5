//! Simple OLS and the sample-size versus quality regression.

use std::ops::RangeInclusive;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::agreement::{f1_score, ConfusionCounts, ExpertLabelSet};
use super::special::f_survival;
use super::{krippendorff_alpha, MetricsError};
use crate::aggregation::VoteMatrix;
use crate::model::OlsReport;

/// Redraws allowed per sample when quality is undefined on the subset.
pub const MAX_REDRAWS: usize = 10;

/// Fits `y = intercept + slope * x` by least squares.
///
/// R² is 0 when `y` is constant. The F statistic tests the slope on
/// `(1, n - 2)` degrees of freedom; its p-value comes from the exact F tail.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<OlsReport, MetricsError> {
    let n = xs.len();
    if n != ys.len() {
        return Err(MetricsError::Input("x and y lengths differ".into()));
    }
    if n < 3 {
        return Err(MetricsError::Input(format!("OLS needs at least 3 points, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(MetricsError::Input("all x values are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sst: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let df = nf - 2.0;
    let r_squared = if sst == 0.0 { 0.0 } else { (1.0 - sse / sst).clamp(0.0, 1.0) };
    let ssr = sst - sse;
    let (f_statistic, p_value) = if sst == 0.0 {
        (0.0, 1.0)
    } else if sse <= f64::EPSILON * sst {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ssr.max(0.0)) / (sse / df);
        (f, f_survival(f, 1.0, df))
    };
    let slope_std_error = (sse / df / sxx).sqrt();
    let t_statistic = if slope_std_error == 0.0 {
        if slope == 0.0 { 0.0 } else { f64::INFINITY.copysign(slope) }
    } else {
        slope / slope_std_error
    };
    Ok(OlsReport {
        slope,
        intercept,
        slope_std_error,
        t_statistic,
        r_squared,
        adjusted_r_squared: 1.0 - (1.0 - r_squared) * (nf - 1.0) / df,
        f_statistic,
        p_value,
        n_observations: n,
    })
}

/// Quality measured on a subset of annotations.
#[derive(Debug, Clone, Copy)]
pub enum QualityFn<'a> {
    /// Krippendorff's alpha of the subset.
    Alpha,
    /// F1 of the subset's individual labels against expert labels.
    F1 { experts: &'a ExpertLabelSet },
}

impl QualityFn<'_> {
    pub fn evaluate(&self, matrix: &VoteMatrix) -> Result<f64, MetricsError> {
        match self {
            QualityFn::Alpha => krippendorff_alpha(matrix).map(|a| a.value),
            QualityFn::F1 { experts } => {
                let mut counts = ConfusionCounts::default();
                for (u, _, label) in matrix.cells() {
                    if let Some(&truth) = experts.labels.get(&matrix.units()[u]) {
                        counts.add(label, truth);
                    }
                }
                f1_score(&counts)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeQualityRegression {
    pub report: OlsReport,
    /// `(subset size, quality)` per sample, in draw order.
    pub points: Vec<(usize, f64)>,
}

impl SizeQualityRegression {
    /// Two-column CSV for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,quality\n");
        for (size, q) in &self.points {
            out.push_str(&format!("{size},{q}\n"));
        }
        out
    }
}

/// Draws `n_samples` random annotation subsets with sizes uniform in
/// `size_range` (clamped to the number of cells), measures `quality` on each
/// and regresses quality on size. A subset where quality is undefined is
/// redrawn up to [`MAX_REDRAWS`] times.
pub fn size_quality_regression<R: Rng + ?Sized>(
    matrix: &VoteMatrix,
    quality: QualityFn<'_>,
    n_samples: usize,
    size_range: RangeInclusive<usize>,
    rng: &mut R,
) -> Result<SizeQualityRegression, MetricsError> {
    if n_samples < 10 {
        return Err(MetricsError::Input(format!("need at least 10 samples, got {n_samples}")));
    }
    let cells: Vec<(usize, usize)> = matrix.cells().map(|(u, a, _)| (u, a)).collect();
    let hi = (*size_range.end()).min(cells.len());
    let lo = (*size_range.start()).max(1);
    if lo > hi {
        return Err(MetricsError::Input(format!(
            "size range {lo}..={hi} is empty for {} annotations",
            cells.len()
        )));
    }
    quality.evaluate(matrix)?;

    let mut points = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut attempt = 0;
        loop {
            let size = rng.random_range(lo..=hi);
            let picked = sample(rng, cells.len(), size);
            let subset = matrix.with_cells(picked.iter().map(|i| cells[i]));
            match quality.evaluate(&subset) {
                Ok(q) => {
                    points.push((size, q));
                    break;
                }
                Err(_) if attempt < MAX_REDRAWS => attempt += 1,
                Err(e) => return Err(MetricsError::QualityUndefined(e.to_string())),
            }
        }
    }
    let xs: Vec<f64> = points.iter().map(|(s, _)| *s as f64).collect();
    let ys: Vec<f64> = points.iter().map(|(_, q)| *q).collect();
    Ok(SizeQualityRegression {
        report: ols(&xs, &ys)?,
        points,
    })
}
