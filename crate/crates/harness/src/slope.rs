//! Log-log rate-slope fits over median error curves.

use mixcal_core::pipeline::PipelineKind;

use crate::sweep::{ErrorCurve, Metric};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub n_points: usize,
}

/// Ordinary least squares of `log(median metric)` on `log T`. Zero medians
/// are excluded (their logs are undefined); fewer than 3 surviving points is
/// a failure.
pub fn fit_rate_slope(
    curve: &ErrorCurve,
    model_id: Option<&str>,
    pipeline: PipelineKind,
    metric: Metric,
) -> Result<SlopeFit, HarnessError> {
    let series = curve.median_series(model_id, pipeline, metric);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, m)| *m > 0.0 && m.is_finite())
        .map(|(t, m)| ((*t as f64).ln(), m.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(HarnessError::SlopeFit(format!(
            "only {} usable points for {pipeline}/{metric}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx <= 0.0 {
        return Err(HarnessError::SlopeFit("degenerate T grid".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let df = (pts.len() as f64 - 2.0).max(1.0);
    let stderr = (ss_res / df / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        n_points: pts.len(),
    })
}
