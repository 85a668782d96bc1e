//! Comparison reports over one or more error curves: per-pipeline slopes and
//! cluster-then-predict versus multi-objective gaps.

use mixcal_core::pipeline::PipelineKind;

use crate::slope::{fit_rate_slope, SlopeFit};
use crate::sweep::{ErrorCurve, Metric};
use crate::HarnessError;

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    /// Minimum required ctp-vs-mo slope gap; gap rows are flagged against it
    /// and the report fails when any flagged row misses it.
    pub min_gap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SlopeRow {
    pub model_id: String,
    pub pipeline: PipelineKind,
    pub metric: Metric,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone)]
pub struct GapRow {
    pub model_id: String,
    pub metric: Metric,
    pub ctp: PipelineKind,
    pub mo: PipelineKind,
    pub gap: f64,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub slopes: Vec<SlopeRow>,
    pub gaps: Vec<GapRow>,
    pub pass: bool,
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("model            pipeline   metric   slope    stderr   points\n");
        for s in &self.slopes {
            out.push_str(&format!(
                "{:<16} {:<10} {:<8} {:>7.4}  {:>7.4}  {:>6}\n",
                s.model_id,
                s.pipeline.as_str(),
                s.metric.to_string(),
                s.fit.slope,
                s.fit.stderr,
                s.fit.n_points
            ));
        }
        if !self.gaps.is_empty() {
            out.push('\n');
            out.push_str("model            metric   ctp-mo gap  flag\n");
            for g in &self.gaps {
                let flag = match g.pass {
                    Some(true) => "pass",
                    Some(false) => "FAIL",
                    None => "-",
                };
                out.push_str(&format!(
                    "{:<16} {:<8} {:>10.4}  {flag}\n",
                    g.model_id,
                    g.metric.to_string(),
                    g.gap
                ));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,model,pipeline,metric,value,stderr,flag\n");
        for s in &self.slopes {
            out.push_str(&format!(
                "slope,{},{},{},{},{},\n",
                s.model_id, s.pipeline, s.metric, s.fit.slope, s.fit.stderr
            ));
        }
        for g in &self.gaps {
            let flag = match g.pass {
                Some(true) => "pass",
                Some(false) => "fail",
                None => "",
            };
            out.push_str(&format!(
                "gap,{},{}-vs-{},{},{},,{flag}\n",
                g.model_id, g.ctp, g.mo, g.metric, g.gap
            ));
        }
        out
    }
}

/// Join curves, fit slopes per (model, pipeline), and emit ctp-vs-mo gap rows
/// for matching error modes.
pub fn report(curves: &[ErrorCurve], opts: &ReportOptions) -> Result<Report, HarnessError> {
    if curves.is_empty() {
        return Err(HarnessError::Usage("no curve files given".into()));
    }
    let mut joined = ErrorCurve::default();
    let mut schema: Option<String> = None;
    for c in curves {
        for r in &c.rows {
            match &schema {
                None => schema = Some(r.schema.clone()),
                Some(s) if *s == r.schema => {}
                Some(s) => {
                    return Err(HarnessError::SchemaMismatch(format!(
                        "curve schemas {s} and {} cannot be joined",
                        r.schema
                    )))
                }
            }
            joined.rows.push(r.clone());
        }
    }

    let mut keys: Vec<(String, PipelineKind)> = joined
        .rows
        .iter()
        .map(|r| (r.model_id.clone(), r.pipeline))
        .collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.as_str().cmp(b.1.as_str())));
    keys.dedup();

    let mut slopes = Vec::new();
    for (model_id, pipeline) in &keys {
        for metric in [Metric::Dce, Metric::Lce, Metric::Mce] {
            if let Ok(fit) = fit_rate_slope(&joined, Some(model_id), *pipeline, metric) {
                slopes.push(SlopeRow {
                    model_id: model_id.clone(),
                    pipeline: *pipeline,
                    metric,
                    fit,
                });
            }
        }
    }

    let slope_of = |model: &str, pipeline: PipelineKind, metric: Metric| {
        slopes
            .iter()
            .find(|s| s.model_id == model && s.pipeline == pipeline && s.metric == metric)
            .map(|s| s.fit.slope)
    };
    let mut gaps = Vec::new();
    let mut models: Vec<String> = keys.iter().map(|k| k.0.clone()).collect();
    models.dedup();
    for model in &models {
        for (ctp, mo, metric) in [
            (PipelineKind::CtpDce, PipelineKind::MoDce, Metric::Dce),
            (PipelineKind::CtpLce, PipelineKind::MoLce, Metric::Lce),
        ] {
            if let (Some(a), Some(b)) = (slope_of(model, ctp, metric), slope_of(model, mo, metric))
            {
                let gap = a - b;
                gaps.push(GapRow {
                    model_id: model.clone(),
                    metric,
                    ctp,
                    mo,
                    gap,
                    pass: opts.min_gap.map(|m| gap >= m),
                });
            }
        }
    }

    let pass = gaps.iter().all(|g| g.pass != Some(false));
    Ok(Report { slopes, gaps, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{CurveRow, CURVE_SCHEMA};

    fn curve_for(pipeline: PipelineKind, exponent: f64) -> ErrorCurve {
        let rows = [4096usize, 16384, 65536]
            .iter()
            .flat_map(|&t| {
                (0..5u64).map(move |seed| CurveRow {
                    schema: CURVE_SCHEMA.into(),
                    model_id: "m0".into(),
                    pipeline,
                    t,
                    seed,
                    status: "ok".into(),
                    dce: Some(1.3 * (t as f64).powf(exponent)),
                    lce: Some(1.1 * (t as f64).powf(exponent)),
                    mce: None,
                    tprime: Some(0),
                    cover_size: None,
                    wall_ms: 1,
                })
            })
            .collect();
        ErrorCurve { rows }
    }

    #[test]
    fn gap_rows_flag_against_threshold() {
        let ctp = curve_for(PipelineKind::CtpDce, 0.67);
        let mo = curve_for(PipelineKind::MoDce, 0.52);
        let rep = report(
            &[ctp, mo],
            &ReportOptions {
                min_gap: Some(0.05),
            },
        )
        .unwrap();
        assert_eq!(rep.gaps.len(), 1);
        assert!(rep.gaps[0].pass.unwrap());
        assert!(rep.pass);
        assert!((rep.gaps[0].gap - 0.15).abs() < 1e-9);
    }

    #[test]
    fn single_curve_has_no_gap_rows() {
        let rep = report(&[curve_for(PipelineKind::CtpDce, 0.6)], &ReportOptions::default())
            .unwrap();
        assert!(rep.gaps.is_empty());
        assert!(!rep.slopes.is_empty());
        assert!(rep.pass);
    }

    #[test]
    fn empty_input_is_a_usage_error() {
        assert!(matches!(
            report(&[], &ReportOptions::default()),
            Err(HarnessError::Usage(_))
        ));
    }

    #[test]
    fn mixed_schemas_are_refused() {
        let a = curve_for(PipelineKind::CtpDce, 0.6);
        let mut b = curve_for(PipelineKind::MoDce, 0.5);
        for r in &mut b.rows {
            r.schema = "curve-v0".into();
        }
        assert!(matches!(
            report(&[a, b], &ReportOptions::default()),
            Err(HarnessError::SchemaMismatch(_))
        ));
    }
}
