//! Reproducible sweeps over (model, pipeline, T, seed) cells.
//!
//! Cells run concurrently but results are gathered in cell order and written
//! by a single writer, so the CSV bytes depend only on the spec: re-running a
//! sweep (or re-executing it from its manifest) reproduces every data column
//! bitwise. `wall_ms` is the one timing column and is excluded from that
//! contract.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mixcal_core::mixture::MixtureModel;
use mixcal_core::pipeline::{
    CandidateSettings, PipelineConfig, PipelineError, PipelineKind, TPrimePolicy,
    DEFAULT_COVER_BUDGET, DEFAULT_DELTA, DEFAULT_EM_ITERS,
};
use mixcal_core::util::derive_seed;
use mixcal_core::par;

use crate::models::separation_model;
use crate::HarnessError;

pub const SWEEP_SCHEMA: &str = "mixcal-sweep-v1";
pub const CURVE_SCHEMA: &str = "curve-v1";
pub const MANIFEST_SCHEMA: &str = "mixcal-manifest-v1";
pub const CURVE_HEADER: &str = "schema,model,pipeline,t,seed,status,dce,lce,mce,tprime,cover_size,wall_ms";

fn default_dim() -> usize {
    2
}
fn default_lambda() -> u32 {
    10
}
fn default_phase1() -> f64 {
    0.5
}
fn default_em_iters() -> usize {
    DEFAULT_EM_ITERS
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_schema() -> String {
    SWEEP_SCHEMA.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEntry {
    pub pipeline: PipelineKind,
    pub tprime: TPrimePolicy,
}

/// A sweep: one inline model or a separation grid, a pipeline list with
/// per-pipeline phase policies, a geometric T grid, and seeds per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default = "default_schema")]
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<MixtureModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separations: Option<Vec<f64>>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub pipelines: Vec<PipelineEntry>,
    pub t_grid: Vec<usize>,
    pub seeds: usize,
    pub seed_base: u64,
    #[serde(default = "default_lambda")]
    pub lambda: u32,
    #[serde(default = "default_phase1")]
    pub phase1_prediction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<CandidateSettings>,
    #[serde(default = "default_em_iters")]
    pub em_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdim_hint: Option<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub include_truth: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema != SWEEP_SCHEMA {
            return Err(HarnessError::SchemaMismatch(format!(
                "expected {SWEEP_SCHEMA}, got {}",
                self.schema
            )));
        }
        if self.t_grid.len() < 3 {
            return Err(HarnessError::Usage(
                "t_grid needs at least 3 values for slope fitting".into(),
            ));
        }
        if self.seeds < 5 {
            return Err(HarnessError::Usage(
                "need at least 5 seeds per cell for median curves".into(),
            ));
        }
        match (&self.model, &self.separations) {
            (Some(_), None) => Ok(()),
            (None, Some(seps)) if !seps.is_empty() => Ok(()),
            (None, Some(_)) => Err(HarnessError::Usage("empty separation grid".into())),
            (Some(_), Some(_)) => Err(HarnessError::Usage(
                "give either an inline model or a separation grid, not both".into(),
            )),
            (None, None) => Err(HarnessError::Usage(
                "give an inline model or a separation grid".into(),
            )),
        }
    }

    /// The model list the sweep runs over: `(id, model)` pairs.
    pub fn model_list(&self) -> Vec<(String, MixtureModel)> {
        if let Some(m) = &self.model {
            vec![("m0".to_string(), m.clone())]
        } else {
            self.separations
                .as_ref()
                .map(|seps| {
                    seps.iter()
                        .map(|g| (format!("gamma={g}"), separation_model(*g, self.dim)))
                        .collect()
                })
                .unwrap_or_default()
        }
    }

    pub fn sha256_hex(&self) -> String {
        let canonical = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            let _ = write!(out, "{b:02x}");
        }
        out
    }
}

/// One row of the error curve. Metric fields are empty on failure rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub schema: String,
    pub model_id: String,
    pub pipeline: PipelineKind,
    pub t: usize,
    pub seed: u64,
    pub status: String,
    pub dce: Option<f64>,
    pub lce: Option<f64>,
    pub mce: Option<f64>,
    pub tprime: Option<usize>,
    pub cover_size: Option<usize>,
    pub wall_ms: u64,
}

impl CurveRow {
    fn to_csv(&self) -> String {
        fn opt_f(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        fn opt_u(v: Option<usize>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.schema,
            self.model_id,
            self.pipeline,
            self.t,
            self.seed,
            self.status,
            opt_f(self.dce),
            opt_f(self.lce),
            opt_f(self.mce),
            opt_u(self.tprime),
            opt_u(self.cover_size),
            self.wall_ms
        )
    }

    fn from_csv(line: &str, line_no: usize) -> Result<Self, HarnessError> {
        let parse = |msg: &str| HarnessError::CsvParse {
            line: line_no,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(parse(&format!("expected 12 fields, got {}", fields.len())));
        }
        let opt_f = |s: &str| -> Result<Option<f64>, HarnessError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| parse("bad float"))
            }
        };
        let opt_u = |s: &str| -> Result<Option<usize>, HarnessError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| parse("bad integer"))
            }
        };
        Ok(CurveRow {
            schema: fields[0].to_string(),
            model_id: fields[1].to_string(),
            pipeline: fields[2].parse().map_err(|_| parse("bad pipeline"))?,
            t: fields[3].parse().map_err(|_| parse("bad t"))?,
            seed: fields[4].parse().map_err(|_| parse("bad seed"))?,
            status: fields[5].to_string(),
            dce: opt_f(fields[6])?,
            lce: opt_f(fields[7])?,
            mce: opt_f(fields[8])?,
            tprime: opt_u(fields[9])?,
            cover_size: opt_u(fields[10])?,
            wall_ms: fields[11].parse().map_err(|_| parse("bad wall_ms"))?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorCurve {
    pub rows: Vec<CurveRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Dce,
    Lce,
    Mce,
}

impl std::str::FromStr for Metric {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dce" => Ok(Metric::Dce),
            "lce" => Ok(Metric::Lce),
            "mce" => Ok(Metric::Mce),
            other => Err(HarnessError::Usage(format!("unknown metric `{other}`"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Dce => "dce",
            Metric::Lce => "lce",
            Metric::Mce => "mce",
        })
    }
}

impl ErrorCurve {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CURVE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == CURVE_HEADER => {}
            Some(h) => {
                return Err(HarnessError::SchemaMismatch(format!(
                    "unexpected header `{h}`"
                )))
            }
            None => return Err(HarnessError::Usage("empty curve file".into())),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            rows.push(CurveRow::from_csv(line, i + 2)?);
        }
        Ok(ErrorCurve { rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, HarnessError> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn metric_of(row: &CurveRow, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Dce => row.dce,
            Metric::Lce => row.lce,
            Metric::Mce => row.mce,
        }
    }

    /// Median metric per T over successful rows, restricted to one pipeline
    /// (and optionally one model id), sorted by T.
    pub fn median_series(
        &self,
        model_id: Option<&str>,
        pipeline: PipelineKind,
        metric: Metric,
    ) -> Vec<(usize, f64)> {
        let mut by_t: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
        for r in &self.rows {
            if r.pipeline != pipeline || r.status != "ok" {
                continue;
            }
            if let Some(id) = model_id {
                if r.model_id != id {
                    continue;
                }
            }
            if let Some(v) = Self::metric_of(r, metric) {
                by_t.entry(r.t).or_default().push(v);
            }
        }
        by_t.into_iter()
            .map(|(t, mut vals)| {
                vals.sort_by(|a, b| a.partial_cmp(b).expect("finite metrics"));
                let n = vals.len();
                let med = if n % 2 == 1 {
                    vals[n / 2]
                } else {
                    0.5 * (vals[n / 2 - 1] + vals[n / 2])
                };
                (t, med)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub tool_version: String,
    pub spec_sha256: String,
    pub spec: SweepSpec,
}

impl Manifest {
    pub fn for_spec(spec: &SweepSpec) -> Self {
        Manifest {
            schema: MANIFEST_SCHEMA.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            spec_sha256: spec.sha256_hex(),
            spec: spec.clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(HarnessError::SchemaMismatch(format!(
                "expected {MANIFEST_SCHEMA}, got {}",
                m.schema
            )));
        }
        Ok(m)
    }
}

fn failure_tag(err: &PipelineError) -> &'static str {
    match err {
        PipelineError::UnsupportedModel { .. } => "failed:unsupported",
        PipelineError::Estimator(_) => "failed:estimator",
        PipelineError::InvalidConfig(_) => "failed:config",
        PipelineError::Engine(_) => "failed:engine",
        _ => "failed:runtime",
    }
}

fn run_cell(
    spec: &SweepSpec,
    model_id: &str,
    model: &MixtureModel,
    entry: &PipelineEntry,
    t: usize,
    seed: u64,
) -> CurveRow {
    let config = PipelineConfig {
        pipeline: entry.pipeline,
        t_total: t,
        tprime: entry.tprime,
        phase1_prediction: spec.phase1_prediction,
        lambda: spec.lambda,
        candidates: spec.candidates.clone(),
        em_iters: spec.em_iters,
        pdim_hint: spec.pdim_hint,
        delta: spec.delta,
        include_truth: spec.include_truth,
        cover_budget: DEFAULT_COVER_BUDGET,
        seed,
    };
    match mixcal_core::pipeline::run(model, &config) {
        Ok(res) => CurveRow {
            schema: CURVE_SCHEMA.to_string(),
            model_id: model_id.to_string(),
            pipeline: entry.pipeline,
            t,
            seed,
            status: "ok".to_string(),
            dce: Some(res.dce.max_abs),
            lce: Some(res.lce.max_abs),
            mce: res.mce.as_ref().map(|m| m.max_abs),
            tprime: Some(res.tprime),
            cover_size: res.cover_size,
            wall_ms: res.wall_ms,
        },
        Err(e) => CurveRow {
            schema: CURVE_SCHEMA.to_string(),
            model_id: model_id.to_string(),
            pipeline: entry.pipeline,
            t,
            seed,
            status: failure_tag(&e).to_string(),
            dce: None,
            lce: None,
            mce: None,
            tprime: None,
            cover_size: None,
            wall_ms: 0,
        },
    }
}

/// Execute every cell of the sweep (concurrently across cells), write
/// `curve.csv` and `manifest.json` into `out_dir`, and return the curve.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> Result<ErrorCurve, HarnessError> {
    spec.validate()?;
    let models = spec.model_list();
    struct Cell<'a> {
        model_id: &'a str,
        model: &'a MixtureModel,
        entry: &'a PipelineEntry,
        t: usize,
        seed: u64,
    }
    let mut cells = Vec::new();
    for (mi, (model_id, model)) in models.iter().enumerate() {
        for (pi, entry) in spec.pipelines.iter().enumerate() {
            for (ti, &t) in spec.t_grid.iter().enumerate() {
                for rep in 0..spec.seeds {
                    let seed = derive_seed(
                        spec.seed_base,
                        ((mi as u64) << 48) | ((pi as u64) << 32) | ((ti as u64) << 16) | rep as u64,
                    );
                    cells.push(Cell {
                        model_id,
                        model,
                        entry,
                        t,
                        seed,
                    });
                }
            }
        }
    }
    let rows = par::map_indexed(cells.len(), |i| {
        let c = &cells[i];
        run_cell(spec, c.model_id, c.model, c.entry, c.t, c.seed)
    });
    let curve = ErrorCurve { rows };
    std::fs::create_dir_all(out_dir)?;
    curve.write_csv(&out_dir.join("curve.csv"))?;
    let manifest = Manifest::for_spec(spec);
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(curve)
}

/// Strip the timing column so two curve files can be compared for the
/// determinism contract.
pub fn csv_without_wall_ms(text: &str) -> String {
    text.lines()
        .map(|line| match line.rfind(',') {
            Some(idx) => &line[..idx],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SweepSpec {
        SweepSpec {
            schema: SWEEP_SCHEMA.into(),
            model: Some(crate::models::constant_label_model(0.7, 2)),
            separations: None,
            dim: 2,
            pipelines: vec![PipelineEntry {
                pipeline: PipelineKind::Marginal,
                tprime: TPrimePolicy::T23,
            }],
            t_grid: vec![64, 128, 256],
            seeds: 5,
            seed_base: 7,
            lambda: 10,
            phase1_prediction: 0.5,
            candidates: None,
            em_iters: 20,
            pdim_hint: None,
            delta: 0.05,
            include_truth: false,
        }
    }

    #[test]
    fn sweep_produces_one_row_per_cell() {
        let dir = std::env::temp_dir().join(format!("mixcal-sweep-test-{}", std::process::id()));
        let curve = run_sweep(&tiny_spec(), &dir).unwrap();
        assert_eq!(curve.rows.len(), 15);
        assert!(curve.rows.iter().all(|r| r.status == "ok"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn curve_round_trips_through_csv() {
        let dir = std::env::temp_dir().join(format!("mixcal-csv-test-{}", std::process::id()));
        let curve = run_sweep(&tiny_spec(), &dir).unwrap();
        let text = curve.to_csv_string();
        let back = ErrorCurve::from_csv_str(&text).unwrap();
        assert_eq!(curve, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn failed_cells_become_tagged_rows() {
        let mut spec = tiny_spec();
        // ctp_dce cannot run on a one-component model.
        spec.pipelines.push(PipelineEntry {
            pipeline: PipelineKind::CtpDce,
            tprime: TPrimePolicy::T23,
        });
        let dir = std::env::temp_dir().join(format!("mixcal-fail-test-{}", std::process::id()));
        let curve = run_sweep(&spec, &dir).unwrap();
        let ok = curve.rows.iter().filter(|r| r.status == "ok").count();
        let failed = curve
            .rows
            .iter()
            .filter(|r| r.status == "failed:unsupported")
            .count();
        assert_eq!(ok, 15);
        assert_eq!(failed, 15);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn validation_catches_bad_specs() {
        let mut s = tiny_spec();
        s.t_grid = vec![64, 128];
        assert!(s.validate().is_err());
        let mut s = tiny_spec();
        s.seeds = 3;
        assert!(s.validate().is_err());
        let mut s = tiny_spec();
        s.model = None;
        assert!(s.validate().is_err());
    }

    #[test]
    fn wall_ms_stripping_keeps_data_columns() {
        let line = "curve-v1,m0,marginal,64,9,ok,1.5,2.5,0.5,0,,123";
        assert_eq!(
            csv_without_wall_ms(line),
            "curve-v1,m0,marginal,64,9,ok,1.5,2.5,0.5,0,"
        );
    }
}
