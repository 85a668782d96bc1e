//! The `mixcal` command line: data generation, single pipeline runs, sweeps,
//! cover verification, shattering checks, and comparison reports.
//!
//! All randomness flows from explicit seeds; the `MIXCAL_WORKERS` environment
//! variable bounds the worker pool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mixcal_core::cover::{greedy_cover, verify_cover, CoverDocument, FunctionTable};
use mixcal_core::distinguisher::{build_distinguisher_class, CandidateFamily, DistinguisherMode};
use mixcal_core::pipeline::{PipelineConfig, PipelineKind, TPrimePolicy};
use mixcal_core::shatter::empirical_shatter_dim;
use mixcal_core::util::derive_seed;
use mixcal_core::{par, CandidateSettings};
use mixcal_harness::models::read_model;
use mixcal_harness::report::{report, ReportOptions};
use mixcal_harness::sweep::{run_sweep, ErrorCurve, Manifest};
use mixcal_harness::HarnessError;

#[derive(Parser)]
#[command(name = "mixcal", version, about = "Per-subgroup online calibration experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample labeled data from a model specification into CSV.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one pipeline once and write the result summary (json or csv).
    Run {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pipeline: String,
        #[arg(long, alias = "T")]
        t: usize,
        #[arg(long = "tprime-policy")]
        tprime_policy: Option<String>,
        #[arg(long, default_value_t = 10)]
        lambda: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Stream a per-round CSV trace of the engine phase.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Append the true model's distinguishers to the candidate class.
        #[arg(long, default_value_t = false)]
        include_truth: bool,
        /// Candidate models sampled for the multi-objective pipelines.
        #[arg(long)]
        candidates: Option<usize>,
    },
    /// Execute a sweep specification (or re-execute one from its manifest).
    Sweep {
        #[arg(long, conflicts_with = "from_manifest")]
        spec: Option<PathBuf>,
        #[arg(long = "from-manifest")]
        from_manifest: Option<PathBuf>,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Build a greedy cover and verify it on held-out samples.
    VerifyCover {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "dce")]
        mode: String,
        #[arg(long, default_value_t = 500)]
        candidates: usize,
        #[arg(long = "construction-n", default_value_t = 2000)]
        construction_n: usize,
        #[arg(long = "holdout-n", default_value_t = 2000)]
        holdout_n: usize,
        #[arg(long, default_value_t = 0.025)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reuse a serialized cover instead of building one.
        #[arg(long = "cover-in")]
        cover_in: Option<PathBuf>,
        /// Write the built cover as JSON.
        #[arg(long = "cover-out")]
        cover_out: Option<PathBuf>,
    },
    /// Brute-force pseudo-shattering check on tabulated functions.
    Shatter {
        /// CSV of function values: one row per function, one column per point.
        #[arg(long, conflicts_with = "demo")]
        table: Option<PathBuf>,
        /// Built-in scenario: `ratio-1d` or `halfspace-2d`.
        #[arg(long)]
        demo: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Join error curves, fit slopes, and compare pipelines.
    Report {
        /// Curve CSV files produced by `sweep`.
        curves: Vec<PathBuf>,
        #[arg(long = "min-gap")]
        min_gap: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let workers = std::env::var("MIXCAL_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    par::configure_workers(workers);
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Usage(_) | HarnessError::SchemaMismatch(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.cmd {
        Command::Generate { model, n, seed, out } => cmd_generate(&model, n, seed, &out),
        Command::Run {
            model,
            pipeline,
            t,
            tprime_policy,
            lambda,
            seed,
            out,
            trace,
            include_truth,
            candidates,
        } => cmd_run(
            &model,
            &pipeline,
            t,
            tprime_policy.as_deref(),
            lambda,
            seed,
            &out,
            trace.as_deref(),
            include_truth,
            candidates,
        ),
        Command::Sweep {
            spec,
            from_manifest,
            out_dir,
        } => cmd_sweep(spec.as_deref(), from_manifest.as_deref(), &out_dir),
        Command::VerifyCover {
            model,
            mode,
            candidates,
            construction_n,
            holdout_n,
            eps,
            seed,
            cover_in,
            cover_out,
        } => cmd_verify_cover(
            &model,
            &mode,
            candidates,
            construction_n,
            holdout_n,
            eps,
            seed,
            cover_in.as_deref(),
            cover_out.as_deref(),
        ),
        Command::Shatter { table, demo, seed } => cmd_shatter(table.as_deref(), demo.as_deref(), seed),
        Command::Report {
            curves,
            min_gap,
            out,
        } => cmd_report(&curves, min_gap, out.as_deref()),
    }
}

fn cmd_generate(model: &Path, n: usize, seed: u64, out: &Path) -> Result<ExitCode, HarnessError> {
    let model = read_model(model)?;
    let samples = model.sample(n, seed);
    let d = model.dim();
    let mut text = String::new();
    for i in 0..d {
        text.push_str(&format!("x{i},"));
    }
    text.push_str("y,true_component\n");
    for s in &samples {
        for v in &s.x {
            text.push_str(&format!("{v},"));
        }
        text.push_str(&format!("{},{}\n", s.y, s.true_component));
    }
    std::fs::write(out, text)?;
    println!("wrote {n} samples to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    model_path: &Path,
    pipeline: &str,
    t: usize,
    tprime_policy: Option<&str>,
    lambda: u32,
    seed: u64,
    out: &Path,
    trace: Option<&Path>,
    include_truth: bool,
    candidates: Option<usize>,
) -> Result<ExitCode, HarnessError> {
    let model = read_model(model_path)?;
    let pipeline: PipelineKind = pipeline
        .parse()
        .map_err(|e| HarnessError::Usage(format!("{e}")))?;
    let mut config = PipelineConfig::new(pipeline, t, seed);
    config.lambda = lambda;
    config.include_truth = include_truth;
    if let Some(p) = tprime_policy {
        config.tprime = p
            .parse::<TPrimePolicy>()
            .map_err(|e| HarnessError::Usage(format!("{e}")))?;
    }
    if let Some(count) = candidates {
        config.candidates = Some(CandidateSettings {
            count,
            ..CandidateSettings::default_for_dim(model.dim())
        });
    }
    let result = mixcal_core::pipeline::run(&model, &config)?;
    if let Some(trace_path) = trace {
        let grid = mixcal_core::BucketGrid::new(config.lambda);
        let mut text = String::from("t,x_hash,y,yhat,bucket\n");
        for (i, r) in result.transcript.rounds.iter().enumerate() {
            let bucket = grid.bucket_of(r.yhat).map_err(mixcal_core::PipelineError::from)?;
            text.push_str(&format!(
                "{i},{:016x},{},{},{bucket}\n",
                mixcal_core::util::feature_hash(&r.x),
                r.y,
                r.yhat
            ));
        }
        std::fs::write(trace_path, text)?;
    }
    let is_csv = out.extension().is_some_and(|e| e == "csv");
    if is_csv {
        let mut text = String::from("metric,t,max_abs,argmax_g,argmax_v\n");
        text.push_str(&result.dce.csv_summary_row("dce", t));
        text.push('\n');
        text.push_str(&result.lce.csv_summary_row("lce", t));
        text.push('\n');
        if let Some(m) = &result.mce {
            text.push_str(&m.csv_summary_row("mce", t));
            text.push('\n');
        }
        std::fs::write(out, text)?;
    } else {
        let doc = serde_json::json!({ "config": config, "result": result });
        std::fs::write(out, serde_json::to_string_pretty(&doc)?)?;
    }
    println!(
        "{pipeline}: T={t} T'={} dce={} lce={} mce={}",
        result.tprime,
        result.dce.max_abs,
        result.lce.max_abs,
        result
            .mce
            .as_ref()
            .map(|m| m.max_abs.to_string())
            .unwrap_or_else(|| "-".into())
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(
    spec: Option<&Path>,
    from_manifest: Option<&Path>,
    out_dir: &Path,
) -> Result<ExitCode, HarnessError> {
    let spec = match (spec, from_manifest) {
        (Some(path), None) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        (None, Some(path)) => Manifest::read(path)?.spec,
        _ => {
            return Err(HarnessError::Usage(
                "give exactly one of --spec or --from-manifest".into(),
            ))
        }
    };
    let curve = run_sweep(&spec, out_dir)?;
    let failures = curve.rows.iter().filter(|r| r.status != "ok").count();
    println!(
        "{} rows ({failures} failed) -> {}",
        curve.rows.len(),
        out_dir.join("curve.csv").display()
    );
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify_cover(
    model_path: &Path,
    mode: &str,
    candidates: usize,
    construction_n: usize,
    holdout_n: usize,
    eps: f64,
    seed: u64,
    cover_in: Option<&Path>,
    cover_out: Option<&Path>,
) -> Result<ExitCode, HarnessError> {
    let model = read_model(model_path)?;
    let mode: DistinguisherMode = mode
        .parse()
        .map_err(|e| HarnessError::Usage(format!("{e}")))?;
    let doc = if let Some(path) = cover_in {
        serde_json::from_str::<CoverDocument>(&std::fs::read_to_string(path)?)?
    } else {
        let family = CandidateFamily {
            k: model.k(),
            d: model.dim(),
            family: model.family(),
            mean_low: vec![-4.0; model.dim()],
            mean_high: vec![4.0; model.dim()],
            scale_range: (0.25, 4.0),
            weight_floor: 0.05,
            count: candidates,
            seed: derive_seed(seed, 1),
        };
        let class = build_distinguisher_class(&family, mode, None)?;
        let construction: Vec<Vec<f64>> = model
            .sample(construction_n, derive_seed(seed, 2))
            .into_iter()
            .map(|s| s.x)
            .collect();
        let table = FunctionTable::evaluate(&class, &construction)?;
        let cover = greedy_cover(&table, eps, &[])?;
        CoverDocument {
            family,
            mode,
            truth: None,
            epsilon: cover.epsilon,
            selected: cover.selected,
        }
    };
    if let Some(path) = cover_out {
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    }
    let class = doc.rebuild_class()?;
    let holdout: Vec<Vec<f64>> = model
        .sample(holdout_n, derive_seed(seed, 3))
        .into_iter()
        .map(|s| s.x)
        .collect();
    let holdout_table = FunctionTable::evaluate(&class, &holdout)?;
    let verdict = verify_cover(&doc.cover(), &holdout_table, doc.epsilon);
    println!(
        "{}: cover size {} of {} functions, worst gap {} (radius {}) at function {}",
        if verdict.pass { "PASS" } else { "FAIL" },
        doc.selected.len(),
        class.len(),
        verdict.worst_gap,
        verdict.radius,
        verdict.worst_func
    );
    Ok(if verdict.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_shatter(table: Option<&Path>, demo: Option<&str>, seed: u64) -> Result<ExitCode, HarnessError> {
    use rand::{Rng, SeedableRng};
    let rows: Vec<Vec<f64>> = match (table, demo) {
        (Some(path), None) => std::fs::read_to_string(path)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, l)| {
                l.split(',')
                    .map(|v| {
                        v.trim().parse::<f64>().map_err(|_| HarnessError::CsvParse {
                            line: i + 1,
                            msg: format!("bad value `{v}`"),
                        })
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?,
        (None, Some("halfspace-2d")) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let points = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
            (0..500)
                .map(|_| {
                    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let b: f64 = rng.random_range(-1.5..1.5);
                    points
                        .iter()
                        .map(|p| f64::from(theta.cos() * p[0] + theta.sin() * p[1] + b > 0.0))
                        .collect()
                })
                .collect()
        }
        (None, Some("ratio-1d")) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            (0..500)
                .map(|_| {
                    let mu1: f64 = rng.random_range(-3.0..3.0);
                    let mu2: f64 = rng.random_range(-3.0..3.0);
                    let w1: f64 = rng.random_range(0.1..0.9);
                    points
                        .iter()
                        .map(|x| {
                            let lr = (w1 / (1.0 - w1)).ln()
                                + (mu1 - mu2) * x
                                + (mu2 * mu2 - mu1 * mu1) / 2.0;
                            let r = lr.exp();
                            r / (1.0 + r)
                        })
                        .collect()
                })
                .collect()
        }
        (None, Some(other)) => {
            return Err(HarnessError::Usage(format!(
                "unknown demo `{other}` (use ratio-1d or halfspace-2d)"
            )))
        }
        _ => {
            return Err(HarnessError::Usage(
                "give exactly one of --table or --demo".into(),
            ))
        }
    };
    let table = FunctionTable::from_rows(rows)
        .map_err(|e| HarnessError::Usage(format!("bad table: {e}")))?;
    let dim = empirical_shatter_dim(&table).map_err(|e| HarnessError::Usage(format!("{e}")))?;
    println!(
        "empirical shatter dimension: {dim} ({} functions on {} points)",
        table.n_funcs(),
        table.n_points()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(
    curves: &[PathBuf],
    min_gap: Option<f64>,
    out: Option<&Path>,
) -> Result<ExitCode, HarnessError> {
    if curves.is_empty() {
        return Err(HarnessError::Usage("no curve files given".into()));
    }
    let loaded: Vec<ErrorCurve> = curves
        .iter()
        .map(|p| ErrorCurve::read_csv(p))
        .collect::<Result<_, _>>()?;
    let rep = report(&loaded, &ReportOptions { min_gap })?;
    print!("{}", rep.to_text());
    if let Some(path) = out {
        std::fs::write(path, rep.to_csv())?;
    }
    Ok(if rep.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
