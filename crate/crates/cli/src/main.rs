//! `npl`: run, verify, fit, and check-assumptions.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use neckpinch::config::{parse_config, InitialKind, SimConfig};
use neckpinch::diagnostics::check_conditions;
use neckpinch::flow::{fit_singularity, run, FitResult, RunOutput, StopReason};
use neckpinch::io::{read_series, read_snapshot, write_series, write_snapshot};
use neckpinch::oracles::run_suite;
use neckpinch::Field;

#[derive(Parser)]
#[command(name = "npl", version, about = "Mean-curvature-flow neckpinch laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write a series row every N steps (overrides the config)
    #[arg(long, global = true, value_name = "N")]
    out_every: Option<usize>,

    /// Stop at rescaled time X (overrides the config)
    #[arg(long, global = true, value_name = "X")]
    tau_max: Option<f64>,

    /// Seed for randomized checks
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Print only errors and failing reports
    #[arg(long, global = true)]
    quiet: bool,

    /// Cap on worker threads
    #[arg(long, env = "NPL_THREADS", hide = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the configured initial data and write series, snapshots and reports
    Run { config: PathBuf, out_dir: PathBuf },
    /// Run the identity, spectrum and consistency checks
    Verify,
    /// Fit the singular time and asymptotic constants to a series CSV
    Fit { series: PathBuf },
    /// Evaluate the main assumptions on the configured initial field
    CheckAssumptions { config: PathBuf },
}

type CliResult = Result<bool, String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let outcome = match &cli.command {
        Command::Run { config, out_dir } => cmd_run(&cli, config, out_dir),
        Command::Verify => cmd_verify(&cli),
        Command::Fit { series } => cmd_fit(series),
        Command::CheckAssumptions { config } => cmd_check(&cli, config),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli, path: &Path) -> Result<SimConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(n) = cli.out_every {
        cfg.stepping.out_every = n;
    }
    if let Some(x) = cli.tau_max {
        cfg.stepping.tau_max = x;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    // snapshot paths are relative to the config file
    if let Some(file) = &cfg.initial.file {
        if file.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.initial.file = Some(base.join(file));
        }
    }
    Ok(cfg)
}

fn initial_field(cfg: &SimConfig) -> Result<Field, String> {
    if cfg.initial.kind != InitialKind::File {
        return cfg.initial_field().map_err(|e| e.to_string());
    }
    let path = cfg.initial.file.as_ref().ok_or("initial kind \"file\" needs a \"file\" path")?;
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let snap = read_snapshot(&mut BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))?;
    let want = cfg.grid.build().map_err(|e| e.to_string())?;
    if *snap.field.grid() != want {
        return Err(format!("{}: snapshot grid does not match the configured grid", path.display()));
    }
    Ok(snap.field)
}

fn json<T: Serialize>(x: &T) -> String {
    serde_json::to_string(x).expect("plain data serializes")
}

#[derive(Serialize)]
struct RunArtifacts {
    series: PathBuf,
    snapshots: Vec<PathBuf>,
    reports: PathBuf,
    fit: PathBuf,
    rows: usize,
    stop: Option<StopReason>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum FitRecord {
    Ok(FitResult),
    Err { error: String },
}

fn write_artifacts(out: &RunOutput, dir: &Path) -> io::Result<RunArtifacts> {
    fs::create_dir_all(dir)?;
    let series = dir.join("series.csv");
    let mut w = BufWriter::new(File::create(&series)?);
    write_series(&mut w, &out.series).map_err(io::Error::other)?;
    w.flush()?;

    let mut snapshots = Vec::new();
    for (k, snap) in out.snapshots.iter().enumerate() {
        let path = dir.join(format!("snapshot_{k:04}.npl"));
        let mut w = BufWriter::new(File::create(&path)?);
        write_snapshot(&mut w, snap).map_err(io::Error::other)?;
        w.flush()?;
        snapshots.push(path);
    }

    let reports = dir.join("reports.jsonl");
    let mut w = BufWriter::new(File::create(&reports)?);
    for rec in &out.reports {
        writeln!(w, "{}", json(rec))?;
    }
    w.flush()?;

    let fit = dir.join("fit.json");
    let record = match fit_singularity(&out.series) {
        Ok(r) => FitRecord::Ok(r),
        Err(e) => FitRecord::Err { error: e.to_string() },
    };
    fs::write(&fit, json(&record) + "\n")?;

    Ok(RunArtifacts { series, snapshots, reports, fit, rows: out.series.rows.len(), stop: out.stop })
}

fn cmd_run(cli: &Cli, config: &Path, out_dir: &Path) -> CliResult {
    let cfg = load_config(cli, config)?;
    let v0 = initial_field(&cfg)?;
    match run(&cfg, v0) {
        Ok(out) => {
            if !cli.quiet {
                for w in &out.warnings {
                    eprintln!("warning: {w}");
                }
            }
            let artifacts = write_artifacts(&out, out_dir).map_err(|e| e.to_string())?;
            if !cli.quiet {
                println!("{}", json(&artifacts));
            }
            Ok(true)
        }
        Err(failure) => {
            // keep whatever was produced before the abort
            let _ = write_artifacts(&failure.output, out_dir);
            if let Some(report) = &failure.last_report {
                println!("{}", json(report));
            }
            Err(failure.error.to_string())
        }
    }
}

fn cmd_verify(cli: &Cli) -> CliResult {
    let reports = run_suite(cli.seed.unwrap_or(0), cli.threads).map_err(|e| e.to_string())?;
    let mut all = true;
    for r in &reports {
        all &= r.pass;
        if !cli.quiet || !r.pass {
            println!("{}", json(r));
        }
    }
    Ok(all)
}

fn cmd_fit(series: &Path) -> CliResult {
    let f = File::open(series).map_err(|e| format!("{}: {e}", series.display()))?;
    let s = read_series(BufReader::new(f)).map_err(|e| e.to_string())?;
    let fit = fit_singularity(&s).map_err(|e| e.to_string())?;
    println!("{}", json(&fit));
    Ok(true)
}

fn cmd_check(cli: &Cli, config: &Path) -> CliResult {
    let cfg = load_config(cli, config)?;
    let v0 = initial_field(&cfg)?;
    let report = check_conditions(&v0, cfg.initial.a0, 0.0, &cfg.condition_constants()).map_err(|e| e.to_string())?;
    let assumptions: serde_json::Map<String, serde_json::Value> = report
        .flags
        .iter()
        .filter(|(name, _)| name.starts_with('A'))
        .map(|(name, flag)| (name.clone(), serde_json::to_value(flag).expect("flag serializes")))
        .collect();
    let failed = report.failed_assumptions();
    println!("{}", json(&serde_json::json!({ "assumptions": assumptions, "failed": failed })));
    if !cli.quiet {
        for name in &failed {
            eprintln!("assumption {name} fails on the initial field");
        }
    }
    Ok(failed.is_empty())
}
