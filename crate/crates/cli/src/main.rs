//! `explore`: run single missions, seeded batches, and the property checks.

mod verify;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use explore_core::embedding::{EmbeddingError, EmbeddingProvider, RemoteEmbedder};
use explore_core::harness::{
    compute_metrics, emit_plot, run_batch, run_mission, write_reports_csv, write_reports_json,
    write_summary_csv, write_wins_csv, EndReason, MissionError, MissionOptions, ReportError,
};
use explore_core::planner::PlannerMode;
use explore_core::sim::{load_scenario, Scenario, ScenarioError};

const EXIT_VALIDATION: u8 = 2;
const EXIT_REMOTE: u8 = 3;
const EXIT_TIMEOUT: u8 = 4;

#[derive(Parser)]
#[command(name = "explore", version, about = "Language-conditioned volumetric exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderKind {
    Synthetic,
    Remote,
}

#[derive(clap::Args)]
struct EmbedderArgs {
    #[arg(long, value_enum, default_value = "synthetic")]
    embedder: EmbedderKind,
    #[arg(long, default_value = "http://127.0.0.1:8000")]
    remote_url: String,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = parse_mode, default_value = "sage")]
        mode: PlannerMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        embedder: EmbedderArgs,
        /// Simulated time limit in seconds; defaults to the scenario's.
        #[arg(long)]
        max_time: Option<f64>,
        /// Directory for report.json, run.csv and log.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a top-down trajectory.svg.
        #[arg(long)]
        plot: bool,
        /// Write per-cycle planner diagnostics to diagnostics.json.
        #[arg(long)]
        debug: bool,
    },
    /// Run every mode over a seed range and write aggregate tables.
    Batch {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated modes.
        #[arg(long, value_delimiter = ',', value_parser = parse_mode,
              default_value = "geometric,semantic-only,sage")]
        modes: Vec<PlannerMode>,
        /// Inclusive range `a..b` or a comma list; defaults to the scenario's seeds.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<Seeds>,
        #[command(flatten)]
        embedder: EmbedderArgs,
        #[arg(long)]
        max_time: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the cost, fusion and solver property checks.
    Verify,
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_mode(s: &str) -> Result<PlannerMode, String> {
    PlannerMode::parse(s).ok_or_else(|| format!("unknown mode `{s}` (sage, geometric, semantic-only)"))
}

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad seed range start: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad seed range end: {e}"))?;
        if a > b {
            return Err(format!("empty seed range {a}..{b}"));
        }
        return Ok(Seeds((a..=b).collect()));
    }
    let seeds = s
        .split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Seeds(seeds))
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Mission(#[from] MissionError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Mission(MissionError::Embedding(
                EmbeddingError::RemoteUnavailable(_) | EmbeddingError::BadResponse(_),
            )) => EXIT_REMOTE,
            CliError::Scenario(_) | CliError::Mission(_) | CliError::Usage(_) => EXIT_VALIDATION,
            CliError::Report(_) | CliError::Io { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn provider(scenario: &Scenario, args: &EmbedderArgs) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    Ok(match args.embedder {
        EmbedderKind::Synthetic => Box::new(scenario.synthetic_embedder()),
        EmbedderKind::Remote => Box::new(
            RemoteEmbedder::new(&args.remote_url, scenario.file.embedder.dim)
                .map_err(|e| CliError::Mission(e.into()))?,
        ),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    scenario_path: &Path,
    mode: PlannerMode,
    seed: u64,
    embedder: &EmbedderArgs,
    max_time: Option<f64>,
    out: Option<&Path>,
    plot: bool,
    debug: bool,
) -> Result<u8, CliError> {
    let scenario = load_scenario(scenario_path)?;
    let provider = provider(&scenario, embedder)?;
    let opts = MissionOptions {
        max_time,
        record_diagnostics: debug,
        ..MissionOptions::new(mode, seed)
    };
    let outcome = run_mission(&scenario, provider.as_ref(), &opts)?;
    let report = compute_metrics(&outcome.log, &scenario.scene, &scenario.file.thresholds);

    println!("mode={} seed={} end={}", report.mode, report.seed, report.end_reason);
    println!(
        "duration={:.2}s path={:.2}m volume={:.3}m3 coverage={:.2}% reachable_coverage={:.2}%",
        report.duration,
        report.path_length,
        report.explored_volume,
        report.coverage_pct,
        report.reachable_coverage_pct
    );
    for t in &report.thresholds {
        let first = t.t_first.map_or("-".to_string(), |x| format!("{x:.1}s"));
        println!("within {} m: t_first={} R/T={}/{}", t.threshold, first, t.reached, t.total);
    }

    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    if out.is_some() || plot || debug {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    if out.is_some() {
        let reports = std::slice::from_ref(&report);
        write_reports_json(reports, create(&dir.join("report.json"))?)?;
        write_reports_csv(reports, create(&dir.join("run.csv"))?)?;
        let p = dir.join("log.json");
        serde_json::to_writer(create(&p)?, &outcome.log).map_err(|e| CliError::Io {
            path: p.display().to_string(),
            source: e.into(),
        })?;
    }
    if plot {
        let p = dir.join("trajectory.svg");
        emit_plot(&outcome.log, &scenario.scene, &p).map_err(io_err(&p))?;
    }
    if debug {
        let p = dir.join("diagnostics.json");
        serde_json::to_writer_pretty(create(&p)?, &outcome.diagnostics).map_err(|e| CliError::Io {
            path: p.display().to_string(),
            source: e.into(),
        })?;
    }
    Ok(if outcome.log.end_reason == EndReason::TimeLimit {
        EXIT_TIMEOUT
    } else {
        0
    })
}

fn cmd_batch(
    scenario_path: &Path,
    modes: &[PlannerMode],
    seeds: Option<Seeds>,
    embedder: &EmbedderArgs,
    max_time: Option<f64>,
    out: &Path,
) -> Result<u8, CliError> {
    let scenario = load_scenario(scenario_path)?;
    let seeds = seeds.map(|s| s.0).unwrap_or_else(|| scenario.file.seeds.clone());
    if seeds.is_empty() || modes.is_empty() {
        return Err(CliError::Usage("batch needs at least one mode and one seed".into()));
    }
    let provider = provider(&scenario, embedder)?;
    let result = run_batch(&scenario, provider.as_ref(), modes, &seeds, max_time)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_reports_csv(&result.reports, create(&out.join("runs.csv"))?)?;
    write_reports_json(&result.reports, create(&out.join("runs.json"))?)?;
    write_summary_csv(&result.summary, create(&out.join("summary.csv"))?)?;
    write_wins_csv(&result.wins, create(&out.join("wins.csv"))?)?;
    for s in &result.summary {
        let t = s
            .thresholds
            .iter()
            .map(|t| {
                let first = t.mean_t_first.map_or("-".to_string(), |x| format!("{x:.1}"));
                format!("t_first({})={first}", t.threshold)
            })
            .collect::<Vec<_>>()
            .join(" ");
        println!(
            "{:<14} runs={} duration={:.1} path={:.2} coverage={:.2}% completed={:.0}% {t}",
            s.mode.to_string(),
            s.runs,
            s.duration,
            s.path_length,
            s.coverage_pct,
            100.0 * s.completed_rate
        );
    }
    println!("wrote {}", out.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            mode,
            seed,
            embedder,
            max_time,
            out,
            plot,
            debug,
        } => cmd_run(scenario, *mode, *seed, embedder, *max_time, out.as_deref(), *plot, *debug),
        Command::Batch {
            scenario,
            modes,
            seeds,
            embedder,
            max_time,
            out,
        } => cmd_batch(scenario, modes, seeds.clone(), embedder, *max_time, out),
        Command::Verify => Ok(if verify::run_all() { 0 } else { 1 }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
