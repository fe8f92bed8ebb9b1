//! Batch experiment runner: single traced runs, Monte-Carlo batches, and
//! the cross-scenario summary table, all emitting plain CSV plus an echo of
//! the resolved configuration so any run is reproducible from its artifacts.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use colloc_core::engine::{
    self, AlgoSelection, Algorithm, McSummary, RunResult, ScenarioResult,
};
use colloc_core::scenarios::{generate_truth, ScenarioConfig, ScenarioKind};
use colloc_core::sensing;

const EXIT_CONFIG: i32 = 1;
const EXIT_NUMERICAL: i32 = 2;

#[derive(Parser)]
#[command(
    name = "colloc",
    about = "Multi-vehicle collaborative localization simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seed and write per-tick trace and event CSVs.
    Run(RunArgs),
    /// Run a Monte-Carlo batch and write results/summary/histogram CSVs.
    Montecarlo(McArgs),
    /// Run all three benchmark scenarios and print the summary table.
    Table(TableArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Base random seed; the COLLOC_SEED environment variable overrides it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated algorithm subset (ekf, dcl, ccl).
    #[arg(long, default_value = "ekf,dcl,ccl")]
    algos: String,
    /// Worker threads for Monte-Carlo batches.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file (JSON; `scenario` required, other keys default).
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct McArgs {
    /// Scenario config file (JSON; `scenario` required, other keys default).
    #[arg(long)]
    config: PathBuf,
    /// Number of runs (seeds seed..seed+runs).
    #[arg(long, default_value_t = 1000)]
    runs: u64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct TableArgs {
    /// Number of runs per scenario.
    #[arg(long, default_value_t = 1000)]
    runs: u64,
    #[command(flatten)]
    common: CommonArgs,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Montecarlo(args) => cmd_montecarlo(args),
        Command::Table(args) => cmd_table(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

/// Anything that must abort with exit code 1 before producing outputs.
type ConfigResult<T> = Result<T, String>;

fn effective_seed(flag_seed: u64) -> ConfigResult<u64> {
    match std::env::var("COLLOC_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| format!("invalid COLLOC_SEED value `{text}`: expected a 64-bit integer")),
        Err(std::env::VarError::NotPresent) => Ok(flag_seed),
        Err(e) => Err(format!("invalid COLLOC_SEED value: {e}")),
    }
}

fn parse_algos(names: &str) -> ConfigResult<AlgoSelection> {
    AlgoSelection::from_names(names).map_err(|e| e.to_string())
}

fn load_config(path: &Path) -> ConfigResult<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("config file `{}`: {e}", path.display()))?;
    ScenarioConfig::from_json_str(&text).map_err(|e| e.to_string())
}

fn ensure_out_dir(dir: &Path) -> ConfigResult<()> {
    fs::create_dir_all(dir).map_err(|e| format!("output directory `{}`: {e}", dir.display()))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> ConfigResult<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| format!("writing `{}`: {e}", path.display()))?;
    Ok(path)
}

fn echo_config(dir: &Path, name: &str, cfg: &ScenarioConfig) -> ConfigResult<()> {
    let mut text = serde_json::to_string_pretty(cfg).expect("config serializes");
    text.push('\n');
    write_file(dir, name, text.as_bytes())?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> ConfigResult<i32> {
    let cfg = load_config(&args.config)?;
    let algos = parse_algos(&args.common.algos)?;
    let seed = effective_seed(args.common.seed)?;

    let (result, trace) = colloc_core::engine::run_single_with_trace(&cfg, seed, algos)
        .map_err(|e| e.to_string())?;

    ensure_out_dir(&args.common.out)?;
    echo_config(&args.common.out, "config_resolved.json", &cfg)?;

    let mut trace_csv = Vec::new();
    engine::write_trace_csv(&mut trace_csv, &trace, algos).expect("in-memory write");
    write_file(&args.common.out, "trace.csv", &trace_csv)?;

    let truth = generate_truth(&cfg).map_err(|e| e.to_string())?;
    let events = sensing::generate_events(&truth, &cfg, seed);
    let mut events_csv = Vec::new();
    sensing::write_events_csv(&mut events_csv, &events).expect("in-memory write");
    write_file(&args.common.out, "events.csv", &events_csv)?;

    let mut failed = false;
    for (algo, outcome) in &result.algorithms {
        let status = if outcome.failed() { "FAILED" } else { "ok" };
        let rms = outcome.mean_rms_pos();
        println!("{algo}: rms_pos {rms:.4} m [{status}]");
        failed |= outcome.failed();
    }
    Ok(if failed { EXIT_NUMERICAL } else { 0 })
}

fn write_mc_outputs(
    dir: &Path,
    scenario: &str,
    gps: bool,
    summary: &McSummary,
    results: &[RunResult],
) -> ConfigResult<()> {
    let mut results_csv = Vec::new();
    engine::write_results_csv(&mut results_csv, scenario, results).expect("in-memory write");
    write_file(dir, "results.csv", &results_csv)?;

    let rows = engine::summarize_table(&[ScenarioResult {
        name: scenario.to_string(),
        gps_enabled: gps,
        summary: summary.clone(),
    }])
    .map_err(|e| e.to_string())?;
    let mut summary_csv = Vec::new();
    engine::write_summary_csv(&mut summary_csv, &rows).expect("in-memory write");
    write_file(dir, "summary.csv", &summary_csv)?;

    let mut histogram_csv = Vec::new();
    engine::write_histogram_csv(&mut histogram_csv, summary).expect("in-memory write");
    write_file(dir, "histogram.csv", &histogram_csv)?;
    Ok(())
}

fn cmd_montecarlo(args: McArgs) -> ConfigResult<i32> {
    let cfg = load_config(&args.config)?;
    let algos = parse_algos(&args.common.algos)?;
    let seed = effective_seed(args.common.seed)?;

    let (summary, results) =
        engine::run_monte_carlo(&cfg, args.runs, seed, args.common.jobs, algos)
            .map_err(|e| e.to_string())?;

    ensure_out_dir(&args.common.out)?;
    echo_config(&args.common.out, "config_resolved.json", &cfg)?;
    write_mc_outputs(
        &args.common.out,
        cfg.kind.name(),
        cfg.gps_enabled,
        &summary,
        &results,
    )?;

    let mut any_failures = false;
    for (algo, s) in &summary.algorithms {
        println!(
            "{algo}: mean rms_pos {:.4} m, median {:.4} m, failures {}/{}",
            s.mean_rms_pos, s.median_rms_pos, s.failures, summary.n_runs
        );
        any_failures |= s.failures > 0;
    }
    Ok(if any_failures { EXIT_NUMERICAL } else { 0 })
}

fn cmd_table(args: TableArgs) -> ConfigResult<i32> {
    let algos = parse_algos(&args.common.algos)?;
    let seed = effective_seed(args.common.seed)?;

    let configs = [
        ScenarioConfig::for_kind(ScenarioKind::Parallel),
        ScenarioConfig::for_kind(ScenarioKind::Crossing),
        ScenarioConfig::for_kind(ScenarioKind::Tunnel),
    ];

    let mut scenario_results = Vec::new();
    let mut any_failures = false;
    for cfg in &configs {
        let (summary, _) = engine::run_monte_carlo(cfg, args.runs, seed, args.common.jobs, algos)
            .map_err(|e| e.to_string())?;
        any_failures |= summary.algorithms.values().any(|s| s.failures > 0);
        scenario_results.push(ScenarioResult {
            name: cfg.kind.name().to_string(),
            gps_enabled: cfg.gps_enabled,
            summary,
        });
    }

    let rows = engine::summarize_table(&scenario_results).map_err(|e| e.to_string())?;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(engine::format_summary_table(&rows).as_bytes());

    ensure_out_dir(&args.common.out)?;
    for cfg in &configs {
        echo_config(
            &args.common.out,
            &format!("config_{}.json", cfg.kind.name()),
            cfg,
        )?;
    }
    let mut summary_csv = Vec::new();
    engine::write_summary_csv(&mut summary_csv, &rows).expect("in-memory write");
    write_file(&args.common.out, "summary.csv", &summary_csv)?;

    if algos.contains(Algorithm::Dcl) && algos.contains(Algorithm::Ccl) {
        let worst_gap = rows
            .iter()
            .map(|r| (r.mean_rms_pos[&Algorithm::Dcl] - r.mean_rms_pos[&Algorithm::Ccl]).abs())
            .fold(0.0f64, f64::max);
        println!("max |dcl - ccl| gap: {worst_gap:.4} m");
    }
    Ok(if any_failures { EXIT_NUMERICAL } else { 0 })
}
