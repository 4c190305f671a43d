//! `dgkit`: single experiment runs, benchmark orchestration and charts.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 benchmark finished with failed jobs. Errors print one line
//! `error[<code>]: <message>` on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dgkit_core::benchmark::{
    aggregate, emit_cluster_scripts, enumerate_jobs, execute_local, parse_benchmark_config, read_table, render_charts,
    write_manifest, write_outcome, ClusterTemplate, JobOutcome, CLUSTER_DIR, SUBMIT_ALL,
};
use dgkit_core::experiment::{build_experiment, load_config};
use dgkit_core::Error;

#[derive(Parser)]
#[command(name = "dgkit", version, about = "Domain-generalization training and benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one experiment.
    Run(RunArgs),
    /// Run a benchmark (or emit cluster scripts), aggregate and chart it.
    Benchmark(BenchArgs),
    /// Render charts from an existing results table.
    Charts(ChartArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment YAML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set epos=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Result file to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark YAML file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for local execution (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Rerun jobs that already have an ok result.
    #[arg(long)]
    force: bool,
    /// Only write batch-scheduler scripts; train nothing.
    #[arg(long)]
    cluster: bool,
    #[arg(long, default_value = "cpu")]
    partition: String,
    #[arg(long, default_value = "01:00:00")]
    time: String,
    #[arg(long, default_value = "4G")]
    mem: String,
    /// CLI command the scripts invoke.
    #[arg(long, default_value = "dgkit")]
    cli: String,
}

#[derive(Args)]
struct ChartArgs {
    /// Results table (results.csv).
    #[arg(long)]
    table: PathBuf,
    /// Directory for the chart files.
    #[arg(long)]
    out: PathBuf,
}

fn code_of(e: &Error) -> u8 {
    if e.is_config_error() {
        2
    } else {
        1
    }
}

/// `x.json` gets the sidecar `x.timing.json`.
fn timing_sidecar(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("result");
    out.with_file_name(format!("{stem}.timing.json"))
}

fn run(args: RunArgs) -> Result<u8, Error> {
    let (cfg, provenance) = load_config(args.config.as_deref(), &args.sets)?;
    for line in provenance.lines() {
        eprintln!("config: {line}");
    }
    let start = Instant::now();
    let result = build_experiment(&cfg).and_then(|e| e.run());
    let wall = start.elapsed().as_secs_f64();
    let outcome = match &result {
        Ok(r) => JobOutcome::Ok(Box::new(r.clone())),
        Err(e) => JobOutcome::Failed { error: e.to_string() },
    };
    if let Some(out) = &args.out {
        write_outcome(out, &timing_sidecar(out), &outcome, wall)?;
    }
    let r = result?;
    println!(
        "model {} trainer {} selected epoch {} val accuracy {:.4}",
        r.model, r.trainer, r.selected_epoch, r.val_accuracy
    );
    for (domain, acc) in &r.test_accuracy {
        println!("test {domain}: {acc:.4}");
    }
    if let Some(out) = &args.out {
        println!("result: {}", out.display());
    }
    Ok(0)
}

fn benchmark(args: BenchArgs) -> Result<u8, Error> {
    let cfg = parse_benchmark_config(&args.config)?;
    let jobs = enumerate_jobs(&cfg)?;
    write_manifest(&args.out, &jobs)?;
    log::info!("{} jobs", jobs.len());
    if args.cluster {
        let template = ClusterTemplate {
            partition: args.partition,
            time: args.time,
            mem: args.mem,
            cli: args.cli,
        };
        emit_cluster_scripts(&jobs, &args.out, &template)?;
        println!("scripts: {}", args.out.join(CLUSTER_DIR).join(SUBMIT_ALL).display());
        return Ok(0);
    }
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let summary = execute_local(&jobs, workers, &args.out, args.force)?;
    log::info!("skipped: {}", summary.skipped());
    eprintln!(
        "skipped: {} ran: {} failed: {}",
        summary.skipped(),
        summary.ran_ok(),
        summary.failed()
    );
    let table = aggregate(&args.out)?;
    println!("table: {}", table.display());
    match render_charts(&read_table(&table)?, &args.out) {
        Ok(paths) => {
            for p in paths {
                println!("chart: {}", p.display());
            }
        }
        Err(e) => log::warn!("charts not rendered: {e}"),
    }
    Ok(summary.exit_code() as u8)
}

fn charts(args: ChartArgs) -> Result<u8, Error> {
    let table = read_table(&args.table)?;
    for p in render_charts(&table, &args.out)? {
        println!("chart: {}", p.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Charts(a) => charts(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = code_of(&e);
            eprintln!("error[{code}]: {}", e.to_string().replace('\n', " "));
            ExitCode::from(code)
        }
    }
}
