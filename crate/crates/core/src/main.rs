//! Command-line front end for the simulator.
//!
//! Exit codes: 0 on success, 1 when the simulated program faults or misses
//! its cycle budget (or a bench cell fails), 2 when `diff` finds a
//! divergence, 3 for usage errors and unreadable inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rvcsim_core::bpred::BpredKind;
use rvcsim_core::fetch::FetchKind;
use rvcsim_core::harness::gen::{generate, GenKind};
use rvcsim_core::harness::{
    config_name, diff_logs, reported_hit_rate, run_bench, run_once, stats_csv_row, write_generated,
    BenchConfig, Engine, RunConfig, STATS_CSV_HEADER,
};

#[derive(Parser)]
#[command(
    name = "rvcsim",
    version,
    about = "Cycle-accurate simulator for a five-stage RV32IC pipeline",
    long_about = "Cycle-accurate simulator for a five-stage RV32IC pipeline with \
                  interchangeable fetch units (dualpc, buffered, naive) and branch \
                  predictors (none, bimodal, gshare), plus an instruction-level \
                  reference model for differential testing."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one program and report status, stats, and an optional commit log
    Run(RunArgs),
    /// Compare two commit logs field by field
    Diff(DiffArgs),
    /// Run every program in a directory across fetch/predictor configs
    Bench(BenchArgs),
    /// Generate a stress program (.bin) plus its manifest (.json)
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Program image: flat binary (.bin) or one 8-digit hex word per line (.hex)
    program: PathBuf,

    /// Execution engine: pipeline or ref
    #[arg(long, env = "RVCSIM_ENGINE", default_value = "pipeline")]
    engine: Engine,

    /// Fetch unit: dualpc, buffered, or naive
    #[arg(long, env = "RVCSIM_FETCH", default_value = "dualpc")]
    fetch: FetchKind,

    /// Branch predictor: none, bimodal, or gshare
    #[arg(long, env = "RVCSIM_BPRED", default_value = "gshare")]
    bpred: BpredKind,

    /// Instruction memory size in KiB (power of two)
    #[arg(long, env = "RVCSIM_IMEM_KB", default_value_t = 64)]
    imem_kb: u32,

    /// Data memory size in KiB (power of two)
    #[arg(long, env = "RVCSIM_DMEM_KB", default_value_t = 64)]
    dmem_kb: u32,

    /// Give up after this many cycles (or committed steps on the ref engine)
    #[arg(long, env = "RVCSIM_MAX_CYCLES", default_value_t = 100_000_000)]
    max_cycles: u64,

    /// Write the per-commit architectural log to this file
    #[arg(long)]
    log: Option<PathBuf>,

    /// Write a stats CSV (header plus one row) here; "-" prints it to stdout
    #[arg(long)]
    stats: Option<PathBuf>,

    /// Print per-cycle stage occupancy to stderr
    #[arg(long, env = "RVCSIM_TRACE")]
    trace: bool,

    /// Initialize x2 to the top of data memory before the first cycle
    #[arg(long, env = "RVCSIM_SP_INIT")]
    sp_init: bool,
}

#[derive(Args)]
struct DiffArgs {
    /// First commit log
    log_a: PathBuf,
    /// Second commit log
    log_b: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of prebuilt .bin/.hex programs
    suite_dir: PathBuf,

    /// Comma-separated fetch units to sweep
    #[arg(
        long,
        env = "RVCSIM_FETCH",
        value_delimiter = ',',
        default_value = "dualpc,buffered,naive"
    )]
    fetch: Vec<FetchKind>,

    /// Comma-separated branch predictors to sweep
    #[arg(
        long,
        env = "RVCSIM_BPRED",
        value_delimiter = ',',
        default_value = "none,bimodal,gshare"
    )]
    bpred: Vec<BpredKind>,

    /// Instruction memory size in KiB (power of two)
    #[arg(long, env = "RVCSIM_IMEM_KB", default_value_t = 64)]
    imem_kb: u32,

    /// Data memory size in KiB (power of two)
    #[arg(long, env = "RVCSIM_DMEM_KB", default_value_t = 64)]
    dmem_kb: u32,

    /// Per-cell cycle budget
    #[arg(long, env = "RVCSIM_MAX_CYCLES", default_value_t = 1_000_000_000)]
    max_cycles: u64,

    /// Write the full results CSV here instead of stdout
    #[arg(long)]
    stats: Option<PathBuf>,

    /// Worker threads for the sweep (0 = one per core)
    #[arg(long, env = "RVCSIM_JOBS", default_value_t = 0)]
    jobs: usize,

    /// Initialize x2 to the top of data memory in every cell
    #[arg(long, env = "RVCSIM_SP_INIT")]
    sp_init: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Generator: fetchmiss, bimodal-killer, loaduse, or rand
    kind: GenKind,

    /// RNG seed (rand) — other kinds are seed-independent
    #[arg(long, env = "RVCSIM_SEED", default_value_t = 0)]
    seed: u64,

    /// Size knob: iterations (fetchmiss, bimodal-killer), pair count
    /// (loaduse), or image byte budget (rand)
    #[arg(long, default_value_t = 1000)]
    size: u32,

    /// Output stem; writes <stem>.bin and <stem>.manifest.json
    #[arg(long, default_value = "prog")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version land here too; they are not usage errors.
            let code = if err.use_stderr() { 3 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Diff(args) => cmd_diff(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Gen(args) => cmd_gen(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(3)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let mut cfg = RunConfig::new(args.program.clone());
    cfg.engine = args.engine;
    cfg.fetch = args.fetch;
    cfg.bpred = args.bpred;
    cfg.imem_kb = args.imem_kb;
    cfg.dmem_kb = args.dmem_kb;
    cfg.max_cycles = args.max_cycles;
    cfg.sp_init = args.sp_init;
    cfg.echo_console = true;
    cfg.capture_log = args.log.is_some();
    cfg.trace = args.trace;

    let outcome = run_once(&cfg)?;

    if let Some(path) = &args.log {
        let log = outcome.log.as_deref().unwrap_or("");
        fs::write(path, log).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = &args.stats {
        let program = args
            .program
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| args.program.display().to_string());
        let config = config_name(args.engine, args.fetch, args.bpred);
        let hit = reported_hit_rate(args.engine, args.bpred, &outcome.stats);
        let row = stats_csv_row(&config, &program, &outcome.stats, hit);
        let text = format!("{STATS_CSV_HEADER}\n{row}\n");
        if path == Path::new("-") {
            print!("{text}");
        } else {
            fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
        }
    }

    eprintln!(
        "{} after {} cycles, {} instructions (ipc {:.3})",
        outcome.status,
        outcome.stats.cycles,
        outcome.stats.instructions,
        outcome.stats.ipc(),
    );
    Ok(if outcome.status.is_success() { 0 } else { 1 })
}

fn cmd_diff(args: DiffArgs) -> Result<u8> {
    let read = |path: &Path| {
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
    };
    let a = read(&args.log_a)?;
    let b = read(&args.log_b)?;
    let outcome = diff_logs(&a, &b)?;
    println!("{outcome}");
    Ok(if outcome.is_identical() { 0 } else { 2 })
}

fn cmd_bench(args: BenchArgs) -> Result<u8> {
    let mut cfg = BenchConfig::new(args.suite_dir);
    cfg.fetches = args.fetch;
    cfg.bpreds = args.bpred;
    cfg.imem_kb = args.imem_kb;
    cfg.dmem_kb = args.dmem_kb;
    cfg.max_cycles = args.max_cycles;
    cfg.sp_init = args.sp_init;
    cfg.jobs = args.jobs;

    let report = run_bench(&cfg)?;

    match &args.stats {
        Some(path) => {
            fs::write(path, report.csv())
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
        None => {
            print!("{}", report.csv());
            println!();
        }
    }
    print!("{}", report.text());
    Ok(if report.ok() { 0 } else { 1 })
}

fn cmd_gen(args: GenArgs) -> Result<u8> {
    let generated = generate(args.kind, args.seed, args.size)?;
    let (bin, manifest) = write_generated(&generated, &args.out)?;
    println!("wrote {} and {}", bin.display(), manifest.display());
    Ok(0)
}
