//! Experiment plumbing: run a program image on either engine, diff
//! commit logs, batch-run suites across fetch/predictor configurations,
//! and generate stress programs.

pub mod gen;

use crate::bpred::BpredKind;
use crate::fetch::FetchKind;
use crate::memsys::{read_image_file, MachineMemory};
use crate::pipeline::{Core, Stats};
use crate::refmodel::RefModel;
use crate::ExitStatus;
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// The cycle-accurate five-stage core.
    Pipeline,
    /// The one-instruction-per-step functional model.
    Ref,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Pipeline => "pipeline",
            Engine::Ref => "ref",
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Engine, String> {
        match s {
            "pipeline" => Ok(Engine::Pipeline),
            "ref" => Ok(Engine::Ref),
            other => Err(format!("unknown engine {other:?} (pipeline, ref)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub program: PathBuf,
    pub engine: Engine,
    pub fetch: FetchKind,
    pub bpred: BpredKind,
    pub imem_kb: u32,
    pub dmem_kb: u32,
    pub max_cycles: u64,
    /// Initialize x2 to the top of data memory (for compiled programs
    /// that arrive without a crt0).
    pub sp_init: bool,
    /// Stream console bytes to stdout as they are stored.
    pub echo_console: bool,
    /// Collect the commit log as text.
    pub capture_log: bool,
    /// Print per-cycle stage occupancy to stderr (pipeline engine only).
    pub trace: bool,
}

impl RunConfig {
    pub fn new(program: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            program: program.into(),
            engine: Engine::Pipeline,
            fetch: FetchKind::DualPc,
            bpred: BpredKind::Gshare,
            imem_kb: 64,
            dmem_kb: 64,
            max_cycles: 100_000_000,
            sp_init: false,
            echo_console: false,
            capture_log: false,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: ExitStatus,
    /// Microarchitectural counters.  The reference model has none: it
    /// reports one cycle per committed instruction and zeros elsewhere.
    pub stats: Stats,
    pub console: Vec<u8>,
    pub log: Option<String>,
}

fn load_machine(cfg: &RunConfig) -> Result<MachineMemory> {
    for (label, kb) in [("imem", cfg.imem_kb), ("dmem", cfg.dmem_kb)] {
        if kb == 0 || !kb.is_power_of_two() {
            bail!("--{label}-kb must be a nonzero power of two, got {kb}");
        }
    }
    if !cfg.program.exists() {
        bail!("file not found: {}", cfg.program.display());
    }
    let image = read_image_file(&cfg.program)
        .with_context(|| format!("cannot load {}", cfg.program.display()))?;
    let mut mem = MachineMemory::new(cfg.imem_kb * 1024, cfg.dmem_kb * 1024);
    mem.load_image(&image)
        .with_context(|| format!("cannot load {}", cfg.program.display()))?;
    Ok(mem)
}

pub fn run_once(cfg: &RunConfig) -> Result<RunOutcome> {
    let mem = load_machine(cfg)?;
    let sp = cfg.dmem_kb * 1024;
    let mut log = cfg.capture_log.then(String::new);
    let mut on_commit = |r: crate::refmodel::CommitRecord| {
        if let Some(log) = &mut log {
            log.push_str(&r.log_line());
            log.push('\n');
        }
    };
    match cfg.engine {
        Engine::Pipeline => {
            let mut core = Core::new(mem, cfg.fetch, cfg.bpred, cfg.echo_console);
            if cfg.sp_init {
                core.set_reg(2, sp);
            }
            let status = loop {
                if core.stats.cycles >= cfg.max_cycles {
                    break core.run(0, &mut on_commit); // latches the step limit
                }
                if let Some(status) = core.tick(&mut on_commit) {
                    break status;
                }
                if cfg.trace {
                    eprintln!("{}", core.trace_line());
                }
            };
            Ok(RunOutcome {
                status,
                stats: core.stats,
                console: core.console.into_bytes(),
                log,
            })
        }
        Engine::Ref => {
            let mut model = RefModel::new(mem, cfg.echo_console);
            if cfg.sp_init {
                model.set_reg(2, sp);
            }
            let mut commits = 0u64;
            let status = model.run(cfg.max_cycles, &mut |r| {
                commits += 1;
                on_commit(r);
            });
            let stats = Stats {
                cycles: commits,
                instructions: commits,
                ..Stats::default()
            };
            Ok(RunOutcome {
                status,
                stats,
                console: model.console.into_bytes(),
                log,
            })
        }
    }
}

pub const STATS_CSV_HEADER: &str =
    "config, program, cycles, instructions, ipc, branches, mispredicts, hit_rate, fetch_misses, stalls";

pub fn config_name(engine: Engine, fetch: FetchKind, bpred: BpredKind) -> String {
    match engine {
        Engine::Ref => "ref".to_string(),
        Engine::Pipeline => format!("{}+{}", fetch.name(), bpred.name()),
    }
}

/// The hit rate a report should show: a predictor-less run has
/// mispredict counts (every taken branch redirects) but no meaningful
/// prediction accuracy, and neither does the reference model.
pub fn reported_hit_rate(engine: Engine, bpred: BpredKind, stats: &Stats) -> Option<f64> {
    match (engine, bpred) {
        (Engine::Ref, _) | (_, BpredKind::None) => None,
        _ => stats.hit_rate(),
    }
}

pub fn stats_csv_row(config: &str, program: &str, stats: &Stats, hit_rate: Option<f64>) -> String {
    let hit = hit_rate.map_or_else(|| "N/A".to_string(), |h| format!("{h:.6}"));
    format!(
        "{config}, {program}, {}, {}, {:.6}, {}, {}, {hit}, {}, {}",
        stats.cycles,
        stats.instructions,
        stats.ipc(),
        stats.branches,
        stats.mispredicts,
        stats.fetch_misses,
        stats.load_use_stalls,
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiffOutcome {
    Identical {
        lines: usize,
    },
    /// The first line where the logs disagree, and the first field
    /// within it.
    Divergence {
        line: usize,
        field: String,
        a: String,
        b: String,
    },
    /// One log is a prefix of the other.
    LengthMismatch {
        common_lines: usize,
        lines_a: usize,
        lines_b: usize,
    },
}

impl DiffOutcome {
    pub fn is_identical(&self) -> bool {
        matches!(self, DiffOutcome::Identical { .. })
    }
}

impl std::fmt::Display for DiffOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DiffOutcome::Identical { lines } => write!(f, "identical ({lines} lines)"),
            DiffOutcome::Divergence { line, field, a, b } => {
                writeln!(f, "first divergence at line {line}, field {field}:")?;
                writeln!(f, "  a: {a}")?;
                write!(f, "  b: {b}")
            }
            DiffOutcome::LengthMismatch {
                common_lines,
                lines_a,
                lines_b,
            } => write!(
                f,
                "length mismatch after {common_lines} identical lines: a has {lines_a}, b has {lines_b}"
            ),
        }
    }
}

fn check_log_line(which: &str, n: usize, line: &str) -> Result<()> {
    let mut fields = line.split(' ');
    let ok = fields.clone().count() == 34
        && fields.all(|field| {
            field.split_once('=').is_some_and(|(name, value)| {
                !name.is_empty()
                    && value.len() == 8
                    && value.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
            })
        })
        && line.starts_with("PC=")
        && line[12..].starts_with("IR=");
    if !ok {
        bail!("malformed log line {n} in {which}: {line:?}");
    }
    Ok(())
}

/// Compare two commit logs.  Both must be in the canonical one-line-per-
/// commit format.
pub fn diff_logs(a: &str, b: &str) -> Result<DiffOutcome> {
    let la: Vec<&str> = a.lines().collect();
    let lb: Vec<&str> = b.lines().collect();
    for (i, (x, y)) in la.iter().zip(&lb).enumerate() {
        check_log_line("a", i + 1, x)?;
        check_log_line("b", i + 1, y)?;
        if x != y {
            let field = x
                .split(' ')
                .zip(y.split(' '))
                .find(|(fx, fy)| fx != fy)
                .and_then(|(fx, _)| fx.split('=').next())
                .unwrap_or("?")
                .to_string();
            return Ok(DiffOutcome::Divergence {
                line: i + 1,
                field,
                a: x.to_string(),
                b: y.to_string(),
            });
        }
    }
    if la.len() != lb.len() {
        return Ok(DiffOutcome::LengthMismatch {
            common_lines: la.len().min(lb.len()),
            lines_a: la.len(),
            lines_b: lb.len(),
        });
    }
    Ok(DiffOutcome::Identical { lines: la.len() })
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub dir: PathBuf,
    pub fetches: Vec<FetchKind>,
    pub bpreds: Vec<BpredKind>,
    pub imem_kb: u32,
    pub dmem_kb: u32,
    pub max_cycles: u64,
    pub sp_init: bool,
    /// Worker threads; 0 uses the default pool.
    pub jobs: usize,
}

impl BenchConfig {
    pub fn new(dir: impl Into<PathBuf>) -> BenchConfig {
        BenchConfig {
            dir: dir.into(),
            fetches: FetchKind::ALL.to_vec(),
            bpreds: BpredKind::ALL.to_vec(),
            imem_kb: 64,
            dmem_kb: 64,
            max_cycles: 1_000_000_000,
            sp_init: false,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchCell {
    pub program: String,
    pub fetch: FetchKind,
    pub bpred: BpredKind,
    pub result: Result<(ExitStatus, Stats), String>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
}

/// Measured on the equivalent RTL designs running Embench (rv32ic, -O2,
/// 64 KiB memories); printed with every report for orientation.
pub const RTL_REFERENCE: &[(&str, f64, f64)] = &[
    ("dualpc+gshare", 0.857, 0.788),
    ("buffered+gshare", 0.846, 0.798),
];

impl BenchReport {
    pub fn csv(&self) -> String {
        let mut out = String::from(STATS_CSV_HEADER);
        out.push('\n');
        for cell in &self.cells {
            if let Ok((_, stats)) = &cell.result {
                let config = config_name(Engine::Pipeline, cell.fetch, cell.bpred);
                let hit = reported_hit_rate(Engine::Pipeline, cell.bpred, stats);
                out.push_str(&stats_csv_row(&config, &cell.program, stats, hit));
                out.push('\n');
            }
        }
        out
    }

    pub fn failures(&self) -> Vec<String> {
        self.cells
            .iter()
            .filter_map(|c| {
                c.result.as_ref().err().map(|e| {
                    format!(
                        "{} [{}]: {e}",
                        c.program,
                        config_name(Engine::Pipeline, c.fetch, c.bpred)
                    )
                })
            })
            .collect()
    }

    /// Programs whose successful cells disagree on committed instruction
    /// count — which would mean the engines are not architecture-equal.
    pub fn commit_mismatches(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut programs: Vec<&str> = self.cells.iter().map(|c| c.program.as_str()).collect();
        programs.dedup();
        for program in programs {
            let counts: Vec<u64> = self
                .cells
                .iter()
                .filter(|c| c.program == program)
                .filter_map(|c| c.result.as_ref().ok().map(|(_, s)| s.instructions))
                .collect();
            if counts.windows(2).any(|w| w[0] != w[1]) {
                out.push(format!("{program}: instruction counts {counts:?}"));
            }
        }
        out
    }

    fn config_cells(&self, fetch: FetchKind, bpred: BpredKind) -> impl Iterator<Item = &Stats> {
        self.cells
            .iter()
            .filter(move |c| c.fetch == fetch && c.bpred == bpred)
            .filter_map(|c| c.result.as_ref().ok().map(|(_, s)| s))
    }

    /// Arithmetic mean IPC over the configuration's successful cells.
    pub fn mean_ipc(&self, fetch: FetchKind, bpred: BpredKind) -> Option<f64> {
        let ipcs: Vec<f64> = self.config_cells(fetch, bpred).map(Stats::ipc).collect();
        (!ipcs.is_empty()).then(|| ipcs.iter().sum::<f64>() / ipcs.len() as f64)
    }

    pub fn mean_hit_rate(&self, fetch: FetchKind, bpred: BpredKind) -> Option<f64> {
        let hits: Vec<f64> = self
            .config_cells(fetch, bpred)
            .filter_map(|s| reported_hit_rate(Engine::Pipeline, bpred, s))
            .collect();
        (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64)
    }

    /// Human-readable table: one row per cell, config means, the RTL
    /// reference points, and any failures.
    pub fn text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:<18} {:>12} {:>14} {:>8} {:>10}\n",
            "program", "config", "cycles", "instructions", "ipc", "hit_rate"
        ));
        for cell in &self.cells {
            let config = config_name(Engine::Pipeline, cell.fetch, cell.bpred);
            match &cell.result {
                Ok((_, stats)) => {
                    let hit = reported_hit_rate(Engine::Pipeline, cell.bpred, stats)
                        .map_or_else(|| "N/A".to_string(), |h| format!("{h:.3}"));
                    out.push_str(&format!(
                        "{:<24} {:<18} {:>12} {:>14} {:>8.3} {:>10}\n",
                        cell.program, config, stats.cycles, stats.instructions,
                        stats.ipc(), hit
                    ));
                }
                Err(e) => {
                    out.push_str(&format!("{:<24} {:<18} failed: {e}\n", cell.program, config));
                }
            }
        }
        out.push('\n');
        let mut seen = Vec::new();
        for cell in &self.cells {
            if seen.contains(&(cell.fetch, cell.bpred)) {
                continue;
            }
            seen.push((cell.fetch, cell.bpred));
            if let Some(ipc) = self.mean_ipc(cell.fetch, cell.bpred) {
                let hit = self
                    .mean_hit_rate(cell.fetch, cell.bpred)
                    .map_or_else(|| "N/A".to_string(), |h| format!("{h:.3}"));
                out.push_str(&format!(
                    "mean over programs   {:<18} ipc {ipc:.3}  hit_rate {hit}\n",
                    config_name(Engine::Pipeline, cell.fetch, cell.bpred)
                ));
            }
        }
        out.push_str("\nRTL reference points (Embench, rv32ic -O2, 64 KiB memories):\n");
        for (config, ipc, hit) in RTL_REFERENCE {
            out.push_str(&format!(
                "  {config:<18} mean ipc {ipc:.3}  hit_rate {hit:.3}\n"
            ));
        }
        let failures = self.failures();
        if !failures.is_empty() {
            out.push_str("\nfailures:\n");
            for f in &failures {
                out.push_str(&format!("  {f}\n"));
            }
        }
        let mismatches = self.commit_mismatches();
        if !mismatches.is_empty() {
            out.push_str("\ninstruction-count mismatches across configs:\n");
            for m in &mismatches {
                out.push_str(&format!("  {m}\n"));
            }
        }
        out
    }

    pub fn ok(&self) -> bool {
        self.failures().is_empty() && self.commit_mismatches().is_empty()
    }
}

/// Run every program in `dir` (`.bin`/`.hex`) under every fetch ×
/// predictor combination.  Cells run in parallel; output order is
/// deterministic (programs sorted by name, configurations in the order
/// given).
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let mut programs: Vec<(String, Result<Vec<u8>, String>)> = Vec::new();
    let entries = std::fs::read_dir(&cfg.dir)
        .with_context(|| format!("cannot read suite directory {}", cfg.dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        let is_program = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("bin") || e.eq_ignore_ascii_case("hex"));
        if is_program {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let image = read_image_file(&path).map_err(|e| e.to_string());
            programs.push((name, image));
        }
    }
    if programs.is_empty() {
        bail!("no .bin or .hex programs in {}", cfg.dir.display());
    }
    programs.sort_by(|a, b| a.0.cmp(&b.0));

    let mut specs = Vec::new();
    for (i, _) in programs.iter().enumerate() {
        for &fetch in &cfg.fetches {
            for &bpred in &cfg.bpreds {
                specs.push((i, fetch, bpred));
            }
        }
    }
    let run_cell = |&(i, fetch, bpred): &(usize, FetchKind, BpredKind)| -> BenchCell {
        let (name, image) = &programs[i];
        let result = image.as_ref().map_err(Clone::clone).and_then(|image| {
            let mut mem = MachineMemory::new(cfg.imem_kb * 1024, cfg.dmem_kb * 1024);
            mem.load_image(image).map_err(|e| e.to_string())?;
            let mut core = Core::new(mem, fetch, bpred, false);
            if cfg.sp_init {
                core.set_reg(2, cfg.dmem_kb * 1024);
            }
            let status = core.run(cfg.max_cycles, &mut |_| {});
            if status.is_success() {
                Ok((status, core.stats))
            } else {
                Err(status.to_string())
            }
        });
        BenchCell {
            program: name.clone(),
            fetch,
            bpred,
            result,
        }
    };
    let cells = if cfg.jobs == 1 {
        specs.iter().map(run_cell).collect()
    } else if cfg.jobs == 0 {
        specs.par_iter().map(run_cell).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .context("building bench worker pool")?
            .install(|| specs.par_iter().map(run_cell).collect())
    };
    Ok(BenchReport { cells })
}

/// Write a generated program image and its manifest next to each other:
/// `stem.bin` and `stem.manifest.json`.
pub fn write_generated(g: &gen::Generated, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let bin = stem.with_extension("bin");
    let manifest = stem.with_extension("manifest.json");
    std::fs::write(&bin, &g.image).with_context(|| format!("writing {}", bin.display()))?;
    std::fs::write(&manifest, g.manifest_json())
        .with_context(|| format!("writing {}", manifest.display()))?;
    Ok((bin, manifest))
}
