//! Python bindings: run programs on the pipeline or the reference model,
//! diff commit logs, generate stress programs, and disassemble encodings,
//! all from Python.
//!
//! ```python
//! import rvcsim
//! image, manifest = rvcsim.generate("rand", seed=7, size=2048)
//! pipe = rvcsim.run(image, log=True)
//! ref = rvcsim.run(image, engine="ref", log=True)
//! assert rvcsim.diff(pipe.log, ref.log) is None
//! ```

use std::io::Write as _;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use rvcsim_core::bpred::BpredKind;
use rvcsim_core::fetch::FetchKind;
use rvcsim_core::harness::gen::{generate as gen_program, GenKind};
use rvcsim_core::harness::{
    config_name, diff_logs, reported_hit_rate, run_once, stats_csv_row, Engine, RunConfig,
    STATS_CSV_HEADER,
};
use rvcsim_core::isa::{disasm as disasm_raw, is_compressed, RawInst};

fn value_err(msg: String) -> PyErr {
    PyValueError::new_err(msg)
}

/// Everything one simulation produced: exit status, counters, console
/// bytes, and (when requested) the per-commit log.
#[pyclass(frozen)]
struct RunResult {
    #[pyo3(get)]
    config: String,
    #[pyo3(get)]
    status: String,
    #[pyo3(get)]
    exit_code: Option<u32>,
    #[pyo3(get)]
    success: bool,
    #[pyo3(get)]
    cycles: u64,
    #[pyo3(get)]
    instructions: u64,
    #[pyo3(get)]
    ipc: f64,
    #[pyo3(get)]
    branches: u64,
    #[pyo3(get)]
    mispredicts: u64,
    #[pyo3(get)]
    hit_rate: Option<f64>,
    #[pyo3(get)]
    fetch_misses: u64,
    #[pyo3(get)]
    load_use_stalls: u64,
    #[pyo3(get)]
    log: Option<String>,
    console_bytes: Vec<u8>,
    csv_row: String,
}

#[pymethods]
impl RunResult {
    /// Raw bytes the program wrote to the console port.
    #[getter]
    fn console<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.console_bytes)
    }

    /// The run as one CSV row in the harness layout (see `STATS_CSV_HEADER`).
    fn csv(&self) -> &str {
        &self.csv_row
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(config={:?}, status={:?}, cycles={}, instructions={}, ipc={:.3})",
            self.config, self.status, self.cycles, self.instructions, self.ipc
        )
    }
}

/// Accept a program as `bytes` (written to a temp file) or as a path.
fn program_path(program: &Bound<'_, PyAny>) -> PyResult<(PathBuf, Option<tempfile::TempPath>)> {
    if let Ok(bytes) = program.cast::<PyBytes>() {
        let mut file = tempfile::Builder::new()
            .suffix(".bin")
            .tempfile()
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        file.write_all(bytes.as_bytes())
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let path = file.into_temp_path();
        Ok((path.to_path_buf(), Some(path)))
    } else {
        Ok((program.extract::<PathBuf>()?, None))
    }
}

/// Run one program and return its `RunResult`.
///
/// `program` is either a path (str / os.PathLike) to a .bin/.hex image or
/// the image itself as `bytes`.  Keyword arguments mirror the CLI flags.
#[pyfunction]
#[pyo3(signature = (program, *, engine="pipeline", fetch="dualpc", bpred="gshare",
                    imem_kb=64, dmem_kb=64, max_cycles=100_000_000, sp_init=false, log=false))]
#[allow(clippy::too_many_arguments)]
fn run(
    program: &Bound<'_, PyAny>,
    engine: &str,
    fetch: &str,
    bpred: &str,
    imem_kb: u32,
    dmem_kb: u32,
    max_cycles: u64,
    sp_init: bool,
    log: bool,
) -> PyResult<RunResult> {
    let engine: Engine = engine.parse().map_err(value_err)?;
    let fetch: FetchKind = fetch.parse().map_err(value_err)?;
    let bpred: BpredKind = bpred.parse().map_err(value_err)?;
    let (path, _tmp) = program_path(program)?;

    let mut cfg = RunConfig::new(path);
    cfg.engine = engine;
    cfg.fetch = fetch;
    cfg.bpred = bpred;
    cfg.imem_kb = imem_kb;
    cfg.dmem_kb = dmem_kb;
    cfg.max_cycles = max_cycles;
    cfg.sp_init = sp_init;
    cfg.capture_log = log;

    let out = run_once(&cfg).map_err(|e| PyRuntimeError::new_err(format!("{e:#}")))?;
    let config = config_name(engine, fetch, bpred);
    let program_name = cfg
        .program
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let hit_rate = reported_hit_rate(engine, bpred, &out.stats);
    let csv_row = stats_csv_row(&config, &program_name, &out.stats, hit_rate);

    Ok(RunResult {
        config,
        status: out.status.to_string(),
        exit_code: out.status.exit_code(),
        success: out.status.is_success(),
        cycles: out.stats.cycles,
        instructions: out.stats.instructions,
        ipc: out.stats.ipc(),
        branches: out.stats.branches,
        mispredicts: out.stats.mispredicts,
        hit_rate,
        fetch_misses: out.stats.fetch_misses,
        load_use_stalls: out.stats.load_use_stalls,
        log: out.log,
        console_bytes: out.console,
        csv_row,
    })
}

/// Compare two commit logs.  Returns `None` when identical, otherwise a
/// description of the first divergence (line, both lines, first field).
#[pyfunction]
fn diff(log_a: &str, log_b: &str) -> PyResult<Option<String>> {
    let outcome = diff_logs(log_a, log_b).map_err(|e| value_err(format!("{e:#}")))?;
    Ok(if outcome.is_identical() { None } else { Some(outcome.to_string()) })
}

/// Generate a stress program.  Returns `(image_bytes, manifest_json)`.
///
/// Kinds: "fetchmiss", "bimodal-killer", "loaduse", "rand"; `size` is the
/// kind's knob (iterations, pair count, or byte budget).
#[pyfunction]
#[pyo3(signature = (kind, seed=0, size=1000))]
fn generate<'py>(
    py: Python<'py>,
    kind: &str,
    seed: u64,
    size: u32,
) -> PyResult<(Bound<'py, PyBytes>, String)> {
    let kind: GenKind = kind.parse().map_err(value_err)?;
    let generated = gen_program(kind, seed, size).map_err(|e| value_err(format!("{e:#}")))?;
    Ok((PyBytes::new(py, &generated.image), generated.manifest_json()))
}

/// Disassemble one encoding: 16-bit compressed if the low two bits are not
/// 0b11, else the full 32-bit word.
#[pyfunction]
fn disasm(bits: u32) -> PyResult<String> {
    if is_compressed(bits as u16) {
        if bits > u16::MAX as u32 {
            return Err(value_err(format!(
                "{bits:#x}: compressed encodings are 16 bits; got high bits with a non-11 low pair"
            )));
        }
        Ok(disasm_raw(RawInst::half(bits as u16)))
    } else {
        Ok(disasm_raw(RawInst::word(bits)))
    }
}

#[pymodule]
fn rvcsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(diff, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(disasm, m)?)?;
    m.add("STATS_CSV_HEADER", STATS_CSV_HEADER)?;
    Ok(())
}
