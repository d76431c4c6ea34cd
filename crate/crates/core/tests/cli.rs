//! End-to-end tests of the `rvcsim` binary: subcommands, exit codes, and
//! the exact artifacts (logs, CSV) the command line promises.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rvcsim_core::isa::asm::Asm;
use rvcsim_core::isa::Op;
use rvcsim_core::memsys::{EXIT_ADDR, PUTCHAR_ADDR};

/// Build a `Command` for the compiled binary with every `RVCSIM_` override
/// scrubbed, so tests only see the environment they set themselves.
fn rvcsim() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rvcsim"));
    for (key, _) in std::env::vars_os() {
        if key.to_string_lossy().starts_with("RVCSIM_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    rvcsim()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// li a0,'A'; store to the console port; store 0 to the exit port.
fn putchar_a_image() -> Vec<u8> {
    let mut a = Asm::new();
    a.li(10, 'A' as i32);
    a.li(31, PUTCHAR_ADDR as i32);
    a.store(Op::Sw, 10, 31, 0);
    a.li(29, 0);
    a.li(31, EXIT_ADDR as i32);
    a.store(Op::Sw, 29, 31, 0);
    a.finish().unwrap()
}

#[test]
fn run_echoes_console_output_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("putc.bin"), putchar_a_image()).unwrap();

    for engine in ["ref", "pipeline"] {
        let out = run_in(dir.path(), &["run", "putc.bin", "--engine", engine]);
        assert_eq!(code(&out), 0, "engine {engine}: {}", stderr(&out));
        assert_eq!(stdout(&out), "A", "console bytes go to stdout");
        assert!(stderr(&out).contains("exit code=0"));
    }
}

#[test]
fn both_engines_log_identical_commits() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["gen", "rand", "--seed", "42", "--size", "3000", "--out", "r"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("r.bin").exists());

    let out = run_in(dir.path(), &["run", "r.bin", "--log", "pipe.log"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run_in(dir.path(), &["run", "r.bin", "--engine", "ref", "--log", "ref.log"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let pipe = fs::read(dir.path().join("pipe.log")).unwrap();
    let reference = fs::read(dir.path().join("ref.log")).unwrap();
    assert_eq!(pipe, reference);

    let out = run_in(dir.path(), &["diff", "pipe.log", "ref.log"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("identical"));
}

#[test]
fn diff_reports_the_divergence_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("putc.bin"), putchar_a_image()).unwrap();
    let out = run_in(dir.path(), &["run", "putc.bin", "--log", "a.log"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // Corrupt one register field on the second line, keeping the line
    // well-formed so the divergence (not a parse error) is reported.
    let a = fs::read_to_string(dir.path().join("a.log")).unwrap();
    let mut lines: Vec<String> = a.lines().map(str::to_owned).collect();
    assert!(lines.len() >= 2);
    lines[1] = lines[1].replace("X31=", "X31=f");
    let shortened = lines[1].len() - 1;
    lines[1].truncate(shortened);
    fs::write(dir.path().join("b.log"), lines.join("\n") + "\n").unwrap();

    let out = run_in(dir.path(), &["diff", "a.log", "b.log"]);
    assert_eq!(code(&out), 2);
    let text = stdout(&out);
    assert!(text.contains("line 2"), "names the first differing line: {text}");
    assert!(text.contains("X31"), "names the first differing field: {text}");

    // A truncated log is a length mismatch, still exit 2.
    fs::write(dir.path().join("short.log"), lines[..1].join("\n") + "\n").unwrap();
    let out = run_in(dir.path(), &["diff", "a.log", "short.log"]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("length"));
}

#[test]
fn usage_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("putc.bin"), putchar_a_image()).unwrap();

    let out = run_in(dir.path(), &["run", "missing.bin"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("file not found"));

    let out = run_in(dir.path(), &["run", "putc.bin", "--fetch", "warp"]);
    assert_eq!(code(&out), 3);

    let out = run_in(dir.path(), &["run", "putc.bin", "--imem-kb", "48"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("power of two"));

    let out = run_in(dir.path(), &[]);
    assert_eq!(code(&out), 3, "a missing subcommand is a usage error");

    let out = run_in(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0, "help is not an error");
}

#[test]
fn faulting_and_timed_out_programs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // A bare ecall halts without reaching the exit port.
    fs::write(dir.path().join("ecall.bin"), [0x73u8, 0, 0, 0]).unwrap();
    let out = run_in(dir.path(), &["run", "ecall.bin"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("ecall"));

    fs::write(dir.path().join("putc.bin"), putchar_a_image()).unwrap();
    let out = run_in(dir.path(), &["run", "putc.bin", "--max-cycles", "3"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("step limit"));
}

#[test]
fn stats_rows_use_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("putc.bin"), putchar_a_image()).unwrap();

    let out = run_in(
        dir.path(),
        &["run", "putc.bin", "--fetch", "dualpc", "--bpred", "gshare", "--stats", "-"],
    );
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    // Console output ("A") is printed before the CSV is assembled.
    let text = text.strip_prefix('A').unwrap_or(&text);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "config, program, cycles, instructions, ipc, branches, mispredicts, hit_rate, fetch_misses, stalls"
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("dualpc+gshare, putc.bin, "));
    assert_eq!(row.split(", ").count(), 10);

    // The dual-ported fetch front end never misses.
    let misses: u64 = row.split(", ").nth(8).unwrap().parse().unwrap();
    assert_eq!(misses, 0);

    // bpred=none reports no hit rate.
    let out = run_in(dir.path(), &["run", "putc.bin", "--bpred", "none", "--stats", "-"]);
    let text = stdout(&out);
    assert!(text.contains(", N/A, "));

    // --stats can also target a file.
    let out = run_in(dir.path(), &["run", "putc.bin", "--stats", "s.csv"]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(csv.starts_with("config, program,"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn environment_variables_mirror_the_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("putc.bin"), putchar_a_image()).unwrap();

    let out = rvcsim()
        .current_dir(dir.path())
        .env("RVCSIM_FETCH", "naive")
        .env("RVCSIM_BPRED", "bimodal")
        .args(["run", "putc.bin", "--stats", "-"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("naive+bimodal, putc.bin, "));

    // An explicit flag wins over the environment.
    let out = rvcsim()
        .current_dir(dir.path())
        .env("RVCSIM_FETCH", "naive")
        .args(["run", "putc.bin", "--fetch", "buffered", "--stats", "-"])
        .output()
        .unwrap();
    assert!(stdout(&out).contains("buffered+"));
}

#[test]
fn sp_init_points_x2_at_the_top_of_data_memory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("putc.bin"), putchar_a_image()).unwrap();

    let out = run_in(dir.path(), &["run", "putc.bin", "--sp-init", "--dmem-kb", "64", "--log", "sp.log"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let log = fs::read_to_string(dir.path().join("sp.log")).unwrap();
    assert!(log.lines().next().unwrap().contains("X02=00010000"));

    let out = run_in(dir.path(), &["run", "putc.bin", "--log", "nosp.log"]);
    assert_eq!(code(&out), 0);
    let log = fs::read_to_string(dir.path().join("nosp.log")).unwrap();
    assert!(log.lines().next().unwrap().contains("X02=00000000"));
}

#[test]
fn gen_writes_program_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["gen", "fetchmiss", "--size", "25", "--out", "fm"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("fm.bin"));
    assert!(stdout(&out).contains("fm.manifest.json"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fm.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["kind"], "fetchmiss");
    assert_eq!(manifest["expected_fetch_misses_buffered"], 25);
    assert_eq!(manifest["expected_fetch_misses_dualpc"], 0);

    // The generators validate their size knob.
    let out = run_in(dir.path(), &["gen", "rand", "--size", "16", "--out", "tiny"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn bench_prints_csv_and_table_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    fs::create_dir(&suite).unwrap();
    for seed in [1u64, 2] {
        let out = run_in(
            dir.path(),
            &["gen", "rand", "--seed", &seed.to_string(), "--size", "1500",
              "--out", &format!("suite/r{seed}")],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }

    let args = ["bench", "suite", "--fetch", "dualpc,buffered", "--bpred", "none,gshare"];
    let first = run_in(dir.path(), &args);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let second = run_in(dir.path(), &args);
    assert_eq!(stdout(&first), stdout(&second), "bench output is deterministic");

    let text = stdout(&first);
    assert!(text.contains("config, program, cycles"));
    assert!(text.contains("dualpc+gshare"));
    assert!(text.contains("mean over programs"));
    assert!(text.contains("0.857"), "RTL reference block is printed");

    // --stats redirects the CSV to a file, leaving the table on stdout.
    let out = run_in(
        dir.path(),
        &["bench", "suite", "--fetch", "dualpc", "--bpred", "none", "--stats", "bench.csv"],
    );
    assert_eq!(code(&out), 0);
    assert!(!stdout(&out).contains("config, program"));
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(csv.starts_with("config, program, cycles"));

    // An empty suite directory is an input error.
    fs::create_dir(dir.path().join("empty")).unwrap();
    let out = run_in(dir.path(), &["bench", "empty"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("no .bin or .hex programs"));
}
