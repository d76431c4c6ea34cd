//! Stress-program generators.
//!
//! Each generator emits a flat binary plus a manifest of machine-checkable
//! expectations: an exit code, a cycle budget that is sufficient on every
//! engine and configuration, and (where the program is built to pin down
//! one counter) the exact expected counter value.  Programs always
//! terminate by storing to the exit register; random programs use only
//! forward branches and counted loops, so termination does not depend on
//! the data values they happen to compute.

use crate::isa::asm::Asm;
use crate::isa::{Csr, Op};
use crate::memsys::{EXIT_ADDR, PUTCHAR_ADDR};
use anyhow::{bail, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    /// Loop whose taken backedge targets a straddling 32-bit instruction:
    /// one fetch miss per iteration on the buffered unit, none on dual-pc.
    Fetchmiss,
    /// A branch with strictly alternating outcome: global history
    /// disambiguates it, a per-address counter cannot.
    BimodalKiller,
    /// Back-to-back load → use pairs, one pipeline stall each.
    LoadUse,
    /// Seeded random mix of compressed/uncompressed ALU, memory, and
    /// forward control flow with bounded loops.
    Rand,
}

impl GenKind {
    pub const ALL: [GenKind; 4] = [
        GenKind::Fetchmiss,
        GenKind::BimodalKiller,
        GenKind::LoadUse,
        GenKind::Rand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GenKind::Fetchmiss => "fetchmiss",
            GenKind::BimodalKiller => "bimodal-killer",
            GenKind::LoadUse => "loaduse",
            GenKind::Rand => "rand",
        }
    }
}

impl std::fmt::Display for GenKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GenKind {
    type Err = String;

    fn from_str(s: &str) -> Result<GenKind, String> {
        GenKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown generator kind {s:?} (fetchmiss, bimodal-killer, loaduse, rand)"))
    }
}

/// What a generated program is expected to do, serialized as JSON next
/// to the binary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub kind: String,
    pub seed: u64,
    pub size: u32,
    /// Memory sizes the expectations assume (the image and every
    /// generated data access fit inside them).
    pub imem_kb: u32,
    pub dmem_kb: u32,
    /// Running for this many cycles is enough to reach the exit store on
    /// any engine, fetch unit, and predictor.
    pub step_bound: u64,
    /// The program ends by storing this code to the exit register.
    pub exit_code: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_fetch_misses_buffered: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_fetch_misses_dualpc: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_load_use_stalls: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_branches: Option<u64>,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub image: Vec<u8>,
    pub manifest: Manifest,
}

impl Generated {
    pub fn manifest_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn generate(kind: GenKind, seed: u64, size: u32) -> Result<Generated> {
    match kind {
        GenKind::Fetchmiss => gen_fetchmiss(seed, size),
        GenKind::BimodalKiller => gen_bimodal_killer(seed, size),
        GenKind::LoadUse => gen_loaduse(seed, size),
        GenKind::Rand => gen_rand(seed, size),
    }
}

fn base_manifest(kind: GenKind, seed: u64, size: u32) -> Manifest {
    Manifest {
        kind: kind.name().to_string(),
        seed,
        size,
        imem_kb: 64,
        dmem_kb: 64,
        step_bound: 0,
        exit_code: 0,
        expected_fetch_misses_buffered: None,
        expected_fetch_misses_dualpc: None,
        expected_load_use_stalls: None,
        expected_branches: None,
        note: String::new(),
    }
}

/// `li exit-code; sw` through x29/x31 (generators keep those registers
/// free).
fn exit_stub(a: &mut Asm, code: u32) {
    a.li(29, code as i32);
    a.li(31, EXIT_ADDR as i32);
    a.store(Op::Sw, 29, 31, 0);
}

fn count_as_i32(size: u32) -> Result<i32> {
    if size == 0 {
        bail!("size must be at least 1");
    }
    i32::try_from(size).map_err(|_| anyhow::anyhow!("size {size} is too large"))
}

fn gen_fetchmiss(seed: u64, size: u32) -> Result<Generated> {
    let n = count_as_i32(size)?;
    let mut a = Asm::new();
    // Count down from n+1 so the backedge is taken exactly n times; every
    // taken branch redirects to a 32-bit instruction at an odd halfword
    // address, which costs the buffered unit a refill.
    a.li(5, n.checked_add(1).ok_or_else(|| anyhow::anyhow!("size {size} is too large"))?);
    a.pad_to_parity(2);
    let top = a.here_label();
    debug_assert_eq!(a.here() % 4, 2);
    a.addi(5, 5, -1);
    a.branch(Op::Bne, 5, 0, top);
    exit_stub(&mut a, 0);
    let mut manifest = base_manifest(GenKind::Fetchmiss, seed, size);
    // Worst case per iteration: two instructions, a three-slot flush, a
    // fetch miss, and slack for the naive unit's straddle penalties.
    manifest.step_bound = 12 * (size as u64 + 2) + 400;
    manifest.expected_fetch_misses_buffered = Some(size as u64);
    manifest.expected_fetch_misses_dualpc = Some(0);
    manifest.note = format!(
        "countdown loop, backedge taken {size} times; loop head is a straddling \
         32-bit instruction, so each taken branch is one buffered fetch miss"
    );
    Ok(Generated {
        image: a.finish().expect("fetchmiss program assembles"),
        manifest,
    })
}

fn gen_bimodal_killer(seed: u64, size: u32) -> Result<Generated> {
    let iters = count_as_i32(size)?;
    let mut a = Asm::new();
    a.li(5, iters); // iteration counter
    a.li(6, 0); // parity driver
    a.li(8, 0); // sink for the not-taken path
    let top = a.here_label();
    a.alu_imm(Op::Andi, 7, 6, 1);
    a.alu_imm(Op::Xori, 6, 6, 1);
    let skip = a.label();
    // Taken on even parity, not taken on odd: a per-address 2-bit counter
    // oscillates between its weak states and mispredicts every time,
    // while history-indexed counters see two constant-outcome contexts.
    a.branch(Op::Beq, 7, 0, skip);
    a.alu_imm(Op::Addi, 8, 8, 1);
    a.bind(skip);
    a.addi(5, 5, -1);
    a.branch(Op::Bne, 5, 0, top);
    exit_stub(&mut a, 0);
    let mut manifest = base_manifest(GenKind::BimodalKiller, seed, size);
    manifest.step_bound = 30 * (size as u64) + 500;
    manifest.expected_branches = Some(2 * size as u64);
    manifest.note = format!(
        "one strictly alternating branch plus a loop backedge: {size} iterations, \
         two conditional branches each"
    );
    Ok(Generated {
        image: a.finish().expect("bimodal-killer program assembles"),
        manifest,
    })
}

fn gen_loaduse(seed: u64, size: u32) -> Result<Generated> {
    let k = count_as_i32(size)?;
    let mut a = Asm::new();
    for _ in 0..k {
        a.load(Op::Lw, 6, 0, 8);
        a.alu_reg(Op::Add, 7, 7, 6); // consumes the load in the next slot
    }
    exit_stub(&mut a, 0);
    let mut manifest = base_manifest(GenKind::LoadUse, seed, size);
    manifest.step_bound = 6 * (size as u64) + 200;
    manifest.expected_load_use_stalls = Some(size as u64);
    manifest.note = format!("{size} back-to-back load-use pairs, one stall each");
    Ok(Generated {
        image: a.finish().expect("loaduse program assembles"),
        manifest,
    })
}

/// General-purpose registers the random generator reads and writes.
/// x28 is the loop counter, x29/x30/x31 hold exit/putchar plumbing, and
/// x1 only ever receives jump links.
const POOL: [u8; 11] = [5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15];
/// The subset addressable by compressed instructions.
const CPOOL: [u8; 8] = [8, 9, 10, 11, 12, 13, 14, 15];
/// Generated data accesses stay below this (so 64 KiB memories fit).
const SCRATCH_TOP: u32 = 32 * 1024;

fn pick(rng: &mut ChaCha8Rng, xs: &[u8]) -> u8 {
    xs[rng.random_range(0..xs.len())]
}

fn scratch_addr(rng: &mut ChaCha8Rng, align: u32) -> i32 {
    (rng.random_range(0..SCRATCH_TOP / align) * align) as i32
}

/// One register-only instruction; used for loop bodies and branch
/// shadows, where memory access or control flow would complicate the
/// commit-count bookkeeping.
fn emit_simple(a: &mut Asm, rng: &mut ChaCha8Rng) {
    match rng.random_range(0..5) {
        0 => {
            let op = [Op::Addi, Op::Andi, Op::Ori, Op::Xori, Op::Slti, Op::Sltiu]
                [rng.random_range(0..6)];
            a.alu_imm(op, pick(rng, &POOL), pick(rng, &POOL), rng.random_range(-2048..=2047));
        }
        1 => {
            let op = [Op::Slli, Op::Srli, Op::Srai][rng.random_range(0..3)];
            a.alu_imm(op, pick(rng, &POOL), pick(rng, &POOL), rng.random_range(0..=31));
        }
        2 => {
            let op = [
                Op::Add,
                Op::Sub,
                Op::And,
                Op::Or,
                Op::Xor,
                Op::Slt,
                Op::Sltu,
                Op::Sll,
                Op::Srl,
                Op::Sra,
            ][rng.random_range(0..10)];
            a.alu_reg(op, pick(rng, &POOL), pick(rng, &POOL), pick(rng, &POOL));
        }
        3 => {
            let imm = loop {
                let i = rng.random_range(-32..=31);
                if i != 0 {
                    break i;
                }
            };
            a.c_addi(pick(rng, &POOL), imm);
        }
        _ => {
            let op = [Op::And, Op::Or, Op::Xor, Op::Sub][rng.random_range(0..4)];
            a.c_alu(op, pick(rng, &CPOOL), pick(rng, &CPOOL));
        }
    }
}

fn gen_rand(seed: u64, size: u32) -> Result<Generated> {
    if size < 128 {
        bail!("size {size} too small: a random program needs at least 128 bytes for register setup and the exit stub");
    }
    let byte_budget = size.min(16 * 1024);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Asm::new();
    // Upper bound on committed instructions; loop bodies are counted at
    // full trip count, branch shadows as if they always execute.
    let mut est: u64 = 0;

    for r in POOL {
        a.li(r, rng.random_range(-2048..=2047));
        est += 1;
    }
    a.li(30, PUTCHAR_ADDR as i32);
    est += 2;

    while a.here() + 96 < byte_budget && est < 9_000 {
        match rng.random_range(0..100) {
            0..=39 => {
                emit_simple(&mut a, &mut rng);
                est += 1;
            }
            40..=45 => {
                a.c_li(pick(&mut rng, &POOL), rng.random_range(-32..=31));
                est += 1;
            }
            46..=49 => {
                a.c_mv(pick(&mut rng, &POOL), pick(&mut rng, &POOL));
                est += 1;
            }
            50..=59 => {
                // 32-bit memory op through a freshly materialized base.
                let base = pick(&mut rng, &POOL);
                let (op, align) = [
                    (Op::Lw, 4),
                    (Op::Lh, 2),
                    (Op::Lhu, 2),
                    (Op::Lb, 1),
                    (Op::Lbu, 1),
                    (Op::Sw, 4),
                    (Op::Sh, 2),
                    (Op::Sb, 1),
                ][rng.random_range(0..8)];
                a.li(base, scratch_addr(&mut rng, align));
                if op.is_store() {
                    a.store(op, pick(&mut rng, &POOL), base, 0);
                } else {
                    a.load(op, pick(&mut rng, &POOL), base, 0);
                }
                est += 3;
            }
            60..=66 => {
                let base = pick(&mut rng, &CPOOL);
                a.li(base, scratch_addr(&mut rng, 4));
                let imm = rng.random_range(0..32) * 4;
                if rng.random_bool(0.5) {
                    a.c_sw(pick(&mut rng, &CPOOL), base, imm);
                } else {
                    a.c_lw(pick(&mut rng, &CPOOL), base, imm);
                }
                est += 3;
            }
            67..=76 => {
                // Forward conditional branch over a short shadow.
                let op = [Op::Beq, Op::Bne, Op::Blt, Op::Bge, Op::Bltu, Op::Bgeu]
                    [rng.random_range(0..6)];
                let over = a.label();
                a.branch(op, pick(&mut rng, &POOL), pick(&mut rng, &POOL), over);
                for _ in 0..rng.random_range(1..=3) {
                    emit_simple(&mut a, &mut rng);
                    est += 1;
                }
                a.bind(over);
                est += 1;
            }
            77..=80 => {
                let op = if rng.random_bool(0.5) { Op::Beq } else { Op::Bne };
                let over = a.label();
                a.c_branch(op, pick(&mut rng, &CPOOL), over);
                for _ in 0..rng.random_range(1..=2) {
                    emit_simple(&mut a, &mut rng);
                    est += 1;
                }
                a.bind(over);
                est += 1;
            }
            81..=85 => {
                let over = a.label();
                if rng.random_bool(0.5) {
                    a.jal([0, 1, 5][rng.random_range(0..3)], over);
                } else {
                    a.c_j(over);
                }
                for _ in 0..rng.random_range(1..=2) {
                    emit_simple(&mut a, &mut rng);
                    est += 1;
                }
                a.bind(over);
                est += 1;
            }
            86..=88 => {
                // Register-indirect jump to a pc-relative target: skips
                // exactly the one filler word after the jalr.
                let t = pick(&mut rng, &POOL);
                a.auipc(t, 0);
                a.jalr([0, 1][rng.random_range(0..2)], t, 12);
                a.addi(pick(&mut rng, &POOL), 0, 1); // skipped
                est += 3;
            }
            89..=96 => {
                // Counted loop; body avoids memory and control flow so the
                // trip count fully determines its commits.
                let n = rng.random_range(2..=12);
                a.li(28, n);
                let top = a.here_label();
                let body = rng.random_range(1..=4);
                for _ in 0..body {
                    emit_simple(&mut a, &mut rng);
                }
                a.addi(28, 28, -1);
                a.branch(Op::Bne, 28, 0, top);
                est += 1 + n as u64 * (body as u64 + 2);
            }
            97..=98 => {
                a.csr_read(pick(&mut rng, &POOL), Csr::Instret);
                est += 1;
            }
            _ => {
                let b = pick(&mut rng, &POOL);
                a.li(b, rng.random_range(32..=126));
                a.store(Op::Sw, b, 30, 0);
                est += 2;
            }
        }
    }

    // Benchmark convention: zero means the run completed.  The commit
    // log pins every register value, so a randomized code would add no
    // differential power.
    exit_stub(&mut a, 0);
    est += 3;

    let mut manifest = base_manifest(GenKind::Rand, seed, size);
    manifest.step_bound = 12 * est + 2_000;
    manifest.note = format!(
        "seeded random mix, at most {est} committed instructions; forward \
         branches and counted loops only"
    );
    Ok(Generated {
        image: a.finish().expect("random program assembles"),
        manifest,
    })
}
