//! Instruction fetch units.
//!
//! Three models of the fetch path, all over the same 16-bit-entry
//! instruction memory:
//!
//! - [`fetch_dualpc`]: keeps two fetch addresses, `pc` and `pc + 2`, and
//!   reads both entries every cycle, so a 32-bit instruction straddling an
//!   aligned word boundary is assembled without an extra cycle.  Every
//!   fetch costs exactly one cycle.
//! - [`fetch_buffered`]: one aligned 32-bit read port plus a one-entry
//!   half-word buffer holding the upper half of the last word read.  The
//!   only fetch that costs two cycles is a redirect landing on
//!   `pc % 4 == 2` whose instruction turns out to be 32 bits wide.
//! - [`fetch_naive`]: one aligned 32-bit read port and no buffer; every
//!   straddling 32-bit instruction pays the extra cycle, redirect or not.
//!
//! Fault attribution: whichever entry read fails, the returned fault
//! carries the *instruction* address, so all units (and the reference
//! model, which fetches ideally) fault identically for the same program.

use crate::isa::{is_compressed, RawInst};
use crate::memsys::InstMemory;
use crate::Fault;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchResult {
    pub raw: RawInst,
    /// Cycles the fetch occupies the IF stage (1 or 2).
    pub cycles: u8,
    /// True when the second cycle was an alignment penalty.
    pub miss: bool,
}

impl FetchResult {
    fn half(h: u16) -> FetchResult {
        FetchResult {
            raw: RawInst::half(h),
            cycles: 1,
            miss: false,
        }
    }

    fn word(lo: u16, hi: u16, cycles: u8, miss: bool) -> FetchResult {
        FetchResult {
            raw: RawInst::word((hi as u32) << 16 | lo as u32),
            cycles,
            miss,
        }
    }
}

/// Upper half of the last aligned word a buffered unit read, waiting for
/// the fetch address to catch up with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferedHalf {
    pub addr: u32,
    pub half: u16,
}

fn fault_at(pc: u32) -> Fault {
    Fault::FetchOutOfRange { addr: pc }
}

/// Dual-PC fetch: both entries `(pc, pc + 2)` are read in the same cycle.
/// `pc2` is the second port's address register; it must trail `pc` by
/// exactly 2, and that invariant is checked on every call.
pub fn fetch_dualpc(pc: u32, pc2: u32, imem: &InstMemory) -> Result<FetchResult, Fault> {
    assert_eq!(
        pc2,
        pc.wrapping_add(2),
        "second fetch port must trail the first by 2 (pc={pc:#x})"
    );
    let lo = imem.read_half(pc).map_err(|_| fault_at(pc))?;
    if is_compressed(lo) {
        Ok(FetchResult::half(lo))
    } else {
        let hi = imem.read_half(pc2).map_err(|_| fault_at(pc))?;
        Ok(FetchResult::word(lo, hi, 1, false))
    }
}

/// Buffered single-port fetch.  The caller owns the buffer state and must
/// pass `None` after any redirect; the next state is returned alongside
/// the result.
pub fn fetch_buffered(
    buffer: Option<BufferedHalf>,
    pc: u32,
    imem: &InstMemory,
) -> Result<(FetchResult, Option<BufferedHalf>), Fault> {
    if pc.is_multiple_of(4) {
        // Sequential operation never leaves a buffered half behind when
        // the fetch address is aligned.
        debug_assert!(buffer.is_none(), "buffer holds a half at an aligned fetch");
        let word = imem.read_word_aligned(pc).map_err(|_| fault_at(pc))?;
        let (lo, hi) = (word as u16, (word >> 16) as u16);
        if is_compressed(lo) {
            Ok((FetchResult::half(lo), Some(BufferedHalf { addr: pc + 2, half: hi })))
        } else {
            Ok((FetchResult::word(lo, hi, 1, false), None))
        }
    } else {
        match buffer {
            Some(b) if b.addr == pc => {
                if is_compressed(b.half) {
                    Ok((FetchResult::half(b.half), None))
                } else {
                    // Low half from the buffer, high half from this
                    // cycle's read: the straddle costs nothing.
                    let word = imem.read_word_aligned(pc + 2).map_err(|_| fault_at(pc))?;
                    Ok((
                        FetchResult::word(b.half, word as u16, 1, false),
                        Some(BufferedHalf {
                            addr: pc + 4,
                            half: (word >> 16) as u16,
                        }),
                    ))
                }
            }
            stale => {
                debug_assert!(stale.is_none(), "buffer out of sync with fetch address");
                // Cold fetch at an odd half-word: first read the aligned
                // word containing pc, for its upper half.
                let word0 = imem.read_word_aligned(pc & !3).map_err(|_| fault_at(pc))?;
                let lo = (word0 >> 16) as u16;
                if is_compressed(lo) {
                    Ok((FetchResult::half(lo), None))
                } else {
                    // ...and only now the miss: a second cycle for the
                    // word holding the instruction's upper half.
                    let word1 = imem.read_word_aligned(pc + 2).map_err(|_| fault_at(pc))?;
                    Ok((
                        FetchResult::word(lo, word1 as u16, 2, true),
                        Some(BufferedHalf {
                            addr: pc + 4,
                            half: (word1 >> 16) as u16,
                        }),
                    ))
                }
            }
        }
    }
}

/// Unbuffered single-port fetch: the cold-path cost of [`fetch_buffered`]
/// on every straddling instruction.
pub fn fetch_naive(pc: u32, imem: &InstMemory) -> Result<FetchResult, Fault> {
    if pc.is_multiple_of(4) {
        let word = imem.read_word_aligned(pc).map_err(|_| fault_at(pc))?;
        let (lo, hi) = (word as u16, (word >> 16) as u16);
        if is_compressed(lo) {
            Ok(FetchResult::half(lo))
        } else {
            Ok(FetchResult::word(lo, hi, 1, false))
        }
    } else {
        let word0 = imem.read_word_aligned(pc & !3).map_err(|_| fault_at(pc))?;
        let lo = (word0 >> 16) as u16;
        if is_compressed(lo) {
            Ok(FetchResult::half(lo))
        } else {
            let word1 = imem.read_word_aligned(pc + 2).map_err(|_| fault_at(pc))?;
            Ok(FetchResult::word(lo, word1 as u16, 2, true))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FetchKind {
    DualPc,
    Buffered,
    Naive,
}

impl FetchKind {
    pub const ALL: [FetchKind; 3] = [FetchKind::DualPc, FetchKind::Buffered, FetchKind::Naive];

    pub fn name(self) -> &'static str {
        match self {
            FetchKind::DualPc => "dualpc",
            FetchKind::Buffered => "buffered",
            FetchKind::Naive => "naive",
        }
    }
}

impl std::fmt::Display for FetchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FetchKind {
    type Err = String;

    fn from_str(s: &str) -> Result<FetchKind, String> {
        match s {
            "dualpc" => Ok(FetchKind::DualPc),
            "buffered" => Ok(FetchKind::Buffered),
            "naive" => Ok(FetchKind::Naive),
            other => Err(format!("unknown fetch unit {other:?} (dualpc, buffered, naive)")),
        }
    }
}

/// Stateful wrapper the pipeline drives: dispatches to the unit models
/// and owns the half-word buffer for the buffered one.
pub struct FetchUnit {
    kind: FetchKind,
    buffer: Option<BufferedHalf>,
}

impl FetchUnit {
    pub fn new(kind: FetchKind) -> FetchUnit {
        FetchUnit { kind, buffer: None }
    }

    pub fn kind(&self) -> FetchKind {
        self.kind
    }

    /// Any redirect (reset, resolved branch, predicted-taken fetch)
    /// invalidates the buffered half.
    pub fn redirect(&mut self) {
        self.buffer = None;
    }

    pub fn fetch(&mut self, pc: u32, pc2: u32, imem: &InstMemory) -> Result<FetchResult, Fault> {
        match self.kind {
            FetchKind::DualPc => fetch_dualpc(pc, pc2, imem),
            FetchKind::Buffered => {
                let (result, buffer) = fetch_buffered(self.buffer.take(), pc, imem)?;
                self.buffer = buffer;
                Ok(result)
            }
            FetchKind::Naive => fetch_naive(pc, imem),
        }
    }
}
