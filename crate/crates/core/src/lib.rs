//! Cycle-accurate simulator of a five-stage RV32IC soft processor.
//!
//! The interesting part of the machine is instruction fetch: with the C
//! extension enabled, instructions are 16-bit aligned, so a 32-bit
//! instruction can straddle two 32-bit memory entries and a single-ported
//! fetch path either buffers half-words or pays an extra cycle.  The
//! pipeline modeled here keeps two program counters (`pc` and `pc + 2`),
//! reads two 16-bit entries of a dual-ported instruction memory per cycle,
//! and precomputes the `+2` twin of every next-PC candidate, so any
//! instruction is fetched in one cycle regardless of alignment.
//!
//! Modules:
//! - [`isa`]: RV32IC decode (direct 16-bit decode plus a decompression
//!   oracle), a programmatic encoder and a small assembler for tests.
//! - [`memsys`]: instruction/data memories, image loaders and the two MMIO
//!   registers (exit, putchar).
//! - [`fetch`]: the dual-PC fetch unit and the two baseline units it is
//!   compared against.
//! - [`bpred`]: gshare/bimodal predictor with predecessor-indexed tables.
//! - [`refmodel`]: one-instruction-per-step reference interpreter; defines
//!   the commit-log format used for differential testing.
//! - [`pipeline`]: the five-stage core itself.
//! - [`harness`]: run/diff/bench/gen plumbing shared by the CLI and the
//!   Python bindings.

pub mod bpred;
pub mod fetch;
pub mod harness;
pub mod isa;
pub mod memsys;
pub mod pipeline;
pub mod refmodel;

/// A memory access the simulated machine could not perform.
///
/// Fetch-side faults are detected in IF but only raised once the poisoned
/// instruction reaches the memory-access stage (a wrong-path fetch of a
/// garbage address must not kill the run).  Data-side faults are raised
/// where they happen, which is always architectural.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Fault {
    #[error("instruction fetch out of range at {addr:#010x}")]
    FetchOutOfRange { addr: u32 },
    #[error("data access out of range at {addr:#010x} (size {size})")]
    DataOutOfRange { addr: u32, size: u8 },
    #[error("misaligned {size}-byte data access at {addr:#010x}")]
    Misaligned { addr: u32, size: u8 },
}

/// Why a simulation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    /// The program stored `code` to the exit MMIO register.
    Exited(u32),
    /// ECALL reached the commit point.
    Ecall { pc: u32 },
    /// EBREAK reached the commit point.
    Ebreak { pc: u32 },
    /// An instruction that does not decode reached the commit point.
    IllegalInstruction { pc: u32, raw: u32 },
    /// The cycle/step budget ran out before the program finished.
    StepLimit,
    /// A memory fault, attributed to the faulting instruction.
    Fault { pc: u32, fault: Fault },
}

impl ExitStatus {
    /// Exit code stored by the program, if it exited through the MMIO
    /// register.
    pub fn exit_code(&self) -> Option<u32> {
        match self {
            ExitStatus::Exited(code) => Some(*code),
            _ => None,
        }
    }

    /// True when the program ran to completion and reported success.
    pub fn is_success(&self) -> bool {
        matches!(self, ExitStatus::Exited(0))
    }
}

impl std::fmt::Display for ExitStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExitStatus::Exited(code) => write!(f, "exit code={code}"),
            ExitStatus::Ecall { pc } => write!(f, "ecall pc={pc:#010x}"),
            ExitStatus::Ebreak { pc } => write!(f, "ebreak pc={pc:#010x}"),
            ExitStatus::IllegalInstruction { pc, raw } => {
                write!(f, "illegal instruction pc={pc:#010x} raw={raw:#010x}")
            }
            ExitStatus::StepLimit => write!(f, "step limit reached"),
            ExitStatus::Fault { pc, fault } => write!(f, "fault pc={pc:#010x}: {fault}"),
        }
    }
}
