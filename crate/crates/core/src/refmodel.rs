//! One-instruction-per-step reference interpreter.
//!
//! This is the functional oracle for the pipeline: no timing, ideal
//! fetch, and its own execution code (deliberately not shared with the
//! pipeline's execute stage, so a bug in either shows up as a
//! differential mismatch rather than canceling out).  Commit records and
//! their log format are defined here; both engines must produce
//! byte-identical logs for the same program.
//!
//! Counter CSRs: `rdinstret` returns the number of instructions committed
//! before the reading one.  The reference model has no cycle notion, so
//! `rdcycle`/`rdtime` also return the instruction count; the pipeline
//! returns real cycle counts there, which is the one intended divergence
//! between the engines (generated programs avoid those two CSRs).

use crate::fetch::fetch_dualpc;
use crate::isa::{Csr, Op};
use crate::memsys::{ConsoleSink, MachineMemory, StoreEffect};
use crate::ExitStatus;

/// Architectural register state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchState {
    pub pc: u32,
    pub regs: [u32; 32],
    pub instret: u64,
}

impl ArchState {
    pub fn new() -> ArchState {
        ArchState {
            pc: 0,
            regs: [0; 32],
            instret: 0,
        }
    }
}

impl Default for ArchState {
    fn default() -> ArchState {
        ArchState::new()
    }
}

/// One committed instruction: address, raw encoding (compressed
/// instructions zero-extended to 32 bits) and the register file after
/// writeback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub pc: u32,
    pub raw: u32,
    pub regs: [u32; 32],
}

impl CommitRecord {
    /// Canonical log line: `PC=xxxxxxxx IR=xxxxxxxx X00=xxxxxxxx ...
    /// X31=xxxxxxxx`, lowercase hex values, single spaces, no newline.
    pub fn log_line(&self) -> String {
        use std::fmt::Write;
        let mut s = String::with_capacity(439);
        write!(s, "PC={:08x} IR={:08x}", self.pc, self.raw).unwrap();
        for (i, r) in self.regs.iter().enumerate() {
            write!(s, " X{i:02}={r:08x}").unwrap();
        }
        s
    }
}

pub struct RefModel {
    pub state: ArchState,
    pub mem: MachineMemory,
    pub console: ConsoleSink,
    halted: Option<ExitStatus>,
}

impl RefModel {
    pub fn new(mem: MachineMemory, echo: bool) -> RefModel {
        RefModel {
            state: ArchState::new(),
            mem,
            console: ConsoleSink::new(echo),
            halted: None,
        }
    }

    /// Why the machine stopped, if it has.
    pub fn halted(&self) -> Option<ExitStatus> {
        self.halted
    }

    pub fn set_reg(&mut self, r: u8, v: u32) {
        if r != 0 {
            self.state.regs[r as usize] = v;
        }
    }

    fn halt_with(&mut self, status: ExitStatus) -> ExitStatus {
        self.halted = Some(status);
        status
    }

    fn csr_value(&self, csr: Csr) -> u32 {
        match csr {
            Csr::Cycle | Csr::Time | Csr::Instret => self.state.instret as u32,
            Csr::Cycleh | Csr::Timeh | Csr::Instreth => (self.state.instret >> 32) as u32,
        }
    }

    /// Execute one instruction.  Returns the halt status if the machine
    /// stopped instead of (or, for the exit store, right after)
    /// committing.
    pub fn step(&mut self, on_commit: &mut dyn FnMut(CommitRecord)) -> Option<ExitStatus> {
        if let Some(status) = self.halted {
            return Some(status);
        }
        let pc = self.state.pc;
        let raw = match fetch_dualpc(pc, pc.wrapping_add(2), &self.mem.imem) {
            Ok(r) => r.raw,
            Err(fault) => return Some(self.halt_with(ExitStatus::Fault { pc, fault })),
        };
        let d = raw.decode();
        match d.op {
            Op::Illegal => {
                return Some(self.halt_with(ExitStatus::IllegalInstruction { pc, raw: raw.bits }))
            }
            Op::Ecall => return Some(self.halt_with(ExitStatus::Ecall { pc })),
            Op::Ebreak => return Some(self.halt_with(ExitStatus::Ebreak { pc })),
            _ => {}
        }

        let rs1 = self.state.regs[d.rs1 as usize];
        let rs2 = self.state.regs[d.rs2 as usize];
        let imm = d.imm as u32;
        let link = pc.wrapping_add(d.len as u32);
        let mut next = link;
        let mut wr: Option<u32> = None;
        let mut exit_code: Option<u32> = None;

        match d.op {
            Op::Lui => wr = Some(imm),
            Op::Auipc => wr = Some(pc.wrapping_add(imm)),
            Op::Jal => {
                wr = Some(link);
                next = pc.wrapping_add(imm);
            }
            Op::Jalr => {
                wr = Some(link);
                next = rs1.wrapping_add(imm) & !1;
            }
            Op::Beq | Op::Bne | Op::Blt | Op::Bge | Op::Bltu | Op::Bgeu => {
                let taken = match d.op {
                    Op::Beq => rs1 == rs2,
                    Op::Bne => rs1 != rs2,
                    Op::Blt => (rs1 as i32) < rs2 as i32,
                    Op::Bge => (rs1 as i32) >= rs2 as i32,
                    Op::Bltu => rs1 < rs2,
                    _ => rs1 >= rs2,
                };
                if taken {
                    next = pc.wrapping_add(imm);
                }
            }
            Op::Lb | Op::Lh | Op::Lw | Op::Lbu | Op::Lhu => {
                let addr = rs1.wrapping_add(imm);
                let v = match self.mem.dmem.load(addr, d.op.mem_size()) {
                    Ok(v) => v,
                    Err(fault) => return Some(self.halt_with(ExitStatus::Fault { pc, fault })),
                };
                wr = Some(match d.op {
                    Op::Lb => v as u8 as i8 as i32 as u32,
                    Op::Lh => v as u16 as i16 as i32 as u32,
                    _ => v,
                });
            }
            Op::Sb | Op::Sh | Op::Sw => {
                let addr = rs1.wrapping_add(imm);
                match self.mem.dmem.store(addr, d.op.mem_size(), rs2) {
                    Ok(StoreEffect::Plain) => {}
                    Ok(StoreEffect::Putchar(b)) => self.console.push(b),
                    Ok(StoreEffect::Exit(code)) => exit_code = Some(code),
                    Err(fault) => return Some(self.halt_with(ExitStatus::Fault { pc, fault })),
                }
            }
            Op::Addi => wr = Some(rs1.wrapping_add(imm)),
            Op::Slti => wr = Some(((rs1 as i32) < d.imm) as u32),
            Op::Sltiu => wr = Some((rs1 < imm) as u32),
            Op::Xori => wr = Some(rs1 ^ imm),
            Op::Ori => wr = Some(rs1 | imm),
            Op::Andi => wr = Some(rs1 & imm),
            Op::Slli => wr = Some(rs1 << d.imm),
            Op::Srli => wr = Some(rs1 >> d.imm),
            Op::Srai => wr = Some(((rs1 as i32) >> d.imm) as u32),
            Op::Add => wr = Some(rs1.wrapping_add(rs2)),
            Op::Sub => wr = Some(rs1.wrapping_sub(rs2)),
            Op::Sll => wr = Some(rs1 << (rs2 & 31)),
            Op::Slt => wr = Some(((rs1 as i32) < rs2 as i32) as u32),
            Op::Sltu => wr = Some((rs1 < rs2) as u32),
            Op::Xor => wr = Some(rs1 ^ rs2),
            Op::Srl => wr = Some(rs1 >> (rs2 & 31)),
            Op::Sra => wr = Some(((rs1 as i32) >> (rs2 & 31)) as u32),
            Op::Or => wr = Some(rs1 | rs2),
            Op::And => wr = Some(rs1 & rs2),
            Op::Fence => {}
            Op::CsrRead(csr) => wr = Some(self.csr_value(csr)),
            Op::Illegal | Op::Ecall | Op::Ebreak => unreachable!("handled before execution"),
        }

        if let (Some(v), true) = (wr, d.rd != 0) {
            self.state.regs[d.rd as usize] = v;
        }
        on_commit(CommitRecord {
            pc,
            raw: raw.bits,
            regs: self.state.regs,
        });
        self.state.pc = next;
        self.state.instret += 1;
        exit_code.map(|code| self.halt_with(ExitStatus::Exited(code)))
    }

    /// Run until the program halts or `max_steps` instructions commit.
    pub fn run(&mut self, max_steps: u64, on_commit: &mut dyn FnMut(CommitRecord)) -> ExitStatus {
        for _ in 0..max_steps {
            if let Some(status) = self.step(on_commit) {
                return status;
            }
        }
        self.halt_with(ExitStatus::StepLimit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::asm::Asm;
    use crate::isa::{desc, encode, Op};
    use crate::memsys::{EXIT_ADDR, PUTCHAR_ADDR};
    use crate::Fault;

    fn machine(bytes: &[u8]) -> RefModel {
        let mut mem = MachineMemory::new(4096, 4096);
        mem.load_image(bytes).unwrap();
        RefModel::new(mem, false)
    }

    fn run_collect(m: &mut RefModel, max: u64) -> (ExitStatus, Vec<CommitRecord>) {
        let mut commits = Vec::new();
        let status = m.run(max, &mut |r| commits.push(r));
        (status, commits)
    }

    /// `sw <reg>, 0(x31)` to the exit address.
    fn emit_exit(a: &mut Asm, reg_holding_code: u8) {
        a.li(31, EXIT_ADDR as i32);
        a.store(Op::Sw, reg_holding_code, 31, 0);
    }

    #[test]
    fn straight_line_program_exits() {
        let mut a = Asm::new();
        a.li(10, 7);
        emit_exit(&mut a, 10);
        let (status, commits) = run_collect(&mut machine(&a.finish().unwrap()), 100);
        assert_eq!(status, ExitStatus::Exited(7));
        assert_eq!(status.exit_code(), Some(7));
        // addi x10, lui x31 (the low half of the exit address is zero), sw
        assert_eq!(commits.len(), 3);
        assert_eq!(commits[0].regs[10], 7);
        assert_eq!(commits.last().unwrap().regs[31], EXIT_ADDR);
    }

    #[test]
    fn countdown_loop_commits_every_iteration() {
        let mut a = Asm::new();
        a.addi(5, 0, 5);
        let top = a.here_label();
        a.addi(5, 5, -1);
        a.branch(Op::Bne, 5, 0, top);
        a.li(10, 0);
        emit_exit(&mut a, 10);
        let (status, commits) = run_collect(&mut machine(&a.finish().unwrap()), 100);
        assert_eq!(status, ExitStatus::Exited(0));
        assert!(status.is_success());
        // init + 5 * (addi, bne) + li + lui + sw
        assert_eq!(commits.len(), 14);
        assert_eq!(commits[10].regs[5], 0);
    }

    #[test]
    fn putchar_stores_stream_to_console() {
        let mut a = Asm::new();
        a.li(31, PUTCHAR_ADDR as i32);
        for b in b"hi" {
            a.li(10, *b as i32);
            a.store(Op::Sw, 10, 31, 0);
        }
        a.li(10, 0);
        emit_exit(&mut a, 10);
        let mut m = machine(&a.finish().unwrap());
        let (status, _) = run_collect(&mut m, 100);
        assert_eq!(status, ExitStatus::Exited(0));
        assert_eq!(m.console.bytes(), b"hi");
    }

    #[test]
    fn ecall_halts_without_committing() {
        let mut a = Asm::new();
        a.addi(5, 0, 1);
        a.ecall();
        a.addi(5, 0, 2); // never reached
        let mut m = machine(&a.finish().unwrap());
        let (status, commits) = run_collect(&mut m, 100);
        assert_eq!(status, ExitStatus::Ecall { pc: 4 });
        assert_eq!(commits.len(), 1);
        assert_eq!(commits[0].regs[5], 1);
        // Further steps keep reporting the same status.
        assert_eq!(m.step(&mut |_| panic!("no more commits")), Some(status));
    }

    #[test]
    fn illegal_instruction_reports_raw_bits() {
        let mut a = Asm::new();
        a.c_nop();
        a.raw16(0x0000);
        let (status, commits) = run_collect(&mut machine(&a.finish().unwrap()), 100);
        assert_eq!(status, ExitStatus::IllegalInstruction { pc: 2, raw: 0 });
        assert_eq!(commits.len(), 1);
    }

    #[test]
    fn data_and_fetch_faults_halt() {
        // Load far out of range.
        let mut a = Asm::new();
        a.li(5, 0x0100_0000);
        a.load(Op::Lw, 6, 5, 0);
        let (status, _) = run_collect(&mut machine(&a.finish().unwrap()), 100);
        assert_eq!(
            status,
            ExitStatus::Fault {
                pc: 4,
                fault: Fault::DataOutOfRange { addr: 0x0100_0000, size: 4 }
            }
        );

        // Misaligned word load.
        let mut a = Asm::new();
        a.li(5, 0x102);
        a.load(Op::Lw, 6, 5, 0);
        let (status, _) = run_collect(&mut machine(&a.finish().unwrap()), 100);
        assert_eq!(
            status,
            ExitStatus::Fault {
                pc: 4,
                fault: Fault::Misaligned { addr: 0x102, size: 4 }
            }
        );

        // Jump beyond instruction memory; the fault lands on the target pc.
        let mut a = Asm::new();
        a.li(5, 0x2000);
        a.jalr(0, 5, 0);
        let (status, commits) = run_collect(&mut machine(&a.finish().unwrap()), 100);
        assert_eq!(
            status,
            ExitStatus::Fault {
                pc: 0x2000,
                fault: Fault::FetchOutOfRange { addr: 0x2000 }
            }
        );
        assert_eq!(commits.len(), 2); // lui and jalr both commit
    }

    #[test]
    fn instret_counts_prior_commits() {
        let mut a = Asm::new();
        a.c_nop();
        a.c_nop();
        a.csr_read(10, Csr::Instret);
        a.csr_read(11, Csr::Cycle); // same counter in the reference model
        a.csr_read(12, Csr::Instreth);
        emit_exit(&mut a, 0);
        let (status, commits) = run_collect(&mut machine(&a.finish().unwrap()), 100);
        assert_eq!(status, ExitStatus::Exited(0));
        let last = commits.last().unwrap();
        assert_eq!(last.regs[10], 2);
        assert_eq!(last.regs[11], 3);
        assert_eq!(last.regs[12], 0);
    }

    #[test]
    fn compressed_jal_links_pc_plus_two() {
        let cjal = encode(&desc(Op::Jal, 1, 0, 0, 4, true)).unwrap();
        let mut a = Asm::new();
        a.c_nop(); //                 0:
        a.raw16(cjal.bits as u16); // 2: c.jal +4
        a.c_nop(); //                 4: skipped
        a.c_nop(); //                 6: landing pad
        let mut m = machine(&a.finish().unwrap());
        let mut commits = Vec::new();
        assert_eq!(m.step(&mut |r| commits.push(r)), None);
        assert_eq!(m.step(&mut |r| commits.push(r)), None);
        assert_eq!(commits[1].pc, 2);
        assert_eq!(commits[1].regs[1], 4); // link register gets pc + 2
        assert_eq!(m.state.pc, 6);
    }

    #[test]
    fn step_limit_reports_as_such() {
        let mut a = Asm::new();
        let spin = a.here_label();
        a.jal(0, spin);
        let (status, commits) = run_collect(&mut machine(&a.finish().unwrap()), 25);
        assert_eq!(status, ExitStatus::StepLimit);
        assert_eq!(commits.len(), 25);
    }

    #[test]
    fn log_line_format_is_stable() {
        let mut regs = [0u32; 32];
        regs[10] = 1;
        regs[31] = 0xDEAD_BEEF;
        let r = CommitRecord { pc: 0x100, raw: 0x0010_0513, regs };
        let line = r.log_line();
        assert!(line.starts_with("PC=00000100 IR=00100513 X00=00000000 X01=00000000"));
        assert!(line.contains(" X10=00000001 "));
        assert!(line.ends_with(" X31=deadbeef"));
        assert_eq!(line.len(), 439);
    }
}
