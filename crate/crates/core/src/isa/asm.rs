//! A minimal programmatic assembler.
//!
//! Emits machine code into a byte buffer with forward labels resolved at
//! [`Asm::finish`].  There is no text syntax; generators and tests call
//! the emit methods directly so they control instruction widths and
//! therefore code layout, which matters for fetch-alignment behavior.

use super::{encode, Csr, DecodedInst, EncodeError, Op};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label(usize);

#[derive(Debug, thiserror::Error)]
pub enum AsmError {
    #[error("label bound twice")]
    Rebound,
    #[error("unbound label used by instruction at {at:#x}")]
    Unbound { at: u32 },
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

struct Fixup {
    /// Byte offset of the instruction to patch.
    at: u32,
    /// Instruction template; `imm` is filled with the branch offset.
    template: DecodedInst,
    label: Label,
}

/// Assembles one code image starting at address 0.
#[derive(Default)]
pub struct Asm {
    bytes: Vec<u8>,
    labels: Vec<Option<u32>>,
    fixups: Vec<Fixup>,
}

impl Asm {
    pub fn new() -> Asm {
        Asm::default()
    }

    /// Current emission address.
    pub fn here(&self) -> u32 {
        self.bytes.len() as u32
    }

    pub fn label(&mut self) -> Label {
        self.labels.push(None);
        Label(self.labels.len() - 1)
    }

    pub fn bind(&mut self, l: Label) {
        assert!(self.labels[l.0].is_none(), "label bound twice");
        self.labels[l.0] = Some(self.here());
    }

    /// New label bound at the current address.
    pub fn here_label(&mut self) -> Label {
        let l = self.label();
        self.bind(l);
        l
    }

    pub fn raw16(&mut self, h: u16) {
        self.bytes.extend_from_slice(&h.to_le_bytes());
    }

    pub fn raw32(&mut self, w: u32) {
        self.bytes.extend_from_slice(&w.to_le_bytes());
    }

    /// Encode and emit one instruction.  Panics on encoding errors: emit
    /// calls are written by tests/generators, so a failure is a bug there.
    pub fn put(&mut self, d: DecodedInst) {
        let raw = encode(&d).expect("unencodable instruction in assembler");
        if d.comp {
            self.raw16(raw.bits as u16);
        } else {
            self.raw32(raw.bits);
        }
    }

    fn put_fixup(&mut self, template: DecodedInst, label: Label) {
        let at = self.here();
        self.fixups.push(Fixup { at, template, label });
        // Reserve space with the template encoded at offset 0.
        self.put(template);
    }

    fn d(op: Op, rd: u8, rs1: u8, rs2: u8, imm: i32, comp: bool) -> DecodedInst {
        DecodedInst {
            op,
            rd,
            rs1,
            rs2,
            imm,
            comp,
            len: if comp { 2 } else { 4 },
        }
    }

    // 32-bit forms.

    pub fn addi(&mut self, rd: u8, rs1: u8, imm: i32) {
        self.put(Self::d(Op::Addi, rd, rs1, 0, imm, false));
    }

    pub fn lui(&mut self, rd: u8, imm: i32) {
        self.put(Self::d(Op::Lui, rd, 0, 0, imm, false));
    }

    pub fn auipc(&mut self, rd: u8, imm: i32) {
        self.put(Self::d(Op::Auipc, rd, 0, 0, imm, false));
    }

    pub fn alu_reg(&mut self, op: Op, rd: u8, rs1: u8, rs2: u8) {
        self.put(Self::d(op, rd, rs1, rs2, 0, false));
    }

    pub fn alu_imm(&mut self, op: Op, rd: u8, rs1: u8, imm: i32) {
        self.put(Self::d(op, rd, rs1, 0, imm, false));
    }

    pub fn load(&mut self, op: Op, rd: u8, rs1: u8, imm: i32) {
        self.put(Self::d(op, rd, rs1, 0, imm, false));
    }

    pub fn store(&mut self, op: Op, rs2: u8, rs1: u8, imm: i32) {
        self.put(Self::d(op, 0, rs1, rs2, imm, false));
    }

    pub fn branch(&mut self, op: Op, rs1: u8, rs2: u8, target: Label) {
        self.put_fixup(Self::d(op, 0, rs1, rs2, 0, false), target);
    }

    pub fn jal(&mut self, rd: u8, target: Label) {
        self.put_fixup(Self::d(Op::Jal, rd, 0, 0, 0, false), target);
    }

    pub fn jalr(&mut self, rd: u8, rs1: u8, imm: i32) {
        self.put(Self::d(Op::Jalr, rd, rs1, 0, imm, false));
    }

    pub fn ecall(&mut self) {
        self.put(Self::d(Op::Ecall, 0, 0, 0, 0, false));
    }

    pub fn fence(&mut self) {
        self.put(Self::d(Op::Fence, 0, 0, 0, 0, false));
    }

    pub fn csr_read(&mut self, rd: u8, csr: Csr) {
        self.put(Self::d(Op::CsrRead(csr), rd, 0, 0, 0, false));
    }

    /// Load a 32-bit constant with `lui`+`addi` (or a single `addi` when it
    /// fits twelve bits).
    pub fn li(&mut self, rd: u8, value: i32) {
        if (-2048..=2047).contains(&value) {
            self.addi(rd, 0, value);
        } else {
            let hi = (value as u32).wrapping_add(0x800) & 0xFFFF_F000;
            let lo = value.wrapping_sub(hi as i32);
            self.lui(rd, hi as i32);
            if lo != 0 {
                self.addi(rd, rd, lo);
            }
        }
    }

    // Compressed forms.

    pub fn c_nop(&mut self) {
        self.put(Self::d(Op::Addi, 0, 0, 0, 0, true));
    }

    pub fn c_addi(&mut self, rd: u8, imm: i32) {
        self.put(Self::d(Op::Addi, rd, rd, 0, imm, true));
    }

    pub fn c_li(&mut self, rd: u8, imm: i32) {
        self.put(Self::d(Op::Addi, rd, 0, 0, imm, true));
    }

    pub fn c_mv(&mut self, rd: u8, rs2: u8) {
        self.put(Self::d(Op::Add, rd, 0, rs2, 0, true));
    }

    pub fn c_alu(&mut self, op: Op, rd: u8, rs2: u8) {
        self.put(Self::d(op, rd, rd, rs2, 0, true));
    }

    pub fn c_lw(&mut self, rd: u8, rs1: u8, imm: i32) {
        self.put(Self::d(Op::Lw, rd, rs1, 0, imm, true));
    }

    pub fn c_sw(&mut self, rs2: u8, rs1: u8, imm: i32) {
        self.put(Self::d(Op::Sw, 0, rs1, rs2, imm, true));
    }

    pub fn c_branch(&mut self, op: Op, rs1: u8, target: Label) {
        self.put_fixup(Self::d(op, 0, rs1, 0, 0, true), target);
    }

    pub fn c_j(&mut self, target: Label) {
        self.put_fixup(Self::d(Op::Jal, 0, 0, 0, 0, true), target);
    }

    pub fn c_jr(&mut self, rs1: u8) {
        self.put(Self::d(Op::Jalr, 0, rs1, 0, 0, true));
    }

    /// Pad with `c.nop` until `here() % 4 == parity`.  `parity` is 0 or 2.
    pub fn pad_to_parity(&mut self, parity: u32) {
        debug_assert!(parity == 0 || parity == 2);
        while self.here() % 4 != parity {
            self.c_nop();
        }
    }

    /// Resolve fixups and return the image bytes.
    pub fn finish(mut self) -> Result<Vec<u8>, AsmError> {
        let fixups = std::mem::take(&mut self.fixups);
        for f in fixups {
            let target = self.labels[f.label.0].ok_or(AsmError::Unbound { at: f.at })?;
            let mut d = f.template;
            d.imm = target.wrapping_sub(f.at) as i32;
            let raw = encode(&d)?;
            let at = f.at as usize;
            if d.comp {
                self.bytes[at..at + 2].copy_from_slice(&(raw.bits as u16).to_le_bytes());
            } else {
                self.bytes[at..at + 4].copy_from_slice(&raw.bits.to_le_bytes());
            }
        }
        Ok(self.bytes)
    }
}
