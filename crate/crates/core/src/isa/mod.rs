//! RV32IC instruction decoding and encoding.
//!
//! Two independent decode routes exist for compressed instructions:
//! [`decode16`] extracts fields straight from the 16-bit encoding, while
//! [`decompress`] expands the same half-word to its canonical 32-bit form
//! for [`decode32`].  The two routes are checked against each other
//! exhaustively over all 65,536 half-words; keep them independent.

mod compressed;
mod encode;

pub mod asm;

pub use compressed::{decode16, decompress};
pub use encode::{desc, encode, EncodeError};

/// Counter CSRs readable by the simulated machine (read-only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Csr {
    Cycle,
    Time,
    Instret,
    Cycleh,
    Timeh,
    Instreth,
}

impl Csr {
    pub fn from_addr(addr: u32) -> Option<Csr> {
        match addr {
            0xC00 => Some(Csr::Cycle),
            0xC01 => Some(Csr::Time),
            0xC02 => Some(Csr::Instret),
            0xC80 => Some(Csr::Cycleh),
            0xC81 => Some(Csr::Timeh),
            0xC82 => Some(Csr::Instreth),
            _ => None,
        }
    }

    pub fn addr(self) -> u32 {
        match self {
            Csr::Cycle => 0xC00,
            Csr::Time => 0xC01,
            Csr::Instret => 0xC02,
            Csr::Cycleh => 0xC80,
            Csr::Timeh => 0xC81,
            Csr::Instreth => 0xC82,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Csr::Cycle => "cycle",
            Csr::Time => "time",
            Csr::Instret => "instret",
            Csr::Cycleh => "cycleh",
            Csr::Timeh => "timeh",
            Csr::Instreth => "instreth",
        }
    }
}

/// Operation selector after decode.  Compressed instructions decode to the
/// same operations as their 32-bit expansions; only `comp`/`len` on
/// [`DecodedInst`] differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Lui,
    Auipc,
    Jal,
    Jalr,
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
    Sb,
    Sh,
    Sw,
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    /// FENCE and FENCE.I; architectural no-op on this machine.
    Fence,
    Ecall,
    Ebreak,
    /// Read-only counter CSR read (`csrrs rd, csr, x0` and friends).
    CsrRead(Csr),
    /// Anything that does not decode.  The raw bits travel alongside in
    /// [`RawInst`] for diagnostics.
    Illegal,
}

impl Op {
    pub fn is_load(self) -> bool {
        matches!(self, Op::Lb | Op::Lh | Op::Lw | Op::Lbu | Op::Lhu)
    }

    pub fn is_store(self) -> bool {
        matches!(self, Op::Sb | Op::Sh | Op::Sw)
    }

    pub fn is_cond_branch(self) -> bool {
        matches!(self, Op::Beq | Op::Bne | Op::Blt | Op::Bge | Op::Bltu | Op::Bgeu)
    }

    pub fn is_jump(self) -> bool {
        matches!(self, Op::Jal | Op::Jalr)
    }

    /// Conditional branches plus unconditional jumps: everything that can
    /// redirect the PC and trains the branch predictor.
    pub fn is_control_flow(self) -> bool {
        self.is_cond_branch() || self.is_jump()
    }

    /// Byte width of the memory access, for loads and stores.
    pub fn mem_size(self) -> u8 {
        match self {
            Op::Lb | Op::Lbu | Op::Sb => 1,
            Op::Lh | Op::Lhu | Op::Sh => 2,
            Op::Lw | Op::Sw => 4,
            _ => 0,
        }
    }

    pub fn load_signed(self) -> bool {
        matches!(self, Op::Lb | Op::Lh)
    }

    /// Whether the instruction writes `rd` (x0 writes are suppressed at the
    /// register file, not here).
    pub fn writes_rd(self) -> bool {
        !matches!(
            self,
            Op::Beq
                | Op::Bne
                | Op::Blt
                | Op::Bge
                | Op::Bltu
                | Op::Bgeu
                | Op::Sb
                | Op::Sh
                | Op::Sw
                | Op::Fence
                | Op::Ecall
                | Op::Ebreak
                | Op::Illegal
        )
    }

    /// Whether `rs1` is an actual source operand.  Used by the hazard unit,
    /// so the answer is about the datapath, not the encoding (e.g. `lui`
    /// has no rs1 field at all, `csrrs rd, csr, x0` encodes rs1 but reads
    /// nothing).
    pub fn uses_rs1(self) -> bool {
        !matches!(
            self,
            Op::Lui
                | Op::Auipc
                | Op::Jal
                | Op::Fence
                | Op::Ecall
                | Op::Ebreak
                | Op::CsrRead(_)
                | Op::Illegal
        )
    }

    /// Whether `rs2` is an actual source operand.
    pub fn uses_rs2(self) -> bool {
        matches!(
            self,
            Op::Beq
                | Op::Bne
                | Op::Blt
                | Op::Bge
                | Op::Bltu
                | Op::Bgeu
                | Op::Sb
                | Op::Sh
                | Op::Sw
                | Op::Add
                | Op::Sub
                | Op::Sll
                | Op::Slt
                | Op::Sltu
                | Op::Xor
                | Op::Srl
                | Op::Sra
                | Op::Or
                | Op::And
        )
    }
}

/// Raw instruction bits as fetched.  For a compressed instruction `bits`
/// holds the half-word zero-extended to 32 bits; `len` is 2 or 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawInst {
    pub bits: u32,
    pub len: u8,
}

impl RawInst {
    pub fn half(h: u16) -> RawInst {
        debug_assert!(is_compressed(h), "not a compressed encoding: {h:#06x}");
        RawInst { bits: h as u32, len: 2 }
    }

    pub fn word(w: u32) -> RawInst {
        debug_assert!(w & 0b11 == 0b11, "not a 32-bit encoding: {w:#010x}");
        RawInst { bits: w, len: 4 }
    }

    pub fn decode(self) -> DecodedInst {
        if self.len == 2 {
            decode16(self.bits as u16)
        } else {
            decode32(self.bits)
        }
    }
}

/// Decoded instruction fields.  `imm` is sign-extended; for `lui`/`auipc`
/// it is the full shifted 20-bit immediate.  `comp` records whether the
/// instruction came from a 16-bit encoding and `len` its byte length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedInst {
    pub op: Op,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i32,
    pub comp: bool,
    pub len: u8,
}

impl DecodedInst {
    pub const ILLEGAL16: DecodedInst = DecodedInst {
        op: Op::Illegal,
        rd: 0,
        rs1: 0,
        rs2: 0,
        imm: 0,
        comp: true,
        len: 2,
    };

    pub const ILLEGAL32: DecodedInst = DecodedInst {
        op: Op::Illegal,
        rd: 0,
        rs1: 0,
        rs2: 0,
        imm: 0,
        comp: false,
        len: 4,
    };
}

/// An instruction is compressed iff its low two bits are not `11`.
pub fn is_compressed(low_half: u16) -> bool {
    low_half & 0b11 != 0b11
}

/// Sign-extend the low `bits` bits of `value`.
pub(crate) fn sign_extend(value: u32, bits: u32) -> i32 {
    debug_assert!((1..=32).contains(&bits));
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

fn bit(word: u32, n: u32) -> u32 {
    (word >> n) & 1
}

fn bits(word: u32, hi: u32, lo: u32) -> u32 {
    (word >> lo) & ((1 << (hi - lo + 1)) - 1)
}

/// Decode a 32-bit instruction word.  Unknown opcodes, reserved funct
/// fields and CSR instructions other than counter reads decode to
/// [`Op::Illegal`].
pub fn decode32(word: u32) -> DecodedInst {
    if word & 0b11 != 0b11 {
        return DecodedInst::ILLEGAL32;
    }
    let opcode = bits(word, 6, 0);
    let rd = bits(word, 11, 7) as u8;
    let rs1 = bits(word, 19, 15) as u8;
    let rs2 = bits(word, 24, 20) as u8;
    let funct3 = bits(word, 14, 12);
    let funct7 = bits(word, 31, 25);

    let imm_i = || sign_extend(bits(word, 31, 20), 12);
    let imm_s = || sign_extend(bits(word, 31, 25) << 5 | bits(word, 11, 7), 12);
    let imm_b = || {
        sign_extend(
            bit(word, 31) << 12 | bit(word, 7) << 11 | bits(word, 30, 25) << 5 | bits(word, 11, 8) << 1,
            13,
        )
    };
    let imm_u = || (word & 0xFFFF_F000) as i32;
    let imm_j = || {
        sign_extend(
            bit(word, 31) << 20 | bits(word, 19, 12) << 12 | bit(word, 20) << 11 | bits(word, 30, 21) << 1,
            21,
        )
    };

    let inst = |op: Op, rd: u8, rs1: u8, rs2: u8, imm: i32| DecodedInst {
        op,
        rd,
        rs1,
        rs2,
        imm,
        comp: false,
        len: 4,
    };

    match opcode {
        0b0110111 => inst(Op::Lui, rd, 0, 0, imm_u()),
        0b0010111 => inst(Op::Auipc, rd, 0, 0, imm_u()),
        0b1101111 => inst(Op::Jal, rd, 0, 0, imm_j()),
        0b1100111 if funct3 == 0 => inst(Op::Jalr, rd, rs1, 0, imm_i()),
        0b1100011 => {
            let op = match funct3 {
                0b000 => Op::Beq,
                0b001 => Op::Bne,
                0b100 => Op::Blt,
                0b101 => Op::Bge,
                0b110 => Op::Bltu,
                0b111 => Op::Bgeu,
                _ => return DecodedInst::ILLEGAL32,
            };
            inst(op, 0, rs1, rs2, imm_b())
        }
        0b0000011 => {
            let op = match funct3 {
                0b000 => Op::Lb,
                0b001 => Op::Lh,
                0b010 => Op::Lw,
                0b100 => Op::Lbu,
                0b101 => Op::Lhu,
                _ => return DecodedInst::ILLEGAL32,
            };
            inst(op, rd, rs1, 0, imm_i())
        }
        0b0100011 => {
            let op = match funct3 {
                0b000 => Op::Sb,
                0b001 => Op::Sh,
                0b010 => Op::Sw,
                _ => return DecodedInst::ILLEGAL32,
            };
            inst(op, 0, rs1, rs2, imm_s())
        }
        0b0010011 => match funct3 {
            0b000 => inst(Op::Addi, rd, rs1, 0, imm_i()),
            0b010 => inst(Op::Slti, rd, rs1, 0, imm_i()),
            0b011 => inst(Op::Sltiu, rd, rs1, 0, imm_i()),
            0b100 => inst(Op::Xori, rd, rs1, 0, imm_i()),
            0b110 => inst(Op::Ori, rd, rs1, 0, imm_i()),
            0b111 => inst(Op::Andi, rd, rs1, 0, imm_i()),
            0b001 if funct7 == 0 => inst(Op::Slli, rd, rs1, 0, rs2 as i32),
            0b101 if funct7 == 0 => inst(Op::Srli, rd, rs1, 0, rs2 as i32),
            0b101 if funct7 == 0b0100000 => inst(Op::Srai, rd, rs1, 0, rs2 as i32),
            _ => DecodedInst::ILLEGAL32,
        },
        0b0110011 => {
            let op = match (funct7, funct3) {
                (0b0000000, 0b000) => Op::Add,
                (0b0100000, 0b000) => Op::Sub,
                (0b0000000, 0b001) => Op::Sll,
                (0b0000000, 0b010) => Op::Slt,
                (0b0000000, 0b011) => Op::Sltu,
                (0b0000000, 0b100) => Op::Xor,
                (0b0000000, 0b101) => Op::Srl,
                (0b0100000, 0b101) => Op::Sra,
                (0b0000000, 0b110) => Op::Or,
                (0b0000000, 0b111) => Op::And,
                _ => return DecodedInst::ILLEGAL32,
            };
            inst(op, rd, rs1, rs2, 0)
        }
        // FENCE (funct3=000) and FENCE.I (funct3=001): no caches, no other
        // harts -- architectural no-ops.
        0b0001111 if funct3 <= 0b001 => inst(Op::Fence, 0, 0, 0, 0),
        0b1110011 => decode_system(word, rd, rs1, funct3),
        _ => DecodedInst::ILLEGAL32,
    }
}

/// SYSTEM opcode: ECALL, EBREAK and read-only counter CSR reads.  CSR
/// writes of any kind (and reads of unknown CSRs) are illegal on this
/// machine.
fn decode_system(word: u32, rd: u8, rs1: u8, funct3: u32) -> DecodedInst {
    let csr_addr = bits(word, 31, 20);
    let read_only = match funct3 {
        // csrrs/csrrc with rs1=x0 never write.
        0b010 | 0b011 => rs1 == 0,
        // csrrsi/csrrci with zimm=0 never write.
        0b110 | 0b111 => rs1 == 0,
        0b000 => {
            return match word {
                0x0000_0073 => DecodedInst {
                    op: Op::Ecall,
                    rd: 0,
                    rs1: 0,
                    rs2: 0,
                    imm: 0,
                    comp: false,
                    len: 4,
                },
                0x0010_0073 => DecodedInst {
                    op: Op::Ebreak,
                    rd: 0,
                    rs1: 0,
                    rs2: 0,
                    imm: 0,
                    comp: false,
                    len: 4,
                },
                _ => DecodedInst::ILLEGAL32,
            };
        }
        _ => false,
    };
    match Csr::from_addr(csr_addr) {
        Some(csr) if read_only => DecodedInst {
            op: Op::CsrRead(csr),
            rd,
            rs1: 0,
            rs2: 0,
            imm: csr_addr as i32,
            comp: false,
            len: 4,
        },
        _ => DecodedInst::ILLEGAL32,
    }
}

/// Textual form used in trace output, e.g. `addi x10, x0, 1` or
/// `c.lw x8, 4(x9)`.
pub fn disasm(raw: RawInst) -> String {
    let d = raw.decode();
    let prefix = if d.comp { "c." } else { "" };
    let name = |op: Op| -> &'static str {
        match op {
            Op::Lui => "lui",
            Op::Auipc => "auipc",
            Op::Jal => "jal",
            Op::Jalr => "jalr",
            Op::Beq => "beq",
            Op::Bne => "bne",
            Op::Blt => "blt",
            Op::Bge => "bge",
            Op::Bltu => "bltu",
            Op::Bgeu => "bgeu",
            Op::Lb => "lb",
            Op::Lh => "lh",
            Op::Lw => "lw",
            Op::Lbu => "lbu",
            Op::Lhu => "lhu",
            Op::Sb => "sb",
            Op::Sh => "sh",
            Op::Sw => "sw",
            Op::Addi => "addi",
            Op::Slti => "slti",
            Op::Sltiu => "sltiu",
            Op::Xori => "xori",
            Op::Ori => "ori",
            Op::Andi => "andi",
            Op::Slli => "slli",
            Op::Srli => "srli",
            Op::Srai => "srai",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Sll => "sll",
            Op::Slt => "slt",
            Op::Sltu => "sltu",
            Op::Xor => "xor",
            Op::Srl => "srl",
            Op::Sra => "sra",
            Op::Or => "or",
            Op::And => "and",
            Op::Fence => "fence",
            Op::Ecall => "ecall",
            Op::Ebreak => "ebreak",
            Op::CsrRead(_) => "csrr",
            Op::Illegal => "illegal",
        }
    };
    match d.op {
        Op::Illegal => format!("{prefix}illegal {:#010x}", raw.bits),
        Op::Ecall | Op::Ebreak | Op::Fence => format!("{prefix}{}", name(d.op)),
        Op::CsrRead(csr) => format!("csrr x{}, {}", d.rd, csr.name()),
        Op::Lui | Op::Auipc => format!("{prefix}{} x{}, {:#x}", name(d.op), d.rd, d.imm),
        Op::Jal => format!("{prefix}{} x{}, {}", name(d.op), d.rd, d.imm),
        Op::Jalr => format!("{prefix}{} x{}, {}(x{})", name(d.op), d.rd, d.imm, d.rs1),
        op if op.is_cond_branch() => {
            format!("{prefix}{} x{}, x{}, {}", name(op), d.rs1, d.rs2, d.imm)
        }
        op if op.is_load() => format!("{prefix}{} x{}, {}(x{})", name(op), d.rd, d.imm, d.rs1),
        op if op.is_store() => format!("{prefix}{} x{}, {}(x{})", name(op), d.rs2, d.imm, d.rs1),
        op if op.uses_rs2() => {
            format!("{prefix}{} x{}, x{}, x{}", name(op), d.rd, d.rs1, d.rs2)
        }
        op => format!("{prefix}{} x{}, x{}, {}", name(op), d.rd, d.rs1, d.imm),
    }
}
