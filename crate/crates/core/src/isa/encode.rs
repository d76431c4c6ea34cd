//! Programmatic instruction encoder.
//!
//! Used by tests and the program generators to synthesize images with
//! exact control over instruction widths (a 16/32-bit mix is what makes
//! fetch alignment interesting).  `encode` honors the `comp` flag of the
//! description: when set, the instruction must fit a compressed form or
//! encoding fails.

use super::{DecodedInst, Op, RawInst};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("{op:?} with these operands has no compressed form")]
    NotCompressible { op: Op },
    #[error("immediate {imm} out of range for {op:?}")]
    ImmOutOfRange { op: Op, imm: i32 },
    #[error("{op:?} is not encodable")]
    NotEncodable { op: Op },
}

fn fits_signed(v: i32, bits: u32) -> bool {
    let min = -(1 << (bits - 1));
    let max = (1 << (bits - 1)) - 1;
    v >= min && v <= max
}

fn r32(funct7: u32, rs2: u8, rs1: u8, funct3: u32, rd: u8, opcode: u32) -> u32 {
    funct7 << 25 | (rs2 as u32) << 20 | (rs1 as u32) << 15 | funct3 << 12 | (rd as u32) << 7 | opcode
}

fn i32_(imm: i32, rs1: u8, funct3: u32, rd: u8, opcode: u32) -> u32 {
    ((imm as u32) & 0xFFF) << 20 | (rs1 as u32) << 15 | funct3 << 12 | (rd as u32) << 7 | opcode
}

fn s32(imm: i32, rs2: u8, rs1: u8, funct3: u32) -> u32 {
    let imm = imm as u32;
    ((imm >> 5) & 0x7F) << 25
        | (rs2 as u32) << 20
        | (rs1 as u32) << 15
        | funct3 << 12
        | (imm & 0x1F) << 7
        | 0b0100011
}

fn b32(imm: i32, rs2: u8, rs1: u8, funct3: u32) -> u32 {
    let imm = imm as u32;
    ((imm >> 12) & 1) << 31
        | ((imm >> 5) & 0x3F) << 25
        | (rs2 as u32) << 20
        | (rs1 as u32) << 15
        | funct3 << 12
        | ((imm >> 1) & 0xF) << 8
        | ((imm >> 11) & 1) << 7
        | 0b1100011
}

fn u32_(imm: i32, rd: u8, opcode: u32) -> u32 {
    ((imm as u32) & 0xFFFF_F000) | (rd as u32) << 7 | opcode
}

fn j32(imm: i32, rd: u8) -> u32 {
    let imm = imm as u32;
    ((imm >> 20) & 1) << 31
        | ((imm >> 1) & 0x3FF) << 21
        | ((imm >> 11) & 1) << 20
        | ((imm >> 12) & 0xFF) << 12
        | (rd as u32) << 7
        | 0b1101111
}

fn encode32(d: &DecodedInst) -> Result<u32, EncodeError> {
    let check_imm = |bits: u32| -> Result<(), EncodeError> {
        if fits_signed(d.imm, bits) {
            Ok(())
        } else {
            Err(EncodeError::ImmOutOfRange { op: d.op, imm: d.imm })
        }
    };
    let word = match d.op {
        Op::Lui => u32_(d.imm, d.rd, 0b0110111),
        Op::Auipc => u32_(d.imm, d.rd, 0b0010111),
        Op::Jal => {
            if !fits_signed(d.imm, 21) || d.imm & 1 != 0 {
                return Err(EncodeError::ImmOutOfRange { op: d.op, imm: d.imm });
            }
            j32(d.imm, d.rd)
        }
        Op::Jalr => {
            check_imm(12)?;
            i32_(d.imm, d.rs1, 0b000, d.rd, 0b1100111)
        }
        Op::Beq | Op::Bne | Op::Blt | Op::Bge | Op::Bltu | Op::Bgeu => {
            if !fits_signed(d.imm, 13) || d.imm & 1 != 0 {
                return Err(EncodeError::ImmOutOfRange { op: d.op, imm: d.imm });
            }
            let funct3 = match d.op {
                Op::Beq => 0b000,
                Op::Bne => 0b001,
                Op::Blt => 0b100,
                Op::Bge => 0b101,
                Op::Bltu => 0b110,
                _ => 0b111,
            };
            b32(d.imm, d.rs2, d.rs1, funct3)
        }
        Op::Lb | Op::Lh | Op::Lw | Op::Lbu | Op::Lhu => {
            check_imm(12)?;
            let funct3 = match d.op {
                Op::Lb => 0b000,
                Op::Lh => 0b001,
                Op::Lw => 0b010,
                Op::Lbu => 0b100,
                _ => 0b101,
            };
            i32_(d.imm, d.rs1, funct3, d.rd, 0b0000011)
        }
        Op::Sb | Op::Sh | Op::Sw => {
            check_imm(12)?;
            let funct3 = match d.op {
                Op::Sb => 0b000,
                Op::Sh => 0b001,
                _ => 0b010,
            };
            s32(d.imm, d.rs2, d.rs1, funct3)
        }
        Op::Addi | Op::Slti | Op::Sltiu | Op::Xori | Op::Ori | Op::Andi => {
            check_imm(12)?;
            let funct3 = match d.op {
                Op::Addi => 0b000,
                Op::Slti => 0b010,
                Op::Sltiu => 0b011,
                Op::Xori => 0b100,
                Op::Ori => 0b110,
                _ => 0b111,
            };
            i32_(d.imm, d.rs1, funct3, d.rd, 0b0010011)
        }
        Op::Slli | Op::Srli | Op::Srai => {
            if d.imm < 0 || d.imm > 31 {
                return Err(EncodeError::ImmOutOfRange { op: d.op, imm: d.imm });
            }
            let (funct7, funct3) = match d.op {
                Op::Slli => (0, 0b001),
                Op::Srli => (0, 0b101),
                _ => (0b0100000, 0b101),
            };
            r32(funct7, d.imm as u8, d.rs1, funct3, d.rd, 0b0010011)
        }
        Op::Add | Op::Sub | Op::Sll | Op::Slt | Op::Sltu | Op::Xor | Op::Srl | Op::Sra | Op::Or | Op::And => {
            let (funct7, funct3) = match d.op {
                Op::Add => (0, 0b000),
                Op::Sub => (0b0100000, 0b000),
                Op::Sll => (0, 0b001),
                Op::Slt => (0, 0b010),
                Op::Sltu => (0, 0b011),
                Op::Xor => (0, 0b100),
                Op::Srl => (0, 0b101),
                Op::Sra => (0b0100000, 0b101),
                Op::Or => (0, 0b110),
                _ => (0, 0b111),
            };
            r32(funct7, d.rs2, d.rs1, funct3, d.rd, 0b0110011)
        }
        Op::Fence => 0x0000_000F,
        Op::Ecall => 0x0000_0073,
        Op::Ebreak => 0x0010_0073,
        Op::CsrRead(csr) => i32_(csr.addr() as i32, 0, 0b010, d.rd, 0b1110011),
        Op::Illegal => return Err(EncodeError::NotEncodable { op: d.op }),
    };
    Ok(word)
}

fn is_creg(r: u8) -> bool {
    (8..=15).contains(&r)
}

fn cr(r: u8) -> u16 {
    (r as u16 - 8) & 0x7
}

fn ci_imm(imm: i32) -> u16 {
    let imm = imm as u32;
    (((imm >> 5) & 1) << 12 | (imm & 0x1F) << 2) as u16
}

// Binary literals group by encoding field (funct3_bit12_op), not by width.
#[allow(clippy::unusual_byte_groupings)]
fn encode16(d: &DecodedInst) -> Result<u16, EncodeError> {
    let err = || EncodeError::NotCompressible { op: d.op };
    let h: u16 = match d.op {
        Op::Addi => {
            if d.rd == d.rs1 && fits_signed(d.imm, 6) {
                // C.ADDI / C.NOP.
                ci_imm(d.imm) | (d.rd as u16) << 7 | 0b01
            } else if d.rs1 == 0 && fits_signed(d.imm, 6) {
                // C.LI.
                0b010 << 13 | ci_imm(d.imm) | (d.rd as u16) << 7 | 0b01
            } else if d.rd == 2 && d.rs1 == 2 && d.imm != 0 && d.imm % 16 == 0 && fits_signed(d.imm, 10) {
                // C.ADDI16SP.
                let imm = d.imm as u32;
                (0b011 << 13
                    | ((imm >> 9) & 1) << 12
                    | 2 << 7
                    | ((imm >> 4) & 1) << 6
                    | ((imm >> 6) & 1) << 5
                    | ((imm >> 7) & 0b11) << 3
                    | ((imm >> 5) & 1) << 2
                    | 0b01) as u16
            } else if is_creg(d.rd) && d.rs1 == 2 && d.imm > 0 && d.imm % 4 == 0 && d.imm < 1024 {
                // C.ADDI4SPN.
                let imm = d.imm as u32;
                (((imm >> 4) & 0b11) << 11
                    | ((imm >> 6) & 0b1111) << 7
                    | ((imm >> 2) & 1) << 6
                    | ((imm >> 3) & 1) << 5) as u16
                    | cr(d.rd) << 2
            } else {
                return Err(err());
            }
        }
        Op::Lui => {
            let hi = d.imm >> 12;
            if d.rd != 0 && d.rd != 2 && d.imm != 0 && d.imm & 0xFFF == 0 && fits_signed(hi, 6) {
                0b011 << 13 | ci_imm(hi) | (d.rd as u16) << 7 | 0b01
            } else {
                return Err(err());
            }
        }
        Op::Add => {
            if d.rs1 == 0 && d.rd != 0 && d.rs2 != 0 {
                // C.MV.
                0b100 << 13 | (d.rd as u16) << 7 | (d.rs2 as u16) << 2 | 0b10
            } else if d.rd == d.rs1 && d.rd != 0 && d.rs2 != 0 {
                // C.ADD.
                0b1001 << 12 | (d.rd as u16) << 7 | (d.rs2 as u16) << 2 | 0b10
            } else {
                return Err(err());
            }
        }
        Op::Sub | Op::Xor | Op::Or | Op::And => {
            if d.rd == d.rs1 && is_creg(d.rd) && is_creg(d.rs2) {
                let funct2 = match d.op {
                    Op::Sub => 0b00,
                    Op::Xor => 0b01,
                    Op::Or => 0b10,
                    _ => 0b11,
                };
                0b100_0_11 << 10 | cr(d.rd) << 7 | funct2 << 5 | cr(d.rs2) << 2 | 0b01
            } else {
                return Err(err());
            }
        }
        Op::Andi => {
            if d.rd == d.rs1 && is_creg(d.rd) && fits_signed(d.imm, 6) {
                0b100 << 13 | ci_imm(d.imm) | (0b10 << 10) as u16 | cr(d.rd) << 7 | 0b01
            } else {
                return Err(err());
            }
        }
        Op::Srli | Op::Srai => {
            if d.rd == d.rs1 && is_creg(d.rd) && (0..32).contains(&d.imm) {
                let funct2 = if d.op == Op::Srli { 0b00 } else { 0b01 };
                0b100 << 13 | funct2 << 10 | cr(d.rd) << 7 | ci_imm(d.imm) | 0b01
            } else {
                return Err(err());
            }
        }
        Op::Slli => {
            if d.rd == d.rs1 && d.rd != 0 && (0..32).contains(&d.imm) {
                ci_imm(d.imm) | (d.rd as u16) << 7 | 0b10
            } else {
                return Err(err());
            }
        }
        Op::Lw => {
            if is_creg(d.rd) && is_creg(d.rs1) && d.imm >= 0 && d.imm % 4 == 0 && d.imm < 128 {
                let imm = d.imm as u32;
                (0b010 << 13
                    | ((imm >> 3) & 0b111) << 10
                    | ((imm >> 2) & 1) << 6
                    | ((imm >> 6) & 1) << 5) as u16
                    | cr(d.rs1) << 7
                    | cr(d.rd) << 2
            } else if d.rs1 == 2 && d.rd != 0 && d.imm >= 0 && d.imm % 4 == 0 && d.imm < 256 {
                // C.LWSP.
                let imm = d.imm as u32;
                (0b010 << 13 | ((imm >> 5) & 1) << 12 | ((imm >> 2) & 0b111) << 4 | ((imm >> 6) & 0b11) << 2)
                    as u16
                    | (d.rd as u16) << 7
                    | 0b10
            } else {
                return Err(err());
            }
        }
        Op::Sw => {
            if is_creg(d.rs2) && is_creg(d.rs1) && d.imm >= 0 && d.imm % 4 == 0 && d.imm < 128 {
                let imm = d.imm as u32;
                (0b110 << 13
                    | ((imm >> 3) & 0b111) << 10
                    | ((imm >> 2) & 1) << 6
                    | ((imm >> 6) & 1) << 5) as u16
                    | cr(d.rs1) << 7
                    | cr(d.rs2) << 2
            } else if d.rs1 == 2 && d.imm >= 0 && d.imm % 4 == 0 && d.imm < 256 {
                // C.SWSP.
                let imm = d.imm as u32;
                (0b110 << 13 | ((imm >> 2) & 0b1111) << 9 | ((imm >> 6) & 0b11) << 7) as u16
                    | (d.rs2 as u16) << 2
                    | 0b10
            } else {
                return Err(err());
            }
        }
        Op::Jal => {
            if d.rd > 1 {
                return Err(err());
            }
            if !fits_signed(d.imm, 12) || d.imm & 1 != 0 {
                return Err(EncodeError::ImmOutOfRange { op: d.op, imm: d.imm });
            }
            let imm = d.imm as u32;
            let funct3 = if d.rd == 1 { 0b001 } else { 0b101 };
            (funct3 << 13
                | ((imm >> 11) & 1) << 12
                | ((imm >> 4) & 1) << 11
                | ((imm >> 8) & 0b11) << 9
                | ((imm >> 10) & 1) << 8
                | ((imm >> 6) & 1) << 7
                | ((imm >> 7) & 1) << 6
                | ((imm >> 1) & 0b111) << 3
                | ((imm >> 5) & 1) << 2) as u16
                | 0b01
        }
        Op::Jalr => {
            if d.imm == 0 && d.rs1 != 0 && d.rd == 0 {
                // C.JR.
                0b100 << 13 | (d.rs1 as u16) << 7 | 0b10
            } else if d.imm == 0 && d.rs1 != 0 && d.rd == 1 {
                // C.JALR.
                0b1001 << 12 | (d.rs1 as u16) << 7 | 0b10
            } else {
                return Err(err());
            }
        }
        Op::Beq | Op::Bne => {
            if d.rs2 != 0 || !is_creg(d.rs1) {
                return Err(err());
            }
            if !fits_signed(d.imm, 9) || d.imm & 1 != 0 {
                return Err(EncodeError::ImmOutOfRange { op: d.op, imm: d.imm });
            }
            let imm = d.imm as u32;
            let funct3 = if d.op == Op::Beq { 0b110 } else { 0b111 };
            (funct3 << 13
                | ((imm >> 8) & 1) << 12
                | ((imm >> 3) & 0b11) << 10
                | ((imm >> 6) & 0b11) << 5
                | ((imm >> 1) & 0b11) << 3
                | ((imm >> 5) & 1) << 2) as u16
                | cr(d.rs1) << 7
                | 0b01
        }
        Op::Ebreak => 0b1001 << 12 | 0b10,
        _ => return Err(err()),
    };
    Ok(h)
}

/// Encode a description back to raw bits.  `d.comp` selects the target
/// width; a compressed request that does not fit any 16-bit form fails
/// with [`EncodeError::NotCompressible`].
pub fn encode(d: &DecodedInst) -> Result<RawInst, EncodeError> {
    if d.comp {
        encode16(d).map(RawInst::half)
    } else {
        encode32(d).map(RawInst::word)
    }
}

/// Convenience for building descriptions in tests and generators.
pub fn desc(op: Op, rd: u8, rs1: u8, rs2: u8, imm: i32, comp: bool) -> DecodedInst {
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

impl DecodedInst {
    /// The same instruction as a description for the other width, used by
    /// round-trip tests.
    pub fn with_comp(mut self, comp: bool) -> DecodedInst {
        self.comp = comp;
        self.len = if comp { 2 } else { 4 };
        self
    }
}

