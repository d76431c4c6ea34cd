//! The C extension, twice over.
//!
//! [`decode16`] decodes a half-word directly to [`DecodedInst`] fields.
//! [`decompress`] expands the same half-word to its canonical 32-bit
//! encoding by assembling the word bit by bit, without consulting
//! `decode16`.  The exhaustive equivalence test over all 65,536 half-words
//! compares `decode16(h)` with `decode32(decompress(h))`; a bug in either
//! route shows up as a disagreement.
//!
//! RV32 notes: C.FLD/C.FLW/C.FSD/C.FSW (and the SP forms) are illegal
//! because the machine has no F/D registers; C.SUBW/C.ADDW and shifts with
//! `shamt[5]=1` are RV64-only and decode as illegal; HINT code points
//! (writes to x0, zero-immediate moves and shifts) are legal and execute
//! as the expansion says.

use super::{is_compressed, sign_extend, DecodedInst, Op};

fn bit(h: u16, n: u32) -> u32 {
    ((h as u32) >> n) & 1
}

fn bits(h: u16, hi: u32, lo: u32) -> u32 {
    ((h as u32) >> lo) & ((1 << (hi - lo + 1)) - 1)
}

/// x8..x15, the registers reachable by three-bit fields.
fn creg(field: u32) -> u8 {
    8 + field as u8
}

// Immediate decoders, one per compressed format.  Bit positions follow the
// encoding tables; each returns a sign- or zero-extended value as the
// expansion uses it.

fn imm_ci(h: u16) -> i32 {
    sign_extend(bit(h, 12) << 5 | bits(h, 6, 2), 6)
}

fn uimm_addi4spn(h: u16) -> u32 {
    bits(h, 12, 11) << 4 | bits(h, 10, 7) << 6 | bit(h, 6) << 2 | bit(h, 5) << 3
}

fn uimm_lwsw(h: u16) -> u32 {
    bits(h, 12, 10) << 3 | bit(h, 6) << 2 | bit(h, 5) << 6
}

fn imm_addi16sp(h: u16) -> i32 {
    sign_extend(
        bit(h, 12) << 9 | bit(h, 6) << 4 | bit(h, 5) << 6 | bits(h, 4, 3) << 7 | bit(h, 2) << 5,
        10,
    )
}

fn imm_lui(h: u16) -> i32 {
    sign_extend(bit(h, 12) << 17 | bits(h, 6, 2) << 12, 18)
}

fn imm_j(h: u16) -> i32 {
    sign_extend(
        bit(h, 12) << 11
            | bit(h, 11) << 4
            | bits(h, 10, 9) << 8
            | bit(h, 8) << 10
            | bit(h, 7) << 6
            | bit(h, 6) << 7
            | bits(h, 5, 3) << 1
            | bit(h, 2) << 5,
        12,
    )
}

fn imm_branch(h: u16) -> i32 {
    sign_extend(
        bit(h, 12) << 8 | bits(h, 11, 10) << 3 | bits(h, 6, 5) << 6 | bits(h, 4, 3) << 1 | bit(h, 2) << 5,
        9,
    )
}

fn uimm_lwsp(h: u16) -> u32 {
    bit(h, 12) << 5 | bits(h, 6, 4) << 2 | bits(h, 3, 2) << 6
}

fn uimm_swsp(h: u16) -> u32 {
    bits(h, 12, 9) << 2 | bits(h, 8, 7) << 6
}

fn shamt(h: u16) -> u32 {
    bit(h, 12) << 5 | bits(h, 6, 2)
}

/// Decode a 16-bit instruction directly.
pub fn decode16(h: u16) -> DecodedInst {
    debug_assert!(is_compressed(h), "32-bit encoding passed to decode16: {h:#06x}");
    let inst = |op: Op, rd: u8, rs1: u8, rs2: u8, imm: i32| DecodedInst {
        op,
        rd,
        rs1,
        rs2,
        imm,
        comp: true,
        len: 2,
    };
    let quadrant = h & 0b11;
    let funct3 = bits(h, 15, 13);
    match (quadrant, funct3) {
        (0b00, 0b000) => {
            let imm = uimm_addi4spn(h);
            if imm == 0 {
                // Includes the all-zero half-word.
                DecodedInst::ILLEGAL16
            } else {
                inst(Op::Addi, creg(bits(h, 4, 2)), 2, 0, imm as i32)
            }
        }
        (0b00, 0b010) => inst(Op::Lw, creg(bits(h, 4, 2)), creg(bits(h, 9, 7)), 0, uimm_lwsw(h) as i32),
        (0b00, 0b110) => inst(Op::Sw, 0, creg(bits(h, 9, 7)), creg(bits(h, 4, 2)), uimm_lwsw(h) as i32),
        (0b00, _) => DecodedInst::ILLEGAL16,

        (0b01, 0b000) => {
            // C.ADDI; rd=x0 is C.NOP, zero immediates are HINTs.  All
            // execute as `addi rd, rd, imm`.
            let rd = bits(h, 11, 7) as u8;
            inst(Op::Addi, rd, rd, 0, imm_ci(h))
        }
        (0b01, 0b001) => inst(Op::Jal, 1, 0, 0, imm_j(h)),
        (0b01, 0b010) => inst(Op::Addi, bits(h, 11, 7) as u8, 0, 0, imm_ci(h)),
        (0b01, 0b011) => {
            let rd = bits(h, 11, 7) as u8;
            if rd == 2 {
                let imm = imm_addi16sp(h);
                if imm == 0 {
                    DecodedInst::ILLEGAL16
                } else {
                    inst(Op::Addi, 2, 2, 0, imm)
                }
            } else {
                let imm = imm_lui(h);
                if imm == 0 {
                    DecodedInst::ILLEGAL16
                } else {
                    inst(Op::Lui, rd, 0, 0, imm)
                }
            }
        }
        (0b01, 0b100) => {
            let rd = creg(bits(h, 9, 7));
            match bits(h, 11, 10) {
                0b00 | 0b01 => {
                    let sh = shamt(h);
                    if sh >= 32 {
                        // shamt[5]=1 is reserved on RV32.
                        DecodedInst::ILLEGAL16
                    } else {
                        let op = if bits(h, 11, 10) == 0 { Op::Srli } else { Op::Srai };
                        inst(op, rd, rd, 0, sh as i32)
                    }
                }
                0b10 => inst(Op::Andi, rd, rd, 0, imm_ci(h)),
                _ => {
                    if bit(h, 12) == 1 {
                        // C.SUBW/C.ADDW and two reserved points; RV64 only.
                        DecodedInst::ILLEGAL16
                    } else {
                        let rs2 = creg(bits(h, 4, 2));
                        let op = match bits(h, 6, 5) {
                            0b00 => Op::Sub,
                            0b01 => Op::Xor,
                            0b10 => Op::Or,
                            _ => Op::And,
                        };
                        inst(op, rd, rd, rs2, 0)
                    }
                }
            }
        }
        (0b01, 0b101) => inst(Op::Jal, 0, 0, 0, imm_j(h)),
        (0b01, 0b110) => inst(Op::Beq, 0, creg(bits(h, 9, 7)), 0, imm_branch(h)),
        (0b01, _) => inst(Op::Bne, 0, creg(bits(h, 9, 7)), 0, imm_branch(h)),

        (0b10, 0b000) => {
            let sh = shamt(h);
            let rd = bits(h, 11, 7) as u8;
            if sh >= 32 {
                DecodedInst::ILLEGAL16
            } else {
                inst(Op::Slli, rd, rd, 0, sh as i32)
            }
        }
        (0b10, 0b010) => {
            let rd = bits(h, 11, 7) as u8;
            if rd == 0 {
                // C.LWSP with rd=x0 is reserved.
                DecodedInst::ILLEGAL16
            } else {
                inst(Op::Lw, rd, 2, 0, uimm_lwsp(h) as i32)
            }
        }
        (0b10, 0b100) => {
            let rs1 = bits(h, 11, 7) as u8;
            let rs2 = bits(h, 6, 2) as u8;
            match (bit(h, 12), rs1, rs2) {
                (0, 0, 0) => DecodedInst::ILLEGAL16,
                (0, rs1, 0) => inst(Op::Jalr, 0, rs1, 0, 0),
                (0, rd, rs2) => inst(Op::Add, rd, 0, rs2, 0),
                (_, 0, 0) => inst(Op::Ebreak, 0, 0, 0, 0),
                (_, rs1, 0) => inst(Op::Jalr, 1, rs1, 0, 0),
                (_, rd, rs2) => inst(Op::Add, rd, rd, rs2, 0),
            }
        }
        (0b10, 0b110) => inst(Op::Sw, 0, 2, bits(h, 6, 2) as u8, uimm_swsp(h) as i32),
        _ => DecodedInst::ILLEGAL16,
    }
}

// 32-bit word assembly for the expansions.  Local on purpose: decompress
// is the oracle for decode16 and builds its words from scratch.

fn r_type(funct7: u32, rs2: u8, rs1: u8, funct3: u32, rd: u8, opcode: u32) -> u32 {
    funct7 << 25 | (rs2 as u32) << 20 | (rs1 as u32) << 15 | funct3 << 12 | (rd as u32) << 7 | opcode
}

fn i_type(imm: i32, rs1: u8, funct3: u32, rd: u8, opcode: u32) -> u32 {
    ((imm as u32) & 0xFFF) << 20 | (rs1 as u32) << 15 | funct3 << 12 | (rd as u32) << 7 | opcode
}

fn s_type(imm: i32, rs2: u8, rs1: u8, funct3: u32, opcode: u32) -> u32 {
    let imm = imm as u32;
    ((imm >> 5) & 0x7F) << 25
        | (rs2 as u32) << 20
        | (rs1 as u32) << 15
        | funct3 << 12
        | (imm & 0x1F) << 7
        | opcode
}

fn b_type(imm: i32, rs2: u8, rs1: u8, funct3: u32) -> u32 {
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

fn j_type(imm: i32, rd: u8) -> u32 {
    let imm = imm as u32;
    ((imm >> 20) & 1) << 31
        | ((imm >> 1) & 0x3FF) << 21
        | ((imm >> 11) & 1) << 20
        | ((imm >> 12) & 0xFF) << 12
        | (rd as u32) << 7
        | 0b1101111
}

fn u_type(imm: i32, rd: u8, opcode: u32) -> u32 {
    ((imm as u32) & 0xFFFF_F000) | (rd as u32) << 7 | opcode
}

/// Canonical illegal word for reserved compressed encodings, so that
/// `decode32(decompress(h))` is illegal exactly when `decode16(h)` is.
const ILLEGAL_WORD: u32 = 0;

/// Expand a compressed instruction to its 32-bit equivalent.  Reserved and
/// unsupported (floating-point) code points map to a word that fails
/// [`decode32`].
pub fn decompress(h: u16) -> u32 {
    debug_assert!(is_compressed(h), "32-bit encoding passed to decompress: {h:#06x}");
    let quadrant = h & 0b11;
    let funct3 = bits(h, 15, 13);
    const OP_IMM: u32 = 0b0010011;
    const LOAD: u32 = 0b0000011;
    const STORE: u32 = 0b0100011;
    const OP: u32 = 0b0110011;
    const JALR: u32 = 0b1100111;
    match (quadrant, funct3) {
        (0b00, 0b000) => {
            let imm = uimm_addi4spn(h);
            if imm == 0 {
                ILLEGAL_WORD
            } else {
                i_type(imm as i32, 2, 0b000, creg(bits(h, 4, 2)), OP_IMM)
            }
        }
        (0b00, 0b010) => i_type(uimm_lwsw(h) as i32, creg(bits(h, 9, 7)), 0b010, creg(bits(h, 4, 2)), LOAD),
        (0b00, 0b110) => s_type(uimm_lwsw(h) as i32, creg(bits(h, 4, 2)), creg(bits(h, 9, 7)), 0b010, STORE),
        (0b00, _) => ILLEGAL_WORD,

        (0b01, 0b000) => {
            let rd = bits(h, 11, 7) as u8;
            i_type(imm_ci(h), rd, 0b000, rd, OP_IMM)
        }
        (0b01, 0b001) => j_type(imm_j(h), 1),
        (0b01, 0b010) => i_type(imm_ci(h), 0, 0b000, bits(h, 11, 7) as u8, OP_IMM),
        (0b01, 0b011) => {
            let rd = bits(h, 11, 7) as u8;
            if rd == 2 {
                let imm = imm_addi16sp(h);
                if imm == 0 {
                    ILLEGAL_WORD
                } else {
                    i_type(imm, 2, 0b000, 2, OP_IMM)
                }
            } else if imm_lui(h) == 0 {
                ILLEGAL_WORD
            } else {
                u_type(imm_lui(h), rd, 0b0110111)
            }
        }
        (0b01, 0b100) => {
            let rd = creg(bits(h, 9, 7));
            match bits(h, 11, 10) {
                0b00 if shamt(h) < 32 => r_type(0, shamt(h) as u8, rd, 0b101, rd, OP_IMM),
                0b01 if shamt(h) < 32 => r_type(0b0100000, shamt(h) as u8, rd, 0b101, rd, OP_IMM),
                0b10 => i_type(imm_ci(h), rd, 0b111, rd, OP_IMM),
                0b11 if bit(h, 12) == 0 => {
                    let rs2 = creg(bits(h, 4, 2));
                    let (funct7, funct3) = match bits(h, 6, 5) {
                        0b00 => (0b0100000, 0b000),
                        0b01 => (0, 0b100),
                        0b10 => (0, 0b110),
                        _ => (0, 0b111),
                    };
                    r_type(funct7, rs2, rd, funct3, rd, OP)
                }
                _ => ILLEGAL_WORD,
            }
        }
        (0b01, 0b101) => j_type(imm_j(h), 0),
        (0b01, 0b110) => b_type(imm_branch(h), 0, creg(bits(h, 9, 7)), 0b000),
        (0b01, _) => b_type(imm_branch(h), 0, creg(bits(h, 9, 7)), 0b001),

        (0b10, 0b000) => {
            let rd = bits(h, 11, 7) as u8;
            if shamt(h) >= 32 {
                ILLEGAL_WORD
            } else {
                r_type(0, shamt(h) as u8, rd, 0b001, rd, OP_IMM)
            }
        }
        (0b10, 0b010) => {
            let rd = bits(h, 11, 7) as u8;
            if rd == 0 {
                ILLEGAL_WORD
            } else {
                i_type(uimm_lwsp(h) as i32, 2, 0b010, rd, LOAD)
            }
        }
        (0b10, 0b100) => {
            let rs1 = bits(h, 11, 7) as u8;
            let rs2 = bits(h, 6, 2) as u8;
            match (bit(h, 12), rs1, rs2) {
                (0, 0, 0) => ILLEGAL_WORD,
                (0, rs1, 0) => i_type(0, rs1, 0b000, 0, JALR),
                (0, rd, rs2) => r_type(0, rs2, 0, 0b000, rd, OP),
                (_, 0, 0) => 0x0010_0073,
                (_, rs1, 0) => i_type(0, rs1, 0b000, 1, JALR),
                (_, rd, rs2) => r_type(0, rs2, rd, 0b000, rd, OP),
            }
        }
        (0b10, 0b110) => s_type(uimm_swsp(h) as i32, bits(h, 6, 2) as u8, 2, 0b010, STORE),
        _ => ILLEGAL_WORD,
    }
}
