//! Branch prediction tables: gshare and bimodal over a shared pattern
//! history table and an untagged branch target buffer.
//!
//! This module is the architectural state only.  The pipeline wraps it
//! with the timing that makes it interesting there: lookups are registered
//! (available one cycle after the fetch that triggered them), so a
//! prediction is indexed by the *predecessor* instruction's address and
//! applies to the instruction fetched sequentially after it.  The GHR
//! snapshot travels with each prediction so the update after resolution
//! uses the same index the lookup did.
//!
//! Table shapes: 8192 two-bit counters initialized to 1 (weakly
//! not-taken), 512 target entries initialized to 0, a 13-bit global
//! history register.

pub const PHT_ENTRIES: usize = 8192;
pub const BTB_ENTRIES: usize = 512;
pub const GHR_BITS: u32 = 13;
const GHR_MASK: u16 = (1 << GHR_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BpredKind {
    None,
    Bimodal,
    Gshare,
}

impl BpredKind {
    pub const ALL: [BpredKind; 3] = [BpredKind::None, BpredKind::Bimodal, BpredKind::Gshare];

    pub fn name(self) -> &'static str {
        match self {
            BpredKind::None => "none",
            BpredKind::Bimodal => "bimodal",
            BpredKind::Gshare => "gshare",
        }
    }
}

impl std::fmt::Display for BpredKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BpredKind {
    type Err = String;

    fn from_str(s: &str) -> Result<BpredKind, String> {
        match s {
            "none" => Ok(BpredKind::None),
            "bimodal" => Ok(BpredKind::Bimodal),
            "gshare" => Ok(BpredKind::Gshare),
            other => Err(format!("unknown predictor {other:?} (none, bimodal, gshare)")),
        }
    }
}

/// One table read: direction, target and the GHR value the index used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub taken: bool,
    pub target: u32,
    pub ghr: u16,
}

pub struct Predictor {
    kind: BpredKind,
    pht: Vec<u8>,
    btb: Vec<u32>,
    ghr: u16,
}

impl Predictor {
    pub fn new(kind: BpredKind) -> Predictor {
        Predictor {
            kind,
            pht: vec![1; PHT_ENTRIES],
            btb: vec![0; BTB_ENTRIES],
            ghr: 0,
        }
    }

    pub fn kind(&self) -> BpredKind {
        self.kind
    }

    pub fn ghr(&self) -> u16 {
        self.ghr
    }

    /// Counter index for an instruction address.  Instructions are 16-bit
    /// aligned, so bit 0 of the address carries no information and the
    /// index starts at bit 1.
    fn pht_index(&self, pc: u32, ghr: u16) -> usize {
        match self.kind {
            BpredKind::None => 0,
            BpredKind::Bimodal => (pc as usize >> 1) % PHT_ENTRIES,
            BpredKind::Gshare => ((pc as usize >> 1) ^ ghr as usize) % PHT_ENTRIES,
        }
    }

    fn btb_index(pc: u32) -> usize {
        (pc as usize >> 1) % BTB_ENTRIES
    }

    /// Combinational table read.  The BTB is untagged, so `target` can be
    /// a stale alias; the pipeline treats a wrong target like any other
    /// mispredict.
    pub fn lookup(&self, pc: u32) -> Prediction {
        let taken = match self.kind {
            BpredKind::None => false,
            _ => self.pht[self.pht_index(pc, self.ghr)] >= 2,
        };
        Prediction {
            taken,
            target: self.btb[Self::btb_index(pc)],
            ghr: self.ghr,
        }
    }

    /// Train the tables after a control-flow instruction resolves.  `ghr`
    /// is the snapshot carried from lookup time, so gshare trains the
    /// counter the prediction actually read.
    pub fn update(&mut self, pc: u32, ghr: u16, taken: bool, target: u32) {
        if self.kind == BpredKind::None {
            return;
        }
        let i = self.pht_index(pc, ghr);
        let c = self.pht[i];
        self.pht[i] = if taken { (c + 1).min(3) } else { c.saturating_sub(1) };
        if taken {
            self.btb[Self::btb_index(pc)] = target;
        }
    }

    /// Record a conditional branch outcome in the history register.  Only
    /// conditional branches shift; unconditional jumps train the tables
    /// but carry no direction information.
    pub fn shift_ghr(&mut self, taken: bool) {
        if self.kind == BpredKind::None {
            return;
        }
        self.ghr = (self.ghr << 1 | taken as u16) & GHR_MASK;
    }
}
