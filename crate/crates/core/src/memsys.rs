//! Memories, the memory-mapped IO bus and program image loading.
//!
//! Instruction memory is an array of 16-bit entries so a fetch unit can
//! read the two consecutive entries a straddling 32-bit instruction needs.
//! Data memory is byte addressable.  A flat program image is loaded into
//! both at offset 0: code executes from instruction memory while loads see
//! read-only data through the data-memory copy (self-modifying code is out
//! of scope).
//!
//! Two word-sized store targets sit high in the address space:
//! [`EXIT_ADDR`] ends the program with an exit code and [`PUTCHAR_ADDR`]
//! appends one byte to the console.  The bus only acknowledges aligned
//! word stores there; everything else in that region faults.

use std::io::Write;
use std::path::Path;

use crate::Fault;

/// Storing a word here ends the program; the stored value is the exit code.
pub const EXIT_ADDR: u32 = 0xFFFF_0000;
/// Storing a word here emits its low byte on the console.
pub const PUTCHAR_ADDR: u32 = 0xFFFF_0004;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("image of {size} bytes exceeds memory of {capacity} bytes")]
    ImageTooLarge { size: usize, capacity: u32 },
    #[error("line {line}: {msg}")]
    Hex { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Instruction memory: 16-bit entries, byte capacity fixed at construction.
#[derive(Clone)]
pub struct InstMemory {
    entries: Vec<u16>,
}

impl InstMemory {
    pub fn new(size_bytes: u32) -> InstMemory {
        assert!(size_bytes.is_multiple_of(4) && size_bytes > 0, "capacity must be a multiple of 4");
        InstMemory {
            entries: vec![0; size_bytes as usize / 2],
        }
    }

    pub fn size_bytes(&self) -> u32 {
        self.entries.len() as u32 * 2
    }

    pub fn load_image(&mut self, image: &[u8]) -> Result<(), LoadError> {
        if image.len() > self.size_bytes() as usize {
            return Err(LoadError::ImageTooLarge {
                size: image.len(),
                capacity: self.size_bytes(),
            });
        }
        for (i, chunk) in image.chunks(2).enumerate() {
            let lo = chunk[0];
            let hi = chunk.get(1).copied().unwrap_or(0);
            self.entries[i] = u16::from_le_bytes([lo, hi]);
        }
        Ok(())
    }

    /// Read the 16-bit entry at an even byte address.
    pub fn read_half(&self, addr: u32) -> Result<u16, Fault> {
        debug_assert!(addr.is_multiple_of(2), "instruction address must be even: {addr:#x}");
        match self.entries.get(addr as usize / 2) {
            Some(&e) => Ok(e),
            None => Err(Fault::FetchOutOfRange { addr }),
        }
    }

    /// Aligned 32-bit read, as a single-port fetch unit performs it.
    pub fn read_word_aligned(&self, addr: u32) -> Result<u32, Fault> {
        debug_assert!(addr.is_multiple_of(4), "aligned fetch from {addr:#x}");
        let lo = self.read_half(addr)?;
        let hi = self.read_half(addr + 2)?;
        Ok((hi as u32) << 16 | lo as u32)
    }
}

/// What a store did, beyond updating memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreEffect {
    Plain,
    Putchar(u8),
    Exit(u32),
}

/// Byte-addressable data memory plus the IO page.
#[derive(Clone)]
pub struct DataMemory {
    bytes: Vec<u8>,
}

impl DataMemory {
    pub fn new(size_bytes: u32) -> DataMemory {
        assert!(size_bytes.is_multiple_of(4) && size_bytes > 0, "capacity must be a multiple of 4");
        DataMemory {
            bytes: vec![0; size_bytes as usize],
        }
    }

    pub fn size_bytes(&self) -> u32 {
        self.bytes.len() as u32
    }

    pub fn load_image(&mut self, image: &[u8]) -> Result<(), LoadError> {
        if image.len() > self.bytes.len() {
            return Err(LoadError::ImageTooLarge {
                size: image.len(),
                capacity: self.size_bytes(),
            });
        }
        self.bytes[..image.len()].copy_from_slice(image);
        Ok(())
    }

    fn is_mmio(addr: u32) -> bool {
        addr == EXIT_ADDR || addr == PUTCHAR_ADDR
    }

    /// Load `size` bytes (1, 2 or 4), zero-extended; the caller applies
    /// sign extension per operation.
    pub fn load(&self, addr: u32, size: u8) -> Result<u32, Fault> {
        if !addr.is_multiple_of(size as u32) {
            return Err(Fault::Misaligned { addr, size });
        }
        // The IO registers are write-only.
        let end = addr as u64 + size as u64;
        if end > self.bytes.len() as u64 {
            return Err(Fault::DataOutOfRange { addr, size });
        }
        let mut v = 0u32;
        for i in (0..size as usize).rev() {
            v = v << 8 | self.bytes[addr as usize + i] as u32;
        }
        Ok(v)
    }

    /// Store the low `size` bytes of `value`.  Word stores to the IO page
    /// are intercepted and reported in the returned effect.
    pub fn store(&mut self, addr: u32, size: u8, value: u32) -> Result<StoreEffect, Fault> {
        if !addr.is_multiple_of(size as u32) {
            return Err(Fault::Misaligned { addr, size });
        }
        if Self::is_mmio(addr) {
            if size != 4 {
                return Err(Fault::DataOutOfRange { addr, size });
            }
            return Ok(if addr == EXIT_ADDR {
                StoreEffect::Exit(value)
            } else {
                StoreEffect::Putchar(value as u8)
            });
        }
        let end = addr as u64 + size as u64;
        if end > self.bytes.len() as u64 {
            return Err(Fault::DataOutOfRange { addr, size });
        }
        for i in 0..size as usize {
            self.bytes[addr as usize + i] = (value >> (8 * i)) as u8;
        }
        Ok(StoreEffect::Plain)
    }
}

/// Captured console output, optionally echoed to stdout as it arrives.
#[derive(Default)]
pub struct ConsoleSink {
    bytes: Vec<u8>,
    echo: bool,
}

impl ConsoleSink {
    pub fn new(echo: bool) -> ConsoleSink {
        ConsoleSink { bytes: Vec::new(), echo }
    }

    pub fn push(&mut self, b: u8) {
        self.bytes.push(b);
        if self.echo {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(&[b]);
            let _ = out.flush();
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

/// The instruction and data memories of one machine, loaded with the same
/// image so both engines are built identically.
#[derive(Clone)]
pub struct MachineMemory {
    pub imem: InstMemory,
    pub dmem: DataMemory,
}

impl MachineMemory {
    pub fn new(imem_bytes: u32, dmem_bytes: u32) -> MachineMemory {
        MachineMemory {
            imem: InstMemory::new(imem_bytes),
            dmem: DataMemory::new(dmem_bytes),
        }
    }

    pub fn load_image(&mut self, image: &[u8]) -> Result<(), LoadError> {
        self.imem.load_image(image)?;
        self.dmem.load_image(image)
    }
}

/// Parse a text listing of 32-bit words, one per line, little-endian into
/// bytes.  Blank lines and `#` comments are skipped; a line of the form
/// `@hexaddr` moves the cursor to that *byte* address.
pub fn parse_hex_words(text: &str) -> Result<Vec<u8>, LoadError> {
    let mut bytes: Vec<u8> = Vec::new();
    let mut cursor = 0usize;
    for (i, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| LoadError::Hex { line: i + 1, msg };
        if let Some(addr) = line.strip_prefix('@') {
            let addr = usize::from_str_radix(addr, 16)
                .map_err(|e| err(format!("bad address {addr:?}: {e}")))?;
            if addr % 4 != 0 {
                return Err(err(format!("address {addr:#x} is not word aligned")));
            }
            cursor = addr;
            continue;
        }
        if line.len() > 8 {
            return Err(err(format!("{line:?} is longer than one 32-bit word")));
        }
        let word = u32::from_str_radix(line, 16).map_err(|e| err(format!("bad word {line:?}: {e}")))?;
        if bytes.len() < cursor + 4 {
            bytes.resize(cursor + 4, 0);
        }
        bytes[cursor..cursor + 4].copy_from_slice(&word.to_le_bytes());
        cursor += 4;
    }
    Ok(bytes)
}

/// Read a program image: files ending in `.hex` are parsed as word
/// listings, anything else is taken as a flat little-endian binary.
pub fn read_image_file(path: &Path) -> Result<Vec<u8>, LoadError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("hex")) {
        parse_hex_words(&std::fs::read_to_string(path)?)
    } else {
        Ok(std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn imem_halves_and_straddles() {
        let mut m = InstMemory::new(16);
        // c.nop | addi x1, x0, 5 straddling entries 1-2 | c.nop
        let image: Vec<u8> = [0x0001u16, 0x0093, 0x0050, 0x0001]
            .iter()
            .flat_map(|h| h.to_le_bytes())
            .collect();
        m.load_image(&image).unwrap();
        assert_eq!(m.read_half(0).unwrap(), 0x0001);
        assert_eq!(m.read_half(2).unwrap(), 0x0093);
        assert_eq!(m.read_half(4).unwrap(), 0x0050);
        assert_eq!(m.read_word_aligned(0).unwrap(), 0x0093_0001);
        assert_eq!(m.read_half(14).unwrap(), 0);
        assert_eq!(m.read_half(16), Err(Fault::FetchOutOfRange { addr: 16 }));
    }

    #[test]
    fn imem_rejects_oversized_image() {
        let mut m = InstMemory::new(8);
        assert!(matches!(
            m.load_image(&[0u8; 9]),
            Err(LoadError::ImageTooLarge { size: 9, capacity: 8 })
        ));
    }

    #[test]
    fn dmem_bounds_and_alignment() {
        let mut m = DataMemory::new(64);
        m.store(0x10, 4, 0xDEAD_BEEF).unwrap();
        assert_eq!(m.load(0x10, 4).unwrap(), 0xDEAD_BEEF);
        assert_eq!(m.load(0x10, 1).unwrap(), 0xEF);
        assert_eq!(m.load(0x12, 2).unwrap(), 0xDEAD);
        assert_eq!(m.load(0x11, 2), Err(Fault::Misaligned { addr: 0x11, size: 2 }));
        assert_eq!(m.load(0x42, 4), Err(Fault::Misaligned { addr: 0x42, size: 4 }));
        assert_eq!(m.load(64, 1), Err(Fault::DataOutOfRange { addr: 64, size: 1 }));
        assert_eq!(m.store(0x3E, 4, 0), Err(Fault::Misaligned { addr: 0x3E, size: 4 }));
        assert_eq!(m.store(0x40, 2, 0), Err(Fault::DataOutOfRange { addr: 0x40, size: 2 }));
    }

    #[test]
    fn mmio_words_only() {
        let mut m = DataMemory::new(64);
        assert_eq!(m.store(EXIT_ADDR, 4, 3).unwrap(), StoreEffect::Exit(3));
        assert_eq!(m.store(PUTCHAR_ADDR, 4, 0x1F1).unwrap(), StoreEffect::Putchar(0xF1));
        assert_eq!(
            m.store(EXIT_ADDR, 1, 0),
            Err(Fault::DataOutOfRange { addr: EXIT_ADDR, size: 1 })
        );
        // The IO registers are write-only; loads there are out of range.
        assert_eq!(
            m.load(EXIT_ADDR, 4),
            Err(Fault::DataOutOfRange { addr: EXIT_ADDR, size: 4 })
        );
        assert_eq!(
            m.load(PUTCHAR_ADDR, 4),
            Err(Fault::DataOutOfRange { addr: PUTCHAR_ADDR, size: 4 })
        );
    }

    #[test]
    fn console_captures_bytes() {
        let mut c = ConsoleSink::new(false);
        for b in b"ok\n" {
            c.push(*b);
        }
        assert_eq!(c.bytes(), b"ok\n");
        assert_eq!(c.into_bytes(), b"ok\n".to_vec());
    }

    #[test]
    fn hex_listing_round_trips() {
        let text = "# boot\n00100513\n 00008067 # ret\n\n@10\ndeadbeef\n";
        let bytes = parse_hex_words(text).unwrap();
        assert_eq!(bytes.len(), 0x14);
        assert_eq!(&bytes[0..4], &0x0010_0513u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &0x0000_8067u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &[0; 8]);
        assert_eq!(&bytes[0x10..0x14], &0xDEAD_BEEFu32.to_le_bytes());
    }

    #[test]
    fn hex_listing_reports_line_numbers() {
        let e = parse_hex_words("00000013\nnot-hex\n").unwrap_err();
        match e {
            LoadError::Hex { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let e = parse_hex_words("@3\n00000013\n").unwrap_err();
        match e {
            LoadError::Hex { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(parse_hex_words("112233445\n").is_err());
    }

    proptest! {
        #[test]
        fn dmem_store_load_round_trip(
            word_index in 0u32..16,
            size_exp in 0u8..3,
            value: u32,
        ) {
            let size = 1u8 << size_exp;
            let addr = word_index * 4; // aligned for every size
            let mut m = DataMemory::new(64);
            m.store(addr, size, value).unwrap();
            let mask = if size == 4 { u32::MAX } else { (1u32 << (8 * size)) - 1 };
            prop_assert_eq!(m.load(addr, size).unwrap(), value & mask);
            // Neighbours stay untouched.
            prop_assert_eq!(m.load((addr + 4) % 64, 4).unwrap(), 0);
        }
    }
}
