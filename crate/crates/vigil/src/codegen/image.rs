//! The linked dual-binary image: four segments (code and data per path) at
//! disjoint bases, a symbol table tying every logical variable to its offset
//! in both data segments, per-segment CRC32s and a global CRC32.
//!
//! The container is binary, little-endian throughout; the exact byte layout
//! is documented in `docs/image-format.md`. An Intel-HEX-style text export
//! is available for inspection only.

use std::fmt;

use thiserror::Error;

use crate::kernel::{IoConfig, VarKind, Width};

use super::crc::crc32;
use super::layout::DataLayout;
use super::reg::BytecodeB;
use super::stack::BytecodeA;
use super::CodegenError;

pub const IMAGE_MAGIC: &[u8; 6] = b"CSPIMG";
pub const IMAGE_VERSION: u16 = 1;
const ENDIAN_MARKER: u8 = 0x4C; // 'L'

/// Base addresses for the four segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryLayoutConfig {
    pub code_a_base: u32,
    pub data_a_base: u32,
    pub code_b_base: u32,
    pub data_b_base: u32,
}

impl Default for MemoryLayoutConfig {
    fn default() -> Self {
        // 16 MiB apart: deeply unrolled translations can emit megabytes of
        // code, and only the occupied bytes are materialized.
        MemoryLayoutConfig {
            code_a_base: 0x0100_0000,
            data_a_base: 0x0200_0000,
            code_b_base: 0x0300_0000,
            data_b_base: 0x0400_0000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SymKind {
    Input,
    Output,
    State,
    Const,
}

impl SymKind {
    fn code(self) -> u8 {
        match self {
            SymKind::Input => 0,
            SymKind::Output => 1,
            SymKind::State => 2,
            SymKind::Const => 3,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => SymKind::Input,
            1 => SymKind::Output,
            2 => SymKind::State,
            3 => SymKind::Const,
            _ => return None,
        })
    }

    fn of(kind: VarKind) -> (Self, Option<u8>) {
        match kind {
            VarKind::Input { pin } => (SymKind::Input, Some(pin)),
            VarKind::Output { pin } => (SymKind::Output, Some(pin)),
            VarKind::State => (SymKind::State, None),
            VarKind::Const { .. } => (SymKind::Const, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolEntry {
    pub name: String,
    pub kind: SymKind,
    pub width: Width,
    pub pin: Option<u8>,
    pub off_a: u32,
    pub off_b: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub base: u32,
    pub data: Vec<u8>,
    pub crc: u32,
}

impl Segment {
    fn new(base: u32, data: Vec<u8>) -> Self {
        let crc = crc32(&data);
        Segment { base, data, crc }
    }

    pub fn end(&self) -> u32 {
        self.base + self.data.len() as u32
    }

    fn overlaps(&self, other: &Segment) -> bool {
        self.base < other.end() && other.base < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramImage {
    pub version: u16,
    pub io: IoConfig,
    pub code_a: Segment,
    pub data_a: Segment,
    pub code_b: Segment,
    pub data_b: Segment,
    pub symbols: Vec<SymbolEntry>,
    pub global_crc: u32,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LinkError {
    #[error("E_MEM_OVERLAP segments {a} and {b} overlap")]
    MemOverlap { a: &'static str, b: &'static str },
    #[error("E_NAME_MISMATCH logical symbol sets differ between the two binaries: {detail}")]
    NameMismatch { detail: String },
    #[error("init execution failed: {0}")]
    InitExec(String),
}

impl From<CodegenError> for LinkError {
    fn from(e: CodegenError) -> Self {
        LinkError::InitExec(e.to_string())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ImageFormatError {
    #[error("not an image file (bad magic)")]
    BadMagic,
    #[error("unsupported image version {0}")]
    BadVersion(u16),
    #[error("image file truncated or inconsistent: {0}")]
    Malformed(String),
}

/// Link the two binaries into an image. Fails if the logical symbol sets of
/// the two paths differ or if the configured segment bases overlap.
pub fn link(
    a: &BytecodeA,
    b: &BytecodeB,
    layout: &MemoryLayoutConfig,
    io: IoConfig,
) -> Result<ProgramImage, LinkError> {
    check_symbols(&a.layout, &b.layout)?;

    let symbols = build_symbols(&a.layout, &b.layout);
    let code_a = Segment::new(layout.code_a_base, a.code.clone());
    let data_a = Segment::new(layout.data_a_base, a.initial_data()?);
    let code_b = Segment::new(layout.code_b_base, b.code.clone());
    let data_b = Segment::new(layout.data_b_base, b.initial_data()?);

    check_disjoint(&code_a, &data_a, &code_b, &data_b)?;

    let mut image = ProgramImage {
        version: IMAGE_VERSION,
        io,
        code_a,
        data_a,
        code_b,
        data_b,
        symbols,
        global_crc: 0,
    };
    image.global_crc = crc32(&image.serialize_body());
    Ok(image)
}

pub(crate) fn check_disjoint(
    code_a: &Segment,
    data_a: &Segment,
    code_b: &Segment,
    data_b: &Segment,
) -> Result<(), LinkError> {
    let named = [
        ("codeA", code_a),
        ("dataA", data_a),
        ("codeB", code_b),
        ("dataB", data_b),
    ];
    for i in 0..named.len() {
        for j in i + 1..named.len() {
            if named[i].1.overlaps(named[j].1) {
                return Err(LinkError::MemOverlap {
                    a: named[i].0,
                    b: named[j].0,
                });
            }
        }
    }
    Ok(())
}

fn check_symbols(a: &DataLayout, b: &DataLayout) -> Result<(), LinkError> {
    let mut sig_a: Vec<(String, Width, u8, Option<u8>)> = a
        .entries
        .iter()
        .map(|e| {
            let (kind, pin) = SymKind::of(e.kind);
            (e.name.clone(), e.width, kind.code(), pin)
        })
        .collect();
    let mut sig_b: Vec<(String, Width, u8, Option<u8>)> = b
        .entries
        .iter()
        .map(|e| {
            let (kind, pin) = SymKind::of(e.kind);
            (e.name.clone(), e.width, kind.code(), pin)
        })
        .collect();
    sig_a.sort();
    sig_b.sort();
    if sig_a != sig_b {
        let names_a: Vec<&str> = sig_a.iter().map(|s| s.0.as_str()).collect();
        let names_b: Vec<&str> = sig_b.iter().map(|s| s.0.as_str()).collect();
        let only_a: Vec<&&str> = names_a.iter().filter(|n| !names_b.contains(n)).collect();
        let only_b: Vec<&&str> = names_b.iter().filter(|n| !names_a.contains(n)).collect();
        return Err(LinkError::NameMismatch {
            detail: format!("only in A: {:?}, only in B: {:?}", only_a, only_b),
        });
    }
    Ok(())
}

fn build_symbols(a: &DataLayout, b: &DataLayout) -> Vec<SymbolEntry> {
    let mut symbols: Vec<SymbolEntry> = a
        .entries
        .iter()
        .map(|e| {
            let (kind, pin) = SymKind::of(e.kind);
            let (off_b, _) = b.offset_of(&e.name).expect("symbol sets verified equal");
            SymbolEntry {
                name: e.name.clone(),
                kind,
                width: e.width,
                pin,
                off_a: e.offset,
                off_b,
            }
        })
        .collect();
    // Declaration order of path A is the canonical symbol order.
    symbols.sort_by_key(|s| s.off_a);
    symbols
}

impl ProgramImage {
    pub fn symbol(&self, name: &str) -> Option<&SymbolEntry> {
        self.symbols.iter().find(|s| s.name == name)
    }

    pub fn segments(&self) -> [(&'static str, &Segment); 4] {
        [
            ("codeA", &self.code_a),
            ("dataA", &self.data_a),
            ("codeB", &self.code_b),
            ("dataB", &self.data_b),
        ]
    }

    fn serialize_body(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(IMAGE_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(ENDIAN_MARKER);
        out.push(self.io.inputs);
        out.push(self.io.outputs);
        out.push(0); // reserved
        for (_, seg) in self.segments() {
            out.extend_from_slice(&seg.base.to_le_bytes());
            out.extend_from_slice(&(seg.data.len() as u32).to_le_bytes());
            out.extend_from_slice(&seg.crc.to_le_bytes());
        }
        out.extend_from_slice(&(self.symbols.len() as u32).to_le_bytes());
        for sym in &self.symbols {
            out.push(sym.name.len() as u8);
            out.extend_from_slice(sym.name.as_bytes());
            out.push(sym.kind.code());
            out.push(sym.width.bytes() as u8);
            out.push(sym.pin.unwrap_or(0));
            out.extend_from_slice(&sym.off_a.to_le_bytes());
            out.extend_from_slice(&sym.off_b.to_le_bytes());
        }
        for (_, seg) in self.segments() {
            out.extend_from_slice(&seg.data);
        }
        out
    }

    /// Full image file bytes. Deterministic for a given image.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.serialize_body();
        out.extend_from_slice(&self.global_crc.to_le_bytes());
        out
    }

    /// Parse an image file. Performs structural checks only; CRC and memory
    /// map verification is the loader's responsibility.
    pub fn from_bytes(bytes: &[u8]) -> Result<ProgramImage, ImageFormatError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(6)?;
        if magic != IMAGE_MAGIC {
            return Err(ImageFormatError::BadMagic);
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != IMAGE_VERSION {
            return Err(ImageFormatError::BadVersion(version));
        }
        let endian = r.u8()?;
        if endian != ENDIAN_MARKER {
            return Err(ImageFormatError::Malformed(format!(
                "bad endian marker 0x{:02X}",
                endian
            )));
        }
        let inputs = r.u8()?;
        let outputs = r.u8()?;
        let _reserved = r.u8()?;
        let mut dirs = Vec::with_capacity(4);
        for _ in 0..4 {
            let base = r.u32()?;
            let size = r.u32()?;
            let crc = r.u32()?;
            dirs.push((base, size, crc));
        }
        let sym_count = r.u32()? as usize;
        if sym_count > 10_000 {
            return Err(ImageFormatError::Malformed(format!(
                "implausible symbol count {}",
                sym_count
            )));
        }
        let mut symbols = Vec::with_capacity(sym_count);
        for _ in 0..sym_count {
            let name_len = r.u8()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| ImageFormatError::Malformed("symbol name not UTF-8".into()))?;
            let kind = SymKind::from_code(r.u8()?)
                .ok_or_else(|| ImageFormatError::Malformed("bad symbol kind".into()))?;
            let width = match r.u8()? {
                1 => Width::W8,
                2 => Width::W16,
                4 => Width::W32,
                w => {
                    return Err(ImageFormatError::Malformed(format!(
                        "bad symbol width {}",
                        w
                    )))
                }
            };
            let pin = match r.u8()? {
                0 => None,
                p => Some(p),
            };
            let off_a = r.u32()?;
            let off_b = r.u32()?;
            symbols.push(SymbolEntry {
                name,
                kind,
                width,
                pin,
                off_a,
                off_b,
            });
        }
        let mut segs = Vec::with_capacity(4);
        for (base, size, crc) in &dirs {
            let data = r.take(*size as usize)?.to_vec();
            segs.push(Segment {
                base: *base,
                data,
                crc: *crc,
            });
        }
        let global_crc = r.u32()?;
        if r.pos != bytes.len() {
            return Err(ImageFormatError::Malformed("trailing bytes".into()));
        }
        let mut it = segs.into_iter();
        Ok(ProgramImage {
            version,
            io: IoConfig { inputs, outputs },
            code_a: it.next().unwrap(),
            data_a: it.next().unwrap(),
            code_b: it.next().unwrap(),
            data_b: it.next().unwrap(),
            symbols,
            global_crc,
        })
    }

    /// Recompute and compare all five CRCs. Returns the name of the first
    /// failing check.
    pub fn verify_crcs(&self) -> Result<(), &'static str> {
        for (name, seg) in self.segments() {
            if crc32(&seg.data) != seg.crc {
                return Err(name);
            }
        }
        if crc32(&self.serialize_body()) != self.global_crc {
            return Err("global");
        }
        Ok(())
    }

    /// Intel-HEX-style text rendering of the four segments (type 04 extended
    /// linear address records, type 00 data records, type 01 EOF).
    pub fn to_hex_text(&self) -> String {
        let mut out = String::new();
        for (_, seg) in self.segments() {
            let mut addr = seg.base;
            let mut high = u16::MAX;
            for chunk in seg.data.chunks(16) {
                let upper = (addr >> 16) as u16;
                if upper != high {
                    high = upper;
                    let rec = [0x02, 0x00, 0x00, 0x04, (upper >> 8) as u8, upper as u8];
                    push_hex_record(&mut out, &rec);
                }
                let mut rec = Vec::with_capacity(4 + chunk.len());
                rec.push(chunk.len() as u8);
                rec.push((addr >> 8) as u8);
                rec.push(addr as u8);
                rec.push(0x00);
                rec.extend_from_slice(chunk);
                push_hex_record(&mut out, &rec);
                addr += chunk.len() as u32;
            }
        }
        push_hex_record(&mut out, &[0x00, 0x00, 0x00, 0x01]);
        out
    }
}

fn push_hex_record(out: &mut String, rec: &[u8]) {
    let sum: u8 = rec.iter().fold(0u8, |acc, &b| acc.wrapping_add(b));
    let checksum = sum.wrapping_neg();
    out.push(':');
    for b in rec {
        out.push_str(&format!("{:02X}", b));
    }
    out.push_str(&format!("{:02X}\n", checksum));
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ImageFormatError> {
        if self.pos + n > self.bytes.len() {
            return Err(ImageFormatError::Malformed("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ImageFormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ImageFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl fmt::Display for ProgramImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "image v{} io {}in/{}out",
            self.version, self.io.inputs, self.io.outputs
        )?;
        for (name, seg) in self.segments() {
            writeln!(
                f,
                "  {:5} base 0x{:08X} size {:5} crc 0x{:08X}",
                name,
                seg.base,
                seg.data.len(),
                seg.crc
            )?;
        }
        writeln!(
            f,
            "  {} symbols, global crc 0x{:08X}",
            self.symbols.len(),
            self.global_crc
        )
    }
}
