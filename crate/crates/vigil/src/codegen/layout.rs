//! Data-segment layouts. The two paths place the same logical variables at
//! different offsets: path A packs them in declaration order, path B in
//! alphabetical order behind a 4-byte guard word, so the two data images are
//! never byte-compatible and an address-confusion bug in one path cannot
//! silently mirror into the other.

use crate::kernel::{VarKind, Width};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub name: String,
    pub width: Width,
    pub kind: VarKind,
    pub offset: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataLayout {
    /// Logical variables in this segment's placement order.
    pub entries: Vec<LayoutEntry>,
    /// Bytes covered by logical variables (including any leading pad).
    pub vars_size: u32,
    /// Total segment size including scratch (kernel locals, spill slots).
    pub total_size: u32,
}

impl DataLayout {
    pub fn offset_of(&self, name: &str) -> Option<(u32, Width)> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| (e.offset, e.width))
    }

    pub fn read(&self, data: &[u8], name: &str) -> Option<u32> {
        let (off, width) = self.offset_of(name)?;
        Some(read_at(data, off, width))
    }

    pub fn write(&self, data: &mut [u8], name: &str, value: u32) {
        if let Some((off, width)) = self.offset_of(name) {
            write_at(data, off, width, value);
        }
    }
}

pub fn read_at(data: &[u8], off: u32, width: Width) -> u32 {
    let off = off as usize;
    let mut buf = [0u8; 4];
    buf[..width.bytes()].copy_from_slice(&data[off..off + width.bytes()]);
    u32::from_le_bytes(buf)
}

pub fn write_at(data: &mut [u8], off: u32, width: Width, value: u32) {
    let off = off as usize;
    data[off..off + width.bytes()].copy_from_slice(&value.to_le_bytes()[..width.bytes()]);
}
