//! Fault injection: the failure classes the runtime verification must catch.

use std::fmt;

/// Which binary's RAM region a fault targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinSel {
    A,
    B,
}

/// Which image segment an upload corruption targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegSel {
    CodeA,
    DataA,
    CodeB,
    DataB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// Flip one bit in a data RAM copy of one microcontroller. Applied after
    /// the binaries run, before verification: the worst case for masking.
    RamDataFlip {
        mc: u8,
        bin: BinSel,
        byte: u32,
        bit: u8,
    },
    /// Flip one bit in a code RAM copy; affects execution from the next
    /// cycle on and is swept by the background program compare.
    RamCodeFlip {
        mc: u8,
        bin: BinSel,
        byte: u32,
        bit: u8,
    },
    /// Force a physical output to a fixed state.
    StuckOutput { pin: u8, value: bool },
    /// The cross-channel handshake stops completing.
    HandshakeDrop,
    /// One microcontroller samples a flipped input line this cycle.
    InputDivergence { mc: u8, pin: u8 },
    /// Flip one bit of a segment during upload, before boot.
    UploadCorruption { seg: SegSel, byte: u32, bit: u8 },
}

impl FaultKind {
    pub fn name(&self) -> &'static str {
        match self {
            FaultKind::RamDataFlip { .. } => "ram_data_flip",
            FaultKind::RamCodeFlip { .. } => "ram_code_flip",
            FaultKind::StuckOutput { .. } => "stuck_output",
            FaultKind::HandshakeDrop => "handshake_drop",
            FaultKind::InputDivergence { .. } => "input_divergence",
            FaultKind::UploadCorruption { .. } => "upload_corruption",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultSpec {
    pub at_cycle: u64,
    pub kind: FaultKind,
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at {} fault {}", self.at_cycle, self.kind.name())
    }
}
