//! Per-cycle execution trace: append-only, replayable, byte-stable across
//! runs for identical inputs.

use std::io::{self, Write};

use serde::Serialize;

use crate::kernel::IoConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub ms: u32,
    /// Input line bitmask, bit k = pin k+1.
    pub inputs: u32,
    /// Memory output registers (µC1, path A) as a bitmask: bit set iff the
    /// register holds IO_ON.
    pub out_mem: u32,
    /// Physical output bitmask.
    pub out_phys: u32,
    pub events: Vec<String>,
    /// Logical variable stores in symbol order, captured when requested:
    /// [µC1·A, µC1·B, µC2·A, µC2·B].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stores: Option<[Vec<u32>; 4]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status")]
pub enum RunStatus {
    #[serde(rename = "RUNNING")]
    Running,
    #[serde(rename = "PANIC")]
    Panic {
        reasons: Vec<String>,
        cycle: u64,
        ms: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub io: IoConfig,
    pub records: Vec<CycleRecord>,
    pub status: RunStatus,
}

impl Trace {
    pub fn panicked(&self) -> bool {
        matches!(self.status, RunStatus::Panic { .. })
    }

    pub fn panic_cycle(&self) -> Option<u64> {
        match &self.status {
            RunStatus::Panic { cycle, .. } => Some(*cycle),
            RunStatus::Running => None,
        }
    }

    pub fn panic_reasons(&self) -> &[String] {
        match &self.status {
            RunStatus::Panic { reasons, .. } => reasons,
            RunStatus::Running => &[],
        }
    }

    /// Line-oriented text form: `C<cycle> IN=<hex> OUTMEM=<hex> OUTPHY=<hex>
    /// EVT=<...>` followed by a status line.
    pub fn write_text(&self, w: &mut impl Write) -> io::Result<()> {
        for rec in &self.records {
            let events = if rec.events.is_empty() {
                "-".to_string()
            } else {
                rec.events.join(",")
            };
            writeln!(
                w,
                "C{} IN={:05X} OUTMEM={:02X} OUTPHY={:02X} EVT={}",
                rec.cycle, rec.inputs, rec.out_mem, rec.out_phys, events
            )?;
        }
        match &self.status {
            RunStatus::Running => writeln!(w, "STATUS RUNNING"),
            RunStatus::Panic { reasons, cycle, ms } => writeln!(
                w,
                "STATUS PANIC reason={} cycle={} ms={}",
                reasons.join("+"),
                cycle,
                ms
            ),
        }
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("trace text is utf-8")
    }

    pub fn write_json(&self, w: &mut impl Write) -> io::Result<()> {
        serde_json::to_writer_pretty(&mut *w, self)?;
        writeln!(w)
    }

    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        self.write_json(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("trace json is utf-8")
    }
}
