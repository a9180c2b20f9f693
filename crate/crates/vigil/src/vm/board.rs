//! The dual-microcontroller board: bootloader, per-channel sequencer running
//! both binaries, the runtime safety library, and the physical output model
//! with energy/command voting.
//!
//! Every cycle each microcontroller samples the input lines, runs binary A
//! then binary B, and then the safety checks run in a fixed order:
//!
//! 1. input agreement between the two microcontrollers;
//! 2. intra-microcontroller compare of the two data stores (CRC over the
//!    logical variables, every cycle);
//! 3. background program sweep (one chunk per cycle, compared against the
//!    twin microcontroller and against the flash CRC);
//! 4. cross-channel handshake exchanging data-store CRCs, with a hard
//!    50 ms staleness deadline;
//! 5. output feedback (commanded state from `settle_delay` cycles ago must
//!    match the physical state);
//! 6. vital code check on every output register.
//!
//! Any failure is terminal: outputs drop, state freezes, only a hard reset
//! (re-copy of flash into RAM) leaves panic mode. One microcontroller
//! commands each output, the other powers it; the physical state is their
//! conjunction.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::codegen::image::check_disjoint;
use crate::codegen::layout::{read_at, write_at};
use crate::codegen::{crc32, run_cycle_reg, run_cycle_stack, ProgramImage, SymKind};
use crate::kernel::{io_code_valid, IO_OFF, IO_ON};

use super::fault::{BinSel, FaultKind, FaultSpec};
use super::trace::CycleRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoardConfig {
    /// Board cycle period, simulated milliseconds.
    pub cycle_ms: u32,
    /// Hard deadline on cross-channel handshake staleness.
    pub handshake_deadline_ms: u32,
    /// Code bytes compared per cycle by the background sweep.
    pub sweep_chunk: usize,
    /// Cycles an output may lag its command before the feedback check fires.
    pub settle_delay: u32,
}

impl Default for BoardConfig {
    fn default() -> Self {
        BoardConfig {
            cycle_ms: 5,
            handshake_deadline_ms: 50,
            sweep_chunk: 64,
            settle_delay: 2,
        }
    }
}

impl BoardConfig {
    /// Handshake rendezvous interval in cycles: one less than the number of
    /// cycles that fit the deadline, so a completed handshake always lands
    /// inside the window with margin.
    pub fn handshake_interval(&self) -> u64 {
        let cycles = self.handshake_deadline_ms.div_ceil(self.cycle_ms) as u64;
        cycles.saturating_sub(1).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PanicReason {
    InputDivergence,
    DataMismatch,
    ProgramMismatch,
    HandshakeTimeout,
    OutputFeedback,
    VitalCode,
    /// A corrupted instruction stream failed to decode (simulator-level
    /// trap; on silicon this class surfaces through the other checks).
    ExecFault,
}

impl PanicReason {
    pub fn as_str(self) -> &'static str {
        match self {
            PanicReason::InputDivergence => "INPUT_DIVERGENCE",
            PanicReason::DataMismatch => "DATA_MISMATCH",
            PanicReason::ProgramMismatch => "PROGRAM_MISMATCH",
            PanicReason::HandshakeTimeout => "HANDSHAKE_TIMEOUT",
            PanicReason::OutputFeedback => "OUTPUT_FEEDBACK",
            PanicReason::VitalCode => "VITAL_CODE",
            PanicReason::ExecFault => "EXEC_FAULT",
        }
    }
}

impl fmt::Display for PanicReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanicInfo {
    pub reasons: Vec<PanicReason>,
    pub cycle: u64,
    pub ms: u32,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BootError {
    #[error("E_UPLOAD_CRC checksum mismatch in {segment} segment")]
    UploadCrc { segment: &'static str },
    #[error("E_MEM_OVERLAP segments {a} and {b} overlap")]
    MemOverlap { a: &'static str, b: &'static str },
    #[error("image rejected: {0}")]
    BadImage(String),
}

/// RAM of one microcontroller: copies of all four image segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicroState {
    pub ram_code_a: Vec<u8>,
    pub ram_data_a: Vec<u8>,
    pub ram_code_b: Vec<u8>,
    pub ram_data_b: Vec<u8>,
    /// Input lines as sampled this cycle.
    sampled: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PhysicalIo {
    /// Input line states, indexed by pin-1.
    lines: Vec<bool>,
    /// Commanded output vectors awaiting the settle delay.
    cmd_queue: VecDeque<Vec<bool>>,
    /// The command vector the delay line most recently applied.
    expected: Vec<bool>,
    /// Actual physical output states.
    physical: Vec<bool>,
    stuck: Vec<Option<bool>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelPair {
    flash: ProgramImage,
    pub cfg: BoardConfig,
    pub mc: [MicroState; 2],
    pub cycle: u64,
    pub ms_clock: u32,
    sweep_cursor: usize,
    last_handshake_ms: u32,
    handshake_drop: bool,
    panic: Option<PanicInfo>,
    io: PhysicalIo,
    pending_faults: Vec<FaultSpec>,
}

/// Verify image integrity (all five CRCs, memory map, symbol sanity) and
/// copy flash into both microcontrollers' RAM.
pub fn bootload(image: &ProgramImage, cfg: BoardConfig) -> Result<ChannelPair, BootError> {
    if let Err(segment) = image.verify_crcs() {
        return Err(BootError::UploadCrc { segment });
    }
    check_disjoint(&image.code_a, &image.data_a, &image.code_b, &image.data_b).map_err(
        |e| match e {
            crate::codegen::LinkError::MemOverlap { a, b } => BootError::MemOverlap { a, b },
            other => BootError::BadImage(other.to_string()),
        },
    )?;
    for sym in &image.symbols {
        let w = sym.width.bytes() as u32;
        if sym.off_a + w > image.data_a.data.len() as u32
            || sym.off_b + w > image.data_b.data.len() as u32
        {
            return Err(BootError::BadImage(format!(
                "symbol '{}' outside data segments",
                sym.name
            )));
        }
        match (sym.kind, sym.pin) {
            (SymKind::Input, Some(p)) if p >= 1 && p <= image.io.inputs => {}
            (SymKind::Output, Some(p)) if p >= 1 && p <= image.io.outputs => {}
            (SymKind::State | SymKind::Const, None) => {}
            _ => {
                return Err(BootError::BadImage(format!(
                    "symbol '{}' has an invalid pin mapping",
                    sym.name
                )))
            }
        }
    }
    let micro = MicroState {
        ram_code_a: image.code_a.data.clone(),
        ram_data_a: image.data_a.data.clone(),
        ram_code_b: image.code_b.data.clone(),
        ram_data_b: image.data_b.data.clone(),
        sampled: vec![false; image.io.inputs as usize],
    };
    let outputs = image.io.outputs as usize;
    Ok(ChannelPair {
        flash: image.clone(),
        cfg,
        mc: [micro.clone(), micro],
        cycle: 0,
        ms_clock: 0,
        sweep_cursor: 0,
        last_handshake_ms: 0,
        handshake_drop: false,
        panic: None,
        io: PhysicalIo {
            lines: vec![false; image.io.inputs as usize],
            cmd_queue: VecDeque::new(),
            expected: vec![false; outputs],
            physical: vec![false; outputs],
            stuck: vec![None; outputs],
        },
        pending_faults: Vec::new(),
    })
}

impl ChannelPair {
    pub fn panicked(&self) -> Option<&PanicInfo> {
        self.panic.as_ref()
    }

    pub fn image(&self) -> &ProgramImage {
        &self.flash
    }

    /// Hard reset: equivalent to a fresh bootload of the same image.
    pub fn reset(&mut self) {
        *self = bootload(&self.flash, self.cfg).expect("flash image was bootable");
    }

    pub fn set_line(&mut self, pin: u8, on: bool) {
        let idx = pin as usize - 1;
        if idx < self.io.lines.len() {
            self.io.lines[idx] = on;
        }
    }

    pub fn schedule_fault(&mut self, fault: FaultSpec) {
        self.pending_faults.push(fault);
    }

    pub fn physical_outputs(&self) -> &[bool] {
        &self.io.physical
    }

    /// Logical variable values in symbol order from one store.
    pub fn logical_store(&self, mc: usize, bin: BinSel) -> Vec<u32> {
        let (data, path_a) = match bin {
            BinSel::A => (&self.mc[mc].ram_data_a, true),
            BinSel::B => (&self.mc[mc].ram_data_b, false),
        };
        self.flash
            .symbols
            .iter()
            .map(|sym| {
                let off = if path_a { sym.off_a } else { sym.off_b };
                read_at(data, off, sym.width)
            })
            .collect()
    }

    /// Canonical bytes of a logical store (symbol order, little-endian).
    fn logical_bytes(&self, mc: usize, bin: BinSel) -> Vec<u8> {
        let (data, path_a) = match bin {
            BinSel::A => (&self.mc[mc].ram_data_a, true),
            BinSel::B => (&self.mc[mc].ram_data_b, false),
        };
        let mut out = Vec::new();
        for sym in &self.flash.symbols {
            let off = if path_a { sym.off_a } else { sym.off_b };
            let v = read_at(data, off, sym.width);
            out.extend_from_slice(&v.to_le_bytes()[..sym.width.bytes()]);
        }
        out
    }

    fn output_bits(&self, mc: usize) -> Vec<bool> {
        let mut bits = vec![false; self.flash.io.outputs as usize];
        for sym in &self.flash.symbols {
            if sym.kind == SymKind::Output {
                let pin = sym.pin.expect("outputs carry pins") as usize;
                let v = read_at(&self.mc[mc].ram_data_a, sym.off_a, sym.width);
                bits[pin - 1] = v == IO_ON as u32;
            }
        }
        bits
    }

    fn enter_panic(&mut self, reasons: Vec<PanicReason>, events: &mut Vec<String>) {
        for r in &reasons {
            events.push(format!("panic:{}", r));
        }
        self.panic = Some(PanicInfo {
            reasons,
            cycle: self.cycle,
            ms: self.ms_clock,
        });
        // Outputs are deactivated at once: the energy side stops driving.
        for p in self.io.physical.iter_mut() {
            *p = false;
        }
    }

    fn apply_faults(&mut self, events: &mut Vec<String>) {
        let due: Vec<FaultSpec> = self
            .pending_faults
            .iter()
            .copied()
            .filter(|f| f.at_cycle == self.cycle)
            .collect();
        for fault in due {
            events.push(format!("fault:{}", fault.kind.name()));
            match fault.kind {
                FaultKind::RamDataFlip { mc, bin, byte, bit } => {
                    let m = &mut self.mc[mc as usize];
                    let ram = match bin {
                        BinSel::A => &mut m.ram_data_a,
                        BinSel::B => &mut m.ram_data_b,
                    };
                    if let Some(b) = ram.get_mut(byte as usize) {
                        *b ^= 1 << (bit & 7);
                    }
                }
                FaultKind::RamCodeFlip { mc, bin, byte, bit } => {
                    let m = &mut self.mc[mc as usize];
                    let ram = match bin {
                        BinSel::A => &mut m.ram_code_a,
                        BinSel::B => &mut m.ram_code_b,
                    };
                    if let Some(b) = ram.get_mut(byte as usize) {
                        *b ^= 1 << (bit & 7);
                    }
                }
                FaultKind::StuckOutput { pin, value } => {
                    let idx = pin as usize - 1;
                    if idx < self.io.stuck.len() {
                        self.io.stuck[idx] = Some(value);
                        self.io.physical[idx] = value;
                    }
                }
                FaultKind::HandshakeDrop => self.handshake_drop = true,
                FaultKind::InputDivergence { .. } => {
                    // Consumed during sampling.
                }
                FaultKind::UploadCorruption { .. } => {
                    // Pre-boot fault; nothing to do at runtime.
                }
            }
        }
    }

    fn sample_inputs(&mut self) {
        for m in 0..2 {
            let mut sampled = self.io.lines.clone();
            for f in &self.pending_faults {
                if f.at_cycle == self.cycle {
                    if let FaultKind::InputDivergence { mc, pin } = f.kind {
                        if mc as usize == m {
                            let idx = pin as usize - 1;
                            if idx < sampled.len() {
                                sampled[idx] = !sampled[idx];
                            }
                        }
                    }
                }
            }
            self.mc[m].sampled = sampled;
        }
        // Latch codes into all four data stores.
        for sym in &self.flash.symbols {
            if sym.kind != SymKind::Input {
                continue;
            }
            let pin = sym.pin.expect("inputs carry pins") as usize;
            for m in 0..2 {
                let code = if self.mc[m].sampled[pin - 1] {
                    IO_ON
                } else {
                    IO_OFF
                } as u32;
                write_at(&mut self.mc[m].ram_data_a, sym.off_a, sym.width, code);
                write_at(&mut self.mc[m].ram_data_b, sym.off_b, sym.width, code);
            }
        }
    }

    fn record(&self, events: Vec<String>, capture_stores: bool) -> CycleRecord {
        let inputs = self
            .io
            .lines
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &on)| acc | ((on as u32) << i));
        let out_mem = self
            .output_bits(0)
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &on)| acc | ((on as u32) << i));
        let out_phys = self
            .io
            .physical
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &on)| acc | ((on as u32) << i));
        CycleRecord {
            cycle: self.cycle,
            ms: self.ms_clock,
            inputs,
            out_mem,
            out_phys,
            events,
            stores: capture_stores.then(|| {
                [
                    self.logical_store(0, BinSel::A),
                    self.logical_store(0, BinSel::B),
                    self.logical_store(1, BinSel::A),
                    self.logical_store(1, BinSel::B),
                ]
            }),
        }
    }

    /// Advance one board cycle. After a panic this only advances the clock;
    /// RAM and outputs stay frozen (outputs off).
    pub fn step_cycle(&mut self) -> CycleRecord {
        self.step_cycle_opts(false)
    }

    pub fn step_cycle_opts(&mut self, capture_stores: bool) -> CycleRecord {
        let mut events = Vec::new();
        if self.panic.is_some() {
            let rec = self.record(events, capture_stores);
            self.cycle += 1;
            self.ms_clock = self.ms_clock.wrapping_add(self.cfg.cycle_ms);
            return rec;
        }

        self.sample_inputs();

        // Run all four binary instances; collect traps rather than aborting
        // so simultaneous faults on both channels are both recorded.
        let mut exec_faults = 0usize;
        for m in 0..2 {
            let clock = self.ms_clock;
            let mc = &mut self.mc[m];
            if run_cycle_stack(&mc.ram_code_a, &mut mc.ram_data_a, clock).is_err() {
                exec_faults += 1;
            }
            if run_cycle_reg(&mc.ram_code_b, &mut mc.ram_data_b, clock).is_err() {
                exec_faults += 1;
            }
        }

        self.apply_faults(&mut events);

        if exec_faults > 0 {
            let reasons = vec![PanicReason::ExecFault; exec_faults];
            self.enter_panic(reasons, &mut events);
        }

        if self.panic.is_none() {
            self.run_safety_checks(&mut events);
        }

        if self.panic.is_none() {
            self.drive_outputs();
        }

        let rec = self.record(events, capture_stores);
        self.cycle += 1;
        self.ms_clock = self.ms_clock.wrapping_add(self.cfg.cycle_ms);
        rec
    }

    fn run_safety_checks(&mut self, events: &mut Vec<String>) {
        // (1) Input agreement across channels.
        if self.mc[0].sampled != self.mc[1].sampled {
            self.enter_panic(vec![PanicReason::InputDivergence], events);
            return;
        }

        // (2) Intra-channel store compare, every cycle. The constant prefix
        // of each data segment (path B places its variables behind a guard
        // word) is checked against flash the same way.
        let pad_a = self
            .flash
            .symbols
            .iter()
            .map(|s| s.off_a)
            .min()
            .unwrap_or(0) as usize;
        let pad_b = self
            .flash
            .symbols
            .iter()
            .map(|s| s.off_b)
            .min()
            .unwrap_or(0) as usize;
        for m in 0..2 {
            let crc_a = crc32(&self.logical_bytes(m, BinSel::A));
            let crc_b = crc32(&self.logical_bytes(m, BinSel::B));
            if crc_a != crc_b
                || self.mc[m].ram_data_a[..pad_a] != self.flash.data_a.data[..pad_a]
                || self.mc[m].ram_data_b[..pad_b] != self.flash.data_b.data[..pad_b]
            {
                self.enter_panic(vec![PanicReason::DataMismatch], events);
                return;
            }
        }

        // (3) Background program sweep, one chunk per cycle.
        let flash_code: Vec<u8> = self
            .flash
            .code_a
            .data
            .iter()
            .chain(self.flash.code_b.data.iter())
            .copied()
            .collect();
        if !flash_code.is_empty() {
            let start = self.sweep_cursor.min(flash_code.len());
            let end = (start + self.cfg.sweep_chunk).min(flash_code.len());
            let split = self.flash.code_a.data.len();
            let slice_of = |m: &MicroState| -> Vec<u8> {
                let mut v = Vec::with_capacity(end - start);
                for i in start..end {
                    v.push(if i < split {
                        m.ram_code_a[i]
                    } else {
                        m.ram_code_b[i - split]
                    });
                }
                v
            };
            let chunk0 = slice_of(&self.mc[0]);
            let chunk1 = slice_of(&self.mc[1]);
            let flash_crc = crc32(&flash_code[start..end]);
            if chunk0 != chunk1 || crc32(&chunk0) != flash_crc || crc32(&chunk1) != flash_crc {
                self.enter_panic(vec![PanicReason::ProgramMismatch], events);
                return;
            }
            self.sweep_cursor = if end >= flash_code.len() { 0 } else { end };
        }

        // (4) Cross-channel handshake and staleness deadline.
        if self.cycle.is_multiple_of(self.cfg.handshake_interval()) && !self.handshake_drop {
            let crc0 = crc32(&self.logical_bytes(0, BinSel::A));
            let crc1 = crc32(&self.logical_bytes(1, BinSel::A));
            if crc0 != crc1 {
                self.enter_panic(vec![PanicReason::DataMismatch], events);
                return;
            }
            self.last_handshake_ms = self.ms_clock;
        }
        if self.ms_clock.wrapping_sub(self.last_handshake_ms) > self.cfg.handshake_deadline_ms {
            self.enter_panic(vec![PanicReason::HandshakeTimeout], events);
            return;
        }

        // (5) Output feedback: physical state must equal what was commanded
        // settle_delay cycles ago.
        if self.io.physical != self.io.expected {
            self.enter_panic(vec![PanicReason::OutputFeedback], events);
            return;
        }

        // (6) Vital code check on every output register, all four stores.
        for m in 0..2 {
            for sym in &self.flash.symbols {
                if sym.kind != SymKind::Output {
                    continue;
                }
                let va = read_at(&self.mc[m].ram_data_a, sym.off_a, sym.width);
                let vb = read_at(&self.mc[m].ram_data_b, sym.off_b, sym.width);
                if !io_code_valid(va) || !io_code_valid(vb) {
                    self.enter_panic(vec![PanicReason::VitalCode], events);
                    return;
                }
            }
        }
    }

    fn drive_outputs(&mut self) {
        // Command from channel 1, energy from channel 2: physically on only
        // when both agree on IO_ON.
        let cmd = self.output_bits(0);
        let energy = self.output_bits(1);
        let commanded: Vec<bool> = cmd
            .iter()
            .zip(energy.iter())
            .map(|(&c, &e)| c && e)
            .collect();
        self.io.cmd_queue.push_back(commanded);
        if self.io.cmd_queue.len() > self.cfg.settle_delay as usize {
            let applied = self.io.cmd_queue.pop_front().expect("queue non-empty");
            self.io.expected = applied.clone();
            for (i, &want) in applied.iter().enumerate() {
                self.io.physical[i] = match self.io.stuck[i] {
                    Some(v) => v,
                    None => want,
                };
            }
        }
    }
}
