//! Scenario files (`.scn`): input waveforms, a fault schedule and a run
//! duration, replayed deterministically against a bootloaded image.
//!
//! ```text
//! at 0 input 1 ON
//! at 10 fault ram_data_flip mc1 b 3 5
//! at 20 fault stuck_output 1 OFF
//! run 1000
//! ```

use thiserror::Error;

use crate::codegen::{ImageFormatError, ProgramImage};

use super::board::{bootload, BoardConfig, BootError};
use super::fault::{BinSel, FaultKind, FaultSpec, SegSel};
use super::trace::{RunStatus, Trace};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("E_SCENARIO_PARSE line {line}: {message}")]
pub struct ScenarioError {
    pub line: u32,
    pub message: String,
}

impl ScenarioError {
    fn new(line: u32, message: impl Into<String>) -> Self {
        ScenarioError {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    /// (cycle, pin, on) input line changes.
    pub inputs: Vec<(u64, u8, bool)>,
    pub faults: Vec<FaultSpec>,
    pub duration: u64,
}

impl Scenario {
    /// Render back to the `.scn` text form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut events: Vec<(u64, String)> = Vec::new();
        for (cycle, pin, on) in &self.inputs {
            events.push((
                *cycle,
                format!(
                    "at {} input {} {}",
                    cycle,
                    pin,
                    if *on { "ON" } else { "OFF" }
                ),
            ));
        }
        for fault in &self.faults {
            events.push((fault.at_cycle, render_fault(fault)));
        }
        events.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        for (_, line) in events {
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str(&format!("run {}\n", self.duration));
        out
    }
}

fn render_fault(fault: &FaultSpec) -> String {
    let at = fault.at_cycle;
    match fault.kind {
        FaultKind::RamDataFlip { mc, bin, byte, bit } => format!(
            "at {} fault ram_data_flip mc{} {} {} {}",
            at,
            mc + 1,
            bin_name(bin),
            byte,
            bit
        ),
        FaultKind::RamCodeFlip { mc, bin, byte, bit } => format!(
            "at {} fault ram_code_flip mc{} {} {} {}",
            at,
            mc + 1,
            bin_name(bin),
            byte,
            bit
        ),
        FaultKind::StuckOutput { pin, value } => format!(
            "at {} fault stuck_output {} {}",
            at,
            pin,
            if value { "ON" } else { "OFF" }
        ),
        FaultKind::HandshakeDrop => format!("at {} fault handshake_drop", at),
        FaultKind::InputDivergence { mc, pin } => {
            format!("at {} fault input_divergence mc{} {}", at, mc + 1, pin)
        }
        FaultKind::UploadCorruption { seg, byte, bit } => format!(
            "at {} fault upload_corruption {} {} {}",
            at,
            seg_name(seg),
            byte,
            bit
        ),
    }
}

fn bin_name(bin: BinSel) -> &'static str {
    match bin {
        BinSel::A => "a",
        BinSel::B => "b",
    }
}

fn seg_name(seg: SegSel) -> &'static str {
    match seg {
        SegSel::CodeA => "code_a",
        SegSel::DataA => "data_a",
        SegSel::CodeB => "code_b",
        SegSel::DataB => "data_b",
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut scenario = Scenario::default();
    let mut saw_run = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u32 + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words[0] {
            "run" => {
                if words.len() != 2 {
                    return Err(ScenarioError::new(line_no, "expected: run <cycles>"));
                }
                scenario.duration = parse_num(words[1], line_no)?;
                saw_run = true;
            }
            "at" => {
                if words.len() < 3 {
                    return Err(ScenarioError::new(
                        line_no,
                        "expected: at <cycle> input|fault ...",
                    ));
                }
                let cycle: u64 = parse_num(words[1], line_no)?;
                match words[2] {
                    "input" => {
                        if words.len() != 5 {
                            return Err(ScenarioError::new(
                                line_no,
                                "expected: at <cycle> input <pin> <ON|OFF>",
                            ));
                        }
                        let pin: u8 = parse_num(words[3], line_no)?;
                        let on = parse_on_off(words[4], line_no)?;
                        scenario.inputs.push((cycle, pin, on));
                    }
                    "fault" => {
                        let kind = parse_fault(&words[3..], line_no)?;
                        scenario.faults.push(FaultSpec {
                            at_cycle: cycle,
                            kind,
                        });
                    }
                    other => {
                        return Err(ScenarioError::new(
                            line_no,
                            format!("unknown event '{}'", other),
                        ))
                    }
                }
            }
            other => {
                return Err(ScenarioError::new(
                    line_no,
                    format!("unknown directive '{}'", other),
                ))
            }
        }
    }
    if !saw_run {
        return Err(ScenarioError::new(0, "missing 'run <cycles>' directive"));
    }
    Ok(scenario)
}

fn parse_num<T: std::str::FromStr>(s: &str, line: u32) -> Result<T, ScenarioError> {
    s.parse()
        .map_err(|_| ScenarioError::new(line, format!("bad number '{}'", s)))
}

fn parse_on_off(s: &str, line: u32) -> Result<bool, ScenarioError> {
    match s {
        "ON" => Ok(true),
        "OFF" => Ok(false),
        other => Err(ScenarioError::new(
            line,
            format!("expected ON or OFF, found '{}'", other),
        )),
    }
}

fn parse_mc(s: &str, line: u32) -> Result<u8, ScenarioError> {
    match s {
        "mc1" => Ok(0),
        "mc2" => Ok(1),
        other => Err(ScenarioError::new(
            line,
            format!("expected mc1 or mc2, found '{}'", other),
        )),
    }
}

fn parse_bin(s: &str, line: u32) -> Result<BinSel, ScenarioError> {
    match s {
        "a" => Ok(BinSel::A),
        "b" => Ok(BinSel::B),
        other => Err(ScenarioError::new(
            line,
            format!("expected binary a or b, found '{}'", other),
        )),
    }
}

fn parse_fault(words: &[&str], line: u32) -> Result<FaultKind, ScenarioError> {
    if words.is_empty() {
        return Err(ScenarioError::new(line, "missing fault kind"));
    }
    match words[0] {
        "ram_data_flip" | "ram_code_flip" => {
            if words.len() != 5 {
                return Err(ScenarioError::new(
                    line,
                    format!("expected: {} <mc1|mc2> <a|b> <byte> <bit>", words[0]),
                ));
            }
            let mc = parse_mc(words[1], line)?;
            let bin = parse_bin(words[2], line)?;
            let byte = parse_num(words[3], line)?;
            let bit: u8 = parse_num(words[4], line)?;
            Ok(if words[0] == "ram_data_flip" {
                FaultKind::RamDataFlip { mc, bin, byte, bit }
            } else {
                FaultKind::RamCodeFlip { mc, bin, byte, bit }
            })
        }
        "stuck_output" => {
            if words.len() != 3 {
                return Err(ScenarioError::new(
                    line,
                    "expected: stuck_output <pin> <ON|OFF>",
                ));
            }
            Ok(FaultKind::StuckOutput {
                pin: parse_num(words[1], line)?,
                value: parse_on_off(words[2], line)?,
            })
        }
        "handshake_drop" => Ok(FaultKind::HandshakeDrop),
        "input_divergence" => {
            if words.len() != 3 {
                return Err(ScenarioError::new(
                    line,
                    "expected: input_divergence <mc1|mc2> <pin>",
                ));
            }
            Ok(FaultKind::InputDivergence {
                mc: parse_mc(words[1], line)?,
                pin: parse_num(words[2], line)?,
            })
        }
        "upload_corruption" => {
            if words.len() != 4 {
                return Err(ScenarioError::new(
                    line,
                    "expected: upload_corruption <code_a|data_a|code_b|data_b> <byte> <bit>",
                ));
            }
            let seg = match words[1] {
                "code_a" => SegSel::CodeA,
                "data_a" => SegSel::DataA,
                "code_b" => SegSel::CodeB,
                "data_b" => SegSel::DataB,
                other => {
                    return Err(ScenarioError::new(
                        line,
                        format!("unknown segment '{}'", other),
                    ))
                }
            };
            Ok(FaultKind::UploadCorruption {
                seg,
                byte: parse_num(words[2], line)?,
                bit: parse_num(words[3], line)?,
            })
        }
        other => Err(ScenarioError::new(
            line,
            format!("unknown fault kind '{}'", other),
        )),
    }
}

#[derive(Debug, Error)]
pub enum VmError {
    #[error(transparent)]
    Format(#[from] ImageFormatError),
    #[error(transparent)]
    Boot(#[from] BootError),
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub capture_stores: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            capture_stores: true,
        }
    }
}

/// Bootload `image` and replay `scenario` against it. Upload corruptions are
/// applied to the image before boot. The resulting trace is bit-stable for
/// identical inputs.
pub fn run_scenario(
    image: &ProgramImage,
    scenario: &Scenario,
    cfg: BoardConfig,
    opts: RunOptions,
) -> Result<Trace, VmError> {
    let mut image = image.clone();
    for fault in &scenario.faults {
        if let FaultKind::UploadCorruption { seg, byte, bit } = fault.kind {
            let seg = match seg {
                SegSel::CodeA => &mut image.code_a,
                SegSel::DataA => &mut image.data_a,
                SegSel::CodeB => &mut image.code_b,
                SegSel::DataB => &mut image.data_b,
            };
            if let Some(b) = seg.data.get_mut(byte as usize) {
                *b ^= 1 << (bit & 7);
            }
        }
    }
    let mut pair = bootload(&image, cfg)?;
    for fault in &scenario.faults {
        if !matches!(fault.kind, FaultKind::UploadCorruption { .. }) {
            pair.schedule_fault(*fault);
        }
    }
    let mut records = Vec::with_capacity(scenario.duration as usize);
    for cycle in 0..scenario.duration {
        for (at, pin, on) in &scenario.inputs {
            if *at == cycle {
                pair.set_line(*pin, *on);
            }
        }
        records.push(pair.step_cycle_opts(opts.capture_stores));
    }
    let status = match pair.panicked() {
        Some(info) => RunStatus::Panic {
            reasons: info.reasons.iter().map(|r| r.to_string()).collect(),
            cycle: info.cycle,
            ms: info.ms,
        },
        None => RunStatus::Running,
    };
    Ok(Trace {
        io: image.io,
        records,
        status,
    })
}
