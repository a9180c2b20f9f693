//! Pin maps: which board pin carries each input event, each operation's
//! invocation flag, and each operation argument's bits (least significant
//! bit on the first pin of its range).
//!
//! ```text
//! in obstacle pin 1
//! out move invoke pin 1 args lv_a:2-4 av_a:5-7
//! out stop invoke pin 8
//! ```

use std::collections::BTreeMap;

use crate::kernel::IoConfig;

use super::model::StateMachine;
use super::SmError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgPins {
    pub name: String,
    /// Pins carrying the argument bits, least significant first.
    pub pins: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpPins {
    pub invoke: u8,
    pub args: Vec<ArgPins>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PinMap {
    pub inputs: BTreeMap<String, u8>,
    pub ops: BTreeMap<String, OpPins>,
}

fn parse_err(line: u32, message: impl Into<String>) -> SmError {
    SmError::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_pinmap(text: &str) -> Result<PinMap, SmError> {
    let mut map = PinMap::default();
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
        match words.first() {
            Some(&"in") => {
                if words.len() != 4 || words[2] != "pin" {
                    return Err(parse_err(line_no, "expected: in <name> pin <n>"));
                }
                let pin = words[3]
                    .parse()
                    .map_err(|_| parse_err(line_no, "bad pin number"))?;
                map.inputs.insert(words[1].to_string(), pin);
            }
            Some(&"out") => {
                if words.len() < 5 || words[2] != "invoke" || words[3] != "pin" {
                    return Err(parse_err(
                        line_no,
                        "expected: out <op> invoke pin <n> [args <arg>:<lo>-<hi> ...]",
                    ));
                }
                let invoke = words[4]
                    .parse()
                    .map_err(|_| parse_err(line_no, "bad pin number"))?;
                let mut args = Vec::new();
                if words.len() > 5 {
                    if words[5] != "args" {
                        return Err(parse_err(line_no, "expected 'args' after the invoke pin"));
                    }
                    for spec in &words[6..] {
                        let (name, range) = spec
                            .split_once(':')
                            .ok_or_else(|| parse_err(line_no, "expected <arg>:<lo>-<hi>"))?;
                        let (lo, hi) = range
                            .split_once('-')
                            .ok_or_else(|| parse_err(line_no, "expected <lo>-<hi> pin range"))?;
                        let lo: u8 = lo
                            .parse()
                            .map_err(|_| parse_err(line_no, "bad pin number"))?;
                        let hi: u8 = hi
                            .parse()
                            .map_err(|_| parse_err(line_no, "bad pin number"))?;
                        if lo > hi {
                            return Err(parse_err(line_no, "empty pin range"));
                        }
                        args.push(ArgPins {
                            name: name.to_string(),
                            pins: (lo..=hi).collect(),
                        });
                    }
                }
                map.ops
                    .insert(words[1].to_string(), OpPins { invoke, args });
            }
            _ => {
                return Err(parse_err(
                    line_no,
                    format!("unknown pin map directive '{}'", line),
                ))
            }
        }
    }
    Ok(map)
}

/// Bits needed to carry values up to `hi`.
pub fn bits_for(hi: i64) -> usize {
    let mut bits = 0;
    let mut v = hi.max(0) as u64;
    while v > 0 {
        bits += 1;
        v >>= 1;
    }
    bits.max(1)
}

/// Sequential assignment: inputs in declaration order from pin 1; each
/// operation an invocation pin then its argument bits.
pub fn default_pinmap(machines: &[StateMachine], io: IoConfig) -> Result<PinMap, SmError> {
    let mut map = PinMap::default();
    let mut next_in = 1u16;
    let mut next_out = 1u16;
    for m in machines {
        for input in &m.inputs {
            map.inputs.insert(input.clone(), next_in as u8);
            next_in += 1;
        }
        for op in &m.operations {
            let invoke = next_out as u8;
            next_out += 1;
            let mut args = Vec::new();
            for arg in &op.args {
                let n = bits_for(arg.hi);
                let pins: Vec<u8> = (next_out..next_out + n as u16).map(|p| p as u8).collect();
                next_out += n as u16;
                args.push(ArgPins {
                    name: arg.name.clone(),
                    pins,
                });
            }
            map.ops.insert(op.name.clone(), OpPins { invoke, args });
        }
    }
    if next_in - 1 > io.inputs as u16 || next_out - 1 > io.outputs as u16 {
        return Err(SmError::PinOverflow {
            message: format!(
                "{} input and {} output pins needed, board has {}/{}",
                next_in - 1,
                next_out - 1,
                io.inputs,
                io.outputs
            ),
        });
    }
    Ok(map)
}

/// Check a pin map against the machine declarations and board capacity.
pub fn check_pinmap(machines: &[StateMachine], map: &PinMap, io: IoConfig) -> Result<(), SmError> {
    let mut used_in = BTreeMap::new();
    let mut used_out = BTreeMap::new();
    let mut claim_in = |pin: u8, what: String| -> Result<(), SmError> {
        if pin == 0 || pin > io.inputs {
            return Err(SmError::PinOverflow {
                message: format!("{} uses input pin {} outside 1..={}", what, pin, io.inputs),
            });
        }
        if let Some(prev) = used_in.insert(pin, what.clone()) {
            return Err(SmError::PinOverflow {
                message: format!("input pin {} claimed by both {} and {}", pin, prev, what),
            });
        }
        Ok(())
    };
    let mut claim_out = |pin: u8, what: String| -> Result<(), SmError> {
        if pin == 0 || pin > io.outputs {
            return Err(SmError::PinOverflow {
                message: format!(
                    "{} uses output pin {} outside 1..={}",
                    what, pin, io.outputs
                ),
            });
        }
        if let Some(prev) = used_out.insert(pin, what.clone()) {
            return Err(SmError::PinOverflow {
                message: format!("output pin {} claimed by both {} and {}", pin, prev, what),
            });
        }
        Ok(())
    };
    for m in machines {
        for input in &m.inputs {
            let pin = map
                .inputs
                .get(input)
                .copied()
                .ok_or_else(|| SmError::PinOverflow {
                    message: format!("input '{}' has no pin", input),
                })?;
            claim_in(pin, format!("input '{}'", input))?;
        }
        for op in &m.operations {
            let pins = map.ops.get(&op.name).ok_or_else(|| SmError::PinOverflow {
                message: format!("operation '{}' has no pins", op.name),
            })?;
            claim_out(pins.invoke, format!("op '{}' invoke", op.name))?;
            if pins.args.len() != op.args.len() {
                return Err(SmError::PinOverflow {
                    message: format!(
                        "operation '{}' declares {} arguments, pin map has {}",
                        op.name,
                        op.args.len(),
                        pins.args.len()
                    ),
                });
            }
            for (decl, arg_pins) in op.args.iter().zip(pins.args.iter()) {
                if decl.name != arg_pins.name {
                    return Err(SmError::PinOverflow {
                        message: format!(
                            "operation '{}': argument '{}' mapped as '{}'",
                            op.name, decl.name, arg_pins.name
                        ),
                    });
                }
                if bits_for(decl.hi) > arg_pins.pins.len() {
                    return Err(SmError::PinOverflow {
                        message: format!(
                            "argument '{}' of '{}' needs {} bits, has {} pins",
                            decl.name,
                            op.name,
                            bits_for(decl.hi),
                            arg_pins.pins.len()
                        ),
                    });
                }
                for &pin in &arg_pins.pins {
                    claim_out(pin, format!("op '{}' arg '{}'", op.name, decl.name))?;
                }
            }
        }
    }
    Ok(())
}
