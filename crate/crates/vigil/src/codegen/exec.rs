//! Cycle executors for both ISAs. They decode straight from the code byte
//! array on every step, so a bit flip in code RAM changes what actually
//! executes; any malformed decode is reported as a fault rather than
//! silently skipped.

use std::fmt::Write as _;

use thiserror::Error;

use crate::kernel::Width;

use super::layout::{read_at, write_at};
use super::reg::{self, NUM_REGS};
use super::stack::{self, cmp_from_code};

/// Runtime cap on the evaluation stack; emit-time verification keeps linked
/// programs below this.
const RUNTIME_STACK_CAP: usize = 256;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExecFault {
    #[error("bad opcode 0x{opcode:02X} at {pc}")]
    BadOpcode { opcode: u8, pc: usize },
    #[error("truncated instruction at {pc}")]
    Truncated { pc: usize },
    #[error("data access out of bounds at {pc} (offset {offset}, width {width})")]
    DataBounds { pc: usize, offset: u32, width: u8 },
    #[error("bad width code {width} at {pc}")]
    BadWidth { pc: usize, width: u8 },
    #[error("bad comparison code {code} at {pc}")]
    BadCmp { pc: usize, code: u8 },
    #[error("bad register r{reg} at {pc}")]
    BadReg { pc: usize, reg: u8 },
    #[error("jump target {target} out of code at {pc}")]
    BadJump { pc: usize, target: u32 },
    #[error("stack underflow at {pc}")]
    StackUnderflow { pc: usize },
    #[error("stack overflow at {pc}")]
    StackOverflow { pc: usize },
}

fn width_from_code(pc: usize, code: u8) -> Result<Width, ExecFault> {
    match code {
        1 => Ok(Width::W8),
        2 => Ok(Width::W16),
        4 => Ok(Width::W32),
        other => Err(ExecFault::BadWidth { pc, width: other }),
    }
}

struct Fetch<'a> {
    code: &'a [u8],
    pc: usize,
}

impl<'a> Fetch<'a> {
    fn u8(&mut self) -> Result<u8, ExecFault> {
        let b = *self
            .code
            .get(self.pc)
            .ok_or(ExecFault::Truncated { pc: self.pc })?;
        self.pc += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, ExecFault> {
        Ok(u16::from_le_bytes([self.u8()?, self.u8()?]))
    }

    fn u32(&mut self) -> Result<u32, ExecFault> {
        Ok(u32::from_le_bytes([
            self.u8()?,
            self.u8()?,
            self.u8()?,
            self.u8()?,
        ]))
    }
}

fn checked_access(pc: usize, data: &[u8], offset: u32, wbytes: u8) -> Result<Width, ExecFault> {
    let width = width_from_code(pc, wbytes)?;
    if offset as usize + width.bytes() > data.len() {
        return Err(ExecFault::DataBounds {
            pc,
            offset,
            width: wbytes,
        });
    }
    Ok(width)
}

/// Execute one cycle of path-A (stack) code over `data`.
pub fn run_cycle_stack(code: &[u8], data: &mut [u8], ms_clock: u32) -> Result<(), ExecFault> {
    let mut stack: Vec<u32> = Vec::with_capacity(16);
    let mut f = Fetch { code, pc: 0 };
    loop {
        let at = f.pc;
        let opcode = f.u8()?;
        macro_rules! pop {
            () => {
                stack.pop().ok_or(ExecFault::StackUnderflow { pc: at })?
            };
        }
        match opcode {
            stack::OP_PUSH => {
                let v = f.u32()?;
                if stack.len() >= RUNTIME_STACK_CAP {
                    return Err(ExecFault::StackOverflow { pc: at });
                }
                stack.push(v);
            }
            stack::OP_LOAD => {
                let off = f.u16()? as u32;
                let w = f.u8()?;
                let width = checked_access(at, data, off, w)?;
                if stack.len() >= RUNTIME_STACK_CAP {
                    return Err(ExecFault::StackOverflow { pc: at });
                }
                stack.push(read_at(data, off, width));
            }
            stack::OP_STORE => {
                let off = f.u16()? as u32;
                let w = f.u8()?;
                let width = checked_access(at, data, off, w)?;
                let v = pop!();
                write_at(data, off, width, v & width.mask());
            }
            stack::OP_MODADD | stack::OP_MODSUB | stack::OP_MODMUL => {
                let w = f.u8()?;
                let width = width_from_code(at, w)?;
                let rhs = pop!();
                let lhs = pop!();
                let v = match opcode {
                    stack::OP_MODADD => lhs.wrapping_add(rhs),
                    stack::OP_MODSUB => lhs.wrapping_sub(rhs),
                    _ => (lhs as u64).wrapping_mul(rhs as u64) as u32,
                } & width.mask();
                stack.push(v);
            }
            stack::OP_BAND | stack::OP_BOR | stack::OP_BXOR => {
                let rhs = pop!();
                let lhs = pop!();
                stack.push(match opcode {
                    stack::OP_BAND => lhs & rhs,
                    stack::OP_BOR => lhs | rhs,
                    _ => lhs ^ rhs,
                });
            }
            stack::OP_TICK => {
                if stack.len() >= RUNTIME_STACK_CAP {
                    return Err(ExecFault::StackOverflow { pc: at });
                }
                stack.push(ms_clock);
            }
            stack::OP_SINCE => {
                let t0 = pop!();
                stack.push(ms_clock.wrapping_sub(t0));
            }
            stack::OP_BRF => {
                let cmp = f.u8()?;
                let target = f.u32()?;
                let op = cmp_from_code(cmp).ok_or(ExecFault::BadCmp { pc: at, code: cmp })?;
                let rhs = pop!();
                let lhs = pop!();
                if !op.eval(lhs, rhs) {
                    if target as usize > code.len() {
                        return Err(ExecFault::BadJump { pc: at, target });
                    }
                    f.pc = target as usize;
                }
            }
            stack::OP_JMP => {
                let target = f.u32()?;
                if target as usize > code.len() {
                    return Err(ExecFault::BadJump { pc: at, target });
                }
                f.pc = target as usize;
            }
            stack::OP_HALT => return Ok(()),
            other => {
                return Err(ExecFault::BadOpcode {
                    opcode: other,
                    pc: at,
                })
            }
        }
    }
}

/// Execute one cycle of path-B (register) code over `data`.
pub fn run_cycle_reg(code: &[u8], data: &mut [u8], ms_clock: u32) -> Result<(), ExecFault> {
    let mut regs = [0u32; NUM_REGS];
    let mut f = Fetch { code, pc: 0 };
    macro_rules! reg_idx {
        ($at:expr, $r:expr) => {{
            let r = $r;
            if (r as usize) >= NUM_REGS {
                return Err(ExecFault::BadReg { pc: $at, reg: r });
            }
            r as usize
        }};
    }
    loop {
        let at = f.pc;
        let opcode = f.u8()?;
        match opcode {
            reg::OP_LDI => {
                let r = reg_idx!(at, f.u8()?);
                regs[r] = f.u32()?;
            }
            reg::OP_LDV => {
                let r = reg_idx!(at, f.u8()?);
                let off = f.u16()? as u32;
                let w = f.u8()?;
                let width = checked_access(at, data, off, w)?;
                regs[r] = read_at(data, off, width);
            }
            reg::OP_STV => {
                let off = f.u16()? as u32;
                let w = f.u8()?;
                let r = reg_idx!(at, f.u8()?);
                let width = checked_access(at, data, off, w)?;
                write_at(data, off, width, regs[r] & width.mask());
            }
            reg::OP_MADD | reg::OP_MSUB | reg::OP_MMUL => {
                let w = f.u8()?;
                let width = width_from_code(at, w)?;
                let rd = reg_idx!(at, f.u8()?);
                let ra = reg_idx!(at, f.u8()?);
                let rb = reg_idx!(at, f.u8()?);
                regs[rd] = match opcode {
                    reg::OP_MADD => regs[ra].wrapping_add(regs[rb]),
                    reg::OP_MSUB => regs[ra].wrapping_sub(regs[rb]),
                    _ => (regs[ra] as u64).wrapping_mul(regs[rb] as u64) as u32,
                } & width.mask();
            }
            reg::OP_AND | reg::OP_OR | reg::OP_XOR => {
                let rd = reg_idx!(at, f.u8()?);
                let ra = reg_idx!(at, f.u8()?);
                let rb = reg_idx!(at, f.u8()?);
                regs[rd] = match opcode {
                    reg::OP_AND => regs[ra] & regs[rb],
                    reg::OP_OR => regs[ra] | regs[rb],
                    _ => regs[ra] ^ regs[rb],
                };
            }
            reg::OP_TICK => {
                let rd = reg_idx!(at, f.u8()?);
                regs[rd] = ms_clock;
            }
            reg::OP_SINCE => {
                let rd = reg_idx!(at, f.u8()?);
                let ra = reg_idx!(at, f.u8()?);
                regs[rd] = ms_clock.wrapping_sub(regs[ra]);
            }
            reg::OP_BRF => {
                let cmp = f.u8()?;
                let ra = reg_idx!(at, f.u8()?);
                let rb = reg_idx!(at, f.u8()?);
                let target = f.u32()?;
                let op = cmp_from_code(cmp).ok_or(ExecFault::BadCmp { pc: at, code: cmp })?;
                if !op.eval(regs[ra], regs[rb]) {
                    if target as usize > code.len() {
                        return Err(ExecFault::BadJump { pc: at, target });
                    }
                    f.pc = target as usize;
                }
            }
            reg::OP_JMP => {
                let target = f.u32()?;
                if target as usize > code.len() {
                    return Err(ExecFault::BadJump { pc: at, target });
                }
                f.pc = target as usize;
            }
            reg::OP_HALT => return Ok(()),
            other => {
                return Err(ExecFault::BadOpcode {
                    opcode: other,
                    pc: at,
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Disassembly (for --emit-listing and inspection)

pub fn disasm_stack(code: &[u8]) -> String {
    let mut out = String::new();
    let mut f = Fetch { code, pc: 0 };
    while f.pc < code.len() {
        let at = f.pc;
        let line = (|| -> Result<String, ExecFault> {
            let opcode = f.u8()?;
            Ok(match opcode {
                stack::OP_PUSH => format!("PUSH    {}", f.u32()?),
                stack::OP_LOAD => {
                    let off = f.u16()?;
                    let w = f.u8()?;
                    format!("LOAD{}   [0x{:04X}]", w * 8, off)
                }
                stack::OP_STORE => {
                    let off = f.u16()?;
                    let w = f.u8()?;
                    format!("STORE{}  [0x{:04X}]", w * 8, off)
                }
                stack::OP_MODADD => format!("MODADD{}", f.u8()? * 8),
                stack::OP_MODSUB => format!("MODSUB{}", f.u8()? * 8),
                stack::OP_MODMUL => format!("MODMUL{}", f.u8()? * 8),
                stack::OP_BAND => "AND".to_string(),
                stack::OP_BOR => "OR".to_string(),
                stack::OP_BXOR => "XOR".to_string(),
                stack::OP_TICK => "TICK".to_string(),
                stack::OP_SINCE => "SINCE".to_string(),
                stack::OP_BRF => {
                    let cmp = f.u8()?;
                    let target = f.u32()?;
                    let sym = cmp_from_code(cmp).map(|c| c.symbol()).unwrap_or("?");
                    format!("BRF     {} -> {:04}", sym, target)
                }
                stack::OP_JMP => format!("JMP     {:04}", f.u32()?),
                stack::OP_HALT => "HALT".to_string(),
                other => format!(".byte 0x{:02X}", other),
            })
        })();
        match line {
            Ok(text) => {
                let _ = writeln!(out, "{:04}  {}", at, text);
            }
            Err(_) => {
                let _ = writeln!(out, "{:04}  <truncated>", at);
                break;
            }
        }
    }
    out
}

pub fn disasm_reg(code: &[u8]) -> String {
    let mut out = String::new();
    let mut f = Fetch { code, pc: 0 };
    while f.pc < code.len() {
        let at = f.pc;
        let line = (|| -> Result<String, ExecFault> {
            let opcode = f.u8()?;
            Ok(match opcode {
                reg::OP_LDI => {
                    let r = f.u8()?;
                    format!("LDI     r{}, {}", r, f.u32()?)
                }
                reg::OP_LDV => {
                    let r = f.u8()?;
                    let off = f.u16()?;
                    let w = f.u8()?;
                    format!("LDV{}   r{}, [0x{:04X}]", w * 8, r, off)
                }
                reg::OP_STV => {
                    let off = f.u16()?;
                    let w = f.u8()?;
                    let r = f.u8()?;
                    format!("STV{}   [0x{:04X}], r{}", w * 8, off, r)
                }
                reg::OP_MADD | reg::OP_MSUB | reg::OP_MMUL => {
                    let name = match opcode {
                        reg::OP_MADD => "MADD",
                        reg::OP_MSUB => "MSUB",
                        _ => "MMUL",
                    };
                    let w = f.u8()?;
                    let rd = f.u8()?;
                    let ra = f.u8()?;
                    let rb = f.u8()?;
                    format!("{}{}  r{}, r{}, r{}", name, w * 8, rd, ra, rb)
                }
                reg::OP_AND | reg::OP_OR | reg::OP_XOR => {
                    let name = match opcode {
                        reg::OP_AND => "AND ",
                        reg::OP_OR => "OR  ",
                        _ => "XOR ",
                    };
                    let rd = f.u8()?;
                    let ra = f.u8()?;
                    let rb = f.u8()?;
                    format!("{}    r{}, r{}, r{}", name, rd, ra, rb)
                }
                reg::OP_TICK => format!("TICK    r{}", f.u8()?),
                reg::OP_SINCE => {
                    let rd = f.u8()?;
                    let ra = f.u8()?;
                    format!("SINCE   r{}, r{}", rd, ra)
                }
                reg::OP_BRF => {
                    let cmp = f.u8()?;
                    let ra = f.u8()?;
                    let rb = f.u8()?;
                    let target = f.u32()?;
                    let sym = cmp_from_code(cmp).map(|c| c.symbol()).unwrap_or("?");
                    format!("BRF     r{} {} r{} -> {:04}", ra, sym, rb, target)
                }
                reg::OP_JMP => format!("JMP     {:04}", f.u32()?),
                reg::OP_HALT => "HALT".to_string(),
                other => format!(".byte 0x{:02X}", other),
            })
        })();
        match line {
            Ok(text) => {
                let _ = writeln!(out, "{:04}  {}", at, text);
            }
            Err(_) => {
                let _ = writeln!(out, "{:04}  <truncated>", at);
                break;
            }
        }
    }
    out
}

pub(crate) fn count_instructions_stack(code: &[u8]) -> usize {
    disasm_stack(code).lines().count()
}

pub(crate) fn count_instructions_reg(code: &[u8]) -> usize {
    disasm_reg(code).lines().count()
}
