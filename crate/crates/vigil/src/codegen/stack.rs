//! Code generation path A: a stack-machine ISA, compiled directly from the
//! resolved statement tree in a single pass. Data layout is declaration
//! order. The evaluation stack depth is bounded statically at emit time.

use crate::kernel::{BitOp, CmpOp, ModOp, RExpr, RStmt, Resolved, VarKind, IO_OFF};

use super::layout::{DataLayout, LayoutEntry};
use super::{exec, CodegenError, STACK_LIMIT};

pub const OP_PUSH: u8 = 0x01;
pub const OP_LOAD: u8 = 0x02;
pub const OP_STORE: u8 = 0x03;
pub const OP_MODADD: u8 = 0x04;
pub const OP_MODSUB: u8 = 0x05;
pub const OP_MODMUL: u8 = 0x06;
pub const OP_BAND: u8 = 0x07;
pub const OP_BOR: u8 = 0x08;
pub const OP_BXOR: u8 = 0x09;
pub const OP_TICK: u8 = 0x0A;
pub const OP_SINCE: u8 = 0x0B;
pub const OP_BRF: u8 = 0x0C;
pub const OP_JMP: u8 = 0x0D;
pub const OP_HALT: u8 = 0x0E;

#[derive(Debug, Clone)]
pub struct BytecodeA {
    pub code: Vec<u8>,
    pub init_code: Vec<u8>,
    pub layout: DataLayout,
    pub max_stack: u32,
}

impl BytecodeA {
    /// Number of instructions in the cycle body, not counting the trailing
    /// HALT.
    pub fn body_len(&self) -> usize {
        exec::count_instructions_stack(&self.code).saturating_sub(1)
    }

    pub fn listing(&self) -> String {
        exec::disasm_stack(&self.code)
    }

    /// Segment contents at reset: defaults (constants, outputs at IO_OFF)
    /// with the compiled INIT block applied.
    pub fn initial_data(&self) -> Result<Vec<u8>, CodegenError> {
        let mut data = seed_defaults(&self.layout);
        exec::run_cycle_stack(&self.init_code, &mut data, 0)
            .map_err(|e| CodegenError::InitExec(e.to_string()))?;
        Ok(data)
    }
}

pub(crate) fn seed_defaults(layout: &DataLayout) -> Vec<u8> {
    let mut data = vec![0u8; layout.total_size as usize];
    for entry in &layout.entries {
        match entry.kind {
            VarKind::Const { value } => {
                super::layout::write_at(&mut data, entry.offset, entry.width, value)
            }
            VarKind::Output { .. } | VarKind::Input { .. } => {
                super::layout::write_at(&mut data, entry.offset, entry.width, IO_OFF as u32)
            }
            VarKind::State => {}
        }
    }
    data
}

/// Declaration-order packed layout, kernel locals in scratch after the
/// variables.
fn build_layout(resolved: &Resolved) -> (DataLayout, u32) {
    let mut entries = Vec::with_capacity(resolved.vars.len());
    let mut offset = 0u32;
    for var in &resolved.vars {
        entries.push(LayoutEntry {
            name: var.name.clone(),
            width: var.width,
            kind: var.kind,
            offset,
        });
        offset += var.width.bytes() as u32;
    }
    let vars_size = offset;
    // One 4-byte scratch cell per live local slot; each access carries its
    // own width.
    let locals_base = offset;
    let total_size = offset + 4 * resolved.local_cells as u32;
    (
        DataLayout {
            entries,
            vars_size,
            total_size,
        },
        locals_base,
    )
}

pub fn compile_a(resolved: &Resolved) -> Result<BytecodeA, CodegenError> {
    let (layout, locals_base) = build_layout(resolved);
    if layout.total_size > u16::MAX as u32 {
        return Err(CodegenError::DataTooLarge {
            size: layout.total_size,
        });
    }
    let var_offsets: Vec<u32> = layout.entries.iter().map(|e| e.offset).collect();
    let mut max_stack = 0;
    let code = emit_block(
        resolved,
        &resolved.logic,
        &var_offsets,
        locals_base,
        &mut max_stack,
    )?;
    let init_code = emit_block(
        resolved,
        &resolved.init,
        &var_offsets,
        locals_base,
        &mut max_stack,
    )?;
    Ok(BytecodeA {
        code,
        init_code,
        layout,
        max_stack,
    })
}

fn emit_block(
    resolved: &Resolved,
    block: &[RStmt],
    var_offsets: &[u32],
    locals_base: u32,
    max_stack: &mut u32,
) -> Result<Vec<u8>, CodegenError> {
    let mut e = Emitter {
        resolved,
        var_offsets,
        locals_base,
        code: Vec::new(),
        depth: 0,
        max_depth: 0,
    };
    e.block(block)?;
    e.code.push(OP_HALT);
    *max_stack = (*max_stack).max(e.max_depth);
    Ok(e.code)
}

struct Emitter<'a> {
    resolved: &'a Resolved,
    var_offsets: &'a [u32],
    locals_base: u32,
    code: Vec<u8>,
    depth: u32,
    max_depth: u32,
}

impl<'a> Emitter<'a> {
    fn push_depth(&mut self, delta: i32) -> Result<(), CodegenError> {
        if delta >= 0 {
            self.depth += delta as u32;
            if self.depth > STACK_LIMIT {
                return Err(CodegenError::StackBound {
                    depth: self.depth,
                    limit: STACK_LIMIT,
                });
            }
            self.max_depth = self.max_depth.max(self.depth);
        } else {
            self.depth -= (-delta) as u32;
        }
        Ok(())
    }

    fn var_off(&self, slot: usize) -> (u16, u8) {
        (
            self.var_offsets[slot] as u16,
            self.resolved.vars[slot].width.bytes() as u8,
        )
    }

    fn local_off(&self, slot: usize, width: crate::kernel::Width) -> (u16, u8) {
        (
            (self.locals_base + 4 * slot as u32) as u16,
            width.bytes() as u8,
        )
    }

    fn block(&mut self, stmts: &[RStmt]) -> Result<(), CodegenError> {
        for stmt in stmts {
            self.stmt(stmt)?;
        }
        Ok(())
    }

    fn stmt(&mut self, stmt: &RStmt) -> Result<(), CodegenError> {
        match stmt {
            RStmt::SetSlot(slot, value) => {
                self.expr(value)?;
                let (off, w) = self.var_off(*slot);
                self.emit_store(off, w)?;
            }
            RStmt::SetLocal(slot, value) => {
                let width = value.width();
                self.expr(value)?;
                let (off, w) = self.local_off(*slot, width);
                self.emit_store(off, w)?;
            }
            RStmt::If {
                op,
                lhs,
                rhs,
                then_block,
                else_block,
            } => {
                self.expr(lhs)?;
                self.expr(rhs)?;
                self.code.push(OP_BRF);
                self.code.push(cmp_code(*op));
                let else_fix = self.code.len();
                self.code.extend_from_slice(&0u32.to_le_bytes());
                self.push_depth(-2)?;
                self.block(then_block)?;
                if else_block.is_empty() {
                    let end = self.code.len() as u32;
                    self.code[else_fix..else_fix + 4].copy_from_slice(&end.to_le_bytes());
                } else {
                    self.code.push(OP_JMP);
                    let end_fix = self.code.len();
                    self.code.extend_from_slice(&0u32.to_le_bytes());
                    let else_pos = self.code.len() as u32;
                    self.code[else_fix..else_fix + 4].copy_from_slice(&else_pos.to_le_bytes());
                    self.block(else_block)?;
                    let end = self.code.len() as u32;
                    self.code[end_fix..end_fix + 4].copy_from_slice(&end.to_le_bytes());
                }
            }
        }
        Ok(())
    }

    fn emit_store(&mut self, off: u16, wbytes: u8) -> Result<(), CodegenError> {
        self.code.push(OP_STORE);
        self.code.extend_from_slice(&off.to_le_bytes());
        self.code.push(wbytes);
        self.push_depth(-1)
    }

    fn expr(&mut self, expr: &RExpr) -> Result<(), CodegenError> {
        match expr {
            RExpr::Slot(slot, _) | RExpr::Feedback(slot) => {
                let (off, w) = self.var_off(*slot);
                self.code.push(OP_LOAD);
                self.code.extend_from_slice(&off.to_le_bytes());
                self.code.push(w);
                self.push_depth(1)?;
            }
            RExpr::Local(slot, width) => {
                let (off, w) = self.local_off(*slot, *width);
                self.code.push(OP_LOAD);
                self.code.extend_from_slice(&off.to_le_bytes());
                self.code.push(w);
                self.push_depth(1)?;
            }
            RExpr::Lit(value, _) => {
                self.code.push(OP_PUSH);
                self.code.extend_from_slice(&value.to_le_bytes());
                self.push_depth(1)?;
            }
            RExpr::ModArith(op, w, lhs, rhs) => {
                self.expr(lhs)?;
                self.expr(rhs)?;
                self.code.push(match op {
                    ModOp::Add => OP_MODADD,
                    ModOp::Sub => OP_MODSUB,
                    ModOp::Mul => OP_MODMUL,
                });
                self.code.push(w.bytes() as u8);
                self.push_depth(-1)?;
            }
            RExpr::Bit(op, _, lhs, rhs) => {
                self.expr(lhs)?;
                self.expr(rhs)?;
                self.code.push(match op {
                    BitOp::And => OP_BAND,
                    BitOp::Or => OP_BOR,
                    BitOp::Xor => OP_BXOR,
                });
                self.push_depth(-1)?;
            }
            RExpr::GetMsTick => {
                self.code.push(OP_TICK);
                self.push_depth(1)?;
            }
            RExpr::Since(inner) => {
                self.expr(inner)?;
                self.code.push(OP_SINCE);
                // pops one, pushes one
            }
        }
        Ok(())
    }
}

pub(crate) fn cmp_code(op: CmpOp) -> u8 {
    match op {
        CmpOp::Eq => 0,
        CmpOp::Ne => 1,
        CmpOp::Lt => 2,
        CmpOp::Le => 3,
        CmpOp::Gt => 4,
        CmpOp::Ge => 5,
    }
}

pub(crate) fn cmp_from_code(code: u8) -> Option<CmpOp> {
    Some(match code {
        0 => CmpOp::Eq,
        1 => CmpOp::Ne,
        2 => CmpOp::Lt,
        3 => CmpOp::Le,
        4 => CmpOp::Gt,
        5 => CmpOp::Ge,
        _ => return None,
    })
}
