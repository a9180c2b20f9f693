//! Code generation path B: a register-machine ISA produced in two stages —
//! the statement tree is first flattened to three-address code over
//! single-assignment temporaries, then mapped onto 8 virtual registers with
//! greedy furthest-next-use spilling. Data layout is alphabetical behind a
//! 4-byte guard word, so no variable shares an offset with path A.

use std::collections::HashMap;

use crate::kernel::{BitOp, CmpOp, ModOp, RExpr, RStmt, Resolved, Width};

use super::layout::{DataLayout, LayoutEntry};
use super::stack::cmp_code;
use super::{exec, CodegenError};

pub const OP_LDI: u8 = 0x20;
pub const OP_LDV: u8 = 0x21;
pub const OP_STV: u8 = 0x22;
pub const OP_MADD: u8 = 0x23;
pub const OP_MSUB: u8 = 0x24;
pub const OP_MMUL: u8 = 0x25;
pub const OP_AND: u8 = 0x26;
pub const OP_OR: u8 = 0x27;
pub const OP_XOR: u8 = 0x28;
pub const OP_TICK: u8 = 0x29;
pub const OP_SINCE: u8 = 0x2A;
pub const OP_BRF: u8 = 0x2B;
pub const OP_JMP: u8 = 0x2C;
pub const OP_HALT: u8 = 0x2D;

pub const NUM_REGS: usize = 8;

#[derive(Debug, Clone)]
pub struct BytecodeB {
    pub code: Vec<u8>,
    pub init_code: Vec<u8>,
    pub layout: DataLayout,
    pub spill_slots: u32,
}

impl BytecodeB {
    pub fn body_len(&self) -> usize {
        exec::count_instructions_reg(&self.code).saturating_sub(1)
    }

    pub fn listing(&self) -> String {
        exec::disasm_reg(&self.code)
    }

    pub fn initial_data(&self) -> Result<Vec<u8>, CodegenError> {
        let mut data = super::stack::seed_defaults(&self.layout);
        exec::run_cycle_reg(&self.init_code, &mut data, 0)
            .map_err(|e| CodegenError::InitExec(e.to_string()))?;
        Ok(data)
    }
}

// ---------------------------------------------------------------------------
// Stage 1: three-address lowering

pub(crate) type Temp = u32;
pub(crate) type LabelId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TacBin {
    ModAdd,
    ModSub,
    ModMul,
    And,
    Or,
    Xor,
}

#[derive(Debug, Clone)]
pub(crate) enum Tac {
    Imm {
        dst: Temp,
        value: u32,
    },
    ReadVar {
        dst: Temp,
        slot: usize,
    },
    WriteVar {
        slot: usize,
        src: Temp,
    },
    ReadLocal {
        dst: Temp,
        lslot: usize,
        width: Width,
    },
    WriteLocal {
        lslot: usize,
        width: Width,
        src: Temp,
    },
    Bin {
        dst: Temp,
        op: TacBin,
        width: Width,
        a: Temp,
        b: Temp,
    },
    Tick {
        dst: Temp,
    },
    Since {
        dst: Temp,
        a: Temp,
    },
    BranchIfNot {
        op: CmpOp,
        a: Temp,
        b: Temp,
        target: LabelId,
    },
    Jump {
        target: LabelId,
    },
    Label {
        id: LabelId,
    },
}

#[derive(Debug, Default)]
pub(crate) struct TacProgram {
    pub instrs: Vec<Tac>,
    pub temp_count: u32,
    pub label_count: u32,
}

pub(crate) fn lower(block: &[RStmt]) -> TacProgram {
    let mut p = TacProgram::default();
    lower_block(block, &mut p);
    p
}

fn fresh(p: &mut TacProgram) -> Temp {
    let t = p.temp_count;
    p.temp_count += 1;
    t
}

fn fresh_label(p: &mut TacProgram) -> LabelId {
    let l = p.label_count;
    p.label_count += 1;
    l
}

fn lower_block(block: &[RStmt], p: &mut TacProgram) {
    for stmt in block {
        match stmt {
            RStmt::SetSlot(slot, value) => {
                let src = lower_expr(value, p);
                p.instrs.push(Tac::WriteVar { slot: *slot, src });
            }
            RStmt::SetLocal(lslot, value) => {
                let width = value.width();
                let src = lower_expr(value, p);
                p.instrs.push(Tac::WriteLocal {
                    lslot: *lslot,
                    width,
                    src,
                });
            }
            RStmt::If {
                op,
                lhs,
                rhs,
                then_block,
                else_block,
            } => {
                let a = lower_expr(lhs, p);
                let b = lower_expr(rhs, p);
                let l_else = fresh_label(p);
                p.instrs.push(Tac::BranchIfNot {
                    op: *op,
                    a,
                    b,
                    target: l_else,
                });
                lower_block(then_block, p);
                if else_block.is_empty() {
                    p.instrs.push(Tac::Label { id: l_else });
                } else {
                    let l_end = fresh_label(p);
                    p.instrs.push(Tac::Jump { target: l_end });
                    p.instrs.push(Tac::Label { id: l_else });
                    lower_block(else_block, p);
                    p.instrs.push(Tac::Label { id: l_end });
                }
            }
        }
    }
}

fn lower_expr(expr: &RExpr, p: &mut TacProgram) -> Temp {
    match expr {
        RExpr::Slot(slot, _) | RExpr::Feedback(slot) => {
            let dst = fresh(p);
            p.instrs.push(Tac::ReadVar { dst, slot: *slot });
            dst
        }
        RExpr::Local(lslot, width) => {
            let dst = fresh(p);
            p.instrs.push(Tac::ReadLocal {
                dst,
                lslot: *lslot,
                width: *width,
            });
            dst
        }
        RExpr::Lit(value, _) => {
            let dst = fresh(p);
            p.instrs.push(Tac::Imm { dst, value: *value });
            dst
        }
        RExpr::ModArith(op, width, lhs, rhs) => {
            let a = lower_expr(lhs, p);
            let b = lower_expr(rhs, p);
            let dst = fresh(p);
            let op = match op {
                ModOp::Add => TacBin::ModAdd,
                ModOp::Sub => TacBin::ModSub,
                ModOp::Mul => TacBin::ModMul,
            };
            p.instrs.push(Tac::Bin {
                dst,
                op,
                width: *width,
                a,
                b,
            });
            dst
        }
        RExpr::Bit(op, width, lhs, rhs) => {
            let a = lower_expr(lhs, p);
            let b = lower_expr(rhs, p);
            let dst = fresh(p);
            let op = match op {
                BitOp::And => TacBin::And,
                BitOp::Or => TacBin::Or,
                BitOp::Xor => TacBin::Xor,
            };
            p.instrs.push(Tac::Bin {
                dst,
                op,
                width: *width,
                a,
                b,
            });
            dst
        }
        RExpr::GetMsTick => {
            let dst = fresh(p);
            p.instrs.push(Tac::Tick { dst });
            dst
        }
        RExpr::Since(inner) => {
            let a = lower_expr(inner, p);
            let dst = fresh(p);
            p.instrs.push(Tac::Since { dst, a });
            dst
        }
    }
}

// ---------------------------------------------------------------------------
// Stage 2: register allocation and emission

/// Alphabetical layout with a 4-byte guard word at offset 0; kernel locals
/// follow as 4-byte scratch cells, spill slots after them.
fn build_layout(resolved: &Resolved) -> (DataLayout, Vec<u32>) {
    let mut order: Vec<usize> = (0..resolved.vars.len()).collect();
    order.sort_by(|&x, &y| resolved.vars[x].name.cmp(&resolved.vars[y].name));
    let mut entries = Vec::with_capacity(resolved.vars.len());
    let mut offset = 4u32;
    let mut offsets_by_slot = vec![0u32; resolved.vars.len()];
    for slot in order {
        let var = &resolved.vars[slot];
        offsets_by_slot[slot] = offset;
        entries.push(LayoutEntry {
            name: var.name.clone(),
            width: var.width,
            kind: var.kind,
            offset,
        });
        offset += var.width.bytes() as u32;
    }
    let vars_size = offset;
    (
        DataLayout {
            entries,
            vars_size,
            total_size: offset,
        },
        offsets_by_slot,
    )
}

pub fn compile_b(resolved: &Resolved) -> Result<BytecodeB, CodegenError> {
    let (mut layout, var_offsets) = build_layout(resolved);
    let locals_base = layout.vars_size;
    let spill_base = locals_base + 4 * resolved.local_cells as u32;

    let logic_tac = lower(&resolved.logic);
    let init_tac = lower(&resolved.init);

    let mut spills = 0u32;
    let code = allocate(
        resolved,
        &logic_tac,
        &var_offsets,
        locals_base,
        spill_base,
        &mut spills,
    )?;
    let init_code = allocate(
        resolved,
        &init_tac,
        &var_offsets,
        locals_base,
        spill_base,
        &mut spills,
    )?;

    layout.total_size = spill_base + 4 * spills;
    if layout.total_size > u16::MAX as u32 {
        return Err(CodegenError::DataTooLarge {
            size: layout.total_size,
        });
    }
    Ok(BytecodeB {
        code,
        init_code,
        layout,
        spill_slots: spills,
    })
}

struct Alloc<'a> {
    resolved: &'a Resolved,
    var_offsets: &'a [u32],
    locals_base: u32,
    spill_base: u32,
    code: Vec<u8>,
    /// Temp currently held by each register.
    regs: [Option<Temp>; NUM_REGS],
    /// Spill slot assigned to a temp, if any. Temps are single-assignment,
    /// so a spill copy never goes stale.
    spill_slot: HashMap<Temp, u32>,
    in_reg: HashMap<Temp, u8>,
    next_spill: u32,
    /// Sorted use positions per temp.
    uses: Vec<Vec<u32>>,
    fixups: Vec<(usize, LabelId)>,
    label_pos: HashMap<LabelId, u32>,
}

fn allocate(
    resolved: &Resolved,
    tac: &TacProgram,
    var_offsets: &[u32],
    locals_base: u32,
    spill_base: u32,
    spills: &mut u32,
) -> Result<Vec<u8>, CodegenError> {
    let mut uses: Vec<Vec<u32>> = vec![Vec::new(); tac.temp_count as usize];
    for (i, instr) in tac.instrs.iter().enumerate() {
        for t in instr_uses(instr) {
            uses[t as usize].push(i as u32);
        }
    }
    let mut a = Alloc {
        resolved,
        var_offsets,
        locals_base,
        spill_base,
        code: Vec::new(),
        regs: [None; NUM_REGS],
        spill_slot: HashMap::new(),
        in_reg: HashMap::new(),
        next_spill: 0,
        uses,
        fixups: Vec::new(),
        label_pos: HashMap::new(),
    };
    for (i, instr) in tac.instrs.iter().enumerate() {
        a.instr(instr, i as u32)?;
    }
    a.code.push(OP_HALT);
    for (pos, label) in &a.fixups {
        let target = a.label_pos[label];
        a.code[*pos..*pos + 4].copy_from_slice(&target.to_le_bytes());
    }
    *spills = (*spills).max(a.next_spill);
    Ok(a.code)
}

fn instr_uses(instr: &Tac) -> Vec<Temp> {
    match instr {
        Tac::WriteVar { src, .. } | Tac::WriteLocal { src, .. } => vec![*src],
        Tac::Bin { a, b, .. } => vec![*a, *b],
        Tac::Since { a, .. } => vec![*a],
        Tac::BranchIfNot { a, b, .. } => vec![*a, *b],
        _ => Vec::new(),
    }
}

impl<'a> Alloc<'a> {
    fn next_use_after(&self, t: Temp, pos: u32) -> u32 {
        self.uses[t as usize]
            .iter()
            .copied()
            .find(|&u| u > pos)
            .unwrap_or(u32::MAX)
    }

    fn is_last_use(&self, t: Temp, pos: u32) -> bool {
        self.uses[t as usize].last() == Some(&pos)
    }

    fn spill_offset(&mut self, t: Temp) -> u32 {
        let next = &mut self.next_spill;
        let slot = *self.spill_slot.entry(t).or_insert_with(|| {
            let s = *next;
            *next += 1;
            s
        });
        self.spill_base + 4 * slot
    }

    /// Pick a register, evicting the held temp with the furthest next use.
    fn take_reg(&mut self, pos: u32, forbidden: &[u8]) -> u8 {
        for (r, held) in self.regs.iter().enumerate() {
            if held.is_none() && !forbidden.contains(&(r as u8)) {
                return r as u8;
            }
        }
        let mut victim = None;
        let mut victim_next = 0u32;
        for (r, held) in self.regs.iter().enumerate() {
            if forbidden.contains(&(r as u8)) {
                continue;
            }
            let t = held.expect("all registers full");
            let next = self.next_use_after(t, pos);
            if victim.is_none() || next > victim_next {
                victim = Some(r as u8);
                victim_next = next;
            }
        }
        let r = victim.expect("no evictable register");
        let t = self.regs[r as usize].unwrap();
        if !self.spill_slot.contains_key(&t) && victim_next != u32::MAX {
            let off = self.spill_offset(t);
            self.emit_stv(off, 4, r);
        }
        self.in_reg.remove(&t);
        self.regs[r as usize] = None;
        r
    }

    fn bind(&mut self, t: Temp, r: u8) {
        self.regs[r as usize] = Some(t);
        self.in_reg.insert(t, r);
    }

    /// Register holding `t`, reloading from its spill slot if evicted.
    fn reg_of(&mut self, t: Temp, pos: u32, forbidden: &[u8]) -> u8 {
        if let Some(&r) = self.in_reg.get(&t) {
            return r;
        }
        let slot = *self
            .spill_slot
            .get(&t)
            .expect("temp is neither in a register nor spilled");
        let off = self.spill_base + 4 * slot;
        let r = self.take_reg(pos, forbidden);
        self.emit_ldv(r, off, 4);
        self.bind(t, r);
        r
    }

    fn release_if_dead(&mut self, t: Temp, pos: u32) {
        if self.is_last_use(t, pos) {
            if let Some(r) = self.in_reg.remove(&t) {
                self.regs[r as usize] = None;
            }
        }
    }

    fn def_reg(&mut self, t: Temp, pos: u32) -> u8 {
        let r = self.take_reg(pos, &[]);
        self.bind(t, r);
        r
    }

    fn var_ref(&self, slot: usize) -> (u16, u8) {
        (
            self.var_offsets[slot] as u16,
            self.resolved.vars[slot].width.bytes() as u8,
        )
    }

    fn local_ref(&self, lslot: usize, width: Width) -> (u16, u8) {
        // 4-byte cells; each access carries its own width.
        (
            (self.locals_base + 4 * lslot as u32) as u16,
            width.bytes() as u8,
        )
    }

    fn emit_ldv(&mut self, r: u8, off: u32, wbytes: u8) {
        self.code.push(OP_LDV);
        self.code.push(r);
        self.code.extend_from_slice(&(off as u16).to_le_bytes());
        self.code.push(wbytes);
    }

    fn emit_stv(&mut self, off: u32, wbytes: u8, r: u8) {
        self.code.push(OP_STV);
        self.code.extend_from_slice(&(off as u16).to_le_bytes());
        self.code.push(wbytes);
        self.code.push(r);
    }

    fn instr(&mut self, instr: &Tac, pos: u32) -> Result<(), CodegenError> {
        match instr {
            Tac::Imm { dst, value } => {
                let r = self.def_reg(*dst, pos);
                self.code.push(OP_LDI);
                self.code.push(r);
                self.code.extend_from_slice(&value.to_le_bytes());
            }
            Tac::ReadVar { dst, slot } => {
                let (off, w) = self.var_ref(*slot);
                let r = self.def_reg(*dst, pos);
                self.emit_ldv(r, off as u32, w);
            }
            Tac::WriteVar { slot, src } => {
                let (off, w) = self.var_ref(*slot);
                let r = self.reg_of(*src, pos, &[]);
                self.emit_stv(off as u32, w, r);
                self.release_if_dead(*src, pos);
            }
            Tac::ReadLocal { dst, lslot, width } => {
                let (off, w) = self.local_ref(*lslot, *width);
                let r = self.def_reg(*dst, pos);
                self.emit_ldv(r, off as u32, w);
            }
            Tac::WriteLocal { lslot, width, src } => {
                let (off, w) = self.local_ref(*lslot, *width);
                let r = self.reg_of(*src, pos, &[]);
                self.emit_stv(off as u32, w, r);
                self.release_if_dead(*src, pos);
            }
            Tac::Bin {
                dst,
                op,
                width,
                a,
                b,
            } => {
                let ra = self.reg_of(*a, pos, &[]);
                let rb = self.reg_of(*b, pos, &[ra]);
                self.release_if_dead(*a, pos);
                self.release_if_dead(*b, pos);
                let rd = self.def_reg(*dst, pos);
                // Modular arithmetic carries a width byte; the bitwise forms
                // operate on already-masked values and do not.
                let (opcode, with_width) = match op {
                    TacBin::ModAdd => (OP_MADD, true),
                    TacBin::ModSub => (OP_MSUB, true),
                    TacBin::ModMul => (OP_MMUL, true),
                    TacBin::And => (OP_AND, false),
                    TacBin::Or => (OP_OR, false),
                    TacBin::Xor => (OP_XOR, false),
                };
                self.code.push(opcode);
                if with_width {
                    self.code.push(width.bytes() as u8);
                }
                self.code.push(rd);
                self.code.push(ra);
                self.code.push(rb);
            }
            Tac::Tick { dst } => {
                let r = self.def_reg(*dst, pos);
                self.code.push(OP_TICK);
                self.code.push(r);
            }
            Tac::Since { dst, a } => {
                let ra = self.reg_of(*a, pos, &[]);
                self.release_if_dead(*a, pos);
                let rd = self.def_reg(*dst, pos);
                self.code.push(OP_SINCE);
                self.code.push(rd);
                self.code.push(ra);
            }
            Tac::BranchIfNot { op, a, b, target } => {
                let ra = self.reg_of(*a, pos, &[]);
                let rb = self.reg_of(*b, pos, &[ra]);
                self.release_if_dead(*a, pos);
                self.release_if_dead(*b, pos);
                self.code.push(OP_BRF);
                self.code.push(cmp_code(*op));
                self.code.push(ra);
                self.code.push(rb);
                self.fixups.push((self.code.len(), *target));
                self.code.extend_from_slice(&0u32.to_le_bytes());
            }
            Tac::Jump { target } => {
                self.code.push(OP_JMP);
                self.fixups.push((self.code.len(), *target));
                self.code.extend_from_slice(&0u32.to_le_bytes());
            }
            Tac::Label { id } => {
                // No temp lives across a statement boundary, so the register
                // file is empty at every join point.
                debug_assert!(self.regs.iter().all(|r| r.is_none()));
                self.regs = [None; NUM_REGS];
                self.in_reg.clear();
                self.label_pos.insert(*id, self.code.len() as u32);
            }
        }
        Ok(())
    }
}
