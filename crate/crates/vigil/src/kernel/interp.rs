//! Reference interpreter for resolved kernel programs.
//!
//! This is the golden oracle both code-generation paths are checked against:
//! a plain tree walk over [`RStmt`], deterministic by construction.

use thiserror::Error;

use super::ast::{io_code_valid, ModOp, VarKind, Width, IO_OFF};
use super::validate::{RExpr, RStmt, Resolved};

/// Modular arithmetic on unsigned operands: `(lhs op rhs) mod 2^width`.
/// Total; the result always fits the width.
pub fn eval_mod(op: ModOp, width: Width, lhs: u32, rhs: u32) -> u32 {
    let m = width.mask();
    match op {
        ModOp::Add => (lhs.wrapping_add(rhs)) & m,
        ModOp::Sub => (lhs.wrapping_sub(rhs)) & m,
        ModOp::Mul => ((lhs as u64).wrapping_mul(rhs as u64) as u32) & m,
    }
}

/// Values of all declared variables, indexed by slot in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarStore {
    pub values: Vec<u32>,
}

impl VarStore {
    /// Canonical byte serialization: declaration order, little-endian, each
    /// variable as many bytes as its width.
    pub fn canonical_bytes(&self, resolved: &Resolved) -> Vec<u8> {
        let mut out = Vec::new();
        for var in &resolved.vars {
            let v = self.values[var.slot];
            out.extend_from_slice(&v.to_le_bytes()[..var.width.bytes()]);
        }
        out
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CycleError {
    #[error("E_VITAL_IO_CODE output '{name}' holds 0x{value:02X}, not a valid wire code")]
    VitalIoCode { name: String, value: u32 },
}

impl Resolved {
    /// Store state after reset: state variables zero, I/O registers at
    /// IO_OFF (lines at rest), constants at their values, then the INIT
    /// block.
    pub fn initial_store(&self) -> VarStore {
        let mut store = VarStore {
            values: vec![0; self.vars.len()],
        };
        for var in &self.vars {
            match var.kind {
                VarKind::Const { value } => store.values[var.slot] = value,
                VarKind::Output { .. } | VarKind::Input { .. } => {
                    store.values[var.slot] = IO_OFF as u32
                }
                VarKind::State => {}
            }
        }
        let mut locals = vec![0u32; self.local_cells];
        // INIT is constant by validation (no inputs, no clock), so clock 0 is
        // arbitrary.
        exec_block(&self.init, &mut store, &mut locals, 0);
        store
    }

    /// Run one board cycle: latch `inputs` (one code per pin, pin 1 first)
    /// into the input registers, execute the logic block, and check that
    /// every output register holds a valid wire code. Returns the new store
    /// and the output vector by pin.
    pub fn run_cycle(
        &self,
        store: &VarStore,
        inputs: &[u8],
        ms_clock: u32,
    ) -> Result<(VarStore, Vec<u8>), CycleError> {
        debug_assert_eq!(inputs.len(), self.io.inputs as usize);
        let mut store = store.clone();
        for &(pin, slot) in &self.input_pins {
            store.values[slot] = inputs[pin as usize - 1] as u32;
        }
        let mut locals = vec![0u32; self.local_cells];
        exec_block(&self.logic, &mut store, &mut locals, ms_clock);
        let mut outputs = vec![IO_OFF; self.io.outputs as usize];
        for &(pin, slot) in &self.output_pins {
            let v = store.values[slot];
            if !io_code_valid(v) {
                return Err(CycleError::VitalIoCode {
                    name: self.vars[slot].name.clone(),
                    value: v,
                });
            }
            outputs[pin as usize - 1] = v as u8;
        }
        Ok((store, outputs))
    }
}

fn exec_block(block: &[RStmt], store: &mut VarStore, locals: &mut [u32], clock: u32) {
    for stmt in block {
        match stmt {
            RStmt::SetSlot(slot, expr) => {
                store.values[*slot] = eval(expr, store, locals, clock);
            }
            RStmt::SetLocal(slot, expr) => {
                locals[*slot] = eval(expr, store, locals, clock);
            }
            RStmt::If {
                op,
                lhs,
                rhs,
                then_block,
                else_block,
            } => {
                let l = eval(lhs, store, locals, clock);
                let rv = eval(rhs, store, locals, clock);
                if op.eval(l, rv) {
                    exec_block(then_block, store, locals, clock);
                } else {
                    exec_block(else_block, store, locals, clock);
                }
            }
        }
    }
}

fn eval(expr: &RExpr, store: &VarStore, locals: &[u32], clock: u32) -> u32 {
    match expr {
        RExpr::Slot(slot, _) => store.values[*slot],
        RExpr::Local(slot, _) => locals[*slot],
        RExpr::Lit(v, _) => *v,
        RExpr::ModArith(op, w, lhs, rhs) => {
            let l = eval(lhs, store, locals, clock);
            let rv = eval(rhs, store, locals, clock);
            eval_mod(*op, *w, l, rv)
        }
        RExpr::Bit(op, w, lhs, rhs) => {
            let l = eval(lhs, store, locals, clock);
            let rv = eval(rhs, store, locals, clock);
            op.eval(l, rv) & w.mask()
        }
        RExpr::GetMsTick => clock,
        RExpr::Since(inner) => {
            let t0 = eval(inner, store, locals, clock);
            clock.wrapping_sub(t0)
        }
        RExpr::Feedback(slot) => store.values[*slot],
    }
}
