//! Reference interpreters. [`MachineSim`] steps the *original* machine one
//! model cycle at a time, resolving timeless transitions at runtime with
//! first-enabled priority — it never looks at the normalized form, so it
//! serves as the oracle for both normalization and translation.
//! [`NormSim`] steps a normalized machine the same way.

use std::collections::BTreeMap;

use super::model::{Action, GuardAtom, StateMachine};
use super::normalize::NormalizedMachine;
use super::SmError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpCall {
    pub op: String,
    pub args: Vec<i64>,
}

/// Shared clock/guard evaluation context for one machine.
#[derive(Debug, Clone)]
struct ClockCtx {
    consts: BTreeMap<String, i64>,
    cycle_unit_ms: u32,
    reset_ms: BTreeMap<String, u32>,
}

impl ClockCtx {
    fn guard_holds(
        &self,
        guard: &[GuardAtom],
        now_ms: u32,
        inputs: &BTreeMap<String, bool>,
    ) -> Result<bool, SmError> {
        for atom in guard {
            match atom {
                GuardAtom::Input { name, on } => {
                    let level = inputs.get(name).copied().unwrap_or(false);
                    if level != *on {
                        return Ok(false);
                    }
                }
                GuardAtom::Clock {
                    clock,
                    op,
                    threshold,
                } => {
                    let reset = self.reset_ms.get(clock).copied().unwrap_or(0);
                    let elapsed = now_ms.wrapping_sub(reset);
                    let model_units = threshold.eval(&self.consts)?;
                    let threshold_ms = model_units.max(0) as u64 * self.cycle_unit_ms as u64;
                    let threshold_ms =
                        u32::try_from(threshold_ms).map_err(|_| SmError::ConstEval {
                            message: format!("clock threshold overflows: {}", model_units),
                        })?;
                    if !op.eval(elapsed, threshold_ms) {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    fn run_actions(
        &mut self,
        actions: &[Action],
        now_ms: u32,
        calls: &mut Vec<OpCall>,
    ) -> Result<(), SmError> {
        for action in actions {
            match action {
                Action::ResetClock(c) => {
                    self.reset_ms.insert(c.clone(), now_ms);
                }
                Action::Call { op, args } => {
                    let args = args
                        .iter()
                        .map(|a| a.eval(&self.consts))
                        .collect::<Result<Vec<i64>, SmError>>()?;
                    calls.push(OpCall {
                        op: op.clone(),
                        args,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Step-by-step execution of the original machine.
#[derive(Debug, Clone)]
pub struct MachineSim<'a> {
    sm: &'a StateMachine,
    ctx: ClockCtx,
    started: bool,
    current: String,
}

impl<'a> MachineSim<'a> {
    pub fn new(
        sm: &'a StateMachine,
        consts: BTreeMap<String, i64>,
        cycle_unit_ms: u32,
    ) -> MachineSim<'a> {
        MachineSim {
            sm,
            ctx: ClockCtx {
                consts,
                cycle_unit_ms,
                reset_ms: sm.clocks.iter().map(|c| (c.clone(), 0)).collect(),
            },
            started: false,
            current: String::new(),
        }
    }

    pub fn current_state(&self) -> &str {
        &self.current
    }

    /// Execute one model cycle at simulated time `now_ms`, returning the
    /// operation calls it performs in order.
    pub fn model_cycle(
        &mut self,
        now_ms: u32,
        inputs: &BTreeMap<String, bool>,
    ) -> Result<Vec<OpCall>, SmError> {
        let mut calls = Vec::new();
        if !self.started {
            self.started = true;
            let actions = self.sm.initial_actions.clone();
            self.ctx.run_actions(&actions, now_ms, &mut calls)?;
            self.enter(self.sm.initial_target.clone(), now_ms, inputs, &mut calls)?;
            return Ok(calls);
        }
        let transitions = self.sm.exec_from(&self.current);
        for (_, t) in transitions {
            if self.ctx.guard_holds(&t.guard, now_ms, inputs)? {
                let actions = t.actions.clone();
                let dst = t.dst.clone();
                self.ctx.run_actions(&actions, now_ms, &mut calls)?;
                self.enter(dst, now_ms, inputs, &mut calls)?;
                return Ok(calls);
            }
        }
        // No boundary transition enabled: an empty model cycle.
        Ok(calls)
    }

    /// Enter a state: run its entry actions, then follow enabled timeless
    /// transitions (first match) until the machine comes to rest.
    fn enter(
        &mut self,
        state: String,
        now_ms: u32,
        inputs: &BTreeMap<String, bool>,
        calls: &mut Vec<OpCall>,
    ) -> Result<(), SmError> {
        let mut state = state;
        for _ in 0..=self.sm.states.len() {
            let entry = entry_actions(self.sm, &state);
            self.ctx.run_actions(&entry, now_ms, calls)?;
            let mut moved = false;
            for t in self.sm.timeless_from(&state) {
                if self.ctx.guard_holds(&t.guard, now_ms, inputs)? {
                    let actions = t.actions.clone();
                    self.ctx.run_actions(&actions, now_ms, calls)?;
                    state = t.dst.clone();
                    moved = true;
                    break;
                }
            }
            if !moved {
                self.current = state;
                return Ok(());
            }
        }
        Err(SmError::TimelessLoop {
            machine: self.sm.name.clone(),
            state,
        })
    }
}

fn entry_actions(sm: &StateMachine, state: &str) -> Vec<Action> {
    sm.state(state).map(|s| s.entry.clone()).unwrap_or_default()
}

/// Step-by-step execution of a normalized machine: first transition whose
/// guard holds fires; otherwise the cycle is empty.
#[derive(Debug, Clone)]
pub struct NormSim<'a> {
    nm: &'a NormalizedMachine,
    ctx: ClockCtx,
    started: bool,
    pub state: usize,
}

impl<'a> NormSim<'a> {
    pub fn new(
        nm: &'a NormalizedMachine,
        sm: &StateMachine,
        consts: BTreeMap<String, i64>,
        cycle_unit_ms: u32,
    ) -> NormSim<'a> {
        NormSim {
            nm,
            ctx: ClockCtx {
                consts,
                cycle_unit_ms,
                reset_ms: sm.clocks.iter().map(|c| (c.clone(), 0)).collect(),
            },
            started: false,
            state: 0,
        }
    }

    pub fn model_cycle(
        &mut self,
        now_ms: u32,
        inputs: &BTreeMap<String, bool>,
    ) -> Result<Vec<OpCall>, SmError> {
        let mut calls = Vec::new();
        if !self.started {
            self.started = true;
            let actions = self.nm.init_actions.clone();
            self.ctx.run_actions(&actions, now_ms, &mut calls)?;
            self.state = 0;
            return Ok(calls);
        }
        for t in &self.nm.transitions {
            if t.from != self.state {
                continue;
            }
            if self.ctx.guard_holds(&t.guard, now_ms, inputs)? {
                let actions = t.actions.clone();
                self.ctx.run_actions(&actions, now_ms, &mut calls)?;
                self.state = t.to;
                return Ok(calls);
            }
        }
        Ok(calls)
    }
}
