//! Normalization: collapsing timeless transition chains so the machine has
//! one initial state plus one state per cycle boundary, every remaining
//! transition bound to the cycle boundary with the chain's actions composed
//! in order (transition actions first, then the entered state's entry
//! actions, and so on until a wait position).
//!
//! Guarded timeless transitions are expanded into ordered, mutually
//! exclusive branches; all branches of one boundary transition must come to
//! rest in the same wait state so a single normalized state can represent
//! the cycle end.

use std::collections::BTreeSet;

use super::model::{Action, GuardAtom, StateMachine};
use super::SmError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormState {
    /// `INIT` or `EXEC_<k>`.
    pub name: String,
    /// Underlying wait state of the source machine.
    pub wait_state: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormTransition {
    pub from: usize,
    /// Conjunction; transitions are tried in list order, first match fires.
    pub guard: Vec<GuardAtom>,
    pub actions: Vec<Action>,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedMachine {
    pub machine: String,
    /// Index 0 is INIT; index k is EXEC_k.
    pub states: Vec<NormState>,
    /// Actions of the initial chain, run once in the first model cycle.
    pub init_actions: Vec<Action>,
    pub transitions: Vec<NormTransition>,
}

/// One guarded continuation of a timeless chain.
#[derive(Debug, Clone)]
struct ChaseBranch {
    guard: Vec<GuardAtom>,
    actions: Vec<Action>,
    rest_state: String,
}

pub fn normalize(sm: &StateMachine) -> Result<NormalizedMachine, SmError> {
    check_timeless_loops(sm)?;

    // Initial chain: must be a single unguarded path to a wait state.
    let mut init_actions = sm.initial_actions.clone();
    init_actions.extend(entry_of(sm, &sm.initial_target));
    let init_branches = chase(sm, &sm.initial_target, init_actions, Vec::new());
    if init_branches.len() != 1 || !init_branches[0].guard.is_empty() {
        return Err(SmError::InitBranch {
            machine: sm.name.clone(),
        });
    }
    let init = &init_branches[0];

    let exec = sm.exec_transitions();
    let mut states = vec![NormState {
        name: "INIT".to_string(),
        wait_state: init.rest_state.clone(),
    }];
    // One normalized state per boundary transition; all continuation
    // branches must rest in the same wait state.
    let mut chased: Vec<Vec<ChaseBranch>> = Vec::new();
    for (k, t) in &exec {
        let mut start_actions = t.actions.clone();
        start_actions.extend(entry_of(sm, &t.dst));
        let branches = chase(sm, &t.dst, start_actions, Vec::new());
        let rests: BTreeSet<&str> = branches.iter().map(|b| b.rest_state.as_str()).collect();
        if rests.len() != 1 {
            return Err(SmError::AmbiguousCycleEnd {
                machine: sm.name.clone(),
                detail: format!(
                    "boundary transition {} ({} -> {}) can come to rest in {:?}",
                    k, t.src, t.dst, rests
                ),
            });
        }
        states.push(NormState {
            name: format!("EXEC_{}", k),
            wait_state: branches[0].rest_state.clone(),
        });
        chased.push(branches);
    }

    // Transitions: from every normalized state, each boundary transition out
    // of its wait state, refined by the continuation branches in order.
    let mut transitions = Vec::new();
    for (si, state) in states.iter().enumerate() {
        for (k, t) in sm.exec_from(&state.wait_state) {
            for branch in &chased[k - 1] {
                let mut guard = t.guard.clone();
                guard.extend(branch.guard.iter().cloned());
                transitions.push(NormTransition {
                    from: si,
                    guard,
                    actions: branch.actions.clone(),
                    to: k,
                });
            }
        }
    }

    Ok(NormalizedMachine {
        machine: sm.name.clone(),
        states,
        init_actions: init.actions.clone(),
        transitions,
    })
}

fn entry_of(sm: &StateMachine, state: &str) -> Vec<Action> {
    sm.state(state).map(|s| s.entry.clone()).unwrap_or_default()
}

/// `¬(a1 ∧ … ∧ am)` as ordered, pairwise-disjoint conjunctions:
/// `[¬a1]`, `[a1, ¬a2]`, …, `[a1, …, a(m-1), ¬am]`.
fn negate_conjunction(atoms: &[GuardAtom]) -> Vec<Vec<GuardAtom>> {
    let mut out = Vec::with_capacity(atoms.len());
    for i in 0..atoms.len() {
        let mut clause: Vec<GuardAtom> = atoms[..i].to_vec();
        clause.push(atoms[i].negate());
        out.push(clause);
    }
    out
}

/// Expand the timeless continuations from `state` into ordered, disjoint
/// branches. A state with no enabled timeless transition is a wait position;
/// a state whose timeless transitions are all guarded can also wait, under
/// the conjunction of their negations.
fn chase(
    sm: &StateMachine,
    state: &str,
    actions: Vec<Action>,
    guard: Vec<GuardAtom>,
) -> Vec<ChaseBranch> {
    let outgoing = sm.timeless_from(state);
    if outgoing.is_empty() {
        return vec![ChaseBranch {
            guard,
            actions,
            rest_state: state.to_string(),
        }];
    }
    let mut branches = Vec::new();
    // Disjoint conjunctions meaning "no earlier transition was enabled".
    let mut none_so_far: Vec<Vec<GuardAtom>> = vec![Vec::new()];
    for t in &outgoing {
        for prefix in &none_so_far {
            let mut branch_guard = guard.clone();
            branch_guard.extend(prefix.iter().cloned());
            branch_guard.extend(t.guard.iter().cloned());
            let mut branch_actions = actions.clone();
            branch_actions.extend(t.actions.iter().cloned());
            branch_actions.extend(entry_of(sm, &t.dst));
            branches.extend(chase(sm, &t.dst, branch_actions, branch_guard));
        }
        if t.guard.is_empty() {
            // Unconditional: later alternatives and the residual wait are
            // unreachable.
            return branches;
        }
        let negated = negate_conjunction(&t.guard);
        let mut next = Vec::with_capacity(none_so_far.len() * negated.len());
        for prefix in &none_so_far {
            for clause in &negated {
                let mut p = prefix.clone();
                p.extend(clause.iter().cloned());
                next.push(p);
            }
        }
        none_so_far = next;
    }
    // Residual: nothing enabled, the chain waits here.
    for prefix in none_so_far {
        let mut residual_guard = guard.clone();
        residual_guard.extend(prefix);
        branches.push(ChaseBranch {
            guard: residual_guard,
            actions: actions.clone(),
            rest_state: state.to_string(),
        });
    }
    branches
}

fn check_timeless_loops(sm: &StateMachine) -> Result<(), SmError> {
    fn dfs<'a>(
        sm: &'a StateMachine,
        node: &'a str,
        path: &mut Vec<&'a str>,
        visited: &mut BTreeSet<&'a str>,
    ) -> Option<String> {
        if path.contains(&node) {
            return Some(node.to_string());
        }
        if !visited.insert(node) {
            return None;
        }
        path.push(node);
        for t in sm.timeless_from(node) {
            if let Some(cycle) = dfs(sm, &t.dst, path, visited) {
                return Some(cycle);
            }
        }
        path.pop();
        None
    }
    let mut visited: BTreeSet<&str> = BTreeSet::new();
    for start in &sm.states {
        let mut path: Vec<&str> = Vec::new();
        if let Some(state) = dfs(sm, &start.name, &mut path, &mut visited) {
            return Err(SmError::TimelessLoop {
                machine: sm.name.clone(),
                state,
            });
        }
    }
    Ok(())
}
