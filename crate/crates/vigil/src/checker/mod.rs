//! Bounded explicit-state model checking of kernel programs against safety
//! properties: breadth-first exploration over (persistent store × input
//! vector), property evaluated on each settled post-cycle state, minimal
//! counterexamples by construction (depth order, then lexicographic input
//! order).

pub mod property;

use std::collections::HashMap;

use thiserror::Error;

pub use property::{parse_properties, Formula, Property, PropertyParseError};

use crate::kernel::{RExpr, RStmt, Resolved, VarStore, IO_OFF, IO_ON};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("E_STATE_EXPLOSION exceeded the cap of {cap} states")]
    StateExplosion { cap: usize },
    #[error("E_UNBOUNDED_VAR program reads the millisecond clock; its state space is unbounded")]
    UnboundedVar,
    #[error("property references unknown register '{name}'")]
    UnknownRegister { name: String },
    #[error("program is not executable: {0}")]
    NotExecutable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// No reachable state within the depth violates the invariant.
    Verified { depth: u32, states_explored: usize },
    /// Minimal-length violating run: the input vector applied at each cycle,
    /// and the store it ends in.
    CounterExample {
        trace: Vec<Vec<u8>>,
        violating: VarStore,
    },
}

/// Default cap on explored (state × input) pairs.
pub const DEFAULT_STATE_CAP: usize = 10_000_000;

fn uses_clock_expr(expr: &RExpr) -> bool {
    match expr {
        RExpr::GetMsTick | RExpr::Since(_) => true,
        RExpr::ModArith(_, _, a, b) | RExpr::Bit(_, _, a, b) => {
            uses_clock_expr(a) || uses_clock_expr(b)
        }
        RExpr::Slot(..) | RExpr::Local(..) | RExpr::Lit(..) | RExpr::Feedback(_) => false,
    }
}

fn uses_clock(block: &[RStmt]) -> bool {
    block.iter().any(|stmt| match stmt {
        RStmt::SetSlot(_, e) | RStmt::SetLocal(_, e) => uses_clock_expr(e),
        RStmt::If {
            lhs,
            rhs,
            then_block,
            else_block,
            ..
        } => {
            uses_clock_expr(lhs)
                || uses_clock_expr(rhs)
                || uses_clock(then_block)
                || uses_clock(else_block)
        }
    })
}

/// All input vectors in lexicographic order: vector index `v` sets input
/// pin `k` when bit `k` of `v` is clear... inputs are enumerated OFF-first
/// so index 0 is the all-off vector.
fn input_vector(resolved: &Resolved, index: u32) -> Vec<u8> {
    let mut v = vec![IO_OFF; resolved.io.inputs as usize];
    for (bit, &(pin, _)) in resolved.input_pins.iter().enumerate() {
        if index & (1 << bit) != 0 {
            v[pin as usize - 1] = IO_ON;
        }
    }
    v
}

/// Evaluate a property on (inputs applied this cycle, resulting store).
fn eval_property(resolved: &Resolved, prop: &Property, store: &VarStore, inputs: &[u8]) -> bool {
    let level = |name: &str| -> bool {
        if let Some(slot) = resolved.slot_of(name) {
            let var = &resolved.vars[slot];
            let code = match var.kind {
                crate::kernel::VarKind::Input { pin } => inputs[pin as usize - 1] as u32,
                _ => store.values[slot],
            };
            code == IO_ON as u32
        } else {
            false
        }
    };
    prop.formula.eval(&level)
}

/// Breadth-first model check of `resolved` against `prop`, exploring up to
/// `depth` cycles and at most `cap` (state × input) pairs.
pub fn model_check(
    resolved: &Resolved,
    prop: &Property,
    depth: u32,
    cap: usize,
) -> Result<Verdict, CheckError> {
    if uses_clock(&resolved.logic) || uses_clock(&resolved.init) {
        return Err(CheckError::UnboundedVar);
    }
    for register in prop.formula.registers() {
        if resolved.slot_of(register).is_none() {
            return Err(CheckError::UnknownRegister {
                name: register.to_string(),
            });
        }
    }
    let input_count = resolved.input_pins.len();
    if input_count >= 24 || (1usize << input_count) > cap {
        return Err(CheckError::StateExplosion { cap });
    }
    let vectors = 1u32 << input_count;

    let initial = resolved.initial_store();
    // Node arena for counterexample reconstruction.
    struct Node {
        store: VarStore,
        parent: Option<(usize, u32)>,
    }
    let mut nodes = vec![Node {
        store: initial.clone(),
        parent: None,
    }];
    let mut seen: HashMap<Vec<u8>, ()> = HashMap::new();
    seen.insert(initial.canonical_bytes(resolved), ());
    let mut frontier = vec![0usize];
    let mut explored = 0usize;
    let mut reached_depth = 0u32;

    for level in 1..=depth {
        if frontier.is_empty() {
            break;
        }
        reached_depth = level;
        let mut next_frontier = Vec::new();
        for &node_idx in &frontier {
            for vec_idx in 0..vectors {
                explored += 1;
                if explored > cap {
                    return Err(CheckError::StateExplosion { cap });
                }
                let inputs = input_vector(resolved, vec_idx);
                let store = nodes[node_idx].store.clone();
                let (next, _) = resolved
                    .run_cycle(&store, &inputs, 0)
                    .map_err(|e| CheckError::NotExecutable(e.to_string()))?;
                let violated = !eval_property(resolved, prop, &next, &inputs);
                let key = next.canonical_bytes(resolved);
                let is_new = !seen.contains_key(&key);
                if violated {
                    // Reconstruct the minimal input trace.
                    let mut trace = vec![inputs];
                    let mut at = node_idx;
                    while let Some((parent, vi)) = nodes[at].parent {
                        trace.push(input_vector(resolved, vi));
                        at = parent;
                    }
                    trace.reverse();
                    return Ok(Verdict::CounterExample {
                        trace,
                        violating: next,
                    });
                }
                if is_new {
                    seen.insert(key, ());
                    nodes.push(Node {
                        store: next,
                        parent: Some((node_idx, vec_idx)),
                    });
                    next_frontier.push(nodes.len() - 1);
                }
            }
        }
        frontier = next_frontier;
    }
    // Either the requested depth was reached or the state space closed
    // early; both verify the requested depth.
    let _ = reached_depth;
    Ok(Verdict::Verified {
        depth,
        states_explored: explored,
    })
}

/// Replay counterexample inputs under the interpreter; returns the final
/// store and whether the property is violated there.
pub fn replay(
    resolved: &Resolved,
    prop: &Property,
    trace: &[Vec<u8>],
) -> Result<(VarStore, bool), String> {
    let mut store = resolved.initial_store();
    let mut last_inputs: Vec<u8> = vec![IO_OFF; resolved.io.inputs as usize];
    for inputs in trace {
        let (next, _) = resolved
            .run_cycle(&store, inputs, 0)
            .map_err(|e| e.to_string())?;
        store = next;
        last_inputs = inputs.clone();
    }
    let violated = !eval_property(resolved, prop, &store, &last_inputs);
    Ok((store, violated))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::kernel::{parse_program, resolve, IoConfig, Resolved};
    use crate::relay::{
        eval_outputs, parse_netlist, settle, translate_relay, CircuitState, Netlist, SettleResult,
    };

    fn fixture(name: &str) -> String {
        std::fs::read_to_string(format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name))
            .unwrap()
    }

    fn prop(text: &str) -> Property {
        parse_properties(text).unwrap().remove(0)
    }

    fn circuit_program(name: &str) -> (Netlist, Resolved) {
        let netlist = parse_netlist(&fixture(name)).unwrap();
        let program = translate_relay(&netlist, 64, IoConfig::default()).unwrap();
        (netlist, resolve(&program).unwrap())
    }

    #[test]
    fn property_parser_handles_precedence_and_parens() {
        let p = prop("x: a = ON => (b = OFF & c = OFF) | !(d = ON)");
        assert_eq!(
            p.formula.to_string(),
            "(a = ON => ((b = OFF & c = OFF) | !(d = ON)))"
        );
        assert!(parse_properties("bad line\n").is_err());
        assert!(parse_properties("p: a == ON\n").is_err());
    }

    #[test]
    fn trivially_true_property_verifies() {
        let p = parse_program("STATE\n    x : u8\nLOGIC\n    x := add_mod8(x, 1)\n").unwrap();
        let r = resolve(&p).unwrap();
        let verdict = model_check(&r, &prop("t: true"), 8, DEFAULT_STATE_CAP).unwrap();
        match verdict {
            Verdict::Verified { depth, .. } => assert_eq!(depth, 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn passthrough_verified_with_hand_enumerable_space() {
        let (_, r) = circuit_program("minimal.rly");
        let verdict = model_check(
            &r,
            &prop("implication: o_lamp = ON => i_btn = ON"),
            4,
            DEFAULT_STATE_CAP,
        )
        .unwrap();
        match verdict {
            Verdict::Verified {
                depth,
                states_explored,
            } => {
                assert_eq!(depth, 4);
                // Two reachable stores, each expanded with both input
                // vectors, twice until closure.
                assert_eq!(states_explored, 4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn good_light_signal_satisfies_exclusion() {
        let (_, r) = circuit_program("light_signal.rly");
        let props = parse_properties(&fixture("light_signal.prop")).unwrap();
        for p in &props {
            let verdict = model_check(&r, p, 6, DEFAULT_STATE_CAP).unwrap();
            assert!(
                matches!(verdict, Verdict::Verified { .. }),
                "property {} must verify",
                p.name
            );
        }
    }

    #[test]
    fn broken_light_signal_yields_minimal_replayable_counterexample() {
        let (_, r) = circuit_program("light_signal_broken.rly");
        let p = prop("exclusion: o_green = ON => (o_orange = OFF & o_red = OFF)");
        let verdict = model_check(&r, &p, 6, DEFAULT_STATE_CAP).unwrap();
        match verdict {
            Verdict::CounterExample { trace, violating } => {
                assert_eq!(trace.len(), 1, "violation is reachable in one cycle");
                let (replayed, violated) = replay(&r, &p, &trace).unwrap();
                assert!(violated, "replay must reach a violating state");
                assert_eq!(replayed.values, violating.values);
            }
            other => panic!("expected a counterexample, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_clock_programs_are_rejected() {
        let p = parse_program("STATE\n    t : u32\nLOGIC\n    t := get_ms_tick()\n").unwrap();
        let r = resolve(&p).unwrap();
        let err = model_check(&r, &prop("t: true"), 4, DEFAULT_STATE_CAP).unwrap_err();
        assert_eq!(err, CheckError::UnboundedVar);
    }

    #[test]
    fn state_cap_is_enforced() {
        let (_, r) = circuit_program("light_signal.rly");
        let err = model_check(&r, &prop("t: true"), 6, 10).unwrap_err();
        assert!(matches!(err, CheckError::StateExplosion { cap: 10 }));
    }

    #[test]
    fn unknown_register_is_rejected() {
        let (_, r) = circuit_program("minimal.rly");
        let err = model_check(&r, &prop("t: o_ghost = ON"), 2, DEFAULT_STATE_CAP).unwrap_err();
        assert!(matches!(err, CheckError::UnknownRegister { .. }));
    }

    /// Independent exhaustive oracle: breadth-first reachability over the
    /// *circuit* (via the direct settle evaluator, never the kernel), with
    /// the property checked on every settled state.
    fn brute_force_circuit(netlist: &Netlist, p: &Property) -> Option<Vec<BTreeMap<String, bool>>> {
        let initial = CircuitState::all_inactive(netlist);
        let mut seen = vec![initial.relay_active.clone()];
        let mut frontier = vec![(initial, Vec::new())];
        while !frontier.is_empty() {
            let mut next_frontier = Vec::new();
            for (state, trace) in frontier {
                for bits in 0..(1u32 << netlist.inputs.len()) {
                    let inputs: BTreeMap<String, bool> = netlist
                        .inputs
                        .iter()
                        .enumerate()
                        .map(|(i, n)| (n.clone(), bits & (1 << i) != 0))
                        .collect();
                    let fixed = match settle(netlist, &inputs, &state, 64) {
                        SettleResult::FixedPoint { state, .. } => state,
                        SettleResult::Oscillation => continue,
                    };
                    let outputs = eval_outputs(netlist, &fixed, &inputs);
                    let level = |name: &str| -> bool {
                        if let Some(out) = name.strip_prefix("o_") {
                            outputs.get(out).copied().unwrap_or(false)
                        } else if let Some(inp) = name.strip_prefix("i_") {
                            inputs.get(inp).copied().unwrap_or(false)
                        } else {
                            false
                        }
                    };
                    let mut new_trace = trace.clone();
                    new_trace.push(inputs.clone());
                    if !p.formula.eval(&level) {
                        return Some(new_trace);
                    }
                    if !seen.contains(&fixed.relay_active) {
                        seen.push(fixed.relay_active.clone());
                        next_frontier.push((fixed, new_trace));
                    }
                }
            }
            frontier = next_frontier;
        }
        None
    }

    #[test]
    fn verdicts_agree_with_independent_circuit_enumeration() {
        for (file, text, expect_violation) in [
            (
                "light_signal.rly",
                "exclusion: o_green = ON => (o_orange = OFF & o_red = OFF)",
                false,
            ),
            (
                "light_signal_broken.rly",
                "exclusion: o_green = ON => (o_orange = OFF & o_red = OFF)",
                true,
            ),
            ("minimal.rly", "imp: o_lamp = ON => i_btn = ON", false),
            ("minimal.rly", "never: o_lamp = OFF", true),
        ] {
            let netlist = parse_netlist(&fixture(file)).unwrap();
            let program = translate_relay(&netlist, 64, IoConfig::default()).unwrap();
            let r = resolve(&program).unwrap();
            let p = prop(text);
            let brute = brute_force_circuit(&netlist, &p);
            let checked = model_check(&r, &p, 8, DEFAULT_STATE_CAP).unwrap();
            match (brute, checked) {
                (None, Verdict::Verified { .. }) => assert!(!expect_violation),
                (Some(oracle_trace), Verdict::CounterExample { trace, .. }) => {
                    assert!(expect_violation);
                    // Both find minimal-length violations.
                    assert_eq!(oracle_trace.len(), trace.len(), "{file}: {text}");
                }
                other => panic!("verdicts disagree for {file} ({text}): {other:?}"),
            }
        }
    }
}
