//! Relay-circuit frontend: netlist parsing, the direct fixed-point
//! evaluator used as the behavioral oracle, and the translation to the
//! cyclic kernel.

pub mod netlist;
pub mod settle;
pub mod translate;

pub use netlist::{parse_netlist, Element, Netlist, NetlistError, Strand};
pub use settle::{default_max_iter, eval_outputs, settle, CircuitState, SettleResult};
pub use translate::{translate_relay, TranslateError, PATH_CAP};

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::kernel::{resolve, validate, CycleError, IoConfig, Resolved, IO_OFF, IO_ON};

    fn fixture(name: &str) -> String {
        std::fs::read_to_string(format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name))
            .unwrap()
    }

    fn inputs_map(netlist: &Netlist, bits: u32) -> BTreeMap<String, bool> {
        netlist
            .inputs
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), bits & (1 << i) != 0))
            .collect()
    }

    fn input_codes(netlist: &Netlist, bits: u32, io: IoConfig) -> Vec<u8> {
        let mut v = vec![IO_OFF; io.inputs as usize];
        for (i, code) in v.iter_mut().enumerate().take(netlist.inputs.len()) {
            if bits & (1 << i) != 0 {
                *code = IO_ON;
            }
        }
        v
    }

    /// Exhaustive equivalence between the direct evaluator and the
    /// translated program over every reachable (state, input) pair.
    fn assert_oracle_equivalence(netlist: &Netlist, max_iter: u32) {
        let program = translate_relay(netlist, max_iter, IoConfig::default()).unwrap();
        assert!(validate(&program).is_ok(), "translated program must check");
        let r: Resolved = resolve(&program).unwrap();

        let mut frontier = vec![CircuitState::all_inactive(netlist)];
        let mut seen = vec![frontier[0].relay_active.clone()];
        let mut explored = 0usize;
        while let Some(state) = frontier.pop() {
            for bits in 0..(1u32 << netlist.inputs.len()) {
                explored += 1;
                let inputs = inputs_map(netlist, bits);
                // Kernel-side store matching this circuit state.
                let mut store = r.initial_store();
                for (relay, active) in &state.relay_active {
                    let slot = r.slot_of(&format!("r_{}", relay)).unwrap();
                    store.values[slot] = if *active { IO_ON } else { IO_OFF } as u32;
                }
                let kernel = r.run_cycle(&store, &input_codes(netlist, bits, r.io), 0);
                match settle(netlist, &inputs, &state, max_iter) {
                    SettleResult::FixedPoint { state: fixed, .. } => {
                        let (next_store, outputs) = kernel.expect("settled circuit must not trap");
                        for (relay, active) in &fixed.relay_active {
                            let slot = r.slot_of(&format!("r_{}", relay)).unwrap();
                            let want = if *active { IO_ON } else { IO_OFF } as u32;
                            assert_eq!(
                                next_store.values[slot], want,
                                "relay {relay} at inputs {bits:b}"
                            );
                        }
                        let want_outputs = eval_outputs(netlist, &fixed, &inputs);
                        for (i, name) in netlist.outputs.iter().enumerate() {
                            let want = if want_outputs[name] { IO_ON } else { IO_OFF };
                            assert_eq!(outputs[i], want, "output {name} at inputs {bits:b}");
                        }
                        if !seen.contains(&fixed.relay_active) {
                            seen.push(fixed.relay_active.clone());
                            frontier.push(fixed);
                        }
                    }
                    SettleResult::Oscillation => {
                        assert!(
                            matches!(kernel, Err(CycleError::VitalIoCode { .. })),
                            "oscillation must force the fail-safe output code"
                        );
                    }
                }
            }
        }
        assert!(explored > 0);
    }

    #[test]
    fn parse_minimal_circuit() {
        let netlist = parse_netlist("RELAYS\n    R1\nSTRANDS\n    P+ , coil(R1) , N-\n").unwrap();
        assert_eq!(netlist.relays, vec!["R1"]);
        assert_eq!(netlist.strands.len(), 1);
    }

    #[test]
    fn parse_rejects_unknown_relay() {
        let errs = parse_netlist("RELAYS\n    R1\nSTRANDS\n    P+ , no(GHOST) , coil(R1) , N-\n")
            .unwrap_err();
        assert!(errs.iter().any(|e| e.code == "E_UNKNOWN_RELAY"));
        assert_eq!(errs[0].line, 4);
    }

    #[test]
    fn parse_rejects_duplicates_and_dangling() {
        let errs = parse_netlist("RELAYS\n    R1\n    R1\n").unwrap_err();
        assert!(errs.iter().any(|e| e.code == "E_DUPLICATE_NAME"));

        let errs = parse_netlist("RELAYS\n    R1\nSTRANDS\n    P+ , coil(R1)\n").unwrap_err();
        assert!(errs.iter().any(|e| e.code == "E_DANGLING_STRAND"));

        // Terminal in the middle of a strand.
        let errs =
            parse_netlist("RELAYS\n    R1\nSTRANDS\n    P+ , N- , coil(R1) , N-\n").unwrap_err();
        assert!(errs.iter().any(|e| e.code == "E_DANGLING_STRAND"));
    }

    #[test]
    fn light_signal_parses_with_nine_relays() {
        let netlist = parse_netlist(&fixture("light_signal.rly")).unwrap();
        assert_eq!(
            netlist.relays,
            vec!["CM", "CFR", "RPCS", "CRR", "CA", "RPA", "BS", "EX1", "EX2"]
        );
    }

    #[test]
    fn light_signal_default_state_has_exactly_crr_active() {
        let netlist = parse_netlist(&fixture("light_signal.rly")).unwrap();
        let inputs = inputs_map(&netlist, 0);
        let prev = CircuitState::all_inactive(&netlist);
        match settle(
            &netlist,
            &inputs,
            &prev,
            default_max_iter(netlist.relays.len()),
        ) {
            SettleResult::FixedPoint { state, .. } => {
                for (relay, active) in &state.relay_active {
                    assert_eq!(*active, relay == "CRR", "relay {relay}");
                }
                let outputs = eval_outputs(&netlist, &state, &inputs);
                assert!(outputs["green"], "default aspect is green");
                assert!(!outputs["orange"] && !outputs["red"]);
            }
            SettleResult::Oscillation => panic!("default state must settle"),
        }
    }

    #[test]
    fn direct_input_relay_settles_in_two_iterations() {
        let netlist = parse_netlist(&fixture("minimal.rly")).unwrap();
        let inputs = inputs_map(&netlist, 1);
        let prev = CircuitState::all_inactive(&netlist);
        match settle(&netlist, &inputs, &prev, 16) {
            SettleResult::FixedPoint { state, iterations } => {
                assert!(state.relay_active["R1"]);
                assert_eq!(iterations, 2);
            }
            SettleResult::Oscillation => panic!("must settle"),
        }
    }

    #[test]
    fn cross_coupled_nc_relays_oscillate() {
        // Independent oracle: the sweep function of this circuit is
        // (r1', r2') = (!r2, !r1). From rest it alternates between
        // (true,true) and (false,false) and never repeats consecutively.
        let mut state = (false, false);
        for _ in 0..10 {
            let next = (!state.1, !state.0);
            assert_ne!(next, state, "no fixed point is ever reached");
            state = next;
        }

        let netlist = parse_netlist(&fixture("oscillator.rly")).unwrap();
        let prev = CircuitState::all_inactive(&netlist);
        let result = settle(&netlist, &BTreeMap::new(), &prev, 64);
        assert_eq!(result, SettleResult::Oscillation);
    }

    #[test]
    fn minimal_circuit_translation_matches_oracle() {
        let netlist = parse_netlist(&fixture("minimal.rly")).unwrap();
        assert_oracle_equivalence(&netlist, 16);
    }

    #[test]
    fn light_signal_translation_matches_oracle_exhaustively() {
        let netlist = parse_netlist(&fixture("light_signal.rly")).unwrap();
        assert_oracle_equivalence(&netlist, 64);
    }

    #[test]
    fn oscillating_circuit_trips_the_vital_code_check() {
        let netlist = parse_netlist(&fixture("oscillator.rly")).unwrap();
        let program = translate_relay(&netlist, 32, IoConfig::default()).unwrap();
        let r = resolve(&program).unwrap();
        let store = r.initial_store();
        let err = r
            .run_cycle(&store, &vec![IO_OFF; r.io.inputs as usize], 0)
            .unwrap_err();
        assert!(matches!(err, CycleError::VitalIoCode { .. }));
    }

    #[test]
    fn strand_order_does_not_change_the_fixed_point() {
        let netlist = parse_netlist(&fixture("light_signal.rly")).unwrap();
        let prev = CircuitState::all_inactive(&netlist);
        for bits in 0..16u32 {
            let inputs = inputs_map(&netlist, bits);
            let base = settle(&netlist, &inputs, &prev, 64);
            // Deterministic set of permutations: rotations and a reversal.
            for rot in 0..netlist.strands.len() {
                let mut permuted = netlist.clone();
                permuted.strands.rotate_left(rot);
                if rot % 2 == 1 {
                    permuted.strands.reverse();
                }
                let other = settle(&permuted, &inputs, &prev, 64);
                match (&base, &other) {
                    (
                        SettleResult::FixedPoint { state: s1, .. },
                        SettleResult::FixedPoint { state: s2, .. },
                    ) => assert_eq!(s1.relay_active, s2.relay_active, "rotation {rot}"),
                    (SettleResult::Oscillation, SettleResult::Oscillation) => {}
                    other => panic!("verdict changed under permutation: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn monotone_circuits_settle_within_relay_count_plus_one() {
        // A chain of relays, each powered through the previous one's NO
        // contact, exercises the worst monotone propagation depth.
        for n in 1..=8usize {
            let mut text = String::from("RELAYS\n");
            for i in 0..n {
                text.push_str(&format!("    K{}\n", i));
            }
            text.push_str("INPUTS\n    go\nSTRANDS\n    in(go) , coil(K0) , N-\n");
            for i in 1..n {
                text.push_str(&format!("    P+ , no(K{}) , coil(K{}) , N-\n", i - 1, i));
            }
            let netlist = parse_netlist(&text).unwrap();
            let inputs = inputs_map(&netlist, 1);
            let prev = CircuitState::all_inactive(&netlist);
            match settle(&netlist, &inputs, &prev, 1024) {
                SettleResult::FixedPoint { state, iterations } => {
                    assert!(state.relay_active[&format!("K{}", n - 1)]);
                    assert!(
                        iterations as usize <= n + 1,
                        "chain of {n}: {iterations} iterations"
                    );
                }
                SettleResult::Oscillation => panic!("monotone circuit must settle"),
            }
        }
    }

    #[test]
    fn too_many_outputs_is_rejected() {
        let mut text = String::from("RELAYS\n    R1\nOUTPUTS\n");
        for i in 0..9 {
            text.push_str(&format!("    lamp{}\n", i));
        }
        text.push_str("STRANDS\n    P+ , coil(R1) , N-\n");
        for i in 0..9 {
            text.push_str(&format!("    P+ , no(R1) , out(lamp{})\n", i));
        }
        let netlist = parse_netlist(&text).unwrap();
        let err = translate_relay(&netlist, 8, IoConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            TranslateError::TooManyIo { kind: "output", .. }
        ));
    }

    #[test]
    fn junction_paths_power_coils_from_either_branch() {
        let netlist = parse_netlist(&fixture("light_signal.rly")).unwrap();
        // cmd_bs on: BS pulls RPA through the junction, then EX1, EX2.
        let inputs = inputs_map(&netlist, 0b1000);
        let prev = CircuitState::all_inactive(&netlist);
        match settle(&netlist, &inputs, &prev, 64) {
            SettleResult::FixedPoint { state, .. } => {
                assert!(state.relay_active["BS"]);
                assert!(state.relay_active["RPA"]);
                assert!(state.relay_active["EX1"]);
                assert!(state.relay_active["EX2"]);
            }
            SettleResult::Oscillation => panic!("must settle"),
        }
    }

    #[test]
    fn path_explosion_is_capped() {
        // Fourteen junction stages with two parallel branches each give
        // 2^14 source-to-sink paths, past the elaboration cap.
        let mut text = String::from("RELAYS\n    R1\nSTRANDS\n");
        text.push_str("    P+ , node(J0)\n    P+ , node(J0)\n");
        for i in 1..14 {
            text.push_str(&format!("    node(J{}) , node(J{})\n", i - 1, i));
            text.push_str(&format!("    node(J{}) , node(J{})\n", i - 1, i));
        }
        text.push_str("    node(J13) , coil(R1) , N-\n");
        let netlist = parse_netlist(&text).unwrap();
        let err = translate_relay(&netlist, 4, IoConfig::default()).unwrap_err();
        assert!(matches!(err, TranslateError::PathExplosion { cap: PATH_CAP }));
    }

    #[test]
    fn too_many_inputs_is_rejected() {
        let mut text = String::from("RELAYS\n    R1\nINPUTS\n");
        for i in 0..21 {
            text.push_str(&format!("    b{}\n", i));
        }
        text.push_str("STRANDS\n    in(b0) , coil(R1) , N-\n");
        let netlist = parse_netlist(&text).unwrap();
        let err = translate_relay(&netlist, 8, IoConfig::default()).unwrap_err();
        assert!(matches!(err, TranslateError::TooManyIo { kind: "input", .. }));
    }

    #[test]
    fn default_max_iter_is_capped() {
        assert_eq!(default_max_iter(0), 2);
        assert_eq!(default_max_iter(3), 16);
        assert_eq!(default_max_iter(8), 512);
        assert_eq!(default_max_iter(9), 1024);
        assert_eq!(default_max_iter(20), 1024);
    }
}
