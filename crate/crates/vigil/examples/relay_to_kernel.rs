//! Translate a relay circuit to the kernel and compare the generated logic
//! against the direct electrical evaluator over every input combination.
//!
//! Run with: cargo run -p vigil --example relay_to_kernel

use std::collections::BTreeMap;

use vigil::kernel::{resolve, to_source, IoConfig, IO_OFF, IO_ON};
use vigil::relay::{
    default_max_iter, eval_outputs, parse_netlist, settle, translate_relay, CircuitState,
    SettleResult,
};

fn main() {
    let path = format!("{}/fixtures/light_signal.rly", env!("CARGO_MANIFEST_DIR"));
    let netlist = parse_netlist(&std::fs::read_to_string(path).unwrap()).expect("netlist parses");
    println!("{}", netlist);

    // Drawn default state: every command input off, exactly CRR energized.
    let rest = CircuitState::all_inactive(&netlist);
    let all_off: BTreeMap<String, bool> =
        netlist.inputs.iter().map(|i| (i.clone(), false)).collect();
    match settle(&netlist, &all_off, &rest, 64) {
        SettleResult::FixedPoint { state, iterations } => {
            let active: Vec<&String> = state
                .relay_active
                .iter()
                .filter(|(_, &a)| a)
                .map(|(r, _)| r)
                .collect();
            println!(
                "default state settles in {} sweeps, active: {:?}",
                iterations, active
            );
        }
        SettleResult::Oscillation => unreachable!("the signal circuit settles"),
    }

    let max_iter = default_max_iter(netlist.relays.len());
    let program = translate_relay(&netlist, max_iter, IoConfig::default()).expect("translates");
    println!(
        "\ngenerated kernel source ({} lines), first declarations:",
        to_source(&program).lines().count()
    );
    for line in to_source(&program).lines().take(12) {
        println!("  {}", line);
    }

    // Exhaustive agreement between the electrical oracle and the generated
    // per-cycle logic, over all 2^4 input vectors from the rest state.
    let resolved = resolve(&program).expect("generated code validates");
    let mut checked = 0;
    for bits in 0..(1u32 << netlist.inputs.len()) {
        let inputs: BTreeMap<String, bool> = netlist
            .inputs
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), bits & (1 << i) != 0))
            .collect();
        let mut codes = vec![IO_OFF; resolved.io.inputs as usize];
        for (i, code) in codes.iter_mut().enumerate().take(netlist.inputs.len()) {
            if bits & (1 << i) != 0 {
                *code = IO_ON;
            }
        }
        let fixed = match settle(&netlist, &inputs, &rest, max_iter) {
            SettleResult::FixedPoint { state, .. } => state,
            SettleResult::Oscillation => continue,
        };
        let want = eval_outputs(&netlist, &fixed, &inputs);
        let (_, outputs) = resolved
            .run_cycle(&resolved.initial_store(), &codes, 0)
            .expect("cycle runs");
        for (i, name) in netlist.outputs.iter().enumerate() {
            let got = outputs[i] == IO_ON;
            assert_eq!(got, want[name], "output {name} at inputs {bits:04b}");
        }
        checked += 1;
    }
    println!("\noracle agreement over {} input vectors", checked);
}
