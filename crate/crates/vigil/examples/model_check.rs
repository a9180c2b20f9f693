//! Model-check the light-signal circuit: the intact design verifies its
//! exclusion property; the broken variant produces a minimal
//! counterexample that replays to the violation.
//!
//! Run with: cargo run -p vigil --example model_check

use vigil::checker::{model_check, parse_properties, replay, Verdict, DEFAULT_STATE_CAP};
use vigil::kernel::{resolve, IoConfig};
use vigil::relay::{parse_netlist, translate_relay};

fn main() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let props = parse_properties(
        &std::fs::read_to_string(format!("{dir}/fixtures/light_signal.prop")).unwrap(),
    )
    .expect("properties parse");

    for file in ["light_signal.rly", "light_signal_broken.rly"] {
        println!("== {}", file);
        let netlist =
            parse_netlist(&std::fs::read_to_string(format!("{dir}/fixtures/{file}")).unwrap())
                .expect("netlist parses");
        let program = translate_relay(&netlist, 64, IoConfig::default()).expect("translates");
        let resolved = resolve(&program).expect("validates");
        for prop in &props {
            match model_check(&resolved, prop, 8, DEFAULT_STATE_CAP).expect("checkable") {
                Verdict::Verified {
                    depth,
                    states_explored,
                } => println!(
                    "  VERIFIED        {:18} depth={} explored={}",
                    prop.name, depth, states_explored
                ),
                Verdict::CounterExample { trace, .. } => {
                    println!(
                        "  COUNTEREXAMPLE  {:18} reached in {} cycle(s)",
                        prop.name,
                        trace.len()
                    );
                    let (_, violated) = replay(&resolved, prop, &trace).expect("replays");
                    assert!(violated, "the trace replays to a violating state");
                    for (cycle, inputs) in trace.iter().enumerate() {
                        let on: Vec<usize> = inputs
                            .iter()
                            .enumerate()
                            .filter(|(_, &c)| c == vigil::kernel::IO_ON)
                            .map(|(i, _)| i + 1)
                            .collect();
                        println!("      cycle {}: input pins on: {:?}", cycle, on);
                    }
                }
            }
        }
    }
}
