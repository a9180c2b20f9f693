//! Translate the obstacle-avoidance state machine and watch its model
//! cycles fire on the 100 ms grid while the board spins at 5 ms, with
//! operation calls leaving on the mapped pins.
//!
//! Run with: cargo run -p vigil --example state_machine

use std::collections::BTreeMap;

use vigil::kernel::{resolve, IO_OFF, IO_ON};
use vigil::statemachine::{normalize, parse_machines, parse_pinmap, translate_sm};

fn main() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let machines =
        parse_machines(&std::fs::read_to_string(format!("{dir}/fixtures/obstacle.csm")).unwrap())
            .expect("machine parses");
    let pins =
        parse_pinmap(&std::fs::read_to_string(format!("{dir}/fixtures/obstacle.pins")).unwrap())
            .expect("pin map parses");

    let norm = normalize(&machines[0]).expect("normalizes");
    println!("normalized cycle states:");
    for s in &norm.states {
        println!("  {:8} resting at {}", s.name, s.wait_state);
    }

    let consts: BTreeMap<String, i64> = [("PI", 20i64), ("lv", 1), ("av", 2)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let program =
        translate_sm(&machines, 100, &consts, &pins, Default::default()).expect("translates");
    let resolved = resolve(&program).expect("generated code validates");

    // Drive the board at 5 ms per cycle; an obstacle shows up at 300 ms.
    let cycles_slot = resolved.slot_of("s_SimSMovement_cycles").unwrap();
    let move_slot = resolved.slot_of("o_move").unwrap();
    let stop_slot = resolved.slot_of("o_stop").unwrap();
    let mut store = resolved.initial_store();
    println!("\nboard at 5 ms/cycle, obstacle from 300 ms to 400 ms:");
    for cycle in 0..400u32 {
        let now = cycle * 5;
        let obstacle = (300..400).contains(&now);
        let mut inputs = vec![IO_OFF; resolved.io.inputs as usize];
        if obstacle {
            inputs[0] = IO_ON;
        }
        let before = store.values[cycles_slot];
        store = resolved.run_cycle(&store, &inputs, now).unwrap().0;
        if store.values[cycles_slot] != before {
            println!(
                "  t={:5} ms  model cycle {:2}  move={} stop={}",
                now,
                store.values[cycles_slot],
                store.values[move_slot] == IO_ON as u32,
                store.values[stop_slot] == IO_ON as u32,
            );
        }
    }
}
