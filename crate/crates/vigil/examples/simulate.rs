//! Full pipeline: build an image, bootload it on the simulated
//! dual-microcontroller board, and replay a scenario.
//!
//! Run with: cargo run -p vigil --example simulate

use vigil::codegen::{compile_a, compile_b, link, MemoryLayoutConfig};
use vigil::kernel::{parse_program, resolve};
use vigil::vm::{parse_scenario, run_scenario, BoardConfig, RunOptions};

fn main() {
    let source = "\
INPUTS
    btn : u8 pin 1
OUTPUTS
    lamp : u8 pin 1
LOGIC
    lamp := btn
";
    let program = parse_program(source).expect("parses");
    let resolved = resolve(&program).expect("validates");
    let image = link(
        &compile_a(&resolved).unwrap(),
        &compile_b(&resolved).unwrap(),
        &MemoryLayoutConfig::default(),
        resolved.io,
    )
    .expect("links");

    // Pulse the button twice, then run long enough to watch the physical
    // output follow with the settle delay.
    let scenario = parse_scenario(
        "at 2 input 1 ON\nat 6 input 1 OFF\nat 10 input 1 ON\nat 14 input 1 OFF\nrun 20\n",
    )
    .expect("scenario parses");

    let trace = run_scenario(
        &image,
        &scenario,
        BoardConfig::default(),
        RunOptions::default(),
    )
    .expect("boots and runs");
    print!("{}", trace.to_text());

    // The physical output is the conjunction of the command channel and the
    // energy channel, two cycles behind the registers.
    for rec in &trace.records {
        if rec.out_phys != 0 {
            println!("first physically-on cycle: {}", rec.cycle);
            break;
        }
    }
}
