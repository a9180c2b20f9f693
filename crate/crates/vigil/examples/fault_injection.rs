//! Fault injection against the runtime safety library: every injected
//! failure class ends in a terminal panic with its own reason, and the
//! physical outputs stay off from that cycle on.
//!
//! Run with: cargo run -p vigil --example fault_injection

use vigil::codegen::{compile_a, compile_b, link, MemoryLayoutConfig};
use vigil::kernel::{parse_program, resolve};
use vigil::vm::{bootload, BinSel, BoardConfig, FaultKind, FaultSpec};

fn main() {
    let source = "\
INPUTS
    btn : u8 pin 1
OUTPUTS
    lamp : u8 pin 1
STATE
    ticks : u32
LOGIC
    ticks := add_mod32(ticks, 1)
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

    let faults = [
        (
            "bit flip in a data store",
            FaultKind::RamDataFlip {
                mc: 0,
                bin: BinSel::B,
                byte: image.symbol("ticks").unwrap().off_b,
                bit: 4,
            },
        ),
        (
            "bit flip in code RAM",
            FaultKind::RamCodeFlip {
                mc: 1,
                bin: BinSel::A,
                byte: 2,
                bit: 1,
            },
        ),
        ("handshake loss", FaultKind::HandshakeDrop),
        (
            "diverging input sample",
            FaultKind::InputDivergence { mc: 1, pin: 1 },
        ),
        (
            "output stuck off",
            FaultKind::StuckOutput {
                pin: 1,
                value: false,
            },
        ),
    ];

    for (what, kind) in faults {
        let mut pair = bootload(&image, BoardConfig::default()).expect("boots");
        pair.set_line(1, true);
        pair.schedule_fault(FaultSpec { at_cycle: 25, kind });
        for _ in 0..200 {
            pair.step_cycle();
            if pair.panicked().is_some() {
                break;
            }
        }
        let info = pair.panicked().expect("every fault is detected");
        println!(
            "{:28} -> panic {:?} at cycle {} ({} ms after injection)",
            what,
            info.reasons,
            info.cycle,
            info.ms.saturating_sub(25 * 5),
        );
        // Fail-safe: outputs stay de-energized no matter the inputs.
        for c in 0..50 {
            pair.set_line(1, c % 2 == 0);
            pair.step_cycle();
            assert!(pair.physical_outputs().iter().all(|&p| !p));
        }
    }
}
