//! Validate kernel programs and read the diagnostic report.
//!
//! Run with: cargo run -p vigil --example check_program

use vigil::kernel::{parse_program, validate};

fn main() {
    let good = "\
INPUTS
    btn : u8 pin 1
OUTPUTS
    lamp : u8 pin 1
STATE
    presses : u16
LOGIC
    IF btn = IO_ON
        presses := add_mod16(presses, 1)
        lamp := IO_ON
    ELSE
        lamp := IO_OFF
";
    let program = parse_program(good).expect("parses");
    let report = validate(&program);
    println!("well-formed program: {} errors", report.errors.len());

    // Each restriction of the language has its own diagnostic, tagged with
    // the verification-stage row it belongs to.
    let samples = [
        ("overflow-capable operator", "STATE\n    x : u8\nLOGIC\n    x := x + 1\n"),
        (
            "compound IF condition",
            "STATE\n    a : u8\n    b : u8\n    x : u8\nLOGIC\n    IF a = 1 AND b = 1\n        x := 1\n",
        ),
        ("untyped local", "LOGIC\n    tmp := 1\n"),
        (
            "width mismatch",
            "STATE\n    a : u8\n    b : u16\nLOGIC\n    b := a\n",
        ),
    ];
    for (what, source) in samples {
        let program = parse_program(source).expect("parses");
        let report = validate(&program);
        println!("\n{} is rejected:", what);
        print!("{}", report.to_lines());
    }
}
