//! Compile a program through both code generators, inspect the two
//! listings, and link the checksummed dual-binary image.
//!
//! Run with: cargo run -p vigil --example build_image

use vigil::codegen::{compile_a, compile_b, link, MemoryLayoutConfig};
use vigil::kernel::{parse_program, resolve};

fn main() {
    let source = "\
INPUTS
    btn : u8 pin 1
OUTPUTS
    lamp : u8 pin 1
STATE
    count : u16
LOGIC
    IF btn = IO_ON
        count := add_mod16(count, 1)
        lamp := IO_ON
    ELSE
        lamp := IO_OFF
";
    let program = parse_program(source).expect("parses");
    let resolved = resolve(&program).expect("validates");

    let a = compile_a(&resolved).expect("path A compiles");
    let b = compile_b(&resolved).expect("path B compiles");

    println!("path A (stack machine, declaration-order data):");
    print!("{}", a.listing());
    println!("\npath B (register machine, alphabetical data):");
    print!("{}", b.listing());

    // The same function, structurally different binaries.
    assert_ne!(a.code, b.code);

    let image = link(&a, &b, &MemoryLayoutConfig::default(), resolved.io).expect("links");
    println!("\n{}", image);
    println!("symbols:");
    for sym in &image.symbols {
        println!(
            "  {:8} {:?} off_a=0x{:04X} off_b=0x{:04X} pin={:?}",
            sym.name, sym.kind, sym.off_a, sym.off_b, sym.pin
        );
    }

    println!("\nIntel-HEX-style rendering (first lines):");
    for line in image.to_hex_text().lines().take(6) {
        println!("  {}", line);
    }
}
