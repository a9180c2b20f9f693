//! Two independent code-generation paths from the kernel to two distinct
//! bytecode ISAs, plus the linker producing the checksummed dual-binary
//! image. Diversity is by construction: different ISA (stack vs register
//! machine), different pipeline depth (direct emission vs three-address
//! lowering + register allocation), different data layout (declaration vs
//! alphabetical order at different base offsets).

pub mod crc;
pub mod exec;
pub mod image;
pub mod layout;
pub mod reg;
pub mod stack;

use thiserror::Error;

pub use crc::crc32;
pub use exec::{run_cycle_reg, run_cycle_stack, ExecFault};
pub use image::{
    link, ImageFormatError, LinkError, MemoryLayoutConfig, ProgramImage, Segment, SymKind,
    SymbolEntry, IMAGE_MAGIC, IMAGE_VERSION,
};
pub use layout::{DataLayout, LayoutEntry};
pub use reg::{compile_b, BytecodeB};
pub use stack::{compile_a, BytecodeA};

/// Emit-time bound on the path-A evaluation stack.
pub const STACK_LIMIT: u32 = 256;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CodegenError {
    #[error("E_STACK_BOUND evaluation stack depth {depth} exceeds limit {limit}")]
    StackBound { depth: u32, limit: u32 },
    #[error("data segment too large ({size} bytes)")]
    DataTooLarge { size: u32 },
    #[error("init block execution failed: {0}")]
    InitExec(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{parse_program, resolve, CmpOp, Resolved, VarStore, IO_OFF, IO_ON};

    fn build(src: &str) -> Resolved {
        resolve(&parse_program(src).unwrap()).unwrap()
    }

    /// Drives all three paths for `cycles` cycles with per-cycle inputs from
    /// `input_fn` and asserts every logical variable matches the interpreter
    /// every cycle.
    fn assert_differential(r: &Resolved, cycles: u32, mut input_fn: impl FnMut(u32) -> Vec<u8>) {
        let a = compile_a(r).expect("compile_a");
        let b = compile_b(r).expect("compile_b");
        let mut data_a = a.initial_data().unwrap();
        let mut data_b = b.initial_data().unwrap();
        let mut store = r.initial_store();
        for cycle in 0..cycles {
            let inputs = input_fn(cycle);
            let clock = cycle.wrapping_mul(5);
            for &(pin, slot) in &r.input_pins {
                let code = inputs[pin as usize - 1] as u32;
                let name = &r.vars[slot].name;
                a.layout.write(&mut data_a, name, code);
                b.layout.write(&mut data_b, name, code);
            }
            let (next, _) = r.run_cycle(&store, &inputs, clock).expect("interp");
            run_cycle_stack(&a.code, &mut data_a, clock).expect("vm a");
            run_cycle_reg(&b.code, &mut data_b, clock).expect("vm b");
            for var in &r.vars {
                let want = next.values[var.slot];
                let got_a = a.layout.read(&data_a, &var.name).unwrap();
                let got_b = b.layout.read(&data_b, &var.name).unwrap();
                assert_eq!(got_a, want, "path A, var {} cycle {}", var.name, cycle);
                assert_eq!(got_b, want, "path B, var {} cycle {}", var.name, cycle);
            }
            store = next;
        }
    }

    #[test]
    fn identity_program_body_is_three_instructions() {
        let r = build("INPUTS\n    input1 : u8 pin 1\nOUTPUTS\n    output1 : u8 pin 1\nLOGIC\n    output1 := input1\n");
        let a = compile_a(&r).unwrap();
        let listing = a.listing();
        // One load, one store, one cycle halt.
        assert_eq!(listing.lines().count(), 3, "listing:\n{listing}");
        assert!(listing.contains("LOAD8"));
        assert!(listing.contains("STORE8"));
        assert!(listing.contains("HALT"));
    }

    #[test]
    fn empty_logic_is_a_noop_cycle() {
        let r = build("LOGIC\n");
        let a = compile_a(&r).unwrap();
        let b = compile_b(&r).unwrap();
        assert_eq!(a.body_len(), 0);
        assert_eq!(b.body_len(), 0);
        let mut data_a = a.initial_data().unwrap();
        let before = data_a.clone();
        run_cycle_stack(&a.code, &mut data_a, 0).unwrap();
        assert_eq!(data_a, before);
    }

    #[test]
    fn counter_differential_1000_cycles() {
        let r = build("STATE\n    c : u8\n    wide : u32\nLOGIC\n    c := add_mod8(c, 1)\n    wide := add_mod32(wide, 2654435761)\n");
        assert_differential(&r, 1000, |_| vec![IO_OFF; 20]);
    }

    #[test]
    fn identity_differential_with_toggling_inputs() {
        let r = build("INPUTS\n    input1 : u8 pin 1\nOUTPUTS\n    output1 : u8 pin 1\nLOGIC\n    output1 := input1\n");
        assert_differential(&r, 64, |cycle| {
            let mut inputs = vec![IO_OFF; 20];
            if cycle % 3 == 0 {
                inputs[0] = IO_ON;
            }
            inputs
        });
    }

    #[test]
    fn branching_and_intrinsics_differential() {
        let r = build(
            "INPUTS\n    i : u8 pin 1\nOUTPUTS\n    o : u8 pin 1\nSTATE\n    t0 : u32\n    acc : u16\nLOGIC\n    local e : u32 := since(t0)\n    IF e >= 20\n        t0 := get_ms_tick()\n        acc := add_mod16(acc, 3)\n        IF i = IO_ON\n            o := IO_ON\n        ELSE\n            o := IO_OFF\n    ELSE\n        acc := acc\n",
        );
        assert_differential(&r, 200, |cycle| {
            let mut inputs = vec![IO_OFF; 20];
            if cycle % 7 < 3 {
                inputs[0] = IO_ON;
            }
            inputs
        });
    }

    #[test]
    fn bitwise_operators_differential() {
        let r = build(
            "STATE\n    a : u8\n    b : u8\n    x : u8\n    w : u16\nINIT\n    a := 3\nLOGIC\n    b := add_mod8(b, 7)\n    x := ((a & b) | (a ^ b))\n    w := ((add_mod16(w, 1) ^ 255) & 4095)\n    a := (x | 1)\n",
        );
        assert_differential(&r, 300, |_| vec![IO_OFF; 20]);
    }

    #[test]
    fn twelve_live_temporaries_spill_and_match() {
        // A right-nested chain keeps one operand alive per nesting level, so
        // 12 levels exceed the 8 registers and force spills.
        let mut src = String::from("STATE\n    sum : u8\n");
        for i in 0..12 {
            src.push_str(&format!("    v{} : u8\n", i));
        }
        src.push_str("INIT\n");
        for i in 0..12 {
            src.push_str(&format!("    v{} := {}\n", i, i + 1));
        }
        let mut rendered = String::from("v11");
        for i in (0..11).rev() {
            rendered = format!("add_mod8(v{}, {})", i, rendered);
        }
        src.push_str(&format!(
            "LOGIC\n    sum := {}\n    sum := add_mod8(sum, v0)\n",
            rendered
        ));
        let r = build(&src);
        let b = compile_b(&r).unwrap();
        assert!(b.spill_slots > 0, "expected spill slots");
        assert_differential(&r, 4, |_| vec![IO_OFF; 20]);
    }

    #[test]
    fn deep_nesting_exceeds_stack_bound() {
        use crate::kernel::{CyclicProgram, Expr, ModOp, Span, Stmt, VarDecl, VarKind, Width};
        let mut expr = Expr::var("v");
        for _ in 0..300 {
            expr = Expr::mod_arith(ModOp::Add, Width::W8, Expr::var("v"), expr);
        }
        let program = CyclicProgram {
            decls: vec![
                VarDecl {
                    name: "v".into(),
                    width: Width::W8,
                    kind: VarKind::State,
                    span: Span::none(),
                },
                VarDecl {
                    name: "out".into(),
                    width: Width::W8,
                    kind: VarKind::State,
                    span: Span::none(),
                },
            ],
            init: vec![],
            logic: vec![Stmt::assign("out", expr)],
            io: Default::default(),
        };
        let r = resolve(&program).unwrap();
        let err = compile_a(&r).unwrap_err();
        assert!(matches!(err, CodegenError::StackBound { .. }));
    }

    #[test]
    fn tac_stage_matches_interpreter() {
        use super::reg::{lower, Tac, TacBin};
        let r = build("STATE\n    x : u8\n    y : u8\nLOGIC\n    y := add_mod8(x, 3)\n    IF y = 4\n        x := add_mod8(x, 1)\n");
        let tac = lower(&r.logic);
        // Reference evaluation of the three-address form against the
        // interpreter, independent of register allocation.
        let mut store = r.initial_store();
        store.values[r.slot_of("x").unwrap()] = 1;
        let (want, _) = r.run_cycle(&store, &[IO_OFF; 20], 0).unwrap();
        let got = eval_tac(&tac.instrs, tac.temp_count, &store, &r);
        assert_eq!(got.values, want.values);

        fn eval_tac(instrs: &[Tac], temp_count: u32, store: &VarStore, r: &Resolved) -> VarStore {
            let mut store = store.clone();
            let mut temps = vec![0u32; temp_count as usize];
            let mut locals = vec![0u32; r.local_cells];
            let mut pc = 0usize;
            while pc < instrs.len() {
                match &instrs[pc] {
                    Tac::Imm { dst, value } => temps[*dst as usize] = *value,
                    Tac::ReadVar { dst, slot } => temps[*dst as usize] = store.values[*slot],
                    Tac::WriteVar { slot, src } => {
                        store.values[*slot] = temps[*src as usize] & r.vars[*slot].width.mask()
                    }
                    Tac::ReadLocal { dst, lslot, width } => {
                        temps[*dst as usize] = locals[*lslot] & width.mask()
                    }
                    Tac::WriteLocal { lslot, width, src } => {
                        locals[*lslot] = temps[*src as usize] & width.mask()
                    }
                    Tac::Bin {
                        dst,
                        op,
                        width,
                        a,
                        b,
                    } => {
                        let (a, b) = (temps[*a as usize], temps[*b as usize]);
                        temps[*dst as usize] = match op {
                            TacBin::ModAdd => a.wrapping_add(b),
                            TacBin::ModSub => a.wrapping_sub(b),
                            TacBin::ModMul => (a as u64).wrapping_mul(b as u64) as u32,
                            TacBin::And => a & b,
                            TacBin::Or => a | b,
                            TacBin::Xor => a ^ b,
                        } & width.mask();
                    }
                    Tac::Tick { dst } => temps[*dst as usize] = 0,
                    Tac::Since { dst, a } => {
                        temps[*dst as usize] = 0u32.wrapping_sub(temps[*a as usize])
                    }
                    Tac::BranchIfNot { op, a, b, target } => {
                        if !op.eval(temps[*a as usize], temps[*b as usize]) {
                            pc = find_label(instrs, *target);
                            continue;
                        }
                    }
                    Tac::Jump { target } => {
                        pc = find_label(instrs, *target);
                        continue;
                    }
                    Tac::Label { .. } => {}
                }
                pc += 1;
            }
            store
        }

        fn find_label(instrs: &[Tac], id: u32) -> usize {
            instrs
                .iter()
                .position(|i| matches!(i, Tac::Label { id: l } if *l == id))
                .unwrap()
        }
    }

    #[test]
    fn structural_diversity_for_nonempty_programs() {
        let samples = [
            "STATE\n    x : u8\nLOGIC\n    x := add_mod8(x, 1)\n",
            "INPUTS\n    i : u8 pin 1\nOUTPUTS\n    o : u8 pin 1\nLOGIC\n    o := i\n",
            // Declarations already in alphabetical order: layouts must still
            // differ thanks to path B's base pad.
            "STATE\n    aa : u8\n    bb : u8\nLOGIC\n    aa := add_mod8(bb, 1)\n",
        ];
        for src in samples {
            let r = build(src);
            let a = compile_a(&r).unwrap();
            let b = compile_b(&r).unwrap();
            assert_ne!(a.code, b.code, "instruction bytes must differ: {src}");
            if r.vars.len() >= 2 {
                let offsets_a: Vec<_> = r
                    .vars
                    .iter()
                    .map(|v| a.layout.offset_of(&v.name).unwrap().0)
                    .collect();
                let offsets_b: Vec<_> = r
                    .vars
                    .iter()
                    .map(|v| b.layout.offset_of(&v.name).unwrap().0)
                    .collect();
                assert_ne!(offsets_a, offsets_b, "data layouts must differ: {src}");
            }
        }
    }

    #[test]
    fn link_produces_disjoint_checksummed_image() {
        let r = build("INPUTS\n    i : u8 pin 1\nOUTPUTS\n    o : u8 pin 1\nLOGIC\n    o := i\n");
        let a = compile_a(&r).unwrap();
        let b = compile_b(&r).unwrap();
        let image = link(&a, &b, &MemoryLayoutConfig::default(), r.io).unwrap();
        image.verify_crcs().unwrap();
        assert_eq!(image.symbols.len(), 2);
        let sym = image.symbol("o").unwrap();
        assert_eq!(sym.kind, SymKind::Output);
        assert_eq!(sym.pin, Some(1));
    }

    #[test]
    fn link_rejects_overlapping_layout() {
        let r = build("STATE\n    x : u8\nLOGIC\n    x := add_mod8(x, 1)\n");
        let a = compile_a(&r).unwrap();
        let b = compile_b(&r).unwrap();
        let layout = MemoryLayoutConfig {
            code_a_base: 0x1000,
            data_a_base: 0x2000,
            code_b_base: 0x1000,
            data_b_base: 0x3000,
        };
        let err = link(&a, &b, &layout, r.io).unwrap_err();
        assert!(matches!(err, LinkError::MemOverlap { .. }));

        // dataA/dataB forced onto the same base.
        let layout = MemoryLayoutConfig {
            code_a_base: 0x1000,
            data_a_base: 0x2000,
            code_b_base: 0x4000,
            data_b_base: 0x2000,
        };
        let err = link(&a, &b, &layout, r.io).unwrap_err();
        assert!(matches!(err, LinkError::MemOverlap { .. }));
    }

    #[test]
    fn link_rejects_renamed_symbol() {
        let r1 = build("STATE\n    x : u8\nLOGIC\n    x := add_mod8(x, 1)\n");
        let r2 = build("STATE\n    y : u8\nLOGIC\n    y := add_mod8(y, 1)\n");
        let a = compile_a(&r1).unwrap();
        let b = compile_b(&r2).unwrap();
        let err = link(&a, &b, &MemoryLayoutConfig::default(), r1.io).unwrap_err();
        match err {
            LinkError::NameMismatch { detail } => {
                assert!(detail.contains('x') && detail.contains('y'), "{detail}");
            }
            other => panic!("expected NameMismatch, got {other:?}"),
        }
    }

    #[test]
    fn image_round_trips_and_is_deterministic() {
        let r = build("INPUTS\n    i : u8 pin 2\nOUTPUTS\n    o : u8 pin 3\nSTATE\n    s : u16\nINIT\n    s := 99\nLOGIC\n    o := i\n    s := add_mod16(s, 1)\n");
        let a = compile_a(&r).unwrap();
        let b = compile_b(&r).unwrap();
        let image = link(&a, &b, &MemoryLayoutConfig::default(), r.io).unwrap();
        let bytes = image.to_bytes();
        let reparsed = ProgramImage::from_bytes(&bytes).unwrap();
        assert_eq!(reparsed, image);
        reparsed.verify_crcs().unwrap();

        // INIT ran at link time: the data segments carry s = 99.
        let s = image.symbol("s").unwrap();
        assert_eq!(layout::read_at(&image.data_a.data, s.off_a, s.width), 99);
        assert_eq!(layout::read_at(&image.data_b.data, s.off_b, s.width), 99);

        // Same source, second build: byte-identical image.
        let a2 = compile_a(&r).unwrap();
        let b2 = compile_b(&r).unwrap();
        let image2 = link(&a2, &b2, &MemoryLayoutConfig::default(), r.io).unwrap();
        assert_eq!(image2.to_bytes(), bytes);
    }

    #[test]
    fn segment_crc_catches_any_single_byte_mutation() {
        let r = build(
            "STATE\n    x : u32\nINIT\n    x := 3735928559\nLOGIC\n    x := add_mod32(x, 1)\n",
        );
        let a = compile_a(&r).unwrap();
        let b = compile_b(&r).unwrap();
        let image = link(&a, &b, &MemoryLayoutConfig::default(), r.io).unwrap();
        for (name, seg) in image.segments() {
            for i in 0..seg.data.len() {
                let mut mutated = seg.data.clone();
                mutated[i] ^= 0x01;
                assert_ne!(crc32(&mutated), seg.crc, "segment {name} byte {i}");
            }
        }
    }

    #[test]
    fn hex_export_covers_all_segments() {
        let r = build("STATE\n    x : u8\nLOGIC\n    x := add_mod8(x, 1)\n");
        let a = compile_a(&r).unwrap();
        let b = compile_b(&r).unwrap();
        let image = link(&a, &b, &MemoryLayoutConfig::default(), r.io).unwrap();
        let hex = image.to_hex_text();
        assert!(hex.lines().all(|l| l.starts_with(':')));
        assert!(hex.ends_with(":00000001FF\n"));
        // Each record's bytes sum to zero modulo 256 (checksum property).
        for line in hex.lines() {
            let bytes: Vec<u8> = (1..line.len())
                .step_by(2)
                .map(|i| u8::from_str_radix(&line[i..i + 2], 16).unwrap())
                .collect();
            let sum: u8 = bytes.iter().fold(0u8, |a, &b| a.wrapping_add(b));
            assert_eq!(sum, 0, "record {line}");
        }
    }

    #[test]
    fn feedback_reads_output_register_in_both_paths() {
        let r = build("OUTPUTS\n    o : u8 pin 1\nSTATE\n    seen : u8\nLOGIC\n    seen := feedback(o)\n    o := IO_ON\n");
        assert_differential(&r, 3, |_| vec![IO_OFF; 20]);
    }

    #[test]
    fn sibling_blocks_reuse_local_cells_at_different_widths() {
        // The u32 local and the u8 local occupy the same scratch cell in
        // sibling branches; narrow reads must never see the wide residue.
        let r = build(
            "INPUTS\n    i : u8 pin 1\nSTATE\n    x : u32\n    y : u8\nLOGIC\n    IF i = IO_ON\n        local wide : u32 := 4027518713\n        x := wide\n    ELSE\n        local narrow : u8 := 9\n        y := narrow\n",
        );
        assert_eq!(r.local_cells, 1, "siblings share one cell");
        assert_differential(&r, 16, |cycle| {
            let mut inputs = vec![IO_OFF; 20];
            if cycle % 2 == 0 {
                inputs[0] = IO_ON;
            }
            inputs
        });
    }

    #[test]
    fn clock_intrinsics_wrap_at_u32_boundary() {
        let r = build("STATE\n    t0 : u32\n    e : u32\nLOGIC\n    e := since(t0)\n    t0 := get_ms_tick()\n");
        let a = compile_a(&r).unwrap();
        let b = compile_b(&r).unwrap();
        let mut data_a = a.initial_data().unwrap();
        let mut data_b = b.initial_data().unwrap();
        let mut store = r.initial_store();
        let inputs = vec![IO_OFF; 20];
        // Two cycles straddling the 49-day clock rollover.
        for clock in [u32::MAX - 3, 2u32] {
            let (next, _) = r.run_cycle(&store, &inputs, clock).unwrap();
            run_cycle_stack(&a.code, &mut data_a, clock).unwrap();
            run_cycle_reg(&b.code, &mut data_b, clock).unwrap();
            for var in &r.vars {
                assert_eq!(a.layout.read(&data_a, &var.name), Some(next.values[var.slot]));
                assert_eq!(b.layout.read(&data_b, &var.name), Some(next.values[var.slot]));
            }
            store = next;
        }
        // since() across the wrap: 2 - (u32::MAX - 3) wraps to 6.
        assert_eq!(store.values[r.slot_of("e").unwrap()], 6);
    }

    #[test]
    fn cmp_codes_round_trip() {
        for op in [
            CmpOp::Eq,
            CmpOp::Ne,
            CmpOp::Lt,
            CmpOp::Le,
            CmpOp::Gt,
            CmpOp::Ge,
        ] {
            assert_eq!(stack::cmp_from_code(stack::cmp_code(op)), Some(op));
        }
        assert_eq!(stack::cmp_from_code(6), None);
    }
}
