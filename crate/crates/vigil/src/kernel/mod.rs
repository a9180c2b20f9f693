//! The restricted cyclic kernel language: AST, parser, printer, static
//! validator, and the reference interpreter used as the golden oracle for
//! both code-generation paths.

pub mod ast;
pub mod interp;
pub mod parse;
pub mod print;
pub mod validate;

pub use ast::{
    io_code_valid, BitOp, CmpOp, CyclicProgram, Expr, ExprKind, IoConfig, LogicOp, ModOp, PlainOp,
    Span, Stmt, StmtKind, VarDecl, VarKind, Width, IO_OFF, IO_ON,
};
pub use interp::{eval_mod, CycleError, VarStore};
pub use parse::{parse_program, parse_program_with_io, ParseError};
pub use print::to_source;
pub use validate::{
    resolve, validate, ErrorCode, RExpr, RStmt, Resolved, ValidationReport, VarInfo,
};

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_program() -> CyclicProgram {
        parse_program(
            "INPUTS\n    input1 : u8 pin 1\nOUTPUTS\n    output1 : u8 pin 1\nLOGIC\n    output1 := input1\n",
        )
        .unwrap()
    }

    #[test]
    fn eval_mod_examples() {
        assert_eq!(eval_mod(ModOp::Add, Width::W8, 200, 100), 44);
        assert_eq!(eval_mod(ModOp::Sub, Width::W8, 0, 1), 255);
        // 90000 mod 65536, frozen from the big-integer oracle in
        // tests/oracles.rs.
        assert_eq!(eval_mod(ModOp::Mul, Width::W16, 300, 300), 24464);
    }

    #[test]
    fn validate_rejects_plain_arithmetic() {
        let p = parse_program("STATE\n    a : u8\n    b : u8\n    x : u8\nLOGIC\n    x := a + b\n")
            .unwrap();
        let report = validate(&p);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, ErrorCode::EOverflowOp);
        assert_eq!(report.errors[0].row, 6);
    }

    #[test]
    fn validate_accepts_empty_logic() {
        let p = parse_program("LOGIC\n").unwrap();
        assert!(validate(&p).is_ok());
    }

    #[test]
    fn validate_rejects_multi_condition_if() {
        let p = parse_program(
            "STATE\n    a : u8\n    b : u8\n    x : u8\nLOGIC\n    IF a = 1 AND b = 1\n        x := 1\n",
        )
        .unwrap();
        let report = validate(&p);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, ErrorCode::EMultiCond);
        assert_eq!(report.errors[0].row, 7);
    }

    #[test]
    fn validate_rejects_untyped_local() {
        let p = parse_program("LOGIC\n    t := 1\n").unwrap();
        let report = validate(&p);
        assert_eq!(report.errors[0].code, ErrorCode::EUntypedLocal);
        assert_eq!(report.errors[0].row, 8);

        let p = parse_program("STATE\n    x : u8\nLOGIC\n    x := t\n").unwrap();
        let report = validate(&p);
        assert_eq!(report.errors[0].code, ErrorCode::EUntypedLocal);
    }

    #[test]
    fn validate_local_scope_ends_with_block() {
        let p = parse_program(
            "STATE\n    x : u8\nLOGIC\n    IF x = 0\n        local t : u8 := 1\n    x := t\n",
        )
        .unwrap();
        let report = validate(&p);
        assert_eq!(report.errors[0].code, ErrorCode::EUntypedLocal);
    }

    #[test]
    fn validate_type_errors_carry_rows() {
        // Row 1: interface-level typing (non-u8 input).
        let p = parse_program("INPUTS\n    wide : u16 pin 1\nLOGIC\n").unwrap();
        let report = validate(&p);
        assert_eq!(report.errors[0].code, ErrorCode::EType);
        assert_eq!(report.errors[0].row, 1);

        // Row 3: implementation-level typing (width mismatch).
        let p = parse_program(
            "STATE\n    a : u8\n    b : u16\nLOGIC\n    a := add_mod8(a, 1)\n    b := a\n",
        )
        .unwrap();
        let report = validate(&p);
        assert_eq!(report.errors[0].code, ErrorCode::EType);
        assert_eq!(report.errors[0].row, 3);
    }

    #[test]
    fn validate_input_readonly_output_writeonly() {
        let p = parse_program(
            "INPUTS\n    i : u8 pin 1\nOUTPUTS\n    o : u8 pin 1\nLOGIC\n    i := IO_ON\n",
        )
        .unwrap();
        assert_eq!(validate(&p).errors[0].row, 3);

        let p = parse_program(
            "INPUTS\n    i : u8 pin 1\nOUTPUTS\n    o : u8 pin 1\nSTATE\n    s : u8\nLOGIC\n    s := o\n",
        )
        .unwrap();
        assert_eq!(validate(&p).errors[0].row, 3);

        // feedback() is the sanctioned read-back path.
        let p = parse_program(
            "INPUTS\n    i : u8 pin 1\nOUTPUTS\n    o : u8 pin 1\nSTATE\n    s : u8\nLOGIC\n    s := feedback(o)\n    o := i\n",
        )
        .unwrap();
        assert!(validate(&p).is_ok());
    }

    #[test]
    fn report_line_format() {
        let p = parse_program("STATE\n    a : u8\nLOGIC\n    a := a + 1\n").unwrap();
        let line = validate(&p).to_lines();
        assert!(line.starts_with("ROW6 E_OVERFLOW_OP 4:"), "got: {line}");
    }

    #[test]
    fn validator_collects_multiple_errors_in_order() {
        let p = parse_program(
            "STATE\n    a : u8\nLOGIC\n    a := a + 1\n    a := ghost\n    IF a = 1 AND a = 2\n        a := 3\n",
        )
        .unwrap();
        let report = validate(&p);
        let rows: Vec<u8> = report.errors.iter().map(|e| e.row).collect();
        assert_eq!(rows, vec![6, 8, 7]);
    }

    #[test]
    fn parser_handles_nested_else_and_hex_literals() {
        let src = "STATE\n    a : u8\n    b : u8\nLOGIC\n    IF a = 0x0F\n        IF b = 1\n            a := 1\n        ELSE\n            a := 2\n    ELSE\n        b := 0xAA\n";
        let p = parse_program(src).unwrap();
        assert!(validate(&p).is_ok());
        match &p.logic[0].kind {
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                assert_eq!(then_block.len(), 1);
                assert_eq!(else_block.len(), 1);
                match &then_block[0].kind {
                    StmtKind::If { else_block, .. } => assert_eq!(else_block.len(), 1),
                    other => panic!("inner IF expected, got {other:?}"),
                }
            }
            other => panic!("outer IF expected, got {other:?}"),
        }
    }

    #[test]
    fn parser_rejects_tabs_and_bad_indentation() {
        assert!(parse_program("LOGIC\n\tx := 1\n").is_err());
        assert!(parse_program("STATE\n    x : u8\nLOGIC\n    IF x = 0\n    x := 1\n").is_err());
        let err = parse_program("LOGIC\n    x := \n").unwrap_err();
        assert!(err.span.line >= 2);
    }

    #[test]
    fn interpret_identity_passthrough() {
        let r = resolve(&identity_program()).unwrap();
        let store = r.initial_store();
        let mut inputs = vec![IO_OFF; 20];
        inputs[0] = IO_ON;
        let (_, outputs) = r.run_cycle(&store, &inputs, 0).unwrap();
        assert_eq!(outputs[0], IO_ON);
    }

    #[test]
    fn interpret_vital_fault_on_invalid_output_code() {
        let p =
            parse_program("OUTPUTS\n    output1 : u8 pin 1\nLOGIC\n    output1 := 0x07\n").unwrap();
        let r = resolve(&p).unwrap();
        let store = r.initial_store();
        let err = r.run_cycle(&store, &[IO_OFF; 20], 0).unwrap_err();
        assert!(matches!(err, CycleError::VitalIoCode { value: 7, .. }));
    }

    #[test]
    fn interpret_counter_wraps_modularly() {
        let p = parse_program(
            "STATE\n    c : u8\nINIT\n    c := 255\nLOGIC\n    c := add_mod8(c, 1)\n",
        )
        .unwrap();
        let r = resolve(&p).unwrap();
        let mut store = r.initial_store();
        let inputs = vec![IO_OFF; 20];
        for _ in 0..2 {
            store = r.run_cycle(&store, &inputs, 0).unwrap().0;
        }
        let slot = r.slot_of("c").unwrap();
        assert_eq!(store.values[slot], 1);
    }

    #[test]
    fn interpret_since_and_tick() {
        let p = parse_program(
            "STATE\n    t0 : u32\n    e : u32\nLOGIC\n    e := since(t0)\n    t0 := get_ms_tick()\n",
        )
        .unwrap();
        let r = resolve(&p).unwrap();
        let mut store = r.initial_store();
        let inputs = vec![IO_OFF; 20];
        store = r.run_cycle(&store, &inputs, 40).unwrap().0;
        store = r.run_cycle(&store, &inputs, 95).unwrap().0;
        assert_eq!(store.values[r.slot_of("e").unwrap()], 55);
    }

    #[test]
    fn interpret_is_deterministic() {
        let p = parse_program(
            "INPUTS\n    i : u8 pin 1\nSTATE\n    acc : u16\nLOGIC\n    local t : u16 := 3\n    IF i = IO_ON\n        acc := add_mod16(acc, t)\n",
        )
        .unwrap();
        let r = resolve(&p).unwrap();
        let store = r.initial_store();
        let mut inputs = vec![IO_OFF; 20];
        inputs[0] = IO_ON;
        let a = r.run_cycle(&store, &inputs, 17).unwrap();
        let b = r.run_cycle(&store, &inputs, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_print_round_trip() {
        let src = "CONSTANTS\n    LIMIT : u16 = 1000\nINPUTS\n    btn : u8 pin 1\nOUTPUTS\n    lamp : u8 pin 1\nSTATE\n    count : u16\nINIT\n    count := 0\nLOGIC\n    IF btn = IO_ON\n        count := add_mod16(count, 1)\n        lamp := IO_ON\n    ELSE\n        lamp := IO_OFF\n";
        let p = parse_program(src).unwrap();
        let printed = to_source(&p);
        let reparsed = parse_program(&printed).unwrap();
        // Spans differ; compare through a second print.
        assert_eq!(printed, to_source(&reparsed));
        assert!(validate(&p).is_ok());
    }

    #[test]
    fn instruction_bound_is_static() {
        let p = parse_program(
            "STATE\n    x : u8\nLOGIC\n    IF x = 0\n        x := 1\n    ELSE\n        x := 2\n    x := add_mod8(x, 1)\n",
        )
        .unwrap();
        let r = resolve(&p).unwrap();
        assert_eq!(r.instruction_bound(), 4);
    }

    #[test]
    fn default_pin_assignment_is_sequential() {
        let p =
            parse_program("INPUTS\n    a : u8\n    b : u8\n    c : u8 pin 7\n    d : u8\nLOGIC\n")
                .unwrap();
        let r = resolve(&p).unwrap();
        let pins: Vec<u8> = p
            .decls
            .iter()
            .map(|d| match d.kind {
                VarKind::Input { pin } => pin,
                _ => 0,
            })
            .collect();
        assert_eq!(pins, vec![1, 2, 7, 8]);
        assert_eq!(r.input_pins.len(), 4);
    }
}
