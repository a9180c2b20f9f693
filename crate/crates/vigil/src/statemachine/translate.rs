//! State-machine-to-kernel translation, following the standard control flow
//! for cycle-bound machines: on the very first execution the machine runs
//! its initial model cycle immediately; afterwards a machine cycle runs only
//! when the elapsed time since the last one reaches `cycle_def × cycle_unit`
//! milliseconds, measured with the millisecond tick. Every machine cycle is
//! preceded by a reset of the machine's operation outputs; board cycles in
//! between leave all output registers untouched.
//!
//! Clocks are stored tick values: a reset stores the current tick, a guard
//! compares the elapsed time against a constant-folded threshold.

use std::collections::BTreeMap;

use crate::kernel::{
    CmpOp, CyclicProgram, Expr, ExprKind, IoConfig, ModOp, Span, Stmt, VarDecl, VarKind, Width,
    IO_OFF, IO_ON,
};

use super::model::{Action, GuardAtom, StateMachine};
use super::normalize::{normalize, NormalizedMachine};
use super::pinmap::{check_pinmap, PinMap};
use super::SmError;

fn io_on() -> Expr {
    Expr::lit(IO_ON as u32)
}

fn io_off() -> Expr {
    Expr::lit(IO_OFF as u32)
}

fn eq(lhs: Expr, rhs: Expr) -> Expr {
    Expr::cmp(CmpOp::Eq, lhs, rhs)
}

/// Little-endian bits of `value` across `width` positions.
pub(crate) fn bits_lsb_first(value: u64, width: usize) -> Vec<bool> {
    (0..width).map(|i| value & (1 << i) != 0).collect()
}

/// Check the chosen constant values against the machine's range predicates.
fn check_constants(
    machines: &[StateMachine],
    values: &BTreeMap<String, i64>,
) -> Result<(), SmError> {
    for m in machines {
        for decl in &m.constants {
            let value = values
                .get(&decl.name)
                .copied()
                .ok_or_else(|| SmError::ConstMissing {
                    name: decl.name.clone(),
                })?;
            if value < decl.lo || value > decl.hi {
                return Err(SmError::ConstRange {
                    name: decl.name.clone(),
                    value,
                    lo: decl.lo,
                    hi: decl.hi,
                });
            }
        }
    }
    Ok(())
}

struct MachineCtx<'a> {
    sm: &'a StateMachine,
    norm: NormalizedMachine,
    prefix: String,
}

/// Translate one or more machines into a single cyclic program. Multiple
/// machines run round-robin in one body with independent timers.
pub fn translate_sm(
    machines: &[StateMachine],
    cycle_unit_ms: u32,
    const_values: &BTreeMap<String, i64>,
    pins: &PinMap,
    io: IoConfig,
) -> Result<CyclicProgram, SmError> {
    assert!(cycle_unit_ms >= 1, "cycle unit must be at least 1 ms");
    check_constants(machines, const_values)?;
    check_pinmap(machines, pins, io)?;

    let mut ctxs = Vec::with_capacity(machines.len());
    for sm in machines {
        let norm = normalize(sm)?;
        if norm.states.len() > 250 {
            return Err(SmError::TooManyStates {
                machine: sm.name.clone(),
            });
        }
        check_no_duplicate_calls(&norm)?;
        ctxs.push(MachineCtx {
            sm,
            norm,
            prefix: sm.name.clone(),
        });
    }

    let mut decls = Vec::new();
    let mut init = Vec::new();

    // Inputs and outputs, pin-mapped.
    for ctx in &ctxs {
        for input in &ctx.sm.inputs {
            decls.push(VarDecl {
                name: format!("i_{}", input),
                width: Width::W8,
                kind: VarKind::Input {
                    pin: pins.inputs[input],
                },
                span: Span::none(),
            });
        }
        for op in &ctx.sm.operations {
            let op_pins = &pins.ops[&op.name];
            decls.push(VarDecl {
                name: format!("o_{}", op.name),
                width: Width::W8,
                kind: VarKind::Output {
                    pin: op_pins.invoke,
                },
                span: Span::none(),
            });
            for (arg, arg_pins) in op.args.iter().zip(op_pins.args.iter()) {
                for (bit, &pin) in arg_pins.pins.iter().enumerate() {
                    decls.push(VarDecl {
                        name: format!("o_{}_{}_{}", op.name, arg.name, bit),
                        width: Width::W8,
                        kind: VarKind::Output { pin },
                        span: Span::none(),
                    });
                }
            }
        }
    }

    // Durations and clock thresholds become named constants.
    let mut threshold_names: BTreeMap<(usize, usize, usize), String> = BTreeMap::new();
    for (mi, ctx) in ctxs.iter().enumerate() {
        let duration = ctx.sm.cycle_def as u64 * cycle_unit_ms as u64;
        let duration = u32::try_from(duration).map_err(|_| SmError::ConstEval {
            message: format!("cycle duration overflows for machine '{}'", ctx.sm.name),
        })?;
        decls.push(VarDecl {
            name: format!("k_{}_cycle_ms", ctx.prefix),
            width: Width::W32,
            kind: VarKind::Const { value: duration },
            span: Span::none(),
        });
        for (ti, t) in ctx.norm.transitions.iter().enumerate() {
            for (ai, atom) in t.guard.iter().enumerate() {
                if let GuardAtom::Clock { threshold, .. } = atom {
                    let model_units = threshold.eval(const_values)?;
                    let ms = model_units.max(0) as u64 * cycle_unit_ms as u64;
                    let ms = u32::try_from(ms).map_err(|_| SmError::ConstEval {
                        message: format!("clock threshold overflows: {}", model_units),
                    })?;
                    let name = format!("k_{}_thr_{}_{}", ctx.prefix, ti, ai);
                    decls.push(VarDecl {
                        name: name.clone(),
                        width: Width::W32,
                        kind: VarKind::Const { value: ms },
                        span: Span::none(),
                    });
                    threshold_names.insert((mi, ti, ai), name);
                }
            }
        }
    }

    // Control state.
    decls.push(VarDecl {
        name: "s_first".into(),
        width: Width::W8,
        kind: VarKind::State,
        span: Span::none(),
    });
    init.push(Stmt::assign("s_first", Expr::lit(1)));
    for ctx in &ctxs {
        for (name, width) in [
            (format!("s_{}_state", ctx.prefix), Width::W8),
            (format!("s_{}_timer", ctx.prefix), Width::W32),
            (format!("s_{}_cycles", ctx.prefix), Width::W32),
        ] {
            decls.push(VarDecl {
                name: name.clone(),
                width,
                kind: VarKind::State,
                span: Span::none(),
            });
            init.push(Stmt::assign(name, Expr::lit(0)));
        }
        for clock in &ctx.sm.clocks {
            let name = format!("s_{}_clk_{}", ctx.prefix, clock);
            decls.push(VarDecl {
                name: name.clone(),
                width: Width::W32,
                kind: VarKind::State,
                span: Span::none(),
            });
            init.push(Stmt::assign(name, Expr::lit(0)));
        }
        for op in &ctx.sm.operations {
            init.push(Stmt::assign(format!("o_{}", op.name), io_off()));
            let op_pins = &pins.ops[&op.name];
            for (arg, arg_pins) in op.args.iter().zip(op_pins.args.iter()) {
                for bit in 0..arg_pins.pins.len() {
                    init.push(Stmt::assign(
                        format!("o_{}_{}_{}", op.name, arg.name, bit),
                        io_off(),
                    ));
                }
            }
        }
    }

    // First execution: run every machine's initial model cycle immediately.
    let mut first_block = vec![Stmt::assign("s_first", Expr::lit(0))];
    for (mi, ctx) in ctxs.iter().enumerate() {
        first_block.extend(reset_outputs(ctx, pins));
        first_block.extend(emit_actions(
            ctx,
            &ctx.norm.init_actions,
            const_values,
            pins,
        )?);
        first_block.push(Stmt::assign(
            format!("s_{}_state", ctx.prefix),
            Expr::lit(0),
        ));
        first_block.extend(cycle_bookkeeping(ctx));
        let _ = mi;
    }

    // Steady state: each machine steps when its own timer expires.
    let mut else_block = Vec::new();
    for (mi, ctx) in ctxs.iter().enumerate() {
        let elapsed = format!("el_{}", ctx.prefix);
        else_block.push(Stmt::local(
            elapsed.clone(),
            Width::W32,
            Expr::since(Expr::var(format!("s_{}_timer", ctx.prefix))),
        ));
        let mut step = Vec::new();
        step.extend(reset_outputs(ctx, pins));
        let cur = format!("cur_{}", ctx.prefix);
        let fired = format!("fired_{}", ctx.prefix);
        step.push(Stmt::local(
            cur.clone(),
            Width::W8,
            Expr::var(format!("s_{}_state", ctx.prefix)),
        ));
        step.push(Stmt::local(fired.clone(), Width::W8, Expr::lit(0)));
        for (ti, t) in ctx.norm.transitions.iter().enumerate() {
            // Guard value into a local, then a first-match fire block.
            let g = format!("g_{}_{}", ctx.prefix, ti);
            step.push(Stmt::local(g.clone(), Width::W8, Expr::lit(0)));
            let mut cond_body = vec![Stmt::assign(g.clone(), Expr::lit(1))];
            for (ai, atom) in t.guard.iter().enumerate().rev() {
                let cond = atom_condition(ctx, mi, ti, ai, atom, &threshold_names);
                cond_body = vec![Stmt::if_then(cond, cond_body)];
            }
            let mut guard_eval = vec![Stmt::if_then(
                eq(Expr::var(cur.clone()), Expr::lit(t.from as u32)),
                cond_body,
            )];
            step.append(&mut guard_eval);
            let mut fire = vec![Stmt::assign(fired.clone(), Expr::lit(1))];
            fire.extend(emit_actions(ctx, &t.actions, const_values, pins)?);
            fire.push(Stmt::assign(
                format!("s_{}_state", ctx.prefix),
                Expr::lit(t.to as u32),
            ));
            step.push(Stmt::if_then(
                eq(Expr::var(fired.clone()), Expr::lit(0)),
                vec![Stmt::if_then(eq(Expr::var(g), Expr::lit(1)), fire)],
            ));
        }
        step.extend(cycle_bookkeeping(ctx));
        else_block.push(Stmt::if_then(
            Expr::cmp(
                CmpOp::Ge,
                Expr::var(elapsed),
                Expr::var(format!("k_{}_cycle_ms", ctx.prefix)),
            ),
            step,
        ));
    }

    let logic = vec![Stmt::if_else(
        eq(Expr::var("s_first"), Expr::lit(1)),
        first_block,
        else_block,
    )];

    Ok(CyclicProgram {
        decls,
        init,
        logic,
        io,
    })
}

fn cycle_bookkeeping(ctx: &MachineCtx<'_>) -> Vec<Stmt> {
    vec![
        Stmt::assign(
            format!("s_{}_timer", ctx.prefix),
            Expr::new(ExprKind::GetMsTick, Span::none()),
        ),
        Stmt::assign(
            format!("s_{}_cycles", ctx.prefix),
            Expr::mod_arith(
                ModOp::Add,
                Width::W32,
                Expr::var(format!("s_{}_cycles", ctx.prefix)),
                Expr::lit(1),
            ),
        ),
    ]
}

fn reset_outputs(ctx: &MachineCtx<'_>, pins: &PinMap) -> Vec<Stmt> {
    let mut out = Vec::new();
    for op in &ctx.sm.operations {
        out.push(Stmt::assign(format!("o_{}", op.name), io_off()));
        let op_pins = &pins.ops[&op.name];
        for (arg, arg_pins) in op.args.iter().zip(op_pins.args.iter()) {
            for bit in 0..arg_pins.pins.len() {
                out.push(Stmt::assign(
                    format!("o_{}_{}_{}", op.name, arg.name, bit),
                    io_off(),
                ));
            }
        }
    }
    out
}

fn atom_condition(
    ctx: &MachineCtx<'_>,
    mi: usize,
    ti: usize,
    ai: usize,
    atom: &GuardAtom,
    threshold_names: &BTreeMap<(usize, usize, usize), String>,
) -> Expr {
    match atom {
        GuardAtom::Input { name, on } => eq(
            Expr::var(format!("i_{}", name)),
            if *on { io_on() } else { io_off() },
        ),
        GuardAtom::Clock { clock, op, .. } => Expr::cmp(
            *op,
            Expr::since(Expr::var(format!("s_{}_clk_{}", ctx.prefix, clock))),
            Expr::var(threshold_names[&(mi, ti, ai)].clone()),
        ),
    }
}

fn emit_actions(
    ctx: &MachineCtx<'_>,
    actions: &[Action],
    const_values: &BTreeMap<String, i64>,
    pins: &PinMap,
) -> Result<Vec<Stmt>, SmError> {
    let mut out = Vec::new();
    for action in actions {
        match action {
            Action::ResetClock(clock) => out.push(Stmt::assign(
                format!("s_{}_clk_{}", ctx.prefix, clock),
                Expr::new(ExprKind::GetMsTick, Span::none()),
            )),
            Action::Call { op, args } => {
                let decl = ctx.sm.operation(op).expect("validated at parse");
                let op_pins = &pins.ops[op];
                out.push(Stmt::assign(format!("o_{}", op), io_on()));
                for ((arg_decl, arg_pins), expr) in
                    decl.args.iter().zip(op_pins.args.iter()).zip(args.iter())
                {
                    let value = expr.eval(const_values)?;
                    if value < arg_decl.lo || value > arg_decl.hi {
                        return Err(SmError::ConstRange {
                            name: format!("{}.{}", op, arg_decl.name),
                            value,
                            lo: arg_decl.lo,
                            hi: arg_decl.hi,
                        });
                    }
                    if value as u64 >= (1u64 << arg_pins.pins.len()) {
                        return Err(SmError::PinOverflow {
                            message: format!(
                                "value {} of argument '{}' does not fit {} pins",
                                value,
                                arg_decl.name,
                                arg_pins.pins.len()
                            ),
                        });
                    }
                    for (bit, on) in bits_lsb_first(value as u64, arg_pins.pins.len())
                        .into_iter()
                        .enumerate()
                    {
                        out.push(Stmt::assign(
                            format!("o_{}_{}_{}", op, arg_decl.name, bit),
                            if on { io_on() } else { io_off() },
                        ));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Two calls to the same operation within one model cycle would need a
/// latching convention the platform does not define; reject them.
fn check_no_duplicate_calls(norm: &NormalizedMachine) -> Result<(), SmError> {
    let check = |actions: &[Action]| -> Result<(), SmError> {
        let mut seen = Vec::new();
        for action in actions {
            if let Action::Call { op, .. } = action {
                if seen.contains(&op) {
                    return Err(SmError::DupOpCall { op: op.clone() });
                }
                seen.push(op);
            }
        }
        Ok(())
    };
    check(&norm.init_actions)?;
    for t in &norm.transitions {
        check(&t.actions)?;
    }
    Ok(())
}
