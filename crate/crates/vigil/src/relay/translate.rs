//! Netlist-to-kernel translation. The generated per-cycle body performs the
//! fixed-point settling unrolled to a bounded number of passes with an
//! early-out flag; if the budget is exhausted without a fixed point, every
//! output is written an invalid wire code so the platform drops into its
//! fail-safe state at the vital code check.
//!
//! Relay states live in one 8-bit wire-coded state variable each, so a RAM
//! corruption of a relay register is detected like any other store
//! divergence.

use thiserror::Error;

use crate::kernel::{
    BitOp, CmpOp, CyclicProgram, Expr, IoConfig, Span, Stmt, VarDecl, VarKind, Width,
};

use super::netlist::{CircuitGraph, Netlist, NodeKind};

/// Ceiling on source-to-sink path expansion through junctions.
pub const PATH_CAP: usize = 10_000;

/// Invalid wire code written by the fail-safe branch.
const FAIL_CODE: u32 = 0x00;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TranslateError {
    #[error("E_TOO_MANY_IO {count} {kind}s exceed the {cap} available")]
    TooManyIo {
        kind: &'static str,
        count: usize,
        cap: usize,
    },
    #[error("E_PATH_EXPLOSION more than {cap} source-to-sink paths")]
    PathExplosion { cap: usize },
}

/// One elaborated current path: which source drives it, which contacts must
/// be closed, which coils it powers, and which output (if any) it feeds.
#[derive(Debug, Clone)]
struct Path {
    /// None for a positive terminal, Some(input index) for an input source.
    source_input: Option<usize>,
    /// (relay index, normally_open) pairs.
    contacts: Vec<(usize, bool)>,
    coils: Vec<usize>,
    /// Output index when the sink is a monitored output.
    sink_output: Option<usize>,
}

fn enumerate_paths(netlist: &Netlist, graph: &CircuitGraph) -> Result<Vec<Path>, TranslateError> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    for (i, e) in graph.edges.iter().enumerate() {
        adj[e.a].push(i);
        adj[e.b].push(i);
    }
    let mut paths = Vec::new();
    for &src in &graph.sources {
        let source_input = match &graph.nodes[src] {
            NodeKind::Input(name) => Some(netlist.inputs.iter().position(|i| i == name).unwrap()),
            _ => None,
        };
        let mut visited = vec![false; graph.nodes.len()];
        visited[src] = true;
        let mut stack: Vec<usize> = Vec::new();
        walk(
            netlist,
            graph,
            &adj,
            src,
            source_input,
            &mut visited,
            &mut stack,
            &mut paths,
        )?;
    }
    Ok(paths)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    netlist: &Netlist,
    graph: &CircuitGraph,
    adj: &[Vec<usize>],
    node: usize,
    source_input: Option<usize>,
    visited: &mut Vec<bool>,
    stack: &mut Vec<usize>,
    paths: &mut Vec<Path>,
) -> Result<(), TranslateError> {
    for &ei in &adj[node] {
        let edge = &graph.edges[ei];
        let next = if edge.a == node { edge.b } else { edge.a };
        if next == node || visited[next] {
            continue;
        }
        match &graph.nodes[next] {
            NodeKind::Neg | NodeKind::Output(_) => {
                stack.push(ei);
                let mut contacts = Vec::new();
                let mut coils = Vec::new();
                for &pe in stack.iter() {
                    for c in &graph.edges[pe].contacts {
                        contacts.push((c.relay, c.normally_open));
                    }
                    coils.extend(graph.edges[pe].coils.iter().copied());
                }
                let sink_output = match &graph.nodes[next] {
                    NodeKind::Output(name) => {
                        Some(netlist.outputs.iter().position(|o| o == name).unwrap())
                    }
                    _ => None,
                };
                paths.push(Path {
                    source_input,
                    contacts,
                    coils,
                    sink_output,
                });
                if paths.len() > PATH_CAP {
                    return Err(TranslateError::PathExplosion { cap: PATH_CAP });
                }
                stack.pop();
            }
            NodeKind::Junction(_) => {
                visited[next] = true;
                stack.push(ei);
                walk(
                    netlist,
                    graph,
                    adj,
                    next,
                    source_input,
                    visited,
                    stack,
                    paths,
                )?;
                stack.pop();
                visited[next] = false;
            }
            NodeKind::Pos | NodeKind::Input(_) => {}
        }
    }
    Ok(())
}

fn io_on() -> Expr {
    Expr::lit(crate::kernel::IO_ON as u32)
}

fn io_off() -> Expr {
    Expr::lit(crate::kernel::IO_OFF as u32)
}

fn eq(lhs: Expr, rhs: Expr) -> Expr {
    Expr::cmp(CmpOp::Eq, lhs, rhs)
}

/// Translate a parsed netlist. `max_iter` bounds the unrolled settling
/// passes; the direct evaluator with the same budget is the behavioral
/// reference.
pub fn translate_relay(
    netlist: &Netlist,
    max_iter: u32,
    io: IoConfig,
) -> Result<CyclicProgram, TranslateError> {
    assert!(max_iter >= 1, "max_iter must be at least 1");
    if netlist.inputs.len() > io.inputs as usize {
        return Err(TranslateError::TooManyIo {
            kind: "input",
            count: netlist.inputs.len(),
            cap: io.inputs as usize,
        });
    }
    if netlist.outputs.len() > io.outputs as usize {
        return Err(TranslateError::TooManyIo {
            kind: "output",
            count: netlist.outputs.len(),
            cap: io.outputs as usize,
        });
    }
    let graph = netlist.graph();
    let paths = enumerate_paths(netlist, &graph)?;

    let mut decls = Vec::new();
    for (i, name) in netlist.inputs.iter().enumerate() {
        decls.push(VarDecl {
            name: format!("i_{}", name),
            width: Width::W8,
            kind: VarKind::Input { pin: i as u8 + 1 },
            span: Span::none(),
        });
    }
    for (i, name) in netlist.outputs.iter().enumerate() {
        decls.push(VarDecl {
            name: format!("o_{}", name),
            width: Width::W8,
            kind: VarKind::Output { pin: i as u8 + 1 },
            span: Span::none(),
        });
    }
    for name in &netlist.relays {
        decls.push(VarDecl {
            name: format!("r_{}", name),
            width: Width::W8,
            kind: VarKind::State,
            span: Span::none(),
        });
    }

    // All relays start de-energized.
    let init = netlist
        .relays
        .iter()
        .map(|name| Stmt::assign(format!("r_{}", name), io_off()))
        .collect();

    let mut logic = Vec::new();

    // Latch each input as a 0/1 conduction bit once per cycle.
    for name in &netlist.inputs {
        logic.push(Stmt::local(format!("bi_{}", name), Width::W8, Expr::lit(0)));
        logic.push(Stmt::if_then(
            eq(Expr::var(format!("i_{}", name)), io_on()),
            vec![Stmt::assign(format!("bi_{}", name), Expr::lit(1))],
        ));
    }
    logic.push(Stmt::local("settled", Width::W8, Expr::lit(0)));

    // Conduction bit for one path, given contact-bit locals in scope.
    let path_expr = |netlist: &Netlist, path: &Path| -> Expr {
        let mut expr = match path.source_input {
            Some(i) => Expr::var(format!("bi_{}", netlist.inputs[i])),
            None => Expr::lit(1),
        };
        for &(relay, no) in &path.contacts {
            let bit = if no {
                format!("no_{}", netlist.relays[relay])
            } else {
                format!("nc_{}", netlist.relays[relay])
            };
            expr = Expr::bit(BitOp::And, expr, Expr::var(bit));
        }
        expr
    };

    // Contact-bit block shared by settle passes and output evaluation.
    let contact_bits = |netlist: &Netlist| -> Vec<Stmt> {
        let mut out = Vec::new();
        for name in &netlist.relays {
            out.push(Stmt::local(format!("no_{}", name), Width::W8, Expr::lit(0)));
            out.push(Stmt::local(format!("nc_{}", name), Width::W8, Expr::lit(1)));
            out.push(Stmt::if_then(
                eq(Expr::var(format!("r_{}", name)), io_on()),
                vec![
                    Stmt::assign(format!("no_{}", name), Expr::lit(1)),
                    Stmt::assign(format!("nc_{}", name), Expr::lit(0)),
                ],
            ));
        }
        out
    };

    for _pass in 0..max_iter {
        let mut body = contact_bits(netlist);
        // Next state of each relay: OR over the paths powering its coil.
        for (ri, name) in netlist.relays.iter().enumerate() {
            let mut expr = Expr::lit(0);
            for path in paths.iter().filter(|p| p.coils.contains(&ri)) {
                expr = Expr::bit(BitOp::Or, expr, path_expr(netlist, path));
            }
            body.push(Stmt::local(format!("pw_{}", name), Width::W8, expr));
        }
        // A sweep that changes nothing is the fixed point.
        let mut changed = Expr::lit(0);
        for name in &netlist.relays {
            changed = Expr::bit(
                BitOp::Or,
                changed,
                Expr::bit(
                    BitOp::Xor,
                    Expr::var(format!("pw_{}", name)),
                    Expr::var(format!("no_{}", name)),
                ),
            );
        }
        body.push(Stmt::local("delta", Width::W8, changed));
        body.push(Stmt::if_then(
            eq(Expr::var("delta"), Expr::lit(0)),
            vec![Stmt::assign("settled", Expr::lit(1))],
        ));
        for name in &netlist.relays {
            body.push(Stmt::if_else(
                eq(Expr::var(format!("pw_{}", name)), Expr::lit(1)),
                vec![Stmt::assign(format!("r_{}", name), io_on())],
                vec![Stmt::assign(format!("r_{}", name), io_off())],
            ));
        }
        logic.push(Stmt::if_then(eq(Expr::var("settled"), Expr::lit(0)), body));
    }

    // Outputs from the settled state, or the fail-safe code when the budget
    // ran out without a fixed point.
    let mut settled_body = contact_bits(netlist);
    for (oi, name) in netlist.outputs.iter().enumerate() {
        let mut expr = Expr::lit(0);
        for path in paths.iter().filter(|p| p.sink_output == Some(oi)) {
            expr = Expr::bit(BitOp::Or, expr, path_expr(netlist, path));
        }
        settled_body.push(Stmt::local(format!("po_{}", name), Width::W8, expr));
        settled_body.push(Stmt::if_else(
            eq(Expr::var(format!("po_{}", name)), Expr::lit(1)),
            vec![Stmt::assign(format!("o_{}", name), io_on())],
            vec![Stmt::assign(format!("o_{}", name), io_off())],
        ));
    }
    let failsafe_body = netlist
        .outputs
        .iter()
        .map(|name| Stmt::assign(format!("o_{}", name), Expr::lit(FAIL_CODE)))
        .collect();
    logic.push(Stmt::if_else(
        eq(Expr::var("settled"), Expr::lit(1)),
        settled_body,
        failsafe_body,
    ));

    Ok(CyclicProgram {
        decls,
        init,
        logic,
        io,
    })
}
