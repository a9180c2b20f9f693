//! Direct electrical evaluation of a netlist: repeated re-evaluation of
//! strand conductivity and relay states until nothing changes. This is the
//! oracle the generated kernel code is checked against.
//!
//! One evaluation sweep explores, per live source, every simple path to a
//! sink over closed contacts (branching at junctions); every coil on a
//! conducting path is powered. A strand conducts only if every contact on
//! it is closed. The sweep is synchronous: all relays update from the same
//! previous state, so strand processing order cannot affect the result.

use std::collections::BTreeMap;

use super::netlist::{CircuitGraph, Netlist, NodeKind};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CircuitState {
    pub relay_active: BTreeMap<String, bool>,
    pub input_on: BTreeMap<String, bool>,
}

impl CircuitState {
    /// All relays de-energized (the rest state gravity gives the contacts).
    pub fn all_inactive(netlist: &Netlist) -> CircuitState {
        CircuitState {
            relay_active: netlist.relays.iter().map(|r| (r.clone(), false)).collect(),
            input_on: netlist.inputs.iter().map(|i| (i.clone(), false)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SettleResult {
    /// Two consecutive sweeps agreed after `iterations` sweeps.
    FixedPoint {
        state: CircuitState,
        iterations: u32,
    },
    /// No agreement within the iteration budget.
    Oscillation,
}

/// Relay states as a bool vector in declaration order.
fn relay_bits(netlist: &Netlist, state: &CircuitState) -> Vec<bool> {
    netlist
        .relays
        .iter()
        .map(|r| *state.relay_active.get(r).unwrap_or(&false))
        .collect()
}

/// One synchronous sweep: which relays are powered given the current
/// contact positions, and which outputs see current.
fn sweep(
    graph: &CircuitGraph,
    netlist: &Netlist,
    relays: &[bool],
    inputs: &BTreeMap<String, bool>,
) -> (Vec<bool>, Vec<bool>) {
    let mut powered = vec![false; netlist.relays.len()];
    let mut outputs = vec![false; netlist.outputs.len()];
    let closed = |contact: &super::netlist::EdgeContact| -> bool {
        relays[contact.relay] == contact.normally_open
    };
    // Adjacency: edge indices per node.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    for (i, e) in graph.edges.iter().enumerate() {
        adj[e.a].push(i);
        adj[e.b].push(i);
    }
    for &src in &graph.sources {
        if let NodeKind::Input(name) = &graph.nodes[src] {
            if !inputs.get(name).copied().unwrap_or(false) {
                continue;
            }
        }
        // Depth-first exploration of simple paths from this live source.
        let mut visited = vec![false; graph.nodes.len()];
        visited[src] = true;
        let mut path_edges: Vec<usize> = Vec::new();
        dfs(
            graph,
            &adj,
            src,
            &mut visited,
            &mut path_edges,
            &closed,
            &mut powered,
            &mut outputs,
            netlist,
        );
    }
    (powered, outputs)
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    graph: &CircuitGraph,
    adj: &[Vec<usize>],
    node: usize,
    visited: &mut Vec<bool>,
    path_edges: &mut Vec<usize>,
    closed: &dyn Fn(&super::netlist::EdgeContact) -> bool,
    powered: &mut [bool],
    outputs: &mut [bool],
    netlist: &Netlist,
) {
    for &ei in &adj[node] {
        let edge = &graph.edges[ei];
        let next = if edge.a == node { edge.b } else { edge.a };
        if next == node || visited[next] {
            continue;
        }
        if !edge.contacts.iter().all(closed) {
            continue;
        }
        let kind = &graph.nodes[next];
        match kind {
            NodeKind::Neg | NodeKind::Output(_) => {
                // Complete conducting path: power every coil along it.
                path_edges.push(ei);
                for &pe in path_edges.iter() {
                    for &coil in &graph.edges[pe].coils {
                        powered[coil] = true;
                    }
                }
                if let NodeKind::Output(name) = kind {
                    let idx = netlist.outputs.iter().position(|o| o == name).unwrap();
                    outputs[idx] = true;
                }
                path_edges.pop();
            }
            NodeKind::Junction(_) => {
                visited[next] = true;
                path_edges.push(ei);
                dfs(
                    graph, adj, next, visited, path_edges, closed, powered, outputs, netlist,
                );
                path_edges.pop();
                visited[next] = false;
            }
            // Another source: current does not flow through a source.
            NodeKind::Pos | NodeKind::Input(_) => {}
        }
    }
}

/// Iterate sweeps from `prev` until a fixed point (two consecutive sweeps
/// agree) or the budget runs out.
pub fn settle(
    netlist: &Netlist,
    inputs: &BTreeMap<String, bool>,
    prev: &CircuitState,
    max_iter: u32,
) -> SettleResult {
    assert!(max_iter >= 1, "max_iter must be at least 1");
    let graph = netlist.graph();
    let mut current = relay_bits(netlist, prev);
    for iteration in 1..=max_iter {
        let (next, _) = sweep(&graph, netlist, &current, inputs);
        if next == current {
            let state = CircuitState {
                relay_active: netlist
                    .relays
                    .iter()
                    .cloned()
                    .zip(current.iter().copied())
                    .collect(),
                input_on: inputs.clone(),
            };
            return SettleResult::FixedPoint {
                state,
                iterations: iteration,
            };
        }
        current = next;
    }
    SettleResult::Oscillation
}

/// Output levels for a settled state.
pub fn eval_outputs(
    netlist: &Netlist,
    state: &CircuitState,
    inputs: &BTreeMap<String, bool>,
) -> BTreeMap<String, bool> {
    let graph = netlist.graph();
    let relays = relay_bits(netlist, state);
    let (_, outputs) = sweep(&graph, netlist, &relays, inputs);
    netlist.outputs.iter().cloned().zip(outputs).collect()
}

/// Default per-cycle iteration budget: twice the state count of the relay
/// set, capped at 1024.
pub fn default_max_iter(relay_count: usize) -> u32 {
    if relay_count >= 9 {
        1024
    } else {
        2u32 << relay_count
    }
}
