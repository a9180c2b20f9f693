//! Relay-circuit netlists (`.rly`): declared relays, switchable input
//! sources, monitored outputs, and strands — linear wire runs between
//! terminals, joined through named junction nodes.
//!
//! ```text
//! RELAYS
//!     BS
//!     CRR
//! INPUTS
//!     btn
//! OUTPUTS
//!     lamp
//! STRANDS
//!     P+ , no(BS) , nc(CRR) , coil(CFR) , N-
//!     in(btn) , coil(BS) , N-
//!     P+ , no(CRR) , out(lamp)
//! ```

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Element {
    /// Always-live positive terminal (`P+`, or any `name+`).
    Pos(String),
    /// Negative return terminal (`N-`, or any `name-`).
    Neg(String),
    /// Switchable source (`in(name)`).
    Input(String),
    /// Monitored sink (`out(name)`).
    Output(String),
    /// Relay electromagnet (`coil(name)`).
    Coil(String),
    /// `no(name)` closed while the relay is active; `nc(name)` closed while
    /// it is inactive.
    Contact { relay: String, normally_open: bool },
    /// Named junction (`node(name)`) shared across strands.
    Node(String),
}

impl Element {
    fn is_terminal(&self) -> bool {
        matches!(
            self,
            Element::Pos(_) | Element::Neg(_) | Element::Input(_) | Element::Output(_)
        )
    }

    fn is_anchor(&self) -> bool {
        self.is_terminal() || matches!(self, Element::Node(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strand {
    pub elements: Vec<Element>,
    pub line: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Netlist {
    pub relays: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub strands: Vec<Strand>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{code} line {line}: {message}")]
pub struct NetlistError {
    pub code: &'static str,
    pub line: u32,
    pub message: String,
}

impl NetlistError {
    fn new(code: &'static str, line: u32, message: impl Into<String>) -> Self {
        NetlistError {
            code,
            line,
            message: message.into(),
        }
    }
}

pub fn parse_netlist(text: &str) -> Result<Netlist, Vec<NetlistError>> {
    let mut netlist = Netlist::default();
    let mut errors = Vec::new();
    let mut section = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u32 + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indented = line.starts_with(' ');
        if !indented {
            match trimmed {
                "RELAYS" | "INPUTS" | "OUTPUTS" | "STRANDS" => section = Some(trimmed.to_string()),
                other => errors.push(NetlistError::new(
                    "E_SECTION",
                    line_no,
                    format!("unknown section '{}'", other),
                )),
            }
            continue;
        }
        match section.as_deref() {
            Some("RELAYS") => push_name(&mut netlist.relays, trimmed, line_no, &mut errors),
            Some("INPUTS") => push_name(&mut netlist.inputs, trimmed, line_no, &mut errors),
            Some("OUTPUTS") => push_name(&mut netlist.outputs, trimmed, line_no, &mut errors),
            Some("STRANDS") => match parse_strand(trimmed, line_no) {
                Ok(strand) => netlist.strands.push(strand),
                Err(e) => errors.push(e),
            },
            _ => errors.push(NetlistError::new(
                "E_SECTION",
                line_no,
                "content before any section header",
            )),
        }
    }
    validate(&netlist, &mut errors);
    if errors.is_empty() {
        Ok(netlist)
    } else {
        Err(errors)
    }
}

fn push_name(list: &mut Vec<String>, name: &str, line: u32, errors: &mut Vec<NetlistError>) {
    if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        errors.push(NetlistError::new(
            "E_NAME",
            line,
            format!("invalid name '{}'", name),
        ));
        return;
    }
    if list.iter().any(|n| n == name) {
        errors.push(NetlistError::new(
            "E_DUPLICATE_NAME",
            line,
            format!("'{}' declared twice", name),
        ));
        return;
    }
    list.push(name.to_string());
}

fn parse_strand(text: &str, line: u32) -> Result<Strand, NetlistError> {
    let mut elements = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(NetlistError::new("E_STRAND", line, "empty element"));
        }
        let element = if let Some(name) = part.strip_suffix('+') {
            Element::Pos(format!("{}+", name))
        } else if let Some(name) = part.strip_suffix('-') {
            Element::Neg(format!("{}-", name))
        } else if let Some(arg) = call_arg(part, "in") {
            Element::Input(arg)
        } else if let Some(arg) = call_arg(part, "out") {
            Element::Output(arg)
        } else if let Some(arg) = call_arg(part, "coil") {
            Element::Coil(arg)
        } else if let Some(arg) = call_arg(part, "no") {
            Element::Contact {
                relay: arg,
                normally_open: true,
            }
        } else if let Some(arg) = call_arg(part, "nc") {
            Element::Contact {
                relay: arg,
                normally_open: false,
            }
        } else if let Some(arg) = call_arg(part, "node") {
            Element::Node(arg)
        } else {
            return Err(NetlistError::new(
                "E_STRAND",
                line,
                format!("unknown element '{}'", part),
            ));
        };
        elements.push(element);
    }
    Ok(Strand { elements, line })
}

fn call_arg(text: &str, name: &str) -> Option<String> {
    let inner = text
        .strip_prefix(name)?
        .strip_prefix('(')?
        .strip_suffix(')')?;
    let inner = inner.trim();
    if inner.is_empty() {
        None
    } else {
        Some(inner.to_string())
    }
}

fn validate(netlist: &Netlist, errors: &mut Vec<NetlistError>) {
    // Cross-section duplicates.
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    for (kind, names) in [
        ("relay", &netlist.relays),
        ("input", &netlist.inputs),
        ("output", &netlist.outputs),
    ] {
        for name in names {
            if let Some(prev) = seen.insert(name, kind) {
                errors.push(NetlistError::new(
                    "E_DUPLICATE_NAME",
                    0,
                    format!("'{}' declared as both {} and {}", name, prev, kind),
                ));
            }
        }
    }
    for strand in &netlist.strands {
        if strand.elements.len() < 2 {
            errors.push(NetlistError::new(
                "E_DANGLING_STRAND",
                strand.line,
                "a strand needs at least two endpoints",
            ));
            continue;
        }
        let first = strand.elements.first().unwrap();
        let last = strand.elements.last().unwrap();
        for (i, el) in strand.elements.iter().enumerate() {
            let at_end = i == 0 || i == strand.elements.len() - 1;
            if at_end && !el.is_anchor() {
                errors.push(NetlistError::new(
                    "E_DANGLING_STRAND",
                    strand.line,
                    "strand endpoints must be source terminals, outputs or junctions",
                ));
            }
            if !at_end && el.is_terminal() {
                errors.push(NetlistError::new(
                    "E_DANGLING_STRAND",
                    strand.line,
                    "terminals may only appear at strand ends",
                ));
            }
            match el {
                Element::Coil(r) | Element::Contact { relay: r, .. } => {
                    if !netlist.relays.iter().any(|n| n == r) {
                        errors.push(NetlistError::new(
                            "E_UNKNOWN_RELAY",
                            strand.line,
                            format!("relay '{}' is not declared", r),
                        ));
                    }
                }
                Element::Input(n) => {
                    if !netlist.inputs.iter().any(|x| x == n) {
                        errors.push(NetlistError::new(
                            "E_UNKNOWN_NAME",
                            strand.line,
                            format!("input '{}' is not declared", n),
                        ));
                    }
                }
                Element::Output(n) if !netlist.outputs.iter().any(|x| x == n) => {
                    errors.push(NetlistError::new(
                        "E_UNKNOWN_NAME",
                        strand.line,
                        format!("output '{}' is not declared", n),
                    ));
                }
                _ => {}
            }
        }
        let _ = (first, last);
    }
}

// ---------------------------------------------------------------------------
// Graph form: strands split at junctions into edges between nodes.

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum NodeKind {
    Pos,
    Neg,
    Input(String),
    Output(String),
    Junction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct EdgeContact {
    pub relay: usize,
    pub normally_open: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Edge {
    pub a: usize,
    pub b: usize,
    pub contacts: Vec<EdgeContact>,
    pub coils: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct CircuitGraph {
    pub nodes: Vec<NodeKind>,
    pub edges: Vec<Edge>,
    /// Node indices that emit current: positive terminals and inputs.
    pub sources: Vec<usize>,
    /// Node indices that absorb it: negative terminals and outputs.
    pub sinks: Vec<usize>,
}

impl Netlist {
    pub fn relay_index(&self, name: &str) -> Option<usize> {
        self.relays.iter().position(|r| r == name)
    }

    pub(crate) fn graph(&self) -> CircuitGraph {
        let mut nodes: Vec<NodeKind> = Vec::new();
        let mut node_keys: Vec<String> = Vec::new();
        let mut edges = Vec::new();
        let intern = |nodes: &mut Vec<NodeKind>, node_keys: &mut Vec<String>, el: &Element| {
            let (key, kind) = match el {
                Element::Pos(_) => ("P+".to_string(), NodeKind::Pos),
                Element::Neg(_) => ("N-".to_string(), NodeKind::Neg),
                Element::Input(n) => (format!("in:{}", n), NodeKind::Input(n.clone())),
                Element::Output(n) => (format!("out:{}", n), NodeKind::Output(n.clone())),
                Element::Node(n) => (format!("node:{}", n), NodeKind::Junction(n.clone())),
                _ => unreachable!("only anchors are interned"),
            };
            match node_keys.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    node_keys.push(key);
                    nodes.push(kind);
                    nodes.len() - 1
                }
            }
        };
        for strand in &self.strands {
            let mut from: Option<usize> = None;
            let mut contacts = Vec::new();
            let mut coils = Vec::new();
            for el in &strand.elements {
                if el.is_anchor() {
                    let node = intern(&mut nodes, &mut node_keys, el);
                    if let Some(a) = from {
                        edges.push(Edge {
                            a,
                            b: node,
                            contacts: std::mem::take(&mut contacts),
                            coils: std::mem::take(&mut coils),
                        });
                    }
                    from = Some(node);
                } else {
                    match el {
                        Element::Coil(r) => {
                            coils.push(self.relay_index(r).expect("validated"));
                        }
                        Element::Contact {
                            relay,
                            normally_open,
                        } => contacts.push(EdgeContact {
                            relay: self.relay_index(relay).expect("validated"),
                            normally_open: *normally_open,
                        }),
                        _ => unreachable!(),
                    }
                }
            }
        }
        let sources = nodes
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k, NodeKind::Pos | NodeKind::Input(_)))
            .map(|(i, _)| i)
            .collect();
        let sinks = nodes
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k, NodeKind::Neg | NodeKind::Output(_)))
            .map(|(i, _)| i)
            .collect();
        CircuitGraph {
            nodes,
            edges,
            sources,
            sinks,
        }
    }
}

impl fmt::Display for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "netlist: {} relays, {} inputs, {} outputs, {} strands",
            self.relays.len(),
            self.inputs.len(),
            self.outputs.len(),
            self.strands.len()
        )
    }
}
