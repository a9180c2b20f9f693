//! Cyclic state machines (`.csm`): states with entry actions, transitions
//! that are either bound to the cycle boundary (`exec`) or timeless, guards
//! over input registers and clock comparisons, and operation calls whose
//! arguments are constant expressions.
//!
//! ```text
//! machine SimSMovement
//!     cycle 1
//!     const PI : 0..100
//!     const lv : 0..7
//!     const av : 0..7
//!     clock MBC
//!     input obstacle
//!     op move(lv_a : 0..7, av_a : 0..7)
//!     op stop()
//!     state SMoving entry move(lv, 0)
//!     state DMoving
//!     state STurning entry move(0, av)
//!     state DTurning
//!     initial -> SMoving
//!     SMoving -> DMoving
//!     DMoving -> STurning exec when obstacle do reset MBC ; stop()
//!     DTurning -> SMoving exec when MBC >= PI / av
//! ```
//!
//! A file may hold several `machine` blocks; they are composed round-robin
//! into one cyclic body with independent timers.

use std::collections::BTreeMap;

use crate::kernel::CmpOp;

use super::SmError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstDecl {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgDecl {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpDecl {
    pub name: String,
    pub args: Vec<ArgDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstExpr {
    Lit(i64),
    Const(String),
    Add(Box<ConstExpr>, Box<ConstExpr>),
    Sub(Box<ConstExpr>, Box<ConstExpr>),
    Mul(Box<ConstExpr>, Box<ConstExpr>),
    Div(Box<ConstExpr>, Box<ConstExpr>),
}

impl ConstExpr {
    pub fn eval(&self, consts: &BTreeMap<String, i64>) -> Result<i64, SmError> {
        Ok(match self {
            ConstExpr::Lit(v) => *v,
            ConstExpr::Const(name) => *consts
                .get(name)
                .ok_or_else(|| SmError::ConstMissing { name: name.clone() })?,
            ConstExpr::Add(a, b) => a.eval(consts)?.wrapping_add(b.eval(consts)?),
            ConstExpr::Sub(a, b) => a.eval(consts)?.wrapping_sub(b.eval(consts)?),
            ConstExpr::Mul(a, b) => a.eval(consts)?.wrapping_mul(b.eval(consts)?),
            ConstExpr::Div(a, b) => {
                let d = b.eval(consts)?;
                if d == 0 {
                    return Err(SmError::ConstEval {
                        message: "division by zero in constant expression".into(),
                    });
                }
                a.eval(consts)? / d
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GuardAtom {
    /// Input register equal (or not) to the on code.
    Input { name: String, on: bool },
    /// Time since the clock's last reset, in model time units, compared to
    /// a constant expression.
    Clock {
        clock: String,
        op: CmpOp,
        threshold: ConstExpr,
    },
}

impl GuardAtom {
    /// The atom's logical negation.
    pub fn negate(&self) -> GuardAtom {
        match self {
            GuardAtom::Input { name, on } => GuardAtom::Input {
                name: name.clone(),
                on: !on,
            },
            GuardAtom::Clock {
                clock,
                op,
                threshold,
            } => GuardAtom::Clock {
                clock: clock.clone(),
                op: op.negate(),
                threshold: threshold.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Call { op: String, args: Vec<ConstExpr> },
    ResetClock(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub src: String,
    pub dst: String,
    pub exec: bool,
    pub guard: Vec<GuardAtom>,
    pub actions: Vec<Action>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateDecl {
    pub name: String,
    pub entry: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMachine {
    pub name: String,
    /// Model-cycle multiplier: the machine steps every
    /// `cycle_def × cycle_unit` milliseconds.
    pub cycle_def: u32,
    pub constants: Vec<ConstDecl>,
    pub clocks: Vec<String>,
    pub inputs: Vec<String>,
    pub operations: Vec<OpDecl>,
    pub states: Vec<StateDecl>,
    pub initial_target: String,
    pub initial_actions: Vec<Action>,
    pub transitions: Vec<Transition>,
}

impl StateMachine {
    pub fn state(&self, name: &str) -> Option<&StateDecl> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn operation(&self, name: &str) -> Option<&OpDecl> {
        self.operations.iter().find(|o| o.name == name)
    }

    pub fn timeless_from(&self, state: &str) -> Vec<&Transition> {
        self.transitions
            .iter()
            .filter(|t| !t.exec && t.src == state)
            .collect()
    }

    pub fn exec_from(&self, state: &str) -> Vec<(usize, &Transition)> {
        self.transitions
            .iter()
            .filter(|t| t.exec)
            .enumerate()
            .map(|(k, t)| (k + 1, t))
            .filter(|(_, t)| t.src == state)
            .collect()
    }

    /// Exec transitions in declaration order, 1-based.
    pub fn exec_transitions(&self) -> Vec<(usize, &Transition)> {
        self.transitions
            .iter()
            .filter(|t| t.exec)
            .enumerate()
            .map(|(k, t)| (k + 1, t))
            .collect()
    }
}

pub fn parse_machines(text: &str) -> Result<Vec<StateMachine>, SmError> {
    let mut machines: Vec<StateMachine> = Vec::new();
    let mut current: Option<StateMachine> = None;
    let mut saw_initial = false;
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
        if !line.starts_with(' ') {
            let name = trimmed
                .strip_prefix("machine ")
                .ok_or_else(|| parse_err(line_no, "expected 'machine <name>'"))?
                .trim()
                .to_string();
            if let Some(m) = current.take() {
                finish_machine(m, saw_initial, line_no, &mut machines)?;
            }
            current = Some(StateMachine {
                name,
                cycle_def: 1,
                constants: Vec::new(),
                clocks: Vec::new(),
                inputs: Vec::new(),
                operations: Vec::new(),
                states: Vec::new(),
                initial_target: String::new(),
                initial_actions: Vec::new(),
                transitions: Vec::new(),
            });
            saw_initial = false;
            continue;
        }
        let m = current
            .as_mut()
            .ok_or_else(|| parse_err(line_no, "content before any 'machine' header"))?;
        parse_body_line(m, trimmed, line_no, &mut saw_initial)?;
    }
    if let Some(m) = current.take() {
        finish_machine(m, saw_initial, 0, &mut machines)?;
    }
    if machines.is_empty() {
        return Err(parse_err(0, "no machine defined"));
    }
    validate_machines(&machines)?;
    Ok(machines)
}

fn finish_machine(
    m: StateMachine,
    saw_initial: bool,
    line: u32,
    machines: &mut Vec<StateMachine>,
) -> Result<(), SmError> {
    if !saw_initial {
        return Err(parse_err(
            line,
            format!("machine '{}' has no initial junction", m.name),
        ));
    }
    machines.push(m);
    Ok(())
}

fn parse_err(line: u32, message: impl Into<String>) -> SmError {
    SmError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_body_line(
    m: &mut StateMachine,
    text: &str,
    line: u32,
    saw_initial: &mut bool,
) -> Result<(), SmError> {
    if let Some(rest) = text.strip_prefix("cycle ") {
        m.cycle_def = rest
            .trim()
            .parse()
            .map_err(|_| parse_err(line, "bad cycle multiplier"))?;
        if m.cycle_def == 0 {
            return Err(parse_err(line, "cycle multiplier must be at least 1"));
        }
        return Ok(());
    }
    if let Some(rest) = text.strip_prefix("const ") {
        let (name, range) = rest
            .split_once(':')
            .ok_or_else(|| parse_err(line, "expected 'const <name> : <lo>..<hi>'"))?;
        let (lo, hi) = parse_range(range.trim(), line)?;
        m.constants.push(ConstDecl {
            name: name.trim().to_string(),
            lo,
            hi,
        });
        return Ok(());
    }
    if let Some(rest) = text.strip_prefix("clock ") {
        m.clocks.push(rest.trim().to_string());
        return Ok(());
    }
    if let Some(rest) = text.strip_prefix("input ") {
        m.inputs.push(rest.trim().to_string());
        return Ok(());
    }
    if let Some(rest) = text.strip_prefix("op ") {
        m.operations.push(parse_op_decl(rest.trim(), line)?);
        return Ok(());
    }
    if let Some(rest) = text.strip_prefix("state ") {
        let (name, entry) = match rest.split_once(" entry ") {
            Some((n, acts)) => (n.trim().to_string(), parse_actions(acts, line)?),
            None => (rest.trim().to_string(), Vec::new()),
        };
        m.states.push(StateDecl { name, entry });
        return Ok(());
    }
    // Transition: src -> dst [exec] [when guard] [do actions]
    let (src, rest) = text
        .split_once("->")
        .ok_or_else(|| parse_err(line, format!("unrecognized line '{}'", text)))?;
    let src = src.trim().to_string();
    let rest = rest.trim();
    let (head, actions) = match rest.split_once(" do ") {
        Some((h, acts)) => (h.trim(), parse_actions(acts, line)?),
        None => (rest, Vec::new()),
    };
    let (head, guard) = match head.split_once(" when ") {
        Some((h, g)) => (h.trim(), parse_guard(g, line)?),
        None => (head, Vec::new()),
    };
    let (dst, exec) = match head.strip_suffix(" exec") {
        Some(d) => (d.trim().to_string(), true),
        None => (head.trim().to_string(), false),
    };
    if src == "initial" {
        if *saw_initial {
            return Err(parse_err(line, "second initial junction"));
        }
        if exec || !guard.is_empty() {
            return Err(parse_err(
                line,
                "the initial transition must be timeless and unguarded",
            ));
        }
        m.initial_target = dst;
        m.initial_actions = actions;
        *saw_initial = true;
        return Ok(());
    }
    m.transitions.push(Transition {
        src,
        dst,
        exec,
        guard,
        actions,
        line,
    });
    Ok(())
}

fn parse_range(text: &str, line: u32) -> Result<(i64, i64), SmError> {
    let (lo, hi) = text
        .split_once("..")
        .ok_or_else(|| parse_err(line, "expected range '<lo>..<hi>'"))?;
    let lo = lo
        .trim()
        .parse()
        .map_err(|_| parse_err(line, "bad range lower bound"))?;
    let hi = hi
        .trim()
        .parse()
        .map_err(|_| parse_err(line, "bad range upper bound"))?;
    if lo > hi {
        return Err(parse_err(line, "empty range"));
    }
    Ok((lo, hi))
}

fn parse_op_decl(text: &str, line: u32) -> Result<OpDecl, SmError> {
    let open = text
        .find('(')
        .ok_or_else(|| parse_err(line, "expected 'op <name>(...)'"))?;
    let name = text[..open].trim().to_string();
    let inner = text[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| parse_err(line, "missing ')' in op declaration"))?;
    let mut args = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (arg_name, range) = part
            .split_once(':')
            .ok_or_else(|| parse_err(line, "expected '<arg> : <lo>..<hi>'"))?;
        let (lo, hi) = parse_range(range.trim(), line)?;
        if lo < 0 {
            return Err(parse_err(line, "operation arguments are unsigned"));
        }
        args.push(ArgDecl {
            name: arg_name.trim().to_string(),
            lo,
            hi,
        });
    }
    Ok(OpDecl { name, args })
}

fn parse_actions(text: &str, line: u32) -> Result<Vec<Action>, SmError> {
    let mut actions = Vec::new();
    for part in text.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some(clock) = part.strip_prefix("reset ") {
            actions.push(Action::ResetClock(clock.trim().to_string()));
            continue;
        }
        let open = part
            .find('(')
            .ok_or_else(|| parse_err(line, format!("unrecognized action '{}'", part)))?;
        let op = part[..open].trim().to_string();
        let inner = part[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| parse_err(line, "missing ')' in operation call"))?;
        let mut args = Vec::new();
        for arg in inner.split(',') {
            let arg = arg.trim();
            if arg.is_empty() {
                continue;
            }
            args.push(parse_const_expr(arg, line)?);
        }
        actions.push(Action::Call { op, args });
    }
    Ok(actions)
}

fn parse_guard(text: &str, line: u32) -> Result<Vec<GuardAtom>, SmError> {
    let mut atoms = Vec::new();
    for part in text.split('&') {
        let part = part.trim();
        if part.is_empty() {
            return Err(parse_err(line, "empty guard term"));
        }
        // Clock comparison?
        let mut found = None;
        for (sym, op) in [
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("!=", CmpOp::Ne),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
            ("=", CmpOp::Eq),
        ] {
            if let Some(pos) = part.find(sym) {
                found = Some((pos, sym.len(), op));
                break;
            }
        }
        if let Some((pos, len, op)) = found {
            let clock = part[..pos].trim().to_string();
            let threshold = parse_const_expr(part[pos + len..].trim(), line)?;
            atoms.push(GuardAtom::Clock {
                clock,
                op,
                threshold,
            });
        } else if let Some(name) = part.strip_prefix('!') {
            atoms.push(GuardAtom::Input {
                name: name.trim().to_string(),
                on: false,
            });
        } else {
            atoms.push(GuardAtom::Input {
                name: part.to_string(),
                on: true,
            });
        }
    }
    Ok(atoms)
}

/// Constant expressions: `+ - * /` with the usual precedence, parentheses,
/// names and signed literals.
pub fn parse_const_expr(text: &str, line: u32) -> Result<ConstExpr, SmError> {
    let tokens = tokenize(text, line)?;
    let mut pos = 0;
    let expr = parse_additive(&tokens, &mut pos, line)?;
    if pos != tokens.len() {
        return Err(parse_err(line, format!("trailing input in '{}'", text)));
    }
    Ok(expr)
}

#[derive(Debug, PartialEq)]
enum CTok {
    Name(String),
    Num(i64),
    Sym(char),
}

fn tokenize(text: &str, line: u32) -> Result<Vec<CTok>, SmError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            out.push(CTok::Name(text[start..i].to_string()));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            out.push(CTok::Num(text[start..i].parse().map_err(|_| {
                parse_err(line, format!("bad literal '{}'", &text[start..i]))
            })?));
        } else if "+-*/()".contains(c) {
            out.push(CTok::Sym(c));
            i += 1;
        } else {
            return Err(parse_err(line, format!("unexpected character '{}'", c)));
        }
    }
    Ok(out)
}

fn parse_additive(tokens: &[CTok], pos: &mut usize, line: u32) -> Result<ConstExpr, SmError> {
    let mut lhs = parse_multiplicative(tokens, pos, line)?;
    loop {
        match tokens.get(*pos) {
            Some(CTok::Sym('+')) => {
                *pos += 1;
                let rhs = parse_multiplicative(tokens, pos, line)?;
                lhs = ConstExpr::Add(Box::new(lhs), Box::new(rhs));
            }
            Some(CTok::Sym('-')) => {
                *pos += 1;
                let rhs = parse_multiplicative(tokens, pos, line)?;
                lhs = ConstExpr::Sub(Box::new(lhs), Box::new(rhs));
            }
            _ => return Ok(lhs),
        }
    }
}

fn parse_multiplicative(tokens: &[CTok], pos: &mut usize, line: u32) -> Result<ConstExpr, SmError> {
    let mut lhs = parse_atom(tokens, pos, line)?;
    loop {
        match tokens.get(*pos) {
            Some(CTok::Sym('*')) => {
                *pos += 1;
                let rhs = parse_atom(tokens, pos, line)?;
                lhs = ConstExpr::Mul(Box::new(lhs), Box::new(rhs));
            }
            Some(CTok::Sym('/')) => {
                *pos += 1;
                let rhs = parse_atom(tokens, pos, line)?;
                lhs = ConstExpr::Div(Box::new(lhs), Box::new(rhs));
            }
            _ => return Ok(lhs),
        }
    }
}

fn parse_atom(tokens: &[CTok], pos: &mut usize, line: u32) -> Result<ConstExpr, SmError> {
    match tokens.get(*pos) {
        Some(CTok::Num(v)) => {
            *pos += 1;
            Ok(ConstExpr::Lit(*v))
        }
        Some(CTok::Name(n)) => {
            *pos += 1;
            Ok(ConstExpr::Const(n.clone()))
        }
        Some(CTok::Sym('-')) => {
            *pos += 1;
            let inner = parse_atom(tokens, pos, line)?;
            Ok(ConstExpr::Sub(Box::new(ConstExpr::Lit(0)), Box::new(inner)))
        }
        Some(CTok::Sym('(')) => {
            *pos += 1;
            let inner = parse_additive(tokens, pos, line)?;
            match tokens.get(*pos) {
                Some(CTok::Sym(')')) => {
                    *pos += 1;
                    Ok(inner)
                }
                _ => Err(parse_err(line, "missing ')'")),
            }
        }
        _ => Err(parse_err(line, "expected a constant expression")),
    }
}

fn validate_machines(machines: &[StateMachine]) -> Result<(), SmError> {
    let mut global_inputs: Vec<&str> = Vec::new();
    let mut global_ops: Vec<&str> = Vec::new();
    for m in machines {
        for i in &m.inputs {
            if global_inputs.contains(&i.as_str()) {
                return Err(parse_err(0, format!("input '{}' declared twice", i)));
            }
            global_inputs.push(i);
        }
        for o in &m.operations {
            if global_ops.contains(&o.name.as_str()) {
                return Err(parse_err(
                    0,
                    format!("operation '{}' declared twice", o.name),
                ));
            }
            global_ops.push(&o.name);
        }
        let state_names: Vec<&str> = m.states.iter().map(|s| s.name.as_str()).collect();
        if !state_names.contains(&m.initial_target.as_str()) {
            return Err(parse_err(
                0,
                format!(
                    "machine '{}': initial target '{}' is not a state",
                    m.name, m.initial_target
                ),
            ));
        }
        for t in &m.transitions {
            for s in [&t.src, &t.dst] {
                if !state_names.contains(&s.as_str()) {
                    return Err(parse_err(
                        t.line,
                        format!("machine '{}': unknown state '{}'", m.name, s),
                    ));
                }
            }
            for atom in &t.guard {
                match atom {
                    GuardAtom::Input { name, .. } => {
                        if !m.inputs.iter().any(|i| i == name) {
                            return Err(parse_err(
                                t.line,
                                format!("guard references undeclared input '{}'", name),
                            ));
                        }
                    }
                    GuardAtom::Clock { clock, .. } => {
                        if !m.clocks.iter().any(|c| c == clock) {
                            return Err(parse_err(
                                t.line,
                                format!("guard references undeclared clock '{}'", clock),
                            ));
                        }
                    }
                }
            }
        }
        let all_actions = m
            .transitions
            .iter()
            .flat_map(|t| t.actions.iter().map(move |a| (t.line, a)))
            .chain(m.initial_actions.iter().map(|a| (0, a)))
            .chain(m.states.iter().flat_map(|s| s.entry.iter().map(|a| (0, a))));
        for (line, action) in all_actions {
            match action {
                Action::ResetClock(c) => {
                    if !m.clocks.iter().any(|x| x == c) {
                        return Err(parse_err(
                            line,
                            format!("reset of undeclared clock '{}'", c),
                        ));
                    }
                }
                Action::Call { op, args } => match m.operation(op) {
                    None => {
                        return Err(parse_err(
                            line,
                            format!("call of undeclared operation '{}'", op),
                        ))
                    }
                    Some(decl) => {
                        if decl.args.len() != args.len() {
                            return Err(parse_err(
                                line,
                                format!(
                                    "operation '{}' takes {} arguments, {} given",
                                    op,
                                    decl.args.len(),
                                    args.len()
                                ),
                            ));
                        }
                    }
                },
            }
        }
    }
    Ok(())
}
