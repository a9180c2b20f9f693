//! Static validation of kernel programs.
//!
//! Each diagnostic carries the development-stage verification row it
//! corresponds to, so a rejected program can be traced to the failure class
//! it exercises:
//!
//! * row 1 — typing error in the declarations (interface level)
//! * row 3 — typing error in a statement block (implementation level)
//! * row 6 — overflow-capable arithmetic operator used
//! * row 7 — IF clause with more than one condition
//! * row 8 — local variable not typed before use
//!
//! Validation doubles as name resolution: a clean program yields a
//! [`Resolved`] form where every variable reference is a slot index, shared
//! by the reference interpreter and both code generators.

use std::collections::HashMap;
use std::fmt;

use super::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    EType,
    EOverflowOp,
    EMultiCond,
    EUntypedLocal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::EType => "E_TYPE",
            ErrorCode::EOverflowOp => "E_OVERFLOW_OP",
            ErrorCode::EMultiCond => "E_MULTI_COND",
            ErrorCode::EUntypedLocal => "E_UNTYPED_LOCAL",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub row: u8,
    pub code: ErrorCode,
    pub span: Span,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ROW{} {} {} {}",
            self.row, self.code, self.span, self.message
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub errors: Vec<ValidationError>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    /// One line per error, `ROW<k> <code> <line>:<col> <message>`.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for e in &self.errors {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_lines())
    }
}

/// Resolved variable metadata. `slot` is the index into the logical store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub name: String,
    pub width: Width,
    pub kind: VarKind,
    pub slot: usize,
}

/// Slot-resolved expression. Locals use a separate scratch index space.
#[derive(Debug, Clone, PartialEq)]
pub enum RExpr {
    Slot(usize, Width),
    Local(usize, Width),
    Lit(u32, Width),
    ModArith(ModOp, Width, Box<RExpr>, Box<RExpr>),
    Bit(BitOp, Width, Box<RExpr>, Box<RExpr>),
    GetMsTick,
    Since(Box<RExpr>),
    Feedback(usize),
}

impl RExpr {
    pub fn width(&self) -> Width {
        match self {
            RExpr::Slot(_, w) | RExpr::Local(_, w) | RExpr::Lit(_, w) => *w,
            RExpr::ModArith(_, w, _, _) | RExpr::Bit(_, w, _, _) => *w,
            RExpr::GetMsTick | RExpr::Since(_) => Width::W32,
            RExpr::Feedback(_) => Width::W8,
        }
    }
}

/// Slot-resolved statement.
#[derive(Debug, Clone, PartialEq)]
pub enum RStmt {
    SetSlot(usize, RExpr),
    SetLocal(usize, RExpr),
    If {
        op: CmpOp,
        lhs: RExpr,
        rhs: RExpr,
        then_block: Vec<RStmt>,
        else_block: Vec<RStmt>,
    },
}

/// A validated program with all names resolved to slots, ready for
/// interpretation or code generation.
///
/// Local slots follow the lexical scope stack: siblings reuse indices, so
/// `local_cells` is the maximum number of locals alive at once, not the
/// number of declaration sites.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub vars: Vec<VarInfo>,
    pub local_cells: usize,
    pub init: Vec<RStmt>,
    pub logic: Vec<RStmt>,
    pub io: IoConfig,
    /// (pin, slot) pairs, one per declared input, sorted by pin.
    pub input_pins: Vec<(u8, usize)>,
    /// (pin, slot) pairs, one per declared output, sorted by pin.
    pub output_pins: Vec<(u8, usize)>,
}

impl Resolved {
    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Upper bound on statements executed in one cycle: the body has no
    /// loops, so the total statement count (both IF branches counted) bounds
    /// any execution.
    pub fn instruction_bound(&self) -> usize {
        fn count(block: &[RStmt]) -> usize {
            block
                .iter()
                .map(|s| match s {
                    RStmt::If {
                        then_block,
                        else_block,
                        ..
                    } => 1 + count(then_block) + count(else_block),
                    _ => 1,
                })
                .sum()
        }
        count(&self.logic)
    }
}

/// Validate a program. An empty error list means the program is well-typed,
/// uses only modular operators, has single-comparison IF conditions, and
/// assigns every local before its first read.
pub fn validate(program: &CyclicProgram) -> ValidationReport {
    match resolve(program) {
        Ok(_) => ValidationReport::default(),
        Err(report) => report,
    }
}

/// Validate and resolve in one pass.
pub fn resolve(program: &CyclicProgram) -> Result<Resolved, ValidationReport> {
    let mut cx = Ctx {
        program,
        errors: Vec::new(),
        vars: Vec::new(),
        by_name: HashMap::new(),
        local_cells: 0,
    };
    cx.check_decls();
    let init = cx.check_block(&program.init, &mut Scope::root(), BlockKind::Init);
    let logic = cx.check_block(&program.logic, &mut Scope::root(), BlockKind::Logic);
    if cx.errors.is_empty() {
        Ok(Resolved {
            input_pins: pins(&cx.vars, VarKind::is_input),
            output_pins: pins(&cx.vars, VarKind::is_output),
            vars: cx.vars,
            local_cells: cx.local_cells,
            init,
            logic,
            io: program.io,
        })
    } else {
        let mut errors = cx.errors;
        errors.sort_by_key(|e| (e.span.line, e.span.col));
        Err(ValidationReport { errors })
    }
}

fn pins(vars: &[VarInfo], pred: fn(VarKind) -> bool) -> Vec<(u8, usize)> {
    let mut out: Vec<(u8, usize)> = vars
        .iter()
        .filter(|v| pred(v.kind))
        .map(|v| {
            let pin = match v.kind {
                VarKind::Input { pin } | VarKind::Output { pin } => pin,
                _ => unreachable!(),
            };
            (pin, v.slot)
        })
        .collect();
    out.sort();
    out
}

#[derive(Clone, Copy, PartialEq)]
enum BlockKind {
    Init,
    Logic,
}

/// Lexical scope for locals. Entries name visible locals with their scratch
/// slot; a child scope sees its ancestors' entries.
struct Scope {
    entries: Vec<(String, usize, Width)>,
}

impl Scope {
    fn root() -> Self {
        Scope {
            entries: Vec::new(),
        }
    }

    fn lookup(&self, name: &str) -> Option<(usize, Width)> {
        self.entries
            .iter()
            .rev()
            .find(|(n, _, _)| n == name)
            .map(|&(_, slot, w)| (slot, w))
    }
}

struct Ctx<'a> {
    program: &'a CyclicProgram,
    errors: Vec<ValidationError>,
    vars: Vec<VarInfo>,
    by_name: HashMap<String, usize>,
    local_cells: usize,
}

impl<'a> Ctx<'a> {
    fn err(&mut self, row: u8, code: ErrorCode, span: Span, message: impl Into<String>) {
        self.errors.push(ValidationError {
            row,
            code,
            span,
            message: message.into(),
        });
    }

    fn check_decls(&mut self) {
        let io = self.program.io;
        let mut used_in_pins: HashMap<u8, String> = HashMap::new();
        let mut used_out_pins: HashMap<u8, String> = HashMap::new();
        for decl in &self.program.decls {
            if self.by_name.contains_key(&decl.name) {
                self.err(
                    1,
                    ErrorCode::EType,
                    decl.span,
                    format!("duplicate declaration of '{}'", decl.name),
                );
                continue;
            }
            match decl.kind {
                VarKind::Input { pin } => {
                    if decl.width != Width::W8 {
                        self.err(
                            1,
                            ErrorCode::EType,
                            decl.span,
                            format!("input '{}' must be u8 (wire code)", decl.name),
                        );
                    }
                    if pin == 0 || pin > io.inputs {
                        self.err(
                            1,
                            ErrorCode::EType,
                            decl.span,
                            format!(
                                "input '{}' pin {} outside 1..={}",
                                decl.name, pin, io.inputs
                            ),
                        );
                    } else if let Some(prev) = used_in_pins.insert(pin, decl.name.clone()) {
                        self.err(
                            1,
                            ErrorCode::EType,
                            decl.span,
                            format!("input pin {} already mapped to '{}'", pin, prev),
                        );
                    }
                }
                VarKind::Output { pin } => {
                    if decl.width != Width::W8 {
                        self.err(
                            1,
                            ErrorCode::EType,
                            decl.span,
                            format!("output '{}' must be u8 (wire code)", decl.name),
                        );
                    }
                    if pin == 0 || pin > io.outputs {
                        self.err(
                            1,
                            ErrorCode::EType,
                            decl.span,
                            format!(
                                "output '{}' pin {} outside 1..={}",
                                decl.name, pin, io.outputs
                            ),
                        );
                    } else if let Some(prev) = used_out_pins.insert(pin, decl.name.clone()) {
                        self.err(
                            1,
                            ErrorCode::EType,
                            decl.span,
                            format!("output pin {} already mapped to '{}'", pin, prev),
                        );
                    }
                }
                VarKind::Const { value } => {
                    if !decl.width.fits(value) {
                        self.err(
                            1,
                            ErrorCode::EType,
                            decl.span,
                            format!(
                                "constant '{}' value {} does not fit {}",
                                decl.name, value, decl.width
                            ),
                        );
                    }
                }
                VarKind::State => {}
            }
            let slot = self.vars.len();
            self.by_name.insert(decl.name.clone(), slot);
            self.vars.push(VarInfo {
                name: decl.name.clone(),
                width: decl.width,
                kind: decl.kind,
                slot,
            });
        }
    }

    fn check_block(&mut self, block: &[Stmt], scope: &mut Scope, kind: BlockKind) -> Vec<RStmt> {
        let depth = scope.entries.len();
        let mut out = Vec::with_capacity(block.len());
        for stmt in block {
            if let Some(r) = self.check_stmt(stmt, scope, kind) {
                out.push(r);
            }
        }
        scope.entries.truncate(depth);
        out
    }

    fn check_stmt(&mut self, stmt: &Stmt, scope: &mut Scope, kind: BlockKind) -> Option<RStmt> {
        match &stmt.kind {
            StmtKind::Assign { target, value } => {
                if let Some((slot, width)) = scope.lookup(target) {
                    let value = self.check_expr(value, Some(width), scope, kind)?;
                    return Some(RStmt::SetLocal(slot, value));
                }
                match self.by_name.get(target).copied() {
                    Some(slot) => {
                        let var = self.vars[slot].clone();
                        match var.kind {
                            VarKind::Input { .. } => {
                                self.err(
                                    3,
                                    ErrorCode::EType,
                                    stmt.span,
                                    format!("input '{}' is read-only", target),
                                );
                                None
                            }
                            VarKind::Const { .. } => {
                                self.err(
                                    3,
                                    ErrorCode::EType,
                                    stmt.span,
                                    format!("constant '{}' cannot be assigned", target),
                                );
                                None
                            }
                            _ => {
                                let value = self.check_expr(value, Some(var.width), scope, kind)?;
                                Some(RStmt::SetSlot(slot, value))
                            }
                        }
                    }
                    None => {
                        self.err(
                            8,
                            ErrorCode::EUntypedLocal,
                            stmt.span,
                            format!("assignment to '{}' which has no typed declaration", target),
                        );
                        None
                    }
                }
            }
            StmtKind::Local { name, width, value } => {
                if self.by_name.contains_key(name) || scope.lookup(name).is_some() {
                    self.err(
                        3,
                        ErrorCode::EType,
                        stmt.span,
                        format!("local '{}' shadows an existing name", name),
                    );
                    return None;
                }
                let value = self.check_expr(value, Some(*width), scope, kind);
                // Slot = position in the live local stack, so siblings reuse
                // cells and the scratch area stays bounded by nesting depth.
                let slot = scope.entries.len();
                self.local_cells = self.local_cells.max(slot + 1);
                scope.entries.push((name.clone(), slot, *width));
                Some(RStmt::SetLocal(slot, value?))
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let resolved_cond = self.check_condition(cond, scope, kind);
                let then_block = self.check_block(then_block, scope, kind);
                let else_block = self.check_block(else_block, scope, kind);
                let (op, lhs, rhs) = resolved_cond?;
                Some(RStmt::If {
                    op,
                    lhs,
                    rhs,
                    then_block,
                    else_block,
                })
            }
        }
    }

    /// An IF condition must be exactly one comparison of two same-width
    /// operands.
    fn check_condition(
        &mut self,
        cond: &Expr,
        scope: &mut Scope,
        kind: BlockKind,
    ) -> Option<(CmpOp, RExpr, RExpr)> {
        match &cond.kind {
            ExprKind::Cmp(op, lhs, rhs) => {
                let (rl, rr) = self.check_pair(lhs, rhs, None, scope, kind)?;
                Some((*op, rl, rr))
            }
            ExprKind::Logic(op, _, _) => {
                self.err(
                    7,
                    ErrorCode::EMultiCond,
                    cond.span,
                    format!(
                        "IF condition combines comparisons with {}; use nested IF",
                        op.keyword()
                    ),
                );
                None
            }
            _ => {
                self.err(
                    3,
                    ErrorCode::EType,
                    cond.span,
                    "IF condition must be a single comparison",
                );
                None
            }
        }
    }

    /// Check a pair of operands that must agree on width. Literal widths
    /// are inferred from the non-literal side, or from the surrounding
    /// context when both sides are literal.
    fn check_pair(
        &mut self,
        lhs: &Expr,
        rhs: &Expr,
        context: Option<Width>,
        scope: &mut Scope,
        kind: BlockKind,
    ) -> Option<(RExpr, RExpr)> {
        let w = self
            .peek_width(lhs, scope)
            .or_else(|| self.peek_width(rhs, scope))
            .or(context)
            .unwrap_or(Width::W32);
        let rl = self.check_expr(lhs, Some(w), scope, kind)?;
        let rr = self.check_expr(rhs, Some(w), scope, kind)?;
        Some((rl, rr))
    }

    /// Width of an expression if it is determined without context (None for
    /// bare literals).
    fn peek_width(&self, expr: &Expr, scope: &Scope) -> Option<Width> {
        match &expr.kind {
            ExprKind::Var(name) => scope
                .lookup(name)
                .map(|(_, w)| w)
                .or_else(|| self.by_name.get(name).map(|&s| self.vars[s].width)),
            ExprKind::Lit(_) => None,
            ExprKind::ModArith(_, w, _, _) => Some(*w),
            ExprKind::PlainArith(_, l, r) | ExprKind::Bit(_, l, r) => self
                .peek_width(l, scope)
                .or_else(|| self.peek_width(r, scope)),
            ExprKind::Cmp(..) | ExprKind::Logic(..) => None,
            ExprKind::GetMsTick | ExprKind::Since(_) => Some(Width::W32),
            ExprKind::Feedback(_) => Some(Width::W8),
        }
    }

    fn check_expr(
        &mut self,
        expr: &Expr,
        expected: Option<Width>,
        scope: &mut Scope,
        kind: BlockKind,
    ) -> Option<RExpr> {
        let span = expr.span;
        let resolved = match &expr.kind {
            ExprKind::Var(name) => {
                if let Some((slot, width)) = scope.lookup(name) {
                    RExpr::Local(slot, width)
                } else if let Some(&slot) = self.by_name.get(name) {
                    let var = &self.vars[slot];
                    match var.kind {
                        VarKind::Output { .. } => {
                            self.err(
                                3,
                                ErrorCode::EType,
                                span,
                                format!(
                                    "output '{}' is write-only; use feedback({}) to read it",
                                    name, name
                                ),
                            );
                            return None;
                        }
                        VarKind::Input { .. } if kind == BlockKind::Init => {
                            self.err(
                                3,
                                ErrorCode::EType,
                                span,
                                format!("input '{}' has no value in INIT", name),
                            );
                            return None;
                        }
                        _ => RExpr::Slot(slot, var.width),
                    }
                } else {
                    self.err(
                        8,
                        ErrorCode::EUntypedLocal,
                        span,
                        format!("'{}' used before a typed declaration", name),
                    );
                    return None;
                }
            }
            ExprKind::Lit(value) => {
                let width = expected.unwrap_or(Width::W32);
                if !width.fits(*value) {
                    self.err(
                        3,
                        ErrorCode::EType,
                        span,
                        format!("literal {} does not fit {}", value, width),
                    );
                    return None;
                }
                RExpr::Lit(*value, width)
            }
            ExprKind::ModArith(op, width, lhs, rhs) => {
                let rl = self.check_expr(lhs, Some(*width), scope, kind);
                let rr = self.check_expr(rhs, Some(*width), scope, kind);
                RExpr::ModArith(*op, *width, Box::new(rl?), Box::new(rr?))
            }
            ExprKind::PlainArith(op, _, _) => {
                self.err(
                    6,
                    ErrorCode::EOverflowOp,
                    span,
                    format!(
                        "overflow-capable operator '{}'; use {}8/16/32",
                        op.symbol(),
                        match op {
                            PlainOp::Add => "add_mod",
                            PlainOp::Sub => "sub_mod",
                            PlainOp::Mul => "mul_mod",
                        }
                    ),
                );
                return None;
            }
            ExprKind::Cmp(..) => {
                self.err(
                    3,
                    ErrorCode::EType,
                    span,
                    "comparison used as a value; comparisons may only appear as an IF condition",
                );
                return None;
            }
            ExprKind::Bit(op, lhs, rhs) => {
                let (rl, rr) = self.check_pair(lhs, rhs, expected, scope, kind)?;
                let w = rl.width();
                RExpr::Bit(*op, w, Box::new(rl), Box::new(rr))
            }
            ExprKind::Logic(op, _, _) => {
                self.err(
                    7,
                    ErrorCode::EMultiCond,
                    span,
                    format!(
                        "{} of conditions outside an IF; use nested IF",
                        op.keyword()
                    ),
                );
                return None;
            }
            ExprKind::GetMsTick => {
                if kind == BlockKind::Init {
                    self.err(
                        3,
                        ErrorCode::EType,
                        span,
                        "get_ms_tick is not constant; not allowed in INIT",
                    );
                    return None;
                }
                RExpr::GetMsTick
            }
            ExprKind::Since(inner) => {
                if kind == BlockKind::Init {
                    self.err(
                        3,
                        ErrorCode::EType,
                        span,
                        "since is not constant; not allowed in INIT",
                    );
                    return None;
                }
                let ri = self.check_expr(inner, Some(Width::W32), scope, kind)?;
                RExpr::Since(Box::new(ri))
            }
            ExprKind::Feedback(name) => {
                if kind == BlockKind::Init {
                    self.err(
                        3,
                        ErrorCode::EType,
                        span,
                        "feedback is not constant; not allowed in INIT",
                    );
                    return None;
                }
                match self.by_name.get(name).copied() {
                    Some(slot) if self.vars[slot].kind.is_output() => RExpr::Feedback(slot),
                    Some(_) => {
                        self.err(
                            3,
                            ErrorCode::EType,
                            span,
                            format!("feedback requires an output; '{}' is not one", name),
                        );
                        return None;
                    }
                    None => {
                        self.err(
                            3,
                            ErrorCode::EType,
                            span,
                            format!("feedback of unknown output '{}'", name),
                        );
                        return None;
                    }
                }
            }
        };
        if let Some(expected) = expected {
            let got = resolved.width();
            if got != expected {
                self.err(
                    3,
                    ErrorCode::EType,
                    span,
                    format!("width mismatch: expected {}, found {}", expected, got),
                );
                return None;
            }
        }
        Some(resolved)
    }
}
