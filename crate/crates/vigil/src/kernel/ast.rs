//! Kernel language AST: the restricted cyclic subset executed on the board.
//!
//! A program is a set of typed declarations plus two statement blocks:
//! `init` (run once at load) and `logic` (run every board cycle). The
//! language is deliberately small: unsigned 8/16/32-bit variables, modular
//! arithmetic, bitwise operators, single-comparison IF conditions, no loops.

use std::fmt;

/// The two valid wire codes. Any other 8-bit value in an output register is
/// a vital fault. The codes are bitwise complements (Hamming distance 8) so
/// a random corruption is overwhelmingly likely to produce an invalid code
/// rather than the other valid one.
pub const IO_OFF: u8 = 0x55;
pub const IO_ON: u8 = 0xAA;

/// Returns true iff `code` is one of the two valid wire codes.
pub fn io_code_valid(code: u32) -> bool {
    code == IO_OFF as u32 || code == IO_ON as u32
}

/// Source position, 1-based. `Span::none()` marks generated nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn none() -> Self {
        Span { line: 0, col: 0 }
    }

    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Scalar width. These are the only value shapes in the language; there are
/// no signed integers and no booleans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Width {
    W8,
    W16,
    W32,
}

impl Width {
    pub fn bits(self) -> u32 {
        match self {
            Width::W8 => 8,
            Width::W16 => 16,
            Width::W32 => 32,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Width::W8 => 1,
            Width::W16 => 2,
            Width::W32 => 4,
        }
    }

    /// All-ones mask for the width.
    pub fn mask(self) -> u32 {
        match self {
            Width::W8 => 0xFF,
            Width::W16 => 0xFFFF,
            Width::W32 => 0xFFFF_FFFF,
        }
    }

    pub fn fits(self, value: u32) -> bool {
        value <= self.mask()
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.bits())
    }
}

/// Declaration kind. Locals are not declared here; they are introduced by
/// `local` statements inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Read-only in logic; refreshed from a physical pin every cycle.
    Input { pin: u8 },
    /// Write-only in logic (readable through `feedback`); drives a pin.
    Output { pin: u8 },
    /// Persists across cycles.
    State,
    /// Immutable named value.
    Const { value: u32 },
}

impl VarKind {
    pub fn is_input(self) -> bool {
        matches!(self, VarKind::Input { .. })
    }

    pub fn is_output(self) -> bool {
        matches!(self, VarKind::Output { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub width: Width,
    pub kind: VarKind,
    pub span: Span,
}

/// Overflow-capable operators. Representable so the validator can reject
/// them with the dedicated diagnostic; never executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlainOp {
    Add,
    Sub,
    Mul,
}

impl PlainOp {
    pub fn symbol(self) -> &'static str {
        match self {
            PlainOp::Add => "+",
            PlainOp::Sub => "-",
            PlainOp::Mul => "*",
        }
    }
}

/// Modular (non-overflowing) arithmetic, width-parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModOp {
    Add,
    Sub,
    Mul,
}

impl ModOp {
    pub fn name(self) -> &'static str {
        match self {
            ModOp::Add => "add_mod",
            ModOp::Sub => "sub_mod",
            ModOp::Mul => "mul_mod",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn eval(self, lhs: u32, rhs: u32) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }

    /// Logical negation of the comparison.
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitOp {
    And,
    Or,
    Xor,
}

impl BitOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BitOp::And => "&",
            BitOp::Or => "|",
            BitOp::Xor => "^",
        }
    }

    pub fn eval(self, lhs: u32, rhs: u32) -> u32 {
        match self {
            BitOp::And => lhs & rhs,
            BitOp::Or => lhs | rhs,
            BitOp::Xor => lhs ^ rhs,
        }
    }
}

/// Boolean connectives in IF conditions. Parsed so the validator can point
/// at them; a condition must be a single comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogicOp {
    And,
    Or,
}

impl LogicOp {
    pub fn keyword(self) -> &'static str {
        match self {
            LogicOp::And => "AND",
            LogicOp::Or => "OR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::new(ExprKind::Var(name.into()), Span::none())
    }

    pub fn lit(value: u32) -> Self {
        Expr::new(ExprKind::Lit(value), Span::none())
    }

    pub fn mod_arith(op: ModOp, width: Width, lhs: Expr, rhs: Expr) -> Self {
        Expr::new(
            ExprKind::ModArith(op, width, Box::new(lhs), Box::new(rhs)),
            Span::none(),
        )
    }

    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::new(
            ExprKind::Cmp(op, Box::new(lhs), Box::new(rhs)),
            Span::none(),
        )
    }

    pub fn bit(op: BitOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::new(
            ExprKind::Bit(op, Box::new(lhs), Box::new(rhs)),
            Span::none(),
        )
    }

    pub fn since(inner: Expr) -> Self {
        Expr::new(ExprKind::Since(Box::new(inner)), Span::none())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Var(String),
    Lit(u32),
    ModArith(ModOp, Width, Box<Expr>, Box<Expr>),
    /// Overflow-capable `+ - *`; always rejected by the validator.
    PlainArith(PlainOp, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Bit(BitOp, Box<Expr>, Box<Expr>),
    /// `AND`/`OR` of conditions; always rejected by the validator.
    Logic(LogicOp, Box<Expr>, Box<Expr>),
    /// Current millisecond clock, u32.
    GetMsTick,
    /// `since(t0)` = (clock - t0) mod 2^32.
    Since(Box<Expr>),
    /// Read-back of an output register.
    Feedback(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

impl Stmt {
    pub fn new(kind: StmtKind, span: Span) -> Self {
        Stmt { kind, span }
    }

    pub fn assign(target: impl Into<String>, value: Expr) -> Self {
        Stmt::new(
            StmtKind::Assign {
                target: target.into(),
                value,
            },
            Span::none(),
        )
    }

    pub fn local(name: impl Into<String>, width: Width, value: Expr) -> Self {
        Stmt::new(
            StmtKind::Local {
                name: name.into(),
                width,
                value,
            },
            Span::none(),
        )
    }

    pub fn if_then(cond: Expr, then_block: Vec<Stmt>) -> Self {
        Stmt::new(
            StmtKind::If {
                cond,
                then_block,
                else_block: Vec::new(),
            },
            Span::none(),
        )
    }

    pub fn if_else(cond: Expr, then_block: Vec<Stmt>, else_block: Vec<Stmt>) -> Self {
        Stmt::new(
            StmtKind::If {
                cond,
                then_block,
                else_block,
            },
            Span::none(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Assign {
        target: String,
        value: Expr,
    },
    /// Typed declaration-with-initializer of a block-scoped local.
    Local {
        name: String,
        width: Width,
        value: Expr,
    },
    If {
        cond: Expr,
        then_block: Vec<Stmt>,
        else_block: Vec<Stmt>,
    },
}

/// Digital I/O capacity of the target board.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct IoConfig {
    pub inputs: u8,
    pub outputs: u8,
}

impl Default for IoConfig {
    fn default() -> Self {
        // SK1 capacity.
        IoConfig {
            inputs: 20,
            outputs: 8,
        }
    }
}

/// A complete kernel program.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CyclicProgram {
    pub decls: Vec<VarDecl>,
    pub init: Vec<Stmt>,
    pub logic: Vec<Stmt>,
    pub io: IoConfig,
}
