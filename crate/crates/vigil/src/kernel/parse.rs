//! Parser for the textual kernel source format (`.ckp`).
//!
//! The format is line-oriented: one declaration or statement per line,
//! sections introduced by `CONSTANTS` / `INPUTS` / `OUTPUTS` / `STATE` /
//! `INIT` / `LOGIC` at column zero, nesting by indentation. `#` starts a
//! comment. Example:
//!
//! ```text
//! INPUTS
//!     btn : u8 pin 1
//! OUTPUTS
//!     lamp : u8 pin 1
//! STATE
//!     count : u16
//! LOGIC
//!     IF btn = IO_ON
//!         count := add_mod16(count, 1)
//!         lamp := IO_ON
//!     ELSE
//!         lamp := IO_OFF
//! ```

use std::fmt;

use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at {span}: {message}")]
pub struct ParseError {
    pub span: Span,
    pub message: String,
}

impl ParseError {
    fn new(span: Span, message: impl Into<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
        }
    }
}

pub fn parse_program(text: &str) -> Result<CyclicProgram, ParseError> {
    parse_program_with_io(text, IoConfig::default())
}

pub fn parse_program_with_io(text: &str, io: IoConfig) -> Result<CyclicProgram, ParseError> {
    let lines = scan_lines(text)?;
    let mut program = CyclicProgram {
        io,
        ..CyclicProgram::default()
    };
    let mut next_in_pin: u8 = 1;
    let mut next_out_pin: u8 = 1;
    let mut i = 0;
    while i < lines.len() {
        let line = &lines[i];
        if line.indent != 0 {
            return Err(ParseError::new(
                line.span(),
                "expected a section header at column 0",
            ));
        }
        let section = line.text.as_str();
        i += 1;
        let start = i;
        while i < lines.len() && lines[i].indent > 0 {
            i += 1;
        }
        let body = &lines[start..i];
        match section {
            "CONSTANTS" => parse_decls(
                body,
                &mut program,
                DeclSection::Constants,
                &mut next_in_pin,
                &mut next_out_pin,
            )?,
            "INPUTS" => parse_decls(
                body,
                &mut program,
                DeclSection::Inputs,
                &mut next_in_pin,
                &mut next_out_pin,
            )?,
            "OUTPUTS" => parse_decls(
                body,
                &mut program,
                DeclSection::Outputs,
                &mut next_in_pin,
                &mut next_out_pin,
            )?,
            "STATE" => parse_decls(
                body,
                &mut program,
                DeclSection::State,
                &mut next_in_pin,
                &mut next_out_pin,
            )?,
            "INIT" => program.init = parse_block(body)?,
            "LOGIC" => program.logic = parse_block(body)?,
            other => {
                return Err(ParseError::new(
                    line.span(),
                    format!("unknown section '{}'", other),
                ))
            }
        }
    }
    Ok(program)
}

#[derive(Debug)]
struct Line {
    number: u32,
    indent: u32,
    text: String,
}

impl Line {
    fn span(&self) -> Span {
        Span::new(self.number, self.indent + 1)
    }
}

fn scan_lines(text: &str) -> Result<Vec<Line>, ParseError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let number = idx as u32 + 1;
        if raw.contains('\t') {
            return Err(ParseError::new(
                Span::new(number, 1),
                "tabs are not allowed; indent with spaces",
            ));
        }
        let without_comment = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed_end = without_comment.trim_end();
        if trimmed_end.is_empty() {
            continue;
        }
        let indent = (trimmed_end.len() - trimmed_end.trim_start().len()) as u32;
        out.push(Line {
            number,
            indent,
            text: trimmed_end.trim_start().to_string(),
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum DeclSection {
    Constants,
    Inputs,
    Outputs,
    State,
}

fn parse_decls(
    body: &[Line],
    program: &mut CyclicProgram,
    section: DeclSection,
    next_in_pin: &mut u8,
    next_out_pin: &mut u8,
) -> Result<(), ParseError> {
    for line in body {
        let span = line.span();
        let mut toks = Tokens::of(&line.text, span)?;
        let name = toks.ident("declaration name")?;
        toks.expect(":")?;
        let width = toks.width()?;
        let kind = match section {
            DeclSection::Constants => {
                toks.expect("=")?;
                let value = toks.number()?;
                VarKind::Const { value }
            }
            DeclSection::Inputs => {
                let pin = parse_pin(&mut toks, next_in_pin)?;
                VarKind::Input { pin }
            }
            DeclSection::Outputs => {
                let pin = parse_pin(&mut toks, next_out_pin)?;
                VarKind::Output { pin }
            }
            DeclSection::State => VarKind::State,
        };
        toks.finish()?;
        program.decls.push(VarDecl {
            name,
            width,
            kind,
            span,
        });
    }
    Ok(())
}

fn parse_pin(toks: &mut Tokens<'_>, next: &mut u8) -> Result<u8, ParseError> {
    if toks.accept("pin") {
        let pin = toks.number()? as u8;
        *next = pin.saturating_add(1).max(*next);
        Ok(pin)
    } else {
        let pin = *next;
        *next += 1;
        Ok(pin)
    }
}

fn parse_block(body: &[Line]) -> Result<Vec<Stmt>, ParseError> {
    let mut pos = 0;
    let base = match body.first() {
        Some(l) => l.indent,
        None => return Ok(Vec::new()),
    };
    let block = parse_stmts(body, &mut pos, base)?;
    if pos != body.len() {
        return Err(ParseError::new(body[pos].span(), "unexpected indentation"));
    }
    Ok(block)
}

fn parse_stmts(body: &[Line], pos: &mut usize, indent: u32) -> Result<Vec<Stmt>, ParseError> {
    let mut out = Vec::new();
    while *pos < body.len() {
        let line = &body[*pos];
        if line.indent < indent {
            break;
        }
        if line.indent > indent {
            return Err(ParseError::new(line.span(), "unexpected indentation"));
        }
        let span = line.span();
        if line.text == "ELSE" {
            break;
        }
        if let Some(rest) = line.text.strip_prefix("IF ") {
            *pos += 1;
            let cond = parse_expr_str(rest, span)?;
            let then_block = parse_nested(body, pos, indent, span)?;
            let mut else_block = Vec::new();
            if *pos < body.len() && body[*pos].indent == indent && body[*pos].text == "ELSE" {
                let else_span = body[*pos].span();
                *pos += 1;
                else_block = parse_nested(body, pos, indent, else_span)?;
            }
            out.push(Stmt::new(
                StmtKind::If {
                    cond,
                    then_block,
                    else_block,
                },
                span,
            ));
            continue;
        }
        *pos += 1;
        if let Some(rest) = line.text.strip_prefix("local ") {
            // local name : width := expr
            let (head, value) = split_assign(rest, span)?;
            let mut toks = Tokens::of(head, span)?;
            let name = toks.ident("local name")?;
            toks.expect(":")?;
            let width = toks.width()?;
            toks.finish()?;
            let value = parse_expr_str(value, span)?;
            out.push(Stmt::new(StmtKind::Local { name, width, value }, span));
        } else {
            let (target, value) = split_assign(&line.text, span)?;
            let mut toks = Tokens::of(target, span)?;
            let target = toks.ident("assignment target")?;
            toks.finish()?;
            let value = parse_expr_str(value, span)?;
            out.push(Stmt::new(StmtKind::Assign { target, value }, span));
        }
    }
    Ok(out)
}

fn parse_nested(
    body: &[Line],
    pos: &mut usize,
    indent: u32,
    at: Span,
) -> Result<Vec<Stmt>, ParseError> {
    match body.get(*pos) {
        Some(l) if l.indent > indent => parse_stmts(body, pos, l.indent),
        _ => Err(ParseError::new(at, "expected an indented block")),
    }
}

fn split_assign(text: &str, span: Span) -> Result<(&str, &str), ParseError> {
    match text.find(":=") {
        Some(pos) => Ok((text[..pos].trim(), text[pos + 2..].trim())),
        None => Err(ParseError::new(span, "expected ':=' in statement")),
    }
}

// ---------------------------------------------------------------------------
// Expressions

pub(crate) fn parse_expr_str(text: &str, span: Span) -> Result<Expr, ParseError> {
    let mut p = ExprParser {
        toks: Tokens::of(text, span)?,
    };
    let expr = p.logic_or()?;
    p.toks.finish()?;
    Ok(expr)
}

struct ExprParser<'a> {
    toks: Tokens<'a>,
}

impl<'a> ExprParser<'a> {
    // Precedence (loosest first): OR, AND, comparison, |, ^, &, + -, *.
    fn logic_or(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.logic_and()?;
        while self.toks.accept("OR") {
            let rhs = self.logic_and()?;
            lhs = Expr::new(
                ExprKind::Logic(LogicOp::Or, Box::new(lhs), Box::new(rhs)),
                self.toks.span,
            );
        }
        Ok(lhs)
    }

    fn logic_and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.comparison()?;
        while self.toks.accept("AND") {
            let rhs = self.comparison()?;
            lhs = Expr::new(
                ExprKind::Logic(LogicOp::And, Box::new(lhs), Box::new(rhs)),
                self.toks.span,
            );
        }
        Ok(lhs)
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.bit_or()?;
        let op = if self.toks.accept("=") {
            CmpOp::Eq
        } else if self.toks.accept("!=") {
            CmpOp::Ne
        } else if self.toks.accept("<=") {
            CmpOp::Le
        } else if self.toks.accept(">=") {
            CmpOp::Ge
        } else if self.toks.accept("<") {
            CmpOp::Lt
        } else if self.toks.accept(">") {
            CmpOp::Gt
        } else {
            return Ok(lhs);
        };
        let rhs = self.bit_or()?;
        Ok(Expr::new(
            ExprKind::Cmp(op, Box::new(lhs), Box::new(rhs)),
            self.toks.span,
        ))
    }

    fn bit_or(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.bit_xor()?;
        while self.toks.accept("|") {
            let rhs = self.bit_xor()?;
            lhs = Expr::new(
                ExprKind::Bit(BitOp::Or, Box::new(lhs), Box::new(rhs)),
                self.toks.span,
            );
        }
        Ok(lhs)
    }

    fn bit_xor(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.bit_and()?;
        while self.toks.accept("^") {
            let rhs = self.bit_and()?;
            lhs = Expr::new(
                ExprKind::Bit(BitOp::Xor, Box::new(lhs), Box::new(rhs)),
                self.toks.span,
            );
        }
        Ok(lhs)
    }

    fn bit_and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.additive()?;
        while self.toks.accept("&") {
            let rhs = self.additive()?;
            lhs = Expr::new(
                ExprKind::Bit(BitOp::And, Box::new(lhs), Box::new(rhs)),
                self.toks.span,
            );
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = if self.toks.accept("+") {
                PlainOp::Add
            } else if self.toks.accept("-") {
                PlainOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.multiplicative()?;
            lhs = Expr::new(
                ExprKind::PlainArith(op, Box::new(lhs), Box::new(rhs)),
                self.toks.span,
            );
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.primary()?;
        while self.toks.accept("*") {
            let rhs = self.primary()?;
            lhs = Expr::new(
                ExprKind::PlainArith(PlainOp::Mul, Box::new(lhs), Box::new(rhs)),
                self.toks.span,
            );
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let span = self.toks.span;
        if self.toks.accept("(") {
            let inner = self.logic_or()?;
            self.toks.expect(")")?;
            return Ok(inner);
        }
        if let Some(value) = self.toks.try_number()? {
            return Ok(Expr::new(ExprKind::Lit(value), span));
        }
        let name = self.toks.ident("expression")?;
        match name.as_str() {
            "IO_ON" => return Ok(Expr::new(ExprKind::Lit(IO_ON as u32), span)),
            "IO_OFF" => return Ok(Expr::new(ExprKind::Lit(IO_OFF as u32), span)),
            _ => {}
        }
        if self.toks.accept("(") {
            return self.call(&name, span);
        }
        Ok(Expr::new(ExprKind::Var(name), span))
    }

    fn call(&mut self, name: &str, span: Span) -> Result<Expr, ParseError> {
        let kind = match name {
            "get_ms_tick" => {
                self.toks.expect(")")?;
                return Ok(Expr::new(ExprKind::GetMsTick, span));
            }
            "since" => {
                let inner = self.logic_or()?;
                self.toks.expect(")")?;
                return Ok(Expr::new(ExprKind::Since(Box::new(inner)), span));
            }
            "feedback" => {
                let var = self.toks.ident("output name")?;
                self.toks.expect(")")?;
                return Ok(Expr::new(ExprKind::Feedback(var), span));
            }
            _ => match mod_call(name) {
                Some(kind) => kind,
                None => {
                    return Err(ParseError::new(
                        span,
                        format!("unknown function '{}'", name),
                    ))
                }
            },
        };
        let (op, width) = kind;
        let lhs = self.logic_or()?;
        self.toks.expect(",")?;
        let rhs = self.logic_or()?;
        self.toks.expect(")")?;
        Ok(Expr::new(
            ExprKind::ModArith(op, width, Box::new(lhs), Box::new(rhs)),
            span,
        ))
    }
}

fn mod_call(name: &str) -> Option<(ModOp, Width)> {
    let (op, rest) = if let Some(rest) = name.strip_prefix("add_mod") {
        (ModOp::Add, rest)
    } else if let Some(rest) = name.strip_prefix("sub_mod") {
        (ModOp::Sub, rest)
    } else {
        let rest = name.strip_prefix("mul_mod")?;
        (ModOp::Mul, rest)
    };
    let width = match rest {
        "8" => Width::W8,
        "16" => Width::W16,
        "32" => Width::W32,
        _ => return None,
    };
    Some((op, width))
}

// ---------------------------------------------------------------------------
// Tokenizer

struct Tokens<'a> {
    items: Vec<Tok<'a>>,
    pos: usize,
    span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Word(&'a str),
    Sym(&'a str),
    Num(u32),
}

impl fmt::Display for Tok<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "{}", w),
            Tok::Sym(s) => write!(f, "{}", s),
            Tok::Num(n) => write!(f, "{}", n),
        }
    }
}

impl<'a> Tokens<'a> {
    fn of(text: &'a str, span: Span) -> Result<Self, ParseError> {
        let mut items = Vec::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                items.push(Tok::Word(&text[start..i]));
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                if text[i..].starts_with("0x") || text[i..].starts_with("0X") {
                    i += 2;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_hexdigit() {
                        i += 1;
                    }
                    let v = u32::from_str_radix(&text[start + 2..i], 16).map_err(|_| {
                        ParseError::new(span, format!("bad hex literal '{}'", &text[start..i]))
                    })?;
                    items.push(Tok::Num(v));
                } else {
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                    let v: u32 = text[start..i].parse().map_err(|_| {
                        ParseError::new(span, format!("literal '{}' out of range", &text[start..i]))
                    })?;
                    items.push(Tok::Num(v));
                }
                continue;
            }
            let two = if i + 1 < bytes.len() {
                &text[i..i + 2]
            } else {
                ""
            };
            if matches!(two, ":=" | "!=" | "<=" | ">=") {
                items.push(Tok::Sym(&text[i..i + 2]));
                i += 2;
                continue;
            }
            if "=<>|^&+-*(),:".contains(c) {
                items.push(Tok::Sym(&text[i..i + 1]));
                i += 1;
                continue;
            }
            return Err(ParseError::new(
                span,
                format!("unexpected character '{}'", c),
            ));
        }
        Ok(Tokens {
            items,
            pos: 0,
            span,
        })
    }

    fn accept(&mut self, what: &str) -> bool {
        match self.items.get(self.pos) {
            Some(Tok::Sym(s)) if *s == what => {
                self.pos += 1;
                true
            }
            Some(Tok::Word(w)) if *w == what => {
                self.pos += 1;
                true
            }
            _ => false,
        }
    }

    fn expect(&mut self, what: &str) -> Result<(), ParseError> {
        if self.accept(what) {
            Ok(())
        } else {
            Err(ParseError::new(
                self.span,
                match self.items.get(self.pos) {
                    Some(t) => format!("expected '{}', found '{}'", what, t),
                    None => format!("expected '{}' at end of line", what),
                },
            ))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.items.get(self.pos) {
            Some(Tok::Word(w)) => {
                self.pos += 1;
                Ok((*w).to_string())
            }
            other => Err(ParseError::new(
                self.span,
                match other {
                    Some(t) => format!("expected {} identifier, found '{}'", what, t),
                    None => format!("expected {} identifier at end of line", what),
                },
            )),
        }
    }

    fn width(&mut self) -> Result<Width, ParseError> {
        let w = self.ident("width")?;
        match w.as_str() {
            "u8" => Ok(Width::W8),
            "u16" => Ok(Width::W16),
            "u32" => Ok(Width::W32),
            other => Err(ParseError::new(
                self.span,
                format!("unknown width '{}', expected u8/u16/u32", other),
            )),
        }
    }

    fn number(&mut self) -> Result<u32, ParseError> {
        match self.try_number()? {
            Some(n) => Ok(n),
            None => Err(ParseError::new(
                self.span,
                match self.items.get(self.pos) {
                    Some(t) => format!("expected a number, found '{}'", t),
                    None => "expected a number at end of line".to_string(),
                },
            )),
        }
    }

    fn try_number(&mut self) -> Result<Option<u32>, ParseError> {
        match self.items.get(self.pos) {
            Some(Tok::Num(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(Some(n))
            }
            Some(Tok::Word(w)) if *w == "IO_ON" => {
                self.pos += 1;
                Ok(Some(IO_ON as u32))
            }
            Some(Tok::Word(w)) if *w == "IO_OFF" => {
                self.pos += 1;
                Ok(Some(IO_OFF as u32))
            }
            _ => Ok(None),
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        match self.items.get(self.pos) {
            None => Ok(()),
            Some(t) => Err(ParseError::new(
                self.span,
                format!("unexpected trailing '{}'", t),
            )),
        }
    }
}
