//! Safety properties (`.prop`): one named propositional invariant per line
//! over input and output registers, checked on settled post-cycle states.
//!
//! ```text
//! signal_exclusion: o_green = ON => (o_orange = OFF & o_red = OFF)
//! red_follows_manual: i_cmd_m = ON => o_red = ON
//! ```

use thiserror::Error;

use crate::kernel::{IO_OFF, IO_ON};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    True,
    False,
    /// `<register> = ON|OFF`.
    Atom {
        register: String,
        on: bool,
    },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

impl Formula {
    /// Evaluate over a register valuation. `level` maps a register name to
    /// its wire state; unknown registers read as off.
    pub fn eval(&self, level: &dyn Fn(&str) -> bool) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom { register, on } => level(register) == *on,
            Formula::Not(f) => !f.eval(level),
            Formula::And(a, b) => a.eval(level) && b.eval(level),
            Formula::Or(a, b) => a.eval(level) || b.eval(level),
            Formula::Implies(a, b) => !a.eval(level) || b.eval(level),
        }
    }

    /// Register names the formula mentions.
    pub fn registers(&self) -> Vec<&str> {
        fn collect<'a>(f: &'a Formula, out: &mut Vec<&'a str>) {
            match f {
                Formula::Atom { register, .. } => out.push(register),
                Formula::Not(inner) => collect(inner, out),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    collect(a, out);
                    collect(b, out);
                }
                Formula::True | Formula::False => {}
            }
        }
        let mut out = Vec::new();
        collect(self, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Property {
    pub name: String,
    pub formula: Formula,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("property parse error line {line}: {message}")]
pub struct PropertyParseError {
    pub line: u32,
    pub message: String,
}

fn err(line: u32, message: impl Into<String>) -> PropertyParseError {
    PropertyParseError {
        line,
        message: message.into(),
    }
}

pub fn parse_properties(text: &str) -> Result<Vec<Property>, PropertyParseError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u32 + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (name, rest) = line
            .split_once(':')
            .ok_or_else(|| err(line_no, "expected '<name>: <formula>'"))?;
        let mut p = Parser {
            text: rest,
            pos: 0,
            line: line_no,
        };
        let formula = p.implies()?;
        p.skip_ws();
        if p.pos != p.text.len() {
            return Err(err(
                line_no,
                format!("trailing input '{}'", &p.text[p.pos..]),
            ));
        }
        out.push(Property {
            name: name.trim().to_string(),
            formula,
        });
    }
    Ok(out)
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    line: u32,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(' ') {
            self.pos += 1;
        }
    }

    fn accept(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.text[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    // Precedence, loosest first: =>, |, &, !, atom.
    fn implies(&mut self) -> Result<Formula, PropertyParseError> {
        let lhs = self.or()?;
        if self.accept("=>") {
            let rhs = self.implies()?; // right-associative
            return Ok(Formula::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, PropertyParseError> {
        let mut lhs = self.and()?;
        while self.peek_sym('|') {
            self.accept("|");
            let rhs = self.and()?;
            lhs = Formula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, PropertyParseError> {
        let mut lhs = self.unary()?;
        while self.peek_sym('&') {
            self.accept("&");
            let rhs = self.unary()?;
            lhs = Formula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn peek_sym(&mut self, c: char) -> bool {
        self.skip_ws();
        self.text[self.pos..].starts_with(c)
    }

    fn unary(&mut self) -> Result<Formula, PropertyParseError> {
        self.skip_ws();
        if self.accept("!") {
            let inner = self.unary()?;
            return Ok(Formula::Not(Box::new(inner)));
        }
        if self.accept("(") {
            let inner = self.implies()?;
            if !self.accept(")") {
                return Err(err(self.line, "missing ')'"));
            }
            return Ok(inner);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Formula, PropertyParseError> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        if end == 0 {
            return Err(err(self.line, "expected an atom"));
        }
        let word = &rest[..end];
        self.pos += end;
        match word {
            "true" => return Ok(Formula::True),
            "false" => return Ok(Formula::False),
            _ => {}
        }
        if !self.accept("=") {
            return Err(err(self.line, format!("expected '=' after '{}'", word)));
        }
        self.skip_ws();
        let on = if self.accept("ON") {
            true
        } else if self.accept("OFF") {
            false
        } else {
            return Err(err(self.line, "expected ON or OFF"));
        };
        Ok(Formula::Atom {
            register: word.to_string(),
            on,
        })
    }
}

impl std::fmt::Display for Formula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom { register, on } => {
                write!(f, "{} = {}", register, if *on { "ON" } else { "OFF" })
            }
            Formula::Not(inner) => write!(f, "!({})", inner),
            Formula::And(a, b) => write!(f, "({} & {})", a, b),
            Formula::Or(a, b) => write!(f, "({} | {})", a, b),
            Formula::Implies(a, b) => write!(f, "({} => {})", a, b),
        }
    }
}

/// Wire-level helper shared by the checker and the replay path.
pub fn code_is_on(code: u32) -> Option<bool> {
    if code == IO_ON as u32 {
        Some(true)
    } else if code == IO_OFF as u32 {
        Some(false)
    } else {
        None
    }
}
