//! Shared helpers for the integration suites: fixture access, image
//! building, and seeded grammar-driven generation of random programs and
//! random relay circuits.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use vigil::codegen::{compile_a, compile_b, link, MemoryLayoutConfig, ProgramImage};
use vigil::kernel::{
    resolve, BitOp, CmpOp, CyclicProgram, Expr, IoConfig, ModOp, Resolved, Span, Stmt, VarDecl,
    VarKind, Width, IO_OFF, IO_ON,
};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name))
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn build_image(resolved: &Resolved) -> ProgramImage {
    let a = compile_a(resolved).expect("path A compiles");
    let b = compile_b(resolved).expect("path B compiles");
    link(&a, &b, &MemoryLayoutConfig::default(), resolved.io).expect("links")
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Grammar-driven random kernel programs.
//
// Generated programs are valid by construction: modular operators only,
// single-comparison IFs, locals typed before use, and output registers only
// ever assigned valid wire codes (so differential runs never trip the vital
// check).

pub struct ProgramGen {
    rng: StdRng,
}

struct GenVars {
    inputs: Vec<String>,
    outputs: Vec<String>,
    state: Vec<(String, Width)>,
    consts: Vec<(String, Width)>,
    locals: Vec<Vec<(String, Width)>>,
    counter: usize,
}

impl GenVars {
    fn readable_of_width(&self, width: Width) -> Vec<Expr> {
        let mut out: Vec<Expr> = Vec::new();
        for (name, w) in &self.state {
            if *w == width {
                out.push(Expr::var(name.clone()));
            }
        }
        for (name, w) in &self.consts {
            if *w == width {
                out.push(Expr::var(name.clone()));
            }
        }
        for scope in &self.locals {
            for (name, w) in scope {
                if *w == width {
                    out.push(Expr::var(name.clone()));
                }
            }
        }
        if width == Width::W8 {
            for name in &self.inputs {
                out.push(Expr::var(name.clone()));
            }
            for name in &self.outputs {
                out.push(Expr::new(
                    vigil::kernel::ExprKind::Feedback(name.clone()),
                    Span::none(),
                ));
            }
        }
        out
    }
}

impl ProgramGen {
    pub fn new(seed: u64) -> Self {
        ProgramGen { rng: seeded(seed) }
    }

    pub fn gen_program(&mut self) -> CyclicProgram {
        let io = IoConfig::default();
        let n_inputs = self.rng.gen_range(1..=4usize);
        let n_outputs = self.rng.gen_range(1..=3usize);
        let n_state = self.rng.gen_range(1..=6usize);
        let n_consts = self.rng.gen_range(0..=2usize);
        let mut vars = GenVars {
            inputs: (0..n_inputs).map(|i| format!("in{}", i)).collect(),
            outputs: (0..n_outputs).map(|i| format!("out{}", i)).collect(),
            state: (0..n_state)
                .map(|i| (format!("st{}", i), self.width()))
                .collect(),
            consts: (0..n_consts)
                .map(|i| (format!("kc{}", i), self.width()))
                .collect(),
            locals: vec![Vec::new()],
            counter: 0,
        };
        let mut decls = Vec::new();
        for (i, name) in vars.inputs.iter().enumerate() {
            decls.push(VarDecl {
                name: name.clone(),
                width: Width::W8,
                kind: VarKind::Input { pin: i as u8 + 1 },
                span: Span::none(),
            });
        }
        for (i, name) in vars.outputs.iter().enumerate() {
            decls.push(VarDecl {
                name: name.clone(),
                width: Width::W8,
                kind: VarKind::Output { pin: i as u8 + 1 },
                span: Span::none(),
            });
        }
        for (name, width) in &vars.state {
            decls.push(VarDecl {
                name: name.clone(),
                width: *width,
                kind: VarKind::State,
                span: Span::none(),
            });
        }
        for (name, width) in &vars.consts {
            let value = self.rng.gen::<u32>() & width.mask();
            decls.push(VarDecl {
                name: name.clone(),
                width: *width,
                kind: VarKind::Const { value },
                span: Span::none(),
            });
        }
        // INIT seeds a few state variables with fixed values.
        let mut init = Vec::new();
        for (name, width) in &vars.state {
            if self.rng.gen_bool(0.5) {
                init.push(Stmt::assign(
                    name.clone(),
                    Expr::lit(self.rng.gen::<u32>() & width.mask()),
                ));
            }
        }
        let len = self.rng.gen_range(3..=12usize);
        let logic = self.gen_block(&mut vars, len, 2);
        CyclicProgram {
            decls,
            init,
            logic,
            io,
        }
    }

    fn width(&mut self) -> Width {
        match self.rng.gen_range(0..3) {
            0 => Width::W8,
            1 => Width::W16,
            _ => Width::W32,
        }
    }

    fn gen_block(&mut self, vars: &mut GenVars, len: usize, depth: usize) -> Vec<Stmt> {
        vars.locals.push(Vec::new());
        let mut out = Vec::new();
        for _ in 0..len {
            out.push(self.gen_stmt(vars, depth));
        }
        vars.locals.pop();
        out
    }

    fn gen_stmt(&mut self, vars: &mut GenVars, depth: usize) -> Stmt {
        let choice = self.rng.gen_range(0..10);
        match choice {
            // Assign a state variable.
            0..=3 => {
                let idx = self.rng.gen_range(0..vars.state.len());
                let (name, width) = vars.state[idx].clone();
                let value = self.gen_expr(vars, width, 2);
                Stmt::assign(name, value)
            }
            // Drive an output with a valid wire code.
            4..=5 => {
                let idx = self.rng.gen_range(0..vars.outputs.len());
                let name = vars.outputs[idx].clone();
                let value = self.gen_code_expr(vars);
                Stmt::assign(name, value)
            }
            // Introduce a local.
            6 => {
                let width = self.width();
                let name = format!("t{}", vars.counter);
                vars.counter += 1;
                let value = self.gen_expr(vars, width, 2);
                vars.locals
                    .last_mut()
                    .expect("scope stack non-empty")
                    .push((name.clone(), width));
                Stmt::local(name, width, value)
            }
            // Nested IF with a single comparison.
            _ if depth > 0 => {
                let width = self.width();
                let lhs = self.gen_expr(vars, width, 1);
                let rhs = self.gen_expr(vars, width, 1);
                let op = self.cmp();
                let then_len = self.rng.gen_range(1..=3usize);
                let then_block = self.gen_block(vars, then_len, depth - 1);
                let else_block = if self.rng.gen_bool(0.5) {
                    let else_len = self.rng.gen_range(1..=3usize);
                    self.gen_block(vars, else_len, depth - 1)
                } else {
                    Vec::new()
                };
                Stmt::if_else(Expr::cmp(op, lhs, rhs), then_block, else_block)
            }
            _ => {
                let idx = self.rng.gen_range(0..vars.state.len());
                let (name, width) = vars.state[idx].clone();
                let value = self.gen_expr(vars, width, 1);
                Stmt::assign(name, value)
            }
        }
    }

    fn cmp(&mut self) -> CmpOp {
        match self.rng.gen_range(0..6) {
            0 => CmpOp::Eq,
            1 => CmpOp::Ne,
            2 => CmpOp::Lt,
            3 => CmpOp::Le,
            4 => CmpOp::Gt,
            _ => CmpOp::Ge,
        }
    }

    /// An expression guaranteed to evaluate to a valid wire code.
    fn gen_code_expr(&mut self, vars: &mut GenVars) -> Expr {
        match self.rng.gen_range(0..4) {
            0 => Expr::lit(IO_ON as u32),
            1 => Expr::lit(IO_OFF as u32),
            2 => {
                let idx = self.rng.gen_range(0..vars.inputs.len());
                Expr::var(vars.inputs[idx].clone())
            }
            _ => {
                let idx = self.rng.gen_range(0..vars.outputs.len());
                Expr::new(
                    vigil::kernel::ExprKind::Feedback(vars.outputs[idx].clone()),
                    Span::none(),
                )
            }
        }
    }

    fn gen_expr(&mut self, vars: &mut GenVars, width: Width, depth: usize) -> Expr {
        if depth == 0 || self.rng.gen_bool(0.35) {
            let candidates = vars.readable_of_width(width);
            if candidates.is_empty() || self.rng.gen_bool(0.4) {
                return Expr::lit(self.rng.gen::<u32>() & width.mask());
            }
            let idx = self.rng.gen_range(0..candidates.len());
            return candidates[idx].clone();
        }
        match self.rng.gen_range(0..8) {
            0..=3 => {
                let op = match self.rng.gen_range(0..3) {
                    0 => ModOp::Add,
                    1 => ModOp::Sub,
                    _ => ModOp::Mul,
                };
                let lhs = self.gen_expr(vars, width, depth - 1);
                let rhs = self.gen_expr(vars, width, depth - 1);
                Expr::mod_arith(op, width, lhs, rhs)
            }
            4..=5 => {
                let op = match self.rng.gen_range(0..3) {
                    0 => BitOp::And,
                    1 => BitOp::Or,
                    _ => BitOp::Xor,
                };
                let lhs = self.gen_expr(vars, width, depth - 1);
                let rhs = self.gen_expr(vars, width, depth - 1);
                Expr::bit(op, lhs, rhs)
            }
            6 if width == Width::W32 => Expr::new(vigil::kernel::ExprKind::GetMsTick, Span::none()),
            _ if width == Width::W32 && self.rng.gen_bool(0.3) => {
                let inner = self.gen_expr(vars, Width::W32, depth - 1);
                Expr::since(inner)
            }
            _ => {
                let lhs = self.gen_expr(vars, width, depth - 1);
                let rhs = self.gen_expr(vars, width, depth - 1);
                Expr::mod_arith(ModOp::Add, width, lhs, rhs)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Random relay circuits.

pub struct CircuitGen {
    rng: StdRng,
}

impl CircuitGen {
    pub fn new(seed: u64) -> Self {
        CircuitGen { rng: seeded(seed) }
    }

    /// A netlist with up to `max_relays` relays and `max_inputs` inputs,
    /// rendered in the `.rly` text format.
    pub fn gen_netlist_text(&mut self, max_relays: usize, max_inputs: usize) -> String {
        let relays = self.rng.gen_range(1..=max_relays);
        let inputs = self.rng.gen_range(1..=max_inputs);
        let outputs = self.rng.gen_range(1..=3usize);
        let mut text = String::from("RELAYS\n");
        for r in 0..relays {
            text.push_str(&format!("    K{}\n", r));
        }
        text.push_str("INPUTS\n");
        for i in 0..inputs {
            text.push_str(&format!("    in{}\n", i));
        }
        text.push_str("OUTPUTS\n");
        for o in 0..outputs {
            text.push_str(&format!("    lamp{}\n", o));
        }
        text.push_str("STRANDS\n");
        let contacts = |rng: &mut StdRng, text: &mut String| {
            for _ in 0..rng.gen_range(0..=2usize) {
                let relay = rng.gen_range(0..relays);
                let kind = if rng.gen_bool(0.6) { "no" } else { "nc" };
                text.push_str(&format!("{}(K{}) , ", kind, relay));
            }
        };
        // One powering strand per relay, occasionally through a junction.
        for r in 0..relays {
            let source = if self.rng.gen_bool(0.5) {
                "P+".to_string()
            } else {
                format!("in(in{})", self.rng.gen_range(0..inputs))
            };
            if self.rng.gen_bool(0.25) {
                text.push_str(&format!("    {} , ", source));
                contacts(&mut self.rng, &mut text);
                text.push_str(&format!("node(J{})\n", r));
                text.push_str(&format!("    node(J{}) , coil(K{}) , N-\n", r, r));
            } else {
                text.push_str(&format!("    {} , ", source));
                contacts(&mut self.rng, &mut text);
                text.push_str(&format!("coil(K{}) , N-\n", r));
            }
        }
        for o in 0..outputs {
            let source = if self.rng.gen_bool(0.7) {
                "P+".to_string()
            } else {
                format!("in(in{})", self.rng.gen_range(0..inputs))
            };
            text.push_str(&format!("    {} , ", source));
            contacts(&mut self.rng, &mut text);
            text.push_str(&format!("out(lamp{})\n", o));
        }
        text
    }
}

/// Resolve-or-panic with a readable report.
pub fn must_resolve(program: &CyclicProgram) -> Resolved {
    match resolve(program) {
        Ok(r) => r,
        Err(report) => panic!("generated program must validate:\n{}", report.to_lines()),
    }
}
