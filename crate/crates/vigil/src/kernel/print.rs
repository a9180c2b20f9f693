//! Renders a program back to `.ckp` source. `parse(print(p))` is structurally
//! identical to `p` for valid programs.

use std::fmt::Write;

use super::ast::*;

pub fn to_source(program: &CyclicProgram) -> String {
    let mut s = String::new();
    section(&mut s, program, "CONSTANTS", |d| {
        matches!(d.kind, VarKind::Const { .. })
    });
    section(&mut s, program, "INPUTS", |d| d.kind.is_input());
    section(&mut s, program, "OUTPUTS", |d| d.kind.is_output());
    section(&mut s, program, "STATE", |d| d.kind == VarKind::State);
    if !program.init.is_empty() {
        s.push_str("INIT\n");
        block(&mut s, &program.init, 1);
    }
    s.push_str("LOGIC\n");
    block(&mut s, &program.logic, 1);
    s
}

fn section(s: &mut String, program: &CyclicProgram, header: &str, pred: fn(&VarDecl) -> bool) {
    let decls: Vec<_> = program.decls.iter().filter(|d| pred(d)).collect();
    if decls.is_empty() {
        return;
    }
    s.push_str(header);
    s.push('\n');
    for d in decls {
        match d.kind {
            VarKind::Const { value } => {
                let _ = writeln!(s, "    {} : {} = {}", d.name, d.width, value);
            }
            VarKind::Input { pin } | VarKind::Output { pin } => {
                let _ = writeln!(s, "    {} : {} pin {}", d.name, d.width, pin);
            }
            VarKind::State => {
                let _ = writeln!(s, "    {} : {}", d.name, d.width);
            }
        }
    }
}

fn block(s: &mut String, stmts: &[Stmt], depth: usize) {
    for stmt in stmts {
        stmt_line(s, stmt, depth);
    }
}

fn stmt_line(s: &mut String, stmt: &Stmt, depth: usize) {
    let pad = "    ".repeat(depth);
    match &stmt.kind {
        StmtKind::Assign { target, value } => {
            let _ = writeln!(s, "{}{} := {}", pad, target, expr(value));
        }
        StmtKind::Local { name, width, value } => {
            let _ = writeln!(s, "{}local {} : {} := {}", pad, name, width, expr(value));
        }
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            let _ = writeln!(s, "{}IF {}", pad, expr(cond));
            block(s, then_block, depth + 1);
            if !else_block.is_empty() {
                let _ = writeln!(s, "{}ELSE", pad);
                block(s, else_block, depth + 1);
            }
        }
    }
}

fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Var(name) => name.clone(),
        ExprKind::Lit(v) => {
            if *v == IO_ON as u32 {
                "IO_ON".to_string()
            } else if *v == IO_OFF as u32 {
                "IO_OFF".to_string()
            } else {
                v.to_string()
            }
        }
        ExprKind::ModArith(op, w, l, r) => {
            format!("{}{}({}, {})", op.name(), w.bits(), expr(l), expr(r))
        }
        ExprKind::PlainArith(op, l, r) => {
            format!("({} {} {})", expr(l), op.symbol(), expr(r))
        }
        ExprKind::Cmp(op, l, r) => format!("{} {} {}", expr(l), op.symbol(), expr(r)),
        ExprKind::Bit(op, l, r) => format!("({} {} {})", expr(l), op.symbol(), expr(r)),
        ExprKind::Logic(op, l, r) => format!("({} {} {})", expr(l), op.keyword(), expr(r)),
        ExprKind::GetMsTick => "get_ms_tick()".to_string(),
        ExprKind::Since(inner) => format!("since({})", expr(inner)),
        ExprKind::Feedback(name) => format!("feedback({})", name),
    }
}
