//! Canonical printing.
//!
//! One layout per program: 2-space indentation, condition atoms in sorted
//! order, minimal parentheses. Printing then reparsing yields a structurally
//! equal AST, and two structurally equal ASTs print identically.

use super::ast::{BinOp, Condition, Expr, SkillProgram, Statement};

pub fn print_skill(p: &SkillProgram) -> String {
    let mut out = String::new();
    out.push_str("skill ");
    out.push_str(&p.name);
    out.push('(');
    for (i, param) in p.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&param.name);
        out.push_str(": ");
        out.push_str(param.kind.keyword());
        if let Some(default) = &param.default {
            out.push_str(" = ");
            out.push_str(&default.to_string());
        }
    }
    out.push_str(")\n");
    print_condition_block(&mut out, "pre", p.pre.atoms());
    print_condition_block(&mut out, "post", p.post.atoms());
    if p.body.is_empty() {
        out.push_str("{}\n");
    } else {
        out.push_str("{\n");
        for stmt in &p.body {
            print_stmt(&mut out, stmt, 1);
        }
        out.push_str("}\n");
    }
    out
}

fn print_condition_block(out: &mut String, keyword: &str, atoms: &[Condition]) {
    if atoms.is_empty() {
        out.push_str(keyword);
        out.push_str(" {}\n");
    } else {
        out.push_str(keyword);
        out.push_str(" {\n");
        for atom in atoms {
            out.push_str("  ");
            out.push_str(&print_condition(atom));
            out.push_str(";\n");
        }
        out.push_str("}\n");
    }
}

pub fn print_statement(stmt: &Statement) -> String {
    let mut out = String::new();
    print_stmt(&mut out, stmt, 0);
    out
}

fn print_stmt(out: &mut String, stmt: &Statement, depth: usize) {
    let pad = "  ".repeat(depth);
    match stmt {
        Statement::CallPrimitive { name, args } => {
            out.push_str(&pad);
            out.push_str("prim ");
            print_call(out, name, args);
        }
        Statement::CallSkill { name, args } => {
            out.push_str(&pad);
            out.push_str("call ");
            print_call(out, name, args);
        }
        Statement::If {
            cond,
            then_body,
            else_body,
        } => {
            out.push_str(&pad);
            out.push_str("if (");
            out.push_str(&print_condition(cond));
            out.push_str(") ");
            print_block(out, then_body, depth);
            if !else_body.is_empty() {
                out.push_str(" else ");
                print_block(out, else_body, depth);
            }
            out.push('\n');
        }
        Statement::Repeat { count, body } => {
            out.push_str(&pad);
            out.push_str("repeat (");
            out.push_str(&print_expr(count));
            out.push_str(") ");
            print_block(out, body, depth);
            out.push('\n');
        }
        Statement::Let { var, value } => {
            out.push_str(&pad);
            out.push_str("let ");
            out.push_str(var);
            out.push_str(" = ");
            out.push_str(&print_expr(value));
            out.push_str(";\n");
        }
        Statement::Assert { cond } => {
            out.push_str(&pad);
            out.push_str("assert (");
            out.push_str(&print_condition(cond));
            out.push_str(");\n");
        }
    }
}

fn print_call(out: &mut String, name: &str, args: &[Expr]) {
    out.push_str(name);
    out.push('(');
    for (i, arg) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&print_expr(arg));
    }
    out.push_str(");\n");
}

fn print_block(out: &mut String, body: &[Statement], depth: usize) {
    if body.is_empty() {
        out.push_str("{}");
        return;
    }
    out.push_str("{\n");
    for stmt in body {
        print_stmt(out, stmt, depth + 1);
    }
    out.push_str(&"  ".repeat(depth));
    out.push('}');
}

pub fn print_condition(cond: &Condition) -> String {
    match cond {
        Condition::InventoryAtLeast { item, count } => {
            format!("inv({}) >= {}", print_expr(item), print_expr(count))
        }
        Condition::StationPlaced { station } => format!("station({})", print_expr(station)),
        Condition::ToolTierAtLeast { tier } => format!("tooltier >= {tier}"),
        Condition::ParamCompare { lhs, rel, rhs } => {
            format!("{} {} {}", print_expr(lhs), rel.symbol(), print_expr(rhs))
        }
    }
}

pub fn print_expr(expr: &Expr) -> String {
    print_expr_prec(expr, 0)
}

// Precedence levels: 1 for +/-, 2 for */su. Parentheses appear only when a
// child binds looser than its context.
fn print_expr_prec(expr: &Expr, min_prec: u8) -> String {
    match expr {
        Expr::Int(n) => n.to_string(),
        Expr::Ident(name) => name.clone(),
        Expr::Binary { op, lhs, rhs } => {
            let prec = match op {
                BinOp::Add | BinOp::Sub => 1,
                BinOp::Mul | BinOp::Div => 2,
            };
            // Left-associative: the right child needs strictly higher binding.
            let s = format!(
                "{} {} {}",
                print_expr_prec(lhs, prec),
                op.symbol(),
                print_expr_prec(rhs, prec + 1)
            );
            if prec < min_prec {
                format!("({s})")
            } else {
                s
            }
        }
        Expr::Min(a, b) => format!("min({}, {})", print_expr_prec(a, 0), print_expr_prec(b, 0)),
        Expr::Capacity(item) => format!("capacity({})", print_expr_prec(item, 0)),
    }
}
