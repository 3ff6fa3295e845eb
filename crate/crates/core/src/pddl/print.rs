//! Canonical PDDL printer. Output re-parses to a structurally equal domain.

use std::fmt::Write;

use super::ast::*;

pub fn print_domain(spec: &DomainSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", spec.name);
    if !spec.requirements.is_empty() {
        let reqs: Vec<String> = spec.requirements.iter().map(|r| format!(":{r}")).collect();
        let _ = writeln!(out, "  (:requirements {})", reqs.join(" "));
    }
    if !spec.types.is_empty() {
        out.push_str("  (:types\n");
        for t in &spec.types {
            let _ = writeln!(out, "    {} - {}", t.name, t.parent);
        }
        out.push_str("  )\n");
    }
    if !spec.constants.is_empty() {
        out.push_str("  (:constants\n");
        for c in &spec.constants {
            let _ = writeln!(out, "    {} - {}", c.name, c.ty);
        }
        out.push_str("  )\n");
    }
    if !spec.predicates.is_empty() {
        out.push_str("  (:predicates\n");
        for p in &spec.predicates {
            let _ = writeln!(out, "    ({}{})", p.name, params(&p.params));
        }
        out.push_str("  )\n");
    }
    if !spec.functions.is_empty() {
        out.push_str("  (:functions\n");
        for f in &spec.functions {
            let range = match f.range {
                FunctionRange::Integer => "integer",
                FunctionRange::BitMatrix => "bit-matrix",
            };
            let _ = writeln!(out, "    ({}{}) - {range}", f.name, params(&f.params));
        }
        out.push_str("  )\n");
    }
    for d in &spec.derived {
        let _ = writeln!(
            out,
            "  (:derived ({}{}) {})",
            d.predicate,
            d.params.iter().map(|p| format!(" {p}")).collect::<String>(),
            formula(&d.body)
        );
    }
    for a in &spec.actions {
        let _ = writeln!(out, "  (:action {}", a.name);
        let _ = writeln!(out, "    :parameters ({})", params(&a.params).trim_start());
        let _ = writeln!(out, "    :precondition {}", formula(&a.precondition));
        let _ = writeln!(out, "    :effect {}", effects(&a.effects));
        out.push_str("  )\n");
    }
    out.push_str(")\n");
    out
}

fn params(ps: &[TypedName]) -> String {
    ps.iter().map(|p| format!(" {} - {}", p.name, p.ty)).collect()
}

fn terms(ts: &[Term]) -> String {
    ts.iter().map(|t| format!(" {}", t.name())).collect()
}

pub fn atom(a: &Atom) -> String {
    format!("({}{})", a.predicate, terms(&a.args))
}

pub fn formula(f: &Formula) -> String {
    match f {
        Formula::And(items) => list("and", items.iter().map(formula)),
        Formula::Or(items) => list("or", items.iter().map(formula)),
        Formula::Not(inner) => format!("(not {})", formula(inner)),
        Formula::Atom(a) => atom(a),
        Formula::Cmp { op, lhs, rhs } => format!("({} {} {})", op.symbol(), expr(lhs), expr(rhs)),
    }
}

fn list(head: &str, items: impl Iterator<Item = String>) -> String {
    let mut s = format!("({head}");
    for i in items {
        s.push(' ');
        s.push_str(&i);
    }
    s.push(')');
    s
}

pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Int(n) => n.to_string(),
        Expr::Bool(b) => b.to_string(),
        Expr::Term(t) => t.name().to_owned(),
        Expr::Func { name, args } => format!("({name}{})", terms(args)),
        Expr::Add(a, b) => format!("(+ {} {})", expr(a), expr(b)),
        Expr::Sub(a, b) => format!("(- {} {})", expr(a), expr(b)),
        Expr::Neg(a) => format!("(- {})", expr(a)),
        Expr::GetIndex { matrix, row, col } => {
            format!("(get-index {matrix} {} {})", expr(row), expr(col))
        }
    }
}

fn target(t: &FluentTarget) -> String {
    match t {
        FluentTarget::Func { name, args } => format!("({name}{})", terms(args)),
        FluentTarget::Cell { matrix, row, col } => {
            format!("(get-index {matrix} {} {})", expr(row), expr(col))
        }
    }
}

fn effect(e: &Effect) -> String {
    match e {
        Effect::Add(a) => atom(a),
        Effect::Del(a) => format!("(not {})", atom(a)),
        Effect::Assign(t, v) => format!("(assign {} {})", target(t), expr(v)),
        Effect::Increase(t, v) => format!("(increase {} {})", target(t), expr(v)),
        Effect::Decrease(t, v) => format!("(decrease {} {})", target(t), expr(v)),
        Effect::When(c, es) => format!("(when {} {})", formula(c), effects(es)),
    }
}

pub fn effects(es: &[Effect]) -> String {
    list("and", es.iter().map(effect))
}
