//! Reader for the supported PDDL dialect.
//!
//! The dialect covers typed STRIPS with integer fluents, bit-matrix terrain
//! functions addressed through `get-index`, derived predicates, equality and
//! comparisons, and `assign`/`increase`/`decrease`/`when` effects. Anything
//! outside it is rejected with the position of the offending construct.

use std::collections::BTreeSet;

use super::ast::*;
use super::sexpr::{read_all, SExpr, Span};
use super::PddlError;

/// Requirement flags accepted in `:requirements`.
pub const SUPPORTED_REQUIREMENTS: [&str; 9] = [
    "strips",
    "typing",
    "fluents",
    "numeric-fluents",
    "adl",
    "equality",
    "negative-preconditions",
    "derived-predicates",
    "conditional-effects",
];

fn syntax(span: Span, message: impl Into<String>, expected: Option<&str>) -> PddlError {
    PddlError::Syntax {
        line: span.line,
        col: span.col,
        message: message.into(),
        expected: expected.map(str::to_owned),
    }
}

fn unsupported(span: Span, construct: impl Into<String>) -> PddlError {
    PddlError::Unsupported {
        line: span.line,
        col: span.col,
        construct: construct.into(),
    }
}

fn duplicate(span: Span, what: &str, name: &str) -> PddlError {
    PddlError::Duplicate {
        line: span.line,
        col: span.col,
        what: what.to_owned(),
        name: name.to_owned(),
    }
}

fn atom_text(e: &SExpr, expected: &str) -> Result<String, PddlError> {
    e.as_atom()
        .map(str::to_owned)
        .ok_or_else(|| syntax(e.span(), "expected a name", Some(expected)))
}

/// Parses a domain definition.
pub fn parse_domain(text: &str) -> Result<DomainSpec, PddlError> {
    let top = read_all(text)?;
    let define = match top.as_slice() {
        [one] => one,
        [] => {
            return Err(syntax(
                Span { line: 1, col: 1 },
                "empty document",
                Some("(define ...)"),
            ))
        }
        [_, second, ..] => {
            return Err(syntax(
                second.span(),
                "more than one top-level form",
                Some("end of input"),
            ))
        }
    };
    let items = define
        .as_list()
        .ok_or_else(|| syntax(define.span(), "expected a list", Some("(define ...)")))?;
    if define.head_keyword().as_deref() != Some("define") {
        return Err(syntax(define.span(), "expected `define`", Some("define")));
    }
    let name_form = items
        .get(1)
        .ok_or_else(|| syntax(define.span(), "missing domain name", Some("(domain <name>)")))?;
    let name = match name_form.as_list() {
        Some([kw, n]) if kw.as_atom().map(str::to_ascii_lowercase).as_deref() == Some("domain") => {
            atom_text(n, "domain name")?
        }
        _ => {
            return Err(syntax(
                name_form.span(),
                "malformed domain header",
                Some("(domain <name>)"),
            ))
        }
    };

    let mut sections: Vec<(String, &SExpr)> = Vec::new();
    let mut seen_once = BTreeSet::new();
    for sec in &items[2..] {
        let kw = sec
            .head_keyword()
            .ok_or_else(|| syntax(sec.span(), "expected a section", Some("(:<section> ...)")))?;
        match kw.as_str() {
            ":requirements" | ":types" | ":constants" | ":predicates" | ":functions" => {
                if !seen_once.insert(kw.clone()) {
                    return Err(duplicate(sec.span(), "section", &kw));
                }
            }
            ":derived" | ":action" => {}
            other => return Err(unsupported(sec.span(), other.to_owned())),
        }
        sections.push((kw, sec));
    }

    let mut spec = DomainSpec {
        name,
        requirements: Vec::new(),
        types: Vec::new(),
        constants: Vec::new(),
        predicates: Vec::new(),
        functions: Vec::new(),
        derived: Vec::new(),
        actions: Vec::new(),
    };

    let body = |sec: &SExpr| -> Vec<SExpr> { sec.as_list().unwrap()[1..].to_vec() };
    let find = |k: &str| sections.iter().find(|(kw, _)| kw == k).map(|(_, s)| *s);

    if let Some(sec) = find(":requirements") {
        for r in body(sec) {
            let flag = atom_text(&r, "requirement flag")?;
            let bare = flag.trim_start_matches(':').to_ascii_lowercase();
            if !flag.starts_with(':') || !SUPPORTED_REQUIREMENTS.contains(&bare.as_str()) {
                return Err(PddlError::UnknownRequirement {
                    line: r.span().line,
                    col: r.span().col,
                    flag,
                });
            }
            spec.requirements.push(bare);
        }
    }

    if let Some(sec) = find(":types") {
        for (name, parent, span) in typed_names(&body(sec))? {
            if spec.types.iter().any(|t| t.name == name) || name == ROOT_TYPE {
                return Err(duplicate(span, "type", &name));
            }
            spec.types.push(TypeDecl { name, parent, span });
        }
    }

    if let Some(sec) = find(":constants") {
        for (name, ty, span) in typed_names(&body(sec))? {
            if spec.constants.iter().any(|c| c.name == name) {
                return Err(duplicate(span, "constant", &name));
            }
            spec.constants.push(TypedName { name, ty });
        }
    }

    if let Some(sec) = find(":predicates") {
        for p in body(sec) {
            let items = p
                .as_list()
                .ok_or_else(|| syntax(p.span(), "expected a predicate", Some("(<name> ?x - t ...)")))?;
            let name = atom_text(
                items
                    .first()
                    .ok_or_else(|| syntax(p.span(), "empty predicate", Some("predicate name")))?,
                "predicate name",
            )?;
            if spec.predicates.iter().any(|q| q.name == name) {
                return Err(duplicate(p.span(), "predicate", &name));
            }
            let params = params(&items[1..])?;
            spec.predicates.push(PredicateDecl {
                name,
                params,
                span: p.span(),
            });
        }
    }

    if let Some(sec) = find(":functions") {
        let mut pending: Vec<&SExpr> = Vec::new();
        let items = body(sec);
        let mut i = 0;
        let commit = |pending: &mut Vec<&SExpr>,
                          range: FunctionRange,
                          spec: &mut DomainSpec|
         -> Result<(), PddlError> {
            for f in pending.drain(..) {
                let parts = f.as_list().unwrap();
                let name = atom_text(
                    parts
                        .first()
                        .ok_or_else(|| syntax(f.span(), "empty function", Some("function name")))?,
                    "function name",
                )?;
                if spec.functions.iter().any(|g| g.name == name) {
                    return Err(duplicate(f.span(), "function", &name));
                }
                spec.functions.push(FunctionDecl {
                    name,
                    params: params(&parts[1..])?,
                    range,
                    span: f.span(),
                });
            }
            Ok(())
        };
        while i < items.len() {
            let it = &items[i];
            match it {
                SExpr::List { .. } => pending.push(it),
                SExpr::Atom { text, span } if text == "-" => {
                    let ty = items
                        .get(i + 1)
                        .ok_or_else(|| syntax(*span, "missing function range", Some("integer | bit-matrix")))?;
                    let range = match ty.as_atom().map(str::to_ascii_lowercase).as_deref() {
                        Some("integer") | Some("number") | Some("int") => FunctionRange::Integer,
                        Some("bit-matrix") => FunctionRange::BitMatrix,
                        Some(other) => return Err(unsupported(ty.span(), format!("function range `{other}`"))),
                        None => return Err(syntax(ty.span(), "expected a range name", Some("integer | bit-matrix"))),
                    };
                    commit(&mut pending, range, &mut spec)?;
                    i += 1;
                }
                SExpr::Atom { text, span } => {
                    return Err(syntax(*span, format!("unexpected `{text}` in :functions"), Some("(<function> ...)")))
                }
            }
            i += 1;
        }
        commit(&mut pending, FunctionRange::Integer, &mut spec)?;
    }

    let zero_ary: BTreeSet<String> = spec
        .functions
        .iter()
        .filter(|f| f.params.is_empty())
        .map(|f| f.name.clone())
        .collect();
    let ctx = ExprContext {
        zero_ary,
    };

    for (kw, sec) in &sections {
        match kw.as_str() {
            ":derived" => {
                let items = sec.as_list().unwrap();
                let [_, head, formula] = items else {
                    return Err(syntax(sec.span(), "malformed :derived", Some("(:derived (<pred> ?x ...) <formula>)")));
                };
                let head_items = head
                    .as_list()
                    .ok_or_else(|| syntax(head.span(), "expected a predicate head", Some("(<pred> ?x ...)")))?;
                let predicate = atom_text(
                    head_items
                        .first()
                        .ok_or_else(|| syntax(head.span(), "empty head", Some("predicate name")))?,
                    "predicate name",
                )?;
                if spec.derived.iter().any(|d| d.predicate == predicate) {
                    return Err(duplicate(sec.span(), "derived predicate", &predicate));
                }
                let params = params(&head_items[1..])?
                    .into_iter()
                    .map(|p| p.name)
                    .collect();
                spec.derived.push(DerivedDecl {
                    predicate,
                    params,
                    body: ctx.formula(formula)?,
                    span: sec.span(),
                });
            }
            ":action" => {
                let action = ctx.action(sec)?;
                if spec.actions.iter().any(|a| a.name == action.name) {
                    return Err(duplicate(sec.span(), "action", &action.name));
                }
                spec.actions.push(action);
            }
            _ => {}
        }
    }
    Ok(spec)
}

/// Parses `name* - type` groups; names without a type default to `object`.
fn typed_names(items: &[SExpr]) -> Result<Vec<(String, String, Span)>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<(String, Span)> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let it = &items[i];
        let text = match it {
            SExpr::Atom { text, .. } => text.clone(),
            SExpr::List { span, .. } => {
                let what = it.head_keyword().unwrap_or_default();
                return Err(if what == "either" {
                    unsupported(*span, "either-types")
                } else {
                    syntax(*span, "expected a name", Some("name or `-`"))
                });
            }
        };
        if text == "-" {
            let ty = items
                .get(i + 1)
                .ok_or_else(|| syntax(it.span(), "missing type after `-`", Some("type name")))?;
            if ty.head_keyword().as_deref() == Some("either") {
                return Err(unsupported(ty.span(), "either-types"));
            }
            let ty = atom_text(ty, "type name")?;
            for (n, s) in pending.drain(..) {
                out.push((n, ty.clone(), s));
            }
            i += 2;
            continue;
        }
        pending.push((text, it.span()));
        i += 1;
    }
    for (n, s) in pending {
        out.push((n, ROOT_TYPE.to_owned(), s));
    }
    Ok(out)
}

fn params(items: &[SExpr]) -> Result<Vec<TypedName>, PddlError> {
    typed_names(items)?
        .into_iter()
        .map(|(name, ty, span)| {
            if !name.starts_with('?') {
                return Err(syntax(span, format!("parameter `{name}` must start with `?`"), Some("?variable")));
            }
            Ok(TypedName { name, ty })
        })
        .collect()
}

pub(crate) struct ExprContext {
    pub zero_ary: BTreeSet<String>,
}

impl ExprContext {
    fn action(&self, sec: &SExpr) -> Result<ActionSchema, PddlError> {
        let items = sec.as_list().unwrap();
        let name = atom_text(
            items
                .get(1)
                .ok_or_else(|| syntax(sec.span(), "missing action name", Some("action name")))?,
            "action name",
        )?;
        let mut params_out = Vec::new();
        let mut precondition = Formula::truth();
        let mut effects = Vec::new();
        let mut seen = BTreeSet::new();
        let mut i = 2;
        while i < items.len() {
            let key = &items[i];
            let kw = key
                .as_atom()
                .map(str::to_ascii_lowercase)
                .ok_or_else(|| syntax(key.span(), "expected an action field", Some(":parameters | :precondition | :effect")))?;
            let value = items
                .get(i + 1)
                .ok_or_else(|| syntax(key.span(), format!("missing value for {kw}"), Some("(...)")))?;
            if !seen.insert(kw.clone()) {
                return Err(duplicate(key.span(), "action field", &kw));
            }
            match kw.as_str() {
                ":parameters" => {
                    let list = value
                        .as_list()
                        .ok_or_else(|| syntax(value.span(), "expected a parameter list", Some("(?x - t ...)")))?;
                    params_out = params(list)?;
                }
                ":precondition" => precondition = self.formula(value)?,
                ":effect" => effects = self.effects(value)?,
                other => return Err(unsupported(key.span(), other.to_owned())),
            }
            i += 2;
        }
        Ok(ActionSchema {
            name,
            params: params_out,
            precondition,
            effects,
            span: sec.span(),
        })
    }

    pub fn formula(&self, e: &SExpr) -> Result<Formula, PddlError> {
        let items = e
            .as_list()
            .ok_or_else(|| syntax(e.span(), format!("unexpected `{}`", e.as_atom().unwrap_or("")), Some("(")))?;
        let head = e
            .head_keyword()
            .ok_or_else(|| syntax(e.span(), "empty formula", Some("a formula")))?;
        let rest = &items[1..];
        match head.as_str() {
            "and" => Ok(Formula::And(
                rest.iter().map(|x| self.formula(x)).collect::<Result<_, _>>()?,
            )),
            "or" => Ok(Formula::Or(
                rest.iter().map(|x| self.formula(x)).collect::<Result<_, _>>()?,
            )),
            "not" => match rest {
                [inner] => Ok(Formula::Not(Box::new(self.formula(inner)?))),
                _ => Err(syntax(e.span(), "`not` takes one argument", Some("(not <formula>)"))),
            },
            "imply" | "exists" | "forall" | "preference" => Err(unsupported(e.span(), head)),
            op if CmpOp::from_symbol(op).is_some() => match rest {
                [l, r] => Ok(Formula::Cmp {
                    op: CmpOp::from_symbol(op).unwrap(),
                    lhs: self.expr(l)?,
                    rhs: self.expr(r)?,
                }),
                _ => Err(syntax(e.span(), format!("`{op}` takes two arguments"), Some("two expressions"))),
            },
            _ => Ok(Formula::Atom(self.atom(items)?)),
        }
    }

    fn atom(&self, items: &[SExpr]) -> Result<Atom, PddlError> {
        let predicate = atom_text(&items[0], "predicate name")?;
        let args = items[1..]
            .iter()
            .map(term)
            .collect::<Result<_, _>>()?;
        Ok(Atom { predicate, args })
    }

    pub fn expr(&self, e: &SExpr) -> Result<Expr, PddlError> {
        match e {
            SExpr::Atom { text, .. } => Ok(self.symbol_expr(text)),
            SExpr::List { items, span } => {
                let head = e
                    .head_keyword()
                    .ok_or_else(|| syntax(*span, "empty expression", Some("an expression")))?;
                let rest = &items[1..];
                match head.as_str() {
                    "+" => {
                        let mut parts = rest.iter().map(|x| self.expr(x));
                        let first = parts
                            .next()
                            .ok_or_else(|| syntax(*span, "`+` needs arguments", Some("expressions")))??;
                        parts.try_fold(first, |acc, x| Ok(Expr::Add(Box::new(acc), Box::new(x?))))
                    }
                    "-" => match rest {
                        [x] => Ok(Expr::Neg(Box::new(self.expr(x)?))),
                        [a, b] => Ok(Expr::Sub(Box::new(self.expr(a)?), Box::new(self.expr(b)?))),
                        _ => Err(syntax(*span, "`-` takes one or two arguments", Some("expressions"))),
                    },
                    "get-index" => match rest {
                        [m, r, c] => Ok(Expr::GetIndex {
                            matrix: matrix_name(m)?,
                            row: Box::new(self.expr(r)?),
                            col: Box::new(self.expr(c)?),
                        }),
                        _ => Err(syntax(*span, "`get-index` takes a matrix and two indices", Some("(get-index <matrix> <row> <col>)"))),
                    },
                    "*" | "/" => Err(unsupported(*span, head)),
                    _ => {
                        let name = atom_text(&items[0], "function name")?;
                        let args = rest.iter().map(term).collect::<Result<_, _>>()?;
                        Ok(Expr::Func { name, args })
                    }
                }
            }
        }
    }

    fn symbol_expr(&self, text: &str) -> Expr {
        if let Ok(n) = text.parse::<i64>() {
            return Expr::Int(n);
        }
        match text.to_ascii_lowercase().as_str() {
            "true" => return Expr::Bool(true),
            "false" => return Expr::Bool(false),
            _ => {}
        }
        if text.starts_with('?') {
            Expr::Term(Term::Var(text.to_owned()))
        } else if self.zero_ary.contains(text) {
            Expr::Func {
                name: text.to_owned(),
                args: Vec::new(),
            }
        } else {
            Expr::Term(Term::Const(text.to_owned()))
        }
    }

    pub fn effects(&self, e: &SExpr) -> Result<Vec<Effect>, PddlError> {
        let items = e
            .as_list()
            .ok_or_else(|| syntax(e.span(), "expected an effect", Some("(")))?;
        let head = e.head_keyword().unwrap_or_default();
        let rest = &items[1..];
        match head.as_str() {
            "and" => {
                let mut out = Vec::new();
                for x in rest {
                    out.extend(self.effects(x)?);
                }
                Ok(out)
            }
            "not" => match rest {
                [inner] => {
                    let parts = inner
                        .as_list()
                        .ok_or_else(|| syntax(inner.span(), "expected an atom", Some("(<pred> ...)")))?;
                    if parts.is_empty() {
                        return Err(syntax(inner.span(), "empty atom", Some("(<pred> ...)")));
                    }
                    Ok(vec![Effect::Del(self.atom(parts)?)])
                }
                _ => Err(syntax(e.span(), "`not` takes one argument", Some("(not <atom>)"))),
            },
            "assign" | "increase" | "decrease" => match rest {
                [target, value] => {
                    let t = self.target(target)?;
                    let v = self.expr(value)?;
                    Ok(vec![match head.as_str() {
                        "assign" => Effect::Assign(t, v),
                        "increase" => Effect::Increase(t, v),
                        _ => Effect::Decrease(t, v),
                    }])
                }
                _ => Err(syntax(e.span(), format!("`{head}` takes a target and a value"), Some("two arguments"))),
            },
            "when" => match rest {
                [cond, eff] => Ok(vec![Effect::When(self.formula(cond)?, self.effects(eff)?)]),
                _ => Err(syntax(e.span(), "`when` takes a condition and an effect", Some("(when <formula> <effect>)"))),
            },
            "forall" | "scale-up" | "scale-down" | "or" => Err(unsupported(e.span(), head)),
            "" => Err(syntax(e.span(), "empty effect", Some("an effect"))),
            _ => Ok(vec![Effect::Add(self.atom(items)?)]),
        }
    }

    fn target(&self, e: &SExpr) -> Result<FluentTarget, PddlError> {
        match self.expr(e)? {
            Expr::Func { name, args } => Ok(FluentTarget::Func { name, args }),
            Expr::GetIndex { matrix, row, col } => Ok(FluentTarget::Cell {
                matrix,
                row: *row,
                col: *col,
            }),
            Expr::Term(Term::Const(name)) => Err(syntax(
                e.span(),
                format!("unknown function `{name}`"),
                Some("a function term"),
            )),
            _ => Err(syntax(e.span(), "assignment target must be a function term", Some("(<function> ...)"))),
        }
    }
}

fn matrix_name(e: &SExpr) -> Result<String, PddlError> {
    match e {
        SExpr::Atom { text, .. } => Ok(text.clone()),
        SExpr::List { items, span } => match items.as_slice() {
            [only] => atom_text(only, "matrix name"),
            _ => Err(syntax(*span, "expected a matrix name", Some("matrix name"))),
        },
    }
}

fn term(e: &SExpr) -> Result<Term, PddlError> {
    let text = e
        .as_atom()
        .ok_or_else(|| syntax(e.span(), "expected a variable or object", Some("?x or object name")))?;
    Ok(if text.starts_with('?') {
        Term::Var(text.to_owned())
    } else {
        Term::Const(text.to_owned())
    })
}

/// Parses a standalone formula such as a goal literal, using `spec` to tell
/// zero-ary functions apart from object constants.
pub fn parse_formula(text: &str, spec: &DomainSpec) -> Result<Formula, PddlError> {
    let forms = read_all(text)?;
    let ctx = context_for(spec);
    match forms.as_slice() {
        [one] => ctx.formula(one),
        [] => Err(syntax(Span { line: 1, col: 1 }, "empty formula", Some("a formula"))),
        [_, second, ..] => Err(syntax(second.span(), "trailing input", Some("end of input"))),
    }
}

/// Parses a sequence of ground facts: atoms, `(not atom)`, and
/// `(= <function term> <value>)`.
pub fn parse_facts(text: &str, spec: &DomainSpec) -> Result<Vec<Formula>, PddlError> {
    let forms = read_all(text)?;
    let ctx = context_for(spec);
    forms.iter().map(|f| ctx.formula(f)).collect()
}

fn context_for(spec: &DomainSpec) -> ExprContext {
    ExprContext {
        zero_ary: spec
            .functions
            .iter()
            .filter(|f| f.params.is_empty())
            .map(|f| f.name.clone())
            .collect(),
    }
}
