//! Semantic validity of a parsed domain.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    UndeclaredType,
    TypeCycle,
    UndeclaredPredicate,
    UndeclaredFunction,
    UndeclaredConstant,
    UnboundVariable,
    ArityMismatch,
    DerivedCycle,
    EffectOnDerived,
    IllTyped,
    MissingGridFunction,
    UnsatisfiablePrecondition,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Declaration the violation was found in, e.g. `action pickup`.
    pub context: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per violation, for error messages.
    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("{}: {}", v.context, v.message))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Bool,
    Object,
    Unknown,
}

struct Checker<'a> {
    spec: &'a DomainSpec,
    report: ValidationReport,
    derived: BTreeSet<&'a str>,
}

pub fn validate_domain(spec: &DomainSpec) -> ValidationReport {
    let builtin = spec.builtin_derived();
    let mut derived: BTreeSet<&str> = spec.derived.iter().map(|d| d.predicate.as_str()).collect();
    derived.extend(builtin.iter().copied());
    let mut c = Checker {
        spec,
        report: ValidationReport::default(),
        derived,
    };
    for b in &builtin {
        c.report.warnings.push(format!(
            "predicate `{b}` has no definition; built-in grid semantics applied"
        ));
    }
    c.types();
    c.signatures();
    c.grid_functions();
    c.derived_defs();
    c.derived_cycles();
    for a in &spec.actions {
        c.action(a);
    }
    c.report
}

impl<'a> Checker<'a> {
    fn push(&mut self, kind: ViolationKind, context: impl Into<String>, message: impl Into<String>) {
        self.report.violations.push(Violation {
            kind,
            context: context.into(),
            message: message.into(),
        });
    }

    fn need_type(&mut self, ty: &str, context: &str) {
        if !self.spec.is_type_declared(ty) {
            self.push(ViolationKind::UndeclaredType, context, format!("type `{ty}` is not declared"));
        }
    }

    fn types(&mut self) {
        let spec = self.spec;
        for t in &spec.types {
            self.need_type(&t.parent, &format!("type {}", t.name));
            let mut cur = t.parent.as_str();
            let mut steps = 0;
            while let Some(p) = spec.parent_of(cur) {
                if cur == t.name {
                    self.push(ViolationKind::TypeCycle, format!("type {}", t.name), "type hierarchy is cyclic");
                    break;
                }
                cur = p;
                steps += 1;
                if steps > spec.types.len() {
                    break;
                }
            }
        }
        for k in &spec.constants {
            self.need_type(&k.ty, &format!("constant {}", k.name));
        }
    }

    fn signatures(&mut self) {
        let spec = self.spec;
        for p in &spec.predicates {
            for param in &p.params {
                self.need_type(&param.ty, &format!("predicate {}", p.name));
            }
        }
        for f in &spec.functions {
            for param in &f.params {
                self.need_type(&param.ty, &format!("function {}", f.name));
            }
        }
        for a in &spec.actions {
            for param in &a.params {
                self.need_type(&param.ty, &format!("action {}", a.name));
            }
        }
    }

    fn grid_functions(&mut self) {
        if !self.spec.has_bit_matrix() {
            return;
        }
        for (name, arity) in [("gridheight", 0), ("gridwidth", 0), ("xloc", 1), ("yloc", 1)] {
            match self.spec.function(name) {
                None => self.push(
                    ViolationKind::MissingGridFunction,
                    "functions",
                    format!("`{name}` is required when bit-matrix functions are declared"),
                ),
                Some(f) if f.params.len() != arity || f.range != FunctionRange::Integer => self.push(
                    ViolationKind::MissingGridFunction,
                    "functions",
                    format!("`{name}` must be an integer function of arity {arity}"),
                ),
                _ => {}
            }
        }
    }

    fn derived_defs(&mut self) {
        let spec = self.spec;
        for d in &spec.derived {
            let ctx = format!("derived {}", d.predicate);
            let mut scope = BTreeMap::new();
            match spec.predicate(&d.predicate) {
                None => self.push(
                    ViolationKind::UndeclaredPredicate,
                    &ctx,
                    format!("derived predicate `{}` is not declared", d.predicate),
                ),
                Some(p) if p.params.len() != d.params.len() => self.push(
                    ViolationKind::ArityMismatch,
                    &ctx,
                    format!("head has {} parameters, declaration has {}", d.params.len(), p.params.len()),
                ),
                Some(p) => {
                    for (v, param) in d.params.iter().zip(&p.params) {
                        scope.insert(v.clone(), param.ty.clone());
                    }
                }
            }
            for v in &d.params {
                scope.entry(v.clone()).or_insert_with(|| ROOT_TYPE.to_owned());
            }
            self.formula(&d.body, &scope, &ctx);
        }
    }

    fn derived_cycles(&mut self) {
        let spec = self.spec;
        let deps: BTreeMap<&str, BTreeSet<&str>> = spec
            .derived
            .iter()
            .map(|d| {
                let mut set = BTreeSet::new();
                d.body.visit_atoms(true, &mut |a, _| {
                    if spec.derived_for(&a.predicate).is_some() {
                        set.insert(a.predicate.as_str());
                    }
                });
                (d.predicate.as_str(), set)
            })
            .collect();
        for start in deps.keys() {
            let mut stack: Vec<&str> = deps[start].iter().copied().collect();
            let mut seen = BTreeSet::new();
            while let Some(p) = stack.pop() {
                if p == *start {
                    self.push(
                        ViolationKind::DerivedCycle,
                        format!("derived {start}"),
                        format!("`{start}` is defined in terms of itself"),
                    );
                    break;
                }
                if seen.insert(p) {
                    stack.extend(deps.get(p).into_iter().flatten().copied());
                }
            }
        }
    }

    fn action(&mut self, a: &'a ActionSchema) {
        let ctx = format!("action {}", a.name);
        let mut scope = BTreeMap::new();
        for p in &a.params {
            if scope.insert(p.name.clone(), p.ty.clone()).is_some() {
                self.push(ViolationKind::ArityMismatch, &ctx, format!("parameter `{}` declared twice", p.name));
            }
        }
        self.formula(&a.precondition, &scope, &ctx);
        let derived = self.derived.clone();
        let mut negated = Vec::new();
        a.precondition.visit_atoms(true, &mut |atom, positive| {
            if !positive && derived.contains(atom.predicate.as_str()) {
                negated.push(atom.predicate.clone());
            }
        });
        for p in negated {
            self.report.warnings.push(format!("{ctx}: negative precondition on derived predicate `{p}`"));
        }
        if unsatisfiable(&a.precondition) {
            self.push(
                ViolationKind::UnsatisfiablePrecondition,
                &ctx,
                "precondition can never hold",
            );
        }
        self.effects(&a.effects, &scope, &ctx);
    }

    fn effects(&mut self, effects: &[Effect], scope: &BTreeMap<String, String>, ctx: &str) {
        for e in effects {
            match e {
                Effect::Add(atom) | Effect::Del(atom) => {
                    if self.derived.contains(atom.predicate.as_str()) {
                        self.push(
                            ViolationKind::EffectOnDerived,
                            ctx,
                            format!("effect changes derived predicate `{}`", atom.predicate),
                        );
                    }
                    self.atom(atom, scope, ctx);
                }
                Effect::Assign(t, v) | Effect::Increase(t, v) | Effect::Decrease(t, v) => {
                    let additive = !matches!(e, Effect::Assign(..));
                    let target_kind = match t {
                        FluentTarget::Func { name, args } => {
                            match self.spec.function(name) {
                                None => {
                                    self.push(
                                        ViolationKind::UndeclaredFunction,
                                        ctx,
                                        format!("effect assigns undeclared function `{name}`"),
                                    );
                                    Kind::Unknown
                                }
                                Some(f) if f.range == FunctionRange::BitMatrix => {
                                    self.push(
                                        ViolationKind::IllTyped,
                                        ctx,
                                        format!("bit-matrix `{name}` can only be assigned through get-index"),
                                    );
                                    Kind::Unknown
                                }
                                Some(_) => {
                                    self.func_args(name, args, scope, ctx);
                                    Kind::Int
                                }
                            }
                        }
                        FluentTarget::Cell { matrix, row, col } => {
                            self.get_index(matrix, row, col, scope, ctx);
                            Kind::Bool
                        }
                    };
                    let vk = self.expr(v, scope, ctx);
                    if target_kind == Kind::Bool && additive {
                        self.push(ViolationKind::IllTyped, ctx, "increase/decrease on a bit-matrix cell");
                    }
                    if target_kind != Kind::Unknown && vk != Kind::Unknown && vk != target_kind {
                        self.push(ViolationKind::IllTyped, ctx, "assigned value has the wrong type");
                    }
                }
                Effect::When(cond, inner) => {
                    self.formula(cond, scope, ctx);
                    self.effects(inner, scope, ctx);
                }
            }
        }
    }

    fn formula(&mut self, f: &Formula, scope: &BTreeMap<String, String>, ctx: &str) {
        match f {
            Formula::And(items) | Formula::Or(items) => {
                for i in items {
                    self.formula(i, scope, ctx);
                }
            }
            Formula::Not(inner) => self.formula(inner, scope, ctx),
            Formula::Atom(a) => self.atom(a, scope, ctx),
            Formula::Cmp { op, lhs, rhs } => {
                let l = self.expr(lhs, scope, ctx);
                let r = self.expr(rhs, scope, ctx);
                let ok = match (l, r) {
                    (Kind::Unknown, _) | (_, Kind::Unknown) => true,
                    (Kind::Int, Kind::Int) => true,
                    (a, b) if a == b => *op == CmpOp::Eq,
                    _ => false,
                };
                if !ok {
                    self.push(
                        ViolationKind::IllTyped,
                        ctx,
                        format!("comparison `{}` between incompatible operands", op.symbol()),
                    );
                }
            }
        }
    }

    fn term(&mut self, t: &Term, scope: &BTreeMap<String, String>, ctx: &str) -> Option<String> {
        match t {
            Term::Var(v) => match scope.get(v) {
                Some(ty) => Some(ty.clone()),
                None => {
                    self.push(ViolationKind::UnboundVariable, ctx, format!("variable `{v}` is not bound"));
                    None
                }
            },
            Term::Const(c) => match self.spec.constants.iter().find(|k| &k.name == c) {
                Some(k) => Some(k.ty.clone()),
                None => {
                    self.push(ViolationKind::UndeclaredConstant, ctx, format!("`{c}` is not a declared constant"));
                    None
                }
            },
        }
    }

    fn atom(&mut self, a: &Atom, scope: &BTreeMap<String, String>, ctx: &str) {
        let Some(decl) = self.spec.predicate(&a.predicate) else {
            self.push(
                ViolationKind::UndeclaredPredicate,
                ctx,
                format!("predicate `{}` is not declared", a.predicate),
            );
            return;
        };
        if decl.params.len() != a.args.len() {
            self.push(
                ViolationKind::ArityMismatch,
                ctx,
                format!("`{}` takes {} arguments, got {}", a.predicate, decl.params.len(), a.args.len()),
            );
        }
        for (arg, param) in a.args.iter().zip(&decl.params) {
            if let Some(ty) = self.term(arg, scope, ctx) {
                self.compatible(&ty, &param.ty, &a.predicate, ctx);
            }
        }
    }

    fn compatible(&mut self, actual: &str, expected: &str, what: &str, ctx: &str) {
        let spec = self.spec;
        if spec.is_type_declared(actual)
            && spec.is_type_declared(expected)
            && !spec.is_subtype(actual, expected)
            && !spec.is_subtype(expected, actual)
        {
            self.report.warnings.push(format!(
                "{ctx}: argument of type `{actual}` can never match `{expected}` in `{what}`"
            ));
        }
    }

    fn func_args(&mut self, name: &str, args: &[Term], scope: &BTreeMap<String, String>, ctx: &str) {
        let Some(decl) = self.spec.function(name) else {
            return;
        };
        if decl.params.len() != args.len() {
            self.push(
                ViolationKind::ArityMismatch,
                ctx,
                format!("`{name}` takes {} arguments, got {}", decl.params.len(), args.len()),
            );
        }
        let params = decl.params.clone();
        for (arg, param) in args.iter().zip(&params) {
            if let Some(ty) = self.term(arg, scope, ctx) {
                self.compatible(&ty, &param.ty, name, ctx);
            }
        }
    }

    fn get_index(&mut self, matrix: &str, row: &Expr, col: &Expr, scope: &BTreeMap<String, String>, ctx: &str) {
        match self.spec.function(matrix) {
            Some(f) if f.range == FunctionRange::BitMatrix => {}
            Some(_) => self.push(ViolationKind::IllTyped, ctx, format!("`{matrix}` is not a bit-matrix")),
            None => self.push(
                ViolationKind::UndeclaredFunction,
                ctx,
                format!("bit-matrix `{matrix}` is not declared"),
            ),
        }
        for e in [row, col] {
            let k = self.expr(e, scope, ctx);
            if k != Kind::Int && k != Kind::Unknown {
                self.push(ViolationKind::IllTyped, ctx, "get-index coordinates must be integers");
            }
        }
    }

    fn expr(&mut self, e: &Expr, scope: &BTreeMap<String, String>, ctx: &str) -> Kind {
        match e {
            Expr::Int(_) => Kind::Int,
            Expr::Bool(_) => Kind::Bool,
            Expr::Term(t) => {
                self.term(t, scope, ctx);
                Kind::Object
            }
            Expr::Func { name, args } => match self.spec.function(name) {
                None => {
                    self.push(ViolationKind::UndeclaredFunction, ctx, format!("function `{name}` is not declared"));
                    Kind::Unknown
                }
                Some(f) if f.range == FunctionRange::BitMatrix => {
                    self.push(ViolationKind::IllTyped, ctx, format!("bit-matrix `{name}` used without get-index"));
                    Kind::Unknown
                }
                Some(_) => {
                    self.func_args(name, args, scope, ctx);
                    Kind::Int
                }
            },
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                for x in [a, b] {
                    let k = self.expr(x, scope, ctx);
                    if k != Kind::Int && k != Kind::Unknown {
                        self.push(ViolationKind::IllTyped, ctx, "arithmetic on a non-integer operand");
                    }
                }
                Kind::Int
            }
            Expr::Neg(a) => {
                let k = self.expr(a, scope, ctx);
                if k != Kind::Int && k != Kind::Unknown {
                    self.push(ViolationKind::IllTyped, ctx, "arithmetic on a non-integer operand");
                }
                Kind::Int
            }
            Expr::GetIndex { matrix, row, col } => {
                self.get_index(matrix, row, col, scope, ctx);
                Kind::Bool
            }
        }
    }
}

/// Conservative check: a conjunction containing a literal and its negation,
/// a constant comparison that fails, or an empty disjunction.
fn unsatisfiable(f: &Formula) -> bool {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut stack = vec![f];
    while let Some(g) = stack.pop() {
        match g {
            Formula::And(items) => stack.extend(items.iter()),
            Formula::Or(items) if items.is_empty() => return true,
            Formula::Atom(a) => pos.push(a),
            Formula::Not(inner) => match inner.as_ref() {
                Formula::Atom(a) => neg.push(a),
                Formula::And(items) if items.is_empty() => return true,
                Formula::Cmp { op: CmpOp::Eq, lhs, rhs } if lhs == rhs => return true,
                _ => {}
            },
            Formula::Cmp { op, lhs, rhs } => match (lhs, rhs) {
                (Expr::Int(a), Expr::Int(b)) if !op.holds(*a, *b) => return true,
                (Expr::Bool(a), Expr::Bool(b)) if a != b => return true,
                _ => {}
            },
            _ => {}
        }
    }
    pos.iter().any(|p| neg.contains(p))
}
