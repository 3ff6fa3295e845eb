//! Grounding: lifted domain plus objects to a concrete environment with
//! integer-indexed fluents and compiled preconditions and effects.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use super::ast::*;
use super::objects::{GridDims, ObjectSet, ObjectTag};
use super::PddlError;
use crate::world::WorldState;

pub type ObjId = u32;

/// Default cap on the number of ground actions.
pub const DEFAULT_ACTION_CAP: usize = 1_000_000;

const MAX_DERIVED_DEPTH: usize = 32;

#[derive(Debug, Clone, Copy)]
pub struct GroundingOptions {
    pub action_cap: usize,
}

impl Default for GroundingOptions {
    fn default() -> Self {
        Self {
            action_cap: DEFAULT_ACTION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct GroundAction {
    pub schema: String,
    pub args: Vec<String>,
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.schema)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroundObject {
    pub name: String,
    pub ty: String,
    pub tag: Option<ObjectTag>,
}

/// A state location: predicate or matrix bit, or integer slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum FluentId {
    Bit(u32),
    Int(u32),
}

#[derive(Debug, Clone)]
struct SlotTable {
    name: String,
    /// Candidate objects per parameter, sorted by object id.
    candidates: Vec<Vec<ObjId>>,
    /// Position of each object in `candidates[i]`, or `u32::MAX`.
    pos: Vec<Vec<u32>>,
    base: u32,
    size: u32,
}

impl SlotTable {
    fn new(name: &str, params: &[TypedName], spec: &DomainSpec, objects: &[GroundObject], base: u32) -> Self {
        let mut candidates = Vec::new();
        let mut pos = Vec::new();
        for p in params {
            let cands: Vec<ObjId> = objects
                .iter()
                .enumerate()
                .filter(|(_, o)| spec.is_subtype(&o.ty, &p.ty))
                .map(|(i, _)| i as ObjId)
                .collect();
            let mut lookup = vec![u32::MAX; objects.len()];
            for (j, &o) in cands.iter().enumerate() {
                lookup[o as usize] = j as u32;
            }
            candidates.push(cands);
            pos.push(lookup);
        }
        let size = candidates.iter().map(|c| c.len() as u32).product();
        Self {
            name: name.to_owned(),
            candidates,
            pos,
            base,
            size,
        }
    }

    fn index(&self, args: &[ObjId]) -> Option<u32> {
        if args.len() != self.candidates.len() {
            return None;
        }
        let mut idx = 0u32;
        for (i, &a) in args.iter().enumerate() {
            let p = *self.pos[i].get(a as usize)?;
            if p == u32::MAX {
                return None;
            }
            idx = idx * self.candidates[i].len() as u32 + p;
        }
        Some(self.base + idx)
    }

    fn decode(&self, slot: u32) -> Option<Vec<ObjId>> {
        if slot < self.base || slot >= self.base + self.size {
            return None;
        }
        let mut rem = slot - self.base;
        let mut out = vec![0; self.candidates.len()];
        for i in (0..self.candidates.len()).rev() {
            let n = self.candidates[i].len() as u32;
            out[i] = self.candidates[i][(rem % n) as usize];
            rem /= n;
        }
        Some(out)
    }
}

#[derive(Debug, Clone)]
struct MatrixInfo {
    name: String,
    base: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IntExpr {
    Const(i64),
    Slot(u32),
    Add(Box<IntExpr>, Box<IntExpr>),
    Sub(Box<IntExpr>, Box<IntExpr>),
    Neg(Box<IntExpr>),
}

impl IntExpr {
    pub fn eval(&self, s: &WorldState) -> i64 {
        match self {
            IntExpr::Const(n) => *n,
            IntExpr::Slot(i) => s.ints[*i as usize],
            IntExpr::Add(a, b) => a.eval(s) + b.eval(s),
            IntExpr::Sub(a, b) => a.eval(s) - b.eval(s),
            IntExpr::Neg(a) => -a.eval(s),
        }
    }

    fn as_const(&self) -> Option<i64> {
        match self {
            IntExpr::Const(n) => Some(*n),
            _ => None,
        }
    }

    fn fold(self) -> Self {
        match self {
            IntExpr::Add(a, b) => match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) => IntExpr::Const(x + y),
                _ => IntExpr::Add(a, b),
            },
            IntExpr::Sub(a, b) => match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) => IntExpr::Const(x - y),
                _ => IntExpr::Sub(a, b),
            },
            IntExpr::Neg(a) => match a.as_const() {
                Some(x) => IntExpr::Const(-x),
                None => IntExpr::Neg(a),
            },
            e => e,
        }
    }

    fn slots(&self, out: &mut Vec<FluentId>) {
        match self {
            IntExpr::Const(_) => {}
            IntExpr::Slot(i) => out.push(FluentId::Int(*i)),
            IntExpr::Add(a, b) | IntExpr::Sub(a, b) => {
                a.slots(out);
                b.slots(out);
            }
            IntExpr::Neg(a) => a.slots(out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRef {
    pub base: u32,
    pub row: IntExpr,
    pub col: IntExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoolExpr {
    Const(bool),
    Cell(CellRef),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    True,
    False,
    Bit(u32),
    Not(Box<Cond>),
    And(Vec<Cond>),
    Or(Vec<Cond>),
    Cmp(CmpOp, IntExpr, IntExpr),
    BoolEq(BoolExpr, BoolExpr),
}

impl Cond {
    pub fn eval(&self, s: &WorldState, grid: GridDims) -> bool {
        match self {
            Cond::True => true,
            Cond::False => false,
            Cond::Bit(i) => s.bit(*i),
            Cond::Not(c) => !c.eval(s, grid),
            Cond::And(cs) => cs.iter().all(|c| c.eval(s, grid)),
            Cond::Or(cs) => cs.iter().any(|c| c.eval(s, grid)),
            Cond::Cmp(op, a, b) => op.holds(a.eval(s), b.eval(s)),
            Cond::BoolEq(a, b) => eval_bool(a, s, grid) == eval_bool(b, s, grid),
        }
    }

    fn and(items: Vec<Cond>) -> Cond {
        let mut out = Vec::new();
        for c in items {
            match c {
                Cond::True => {}
                Cond::False => return Cond::False,
                Cond::And(inner) => out.extend(inner),
                c => out.push(c),
            }
        }
        match out.len() {
            0 => Cond::True,
            1 => out.pop().unwrap(),
            _ => Cond::And(out),
        }
    }

    fn or(items: Vec<Cond>) -> Cond {
        let mut out = Vec::new();
        for c in items {
            match c {
                Cond::False => {}
                Cond::True => return Cond::True,
                Cond::Or(inner) => out.extend(inner),
                c => out.push(c),
            }
        }
        match out.len() {
            0 => Cond::False,
            1 => out.pop().unwrap(),
            _ => Cond::Or(out),
        }
    }

    fn not(c: Cond) -> Cond {
        match c {
            Cond::True => Cond::False,
            Cond::False => Cond::True,
            Cond::Not(inner) => *inner,
            c => Cond::Not(Box::new(c)),
        }
    }

    /// Positive bit literals of a top-level conjunction.
    pub fn required_bits(&self) -> Vec<u32> {
        match self {
            Cond::Bit(i) => vec![*i],
            Cond::And(cs) => cs.iter().flat_map(|c| c.required_bits()).collect(),
            _ => Vec::new(),
        }
    }

    fn fluents(&self, out: &mut Vec<FluentId>, matrix_bits: &dyn Fn(u32) -> Vec<FluentId>) {
        match self {
            Cond::True | Cond::False => {}
            Cond::Bit(i) => out.push(FluentId::Bit(*i)),
            Cond::Not(c) => c.fluents(out, matrix_bits),
            Cond::And(cs) | Cond::Or(cs) => cs.iter().for_each(|c| c.fluents(out, matrix_bits)),
            Cond::Cmp(_, a, b) => {
                a.slots(out);
                b.slots(out);
            }
            Cond::BoolEq(a, b) => {
                for x in [a, b] {
                    if let BoolExpr::Cell(c) = x {
                        c.row.slots(out);
                        c.col.slots(out);
                        out.extend(matrix_bits(c.base));
                    }
                }
            }
        }
    }
}

fn cell_index(c: &CellRef, s: &WorldState, grid: GridDims) -> Option<u32> {
    let row = c.row.eval(s);
    let col = c.col.eval(s);
    if !grid.contains(col, row) {
        return None;
    }
    Some(c.base + ((row - 1) as u32) * grid.cols + (col - 1) as u32)
}

fn eval_bool(b: &BoolExpr, s: &WorldState, grid: GridDims) -> bool {
    match b {
        BoolExpr::Const(v) => *v,
        BoolExpr::Cell(c) => cell_index(c, s, grid).is_some_and(|i| s.bit(i)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CEffect {
    SetBit(u32, bool),
    Assign(u32, IntExpr),
    Increase(u32, IntExpr),
    Decrease(u32, IntExpr),
    SetCell(CellRef, BoolExpr),
    When(Cond, Vec<CEffect>),
}

#[derive(Debug, Clone)]
pub struct CompiledAction {
    pub precondition: Cond,
    pub effects: Vec<CEffect>,
}

enum Typed {
    Int(IntExpr),
    Bool(BoolExpr),
    Obj(ObjId),
}

/// Concrete environment for a fixed object set. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GroundedEnvironment {
    pub spec: DomainSpec,
    pub grid: GridDims,
    objects: Vec<GroundObject>,
    obj_index: HashMap<String, ObjId>,
    preds: Vec<SlotTable>,
    funcs: Vec<SlotTable>,
    matrices: Vec<MatrixInfo>,
    n_pred_bits: u32,
    n_bits: u32,
    n_ints: u32,
    derived: BTreeMap<String, (Vec<String>, Formula)>,
    actions: Vec<GroundAction>,
    compiled: Vec<CompiledAction>,
    warnings: Vec<String>,
}

fn builtin_formula(name: &str) -> (Vec<String>, Formula) {
    let f = |func: &str, v: &str| Expr::Func {
        name: func.to_owned(),
        args: vec![Term::Var(v.to_owned())],
    };
    let eq = |l: Expr, r: Expr| Formula::Cmp {
        op: CmpOp::Eq,
        lhs: l,
        rhs: r,
    };
    let params = vec!["?a".to_owned(), "?o".to_owned()];
    if name == "at" {
        return (
            params,
            Formula::And(vec![eq(f("xloc", "?a"), f("xloc", "?o")), eq(f("yloc", "?a"), f("yloc", "?o"))]),
        );
    }
    let shifted = |func: &str, d: i64| Expr::Add(Box::new(f(func, "?o")), Box::new(Expr::Int(d)));
    let mut cases = Vec::new();
    for (same, moved) in [("xloc", "yloc"), ("yloc", "xloc")] {
        for d in [-1, 1] {
            cases.push(Formula::And(vec![
                eq(f(same, "?a"), f(same, "?o")),
                eq(f(moved, "?a"), shifted(moved, d)),
            ]));
        }
    }
    (params, Formula::Or(cases))
}

impl GroundedEnvironment {
    pub fn new(spec: &DomainSpec, objects: &ObjectSet, grid: GridDims) -> Result<Self, PddlError> {
        Self::with_options(spec, objects, grid, GroundingOptions::default())
    }

    pub fn with_options(
        spec: &DomainSpec,
        objects: &ObjectSet,
        grid: GridDims,
        opts: GroundingOptions,
    ) -> Result<Self, PddlError> {
        let report = super::validate_domain(spec);
        if !report.is_valid() {
            return Err(PddlError::Invalid(report.summary()));
        }
        if grid.rows == 0 || grid.cols == 0 {
            return Err(PddlError::Grounding("grid dimensions must be positive".into()));
        }
        objects.check(spec)?;

        let mut all: BTreeMap<String, GroundObject> = BTreeMap::new();
        for c in &spec.constants {
            all.insert(
                c.name.clone(),
                GroundObject {
                    name: c.name.clone(),
                    ty: c.ty.clone(),
                    tag: None,
                },
            );
        }
        for e in &objects.entries {
            if let Some(prev) = all.get_mut(&e.name) {
                if prev.ty != e.ty {
                    return Err(PddlError::TypeMismatch(format!(
                        "object `{}` is declared as `{}` but the domain constant has type `{}`",
                        e.name, e.ty, prev.ty
                    )));
                }
                prev.tag = Some(e.tag);
            } else {
                all.insert(
                    e.name.clone(),
                    GroundObject {
                        name: e.name.clone(),
                        ty: e.ty.clone(),
                        tag: Some(e.tag),
                    },
                );
            }
        }
        let objs: Vec<GroundObject> = all.into_values().collect();
        let has_agent = objs.iter().any(|o| {
            o.tag == Some(ObjectTag::Agent) || (spec.is_type_declared("agent") && spec.is_subtype(&o.ty, "agent"))
        });
        if !has_agent {
            return Err(PddlError::Grounding("the object set has no agent".into()));
        }
        let obj_index = objs
            .iter()
            .enumerate()
            .map(|(i, o)| (o.name.clone(), i as ObjId))
            .collect();

        let mut derived = BTreeMap::new();
        for d in &spec.derived {
            derived.insert(d.predicate.clone(), (d.params.clone(), d.body.clone()));
        }
        for b in spec.builtin_derived() {
            derived.insert(b.to_owned(), builtin_formula(b));
        }

        let mut preds = Vec::new();
        let mut bits = 0u32;
        for p in &spec.predicates {
            if derived.contains_key(&p.name) {
                continue;
            }
            let t = SlotTable::new(&p.name, &p.params, spec, &objs, bits);
            bits += t.size;
            preds.push(t);
        }
        let n_pred_bits = bits;
        let mut matrices = Vec::new();
        let mut funcs = Vec::new();
        let mut ints = 0u32;
        for f in &spec.functions {
            match f.range {
                FunctionRange::BitMatrix => {
                    matrices.push(MatrixInfo {
                        name: f.name.clone(),
                        base: bits,
                    });
                    bits += grid.cells() as u32;
                }
                FunctionRange::Integer => {
                    let t = SlotTable::new(&f.name, &f.params, spec, &objs, ints);
                    ints += t.size;
                    funcs.push(t);
                }
            }
        }

        let mut env = GroundedEnvironment {
            spec: spec.clone(),
            grid,
            objects: objs,
            obj_index,
            preds,
            funcs,
            matrices,
            n_pred_bits,
            n_bits: bits,
            n_ints: ints,
            derived,
            actions: Vec::new(),
            compiled: Vec::new(),
            warnings: report.warnings,
        };

        let mut schemas: Vec<&ActionSchema> = spec.actions.iter().collect();
        schemas.sort_by(|a, b| a.name.cmp(&b.name));
        let mut total = 0usize;
        let mut per_schema = Vec::new();
        for s in &schemas {
            let cands: Vec<Vec<ObjId>> = s
                .params
                .iter()
                .map(|p| {
                    (0..env.objects.len() as ObjId)
                        .filter(|&o| spec.is_subtype(&env.objects[o as usize].ty, &p.ty))
                        .collect()
                })
                .collect();
            let n = cands
                .iter()
                .try_fold(1usize, |acc, c| acc.checked_mul(c.len()))
                .unwrap_or(usize::MAX);
            total = total.saturating_add(n);
            if total > opts.action_cap {
                return Err(PddlError::GroundingCap { cap: opts.action_cap });
            }
            per_schema.push(cands);
        }
        for (schema, cands) in schemas.iter().zip(per_schema) {
            let mut idx = vec![0usize; cands.len()];
            if cands.iter().any(|c| c.is_empty()) {
                continue;
            }
            loop {
                let args: Vec<ObjId> = idx.iter().zip(&cands).map(|(&i, c)| c[i]).collect();
                let binding: HashMap<String, ObjId> = schema
                    .params
                    .iter()
                    .zip(&args)
                    .map(|(p, &o)| (p.name.clone(), o))
                    .collect();
                let precondition = env.compile_formula(&schema.precondition, &binding, 0)?;
                let effects = env.compile_effects(&schema.effects, &binding)?;
                env.actions.push(GroundAction {
                    schema: schema.name.clone(),
                    args: args.iter().map(|&o| env.objects[o as usize].name.clone()).collect(),
                });
                env.compiled.push(CompiledAction { precondition, effects });
                // odometer increment, last parameter fastest
                let mut k = idx.len();
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < cands[k].len() {
                        break;
                    }
                    idx[k] = 0;
                    if k == 0 {
                        k = usize::MAX;
                        break;
                    }
                }
                if idx.is_empty() || k == usize::MAX {
                    break;
                }
            }
        }
        Ok(env)
    }

    fn resolve(&self, t: &Term, binding: &HashMap<String, ObjId>) -> Result<ObjId, PddlError> {
        match t {
            Term::Var(v) => binding
                .get(v)
                .copied()
                .ok_or_else(|| PddlError::Grounding(format!("variable `{v}` is not bound"))),
            Term::Const(c) => self
                .obj_index
                .get(c)
                .copied()
                .ok_or_else(|| PddlError::Grounding(format!("unknown object `{c}`"))),
        }
    }

    fn compile_formula(&self, f: &Formula, binding: &HashMap<String, ObjId>, depth: usize) -> Result<Cond, PddlError> {
        Ok(match f {
            Formula::And(items) => Cond::and(
                items
                    .iter()
                    .map(|i| self.compile_formula(i, binding, depth))
                    .collect::<Result<_, _>>()?,
            ),
            Formula::Or(items) => Cond::or(
                items
                    .iter()
                    .map(|i| self.compile_formula(i, binding, depth))
                    .collect::<Result<_, _>>()?,
            ),
            Formula::Not(inner) => Cond::not(self.compile_formula(inner, binding, depth)?),
            Formula::Atom(a) => {
                let args = a
                    .args
                    .iter()
                    .map(|t| self.resolve(t, binding))
                    .collect::<Result<Vec<_>, _>>()?;
                if let Some((params, body)) = self.derived.get(&a.predicate) {
                    if depth > MAX_DERIVED_DEPTH {
                        return Err(PddlError::Grounding(format!(
                            "derived predicate `{}` nests too deeply",
                            a.predicate
                        )));
                    }
                    if params.len() != args.len() {
                        return Err(PddlError::Grounding(format!("arity mismatch for `{}`", a.predicate)));
                    }
                    let inner: HashMap<String, ObjId> = params.iter().cloned().zip(args).collect();
                    return self.compile_formula(body, &inner, depth + 1);
                }
                let table = self
                    .preds
                    .iter()
                    .find(|t| t.name == a.predicate)
                    .ok_or_else(|| PddlError::Grounding(format!("unknown predicate `{}`", a.predicate)))?;
                match table.index(&args) {
                    Some(i) => Cond::Bit(i),
                    None => Cond::False,
                }
            }
            Formula::Cmp { op, lhs, rhs } => {
                let l = self.compile_expr(lhs, binding)?;
                let r = self.compile_expr(rhs, binding)?;
                match (l, r) {
                    (Typed::Obj(a), Typed::Obj(b)) if *op == CmpOp::Eq => {
                        if a == b {
                            Cond::True
                        } else {
                            Cond::False
                        }
                    }
                    (Typed::Int(a), Typed::Int(b)) => match (a.as_const(), b.as_const()) {
                        (Some(x), Some(y)) => {
                            if op.holds(x, y) {
                                Cond::True
                            } else {
                                Cond::False
                            }
                        }
                        _ => Cond::Cmp(*op, a, b),
                    },
                    (Typed::Bool(a), Typed::Bool(b)) if *op == CmpOp::Eq => match (&a, &b) {
                        (BoolExpr::Const(x), BoolExpr::Const(y)) => {
                            if x == y {
                                Cond::True
                            } else {
                                Cond::False
                            }
                        }
                        _ => Cond::BoolEq(a, b),
                    },
                    _ => {
                        return Err(PddlError::TypeMismatch(format!(
                            "comparison `{}` between incompatible operands",
                            op.symbol()
                        )))
                    }
                }
            }
        })
    }

    fn compile_int(&self, e: &Expr, binding: &HashMap<String, ObjId>) -> Result<IntExpr, PddlError> {
        match self.compile_expr(e, binding)? {
            Typed::Int(i) => Ok(i),
            _ => Err(PddlError::TypeMismatch(format!(
                "expected an integer expression, got `{}`",
                super::print::expr(e)
            ))),
        }
    }

    fn compile_expr(&self, e: &Expr, binding: &HashMap<String, ObjId>) -> Result<Typed, PddlError> {
        Ok(match e {
            Expr::Int(n) => Typed::Int(IntExpr::Const(*n)),
            Expr::Bool(b) => Typed::Bool(BoolExpr::Const(*b)),
            Expr::Term(t) => Typed::Obj(self.resolve(t, binding)?),
            Expr::Func { name, args } => {
                let args = args
                    .iter()
                    .map(|t| self.resolve(t, binding))
                    .collect::<Result<Vec<_>, _>>()?;
                Typed::Int(IntExpr::Slot(self.func_slot_ids(name, &args)?))
            }
            Expr::Add(a, b) => Typed::Int(
                IntExpr::Add(Box::new(self.compile_int(a, binding)?), Box::new(self.compile_int(b, binding)?)).fold(),
            ),
            Expr::Sub(a, b) => Typed::Int(
                IntExpr::Sub(Box::new(self.compile_int(a, binding)?), Box::new(self.compile_int(b, binding)?)).fold(),
            ),
            Expr::Neg(a) => Typed::Int(IntExpr::Neg(Box::new(self.compile_int(a, binding)?)).fold()),
            Expr::GetIndex { matrix, row, col } => Typed::Bool(BoolExpr::Cell(self.cell_ref(matrix, row, col, binding)?)),
        })
    }

    fn cell_ref(&self, matrix: &str, row: &Expr, col: &Expr, binding: &HashMap<String, ObjId>) -> Result<CellRef, PddlError> {
        let m = self
            .matrices
            .iter()
            .find(|m| m.name == matrix)
            .ok_or_else(|| PddlError::Grounding(format!("unknown bit-matrix `{matrix}`")))?;
        Ok(CellRef {
            base: m.base,
            row: self.compile_int(row, binding)?,
            col: self.compile_int(col, binding)?,
        })
    }

    fn func_slot_ids(&self, name: &str, args: &[ObjId]) -> Result<u32, PddlError> {
        let table = self
            .funcs
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| PddlError::Grounding(format!("unknown integer function `{name}`")))?;
        table.index(args).ok_or_else(|| {
            PddlError::TypeMismatch(format!(
                "function `{name}` is not defined for ({})",
                args.iter().map(|&a| self.objects[a as usize].name.as_str()).collect::<Vec<_>>().join(" ")
            ))
        })
    }

    fn compile_effects(&self, effects: &[Effect], binding: &HashMap<String, ObjId>) -> Result<Vec<CEffect>, PddlError> {
        let mut out = Vec::new();
        for e in effects {
            match e {
                Effect::Add(a) | Effect::Del(a) => {
                    let args = a
                        .args
                        .iter()
                        .map(|t| self.resolve(t, binding))
                        .collect::<Result<Vec<_>, _>>()?;
                    let table = self
                        .preds
                        .iter()
                        .find(|t| t.name == a.predicate)
                        .ok_or_else(|| PddlError::Grounding(format!("unknown predicate `{}`", a.predicate)))?;
                    let slot = table.index(&args).ok_or_else(|| {
                        PddlError::TypeMismatch(format!("effect on `{}` with incompatible arguments", a.predicate))
                    })?;
                    out.push(CEffect::SetBit(slot, matches!(e, Effect::Add(_))));
                }
                Effect::Assign(t, v) | Effect::Increase(t, v) | Effect::Decrease(t, v) => match t {
                    FluentTarget::Func { name, args } => {
                        let args = args
                            .iter()
                            .map(|t| self.resolve(t, binding))
                            .collect::<Result<Vec<_>, _>>()?;
                        let slot = self.func_slot_ids(name, &args)?;
                        let v = self.compile_int(v, binding)?;
                        out.push(match e {
                            Effect::Assign(..) => CEffect::Assign(slot, v),
                            Effect::Increase(..) => CEffect::Increase(slot, v),
                            _ => CEffect::Decrease(slot, v),
                        });
                    }
                    FluentTarget::Cell { matrix, row, col } => {
                        let cell = self.cell_ref(matrix, row, col, binding)?;
                        let value = match self.compile_expr(v, binding)? {
                            Typed::Bool(b) => b,
                            _ => return Err(PddlError::TypeMismatch("bit-matrix cells take boolean values".into())),
                        };
                        out.push(CEffect::SetCell(cell, value));
                    }
                },
                Effect::When(c, inner) => {
                    let cond = self.compile_formula(c, binding, 0)?;
                    let inner = self.compile_effects(inner, binding)?;
                    match cond {
                        Cond::False => {}
                        Cond::True => out.extend(inner),
                        cond => out.push(CEffect::When(cond, inner)),
                    }
                }
            }
        }
        Ok(out)
    }

    // ---- accessors ----

    pub fn objects(&self) -> &[GroundObject] {
        &self.objects
    }

    pub fn object_id(&self, name: &str) -> Option<ObjId> {
        self.obj_index.get(name).copied()
    }

    pub fn object_name(&self, id: ObjId) -> &str {
        &self.objects[id as usize].name
    }

    pub fn object_type(&self, id: ObjId) -> &str {
        &self.objects[id as usize].ty
    }

    /// Objects whose type is `ty` or a subtype, in id order.
    pub fn objects_of_type(&self, ty: &str) -> Vec<ObjId> {
        (0..self.objects.len() as ObjId)
            .filter(|&o| self.spec.is_type_declared(ty) && self.spec.is_subtype(&self.objects[o as usize].ty, ty))
            .collect()
    }

    pub fn agents(&self) -> Vec<ObjId> {
        (0..self.objects.len() as ObjId)
            .filter(|&o| {
                let obj = &self.objects[o as usize];
                obj.tag == Some(ObjectTag::Agent)
                    || (self.spec.is_type_declared("agent") && self.spec.is_subtype(&obj.ty, "agent"))
            })
            .collect()
    }

    pub fn actions(&self) -> &[GroundAction] {
        &self.actions
    }

    pub fn compiled(&self, action: usize) -> &CompiledAction {
        &self.compiled[action]
    }

    pub fn action_index(&self, a: &GroundAction) -> Option<usize> {
        self.actions.binary_search(a).ok()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    pub fn n_ints(&self) -> u32 {
        self.n_ints
    }

    pub fn n_pred_bits(&self) -> u32 {
        self.n_pred_bits
    }

    pub fn is_multi_agent(&self) -> bool {
        self.funcs.iter().any(|f| f.name == "turn" && f.candidates.is_empty())
    }

    pub fn pred_slot(&self, predicate: &str, args: &[ObjId]) -> Option<u32> {
        self.preds.iter().find(|t| t.name == predicate)?.index(args)
    }

    pub fn func_slot(&self, function: &str, args: &[ObjId]) -> Option<u32> {
        self.funcs.iter().find(|t| t.name == function)?.index(args)
    }

    pub fn matrix_names(&self) -> Vec<&str> {
        self.matrices.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn has_matrix(&self, name: &str) -> bool {
        self.matrices.iter().any(|m| m.name == name)
    }

    /// Bit index of a 1-based `(row, col)` cell of `matrix`.
    pub fn cell_bit(&self, matrix: &str, row: i64, col: i64) -> Option<u32> {
        let m = self.matrices.iter().find(|m| m.name == matrix)?;
        if !self.grid.contains(col, row) {
            return None;
        }
        Some(m.base + (row - 1) as u32 * self.grid.cols + (col - 1) as u32)
    }

    pub fn all_fluents(&self) -> impl Iterator<Item = FluentId> + '_ {
        (0..self.n_bits).map(FluentId::Bit).chain((0..self.n_ints).map(FluentId::Int))
    }

    /// Bits of the matrix starting at `base`.
    fn matrix_bits(&self, base: u32) -> Vec<FluentId> {
        (base..base + self.grid.cells() as u32).map(FluentId::Bit).collect()
    }

    /// Fluents read by the precondition and read or written by the effects.
    pub fn referenced_fluents(&self, action: usize) -> Vec<FluentId> {
        let c = &self.compiled[action];
        let mb = |b: u32| self.matrix_bits(b);
        let mut out = Vec::new();
        c.precondition.fluents(&mut out, &mb);
        fn walk(es: &[CEffect], out: &mut Vec<FluentId>, mb: &dyn Fn(u32) -> Vec<FluentId>) {
            for e in es {
                match e {
                    CEffect::SetBit(i, _) => out.push(FluentId::Bit(*i)),
                    CEffect::Assign(i, v) | CEffect::Increase(i, v) | CEffect::Decrease(i, v) => {
                        out.push(FluentId::Int(*i));
                        v.slots(out);
                    }
                    CEffect::SetCell(c, v) => {
                        c.row.slots(out);
                        c.col.slots(out);
                        out.extend(mb(c.base));
                        if let BoolExpr::Cell(v) = v {
                            v.row.slots(out);
                            v.col.slots(out);
                            out.extend(mb(v.base));
                        }
                    }
                    CEffect::When(cond, inner) => {
                        cond.fluents(out, mb);
                        walk(inner, out, mb);
                    }
                }
            }
        }
        walk(&c.effects, &mut out, &mb);
        out.sort();
        out.dedup();
        out
    }

    /// Fluents an action may write.
    pub fn written_fluents(&self, action: usize) -> Vec<FluentId> {
        let mut out = Vec::new();
        fn walk(env: &GroundedEnvironment, es: &[CEffect], out: &mut Vec<FluentId>) {
            for e in es {
                match e {
                    CEffect::SetBit(i, _) => out.push(FluentId::Bit(*i)),
                    CEffect::Assign(i, _) | CEffect::Increase(i, _) | CEffect::Decrease(i, _) => {
                        out.push(FluentId::Int(*i))
                    }
                    CEffect::SetCell(c, _) => out.extend(env.matrix_bits(c.base)),
                    CEffect::When(_, inner) => walk(env, inner, out),
                }
            }
        }
        walk(self, &self.compiled[action].effects, &mut out);
        out.sort();
        out.dedup();
        out
    }

    /// Human-readable name of a fluent, e.g. `(has boy key1)` or `(xloc boy)`.
    pub fn fluent_name(&self, f: FluentId) -> String {
        let join = |name: &str, args: Vec<ObjId>| {
            let mut s = format!("({name}");
            for a in args {
                s.push(' ');
                s.push_str(self.object_name(a));
            }
            s.push(')');
            s
        };
        match f {
            FluentId::Int(i) => self
                .funcs
                .iter()
                .find_map(|t| t.decode(i).map(|args| join(&t.name, args)))
                .unwrap_or_else(|| format!("(int {i})")),
            FluentId::Bit(i) if i < self.n_pred_bits => self
                .preds
                .iter()
                .find_map(|t| t.decode(i).map(|args| join(&t.name, args)))
                .unwrap_or_else(|| format!("(bit {i})")),
            FluentId::Bit(i) => {
                let m = self
                    .matrices
                    .iter()
                    .rev()
                    .find(|m| m.base <= i)
                    .expect("matrix bit");
                let off = i - m.base;
                format!("(get-index {} {} {})", m.name, off / self.grid.cols + 1, off % self.grid.cols + 1)
            }
        }
    }

    /// Decodes a predicate bit into (predicate, args).
    pub fn decode_pred(&self, bit: u32) -> Option<(&str, Vec<ObjId>)> {
        self.preds
            .iter()
            .find_map(|t| t.decode(bit).map(|a| (t.name.as_str(), a)))
    }

    /// Decodes an integer slot into (function, args).
    pub fn decode_func(&self, slot: u32) -> Option<(&str, Vec<ObjId>)> {
        self.funcs
            .iter()
            .find_map(|t| t.decode(slot).map(|a| (t.name.as_str(), a)))
    }

    /// Compiles a ground formula (goal literal or query) over this environment.
    pub fn compile_ground(&self, f: &Formula) -> Result<Cond, PddlError> {
        let mut unknown = None;
        f.visit_atoms(true, &mut |a, _| {
            if unknown.is_none() && self.spec.predicate(&a.predicate).is_none() {
                unknown = Some(a.predicate.clone());
            }
        });
        if let Some(p) = unknown {
            return Err(PddlError::Grounding(format!("unknown predicate `{p}`")));
        }
        self.compile_formula(f, &HashMap::new(), 0)
    }

    /// Parses and compiles a ground formula from text.
    pub fn compile_text(&self, text: &str) -> Result<Cond, PddlError> {
        let f = super::parse_formula(text, &self.spec)?;
        self.compile_ground(&f)
    }

    pub fn eval(&self, c: &Cond, s: &WorldState) -> bool {
        c.eval(s, self.grid)
    }

    /// An all-zero state with the grid dimensions filled in.
    pub fn blank_state(&self) -> WorldState {
        let mut s = WorldState::zeroed(self.n_ints as usize, self.n_bits as usize);
        if let Some(i) = self.func_slot("gridwidth", &[]) {
            s.ints[i as usize] = self.grid.cols as i64;
        }
        if let Some(i) = self.func_slot("gridheight", &[]) {
            s.ints[i as usize] = self.grid.rows as i64;
        }
        s
    }

    /// Builds a state from ground facts: atoms, negated atoms,
    /// `(= (f args) n)` and `(= (get-index M r c) b)`.
    pub fn state_from_facts(&self, facts: &[Formula]) -> Result<WorldState, PddlError> {
        let mut s = self.blank_state();
        for f in facts {
            self.apply_fact(&mut s, f)?;
        }
        Ok(s)
    }

    pub fn apply_fact(&self, s: &mut WorldState, f: &Formula) -> Result<(), PddlError> {
        let empty = HashMap::new();
        match f {
            Formula::And(items) => {
                for i in items {
                    self.apply_fact(s, i)?;
                }
                Ok(())
            }
            Formula::Atom(a) => self.set_atom(s, a, true),
            Formula::Not(inner) => match inner.as_ref() {
                Formula::Atom(a) => self.set_atom(s, a, false),
                _ => Err(PddlError::Grounding(format!(
                    "unsupported fact `{}`",
                    super::print::formula(f)
                ))),
            },
            Formula::Cmp { op: CmpOp::Eq, lhs, rhs } => match (lhs, rhs) {
                (Expr::Func { name, args }, value) => {
                    let args = args
                        .iter()
                        .map(|t| self.resolve(t, &empty))
                        .collect::<Result<Vec<_>, _>>()?;
                    let slot = self.func_slot_ids(name, &args)?;
                    let v = self.compile_int(value, &empty)?;
                    let v = v
                        .as_const()
                        .ok_or_else(|| PddlError::Grounding("fact values must be constants".into()))?;
                    s.ints[slot as usize] = v;
                    Ok(())
                }
                (Expr::GetIndex { matrix, row, col }, Expr::Bool(b)) => {
                    let c = self.cell_ref(matrix, row, col, &empty)?;
                    let idx = cell_index(&c, s, self.grid)
                        .ok_or_else(|| PddlError::Grounding(format!("cell outside the grid in `{matrix}`")))?;
                    s.set_bit(idx, *b);
                    Ok(())
                }
                _ => Err(PddlError::Grounding(format!(
                    "unsupported fact `{}`",
                    super::print::formula(f)
                ))),
            },
            _ => Err(PddlError::Grounding(format!(
                "unsupported fact `{}`",
                super::print::formula(f)
            ))),
        }
    }

    fn set_atom(&self, s: &mut WorldState, a: &Atom, value: bool) -> Result<(), PddlError> {
        if self.derived.contains_key(&a.predicate) {
            return Err(PddlError::Grounding(format!(
                "derived predicate `{}` cannot be set directly",
                a.predicate
            )));
        }
        let args = a
            .args
            .iter()
            .map(|t| self.resolve(t, &HashMap::new()))
            .collect::<Result<Vec<_>, _>>()?;
        let slot = self
            .pred_slot(&a.predicate, &args)
            .ok_or_else(|| PddlError::Grounding(format!("no fluent for `{}`", super::print::atom(a))))?;
        s.set_bit(slot, value);
        Ok(())
    }
}
