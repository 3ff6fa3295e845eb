//! Lifted domain representation.

use serde::Serialize;

use super::sexpr::Span;

/// The implicit root of every type hierarchy.
pub const ROOT_TYPE: &str = "object";

/// Functions every grid domain with terrain matrices must declare.
pub const RESERVED_GRID_FUNCTIONS: [&str; 4] = ["gridheight", "gridwidth", "xloc", "yloc"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainSpec {
    pub name: String,
    /// Requirement flags without the leading colon.
    pub requirements: Vec<String>,
    pub types: Vec<TypeDecl>,
    pub constants: Vec<TypedName>,
    pub predicates: Vec<PredicateDecl>,
    pub functions: Vec<FunctionDecl>,
    pub derived: Vec<DerivedDecl>,
    pub actions: Vec<ActionSchema>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeDecl {
    pub name: String,
    pub parent: String,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TypedName {
    pub name: String,
    pub ty: String,
}

impl TypedName {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<TypedName>,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionRange {
    Integer,
    BitMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<TypedName>,
    pub range: FunctionRange,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedDecl {
    pub predicate: String,
    /// Variable names, including the leading `?`.
    pub params: Vec<String>,
    pub body: Formula,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<TypedName>,
    pub precondition: Formula,
    pub effects: Vec<Effect>,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn name(&self) -> &str {
        match self {
            Term::Var(s) | Term::Const(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Term(Term),
    Func { name: String, args: Vec<Term> },
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    GetIndex {
        matrix: String,
        row: Box<Expr>,
        col: Box<Expr>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "=" => CmpOp::Eq,
            "<" => CmpOp::Lt,
            ">" => CmpOp::Gt,
            "<=" => CmpOp::Le,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }

    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Lt => a < b,
            CmpOp::Gt => a > b,
            CmpOp::Le => a <= b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Formula {
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
    Atom(Atom),
    Cmp { op: CmpOp, lhs: Expr, rhs: Expr },
}

impl Formula {
    pub fn truth() -> Self {
        Formula::And(Vec::new())
    }

    /// Visits every atom together with its polarity under negation.
    pub fn visit_atoms<'a>(&'a self, positive: bool, f: &mut dyn FnMut(&'a Atom, bool)) {
        match self {
            Formula::And(items) | Formula::Or(items) => {
                items.iter().for_each(|i| i.visit_atoms(positive, f))
            }
            Formula::Not(inner) => inner.visit_atoms(!positive, f),
            Formula::Atom(a) => f(a, positive),
            Formula::Cmp { .. } => {}
        }
    }

    pub fn visit_exprs<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        match self {
            Formula::And(items) | Formula::Or(items) => {
                items.iter().for_each(|i| i.visit_exprs(f))
            }
            Formula::Not(inner) => inner.visit_exprs(f),
            Formula::Atom(_) => {}
            Formula::Cmp { lhs, rhs, .. } => {
                f(lhs);
                f(rhs);
            }
        }
    }
}

/// Assignable state location.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FluentTarget {
    Func { name: String, args: Vec<Term> },
    Cell { matrix: String, row: Expr, col: Expr },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Effect {
    Add(Atom),
    Del(Atom),
    Assign(FluentTarget, Expr),
    Increase(FluentTarget, Expr),
    Decrease(FluentTarget, Expr),
    When(Formula, Vec<Effect>),
}

impl DomainSpec {
    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn derived_for(&self, predicate: &str) -> Option<&DerivedDecl> {
        self.derived.iter().find(|d| d.predicate == predicate)
    }

    pub fn action_names(&self) -> Vec<&str> {
        self.actions.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn has_bit_matrix(&self) -> bool {
        self.functions
            .iter()
            .any(|f| f.range == FunctionRange::BitMatrix)
    }

    /// Parent of `ty`, or `None` for the root or undeclared types.
    pub fn parent_of(&self, ty: &str) -> Option<&str> {
        if ty == ROOT_TYPE {
            return None;
        }
        self.types
            .iter()
            .find(|t| t.name == ty)
            .map(|t| t.parent.as_str())
    }

    pub fn is_type_declared(&self, ty: &str) -> bool {
        ty == ROOT_TYPE || self.types.iter().any(|t| t.name == ty)
    }

    /// True when `ty` equals `ancestor` or descends from it.
    pub fn is_subtype(&self, ty: &str, ancestor: &str) -> bool {
        if ancestor == ROOT_TYPE {
            return true;
        }
        let mut cur = ty;
        for _ in 0..=self.types.len() {
            if cur == ancestor {
                return true;
            }
            match self.parent_of(cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
        false
    }

    /// Predicates that get built-in grid semantics: `at` (same cell) and
    /// `adjacent` (4-neighbour), when declared 2-ary without a definition in a
    /// domain that has `xloc`/`yloc`.
    pub fn builtin_derived(&self) -> Vec<&str> {
        let has_loc = ["xloc", "yloc"]
            .iter()
            .all(|f| self.function(f).is_some_and(|d| d.params.len() == 1));
        if !has_loc {
            return Vec::new();
        }
        ["at", "adjacent"]
            .into_iter()
            .filter(|p| {
                self.predicate(p).is_some_and(|d| d.params.len() == 2) && self.derived_for(p).is_none()
            })
            .collect()
    }

    /// True for predicates with a definition or built-in semantics.
    pub fn is_derived(&self, predicate: &str) -> bool {
        self.derived_for(predicate).is_some() || self.builtin_derived().contains(&predicate)
    }
}
