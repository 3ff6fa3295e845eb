//! PDDL dialect: reading, printing, validation and grounding.

pub mod ast;
pub mod ground;
pub mod objects;
pub mod parse;
pub mod print;
pub mod sexpr;
pub mod validate;

pub use ast::*;
pub use ground::{GroundAction, GroundedEnvironment, GroundingOptions};
pub use objects::{GridDims, ObjectEntry, ObjectSet, ObjectTag};
pub use parse::{parse_domain, parse_facts, parse_formula};
pub use print::print_domain;
pub use validate::{validate_domain, ValidationReport, Violation, ViolationKind};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PddlError {
    #[error("syntax error at {line}:{col}: {message}{}", expected.as_ref().map(|e| format!(" (expected {e})")).unwrap_or_default())]
    Syntax {
        line: u32,
        col: u32,
        message: String,
        expected: Option<String>,
    },
    #[error("unknown requirement flag `{flag}` at {line}:{col}")]
    UnknownRequirement { line: u32, col: u32, flag: String },
    #[error("duplicate {what} `{name}` at {line}:{col}")]
    Duplicate {
        line: u32,
        col: u32,
        what: String,
        name: String,
    },
    #[error("unsupported construct `{construct}` at {line}:{col}")]
    Unsupported {
        line: u32,
        col: u32,
        construct: String,
    },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("grounding produced more than {cap} ground actions")]
    GroundingCap { cap: usize },
    #[error("invalid domain: {0}")]
    Invalid(String),
    #[error("grounding error: {0}")]
    Grounding(String),
}
