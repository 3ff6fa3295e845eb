//! Problem objects and grid dimensions.

use serde::{Deserialize, Serialize};

use super::ast::DomainSpec;
use super::PddlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    /// Number of rows, i.e. `gridheight`.
    pub rows: u32,
    /// Number of columns, i.e. `gridwidth`.
    pub cols: u32,
}

impl GridDims {
    pub fn new(rows: u32, cols: u32) -> Self {
        Self { rows, cols }
    }

    pub fn cells(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 1 && y >= 1 && x <= self.cols as i64 && y <= self.rows as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectTag {
    GenericObjects,
    UniqueObjects,
    BackgroundCells,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub tag: ObjectTag,
}

/// Objects of a problem instance, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSet {
    pub entries: Vec<ObjectEntry>,
}

impl ObjectSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, ty: impl Into<String>, tag: ObjectTag) -> &mut Self {
        self.entries.push(ObjectEntry {
            name: name.into(),
            ty: ty.into(),
            tag,
        });
        self
    }

    pub fn with(mut self, name: &str, ty: &str, tag: ObjectTag) -> Self {
        self.push(name, ty, tag);
        self
    }

    pub fn get(&self, name: &str) -> Option<&ObjectEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Checks name uniqueness and that every type is declared.
    pub fn check(&self, spec: &DomainSpec) -> Result<(), PddlError> {
        for (i, e) in self.entries.iter().enumerate() {
            if self.entries[..i].iter().any(|o| o.name == e.name) {
                return Err(PddlError::Grounding(format!("object `{}` listed twice", e.name)));
            }
            if !spec.is_type_declared(&e.ty) {
                return Err(PddlError::TypeMismatch(format!(
                    "object `{}` has undeclared type `{}`",
                    e.name, e.ty
                )));
            }
        }
        Ok(())
    }
}
