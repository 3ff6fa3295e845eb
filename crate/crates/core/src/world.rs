//! Deterministic environment semantics: states, valid actions, transitions
//! and action reconstruction from consecutive states.

use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::pddl::ground::{BoolExpr, CEffect, FluentId, GroundedEnvironment, ObjId};
use crate::pddl::GroundAction;

/// One symbolic state. Bits hold ground predicates followed by bit-matrix
/// cells; ints hold integer function slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorldState {
    pub ints: Box<[i64]>,
    pub bits: Box<[u64]>,
}

impl WorldState {
    pub fn zeroed(n_ints: usize, n_bits: usize) -> Self {
        Self {
            ints: vec![0; n_ints].into_boxed_slice(),
            bits: vec![0; n_bits.div_ceil(64)].into_boxed_slice(),
        }
    }

    #[inline]
    pub fn bit(&self, i: u32) -> bool {
        self.bits[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set_bit(&mut self, i: u32, v: bool) {
        let w = &mut self.bits[(i / 64) as usize];
        if v {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    pub fn get(&self, f: FluentId) -> i64 {
        match f {
            FluentId::Bit(i) => self.bit(i) as i64,
            FluentId::Int(i) => self.ints[i as usize],
        }
    }

    /// 64-bit FNV-1a over the canonical serialization of the fluent vectors.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for v in self.ints.iter() {
            feed(&v.to_le_bytes());
        }
        feed(&[0xff]);
        for v in self.bits.iter() {
            feed(&v.to_le_bytes());
        }
        h
    }
}

/// Action taken between two frames.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum StepAction {
    Ground(usize),
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluentDiff {
    pub fluent: String,
    pub before: i64,
    pub after: i64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("precondition of {action} violated")]
    PreconditionViolated { action: String },
    #[error("no action explains the transition; changed fluents: {}", format_diffs(.diffs))]
    NoExplainingAction { diffs: Vec<FluentDiff> },
}

fn format_diffs(diffs: &[FluentDiff]) -> String {
    diffs
        .iter()
        .map(|d| format!("{} {} -> {} ({:+})", d.fluent, d.before, d.after, d.after - d.before))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Result of reconstructing one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub action: StepAction,
    /// Other actions that explain the same transition, if any.
    pub alternatives: Vec<usize>,
}

impl GroundedEnvironment {
    pub fn is_valid(&self, s: &WorldState, action: usize) -> bool {
        self.eval(&self.compiled(action).precondition, s)
    }

    /// Indices of the valid ground actions, in canonical order.
    pub fn valid_actions(&self, s: &WorldState) -> Vec<usize> {
        (0..self.actions().len()).filter(|&a| self.is_valid(s, a)).collect()
    }

    pub fn valid_ground_actions(&self, s: &WorldState) -> Vec<&GroundAction> {
        self.valid_actions(s).into_iter().map(|a| &self.actions()[a]).collect()
    }

    /// Applies `action`; errors when its precondition does not hold.
    pub fn apply(&self, s: &WorldState, action: usize) -> Result<WorldState, WorldError> {
        if !self.is_valid(s, action) {
            return Err(WorldError::PreconditionViolated {
                action: self.actions()[action].to_string(),
            });
        }
        Ok(self.apply_unchecked(s, action))
    }

    /// Applies effects without checking the precondition. All right-hand
    /// sides read the old state; deletes land before adds.
    pub fn apply_unchecked(&self, s: &WorldState, action: usize) -> WorldState {
        let mut dels = Vec::new();
        let mut adds = Vec::new();
        let mut ints = Vec::new();
        self.collect_writes(&self.compiled(action).effects, s, &mut dels, &mut adds, &mut ints);
        let mut next = s.clone();
        for i in dels {
            next.set_bit(i, false);
        }
        for i in adds {
            next.set_bit(i, true);
        }
        for (i, v) in ints {
            next.ints[i as usize] = v;
        }
        next
    }

    fn collect_writes(
        &self,
        effects: &[CEffect],
        s: &WorldState,
        dels: &mut Vec<u32>,
        adds: &mut Vec<u32>,
        ints: &mut Vec<(u32, i64)>,
    ) {
        for e in effects {
            match e {
                CEffect::SetBit(i, true) => adds.push(*i),
                CEffect::SetBit(i, false) => dels.push(*i),
                CEffect::Assign(i, v) => ints.push((*i, v.eval(s))),
                CEffect::Increase(i, v) => ints.push((*i, s.ints[*i as usize] + v.eval(s))),
                CEffect::Decrease(i, v) => ints.push((*i, s.ints[*i as usize] - v.eval(s))),
                CEffect::SetCell(c, v) => {
                    let row = c.row.eval(s);
                    let col = c.col.eval(s);
                    if self.grid.contains(col, row) {
                        let idx = c.base + (row - 1) as u32 * self.grid.cols + (col - 1) as u32;
                        let value = match v {
                            BoolExpr::Const(b) => *b,
                            BoolExpr::Cell(_) => {
                                crate::pddl::ground::Cond::BoolEq(v.clone(), BoolExpr::Const(true)).eval(s, self.grid)
                            }
                        };
                        if value {
                            adds.push(idx);
                        } else {
                            dels.push(idx);
                        }
                    }
                }
                CEffect::When(cond, inner) => {
                    if cond.eval(s, self.grid) {
                        self.collect_writes(inner, s, dels, adds, ints);
                    }
                }
            }
        }
    }

    /// Finds the first valid action (canonical order) that maps `prev` to
    /// `next`; an identical pair with no explaining action is a no-op.
    pub fn reconstruct_action(&self, prev: &WorldState, next: &WorldState) -> Result<Reconstruction, WorldError> {
        let explaining: Vec<usize> = self
            .valid_actions(prev)
            .into_iter()
            .filter(|&a| self.apply_unchecked(prev, a) == *next)
            .collect();
        match explaining.split_first() {
            Some((&first, rest)) => Ok(Reconstruction {
                action: StepAction::Ground(first),
                alternatives: rest.to_vec(),
            }),
            None if prev == next => Ok(Reconstruction {
                action: StepAction::NoOp,
                alternatives: Vec::new(),
            }),
            None => Err(WorldError::NoExplainingAction {
                diffs: self.diff(prev, next),
            }),
        }
    }

    /// Fluents whose values differ between two states.
    pub fn diff(&self, a: &WorldState, b: &WorldState) -> Vec<FluentDiff> {
        self.all_fluents()
            .filter(|&f| a.get(f) != b.get(f))
            .map(|f| FluentDiff {
                fluent: self.fluent_name(f),
                before: a.get(f),
                after: b.get(f),
            })
            .collect()
    }

    pub fn loc(&self, s: &WorldState, obj: ObjId) -> Option<(i64, i64)> {
        let x = self.func_slot("xloc", &[obj])?;
        let y = self.func_slot("yloc", &[obj])?;
        Some((s.ints[x as usize], s.ints[y as usize]))
    }

    pub fn set_loc(&self, s: &mut WorldState, obj: ObjId, x: i64, y: i64) {
        if let (Some(xs), Some(ys)) = (self.func_slot("xloc", &[obj]), self.func_slot("yloc", &[obj])) {
            s.ints[xs as usize] = x;
            s.ints[ys as usize] = y;
        }
    }

    /// Value of `turn`, for multi-agent domains.
    pub fn turn(&self, s: &WorldState) -> Option<i64> {
        self.func_slot("turn", &[]).map(|i| s.ints[i as usize])
    }

    /// Renders a state as a PDDL problem `:init` block.
    pub fn init_block(&self, s: &WorldState) -> String {
        let mut out = String::from("(:init\n");
        for f in self.all_fluents() {
            match f {
                FluentId::Bit(i) if i < self.n_pred_bits() => {
                    if s.bit(i) {
                        let _ = writeln!(out, "  {}", self.fluent_name(f));
                    }
                }
                FluentId::Bit(i) => {
                    if s.bit(i) {
                        let _ = writeln!(out, "  (= {} true)", self.fluent_name(f));
                    }
                }
                FluentId::Int(i) => {
                    let _ = writeln!(out, "  (= {} {})", self.fluent_name(f), s.ints[i as usize]);
                }
            }
        }
        out.push(')');
        out
    }

    /// Name of the agent that acts in `action`: its first agent-typed argument.
    pub fn actor(&self, action: usize) -> Option<ObjId> {
        let agents = self.agents();
        self.actions()[action]
            .args
            .iter()
            .filter_map(|a| self.object_id(a))
            .find(|o| agents.contains(o))
    }
}
