//! Belief space over hidden object placements, observations and belief
//! updates.

use serde::Serialize;
use thiserror::Error;

use super::config::{BeliefConfig, Visibility};
use super::visibility::{line_of_sight, region};
use crate::pddl::ground::{GroundedEnvironment, ObjId};
use crate::world::{StepAction, WorldState};

/// Location given to a hidden object in worlds where it is absent.
pub const NOWHERE: (i64, i64) = (0, 0);

/// Weight sums must stay within this of 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeliefError {
    #[error("belief configuration: {0}")]
    Config(String),
    #[error("every belief particle contradicts the observation at step {step}")]
    ImpossibleObservation { step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Particle {
    /// Index of the placement this particle started from.
    pub assignment: usize,
    #[serde(skip)]
    pub state: WorldState,
    pub weight: f64,
}

/// Normalized weighted set of candidate world states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Belief {
    pub particles: Vec<Particle>,
}

impl Belief {
    pub fn total(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    fn normalize(&mut self) {
        let z = self.total();
        for p in &mut self.particles {
            p.weight /= z;
        }
    }

    /// Probability of each placement, indexed by assignment.
    pub fn assignment_marginal(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for p in &self.particles {
            out[p.assignment] += p.weight;
        }
        out
    }
}

/// What the agent sees in one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: WorldState,
    /// Visibility of each container, in container order.
    pub visible: Vec<bool>,
}

/// Enumerated placements of hidden objects in containers.
#[derive(Debug, Clone)]
pub struct BeliefSpace {
    pub config: BeliefConfig,
    pub agent: ObjId,
    pub hidden: Vec<ObjId>,
    pub containers: Vec<ObjId>,
    /// Per element, the container index of each hidden object (`None`: absent).
    pub assignments: Vec<Vec<Option<usize>>>,
    hidden_slots: Vec<(u32, u32)>,
    barrier_matrix: bool,
    barrier_objects: Vec<ObjId>,
}

impl BeliefSpace {
    /// Hidden objects are the belief-object instances sharing a cell with a
    /// container in `s0`.
    pub fn new(env: &GroundedEnvironment, config: &BeliefConfig, s0: &WorldState) -> Result<Self, BeliefError> {
        let agent = env
            .object_id(&config.agent)
            .ok_or_else(|| BeliefError::Config(format!("unknown agent `{}`", config.agent)))?;
        let containers = env.objects_of_type(&config.belief_container);
        if containers.is_empty() {
            return Err(BeliefError::Config(format!(
                "no objects of container type `{}`",
                config.belief_container
            )));
        }
        let container_locs: Vec<(i64, i64)> = containers
            .iter()
            .map(|&c| env.loc(s0, c).ok_or_else(|| BeliefError::Config("containers need xloc/yloc".into())))
            .collect::<Result<_, _>>()?;
        let hidden: Vec<ObjId> = env
            .objects_of_type(&config.belief_object)
            .into_iter()
            .filter(|&o| env.loc(s0, o).is_some_and(|l| container_locs.contains(&l)))
            .collect();
        if hidden.is_empty() {
            return Err(BeliefError::Config(format!(
                "no `{}` object sits in a `{}` in the initial state",
                config.belief_object, config.belief_container
            )));
        }
        let hidden_slots = hidden
            .iter()
            .map(|&o| (env.func_slot("xloc", &[o]).unwrap(), env.func_slot("yloc", &[o]).unwrap()))
            .collect();
        let barrier_matrix = env.has_matrix(&config.barrier);
        let barrier_objects = if barrier_matrix {
            Vec::new()
        } else {
            env.objects_of_type(&config.barrier)
        };
        let mut assignments = Vec::new();
        let mut cur = Vec::new();
        enumerate(hidden.len(), containers.len(), config.allow_absent, &mut cur, &mut assignments);
        Ok(Self {
            config: config.clone(),
            agent,
            hidden,
            containers,
            assignments,
            hidden_slots,
            barrier_matrix,
            barrier_objects,
        })
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn label(&self, env: &GroundedEnvironment, i: usize) -> String {
        self.hidden
            .iter()
            .zip(&self.assignments[i])
            .map(|(&o, c)| {
                let where_ = match c {
                    Some(c) => env.object_name(self.containers[*c]),
                    None => "none",
                };
                format!("{}@{}", env.object_name(o), where_)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn labels(&self, env: &GroundedEnvironment) -> Vec<String> {
        (0..self.len()).map(|i| self.label(env, i)).collect()
    }

    /// `s` with hidden objects placed per assignment `i`.
    pub fn world(&self, env: &GroundedEnvironment, s: &WorldState, i: usize) -> WorldState {
        let mut w = s.clone();
        for (k, c) in self.assignments[i].iter().enumerate() {
            let (x, y) = match c {
                Some(c) => env.loc(s, self.containers[*c]).unwrap(),
                None => NOWHERE,
            };
            w.ints[self.hidden_slots[k].0 as usize] = x;
            w.ints[self.hidden_slots[k].1 as usize] = y;
        }
        w
    }

    /// Index of the assignment matching the hidden placement in `s`.
    pub fn true_assignment(&self, env: &GroundedEnvironment, s: &WorldState) -> Option<usize> {
        (0..self.len()).find(|&i| self.world(env, s, i) == *s)
    }

    fn blocked(&self, env: &GroundedEnvironment, s: &WorldState) -> Vec<bool> {
        let g = env.grid;
        let mut mask = vec![false; g.cells()];
        if self.barrier_matrix {
            for y in 1..=g.rows as i64 {
                for x in 1..=g.cols as i64 {
                    let bit = env.cell_bit(&self.config.barrier, y, x).unwrap();
                    mask[((y - 1) * g.cols as i64 + x - 1) as usize] = s.bit(bit);
                }
            }
        } else {
            for &o in &self.barrier_objects {
                if let Some((x, y)) = env.loc(s, o) {
                    if g.contains(x, y) {
                        mask[((y - 1) * g.cols as i64 + x - 1) as usize] = true;
                    }
                }
            }
        }
        mask
    }

    /// Containers visible to the agent in `s`.
    pub fn visible_containers(&self, env: &GroundedEnvironment, s: &WorldState) -> Vec<bool> {
        let g = env.grid;
        let mask = self.blocked(env, s);
        let blocked = |x: i64, y: i64| g.contains(x, y) && mask[((y - 1) * g.cols as i64 + x - 1) as usize];
        let Some(me) = env.loc(s, self.agent).filter(|&(x, y)| g.contains(x, y)) else {
            return vec![false; self.containers.len()];
        };
        let reach = match self.config.visibility {
            Visibility::Region => Some(region(g, me, &blocked)),
            Visibility::LineOfSight => None,
        };
        self.containers
            .iter()
            .map(|&c| {
                let Some(at) = env.loc(s, c).filter(|&(x, y)| g.contains(x, y)) else {
                    return false;
                };
                match &reach {
                    Some(r) => r[((at.1 - 1) * g.cols as i64 + at.0 - 1) as usize],
                    None => line_of_sight(me, at, &blocked),
                }
            })
            .collect()
    }

    pub fn observe(&self, env: &GroundedEnvironment, s: &WorldState) -> Observation {
        Observation {
            state: s.clone(),
            visible: self.visible_containers(env, s),
        }
    }

    fn is_hidden_slot(&self, i: u32) -> bool {
        self.hidden_slots.iter().any(|&(x, y)| x == i || y == i)
    }

    /// True when particle state `p` agrees with every fact in `obs`.
    pub fn consistent(&self, env: &GroundedEnvironment, p: &WorldState, obs: &Observation) -> bool {
        let s = &obs.state;
        if p.bits != s.bits {
            return false;
        }
        for i in 0..s.ints.len() as u32 {
            if !self.is_hidden_slot(i) && p.ints[i as usize] != s.ints[i as usize] {
                return false;
            }
        }
        let g = env.grid;
        let container_locs: Vec<Option<(i64, i64)>> = self.containers.iter().map(|&c| env.loc(s, c)).collect();
        for &o in &self.hidden {
            let lp = env.loc(p, o).unwrap();
            let ls = env.loc(s, o).unwrap();
            // placements outside containers (held or loose on the grid) are seen directly
            let loose = |l: (i64, i64)| (g.contains(l.0, l.1) || l == (-1, -1)) && !container_locs.contains(&Some(l));
            if (loose(lp) || loose(ls)) && lp != ls {
                return false;
            }
            for (c, vis) in container_locs.iter().zip(&obs.visible) {
                if *vis && c.is_some() && (Some(lp) == *c) != (Some(ls) == *c) {
                    return false;
                }
            }
        }
        true
    }

    /// Initial belief for element `i`: `confidence` on its own placement,
    /// the rest spread evenly, then conditioned on `obs0`.
    pub fn initial_belief(&self, env: &GroundedEnvironment, i: usize, obs0: &Observation) -> Result<Belief, BeliefError> {
        let n = self.len();
        let c = self.config.confidence;
        let mut particles = Vec::new();
        for j in 0..n {
            let w = if n == 1 {
                1.0
            } else if j == i {
                c
            } else {
                (1.0 - c) / (n - 1) as f64
            };
            if w > 0.0 {
                particles.push(Particle {
                    assignment: j,
                    state: self.world(env, &obs0.state, j),
                    weight: w,
                });
            }
        }
        let mut b = Belief { particles };
        self.condition(env, &mut b, obs0, 0)?;
        Ok(b)
    }

    fn condition(&self, env: &GroundedEnvironment, b: &mut Belief, obs: &Observation, step: usize) -> Result<(), BeliefError> {
        b.particles.retain(|p| p.weight > 0.0 && self.consistent(env, &p.state, obs));
        if b.particles.is_empty() {
            return Err(BeliefError::ImpossibleObservation { step });
        }
        b.normalize();
        Ok(())
    }

    /// Applies the agent's own action to every particle (dropping particles
    /// where it is impossible), then conditions on the next observation.
    pub fn update(
        &self,
        env: &GroundedEnvironment,
        b: &Belief,
        action: &StepAction,
        obs: &Observation,
        step: usize,
    ) -> Result<Belief, BeliefError> {
        let mut next = Belief {
            particles: b
                .particles
                .iter()
                .filter_map(|p| match action {
                    StepAction::NoOp => Some(p.clone()),
                    StepAction::Ground(a) => env.is_valid(&p.state, *a).then(|| Particle {
                        assignment: p.assignment,
                        state: env.apply_unchecked(&p.state, *a),
                        weight: p.weight,
                    }),
                })
                .collect(),
        };
        self.condition(env, &mut next, obs, step)?;
        Ok(next)
    }
}

fn enumerate(k: usize, n: usize, allow_absent: bool, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for c in 0..n {
        if cur.contains(&Some(c)) {
            continue;
        }
        cur.push(Some(c));
        enumerate(k, n, allow_absent, cur, out);
        cur.pop();
    }
    if allow_absent || k > n {
        cur.push(None);
        enumerate(k, n, allow_absent, cur, out);
        cur.pop();
    }
}

/// |ℬ₀| for `k` hidden objects and `n` containers.
pub fn count_assignments(k: usize, n: usize, allow_absent: bool) -> usize {
    let mut out = Vec::new();
    enumerate(k, n, allow_absent, &mut Vec::new(), &mut out);
    out.len()
}
