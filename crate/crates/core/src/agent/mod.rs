pub mod belief;
pub mod config;
pub mod model;
pub mod visibility;

pub use belief::{Belief, BeliefError, BeliefSpace, Observation, Particle};
pub use config::{AgentConfig, ConfigError, CostProfile, GoalSpec, InvalidActionPolicy, Observability, QueryKind, RewardProfile};
pub use model::{boltzmann, logsumexp, ActionValues, AgentError, AgentModel, Hypothesis, StepScore};
