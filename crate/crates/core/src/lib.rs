//! Symbolic inverse planning: a PDDL world model, Boltzmann-rational agents
//! and exact Bayesian inference over their goals, beliefs, rewards and costs.

pub mod agent;
pub mod domains;
pub mod inference;
pub mod oracle;
pub mod pddl;
pub mod pipeline;
pub mod report;
pub mod planner;
pub mod stimulus;
pub mod synthesis;
pub mod world;
