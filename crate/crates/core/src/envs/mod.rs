//! Simulated environments with their labelings, abstractions and safety
//! specifications.

pub mod grid;
pub mod watertank;

use rand::RngCore;
use thiserror::Error;

use crate::automata::{ActionId, Alphabet, AutomatonError, LabelId};

pub use grid::{GridConfig, GridMap, GridWorld};
pub use watertank::{EnergyTable, TankConfig, TankState, WaterTank};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("map: {0}")]
    Map(String),
    #[error("energy table: {0}")]
    Energy(String),
    #[error("invalid setting: {0}")]
    Config(String),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// What happened in one environment step.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    /// The episode ended by reaching a goal or a violation.
    pub terminal: bool,
    /// The episode ended by running out of steps.
    pub truncated: bool,
    /// The raw dynamics registered a safety violation.
    pub violation: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// A discrete episodic environment with an observer function.
///
/// `label` is the observation of the current state. For act-then-observe
/// environments it is the label produced by the previous action.
pub trait Environment {
    fn labels(&self) -> &Alphabet;
    fn actions(&self) -> &Alphabet;
    fn reset(&mut self, rng: &mut dyn RngCore);
    /// Compact key of the full environment state, used by tabular learners.
    fn observation(&self) -> u64;
    fn label(&self) -> LabelId;
    fn step(&mut self, action: ActionId, rng: &mut dyn RngCore) -> StepOutcome;
}
