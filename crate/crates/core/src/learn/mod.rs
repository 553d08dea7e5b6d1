//! Tabular Q-learning and SARSA with optional shielding.

mod eval;
mod train;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::ActionId;
use crate::shield::{Ranking, Shield, ShieldError};

pub use eval::{
    certify_tank_env_view, evaluate_tank_policy, optimal_tank_policy, tank_finite_horizon_optimum, TankPolicy,
};
pub use train::{
    aggregate_csv, train_postposed, train_preemptive, train_unshielded, EpisodeRecord, RunLog, Shielding,
    StepRecord, Trainer,
};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid learner configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("learner picked {0} outside the shield's menu")]
    OutsideMenu(ActionId),
    #[error("environment-only observations need a certificate that the shield's menus follow from the environment state")]
    EnvViewUnavailable,
    #[error(transparent)]
    Shield(#[from] ShieldError),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Q,
    Sarsa,
}

/// What ranked-but-unsafe actions of a postposed shield are updated with.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    /// A fixed negative reward.
    Punish(f64),
    /// The reward of the executed action.
    Passthrough,
}

impl Default for RewardVariant {
    fn default() -> Self {
        RewardVariant::Punish(-10.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSchedule {
    Constant(f64),
    /// Linear from `start` to `end` over `episodes`, then constant.
    Linear {
        start: f64,
        end: f64,
        episodes: usize,
    },
    /// `min(1, scale / n)` where `n` counts visits to the current
    /// observation, so well-known states turn greedy first.
    PerState {
        scale: f64,
    },
}

impl EpsilonSchedule {
    /// Exploration rate in `episode` at an observation seen `visits` times
    /// (counting the current visit).
    pub fn at(&self, episode: usize, visits: u32) -> f64 {
        match *self {
            EpsilonSchedule::Constant(e) => e,
            EpsilonSchedule::PerState { scale } => (scale / f64::from(visits.max(1))).min(1.0),
            EpsilonSchedule::Linear { start, end, episodes } => {
                if episodes == 0 || episode >= episodes {
                    end
                } else {
                    start + (end - start) * episode as f64 / episodes as f64
                }
            }
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    Random,
}

/// What the value table is keyed by.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// Environment state and shield state.
    #[default]
    Joint,
    /// Environment state only; needs an [`EnvView`] certificate.
    EnvOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    /// Step size for the n-th update of a pair is `alpha / (1 + n)^alpha_decay`;
    /// 0 keeps it constant.
    pub alpha_decay: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub rank_width: usize,
    pub reward_variant: RewardVariant,
    pub seed: u64,
    pub tie_break: TieBreak,
    pub observation: ObservationMode,
    pub initial_value: f64,
    /// Keep a per-step record in the run log.
    pub record_steps: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Q,
            alpha: 0.1,
            alpha_decay: 0.0,
            gamma: 0.99,
            epsilon: EpsilonSchedule::Constant(0.1),
            rank_width: 1,
            reward_variant: RewardVariant::default(),
            seed: 0,
            tie_break: TieBreak::LowestIndex,
            observation: ObservationMode::Joint,
            initial_value: 0.0,
            record_steps: false,
        }
    }
}

impl LearnerConfig {
    /// Lists every offending field.
    pub fn validate(&self) -> Result<(), LearnError> {
        let mut errs = Vec::new();
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            errs.push(format!("alpha = {} must be in (0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.alpha_decay) {
            errs.push(format!("alpha_decay = {} must be in [0, 1]", self.alpha_decay));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            errs.push(format!("gamma = {} must be in [0, 1]", self.gamma));
        }
        let eps_ok = |e: f64| (0.0..=1.0).contains(&e);
        match self.epsilon {
            EpsilonSchedule::Constant(e) if !eps_ok(e) => {
                errs.push(format!("epsilon = {e} must be in [0, 1]"))
            }
            EpsilonSchedule::Linear { start, end, .. } if !eps_ok(start) || !eps_ok(end) => {
                errs.push(format!("epsilon schedule {start} -> {end} must stay in [0, 1]"))
            }
            EpsilonSchedule::PerState { scale } if !(scale > 0.0 && scale.is_finite()) => {
                errs.push(format!("epsilon scale = {scale} must be positive"))
            }
            _ => {}
        }
        if self.rank_width == 0 {
            errs.push("rank_width must be at least 1".into());
        }
        if let RewardVariant::Punish(r) = self.reward_variant {
            if !(r < 0.0 && r.is_finite()) {
                errs.push(format!("punishment = {r} must be negative"));
            }
        }
        if !self.initial_value.is_finite() {
            errs.push("initial_value must be finite".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(LearnError::Config(errs))
        }
    }
}

/// Evidence that a learner may drop the shield state from its observation.
///
/// That is sound when, on every run that conforms to the abstraction, the
/// shield's menu is a function of the environment state alone: the shielded
/// process is then Markov in the environment state. A shield with a single
/// non-paradise state always qualifies; [`certify_tank_env_view`] checks the
/// property by enumerating the tank's reachable joint states.
#[derive(Copy, Clone, Debug)]
pub struct EnvView<'a> {
    pub(crate) shield: &'a Shield,
}

impl<'a> EnvView<'a> {
    pub fn single_state(shield: &'a Shield) -> Option<Self> {
        shield.single_state_view().then_some(Self { shield })
    }

    pub fn shield(&self) -> &'a Shield {
        self.shield
    }
}

/// Key of a table row: environment observation and shield state.
pub type ObsKey = (u64, u32);

/// Action values per observation. Unseen rows read as the initial value.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    rows: HashMap<ObsKey, Vec<f64>>,
    num_actions: usize,
    initial: f64,
}

impl ValueTable {
    pub fn new(num_actions: usize, initial: f64) -> Self {
        Self { rows: HashMap::new(), num_actions, initial }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn value(&self, obs: ObsKey, a: ActionId) -> f64 {
        self.rows.get(&obs).map_or(self.initial, |r| r[a.index()])
    }

    pub fn set(&mut self, obs: ObsKey, a: ActionId, v: f64) {
        let (n, init) = (self.num_actions, self.initial);
        self.rows.entry(obs).or_insert_with(|| vec![init; n])[a.index()] = v;
    }

    /// Largest value over `available`, or over all actions if `None`.
    pub fn max_value(&self, obs: ObsKey, available: Option<&[ActionId]>) -> f64 {
        match (self.rows.get(&obs), available) {
            (None, _) => self.initial,
            (Some(r), None) => r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            (Some(r), Some(av)) => av.iter().map(|a| r[a.index()]).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Highest-valued action among `available`; ties go to the lowest index.
    pub fn greedy(&self, obs: ObsKey, available: &[ActionId]) -> ActionId {
        let mut best = available[0];
        for &a in &available[1..] {
            if self.value(obs, a) > self.value(obs, best)
                || (self.value(obs, a) == self.value(obs, best) && a < best)
            {
                best = a;
            }
        }
        best
    }

    /// One-step Q-learning update. `next` is `None` at terminal states;
    /// otherwise it carries the successor and the actions to maximize over.
    pub fn q_update(
        &mut self,
        obs: ObsKey,
        a: ActionId,
        r: f64,
        next: Option<(ObsKey, Option<&[ActionId]>)>,
        alpha: f64,
        gamma: f64,
    ) {
        let boot = next.map_or(0.0, |(o, av)| self.max_value(o, av));
        self.td(obs, a, r + gamma * boot, alpha);
    }

    /// One-step SARSA update toward `r + γ·Q(obs', a')`.
    pub fn sarsa_update(
        &mut self,
        obs: ObsKey,
        a: ActionId,
        r: f64,
        next: Option<(ObsKey, ActionId)>,
        alpha: f64,
        gamma: f64,
    ) {
        let boot = next.map_or(0.0, |(o, a2)| self.value(o, a2));
        self.td(obs, a, r + gamma * boot, alpha);
    }

    fn td(&mut self, obs: ObsKey, a: ActionId, target: f64, alpha: f64) {
        let old = self.value(obs, a);
        self.set(obs, a, old + alpha * (target - old));
    }

    /// Rows sorted by key, for inspection and stable output.
    pub fn rows(&self) -> Vec<(ObsKey, &[f64])> {
        let mut v: Vec<_> = self.rows.iter().map(|(k, r)| (*k, r.as_slice())).collect();
        v.sort_by_key(|(k, _)| *k);
        v
    }
}

/// ε-greedy ranking of length `min(k, |available|)`.
///
/// With probability `epsilon` a uniformly random ordering of `available` is
/// cut to length; otherwise actions are sorted by value, ties by lowest index
/// (or randomly with [`TieBreak::Random`]).
pub fn select_ranking(
    table: &ValueTable,
    obs: ObsKey,
    available: &[ActionId],
    epsilon: f64,
    k: usize,
    tie_break: TieBreak,
    rng: &mut dyn RngCore,
) -> Ranking {
    assert!(!available.is_empty(), "no action available");
    let k = k.clamp(1, available.len());
    let mut order = available.to_vec();
    if rng.gen::<f64>() < epsilon {
        order.shuffle(rng);
    } else {
        if tie_break == TieBreak::Random {
            order.shuffle(rng);
        } else {
            order.sort();
        }
        // stable sort keeps the tie order chosen above
        order.sort_by(|&a, &b| table.value(obs, b).total_cmp(&table.value(obs, a)));
    }
    order.truncate(k);
    Ranking::new(order, table.num_actions()).expect("distinct available actions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ALL: [ActionId; 3] = [ActionId(0), ActionId(1), ActionId(2)];

    #[test]
    fn myopic_overwrite() {
        let mut t = ValueTable::new(3, 0.0);
        t.q_update((1, 0), ActionId(2), 5.0, Some(((2, 0), None)), 1.0, 0.0);
        assert_eq!(t.value((1, 0), ActionId(2)), 5.0);
        t.sarsa_update((1, 0), ActionId(1), -3.0, Some(((2, 0), ActionId(0))), 1.0, 0.0);
        assert_eq!(t.value((1, 0), ActionId(1)), -3.0);
    }

    #[test]
    fn zero_rewards_are_a_fixed_point() {
        let mut t = ValueTable::new(3, 0.0);
        for i in 0..100 {
            t.q_update((i % 7, 0), ActionId((i % 3) as u32), 0.0, Some((((i + 1) % 7, 0), None)), 0.5, 1.0);
        }
        assert!(t.rows().iter().all(|(_, r)| r.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn greedy_ranking_sorted_with_low_index_ties() {
        let mut t = ValueTable::new(3, 0.0);
        t.set((0, 0), ActionId(0), 1.0);
        t.set((0, 0), ActionId(1), 3.0);
        t.set((0, 0), ActionId(2), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = select_ranking(&t, (0, 0), &ALL, 0.0, 3, TieBreak::LowestIndex, &mut rng);
        assert_eq!(r.as_slice(), &[ActionId(1), ActionId(0), ActionId(2)]);
        let r = select_ranking(&t, (0, 0), &ALL, 0.0, 1, TieBreak::LowestIndex, &mut rng);
        assert_eq!(r.as_slice(), &[ActionId(1)]);
        assert_eq!(t.greedy((0, 0), &[ActionId(0), ActionId(2)]), ActionId(0));
    }

    #[test]
    fn config_errors_listed() {
        let c = LearnerConfig {
            alpha: 0.0,
            gamma: 2.0,
            rank_width: 0,
            reward_variant: RewardVariant::Punish(1.0),
            ..LearnerConfig::default()
        };
        match c.validate() {
            Err(LearnError::Config(errs)) => assert_eq!(errs.len(), 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(LearnerConfig::default().validate().is_ok());
    }

    #[test]
    fn linear_schedule() {
        let s = EpsilonSchedule::Linear { start: 1.0, end: 0.0, episodes: 10 };
        assert_eq!(s.at(0, 1), 1.0);
        assert!((s.at(5, 1) - 0.5).abs() < 1e-12);
        assert_eq!(s.at(20, 1), 0.0);
        let p = EpsilonSchedule::PerState { scale: 4.0 };
        assert_eq!(p.at(0, 2), 1.0);
        assert_eq!(p.at(0, 8), 0.5);
    }
}
