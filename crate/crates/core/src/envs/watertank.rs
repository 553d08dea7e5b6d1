//! A water tank with an inflow valve.
//!
//! Each step the valve is opened or closed. The level changes by the inflow
//! (1 or 2 liters while open, nothing while closed) minus the outflow (0 or 1
//! liters), each drawn uniformly. The tank must neither run dry nor overflow,
//! and every valve switch has to be kept for a minimum number of steps.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, RngCore};

use super::{EnvError, Environment, StepOutcome};
use crate::automata::{
    build_invariance, build_min_hold, conjoin, ActionId, Alphabet, LabelId, Role, SafetyAutomaton, StepOrder,
};

pub const OPEN: ActionId = ActionId(0);
pub const CLOSE: ActionId = ActionId(1);

/// Capacity in liters. Level 0 is dry, `CAPACITY` and above overflow.
pub const CAPACITY: u32 = 100;

/// Label for the level `level`: "level<1", one class per liter 1..=99,
/// "level>99".
pub fn level_label(level: i64) -> LabelId {
    LabelId(level.clamp(0, CAPACITY as i64) as u32)
}

pub fn tank_labels() -> Alphabet {
    let mut names = vec!["level<1".to_string()];
    names.extend((1..CAPACITY).map(|i| format!("{i}<=level<{}", i + 1)));
    names.push(format!("level>{}", CAPACITY - 1));
    Alphabet::new(names).expect("distinct label names")
}

pub fn tank_actions() -> Alphabet {
    Alphabet::new(["open", "close"]).expect("distinct action names")
}

/// Energy cost per level. Index `i` is the cost of ending a step at level `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyTable(Vec<f64>);

impl Default for EnergyTable {
    /// Two basins: a shallow one around 20 liters and a deeper one around 70.
    fn default() -> Self {
        Self(
            (0..=CAPACITY)
                .map(|l| {
                    let l = l as f64;
                    let a = 0.2 + ((l - 20.0) / 25.0).powi(2);
                    let b = 0.05 + ((l - 70.0) / 25.0).powi(2);
                    a.min(b).min(1.0)
                })
                .collect(),
        )
    }
}

impl EnergyTable {
    pub fn new(values: Vec<f64>) -> Result<Self, EnvError> {
        if values.len() != CAPACITY as usize + 1 {
            return Err(EnvError::Energy(format!("expected {} entries, got {}", CAPACITY + 1, values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EnvError::Energy(format!("non-finite energy at level {i}")));
        }
        Ok(Self(values))
    }

    pub fn get(&self, level: u32) -> f64 {
        self.0[level.min(CAPACITY) as usize]
    }

    /// Parses `level,energy` lines. A header line and `#` comments are
    /// skipped; every level from 0 to the capacity must appear once.
    pub fn from_csv(text: &str) -> Result<Self, EnvError> {
        let mut values: Vec<Option<f64>> = vec![None; CAPACITY as usize + 1];
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("level") {
                continue;
            }
            let (l, e) = line
                .split_once(',')
                .ok_or_else(|| EnvError::Energy(format!("line {}: expected level,energy", n + 1)))?;
            let l: usize =
                l.trim().parse().map_err(|_| EnvError::Energy(format!("line {}: bad level {l:?}", n + 1)))?;
            let e: f64 = e
                .trim()
                .parse()
                .map_err(|_| EnvError::Energy(format!("line {}: bad energy {e:?}", n + 1)))?;
            let slot = values
                .get_mut(l)
                .ok_or_else(|| EnvError::Energy(format!("line {}: level {l} out of range", n + 1)))?;
            if slot.replace(e).is_some() {
                return Err(EnvError::Energy(format!("level {l} listed twice")));
            }
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(l, v)| v.ok_or_else(|| EnvError::Energy(format!("level {l} missing"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(values)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,energy\n");
        for (l, e) in self.0.iter().enumerate() {
            let _ = writeln!(out, "{l},{e}");
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TankConfig {
    pub initial_level: u32,
    pub horizon: u32,
    /// Reward for a violating step; the episode ends there.
    pub penalty: f64,
    /// Minimum number of steps a valve setting is kept after a switch.
    pub hold: u32,
    pub energy: EnergyTable,
}

impl Default for TankConfig {
    fn default() -> Self {
        Self { initial_level: 50, horizon: 100, penalty: -100.0, hold: 3, energy: EnergyTable::default() }
    }
}

impl TankConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(1..CAPACITY).contains(&self.initial_level) {
            return Err(EnvError::Config(format!(
                "initial level {} outside 1..{CAPACITY}",
                self.initial_level
            )));
        }
        if self.hold == 0 {
            return Err(EnvError::Config("hold must be at least 1".into()));
        }
        if !self.penalty.is_finite() {
            return Err(EnvError::Config("penalty must be finite".into()));
        }
        Ok(())
    }
}

/// Level, valve setting and remaining mandatory steps of the setting.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct TankState {
    pub level: u32,
    pub open: bool,
    pub hold: u32,
}

impl TankState {
    pub fn key(&self) -> u64 {
        self.level as u64 | (u64::from(self.open) << 8) | ((self.hold as u64) << 9)
    }
}

/// One possible result of a step, with its probability.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TankTransition {
    pub next: TankState,
    pub reward: f64,
    pub violation: bool,
    pub probability: f64,
}

#[derive(Clone, Debug)]
pub struct WaterTank {
    config: TankConfig,
    labels: Alphabet,
    actions: Alphabet,
    state: TankState,
    steps: u32,
}

impl WaterTank {
    pub fn new(config: TankConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let state = Self::initial_state(&config);
        Ok(Self { config, labels: tank_labels(), actions: tank_actions(), state, steps: 0 })
    }

    fn initial_state(config: &TankConfig) -> TankState {
        TankState { level: config.initial_level, open: false, hold: 0 }
    }

    pub fn config(&self) -> &TankConfig {
        &self.config
    }

    pub fn state(&self) -> TankState {
        self.state
    }

    pub fn set_state(&mut self, state: TankState) {
        self.state = state;
    }

    pub fn initial(&self) -> TankState {
        Self::initial_state(&self.config)
    }

    /// Applies a level change deterministically. Shared by sampling and
    /// enumeration.
    fn apply(&self, s: TankState, a: ActionId, delta: i64) -> (TankState, f64, bool) {
        let open = a == OPEN;
        let (hold, switch_ok) = if open == s.open {
            (s.hold.saturating_sub(1), true)
        } else {
            (self.config.hold - 1, s.hold == 0)
        };
        let raw = s.level as i64 + delta;
        let level = raw.clamp(0, CAPACITY as i64) as u32;
        let violation = !switch_ok || level == 0 || level >= CAPACITY;
        let reward = if violation { self.config.penalty } else { -self.config.energy.get(level) };
        (TankState { level, open, hold }, reward, violation)
    }

    /// Every outcome of taking `a` in `s`, merged by successor state.
    pub fn outcomes(&self, s: TankState, a: ActionId) -> Vec<TankTransition> {
        let deltas: &[(i64, f64)] =
            if a == OPEN { &[(0, 0.25), (1, 0.5), (2, 0.25)] } else { &[(-1, 0.5), (0, 0.5)] };
        deltas
            .iter()
            .map(|&(d, p)| {
                let (next, reward, violation) = self.apply(s, a, d);
                TankTransition { next, reward, violation, probability: p }
            })
            .collect()
    }
}

impl Environment for WaterTank {
    fn labels(&self) -> &Alphabet {
        &self.labels
    }

    fn actions(&self) -> &Alphabet {
        &self.actions
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) {
        self.state = self.initial();
        self.steps = 0;
    }

    fn observation(&self) -> u64 {
        self.state.key()
    }

    fn label(&self) -> LabelId {
        level_label(self.state.level as i64)
    }

    fn step(&mut self, action: ActionId, rng: &mut dyn RngCore) -> StepOutcome {
        let inflow: i64 = if action == OPEN { rng.gen_range(1..=2) } else { 0 };
        let outflow: i64 = rng.gen_range(0..=1);
        let (next, reward, violation) = self.apply(self.state, action, inflow - outflow);
        self.state = next;
        self.steps += 1;
        StepOutcome {
            reward,
            terminal: violation,
            truncated: !violation && self.steps >= self.config.horizon,
            violation,
        }
    }
}

/// Level-tracking abstraction with states `q0..q99` plus fail.
///
/// State `q_i` means the last observed level was `i` liters (`q99` also
/// covers overflow). Reading `(label, action)` from `q_i` is allowed when
/// the label's level is one the action can produce from `i`: `i-1` or `i`
/// when closed, `i`, `i+1` or `i+2` when open. Nothing is below empty, so
/// closing at `q0` fails.
pub fn watertank_abstraction(initial_level: u32) -> Result<SafetyAutomaton, EnvError> {
    if initial_level >= CAPACITY {
        return Err(EnvError::Config(format!("initial level {initial_level} out of range")));
    }
    let labels = tank_labels();
    let actions = tank_actions();
    let n = CAPACITY as usize;
    let fail = n;
    let mut delta = Vec::with_capacity((n + 1) * labels.len() * 2);
    for i in 0..n as i64 {
        for l in labels.labels() {
            for a in actions.actions() {
                let range = if a == OPEN { i..=i + 2 } else { i - 1..=i };
                let reachable = range.filter(|&x| x >= 0).any(|x| level_label(x) == l);
                let allowed = reachable && !(a == CLOSE && i == 0);
                delta.push(if allowed { (l.index()).min(n - 1) } else { fail });
            }
        }
    }
    delta.extend(std::iter::repeat_n(fail, labels.len() * 2));
    let mut safe = vec![true; n];
    safe.push(false);
    let mut names: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
    names.push("fail".into());
    let m = SafetyAutomaton::from_table(
        labels,
        actions,
        Role::Abstraction,
        initial_level as usize,
        safe,
        delta,
        Some(names),
    )?;
    Ok(m.with_step_order(StepOrder::ActThenObserve))
}

/// Never dry, never overflowing, and every valve switch kept for `hold`
/// steps.
pub fn watertank_spec(hold: u32) -> Result<SafetyAutomaton, EnvError> {
    let labels = tank_labels();
    let actions = tank_actions();
    let bounds = build_invariance(&labels, &actions, &[LabelId(0), LabelId(CAPACITY)])?;
    let dwell = build_min_hold(&labels, &actions, OPEN, hold)?;
    Ok(conjoin(&bounds, &dwell)?.with_step_order(StepOrder::ActThenObserve))
}
