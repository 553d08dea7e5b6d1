//! Deterministic safety word automata over a (label × action) alphabet.
//!
//! A [`SafetyAutomaton`] is complete: every `(state, label, action)` triple has
//! exactly one successor. Acceptance means the run never leaves the safe set.
//! All unsafe states are collapsed into a single absorbing fail state when an
//! automaton is constructed, and states unreachable from the initial state are
//! dropped.

mod json;
mod patterns;
mod product;

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use json::AutomatonFile;
pub use patterns::{build_bounded_stay, build_collision, build_invariance, build_min_hold, ObstacleFlags};
pub use product::conjoin;

/// Index of an observation label.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub u32);

/// Index of a system action.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub u32);

impl LabelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ActionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

pub type StateId = usize;

/// A dense alphabet of named symbols. Symbol `i` has name `names[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Alphabet {
    names: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, AutomatonError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if let Some(prev) = seen.insert(n.as_str(), i) {
                return Err(AutomatonError::DuplicateSymbol { name: n.clone(), first: prev, second: i });
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn labels(&self) -> impl Iterator<Item = LabelId> {
        (0..self.names.len() as u32).map(LabelId)
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> {
        (0..self.names.len() as u32).map(ActionId)
    }
}

/// What an automaton describes. Specifications constrain the learner;
/// abstractions describe which label sequences the environment can produce.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Specification,
    Abstraction,
}

/// How a character `(label, action)` lines up with time.
///
/// `ObserveThenAct`: the label is the observation of the current state and the
/// action is chosen after seeing it. In the game the environment moves first.
///
/// `ActThenObserve`: the label is the observation produced *by* the action in
/// the same character. In the game the system commits to an action and the
/// environment answers with the resulting observation.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepOrder {
    #[default]
    ObserveThenAct,
    ActThenObserve,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AutomatonError {
    #[error("empty {0} alphabet")]
    EmptyAlphabet(&'static str),
    #[error("duplicate symbol name {name:?} at positions {first} and {second}")]
    DuplicateSymbol { name: String, first: usize, second: usize },
    #[error("automaton has no states")]
    NoStates,
    #[error("initial state {0} out of range")]
    InitialOutOfRange(StateId),
    #[error("initial state is unsafe; the specification is violated before any input")]
    InitialUnsafe,
    #[error("transition table has {got} entries, expected {expected}")]
    TableSize { expected: usize, got: usize },
    #[error("transition ({from}, {label}, {action}) targets out-of-range state {to}")]
    TargetOutOfRange { from: StateId, label: LabelId, action: ActionId, to: StateId },
    #[error("transition ({from}, {label}, {action}) is missing")]
    MissingTransition { from: StateId, label: LabelId, action: ActionId },
    #[error("transition ({from}, {label}, {action}) is defined twice")]
    DuplicateTransition { from: StateId, label: LabelId, action: ActionId },
    #[error("symbol index out of range in transition {0:?}")]
    SymbolOutOfRange([usize; 4]),
    #[error("safe-state index {0} out of range")]
    SafeOutOfRange(StateId),
    #[error("label alphabets differ")]
    LabelMismatch,
    #[error("action alphabets differ")]
    ActionMismatch,
    #[error("step orders differ")]
    StepOrderMismatch,
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("invalid pattern parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed automaton file: {0}")]
    Format(String),
}

/// A complete deterministic safety automaton. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetyAutomaton {
    labels: Alphabet,
    actions: Alphabet,
    role: Role,
    step_order: StepOrder,
    initial: StateId,
    safe: Vec<bool>,
    /// Row-major `[state][label][action]`.
    delta: Vec<StateId>,
    names: Vec<String>,
}

impl SafetyAutomaton {
    /// Builds an automaton from a raw total transition table laid out as
    /// `[state][label][action]`.
    ///
    /// Unsafe states are merged into one absorbing fail state and unreachable
    /// states are pruned, so state indices of the result may differ from the
    /// input. State names follow their states.
    pub fn from_table(
        labels: Alphabet,
        actions: Alphabet,
        role: Role,
        initial: StateId,
        safe: Vec<bool>,
        delta: Vec<StateId>,
        names: Option<Vec<String>>,
    ) -> Result<Self, AutomatonError> {
        if labels.is_empty() {
            return Err(AutomatonError::EmptyAlphabet("label"));
        }
        if actions.is_empty() {
            return Err(AutomatonError::EmptyAlphabet("action"));
        }
        let n = safe.len();
        if n == 0 {
            return Err(AutomatonError::NoStates);
        }
        if initial >= n {
            return Err(AutomatonError::InitialOutOfRange(initial));
        }
        if !safe[initial] {
            return Err(AutomatonError::InitialUnsafe);
        }
        let (nl, na) = (labels.len(), actions.len());
        let expected = n * nl * na;
        if delta.len() != expected {
            return Err(AutomatonError::TableSize { expected, got: delta.len() });
        }
        for (i, &to) in delta.iter().enumerate() {
            if to >= n {
                let from = i / (nl * na);
                let rest = i % (nl * na);
                return Err(AutomatonError::TargetOutOfRange {
                    from,
                    label: LabelId((rest / na) as u32),
                    action: ActionId((rest % na) as u32),
                    to,
                });
            }
        }
        let names = names.unwrap_or_else(|| (0..n).map(|i| format!("q{i}")).collect());
        if names.len() != n {
            return Err(AutomatonError::Format(format!("{} state names for {} states", names.len(), n)));
        }
        Ok(normalize(labels, actions, role, initial, &safe, &delta, &names))
    }

    pub fn labels(&self) -> &Alphabet {
        &self.labels
    }

    pub fn actions(&self) -> &Alphabet {
        &self.actions
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn step_order(&self) -> StepOrder {
        self.step_order
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn num_states(&self) -> usize {
        self.safe.len()
    }

    pub fn num_safe(&self) -> usize {
        self.safe.iter().filter(|&&s| s).count()
    }

    pub fn is_safe(&self, q: StateId) -> bool {
        self.safe[q]
    }

    pub fn state_name(&self, q: StateId) -> &str {
        &self.names[q]
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.names.iter().position(|n| n == name)
    }

    /// The canonical fail state, if the automaton has one.
    pub fn fail_state(&self) -> Option<StateId> {
        self.safe.iter().position(|&s| !s)
    }

    pub fn next(&self, q: StateId, l: LabelId, a: ActionId) -> StateId {
        let (nl, na) = (self.labels.len(), self.actions.len());
        self.delta[(q * nl + l.index()) * na + a.index()]
    }

    pub fn with_role(&self, role: Role) -> Self {
        Self { role, ..self.clone() }
    }

    pub fn with_step_order(&self, step_order: StepOrder) -> Self {
        Self { step_order, ..self.clone() }
    }

    /// Runs the automaton over a finite trace and returns the final state.
    pub fn run(&self, trace: &[(LabelId, ActionId)]) -> StateId {
        trace.iter().fold(self.initial, |q, &(l, a)| self.next(q, l, a))
    }

    /// Whether every state of the run over `trace` is safe.
    pub fn accepts(&self, trace: &[(LabelId, ActionId)]) -> bool {
        // unsafe states are absorbing, so the last state decides
        self.is_safe(self.run(trace))
    }

    /// Safe states from which no infinite path stays inside the safe set.
    ///
    /// Computed as the complement (within the safe set) of the greatest fixed
    /// point of "has some successor inside the set". An empty result means the
    /// automaton is a well-formed abstraction.
    pub fn validate_abstraction(&self) -> Vec<StateId> {
        let n = self.num_states();
        let mut alive = self.safe.clone();
        let (nl, na) = (self.labels.len(), self.actions.len());
        // successor counts inside the candidate set, per state
        let mut live_succ = vec![0usize; n];
        let mut preds: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for q in 0..n {
            for k in 0..nl * na {
                let to = self.delta[q * nl * na + k];
                preds[to].push(q);
                if alive[to] {
                    live_succ[q] += 1;
                }
            }
        }
        let mut queue: VecDeque<StateId> = (0..n).filter(|&q| alive[q] && live_succ[q] == 0).collect();
        for &q in &queue {
            alive[q] = false;
        }
        while let Some(dead) = queue.pop_front() {
            for &p in &preds[dead] {
                live_succ[p] -= 1;
                if alive[p] && live_succ[p] == 0 {
                    alive[p] = false;
                    queue.push_back(p);
                }
            }
        }
        (0..n).filter(|&q| self.safe[q] && !alive[q]).collect()
    }

    /// Returns a copy in which every offending state reported by
    /// [`validate_abstraction`](Self::validate_abstraction) is made unsafe.
    ///
    /// Fails if the initial state itself is an offender.
    pub fn demote_dead_ends(&self) -> Result<Self, AutomatonError> {
        let offenders = self.validate_abstraction();
        if offenders.is_empty() {
            return Ok(self.clone());
        }
        let mut safe = self.safe.clone();
        for q in offenders {
            safe[q] = false;
        }
        if !safe[self.initial] {
            return Err(AutomatonError::InitialUnsafe);
        }
        Ok(normalize(
            self.labels.clone(),
            self.actions.clone(),
            self.role,
            self.initial,
            &safe,
            &self.delta,
            &self.names,
        )
        .with_step_order(self.step_order))
    }

    pub(crate) fn raw_delta(&self) -> &[StateId] {
        &self.delta
    }

    pub(crate) fn names(&self) -> &[String] {
        &self.names
    }
}

/// Merge all unsafe states into one absorbing fail state and keep only the
/// states reachable from `initial`. Safe states keep their relative BFS order.
fn normalize(
    labels: Alphabet,
    actions: Alphabet,
    role: Role,
    initial: StateId,
    safe: &[bool],
    delta: &[StateId],
    names: &[String],
) -> SafetyAutomaton {
    let (nl, na) = (labels.len(), actions.len());
    let width = nl * na;
    const FAIL: usize = usize::MAX;
    let mut index: HashMap<StateId, StateId> = HashMap::new();
    let mut order: Vec<StateId> = Vec::new();
    let mut queue = VecDeque::new();
    index.insert(initial, 0);
    order.push(initial);
    queue.push_back(initial);
    let mut fail_seen = false;
    while let Some(q) = queue.pop_front() {
        for k in 0..width {
            let to = delta[q * width + k];
            if !safe[to] {
                fail_seen = true;
                continue;
            }
            if let std::collections::hash_map::Entry::Vacant(e) = index.entry(to) {
                e.insert(order.len());
                order.push(to);
                queue.push_back(to);
            }
        }
    }
    let fail_id = if fail_seen { Some(order.len()) } else { None };
    let total = order.len() + usize::from(fail_seen);
    let mut new_delta = Vec::with_capacity(total * width);
    for &q in &order {
        for k in 0..width {
            let to = delta[q * width + k];
            new_delta.push(if safe[to] { index[&to] } else { fail_id.unwrap_or(FAIL) });
        }
    }
    let mut new_names: Vec<String> = order.iter().map(|&q| names[q].clone()).collect();
    let mut new_safe = vec![true; order.len()];
    if let Some(f) = fail_id {
        new_delta.extend(std::iter::repeat_n(f, width));
        new_safe.push(false);
        new_names.push("fail".to_string());
    }
    SafetyAutomaton {
        labels,
        actions,
        role,
        step_order: StepOrder::default(),
        initial: 0,
        safe: new_safe,
        delta: new_delta,
        names: new_names,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab(names: &[&str]) -> Alphabet {
        Alphabet::new(names.iter().copied()).unwrap()
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(matches!(
            Alphabet::new(["x", "y", "x"]),
            Err(AutomatonError::DuplicateSymbol { first: 0, second: 2, .. })
        ));
    }

    #[test]
    fn unsafe_states_are_merged_and_absorbing() {
        // q0 -a-> q1 (unsafe), q0 -b-> q2 (unsafe), q1/q2 jump back to q0
        let delta = vec![1, 2, 0, 0, 0, 0];
        let a = SafetyAutomaton::from_table(
            ab(&["l"]),
            ab(&["a", "b"]),
            Role::Specification,
            0,
            vec![true, false, false],
            delta,
            None,
        )
        .unwrap();
        assert_eq!(a.num_states(), 2);
        let fail = a.fail_state().unwrap();
        for act in a.actions().actions() {
            assert_eq!(a.next(fail, LabelId(0), act), fail);
        }
    }

    #[test]
    fn unreachable_states_pruned() {
        let delta = vec![0, 2, 1];
        let a = SafetyAutomaton::from_table(
            ab(&["l"]),
            ab(&["a"]),
            Role::Specification,
            0,
            vec![true, true, true],
            delta,
            None,
        )
        .unwrap();
        assert_eq!(a.num_states(), 1);
        assert!(a.fail_state().is_none());
    }

    #[test]
    fn initial_unsafe_is_reported() {
        let r = SafetyAutomaton::from_table(
            ab(&["l"]),
            ab(&["a"]),
            Role::Specification,
            0,
            vec![false],
            vec![0],
            None,
        );
        assert_eq!(r, Err(AutomatonError::InitialUnsafe));
    }

    #[test]
    fn bad_table_sizes_and_targets() {
        let r = SafetyAutomaton::from_table(
            ab(&["l"]),
            ab(&["a"]),
            Role::Specification,
            0,
            vec![true],
            vec![0, 0],
            None,
        );
        assert!(matches!(r, Err(AutomatonError::TableSize { .. })));
        let r = SafetyAutomaton::from_table(
            ab(&["l"]),
            ab(&["a"]),
            Role::Specification,
            0,
            vec![true],
            vec![3],
            None,
        );
        assert!(matches!(r, Err(AutomatonError::TargetOutOfRange { to: 3, .. })));
    }

    #[test]
    fn dead_end_reported_and_demoted() {
        // q0 -> q1 always; q1 -> fail always: q1 has no infinite safe path, nor does q0
        let delta = vec![1, 2, 2];
        let a = SafetyAutomaton::from_table(
            ab(&["l"]),
            ab(&["a"]),
            Role::Abstraction,
            0,
            vec![true, true, false],
            delta,
            None,
        )
        .unwrap();
        let offenders = a.validate_abstraction();
        assert_eq!(offenders, vec![0, 1]);
        assert_eq!(a.demote_dead_ends(), Err(AutomatonError::InitialUnsafe));

        // q0 loops on a, goes to q1 on b; q1 -> fail
        let delta = vec![0, 1, 2, 2, 2, 2];
        let a = SafetyAutomaton::from_table(
            ab(&["l"]),
            ab(&["a", "b"]),
            Role::Abstraction,
            0,
            vec![true, true, false],
            delta,
            None,
        )
        .unwrap();
        assert_eq!(a.validate_abstraction(), vec![1]);
        let fixed = a.demote_dead_ends().unwrap();
        assert!(fixed.validate_abstraction().is_empty());
        assert_eq!(fixed.num_states(), 2);
    }
}
