//! Two-player safety games built from a specification and an environment
//! abstraction, and their winning regions.

mod export;
mod solve;

use std::collections::{HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::automata::{ActionId, Alphabet, LabelId, SafetyAutomaton, StateId, StepOrder};

pub use export::{DumpState, GameDump, DOT_STATE_LIMIT};
pub use solve::{losing_play, losing_ranks, solve, PlayStep, WinningRegion};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error("specification and abstraction use different label alphabets")]
    LabelMismatch,
    #[error("specification and abstraction use different action alphabets")]
    ActionMismatch,
    #[error("specification and abstraction use different step orders")]
    StepOrderMismatch,
    #[error("specification initial state is unsafe")]
    InitialUnsafe,
    #[error("abstraction has safe states without an infinite safe path: {0:?}")]
    InvalidAbstraction(Vec<StateId>),
    #[error("malformed game: {0}")]
    Malformed(String),
}

/// Where a game state comes from.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GameNode {
    /// A pair of safe specification and safe abstraction states.
    Product { spec: StateId, abs: StateId },
    /// Merged states where the specification failed while the abstraction
    /// still held. Losing and absorbing.
    Error,
    /// Merged states where the abstraction was violated. Winning and
    /// absorbing: guarantees only hold for conforming environments.
    Paradise,
    /// A state of a game given directly as a graph.
    Plain(usize),
}

/// State counts under the different counting conventions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GameStats {
    pub spec_states: usize,
    pub spec_safe: usize,
    pub abs_states: usize,
    pub abs_safe: usize,
    /// `|Q| · |Q_M|` before any merging or pruning.
    pub product_states: usize,
    /// Unpruned product after merging all spec-violating pairs into one error
    /// state and all abstraction-violating pairs into one paradise state.
    pub merged_full_product: usize,
    /// States reachable from the initial state after merging.
    pub reachable: usize,
}

/// A complete game graph. The environment picks labels, the system picks
/// actions; who moves first within a step is given by [`StepOrder`].
#[derive(Clone, Debug)]
pub struct SafetyGame {
    labels: Alphabet,
    actions: Alphabet,
    step_order: StepOrder,
    nodes: Vec<GameNode>,
    names: Vec<String>,
    initial: usize,
    safe: Vec<bool>,
    /// Row-major `[state][label][action]`.
    delta: Vec<usize>,
    stats: GameStats,
}

impl SafetyGame {
    /// Builds a game directly from a graph. Used for testing solvers and for
    /// games that do not come from automata.
    pub fn from_graph(
        labels: Alphabet,
        actions: Alphabet,
        step_order: StepOrder,
        initial: usize,
        safe: Vec<bool>,
        delta: Vec<usize>,
    ) -> Result<Self, GameError> {
        let n = safe.len();
        let width = labels.len() * actions.len();
        if width == 0 {
            return Err(GameError::Malformed("empty alphabet".into()));
        }
        if delta.len() != n * width {
            return Err(GameError::Malformed(format!(
                "transition table has {} entries, expected {}",
                delta.len(),
                n * width
            )));
        }
        if initial >= n || delta.iter().any(|&t| t >= n) {
            return Err(GameError::Malformed("state index out of range".into()));
        }
        let stats = GameStats {
            spec_states: n,
            spec_safe: safe.iter().filter(|&&s| s).count(),
            abs_states: 1,
            abs_safe: 1,
            product_states: n,
            merged_full_product: n,
            reachable: n,
        };
        Ok(Self {
            labels,
            actions,
            step_order,
            nodes: (0..n).map(GameNode::Plain).collect(),
            names: (0..n).map(|i| format!("g{i}")).collect(),
            initial,
            safe,
            delta,
            stats,
        })
    }

    pub fn labels(&self) -> &Alphabet {
        &self.labels
    }

    pub fn actions(&self) -> &Alphabet {
        &self.actions
    }

    pub fn step_order(&self) -> StepOrder {
        self.step_order
    }

    pub fn num_states(&self) -> usize {
        self.nodes.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_safe(&self, g: usize) -> bool {
        self.safe[g]
    }

    pub fn node(&self, g: usize) -> GameNode {
        self.nodes[g]
    }

    pub fn name(&self, g: usize) -> &str {
        &self.names[g]
    }

    pub fn stats(&self) -> &GameStats {
        &self.stats
    }

    pub fn next(&self, g: usize, l: LabelId, a: ActionId) -> usize {
        let (nl, na) = (self.labels.len(), self.actions.len());
        self.delta[(g * nl + l.index()) * na + a.index()]
    }

    /// Looks up the game state for a (spec, abs) pair, if it is reachable.
    pub fn find_product(&self, spec: StateId, abs: StateId) -> Option<usize> {
        self.nodes.iter().position(|n| *n == GameNode::Product { spec, abs })
    }

    pub fn error_state(&self) -> Option<usize> {
        self.nodes.iter().position(|n| *n == GameNode::Error)
    }

    pub fn paradise_state(&self) -> Option<usize> {
        self.nodes.iter().position(|n| *n == GameNode::Paradise)
    }

    /// Returns a copy with a different safe set on the same arena.
    pub fn with_safe(&self, safe: Vec<bool>) -> Result<Self, GameError> {
        if safe.len() != self.safe.len() {
            return Err(GameError::Malformed("safe vector length differs".into()));
        }
        Ok(Self { safe, ..self.clone() })
    }
}

/// Product game of a specification and an abstraction.
///
/// `δ((q, q_M), l, a) = (δ(q, (l, a)), δ_M(q_M, (l, a)))`. A successor whose
/// abstraction component is unsafe becomes the paradise state; otherwise one
/// whose specification component is unsafe becomes the error state. Merging
/// happens during the reachability sweep, so only reachable states exist.
pub fn build_safety_game(spec: &SafetyAutomaton, abs: &SafetyAutomaton) -> Result<SafetyGame, GameError> {
    if spec.labels() != abs.labels() {
        return Err(GameError::LabelMismatch);
    }
    if spec.actions() != abs.actions() {
        return Err(GameError::ActionMismatch);
    }
    if spec.step_order() != abs.step_order() {
        return Err(GameError::StepOrderMismatch);
    }
    if !spec.is_safe(spec.initial()) {
        return Err(GameError::InitialUnsafe);
    }
    let offenders = abs.validate_abstraction();
    if !offenders.is_empty() {
        return Err(GameError::InvalidAbstraction(offenders));
    }

    let labels = spec.labels().clone();
    let actions = spec.actions().clone();
    let width = labels.len() * actions.len();

    let mut nodes: Vec<GameNode> = Vec::new();
    let mut ids: HashMap<GameNode, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    let mut intern = |node: GameNode, nodes: &mut Vec<GameNode>, queue: &mut VecDeque<usize>| {
        *ids.entry(node).or_insert_with(|| {
            nodes.push(node);
            queue.push_back(nodes.len() - 1);
            nodes.len() - 1
        })
    };
    let classify = |q: StateId, qm: StateId| {
        if !abs.is_safe(qm) {
            GameNode::Paradise
        } else if !spec.is_safe(q) {
            GameNode::Error
        } else {
            GameNode::Product { spec: q, abs: qm }
        }
    };
    let initial = intern(classify(spec.initial(), abs.initial()), &mut nodes, &mut queue);
    let mut delta: Vec<usize> = Vec::new();
    while let Some(g) = queue.pop_front() {
        debug_assert_eq!(delta.len(), g * width);
        match nodes[g] {
            GameNode::Product { spec: q, abs: qm } => {
                for l in labels.labels() {
                    for a in actions.actions() {
                        let t = classify(spec.next(q, l, a), abs.next(qm, l, a));
                        delta.push(intern(t, &mut nodes, &mut queue));
                    }
                }
            }
            _ => delta.extend(std::iter::repeat_n(g, width)),
        }
    }
    let safe: Vec<bool> = nodes.iter().map(|n| *n != GameNode::Error).collect();
    let names = nodes
        .iter()
        .map(|n| match *n {
            GameNode::Product { spec: q, abs: qm } => {
                format!("({},{})", spec.state_name(q), abs.state_name(qm))
            }
            GameNode::Error => "error".to_string(),
            GameNode::Paradise => "paradise".to_string(),
            GameNode::Plain(i) => format!("g{i}"),
        })
        .collect();

    let (spec_safe, abs_safe) = (spec.num_safe(), abs.num_safe());
    let spec_unsafe = spec.num_states() - spec_safe;
    let abs_unsafe = abs.num_states() - abs_safe;
    let stats = GameStats {
        spec_states: spec.num_states(),
        spec_safe,
        abs_states: abs.num_states(),
        abs_safe,
        product_states: spec.num_states() * abs.num_states(),
        merged_full_product: spec_safe * abs_safe
            + usize::from(spec_unsafe > 0 && abs_safe > 0)
            + usize::from(abs_unsafe > 0),
        reachable: nodes.len(),
    };
    log::debug!(
        "safety game: {} reachable states ({} in merged full product, {} raw pairs)",
        stats.reachable,
        stats.merged_full_product,
        stats.product_states
    );
    Ok(SafetyGame {
        labels,
        actions,
        step_order: spec.step_order(),
        nodes,
        names,
        initial,
        safe,
        delta,
        stats,
    })
}
