//! Runtime shields extracted from solved safety games.
//!
//! A [`Shield`] is a finite transducer. At every step it reads the current
//! label and either offers the set of safe actions (preemptive placement) or
//! corrects a ranked list of proposed actions (postposed placement). Both
//! placements share one table; the placement only records intended use.
//!
//! For act-then-observe games the label that completes a character arrives
//! one step after the action, so the shield state remembers the pending
//! action. The runtime interface is the same for both step orders.

mod json;
mod verify;

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{ActionId, Alphabet, LabelId, StepOrder};
use crate::game::{losing_play, GameNode, SafetyGame, WinningRegion};

pub use json::{ShieldFile, SHIELD_FORMAT_VERSION};
pub use verify::{
    joint_contexts, verify_shield, Counterexample, JointContext, OverRestriction, VerificationReport,
    VerifyMode, ViolationKind,
};

/// Index of a shield state.
pub type ShieldState = u32;

const NONE: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum ShieldError {
    #[error("specification is unrealizable under the abstraction; the environment wins by playing {}", .0.join(" "))]
    Unrealizable(Vec<String>),
    #[error("action {action} is not in the menu of shield state {state} under label {label}")]
    NotInMenu { state: ShieldState, label: LabelId, action: ActionId },
    #[error("invalid ranking: {0}")]
    InvalidRanking(String),
    #[error("configured fallback {action} for game state {state} is not safe there")]
    InvalidFallback { state: usize, action: ActionId },
    #[error("shield and automata disagree: {0}")]
    Mismatch(String),
    #[error("malformed shield file: {0}")]
    Format(String),
    #[error("unsupported shield format version {0}")]
    Version(u32),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Where the shield is placed relative to the learner.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Before the learner: offers the set of safe actions.
    #[default]
    Preemptive,
    /// After the learner: replaces unsafe choices.
    Postposed,
}

/// How a postposed shield picks its replacement when none of the ranked
/// actions is safe. The choice is made once at synthesis time.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    /// The safe action with the lowest index.
    #[default]
    LowestIndex,
    /// The first safe action of a global preference order; actions not
    /// listed come after, by index.
    Preference(Vec<ActionId>),
    /// A fixed action per game state; unlisted states use the lowest index.
    PerState(HashMap<usize, ActionId>),
}

/// A preference-ordered list of distinct actions, most preferred first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ranking(Vec<ActionId>);

impl Ranking {
    pub fn new(actions: Vec<ActionId>, num_actions: usize) -> Result<Self, ShieldError> {
        if actions.is_empty() {
            return Err(ShieldError::InvalidRanking("empty".into()));
        }
        let mut seen = vec![false; num_actions];
        for &a in &actions {
            if a.index() >= num_actions {
                return Err(ShieldError::InvalidRanking(format!("{a} out of range")));
            }
            if std::mem::replace(&mut seen[a.index()], true) {
                return Err(ShieldError::InvalidRanking(format!("{a} listed twice")));
            }
        }
        Ok(Self(actions))
    }

    pub fn as_slice(&self) -> &[ActionId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> ActionId {
        self.0[0]
    }
}

/// Result of one postposed step.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PostposedOutput {
    pub action: ActionId,
    /// Position of `action` in the ranking, or `None` if it was substituted.
    pub rank: Option<usize>,
    /// True whenever the executed action differs from the top-ranked one.
    pub overridden: bool,
    pub next: ShieldState,
}

/// An immutable shield table. Stepping returns successors instead of
/// mutating, so one shield can serve many concurrent runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Shield {
    pub(crate) labels: Alphabet,
    pub(crate) actions: Alphabet,
    pub(crate) step_order: StepOrder,
    pub(crate) placement: Placement,
    pub(crate) names: Vec<String>,
    pub(crate) paradise: Vec<bool>,
    pub(crate) initial: ShieldState,
    /// `[state][label][action]`, `NONE` where the action is not allowed.
    pub(crate) next: Vec<u32>,
    /// `[state][label]`
    pub(crate) substitute: Vec<ActionId>,
}

impl Shield {
    pub fn labels(&self) -> &Alphabet {
        &self.labels
    }

    pub fn actions(&self) -> &Alphabet {
        &self.actions
    }

    pub fn step_order(&self) -> StepOrder {
        self.step_order
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn with_placement(&self, placement: Placement) -> Self {
        Self { placement, ..self.clone() }
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn initial(&self) -> ShieldState {
        self.initial
    }

    pub fn state_name(&self, s: ShieldState) -> &str {
        &self.names[s as usize]
    }

    /// Whether `s` is reached only after the abstraction was violated. The
    /// shield allows everything there and guarantees nothing.
    pub fn is_paradise(&self, s: ShieldState) -> bool {
        self.paradise[s as usize]
    }

    fn slot(&self, s: ShieldState, l: LabelId) -> usize {
        (s as usize * self.labels.len() + l.index()) * self.actions.len()
    }

    pub fn is_allowed(&self, s: ShieldState, l: LabelId, a: ActionId) -> bool {
        self.next[self.slot(s, l) + a.index()] != NONE
    }

    /// The safe actions in state `s` after observing `l`, in index order.
    pub fn menu(&self, s: ShieldState, l: LabelId) -> Vec<ActionId> {
        let base = self.slot(s, l);
        self.actions.actions().filter(|a| self.next[base + a.index()] != NONE).collect()
    }

    /// Number of safe actions in state `s` under `l`.
    pub fn menu_len(&self, s: ShieldState, l: LabelId) -> usize {
        let base = self.slot(s, l);
        self.next[base..base + self.actions.len()].iter().filter(|&&t| t != NONE).count()
    }

    /// The frozen replacement action for `(s, l)`.
    pub fn substitute(&self, s: ShieldState, l: LabelId) -> ActionId {
        self.substitute[s as usize * self.labels.len() + l.index()]
    }

    /// Successor after executing an allowed action.
    pub fn advance(&self, s: ShieldState, l: LabelId, a: ActionId) -> Result<ShieldState, ShieldError> {
        match self.next[self.slot(s, l) + a.index()] {
            NONE => Err(ShieldError::NotInMenu { state: s, label: l, action: a }),
            t => Ok(t),
        }
    }

    /// Picks the first safe action of `ranking`, or the frozen substitute if
    /// the ranking contains none, and advances on the executed action.
    pub fn postposed_step(&self, s: ShieldState, l: LabelId, ranking: &Ranking) -> PostposedOutput {
        let base = self.slot(s, l);
        let found = ranking.as_slice().iter().enumerate().find(|(_, a)| self.next[base + a.index()] != NONE);
        let (action, rank) = match found {
            Some((i, &a)) => (a, Some(i)),
            None => (self.substitute(s, l), None),
        };
        PostposedOutput {
            action,
            rank,
            overridden: action != ranking.first(),
            next: self.next[base + action.index()],
        }
    }

    /// True when no action is ever blocked.
    pub fn is_trivial(&self) -> bool {
        self.next.iter().all(|&t| t != NONE)
    }

    /// True when the shield has at most one state outside paradise, so a
    /// learner may ignore the shield state without losing information.
    pub fn single_state_view(&self) -> bool {
        self.paradise.iter().filter(|&&p| !p).count() <= 1
    }

    /// Number of `(state, label)` pairs whose menu is smaller than the
    /// action set.
    pub fn restricted_pairs(&self) -> usize {
        let na = self.actions.len();
        self.next.chunks(na).filter(|row| row.contains(&NONE)).count()
    }
}

/// Builds the preemptive shield: `menu(g, l) = { a | δ(g, l, a) ∈ W }` over
/// the winning states reachable under the shield.
pub fn extract_preemptive(game: &SafetyGame, region: &WinningRegion) -> Result<Shield, ShieldError> {
    extract(game, region, Placement::Preemptive, &FallbackPolicy::LowestIndex)
}

/// Builds the postposed shield: like the preemptive one plus a frozen
/// substitute action for every `(state, label)`.
pub fn extract_postposed(
    game: &SafetyGame,
    region: &WinningRegion,
    fallback: &FallbackPolicy,
) -> Result<Shield, ShieldError> {
    extract(game, region, Placement::Postposed, fallback)
}

fn extract(
    game: &SafetyGame,
    region: &WinningRegion,
    placement: Placement,
    fallback: &FallbackPolicy,
) -> Result<Shield, ShieldError> {
    if !region.realizable() {
        let play = losing_play(game).unwrap_or_default();
        let steps = play
            .iter()
            .map(|p| {
                format!(
                    "{}:({},{})",
                    game.name(p.state),
                    game.labels().name(p.label.index()),
                    game.actions().name(p.action.index())
                )
            })
            .collect();
        return Err(ShieldError::Unrealizable(steps));
    }
    let labels = game.labels().clone();
    let actions = game.actions().clone();
    let (nl, na) = (labels.len(), actions.len());
    let order = game.step_order();

    // shield state = (game state, pending action); pending is always None for
    // observe-then-act games
    type Key = (usize, Option<ActionId>);
    let mut keys: Vec<Key> = vec![(game.initial(), None)];
    let mut ids: HashMap<Key, u32> = HashMap::from([(keys[0], 0)]);
    let mut queue = VecDeque::from([0u32]);
    let mut next: Vec<u32> = Vec::new();
    let mut substitute: Vec<ActionId> = Vec::new();

    while let Some(s) = queue.pop_front() {
        let (g, pending) = keys[s as usize];
        debug_assert_eq!(next.len(), s as usize * nl * na);
        for l in labels.labels() {
            // game state in which the action for this step is chosen
            let here = match (order, pending) {
                (StepOrder::ObserveThenAct, _) | (StepOrder::ActThenObserve, None) => g,
                (StepOrder::ActThenObserve, Some(p)) => game.next(g, l, p),
            };
            debug_assert!(region.contains(here), "shield left the winning region");
            let allowed: Vec<bool> = match order {
                StepOrder::ObserveThenAct => {
                    actions.actions().map(|a| region.contains(game.next(here, l, a))).collect()
                }
                StepOrder::ActThenObserve => {
                    let ok = region.committed_actions(game, here);
                    actions.actions().map(|a| ok.contains(&a)).collect()
                }
            };
            let safe: Vec<ActionId> = actions.actions().filter(|a| allowed[a.index()]).collect();
            assert!(!safe.is_empty(), "winning state without a safe action");
            substitute.push(pick_fallback(fallback, here, &safe)?);
            for a in actions.actions() {
                if !allowed[a.index()] {
                    next.push(NONE);
                    continue;
                }
                let key = match order {
                    StepOrder::ObserveThenAct => (game.next(here, l, a), None),
                    StepOrder::ActThenObserve => (here, Some(a)),
                };
                let id = *ids.entry(key).or_insert_with(|| {
                    keys.push(key);
                    queue.push_back(keys.len() as u32 - 1);
                    keys.len() as u32 - 1
                });
                next.push(id);
            }
        }
    }

    let names = keys
        .iter()
        .map(|&(g, pending)| match pending {
            None => game.name(g).to_string(),
            Some(p) => format!("{}>{}", game.name(g), actions.name(p.index())),
        })
        .collect();
    let paradise: Vec<bool> = keys.iter().map(|&(g, _)| game.node(g) == GameNode::Paradise).collect();
    let shield = Shield {
        labels,
        actions,
        step_order: order,
        placement,
        names,
        paradise,
        initial: 0,
        next,
        substitute,
    };
    log::debug!(
        "extracted {:?} shield with {} states, {} restricted (state, label) pairs",
        placement,
        shield.num_states(),
        shield.restricted_pairs()
    );
    Ok(shield)
}

fn pick_fallback(policy: &FallbackPolicy, g: usize, safe: &[ActionId]) -> Result<ActionId, ShieldError> {
    Ok(match policy {
        FallbackPolicy::LowestIndex => safe[0],
        FallbackPolicy::Preference(order) => {
            order.iter().copied().find(|a| safe.contains(a)).unwrap_or(safe[0])
        }
        FallbackPolicy::PerState(map) => match map.get(&g) {
            Some(&a) if safe.contains(&a) => a,
            Some(&a) => return Err(ShieldError::InvalidFallback { state: g, action: a }),
            None => safe[0],
        },
    })
}
