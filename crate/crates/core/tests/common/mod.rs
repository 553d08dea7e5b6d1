//! Generators and reference implementations shared by the integration tests.
#![allow(dead_code)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shieldrl::automata::{Alphabet, Role, SafetyAutomaton, StepOrder};
use shieldrl::game::SafetyGame;

pub fn alphabet(prefix: &str, n: usize) -> Alphabet {
    Alphabet::new((0..n).map(|i| format!("{prefix}{i}"))).unwrap()
}

/// Raw description of a game graph, kept so tests can run their own
/// reference computations on it.
#[derive(Clone, Debug)]
pub struct RawGame {
    pub labels: usize,
    pub actions: usize,
    pub order: StepOrder,
    pub safe: Vec<bool>,
    /// `[state][label][action]`
    pub delta: Vec<usize>,
}

impl RawGame {
    pub fn next(&self, g: usize, l: usize, a: usize) -> usize {
        self.delta[(g * self.labels + l) * self.actions + a]
    }

    pub fn states(&self) -> usize {
        self.safe.len()
    }

    pub fn build(&self) -> SafetyGame {
        SafetyGame::from_graph(
            alphabet("l", self.labels),
            alphabet("a", self.actions),
            self.order,
            0,
            self.safe.clone(),
            self.delta.clone(),
        )
        .unwrap()
    }

    /// Can the system keep a play that starts in `g` inside `w` for one step?
    pub fn one_step(&self, w: &[bool], g: usize) -> bool {
        let la = |l: usize, a: usize| w[self.next(g, l, a)];
        match self.order {
            StepOrder::ObserveThenAct => (0..self.labels).all(|l| (0..self.actions).any(|a| la(l, a))),
            StepOrder::ActThenObserve => (0..self.actions).any(|a| (0..self.labels).all(|l| la(l, a))),
        }
    }
}

/// Random game with up to `max_states` states, drawn from a seed. Roughly
/// one state in six is unsafe.
pub fn random_game(seed: u64, max_states: usize) -> RawGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_states);
    let labels = rng.gen_range(1..=3);
    let actions = rng.gen_range(1..=3);
    let order = if rng.gen_bool(0.5) { StepOrder::ObserveThenAct } else { StepOrder::ActThenObserve };
    let safe = (0..n).map(|_| rng.gen_range(0..6) != 0).collect();
    let delta = (0..n * labels * actions).map(|_| rng.gen_range(0..n)).collect();
    RawGame { labels, actions, order, safe, delta }
}

pub fn arb_game(max_states: usize) -> impl Strategy<Value = RawGame> {
    any::<u64>().prop_map(move |s| random_game(s, max_states))
}

/// Greatest fixed point by repeated full sweeps: drop every state that is
/// unsafe or cannot stay inside the current set, until nothing changes.
pub fn naive_winning(g: &RawGame) -> Vec<bool> {
    let mut w = g.safe.clone();
    loop {
        let next: Vec<bool> = (0..g.states()).map(|s| w[s] && g.one_step(&w, s)).collect();
        if next == w {
            return w;
        }
        w = next;
    }
}

/// Random total automaton with `n` states over the given alphabet sizes. The
/// initial state is always safe.
pub fn random_automaton(
    rng: &mut ChaCha8Rng,
    n: usize,
    labels: usize,
    actions: usize,
    role: Role,
    unsafe_one_in: u32,
) -> SafetyAutomaton {
    let mut safe: Vec<bool> = (0..n).map(|_| rng.gen_range(0..unsafe_one_in) != 0).collect();
    safe[0] = true;
    let delta = (0..n * labels * actions).map(|_| rng.gen_range(0..n)).collect();
    SafetyAutomaton::from_table(alphabet("l", labels), alphabet("a", actions), role, 0, safe, delta, None)
        .unwrap()
}

/// Runs a raw table on a trace; accepted iff every visited state is safe.
pub fn raw_accepts(
    safe: &[bool],
    delta: &[usize],
    labels: usize,
    actions: usize,
    trace: &[(usize, usize)],
) -> bool {
    let mut q = 0;
    if !safe[q] {
        return false;
    }
    for &(l, a) in trace {
        q = delta[(q * labels + l) * actions + a];
        if !safe[q] {
            return false;
        }
    }
    true
}

/// Least set of states from which the environment can force a visit to an
/// unsafe state.
pub fn environment_attractor(g: &RawGame) -> Vec<bool> {
    let mut attr: Vec<bool> = g.safe.iter().map(|s| !s).collect();
    loop {
        let next: Vec<bool> = (0..g.states())
            .map(|s| {
                let hit = |l: usize, a: usize| attr[g.next(s, l, a)];
                attr[s]
                    || match g.order {
                        StepOrder::ObserveThenAct => (0..g.labels).any(|l| (0..g.actions).all(|a| hit(l, a))),
                        StepOrder::ActThenObserve => (0..g.actions).all(|a| (0..g.labels).any(|l| hit(l, a))),
                    }
            })
            .collect();
        if next == attr {
            return attr;
        }
        attr = next;
    }
}
