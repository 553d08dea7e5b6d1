use std::collections::VecDeque;

use serde::Serialize;

use super::SafetyGame;
use crate::automata::{ActionId, LabelId, StepOrder};

/// Maximal set of game states from which the system can keep the play inside
/// the safe states forever.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WinningRegion {
    member: Vec<bool>,
    step_order: StepOrder,
    initial: usize,
}

/// Computes the winning region with a worklist over reverse edges.
///
/// Observe-then-act: a state stays winning while, for every label, some
/// action leads into the region; a per-(state, label) support count tracks
/// this. Act-then-observe: a state stays winning while some action leads into
/// the region under every label; a per-state count of still-good actions
/// tracks this. Each edge is touched a bounded number of times, so the solver
/// runs in time linear in the number of transitions.
pub fn solve(game: &SafetyGame) -> WinningRegion {
    let n = game.num_states();
    let (nl, na) = (game.labels.len(), game.actions.len());
    let width = nl * na;

    // reverse edges: for each target, the (source, label, action) index
    let mut pred_start = vec![0usize; n + 1];
    for &t in &game.delta {
        pred_start[t + 1] += 1;
    }
    for i in 0..n {
        pred_start[i + 1] += pred_start[i];
    }
    let mut fill = pred_start.clone();
    let mut preds = vec![0usize; game.delta.len()];
    for (e, &t) in game.delta.iter().enumerate() {
        preds[fill[t]] = e;
        fill[t] += 1;
    }

    let mut member = game.safe.clone();
    // only states dropped after the counts are initialized go on the queue;
    // unsafe states never contributed to any count
    let mut queue: VecDeque<usize> = VecDeque::new();

    match game.step_order {
        StepOrder::ObserveThenAct => {
            let mut support = vec![0u32; n * nl];
            for g in 0..n {
                for k in 0..width {
                    if member[game.delta[g * width + k]] {
                        support[g * nl + k / na] += 1;
                    }
                }
            }
            for g in 0..n {
                if member[g] && (0..nl).any(|l| support[g * nl + l] == 0) {
                    member[g] = false;
                    queue.push_back(g);
                }
            }
            while let Some(t) = queue.pop_front() {
                for &e in &preds[pred_start[t]..pred_start[t + 1]] {
                    let g = e / width;
                    let l = (e % width) / na;
                    let s = &mut support[g * nl + l];
                    *s -= 1;
                    if *s == 0 && member[g] {
                        member[g] = false;
                        queue.push_back(g);
                    }
                }
            }
        }
        StepOrder::ActThenObserve => {
            let mut bad = vec![false; n * na];
            let mut good = vec![na as u32; n];
            for g in 0..n {
                for k in 0..width {
                    let a = k % na;
                    if !member[game.delta[g * width + k]] && !bad[g * na + a] {
                        bad[g * na + a] = true;
                        good[g] -= 1;
                    }
                }
            }
            for g in 0..n {
                if member[g] && good[g] == 0 {
                    member[g] = false;
                    queue.push_back(g);
                }
            }
            while let Some(t) = queue.pop_front() {
                for &e in &preds[pred_start[t]..pred_start[t + 1]] {
                    let g = e / width;
                    let a = e % na;
                    if !bad[g * na + a] {
                        bad[g * na + a] = true;
                        good[g] -= 1;
                        if good[g] == 0 && member[g] {
                            member[g] = false;
                            queue.push_back(g);
                        }
                    }
                }
            }
        }
    }
    WinningRegion { member, step_order: game.step_order, initial: game.initial }
}

impl WinningRegion {
    /// Wraps an explicit membership vector, e.g. one computed elsewhere.
    pub fn from_members(game: &SafetyGame, member: Vec<bool>) -> Self {
        assert_eq!(member.len(), game.num_states());
        Self { member, step_order: game.step_order, initial: game.initial }
    }

    pub fn contains(&self, g: usize) -> bool {
        self.member[g]
    }

    pub fn len(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn members(&self) -> &[bool] {
        &self.member
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.member.iter().enumerate().filter(|(_, &m)| m).map(|(g, _)| g)
    }

    /// Whether the initial state is winning, i.e. a shield exists.
    pub fn realizable(&self) -> bool {
        self.member[self.initial]
    }

    /// Actions that keep the play in the region when the environment has
    /// already shown `l` (observe-then-act games).
    pub fn actions_after_label(&self, game: &SafetyGame, g: usize, l: LabelId) -> Vec<ActionId> {
        game.actions.actions().filter(|&a| self.member[game.next(g, l, a)]).collect()
    }

    /// Actions that keep the play in the region whatever label follows
    /// (act-then-observe games).
    pub fn committed_actions(&self, game: &SafetyGame, g: usize) -> Vec<ActionId> {
        game.actions
            .actions()
            .filter(|&a| game.labels.labels().all(|l| self.member[game.next(g, l, a)]))
            .collect()
    }

    fn holds_at(&self, game: &SafetyGame, g: usize) -> bool {
        if !game.is_safe(g) {
            return false;
        }
        match self.step_order {
            StepOrder::ObserveThenAct => {
                game.labels.labels().all(|l| !self.actions_after_label(game, g, l).is_empty())
            }
            StepOrder::ActThenObserve => !self.committed_actions(game, g).is_empty(),
        }
    }

    /// Region states that are unsafe or cannot be held inside the region.
    /// Empty for any correct winning region.
    pub fn closure_violations(&self, game: &SafetyGame) -> Vec<usize> {
        self.states().filter(|&g| !self.holds_at(game, g)).collect()
    }

    /// States outside the region that could be added without breaking
    /// closure. Empty for the maximal region.
    pub fn maximality_violations(&self, game: &SafetyGame) -> Vec<usize> {
        (0..game.num_states()).filter(|&g| !self.member[g] && self.holds_at(game, g)).collect()
    }
}

/// How many rounds each losing state survives the layered fixed-point
/// iteration. Unsafe states have rank 0, winning states `None`.
pub fn losing_ranks(game: &SafetyGame) -> Vec<Option<u32>> {
    let n = game.num_states();
    let mut rank: Vec<Option<u32>> = (0..n).map(|g| if game.is_safe(g) { None } else { Some(0) }).collect();
    let mut round = 0;
    loop {
        round += 1;
        let current = WinningRegion {
            member: rank.iter().map(Option::is_none).collect(),
            step_order: game.step_order,
            initial: game.initial,
        };
        let dropped: Vec<usize> = current.states().filter(|&g| !current.holds_at(game, g)).collect();
        if dropped.is_empty() {
            return rank;
        }
        for g in dropped {
            rank[g] = Some(round);
        }
    }
}

/// One step of a play: game state, the label shown and the action taken.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PlayStep {
    pub state: usize,
    pub label: LabelId,
    pub action: ActionId,
}

/// A play from the initial state into the error state in which the
/// environment plays a winning strategy and the system delays defeat as long
/// as possible. `None` if the initial state is winning.
pub fn losing_play(game: &SafetyGame) -> Option<Vec<PlayStep>> {
    let rank = losing_ranks(game);
    let r = |g: usize| rank[g].unwrap_or(u32::MAX);
    let mut g = game.initial;
    rank[g]?;
    let mut play = Vec::new();
    while r(g) > 0 {
        let bound = r(g);
        let (label, action) = match game.step_order {
            StepOrder::ObserveThenAct => {
                // a label under which every action drops below the current rank
                let l = game
                    .labels
                    .labels()
                    .find(|&l| game.actions.actions().all(|a| r(game.next(g, l, a)) < bound))
                    .expect("ranked state has a forcing label");
                let a = game
                    .actions
                    .actions()
                    .max_by_key(|&a| (r(game.next(g, l, a)), std::cmp::Reverse(a)))
                    .expect("non-empty action alphabet");
                (l, a)
            }
            StepOrder::ActThenObserve => {
                // system picks the action whose best punishing label is least bad
                let punish = |a: ActionId| {
                    game.labels
                        .labels()
                        .min_by_key(|&l| (r(game.next(g, l, a)), l))
                        .expect("non-empty label alphabet")
                };
                let a = game
                    .actions
                    .actions()
                    .max_by_key(|&a| (r(game.next(g, punish(a), a)), std::cmp::Reverse(a)))
                    .expect("non-empty action alphabet");
                (punish(a), a)
            }
        };
        play.push(PlayStep { state: g, label, action });
        g = game.next(g, label, action);
    }
    Some(play)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::Alphabet;

    fn ab(n: usize, p: &str) -> Alphabet {
        Alphabet::new((0..n).map(|i| format!("{p}{i}"))).unwrap()
    }

    /// Chain 0 -> 1 -> 2 (unsafe). In state 0, action 0 stays, action 1 moves on.
    /// In state 1 every move goes to 2 under label 1, and stays under label 0.
    fn chain(order: StepOrder) -> SafetyGame {
        // labels 2, actions 2
        let delta = vec![
            0, 1, 0, 1, // state 0: (l0,a0)(l0,a1)(l1,a0)(l1,a1)
            1, 1, 2, 2, // state 1
            2, 2, 2, 2, // state 2
        ];
        SafetyGame::from_graph(ab(2, "l"), ab(2, "a"), order, 0, vec![true, true, false], delta).unwrap()
    }

    #[test]
    fn chain_region_both_orders() {
        for order in [StepOrder::ObserveThenAct, StepOrder::ActThenObserve] {
            let g = chain(order);
            let w = solve(&g);
            assert_eq!(w.members(), &[true, false, false]);
            assert!(w.realizable());
            assert!(w.closure_violations(&g).is_empty());
            assert!(w.maximality_violations(&g).is_empty());
            assert_eq!(w.committed_actions(&g, 0), vec![ActionId(0)]);
        }
    }

    #[test]
    fn order_matters() {
        // state 0: label l0 needs a0, label l1 needs a1 to stay safe
        let delta = vec![0, 1, 1, 0, 1, 1, 1, 1];
        let env_first = SafetyGame::from_graph(
            ab(2, "l"),
            ab(2, "a"),
            StepOrder::ObserveThenAct,
            0,
            vec![true, false],
            delta.clone(),
        )
        .unwrap();
        assert!(solve(&env_first).realizable());
        let sys_first = SafetyGame::from_graph(
            ab(2, "l"),
            ab(2, "a"),
            StepOrder::ActThenObserve,
            0,
            vec![true, false],
            delta,
        )
        .unwrap();
        let w = solve(&sys_first);
        assert!(!w.realizable());
        let play = losing_play(&sys_first).unwrap();
        assert_eq!(play.len(), 1);
        assert_eq!(sys_first.next(0, play[0].label, play[0].action), 1);
    }

    #[test]
    fn ranks_follow_distance_to_error() {
        let g = chain(StepOrder::ObserveThenAct);
        let w = solve(&g);
        let ranks = losing_ranks(&g);
        assert_eq!(ranks, vec![None, Some(1), Some(0)]);
        assert!(w.realizable());
        assert!(losing_play(&g).is_none());
    }
}
