//! Reusable safety patterns. Each builder enumerates only reachable states.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use super::{ActionId, Alphabet, AutomatonError, LabelId, Role, SafetyAutomaton};

/// Explores a pattern given by a step function. `None` from `step` means the
/// fail state.
fn explore<S, F, N>(
    labels: &Alphabet,
    actions: &Alphabet,
    init: S,
    step: F,
    name: N,
) -> Result<SafetyAutomaton, AutomatonError>
where
    S: Clone + Eq + Hash,
    F: Fn(&S, LabelId, ActionId) -> Option<S>,
    N: Fn(&S) -> String,
{
    check_alphabets(labels, actions)?;
    let mut ids: HashMap<S, usize> = HashMap::new();
    let mut states = vec![init.clone()];
    ids.insert(init, 0);
    let mut queue = VecDeque::from([0usize]);
    // successor per (state, label, action); usize::MAX marks fail
    let mut rows: Vec<Vec<usize>> = Vec::new();
    while let Some(i) = queue.pop_front() {
        let s = states[i].clone();
        let mut row = Vec::with_capacity(labels.len() * actions.len());
        for l in labels.labels() {
            for a in actions.actions() {
                match step(&s, l, a) {
                    None => row.push(usize::MAX),
                    Some(t) => {
                        let id = *ids.entry(t.clone()).or_insert_with(|| {
                            states.push(t);
                            queue.push_back(states.len() - 1);
                            states.len() - 1
                        });
                        row.push(id);
                    }
                }
            }
        }
        if rows.len() <= i {
            rows.resize(i + 1, Vec::new());
        }
        rows[i] = row;
    }
    let n = states.len();
    let fail = n;
    let width = labels.len() * actions.len();
    let mut delta = Vec::with_capacity((n + 1) * width);
    for row in &rows {
        delta.extend(row.iter().map(|&t| if t == usize::MAX { fail } else { t }));
    }
    delta.extend(std::iter::repeat_n(fail, width));
    let mut safe = vec![true; n];
    safe.push(false);
    let mut names: Vec<String> = states.iter().map(&name).collect();
    names.push("fail".into());
    SafetyAutomaton::from_table(
        labels.clone(),
        actions.clone(),
        Role::Specification,
        0,
        safe,
        delta,
        Some(names),
    )
}

fn check_alphabets(labels: &Alphabet, actions: &Alphabet) -> Result<(), AutomatonError> {
    if labels.is_empty() {
        return Err(AutomatonError::EmptyAlphabet("label"));
    }
    if actions.is_empty() {
        return Err(AutomatonError::EmptyAlphabet("action"));
    }
    Ok(())
}

fn label_set(labels: &Alphabet, set: &[LabelId]) -> Result<Vec<bool>, AutomatonError> {
    let mut member = vec![false; labels.len()];
    for &l in set {
        if l.index() >= labels.len() {
            return Err(AutomatonError::InvalidParameter(format!(
                "label {l} not in alphabet of size {}",
                labels.len()
            )));
        }
        member[l.index()] = true;
    }
    Ok(member)
}

/// `G ¬bad`: fails as soon as a label from `bad` is read.
pub fn build_invariance(
    labels: &Alphabet,
    actions: &Alphabet,
    bad: &[LabelId],
) -> Result<SafetyAutomaton, AutomatonError> {
    check_alphabets(labels, actions)?;
    let bad = label_set(labels, bad)?;
    explore(labels, actions, (), |_, l, _| if bad[l.index()] { None } else { Some(()) }, |_| "ok".into())
}

/// Minimum dwell time for a two-mode actuator.
///
/// Actions split into `watched` and everything else. The run starts in the
/// not-watched mode with no obligation. Whenever the executed action switches
/// mode, the new mode must be kept for `hold` consecutive steps, counting the
/// switching step itself.
pub fn build_min_hold(
    labels: &Alphabet,
    actions: &Alphabet,
    watched: ActionId,
    hold: u32,
) -> Result<SafetyAutomaton, AutomatonError> {
    check_alphabets(labels, actions)?;
    if hold == 0 {
        return Err(AutomatonError::InvalidParameter("hold must be at least 1".into()));
    }
    if watched.index() >= actions.len() {
        return Err(AutomatonError::InvalidParameter(format!("watched action {watched} not in alphabet")));
    }
    let watched_name = actions.name(watched.index()).to_string();
    // (in watched mode, remaining mandatory steps)
    explore(
        labels,
        actions,
        (false, 0u32),
        |&(mode, remaining), _, a| {
            let next_mode = a == watched;
            if next_mode == mode {
                Some((mode, remaining.saturating_sub(1)))
            } else if remaining > 0 {
                None
            } else {
                Some((next_mode, hold - 1))
            }
        },
        |&(mode, remaining)| {
            let m = if mode { watched_name.clone() } else { format!("not-{watched_name}") };
            if remaining == 0 {
                m
            } else {
                format!("{m}+{remaining}")
            }
        },
    )
}

/// Fails when labels from `sticky` are observed more than `max_consecutive`
/// times in a row. Any other label resets the counter.
///
/// With `max_consecutive = 0` a single sticky observation violates the
/// pattern; that is a legal (if harsh) specification, not an error.
pub fn build_bounded_stay(
    labels: &Alphabet,
    actions: &Alphabet,
    sticky: &[LabelId],
    max_consecutive: u32,
) -> Result<SafetyAutomaton, AutomatonError> {
    check_alphabets(labels, actions)?;
    let sticky = label_set(labels, sticky)?;
    explore(
        labels,
        actions,
        0u32,
        |&run, l, _| {
            if !sticky[l.index()] {
                Some(0)
            } else if run + 1 > max_consecutive {
                None
            } else {
                Some(run + 1)
            }
        },
        |run| format!("s{run}"),
    )
}

/// Which actions are blocked under which labels: `blocked[label][action]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObstacleFlags {
    blocked: Vec<Vec<bool>>,
}

impl ObstacleFlags {
    pub fn new(blocked: Vec<Vec<bool>>) -> Self {
        Self { blocked }
    }

    pub fn from_fn(labels: &Alphabet, actions: &Alphabet, f: impl Fn(LabelId, ActionId) -> bool) -> Self {
        Self { blocked: labels.labels().map(|l| actions.actions().map(|a| f(l, a)).collect()).collect() }
    }

    pub fn is_blocked(&self, l: LabelId, a: ActionId) -> bool {
        self.blocked[l.index()][a.index()]
    }
}

/// Fails exactly when the chosen move is flagged as blocked by the current
/// label.
pub fn build_collision(
    labels: &Alphabet,
    actions: &Alphabet,
    flags: &ObstacleFlags,
) -> Result<SafetyAutomaton, AutomatonError> {
    check_alphabets(labels, actions)?;
    if flags.blocked.len() != labels.len() {
        return Err(AutomatonError::InvalidParameter(format!(
            "obstacle flags cover {} labels, alphabet has {}",
            flags.blocked.len(),
            labels.len()
        )));
    }
    if let Some(l) = flags.blocked.iter().position(|row| row.len() != actions.len()) {
        return Err(AutomatonError::InvalidParameter(format!("label {l} is missing a direction flag")));
    }
    explore(
        labels,
        actions,
        (),
        |_, l, a| if flags.is_blocked(l, a) { None } else { Some(()) },
        |_| "ok".into(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tank_like() -> (Alphabet, Alphabet) {
        (Alphabet::new(["low", "mid", "high"]).unwrap(), Alphabet::new(["open", "close"]).unwrap())
    }

    const OPEN: ActionId = ActionId(0);
    const CLOSE: ActionId = ActionId(1);
    const MID: LabelId = LabelId(1);

    fn acts(seq: &[ActionId]) -> Vec<(LabelId, ActionId)> {
        seq.iter().map(|&a| (MID, a)).collect()
    }

    #[test]
    fn invariance_examples() {
        let (l, a) = tank_like();
        let inv = build_invariance(&l, &a, &[LabelId(0), LabelId(2)]).unwrap();
        assert_eq!(inv.num_states(), 2);
        assert!(inv.accepts(&[(MID, OPEN), (MID, CLOSE)]));
        assert!(!inv.accepts(&[(MID, OPEN), (LabelId(2), CLOSE), (MID, OPEN)]));

        let all = build_invariance(&l, &a, &[]).unwrap();
        assert_eq!(all.num_states(), 1);
        assert!(all.fail_state().is_none());

        let none = build_invariance(&l, &a, &[LabelId(0), LabelId(1), LabelId(2)]).unwrap();
        for lab in l.labels() {
            for act in a.actions() {
                assert!(!none.accepts(&[(lab, act)]));
            }
        }
        assert!(none.accepts(&[]));
    }

    #[test]
    fn empty_alphabets_rejected() {
        let (l, _) = tank_like();
        let empty = Alphabet::new(Vec::<String>::new()).unwrap();
        assert_eq!(build_invariance(&l, &empty, &[]), Err(AutomatonError::EmptyAlphabet("action")));
        assert_eq!(build_invariance(&empty, &l, &[]), Err(AutomatonError::EmptyAlphabet("label")));
    }

    #[test]
    fn min_hold_three_matches_valve_pattern() {
        let (l, a) = tank_like();
        let h = build_min_hold(&l, &a, OPEN, 3).unwrap();
        // six mode/counter states plus fail
        assert_eq!(h.num_states(), 7);
        // open then close: the open mode was held only one step
        assert!(!h.accepts(&acts(&[OPEN, CLOSE])));
        assert!(h.accepts(&acts(&[OPEN, OPEN, OPEN, CLOSE, CLOSE, CLOSE, OPEN])));
        assert!(!h.accepts(&acts(&[OPEN, OPEN, OPEN, CLOSE, CLOSE, OPEN])));
        // closing from the initial closed mode is no switch
        assert!(h.accepts(&acts(&[CLOSE, CLOSE, OPEN, OPEN, OPEN])));
    }

    #[test]
    fn min_hold_of_one_never_fails() {
        let (l, a) = tank_like();
        let h = build_min_hold(&l, &a, OPEN, 1).unwrap();
        assert!(h.fail_state().is_none());
        assert_eq!(h.num_states(), 2);
    }

    #[test]
    fn min_hold_rejects_zero() {
        let (l, a) = tank_like();
        assert!(matches!(build_min_hold(&l, &a, OPEN, 0), Err(AutomatonError::InvalidParameter(_))));
    }

    #[test]
    fn bounded_stay_examples() {
        let l = Alphabet::new(["b", "nb"]).unwrap();
        let a = Alphabet::new(["go"]).unwrap();
        let (b, nb, go) = (LabelId(0), LabelId(1), ActionId(0));
        let s = build_bounded_stay(&l, &a, &[b], 2).unwrap();
        assert_eq!(s.num_states(), 4);
        assert!(s.accepts(&[(b, go), (b, go)]));
        assert!(!s.accepts(&[(b, go), (b, go), (b, go)]));
        let alternating: Vec<_> = (0..20).map(|i| (if i % 2 == 0 { b } else { nb }, go)).collect();
        assert!(s.accepts(&alternating));
    }

    #[test]
    fn bounded_stay_zero_violates_on_first_sticky() {
        let l = Alphabet::new(["b", "nb"]).unwrap();
        let a = Alphabet::new(["go"]).unwrap();
        let s = build_bounded_stay(&l, &a, &[LabelId(0)], 0).unwrap();
        assert!(s.accepts(&[(LabelId(1), ActionId(0))]));
        assert!(!s.accepts(&[(LabelId(0), ActionId(0))]));
    }

    #[test]
    fn collision_fails_on_flagged_move() {
        // labels: bit 0 = north blocked; actions: north, south
        let l = Alphabet::new(["free", "wall-n"]).unwrap();
        let a = Alphabet::new(["n", "s"]).unwrap();
        let flags = ObstacleFlags::from_fn(&l, &a, |l, a| l.0 == 1 && a.0 == 0);
        let c = build_collision(&l, &a, &flags).unwrap();
        assert_eq!(c.num_states(), 2);
        assert!(!c.accepts(&[(LabelId(1), ActionId(0))]));
        assert!(c.accepts(&[(LabelId(1), ActionId(1))]));
        for act in a.actions() {
            assert!(c.accepts(&[(LabelId(0), act)]));
        }
    }

    #[test]
    fn collision_missing_flag_is_an_error() {
        let l = Alphabet::new(["free", "wall-n"]).unwrap();
        let a = Alphabet::new(["n", "s"]).unwrap();
        let flags = ObstacleFlags::new(vec![vec![false, false], vec![true]]);
        assert!(matches!(build_collision(&l, &a, &flags), Err(AutomatonError::InvalidParameter(_))));
    }
}
