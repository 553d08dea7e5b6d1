//! Checks a shield against its specification and abstraction without
//! consulting the game it was extracted from.
//!
//! Correctness is checked by exploring the joint runs of shield,
//! specification and abstraction. Minimal interference is checked against an
//! independent losing-position oracle computed by naive backward induction
//! over (specification, abstraction) state pairs.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Shield, ShieldError, ShieldState};
use crate::automata::{ActionId, LabelId, SafetyAutomaton, StateId, StepOrder};

/// Keep at most this many counterexamples in a report.
const MAX_COUNTEREXAMPLES: usize = 100;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum VerifyMode {
    /// Explore every reachable joint state, up to `max_states`.
    Exhaustive { max_states: usize },
    /// Random conforming walks.
    Randomized { walks: usize, steps: usize, seed: u64 },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// The specification failed while the abstraction still held.
    SpecViolated,
    /// The shield offered no action.
    EmptyMenu,
    /// The shield allowed an action after which the environment can force a
    /// violation.
    LosingActionAllowed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub state: ShieldState,
    pub state_name: String,
    pub label: String,
    pub action: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub kind: ViolationKind,
    /// Shield state, observed label and chosen action at every step.
    pub trace: Vec<TraceStep>,
    /// For act-then-observe shields: the label that completed the last
    /// character and exposed the violation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_label: Option<String>,
}

/// An action the shield blocks although the environment cannot force a
/// violation after it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OverRestriction {
    pub state: ShieldState,
    pub state_name: String,
    pub label: String,
    pub action: String,
    pub spec_state: String,
    pub abs_state: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub mode: VerifyMode,
    /// Joint states visited.
    pub explored: usize,
    /// Distinct (shield state, label, spec state, abs state) decision points.
    pub contexts: usize,
    /// True when exhaustive exploration stopped at its bound.
    pub partial: bool,
    pub violation_count: usize,
    pub violations: Vec<Counterexample>,
    pub over_restrictions: Vec<OverRestriction>,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.violation_count == 0 && self.over_restrictions.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A point where the shield picks actions: its state, the current label and
/// the specification and abstraction states in which the next character is
/// read.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct JointContext {
    pub shield_state: ShieldState,
    pub label: LabelId,
    pub spec_state: StateId,
    pub abs_state: StateId,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
struct Node {
    s: ShieldState,
    q: StateId,
    m: StateId,
    pending: Option<ActionId>,
}

fn check_alphabets(
    shield: &Shield,
    spec: &SafetyAutomaton,
    abs: &SafetyAutomaton,
) -> Result<(), ShieldError> {
    for (what, m) in [("specification", spec), ("abstraction", abs)] {
        if m.labels() != shield.labels() || m.actions() != shield.actions() {
            return Err(ShieldError::Mismatch(format!("{what} alphabet differs from the shield's")));
        }
        if m.step_order() != shield.step_order() {
            return Err(ShieldError::Mismatch(format!("{what} step order differs from the shield's")));
        }
    }
    Ok(())
}

/// Losing positions for the system over (spec, abs) pairs, computed by
/// repeated sweeps until nothing changes.
///
/// Observe-then-act positions precede the label: the pair loses if some label
/// makes every action bad. Act-then-observe positions precede the action:
/// the pair loses if every action has some bad label. A move is bad if it
/// fails the specification while the abstraction holds, or lands on a losing
/// pair.
struct LoseOracle<'a> {
    spec: &'a SafetyAutomaton,
    abs: &'a SafetyAutomaton,
    lose: Vec<bool>,
}

impl<'a> LoseOracle<'a> {
    fn new(spec: &'a SafetyAutomaton, abs: &'a SafetyAutomaton) -> Self {
        let nm = abs.num_states();
        let mut oracle = Self { spec, abs, lose: vec![false; spec.num_states() * nm] };
        let order = spec.step_order();
        loop {
            let mut changed = false;
            for q in 0..spec.num_states() {
                for m in 0..nm {
                    if !spec.is_safe(q) || !abs.is_safe(m) || oracle.lose[q * nm + m] {
                        continue;
                    }
                    let loses = match order {
                        StepOrder::ObserveThenAct => spec
                            .labels()
                            .labels()
                            .any(|l| spec.actions().actions().all(|a| oracle.bad(q, m, l, a))),
                        StepOrder::ActThenObserve => spec
                            .actions()
                            .actions()
                            .all(|a| spec.labels().labels().any(|l| oracle.bad(q, m, l, a))),
                    };
                    if loses {
                        oracle.lose[q * nm + m] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                return oracle;
            }
        }
    }

    fn bad(&self, q: StateId, m: StateId, l: LabelId, a: ActionId) -> bool {
        let (q2, m2) = (self.spec.next(q, l, a), self.abs.next(m, l, a));
        if !self.abs.is_safe(m2) {
            return false;
        }
        !self.spec.is_safe(q2) || self.lose[q2 * self.abs.num_states() + m2]
    }

    /// Whether excluding `a` at this decision point is justified.
    fn must_block(&self, ctx: &JointContext, a: ActionId) -> bool {
        let (q, m) = (ctx.spec_state, ctx.abs_state);
        match self.spec.step_order() {
            StepOrder::ObserveThenAct => self.bad(q, m, ctx.label, a),
            StepOrder::ActThenObserve => self.spec.labels().labels().any(|l| self.bad(q, m, l, a)),
        }
    }
}

/// Outcome of feeding a label to a joint node.
enum Reveal {
    /// The abstraction rules this label out here.
    NonConforming,
    /// The pending character violated the specification.
    Violation,
    Ready(StateId, StateId),
}

fn reveal(spec: &SafetyAutomaton, abs: &SafetyAutomaton, n: &Node, l: LabelId) -> Reveal {
    let (q, m) = match n.pending {
        Some(p) => (spec.next(n.q, l, p), abs.next(n.m, l, p)),
        None => (n.q, n.m),
    };
    if !abs.is_safe(m) {
        Reveal::NonConforming
    } else if !spec.is_safe(q) {
        Reveal::Violation
    } else {
        Reveal::Ready(q, m)
    }
}

/// Result of stepping a decision point with an allowed action.
enum Move {
    NonConforming,
    Violation,
    To(Node),
}

fn play(
    shield: &Shield,
    spec: &SafetyAutomaton,
    abs: &SafetyAutomaton,
    ctx: &JointContext,
    a: ActionId,
) -> Move {
    let s2 = shield.advance(ctx.shield_state, ctx.label, a).expect("caller passes menu actions");
    match shield.step_order() {
        StepOrder::ObserveThenAct => {
            let (q2, m2) = (spec.next(ctx.spec_state, ctx.label, a), abs.next(ctx.abs_state, ctx.label, a));
            if !abs.is_safe(m2) {
                Move::NonConforming
            } else if !spec.is_safe(q2) {
                Move::Violation
            } else {
                Move::To(Node { s: s2, q: q2, m: m2, pending: None })
            }
        }
        StepOrder::ActThenObserve => {
            Move::To(Node { s: s2, q: ctx.spec_state, m: ctx.abs_state, pending: Some(a) })
        }
    }
}

struct Collector<'a> {
    shield: &'a Shield,
    spec: &'a SafetyAutomaton,
    abs: &'a SafetyAutomaton,
    oracle: LoseOracle<'a>,
    violation_count: usize,
    violations: Vec<Counterexample>,
    over: Vec<OverRestriction>,
    checked: HashSet<JointContext>,
}

fn trace_step(shield: &Shield, s: ShieldState, l: LabelId, a: ActionId) -> TraceStep {
    TraceStep {
        state: s,
        state_name: shield.state_name(s).to_string(),
        label: shield.labels().name(l.index()).to_string(),
        action: shield.actions().name(a.index()).to_string(),
    }
}

impl<'a> Collector<'a> {
    fn step(&self, s: ShieldState, l: LabelId, a: ActionId) -> TraceStep {
        trace_step(self.shield, s, l, a)
    }

    fn violation(&mut self, kind: ViolationKind, trace: Vec<TraceStep>, final_label: Option<LabelId>) {
        self.violation_count += 1;
        if self.violations.len() < MAX_COUNTEREXAMPLES {
            let final_label = final_label.map(|l| self.shield.labels().name(l.index()).to_string());
            self.violations.push(Counterexample { kind, trace, final_label });
        }
    }

    /// Checks menu emptiness, losing allowances and over-restrictions at a
    /// decision point, once per distinct context.
    fn check_context(&mut self, ctx: JointContext, trace: impl FnOnce() -> Vec<TraceStep>) {
        if !self.checked.insert(ctx) {
            return;
        }
        let menu = self.shield.menu(ctx.shield_state, ctx.label);
        if menu.is_empty() {
            self.violation(ViolationKind::EmptyMenu, trace(), None);
            return;
        }
        let mut trace = Some(trace);
        for a in self.shield.actions().actions() {
            let blocked = self.oracle.must_block(&ctx, a);
            if menu.contains(&a) {
                if blocked {
                    let mut t = trace.take().map(|f| f()).unwrap_or_default();
                    t.push(self.step(ctx.shield_state, ctx.label, a));
                    self.violation(ViolationKind::LosingActionAllowed, t, None);
                }
            } else if !blocked {
                self.over.push(OverRestriction {
                    state: ctx.shield_state,
                    state_name: self.shield.state_name(ctx.shield_state).to_string(),
                    label: self.shield.labels().name(ctx.label.index()).to_string(),
                    action: self.shield.actions().name(a.index()).to_string(),
                    spec_state: self.spec.state_name(ctx.spec_state).to_string(),
                    abs_state: self.abs.state_name(ctx.abs_state).to_string(),
                });
            }
        }
    }
}

fn root(shield: &Shield, spec: &SafetyAutomaton, abs: &SafetyAutomaton) -> Node {
    Node { s: shield.initial(), q: spec.initial(), m: abs.initial(), pending: None }
}

/// Verifies correctness and minimal interference of `shield`.
pub fn verify_shield(
    shield: &Shield,
    spec: &SafetyAutomaton,
    abs: &SafetyAutomaton,
    mode: VerifyMode,
) -> Result<VerificationReport, ShieldError> {
    check_alphabets(shield, spec, abs)?;
    let mut c = Collector {
        shield,
        spec,
        abs,
        oracle: LoseOracle::new(spec, abs),
        violation_count: 0,
        violations: Vec::new(),
        over: Vec::new(),
        checked: HashSet::new(),
    };
    let (explored, partial) = match mode {
        VerifyMode::Exhaustive { max_states } => exhaustive(&mut c, max_states),
        VerifyMode::Randomized { walks, steps, seed } => randomized(&mut c, walks, steps, seed),
    };
    let report = VerificationReport {
        mode,
        explored,
        contexts: c.checked.len(),
        partial,
        violation_count: c.violation_count,
        violations: c.violations,
        over_restrictions: c.over,
    };
    log::info!(
        "verified shield: {} joint states, {} contexts, {} violations, {} over-restrictions{}",
        report.explored,
        report.contexts,
        report.violation_count,
        report.over_restrictions.len(),
        if report.partial { " (partial)" } else { "" }
    );
    Ok(report)
}

fn exhaustive(c: &mut Collector<'_>, max_states: usize) -> (usize, bool) {
    let (shield, spec, abs) = (c.shield, c.spec, c.abs);
    // node -> (parent index, label, action)
    let mut nodes: Vec<(Node, Option<(usize, LabelId, ActionId)>)> = vec![(root(shield, spec, abs), None)];
    let mut seen: HashMap<Node, usize> = HashMap::from([(nodes[0].0, 0)]);
    let mut queue = VecDeque::from([0usize]);
    let mut partial = false;
    let trace_to = |nodes: &[(Node, Option<(usize, LabelId, ActionId)>)], mut i: usize| {
        let mut steps = Vec::new();
        while let Some((p, l, a)) = nodes[i].1 {
            steps.push(trace_step(shield, nodes[p].0.s, l, a));
            i = p;
        }
        steps.reverse();
        steps
    };
    while let Some(i) = queue.pop_front() {
        let n = nodes[i].0;
        for l in shield.labels().labels() {
            let (q, m) = match reveal(spec, abs, &n, l) {
                Reveal::NonConforming => continue,
                Reveal::Violation => {
                    let t = trace_to(&nodes, i);
                    c.violation(ViolationKind::SpecViolated, t, Some(l));
                    continue;
                }
                Reveal::Ready(q, m) => (q, m),
            };
            let ctx = JointContext { shield_state: n.s, label: l, spec_state: q, abs_state: m };
            c.check_context(ctx, || trace_to(&nodes, i));
            for a in shield.menu(n.s, l) {
                match play(shield, spec, abs, &ctx, a) {
                    Move::NonConforming => {}
                    Move::Violation => {
                        let mut t = trace_to(&nodes, i);
                        t.push(c.step(n.s, l, a));
                        c.violation(ViolationKind::SpecViolated, t, None);
                    }
                    Move::To(next) => {
                        if seen.contains_key(&next) {
                            continue;
                        }
                        if nodes.len() >= max_states {
                            partial = true;
                            continue;
                        }
                        seen.insert(next, nodes.len());
                        nodes.push((next, Some((i, l, a))));
                        queue.push_back(nodes.len() - 1);
                    }
                }
            }
        }
    }
    (nodes.len(), partial)
}

fn randomized(c: &mut Collector<'_>, walks: usize, steps: usize, seed: u64) -> (usize, bool) {
    let (shield, spec, abs) = (c.shield, c.spec, c.abs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visited = 0usize;
    let labels: Vec<LabelId> = shield.labels().labels().collect();
    for _ in 0..walks {
        let mut n = root(shield, spec, abs);
        let mut trace: Vec<TraceStep> = Vec::new();
        for _ in 0..steps {
            visited += 1;
            // labels under which the walk can continue in a conforming way
            let mut options: Vec<(JointContext, Vec<ActionId>)> = Vec::new();
            for &l in &labels {
                match reveal(spec, abs, &n, l) {
                    Reveal::NonConforming => {}
                    Reveal::Violation => {
                        c.violation(ViolationKind::SpecViolated, trace.clone(), Some(l));
                    }
                    Reveal::Ready(q, m) => {
                        let ctx = JointContext { shield_state: n.s, label: l, spec_state: q, abs_state: m };
                        let menu = shield.menu(n.s, l);
                        let ok: Vec<ActionId> = menu
                            .into_iter()
                            .filter(|&a| !matches!(play(shield, spec, abs, &ctx, a), Move::NonConforming))
                            .collect();
                        options.push((ctx, ok));
                    }
                }
            }
            let Some((ctx, actions)) = options.choose(&mut rng).cloned() else {
                break;
            };
            let t = trace.clone();
            c.check_context(ctx, move || t);
            let Some(&a) = actions.choose(&mut rng) else {
                break;
            };
            trace.push(c.step(n.s, ctx.label, a));
            match play(shield, spec, abs, &ctx, a) {
                Move::To(next) => n = next,
                Move::Violation => {
                    c.violation(ViolationKind::SpecViolated, trace.clone(), None);
                    break;
                }
                Move::NonConforming => unreachable!("filtered above"),
            }
        }
    }
    (visited, false)
}

/// Every decision point reachable under the shield, with the specification
/// and abstraction states at that point. Also reports whether the bound cut
/// the exploration short.
pub fn joint_contexts(
    shield: &Shield,
    spec: &SafetyAutomaton,
    abs: &SafetyAutomaton,
    max_states: usize,
) -> Result<(Vec<JointContext>, bool), ShieldError> {
    check_alphabets(shield, spec, abs)?;
    let mut seen: HashSet<Node> = HashSet::from([root(shield, spec, abs)]);
    let mut queue = VecDeque::from([root(shield, spec, abs)]);
    let mut out: HashSet<JointContext> = HashSet::new();
    let mut partial = false;
    while let Some(n) = queue.pop_front() {
        for l in shield.labels().labels() {
            let Reveal::Ready(q, m) = reveal(spec, abs, &n, l) else {
                continue;
            };
            let ctx = JointContext { shield_state: n.s, label: l, spec_state: q, abs_state: m };
            out.insert(ctx);
            for a in shield.menu(n.s, l) {
                if let Move::To(next) = play(shield, spec, abs, &ctx, a) {
                    if seen.len() >= max_states && !seen.contains(&next) {
                        partial = true;
                    } else if seen.insert(next) {
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    let mut out: Vec<JointContext> = out.into_iter().collect();
    out.sort_by_key(|c| (c.shield_state, c.label, c.spec_state, c.abs_state));
    Ok((out, partial))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{build_collision, build_invariance, Alphabet, ObstacleFlags, Role};
    use crate::game::{build_safety_game, solve};
    use crate::shield::{extract_preemptive, NONE};

    /// Cell 0..=3 on a line, label = cell, actions stay/right; moving right
    /// from cell 3 crashes. Also bans right from cell 2 in the specification
    /// via a collision flag.
    fn line() -> (SafetyAutomaton, SafetyAutomaton) {
        let l = Alphabet::new(["c0", "c1", "c2", "c3"]).unwrap();
        let a = Alphabet::new(["stay", "right"]).unwrap();
        let spec =
            build_collision(&l, &a, &ObstacleFlags::from_fn(&l, &a, |l, a| l.0 == 3 && a.0 == 1)).unwrap();
        let f = 4;
        let mut delta = Vec::new();
        for cell in 0..4usize {
            for lab in 0..4usize {
                for act in 0..2usize {
                    delta.push(if lab != cell { f } else { (cell + act).min(3) });
                }
            }
        }
        delta.extend([f; 8]);
        let abs = SafetyAutomaton::from_table(
            l,
            a,
            Role::Abstraction,
            0,
            vec![true, true, true, true, false],
            delta,
            None,
        )
        .unwrap();
        (spec, abs)
    }

    #[test]
    fn extracted_shield_is_clean() {
        let (spec, abs) = line();
        let game = build_safety_game(&spec, &abs).unwrap();
        let sh = extract_preemptive(&game, &solve(&game)).unwrap();
        for mode in [
            VerifyMode::Exhaustive { max_states: 1000 },
            VerifyMode::Randomized { walks: 20, steps: 20, seed: 1 },
        ] {
            let r = verify_shield(&sh, &spec, &abs, mode).unwrap();
            assert!(r.is_clean(), "{}", r.to_json());
            assert!(!r.partial);
        }
    }

    #[test]
    fn planted_defects_found() {
        let (spec, abs) = line();
        let game = build_safety_game(&spec, &abs).unwrap();
        let sh = extract_preemptive(&game, &solve(&game)).unwrap();
        let (nl, na) = (4, 2);

        // remove "right" at the initial state under label c0
        let mut cut = sh.clone();
        cut.next[(cut.initial as usize * nl) * na + 1] = NONE;
        let r = verify_shield(&cut, &spec, &abs, VerifyMode::Exhaustive { max_states: 1000 }).unwrap();
        assert_eq!(r.violation_count, 0);
        assert_eq!(r.over_restrictions.len(), 1);
        assert_eq!(r.over_restrictions[0].label, "c0");
        assert_eq!(r.over_restrictions[0].action, "right");

        // allow "right" under c3 wherever it was blocked
        let mut loose = sh.clone();
        for s in 0..loose.num_states() {
            let i = (s * nl + 3) * na + 1;
            if loose.next[i] == NONE {
                loose.next[i] = s as u32;
            }
        }
        let r = verify_shield(&loose, &spec, &abs, VerifyMode::Exhaustive { max_states: 1000 }).unwrap();
        assert!(r.violation_count > 0);
        let ce =
            r.violations.iter().find(|v| v.kind == ViolationKind::SpecViolated).expect("a violating run");
        let last = ce.trace.last().unwrap();
        assert_eq!((last.label.as_str(), last.action.as_str()), ("c3", "right"));
    }

    #[test]
    fn bound_sets_partial_flag() {
        let (spec, abs) = line();
        let game = build_safety_game(&spec, &abs).unwrap();
        let sh = extract_preemptive(&game, &solve(&game)).unwrap();
        let r = verify_shield(&sh, &spec, &abs, VerifyMode::Exhaustive { max_states: 2 }).unwrap();
        assert!(r.partial);
    }

    #[test]
    fn mismatched_alphabets_rejected() {
        let (spec, abs) = line();
        let game = build_safety_game(&spec, &abs).unwrap();
        let sh = extract_preemptive(&game, &solve(&game)).unwrap();
        let other = build_invariance(&Alphabet::new(["x"]).unwrap(), abs.actions(), &[]).unwrap();
        assert!(matches!(
            verify_shield(&sh, &other, &abs, VerifyMode::Exhaustive { max_states: 10 }),
            Err(ShieldError::Mismatch(_))
        ));
    }
}
