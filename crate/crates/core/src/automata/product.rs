use std::collections::{HashMap, VecDeque};

use super::{AutomatonError, Role, SafetyAutomaton};

/// Synchronous product. The result accepts exactly the traces accepted by
/// both operands; any pair with an unsafe component is the (single) fail
/// state.
pub fn conjoin(a: &SafetyAutomaton, b: &SafetyAutomaton) -> Result<SafetyAutomaton, AutomatonError> {
    if a.labels() != b.labels() {
        return Err(AutomatonError::LabelMismatch);
    }
    if a.actions() != b.actions() {
        return Err(AutomatonError::ActionMismatch);
    }
    if a.step_order() != b.step_order() {
        return Err(AutomatonError::StepOrderMismatch);
    }
    let (nl, na) = (a.labels().len(), a.actions().len());
    let width = nl * na;
    let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut pairs = vec![(a.initial(), b.initial())];
    ids.insert(pairs[0], 0);
    let mut queue = VecDeque::from([0usize]);
    let mut delta: Vec<usize> = Vec::new();
    let fail = usize::MAX;
    while let Some(i) = queue.pop_front() {
        let (p, q) = pairs[i];
        debug_assert_eq!(delta.len(), i * width);
        for l in a.labels().labels() {
            for act in a.actions().actions() {
                let t = (a.next(p, l, act), b.next(q, l, act));
                if !a.is_safe(t.0) || !b.is_safe(t.1) {
                    delta.push(fail);
                    continue;
                }
                let id = *ids.entry(t).or_insert_with(|| {
                    pairs.push(t);
                    queue.push_back(pairs.len() - 1);
                    pairs.len() - 1
                });
                delta.push(id);
            }
        }
    }
    let n = pairs.len();
    for t in delta.iter_mut() {
        if *t == fail {
            *t = n;
        }
    }
    delta.extend(std::iter::repeat_n(n, width));
    let mut safe = vec![true; n];
    safe.push(false);
    let mut names: Vec<String> =
        pairs.iter().map(|&(p, q)| format!("{}&{}", a.state_name(p), b.state_name(q))).collect();
    names.push("fail".into());
    let role = if a.role() == b.role() { a.role() } else { Role::Specification };
    Ok(SafetyAutomaton::from_table(
        a.labels().clone(),
        a.actions().clone(),
        role,
        0,
        safe,
        delta,
        Some(names),
    )?
    .with_step_order(a.step_order()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{build_invariance, build_min_hold, ActionId, Alphabet, LabelId, StepOrder};

    #[test]
    fn accept_all_is_identity() {
        let l = Alphabet::new(["lo", "mid", "hi"]).unwrap();
        let a = Alphabet::new(["open", "close"]).unwrap();
        let phi = build_min_hold(&l, &a, ActionId(0), 3).unwrap();
        let top = build_invariance(&l, &a, &[]).unwrap();
        let p = conjoin(&phi, &top).unwrap();
        assert_eq!(p.num_states(), phi.num_states());
        let seqs = [vec![0, 1], vec![0, 0, 0, 1, 1, 1, 0], vec![1, 1, 0, 1]];
        for s in seqs {
            let trace: Vec<_> = s.iter().map(|&x| (LabelId(1), ActionId(x))).collect();
            assert_eq!(p.accepts(&trace), phi.accepts(&trace));
        }
    }

    #[test]
    fn mismatches_rejected() {
        let l = Alphabet::new(["x"]).unwrap();
        let l2 = Alphabet::new(["y"]).unwrap();
        let a = Alphabet::new(["go"]).unwrap();
        let p = build_invariance(&l, &a, &[]).unwrap();
        let q = build_invariance(&l2, &a, &[]).unwrap();
        assert_eq!(conjoin(&p, &q), Err(AutomatonError::LabelMismatch));
        let r = p.with_step_order(StepOrder::ActThenObserve);
        assert_eq!(conjoin(&p, &r), Err(AutomatonError::StepOrderMismatch));
    }
}
