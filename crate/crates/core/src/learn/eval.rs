//! Exact planning and policy evaluation on the water tank.
//!
//! The tank's dynamics are small enough to enumerate, which gives learners a
//! ground truth: the optimal policy by value iteration, and the exact
//! expected return of any stationary policy over a finite horizon.

use std::collections::HashMap;

use crate::automata::{ActionId, LabelId};
use crate::envs::watertank::level_label;
use crate::envs::{Environment, TankState, WaterTank};
use crate::shield::{Shield, ShieldState};

use super::EnvView;

/// A stationary policy over tank state, shield state and current label.
pub type TankPolicy<'a> = dyn Fn(TankState, ShieldState, LabelId) -> ActionId + 'a;

type Node = (TankState, ShieldState);

fn label_of(x: TankState) -> LabelId {
    level_label(x.level as i64)
}

fn allowed(tank: &WaterTank, shield: Option<&Shield>, n: Node) -> Vec<ActionId> {
    match shield {
        Some(sh) => sh.menu(n.1, label_of(n.0)),
        None => Environment::actions(tank).actions().collect(),
    }
}

fn shield_next(shield: Option<&Shield>, n: Node, a: ActionId) -> ShieldState {
    match shield {
        Some(sh) => sh.advance(n.1, label_of(n.0), a).expect("action from the menu"),
        None => 0,
    }
}

/// All `(tank, shield)` pairs reachable from the initial state using
/// allowed actions, with the initial node first.
fn reachable(tank: &WaterTank, shield: Option<&Shield>) -> Vec<Node> {
    let start = (tank.initial(), shield.map_or(0, |s| s.initial()));
    let mut index = HashMap::from([(start, 0usize)]);
    let mut nodes = vec![start];
    let mut i = 0;
    while i < nodes.len() {
        let n = nodes[i];
        for a in allowed(tank, shield, n) {
            let s2 = shield_next(shield, n, a);
            for t in tank.outcomes(n.0, a) {
                if t.violation {
                    continue;
                }
                let m = (t.next, s2);
                if let std::collections::hash_map::Entry::Vacant(e) = index.entry(m) {
                    e.insert(nodes.len());
                    nodes.push(m);
                }
            }
        }
        i += 1;
    }
    nodes
}

fn q_value(
    tank: &WaterTank,
    shield: Option<&Shield>,
    n: Node,
    a: ActionId,
    value: &dyn Fn(Node) -> f64,
    gamma: f64,
) -> f64 {
    let s2 = shield_next(shield, n, a);
    tank.outcomes(n.0, a)
        .iter()
        .map(|t| {
            let cont = if t.violation { 0.0 } else { value((t.next, s2)) };
            t.probability * (t.reward + gamma * cont)
        })
        .sum()
}

/// Discounted value iteration on the (optionally shielded) tank. Returns the
/// greedy action per reachable node, ties to the lowest index.
pub fn optimal_tank_policy(
    tank: &WaterTank,
    shield: Option<&Shield>,
    gamma: f64,
) -> HashMap<(TankState, ShieldState), ActionId> {
    assert!(gamma < 1.0, "discounted value iteration needs gamma < 1");
    let nodes = reachable(tank, shield);
    let mut v: HashMap<Node, f64> = nodes.iter().map(|&n| (n, 0.0)).collect();
    loop {
        let mut delta: f64 = 0.0;
        for &n in &nodes {
            let best = allowed(tank, shield, n)
                .into_iter()
                .map(|a| q_value(tank, shield, n, a, &|m| v[&m], gamma))
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[&n]).abs());
            v.insert(n, best);
        }
        if delta < 1e-10 {
            break;
        }
    }
    nodes
        .iter()
        .map(|&n| {
            let mut best = None::<(ActionId, f64)>;
            for a in allowed(tank, shield, n) {
                let q = q_value(tank, shield, n, a, &|m| v[&m], gamma);
                if best.is_none_or(|(_, b)| q > b + 1e-12) {
                    best = Some((a, q));
                }
            }
            (n, best.expect("nonempty menu").0)
        })
        .collect()
}

/// Best achievable expected return over the configured horizon, by backward
/// induction with a time-dependent policy.
pub fn tank_finite_horizon_optimum(tank: &WaterTank, shield: Option<&Shield>) -> f64 {
    let nodes = reachable(tank, shield);
    let mut v: HashMap<Node, f64> = nodes.iter().map(|&n| (n, 0.0)).collect();
    for _ in 0..tank.config().horizon {
        let next: HashMap<Node, f64> = nodes
            .iter()
            .map(|&n| {
                let best = allowed(tank, shield, n)
                    .into_iter()
                    .map(|a| q_value(tank, shield, n, a, &|m| v[&m], 1.0))
                    .fold(f64::NEG_INFINITY, f64::max);
                (n, best)
            })
            .collect();
        v = next;
    }
    v[&nodes[0]]
}

/// Exact expected undiscounted return of `policy` over the configured
/// horizon from the initial state. With a shield, an action outside the menu
/// is replaced by the shield's substitute.
pub fn evaluate_tank_policy(tank: &WaterTank, shield: Option<&Shield>, policy: &TankPolicy) -> f64 {
    let start = (tank.initial(), shield.map_or(0, |s| s.initial()));
    let mut dist: HashMap<Node, f64> = HashMap::from([(start, 1.0)]);
    let mut total = 0.0;
    for _ in 0..tank.config().horizon {
        let mut next: HashMap<Node, f64> = HashMap::with_capacity(dist.len());
        for (&(x, s), &p) in &dist {
            let l = label_of(x);
            let mut a = policy(x, s, l);
            if let Some(sh) = shield {
                if !sh.is_allowed(s, l, a) {
                    a = sh.substitute(s, l);
                }
            }
            let s2 = shield_next(shield, (x, s), a);
            for t in tank.outcomes(x, a) {
                let q = p * t.probability;
                total += q * t.reward;
                if !t.violation {
                    *next.entry((t.next, s2)).or_insert(0.0) += q;
                }
            }
        }
        dist = next;
    }
    total
}

/// Certifies that the shield's menu at every reachable `(tank, shield)`
/// pair depends on the tank state only. On failure returns a tank state
/// reached with two different menus.
pub fn certify_tank_env_view<'a>(
    tank: &WaterTank,
    shield: &'a Shield,
) -> Result<EnvView<'a>, (TankState, Vec<ActionId>, Vec<ActionId>)> {
    let mut seen: HashMap<TankState, Vec<ActionId>> = HashMap::new();
    for n in reachable(tank, Some(shield)) {
        let menu = allowed(tank, Some(shield), n);
        match seen.get(&n.0) {
            Some(m) if *m != menu => return Err((n.0, m.clone(), menu)),
            Some(_) => {}
            None => {
                seen.insert(n.0, menu);
            }
        }
    }
    Ok(EnvView { shield })
}
