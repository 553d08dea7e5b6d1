//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use shieldrl::automata::{ActionId, LabelId, SafetyAutomaton};
use shieldrl::envs::grid::{grid_abstraction, grid_spec};
use shieldrl::envs::watertank::{tank_actions, watertank_abstraction, watertank_spec, CLOSE, OPEN};
use shieldrl::envs::{Environment, GridConfig, GridMap, GridWorld, TankConfig, WaterTank};
use shieldrl::game::{build_safety_game, solve};
use shieldrl::learn::{
    certify_tank_env_view, evaluate_tank_policy, optimal_tank_policy, tank_finite_horizon_optimum,
    train_unshielded, Algorithm, EpsilonSchedule, LearnerConfig, ObservationMode, Shielding, Trainer,
};
use shieldrl::shield::{
    extract_postposed, extract_preemptive, joint_contexts, verify_shield, FallbackPolicy, Shield, VerifyMode,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tank_automata() -> (SafetyAutomaton, SafetyAutomaton) {
    (watertank_spec(3).unwrap(), watertank_abstraction(50).unwrap())
}

fn tank_shield() -> (SafetyAutomaton, SafetyAutomaton, Shield) {
    let (spec, abs) = tank_automata();
    let game = build_safety_game(&spec, &abs).unwrap();
    let shield = extract_preemptive(&game, &solve(&game)).unwrap();
    (spec, abs, shield)
}

fn grid_automata(map: &GridMap) -> (SafetyAutomaton, SafetyAutomaton) {
    (grid_spec(map, GridConfig::default().bomb_limit).unwrap(), grid_abstraction(map).unwrap())
}

/// Game size under the merged count, with the raw and reachable counts
/// alongside.
fn product_size() -> Outcome {
    let start = Instant::now();
    let (spec, abs) = tank_automata();
    let game = build_safety_game(&spec, &abs).unwrap();
    let w = solve(&game);
    let elapsed = start.elapsed();
    let s = game.stats();
    check(
        s.merged_full_product == 602 && w.realizable() && elapsed < Duration::from_secs(10),
        format!(
            "{} merged states (raw product {}, reachable {}), synthesized in {:.2?}",
            s.merged_full_product, s.product_states, s.reachable, elapsed
        ),
    )
}

/// Levels at which the menu in specification mode `mode` satisfies `pred`,
/// over every reachable decision point after the first step.
fn levels_where(
    spec: &SafetyAutomaton,
    abs: &SafetyAutomaton,
    shield: &Shield,
    mode: &str,
    pred: impl Fn(&[ActionId]) -> bool,
) -> BTreeSet<u32> {
    let (contexts, _) = joint_contexts(shield, spec, abs, 1_000_000).unwrap();
    contexts
        .iter()
        .filter(|c| c.shield_state != shield.initial() && spec.state_name(c.spec_state) == mode)
        .filter(|c| pred(&shield.menu(c.shield_state, c.label)))
        .map(|c| c.label.0)
        .collect()
}

fn tank_thresholds() -> Outcome {
    let (spec, abs, shield) = tank_shield();
    let no_open = levels_where(&spec, &abs, &shield, "ok&not-open", |m| !m.contains(&OPEN));
    let only_open = levels_where(&spec, &abs, &shield, "ok&open", |m| m == [OPEN]);
    let want_no_open: BTreeSet<u32> = (94..=99).collect();
    let want_only_open: BTreeSet<u32> = (1..=3).collect();
    check(
        no_open == want_no_open && only_open == want_only_open,
        format!("closed: open blocked at {no_open:?}; open: forced at {only_open:?}"),
    )
}

fn refill_corner() -> Outcome {
    let (spec, abs, shield) = tank_shield();
    let (contexts, _) = joint_contexts(&shield, &spec, &abs, 1_000_000).unwrap();
    let hits: Vec<_> = contexts
        .iter()
        .filter(|c| {
            abs.state_name(c.abs_state) == "q3"
                && spec.state_name(c.spec_state) == "ok&open"
                && c.label == LabelId(3)
        })
        .collect();
    let menus: BTreeSet<Vec<ActionId>> = hits.iter().map(|c| shield.menu(c.shield_state, c.label)).collect();
    check(
        !hits.is_empty() && menus.iter().all(|m| !m.contains(&CLOSE)),
        format!("{} matching decision points, menus {menus:?}", hits.len()),
    )
}

fn safety_soak() -> Outcome {
    let start = Instant::now();
    let mut runs = 0;
    let mut violations = 0u64;
    let mut steps = 0u64;
    let tank = WaterTank::new(TankConfig::default()).unwrap();
    let (spec, abs) = tank_automata();
    let mut envs: Vec<(&str, Box<dyn Fn() -> Box<dyn Environment>>, SafetyAutomaton, SafetyAutomaton)> =
        vec![("tank", Box::new(move || Box::new(tank.clone())), spec, abs)];
    for (name, map) in [("9x9", GridMap::default_9x9()), ("15x9", GridMap::default_15x9())] {
        let (spec, abs) = grid_automata(&map);
        envs.push((
            name,
            Box::new(move || Box::new(GridWorld::new(map.clone(), GridConfig::default()))),
            spec,
            abs,
        ));
    }
    for (_, make, spec, abs) in &envs {
        let game = build_safety_game(spec, abs).unwrap();
        let w = solve(&game);
        let pre = extract_preemptive(&game, &w).unwrap();
        let post = extract_postposed(&game, &w, &FallbackPolicy::LowestIndex).unwrap();
        for seed in 0..5 {
            for shielding in [Shielding::Preemptive(&pre), Shielding::Postposed(&post)] {
                let config = LearnerConfig { seed, rank_width: 3, ..LearnerConfig::default() };
                let mut env = make();
                let mut t = Trainer::new(env.as_mut(), shielding, config).unwrap();
                t.run(2000).unwrap();
                violations += t.log().total_violations();
                steps += t.log().episodes.iter().map(|e| u64::from(e.steps)).sum::<u64>();
                runs += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        violations == 0 && elapsed < Duration::from_secs(600),
        format!("{runs} runs x 2000 episodes, {steps} steps, {violations} violations, {elapsed:.1?}"),
    )
}

fn baseline_contrast() -> Outcome {
    let env = GridWorld::new(GridMap::default_9x9(), GridConfig::default());
    let mut hits = 0;
    let mut first = Vec::new();
    for seed in 0..5 {
        let config = LearnerConfig { seed, ..LearnerConfig::default() };
        let (log, _) = train_unshielded(&mut env.clone(), &config, 500).unwrap();
        let neg = log.episodes.iter().position(|e| e.accumulated_reward < 0.0);
        hits += usize::from(neg.is_some());
        first.push(neg);
    }
    check(hits >= 4, format!("{hits}/5 seeds with a negative episode; first at {first:?}"))
}

fn convergence_parity() -> Outcome {
    const EPISODES: usize = 10_000;
    const EVERY: usize = 50;
    let gamma = 0.99;
    let tank = WaterTank::new(TankConfig::default()).unwrap();
    let (_, _, shield) = tank_shield();
    let view = certify_tank_env_view(&tank, &shield).map_err(|e| format!("no env view: {e:?}"))?;

    let opt = optimal_tank_policy(&tank, Some(&shield), gamma);
    let r_star = evaluate_tank_policy(&tank, Some(&shield), &|x, s, _| opt[&(x, s)]);
    let opt_free = optimal_tank_policy(&tank, None, gamma);
    let r_free = evaluate_tank_policy(&tank, None, &|x, s, _| opt_free[&(x, s)]);
    let r_h = tank_finite_horizon_optimum(&tank, Some(&shield));
    if (r_star - r_free).abs() > 1e-9 || r_h < r_star - 1e-9 || r_h - r_star > 0.01 * r_star.abs() {
        return Err(format!("oracles disagree: R* {r_star}, unshielded {r_free}, time-dependent {r_h}"));
    }

    let all: Vec<ActionId> = tank_actions().actions().collect();
    let variants =
        [(true, Algorithm::Q), (false, Algorithm::Q), (true, Algorithm::Sarsa), (false, Algorithm::Sarsa)];
    // [variant][seed] = (final greedy return, episodes to reach 95%)
    let mut results = vec![Vec::new(); variants.len()];
    for seed in 0..5 {
        for (i, &(shielded, algorithm)) in variants.iter().enumerate() {
            let config = LearnerConfig {
                algorithm,
                gamma,
                alpha: 0.3,
                epsilon: EpsilonSchedule::Constant(0.0),
                seed,
                observation: if shielded { ObservationMode::EnvOnly } else { ObservationMode::Joint },
                ..LearnerConfig::default()
            };
            let mut env = tank.clone();
            let mut t = if shielded {
                Trainer::with_env_view(&mut env, Shielding::Preemptive(&shield), config, view).unwrap()
            } else {
                Trainer::new(&mut env, Shielding::None, config).unwrap()
            };
            let mut reached = None;
            let mut last = f64::NEG_INFINITY;
            while t.episodes_done() < EPISODES {
                t.run(EVERY).unwrap();
                let table = t.table();
                last = evaluate_tank_policy(&tank, shielded.then_some(&shield), &|x, s, l| {
                    let menu = if shielded { shield.menu(s, l) } else { all.clone() };
                    table.greedy((x.key(), 0), &menu)
                });
                if reached.is_none() && last >= r_star - 0.05 * r_star.abs() {
                    reached = Some(t.episodes_done());
                }
            }
            results[i].push((last, reached.unwrap_or(usize::MAX)));
        }
    }
    let median = |v: &[(f64, usize)]| {
        let mut e: Vec<usize> = v.iter().map(|r| r.1).collect();
        e.sort_unstable();
        e[e.len() / 2]
    };
    let worst = results.iter().flatten().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let within = worst >= r_star - 0.02 * r_star.abs();
    let m: Vec<usize> = results.iter().map(|r| median(r)).collect();
    let parity = m[0] <= m[1] && m[2] <= m[3];
    check(
        within && parity,
        format!(
            "R* {r_star:.3}, worst final {worst:.3}; median episodes to 95%: Q {} shielded vs {} unshielded, SARSA {} vs {}",
            m[0], m[1], m[2], m[3]
        ),
    )
}

fn minimal_interference() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut cases = vec![("tank", tank_automata())];
    cases.push(("9x9", grid_automata(&GridMap::default_9x9())));
    cases.push(("15x9", grid_automata(&GridMap::default_15x9())));
    for (name, (spec, abs)) in &cases {
        let game = build_safety_game(spec, abs).unwrap();
        if game.stats().reachable > 10_000 {
            continue;
        }
        let w = solve(&game);
        for shield in [
            extract_preemptive(&game, &w).unwrap(),
            extract_postposed(&game, &w, &FallbackPolicy::LowestIndex).unwrap(),
        ] {
            let r =
                verify_shield(&shield, spec, abs, VerifyMode::Exhaustive { max_states: 1_000_000 }).unwrap();
            ok &= r.is_clean() && !r.partial;
            parts.push(format!(
                "{name}/{:?}: {} over-restrictions, {} counterexamples",
                shield.placement(),
                r.over_restrictions.len(),
                r.violation_count
            ));
        }
    }
    check(ok && parts.len() == 6, parts.join("; "))
}

fn fixed_point_properties() -> Outcome {
    let mut realizable = 0;
    let mut bad = Vec::new();
    for seed in 0..200 {
        let raw = common::random_game(seed, 200);
        let game = raw.build();
        let w = solve(&game);
        let m = w.members();
        // closure: every member is safe and can be held inside the region
        let closed = (0..raw.states()).all(|s| !m[s] || (raw.safe[s] && raw.one_step(m, s)));
        // maximality: the environment can force a loss from every other state
        let attr = common::environment_attractor(&raw);
        let maximal = (0..raw.states()).all(|s| m[s] != attr[s]);
        let naive = common::naive_winning(&raw);
        if !(closed && maximal && m == naive.as_slice()) {
            bad.push(seed);
        }
        realizable += usize::from(w.realizable());
    }
    check(bad.is_empty(), format!("200 games, {realizable} realizable, failing seeds {bad:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 product game size", product_size),
        ("2 water-tank thresholds", tank_thresholds),
        ("3 refill corner case", refill_corner),
        ("4 safety soak", safety_soak),
        ("5 unshielded baseline crashes", baseline_contrast),
        ("6 convergence parity", convergence_parity),
        ("7 minimal interference", minimal_interference),
        ("8 fixed-point properties", fixed_point_properties),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {name}: PASS ({secs:.1}s) {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {name}: FAIL ({secs:.1}s) {d}");
            }
        }
    }
    println!("criterion 9 large-scale experiments (image-based game, continuous-control car): out of scope, not run");
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
