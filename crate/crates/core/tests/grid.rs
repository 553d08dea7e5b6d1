use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shieldrl::automata::{ActionId, SafetyAutomaton};
use shieldrl::envs::grid::{grid_abstraction, grid_spec};
use shieldrl::envs::{Environment, GridConfig, GridMap, GridWorld};
use shieldrl::game::{build_safety_game, solve};
use shieldrl::learn::{train_postposed, LearnerConfig};
use shieldrl::shield::{extract_postposed, extract_preemptive, verify_shield, FallbackPolicy, VerifyMode};

fn maps() -> Vec<(&'static str, GridMap)> {
    vec![("9x9", GridMap::default_9x9()), ("15x9", GridMap::default_15x9())]
}

/// Random walks: the abstraction accepts every simulated trace, and the
/// specification fails exactly on the step the simulator flags.
#[test]
fn simulator_agrees_with_abstraction_and_specification() {
    for (name, map) in maps() {
        let config = GridConfig::default();
        let abs = grid_abstraction(&map).unwrap();
        let spec = grid_spec(&map, config.bomb_limit).unwrap();
        let mut env = GridWorld::new(map, config);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut violations = 0;
        for _ in 0..2000 {
            env.reset(&mut rng);
            let (mut q, mut m) = (spec.initial(), abs.initial());
            loop {
                let l = env.label();
                let a = ActionId(rng.gen_range(0..4));
                let out = env.step(a, &mut rng);
                q = spec.next(q, l, a);
                m = abs.next(m, l, a);
                assert!(abs.is_safe(m), "{name}: abstraction rejected a simulated step");
                assert_eq!(!spec.is_safe(q), out.violation, "{name}: flag and specification disagree");
                violations += u32::from(out.violation);
                if out.done() {
                    break;
                }
            }
        }
        assert!(violations > 100, "{name}: walks should crash often");
    }
}

fn spec_and_abs(map: &GridMap) -> (SafetyAutomaton, SafetyAutomaton) {
    (grid_spec(map, GridConfig::default().bomb_limit).unwrap(), grid_abstraction(map).unwrap())
}

#[test]
fn shipped_maps_are_realizable_and_verify_clean() {
    for (name, map) in maps() {
        let (spec, abs) = spec_and_abs(&map);
        let game = build_safety_game(&spec, &abs).unwrap();
        let w = solve(&game);
        assert!(w.realizable(), "{name}");
        for shield in [
            extract_preemptive(&game, &w).unwrap(),
            extract_postposed(&game, &w, &FallbackPolicy::LowestIndex).unwrap(),
        ] {
            let r = verify_shield(&shield, &spec, &abs, VerifyMode::Exhaustive { max_states: 1_000_000 })
                .unwrap();
            assert!(r.is_clean() && !r.partial, "{name}: {}", r.to_json());
        }
    }
}

#[test]
fn randomized_verification_of_the_opponent_map() {
    let map = GridMap::default_15x9();
    let (spec, abs) = spec_and_abs(&map);
    let game = build_safety_game(&spec, &abs).unwrap();
    let shield = extract_preemptive(&game, &solve(&game)).unwrap();
    let r = verify_shield(&shield, &spec, &abs, VerifyMode::Randomized { walks: 300, steps: 400, seed: 2 })
        .unwrap();
    assert!(r.is_clean());
    assert!(r.explored > 0);
}

#[test]
fn dead_end_map_is_unrealizable() {
    // walls above and below, bombs left and right: with no bomb step allowed
    // every move either crashes or lands on a bomb
    let map = GridMap::parse("#####\n#BRB1\n#####", None).unwrap();
    let (_, abs) = spec_and_abs(&map);
    let spec = grid_spec(&map, 0).unwrap();
    let game = build_safety_game(&spec, &abs).unwrap();
    let w = solve(&game);
    assert!(!w.realizable());
    let ok = build_safety_game(&grid_spec(&map, 5).unwrap(), &abs).unwrap();
    assert!(solve(&ok).realizable());
}

#[test]
fn postposed_grid_training_never_goes_negative() {
    let map = GridMap::default_9x9();
    let (spec, abs) = spec_and_abs(&map);
    let game = build_safety_game(&spec, &abs).unwrap();
    let shield = extract_postposed(&game, &solve(&game), &FallbackPolicy::LowestIndex).unwrap();
    let env = GridWorld::new(map, GridConfig::default());
    let config = LearnerConfig { rank_width: 3, ..LearnerConfig::default() };
    let (log, _) = train_postposed(&mut env.clone(), &shield, &config, 300).unwrap();
    assert_eq!(log.total_violations(), 0);
    assert!(log.episodes.iter().all(|e| e.accumulated_reward >= 0.0));
}
