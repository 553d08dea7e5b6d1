//! The 15x9 grid with an opponent circling the central block. Synthesizes
//! the shield, checks it with random conforming walks as well as
//! exhaustively, and trains a shielded and an unshielded learner.
//!
//! Usage: grid_opponent [episodes] [seed]

use std::time::Instant;

use shieldrl::envs::grid::{grid_abstraction, grid_spec};
use shieldrl::envs::{GridConfig, GridMap, GridWorld};
use shieldrl::game::{build_safety_game, solve};
use shieldrl::learn::{train_preemptive, train_unshielded, LearnerConfig, RunLog};
use shieldrl::shield::{extract_preemptive, verify_shield, VerifyMode};

fn late_return(log: &RunLog) -> f64 {
    let n = log.episodes.len();
    let tail = &log.episodes[n - (n / 10).max(1)..];
    tail.iter().map(|e| e.accumulated_reward).sum::<f64>() / tail.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().map_or(Ok(1000), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;

    let map = GridMap::default_15x9();
    let config = GridConfig::default();
    println!("opponent loop of {} cells, {} free cells", map.cycle().len(), map.free_cells());

    let t = Instant::now();
    let spec = grid_spec(&map, config.bomb_limit)?;
    let abs = grid_abstraction(&map)?;
    let game = build_safety_game(&spec, &abs)?;
    let region = solve(&game);
    let shield = extract_preemptive(&game, &region)?;
    let s = game.stats();
    println!(
        "game: {} merged states, {} reachable, realizable: {}, shield with {} states in {:.1?}",
        s.merged_full_product,
        s.reachable,
        region.realizable(),
        shield.num_states(),
        t.elapsed()
    );

    for mode in [
        VerifyMode::Randomized { walks: 500, steps: 500, seed },
        VerifyMode::Exhaustive { max_states: 1_000_000 },
    ] {
        let r = verify_shield(&shield, &spec, &abs, mode)?;
        println!(
            "verify {:?}: {} explored, {} counterexamples, {} over-restrictions",
            mode,
            r.explored,
            r.violation_count,
            r.over_restrictions.len()
        );
    }

    let env = GridWorld::new(map, config);
    let learner = LearnerConfig { seed, initial_value: 1.0, ..LearnerConfig::default() };
    let (shielded, _) = train_preemptive(&mut env.clone(), &shield, &learner, episodes)?;
    let (plain, _) = train_unshielded(&mut env.clone(), &learner, episodes)?;
    for (name, log) in [("shielded", &shielded), ("unshielded", &plain)] {
        println!("{name:>10}: {:>4} collisions, late return {:.2}", log.total_violations(), late_return(log));
    }
    Ok(())
}
