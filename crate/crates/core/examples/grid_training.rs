//! Q-learning on the 9x9 grid world with a preemptive shield, a post-posed
//! shield (ranking width 3) and no shield. Prints crashes, episodes with a
//! negative return and the late-training return for each.
//!
//! Usage: grid_training [episodes] [seed]

use shieldrl::envs::grid::{grid_abstraction, grid_spec};
use shieldrl::envs::{GridConfig, GridMap, GridWorld};
use shieldrl::game::{build_safety_game, solve};
use shieldrl::learn::{train_postposed, train_preemptive, train_unshielded, LearnerConfig, RunLog};
use shieldrl::shield::{extract_postposed, extract_preemptive, FallbackPolicy};

fn summary(name: &str, log: &RunLog) {
    let n = log.episodes.len();
    let tail = &log.episodes[n - (n / 10).max(1)..];
    let late = tail.iter().map(|e| e.accumulated_reward).sum::<f64>() / tail.len() as f64;
    let negative = log.episodes.iter().filter(|e| e.accumulated_reward < 0.0).count();
    let interventions: u64 = log.episodes.iter().map(|e| u64::from(e.interventions)).sum();
    println!(
        "{name:>11}: {:>4} crashes, {:>4} negative episodes, {:>6} interventions, late return {late:.2}",
        log.total_violations(),
        negative,
        interventions
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().map_or(Ok(1000), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;

    let map = GridMap::default_9x9();
    let config = GridConfig::default();
    let spec = grid_spec(&map, config.bomb_limit)?;
    let abs = grid_abstraction(&map)?;
    let game = build_safety_game(&spec, &abs)?;
    let region = solve(&game);
    println!("game: {} reachable states, realizable: {}", game.stats().reachable, region.realizable());
    let pre = extract_preemptive(&game, &region)?;
    let post = extract_postposed(&game, &region, &FallbackPolicy::LowestIndex)?;

    let env = GridWorld::new(map, config);
    // Rewards are sparse and never negative under a shield, so a zero table
    // gives the learner no reason to leave the start. An initial value of 1
    // sends it to untried moves first.
    let learner = LearnerConfig { seed, initial_value: 1.0, ..LearnerConfig::default() };
    let (log, _) = train_preemptive(&mut env.clone(), &pre, &learner, episodes)?;
    summary("preemptive", &log);
    let ranked = LearnerConfig { rank_width: 3, ..learner.clone() };
    let (log, _) = train_postposed(&mut env.clone(), &post, &ranked, episodes)?;
    summary("post-posed", &log);
    let (log, _) = train_unshielded(&mut env.clone(), &learner, episodes)?;
    summary("unshielded", &log);
    Ok(())
}
