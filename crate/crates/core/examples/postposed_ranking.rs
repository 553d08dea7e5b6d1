//! Post-posed shielding on the water tank: the learner submits a ranking of
//! two actions and the shield executes the first safe one. Compares the two
//! ways of rewarding ranked-but-unsafe actions.
//!
//! Usage: postposed_ranking [episodes] [seed]

use shieldrl::envs::watertank::{watertank_abstraction, watertank_spec, CLOSE, OPEN};
use shieldrl::envs::{TankConfig, WaterTank};
use shieldrl::game::{build_safety_game, solve};
use shieldrl::learn::{train_postposed, EpsilonSchedule, LearnerConfig, RewardVariant};
use shieldrl::shield::{extract_postposed, joint_contexts, FallbackPolicy, Ranking};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().map_or(Ok(2000), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;

    let spec = watertank_spec(3)?;
    let abs = watertank_abstraction(50)?;
    let game = build_safety_game(&spec, &abs)?;
    let shield = extract_postposed(&game, &solve(&game), &FallbackPolicy::LowestIndex)?;

    // one decision: closed valve at 96 liters, learner prefers to open
    let (contexts, _) = joint_contexts(&shield, &spec, &abs, 1_000_000)?;
    let c = contexts
        .iter()
        .find(|c| {
            c.shield_state != shield.initial()
                && spec.state_name(c.spec_state) == "ok&not-open"
                && c.label.0 == 96
        })
        .ok_or("closed at 96 not reachable")?;
    for ranking in [vec![OPEN], vec![OPEN, CLOSE], vec![CLOSE, OPEN]] {
        let names: Vec<_> = ranking.iter().map(|a| shield.actions().name(a.index())).collect();
        let out = shield.postposed_step(c.shield_state, c.label, &Ranking::new(ranking.clone(), 2)?);
        println!(
            "at 96 liters, ranking {:?} -> {} (rank {:?}, overridden: {})",
            names,
            shield.actions().name(out.action.index()),
            out.rank,
            out.overridden
        );
    }

    let tank = WaterTank::new(TankConfig::default())?;
    for (name, variant) in
        [("punish -10", RewardVariant::Punish(-10.0)), ("passthrough", RewardVariant::Passthrough)]
    {
        let config = LearnerConfig {
            rank_width: 2,
            reward_variant: variant,
            seed,
            epsilon: EpsilonSchedule::Linear { start: 0.2, end: 0.0, episodes: episodes / 2 },
            ..LearnerConfig::default()
        };
        let (log, _) = train_postposed(&mut tank.clone(), &shield, &config, episodes)?;
        let tenth = (episodes / 10).max(1);
        let mean = |f: &dyn Fn(&shieldrl::learn::EpisodeRecord) -> f64, from: usize| {
            let part = &log.episodes[from..(from + tenth).min(log.episodes.len())];
            part.iter().map(f).sum::<f64>() / part.len() as f64
        };
        let last = episodes.saturating_sub(tenth);
        println!(
            "{name:>12}: overrides/episode {:.2} -> {:.2}, return {:.2} -> {:.2}, violations {}",
            mean(&|e| f64::from(e.interventions), 0),
            mean(&|e| f64::from(e.interventions), last),
            mean(&|e| e.accumulated_reward, 0),
            mean(&|e| e.accumulated_reward, last),
            log.total_violations()
        );
    }
    Ok(())
}
