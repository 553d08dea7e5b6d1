//! Trains shielded and unshielded Q-learning and SARSA on the water tank and
//! scores each greedy policy exactly against the value-iteration optimum.
//!
//! Usage: tank_convergence [episodes] [seed] [--joint]
//!
//! `--joint` keys the shielded learners on (tank state, shield state) instead
//! of the certified tank-state-only view.

use shieldrl::envs::watertank::{tank_actions, watertank_abstraction, watertank_spec};
use shieldrl::envs::{TankConfig, WaterTank};
use shieldrl::game::{build_safety_game, solve};
use shieldrl::learn::{
    certify_tank_env_view, evaluate_tank_policy, optimal_tank_policy, tank_finite_horizon_optimum, Algorithm,
    EpsilonSchedule, LearnerConfig, ObservationMode, Shielding, Trainer,
};
use shieldrl::shield::extract_preemptive;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let joint = args.iter().any(|a| a == "--joint");
    let mut nums = args.iter().filter(|a| !a.starts_with("--"));
    let episodes: usize = nums.next().map_or(Ok(10_000), |s| s.parse())?;
    let seed: u64 = nums.next().map_or(Ok(0), |s| s.parse())?;

    let spec = watertank_spec(3)?;
    let abs = watertank_abstraction(50)?;
    let game = build_safety_game(&spec, &abs)?;
    let shield = extract_preemptive(&game, &solve(&game))?;
    let tank = WaterTank::new(TankConfig::default())?;
    let view = certify_tank_env_view(&tank, &shield).map_err(|e| format!("no env view: {e:?}"))?;

    let gamma = 0.99;
    let opt = optimal_tank_policy(&tank, Some(&shield), gamma);
    let r_star = evaluate_tank_policy(&tank, Some(&shield), &|x, s, _| opt[&(x, s)]);
    let r_h = tank_finite_horizon_optimum(&tank, Some(&shield));
    println!("optimal stationary return {r_star:.3}, time-dependent optimum {r_h:.3}");

    let all: Vec<_> = tank_actions().actions().collect();
    for (name, shielded, algorithm) in [
        ("shielded Q", true, Algorithm::Q),
        ("shielded SARSA", true, Algorithm::Sarsa),
        ("unshielded Q", false, Algorithm::Q),
        ("unshielded SARSA", false, Algorithm::Sarsa),
    ] {
        let env_only = shielded && !joint;
        let config = LearnerConfig {
            algorithm,
            gamma,
            alpha: 0.3,
            // all rewards are negative, so the zero initial table already
            // drives exploration
            epsilon: EpsilonSchedule::Constant(0.0),
            seed,
            observation: if env_only { ObservationMode::EnvOnly } else { ObservationMode::Joint },
            ..LearnerConfig::default()
        };
        let mut env = tank.clone();
        let mut trainer = if shielded {
            Trainer::with_env_view(&mut env, Shielding::Preemptive(&shield), config, view)?
        } else {
            Trainer::new(&mut env, Shielding::None, config)?
        };
        let mut first_95 = None;
        let mut last = f64::NAN;
        while trainer.episodes_done() < episodes {
            trainer.run(50)?;
            let table = trainer.table();
            last = evaluate_tank_policy(&tank, shielded.then_some(&shield), &|x, s, l| {
                let q = if shielded && !env_only { s } else { 0 };
                let menu = if shielded { shield.menu(s, l) } else { all.clone() };
                table.greedy((x.key(), q), &menu)
            });
            if first_95.is_none() && last >= r_star - 0.05 * r_star.abs() {
                first_95 = Some(trainer.episodes_done());
            }
        }
        println!(
            "{name:>18}: final {last:.3}, 95% of optimum after {first_95:?} episodes, {} violations",
            trainer.log().total_violations()
        );
    }
    Ok(())
}
