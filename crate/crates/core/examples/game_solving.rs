//! Solves two small safety games on a four-cell corridor and prints the
//! winning region, a Graphviz rendering and, for the unrealizable one, the
//! play by which the environment wins.
//!
//! Usage: game_solving [dot-file]

use shieldrl::automata::{build_collision, ActionId, Alphabet, ObstacleFlags, Role, SafetyAutomaton};
use shieldrl::game::{build_safety_game, losing_play, solve, SafetyGame};

/// The robot sits in cell 0..=3 and the label reports its cell. With `drift`
/// the environment may also report the robot one cell further right, which
/// moves it there.
fn corridor(drift: bool) -> Result<SafetyAutomaton, Box<dyn std::error::Error>> {
    let labels = Alphabet::new(["c0", "c1", "c2", "c3"])?;
    let actions = Alphabet::new(["stay", "right"])?;
    let fail = 4;
    let mut delta = Vec::new();
    for cell in 0..4usize {
        for l in 0..4usize {
            for a in 0..2usize {
                let ok = l == cell || (drift && l == cell + 1);
                delta.push(if ok { (l + a).min(3) } else { fail });
            }
        }
    }
    delta.extend([fail; 8]);
    let safe = vec![true, true, true, true, false];
    Ok(SafetyAutomaton::from_table(labels, actions, Role::Abstraction, 0, safe, delta, None)?)
}

fn report(name: &str, game: &SafetyGame) {
    let w = solve(game);
    let s = game.stats();
    println!(
        "{name}: {} states ({} merged, {} reachable), {} winning, realizable: {}",
        game.num_states(),
        s.merged_full_product,
        s.reachable,
        w.len(),
        w.realizable()
    );
    assert!(w.closure_violations(game).is_empty() && w.maximality_violations(game).is_empty());
    for g in w.states() {
        let allowed: Vec<_> = game
            .labels()
            .labels()
            .map(|l| {
                let acts: Vec<_> = w
                    .actions_after_label(game, g, l)
                    .iter()
                    .map(|a| game.actions().name(a.index()).to_string())
                    .collect();
                format!("{}:{}", game.labels().name(l.index()), acts.join("/"))
            })
            .collect();
        println!("  {:<14} {}", game.name(g), allowed.join(" "));
    }
    if let Some(play) = losing_play(game) {
        let steps: Vec<_> = play
            .iter()
            .map(|p| {
                format!(
                    "{} --{}/{}-->",
                    game.name(p.state),
                    game.labels().name(p.label.index()),
                    game.actions().name(p.action.index())
                )
            })
            .collect();
        println!("  environment wins: {} error", steps.join(" "));
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dot_path = std::env::args().nth(1);
    let tame = corridor(false)?;
    // moving right out of the last cell crashes
    let spec = build_collision(
        tame.labels(),
        tame.actions(),
        &ObstacleFlags::from_fn(tame.labels(), tame.actions(), |l, a| l.0 == 3 && a == ActionId(1)),
    )?;
    let game = build_safety_game(&spec, &tame)?;
    report("corridor", &game);
    if let Some(path) = dot_path {
        let dot = game.to_dot(Some(&solve(&game))).ok_or("game too large for dot")?;
        std::fs::write(&path, dot)?;
        println!("wrote {path}");
    }

    // with drift, standing still in cell 3 is also forbidden, so the
    // environment can push the robot into a dead end
    let strict = build_collision(
        tame.labels(),
        tame.actions(),
        &ObstacleFlags::from_fn(tame.labels(), tame.actions(), |l, _| l.0 == 3),
    )?;
    report("corridor with drift", &build_safety_game(&strict, &corridor(true)?)?);
    Ok(())
}
