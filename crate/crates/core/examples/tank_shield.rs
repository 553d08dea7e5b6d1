//! Synthesizes the water-tank shield and prints its game size, the levels at
//! which each action is blocked, and the refill corner case in which `close`
//! is ruled out one liter above the minimum.
//!
//! Usage: tank_shield [shield.json]

use std::collections::BTreeMap;
use std::time::Instant;

use shieldrl::automata::LabelId;
use shieldrl::envs::watertank::{watertank_abstraction, watertank_spec, CLOSE, OPEN};
use shieldrl::game::{build_safety_game, solve};
use shieldrl::shield::{extract_preemptive, joint_contexts};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let start = Instant::now();
    let spec = watertank_spec(3)?;
    let abs = watertank_abstraction(50)?;
    let game = build_safety_game(&spec, &abs)?;
    let region = solve(&game);
    let shield = extract_preemptive(&game, &region)?;
    let s = game.stats();
    println!(
        "game: {} states after merging error and paradise ({} in the raw product, {} reachable), solved in {:.1?}",
        s.merged_full_product,
        s.product_states,
        s.reachable,
        start.elapsed()
    );
    println!(
        "shield: {} states, {} restricted (state, label) pairs",
        shield.num_states(),
        shield.restricted_pairs()
    );

    // For every specification mode, the levels at which an action is blocked.
    let (contexts, _) = joint_contexts(&shield, &spec, &abs, 1_000_000)?;
    let mut blocked: BTreeMap<(String, &str), Vec<u32>> = BTreeMap::new();
    for c in &contexts {
        if c.shield_state == shield.initial() {
            continue;
        }
        let menu = shield.menu(c.shield_state, c.label);
        for (a, name) in [(OPEN, "open"), (CLOSE, "close")] {
            if !menu.contains(&a) {
                blocked.entry((spec.state_name(c.spec_state).to_string(), name)).or_default().push(c.label.0);
            }
        }
    }
    for ((mode, action), mut levels) in blocked {
        levels.sort_unstable();
        levels.dedup();
        println!("  {mode:<14} {action:<5} blocked at levels {}", ranges(&levels));
    }

    let refill = contexts
        .iter()
        .find(|c| {
            abs.state_name(c.abs_state) == "q3"
                && spec.state_name(c.spec_state) == "ok&open"
                && c.label == LabelId(3)
        })
        .ok_or("refill corner not reachable")?;
    let menu: Vec<_> = shield
        .menu(refill.shield_state, refill.label)
        .iter()
        .map(|a| shield.actions().name(a.index()).to_string())
        .collect();
    println!("just opened at 3 liters: menu = {{{}}}", menu.join(", "));

    if let Some(path) = std::env::args().nth(1) {
        shield.save(&path)?;
        println!("wrote {path}");
    }
    Ok(())
}

fn ranges(levels: &[u32]) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < levels.len() {
        let mut j = i;
        while j + 1 < levels.len() && levels[j + 1] == levels[j] + 1 {
            j += 1;
        }
        out.push(if i == j { levels[i].to_string() } else { format!("{}-{}", levels[i], levels[j]) });
        i = j + 1;
    }
    out.join(", ")
}
