//! Verifies the water-tank shield against its specification and abstraction,
//! then plants two defects in a copy and shows what the verifier reports.

use shieldrl::envs::watertank::{watertank_abstraction, watertank_spec, CLOSE, OPEN};
use shieldrl::game::{build_safety_game, solve};
use shieldrl::shield::{extract_preemptive, joint_contexts, verify_shield, Shield, ShieldFile, VerifyMode};

const EXHAUSTIVE: VerifyMode = VerifyMode::Exhaustive { max_states: 1_000_000 };

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = watertank_spec(3)?;
    let abs = watertank_abstraction(50)?;
    let game = build_safety_game(&spec, &abs)?;
    let shield = extract_preemptive(&game, &solve(&game))?;

    let r = verify_shield(&shield, &spec, &abs, EXHAUSTIVE)?;
    println!(
        "synthesized shield: {} joint states, {} decision points, clean: {}",
        r.explored,
        r.contexts,
        r.is_clean()
    );
    let r = verify_shield(&shield, &spec, &abs, VerifyMode::Randomized { walks: 200, steps: 300, seed: 7 })?;
    println!("random walks: {} steps, clean: {}", r.explored, r.is_clean());

    // Find the decision points for a closed valve at 95 and at 50 liters.
    let (contexts, _) = joint_contexts(&shield, &spec, &abs, 1_000_000)?;
    let find = |level: u32| {
        contexts
            .iter()
            .find(|c| {
                c.shield_state != shield.initial()
                    && spec.state_name(c.spec_state) == "ok&not-open"
                    && c.label.0 == level
            })
            .copied()
            .expect("reachable")
    };
    let (high, mid) = (find(95), find(50));

    // Defect 1: let the valve open at 95 liters.
    let mut file = ShieldFile::from(&shield);
    let (q, l) = (high.shield_state as usize, high.label.0 as usize);
    let to = shield.advance(high.shield_state, high.label, CLOSE)?;
    file.menu[q][l].push(OPEN.0);
    file.transitions.push([q as u32, l as u32, OPEN.0, to]);
    let loose: Shield = file.into_shield()?;
    let r = verify_shield(&loose, &spec, &abs, EXHAUSTIVE)?;
    println!("\nopen allowed at 95: {} counterexamples", r.violation_count);
    if let Some(ce) = r.violations.first() {
        let tail: Vec<_> =
            ce.trace.iter().rev().take(4).rev().map(|s| format!("{}/{}", s.label, s.action)).collect();
        println!("  {:?}, last steps: ... {}", ce.kind, tail.join(" "));
    }

    // Defect 2: forbid opening at 50 liters.
    let mut file = ShieldFile::from(&shield);
    let (q, l) = (mid.shield_state as usize, mid.label.0 as usize);
    file.menu[q][l].retain(|&a| a != OPEN.0);
    file.transitions.retain(|t| !(t[0] as usize == q && t[1] as usize == l && t[2] == OPEN.0));
    file.substitute[q][l] = CLOSE.0;
    let tight = file.into_shield()?;
    let r = verify_shield(&tight, &spec, &abs, EXHAUSTIVE)?;
    println!("\nopen forbidden at 50: {} over-restrictions", r.over_restrictions.len());
    for o in &r.over_restrictions {
        println!("  {} blocked under {} in {} / {}", o.action, o.label, o.spec_state, o.abs_state);
    }
    Ok(())
}
