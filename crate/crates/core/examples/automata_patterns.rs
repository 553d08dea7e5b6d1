//! Builds the reusable safety patterns, conjoins two of them and runs a few
//! traces through the result. Ends with a JSON round trip.

use shieldrl::automata::{
    build_bounded_stay, build_invariance, build_min_hold, conjoin, ActionId, Alphabet, LabelId,
    SafetyAutomaton,
};

fn show(name: &str, m: &SafetyAutomaton) {
    println!("{name}: {} states ({} safe)", m.num_states(), m.num_safe());
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let labels = Alphabet::new(["calm", "hot", "wet"])?;
    let actions = Alphabet::new(["heat", "idle"])?;
    let (calm, hot, wet) = (LabelId(0), LabelId(1), LabelId(2));
    let (heat, idle) = (ActionId(0), ActionId(1));

    let never_wet = build_invariance(&labels, &actions, &[wet])?;
    let hold = build_min_hold(&labels, &actions, heat, 2)?;
    let not_hot_long = build_bounded_stay(&labels, &actions, &[hot], 2)?;
    show("never wet", &never_wet);
    show("heater holds 2 steps", &hold);
    show("at most 2 hot steps in a row", &not_hot_long);

    let both = conjoin(&conjoin(&never_wet, &hold)?, &not_hot_long)?;
    show("conjunction", &both);

    let traces: [(&str, Vec<(LabelId, ActionId)>); 4] = [
        ("heat twice then idle", vec![(calm, heat), (calm, heat), (calm, idle)]),
        ("heat once then idle", vec![(calm, heat), (calm, idle)]),
        ("three hot steps", vec![(hot, idle), (hot, idle), (hot, idle)]),
        ("wet", vec![(calm, idle), (wet, idle)]),
    ];
    for (name, trace) in &traces {
        let end = both.run(trace);
        println!("  {name:<22} -> {:<5} (ends in {})", both.accepts(trace), both.state_name(end));
    }

    let text = both.to_json();
    let back = SafetyAutomaton::from_json(&text)?;
    assert_eq!(back, both);
    println!("JSON round trip ok ({} bytes)", text.len());
    Ok(())
}
