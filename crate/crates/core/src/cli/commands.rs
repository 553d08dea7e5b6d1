use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::experiment::{parse_placement, resolve_env, EnvChoice, ExperimentConfig, Variant};
use super::{CliError, EnvArgs, ReportArgs, SynthArgs, TrainArgs, VerifyArgs};
use crate::automata::SafetyAutomaton;
use crate::envs::WaterTank;
use crate::game::{build_safety_game, solve};
use crate::learn::{
    aggregate_csv, certify_tank_env_view, EnvView, ObservationMode, RunLog, Shielding, Trainer,
};
use crate::shield::{
    extract_postposed, extract_preemptive, verify_shield, FallbackPolicy, Placement, Shield, ShieldError,
    VerifyMode,
};

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| CliError::io(format!("writing {}", tmp.display()), e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(format!("renaming to {}", path.display()), e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

fn load_automaton(key: &str, path: &Path) -> Result<SafetyAutomaton, CliError> {
    if !path.is_file() {
        return Err(CliError::invalid(format!("{key}: {} does not exist", path.display())));
    }
    SafetyAutomaton::load(path).map_err(|e| CliError::invalid(format!("{key}: {e}")))
}

/// Specification and abstraction from files, falling back to the
/// environment's built-ins.
fn automata(
    env: Option<&EnvChoice>,
    spec: Option<&Path>,
    abstraction: Option<&Path>,
) -> Result<(SafetyAutomaton, SafetyAutomaton), CliError> {
    match (spec, abstraction, env) {
        (Some(s), Some(a), _) => Ok((load_automaton("spec", s)?, load_automaton("abstraction", a)?)),
        (None, None, Some(env)) => Ok((env.spec()?, env.abstraction()?)),
        (Some(_), None, _) | (None, Some(_), _) => {
            Err(CliError::invalid("spec and abstraction must be given together"))
        }
        (None, None, None) => Err(CliError::invalid("give --env or both --spec and --abstraction")),
    }
}

fn env_only(args: &EnvArgs) -> Result<Option<EnvChoice>, CliError> {
    let mut errs = Vec::new();
    let env = resolve_env(args, &ExperimentConfig::default(), &mut errs);
    if errs.is_empty() {
        Ok(env)
    } else {
        Err(CliError::Validation(errs))
    }
}

fn shield_error(e: ShieldError) -> CliError {
    match e {
        ShieldError::Unrealizable(trace) => CliError::Unrealizable(trace),
        other => CliError::invalid(other.to_string()),
    }
}

#[derive(Debug, Serialize)]
struct SynthReport {
    environment: Option<String>,
    placement: Placement,
    counting_convention: &'static str,
    merged_game_states: usize,
    product_states: usize,
    reachable_states: usize,
    winning_states: usize,
    realizable: bool,
    shield_states: usize,
    restricted_pairs: usize,
    trivial: bool,
    seconds: f64,
}

const COUNTING: &str = "merged_game_states = safe spec states x safe abstraction states + error + paradise; \
product_states counts every pair before merging; reachable_states counts merged states reachable from the initial state";

fn synthesize(
    spec: &SafetyAutomaton,
    abs: &SafetyAutomaton,
    placement: Placement,
) -> Result<(Shield, SynthReport, crate::game::SafetyGame), CliError> {
    let start = Instant::now();
    let game = build_safety_game(spec, abs).map_err(|e| CliError::invalid(e.to_string()))?;
    let region = solve(&game);
    let shield = match placement {
        Placement::Preemptive => extract_preemptive(&game, &region),
        Placement::Postposed => extract_postposed(&game, &region, &FallbackPolicy::LowestIndex),
    }
    .map_err(shield_error)?;
    let stats = game.stats();
    let report = SynthReport {
        environment: None,
        placement,
        counting_convention: COUNTING,
        merged_game_states: stats.merged_full_product,
        product_states: stats.product_states,
        reachable_states: stats.reachable,
        winning_states: region.len(),
        realizable: region.realizable(),
        shield_states: shield.num_states(),
        restricted_pairs: shield.restricted_pairs(),
        trivial: shield.is_trivial(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((shield, report, game))
}

pub(super) fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let placement = parse_placement(&a.placement).ok_or_else(|| {
        CliError::invalid(format!("placement: unknown {:?} (preemptive, postposed)", a.placement))
    })?;
    let env = env_only(&a.env)?;
    let (spec, abs) = automata(env.as_ref(), a.spec.as_deref(), a.abstraction.as_deref())?;
    let (shield, mut report, game) = synthesize(&spec, &abs, placement)?;
    report.environment = env.as_ref().map(|e| e.name().to_string());
    create_dir(&a.out)?;
    write_atomic(&a.out.join("shield.json"), &shield.to_json())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_atomic(&a.out.join("synth_report.json"), &json)?;
    if a.dot {
        match game.to_dot(Some(&solve(&game))) {
            Some(dot) => write_atomic(&a.out.join("game.dot"), &dot)?,
            None => warn!("game has {} states; skipping Graphviz output", game.num_states()),
        }
    }
    println!(
        "merged game states {} (product {}, reachable {}), winning {}, shield states {}{}, {:.3}s",
        report.merged_game_states,
        report.product_states,
        report.reachable_states,
        report.winning_states,
        report.shield_states,
        if report.trivial { ", trivial" } else { "" },
        report.seconds
    );
    Ok(())
}

pub(super) fn train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    }
    .merge_args(a)?;
    let exp = cfg.resolve()?;
    let start = Instant::now();

    let needs_shield = exp.variants.iter().any(|v| v.placement.is_some());
    let shield = if needs_shield {
        let (spec, abs) = automata(Some(&exp.env), exp.spec.as_deref(), exp.abstraction.as_deref())?;
        Some(synthesize(&spec, &abs, Placement::Preemptive)?.0)
    } else {
        None
    };
    if let Some(sh) = &shield {
        let probe = exp.env.make();
        if sh.labels() != probe.labels() || sh.actions() != probe.actions() {
            return Err(CliError::invalid("shield alphabets do not match the environment"));
        }
    }
    let view = match (&shield, exp.learner.observation) {
        (Some(sh), ObservationMode::EnvOnly) => Some(env_view(&exp.env, sh)?),
        _ => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exp.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::io("starting worker pool", std::io::Error::other(e)))?;
    create_dir(&exp.out)?;
    for variant in &exp.variants {
        let dir = exp.out.join(variant.dir_name());
        create_dir(&dir)?;
        let logs: Result<Vec<RunLog>, CliError> = pool.install(|| {
            exp.seeds
                .par_iter()
                .map(|&seed| {
                    let log = run_seed(
                        &exp.env,
                        shield.as_ref(),
                        view,
                        *variant,
                        &exp.learner,
                        seed,
                        exp.episodes,
                    )?;
                    write_atomic(&dir.join(format!("run_seed{seed}.csv")), &log.to_csv())?;
                    Ok(log)
                })
                .collect()
        });
        let logs = logs?;
        write_atomic(&dir.join("aggregate.csv"), &aggregate_csv(&logs))?;
        let violations: u64 = logs.iter().map(RunLog::total_violations).sum();
        println!(
            "{}: {} seeds x {} episodes, {} violations",
            variant.dir_name(),
            logs.len(),
            exp.episodes,
            violations
        );
    }
    info!("training finished in {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn env_view<'a>(env: &EnvChoice, shield: &'a Shield) -> Result<EnvView<'a>, CliError> {
    if let Some(v) = EnvView::single_state(shield) {
        return Ok(v);
    }
    match env {
        EnvChoice::Tank(c) => {
            let tank = WaterTank::new(c.clone()).map_err(|e| CliError::invalid(e.to_string()))?;
            certify_tank_env_view(&tank, shield).map_err(|(state, m1, m2)| {
                CliError::invalid(format!(
                    "observation = env_only: tank state {state:?} is reached with menus {m1:?} and {m2:?}"
                ))
            })
        }
        EnvChoice::Grid { .. } => {
            Err(CliError::invalid("observation = env_only needs a shield with a single non-paradise state"))
        }
    }
}

fn run_seed(
    env: &EnvChoice,
    shield: Option<&Shield>,
    view: Option<EnvView<'_>>,
    variant: Variant,
    base: &crate::learn::LearnerConfig,
    seed: u64,
    episodes: usize,
) -> Result<RunLog, CliError> {
    let mut e = env.make();
    let config = crate::learn::LearnerConfig { algorithm: variant.algorithm, seed, ..base.clone() };
    let shielding = match (variant.placement, shield) {
        (None, _) => Shielding::None,
        (Some(Placement::Preemptive), Some(sh)) => Shielding::Preemptive(sh),
        (Some(Placement::Postposed), Some(sh)) => Shielding::Postposed(sh),
        (Some(_), None) => unreachable!("shield synthesized for shielded variants"),
    };
    let mut trainer = match (view, &shielding) {
        (Some(v), Shielding::Preemptive(_) | Shielding::Postposed(_)) => {
            Trainer::with_env_view(e.as_mut(), shielding, config, v)
        }
        _ => Trainer::new(e.as_mut(), shielding, config),
    }
    .map_err(|err| CliError::invalid(err.to_string()))?;
    trainer.run(episodes).map_err(|err| CliError::invalid(err.to_string()))?;
    Ok(trainer.into_parts().0)
}

pub(super) fn verify(a: &VerifyArgs) -> Result<(), CliError> {
    let mode = match a.mode.as_str() {
        "exhaustive" => VerifyMode::Exhaustive { max_states: a.max_states },
        "randomized" => VerifyMode::Randomized { walks: a.walks, steps: a.steps, seed: a.seed },
        other => return Err(CliError::invalid(format!("mode: unknown {other:?} (exhaustive, randomized)"))),
    };
    if !a.shield.is_file() {
        return Err(CliError::invalid(format!("shield: {} does not exist", a.shield.display())));
    }
    let shield = Shield::load(&a.shield).map_err(|e| match e {
        ShieldError::Io(io) => CliError::io(format!("reading {}", a.shield.display()), io),
        other => CliError::invalid(format!("shield: {other}")),
    })?;
    let env = env_only(&a.env)?;
    let (spec, abs) = automata(env.as_ref(), a.spec.as_deref(), a.abstraction.as_deref())?;
    let report = verify_shield(&shield, &spec, &abs, mode).map_err(|e| CliError::invalid(e.to_string()))?;
    let json = report.to_json();
    match &a.out {
        Some(p) => write_atomic(p, &json)?,
        None => println!("{json}"),
    }
    if report.partial {
        warn!("exploration stopped at {} states; the result is partial", report.explored);
    }
    if report.is_clean() {
        Ok(())
    } else {
        Err(CliError::VerificationFailed(format!(
            "{} correctness violations, {} over-restrictions",
            report.violation_count,
            report.over_restrictions.len()
        )))
    }
}

/// Directories under `root` (including itself) that hold run logs.
fn run_dirs(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let has_runs = |d: &Path| -> bool {
        std::fs::read_dir(d)
            .is_ok_and(|rd| rd.flatten().any(|e| e.file_name().to_string_lossy().starts_with("run_seed")))
    };
    let mut dirs = Vec::new();
    if has_runs(root) {
        dirs.push(root.to_path_buf());
    }
    let entries =
        std::fs::read_dir(root).map_err(|e| CliError::io(format!("reading {}", root.display()), e))?;
    let mut subs: Vec<PathBuf> = entries.flatten().map(|e| e.path()).filter(|p| p.is_dir()).collect();
    subs.sort();
    dirs.extend(subs.into_iter().filter(|p| has_runs(p)));
    Ok(dirs)
}

pub(super) fn report(a: &ReportArgs) -> Result<(), CliError> {
    if !a.out.is_dir() {
        return Err(CliError::invalid(format!("{} is not a directory", a.out.display())));
    }
    let synth = a.out.join("synth_report.json");
    if synth.is_file() {
        let text = std::fs::read_to_string(&synth)
            .map_err(|e| CliError::io(format!("reading {}", synth.display()), e))?;
        println!("{text}");
        return Ok(());
    }
    let dirs = run_dirs(&a.out)?;
    if dirs.is_empty() {
        return Err(CliError::invalid(format!("no run logs under {}", a.out.display())));
    }
    let mut summary = String::from("variant,seeds,episodes,final_mean_reward,violations,interventions\n");
    for dir in dirs {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| CliError::io(format!("reading {}", dir.display()), e))?
            .flatten()
            .map(|e| e.path())
            .filter(|p| {
                let n = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                n.starts_with("run_seed") && n.ends_with(".csv")
            })
            .collect();
        files.sort();
        let mut logs = Vec::new();
        for f in &files {
            let text = std::fs::read_to_string(f)
                .map_err(|e| CliError::io(format!("reading {}", f.display()), e))?;
            logs.push(
                RunLog::from_csv(&text).map_err(|e| CliError::invalid(format!("{}: {e}", f.display())))?,
            );
        }
        let episodes = logs.iter().map(|l| l.episodes.len()).max().unwrap_or(0);
        let tail = (episodes / 10).max(1);
        let finals: Vec<f64> = logs
            .iter()
            .filter(|l| !l.episodes.is_empty())
            .map(|l| {
                let t = &l.episodes[l.episodes.len().saturating_sub(tail)..];
                t.iter().map(|e| e.accumulated_reward).sum::<f64>() / t.len() as f64
            })
            .collect();
        let final_mean =
            if finals.is_empty() { f64::NAN } else { finals.iter().sum::<f64>() / finals.len() as f64 };
        let violations: u64 = logs.iter().map(RunLog::total_violations).sum();
        let interventions: u64 = logs.iter().flat_map(|l| &l.episodes).map(|e| e.interventions as u64).sum();
        let name = if dir == a.out {
            ".".to_string()
        } else {
            dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
        };
        let _ = writeln!(
            summary,
            "{name},{},{episodes},{final_mean:.4},{violations},{interventions}",
            logs.len()
        );
    }
    print!("{summary}");
    write_atomic(&a.out.join("summary.csv"), &summary)
}
