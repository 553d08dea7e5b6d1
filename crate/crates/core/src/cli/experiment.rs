//! Experiment configuration: a flat TOML file merged with command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{CliError, EnvArgs, TrainArgs};
use crate::automata::SafetyAutomaton;
use crate::envs::{EnergyTable, Environment, GridConfig, GridMap, GridWorld, TankConfig, WaterTank};
use crate::learn::{
    Algorithm, EpsilonSchedule, LearnError, LearnerConfig, ObservationMode, RewardVariant, TieBreak,
};
use crate::shield::Placement;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn items(&self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => s.split(',').map(|p| p.trim().to_string()).collect(),
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Every key is optional; unset keys take the documented defaults.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: Option<String>,
    pub map: Option<PathBuf>,
    pub energy: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub abstraction: Option<PathBuf>,
    pub placement: Option<OneOrMany>,
    pub algorithm: Option<OneOrMany>,
    pub seeds: Option<Vec<u64>>,
    pub episodes: Option<usize>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,

    pub alpha: Option<f64>,
    pub alpha_decay: Option<f64>,
    pub gamma: Option<f64>,
    /// Constant rate, or the start of a linear schedule with `epsilon_end`.
    pub epsilon: Option<f64>,
    pub epsilon_end: Option<f64>,
    pub epsilon_episodes: Option<usize>,
    /// Per-observation schedule `scale / visits`; excludes the keys above.
    pub epsilon_scale: Option<f64>,
    pub rank_width: Option<usize>,
    /// punish or passthrough
    pub reward_variant: Option<String>,
    pub punishment: Option<f64>,
    /// lowest or random
    pub tie_break: Option<String>,
    /// joint or env_only
    pub observation: Option<String>,
    pub initial_value: Option<f64>,

    /// Violation reward of the environment.
    pub penalty: Option<f64>,
    pub horizon: Option<u32>,
    pub hold: Option<u32>,
    pub initial_level: Option<u32>,
    pub bomb_limit: Option<u32>,
    pub max_steps: Option<u32>,
    pub target_bonus: Option<f64>,
    pub completion_bonus: Option<f64>,
    pub step_cost: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::invalid(format!("config: {}", e.message())))
    }

    /// Command-line flags win over file keys.
    pub fn merge_args(mut self, a: &TrainArgs) -> Result<Self, CliError> {
        fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set(&mut self.env, &a.env.env);
        set(&mut self.map, &a.env.map);
        set(&mut self.energy, &a.env.energy);
        set(&mut self.spec, &a.spec);
        set(&mut self.abstraction, &a.abstraction);
        set(&mut self.episodes, &a.episodes);
        set(&mut self.out, &a.out);
        if let Some(p) = &a.placement {
            self.placement = Some(OneOrMany::One(p.clone()));
        }
        if let Some(p) = &a.algorithm {
            self.algorithm = Some(OneOrMany::One(p.clone()));
        }
        if let Some(s) = &a.seeds {
            let seeds: Result<Vec<u64>, _> = s.split(',').map(|x| x.trim().parse()).collect();
            self.seeds = Some(seeds.map_err(|_| CliError::invalid(format!("seeds: cannot parse {s:?}")))?);
        }
        Ok(self)
    }

    fn env_args(&self) -> EnvArgs {
        EnvArgs { env: self.env.clone(), map: self.map.clone(), energy: self.energy.clone() }
    }

    /// Checks every key and reports all problems at once.
    pub fn resolve(&self) -> Result<ResolvedExperiment, CliError> {
        let mut errs = Vec::new();
        let env = match resolve_env(&self.env_args(), self, &mut errs) {
            Some(e) => Some(e),
            None => {
                if errs.is_empty() {
                    errs.push("env: required".into());
                }
                None
            }
        };

        let placements = self.placement.as_ref().map_or(vec!["preemptive".to_string()], |p| p.items());
        let mut parsed_placements = Vec::new();
        for p in &placements {
            match p.as_str() {
                "none" => parsed_placements.push(None),
                other => match parse_placement(other) {
                    Some(pl) => parsed_placements.push(Some(pl)),
                    None => errs.push(format!("placement: unknown {other:?} (none, preemptive, postposed)")),
                },
            }
        }
        if !parsed_placements.is_empty()
            && parsed_placements.iter().all(Option::is_none)
            && (self.spec.is_some() || self.abstraction.is_some())
        {
            errs.push("placement = none forbids spec and abstraction".into());
        }
        if self.spec.is_some() != self.abstraction.is_some() {
            errs.push("spec and abstraction must be given together".into());
        }
        for (key, path) in [("spec", &self.spec), ("abstraction", &self.abstraction)] {
            if let Some(p) = path {
                if !p.is_file() {
                    errs.push(format!("{key}: {} does not exist", p.display()));
                }
            }
        }

        let mut algorithms = Vec::new();
        for a in self.algorithm.as_ref().map_or(vec!["q".to_string()], |a| a.items()) {
            match a.to_ascii_lowercase().as_str() {
                "q" => algorithms.push(Algorithm::Q),
                "sarsa" => algorithms.push(Algorithm::Sarsa),
                other => errs.push(format!("algorithm: unknown {other:?} (q, sarsa)")),
            }
        }

        let episodes = self.episodes.unwrap_or(1000);
        let seeds = self.seeds.clone().unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            errs.push("seeds: at least one seed is required".into());
        }
        let mut dedup = seeds.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if dedup.len() != seeds.len() {
            errs.push("seeds: duplicates".into());
        }
        if self.jobs == Some(0) {
            errs.push("jobs: must be at least 1".into());
        }
        let out = self.out.clone();
        if out.is_none() {
            errs.push("out: required".into());
        }

        let is_tank = matches!(env, Some(EnvChoice::Tank(_)));
        let learner = self.learner_config(is_tank, episodes, &mut errs);
        if let Err(LearnError::Config(e)) = learner.validate() {
            errs.extend(e);
        }

        if !errs.is_empty() {
            return Err(CliError::Validation(errs));
        }
        let variants = parsed_placements
            .iter()
            .flat_map(|&p| algorithms.iter().map(move |&a| Variant { placement: p, algorithm: a }))
            .collect();
        Ok(ResolvedExperiment {
            env: env.expect("checked"),
            spec: self.spec.clone(),
            abstraction: self.abstraction.clone(),
            variants,
            learner,
            seeds,
            episodes,
            out: out.expect("checked"),
            jobs: self.jobs,
        })
    }

    fn learner_config(&self, is_tank: bool, episodes: usize, errs: &mut Vec<String>) -> LearnerConfig {
        let d = LearnerConfig::default();
        let epsilon = match (self.epsilon_scale, self.epsilon, self.epsilon_end) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                errs.push("epsilon_scale excludes epsilon and epsilon_end".into());
                d.epsilon
            }
            (Some(scale), None, None) => EpsilonSchedule::PerState { scale },
            (None, start, Some(end)) => EpsilonSchedule::Linear {
                start: start.unwrap_or(1.0),
                end,
                episodes: self.epsilon_episodes.unwrap_or(episodes),
            },
            (None, Some(e), None) => EpsilonSchedule::Constant(e),
            // grids explore at a constant rate, the tank decays linearly
            (None, None, None) if is_tank => EpsilonSchedule::Linear {
                start: 0.1,
                end: 0.0,
                episodes: self.epsilon_episodes.unwrap_or(episodes / 2),
            },
            (None, None, None) => EpsilonSchedule::Constant(0.1),
        };
        let reward_variant = match self.reward_variant.as_deref() {
            None | Some("punish") => RewardVariant::Punish(self.punishment.unwrap_or(-10.0)),
            Some("passthrough") => {
                if self.punishment.is_some() {
                    errs.push("punishment only applies to reward_variant = punish".into());
                }
                RewardVariant::Passthrough
            }
            Some(other) => {
                errs.push(format!("reward_variant: unknown {other:?} (punish, passthrough)"));
                d.reward_variant
            }
        };
        let tie_break = match self.tie_break.as_deref() {
            None | Some("lowest") => TieBreak::LowestIndex,
            Some("random") => TieBreak::Random,
            Some(other) => {
                errs.push(format!("tie_break: unknown {other:?} (lowest, random)"));
                TieBreak::LowestIndex
            }
        };
        let observation = match self.observation.as_deref() {
            None | Some("joint") => ObservationMode::Joint,
            Some("env_only") => ObservationMode::EnvOnly,
            Some(other) => {
                errs.push(format!("observation: unknown {other:?} (joint, env_only)"));
                ObservationMode::Joint
            }
        };
        LearnerConfig {
            algorithm: Algorithm::Q,
            alpha: self.alpha.unwrap_or(d.alpha),
            alpha_decay: self.alpha_decay.unwrap_or(d.alpha_decay),
            gamma: self.gamma.unwrap_or(d.gamma),
            epsilon,
            rank_width: self.rank_width.unwrap_or(d.rank_width),
            reward_variant,
            seed: 0,
            tie_break,
            observation,
            initial_value: self.initial_value.unwrap_or(d.initial_value),
            record_steps: false,
        }
    }
}

pub(crate) fn parse_placement(s: &str) -> Option<Placement> {
    match s {
        "preemptive" => Some(Placement::Preemptive),
        "postposed" => Some(Placement::Postposed),
        _ => None,
    }
}

/// A built-in environment with its settings.
#[derive(Debug, Clone)]
pub enum EnvChoice {
    Tank(TankConfig),
    Grid { name: String, map: GridMap, config: GridConfig },
}

impl EnvChoice {
    pub fn name(&self) -> &str {
        match self {
            EnvChoice::Tank(_) => "tank",
            EnvChoice::Grid { name, .. } => name,
        }
    }

    pub fn make(&self) -> Box<dyn Environment + Send> {
        match self {
            EnvChoice::Tank(c) => Box::new(WaterTank::new(c.clone()).expect("validated")),
            EnvChoice::Grid { map, config, .. } => Box::new(GridWorld::new(map.clone(), config.clone())),
        }
    }

    pub fn spec(&self) -> Result<SafetyAutomaton, CliError> {
        let r = match self {
            EnvChoice::Tank(c) => crate::envs::watertank::watertank_spec(c.hold),
            EnvChoice::Grid { map, config, .. } => crate::envs::grid::grid_spec(map, config.bomb_limit),
        };
        r.map_err(|e| CliError::invalid(e.to_string()))
    }

    pub fn abstraction(&self) -> Result<SafetyAutomaton, CliError> {
        let r = match self {
            EnvChoice::Tank(c) => crate::envs::watertank::watertank_abstraction(c.initial_level),
            EnvChoice::Grid { map, .. } => crate::envs::grid::grid_abstraction(map),
        };
        r.map_err(|e| CliError::invalid(e.to_string()))
    }
}

/// Builds the environment selected by `args`, taking dynamics overrides
/// from `cfg`. Problems are appended to `errs`.
pub(crate) fn resolve_env(
    args: &EnvArgs,
    cfg: &ExperimentConfig,
    errs: &mut Vec<String>,
) -> Option<EnvChoice> {
    let name = args.env.as_deref()?;
    match name {
        "tank" => {
            if args.map.is_some() {
                errs.push("map: not used by the tank".into());
            }
            let mut c = TankConfig::default();
            if let Some(p) = &args.energy {
                match EnergyTable::load(p) {
                    Ok(t) => c.energy = t,
                    Err(e) => errs.push(format!("energy: {}: {e}", p.display())),
                }
            }
            for (key, v) in [("bomb_limit", cfg.bomb_limit), ("max_steps", cfg.max_steps)] {
                if v.is_some() {
                    errs.push(format!("{key}: not used by the tank"));
                }
            }
            c.penalty = cfg.penalty.unwrap_or(c.penalty);
            c.horizon = cfg.horizon.unwrap_or(c.horizon);
            c.hold = cfg.hold.unwrap_or(c.hold);
            c.initial_level = cfg.initial_level.unwrap_or(c.initial_level);
            if let Err(e) = c.validate() {
                errs.push(e.to_string());
                return None;
            }
            Some(EnvChoice::Tank(c))
        }
        "grid9x9" | "grid15x9" | "grid" => {
            if args.energy.is_some() {
                errs.push("energy: only used by the tank".into());
            }
            for (key, v) in
                [("horizon", cfg.horizon), ("hold", cfg.hold), ("initial_level", cfg.initial_level)]
            {
                if v.is_some() {
                    errs.push(format!("{key}: only used by the tank"));
                }
            }
            let map = match (name, &args.map) {
                ("grid", Some(p)) => match GridMap::load(p) {
                    Ok(m) => m,
                    Err(e) => {
                        errs.push(format!("map: {}: {e}", p.display()));
                        return None;
                    }
                },
                ("grid", None) => {
                    errs.push("map: required for env = grid".into());
                    return None;
                }
                (_, Some(_)) => {
                    errs.push(format!("map: {name} has a built-in map; use env = grid"));
                    return None;
                }
                ("grid9x9", None) => GridMap::default_9x9(),
                _ => GridMap::default_15x9(),
            };
            let d = GridConfig::default();
            let config = GridConfig {
                target_bonus: cfg.target_bonus.unwrap_or(d.target_bonus),
                completion_bonus: cfg.completion_bonus.unwrap_or(d.completion_bonus),
                penalty: cfg.penalty.unwrap_or(d.penalty),
                step_cost: cfg.step_cost.unwrap_or(d.step_cost),
                max_steps: cfg.max_steps.unwrap_or(d.max_steps),
                bomb_limit: cfg.bomb_limit.unwrap_or(d.bomb_limit),
            };
            if config.max_steps == 0 {
                errs.push("max_steps: must be at least 1".into());
            }
            Some(EnvChoice::Grid { name: name.to_string(), map, config })
        }
        other => {
            errs.push(format!("env: unknown {other:?} (tank, grid9x9, grid15x9, grid)"));
            None
        }
    }
}

/// One learning curve: a shield placement (or none) and an algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub placement: Option<Placement>,
    pub algorithm: Algorithm,
}

impl Variant {
    pub fn dir_name(&self) -> String {
        let p = match self.placement {
            None => "none",
            Some(Placement::Preemptive) => "preemptive",
            Some(Placement::Postposed) => "postposed",
        };
        let a = match self.algorithm {
            Algorithm::Q => "q",
            Algorithm::Sarsa => "sarsa",
        };
        format!("{p}-{a}")
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub env: EnvChoice,
    pub spec: Option<PathBuf>,
    pub abstraction: Option<PathBuf>,
    pub variants: Vec<Variant>,
    /// Shared settings; algorithm and seed are filled in per run.
    pub learner: LearnerConfig,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub out: PathBuf,
    pub jobs: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_every_problem() {
        let cfg = ExperimentConfig::parse(
            r#"
            env = "tank"
            map = "nowhere.txt"
            placement = "sideways"
            algorithm = ["q", "td"]
            alpha = 0.0
            bomb_limit = 3
            "#,
        )
        .unwrap();
        match cfg.resolve() {
            Err(CliError::Validation(errs)) => {
                let joined = errs.join("\n");
                for key in ["map", "placement", "algorithm", "alpha", "bomb_limit", "out"] {
                    assert!(joined.contains(key), "missing {key} in {joined}");
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::parse("learning_rate = 0.1").is_err());
    }

    #[test]
    fn none_placement_forbids_shield_inputs() {
        let cfg = ExperimentConfig {
            env: Some("grid9x9".into()),
            placement: Some(OneOrMany::One("none".into())),
            spec: Some("a.json".into()),
            abstraction: Some("b.json".into()),
            out: Some("o".into()),
            ..Default::default()
        };
        let Err(CliError::Validation(errs)) = cfg.resolve() else { panic!() };
        assert!(errs.iter().any(|e| e.contains("forbids")));
    }

    #[test]
    fn variants_are_the_cartesian_product() {
        let cfg = ExperimentConfig::parse(
            r#"
            env = "tank"
            placement = ["none", "preemptive"]
            algorithm = "q,sarsa"
            seeds = [1, 2]
            out = "x"
            "#,
        )
        .unwrap();
        let r = cfg.resolve().unwrap();
        let names: Vec<_> = r.variants.iter().map(Variant::dir_name).collect();
        assert_eq!(names, ["none-q", "none-sarsa", "preemptive-q", "preemptive-sarsa"]);
        assert!(matches!(r.learner.epsilon, EpsilonSchedule::Linear { .. }));
    }
}
