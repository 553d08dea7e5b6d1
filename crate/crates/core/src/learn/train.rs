//! Training loops and run logs.

use std::collections::HashMap;
use std::fmt::Write as _;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    select_ranking, Algorithm, EnvView, EpsilonSchedule, LearnError, LearnerConfig, ObsKey, ObservationMode,
    RewardVariant, ValueTable,
};
use crate::automata::{ActionId, LabelId};
use crate::envs::Environment;
use crate::shield::{Shield, ShieldState};

/// How the learner is coupled to a shield.
#[derive(Copy, Clone, Debug)]
pub enum Shielding<'a> {
    None,
    /// The learner chooses from the shield's menu.
    Preemptive(&'a Shield),
    /// The learner ranks actions and the shield corrects unsafe choices.
    Postposed(&'a Shield),
}

impl<'a> Shielding<'a> {
    fn shield(&self) -> Option<&'a Shield> {
        match *self {
            Shielding::None => None,
            Shielding::Preemptive(s) | Shielding::Postposed(s) => Some(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub accumulated_reward: f64,
    pub violations: u32,
    pub interventions: u32,
    pub steps: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub episode: usize,
    pub time: u32,
    pub observation: u64,
    pub shield_state: u32,
    pub label: LabelId,
    /// Actions the learner could choose from.
    pub available: Vec<ActionId>,
    pub ranking: Vec<ActionId>,
    pub executed: ActionId,
    pub overridden: bool,
    pub reward: f64,
    /// Interventions so far in this episode, including this step.
    pub interventions: u32,
    pub violation: bool,
    /// Table writes caused by this step.
    pub updates: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunLog {
    pub episodes: Vec<EpisodeRecord>,
    pub steps: Vec<StepRecord>,
}

impl RunLog {
    pub fn total_violations(&self) -> u64 {
        self.episodes.iter().map(|e| e.violations as u64).sum()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.accumulated_reward).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,accumulated_reward,violations,interventions,steps\n");
        for e in &self.episodes {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.episode, e.accumulated_reward, e.violations, e.interventions, e.steps
            );
        }
        out
    }

    /// Reads the episode table written by [`RunLog::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty run log")?;
        if header.trim() != "episode,accumulated_reward,violations,interventions,steps" {
            return Err(format!("unexpected header {header:?}"));
        }
        let mut episodes = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("line {}: {line:?}", i + 2);
            if f.len() != 5 {
                return Err(bad());
            }
            episodes.push(EpisodeRecord {
                episode: f[0].parse().map_err(|_| bad())?,
                accumulated_reward: f[1].parse().map_err(|_| bad())?,
                violations: f[2].parse().map_err(|_| bad())?,
                interventions: f[3].parse().map_err(|_| bad())?,
                steps: f[4].parse().map_err(|_| bad())?,
            });
        }
        Ok(Self { episodes, steps: Vec::new() })
    }
}

/// Per-episode mean and standard error of accumulated reward over runs,
/// plus total violations. Runs shorter than the longest are skipped past
/// their end.
pub fn aggregate_csv(logs: &[RunLog]) -> String {
    let mut out = String::from("episode,mean_reward,stderr,runs,violations\n");
    let longest = logs.iter().map(|l| l.episodes.len()).max().unwrap_or(0);
    for i in 0..longest {
        let eps: Vec<&EpisodeRecord> = logs.iter().filter_map(|l| l.episodes.get(i)).collect();
        let n = eps.len() as f64;
        let mean = eps.iter().map(|e| e.accumulated_reward).sum::<f64>() / n;
        let stderr = if eps.len() > 1 {
            let var = eps.iter().map(|e| (e.accumulated_reward - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        let violations: u32 = eps.iter().map(|e| e.violations).sum();
        let _ = writeln!(out, "{i},{mean},{stderr},{},{violations}", eps.len());
    }
    out
}

/// A pending table write whose SARSA bootstrap needs the next action.
struct Pending {
    obs: ObsKey,
    action: ActionId,
    reward: f64,
}

/// Owns one learner, its table and random streams.
///
/// The environment stream is seeded from `config.seed` on stream 0 and the
/// learner's exploration on stream 1, so shielding never perturbs the
/// environment's randomness.
pub struct Trainer<'a> {
    env: &'a mut dyn Environment,
    shielding: Shielding<'a>,
    config: LearnerConfig,
    table: ValueTable,
    visits: HashMap<(ObsKey, ActionId), u32>,
    obs_visits: HashMap<ObsKey, u32>,
    env_rng: ChaCha8Rng,
    rng: ChaCha8Rng,
    episode: usize,
    log: RunLog,
}

impl<'a> Trainer<'a> {
    /// Environment-only observations are accepted when the shield has a
    /// single non-paradise state; otherwise use [`Trainer::with_env_view`].
    pub fn new(
        env: &'a mut dyn Environment,
        shielding: Shielding<'a>,
        config: LearnerConfig,
    ) -> Result<Self, LearnError> {
        let view = shielding.shield().and_then(EnvView::single_state);
        Self::build(env, shielding, config, view)
    }

    /// Like [`Trainer::new`], with a certificate for environment-only
    /// observations. The certificate must be for the same shield.
    pub fn with_env_view(
        env: &'a mut dyn Environment,
        shielding: Shielding<'a>,
        config: LearnerConfig,
        view: EnvView<'a>,
    ) -> Result<Self, LearnError> {
        Self::build(env, shielding, config, Some(view))
    }

    fn build(
        env: &'a mut dyn Environment,
        shielding: Shielding<'a>,
        config: LearnerConfig,
        view: Option<EnvView<'a>>,
    ) -> Result<Self, LearnError> {
        config.validate()?;
        if let Some(sh) = shielding.shield() {
            if sh.actions() != env.actions() || sh.labels() != env.labels() {
                return Err(LearnError::Shield(crate::shield::ShieldError::Mismatch(
                    "shield and environment alphabets differ".into(),
                )));
            }
            let certified = view.is_some_and(|v| std::ptr::eq(v.shield, sh));
            if config.observation == ObservationMode::EnvOnly && !certified {
                return Err(LearnError::EnvViewUnavailable);
            }
        }
        let env_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let table = ValueTable::new(env.actions().len(), config.initial_value);
        Ok(Self {
            env,
            shielding,
            config,
            table,
            visits: HashMap::new(),
            obs_visits: HashMap::new(),
            env_rng,
            rng,
            episode: 0,
            log: RunLog::default(),
        })
    }

    pub fn table(&self) -> &ValueTable {
        &self.table
    }

    /// Replaces the value table, for example with one trained elsewhere.
    pub fn set_table(&mut self, table: ValueTable) -> Result<(), LearnError> {
        if table.num_actions() != self.env.actions().len() {
            return Err(LearnError::Config(vec![format!(
                "table has {} actions, environment has {}",
                table.num_actions(),
                self.env.actions().len()
            )]));
        }
        self.table = table;
        Ok(())
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn into_parts(self) -> (RunLog, ValueTable) {
        (self.log, self.table)
    }

    fn key(&self, s: ShieldState) -> ObsKey {
        let q = match (self.shielding, self.config.observation) {
            (Shielding::None, _) | (_, ObservationMode::EnvOnly) => 0,
            _ => s,
        };
        (self.env.observation(), q)
    }

    fn available(&self, s: ShieldState, l: LabelId) -> Vec<ActionId> {
        match self.shielding {
            Shielding::Preemptive(sh) => sh.menu(s, l),
            _ => self.env.actions().actions().collect(),
        }
    }

    /// Actions the Q target maximizes over in a successor.
    fn bootstrap_set(&self, s: ShieldState, l: LabelId) -> Option<Vec<ActionId>> {
        match self.shielding {
            Shielding::Preemptive(sh) => Some(sh.menu(s, l)),
            _ => None,
        }
    }

    fn rank_width(&self) -> usize {
        match self.shielding {
            Shielding::Postposed(_) => self.config.rank_width,
            _ => 1,
        }
    }

    fn step_size(&mut self, obs: ObsKey, a: ActionId) -> f64 {
        if self.config.alpha_decay == 0.0 {
            return self.config.alpha;
        }
        let n = self.visits.entry((obs, a)).or_insert(0);
        *n += 1;
        self.config.alpha / f64::from(*n).powf(self.config.alpha_decay)
    }

    fn epsilon(&mut self, obs: ObsKey) -> f64 {
        let n = match self.config.epsilon {
            EpsilonSchedule::PerState { .. } => {
                let n = self.obs_visits.entry(obs).or_insert(0);
                *n += 1;
                *n
            }
            _ => 1,
        };
        self.config.epsilon.at(self.episode, n)
    }

    pub fn run(&mut self, episodes: usize) -> Result<(), LearnError> {
        for _ in 0..episodes {
            self.run_episode()?;
        }
        Ok(())
    }

    pub fn run_episode(&mut self) -> Result<&EpisodeRecord, LearnError> {
        let cfg = self.config.clone();
        let shield = self.shielding.shield();
        self.env.reset(&mut self.env_rng);
        let mut s = shield.map_or(0, |sh| sh.initial());
        let mut record = EpisodeRecord {
            episode: self.episode,
            accumulated_reward: 0.0,
            violations: 0,
            interventions: 0,
            steps: 0,
        };
        let mut pending: Vec<Pending> = Vec::new();
        let mut warned = false;
        let mut obs = self.key(s);
        let mut label = self.env.label();
        let mut available = self.available(s, label);
        let eps = self.epsilon(obs);
        let mut ranking = select_ranking(
            &self.table,
            obs,
            &available,
            eps,
            self.rank_width(),
            cfg.tie_break,
            &mut self.rng,
        );
        loop {
            let (action, next_s, unsafe_ranked, intervened, overridden) = match self.shielding {
                Shielding::None => (ranking.first(), 0, 0, false, false),
                Shielding::Preemptive(sh) => {
                    let a = ranking.first();
                    let next = sh.advance(s, label, a).map_err(|_| LearnError::OutsideMenu(a))?;
                    let restricted = available.len() < self.env.actions().len();
                    (a, next, 0, restricted, false)
                }
                Shielding::Postposed(sh) => {
                    let out = sh.postposed_step(s, label, &ranking);
                    let unsafe_ranked = out.rank.unwrap_or(ranking.len());
                    (out.action, out.next, unsafe_ranked, out.overridden, out.overridden)
                }
            };
            let outcome = self.env.step(action, &mut self.env_rng);
            let r = outcome.reward;
            record.accumulated_reward += r;
            record.steps += 1;
            record.violations += u32::from(outcome.violation);
            record.interventions += u32::from(intervened);
            if let Some(sh) = shield {
                if sh.is_paradise(next_s) && !warned {
                    warn!("episode {}: abstraction violated, shield entered paradise", self.episode);
                    warned = true;
                }
            }

            let mut writes = vec![Pending { obs, action, reward: r }];
            for &u in &ranking.as_slice()[..unsafe_ranked] {
                let ru = match cfg.reward_variant {
                    RewardVariant::Punish(p) => p,
                    RewardVariant::Passthrough => r,
                };
                writes.push(Pending { obs, action: u, reward: ru });
            }
            let updates = writes.len() as u32;

            if cfg.record_steps {
                self.log.steps.push(StepRecord {
                    episode: self.episode,
                    time: record.steps - 1,
                    observation: obs.0,
                    shield_state: s,
                    label,
                    available: available.clone(),
                    ranking: ranking.as_slice().to_vec(),
                    executed: action,
                    overridden,
                    reward: r,
                    interventions: record.interventions,
                    violation: outcome.violation,
                    updates,
                });
            }

            s = next_s;
            let next_obs = self.key(s);
            if outcome.terminal {
                for w in pending.drain(..).chain(writes) {
                    let alpha = self.step_size(w.obs, w.action);
                    self.table.q_update(w.obs, w.action, w.reward, None, alpha, cfg.gamma);
                }
                break;
            }
            label = self.env.label();
            available = self.available(s, label);
            match cfg.algorithm {
                Algorithm::Q => {
                    let boot = self.bootstrap_set(s, label);
                    for w in writes {
                        let alpha = self.step_size(w.obs, w.action);
                        self.table.q_update(
                            w.obs,
                            w.action,
                            w.reward,
                            Some((next_obs, boot.as_deref())),
                            alpha,
                            cfg.gamma,
                        );
                    }
                }
                Algorithm::Sarsa => pending = writes,
            }
            // Choose the next action before the SARSA writes land, so the
            // bootstrap uses the action that will actually be executed.
            let eps = self.epsilon(next_obs);
            ranking = select_ranking(
                &self.table,
                next_obs,
                &available,
                eps,
                self.rank_width(),
                cfg.tie_break,
                &mut self.rng,
            );
            if cfg.algorithm == Algorithm::Sarsa {
                let a_next = match self.shielding {
                    Shielding::Postposed(sh) => sh.postposed_step(s, label, &ranking).action,
                    _ => ranking.first(),
                };
                for w in pending.drain(..) {
                    let alpha = self.step_size(w.obs, w.action);
                    self.table.sarsa_update(
                        w.obs,
                        w.action,
                        w.reward,
                        Some((next_obs, a_next)),
                        alpha,
                        cfg.gamma,
                    );
                }
            }
            obs = next_obs;
            if outcome.truncated {
                break;
            }
        }
        self.log.episodes.push(record);
        self.episode += 1;
        Ok(self.log.episodes.last().expect("just pushed"))
    }
}

pub fn train_preemptive(
    env: &mut dyn Environment,
    shield: &Shield,
    config: &LearnerConfig,
    episodes: usize,
) -> Result<(RunLog, ValueTable), LearnError> {
    let mut t = Trainer::new(env, Shielding::Preemptive(shield), config.clone())?;
    t.run(episodes)?;
    Ok(t.into_parts())
}

pub fn train_postposed(
    env: &mut dyn Environment,
    shield: &Shield,
    config: &LearnerConfig,
    episodes: usize,
) -> Result<(RunLog, ValueTable), LearnError> {
    let mut t = Trainer::new(env, Shielding::Postposed(shield), config.clone())?;
    t.run(episodes)?;
    Ok(t.into_parts())
}

pub fn train_unshielded(
    env: &mut dyn Environment,
    config: &LearnerConfig,
    episodes: usize,
) -> Result<(RunLog, ValueTable), LearnError> {
    let mut t = Trainer::new(env, Shielding::None, config.clone())?;
    t.run(episodes)?;
    Ok(t.into_parts())
}
