//! Experiment driver: online collection, offline epoch training, seeded
//! evaluation and CSV reports.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::agents::{cvar, AgentConfig, Algo, EpsilonSchedule, QAgent};
use crate::env::{Environment, Step};
use crate::error::{Error, Result};
use crate::replay::{extract_offline, DatasetSource, OfflineDataset, ReplayBuffer, Transition};
use crate::rng::{
    derive_seed, Streams, STREAM_BATCH, STREAM_ENV_EVAL, STREAM_ENV_TRAIN, STREAM_EXPLORE,
    STREAM_INIT, STREAM_TOPOLOGY,
};
use crate::rrm::{rscore, BaselineKind, RrmConfig, RrmEnv};
use crate::uav::{UavConfig, UavEnv};

/// Reported UAV returns are divided by this.
pub const UAV_RETURN_NORMALIZER: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvConfig {
    Uav(UavConfig),
    Rrm(RrmConfig),
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Uav(_) => "uav",
            EnvConfig::Rrm(_) => "rrm",
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            EnvConfig::Uav(c) => c.obs_dim(),
            EnvConfig::Rrm(c) => c.obs_dim(),
        }
    }

    pub fn action_count(&self) -> usize {
        match self {
            EnvConfig::Uav(c) => c.action_count(),
            EnvConfig::Rrm(c) => c.action_count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Online,
    Offline,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Mode::Online),
            "offline" => Ok(Mode::Offline),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode `{s}` (expected online or offline)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub mode: Mode,
    pub train_episodes: usize,
    pub offline_epochs: usize,
    /// Gradient steps per offline epoch; `None` means dataset size / batch size.
    pub steps_per_epoch: Option<usize>,
    pub eval_episodes: usize,
    /// Epochs (offline) or episodes (online) between evaluations; 0 keeps only
    /// the first and last rows.
    pub eval_every: usize,
    pub master_seed: u64,
    pub replay_capacity: usize,
    pub dataset_fraction: f64,
    /// Environment steps per online gradient step.
    pub train_every: usize,
    /// Fraction of online episodes over which epsilon decays.
    pub epsilon_decay_fraction: f64,
}

impl ExperimentConfig {
    pub fn uav(algo: Algo) -> Self {
        Self {
            env: EnvConfig::Uav(UavConfig::default()),
            agent: AgentConfig::for_algo(algo),
            mode: Mode::Offline,
            train_episodes: 100,
            offline_epochs: 100,
            steps_per_epoch: None,
            eval_episodes: 100,
            eval_every: 1,
            master_seed: 0,
            replay_capacity: 30_000,
            dataset_fraction: 0.1,
            train_every: 1,
            epsilon_decay_fraction: 0.8,
        }
    }

    pub fn rrm(algo: Algo) -> Self {
        Self {
            env: EnvConfig::Rrm(RrmConfig::default()),
            train_episodes: 1500,
            replay_capacity: 300_000,
            ..Self::uav(algo)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        match &self.env {
            EnvConfig::Uav(c) if !c.device_positions.is_empty() => c.validate()?,
            EnvConfig::Uav(_) => {}
            EnvConfig::Rrm(c) => c.validate()?,
        }
        if self.replay_capacity == 0 || self.train_every == 0 {
            return Err(Error::InvalidArgument(
                "replay_capacity and train_every must be positive".into(),
            ));
        }
        if !(self.dataset_fraction > 0.0 && self.dataset_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "dataset_fraction {} outside (0, 1]",
                self.dataset_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return Err(Error::InvalidArgument(
                "epsilon_decay_fraction outside [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Fills experiment-level randomness: UAV device cells come from the
    /// topology stream unless given explicitly.
    pub fn resolved(&self) -> Result<Self> {
        self.validate()?;
        let mut out = self.clone();
        if let EnvConfig::Uav(c) = &mut out.env {
            if c.device_positions.is_empty() {
                c.place_devices(derive_seed(self.master_seed, STREAM_TOPOLOGY, 0));
            }
            c.validate()?;
        }
        Ok(out)
    }

    /// The schedule actually used online: an explicit `decay_episodes` wins,
    /// otherwise the decay spans `epsilon_decay_fraction` of the episodes.
    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        let mut e = self.agent.epsilon;
        if e.decay_episodes == 0 {
            e.decay_episodes =
                (self.epsilon_decay_fraction * self.train_episodes as f64).round() as usize;
        }
        e
    }
}

/// Both environments behind one type.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Uav(UavEnv),
    Rrm(RrmEnv),
}

impl AnyEnv {
    pub fn new(cfg: &EnvConfig) -> Result<Self> {
        Ok(match cfg {
            EnvConfig::Uav(c) => AnyEnv::Uav(UavEnv::new(c.clone())?),
            EnvConfig::Rrm(c) => AnyEnv::Rrm(RrmEnv::new(c.clone())?),
        })
    }
}

impl Environment for AnyEnv {
    fn name(&self) -> &'static str {
        match self {
            AnyEnv::Uav(e) => e.name(),
            AnyEnv::Rrm(e) => e.name(),
        }
    }

    fn obs_dim(&self) -> usize {
        match self {
            AnyEnv::Uav(e) => e.obs_dim(),
            AnyEnv::Rrm(e) => e.obs_dim(),
        }
    }

    fn action_count(&self) -> usize {
        match self {
            AnyEnv::Uav(e) => e.action_count(),
            AnyEnv::Rrm(e) => e.action_count(),
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        match self {
            AnyEnv::Uav(e) => e.reset(seed),
            AnyEnv::Rrm(e) => e.reset(seed),
        }
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        match self {
            AnyEnv::Uav(e) => e.step(action),
            AnyEnv::Rrm(e) => e.step(action),
        }
    }
}

/// Per-step action source used by evaluation.
#[derive(Clone, Copy)]
pub enum Policy<'a> {
    Greedy(&'a QAgent),
    /// A non-learned RRM scheduler.
    Baseline(BaselineKind),
    /// Any function of (observation, step index).
    Scripted(&'a (dyn Fn(&[f64], usize) -> usize + Sync)),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub epoch: usize,
    pub mean_return: f64,
    pub violation_pct: Option<f64>,
    pub rscore: Option<f64>,
    pub cvar10: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn last(&self) -> Option<&EvalRow> {
        self.rows.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct EpisodeResult {
    ret: f64,
    risk_steps: usize,
    steps: usize,
    rscore: Option<f64>,
}

fn eval_threads() -> usize {
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var("CQRLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or(hw)
}

#[derive(Debug)]
pub struct OnlineRun {
    pub agent: QAgent,
    pub buffer: ReplayBuffer,
    pub report: EvalReport,
}

#[derive(Debug)]
pub struct OfflineRun {
    pub agent: QAgent,
    pub report: EvalReport,
    /// Environment steps taken outside evaluation (zero by contract).
    pub training_env_steps: u64,
    /// Random streams opened by the training loop itself.
    pub training_streams: BTreeSet<String>,
}

/// One resolved experiment. Tracks every environment step it takes so the
/// offline contract can be checked.
#[derive(Debug)]
pub struct Session {
    cfg: ExperimentConfig,
    env_steps: AtomicU64,
    eval_steps: AtomicU64,
}

impl Session {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            cfg: cfg.resolved()?,
            env_steps: AtomicU64::new(0),
            eval_steps: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps.load(Ordering::Relaxed)
    }

    pub fn eval_steps(&self) -> u64 {
        self.eval_steps.load(Ordering::Relaxed)
    }

    fn new_agent(&self, streams: &Streams) -> Result<QAgent> {
        let mut init = streams.rng(STREAM_INIT, 0);
        QAgent::new(
            self.cfg.agent.clone(),
            self.cfg.env.obs_dim(),
            self.cfg.env.action_count(),
            &mut init,
        )
    }

    fn should_eval(&self, epoch: usize, last: usize) -> bool {
        epoch == last || (self.cfg.eval_every > 0 && epoch.is_multiple_of(self.cfg.eval_every))
    }

    /// Epsilon-greedy rollouts with replay; one gradient step every
    /// `train_every` environment steps once the buffer holds a batch.
    pub fn train_online(&self) -> Result<OnlineRun> {
        let cfg = &self.cfg;
        let streams = Streams::new(cfg.master_seed);
        let mut agent = self.new_agent(&streams)?;
        let mut explore = streams.rng(STREAM_EXPLORE, 0);
        let mut batch_rng = streams.rng(STREAM_BATCH, 0);
        let mut buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.env.obs_dim())?;
        let mut env = AnyEnv::new(&cfg.env)?;
        let schedule = cfg.epsilon_schedule();
        let mut report = EvalReport::default();
        report.rows.push(self.evaluate(Policy::Greedy(&agent), 0)?);

        let mut total_steps = 0u64;
        for ep in 0..cfg.train_episodes {
            let mut obs = env.reset(streams.seed(STREAM_ENV_TRAIN, ep as u64));
            let eps = schedule.value(ep);
            loop {
                let action = agent.select_action(&obs, eps, &mut explore)?;
                let step = env.step(action)?;
                self.env_steps.fetch_add(1, Ordering::Relaxed);
                total_steps += 1;
                buffer.push(Transition {
                    state: std::mem::replace(&mut obs, step.obs.clone()),
                    action,
                    reward: step.reward,
                    next_state: step.obs,
                    done: step.done,
                })?;
                if buffer.len() >= cfg.agent.batch_size
                    && total_steps.is_multiple_of(cfg.train_every as u64)
                {
                    let batch = buffer.sample(cfg.agent.batch_size, &mut batch_rng)?;
                    agent.train_step(&batch)?;
                }
                if step.done {
                    break;
                }
            }
            if self.should_eval(ep + 1, cfg.train_episodes) {
                report
                    .rows
                    .push(self.evaluate(Policy::Greedy(&agent), ep + 1)?);
            }
        }
        log::info!(
            "online {}: {} episodes, {} env steps, {} gradient steps",
            cfg.agent.algo,
            cfg.train_episodes,
            total_steps,
            agent.steps()
        );
        Ok(OnlineRun {
            agent,
            buffer,
            report,
        })
    }

    /// Extracts the offline dataset from an online run's buffer.
    pub fn extract(&self, run: &OnlineRun) -> Result<OfflineDataset> {
        extract_offline(
            &run.buffer,
            self.cfg.dataset_fraction,
            DatasetSource {
                env_name: self.cfg.env.name().to_string(),
                action_count: self.cfg.env.action_count(),
                behavioral_policy_tag: format!("{}-online", self.cfg.agent.algo),
                source_seed: self.cfg.master_seed,
            },
        )
    }

    /// Epoch-based training on a static dataset. The environment is only
    /// stepped inside evaluation.
    pub fn train_offline(&self, dataset: &OfflineDataset) -> Result<OfflineRun> {
        let cfg = &self.cfg;
        dataset.expect_env(cfg.env.name())?;
        if dataset.header.obs_dim != cfg.env.obs_dim() {
            return Err(Error::dim(
                "dataset obs_dim",
                cfg.env.obs_dim(),
                dataset.header.obs_dim,
            ));
        }
        if dataset.header.action_count != cfg.env.action_count() {
            return Err(Error::dim(
                "dataset action_count",
                cfg.env.action_count(),
                dataset.header.action_count,
            ));
        }
        if dataset.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let steps_before = self.env_steps();
        let eval_before = self.eval_steps();
        let streams = Streams::new(cfg.master_seed);
        let mut agent = self.new_agent(&streams)?;
        let mut batch_rng = streams.rng(STREAM_BATCH, 0);
        let steps_per_epoch = cfg
            .steps_per_epoch
            .unwrap_or(dataset.len() / cfg.agent.batch_size)
            .max(1);

        let mut report = EvalReport::default();
        report.rows.push(self.evaluate(Policy::Greedy(&agent), 0)?);
        for epoch in 1..=cfg.offline_epochs {
            let mut loss_sum = 0.0;
            for _ in 0..steps_per_epoch {
                let batch = dataset.sample(cfg.agent.batch_size, &mut batch_rng)?;
                loss_sum += agent.train_step(&batch)?;
            }
            log::debug!(
                "epoch {epoch}: mean loss {:.6}",
                loss_sum / steps_per_epoch as f64
            );
            if self.should_eval(epoch, cfg.offline_epochs) {
                report
                    .rows
                    .push(self.evaluate(Policy::Greedy(&agent), epoch)?);
            }
        }
        let training_env_steps =
            (self.env_steps() - steps_before) - (self.eval_steps() - eval_before);
        Ok(OfflineRun {
            agent,
            report,
            training_env_steps,
            training_streams: streams.opened(),
        })
    }

    /// Greedy evaluation over the shared eval episodes. Episodes may run on
    /// several threads; results are reduced in episode order.
    pub fn evaluate(&self, policy: Policy<'_>, epoch: usize) -> Result<EvalRow> {
        let cfg = &self.cfg;
        if matches!(policy, Policy::Baseline(_)) && !matches!(cfg.env, EnvConfig::Rrm(_)) {
            return Err(Error::InvalidArgument(
                "baseline schedulers exist only for the rrm environment".into(),
            ));
        }
        if let Policy::Greedy(agent) = policy {
            if agent.obs_dim() != cfg.env.obs_dim()
                || agent.action_count() != cfg.env.action_count()
            {
                return Err(Error::dim(
                    "agent action count",
                    cfg.env.action_count(),
                    agent.action_count(),
                ));
            }
        }
        let n = cfg.eval_episodes;
        let workers = eval_threads().min(n.max(1));
        let mut results: Vec<Option<Result<EpisodeResult>>> = (0..n).map(|_| None).collect();
        if workers <= 1 {
            for (i, slot) in results.iter_mut().enumerate() {
                *slot = Some(self.eval_episode(policy, i));
            }
        } else {
            let chunk = n.div_ceil(workers);
            std::thread::scope(|s| {
                for (w, slots) in results.chunks_mut(chunk).enumerate() {
                    s.spawn(move || {
                        for (j, slot) in slots.iter_mut().enumerate() {
                            *slot = Some(self.eval_episode(policy, w * chunk + j));
                        }
                    });
                }
            });
        }
        let episodes = results
            .into_iter()
            .map(|r| r.expect("every episode evaluated"))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.summarize(epoch, &episodes))
    }

    fn eval_episode(&self, policy: Policy<'_>, index: usize) -> Result<EpisodeResult> {
        let mut env = AnyEnv::new(&self.cfg.env)?;
        let mut obs = env.reset(derive_seed(
            self.cfg.master_seed,
            STREAM_ENV_EVAL,
            index as u64,
        ));
        let mut res = EpisodeResult {
            ret: 0.0,
            risk_steps: 0,
            steps: 0,
            rscore: None,
        };
        loop {
            let step = match (policy, &mut env) {
                (Policy::Baseline(kind), AnyEnv::Rrm(rrm)) => {
                    let decision = rrm.baseline_decision(kind);
                    rrm.step_schedule(&decision.served)?
                }
                (Policy::Baseline(_), _) => unreachable!("checked in evaluate"),
                (Policy::Greedy(agent), env) => env.step(agent.greedy_action(&obs)?)?,
                (Policy::Scripted(f), env) => env.step(f(&obs, res.steps))?,
            };
            self.env_steps.fetch_add(1, Ordering::Relaxed);
            self.eval_steps.fetch_add(1, Ordering::Relaxed);
            res.ret += step.reward;
            res.steps += 1;
            if let AnyEnv::Uav(u) = &env {
                if u.last_transition().is_some_and(|t| t.in_risk) {
                    res.risk_steps += 1;
                }
            }
            obs = step.obs;
            if step.done {
                break;
            }
        }
        if let AnyEnv::Rrm(r) = &env {
            res.rscore = Some(rscore(&r.mean_rates(), r.config().rscore_weights)?);
        }
        Ok(res)
    }

    fn summarize(&self, epoch: usize, eps: &[EpisodeResult]) -> EvalRow {
        let is_uav = matches!(self.cfg.env, EnvConfig::Uav(_));
        let norm = if is_uav { UAV_RETURN_NORMALIZER } else { 1.0 };
        let returns: Vec<f64> = eps.iter().map(|e| e.ret / norm).collect();
        let n = returns.len().max(1) as f64;
        let mean_return = returns.iter().sum::<f64>() / n;
        let cvar10 = cvar(&returns, 0.1).unwrap_or(f64::NAN);
        let violation_pct = is_uav.then(|| {
            let risk: usize = eps.iter().map(|e| e.risk_steps).sum();
            let steps: usize = eps.iter().map(|e| e.steps).sum();
            if steps == 0 {
                0.0
            } else {
                100.0 * risk as f64 / steps as f64
            }
        });
        let rscore = (!is_uav).then(|| eps.iter().filter_map(|e| e.rscore).sum::<f64>() / n);
        EvalRow {
            epoch,
            mean_return,
            violation_pct,
            rscore,
            cvar10,
        }
    }
}

pub const CSV_HEADER: [&str; 5] = ["epoch", "mean_return", "violation_pct", "rscore", "cvar10"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header plus one row per evaluation; absent metrics are empty fields.
pub fn emit_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.epoch.to_string(),
            r.mean_return.to_string(),
            opt(r.violation_pct),
            opt(r.rscore),
            r.cvar10.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::STREAM_ENV_TRAIN;
    use crate::uav::{Move, UavAction};

    fn tiny_uav(algo: Algo) -> ExperimentConfig {
        let mut c = ExperimentConfig::uav(algo);
        if let EnvConfig::Uav(u) = &mut c.env {
            u.episode_len = 20;
        }
        c.agent.hidden_sizes = vec![16];
        c.agent.num_quantiles = if algo.is_quantile() { 4 } else { 1 };
        c.train_episodes = 3;
        c.eval_episodes = 4;
        c.offline_epochs = 2;
        c.replay_capacity = 600;
        c
    }

    #[test]
    fn zero_episode_online_run_is_untrained() {
        let mut c = tiny_uav(Algo::Dqn);
        c.train_episodes = 0;
        let s = Session::new(&c).unwrap();
        let run = s.train_online().unwrap();
        assert!(run.buffer.is_empty());
        assert_eq!(run.agent.steps(), 0);
        assert_eq!(run.report.rows.len(), 1);
    }

    #[test]
    fn buffer_accounting() {
        let c = tiny_uav(Algo::Dqn);
        let run = Session::new(&c).unwrap().train_online().unwrap();
        assert_eq!(run.buffer.len(), 60);
        let mut small = c.clone();
        small.replay_capacity = 25;
        let run = Session::new(&small).unwrap().train_online().unwrap();
        assert_eq!(run.buffer.len(), 25);
        assert_eq!(run.buffer.pushed(), 60);
    }

    #[test]
    fn offline_zero_epochs_single_row_and_purity() {
        let c = tiny_uav(Algo::Dqn);
        let s = Session::new(&c).unwrap();
        let ds = s.extract(&s.train_online().unwrap()).unwrap();
        let mut oc = tiny_uav(Algo::Cqr);
        oc.offline_epochs = 0;
        let run = Session::new(&oc).unwrap().train_offline(&ds).unwrap();
        assert_eq!(run.report.rows.len(), 1);
        assert_eq!(run.report.rows[0].epoch, 0);

        oc.offline_epochs = 3;
        let session = Session::new(&oc).unwrap();
        let run = session.train_offline(&ds).unwrap();
        assert_eq!(run.training_env_steps, 0);
        assert!(session.eval_steps() > 0);
        assert!(!run.training_streams.contains(STREAM_ENV_TRAIN));
        assert!(!run.training_streams.contains(STREAM_ENV_EVAL));
        assert!(!run.training_streams.contains(STREAM_EXPLORE));
        let epochs: Vec<usize> = run.report.rows.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 1, 2, 3]);
    }

    #[test]
    fn dataset_env_mismatch_is_rejected() {
        let c = tiny_uav(Algo::Dqn);
        let s = Session::new(&c).unwrap();
        let ds = s.extract(&s.train_online().unwrap()).unwrap();
        let r = ExperimentConfig::rrm(Algo::Cql);
        assert!(matches!(
            Session::new(&r).unwrap().train_offline(&ds),
            Err(Error::EnvMismatch { .. })
        ));
    }

    /// East for 10 steps, north for 10, then idle.
    fn script_move(t: usize) -> Move {
        match t {
            0..=9 => Move::East,
            10..=19 => Move::North,
            _ => Move::Idle,
        }
    }

    #[test]
    fn violation_matches_counting_oracle() {
        let mut c = tiny_uav(Algo::Dqn);
        c.eval_episodes = 12;
        if let EnvConfig::Uav(u) = &mut c.env {
            u.episode_len = 100;
        }
        let s = Session::new(&c).unwrap();
        let EnvConfig::Uav(u) = &s.config().env else {
            unreachable!()
        };
        let script = |_: &[f64], t: usize| {
            UavAction {
                mv: script_move(t),
                serve: None,
            }
            .encode(10)
        };
        let row = s.evaluate(Policy::Scripted(&script), 0).unwrap();

        // Oracle: replay the moves on plain integers from each seeded start.
        let mut inside = 0usize;
        for i in 0..12u64 {
            let start =
                crate::uav::uav_reset(u, derive_seed(c.master_seed, STREAM_ENV_EVAL, i)).uav_cell;
            let (mut x, mut y) = (start.x as i64, start.y as i64);
            for t in 0..100 {
                match script_move(t) {
                    Move::East => x = (x + 1).min(10),
                    Move::North => y = (y + 1).min(10),
                    _ => {}
                }
                if (4..=6).contains(&x) && (4..=6).contains(&y) {
                    inside += 1;
                }
            }
        }
        let expected = 100.0 * inside as f64 / 1200.0;
        assert!((row.violation_pct.unwrap() - expected).abs() < 1e-12);
        assert_eq!(row, s.evaluate(Policy::Scripted(&script), 0).unwrap());
    }

    #[test]
    fn pinned_policies_give_extreme_violation() {
        let mut c = tiny_uav(Algo::Dqn);
        let idle = |_: &[f64], _: usize| {
            UavAction {
                mv: Move::Idle,
                serve: None,
            }
            .encode(10)
        };
        if let EnvConfig::Uav(u) = &mut c.env {
            u.risk_region = crate::uav::CellRect::central(11, 11);
        }
        let row = Session::new(&c)
            .unwrap()
            .evaluate(Policy::Scripted(&idle), 0)
            .unwrap();
        assert_eq!(row.violation_pct, Some(100.0));
        // Sweeping to the north-east corner and idling there never touches
        // a region confined to the south-west corner cell.
        if let EnvConfig::Uav(u) = &mut c.env {
            u.risk_region = crate::uav::CellRect {
                min: crate::uav::Cell::new(0, 0),
                max: crate::uav::Cell::new(0, 0),
            };
        }
        let ne = |_: &[f64], t: usize| {
            let mv = if t.is_multiple_of(2) {
                Move::East
            } else {
                Move::North
            };
            UavAction { mv, serve: None }.encode(10)
        };
        let row = Session::new(&c)
            .unwrap()
            .evaluate(Policy::Scripted(&ne), 0)
            .unwrap();
        assert_eq!(row.violation_pct, Some(0.0));
        assert!(row.rscore.is_none());
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        emit_csv(&EvalReport::default(), &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "epoch,mean_return,violation_pct,rscore,cvar10\n"
        );
        let rep = EvalReport {
            rows: vec![EvalRow {
                epoch: 3,
                mean_return: -0.25,
                violation_pct: Some(10.0),
                rscore: None,
                cvar10: -0.5,
            }],
        };
        emit_csv(&rep, &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "epoch,mean_return,violation_pct,rscore,cvar10\n3,-0.25,10,,-0.5\n"
        );
    }

    #[test]
    fn epsilon_decay_defaults_to_eighty_percent() {
        let c = ExperimentConfig::uav(Algo::Dqn);
        assert_eq!(c.epsilon_schedule().decay_episodes, 80);
        assert_eq!(
            ExperimentConfig::rrm(Algo::Dqn)
                .epsilon_schedule()
                .decay_episodes,
            1200
        );
    }
}
