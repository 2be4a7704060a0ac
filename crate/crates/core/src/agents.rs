//! DQN, QR-DQN, CQL and CQR on one Q-network chassis.
//!
//! The network emits `action_count × N` values laid out action-major
//! (`out[a * N + i]` is quantile `i` of action `a`). Scalar algorithms use
//! `N = 1`. Control is risk-neutral: actions maximize the quantile mean.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    adam_step, huber, huber_grad, quantile_huber_unchecked, quantile_midpoints, AdamState,
    GradBundle, MlpParams,
};
use crate::replay::{CheckpointMeta, Transition, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algo {
    Dqn,
    Qrdqn,
    Cql,
    Cqr,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::Dqn, Algo::Qrdqn, Algo::Cql, Algo::Cqr];

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Dqn => "dqn",
            Algo::Qrdqn => "qrdqn",
            Algo::Cql => "cql",
            Algo::Cqr => "cqr",
        }
    }

    pub fn is_quantile(&self) -> bool {
        matches!(self, Algo::Qrdqn | Algo::Cqr)
    }

    pub fn is_conservative(&self) -> bool {
        matches!(self, Algo::Cql | Algo::Cqr)
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown algo `{s}` (expected one of dqn, qrdqn, cql, cqr)"
                ))
            })
    }
}

/// Linear decay from `start` to `end` over `decay_episodes`, then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    /// 0 lets the experiment derive it from its episode count.
    pub decay_episodes: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, episode: usize) -> f64 {
        if self.decay_episodes == 0 || episode >= self.decay_episodes {
            return self.end;
        }
        let frac = episode as f64 / self.decay_episodes as f64;
        self.start + (self.end - self.start) * frac
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay_episodes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub algo: Algo,
    pub gamma: f64,
    pub num_quantiles: usize,
    pub cql_alpha: f64,
    /// Huber threshold shared by the scalar and quantile TD losses.
    pub kappa: f64,
    pub epsilon: EpsilonSchedule,
    pub target_sync_every: u64,
    pub batch_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub lr: f64,
}

impl AgentConfig {
    /// Defaults for `algo`: 32 quantiles for the distributional heads, penalty
    /// weight 1 for the conservative ones.
    pub fn for_algo(algo: Algo) -> Self {
        Self {
            algo,
            gamma: 0.99,
            num_quantiles: if algo.is_quantile() { 32 } else { 1 },
            cql_alpha: if algo.is_conservative() { 1.0 } else { 0.0 },
            kappa: 1.0,
            epsilon: EpsilonSchedule::default(),
            target_sync_every: 500,
            batch_size: 64,
            hidden_sizes: vec![128, 128],
            lr: 1e-3,
        }
    }

    /// Scalar algorithms need `N = 1` and the non-conservative ones need
    /// `alpha = 0`. Quantile algorithms may use `N = 1` and conservative ones
    /// `alpha = 0`, which is how the degenerate cases are exercised.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if self.num_quantiles == 0 {
            return bad("num_quantiles must be positive".into());
        }
        if !self.algo.is_quantile() && self.num_quantiles != 1 {
            return bad(format!(
                "{} is scalar and needs num_quantiles = 1",
                self.algo
            ));
        }
        if self.cql_alpha.is_nan() || self.cql_alpha < 0.0 {
            return bad(format!("cql_alpha {} must be non-negative", self.cql_alpha));
        }
        if !self.algo.is_conservative() && self.cql_alpha != 0.0 {
            return bad(format!(
                "{} has no conservative penalty; cql_alpha must be 0",
                self.algo
            ));
        }
        if [self.kappa, self.lr]
            .iter()
            .any(|v| v.is_nan() || *v <= 0.0)
        {
            return bad("kappa and lr must be positive".into());
        }
        if self.target_sync_every == 0 || self.batch_size == 0 {
            return bad("target_sync_every and batch_size must be positive".into());
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        let e = &self.epsilon;
        if !((0.0..=1.0).contains(&e.start) && (0.0..=1.0).contains(&e.end)) {
            return bad("epsilon values must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// `N` return quantiles at the midpoint fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSet {
    pub values: Vec<f64>,
}

impl QuantileSet {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn cvar(&self, level: f64) -> Result<f64> {
        cvar(&self.values, level)
    }
}

/// Mean of the `ceil(level · N)` smallest values.
pub fn cvar(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cvar of an empty sample".into()));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "cvar level {level} outside (0, 1]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // The small slack keeps e.g. (1/3)·3 from rounding up to 2.
    let k = ((level * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn stack_states<'a>(
    rows: impl Iterator<Item = &'a [f64]>,
    dim: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    for r in rows {
        if r.len() != dim {
            return Err(Error::dim("batch observation", dim, r.len()));
        }
        out.extend_from_slice(r);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct QAgent {
    cfg: AgentConfig,
    obs_dim: usize,
    action_count: usize,
    taus: Vec<f64>,
    online: MlpParams,
    target: MlpParams,
    opt: AdamState,
    steps: u64,
}

impl QAgent {
    pub fn new<R: Rng + ?Sized>(
        cfg: AgentConfig,
        obs_dim: usize,
        action_count: usize,
        init_rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let sizes = Self::layer_sizes_for(&cfg, obs_dim, action_count);
        let online = MlpParams::he_uniform(&sizes, init_rng)?;
        Self::from_network(cfg, online)
    }

    /// Wraps an existing network, e.g. a loaded checkpoint.
    pub fn from_network(cfg: AgentConfig, online: MlpParams) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.num_quantiles;
        if !online.output_dim().is_multiple_of(n) {
            return Err(Error::InvalidArgument(format!(
                "network output {} is not a multiple of {n} quantiles",
                online.output_dim()
            )));
        }
        let opt = AdamState::new(&online, cfg.lr);
        Ok(Self {
            obs_dim: online.input_dim(),
            action_count: online.output_dim() / n,
            taus: quantile_midpoints(n),
            target: online.clone(),
            online,
            opt,
            steps: 0,
            cfg,
        })
    }

    pub fn layer_sizes_for(cfg: &AgentConfig, obs_dim: usize, action_count: usize) -> Vec<usize> {
        let mut sizes = vec![obs_dim];
        sizes.extend(&cfg.hidden_sizes);
        sizes.push(action_count * cfg.num_quantiles);
        sizes
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn online(&self) -> &MlpParams {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut MlpParams {
        &mut self.online
    }

    pub fn target(&self) -> &MlpParams {
        &self.target
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }

    pub fn checkpoint_meta(&self, config_hash: &str) -> CheckpointMeta {
        CheckpointMeta {
            schema_version: SCHEMA_VERSION,
            algo: self.cfg.algo.name().to_string(),
            num_quantiles: self.cfg.num_quantiles,
            action_count: self.action_count,
            config_hash: config_hash.to_string(),
            layer_sizes: self.online.layer_sizes().to_vec(),
        }
    }

    /// Per-action quantile means from one raw network output.
    fn means(&self, out: &[f64]) -> Vec<f64> {
        let n = self.cfg.num_quantiles;
        if n == 1 {
            return out.to_vec();
        }
        out.chunks_exact(n)
            .map(|q| q.iter().sum::<f64>() / n as f64)
            .collect()
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.means(&self.online.forward(obs)?))
    }

    pub fn quantiles(&self, obs: &[f64], action: usize) -> Result<QuantileSet> {
        if action >= self.action_count {
            return Err(Error::InvalidAction {
                action,
                count: self.action_count,
            });
        }
        let n = self.cfg.num_quantiles;
        let out = self.online.forward(obs)?;
        Ok(QuantileSet {
            values: out[action * n..(action + 1) * n].to_vec(),
        })
    }

    /// Argmax of the Q-values, lowest index on ties.
    pub fn greedy_action(&self, obs: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(obs)?))
    }

    pub fn select_action<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<usize> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!(
                "epsilon {epsilon} outside [0, 1]"
            )));
        }
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            return Ok(rng.random_range(0..self.action_count));
        }
        self.greedy_action(obs)
    }

    fn check_batch(&self, batch: &[&Transition]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        if let Some(t) = batch.iter().find(|t| t.action >= self.action_count) {
            return Err(Error::InvalidAction {
                action: t.action,
                count: self.action_count,
            });
        }
        Ok(())
    }

    fn require(&self, ok: bool, what: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{what} is not defined for {}",
                self.cfg.algo
            )))
        }
    }

    /// Mean Huber TD error against `r + gamma (1 - done) max_a' Q_target(s', a')`.
    pub fn td_loss_scalar(&self, batch: &[&Transition]) -> Result<(f64, GradBundle)> {
        self.require(!self.cfg.algo.is_quantile(), "the scalar TD loss")?;
        self.loss_and_grads(
            batch,
            Terms {
                td: true,
                penalty: false,
            },
        )
    }

    /// Mean quantile-Huber loss against the target quantiles of the target
    /// network's mean-greedy next action.
    pub fn td_loss_quantile(&self, batch: &[&Transition]) -> Result<(f64, GradBundle)> {
        self.require(self.cfg.algo.is_quantile(), "the quantile TD loss")?;
        self.loss_and_grads(
            batch,
            Terms {
                td: true,
                penalty: false,
            },
        )
    }

    /// `alpha · mean_b [logsumexp_a Q̄(s_b, a) − Q̄(s_b, a_b)]` on the
    /// quantile-mean Q.
    pub fn cql_penalty(&self, batch: &[&Transition]) -> Result<(f64, GradBundle)> {
        self.require(self.cfg.algo.is_conservative(), "the conservative penalty")?;
        self.loss_and_grads(
            batch,
            Terms {
                td: false,
                penalty: true,
            },
        )
    }

    /// The full training objective for this algorithm and its gradient.
    pub fn total_loss(&self, batch: &[&Transition]) -> Result<(f64, GradBundle)> {
        let penalty = self.cfg.algo.is_conservative() && self.cfg.cql_alpha != 0.0;
        self.loss_and_grads(batch, Terms { td: true, penalty })
    }

    /// One Adam step on [`Self::total_loss`], then the periodic hard target sync.
    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<f64> {
        let (loss, grads) = self.total_loss(batch)?;
        adam_step(&mut self.online, &grads, &mut self.opt)?;
        self.steps += 1;
        if self.steps.is_multiple_of(self.cfg.target_sync_every) {
            self.sync_target();
        }
        Ok(loss)
    }

    fn loss_and_grads(&self, batch: &[&Transition], terms: Terms) -> Result<(f64, GradBundle)> {
        self.check_batch(batch)?;
        let b = batch.len();
        let n = self.cfg.num_quantiles;
        let out_dim = self.action_count * n;
        let inv_b = 1.0 / b as f64;

        let mut xs = Vec::with_capacity(b * self.obs_dim);
        stack_states(
            batch.iter().map(|t| t.state.as_slice()),
            self.obs_dim,
            &mut xs,
        )?;
        let acts = self.online.forward_batch(&xs, b)?;
        let out = acts.output();
        let mut upstream = vec![0.0; b * out_dim];
        let mut loss = 0.0;

        if terms.td {
            stack_states(
                batch.iter().map(|t| t.next_state.as_slice()),
                self.obs_dim,
                &mut xs,
            )?;
            let next = self.target.forward_batch(&xs, b)?;
            let next_out = next.output();
            let kappa = self.cfg.kappa;
            let mut targets = vec![0.0; n];
            for (k, t) in batch.iter().enumerate() {
                let row = &out[k * out_dim..(k + 1) * out_dim];
                let next_row = &next_out[k * out_dim..(k + 1) * out_dim];
                let a_star = argmax(&self.means(next_row));
                let bootstrap = if t.done { 0.0 } else { self.cfg.gamma };
                for (j, y) in targets.iter_mut().enumerate() {
                    *y = t.reward + bootstrap * next_row[a_star * n + j];
                }
                let pred = &row[t.action * n..(t.action + 1) * n];
                let grad =
                    &mut upstream[k * out_dim + t.action * n..k * out_dim + (t.action + 1) * n];
                if self.cfg.algo.is_quantile() {
                    loss += quantile_huber_unchecked(pred, &targets, &self.taus, kappa, Some(grad))
                        * inv_b;
                    grad.iter_mut().for_each(|g| *g *= inv_b);
                } else {
                    let u = targets[0] - pred[0];
                    loss += huber(u, kappa) * inv_b;
                    grad[0] = -huber_grad(u, kappa) * inv_b;
                }
            }
        }

        if terms.penalty {
            let alpha = self.cfg.cql_alpha;
            let scale = alpha * inv_b / n as f64;
            let mut pen = 0.0;
            for (k, t) in batch.iter().enumerate() {
                let q = self.means(&out[k * out_dim..(k + 1) * out_dim]);
                let lse = logsumexp(&q);
                pen += lse - q[t.action];
                for (a, qa) in q.iter().enumerate() {
                    let soft = (qa - lse).exp() - if a == t.action { 1.0 } else { 0.0 };
                    for g in &mut upstream[k * out_dim + a * n..k * out_dim + (a + 1) * n] {
                        *g += soft * scale;
                    }
                }
            }
            loss += alpha * pen * inv_b;
        }

        let grads = self.online.backward_batch(&acts, &upstream)?;
        Ok((loss, grads))
    }
}

#[derive(Debug, Clone, Copy)]
struct Terms {
    td: bool,
    penalty: bool,
}
