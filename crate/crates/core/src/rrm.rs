//! Multi-AP downlink scheduling MDP.
//!
//! Access points and mobile UEs are dropped uniformly in a square. Each UE is
//! tied to its strongest AP for the whole episode. Per step, every AP serves
//! one UE from its top-k list ranked by proportional-fairness (PF) factor; the
//! learned controller picks a slot per AP, so the joint action space has
//! `top_k^num_aps` entries. The non-learned schedulers (random, greedy, round
//! robin, ITLinQ) live here too.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::env::{Environment, Step};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SimRng};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub pl_exponent: f64,
    /// Path loss at the 1 m reference distance, dB.
    pub pl_ref_db: f64,
    pub rayleigh_fading: bool,
    pub tx_power_w: f64,
    pub noise_w: f64,
    pub bandwidth_hz: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            pl_exponent: 3.5,
            pl_ref_db: 40.0,
            rayleigh_fading: true,
            tx_power_w: 0.1,
            noise_w: 1e-13,
            bandwidth_hz: 10e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RewardMode {
    /// `Σ pf_i · rate_i`
    PfWeightedRate,
    /// `Σ (beta · pf_i + rate_i)`
    Additive { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItlinqParams {
    pub m_db: f64,
    pub eta: f64,
}

impl Default for ItlinqParams {
    fn default() -> Self {
        Self {
            m_db: 25.0,
            eta: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrmConfig {
    pub area_m: f64,
    pub num_aps: usize,
    pub num_ues: usize,
    pub ue_speed_mps: f64,
    pub top_k: usize,
    pub episode_len: usize,
    pub step_dt_s: f64,
    pub channel: ChannelConfig,
    pub pf_ema: f64,
    pub pf_eps: f64,
    /// `(w_sum, w_tail)` for the Rscore.
    pub rscore_weights: (f64, f64),
    pub reward_scale: f64,
    pub reward_mode: RewardMode,
    pub itlinq: ItlinqParams,
}

impl Default for RrmConfig {
    fn default() -> Self {
        Self {
            area_m: 100.0,
            num_aps: 4,
            num_ues: 24,
            ue_speed_mps: 1.0,
            top_k: 3,
            episode_len: 200,
            step_dt_s: 1.0,
            channel: ChannelConfig::default(),
            pf_ema: 0.05,
            pf_eps: 1e-6,
            rscore_weights: (0.5, 0.5),
            reward_scale: 20.0,
            reward_mode: RewardMode::PfWeightedRate,
            itlinq: ItlinqParams::default(),
        }
    }
}

impl RrmConfig {
    pub fn action_count(&self) -> usize {
        self.top_k.pow(self.num_aps as u32)
    }

    pub fn obs_dim(&self) -> usize {
        self.num_aps * self.top_k * 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_aps == 0 || self.top_k == 0 || self.episode_len == 0 {
            return bad("num_aps, top_k and episode_len must be positive".into());
        }
        if self.num_ues < self.num_aps * self.top_k {
            return bad(format!(
                "{} UEs cannot give {} APs {} UEs each",
                self.num_ues, self.num_aps, self.top_k
            ));
        }
        if !(self.pf_ema > 0.0 && self.pf_ema <= 1.0) {
            return bad(format!("pf_ema {} outside (0, 1]", self.pf_ema));
        }
        if !(self.pf_eps > 0.0 && self.reward_scale > 0.0 && self.area_m > 0.0) {
            return bad("pf_eps, reward_scale and area_m must be positive".into());
        }
        let (ws, wt) = self.rscore_weights;
        if ws < 0.0 || wt < 0.0 || ((ws + wt) - 1.0).abs() > 1e-9 {
            return bad(format!(
                "rscore weights ({ws}, {wt}) must be non-negative and sum to 1"
            ));
        }
        Ok(())
    }
}

/// Per-AP slot choice, flattened as `Σ slot_a · top_k^a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RrmAction {
    pub slots: Vec<usize>,
}

impl RrmAction {
    pub fn encode(&self, top_k: usize) -> usize {
        self.slots.iter().rev().fold(0, |acc, s| acc * top_k + s)
    }

    pub fn decode(index: usize, top_k: usize, num_aps: usize) -> Result<Self> {
        let count = top_k.pow(num_aps as u32);
        if index >= count {
            return Err(Error::InvalidAction {
                action: index,
                count,
            });
        }
        let mut rest = index;
        let slots = (0..num_aps)
            .map(|_| {
                let s = rest % top_k;
                rest /= top_k;
                s
            })
            .collect();
        Ok(Self { slots })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrmWorldState {
    pub ap_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    pub ue_headings: Vec<f64>,
    /// AP index per UE.
    pub association: Vec<usize>,
    /// Associated UE indices per AP, ascending.
    pub members: Vec<Vec<usize>>,
    pub avg_rate: Vec<f64>,
    pub last_rate: Vec<f64>,
    pub last_sinr: Vec<f64>,
    pub pf_factors: Vec<f64>,
    pub top_lists: Vec<Vec<usize>>,
    /// Running max of `ln(1 + pf)`, the observation's PF scale.
    pub pf_obs_max: f64,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOutcome {
    pub served: Vec<Option<usize>>,
    pub rate: Vec<f64>,
    pub sinr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrmTransition {
    pub state: RrmWorldState,
    pub reward: f64,
    pub done: bool,
    pub outcome: ScheduleOutcome,
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Log-distance path gain (no fading), distances floored at 1 m.
pub fn path_gain(cfg: &RrmConfig, tx: Point, rx: Point) -> f64 {
    let d = dist(tx, rx).max(1.0);
    let loss_db = cfg.channel.pl_ref_db + 10.0 * cfg.channel.pl_exponent * d.log10();
    10f64.powf(-loss_db / 10.0)
}

pub fn channel_gain(cfg: &RrmConfig, tx: Point, rx: Point, fading_draw: f64) -> f64 {
    fading_draw * path_gain(cfg, tx, rx)
}

/// Row-major `(num_aps, num_ues)` power fading; unit-mean exponential under
/// Rayleigh fading, all ones otherwise.
pub fn draw_fading<R: Rng + ?Sized>(cfg: &RrmConfig, rng: &mut R) -> Vec<f64> {
    let n = cfg.num_aps * cfg.num_ues;
    if cfg.channel.rayleigh_fading {
        (0..n).map(|_| Exp1.sample(rng)).collect()
    } else {
        vec![1.0; n]
    }
}

fn pf_of(avg: f64, eps: f64) -> f64 {
    1.0 / (avg + eps)
}

fn rank_top(members: &[usize], pf: &[f64], k: usize) -> Vec<usize> {
    let mut sorted = members.to_vec();
    // Descending PF, ties by lower UE index.
    sorted.sort_by(|&a, &b| pf[b].total_cmp(&pf[a]).then(a.cmp(&b)));
    sorted.truncate(k);
    sorted
}

impl RrmWorldState {
    /// Builds the reset state for a given layout: nearest-AP association
    /// (strongest mean gain), then the repair pass, PF bookkeeping and top lists.
    pub fn from_layout(
        cfg: &RrmConfig,
        ap_positions: Vec<Point>,
        ue_positions: Vec<Point>,
        ue_headings: Vec<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        if ap_positions.len() != cfg.num_aps {
            return Err(Error::dim("AP positions", cfg.num_aps, ap_positions.len()));
        }
        if ue_positions.len() != cfg.num_ues || ue_headings.len() != cfg.num_ues {
            return Err(Error::dim("UE positions", cfg.num_ues, ue_positions.len()));
        }
        let mut association: Vec<usize> = ue_positions
            .iter()
            .map(|&u| {
                (0..cfg.num_aps)
                    .map(|a| (a, path_gain(cfg, ap_positions[a], u)))
                    .fold((0, f64::NEG_INFINITY), |best, cur| {
                        if cur.1 > best.1 {
                            cur
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect();
        repair_association(cfg, &ap_positions, &ue_positions, &mut association);

        let mut members = vec![Vec::new(); cfg.num_aps];
        for (u, &a) in association.iter().enumerate() {
            members[a].push(u);
        }
        let avg_rate = vec![cfg.pf_eps; cfg.num_ues];
        let pf_factors: Vec<f64> = avg_rate.iter().map(|&a| pf_of(a, cfg.pf_eps)).collect();
        let top_lists = members
            .iter()
            .map(|m| rank_top(m, &pf_factors, cfg.top_k))
            .collect();
        let pf_obs_max = pf_factors
            .iter()
            .map(|p| p.ln_1p())
            .fold(f64::MIN_POSITIVE, f64::max);
        Ok(Self {
            ap_positions,
            ue_positions,
            ue_headings,
            association,
            members,
            avg_rate,
            last_rate: vec![0.0; cfg.num_ues],
            last_sinr: vec![0.0; cfg.num_ues],
            pf_factors,
            top_lists,
            pf_obs_max,
            t: 0,
        })
    }
}

/// Moves UEs from the most-loaded AP to any AP below `top_k` members, nearest
/// UE first, until every AP has at least `top_k`.
fn repair_association(cfg: &RrmConfig, aps: &[Point], ues: &[Point], assoc: &mut [usize]) {
    loop {
        let mut counts = vec![0usize; cfg.num_aps];
        assoc.iter().for_each(|&a| counts[a] += 1);
        let Some(short) = (0..cfg.num_aps).find(|&a| counts[a] < cfg.top_k) else {
            break;
        };
        let donor = (0..cfg.num_aps)
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .expect("at least one AP");
        let ue = (0..ues.len())
            .filter(|&u| assoc[u] == donor)
            .min_by(|&a, &b| {
                dist(ues[a], aps[short])
                    .total_cmp(&dist(ues[b], aps[short]))
                    .then(a.cmp(&b))
            })
            .expect("donor has UEs");
        log::info!("association repair: UE {ue} moved from AP {donor} to AP {short}");
        assoc[ue] = short;
    }
}

pub fn rrm_reset(cfg: &RrmConfig, seed: u64) -> Result<RrmWorldState> {
    let mut rng = SimRng::seed_from_u64(seed);
    let point = |rng: &mut SimRng| {
        [
            rng.random::<f64>() * cfg.area_m,
            rng.random::<f64>() * cfg.area_m,
        ]
    };
    let aps = (0..cfg.num_aps).map(|_| point(&mut rng)).collect();
    let ues = (0..cfg.num_ues).map(|_| point(&mut rng)).collect();
    let headings = (0..cfg.num_ues)
        .map(|_| rng.random::<f64>() * 2.0 * PI)
        .collect();
    RrmWorldState::from_layout(cfg, aps, ues, headings)
}

/// SINR and Shannon rate for every UE given which UE each AP serves.
///
/// Every UE's SINR is measured against its own AP with interference from the
/// other transmitting APs; only served UEs get a non-zero rate.
pub fn compute_rates(
    cfg: &RrmConfig,
    state: &RrmWorldState,
    served: &[Option<usize>],
    fading: &[f64],
) -> ScheduleOutcome {
    let p = cfg.channel.tx_power_w;
    let n_ue = cfg.num_ues;
    let active: Vec<usize> = (0..cfg.num_aps).filter(|&a| served[a].is_some()).collect();
    let gain = |a: usize, u: usize| {
        channel_gain(
            cfg,
            state.ap_positions[a],
            state.ue_positions[u],
            fading[a * n_ue + u],
        )
    };
    let mut sinr = vec![0.0; n_ue];
    let mut rate = vec![0.0; n_ue];
    for (u, s) in sinr.iter_mut().enumerate() {
        let a = state.association[u];
        let signal = p * gain(a, u);
        let interference: f64 = active
            .iter()
            .filter(|&&b| b != a)
            .map(|&b| p * gain(b, u))
            .sum();
        let denom = interference + cfg.channel.noise_w;
        *s = if signal > 0.0 { signal / denom } else { 0.0 };
    }
    for &a in &active {
        let u = served[a].expect("active");
        rate[u] = (1.0 + sinr[u]).log2();
    }
    ScheduleOutcome {
        served: served.to_vec(),
        rate,
        sinr,
    }
}

/// EWMA rate update and the resulting PF factors `1 / (avg + eps)`.
pub fn update_pf(cfg: &RrmConfig, avg_rate: &[f64], inst_rate: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let avg: Vec<f64> = avg_rate
        .iter()
        .zip(inst_rate)
        .map(|(a, r)| (1.0 - cfg.pf_ema) * a + cfg.pf_ema * r)
        .collect();
    let pf = avg.iter().map(|&a| pf_of(a, cfg.pf_eps)).collect();
    (avg, pf)
}

fn move_ues(cfg: &RrmConfig, pos: &mut [Point], heading: &mut [f64]) {
    let step = cfg.ue_speed_mps * cfg.step_dt_s;
    let area = cfg.area_m;
    for (p, h) in pos.iter_mut().zip(heading.iter_mut()) {
        let (mut dx, mut dy) = (step * h.cos(), step * h.sin());
        let (mut x, mut y) = (p[0] + dx, p[1] + dy);
        // Specular reflection; loop covers steps longer than the area.
        while !(0.0..=area).contains(&x) {
            x = if x < 0.0 { -x } else { 2.0 * area - x };
            dx = -dx;
        }
        while !(0.0..=area).contains(&y) {
            y = if y < 0.0 { -y } else { 2.0 * area - y };
            dy = -dy;
        }
        *p = [x, y];
        *h = dy.atan2(dx).rem_euclid(2.0 * PI);
    }
}

fn validate_schedule(
    cfg: &RrmConfig,
    state: &RrmWorldState,
    served: &[Option<usize>],
) -> Result<()> {
    if served.len() != cfg.num_aps {
        return Err(Error::dim("schedule", cfg.num_aps, served.len()));
    }
    for (a, s) in served.iter().enumerate() {
        if let Some(u) = *s {
            if u >= cfg.num_ues || state.association[u] != a {
                return Err(Error::InvalidArgument(format!(
                    "AP {a} cannot serve UE {u}"
                )));
            }
        }
    }
    Ok(())
}

/// One step under an explicit schedule (`None` silences an AP).
pub fn rrm_step_schedule<R: Rng + ?Sized>(
    cfg: &RrmConfig,
    state: &RrmWorldState,
    served: &[Option<usize>],
    rng: &mut R,
) -> Result<RrmTransition> {
    validate_schedule(cfg, state, served)?;
    let fading = draw_fading(cfg, rng);
    let outcome = compute_rates(cfg, state, served, &fading);
    let (avg_rate, pf_factors) = update_pf(cfg, &state.avg_rate, &outcome.rate);
    // The PF weights are taken after the update, which bounds each served
    // UE's term by 1 / pf_ema.
    let raw = match cfg.reward_mode {
        RewardMode::PfWeightedRate => pf_factors
            .iter()
            .zip(&outcome.rate)
            .map(|(w, r)| w * r)
            .sum::<f64>(),
        RewardMode::Additive { beta } => pf_factors
            .iter()
            .zip(&outcome.rate)
            .map(|(w, r)| beta * w + r)
            .sum::<f64>(),
    };
    let mut next = state.clone();
    move_ues(cfg, &mut next.ue_positions, &mut next.ue_headings);
    next.top_lists = next
        .members
        .iter()
        .map(|m| rank_top(m, &pf_factors, cfg.top_k))
        .collect();
    next.pf_obs_max = pf_factors
        .iter()
        .map(|p| p.ln_1p())
        .fold(state.pf_obs_max, f64::max);
    next.avg_rate = avg_rate;
    next.pf_factors = pf_factors;
    next.last_rate = outcome.rate.clone();
    next.last_sinr = outcome.sinr.clone();
    next.t = state.t + 1;
    Ok(RrmTransition {
        done: next.t >= cfg.episode_len,
        state: next,
        reward: raw / cfg.reward_scale,
        outcome,
    })
}

/// Resolves slot choices against the current top lists.
pub fn resolve_action(
    cfg: &RrmConfig,
    state: &RrmWorldState,
    action: usize,
) -> Result<Vec<Option<usize>>> {
    let act = RrmAction::decode(action, cfg.top_k, cfg.num_aps)?;
    Ok(act
        .slots
        .iter()
        .enumerate()
        .map(|(a, &s)| state.top_lists[a].get(s).copied())
        .collect())
}

pub fn rrm_step<R: Rng + ?Sized>(
    cfg: &RrmConfig,
    state: &RrmWorldState,
    action: usize,
    rng: &mut R,
) -> Result<RrmTransition> {
    let served = resolve_action(cfg, state, action)?;
    rrm_step_schedule(cfg, state, &served, rng)
}

/// Per AP and top-list slot: previous-step SINR (dB clipped to [-20, 40],
/// mapped to [0, 1]) and `ln(1 + pf)` over the running max.
pub fn rrm_observation(cfg: &RrmConfig, state: &RrmWorldState) -> Vec<f64> {
    let mut obs = Vec::with_capacity(cfg.obs_dim());
    for list in &state.top_lists {
        for s in 0..cfg.top_k {
            match list.get(s) {
                Some(&u) => {
                    let db = (10.0 * state.last_sinr[u].log10()).clamp(-20.0, 40.0);
                    obs.push((db + 20.0) / 60.0);
                    obs.push((state.pf_factors[u].ln_1p() / state.pf_obs_max).clamp(0.0, 1.0));
                }
                None => obs.extend([0.0, 0.0]),
            }
        }
    }
    obs
}

/// Lower-interpolated percentile of an ascending-sorted slice.
fn lower_percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = (q * (sorted.len() - 1) as f64).floor() as usize;
    sorted[idx]
}

/// `w_sum · mean(rates) + w_tail · p5(rates)`.
pub fn rscore(per_ue_mean_rates: &[f64], weights: (f64, f64)) -> Result<f64> {
    if per_ue_mean_rates.is_empty() {
        return Err(Error::InvalidArgument(
            "rscore of an empty rate vector".into(),
        ));
    }
    let mean = per_ue_mean_rates.iter().sum::<f64>() / per_ue_mean_rates.len() as f64;
    let mut sorted = per_ue_mean_rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(weights.0 * mean + weights.1 * lower_percentile(&sorted, 0.05))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    Random,
    Greedy,
    RoundRobin,
    Itlinq,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::Random,
        BaselineKind::Greedy,
        BaselineKind::RoundRobin,
        BaselineKind::Itlinq,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::Greedy => "greedy",
            BaselineKind::RoundRobin => "round_robin",
            BaselineKind::Itlinq => "itlinq",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s || (s == "rr" && *k == BaselineKind::RoundRobin))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown baseline `{s}` (expected random, greedy, round_robin or itlinq)"
                ))
            })
    }
}

/// A scheduler decision. `action` is the equivalent joint slot action when
/// every AP transmits; ITLinQ may silence APs and then has none.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineDecision {
    pub action: Option<RrmAction>,
    pub served: Vec<Option<usize>>,
}

pub fn baseline_action<R: Rng + ?Sized>(
    kind: BaselineKind,
    cfg: &RrmConfig,
    state: &RrmWorldState,
    rng: &mut R,
) -> BaselineDecision {
    let slots_decision = |slots: Vec<usize>| {
        let served = slots
            .iter()
            .enumerate()
            .map(|(a, &s)| state.top_lists[a].get(s).copied())
            .collect();
        BaselineDecision {
            action: Some(RrmAction { slots }),
            served,
        }
    };
    match kind {
        BaselineKind::Random => slots_decision(
            (0..cfg.num_aps)
                .map(|a| rng.random_range(0..state.top_lists[a].len()))
                .collect(),
        ),
        BaselineKind::Greedy => slots_decision(vec![0; cfg.num_aps]),
        BaselineKind::RoundRobin => slots_decision(
            (0..cfg.num_aps)
                .map(|a| {
                    let members = &state.members[a];
                    let turn = members[state.t % members.len()];
                    let list = &state.top_lists[a];
                    // An unlisted UE ranks below every listed one, so the
                    // nearest-ranked listed UE is the last slot.
                    list.iter()
                        .position(|&u| u == turn)
                        .unwrap_or(list.len() - 1)
                })
                .collect(),
        ),
        BaselineKind::Itlinq => BaselineDecision {
            action: None,
            served: itlinq_schedule(cfg, state),
        },
    }
}

/// ITLinQ-style admission over each AP's greedy pick. Links are visited in
/// descending PF order; a link is admitted iff its SNR clears
/// `M · (max incoming INR)^eta` against the already admitted links and its
/// interference keeps every admitted link above the same threshold. Silenced
/// links' PF factors grow, so they gain priority on later steps.
pub fn itlinq_schedule(cfg: &RrmConfig, state: &RrmWorldState) -> Vec<Option<usize>> {
    let m = 10f64.powf(cfg.itlinq.m_db / 10.0);
    let eta = cfg.itlinq.eta;
    let p_over_n = cfg.channel.tx_power_w / cfg.channel.noise_w;
    let snr_like = |a: usize, u: usize| {
        p_over_n * path_gain(cfg, state.ap_positions[a], state.ue_positions[u])
    };
    let threshold = |inr: f64| if inr > 0.0 { m * inr.powf(eta) } else { 0.0 };

    let picks: Vec<usize> = state.top_lists.iter().map(|l| l[0]).collect();
    let mut order: Vec<usize> = (0..cfg.num_aps).collect();
    order.sort_by(|&a, &b| {
        state.pf_factors[picks[b]]
            .total_cmp(&state.pf_factors[picks[a]])
            .then(a.cmp(&b))
    });

    // (ap, ue, snr, max incoming INR)
    let mut admitted: Vec<(usize, usize, f64, f64)> = Vec::new();
    for a in order {
        let u = picks[a];
        let snr = snr_like(a, u);
        let max_inr = admitted
            .iter()
            .map(|&(b, ..)| snr_like(b, u))
            .fold(0.0, f64::max);
        if !admitted.is_empty() && snr < threshold(max_inr) {
            continue;
        }
        let hurts = admitted
            .iter()
            .any(|&(_, v, snr_v, inr_v)| snr_v < threshold(inr_v.max(snr_like(a, v))));
        if hurts {
            continue;
        }
        for entry in admitted.iter_mut() {
            entry.3 = entry.3.max(snr_like(a, entry.1));
        }
        admitted.push((a, u, snr, max_inr));
    }
    let mut served = vec![None; cfg.num_aps];
    for (a, u, ..) in admitted {
        served[a] = Some(u);
    }
    served
}

/// Writes `(ue_id, step, rate)` rows.
pub fn write_rate_trace(path: &Path, rows: &[(usize, usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ue_id", "step", "rate"])?;
    for (ue, step, rate) in rows {
        w.write_record([ue.to_string(), step.to_string(), rate.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Stateful wrapper that also accumulates per-UE rates for the Rscore.
#[derive(Debug, Clone)]
pub struct RrmEnv {
    cfg: RrmConfig,
    state: RrmWorldState,
    rng: SimRng,
    rate_sums: Vec<f64>,
    trace: Option<Vec<(usize, usize, f64)>>,
}

impl RrmEnv {
    pub fn new(cfg: RrmConfig) -> Result<Self> {
        let state = rrm_reset(&cfg, 0)?;
        let n = cfg.num_ues;
        Ok(Self {
            cfg,
            state,
            rng: SimRng::seed_from_u64(0),
            rate_sums: vec![0.0; n],
            trace: None,
        })
    }

    pub fn config(&self) -> &RrmConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RrmWorldState {
        &self.state
    }

    pub fn set_tracing(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<(usize, usize, f64)> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Per-UE mean rate since the last reset.
    pub fn mean_rates(&self) -> Vec<f64> {
        let steps = self.state.t.max(1) as f64;
        self.rate_sums.iter().map(|s| s / steps).collect()
    }

    /// Scheduler decision for the current state, drawing from the episode's
    /// dynamics stream.
    pub fn baseline_decision(&mut self, kind: BaselineKind) -> BaselineDecision {
        baseline_action(kind, &self.cfg, &self.state, &mut self.rng)
    }

    pub fn step_schedule(&mut self, served: &[Option<usize>]) -> Result<Step> {
        let tr = rrm_step_schedule(&self.cfg, &self.state, served, &mut self.rng)?;
        Ok(self.absorb(tr))
    }

    fn absorb(&mut self, tr: RrmTransition) -> Step {
        let step_idx = self.state.t;
        for (u, r) in tr.outcome.rate.iter().enumerate() {
            self.rate_sums[u] += r;
            if let Some(trace) = self.trace.as_mut() {
                trace.push((u, step_idx, *r));
            }
        }
        self.state = tr.state;
        Step {
            obs: rrm_observation(&self.cfg, &self.state),
            reward: tr.reward,
            done: tr.done,
        }
    }
}

impl Environment for RrmEnv {
    fn name(&self) -> &'static str {
        "rrm"
    }

    fn obs_dim(&self) -> usize {
        self.cfg.obs_dim()
    }

    fn action_count(&self) -> usize {
        self.cfg.action_count()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.state = rrm_reset(&self.cfg, seed).expect("config validated at construction");
        self.rng = SimRng::seed_from_u64(derive_seed(seed, "dynamics", 0));
        self.rate_sums.iter_mut().for_each(|s| *s = 0.0);
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
        rrm_observation(&self.cfg, &self.state)
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let tr = rrm_step(&self.cfg, &self.state, action, &mut self.rng)?;
        Ok(self.absorb(tr))
    }
}
