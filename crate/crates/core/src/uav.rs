//! UAV data-collection MDP.
//!
//! A UAV flies over a square grid of cells and each step moves one cell (or
//! hovers) and either serves one ground device or stays silent. Serving resets
//! the device's age of information (AoI) to 1; every other AoI grows by one up
//! to `aoi_cap`. The served device transmits with inverse power control over a
//! line-of-sight free-space link. Entering the central risk region triggers a
//! large penalty with probability `risk_prob`.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::env::{Environment, Step};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SimRng};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// Inclusive axis-aligned rectangle of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRect {
    pub min: Cell,
    pub max: Cell,
}

impl CellRect {
    /// The `size × size` block centred on the grid.
    pub fn central(grid_cells: usize, size: usize) -> Self {
        let lo = (grid_cells - size) / 2;
        let hi = lo + size - 1;
        Self {
            min: Cell::new(lo, lo),
            max: Cell::new(hi, hi),
        }
    }

    pub fn contains(&self, c: Cell) -> bool {
        (self.min.x..=self.max.x).contains(&c.x) && (self.min.y..=self.max.y).contains(&c.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub noise_w: f64,
    /// Linear SNR target the device's power control must reach.
    pub snr_threshold: f64,
    pub carrier_hz: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            noise_w: 1e-13,      // -100 dBm
            snr_threshold: 10.0, // 10 dB
            carrier_hz: 2e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavConfig {
    pub grid_cells: usize,
    pub cell_m: f64,
    pub num_devices: usize,
    /// Fixed per experiment; empty means "place from the experiment seed".
    pub device_positions: Vec<Cell>,
    pub altitude_m: f64,
    /// 300 so that 100 collection episodes fill a 30,000-transition buffer.
    pub episode_len: usize,
    pub aoi_cap: u32,
    pub w_aoi: f64,
    /// Weight on transmit power normalized by the power needed from directly below.
    pub w_power: f64,
    pub risk_region: CellRect,
    pub risk_prob: f64,
    pub risk_penalty: f64,
    pub radio: RadioConfig,
    pub reward_scale: f64,
}

impl Default for UavConfig {
    fn default() -> Self {
        Self {
            grid_cells: 11,
            cell_m: 100.0,
            num_devices: 10,
            device_positions: Vec::new(),
            altitude_m: 100.0,
            episode_len: 300,
            aoi_cap: 64,
            w_aoi: 0.1,
            w_power: 1.0,
            risk_region: CellRect::central(11, 3),
            risk_prob: 0.10,
            risk_penalty: -100.0,
            radio: RadioConfig::default(),
            reward_scale: 20.0,
        }
    }
}

impl UavConfig {
    /// Draws `num_devices` distinct device cells from `seed`.
    pub fn place_devices(&mut self, seed: u64) {
        let mut rng = SimRng::seed_from_u64(seed);
        let cells = self.grid_cells * self.grid_cells;
        let n = self.num_devices.min(cells);
        self.device_positions = sample(&mut rng, cells, n)
            .into_iter()
            .map(|i| Cell::new(i % self.grid_cells, i / self.grid_cells))
            .collect();
    }

    pub fn action_count(&self) -> usize {
        5 * (self.num_devices + 1)
    }

    pub fn obs_dim(&self) -> usize {
        2 + self.num_devices
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x < self.grid_cells && c.y < self.grid_cells
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.grid_cells == 0 || self.num_devices == 0 || self.episode_len == 0 {
            return bad("grid_cells, num_devices and episode_len must be positive".into());
        }
        if self.device_positions.len() != self.num_devices {
            return bad(format!(
                "{} device positions for {} devices",
                self.device_positions.len(),
                self.num_devices
            ));
        }
        if let Some(c) = self.device_positions.iter().find(|c| !self.contains(**c)) {
            return bad(format!("device cell {c:?} outside the grid"));
        }
        if !self.contains(self.risk_region.max)
            || self.risk_region.min.x > self.risk_region.max.x
            || self.risk_region.min.y > self.risk_region.max.y
        {
            return bad(format!(
                "risk region {:?} not inside the grid",
                self.risk_region
            ));
        }
        if !(0.0..=1.0).contains(&self.risk_prob) {
            return bad(format!("risk_prob {} outside [0, 1]", self.risk_prob));
        }
        if !(self.altitude_m > 0.0 && self.cell_m > 0.0 && self.reward_scale > 0.0) {
            return bad("altitude_m, cell_m and reward_scale must be positive".into());
        }
        if self.aoi_cap == 0 {
            return bad("aoi_cap must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    East,
    West,
    North,
    South,
    Idle,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::East, Move::West, Move::North, Move::South, Move::Idle];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UavAction {
    pub mv: Move,
    /// Device to serve, `None` for silent.
    pub serve: Option<usize>,
}

impl UavAction {
    /// Flat index `move · (num_devices + 1) + serve`, silent encoded as `num_devices`.
    pub fn encode(&self, num_devices: usize) -> usize {
        let m = Move::ALL
            .iter()
            .position(|m| *m == self.mv)
            .expect("listed");
        m * (num_devices + 1) + self.serve.unwrap_or(num_devices)
    }

    pub fn decode(index: usize, num_devices: usize) -> Result<Self> {
        let count = 5 * (num_devices + 1);
        if index >= count {
            return Err(Error::InvalidAction {
                action: index,
                count,
            });
        }
        let serve = index % (num_devices + 1);
        Ok(Self {
            mv: Move::ALL[index / (num_devices + 1)],
            serve: (serve < num_devices).then_some(serve),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UavWorldState {
    pub uav_cell: Cell,
    pub aoi: Vec<u32>,
    pub t: usize,
}

/// Result of one [`uav_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct UavTransition {
    pub state: UavWorldState,
    pub reward: f64,
    pub done: bool,
    /// The new cell lies in the risk region.
    pub in_risk: bool,
    pub penalized: bool,
}

/// Start of an episode: UAV at a seeded-random cell, every AoI at 1.
pub fn uav_reset(cfg: &UavConfig, seed: u64) -> UavWorldState {
    let mut rng = SimRng::seed_from_u64(seed);
    UavWorldState {
        uav_cell: Cell::new(
            rng.random_range(0..cfg.grid_cells),
            rng.random_range(0..cfg.grid_cells),
        ),
        aoi: vec![1; cfg.num_devices],
        t: 0,
    }
}

pub fn in_risk_region(cfg: &UavConfig, cell: Cell) -> bool {
    cfg.risk_region.contains(cell)
}

/// Slant range between a device on the ground and the UAV at altitude.
pub fn link_distance(cfg: &UavConfig, device_cell: Cell, uav_cell: Cell) -> f64 {
    let dx = (device_cell.x as f64 - uav_cell.x as f64) * cfg.cell_m;
    let dy = (device_cell.y as f64 - uav_cell.y as f64) * cfg.cell_m;
    (dx * dx + dy * dy + cfg.altitude_m * cfg.altitude_m).sqrt()
}

fn power_at_distance(radio: &RadioConfig, d: f64) -> f64 {
    let fspl = 4.0 * PI * d * radio.carrier_hz / SPEED_OF_LIGHT;
    radio.snr_threshold * radio.noise_w * fspl * fspl
}

/// Transmit power (W) that meets the SNR target under free-space path loss.
pub fn required_power(cfg: &UavConfig, device_cell: Cell, uav_cell: Cell) -> f64 {
    power_at_distance(&cfg.radio, link_distance(cfg, device_cell, uav_cell))
}

/// Required power relative to the power needed with the UAV directly overhead.
pub fn normalized_power(cfg: &UavConfig, device_cell: Cell, uav_cell: Cell) -> f64 {
    required_power(cfg, device_cell, uav_cell) / power_at_distance(&cfg.radio, cfg.altitude_m)
}

fn moved(cfg: &UavConfig, c: Cell, mv: Move) -> Cell {
    let last = cfg.grid_cells - 1;
    match mv {
        Move::East => Cell::new((c.x + 1).min(last), c.y),
        Move::West => Cell::new(c.x.saturating_sub(1), c.y),
        Move::North => Cell::new(c.x, (c.y + 1).min(last)),
        Move::South => Cell::new(c.x, c.y.saturating_sub(1)),
        Move::Idle => c,
    }
}

/// Advances one step. The UAV moves first (off-grid moves are no-ops), then
/// serves from its new cell.
pub fn uav_step<R: Rng + ?Sized>(
    cfg: &UavConfig,
    state: &UavWorldState,
    action: usize,
    rng: &mut R,
) -> Result<UavTransition> {
    let act = UavAction::decode(action, cfg.num_devices)?;
    let cell = moved(cfg, state.uav_cell, act.mv);
    let aoi: Vec<u32> = state
        .aoi
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            if act.serve == Some(k) {
                1
            } else {
                (a + 1).min(cfg.aoi_cap)
            }
        })
        .collect();
    let power = act.serve.map_or(0.0, |k| {
        normalized_power(cfg, cfg.device_positions[k], cell)
    });
    let aoi_sum: f64 = aoi.iter().map(|&a| a as f64).sum();
    let mut reward = -(cfg.w_aoi * aoi_sum + cfg.w_power * power) / cfg.reward_scale;

    let in_risk = in_risk_region(cfg, cell);
    let penalized = in_risk && rng.random::<f64>() < cfg.risk_prob;
    if penalized {
        reward += cfg.risk_penalty / cfg.reward_scale;
    }
    let t = state.t + 1;
    Ok(UavTransition {
        state: UavWorldState {
            uav_cell: cell,
            aoi,
            t,
        },
        reward,
        done: t >= cfg.episode_len,
        in_risk,
        penalized,
    })
}

/// `(x, y)` scaled to [0, 1] by the grid extent, then each AoI over `aoi_cap`.
pub fn uav_observation(cfg: &UavConfig, state: &UavWorldState) -> Vec<f64> {
    let span = (cfg.grid_cells.max(2) - 1) as f64;
    let mut obs = Vec::with_capacity(cfg.obs_dim());
    obs.push(state.uav_cell.x as f64 / span);
    obs.push(state.uav_cell.y as f64 / span);
    obs.extend(state.aoi.iter().map(|&a| a as f64 / cfg.aoi_cap as f64));
    obs
}

/// Stateful wrapper used by the training and evaluation loops.
#[derive(Debug, Clone)]
pub struct UavEnv {
    cfg: UavConfig,
    state: UavWorldState,
    rng: SimRng,
    last: Option<UavTransition>,
}

impl UavEnv {
    pub fn new(cfg: UavConfig) -> Result<Self> {
        cfg.validate()?;
        let state = uav_reset(&cfg, 0);
        Ok(Self {
            cfg,
            state,
            rng: SimRng::seed_from_u64(0),
            last: None,
        })
    }

    pub fn config(&self) -> &UavConfig {
        &self.cfg
    }

    pub fn state(&self) -> &UavWorldState {
        &self.state
    }

    pub fn last_transition(&self) -> Option<&UavTransition> {
        self.last.as_ref()
    }
}

impl Environment for UavEnv {
    fn name(&self) -> &'static str {
        "uav"
    }

    fn obs_dim(&self) -> usize {
        self.cfg.obs_dim()
    }

    fn action_count(&self) -> usize {
        self.cfg.action_count()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.state = uav_reset(&self.cfg, seed);
        self.rng = SimRng::seed_from_u64(derive_seed(seed, "dynamics", 0));
        self.last = None;
        uav_observation(&self.cfg, &self.state)
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let tr = uav_step(&self.cfg, &self.state, action, &mut self.rng)?;
        self.state = tr.state.clone();
        let step = Step {
            obs: uav_observation(&self.cfg, &self.state),
            reward: tr.reward,
            done: tr.done,
        };
        self.last = Some(tr);
        Ok(step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> UavConfig {
        let mut c = UavConfig::default();
        c.place_devices(11);
        c
    }

    fn act(mv: Move, serve: Option<usize>, n: usize) -> usize {
        UavAction { mv, serve }.encode(n)
    }

    #[test]
    fn default_grid_spans_1100_m() {
        let c = UavConfig::default();
        assert_eq!(c.grid_cells as f64 * c.cell_m, 1100.0);
        assert_eq!(c.action_count(), 55);
    }

    #[test]
    fn reset_is_deterministic_with_unit_aoi() {
        let c = cfg();
        let a = uav_reset(&c, 42);
        assert_eq!(a, uav_reset(&c, 42));
        assert_eq!(a.aoi, vec![1; 10]);
        assert_eq!(a.t, 0);
    }

    #[test]
    fn reset_cell_inside_grid_for_many_seeds() {
        let c = cfg();
        for seed in 0..1000 {
            assert!(c.contains(uav_reset(&c, seed).uav_cell));
        }
    }

    #[test]
    fn action_codec_is_bijective() {
        for n in [1, 3, 10] {
            for i in 0..5 * (n + 1) {
                assert_eq!(UavAction::decode(i, n).unwrap().encode(n), i);
            }
            assert!(UavAction::decode(5 * (n + 1), n).is_err());
        }
    }

    #[test]
    fn serving_resets_and_others_increment() {
        let c = cfg();
        let mut rng = SimRng::seed_from_u64(0);
        let s = UavWorldState {
            uav_cell: Cell::new(0, 0),
            aoi: vec![5; 10],
            t: 0,
        };
        let next = uav_step(&c, &s, act(Move::Idle, Some(3), 10), &mut rng).unwrap();
        assert_eq!(next.state.aoi[3], 1);
        assert!(next
            .state
            .aoi
            .iter()
            .enumerate()
            .all(|(k, a)| k == 3 || *a == 6));

        let silent = uav_step(&c, &s, act(Move::Idle, None, 10), &mut rng).unwrap();
        assert_eq!(silent.state.aoi, vec![6; 10]);
    }

    #[test]
    fn aoi_saturates_at_cap() {
        let c = cfg();
        let mut rng = SimRng::seed_from_u64(0);
        let s = UavWorldState {
            uav_cell: Cell::new(0, 0),
            aoi: vec![64; 10],
            t: 0,
        };
        let next = uav_step(&c, &s, act(Move::Idle, None, 10), &mut rng).unwrap();
        assert_eq!(next.state.aoi, vec![64; 10]);
    }

    #[test]
    fn moves_clamp_at_edges() {
        let c = cfg();
        let mut rng = SimRng::seed_from_u64(0);
        let s = UavWorldState {
            uav_cell: Cell::new(10, 0),
            aoi: vec![1; 10],
            t: 0,
        };
        let east = uav_step(&c, &s, act(Move::East, None, 10), &mut rng).unwrap();
        assert_eq!(east.state.uav_cell, Cell::new(10, 0));
        let south = uav_step(&c, &s, act(Move::South, None, 10), &mut rng).unwrap();
        assert_eq!(south.state.uav_cell, Cell::new(10, 0));
        let west = uav_step(&c, &s, act(Move::West, None, 10), &mut rng).unwrap();
        assert_eq!(west.state.uav_cell, Cell::new(9, 0));
    }

    #[test]
    fn invalid_action_rejected() {
        let c = cfg();
        let s = uav_reset(&c, 0);
        let mut rng = SimRng::seed_from_u64(0);
        assert!(matches!(
            uav_step(&c, &s, 55, &mut rng),
            Err(Error::InvalidAction {
                action: 55,
                count: 55
            })
        ));
    }

    #[test]
    fn risk_penalty_frequency() {
        let c = cfg();
        let mut rng = SimRng::seed_from_u64(99);
        let s = UavWorldState {
            uav_cell: Cell::new(5, 5),
            aoi: vec![1; 10],
            t: 0,
        };
        let draws = 10_000;
        let hits = (0..draws)
            .filter(|_| {
                uav_step(&c, &s, act(Move::Idle, None, 10), &mut rng)
                    .unwrap()
                    .penalized
            })
            .count();
        let frac = hits as f64 / draws as f64;
        assert!((frac - 0.10).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn risk_region_exact_cells() {
        let c = cfg();
        assert!(in_risk_region(&c, Cell::new(5, 5)));
        assert!(!in_risk_region(&c, Cell::new(0, 0)));
        for x in 0..11 {
            for y in 0..11 {
                let expected = (4..=6).contains(&x) && (4..=6).contains(&y);
                assert_eq!(in_risk_region(&c, Cell::new(x, y)), expected, "({x},{y})");
            }
        }
    }

    #[test]
    fn power_geometry() {
        let c = cfg();
        let dev = Cell::new(3, 3);
        assert_eq!(link_distance(&c, dev, dev), c.altitude_m);
        assert!((normalized_power(&c, dev, dev) - 1.0).abs() < 1e-12);
        // (100 m horizontal, 100 m altitude) -> d^2 doubles.
        assert!((normalized_power(&c, dev, Cell::new(4, 3)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_farthest_corner_hand_value() {
        // d = sqrt(1000^2 + 1000^2 + 100^2) = sqrt(2_010_000)
        // P = 10 * 1e-13 * (4 pi d 2e9 / c)^2
        let c = cfg();
        let d2 = 2_010_000.0f64;
        let k = 4.0 * PI * 2e9 / 299_792_458.0;
        let expected = 10.0 * 1e-13 * k * k * d2;
        let p = required_power(&c, Cell::new(0, 0), Cell::new(10, 10));
        assert!(((p - expected) / expected).abs() < 1e-9);
        // Numeric anchor: about 1.4126e-2 W.
        assert!((p - 0.0141265).abs() < 1e-6, "{p}");
    }

    #[test]
    fn observation_scaling() {
        let c = cfg();
        let s = UavWorldState {
            uav_cell: Cell::new(0, 0),
            aoi: vec![1; 10],
            t: 0,
        };
        let obs = uav_observation(&c, &s);
        assert_eq!(obs.len(), 12);
        assert_eq!(&obs[..2], &[0.0, 0.0]);
        assert!(obs[2..].iter().all(|v| *v == 1.0 / 64.0));
    }

    #[test]
    fn episode_ends_exactly() {
        let mut c = cfg();
        c.episode_len = 7;
        let mut env = UavEnv::new(c).unwrap();
        env.reset(3);
        for i in 0..7 {
            let s = env.step(act(Move::Idle, None, 10)).unwrap();
            assert_eq!(s.done, i == 6);
        }
    }

    #[test]
    fn validate_rejects_missing_devices() {
        assert!(UavConfig::default().validate().is_err());
        let mut c = cfg();
        c.risk_prob = 1.5;
        assert!(c.validate().is_err());
    }
}
