//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! env = uav
//! harness.offline_epochs = 50
//! agent.hidden_sizes = 64, 64
//! env.uav.risk_prob = 0.1
//! ```
//!
//! Resolution order is defaults (chosen by `env` and the algorithm), then the
//! file, then command-line flags.

use std::path::{Path, PathBuf};

use cqrlab_core::agents::Algo;
use cqrlab_core::harness::{EnvConfig, ExperimentConfig, Mode};
use cqrlab_core::rrm::RewardMode;
use cqrlab_core::uav::{Cell, CellRect};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parsed but unresolved config file.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    pub path: PathBuf,
    pub entries: Vec<Entry>,
    /// Raw bytes, hashed into the run manifest.
    pub raw: Vec<u8>,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let text = String::from_utf8(raw.clone()).map_err(|_| CliError::Config {
            path: path.to_path_buf(),
            line: 0,
            msg: "file is not UTF-8".into(),
        })?;
        let mut cfg = Self::parse(&text, path)?;
        cfg.raw = raw;
        Ok(cfg)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Config {
                path: path.to_path_buf(),
                line,
                msg,
            };
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (k.trim(), v.trim());
            if key.is_empty() || value.is_empty() {
                return Err(err("empty key or value".into()));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(err(format!("`{key}` already set on line {}", prev.line)));
            }
            entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line,
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
            raw: text.as_bytes().to_vec(),
        })
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

/// Overrides taken from command-line flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub algo: Option<Algo>,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub fraction: Option<f64>,
}

fn parse_value<T: std::str::FromStr>(file: &ConfigFile, e: &Entry) -> Result<T> {
    e.value.parse::<T>().map_err(|_| CliError::Config {
        path: file.path.clone(),
        line: e.line,
        msg: format!("`{}`: cannot parse `{}`", e.key, e.value),
    })
}

fn parse_list<T: std::str::FromStr>(file: &ConfigFile, e: &Entry) -> Result<Vec<T>> {
    e.value
        .split(',')
        .map(|p| {
            p.trim().parse::<T>().map_err(|_| CliError::Config {
                path: file.path.clone(),
                line: e.line,
                msg: format!("`{}`: cannot parse list item `{}`", e.key, p.trim()),
            })
        })
        .collect()
}

/// Builds the run configuration. Scalar algorithms are forced to one quantile
/// and non-conservative ones to `cql_alpha = 0`, so one file can drive every
/// algorithm of a pipeline.
pub fn resolve(file: &ConfigFile, over: &Overrides) -> Result<ExperimentConfig> {
    let cfg_err = |e: &Entry, msg: String| CliError::Config {
        path: file.path.clone(),
        line: e.line,
        msg,
    };
    let algo = match (over.algo, file.get("algo")) {
        (Some(a), _) => a,
        (None, Some(e)) => e
            .value
            .parse::<Algo>()
            .map_err(|err| cfg_err(e, err.to_string()))?,
        (None, None) => Algo::Dqn,
    };
    let mut cfg = match file.get("env").map(|e| (e, e.value.as_str())) {
        None | Some((_, "uav")) => ExperimentConfig::uav(algo),
        Some((_, "rrm")) => ExperimentConfig::rrm(algo),
        Some((e, other)) => {
            return Err(cfg_err(
                e,
                format!("unknown env `{other}` (expected uav or rrm)"),
            ))
        }
    };

    for e in &file.entries {
        apply(&mut cfg, file, e)?;
    }

    if let Some(m) = over.mode {
        cfg.mode = m;
    }
    if let Some(s) = over.seed {
        cfg.master_seed = s;
    }
    if let Some(f) = over.fraction {
        cfg.dataset_fraction = f;
    }
    if !algo.is_quantile() && cfg.agent.num_quantiles != 1 {
        log::info!("{algo} is scalar; using num_quantiles = 1");
        cfg.agent.num_quantiles = 1;
    }
    if !algo.is_conservative() && cfg.agent.cql_alpha != 0.0 {
        log::info!("{algo} has no conservative penalty; using cql_alpha = 0");
        cfg.agent.cql_alpha = 0.0;
    }
    cfg.validate().map_err(|e| CliError::Config {
        path: file.path.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    Ok(cfg)
}

fn apply(cfg: &mut ExperimentConfig, file: &ConfigFile, e: &Entry) -> Result<()> {
    macro_rules! set {
        ($field:expr) => {
            $field = parse_value(file, e)?
        };
    }
    let unknown = || CliError::Config {
        path: file.path.clone(),
        line: e.line,
        msg: format!("unknown key `{}`", e.key),
    };
    let key = e.key.as_str();
    match key {
        "env" | "algo" => {}
        "seed" | "harness.master_seed" => set!(cfg.master_seed),
        "mode" => {
            cfg.mode = e
                .value
                .parse()
                .map_err(|err: cqrlab_core::Error| CliError::Config {
                    path: file.path.clone(),
                    line: e.line,
                    msg: err.to_string(),
                })?
        }
        "harness.train_episodes" => set!(cfg.train_episodes),
        "harness.offline_epochs" => set!(cfg.offline_epochs),
        "harness.steps_per_epoch" => cfg.steps_per_epoch = Some(parse_value(file, e)?),
        "harness.eval_episodes" => set!(cfg.eval_episodes),
        "harness.eval_every" => set!(cfg.eval_every),
        "harness.replay_capacity" => set!(cfg.replay_capacity),
        "harness.dataset_fraction" => set!(cfg.dataset_fraction),
        "harness.train_every" => set!(cfg.train_every),
        "harness.epsilon_decay_fraction" => set!(cfg.epsilon_decay_fraction),
        "agent.gamma" => set!(cfg.agent.gamma),
        "agent.num_quantiles" => set!(cfg.agent.num_quantiles),
        "agent.cql_alpha" => set!(cfg.agent.cql_alpha),
        "agent.kappa" => set!(cfg.agent.kappa),
        "agent.epsilon.start" => set!(cfg.agent.epsilon.start),
        "agent.epsilon.end" => set!(cfg.agent.epsilon.end),
        "agent.epsilon.decay_episodes" => set!(cfg.agent.epsilon.decay_episodes),
        "agent.target_sync_every" => set!(cfg.agent.target_sync_every),
        "agent.batch_size" => set!(cfg.agent.batch_size),
        "agent.hidden_sizes" => cfg.agent.hidden_sizes = parse_list(file, e)?,
        "agent.lr" => set!(cfg.agent.lr),
        _ if key.starts_with("env.uav.") => {
            let EnvConfig::Uav(u) = &mut cfg.env else {
                return Err(CliError::Config {
                    path: file.path.clone(),
                    line: e.line,
                    msg: format!("`{key}` given but env is not uav"),
                });
            };
            match &key["env.uav.".len()..] {
                "grid_cells" => {
                    set!(u.grid_cells);
                    u.risk_region = CellRect::central(u.grid_cells, 3.min(u.grid_cells));
                }
                "cell_m" => set!(u.cell_m),
                "num_devices" => set!(u.num_devices),
                "device_positions" => {
                    let flat: Vec<usize> = parse_list(file, e)?;
                    if !flat.len().is_multiple_of(2) {
                        return Err(CliError::Config {
                            path: file.path.clone(),
                            line: e.line,
                            msg: "device_positions needs x, y pairs".into(),
                        });
                    }
                    u.device_positions = flat.chunks(2).map(|p| Cell::new(p[0], p[1])).collect();
                }
                "altitude_m" => set!(u.altitude_m),
                "episode_len" => set!(u.episode_len),
                "aoi_cap" => set!(u.aoi_cap),
                "w_aoi" => set!(u.w_aoi),
                "w_power" => set!(u.w_power),
                "risk_region" => {
                    let r: Vec<usize> = parse_list(file, e)?;
                    if r.len() != 4 {
                        return Err(CliError::Config {
                            path: file.path.clone(),
                            line: e.line,
                            msg: "risk_region needs x_min, y_min, x_max, y_max".into(),
                        });
                    }
                    u.risk_region = CellRect {
                        min: Cell::new(r[0], r[1]),
                        max: Cell::new(r[2], r[3]),
                    };
                }
                "risk_prob" => set!(u.risk_prob),
                "risk_penalty" => set!(u.risk_penalty),
                "reward_scale" => set!(u.reward_scale),
                "radio.noise_w" => set!(u.radio.noise_w),
                "radio.snr_threshold" => set!(u.radio.snr_threshold),
                "radio.carrier_hz" => set!(u.radio.carrier_hz),
                _ => return Err(unknown()),
            }
        }
        _ if key.starts_with("env.rrm.") => {
            let EnvConfig::Rrm(r) = &mut cfg.env else {
                return Err(CliError::Config {
                    path: file.path.clone(),
                    line: e.line,
                    msg: format!("`{key}` given but env is not rrm"),
                });
            };
            match &key["env.rrm.".len()..] {
                "area_m" => set!(r.area_m),
                "num_aps" => set!(r.num_aps),
                "num_ues" => set!(r.num_ues),
                "ue_speed_mps" => set!(r.ue_speed_mps),
                "top_k" => set!(r.top_k),
                "episode_len" => set!(r.episode_len),
                "step_dt_s" => set!(r.step_dt_s),
                "pf_ema" => set!(r.pf_ema),
                "pf_eps" => set!(r.pf_eps),
                "reward_scale" => set!(r.reward_scale),
                "rscore_weights" => {
                    let w: Vec<f64> = parse_list(file, e)?;
                    if w.len() != 2 {
                        return Err(CliError::Config {
                            path: file.path.clone(),
                            line: e.line,
                            msg: "rscore_weights needs two values".into(),
                        });
                    }
                    r.rscore_weights = (w[0], w[1]);
                }
                "reward_mode" => {
                    r.reward_mode = match e.value.as_str() {
                        "pf_weighted" => RewardMode::PfWeightedRate,
                        "additive" => RewardMode::Additive { beta: 0.01 },
                        other => {
                            return Err(CliError::Config {
                                path: file.path.clone(),
                                line: e.line,
                                msg: format!(
                                "unknown reward_mode `{other}` (expected pf_weighted or additive)"
                            ),
                            })
                        }
                    }
                }
                "reward_beta" => match &mut r.reward_mode {
                    RewardMode::Additive { beta } => *beta = parse_value(file, e)?,
                    RewardMode::PfWeightedRate => {
                        return Err(CliError::Config {
                            path: file.path.clone(),
                            line: e.line,
                            msg: "reward_beta needs reward_mode = additive on an earlier line"
                                .into(),
                        })
                    }
                },
                "itlinq.m_db" => set!(r.itlinq.m_db),
                "itlinq.eta" => set!(r.itlinq.eta),
                "channel.pl_exponent" => set!(r.channel.pl_exponent),
                "channel.pl_ref_db" => set!(r.channel.pl_ref_db),
                "channel.rayleigh_fading" => set!(r.channel.rayleigh_fading),
                "channel.tx_power_w" => set!(r.channel.tx_power_w),
                "channel.noise_w" => set!(r.channel.noise_w),
                "channel.bandwidth_hz" => set!(r.channel.bandwidth_hz),
                _ => return Err(unknown()),
            }
        }
        _ => return Err(unknown()),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ConfigFile> {
        ConfigFile::parse(text, Path::new("run.cfg"))
    }

    #[test]
    fn parses_keys_comments_and_lists() {
        let f = parse("# run\nenv = rrm\n\nagent.hidden_sizes = 32, 16 # small\nenv.rrm.top_k=2\n")
            .unwrap();
        let cfg = resolve(&f, &Overrides::default()).unwrap();
        assert_eq!(cfg.agent.hidden_sizes, vec![32, 16]);
        let EnvConfig::Rrm(r) = &cfg.env else {
            panic!()
        };
        assert_eq!(r.top_k, 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("env = uav\nthis line is wrong\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 2"), "{e}");
        let f = parse("env = uav\nagent.lr = fast\n").unwrap();
        let e = resolve(&f, &Overrides::default()).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("agent.lr"), "{e}");
        let f = parse("env = uav\n\n\nenv.rrm.top_k = 2\n").unwrap();
        assert!(resolve(&f, &Overrides::default())
            .unwrap_err()
            .to_string()
            .contains("line 4"));
        let f = parse("nonsense.key = 1\n").unwrap();
        let err = resolve(&f, &Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(parse("a = 1\na = 2\n")
            .unwrap_err()
            .to_string()
            .contains("line 2"));
    }

    #[test]
    fn flags_override_file_and_algo_coerces_heads() {
        let f = parse(
            "env = uav\nseed = 4\nalgo = cqr\nagent.num_quantiles = 8\nagent.cql_alpha = 2\n",
        )
        .unwrap();
        let cfg = resolve(&f, &Overrides::default()).unwrap();
        assert_eq!(
            (cfg.master_seed, cfg.agent.algo, cfg.agent.num_quantiles),
            (4, Algo::Cqr, 8)
        );
        let over = Overrides {
            algo: Some(Algo::Dqn),
            seed: Some(9),
            ..Default::default()
        };
        let cfg = resolve(&f, &over).unwrap();
        assert_eq!(
            (cfg.master_seed, cfg.agent.algo, cfg.agent.num_quantiles),
            (9, Algo::Dqn, 1)
        );
        assert_eq!(cfg.agent.cql_alpha, 0.0);
    }

    #[test]
    fn empty_file_gives_uav_defaults() {
        let cfg = resolve(&parse("").unwrap(), &Overrides::default()).unwrap();
        assert_eq!(cfg, ExperimentConfig::uav(Algo::Dqn));
    }
}
