//! The collect / train / eval / baseline / plot pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cqrlab_core::agents::{Algo, QAgent};
use cqrlab_core::harness::{
    emit_csv, EnvConfig, EvalReport, ExperimentConfig, Mode, Policy, Session,
};
use cqrlab_core::replay::{
    load_checkpoint, load_dataset, save_checkpoint, save_dataset, OfflineDataset,
};
use cqrlab_core::rrm::BaselineKind;

use crate::config::{resolve, ConfigFile, Overrides};
use crate::error::{CliError, Result};
use crate::manifest::{config_hash, RunManifest};
use crate::plot;

/// Flags shared by the experiment commands.
#[derive(Debug, Clone)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

struct Prepared {
    file: ConfigFile,
    cfg: ExperimentConfig,
}

fn prepare(common: &Common, over: Overrides) -> Result<Prepared> {
    let file = match &common.config {
        Some(p) => ConfigFile::read(p)?,
        None => ConfigFile::default(),
    };
    let over = Overrides {
        seed: common.seed.or(over.seed),
        ..over
    };
    let cfg = resolve(&file, &over)?.resolved()?;
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::io(&common.out, e))?;
    Ok(Prepared { file, cfg })
}

fn write_manifest(
    common: &Common,
    p: &Prepared,
    command: &str,
    stem: &str,
    inputs: Vec<PathBuf>,
) -> Result<()> {
    let mut m = RunManifest::new(
        command,
        Some(&p.cfg),
        common.config.as_deref(),
        &p.file.raw,
        &common.out,
    );
    m.inputs = inputs;
    m.write(&common.out.join(format!("{stem}.manifest.json")))
}

fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    emit_csv(report, path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Dataset statistics printed by `collect`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub count: usize,
    pub mean_reward: f64,
    /// Action index to occurrence count.
    pub action_histogram: BTreeMap<usize, usize>,
}

impl DatasetSummary {
    pub fn of(ds: &OfflineDataset) -> Self {
        let mut action_histogram = BTreeMap::new();
        for t in &ds.records {
            *action_histogram.entry(t.action).or_insert(0) += 1;
        }
        let mean_reward = ds.records.iter().map(|t| t.reward).sum::<f64>() / ds.len().max(1) as f64;
        Self {
            count: ds.len(),
            mean_reward,
            action_histogram,
        }
    }
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "records: {}", self.count)?;
        writeln!(f, "mean reward: {:.6}", self.mean_reward)?;
        let mut top: Vec<_> = self.action_histogram.iter().collect();
        top.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        write!(
            f,
            "actions used: {} (most frequent:",
            self.action_histogram.len()
        )?;
        for (a, n) in top.iter().take(5) {
            write!(f, " {a}x{n}")?;
        }
        write!(f, ")")
    }
}

/// Online DQN collection followed by offline extraction. Writes the dataset,
/// the behaviour policy's checkpoint and its learning curve.
pub fn cmd_collect(
    common: &Common,
    fraction: Option<f64>,
    dataset: Option<PathBuf>,
) -> Result<DatasetSummary> {
    let p = prepare(
        common,
        Overrides {
            algo: Some(Algo::Dqn),
            mode: Some(Mode::Online),
            fraction,
            ..Default::default()
        },
    )?;
    write_manifest(common, &p, "collect", "collect", Vec::new())?;
    let session = Session::new(&p.cfg)?;
    let run = session.train_online()?;
    let ds = session.extract(&run)?;
    let ds_path = dataset.unwrap_or_else(|| {
        common
            .out
            .join(format!("{}.dataset.jsonl", p.cfg.env.name()))
    });
    save_dataset(&ds, &ds_path)?;
    write_report(&run.report, &common.out.join("dqn-online.csv"))?;
    save_checkpoint(
        run.agent.online(),
        &run.agent.checkpoint_meta(&config_hash(&p.cfg)),
        &common.out.join("dqn-online.ckpt"),
    )?;
    let summary = DatasetSummary::of(&ds);
    println!("dataset: {}\n{summary}", ds_path.display());
    Ok(summary)
}

/// Online or offline training of one algorithm. Returns the CSV path.
pub fn cmd_train(
    common: &Common,
    algo: Algo,
    mode: Mode,
    dataset: Option<&Path>,
) -> Result<PathBuf> {
    if mode == Mode::Offline && dataset.is_none() {
        return Err(CliError::Usage("offline training needs --dataset".into()));
    }
    let p = prepare(
        common,
        Overrides {
            algo: Some(algo),
            mode: Some(mode),
            ..Default::default()
        },
    )?;
    let stem = format!(
        "{algo}-{}",
        if mode == Mode::Online {
            "online"
        } else {
            "offline"
        }
    );
    write_manifest(
        common,
        &p,
        "train",
        &stem,
        dataset.map(Path::to_path_buf).into_iter().collect(),
    )?;
    let session = Session::new(&p.cfg)?;
    let (agent, report) = match mode {
        Mode::Online => {
            let run = session.train_online()?;
            (run.agent, run.report)
        }
        Mode::Offline => {
            let ds = load_dataset(dataset.expect("checked above"))?;
            let run = session.train_offline(&ds)?;
            (run.agent, run.report)
        }
    };
    save_checkpoint(
        agent.online(),
        &agent.checkpoint_meta(&config_hash(&p.cfg)),
        &common.out.join(format!("{stem}.ckpt")),
    )?;
    let csv = common.out.join(format!("{stem}.csv"));
    write_report(&report, &csv)?;
    if let Some(last) = report.last() {
        println!("{stem}: final {last:?}");
    }
    Ok(csv)
}

/// Greedy evaluation of a saved checkpoint.
pub fn cmd_eval(common: &Common, checkpoint: &Path) -> Result<PathBuf> {
    let (net, meta) = load_checkpoint(checkpoint)?;
    let algo: Algo = meta.algo.parse()?;
    let p = prepare(
        common,
        Overrides {
            algo: Some(algo),
            ..Default::default()
        },
    )?;
    let stem = format!(
        "eval-{}",
        checkpoint
            .file_stem()
            .map_or("checkpoint".into(), |s| s.to_string_lossy())
    );
    write_manifest(common, &p, "eval", &stem, vec![checkpoint.to_path_buf()])?;
    let mut agent_cfg = p.cfg.agent.clone();
    agent_cfg.num_quantiles = meta.num_quantiles;
    agent_cfg.hidden_sizes = meta.layer_sizes[1..meta.layer_sizes.len() - 1].to_vec();
    let expected =
        QAgent::from_network(agent_cfg.clone(), net.clone())?.checkpoint_meta(&config_hash(&p.cfg));
    let mut expected_shape = expected.clone();
    expected_shape.action_count = p.cfg.env.action_count();
    expected_shape.layer_sizes =
        QAgent::layer_sizes_for(&agent_cfg, p.cfg.env.obs_dim(), p.cfg.env.action_count());
    if let Some(w) = meta.check_against(&expected_shape)? {
        eprintln!("warning: {w}");
    }
    let agent = QAgent::from_network(agent_cfg, net)?;
    let session = Session::new(&p.cfg)?;
    let row = session.evaluate(Policy::Greedy(&agent), 0)?;
    let csv = common.out.join(format!("{stem}.csv"));
    write_report(
        &EvalReport {
            rows: vec![row.clone()],
        },
        &csv,
    )?;
    println!("{stem}: {row:?}");
    Ok(csv)
}

/// Evaluates a non-learned scheduler (rrm only) and writes a one-row CSV.
pub fn cmd_baseline(common: &Common, kind: BaselineKind) -> Result<PathBuf> {
    let p = prepare(common, Overrides::default())?;
    if !matches!(p.cfg.env, EnvConfig::Rrm(_)) {
        return Err(CliError::Usage("baseline schedulers need env = rrm".into()));
    }
    write_manifest(common, &p, "baseline", kind.name(), Vec::new())?;
    let session = Session::new(&p.cfg)?;
    let row = session.evaluate(Policy::Baseline(kind), 0)?;
    let csv = common.out.join(format!("{}.csv", kind.name()));
    write_report(
        &EvalReport {
            rows: vec![row.clone()],
        },
        &csv,
    )?;
    println!(
        "{}: rscore {:.6}",
        kind.name(),
        row.rscore.unwrap_or(f64::NAN)
    );
    Ok(csv)
}

pub fn cmd_plot(csvs: &[PathBuf], metric: &str, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut m = RunManifest::new(
        "plot",
        None,
        None,
        &[],
        out.parent().unwrap_or(Path::new(".")),
    );
    m.inputs = csvs.to_vec();
    m.write(&out.with_extension("manifest.json"))?;
    plot::plot(csvs, metric, out)
}
