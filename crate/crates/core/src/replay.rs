//! Replay memory, offline dataset extraction and the line-oriented file
//! formats for datasets and checkpoints.
//!
//! Both formats are a JSON header line followed by one JSON object per line.
//! Floats are written in shortest round-trip form, so loads are bit-exact.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Dense, MlpParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    #[serde(rename = "s")]
    pub state: Vec<f64>,
    #[serde(rename = "a")]
    pub action: usize,
    #[serde(rename = "r")]
    pub reward: f64,
    #[serde(rename = "s2")]
    pub next_state: Vec<f64>,
    #[serde(rename = "d")]
    pub done: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    items: VecDeque<Transition>,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument(
                "replay capacity must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            obs_dim,
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
            pushed: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total pushes, including evicted items.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.state.len() != self.obs_dim {
            return Err(Error::dim("transition state", self.obs_dim, t.state.len()));
        }
        if t.next_state.len() != self.obs_dim {
            return Err(Error::dim(
                "transition next_state",
                self.obs_dim,
                t.next_state.len(),
            ));
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        self.pushed += 1;
        Ok(())
    }

    /// Retained items, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Uniform sampling with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(
        &'a self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&'a Transition>> {
        sample_slice_indices(self.items.len(), batch_size, rng)
            .map(|idx| idx.into_iter().map(|i| &self.items[i]).collect())
    }
}

fn sample_slice_indices<R: Rng + ?Sized>(
    len: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::EmptyBuffer);
    }
    Ok((0..batch_size).map(|_| rng.random_range(0..len)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub env_name: String,
    pub obs_dim: usize,
    pub action_count: usize,
    pub behavioral_policy_tag: String,
    pub source_seed: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub header: DatasetHeader,
    pub records: Vec<Transition>,
}

/// Provenance stamped into an extracted dataset's header.
#[derive(Debug, Clone)]
pub struct DatasetSource {
    pub env_name: String,
    pub action_count: usize,
    pub behavioral_policy_tag: String,
    pub source_seed: u64,
}

impl OfflineDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sample<'a, R: Rng + ?Sized>(
        &'a self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&'a Transition>> {
        sample_slice_indices(self.records.len(), batch_size, rng)
            .map(|idx| idx.into_iter().map(|i| &self.records[i]).collect())
    }

    /// Fails unless the dataset was recorded in `env_name`.
    pub fn expect_env(&self, env_name: &str) -> Result<()> {
        if self.header.env_name != env_name {
            return Err(Error::EnvMismatch {
                expected: env_name.to_string(),
                found: self.header.env_name.clone(),
            });
        }
        Ok(())
    }

    fn check_record(&self, k: usize, t: &Transition) -> std::result::Result<(), String> {
        let h = &self.header;
        if t.state.len() != h.obs_dim || t.next_state.len() != h.obs_dim {
            return Err(format!(
                "record {k}: state lengths {}/{} do not match header obs_dim {}",
                t.state.len(),
                t.next_state.len(),
                h.obs_dim
            ));
        }
        if t.action >= h.action_count {
            return Err(format!(
                "record {k}: action {} >= action_count {}",
                t.action, h.action_count
            ));
        }
        Ok(())
    }
}

/// The newest `floor(fraction * len)` transitions, oldest first.
pub fn extract_offline(
    buf: &ReplayBuffer,
    fraction: f64,
    source: DatasetSource,
) -> Result<OfflineDataset> {
    if buf.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    let take = (fraction * buf.len() as f64).floor() as usize;
    let records: Vec<Transition> = buf.items.iter().skip(buf.len() - take).cloned().collect();
    Ok(OfflineDataset {
        header: DatasetHeader {
            schema_version: SCHEMA_VERSION,
            env_name: source.env_name,
            obs_dim: buf.obs_dim,
            action_count: source.action_count,
            behavioral_policy_tag: source.behavioral_policy_tag,
            source_seed: source.source_seed,
            count: records.len(),
        },
        records,
    })
}

fn json_line<T: Serialize>(w: &mut impl Write, value: &T, path: &Path) -> Result<()> {
    let line = serde_json::to_string(value)
        .map_err(|e| Error::InvalidArgument(format!("serialization: {e}")))?;
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn save_dataset(ds: &OfflineDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    json_line(&mut w, &ds.header, path)?;
    for t in &ds.records {
        json_line(&mut w, t, path)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

fn check_schema(path: &Path, version: u32) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(format_err(
            path,
            1,
            format!("unsupported schema_version {version} (this build reads {SCHEMA_VERSION})"),
        ));
    }
    Ok(())
}

/// Loads a dataset. Errors name the offending line and record (records are
/// numbered from 0, starting on line 2).
pub fn load_dataset(path: &Path) -> Result<OfflineDataset> {
    let lines = read_lines(path)?;
    let first = lines
        .first()
        .ok_or_else(|| format_err(path, 1, "empty file, expected a header"))?;
    let header: DatasetHeader =
        serde_json::from_str(first).map_err(|e| format_err(path, 1, format!("bad header: {e}")))?;
    check_schema(path, header.schema_version)?;
    let mut ds = OfflineDataset {
        header,
        records: Vec::with_capacity(lines.len().saturating_sub(1)),
    };
    for (k, line) in lines.iter().skip(1).enumerate() {
        let line_no = k + 2;
        let t: Transition = serde_json::from_str(line).map_err(|e| {
            format_err(
                path,
                line_no,
                format!("record {k} is malformed or truncated: {e}"),
            )
        })?;
        ds.check_record(k, &t)
            .map_err(|m| format_err(path, line_no, m))?;
        ds.records.push(t);
    }
    if ds.records.len() != ds.header.count {
        return Err(format_err(
            path,
            lines.len(),
            format!(
                "header count {} but file holds {} records",
                ds.header.count,
                ds.records.len()
            ),
        ));
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema_version: u32,
    pub algo: String,
    pub num_quantiles: usize,
    pub action_count: usize,
    pub config_hash: String,
    pub layer_sizes: Vec<usize>,
}

impl CheckpointMeta {
    /// Structural mismatches are errors; a differing config hash only warns
    /// (returned and logged) since the network may still be usable.
    pub fn check_against(&self, expected: &CheckpointMeta) -> Result<Option<String>> {
        if self.num_quantiles != expected.num_quantiles {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint has {} quantiles, run expects {}",
                self.num_quantiles, expected.num_quantiles
            )));
        }
        if self.action_count != expected.action_count || self.layer_sizes != expected.layer_sizes {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint layers {:?} / {} actions, run expects {:?} / {}",
                self.layer_sizes, self.action_count, expected.layer_sizes, expected.action_count
            )));
        }
        if self.config_hash != expected.config_hash {
            let msg = format!(
                "config hash differs: checkpoint {} vs run {}",
                self.config_hash, expected.config_hash
            );
            log::warn!("{msg}");
            return Ok(Some(msg));
        }
        Ok(None)
    }
}

pub fn save_checkpoint(net: &MlpParams, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    if meta.layer_sizes != net.layer_sizes() {
        return Err(Error::CheckpointMismatch(format!(
            "meta layer sizes {:?} differ from network {:?}",
            meta.layer_sizes,
            net.layer_sizes()
        )));
    }
    let mut w = create(path)?;
    json_line(&mut w, meta, path)?;
    for layer in net.layers() {
        json_line(&mut w, layer, path)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpParams, CheckpointMeta)> {
    let lines = read_lines(path)?;
    let first = lines
        .first()
        .ok_or_else(|| format_err(path, 1, "empty file, expected a header"))?;
    let meta: CheckpointMeta =
        serde_json::from_str(first).map_err(|e| format_err(path, 1, format!("bad header: {e}")))?;
    check_schema(path, meta.schema_version)?;
    let layers = lines
        .iter()
        .skip(1)
        .enumerate()
        .map(|(k, l)| {
            serde_json::from_str::<Dense>(l)
                .map_err(|e| format_err(path, k + 2, format!("layer {k}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let net = MlpParams::from_layers(&meta.layer_sizes, layers)?;
    Ok((net, meta))
}
