use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clustering::Affinity;
use crate::error::{Error, Result};
use crate::ingest::{DateRange, RemoteConfig};
use crate::network::NullTest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLabels {
    /// Each node is labelled with its coin id.
    #[default]
    Coin,
    /// Every node carries the same label.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityKind {
    Kernel,
    #[default]
    Knn,
}

/// Remote data source: which coins to fetch and where to cache them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSource {
    pub coins: Vec<String>,
    pub cache_dir: PathBuf,
    #[serde(flatten)]
    pub endpoint: RemoteConfig,
}

/// All pipeline parameters. Loaded from a `key = value` (TOML) file; CLI
/// flags override individual keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Local price CSV. Exactly one of `input` and `remote` must be set.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub remote: Option<RemoteSource>,
    #[serde(default)]
    pub start: Option<NaiveDate>,
    #[serde(default)]
    pub end: Option<NaiveDate>,
    #[serde(default = "defaults::epoch_length")]
    pub epoch_length: usize,
    #[serde(default = "defaults::top_k")]
    pub top_k: usize,
    #[serde(default = "defaults::norm_window")]
    pub norm_window: usize,
    #[serde(default = "defaults::power_q")]
    pub power_q: f64,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub null_test: NullTest,
    #[serde(default = "defaults::wl_iterations")]
    pub wl_iterations: usize,
    /// Fixed number of market states; the eigengap picks it when unset.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "defaults::k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub node_labels: NodeLabels,
    #[serde(default)]
    pub affinity: AffinityKind,
    #[serde(default = "defaults::neighbors")]
    pub neighbors: usize,
    /// Optional `epoch,regime` CSV of planted labels, scored with ARI in the report.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default = "defaults::out")]
    pub out: PathBuf,
}

mod defaults {
    use std::path::PathBuf;

    pub fn epoch_length() -> usize {
        20
    }
    pub fn top_k() -> usize {
        40
    }
    pub fn norm_window() -> usize {
        13
    }
    pub fn power_q() -> f64 {
        1.5
    }
    pub fn alpha() -> f64 {
        0.01
    }
    pub fn wl_iterations() -> usize {
        3
    }
    pub fn k_max() -> usize {
        10
    }
    pub fn restarts() -> usize {
        50
    }
    pub fn neighbors() -> usize {
        10
    }
    pub fn out() -> PathBuf {
        PathBuf::from("out")
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        toml::from_str("").expect("all keys have defaults")
    }
}

impl PipelineConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = config.input.as_mut() {
            resolve(p);
        }
        if let Some(p) = config.labels.as_mut() {
            resolve(p);
        }
        if let Some(r) = config.remote.as_mut() {
            resolve(&mut r.cache_dir);
        }
        resolve(&mut config.out);
        Ok(config)
    }

    pub fn affinity_mode(&self) -> Affinity {
        match self.affinity {
            AffinityKind::Kernel => Affinity::Kernel,
            AffinityKind::Knn => Affinity::NearestNeighbors(self.neighbors),
        }
    }

    pub fn date_range(&self) -> Result<Option<DateRange>> {
        match (self.start, self.end) {
            (Some(s), Some(e)) => DateRange::new(s, e).map(Some),
            (None, None) => Ok(None),
            (s, e) => {
                let lo = s.unwrap_or(NaiveDate::MIN);
                let hi = e.unwrap_or(NaiveDate::MAX);
                DateRange::new(lo, hi).map(Some)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match (&self.input, &self.remote) {
            (Some(_), Some(_)) => return bad("set either `input` or `remote`, not both".into()),
            (None, None) => return bad("no data source: set `input` or `remote`".into()),
            _ => {}
        }
        if self.remote.is_some() && (self.start.is_none() || self.end.is_none()) {
            return bad("a remote source needs both `start` and `end`".into());
        }
        self.date_range()?;
        if self.epoch_length < 4 {
            return bad(format!("epoch_length must be at least 4, got {}", self.epoch_length));
        }
        if self.top_k < 2 {
            return bad(format!("top_k must be at least 2, got {}", self.top_k));
        }
        if self.norm_window < 2 {
            return bad(format!("norm_window must be at least 2, got {}", self.norm_window));
        }
        if !(self.power_q > 0.0 && self.power_q.is_finite()) {
            return bad(format!("power_q must be positive, got {}", self.power_q));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.k_max < 2 {
            return bad(format!("k_max must be at least 2, got {}", self.k_max));
        }
        if self.k == Some(0) {
            return bad("k must be positive".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be positive".into());
        }
        if self.neighbors == 0 {
            return bad("neighbors must be positive".into());
        }
        if self.power_q > 1.5 {
            log::warn!(
                "power_q = {} exceeds 1.5: during high-correlation periods the filtered networks \
                 may become empty and break graph comparison",
                self.power_q
            );
        }
        Ok(())
    }
}
