//! Resumable end-to-end pipeline: ingest → returns → correlate → network →
//! kernel → cluster → report.
//!
//! Every stage reads its inputs from the files written by earlier stages and
//! records a fingerprint of its parameters and input contents under
//! `.stages/`. A stage whose fingerprint is unchanged and whose outputs are
//! all present is skipped, so deleting one stage directory recomputes just
//! that stage and its dependants.

pub mod config;
pub mod files;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{AffinityKind, NodeLabels, PipelineConfig, RemoteSource};

use crate::clustering::{
    adjusted_rand_index, eigengap_from_eigenvalues, embed_spectrum, kmeans, laplacian_spectrum, affinity_matrix,
    StateAssignment,
};
use crate::correlation::{epoch_stats, pearson_matrix, power_map, CorrelationMatrix};
use crate::error::{Error, Result};
use crate::ingest::{fetch_remote, parse_csv, validate_panel, write_csv, HttpSource, PricePanel};
use crate::kernel::{kernel_distance, kernel_matrix, KernelMatrix, LabelDictionary, LabeledGraph};
use crate::network::{build_graph_with, graph_metrics, MarketGraph};
use crate::timeseries::{local_normalize, log_returns, select_top_k, slice_epochs, timeline};
use crate::{par, seed};

const STAGE_DIR: &str = ".stages";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub executed: Vec<&'static str>,
    pub skipped: Vec<&'static str>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub index: usize,
    pub start: String,
    pub end: String,
    pub state: usize,
    pub mean_return: f64,
    pub mean_correlation: f64,
    pub edges: usize,
    pub density: f64,
    pub clustering: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummaryRow {
    pub state: usize,
    pub size: usize,
    pub medoid: usize,
    pub mean_correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub k: usize,
    pub k_source: String,
    pub eigengap_k: Option<usize>,
    pub state_sizes: Vec<usize>,
    pub medoids: Vec<usize>,
    pub inertia: f64,
    pub ari: Option<f64>,
    pub states: Vec<StateSummaryRow>,
    pub epochs: Vec<EpochSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Selection {
    k: usize,
    k_source: String,
    eigengap_k: Option<usize>,
    inertia: f64,
    medoids: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct StageRecord {
    fingerprint: String,
    outputs: Vec<PathBuf>,
}

/// Runs every stage with at most `jobs` worker threads.
pub fn run(config: &PipelineConfig, jobs: Option<usize>) -> Result<RunOutcome> {
    config.validate()?;
    par::with_jobs(jobs, || Runner::new(config).run_all())
}

/// Reads `report/summary.json` from a finished output directory.
pub fn load_summary(out: &Path) -> Result<Summary> {
    let path = out.join("report/summary.json");
    Ok(serde_json::from_str(&files::read(&path)?)?)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    executed: Vec<&'static str>,
    skipped: Vec<&'static str>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a PipelineConfig) -> Self {
        Self {
            cfg,
            out: cfg.out.clone(),
            executed: Vec::new(),
            skipped: Vec::new(),
        }
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    /// Runs `body` unless a matching stage record exists. Returns the stage's
    /// outputs relative to the output directory.
    fn stage<F>(
        &mut self,
        name: &'static str,
        params: serde_json::Value,
        inputs: &[PathBuf],
        owned: &[&str],
        body: F,
    ) -> Result<Vec<PathBuf>>
    where
        F: FnOnce(&Self) -> Result<Vec<PathBuf>>,
    {
        let wrap = |e: Error| Error::Stage {
            stage: name,
            source: Box::new(e),
        };
        let mut input_hashes = BTreeMap::new();
        for p in inputs {
            let key = p.strip_prefix(&self.out).unwrap_or(p).to_string_lossy().into_owned();
            input_hashes.insert(key, hash_file(p).map_err(wrap)?);
        }
        let fingerprint = sha256_hex(
            serde_json::to_string(&json!({ "stage": name, "params": params, "inputs": input_hashes }))
                .expect("serializable")
                .as_bytes(),
        );
        let record_path = self.path(STAGE_DIR).join(format!("{name}.json"));
        if let Ok(text) = fs::read_to_string(&record_path) {
            if let Ok(record) = serde_json::from_str::<StageRecord>(&text) {
                if record.fingerprint == fingerprint && record.outputs.iter().all(|o| self.path(o).exists()) {
                    log::info!("stage {name}: up to date");
                    self.skipped.push(name);
                    return Ok(record.outputs);
                }
            }
        }
        log::info!("stage {name}: running");
        for dir in owned {
            let p = self.path(dir);
            let res = if p.is_dir() {
                fs::remove_dir_all(&p)
            } else if p.exists() {
                fs::remove_file(&p)
            } else {
                Ok(())
            };
            res.map_err(|e| wrap(Error::io(&p, e)))?;
        }
        let outputs = body(self).map_err(wrap)?;
        let record = StageRecord { fingerprint, outputs };
        files::write(&record_path, serde_json::to_string_pretty(&record).expect("serializable")).map_err(wrap)?;
        self.executed.push(name);
        Ok(record.outputs)
    }

    fn abs(&self, rel: &[PathBuf]) -> Vec<PathBuf> {
        rel.iter().map(|p| self.path(p)).collect()
    }

    fn run_all(mut self) -> Result<RunOutcome> {
        let cfg = self.cfg;
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;

        // Data source. Remote data is materialized into the cache first so the
        // ingest fingerprint can cover the cached files.
        let range = cfg.date_range()?;
        let (source_inputs, remote_panel) = match (&cfg.input, &cfg.remote) {
            (Some(input), _) => (vec![input.clone()], None),
            (None, Some(remote)) => {
                let source = HttpSource::new(remote.endpoint.clone());
                let range = range.expect("validated: remote needs a range");
                let panel = fetch_remote(&source, &remote.coins, range, &remote.cache_dir).map_err(|e| Error::Stage {
                    stage: "ingest",
                    source: Box::new(e),
                })?;
                let cached = remote
                    .coins
                    .iter()
                    .map(|c| remote.cache_dir.join(format!("{c}.csv")))
                    .collect();
                (cached, Some(panel))
            }
            (None, None) => unreachable!("validated"),
        };

        let ingest = self.stage(
            "ingest",
            json!({ "range": range, "remote": cfg.remote.as_ref().map(|r| &r.coins) }),
            &source_inputs,
            &["ingest"],
            |r| {
                let panel = match (&remote_panel, &cfg.input) {
                    (Some(p), _) => p.clone(),
                    (None, Some(input)) => parse_csv(input)?,
                    (None, None) => unreachable!("validated"),
                };
                let panel = match range {
                    Some(range) => panel.restrict(range),
                    None => panel,
                };
                write_csv(&panel, r.path("ingest/panel.csv"))?;
                let report = validate_panel(&panel);
                files::write(&r.path("ingest/validation.json"), serde_json::to_string_pretty(&report)?)?;
                Ok(vec!["ingest/panel.csv".into(), "ingest/validation.json".into()])
            },
        )?;

        let returns = self.stage(
            "returns",
            json!({ "norm_window": cfg.norm_window, "epoch_length": cfg.epoch_length, "top_k": cfg.top_k }),
            &self.abs(&ingest[..1]),
            &["returns", "epochs.csv"],
            |r| r.returns_stage(),
        )?;

        let correlate = self.stage(
            "correlate",
            json!({ "power_q": cfg.power_q, "epoch_length": cfg.epoch_length }),
            &self.abs(&returns),
            &["correlations"],
            |r| r.correlate_stage(),
        )?;
        let mapped: Vec<PathBuf> = correlate
            .iter()
            .filter(|p| p.starts_with("correlations/power_mapped"))
            .cloned()
            .collect();
        let epochs_file = self.path("epochs.csv");

        let mut network_inputs = self.abs(&mapped);
        network_inputs.push(epochs_file.clone());
        let network = self.stage(
            "network",
            json!({ "alpha": cfg.alpha, "epoch_length": cfg.epoch_length, "power_q": cfg.power_q,
                    "node_labels": cfg.node_labels, "null_test": cfg.null_test }),
            &network_inputs,
            &["graphs"],
            |r| r.network_stage(),
        )?;

        let graph_files: Vec<PathBuf> = network
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .cloned()
            .collect();
        let mut kernel_inputs = self.abs(&graph_files);
        kernel_inputs.push(epochs_file.clone());
        let kernel = self.stage(
            "kernel",
            json!({ "wl_iterations": cfg.wl_iterations }),
            &kernel_inputs,
            &["kernel"],
            |r| r.kernel_stage(),
        )?;

        let mut cluster_inputs = self.abs(&kernel);
        cluster_inputs.extend(self.abs(&mapped));
        cluster_inputs.push(epochs_file.clone());
        let states = self.stage(
            "cluster",
            json!({ "k": cfg.k, "k_max": cfg.k_max, "seed": cfg.seed, "restarts": cfg.restarts,
                    "affinity": cfg.affinity_mode(), "wl_iterations": cfg.wl_iterations }),
            &cluster_inputs,
            &["states"],
            |r| r.cluster_stage(),
        )?;

        let mut report_inputs = vec![
            epochs_file,
            self.path("correlations/epoch_stats.csv"),
            self.path("graphs/metrics.csv"),
        ];
        report_inputs.extend(self.abs(&states));
        if let Some(labels) = &cfg.labels {
            report_inputs.push(labels.clone());
        }
        self.stage("report", json!({}), &report_inputs, &["report"], |r| r.report_stage())?;

        self.write_manifest(&source_inputs)?;
        let summary = load_summary(&self.out)?;
        Ok(RunOutcome {
            executed: self.executed,
            skipped: self.skipped,
            summary,
        })
    }

    fn returns_stage(&self) -> Result<Vec<PathBuf>> {
        let cfg = self.cfg;
        let panel = parse_csv(self.path("ingest/panel.csv"))?;
        let raw = log_returns(&panel);
        let normalized_all = par::map_slice(&raw, |s| local_normalize(s, cfg.norm_window));
        let mut normalized = Vec::with_capacity(raw.len());
        let mut excluded = String::from("coin_id,reason\n");
        for res in normalized_all {
            match res {
                Ok(s) => normalized.push(s),
                Err(Error::ZeroWindowVariance { coin_id, date }) => {
                    log::warn!("excluding {coin_id}: constant prices around {date}");
                    excluded.push_str(&format!("{coin_id},zero window variance on {date}\n"));
                }
                Err(e) => return Err(e),
            }
        }
        let dates = timeline(&normalized);
        let epochs = slice_epochs(&dates, cfg.epoch_length)?;
        if epochs.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "{} normalized return days yield {} epochs of {} days; need at least 2",
                dates.len(),
                epochs.len(),
                cfg.epoch_length
            )));
        }
        let portfolios = par::map_slice(&epochs, |e| select_top_k(&panel, e, &dates, &normalized, cfg.top_k))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        files::write_series(&self.path("returns/log_returns.csv"), &raw)?;
        files::write_series(&self.path("returns/normalized.csv"), &normalized)?;
        files::write(&self.path("returns/excluded.csv"), excluded)?;
        files::write_portfolios(&self.path("returns/portfolios.csv"), &portfolios)?;
        files::write_epochs(&self.path("epochs.csv"), &epochs)?;
        Ok(vec![
            "returns/log_returns.csv".into(),
            "returns/normalized.csv".into(),
            "returns/portfolios.csv".into(),
            "epochs.csv".into(),
        ])
    }

    fn correlate_stage(&self) -> Result<Vec<PathBuf>> {
        let cfg = self.cfg;
        let epochs = files::read_epochs(&self.path("epochs.csv"), cfg.epoch_length)?;
        let raw = files::read_series(&self.path("returns/log_returns.csv"))?;
        let normalized = files::read_series(&self.path("returns/normalized.csv"))?;
        let portfolios = files::read_portfolios(&self.path("returns/portfolios.csv"), &epochs)?;
        let dates = timeline(&normalized);
        let results = par::map_slice(&portfolios, |p| -> Result<_> {
            let matrix = pearson_matrix(p, &dates, &normalized)?;
            let stats = epoch_stats(p, &dates, &raw, &matrix)?;
            let mapped = power_map(&matrix, cfg.power_q)?;
            Ok((matrix, mapped, stats))
        });
        let mut outputs = Vec::new();
        let mut all_stats = Vec::new();
        for res in results {
            let (matrix, mapped, stats) = res?;
            let i = matrix.epoch.index;
            let raw_rel = PathBuf::from(format!("correlations/epoch_{i}.csv"));
            let mapped_rel = PathBuf::from(format!("correlations/power_mapped/epoch_{i}.csv"));
            files::write_matrix(&self.path(&raw_rel), &matrix.coin_ids, &matrix.values)?;
            files::write_matrix(&self.path(&mapped_rel), &mapped.coin_ids, &mapped.values)?;
            outputs.push(raw_rel);
            outputs.push(mapped_rel);
            all_stats.push(stats);
        }
        files::write_stats(&self.path("correlations/epoch_stats.csv"), &all_stats)?;
        outputs.push("correlations/epoch_stats.csv".into());
        Ok(outputs)
    }

    fn load_mapped(&self) -> Result<Vec<CorrelationMatrix>> {
        let epochs = files::read_epochs(&self.path("epochs.csv"), self.cfg.epoch_length)?;
        epochs
            .into_iter()
            .map(|epoch| {
                let (coin_ids, values) =
                    files::read_matrix(&self.path(format!("correlations/power_mapped/epoch_{}.csv", epoch.index)))?;
                Ok(CorrelationMatrix {
                    epoch,
                    coin_ids,
                    values,
                    q_applied: self.cfg.power_q,
                })
            })
            .collect()
    }

    fn network_stage(&self) -> Result<Vec<PathBuf>> {
        let cfg = self.cfg;
        let matrices = self.load_mapped()?;
        let graphs = par::map_slice(&matrices, |m| build_graph_with(m, cfg.alpha, cfg.epoch_length, cfg.null_test))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut outputs = Vec::new();
        let mut metrics = String::from("epoch,edges,density,clustering\n");
        for g in graphs {
            let g = match cfg.node_labels {
                NodeLabels::Coin => g,
                NodeLabels::Uniform => g.with_uniform_labels(),
            };
            let i = g.epoch.index;
            let json_rel = PathBuf::from(format!("graphs/epoch_{i}.json"));
            let dot_rel = PathBuf::from(format!("graphs/epoch_{i}.dot"));
            files::write(&self.path(&json_rel), g.to_json()?)?;
            files::write(&self.path(&dot_rel), g.to_dot())?;
            let gm = graph_metrics(&g);
            metrics.push_str(&format!(
                "{i},{},{},{}\n",
                g.edges.len(),
                files::fmt17(gm.density),
                files::fmt17(gm.clustering)
            ));
            outputs.push(json_rel);
            outputs.push(dot_rel);
        }
        files::write(&self.path("graphs/metrics.csv"), metrics)?;
        outputs.push("graphs/metrics.csv".into());
        Ok(outputs)
    }

    fn kernel_stage(&self) -> Result<Vec<PathBuf>> {
        let epochs = files::read_epochs(&self.path("epochs.csv"), self.cfg.epoch_length)?;
        let graphs = epochs
            .iter()
            .map(|e| MarketGraph::from_json(&files::read(&self.path(format!("graphs/epoch_{}.json", e.index)))?))
            .collect::<Result<Vec<_>>>()?;
        let mut dict = LabelDictionary::new();
        let labeled = graphs
            .iter()
            .map(|g| LabeledGraph::from_market_graph(g, &mut dict))
            .collect::<Result<Vec<_>>>()?;
        let ids: Vec<usize> = epochs.iter().map(|e| e.index).collect();
        let k = kernel_matrix(&labeled, ids.clone(), self.cfg.wl_iterations, true, &mut dict)?;
        let d = kernel_distance(&k)?;
        files::write_matrix(&self.path("kernel/kernel_matrix.csv"), &ids, &k.values)?;
        files::write_matrix(&self.path("kernel/distance_matrix.csv"), &ids, &d.values)?;
        Ok(vec!["kernel/kernel_matrix.csv".into(), "kernel/distance_matrix.csv".into()])
    }

    fn cluster_stage(&self) -> Result<Vec<PathBuf>> {
        let cfg = self.cfg;
        let epochs = files::read_epochs(&self.path("epochs.csv"), cfg.epoch_length)?;
        let parse_ids = |labels: Vec<String>| -> Result<Vec<usize>> {
            labels
                .iter()
                .map(|l| l.parse().map_err(|_| Error::format("kernel/kernel_matrix.csv", format!("bad epoch id {l:?}"))))
                .collect()
        };
        let (labels, values) = files::read_matrix(&self.path("kernel/kernel_matrix.csv"))?;
        let kernel = KernelMatrix {
            epoch_ids: parse_ids(labels)?,
            values,
            h: cfg.wl_iterations,
            normalized: true,
        };
        let (dlabels, dvalues) = files::read_matrix(&self.path("kernel/distance_matrix.csv"))?;
        let distances = crate::kernel::DistanceMatrix {
            epoch_ids: parse_ids(dlabels)?,
            values: dvalues,
        };
        let m = kernel.size();
        let spectrum = laplacian_spectrum(&affinity_matrix(&kernel, cfg.affinity_mode())?)?;
        let eigengap_k = (m > cfg.k_max)
            .then(|| eigengap_from_eigenvalues(&spectrum.eigenvalues, cfg.k_max))
            .transpose()?;
        let (k, k_source) = match (cfg.k, eigengap_k) {
            (Some(k), _) => (k, "override"),
            (None, Some(k)) => (k, "eigengap"),
            (None, None) => {
                return Err(Error::InvalidParameter(format!(
                    "{m} epochs are too few for an eigengap search up to {}; set k explicitly",
                    cfg.k_max
                )))
            }
        };
        if k > m {
            return Err(Error::InvalidParameter(format!("k = {k} exceeds the {m} epochs")));
        }
        let embedding = embed_spectrum(&spectrum, &kernel.epoch_ids, k)?;
        let fit = kmeans(&embedding.coordinates, k, seed::substream(cfg.seed, "cluster/kmeans"), cfg.restarts)?;
        let assignment = StateAssignment::new(&kernel.epoch_ids, &fit.labels, fit.inertia, &distances)?;

        let mut assignments = String::from("epoch_index,start_date,end_date,state\n");
        for (e, s) in assignment.epoch_ids.iter().zip(&assignment.state) {
            let epoch = epochs
                .iter()
                .find(|x| x.index == *e)
                .ok_or_else(|| Error::InvalidParameter(format!("kernel references unknown epoch {e}")))?;
            assignments.push_str(&format!("{e},{},{},{s}\n", epoch.start_date, epoch.end_date));
        }
        files::write(&self.path("states/assignments.csv"), assignments)?;
        let mut eig = String::from("index,eigenvalue\n");
        for (i, v) in spectrum.eigenvalues.iter().enumerate() {
            eig.push_str(&format!("{},{}\n", i + 1, files::fmt17(*v)));
        }
        files::write(&self.path("states/eigenvalues.csv"), eig)?;
        let mut outputs: Vec<PathBuf> = vec!["states/assignments.csv".into(), "states/eigenvalues.csv".into()];
        for (s, medoid) in assignment.medoid.iter().enumerate() {
            let (coins, values) =
                files::read_matrix(&self.path(format!("correlations/power_mapped/epoch_{medoid}.csv")))?;
            let rel = PathBuf::from(format!("states/state_{s}_medoid_matrix.csv"));
            files::write_matrix(&self.path(&rel), &coins, &values)?;
            outputs.push(rel);
        }
        let selection = Selection {
            k,
            k_source: k_source.to_string(),
            eigengap_k,
            inertia: assignment.inertia,
            medoids: assignment.medoid.clone(),
        };
        files::write(&self.path("states/selection.json"), serde_json::to_string_pretty(&selection)?)?;
        outputs.push("states/selection.json".into());
        Ok(outputs)
    }

    fn report_stage(&self) -> Result<Vec<PathBuf>> {
        let cfg = self.cfg;
        let epochs = files::read_epochs(&self.path("epochs.csv"), cfg.epoch_length)?;
        let stats = files::read_stats(&self.path("correlations/epoch_stats.csv"))?;
        let metrics = files::read_table(&self.path("graphs/metrics.csv"))?;
        let assignments = files::read_table(&self.path("states/assignments.csv"))?;
        let selection: Selection = serde_json::from_str(&files::read(&self.path("states/selection.json"))?)?;
        let bad = |what: &str| Error::format(self.path("report"), format!("inconsistent stage outputs: {what}"));

        let mut rows = Vec::with_capacity(epochs.len());
        for e in &epochs {
            let st = stats.iter().find(|s| s.epoch == e.index).ok_or_else(|| bad("epoch stats"))?;
            let mt = metrics
                .iter()
                .find(|r| r[0] == e.index.to_string())
                .ok_or_else(|| bad("graph metrics"))?;
            let state = assignments
                .iter()
                .find(|r| r[0] == e.index.to_string())
                .and_then(|r| r[3].parse().ok())
                .ok_or_else(|| bad("state assignment"))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("metric value"));
            rows.push(EpochSummary {
                index: e.index,
                start: e.start_date.to_string(),
                end: e.end_date.to_string(),
                state,
                mean_return: st.mean_return,
                mean_correlation: st.mean_correlation,
                edges: mt[1].parse().map_err(|_| bad("edge count"))?,
                density: num(&mt[2])?,
                clustering: num(&mt[3])?,
            });
        }
        let mut state_sizes = vec![0; selection.k];
        for r in &rows {
            state_sizes[r.state] += 1;
        }
        let states = (0..selection.k)
            .map(|s| {
                let members: Vec<&EpochSummary> = rows.iter().filter(|r| r.state == s).collect();
                StateSummaryRow {
                    state: s,
                    size: members.len(),
                    medoid: selection.medoids[s],
                    mean_correlation: members.iter().map(|r| r.mean_correlation).sum::<f64>() / members.len() as f64,
                }
            })
            .collect();
        let ari = match &cfg.labels {
            Some(path) => {
                let planted = files::read_labels(path)?;
                let truth = rows
                    .iter()
                    .map(|r| planted.get(&r.index).copied().ok_or_else(|| bad("planted label missing for an epoch")))
                    .collect::<Result<Vec<_>>>()?;
                let found: Vec<usize> = rows.iter().map(|r| r.state).collect();
                Some(adjusted_rand_index(&truth, &found))
            }
            None => None,
        };
        let summary = Summary {
            k: selection.k,
            k_source: selection.k_source,
            eigengap_k: selection.eigengap_k,
            state_sizes,
            medoids: selection.medoids,
            inertia: selection.inertia,
            ari,
            states,
            epochs: rows,
        };
        files::write(&self.path("report/summary.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(vec!["report/summary.json".into()])
    }

    fn write_manifest(&self, source_inputs: &[PathBuf]) -> Result<()> {
        let cfg = self.cfg;
        let mut inputs = BTreeMap::new();
        for p in source_inputs.iter().chain(cfg.labels.iter()) {
            inputs.insert(p.to_string_lossy().into_owned(), hash_file(p)?);
        }
        let mut params = serde_json::to_value(cfg)?;
        if let Some(obj) = params.as_object_mut() {
            obj.remove("out");
        }
        let mut stages = BTreeMap::new();
        for name in ["ingest", "returns", "correlate", "network", "kernel", "cluster", "report"] {
            let text = files::read(&self.path(STAGE_DIR).join(format!("{name}.json")))?;
            let record: StageRecord = serde_json::from_str(&text)?;
            stages.insert(name, record.fingerprint);
        }
        let manifest = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "parameters": params,
            "seeds": { "cluster/kmeans": seed::substream(cfg.seed, "cluster/kmeans") },
            "inputs": inputs,
            "stages": stages,
        });
        files::write(&self.path("manifest.json"), serde_json::to_string_pretty(&manifest)?)
    }
}

/// Writes a planted-regime panel (`panel.csv`) and its labels (`labels.csv`) into `dir`.
pub fn write_synthetic(dir: &Path, panel: &PricePanel, labels: &[usize]) -> Result<(PathBuf, PathBuf)> {
    let panel_path = dir.join("panel.csv");
    let labels_path = dir.join("labels.csv");
    write_csv(panel, &panel_path)?;
    files::write_labels(&labels_path, labels)?;
    Ok((panel_path, labels_path))
}
