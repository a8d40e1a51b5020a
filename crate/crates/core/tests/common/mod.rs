//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use marketstates::pipeline::{self, PipelineConfig, Summary};
use marketstates::synth::{cyclic_block_regimes, generate_panel, planted_labels};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small labelled graph: node names plus undirected edges.
#[derive(Debug, Clone)]
pub struct SmallGraph {
    pub names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

/// WL feature map by explicit string relabelling: the label of a node after
/// one step is `own(sorted,neighbour,labels)`. Returns one histogram per
/// iteration `0..=h`.
pub fn oracle_features(g: &SmallGraph, h: usize) -> Vec<BTreeMap<String, u64>> {
    let n = g.names.len();
    let mut nbrs = vec![Vec::new(); n];
    for &(a, b) in &g.edges {
        nbrs[a].push(b);
        nbrs[b].push(a);
    }
    let mut labels = g.names.clone();
    let mut out = Vec::new();
    for it in 0..=h {
        let mut hist = BTreeMap::new();
        for l in &labels {
            *hist.entry(l.clone()).or_insert(0) += 1;
        }
        out.push(hist);
        if it == h {
            break;
        }
        labels = (0..n)
            .map(|v| {
                let mut ns: Vec<&str> = nbrs[v].iter().map(|&u| labels[u].as_str()).collect();
                ns.sort();
                format!("{}({})", labels[v], ns.join(","))
            })
            .collect();
    }
    out
}

pub fn oracle_dot(a: &[BTreeMap<String, u64>], b: &[BTreeMap<String, u64>]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().map(|(k, c)| c * y.get(k).copied().unwrap_or(0)).sum::<u64>())
        .sum()
}

/// Every labelling over `alphabet` of every edge set on `n` nodes.
pub fn all_graphs(n: usize, alphabet: &[&str]) -> Vec<SmallGraph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut graphs = Vec::new();
    let labelings = alphabet.len().pow(n as u32);
    for mask in 0u64..(1 << pairs.len()) {
        let edges: Vec<(usize, usize)> = pairs
            .iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .map(|(_, &p)| p)
            .collect();
        for code in 0..labelings {
            let mut c = code;
            let names = (0..n)
                .map(|_| {
                    let s = alphabet[c % alphabet.len()].to_string();
                    c /= alphabet.len();
                    s
                })
                .collect();
            graphs.push(SmallGraph {
                names,
                edges: edges.clone(),
            });
        }
    }
    graphs
}

pub fn random_graph(rng: &mut impl Rng, n: usize, alphabet: &[&str], p: f64) -> SmallGraph {
    let names = (0..n)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())].to_string())
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    SmallGraph { names, edges }
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Upper normal tail `P(Z > z)` by composite Simpson integration of the
/// density over `[z, z + 12]`.
pub fn normal_tail(z: f64) -> f64 {
    let steps = 20_000;
    let (a, b) = (z, z + 12.0);
    let h = (b - a) / steps as f64;
    let mut acc = std_normal_pdf(a) + std_normal_pdf(b);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * std_normal_pdf(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Critical |C| of the two-sided Bonferroni white-noise test, by bisection
/// on the integrated tail.
pub fn critical_oracle(alpha: f64, t: usize, k: usize) -> f64 {
    let m = (k * (k - 1) / 2) as f64;
    let target = alpha / (2.0 * m);
    let (mut lo, mut hi) = (0.0_f64, 12.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_tail(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi) / ((t - 3) as f64).sqrt()).tanh()
}

/// `rows` i.i.d. standard normal series of length `t`.
pub fn gaussian_rows(rng: &mut impl Rng, rows: usize, t: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..t).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())
        .collect()
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Writes the standard planted-regime panel (40 coins, T = 20, 103 epochs,
/// 4 cyclic regimes) into `dir` and returns a config pointing at it.
pub fn planted_config(dir: &Path, seed: u64) -> PipelineConfig {
    let specs = cyclic_block_regimes(40, 4, 103, 0.7, 0.1).unwrap();
    let panel = generate_panel(&specs, 40, 20, 103, seed).unwrap();
    let labels = planted_labels(&specs).unwrap();
    let (panel_path, labels_path) = pipeline::write_synthetic(dir, &panel, &labels).unwrap();
    PipelineConfig {
        input: Some(panel_path),
        labels: Some(labels_path),
        out: dir.join("out"),
        seed,
        ..Default::default()
    }
}

pub fn run_summary(cfg: &PipelineConfig, jobs: Option<usize>) -> Summary {
    pipeline::run(cfg, jobs).unwrap().summary
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
