//! Weisfeiler-Lehman subtree kernel.
//!
//! Each refinement step replaces a node's label by a compressed id for the
//! pair (own label, sorted multiset of neighbour labels). Compression goes
//! through one [`LabelDictionary`] shared by every graph being compared, so
//! equal augmented labels receive equal ids everywhere. The feature map of a
//! graph is the label histogram of iterations `0..=h`, and the kernel is the
//! dot product of feature maps.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues;
use crate::network::MarketGraph;
use crate::par;

/// Relative tolerance for negative eigenvalues of a kernel matrix.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Signature {
    Initial(String),
    Refined(u32, Vec<u32>),
}

/// Injective map from (augmented) labels to short integer ids.
#[derive(Debug, Default, Clone)]
pub struct LabelDictionary {
    ids: HashMap<Signature, u32>,
}

impl LabelDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, sig: Signature) -> u32 {
        let next = self.ids.len() as u32;
        *self.ids.entry(sig).or_insert(next)
    }

    pub fn intern_initial(&mut self, label: &str) -> u32 {
        self.intern(Signature::Initial(label.to_string()))
    }

    /// Id for `(own, neighbours)`; `neighbours` need not be sorted.
    pub fn compress(&mut self, own: u32, mut neighbours: Vec<u32>) -> u32 {
        neighbours.sort_unstable();
        self.intern(Signature::Refined(own, neighbours))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Undirected, loop-free graph with compressed node labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    labels: Vec<u32>,
    adjacency: Vec<Vec<usize>>,
}

impl LabeledGraph {
    pub fn new(labels: Vec<u32>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = labels.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop on node {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        Ok(Self { labels, adjacency })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S], edges: &[(usize, usize)], dict: &mut LabelDictionary) -> Result<Self> {
        let labels = names.iter().map(|s| dict.intern_initial(s.as_ref())).collect();
        Self::new(labels, edges)
    }

    pub fn from_market_graph(graph: &MarketGraph, dict: &mut LabelDictionary) -> Result<Self> {
        Self::from_names(&graph.labels, &graph.edges, dict)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }
}

/// One WL relabelling step.
pub fn wl_refine(graph: &LabeledGraph, dict: &mut LabelDictionary) -> LabeledGraph {
    let labels = graph
        .adjacency
        .iter()
        .zip(&graph.labels)
        .map(|(adj, &own)| dict.compress(own, adj.iter().map(|&j| graph.labels[j]).collect()))
        .collect();
    LabeledGraph {
        labels,
        adjacency: graph.adjacency.clone(),
    }
}

/// Label counts for iterations `0..=h`, each sorted by label id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureHistogram {
    iterations: Vec<Vec<(u32, u64)>>,
}

impl FeatureHistogram {
    fn from_labels(labels: &[u32]) -> Vec<(u32, u64)> {
        let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
        for &l in labels {
            *counts.entry(l).or_default() += 1;
        }
        counts.into_iter().collect()
    }

    pub fn iterations(&self) -> &[Vec<(u32, u64)>] {
        &self.iterations
    }

    pub fn depth(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }

    /// Exact integer dot product over the common iterations.
    pub fn dot(&self, other: &Self) -> u64 {
        self.iterations
            .iter()
            .zip(&other.iterations)
            .map(|(a, b)| sparse_dot(a, b))
            .sum()
    }
}

fn sparse_dot(a: &[(u32, u64)], b: &[(u32, u64)]) -> u64 {
    let (mut i, mut j, mut acc) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

pub fn wl_feature_map(graph: &LabeledGraph, h: usize, dict: &mut LabelDictionary) -> FeatureHistogram {
    let mut iterations = Vec::with_capacity(h + 1);
    iterations.push(FeatureHistogram::from_labels(&graph.labels));
    let mut current = graph.clone();
    for _ in 0..h {
        current = wl_refine(&current, dict);
        iterations.push(FeatureHistogram::from_labels(&current.labels));
    }
    FeatureHistogram { iterations }
}

pub fn wl_kernel(g1: &LabeledGraph, g2: &LabeledGraph, h: usize, dict: &mut LabelDictionary) -> f64 {
    let f1 = wl_feature_map(g1, h, dict);
    let f2 = wl_feature_map(g2, h, dict);
    f1.dot(&f2) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub epoch_ids: Vec<usize>,
    pub values: DMatrix<f64>,
    pub h: usize,
    pub normalized: bool,
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.epoch_ids.len()
    }

    /// `K(x,y) / sqrt(K(x,x) K(y,y))`. Idempotent on normalized matrices.
    pub fn normalized(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        let m = self.size();
        let diag: Vec<f64> = (0..m).map(|i| self.values[(i, i)]).collect();
        if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
            return Err(Error::EmptyGraph(self.epoch_ids[i]));
        }
        let mut values = DMatrix::from_fn(m, m, |i, j| self.values[(i, j)] / (diag[i] * diag[j]).sqrt());
        values.fill_diagonal(1.0);
        Ok(Self {
            epoch_ids: self.epoch_ids.clone(),
            values,
            h: self.h,
            normalized: true,
        })
    }

    /// Smallest eigenvalue relative to the largest magnitude eigenvalue.
    pub fn check_psd(&self) -> Result<()> {
        check_psd(&self.values)
    }
}

pub fn check_psd(values: &DMatrix<f64>) -> Result<()> {
    let eig = symmetric_eigenvalues(values);
    let (Some(&min), Some(&max)) = (eig.first(), eig.last()) else {
        return Ok(());
    };
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::NonFiniteEigenvalue);
    }
    if min < -PSD_TOLERANCE * max.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveSemidefinite(format!(
            "min eigenvalue {min:e} vs max {max:e}"
        )));
    }
    Ok(())
}

/// Feature maps for a whole collection, compressed against one dictionary.
///
/// Graphs are processed sequentially in the given order so compressed ids do
/// not depend on scheduling.
pub fn wl_feature_maps(graphs: &[LabeledGraph], h: usize, dict: &mut LabelDictionary) -> Vec<FeatureHistogram> {
    graphs.iter().map(|g| wl_feature_map(g, h, dict)).collect()
}

/// Kernel matrix over feature maps. Pairs are evaluated in parallel and
/// placed at fixed indices.
pub fn kernel_from_features(features: &[FeatureHistogram], epoch_ids: Vec<usize>, h: usize) -> KernelMatrix {
    let m = features.len();
    let rows = par::map_range(m, |i| (i..m).map(|j| features[i].dot(&features[j])).collect::<Vec<u64>>());
    let mut values = DMatrix::zeros(m, m);
    for (i, row) in rows.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + offset;
            values[(i, j)] = v as f64;
            values[(j, i)] = v as f64;
        }
    }
    KernelMatrix {
        epoch_ids,
        values,
        h,
        normalized: false,
    }
}

pub fn kernel_matrix(
    graphs: &[LabeledGraph],
    epoch_ids: Vec<usize>,
    h: usize,
    normalize: bool,
    dict: &mut LabelDictionary,
) -> Result<KernelMatrix> {
    if graphs.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "kernel matrix needs at least 2 graphs, got {}",
            graphs.len()
        )));
    }
    if epoch_ids.len() != graphs.len() {
        return Err(Error::InvalidParameter("one epoch id per graph required".into()));
    }
    if let Some(i) = graphs.iter().position(|g| g.node_count() == 0) {
        return Err(Error::EmptyGraph(epoch_ids[i]));
    }
    let features = wl_feature_maps(graphs, h, dict);
    let k = kernel_from_features(&features, epoch_ids, h);
    if normalize {
        k.normalized()
    } else {
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub epoch_ids: Vec<usize>,
    pub values: DMatrix<f64>,
}

/// Feature-space distance `sqrt(K(x,x) + K(y,y) - 2K(x,y))`.
pub fn kernel_distance(kernel: &KernelMatrix) -> Result<DistanceMatrix> {
    kernel.check_psd()?;
    let m = kernel.size();
    let k = &kernel.values;
    let mut values = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let sq = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
            let tol = 1e-9 * k[(i, i)].max(k[(j, j)]).max(1.0);
            if sq < -tol {
                return Err(Error::NotPositiveSemidefinite(format!(
                    "squared distance {sq:e} between epochs {} and {}",
                    kernel.epoch_ids[i], kernel.epoch_ids[j]
                )));
            }
            let d = sq.max(0.0).sqrt();
            values[(i, j)] = d;
            values[(j, i)] = d;
        }
    }
    Ok(DistanceMatrix {
        epoch_ids: kernel.epoch_ids.clone(),
        values,
    })
}
