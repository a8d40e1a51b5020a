//! Significance-filtered correlation graphs.
//!
//! An edge joins two coins when their correlation is incompatible with a
//! white-noise null (all series mutually independent). Under that null the
//! Fisher transform `atanh(C)` of a length-`T` sample correlation is roughly
//! normal with standard deviation `1/sqrt(T-3)`. Each of the `K(K-1)/2` pairs
//! gets a two-sided test at level `alpha / (K(K-1)/2)` (Bonferroni).
//!
//! This stands in for a full null-model selection procedure; only the
//! white-noise null is implemented.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::timeseries::Epoch;

/// Label given to every node when coin identities are ignored.
pub const UNIFORM_LABEL: &str = "*";

#[derive(Debug, Clone, PartialEq)]
pub struct MarketGraph {
    pub epoch: Epoch,
    /// Node ids (coin ids), in correlation-matrix order.
    pub nodes: Vec<String>,
    /// Initial node labels, aligned with `nodes`.
    pub labels: Vec<String>,
    /// Undirected edges as `(i, j)` node indices with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub alpha: f64,
    pub t_used: usize,
}

/// Null distribution used for the per-pair test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullTest {
    /// Fisher transform with normal tails. Anti-conservative far in the tail
    /// for short epochs.
    #[default]
    Fisher,
    /// Exact Student-t law of `C·sqrt(T-2)/sqrt(1-C²)` for independent Gaussian series.
    StudentT,
}

/// Smallest raw |C| that is significant for `k` nodes, `t` samples and
/// family-wise level `alpha`. Returns `None` when there are no pairs to test.
pub fn critical_correlation(alpha: f64, t: usize, k: usize) -> Result<Option<f64>> {
    critical_correlation_with(alpha, t, k, NullTest::Fisher)
}

pub fn critical_correlation_with(alpha: f64, t: usize, k: usize, test: NullTest) -> Result<Option<f64>> {
    if t <= 3 {
        return Err(Error::NullModelUndefined(t));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let pairs = k * k.saturating_sub(1) / 2;
    if pairs == 0 {
        return Ok(None);
    }
    let per_pair = alpha / pairs as f64;
    // lower-tail quantiles keep precision for tiny per-pair levels
    match test {
        NullTest::Fisher => {
            let z = -Normal::standard().inverse_cdf(per_pair / 2.0);
            Ok(Some((z / ((t - 3) as f64).sqrt()).tanh()))
        }
        NullTest::StudentT => {
            let dof = (t - 2) as f64;
            let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let q = -dist.inverse_cdf(per_pair / 2.0);
            Ok(Some(q / (dof + q * q).sqrt()))
        }
    }
}

/// Builds the significance graph of one epoch.
///
/// A power-mapped matrix is thresholded at the power-mapped critical value,
/// which selects exactly the same pairs as testing the raw coefficients.
pub fn build_graph(matrix: &CorrelationMatrix, alpha: f64, t: usize) -> Result<MarketGraph> {
    build_graph_with(matrix, alpha, t, NullTest::Fisher)
}

pub fn build_graph_with(matrix: &CorrelationMatrix, alpha: f64, t: usize, test: NullTest) -> Result<MarketGraph> {
    let k = matrix.size();
    let critical = critical_correlation_with(alpha, t, k, test)?;
    let mut edges = Vec::new();
    if let Some(raw) = critical {
        let threshold = raw.powf(matrix.q_applied);
        for i in 0..k {
            for j in i + 1..k {
                let c = matrix.values[(i, j)].abs();
                if c > threshold || c >= 1.0 {
                    edges.push((i, j));
                }
            }
        }
    }
    Ok(MarketGraph {
        epoch: matrix.epoch.clone(),
        nodes: matrix.coin_ids.clone(),
        labels: matrix.coin_ids.clone(),
        edges,
        alpha,
        t_used: t,
    })
}

impl MarketGraph {
    pub fn with_uniform_labels(mut self) -> Self {
        self.labels = vec![UNIFORM_LABEL.to_string(); self.nodes.len()];
        self
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GraphDocument {
            epoch: self.epoch.clone(),
            nodes: self
                .nodes
                .iter()
                .zip(&self.labels)
                .map(|(id, label)| NodeDocument {
                    id: id.clone(),
                    label: label.clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|&(i, j)| [self.nodes[i].clone(), self.nodes[j].clone()])
                .collect(),
            alpha: self.alpha,
            t: self.t_used,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphDocument = serde_json::from_str(text)?;
        let nodes: Vec<String> = doc.nodes.iter().map(|n| n.id.clone()).collect();
        let index = |id: &str| {
            nodes
                .iter()
                .position(|n| n == id)
                .ok_or_else(|| Error::InvalidParameter(format!("edge references unknown node {id:?}")))
        };
        let mut edges = Vec::with_capacity(doc.edges.len());
        for [a, b] in &doc.edges {
            let (i, j) = (index(a)?, index(b)?);
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop on {a:?}")));
            }
            edges.push((i.min(j), i.max(j)));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            epoch: doc.epoch,
            labels: doc.nodes.into_iter().map(|n| n.label).collect(),
            nodes,
            edges,
            alpha: doc.alpha,
            t_used: doc.t,
        })
    }

    pub fn to_dot(&self) -> String {
        let mut out = format!("graph epoch_{} {{\n", self.epoch.index);
        for (id, label) in self.nodes.iter().zip(&self.labels) {
            let _ = writeln!(out, "  {id:?} [label={label:?}];");
        }
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "  {:?} -- {:?};", self.nodes[i], self.nodes[j]);
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
struct NodeDocument {
    id: String,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct GraphDocument {
    epoch: Epoch,
    nodes: Vec<NodeDocument>,
    edges: Vec<[String; 2]>,
    alpha: f64,
    #[serde(rename = "T")]
    t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    /// `|E| / (K(K-1)/2)`.
    pub density: f64,
    /// Transitivity: `3 · triangles / connected triples`.
    pub clustering: f64,
}

pub fn graph_metrics(graph: &MarketGraph) -> GraphMetrics {
    let k = graph.nodes.len();
    let pairs = k * k.saturating_sub(1) / 2;
    let density = if pairs == 0 {
        0.0
    } else {
        graph.edges.len() as f64 / pairs as f64
    };
    let adj = graph.adjacency();
    let triples: usize = adj.iter().map(|a| a.len() * a.len().saturating_sub(1) / 2).sum();
    let mut triangles = 0usize;
    for &(i, j) in &graph.edges {
        // common neighbours w > j count each triangle once
        triangles += sorted_intersection(&adj[i], &adj[j]).filter(|&w| w > j).count();
    }
    let clustering = if triples == 0 {
        0.0
    } else {
        3.0 * triangles as f64 / triples as f64
    };
    GraphMetrics { density, clustering }
}

fn sorted_intersection<'a>(a: &'a [usize], b: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || {
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                    return Some(a[i - 1]);
                }
            }
        }
        None
    })
}
