//! Market-state selection: eigengap heuristic on a normalized graph Laplacian,
//! spectral embedding, and seeded k-means.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationMatrix, EpochStats};
use crate::error::{Error, Result};
use crate::kernel::{DistanceMatrix, KernelMatrix};
use crate::linalg::symmetric_eigen;
use crate::{par, seed};

/// How the normalized kernel becomes a spectral-clustering affinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Affinity {
    /// The normalized kernel itself, diagonal zeroed.
    Kernel,
    /// Symmetric k-nearest-neighbour graph of the normalized kernel: an entry
    /// is kept when either epoch is among the other's `n` most similar.
    NearestNeighbors(usize),
}

impl Default for Affinity {
    fn default() -> Self {
        Affinity::NearestNeighbors(10)
    }
}

pub fn affinity_matrix(kernel: &KernelMatrix, mode: Affinity) -> Result<DMatrix<f64>> {
    let k = kernel.normalized()?.values;
    let m = k.nrows();
    let mut dense = k.clone();
    dense.fill_diagonal(0.0);
    match mode {
        Affinity::Kernel => Ok(dense),
        Affinity::NearestNeighbors(n) => {
            if n == 0 {
                return Err(Error::InvalidParameter("nearest-neighbour count must be positive".into()));
            }
            let mut keep = DMatrix::from_element(m, m, false);
            for i in 0..m {
                let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
                others.sort_by(|&a, &b| k[(i, b)].total_cmp(&k[(i, a)]).then(a.cmp(&b)));
                for &j in others.iter().take(n) {
                    keep[(i, j)] = true;
                    keep[(j, i)] = true;
                }
            }
            Ok(DMatrix::from_fn(m, m, |i, j| if keep[(i, j)] { dense[(i, j)] } else { 0.0 }))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianSpectrum {
    /// Ascending eigenvalues of `I - D^{-1/2} A D^{-1/2}`.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, in eigenvalue order.
    pub eigenvectors: DMatrix<f64>,
}

/// Spectrum of the symmetric normalized Laplacian. Rows with zero degree are
/// given degree 1.
pub fn laplacian_spectrum(affinity: &DMatrix<f64>) -> Result<LaplacianSpectrum> {
    let m = affinity.nrows();
    let inv_sqrt: Vec<f64> = (0..m)
        .map(|i| {
            let d: f64 = affinity.row(i).iter().sum();
            1.0 / if d > 0.0 { d } else { 1.0 }.sqrt()
        })
        .collect();
    let mut lap = DMatrix::from_fn(m, m, |i, j| -affinity[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    for i in 0..m {
        lap[(i, i)] += 1.0;
    }
    // exact symmetry for the solver
    let lap = (&lap + lap.transpose()) * 0.5;
    let (eigenvalues, eigenvectors) = symmetric_eigen(&lap);
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEigenvalue);
    }
    Ok(LaplacianSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// `argmax_{i in 1..=k_max} (λ_{i+1} - λ_i)` over ascending eigenvalues
/// (1-based), preferring the smaller `i` on ties.
pub fn eigengap_from_eigenvalues(eigenvalues: &[f64], k_max: usize) -> Result<usize> {
    if k_max < 1 || eigenvalues.len() <= k_max {
        return Err(Error::InvalidParameter(format!(
            "eigengap search bound {k_max} needs more than {k_max} eigenvalues, got {}",
            eigenvalues.len()
        )));
    }
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..=k_max {
        let gap = eigenvalues[i] - eigenvalues[i - 1];
        if !gap.is_finite() {
            return Err(Error::NonFiniteEigenvalue);
        }
        if gap > best.1 {
            best = (i, gap);
        }
    }
    Ok(best.0)
}

/// Number of market states suggested by the largest Laplacian eigengap.
pub fn eigengap_k(kernel: &KernelMatrix, k_max: usize, affinity: Affinity) -> Result<usize> {
    if k_max < 2 || kernel.size() <= k_max {
        return Err(Error::InvalidParameter(format!(
            "eigengap needs m > k_max >= 2, got m = {}, k_max = {k_max}",
            kernel.size()
        )));
    }
    let spectrum = laplacian_spectrum(&affinity_matrix(kernel, affinity)?)?;
    eigengap_from_eigenvalues(&spectrum.eigenvalues, k_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    pub epoch_ids: Vec<usize>,
    /// One unit-norm row per epoch.
    pub coordinates: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

/// Rows of the `k` lowest Laplacian eigenvectors, each scaled to unit length.
pub fn embed_spectrum(spectrum: &LaplacianSpectrum, epoch_ids: &[usize], k: usize) -> Result<SpectralEmbedding> {
    let m = spectrum.eigenvalues.len();
    if k < 1 || k > m {
        return Err(Error::InvalidParameter(format!("embedding dimension {k} out of range for {m} epochs")));
    }
    let coordinates = (0..m)
        .map(|i| {
            let row: Vec<f64> = (0..k).map(|c| spectrum.eigenvectors[(i, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                Err(Error::ZeroEmbeddingRow(epoch_ids[i]))
            } else {
                Ok(row.into_iter().map(|v| v / norm).collect())
            }
        })
        .collect::<Result<_>>()?;
    Ok(SpectralEmbedding {
        epoch_ids: epoch_ids.to_vec(),
        coordinates,
        eigenvalues: spectrum.eigenvalues.clone(),
    })
}

pub fn spectral_embed(kernel: &KernelMatrix, k: usize, affinity: Affinity) -> Result<SpectralEmbedding> {
    if k < 2 || k >= kernel.size() {
        return Err(Error::InvalidParameter(format!(
            "spectral embedding needs 2 <= k < m, got k = {k}, m = {}",
            kernel.size()
        )));
    }
    let spectrum = laplacian_spectrum(&affinity_matrix(kernel, affinity)?)?;
    embed_spectrum(&spectrum, &kernel.epoch_ids, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

pub const KMEANS_MAX_ITERATIONS: usize = 300;
pub const KMEANS_TOLERANCE: f64 = 1e-10;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let m = points.len();
    let mut centroids = vec![points[rng.random_range(0..m)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        centroids.push(points[pick].clone());
        let newest = centroids.last().expect("just pushed");
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, newest));
        }
    }
    centroids
}

fn update_centroids(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().map(|v| v / c.max(1) as f64).collect())
        .collect()
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] > 1 {
                let d = sq_dist(p, &centroids[labels[i]]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        let Some(i) = far else { return };
        labels[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

fn lloyd<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> KMeansFit {
    let mut centroids = plus_plus_init(points, k, rng);
    let mut labels = vec![0; points.len()];
    let mut previous = f64::INFINITY;
    let mut inertia = f64::INFINITY;
    for _ in 0..KMEANS_MAX_ITERATIONS {
        for (l, p) in labels.iter_mut().zip(points) {
            *l = nearest(p, &centroids).0;
        }
        repair_empty(points, &mut labels, &mut centroids);
        centroids = update_centroids(points, &labels, k);
        inertia = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
        if inertia == 0.0 || (previous - inertia).abs() <= KMEANS_TOLERANCE * previous {
            break;
        }
        previous = inertia;
    }
    KMeansFit {
        labels,
        centroids,
        inertia,
    }
}

/// Best-of-`restarts` k-means++/Lloyd clustering.
///
/// Restart `r` draws from its own seeded stream, and the winner is the
/// lowest inertia with ties going to the lowest restart index, so the result
/// is the same for any thread count.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeansFit> {
    let m = points.len();
    if k == 0 || k > m {
        return Err(Error::InvalidParameter(format!("k-means needs 1 <= k <= m, got k = {k}, m = {m}")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidParameter("points have inconsistent dimensions".into()));
    }
    let fits = par::map_range(restarts.max(1), |r| {
        let mut rng = seed::rng(seed, &format!("kmeans/restart/{r}"));
        lloyd(points, k, &mut rng)
    });
    let mut best = 0;
    for (i, fit) in fits.iter().enumerate() {
        if fit.inertia < fits[best].inertia {
            best = i;
        }
    }
    Ok(fits.into_iter().nth(best).expect("at least one restart"))
}

/// Relabels so states appear in first-occurrence order.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAssignment {
    pub epoch_ids: Vec<usize>,
    pub state: Vec<usize>,
    pub k: usize,
    /// Medoid epoch id per state.
    pub medoid: Vec<usize>,
    pub inertia: f64,
}

impl StateAssignment {
    pub fn new(epoch_ids: &[usize], labels: &[usize], inertia: f64, distances: &DistanceMatrix) -> Result<Self> {
        if labels.len() != epoch_ids.len() || distances.epoch_ids != epoch_ids {
            return Err(Error::InvalidParameter("state labels, epochs and distances disagree".into()));
        }
        let state = canonical_labels(labels);
        let k = state.iter().max().map_or(0, |s| s + 1);
        let medoid = (0..k)
            .map(|s| {
                let members: Vec<usize> = (0..state.len()).filter(|&i| state[i] == s).collect();
                let mut best = (members[0], f64::INFINITY);
                for &i in &members {
                    let total: f64 = members.iter().map(|&j| distances.values[(i, j)]).sum();
                    if total < best.1 {
                        best = (i, total);
                    }
                }
                epoch_ids[best.0]
            })
            .collect();
        Ok(Self {
            epoch_ids: epoch_ids.to_vec(),
            state,
            k,
            medoid,
            inertia,
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &s in &self.state {
            sizes[s] += 1;
        }
        sizes
    }
}

/// Chance-corrected agreement between two partitions of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions must cover the same items");
    let n = a.len();
    let choose2 = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n as u64);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub state: usize,
    pub members: Vec<usize>,
    pub medoid: usize,
    pub mean_correlation: f64,
    #[serde(skip)]
    pub medoid_matrix: Option<CorrelationMatrix>,
}

pub fn summarize_states(
    assignment: &StateAssignment,
    matrices: &[CorrelationMatrix],
    stats: &[EpochStats],
) -> Vec<StateSummary> {
    (0..assignment.k)
        .map(|s| {
            let members: Vec<usize> = assignment
                .epoch_ids
                .iter()
                .zip(&assignment.state)
                .filter(|(_, &st)| st == s)
                .map(|(&e, _)| e)
                .collect();
            let corrs: Vec<f64> = members
                .iter()
                .filter_map(|e| stats.iter().find(|st| st.epoch == *e))
                .map(|st| st.mean_correlation)
                .collect();
            let medoid = assignment.medoid[s];
            StateSummary {
                state: s,
                mean_correlation: if corrs.is_empty() {
                    f64::NAN
                } else {
                    corrs.iter().sum::<f64>() / corrs.len() as f64
                },
                medoid_matrix: matrices.iter().find(|m| m.epoch.index == medoid).cloned(),
                medoid,
                members,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(sizes: &[usize]) -> DMatrix<f64> {
        let m: usize = sizes.iter().sum();
        let mut owner = Vec::new();
        for (b, &s) in sizes.iter().enumerate() {
            owner.extend(std::iter::repeat_n(b, s));
        }
        DMatrix::from_fn(m, m, |i, j| if i != j && owner[i] == owner[j] { 1.0 } else { 0.0 })
    }

    #[test]
    fn disconnected_blocks_force_gap() {
        for sizes in [vec![5, 5, 5], vec![4, 6, 3, 7], vec![10, 10]] {
            let spec = laplacian_spectrum(&blocks(&sizes)).unwrap();
            assert_eq!(eigengap_from_eigenvalues(&spec.eigenvalues, 5.min(spec.eigenvalues.len() - 1)).unwrap(), sizes.len());
            assert!(spec.eigenvalues.iter().all(|v| (-1e-8..=2.0 + 1e-8).contains(v)));
        }
    }

    #[test]
    fn block_embedding_rows_are_block_constant() {
        let spec = laplacian_spectrum(&blocks(&[4, 4])).unwrap();
        let emb = embed_spectrum(&spec, &(0..8).collect::<Vec<_>>(), 2).unwrap();
        for i in 0..4 {
            for c in 0..2 {
                assert!((emb.coordinates[i][c] - emb.coordinates[0][c]).abs() < 1e-9);
                assert!((emb.coordinates[4 + i][c] - emb.coordinates[4][c]).abs() < 1e-9);
            }
        }
        let dot: f64 = emb.coordinates[0].iter().zip(&emb.coordinates[4]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-9 || (dot + 1.0).abs() < 1e-9);
    }

    #[test]
    fn eigengap_tie_prefers_smaller() {
        assert_eq!(eigengap_from_eigenvalues(&[0.0, 1.0, 2.0, 3.0], 3).unwrap(), 1);
        assert!(eigengap_from_eigenvalues(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn kmeans_single_cluster() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 1.0]).collect();
        let fit = kmeans(&pts, 1, 3, 5).unwrap();
        assert!(fit.labels.iter().all(|&l| l == 0));
        assert!(kmeans(&pts, 7, 3, 5).is_err());
    }

    #[test]
    fn kmeans_exact_locations() {
        let locs = [[0.0, 0.0], [5.0, 1.0], [-3.0, 4.0], [2.0, -6.0]];
        let pts: Vec<Vec<f64>> = (0..40).map(|i| locs[(i * 7) % 4].to_vec()).collect();
        let truth: Vec<usize> = (0..40).map(|i| (i * 7) % 4).collect();
        let fit = kmeans(&pts, 4, 11, 10).unwrap();
        assert_eq!(fit.inertia, 0.0);
        assert_eq!(adjusted_rand_index(&fit.labels, &truth), 1.0);
    }

    #[test]
    fn kmeans_is_deterministic() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()]).collect();
        let a = kmeans(&pts, 3, 42, 20).unwrap();
        let b = crate::par::with_jobs(Some(1), || kmeans(&pts, 3, 42, 20).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        // pair counting: index 1, sums 2 and 1 over 6 pairs
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]);
        assert!((v - 4.0 / 7.0).abs() < 1e-15);
        let v = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 1, 0, 1, 0, 1]);
        assert!(v < 0.0);
    }

    #[test]
    fn canonical_first_occurrence() {
        assert_eq!(canonical_labels(&[2, 2, 0, 1, 0]), vec![0, 0, 1, 2, 1]);
    }

    #[test]
    fn medoid_rules() {
        let d = DistanceMatrix {
            epoch_ids: vec![10, 11, 12],
            values: DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]),
        };
        // state 0 = {10, 12} tie -> 10; state 1 = {11} singleton
        let a = StateAssignment::new(&[10, 11, 12], &[5, 3, 5], 0.0, &d).unwrap();
        assert_eq!(a.state, vec![0, 1, 0]);
        assert_eq!(a.medoid, vec![10, 11]);
        assert_eq!(a.sizes(), vec![2, 1]);
    }

    #[test]
    fn knn_affinity_is_symmetric_and_sparse() {
        let vals = DMatrix::from_fn(6, 6, |i, j| if i == j { 1.0 } else { 1.0 / (1.0 + (i as f64 - j as f64).abs()) });
        let k = KernelMatrix {
            epoch_ids: (0..6).collect(),
            values: vals,
            h: 0,
            normalized: true,
        };
        let a = affinity_matrix(&k, Affinity::NearestNeighbors(1)).unwrap();
        assert_eq!(a.clone(), a.transpose());
        assert_eq!(a[(0, 0)], 0.0);
        assert_eq!(a[(0, 1)], 0.5);
        assert_eq!(a[(0, 2)], 0.0);
    }
}
