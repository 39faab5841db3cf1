//! Normalized spectral clustering of the view graph.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::math::{derive_seed, sqrt};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    pub k: usize,
    /// Defaults to `k` when unset.
    pub n_eigenvectors: Option<usize>,
    /// Use `ceil(log2 k)` eigenvectors after skipping the leading one.
    pub log2_eigenvectors: bool,
    pub eigen_tolerance: f64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
    pub rng_seed: u64,
}

impl SpectralConfig {
    pub fn new(k: usize) -> Self {
        SpectralConfig {
            k,
            n_eigenvectors: None,
            log2_eigenvectors: false,
            eigen_tolerance: 1e-9,
            kmeans_restarts: 10,
            kmeans_max_iters: 300,
            rng_seed: 0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::invalid(
                "k",
                alloc::format!("must be in [1, {n}], got {}", self.k),
            ));
        }
        if self.n_eigenvectors.is_some_and(|d| d == 0 || d > n) {
            return Err(Error::invalid("n_eigenvectors", "must be in [1, N]"));
        }
        if !(self.eigen_tolerance > 0.0 && self.eigen_tolerance.is_finite()) {
            return Err(Error::invalid("eigen_tolerance", "must be positive"));
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iters == 0 {
            return Err(Error::invalid(
                "kmeans",
                "restarts and iterations must be positive",
            ));
        }
        Ok(())
    }

    fn embedding_columns(&self) -> (usize, usize) {
        if self.log2_eigenvectors {
            let mut d = 0;
            while (1usize << d) < self.k {
                d += 1;
            }
            (1, d.max(1))
        } else {
            (0, self.n_eigenvectors.unwrap_or(self.k))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Frame order sorted by label, ties by frame index.
    pub permutation: Vec<usize>,
}

impl ClusterAssignment {
    /// Relabels clusters by order of first occurrence.
    pub fn from_labels(labels: &[usize], k: usize) -> Self {
        let mut map = vec![usize::MAX; k.max(labels.iter().map(|l| l + 1).max().unwrap_or(0))];
        let mut next = 0;
        let labels: Vec<usize> = labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        let mut permutation: Vec<usize> = (0..labels.len()).collect();
        permutation.sort_by_key(|&f| labels[f]);
        ClusterAssignment {
            labels,
            k,
            permutation,
        }
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&f| self.labels[f] == cluster)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// `D^{-1/2} A D^{-1/2}` with `D` the row sums of `A`.
pub fn normalized_laplacian(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut inv_sqrt = vec![0.0; n];
    for (i, d) in inv_sqrt.iter_mut().enumerate() {
        let sum: f64 = a.row(i).iter().sum();
        if sum <= 0.0 {
            return Err(Error::IsolatedNode(i));
        }
        *d = 1.0 / sqrt(sum);
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        a[(i, j)] * inv_sqrt[i] * inv_sqrt[j]
    }))
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending
/// (ties by original index) with matching eigenvector columns.
pub fn symmetric_eigen(l: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = l.nrows();
    let eig = l
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenSolver(alloc::format!("no convergence for {n}x{n} matrix")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Flips each column so its first nonzero component is positive.
pub fn canonicalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        if let Some(&first) = col.iter().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// One unit-length row per frame.
    pub rows: DMatrix<f64>,
    /// Eigenvalues of the selected columns.
    pub eigenvalues: Vec<f64>,
    pub max_residual: f64,
}

pub fn spectral_embed(l: &DMatrix<f64>, config: &SpectralConfig) -> Result<Embedding> {
    let n = l.nrows();
    config.validate(n)?;
    let (skip, d) = config.embedding_columns();
    if skip + d > n {
        return Err(Error::invalid(
            "n_eigenvectors",
            alloc::format!("{} eigenvectors requested from {n} frames", skip + d),
        ));
    }
    let (values, vectors) = symmetric_eigen(l)?;
    let mut cols = vectors.columns(skip, d).into_owned();
    let eigenvalues: Vec<f64> = values[skip..skip + d].to_vec();

    let norm_l = l.norm();
    let mut max_residual: f64 = 0.0;
    for (c, &lambda) in eigenvalues.iter().enumerate() {
        let v = cols.column(c);
        let r = (l * v - v * lambda).norm();
        max_residual = max_residual.max(r);
        if r > config.eigen_tolerance * norm_l.max(1.0) {
            return Err(Error::EigenSolver(alloc::format!(
                "eigenpair {c} residual {r:.3e} exceeds tolerance"
            )));
        }
    }
    canonicalize_signs(&mut cols);
    for mut row in cols.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(Embedding {
        rows: cols,
        eigenvalues,
        max_residual,
    })
}

/// Eigenvalues of the normalized affinity in descending order and the gaps
/// between consecutive ones, to help pick `k` by hand.
pub fn eigengaps(a: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (values, _) = symmetric_eigen(&normalized_laplacian(a)?)?;
    let gaps = values.windows(2).map(|w| w[0] - w[1]).collect();
    Ok((values, gaps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: ClusterAssignment,
    pub distortion: f64,
    pub centroids: DMatrix<f64>,
}

fn dist2(rows: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    rows.row(i)
        .iter()
        .zip(c.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Index of the nearest centroid; lowest index wins ties.
fn nearest(rows: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..centroids.nrows() {
        let d = dist2(rows, i, centroids, j);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(rows: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = rows.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(rows, i, rows, chosen[0])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = i;
                    break;
                }
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // All remaining points coincide with a centre.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(rows, i, rows, next));
        }
    }
    DMatrix::from_fn(k, rows.ncols(), |r, c| rows[(chosen[r], c)])
}

fn lloyd(
    rows: &DMatrix<f64>,
    mut centroids: DMatrix<f64>,
    max_iters: usize,
) -> (Vec<usize>, DMatrix<f64>, f64) {
    let n = rows.nrows();
    let k = centroids.nrows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iters {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (j, d) = nearest(rows, i, &centroids);
            dists[i] = d;
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        // Re-seed empty clusters from the point farthest from its centroid,
        // taken from a cluster that can spare it.
        loop {
            let mut sizes = vec![0usize; k];
            for &l in &labels {
                sizes[l] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let mut far = None;
            for i in 0..n {
                if sizes[labels[i]] > 1 && far.is_none_or(|f: usize| dists[i] > dists[f]) {
                    far = Some(i);
                }
            }
            let far = far.expect("k <= n guarantees a donor cluster");
            labels[far] = empty;
            dists[far] = 0.0;
            centroids.set_row(empty, &rows.row(far));
            changed = true;
        }
        let mut sums = DMatrix::zeros(k, rows.ncols());
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let mut r = sums.row_mut(labels[i]);
            r += rows.row(i);
            counts[labels[i]] += 1;
        }
        for (j, &c) in counts.iter().enumerate() {
            let mut r = sums.row_mut(j);
            r /= c as f64;
        }
        centroids = sums;
        if !changed {
            break;
        }
    }
    let distortion = (0..n).map(|i| dist2(rows, i, &centroids, labels[i])).sum();
    (labels, centroids, distortion)
}

/// Best of several k-means++ seeded Lloyd runs; earlier restarts win ties.
pub fn kmeans(rows: &DMatrix<f64>, k: usize, config: &SpectralConfig) -> Result<KMeansResult> {
    let n = rows.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(
            "k",
            alloc::format!("must be in [1, {n}], got {k}"),
        ));
    }
    if rows.ncols() == 0 {
        return Err(Error::invalid("rows", "embedding has no columns"));
    }
    let mut best: Option<(Vec<usize>, DMatrix<f64>, f64)> = None;
    for restart in 0..config.kmeans_restarts.max(1) {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, &[0x4b4d, restart as u64]));
        let init = plus_plus_init(rows, k, &mut rng);
        let run = lloyd(rows, init, config.kmeans_max_iters.max(1));
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (labels, centroids, distortion) = best.expect("at least one restart");
    let assignment = ClusterAssignment::from_labels(&labels, k);
    // Reorder centroid rows to follow the canonical labels.
    let mut canon = DMatrix::zeros(k, rows.ncols());
    for (i, &l) in labels.iter().enumerate() {
        canon.set_row(assignment.labels[i], &centroids.row(l));
    }
    Ok(KMeansResult {
        assignment,
        distortion,
        centroids: canon,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignment: ClusterAssignment,
    /// `P^T A P` with `P` the assignment permutation.
    pub rearranged: DMatrix<f64>,
    pub embedding: Embedding,
    pub distortion: f64,
}

pub fn rearrange(a: &DMatrix<f64>, permutation: &[usize]) -> DMatrix<f64> {
    let n = permutation.len();
    DMatrix::from_fn(n, n, |r, c| a[(permutation[r], permutation[c])])
}

pub fn cluster_views(a: &AffinityMatrix, config: &SpectralConfig) -> Result<Clustering> {
    config.validate(a.n())?;
    let l = normalized_laplacian(&a.a)?;
    let embedding = spectral_embed(&l, config)?;
    let km = kmeans(&embedding.rows, config.k, config)?;
    let rearranged = rearrange(&a.a, &km.assignment.permutation);
    Ok(Clustering {
        assignment: km.assignment,
        rearranged,
        embedding,
        distortion: km.distortion,
    })
}

/// Mean off-diagonal affinity within clusters and between clusters.
pub fn block_contrast(a: &DMatrix<f64>, labels: &[usize]) -> (f64, f64) {
    let n = labels.len();
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] == labels[j] {
                within += a[(i, j)];
                nw += 1;
            } else {
                between += a[(i, j)];
                nb += 1;
            }
        }
    }
    let mean = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
    (mean(within, nw), mean(between, nb))
}
