//! Scoring reconstructions against generator ground truth.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{procrustes_similarity, CameraIntrinsics};
use crate::math::sqrt;
use crate::reconstruct::ClusterReconstruction;
use crate::spectral::ClusterAssignment;
use crate::synthetic::SceneGroundTruth;

/// Fraction of frames whose cluster's most common true state matches
/// their own.
pub fn clustering_purity(labels: &[usize], truth: &[usize]) -> f64 {
    if labels.is_empty() {
        return 1.0;
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let s = truth.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; s]; k];
    for (&l, &t) in labels.iter().zip(truth) {
        counts[l][t] += 1;
    }
    let hits: usize = counts
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .sum();
    hits as f64 / labels.len() as f64
}

/// Most common state among `frames`; ties go to the smaller state id.
pub fn majority_state(frames: &[usize], truth: &[usize]) -> Option<usize> {
    let s = truth.iter().max()? + 1;
    let mut counts = vec![0usize; s];
    for &f in frames {
        counts[truth[f]] += 1;
    }
    let best = counts.iter().copied().max()?;
    if best == 0 {
        return None;
    }
    counts.iter().position(|&c| c == best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// `counts[i]` covers `[edges[i], edges[i + 1])`.
    pub counts: Vec<usize>,
    /// Values at or above the last edge.
    pub overflow: usize,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Self {
        let bins = edges.len().saturating_sub(1);
        Histogram {
            edges,
            counts: vec![0; bins],
            overflow: 0,
        }
    }

    /// Bins of 0.5 px from 0 to 10 px.
    pub fn reprojection() -> Self {
        Histogram::new((0..=20).map(|i| i as f64 * 0.5).collect())
    }

    pub fn add(&mut self, x: f64) {
        let last = *self.edges.last().unwrap_or(&0.0);
        if !(x < last) {
            self.overflow += 1;
            return;
        }
        // Values below the first edge land in the first bin.
        let idx = self.edges[1..].partition_point(|&e| e <= x);
        self.counts[idx] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.overflow
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterEval {
    pub cluster_id: usize,
    pub n_frames: usize,
    pub majority_state: Option<usize>,
    /// Similarity-aligned shape RMSE in units of the scene diameter.
    pub rmse: Option<f64>,
    pub mean_reproj_error: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub clusters: Vec<ClusterEval>,
    pub purity: f64,
    pub success_ratio: f64,
    /// Mean RMSE over successful clusters; NaN when there are none.
    pub mean_rmse: f64,
    pub histogram: Histogram,
    pub n_frames: usize,
}

/// Largest mean reprojection error (px) a successful cluster may have.
pub fn success_threshold(noise_sigma: f64) -> f64 {
    5.0 * noise_sigma + 1.0
}

pub fn evaluate(
    reconstructions: &[ClusterReconstruction],
    assignment: &ClusterAssignment,
    truth: &SceneGroundTruth,
    k: &CameraIntrinsics,
    noise_sigma: f64,
) -> Result<EvalReport> {
    let n = truth.state_of_frame.len();
    if assignment.labels.len() != n {
        return Err(Error::invalid(
            "assignment",
            alloc::format!("{} labels for {n} frames", assignment.labels.len()),
        ));
    }
    let tracks = &truth.noisy_tracks;
    let threshold = success_threshold(noise_sigma);
    let mut histogram = Histogram::reprojection();
    let mut clusters = Vec::with_capacity(reconstructions.len());
    let mut ok_frames = 0;
    for rec in reconstructions {
        if rec.poses.keys().any(|&f| f >= n) {
            return Err(Error::invalid("reconstruction", "frame index out of range"));
        }
        let members = assignment.members(rec.cluster_id);
        let state = majority_state(&members, &truth.state_of_frame);
        let has_shape = !rec.shape.is_empty() && !rec.poses.is_empty();
        if has_shape && rec.shape.len() != tracks.n_points() {
            return Err(Error::invalid(
                "reconstruction",
                "point count differs from ground truth",
            ));
        }
        let rmse = match (has_shape, state) {
            (true, Some(s)) => {
                let target = &truth.shapes[s];
                procrustes_similarity(&rec.shape, target)
                    .ok()
                    .map(|t| t.rms_error(&rec.shape, target) / truth.diameter)
            }
            _ => None,
        };
        if has_shape {
            for r in rec.residuals(tracks, k) {
                histogram.add(r);
            }
        }
        let success = rec.status.is_success()
            && rec.mean_reproj_error.is_finite()
            && rec.mean_reproj_error <= threshold;
        if success {
            ok_frames += members.len();
        }
        clusters.push(ClusterEval {
            cluster_id: rec.cluster_id,
            n_frames: members.len(),
            majority_state: state,
            rmse,
            mean_reproj_error: rec.mean_reproj_error,
            success,
        });
    }
    let good: Vec<f64> = clusters
        .iter()
        .filter(|c| c.success)
        .filter_map(|c| c.rmse)
        .collect();
    let mean_rmse = if good.is_empty() {
        f64::NAN
    } else {
        good.iter().sum::<f64>() / good.len() as f64
    };
    Ok(EvalReport {
        clusters,
        purity: clustering_purity(&assignment.labels, &truth.state_of_frame),
        success_ratio: if n == 0 {
            0.0
        } else {
            ok_frames as f64 / n as f64
        },
        mean_rmse,
        histogram,
        n_frames: n,
    })
}

/// Average ranks, ties sharing the mean of their positions (1-based).
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / sqrt(sxx * syy)
}

/// Spearman rank correlation; 0 when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return 0.0;
    }
    pearson(&ranks(x), &ranks(y))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| crate::math::ln(*v)).collect();
    let ly: Vec<f64> = y.iter().map(|v| crate::math::ln(*v)).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SimilarityTransform;
    use crate::reconstruct::{reconstruct_cluster, ReconstructConfig, ReconstructionStatus};
    use crate::rigidity::{Aggregation, RigidityParams};
    use crate::synthetic::{generate_scene, SceneConfig, Schedule};
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;

    #[test]
    fn purity_examples() {
        assert_eq!(clustering_purity(&[1, 1, 0, 0], &[0, 0, 1, 1]), 1.0);
        assert_eq!(clustering_purity(&[0; 8], &[0, 1, 2, 3, 0, 1, 2, 3]), 0.25);
        // Direct count: cluster 0 = states {0,0,1} -> 2, cluster 1 = {1,2,2,2} -> 3,
        // cluster 2 = {0} -> 1.
        let labels = [0, 0, 0, 1, 1, 1, 1, 2];
        let truth = [0, 0, 1, 1, 2, 2, 2, 0];
        assert_eq!(clustering_purity(&labels, &truth), 6.0 / 8.0);
    }

    #[test]
    fn histogram_bins() {
        let mut h = Histogram::reprojection();
        assert_eq!(h.edges.len(), 21);
        for x in [0.0, 0.49, 0.5, 9.99, 10.0, 42.0] {
            h.add(x);
        }
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[19], 1);
        assert_eq!(h.overflow, 2);
        assert_eq!(h.total(), 6);
    }

    #[test]
    fn spearman_and_slopes() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), 0.0);
        // Ties: ranks (1.5, 1.5, 3) vs (1, 2, 3).
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
        let x = [20.0, 40.0, 80.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }

    fn scene() -> SceneGroundTruth {
        generate_scene(&SceneConfig {
            n_frames: 8,
            schedule: Schedule::Periodic { period: 2 },
            rng_seed: 21,
            ..SceneConfig::default()
        })
        .unwrap()
    }

    fn strict() -> ReconstructConfig {
        ReconstructConfig {
            rigidity: RigidityParams {
                aggregation: Aggregation::StrictMin,
                ..RigidityParams::default()
            },
            ..ReconstructConfig::default()
        }
    }

    #[test]
    fn perfect_run_scores_perfectly() {
        let s = scene();
        let k = SceneConfig::default().intrinsics;
        let assignment = ClusterAssignment::from_labels(&s.state_of_frame, 2);
        let recs: Vec<_> = (0..2)
            .map(|c| {
                reconstruct_cluster(c, &s.noisy_tracks, &assignment.members(c), &k, &strict())
                    .unwrap()
            })
            .collect();
        let report = evaluate(&recs, &assignment, &s, &k, 0.0).unwrap();
        assert_eq!(report.purity, 1.0);
        assert_eq!(report.success_ratio, 1.0);
        assert!(report.mean_rmse < 1e-6);
        assert_eq!(report.histogram.total(), 8 * 20);

        // A joint similarity on one cluster changes nothing.
        let t = SimilarityTransform {
            scale: 0.3,
            rotation: Rotation3::new(Vector3::new(1.0, 0.2, -0.5)).into_inner(),
            translation: Vector3::new(0.0, 4.0, 1.0),
        };
        let mut moved = recs.clone();
        moved[1] = moved[1].transformed(&t);
        moved[1].refresh_errors(&s.noisy_tracks, &k);
        let again = evaluate(&moved, &assignment, &s, &k, 0.0).unwrap();
        assert_eq!(again.success_ratio, report.success_ratio);
        for (a, b) in again.clusters.iter().zip(&report.clusters) {
            assert!((a.rmse.unwrap() - b.rmse.unwrap()).abs() < 1e-9);
            assert!((a.mean_reproj_error - b.mean_reproj_error).abs() < 1e-9);
        }
    }

    #[test]
    fn similarity_copy_of_truth_has_zero_error() {
        let s = scene();
        let k = SceneConfig::default().intrinsics;
        let assignment = ClusterAssignment::from_labels(&s.state_of_frame, 2);
        let t = SimilarityTransform {
            scale: 2.5,
            rotation: Rotation3::new(Vector3::new(-0.4, 0.9, 0.1)).into_inner(),
            translation: Vector3::new(1.0, 2.0, 3.0),
        };
        let recs: Vec<_> = (0..2)
            .map(|c| {
                let frames = assignment.members(c);
                let mut r = ClusterReconstruction::failed(c, "");
                r.status = ReconstructionStatus::Success;
                r.shape = s.shapes[c].clone();
                r.poses = frames.iter().map(|&f| (f, s.poses[f])).collect();
                r.refresh_errors(&s.noisy_tracks, &k);
                r.transformed(&t)
            })
            .collect();
        let report = evaluate(&recs, &assignment, &s, &k, 0.0).unwrap();
        for c in &report.clusters {
            assert!(c.rmse.unwrap() < 1e-9);
        }
    }

    #[test]
    fn failed_clusters_count_against_success() {
        let s = scene();
        let k = SceneConfig::default().intrinsics;
        let assignment = ClusterAssignment::from_labels(&s.state_of_frame, 2);
        let recs = vec![
            ClusterReconstruction::failed(0, "x"),
            ClusterReconstruction::failed(1, "y"),
        ];
        let report = evaluate(&recs, &assignment, &s, &k, 0.0).unwrap();
        assert_eq!(report.success_ratio, 0.0);
        assert_eq!(report.histogram.total(), 0);
        assert!(report.mean_rmse.is_nan());
        let short = ClusterAssignment::from_labels(&[0, 1], 2);
        assert!(evaluate(&recs, &short, &s, &k, 0.0).is_err());
    }

    fn refines(labels: &[usize], truth: &[usize]) -> bool {
        (0..labels.len())
            .all(|i| (0..labels.len()).all(|j| labels[i] != labels[j] || truth[i] == truth[j]))
    }

    proptest! {
        #[test]
        fn purity_bounds(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40)) {
            let labels: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let truth: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let p = clustering_purity(&labels, &truth);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert_eq!(p == 1.0, refines(&labels, &truth));
        }

        #[test]
        fn histogram_counts_everything(xs in prop::collection::vec(0.0f64..30.0, 0..200)) {
            let mut h = Histogram::reprojection();
            for &x in &xs { h.add(x); }
            prop_assert_eq!(h.total(), xs.len());
        }
    }
}
