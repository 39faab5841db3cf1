//! Incremental rigid reconstruction of one cluster of frames.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::affinity::{correspondences_between, TrackSet};
use crate::bundle::{bundle_adjust, BundleConfig, BundleReport, Observation};
use crate::error::{Error, Result};
use crate::geometry::{
    pnp, relative_pose, triangulate, CameraIntrinsics, CameraPose, Point3, SimilarityTransform,
};
use crate::rigidity::{modified_epipolar_test, RigidityParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructConfig {
    pub bundle: BundleConfig,
    /// Used to rank candidate seed pairs and registration order.
    pub rigidity: RigidityParams,
    /// Seed pairs tried before the cluster is declared failed.
    pub max_seed_retries: usize,
    /// Frames whose PnP pose reprojects worse than this (mean, px) are
    /// dropped instead of registered.
    pub max_registration_error: f64,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            bundle: BundleConfig::default(),
            rigidity: RigidityParams::default(),
            max_seed_retries: 5,
            max_registration_error: 10.0,
        }
    }
}

impl ReconstructConfig {
    pub fn validate(&self) -> Result<()> {
        self.bundle.validate()?;
        self.rigidity.validate()?;
        if self.max_seed_retries == 0 {
            return Err(Error::invalid("max_seed_retries", "must be positive"));
        }
        if !(self.max_registration_error > 0.0) {
            return Err(Error::invalid("max_registration_error", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReconstructionStatus {
    Success,
    Failed(String),
}

impl ReconstructionStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, ReconstructionStatus::Success)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReconstruction {
    pub cluster_id: usize,
    pub shape: Vec<Point3>,
    pub poses: BTreeMap<usize, CameraPose>,
    /// Mean reprojection error of each registered frame, px.
    pub frame_errors: BTreeMap<usize, f64>,
    pub mean_reproj_error: f64,
    pub status: ReconstructionStatus,
    pub seed_pair: Option<(usize, usize)>,
    /// Frames left out, with the reason.
    pub dropped_frames: Vec<(usize, Error)>,
    /// Points behind at least one registered camera.
    pub cheirality_violations: Vec<usize>,
    pub bundle: Option<BundleReport>,
}

impl ClusterReconstruction {
    pub fn failed(cluster_id: usize, reason: impl Into<String>) -> Self {
        ClusterReconstruction {
            cluster_id,
            shape: Vec::new(),
            poses: BTreeMap::new(),
            frame_errors: BTreeMap::new(),
            mean_reproj_error: f64::NAN,
            status: ReconstructionStatus::Failed(reason.into()),
            seed_pair: None,
            dropped_frames: Vec::new(),
            cheirality_violations: Vec::new(),
            bundle: None,
        }
    }

    /// Moves shape and cameras by `x -> s R x + t`, leaving every projection
    /// unchanged.
    pub fn transformed(&self, t: &SimilarityTransform) -> Self {
        let mut out = self.clone();
        out.shape = self.shape.iter().map(|p| t.apply(p)).collect();
        for pose in out.poses.values_mut() {
            let r = pose.rotation * t.rotation.transpose();
            let tr = pose.translation * t.scale - r * t.translation;
            *pose = CameraPose::new(r, tr);
        }
        out
    }

    fn observations(&self, tracks: &TrackSet) -> (Vec<usize>, Vec<CameraPose>, Vec<Observation>) {
        let frames: Vec<usize> = self.poses.keys().copied().collect();
        let poses = self.poses.values().copied().collect();
        let obs = frames
            .iter()
            .enumerate()
            .flat_map(|(view, &f)| {
                tracks
                    .frame(f)
                    .iter()
                    .enumerate()
                    .map(move |(point, &pixel)| Observation { view, point, pixel })
            })
            .collect();
        (frames, poses, obs)
    }

    /// Reprojection error of every observation in registered frames.
    pub fn residuals(&self, tracks: &TrackSet, k: &CameraIntrinsics) -> Vec<f64> {
        let (_, poses, obs) = self.observations(tracks);
        obs.iter()
            .map(|o| (k.project(&poses[o.view], &self.shape[o.point]) - o.pixel).norm())
            .collect()
    }

    /// Recomputes per-frame and mean reprojection errors.
    pub fn refresh_errors(&mut self, tracks: &TrackSet, k: &CameraIntrinsics) {
        let residuals = self.residuals(tracks, k);
        let m = tracks.n_points();
        self.frame_errors = self
            .poses
            .keys()
            .zip(residuals.chunks(m))
            .map(|(&f, r)| (f, r.iter().sum::<f64>() / m as f64))
            .collect();
        self.mean_reproj_error = if residuals.is_empty() {
            f64::NAN
        } else {
            residuals.iter().sum::<f64>() / residuals.len() as f64
        };
    }
}

/// Rigidity evidence for one in-cluster pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvidence {
    pub i: usize,
    pub j: usize,
    pub affinity: f64,
    pub p_h: f64,
}

impl PairEvidence {
    pub fn seed_score(&self) -> f64 {
        self.affinity * (1.0 - self.p_h)
    }
}

/// Candidate seed pairs, best first: highest `a (1 - p_h)`, ties by the
/// smaller `(i, j)`.
pub fn rank_seed_pairs(evidence: &[PairEvidence]) -> Vec<(usize, usize)> {
    let mut ranked: Vec<&PairEvidence> = evidence.iter().collect();
    ranked.sort_by(|a, b| {
        b.seed_score()
            .total_cmp(&a.seed_score())
            .then((a.i, a.j).cmp(&(b.i, b.j)))
    });
    ranked.into_iter().map(|e| (e.i, e.j)).collect()
}

pub fn select_seed_pair(frames: &[usize], evidence: &[PairEvidence]) -> Result<(usize, usize)> {
    if frames.len() < 2 {
        return Err(Error::Underconstrained("cluster has fewer than two frames"));
    }
    rank_seed_pairs(evidence)
        .into_iter()
        .next()
        .ok_or(Error::Underconstrained("no candidate pairs"))
}

/// Runs the rigidity test on every in-cluster pair.
pub fn cluster_evidence(
    tracks: &TrackSet,
    frames: &[usize],
    params: &RigidityParams,
) -> Vec<PairEvidence> {
    let mut out = Vec::new();
    for (a, &i) in frames.iter().enumerate() {
        for &j in &frames[a + 1..] {
            let (lo, hi) = (i.min(j), i.max(j));
            let (affinity, p_h) =
                match modified_epipolar_test(&correspondences_between(tracks, lo, hi), params) {
                    Ok(s) => (s.p, s.p_h),
                    Err(_) => (0.0, 1.0),
                };
            out.push(PairEvidence {
                i: lo,
                j: hi,
                affinity,
                p_h,
            });
        }
    }
    out
}

fn two_view_init(
    tracks: &TrackSet,
    i: usize,
    j: usize,
    k: &CameraIntrinsics,
) -> Result<(CameraPose, Vec<Point3>)> {
    let corrs = correspondences_between(tracks, i, j);
    let (pose, _) = relative_pose(&corrs.pairs, k, k)?;
    let first = CameraPose::identity();
    let mut shape = Vec::with_capacity(corrs.len());
    for (x1, x2) in &corrs.pairs {
        let p = triangulate(&first, &pose, k, k, x1, x2)?;
        if !(first.depth(&p) > 0.0 && pose.depth(&p) > 0.0) {
            return Err(Error::DegenerateConfiguration("point behind seed cameras"));
        }
        shape.push(p);
    }
    Ok((pose, shape))
}

fn mean_error(
    shape: &[Point3],
    pose: &CameraPose,
    tracks: &TrackSet,
    f: usize,
    k: &CameraIntrinsics,
) -> f64 {
    let pixels = tracks.frame(f);
    shape
        .iter()
        .zip(pixels)
        .map(|(p, u)| (k.project(pose, p) - u).norm())
        .sum::<f64>()
        / shape.len() as f64
}

struct Working {
    frames: Vec<usize>,
    poses: Vec<CameraPose>,
    shape: Vec<Point3>,
    report: Option<BundleReport>,
}

impl Working {
    fn adjust(
        &mut self,
        tracks: &TrackSet,
        k: &CameraIntrinsics,
        config: &BundleConfig,
    ) -> Result<()> {
        let obs: Vec<Observation> = self
            .frames
            .iter()
            .enumerate()
            .flat_map(|(view, &f)| {
                tracks
                    .frame(f)
                    .iter()
                    .enumerate()
                    .map(move |(point, &pixel)| Observation { view, point, pixel })
            })
            .collect();
        let ks = vec![*k; self.frames.len()];
        let result = bundle_adjust(&self.shape, &self.poses, &ks, &obs, config)?;
        self.shape = result.points;
        self.poses = result.poses;
        self.report = Some(result.report);
        Ok(())
    }
}

/// Two-view initialisation from the best seed pair, then PnP registration of
/// the remaining frames with bundle adjustment after each one. The result is
/// expressed in the first seed camera's frame with a unit seed baseline.
pub fn reconstruct_cluster(
    cluster_id: usize,
    tracks: &TrackSet,
    frames: &[usize],
    k: &CameraIntrinsics,
    config: &ReconstructConfig,
) -> Result<ClusterReconstruction> {
    config.validate()?;
    if frames.iter().any(|&f| f >= tracks.n_frames()) {
        return Err(Error::invalid("frames", "frame index out of range"));
    }
    let mut frames = frames.to_vec();
    frames.sort_unstable();
    frames.dedup();
    if frames.len() < 2 {
        return Ok(ClusterReconstruction::failed(
            cluster_id,
            "too-small-cluster",
        ));
    }

    let evidence = cluster_evidence(tracks, &frames, &config.rigidity);
    let affinity = |a: usize, b: usize| {
        let (lo, hi) = (a.min(b), a.max(b));
        evidence
            .iter()
            .find(|e| e.i == lo && e.j == hi)
            .map_or(0.0, |e| e.affinity)
    };

    let mut last_error = None;
    let mut seeded = None;
    for (i, j) in rank_seed_pairs(&evidence)
        .into_iter()
        .take(config.max_seed_retries)
    {
        match two_view_init(tracks, i, j, k) {
            Ok((pose, shape)) => {
                let mut w = Working {
                    frames: vec![i, j],
                    poses: vec![CameraPose::identity(), pose],
                    shape,
                    report: None,
                };
                match w.adjust(tracks, k, &config.bundle) {
                    Ok(()) => {
                        seeded = Some(((i, j), w));
                        break;
                    }
                    Err(e) => last_error = Some(e),
                }
            }
            Err(e) => last_error = Some(e),
        }
    }
    let Some((seed_pair, mut work)) = seeded else {
        let reason = match last_error {
            Some(Error::ZeroParallax) => "zero-parallax".to_string(),
            Some(e) => alloc::format!("seed initialisation failed: {e}"),
            None => "seed initialisation failed".to_string(),
        };
        return Ok(ClusterReconstruction::failed(cluster_id, reason));
    };

    let (si, sj) = seed_pair;
    let mut rest: Vec<usize> = frames
        .iter()
        .copied()
        .filter(|&f| f != si && f != sj)
        .collect();
    let to_seed = |f: usize| affinity(f, si) + affinity(f, sj);
    rest.sort_by(|&a, &b| to_seed(b).total_cmp(&to_seed(a)).then(a.cmp(&b)));

    let mut dropped = Vec::new();
    for f in rest {
        let pose = match pnp(&work.shape, tracks.frame(f), k) {
            Ok(p) => p,
            Err(e) => {
                dropped.push((f, e));
                continue;
            }
        };
        if !(mean_error(&work.shape, &pose, tracks, f, k) <= config.max_registration_error) {
            dropped.push((
                f,
                Error::DegenerateConfiguration("registration error too large"),
            ));
            continue;
        }
        let backup = (
            work.frames.clone(),
            work.poses.clone(),
            work.shape.clone(),
            work.report.clone(),
        );
        work.frames.push(f);
        work.poses.push(pose);
        if let Err(e) = work.adjust(tracks, k, &config.bundle) {
            (work.frames, work.poses, work.shape, work.report) = backup;
            dropped.push((f, e));
        }
    }

    let mut cheirality_violations = Vec::new();
    let mut status = ReconstructionStatus::Success;
    for (idx, p) in work.shape.iter().enumerate() {
        let in_front = work.poses.iter().filter(|pose| pose.depth(p) > 0.0).count();
        if in_front < work.poses.len() {
            cheirality_violations.push(idx);
        }
        if in_front < 2 {
            status = ReconstructionStatus::Failed("cheirality".to_string());
        }
    }

    let mut rec = ClusterReconstruction {
        cluster_id,
        shape: work.shape,
        poses: work
            .frames
            .iter()
            .copied()
            .zip(work.poses.iter().copied())
            .collect(),
        frame_errors: BTreeMap::new(),
        mean_reproj_error: f64::NAN,
        status,
        seed_pair: Some(seed_pair),
        dropped_frames: dropped,
        cheirality_violations,
        bundle: work.report,
    };
    rec.refresh_errors(tracks, k);
    if !rec.mean_reproj_error.is_finite() && rec.status.is_success() {
        rec.status = ReconstructionStatus::Failed("non-finite reprojection error".to_string());
    }
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandmarkPair {
    Explicit(usize, usize),
    /// The pair with the largest mean distance across clusters, each
    /// cluster first normalised to unit RMS radius.
    Auto,
}

fn rms_radius(shape: &[Point3]) -> f64 {
    let n = shape.len() as f64;
    let mu = shape
        .iter()
        .fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords)
        / n;
    crate::math::sqrt(
        shape
            .iter()
            .map(|p| (p.coords - mu).norm_squared())
            .sum::<f64>()
            / n,
    )
}

pub fn auto_landmark_pair(reconstructions: &[ClusterReconstruction]) -> Option<(usize, usize)> {
    let usable: Vec<&ClusterReconstruction> = reconstructions
        .iter()
        .filter(|r| r.status.is_success() && rms_radius(&r.shape) > 0.0)
        .collect();
    let m = usable.first()?.shape.len();
    let mut best: Option<((usize, usize), f64)> = None;
    for a in 0..m {
        for b in a + 1..m {
            let mean = usable
                .iter()
                .map(|r| (r.shape[a] - r.shape[b]).norm() / rms_radius(&r.shape))
                .sum::<f64>()
                / usable.len() as f64;
            if best.is_none_or(|(_, d)| mean > d) {
                best = Some(((a, b), mean));
            }
        }
    }
    best.map(|(p, _)| p)
}

/// Rescales every successful reconstruction so the landmark pair is at unit
/// distance. Returns the chosen pair and the clusters that could not be
/// rescaled because the pair coincides in them.
pub fn normalize_scale(
    reconstructions: &mut [ClusterReconstruction],
    landmarks: LandmarkPair,
) -> Result<((usize, usize), Vec<usize>)> {
    if !reconstructions.iter().any(|r| r.status.is_success()) {
        return Err(Error::Underconstrained(
            "no successful reconstruction to normalise",
        ));
    }
    let (a, b) = match landmarks {
        LandmarkPair::Explicit(a, b) => (a, b),
        LandmarkPair::Auto => auto_landmark_pair(reconstructions)
            .ok_or(Error::Underconstrained("no landmark pair available"))?,
    };
    let mut flagged = Vec::new();
    for r in reconstructions.iter_mut().filter(|r| r.status.is_success()) {
        if a >= r.shape.len() || b >= r.shape.len() || a == b {
            return Err(Error::invalid("landmark_pair", "index out of range"));
        }
        let d = (r.shape[a] - r.shape[b]).norm();
        if !(d > 1e-12 * rms_radius(&r.shape).max(f64::MIN_POSITIVE)) {
            flagged.push(r.cluster_id);
            continue;
        }
        let s = 1.0 / d;
        for p in r.shape.iter_mut() {
            p.coords *= s;
        }
        for pose in r.poses.values_mut() {
            pose.translation *= s;
        }
    }
    Ok(((a, b), flagged))
}
