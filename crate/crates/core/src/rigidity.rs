//! Sampled epipolar rigidity test with homography model selection.
//!
//! For a pair of frames, every (or a random set of) minimal 8-point subsets
//! yields a fundamental matrix whose fit over *all* correspondences is
//! scored with a product of Gaussian kernels. The same is done with 4-point
//! homographies. A pair is declared rigid when the worst fundamental fit is
//! still good while no homography explains the data.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    epipolar_distance_capped, fit_fundamental_8pt, fit_fundamental_linear, fit_homography_4pt,
    homography_distance_capped, symmetric_epipolar_distance, Correspondence, Point2,
    DEFAULT_MAX_DISTANCE,
};
use crate::math::{self, derive_seed, exp, ln, sq, Fnv1a};

pub use crate::math::binomial;

const FUNDAMENTAL_SAMPLE: usize = 8;
const HOMOGRAPHY_SAMPLE: usize = 4;
const ATTEMPT_FACTOR: usize = 10;
const DEFAULT_RMS_RATIO: f64 = 0.75;

/// Correspondences between frames `frames.0` and `frames.1`; pair `k` is
/// landmark `k` in both.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub frames: (usize, usize),
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(frames: (usize, usize), pairs: Vec<Correspondence>) -> Self {
        CorrespondenceSet { frames, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The same correspondences with every coordinate multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let pairs = self
            .pairs
            .iter()
            .map(|(a, b)| (Point2::from(a.coords * c), Point2::from(b.coords * c)))
            .collect();
        CorrespondenceSet::new(self.frames, pairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Exhaustive,
    Randomized,
}

/// How per-sample probabilities are reduced to one score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregation {
    /// Worst sample.
    StrictMin,
    /// Nearest-rank lower quantile `q` in `(0, 0.5]`.
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidityParams {
    /// Kernel width for point-to-epipolar-line distances, px.
    pub sigma_f: f64,
    /// Kernel width for homography transfer distances, px.
    pub sigma_h: f64,
    /// Fixed fundamental threshold; `None` derives it from the point count.
    pub tau_f: Option<f64>,
    /// Fixed homography threshold; `None` derives it from the point count.
    pub tau_h: Option<f64>,
    /// Target RMS residual for derived thresholds (default `0.75 sigma_f`).
    pub target_rms_f: Option<f64>,
    pub target_rms_h: Option<f64>,
    pub sampling_mode: SamplingMode,
    pub n_samples_f: usize,
    pub n_samples_h: usize,
    pub rng_seed: u64,
    pub aggregation: Aggregation,
    /// Largest subset count allowed in exhaustive mode.
    pub exhaustive_cap: u64,
    /// Use the larger of the two one-sided epipolar distances.
    pub symmetric_epipolar: bool,
    /// Distance substituted where a residual is undefined.
    pub max_distance: f64,
}

impl Default for RigidityParams {
    fn default() -> Self {
        RigidityParams {
            sigma_f: 20.0,
            sigma_h: 20.0,
            tau_f: None,
            tau_h: None,
            target_rms_f: None,
            target_rms_h: None,
            sampling_mode: SamplingMode::Randomized,
            n_samples_f: 200,
            n_samples_h: 200,
            rng_seed: 0,
            aggregation: Aggregation::Quantile(0.5),
            exhaustive_cap: 10_000_000,
            symmetric_epipolar: false,
            max_distance: DEFAULT_MAX_DISTANCE,
        }
    }
}

fn check_probability(field: &'static str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(0.0..=1.0).contains(&x) => Err(Error::invalid(field, "must lie in [0, 1]")),
        _ => Ok(()),
    }
}

impl RigidityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f > 0.0 && self.sigma_f.is_finite()) {
            return Err(Error::invalid("sigma_f", "must be positive"));
        }
        if !(self.sigma_h > 0.0 && self.sigma_h.is_finite()) {
            return Err(Error::invalid("sigma_h", "must be positive"));
        }
        check_probability("tau_f", self.tau_f)?;
        check_probability("tau_h", self.tau_h)?;
        for (field, r) in [
            ("target_rms_f", self.target_rms_f),
            ("target_rms_h", self.target_rms_h),
        ] {
            if let Some(r) = r {
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(Error::invalid(field, "must be non-negative"));
                }
            }
        }
        if self.n_samples_f == 0 {
            return Err(Error::invalid("n_samples_f", "must be positive"));
        }
        if self.n_samples_h == 0 {
            return Err(Error::invalid("n_samples_h", "must be positive"));
        }
        if let Aggregation::Quantile(q) = self.aggregation {
            if !(q > 0.0 && q <= 0.5) {
                return Err(Error::invalid(
                    "aggregation",
                    "quantile must lie in (0, 0.5]",
                ));
            }
        }
        if !(self.max_distance > 0.0) {
            return Err(Error::invalid("max_distance", "must be positive"));
        }
        Ok(())
    }

    /// Stable 64-bit digest of every field.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write(b"rigidity-params-v1");
        h.write_f64(self.sigma_f);
        h.write_f64(self.sigma_h);
        for v in [self.tau_f, self.tau_h, self.target_rms_f, self.target_rms_h] {
            match v {
                Some(x) => {
                    h.write(&[1]);
                    h.write_f64(x);
                }
                None => h.write(&[0]),
            }
        }
        h.write(&[match self.sampling_mode {
            SamplingMode::Exhaustive => 0,
            SamplingMode::Randomized => 1,
        }]);
        h.write_u64(self.n_samples_f as u64);
        h.write_u64(self.n_samples_h as u64);
        h.write_u64(self.rng_seed);
        match self.aggregation {
            Aggregation::StrictMin => h.write(&[0]),
            Aggregation::Quantile(q) => {
                h.write(&[1]);
                h.write_f64(q);
            }
        }
        h.write_u64(self.exhaustive_cap);
        h.write(&[self.symmetric_epipolar as u8]);
        h.write_f64(self.max_distance);
        h.finish()
    }
}

/// Aggregated score of one model family over its samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelScore {
    pub p: f64,
    pub log_p: f64,
    pub samples_used: usize,
    pub degenerate_skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidityScore {
    pub p: f64,
    pub p_f: f64,
    pub p_h: f64,
    pub log_p_f: f64,
    pub log_p_h: f64,
    pub n_samples_used_f: usize,
    pub n_samples_used_h: usize,
    pub n_degenerate_skipped: usize,
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    idx: Vec<usize>,
    n: usize,
    first: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            idx: (0..k).collect(),
            n,
            first: true,
        }
    }

    fn advance(&mut self) -> Option<&[usize]> {
        let k = self.idx.len();
        if self.first {
            self.first = false;
            return (k <= self.n).then_some(&self.idx[..]);
        }
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return Some(&self.idx[..]);
            }
        }
        None
    }
}

/// Runs `score` over the sampled subsets. `score` returns the log
/// probability for a subset or `Err(DegenerateSample)` to skip it.
fn sampled_log_scores<F>(
    pairs: &[Correspondence],
    sample_size: usize,
    params: &RigidityParams,
    n_samples: usize,
    stream_seed: u64,
    mut score: F,
) -> Result<(Vec<f64>, usize)>
where
    F: FnMut(&[Correspondence]) -> Result<f64>,
{
    let m = pairs.len();
    let mut logs = Vec::new();
    let mut degenerate = 0usize;
    let mut subset: Vec<Correspondence> = Vec::with_capacity(sample_size);
    let mut run = |indices: &[usize], logs: &mut Vec<f64>, degenerate: &mut usize| -> Result<()> {
        subset.clear();
        subset.extend(indices.iter().map(|&i| pairs[i]));
        match score(&subset) {
            Ok(v) => logs.push(v),
            Err(Error::DegenerateSample) => *degenerate += 1,
            Err(e) => return Err(e),
        }
        Ok(())
    };
    match params.sampling_mode {
        SamplingMode::Exhaustive => {
            let count = binomial(m as u64, sample_size as u64).unwrap_or(u128::MAX);
            if count > params.exhaustive_cap as u128 {
                return Err(Error::ExhaustiveTooLarge {
                    count,
                    cap: params.exhaustive_cap,
                });
            }
            let mut combos = Combinations::new(m, sample_size);
            while let Some(idx) = combos.advance() {
                run(idx, &mut logs, &mut degenerate)?;
            }
        }
        SamplingMode::Randomized => {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
            let max_attempts = n_samples.saturating_mul(ATTEMPT_FACTOR);
            let mut attempts = 0;
            while logs.len() < n_samples && attempts < max_attempts {
                attempts += 1;
                let mut idx = rand::seq::index::sample(&mut rng, m, sample_size).into_vec();
                idx.sort_unstable();
                run(&idx, &mut logs, &mut degenerate)?;
            }
        }
    }
    if logs.is_empty() {
        return Err(Error::NoValidSample {
            attempted: degenerate,
        });
    }
    Ok((logs, degenerate))
}

/// Reduces per-sample log probabilities according to `aggregation`.
pub fn aggregate(logs: &[f64], aggregation: Aggregation) -> f64 {
    match aggregation {
        Aggregation::StrictMin => logs.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregation::Quantile(q) => {
            let mut sorted: Vec<f64> = logs.to_vec();
            sorted.sort_by(f64::total_cmp);
            let rank = libm::ceil(q * sorted.len() as f64) as usize;
            sorted[rank.saturating_sub(1).min(sorted.len() - 1)]
        }
    }
}

fn stream_seed(params: &RigidityParams, frames: (usize, usize), model: u64) -> u64 {
    derive_seed(params.rng_seed, &[frames.0 as u64, frames.1 as u64, model])
}

/// Per-sample log probabilities of the fundamental-matrix fits together
/// with the number of degenerate samples skipped.
pub fn fundamental_log_scores(
    corrs: &CorrespondenceSet,
    params: &RigidityParams,
) -> Result<(Vec<f64>, usize)> {
    if corrs.len() < FUNDAMENTAL_SAMPLE {
        return Err(Error::InsufficientPoints {
            needed: FUNDAMENTAL_SAMPLE,
            got: corrs.len(),
        });
    }
    let inv_var = 1.0 / sq(params.sigma_f);
    let cap = params.max_distance;
    sampled_log_scores(
        &corrs.pairs,
        FUNDAMENTAL_SAMPLE,
        params,
        params.n_samples_f,
        stream_seed(params, corrs.frames, 0x46),
        |sample| {
            let f = fit_fundamental_8pt(sample)?;
            let sum: f64 = corrs
                .pairs
                .iter()
                .map(|(x, xp)| {
                    let d = if params.symmetric_epipolar {
                        symmetric_epipolar_distance(&f, x, xp, cap)
                    } else {
                        epipolar_distance_capped(&f, x, xp, cap)
                    };
                    d * d
                })
                .sum();
            Ok(-sum * inv_var)
        },
    )
}

/// Per-sample log probabilities of the 4-point homography fits.
pub fn homography_log_scores(
    corrs: &CorrespondenceSet,
    params: &RigidityParams,
) -> Result<(Vec<f64>, usize)> {
    if corrs.len() < HOMOGRAPHY_SAMPLE {
        return Err(Error::InsufficientPoints {
            needed: HOMOGRAPHY_SAMPLE,
            got: corrs.len(),
        });
    }
    let inv_var = 1.0 / sq(params.sigma_h);
    let cap = params.max_distance;
    sampled_log_scores(
        &corrs.pairs,
        HOMOGRAPHY_SAMPLE,
        params,
        params.n_samples_h,
        stream_seed(params, corrs.frames, 0x48),
        |sample| {
            let h = fit_homography_4pt(sample)?;
            let sum: f64 = corrs
                .pairs
                .iter()
                .map(|(x, xp)| sq(homography_distance_capped(&h, x, xp, cap)))
                .sum();
            Ok(-sum * inv_var)
        },
    )
}

fn model_score(result: (Vec<f64>, usize), aggregation: Aggregation) -> ModelScore {
    let (logs, degenerate) = result;
    let log_p = aggregate(&logs, aggregation);
    ModelScore {
        p: exp(log_p),
        log_p,
        samples_used: logs.len(),
        degenerate_skipped: degenerate,
    }
}

/// Probability that a single epipolar geometry explains every
/// correspondence, aggregated over 8-point samples.
pub fn fundamental_score(corrs: &CorrespondenceSet, params: &RigidityParams) -> Result<ModelScore> {
    Ok(model_score(
        fundamental_log_scores(corrs, params)?,
        params.aggregation,
    ))
}

/// Probability that a single homography explains every correspondence,
/// aggregated over 4-point samples.
pub fn homography_score(corrs: &CorrespondenceSet, params: &RigidityParams) -> Result<ModelScore> {
    Ok(model_score(
        homography_log_scores(corrs, params)?,
        params.aggregation,
    ))
}

/// Thresholds `exp(-M r^2 / sigma^2)` for both models; explicit `tau_f` /
/// `tau_h` in `params` take precedence.
pub fn default_thresholds(m: usize, params: &RigidityParams) -> (f64, f64) {
    let r_f = params
        .target_rms_f
        .unwrap_or(DEFAULT_RMS_RATIO * params.sigma_f);
    let r_h = params
        .target_rms_h
        .unwrap_or(DEFAULT_RMS_RATIO * params.sigma_h);
    let mf = m as f64;
    let tau_f = params
        .tau_f
        .unwrap_or_else(|| exp(-mf * sq(r_f) / sq(params.sigma_f)));
    let tau_h = params
        .tau_h
        .unwrap_or_else(|| exp(-mf * sq(r_h) / sq(params.sigma_h)));
    (tau_f, tau_h)
}

/// Probability that the two frames observe the same rigid shape with
/// enough parallax to reconstruct it.
///
/// When every 8-point sample is degenerate the correspondences carry no
/// recoverable depth, which is scored as `P = 0` rather than an error.
pub fn modified_epipolar_test(
    corrs: &CorrespondenceSet,
    params: &RigidityParams,
) -> Result<RigidityScore> {
    params.validate()?;
    if corrs.len() < FUNDAMENTAL_SAMPLE {
        return Err(Error::InsufficientPoints {
            needed: FUNDAMENTAL_SAMPLE,
            got: corrs.len(),
        });
    }
    let empty = |degenerate| ModelScore {
        p: 0.0,
        log_p: f64::NEG_INFINITY,
        samples_used: 0,
        degenerate_skipped: degenerate,
    };
    let fundamental = match fundamental_score(corrs, params) {
        Ok(s) => s,
        Err(Error::NoValidSample { attempted }) => empty(attempted),
        Err(e) => return Err(e),
    };
    let homography = match homography_score(corrs, params) {
        Ok(s) => s,
        Err(Error::NoValidSample { attempted }) => empty(attempted),
        Err(e) => return Err(e),
    };
    let (tau_f, tau_h) = default_thresholds(corrs.len(), params);
    let (p_f, p_h) = (fundamental.p, homography.p);
    let p = if p_f >= tau_f && p_h < tau_h {
        p_f * (1.0 - p_h)
    } else {
        0.0
    };
    Ok(RigidityScore {
        p,
        p_f,
        p_h,
        log_p_f: fundamental.log_p,
        log_p_h: homography.log_p,
        n_samples_used_f: fundamental.samples_used,
        n_samples_used_h: homography.samples_used,
        n_degenerate_skipped: fundamental.degenerate_skipped + homography.degenerate_skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveVerdict {
    pub rigid: bool,
    pub mean_residual: f64,
    pub degenerate: bool,
}

/// Baseline test: one linear fundamental matrix over all points, rigid when
/// the mean point-to-line distance is below `tolerance`.
///
/// This is deliberately the flawed procedure: it applies no degeneracy
/// screening, so homography-related views pass.
pub fn naive_epipolar_test(corrs: &CorrespondenceSet, tolerance: f64) -> Result<NaiveVerdict> {
    if corrs.len() < FUNDAMENTAL_SAMPLE {
        return Err(Error::InsufficientPoints {
            needed: FUNDAMENTAL_SAMPLE,
            got: corrs.len(),
        });
    }
    match fit_fundamental_linear(&corrs.pairs, false) {
        Ok(f) => {
            let mean_residual = corrs
                .pairs
                .iter()
                .map(|(x, xp)| epipolar_distance_capped(&f, x, xp, DEFAULT_MAX_DISTANCE))
                .sum::<f64>()
                / corrs.len() as f64;
            Ok(NaiveVerdict {
                rigid: mean_residual < tolerance,
                mean_residual,
                degenerate: false,
            })
        }
        Err(Error::DegenerateSample) => Ok(NaiveVerdict {
            rigid: false,
            mean_residual: f64::INFINITY,
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

/// Smallest `K` with `1 - (1 - e)^K >= p`.
pub fn required_samples(inlier_ratio: f64, confidence: f64) -> Result<u64> {
    if !(inlier_ratio > 0.0 && inlier_ratio < 1.0) {
        return Err(Error::invalid("inlier_ratio", "must lie in (0, 1)"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid("confidence", "must lie in (0, 1)"));
    }
    let achieved = |k: u64| 1.0 - math::powi(1.0 - inlier_ratio, k as i32);
    let mut k = libm::ceil(ln(1.0 - confidence) / ln(1.0 - inlier_ratio)).max(1.0) as u64;
    while achieved(k) < confidence {
        k += 1;
    }
    while k > 1 && achieved(k - 1) >= confidence {
        k -= 1;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraPose;
    use crate::testutil::*;
    use alloc::vec;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn strict() -> RigidityParams {
        RigidityParams {
            aggregation: Aggregation::StrictMin,
            ..RigidityParams::default()
        }
    }

    fn rigid_pair(seed: u64, m: usize) -> CorrespondenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, p1, p2) = random_rig(&mut rng);
        let pts = random_points(&mut rng, m, -1.0, 1.0);
        CorrespondenceSet::new((0, 1), project_pairs(&pts, &p1, &p2, &k, &k))
    }

    fn unrelated_pair(seed: u64, m: usize) -> CorrespondenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, p1, p2) = random_rig(&mut rng);
        let a = random_points(&mut rng, m, -1.0, 1.0);
        let b = random_points(&mut rng, m, -1.0, 1.0);
        let pairs = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (k.project(&p1, x), k.project(&p2, y)))
            .collect();
        CorrespondenceSet::new((0, 1), pairs)
    }

    fn rotation_pair(seed: u64, m: usize) -> CorrespondenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, p1, _) = random_rig(&mut rng);
        let r = nalgebra::Rotation3::new(Vector3::new(0.05, -0.2, 0.03)).into_inner();
        let rotated = CameraPose::new(r * p1.rotation, r * p1.translation);
        let pts = random_points(&mut rng, m, -1.0, 1.0);
        CorrespondenceSet::new((0, 1), project_pairs(&pts, &p1, &rotated, &k, &k))
    }

    fn noisy(c: &CorrespondenceSet, sigma: f64, seed: u64) -> CorrespondenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).unwrap();
        let pairs = c
            .pairs
            .iter()
            .map(|(a, b)| {
                (
                    Point2::new(a.x + n.sample(&mut rng), a.y + n.sample(&mut rng)),
                    Point2::new(b.x + n.sample(&mut rng), b.y + n.sample(&mut rng)),
                )
            })
            .collect();
        CorrespondenceSet::new(c.frames, pairs)
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut c = Combinations::new(9, 8);
        let mut count = 0;
        while c.advance().is_some() {
            count += 1;
        }
        assert_eq!(count, 9);
        let mut c = Combinations::new(10, 8);
        let mut count = 0;
        while c.advance().is_some() {
            count += 1;
        }
        assert_eq!(count, 45);
    }

    #[test]
    fn noiseless_rigid_fundamental_score_near_one() {
        let c = rigid_pair(1, 20);
        let s = fundamental_score(&c, &strict()).unwrap();
        assert!(s.p > 1.0 - 1e-6, "p_f {}", s.p);
    }

    #[test]
    fn unrelated_shapes_fundamental_score_near_zero() {
        let c = unrelated_pair(2, 20);
        let s = fundamental_score(&c, &strict()).unwrap();
        assert!(s.p < 1e-6, "p_f {}", s.p);
    }

    #[test]
    fn exhaustive_counts() {
        let params = RigidityParams {
            sampling_mode: SamplingMode::Exhaustive,
            ..strict()
        };
        let c = rigid_pair(3, 9);
        let s = fundamental_score(&c, &params).unwrap();
        assert_eq!(s.samples_used + s.degenerate_skipped, 9);
        let c5 = CorrespondenceSet::new((0, 1), c.pairs[..5].to_vec());
        let h = homography_score(&c5, &params).unwrap();
        assert_eq!(h.samples_used + h.degenerate_skipped, 5);
    }

    #[test]
    fn exhaustive_cap_is_enforced() {
        let params = RigidityParams {
            sampling_mode: SamplingMode::Exhaustive,
            exhaustive_cap: 100,
            ..strict()
        };
        let c = rigid_pair(3, 20);
        assert!(matches!(
            fundamental_score(&c, &params),
            Err(Error::ExhaustiveTooLarge { count: 125_970, .. })
        ));
    }

    #[test]
    fn insufficient_points() {
        let c = rigid_pair(4, 7);
        assert_eq!(
            fundamental_score(&c, &strict()),
            Err(Error::InsufficientPoints { needed: 8, got: 7 })
        );
        assert!(modified_epipolar_test(&c, &strict()).is_err());
        let c3 = CorrespondenceSet::new((0, 1), c.pairs[..3].to_vec());
        assert!(homography_score(&c3, &strict()).is_err());
    }

    #[test]
    fn planar_pair_homography_score_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (k, p1, p2) = random_rig(&mut rng);
        let pts = random_plane_points(&mut rng, 20);
        let c = CorrespondenceSet::new((0, 1), project_pairs(&pts, &p1, &p2, &k, &k));
        let s = homography_score(&c, &strict()).unwrap();
        assert!(s.p > 1.0 - 1e-6, "p_h {}", s.p);
    }

    #[test]
    fn parallax_pair_homography_score_near_zero() {
        let c = rigid_pair(6, 20);
        let s = homography_score(&c, &strict()).unwrap();
        assert!(s.p < 1e-6, "p_h {}", s.p);
    }

    #[test]
    fn modified_test_examples() {
        let params = RigidityParams {
            sigma_f: 10.0,
            aggregation: Aggregation::Quantile(0.5),
            ..RigidityParams::default()
        };
        let rigid = noisy(&rigid_pair(7, 20), 0.5, 70);
        let s = modified_epipolar_test(&rigid, &params).unwrap();
        assert!(s.p > 0.0, "{s:?}");

        let base = rigid_pair(8, 20);
        let same = CorrespondenceSet::new((0, 1), base.pairs.iter().map(|p| (p.0, p.0)).collect());
        let s = modified_epipolar_test(&same, &strict()).unwrap();
        assert_eq!(s.p, 0.0);
        assert!(s.p_h > 1.0 - 1e-9);

        let s = modified_epipolar_test(&unrelated_pair(9, 20), &strict()).unwrap();
        assert_eq!(s.p, 0.0);
        let (tau_f, _) = default_thresholds(20, &strict());
        assert!(s.p_f < tau_f);
    }

    #[test]
    fn rotation_pair_rejected_by_modified_accepted_by_naive() {
        for seed in 0..5 {
            let c = rotation_pair(10 + seed, 20);
            let s = modified_epipolar_test(&c, &strict()).unwrap();
            assert_eq!(s.p, 0.0);
            let v = naive_epipolar_test(&c, 1.0).unwrap();
            assert!(v.rigid, "{v:?}");
        }
    }

    #[test]
    fn naive_test_accepts_rigid_rejects_unrelated() {
        let v = naive_epipolar_test(&rigid_pair(20, 20), 1.0).unwrap();
        assert!(v.rigid && !v.degenerate);
        assert!(v.mean_residual < 1e-8);
        let v = naive_epipolar_test(&unrelated_pair(21, 30), 1.0).unwrap();
        assert!(!v.rigid);
    }

    #[test]
    fn naive_test_coincident_points_flag_degeneracy() {
        let c = CorrespondenceSet::new(
            (0, 1),
            vec![(Point2::new(1.0, 1.0), Point2::new(2.0, 2.0)); 10],
        );
        let v = naive_epipolar_test(&c, 1.0).unwrap();
        assert!(!v.rigid && v.degenerate);
    }

    #[test]
    fn required_samples_examples() {
        assert_eq!(required_samples(0.5, 0.99).unwrap(), 7);
        assert_eq!(required_samples(0.9, 0.99).unwrap(), 2);
        assert!(required_samples(0.0, 0.5).is_err());
        assert!(required_samples(0.5, 1.0).is_err());
        assert_eq!(binomial(100, 8), Some(186_087_894_300));
    }

    #[test]
    fn threshold_examples() {
        let p = RigidityParams {
            sigma_f: 1.0,
            target_rms_f: Some(0.75),
            ..RigidityParams::default()
        };
        let (tau_f, _) = default_thresholds(14, &p);
        assert!((tau_f - (-7.875f64).exp()).abs() < 1e-15);
        assert!((tau_f - 3.8e-4).abs() < 1e-5);
        let zero = RigidityParams {
            target_rms_f: Some(0.0),
            ..p
        };
        assert_eq!(default_thresholds(14, &zero).0, 1.0);
        let (a, _) = default_thresholds(10, &p);
        let (b, _) = default_thresholds(20, &p);
        assert!((b.ln() - 2.0 * a.ln()).abs() < 1e-12);
    }

    #[test]
    fn aggregation_quantile_rank() {
        let logs: Vec<f64> = (0..200).map(|i| -(i as f64)).collect();
        assert_eq!(aggregate(&logs, Aggregation::StrictMin), -199.0);
        assert_eq!(aggregate(&logs, Aggregation::Quantile(0.05)), -190.0);
        assert_eq!(aggregate(&logs, Aggregation::Quantile(0.5)), -100.0);
    }

    #[test]
    fn params_validation() {
        let mut p = RigidityParams::default();
        assert!(p.validate().is_ok());
        p.sigma_f = 0.0;
        assert!(p.validate().is_err());
        let p = RigidityParams {
            aggregation: Aggregation::Quantile(0.7),
            ..RigidityParams::default()
        };
        assert!(p.validate().is_err());
        let p = RigidityParams {
            tau_h: Some(1.5),
            ..RigidityParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn digest_changes_with_params() {
        let a = RigidityParams::default();
        let b = RigidityParams { rng_seed: 1, ..a };
        assert_eq!(a.digest(), RigidityParams::default().digest());
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn deterministic_given_seed() {
        let c = noisy(&rigid_pair(30, 20), 0.5, 31);
        let p = RigidityParams {
            rng_seed: 77,
            ..RigidityParams::default()
        };
        let a = modified_epipolar_test(&c, &p).unwrap();
        let b = modified_epipolar_test(&c, &p).unwrap();
        assert_eq!(a.p.to_bits(), b.p.to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn randomized_min_not_below_exhaustive_min() {
        for seed in 0..5 {
            let c = noisy(&rigid_pair(40 + seed, 10), 0.5, seed);
            let exhaustive = RigidityParams {
                sampling_mode: SamplingMode::Exhaustive,
                ..strict()
            };
            let randomized = RigidityParams {
                n_samples_f: 20,
                ..strict()
            };
            let e = fundamental_score(&c, &exhaustive).unwrap();
            let r = fundamental_score(&c, &randomized).unwrap();
            assert!(r.log_p >= e.log_p);
        }
    }

    #[test]
    fn zero_noise_parallax_pair_passes() {
        let c = rigid_pair(50, 20);
        let p = strict();
        let s = modified_epipolar_test(&c, &p).unwrap();
        let (tau_f, _) = default_thresholds(20, &p);
        assert!(s.p >= tau_f * (1.0 - s.p_h) && s.p > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn scale_equivariance(seed in 0u64..1000, c in 0.1f64..10.0) {
            let base = noisy(&rigid_pair(seed, 14), 0.7, seed + 1);
            let p = RigidityParams { n_samples_f: 30, n_samples_h: 30, rng_seed: seed, ..RigidityParams::default() };
            // The residual cap is a pixel quantity too.
            let scaled_params = RigidityParams { sigma_f: p.sigma_f * c, sigma_h: p.sigma_h * c, max_distance: p.max_distance * c, ..p };
            let (fa, _) = fundamental_log_scores(&base, &p).unwrap();
            let (fb, _) = fundamental_log_scores(&base.scaled(c), &scaled_params).unwrap();
            for (a, b) in fa.iter().zip(&fb) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
            let (ha, _) = homography_log_scores(&base, &p).unwrap();
            let (hb, _) = homography_log_scores(&base.scaled(c), &scaled_params).unwrap();
            for (a, b) in ha.iter().zip(&hb) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
            let sa = modified_epipolar_test(&base, &p).unwrap();
            let sb = modified_epipolar_test(&base.scaled(c), &scaled_params).unwrap();
            prop_assert!((sa.p - sb.p).abs() <= 1e-9);
        }

        #[test]
        fn probabilities_in_unit_interval(seed in 0u64..1000) {
            let c = noisy(&rigid_pair(seed, 12), 1.0, seed);
            let s = modified_epipolar_test(&c, &RigidityParams { n_samples_f: 20, n_samples_h: 20, ..RigidityParams::default() }).unwrap();
            for v in [s.p, s.p_f, s.p_h] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
