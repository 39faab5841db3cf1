//! TOML configuration. Every section is optional and every field falls back
//! to the library default, so one file format serves all subcommands.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sfrm_core::bundle::BundleConfig;
use sfrm_core::reconstruct::{LandmarkPair, ReconstructConfig};
use sfrm_core::rigidity::{Aggregation, RigidityParams, SamplingMode};
use sfrm_core::spectral::SpectralConfig;
use sfrm_core::synthetic::{CameraPath, SceneConfig, Schedule, ShapeModel};
use sfrm_core::CameraIntrinsics;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scene: Option<SceneSection>,
    #[serde(default)]
    pub rigidity: RigiditySection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub bundle: BundleSection,
    #[serde(default)]
    pub reconstruct: ReconstructSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub bench: BenchSection,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Loads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&crate::formats::read_text(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.pipeline;
        for slot in [&mut p.tracks, &mut p.intrinsics, &mut p.out] {
            if let Some(v) = slot.as_mut().filter(|v| v.is_relative()) {
                *v = base.join(&*v);
            }
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

// ---- scene ----

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Rigid,
    Periodic { period: usize },
    Recurrent { states: Vec<usize> },
    Nonrecurrent,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeSpec {
    RandomBlob {
        deformation: Option<f64>,
    },
    ArticulatedChain {
        segments: usize,
        #[serde(default)]
        joint_angles: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CameraSpec {
    RandomSphere { radius_min: f64, radius_max: f64 },
    Orbit { radius: f64, elevation_deg: f64 },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub n_frames: Option<usize>,
    pub n_points: Option<usize>,
    pub schedule: Option<ScheduleSpec>,
    pub shape_model: Option<ShapeSpec>,
    pub camera_path: Option<CameraSpec>,
    pub intrinsics: Option<IntrinsicsSpec>,
    pub image_size: Option<[f64; 2]>,
    pub noise_sigma: Option<f64>,
    pub seed: Option<u64>,
    pub parallax_floor_deg: Option<f64>,
    pub state_separation: Option<f64>,
    pub max_retries: Option<usize>,
}

impl SceneSection {
    pub fn to_core(&self) -> Result<SceneConfig> {
        let d = SceneConfig::default();
        let cfg = SceneConfig {
            n_frames: self.n_frames.unwrap_or(d.n_frames),
            n_points: self.n_points.unwrap_or(d.n_points),
            schedule: match &self.schedule {
                None => d.schedule,
                Some(ScheduleSpec::Rigid) => Schedule::Rigid,
                Some(ScheduleSpec::Periodic { period }) => Schedule::Periodic { period: *period },
                Some(ScheduleSpec::Recurrent { states }) => Schedule::Recurrent {
                    states: states.clone(),
                },
                Some(ScheduleSpec::Nonrecurrent) => Schedule::Nonrecurrent,
            },
            shape_model: match &self.shape_model {
                None => d.shape_model,
                Some(ShapeSpec::RandomBlob { deformation }) => ShapeModel::RandomBlob {
                    deformation: deformation.unwrap_or(0.3),
                },
                Some(ShapeSpec::ArticulatedChain {
                    segments,
                    joint_angles,
                }) => ShapeModel::ArticulatedChain {
                    segments: *segments,
                    joint_angles: joint_angles.clone(),
                },
            },
            camera_path: match self.camera_path {
                None => d.camera_path,
                Some(CameraSpec::RandomSphere {
                    radius_min,
                    radius_max,
                }) => CameraPath::RandomSphere {
                    radius_min,
                    radius_max,
                },
                Some(CameraSpec::Orbit {
                    radius,
                    elevation_deg,
                }) => CameraPath::Orbit {
                    radius,
                    elevation_deg,
                },
            },
            intrinsics: match self.intrinsics {
                None => d.intrinsics,
                Some(k) => CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, k.skew)?,
            },
            image_size: self.image_size.map_or(d.image_size, |[w, h]| (w, h)),
            noise_sigma: self.noise_sigma.unwrap_or(d.noise_sigma),
            rng_seed: self.seed.unwrap_or(d.rng_seed),
            parallax_floor_deg: self.parallax_floor_deg.unwrap_or(d.parallax_floor_deg),
            state_separation: self.state_separation.unwrap_or(d.state_separation),
            max_retries: self.max_retries.unwrap_or(d.max_retries),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

// ---- rigidity ----

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingSpec {
    Randomized,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationSpec {
    StrictMin,
    Quantile,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigiditySection {
    pub sigma_f: Option<f64>,
    pub sigma_h: Option<f64>,
    pub tau_f: Option<f64>,
    pub tau_h: Option<f64>,
    pub target_rms_f: Option<f64>,
    pub target_rms_h: Option<f64>,
    pub sampling: Option<SamplingSpec>,
    pub n_samples_f: Option<usize>,
    pub n_samples_h: Option<usize>,
    pub seed: Option<u64>,
    pub aggregation: Option<AggregationSpec>,
    /// Quantile used when `aggregation = "quantile"`.
    pub quantile: Option<f64>,
    pub exhaustive_cap: Option<u64>,
    pub symmetric_epipolar: Option<bool>,
    pub max_distance: Option<f64>,
}

impl RigiditySection {
    pub fn to_core(&self) -> Result<RigidityParams> {
        let d = RigidityParams::default();
        let default_q = match d.aggregation {
            Aggregation::Quantile(q) => q,
            Aggregation::StrictMin => 0.5,
        };
        let aggregation = match (self.aggregation, self.quantile) {
            (Some(AggregationSpec::StrictMin), Some(_)) => {
                return Err(Error::Config(
                    "rigidity.quantile only applies with aggregation = \"quantile\"".into(),
                ))
            }
            (Some(AggregationSpec::StrictMin), None) => Aggregation::StrictMin,
            (Some(AggregationSpec::Quantile), q) => Aggregation::Quantile(q.unwrap_or(default_q)),
            (None, Some(q)) => Aggregation::Quantile(q),
            (None, None) => d.aggregation,
        };
        let p = RigidityParams {
            sigma_f: self.sigma_f.unwrap_or(d.sigma_f),
            sigma_h: self.sigma_h.unwrap_or(d.sigma_h),
            tau_f: self.tau_f.or(d.tau_f),
            tau_h: self.tau_h.or(d.tau_h),
            target_rms_f: self.target_rms_f.or(d.target_rms_f),
            target_rms_h: self.target_rms_h.or(d.target_rms_h),
            sampling_mode: match self.sampling {
                None => d.sampling_mode,
                Some(SamplingSpec::Randomized) => SamplingMode::Randomized,
                Some(SamplingSpec::Exhaustive) => SamplingMode::Exhaustive,
            },
            n_samples_f: self.n_samples_f.unwrap_or(d.n_samples_f),
            n_samples_h: self.n_samples_h.unwrap_or(d.n_samples_h),
            rng_seed: self.seed.unwrap_or(d.rng_seed),
            aggregation,
            exhaustive_cap: self.exhaustive_cap.unwrap_or(d.exhaustive_cap),
            symmetric_epipolar: self.symmetric_epipolar.unwrap_or(d.symmetric_epipolar),
            max_distance: self.max_distance.unwrap_or(d.max_distance),
        };
        p.validate()?;
        Ok(p)
    }
}

// ---- spectral ----

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    pub k: Option<usize>,
    pub n_eigenvectors: Option<usize>,
    pub log2_eigenvectors: Option<bool>,
    pub eigen_tolerance: Option<f64>,
    pub kmeans_restarts: Option<usize>,
    pub kmeans_max_iters: Option<usize>,
    pub seed: Option<u64>,
}

impl SpectralSection {
    /// Builds the clustering config; `k` must come from here or the caller.
    pub fn to_core(&self, k: Option<usize>) -> Result<SpectralConfig> {
        let k = k.or(self.k).ok_or_else(|| {
            Error::Config("cluster count missing: pass -k or set spectral.k".into())
        })?;
        let d = SpectralConfig::new(k);
        Ok(SpectralConfig {
            k,
            n_eigenvectors: self.n_eigenvectors.or(d.n_eigenvectors),
            log2_eigenvectors: self.log2_eigenvectors.unwrap_or(d.log2_eigenvectors),
            eigen_tolerance: self.eigen_tolerance.unwrap_or(d.eigen_tolerance),
            kmeans_restarts: self.kmeans_restarts.unwrap_or(d.kmeans_restarts),
            kmeans_max_iters: self.kmeans_max_iters.unwrap_or(d.kmeans_max_iters),
            rng_seed: self.seed.unwrap_or(d.rng_seed),
        })
    }
}

// ---- bundle and reconstruction ----

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSection {
    pub max_iterations: Option<usize>,
    pub initial_damping: Option<f64>,
    pub convergence_tol: Option<f64>,
    pub huber_delta: Option<f64>,
}

impl BundleSection {
    pub fn to_core(&self) -> Result<BundleConfig> {
        let d = BundleConfig::default();
        let b = BundleConfig {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            initial_damping: self.initial_damping.unwrap_or(d.initial_damping),
            convergence_tol: self.convergence_tol.unwrap_or(d.convergence_tol),
            huber_delta: self.huber_delta.unwrap_or(d.huber_delta),
        };
        b.validate()?;
        Ok(b)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LandmarkSpec {
    Pair([usize; 2]),
    Named(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    pub max_seed_retries: Option<usize>,
    pub max_registration_error: Option<f64>,
    /// `"auto"` or a pair of landmark indices.
    pub landmark_pair: Option<LandmarkSpec>,
}

impl ReconstructSection {
    pub fn landmarks(&self) -> Result<LandmarkPair> {
        match &self.landmark_pair {
            None => Ok(LandmarkPair::Auto),
            Some(LandmarkSpec::Named(s)) if s == "auto" => Ok(LandmarkPair::Auto),
            Some(LandmarkSpec::Named(s)) => Err(Error::Config(format!(
                "reconstruct.landmark_pair must be \"auto\" or [a, b], got \"{s}\""
            ))),
            Some(LandmarkSpec::Pair([a, b])) => Ok(LandmarkPair::Explicit(*a, *b)),
        }
    }
}

/// Builds the per-cluster reconstruction config from the relevant sections.
pub fn reconstruct_config(cfg: &Config) -> Result<ReconstructConfig> {
    let d = ReconstructConfig::default();
    let r = ReconstructConfig {
        bundle: cfg.bundle.to_core()?,
        rigidity: cfg.rigidity.to_core()?,
        max_seed_retries: cfg
            .reconstruct
            .max_seed_retries
            .unwrap_or(d.max_seed_retries),
        max_registration_error: cfg
            .reconstruct
            .max_registration_error
            .unwrap_or(d.max_registration_error),
    };
    r.validate()?;
    Ok(r)
}

// ---- pipeline ----

/// Worker count: a positive integer or `auto` (one per available CPU).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workers {
    #[default]
    Auto,
    Count(usize),
}

impl Workers {
    pub fn resolve(self) -> usize {
        match self {
            Workers::Count(n) => n,
            Workers::Auto => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl std::str::FromStr for Workers {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Workers::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Workers::Count(n)),
            _ => Err(format!("expected a positive integer or `auto`, got `{s}`")),
        }
    }
}

impl<'de> Deserialize<'de> for Workers {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(i64),
            Name(String),
        }
        let s = match Raw::deserialize(d)? {
            Raw::Count(n) => n.to_string(),
            Raw::Name(s) => s,
        };
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub tracks: Option<PathBuf>,
    pub intrinsics: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub workers: Option<Workers>,
    pub log_level: Option<String>,
}

// ---- benchmarks ----

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Timing,
    Noise,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum TimingAxis {
    Frames,
    Samples,
    Points,
}

impl TimingAxis {
    pub fn name(self) -> &'static str {
        match self {
            TimingAxis::Frames => "frames",
            TimingAxis::Samples => "samples",
            TimingAxis::Points => "points",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub sweeps: Option<Vec<SweepKind>>,
    pub axes: Option<Vec<TimingAxis>>,
    pub frames: Option<Vec<usize>>,
    pub samples: Option<Vec<usize>>,
    pub points: Option<Vec<usize>>,
    pub repeats: Option<usize>,
    pub sigmas: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
}
