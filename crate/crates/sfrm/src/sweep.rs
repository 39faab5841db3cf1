//! Noise and timing sweeps over synthetic scenes.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use sfrm_core::affinity::build_affinity;
use sfrm_core::eval::{evaluate, loglog_slope, spearman, EvalReport};
use sfrm_core::reconstruct::{LandmarkPair, ReconstructConfig};
use sfrm_core::rigidity::RigidityParams;
use sfrm_core::spectral::{cluster_views, SpectralConfig};
use sfrm_core::synthetic::{generate_scene, SceneConfig};

use crate::config::TimingAxis;
use crate::error::Result;
use crate::stages::{reconstruct_all, thread_pool};

/// Settings shared by every run of a sweep.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub rigidity: RigidityParams,
    pub spectral: SpectralConfig,
    pub reconstruct: ReconstructConfig,
    pub landmarks: LandmarkPair,
}

/// Full pipeline on one in-memory scene, single-threaded.
pub fn run_scene(scene: &SceneConfig, settings: &RunSettings) -> Result<EvalReport> {
    let truth = generate_scene(scene)?;
    let a = build_affinity(&truth.noisy_tracks, &settings.rigidity)?;
    let clustering = cluster_views(&a, &settings.spectral)?;
    let recs = reconstruct_all(
        &truth.noisy_tracks,
        &clustering.assignment,
        &scene.intrinsics,
        &settings.reconstruct,
        settings.landmarks,
        1,
    )?
    .clusters;
    Ok(evaluate(
        &recs,
        &clustering.assignment,
        &truth,
        &scene.intrinsics,
        scene.noise_sigma,
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRun {
    pub sigma: f64,
    pub seed: u64,
    pub purity: f64,
    pub success_ratio: f64,
    pub mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub sigma: f64,
    pub runs: usize,
    pub purity: f64,
    pub success_ratio: f64,
    /// Mean over runs with a finite RMSE; NaN when none has one.
    pub mean_rmse: f64,
}

/// Runs every (sigma, seed) combination, fanned out over `workers` threads.
/// The scene seed fixes shapes and cameras, so across sigmas only the noise
/// magnitude changes.
pub fn noise_sweep(
    base: &SceneConfig,
    sigmas: &[f64],
    seeds: &[u64],
    settings: &RunSettings,
    workers: usize,
) -> Result<Vec<NoiseRun>> {
    let jobs: Vec<(f64, u64)> = sigmas
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    thread_pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(sigma, seed)| {
                let scene = SceneConfig {
                    noise_sigma: sigma,
                    rng_seed: seed,
                    ..base.clone()
                };
                let r = run_scene(&scene, settings)?;
                log::info!(
                    "noise sweep sigma={sigma} seed={seed}: purity={:.3} success={:.3} rmse={:.3e}",
                    r.purity,
                    r.success_ratio,
                    r.mean_rmse
                );
                Ok(NoiseRun {
                    sigma,
                    seed,
                    purity: r.purity,
                    success_ratio: r.success_ratio,
                    mean_rmse: r.mean_rmse,
                })
            })
            .collect()
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Per-sigma averages, in the order sigmas first appear.
pub fn summarize_noise(runs: &[NoiseRun]) -> Vec<NoiseRow> {
    let mut sigmas: Vec<f64> = Vec::new();
    for r in runs {
        if !sigmas.contains(&r.sigma) {
            sigmas.push(r.sigma);
        }
    }
    sigmas
        .into_iter()
        .map(|sigma| {
            let group: Vec<&NoiseRun> = runs.iter().filter(|r| r.sigma == sigma).collect();
            NoiseRow {
                sigma,
                runs: group.len(),
                purity: mean(group.iter().map(|r| r.purity)),
                success_ratio: mean(group.iter().map(|r| r.success_ratio)),
                mean_rmse: mean(group.iter().map(|r| r.mean_rmse).filter(|x| x.is_finite())),
            }
        })
        .collect()
}

/// Spearman correlation between sigma and RMSE over all runs with an RMSE.
pub fn noise_rmse_correlation(runs: &[NoiseRun]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = runs
        .iter()
        .filter(|r| r.mean_rmse.is_finite())
        .map(|r| (r.sigma, r.mean_rmse))
        .unzip();
    spearman(&x, &y)
}

pub fn format_noise(runs: &[NoiseRun]) -> String {
    let mut out = String::from("# noise sweep\n");
    writeln!(
        out,
        "# spearman_sigma_rmse={:e}",
        noise_rmse_correlation(runs)
    )
    .unwrap();
    out.push_str("# col: sigma runs purity success_ratio mean_rmse\n");
    for r in summarize_noise(runs) {
        writeln!(
            out,
            "{:e} {} {:e} {:e} {:e}",
            r.sigma, r.runs, r.purity, r.success_ratio, r.mean_rmse
        )
        .unwrap();
    }
    out
}

pub fn format_noise_runs(runs: &[NoiseRun]) -> String {
    let mut out =
        String::from("# noise sweep runs\n# col: sigma seed purity success_ratio mean_rmse\n");
    for r in runs {
        writeln!(
            out,
            "{:e} {} {:e} {:e} {:e}",
            r.sigma, r.seed, r.purity, r.success_ratio, r.mean_rmse
        )
        .unwrap();
    }
    out
}

/// Base configuration for one timing axis.
#[derive(Debug, Clone)]
pub struct TimingSetup {
    pub scene: SceneConfig,
    pub rigidity: RigidityParams,
}

impl TimingSetup {
    /// Scene and parameters with `axis` set to `value`.
    pub fn at(&self, axis: TimingAxis, value: usize) -> (SceneConfig, RigidityParams) {
        let mut scene = self.scene.clone();
        let mut rigidity = self.rigidity;
        match axis {
            TimingAxis::Frames => scene.n_frames = value,
            TimingAxis::Points => scene.n_points = value,
            TimingAxis::Samples => {
                rigidity.n_samples_f = value;
                rigidity.n_samples_h = value;
            }
        }
        (scene, rigidity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub value: usize,
    /// Fastest of the repeats, seconds.
    pub seconds: f64,
}

/// Times the affinity stage on one thread for each axis value; scene
/// generation is outside the timed region.
pub fn timing_sweep(
    setup: &TimingSetup,
    axis: TimingAxis,
    values: &[usize],
    repeats: usize,
) -> Result<Vec<TimingRow>> {
    values
        .iter()
        .map(|&value| {
            let (scene, rigidity) = setup.at(axis, value);
            let truth = generate_scene(&scene)?;
            let mut best = f64::INFINITY;
            for _ in 0..repeats.max(1) {
                let start = Instant::now();
                let a = build_affinity(&truth.noisy_tracks, &rigidity)?;
                best = best.min(start.elapsed().as_secs_f64());
                std::hint::black_box(a);
            }
            log::info!("timing {}={value}: {best:.4}s", axis.name());
            Ok(TimingRow {
                value,
                seconds: best,
            })
        })
        .collect()
}

pub fn timing_slope(rows: &[TimingRow]) -> Option<f64> {
    let x: Vec<f64> = rows.iter().map(|r| r.value as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    loglog_slope(&x, &y)
}

pub fn format_timing(axis: TimingAxis, rows: &[TimingRow]) -> String {
    let mut out = format!("# timing axis={} workers=1\n", axis.name());
    if let Some(s) = timing_slope(rows) {
        writeln!(out, "# loglog_slope={s:e}").unwrap();
    }
    writeln!(out, "# col: {} seconds", axis.name()).unwrap();
    for r in rows {
        writeln!(out, "{} {:e}", r.value, r.seconds).unwrap();
    }
    out
}

/// Default timing setup for an axis: a rigid scene sized so the axis under
/// test dominates the cost, and the values to sweep.
pub fn default_timing(axis: TimingAxis) -> (TimingSetup, Vec<usize>) {
    let rigidity = RigidityParams::default();
    let scene = |n_frames, n_points| SceneConfig {
        n_frames,
        n_points,
        parallax_floor_deg: 0.0,
        ..SceneConfig::default()
    };
    match axis {
        TimingAxis::Frames => (
            TimingSetup {
                scene: scene(20, 20),
                rigidity,
            },
            vec![20, 40, 80],
        ),
        TimingAxis::Samples => (
            TimingSetup {
                scene: scene(12, 20),
                rigidity,
            },
            vec![100, 200, 400, 800],
        ),
        TimingAxis::Points => (
            TimingSetup {
                scene: scene(6, 2000),
                rigidity,
            },
            // Below roughly a thousand points the fixed cost of each minimal
            // fit outweighs the per-point residuals.
            vec![2000, 4000, 8000, 16000],
        ),
    }
}
