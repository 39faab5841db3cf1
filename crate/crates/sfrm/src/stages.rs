//! Pipeline stages. Each `run_*` function reads its declared input files and
//! writes its declared outputs, so stages can be re-run in isolation.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use sfrm_core::affinity::{evaluate_pair, pair_indices, AffinityMatrix, TrackSet};
use sfrm_core::eval::{evaluate, EvalReport};
use sfrm_core::reconstruct::{
    normalize_scale, reconstruct_cluster, ClusterReconstruction, LandmarkPair, ReconstructConfig,
};
use sfrm_core::rigidity::{binomial, RigidityParams, SamplingMode};
use sfrm_core::spectral::{cluster_views, ClusterAssignment, SpectralConfig};
use sfrm_core::synthetic::{generate_scene, CameraPath, SceneConfig, Schedule, ShapeModel};
use sfrm_core::CameraIntrinsics;

use crate::error::{Error, Result};
use crate::formats::{self, ClustersFile, Provenance, Scene};

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Runtime(format!("cannot start worker pool: {e}")))
}

/// Affinity over all frame pairs on `workers` threads. Pair seeds depend
/// only on the pair, so the result is identical for any worker count.
pub fn compute_affinity(
    tracks: &TrackSet,
    params: &RigidityParams,
    workers: usize,
) -> Result<AffinityMatrix> {
    params.validate()?;
    // Exhaustive enumeration that is too large would fail on every pair alike.
    if params.sampling_mode == SamplingMode::Exhaustive {
        let count = binomial(tracks.n_points() as u64, 8).unwrap_or(u128::MAX);
        if count > u128::from(params.exhaustive_cap) {
            return Err(sfrm_core::Error::ExhaustiveTooLarge {
                count,
                cap: params.exhaustive_cap,
            }
            .into());
        }
    }
    let pairs: Vec<(usize, usize)> = pair_indices(tracks.n_frames()).collect();
    let outcomes: Vec<_> = thread_pool(workers)?.install(|| {
        pairs
            .par_iter()
            .map(|&(i, j)| evaluate_pair(tracks, i, j, params))
            .collect()
    });
    Ok(AffinityMatrix::assemble(
        tracks.n_frames(),
        params.digest(),
        outcomes,
    ))
}

/// Per-cluster reconstructions and the landmark pair used to fix scale,
/// if one could be applied.
#[derive(Debug, Clone)]
pub struct Reconstructions {
    pub clusters: Vec<ClusterReconstruction>,
    pub landmark_pair: Option<(usize, usize)>,
}

/// Reconstructs every cluster in parallel, then rescales the successful
/// ones to a common landmark distance. Errors become failed clusters.
pub fn reconstruct_all(
    tracks: &TrackSet,
    assignment: &ClusterAssignment,
    k: &CameraIntrinsics,
    config: &ReconstructConfig,
    landmarks: LandmarkPair,
    workers: usize,
) -> Result<Reconstructions> {
    config.validate()?;
    let mut recs: Vec<ClusterReconstruction> = thread_pool(workers)?.install(|| {
        (0..assignment.k)
            .into_par_iter()
            .map(|c| {
                let frames = assignment.members(c);
                reconstruct_cluster(c, tracks, &frames, k, config).unwrap_or_else(|e| {
                    log::warn!("cluster {c}: {e}");
                    ClusterReconstruction::failed(c, e.to_string())
                })
            })
            .collect()
    });
    for r in &recs {
        if let sfrm_core::reconstruct::ReconstructionStatus::Failed(why) = &r.status {
            log::info!("cluster {} failed: {why}", r.cluster_id);
        }
    }
    let pair = match normalize_scale(&mut recs, landmarks) {
        Ok((pair, flagged)) => {
            for id in flagged {
                log::warn!("cluster {id}: landmark pair coincides, scale left unnormalised");
            }
            Some(pair)
        }
        Err(e @ sfrm_core::Error::InvalidParameter { .. }) => return Err(e.into()),
        Err(e) => {
            log::warn!("scale normalisation skipped: {e}");
            None
        }
    };
    Ok(Reconstructions {
        clusters: recs,
        landmark_pair: pair,
    })
}

// ---- gen ----

fn schedule_name(s: &Schedule) -> String {
    match s {
        Schedule::Rigid => "rigid".into(),
        Schedule::Periodic { period } => format!("periodic({period})"),
        Schedule::Recurrent { .. } => "recurrent".into(),
        Schedule::Nonrecurrent => "nonrecurrent".into(),
    }
}

fn shape_name(s: &ShapeModel) -> String {
    match s {
        ShapeModel::RandomBlob { deformation } => format!("random-blob({deformation:e})"),
        ShapeModel::ArticulatedChain { segments, .. } => format!("articulated-chain({segments})"),
    }
}

fn camera_name(c: &CameraPath) -> String {
    match c {
        CameraPath::RandomSphere {
            radius_min,
            radius_max,
        } => format!("random-sphere({radius_min:e},{radius_max:e})"),
        CameraPath::Orbit {
            radius,
            elevation_deg,
        } => format!("orbit({radius:e},{elevation_deg:e})"),
    }
}

/// Generates a synthetic scene in memory along with its manifest.
pub fn make_scene(config: &SceneConfig) -> Result<Scene> {
    let truth = generate_scene(config)?;
    let kv = |k: &str, v: String| (k.to_string(), v);
    let manifest = vec![
        kv("format", "1".into()),
        kv("n_frames", config.n_frames.to_string()),
        kv("n_points", config.n_points.to_string()),
        kv("n_states", truth.n_states().to_string()),
        kv("schedule", schedule_name(&config.schedule)),
        kv("shape_model", shape_name(&config.shape_model)),
        kv("camera_path", camera_name(&config.camera_path)),
        kv("image_width", format!("{:e}", config.image_size.0)),
        kv("image_height", format!("{:e}", config.image_size.1)),
        kv("noise_sigma", format!("{:e}", config.noise_sigma)),
        kv("seed", config.rng_seed.to_string()),
        kv(
            "parallax_floor_deg",
            format!("{:e}", config.parallax_floor_deg),
        ),
        kv("state_separation", format!("{:e}", config.state_separation)),
        kv("diameter", format!("{:e}", truth.diameter)),
    ];
    Ok(Scene {
        truth,
        intrinsics: config.intrinsics,
        noise_sigma: config.noise_sigma,
        manifest,
    })
}

pub fn run_gen(config: &SceneConfig, out_dir: &Path) -> Result<Scene> {
    let scene = make_scene(config)?;
    formats::write_scene(out_dir, &scene)?;
    log::info!(
        "scene: {} frames, {} points, {} states -> {}",
        config.n_frames,
        config.n_points,
        scene.truth.n_states(),
        out_dir.display()
    );
    Ok(scene)
}

// ---- affinity ----

#[derive(Debug, Clone)]
pub struct AffinitySummary {
    pub n: usize,
    pub nonzero_fraction: f64,
    pub failed_pairs: usize,
    pub elapsed: Duration,
}

pub fn run_affinity(
    tracks_path: &Path,
    out: &Path,
    params: &RigidityParams,
    workers: usize,
) -> Result<AffinitySummary> {
    params.validate()?;
    let tracks = formats::read_tracks(tracks_path)?;
    let start = Instant::now();
    let a = compute_affinity(&tracks, params, workers)?;
    let elapsed = start.elapsed();
    formats::write_affinity(out, &a, params.rng_seed)?;
    let summary = AffinitySummary {
        n: a.n(),
        nonzero_fraction: a.nonzero_fraction(),
        failed_pairs: a.diagnostics.len(),
        elapsed,
    };
    log::info!(
        "affinity: N={} nonzero={:.3} failed_pairs={} elapsed={:.2?}",
        summary.n,
        summary.nonzero_fraction,
        summary.failed_pairs,
        summary.elapsed
    );
    Ok(summary)
}

// ---- cluster ----

pub fn run_cluster(
    affinity_path: &Path,
    out: &Path,
    config: &SpectralConfig,
) -> Result<ClustersFile> {
    let file = formats::read_affinity(affinity_path)?;
    config.validate(file.matrix.n())?;
    let clustering = cluster_views(&file.matrix, config)?;
    let clusters = ClustersFile {
        assignment: clustering.assignment,
        seed: config.rng_seed,
        provenance: vec![
            ("affinity_seed".into(), file.seed.to_string()),
            (
                "affinity_digest".into(),
                format!("{:016x}", file.matrix.params_digest),
            ),
        ],
    };
    formats::write_text(out, &formats::format_clusters(&clusters))?;
    log::info!(
        "clusters: N={} K={} sizes={:?}",
        clusters.assignment.labels.len(),
        config.k,
        clusters.assignment.sizes()
    );
    Ok(clusters)
}

// ---- reconstruct ----

pub fn run_reconstruct(
    tracks_path: &Path,
    clusters_path: &Path,
    intrinsics_path: &Path,
    out_dir: &Path,
    config: &ReconstructConfig,
    landmarks: LandmarkPair,
    workers: usize,
) -> Result<Vec<ClusterReconstruction>> {
    config.validate()?;
    let tracks = formats::read_tracks(tracks_path)?;
    let clusters = formats::read_clusters(clusters_path)?;
    let k = formats::read_intrinsics(intrinsics_path)?;
    let n = clusters.assignment.labels.len();
    if n != tracks.n_frames() {
        return Err(Error::Mismatch(format!(
            "clusters file has N={n} but tracks file has N={}",
            tracks.n_frames()
        )));
    }
    let Reconstructions {
        clusters: recs,
        landmark_pair: pair,
    } = reconstruct_all(
        &tracks,
        &clusters.assignment,
        &k,
        config,
        landmarks,
        workers,
    )?;
    let mut provenance: Provenance = clusters.provenance.clone();
    provenance.push(("clusters_seed".into(), clusters.seed.to_string()));
    provenance.push((
        "reconstruct_rigidity_digest".into(),
        format!("{:016x}", config.rigidity.digest()),
    ));
    provenance.push((
        "landmark_pair".into(),
        pair.map_or("-".to_string(), |(a, b)| format!("{a}:{b}")),
    ));
    formats::write_results(out_dir, &recs, &clusters, &provenance)?;
    let ok = recs.iter().filter(|r| r.status.is_success()).count();
    log::info!("reconstruct: {ok}/{} clusters succeeded", recs.len());
    Ok(recs)
}

// ---- eval ----

pub fn histogram_path(report: &Path) -> PathBuf {
    report.with_file_name("histogram.txt")
}

pub fn run_eval(truth_dir: &Path, results_dir: &Path, report_path: &Path) -> Result<EvalReport> {
    let scene = formats::read_scene(truth_dir)?;
    let results = formats::read_results(results_dir)?;
    let n_truth = scene.truth.state_of_frame.len();
    let n_results = results.clusters.assignment.labels.len();
    if n_truth != n_results {
        return Err(Error::Mismatch(format!(
            "results have N={n_results} frames but the scene has N={n_truth}"
        )));
    }
    let m = scene.truth.tracks.n_points();
    if let Some(r) = results
        .reconstructions
        .iter()
        .find(|r| !r.shape.is_empty() && r.shape.len() != m)
    {
        return Err(Error::Mismatch(format!(
            "cluster {} has M={} points but the scene has M={m}",
            r.cluster_id,
            r.shape.len()
        )));
    }
    let report = evaluate(
        &results.reconstructions,
        &results.clusters.assignment,
        &scene.truth,
        &scene.intrinsics,
        scene.noise_sigma,
    )?;
    let mut provenance: Provenance = vec![
        (
            "scene_seed".into(),
            formats::manifest_value::<String>(truth_dir, &scene.manifest, "seed")?,
        ),
        ("noise_sigma".into(), format!("{:e}", scene.noise_sigma)),
        (
            "success_threshold_px".into(),
            format!(
                "{:e}",
                sfrm_core::eval::success_threshold(scene.noise_sigma)
            ),
        ),
    ];
    provenance.extend(results.provenance);
    formats::write_text(report_path, &formats::format_report(&report, &provenance))?;
    formats::write_text(
        &histogram_path(report_path),
        &formats::format_histogram(&report.histogram),
    )?;
    log::info!(
        "eval: purity={:.3} success_ratio={:.3} mean_rmse={:.3e}",
        report.purity,
        report.success_ratio,
        report.mean_rmse
    );
    Ok(report)
}

// ---- pipeline ----

/// Everything the end-to-end pipeline needs, already resolved.
#[derive(Debug, Clone)]
pub struct PipelinePlan {
    pub scene: Option<SceneConfig>,
    pub tracks: Option<PathBuf>,
    pub intrinsics: Option<PathBuf>,
    pub rigidity: RigidityParams,
    pub spectral: SpectralConfig,
    pub reconstruct: ReconstructConfig,
    pub landmarks: LandmarkPair,
    pub workers: usize,
}

pub const PIPELINE_SCENE: &str = "scene";
pub const PIPELINE_AFFINITY: &str = "affinity.txt";
pub const PIPELINE_CLUSTERS: &str = "clusters.txt";
pub const PIPELINE_RESULTS: &str = "results";
pub const PIPELINE_REPORT: &str = "report.txt";
pub const PIPELINE_TIMINGS: &str = "timings.txt";

/// Runs the stages in order through files under `out`, so the outcome is the
/// same as invoking each stage by hand on the intermediate files.
pub fn run_pipeline(plan: &PipelinePlan, out: &Path) -> Result<Option<EvalReport>> {
    let mut timings: Vec<(&str, Duration)> = Vec::new();
    let mut time = |name, start: Instant| timings.push((name, start.elapsed()));
    let scene_dir = out.join(PIPELINE_SCENE);
    let (tracks, intrinsics) =
        match (&plan.scene, &plan.tracks, &plan.intrinsics) {
            (Some(scene), None, None) => {
                let t = Instant::now();
                run_gen(scene, &scene_dir)?;
                time("gen", t);
                (
                    scene_dir.join(formats::SCENE_TRACKS),
                    scene_dir.join(formats::SCENE_INTRINSICS),
                )
            }
            (None, Some(t), Some(k)) => (t.clone(), k.clone()),
            (Some(_), _, _) => {
                return Err(Error::Config(
                    "give either a [scene] section or pipeline.tracks/intrinsics, not both".into(),
                ))
            }
            _ => return Err(Error::Config(
                "pipeline needs a [scene] section or both pipeline.tracks and pipeline.intrinsics"
                    .into(),
            )),
        };
    for p in [&tracks, &intrinsics] {
        if !p.exists() {
            return Err(Error::Config(format!(
                "input file {} does not exist",
                p.display()
            )));
        }
    }
    let affinity = out.join(PIPELINE_AFFINITY);
    let clusters = out.join(PIPELINE_CLUSTERS);
    let results = out.join(PIPELINE_RESULTS);
    let t = Instant::now();
    run_affinity(&tracks, &affinity, &plan.rigidity, plan.workers)?;
    time("affinity", t);
    let t = Instant::now();
    run_cluster(&affinity, &clusters, &plan.spectral)?;
    time("cluster", t);
    let t = Instant::now();
    run_reconstruct(
        &tracks,
        &clusters,
        &intrinsics,
        &results,
        &plan.reconstruct,
        plan.landmarks,
        plan.workers,
    )?;
    time("reconstruct", t);
    let report = if plan.scene.is_some() {
        let t = Instant::now();
        let r = run_eval(&scene_dir, &results, &out.join(PIPELINE_REPORT))?;
        time("eval", t);
        Some(r)
    } else {
        None
    };
    let mut text = format!("# timings workers={}\n# col: stage seconds\n", plan.workers);
    for (name, d) in &timings {
        text.push_str(&format!("{name} {:.6}\n", d.as_secs_f64()));
    }
    formats::write_text(&out.join(PIPELINE_TIMINGS), &text)?;
    Ok(report)
}
