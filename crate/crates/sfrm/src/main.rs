use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sfrm::config::{self, Config, SweepKind, TimingAxis, Workers};
use sfrm::formats;
use sfrm::stages::{self, PipelinePlan};
use sfrm::sweep::{self, RunSettings};
use sfrm::{Error, Result};
use sfrm_core::rigidity::{RigidityParams, SamplingMode};

#[derive(Parser)]
#[command(
    name = "sfrm",
    version,
    about = "Reconstruct recurrently deforming shapes from 2D tracks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed overriding the configured ones.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads: a positive integer or `auto`.
    #[arg(long, global = true)]
    workers: Option<Workers>,
}

#[derive(Args, Clone, Default)]
struct Sampling {
    /// Random samples per model in the rigidity test.
    #[arg(long)]
    samples: Option<usize>,
    /// Enumerate every minimal subset instead of sampling.
    #[arg(long)]
    exhaustive: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory.
    Gen {
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Build the pairwise rigidity affinity matrix from a tracks file.
    Affinity {
        tracks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        common: Common,
    },
    /// Spectrally cluster an affinity matrix into K groups.
    Cluster {
        affinity: PathBuf,
        #[arg(short = 'k')]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rigidly reconstruct each cluster.
    Reconstruct {
        tracks: PathBuf,
        clusters: PathBuf,
        intrinsics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        common: Common,
    },
    /// Score a results directory against a scene directory.
    Eval {
        truth: PathBuf,
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every stage from one configuration file.
    Pipeline {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(short = 'k')]
        k: Option<usize>,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        common: Common,
    },
    /// Timing and noise sweeps.
    Bench {
        #[arg(long)]
        out: PathBuf,
        #[arg(short = 'k')]
        k: Option<usize>,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Gen { common, .. }
            | Command::Affinity { common, .. }
            | Command::Cluster { common, .. }
            | Command::Reconstruct { common, .. }
            | Command::Eval { common, .. }
            | Command::Pipeline { common, .. }
            | Command::Bench { common, .. } => common,
        }
    }
}

fn workers(common: &Common, cfg: &Config) -> usize {
    common
        .workers
        .or(cfg.pipeline.workers)
        .unwrap_or_default()
        .resolve()
}

fn rigidity(cfg: &Config, common: &Common, sampling: &Sampling) -> Result<RigidityParams> {
    let mut p = cfg.rigidity.to_core()?;
    if let Some(seed) = common.seed {
        p.rng_seed = seed;
    }
    if let Some(n) = sampling.samples {
        p.n_samples_f = n;
        p.n_samples_h = n;
    }
    if sampling.exhaustive {
        p.sampling_mode = SamplingMode::Exhaustive;
    }
    p.validate()?;
    Ok(p)
}

fn scene_config(cfg: &Config, common: &Common) -> Result<sfrm_core::synthetic::SceneConfig> {
    let section = cfg
        .scene
        .as_ref()
        .ok_or_else(|| Error::Config("configuration has no [scene] section".into()))?;
    let mut scene = section.to_core()?;
    if let Some(seed) = common.seed {
        scene.rng_seed = seed;
    }
    Ok(scene)
}

fn require_out(out: Option<PathBuf>, cfg: &Config) -> Result<PathBuf> {
    out.or_else(|| cfg.pipeline.out.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set pipeline.out".into()))
}

fn run(cmd: Command, cfg: &Config) -> Result<()> {
    match cmd {
        Command::Gen { out, common } => {
            let scene = scene_config(cfg, &common)?;
            let out = require_out(out, cfg)?;
            stages::run_gen(&scene, &out)?;
            println!("wrote scene to {}", out.display());
        }
        Command::Affinity {
            tracks,
            out,
            sampling,
            common,
        } => {
            let params = rigidity(cfg, &common, &sampling)?;
            let s = stages::run_affinity(&tracks, &out, &params, workers(&common, cfg))?;
            println!(
                "N={} nonzero_fraction={:.4} failed_pairs={} elapsed={:.3}s",
                s.n,
                s.nonzero_fraction,
                s.failed_pairs,
                s.elapsed.as_secs_f64()
            );
        }
        Command::Cluster {
            affinity,
            k,
            out,
            common,
        } => {
            let mut sc = cfg.spectral.to_core(k)?;
            if let Some(seed) = common.seed {
                sc.rng_seed = seed;
            }
            let c = stages::run_cluster(&affinity, &out, &sc)?;
            println!("cluster sizes: {:?}", c.assignment.sizes());
        }
        Command::Reconstruct {
            tracks,
            clusters,
            intrinsics,
            out,
            sampling,
            common,
        } => {
            let mut rc = config::reconstruct_config(cfg)?;
            rc.rigidity = rigidity(cfg, &common, &sampling)?;
            let recs = stages::run_reconstruct(
                &tracks,
                &clusters,
                &intrinsics,
                &out,
                &rc,
                cfg.reconstruct.landmarks()?,
                workers(&common, cfg),
            )?;
            let ok = recs.iter().filter(|r| r.status.is_success()).count();
            println!("{ok}/{} clusters reconstructed", recs.len());
        }
        Command::Eval {
            truth,
            results,
            out,
            ..
        } => {
            let r = stages::run_eval(&truth, &results, &out)?;
            println!(
                "purity={:.4} success_ratio={:.4} mean_rmse={:.4e}",
                r.purity, r.success_ratio, r.mean_rmse
            );
        }
        Command::Pipeline {
            out,
            k,
            sampling,
            common,
        } => {
            let out = require_out(out, cfg)?;
            let plan = pipeline_plan(cfg, &common, &sampling, k)?;
            match stages::run_pipeline(&plan, &out)? {
                Some(r) => println!(
                    "purity={:.4} success_ratio={:.4} mean_rmse={:.4e}",
                    r.purity, r.success_ratio, r.mean_rmse
                ),
                None => println!("results written to {}", out.display()),
            }
        }
        Command::Bench {
            out,
            k,
            sampling,
            common,
        } => bench(cfg, &common, &sampling, k, &out)?,
    }
    Ok(())
}

fn pipeline_plan(
    cfg: &Config,
    common: &Common,
    sampling: &Sampling,
    k: Option<usize>,
) -> Result<PipelinePlan> {
    let scene = match cfg.scene {
        Some(_) => Some(scene_config(cfg, common)?),
        None => None,
    };
    let n_states = match &scene {
        Some(s) => Some(
            s.schedule
                .states(s.n_frames)?
                .into_iter()
                .max()
                .map_or(1, |m| m + 1),
        ),
        None => None,
    };
    let mut spectral = cfg.spectral.to_core(k.or(cfg.spectral.k).or(n_states))?;
    let rigidity = rigidity(cfg, common, sampling)?;
    if let Some(seed) = common.seed {
        spectral.rng_seed = seed;
    }
    let mut reconstruct = config::reconstruct_config(cfg)?;
    reconstruct.rigidity = rigidity;
    Ok(PipelinePlan {
        scene,
        tracks: cfg.pipeline.tracks.clone(),
        intrinsics: cfg.pipeline.intrinsics.clone(),
        rigidity,
        spectral,
        reconstruct,
        landmarks: cfg.reconstruct.landmarks()?,
        workers: workers(common, cfg),
    })
}

fn bench(
    cfg: &Config,
    common: &Common,
    sampling: &Sampling,
    k: Option<usize>,
    out: &Path,
) -> Result<()> {
    let b = &cfg.bench;
    let sweeps = b.sweeps.clone().unwrap_or_else(|| vec![SweepKind::Timing]);
    let repeats = b.repeats.unwrap_or(1);
    for kind in sweeps {
        match kind {
            SweepKind::Timing => {
                let axes = b.axes.clone().unwrap_or_else(|| {
                    vec![TimingAxis::Frames, TimingAxis::Samples, TimingAxis::Points]
                });
                for axis in axes {
                    let (mut setup, defaults) = sweep::default_timing(axis);
                    if let Some(s) = &cfg.scene {
                        let mut scene = s.to_core()?;
                        scene.n_frames = setup.scene.n_frames;
                        scene.n_points = setup.scene.n_points;
                        setup.scene = scene;
                    }
                    setup.rigidity = rigidity(cfg, common, sampling)?;
                    let values = match axis {
                        TimingAxis::Frames => b.frames.clone(),
                        TimingAxis::Samples => b.samples.clone(),
                        TimingAxis::Points => b.points.clone(),
                    }
                    .unwrap_or(defaults);
                    let rows = sweep::timing_sweep(&setup, axis, &values, repeats)?;
                    let path = out.join(format!("timing_{}.txt", axis.name()));
                    formats::write_text(&path, &sweep::format_timing(axis, &rows))?;
                    match sweep::timing_slope(&rows) {
                        Some(s) => println!("{} axis: log-log slope {s:.3}", axis.name()),
                        None => println!("{} axis: slope undefined", axis.name()),
                    }
                }
            }
            SweepKind::Noise => {
                let base = scene_config(cfg, common)?;
                let plan = pipeline_plan(cfg, common, sampling, k)?;
                let settings = RunSettings {
                    rigidity: plan.rigidity,
                    spectral: plan.spectral,
                    reconstruct: plan.reconstruct,
                    landmarks: plan.landmarks,
                };
                let sigmas = b.sigmas.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0]);
                let seeds = b.seeds.clone().unwrap_or_else(|| vec![0, 1, 2]);
                let runs =
                    sweep::noise_sweep(&base, &sigmas, &seeds, &settings, workers(common, cfg))?;
                formats::write_text(&out.join("noise_sweep.txt"), &sweep::format_noise(&runs))?;
                formats::write_text(
                    &out.join("noise_runs.txt"),
                    &sweep::format_noise_runs(&runs),
                )?;
                for r in sweep::summarize_noise(&runs) {
                    println!(
                        "sigma={} success_ratio={:.3} mean_rmse={:.3e}",
                        r.sigma, r.success_ratio, r.mean_rmse
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match Config::load_or_default(cli.command.common().config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let level = cfg
        .pipeline
        .log_level
        .clone()
        .unwrap_or_else(|| "info".into());
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
