use sfrm_core::affinity::build_affinity;
use sfrm_core::eval::evaluate;
use sfrm_core::reconstruct::{
    normalize_scale, reconstruct_cluster, LandmarkPair, ReconstructConfig,
};
use sfrm_core::rigidity::RigidityParams;
use sfrm_core::spectral::{cluster_views, SpectralConfig};
use sfrm_core::synthetic::{generate_scene, SceneConfig, Schedule};

fn run(schedule: Schedule, n_frames: usize, k: usize, noise: f64) -> sfrm_core::eval::EvalReport {
    let scene = SceneConfig {
        n_frames,
        schedule,
        noise_sigma: noise,
        rng_seed: 5,
        ..SceneConfig::default()
    };
    let truth = generate_scene(&scene).unwrap();
    let a = build_affinity(&truth.noisy_tracks, &RigidityParams::default()).unwrap();
    a.validate().unwrap();
    let clustering = cluster_views(&a, &SpectralConfig::new(k)).unwrap();
    let mut recs: Vec<_> = (0..k)
        .map(|c| {
            let frames = clustering.assignment.members(c);
            reconstruct_cluster(
                c,
                &truth.noisy_tracks,
                &frames,
                &scene.intrinsics,
                &ReconstructConfig::default(),
            )
            .unwrap()
        })
        .collect();
    normalize_scale(&mut recs, LandmarkPair::Auto).unwrap();
    evaluate(
        &recs,
        &clustering.assignment,
        &truth,
        &scene.intrinsics,
        noise,
    )
    .unwrap()
}

#[test]
fn periodic_scene_is_recovered_exactly_without_noise() {
    let r = run(Schedule::Periodic { period: 3 }, 15, 3, 0.0);
    assert_eq!(r.purity, 1.0);
    assert_eq!(r.success_ratio, 1.0);
    assert!(r.mean_rmse < 1e-8, "rmse {}", r.mean_rmse);
}

#[test]
fn rigid_scene_forms_one_cluster() {
    let r = run(Schedule::Rigid, 8, 1, 0.5);
    assert_eq!(r.success_ratio, 1.0);
    assert!(r.mean_rmse < 0.02, "rmse {}", r.mean_rmse);
    assert!(r.clusters[0].mean_reproj_error < 1.0);
}

#[test]
fn mild_noise_degrades_gracefully() {
    let clean = run(Schedule::Periodic { period: 3 }, 15, 3, 0.0);
    let noisy = run(Schedule::Periodic { period: 3 }, 15, 3, 1.0);
    assert_eq!(noisy.purity, 1.0);
    assert!(noisy.mean_rmse > clean.mean_rmse);
    assert!(noisy.mean_rmse < 0.05, "rmse {}", noisy.mean_rmse);
}
