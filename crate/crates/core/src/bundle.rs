//! Levenberg-Marquardt bundle adjustment with a Huber loss.
//!
//! The first camera is held at the identity and, after every accepted step,
//! the reconstruction is rescaled so the second camera's centre lies at unit
//! distance from the origin.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, SMatrix, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, Point2, Point3};
use crate::math::{skew, sqrt};

type Matrix2x6 = SMatrix<f64, 2, 6>;
type Matrix6x3 = SMatrix<f64, 6, 3>;
type Matrix6 = SMatrix<f64, 6, 6>;

#[derive(Debug, Clone, PartialEq)]
pub struct BundleConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Relative cost decrease below which the solve stops.
    pub convergence_tol: f64,
    /// Huber width in pixels.
    pub huber_delta: f64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        BundleConfig {
            max_iterations: 100,
            initial_damping: 1e-3,
            convergence_tol: 1e-10,
            huber_delta: 3.0,
        }
    }
}

impl BundleConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be positive"));
        }
        if !ok(self.initial_damping) {
            return Err(Error::invalid("initial_damping", "must be positive"));
        }
        if !ok(self.convergence_tol) {
            return Err(Error::invalid("convergence_tol", "must be positive"));
        }
        if !ok(self.huber_delta) {
            return Err(Error::invalid("huber_delta", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub view: usize,
    pub point: usize,
    pub pixel: Point2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Robust cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleResult {
    pub points: Vec<Point3>,
    pub poses: Vec<CameraPose>,
    pub report: BundleReport,
}

pub fn huber(s: f64, delta: f64) -> f64 {
    if s <= delta {
        0.5 * s * s
    } else {
        delta * (s - 0.5 * delta)
    }
}

fn huber_weight(s: f64, delta: f64) -> f64 {
    if s <= delta {
        1.0
    } else {
        delta / s
    }
}

/// Projection of `x` together with its derivatives with respect to a left
/// pose perturbation `(w, dt)` and to the point.
pub fn observation_jacobian(
    pose: &CameraPose,
    k: &CameraIntrinsics,
    x: &Point3,
) -> (Point2, Matrix2x6, Matrix2x3<f64>) {
    let rx = pose.rotation * x.coords;
    let pc = rx + pose.translation;
    let dp = k.projection_jacobian(&pc);
    let mut dxc = SMatrix::<f64, 3, 6>::zeros();
    dxc.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&rx)));
    dxc.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&Matrix3::identity());
    (k.project_camera(&pc), dp * dxc, dp * pose.rotation)
}

pub fn robust_cost(
    points: &[Point3],
    poses: &[CameraPose],
    intrinsics: &[CameraIntrinsics],
    observations: &[Observation],
    delta: f64,
) -> f64 {
    observations
        .iter()
        .map(|o| {
            let u = intrinsics[o.view].project(&poses[o.view], &points[o.point]);
            let s = (u - o.pixel).norm();
            if s.is_finite() {
                huber(s, delta)
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// Mean Euclidean reprojection error in pixels.
pub fn mean_reprojection_error(
    points: &[Point3],
    poses: &[CameraPose],
    intrinsics: &[CameraIntrinsics],
    observations: &[Observation],
) -> f64 {
    if observations.is_empty() {
        return 0.0;
    }
    let total: f64 = observations
        .iter()
        .map(|o| (intrinsics[o.view].project(&poses[o.view], &points[o.point]) - o.pixel).norm())
        .sum();
    total / observations.len() as f64
}

/// Camera and point updates of one damped step.
type Step = (Vec<Vector6<f64>>, Vec<Vector3<f64>>);

struct Normal {
    cam: Vec<Matrix6>,
    cam_grad: Vec<Vector6<f64>>,
    pt: Vec<Matrix3<f64>>,
    pt_grad: Vec<Vector3<f64>>,
    /// Camera-point coupling per observation (zero for the fixed camera).
    cross: Vec<Matrix6x3>,
}

fn build_normal(
    points: &[Point3],
    poses: &[CameraPose],
    intrinsics: &[CameraIntrinsics],
    observations: &[Observation],
    delta: f64,
) -> Normal {
    let mut n = Normal {
        cam: vec![Matrix6::zeros(); poses.len()],
        cam_grad: vec![Vector6::zeros(); poses.len()],
        pt: vec![Matrix3::zeros(); points.len()],
        pt_grad: vec![Vector3::zeros(); points.len()],
        cross: Vec::with_capacity(observations.len()),
    };
    for o in observations {
        let (u, jc, jp) =
            observation_jacobian(&poses[o.view], &intrinsics[o.view], &points[o.point]);
        let r: Vector2<f64> = u - o.pixel;
        let w = huber_weight(r.norm(), delta);
        n.pt[o.point] += w * jp.transpose() * jp;
        n.pt_grad[o.point] += w * jp.transpose() * r;
        if o.view == 0 {
            n.cross.push(Matrix6x3::zeros());
            continue;
        }
        n.cam[o.view] += w * jc.transpose() * jc;
        n.cam_grad[o.view] += w * jc.transpose() * r;
        n.cross.push(w * jc.transpose() * jp);
    }
    n
}

impl Normal {
    fn gradient_norm(&self) -> f64 {
        let c: f64 = self.cam_grad.iter().skip(1).map(|g| g.norm_squared()).sum();
        let p: f64 = self.pt_grad.iter().map(|g| g.norm_squared()).sum();
        sqrt(c + p)
    }

    /// Solves the damped system by eliminating the points.
    fn solve(
        &self,
        lambda: f64,
        observations: &[Observation],
        by_point: &[Vec<usize>],
    ) -> Option<Step> {
        let n_cams = self.cam.len();
        let free = n_cams - 1;
        let damp3 = |m: &Matrix3<f64>| {
            let mut d = *m;
            for i in 0..3 {
                d[(i, i)] += lambda * m[(i, i)].max(1e-12);
            }
            d
        };
        let pt_inv: Vec<Matrix3<f64>> = self
            .pt
            .iter()
            .map(|m| damp3(m).try_inverse())
            .collect::<Option<_>>()?;

        let mut s = DMatrix::<f64>::zeros(6 * free, 6 * free);
        let mut b = DVector::<f64>::zeros(6 * free);
        for v in 1..n_cams {
            let mut block = self.cam[v];
            for i in 0..6 {
                block[(i, i)] += lambda * self.cam[v][(i, i)].max(1e-12);
            }
            s.fixed_view_mut::<6, 6>(6 * (v - 1), 6 * (v - 1))
                .copy_from(&block);
            b.fixed_rows_mut::<6>(6 * (v - 1))
                .copy_from(&(-self.cam_grad[v]));
        }
        for (p, obs) in by_point.iter().enumerate() {
            let vinv = &pt_inv[p];
            for &a in obs {
                let va = observations[a].view;
                if va == 0 {
                    continue;
                }
                let wa_vinv = self.cross[a] * vinv;
                let mut rows = b.fixed_rows_mut::<6>(6 * (va - 1));
                rows += wa_vinv * self.pt_grad[p];
                for &c in obs {
                    let vc = observations[c].view;
                    if vc == 0 {
                        continue;
                    }
                    let mut blk = s.fixed_view_mut::<6, 6>(6 * (va - 1), 6 * (vc - 1));
                    blk -= wa_vinv * self.cross[c].transpose();
                }
            }
        }
        let dc = if free == 0 {
            DVector::zeros(0)
        } else {
            s.cholesky()?.solve(&b)
        };
        let mut cam_steps = vec![Vector6::zeros(); n_cams];
        for (v, step) in cam_steps.iter_mut().enumerate().skip(1) {
            *step = dc.fixed_rows::<6>(6 * (v - 1)).into_owned();
        }
        let mut pt_steps = Vec::with_capacity(by_point.len());
        for (p, obs) in by_point.iter().enumerate() {
            let mut rhs = -self.pt_grad[p];
            for &a in obs {
                let va = observations[a].view;
                if va != 0 {
                    rhs -= self.cross[a].transpose() * cam_steps[va];
                }
            }
            pt_steps.push(pt_inv[p] * rhs);
        }
        Some((cam_steps, pt_steps))
    }
}

/// Rescales about the origin so the second camera centre is at unit
/// distance. Leaves every projection unchanged.
fn fix_scale(points: &mut [Point3], poses: &mut [CameraPose]) {
    let d = poses[1].center().norm();
    if !(d > 1e-12 && d.is_finite()) {
        return;
    }
    let s = 1.0 / d;
    for p in points.iter_mut() {
        p.coords *= s;
    }
    for pose in poses.iter_mut() {
        pose.translation *= s;
    }
}

pub fn bundle_adjust(
    points: &[Point3],
    poses: &[CameraPose],
    intrinsics: &[CameraIntrinsics],
    observations: &[Observation],
    config: &BundleConfig,
) -> Result<BundleResult> {
    config.validate()?;
    if poses.len() < 2 {
        return Err(Error::Underconstrained("bundle adjustment needs two poses"));
    }
    if intrinsics.len() != poses.len() {
        return Err(Error::invalid("intrinsics", "one entry per pose required"));
    }
    if poses[0].orthonormality_error() > 1e-9
        || (poses[0].rotation - Matrix3::identity()).abs().max() > 1e-9
        || poses[0].translation.norm() > 1e-9
    {
        return Err(Error::invalid("poses", "first pose must be the identity"));
    }
    let mut by_point = vec![Vec::new(); points.len()];
    for (idx, o) in observations.iter().enumerate() {
        if o.view >= poses.len() || o.point >= points.len() {
            return Err(Error::invalid("observations", "index out of range"));
        }
        by_point[o.point].push(idx);
    }
    for obs in &by_point {
        let mut views: Vec<usize> = obs.iter().map(|&i| observations[i].view).collect();
        views.sort_unstable();
        views.dedup();
        if views.len() < 2 {
            return Err(Error::Underconstrained(
                "point observed in fewer than two views",
            ));
        }
    }

    let delta = config.huber_delta;
    let mut pts = points.to_vec();
    let mut cams = poses.to_vec();
    cams[0] = CameraPose::identity();
    fix_scale(&mut pts, &mut cams);
    let mut cost = robust_cost(&pts, &cams, intrinsics, observations, delta);
    let initial_cost = cost;
    let mut history = vec![cost];
    let floor = 1e-24 * observations.len().max(1) as f64;
    let mut lambda = config.initial_damping;
    let mut iterations = 0;
    let mut converged = false;

    let mut normal = build_normal(&pts, &cams, intrinsics, observations, delta);
    while iterations < config.max_iterations {
        if !cost.is_finite() {
            break;
        }
        let gnorm = normal.gradient_norm();
        if cost <= floor || gnorm <= 1e-12 * (1.0 + cost) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = None;
        for _ in 0..12 {
            let Some((dc, dp)) = normal.solve(lambda, observations, &by_point) else {
                lambda *= 10.0;
                continue;
            };
            let cand_cams: Vec<CameraPose> =
                cams.iter().zip(&dc).map(|(c, d)| c.perturbed(d)).collect();
            let cand_pts: Vec<Point3> = pts.iter().zip(&dp).map(|(p, d)| p + d).collect();
            let c = robust_cost(&cand_pts, &cand_cams, intrinsics, observations, delta);
            if c < cost {
                accepted = Some((cand_pts, cand_cams, c));
                lambda = (lambda * 0.1).max(1e-15);
                break;
            }
            lambda *= 10.0;
        }
        let Some((new_pts, new_cams, new_cost)) = accepted else {
            break;
        };
        let rel = (cost - new_cost) / cost;
        pts = new_pts;
        cams = new_cams;
        fix_scale(&mut pts, &mut cams);
        cost = new_cost;
        history.push(cost);
        normal = build_normal(&pts, &cams, intrinsics, observations, delta);
        if rel < config.convergence_tol {
            converged = true;
            break;
        }
    }
    let gradient_norm = normal.gradient_norm();
    if !converged {
        converged = cost <= floor || gradient_norm <= 1e-8 * (1.0 + cost);
    }
    Ok(BundleResult {
        points: pts,
        poses: cams,
        report: BundleReport {
            initial_cost,
            final_cost: cost,
            iterations,
            converged,
            gradient_norm,
            cost_history: history,
        },
    })
}

/// Observations of every point in every view.
pub fn complete_observations(tracks: &[&[Point2]]) -> Vec<Observation> {
    tracks
        .iter()
        .enumerate()
        .flat_map(|(view, row)| {
            row.iter()
                .enumerate()
                .map(move |(point, &pixel)| Observation { view, point, pixel })
        })
        .collect()
}
