//! Test-only scene helpers.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;

use crate::geometry::{CameraIntrinsics, CameraPose, Correspondence, Point3};

pub fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 0.0).unwrap()
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    Rotation3::new(axis.normalize() * rng.random_range(0.1..3.0)).into_inner()
}

pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, roll: f64) -> CameraPose {
    let z = (target - eye).normalize();
    let up = if z.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    let base = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), roll).into_inner() * base;
    CameraPose::new(r, -(r * eye))
}

fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Two cameras looking at the origin from distance ~5 with at least 20°
/// between viewing directions.
pub fn random_rig<R: Rng>(rng: &mut R) -> (CameraIntrinsics, CameraPose, CameraPose) {
    let d1 = random_unit(rng);
    let d2 = loop {
        let d = random_unit(rng);
        let angle = d.dot(&d1).clamp(-1.0, 1.0).acos();
        if angle > 20f64.to_radians() && angle < 70f64.to_radians() {
            break d;
        }
    };
    let p1 = look_at(
        d1 * rng.random_range(4.5..6.0),
        Vector3::zeros(),
        rng.random_range(-0.5..0.5),
    );
    let p2 = look_at(
        d2 * rng.random_range(4.5..6.0),
        Vector3::zeros(),
        rng.random_range(-0.5..0.5),
    );
    (intrinsics(), p1, p2)
}

/// First camera at identity, second looking at (0, 0, 6) from a rotated
/// vantage point.
pub fn relative_rig<R: Rng>(rng: &mut R) -> (CameraIntrinsics, CameraPose, CameraPose) {
    let target = Vector3::new(0.0, 0.0, 6.0);
    let axis = Vector3::new(
        rng.random_range(-0.3..0.3),
        1.0,
        rng.random_range(-0.3..0.3),
    )
    .normalize();
    let angle = rng.random_range(0.3..0.7);
    let offset = Rotation3::new(axis * angle) * Vector3::new(0.0, 0.0, -6.0);
    let p2 = look_at(target + offset, target, rng.random_range(-0.3..0.3));
    (intrinsics(), CameraPose::identity(), p2)
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(lo..hi),
                rng.random_range(lo..hi),
                rng.random_range(lo..hi),
            )
        })
        .collect()
}

pub fn random_points_in_front<R: Rng>(rng: &mut R, n: usize) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(4.5..7.5),
            )
        })
        .collect()
}

pub fn random_plane_points<R: Rng>(rng: &mut R, n: usize) -> Vec<Point3> {
    let normal = random_unit(rng);
    let a = normal.cross(&Vector3::new(0.3, 0.5, 0.8)).normalize();
    let b = normal.cross(&a);
    (0..n)
        .map(|_| Point3::from(a * rng.random_range(-1.0..1.0) + b * rng.random_range(-1.0..1.0)))
        .collect()
}

pub fn project_pairs(
    pts: &[Point3],
    p1: &CameraPose,
    p2: &CameraPose,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
) -> Vec<Correspondence> {
    pts.iter()
        .map(|p| (k1.project(p1, p), k2.project(p2, p)))
        .collect()
}
