//! Projective-geometry primitives.
//!
//! Poses map world points into the camera frame, `Xc = R X + t`, and
//! intrinsics map camera-frame points to pixels.

use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix2x3, Matrix3, Matrix3x4, Rotation3, SMatrix, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::math::{null_vector, skew, sq, sqrt, svd3, NullVector};

pub type Point2 = nalgebra::Point2<f64>;
pub type Point3 = nalgebra::Point3<f64>;

/// A matched pair `(x, x')` of image points in two frames.
pub type Correspondence = (Point2, Point2);

/// Distance reported when a residual is undefined (point at the epipole,
/// transfer to infinity).
pub const DEFAULT_MAX_DISTANCE: f64 = 1.0e6;

/// Relative threshold on the second-smallest singular value of a DLT design
/// matrix below which a sample is treated as degenerate.
pub const DEGENERACY_RATIO: f64 = 1.0e-8;

const HOMOGRAPHY_DET_EPS: f64 = 1.0e-12;
const COLLINEAR_EPS: f64 = 1.0e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    pub m: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub m: Matrix3<f64>,
}

impl Homography {
    /// Maps `x` through the homography; `None` when the image lies at
    /// infinity.
    pub fn transfer(&self, x: &Point2) -> Option<Point2> {
        let y = self.m * Vector3::new(x.x, x.y, 1.0);
        if y.z.abs() <= f64::EPSILON * y.norm() || y.z == 0.0 {
            return None;
        }
        Some(Point2::new(y.x / y.z, y.y / y.z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self> {
        if !(fx > 0.0 && fx.is_finite()) {
            return Err(Error::invalid("fx", "focal length must be positive"));
        }
        if !(fy > 0.0 && fy.is_finite()) {
            return Err(Error::invalid("fy", "focal length must be positive"));
        }
        if !(cx.is_finite() && cy.is_finite() && skew.is_finite()) {
            return Err(Error::invalid("intrinsics", "non-finite value"));
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            skew,
        })
    }

    pub fn identity() -> Self {
        CameraIntrinsics {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            skew: 0.0,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0,
        )
    }

    /// Pixel to normalized image coordinates (`K^-1 x`).
    pub fn unproject(&self, x: &Point2) -> Point2 {
        let yn = (x.y - self.cy) / self.fy;
        let xn = (x.x - self.cx - self.skew * yn) / self.fx;
        Point2::new(xn, yn)
    }

    /// Camera-frame point to pixel. Points on the principal plane map to
    /// non-finite coordinates.
    pub fn project_camera(&self, pc: &Vector3<f64>) -> Point2 {
        let xn = pc.x / pc.z;
        let yn = pc.y / pc.z;
        Point2::new(
            self.fx * xn + self.skew * yn + self.cx,
            self.fy * yn + self.cy,
        )
    }

    pub fn project(&self, pose: &CameraPose, x: &Point3) -> Point2 {
        self.project_camera(&pose.transform(x))
    }

    /// Derivative of the pixel projection with respect to the camera-frame
    /// point.
    pub fn projection_jacobian(&self, pc: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / pc.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            self.skew * iz,
            -(self.fx * pc.x + self.skew * pc.y) * iz2,
            0.0,
            self.fy * iz,
            -self.fy * pc.y * iz2,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        CameraPose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        CameraPose::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn transform(&self, x: &Point3) -> Vector3<f64> {
        self.rotation * x.coords + self.translation
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn depth(&self, x: &Point3) -> f64 {
        self.transform(x).z
    }

    /// Applies a left-multiplicative update: `R <- exp(w) R`, `t <- t + dt`
    /// with `delta = (w, dt)`.
    pub fn perturbed(&self, delta: &Vector6<f64>) -> CameraPose {
        let w = Vector3::new(delta[0], delta[1], delta[2]);
        let dt = Vector3::new(delta[3], delta[4], delta[5]);
        let r = Rotation3::new(w).into_inner() * self.rotation;
        CameraPose::new(r, self.translation + dt)
    }

    /// Largest deviation of `R^T R` from identity and of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        ortho.max((r.determinant() - 1.0).abs())
    }

    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut p = Matrix3x4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        p.set_column(3, &self.translation);
        p
    }
}

/// Geodesic distance between two rotations in radians.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    let c = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // acos loses precision near zero; use the antisymmetric part there.
    let s = 0.5
        * sqrt(
            sq(rel[(2, 1)] - rel[(1, 2)])
                + sq(rel[(0, 2)] - rel[(2, 0)])
                + sq(rel[(1, 0)] - rel[(0, 1)]),
        );
    libm::atan2(s, c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, x: &Point3) -> Point3 {
        Point3::from(self.scale * (self.rotation * x.coords) + self.translation)
    }

    /// Root-mean-square distance between `T(source)` and `target`.
    pub fn rms_error(&self, source: &[Point3], target: &[Point3]) -> f64 {
        if source.is_empty() {
            return 0.0;
        }
        let sum: f64 = source
            .iter()
            .zip(target)
            .map(|(s, t)| (self.apply(s) - t).norm_squared())
            .sum();
        sqrt(sum / source.len() as f64)
    }
}

fn conditioning(pts: &[Point2]) -> Result<Matrix3<f64>> {
    if pts.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = pts
        .iter()
        .map(|p| sqrt(sq(p.x - cx) + sq(p.y - cy)))
        .sum::<f64>()
        / n;
    let extent = 1.0 + cx.abs().max(cy.abs());
    if !(mean_dist > f64::EPSILON * extent) {
        return Err(Error::DegenerateConfiguration("all points coincide"));
    }
    let s = core::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * cx,
        0.0,
        s,
        -s * cy,
        0.0,
        0.0,
        1.0,
    ))
}

fn apply_conditioning(t: &Matrix3<f64>, p: &Point2) -> Point2 {
    Point2::new(t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

fn conditioning_inverse(t: &Matrix3<f64>) -> Matrix3<f64> {
    let s = t[(0, 0)];
    Matrix3::new(
        1.0 / s,
        0.0,
        -t[(0, 2)] / s,
        0.0,
        1.0 / s,
        -t[(1, 2)] / s,
        0.0,
        0.0,
        1.0,
    )
}

/// Hartley conditioning: translate the centroid to the origin and scale so
/// the mean distance from it is `sqrt(2)`.
pub fn normalize_points(pts: &[Point2]) -> Result<(Vec<Point2>, Matrix3<f64>)> {
    let t = conditioning(pts)?;
    Ok((pts.iter().map(|p| apply_conditioning(&t, p)).collect(), t))
}

/// Reduces an over-determined design to a square one with the same singular
/// values (zero-padding or the R factor of a QR decomposition).
fn square_design<const N: usize>(rows: &[[f64; N]]) -> SMatrix<f64, N, N>
where
    SMatrix<f64, N, N>: NullVector<N>,
{
    let mut out = SMatrix::<f64, N, N>::zeros();
    if rows.len() <= N {
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        return out;
    }
    let a = DMatrix::from_fn(rows.len(), N, |i, j| rows[i][j]);
    let r = a.qr().r();
    for i in 0..N {
        for j in 0..N {
            out[(i, j)] = r[(i, j)];
        }
    }
    out
}

fn unit_frobenius(m: Matrix3<f64>) -> Option<Matrix3<f64>> {
    let n = m.norm();
    if !(n > 0.0) || !n.is_finite() {
        return None;
    }
    Some(m / n)
}

/// Linear (conditioned DLT) fundamental matrix over any number `>= 8` of
/// correspondences, with nearest rank-2 projection. When
/// `reject_degenerate` is set, nearly rank-deficient designs are refused.
pub fn fit_fundamental_linear(
    pairs: &[Correspondence],
    reject_degenerate: bool,
) -> Result<FundamentalMatrix> {
    if pairs.len() < 8 {
        return Err(Error::InsufficientPoints {
            needed: 8,
            got: pairs.len(),
        });
    }
    let left: Vec<Point2> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<Point2> = pairs.iter().map(|p| p.1).collect();
    let t1 = conditioning(&left).map_err(|_| Error::DegenerateSample)?;
    let t2 = conditioning(&right).map_err(|_| Error::DegenerateSample)?;
    let rows: Vec<[f64; 9]> = pairs
        .iter()
        .map(|(x, xp)| {
            let a = apply_conditioning(&t1, x);
            let b = apply_conditioning(&t2, xp);
            [
                b.x * a.x,
                b.x * a.y,
                b.x,
                b.y * a.x,
                b.y * a.y,
                b.y,
                a.x,
                a.y,
                1.0,
            ]
        })
        .collect();
    let (f, sv) = null_vector(square_design(&rows)).ok_or(Error::DegenerateSample)?;
    if reject_degenerate && !(sv[1] > DEGENERACY_RATIO * sv[8]) {
        return Err(Error::DegenerateSample);
    }
    let fn_ = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    let (u, mut s, vt) = svd3(&fn_);
    s[2] = 0.0;
    let rank2 = u * Matrix3::from_diagonal(&s) * vt;
    let m = unit_frobenius(t2.transpose() * rank2 * t1).ok_or(Error::DegenerateSample)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample);
    }
    Ok(FundamentalMatrix { m })
}

/// Linear 8-point fundamental matrix from a minimal sample.
pub fn fit_fundamental_8pt(pairs: &[Correspondence]) -> Result<FundamentalMatrix> {
    if pairs.len() != 8 {
        return Err(Error::invalid(
            "correspondences",
            "the 8-point fit takes exactly 8 pairs",
        ));
    }
    fit_fundamental_linear(pairs, true)
}

fn twice_area(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs()
}

fn has_collinear_triple(p: &[Point2; 4]) -> bool {
    const TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];
    TRIPLES
        .iter()
        .any(|&(i, j, k)| twice_area(&p[i], &p[j], &p[k]) < COLLINEAR_EPS)
}

/// Homography from exactly four correspondences, no three collinear in
/// either image.
pub fn fit_homography_4pt(pairs: &[Correspondence]) -> Result<Homography> {
    if pairs.len() != 4 {
        return Err(Error::invalid(
            "correspondences",
            "the 4-point fit takes exactly 4 pairs",
        ));
    }
    let left: Vec<Point2> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<Point2> = pairs.iter().map(|p| p.1).collect();
    let t1 = conditioning(&left).map_err(|_| Error::DegenerateSample)?;
    let t2 = conditioning(&right).map_err(|_| Error::DegenerateSample)?;
    let a: [Point2; 4] = core::array::from_fn(|i| apply_conditioning(&t1, &left[i]));
    let b: [Point2; 4] = core::array::from_fn(|i| apply_conditioning(&t2, &right[i]));
    if has_collinear_triple(&a) || has_collinear_triple(&b) {
        return Err(Error::DegenerateSample);
    }
    let mut design = SMatrix::<f64, 9, 9>::zeros();
    for i in 0..4 {
        let (x, xp) = (a[i], b[i]);
        let r0 = [
            0.0,
            0.0,
            0.0,
            -x.x,
            -x.y,
            -1.0,
            xp.y * x.x,
            xp.y * x.y,
            xp.y,
        ];
        let r1 = [
            x.x,
            x.y,
            1.0,
            0.0,
            0.0,
            0.0,
            -xp.x * x.x,
            -xp.x * x.y,
            -xp.x,
        ];
        for j in 0..9 {
            design[(2 * i, j)] = r0[j];
            design[(2 * i + 1, j)] = r1[j];
        }
    }
    let (h, sv) = null_vector(design).ok_or(Error::DegenerateSample)?;
    if !(sv[1] > DEGENERACY_RATIO * sv[8]) {
        return Err(Error::DegenerateSample);
    }
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    // Invertibility is judged in conditioned coordinates; pixel-scale
    // matrices have legitimately tiny determinants.
    if !((hn / hn.norm()).determinant().abs() > HOMOGRAPHY_DET_EPS) {
        return Err(Error::DegenerateSample);
    }
    let m = unit_frobenius(conditioning_inverse(&t2) * hn * t1).ok_or(Error::DegenerateSample)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample);
    }
    Ok(Homography { m })
}

fn line_distance(line: &Vector3<f64>, p: &Point2, cap: f64) -> f64 {
    let dir = sqrt(line.x * line.x + line.y * line.y);
    if !(dir > f64::EPSILON * line.norm()) {
        return cap;
    }
    let d = (line.x * p.x + line.y * p.y + line.z).abs() / dir;
    if d.is_finite() {
        d.min(cap)
    } else {
        cap
    }
}

/// Distance from `x_prime` to the epipolar line `F x`, in pixels.
pub fn epipolar_distance(f: &FundamentalMatrix, x: &Point2, x_prime: &Point2) -> f64 {
    epipolar_distance_capped(f, x, x_prime, DEFAULT_MAX_DISTANCE)
}

pub fn epipolar_distance_capped(
    f: &FundamentalMatrix,
    x: &Point2,
    x_prime: &Point2,
    cap: f64,
) -> f64 {
    line_distance(&(f.m * Vector3::new(x.x, x.y, 1.0)), x_prime, cap)
}

/// Larger of the two one-sided epipolar distances.
pub fn symmetric_epipolar_distance(
    f: &FundamentalMatrix,
    x: &Point2,
    x_prime: &Point2,
    cap: f64,
) -> f64 {
    let forward = epipolar_distance_capped(f, x, x_prime, cap);
    let backward = line_distance(
        &(f.m.transpose() * Vector3::new(x_prime.x, x_prime.y, 1.0)),
        x,
        cap,
    );
    forward.max(backward)
}

/// Transfer error `|x' - H x|` in pixels.
pub fn homography_distance(h: &Homography, x: &Point2, x_prime: &Point2) -> f64 {
    homography_distance_capped(h, x, x_prime, DEFAULT_MAX_DISTANCE)
}

pub fn homography_distance_capped(h: &Homography, x: &Point2, x_prime: &Point2, cap: f64) -> f64 {
    match h.transfer(x) {
        Some(y) => {
            let d = (y - x_prime).norm();
            if d.is_finite() {
                d.min(cap)
            } else {
                cap
            }
        }
        None => cap,
    }
}

/// `E = K2^T F K1`, projected onto singular values `(s, s, 0)`.
pub fn essential_from_fundamental(
    f: &FundamentalMatrix,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
) -> Matrix3<f64> {
    let e = k2.matrix().transpose() * f.m * k1.matrix();
    let (u, s, vt) = svd3(&e);
    let sigma = 0.5 * (s[0] + s[1]);
    u * Matrix3::from_diagonal(&Vector3::new(sigma, sigma, 0.0)) * vt
}

/// The four `(R, ±t)` factorizations of an essential matrix, with unit `t`.
pub fn decompose_essential(e: &Matrix3<f64>) -> [CameraPose; 4] {
    let (mut u, _, mut vt) = svd3(e);
    if u.determinant() < 0.0 {
        u = -u;
    }
    if vt.determinant() < 0.0 {
        vt = -vt;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * vt;
    let r2 = u * w.transpose() * vt;
    let t: Vector3<f64> = u.column(2).into_owned();
    [
        CameraPose::new(r1, t),
        CameraPose::new(r1, -t),
        CameraPose::new(r2, t),
        CameraPose::new(r2, -t),
    ]
}

/// Homogeneous DLT triangulation from two views.
pub fn triangulate(
    pose1: &CameraPose,
    pose2: &CameraPose,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
    x1: &Point2,
    x2: &Point2,
) -> Result<Point3> {
    let (c1, c2) = (pose1.center(), pose2.center());
    let baseline = (c1 - c2).norm();
    if !(baseline > 1e-12 * (1.0 + c1.norm() + c2.norm())) {
        return Err(Error::ZeroParallax);
    }
    let mut design = SMatrix::<f64, 4, 4>::zeros();
    for (row, (pose, k, x)) in [(pose1, k1, x1), (pose2, k2, x2)].into_iter().enumerate() {
        let n = k.unproject(x);
        let p = pose.projection_matrix();
        for j in 0..4 {
            design[(2 * row, j)] = n.x * p[(2, j)] - p[(0, j)];
            design[(2 * row + 1, j)] = n.y * p[(2, j)] - p[(1, j)];
        }
    }
    let (v, _) = null_vector(design).ok_or(Error::DegenerateConfiguration("triangulation"))?;
    if !(v[3].abs() > 1e-14 * v.norm()) {
        return Err(Error::DegenerateConfiguration("point at infinity"));
    }
    Ok(Point3::new(v[0] / v[3], v[1] / v[3], v[2] / v[3]))
}

/// Number of correspondences triangulating in front of both cameras.
pub fn cheirality_count(
    pose1: &CameraPose,
    pose2: &CameraPose,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
    pairs: &[Correspondence],
) -> usize {
    pairs
        .iter()
        .filter(|(x1, x2)| match triangulate(pose1, pose2, k1, k2, x1, x2) {
            Ok(p) => pose1.depth(&p) > 0.0 && pose2.depth(&p) > 0.0,
            Err(_) => false,
        })
        .count()
}

/// Relative pose of the second camera with the first at identity, chosen
/// among the four essential decompositions by cheirality.
///
/// Fails with [`Error::ZeroParallax`] when the correspondences are
/// explained by a homography (no recoverable depth).
pub fn relative_pose(
    pairs: &[Correspondence],
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
) -> Result<(CameraPose, usize)> {
    let f = fit_fundamental_linear(pairs, true).map_err(|e| match e {
        Error::DegenerateSample => Error::ZeroParallax,
        other => other,
    })?;
    let e = essential_from_fundamental(&f, k1, k2);
    let first = CameraPose::identity();
    let mut counts: Vec<(usize, CameraPose)> = decompose_essential(&e)
        .iter()
        .map(|c| (cheirality_count(&first, c, k1, k2, pairs), *c))
        .collect();
    counts.sort_by_key(|c| core::cmp::Reverse(c.0));
    if counts[0].0 == 0 || counts[0].0 == counts[1].0 {
        return Err(Error::DegenerateConfiguration("cheirality ambiguity"));
    }
    Ok((counts[0].1, counts[0].0))
}

fn reprojection_cost(
    pose: &CameraPose,
    points3: &[Point3],
    points2: &[Point2],
    k: &CameraIntrinsics,
) -> f64 {
    points3
        .iter()
        .zip(points2)
        .map(|(x, u)| (k.project(pose, x) - u).norm_squared())
        .sum()
}

/// Levenberg-Marquardt refinement of a single pose against fixed 3D points.
pub fn refine_pose(
    pose: &CameraPose,
    points3: &[Point3],
    points2: &[Point2],
    k: &CameraIntrinsics,
    max_iterations: usize,
) -> CameraPose {
    let mut current = *pose;
    let mut cost = reprojection_cost(&current, points3, points2, k);
    let mut lambda = 1e-3;
    for _ in 0..max_iterations {
        if !(cost > 1e-28 * points3.len() as f64) {
            break;
        }
        let mut jtj = SMatrix::<f64, 6, 6>::zeros();
        let mut jtr = Vector6::zeros();
        for (x, u) in points3.iter().zip(points2) {
            let rx = current.rotation * x.coords;
            let pc = rx + current.translation;
            let r = k.project_camera(&pc) - u;
            let dp = k.projection_jacobian(&pc);
            let mut dxc = SMatrix::<f64, 3, 6>::zeros();
            dxc.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&rx)));
            dxc.fixed_view_mut::<3, 3>(0, 3)
                .copy_from(&Matrix3::identity());
            let j = dp * dxc;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut a = jtj;
            for i in 0..6 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-jtr));
            let candidate = current.perturbed(&step);
            let c = reprojection_cost(&candidate, points3, points2, k);
            if c < cost {
                let rel = (cost - c) / cost;
                current = candidate;
                cost = c;
                lambda = (lambda * 0.1).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    current
}

/// Linear DLT pose from at least six non-coplanar 2D-3D pairs, followed by
/// rotation orthonormalization and reprojection refinement.
pub fn pnp(points3: &[Point3], points2: &[Point2], k: &CameraIntrinsics) -> Result<CameraPose> {
    if points3.len() != points2.len() {
        return Err(Error::invalid("points", "2D and 3D point counts differ"));
    }
    let n = points3.len();
    if n < 6 {
        return Err(Error::Underconstrained("PnP needs at least 6 points"));
    }
    let nf = n as f64;
    let centroid = points3.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / nf;
    let mean_dist = points3
        .iter()
        .map(|p| (p.coords - centroid).norm())
        .sum::<f64>()
        / nf;
    if !(mean_dist > 0.0) {
        return Err(Error::Underconstrained("3D points coincide"));
    }
    let s3 = sqrt(3.0) / mean_dist;
    let rows: Vec<[f64; 12]> = points3
        .iter()
        .zip(points2)
        .flat_map(|(x, u)| {
            let c = (x.coords - centroid) * s3;
            let h = [c.x, c.y, c.z, 1.0];
            let un = k.unproject(u);
            let mut r0 = [0.0; 12];
            let mut r1 = [0.0; 12];
            for j in 0..4 {
                r0[j] = h[j];
                r0[8 + j] = -un.x * h[j];
                r1[4 + j] = h[j];
                r1[8 + j] = -un.y * h[j];
            }
            [r0, r1]
        })
        .collect();
    let (p, sv) = null_vector(square_design(&rows))
        .ok_or(Error::Underconstrained("PnP design decomposition failed"))?;
    if !(sv[1] > DEGENERACY_RATIO * sv[11]) {
        return Err(Error::Underconstrained("coplanar or degenerate point set"));
    }
    let pc = Matrix3x4::from_row_slice(p.as_slice());
    let mut cond = nalgebra::Matrix4::<f64>::identity() * s3;
    cond[(3, 3)] = 1.0;
    for i in 0..3 {
        cond[(i, 3)] = -s3 * centroid[i];
    }
    let mut pw = pc * cond;
    if pw.fixed_view::<3, 3>(0, 0).determinant() < 0.0 {
        pw = -pw;
    }
    let m: Matrix3<f64> = pw.fixed_view::<3, 3>(0, 0).into_owned();
    let (u, s, vt) = svd3(&m);
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        r = -r;
    }
    let scale = (s[0] + s[1] + s[2]) / 3.0;
    if !(scale > 0.0) {
        return Err(Error::Underconstrained("degenerate projection"));
    }
    let t: Vector3<f64> = pw.column(3).into_owned() / scale;
    let initial = CameraPose::new(r, t);
    Ok(refine_pose(&initial, points3, points2, k, 50))
}

/// Least-squares similarity `target ≈ s R source + t` (Umeyama).
pub fn procrustes_similarity(source: &[Point3], target: &[Point3]) -> Result<SimilarityTransform> {
    if source.len() != target.len() {
        return Err(Error::invalid("points", "source and target lengths differ"));
    }
    if source.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: source.len(),
        });
    }
    let n = source.len() as f64;
    let mu_x = source.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mu_y = target.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in source.iter().zip(target) {
        let dx = x.coords - mu_x;
        let dy = y.coords - mu_y;
        cov += dy * dx.transpose();
        scatter += dx * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov /= n;
    var_x /= n;
    let (_, spread, _) = svd3(&scatter);
    if !(spread[0] > 0.0) || !(spread[1] > 1e-12 * spread[0]) {
        return Err(Error::DegenerateConfiguration(
            "source points are collinear",
        ));
    }
    let (u, d, vt) = svd3(&cov);
    let sign = if u.determinant() * vt.determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let s_mat = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    let rotation = u * s_mat * vt;
    let scale = (d[0] + d[1] + sign * d[2]) / var_x;
    let translation = mu_y - scale * (rotation * mu_x);
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalize_symmetric_square() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 2.0),
            Point2::new(2.0, 2.0),
        ];
        let (out, t) = normalize_points(&pts).unwrap();
        let c = out.iter().fold((0.0, 0.0), |a, p| (a.0 + p.x, a.1 + p.y));
        assert_relative_eq!(c.0, 0.0, epsilon = 1e-15);
        assert_relative_eq!(c.1, 0.0, epsilon = 1e-15);
        for p in &out {
            assert_relative_eq!(p.coords.norm(), 2f64.sqrt(), epsilon = 1e-15);
        }
        assert_relative_eq!(t[(0, 2)], -t[(0, 0)], epsilon = 1e-15);
    }

    #[test]
    fn normalize_already_normalized_is_identity() {
        let pts = [
            Point2::new(1.0, 1.0),
            Point2::new(-1.0, 1.0),
            Point2::new(-1.0, -1.0),
            Point2::new(1.0, -1.0),
        ];
        let (_, t) = normalize_points(&pts).unwrap();
        assert_relative_eq!(t, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn normalize_transform_reproduces_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point2> = (0..8)
            .map(|_| Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)))
            .collect();
        let (out, t) = normalize_points(&pts).unwrap();
        for (p, q) in pts.iter().zip(&out) {
            let h = t * Vector3::new(p.x, p.y, 1.0);
            assert!((h.x / h.z - q.x).abs() < 1e-12);
            assert!((h.y / h.z - q.y).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_coincident() {
        let pts = [Point2::new(3.0, 4.0); 5];
        assert!(matches!(
            normalize_points(&pts),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn pure_translation_fundamental_is_skew() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = CameraIntrinsics::identity();
        let p1 = CameraPose::identity();
        let p2 = CameraPose::new(Matrix3::identity(), Vector3::new(1.0, 0.0, 0.0));
        let pts = random_points(&mut rng, 8, 4.0, 8.0);
        let pairs = project_pairs(&pts, &p1, &p2, &k, &k);
        let f = fit_fundamental_8pt(&pairs).unwrap();
        let expected = skew(&Vector3::new(1.0, 0.0, 0.0)) / 2f64.sqrt();
        let err = (f.m - expected).norm().min((f.m + expected).norm());
        assert!(err < 1e-9, "err {err}");
        for (x, xp) in &pairs {
            let r = Vector3::new(xp.x, xp.y, 1.0).dot(&(f.m * Vector3::new(x.x, x.y, 1.0)));
            assert!(r.abs() < 1e-9);
        }
    }

    #[test]
    fn coincident_points_are_degenerate_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (k, p1, p2) = random_rig(&mut rng);
        let mut pts = random_points(&mut rng, 8, -1.0, 1.0);
        for i in 1..4 {
            pts[i] = pts[0];
        }
        let pairs = project_pairs(&pts, &p1, &p2, &k, &k);
        assert_eq!(fit_fundamental_8pt(&pairs), Err(Error::DegenerateSample));
    }

    #[test]
    fn fundamental_explains_held_out_points() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (k, p1, p2) = random_rig(&mut rng);
            let pts = random_points(&mut rng, 30, -1.0, 1.0);
            let pairs = project_pairs(&pts, &p1, &p2, &k, &k);
            let f = fit_fundamental_8pt(&pairs[..8]).unwrap();
            for (x, xp) in &pairs[8..] {
                assert!(epipolar_distance(&f, x, xp) < 1e-8);
            }
            let (_, s, _) = svd3(&f.m);
            assert!(s[2] < 1e-12 * s[0]);
            assert_relative_eq!(f.m.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fundamental_invariant_to_preconditioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (k, p1, p2) = random_rig(&mut rng);
        let pts = random_points(&mut rng, 8, -1.0, 1.0);
        let pairs = project_pairs(&pts, &p1, &p2, &k, &k);
        let raw = fit_fundamental_8pt(&pairs).unwrap();
        let left: Vec<Point2> = pairs.iter().map(|p| p.0).collect();
        let right: Vec<Point2> = pairs.iter().map(|p| p.1).collect();
        let (ln, t1) = normalize_points(&left).unwrap();
        let (rn, t2) = normalize_points(&right).unwrap();
        let pre: Vec<Correspondence> = ln.into_iter().zip(rn).collect();
        let fitted = fit_fundamental_8pt(&pre).unwrap();
        let mapped = t2.transpose() * fitted.m * t1;
        let mapped = mapped / mapped.norm();
        let err = (mapped - raw.m).norm().min((mapped + raw.m).norm());
        assert!(err < 1e-9, "err {err}");
    }

    fn square_pairs(map: impl Fn(Point2) -> Point2) -> Vec<Correspondence> {
        [(0.0, 0.0), (100.0, 0.0), (100.0, 80.0), (0.0, 80.0)]
            .iter()
            .map(|&(x, y)| {
                let p = Point2::new(x, y);
                (p, map(p))
            })
            .collect()
    }

    #[test]
    fn homography_identity() {
        let h = fit_homography_4pt(&square_pairs(|p| p)).unwrap();
        let expected = Matrix3::identity() / 3f64.sqrt();
        let err = (h.m - expected).norm().min((h.m + expected).norm());
        assert!(err < 1e-12);
    }

    #[test]
    fn homography_translation() {
        let pairs = square_pairs(|p| Point2::new(p.x + 7.0, p.y - 3.0));
        let h = fit_homography_4pt(&pairs).unwrap();
        let m = h.m / h.m[(2, 2)];
        assert_relative_eq!(m[(0, 2)], 7.0, epsilon = 1e-9);
        assert_relative_eq!(m[(1, 2)], -3.0, epsilon = 1e-9);
        for (x, xp) in &pairs {
            assert!(homography_distance(&h, x, xp) < 1e-9);
        }
        let q = Point2::new(33.0, 21.0);
        assert!(homography_distance(&h, &q, &Point2::new(40.0, 18.0)) < 1e-9);
    }

    #[test]
    fn homography_collinear_rejected() {
        let pairs: Vec<Correspondence> = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 5.0)]
            .iter()
            .map(|&(x, y)| (Point2::new(x, y), Point2::new(x + 1.0, y)))
            .collect();
        assert_eq!(fit_homography_4pt(&pairs), Err(Error::DegenerateSample));
    }

    #[test]
    fn homography_from_plane_transfers_held_out_points() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (k, p1, p2) = random_rig(&mut rng);
            let pts = random_plane_points(&mut rng, 20);
            let pairs = project_pairs(&pts, &p1, &p2, &k, &k);
            // Random draws can be nearly collinear; take the first usable quadruple.
            let h = pairs
                .chunks(4)
                .find_map(|c| fit_homography_4pt(c).ok())
                .unwrap();
            for (x, xp) in &pairs {
                assert!(homography_distance(&h, x, xp) < 1e-8);
            }
        }
    }

    #[test]
    fn epipolar_distance_examples() {
        let f = FundamentalMatrix {
            m: skew(&Vector3::new(1.0, 0.0, 0.0)),
        };
        // Lines are horizontal through the matching row.
        let x = Point2::new(3.0, 5.0);
        assert_eq!(epipolar_distance(&f, &x, &Point2::new(-40.0, 5.0)), 0.0);
        assert_relative_eq!(
            epipolar_distance(&f, &x, &Point2::new(10.0, 7.5)),
            2.5,
            epsilon = 1e-12
        );

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (k, p1, p2) = random_rig(&mut rng);
        let pts = random_points(&mut rng, 8, -1.0, 1.0);
        let pairs = project_pairs(&pts, &p1, &p2, &k, &k);
        let f = fit_fundamental_8pt(&pairs).unwrap();
        let (x, xp) = pairs[0];
        let l = f.m * Vector3::new(x.x, x.y, 1.0);
        let nrm = Vector3::new(l.x, l.y, 0.0).normalize();
        let moved = Point2::new(xp.x + 2.0 * nrm.x, xp.y + 2.0 * nrm.y);
        assert_relative_eq!(epipolar_distance(&f, &x, &moved), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn epipolar_distance_at_epipole_is_capped() {
        let f = FundamentalMatrix {
            m: skew(&Vector3::new(0.0, 0.0, 1.0)),
        };
        // F e = 0 for e = (0, 0, 1): the line through the epipole vanishes.
        let d = epipolar_distance(&f, &Point2::new(0.0, 0.0), &Point2::new(1.0, 1.0));
        assert_eq!(d, DEFAULT_MAX_DISTANCE);
    }

    #[test]
    fn symmetric_distance_dominates_one_sided() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (k, p1, p2) = random_rig(&mut rng);
        let pts = random_points(&mut rng, 8, -1.0, 1.0);
        let pairs = project_pairs(&pts, &p1, &p2, &k, &k);
        let f = fit_fundamental_8pt(&pairs).unwrap();
        let x = Point2::new(100.0, 200.0);
        let xp = Point2::new(300.0, 50.0);
        assert!(
            symmetric_epipolar_distance(&f, &x, &xp, DEFAULT_MAX_DISTANCE)
                >= epipolar_distance(&f, &x, &xp)
        );
    }

    #[test]
    fn homography_distance_examples() {
        let id = Homography {
            m: Matrix3::identity(),
        };
        let x = Point2::new(12.0, -4.0);
        assert_eq!(homography_distance(&id, &x, &x), 0.0);
        let tr = Homography {
            m: Matrix3::new(1.0, 0.0, 3.0, 0.0, 1.0, 4.0, 0.0, 0.0, 1.0),
        };
        assert_relative_eq!(homography_distance(&tr, &x, &x), 5.0, epsilon = 1e-12);

        let proj = Homography {
            m: Matrix3::new(1.1, 0.05, 3.0, -0.02, 0.9, 4.0, 1e-4, 2e-4, 1.0),
        };
        let y = proj.transfer(&x).unwrap();
        let xp = Point2::new(y.x, y.y + 1.5);
        assert_relative_eq!(homography_distance(&proj, &x, &xp), 1.5, epsilon = 1e-9);

        let at_infinity = Homography {
            m: Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0),
        };
        assert_eq!(
            homography_distance(&at_infinity, &Point2::new(0.0, 3.0), &x),
            DEFAULT_MAX_DISTANCE
        );
    }

    #[test]
    fn essential_identity_intrinsics_is_rank_projected_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (_, p1, p2) = random_rig(&mut rng);
        let k = CameraIntrinsics::identity();
        let pts = random_points(&mut rng, 8, -1.0, 1.0);
        let pairs = project_pairs(&pts, &p1, &p2, &k, &k);
        let f = fit_fundamental_8pt(&pairs).unwrap();
        let e = essential_from_fundamental(&f, &k, &k);
        let (_, s, _) = svd3(&e);
        assert_relative_eq!(s[0], s[1], epsilon = 1e-12);
        assert!(s[2] < 1e-12);
        // Noiseless essential matrices already have equal singular values.
        let en = e / e.norm();
        assert!((en - f.m).norm().min((en + f.m).norm()) < 1e-9);
    }

    #[test]
    fn essential_matches_ground_truth() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let (k, p1, p2) = relative_rig(&mut rng);
            let pts = random_points_in_front(&mut rng, 12);
            let pairs = project_pairs(&pts, &p1, &p2, &k, &k);
            let f = fit_fundamental_linear(&pairs, true).unwrap();
            let e = essential_from_fundamental(&f, &k, &k);
            let truth = skew(&p2.translation) * p2.rotation;
            let (a, b) = (e / e.norm(), truth / truth.norm());
            assert!((a - b).norm().min((a + b).norm()) < 1e-6);
            let (_, s, _) = svd3(&e);
            assert_relative_eq!(s[0], s[1], epsilon = 1e-12 * s[0]);
            assert!(s[2] < 1e-12 * s[0]);
        }
    }

    fn candidate_matches(c: &CameraPose, r: &Matrix3<f64>, t: &Vector3<f64>) -> bool {
        rotation_angle_between(&c.rotation, r) < 1e-6
            && (c.translation - t.normalize()).norm() < 1e-6
    }

    #[test]
    fn decompose_contains_truth() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let (_, _, p2) = random_rig(&mut rng);
            let e = skew(&p2.translation) * p2.rotation;
            let cands = decompose_essential(&e);
            assert!(cands
                .iter()
                .any(|c| candidate_matches(c, &p2.rotation, &p2.translation)));
            for c in &cands {
                assert!((c.rotation.determinant() - 1.0).abs() < 1e-9);
                assert!(c.orthonormality_error() < 1e-9);
            }
            let flipped = decompose_essential(&(-e));
            for c in &cands {
                assert!(flipped
                    .iter()
                    .any(|d| rotation_angle_between(&c.rotation, &d.rotation) < 1e-9
                        && (c.translation - d.translation).norm() < 1e-9));
            }
        }
    }

    #[test]
    fn triangulation_recovers_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (k, p1, p2) = random_rig(&mut rng);
        for p in random_points(&mut rng, 20, -1.0, 1.0) {
            let x1 = k.project(&p1, &p);
            let x2 = k.project(&p2, &p);
            let q = triangulate(&p1, &p2, &k, &k, &x1, &x2).unwrap();
            assert!((q - p).norm() < 1e-8);
        }
        assert_eq!(
            triangulate(
                &p1,
                &p1,
                &k,
                &k,
                &Point2::new(1.0, 2.0),
                &Point2::new(3.0, 2.0)
            ),
            Err(Error::ZeroParallax)
        );
    }

    #[test]
    fn triangulation_behind_cameras_still_returns_point() {
        let k = CameraIntrinsics::identity();
        let p1 = CameraPose::identity();
        let p2 = CameraPose::new(Matrix3::identity(), Vector3::new(-1.0, 0.0, 0.0));
        let p = Point3::new(0.2, 0.1, -5.0);
        let q = triangulate(&p1, &p2, &k, &k, &k.project(&p1, &p), &k.project(&p2, &p)).unwrap();
        assert!((q - p).norm() < 1e-9);
        assert!(p1.depth(&q) < 0.0);
    }

    #[test]
    fn cheirality_selects_truth() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let (k, p1, p2) = relative_rig(&mut rng);
            let pts = random_points_in_front(&mut rng, 15);
            let pairs = project_pairs(&pts, &p1, &p2, &k, &k);
            let unit = CameraPose::new(p2.rotation, p2.translation.normalize());
            assert_eq!(cheirality_count(&p1, &unit, &k, &k, &pairs), 15);
            let mirrored = CameraPose::new(p2.rotation, -p2.translation.normalize());
            assert!(cheirality_count(&p1, &mirrored, &k, &k, &pairs) <= 1);
            assert_eq!(cheirality_count(&p1, &unit, &k, &k, &[]), 0);

            let (best, count) = relative_pose(&pairs, &k, &k).unwrap();
            assert_eq!(count, 15);
            assert!(rotation_angle_between(&best.rotation, &p2.rotation) < 1e-6);
        }
    }

    #[test]
    fn pnp_recovers_pose() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let (k, _, p2) = random_rig(&mut rng);
            let pts = random_points(&mut rng, 12, -1.0, 1.0);
            let obs: Vec<Point2> = pts.iter().map(|p| k.project(&p2, p)).collect();
            let pose = pnp(&pts, &obs, &k).unwrap();
            assert!(rotation_angle_between(&pose.rotation, &p2.rotation) < 1e-6);
            assert!((pose.translation - p2.translation).norm() < 1e-6 * p2.translation.norm());
            assert!(pose.orthonormality_error() < 1e-9);
        }
    }

    #[test]
    fn pnp_identity_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(600);
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 0.0).unwrap();
        let id = CameraPose::identity();
        let pts = random_points_in_front(&mut rng, 10);
        let obs: Vec<Point2> = pts.iter().map(|p| k.project(&id, p)).collect();
        let pose = pnp(&pts, &obs, &k).unwrap();
        assert!((pose.rotation - Matrix3::identity()).norm() < 1e-6);
        assert!(pose.translation.norm() < 1e-6);
    }

    #[test]
    fn pnp_underconstrained() {
        let mut rng = ChaCha8Rng::seed_from_u64(601);
        let (k, _, p2) = random_rig(&mut rng);
        let pts = random_points(&mut rng, 5, -1.0, 1.0);
        let obs: Vec<Point2> = pts.iter().map(|p| k.project(&p2, p)).collect();
        assert!(matches!(
            pnp(&pts, &obs, &k),
            Err(Error::Underconstrained(_))
        ));

        let plane = random_plane_points(&mut rng, 10);
        let obs: Vec<Point2> = plane.iter().map(|p| k.project(&p2, p)).collect();
        assert!(matches!(
            pnp(&plane, &obs, &k),
            Err(Error::Underconstrained(_))
        ));
    }

    #[test]
    fn procrustes_exact_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(700);
        let src = random_points(&mut rng, 10, -1.0, 1.0);
        let r = random_rotation(&mut rng);
        let t = Vector3::new(1.0, -2.0, 0.5);
        let dst: Vec<Point3> = src
            .iter()
            .map(|p| Point3::from(2.0 * (r * p.coords) + t))
            .collect();
        let sim = procrustes_similarity(&src, &dst).unwrap();
        assert_relative_eq!(sim.scale, 2.0, epsilon = 1e-9);
        assert!((sim.rotation - r).norm() < 1e-9);
        assert!((sim.translation - t).norm() < 1e-9);

        let same = procrustes_similarity(&src, &src).unwrap();
        assert_relative_eq!(same.scale, 1.0, epsilon = 1e-12);
        assert!((same.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(same.translation.norm() < 1e-12);
    }

    #[test]
    fn procrustes_rejects_collinear() {
        let src: Vec<Point3> = (0..5)
            .map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0))
            .collect();
        assert!(matches!(
            procrustes_similarity(&src, &src),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    /// Independent route: Kabsch rotation on centered clouds, with the
    /// scale found by golden-section search on the residual.
    fn kabsch_golden_residual(src: &[Point3], dst: &[Point3]) -> f64 {
        let n = src.len() as f64;
        let ms = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
        let md = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
        let mut h = Matrix3::zeros();
        for (s, d) in src.iter().zip(dst) {
            h += (s.coords - ms) * (d.coords - md).transpose();
        }
        let svd = h.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let d = (vt.transpose() * u.transpose()).determinant().signum();
        let r = vt.transpose() * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
        let resid = |s: f64| -> f64 {
            src.iter()
                .zip(dst)
                .map(|(a, b)| (s * (r * (a.coords - ms)) - (b.coords - md)).norm_squared())
                .sum()
        };
        let (mut lo, mut hi) = (1e-6, 100.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if resid(a) < resid(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        resid(0.5 * (lo + hi))
    }

    #[test]
    fn procrustes_matches_independent_oracle() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
            let src = random_points(&mut rng, 15, -1.0, 1.0);
            let dst = random_points(&mut rng, 15, -3.0, 3.0);
            let sim = procrustes_similarity(&src, &dst).unwrap();
            let ours: f64 = src
                .iter()
                .zip(&dst)
                .map(|(a, b)| (sim.apply(a) - b).norm_squared())
                .sum();
            let oracle = kabsch_golden_residual(&src, &dst);
            assert!((ours - oracle).abs() < 1e-6, "{ours} vs {oracle}");
        }
    }

    #[test]
    fn perturbed_keeps_rotation_proper() {
        let p = CameraPose::identity().perturbed(&Vector6::new(0.3, -0.2, 0.1, 1.0, 2.0, 3.0));
        assert!(p.orthonormality_error() < 1e-12);
        assert_eq!(p.translation, Vector3::new(1.0, 2.0, 3.0));
    }
}
