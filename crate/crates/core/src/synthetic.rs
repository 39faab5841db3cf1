//! Ground-truth scenes with rigid, periodic and recurrent deformation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::affinity::TrackSet;
use crate::error::{Error, Result};
use crate::geometry::{procrustes_similarity, CameraIntrinsics, CameraPose, Point2, Point3};
use crate::math::derive_seed;
use crate::rigidity::CorrespondenceSet;

const SHAPE_STREAM: u64 = 1;
const CAMERA_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Rigid,
    Periodic {
        period: usize,
    },
    /// Explicit state id per frame.
    Recurrent {
        states: Vec<usize>,
    },
    /// Every frame has its own shape.
    Nonrecurrent,
}

impl Schedule {
    pub fn states(&self, n_frames: usize) -> Result<Vec<usize>> {
        match self {
            Schedule::Rigid => Ok(vec![0; n_frames]),
            Schedule::Periodic { period } => {
                if *period < 2 || *period > n_frames {
                    return Err(Error::invalid(
                        "period",
                        alloc::format!("must be in [2, {n_frames}], got {period}"),
                    ));
                }
                Ok((0..n_frames).map(|f| f % period).collect())
            }
            Schedule::Recurrent { states } => {
                if states.len() != n_frames {
                    return Err(Error::invalid(
                        "states",
                        alloc::format!("expected {n_frames} state ids, got {}", states.len()),
                    ));
                }
                let count = states.iter().max().map_or(0, |m| m + 1);
                let mut seen = vec![false; count];
                for &s in states {
                    seen[s] = true;
                }
                if let Some(missing) = seen.iter().position(|&x| !x) {
                    return Err(Error::invalid(
                        "states",
                        alloc::format!("state id {missing} never occurs"),
                    ));
                }
                Ok(states.clone())
            }
            Schedule::Nonrecurrent => Ok((0..n_frames).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeModel {
    /// Random points in a cube; each state displaces every point by an
    /// independent Gaussian offset of the given standard deviation.
    RandomBlob { deformation: f64 },
    /// Chain of equal segments with points scattered around them. Each state
    /// has its own joint bend angles (radians); missing states are random.
    ArticulatedChain {
        segments: usize,
        joint_angles: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CameraPath {
    /// Independent viewing directions, looking at the object centre.
    RandomSphere { radius_min: f64, radius_max: f64 },
    /// Evenly spaced azimuths at a fixed elevation (degrees).
    Orbit { radius: f64, elevation_deg: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub n_frames: usize,
    pub n_points: usize,
    pub schedule: Schedule,
    pub shape_model: ShapeModel,
    pub camera_path: CameraPath,
    pub intrinsics: CameraIntrinsics,
    pub image_size: (f64, f64),
    pub noise_sigma: f64,
    pub rng_seed: u64,
    /// Minimum angle between viewing directions of same-state frames.
    pub parallax_floor_deg: f64,
    /// Minimum aligned RMS distance between states, as a fraction of the
    /// scene diameter.
    pub state_separation: f64,
    pub max_retries: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_frames: 12,
            n_points: 20,
            schedule: Schedule::Rigid,
            shape_model: ShapeModel::RandomBlob { deformation: 0.3 },
            camera_path: CameraPath::RandomSphere {
                radius_min: 4.0,
                radius_max: 6.0,
            },
            intrinsics: CameraIntrinsics {
                fx: 500.0,
                fy: 500.0,
                cx: 320.0,
                cy: 240.0,
                skew: 0.0,
            },
            image_size: (640.0, 480.0),
            noise_sigma: 0.0,
            rng_seed: 0,
            parallax_floor_deg: 15.0,
            state_separation: 0.1,
            max_retries: 1000,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 2 {
            return Err(Error::invalid("n_frames", "need at least 2 frames"));
        }
        if self.n_points < 8 {
            return Err(Error::InsufficientPoints {
                needed: 8,
                got: self.n_points,
            });
        }
        self.schedule.states(self.n_frames)?;
        match &self.shape_model {
            ShapeModel::RandomBlob { deformation } => {
                if !(*deformation >= 0.0 && deformation.is_finite()) {
                    return Err(Error::invalid("deformation", "must be non-negative"));
                }
            }
            ShapeModel::ArticulatedChain { segments, .. } => {
                if *segments < 2 {
                    return Err(Error::invalid("segments", "need at least 2 segments"));
                }
            }
        }
        match self.camera_path {
            CameraPath::RandomSphere {
                radius_min,
                radius_max,
            } => {
                if !(radius_min > 0.0 && radius_max >= radius_min && radius_max.is_finite()) {
                    return Err(Error::invalid(
                        "radius",
                        "need 0 < radius_min <= radius_max",
                    ));
                }
            }
            CameraPath::Orbit { radius, .. } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::invalid("radius", "must be positive"));
                }
            }
        }
        if !(self.image_size.0 > 0.0 && self.image_size.1 > 0.0) {
            return Err(Error::invalid("image_size", "must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma", "must be non-negative"));
        }
        if !(0.0..180.0).contains(&self.parallax_floor_deg) {
            return Err(Error::invalid("parallax_floor_deg", "must be in [0, 180)"));
        }
        if !(self.state_separation >= 0.0) {
            return Err(Error::invalid("state_separation", "must be non-negative"));
        }
        if self.max_retries == 0 {
            return Err(Error::invalid("max_retries", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGroundTruth {
    pub shapes: Vec<Vec<Point3>>,
    pub state_of_frame: Vec<usize>,
    pub poses: Vec<CameraPose>,
    pub tracks: TrackSet,
    pub noisy_tracks: TrackSet,
    /// Largest pairwise point distance over all states.
    pub diameter: f64,
}

impl SceneGroundTruth {
    pub fn n_states(&self) -> usize {
        self.shapes.len()
    }

    pub fn frame_shape(&self, frame: usize) -> &[Point3] {
        &self.shapes[self.state_of_frame[frame]]
    }
}

pub fn shape_diameter(points: &[Point3]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d = d.max((a - b).norm());
        }
    }
    d
}

/// RMS distance between `a` and `b` after similarity-aligning `b` onto `a`.
pub fn aligned_distance(a: &[Point3], b: &[Point3]) -> Result<f64> {
    let t = procrustes_similarity(b, a)?;
    Ok(t.rms_error(b, a))
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
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

/// Camera at `eye` looking at `target`, rolled about its optical axis.
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

fn centred(mut pts: Vec<Point3>) -> Vec<Point3> {
    let n = pts.len() as f64;
    let mu = pts.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    for p in &mut pts {
        p.coords -= mu;
    }
    pts
}

fn blob_base<R: Rng>(rng: &mut R, m: usize) -> Vec<Point3> {
    (0..m)
        .map(|_| {
            Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect()
}

fn blob_state<R: Rng>(rng: &mut R, base: &[Point3], sd: f64) -> Vec<Point3> {
    let g = Normal::new(0.0, 1.0).expect("unit normal");
    centred(
        base.iter()
            .map(|p| p + Vector3::from_fn(|_, _| sd * g.sample(rng)))
            .collect(),
    )
}

struct Chain {
    /// Segment index, position along the segment and radial offset.
    anchors: Vec<(usize, f64, Vector3<f64>)>,
    segments: usize,
}

impl Chain {
    fn new<R: Rng>(rng: &mut R, m: usize, segments: usize) -> Self {
        let anchors = (0..m)
            .map(|k| {
                let offset = Vector3::new(
                    0.0,
                    rng.random_range(-0.25..0.25),
                    rng.random_range(-0.25..0.25),
                );
                (k % segments, rng.random_range(0.0..1.0), offset)
            })
            .collect();
        Chain { anchors, segments }
    }

    /// Alternating bend axes keep the posed chain out of a single plane.
    /// The straight chain has length 2.
    fn pose(&self, angles: &[f64]) -> Vec<Point3> {
        let scale = 2.0 / self.segments as f64;
        let mut frames = Vec::with_capacity(self.segments);
        let mut origin = Vector3::zeros();
        let mut rot = Matrix3::identity();
        for s in 0..self.segments {
            if s > 0 {
                let axis = if s % 2 == 1 {
                    Vector3::z_axis()
                } else {
                    Vector3::y_axis()
                };
                rot *= Rotation3::from_axis_angle(&axis, angles[s - 1]).into_inner();
            }
            frames.push((origin, rot));
            origin += rot * Vector3::x();
        }
        centred(
            self.anchors
                .iter()
                .map(|(s, u, off)| {
                    let (o, r) = frames[*s];
                    Point3::from((o + r * (Vector3::new(*u, 0.0, 0.0) + off)) * scale)
                })
                .collect(),
        )
    }
}

/// Produces the shape of state `s`.
type StateMaker<'a, R> = alloc::boxed::Box<dyn FnMut(&mut R, usize) -> Vec<Point3> + 'a>;

fn generate_shapes<R: Rng>(
    rng: &mut R,
    config: &SceneConfig,
    n_states: usize,
) -> Result<Vec<Vec<Point3>>> {
    let m = config.n_points;
    let mut shapes: Vec<Vec<Point3>> = Vec::with_capacity(n_states);
    let mut make: StateMaker<R> = match &config.shape_model {
        ShapeModel::RandomBlob { deformation } => {
            let base = blob_base(rng, m);
            let sd = *deformation;
            alloc::boxed::Box::new(move |rng: &mut R, _| blob_state(rng, &base, sd))
        }
        ShapeModel::ArticulatedChain {
            segments,
            joint_angles,
        } => {
            let chain = Chain::new(rng, m, *segments);
            let given = joint_angles.clone();
            let joints = segments - 1;
            alloc::boxed::Box::new(move |rng: &mut R, state: usize| {
                let angles: Vec<f64> = match given.get(state) {
                    Some(a) if a.len() == joints => a.clone(),
                    _ => (0..joints)
                        .map(|_| rng.random_range(-PI / 2.0..PI / 2.0))
                        .collect(),
                };
                chain.pose(&angles)
            })
        }
    };
    if let ShapeModel::ArticulatedChain {
        joint_angles,
        segments,
    } = &config.shape_model
    {
        if joint_angles.iter().any(|a| a.len() != segments - 1) {
            return Err(Error::invalid(
                "joint_angles",
                alloc::format!("each state needs {} angles", segments - 1),
            ));
        }
    }
    for state in 0..n_states {
        let explicit = matches!(
            &config.shape_model,
            ShapeModel::ArticulatedChain { joint_angles, .. } if state < joint_angles.len()
        );
        let mut attempt = 0;
        let shape = loop {
            attempt += 1;
            let candidate = make(rng, state);
            let floor = config.state_separation * shape_diameter(&candidate);
            let separated = shapes
                .iter()
                .all(|prev| aligned_distance(prev, &candidate).is_ok_and(|d| d >= floor));
            if separated {
                break candidate;
            }
            if explicit {
                return Err(Error::Generator(alloc::format!(
                    "state {state}: given joint angles are too close to an earlier state"
                )));
            }
            if attempt >= config.max_retries {
                return Err(Error::Generator(alloc::format!(
                    "state {state}: no shape separated from earlier states"
                )));
            }
        };
        shapes.push(shape);
    }
    Ok(shapes)
}

fn visible(config: &SceneConfig, pose: &CameraPose, shape: &[Point3]) -> bool {
    let (w, h) = config.image_size;
    shape.iter().all(|p| {
        let pc = pose.transform(p);
        if pc.z <= 0.1 {
            return false;
        }
        let u = config.intrinsics.project_camera(&pc);
        (0.0..=w).contains(&u.x) && (0.0..=h).contains(&u.y)
    })
}

fn view_direction(pose: &CameraPose) -> Vector3<f64> {
    pose.center().normalize()
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

fn generate_poses<R: Rng>(
    rng: &mut R,
    config: &SceneConfig,
    states: &[usize],
    shapes: &[Vec<Point3>],
) -> Result<Vec<CameraPose>> {
    let floor = config.parallax_floor_deg.to_radians();
    let n = config.n_frames;
    let mut poses: Vec<CameraPose> = Vec::with_capacity(n);
    for f in 0..n {
        let shape = &shapes[states[f]];
        let parallax_ok = |pose: &CameraPose, poses: &[CameraPose]| {
            let d = view_direction(pose);
            (0..poses.len())
                .filter(|&g| states[g] == states[f])
                .all(|g| angle_between(&d, &view_direction(&poses[g])) >= floor)
        };
        let pose = match config.camera_path {
            CameraPath::RandomSphere {
                radius_min,
                radius_max,
            } => {
                let mut found = None;
                for _ in 0..config.max_retries {
                    let dir = random_unit(rng);
                    let radius = if radius_max > radius_min {
                        rng.random_range(radius_min..radius_max)
                    } else {
                        radius_min
                    };
                    let roll = rng.random_range(-PI..PI);
                    let pose = look_at(dir * radius, Vector3::zeros(), roll);
                    if visible(config, &pose, shape) && parallax_ok(&pose, &poses) {
                        found = Some(pose);
                        break;
                    }
                }
                found.ok_or_else(|| {
                    Error::Generator(alloc::format!(
                        "frame {f}: no visible camera with enough parallax after {} tries",
                        config.max_retries
                    ))
                })?
            }
            CameraPath::Orbit {
                radius,
                elevation_deg,
            } => {
                let az = 2.0 * PI * f as f64 / n as f64;
                let el = elevation_deg.to_radians();
                let eye = Vector3::new(el.cos() * az.cos(), el.sin(), el.cos() * az.sin()) * radius;
                let pose = look_at(eye, Vector3::zeros(), 0.0);
                if !visible(config, &pose, shape) {
                    return Err(Error::Generator(alloc::format!(
                        "frame {f}: shape leaves the image on the orbit"
                    )));
                }
                if !parallax_ok(&pose, &poses) {
                    return Err(Error::Generator(alloc::format!(
                        "frame {f}: orbit spacing is below the parallax floor"
                    )));
                }
                pose
            }
        };
        poses.push(pose);
    }
    Ok(poses)
}

pub fn generate_scene(config: &SceneConfig) -> Result<SceneGroundTruth> {
    config.validate()?;
    let states = config.schedule.states(config.n_frames)?;
    let n_states = states.iter().max().map_or(0, |m| m + 1);

    let mut shape_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, &[SHAPE_STREAM]));
    let shapes = generate_shapes(&mut shape_rng, config, n_states)?;
    let mut camera_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, &[CAMERA_STREAM]));
    let poses = generate_poses(&mut camera_rng, config, &states, &shapes)?;

    let obs: Vec<Point2> = (0..config.n_frames)
        .flat_map(|f| {
            let pose = poses[f];
            let k = config.intrinsics;
            shapes[states[f]].iter().map(move |p| k.project(&pose, p))
        })
        .collect();
    let tracks = TrackSet::new(config.n_frames, config.n_points, obs)?;
    let noisy_tracks = add_noise(
        &tracks,
        config.noise_sigma,
        derive_seed(config.rng_seed, &[NOISE_STREAM]),
    )?;
    let diameter = shapes.iter().map(|s| shape_diameter(s)).fold(0.0, f64::max);
    Ok(SceneGroundTruth {
        shapes,
        state_of_frame: states,
        poses,
        tracks,
        noisy_tracks,
        diameter,
    })
}

/// I.i.d. Gaussian pixel noise on every coordinate.
pub fn add_noise(tracks: &TrackSet, sigma: f64, seed: u64) -> Result<TrackSet> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", "must be non-negative"));
    }
    if sigma == 0.0 {
        return Ok(tracks.clone());
    }
    let g = Normal::new(0.0, sigma).map_err(|e| Error::invalid("sigma", alloc::format!("{e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(
        tracks
            .map_observations(|p| Point2::new(p.x + g.sample(&mut rng), p.y + g.sample(&mut rng))),
    )
}

/// Two-frame configurations used to probe the rigidity test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    /// One generic shape, two cameras with distinct centres.
    RigidParallax,
    /// One shape, two cameras sharing a centre (pure rotation).
    ZeroBaseline,
    /// Coplanar points seen from two distinct centres.
    Planar,
    /// Two distinct shapes seen from two distinct centres.
    NonRigid,
}

impl PairKind {
    pub fn name(self) -> &'static str {
        match self {
            PairKind::RigidParallax => "rigid-parallax",
            PairKind::ZeroBaseline => "zero-baseline",
            PairKind::Planar => "planar",
            PairKind::NonRigid => "non-rigid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub kind: PairKind,
    pub correspondences: CorrespondenceSet,
    pub poses: (CameraPose, CameraPose),
    pub shapes: (Vec<Point3>, Vec<Point3>),
}

/// Draws one pair of the given kind; the camera layout honours the same
/// visibility and parallax rules as [`generate_scene`].
pub fn generate_pair(kind: PairKind, config: &SceneConfig) -> Result<PairSample> {
    config.validate()?;
    let m = config.n_points;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, &[0x50, kind as u64]));
    let floor = config.parallax_floor_deg.to_radians();
    let (radius_min, radius_max) = match config.camera_path {
        CameraPath::RandomSphere {
            radius_min,
            radius_max,
        } => (radius_min, radius_max),
        CameraPath::Orbit { radius, .. } => (radius, radius),
    };
    let radius = |rng: &mut ChaCha8Rng| {
        if radius_max > radius_min {
            rng.random_range(radius_min..radius_max)
        } else {
            radius_min
        }
    };

    for _ in 0..config.max_retries {
        let first = match kind {
            PairKind::Planar => {
                let normal = random_unit(&mut rng);
                let a = normal.cross(&random_unit(&mut rng)).normalize();
                let b = normal.cross(&a);
                (0..m)
                    .map(|_| {
                        Point3::from(
                            a * rng.random_range(-1.0..1.0) + b * rng.random_range(-1.0..1.0),
                        )
                    })
                    .collect()
            }
            _ => centred(blob_base(&mut rng, m)),
        };
        let second = if kind == PairKind::NonRigid {
            let sd = match config.shape_model {
                ShapeModel::RandomBlob { deformation } => deformation,
                ShapeModel::ArticulatedChain { .. } => 0.3,
            };
            let s = blob_state(&mut rng, &first, sd);
            let d = shape_diameter(&first);
            if !aligned_distance(&first, &s).is_ok_and(|x| x >= config.state_separation * d) {
                continue;
            }
            s
        } else {
            first.clone()
        };
        let p1 = look_at(
            random_unit(&mut rng) * radius(&mut rng),
            Vector3::zeros(),
            rng.random_range(-PI..PI),
        );
        let p2 = if kind == PairKind::ZeroBaseline {
            let axis = random_unit(&mut rng);
            let turn = Rotation3::new(axis * rng.random_range(0.05..0.25)).into_inner();
            let rotation = turn * p1.rotation;
            CameraPose::new(rotation, -(rotation * p1.center()))
        } else {
            look_at(
                random_unit(&mut rng) * radius(&mut rng),
                Vector3::zeros(),
                rng.random_range(-PI..PI),
            )
        };
        if !(visible(config, &p1, &first) && visible(config, &p2, &second)) {
            continue;
        }
        if kind != PairKind::ZeroBaseline
            && angle_between(&view_direction(&p1), &view_direction(&p2)) < floor
        {
            continue;
        }
        let k = config.intrinsics;
        let clean: Vec<(Point2, Point2)> = first
            .iter()
            .zip(&second)
            .map(|(a, b)| (k.project(&p1, a), k.project(&p2, b)))
            .collect();
        let tracks = TrackSet::from_frames(vec![
            clean.iter().map(|c| c.0).collect(),
            clean.iter().map(|c| c.1).collect(),
        ])?;
        let noisy = add_noise(
            &tracks,
            config.noise_sigma,
            derive_seed(config.rng_seed, &[NOISE_STREAM]),
        )?;
        return Ok(PairSample {
            kind,
            correspondences: crate::affinity::correspondences_between(&noisy, 0, 1),
            poses: (p1, p2),
            shapes: (first, second),
        });
    }
    Err(Error::Generator(String::from(
        "no pair satisfied visibility and parallax constraints",
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sqrt;

    fn config(schedule: Schedule, n: usize) -> SceneConfig {
        SceneConfig {
            n_frames: n,
            schedule,
            rng_seed: 7,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn schedules_produce_expected_states() {
        assert_eq!(Schedule::Rigid.states(10).unwrap(), vec![0; 10]);
        assert_eq!(
            Schedule::Periodic { period: 4 }.states(12).unwrap(),
            vec![0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3]
        );
        assert!(Schedule::Periodic { period: 13 }.states(12).is_err());
        assert!(Schedule::Periodic { period: 1 }.states(12).is_err());
        assert!(Schedule::Recurrent {
            states: vec![0, 2, 0]
        }
        .states(3)
        .is_err());
        assert!(Schedule::Recurrent { states: vec![0, 1] }
            .states(3)
            .is_err());
        assert_eq!(Schedule::Nonrecurrent.states(3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn rigid_scene_shares_one_state() {
        let s = generate_scene(&config(Schedule::Rigid, 10)).unwrap();
        assert_eq!(s.state_of_frame, vec![0; 10]);
        assert_eq!(s.n_states(), 1);
    }

    #[test]
    fn tracks_are_exact_projections() {
        let cfg = SceneConfig {
            noise_sigma: 1.0,
            ..config(Schedule::Periodic { period: 4 }, 12)
        };
        let s = generate_scene(&cfg).unwrap();
        for f in 0..12 {
            for (k, p) in s.frame_shape(f).iter().enumerate() {
                let u = cfg.intrinsics.project(&s.poses[f], p);
                assert!((u - s.tracks.get(f, k)).norm() < 1e-12);
                assert!(u.x >= 0.0 && u.x <= 640.0 && u.y >= 0.0 && u.y <= 480.0);
            }
        }
        assert_ne!(s.tracks, s.noisy_tracks);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = config(Schedule::Periodic { period: 3 }, 9);
        assert_eq!(generate_scene(&cfg).unwrap(), generate_scene(&cfg).unwrap());
        let other = SceneConfig {
            rng_seed: 8,
            ..cfg.clone()
        };
        assert_ne!(
            generate_scene(&cfg).unwrap(),
            generate_scene(&other).unwrap()
        );
    }

    #[test]
    fn states_are_separated_and_cameras_spread() {
        for model in [
            ShapeModel::RandomBlob { deformation: 0.3 },
            ShapeModel::ArticulatedChain {
                segments: 4,
                joint_angles: Vec::new(),
            },
        ] {
            let cfg = SceneConfig {
                shape_model: model,
                ..config(Schedule::Periodic { period: 5 }, 20)
            };
            let s = generate_scene(&cfg).unwrap();
            for a in 0..5 {
                for b in a + 1..5 {
                    let d = aligned_distance(&s.shapes[a], &s.shapes[b]).unwrap();
                    assert!(d >= 0.1 * shape_diameter(&s.shapes[b]));
                }
            }
            for f in 0..20 {
                for g in f + 1..20 {
                    if s.state_of_frame[f] == s.state_of_frame[g] {
                        let ang = angle_between(
                            &view_direction(&s.poses[f]),
                            &view_direction(&s.poses[g]),
                        );
                        assert!(ang >= 15f64.to_radians());
                    }
                }
            }
        }
    }

    #[test]
    fn explicit_joint_angles_are_used() {
        let cfg = SceneConfig {
            shape_model: ShapeModel::ArticulatedChain {
                segments: 3,
                joint_angles: vec![vec![0.0, 0.0], vec![1.0, -1.0]],
            },
            ..config(Schedule::Periodic { period: 2 }, 6)
        };
        let s = generate_scene(&cfg).unwrap();
        // The straight chain lies along one axis up to the radial offsets.
        let xs: Vec<f64> = s.shapes[0].iter().map(|p| p.x).collect();
        let spread = xs.iter().cloned().fold(f64::MIN, f64::max)
            - xs.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 1.5);
        let bad = SceneConfig {
            shape_model: ShapeModel::ArticulatedChain {
                segments: 3,
                joint_angles: vec![vec![0.0]],
            },
            ..cfg
        };
        assert!(generate_scene(&bad).is_err());
    }

    #[test]
    fn orbit_spacing_is_checked() {
        let cfg = SceneConfig {
            camera_path: CameraPath::Orbit {
                radius: 5.0,
                elevation_deg: 20.0,
            },
            ..config(Schedule::Rigid, 30)
        };
        assert!(matches!(generate_scene(&cfg), Err(Error::Generator(_))));
        let ok = SceneConfig {
            n_frames: 12,
            ..cfg
        };
        assert!(generate_scene(&ok).is_ok());
    }

    #[test]
    fn noise_statistics() {
        let cfg = SceneConfig {
            n_points: 250,
            ..config(Schedule::Rigid, 20)
        };
        let s = generate_scene(&cfg).unwrap();
        assert_eq!(add_noise(&s.tracks, 0.0, 1).unwrap(), s.tracks);
        let noisy = add_noise(&s.tracks, 2.0, 1).unwrap();
        let diffs: Vec<f64> = noisy
            .observations()
            .iter()
            .zip(s.tracks.observations())
            .flat_map(|(a, b)| [a.x - b.x, a.y - b.y])
            .collect();
        assert_eq!(diffs.len(), 10_000);
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let sd = sqrt(
            diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (diffs.len() - 1) as f64,
        );
        assert!((sd - 2.0).abs() < 0.1, "{sd}");
        assert_ne!(noisy, add_noise(&s.tracks, 2.0, 2).unwrap());
        assert_eq!(noisy, add_noise(&s.tracks, 2.0, 1).unwrap());
    }

    #[test]
    fn pair_kinds_have_their_geometry() {
        let cfg = SceneConfig {
            rng_seed: 3,
            ..SceneConfig::default()
        };
        let zero = generate_pair(PairKind::ZeroBaseline, &cfg).unwrap();
        assert!((zero.poses.0.center() - zero.poses.1.center()).norm() < 1e-9);
        let planar = generate_pair(PairKind::Planar, &cfg).unwrap();
        let p = &planar.shapes.0;
        let n = (p[1] - p[0]).cross(&(p[2] - p[0])).normalize();
        assert!(p.iter().all(|q| (q - p[0]).dot(&n).abs() < 1e-9));
        let nonrigid = generate_pair(PairKind::NonRigid, &cfg).unwrap();
        assert!(
            aligned_distance(&nonrigid.shapes.0, &nonrigid.shapes.1).unwrap()
                > 0.1 * shape_diameter(&nonrigid.shapes.0)
        );
        let rigid = generate_pair(PairKind::RigidParallax, &cfg).unwrap();
        assert_eq!(rigid.shapes.0, rigid.shapes.1);
        assert_eq!(rigid.correspondences.len(), 20);
    }
}
