//! Pairwise rigidity affinity over all frames of a track set.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::rigidity::{modified_epipolar_test, CorrespondenceSet, RigidityParams, RigidityScore};

/// Complete `N x M` table of image observations: every landmark is seen in
/// every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    n_frames: usize,
    n_points: usize,
    obs: Vec<Point2>,
}

impl TrackSet {
    /// `obs` is frame-major: entry `f * n_points + k` is landmark `k` in
    /// frame `f`.
    pub fn new(n_frames: usize, n_points: usize, obs: Vec<Point2>) -> Result<Self> {
        if n_frames < 2 {
            return Err(Error::invalid("n_frames", "need at least 2 frames"));
        }
        if n_points < 8 {
            return Err(Error::InsufficientPoints {
                needed: 8,
                got: n_points,
            });
        }
        if obs.len() != n_frames * n_points {
            return Err(Error::invalid(
                "observations",
                alloc::format!(
                    "expected {} entries for N={} M={}, got {}",
                    n_frames * n_points,
                    n_frames,
                    n_points,
                    obs.len()
                ),
            ));
        }
        if obs.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::invalid("observations", "non-finite coordinate"));
        }
        Ok(TrackSet {
            n_frames,
            n_points,
            obs,
        })
    }

    pub fn from_frames(frames: Vec<Vec<Point2>>) -> Result<Self> {
        let n_frames = frames.len();
        let n_points = frames.first().map_or(0, Vec::len);
        if frames.iter().any(|f| f.len() != n_points) {
            return Err(Error::invalid(
                "observations",
                "frames differ in point count",
            ));
        }
        TrackSet::new(n_frames, n_points, frames.into_iter().flatten().collect())
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn get(&self, frame: usize, point: usize) -> Point2 {
        self.obs[frame * self.n_points + point]
    }

    pub fn frame(&self, frame: usize) -> &[Point2] {
        &self.obs[frame * self.n_points..(frame + 1) * self.n_points]
    }

    pub fn observations(&self) -> &[Point2] {
        &self.obs
    }

    pub(crate) fn map_observations(&self, mut f: impl FnMut(Point2) -> Point2) -> TrackSet {
        TrackSet {
            n_frames: self.n_frames,
            n_points: self.n_points,
            obs: self.obs.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// Landmark-ordered correspondences between frames `i` and `j`.
pub fn correspondences_between(tracks: &TrackSet, i: usize, j: usize) -> CorrespondenceSet {
    let pairs = tracks
        .frame(i)
        .iter()
        .zip(tracks.frame(j))
        .map(|(a, b)| (*a, *b))
        .collect();
    CorrespondenceSet::new((i, j), pairs)
}

/// Unordered frame pairs `i < j` in row-major order.
pub fn pair_indices(n: usize) -> impl Iterator<Item = (usize, usize)> + Clone {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub i: usize,
    pub j: usize,
    pub result: Result<RigidityScore>,
}

/// A pair whose rigidity test failed; its affinity is recorded as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDiagnostic {
    pub i: usize,
    pub j: usize,
    pub error: Error,
}

pub fn evaluate_pair(
    tracks: &TrackSet,
    i: usize,
    j: usize,
    params: &RigidityParams,
) -> PairOutcome {
    let corrs = correspondences_between(tracks, i, j);
    PairOutcome {
        i,
        j,
        result: modified_epipolar_test(&corrs, params),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub a: DMatrix<f64>,
    pub params_digest: u64,
    pub diagnostics: Vec<PairDiagnostic>,
}

impl AffinityMatrix {
    /// Assembles per-pair outcomes in canonical order, independent of the
    /// order they were produced in.
    pub fn assemble(
        n: usize,
        params_digest: u64,
        outcomes: impl IntoIterator<Item = PairOutcome>,
    ) -> Self {
        let mut outcomes: Vec<PairOutcome> = outcomes.into_iter().collect();
        outcomes.sort_by_key(|o| (o.i, o.j));
        let mut a = DMatrix::identity(n, n);
        let mut diagnostics = Vec::new();
        for o in outcomes {
            let value = match o.result {
                Ok(score) => score.p,
                Err(error) => {
                    diagnostics.push(PairDiagnostic {
                        i: o.i,
                        j: o.j,
                        error,
                    });
                    0.0
                }
            };
            a[(o.i, o.j)] = value;
            a[(o.j, o.i)] = value;
        }
        AffinityMatrix {
            a,
            params_digest,
            diagnostics,
        }
    }

    /// Wraps an existing matrix after checking the affinity invariants.
    pub fn from_matrix(a: DMatrix<f64>, params_digest: u64) -> Result<Self> {
        let m = AffinityMatrix {
            a,
            params_digest,
            diagnostics: Vec::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[(i, j)]
    }

    /// Exact symmetry, unit diagonal and entries in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n {
            return Err(Error::invalid("affinity", "matrix is not square"));
        }
        for i in 0..n {
            if self.a[(i, i)] != 1.0 {
                return Err(Error::invalid(
                    "affinity",
                    alloc::format!("diagonal entry {i} is not 1"),
                ));
            }
            for j in 0..n {
                let v = self.a[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(
                        "affinity",
                        alloc::format!("entry ({i}, {j}) = {v} outside [0, 1]"),
                    ));
                }
                if v.to_bits() != self.a[(j, i)].to_bits() {
                    return Err(Error::invalid(
                        "affinity",
                        alloc::format!("entries ({i}, {j}) and ({j}, {i}) differ"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Fraction of off-diagonal entries that are positive.
    pub fn nonzero_fraction(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let count = pair_indices(n)
            .filter(|&(i, j)| self.a[(i, j)] > 0.0)
            .count();
        count as f64 / (n * (n - 1) / 2) as f64
    }
}

/// Runs the rigidity test on every unordered frame pair, sequentially.
pub fn build_affinity(tracks: &TrackSet, params: &RigidityParams) -> Result<AffinityMatrix> {
    params.validate()?;
    let outcomes =
        pair_indices(tracks.n_frames()).map(|(i, j)| evaluate_pair(tracks, i, j, params));
    Ok(AffinityMatrix::assemble(
        tracks.n_frames(),
        params.digest(),
        outcomes,
    ))
}
