//! Plain-text file formats. Floating point values are written in shortest
//! round-trip form, so reading a file back reproduces every value exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use sfrm_core::affinity::{AffinityMatrix, PairDiagnostic, TrackSet};
use sfrm_core::eval::{EvalReport, Histogram};
use sfrm_core::reconstruct::{ClusterReconstruction, ReconstructionStatus};
use sfrm_core::spectral::ClusterAssignment;
use sfrm_core::{CameraIntrinsics, CameraPose, Point2, Point3};

use crate::error::{Error, Result};

/// Ordered `key=value` metadata carried in comment lines.
pub type Provenance = Vec<(String, String)>;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Write {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-empty lines with their 1-based line numbers, trimmed.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses `# <tag> key=value ...` into its pairs.
fn parse_header(path: &Path, text: &str, tag: &str) -> Result<BTreeMap<String, String>> {
    let (no, first) = lines(text)
        .next()
        .ok_or_else(|| Error::parse(path, 1, format!("empty file, expected `# {tag}` header")))?;
    let rest = first
        .strip_prefix('#')
        .map(str::trim_start)
        .and_then(|r| r.strip_prefix(tag))
        .ok_or_else(|| Error::parse(path, no, format!("expected `# {tag}` header")))?;
    parse_pairs(path, no, rest)
}

fn parse_pairs(path: &Path, no: usize, s: &str) -> Result<BTreeMap<String, String>> {
    s.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::parse(path, no, format!("malformed header field `{kv}`")))
        })
        .collect()
}

fn header_field<T: std::str::FromStr>(
    path: &Path,
    fields: &BTreeMap<String, String>,
    key: &str,
) -> Result<T> {
    let raw = fields
        .get(key)
        .ok_or_else(|| Error::parse(path, 1, format!("header lacks `{key}=`")))?;
    raw.parse()
        .map_err(|_| Error::parse(path, 1, format!("bad header value {key}={raw}")))
}

/// Comment lines after the header of the form `# key=value ...`.
fn provenance_lines(path: &Path, text: &str) -> Result<Provenance> {
    let mut out = Vec::new();
    for (no, l) in lines(text).skip(1) {
        let Some(rest) = l.strip_prefix('#') else {
            continue;
        };
        let rest = rest.trim();
        if rest.starts_with("col:") || !rest.contains('=') {
            continue;
        }
        for (k, v) in parse_pairs(path, no, rest)? {
            out.push((k, v));
        }
    }
    Ok(out)
}

fn write_provenance(out: &mut String, provenance: &Provenance) {
    for (k, v) in provenance {
        writeln!(out, "# {k}={v}").unwrap();
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    lines(text).filter(|(_, l)| !l.starts_with('#'))
}

fn fields<'a>(path: &Path, no: usize, line: &'a str, sep: char, n: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = if sep == ' ' {
        line.split_whitespace().collect()
    } else {
        line.split(sep).map(str::trim).collect()
    };
    if parts.len() != n {
        return Err(Error::parse(
            path,
            no,
            format!("expected {n} fields, found {}", parts.len()),
        ));
    }
    Ok(parts)
}

fn num<T: std::str::FromStr>(path: &Path, no: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(path, no, format!("cannot parse `{s}`")))
}

fn finite(path: &Path, no: usize, s: &str) -> Result<f64> {
    let v: f64 = num(path, no, s)?;
    if !v.is_finite() {
        return Err(Error::parse(path, no, format!("non-finite value `{s}`")));
    }
    Ok(v)
}

// ---- tracks ----

pub fn format_tracks(tracks: &TrackSet) -> String {
    let mut out = format!("# tracks N={} M={}\n", tracks.n_frames(), tracks.n_points());
    for f in 0..tracks.n_frames() {
        for (k, p) in tracks.frame(f).iter().enumerate() {
            writeln!(out, "{f},{k},{:e},{:e}", p.x, p.y).unwrap();
        }
    }
    out
}

pub fn parse_tracks(path: &Path, text: &str) -> Result<TrackSet> {
    let header = parse_header(path, text, "tracks")?;
    let n: usize = header_field(path, &header, "N")?;
    let m: usize = header_field(path, &header, "M")?;
    let mut obs: Vec<Option<Point2>> = vec![None; n.saturating_mul(m)];
    for (no, l) in data_lines(text) {
        let p = fields(path, no, l, ',', 4)?;
        let f: usize = num(path, no, p[0])?;
        let k: usize = num(path, no, p[1])?;
        if f >= n || k >= m {
            return Err(Error::parse(
                path,
                no,
                format!("observation ({f},{k}) outside N={n} M={m}"),
            ));
        }
        let slot = &mut obs[f * m + k];
        if slot.is_some() {
            return Err(Error::parse(
                path,
                no,
                format!("duplicate observation ({f},{k})"),
            ));
        }
        *slot = Some(Point2::new(
            finite(path, no, p[2])?,
            finite(path, no, p[3])?,
        ));
    }
    let obs = obs
        .into_iter()
        .enumerate()
        .map(|(idx, o)| {
            o.ok_or_else(|| {
                Error::parse(
                    path,
                    0,
                    format!("missing observation frame {} point {}", idx / m, idx % m),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrackSet::new(n, m, obs)?)
}

pub fn read_tracks(path: &Path) -> Result<TrackSet> {
    parse_tracks(path, &read_text(path)?)
}

pub fn write_tracks(path: &Path, tracks: &TrackSet) -> Result<()> {
    write_text(path, &format_tracks(tracks))
}

// ---- intrinsics ----

pub fn format_intrinsics(k: &CameraIntrinsics) -> String {
    format!("{:e} {:e} {:e} {:e} {:e}\n", k.fx, k.fy, k.cx, k.cy, k.skew)
}

pub fn parse_intrinsics(path: &Path, text: &str) -> Result<CameraIntrinsics> {
    let mut rows = data_lines(text);
    let (no, l) = rows
        .next()
        .ok_or_else(|| Error::parse(path, 1, "expected `fx fy cx cy skew`"))?;
    if let Some((extra, _)) = rows.next() {
        return Err(Error::parse(path, extra, "unexpected extra line"));
    }
    let p = fields(path, no, l, ' ', 5)?;
    let v = p
        .iter()
        .map(|s| finite(path, no, s))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CameraIntrinsics::new(v[0], v[1], v[2], v[3], v[4])?)
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    parse_intrinsics(path, &read_text(path)?)
}

// ---- affinity ----

/// Diagnostics sidecar written next to an affinity file.
pub fn diagnostics_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".diag");
    PathBuf::from(s)
}

pub fn format_affinity(a: &AffinityMatrix, seed: u64) -> String {
    let n = a.n();
    let mut out = format!(
        "# affinity N={n} seed={seed} digest={:016x}\n",
        a.params_digest
    );
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{:.16e}", a.a[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn format_diagnostics(diagnostics: &[PairDiagnostic]) -> String {
    let mut out = String::from("# affinity-diagnostics\n# col: i j error\n");
    for d in diagnostics {
        writeln!(out, "{},{},{}", d.i, d.j, d.error).unwrap();
    }
    out
}

/// Parsed affinity file: the matrix plus the seed recorded in its header.
#[derive(Debug, Clone)]
pub struct AffinityFile {
    pub matrix: AffinityMatrix,
    pub seed: u64,
}

pub fn parse_affinity(path: &Path, text: &str) -> Result<AffinityFile> {
    let header = parse_header(path, text, "affinity")?;
    let n: usize = header_field(path, &header, "N")?;
    let seed: u64 = header_field(path, &header, "seed")?;
    let digest_raw: String = header_field(path, &header, "digest")?;
    let digest = u64::from_str_radix(&digest_raw, 16)
        .map_err(|_| Error::parse(path, 1, format!("bad digest `{digest_raw}`")))?;
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (no, l) in data_lines(text) {
        if rows == n {
            return Err(Error::parse(path, no, format!("more than N={n} rows")));
        }
        for s in fields(path, no, l, ' ', n)? {
            values.push(finite(path, no, s)?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(
            path,
            0,
            format!("expected {n} rows, found {rows}"),
        ));
    }
    let a = nalgebra::DMatrix::from_row_slice(n, n, &values);
    let matrix = AffinityMatrix::from_matrix(a, digest).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    Ok(AffinityFile { matrix, seed })
}

pub fn read_affinity(path: &Path) -> Result<AffinityFile> {
    parse_affinity(path, &read_text(path)?)
}

/// Writes the matrix and its diagnostics sidecar.
pub fn write_affinity(path: &Path, a: &AffinityMatrix, seed: u64) -> Result<()> {
    write_text(path, &format_affinity(a, seed))?;
    write_text(&diagnostics_path(path), &format_diagnostics(&a.diagnostics))
}

// ---- clusters ----

#[derive(Debug, Clone, PartialEq)]
pub struct ClustersFile {
    pub assignment: ClusterAssignment,
    pub seed: u64,
    pub provenance: Provenance,
}

pub fn format_clusters(c: &ClustersFile) -> String {
    let a = &c.assignment;
    let mut out = format!(
        "# clusters N={} K={} seed={}\n",
        a.labels.len(),
        a.k,
        c.seed
    );
    write_provenance(&mut out, &c.provenance);
    for (f, l) in a.labels.iter().enumerate() {
        writeln!(out, "{f},{l}").unwrap();
    }
    out
}

pub fn parse_clusters(path: &Path, text: &str) -> Result<ClustersFile> {
    let header = parse_header(path, text, "clusters")?;
    let n: usize = header_field(path, &header, "N")?;
    let k: usize = header_field(path, &header, "K")?;
    let seed: u64 = header_field(path, &header, "seed")?;
    let mut labels = vec![None; n];
    for (no, l) in data_lines(text) {
        let p = fields(path, no, l, ',', 2)?;
        let f: usize = num(path, no, p[0])?;
        let c: usize = num(path, no, p[1])?;
        if f >= n || c >= k {
            return Err(Error::parse(
                path,
                no,
                format!("entry ({f},{c}) outside N={n} K={k}"),
            ));
        }
        if labels[f].replace(c).is_some() {
            return Err(Error::parse(path, no, format!("frame {f} listed twice")));
        }
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(f, l)| l.ok_or_else(|| Error::parse(path, 0, format!("frame {f} has no cluster"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClustersFile {
        assignment: ClusterAssignment::from_labels(&labels, k),
        seed,
        provenance: provenance_lines(path, text)?,
    })
}

pub fn read_clusters(path: &Path) -> Result<ClustersFile> {
    parse_clusters(path, &read_text(path)?)
}

// ---- point clouds ----

pub fn format_ply(points: &[Point3], comment: &str) -> String {
    let mut out = String::from("ply\nformat ascii 1.0\n");
    if !comment.is_empty() {
        writeln!(out, "comment {comment}").unwrap();
    }
    writeln!(out, "element vertex {}", points.len()).unwrap();
    out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in points {
        writeln!(out, "{:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
    }
    out
}

pub fn parse_ply(path: &Path, text: &str) -> Result<Vec<Point3>> {
    let mut it = lines(text);
    let mut count = None;
    let mut ended = false;
    match it.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(path, 1, "not a PLY file")),
    }
    for (no, l) in it.by_ref() {
        if l == "end_header" {
            ended = true;
            break;
        }
        if l.starts_with("format") && l != "format ascii 1.0" {
            return Err(Error::parse(path, no, "only ASCII PLY is supported"));
        }
        if let Some(rest) = l.strip_prefix("element vertex") {
            count = Some(num::<usize>(path, no, rest.trim())?);
        }
    }
    let count = match (ended, count) {
        (true, Some(c)) => c,
        _ => return Err(Error::parse(path, 0, "incomplete PLY header")),
    };
    let mut pts = Vec::with_capacity(count);
    for (no, l) in it.take(count) {
        let p = l.split_whitespace().collect::<Vec<_>>();
        if p.len() < 3 {
            return Err(Error::parse(path, no, "vertex needs x y z"));
        }
        pts.push(Point3::new(
            finite(path, no, p[0])?,
            finite(path, no, p[1])?,
            finite(path, no, p[2])?,
        ));
    }
    if pts.len() != count {
        return Err(Error::parse(
            path,
            0,
            format!("expected {count} vertices, found {}", pts.len()),
        ));
    }
    Ok(pts)
}

pub fn read_ply(path: &Path) -> Result<Vec<Point3>> {
    parse_ply(path, &read_text(path)?)
}

// ---- poses ----

fn write_pose(out: &mut String, pose: &CameraPose) {
    let r = &pose.rotation;
    for i in 0..3 {
        for j in 0..3 {
            write!(out, ",{:e}", r[(i, j)]).unwrap();
        }
    }
    for i in 0..3 {
        write!(out, ",{:e}", pose.translation[i]).unwrap();
    }
}

fn read_pose(path: &Path, no: usize, p: &[&str]) -> Result<CameraPose> {
    let v = p
        .iter()
        .map(|s| finite(path, no, s))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CameraPose::new(
        Matrix3::from_row_slice(&v[..9]),
        Vector3::new(v[9], v[10], v[11]),
    ))
}

/// One row of a pose sidecar: `frame_id,group_id,R(9),t(3)[,reproj_error]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRow {
    pub frame: usize,
    pub group: usize,
    pub pose: CameraPose,
    pub reproj_error: Option<f64>,
}

fn parse_pose_rows(path: &Path, text: &str, with_error: bool) -> Result<Vec<PoseRow>> {
    let n = if with_error { 15 } else { 14 };
    data_lines(text)
        .map(|(no, l)| {
            let p = fields(path, no, l, ',', n)?;
            Ok(PoseRow {
                frame: num(path, no, p[0])?,
                group: num(path, no, p[1])?,
                pose: read_pose(path, no, &p[2..14])?,
                reproj_error: if with_error {
                    Some(num(path, no, p[14])?)
                } else {
                    None
                },
            })
        })
        .collect()
}

// ---- reconstruction results ----

pub const RESULT_POSES: &str = "poses.txt";
pub const RESULT_STATUS: &str = "status.txt";
pub const RESULT_CLUSTERS: &str = "clusters.txt";

pub fn cluster_ply_name(cluster_id: usize) -> String {
    format!("cluster_{cluster_id}.ply")
}

pub fn format_result_poses(recs: &[ClusterReconstruction]) -> String {
    let mut rows: Vec<(usize, usize, &CameraPose, f64)> = recs
        .iter()
        .flat_map(|r| {
            r.poses.iter().map(move |(&f, p)| {
                (
                    f,
                    r.cluster_id,
                    p,
                    r.frame_errors.get(&f).copied().unwrap_or(f64::NAN),
                )
            })
        })
        .collect();
    rows.sort_by_key(|r| r.0);
    let mut out = String::from(
        "# poses\n# col: frame_id cluster_id r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz reproj_error\n",
    );
    for (f, c, pose, e) in rows {
        write!(out, "{f},{c}").unwrap();
        write_pose(&mut out, pose);
        writeln!(out, ",{e:e}").unwrap();
    }
    out
}

pub fn format_status(recs: &[ClusterReconstruction], provenance: &Provenance) -> String {
    let mut out = String::from("# status\n");
    write_provenance(&mut out, provenance);
    out.push_str("# col: cluster_id status n_frames mean_reproj_error seed_i seed_j reason\n");
    for r in recs {
        let (status, reason) = match &r.status {
            ReconstructionStatus::Success => ("success", String::new()),
            ReconstructionStatus::Failed(why) => ("failed", why.replace([',', '\n'], ";")),
        };
        let (si, sj) = r
            .seed_pair
            .map_or(("-".to_string(), "-".to_string()), |(i, j)| {
                (i.to_string(), j.to_string())
            });
        writeln!(
            out,
            "{},{status},{},{:e},{si},{sj},{reason}",
            r.cluster_id,
            r.poses.len(),
            r.mean_reproj_error
        )
        .unwrap();
    }
    out
}

/// Writes `cluster_<k>.ply`, `poses.txt`, `status.txt` and a copy of the
/// cluster assignment into `dir`.
pub fn write_results(
    dir: &Path,
    recs: &[ClusterReconstruction],
    clusters: &ClustersFile,
    provenance: &Provenance,
) -> Result<()> {
    for r in recs.iter().filter(|r| !r.shape.is_empty()) {
        let comment = format!("cluster {}", r.cluster_id);
        write_text(
            &dir.join(cluster_ply_name(r.cluster_id)),
            &format_ply(&r.shape, &comment),
        )?;
    }
    write_text(&dir.join(RESULT_POSES), &format_result_poses(recs))?;
    write_text(&dir.join(RESULT_STATUS), &format_status(recs, provenance))?;
    write_text(&dir.join(RESULT_CLUSTERS), &format_clusters(clusters))
}

/// Reconstruction results as read back from a results directory.
#[derive(Debug, Clone)]
pub struct Results {
    pub reconstructions: Vec<ClusterReconstruction>,
    pub clusters: ClustersFile,
    pub provenance: Provenance,
}

pub fn read_results(dir: &Path) -> Result<Results> {
    let clusters = read_clusters(&dir.join(RESULT_CLUSTERS))?;
    let status_path = dir.join(RESULT_STATUS);
    let status_text = read_text(&status_path)?;
    parse_header(&status_path, &status_text, "status")?;
    let provenance = provenance_lines(&status_path, &status_text)?;
    let poses_path = dir.join(RESULT_POSES);
    let pose_rows = parse_pose_rows(&poses_path, &read_text(&poses_path)?, true)?;
    let mut recs = Vec::new();
    for (no, l) in data_lines(&status_text) {
        let p: Vec<&str> = l.splitn(7, ',').collect();
        if p.len() != 7 {
            return Err(Error::parse(&status_path, no, "expected 7 fields"));
        }
        let id: usize = num(&status_path, no, p[0])?;
        let mut rec = match p[1] {
            "success" => {
                let mut r = ClusterReconstruction::failed(id, "");
                r.status = ReconstructionStatus::Success;
                r
            }
            "failed" => ClusterReconstruction::failed(id, p[6]),
            other => {
                return Err(Error::parse(
                    &status_path,
                    no,
                    format!("unknown status `{other}`"),
                ))
            }
        };
        rec.mean_reproj_error = num(&status_path, no, p[3])?;
        if p[4] != "-" {
            rec.seed_pair = Some((num(&status_path, no, p[4])?, num(&status_path, no, p[5])?));
        }
        for row in pose_rows.iter().filter(|r| r.group == id) {
            rec.poses.insert(row.frame, row.pose);
            rec.frame_errors
                .insert(row.frame, row.reproj_error.unwrap_or(f64::NAN));
        }
        let expected: usize = num(&status_path, no, p[2])?;
        if rec.poses.len() != expected {
            return Err(Error::parse(
                &status_path,
                no,
                format!(
                    "cluster {id}: {expected} frames listed, {} poses found",
                    rec.poses.len()
                ),
            ));
        }
        let ply = dir.join(cluster_ply_name(id));
        if !rec.poses.is_empty() {
            rec.shape = read_ply(&ply)?;
        }
        recs.push(rec);
    }
    Ok(Results {
        reconstructions: recs,
        clusters,
        provenance,
    })
}

// ---- scene directory ----

pub const SCENE_MANIFEST: &str = "manifest.txt";
pub const SCENE_TRACKS: &str = "tracks.txt";
pub const SCENE_TRACKS_CLEAN: &str = "tracks_clean.txt";
pub const SCENE_POSES: &str = "poses.txt";
pub const SCENE_INTRINSICS: &str = "intrinsics.txt";
pub const SCENE_SHAPES: &str = "shapes";

pub fn format_manifest(entries: &Provenance) -> String {
    let mut out = String::from("# scene manifest\n");
    for (k, v) in entries {
        writeln!(out, "{k}={v}").unwrap();
    }
    out
}

pub fn parse_manifest(path: &Path, text: &str) -> Result<Provenance> {
    data_lines(text)
        .map(|(no, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::parse(path, no, "expected key=value"))
        })
        .collect()
}

pub fn manifest_value<T: std::str::FromStr>(path: &Path, m: &Provenance, key: &str) -> Result<T> {
    let raw = m
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::parse(path, 0, format!("manifest lacks `{key}`")))?;
    raw.parse()
        .map_err(|_| Error::parse(path, 0, format!("bad manifest value {key}={raw}")))
}

fn format_truth_poses(states: &[usize], poses: &[CameraPose]) -> String {
    let mut out = String::from(
        "# poses\n# col: frame_id state_id r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz\n",
    );
    for (f, (s, pose)) in states.iter().zip(poses).enumerate() {
        write!(out, "{f},{s}").unwrap();
        write_pose(&mut out, pose);
        out.push('\n');
    }
    out
}

pub fn state_ply_name(state: usize) -> String {
    format!("state_{state}.ply")
}

/// A scene directory in memory: ground truth plus what the manifest records.
#[derive(Debug, Clone)]
pub struct Scene {
    pub truth: sfrm_core::synthetic::SceneGroundTruth,
    pub intrinsics: CameraIntrinsics,
    pub noise_sigma: f64,
    pub manifest: Provenance,
}

pub fn write_scene(dir: &Path, scene: &Scene) -> Result<()> {
    let t = &scene.truth;
    write_text(&dir.join(SCENE_MANIFEST), &format_manifest(&scene.manifest))?;
    write_tracks(&dir.join(SCENE_TRACKS), &t.noisy_tracks)?;
    write_tracks(&dir.join(SCENE_TRACKS_CLEAN), &t.tracks)?;
    write_text(
        &dir.join(SCENE_POSES),
        &format_truth_poses(&t.state_of_frame, &t.poses),
    )?;
    write_text(
        &dir.join(SCENE_INTRINSICS),
        &format_intrinsics(&scene.intrinsics),
    )?;
    for (s, shape) in t.shapes.iter().enumerate() {
        let path = dir.join(SCENE_SHAPES).join(state_ply_name(s));
        write_text(&path, &format_ply(shape, &format!("state {s}")))?;
    }
    Ok(())
}

pub fn read_scene(dir: &Path) -> Result<Scene> {
    let manifest_path = dir.join(SCENE_MANIFEST);
    let manifest = parse_manifest(&manifest_path, &read_text(&manifest_path)?)?;
    let n_states: usize = manifest_value(&manifest_path, &manifest, "n_states")?;
    let noise_sigma: f64 = manifest_value(&manifest_path, &manifest, "noise_sigma")?;
    let diameter: f64 = manifest_value(&manifest_path, &manifest, "diameter")?;
    let noisy_tracks = read_tracks(&dir.join(SCENE_TRACKS))?;
    let tracks = read_tracks(&dir.join(SCENE_TRACKS_CLEAN))?;
    let poses_path = dir.join(SCENE_POSES);
    let rows = parse_pose_rows(&poses_path, &read_text(&poses_path)?, false)?;
    if rows.len() != tracks.n_frames() || rows.iter().enumerate().any(|(f, r)| r.frame != f) {
        return Err(Error::parse(
            &poses_path,
            0,
            "expected one row per frame, in frame order",
        ));
    }
    if rows.iter().any(|r| r.group >= n_states) {
        return Err(Error::parse(&poses_path, 0, "state id exceeds n_states"));
    }
    let shapes = (0..n_states)
        .map(|s| read_ply(&dir.join(SCENE_SHAPES).join(state_ply_name(s))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Scene {
        truth: sfrm_core::synthetic::SceneGroundTruth {
            shapes,
            state_of_frame: rows.iter().map(|r| r.group).collect(),
            poses: rows.iter().map(|r| r.pose).collect(),
            tracks,
            noisy_tracks,
            diameter,
        },
        intrinsics: read_intrinsics(&dir.join(SCENE_INTRINSICS))?,
        noise_sigma,
        manifest,
    })
}

// ---- reports ----

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"))
}

pub fn format_report(report: &EvalReport, provenance: &Provenance) -> String {
    let mut out = String::from("# report\n");
    write_provenance(&mut out, provenance);
    writeln!(out, "n_frames={}", report.n_frames).unwrap();
    writeln!(out, "purity={:e}", report.purity).unwrap();
    writeln!(out, "success_ratio={:e}", report.success_ratio).unwrap();
    writeln!(out, "mean_rmse={:e}", report.mean_rmse).unwrap();
    out.push_str("# col: cluster_id n_frames majority_state rmse mean_reproj_error success\n");
    for c in &report.clusters {
        let state = c.majority_state.map_or("-".to_string(), |s| s.to_string());
        writeln!(
            out,
            "{} {} {state} {} {:e} {}",
            c.cluster_id,
            c.n_frames,
            opt(c.rmse),
            c.mean_reproj_error,
            u8::from(c.success)
        )
        .unwrap();
    }
    out
}

pub fn format_histogram(h: &Histogram) -> String {
    let mut out = String::from("# reprojection error histogram (px)\n# col: lower upper count\n");
    for (w, c) in h.edges.windows(2).zip(&h.counts) {
        writeln!(out, "{} {} {c}", w[0], w[1]).unwrap();
    }
    if let Some(last) = h.edges.last() {
        writeln!(out, "{last} inf {}", h.overflow).unwrap();
    }
    out
}
