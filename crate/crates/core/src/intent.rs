//! Grasp intent estimation from the wrist trajectory.
//!
//! The wrist path is regressed as the intersection of two least-squares
//! planes, a vertical separation plane through that line splits the scene,
//! and the object nearest to the line on the preferred side is the target.
//! Also hosts the cloud registration gate used to validate library entries
//! and the sphere-proximity baseline.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use rstar::primitives::GeomWithData;
use rstar::{PointDistance, RTree};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, PointCloud, SizeParams};
use crate::gesture::{self, GestureLibraryEntry};

/// Normal matrices above this condition number are solved in the minimum-norm sense.
pub const MAX_NORMAL_CONDITION: f64 = 1e10;
const PARALLEL_EPS: f64 = 1e-9;
const Y_PARALLEL_EPS: f64 = 1e-6;
/// Registration error allowed as a fraction of the observed bounding radius.
pub const REGISTRATION_GATE: f64 = 0.10;
const ICP_MAX_ITERS: usize = 50;
const ICP_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntentError {
    #[error("need at least 3 wrist positions, got {0}")]
    TooFewPositions(usize),
    #[error("wrist timestamps must strictly increase")]
    NonMonotoneTrack,
    #[error("regression planes are parallel")]
    ParallelPlanes,
    #[error("trajectory is parallel to the vertical axis")]
    DegenerateDirection,
    #[error("no objects in the scene")]
    NoObjects,
    #[error("registration needs at least 4 points per cloud (source {source_len}, target {target_len})")]
    TooFewPoints { source_len: usize, target_len: usize },
    #[error("sphere radius must be positive")]
    InvalidRadius,
}

pub type Result<T> = std::result::Result<T, IntentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    #[default]
    Right,
    Left,
}

impl Handedness {
    pub fn flipped(self) -> Self {
        match self {
            Handedness::Right => Handedness::Left,
            Handedness::Left => Handedness::Right,
        }
    }
}

impl std::str::FromStr for Handedness {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "right" => Ok(Handedness::Right),
            "left" => Ok(Handedness::Left),
            other => Err(format!("unknown handedness {other:?} (expected right|left)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WristTrack {
    positions: Vec<(f64, Point3)>,
}

impl WristTrack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_positions(positions: Vec<(f64, Point3)>) -> Result<Self> {
        let mut track = Self::new();
        for (t, p) in positions {
            track.push(t, p)?;
        }
        Ok(track)
    }

    pub fn push(&mut self, t: f64, p: Point3) -> Result<()> {
        if let Some((last, _)) = self.positions.last() {
            if !(t > *last) {
                return Err(IntentError::NonMonotoneTrack);
            }
        }
        self.positions.push((t, p));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &Point3> {
        self.positions.iter().map(|(_, p)| p)
    }

    pub fn positions(&self) -> &[(f64, Point3)] {
        &self.positions
    }

    /// Farthest any position has been from the first one, meters.
    pub fn span(&self) -> f64 {
        let Some((_, first)) = self.positions.first() else {
            return 0.0;
        };
        self.positions
            .iter()
            .map(|(_, p)| (p - first).norm())
            .fold(0.0, f64::max)
    }

    pub fn last(&self) -> Option<&Point3> {
        self.positions.last().map(|(_, p)| p)
    }
}

/// Fitted wrist line. Each plane regresses one dependent coordinate on the
/// other two: `dep = w[0]*a + w[1]*b + w[2]` with `(a, b)` the remaining axes
/// in ascending order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionLine {
    pub point: Point3,
    pub direction: Vector3<f64>,
    pub plane1_w: [f64; 3],
    pub plane2_w: [f64; 3],
    /// Dependent coordinates of plane 1 and plane 2 (x=0, y=1, z=2).
    pub dependent_axes: [usize; 2],
}

impl RegressionLine {
    pub fn distance_to(&self, p: &Point3) -> f64 {
        (p - self.point).cross(&self.direction).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationPlane {
    /// `[wx, wy, wz, wd]`, unit normal, `wx < 0`.
    pub ws: [f64; 4],
}

impl SeparationPlane {
    /// `ws . [x, y, z, 1]`.
    pub fn evaluate(&self, p: &Point3) -> f64 {
        self.ws[0] * p.x + self.ws[1] * p.y + self.ws[2] * p.z + self.ws[3]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub object_class: String,
    pub position: Point3,
    pub size: SizeParams,
    pub cloud: PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentEstimate {
    pub target_id: String,
    pub line_distance: f64,
    pub in_left_space: bool,
    pub confidence: f64,
    pub fallback_used: bool,
}

/// Least-squares `w` for `A w = b`. Uses the normal equations when `AᵀA` is
/// well conditioned and the minimum-norm solution otherwise.
fn plane_regression(a: &DMatrix<f64>, b: &DVector<f64>) -> [f64; 3] {
    let normal = a.tr_mul(a);
    let sv = normal.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let well_conditioned = smin > 0.0 && smax / smin <= MAX_NORMAL_CONDITION;
    let solved = if well_conditioned {
        normal.clone().cholesky().map(|c| c.solve(&a.tr_mul(b)))
    } else {
        None
    };
    let w = match solved {
        Some(w) => w,
        None => {
            let svd = a.clone().svd(true, true);
            let cutoff = svd.singular_values.max() / MAX_NORMAL_CONDITION.sqrt();
            svd.solve(b, cutoff).expect("u and v_t were requested")
        }
    };
    [w[0], w[1], w[2]]
}

/// Fits the wrist line as the intersection of two regression planes.
///
/// The coordinate with the largest spread is kept as a regressor in both
/// planes; the other two are the dependent variables. For approach motion
/// along the camera axis this is the pair `x = f(y, z)`, `y = g(x, z)`.
pub fn fit_trajectory_line(track: &WristTrack) -> Result<RegressionLine> {
    let n = track.len();
    if n < 3 {
        return Err(IntentError::TooFewPositions(n));
    }
    let pts: Vec<Point3> = track.points().copied().collect();
    let spread = |axis: usize| {
        let lo = pts.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let spreads = [spread(0), spread(1), spread(2)];
    // ties favour z, then y, so that depth-dominant motion keeps the x/y pair
    let free = (0..3)
        .rev()
        .max_by(|&a, &b| spreads[a].total_cmp(&spreads[b]))
        .unwrap_or(2);
    let deps: Vec<usize> = (0..3).filter(|&k| k != free).collect();

    let mut planes = [[0.0; 3]; 2];
    let mut normals = [Vector3::zeros(); 2];
    for (slot, &dep) in deps.iter().enumerate() {
        let others: Vec<usize> = (0..3).filter(|&k| k != dep).collect();
        let a = DMatrix::from_fn(n, 3, |r, c| if c < 2 { pts[r][others[c]] } else { 1.0 });
        let b = DVector::from_iterator(n, pts.iter().map(|p| p[dep]));
        let w = plane_regression(&a, &b);
        let mut normal = Vector3::zeros();
        normal[dep] = 1.0;
        normal[others[0]] = -w[0];
        normal[others[1]] = -w[1];
        planes[slot] = w;
        normals[slot] = normal;
    }

    let cross = normals[0].cross(&normals[1]);
    if cross.norm() <= PARALLEL_EPS * normals[0].norm() * normals[1].norm() {
        return Err(IntentError::ParallelPlanes);
    }
    let mut direction = cross.normalize();
    let first = pts[0];
    let last = pts[n - 1];
    if direction.dot(&(last - first)) < 0.0 {
        direction = -direction;
    }

    // point on both planes closest to the centroid of the track
    let centroid = pts.iter().fold(Point3::zeros(), |a, p| a + p) / n as f64;
    let m = Matrix3::from_rows(&[normals[0].transpose(), normals[1].transpose(), direction.transpose()]);
    let rhs = Vector3::new(planes[0][2], planes[1][2], direction.dot(&centroid));
    let point = m.lu().solve(&rhs).ok_or(IntentError::ParallelPlanes)?;

    Ok(RegressionLine {
        point,
        direction,
        plane1_w: planes[0],
        plane2_w: planes[1],
        dependent_axes: [deps[0], deps[1]],
    })
}

/// Principal-axis (total least squares) direction of a point set.
pub fn principal_axis(points: &[Point3]) -> Option<(Point3, Vector3<f64>)> {
    if points.len() < 2 {
        return None;
    }
    let c = points.iter().fold(Point3::zeros(), |a, p| a + p) / points.len() as f64;
    let cov = points
        .iter()
        .fold(Matrix3::zeros(), |acc, p| acc + (p - c) * (p - c).transpose());
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imax();
    Some((c, eig.eigenvectors.column(k).normalize()))
}

/// Plane through the line containing the vertical (+y) direction.
pub fn separation_plane(line: &RegressionLine) -> Result<SeparationPlane> {
    let cross = line.direction.cross(&Vector3::y());
    if cross.norm() < Y_PARALLEL_EPS.sin() {
        return Err(IntentError::DegenerateDirection);
    }
    let mut normal = cross.normalize();
    if normal.x > 0.0 {
        normal = -normal;
    }
    let wd = -normal.dot(&line.point);
    Ok(SeparationPlane {
        ws: [normal.x, normal.y, normal.z, wd],
    })
}

fn by_distance_then_id(a: &(f64, &str), b: &(f64, &str)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

fn margin_confidence(best: f64, runner_up: Option<f64>) -> f64 {
    match runner_up {
        None => 1.0,
        Some(r) if best + r > 0.0 => 1.0 - best / (best + r),
        Some(_) => 0.5,
    }
}

/// Selects the object nearest to the line on the preferred side of the
/// separation plane; left space for a right hand and vice versa.
pub fn estimate_target(
    line: &RegressionLine,
    objects: &[SceneObject],
    handedness: Handedness,
) -> Result<IntentEstimate> {
    if objects.is_empty() {
        return Err(IntentError::NoObjects);
    }
    let plane = separation_plane(line)?;
    let preferred = |o: &SceneObject| {
        let s = plane.evaluate(&o.position);
        match handedness {
            Handedness::Right => s > 0.0,
            Handedness::Left => s < 0.0,
        }
    };
    let mut all: Vec<(f64, &str)> = objects
        .iter()
        .map(|o| (line.distance_to(&o.position), o.id.as_str()))
        .collect();
    all.sort_by(by_distance_then_id);
    let mut candidates: Vec<(f64, &str)> = objects
        .iter()
        .filter(|o| preferred(o))
        .map(|o| (line.distance_to(&o.position), o.id.as_str()))
        .collect();
    candidates.sort_by(by_distance_then_id);

    let fallback_used = candidates.is_empty();
    let (best_d, best_id) = if fallback_used { all[0] } else { candidates[0] };
    let runner_up = all.iter().find(|(_, id)| *id != best_id).map(|(d, _)| *d);
    let target = objects.iter().find(|o| o.id == best_id).expect("id comes from objects");
    Ok(IntentEstimate {
        target_id: best_id.to_string(),
        line_distance: best_d,
        in_left_space: plane.evaluate(&target.position) > 0.0,
        confidence: margin_confidence(best_d, runner_up),
        fallback_used,
    })
}

/// Proximity baseline: the nearest object whose sphere of `radius` contains
/// the hand; outside every sphere the nearest object is reported with the
/// fallback flag set.
pub fn estimate_target_sphere_baseline(hand: &Point3, objects: &[SceneObject], radius: f64) -> Result<IntentEstimate> {
    if objects.is_empty() {
        return Err(IntentError::NoObjects);
    }
    if !(radius > 0.0) {
        return Err(IntentError::InvalidRadius);
    }
    let mut all: Vec<(f64, &str)> = objects
        .iter()
        .map(|o| ((hand - o.position).norm(), o.id.as_str()))
        .collect();
    all.sort_by(by_distance_then_id);
    let (best_d, best_id) = all[0];
    Ok(IntentEstimate {
        target_id: best_id.to_string(),
        line_distance: best_d,
        in_left_space: false,
        confidence: margin_confidence(best_d, all.get(1).map(|(d, _)| *d)),
        fallback_used: best_d > radius,
    })
}

/// Commits to a target once the same estimate arrives `commit_count` times
/// in a row. A missing estimate breaks the streak.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitTracker {
    commit_count: usize,
    streak_id: Option<String>,
    streak: usize,
}

impl CommitTracker {
    pub fn new(commit_count: usize) -> Self {
        Self {
            commit_count: commit_count.max(1),
            streak_id: None,
            streak: 0,
        }
    }

    /// Feeds one per-frame estimate; returns the target on the committing frame.
    pub fn observe(&mut self, estimate: Option<&str>) -> Option<String> {
        match estimate {
            None => {
                self.streak_id = None;
                self.streak = 0;
            }
            Some(id) if self.streak_id.as_deref() == Some(id) => self.streak += 1,
            Some(id) => {
                self.streak_id = Some(id.to_string());
                self.streak = 1;
            }
        }
        (self.streak >= self.commit_count)
            .then(|| self.streak_id.clone())
            .flatten()
    }
}

/// Replays the per-frame estimator over a recorded track, returning the
/// committed target and the index of the committing frame.
pub fn commit_on_track(
    positions: &[(f64, Point3)],
    objects: &[SceneObject],
    handedness: Handedness,
    min_track_len: usize,
    min_track_span: f64,
    commit_count: usize,
) -> Option<(String, usize)> {
    let mut tracker = CommitTracker::new(commit_count);
    let mut track = WristTrack::new();
    for (k, (t, p)) in positions.iter().enumerate() {
        track.push(*t, *p).ok()?;
        if track.len() < min_track_len || track.span() < min_track_span {
            continue;
        }
        let est = fit_trajectory_line(&track)
            .and_then(|l| estimate_target(&l, objects, handedness))
            .ok();
        if let Some(id) = tracker.observe(est.as_ref().map(|e| e.target_id.as_str())) {
            return Some((id, k));
        }
    }
    None
}

/// Sphere baseline over a recorded track: decides on the first frame the
/// hand is inside any object's sphere, or on the last frame if it never is.
pub fn sphere_baseline_on_track(
    positions: &[(f64, Point3)],
    objects: &[SceneObject],
    radius: f64,
) -> Result<IntentEstimate> {
    let (_, last) = positions.last().ok_or(IntentError::TooFewPositions(0))?;
    for (_, p) in positions {
        let est = estimate_target_sphere_baseline(p, objects, radius)?;
        if !est.fallback_used {
            return Ok(est);
        }
    }
    estimate_target_sphere_baseline(last, objects, radius)
}

/// Rotation then translation: `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn rotation_angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub transform: RigidTransform,
    /// Symmetric nearest-neighbour RMSE after alignment, meters.
    pub rmse: f64,
    /// One-way (source to target) RMSE after each ICP iteration, starting with the coarse estimate.
    pub icp_history: Vec<f64>,
}

struct NearestIndex {
    tree: RTree<GeomWithData<[f64; 3], usize>>,
}

impl NearestIndex {
    fn new(cloud: &PointCloud) -> Self {
        let items = cloud
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| GeomWithData::new([p.x, p.y, p.z], i))
            .collect();
        Self {
            tree: RTree::bulk_load(items),
        }
    }

    fn nearest(&self, p: &Point3) -> (usize, f64) {
        let q = [p.x, p.y, p.z];
        let nn = self
            .tree
            .nearest_neighbor(&q)
            .expect("index built from a non-empty cloud");
        (nn.data, nn.distance_2(&q))
    }
}

fn one_way_rmse(points: impl Iterator<Item = Point3>, index: &NearestIndex) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for p in points {
        sum += index.nearest(&p).1;
        n += 1;
    }
    ((sum / n as f64).sqrt(), n)
}

fn principal_frame(points: &[Point3], centroid: &Point3) -> Matrix3<f64> {
    let cov = points.iter().fold(Matrix3::zeros(), |acc, p| {
        acc + (p - centroid) * (p - centroid).transpose()
    });
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut frame = Matrix3::from_columns(&[
        eig.eigenvectors.column(order[0]).into_owned(),
        eig.eigenvectors.column(order[1]).into_owned(),
        eig.eigenvectors.column(order[2]).into_owned(),
    ]);
    if frame.determinant() < 0.0 {
        frame.set_column(2, &(-frame.column(2)));
    }
    frame
}

/// Least-squares rigid alignment of paired points (Kabsch).
fn kabsch(src: &[Point3], dst: &[Point3]) -> RigidTransform {
    let n = src.len() as f64;
    let cs = src.iter().fold(Point3::zeros(), |a, p| a + p) / n;
    let cd = dst.iter().fold(Point3::zeros(), |a, p| a + p) / n;
    let h = src
        .iter()
        .zip(dst)
        .fold(Matrix3::zeros(), |acc, (s, d)| acc + (s - cs) * (d - cd).transpose());
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let v = v_t.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let rotation = v * fix * u.transpose();
    RigidTransform {
        rotation,
        translation: cd - rotation * cs,
    }
}

/// Coarse-to-fine rigid registration of `source` onto `target`.
///
/// The coarse stage aligns centroids and principal axes, scoring the four
/// proper axis-sign hypotheses (plus plain centroid alignment) by
/// nearest-neighbour RMSE. Point-to-point ICP then refines the best one.
pub fn register_clouds(source: &PointCloud, target: &PointCloud) -> Result<Registration> {
    if source.len() < 4 || target.len() < 4 {
        return Err(IntentError::TooFewPoints {
            source_len: source.len(),
            target_len: target.len(),
        });
    }
    let target_index = NearestIndex::new(target);
    let cs = source.centroid().expect("non-empty");
    let ct = target.centroid().expect("non-empty");
    let es = principal_frame(&source.points, &cs);
    let et = principal_frame(&target.points, &ct);

    let mut hypotheses = vec![RigidTransform {
        rotation: Matrix3::identity(),
        translation: ct - cs,
    }];
    for signs in [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]] {
        let rotation = et * Matrix3::from_diagonal(&Vector3::from(signs)) * es.transpose();
        hypotheses.push(RigidTransform {
            rotation,
            translation: ct - rotation * cs,
        });
    }
    // nearest target point for each moved source point, and the one-way RMSE
    let correspond = |moved: &[Point3]| {
        let mut sum = 0.0;
        let idx: Vec<usize> = moved
            .iter()
            .map(|p| {
                let (i, d2) = target_index.nearest(p);
                sum += d2;
                i
            })
            .collect();
        (idx, (sum / moved.len() as f64).sqrt())
    };
    let apply = |t: &RigidTransform| -> Vec<Point3> { source.points.iter().map(|p| t.apply(p)).collect() };
    let (mut current, mut moved, (mut matches, mut err)) = hypotheses
        .iter()
        .map(|t| {
            let moved = apply(t);
            let c = correspond(&moved);
            (*t, moved, c)
        })
        .min_by(|a, b| a.2 .1.total_cmp(&b.2 .1))
        .expect("hypotheses are non-empty");

    let mut history = vec![err];
    for _ in 0..ICP_MAX_ITERS {
        if err == 0.0 {
            break;
        }
        let matched: Vec<Point3> = matches.iter().map(|&i| target.points[i]).collect();
        let candidate = kabsch(&moved, &matched).compose(&current);
        let candidate_moved = apply(&candidate);
        let (next_matches, next_err) = correspond(&candidate_moved);
        if next_err > err {
            break;
        }
        let rel = (err - next_err) / err;
        current = candidate;
        moved = candidate_moved;
        matches = next_matches;
        err = next_err;
        history.push(err);
        if rel < ICP_REL_TOL {
            break;
        }
    }

    let source_index = NearestIndex::new(&PointCloud { points: moved.clone() });
    let (fwd, nf) = one_way_rmse(moved.iter().copied(), &target_index);
    let (bwd, nb) = one_way_rmse(target.points.iter().copied(), &source_index);
    let rmse = ((fwd * fwd * nf as f64 + bwd * bwd * nb as f64) / (nf + nb) as f64).sqrt();
    Ok(Registration {
        transform: current,
        rmse,
        icp_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Validation {
    Ok { error: f64 },
    Mismatch { error: f64 },
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        matches!(self, Validation::Ok { .. })
    }

    pub fn error(&self) -> f64 {
        match *self {
            Validation::Ok { error } | Validation::Mismatch { error } => error,
        }
    }
}

/// Checks that a library entry's object matches the observed one: cloud
/// registration error (or size discrepancy when the entry has no cloud)
/// within 10% of the observed bounding radius.
pub fn validate_gesture_entry(
    entry: &GestureLibraryEntry,
    obs_cloud: &PointCloud,
    obs_size: &SizeParams,
) -> Result<Validation> {
    let limit = REGISTRATION_GATE * obs_size.radius;
    let error = match &entry.model_cloud {
        Some(model) => register_clouds(model, obs_cloud)?.rmse,
        None => gesture::size_discrepancy(&entry.size, obs_size),
    };
    Ok(if error <= limit {
        Validation::Ok { error }
    } else {
        Validation::Mismatch { error }
    })
}
