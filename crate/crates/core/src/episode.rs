//! Episode and scene files, synthetic episode generation, report export.
//!
//! Episodes are JSON documents in meters, degrees and seconds. Object clouds
//! and depth maps may be inlined or referenced by a path relative to the
//! episode file; references are resolved at load time.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ContactModel, LockReason, Stage};
use crate::geometry::{self, BoundingBox2D, CameraIntrinsics, DepthMap, Point3, PointCloud};
use crate::gesture::{eval_gesture, GestureFunction};
use crate::intent::{Handedness, SceneObject};
use crate::kinematics::{self, AngleVector, HandKeypoints};

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Schema { path: PathBuf, msg: String },
    #[error("target {0:?} is not in the scene")]
    UnknownTarget(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid generation parameters: {0}")]
    InvalidParameters(String),
    #[error("synthesis failed: {0}")]
    Synthesis(#[from] kinematics::KinematicsError),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, EpisodeError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EpisodeError + '_ {
    move |source| EpisodeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn schema_err(path: &Path, msg: impl Into<String>) -> EpisodeError {
    EpisodeError::Schema {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Inline data or a path relative to the referencing file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(String),
    Inline(T),
}

impl<T> Source<T> {
    pub fn inline(&self) -> Option<&T> {
        match self {
            Source::Inline(v) => Some(v),
            Source::Path(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub episode_id: String,
    #[serde(default = "default_handedness")]
    pub handedness: Handedness,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_class: Option<String>,
    /// Ground-truth target of a control episode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
}

fn default_handedness() -> Handedness {
    Handedness::Right
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandObservation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<HandKeypoints>,
    pub wrist: Point3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox2D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectObservation {
    pub id: String,
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox2D>,
    pub position: Point3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<Source<PointCloud>>,
    /// Simulation only: where each finger meets this object, degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_angles: Option<[f64; 6]>,
}

impl ObjectObservation {
    pub fn cloud(&self) -> Option<&PointCloud> {
        self.cloud.as_ref().and_then(Source::inline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub hand: HandObservation,
    #[serde(default)]
    pub objects: Vec<ObjectObservation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<Source<DepthMap>>,
}

impl Frame {
    pub fn depth(&self) -> Option<&DepthMap> {
        self.depth.as_ref().and_then(Source::inline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub meta: EpisodeMeta,
    pub camera: CameraIntrinsics,
    pub frames: Vec<Frame>,
}

impl EpisodeRecord {
    /// Checks the invariants enforced at load time.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.frames.is_empty() {
            return Err("episode has no frames".into());
        }
        if !(self.meta.fps > 0.0) {
            return Err(format!("fps must be positive, got {}", self.meta.fps));
        }
        self.camera.validate().map_err(|e| e.to_string())?;
        for (k, f) in self.frames.iter().enumerate() {
            if !f.t.is_finite() {
                return Err(format!("frame {k}: non-finite timestamp"));
            }
            if k > 0 && f.t <= self.frames[k - 1].t {
                return Err(format!("frame {k}: timestamp {} does not increase", f.t));
            }
            if !f.hand.wrist.iter().all(|x| x.is_finite()) {
                return Err(format!("frame {k}: non-finite wrist"));
            }
            for o in &f.objects {
                if !o.position.iter().all(|x| x.is_finite()) {
                    return Err(format!("frame {k}: object {:?} has a non-finite position", o.id));
                }
            }
        }
        Ok(())
    }

    /// Latest observation of every object id, with the most recent cloud
    /// seen for it. Objects without any cloud are skipped.
    pub fn scene_objects(&self) -> Vec<SceneObject> {
        let mut out: Vec<SceneObject> = Vec::new();
        for f in &self.frames {
            for o in &f.objects {
                let cloud = o.cloud().cloned();
                match out.iter_mut().find(|s| s.id == o.id) {
                    Some(s) => {
                        s.position = o.position;
                        if let Some(c) = cloud {
                            s.cloud = c;
                        }
                    }
                    None => {
                        if let Some(c) = cloud {
                            if let Ok(size) = geometry::object_size(&c) {
                                out.push(SceneObject {
                                    id: o.id.clone(),
                                    object_class: o.class.clone(),
                                    position: o.position,
                                    size,
                                    cloud: c,
                                });
                            }
                        }
                    }
                }
            }
        }
        for s in &mut out {
            if let Ok(size) = geometry::object_size(&s.cloud) {
                s.size = size;
            }
        }
        out
    }

    pub fn contact_angles(&self, id: &str) -> Option<[f64; 6]> {
        self.frames
            .iter()
            .flat_map(|f| &f.objects)
            .filter(|o| o.id == id)
            .find_map(|o| o.contact_angles)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| schema_err(path, e.to_string()))
}

fn resolve<T: for<'de> Deserialize<'de>>(src: &mut Source<T>, base: &Path) -> Result<()> {
    if let Source::Path(rel) = src {
        let value = read_json(&base.join(&*rel))?;
        *src = Source::Inline(value);
    }
    Ok(())
}

pub fn load_episode(path: &Path) -> Result<EpisodeRecord> {
    let mut ep: EpisodeRecord = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for f in &mut ep.frames {
        if let Some(d) = &mut f.depth {
            resolve(d, base)?;
            let d = d.inline().expect("resolved");
            DepthMap::new(d.width, d.height, d.values.clone()).map_err(|e| schema_err(path, e.to_string()))?;
        }
        for o in &mut f.objects {
            if let Some(c) = &mut o.cloud {
                resolve(c, base)?;
            }
        }
    }
    ep.validate().map_err(|msg| schema_err(path, msg))?;
    Ok(ep)
}

/// Writes the episode with every cloud and depth map inlined.
pub fn save_episode(ep: &EpisodeRecord, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(ep).expect("episode serializes");
    fs::write(path, text).map_err(io_err(path))
}

/// Box-shaped object catalog used by the synthetic scenes: extents in
/// meters (x wide, y tall, z deep).
pub const STANDARD_OBJECTS: [(&str, [f64; 3]); 8] = [
    ("apple", [0.080, 0.075, 0.078]),
    ("bottle", [0.070, 0.220, 0.068]),
    ("bowl", [0.150, 0.070, 0.145]),
    ("carrot", [0.180, 0.030, 0.032]),
    ("cup", [0.082, 0.100, 0.076]),
    ("fork", [0.190, 0.018, 0.028]),
    ("mouse", [0.062, 0.040, 0.110]),
    ("pitcher", [0.140, 0.200, 0.120]),
];

pub fn standard_extents(class: &str) -> Option<Vector3<f64>> {
    STANDARD_OBJECTS
        .iter()
        .find(|(c, _)| *c == class)
        .map(|(_, e)| Vector3::from(*e))
}

/// Surface samples of an axis-aligned box on a regular grid, about 600
/// points. Deterministic.
pub fn synthetic_object_cloud(extents: &Vector3<f64>, center: &Point3) -> PointCloud {
    let e = extents.map(|x| x.max(1e-4));
    let area = 2.0 * (e.x * e.y + e.y * e.z + e.x * e.z);
    let step = (area / 600.0).sqrt();
    let half = e / 2.0;
    let mut points = Vec::new();
    // one pair of faces per axis: fixed axis a, grid over axes b and c
    for (a, b, c) in [(0, 1, 2), (1, 0, 2), (2, 0, 1)] {
        let nb = ((e[b] / step).round() as usize).max(1);
        let nc = ((e[c] / step).round() as usize).max(1);
        for side in [-1.0, 1.0] {
            for ib in 0..=nb {
                for ic in 0..=nc {
                    let mut p = Point3::zeros();
                    p[a] = side * half[a];
                    p[b] = -half[b] + e[b] * ib as f64 / nb as f64;
                    p[c] = -half[c] + e[c] * ic as f64 / nc as f64;
                    points.push(p + center);
                }
            }
        }
    }
    PointCloud { points }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObjectSpec {
    pub id: String,
    pub class: String,
    pub position: Point3,
    /// Box extents, meters.
    pub size: Vector3<f64>,
    pub contact_angles: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub objects: Vec<SceneObjectSpec>,
    pub spacing: f64,
    pub layout_seed: u64,
}

fn horizontal_distance(a: &Point3, b: &Point3) -> f64 {
    ((a.x - b.x).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

impl SceneSpec {
    /// Objects in a row along x, centered on `center`, `spacing` apart. The
    /// seed shuffles which class sits where.
    pub fn row(
        classes: &[&str],
        spacing: f64,
        center: &Point3,
        contact: impl Fn(&str) -> [f64; 6],
        layout_seed: u64,
    ) -> Result<Self> {
        use rand::seq::SliceRandom;
        if classes.is_empty() {
            return Err(EpisodeError::InvalidScene("no objects".into()));
        }
        let mut order: Vec<&str> = classes.to_vec();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(layout_seed));
        let n = order.len() as f64;
        let mut objects = Vec::with_capacity(order.len());
        for (k, class) in order.into_iter().enumerate() {
            let size = standard_extents(class)
                .ok_or_else(|| EpisodeError::InvalidScene(format!("unknown object class {class:?}")))?;
            let x = center.x + spacing * (k as f64 - (n - 1.0) / 2.0);
            objects.push(SceneObjectSpec {
                id: format!("{class}_{k}"),
                class: class.to_string(),
                position: Point3::new(x, center.y, center.z),
                size,
                contact_angles: contact(class),
            });
        }
        let spec = Self {
            objects,
            spacing,
            layout_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(EpisodeError::InvalidScene("no objects".into()));
        }
        if !(self.spacing >= 0.0) {
            return Err(EpisodeError::InvalidScene("negative spacing".into()));
        }
        for (i, a) in self.objects.iter().enumerate() {
            if a.size.iter().any(|x| !(*x > 0.0)) {
                return Err(EpisodeError::InvalidScene(format!(
                    "object {:?} has a non-positive size",
                    a.id
                )));
            }
            for b in &self.objects[i + 1..] {
                if a.id == b.id {
                    return Err(EpisodeError::InvalidScene(format!("duplicate object id {:?}", a.id)));
                }
                if horizontal_distance(&a.position, &b.position) < self.spacing - 1e-9 {
                    return Err(EpisodeError::InvalidScene(format!(
                        "objects {:?} and {:?} are closer than the spacing",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&SceneObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn scene_objects(&self) -> Vec<SceneObject> {
        self.objects
            .iter()
            .map(|o| {
                let cloud = synthetic_object_cloud(&o.size, &o.position);
                let size = geometry::object_size(&cloud).expect("synthetic clouds are non-empty");
                SceneObject {
                    id: o.id.clone(),
                    object_class: o.class.clone(),
                    position: o.position,
                    size,
                    cloud,
                }
            })
            .collect()
    }

    pub fn contact_model(&self, id: &str, stiffness: f64) -> Option<ContactModel> {
        self.get(id).map(|o| ContactModel {
            contact_angles: o.contact_angles,
            stiffness,
        })
    }
}

pub fn load_scene(path: &Path) -> Result<SceneSpec> {
    let spec: SceneSpec = read_json(path)?;
    spec.validate().map_err(|e| schema_err(path, e.to_string()))?;
    Ok(spec)
}

pub fn save_scene(spec: &SceneSpec, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(spec).expect("scene serializes");
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub start: Point3,
    pub duration: f64,
    pub fps: f64,
    /// Final wrist-to-target distance; the gesture's `d_end` when unset.
    pub end_distance: Option<f64>,
    /// How far the final approach direction swings toward the thumb side,
    /// degrees, so the wrist ends beside the object as a real grasp does.
    pub side_angle_deg: f64,
    pub handedness: Handedness,
    /// Time the hand rests at the grasp point after arriving, seconds.
    #[serde(default)]
    pub dwell: f64,
}

impl TrajectorySpec {
    pub fn new(start: Point3, duration: f64, fps: f64) -> Self {
        Self {
            start,
            duration,
            fps,
            end_distance: None,
            side_angle_deg: 45.0,
            handedness: Handedness::Right,
            dwell: 0.0,
        }
    }

    /// Frames of the approach itself.
    pub fn frame_count(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }

    pub fn dwell_frames(&self) -> usize {
        (self.dwell.max(0.0) * self.fps).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub pos_sigma: f64,
    pub angle_sigma: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }
}

/// Where the wrist stops: `end_distance` from the target, on the start side,
/// swung by `side_angle_deg` about the vertical axis toward +x for a right
/// hand and -x for a left hand.
pub fn grasp_point(target: &Point3, traj: &TrajectorySpec, end_distance: f64) -> Point3 {
    let mut back = traj.start - target;
    back.y = 0.0;
    let back = if back.norm() > 1e-12 {
        back.normalize()
    } else {
        -Vector3::z()
    };
    let beta = match traj.handedness {
        Handedness::Right => traj.side_angle_deg,
        Handedness::Left => -traj.side_angle_deg,
    }
    .to_radians();
    let (s, c) = beta.sin_cos();
    let u = Vector3::new(back.x * c - back.z * s, 0.0, back.x * s + back.z * c);
    target + u * end_distance
}

/// Hand frame with fingers along `forward` and the back of the hand up
/// (camera -y).
fn hand_orientation(forward: &Vector3<f64>) -> Rotation3<f64> {
    let f = forward.normalize();
    let up = -Vector3::y();
    let mut back = up - f * up.dot(&f);
    if back.norm() < 1e-9 {
        back = Vector3::z() - f * f.z;
    }
    let back = back.normalize();
    let x = f.cross(&back);
    Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[x, f, back]))
}

/// Default contact layout for a gesture: index, middle and thumb bend touch
/// the object just past the final pose; the rest never do.
pub fn default_contact_angles(f: &GestureFunction) -> [f64; 6] {
    let fin = eval_gesture(f, f.d_end());
    let mut out = [0.0; 6];
    for (j, o) in out.iter_mut().enumerate() {
        let offset = if matches!(j, 2..=4) { 1.0 } else { 30.0 };
        *o = fin[j] + offset;
    }
    out
}

/// Synthesizes one reach-to-grasp episode toward `target_id`. The wrist moves
/// at constant speed from `trajectory.start` to the grasp point and rests
/// there for `trajectory.dwell`; hand angles follow `gesture` over the
/// noise-free distance.
pub fn generate_synthetic_episode(
    scene: &SceneSpec,
    target_id: &str,
    trajectory: &TrajectorySpec,
    gesture: &GestureFunction,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<EpisodeRecord> {
    let target = scene
        .get(target_id)
        .ok_or_else(|| EpisodeError::UnknownTarget(target_id.to_string()))?;
    let n = trajectory.frame_count();
    if !(trajectory.fps > 0.0) || n < 2 {
        return Err(EpisodeError::InvalidParameters(
            "need fps > 0 and at least 2 frames".into(),
        ));
    }
    if !(noise.pos_sigma >= 0.0 && noise.angle_sigma >= 0.0) {
        return Err(EpisodeError::InvalidParameters(
            "noise sigmas must be non-negative".into(),
        ));
    }
    let end_distance = trajectory.end_distance.unwrap_or(gesture.d_end());
    let goal = grasp_point(&target.position, trajectory, end_distance);
    let orientation = hand_orientation(&(goal - trajectory.start));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos_noise = Normal::new(0.0, noise.pos_sigma).expect("sigma checked");
    let angle_noise = Normal::new(0.0, noise.angle_sigma).expect("sigma checked");

    let camera = CameraIntrinsics::new(615.0, 615.0, 320.0, 240.0, 640, 480).expect("valid intrinsics");
    let objects: Vec<(ObjectObservation, PointCloud)> = scene
        .objects
        .iter()
        .map(|o| {
            let cloud = synthetic_object_cloud(&o.size, &o.position);
            let obs = ObjectObservation {
                id: o.id.clone(),
                class: o.class.clone(),
                bbox: projected_bbox(&cloud, &camera),
                position: o.position,
                cloud: None,
                contact_angles: Some(o.contact_angles),
            };
            (obs, cloud)
        })
        .collect();

    let total = n + trajectory.dwell_frames();
    let mut frames = Vec::with_capacity(total);
    for k in 0..total {
        let s = (k as f64 / (n - 1) as f64).min(1.0);
        let true_wrist = trajectory.start + (goal - trajectory.start) * s;
        let d = (true_wrist - target.position).norm();
        let mut wrist = true_wrist;
        if noise.pos_sigma > 0.0 {
            for c in wrist.iter_mut() {
                *c += pos_noise.sample(&mut rng);
            }
        }
        let mut angles = eval_gesture(gesture, d);
        if noise.angle_sigma > 0.0 {
            for j in 0..6 {
                angles[j] += angle_noise.sample(&mut rng);
            }
        }
        let keypoints = kinematics::synthesize_keypoints(&angles, &wrist, &orientation)?;
        let objs = objects
            .iter()
            .map(|(o, cloud)| {
                let mut o = o.clone();
                if k == 0 {
                    o.cloud = Some(Source::Inline(cloud.clone()));
                }
                o
            })
            .collect();
        frames.push(Frame {
            t: k as f64 / trajectory.fps,
            hand: HandObservation {
                keypoints: Some(keypoints),
                wrist,
                bbox: None,
            },
            objects: objs,
            depth: None,
        });
    }

    Ok(EpisodeRecord {
        meta: EpisodeMeta {
            episode_id: format!("{target_id}-{seed}"),
            handedness: trajectory.handedness,
            fps: trajectory.fps,
            object_class: Some(target.class.clone()),
            target_id: Some(target_id.to_string()),
        },
        camera,
        frames,
    })
}

fn projected_bbox(cloud: &PointCloud, cam: &CameraIntrinsics) -> Option<BoundingBox2D> {
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &cloud.points {
        let (u, v) = geometry::project(p, cam)?;
        u0 = u0.min(u);
        v0 = v0.min(v);
        u1 = u1.max(u);
        v1 = v1.max(v);
    }
    (u1 > u0 && v1 > v0).then(|| BoundingBox2D::new(u0, v0, u1 - u0, v1 - v0))
}

/// Quartic in normalized progress `s` (ascending coefficients) re-expressed
/// in distance, highest power first.
fn progress_to_distance(cs: [f64; 5], d_end: f64, d_start: f64) -> [f64; 5] {
    // s = a d + b, with s = 1 at d_end and 0 at d_start
    let a = 1.0 / (d_end - d_start);
    let b = -d_start * a;
    let mut asc = [0.0; 5];
    let mut power = [1.0, 0.0, 0.0, 0.0, 0.0]; // (a d + b)^k, ascending in d
    for (k, &c) in cs.iter().enumerate() {
        if k > 0 {
            let mut next = [0.0; 5];
            for i in 0..5 {
                next[i] += power[i] * b;
                if i + 1 < 5 {
                    next[i + 1] += power[i] * a;
                }
            }
            power = next;
        }
        for i in 0..5 {
            asc[i] += c * power[i];
        }
    }
    [asc[4], asc[3], asc[2], asc[1], asc[0]]
}

/// A plausible human grasp gesture for a catalog class: every DOF moves
/// monotonically from an open pose at 0.45 m to a class-specific closure
/// at the grasp distance.
pub fn reference_gesture(class: &str) -> Option<GestureFunction> {
    let idx = STANDARD_OBJECTS.iter().position(|(c, _)| *c == class)?;
    let extents = Vector3::from(STANDARD_OBJECTS[idx].1);
    // finger closure shrinks with object width
    let width = extents.x.min(extents.z);
    let closure = (80.0 - 350.0 * width).clamp(25.0, 75.0);
    let open = [12.0, 10.0, 8.0, 6.0];
    let profiles: [[f64; 5]; 4] = [
        [0.0, 1.0, 0.0, 0.0, 0.0],  // linear
        [0.0, 2.0, -1.0, 0.0, 0.0], // ease out
        [0.0, 0.0, 3.0, -2.0, 0.0], // smoothstep
        [0.0, 0.0, 1.0, 0.0, 0.0],  // ease in
    ];
    let d_end = 0.06 + width / 2.0;
    let d_start = 0.45;
    let mut coeffs = [[0.0; 5]; 6];
    for j in 0..6 {
        let (from, to) = match j {
            0..=3 => (open[j], closure + 4.0 * (3 - j) as f64 * 0.5 - 2.0 * (idx % 3) as f64),
            4 => (40.0, 62.0 + 0.5 * idx as f64),
            _ => (10.0, 28.0 - 0.5 * idx as f64),
        };
        let shape = profiles[(j + idx) % 4];
        let cs = shape.map(|c| c * (to - from));
        let mut cs = cs;
        cs[0] += from;
        coeffs[j] = progress_to_distance(cs, d_end, d_start);
    }
    GestureFunction::new(coeffs, d_end, d_start).ok()
}

/// Single-object modeling episode: the hand starts 0.45 m in front of the
/// object and closes on it over 1.5 s at 30 fps.
pub fn modeling_episode(class: &str, position: &Point3, noise: &NoiseSpec, seed: u64) -> Result<EpisodeRecord> {
    let gesture = reference_gesture(class)
        .ok_or_else(|| EpisodeError::InvalidScene(format!("unknown object class {class:?}")))?;
    let size = standard_extents(class).expect("class checked");
    let scene = SceneSpec {
        objects: vec![SceneObjectSpec {
            id: class.to_string(),
            class: class.to_string(),
            position: *position,
            size,
            contact_angles: default_contact_angles(&gesture),
        }],
        spacing: 0.0,
        layout_seed: 0,
    };
    let traj = TrajectorySpec::new(position - Vector3::new(0.0, 0.0, 0.45), 1.5, 30.0);
    let mut ep = generate_synthetic_episode(&scene, class, &traj, &gesture, noise, seed)?;
    ep.meta.episode_id = format!("model-{class}");
    Ok(ep)
}

/// One control tick as recorded for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFrame {
    pub t: f64,
    pub stage: Stage,
    pub wrist: Point3,
    /// Wrist to committed target, once there is one.
    pub distance: Option<f64>,
    pub commanded: AngleVector,
    pub actual: AngleVector,
    pub forces: [f64; 6],
    pub locked: [Option<LockReason>; 6],
    pub selected_target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceObject {
    pub id: String,
    pub class: String,
    pub position: Point3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub trial_id: usize,
    pub objects: Vec<TraceObject>,
    pub frames: Vec<TraceFrame>,
}

impl TrialTrace {
    pub fn wrist_track(&self) -> Vec<(f64, Point3)> {
        self.frames.iter().map(|f| (f.t, f.wrist)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trial_id: usize,
    pub spacing_m: Option<f64>,
    pub intended: String,
    pub estimated: Option<String>,
    pub intent_ok: bool,
    pub success: bool,
    pub duration_s: f64,
    pub r2_mean: Option<f64>,
    pub rmse_mean_deg: Option<f64>,
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "trial_id",
    "spacing_m",
    "intended",
    "estimated",
    "intent_ok",
    "success",
    "duration_s",
    "r2_mean",
    "rmse_mean_deg",
];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<TrialTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// `.csv` means CSV; anything else is JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

/// CSV carries the rows only; JSON also carries the traces.
pub fn export_report(report: &Report, path: &Path, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(report).expect("report serializes");
            fs::write(path, text).map_err(io_err(path))
        }
        ReportFormat::Csv => {
            let csv_err = |source| EpisodeError::Csv {
                path: path.to_path_buf(),
                source,
            };
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(path)
                .map_err(csv_err)?;
            w.write_record(REPORT_COLUMNS).map_err(csv_err)?;
            for row in &report.rows {
                w.serialize(row).map_err(csv_err)?;
            }
            w.flush().map_err(io_err(path))
        }
    }
}

pub fn load_report(path: &Path) -> Result<Report> {
    match ReportFormat::from_path(path) {
        ReportFormat::Json => read_json(path),
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(|source| EpisodeError::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            let rows = r
                .deserialize()
                .collect::<std::result::Result<Vec<ReportRow>, _>>()
                .map_err(|e| schema_err(path, e.to_string()))?;
            Ok(Report {
                rows,
                traces: Vec::new(),
            })
        }
    }
}
