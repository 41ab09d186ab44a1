//! Hand keypoints to grasp angles.
//!
//! Keypoint ordering is the common 21-point layout: 0 wrist, 1-4 thumb
//! (CMC to tip), 5-8 index (MCP to tip), 9-12 middle, 13-16 ring, 17-20 pinky.

use std::ops::{Index, IndexMut};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox2D, Point3};

pub const NUM_KEYPOINTS: usize = 21;
pub const PALM_KEYPOINTS: [usize; 5] = [0, 5, 9, 13, 17];
const SINGULAR_EPS: f64 = 1e-9;
const SEGMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("expected {NUM_KEYPOINTS} keypoints, got {0}")]
    WrongArity(usize),
    #[error("keypoint {0} is not finite")]
    NonFiniteKeypoint(usize),
    #[error("degenerate bounding box ({w} x {h})")]
    DegenerateBox { w: f64, h: f64 },
    #[error("palm keypoints are collinear")]
    CollinearPalm,
    #[error("keypoints {from} and {to} coincide")]
    ZeroLengthSegment { from: usize, to: usize },
    #[error("thumb pose infeasible: bend {bend} deg cannot coexist with rotation {rotation} deg")]
    InfeasibleThumb { bend: f64, rotation: f64 },
}

pub type Result<T> = std::result::Result<T, KinematicsError>;

/// The six controlled degrees of freedom, in library order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dof {
    Pinky,
    Ring,
    Middle,
    Index,
    ThumbBend,
    ThumbRotation,
}

impl Dof {
    pub const ALL: [Dof; 6] = [
        Dof::Pinky,
        Dof::Ring,
        Dof::Middle,
        Dof::Index,
        Dof::ThumbBend,
        Dof::ThumbRotation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short key used in library and report files.
    pub fn key(self) -> &'static str {
        match self {
            Dof::Pinky => "p",
            Dof::Ring => "r",
            Dof::Middle => "m",
            Dof::Index => "i",
            Dof::ThumbBend => "tb",
            Dof::ThumbRotation => "tr",
        }
    }
}

/// Grasp angle vector in degrees: `[p, r, m, i, tb, tr]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngleVector(pub [f64; 6]);

impl AngleVector {
    pub fn splat(v: f64) -> Self {
        Self([v; 6])
    }

    pub fn get(&self, dof: Dof) -> f64 {
        self.0[dof.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.map(f))
    }
}

impl Index<usize> for AngleVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for AngleVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point3>", into = "Vec<Point3>")]
pub struct HandKeypoints {
    pub joints: [Point3; NUM_KEYPOINTS],
}

impl HandKeypoints {
    pub fn new(joints: [Point3; NUM_KEYPOINTS]) -> Result<Self> {
        if let Some(i) = joints.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(KinematicsError::NonFiniteKeypoint(i));
        }
        Ok(Self { joints })
    }

    pub fn wrist(&self) -> Point3 {
        self.joints[0]
    }

    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Point3, scale: f64) -> Self {
        Self {
            joints: self.joints.map(|p| rotation * (p * scale) + translation),
        }
    }
}

impl TryFrom<Vec<Point3>> for HandKeypoints {
    type Error = KinematicsError;

    fn try_from(v: Vec<Point3>) -> Result<Self> {
        let n = v.len();
        let joints: [Point3; NUM_KEYPOINTS] = v.try_into().map_err(|_| KinematicsError::WrongArity(n))?;
        Self::new(joints)
    }
}

impl From<HandKeypoints> for Vec<Point3> {
    fn from(k: HandKeypoints) -> Self {
        k.joints.to_vec()
    }
}

/// Plane `{p : normal . p = offset}` with the normal out of the back of the hand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PalmPlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl PalmPlane {
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Squares a hand box on its longest side, keeping the centroid.
pub fn reshape_bbox(bbox: &BoundingBox2D) -> Result<BoundingBox2D> {
    if !(bbox.w > 0.0 && bbox.h > 0.0) {
        return Err(KinematicsError::DegenerateBox { w: bbox.w, h: bbox.h });
    }
    let side = bbox.w.max(bbox.h);
    let (cu, cv) = bbox.center();
    Ok(BoundingBox2D::new(cu - side / 2.0, cv - side / 2.0, side, side))
}

/// Total-least-squares plane through keypoints 0, 5, 9, 13, 17.
pub fn fit_palm_plane(kp: &HandKeypoints) -> Result<PalmPlane> {
    let pts: Vec<Point3> = PALM_KEYPOINTS.iter().map(|&i| kp.joints[i]).collect();
    let centroid = pts.iter().fold(Point3::zeros(), |a, p| a + p) / pts.len() as f64;
    let centered = nalgebra::OMatrix::<f64, nalgebra::U5, nalgebra::U3>::from_fn(|r, c| pts[r][c] - centroid[c]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.ok_or(KinematicsError::CollinearPalm)?;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    if !(svd.singular_values[order[0]] > SINGULAR_EPS && svd.singular_values[order[1]] > SINGULAR_EPS) {
        return Err(KinematicsError::CollinearPalm);
    }
    let mut normal: Vector3<f64> = v_t.row(order[2]).transpose().normalize();
    let back = (kp.joints[5] - kp.joints[0]).cross(&(kp.joints[17] - kp.joints[0]));
    if normal.dot(&back) < 0.0 {
        normal = -normal;
    }
    Ok(PalmPlane {
        normal,
        offset: normal.dot(&centroid),
    })
}

fn segment(kp: &HandKeypoints, from: usize, to: usize) -> Result<Vector3<f64>> {
    let s = kp.joints[to] - kp.joints[from];
    if s.norm() < SEGMENT_EPS {
        return Err(KinematicsError::ZeroLengthSegment { from, to });
    }
    Ok(s)
}

/// Elevation of `s` out of the plane, positive toward the palm side.
fn plane_angle_deg(s: &Vector3<f64>, normal: &Vector3<f64>) -> f64 {
    let along = s.dot(normal);
    let mag = (along.abs() / s.norm()).min(1.0).asin().to_degrees();
    if along > 0.0 {
        -mag
    } else {
        mag
    }
}

fn axis_angle_deg(s: &Vector3<f64>, axis: &Vector3<f64>) -> f64 {
    (s.dot(axis) / (s.norm() * axis.norm()))
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees()
}

pub fn extract_angle_vector(kp: &HandKeypoints) -> Result<AngleVector> {
    let plane = fit_palm_plane(kp)?;
    let n = plane.normal;
    let finger = |mcp: usize, tip: usize| -> Result<f64> { Ok(plane_angle_deg(&segment(kp, mcp, tip)?, &n)) };
    let thumb = segment(kp, 1, 4)?;
    let axis = segment(kp, 1, 5)?;
    Ok(AngleVector([
        finger(17, 20)?,
        finger(13, 16)?,
        finger(9, 12)?,
        finger(5, 8)?,
        axis_angle_deg(&thumb, &axis),
        plane_angle_deg(&thumb, &n),
    ]))
}

/// Canonical right-hand template in a local frame: palm in the XY plane,
/// fingers along +Y, back of the hand toward +Z.
struct Template {
    mcp: [(usize, Point3, f64); 4],
    thumb_base: Point3,
    thumb_len: f64,
}

const TEMPLATE: Template = Template {
    // (mcp keypoint, mcp position, MCP-to-tip length); order p, r, m, i
    mcp: [
        (17, Point3::new(-0.030, 0.080, 0.0), 0.060),
        (13, Point3::new(-0.010, 0.090, 0.0), 0.075),
        (9, Point3::new(0.010, 0.095, 0.0), 0.080),
        (5, Point3::new(0.030, 0.090, 0.0), 0.070),
    ],
    thumb_base: Point3::new(0.025, 0.025, 0.0),
    thumb_len: 0.060,
};

/// Builds a keypoint set whose extracted angles equal `angles`, placed with
/// the wrist at `wrist` and the template frame rotated by `orientation`.
///
/// Finger bends must lie in [-90, 90]. The thumb pair must satisfy
/// `|cos(bend)| <= cos(rotation)`.
pub fn synthesize_keypoints(
    angles: &AngleVector,
    wrist: &Point3,
    orientation: &Rotation3<f64>,
) -> Result<HandKeypoints> {
    let y = Vector3::y();
    let palmar = -Vector3::z();
    let mut local = [Point3::zeros(); NUM_KEYPOINTS];

    for (k, &(mcp_idx, mcp, len)) in TEMPLATE.mcp.iter().enumerate() {
        let a = angles[k].to_radians();
        let dir = y * a.cos() + palmar * a.sin();
        for j in 0..4 {
            local[mcp_idx + j] = mcp + dir * (len * j as f64 / 3.0);
        }
    }

    let bend = angles.get(Dof::ThumbBend);
    let rot = angles.get(Dof::ThumbRotation);
    let (tb, tr) = (bend.to_radians(), rot.to_radians());
    let axis = (TEMPLATE.mcp[3].1 - TEMPLATE.thumb_base).normalize();
    let outward = Vector3::new(axis.y, -axis.x, 0.0);
    let cos_phi = tb.cos() / tr.cos();
    if !(cos_phi.abs() <= 1.0 + 1e-12) || tr.cos() <= 0.0 {
        return Err(KinematicsError::InfeasibleThumb { bend, rotation: rot });
    }
    let cos_phi = cos_phi.clamp(-1.0, 1.0);
    let sin_phi = (1.0 - cos_phi * cos_phi).sqrt();
    let in_plane = axis * cos_phi + outward * sin_phi;
    let dir = in_plane * tr.cos() + palmar * tr.sin();
    for j in 0..4 {
        local[1 + j] = TEMPLATE.thumb_base + dir * (TEMPLATE.thumb_len * j as f64 / 3.0);
    }

    let r = orientation.matrix();
    HandKeypoints::new(local.map(|p| r * p + wrist))
}
