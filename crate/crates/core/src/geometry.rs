//! Pinhole backprojection, object point-cloud extraction and cleanup, and
//! object size measurement.
//!
//! All positions are expressed in the camera frame of the first frame of an
//! episode: x right, y down, z forward, meters.

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 3D position in meters.
pub type Point3 = Vector3<f64>;

const KMEANS_MAX_ITERS: usize = 50;
const KMEANS_SHIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidCamera(&'static str),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("pixel ({u}, {v}) lies outside the image")]
    OutOfImage { u: f64, v: f64 },
    #[error("no valid depth pixel inside the region")]
    EmptyRegion,
    #[error("depth filter removed every point")]
    EmptyResult,
    #[error("need at least {k} points for k-means, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("non-finite point at index {0}")]
    NonFinitePoint(usize),
    #[error("depth map is {got_w}x{got_h} but camera is {want_w}x{want_h}")]
    DepthMapMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub px: f64,
    pub py: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, px: f64, py: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            px,
            py,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidCamera("focal lengths must be positive"));
        }
        if !(self.px >= 0.0 && self.px < self.width as f64) {
            return Err(GeometryError::InvalidCamera("px outside image width"));
        }
        if !(self.py >= 0.0 && self.py < self.height as f64) {
            return Err(GeometryError::InvalidCamera("py outside image height"));
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Axis-aligned image box, top-left corner plus size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox2D {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox2D {
    pub fn new(u: f64, v: f64, w: f64, h: f64) -> Self {
        Self { u, v, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.u + self.w / 2.0, self.v + self.h / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    /// Builds a cloud, rejecting non-finite points.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinitePoint(i));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Point3::zeros(), |acc, p| acc + p);
        Some(sum / self.points.len() as f64)
    }

    pub fn transformed(&self, rotation: &nalgebra::Matrix3<f64>, translation: &Point3) -> Self {
        Self {
            points: self.points.iter().map(|p| rotation * p + translation).collect(),
        }
    }

    pub fn translated(&self, offset: &Point3) -> Self {
        Self {
            points: self.points.iter().map(|p| p + offset).collect(),
        }
    }
}

/// Row-major per-pixel depth in meters; 0 marks a missing measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(GeometryError::InvalidArgument(
                "depth map value count does not match its dimensions",
            ));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, depth: f64) -> Self {
        Self {
            width,
            height,
            values: vec![depth; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, depth: f64) {
        self.values[v * self.width + u] = depth;
    }
}

/// Object size summary: axis-aligned extents, centroid, bounding-sphere radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeParams {
    pub extents: Vector3<f64>,
    pub radius: f64,
    pub centroid: Point3,
}

/// Maps pixel `(u, v)` with metric `depth` to a camera-frame point.
pub fn backproject(u: f64, v: f64, depth: f64, cam: &CameraIntrinsics) -> Result<Point3> {
    if !(depth > 0.0) {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    if !cam.contains(u, v) {
        return Err(GeometryError::OutOfImage { u, v });
    }
    Ok(Point3::new(
        (u - cam.px) / cam.fx * depth,
        (v - cam.py) / cam.fy * depth,
        depth,
    ))
}

/// Pinhole projection; `None` for points at or behind the camera.
pub fn project(p: &Point3, cam: &CameraIntrinsics) -> Option<(f64, f64)> {
    if !(p.z > 0.0) {
        return None;
    }
    Some((cam.fx * p.x / p.z + cam.px, cam.fy * p.y / p.z + cam.py))
}

/// Backprojects every valid pixel inside `bbox` (clamped to the image).
pub fn extract_region_cloud(depth_map: &DepthMap, bbox: &BoundingBox2D, cam: &CameraIntrinsics) -> Result<PointCloud> {
    if depth_map.width != cam.width || depth_map.height != cam.height {
        return Err(GeometryError::DepthMapMismatch {
            got_w: depth_map.width,
            got_h: depth_map.height,
            want_w: cam.width,
            want_h: cam.height,
        });
    }
    let u0 = bbox.u.floor().max(0.0);
    let v0 = bbox.v.floor().max(0.0);
    let u1 = (bbox.u + bbox.w).ceil().min(cam.width as f64);
    let v1 = (bbox.v + bbox.h).ceil().min(cam.height as f64);
    if u1 <= u0 || v1 <= v0 {
        return Err(GeometryError::EmptyRegion);
    }
    let mut points = Vec::new();
    for v in (v0 as usize)..(v1 as usize) {
        for u in (u0 as usize)..(u1 as usize) {
            let d = depth_map.get(u, v);
            if d > 0.0 && d.is_finite() {
                points.push(backproject(u as f64, v as f64, d, cam)?);
            }
        }
    }
    if points.is_empty() {
        return Err(GeometryError::EmptyRegion);
    }
    Ok(PointCloud { points })
}

/// Keeps points whose depth lies within twice the object width of the reference center.
pub fn depth_threshold_filter(cloud: &PointCloud, ref_center: &Point3, obj_width: f64) -> Result<PointCloud> {
    if !(obj_width > 0.0) {
        return Err(GeometryError::InvalidArgument("object width must be positive"));
    }
    let band = 2.0 * obj_width;
    let points: Vec<Point3> = cloud
        .points
        .iter()
        .filter(|p| (p.z - ref_center.z).abs() <= band)
        .copied()
        .collect();
    if points.is_empty() {
        return Err(GeometryError::EmptyResult);
    }
    Ok(PointCloud { points })
}

/// First-pass width estimate when no clean cloud exists yet: the box width
/// backprojected at the median depth of the region.
pub fn bootstrap_width(bbox: &BoundingBox2D, cam: &CameraIntrinsics, cloud: &PointCloud) -> Result<f64> {
    if cloud.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let mut depths: Vec<f64> = cloud.points.iter().map(|p| p.z).collect();
    depths.sort_by(|a, b| a.total_cmp(b));
    let n = depths.len();
    let median = if n % 2 == 1 {
        depths[n / 2]
    } else {
        0.5 * (depths[n / 2 - 1] + depths[n / 2])
    };
    Ok(bbox.w / cam.fx * median)
}

/// Result of a full k-means run.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub centroids: Vec<Point3>,
    pub labels: Vec<usize>,
    pub iterations: usize,
}

/// Lloyd's k-means with k-means++ seeding.
pub fn kmeans(cloud: &PointCloud, k: usize, seed: u64) -> Result<Clustering> {
    let n = cloud.len();
    if k == 0 {
        return Err(GeometryError::InvalidArgument("k must be at least 1"));
    }
    if n < k {
        return Err(GeometryError::TooFewPoints { n, k });
    }
    let pts = &cloud.points;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = Vec::with_capacity(k);
    centroids.push(pts[rng.gen_range(0..n)]);
    let mut d2: Vec<f64> = pts.iter().map(|p| (p - centroids[0]).norm_squared()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if r < *w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            // all remaining points coincide with chosen centroids
            rng.gen_range(0..n)
        };
        let c = pts[next];
        centroids.push(c);
        for (p, d) in pts.iter().zip(d2.iter_mut()) {
            *d = d.min((p - c).norm_squared());
        }
    }

    let mut labels = vec![0usize; n];
    let mut iterations = 0;
    for _ in 0..KMEANS_MAX_ITERS {
        iterations += 1;
        for (p, label) in pts.iter().zip(labels.iter_mut()) {
            *label = nearest_index(&centroids, p);
        }
        let mut sums = vec![Point3::zeros(); k];
        let mut counts = vec![0usize; k];
        for (p, &l) in pts.iter().zip(&labels) {
            sums[l] += p;
            counts[l] += 1;
        }
        let mut max_shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let updated = sums[c] / counts[c] as f64;
            max_shift = max_shift.max((updated - centroids[c]).norm());
            centroids[c] = updated;
        }
        if max_shift < KMEANS_SHIFT_TOL {
            break;
        }
    }
    for (p, label) in pts.iter().zip(labels.iter_mut()) {
        *label = nearest_index(&centroids, p);
    }
    Ok(Clustering {
        centroids,
        labels,
        iterations,
    })
}

fn nearest_index(centroids: &[Point3], p: &Point3) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Returns the k-means cluster whose centroid is nearest to `ref_point`.
pub fn kmeans_segment(cloud: &PointCloud, k: usize, ref_point: &Point3, seed: u64) -> Result<PointCloud> {
    let clustering = kmeans(cloud, k, seed)?;
    let chosen = nearest_index(&clustering.centroids, ref_point);
    let points: Vec<Point3> = cloud
        .points
        .iter()
        .zip(&clustering.labels)
        .filter(|(_, &l)| l == chosen)
        .map(|(p, _)| *p)
        .collect();
    if points.is_empty() {
        return Err(GeometryError::EmptyResult);
    }
    Ok(PointCloud { points })
}

pub fn object_size(cloud: &PointCloud) -> Result<SizeParams> {
    let centroid = cloud.centroid().ok_or(GeometryError::EmptyCloud)?;
    let mut lo = Point3::repeat(f64::INFINITY);
    let mut hi = Point3::repeat(f64::NEG_INFINITY);
    let mut radius: f64 = 0.0;
    for p in &cloud.points {
        lo = lo.inf(p);
        hi = hi.sup(p);
        radius = radius.max((p - centroid).norm());
    }
    Ok(SizeParams {
        extents: hi - lo,
        radius,
        centroid,
    })
}

/// Settings for [`clean_object_cloud`].
#[derive(Debug, Clone, Copy)]
pub struct CleanupConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for CleanupConfig {
    fn default() -> Self {
        Self { k: 2, seed: 0 }
    }
}

/// ROI crop, depth-band filter, and k-means segmentation in sequence.
///
/// `prior_width` is the object's width when already known; otherwise it is
/// bootstrapped from the box and the median region depth.
pub fn clean_object_cloud(
    depth_map: &DepthMap,
    bbox: &BoundingBox2D,
    cam: &CameraIntrinsics,
    object_center: &Point3,
    prior_width: Option<f64>,
    cfg: CleanupConfig,
) -> Result<PointCloud> {
    let region = extract_region_cloud(depth_map, bbox, cam)?;
    let width = match prior_width {
        Some(w) => w,
        None => bootstrap_width(bbox, cam, &region)?,
    };
    let banded = depth_threshold_filter(&region, object_center, width)?;
    if banded.len() < cfg.k {
        return Ok(banded);
    }
    kmeans_segment(&banded, cfg.k, object_center, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 1280, 960).unwrap()
    }

    #[test]
    fn backproject_examples() {
        let c = cam();
        assert_eq!(backproject(320.0, 240.0, 1.0, &c).unwrap(), Point3::new(0.0, 0.0, 1.0));
        assert_eq!(backproject(820.0, 240.0, 2.0, &c).unwrap(), Point3::new(2.0, 0.0, 2.0));
        assert_eq!(
            backproject(70.0, 490.0, 0.5, &c).unwrap(),
            Point3::new(-0.25, 0.25, 0.5)
        );
    }

    #[test]
    fn backproject_errors() {
        let c = cam();
        assert!(matches!(
            backproject(1.0, 1.0, 0.0, &c),
            Err(GeometryError::NonPositiveDepth(_))
        ));
        assert!(matches!(
            backproject(-1.0, 1.0, 1.0, &c),
            Err(GeometryError::OutOfImage { .. })
        ));
        assert!(matches!(
            backproject(1.0, 960.0, 1.0, &c),
            Err(GeometryError::OutOfImage { .. })
        ));
    }

    #[test]
    fn camera_invariants() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 1.0, 10, 10).is_err());
    }

    #[test]
    fn region_cloud_uniform_patch() {
        let c = cam();
        let dm = DepthMap::filled(c.width, c.height, 1.0);
        let cloud = extract_region_cloud(&dm, &BoundingBox2D::new(320.0, 240.0, 2.0, 2.0), &c).unwrap();
        assert_eq!(cloud.len(), 4);
        assert!(cloud.points.iter().all(|p| p.z == 1.0));
    }

    #[test]
    fn region_cloud_outside_image() {
        let c = cam();
        let dm = DepthMap::filled(c.width, c.height, 1.0);
        let r = extract_region_cloud(&dm, &BoundingBox2D::new(2000.0, 2000.0, 10.0, 10.0), &c);
        assert_eq!(r, Err(GeometryError::EmptyRegion));
    }

    #[test]
    fn region_cloud_skips_holes() {
        let c = cam();
        let mut dm = DepthMap::filled(c.width, c.height, 0.8);
        let bbox = BoundingBox2D::new(100.0, 100.0, 6.0, 4.0);
        for v in 100..104 {
            for u in 100..106 {
                if (u + v) % 2 == 0 {
                    dm.set(u, v, 0.0);
                }
            }
        }
        let mut expected = 0;
        for v in 100..104 {
            for u in 100..106 {
                if dm.get(u, v) > 0.0 {
                    expected += 1;
                }
            }
        }
        let cloud = extract_region_cloud(&dm, &bbox, &c).unwrap();
        assert_eq!(expected, 12);
        assert_eq!(cloud.len(), expected);
    }

    #[test]
    fn depth_filter_band() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.6), Point3::new(0.0, 0.0, 0.75)]).unwrap();
        let out = depth_threshold_filter(&cloud, &Point3::new(0.0, 0.0, 0.5), 0.1).unwrap();
        assert_eq!(out.points, vec![Point3::new(0.0, 0.0, 0.6)]);

        let flat = PointCloud::new(vec![Point3::new(1.0, 2.0, 0.5); 3]).unwrap();
        assert_eq!(
            depth_threshold_filter(&flat, &Point3::new(0.0, 0.0, 0.5), 0.1).unwrap(),
            flat
        );

        let far = PointCloud::new(vec![Point3::new(0.0, 0.0, 3.0)]).unwrap();
        assert_eq!(
            depth_threshold_filter(&far, &Point3::new(0.0, 0.0, 0.5), 0.1),
            Err(GeometryError::EmptyResult)
        );
    }

    #[test]
    fn depth_filter_mixed_cloud_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let center = Point3::new(0.0, 0.0, 1.0);
        let width = 0.05;
        let mut pts = Vec::new();
        for i in 0..100 {
            let z = if i < 30 {
                center.z + rng.gen_range(-0.099..0.099)
            } else if i % 2 == 0 {
                center.z + rng.gen_range(0.11..0.5)
            } else {
                center.z - rng.gen_range(0.11..0.5)
            };
            pts.push(Point3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), z));
        }
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let brute: Vec<Point3> = pts.iter().filter(|p| (p.z - 1.0).abs() <= 0.1).copied().collect();
        assert_eq!(brute.len(), 30);
        let out = depth_threshold_filter(&cloud, &center, width).unwrap();
        assert_eq!(out.points, brute);
    }

    #[test]
    fn kmeans_single_cluster_is_identity() {
        let cloud = PointCloud::new((0..10).map(|i| Point3::new(i as f64, 0.0, 1.0)).collect()).unwrap();
        let out = kmeans_segment(&cloud, 1, &Point3::zeros(), 3).unwrap();
        assert_eq!(out, cloud);
    }

    #[test]
    fn kmeans_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let centers = [Point3::new(0.0, 0.0, 0.5), Point3::new(0.0, 0.0, 1.5)];
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for i in 0..200 {
            let c = centers[i % 2];
            pts.push(c + Point3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)));
        }
        // oracle: assign by distance to the generating centers
        for p in &pts {
            truth.push(((p - centers[0]).norm() < (p - centers[1]).norm(), *p));
        }
        let near: Vec<Point3> = truth.iter().filter(|(n, _)| *n).map(|(_, p)| *p).collect();
        let cloud = PointCloud::new(pts).unwrap();
        let out = kmeans_segment(&cloud, 2, &Point3::new(0.0, 0.0, 0.5), 42).unwrap();
        assert_eq!(out.points, near);
    }

    #[test]
    fn kmeans_too_few_points() {
        let cloud = PointCloud::new(vec![Point3::zeros()]).unwrap();
        assert_eq!(
            kmeans_segment(&cloud, 2, &Point3::zeros(), 0),
            Err(GeometryError::TooFewPoints { n: 1, k: 2 })
        );
    }

    #[test]
    fn object_size_examples() {
        let mut corners = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    corners.push(Point3::new(x, y, z));
                }
            }
        }
        let s = object_size(&PointCloud::new(corners).unwrap()).unwrap();
        assert_eq!(s.extents, Vector3::new(1.0, 1.0, 1.0));
        assert_relative_eq!(s.radius, 3f64.sqrt() / 2.0, epsilon = 1e-15);

        let single = object_size(&PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)]).unwrap()).unwrap();
        assert_eq!(single.extents, Vector3::zeros());
        assert_eq!(single.radius, 0.0);

        assert_eq!(object_size(&PointCloud::default()), Err(GeometryError::EmptyCloud));
    }

    #[test]
    fn object_size_random_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = [0.2, 0.1, 0.1];
        let pts: Vec<Point3> = (0..100)
            .map(|_| {
                Point3::new(
                    rng.gen_range(0.0..dims[0]),
                    rng.gen_range(0.0..dims[1]),
                    rng.gen_range(0.0..dims[2]),
                )
            })
            .collect();
        let s = object_size(&PointCloud::new(pts.clone()).unwrap()).unwrap();
        for axis in 0..3 {
            let lo = pts.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(s.extents[axis], hi - lo);
            assert!(s.extents[axis] <= dims[axis]);
        }
    }

    #[test]
    fn cleanup_pipeline_drops_background() {
        let c = CameraIntrinsics::new(500.0, 500.0, 64.0, 48.0, 128, 96).unwrap();
        let mut dm = DepthMap::filled(128, 96, 2.0);
        for v in 40..56 {
            for u in 56..72 {
                dm.set(u, v, 0.6);
            }
        }
        // table surface behind the object, inside the depth band
        for v in 58..62 {
            for u in 50..78 {
                dm.set(u, v, 0.66);
            }
        }
        let bbox = BoundingBox2D::new(50.0, 34.0, 28.0, 28.0);
        let center = backproject(64.0, 48.0, 0.6, &c).unwrap();
        let cloud = clean_object_cloud(&dm, &bbox, &c, &center, None, CleanupConfig::default()).unwrap();
        assert_eq!(cloud.len(), 256);
        assert!(cloud.points.iter().all(|p| p.z == 0.6));
    }

    proptest! {
        #[test]
        fn project_backproject_round_trip(x in -1.0..1.0f64, y in -1.0..1.0f64, z in 0.5..5.0f64) {
            let c = cam();
            let p = Point3::new(x, y, z);
            let (u, v) = project(&p, &c).unwrap();
            prop_assume!(c.contains(u, v));
            let q = backproject(u, v, z, &c).unwrap();
            prop_assert!((p - q).norm() < 1e-9);
        }

        #[test]
        fn depth_filter_subset_and_idempotent(zs in proptest::collection::vec(0.1..3.0f64, 1..60), w in 0.01..0.5f64) {
            let cloud = PointCloud::new(zs.iter().map(|z| Point3::new(0.0, 0.0, *z)).collect()).unwrap();
            let center = Point3::new(0.0, 0.0, 1.0);
            if let Ok(once) = depth_threshold_filter(&cloud, &center, w) {
                prop_assert!(once.points.iter().all(|p| cloud.points.contains(p)));
                let twice = depth_threshold_filter(&once, &center, w).unwrap();
                prop_assert_eq!(once, twice);
            }
        }

        #[test]
        fn kmeans_deterministic_and_complete(
            pts in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.1..2.0f64), 3..80),
            k in 1usize..4,
            seed in any::<u64>(),
        ) {
            let cloud = PointCloud::new(pts.iter().map(|(x, y, z)| Point3::new(*x, *y, *z)).collect()).unwrap();
            let a = kmeans(&cloud, k, seed).unwrap();
            let b = kmeans(&cloud, k, seed).unwrap();
            prop_assert_eq!(&a.labels, &b.labels);
            let mut counts = vec![0usize; k];
            for l in &a.labels { counts[*l] += 1; }
            prop_assert_eq!(counts.iter().sum::<usize>(), cloud.len());
        }

        #[test]
        fn object_size_order_and_translation(
            pts in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..40),
            shift in (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64),
        ) {
            let mut points: Vec<Point3> = pts.iter().map(|(x, y, z)| Point3::new(*x, *y, *z)).collect();
            let s = object_size(&PointCloud::new(points.clone()).unwrap()).unwrap();
            points.reverse();
            let off = Point3::new(shift.0, shift.1, shift.2);
            let moved: Vec<Point3> = points.iter().map(|p| p + off).collect();
            let t = object_size(&PointCloud::new(moved).unwrap()).unwrap();
            prop_assert!((s.extents - t.extents).norm() < 1e-9);
            prop_assert!((s.radius - t.radius).abs() < 1e-9);
            prop_assert!(s.radius + 1e-12 >= s.extents.max() / 2.0);
        }
    }
}
