//! Segments an object from a synthetic depth frame: ROI crop, depth band,
//! then 2-means, and prints the size parameters before and after cleanup.
//!
//! cargo run --example depth_cleanup

use handgrasp::geometry::{self, BoundingBox2D, CameraIntrinsics, CleanupConfig, DepthMap, Point3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cam = CameraIntrinsics::new(615.0, 615.0, 320.0, 240.0, 640, 480)?;
    let mut depth = DepthMap::filled(640, 480, 2.5);

    // table top behind the object, then the cup's front face
    for v in 300..480 {
        for u in 0..640 {
            depth.set(u, v, 0.95);
        }
    }
    let center = Point3::new(0.0, 0.05, 0.8);
    let (half_w, half_h) = (0.04, 0.05);
    let (u0, v0) = geometry::project(&(center - nalgebra::Vector3::new(half_w, half_h, 0.0)), &cam).unwrap();
    let (u1, v1) = geometry::project(&(center + nalgebra::Vector3::new(half_w, half_h, 0.0)), &cam).unwrap();
    for v in v0 as usize..v1 as usize {
        for u in u0 as usize..u1 as usize {
            depth.set(u, v, center.z);
        }
    }

    // detector box with a loose margin so it catches table and background
    let bbox = BoundingBox2D::new(u0 - 25.0, v0 - 25.0, u1 - u0 + 50.0, v1 - v0 + 70.0);
    let raw = geometry::extract_region_cloud(&depth, &bbox, &cam)?;
    let clean = geometry::clean_object_cloud(&depth, &bbox, &cam, &center, None, CleanupConfig::default())?;

    for (name, cloud) in [("raw box", &raw), ("cleaned", &clean)] {
        let size = geometry::object_size(cloud)?;
        println!(
            "{name:>8}: {:>6} points, extents {:.3} x {:.3} x {:.3} m, radius {:.3} m",
            cloud.len(),
            size.extents.x,
            size.extents.y,
            size.extents.z,
            size.radius
        );
    }
    Ok(())
}
