//! Library entry validation by cloud registration: a moved copy of the
//! modeled object passes the gate, a twice-as-large object of the same class
//! is rejected.
//!
//! cargo run --example registration

use handgrasp::episode::{standard_extents, synthetic_object_cloud};
use handgrasp::geometry::{self, Point3};
use handgrasp::gesture::{self, GestureError, GestureLibrary, GestureLibraryEntry};
use handgrasp::intent::register_clouds;
use nalgebra::{Rotation3, Vector3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = synthetic_object_cloud(&standard_extents("bottle").expect("catalog class"), &Point3::zeros());
    let function = handgrasp::episode::reference_gesture("bottle").expect("catalog class");
    let mut lib = GestureLibrary::new();
    lib.insert(GestureLibraryEntry::new(
        "bottle",
        geometry::object_size(&model)?,
        Some(model.clone()),
        function,
    )?);

    let rotation = Rotation3::from_euler_angles(0.3, -0.5, 1.1);
    let moved = model.transformed(rotation.matrix(), &Vector3::new(0.12, -0.05, 0.8));
    let reg = register_clouds(&model, &moved)?;
    // a box has several poses that fit equally well, so compare alignment, not angles
    println!(
        "moved copy: applied {:.2} deg, recovered {:.2} deg, RMSE {:.2e} m after {} ICP iterations",
        rotation.angle().to_degrees(),
        reg.transform.rotation_angle().to_degrees(),
        reg.rmse,
        reg.icp_history.len() - 1
    );
    let size = geometry::object_size(&moved)?;
    let entry = gesture::library_lookup(&lib, "bottle", &size, &moved)?;
    println!("lookup accepted entry for {:?}", entry.object_class);

    let doubled = geometry::PointCloud::new(moved.points.iter().map(|p| p * 2.0).collect())?;
    let size = geometry::object_size(&doubled)?;
    match gesture::library_lookup(&lib, "bottle", &size, &doubled) {
        Err(e @ GestureError::GestureMismatch { .. }) => println!("scaled x2: {e}"),
        other => println!("scaled x2: unexpected {other:?}"),
    }
    Ok(())
}
