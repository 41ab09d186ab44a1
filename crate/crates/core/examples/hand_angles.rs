//! Round trip between the six hand angles and 21 keypoints: synthesize a
//! hand at a known pose, then recover the palm plane and the angle vector.
//!
//! cargo run --example hand_angles

use handgrasp::geometry::Point3;
use handgrasp::kinematics::{self, AngleVector, Dof};
use nalgebra::{Rotation3, Vector3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = AngleVector([35.0, 48.0, 62.0, 70.0, 55.0, 22.0]);
    let wrist = Point3::new(0.05, 0.1, 0.5);
    let orientation =
        Rotation3::from_axis_angle(&Vector3::y_axis(), 0.4) * Rotation3::from_axis_angle(&Vector3::x_axis(), -0.2);

    let kp = kinematics::synthesize_keypoints(&truth, &wrist, &orientation)?;
    let plane = kinematics::fit_palm_plane(&kp)?;
    let recovered = kinematics::extract_angle_vector(&kp)?;

    println!("palm normal {:.4?}", plane.normal.as_slice());
    println!("{:>6} {:>9} {:>11}", "dof", "truth", "recovered");
    for dof in Dof::ALL {
        println!("{:>6} {:>9.3} {:>11.3}", dof.key(), truth.get(dof), recovered.get(dof));
    }
    Ok(())
}
