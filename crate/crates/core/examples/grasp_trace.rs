//! One simulated reach-to-grasp with a lagged hand: prints stage changes,
//! per-DOF lock events, and the anthropomorphism of the executed gesture.
//!
//! cargo run --example grasp_trace -- [time_constant_s]

use handgrasp::controller::ControllerConfig;
use handgrasp::episode::{self, NoiseSpec, SceneSpec};
use handgrasp::geometry::Point3;
use handgrasp::harness::{self, ScenarioConfig, SimConfig, TrialPlan};
use handgrasp::kinematics::Dof;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tau: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.1);
    let classes = ["cup", "bowl", "bottle"];
    let episodes = classes
        .iter()
        .map(|c| episode::modeling_episode(c, &Point3::new(0.0, 0.25, 0.75), &NoiseSpec::none(), 0))
        .collect::<Result<Vec<_>, _>>()?;
    let (lib, _) = harness::build_library(&episodes)?;

    let contact = |c: &str| episode::default_contact_angles(harness::library_function(&lib, c).expect("modeled"));
    let scene = SceneSpec::row(&classes, 0.2, &Point3::new(0.0, 0.25, 0.8), contact, 3)?;
    let target = scene.objects[1].id.clone();
    let plan = TrialPlan {
        trial_id: 0,
        target_id: target.clone(),
        start: Point3::new(0.0, 0.25, 0.35),
        seed: 7,
    };
    let scenario = ScenarioConfig::default();
    let class = &scene.get(&target).expect("in scene").class;
    let ep = harness::trial_episode(&scene, &plan, harness::library_function(&lib, class)?, &scenario)?;

    let cfg = SimConfig {
        controller: ControllerConfig {
            actuator_time_constant: tau,
            ..ControllerConfig::default()
        }
        .with_library_standby(&lib),
        ..SimConfig::default()
    };
    let out = harness::run_episode(&ep, &lib, &cfg, 0, Some(scene.spacing))?;

    println!("target {target} ({class}), actuator time constant {tau} s");
    let mut prev = None;
    let mut locked = [None; 6];
    for f in &out.trace.frames {
        if prev != Some(f.stage) {
            let d = f.distance.map_or(String::from("-"), |d| format!("{d:.3} m"));
            println!(
                "t={:.3}s  stage {:?}  D={d}  selected {:?}",
                f.t, f.stage, f.selected_target
            );
            prev = Some(f.stage);
        }
        for dof in Dof::ALL {
            let j = dof.index();
            if locked[j].is_none() && f.locked[j].is_some() {
                locked[j] = f.locked[j];
                println!(
                    "t={:.3}s    lock {:>2} at {:.2} deg, {:.2} N ({:?})",
                    f.t,
                    dof.key(),
                    f.actual[j],
                    f.forces[j],
                    f.locked[j].expect("just locked")
                );
            }
        }
    }
    let row = &out.row;
    println!("success {}, duration {:.2} s", row.success, row.duration_s);
    if let Some(a) = out.anthropomorphism {
        println!(
            "R2 {:.4}, RMSE {:.3} deg over {} grasping ticks",
            a.r2_mean,
            a.rmse_mean,
            out.grasp_samples.len()
        );
    }
    Ok(())
}
