//! Batch simulation on one scene: trials in parallel, a CSV and a JSON
//! report, and the grouped Acc / Suc / duration / anthropomorphism summary
//! with the sphere baseline.
//!
//! cargo run --release --example scene_report -- [trials] [spacing_m] [out_dir]

use handgrasp::controller::ControllerConfig;
use handgrasp::episode::{self, NoiseSpec, ReportFormat, SceneSpec};
use handgrasp::geometry::Point3;
use handgrasp::harness::{self, ScenarioConfig, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(100);
    let spacing: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.2);
    let out = args
        .next()
        .map(std::path::PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);

    let episodes = episode::STANDARD_OBJECTS
        .iter()
        .map(|(c, _)| episode::modeling_episode(c, &Point3::new(0.0, 0.25, 0.75), &NoiseSpec::none(), 0))
        .collect::<Result<Vec<_>, _>>()?;
    let (lib, _) = harness::build_library(&episodes)?;

    let contact = |c: &str| episode::default_contact_angles(harness::library_function(&lib, c).expect("modeled"));
    let scene = SceneSpec::row(
        &["apple", "pitcher", "mouse"],
        spacing,
        &Point3::new(0.0, 0.25, 0.8),
        contact,
        1,
    )?;
    let scenario = ScenarioConfig {
        noise: NoiseSpec {
            pos_sigma: 0.005,
            angle_sigma: 1.0,
        },
        ..ScenarioConfig::default()
    };
    let cfg = SimConfig {
        controller: ControllerConfig::default().with_library_standby(&lib),
        ..SimConfig::default()
    };
    let report = harness::report_from(harness::run_scene_trials(&scene, &lib, &cfg, &scenario, trials, 42)?);

    let csv = out.join("handgrasp_report.csv");
    let json = out.join("handgrasp_report.json");
    episode::export_report(&report, &csv, ReportFormat::Csv)?;
    episode::export_report(&report, &json, ReportFormat::Json)?;
    println!("wrote {} and {}", csv.display(), json.display());

    for g in harness::summarize(&report, true, Some(0.15))? {
        println!(
            "spacing {:.2} m, {} trials: Acc {:.2}%, Suc {:.2}%, duration {} s, R2 {}, RMSE {} deg, sphere baseline {:.2}%",
            g.spacing.unwrap_or(f64::NAN),
            g.trials,
            g.accuracy,
            g.success_rate,
            g.duration,
            g.r2.map_or("-".into(), |m| format!("{m:.3}")),
            g.rmse.map_or("-".into(), |m| format!("{m:.2}")),
            g.baseline_accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
