//! Multi-object intent estimation at the four object spacings, trajectory
//! regression against the sphere-proximity baseline.
//!
//! cargo run --release --example intent_sweep -- [pos_sigma_m] [trials] [sphere_radius_m] [min_track_span_m] [side_angle_deg] [seed]

use handgrasp::harness::{intent_sweep, SweepConfig};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut cfg = SweepConfig::default();
    cfg.scenario.noise.pos_sigma = args.first().copied().unwrap_or(0.005);
    cfg.trials_per_spacing = args.get(1).map_or(200, |n| *n as usize);
    if let Some(r) = args.get(2) {
        cfg.sphere_radius = *r;
    }
    if let Some(s) = args.get(3) {
        cfg.min_track_span = *s;
    }
    if let Some(a) = args.get(4) {
        cfg.scenario.side_angle_deg = *a;
    }
    if let Some(seed) = args.get(5) {
        cfg.seed = *seed as u64;
    }

    println!(
        "wrist noise {:.1} mm, {} trials per spacing, sphere radius {:.2} m",
        cfg.scenario.noise.pos_sigma * 1e3,
        cfg.trials_per_spacing,
        cfg.sphere_radius
    );
    println!(
        "{:>9} {:>10} {:>10} {:>13}",
        "spacing", "MTR-GIE %", "sphere %", "commit frame"
    );
    for r in intent_sweep(&cfg).expect("sweep runs") {
        let frames: Vec<f64> = r
            .trials
            .iter()
            .filter_map(|t| t.commit_frame)
            .map(|f| f as f64)
            .collect();
        let mean_frame = frames.iter().sum::<f64>() / frames.len().max(1) as f64;
        println!(
            "{:>8.2}m {:>10.2} {:>10.2} {:>13.1}",
            r.spacing,
            r.accuracy(),
            r.baseline_accuracy(),
            mean_frame
        );
    }
}
