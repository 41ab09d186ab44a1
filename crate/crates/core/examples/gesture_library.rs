//! Builds a gesture library from synthetic modeling episodes, saves and
//! reloads it, and evaluates one entry along the approach.
//!
//! cargo run --example gesture_library -- [out_dir]

use handgrasp::episode::{self, NoiseSpec};
use handgrasp::geometry::Point3;
use handgrasp::gesture::{self, degree_of_completion, eval_gesture};
use handgrasp::harness;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let noise = NoiseSpec {
        pos_sigma: 0.0,
        angle_sigma: 1.0,
    };
    let episodes = episode::STANDARD_OBJECTS
        .iter()
        .enumerate()
        .map(|(k, (class, _))| episode::modeling_episode(class, &Point3::new(0.0, 0.2, 0.75), &noise, k as u64))
        .collect::<Result<Vec<_>, _>>()?;

    let (lib, built) = harness::build_library(&episodes)?;
    println!("{:<10} {:>8} {:>8}  fit RMS deg", "class", "d_end", "d_start");
    for (entry, b) in lib.entries.iter().zip(&built) {
        let rms = b.residuals.iter().sum::<f64>() / 6.0;
        println!(
            "{:<10} {:>8.3} {:>8.3}  {rms:.2}",
            entry.object_class,
            entry.function.d_end(),
            entry.function.d_start()
        );
    }

    let path = out.join("handgrasp_library.json");
    gesture::save_library(&lib, &path)?;
    let reloaded = gesture::load_library(&path)?;
    println!("saved and reloaded {} entries at {}", reloaded.len(), path.display());

    let cup = &reloaded
        .entries
        .iter()
        .find(|e| e.object_class == "cup")
        .expect("cup modeled")
        .function;
    println!(
        "\ncup gesture  {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "DoC %", "p", "r", "m", "i", "tb", "tr"
    );
    for k in 0..=4 {
        let d = cup.d_start() + (cup.d_end() - cup.d_start()) * k as f64 / 4.0;
        let a = eval_gesture(cup, d);
        let doc = degree_of_completion(cup.d_start(), d, cup.d_end())?;
        println!(
            "D={d:.3} m  {:>6.0} {:>6.1} {:>6.1} {:>6.1} {:>6.1} {:>6.1} {:>6.1}",
            doc, a[0], a[1], a[2], a[3], a[4], a[5]
        );
    }
    Ok(())
}
