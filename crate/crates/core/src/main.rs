use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use handgrasp::controller::ControllerConfig;
use handgrasp::episode::{self, EpisodeError, NoiseSpec, ReportFormat, SceneSpec};
use handgrasp::geometry::Point3;
use handgrasp::gesture::{self, GestureError};
use handgrasp::harness::{self, HarnessError, ScenarioConfig, SimConfig};
use handgrasp::intent::Handedness;

#[derive(Parser)]
#[command(name = "handgrasp", version, about = "Gesture library building and grasp simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupBy {
    Spacing,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Sphere,
    None,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one gesture function per modeling episode in a directory.
    BuildLibrary {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Run the grasp controller on one episode or on random scene trials.
    Simulate {
        #[arg(long, conflicts_with_all = ["scene", "trials"])]
        episode: Option<PathBuf>,
        #[arg(long, requires = "trials")]
        scene: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        library: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        #[arg(long, default_value = "right")]
        handedness: Handedness,
        /// Wrist position noise of synthetic trials, meters.
        #[arg(long, default_value_t = 0.0)]
        pos_sigma: f64,
        /// Hand angle noise of synthetic trials, degrees.
        #[arg(long, default_value_t = 0.0)]
        angle_sigma: f64,
        /// First-order actuator lag, seconds.
        #[arg(long, default_value_t = ControllerConfig::default().actuator_time_constant)]
        time_constant: f64,
    },
    /// Print Acc, Suc, duration and anthropomorphism per group.
    Evaluate {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "spacing")]
        group_by: GroupBy,
        #[arg(long, value_enum, default_value = "none")]
        baseline: Baseline,
        #[arg(long, default_value_t = 0.15)]
        sphere_radius: f64,
    },
    /// Write synthetic modeling episodes for the eight catalog objects.
    GenModeling {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        pos_sigma: f64,
        #[arg(long, default_value_t = 0.0)]
        angle_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a scene spec with catalog objects in a row.
    GenScene {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        spacing: f64,
        #[arg(long, value_delimiter = ',', default_value = "cup,bowl,bottle")]
        classes: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Exit codes: 1 usage, 2 data or schema, 3 fit or registration failure.
struct Failure(u8, String);

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match &e {
            HarnessError::Episode(_) | HarnessError::NoKeypoints(_) | HarnessError::NoEpisodes => 2,
            HarnessError::ObjectUnavailable(..) | HarnessError::NoTraces | HarnessError::UnknownClass(_) => 2,
            HarnessError::Metrics(_) => 2,
            HarnessError::Gesture(g) => gesture_code(g),
            HarnessError::Control(_) => 3,
        };
        Failure(code, e.to_string())
    }
}

fn gesture_code(e: &GestureError) -> u8 {
    match e {
        GestureError::Io { .. } | GestureError::Schema { .. } => 2,
        _ => 3,
    }
}

impl From<EpisodeError> for Failure {
    fn from(e: EpisodeError) -> Self {
        Failure(2, e.to_string())
    }
}

impl From<GestureError> for Failure {
    fn from(e: GestureError) -> Self {
        Failure(gesture_code(&e), e.to_string())
    }
}

fn check_writable(path: &Path, force: bool) -> Result<(), Failure> {
    if path.exists() && !force {
        return Err(Failure(
            1,
            format!("{} exists; pass --force to overwrite", path.display()),
        ));
    }
    Ok(())
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure(2, format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn build_library(dir: &Path, out: &Path, force: bool) -> Result<(), Failure> {
    check_writable(out, force)?;
    let mut episodes = Vec::new();
    for path in json_files(dir)? {
        let ep = episode::load_episode(&path)?;
        if !ep.frames.iter().any(|f| f.hand.keypoints.is_some()) {
            eprintln!("warning: {}: no hand keypoints, skipped", path.display());
            continue;
        }
        episodes.push(ep);
    }
    if episodes.is_empty() {
        return Err(Failure(2, format!("{}: no episodes", dir.display())));
    }
    let (lib, built) = harness::build_library(&episodes)?;
    println!("{:<16} {:<10} residual RMS deg (p r m i tb tr)", "episode", "class");
    for b in &built {
        let r: Vec<String> = b.residuals.iter().map(|x| format!("{x:.2e}")).collect();
        println!("{:<16} {:<10} {}", b.episode_id, b.object_class, r.join(" "));
    }
    gesture::save_library(&lib, out)?;
    println!("{} entries -> {}", lib.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    episode_path: Option<&Path>,
    scene: Option<&Path>,
    trials: Option<usize>,
    library: &Path,
    seed: u64,
    out: &Path,
    force: bool,
    handedness: Handedness,
    noise: NoiseSpec,
    time_constant: f64,
) -> Result<(), Failure> {
    check_writable(out, force)?;
    let lib = gesture::load_library(library)?;
    let cfg = SimConfig {
        controller: ControllerConfig {
            handedness,
            actuator_time_constant: time_constant,
            ..ControllerConfig::default()
        }
        .with_library_standby(&lib),
        ..SimConfig::default()
    };
    cfg.controller.validate().map_err(|e| Failure(1, e.to_string()))?;

    let outcomes = match (episode_path, scene, trials) {
        (Some(p), None, None) => {
            let ep = episode::load_episode(p)?;
            vec![harness::run_episode(&ep, &lib, &cfg, 0, None)?]
        }
        (None, Some(p), Some(n)) => {
            let scene = episode::load_scene(p)?;
            let scenario = ScenarioConfig {
                noise,
                handedness,
                ..ScenarioConfig::default()
            };
            harness::run_scene_trials(&scene, &lib, &cfg, &scenario, n, seed)?
        }
        _ => return Err(Failure(1, "pass either --episode or --scene with --trials".into())),
    };
    let report = harness::report_from(outcomes);
    episode::export_report(&report, out, ReportFormat::from_path(out))?;
    let ok = report.rows.iter().filter(|r| r.intent_ok && r.success).count();
    println!("{} trials, {} successful -> {}", report.rows.len(), ok, out.display());
    Ok(())
}

fn evaluate(report: &Path, group_by: GroupBy, baseline: Baseline, radius: f64) -> Result<(), Failure> {
    let report = episode::load_report(report)?;
    let radius = matches!(baseline, Baseline::Sphere).then_some(radius);
    let groups = harness::summarize(&report, matches!(group_by, GroupBy::Spacing), radius)?;
    print!(
        "{:>9} {:>6} {:>8} {:>8} {:>14} {:>14} {:>12}",
        "spacing", "n", "Acc %", "Suc %", "duration s", "R2", "RMSE deg"
    );
    if radius.is_some() {
        print!(" {:>9}", "sphere %");
    }
    println!();
    for g in groups {
        let spacing = g.spacing.map_or("all".to_string(), |s| format!("{s:.2}m"));
        let r2 = g.r2.map_or("-".to_string(), |m| format!("{m:.3}"));
        let rmse = g.rmse.map_or("-".to_string(), |m| format!("{m:.2}"));
        print!(
            "{:>9} {:>6} {:>8.2} {:>8.2} {:>14} {:>14} {:>12}",
            spacing,
            g.trials,
            g.accuracy,
            g.success_rate,
            g.duration.to_string(),
            r2,
            rmse
        );
        if let Some(b) = g.baseline_accuracy {
            print!(" {b:>9.2}");
        }
        println!();
    }
    Ok(())
}

fn gen_modeling(out: &Path, noise: NoiseSpec, seed: u64) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure(2, format!("{}: {e}", out.display())))?;
    for (k, (class, _)) in episode::STANDARD_OBJECTS.iter().enumerate() {
        let ep = episode::modeling_episode(
            class,
            &Point3::new(0.0, 0.25, 0.75),
            &noise,
            seed.wrapping_add(k as u64),
        )?;
        let path = out.join(format!("{class}.json"));
        episode::save_episode(&ep, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn gen_scene(out: &Path, spacing: f64, classes: &[String], seed: u64) -> Result<(), Failure> {
    let names: Vec<&str> = classes.iter().map(String::as_str).collect();
    let contact = |c: &str| {
        episode::reference_gesture(c)
            .map(|g| episode::default_contact_angles(&g))
            .unwrap_or([f64::INFINITY; 6])
    };
    let scene = SceneSpec::row(&names, spacing, &Point3::new(0.0, 0.25, 0.8), contact, seed)?;
    episode::save_scene(&scene, out)?;
    println!("{}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::BuildLibrary { episodes, out, force } => build_library(&episodes, &out, force),
        Command::Simulate {
            episode,
            scene,
            trials,
            library,
            seed,
            out,
            force,
            handedness,
            pos_sigma,
            angle_sigma,
            time_constant,
        } => simulate(
            episode.as_deref(),
            scene.as_deref(),
            trials,
            &library,
            seed,
            &out,
            force,
            handedness,
            NoiseSpec { pos_sigma, angle_sigma },
            time_constant,
        ),
        Command::Evaluate {
            report,
            group_by,
            baseline,
            sphere_radius,
        } => evaluate(&report, group_by, baseline, sphere_radius),
        Command::GenModeling {
            out,
            pos_sigma,
            angle_sigma,
            seed,
        } => gen_modeling(&out, NoiseSpec { pos_sigma, angle_sigma }, seed),
        Command::GenScene {
            out,
            spacing,
            classes,
            seed,
        } => gen_scene(&out, spacing, &classes, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
