//! Acceptance checks, one pass/fail line each. Runs without the libtest
//! harness so the lines show up in plain `cargo test` output; exits non-zero
//! if any check fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use handgrasp::controller::{ControllerConfig, LockReason, Stage};
use handgrasp::episode::{self, NoiseSpec, ReportRow, SceneSpec};
use handgrasp::geometry::{self, Point3, PointCloud};
use handgrasp::gesture::{self, eval_gesture, GestureError, GestureFunction, GestureLibrary, GestureLibraryEntry};
use handgrasp::harness::{self, ScenarioConfig, SimConfig, SweepConfig, SweepResult, TrialPlan};
use handgrasp::intent::{self, Handedness, WristTrack};
use handgrasp::metrics::{self, MeanStd};
use handgrasp::AngleVector;
use nalgebra::{Matrix3, Rotation3, SymmetricEigen, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn modeling_library(noise: &NoiseSpec) -> Result<GestureLibrary, String> {
    let episodes = episode::STANDARD_OBJECTS
        .iter()
        .enumerate()
        .map(|(k, (c, _))| episode::modeling_episode(c, &Point3::new(0.0, 0.25, 0.75), noise, k as u64))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    harness::build_library(&episodes)
        .map(|(lib, _)| lib)
        .map_err(|e| e.to_string())
}

fn ideal_sim(lib: &GestureLibrary) -> SimConfig {
    SimConfig {
        controller: ControllerConfig {
            actuator_time_constant: 0.0,
            ..ControllerConfig::default()
        }
        .with_library_standby(lib),
        ..SimConfig::default()
    }
}

/// Library from noise-free modeling, one ideal-actuator trial per class,
/// executed angles compared against the functions that generated the data.
fn pipeline_inverse() -> Check {
    let started = Instant::now();
    let lib = modeling_library(&NoiseSpec::none())?;
    let cfg = ideal_sim(&lib);
    let mut worst_r2 = f64::INFINITY;
    let mut worst_rmse: f64 = 0.0;
    for (k, (class, _)) in episode::STANDARD_OBJECTS.iter().enumerate() {
        let others: Vec<&str> = episode::STANDARD_OBJECTS
            .iter()
            .map(|(c, _)| *c)
            .filter(|c| c != class)
            .skip(k % 5)
            .take(2)
            .collect();
        let classes = [others[0], class, others[1]];
        let contact = |c: &str| episode::default_contact_angles(harness::library_function(&lib, c).expect("modeled"));
        let scene = SceneSpec::row(&classes, 0.25, &Point3::new(0.0, 0.25, 0.8), contact, k as u64)
            .map_err(|e| e.to_string())?;
        let target = scene
            .objects
            .iter()
            .find(|o| o.class == *class)
            .expect("in scene")
            .id
            .clone();
        let plan = TrialPlan {
            trial_id: k,
            target_id: target.clone(),
            start: Point3::new(0.0, 0.25, 0.35),
            seed: k as u64,
        };
        let gesture = harness::library_function(&lib, class).map_err(|e| e.to_string())?;
        let ep =
            harness::trial_episode(&scene, &plan, gesture, &ScenarioConfig::default()).map_err(|e| e.to_string())?;
        let out = harness::run_episode(&ep, &lib, &cfg, k, Some(scene.spacing)).map_err(|e| e.to_string())?;
        ensure(out.row.intent_ok && out.row.success, || {
            format!("{class}: trial failed: {:?}", out.row)
        })?;
        let truth = episode::reference_gesture(class).expect("catalog class");
        let a = metrics::anthropomorphism(&out.grasp_samples, &truth).map_err(|e| e.to_string())?;
        worst_r2 = a.r2_per_dof.iter().copied().fold(worst_r2, f64::min);
        worst_rmse = a.rmse_per_dof.iter().copied().fold(worst_rmse, f64::max);
    }
    ensure(worst_r2 >= 0.999, || format!("worst per-DOF R2 {worst_r2}"))?;
    ensure(worst_rmse <= 0.01, || format!("worst per-DOF RMSE {worst_rmse} deg"))?;
    within(started.elapsed(), 5.0)?;
    Ok(format!(
        "8 classes, worst per-DOF R2 {worst_r2:.12}, worst RMSE {worst_rmse:.2e} deg, {:.2} s",
        started.elapsed().as_secs_f64()
    ))
}

/// Target implied by the noise-free wrist line: nearest object by
/// point-line distance among those on the thumb-opposite side of the
/// vertical plane through the line.
fn line_oracle(start: &Point3, goal: &Point3, scene: &SceneSpec, handedness: Handedness) -> String {
    let u = (goal - start).normalize();
    let mut n = Vector3::new(-u.z, 0.0, u.x);
    if n.x > 0.0 {
        n = -n;
    }
    let dist = |p: &Point3| (p - start).cross(&u).norm();
    let side = |p: &Point3| {
        let s = n.dot(&(p - start));
        match handedness {
            Handedness::Right => s > 0.0,
            Handedness::Left => s < 0.0,
        }
    };
    let nearest = |it: &mut dyn Iterator<Item = &episode::SceneObjectSpec>| {
        it.min_by(|a, b| dist(&a.position).total_cmp(&dist(&b.position)))
            .map(|o| o.id.clone())
    };
    nearest(&mut scene.objects.iter().filter(|o| side(&o.position)))
        .or_else(|| nearest(&mut scene.objects.iter()))
        .expect("scene has objects")
}

fn accuracies(results: &[SweepResult]) -> String {
    results
        .iter()
        .map(|r| format!("{:.2}m {:.2}%", r.spacing, r.accuracy()))
        .collect::<Vec<_>>()
        .join(", ")
}

fn sweep_checks() -> (Check, Check) {
    let clean_cfg = SweepConfig::default();
    let noisy_cfg = SweepConfig {
        scenario: ScenarioConfig {
            noise: NoiseSpec {
                pos_sigma: 0.005,
                angle_sigma: 0.0,
            },
            ..ScenarioConfig::default()
        },
        ..SweepConfig::default()
    };

    let clean = harness::intent_sweep(&clean_cfg);
    let started = Instant::now();
    let noisy = harness::intent_sweep(&noisy_cfg);
    let noisy_time = started.elapsed();

    let sweep = (|| -> Check {
        let clean = clean.as_ref().map_err(|e| e.to_string())?;
        let noisy = noisy.as_ref().map_err(|e| e.to_string())?;
        for r in clean {
            ensure(r.trials.len() == 200, || {
                format!("{} trials at {}", r.trials.len(), r.spacing)
            })?;
            for t in &r.trials {
                let oracle = line_oracle(&t.start, &t.goal, &t.scene, clean_cfg.scenario.handedness);
                ensure(oracle == t.target_id, || {
                    format!("oracle picks {oracle} for target {} at {} m", t.target_id, r.spacing)
                })?;
            }
            ensure(r.accuracy() == 100.0, || {
                format!("noise-free accuracy {}", accuracies(clean))
            })?;
        }
        let acc: Vec<f64> = noisy.iter().map(SweepResult::accuracy).collect();
        ensure(acc.windows(2).all(|w| w[1] <= w[0]), || {
            format!("not monotone: {}", accuracies(noisy))
        })?;
        ensure(acc[acc.len() - 1] >= 90.0, || {
            format!("0.15 m below 90%: {}", accuracies(noisy))
        })?;
        within(noisy_time, 10.0)?;
        Ok(format!(
            "noise-free 100% and oracle-consistent at all spacings; sigma 5 mm: {}; {:.2} s",
            accuracies(noisy),
            noisy_time.as_secs_f64()
        ))
    })();

    let baseline = (|| -> Check {
        let noisy = noisy.as_ref().map_err(|e| e.to_string())?;
        let last = noisy.last().expect("four spacings");
        let margin = last.accuracy() - last.baseline_accuracy();
        ensure(margin >= 5.0, || {
            format!(
                "MTR-GIE {:.2}% vs sphere {:.2}% at {} m",
                last.accuracy(),
                last.baseline_accuracy(),
                last.spacing
            )
        })?;
        Ok(format!(
            "at {:.2} m MTR-GIE {:.2}% vs sphere {:.2}%, margin {margin:.2} points",
            last.spacing,
            last.accuracy(),
            last.baseline_accuracy()
        ))
    })();
    (sweep, baseline)
}

fn principal_direction(points: &[Point3]) -> Vector3<f64> {
    let c = points.iter().fold(Point3::zeros(), |a, p| a + p) / points.len() as f64;
    let cov = points
        .iter()
        .fold(Matrix3::zeros(), |acc, p| acc + (p - c) * (p - c).transpose());
    let eig = SymmetricEigen::new(cov);
    eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned()
}

fn two_plane_regression() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let special = [
        Vector3::x(),
        Vector3::y(),
        Vector3::z(),
        -Vector3::x(),
        Vector3::new(s, s, 0.0),
        Vector3::new(0.0, s, -s),
        Vector3::new(s, 0.0, s),
    ];
    let (mut worst_res, mut worst_angle, mut axis_aligned) = (0.0f64, 0.0f64, 0);
    for k in 0..1000 {
        let dir = if k % 4 == 0 {
            axis_aligned += 1;
            special[(k / 4) % special.len()]
        } else {
            Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize()
        };
        let origin = Point3::new(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(0.2..1.2),
        );
        let n = rng.gen_range(3..40);
        let points: Vec<Point3> = (0..n).map(|_| origin + dir * rng.gen_range(-0.4..0.4)).collect();
        let track = WristTrack::from_positions(points.iter().enumerate().map(|(i, p)| (i as f64, *p)).collect())
            .map_err(|e| e.to_string())?;
        let line = intent::fit_trajectory_line(&track).map_err(|e| format!("set {k}: {e}"))?;
        for p in &points {
            worst_res = worst_res.max(line.distance_to(p));
        }
        let oracle = principal_direction(&points);
        worst_angle = worst_angle.max(line.direction.normalize().cross(&oracle).norm().asin());
    }
    ensure(worst_res < 1e-9, || format!("worst point-line residual {worst_res:e}"))?;
    ensure(worst_angle < 1e-6, || {
        format!("worst direction error {worst_angle:e} rad")
    })?;
    within(started.elapsed(), 2.0)?;
    Ok(format!(
        "1000 sets ({axis_aligned} axis-aligned or in-plane), residual {worst_res:.1e} m, direction {worst_angle:.1e} rad, {:.2} s",
        started.elapsed().as_secs_f64()
    ))
}

fn registration() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let function = GestureFunction::new([[0.0, 0.0, 0.0, -100.0, 60.0]; 6], 0.05, 0.45).map_err(|e| e.to_string())?;
    let (mut worst, mut mismatches) = (0.0f64, 0);
    for k in 0..100 {
        let model = PointCloud::new(
            (0..500)
                .map(|_| {
                    Point3::new(
                        rng.gen_range(-0.06..0.06),
                        rng.gen_range(-0.035..0.035),
                        rng.gen_range(-0.02..0.02),
                    )
                })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let axis = Unit::new_normalize(Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ));
        let rotation = Rotation3::from_axis_angle(&axis, rng.gen_range(0.0..30f64.to_radians()));
        let translation = loop {
            let t = Vector3::new(
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
            );
            if t.norm() <= 0.1 {
                break t;
            }
        };
        let observed = model.transformed(rotation.matrix(), &translation);
        let reg = intent::register_clouds(&model, &observed).map_err(|e| e.to_string())?;
        worst = worst.max(reg.rmse);
        ensure(reg.rmse < 1e-6, || format!("transform {k}: RMSE {:e}", reg.rmse))?;

        let mut lib = GestureLibrary::new();
        let size = geometry::object_size(&model).map_err(|e| e.to_string())?;
        lib.insert(
            GestureLibraryEntry::new("thing", size, Some(model.clone()), function.clone())
                .map_err(|e| e.to_string())?,
        );
        let c = observed.centroid().expect("non-empty");
        let doubled =
            PointCloud::new(observed.points.iter().map(|p| c + (p - c) * 2.0).collect()).map_err(|e| e.to_string())?;
        let doubled_size = geometry::object_size(&doubled).map_err(|e| e.to_string())?;
        match gesture::library_lookup(&lib, "thing", &doubled_size, &doubled) {
            Err(GestureError::GestureMismatch { .. }) => mismatches += 1,
            other => {
                return Err(format!(
                    "transform {k}: x2 cloud gave {:?}",
                    other.map(|e| &e.object_class)
                ))
            }
        }
    }
    within(started.elapsed(), 10.0)?;
    Ok(format!(
        "100 transforms, worst RMSE {worst:.1e} m, x2 scale rejected {mismatches}/100, {:.2} s",
        started.elapsed().as_secs_f64()
    ))
}

/// Two DOFs meet the object before their final angle (force lock), the
/// other four never touch it (closing stops at final + 5 degrees).
fn controller_thresholds() -> Check {
    let lib = modeling_library(&NoiseSpec::none())?;
    let cfg = ideal_sim(&lib);
    let contact = |c: &str| episode::default_contact_angles(harness::library_function(&lib, c).expect("modeled"));
    let mut scene = SceneSpec::row(&["apple", "cup", "bowl"], 0.3, &Point3::new(0.0, 0.25, 0.8), contact, 0)
        .map_err(|e| e.to_string())?;
    let target = scene
        .objects
        .iter()
        .find(|o| o.class == "cup")
        .expect("in scene")
        .id
        .clone();
    let gesture = harness::library_function(&lib, "cup")
        .map_err(|e| e.to_string())?
        .clone();
    let final_pose = eval_gesture(&gesture, gesture.d_end());
    let early = [(0, 6.0), (3, 3.0)];
    {
        let obj = scene.objects.iter_mut().find(|o| o.id == target).expect("in scene");
        for j in 0..6 {
            obj.contact_angles[j] = final_pose[j] + 30.0;
        }
        for (j, before) in early {
            obj.contact_angles[j] = final_pose[j] - before;
        }
    }
    let plan = TrialPlan {
        trial_id: 0,
        target_id: target,
        start: Point3::new(0.0, 0.25, 0.35),
        seed: 1,
    };
    let ep = harness::trial_episode(&scene, &plan, &gesture, &ScenarioConfig::default()).map_err(|e| e.to_string())?;
    let out = harness::run_episode(&ep, &lib, &cfg, 0, None).map_err(|e| e.to_string())?;
    let frames = &out.trace.frames;
    ensure(frames.last().map(|f| f.stage) == Some(Stage::Done), || {
        "trace never reached Done".into()
    })?;
    let threshold = cfg.controller.force_threshold;

    for j in 0..6 {
        let lock = frames
            .iter()
            .position(|f| f.locked[j].is_some())
            .ok_or(format!("DOF {j} never locked"))?;
        let frozen = frames[lock].actual[j];
        for f in &frames[lock..] {
            ensure(
                f.actual[j].to_bits() == frozen.to_bits() && f.locked[j] == frames[lock].locked[j],
                || format!("DOF {j} moved after locking at t={}", frames[lock].t),
            )?;
        }
        if early.iter().any(|(e, _)| *e == j) {
            ensure(frames[lock].locked[j] == Some(LockReason::Force), || {
                format!("DOF {j}: {:?}", frames[lock].locked[j])
            })?;
            ensure(lock > 0 && frames[lock - 1].forces[j] >= threshold, || {
                format!("DOF {j} locked without 4 N")
            })?;
            ensure(frames[..lock - 1].iter().all(|f| f.forces[j] < threshold), || {
                format!("DOF {j} passed 4 N without locking")
            })?;
            ensure(frozen < final_pose[j], || {
                format!("DOF {j} locked at {frozen}, final {}", final_pose[j])
            })?;
        } else {
            let limit = final_pose[j] + 5.0;
            ensure(frames[lock].locked[j] == Some(LockReason::ContractionLimit), || {
                format!("DOF {j}: {:?}", frames[lock].locked[j])
            })?;
            ensure(frozen.to_bits() == limit.to_bits(), || {
                format!("DOF {j} stopped at {frozen}, want exactly {limit}")
            })?;
            ensure(
                frames.iter().all(|f| f.actual[j] <= limit && f.forces[j] == 0.0),
                || format!("DOF {j} overshot"),
            )?;
        }
    }
    Ok(format!(
        "{} frames inspected: p, i force-locked below final; r, m, tb, tr stopped at final+5 exactly; all locks bit-frozen",
        frames.len()
    ))
}

fn row(id: usize, intent_ok: bool, success: bool, duration: f64) -> ReportRow {
    ReportRow {
        trial_id: id,
        spacing_m: None,
        intended: "cup_0".into(),
        estimated: Some(if intent_ok { "cup_0" } else { "bowl_1" }.into()),
        intent_ok,
        success,
        duration_s: duration,
        r2_mean: None,
        rmse_mean_deg: None,
    }
}

fn metrics_oracles() -> Check {
    let f = episode::reference_gesture("cup").expect("catalog class");
    let ds: Vec<f64> = (0..50)
        .map(|k| f.d_end() + (f.d_start() - f.d_end()) * k as f64 / 49.0)
        .collect();
    let identical: Vec<(f64, AngleVector)> = ds.iter().map(|&d| (d, eval_gesture(&f, d))).collect();
    let a = metrics::anthropomorphism(&identical, &f).map_err(|e| e.to_string())?;
    ensure(
        a.r2_per_dof.iter().all(|r| *r == 1.0) && a.rmse_per_dof.iter().all(|r| *r == 0.0),
        || format!("identical: {a:?}"),
    )?;
    let offset: Vec<(f64, AngleVector)> = identical.iter().map(|(d, v)| (*d, v.map(|x| x + 1.5))).collect();
    let a = metrics::anthropomorphism(&offset, &f).map_err(|e| e.to_string())?;
    ensure(a.rmse_per_dof.iter().all(|r| (r - 1.5).abs() < 1e-9), || {
        format!("offset RMSE {:?}", a.rmse_per_dof)
    })?;

    // (rows, hand-counted Acc, hand-counted Suc)
    let reports: [(Vec<ReportRow>, f64, f64); 3] = [
        ((0..40).map(|i| row(i, i >= 2, true, 3.0)).collect(), 95.0, 95.0),
        ((0..40).map(|i| row(i, true, i >= 3, 3.0)).collect(), 100.0, 92.5),
        (
            (0..8).map(|i| row(i, i < 6, !(4..6).contains(&i), 3.0)).collect(),
            75.0,
            50.0,
        ),
    ];
    for (k, (rows, acc, suc)) in reports.iter().enumerate() {
        let trials: Vec<_> = rows.iter().map(harness::trial_record).collect();
        let got = (
            metrics::intent_accuracy(&trials).map_err(|e| e.to_string())?,
            metrics::grasp_success_rate(&trials).map_err(|e| e.to_string())?,
        );
        ensure(got == (*acc, *suc), || {
            format!("report {k}: got {got:?}, want ({acc}, {suc})")
        })?;
    }
    let trials: Vec<_> = [2.5, 3.0, 3.5]
        .iter()
        .enumerate()
        .map(|(i, d)| harness::trial_record(&row(i, true, true, *d)))
        .collect();
    let s = metrics::duration_stats(&trials).map_err(|e| e.to_string())?.to_string();
    ensure(s == "3.00±0.50", || format!("duration formatted as {s}"))?;
    let rounded = MeanStd { mean: 3.07, std: 0.41 }.to_string();
    ensure(rounded == "3.07±0.41", || format!("formatted as {rounded}"))?;
    Ok("R2=1/RMSE=0 identical, RMSE=1.5 at +1.5 deg offset, 3 crafted reports match, \"3.00±0.50\"".into())
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_handgrasp"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("handgrasp {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    cli(&["gen-modeling", "--out", &p("eps"), "--angle-sigma", "1", "--seed", "3"])?;
    cli(&["build-library", "--episodes", &p("eps"), "--out", &p("lib.json")])?;
    cli(&[
        "gen-scene",
        "--out",
        &p("scene.json"),
        "--spacing",
        "0.15",
        "--classes",
        "cup,mouse,apple",
    ])?;
    let mut compared = Vec::new();
    for ext in ["json", "csv"] {
        let mut bytes = Vec::new();
        for run in ["a", "b"] {
            let out = p(&format!("report_{run}.{ext}"));
            cli(&[
                "simulate",
                "--scene",
                &p("scene.json"),
                "--trials",
                "24",
                "--library",
                &p("lib.json"),
                "--seed",
                "11",
                "--pos-sigma",
                "0.005",
                "--out",
                &out,
            ])?;
            bytes.push(std::fs::read(Path::new(&out)).map_err(|e| e.to_string())?);
        }
        ensure(bytes[0] == bytes[1], || format!("{ext} reports differ"))?;
        compared.push(format!("{ext} {} bytes", bytes[0].len()));
    }
    Ok(format!(
        "two seeded simulate runs byte-identical ({})",
        compared.join(", ")
    ))
}

fn main() {
    let (sweep, baseline) = sweep_checks();
    let results: [(&str, Check); 8] = [
        ("pipeline inverse", pipeline_inverse()),
        ("intent accuracy sweep", sweep),
        ("baseline separation", baseline),
        ("two-plane regression", two_plane_regression()),
        ("registration gate", registration()),
        ("controller thresholds", controller_thresholds()),
        ("metrics oracles", metrics_oracles()),
        ("simulate determinism", determinism()),
    ];
    let mut failed = 0;
    for (k, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(detail) => println!("PASS {} {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
