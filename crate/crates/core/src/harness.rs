//! Chains the modules into the modeling and control workflows and the
//! multi-object experiments.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::controller::{
    simulate_hand, ContactModel, ControlError, ControllerConfig, GraspController, LockReason, Observation, Stage,
};
use crate::episode::{
    self, EpisodeError, EpisodeRecord, NoiseSpec, Report, ReportRow, SceneSpec, TraceFrame, TraceObject,
    TrajectorySpec, TrialTrace,
};
use crate::geometry::{self, CleanupConfig, Point3, PointCloud, SizeParams};
use crate::gesture::{self, GestureError, GestureFunction, GestureLibrary, GestureSample};
use crate::intent::{self, Handedness, SceneObject, WristTrack};
use crate::kinematics::{self, AngleVector};
use crate::metrics::{self, AnthropomorphismReport, MeanStd, MetricsError, TrialRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Gesture(#[from] GestureError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("episode {0}: no frame has hand keypoints")]
    NoKeypoints(String),
    #[error("episode {0}: {1}")]
    ObjectUnavailable(String, String),
    #[error("no episodes")]
    NoEpisodes,
    #[error("report has no traces; the sphere baseline needs wrist tracks")]
    NoTraces,
    #[error("no library entry for class {0:?}")]
    UnknownClass(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Object cloud and distance-tagged angle samples from one modeling episode.
#[derive(Debug, Clone)]
pub struct ModelingData {
    pub episode_id: String,
    pub object_class: String,
    pub cloud: PointCloud,
    pub samples: Vec<GestureSample>,
}

/// The grasped object is `meta.object_class` if set, else the first object
/// seen. Its cloud is taken inline when available, otherwise segmented from
/// the first frame carrying a depth map and the object's box.
pub fn modeling_data(ep: &EpisodeRecord) -> Result<ModelingData> {
    let id = ep.meta.episode_id.clone();
    let unavailable = |msg: &str| HarnessError::ObjectUnavailable(id.clone(), msg.to_string());
    let objects: Vec<_> = ep.frames.iter().flat_map(|f| &f.objects).collect();
    let first = match &ep.meta.object_class {
        Some(c) => objects.iter().find(|o| &o.class == c),
        None => objects.first(),
    }
    .ok_or_else(|| unavailable("no object observation"))?;
    let object_id = first.id.clone();
    let object_class = first.class.clone();
    let position = first.position;

    let inline = objects.iter().filter(|o| o.id == object_id).find_map(|o| o.cloud());
    let cloud = match inline {
        Some(c) => c.clone(),
        None => {
            let (depth, bbox) = ep
                .frames
                .iter()
                .find_map(|f| {
                    let bbox = f.objects.iter().find(|o| o.id == object_id)?.bbox?;
                    Some((f.depth()?, bbox))
                })
                .ok_or_else(|| unavailable("no cloud and no depth map with a box"))?;
            geometry::clean_object_cloud(depth, &bbox, &ep.camera, &position, None, CleanupConfig::default())
                .map_err(|e| unavailable(&e.to_string()))?
        }
    };

    let mut samples = Vec::new();
    for f in &ep.frames {
        let Some(kp) = &f.hand.keypoints else { continue };
        // a frame with a degenerate hand is dropped, not fatal
        let Ok(angles) = kinematics::extract_angle_vector(kp) else {
            continue;
        };
        samples.push(GestureSample {
            distance: gesture::hand_object_distance(&kp.wrist(), &position),
            angles,
            timestamp: f.t,
        });
    }
    if samples.is_empty() {
        return Err(HarnessError::NoKeypoints(id));
    }
    Ok(ModelingData {
        episode_id: id,
        object_class,
        cloud,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltEntry {
    pub episode_id: String,
    pub object_class: String,
    /// Per-DOF RMS fit residual, degrees.
    pub residuals: [f64; 6],
}

/// One library entry per episode, in input order.
pub fn build_library(episodes: &[EpisodeRecord]) -> Result<(GestureLibrary, Vec<BuiltEntry>)> {
    if episodes.is_empty() {
        return Err(HarnessError::NoEpisodes);
    }
    let mut lib = GestureLibrary::new();
    let mut built = Vec::with_capacity(episodes.len());
    for ep in episodes {
        let data = modeling_data(ep)?;
        let (entry, residuals) = gesture::model_entry(&data.object_class, &data.cloud, &data.samples)?;
        lib.insert(entry);
        built.push(BuiltEntry {
            episode_id: data.episode_id,
            object_class: data.object_class,
            residuals,
        });
    }
    Ok((lib, built))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub controller: ControllerConfig,
    /// Contact stiffness, newtons per degree.
    pub stiffness: f64,
    /// How long to keep stepping after the last frame, seconds.
    pub settle_time: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            controller: ControllerConfig::default(),
            stiffness: 2.0,
            settle_time: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub row: ReportRow,
    pub trace: TrialTrace,
    pub anthropomorphism: Option<AnthropomorphismReport>,
    /// `(D, actual angles)` for every grasping-stage tick.
    pub grasp_samples: Vec<(f64, AngleVector)>,
    pub reference: Option<GestureFunction>,
}

/// Runs the controller over a control episode and then keeps stepping on
/// the last observation until every DOF locks or `settle_time` runs out.
pub fn run_episode(
    ep: &EpisodeRecord,
    lib: &GestureLibrary,
    cfg: &SimConfig,
    trial_id: usize,
    spacing: Option<f64>,
) -> Result<TrialOutcome> {
    let mut ccfg = cfg.controller.clone();
    ccfg.handedness = ep.meta.handedness;
    let mut ctl = GraspController::new(ccfg)?;
    let objects = ep.scene_objects();
    let dt = 1.0 / ep.meta.fps;
    let t0 = ep.frames[0].t;
    let settle_steps = (cfg.settle_time / dt).ceil() as usize;

    let mut track = WristTrack::new();
    let mut contact = ContactModel::free();
    let mut frames = Vec::new();
    let mut grasp_samples = Vec::new();
    let mut done_at = None;
    let last = ep.frames.len() - 1;

    for k in 0..ep.frames.len() + settle_steps {
        let f = &ep.frames[k.min(last)];
        let t = if k <= last { f.t } else { f.t + (k - last) as f64 * dt };
        let wrist = f.hand.wrist;
        if k <= last {
            track
                .push(t, wrist)
                .map_err(|e| EpisodeError::InvalidParameters(e.to_string()))?;
        }
        let was_committed = ctl.committed_target().is_some();
        let obs = Observation {
            wrist,
            track: &track,
            objects: &objects,
            library: lib,
        };
        let cmd = ctl.step(&obs, dt)?;
        if !was_committed {
            if let (Some(id), Some(entry)) = (ctl.committed_target(), ctl.committed_entry()) {
                contact = ContactModel {
                    contact_angles: ep
                        .contact_angles(id)
                        .unwrap_or_else(|| episode::default_contact_angles(&entry.function)),
                    stiffness: cfg.stiffness,
                };
            }
        }
        let next = simulate_hand(ctl.state(), &cmd, &contact, ctl.config().actuator_time_constant, dt);
        ctl.set_state(next);

        let state = ctl.state();
        let distance = ctl
            .committed_target()
            .and_then(|id| objects.iter().find(|o| o.id == id))
            .map(|o| gesture::hand_object_distance(&wrist, &o.position));
        if cmd.stage == Stage::Grasping {
            grasp_samples.push((distance.expect("grasping has a target"), state.angles));
        }
        frames.push(TraceFrame {
            t,
            stage: state.stage,
            wrist,
            distance,
            commanded: cmd.target_angles,
            actual: state.angles,
            forces: state.forces,
            locked: state.locked,
            selected_target: cmd.selected_target,
        });
        if state.stage == Stage::Done {
            done_at = Some(t);
            break;
        }
    }

    let state = ctl.state();
    let force_locks = state.locked.iter().filter(|l| **l == Some(LockReason::Force)).count();
    let success = done_at.is_some() && force_locks >= 2;
    let end = done_at.unwrap_or_else(|| frames.last().map_or(t0, |f: &TraceFrame| f.t));
    let reference = ctl.committed_entry().map(|e| e.function.clone());
    let anthropomorphism = reference
        .as_ref()
        .and_then(|f| metrics::anthropomorphism(&grasp_samples, f).ok());

    let intended = ep.meta.target_id.clone().unwrap_or_default();
    let estimated = ctl.committed_target().map(str::to_string);
    let row = ReportRow {
        trial_id,
        spacing_m: spacing,
        intent_ok: estimated.as_deref() == Some(intended.as_str()),
        intended,
        estimated,
        success,
        duration_s: end - t0,
        r2_mean: anthropomorphism.map(|a| a.r2_mean),
        rmse_mean_deg: anthropomorphism.map(|a| a.rmse_mean),
    };
    let trace = TrialTrace {
        trial_id,
        objects: objects
            .iter()
            .map(|o| TraceObject {
                id: o.id.clone(),
                class: o.object_class.clone(),
                position: o.position,
            })
            .collect(),
        frames,
    };
    Ok(TrialOutcome {
        row,
        trace,
        anthropomorphism,
        grasp_samples,
        reference,
    })
}

/// Experiment geometry for synthetic trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    /// Horizontal wrist-to-row distance at rest, meters.
    pub start_distance: f64,
    /// Resting hand placement varies uniformly within this radius, meters.
    pub start_jitter: f64,
    pub duration: f64,
    pub fps: f64,
    pub noise: NoiseSpec,
    pub side_angle_deg: f64,
    /// The wrist stops this far inside the gesture's end distance, meters.
    pub end_inset: f64,
    /// Observed rest at the grasp point after arrival, seconds.
    pub dwell: f64,
    pub handedness: Handedness,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            start_distance: 0.45,
            start_jitter: 0.02,
            duration: 1.5,
            fps: 30.0,
            noise: NoiseSpec::none(),
            side_angle_deg: 45.0,
            end_inset: 0.005,
            dwell: 0.5,
            handedness: Handedness::Right,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialPlan {
    pub trial_id: usize,
    pub target_id: String,
    pub start: Point3,
    pub seed: u64,
}

/// Random targets from a fixed resting position in front of the row
/// center, drawn sequentially from `seed`.
pub fn plan_trials(scene: &SceneSpec, n: usize, scenario: &ScenarioConfig, seed: u64) -> Vec<TrialPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = scene.objects.iter().map(|o| o.position).sum::<Point3>() / scene.objects.len() as f64;
    let rest = center - Vector3::z() * scenario.start_distance;
    (0..n)
        .map(|trial_id| {
            let target = scene.objects.choose(&mut rng).expect("scene has objects");
            let r = scenario.start_jitter * rng.gen::<f64>().sqrt();
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            TrialPlan {
                trial_id,
                target_id: target.id.clone(),
                start: rest + Vector3::new(r * phi.cos(), 0.0, r * phi.sin()),
                seed: rng.gen(),
            }
        })
        .collect()
}

pub fn library_function<'a>(lib: &'a GestureLibrary, class: &str) -> Result<&'a GestureFunction> {
    lib.entries
        .iter()
        .find(|e| e.object_class == class)
        .map(|e| &e.function)
        .ok_or_else(|| HarnessError::UnknownClass(class.to_string()))
}

/// Synthetic control episode for one planned trial: the simulated user
/// performs the library gesture of the target class.
pub fn trial_episode(
    scene: &SceneSpec,
    plan: &TrialPlan,
    gesture: &GestureFunction,
    scenario: &ScenarioConfig,
) -> Result<EpisodeRecord> {
    let traj = TrajectorySpec {
        start: plan.start,
        duration: scenario.duration,
        fps: scenario.fps,
        end_distance: Some(gesture.d_end() - scenario.end_inset),
        side_angle_deg: scenario.side_angle_deg,
        handedness: scenario.handedness,
        dwell: scenario.dwell,
    };
    let mut ep =
        episode::generate_synthetic_episode(scene, &plan.target_id, &traj, gesture, &scenario.noise, plan.seed)?;
    ep.meta.episode_id = format!("trial-{}", plan.trial_id);
    Ok(ep)
}

/// Runs `n` planned trials on a scene. Trials run in parallel; the output is
/// in trial order.
pub fn run_scene_trials(
    scene: &SceneSpec,
    lib: &GestureLibrary,
    cfg: &SimConfig,
    scenario: &ScenarioConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<TrialOutcome>> {
    plan_trials(scene, n, scenario, seed)
        .par_iter()
        .map(|plan| {
            let class = &scene.get(&plan.target_id).expect("planned from scene").class;
            let gesture = library_function(lib, class)?;
            let ep = trial_episode(scene, plan, gesture, scenario)?;
            run_episode(&ep, lib, cfg, plan.trial_id, Some(scene.spacing))
        })
        .collect()
}

pub fn report_from(outcomes: Vec<TrialOutcome>) -> Report {
    let mut report = Report::default();
    for o in outcomes {
        report.rows.push(o.row);
        report.traces.push(o.trace);
    }
    report
}

pub fn trial_record(row: &ReportRow) -> TrialRecord {
    TrialRecord {
        intended_target: row.intended.clone(),
        estimated_target: row.estimated.clone(),
        grasp_success: row.success,
        duration: row.duration_s,
        object_spacing: row.spacing_m,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub spacing: Option<f64>,
    pub trials: usize,
    pub accuracy: f64,
    pub success_rate: f64,
    pub duration: MeanStd,
    pub r2: Option<MeanStd>,
    pub rmse: Option<MeanStd>,
    pub baseline_accuracy: Option<f64>,
}

fn trace_objects(trace: &TrialTrace) -> Vec<SceneObject> {
    trace
        .objects
        .iter()
        .map(|o| SceneObject {
            id: o.id.clone(),
            object_class: o.class.clone(),
            position: o.position,
            size: SizeParams {
                extents: Vector3::zeros(),
                radius: 0.0,
                centroid: o.position,
            },
            cloud: PointCloud {
                points: vec![o.position],
            },
        })
        .collect()
}

/// Sphere-baseline decision for each row, looked up by trial id.
pub fn sphere_baseline_estimates(report: &Report, radius: f64) -> Result<Vec<Option<String>>> {
    if report.traces.is_empty() && !report.rows.is_empty() {
        return Err(HarnessError::NoTraces);
    }
    Ok(report
        .rows
        .iter()
        .map(|row| {
            let trace = report.traces.iter().find(|t| t.trial_id == row.trial_id)?;
            // only frames the camera actually recorded feed the estimator
            let mut track: Vec<(f64, Point3)> = Vec::new();
            for f in &trace.frames {
                if track.last().is_none_or(|(_, p)| *p != f.wrist) {
                    track.push((f.t, f.wrist));
                }
            }
            intent::sphere_baseline_on_track(&track, &trace_objects(trace), radius)
                .ok()
                .map(|e| e.target_id)
        })
        .collect())
}

/// Per-group Acc, Suc, duration and, when present, anthropomorphism, sorted
/// by descending spacing. `sphere_radius` adds baseline accuracy.
pub fn summarize(report: &Report, group_by_spacing: bool, sphere_radius: Option<f64>) -> Result<Vec<GroupSummary>> {
    if report.rows.is_empty() {
        return Err(MetricsError::EmptyTrials.into());
    }
    let baseline = sphere_radius
        .map(|r| sphere_baseline_estimates(report, r))
        .transpose()?;
    let mut keys: Vec<Option<f64>> = Vec::new();
    for row in &report.rows {
        let key = if group_by_spacing { row.spacing_m } else { None };
        if !keys.iter().any(|k| k.map(f64::to_bits) == key.map(f64::to_bits)) {
            keys.push(key);
        }
    }
    keys.sort_by(|a, b| {
        b.unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&a.unwrap_or(f64::NEG_INFINITY))
    });

    keys.into_iter()
        .map(|key| {
            let idx: Vec<usize> = (0..report.rows.len())
                .filter(|&i| !group_by_spacing || report.rows[i].spacing_m.map(f64::to_bits) == key.map(f64::to_bits))
                .collect();
            let records: Vec<TrialRecord> = idx.iter().map(|&i| trial_record(&report.rows[i])).collect();
            let r2: Vec<f64> = idx.iter().filter_map(|&i| report.rows[i].r2_mean).collect();
            let rmse: Vec<f64> = idx.iter().filter_map(|&i| report.rows[i].rmse_mean_deg).collect();
            let baseline_accuracy = baseline.as_ref().map(|b| {
                let hits = idx
                    .iter()
                    .filter(|&&i| b[i].as_deref() == Some(report.rows[i].intended.as_str()))
                    .count();
                100.0 * hits as f64 / idx.len() as f64
            });
            Ok(GroupSummary {
                spacing: key,
                trials: idx.len(),
                accuracy: metrics::intent_accuracy(&records)?,
                success_rate: metrics::grasp_success_rate(&records)?,
                duration: metrics::duration_stats(&records)?,
                r2: MeanStd::of(&r2).ok(),
                rmse: MeanStd::of(&rmse).ok(),
                baseline_accuracy,
            })
        })
        .collect()
}

/// Intent-only experiment: three random catalog objects per trial in a row
/// at the given spacing, random target, fixed resting hand position.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub spacings: Vec<f64>,
    pub trials_per_spacing: usize,
    pub scenario: ScenarioConfig,
    pub row_center: Point3,
    pub sphere_radius: f64,
    pub commit_count: usize,
    pub min_track_len: usize,
    pub min_track_span: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            spacings: vec![0.3, 0.25, 0.2, 0.15],
            trials_per_spacing: 200,
            scenario: ScenarioConfig::default(),
            row_center: Point3::new(0.0, 0.25, 0.8),
            sphere_radius: 0.15,
            commit_count: 3,
            min_track_len: 3,
            min_track_span: 0.08,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrial {
    pub scene: SceneSpec,
    pub target_id: String,
    /// Noise-free wrist path endpoints.
    pub start: Point3,
    pub goal: Point3,
    pub track: Vec<(f64, Point3)>,
    pub estimated: Option<String>,
    pub commit_frame: Option<usize>,
    pub baseline: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub spacing: f64,
    pub trials: Vec<SweepTrial>,
}

impl SweepResult {
    pub fn accuracy(&self) -> f64 {
        let hits = self
            .trials
            .iter()
            .filter(|t| t.estimated.as_deref() == Some(t.target_id.as_str()))
            .count();
        100.0 * hits as f64 / self.trials.len().max(1) as f64
    }

    pub fn baseline_accuracy(&self) -> f64 {
        let hits = self
            .trials
            .iter()
            .filter(|t| t.baseline.as_deref() == Some(t.target_id.as_str()))
            .count();
        100.0 * hits as f64 / self.trials.len().max(1) as f64
    }
}

pub fn intent_sweep(cfg: &SweepConfig) -> Result<Vec<SweepResult>> {
    let classes: Vec<&str> = episode::STANDARD_OBJECTS.iter().map(|(c, _)| *c).collect();
    cfg.spacings
        .iter()
        .map(|&spacing| {
            // same setups at every spacing so only the geometry differs
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let setups: Vec<(Vec<&str>, u64, u64)> = (0..cfg.trials_per_spacing)
                .map(|_| {
                    let picked: Vec<&str> = classes.choose_multiple(&mut rng, 3).copied().collect();
                    (picked, rng.gen(), rng.gen())
                })
                .collect();
            let trials = setups
                .into_par_iter()
                .map(|(picked, layout_seed, trial_seed)| {
                    let gestures: Vec<GestureFunction> = picked
                        .iter()
                        .map(|c| episode::reference_gesture(c).expect("catalog class"))
                        .collect();
                    let scene = SceneSpec::row(
                        &picked,
                        spacing,
                        &cfg.row_center,
                        |c| episode::default_contact_angles(&episode::reference_gesture(c).expect("catalog class")),
                        layout_seed,
                    )?;
                    let plan = plan_trials(&scene, 1, &cfg.scenario, trial_seed).remove(0);
                    let class = &scene.get(&plan.target_id).expect("planned from scene").class;
                    let gesture = &gestures[picked.iter().position(|c| c == class).expect("picked class")];
                    let ep = trial_episode(&scene, &plan, gesture, &cfg.scenario)?;
                    let track: Vec<(f64, Point3)> = ep.frames.iter().map(|f| (f.t, f.hand.wrist)).collect();
                    let objects = scene.scene_objects();
                    let committed = intent::commit_on_track(
                        &track,
                        &objects,
                        cfg.scenario.handedness,
                        cfg.min_track_len,
                        cfg.min_track_span,
                        cfg.commit_count,
                    );
                    let baseline = intent::sphere_baseline_on_track(&track, &objects, cfg.sphere_radius)
                        .ok()
                        .map(|e| e.target_id);
                    let traj = TrajectorySpec {
                        start: plan.start,
                        duration: cfg.scenario.duration,
                        fps: cfg.scenario.fps,
                        end_distance: None,
                        side_angle_deg: cfg.scenario.side_angle_deg,
                        handedness: cfg.scenario.handedness,
                        dwell: 0.0,
                    };
                    let target = scene.get(&plan.target_id).expect("planned from scene").position;
                    let goal = episode::grasp_point(&target, &traj, gesture.d_end() - cfg.scenario.end_inset);
                    Ok(SweepTrial {
                        target_id: plan.target_id,
                        start: plan.start,
                        goal,
                        track,
                        estimated: committed.as_ref().map(|c| c.0.clone()),
                        commit_frame: committed.map(|c| c.1),
                        baseline,
                        scene,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepResult { spacing, trials })
        })
        .collect()
}
