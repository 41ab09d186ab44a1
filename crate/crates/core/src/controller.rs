//! Three-stage grasp controller driving a simulated six-DOF hand.
//!
//! Stages run strictly in order: intent estimation (standby pose while the
//! target is confirmed), grasping (gesture function over the live hand-object
//! distance), grip tightening (per-DOF lock on force or contraction limit).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;
use crate::gesture::{self, eval_gesture, GestureLibrary, GestureLibraryEntry};
use crate::intent::{self, CommitTracker, Handedness, SceneObject, WristTrack};
use crate::kinematics::AngleVector;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("committed target {id:?} has no valid gesture function: {reason}")]
    MissingLibraryEntry { id: String, reason: String },
    #[error("committed target {0:?} disappeared from the observation")]
    TargetLost(String),
    #[error("invalid controller config: {0}")]
    InvalidConfig(&'static str),
}

pub type Result<T> = std::result::Result<T, ControlError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    IntentEstimation,
    Grasping,
    GripTightening,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockReason {
    Force,
    ContractionLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Newtons.
    pub force_threshold: f64,
    /// Degrees past the final gesture angle a DOF may close.
    pub contraction_threshold: f64,
    pub standby_pose: AngleVector,
    pub commit_count: usize,
    /// First-order actuator lag in seconds; 0 is an ideal actuator.
    pub actuator_time_constant: f64,
    pub handedness: Handedness,
    /// Wrist positions required before the first estimate.
    pub min_track_len: usize,
    /// Distance the wrist must have moved from rest before the first
    /// estimate, meters.
    pub min_track_span: f64,
    /// Angle within which a commanded position counts as reached, degrees.
    pub reach_tolerance: f64,
    /// Closing speed during grip tightening, degrees per second.
    pub tighten_rate: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            force_threshold: 4.0,
            contraction_threshold: 5.0,
            standby_pose: AngleVector::splat(30.0),
            commit_count: 3,
            actuator_time_constant: 0.1,
            handedness: Handedness::Right,
            min_track_len: 3,
            min_track_span: 0.08,
            reach_tolerance: 0.01,
            tighten_rate: 20.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.force_threshold > 0.0) {
            return Err(ControlError::InvalidConfig("force_threshold must be positive"));
        }
        if !(self.contraction_threshold > 0.0) {
            return Err(ControlError::InvalidConfig("contraction_threshold must be positive"));
        }
        if self.commit_count < 1 {
            return Err(ControlError::InvalidConfig("commit_count must be at least 1"));
        }
        if self.min_track_len < 3 {
            return Err(ControlError::InvalidConfig("min_track_len must be at least 3"));
        }
        if !(self.min_track_span >= 0.0) {
            return Err(ControlError::InvalidConfig("min_track_span must be non-negative"));
        }
        if !(self.actuator_time_constant >= 0.0) || !(self.tighten_rate > 0.0) || !(self.reach_tolerance >= 0.0) {
            return Err(ControlError::InvalidConfig("actuator parameters out of range"));
        }
        if !self.standby_pose.is_finite() {
            return Err(ControlError::InvalidConfig("standby pose must be finite"));
        }
        Ok(())
    }

    /// Semi-closed standby: each DOF at the midpoint of its range across the library.
    pub fn with_library_standby(mut self, lib: &GestureLibrary) -> Self {
        if lib.is_empty() {
            return self;
        }
        let mut pose = AngleVector::default();
        for e in &lib.entries {
            for (j, (lo, hi)) in e.function.angle_ranges().iter().enumerate() {
                pose[j] += 0.5 * (lo + hi) / lib.len() as f64;
            }
        }
        self.standby_pose = pose;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandState {
    pub angles: AngleVector,
    pub forces: [f64; 6],
    pub locked: [Option<LockReason>; 6],
    pub stage: Stage,
}

impl HandState {
    pub fn new(angles: AngleVector) -> Self {
        Self {
            angles,
            forces: [0.0; 6],
            locked: [None; 6],
            stage: Stage::IntentEstimation,
        }
    }

    pub fn is_locked(&self, dof: usize) -> bool {
        self.locked[dof].is_some()
    }

    pub fn all_locked(&self) -> bool {
        self.locked.iter().all(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlCommand {
    pub target_angles: AngleVector,
    pub stage: Stage,
    pub selected_target: Option<String>,
}

/// Per-DOF decision during grip tightening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TightenAction {
    Lock(LockReason),
    CloseFurther(f64),
}

/// Force threshold first; otherwise close to the final angle, then past it
/// up to the contraction limit, where the DOF locks regardless of force.
pub fn grip_tighten_dof(angle: f64, final_angle: f64, force: f64, cfg: &ControllerConfig) -> TightenAction {
    let limit = final_angle + cfg.contraction_threshold;
    if force >= cfg.force_threshold {
        TightenAction::Lock(LockReason::Force)
    } else if angle >= limit - cfg.reach_tolerance {
        TightenAction::Lock(LockReason::ContractionLimit)
    } else if angle < final_angle - cfg.reach_tolerance {
        TightenAction::CloseFurther(final_angle)
    } else {
        TightenAction::CloseFurther(limit)
    }
}

/// Object contact as a piecewise-linear spring on each joint angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactModel {
    /// Angle at which each finger touches the object, degrees.
    pub contact_angles: [f64; 6],
    /// Newtons per degree of penetration.
    pub stiffness: f64,
}

impl ContactModel {
    pub fn force(&self, dof: usize, angle: f64) -> f64 {
        self.stiffness * (angle - self.contact_angles[dof]).max(0.0)
    }

    /// No contact anywhere in the usable range.
    pub fn free() -> Self {
        Self {
            contact_angles: [f64::INFINITY; 6],
            stiffness: 0.0,
        }
    }
}

/// Advances the actuators by `dt`: unlocked DOFs follow a first-order lag to
/// the command, locked DOFs stay put, forces follow the contact model.
pub fn simulate_hand(
    state: &HandState,
    cmd: &ControlCommand,
    contact: &ContactModel,
    time_constant: f64,
    dt: f64,
) -> HandState {
    let mut next = state.clone();
    if dt <= 0.0 {
        return next;
    }
    let alpha = if time_constant > 0.0 {
        1.0 - (-dt / time_constant).exp()
    } else {
        1.0
    };
    for j in 0..6 {
        if state.is_locked(j) {
            continue;
        }
        let a = state.angles[j];
        next.angles[j] = if alpha == 1.0 {
            cmd.target_angles[j]
        } else {
            a + (cmd.target_angles[j] - a) * alpha
        };
        next.forces[j] = contact.force(j, next.angles[j]);
    }
    next
}

/// What the controller sees on one frame.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub wrist: Point3,
    pub track: &'a WristTrack,
    pub objects: &'a [SceneObject],
    pub library: &'a GestureLibrary,
}

#[derive(Debug, Clone)]
struct Commitment {
    target_id: String,
    entry: GestureLibraryEntry,
}

/// Stateful controller for one episode.
#[derive(Debug, Clone)]
pub struct GraspController {
    cfg: ControllerConfig,
    state: HandState,
    tracker: CommitTracker,
    committed: Option<Commitment>,
    last_estimate: Option<String>,
}

impl GraspController {
    pub fn new(cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        let state = HandState::new(cfg.standby_pose);
        Ok(Self {
            tracker: CommitTracker::new(cfg.commit_count),
            cfg,
            state,
            committed: None,
            last_estimate: None,
        })
    }

    pub fn state(&self) -> &HandState {
        &self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn committed_target(&self) -> Option<&str> {
        self.committed.as_ref().map(|c| c.target_id.as_str())
    }

    pub fn committed_entry(&self) -> Option<&GestureLibraryEntry> {
        self.committed.as_ref().map(|c| &c.entry)
    }

    /// Most recent per-frame estimate, committed or not.
    pub fn last_estimate(&self) -> Option<&str> {
        self.last_estimate.as_deref()
    }

    /// Applies an actuator update produced outside the controller.
    pub fn set_state(&mut self, next: HandState) {
        debug_assert!(next.stage >= self.state.stage);
        self.state = next;
    }

    /// One control tick: stage transitions first, then the command for the
    /// resulting stage.
    pub fn step(&mut self, obs: &Observation<'_>, dt: f64) -> Result<ControlCommand> {
        if !(dt > 0.0) {
            return Err(ControlError::InvalidStep(dt));
        }
        if self.state.stage == Stage::IntentEstimation {
            self.update_intent(obs)?;
        }
        if self.state.stage == Stage::Grasping {
            self.lock_on_force();
            let (d, f) = self.target_distance(obs)?;
            if d <= f.d_end() {
                self.state.stage = Stage::GripTightening;
            }
        }

        let target_angles = match self.state.stage {
            Stage::IntentEstimation => self.cfg.standby_pose,
            Stage::Grasping => {
                let (d, f) = self.target_distance(obs)?;
                let mut cmd = eval_gesture(f, d);
                self.hold_locked(&mut cmd);
                cmd
            }
            Stage::GripTightening | Stage::Done => self.tighten(dt),
        };
        if self.state.stage == Stage::GripTightening && self.state.all_locked() {
            self.state.stage = Stage::Done;
        }
        Ok(ControlCommand {
            target_angles,
            stage: self.state.stage,
            selected_target: self.committed_target().map(str::to_string),
        })
    }

    fn update_intent(&mut self, obs: &Observation<'_>) -> Result<()> {
        if obs.track.len() < self.cfg.min_track_len
            || obs.track.span() < self.cfg.min_track_span
            || obs.objects.is_empty()
        {
            return Ok(());
        }
        let estimate = intent::fit_trajectory_line(obs.track)
            .and_then(|line| intent::estimate_target(&line, obs.objects, self.cfg.handedness))
            .ok()
            .map(|e| e.target_id);
        self.last_estimate = estimate.clone();
        let Some(id) = self.tracker.observe(estimate.as_deref()) else {
            return Ok(());
        };
        let object = obs
            .objects
            .iter()
            .find(|o| o.id == id)
            .ok_or_else(|| ControlError::TargetLost(id.clone()))?;
        let entry = gesture::library_lookup(obs.library, &object.object_class, &object.size, &object.cloud)
            .map_err(|e| ControlError::MissingLibraryEntry {
                id: id.clone(),
                reason: e.to_string(),
            })?
            .clone();
        self.committed = Some(Commitment { target_id: id, entry });
        self.state.stage = Stage::Grasping;
        Ok(())
    }

    fn target_distance<'s>(&'s self, obs: &Observation<'_>) -> Result<(f64, &'s gesture::GestureFunction)> {
        let c = self.committed.as_ref().expect("grasping implies a commitment");
        let object = obs
            .objects
            .iter()
            .find(|o| o.id == c.target_id)
            .ok_or_else(|| ControlError::TargetLost(c.target_id.clone()))?;
        Ok((
            gesture::hand_object_distance(&obs.wrist, &object.position),
            &c.entry.function,
        ))
    }

    fn lock_on_force(&mut self) {
        for j in 0..6 {
            if !self.state.is_locked(j) && self.state.forces[j] >= self.cfg.force_threshold {
                self.state.locked[j] = Some(LockReason::Force);
            }
        }
    }

    fn hold_locked(&self, cmd: &mut AngleVector) {
        for j in 0..6 {
            if self.state.is_locked(j) {
                cmd[j] = self.state.angles[j];
            }
        }
    }

    fn tighten(&mut self, dt: f64) -> AngleVector {
        let final_pose = {
            let f = &self
                .committed
                .as_ref()
                .expect("tightening implies a commitment")
                .entry
                .function;
            eval_gesture(f, f.d_end())
        };
        let mut cmd = self.state.angles;
        for j in 0..6 {
            if self.state.is_locked(j) {
                continue;
            }
            let angle = self.state.angles[j];
            match grip_tighten_dof(angle, final_pose[j], self.state.forces[j], &self.cfg) {
                TightenAction::Lock(reason) => {
                    if reason == LockReason::ContractionLimit {
                        let limit = final_pose[j] + self.cfg.contraction_threshold;
                        self.state.angles[j] = angle.min(limit);
                    }
                    self.state.locked[j] = Some(reason);
                    cmd[j] = self.state.angles[j];
                }
                TightenAction::CloseFurther(target) => {
                    let step = self.cfg.tighten_rate * dt;
                    cmd[j] = if target > angle {
                        target.min(angle + step)
                    } else {
                        target
                    };
                }
            }
        }
        cmd
    }
}
