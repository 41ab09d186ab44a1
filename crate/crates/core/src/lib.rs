//! Anthropomorphic grasp pipeline for a vision-guided prosthetic hand.
//!
//! Object geometry comes from depth, hand pose from 21 keypoints. Per object
//! class, a gesture function maps the hand-object distance to six joint
//! angles. At run time the wrist trajectory is regressed to a line to pick the
//! intended object, and a staged controller replays the matching gesture and
//! tightens the grip.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod episode;
pub mod geometry;
pub mod gesture;
pub mod harness;
pub mod intent;
pub mod kinematics;
pub mod metrics;

pub use controller::{ControlCommand, ControllerConfig, GraspController, HandState, Stage};
pub use episode::{EpisodeRecord, Report, SceneSpec};
pub use geometry::{CameraIntrinsics, Point3, PointCloud, SizeParams};
pub use gesture::{GestureFunction, GestureLibrary, GestureLibraryEntry};
pub use intent::{Handedness, SceneObject, WristTrack};
pub use kinematics::{AngleVector, HandKeypoints};
