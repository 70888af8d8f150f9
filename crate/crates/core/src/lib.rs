//! Hardness-aware scene synthesis for LiDAR point clouds.
//!
//! The crate keeps a dynamic object database of ground-truth and
//! pseudo-labeled crops, pastes those crops onto labeled backgrounds without
//! collisions, and schedules pseudo-label admission and paste density over
//! training. A simulated teacher drives the whole loop without a detector.

pub mod augmentation;
pub mod error;
pub mod geometry;
pub mod pseudo_database;
pub mod quality_eval;
pub mod scene_io;
pub mod scheduler;
pub mod seed;
pub mod synthesis;
pub mod teacher_sim;

pub use error::{Error, Result};
pub use geometry::{bev_iou, box_corners, crop, iou_3d, points_in_box, transform, Box3D, Point, PointCloud, RigidTransform};
pub use pseudo_database::{AdmitOutcome, DatabaseSnapshot, ObjectSample, PseudoDatabase, QualityReport};
pub use scene_io::{Annotation, CategorySet, DatabaseManifest, SampleSource, Scene};
pub use scheduler::{HardnessSchedule, ScheduleSpec, Stage};
pub use synthesis::{check_scene_valid, synthesize, PlacementPolicy, SynthesisConfig, SynthesisResult};
