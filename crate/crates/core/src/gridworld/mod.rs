//! Synthetic urban scenes and a deterministic ground-truth channel oracle.
//!
//! The oracle combines free-space loss on the direct path, a fixed
//! multiplicative penalty per building blocking that path, and optionally one
//! specular wall reflection per building face visible from both endpoints.
//! Powers of all paths add (phases are averaged out).

mod los;
mod scene;
mod truth;

pub use los::{compute_los_map, count_blockers, is_visible, traverse_segment, CellVisit};
pub use scene::{generate_scene, Bounds, EnvironmentScene, Footprint, Obstacle, SceneConfig};
pub use truth::{
    compute_ground_truth_ckm, free_space_amplitude, GroundTruthCkm, TruthConfig, NLOS_PENALTY, REFLECTION_COEFFICIENT, SPEED_OF_LIGHT,
};
