//! Synthetic road world: track generation, sensor rendering, the expert
//! demonstrator, output smoothing, and closed-loop evaluation.

pub mod eval;
pub mod expert;
pub mod render;
pub mod smoother;
pub mod track;
pub mod vehicle;

pub use eval::{
    closed_loop_eval, merge_interventions, offline_eval, rmse_deg, ClosedLoopOptions, Controller,
    RunMetrics, TraceRow,
};
pub use expert::{drive_expert, PurePursuit, TrajStep};
pub use render::{
    render_camera, render_camera_labeled, render_lidar, render_lidar_labeled, CameraDims,
    LidarHit, RenderContext, SensorRig, Weather, WorldPose,
};
pub use smoother::{smooth_and_guard, SmootherConfig, SmootherState};
pub use track::{generate_track, CurvatureProfile, GroundClass, Surface, Track, TrackConfig};
pub use vehicle::{VehicleParams, VehicleState};
