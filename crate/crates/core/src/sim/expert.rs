//! Pure-pursuit expert: drives the bicycle model along the centerline and
//! records the demonstration trajectory for dataset generation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::track::Track;
use crate::sim::vehicle::{VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurePursuit {
    pub lookahead_m: f64,
}

impl Default for PurePursuit {
    fn default() -> Self {
        PurePursuit { lookahead_m: 3.0 }
    }
}

impl PurePursuit {
    /// Steering-wheel command (degrees) for the current pose, plus an updated
    /// centerline hint.
    pub fn steer(
        &self,
        track: &Track,
        x: f64,
        y: f64,
        heading_rad: f64,
        params: &VehicleParams,
        hint: Option<usize>,
    ) -> (f64, usize) {
        let nearest = track.nearest_index(x, y, hint);
        // Walk forward to the first sample at least one lookahead away.
        let mut target = nearest;
        let n = track.sample_count();
        while target + 1 < n {
            let (tx, ty) = track.point(target);
            let d = ((tx - x).powi(2) + (ty - y).powi(2)).sqrt();
            if d >= self.lookahead_m {
                break;
            }
            target += 1;
        }
        let (tx, ty) = track.point(target);
        let dist = ((tx - x).powi(2) + (ty - y).powi(2)).sqrt().max(1e-6);
        let alpha = (ty - y).atan2(tx - x) - heading_rad;
        let road_wheel_rad = (2.0 * params.wheelbase_m * alpha.sin() / dist).atan();
        let wheel_deg = road_wheel_rad.to_degrees() * params.steering_ratio;
        (wheel_deg, nearest)
    }
}

/// One 10 Hz step of the recorded demonstration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajStep {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading_rad: f64,
    pub steering_wheel_deg: f64,
    pub lateral_offset_m: f64,
    pub track_index: usize,
}

/// Drive the expert down the track at constant speed, recording at `1/dt` Hz
/// until the end margin is reached. Aborts if the demanded steering exceeds
/// the actuator limit (track infeasible).
pub fn drive_expert(
    track: &Track,
    speed_mps: f64,
    params: &VehicleParams,
    pp: &PurePursuit,
    dt: f64,
) -> Result<Vec<TrajStep>> {
    if speed_mps <= 0.0 || dt <= 0.0 {
        return Err(Error::InvalidArgument(
            "expert needs positive speed and time step".into(),
        ));
    }
    let start_index = (5.0 / track.spacing()) as usize;
    let end_margin_m = 25.0;
    let (sx, sy) = track.point(start_index);
    let mut state = VehicleState::new(sx, sy, track.heading(start_index), speed_mps);
    let mut hint = Some(start_index);
    let mut steps = Vec::new();
    let max_steps = ((track.length / speed_mps) / dt) as usize + 10;

    for i in 0..max_steps {
        let (wheel, nearest) = pp.steer(track, state.x, state.y, state.heading_rad, params, hint);
        if wheel.abs() > params.max_wheel_angle_deg {
            return Err(Error::InfeasibleTrack(format!(
                "expert demanded {wheel:.0} deg at the wheel near sample {nearest}"
            )));
        }
        hint = Some(nearest);
        if track.arc_of_index(nearest) + end_margin_m >= track.length {
            break;
        }
        state.set_steering(wheel, params);
        steps.push(TrajStep {
            t: i as f64 * dt,
            x: state.x,
            y: state.y,
            heading_rad: state.heading_rad,
            steering_wheel_deg: state.steering_wheel_deg,
            lateral_offset_m: track.lateral_offset(state.x, state.y, nearest),
            track_index: nearest,
        });
        state.step(params, dt);
    }
    if steps.len() < 3 {
        return Err(Error::InfeasibleTrack(
            "track too short to record a demonstration".into(),
        ));
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::track::{generate_track, CurvatureProfile, TrackConfig};

    fn drive(profile: CurvatureProfile, length: f64) -> Vec<TrajStep> {
        let cfg = TrackConfig {
            profile,
            length_m: length,
            obstacle_spacing_m: 0.0,
            ..TrackConfig::default()
        };
        let track = generate_track(&cfg, 5).unwrap();
        drive_expert(
            &track,
            8.33,
            &VehicleParams::default(),
            &PurePursuit::default(),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn straight_track_steering_stays_near_zero() {
        let steps = drive(CurvatureProfile::Straight, 600.0);
        for s in &steps {
            assert!(s.steering_wheel_deg.abs() < 0.5, "{}", s.steering_wheel_deg);
        }
    }

    #[test]
    fn arc_steady_state_matches_bicycle_closed_form() {
        let radius = 150.0;
        let steps = drive(CurvatureProfile::Arc { radius_m: radius }, 700.0);
        let params = VehicleParams::default();
        let expected = (params.wheelbase_m / radius).atan().to_degrees() * params.steering_ratio;
        // Skip the transient, average the steady state.
        let tail = &steps[steps.len() / 2..];
        let mean: f64 =
            tail.iter().map(|s| s.steering_wheel_deg).sum::<f64>() / tail.len() as f64;
        let rel = (mean - expected).abs() / expected;
        assert!(rel < 0.05, "steady steering {mean:.3} vs {expected:.3}");
    }

    #[test]
    fn tracking_error_is_small_on_default_tracks() {
        for seed in [1, 2, 3] {
            let cfg = TrackConfig::default();
            let track = generate_track(&cfg, seed).unwrap();
            let steps = drive_expert(
                &track,
                8.33,
                &VehicleParams::default(),
                &PurePursuit::default(),
                0.1,
            )
            .unwrap();
            let rms = (steps
                .iter()
                .map(|s| s.lateral_offset_m * s.lateral_offset_m)
                .sum::<f64>()
                / steps.len() as f64)
                .sqrt();
            assert!(rms < 0.05, "seed {seed}: lateral RMS {rms:.4} m");
        }
    }

    #[test]
    fn frames_are_tenth_of_a_second_apart() {
        let steps = drive(CurvatureProfile::Straight, 600.0);
        for pair in steps.windows(2) {
            assert!((pair[1].t - pair[0].t - 0.1).abs() < 1e-9);
        }
    }
}
