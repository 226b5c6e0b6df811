//! Closed-loop evaluation with the level-of-autonomy metric, and offline
//! RMSE evaluation of recorded frames.

use serde::{Deserialize, Serialize};

use crate::arch::{Network, NormStats};
use crate::error::{Error, Result};
use crate::lidar::{self, RangeImage, ReflectanceModel};
use crate::rng::unit_hash;
use crate::sim::expert::PurePursuit;
use crate::sim::render::{render_camera, render_lidar, RenderContext, WorldPose};
use crate::sim::smoother::{SmootherConfig, SmootherState};
use crate::sim::track::Track;
use crate::sim::vehicle::{VehicleParams, VehicleState};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedLoopOptions {
    pub duration_s: f64,
    pub dt: f64,
    pub speed_mps: f64,
    /// Fixed manual-time cost of one virtual intervention.
    pub penalty_s: f64,
    /// Manual segments separated by less autonomous time than this merge.
    pub merge_window_s: f64,
    /// Probability per frame of an overexposure spike in the camera.
    pub exposure_spike_prob: f64,
    pub exposure_spike: f64,
    pub seed: u64,
}

impl Default for ClosedLoopOptions {
    fn default() -> Self {
        ClosedLoopOptions {
            duration_s: 300.0,
            dt: 0.1,
            speed_mps: 30.0 / 3.6,
            penalty_s: 6.0,
            merge_window_s: 3.0,
            exposure_spike_prob: 0.0,
            exposure_spike: 6.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub lateral_offset_m: f64,
    pub raw_deg: f64,
    pub smoothed_deg: f64,
    pub commanded_deg: f64,
}

#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub operation_time_s: f64,
    pub autonomous_time_s: f64,
    pub interventions: usize,
    pub trace: Vec<TraceRow>,
}

impl RunMetrics {
    /// Autonomously driven time over operation test time.
    pub fn autonomy(&self) -> f64 {
        if self.operation_time_s <= 0.0 {
            return 1.0;
        }
        self.autonomous_time_s / self.operation_time_s
    }
}

/// Merge manual segments separated by less than `merge_window_s` of
/// autonomous operation; the separating time counts as manual. Segments are
/// (is_manual, duration) in timeline order. Returns (interventions,
/// manual_time, autonomous_time).
pub fn merge_interventions(segments: &[(bool, f64)], merge_window_s: f64) -> (usize, f64, f64) {
    // Reclassify short autonomous gaps between manual blocks.
    let mut merged: Vec<(bool, f64)> = Vec::new();
    for (i, &(manual, dur)) in segments.iter().enumerate() {
        let mut manual = manual;
        if !manual && dur < merge_window_s {
            let prev_manual = merged.last().map(|s| s.0).unwrap_or(false);
            let next_manual = segments[i + 1..].iter().find(|s| s.1 > 0.0).map(|s| s.0);
            if prev_manual && next_manual == Some(true) {
                manual = true;
            }
        }
        match merged.last_mut() {
            Some(last) if last.0 == manual => last.1 += dur,
            _ => merged.push((manual, dur)),
        }
    }
    let interventions = merged.iter().filter(|s| s.0).count();
    let manual: f64 = merged.iter().filter(|s| s.0).map(|s| s.1).sum();
    let auto: f64 = merged.iter().filter(|s| !s.0).map(|s| s.1).sum();
    (interventions, manual, auto)
}

/// Steering sources for the closed loop.
pub enum Controller<'a> {
    Network {
        net: &'a Network<f32>,
        norm: &'a NormStats,
        reflect: &'a ReflectanceModel,
        lidar_decimate: usize,
    },
    /// Hand-written reference that steers by pure pursuit on the known
    /// centerline; closes the loop perfectly by construction.
    CenterlineOracle(PurePursuit),
}

/// Normalize raw sensor data into network inputs.
pub fn network_inputs(
    net: &Network<f32>,
    norm: &NormStats,
    lidar_decimate: usize,
    camera: Option<&Tensor<f32>>,
    lidar_img: Option<&RangeImage>,
) -> (Option<Tensor<f32>>, Option<Tensor<f32>>) {
    let cam = if net.variant().uses_camera() {
        camera.map(|c| norm.normalize_camera(c))
    } else {
        None
    };
    let lid = if net.variant().uses_lidar() {
        lidar_img.map(|img| norm.normalize_lidar(&img.decimate_columns::<f32>(lidar_decimate)))
    } else {
        None
    };
    (cam, lid)
}

/// Run the 10 Hz control loop: render sensors, predict, smooth and guard,
/// steer the bicycle model. A virtual intervention fires when the vehicle
/// leaves the lane; it resets the vehicle to the centerline and charges a
/// fixed manual-time penalty to operation time.
pub fn closed_loop_eval(
    controller: &Controller<'_>,
    track: &Track,
    ctx: &RenderContext,
    vehicle: &VehicleParams,
    smoother_cfg: &SmootherConfig,
    opts: &ClosedLoopOptions,
) -> Result<RunMetrics> {
    if opts.duration_s <= 0.0 || opts.dt <= 0.0 {
        return Err(Error::InvalidArgument(
            "closed loop needs positive duration and dt".into(),
        ));
    }
    let start_index = (5.0 / track.spacing()) as usize;
    let (sx, sy) = track.point(start_index);
    let mut state = VehicleState::new(sx, sy, track.heading(start_index), opts.speed_mps);
    let mut smoother = SmootherState::new(*smoother_cfg);
    let mut hint = start_index;

    let mut segments: Vec<(bool, f64)> = Vec::new();
    let push_segment = |segments: &mut Vec<(bool, f64)>, manual: bool, dur: f64| {
        match segments.last_mut() {
            Some(last) if last.0 == manual => last.1 += dur,
            _ => segments.push((manual, dur)),
        }
    };

    let mut trace = Vec::new();
    let mut op_time = 0.0;
    let mut step_index: u64 = 0;
    let end_margin_m = 20.0;

    while op_time + 1e-9 < opts.duration_s {
        if track.arc_of_index(hint) + end_margin_m >= track.length {
            break; // ran off the end of the generated world
        }
        let pose = WorldPose {
            x: state.x,
            y: state.y,
            heading_rad: state.heading_rad,
            track_hint: hint,
        };
        let raw = match controller {
            Controller::CenterlineOracle(pp) => {
                let (wheel, nearest) =
                    pp.steer(track, state.x, state.y, state.heading_rad, vehicle, Some(hint));
                hint = nearest;
                wheel
            }
            Controller::Network {
                net,
                norm,
                reflect,
                lidar_decimate,
            } => {
                let exposure = if opts.exposure_spike_prob > 0.0
                    && unit_hash(opts.seed, step_index, 0, 0xE0) < opts.exposure_spike_prob
                {
                    opts.exposure_spike
                } else {
                    1.0
                };
                let camera = net.variant().uses_camera().then(|| {
                    render_camera(
                        track,
                        ctx,
                        &pose,
                        0.0,
                        0.0,
                        exposure,
                        crate::rng::derive(opts.seed, "sim.camera", step_index),
                    )
                });
                let lidar_img = if net.variant().uses_lidar() {
                    let scan = render_lidar(
                        track,
                        ctx,
                        &pose,
                        op_time,
                        crate::rng::derive(opts.seed, "sim.lidar", step_index),
                    );
                    let (img, _) = lidar::project(&scan, reflect)?;
                    Some(img)
                } else {
                    None
                };
                let (cam, lid) =
                    network_inputs(net, norm, *lidar_decimate, camera.as_ref(), lidar_img.as_ref());
                net.forward(cam.as_ref(), lid.as_ref())? as f64
            }
        };

        let out = smoother.step(raw);
        state.set_steering(out.commanded_deg, vehicle);
        state.step(vehicle, opts.dt);
        op_time += opts.dt;
        push_segment(&mut segments, false, opts.dt);
        step_index += 1;

        hint = track.nearest_index(state.x, state.y, Some(hint));
        let lateral = track.lateral_offset(state.x, state.y, hint);
        trace.push(TraceRow {
            t: op_time,
            lateral_offset_m: lateral,
            raw_deg: raw,
            smoothed_deg: out.smoothed_deg,
            commanded_deg: out.commanded_deg,
        });

        if lateral.abs() > track.lane_width / 2.0 {
            // Virtual intervention: reset to the centerline, heading aligned.
            let (cx, cy) = track.point(hint);
            state = VehicleState::new(cx, cy, track.heading(hint), opts.speed_mps);
            smoother.reset();
            op_time += opts.penalty_s;
            push_segment(&mut segments, true, opts.penalty_s);
        }
    }

    let (interventions, manual, auto) = merge_interventions(&segments, opts.merge_window_s);
    debug_assert!((manual + auto - op_time).abs() < 1e-6);
    Ok(RunMetrics {
        operation_time_s: op_time,
        autonomous_time_s: auto,
        interventions,
        trace,
    })
}

/// Root-mean-square error over (prediction, label) pairs in degrees.
pub fn rmse_deg(pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    (pairs.iter().map(|(p, l)| (p - l) * (p - l)).sum::<f64>() / pairs.len() as f64).sqrt()
}

/// Offline evaluation: RMSE between predictions and labels over recorded
/// frames (center pose, no jitter). Returns the per-frame log so the metric
/// can be recomputed independently.
pub fn offline_eval<I>(
    net: &Network<f32>,
    norm: &NormStats,
    lidar_decimate: usize,
    frames: I,
) -> Result<(f64, Vec<(f64, f64)>)>
where
    I: IntoIterator<Item = Result<(Option<Tensor<f32>>, Option<RangeImage>, f64)>>,
{
    let mut pairs = Vec::new();
    for frame in frames {
        let (camera, lidar_img, label) = frame?;
        let (cam, lid) = network_inputs(net, norm, lidar_decimate, camera.as_ref(), lidar_img.as_ref());
        let pred = net.forward(cam.as_ref(), lid.as_ref())? as f64;
        pairs.push((pred, label));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "offline evaluation over an empty sequence".into(),
        ));
    }
    Ok((rmse_deg(&pairs), pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autonomy_is_one_without_interventions() {
        let m = RunMetrics {
            operation_time_s: 120.0,
            autonomous_time_s: 120.0,
            interventions: 0,
            trace: Vec::new(),
        };
        assert_eq!(m.autonomy(), 1.0);
    }

    #[test]
    fn autonomy_hand_value_two_interventions() {
        // 600 s of operation, 2 interventions at 6 s: (600 - 12) / 600.
        let segments = [
            (false, 200.0),
            (true, 6.0),
            (false, 200.0),
            (true, 6.0),
            (false, 188.0),
        ];
        let (n, manual, auto) = merge_interventions(&segments, 3.0);
        assert_eq!(n, 2);
        let op = manual + auto;
        assert_eq!(op, 600.0);
        assert!((auto / op - 0.98).abs() < 1e-12);
    }

    #[test]
    fn close_interventions_merge_into_one() {
        // Manual blocks separated by 2 s of autonomous driving: one
        // intervention whose manual time swallows the gap.
        let segments = [(false, 10.0), (true, 6.0), (false, 2.0), (true, 6.0), (false, 30.0)];
        let (n, manual, auto) = merge_interventions(&segments, 3.0);
        assert_eq!(n, 1);
        assert_eq!(manual, 14.0);
        assert_eq!(auto, 40.0);
    }

    #[test]
    fn three_second_gap_does_not_merge() {
        let segments = [(false, 10.0), (true, 6.0), (false, 3.0), (true, 6.0), (false, 30.0)];
        let (n, manual, _) = merge_interventions(&segments, 3.0);
        assert_eq!(n, 2);
        assert_eq!(manual, 12.0);
    }

    #[test]
    fn adding_an_intervention_never_increases_autonomy() {
        let base = [(false, 100.0)];
        let (_, m0, a0) = merge_interventions(&base, 3.0);
        let with = [(false, 50.0), (true, 6.0), (false, 50.0)];
        let (_, m1, a1) = merge_interventions(&with, 3.0);
        let auto0 = a0 / (a0 + m0);
        let auto1 = a1 / (a1 + m1);
        assert!(auto1 < auto0);
    }

    #[test]
    fn rmse_hand_values() {
        assert_eq!(rmse_deg(&[(3.0, 3.0), (4.0, 4.0)]), 0.0);
        let v = rmse_deg(&[(0.0, 3.0), (0.0, 4.0)]);
        assert!((v - 12.5f64.sqrt()).abs() < 1e-12);
    }
}
