//! Sensor rendering against the synthetic road world: a pinhole camera
//! projecting the ground plane below the horizon, and a ray-cast lidar with
//! per-surface reflectance, per-ring gains, and echo dropout.

use serde::{Deserialize, Serialize};

use crate::lidar::{col_azimuth_deg, row_elevation_deg, LidarPoint, LidarScan, COLS, ROWS};
use crate::rng::unit_hash;
use crate::sim::track::{GroundClass, Track};
use crate::tensor::Tensor;
use crate::color;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorRig {
    pub camera_height_m: f64,
    pub camera_forward_m: f64,
    pub camera_pitch_deg: f64,
    pub camera_hfov_deg: f64,
    pub lidar_height_m: f64,
    pub lidar_forward_m: f64,
}

impl Default for SensorRig {
    fn default() -> Self {
        SensorRig {
            camera_height_m: 1.4,
            camera_forward_m: 1.8,
            camera_pitch_deg: 8.8,
            camera_hfov_deg: 64.0,
            lidar_height_m: 2.0,
            lidar_forward_m: 1.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDims {
    pub height: usize,
    pub width: usize,
}

impl CameraDims {
    pub const FULL: CameraDims = CameraDims {
        height: 63,
        width: 306,
    };
    pub const HALF: CameraDims = CameraDims {
        height: 31,
        width: 153,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weather {
    /// Fog visibility; large values mean clear air.
    pub visibility_m: f64,
    pub brightness: f64,
}

impl Default for Weather {
    fn default() -> Self {
        Weather {
            visibility_m: 2000.0,
            brightness: 1.0,
        }
    }
}

/// World pose of the vehicle reference point (rear axle) plus a hint for
/// centerline lookups.
#[derive(Debug, Clone, Copy)]
pub struct WorldPose {
    pub x: f64,
    pub y: f64,
    pub heading_rad: f64,
    pub track_hint: usize,
}

/// Everything the renderers need besides the track and the pose.
#[derive(Debug, Clone)]
pub struct RenderContext {
    pub rig: SensorRig,
    pub dims: CameraDims,
    pub weather: Weather,
    /// Systematic per-ring reflectance gains (simulates sensor channel
    /// deviations that reflectance normalization must cancel).
    pub ring_gains: Vec<f64>,
    /// World-anchored texture stream.
    pub texture_seed: u64,
    /// Per-ray echo dropout probability added on top of the surface value.
    pub extra_dropout: f64,
}

impl RenderContext {
    pub fn new(rig: SensorRig, dims: CameraDims, weather: Weather, world_seed: u64) -> Self {
        let ring_gains = (0..ROWS)
            .map(|r| 0.75 + 0.5 * unit_hash(world_seed, 0xA11, r as u64, 0))
            .collect();
        RenderContext {
            rig,
            dims,
            weather,
            ring_gains,
            texture_seed: world_seed,
            extra_dropout: 0.0,
        }
    }
}

struct SurfaceParams {
    road_rgb: [f64; 3],
    line_rgb: [f64; 3],
    shoulder_rgb: [f64; 3],
    offroad_rgb: [f64; 3],
    sky_rgb: [f64; 3],
    color_noise: f64,
    road_refl: f64,
    line_refl: f64,
    shoulder_refl: f64,
    offroad_refl: f64,
    refl_noise: f64,
    dropout: f64,
    offroad_height: f64,
}

fn surface_params(track: &Track) -> SurfaceParams {
    use crate::sim::track::Surface::*;
    match track.surface {
        AsphaltLanelines => SurfaceParams {
            road_rgb: [0.28, 0.28, 0.31],
            line_rgb: [0.85, 0.85, 0.78],
            shoulder_rgb: [0.46, 0.42, 0.34],
            offroad_rgb: [0.22, 0.38, 0.18],
            sky_rgb: [0.75, 0.82, 0.9],
            color_noise: 0.05,
            road_refl: 0.15,
            line_refl: 0.80,
            shoulder_refl: 0.30,
            offroad_refl: 0.45,
            refl_noise: 0.10,
            dropout: 0.02,
            offroad_height: 0.25,
        },
        AsphaltNoLines => SurfaceParams {
            road_rgb: [0.30, 0.30, 0.32],
            line_rgb: [0.30, 0.30, 0.32],
            shoulder_rgb: [0.48, 0.44, 0.35],
            offroad_rgb: [0.24, 0.40, 0.20],
            sky_rgb: [0.75, 0.82, 0.9],
            color_noise: 0.05,
            road_refl: 0.16,
            line_refl: 0.16,
            shoulder_refl: 0.32,
            offroad_refl: 0.46,
            refl_noise: 0.10,
            dropout: 0.02,
            offroad_height: 0.25,
        },
        Gravel => SurfaceParams {
            road_rgb: [0.50, 0.45, 0.37],
            line_rgb: [0.50, 0.45, 0.37],
            shoulder_rgb: [0.42, 0.40, 0.31],
            offroad_rgb: [0.25, 0.40, 0.20],
            sky_rgb: [0.78, 0.82, 0.88],
            color_noise: 0.09,
            road_refl: 0.35,
            line_refl: 0.35,
            shoulder_refl: 0.42,
            offroad_refl: 0.50,
            refl_noise: 0.14,
            dropout: 0.03,
            offroad_height: 0.30,
        },
        Snow => SurfaceParams {
            road_rgb: [0.72, 0.74, 0.78],
            line_rgb: [0.72, 0.74, 0.78],
            shoulder_rgb: [0.86, 0.88, 0.92],
            offroad_rgb: [0.90, 0.92, 0.95],
            sky_rgb: [0.82, 0.84, 0.88],
            color_noise: 0.04,
            road_refl: 0.50,
            line_refl: 0.50,
            shoulder_refl: 0.68,
            offroad_refl: 0.72,
            refl_noise: 0.12,
            dropout: 0.07,
            offroad_height: 0.40,
        },
    }
}

/// Pixel classes in the label map.
pub const LABEL_ROAD: u8 = 0;
pub const LABEL_LANE_LINE: u8 = 1;
pub const LABEL_SHOULDER: u8 = 2;
pub const LABEL_OFFROAD: u8 = 3;
pub const LABEL_SKY: u8 = 4;

fn class_label(c: GroundClass) -> u8 {
    match c {
        GroundClass::Road => LABEL_ROAD,
        GroundClass::LaneLine => LABEL_LANE_LINE,
        GroundClass::Shoulder => LABEL_SHOULDER,
        GroundClass::OffRoad => LABEL_OFFROAD,
    }
}

fn world_texture(ctx: &RenderContext, px: f64, py: f64) -> f64 {
    let qx = (px * 4.0).floor() as i64 as u64;
    let qy = (py * 4.0).floor() as i64 as u64;
    unit_hash(ctx.texture_seed, qx, qy, 0x7e) - 0.5
}

/// Render the YUV camera image with a per-pixel class map. The image covers
/// the ground below the horizon; an exposure scalar can saturate it.
pub fn render_camera_labeled(
    track: &Track,
    ctx: &RenderContext,
    pose: &WorldPose,
    offset_lateral: f64,
    offset_vertical: f64,
    exposure: f64,
    seed: u64,
) -> (Tensor<f32>, Vec<u8>) {
    let p = surface_params(track);
    let (h, w) = (ctx.dims.height, ctx.dims.width);
    let focal = (w as f64 / 2.0) / (ctx.rig.camera_hfov_deg.to_radians() / 2.0).tan();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let pitch = ctx.rig.camera_pitch_deg.to_radians();
    let (sin_h, cos_h) = pose.heading_rad.sin_cos();

    // Camera position: forward of the reference point, displaced laterally
    // (left positive) and vertically by the augmentation offset.
    let cam_x = pose.x + cos_h * ctx.rig.camera_forward_m - sin_h * offset_lateral;
    let cam_y = pose.y + sin_h * ctx.rig.camera_forward_m + cos_h * offset_lateral;
    let cam_z = ctx.rig.camera_height_m + offset_vertical;

    let mut img = vec![0.0f32; 3 * h * w];
    let mut labels = vec![LABEL_SKY; h * w];
    let plane = h * w;

    for r in 0..h {
        for c in 0..w {
            // Camera-frame ray: x forward, y left, z up.
            let ray = [1.0, (cx - c as f64) / focal, (cy - r as f64) / focal];
            // Pitch down, then rotate to world heading.
            let rx = ray[0] * pitch.cos() + ray[2] * pitch.sin();
            let rz = -ray[0] * pitch.sin() + ray[2] * pitch.cos();
            let ry = ray[1];
            let wx = rx * cos_h - ry * sin_h;
            let wy = rx * sin_h + ry * cos_h;
            let wz = rz;

            let (mut rgb, label, dist);
            if wz < -1e-6 {
                let t = cam_z / -wz;
                let gx = cam_x + t * wx;
                let gy = cam_y + t * wy;
                dist = t * (wx * wx + wy * wy + wz * wz).sqrt();
                let (class, _) = track.classify(gx, gy, pose.track_hint);
                label = class_label(class);
                let base = match class {
                    GroundClass::Road => p.road_rgb,
                    GroundClass::LaneLine => p.line_rgb,
                    GroundClass::Shoulder => p.shoulder_rgb,
                    GroundClass::OffRoad => p.offroad_rgb,
                };
                let tex = world_texture(ctx, gx, gy) * p.color_noise;
                rgb = [base[0] + tex, base[1] + tex, base[2] + tex];
            } else {
                label = LABEL_SKY;
                dist = ctx.weather.visibility_m;
                rgb = p.sky_rgb;
            }

            // Fog fades everything toward the sky color.
            let fog = 1.0 - (-dist / ctx.weather.visibility_m).exp();
            for (v, sky) in rgb.iter_mut().zip(p.sky_rgb) {
                *v = *v * (1.0 - fog) + sky * fog;
            }
            // Sensor noise, brightness, exposure.
            let noise = (unit_hash(seed, r as u64, c as u64, 0xCA) - 0.5) * 0.02;
            let gain = ctx.weather.brightness * exposure;
            let (cr, cg, cb) = (
                color::clamp01((rgb[0] + noise) * gain),
                color::clamp01((rgb[1] + noise) * gain),
                color::clamp01((rgb[2] + noise) * gain),
            );
            let (y, u, v) = color::rgb_to_yuv(cr, cg, cb);
            let idx = r * w + c;
            img[idx] = y as f32;
            img[plane + idx] = u as f32;
            img[2 * plane + idx] = v as f32;
            labels[idx] = label;
        }
    }
    (
        Tensor::new(vec![3, h, w], img).expect("sized buffer"),
        labels,
    )
}

pub fn render_camera(
    track: &Track,
    ctx: &RenderContext,
    pose: &WorldPose,
    offset_lateral: f64,
    offset_vertical: f64,
    exposure: f64,
    seed: u64,
) -> Tensor<f32> {
    render_camera_labeled(track, ctx, pose, offset_lateral, offset_vertical, exposure, seed).0
}

/// Hit classes for lidar echoes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LidarHit {
    Road,
    LaneLine,
    Shoulder,
    OffRoad,
    Obstacle,
    NoEcho,
}

/// Cast the 11 x 310 firing pattern from the sensor pose. Points are in the
/// sensor frame (x forward, y left, z up), reflectance raw (surface albedo
/// times ring gain times noise).
pub fn render_lidar_labeled(
    track: &Track,
    ctx: &RenderContext,
    pose: &WorldPose,
    timestamp: f64,
    seed: u64,
) -> (LidarScan, Vec<LidarHit>) {
    let p = surface_params(track);
    let (sin_h, cos_h) = pose.heading_rad.sin_cos();
    let sx = pose.x + cos_h * ctx.rig.lidar_forward_m;
    let sy = pose.y + sin_h * ctx.rig.lidar_forward_m;
    let sz = ctx.rig.lidar_height_m;

    let mut points = Vec::with_capacity(ROWS * COLS);
    let mut hits = Vec::with_capacity(ROWS * COLS);

    for row in 0..ROWS {
        let e = row_elevation_deg(row).to_radians();
        let (sin_e, cos_e) = e.sin_cos();
        for col in 0..COLS {
            let a = col_azimuth_deg(col).to_radians();
            // Sensor frame direction.
            let dx_s = cos_e * a.cos();
            let dy_s = cos_e * a.sin();
            let dz = sin_e;
            // World frame.
            let dx = dx_s * cos_h - dy_s * sin_h;
            let dy = dx_s * sin_h + dy_s * cos_h;

            let mut best_t = f64::INFINITY;
            let mut hit = LidarHit::NoEcho;
            let mut albedo = 0.0;

            if dz < -1e-9 {
                let t0 = sz / -dz;
                let gx = sx + t0 * dx;
                let gy = sy + t0 * dy;
                let (class, _) = track.classify(gx, gy, pose.track_hint);
                if class == GroundClass::OffRoad && p.offroad_height > 0.0 {
                    // Raised verge: intersect the elevated plane; keep it if
                    // the hit is still off the road.
                    let t1 = (sz - p.offroad_height) / -dz;
                    let g1x = sx + t1 * dx;
                    let g1y = sy + t1 * dy;
                    if track.classify(g1x, g1y, pose.track_hint).0 == GroundClass::OffRoad {
                        best_t = t1;
                    } else {
                        best_t = t0;
                    }
                    hit = LidarHit::OffRoad;
                    albedo = p.offroad_refl;
                } else {
                    best_t = t0;
                    hit = match class {
                        GroundClass::Road => {
                            albedo = p.road_refl;
                            LidarHit::Road
                        }
                        GroundClass::LaneLine => {
                            albedo = p.line_refl;
                            LidarHit::LaneLine
                        }
                        GroundClass::Shoulder => {
                            albedo = p.shoulder_refl;
                            LidarHit::Shoulder
                        }
                        GroundClass::OffRoad => {
                            albedo = p.offroad_refl;
                            LidarHit::OffRoad
                        }
                    };
                }
            }

            // Obstacles can occlude the ground hit.
            for ob in &track.obstacles {
                let ocx = ob.x - sx;
                let ocy = ob.y - sy;
                let a2 = dx * dx + dy * dy;
                if a2 < 1e-12 {
                    continue;
                }
                let b = -2.0 * (ocx * dx + ocy * dy);
                let c0 = ocx * ocx + ocy * ocy - ob.radius * ob.radius;
                let disc = b * b - 4.0 * a2 * c0;
                if disc <= 0.0 {
                    continue;
                }
                let t = (-b - disc.sqrt()) / (2.0 * a2);
                if t > 0.5 && t < best_t {
                    let z_hit = sz + t * dz;
                    if z_hit >= 0.0 && z_hit <= ob.height {
                        best_t = t;
                        hit = LidarHit::Obstacle;
                        albedo = ob.reflectance;
                    }
                }
            }

            if hit == LidarHit::NoEcho || !best_t.is_finite() {
                hits.push(LidarHit::NoEcho);
                continue;
            }

            // Echo dropout.
            let drop_p = p.dropout + ctx.extra_dropout;
            if unit_hash(seed, row as u64, col as u64, 0xD0) < drop_p {
                hits.push(LidarHit::NoEcho);
                continue;
            }

            // Reflectance: albedo x systematic ring gain x world-anchored
            // noise for ground, per-ray noise for obstacles.
            let noise = if hit == LidarHit::Obstacle {
                (unit_hash(seed, row as u64, col as u64, 0x0b) - 0.5) * p.refl_noise
            } else {
                let gx = sx + best_t * dx;
                let gy = sy + best_t * dy;
                world_texture(ctx, gx, gy) * p.refl_noise
            };
            let reflectance = (albedo * (1.0 + noise) * ctx.ring_gains[row]).max(1e-4);

            points.push(LidarPoint {
                x: best_t * dx_s,
                y: best_t * dy_s,
                z: best_t * dz,
                reflectance,
                ring: Some(row as u8),
            });
            hits.push(hit);
        }
    }

    (
        LidarScan {
            points,
            timestamp,
        },
        hits,
    )
}

pub fn render_lidar(
    track: &Track,
    ctx: &RenderContext,
    pose: &WorldPose,
    timestamp: f64,
    seed: u64,
) -> LidarScan {
    render_lidar_labeled(track, ctx, pose, timestamp, seed).0
}

/// Road-echo mask aligned with the scan points (true only for plain road
/// returns), used when fitting the reflectance model.
pub fn road_mask(hits: &[LidarHit]) -> Vec<bool> {
    hits.iter()
        .filter(|h| **h != LidarHit::NoEcho)
        .map(|h| *h == LidarHit::Road)
        .collect()
}

/// Consistency check helper used by tests and dataset generation.
pub fn pose_of(track: &Track, index: usize) -> WorldPose {
    let (x, y) = track.point(index);
    WorldPose {
        x,
        y,
        heading_rad: track.heading(index),
        track_hint: index,
    }
}
