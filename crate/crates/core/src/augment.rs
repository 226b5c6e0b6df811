//! Recovery-training augmentation: steering correction for displaced sensor
//! poses, lidar range-image re-interpolation at a shifted pose, and
//! photometric / reflectance jitter.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color;
use crate::error::{Error, Result};
use crate::lidar::{
    col_azimuth_deg, row_elevation_deg, RangeImage, AZIMUTH_BIN_DEG, COLS, ROWS,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Sensor pose displacement. Lateral is positive to the left, vertical
/// positive up; yaw stays zero in this work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseOffset {
    pub lateral: f64,
    pub vertical: f64,
    #[serde(default)]
    pub yaw: f64,
}

impl PoseOffset {
    pub const CENTER: PoseOffset = PoseOffset {
        lateral: 0.0,
        vertical: 0.0,
        yaw: 0.0,
    };

    pub fn new(lateral: f64, vertical: f64) -> Self {
        PoseOffset {
            lateral,
            vertical,
            yaw: 0.0,
        }
    }

    pub fn is_center(&self) -> bool {
        self.lateral == 0.0 && self.vertical == 0.0 && self.yaw == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.lateral.abs() > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "pose offset lateral {} m exceeds the 1.0 m sanity bound",
                self.lateral
            )));
        }
        if !self.lateral.is_finite() || !self.vertical.is_finite() || !self.yaw.is_finite() {
            return Err(Error::NonFinite {
                what: "pose offset".into(),
            });
        }
        Ok(())
    }
}

/// The three recording poses: center and the two side-sensor positions
/// (0.39 m to each side, 0.08 m higher).
pub fn standard_poses() -> [PoseOffset; 3] {
    [
        PoseOffset::CENTER,
        PoseOffset::new(0.39, 0.08),
        PoseOffset::new(-0.39, 0.08),
    ]
}

/// Steering label correction for a laterally displaced pose:
/// theta - w * d, with w in degrees per meter.
pub fn correct_steering(theta_orig_deg: f64, displacement_m: f64, w_deg_per_m: f64) -> f64 {
    theta_orig_deg - w_deg_per_m * displacement_m
}

/// Photometric / reflectance jitter ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    pub hue_shift_deg: f64,
    pub gamma_range: (f64, f64),
    pub saturation_range: (f64, f64),
    pub reflectance_scale_range: (f64, f64),
}

impl Default for JitterConfig {
    fn default() -> Self {
        JitterConfig {
            hue_shift_deg: 12.0,
            gamma_range: (0.8, 1.25),
            saturation_range: (0.8, 1.2),
            reflectance_scale_range: (0.9, 1.1),
        }
    }
}

impl JitterConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |r: (f64, f64)| r.0 > 0.0 && r.1 >= r.0;
        if !pos(self.gamma_range)
            || !pos(self.saturation_range)
            || !pos(self.reflectance_scale_range)
            || self.hue_shift_deg < 0.0
        {
            return Err(Error::InvalidArgument(
                "jitter ranges must be strictly positive and ordered".into(),
            ));
        }
        Ok(())
    }

    /// Identity configuration: all transforms become exact no-ops.
    pub fn identity() -> Self {
        JitterConfig {
            hue_shift_deg: 0.0,
            gamma_range: (1.0, 1.0),
            saturation_range: (1.0, 1.0),
            reflectance_scale_range: (1.0, 1.0),
        }
    }
}

/// Concrete parameters drawn for one camera image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraJitter {
    pub hue_deg: f64,
    pub gamma: f64,
    pub saturation: f64,
}

impl CameraJitter {
    pub const IDENTITY: CameraJitter = CameraJitter {
        hue_deg: 0.0,
        gamma: 1.0,
        saturation: 1.0,
    };

    pub fn sample(cfg: &JitterConfig, rng: &mut ChaCha8Rng) -> Self {
        let span = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        CameraJitter {
            hue_deg: if cfg.hue_shift_deg > 0.0 {
                rng.random_range(-cfg.hue_shift_deg..cfg.hue_shift_deg)
            } else {
                0.0
            },
            gamma: span(cfg.gamma_range.0, cfg.gamma_range.1, rng),
            saturation: span(cfg.saturation_range.0, cfg.saturation_range.1, rng),
        }
    }
}

/// Hue rotation, saturation scale and gamma applied in RGB/HSV space; the
/// image stays YUV at the interface, values clamped to the valid range.
pub fn apply_camera_jitter<S: Scalar>(img: &Tensor<S>, jitter: &CameraJitter) -> Tensor<S> {
    let [c, h, w] = *img.shape() else {
        panic!("camera image must be 3 x H x W");
    };
    assert_eq!(c, 3, "camera image must have 3 channels");
    let plane = h * w;
    let mut out = img.clone();
    let identity = *jitter == CameraJitter::IDENTITY;
    if identity {
        return out;
    }
    for p in 0..plane {
        let y = img.data()[p].to_f64();
        let u = img.data()[plane + p].to_f64();
        let v = img.data()[2 * plane + p].to_f64();
        let (r, g, b) = color::yuv_to_rgb(y, u, v);
        let (r, g, b) = (color::clamp01(r), color::clamp01(g), color::clamp01(b));
        let (hh, ss, vv) = color::rgb_to_hsv(r, g, b);
        let (r, g, b) = color::hsv_to_rgb(
            hh + jitter.hue_deg,
            (ss * jitter.saturation).clamp(0.0, 1.0),
            vv,
        );
        let (r, g, b) = (
            color::clamp01(r).powf(jitter.gamma),
            color::clamp01(g).powf(jitter.gamma),
            color::clamp01(b).powf(jitter.gamma),
        );
        let (y, u, v) = color::rgb_to_yuv(r, g, b);
        out.data_mut()[p] = S::from_f64(y);
        out.data_mut()[plane + p] = S::from_f64(u);
        out.data_mut()[2 * plane + p] = S::from_f64(v);
    }
    out
}

pub fn jitter_camera<S: Scalar>(
    img: &Tensor<S>,
    cfg: &JitterConfig,
    rng: &mut ChaCha8Rng,
) -> Tensor<S> {
    apply_camera_jitter(img, &CameraJitter::sample(cfg, rng))
}

/// Multiply the reflectance channel of each row by a fixed factor; zero
/// cells stay exactly zero.
pub fn apply_row_reflectance_factors(img: &RangeImage, factors: &[f64]) -> RangeImage {
    assert_eq!(factors.len(), ROWS);
    let mut out = img.clone();
    for row in 0..ROWS {
        let f = factors[row] as f32;
        for col in 0..COLS {
            if img.occupied(row, col) {
                let v = img.get(3, row, col) * f;
                let (x, y, z) = (img.get(0, row, col), img.get(1, row, col), img.get(2, row, col));
                out.set_cell(row, col, x, y, z, v);
            }
        }
    }
    out
}

/// Independent per-row rescaling of the normalized reflectance channel.
pub fn jitter_reflectance_rows(
    img: &RangeImage,
    cfg: &JitterConfig,
    rng: &mut ChaCha8Rng,
) -> RangeImage {
    let (lo, hi) = cfg.reflectance_scale_range;
    let factors: Vec<f64> = (0..ROWS)
        .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
        .collect();
    apply_row_reflectance_factors(img, &factors)
}

/// Over- or under-expose a YUV image by scaling in RGB and clamping; used
/// for overexposure events and evaluation-time corruption.
pub fn expose_camera<S: Scalar>(img: &Tensor<S>, exposure: f64) -> Tensor<S> {
    let [c, h, w] = *img.shape() else {
        panic!("camera image must be 3 x H x W");
    };
    assert_eq!(c, 3);
    let plane = h * w;
    let mut out = img.clone();
    for p in 0..plane {
        let y = img.data()[p].to_f64();
        let u = img.data()[plane + p].to_f64();
        let v = img.data()[2 * plane + p].to_f64();
        let (r, g, b) = color::yuv_to_rgb(y, u, v);
        let (r, g, b) = (
            color::clamp01(r * exposure),
            color::clamp01(g * exposure),
            color::clamp01(b * exposure),
        );
        let (y, u, v) = color::rgb_to_yuv(r, g, b);
        out.data_mut()[p] = S::from_f64(y);
        out.data_mut()[plane + p] = S::from_f64(u);
        out.data_mut()[2 * plane + p] = S::from_f64(v);
    }
    out
}

/// Radial gap above which two neighboring echoes are treated as separate
/// objects and never bridged by interpolation.
pub const GAP_LIMIT_M: f64 = 3.0;

/// How far (in azimuth bins) a single sample may extend when interpolation
/// is not allowed.
const SNAP_REACH_BINS: f64 = 0.6;

struct RingSample {
    az_deg: f64,
    range: f64,
    refl: f32,
    col: usize,
}

fn snap(candidates: &[&RingSample], az: f64) -> Option<(f64, f32)> {
    let reach = SNAP_REACH_BINS * AZIMUTH_BIN_DEG;
    candidates
        .iter()
        .filter(|s| (s.az_deg - az).abs() <= reach)
        .min_by(|a, b| {
            (a.az_deg - az)
                .abs()
                .partial_cmp(&(b.az_deg - az).abs())
                .unwrap()
        })
        .map(|s| (s.range, s.refl))
}

/// Re-interpolate a range image as recorded from a displaced sensor pose.
///
/// The stored points are translated into the new sensor frame, then each
/// output cell takes its range by linear interpolation along azimuth between
/// the two nearest translated samples of the same ring. Samples that were not
/// adjacent occupied columns, or whose radial distance differs by more than
/// 3.0 m, are treated as separate objects: no bridging, each sample extends
/// at most a fraction of a bin, and uncovered cells stay zero echoes.
/// Reflectance propagates from the nearest contributing sample.
pub fn augment_lidar(img: &RangeImage, offset: &PoseOffset) -> Result<RangeImage> {
    offset.validate()?;
    let mut out = RangeImage::new();
    for row in 0..ROWS {
        let elev = row_elevation_deg(row).to_radians();
        let mut samples: Vec<RingSample> = Vec::new();
        for col in 0..COLS {
            if !img.occupied(row, col) {
                continue;
            }
            let x = img.get(0, row, col) as f64;
            let y = img.get(1, row, col) as f64 - offset.lateral;
            let z = img.get(2, row, col) as f64 - offset.vertical;
            samples.push(RingSample {
                az_deg: y.atan2(x).to_degrees(),
                range: (x * x + y * y + z * z).sqrt(),
                refl: img.get(3, row, col),
                col,
            });
        }
        if samples.is_empty() {
            continue;
        }
        samples.sort_by(|a, b| a.az_deg.partial_cmp(&b.az_deg).unwrap());

        for col in 0..COLS {
            let az = col_azimuth_deg(col);
            let idx = samples.partition_point(|s| s.az_deg <= az);
            let left = idx.checked_sub(1).map(|i| &samples[i]);
            let right = samples.get(idx);
            let cell = match (left, right) {
                (Some(l), Some(r)) => {
                    let adjacent = (r.col as i64 - l.col as i64).abs() == 1;
                    if adjacent && (l.range - r.range).abs() <= GAP_LIMIT_M {
                        let u = if r.az_deg > l.az_deg {
                            (az - l.az_deg) / (r.az_deg - l.az_deg)
                        } else {
                            0.0
                        };
                        let range = l.range + u * (r.range - l.range);
                        let refl = if u <= 0.5 { l.refl } else { r.refl };
                        Some((range, refl))
                    } else {
                        snap(&[l, r], az)
                    }
                }
                (Some(l), None) => snap(&[l], az),
                (None, Some(r)) => snap(&[r], az),
                (None, None) => None,
            };
            if let Some((range, refl)) = cell {
                let a = az.to_radians();
                out.set_cell(
                    row,
                    col,
                    (range * elev.cos() * a.cos()) as f32,
                    (range * elev.cos() * a.sin()) as f32,
                    (range * elev.sin()) as f32,
                    refl,
                );
            }
        }
    }
    Ok(out)
}
