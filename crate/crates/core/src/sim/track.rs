//! Procedural road tracks: a smooth planar centerline with bounded
//! curvature, a surface class, and roadside obstacle primitives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    AsphaltLanelines,
    AsphaltNoLines,
    Gravel,
    Snow,
}

impl Surface {
    pub fn has_lane_lines(self) -> bool {
        matches!(self, Surface::AsphaltLanelines)
    }

    pub fn id(self) -> &'static str {
        match self {
            Surface::AsphaltLanelines => "asphalt_lanelines",
            Surface::AsphaltNoLines => "asphalt_no_lines",
            Surface::Gravel => "gravel",
            Surface::Snow => "snow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CurvatureProfile {
    Straight,
    Arc { radius_m: f64 },
    Mixed { waves: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    pub length_m: f64,
    pub surface: Surface,
    pub profile: CurvatureProfile,
    pub lane_width_m: f64,
    pub shoulder_width_m: f64,
    pub max_curvature: f64,
    pub obstacle_spacing_m: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            length_m: 800.0,
            surface: Surface::AsphaltLanelines,
            profile: CurvatureProfile::Mixed { waves: 4 },
            lane_width_m: 3.4,
            shoulder_width_m: 1.0,
            max_curvature: 0.013,
            obstacle_spacing_m: 45.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub height: f64,
    pub reflectance: f64,
}

/// Centerline sampled at a fixed arc-length spacing.
#[derive(Debug, Clone)]
pub struct Track {
    pub surface: Surface,
    pub lane_width: f64,
    pub shoulder_width: f64,
    pub length: f64,
    pub seed: u64,
    ds: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
    headings: Vec<f64>,
    curvatures: Vec<f64>,
    pub obstacles: Vec<Obstacle>,
}

pub const TRACK_SAMPLE_SPACING_M: f64 = 0.5;
const MIN_TRACK_LENGTH_M: f64 = 100.0;

/// Steering-wheel angle a curvature demands of the kinematic bicycle.
pub fn wheel_angle_for_curvature(curvature: f64, wheelbase: f64, steering_ratio: f64) -> f64 {
    (wheelbase * curvature).atan().to_degrees() * steering_ratio
}

/// Deterministic track from (config, seed).
pub fn generate_track(config: &TrackConfig, seed: u64) -> Result<Track> {
    if config.length_m < MIN_TRACK_LENGTH_M {
        return Err(Error::InfeasibleTrack(format!(
            "track length {} m is below the {} m minimum",
            config.length_m, MIN_TRACK_LENGTH_M
        )));
    }
    if config.lane_width_m <= 0.0 || config.max_curvature < 0.0 {
        return Err(Error::InfeasibleTrack(
            "lane width must be positive and curvature bound non-negative".into(),
        ));
    }
    // The expert must stay within actuator limits with margin.
    let demand = wheel_angle_for_curvature(config.max_curvature, 2.85, 16.0);
    if demand > 0.9 * 540.0 {
        return Err(Error::InfeasibleTrack(format!(
            "curvature bound {} requires {demand:.0} deg at the wheel",
            config.max_curvature
        )));
    }

    // Curvature profile kappa(s).
    let mut waves: Vec<(f64, f64, f64)> = Vec::new(); // (amplitude, wavelength, phase)
    match config.profile {
        CurvatureProfile::Straight => {}
        CurvatureProfile::Arc { radius_m } => {
            if radius_m.abs() < 1.0 {
                return Err(Error::InfeasibleTrack("arc radius too small".into()));
            }
        }
        CurvatureProfile::Mixed { waves: n } => {
            if n == 0 {
                return Err(Error::InfeasibleTrack("mixed profile needs waves >= 1".into()));
            }
            let mut r = rng::stream(seed, "track.curvature", 0);
            let mut amps: Vec<f64> = (0..n).map(|_| r.random_range(0.4..1.0)).collect();
            let total: f64 = amps.iter().sum();
            // Scale so the curvature bound holds by construction.
            for a in &mut amps {
                *a *= config.max_curvature / total;
            }
            for a in amps {
                let wavelength = r.random_range(90.0..320.0);
                let phase = r.random_range(0.0..std::f64::consts::TAU);
                let sign = if r.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
                waves.push((sign * a, wavelength, phase));
            }
        }
    }
    let kappa = |s: f64| -> f64 {
        match config.profile {
            CurvatureProfile::Straight => 0.0,
            CurvatureProfile::Arc { radius_m } => 1.0 / radius_m,
            CurvatureProfile::Mixed { .. } => waves
                .iter()
                .map(|(a, l, p)| a * (std::f64::consts::TAU * s / l + p).sin())
                .sum(),
        }
    };

    // Midpoint integration of the heading.
    let ds = TRACK_SAMPLE_SPACING_M;
    let n = (config.length_m / ds).ceil() as usize + 1;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut headings = Vec::with_capacity(n);
    let mut curvatures = Vec::with_capacity(n);
    let (mut x, mut y, mut psi) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        let s = i as f64 * ds;
        xs.push(x);
        ys.push(y);
        headings.push(psi);
        curvatures.push(kappa(s));
        let k_mid = kappa(s + 0.5 * ds);
        let psi_mid = psi + 0.5 * k_mid * ds;
        x += psi_mid.cos() * ds;
        y += psi_mid.sin() * ds;
        psi += k_mid * ds;
    }

    // Roadside obstacles: posts and vegetation past the shoulder.
    let mut obstacles = Vec::new();
    if config.obstacle_spacing_m > 0.0 {
        let mut r = rng::stream(seed, "track.obstacles", 0);
        let mut s = config.obstacle_spacing_m * r.random_range(0.3..1.0);
        while s < config.length_m {
            let i = ((s / ds) as usize).min(n - 1);
            let side = if r.random_range(0.0..1.0) < 0.5 { 1.0 } else { -1.0 };
            let lateral = side
                * (config.lane_width_m / 2.0
                    + config.shoulder_width_m
                    + r.random_range(1.0..5.0));
            let (nx, ny) = (-headings[i].sin(), headings[i].cos());
            obstacles.push(Obstacle {
                x: xs[i] + nx * lateral,
                y: ys[i] + ny * lateral,
                radius: r.random_range(0.1..0.35),
                height: r.random_range(0.8..3.0),
                reflectance: r.random_range(0.35..0.7),
            });
            s += config.obstacle_spacing_m * r.random_range(0.6..1.4);
        }
    }

    Ok(Track {
        surface: config.surface,
        lane_width: config.lane_width_m,
        shoulder_width: config.shoulder_width_m,
        length: config.length_m,
        seed,
        ds,
        xs,
        ys,
        headings,
        curvatures,
        obstacles,
    })
}

/// Ground classes seen by the sensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundClass {
    Road,
    LaneLine,
    Shoulder,
    OffRoad,
}

impl Track {
    pub fn sample_count(&self) -> usize {
        self.xs.len()
    }

    pub fn spacing(&self) -> f64 {
        self.ds
    }

    pub fn point(&self, i: usize) -> (f64, f64) {
        (self.xs[i], self.ys[i])
    }

    pub fn heading(&self, i: usize) -> f64 {
        self.headings[i]
    }

    pub fn curvature(&self, i: usize) -> f64 {
        self.curvatures[i]
    }

    pub fn arc_of_index(&self, i: usize) -> f64 {
        i as f64 * self.ds
    }

    /// Index of the nearest centerline sample. With a hint this is a local
    /// search; without one it scans the whole line.
    pub fn nearest_index(&self, x: f64, y: f64, hint: Option<usize>) -> usize {
        let d2 = |i: usize| {
            let dx = self.xs[i] - x;
            let dy = self.ys[i] - y;
            dx * dx + dy * dy
        };
        match hint {
            None => (0..self.xs.len())
                .min_by(|&a, &b| d2(a).partial_cmp(&d2(b)).unwrap())
                .unwrap_or(0),
            Some(h) => {
                let n = self.xs.len();
                let lo = h.saturating_sub(240);
                let hi = (h + 240).min(n - 1);
                // Coarse-to-fine over the window.
                let mut best = lo;
                let mut best_d = d2(lo);
                let mut i = lo;
                while i <= hi {
                    let d = d2(i);
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                    i += 8;
                }
                let rlo = best.saturating_sub(8);
                let rhi = (best + 8).min(n - 1);
                for i in rlo..=rhi {
                    let d = d2(i);
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                best
            }
        }
    }

    /// Signed lateral offset from the centerline (positive left of travel
    /// direction), using the local tangent at the nearest sample.
    pub fn lateral_offset(&self, x: f64, y: f64, index: usize) -> f64 {
        let (cx, cy) = self.point(index);
        let psi = self.headings[index];
        -(x - cx) * psi.sin() + (y - cy) * psi.cos()
    }

    /// Ground class at a world point near the given centerline index.
    pub fn classify(&self, x: f64, y: f64, hint: usize) -> (GroundClass, f64) {
        let idx = self.nearest_index(x, y, Some(hint));
        let d = self.lateral_offset(x, y, idx);
        let half_lane = self.lane_width / 2.0;
        let a = d.abs();
        let class = if a <= half_lane {
            if self.surface.has_lane_lines() && a >= half_lane - 0.12 {
                GroundClass::LaneLine
            } else {
                GroundClass::Road
            }
        } else if a <= half_lane + self.shoulder_width {
            GroundClass::Shoulder
        } else {
            GroundClass::OffRoad
        };
        (class, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_track() {
        let cfg = TrackConfig::default();
        let a = generate_track(&cfg, 7).unwrap();
        let b = generate_track(&cfg, 7).unwrap();
        assert_eq!(a.xs, b.xs);
        assert_eq!(a.ys, b.ys);
        assert_eq!(a.obstacles.len(), b.obstacles.len());
        let c = generate_track(&cfg, 8).unwrap();
        assert_ne!(a.xs, c.xs);
    }

    #[test]
    fn straight_profile_has_zero_curvature() {
        let cfg = TrackConfig {
            profile: CurvatureProfile::Straight,
            ..TrackConfig::default()
        };
        let t = generate_track(&cfg, 1).unwrap();
        assert!(t.curvatures.iter().all(|&k| k == 0.0));
        assert!(t.ys.iter().all(|&y| y.abs() < 1e-9));
    }

    #[test]
    fn curvature_stays_below_configured_bound() {
        let cfg = TrackConfig::default();
        let t = generate_track(&cfg, 13).unwrap();
        for i in 0..t.sample_count() {
            assert!(t.curvature(i).abs() <= cfg.max_curvature + 1e-12);
        }
    }

    #[test]
    fn infeasible_curvature_rejected() {
        let cfg = TrackConfig {
            max_curvature: 50.0,
            ..TrackConfig::default()
        };
        assert!(generate_track(&cfg, 0).is_err());
    }

    #[test]
    fn lateral_offset_sign_is_left_positive() {
        let cfg = TrackConfig {
            profile: CurvatureProfile::Straight,
            ..TrackConfig::default()
        };
        let t = generate_track(&cfg, 1).unwrap();
        // Track runs along +x; +y is left.
        let idx = t.nearest_index(10.0, 0.5, None);
        assert!(t.lateral_offset(10.0, 0.5, idx) > 0.0);
        assert!(t.lateral_offset(10.0, -0.5, idx) < 0.0);
    }

    #[test]
    fn classify_straight_track_bands() {
        let cfg = TrackConfig {
            profile: CurvatureProfile::Straight,
            surface: Surface::AsphaltLanelines,
            ..TrackConfig::default()
        };
        let t = generate_track(&cfg, 1).unwrap();
        assert_eq!(t.classify(50.0, 0.0, 100).0, GroundClass::Road);
        assert_eq!(t.classify(50.0, 1.65, 100).0, GroundClass::LaneLine);
        assert_eq!(t.classify(50.0, 2.2, 100).0, GroundClass::Shoulder);
        assert_eq!(t.classify(50.0, 5.0, 100).0, GroundClass::OffRoad);
    }

    #[test]
    fn arc_track_bends_at_constant_rate() {
        let cfg = TrackConfig {
            profile: CurvatureProfile::Arc { radius_m: 100.0 },
            length_m: 500.0,
            ..TrackConfig::default()
        };
        let t = generate_track(&cfg, 1).unwrap();
        let quarter = (std::f64::consts::FRAC_PI_2 * 100.0 / t.ds) as usize;
        let psi = t.heading(quarter);
        assert!((psi - std::f64::consts::FRAC_PI_2).abs() < 1e-3);
    }
}
