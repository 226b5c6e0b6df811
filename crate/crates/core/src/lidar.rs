//! Lidar range images: ring-ordered spherical projection of point clouds
//! into a 4 x 11 x 310 grid (x, y, z, normalized reflectance), per-ring
//! reflectance normalization, and the inverse mapping.
//!
//! Axes: x forward, y left, z up, all meters in the sensor frame. Row 0 is
//! the highest ring. Cells with no echo are zero in all four channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const ROWS: usize = 11;
pub const COLS: usize = 310;
pub const CHANNELS: usize = 4;

/// Vertical field of view: ring centers from -2.7 (row 0) down to -11.3
/// degrees (row 10), 0.86 degree spacing.
pub const ELEVATION_TOP_DEG: f64 = -2.7;
pub const ELEVATION_BOTTOM_DEG: f64 = -11.3;
pub const ELEVATION_STEP_DEG: f64 =
    (ELEVATION_TOP_DEG - ELEVATION_BOTTOM_DEG) / (ROWS as f64 - 1.0);

/// Horizontal field of view, forward direction.
pub const AZIMUTH_MIN_DEG: f64 = -34.4;
pub const AZIMUTH_MAX_DEG: f64 = 34.4;
pub const AZIMUTH_BIN_DEG: f64 = (AZIMUTH_MAX_DEG - AZIMUTH_MIN_DEG) / COLS as f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub reflectance: f64,
    pub ring: Option<u8>,
}

impl LidarPoint {
    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LidarScan {
    pub points: Vec<LidarPoint>,
    pub timestamp: f64,
}

/// Per-ring reflectance scale factors estimated from road echoes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectanceModel {
    pub scales: Vec<f64>,
}

impl ReflectanceModel {
    pub fn unit() -> Self {
        ReflectanceModel {
            scales: vec![1.0; ROWS],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.len() != ROWS || self.scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(
                "reflectance model needs 11 strictly positive scales".into(),
            ));
        }
        Ok(())
    }
}

/// 4 x 11 x 310 grid; channel order x, y, z, normalized reflectance.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    data: Vec<f32>,
}

impl Default for RangeImage {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeImage {
    pub fn new() -> Self {
        RangeImage {
            data: vec![0.0; CHANNELS * ROWS * COLS],
        }
    }

    pub fn from_data(data: Vec<f32>) -> Result<Self> {
        if data.len() != CHANNELS * ROWS * COLS {
            return Err(Error::BadTensorData {
                shape: vec![CHANNELS, ROWS, COLS],
                expected: CHANNELS * ROWS * COLS,
                got: data.len(),
            });
        }
        Ok(RangeImage { data })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    fn idx(channel: usize, row: usize, col: usize) -> usize {
        (channel * ROWS + row) * COLS + col
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[Self::idx(channel, row, col)]
    }

    pub fn set_cell(&mut self, row: usize, col: usize, x: f32, y: f32, z: f32, reflectance: f32) {
        self.data[Self::idx(0, row, col)] = x;
        self.data[Self::idx(1, row, col)] = y;
        self.data[Self::idx(2, row, col)] = z;
        self.data[Self::idx(3, row, col)] = reflectance;
    }

    pub fn clear_cell(&mut self, row: usize, col: usize) {
        self.set_cell(row, col, 0.0, 0.0, 0.0, 0.0);
    }

    /// A cell with no echo is zero in all four channels.
    pub fn occupied(&self, row: usize, col: usize) -> bool {
        (0..CHANNELS).any(|c| self.get(c, row, col) != 0.0)
    }

    pub fn occupied_count(&self) -> usize {
        (0..ROWS)
            .map(|r| (0..COLS).filter(|&c| self.occupied(r, c)).count())
            .sum()
    }

    pub fn cell_range(&self, row: usize, col: usize) -> f64 {
        let x = self.get(0, row, col) as f64;
        let y = self.get(1, row, col) as f64;
        let z = self.get(2, row, col) as f64;
        (x * x + y * y + z * z).sqrt()
    }

    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        Tensor::new(
            vec![CHANNELS, ROWS, COLS],
            self.data.iter().map(|&v| S::from_f32(v)).collect(),
        )
        .expect("fixed shape")
    }

    /// Keep every `factor`-th column (training-time decimation).
    pub fn decimate_columns<S: Scalar>(&self, factor: usize) -> Tensor<S> {
        assert!(factor >= 1);
        let cols = COLS / factor;
        let mut data = Vec::with_capacity(CHANNELS * ROWS * cols);
        for c in 0..CHANNELS {
            for r in 0..ROWS {
                for j in 0..cols {
                    data.push(S::from_f32(self.get(c, r, j * factor)));
                }
            }
        }
        Tensor::new(vec![CHANNELS, ROWS, cols], data).expect("shape arithmetic")
    }
}

pub fn row_elevation_deg(row: usize) -> f64 {
    ELEVATION_TOP_DEG - row as f64 * ELEVATION_STEP_DEG
}

pub fn col_azimuth_deg(col: usize) -> f64 {
    AZIMUTH_MIN_DEG + (col as f64 + 0.5) * AZIMUTH_BIN_DEG
}

/// Nearest ring for an elevation, or None when outside the vertical FOV
/// (more than half a ring spacing beyond the edge centers).
pub fn row_for_elevation_deg(elevation: f64) -> Option<usize> {
    let r = (ELEVATION_TOP_DEG - elevation) / ELEVATION_STEP_DEG;
    let row = r.round();
    if row < 0.0 || row >= ROWS as f64 || (r - row).abs() > 0.5 {
        None
    } else {
        Some(row as usize)
    }
}

/// Azimuth bin, or None outside the horizontal FOV.
pub fn col_for_azimuth_deg(azimuth: f64) -> Option<usize> {
    if !(AZIMUTH_MIN_DEG..AZIMUTH_MAX_DEG).contains(&azimuth) {
        return None;
    }
    let col = ((azimuth - AZIMUTH_MIN_DEG) / AZIMUTH_BIN_DEG).floor() as usize;
    Some(col.min(COLS - 1))
}

fn spherical_of(p: &LidarPoint) -> (f64, f64, f64) {
    let horiz = (p.x * p.x + p.y * p.y).sqrt();
    let elevation = p.z.atan2(horiz).to_degrees();
    let azimuth = p.y.atan2(p.x).to_degrees();
    (elevation, azimuth, p.range())
}

fn project_impl(scan: &LidarScan, scales: Option<&[f64]>) -> (RangeImage, usize) {
    let mut img = RangeImage::new();
    // Scratch range grid in f64 so the closer-echo comparison is exact.
    let mut ranges = vec![f64::INFINITY; ROWS * COLS];
    let mut dropped = 0usize;
    for p in &scan.points {
        let (elevation, azimuth, range) = spherical_of(p);
        if !(range > 0.0) || !range.is_finite() {
            dropped += 1;
            continue;
        }
        let (Some(row), Some(col)) = (row_for_elevation_deg(elevation), col_for_azimuth_deg(azimuth))
        else {
            dropped += 1;
            continue;
        };
        let slot = row * COLS + col;
        // Closer echo wins; ties keep the first-seen point.
        if range < ranges[slot] {
            ranges[slot] = range;
            let refl = match scales {
                Some(s) => p.reflectance / s[row],
                None => p.reflectance,
            };
            img.set_cell(row, col, p.x as f32, p.y as f32, p.z as f32, refl as f32);
        }
    }
    (img, dropped)
}

/// Project a raw scan; reflectance is divided by the row's scale. Out-of-FOV
/// points are dropped silently and counted.
pub fn project(scan: &LidarScan, reflect: &ReflectanceModel) -> Result<(RangeImage, usize)> {
    reflect.validate()?;
    Ok(project_impl(scan, Some(&reflect.scales)))
}

/// Project a scan whose reflectance is already in normalized units.
pub fn project_normalized(scan: &LidarScan) -> (RangeImage, usize) {
    project_impl(scan, None)
}

fn unproject_impl(img: &RangeImage, scales: Option<&[f64]>) -> LidarScan {
    let mut points = Vec::with_capacity(img.occupied_count());
    for row in 0..ROWS {
        for col in 0..COLS {
            if !img.occupied(row, col) {
                continue;
            }
            let refl = img.get(3, row, col) as f64;
            points.push(LidarPoint {
                x: img.get(0, row, col) as f64,
                y: img.get(1, row, col) as f64,
                z: img.get(2, row, col) as f64,
                reflectance: match scales {
                    Some(s) => refl * s[row],
                    None => refl,
                },
                ring: Some(row as u8),
            });
        }
    }
    LidarScan {
        points,
        timestamp: 0.0,
    }
}

/// One point per occupied cell with the stored coordinates and de-normalized
/// reflectance.
pub fn unproject(img: &RangeImage, reflect: &ReflectanceModel) -> Result<LidarScan> {
    reflect.validate()?;
    Ok(unproject_impl(img, Some(&reflect.scales)))
}

/// One point per occupied cell, reflectance kept in normalized units. The
/// exact inverse of `project_normalized`, bit for bit.
pub fn unproject_normalized(img: &RangeImage) -> LidarScan {
    unproject_impl(img, None)
}

/// scale[r] = mean raw reflectance of road echoes on ring r over the corpus.
pub fn fit_reflectance_model(scans_with_masks: &[(&LidarScan, &[bool])]) -> Result<ReflectanceModel> {
    let mut sums = vec![0.0f64; ROWS];
    let mut counts = vec![0usize; ROWS];
    for (scan, mask) in scans_with_masks {
        assert_eq!(scan.points.len(), mask.len(), "mask must cover every point");
        for (p, &is_road) in scan.points.iter().zip(mask.iter()) {
            if !is_road {
                continue;
            }
            let (elevation, _, _) = spherical_of(p);
            if let Some(row) = row_for_elevation_deg(elevation) {
                sums[row] += p.reflectance;
                counts[row] += 1;
            }
        }
    }
    let mut scales = vec![0.0; ROWS];
    for r in 0..ROWS {
        if counts[r] == 0 {
            return Err(Error::EmptyRing { ring: r });
        }
        scales[r] = sums[r] / counts[r] as f64;
    }
    let model = ReflectanceModel { scales };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point_at(elevation_deg: f64, azimuth_deg: f64, range: f64, refl: f64) -> LidarPoint {
        let e = elevation_deg.to_radians();
        let a = azimuth_deg.to_radians();
        LidarPoint {
            x: range * e.cos() * a.cos(),
            y: range * e.cos() * a.sin(),
            z: range * e.sin(),
            reflectance: refl,
            ring: None,
        }
    }

    #[test]
    fn bin_arithmetic_example() {
        // elevation -7.0 deg -> row 5; azimuth 0 -> column 155 of 310.
        let scan = LidarScan {
            points: vec![point_at(-7.0, 0.0, 20.0, 0.5)],
            timestamp: 0.0,
        };
        let (img, dropped) = project(&scan, &ReflectanceModel::unit()).unwrap();
        assert_eq!(dropped, 0);
        assert!(img.occupied(5, 155));
        assert_eq!(img.occupied_count(), 1);
        assert!((img.cell_range(5, 155) - 20.0).abs() < 1e-4);
    }

    #[test]
    fn closer_echo_wins_either_order() {
        let near = point_at(-7.0, 0.0, 10.0, 0.3);
        let far = point_at(-7.0, 0.0, 12.0, 0.9);
        for pts in [vec![near, far], vec![far, near]] {
            let scan = LidarScan {
                points: pts,
                timestamp: 0.0,
            };
            let (img, _) = project(&scan, &ReflectanceModel::unit()).unwrap();
            assert!((img.cell_range(5, 155) - 10.0).abs() < 1e-4);
            assert!((img.get(3, 5, 155) - 0.3).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_scan_gives_all_zero_image() {
        let (img, dropped) = project(&LidarScan::default(), &ReflectanceModel::unit()).unwrap();
        assert_eq!(dropped, 0);
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_fov_points_dropped_and_counted() {
        let scan = LidarScan {
            points: vec![
                point_at(-7.0, 0.0, 20.0, 0.5),
                point_at(5.0, 0.0, 20.0, 0.5),    // above FOV
                point_at(-20.0, 0.0, 20.0, 0.5),  // below FOV
                point_at(-7.0, 100.0, 20.0, 0.5), // outside azimuth FOV
            ],
            timestamp: 0.0,
        };
        let (img, dropped) = project(&scan, &ReflectanceModel::unit()).unwrap();
        assert_eq!(dropped, 3);
        assert_eq!(img.occupied_count(), 1);
    }

    fn random_valid_image(seed: u64, fill: f64) -> RangeImage {
        // Occupied cells hold a point strictly inside the cell's angular bin.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = RangeImage::new();
        for row in 0..ROWS {
            for col in 0..COLS {
                if rng.random_range(0.0..1.0) > fill {
                    continue;
                }
                let e = (row_elevation_deg(row)
                    + rng.random_range(-0.45..0.45) * ELEVATION_STEP_DEG)
                    .to_radians();
                let a = (col_azimuth_deg(col)
                    + rng.random_range(-0.45..0.45) * AZIMUTH_BIN_DEG)
                    .to_radians();
                let range = rng.random_range(2.0..60.0);
                img.set_cell(
                    row,
                    col,
                    (range * e.cos() * a.cos()) as f32,
                    (range * e.cos() * a.sin()) as f32,
                    (range * e.sin()) as f32,
                    rng.random_range(0.05..2.0) as f32,
                );
            }
        }
        img
    }

    #[test]
    fn normalized_round_trip_is_bit_exact() {
        for seed in 0..5 {
            let img = random_valid_image(seed, 0.7);
            let scan = unproject_normalized(&img);
            let (back, dropped) = project_normalized(&scan);
            assert_eq!(dropped, 0);
            assert_eq!(back, img);
        }
    }

    #[test]
    fn raw_round_trip_exact_geometry_tight_reflectance() {
        let img = random_valid_image(9, 0.6);
        let model = ReflectanceModel {
            scales: (0..ROWS).map(|r| 0.5 + 0.1 * r as f64).collect(),
        };
        let scan = unproject(&img, &model).unwrap();
        let (back, _) = project(&scan, &model).unwrap();
        for row in 0..ROWS {
            for col in 0..COLS {
                for ch in 0..3 {
                    assert_eq!(back.get(ch, row, col), img.get(ch, row, col));
                }
                let (a, b) = (back.get(3, row, col), img.get(3, row, col));
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn unproject_trivials() {
        assert!(unproject_normalized(&RangeImage::new()).points.is_empty());
        let mut img = RangeImage::new();
        img.set_cell(3, 17, 10.0, 1.0, -1.5, 0.25);
        let scan = unproject_normalized(&img);
        assert_eq!(scan.points.len(), 1);
        let p = &scan.points[0];
        assert_eq!((p.x, p.y, p.z, p.reflectance), (10.0, 1.0, -1.5, 0.25));
        assert_eq!(p.ring, Some(3));
    }

    #[test]
    fn projection_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut points: Vec<LidarPoint> = (0..500)
            .map(|_| {
                point_at(
                    rng.random_range(-11.7..-2.3),
                    rng.random_range(-34.3..34.3),
                    rng.random_range(2.0..80.0),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let a = project_impl(
            &LidarScan {
                points: points.clone(),
                timestamp: 0.0,
            },
            None,
        )
        .0;
        points.reverse();
        let b = project_impl(
            &LidarScan {
                points,
                timestamp: 0.0,
            },
            None,
        )
        .0;
        assert_eq!(a, b);
    }

    #[test]
    fn angular_bin_containment_holds_for_occupied_cells() {
        let img = random_valid_image(4, 0.5);
        for row in 0..ROWS {
            for col in 0..COLS {
                if !img.occupied(row, col) {
                    continue;
                }
                let p = LidarPoint {
                    x: img.get(0, row, col) as f64,
                    y: img.get(1, row, col) as f64,
                    z: img.get(2, row, col) as f64,
                    reflectance: 0.0,
                    ring: None,
                };
                let (e, a, _) = spherical_of(&p);
                assert_eq!(row_for_elevation_deg(e), Some(row));
                assert_eq!(col_for_azimuth_deg(a), Some(col));
            }
        }
    }

    #[test]
    fn fit_recovers_per_ring_constants() {
        // Ring r road reflectance == c_r; model must return exactly c_r and
        // normalized road reflectance 1.0.
        let c: Vec<f64> = (0..ROWS).map(|r| 0.2 + 0.05 * r as f64).collect();
        let mut points = Vec::new();
        for row in 0..ROWS {
            for col in (0..COLS).step_by(7) {
                points.push(point_at(
                    row_elevation_deg(row),
                    col_azimuth_deg(col),
                    15.0,
                    c[row],
                ));
            }
        }
        let scan = LidarScan {
            points,
            timestamp: 0.0,
        };
        let mask = vec![true; scan.points.len()];
        let model = fit_reflectance_model(&[(&scan, &mask)]).unwrap();
        for r in 0..ROWS {
            assert!((model.scales[r] - c[r]).abs() < 1e-12);
        }
        let (img, _) = project(&scan, &model).unwrap();
        for row in 0..ROWS {
            for col in 0..COLS {
                if img.occupied(row, col) {
                    assert!((img.get(3, row, col) - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn uniform_reflectance_gives_unit_scales() {
        let points: Vec<LidarPoint> = (0..ROWS)
            .map(|r| point_at(row_elevation_deg(r), 0.0, 10.0, 1.0))
            .collect();
        let scan = LidarScan {
            points,
            timestamp: 0.0,
        };
        let mask = vec![true; scan.points.len()];
        let model = fit_reflectance_model(&[(&scan, &mask)]).unwrap();
        assert!(model.scales.iter().all(|&s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn doubling_reflectance_doubles_scales_and_preserves_normalized_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<LidarPoint> = (0..ROWS)
            .flat_map(|r| {
                let refl = rng.random_range(0.1..1.0);
                (0..40).map(move |j| point_at(row_elevation_deg(r), -20.0 + j as f64, 12.0, refl))
            })
            .collect();
        let scan = LidarScan {
            points: points.clone(),
            timestamp: 0.0,
        };
        let doubled = LidarScan {
            points: points
                .iter()
                .map(|p| LidarPoint {
                    reflectance: 2.0 * p.reflectance,
                    ..*p
                })
                .collect(),
            timestamp: 0.0,
        };
        let mask = vec![true; scan.points.len()];
        let m1 = fit_reflectance_model(&[(&scan, &mask)]).unwrap();
        let m2 = fit_reflectance_model(&[(&doubled, &mask)]).unwrap();
        for r in 0..ROWS {
            assert!((m2.scales[r] - 2.0 * m1.scales[r]).abs() < 1e-12);
        }
        let (i1, _) = project(&scan, &m1).unwrap();
        let (i2, _) = project(&doubled, &m2).unwrap();
        for (a, b) in i1.data().iter().zip(i2.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn ring_without_road_echo_rejected() {
        let scan = LidarScan {
            points: vec![point_at(-7.0, 0.0, 20.0, 0.5)],
            timestamp: 0.0,
        };
        let mask = vec![true; 1];
        let err = fit_reflectance_model(&[(&scan, &mask)]).unwrap_err();
        assert!(matches!(err, Error::EmptyRing { .. }));
    }
}
