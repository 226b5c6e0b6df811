//! Kinematic bicycle model; the plant behind closed-loop evaluation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    pub wheelbase_m: f64,
    /// Steering-wheel degrees per road-wheel degree.
    pub steering_ratio: f64,
    pub max_wheel_angle_deg: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            wheelbase_m: 2.85,
            steering_ratio: 16.0,
            max_wheel_angle_deg: 540.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading_rad: f64,
    pub speed_mps: f64,
    pub steering_wheel_deg: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading_rad: f64, speed_mps: f64) -> Self {
        VehicleState {
            x,
            y,
            heading_rad,
            speed_mps,
            steering_wheel_deg: 0.0,
        }
    }

    pub fn set_steering(&mut self, wheel_deg: f64, params: &VehicleParams) {
        self.steering_wheel_deg = wheel_deg.clamp(
            -params.max_wheel_angle_deg,
            params.max_wheel_angle_deg,
        );
    }

    /// Advance by dt seconds with midpoint substeps; speed is preserved.
    pub fn step(&mut self, params: &VehicleParams, dt: f64) {
        const SUBSTEPS: usize = 10;
        let h = dt / SUBSTEPS as f64;
        let road_wheel_rad =
            (self.steering_wheel_deg / params.steering_ratio).to_radians();
        let yaw_rate = self.speed_mps / params.wheelbase_m * road_wheel_rad.tan();
        for _ in 0..SUBSTEPS {
            let psi_mid = self.heading_rad + 0.5 * yaw_rate * h;
            self.x += self.speed_mps * psi_mid.cos() * h;
            self.y += self.speed_mps * psi_mid.sin() * h;
            self.heading_rad += yaw_rate * h;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steering_preserves_lateral_offset_exactly() {
        let params = VehicleParams::default();
        let mut s = VehicleState::new(0.0, 1.25, 0.0, 10.0);
        for _ in 0..100 {
            s.step(&params, 0.1);
        }
        assert_eq!(s.y, 1.25);
        assert_eq!(s.heading_rad, 0.0);
        assert!((s.x - 100.0).abs() < 1e-9);
    }

    #[test]
    fn steady_steering_travels_a_circle_of_the_closed_form_radius() {
        let params = VehicleParams::default();
        let mut s = VehicleState::new(0.0, 0.0, 0.0, 8.33);
        s.set_steering(5.0 * params.steering_ratio, &params); // 5 deg road wheel
        let expected_radius =
            params.wheelbase_m / (5.0f64).to_radians().tan();
        let mut distance = 0.0;
        let start_heading = s.heading_rad;
        for _ in 0..200 {
            s.step(&params, 0.1);
            distance += s.speed_mps * 0.1;
        }
        let turned = s.heading_rad - start_heading;
        let measured_radius = distance / turned;
        let rel = (measured_radius - expected_radius).abs() / expected_radius;
        assert!(rel < 1e-3, "radius {measured_radius} vs {expected_radius}");
    }

    #[test]
    fn speed_is_preserved_by_updates() {
        let params = VehicleParams::default();
        let mut s = VehicleState::new(0.0, 0.0, 1.0, 12.0);
        s.set_steering(90.0, &params);
        for _ in 0..50 {
            s.step(&params, 0.1);
        }
        assert_eq!(s.speed_mps, 12.0);
    }

    #[test]
    fn steering_clamped_to_actuator_limit() {
        let params = VehicleParams::default();
        let mut s = VehicleState::new(0.0, 0.0, 0.0, 10.0);
        s.set_steering(1000.0, &params);
        assert_eq!(s.steering_wheel_deg, 540.0);
    }
}
