//! Output smoothing for online operation: exponential moving average with
//! weight 0.9 on the current model output, then safeguard clamps that keep
//! the commanded angle from moving faster than real steering hardware.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmootherConfig {
    /// EMA weight. With `prioritize_current` (the default convention) this
    /// is the weight on the newest raw output.
    pub decay: f64,
    /// Weight the decay on the current output rather than on history.
    pub prioritize_current: bool,
    /// Safeguard: max commanded change per 0.1 s frame, degrees.
    pub max_delta_deg: f64,
    /// Safeguard: absolute clamp, degrees.
    pub clamp_deg: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            decay: 0.9,
            prioritize_current: true,
            max_delta_deg: 10.0,
            clamp_deg: 540.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmootherState {
    cfg: SmootherConfig,
    prev_smoothed: Option<f64>,
    prev_command: Option<f64>,
    /// Count of non-finite raw outputs that were replaced by the previous
    /// command.
    pub flagged: u64,
}

/// Result of one smoothing step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedOutput {
    pub smoothed_deg: f64,
    pub commanded_deg: f64,
}

impl SmootherState {
    pub fn new(cfg: SmootherConfig) -> Self {
        SmootherState {
            cfg,
            prev_smoothed: None,
            prev_command: None,
            flagged: 0,
        }
    }

    pub fn reset(&mut self) {
        self.prev_smoothed = None;
        self.prev_command = None;
    }

    /// EMA then safeguard. A non-finite raw value holds the previous command
    /// and is flagged.
    pub fn step(&mut self, raw_deg: f64) -> SmoothedOutput {
        if !raw_deg.is_finite() {
            self.flagged += 1;
            let held = self.prev_command.unwrap_or(0.0);
            return SmoothedOutput {
                smoothed_deg: self.prev_smoothed.unwrap_or(held),
                commanded_deg: held,
            };
        }
        let w = if self.cfg.prioritize_current {
            self.cfg.decay
        } else {
            1.0 - self.cfg.decay
        };
        let smoothed = match self.prev_smoothed {
            None => raw_deg,
            Some(prev) => w * raw_deg + (1.0 - w) * prev,
        };
        self.prev_smoothed = Some(smoothed);

        let mut cmd = smoothed.clamp(-self.cfg.clamp_deg, self.cfg.clamp_deg);
        if let Some(prev) = self.prev_command {
            cmd = prev + (cmd - prev).clamp(-self.cfg.max_delta_deg, self.cfg.max_delta_deg);
        }
        self.prev_command = Some(cmd);
        SmoothedOutput {
            smoothed_deg: smoothed,
            commanded_deg: cmd,
        }
    }
}

/// Convenience wrapper matching the raw -> commanded contract.
pub fn smooth_and_guard(raw_deg: f64, state: &mut SmootherState) -> f64 {
    state.step(raw_deg).commanded_deg
}
