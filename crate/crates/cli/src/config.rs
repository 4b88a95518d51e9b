//! Campaign description as read from a TOML document.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};
use zeno_drag::tomography::ThresholdWindow;
use zeno_drag::{AxisSchedule, DetectorModel, ExperimentConfig, QubitState};

use crate::error::CampaignError;

pub const DESK_TRAJECTORIES: usize = 2000;
pub const FULL_TRAJECTORIES: usize = 20_000;

fn default_velocities() -> Vec<f64> {
    (1..=18).map(|k| 10.0 * k as f64).collect()
}

fn default_durations() -> Vec<f64> {
    vec![1.0, 2.0, 3.0, 4.0, 5.0]
}

fn default_initial() -> QubitState {
    QubitState::new(0.0, 0.94, 0.0)
}

/// Rates are given as `rate / 2 pi` in Hz, times in microseconds, velocities
/// in kHz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "defaults::gamma_d")]
    pub gamma_d_over_2pi_hz: f64,
    #[serde(default = "defaults::eta")]
    pub eta: f64,
    #[serde(default = "defaults::gamma_phi")]
    pub gamma_phi_over_2pi_hz: f64,
    #[serde(default = "defaults::dt_ns")]
    pub dt_ns: f64,
    #[serde(default = "default_initial")]
    pub initial: QubitState,
    #[serde(default = "default_velocities")]
    pub velocities_khz: Vec<f64>,
    /// Tomography readout times.
    #[serde(default = "default_durations")]
    pub durations_us: Vec<f64>,
    #[serde(default = "defaults::trajectories")]
    pub trajectories_per_point: usize,
    #[serde(default)]
    pub seed: u64,
    /// Propagation steps between stored states.
    #[serde(default = "defaults::stride")]
    pub state_stride: usize,
    /// Time at which post-selected fidelity is evaluated.
    #[serde(default = "defaults::postselect_us")]
    pub postselect_us: f64,
    #[serde(default = "defaults::threshold_points")]
    pub threshold_points: usize,
    #[serde(default = "defaults::window")]
    pub threshold_window: ThresholdWindow,
    /// Velocities whose state clouds are histogrammed.
    #[serde(default = "defaults::histogram_velocities")]
    pub histogram_velocities_khz: Vec<f64>,
    #[serde(default = "defaults::angle_bins")]
    pub angle_bins: usize,
    #[serde(default = "defaults::radius_bins")]
    pub radius_bins: usize,
    /// Hysteresis level of the jump detector.
    #[serde(default = "defaults::jump_level")]
    pub jump_level: f64,
    #[serde(default)]
    pub detector: DetectorModel,
    /// Write per-point ensemble files.
    #[serde(default = "defaults::yes")]
    pub write_ensembles: bool,
}

mod defaults {
    use super::*;

    pub fn gamma_d() -> f64 {
        0.13e6
    }
    pub fn eta() -> f64 {
        0.49
    }
    pub fn gamma_phi() -> f64 {
        0.005e6
    }
    pub fn dt_ns() -> f64 {
        10.0
    }
    pub fn trajectories() -> usize {
        DESK_TRAJECTORIES
    }
    pub fn stride() -> usize {
        10
    }
    pub fn postselect_us() -> f64 {
        4.0
    }
    pub fn threshold_points() -> usize {
        41
    }
    pub fn window() -> ThresholdWindow {
        ThresholdWindow::Full
    }
    pub fn histogram_velocities() -> Vec<f64> {
        vec![20.0, 40.0]
    }
    pub fn angle_bins() -> usize {
        36
    }
    pub fn radius_bins() -> usize {
        10
    }
    pub fn jump_level() -> f64 {
        0.5
    }
    pub fn yes() -> bool {
        true
    }
}

impl Default for CampaignConfig {
    fn default() -> Self {
        toml::from_str("").unwrap_or_else(|_| unreachable!("all fields have defaults"))
    }
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self, CampaignError> {
        toml::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(|e| CampaignError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn dt(&self) -> f64 {
        self.dt_ns * 1e-9
    }

    pub fn gamma_d(&self) -> f64 {
        TAU * self.gamma_d_over_2pi_hz
    }

    /// Simulated span: the latest readout time.
    pub fn horizon_us(&self) -> f64 {
        self.durations_us.iter().copied().fold(self.postselect_us, f64::max)
    }

    /// Stored-state row holding time `t_us`.
    pub fn row_of(&self, t_us: f64) -> usize {
        ((t_us * 1e-6 / self.dt()).round() as usize) / self.state_stride.max(1)
    }

    /// Run parameters for one velocity.
    pub fn experiment(&self, v_khz: f64, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            gamma_d: self.gamma_d(),
            eta: self.eta,
            gamma_phi: TAU * self.gamma_phi_over_2pi_hz,
            schedule: AxisSchedule::from_y(v_khz * 1e3),
            dt: self.dt(),
            duration: self.horizon_us() * 1e-6,
            initial: self.initial,
            seed,
            detector: self.detector,
        }
    }

    /// Rejects anything that would fail mid-campaign.
    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::Config(m));
        let product = self.gamma_d() * self.dt();
        if !(product < 0.5) {
            return bad(format!(
                "stability guard: gamma_d_over_2pi_hz = {} Hz and dt_ns = {} ns give gamma_d * dt = {product:.4} (must be < 0.5)",
                self.gamma_d_over_2pi_hz, self.dt_ns
            ));
        }
        if self.velocities_khz.is_empty() || self.durations_us.is_empty() {
            return bad("velocities_khz and durations_us must be nonempty".into());
        }
        if self.trajectories_per_point == 0 {
            return bad("trajectories_per_point must be at least 1".into());
        }
        if self.state_stride == 0 {
            return bad("state_stride must be at least 1".into());
        }
        if self.eta <= 0.0 {
            return bad("eta must be positive: post-selection needs an informative record".into());
        }
        if self.velocities_khz.iter().any(|v| !v.is_finite()) {
            return bad("velocities must be finite".into());
        }
        let step_us = self.dt_ns * 1e-3 * self.state_stride as f64;
        for &t in self.durations_us.iter().chain([&self.postselect_us]) {
            let k = t / step_us;
            if !(t > 0.0) || (k - k.round()).abs() > 1e-6 {
                return bad(format!(
                    "readout time {t} us is not a positive multiple of dt_ns * state_stride = {step_us} us"
                ));
            }
        }
        for &v in &self.histogram_velocities_khz {
            if !self.velocities_khz.contains(&v) {
                return bad(format!("histogram velocity {v} kHz is not in velocities_khz"));
            }
        }
        if self.angle_bins == 0 || self.radius_bins == 0 || self.threshold_points == 0 {
            return bad("histogram bins and threshold_points must be positive".into());
        }
        if !(self.jump_level > 0.0 && self.jump_level < 1.0) {
            return bad(format!("jump_level must lie in (0, 1), got {}", self.jump_level));
        }
        self.experiment(self.velocities_khz[0], self.seed).validate().map_err(|e| CampaignError::Config(e.to_string()))
    }
}
