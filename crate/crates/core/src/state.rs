//! Two-level state algebra in Bloch form, measurement axes and run parameters.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::DetectorModel;

/// Slack allowed on `|r|^2 <= 1` before a state is considered unphysical.
pub const POSITIVITY_TOL: f64 = 1e-9;

/// Qubit density operator `(I + x sx + y sy + z sz) / 2`, stored as its Bloch
/// vector. The trace is one by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl QubitState {
    pub const MIXED: Self = Self { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Like [`QubitState::new`] but rejects vectors outside the Bloch ball.
    pub fn try_new(x: f64, y: f64, z: f64) -> Result<Self> {
        let s = Self { x, y, z };
        if s.is_valid() {
            Ok(s)
        } else {
            Err(Error::OutOfRange { name: "|bloch vector|^2", value: s.norm_sq(), range: "[0, 1]" })
        }
    }

    /// The `sign` eigenstate (+1 or -1) of the axis operator.
    pub fn axis_eigenstate(axis: MeasurementAxis, sign: f64) -> Self {
        let s = sign.signum();
        let (sin, cos) = axis.delta.sin_cos();
        Self::new(s * cos, s * sin, 0.0)
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.norm_sq() <= 1.0 + POSITIVITY_TOL
    }

    /// Rotation about the z axis by `phi` radians.
    pub fn rotate_z(&self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }

    /// Radial projection onto the Bloch ball; valid states are returned as is.
    pub fn project_to_ball(&self) -> Self {
        let n = self.norm();
        if n > 1.0 {
            Self::new(self.x / n, self.y / n, self.z / n)
        } else {
            *self
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn density_matrix(&self) -> Matrix2<Complex64> {
        let h = 0.5;
        Matrix2::new(
            Complex64::new(h * (1.0 + self.z), 0.0),
            Complex64::new(h * self.x, -h * self.y),
            Complex64::new(h * self.x, h * self.y),
            Complex64::new(h * (1.0 - self.z), 0.0),
        )
    }
}

/// Measurement axis in the XY plane at angle `delta` (radians) from +x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementAxis {
    pub delta: f64,
}

impl MeasurementAxis {
    pub const fn new(delta: f64) -> Self {
        Self { delta }
    }

    /// Unit vector `(cos delta, sin delta)`.
    pub fn unit(&self) -> (f64, f64) {
        let (s, c) = self.delta.sin_cos();
        (c, s)
    }

    pub fn operator(&self) -> Matrix2<Complex64> {
        axis_operator(*self)
    }
}

/// `cos(delta) sx + sin(delta) sy`.
pub fn axis_operator(axis: MeasurementAxis) -> Matrix2<Complex64> {
    let (c, s) = axis.unit();
    let zero = Complex64::new(0.0, 0.0);
    Matrix2::new(zero, Complex64::new(c, -s), Complex64::new(c, s), zero)
}

/// `<sigma_delta>` in `state`.
pub fn expectation(state: &QubitState, axis: MeasurementAxis) -> f64 {
    let (c, s) = axis.unit();
    state.x * c + state.y * s
}

/// Overlap of `state` with the `sign` eigenstate of the axis operator.
pub fn fidelity_to_axis_eigenstate(state: &QubitState, axis: MeasurementAxis, sign: f64) -> f64 {
    0.5 * (1.0 + sign.signum() * expectation(state, axis))
}

/// `Tr(rho^2)`.
pub fn purity(state: &QubitState) -> f64 {
    0.5 * (1.0 + state.norm_sq())
}

/// Preparation state along +y.
///
/// Without heralding the thermal excited population `p_excited` leaves
/// `<y> = 1 - 2 p_excited`. With heralding, the thermal part is discarded and
/// the state is `(0, polarization, 0)`, where `polarization` captures the
/// residual preparation error.
pub fn thermal_initial(p_excited: f64, heralded_polarization: Option<f64>) -> Result<QubitState> {
    if !(0.0..=0.5).contains(&p_excited) {
        return Err(Error::OutOfRange { name: "p_excited", value: p_excited, range: "[0, 1/2]" });
    }
    match heralded_polarization {
        Some(p) if !(0.0..=1.0).contains(&p) => {
            Err(Error::OutOfRange { name: "heralded polarization", value: p, range: "[0, 1]" })
        }
        Some(p) => Ok(QubitState::new(0.0, p, 0.0)),
        None => Ok(QubitState::new(0.0, 1.0 - 2.0 * p_excited, 0.0)),
    }
}

/// Axis angle `delta(t) = delta0 + 2 pi v t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisSchedule {
    /// Angle at `t = 0`, radians.
    pub delta0: f64,
    /// Rotation speed in cycles per second.
    pub v: f64,
}

impl AxisSchedule {
    pub const fn new(delta0: f64, v: f64) -> Self {
        Self { delta0, v }
    }

    /// A schedule starting along +y.
    pub const fn from_y(v: f64) -> Self {
        Self { delta0: FRAC_PI_2, v }
    }

    /// Angular speed `2 pi v`, rad/s.
    pub fn omega(&self) -> f64 {
        TAU * self.v
    }

    pub fn delta_at(&self, t: f64) -> f64 {
        self.delta0 + TAU * self.v * t
    }

    pub fn axis_at(&self, t: f64) -> MeasurementAxis {
        MeasurementAxis::new(self.delta_at(t))
    }
}

/// Physical and numerical parameters of one run. Rates are in rad/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub gamma_d: f64,
    pub eta: f64,
    pub gamma_phi: f64,
    pub schedule: AxisSchedule,
    pub dt: f64,
    pub duration: f64,
    pub initial: QubitState,
    pub seed: u64,
    #[serde(default)]
    pub detector: DetectorModel,
}

impl ExperimentConfig {
    /// Parameters of the reference experiment: `Gamma_D / 2pi = 0.13 MHz`,
    /// `eta = 0.49`, `Gamma_phi / 2pi = 5 kHz`, heralded `<y> = 0.94`, 10 ns steps.
    pub fn reference_defaults(v: f64, duration: f64) -> Self {
        Self {
            gamma_d: TAU * 0.13e6,
            eta: 0.49,
            gamma_phi: TAU * 0.005e6,
            schedule: AxisSchedule::from_y(v),
            dt: 10e-9,
            duration,
            initial: QubitState::new(0.0, 0.94, 0.0),
            seed: 0,
            detector: DetectorModel::default(),
        }
    }

    /// `Gamma_M = Gamma_D * eta`.
    pub fn measurement_rate(&self) -> f64 {
        self.gamma_d * self.eta
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|i| i as f64 * self.dt).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.gamma_d > 0.0 && self.gamma_d.is_finite()) {
            return bad(format!("gamma_d must be positive, got {}", self.gamma_d));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        if !(self.gamma_phi >= 0.0 && self.gamma_phi.is_finite()) {
            return bad(format!("gamma_phi must be non-negative, got {}", self.gamma_phi));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return bad(format!("duration {} must be at least one step dt = {}", self.duration, self.dt));
        }
        if !self.schedule.v.is_finite() || !self.schedule.delta0.is_finite() {
            return bad("axis schedule must be finite".into());
        }
        if !self.initial.is_valid() {
            return bad(format!("initial state {:?} lies outside the Bloch ball", self.initial));
        }
        self.detector.validate()?;
        check_stability(self.gamma_d, self.dt)
    }
}

pub(crate) fn check_stability(gamma_d: f64, dt: f64) -> Result<()> {
    let product = gamma_d * dt;
    if dt > 0.0 && product < 0.5 {
        Ok(())
    } else {
        Err(Error::StabilityGuard { gamma_d, dt, product })
    }
}
