//! Conditioned and unconditioned qubit propagation under a rotating
//! continuous measurement.
//!
//! The production propagator is the Kraus update
//! `rho -> E[ Omega(V) rho Omega(V)^dag / Tr(..) ]` with
//! `Omega(V) = exp[-(gamma_d eta / 2) (V - sigma_delta)^2 dt]`, followed by
//! residual dephasing along the measurement axis at rate `gamma_d (1 - eta)`
//! and dephasing about z at rate `gamma_phi`. It is exactly positive for any
//! record value. [`ito_step`] is the explicit Euler-Maruyama step of the
//! equivalent Ito equation, kept as a cross-check.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensemble::stream_rng;
use crate::error::{Error, Result};
use crate::record::{coarse_grain, MeasurementRecord};
use crate::state::{check_stability, expectation, ExperimentConfig, MeasurementAxis, QubitState};

/// Arguments of a single measurement update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInput {
    pub state: QubitState,
    /// Normalized detector sample for this step.
    pub record: f64,
    pub axis: MeasurementAxis,
    pub dt: f64,
    pub gamma_d: f64,
    pub eta: f64,
    pub gamma_phi: f64,
}

/// Per-step constants shared by every update with the same `(dt, rates)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StepCoefficients {
    /// `2 gamma_d eta dt`: the log-likelihood ratio per unit record value.
    strength: f64,
    /// Coherence kept by the unmonitored part of the measurement.
    inefficiency: f64,
    /// Coherence kept by the extra z dephasing.
    dephasing: f64,
    /// Standard deviation of one record sample, `1/sqrt(2 gamma_d eta dt)`.
    record_sd: f64,
}

impl StepCoefficients {
    pub(crate) fn new(gamma_d: f64, eta: f64, gamma_phi: f64, dt: f64) -> Result<Self> {
        check_stability(gamma_d, dt)?;
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::OutOfRange { name: "eta", value: eta, range: "[0, 1]" });
        }
        if !(gamma_phi >= 0.0) {
            return Err(Error::OutOfRange { name: "gamma_phi", value: gamma_phi, range: "[0, inf)" });
        }
        Ok(Self {
            strength: 2.0 * gamma_d * eta * dt,
            inefficiency: (-gamma_d * (1.0 - eta) * dt).exp(),
            dephasing: (-gamma_phi * dt).exp(),
            record_sd: (2.0 * gamma_d * eta * dt).sqrt().recip(),
        })
    }

    fn from_config(config: &ExperimentConfig) -> Result<Self> {
        Self::new(config.gamma_d, config.eta, config.gamma_phi, config.dt)
    }
}

/// Kraus update for one record sample. Works in the axis-aligned frame where
/// `Omega(V)` is diagonal: the populations are reweighted by the Gaussian
/// likelihoods and the coherence shrinks with the normalization.
#[inline]
fn povm_kernel(state: &QubitState, v: f64, axis: MeasurementAxis, k: &StepCoefficients) -> QubitState {
    let (s, c) = axis.delta.sin_cos();
    let mut par = (state.x * c + state.y * s).clamp(-1.0, 1.0);
    let mut perp = -state.x * s + state.y * c;
    let mut z = state.z;

    // Keep the input inside the ball so tiny excursions are not amplified
    // near the poles.
    let room = (1.0 - par) * (1.0 + par);
    let off_sq = perp * perp + z * z;
    if off_sq > room {
        let f = if room > 0.0 { (room / off_sq).sqrt() } else { 0.0 };
        perp *= f;
        z *= f;
    }

    // log-weights of the two populations, shifted so the larger is zero
    let lr = k.strength * v;
    let lp = (0.5 * (1.0 + par)).ln() + lr;
    let lm = (0.5 * (1.0 - par)).ln() - lr;
    let top = lp.max(lm);
    let wp = (lp - top).exp();
    let wm = (lm - top).exp();
    let tr = wp + wm;
    par = (wp - wm) / tr;
    // the off-diagonal factor is exp(lr) exp(-lr) = 1, rescaled by the same shift
    let coherence = if room > 0.0 { (-top).exp() / tr * k.inefficiency } else { 0.0 };
    perp *= coherence;
    z *= coherence;

    QubitState::new((par * c - perp * s) * k.dephasing, (par * s + perp * c) * k.dephasing, z)
}

/// Positivity-preserving measurement update for a finite step.
pub fn povm_step(input: &StepInput) -> Result<QubitState> {
    let k = StepCoefficients::new(input.gamma_d, input.eta, input.gamma_phi, input.dt)?;
    Ok(povm_kernel(&input.state, input.record, input.axis, &k))
}

/// One explicit Euler-Maruyama step of
/// `d rho = (gamma_d / 2) L[s] rho dt + sqrt(gamma_d eta / 2) H[s] rho dW + (gamma_phi / 2) L[sz] rho dt`
/// with `s` the axis operator. Not positivity preserving.
pub fn ito_step(
    state: &QubitState,
    dw: f64,
    axis: MeasurementAxis,
    dt: f64,
    gamma_d: f64,
    eta: f64,
    gamma_phi: f64,
) -> Result<QubitState> {
    check_stability(gamma_d, dt)?;
    let (c, s) = axis.unit();
    let par = state.x * c + state.y * s;
    // L[s]: the component perpendicular to the axis decays at gamma_d
    let (px, py, pz) = (state.x - par * c, state.y - par * s, state.z);
    // H[s]: innovation pushes along (n - <s> r)
    let kick = (2.0 * gamma_d * eta).sqrt() * dw;
    Ok(QubitState::new(
        state.x - gamma_d * px * dt + kick * (c - par * state.x) - gamma_phi * state.x * dt,
        state.y - gamma_d * py * dt + kick * (s - par * state.y) - gamma_phi * state.y * dt,
        state.z - gamma_d * pz * dt - kick * par * state.z,
    ))
}

/// Converts a record sample to the Wiener increment it implies:
/// `dW = (V - <s>) sqrt(2 gamma_d eta) dt`.
pub fn record_to_wiener(v: f64, state: &QubitState, axis: MeasurementAxis, dt: f64, gamma_d: f64, eta: f64) -> f64 {
    (v - expectation(state, axis)) * (2.0 * gamma_d * eta).sqrt() * dt
}

/// Inverse of [`record_to_wiener`].
pub fn wiener_to_record(dw: f64, state: &QubitState, axis: MeasurementAxis, dt: f64, gamma_d: f64, eta: f64) -> f64 {
    expectation(state, axis) + dw / ((2.0 * gamma_d * eta).sqrt() * dt)
}

#[inline]
fn sample_kernel<R: Rng + ?Sized>(state: &QubitState, axis: MeasurementAxis, k: &StepCoefficients, rng: &mut R) -> f64 {
    let p_plus = 0.5 * (1.0 + expectation(state, axis));
    let mean = if rng.random::<f64>() < p_plus { 1.0 } else { -1.0 };
    let n: f64 = rng.sample(StandardNormal);
    mean + k.record_sd * n
}

/// Draws a record sample from `p+ N(+1, s^2) + p- N(-1, s^2)` with
/// `s^2 = 1 / (2 gamma_d eta dt)` and `p+- = (1 +- <s>) / 2`.
pub fn sample_record_value<R: Rng + ?Sized>(
    state: &QubitState,
    axis: MeasurementAxis,
    dt: f64,
    gamma_d: f64,
    eta: f64,
    rng: &mut R,
) -> Result<f64> {
    if eta <= 0.0 {
        return Err(Error::NoInformation);
    }
    let k = StepCoefficients::new(gamma_d, eta, 0.0, dt)?;
    Ok(sample_kernel(state, axis, &k, rng))
}

/// Variance of a single record sample.
pub fn record_variance(dt: f64, gamma_d: f64, eta: f64) -> f64 {
    1.0 / (2.0 * gamma_d * eta * dt)
}

/// State path on a uniform grid, with the record that drove it.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<QubitState>,
    pub record: Option<MeasurementRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> QubitState {
        *self.states.last().expect("trajectory has at least the initial state")
    }

    /// Keeps every `stride`-th state. The record is kept whole.
    pub fn decimate(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        Trajectory {
            times: self.times.iter().step_by(stride).copied().collect(),
            states: self.states.iter().step_by(stride).copied().collect(),
            record: self.record.clone(),
        }
    }
}

/// Runs trajectory `index` of the ensemble described by `config`, calling
/// `visit(i, state_i, sample_i)` for every grid point. `sample_i` is the
/// record value acquired over `[t_i, t_{i+1})`, absent at the last point and
/// when `eta = 0`.
pub fn simulate_with<F>(config: &ExperimentConfig, index: u64, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &QubitState, Option<f64>),
{
    config.validate()?;
    let k = StepCoefficients::from_config(config)?;
    let n = config.n_steps();
    let mut rng = stream_rng(config.seed, index);
    let informative = config.eta > 0.0;
    let mut state = config.initial;
    for i in 0..n {
        let axis = config.schedule.axis_at(i as f64 * config.dt);
        let v = if informative { sample_kernel(&state, axis, &k, &mut rng) } else { 0.0 };
        visit(i, &state, informative.then_some(v));
        state = povm_kernel(&state, v, axis, &k);
    }
    visit(n, &state, None);
    Ok(())
}

/// Forward model of one run: sample the record, update, advance the axis.
pub fn simulate_trajectory(config: &ExperimentConfig) -> Result<Trajectory> {
    simulate_trajectory_indexed(config, 0)
}

/// Trajectory `index` of the seeded ensemble.
pub fn simulate_trajectory_indexed(config: &ExperimentConfig, index: u64) -> Result<Trajectory> {
    let n = config.n_steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n);
    simulate_with(config, index, |_, s, v| {
        states.push(*s);
        if let Some(v) = v {
            values.push(v);
        }
    })?;
    let record = (config.eta > 0.0).then(|| MeasurementRecord::normalized(config.dt, values));
    Ok(Trajectory { times: config.times(), states, record })
}

/// Replays a normalized record through the same update as the simulator.
/// A record sampled `samples_per_step` times finer than `config.dt` is
/// coarse-grained first.
pub fn reconstruct_trajectory(record: &MeasurementRecord, config: &ExperimentConfig) -> Result<Trajectory> {
    config.validate()?;
    record.validate()?;
    if record.raw_units {
        return Err(Error::InvalidConfig("record must be normalized before reconstruction".into()));
    }
    let k = StepCoefficients::from_config(config)?;
    let n = config.n_steps();
    let sps = config.detector.samples_per_step;
    let coarse;
    let rec = if sps > 1 && (record.dt * sps as f64 - config.dt).abs() <= 1e-9 * config.dt {
        coarse = coarse_grain(record, sps)?;
        &coarse
    } else {
        record
    };
    if rec.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: rec.len() });
    }
    let mut states = Vec::with_capacity(n + 1);
    let mut state = config.initial;
    states.push(state);
    for (i, &v) in rec.values.iter().enumerate() {
        let axis = config.schedule.axis_at(i as f64 * config.dt);
        state = povm_kernel(&state, v, axis, &k);
        states.push(state);
    }
    Ok(Trajectory { times: config.times(), states, record: Some(rec.clone()) })
}

/// Closed-form solution of
/// `d rho = -i (omega / 2) [sz, rho] dt + (gamma_d / 2) L[sy] rho dt + (gamma_phi / 2) L[sz] rho dt`.
///
/// `(x, y)` evolves under the drift `[[-gamma_d, -omega], [omega, 0]]` (plus
/// `-gamma_phi` on the diagonal); `z` decays at `gamma_d`.
pub fn lindblad_propagate(initial: &QubitState, gamma_d: f64, gamma_phi: f64, omega: f64, t: f64) -> QubitState {
    let mu = -0.5 * gamma_d;
    let disc4 = gamma_d * gamma_d - 4.0 * omega * omega;
    // exp(A t) = e^{mu t} [ c I + s (A - mu I) ]
    let (c, s) = if disc4.abs() <= 1e-9 * gamma_d * gamma_d {
        ((mu * t).exp(), t * (mu * t).exp())
    } else if disc4 > 0.0 {
        let k = 0.5 * disc4.sqrt();
        let (ep, em) = (((mu + k) * t).exp(), ((mu - k) * t).exp());
        (0.5 * (ep + em), 0.5 * (ep - em) / k)
    } else {
        let k = 0.5 * (-disc4).sqrt();
        let env = (mu * t).exp();
        let (sn, cs) = (k * t).sin_cos();
        (env * cs, env * sn / k)
    };
    // A - mu I = [[-gamma_d / 2, -omega], [omega, gamma_d / 2]]
    let (x0, y0) = (initial.x, initial.y);
    let x = c * x0 + s * (-0.5 * gamma_d * x0 - omega * y0);
    let y = c * y0 + s * (omega * x0 + 0.5 * gamma_d * y0);
    let damp = (-gamma_phi * t).exp();
    QubitState::new(x * damp, y * damp, initial.z * (-gamma_d * t).exp())
}

/// Maps a lab-frame state into the frame where the axis at angle `delta`
/// points along +y.
pub fn to_axis_frame(state: &QubitState, delta: f64) -> QubitState {
    state.rotate_z(FRAC_PI_2 - delta)
}

pub fn from_axis_frame(state: &QubitState, delta: f64) -> QubitState {
    state.rotate_z(delta - FRAC_PI_2)
}

/// Closed-form ensemble mean of `config` at time `t`, in the lab frame.
///
/// In the frame co-rotating with the axis, a static state appears to turn at
/// `-2 pi v`, so the rotating-frame equation is solved with `omega = -2 pi v`.
pub fn unconditioned_mean(config: &ExperimentConfig, t: f64) -> QubitState {
    let sched = config.schedule;
    let start = to_axis_frame(&config.initial, sched.delta0);
    let frame = lindblad_propagate(&start, config.gamma_d, config.gamma_phi, -sched.omega(), t);
    from_axis_frame(&frame, sched.delta_at(t))
}
