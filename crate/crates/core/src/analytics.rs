//! Rotating-frame spectral analysis, ensemble statistics, jump detection and
//! calibration estimators.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::{par_fold_chunks, MomentAccumulator};
use crate::error::{Error, Result};
use crate::fit::{fit_exponential, ExpFit};
use crate::sme::{simulate_with, Trajectory};
use crate::state::{AxisSchedule, ExperimentConfig, QubitState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `gamma_d < 2 |omega|`: the state circulates relative to the axis.
    Oscillatory,
    /// `gamma_d >= 2 |omega|`: overdamped, the state is dragged.
    Zeno,
}

/// Eigen-decomposition of the ensemble dynamics in the frame co-rotating
/// with the measurement axis.
///
/// Vectors are written in frame coordinates `(perpendicular, along)` where
/// "along" is the measurement axis and the positive perpendicular direction
/// points behind the rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralAnalysis {
    pub gamma_d: f64,
    /// `2 pi v`, rad/s.
    pub omega: f64,
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    /// Slow eigenvector (the jump axis), unit norm.
    pub v_plus: [Complex64; 2],
    pub v_minus: [Complex64; 2],
    /// Lag of the jump axis behind the measurement axis, radians. Zeno only.
    pub theta: Option<f64>,
    /// Jump rate `|lambda_plus| / 2`, 1/s. Zeno only.
    pub gamma_j: Option<f64>,
    pub regime: Regime,
}

impl SpectralAnalysis {
    pub fn is_zeno(&self) -> bool {
        self.regime == Regime::Zeno
    }

    /// Lab-frame angle of the jump axis at time `t` under `schedule`.
    pub fn jump_axis_angle(&self, schedule: &AxisSchedule, t: f64) -> Result<f64> {
        let theta = self.theta.ok_or(Error::NotZenoRegime)?;
        Ok(schedule.delta_at(t) - theta)
    }
}

/// Drift of `(x, y)` under `-i (omega / 2)[sz, .] + (gamma_d / 2) L[sy]`.
///
/// The frame that co-rotates with an axis turning at `+2 pi v` sees
/// `omega = -2 pi v`.
pub fn rotating_frame_drift(gamma_d: f64, omega: f64) -> Matrix2<f64> {
    Matrix2::new(-gamma_d, -omega, omega, 0.0)
}

fn unit(v: [Complex64; 2]) -> [Complex64; 2] {
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    [v[0] / n, v[1] / n]
}

/// Closed-form eigenvalues, eigenvectors, lag angle and jump rate for
/// dephasing rate `gamma_d` (rad/s) and axis speed `v` (Hz).
pub fn spectral_analysis(gamma_d: f64, v: f64) -> SpectralAnalysis {
    let omega = 2.0 * PI * v;
    let disc = gamma_d * gamma_d - 4.0 * omega * omega;
    // a rounding-level discriminant is the critical point, not an oscillation
    let zeno = gamma_d >= 2.0 * omega.abs() || disc.abs() <= 4.0 * f64::EPSILON * gamma_d * gamma_d;
    let (lambda_plus, lambda_minus) = if zeno {
        // large root first, small root from lambda+ lambda- = omega^2
        let lm = -0.5 * (gamma_d + disc.max(0.0).sqrt());
        let lp = if lm != 0.0 { omega * omega / lm } else { 0.0 };
        (Complex64::new(lp, 0.0), Complex64::new(lm, 0.0))
    } else {
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(-0.5 * gamma_d, im), Complex64::new(-0.5 * gamma_d, -im))
    };
    let w = Complex64::new(omega, 0.0);
    // (1, (lambda + gamma_d) / omega) scaled by omega; lambda+- + gamma_d = -lambda-+
    let (v_plus, v_minus) = if omega == 0.0 {
        ([Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)], [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)])
    } else {
        (unit([w, -lambda_minus]), unit([w, -lambda_plus]))
    };
    let theta = zeno.then(|| if omega == 0.0 { 0.0 } else { (omega / -lambda_minus.re).atan() });
    let gamma_j = zeno.then(|| 0.5 * lambda_plus.re.abs());
    SpectralAnalysis {
        gamma_d,
        omega,
        lambda_plus,
        lambda_minus,
        v_plus,
        v_minus,
        theta,
        gamma_j,
        regime: if zeno { Regime::Zeno } else { Regime::Oscillatory },
    }
}

/// Component-wise ensemble mean with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMean {
    pub times: Vec<f64>,
    pub mean: Vec<QubitState>,
    pub stderr: Vec<[f64; 3]>,
    pub count: usize,
}

fn common_grid(trajectories: &[Trajectory]) -> Result<&[f64]> {
    let first = trajectories.first().ok_or(Error::EmptyEnsemble)?;
    if trajectories.iter().any(|t| t.times != first.times || t.states.len() != first.times.len()) {
        return Err(Error::GridMismatch);
    }
    Ok(&first.times)
}

pub fn ensemble_mean(trajectories: &[Trajectory]) -> Result<EnsembleMean> {
    let times = common_grid(trajectories)?;
    let mut acc = MomentAccumulator::new(3 * times.len());
    let mut buf = Vec::with_capacity(3 * times.len());
    for t in trajectories {
        buf.clear();
        buf.extend(t.states.iter().flat_map(|s| s.as_array()));
        acc.push(&buf)?;
    }
    let (m, se) = (acc.mean(), acc.stderr());
    Ok(EnsembleMean {
        times: times.to_vec(),
        mean: m.chunks_exact(3).map(|c| QubitState::new(c[0], c[1], c[2])).collect(),
        stderr: se.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        count: acc.count,
    })
}

/// Coordinates `(along, perpendicular)` of `state` relative to the jump axis
/// at lab angle `angle`. The perpendicular direction is `angle + pi / 2`.
pub fn jump_frame_coordinates(state: &QubitState, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (state.x * c + state.y * s, -state.x * s + state.y * c)
}

/// Ensemble means along and perpendicular to the jump axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpFrameSeries {
    pub times: Vec<f64>,
    pub along: Vec<f64>,
    pub along_se: Vec<f64>,
    pub perp: Vec<f64>,
    pub perp_se: Vec<f64>,
}

impl JumpFrameSeries {
    fn from_moments(times: Vec<f64>, acc: &MomentAccumulator) -> Self {
        let (m, se) = (acc.mean(), acc.stderr());
        let n = times.len();
        Self {
            times,
            along: m[..n].to_vec(),
            along_se: se[..n].to_vec(),
            perp: m[n..].to_vec(),
            perp_se: se[n..].to_vec(),
        }
    }

    /// Exponential fit of the along-axis mean over `t >= t_min`.
    pub fn fit_along(&self, t_min: f64) -> Result<ExpFit> {
        fit_tail(&self.times, &self.along, &self.along_se, t_min, f64::INFINITY)
    }

    /// Exponential fit of the perpendicular mean over `t <= t_max`, after
    /// orienting it positive.
    pub fn fit_perp(&self, t_max: f64) -> Result<ExpFit> {
        fit_tail(&self.times, &self.perp, &self.perp_se, f64::NEG_INFINITY, t_max)
    }
}

fn fit_tail(times: &[f64], y: &[f64], se: &[f64], t_min: f64, t_max: f64) -> Result<ExpFit> {
    let sign = y.first().copied().unwrap_or(1.0).signum();
    let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= t_min && times[i] <= t_max).collect();
    let t: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
    let v: Vec<f64> = idx.iter().map(|&i| sign * y[i]).collect();
    let s: Vec<f64> = idx.iter().map(|&i| se[i]).collect();
    let weighted = s.iter().all(|&x| x > 0.0);
    fit_exponential(&t, &v, weighted.then_some(s.as_slice()))
}

/// Projects an ensemble onto the jump-axis frame, which lags the
/// measurement axis by `theta`.
pub fn jump_frame_project(
    trajectories: &[Trajectory],
    analysis: &SpectralAnalysis,
    schedule: &AxisSchedule,
) -> Result<JumpFrameSeries> {
    if !analysis.is_zeno() {
        return Err(Error::NotZenoRegime);
    }
    let times = common_grid(trajectories)?;
    let angles: Vec<f64> = times.iter().map(|&t| analysis.jump_axis_angle(schedule, t)).collect::<Result<_>>()?;
    let n = times.len();
    let mut acc = MomentAccumulator::new(2 * n);
    let mut buf = vec![0.0; 2 * n];
    for tr in trajectories {
        for (i, (s, &a)) in tr.states.iter().zip(&angles).enumerate() {
            let (al, pe) = jump_frame_coordinates(s, a);
            buf[i] = al;
            buf[n + i] = pe;
        }
        acc.push(&buf)?;
    }
    Ok(JumpFrameSeries::from_moments(times.to_vec(), &acc))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pole {
    Plus,
    Minus,
}

/// A completed transition between the poles of the jump axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub index: usize,
    /// Pole the state arrived at.
    pub to: Pole,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpThresholds {
    /// Hysteresis level `h`: a jump needs the coordinate to pass from above
    /// `+h` to below `-h` or vice versa.
    pub level: f64,
    /// Length of the trailing moving average applied first; 1 disables it.
    pub smoothing: usize,
}

impl Default for JumpThresholds {
    fn default() -> Self {
        Self { level: 0.5, smoothing: 1 }
    }
}

/// Incremental hysteresis detector.
#[derive(Clone, Debug)]
pub struct HysteresisDetector {
    thresholds: JumpThresholds,
    window: VecDeque<f64>,
    sum: f64,
    pole: Option<Pole>,
}

impl HysteresisDetector {
    pub fn new(thresholds: JumpThresholds) -> Self {
        Self { thresholds, window: VecDeque::new(), sum: 0.0, pole: None }
    }

    /// Feeds sample `index`; returns an event if a jump completes here.
    pub fn push(&mut self, index: usize, time: f64, coordinate: f64) -> Option<JumpEvent> {
        let w = self.thresholds.smoothing.max(1);
        self.window.push_back(coordinate);
        self.sum += coordinate;
        if self.window.len() > w {
            self.sum -= self.window.pop_front().unwrap_or(0.0);
        }
        let value = self.sum / self.window.len() as f64;
        let h = self.thresholds.level;
        let now = if value > h {
            Some(Pole::Plus)
        } else if value < -h {
            Some(Pole::Minus)
        } else {
            None
        };
        match (self.pole, now) {
            (_, None) => None,
            (None, Some(p)) => {
                self.pole = Some(p);
                None
            }
            (Some(old), Some(new)) if old != new => {
                self.pole = Some(new);
                Some(JumpEvent { time, index, to: new })
            }
            _ => None,
        }
    }
}

/// Hysteresis jump detection on an arbitrary coordinate series.
pub fn detect_jumps_in_series(times: &[f64], coordinate: &[f64], thresholds: &JumpThresholds) -> Vec<JumpEvent> {
    let mut det = HysteresisDetector::new(*thresholds);
    times.iter().zip(coordinate).enumerate().filter_map(|(i, (&t, &c))| det.push(i, t, c)).collect()
}

/// Jumps of one trajectory along its jump axis.
pub fn detect_jumps(
    trajectory: &Trajectory,
    analysis: &SpectralAnalysis,
    schedule: &AxisSchedule,
    thresholds: &JumpThresholds,
) -> Result<Vec<JumpEvent>> {
    let coords: Vec<f64> = trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .map(|(&t, s)| Ok(jump_frame_coordinates(s, analysis.jump_axis_angle(schedule, t)?).0))
        .collect::<Result<_>>()?;
    Ok(detect_jumps_in_series(&trajectory.times, &coords, thresholds))
}

/// Jump-frame means and first-passage times of a streamed ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpStatistics {
    pub frame: JumpFrameSeries,
    /// Time of the first detected jump per trajectory.
    pub first_jumps: Vec<Option<f64>>,
    /// Total number of jumps per trajectory.
    pub jump_counts: Vec<usize>,
}

impl JumpStatistics {
    /// Fraction of trajectories without a jump up to each frame time.
    pub fn survival(&self) -> Vec<f64> {
        survival_curve(&self.frame.times, &self.first_jumps)
    }
}

/// Simulates `n` trajectories of `config` without keeping them, recording
/// jump-frame moments every `stride` steps and jumps at full resolution.
pub fn jump_statistics(
    config: &ExperimentConfig,
    n: usize,
    stride: usize,
    thresholds: &JumpThresholds,
) -> Result<JumpStatistics> {
    let analysis = spectral_analysis(config.gamma_d, config.schedule.v);
    let theta = analysis.theta.ok_or(Error::NotZenoRegime)?;
    let stride = stride.max(1);
    let steps = config.n_steps();
    let times: Vec<f64> = (0..=steps).step_by(stride).map(|i| i as f64 * config.dt).collect();
    let m = times.len();

    struct Acc {
        moments: MomentAccumulator,
        first: Vec<Option<f64>>,
        counts: Vec<usize>,
    }
    let acc = par_fold_chunks(
        n,
        || Acc { moments: MomentAccumulator::new(2 * m), first: Vec::new(), counts: Vec::new() },
        |acc, idx| {
            let mut buf = vec![0.0; 2 * m];
            let mut det = HysteresisDetector::new(*thresholds);
            let mut first = None;
            let mut count = 0;
            simulate_with(config, idx as u64, |i, s, _| {
                let t = i as f64 * config.dt;
                let (al, pe) = jump_frame_coordinates(s, config.schedule.delta_at(t) - theta);
                if i % stride == 0 {
                    buf[i / stride] = al;
                    buf[m + i / stride] = pe;
                }
                if let Some(ev) = det.push(i, t, al) {
                    count += 1;
                    first.get_or_insert(ev.time);
                }
            })?;
            acc.moments.push(&buf)?;
            acc.first.push(first);
            acc.counts.push(count);
            Ok(())
        },
        |a, b| {
            a.moments.merge(b.moments);
            a.first.extend(b.first);
            a.counts.extend(b.counts);
        },
    )?;
    Ok(JumpStatistics {
        frame: JumpFrameSeries::from_moments(times, &acc.moments),
        first_jumps: acc.first,
        jump_counts: acc.counts,
    })
}

/// `S(t)`: fraction of first-jump times later than `t` (never counts as later).
pub fn survival_curve(times: &[f64], first_jumps: &[Option<f64>]) -> Vec<f64> {
    let n = first_jumps.len().max(1) as f64;
    let mut sorted: Vec<f64> = first_jumps.iter().flatten().copied().collect();
    sorted.sort_by(f64::total_cmp);
    times
        .iter()
        .map(|&t| {
            let jumped = sorted.partition_point(|&x| x <= t);
            (first_jumps.len() - jumped) as f64 / n
        })
        .collect()
}

/// Exponential fit of a survival curve restricted to `lo < S < hi`, with
/// binomial standard errors.
pub fn fit_survival(times: &[f64], survival: &[f64], trajectories: usize, lo: f64, hi: f64) -> Result<ExpFit> {
    let n = trajectories as f64;
    let mut t = Vec::new();
    let mut s = Vec::new();
    let mut se = Vec::new();
    for (&ti, &si) in times.iter().zip(survival) {
        if si > lo && si < hi {
            t.push(ti);
            s.push(si);
            se.push((si * (1.0 - si) / n).sqrt());
        }
    }
    fit_exponential(&t, &s, Some(&se))
}

/// Polar histogram of XY-plane projections: `counts[a * radius_bins + r]`
/// with angle bins over `[-pi, pi)` and radius bins over `[0, 1]`.
pub fn polar_histogram(states: &[QubitState], angle_bins: usize, radius_bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; angle_bins * radius_bins];
    if angle_bins == 0 || radius_bins == 0 {
        return counts;
    }
    for s in states {
        let r = s.x.hypot(s.y);
        let a = s.y.atan2(s.x);
        let ai = (((a + PI) / (2.0 * PI)) * angle_bins as f64).floor() as usize;
        let ri = (r * radius_bins as f64).floor() as usize;
        counts[ai.min(angle_bins - 1) * radius_bins + ri.min(radius_bins - 1)] += 1;
    }
    counts
}

/// Gaussian fits of integrated records from the two eigenstate preparations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    pub mu_plus: f64,
    pub mu_minus: f64,
    /// Mean of the two standard deviations.
    pub sigma: f64,
    /// Integration time, s.
    pub tau: f64,
}

impl CalibrationStats {
    /// `eta = (mu+ - mu-)^2 / (8 tau sigma^2 gamma_d)`.
    pub fn eta(&self, gamma_d: f64) -> f64 {
        (self.mu_plus - self.mu_minus).powi(2) / (8.0 * self.tau * self.sigma * self.sigma * gamma_d)
    }
}

fn gaussian_mle(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::FitFailure(format!("need at least 2 records, got {}", values.len())));
    }
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::FitFailure("degenerate record distribution".into()));
    }
    Ok((mu, var.sqrt()))
}

/// Maximum-likelihood Gaussian parameters of the two labelled record sets.
pub fn fit_calibration(plus: &[f64], minus: &[f64], tau: f64) -> Result<CalibrationStats> {
    if !(tau > 0.0) {
        return Err(Error::OutOfRange { name: "tau", value: tau, range: "(0, inf)" });
    }
    let (mu_plus, s_plus) = gaussian_mle(plus)?;
    let (mu_minus, s_minus) = gaussian_mle(minus)?;
    if mu_plus <= mu_minus {
        return Err(Error::FitFailure(format!("histograms are not separated: mu+ = {mu_plus}, mu- = {mu_minus}")));
    }
    Ok(CalibrationStats { mu_plus, mu_minus, sigma: 0.5 * (s_plus + s_minus), tau })
}

/// Quantum efficiency from integrated records `sum V dt` of the `+1` and `-1`
/// eigenstate preparations.
pub fn estimate_eta(plus: &[f64], minus: &[f64], gamma_d: f64, tau: f64) -> Result<f64> {
    Ok(fit_calibration(plus, minus, tau)?.eta(gamma_d))
}

/// Measurement dephasing rate from the decay of the mean `<x>(t)` of a `|+>`
/// preparation measured along y. The fitted rate includes `gamma_phi`, which
/// is subtracted.
pub fn estimate_gamma_d(times: &[f64], x_mean: &[f64], x_stderr: Option<&[f64]>, gamma_phi: f64) -> Result<f64> {
    let fit = fit_exponential(times, x_mean, x_stderr)?;
    Ok(fit.rate - gamma_phi)
}
