//! Seven-pulse tomography emulation and integrated-voltage post-selection.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use nalgebra::{Matrix3, SMatrix, Vector3};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::integrated_voltage;
use crate::sme::Trajectory;
use crate::state::QubitState;

/// Pre-readout rotation. The projective readout measures `sz` afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TomographyPulse {
    I,
    XHalfPlus,
    XHalfMinus,
    YHalfPlus,
    YHalfMinus,
    XPiPlus,
    XPiMinus,
}

impl TomographyPulse {
    pub const ALL: [TomographyPulse; 7] =
        [Self::I, Self::XHalfPlus, Self::XHalfMinus, Self::YHalfPlus, Self::YHalfMinus, Self::XPiPlus, Self::XPiMinus];

    /// Rotation axis (0 = x, 1 = y) and angle.
    fn rotation(self) -> Option<(usize, f64)> {
        match self {
            Self::I => None,
            Self::XHalfPlus => Some((0, FRAC_PI_2)),
            Self::XHalfMinus => Some((0, -FRAC_PI_2)),
            Self::YHalfPlus => Some((1, FRAC_PI_2)),
            Self::YHalfMinus => Some((1, -FRAC_PI_2)),
            Self::XPiPlus => Some((0, PI)),
            Self::XPiMinus => Some((0, -PI)),
        }
    }

    /// Bloch-vector row read out as `<sz>` after this pulse, exact.
    pub fn readout_row(self) -> [f64; 3] {
        match self {
            Self::I => [0.0, 0.0, 1.0],
            Self::XHalfPlus => [0.0, 1.0, 0.0],
            Self::XHalfMinus => [0.0, -1.0, 0.0],
            Self::YHalfPlus => [-1.0, 0.0, 0.0],
            Self::YHalfMinus => [1.0, 0.0, 0.0],
            Self::XPiPlus | Self::XPiMinus => [0.0, 0.0, -1.0],
        }
    }
}

/// Rotates the Bloch vector by the pulse.
pub fn apply_pulse(state: &QubitState, pulse: TomographyPulse) -> QubitState {
    let Some((axis, angle)) = pulse.rotation() else {
        return *state;
    };
    let (s, c) = angle.sin_cos();
    let QubitState { x, y, z } = *state;
    match axis {
        0 => QubitState::new(x, c * y - s * z, s * y + c * z),
        _ => QubitState::new(c * x + s * z, y, -s * x + c * z),
    }
}

/// Seven-by-three map from the Bloch vector to the pulse readouts.
pub fn design_matrix() -> SMatrix<f64, 7, 3> {
    SMatrix::<f64, 7, 3>::from_fn(|i, j| TomographyPulse::ALL[i].readout_row()[j])
}

/// Least-squares pseudo-inverse `(A^T A)^-1 A^T`.
fn pseudo_inverse() -> SMatrix<f64, 3, 7> {
    let a = design_matrix();
    let ata: Matrix3<f64> = a.transpose() * a;
    ata.try_inverse().unwrap_or_else(Matrix3::zeros) * a.transpose()
}

/// Two-norm condition number of the design matrix.
pub fn design_condition_number() -> f64 {
    let sv = design_matrix().singular_values();
    sv.max() / sv.min()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyEstimate {
    pub state: QubitState,
    pub stderr: [f64; 3],
}

fn invert(readouts: &[f64; 7], variances: &[f64; 7], project: bool) -> TomographyEstimate {
    let b = pseudo_inverse();
    let r: Vector3<f64> = b * SMatrix::<f64, 7, 1>::from_column_slice(readouts);
    let mut stderr = [0.0; 3];
    for (j, se) in stderr.iter_mut().enumerate() {
        *se = (0..7).map(|k| b[(j, k)].powi(2) * variances[k]).sum::<f64>().sqrt();
    }
    let state = QubitState::new(r[0], r[1], r[2]);
    TomographyEstimate { state: if project { state.project_to_ball() } else { state }, stderr }
}

fn mean_state(states: &[QubitState]) -> Result<QubitState> {
    if states.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n = states.len() as f64;
    let (x, y, z) = states.iter().fold((0.0, 0.0, 0.0), |a, s| (a.0 + s.x, a.1 + s.y, a.2 + s.z));
    Ok(QubitState::new(x / n, y / n, z / n))
}

/// Infinite-shot tomography: exact readout probabilities of the ensemble mean.
pub fn analytic_tomography(states: &[QubitState]) -> Result<TomographyEstimate> {
    let m = mean_state(states)?;
    let readouts = TomographyPulse::ALL.map(|p| apply_pulse(&m, p).z);
    Ok(invert(&readouts, &[0.0; 7], false))
}

/// Finite-shot tomography of an ensemble. Each shot measures a fresh member,
/// so the outcome probability per pulse is that of the ensemble mean.
pub fn simulate_tomography<R: Rng + ?Sized>(
    states: &[QubitState],
    shots_per_pulse: u64,
    rng: &mut R,
    project: bool,
) -> Result<TomographyEstimate> {
    if shots_per_pulse == 0 {
        return Err(Error::InvalidConfig("shots_per_pulse must be at least 1".into()));
    }
    let m = mean_state(states)?;
    let n = shots_per_pulse as f64;
    let mut readouts = [0.0; 7];
    let mut variances = [0.0; 7];
    for (k, p) in TomographyPulse::ALL.iter().enumerate() {
        let prob = (0.5 * (1.0 + apply_pulse(&m, *p).z)).clamp(0.0, 1.0);
        let dist = Binomial::new(shots_per_pulse, prob)
            .map_err(|e| Error::InvalidConfig(format!("readout probability {prob}: {e}")))?;
        let up = dist.sample(rng) as f64;
        let p_hat = up / n;
        readouts[k] = 2.0 * p_hat - 1.0;
        variances[k] = 4.0 * p_hat * (1.0 - p_hat) / n;
    }
    Ok(invert(&readouts, &variances, project))
}

/// Integrated record and final state of one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostselectSample {
    pub integrated_voltage: f64,
    pub final_state: QubitState,
}

/// Integration window for the post-selection voltage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdWindow {
    /// The whole dragging interval.
    Full,
    /// The final microsecond.
    Tail,
}

impl ThresholdWindow {
    pub fn bounds(self, duration: f64) -> (f64, f64) {
        match self {
            Self::Full => (0.0, duration),
            Self::Tail => ((duration - 1e-6).max(0.0), duration),
        }
    }
}

/// Pairs each trajectory's final state with its average normalized record
/// over `window`.
pub fn postselect_samples(trajectories: &[Trajectory], window: ThresholdWindow) -> Result<Vec<PostselectSample>> {
    trajectories
        .iter()
        .map(|t| {
            let record = t.record.as_ref().ok_or(Error::NoInformation)?;
            let v = integrated_voltage(record, window.bounds(record.duration()))?;
            Ok(PostselectSample { integrated_voltage: v, final_state: t.final_state() })
        })
        .collect()
}

/// Trajectories kept below this count are flagged.
pub const LOW_STATS_MIN: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostselectionCurve {
    pub thresholds: Vec<f64>,
    /// Mean fidelity of the kept final states; `None` if nothing was kept.
    pub fidelity: Vec<Option<f64>>,
    pub stderr: Vec<Option<f64>>,
    pub retained: Vec<usize>,
    pub retained_fraction: Vec<f64>,
    pub low_stats: Vec<bool>,
}

fn pure_fidelity(state: &QubitState, target: &QubitState) -> f64 {
    0.5 * (1.0 + state.x * target.x + state.y * target.y + state.z * target.z)
}

/// Keeps samples with `integrated_voltage >= threshold` for each threshold
/// and reports the mean fidelity against the pure `target`.
pub fn fidelity_vs_threshold(
    samples: &[PostselectSample],
    target: &QubitState,
    thresholds: &[f64],
) -> Result<PostselectionCurve> {
    if samples.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let total = samples.len() as f64;
    let points: Vec<(usize, Option<f64>, Option<f64>)> = thresholds
        .par_iter()
        .map(|&th| {
            let (mut n, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
            for s in samples.iter().filter(|s| s.integrated_voltage >= th) {
                let f = pure_fidelity(&s.final_state, target);
                n += 1;
                sum += f;
                sum_sq += f * f;
            }
            if n == 0 {
                return (0, None, None);
            }
            let mean = sum / n as f64;
            let se = if n > 1 {
                let var = (sum_sq / n as f64 - mean * mean).max(0.0) * n as f64 / (n - 1) as f64;
                Some((var / n as f64).sqrt())
            } else {
                None
            };
            (n, Some(mean), se)
        })
        .collect();
    Ok(PostselectionCurve {
        thresholds: thresholds.to_vec(),
        fidelity: points.iter().map(|p| p.1).collect(),
        stderr: points.iter().map(|p| p.2).collect(),
        retained: points.iter().map(|p| p.0).collect(),
        retained_fraction: points.iter().map(|p| p.0 as f64 / total).collect(),
        low_stats: points.iter().map(|p| p.0 < LOW_STATS_MIN).collect(),
    })
}

/// Mean fidelity of all samples, summed in the same order as the curve.
pub fn unconditioned_fidelity(samples: &[PostselectSample], target: &QubitState) -> Result<f64> {
    let c = fidelity_vs_threshold(samples, target, &[f64::NEG_INFINITY])?;
    c.fidelity[0].ok_or(Error::EmptyEnsemble)
}

/// Evenly spaced thresholds from `lo` to `hi` inclusive.
pub fn threshold_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect(),
    }
}

/// Smallest voltage kept by the top `fraction` of samples.
pub fn quantile_threshold(samples: &[PostselectSample], fraction: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::OutOfRange { name: "fraction", value: fraction, range: "(0, 1]" });
    }
    let mut v: Vec<f64> = samples.iter().map(|s| s.integrated_voltage).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let keep = ((fraction * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Ok(v[keep - 1])
}

/// CSV columns `threshold,fidelity,stderr,retained_fraction,low_stats_flag`.
pub fn write_curve_csv<W: Write>(mut out: W, curve: &PostselectionCurve) -> Result<()> {
    writeln!(out, "threshold,fidelity,stderr,retained_fraction,low_stats_flag")?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
    for i in 0..curve.thresholds.len() {
        writeln!(
            out,
            "{:e},{},{},{:e},{}",
            curve.thresholds[i],
            opt(curve.fidelity[i]),
            opt(curve.stderr[i]),
            curve.retained_fraction[i],
            u8::from(curve.low_stats[i])
        )?;
    }
    Ok(())
}
