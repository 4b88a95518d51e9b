//! Exponential decay fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub amplitude: f64,
    /// Decay rate `k` in `amplitude * exp(-k t)`.
    pub rate: f64,
    /// One-sigma uncertainty of `rate` from the weighted regression.
    pub rate_stderr: f64,
    pub points: usize,
}

/// Weighted log-linear fit of `y = A exp(-k t)`.
///
/// With standard errors given, points within two standard errors of zero are
/// dropped and the rest weighted by `(y / se)^2`; otherwise all positive
/// points count equally.
pub fn fit_exponential(times: &[f64], values: &[f64], stderr: Option<&[f64]>) -> Result<ExpFit> {
    if times.len() != values.len() || stderr.is_some_and(|s| s.len() != values.len()) {
        return Err(Error::FitFailure("series lengths differ".into()));
    }
    let mut pts = Vec::with_capacity(times.len());
    for (i, (&t, &y)) in times.iter().zip(values).enumerate() {
        if !(y > 0.0 && y.is_finite() && t.is_finite()) {
            continue;
        }
        let w = match stderr {
            Some(se) if se[i] > 0.0 => {
                if y < 2.0 * se[i] {
                    continue;
                }
                (y / se[i]).powi(2)
            }
            _ => 1.0,
        };
        pts.push((t, y.ln(), w));
    }
    if pts.len() < 2 {
        return Err(Error::FitFailure(format!("only {} usable points", pts.len())));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let tm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let lm = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let stt: f64 = pts.iter().map(|p| p.2 * (p.0 - tm).powi(2)).sum();
    if !(stt > 0.0) {
        return Err(Error::FitFailure("all points at the same time".into()));
    }
    let slope = pts.iter().map(|p| p.2 * (p.0 - tm) * (p.1 - lm)).sum::<f64>() / stt;
    let intercept = lm - slope * tm;
    let rate_stderr = if stderr.is_some() {
        stt.recip().sqrt()
    } else if pts.len() > 2 {
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (rss / (pts.len() - 2) as f64 / stt).sqrt()
    } else {
        0.0
    };
    Ok(ExpFit { amplitude: intercept.exp(), rate: -slope, rate_stderr, points: pts.len() })
}
