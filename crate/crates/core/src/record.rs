//! Detector model and measurement records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine detector response: an eigenstate-`s` trace averages to
/// `midpoint + offset + s * separation / 2` volts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Additive voltage offset, V.
    pub offset: f64,
    /// Distance between the mean voltages of the two eigenstates, V.
    pub separation: f64,
    /// Centre of the eigenstate means before the offset, V.
    #[serde(default)]
    pub midpoint: f64,
    /// Number of raw detector samples per propagation step.
    pub samples_per_step: usize,
}

impl Default for DetectorModel {
    /// The identity detector: normalized units in, normalized units out.
    fn default() -> Self {
        Self { offset: 0.0, separation: 2.0, midpoint: 0.0, samples_per_step: 1 }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::ZeroSeparation(self.separation));
        }
        if !self.offset.is_finite() || !self.midpoint.is_finite() {
            return Err(Error::InvalidConfig("detector offset and midpoint must be finite".into()));
        }
        if self.samples_per_step == 0 {
            return Err(Error::InvalidConfig("samples_per_step must be at least 1".into()));
        }
        Ok(())
    }

    /// Raw volts to normalized units.
    pub fn normalize(&self, raw: f64) -> f64 {
        (raw - self.offset - self.midpoint) * 2.0 / self.separation
    }

    /// Normalized units to raw volts.
    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.separation / 2.0 + self.midpoint + self.offset
    }
}

/// Sampled detector trace. Sample `i` covers `[i dt, (i + 1) dt)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub dt: f64,
    pub values: Vec<f64>,
    /// Whether `values` are in volts rather than normalized units.
    pub raw_units: bool,
}

impl MeasurementRecord {
    pub fn normalized(dt: f64, values: Vec<f64>) -> Self {
        Self { dt, values, raw_units: false }
    }

    pub fn raw(dt: f64, values: Vec<f64>) -> Self {
        Self { dt, values, raw_units: true }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.values.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::LengthMismatch { expected: 1, found: 0 });
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("record dt must be positive, got {}", self.dt)));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("record sample {i} is not finite")));
        }
        Ok(())
    }
}

/// Maps a raw trace into normalized units where the eigenstate means are +-1.
pub fn normalize_record(raw: &MeasurementRecord, det: &DetectorModel) -> Result<MeasurementRecord> {
    det.validate()?;
    if !raw.raw_units {
        return Err(Error::InvalidConfig("record is already normalized".into()));
    }
    Ok(MeasurementRecord::normalized(raw.dt, raw.values.iter().map(|&v| det.normalize(v)).collect()))
}

pub fn denormalize_record(record: &MeasurementRecord, det: &DetectorModel) -> Result<MeasurementRecord> {
    det.validate()?;
    if record.raw_units {
        return Err(Error::InvalidConfig("record is already in raw units".into()));
    }
    Ok(MeasurementRecord::raw(record.dt, record.values.iter().map(|&v| det.denormalize(v)).collect()))
}

/// Averages each block of `factor` consecutive samples. A trailing partial
/// block is dropped.
pub fn coarse_grain(record: &MeasurementRecord, factor: usize) -> Result<MeasurementRecord> {
    if factor == 0 {
        return Err(Error::InvalidConfig("coarse-graining factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(record.clone());
    }
    let values: Vec<f64> = record.values.chunks_exact(factor).map(|c| c.iter().sum::<f64>() / factor as f64).collect();
    if values.is_empty() {
        return Err(Error::LengthMismatch { expected: factor, found: record.len() });
    }
    Ok(MeasurementRecord { dt: record.dt * factor as f64, values, raw_units: record.raw_units })
}

fn window_indices(record: &MeasurementRecord, window: (f64, f64)) -> Result<(usize, usize)> {
    let (start, end) = window;
    let bad = Error::BadWindow { start, end };
    if !(start.is_finite() && end.is_finite()) || start < 0.0 || end <= start {
        return Err(bad);
    }
    // windows are snapped to the sample grid
    let i0 = (start / record.dt).round() as usize;
    let i1 = (end / record.dt).round() as usize;
    if i1 <= i0 || i1 > record.len() {
        return Err(bad);
    }
    Ok((i0, i1))
}

/// Time average of the samples in `window = (t_start, t_end)` seconds.
pub fn integrated_voltage(record: &MeasurementRecord, window: (f64, f64)) -> Result<f64> {
    let (i0, i1) = window_indices(record, window)?;
    let slice = &record.values[i0..i1];
    Ok(slice.iter().sum::<f64>() / slice.len() as f64)
}

/// Time integral `sum V_i dt` over `window`.
pub fn integrated_signal(record: &MeasurementRecord, window: (f64, f64)) -> Result<f64> {
    let (i0, i1) = window_indices(record, window)?;
    Ok(record.values[i0..i1].iter().sum::<f64>() * record.dt)
}
