//! Self-describing ensemble files and CSV export.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ZDRG" | u32 schema version | u64 header length | JSON header
//! frame * header.frames        (f64 LE: record values, then x y z per state row)
//! "ZEND" | SHA-256 of every preceding byte
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::record::MeasurementRecord;
use crate::sme::Trajectory;
use crate::state::{ExperimentConfig, QubitState};

pub const MAGIC: [u8; 4] = *b"ZDRG";
pub const FOOTER_MAGIC: [u8; 4] = *b"ZEND";
pub const SCHEMA_VERSION: u32 = 1;

/// Hex SHA-256 of the canonical JSON form of `config`.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let json = serde_json::to_vec(config).unwrap_or_default();
    hex::encode(Sha256::digest(json))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleHeader {
    pub schema_version: u32,
    pub kind: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    /// Number of frames that follow.
    pub frames: usize,
    /// Normalized record samples per frame.
    pub record_len: usize,
    /// Stored states per frame.
    pub state_rows: usize,
    /// Propagation steps between stored states.
    pub state_stride: usize,
    pub dt: f64,
}

impl EnsembleHeader {
    pub fn new(config: &ExperimentConfig, frames: usize, state_stride: usize) -> Self {
        let steps = config.n_steps();
        let stride = state_stride.max(1);
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "ensemble".into(),
            config: config.clone(),
            config_hash: config_hash(config),
            seed: config.seed,
            frames,
            record_len: if config.eta > 0.0 { steps } else { 0 },
            state_rows: steps / stride + 1,
            state_stride: stride,
            dt: config.dt,
        }
    }

    fn frame_len(&self) -> usize {
        self.record_len + 3 * self.state_rows
    }

    /// Times of the stored states.
    pub fn state_times(&self) -> Vec<f64> {
        (0..self.state_rows).map(|i| (i * self.state_stride) as f64 * self.dt).collect()
    }
}

/// One trajectory as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleFrame {
    pub record: Vec<f64>,
    pub states: Vec<QubitState>,
}

impl EnsembleFrame {
    pub fn into_trajectory(self, header: &EnsembleHeader) -> Trajectory {
        let record = (!self.record.is_empty()).then(|| MeasurementRecord::normalized(header.dt, self.record));
        Trajectory { times: header.state_times(), states: self.states, record }
    }
}

/// Writer that hashes everything it forwards.
struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Append-only streaming writer. Exactly `header.frames` frames must be
/// written before [`EnsembleWriter::finish`].
pub struct EnsembleWriter<W: Write> {
    out: HashingWriter<W>,
    header: EnsembleHeader,
    written: usize,
    buf: Vec<u8>,
}

impl EnsembleWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, header: EnsembleHeader) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> EnsembleWriter<W> {
    pub fn new(inner: W, header: EnsembleHeader) -> Result<Self> {
        let json = serde_json::to_vec(&header)?;
        let mut out = HashingWriter { inner, hasher: Sha256::new() };
        out.write_all(&MAGIC)?;
        out.write_all(&header.schema_version.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        Ok(Self { out, header, written: 0, buf: Vec::new() })
    }

    pub fn header(&self) -> &EnsembleHeader {
        &self.header
    }

    pub fn write_frame(&mut self, record: &[f64], states: &[QubitState]) -> Result<()> {
        if record.len() != self.header.record_len {
            return Err(Error::LengthMismatch { expected: self.header.record_len, found: record.len() });
        }
        if states.len() != self.header.state_rows {
            return Err(Error::LengthMismatch { expected: self.header.state_rows, found: states.len() });
        }
        if self.written == self.header.frames {
            return Err(Error::LengthMismatch { expected: self.header.frames, found: self.written + 1 });
        }
        self.buf.clear();
        for v in record.iter().copied().chain(states.iter().flat_map(|s| s.as_array())) {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&self.buf)?;
        self.written += 1;
        Ok(())
    }

    /// Writes a decimated trajectory; its record may be absent only if the
    /// header declares no record samples.
    pub fn write_trajectory(&mut self, trajectory: &Trajectory) -> Result<()> {
        let record = trajectory.record.as_ref().map(|r| r.values.as_slice()).unwrap_or(&[]);
        self.write_frame(record, &trajectory.states)
    }

    /// Writes the footer and returns the inner writer.
    pub fn finish(mut self) -> Result<W> {
        if self.written != self.header.frames {
            return Err(Error::LengthMismatch { expected: self.header.frames, found: self.written });
        }
        self.out.write_all(&FOOTER_MAGIC)?;
        let digest = self.out.hasher.finalize_reset();
        let mut inner = self.out.inner;
        inner.write_all(&digest)?;
        inner.flush()?;
        Ok(inner)
    }
}

/// Reader that hashes everything it consumes.
struct HashingReader<R: Read> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> HashingReader<R> {
    fn read_exact_or(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        read_exact_or(&mut self.inner, buf, what)?;
        self.hasher.update(&*buf);
        Ok(())
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Truncated(what.to_string()),
        _ => Error::Io(e),
    })
}

/// Streaming reader; holds one frame in memory at a time. Iterating past the
/// last frame verifies the footer checksum.
pub struct EnsembleReader<R: Read> {
    input: HashingReader<R>,
    header: EnsembleHeader,
    read: usize,
    verified: bool,
    buf: Vec<u8>,
}

impl EnsembleReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> EnsembleReader<R> {
    pub fn new(inner: R) -> Result<Self> {
        let mut input = HashingReader { inner, hasher: Sha256::new() };
        let mut magic = [0u8; 4];
        input.read_exact_or(&mut magic, "magic")?;
        if magic != MAGIC {
            return Err(Error::BadMagic);
        }
        let mut word = [0u8; 4];
        input.read_exact_or(&mut word, "schema version")?;
        let version = u32::from_le_bytes(word);
        if version != SCHEMA_VERSION {
            return Err(Error::VersionMismatch { expected: SCHEMA_VERSION, found: version });
        }
        let mut len = [0u8; 8];
        input.read_exact_or(&mut len, "header length")?;
        let len = u64::from_le_bytes(len);
        if len > 1 << 26 {
            return Err(Error::Truncated(format!("implausible header length {len}")));
        }
        let mut json = vec![0u8; len as usize];
        input.read_exact_or(&mut json, "header")?;
        let header: EnsembleHeader = serde_json::from_slice(&json)?;
        if header.schema_version != version {
            return Err(Error::VersionMismatch { expected: version, found: header.schema_version });
        }
        let buf = vec![0u8; 8 * header.frame_len()];
        Ok(Self { input, header, read: 0, verified: false, buf })
    }

    pub fn header(&self) -> &EnsembleHeader {
        &self.header
    }

    fn read_frame(&mut self) -> Result<EnsembleFrame> {
        self.input.read_exact_or(&mut self.buf, &format!("frame {}", self.read))?;
        self.read += 1;
        let mut vals = self.buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap_or([0; 8])));
        let record: Vec<f64> = vals.by_ref().take(self.header.record_len).collect();
        let flat: Vec<f64> = vals.collect();
        let states = flat.chunks_exact(3).map(|c| QubitState::new(c[0], c[1], c[2])).collect();
        Ok(EnsembleFrame { record, states })
    }

    fn verify_footer(&mut self) -> Result<()> {
        let mut magic = [0u8; 4];
        self.input.read_exact_or(&mut magic, "footer")?;
        if magic != FOOTER_MAGIC {
            return Err(Error::Checksum);
        }
        let expected = self.input.hasher.finalize_reset();
        let mut digest = [0u8; 32];
        read_exact_or(&mut self.input.inner, &mut digest, "checksum")?;
        if digest[..] != expected[..] {
            return Err(Error::Checksum);
        }
        self.verified = true;
        Ok(())
    }

    /// Reads every remaining frame into trajectories.
    pub fn read_all(self) -> Result<Vec<Trajectory>> {
        let header = self.header.clone();
        self.map(|f| f.map(|f| f.into_trajectory(&header))).collect()
    }
}

impl<R: Read> Iterator for EnsembleReader<R> {
    type Item = Result<EnsembleFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read < self.header.frames {
            return Some(self.read_frame());
        }
        if self.verified {
            return None;
        }
        match self.verify_footer() {
            Ok(()) => None,
            Err(e) => {
                self.verified = true;
                Some(Err(e))
            }
        }
    }
}

/// Writes a whole ensemble file.
pub fn write_ensemble(path: impl AsRef<Path>, header: EnsembleHeader, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = EnsembleWriter::create(path, header)?;
    for t in trajectories {
        w.write_trajectory(t)?;
    }
    w.finish()?;
    Ok(())
}

/// Reads a whole ensemble file.
pub fn read_ensemble(path: impl AsRef<Path>) -> Result<(EnsembleHeader, Vec<Trajectory>)> {
    let r = EnsembleReader::open(path)?;
    let header = r.header().clone();
    Ok((header, r.read_all()?))
}

/// CSV with columns `t,V,x,y,z`, one row per stored state. `V` is the mean
/// record value over the interval following the row and is empty on the
/// last row or when no record is attached.
pub fn write_trajectory_csv<W: Write>(out: W, trajectory: &Trajectory) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "t,V,x,y,z")?;
    let stride = match (&trajectory.record, trajectory.times.get(1)) {
        (Some(r), Some(&t1)) => ((t1 - trajectory.times[0]) / r.dt).round().max(1.0) as usize,
        _ => 1,
    };
    for (i, (t, s)) in trajectory.times.iter().zip(&trajectory.states).enumerate() {
        let v = trajectory
            .record
            .as_ref()
            .and_then(|r| r.values.get(i * stride..(i + 1) * stride))
            .map(|block| format!("{:e}", block.iter().sum::<f64>() / block.len() as f64))
            .unwrap_or_default();
        writeln!(out, "{t:e},{v},{:e},{:e},{:e}", s.x, s.y, s.z)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use super::*;
    use crate::sme::simulate_trajectory_indexed;

    fn config() -> ExperimentConfig {
        ExperimentConfig { seed: 5, ..ExperimentConfig::reference_defaults(40e3, 5e-6) }
    }

    fn encode(trajs: &[Trajectory], stride: usize) -> Vec<u8> {
        let header = EnsembleHeader::new(&config(), trajs.len(), stride);
        let mut w = EnsembleWriter::new(Vec::new(), header).unwrap();
        for t in trajs {
            w.write_trajectory(t).unwrap();
        }
        w.finish().unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let c = config();
        let trajs: Vec<Trajectory> = (0..3).map(|i| simulate_trajectory_indexed(&c, i).unwrap()).collect();
        assert_eq!(trajs[0].record.as_ref().unwrap().len(), 500);
        let bytes = encode(&trajs, 1);
        let back = EnsembleReader::new(Cursor::new(bytes)).unwrap().read_all().unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in trajs.iter().zip(&back) {
            assert_eq!(a.states, b.states);
            assert_eq!(a.times, b.times);
            assert_eq!(a.record.as_ref().unwrap().values, b.record.as_ref().unwrap().values);
        }
    }

    #[test]
    fn header_carries_config() {
        let bytes = encode(&[], 10);
        let r = EnsembleReader::new(Cursor::new(bytes)).unwrap();
        assert_eq!(r.header().config, config());
        assert_eq!(r.header().state_rows, 51);
        assert_eq!(r.header().config_hash, config_hash(&config()));
        assert_eq!(r.count(), 0);
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let c = config();
        let t = simulate_trajectory_indexed(&c, 0).unwrap().decimate(10);
        let mut bytes = encode(&[t], 10);
        let mid = bytes.len() - 100;
        bytes[mid] ^= 0x01;
        let res: Result<Vec<_>> = EnsembleReader::new(Cursor::new(bytes)).unwrap().collect();
        assert!(matches!(res, Err(Error::Checksum)));
    }

    #[test]
    fn truncation_and_bad_headers() {
        let c = config();
        let t = simulate_trajectory_indexed(&c, 0).unwrap().decimate(10);
        let bytes = encode(&[t], 10);

        let short = bytes[..bytes.len() - 40].to_vec();
        let res: Result<Vec<_>> = EnsembleReader::new(Cursor::new(short)).unwrap().collect();
        assert!(matches!(res, Err(Error::Truncated(_))));

        let mid = bytes[..bytes.len() / 2].to_vec();
        let res: Result<Vec<_>> = EnsembleReader::new(Cursor::new(mid)).unwrap().collect();
        assert!(matches!(res, Err(Error::Truncated(_))));

        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(EnsembleReader::new(Cursor::new(wrong)), Err(Error::BadMagic)));

        let mut newer = bytes.clone();
        newer[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            EnsembleReader::new(Cursor::new(newer)),
            Err(Error::VersionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn writer_enforces_frame_count_and_shape() {
        let header = EnsembleHeader::new(&config(), 1, 10);
        let mut w = EnsembleWriter::new(Vec::new(), header.clone()).unwrap();
        assert!(w.write_frame(&[0.0; 3], &[]).is_err());
        assert!(EnsembleWriter::new(Vec::new(), header).unwrap().finish().is_err());
    }

    #[test]
    fn csv_has_one_row_per_state() {
        let c = config();
        let t = simulate_trajectory_indexed(&c, 0).unwrap().decimate(10);
        let mut out = Vec::new();
        write_trajectory_csv(&mut out, &t).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,V,x,y,z");
        assert_eq!(lines.len(), 52);
        assert!(lines[1].split(',').nth(1).is_some_and(|v| !v.is_empty()));
        assert!(lines[51].split(',').nth(1).is_some_and(|v| v.is_empty()));
    }
}
