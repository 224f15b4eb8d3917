//! Sampled waveforms, passbands, spectra and the on-disk trace format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical unit carried by a [`SignalTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Volts,
    Amps,
    Dimensionless,
}

impl Unit {
    pub fn code(self) -> u64 {
        match self {
            Unit::Volts => 0,
            Unit::Amps => 1,
            Unit::Dimensionless => 2,
        }
    }

    pub fn from_code(code: u64) -> Result<Self> {
        match code {
            0 => Ok(Unit::Volts),
            1 => Ok(Unit::Amps),
            2 => Ok(Unit::Dimensionless),
            c => Err(Error::TraceFormat(format!("unknown unit code {c}"))),
        }
    }
}

/// A uniformly sampled, finite, non-empty real waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    unit: Unit,
}

pub const TRACE_MAGIC: &[u8; 8] = b"NODETRC1";
const HEADER_LEN: usize = 24;

impl SignalTrace {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, unit: Unit) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidTrace(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::EmptyTrace);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidTrace(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            unit,
        })
    }

    /// Samples `f(t)` at `n` points starting from t = 0.
    pub fn from_fn(n: usize, sample_rate_hz: f64, unit: Unit, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = (0..n).map(|i| f(i as f64 / sample_rate_hz)).collect();
        Self::new(samples, sample_rate_hz, unit)
    }

    pub fn zeros(n: usize, sample_rate_hz: f64, unit: Unit) -> Result<Self> {
        Self::new(vec![0.0; n], sample_rate_hz, unit)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }

    /// A new trace with the same rate and unit.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate_hz, self.unit)
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        self.with_samples(self.samples.iter().map(|s| s * c).collect())
    }

    /// Index of the sample at or after `t_s`, clamped to the trace.
    pub fn index_at(&self, t_s: f64) -> usize {
        ((t_s * self.sample_rate_hz).round().max(0.0) as usize).min(self.samples.len())
    }

    /// Sub-trace covering `[start_s, end_s)`.
    pub fn slice_time(&self, start_s: f64, end_s: f64) -> Result<Self> {
        let a = self.index_at(start_s);
        let b = self.index_at(end_s);
        if b <= a {
            return Err(Error::EmptyTrace);
        }
        self.with_samples(self.samples[a..b].to_vec())
    }

    pub fn concat(&self, other: &SignalTrace) -> Result<Self> {
        if other.sample_rate_hz != self.sample_rate_hz {
            return Err(Error::RateMismatch {
                expected: self.sample_rate_hz,
                actual: other.sample_rate_hz,
            });
        }
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        self.with_samples(samples)
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn mean_square(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    /// Writes the binary trace format: 24-byte header then little-endian f64 samples.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TRACE_MAGIC)?;
        w.write_all(&self.sample_rate_hz.to_le_bytes())?;
        w.write_all(&self.unit.code().to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&s.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|_| Error::TraceFormat("truncated header".into()))?;
        if &header[..8] != TRACE_MAGIC {
            return Err(Error::TraceFormat("bad magic".into()));
        }
        let fs = f64::from_le_bytes(header[8..16].try_into().unwrap());
        let unit = Unit::from_code(u64::from_le_bytes(header[16..24].try_into().unwrap()))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() % 8 != 0 {
            return Err(Error::TraceFormat(format!(
                "payload length {} is not a multiple of 8",
                body.len()
            )));
        }
        let samples = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(samples, fs, unit)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// CSV export with a `time_s,value` header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time_s,value")?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(w, "{},{}", i as f64 / self.sample_rate_hz, s)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }
}

/// Lower/upper cutoff pair identifying one transmitter's spectral slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Passband {
    pub lb_hz: f64,
    pub ub_hz: f64,
}

impl Passband {
    pub fn new(lb_hz: f64, ub_hz: f64) -> Result<Self> {
        if !(lb_hz.is_finite() && ub_hz.is_finite()) || lb_hz <= 0.0 || lb_hz >= ub_hz {
            return Err(Error::InvalidBand(format!("<{lb_hz}, {ub_hz}>")));
        }
        Ok(Self { lb_hz, ub_hz })
    }

    pub fn centered(center_hz: f64, width_hz: f64) -> Result<Self> {
        Self::new(center_hz - width_hz / 2.0, center_hz + width_hz / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.ub_hz - self.lb_hz
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lb_hz + self.ub_hz)
    }

    pub fn contains(&self, f_hz: f64) -> bool {
        f_hz >= self.lb_hz && f_hz <= self.ub_hz
    }

    /// Checks `0 < lb < ub < fs/2`.
    pub fn check_nyquist(&self, sample_rate_hz: f64) -> Result<()> {
        if self.lb_hz <= 0.0 || self.lb_hz >= self.ub_hz || self.ub_hz >= sample_rate_hz / 2.0 {
            return Err(Error::InvalidBand(format!(
                "<{}, {}> not inside (0, {})",
                self.lb_hz,
                self.ub_hz,
                sample_rate_hz / 2.0
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Passband {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "<{:.2} Hz, {:.2} Hz>", self.lb_hz, self.ub_hz)
    }
}

/// One-sided power spectral density on an increasing frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs_hz: Vec<f64>,
    pub psd: Vec<f64>,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        if self.freqs_hz.len() < 2 {
            0.0
        } else {
            self.freqs_hz[1] - self.freqs_hz[0]
        }
    }

    /// Index of the bin closest to `f_hz`.
    pub fn bin_of(&self, f_hz: f64) -> usize {
        let df = self.bin_width();
        if df <= 0.0 {
            return 0;
        }
        (((f_hz - self.freqs_hz[0]) / df).round().max(0.0) as usize).min(self.psd.len() - 1)
    }

    /// `(frequency, density)` of the largest bin.
    pub fn peak(&self) -> (f64, f64) {
        self.peak_in(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn peak_in(&self, lo_hz: f64, hi_hz: f64) -> (f64, f64) {
        self.freqs_hz
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo_hz && **f <= hi_hz)
            .fold(
                (f64::NAN, f64::NEG_INFINITY),
                |best, (f, p)| {
                    if *p > best.1 {
                        (*f, *p)
                    } else {
                        best
                    }
                },
            )
    }

    /// Integrated power over `[lo_hz, hi_hz]`.
    pub fn power_in(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let df = self.bin_width();
        self.freqs_hz
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo_hz && **f <= hi_hz)
            .map(|(_, p)| p * df)
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.bin_width()
    }

    /// Median density over `[lo_hz, hi_hz]`, a robust noise-floor estimate.
    pub fn median_in(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let mut v: Vec<f64> = self
            .freqs_hz
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo_hz && **f <= hi_hz)
            .map(|(_, p)| *p)
            .collect();
        crate::signal::median(&mut v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_traces() {
        assert!(SignalTrace::new(vec![], 1.0, Unit::Volts).is_err());
        assert!(SignalTrace::new(vec![1.0], 0.0, Unit::Volts).is_err());
        assert!(SignalTrace::new(vec![f64::NAN], 1.0, Unit::Volts).is_err());
        assert!(SignalTrace::new(vec![1.0, f64::INFINITY], 1.0, Unit::Volts).is_err());
    }

    #[test]
    fn binary_format_header_layout() {
        let t = SignalTrace::new(vec![1.5, -2.0], 500e3, Unit::Amps).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 16);
        assert_eq!(&buf[..8], b"NODETRC1");
        assert_eq!(f64::from_le_bytes(buf[8..16].try_into().unwrap()), 500e3);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 1.5);
        assert_eq!(SignalTrace::read_from(&buf[..]).unwrap(), t);
    }

    #[test]
    fn binary_format_rejects_garbage() {
        assert!(SignalTrace::read_from(&b"NODETRC2xxxxxxxxxxxxxxxx"[..]).is_err());
        assert!(SignalTrace::read_from(&b"NODETRC1"[..]).is_err());
        let mut buf = Vec::new();
        SignalTrace::new(vec![1.0], 1.0, Unit::Volts)
            .unwrap()
            .write_to(&mut buf)
            .unwrap();
        buf.push(0);
        assert!(SignalTrace::read_from(&buf[..]).is_err());
    }

    #[test]
    fn csv_export() {
        let t = SignalTrace::new(vec![1.0, 2.0], 2.0, Unit::Volts).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time_s,value\n0,1\n0.5,2\n");
    }

    #[test]
    fn passband_validation() {
        assert!(Passband::new(10.0, 10.0).is_err());
        assert!(Passband::new(20.0, 10.0).is_err());
        assert!(Passband::new(0.0, 10.0).is_err());
        let b = Passband::new(67_280.0, 67_340.0).unwrap();
        assert!(b.check_nyquist(500e3).is_ok());
        assert!(b.check_nyquist(100e3).is_err());
        assert!(b.contains(67_300.0));
        assert_eq!(b.width(), 60.0);
    }
}
