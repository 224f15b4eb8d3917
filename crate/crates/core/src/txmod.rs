//! Transmitter side: frame layout and the CPU-load modulator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{SignalTrace, Unit};

/// A bit is stored as `0` or `1`.
pub type Bits = Vec<u8>;

/// Parses a string of `0`/`1` characters; whitespace and `_` are ignored.
pub fn parse_bits(s: &str) -> Result<Bits> {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::Config(format!("invalid bit character {other:?} in {s:?}"))),
        })
        .collect()
}

pub fn format_bits(bits: &[u8]) -> String {
    bits.iter().map(|b| if *b == 0 { '0' } else { '1' }).collect()
}

/// MSB-first expansion of bytes into bits.
pub fn bytes_to_bits(bytes: &[u8]) -> Bits {
    bytes
        .iter()
        .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

pub fn random_bits(n: usize, seed: u64) -> Bits {
    let mut r = rng::stream(seed, "payload", &[]);
    (0..n).map(|_| r.random_range(0..=1u8)).collect()
}

/// The ASCII bytes of `text`, followed by random bits up to `len`.
pub fn text_payload(text: &str, len: usize, seed: u64) -> Bits {
    let mut bits = bytes_to_bits(text.as_bytes());
    bits.truncate(len);
    let fill = random_bits(len - bits.len(), seed);
    bits.extend(fill);
    bits
}

mod bit_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_bits(bits))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_bits(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSpec {
    #[serde(with = "bit_string")]
    pub pilot_bits: Bits,
    pub payload_len_bits: usize,
    pub symbol_duration_s: f64,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            pilot_bits: vec![1, 1, 0, 0, 1, 0],
            payload_len_bits: 94,
            symbol_duration_s: 0.033,
        }
    }
}

impl FrameSpec {
    pub fn new(pilot_bits: Bits, payload_len_bits: usize, symbol_duration_s: f64) -> Result<Self> {
        let spec = Self {
            pilot_bits,
            payload_len_bits,
            symbol_duration_s,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pilot_bits.is_empty() {
            return Err(Error::Config("pilot sequence is empty".into()));
        }
        if self.pilot_bits.iter().any(|b| *b > 1) {
            return Err(Error::Config("pilot bits must be 0 or 1".into()));
        }
        if !self.pilot_bits.contains(&1) || !self.pilot_bits.contains(&0) {
            return Err(Error::Config("pilot needs both 0 and 1 symbols".into()));
        }
        if self.payload_len_bits == 0 {
            return Err(Error::Config("payload length must be positive".into()));
        }
        if !(self.symbol_duration_s > 0.0) {
            return Err(Error::Config("symbol duration must be positive".into()));
        }
        Ok(())
    }

    pub fn frame_bits(&self) -> usize {
        self.pilot_bits.len() + self.payload_len_bits
    }

    pub fn pilot_duration_s(&self) -> f64 {
        self.pilot_bits.len() as f64 * self.symbol_duration_s
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.frame_bits() as f64 * self.symbol_duration_s
    }
}

/// Fractional CPU load in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadWaveform {
    trace: SignalTrace,
    cores_scale: f64,
}

impl LoadWaveform {
    pub fn new(trace: SignalTrace, cores_scale: f64) -> Result<Self> {
        check_scale(cores_scale)?;
        if let Some(v) = trace.samples().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidModel(format!("load {v} outside [0, 1]")));
        }
        Ok(Self {
            trace: trace.with_unit(Unit::Dimensionless),
            cores_scale,
        })
    }

    pub fn trace(&self) -> &SignalTrace {
        &self.trace
    }

    pub fn into_trace(self) -> SignalTrace {
        self.trace
    }

    pub fn cores_scale(&self) -> f64 {
        self.cores_scale
    }

    pub fn samples(&self) -> &[f64] {
        self.trace.samples()
    }
}

fn check_scale(cores_scale: f64) -> Result<()> {
    if !(cores_scale > 0.0 && cores_scale <= 1.0) {
        return Err(Error::InvalidModel(format!("cores_scale {cores_scale} outside (0, 1]")));
    }
    Ok(())
}

/// Sample index at which symbol `k` starts.
fn boundary(k: usize, symbol_s: f64, fs: f64) -> usize {
    (k as f64 * symbol_s * fs).round() as usize
}

fn staircase(levels: impl ExactSizeIterator<Item = f64>, symbol_s: f64, fs: f64) -> Vec<f64> {
    let n = levels.len();
    let mut out = Vec::with_capacity(boundary(n, symbol_s, fs));
    for (k, level) in levels.enumerate() {
        let end = boundary(k + 1, symbol_s, fs);
        out.resize(end, level);
    }
    out
}

/// Prepends the pilot.
pub fn build_frame(payload: &[u8], spec: &FrameSpec) -> Result<Bits> {
    spec.validate()?;
    if payload.len() != spec.payload_len_bits {
        return Err(Error::LengthMismatch {
            expected: spec.payload_len_bits,
            actual: payload.len(),
        });
    }
    Ok(spec.pilot_bits.iter().chain(payload).copied().collect())
}

/// On-off keyed load: `cores_scale` during each `1`, idle during each `0`.
pub fn modulate(bits: &[u8], spec: &FrameSpec, sample_rate_hz: f64, cores_scale: f64) -> Result<LoadWaveform> {
    check_scale(cores_scale)?;
    let levels = bits.iter().map(|b| if *b != 0 { cores_scale } else { 0.0 });
    let v = staircase(levels, spec.symbol_duration_s, sample_rate_hz);
    LoadWaveform::new(SignalTrace::new(v, sample_rate_hz, Unit::Dimensionless)?, cores_scale)
}

/// Load level for each symbol value. Two bits per symbol uses the uneven
/// 0 / 25 / 75 / 100 % ladder; other widths are equally spaced.
pub fn multilevel_levels(bits_per_symbol: u32) -> Result<Vec<f64>> {
    if !(1..=16).contains(&bits_per_symbol) {
        return Err(Error::InvalidModel(format!("{bits_per_symbol} bits per symbol")));
    }
    if bits_per_symbol == 2 {
        return Ok(vec![0.0, 0.25, 0.75, 1.0]);
    }
    let m = 1usize << bits_per_symbol;
    Ok((0..m).map(|i| i as f64 / (m - 1) as f64).collect())
}

pub fn modulate_multilevel(
    symbols: &[u32],
    bits_per_symbol: u32,
    symbol_duration_s: f64,
    sample_rate_hz: f64,
) -> Result<LoadWaveform> {
    let levels = multilevel_levels(bits_per_symbol)?;
    if let Some(s) = symbols.iter().find(|s| **s as usize >= levels.len()) {
        return Err(Error::SymbolOutOfRange {
            symbol: *s,
            bits_per_symbol,
        });
    }
    if !(symbol_duration_s > 0.0) {
        return Err(Error::InvalidModel("symbol duration must be positive".into()));
    }
    let v = staircase(
        symbols.iter().map(|s| levels[*s as usize]),
        symbol_duration_s,
        sample_rate_hz,
    );
    LoadWaveform::new(SignalTrace::new(v, sample_rate_hz, Unit::Dimensionless)?, 1.0)
}

/// Pads a load waveform to `total` samples, placing it at `offset` with
/// idle load elsewhere.
pub fn place(load: &[f64], offset: usize, total: usize) -> Vec<f64> {
    let mut out = vec![0.0; total];
    if offset < total {
        let n = load.len().min(total - offset);
        out[offset..offset + n].copy_from_slice(&load[..n]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 500e3;

    #[test]
    fn password_frame() {
        let spec = FrameSpec::default();
        let payload = text_payload("password123", 94, 1);
        assert_eq!(payload.len(), 94);
        assert_eq!(&payload[..8], &[0, 1, 1, 1, 0, 0, 0, 0]);
        let frame = build_frame(&payload, &spec).unwrap();
        assert_eq!(frame.len(), 100);
        assert_eq!(&frame[..6], &[1, 1, 0, 0, 1, 0]);
        assert_eq!(&frame[6..94], &bytes_to_bits(b"password123")[..]);
    }

    #[test]
    fn frame_errors() {
        assert!(FrameSpec::new(vec![], 94, 0.033).is_err());
        let spec = FrameSpec::default();
        assert!(matches!(
            build_frame(&[0; 93], &spec),
            Err(Error::LengthMismatch {
                expected: 94,
                actual: 93
            })
        ));
    }

    #[test]
    fn defaults() {
        let s = FrameSpec::default();
        assert_eq!(s.frame_bits(), 100);
        assert!((s.frame_duration_s() - 3.3).abs() < 1e-12);
        assert!((s.pilot_duration_s() - 0.198).abs() < 1e-12);
    }

    #[test]
    fn modulate_levels_and_boundaries() {
        let spec = FrameSpec::default();
        let w = modulate(&[1, 0], &spec, FS, 1.0).unwrap();
        let v = w.samples();
        assert_eq!(v.len(), 33_000);
        assert!(v[..16_500].iter().all(|x| *x == 1.0));
        assert!(v[16_500..].iter().all(|x| *x == 0.0));
        let w = modulate(&[1; 10], &spec, FS, 0.25).unwrap();
        assert!(w.samples().iter().all(|x| *x == 0.25));
        assert!(modulate(&[1], &spec, FS, 0.0).is_err());
    }

    #[test]
    fn default_frame_duration() {
        let spec = FrameSpec::default();
        let bits = build_frame(&random_bits(94, 3), &spec).unwrap();
        let w = modulate(&bits, &spec, FS, 1.0).unwrap();
        assert!((w.trace().duration_s() - 3.3).abs() <= 1.0 / FS);
    }

    #[test]
    fn slicing_recovers_bits() {
        let spec = FrameSpec::default();
        for seed in 0..20 {
            let bits = random_bits(100, seed);
            let scale = 0.1 + 0.045 * seed as f64;
            let w = modulate(&bits, &spec, FS, scale).unwrap();
            let got: Vec<u8> = (0..bits.len())
                .map(|k| {
                    let i = ((k as f64 + 0.5) * spec.symbol_duration_s * FS) as usize;
                    (w.samples()[i] > scale / 2.0) as u8
                })
                .collect();
            assert_eq!(got, bits);
        }
    }

    #[test]
    fn scale_only_touches_ones() {
        let spec = FrameSpec::default();
        let bits = random_bits(30, 8);
        let a = modulate(&bits, &spec, FS, 0.4).unwrap();
        let b = modulate(&bits, &spec, FS, 0.8).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            if *x == 0.0 {
                assert_eq!(*y, 0.0);
            } else {
                assert!((y / x - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multilevel_staircase() {
        let w = modulate_multilevel(&[0, 1, 2, 3], 2, 0.1, FS).unwrap();
        let v = w.samples();
        for (k, level) in [0.0, 0.25, 0.75, 1.0].iter().enumerate() {
            assert_eq!(v[k * 50_000 + 25_000], *level);
        }
        assert!(matches!(
            modulate_multilevel(&[4], 2, 0.1, FS),
            Err(Error::SymbolOutOfRange {
                symbol: 4,
                bits_per_symbol: 2
            })
        ));
        assert_eq!(multilevel_levels(3).unwrap().len(), 8);
    }

    #[test]
    fn one_bit_multilevel_matches_binary() {
        let spec = FrameSpec::default();
        let bits = random_bits(40, 5);
        let syms: Vec<u32> = bits.iter().map(|b| *b as u32).collect();
        let a = modulate(&bits, &spec, FS, 1.0).unwrap();
        let b = modulate_multilevel(&syms, 1, spec.symbol_duration_s, FS).unwrap();
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn bit_strings() {
        assert_eq!(parse_bits("1100_10").unwrap(), vec![1, 1, 0, 0, 1, 0]);
        assert!(parse_bits("12").is_err());
        assert_eq!(format_bits(&[1, 0, 1]), "101");
        let s: FrameSpec = toml::from_str("pilot_bits = \"11001010\"\npayload_len_bits = 92").unwrap();
        assert_eq!(s.frame_bits(), 100);
    }
}
