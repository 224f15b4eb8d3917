use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Result;
use crate::rxdsp::DecodeResult;
use crate::signal::Passband;
use crate::txmod::format_bits;

pub const RUN_CSV_HEADER: &str = "tx_id,ber,effective_bps,lb_hz,ub_hz,frame_start_s,missed";

/// Fixed-point rendering with ten significant digits; stable across runs
/// and platforms for identical inputs.
pub fn format_number(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v == 0.0 {
            "0".into()
        } else {
            format!("{v}")
        };
    }
    let decimals = (9 - v.abs().log10().floor() as i32).clamp(0, 30) as usize;
    format!("{v:.decimals$}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissReason {
    /// No pilot was found for the frame.
    PilotNotFound,
    /// A pilot was found near the frame but at the wrong time.
    MisSync,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub index: usize,
    pub true_start_s: f64,
    pub decode: Option<DecodeResult>,
    pub miss: Option<MissReason>,
}

impl FrameReport {
    pub fn ber(&self) -> Option<f64> {
        self.decode.as_ref().and_then(|d| d.ber)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitterReport {
    pub tx_id: usize,
    pub carrier_hz: f64,
    pub frames: Vec<FrameReport>,
    pub missed: usize,
    /// Pilots attributed to this transmitter that matched none of its frames.
    pub false_frames: usize,
    /// Bit errors over all decoded payload bits; `None` when nothing decoded.
    pub ber: Option<f64>,
    /// Mean over all frames, a missed frame counting zero.
    pub effective_bps: f64,
    /// Band and start of the first decoded frame.
    pub passband: Option<Passband>,
    pub frame_start_s: Option<f64>,
}

impl TransmitterReport {
    pub fn from_frames(tx_id: usize, carrier_hz: f64, frames: Vec<FrameReport>, false_frames: usize) -> Self {
        let decoded: Vec<&DecodeResult> = frames.iter().filter_map(|f| f.decode.as_ref()).collect();
        let bits: usize = decoded.iter().map(|d| d.bits.len()).sum();
        let errors: f64 = decoded.iter().map(|d| d.ber.unwrap_or(0.0) * d.bits.len() as f64).sum();
        let ber = (bits > 0).then(|| errors.round() / bits as f64);
        let effective_bps = if frames.is_empty() {
            0.0
        } else {
            decoded.iter().map(|d| d.effective_bps).sum::<f64>() / frames.len() as f64
        };
        Self {
            tx_id,
            carrier_hz,
            missed: frames.len() - decoded.len(),
            false_frames,
            ber,
            effective_bps,
            passband: decoded.first().map(|d| d.passband),
            frame_start_s: decoded.first().map(|d| d.frame_start_s),
            frames,
        }
    }

    pub fn miss_rate(&self) -> f64 {
        if self.frames.is_empty() {
            0.0
        } else {
            self.missed as f64 / self.frames.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Hash of the normalized scenario, seed included.
    pub fingerprint: String,
    pub seed: u64,
    /// Wall-clock time of synthesis plus decoding. Not exported to CSV.
    pub runtime_s: f64,
    pub transmitters: Vec<TransmitterReport>,
}

impl RunReport {
    /// One row per transmitter under [`RUN_CSV_HEADER`]; unknown values are
    /// empty fields.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(RUN_CSV_HEADER);
        s.push('\n');
        for t in &self.transmitters {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                t.tx_id,
                opt(t.ber),
                format_number(t.effective_bps),
                opt(t.passband.map(|p| p.lb_hz)),
                opt(t.passband.map(|p| p.ub_hz)),
                opt(t.frame_start_s),
                t.missed
            );
        }
        s
    }

    /// One JSON object per frame of every transmitter.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for t in &self.transmitters {
            for f in &t.frames {
                let d = f.decode.as_ref();
                let rec = json!({
                    "fingerprint": self.fingerprint,
                    "tx_id": t.tx_id,
                    "frame": f.index,
                    "true_start_s": f.true_start_s,
                    "missed": f.miss,
                    "ber": d.and_then(|d| d.ber),
                    "effective_bps": d.map(|d| d.effective_bps),
                    "lb_hz": d.map(|d| d.passband.lb_hz),
                    "ub_hz": d.map(|d| d.passband.ub_hz),
                    "frame_start_s": d.map(|d| d.frame_start_s),
                    "threshold": d.map(|d| d.threshold),
                    "inverted": d.map(|d| d.inverted),
                    "bits": d.map(|d| format_bits(&d.bits)),
                });
                s.push_str(&rec.to_string());
                s.push('\n');
            }
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, &self.to_csv())
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, &self.to_jsonl())
    }
}

pub(crate) fn write_file(path: impl AsRef<Path>, content: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_ten_significant_digits() {
        assert_eq!(format_number(28.484848484848484), "28.48484848");
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.5e-5), "0.00001500000000");
        assert_eq!(format_number(67300.0), "67300.00000");
        assert_eq!(format_number(-0.25), "-0.2500000000");
    }

    #[test]
    fn csv_shape() {
        let r = RunReport {
            fingerprint: "x".into(),
            seed: 1,
            runtime_s: 3.0,
            transmitters: vec![TransmitterReport::from_frames(
                0,
                67_300.0,
                vec![FrameReport {
                    index: 0,
                    true_start_s: 0.4,
                    decode: None,
                    miss: Some(MissReason::PilotNotFound),
                }],
                0,
            )],
        };
        assert_eq!(r.to_csv(), format!("{RUN_CSV_HEADER}\n0,,0,,,,1\n"));
        assert_eq!(r.to_jsonl().lines().count(), 1);
        assert!(r.write_csv("/nonexistent-dir/x.csv").is_err());
    }
}
