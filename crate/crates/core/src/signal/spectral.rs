//! Welch power spectral density and short-time spectra.

use std::f64::consts::PI;

use super::fft::rfft;
use super::trace::{SignalTrace, Spectrum};
use crate::error::{Error, Result};

/// Default Welch segment at 500 kSa/s (about 15 Hz bins).
pub const DEFAULT_SEGMENT_LEN: usize = 1 << 15;

fn hann(n: usize) -> Vec<f64> {
    // Periodic form; exact overlap-add at 50% hop.
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

struct Periodogram {
    window: Vec<f64>,
    scale: f64,
    seg: usize,
}

impl Periodogram {
    fn new(seg: usize, sample_rate_hz: f64) -> Self {
        let window = hann(seg);
        let s2: f64 = window.iter().map(|w| w * w).sum();
        Self {
            window,
            scale: 1.0 / (sample_rate_hz * s2),
            seg,
        }
    }

    /// One-sided density of one segment, accumulated into `acc`.
    fn accumulate(&self, x: &[f64], acc: &mut [f64]) {
        let windowed: Vec<f64> = x.iter().zip(&self.window).map(|(v, w)| v * w).collect();
        let bins = rfft(&windowed, self.seg);
        let last = bins.len() - 1;
        for (k, b) in bins.iter().enumerate() {
            let onesided = if k == 0 || (k == last && self.seg.is_multiple_of(2)) {
                1.0
            } else {
                2.0
            };
            acc[k] += onesided * self.scale * b.norm_sqr();
        }
    }

    fn freqs(&self, sample_rate_hz: f64) -> Vec<f64> {
        (0..=self.seg / 2)
            .map(|k| k as f64 * sample_rate_hz / self.seg as f64)
            .collect()
    }
}

fn check_segment(trace: &SignalTrace, segment_len: usize) -> Result<()> {
    if trace.is_empty() || segment_len == 0 {
        return Err(Error::EmptyTrace);
    }
    if segment_len > trace.len() {
        return Err(Error::SegmentTooLong {
            segment: segment_len,
            len: trace.len(),
        });
    }
    Ok(())
}

/// Welch PSD: Hann window, 50% overlap, density scaling (units²/Hz).
pub fn psd(trace: &SignalTrace, segment_len: usize) -> Result<Spectrum> {
    check_segment(trace, segment_len)?;
    let fs = trace.sample_rate_hz();
    let pg = Periodogram::new(segment_len, fs);
    let hop = (segment_len / 2).max(1);
    let x = trace.samples();
    let mut acc = vec![0.0; segment_len / 2 + 1];
    let mut count = 0usize;
    let mut start = 0;
    while start + segment_len <= x.len() {
        pg.accumulate(&x[start..start + segment_len], &mut acc);
        count += 1;
        start += hop;
    }
    acc.iter_mut().for_each(|v| *v /= count as f64);
    Ok(Spectrum {
        freqs_hz: pg.freqs(fs),
        psd: acc,
    })
}

/// Sequence of single-segment periodograms, one per hop.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// Start time of each segment, in seconds.
    pub times_s: Vec<f64>,
    pub frames: Vec<Spectrum>,
}

impl Spectrogram {
    /// Power over time within `[lo_hz, hi_hz]`.
    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> Vec<f64> {
        self.frames.iter().map(|s| s.power_in(lo_hz, hi_hz)).collect()
    }
}

pub fn spectrogram(trace: &SignalTrace, segment_len: usize, hop: usize) -> Result<Spectrogram> {
    check_segment(trace, segment_len)?;
    if hop == 0 || hop > segment_len {
        return Err(Error::InvalidHop {
            hop,
            segment: segment_len,
        });
    }
    let fs = trace.sample_rate_hz();
    let pg = Periodogram::new(segment_len, fs);
    let freqs = pg.freqs(fs);
    let x = trace.samples();
    let mut times_s = Vec::new();
    let mut frames = Vec::new();
    let mut start = 0;
    while start + segment_len <= x.len() {
        let mut acc = vec![0.0; segment_len / 2 + 1];
        pg.accumulate(&x[start..start + segment_len], &mut acc);
        times_s.push(start as f64 / fs);
        frames.push(Spectrum {
            freqs_hz: freqs.clone(),
            psd: acc,
        });
        start += hop;
    }
    Ok(Spectrogram { times_s, frames })
}
