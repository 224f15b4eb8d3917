//! FFT-domain filters: linear-phase windowed-sinc band-pass, first-order RC
//! high-pass, and arbitrary zero-phase gain shaping.

use std::f64::consts::PI;

use realfft::num_complex::Complex64;

use super::fft::{fast_len, irfft, rfft, symmetric_kernel_response};
use super::trace::{Passband, SignalTrace};
use crate::error::{Error, Result};

/// Transition width of the band-pass design, in Hz.
pub const DEFAULT_TRANSITION_HZ: f64 = 30.0;

/// Transition-width constant of the Blackman-windowed sinc (about 74 dB stopband).
const BLACKMAN_TRANSITION_FACTOR: f64 = 5.5;

/// Number of taps (always odd) for a Blackman windowed sinc of the given
/// transition width.
pub fn band_pass_len(sample_rate_hz: f64, transition_hz: f64) -> usize {
    let n = (BLACKMAN_TRANSITION_FACTOR * sample_rate_hz / transition_hz).ceil() as usize;
    n | 1
}

pub fn blackman(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = 2.0 * PI * i as f64 / m;
            0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Low-pass prototype of one-sided bandwidth `half_width_hz`: taps of
/// `w[n]·(2B/fs)·sinc(2B n/fs)`, unity gain at DC.
pub fn low_pass_taps(half_width_hz: f64, sample_rate_hz: f64, n_taps: usize) -> Vec<f64> {
    let w = blackman(n_taps);
    let half = (n_taps / 2) as f64;
    let fc = half_width_hz / sample_rate_hz;
    w.iter()
        .enumerate()
        .map(|(i, wi)| wi * 2.0 * fc * sinc(2.0 * fc * (i as f64 - half)))
        .collect()
}

/// Band-pass taps for `band`, built as a low-pass prototype of half the
/// bandwidth shifted up to the band centre.
pub fn band_pass_taps(band: &Passband, sample_rate_hz: f64, n_taps: usize) -> Vec<f64> {
    let proto = low_pass_taps(band.width() / 2.0, sample_rate_hz, n_taps);
    let half = (n_taps / 2) as f64;
    let wc = 2.0 * PI * band.center() / sample_rate_hz;
    proto
        .iter()
        .enumerate()
        .map(|(i, p)| 2.0 * p * (wc * (i as f64 - half)).cos())
        .collect()
}

/// Forward transform of a zero-padded trace, reusable across several
/// FFT-domain filters of the same signal.
#[derive(Debug, Clone)]
pub struct TraceSpectrum {
    pub(crate) bins: Vec<Complex64>,
    pub(crate) n_fft: usize,
    pub(crate) len: usize,
    pub(crate) sample_rate_hz: f64,
}

impl TraceSpectrum {
    /// Transforms `samples` with at least `pad` zeros of guard after them.
    pub fn new(samples: &[f64], sample_rate_hz: f64, pad: usize) -> Self {
        let n_fft = fast_len(samples.len() + pad);
        Self {
            bins: rfft(samples, n_fft),
            n_fft,
            len: samples.len(),
            sample_rate_hz,
        }
    }

    /// Guard large enough for a band-pass of the given transition width.
    pub fn for_band_pass(trace: &SignalTrace, transition_hz: f64) -> Self {
        let taps = band_pass_len(trace.sample_rate_hz(), transition_hz);
        Self::new(trace.samples(), trace.sample_rate_hz(), taps / 2 + 1)
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate_hz / self.n_fft as f64
    }

    /// Zero-phase band-pass of the stored signal (linear convolution, centred kernel).
    pub fn band_pass(&self, band: &Passband, transition_hz: f64) -> Vec<f64> {
        let n_taps = band_pass_len(self.sample_rate_hz, transition_hz);
        assert!(
            self.n_fft >= self.len + n_taps / 2,
            "spectrum padded too little for this filter"
        );
        let taps = band_pass_taps(band, self.sample_rate_hz, n_taps);
        let h = symmetric_kernel_response(&taps, self.n_fft);
        let bins = self.bins.iter().zip(&h).map(|(x, g)| x * g).collect();
        let mut y = irfft(bins, self.n_fft);
        y.truncate(self.len);
        y
    }

    /// Applies a frequency response given as a function of frequency in Hz.
    pub fn apply(&self, response: impl Fn(f64) -> Complex64) -> Vec<f64> {
        let df = self.bin_hz();
        let bins = self
            .bins
            .iter()
            .enumerate()
            .map(|(k, x)| x * response(k as f64 * df))
            .collect();
        let mut y = irfft(bins, self.n_fft);
        y.truncate(self.len);
        y
    }
}

/// Zero-phase windowed-sinc band-pass; output has the input's length and rate.
pub fn band_pass(trace: &SignalTrace, band: &Passband) -> Result<SignalTrace> {
    band_pass_with(trace, band, DEFAULT_TRANSITION_HZ)
}

pub fn band_pass_with(trace: &SignalTrace, band: &Passband, transition_hz: f64) -> Result<SignalTrace> {
    band.check_nyquist(trace.sample_rate_hz())?;
    if !(transition_hz > 0.0) {
        return Err(Error::InvalidBand(format!("transition width {transition_hz}")));
    }
    let spec = TraceSpectrum::for_band_pass(trace, transition_hz);
    trace.with_samples(spec.band_pass(band, transition_hz))
}

/// Analog first-order RC high-pass response `jf/fc / (1 + jf/fc)`.
pub fn rc_high_pass_response(f_hz: f64, cutoff_hz: f64) -> Complex64 {
    let x = Complex64::new(0.0, f_hz / cutoff_hz);
    x / (1.0 + x)
}

/// First-order RC high-pass applied in the frequency domain.
pub fn high_pass(trace: &SignalTrace, cutoff_hz: f64) -> Result<SignalTrace> {
    if !(cutoff_hz > 0.0 && cutoff_hz < trace.nyquist_hz()) {
        return Err(Error::InvalidBand(format!(
            "high-pass cutoff {cutoff_hz} Hz outside (0, {})",
            trace.nyquist_hz()
        )));
    }
    // Tail of the causal impulse response decays as exp(-t·2π·fc); 40 time
    // constants of guard keep the circular wrap below 1e-17.
    let tau_samples = trace.sample_rate_hz() / (2.0 * PI * cutoff_hz);
    let pad = ((40.0 * tau_samples).ceil() as usize).max(64);
    let spec = TraceSpectrum::new(trace.samples(), trace.sample_rate_hz(), pad);
    trace.with_samples(spec.apply(|f| rc_high_pass_response(f, cutoff_hz)))
}

/// Real, zero-phase gain shaping. `pad_s` seconds of zero guard limit
/// circular wrap of the (short) impulse response.
pub fn zero_phase_gain(trace: &SignalTrace, pad_s: f64, gain: impl Fn(f64) -> f64) -> Result<SignalTrace> {
    let pad = (pad_s * trace.sample_rate_hz()).ceil() as usize;
    let spec = TraceSpectrum::new(trace.samples(), trace.sample_rate_hz(), pad);
    trace.with_samples(spec.apply(|f| Complex64::new(gain(f), 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::trace::Unit;

    const FS: f64 = 500e3;

    /// Single-bin DFT amplitude of `x` at `f` (oracle, independent of the FFT path).
    fn dft_amplitude(x: &[f64], fs: f64, f: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * f * i as f64 / fs;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        2.0 * (re * re + im * im).sqrt() / x.len() as f64
    }

    fn tone(f: f64, amp: f64, n: usize) -> SignalTrace {
        SignalTrace::from_fn(n, FS, Unit::Volts, |t| amp * (2.0 * PI * f * t).sin()).unwrap()
    }

    /// Interior of a filtered trace, dropping one group delay at each end.
    fn interior(y: &[f64]) -> &[f64] {
        let gd = band_pass_len(FS, DEFAULT_TRANSITION_HZ) / 2;
        &y[gd..y.len() - gd]
    }

    #[test]
    fn tap_count_meets_transition_budget() {
        let n = band_pass_len(FS, 30.0);
        assert_eq!(n % 2, 1);
        assert!(n >= 91_667);
    }

    #[test]
    fn in_band_tone_preserved() {
        // 0.5 s of an integer number of periods so the DFT oracle is exact.
        let n = 250_000;
        let x = tone(67_300.0, 1.0, n);
        let band = Passband::new(67_280.0, 67_340.0).unwrap();
        let y = band_pass(&x, &band).unwrap();
        assert_eq!(y.len(), n);
        let inner = interior(y.samples());
        let a_in = dft_amplitude(interior(x.samples()), FS, 67_300.0);
        let a_out = dft_amplitude(inner, FS, 67_300.0);
        let db = 20.0 * (a_out / a_in).log10();
        assert!(db.abs() < 1.0, "gain {db} dB");
    }

    #[test]
    fn mains_tone_rejected() {
        let n = 250_000;
        let x = tone(60.0, 1.0, n);
        let band = Passband::new(67_280.0, 67_340.0).unwrap();
        let y = band_pass(&x, &band).unwrap();
        let residual = interior(y.samples()).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(20.0 * residual.log10() <= -60.0, "residual {residual}");
    }

    #[test]
    fn stopband_60db_just_outside_guard() {
        // Tones 45 Hz outside either edge (three 15 Hz PSD bins).
        let n = 250_000;
        let band = Passband::new(67_280.0, 67_340.0).unwrap();
        for f in [67_280.0 - 45.0, 67_340.0 + 45.0] {
            let y = band_pass(&tone(f, 1.0, n), &band).unwrap();
            let a = dft_amplitude(interior(y.samples()), FS, f);
            assert!(20.0 * a.log10() < -60.0, "{f} Hz leaks {a}");
        }
    }

    #[test]
    fn degenerate_and_out_of_range_bands() {
        let x = tone(1000.0, 1.0, 1000);
        assert!(Passband::new(67_300.0, 67_300.0).is_err());
        let band = Passband {
            lb_hz: 67_300.0,
            ub_hz: 67_300.0,
        };
        assert!(matches!(band_pass(&x, &band), Err(Error::InvalidBand(_))));
        let band = Passband {
            lb_hz: 240e3,
            ub_hz: 260e3,
        };
        assert!(matches!(band_pass(&x, &band), Err(Error::InvalidBand(_))));
    }

    #[test]
    fn high_pass_rejects_dc() {
        let x = SignalTrace::new(vec![120.0; 100_000], FS, Unit::Volts).unwrap();
        let y = high_pass(&x, 10e3).unwrap();
        assert!(y.mean().abs() < 0.01 * 120.0);
    }

    #[test]
    fn high_pass_matches_rc_magnitude() {
        let n = 100_000;
        for (f, expected) in [(10e3, 1.0 / 2f64.sqrt()), (100e3, 10.0 / (1.0f64 + 100.0).sqrt())] {
            let x = tone(f, 1.0, n);
            let y = high_pass(&x, 10e3).unwrap();
            let a =
                dft_amplitude(&y.samples()[1000..n - 1000], FS, f) / dft_amplitude(&x.samples()[1000..n - 1000], FS, f);
            let err_db = 20.0 * (a / expected).log10();
            assert!(err_db.abs() < 0.5, "{f} Hz: {a} vs {expected}");
        }
    }

    #[test]
    fn high_pass_cutoff_validation() {
        let x = tone(1000.0, 1.0, 100);
        assert!(high_pass(&x, 0.0).is_err());
        assert!(high_pass(&x, 250e3).is_err());
    }

    #[test]
    fn band_pass_is_linear() {
        let n = 120_000;
        let a = tone(67_300.0, 0.7, n);
        let b = SignalTrace::from_fn(n, FS, Unit::Volts, |t| {
            (2.0 * PI * 67_310.0 * t).cos() + (t * 9e3).sin()
        })
        .unwrap();
        let band = Passband::new(67_280.0, 67_340.0).unwrap();
        let mix: Vec<f64> = a
            .samples()
            .iter()
            .zip(b.samples())
            .map(|(x, y)| 2.0 * x - 3.0 * y)
            .collect();
        let ya = band_pass(&a, &band).unwrap();
        let yb = band_pass(&b, &band).unwrap();
        let ym = band_pass(&a.with_samples(mix).unwrap(), &band).unwrap();
        let scale = ym.max_abs();
        for i in 0..n {
            let lin = 2.0 * ya.samples()[i] - 3.0 * yb.samples()[i];
            assert!((ym.samples()[i] - lin).abs() <= 1e-9 * scale);
        }
    }
}
