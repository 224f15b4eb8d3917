//! Sampled-signal primitives: traces, FFT-domain filters, envelopes and
//! spectral estimates. Every function here is pure and deterministic.

mod envelope;
pub mod fft;
mod filter;
mod spectral;
mod trace;

pub(crate) use envelope::window_samples;
pub use envelope::{envelope, moving_average};
pub use filter::{
    band_pass, band_pass_len, band_pass_taps, band_pass_with, blackman, high_pass, low_pass_taps,
    rc_high_pass_response, zero_phase_gain, TraceSpectrum, DEFAULT_TRANSITION_HZ,
};
pub use spectral::{psd, spectrogram, Spectrogram, DEFAULT_SEGMENT_LEN};
pub use trace::{Passband, SignalTrace, Spectrum, Unit, TRACE_MAGIC};

/// Median of a slice (reorders it). Returns 0 for an empty slice.
pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
