use super::trace::SignalTrace;
use crate::error::{Error, Result};

/// Rectify-and-smooth envelope: `|x|` through a centred moving average of
/// `window_s` seconds. Near the edges the average runs over the samples that
/// exist.
pub fn envelope(trace: &SignalTrace, window_s: f64) -> Result<SignalTrace> {
    let width = window_samples(window_s, trace.sample_rate_hz())?;
    let rectified: Vec<f64> = trace.samples().iter().map(|v| v.abs()).collect();
    trace.with_samples(moving_average(&rectified, width))
}

pub(crate) fn window_samples(window_s: f64, sample_rate_hz: f64) -> Result<usize> {
    let n = window_s * sample_rate_hz;
    if !(window_s > 0.0) || n < 1.0 {
        return Err(Error::InvalidWindow(format!(
            "{window_s} s is shorter than one sample at {sample_rate_hz} Hz"
        )));
    }
    Ok(n.round() as usize)
}

/// Centred moving average with shrinking windows at the ends.
pub fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v;
        prefix.push(acc);
    }
    let before = width / 2;
    let after = width - before;
    (0..n)
        .map(|i| {
            let a = i.saturating_sub(before);
            let b = (i + after).min(n);
            // Clamp tiny negative round-off from the prefix difference.
            ((prefix[b] - prefix[a]) / (b - a) as f64).max(0.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::trace::Unit;
    use std::f64::consts::PI;

    const FS: f64 = 500e3;

    #[test]
    fn sine_envelope_is_two_over_pi() {
        let a = 3.0;
        let x = SignalTrace::from_fn(200_000, FS, Unit::Volts, |t| a * (2.0 * PI * 67_300.0 * t).sin()).unwrap();
        let e = envelope(&x, 0.01).unwrap();
        let expected = 2.0 * a / PI;
        for v in &e.samples()[5_000..195_000] {
            assert!((v - expected).abs() < 1e-3 * expected, "{v}");
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let x = SignalTrace::zeros(1000, FS, Unit::Volts).unwrap();
        assert!(envelope(&x, 1e-3).unwrap().samples().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ook_contrast() {
        let tb = 0.033;
        let bits = [1, 0, 1, 1, 0, 0, 1, 0];
        let n = (bits.len() as f64 * tb * FS) as usize;
        let x = SignalTrace::from_fn(n, FS, Unit::Volts, |t| {
            let b = bits[((t / tb) as usize).min(bits.len() - 1)];
            b as f64 * (2.0 * PI * 67_300.0 * t).sin()
        })
        .unwrap();
        let e = envelope(&x, tb / 4.0).unwrap();
        let center = |k: usize| e.samples()[((k as f64 + 0.5) * tb * FS) as usize];
        let hi = (0..bits.len())
            .filter(|k| bits[*k] == 1)
            .map(center)
            .fold(f64::INFINITY, f64::min);
        let lo = (0..bits.len())
            .filter(|k| bits[*k] == 0)
            .map(center)
            .fold(0.0, f64::max);
        assert!(hi >= 10.0 * lo.max(1e-12), "hi {hi} lo {lo}");
    }

    #[test]
    fn window_shorter_than_sample() {
        let x = SignalTrace::zeros(10, FS, Unit::Volts).unwrap();
        assert!(matches!(envelope(&x, 1e-7), Err(Error::InvalidWindow(_))));
        assert!(matches!(envelope(&x, 0.0), Err(Error::InvalidWindow(_))));
    }

    #[test]
    fn non_negative_and_same_shape() {
        let x = SignalTrace::from_fn(5000, FS, Unit::Volts, |t| (t * 1e5).sin() - 0.3).unwrap();
        let e = envelope(&x, 1e-4).unwrap();
        assert_eq!(e.len(), x.len());
        assert!(e.samples().iter().all(|v| *v >= 0.0));
    }
}
