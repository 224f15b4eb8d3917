use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

/// Fraction of positions where `got` differs from `reference`.
pub fn bit_error_rate(got: &[u8], reference: &[u8]) -> Result<f64> {
    check_len(reference.len(), got.len())?;
    if reference.is_empty() {
        return Ok(0.0);
    }
    let errors = got.iter().zip(reference).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / reference.len() as f64)
}

pub fn symbol_error_rate(got: &[u32], reference: &[u32]) -> Result<f64> {
    check_len(reference.len(), got.len())?;
    if reference.is_empty() {
        return Ok(0.0);
    }
    let errors = got.iter().zip(reference).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / reference.len() as f64)
}

/// Correct payload bits per second of frame time.
pub fn effective_bps(payload_len_bits: usize, ber: f64, frame_duration_s: f64) -> f64 {
    payload_len_bits as f64 * (1.0 - ber) / frame_duration_s
}

/// Decides multi-level symbols by nearest reference level. The first
/// `training.len()` amplitudes belong to known training symbols and set the
/// reference level of each symbol value; the rest are decided.
pub fn demodulate_multilevel(amplitudes: &[f64], training: &[u32], bits_per_symbol: u32) -> Result<Vec<u32>> {
    if !(1..=16).contains(&bits_per_symbol) {
        return Err(Error::InvalidModel(format!("{bits_per_symbol} bits per symbol")));
    }
    if training.len() > amplitudes.len() {
        return Err(Error::LengthMismatch {
            expected: training.len(),
            actual: amplitudes.len(),
        });
    }
    let m = 1usize << bits_per_symbol;
    let mut sums = vec![(0.0, 0usize); m];
    for (a, s) in amplitudes.iter().zip(training) {
        let slot = sums.get_mut(*s as usize).ok_or(Error::SymbolOutOfRange {
            symbol: *s,
            bits_per_symbol,
        })?;
        slot.0 += a;
        slot.1 += 1;
    }
    if let Some(missing) = sums.iter().position(|(_, n)| *n == 0) {
        return Err(Error::Config(format!("training has no symbol {missing}")));
    }
    let refs: Vec<f64> = sums.iter().map(|(s, n)| s / *n as f64).collect();
    Ok(amplitudes[training.len()..]
        .iter()
        .map(|a| {
            (0..m)
                .min_by(|i, j| (a - refs[*i]).abs().total_cmp(&(a - refs[*j]).abs()))
                .expect("at least two levels") as u32
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Distribution of per-symbol deviations from the mean amplitude of the
/// symbol's true class.
pub fn amplitude_pmf(amplitudes: &[f64], reference: &[u8], bins: usize) -> Result<Histogram> {
    check_len(amplitudes.len(), reference.len())?;
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if amplitudes.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let class_mean = |bit: u8| {
        let (s, n) = amplitudes
            .iter()
            .zip(reference)
            .filter(|(_, b)| **b == bit)
            .fold((0.0, 0usize), |(s, n), (a, _)| (s + a, n + 1));
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    };
    let refs = [class_mean(0), class_mean(1)];
    let noise: Vec<f64> = amplitudes
        .iter()
        .zip(reference)
        .map(|(a, b)| a - refs[(*b != 0) as usize])
        .collect();
    let (mut lo, mut hi) = noise
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let scale = amplitudes.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    if hi - lo <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        let v = 0.5 * (lo + hi);
        (lo, hi) = (v - 0.5, v + 0.5);
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in &noise {
        let i = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram {
        edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
        probabilities: counts.iter().map(|c| *c as f64 / noise.len() as f64).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ber_counts_mismatches() {
        assert_eq!(bit_error_rate(&[1, 0, 1, 1], &[1, 1, 1, 0]).unwrap(), 0.5);
        assert!(bit_error_rate(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn effective_rate_formula() {
        assert!((effective_bps(94, 0.0, 3.3) - 28.4848).abs() < 1e-3);
        assert!((effective_bps(94, 0.089, 3.3) - 25.95).abs() < 0.01);
    }

    #[test]
    fn noiseless_pmf_is_a_point_mass() {
        let amps = [3.0, 1.0, 3.0, 3.0, 1.0];
        let h = amplitude_pmf(&amps, &[1, 0, 1, 1, 0], 11).unwrap();
        let nonzero: Vec<usize> = (0..11).filter(|i| h.probabilities[*i] > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        let i = nonzero[0];
        assert_eq!(h.probabilities[i], 1.0);
        assert!(h.edges[i] <= 0.0 && 0.0 < h.edges[i + 1]);
    }

    #[test]
    fn pmf_sums_to_one() {
        let amps: Vec<f64> = (0..97).map(|i| ((i * 37) % 11) as f64 * 0.1).collect();
        let bits: Vec<u8> = (0..97).map(|i| (i % 3 == 0) as u8).collect();
        for bins in [1, 2, 7, 50] {
            let h = amplitude_pmf(&amps, &bits, bins).unwrap();
            assert!((h.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(h.edges.len(), bins + 1);
        }
        assert!(matches!(
            amplitude_pmf(&amps, &bits[..5], 4),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn multilevel_nearest_reference() {
        let amps = [0.0, 1.0, 3.0, 4.0, 2.9, 0.2, 1.4, 3.6];
        let got = demodulate_multilevel(&amps, &[0, 1, 2, 3], 2).unwrap();
        assert_eq!(got, vec![2, 0, 1, 3]);
        assert!(demodulate_multilevel(&amps, &[0, 1, 1, 3], 2).is_err());
        assert!(matches!(
            demodulate_multilevel(&amps, &[0, 1, 2, 4], 2),
            Err(Error::SymbolOutOfRange { .. })
        ));
    }
}
