//! Real-FFT helpers shared by the FFT-domain filters and spectral estimators.

use std::cell::RefCell;

use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
    static COMPLEX_PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized in-place inverse complex FFT (`exp(+j...)` kernel).
pub fn ifft_complex(buf: &mut [Complex64]) {
    COMPLEX_PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
}

/// Smallest 2^a·3^b·5^c that is >= `n`.
pub fn fast_len(n: usize) -> usize {
    let n = n.max(1);
    let mut best = usize::MAX;
    let mut p5 = 1usize;
    while p5 < 2 * n {
        let mut p35 = p5;
        while p35 < 2 * n {
            let mut v = p35;
            while v < n {
                v *= 2;
            }
            best = best.min(v);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

/// Forward real FFT of `x` zero-padded to `n_fft`; returns `n_fft/2 + 1` bins.
pub fn rfft(x: &[f64], n_fft: usize) -> Vec<Complex64> {
    assert!(x.len() <= n_fft);
    let mut input = vec![0.0; n_fft];
    input[..x.len()].copy_from_slice(x);
    rfft_in_place(input)
}

pub fn rfft_in_place(mut input: Vec<f64>) -> Vec<Complex64> {
    let n_fft = input.len();
    PLANNER.with(|p| {
        let plan = p.borrow_mut().plan_fft_forward(n_fft);
        let mut out = plan.make_output_vec();
        plan.process(&mut input, &mut out)
            .expect("buffer sizes come from the plan");
        out
    })
}

/// Inverse of [`rfft`], normalized so that `irfft(rfft(x)) == x`.
pub fn irfft(mut bins: Vec<Complex64>, n_fft: usize) -> Vec<f64> {
    assert_eq!(bins.len(), n_fft / 2 + 1);
    bins[0].im = 0.0;
    if n_fft.is_multiple_of(2) {
        bins[n_fft / 2].im = 0.0;
    }
    PLANNER.with(|p| {
        let plan = p.borrow_mut().plan_fft_inverse(n_fft);
        let mut out = plan.make_output_vec();
        plan.process(&mut bins, &mut out)
            .expect("buffer sizes come from the plan");
        let scale = 1.0 / n_fft as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        out
    })
}

/// Zero-phase response of a symmetric, odd-length kernel at the `n_fft/2 + 1`
/// bins of an `n_fft`-point transform. The kernel centre is placed at index 0.
pub fn symmetric_kernel_response(taps: &[f64], n_fft: usize) -> Vec<f64> {
    assert!(taps.len() % 2 == 1 && taps.len() <= n_fft);
    let half = taps.len() / 2;
    let mut buf = vec![0.0; n_fft];
    buf[0] = taps[half];
    for k in 1..=half {
        buf[k] = taps[half + k];
        buf[n_fft - k] = taps[half - k];
    }
    rfft_in_place(buf).into_iter().map(|c| c.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_len_is_smooth_and_minimal() {
        assert_eq!(fast_len(1), 1);
        assert_eq!(fast_len(7), 8);
        assert_eq!(fast_len(11), 12);
        assert_eq!(fast_len(1000), 1000);
        assert_eq!(fast_len(1001), 1024);
        for n in [97usize, 12_345, 299_999, 2_092_000] {
            let m = fast_len(n);
            assert!(m >= n);
            let mut r = m;
            for p in [2, 3, 5] {
                while r.is_multiple_of(p) {
                    r /= p;
                }
            }
            assert_eq!(r, 1);
        }
    }

    #[test]
    fn round_trip() {
        let x: Vec<f64> = (0..37).map(|i| (i as f64 * 0.3).sin() + 0.1 * i as f64).collect();
        let y = irfft(rfft(&x, 60), 60);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(y[37..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn kernel_response_is_dtft() {
        let taps = [0.25, 0.5, 0.25];
        let h = symmetric_kernel_response(&taps, 16);
        for (k, hk) in h.iter().enumerate() {
            let w = 2.0 * std::f64::consts::PI * k as f64 / 16.0;
            assert!((hk - (0.5 + 0.5 * w.cos())).abs() < 1e-12);
        }
    }
}
