//! Summation and quadrature helpers shared by the other modules.

use core::ops::Add;

use num_complex::Complex64;

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (cascade) summation. The association order depends only on the
/// slice length, so results are reproducible regardless of how the slice was
/// produced.
pub fn pairwise_sum<T>(values: &[T]) -> T
where
    T: Copy + Default + Add<Output = T>,
{
    if values.len() <= PAIRWISE_BLOCK {
        values.iter().fold(T::default(), |acc, &v| acc + v)
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Composite Simpson weights for `n_intervals` equal steps of width `h`.
///
/// An odd interval count is handled by closing the last three intervals with
/// Simpson's 3/8 rule.
pub fn simpson_weights(n_intervals: usize, h: f64) -> alloc::vec::Vec<f64> {
    let mut w = alloc::vec![0.0; n_intervals + 1];
    match n_intervals {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let (simpson_end, tail) = if n_intervals % 2 == 0 {
                (n_intervals, false)
            } else {
                (n_intervals - 3, true)
            };
            for i in (0..simpson_end).step_by(2) {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
            }
            if tail {
                let s = simpson_end;
                w[s] += 3.0 * h / 8.0;
                w[s + 1] += 9.0 * h / 8.0;
                w[s + 2] += 9.0 * h / 8.0;
                w[s + 3] += 3.0 * h / 8.0;
            }
        }
    }
    w
}

/// Composite Simpson rule on equally spaced samples.
pub fn simpson(samples: &[f64], h: f64) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let w = simpson_weights(samples.len() - 1, h);
    let terms: alloc::vec::Vec<f64> = samples.iter().zip(&w).map(|(f, w)| f * w).collect();
    pairwise_sum(&terms)
}

/// Trapezoid rule on equally spaced complex samples.
pub fn trapezoid_c(samples: &[Complex64], h: f64) -> Complex64 {
    match samples.len() {
        0 | 1 => Complex64::new(0.0, 0.0),
        n => {
            let inner = pairwise_sum(&samples[1..n - 1]);
            (inner + (samples[0] + samples[n - 1]) * 0.5) * h
        }
    }
}

/// Trapezoid rule on equally spaced real samples.
pub fn trapezoid(samples: &[f64], h: f64) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        n => (pairwise_sum(&samples[1..n - 1]) + 0.5 * (samples[0] + samples[n - 1])) * h,
    }
}
