//! Scalar float helpers routed through `libm`.
//!
//! The crate builds with and without `std`; going through `libm` in both
//! configurations keeps forward values bit-identical across the two builds.

pub use core::f64::consts::PI;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn powi(x: f64, mut n: u32) -> f64 {
    // exponentiation by squaring; deterministic for the small n used here
    let mut base = x;
    let mut acc = 1.0;
    while n > 0 {
        if n & 1 == 1 {
            acc *= base;
        }
        base *= base;
        n >>= 1;
    }
    acc
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

/// `sign(x)` with `sign(0) = 0`, as used by signed-gradient steps.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Index of the largest element; the lowest index wins ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Population variance (divisor N).
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn powi_matches_repeated_multiplication() {
        let mut acc = 1.0;
        for n in 0..12u32 {
            assert!((powi(1.7, n) - acc).abs() < 1e-12 * acc.abs().max(1.0));
            acc *= 1.7;
        }
    }

    #[test]
    fn sign_zero_is_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(-3.5), -1.0);
        assert_eq!(sign(2.0), 1.0);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_lowest(&[5.0]), 0);
    }

    #[test]
    fn variance_hand_arithmetic() {
        // logits [0, 2] across two offsets: variance 1.0
        assert_eq!(population_variance(&[0.0, 2.0]), 1.0);
        assert!(population_variance(&[0.7, 0.7, 0.7]).abs() < 1e-30);
    }
}
