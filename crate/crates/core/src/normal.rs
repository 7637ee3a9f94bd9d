//! Standard normal density and distribution function.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF via the complementary error function.
///
/// Evaluated on the lower tail and reflected for positive arguments so that
/// small tail probabilities keep full relative precision.
pub fn cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    } else {
        1.0 - 0.5 * erfc(x * FRAC_1_SQRT_2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_values() {
        assert_abs_diff_eq!(cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-14);
        assert_abs_diff_eq!(cdf(-1.96), 0.024_997_895_148_220_43, epsilon = 1e-14);
        assert_abs_diff_eq!(pdf(0.0), 0.398_942_280_401_432_7, epsilon = 1e-15);
        // deep tail keeps relative precision
        let t = cdf(-10.0);
        assert!((t / 7.619_853_024_160_527e-24 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn symmetric() {
        for i in -80..=80 {
            let x = i as f64 * 0.125;
            assert_abs_diff_eq!(cdf(x) + cdf(-x), 1.0, epsilon = 1e-15);
        }
    }
}
