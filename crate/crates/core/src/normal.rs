//! Standard normal helpers.

use statrs::distribution::{ContinuousCDF, Normal};
use libm::erfc;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Log density of N(0,1).
#[inline]
pub fn log_phi(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

#[inline]
pub fn phi(z: f64) -> f64 {
    log_phi(z).exp()
}

/// Φ(z), accurate in both tails.
pub fn cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }
}

/// Upper tail 1 - Φ(z) without cancellation.
pub fn sf(z: f64) -> f64 {
    cdf(-z)
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// log P(a < Z < b) for a < b, computed on whichever side avoids cancellation.
pub fn log_interval_mass(a: f64, b: f64) -> f64 {
    let mass = if a > 0.0 {
        sf(a) - sf(b)
    } else if b < 0.0 {
        cdf(b) - cdf(a)
    } else {
        1.0 - cdf(a) - sf(b)
    };
    mass.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((phi(1.0) - 0.241_970_724_519_143_37).abs() < 1e-15);
        assert!((cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((quantile(0.75) - 0.674_489_750_196_081_7).abs() < 1e-12);
        assert_eq!(quantile(0.5), 0.0);
        assert!((log_interval_mass(f64::NEG_INFINITY, f64::INFINITY)).abs() < 1e-15);
        assert!((log_interval_mass(-1.0, f64::INFINITY) - sf(-1.0).ln()).abs() < 1e-15);
        // far tail does not cancel to zero
        assert!(log_interval_mass(30.0, f64::INFINITY).is_finite());
    }
}
