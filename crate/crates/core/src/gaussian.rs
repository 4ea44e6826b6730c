//! Scalar Gaussian helpers with tail-accurate interval probabilities.

use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

/// `0.5 * ln(2 pi)`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[inline]
pub fn normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    std_normal_pdf((x - mean) / std) / std
}

#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

pub fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        0.5 * erfc(-x / SQRT_2)
    }
}

/// Upper tail `P(Z > x)`.
pub fn std_normal_sf(x: f64) -> f64 {
    std_normal_cdf(-x)
}

/// `P(lo <= Z <= hi)` for a standard normal `Z`.
///
/// Differences are always formed on the side of the smaller tail so that
/// far-tail cells keep their relative precision.
pub fn std_normal_interval(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo >= 0.0 {
        std_normal_sf(lo) - std_normal_sf(hi)
    } else if hi <= 0.0 {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    } else {
        1.0 - std_normal_cdf(lo) - std_normal_sf(hi)
    }
}

/// `P(lo <= X <= hi)` for `X ~ N(mean, std^2)`.
pub fn normal_interval(lo: f64, hi: f64, mean: f64, std: f64) -> f64 {
    std_normal_interval((lo - mean) / std, (hi - mean) / std)
}
