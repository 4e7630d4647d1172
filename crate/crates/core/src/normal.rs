//! Standard normal density and distribution function.

use statrs::function::erf;

/// Standard normal cumulative distribution function.
pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal probability density function.
pub(crate) fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
