//! `L²` norm of `u_*/z` on `ε ≤ |z| ≤ 1` for `r dr∧dθ`, which grows like
//! `2π|u_*|² log(1/ε)`.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fit::least_squares_line;

const NODES: usize = 12;
/// Ratio of consecutive geometric panel ends in `r`.
const PANEL_RATIO: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceScan {
    pub u_star: Complex64,
    pub eps: Vec<f64>,
    pub partial: Vec<f64>,
    /// Slope of `partial` against `log(1/ε)`.
    pub slope: f64,
    pub intercept: f64,
    pub expected_slope: f64,
}

impl DivergenceScan {
    pub fn relative_error(&self) -> f64 {
        if self.expected_slope == 0.0 {
            self.slope.abs()
        } else {
            (self.slope / self.expected_slope - 1.0).abs()
        }
    }
}

fn annulus_norm(rule: &GaussLegendre, u_star: Complex64, eps: f64) -> f64 {
    let density = |r: f64| (u_star / r).norm_sqr() * r;
    let mut total = 0.0;
    let mut lo = eps;
    while lo < 1.0 {
        let hi = (lo * PANEL_RATIO).min(1.0);
        total += rule.integrate(lo, hi, density);
        lo = hi;
    }
    // integrand has no θ dependence
    2.0 * PI * total
}

/// Partial norms for each `ε` and the fitted slope. Entries of `eps` outside
/// `(0, 1)` are skipped.
pub fn l2_divergence_scan(u_star: Complex64, eps: &[f64]) -> DivergenceScan {
    let rule = GaussLegendre::new(NonZeroUsize::new(NODES).expect("nonzero"));
    let eps: Vec<f64> = eps.iter().copied().filter(|e| *e > 0.0 && *e < 1.0).collect();
    let partial: Vec<f64> = eps.iter().map(|&e| annulus_norm(&rule, u_star, e)).collect();
    let logs: Vec<f64> = eps.iter().map(|e| -e.ln()).collect();
    let (slope, intercept) = if eps.len() >= 2 { least_squares_line(&logs, &partial) } else { (f64::NAN, f64::NAN) };
    DivergenceScan { u_star, eps, partial, slope, intercept, expected_slope: 2.0 * PI * u_star.norm_sqr() }
}
