//! The fiducial family near a simple zero of `det Φ`.
//!
//! In the coordinate `s = log r` the pair is
//!
//! ```text
//! Φ_t = [[0, r^{1/2} e^{h}], [r^{1/2} e^{iθ} e^{−h}, 0]] dz
//! A_t = c(s) σ₃ (dz/z − dz̄/z̄),   c = 1/8 + ¼ ∂_s h
//! ```
//!
//! so that `det Φ_t = −z dz²` and `∂̄_A Φ_t = 0` for every profile `h`.
//! Substituting into `F^⊥ + t²[Φ∧Φ*] = 0` leaves the radial equation
//!
//! ```text
//! ∂_s² h = 8 t² e^{3s} sinh(2h)      (h'' + h'/r = 8 t² r sinh 2h)
//! ```
//!
//! with `h ~ −½ log r` at the origin (the only pole keeping `Φ` and `A`
//! smooth there) and `h → 0` at infinity. Solutions are self-similar:
//! `h_t(r) = h_1(t^{2/3} r)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    gauge_act, residual_rescaled, FieldPair, GaugeFlavor, GaugeTransformation, HiggsField, ResidualReport,
    UnitaryConnection,
};
use crate::grid::{PolarGrid, Stencil, DEFAULT_ANGULAR, DEFAULT_GHOST, DEFAULT_RADIAL};
use crate::linalg::{self, re, sigma3};
use crate::surface::Frame;

/// Pole coefficient of `h` at `r = 0`.
pub const POLE_COEFFICIENT: f64 = -0.5;

/// Far-field cutoff in the scaling variable `x = t^{2/3} r`.
pub const FAR_FIELD_X: f64 = 6.0;

/// Inner end of the solve in the scaling variable.
pub const NEAR_FIELD_X: f64 = 1e-4;

/// Fingerprint of the equation, boundary conditions and scheme; stored with
/// cached profiles.
pub const ODE_FINGERPRINT: &str =
    "h_ss = 8 t^2 e^(3s) sinh(2h); h_s(s0) = -1/2 + 2 t^2 e^(3 s0 + 2 h); h(s1) = 0; numerov-v1";

/// A radial profile `h(s)` with its `s`-derivative.
pub trait RadialProfile: Sync {
    fn t(&self) -> f64;
    /// `(h, ∂_s h)` at `s = log r`.
    fn eval(&self, s: f64) -> (f64, f64);
    /// Valid range of `r`.
    fn r_range(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiducialOptions {
    /// Target accuracy of `h`; sets the step as `0.1·tolerance^{1/4}`.
    pub tolerance: f64,
    /// Explicit step in `s`, overriding the tolerance rule.
    pub step: Option<f64>,
    pub max_iterations: usize,
}

impl Default for FiducialOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, step: None, max_iterations: 60 }
    }
}

impl FiducialOptions {
    fn step(&self) -> f64 {
        self.step.unwrap_or(0.1 * self.tolerance.powf(0.25))
    }
}

/// Solved profile `h_t` on a uniform grid in `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiducialProfile {
    t: f64,
    s0: f64,
    ds: f64,
    h: Vec<f64>,
    hs: Vec<f64>,
    hss: Vec<f64>,
    tolerance: f64,
    iterations: usize,
}

fn forcing(t: f64, s: f64, h: f64) -> f64 {
    8.0 * t * t * (3.0 * s).exp() * (2.0 * h).sinh()
}

fn forcing_dh(t: f64, s: f64, h: f64) -> f64 {
    16.0 * t * t * (3.0 * s).exp() * (2.0 * h).cosh()
}

fn left_slope(t: f64, s: f64, h: f64) -> f64 {
    POLE_COEFFICIENT + 2.0 * t * t * (3.0 * s + 2.0 * h).exp()
}

impl FiducialProfile {
    fn from_values(t: f64, s0: f64, ds: f64, h: Vec<f64>, tolerance: f64, iterations: usize) -> Self {
        let n = h.len();
        let s = |k: usize| s0 + k as f64 * ds;
        let hss: Vec<f64> = (0..n).map(|k| forcing(t, s(k), h[k])).collect();
        let mut hs = vec![0.0; n];
        hs[0] = left_slope(t, s0, h[0]);
        for k in 1..n - 1 {
            hs[k] = (h[k + 1] - h[k - 1]) / (2.0 * ds) - ds / 12.0 * (hss[k + 1] - hss[k - 1]);
        }
        hs[n - 1] = (h[n - 1] - h[n - 2]) / ds + ds / 6.0 * (2.0 * hss[n - 1] + hss[n - 2]);
        Self { t, s0, ds, h, hs, hss, tolerance, iterations }
    }

    pub(crate) fn from_table(t: f64, s0: f64, ds: f64, h: Vec<f64>, tolerance: f64) -> Result<Self> {
        if h.len() < 4 || !(ds > 0.0) || !(t > 0.0) {
            return Err(Error::Serde("malformed fiducial profile table".into()));
        }
        Ok(Self::from_values(t, s0, ds, h, tolerance, 0))
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn pole_coefficient(&self) -> f64 {
        POLE_COEFFICIENT
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    /// `(r, h)` pairs at the solver nodes.
    pub fn table(&self) -> Vec<(f64, f64)> {
        self.h.iter().enumerate().map(|(k, &h)| ((self.s0 + k as f64 * self.ds).exp(), h)).collect()
    }

    /// `h` at radius `r` (quintic Hermite between nodes).
    pub fn h_at(&self, r: f64) -> f64 {
        self.eval(r.ln()).0
    }

    /// `sup |h|` over the nodes with `r ∈ [r0, r1]`, plus the two endpoints.
    pub fn sup_on(&self, r0: f64, r1: f64) -> f64 {
        let mut m = self.h_at(r0).abs().max(self.h_at(r1).abs());
        for (r, h) in self.table() {
            if r >= r0 && r <= r1 {
                m = m.max(h.abs());
            }
        }
        m
    }

    /// Whether `h` is non-increasing in `r` on the nodes.
    pub fn is_monotone(&self) -> bool {
        self.h.windows(2).all(|w| w[1] <= w[0])
    }
}

impl RadialProfile for FiducialProfile {
    fn t(&self) -> f64 {
        self.t
    }

    fn eval(&self, s: f64) -> (f64, f64) {
        let n = self.h.len();
        let x = ((s - self.s0) / self.ds).clamp(0.0, (n - 1) as f64);
        let k = (x.floor() as usize).min(n - 2);
        let u = x - k as f64;
        let d = self.ds;
        let (y0, y1) = (self.h[k], self.h[k + 1]);
        let (d0, d1) = (self.hs[k] * d, self.hs[k + 1] * d);
        let (a0, a1) = (self.hss[k] * d * d, self.hss[k + 1] * d * d);
        let (u2, u3, u4, u5) = (u * u, u * u * u, u.powi(4), u.powi(5));
        let h = y0 * (1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5)
            + d0 * (u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5)
            + a0 * 0.5 * (u2 - 3.0 * u3 + 3.0 * u4 - u5)
            + a1 * 0.5 * (u3 - 2.0 * u4 + u5)
            + d1 * (-4.0 * u3 + 7.0 * u4 - 3.0 * u5)
            + y1 * (10.0 * u3 - 15.0 * u4 + 6.0 * u5);
        let dh = y0 * (-30.0 * u2 + 60.0 * u3 - 30.0 * u4)
            + d0 * (1.0 - 18.0 * u2 + 32.0 * u3 - 15.0 * u4)
            + a0 * 0.5 * (2.0 * u - 9.0 * u2 + 12.0 * u3 - 5.0 * u4)
            + a1 * 0.5 * (3.0 * u2 - 8.0 * u3 + 5.0 * u4)
            + d1 * (-12.0 * u2 + 28.0 * u3 - 15.0 * u4)
            + y1 * (30.0 * u2 - 60.0 * u3 + 30.0 * u4);
        (h, dh / d)
    }

    fn r_range(&self) -> (f64, f64) {
        let last = self.s0 + (self.h.len() - 1) as f64 * self.ds;
        (self.s0.exp(), last.exp())
    }
}

/// `h ≡ 0`: the limiting configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroProfile {
    pub t: f64,
}

impl RadialProfile for ZeroProfile {
    fn t(&self) -> f64 {
        self.t
    }
    fn eval(&self, _s: f64) -> (f64, f64) {
        (0.0, 0.0)
    }
}

/// `h = −½ log r`: the pure pole, for which the fiducial pair is
/// `(0, [[0, 1], [z, 0]] dz)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoleProfile {
    pub t: f64,
}

impl RadialProfile for PoleProfile {
    fn t(&self) -> f64 {
        self.t
    }
    fn eval(&self, s: f64) -> (f64, f64) {
        (POLE_COEFFICIENT * s, POLE_COEFFICIENT)
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut b = diag[0];
    if b == 0.0 {
        return Err(Error::Solver("singular Newton matrix".into()));
    }
    rhs[0] /= b;
    for k in 1..n {
        c[k - 1] = upper[k - 1] / b;
        b = diag[k] - lower[k] * c[k - 1];
        if b == 0.0 || !b.is_finite() {
            return Err(Error::Solver(format!("singular Newton matrix at row {k}")));
        }
        rhs[k] = (rhs[k] - lower[k] * rhs[k - 1]) / b;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= c[k] * rhs[k + 1];
    }
    Ok(())
}

/// Solves for `h_t` with default options on `[NEAR_FIELD_X, max(r_max, FAR_FIELD_X)]`
/// in the scaling variable.
pub fn fiducial_profile(t: f64, r_max: f64) -> Result<FiducialProfile> {
    fiducial_profile_with(t, r_max, FiducialOptions::default())
}

pub fn fiducial_profile_with(t: f64, r_max: f64, options: FiducialOptions) -> Result<FiducialProfile> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
    }
    if !(r_max >= 1.0 && r_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("r_max = {r_max} must be at least 1")));
    }
    if !(options.tolerance > 0.0) {
        return Err(Error::InvalidParameter("solver tolerance must be positive".into()));
    }
    let scale = t.powf(-2.0 / 3.0);
    let s0 = (NEAR_FIELD_X * scale).ln();
    let s1 = r_max.max(FAR_FIELD_X * scale).ln();
    let n = ((s1 - s0) / options.step()).ceil().max(16.0) as usize;
    let ds = (s1 - s0) / n as f64;
    let s = |k: usize| s0 + k as f64 * ds;
    let d2 = ds * ds;

    // Unknowns h_0..h_{n-1}; h_n = 0.
    let mut h: Vec<f64> = (0..n)
        .map(|k| {
            let x = s(k).exp() / scale;
            POLE_COEFFICIENT * x.tanh().ln()
        })
        .collect();
    h.push(0.0);

    let residual = |h: &[f64]| -> Vec<f64> {
        let f: Vec<f64> = (0..=n).map(|k| forcing(t, s(k), h[k])).collect();
        let mut r = vec![0.0; n];
        r[0] = h[1] - h[0] - ds * left_slope(t, s0, h[0]) - d2 / 6.0 * (2.0 * f[0] + f[1]);
        for k in 1..n {
            r[k] = h[k + 1] - 2.0 * h[k] + h[k - 1] - d2 / 12.0 * (f[k + 1] + 10.0 * f[k] + f[k - 1]);
        }
        r
    };
    let norm = |r: &[f64]| r.iter().map(|x| x.abs()).fold(0.0, f64::max);

    let mut r = residual(&h);
    let mut iterations = 0;
    loop {
        if iterations >= options.max_iterations {
            return Err(Error::Solver(format!(
                "Newton iteration for t = {t} did not converge in {iterations} steps (residual {:.3e})",
                norm(&r)
            )));
        }
        iterations += 1;
        let g: Vec<f64> = (0..n).map(|k| forcing_dh(t, s(k), h[k])).collect();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        diag[0] = -1.0 - ds * 4.0 * t * t * (3.0 * s0 + 2.0 * h[0]).exp() - d2 / 3.0 * g[0];
        upper[0] = 1.0 - d2 / 6.0 * g[1];
        for k in 1..n {
            lower[k] = 1.0 - d2 / 12.0 * g[k - 1];
            diag[k] = -2.0 - d2 * 10.0 / 12.0 * g[k];
            if k + 1 < n {
                upper[k] = 1.0 - d2 / 12.0 * g[k + 1];
            }
        }
        let mut delta: Vec<f64> = r.iter().map(|x| -x).collect();
        thomas(&lower, &diag, &upper, &mut delta)?;

        let r0 = norm(&r);
        let mut lambda = 1.0;
        let (trial, trial_r) = loop {
            let trial: Vec<f64> = h.iter().enumerate().map(|(k, &x)| if k < n { x + lambda * delta[k] } else { x }).collect();
            let tr = residual(&trial);
            if norm(&tr) < r0 || lambda < 1e-4 || r0 == 0.0 {
                break (trial, tr);
            }
            lambda *= 0.5;
        };
        let step = lambda * norm(&delta);
        h = trial;
        r = trial_r;
        if !h.iter().all(|x| x.is_finite()) {
            return Err(Error::Solver(format!("Newton iterate for t = {t} became non-finite")));
        }
        if step <= 1e-13 * (1.0 + norm(&h)) {
            break;
        }
    }
    Ok(FiducialProfile::from_values(t, s0, ds, h, options.tolerance, iterations))
}

/// Coefficient `c` of `σ₃ (dz/z − dz̄/z̄)` in the fiducial connection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionCoefficient {
    /// `1/8 + ¼ r ∂_r h`, the value forced by `∂̄_A Φ = 0`.
    #[default]
    Holomorphic,
    /// `1/8 + ½ ∂_r h`, as sometimes printed; kept for comparison.
    Literal,
}

impl ConnectionCoefficient {
    fn value(self, s: f64, hs: f64) -> f64 {
        match self {
            Self::Holomorphic => 0.125 + 0.25 * hs,
            Self::Literal => 0.125 + 0.5 * hs * (-s).exp(),
        }
    }
}

fn check_range(profile: &dyn RadialProfile, grid: &PolarGrid) -> Result<()> {
    let (lo, hi) = profile.r_range();
    let (r0, r1) = (grid.r(0), grid.r(grid.rows() - 1));
    let slack = 1e-12;
    if r0 < lo * (1.0 - slack) || r1 > hi * (1.0 + slack) {
        return Err(Error::Range(format!("grid radii [{r0}, {r1}] leave the profile range [{lo}, {hi}]")));
    }
    Ok(())
}

/// Assembles the fiducial pair from a profile, in the `dz` frame.
pub fn fiducial_pair(profile: &dyn RadialProfile, grid: &PolarGrid) -> Result<FieldPair> {
    fiducial_pair_with(profile, grid, ConnectionCoefficient::Holomorphic)
}

pub fn fiducial_pair_with(
    profile: &dyn RadialProfile,
    grid: &PolarGrid,
    coefficient: ConnectionCoefficient,
) -> Result<FieldPair> {
    check_range(profile, grid)?;
    let rows: Vec<(f64, f64)> = (0..grid.rows()).map(|i| profile.eval(grid.s(i))).collect();
    let mut a = Vec::with_capacity(grid.len());
    let mut phi = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let (i, j) = grid.row_col(k);
        let (h, hs) = rows[i];
        let s = grid.s(i);
        let z = grid.z(i, j);
        a.push(sigma3() * (re(coefficient.value(s, hs)) / z));
        let half = (0.5 * s).exp();
        let upper = re(half * h.exp());
        let lower = Complex64::from_polar(half * (-h).exp(), grid.theta(j));
        phi.push(linalg::off_diag(upper, lower));
    }
    FieldPair::new(
        UnitaryConnection::new(grid.clone(), Frame::Dz, a)?,
        HiggsField::new(grid.clone(), Frame::Dz, phi)?,
    )
}

/// `g_∞ = diag(|z|^{−1/4}, |z|^{1/4})` with closed-form derivatives.
pub fn singular_gauge(grid: &PolarGrid) -> Result<GaugeTransformation> {
    if !(grid.r(0) > 0.0) || !grid.r(0).is_finite() {
        return Err(Error::SingularGaugeDomain);
    }
    let mut g = Vec::with_capacity(grid.len());
    let mut dg = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let s = grid.s(grid.row_col(k).0);
        let (lo, hi) = ((-0.25 * s).exp(), (0.25 * s).exp());
        g.push(linalg::diag(re(lo), re(hi)));
        // ∂_ζ = ∂_ζ̄ = ½ ∂_s on θ-independent data
        dg.push(linalg::diag(re(-0.125 * lo), re(0.125 * hi)));
    }
    Ok(GaugeTransformation::new(grid.clone(), GaugeFlavor::Complex, g)?.with_derivatives(dg.clone(), dg))
}

/// Applies `g_∞` to a pair with the complexified gauge action.
pub fn singular_gauge_apply(grid: &PolarGrid, pair: &FieldPair) -> Result<FieldPair> {
    grid.check_same(pair.grid())?;
    let g = singular_gauge(grid)?;
    let (a, phi) = gauge_act(&g, &pair.connection, &pair.higgs, Stencil::default())?;
    FieldPair::new(a, phi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// `χ = ½(1 + cos πu)`.
    Cosine,
    /// `χ = 1 − (10u³ − 15u⁴ + 6u⁵)`.
    Polynomial,
}

impl Cutoff {
    /// `(χ, dχ/du)` for `u ∈ [0, 1]`.
    fn eval(self, u: f64) -> (f64, f64) {
        if u <= 0.0 {
            return (1.0, 0.0);
        }
        if u >= 1.0 {
            return (0.0, 0.0);
        }
        match self {
            Cutoff::Cosine => (0.5 * (1.0 + (PI * u).cos()), -0.5 * PI * (PI * u).sin()),
            Cutoff::Polynomial => {
                let u2 = u * u;
                (1.0 - u2 * u * (10.0 - 15.0 * u + 6.0 * u2), -30.0 * u2 * (1.0 - u) * (1.0 - u))
            }
        }
    }
}

/// `χ(r)·h_t` with `χ = 1` on `r ≤ r_c` and `χ = 0` on `r ≥ 2r_c`.
pub struct CutoffProfile<'a> {
    pub base: &'a dyn RadialProfile,
    pub r_c: f64,
    pub cutoff: Cutoff,
}

impl RadialProfile for CutoffProfile<'_> {
    fn t(&self) -> f64 {
        self.base.t()
    }

    fn eval(&self, s: f64) -> (f64, f64) {
        let r = s.exp();
        let u = (r - self.r_c) / self.r_c;
        let (chi, dchi) = self.cutoff.eval(u);
        if chi == 0.0 {
            return (0.0, 0.0);
        }
        let (h, hs) = self.base.eval(s);
        // ∂_s χ = r ∂_r χ = (r / r_c) dχ/du
        (chi * h, chi * hs + dchi * (r / self.r_c) * h)
    }

    fn r_range(&self) -> (f64, f64) {
        (self.base.r_range().0, f64::INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlueSurrogate {
    pub pair: FieldPair,
    pub residual: ResidualReport,
}

/// Interpolates between the fiducial pair on `r ≤ r_c` and its `h ≡ 0` limit
/// on `r ≥ 2r_c` and reports the rescaled residual.
pub fn approximate_glue_desingularization(
    profile: &FiducialProfile,
    r_c: f64,
    cutoff: Cutoff,
    grid: Option<&PolarGrid>,
) -> Result<GlueSurrogate> {
    if !(r_c > 0.0 && r_c < 0.5) {
        return Err(Error::InvalidParameter(format!("cutoff radius {r_c} outside (0, 1/2)")));
    }
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = PolarGrid::new((0.25 * r_c).min(0.05), 1.0, DEFAULT_RADIAL, DEFAULT_ANGULAR, DEFAULT_GHOST)?;
            &default_grid
        }
    };
    let glued = CutoffProfile { base: profile, r_c, cutoff };
    let pair = fiducial_pair(&glued, grid)?;
    let residual = residual_rescaled(&pair.connection, &pair.higgs, profile.t(), Stencil::high_order())?;
    Ok(GlueSurrogate { pair, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{det_higgs, residual_decoupled, EQ_CURVATURE, EQ_HOLOMORPHIC, EQ_NORMAL};
    use crate::linalg::c;

    fn grid() -> PolarGrid {
        PolarGrid::new(0.05, 1.0, 256, 128, DEFAULT_GHOST).unwrap()
    }

    #[test]
    fn hermite_reproduces_quintics() {
        let p = |s: f64| 0.3 - 0.2 * s + 0.7 * s * s - 0.1 * s.powi(3) + 0.05 * s.powi(4) - 0.01 * s.powi(5);
        let dp = |s: f64| -0.2 + 1.4 * s - 0.3 * s * s + 0.2 * s.powi(3) - 0.05 * s.powi(4);
        let ddp = |s: f64| 1.4 - 0.6 * s + 0.6 * s * s - 0.2 * s.powi(3);
        let (s0, ds) = (-1.0, 0.5);
        let n = 6;
        let prof = FiducialProfile {
            t: 1.0,
            s0,
            ds,
            h: (0..n).map(|k| p(s0 + k as f64 * ds)).collect(),
            hs: (0..n).map(|k| dp(s0 + k as f64 * ds)).collect(),
            hss: (0..n).map(|k| ddp(s0 + k as f64 * ds)).collect(),
            tolerance: 0.0,
            iterations: 0,
        };
        for &x in &[-0.93, -0.4, 0.11, 1.37] {
            let (h, hs) = prof.eval(x);
            assert!((h - p(x)).abs() < 1e-13);
            assert!((hs - dp(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn solved_profile_satisfies_the_equation() {
        let prof = fiducial_profile(4.0, 1.0).unwrap();
        let g = grid();
        let pair = fiducial_pair(&prof, &g).unwrap();
        let r = residual_rescaled(&pair.connection, &pair.higgs, 4.0, Stencil::high_order()).unwrap();
        assert!(r.sup() <= 1e-6, "{r:?}");
        assert!(prof.is_monotone());
    }

    #[test]
    fn profile_is_self_similar() {
        let p1 = fiducial_profile(1.0, 1.0).unwrap();
        let p8 = fiducial_profile(8.0, 1.0).unwrap();
        for &r in &[0.05, 0.2, 0.5, 0.9] {
            assert!((p8.h_at(r) - p1.h_at(4.0 * r)).abs() < 1e-7);
        }
    }

    #[test]
    fn literal_coefficient_breaks_holomorphicity() {
        let prof = fiducial_profile(2.0, 1.0).unwrap();
        let g = grid();
        let pair = fiducial_pair_with(&prof, &g, ConnectionCoefficient::Literal).unwrap();
        let r = residual_rescaled(&pair.connection, &pair.higgs, 2.0, Stencil::high_order()).unwrap();
        assert!(r.defect(EQ_HOLOMORPHIC).unwrap().norms.sup > 1e-2);
    }

    #[test]
    fn determinant_is_minus_z() {
        let g = grid();
        for t in [1.0, 2.0] {
            let prof = fiducial_profile(t, 1.0).unwrap();
            let pair = fiducial_pair(&prof, &g).unwrap();
            let q = det_higgs(&pair.higgs);
            let pts = q.lattice().points;
            assert!(q.values.iter().zip(&pts).all(|(v, z)| (v + z).norm() < 1e-12 * (1.0 + z.norm())));
        }
    }

    #[test]
    fn limiting_pair_is_decoupled() {
        let g = grid();
        let pair = fiducial_pair(&ZeroProfile { t: 4.0 }, &g).unwrap();
        let r = residual_decoupled(&pair.connection, &pair.higgs, Stencil::high_order()).unwrap();
        assert!(r.sup() <= 1e-10, "{r:?}");
        // |Φ₁₂| = |Φ₂₁| when h = 0, so the t²-weighted system holds as well.
        let rr = residual_rescaled(&pair.connection, &pair.higgs, 4.0, Stencil::high_order()).unwrap();
        assert!(rr.defect(EQ_CURVATURE).unwrap().norms.sup <= 1e-12);
    }

    #[test]
    fn singular_gauge_maps_pole_to_limit() {
        let g = grid();
        let pole = fiducial_pair(&PoleProfile { t: 1.0 }, &g).unwrap();
        for (k, a) in pole.connection.coefficient().iter().enumerate() {
            assert!(linalg::norm(a) < 1e-15);
            let expect = linalg::off_diag(c(1.0, 0.0), g.z_at(k));
            assert!(linalg::norm(&(pole.higgs.coefficient()[k] - expect)) < 1e-12);
        }
        let mapped = singular_gauge_apply(&g, &pole).unwrap();
        let limit = fiducial_pair(&ZeroProfile { t: 1.0 }, &g).unwrap();
        for k in 0..g.len() {
            assert!(linalg::norm(&(mapped.connection.coefficient()[k] - limit.connection.coefficient()[k])) < 1e-12);
            assert!(linalg::norm(&(mapped.higgs.coefficient()[k] - limit.higgs.coefficient()[k])) < 1e-12);
        }
        let r = residual_decoupled(&mapped.connection, &mapped.higgs, Stencil::high_order()).unwrap();
        assert!(r.sup() <= 1e-8);
        assert!(r.defect(EQ_NORMAL).unwrap().norms.sup <= 1e-12);
    }

    #[test]
    fn singular_gauge_conjugation() {
        let g = grid();
        let phi = g.sample(|z| linalg::off_diag(re(z.norm().sqrt()), z / z.norm().sqrt()));
        let pair = FieldPair::new(UnitaryConnection::zero(&g).in_frame(Frame::Dz), HiggsField::new(g.clone(), Frame::Dz, phi.clone()).unwrap()).unwrap();
        let out = singular_gauge_apply(&g, &pair).unwrap();
        for k in 0..g.len() {
            let r = g.z_at(k).norm();
            let p = out.higgs.coefficient()[k];
            assert!((p[(0, 1)] - phi[k][(0, 1)] * r.sqrt()).norm() < 1e-13);
            assert!((p[(1, 0)] - phi[k][(1, 0)] / r.sqrt()).norm() < 1e-13);
            assert!((linalg::det(&p) - linalg::det(&phi[k])).norm() < 1e-12);
        }
        let diag = FieldPair::new(UnitaryConnection::zero(&g), HiggsField::new(g.clone(), Frame::DzOverZ, vec![sigma3() * c(0.5, 1.0); g.len()]).unwrap()).unwrap();
        let out = singular_gauge_apply(&g, &diag).unwrap();
        for (x, y) in out.higgs.coefficient().iter().zip(diag.higgs.coefficient()) {
            assert!(linalg::norm(&(x - y)) < 1e-14);
        }
    }

    #[test]
    fn glue_surrogate_residual_lives_in_the_transition_annulus() {
        let prof = fiducial_profile(4.0, 1.0).unwrap();
        let g = grid();
        for cutoff in [Cutoff::Cosine, Cutoff::Polynomial] {
            let glue = approximate_glue_desingularization(&prof, 0.2, cutoff, Some(&g)).unwrap();
            assert!(glue.residual.sup().is_finite() && glue.residual.sup() > 1e-6);
            let pair = &glue.pair;
            let margin = (6.0 * g.ds()).exp();
            let outside = residual_rescaled_outside(pair, 4.0, 0.2 / margin, 0.4 * margin);
            assert!(outside <= 1e-6, "{cutoff:?}: {outside}");
        }
        assert!(approximate_glue_desingularization(&prof, 0.6, Cutoff::Cosine, None).is_err());
    }

    fn residual_rescaled_outside(pair: &FieldPair, t: f64, lo: f64, hi: f64) -> f64 {
        let g = pair.grid();
        let inner = crate::fields::residual_rescaled_window(&pair.connection, &pair.higgs, t, Stencil::high_order(), g.r_inner(), lo).unwrap();
        let outer = crate::fields::residual_rescaled_window(&pair.connection, &pair.higgs, t, Stencil::high_order(), hi, g.r_outer()).unwrap();
        inner.sup().max(outer.sup())
    }

    #[test]
    fn bad_inputs() {
        assert!(fiducial_profile(0.0, 1.0).is_err());
        assert!(fiducial_profile(1.0, 0.5).is_err());
        let prof = fiducial_profile(1.0, 1.0).unwrap();
        let wide = PolarGrid::new(0.05, 20.0, 32, 16, DEFAULT_GHOST).unwrap();
        assert!(matches!(fiducial_pair(&prof, &wide), Err(Error::Range(_))));
    }
}
