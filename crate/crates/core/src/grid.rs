//! Tensor-product sample grids and finite-difference calculus.
//!
//! All analysis happens on log-polar grids: the radial coordinate is
//! `s = log r` (so `τ = |s|` on the unit annulus) and θ is periodic. In these
//! coordinates `ζ = s + iθ = log z` is a holomorphic coordinate with
//! `dζ = dz/z`, so the model fields at a node have constant coefficients and
//! the neck metric `ds² + dθ²` is flat.
//!
//! A grid carries `ghost` extra radial layers on each side of the nominal
//! annulus `[r_inner, r_outer]`. Derivatives are only meaningful on rows at
//! least one stencil half-width away from the ends; every norm in the crate
//! is taken over the nominal (interior) rows.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{self, M2};

pub const DEFAULT_RADIAL: usize = 256;
pub const DEFAULT_ANGULAR: usize = 128;
pub const DEFAULT_GHOST: usize = 4;
const MIN_POINTS: usize = 8;

/// Values that can live on a grid and be differentiated.
pub trait GridValue:
    Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<Complex64, Output = Self>
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl GridValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl GridValue for M2 {
    fn zero() -> Self {
        M2::zeros()
    }
    fn magnitude(&self) -> f64 {
        linalg::norm(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    r_inner: f64,
    r_outer: f64,
    n_radial: usize,
    n_theta: usize,
    ghost: usize,
}

impl PolarGrid {
    pub fn new(
        r_inner: f64,
        r_outer: f64,
        n_radial: usize,
        n_theta: usize,
        ghost: usize,
    ) -> Result<Self> {
        if !(r_inner > 0.0 && r_inner < r_outer && r_outer.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < r_inner < r_outer, got [{r_inner}, {r_outer}]"
            )));
        }
        if n_radial < MIN_POINTS || n_theta < MIN_POINTS {
            return Err(Error::Resolution(format!(
                "{n_radial}x{n_theta} grid, need at least {MIN_POINTS} points per direction"
            )));
        }
        let grid = Self { r_inner, r_outer, n_radial, n_theta, ghost };
        if grid.r(0) <= 0.0 {
            return Err(Error::InvalidParameter("ghost layers reach the origin".into()));
        }
        Ok(grid)
    }

    /// Annulus with the default ghost width.
    pub fn annulus(r_inner: f64, r_outer: f64, n_radial: usize, n_theta: usize) -> Result<Self> {
        Self::new(r_inner, r_outer, n_radial, n_theta, DEFAULT_GHOST)
    }

    pub fn r_inner(&self) -> f64 {
        self.r_inner
    }
    pub fn r_outer(&self) -> f64 {
        self.r_outer
    }
    pub fn n_radial(&self) -> usize {
        self.n_radial
    }
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
    pub fn ghost(&self) -> usize {
        self.ghost
    }

    /// Total radial rows including ghosts.
    pub fn rows(&self) -> usize {
        self.n_radial + 2 * self.ghost
    }

    pub fn len(&self) -> usize {
        self.rows() * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ds(&self) -> f64 {
        (self.r_outer.ln() - self.r_inner.ln()) / (self.n_radial - 1) as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn s(&self, row: usize) -> f64 {
        self.r_inner.ln() + (row as f64 - self.ghost as f64) * self.ds()
    }

    pub fn r(&self, row: usize) -> f64 {
        self.s(row).exp()
    }

    /// Cylindrical coordinate τ = |log r|.
    pub fn tau(&self, row: usize) -> f64 {
        self.s(row).abs()
    }

    pub fn theta(&self, col: usize) -> f64 {
        col as f64 * self.dtheta()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_theta + col
    }

    #[inline]
    pub fn row_col(&self, idx: usize) -> (usize, usize) {
        (idx / self.n_theta, idx % self.n_theta)
    }

    pub fn z(&self, row: usize, col: usize) -> Complex64 {
        Complex64::from_polar(self.r(row), self.theta(col))
    }

    pub fn z_at(&self, idx: usize) -> Complex64 {
        let (i, j) = self.row_col(idx);
        self.z(i, j)
    }

    /// Rows of the nominal annulus.
    pub fn interior_rows(&self) -> std::ops::Range<usize> {
        self.ghost..self.ghost + self.n_radial
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        let (i, _) = self.row_col(idx);
        self.interior_rows().contains(&i)
    }

    /// Sample a function of `z` at every grid point.
    pub fn sample<T: Send, F: Fn(Complex64) -> T + Sync + Send>(&self, f: F) -> Vec<T> {
        exec::map_range(self.len(), |k| f(self.z_at(k)))
    }

    /// Sample a function of `(s, θ)` at every grid point.
    pub fn sample_log<T: Send, F: Fn(f64, f64) -> T + Sync + Send>(&self, f: F) -> Vec<T> {
        exec::map_range(self.len(), |k| {
            let (i, j) = self.row_col(k);
            f(self.s(i), self.theta(j))
        })
    }

    pub fn check_same(&self, other: &PolarGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch("fields live on different grids".into()))
        }
    }
}

/// Centered first-derivative stencil of even order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stencil {
    order: usize,
}

impl Default for Stencil {
    fn default() -> Self {
        Self::second_order()
    }
}

impl Stencil {
    pub fn new(order: usize) -> Result<Self> {
        match order {
            2 | 4 | 6 | 8 => Ok(Self { order }),
            _ => Err(Error::InvalidParameter(format!("stencil order {order} not in {{2,4,6,8}}"))),
        }
    }

    pub fn second_order() -> Self {
        Self { order: 2 }
    }

    /// Eighth-order stencil, used where closed-form solutions are checked
    /// against tolerances far below the second-order truncation error.
    pub fn high_order() -> Self {
        Self { order: 8 }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn half_width(&self) -> usize {
        self.order / 2
    }

    /// Weights for offsets `1..=half_width`; the stencil is antisymmetric.
    fn weights(&self) -> &'static [f64] {
        match self.order {
            2 => &[0.5],
            4 => &[2.0 / 3.0, -1.0 / 12.0],
            6 => &[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
            _ => &[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
        }
    }

    pub fn check_grid(&self, grid: &PolarGrid) -> Result<()> {
        if self.half_width() > grid.ghost() {
            return Err(Error::Resolution(format!(
                "stencil of order {} needs {} ghost layers, grid has {}",
                self.order,
                self.half_width(),
                grid.ghost()
            )));
        }
        if grid.n_theta() < 2 * self.half_width() + 1 {
            return Err(Error::Resolution("too few angular points for stencil".into()));
        }
        Ok(())
    }

    /// ∂/∂s. Rows within a half-width of either end are left at zero.
    pub fn d_s<T: GridValue>(&self, grid: &PolarGrid, f: &[T]) -> Vec<T> {
        let hw = self.half_width();
        let w = self.weights();
        let inv = 1.0 / grid.ds();
        let rows = grid.rows();
        let nt = grid.n_theta();
        exec::map_range(f.len(), |k| {
            let (i, j) = grid.row_col(k);
            if i < hw || i + hw >= rows {
                return T::zero();
            }
            let mut acc = T::zero();
            for (m, wm) in w.iter().enumerate() {
                let o = m + 1;
                acc = acc + (f[(i + o) * nt + j] - f[(i - o) * nt + j]) * Complex64::new(wm * inv, 0.0);
            }
            acc
        })
    }

    /// ∂/∂θ with periodic wrap.
    pub fn d_theta<T: GridValue>(&self, grid: &PolarGrid, f: &[T]) -> Vec<T> {
        let w = self.weights();
        let inv = 1.0 / grid.dtheta();
        let nt = grid.n_theta();
        exec::map_range(f.len(), |k| {
            let (i, j) = grid.row_col(k);
            let mut acc = T::zero();
            for (m, wm) in w.iter().enumerate() {
                let o = m + 1;
                let jp = (j + o) % nt;
                let jm = (j + nt - o % nt) % nt;
                acc = acc + (f[i * nt + jp] - f[i * nt + jm]) * Complex64::new(wm * inv, 0.0);
            }
            acc
        })
    }

    /// ∂/∂ζ = ½(∂_s − i∂_θ).
    pub fn d_zeta<T: GridValue>(&self, grid: &PolarGrid, f: &[T]) -> Vec<T> {
        let ds = self.d_s(grid, f);
        let dt = self.d_theta(grid, f);
        ds.into_iter()
            .zip(dt)
            .map(|(a, b)| (a - b * linalg::I) * Complex64::new(0.5, 0.0))
            .collect()
    }

    /// ∂/∂ζ̄ = ½(∂_s + i∂_θ).
    pub fn d_zeta_bar<T: GridValue>(&self, grid: &PolarGrid, f: &[T]) -> Vec<T> {
        let ds = self.d_s(grid, f);
        let dt = self.d_theta(grid, f);
        ds.into_iter()
            .zip(dt)
            .map(|(a, b)| (a + b * linalg::I) * Complex64::new(0.5, 0.0))
            .collect()
    }
}

/// Sup and grid-weighted L² norms over the nominal annulus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub sup: f64,
    pub l2: f64,
}

impl Norms {
    pub fn of<T: GridValue>(grid: &PolarGrid, f: &[T]) -> Self {
        Self::of_rows(grid, f, grid.interior_rows())
    }

    /// Norms restricted to a radial row range (clamped to the interior).
    pub fn of_rows<T: GridValue>(grid: &PolarGrid, f: &[T], rows: std::ops::Range<usize>) -> Self {
        let interior = grid.interior_rows();
        let lo = rows.start.max(interior.start);
        let hi = rows.end.min(interior.end);
        let nt = grid.n_theta();
        let mut sup: f64 = 0.0;
        let mut sq = 0.0;
        for i in lo..hi {
            for j in 0..nt {
                let m = f[i * nt + j].magnitude();
                sup = sup.max(m);
                sq += m * m;
            }
        }
        Self { sup, l2: (sq * grid.ds() * grid.dtheta()).sqrt() }
    }

    /// Norms over rows with `r` in `[r_lo, r_hi]`.
    pub fn of_radii<T: GridValue>(grid: &PolarGrid, f: &[T], r_lo: f64, r_hi: f64) -> Self {
        let rows: Vec<usize> =
            grid.interior_rows().filter(|&i| grid.r(i) >= r_lo * (1.0 - 1e-12) && grid.r(i) <= r_hi * (1.0 + 1e-12)).collect();
        match (rows.first(), rows.last()) {
            (Some(&a), Some(&b)) => Self::of_rows(grid, f, a..b + 1),
            _ => Self::default(),
        }
    }

    pub fn max(self, other: Norms) -> Norms {
        Norms { sup: self.sup.max(other.sup), l2: self.l2.max(other.l2) }
    }
}

/// Square Cartesian lattice on `[-half_width, half_width]²`, used for disk
/// charts that contain the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianGrid {
    pub half_width: f64,
    pub n: usize,
}

impl CartesianGrid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::InvalidParameter("half width must be positive".into()));
        }
        if n < MIN_POINTS {
            return Err(Error::Resolution(format!("{n} points, need {MIN_POINTS}")));
        }
        Ok(Self { half_width, n })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize, j: usize) -> Complex64 {
        let h = self.spacing();
        Complex64::new(-self.half_width + i as f64 * h, -self.half_width + j as f64 * h)
    }
}

/// Flattened 2-D sample lattice: `nx` rows, `ny` columns, optionally periodic
/// in the column direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub points: Vec<Complex64>,
    pub nx: usize,
    pub ny: usize,
    pub periodic_y: bool,
}

impl Lattice {
    pub fn from_cartesian(g: &CartesianGrid) -> Self {
        let mut points = Vec::with_capacity(g.n * g.n);
        for i in 0..g.n {
            for j in 0..g.n {
                points.push(g.point(i, j));
            }
        }
        Self { points, nx: g.n, ny: g.n, periodic_y: false }
    }

    /// Nominal rows of a polar grid (ghost layers dropped).
    pub fn from_polar(g: &PolarGrid) -> Self {
        let mut points = Vec::with_capacity(g.n_radial() * g.n_theta());
        for i in g.interior_rows() {
            for j in 0..g.n_theta() {
                points.push(g.z(i, j));
            }
        }
        Self { points, nx: g.n_radial(), ny: g.n_theta(), periodic_y: true }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn rejects_coarse_and_inverted_grids() {
        assert!(matches!(PolarGrid::annulus(0.1, 1.0, 4, 64), Err(Error::Resolution(_))));
        assert!(PolarGrid::annulus(1.0, 0.5, 32, 32).is_err());
        assert!(PolarGrid::annulus(0.0, 0.5, 32, 32).is_err());
    }

    #[test]
    fn nominal_rows_span_the_annulus() {
        let g = PolarGrid::annulus(0.1, 1.0, 64, 32).unwrap();
        let rows = g.interior_rows();
        assert!((g.r(rows.start) - 0.1).abs() < 1e-14);
        assert!((g.r(rows.end - 1) - 1.0).abs() < 1e-12);
        assert!(g.tau(rows.start) > g.tau(rows.end - 1));
    }

    #[test]
    fn d_zeta_of_z_is_z_and_d_zeta_bar_vanishes() {
        // z = e^ζ, so ∂_ζ z = z and ∂_ζ̄ z = 0.
        let g = PolarGrid::annulus(0.5, 1.0, 128, 128).unwrap();
        let f = g.sample(|z| z);
        let st = Stencil::high_order();
        let dz = st.d_zeta(&g, &f);
        let dzb = st.d_zeta_bar(&g, &f);
        let err: Vec<Complex64> = dz.iter().zip(&f).map(|(a, b)| a - b).collect();
        assert!(Norms::of(&g, &err).sup < 1e-9);
        assert!(Norms::of(&g, &dzb).sup < 1e-9);
    }

    #[test]
    fn stencil_order_is_observed() {
        let err_at = |n: usize| {
            let g = PolarGrid::annulus(0.5, 1.0, n, n).unwrap();
            let f = g.sample(|z| z * z * z.conj());
            let st = Stencil::second_order();
            let d = st.d_zeta_bar(&g, &f);
            // ∂_ζ̄ (z² z̄) = z̄ · ∂_z̄(z² z̄) = z² z̄.
            let e: Vec<Complex64> = d.iter().zip(&f).map(|(a, b)| a - b).collect();
            Norms::of(&g, &e).sup
        };
        let slope = (err_at(32) / err_at(64)).log2();
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
        let _ = c(0.0, 0.0);
    }

    #[test]
    fn norms_of_constant() {
        let g = PolarGrid::annulus(0.5, 1.0, 32, 16).unwrap();
        let f = vec![Complex64::new(2.0, 0.0); g.len()];
        let n = Norms::of(&g, &f);
        assert_eq!(n.sup, 2.0);
        let area = 32.0 * g.ds() * 2.0 * PI;
        assert!((n.l2 - 2.0 * area.sqrt()).abs() < 1e-12);
    }
}
