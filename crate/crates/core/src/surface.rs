//! Plumbing data for smooth and noded surfaces, neck charts, transition maps
//! and quadratic differentials.
//!
//! A surface is never given a global atlas. It is represented by its genus,
//! the list of plumbing parameters `t` (one per node) and the neck charts
//! `ρ ≤ |z| ≤ 1`, `ρ ≤ |w| ≤ 1` glued by `zw = t`. Everything analytic is done
//! chart by chart.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CartesianGrid, Lattice, PolarGrid, DEFAULT_GHOST};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeParameter {
    t: Complex64,
    rho: f64,
}

impl NodeParameter {
    pub fn new(t: Complex64) -> Result<Self> {
        let rho = t.norm();
        if !rho.is_finite() || rho >= 1.0 {
            return Err(Error::InvalidParameter(format!("|t| = {rho} must be < 1")));
        }
        Ok(Self { t, rho })
    }

    pub fn pinched() -> Self {
        Self { t: Complex64::new(0.0, 0.0), rho: 0.0 }
    }

    pub fn t(&self) -> Complex64 {
        self.t
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn is_pinched(&self) -> bool {
        self.rho == 0.0
    }

    /// Half-length `log(1/ρ)` of the neck in the cylindrical coordinate τ.
    pub fn half_length(&self) -> f64 {
        if self.is_pinched() {
            f64::INFINITY
        } else {
            -self.rho.ln()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn opposite(self) -> Self {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlumbingSurface {
    genus: u32,
    nodes: Vec<NodeParameter>,
    r_max: f64,
}

/// Builds the plumbing data `(γ, {t_p})` and derives `R = max |t_p|²`.
pub fn build_plumbing(genus: i64, node_params: &[Complex64]) -> Result<PlumbingSurface> {
    if genus < 2 {
        return Err(Error::InvalidGenus(genus));
    }
    let nodes = node_params
        .iter()
        .map(|&t| NodeParameter::new(t))
        .collect::<Result<Vec<_>>>()?;
    let r_max = nodes.iter().map(|n| n.rho() * n.rho()).fold(0.0, f64::max);
    Ok(PlumbingSurface { genus: genus as u32, nodes, r_max })
}

impl PlumbingSurface {
    pub fn genus(&self) -> u32 {
        self.genus
    }

    pub fn nodes(&self) -> &[NodeParameter] {
        &self.nodes
    }

    /// `R = max_p |t(p)|²`.
    pub fn r(&self) -> f64 {
        self.r_max
    }

    pub fn pinched_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.is_pinched()).map(|(i, _)| i)
    }

    /// Neck charts `R_ρ^±` for node `index`. Pinched nodes get half-infinite
    /// cylinders truncated at `τ = tau_max`.
    pub fn neck_charts(
        &self,
        index: usize,
        n_radial: usize,
        n_theta: usize,
        tau_max: f64,
    ) -> Result<(AnnulusChart, AnnulusChart)> {
        let node = self
            .nodes
            .get(index)
            .ok_or_else(|| Error::InvalidParameter(format!("no node {index}")))?;
        let inner = if node.is_pinched() { (-tau_max).exp() } else { node.rho() };
        Ok((
            AnnulusChart::new(Side::Plus, inner, n_radial, n_theta)?,
            AnnulusChart::new(Side::Minus, inner, n_radial, n_theta)?,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusChart {
    pub side: Side,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub grid: PolarGrid,
}

impl AnnulusChart {
    pub fn new(side: Side, inner_radius: f64, n_radial: usize, n_theta: usize) -> Result<Self> {
        if !(inner_radius > 0.0 && inner_radius < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "inner radius {inner_radius} outside (0, 1)"
            )));
        }
        let grid = PolarGrid::new(inner_radius, 1.0, n_radial, n_theta, DEFAULT_GHOST)?;
        Ok(Self { side, inner_radius, outer_radius: 1.0, grid })
    }

    pub fn with_grid(side: Side, grid: PolarGrid) -> Result<Self> {
        if grid.r_outer() > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter("neck charts end at |z| = 1".into()));
        }
        Ok(Self { side, inner_radius: grid.r_inner(), outer_radius: grid.r_outer(), grid })
    }
}

/// Frame in which a (1,0)- or (0,1)-form coefficient is expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// `f dz` (or `f dz̄`).
    Dz,
    /// `f dz/z` (or `f dz̄/z̄`), the cylindrical frame `dζ`.
    DzOverZ,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormType {
    /// Coefficient of `dz` or `dz/z`.
    Holomorphic,
    /// Coefficient of `dz̄` or `dz̄/z̄`.
    AntiHolomorphic,
}

/// Pointwise samples of a 1-form coefficient on a chart.
#[derive(Clone, Debug, PartialEq)]
pub struct FormSamples<T> {
    pub frame: Frame,
    pub form_type: FormType,
    pub side: Side,
    pub points: Vec<Complex64>,
    pub values: Vec<T>,
}

/// Factor relating the coefficient on the opposite chart at `w = t/z`.
fn transition_factor(frame: Frame, form_type: FormType, t: Complex64, w: Complex64) -> Complex64 {
    let f = match frame {
        // dz/z = −dw/w
        Frame::DzOverZ => Complex64::new(-1.0, 0.0),
        // z = t/w ⇒ dz = −t/w² dw
        Frame::Dz => -t / (w * w),
    };
    match form_type {
        FormType::Holomorphic => f,
        FormType::AntiHolomorphic => f.conj(),
    }
}

/// Re-expresses a 1-form coefficient in the opposite chart via `w = t/z`.
pub fn transition_pushforward<T>(form: &FormSamples<T>, node: &NodeParameter) -> Result<FormSamples<T>>
where
    T: Copy + std::ops::Mul<Complex64, Output = T>,
{
    if node.is_pinched() {
        return Err(Error::NoOverlap);
    }
    let t = node.t();
    let mut points = Vec::with_capacity(form.points.len());
    let mut values = Vec::with_capacity(form.values.len());
    for (&z, &v) in form.points.iter().zip(&form.values) {
        if z.norm() < node.rho() * (1.0 - 1e-12) || z.norm() > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!("point {z} outside the overlap")));
        }
        let w = t / z;
        points.push(w);
        values.push(v * transition_factor(form.frame, form.form_type, t, w));
    }
    Ok(FormSamples { frame: form.frame, form_type: form.form_type, side: form.side.opposite(), points, values })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QdFrame {
    /// `q = f(z) dz²`.
    Dz2,
    /// `q = g(z) (dz/z)²`.
    DzOverZ2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QdChart {
    Disk(CartesianGrid),
    Neck(PolarGrid),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticDifferential {
    pub frame: QdFrame,
    pub chart: QdChart,
    /// Coefficient samples: row-major over the Cartesian lattice, or over the
    /// nominal rows of the polar grid.
    pub values: Vec<Complex64>,
}

impl QuadraticDifferential {
    pub fn from_fn<F: Fn(Complex64) -> Complex64>(frame: QdFrame, chart: QdChart, f: F) -> Self {
        let lattice = lattice_of(&chart);
        let values = lattice.points.iter().map(|&z| f(z)).collect();
        Self { frame, chart, values }
    }

    pub fn lattice(&self) -> Lattice {
        lattice_of(&self.chart)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    /// Coefficient of `dz²` at every lattice point.
    pub fn dz2_values(&self) -> Vec<Complex64> {
        match self.frame {
            QdFrame::Dz2 => self.values.clone(),
            QdFrame::DzOverZ2 => {
                let l = self.lattice();
                self.values.iter().zip(&l.points).map(|(g, z)| g / (z * z)).collect()
            }
        }
    }
}

fn lattice_of(chart: &QdChart) -> Lattice {
    match chart {
        QdChart::Disk(g) => Lattice::from_cartesian(g),
        QdChart::Neck(g) => Lattice::from_polar(g),
    }
}

/// Coefficient of a quadratic differential after `w = t/z`.
pub fn quadratic_pushforward(frame: QdFrame, t: Complex64, z: Complex64, value: Complex64) -> (Complex64, Complex64) {
    let w = t / z;
    match frame {
        // (dz/z)² = (dw/w)²
        QdFrame::DzOverZ2 => (w, value),
        QdFrame::Dz2 => {
            let dzdw = -t / (w * w);
            (w, value * dzdw * dzdw)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zero {
    pub position: Complex64,
    pub multiplicity: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroClassification {
    pub zeros: Vec<Zero>,
    /// All multiplicities equal one.
    pub simple: bool,
}

/// Loop half-width, in lattice spacings, of the winding-number circles.
pub const WINDING_RADIUS: usize = 4;

/// Finds the zeros of the stored coefficient by the argument principle.
///
/// Candidates are lattice points where `|f|` is a local minimum; the winding
/// number of `f` along the square loop of half-width [`WINDING_RADIUS`] around
/// each candidate gives the multiplicity, and the first moment of `d log f`
/// along the same loop refines the position.
pub fn classify_zeros(q: &QuadraticDifferential) -> Result<ZeroClassification> {
    let lat = q.lattice();
    let f = &q.values;
    let fmax = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if fmax == 0.0 || !fmax.is_finite() {
        return Err(Error::DegenerateDifferential);
    }
    let small = 1e-3 * fmax;
    let hw = WINDING_RADIUS;
    let (nx, ny) = (lat.nx, lat.ny);

    let in_band = |i: usize, j: usize| {
        i < hw || i + hw >= nx || (!lat.periodic_y && (j < hw || j + hw >= ny))
    };

    let neighbor = |i: usize, j: usize, di: isize, dj: isize| -> Option<usize> {
        let ii = i as isize + di;
        if ii < 0 || ii >= nx as isize {
            return None;
        }
        let jj = j as isize + dj;
        let jj = if lat.periodic_y {
            jj.rem_euclid(ny as isize)
        } else if jj < 0 || jj >= ny as isize {
            return None;
        } else {
            jj
        };
        Some(lat.at(ii as usize, jj as usize))
    };

    let mut candidates = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let k = lat.at(i, j);
            let m = f[k].norm();
            let mut is_min = true;
            for di in -1..=1isize {
                for dj in -1..=1isize {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    if let Some(n) = neighbor(i, j, di, dj) {
                        if f[n].norm() < m {
                            is_min = false;
                        }
                    }
                }
            }
            if !is_min {
                continue;
            }
            if in_band(i, j) {
                // A zero closer than about one spacing makes |f| comparable
                // to its variation between neighbours.
                let variation = (-1..=1isize)
                    .flat_map(|di| (-1..=1isize).map(move |dj| (di, dj)))
                    .filter_map(|(di, dj)| neighbor(i, j, di, dj))
                    .map(|n| (f[n] - f[k]).norm())
                    .fold(0.0, f64::max);
                if m <= small || m <= 2.0 * variation {
                    return Err(Error::InconclusiveClassification(format!(
                        "near-zero of the coefficient at {} lies within {hw} spacings of the chart boundary",
                        lat.points[k]
                    )));
                }
                continue;
            }
            candidates.push((m, i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));

    let index_dist = |a: (usize, usize), b: (usize, usize)| {
        let di = a.0.abs_diff(b.0);
        let mut dj = a.1.abs_diff(b.1);
        if lat.periodic_y {
            dj = dj.min(ny - dj);
        }
        di.max(dj)
    };

    let mut accepted: Vec<(usize, usize)> = Vec::new();
    let mut zeros = Vec::new();
    for (_, i, j) in candidates {
        if accepted.iter().any(|&a| index_dist(a, (i, j)) <= hw) {
            continue;
        }
        let loop_idx = square_loop(i, j, hw, ny, lat.periodic_y, &lat);
        let mut winding = 0.0;
        let mut moment = Complex64::new(0.0, 0.0);
        for w in 0..loop_idx.len() {
            let a = loop_idx[w];
            let b = loop_idx[(w + 1) % loop_idx.len()];
            if f[a].norm() == 0.0 || f[b].norm() == 0.0 {
                return Err(Error::InconclusiveClassification("zero lies on a winding loop".into()));
            }
            let ratio = f[b] / f[a];
            let darg = ratio.arg();
            if darg.abs() > PI / 2.0 {
                return Err(Error::InconclusiveClassification(
                    "argument jumps by more than π/2 between lattice points".into(),
                ));
            }
            winding += darg;
            let dlog = Complex64::new(ratio.norm().ln(), darg);
            let mid = 0.5 * (lat.points[a] + lat.points[b]);
            moment += mid * dlog;
        }
        let m = (winding / (2.0 * PI)).round() as i32;
        if m == 0 {
            continue;
        }
        accepted.push((i, j));
        let position = moment / Complex64::new(0.0, 2.0 * PI * m as f64);
        zeros.push(Zero { position, multiplicity: m });
    }
    let simple = zeros.iter().all(|z| z.multiplicity == 1);
    Ok(ZeroClassification { zeros, simple })
}

/// Counter-clockwise (in index space) loop of lattice indices around `(i, j)`.
fn square_loop(i: usize, j: usize, hw: usize, ny: usize, periodic: bool, lat: &Lattice) -> Vec<usize> {
    let h = hw as isize;
    let wrap = |jj: isize| -> usize {
        if periodic {
            jj.rem_euclid(ny as isize) as usize
        } else {
            jj as usize
        }
    };
    let (ci, cj) = (i as isize, j as isize);
    let mut out = Vec::with_capacity(8 * hw);
    for d in -h..h {
        out.push(lat.at((ci + d) as usize, wrap(cj - h)));
    }
    for d in -h..h {
        out.push(lat.at((ci + h) as usize, wrap(cj + d)));
    }
    for d in -h..h {
        out.push(lat.at((ci - d) as usize, wrap(cj + h)));
    }
    for d in -h..h {
        out.push(lat.at((ci - h) as usize, wrap(cj - d)));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleOrder {
    pub order: i32,
    /// Fitted slope of `⟨log|f|⟩_θ` against τ.
    pub slope: f64,
    /// Pole order at most two, i.e. the differential lies in QD₋₂ near this node.
    pub in_qd_minus2: bool,
}

/// Pole order at the node (τ → ∞) from the growth of the `dz²` coefficient.
///
/// For `f ~ z^{−m} u(z)` with `u` nonvanishing, the circle average of
/// `log|f|` equals `m τ + const`, so the least-squares slope against τ over
/// the half of the neck nearest the node estimates `m`.
pub fn pole_order_at_node(q: &QuadraticDifferential) -> Result<PoleOrder> {
    let grid = match &q.chart {
        QdChart::Neck(g) => g,
        QdChart::Disk(_) => {
            return Err(Error::InconclusivePoleOrder("differential must be given on a neck chart".into()))
        }
    };
    if grid.r_outer() > 1.0 + 1e-12 {
        return Err(Error::InconclusivePoleOrder("neck chart must lie inside |z| ≤ 1".into()));
    }
    let f = q.dz2_values();
    let nt = grid.n_theta();
    let taus: Vec<f64> = grid.interior_rows().map(|i| grid.tau(i)).collect();
    let tau_max = taus.iter().cloned().fold(0.0, f64::max);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, &tau) in taus.iter().enumerate() {
        if tau < 0.5 * tau_max {
            continue;
        }
        let mut acc = 0.0;
        for j in 0..nt {
            let m = f[row * nt + j].norm();
            if m == 0.0 || !m.is_finite() {
                return Err(Error::InconclusivePoleOrder("coefficient vanishes on the fit window".into()));
            }
            acc += m.ln();
        }
        xs.push(tau);
        ys.push(acc / nt as f64);
    }
    if xs.len() < 4 || tau_max <= 0.0 {
        return Err(Error::InconclusivePoleOrder("too few radial samples near the node".into()));
    }
    let (slope, _) = crate::fit::least_squares_line(&xs, &ys);
    let order = slope.round();
    if (slope - order).abs() > 0.2 {
        return Err(Error::InconclusivePoleOrder(format!("slope {slope:.3} is not close to an integer")));
    }
    let order = order as i32;
    Ok(PoleOrder { order, slope, in_qd_minus2: order <= 2 })
}
