//! Connections, Higgs fields and gauge transformations sampled on chart
//! grids, together with the residuals of the self-duality systems.
//!
//! Conventions. Fields are stored in the frame they were given in and
//! converted to the cylindrical frame `dζ = dz/z` for computation. A unitary
//! connection is `A = â dζ + b̂ dζ̄` with `b̂ = −â†`; a Higgs field is
//! `Φ = φ̂ dζ`. Two-forms are reported as coefficients of `dζ∧dζ̄`, so
//!
//! ```text
//! F_A        = (∂_ζ b̂ − ∂_ζ̄ â + [â, b̂]) dζ∧dζ̄
//! [Φ∧Φ*]     = (φ̂φ̂† − φ̂†φ̂) dζ∧dζ̄
//! ∂̄_A Φ      = (∂_ζ̄ φ̂ + [b̂, φ̂]) dζ̄∧dζ
//! ```
//!
//! and `dz∧dz̄ = −2i dx∧dy`. Hermitian adjoints are taken in the chart's
//! orthonormal frame.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{Norms, PolarGrid, Stencil};
use crate::linalg::{self, adj, comm, re, M2};
use crate::surface::{Frame, QdChart, QdFrame, QuadraticDifferential};

const STRUCTURE_TOL: f64 = 1e-12;

/// Rank-2 hermitian bundle of degree `d`; slope `μ = d/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleData {
    pub degree: i64,
}

impl BundleData {
    pub const RANK: usize = 2;

    pub fn slope(&self) -> f64 {
        self.degree as f64 / 2.0
    }
}

fn to_log(frame: Frame, grid: &PolarGrid, values: &[M2], anti: bool) -> Vec<M2> {
    match frame {
        Frame::DzOverZ => values.to_vec(),
        Frame::Dz => values
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let z = grid.z_at(k);
                v * if anti { z.conj() } else { z }
            })
            .collect(),
    }
}

fn from_log(frame: Frame, grid: &PolarGrid, values: &[M2], anti: bool) -> Vec<M2> {
    match frame {
        Frame::DzOverZ => values.to_vec(),
        Frame::Dz => values
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let z = grid.z_at(k);
                v * (1.0 / if anti { z.conj() } else { z })
            })
            .collect(),
    }
}

/// A unitary connection `A = a dz − a† dz̄` (or the same in the `dz/z` frame),
/// relative to the implicit background `A₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryConnection {
    grid: PolarGrid,
    frame: Frame,
    a: Vec<M2>,
}

impl UnitaryConnection {
    pub fn new(grid: PolarGrid, frame: Frame, a: Vec<M2>) -> Result<Self> {
        if a.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} samples for {} grid points", a.len(), grid.len())));
        }
        Ok(Self { grid, frame, a })
    }

    /// From both coefficients of `A = a dz + b dz̄`; rejects data that is not
    /// anti-hermitian (`b = −a†`).
    pub fn from_parts(grid: PolarGrid, frame: Frame, a: Vec<M2>, b: &[M2]) -> Result<Self> {
        for (k, (x, y)) in a.iter().zip(b).enumerate() {
            let scale = 1.0 + linalg::norm(x);
            if linalg::norm(&(y + adj(x))) > STRUCTURE_TOL * scale {
                return Err(Error::PreconditionViolation(format!(
                    "connection is not unitary at grid point {k}"
                )));
            }
        }
        Self::new(grid, frame, a)
    }

    pub fn zero(grid: &PolarGrid) -> Self {
        Self { grid: grid.clone(), frame: Frame::DzOverZ, a: vec![M2::zeros(); grid.len()] }
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    /// Stored `dz`-type coefficient.
    pub fn coefficient(&self) -> &[M2] {
        &self.a
    }

    /// `(â, b̂)` in the `dζ` frame.
    pub fn log_coefficients(&self) -> (Vec<M2>, Vec<M2>) {
        let a = to_log(self.frame, &self.grid, &self.a, false);
        let b = a.iter().map(|x| -adj(x)).collect();
        (a, b)
    }

    pub fn max_trace(&self) -> f64 {
        self.a.iter().map(|x| linalg::trace(x).norm()).fold(0.0, f64::max)
    }

    pub fn in_frame(&self, frame: Frame) -> Self {
        let (a, _) = self.log_coefficients();
        Self { grid: self.grid.clone(), frame, a: from_log(frame, &self.grid, &a, false) }
    }
}

/// A Higgs field `Φ = φ dz` or `Φ = φ dz/z`.
#[derive(Clone, Debug, PartialEq)]
pub struct HiggsField {
    grid: PolarGrid,
    frame: Frame,
    phi: Vec<M2>,
}

impl HiggsField {
    pub fn new(grid: PolarGrid, frame: Frame, phi: Vec<M2>) -> Result<Self> {
        if phi.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} samples for {} grid points", phi.len(), grid.len())));
        }
        Ok(Self { grid, frame, phi })
    }

    /// Same as [`HiggsField::new`] but rejects fields that are not trace-free.
    pub fn trace_free(grid: PolarGrid, frame: Frame, phi: Vec<M2>) -> Result<Self> {
        for (k, p) in phi.iter().enumerate() {
            if linalg::trace(p).norm() > STRUCTURE_TOL * (1.0 + linalg::norm(p)) {
                return Err(Error::PreconditionViolation(format!("Higgs field has trace at grid point {k}")));
            }
        }
        Self::new(grid, frame, phi)
    }

    pub fn zero(grid: &PolarGrid) -> Self {
        Self { grid: grid.clone(), frame: Frame::DzOverZ, phi: vec![M2::zeros(); grid.len()] }
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn coefficient(&self) -> &[M2] {
        &self.phi
    }

    pub fn log_coefficient(&self) -> Vec<M2> {
        to_log(self.frame, &self.grid, &self.phi, false)
    }

    pub fn in_frame(&self, frame: Frame) -> Self {
        let p = self.log_coefficient();
        Self { grid: self.grid.clone(), frame, phi: from_log(frame, &self.grid, &p, false) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldPair {
    pub connection: UnitaryConnection,
    pub higgs: HiggsField,
}

impl FieldPair {
    pub fn new(connection: UnitaryConnection, higgs: HiggsField) -> Result<Self> {
        connection.grid().check_same(higgs.grid())?;
        Ok(Self { connection, higgs })
    }

    pub fn grid(&self) -> &PolarGrid {
        self.connection.grid()
    }
}

/// Volume form `ω = density · ds∧dθ` on a chart grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeForm {
    pub density: Vec<f64>,
}

impl VolumeForm {
    /// Euclidean area `dx∧dy = r² ds∧dθ`.
    pub fn flat(grid: &PolarGrid) -> Self {
        Self { density: (0..grid.len()).map(|k| grid.r(grid.row_col(k).0).powi(2)).collect() }
    }

    /// Cylinder area `ds∧dθ`.
    pub fn cylindrical(grid: &PolarGrid) -> Self {
        Self { density: vec![1.0; grid.len()] }
    }

    /// Coefficient of `dζ∧dζ̄` (`ds∧dθ = (i/2) dζ∧dζ̄`).
    fn zeta_coefficient(&self, k: usize) -> Complex64 {
        Complex64::new(0.0, 0.5 * self.density[k])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationDefect {
    pub equation: String,
    pub norms: Norms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub r_inner: f64,
    pub r_outer: f64,
    pub n_radial: usize,
    pub n_theta: usize,
    pub stencil_order: usize,
}

impl GridMeta {
    fn new(grid: &PolarGrid, stencil: Stencil) -> Self {
        Self {
            r_inner: grid.r_inner(),
            r_outer: grid.r_outer(),
            n_radial: grid.n_radial(),
            n_theta: grid.n_theta(),
            stencil_order: stencil.order(),
        }
    }
}

/// Per-equation defects over the nominal annulus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub defects: Vec<EquationDefect>,
    pub grid: GridMeta,
}

impl ResidualReport {
    pub fn sup(&self) -> f64 {
        self.defects.iter().map(|d| d.norms.sup).fold(0.0, f64::max)
    }

    pub fn l2(&self) -> f64 {
        self.defects.iter().map(|d| d.norms.l2).fold(0.0, f64::max)
    }

    pub fn defect(&self, equation: &str) -> Option<&EquationDefect> {
        self.defects.iter().find(|d| d.equation == equation)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.defects.iter().all(|d| d.norms.sup <= tol && d.norms.l2 <= tol)
    }

    /// Restrict every defect field to `r ∈ [r_lo, r_hi]`.
    fn build(grid: &PolarGrid, stencil: Stencil, fields: Vec<(&str, Vec<M2>)>, window: Option<(f64, f64)>) -> Self {
        let defects = fields
            .into_iter()
            .map(|(name, f)| EquationDefect {
                equation: name.to_string(),
                norms: match window {
                    Some((lo, hi)) => Norms::of_radii(grid, &f, lo, hi),
                    None => Norms::of(grid, &f),
                },
            })
            .collect();
        Self { defects, grid: GridMeta::new(grid, stencil) }
    }
}

pub const EQ_CURVATURE: &str = "curvature";
pub const EQ_HOLOMORPHIC: &str = "holomorphic";
pub const EQ_FLAT: &str = "flat";
pub const EQ_NORMAL: &str = "normal";

struct Pieces {
    curvature: Vec<M2>,
    bracket: Vec<M2>,
    dbar_phi: Vec<M2>,
}

fn pieces(a: &UnitaryConnection, phi: &HiggsField, stencil: Stencil) -> Result<Pieces> {
    if a.frame() != phi.frame() {
        return Err(Error::FrameMismatch(format!(
            "connection in {:?} frame, Higgs field in {:?} frame",
            a.frame(),
            phi.frame()
        )));
    }
    let grid = a.grid();
    grid.check_same(phi.grid())?;
    stencil.check_grid(grid)?;
    let (ah, bh) = a.log_coefficients();
    let ph = phi.log_coefficient();
    let curvature = curvature_coefficients(grid, stencil, &ah, &bh);
    let bracket = exec::map_range(grid.len(), |k| comm(&ph[k], &adj(&ph[k])));
    let dph = stencil.d_zeta_bar(grid, &ph);
    let dbar_phi = exec::map_range(grid.len(), |k| dph[k] + comm(&bh[k], &ph[k]));
    Ok(Pieces { curvature, bracket, dbar_phi })
}

/// `dζ∧dζ̄` coefficient of the curvature of `â dζ + b̂ dζ̄` (no unitarity
/// assumed).
pub fn curvature_coefficients(grid: &PolarGrid, stencil: Stencil, ah: &[M2], bh: &[M2]) -> Vec<M2> {
    let db = stencil.d_zeta(grid, bh);
    let da = stencil.d_zeta_bar(grid, ah);
    exec::map_range(grid.len(), |k| db[k] - da[k] + comm(&ah[k], &bh[k]))
}

/// Defects of `F_A + [Φ∧Φ*] = −iμ(E) id ω` and `∂̄_A Φ = 0`. `A` enters with
/// whatever trace it carries; the background's central curvature is implicit
/// and degree enters only through `μ(E) ω`.
pub fn residual_full(
    a: &UnitaryConnection,
    phi: &HiggsField,
    bundle: BundleData,
    omega: &VolumeForm,
    stencil: Stencil,
) -> Result<ResidualReport> {
    let p = pieces(a, phi, stencil)?;
    let mu = bundle.slope();
    let grid = a.grid();
    let first = exec::map_range(grid.len(), |k| {
        p.curvature[k] + p.bracket[k] + linalg::identity() * (Complex64::new(0.0, mu) * omega.zeta_coefficient(k))
    });
    Ok(ResidualReport::build(grid, stencil, vec![(EQ_CURVATURE, first), (EQ_HOLOMORPHIC, p.dbar_phi)], None))
}

/// Defects of `F_A^⊥ + [Φ∧Φ*] = 0`, `∂̄_A Φ = 0`.
pub fn residual_fixed_det(a: &UnitaryConnection, phi: &HiggsField, stencil: Stencil) -> Result<ResidualReport> {
    residual_rescaled_unchecked(a, phi, 1.0, stencil, None)
}

/// Defects of `F_A^⊥ + t²[Φ∧Φ*] = 0`, `∂̄_A Φ = 0`.
pub fn residual_rescaled(a: &UnitaryConnection, phi: &HiggsField, t: f64, stencil: Stencil) -> Result<ResidualReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("rescaling parameter t = {t} must be positive")));
    }
    residual_rescaled_unchecked(a, phi, t, stencil, None)
}

/// As [`residual_rescaled`], with norms taken over `r ∈ [r_lo, r_hi]` only.
pub fn residual_rescaled_window(
    a: &UnitaryConnection,
    phi: &HiggsField,
    t: f64,
    stencil: Stencil,
    r_lo: f64,
    r_hi: f64,
) -> Result<ResidualReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("rescaling parameter t = {t} must be positive")));
    }
    residual_rescaled_unchecked(a, phi, t, stencil, Some((r_lo, r_hi)))
}

fn residual_rescaled_unchecked(
    a: &UnitaryConnection,
    phi: &HiggsField,
    t: f64,
    stencil: Stencil,
    window: Option<(f64, f64)>,
) -> Result<ResidualReport> {
    let p = pieces(a, phi, stencil)?;
    let t2 = re(t * t);
    let first: Vec<M2> = p
        .curvature
        .iter()
        .zip(&p.bracket)
        .map(|(f, b)| linalg::trace_free(f) + b * t2)
        .collect();
    Ok(ResidualReport::build(a.grid(), stencil, vec![(EQ_CURVATURE, first), (EQ_HOLOMORPHIC, p.dbar_phi)], window))
}

/// The three decoupled defects `F_A^⊥`, `[Φ∧Φ*]`, `∂̄_A Φ`.
pub fn residual_decoupled(a: &UnitaryConnection, phi: &HiggsField, stencil: Stencil) -> Result<ResidualReport> {
    residual_decoupled_window(a, phi, stencil, None)
}

pub fn residual_decoupled_window(
    a: &UnitaryConnection,
    phi: &HiggsField,
    stencil: Stencil,
    window: Option<(f64, f64)>,
) -> Result<ResidualReport> {
    let p = pieces(a, phi, stencil)?;
    let flat = p.curvature.iter().map(linalg::trace_free).collect();
    Ok(ResidualReport::build(
        a.grid(),
        stencil,
        vec![(EQ_FLAT, flat), (EQ_NORMAL, p.bracket), (EQ_HOLOMORPHIC, p.dbar_phi)],
        window,
    ))
}

/// `F_A = F_A^⊥ + ½ Tr(F_A) id`, as `dζ∧dζ̄` coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureSplit {
    pub traceless: Vec<M2>,
    pub central: Vec<M2>,
}

impl CurvatureSplit {
    pub fn total(&self) -> Vec<M2> {
        self.traceless.iter().zip(&self.central).map(|(a, b)| a + b).collect()
    }
}

pub fn curvature(a: &UnitaryConnection, stencil: Stencil) -> Result<Vec<M2>> {
    stencil.check_grid(a.grid())?;
    let (ah, bh) = a.log_coefficients();
    Ok(curvature_coefficients(a.grid(), stencil, &ah, &bh))
}

pub fn curvature_decompose(a: &UnitaryConnection, stencil: Stencil) -> Result<CurvatureSplit> {
    let f = curvature(a, stencil)?;
    let central: Vec<M2> = f.iter().map(|x| linalg::identity() * (linalg::trace(x) * 0.5)).collect();
    let traceless = f.iter().zip(&central).map(|(x, c)| x - c).collect();
    Ok(CurvatureSplit { traceless, central })
}

/// Fibration map: the chart-wise determinant of the Higgs field.
pub fn det_higgs(phi: &HiggsField) -> QuadraticDifferential {
    let grid = phi.grid();
    let frame = match phi.frame() {
        Frame::Dz => QdFrame::Dz2,
        Frame::DzOverZ => QdFrame::DzOverZ2,
    };
    let nt = grid.n_theta();
    let mut values = Vec::with_capacity(grid.n_radial() * nt);
    for i in grid.interior_rows() {
        for j in 0..nt {
            values.push(linalg::det(&phi.coefficient()[grid.index(i, j)]));
        }
    }
    QuadraticDifferential { frame, chart: QdChart::Neck(grid.clone()), values }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeFlavor {
    Unitary,
    Complex,
}

/// A gauge transformation `g` with `det g = 1`, optionally with its
/// `∂_ζ`/`∂_ζ̄` derivatives supplied in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeTransformation {
    grid: PolarGrid,
    flavor: GaugeFlavor,
    values: Vec<M2>,
    derivatives: Option<(Vec<M2>, Vec<M2>)>,
}

impl GaugeTransformation {
    pub fn new(grid: PolarGrid, flavor: GaugeFlavor, values: Vec<M2>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch("gauge samples do not match grid".into()));
        }
        for (k, g) in values.iter().enumerate() {
            if (linalg::det(g) - re(1.0)).norm() > STRUCTURE_TOL * (1.0 + linalg::norm(g).powi(2)) {
                return Err(Error::SingularGauge(k));
            }
            if flavor == GaugeFlavor::Unitary
                && linalg::norm(&(adj(g) * g - linalg::identity())) > STRUCTURE_TOL
            {
                return Err(Error::PreconditionViolation(format!("gauge is not unitary at grid point {k}")));
            }
        }
        Ok(Self { grid, flavor, values, derivatives: None })
    }

    /// Attach closed-form `(∂_ζ g, ∂_ζ̄ g)`.
    pub fn with_derivatives(mut self, d_zeta: Vec<M2>, d_zeta_bar: Vec<M2>) -> Self {
        self.derivatives = Some((d_zeta, d_zeta_bar));
        self
    }

    pub fn identity(grid: &PolarGrid) -> Self {
        Self {
            grid: grid.clone(),
            flavor: GaugeFlavor::Unitary,
            values: vec![linalg::identity(); grid.len()],
            derivatives: None,
        }
    }

    pub fn constant(grid: &PolarGrid, flavor: GaugeFlavor, g: M2) -> Result<Self> {
        Self::new(grid.clone(), flavor, vec![g; grid.len()])
    }

    pub fn flavor(&self) -> GaugeFlavor {
        self.flavor
    }

    pub fn values(&self) -> &[M2] {
        &self.values
    }

    fn derivatives(&self, stencil: Stencil) -> Result<(Vec<M2>, Vec<M2>)> {
        if let Some(d) = &self.derivatives {
            return Ok(d.clone());
        }
        let constant = self.values.iter().all(|g| *g == self.values[0]);
        if constant {
            return Ok((vec![M2::zeros(); self.grid.len()], vec![M2::zeros(); self.grid.len()]));
        }
        // The transformed connection is differentiated again downstream, so
        // finite-difference derivatives of g need twice the ghost width.
        if 2 * stencil.half_width() > self.grid.ghost() {
            return Err(Error::Resolution(format!(
                "gauge derivatives by finite differences need {} ghost layers",
                2 * stencil.half_width()
            )));
        }
        Ok((stencil.d_zeta(&self.grid, &self.values), stencil.d_zeta_bar(&self.grid, &self.values)))
    }
}

/// `g*(A, Φ) = (g*A, g⁻¹Φg)`.
///
/// The connection transforms through its `(0,1)` part,
/// `b̂' = g⁻¹ b̂ g + g⁻¹ ∂_ζ̄ g`, and `â' = −b̂'†`. For unitary `g` this is the
/// usual `g⁻¹Ag + g⁻¹dg`; for complex `g` it is the complexified action that
/// keeps the hermitian metric fixed.
pub fn gauge_act(
    g: &GaugeTransformation,
    a: &UnitaryConnection,
    phi: &HiggsField,
    stencil: Stencil,
) -> Result<(UnitaryConnection, HiggsField)> {
    let grid = a.grid();
    grid.check_same(phi.grid())?;
    grid.check_same(&g.grid)?;
    let inv: Vec<M2> = g
        .values
        .iter()
        .enumerate()
        .map(|(k, x)| linalg::inverse(x).ok_or(Error::SingularGauge(k)))
        .collect::<Result<_>>()?;
    let (_, dbar_g) = g.derivatives(stencil)?;
    let (_, bh) = a.log_coefficients();
    let ph = phi.log_coefficient();
    let b_new: Vec<M2> = exec::map_range(grid.len(), |k| inv[k] * bh[k] * g.values[k] + inv[k] * dbar_g[k]);
    let a_new: Vec<M2> = b_new.iter().map(|b| -adj(b)).collect();
    let p_new: Vec<M2> = exec::map_range(grid.len(), |k| inv[k] * ph[k] * g.values[k]);
    Ok((
        UnitaryConnection { grid: grid.clone(), frame: a.frame(), a: from_log(a.frame(), grid, &a_new, false) },
        HiggsField { grid: grid.clone(), frame: phi.frame(), phi: from_log(phi.frame(), grid, &p_new, false) },
    ))
}

/// End(E)-valued 1-form `α = α₁ dζ + α₂ dζ̄` in the cylindrical frame.
#[derive(Clone, Debug, PartialEq)]
pub struct OneForm {
    pub dzeta: Vec<M2>,
    pub dzeta_bar: Vec<M2>,
}

impl OneForm {
    pub fn zero(n: usize) -> Self {
        Self { dzeta: vec![M2::zeros(); n], dzeta_bar: vec![M2::zeros(); n] }
    }

    /// Build from real components `α = α_s ds + α_θ dθ`.
    pub fn from_real(alpha_s: &[M2], alpha_theta: &[M2]) -> Self {
        // ds = (dζ + dζ̄)/2, dθ = (dζ − dζ̄)/(2i)
        let half = re(0.5);
        let half_over_i = Complex64::new(0.0, -0.5);
        Self {
            dzeta: alpha_s.iter().zip(alpha_theta).map(|(s, t)| s * half + t * half_over_i).collect(),
            dzeta_bar: alpha_s.iter().zip(alpha_theta).map(|(s, t)| s * half - t * half_over_i).collect(),
        }
    }

    /// Real components `(α_s, α_θ)`.
    pub fn real_components(&self) -> (Vec<M2>, Vec<M2>) {
        let s = self.dzeta.iter().zip(&self.dzeta_bar).map(|(a, b)| a + b).collect();
        let t = self.dzeta.iter().zip(&self.dzeta_bar).map(|(a, b)| (a - b) * linalg::I).collect();
        (s, t)
    }

    /// `α^{0,1} = −(α^{1,0})†` pointwise, i.e. α is su-valued.
    pub fn is_anti_hermitian(&self, tol: f64) -> bool {
        self.dzeta
            .iter()
            .zip(&self.dzeta_bar)
            .all(|(a, b)| linalg::norm(&(b + adj(a))) <= tol * (1.0 + linalg::norm(a)))
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            dzeta: self.dzeta.iter().map(|x| x * s).collect(),
            dzeta_bar: self.dzeta_bar.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &OneForm) -> Self {
        Self {
            dzeta: self.dzeta.iter().zip(&other.dzeta).map(|(a, b)| a + b).collect(),
            dzeta_bar: self.dzeta_bar.iter().zip(&other.dzeta_bar).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Covariant Dolbeault operators of a connection in the cylindrical frame.
///
/// The Hodge star is that of the cylinder metric `ds² + dθ²`, so
/// `⋆dζ = −i dζ`, `⋆dζ̄ = i dζ̄` and `⋆(ds∧dθ) = 1`.
pub struct Dolbeault<'g> {
    grid: &'g PolarGrid,
    stencil: Stencil,
    a: Vec<M2>,
    b: Vec<M2>,
}

impl<'g> Dolbeault<'g> {
    pub fn new(connection: &'g UnitaryConnection, stencil: Stencil) -> Result<Self> {
        stencil.check_grid(connection.grid())?;
        let (a, b) = connection.log_coefficients();
        Ok(Self { grid: connection.grid(), stencil, a, b })
    }

    pub fn grid(&self) -> &PolarGrid {
        self.grid
    }

    /// dζ̄ coefficient of `∂̄_A u`.
    pub fn dbar_section(&self, u: &[M2]) -> Vec<M2> {
        let d = self.stencil.d_zeta_bar(self.grid, u);
        exec::map_range(u.len(), |k| d[k] + comm(&self.b[k], &u[k]))
    }

    /// dζ coefficient of `∂_A u`.
    pub fn del_section(&self, u: &[M2]) -> Vec<M2> {
        let d = self.stencil.d_zeta(self.grid, u);
        exec::map_range(u.len(), |k| d[k] + comm(&self.a[k], &u[k]))
    }

    /// `d_A u = ∂_A u + ∂̄_A u`.
    pub fn d_section(&self, u: &[M2]) -> OneForm {
        OneForm { dzeta: self.del_section(u), dzeta_bar: self.dbar_section(u) }
    }

    /// dζ∧dζ̄ coefficient of `d_A α = dα + [A∧α]`.
    pub fn d_one_form(&self, alpha: &OneForm) -> Vec<M2> {
        let d2 = self.stencil.d_zeta(self.grid, &alpha.dzeta_bar);
        let d1 = self.stencil.d_zeta_bar(self.grid, &alpha.dzeta);
        exec::map_range(alpha.dzeta.len(), |k| {
            d2[k] - d1[k] + comm(&self.a[k], &alpha.dzeta_bar[k]) - comm(&self.b[k], &alpha.dzeta[k])
        })
    }

    /// `d_A α` computed from the real components `α_s ds + α_θ dθ`, returned as
    /// a dζ∧dζ̄ coefficient. Independent of [`Dolbeault::d_one_form`].
    pub fn d_one_form_real(&self, alpha: &OneForm) -> Vec<M2> {
        let (s, t) = alpha.real_components();
        let (as_, at) = OneForm { dzeta: self.a.clone(), dzeta_bar: self.b.clone() }.real_components();
        let dt_s = self.stencil.d_s(self.grid, &t);
        let ds_t = self.stencil.d_theta(self.grid, &s);
        // (∂_s α_θ − ∂_θ α_s + [A_s, α_θ] − [A_θ, α_s]) ds∧dθ, ds∧dθ = (i/2) dζ∧dζ̄
        let to_zeta = Complex64::new(0.0, 0.5);
        exec::map_range(s.len(), |k| {
            (dt_s[k] - ds_t[k] + comm(&as_[k], &t[k]) - comm(&at[k], &s[k])) * to_zeta
        })
    }

    /// `d_A^* α = −⋆d_A⋆α` (a 0-form).
    pub fn d_star_one_form(&self, alpha: &OneForm) -> Vec<M2> {
        let d2 = self.stencil.d_zeta(self.grid, &alpha.dzeta_bar);
        let d1 = self.stencil.d_zeta_bar(self.grid, &alpha.dzeta);
        exec::map_range(alpha.dzeta.len(), |k| {
            (d2[k] + comm(&self.a[k], &alpha.dzeta_bar[k]) + d1[k] + comm(&self.b[k], &alpha.dzeta[k])) * re(-2.0)
        })
    }

    /// `d_A^* α = −(∇_s α_s + ∇_θ α_θ)` from real components. Independent of
    /// [`Dolbeault::d_star_one_form`].
    pub fn d_star_real(&self, alpha: &OneForm) -> Vec<M2> {
        let (s, t) = alpha.real_components();
        let (as_, at) = OneForm { dzeta: self.a.clone(), dzeta_bar: self.b.clone() }.real_components();
        let ds_s = self.stencil.d_s(self.grid, &s);
        let dt_t = self.stencil.d_theta(self.grid, &t);
        exec::map_range(s.len(), |k| -(ds_s[k] + comm(&as_[k], &s[k]) + dt_t[k] + comm(&at[k], &t[k])))
    }

    /// dζ∧dζ̄ coefficient of `d_A(⋆α)` (equivalently `−⋆d_A^*α`), computed
    /// from real components.
    pub fn d_of_star_real(&self, alpha: &OneForm) -> Vec<M2> {
        // ⋆(α_s ds + α_θ dθ) = α_s dθ − α_θ ds
        let (s, t) = alpha.real_components();
        let neg_t: Vec<M2> = t.iter().map(|x| -x).collect();
        let star = OneForm::from_real(&neg_t, &s);
        self.d_one_form_real(&star)
    }

    /// dζ̄∧dζ coefficient of `∂̄_A(ψ dζ)` for a (1,0)-form.
    pub fn dbar_one_zero(&self, psi: &[M2]) -> Vec<M2> {
        self.dbar_section(psi)
    }
}
