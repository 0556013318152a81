//! Rank-1 sign local systems on punctured surfaces, their twisted cohomology,
//! and neck-local data for the fiber metric and the flatness argument.
//!
//! Cohomology is computed two ways with exact rational arithmetic:
//!
//! * on the presentation 2-complex of `π₁(Σ^×) = ⟨a, b, c | Π[aᵢ,bᵢ] c₁⋯c_k⟩`
//!   (one vertex, `2γ + k` edges, one 2-cell), with the 2-cell boundary map
//!   given by Fox derivatives, and
//! * for `k ≥ 1`, on the wedge of `2γ + k − 1` circles obtained by using the
//!   relation to eliminate `c_k`.

use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::fields::{curvature_coefficients, Dolbeault, HiggsField, UnitaryConnection};
use crate::grid::{Norms, PolarGrid, Stencil};
use crate::linalg::{self, comm, re, sigma3, M2};
use crate::surface::Frame;

/// Monodromy signs `ε = ±1` on the standard generators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignMap {
    pub a: Vec<i8>,
    pub b: Vec<i8>,
    pub c: Vec<i8>,
}

impl SignMap {
    /// `ε(aᵢ) = ε(bᵢ) = +1`, `ε(c_j) = −1`.
    pub fn twisted(genus: usize, punctures: usize) -> Self {
        Self { a: vec![1; genus], b: vec![1; genus], c: vec![-1; punctures] }
    }

    pub fn trivial(genus: usize, punctures: usize) -> Self {
        Self { a: vec![1; genus], b: vec![1; genus], c: vec![1; punctures] }
    }

    pub fn is_trivial(&self) -> bool {
        self.a.iter().chain(&self.b).chain(&self.c).all(|&e| e == 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalSystemPresentation {
    genus: usize,
    punctures: usize,
    signs: SignMap,
}

impl LocalSystemPresentation {
    pub fn genus(&self) -> usize {
        self.genus
    }

    pub fn punctures(&self) -> usize {
        self.punctures
    }

    pub fn signs(&self) -> &SignMap {
        &self.signs
    }

    /// Generators `a₁..a_γ, b₁..b_γ, c₁..c_k`.
    pub fn generator_count(&self) -> usize {
        2 * self.genus + self.punctures
    }

    /// Rank of the free group `π₁(Σ^×)` for `k ≥ 1`.
    pub fn free_rank(&self) -> Option<usize> {
        (self.punctures >= 1).then(|| 2 * self.genus + self.punctures - 1)
    }

    pub fn is_twisted(&self) -> bool {
        !self.signs.is_trivial()
    }

    /// `χ(Σ^×) = 2 − 2γ − k`.
    pub fn euler_characteristic(&self) -> i64 {
        2 - 2 * self.genus as i64 - self.punctures as i64
    }
}

/// Builds a presentation; without `signs` every puncture carries `−1` and
/// the handle generators `+1`.
pub fn build_local_system(genus: i64, punctures: i64, signs: Option<SignMap>) -> Result<LocalSystemPresentation> {
    if genus < 2 {
        return Err(Error::InvalidGenus(genus));
    }
    if punctures < 0 {
        return Err(Error::InvalidParameter(format!("puncture count {punctures} is negative")));
    }
    let (g, k) = (genus as usize, punctures as usize);
    let signs = signs.unwrap_or_else(|| SignMap::twisted(g, k));
    if signs.a.len() != g || signs.b.len() != g || signs.c.len() != k {
        return Err(Error::InvalidParameter("sign map does not match (γ, k)".into()));
    }
    if signs.a.iter().chain(&signs.b).chain(&signs.c).any(|&e| e != 1 && e != -1) {
        return Err(Error::InvalidParameter("signs must be ±1".into()));
    }
    let product: i64 = signs.c.iter().map(|&e| e as i64).product();
    if product != 1 {
        return Err(Error::InconsistentMonodromy(format!(
            "product of puncture signs is {product}; the surface relation forces +1"
        )));
    }
    Ok(LocalSystemPresentation { genus: g, punctures: k, signs })
}

type Matrix = Vec<Vec<Rational64>>;

/// Rank by Gaussian elimination over ℚ.
#[allow(clippy::needless_range_loop)] // rows of m are borrowed twice
pub fn exact_rank(mut m: Matrix) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(rank, pivot);
        let p = m[rank][col];
        for r in 0..rows {
            if r != rank && !m[r][col].is_zero() {
                let factor = m[r][col] / p;
                for c in col..cols {
                    let v = m[rank][c];
                    m[r][c] -= factor * v;
                }
            }
        }
        rank += 1;
    }
    rank
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Betti {
    pub h0: usize,
    pub h1: usize,
    pub h2: usize,
}

impl Betti {
    pub fn euler(&self) -> i64 {
        self.h0 as i64 - self.h1 as i64 + self.h2 as i64
    }
}

fn q(x: i64) -> Rational64 {
    Rational64::from_integer(x)
}

/// Coboundaries of the presentation 2-complex: `d⁰` is `(2γ+k)×1`, `d¹` is
/// `1×(2γ+k)`.
pub fn presentation_complex(pres: &LocalSystemPresentation) -> (Matrix, Matrix) {
    let s = &pres.signs;
    let eps: Vec<i64> = s.a.iter().chain(&s.b).chain(&s.c).map(|&e| e as i64).collect();
    let d0 = eps.iter().map(|&e| vec![q(e - 1)]).collect();
    let mut row = Vec::with_capacity(eps.len());
    // ∂[a,b]/∂a = 1 − aba⁻¹, ∂[a,b]/∂b = a − aba⁻¹b⁻¹, evaluated under ε;
    // commutators evaluate to 1 so the prefixes before cⱼ are Π_{l<j} ε(c_l).
    row.extend(s.b.iter().map(|&b| q(1 - b as i64)));
    row.extend(s.a.iter().map(|&a| q(a as i64 - 1)));
    let mut prefix = 1i64;
    for &c in &s.c {
        row.push(q(prefix));
        prefix *= c as i64;
    }
    (d0, vec![row])
}

fn presentation_betti(pres: &LocalSystemPresentation) -> Result<Betti> {
    let (d0, d1) = presentation_complex(pres);
    let n1 = d0.len();
    // d¹ ∘ d⁰ = ε(relation) − 1 must vanish.
    let composite: Rational64 = d1[0].iter().zip(&d0).map(|(x, col)| x * col[0]).sum();
    if !composite.is_zero() {
        return Err(Error::InconsistentMonodromy("d¹d⁰ ≠ 0".into()));
    }
    let r0 = exact_rank(d0);
    let r1 = exact_rank(d1);
    Ok(Betti { h0: 1 - r0, h1: n1 - r0 - r1, h2: 1 - r1 })
}

fn graph_betti(pres: &LocalSystemPresentation) -> Option<Betti> {
    let m = pres.free_rank()?;
    let s = &pres.signs;
    let d0: Matrix = s.a.iter().chain(&s.b).chain(&s.c).take(m).map(|&e| vec![q(e as i64 - 1)]).collect();
    let r0 = exact_rank(d0);
    Some(Betti { h0: 1 - r0, h1: m - r0, h2: 0 })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwistedCohomology {
    pub betti: Betti,
    /// Same numbers from the wedge-of-circles model (`k ≥ 1`).
    pub graph: Option<Betti>,
}

impl TwistedCohomology {
    pub fn h0(&self) -> usize {
        self.betti.h0
    }
    pub fn h1(&self) -> usize {
        self.betti.h1
    }
    pub fn h2(&self) -> usize {
        self.betti.h2
    }
}

pub fn twisted_cohomology(pres: &LocalSystemPresentation) -> Result<TwistedCohomology> {
    let betti = presentation_betti(pres)?;
    let graph = graph_betti(pres);
    if let Some(g) = graph {
        if g != betti {
            return Err(Error::Solver(format!("cell models disagree: {betti:?} vs {g:?}")));
        }
    }
    Ok(TwistedCohomology { betti, graph })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EulerCheck {
    pub chi: i64,
    pub expected: i64,
    pub consistent: bool,
}

pub fn euler_check(pres: &LocalSystemPresentation) -> Result<EulerCheck> {
    let chi = twisted_cohomology(pres)?.betti.euler();
    let expected = pres.euler_characteristic();
    Ok(EulerCheck { chi, expected, consistent: chi == expected })
}

/// `h¹` of the twisted system with `4(γ − 1)` punctures.
pub fn fiber_dimension(genus: i64) -> Result<usize> {
    let pres = build_local_system(genus, 4 * (genus - 1), None)?;
    Ok(twisted_cohomology(&pres)?.h1())
}

/// `(u dζ + v dζ̄) ⊗ σ₃` on a neck (or the same in the `dz` frame).
#[derive(Clone, Debug, PartialEq)]
pub struct NeckLineBundleForm {
    grid: PolarGrid,
    frame: Frame,
    u: Vec<Complex64>,
    v: Vec<Complex64>,
}

impl NeckLineBundleForm {
    pub fn new(grid: PolarGrid, frame: Frame, u: Vec<Complex64>, v: Vec<Complex64>) -> Result<Self> {
        if u.len() != grid.len() || v.len() != grid.len() {
            return Err(Error::GridMismatch("line-bundle form samples do not match grid".into()));
        }
        Ok(Self { grid, frame, u, v })
    }

    /// The real form `i f σ₃ (dz/z − dz̄/z̄)` for real `f`.
    pub fn real(grid: &PolarGrid, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Self {
        let u: Vec<Complex64> = grid.sample_log(|s, t| Complex64::new(0.0, f(s, t)));
        let v = u.iter().map(|x| -x.conj()).collect();
        Self { grid: grid.clone(), frame: Frame::DzOverZ, u, v }
    }

    /// `α_s ds + α_θ dθ` tensored with `iσ₃`, for real `α_s`, `α_θ`.
    pub fn from_real_components(grid: &PolarGrid, alpha_s: &[f64], alpha_theta: &[f64]) -> Result<Self> {
        if alpha_s.len() != grid.len() || alpha_theta.len() != grid.len() {
            return Err(Error::GridMismatch("component samples do not match grid".into()));
        }
        // ds = (dζ + dζ̄)/2, dθ = (dζ − dζ̄)/(2i)
        let u = alpha_s.iter().zip(alpha_theta).map(|(&a, &b)| Complex64::new(0.0, 1.0) * Complex64::new(0.5 * a, -0.5 * b)).collect::<Vec<_>>();
        let v = u.iter().map(|x| -x.conj()).collect();
        Ok(Self { grid: grid.clone(), frame: Frame::DzOverZ, u, v })
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { u: self.u.iter().map(|x| x * s).collect(), v: self.v.iter().map(|x| x * s).collect(), ..self.clone() }
    }

    /// `(u, v)` in the cylindrical frame.
    pub fn log_coefficients(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        match self.frame {
            Frame::DzOverZ => (self.u.clone(), self.v.clone()),
            Frame::Dz => {
                let u = self.u.iter().enumerate().map(|(k, x)| x * self.grid.z_at(k)).collect();
                let v = self.v.iter().enumerate().map(|(k, x)| x * self.grid.z_at(k).conj()).collect();
                (u, v)
            }
        }
    }

    /// Matrix coefficients `(β₁, β₂)` of `β₁ dζ + β₂ dζ̄`.
    pub fn matrices(&self) -> (Vec<M2>, Vec<M2>) {
        let (u, v) = self.log_coefficients();
        (u.iter().map(|x| sigma3() * *x).collect(), v.iter().map(|x| sigma3() * *x).collect())
    }

    /// su-valued: `v = −ū` pointwise.
    pub fn is_real(&self, tol: f64) -> bool {
        let (u, v) = self.log_coefficients();
        u.iter().zip(&v).all(|(a, b)| (a.conj() + b).norm() <= tol * (1.0 + a.norm()))
    }

    /// `max |[φ̂, β_i]|`: zero iff the values lie in the centraliser of Φ.
    pub fn commutator_defect(&self, phi: &HiggsField) -> Result<f64> {
        self.grid.check_same(phi.grid())?;
        let p = phi.log_coefficient();
        let (b1, b2) = self.matrices();
        Ok(p.iter()
            .zip(b1.iter().zip(&b2))
            .map(|(p, (x, y))| linalg::norm(&comm(p, x)).max(linalg::norm(&comm(p, y))))
            .fold(0.0, f64::max))
    }
}

fn trapezoid_weights(grid: &PolarGrid) -> Vec<f64> {
    let rows: Vec<usize> = grid.interior_rows().collect();
    let w_s = grid.ds();
    let w_t = grid.dtheta();
    let mut w = vec![0.0; grid.len()];
    for (n, &i) in rows.iter().enumerate() {
        let end = n == 0 || n + 1 == rows.len();
        for j in 0..grid.n_theta() {
            w[grid.index(i, j)] = if end { 0.5 } else { 1.0 } * w_s * w_t;
        }
    }
    w
}

/// `G(α, β) = 2ℜ ∫ Tr(α₁†β₁ + α₂†β₂) ds dθ` over the nominal annulus, the
/// conformally invariant L² pairing of End(E)-valued 1-forms.
pub fn metric_pairing(alpha: &NeckLineBundleForm, beta: &NeckLineBundleForm) -> Result<f64> {
    if alpha.frame != beta.frame {
        return Err(Error::FrameMismatch(format!("{:?} vs {:?}", alpha.frame, beta.frame)));
    }
    alpha.grid.check_same(&beta.grid)?;
    let (au, av) = alpha.log_coefficients();
    let (bu, bv) = beta.log_coefficients();
    let w = trapezoid_weights(&alpha.grid);
    // Tr(σ₃σ₃) = 2
    let sum: f64 = (0..w.len())
        .filter(|&k| w[k] != 0.0)
        .map(|k| w[k] * 2.0 * (au[k].conj() * bu[k] + av[k].conj() * bv[k]).re)
        .sum();
    Ok(2.0 * sum)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatTranslateReport {
    /// `sup |[β∧β]|`.
    pub bracket: f64,
    /// `sup |d_A β|`.
    pub closedness: f64,
    /// `sup |F_B|` for `B = A + β`.
    pub curvature: f64,
    /// `sup |d_B γ − d_A γ|` over the test sections.
    pub translate: f64,
}

/// Checks that translating a flat diagonal connection by a closed
/// line-bundle-valued form keeps it flat and acts trivially on `L^ℝ`.
pub fn flat_translate_check(
    a: &UnitaryConnection,
    beta: &NeckLineBundleForm,
    test_sections: &[Vec<f64>],
    stencil: Stencil,
    tolerance: f64,
) -> Result<FlatTranslateReport> {
    let grid = a.grid();
    grid.check_same(beta.grid())?;
    let (b1, b2) = beta.matrices();
    let bracket = exec::map_range(grid.len(), |k| comm(&b1[k], &b2[k]) * re(2.0));
    let ops = Dolbeault::new(a, stencil)?;
    let form = crate::fields::OneForm { dzeta: b1.clone(), dzeta_bar: b2.clone() };
    let closedness = Norms::of(grid, &ops.d_one_form(&form)).sup;
    if closedness > tolerance {
        return Err(Error::PreconditionViolation(format!("d_A β has sup {closedness:.3e} > {tolerance:.1e}")));
    }
    let (ah, bh) = a.log_coefficients();
    let a_b: Vec<M2> = ah.iter().zip(&b1).map(|(x, y)| x + y).collect();
    let b_b: Vec<M2> = bh.iter().zip(&b2).map(|(x, y)| x + y).collect();
    let curvature = Norms::of(grid, &curvature_coefficients(grid, stencil, &a_b, &b_b)).sup;

    let mut translate: f64 = 0.0;
    for f in test_sections {
        if f.len() != grid.len() {
            return Err(Error::GridMismatch("test section does not match grid".into()));
        }
        let gamma: Vec<M2> = f.iter().map(|&x| sigma3() * Complex64::new(0.0, x)).collect();
        let d_a = ops.d_section(&gamma);
        for k in 0..grid.len() {
            if !grid.is_interior(k) {
                continue;
            }
            // d_B γ − d_A γ = [β, γ]
            let diff1 = d_a.dzeta[k] + comm(&b1[k], &gamma[k]) - d_a.dzeta[k];
            let diff2 = d_a.dzeta_bar[k] + comm(&b2[k], &gamma[k]) - d_a.dzeta_bar[k];
            translate = translate.max(linalg::norm(&diff1)).max(linalg::norm(&diff2));
        }
    }
    Ok(FlatTranslateReport { bracket: Norms::of(grid, &bracket).sup, closedness, curvature, translate })
}

/// `sup |[Φ ∧ d_A γ]|` for a section `γ` of `L_Φ`.
pub fn line_bundle_parallel_check(
    a: &UnitaryConnection,
    phi: &HiggsField,
    gamma: &[M2],
    stencil: Stencil,
    tolerance: f64,
) -> Result<f64> {
    let grid = a.grid();
    grid.check_same(phi.grid())?;
    let p = phi.log_coefficient();
    let centraliser = p.iter().zip(gamma).map(|(x, y)| linalg::norm(&comm(x, y))).fold(0.0, f64::max);
    if centraliser > tolerance {
        return Err(Error::PreconditionViolation(format!("[Φ, γ] has sup {centraliser:.3e}; γ is not in L_Φ")));
    }
    let ops = Dolbeault::new(a, stencil)?;
    // [Φ ∧ d_A γ] = [φ̂, ∂̄_A γ] dζ∧dζ̄
    let dbar = ops.dbar_section(gamma);
    let defect: Vec<M2> = p.iter().zip(&dbar).map(|(x, y)| comm(x, y)).collect();
    Ok(Norms::of(grid, &defect).sup)
}
