//! The linearized self-duality operator, the identities relating `d_A` to
//! `∂̄_A` on su-valued 1-forms, and the mode-wise `∂̄` family on a pinching
//! neck.

pub mod bfamily;
pub mod divergence;
pub mod graph;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::fields::{Dolbeault, HiggsField, OneForm, UnitaryConnection};
use crate::grid::{Norms, PolarGrid, Stencil};
use crate::linalg::{self, adj, comm, re, M2};

pub use bfamily::{
    analytic_kernel_dimension, assemble_b_family, small_singular_values, BFamilyConfig, BOperatorFamily, Geometry,
    ModeBlock, ModeSpectrum, NodeCondition, OuterCap, RowKind, SpectrumReport, Weight, KERNEL_THRESHOLD,
};
pub use divergence::{l2_divergence_scan, DivergenceScan};
pub use graph::{graph_continuity_experiment, graph_projection, window_distance, ContinuityRow, GraphProjection, ILL_CONDITIONED};

const STRUCTURE_TOL: f64 = 1e-12;

/// A tangent vector `(α, φ)`: an su-valued 1-form and a trace-free
/// (1,0)-form `φ = φ₁ dζ`, both in the cylindrical frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedInput {
    alpha: OneForm,
    phi: Vec<M2>,
}

impl LinearizedInput {
    pub fn new(alpha: OneForm, phi: Vec<M2>) -> Result<Self> {
        if !alpha.is_anti_hermitian(STRUCTURE_TOL) {
            return Err(Error::PreconditionViolation("α is not su-valued".into()));
        }
        if phi.iter().any(|p| linalg::trace(p).norm() > STRUCTURE_TOL * (1.0 + linalg::norm(p))) {
            return Err(Error::PreconditionViolation("φ is not trace-free".into()));
        }
        if phi.len() != alpha.dzeta.len() {
            return Err(Error::GridMismatch("α and φ have different sizes".into()));
        }
        Ok(Self { alpha, phi })
    }

    pub fn zero(n: usize) -> Self {
        Self { alpha: OneForm::zero(n), phi: vec![M2::zeros(); n] }
    }

    pub fn alpha(&self) -> &OneForm {
        &self.alpha
    }

    pub fn phi(&self) -> &[M2] {
        &self.phi
    }

    pub fn scaled_add(&self, lambda: f64, other: &Self) -> Self {
        Self {
            alpha: self.alpha.add(&other.alpha.scaled(re(lambda))),
            phi: self.phi.iter().zip(&other.phi).map(|(a, b)| a + b * re(lambda)).collect(),
        }
    }
}

/// Both components of `D(α, φ)` as `dζ∧dζ̄` coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedOutput {
    /// `d_A α + [Φ∧φ*] + [Φ*∧φ]`.
    pub first: Vec<M2>,
    /// `∂̄_A φ + [α^{0,1}∧Φ]`.
    pub second: Vec<M2>,
}

pub fn linearized_apply(
    a: &UnitaryConnection,
    phi_field: &HiggsField,
    input: &LinearizedInput,
    stencil: Stencil,
) -> Result<LinearizedOutput> {
    if a.frame() != phi_field.frame() {
        return Err(Error::FrameMismatch(format!("{:?} vs {:?}", a.frame(), phi_field.frame())));
    }
    let grid = a.grid();
    grid.check_same(phi_field.grid())?;
    if input.phi.len() != grid.len() {
        return Err(Error::GridMismatch("linearized input does not match grid".into()));
    }
    let ops = Dolbeault::new(a, stencil)?;
    let p = phi_field.log_coefficient();
    let d_alpha = ops.d_one_form(&input.alpha);
    // ∂̄_A(φ₁ dζ) = (∂_ζ̄ φ₁ + [b̂, φ₁]) dζ̄∧dζ
    let dbar_phi = ops.dbar_section(&input.phi);
    let first = exec::map_range(grid.len(), |k| {
        d_alpha[k] + comm(&p[k], &adj(&input.phi[k])) + comm(&input.phi[k], &adj(&p[k]))
    });
    let second = exec::map_range(grid.len(), |k| -dbar_phi[k] + comm(&p[k], &input.alpha.dzeta_bar[k]));
    Ok(LinearizedOutput { first, second })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HodgeDefects {
    /// `sup |d_A α − 2ℜ ∂̄_A α^{1,0}|`.
    pub real_part: f64,
    /// `sup |−⋆d_A^*α − 2ℑ ∂̄_A α^{1,0}|`.
    pub imaginary_part: f64,
}

impl HodgeDefects {
    pub fn max(&self) -> f64 {
        self.real_part.max(self.imaginary_part)
    }
}

/// `Y` with `∂̄_A α^{1,0} = Y dζ∧dζ̄`, from a value of `∂_ζ̄ α₁`.
fn dbar_one_zero(ops_b: &[M2], alpha1: &[M2], d_bar: &[M2]) -> Vec<M2> {
    exec::map_range(alpha1.len(), |k| -(d_bar[k] + comm(&ops_b[k], &alpha1[k])))
}

fn hodge_compare(ops: &Dolbeault, a: &UnitaryConnection, alpha: &OneForm, y: &[M2]) -> HodgeDefects {
    let grid = a.grid();
    // Left-hand sides from real (s, θ) exterior calculus.
    let lhs_real = ops.d_one_form_real(alpha);
    let lhs_imag: Vec<M2> = ops.d_star_real(alpha).iter().map(|x| x * linalg::c(0.0, -0.5)).collect();
    // 2ℜY = Y + Y†, 2ℑY = −i(Y − Y†) for the real structure of su-valued 2-forms.
    let re2: Vec<M2> = y.iter().map(|x| x + adj(x)).collect();
    let im2: Vec<M2> = y.iter().map(|x| (x - adj(x)) * linalg::c(0.0, -1.0)).collect();
    let diff = |a: &[M2], b: &[M2]| -> Vec<M2> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    HodgeDefects {
        real_part: Norms::of(grid, &diff(&lhs_real, &re2)).sup,
        imaginary_part: Norms::of(grid, &diff(&lhs_imag, &im2)).sup,
    }
}

/// Compares the real-calculus left-hand sides with the complex right-hand
/// sides on the same grid and stencil.
pub fn hodge_identity_check(a: &UnitaryConnection, alpha: &OneForm, stencil: Stencil) -> Result<HodgeDefects> {
    if !alpha.is_anti_hermitian(STRUCTURE_TOL) {
        return Err(Error::PreconditionViolation("α^{0,1} ≠ −(α^{1,0})*".into()));
    }
    let ops = Dolbeault::new(a, stencil)?;
    let (_, b) = a.log_coefficients();
    let d_bar = stencil.d_zeta_bar(a.grid(), &alpha.dzeta);
    let y = dbar_one_zero(&b, &alpha.dzeta, &d_bar);
    Ok(hodge_compare(&ops, a, alpha, &y))
}

/// As [`hodge_identity_check`] with the right-hand sides built from the
/// exact `∂_ζ̄ α₁`; the defects then measure discretization error.
pub fn hodge_identity_check_exact(
    a: &UnitaryConnection,
    alpha: &OneForm,
    exact_dbar_alpha1: &[M2],
    stencil: Stencil,
) -> Result<HodgeDefects> {
    if !alpha.is_anti_hermitian(STRUCTURE_TOL) {
        return Err(Error::PreconditionViolation("α^{0,1} ≠ −(α^{1,0})*".into()));
    }
    let ops = Dolbeault::new(a, stencil)?;
    let (_, b) = a.log_coefficients();
    let y = dbar_one_zero(&b, &alpha.dzeta, exact_dbar_alpha1);
    Ok(hodge_compare(&ops, a, alpha, &y))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WSpaceReport {
    pub d_a: f64,
    pub d_a_star: f64,
    pub bracket: f64,
    pub member: bool,
}

/// Defects of `d_A α = 0`, `d_A^* α = 0`, `[α^{0,1}∧Φ] = 0`.
pub fn w_space_check(
    a: &UnitaryConnection,
    phi: &HiggsField,
    alpha: &OneForm,
    stencil: Stencil,
    tolerance: f64,
) -> Result<WSpaceReport> {
    let grid = a.grid();
    grid.check_same(phi.grid())?;
    let ops = Dolbeault::new(a, stencil)?;
    let p = phi.log_coefficient();
    let d_a = Norms::of(grid, &ops.d_one_form(alpha)).sup;
    let d_a_star = Norms::of(grid, &ops.d_star_one_form(alpha)).sup;
    let bracket: Vec<M2> = p.iter().zip(&alpha.dzeta_bar).map(|(x, y)| comm(x, y)).collect();
    let bracket = Norms::of(grid, &bracket).sup;
    Ok(WSpaceReport { d_a, d_a_star, bracket, member: d_a <= tolerance && d_a_star <= tolerance && bracket <= tolerance })
}

/// A smooth matrix field `Σ_j M_j cos(k_j s + m_j θ + φ_j)` with exact
/// derivatives, used as test data.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothField {
    terms: Vec<(M2, f64, f64, f64)>,
}

impl SmoothField {
    /// Random su(2)-valued field with `terms` modes, `|k| ≤ 2`, `|m| ≤ 3`.
    pub fn random_su2<R: Rng>(rng: &mut R, terms: usize, scale: f64) -> Self {
        let terms = (0..terms)
            .map(|_| {
                let k = rng.gen_range(-2.0..2.0);
                let m = rng.gen_range(-3i32..=3) as f64;
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                (linalg::random_su2(rng, scale), k, m, phase)
            })
            .collect();
        Self { terms }
    }

    /// `(f, ∂_s f, ∂_θ f)` at `(s, θ)`.
    pub fn eval(&self, s: f64, theta: f64) -> (M2, M2, M2) {
        let mut f = M2::zeros();
        let mut fs = M2::zeros();
        let mut ft = M2::zeros();
        for (m, k, n, phase) in &self.terms {
            let arg = k * s + n * theta + phase;
            f += m * re(arg.cos());
            fs -= m * re(k * arg.sin());
            ft -= m * re(n * arg.sin());
        }
        (f, fs, ft)
    }
}

/// An su-valued 1-form `α_s ds + α_θ dθ` with exact `∂_ζ̄ α₁`.
pub struct SmoothOneForm {
    pub alpha_s: SmoothField,
    pub alpha_theta: SmoothField,
}

impl SmoothOneForm {
    pub fn random<R: Rng>(rng: &mut R, terms: usize, scale: f64) -> Self {
        Self { alpha_s: SmoothField::random_su2(rng, terms, scale), alpha_theta: SmoothField::random_su2(rng, terms, scale) }
    }

    /// Samples `(α, ∂_ζ̄ α₁)` on the grid.
    pub fn sample(&self, grid: &PolarGrid) -> (OneForm, Vec<M2>) {
        let vals = grid.sample_log(|s, t| (self.alpha_s.eval(s, t), self.alpha_theta.eval(s, t)));
        let half = re(0.5);
        let mi = linalg::c(0.0, -0.5);
        let a_s: Vec<M2> = vals.iter().map(|v| v.0 .0).collect();
        let a_t: Vec<M2> = vals.iter().map(|v| v.1 .0).collect();
        // α₁ = (α_s − iα_θ)/2, ∂_ζ̄ = (∂_s + i∂_θ)/2
        let dbar = vals
            .iter()
            .map(|((_, ss, st), (_, ts, tt))| {
                let d_s = ss * half + ts * mi;
                let d_t = st * half + tt * mi;
                (d_s + d_t * linalg::I) * half
            })
            .collect();
        (OneForm::from_real(&a_s, &a_t), dbar)
    }

    /// The same data read as a unitary connection `A_s ds + A_θ dθ`.
    pub fn as_connection(&self, grid: &PolarGrid) -> Result<UnitaryConnection> {
        let (form, _) = self.sample(grid);
        UnitaryConnection::new(grid.clone(), crate::surface::Frame::DzOverZ, form.dzeta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, sigma3};
    use crate::models::{model_pair, ModelParameters};
    use crate::surface::{AnnulusChart, Side};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(g: &PolarGrid) -> (UnitaryConnection, HiggsField) {
        let chart = AnnulusChart::with_grid(Side::Plus, g.clone()).unwrap();
        let p = model_pair(ModelParameters::new(0.3, c(1.0, 0.5)).unwrap(), &chart).unwrap();
        (p.connection, p.higgs)
    }

    fn grid() -> PolarGrid {
        PolarGrid::annulus(0.1, 1.0, 48, 32).unwrap()
    }

    #[test]
    fn linearization_basics() {
        let g = grid();
        let (a, phi) = model(&g);
        let zero = linearized_apply(&a, &phi, &LinearizedInput::zero(g.len()), Stencil::default()).unwrap();
        assert!(zero.first.iter().chain(&zero.second).all(|x| linalg::norm(x) == 0.0));

        let eps = 0.3;
        let alpha = OneForm { dzeta: vec![sigma3() * c(eps, 0.0); g.len()], dzeta_bar: vec![sigma3() * c(-eps, 0.0); g.len()] };
        let out = linearized_apply(&a, &phi, &LinearizedInput::new(alpha, vec![M2::zeros(); g.len()]).unwrap(), Stencil::default()).unwrap();
        assert!(Norms::of(&g, &out.first).sup == 0.0 && Norms::of(&g, &out.second).sup == 0.0);

        let m = c(0.4, -0.2);
        let phi_in = vec![linalg::off_diag(m, c(0.0, 0.0)); g.len()];
        let out = linearized_apply(&a, &phi, &LinearizedInput::new(OneForm::zero(g.len()), phi_in).unwrap(), Stencil::default()).unwrap();
        // [Cσ₃, m̄E₂₁] + [mE₁₂, C̄σ₃] = −2Cm̄ E₂₁ − 2C̄m E₁₂
        let cc = c(1.0, 0.5);
        let want = linalg::off_diag(-2.0 * cc.conj() * m, -2.0 * cc * m.conj());
        for x in &out.first {
            assert!(linalg::norm(&(x - want)) < 1e-10);
        }
    }

    #[test]
    fn hodge_identities_hold() {
        let g = PolarGrid::annulus((-1.0f64).exp(), 1.0, 64, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = SmoothOneForm::random(&mut rng, 3, 0.5).as_connection(&g).unwrap();
        let (alpha, dbar) = SmoothOneForm::random(&mut rng, 3, 1.0).sample(&g);
        let d = hodge_identity_check(&a, &alpha, Stencil::default()).unwrap();
        assert!(d.max() < 1e-12, "{d:?}");
        let e = hodge_identity_check_exact(&a, &alpha, &dbar, Stencil::default()).unwrap();
        assert!(e.max() < 0.1, "{e:?}");
        let z = hodge_identity_check(&a, &OneForm::zero(g.len()), Stencil::default()).unwrap();
        assert_eq!(z.max(), 0.0);
        let bad = OneForm { dzeta: vec![sigma3(); g.len()], dzeta_bar: vec![sigma3(); g.len()] };
        assert!(hodge_identity_check(&a, &bad, Stencil::default()).is_err());
    }

    #[test]
    fn w_space_membership() {
        let g = grid();
        let (a, phi) = model(&g);
        let alpha = OneForm { dzeta: vec![sigma3() * c(0.2, 0.0); g.len()], dzeta_bar: vec![sigma3() * c(-0.2, 0.0); g.len()] };
        let r = w_space_check(&a, &phi, &alpha, Stencil::default(), 1e-10).unwrap();
        assert!(r.member, "{r:?}");
        assert!(w_space_check(&a, &phi, &OneForm::zero(g.len()), Stencil::default(), 1e-10).unwrap().member);
        // bump(τ) iσ₃ dθ
        let bump = g.sample_log(|s, _| sigma3() * c(0.0, (-(s + 1.0).powi(2) * 8.0).exp()));
        let zero = vec![M2::zeros(); g.len()];
        let form = OneForm::from_real(&zero, &bump);
        let r = w_space_check(&a, &phi, &form, Stencil::default(), 1e-10).unwrap();
        assert!(!r.member && r.d_a > 1e-3);
    }
}
