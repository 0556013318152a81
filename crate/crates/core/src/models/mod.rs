//! Explicit solution families: the model solutions on necks, the fiducial
//! family near a simple zero of `det Φ`, its singular limit, and the gluing
//! surrogates built from them.

pub mod cache;
pub mod fiducial;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldPair, HiggsField, UnitaryConnection};
use crate::fit::least_squares_line;
use crate::grid::PolarGrid;
use crate::linalg::{self, re, sigma3, M2};
use crate::surface::{
    transition_pushforward, AnnulusChart, FormSamples, FormType, Frame, NodeParameter, Side,
};

pub use cache::{ProfileCache, CACHE_DIR_ENV};
pub use fiducial::{
    approximate_glue_desingularization, fiducial_pair, fiducial_pair_with, fiducial_profile,
    fiducial_profile_with, singular_gauge, singular_gauge_apply, ConnectionCoefficient, Cutoff,
    CutoffProfile, FiducialOptions, FiducialProfile, GlueSurrogate, PoleProfile, RadialProfile,
    ZeroProfile,
};

/// Parameters `(α, C)` of the model solution on the `+` side of a neck; the
/// `−` side carries `(−α, −C)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    alpha: f64,
    c: Complex64,
}

impl ModelParameters {
    pub fn new(alpha: f64, c: Complex64) -> Result<Self> {
        if c.norm() == 0.0 || !c.norm().is_finite() {
            return Err(Error::AssumptionViolation(format!("model constant C = {c} must be nonzero")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("α = {alpha} must be positive")));
        }
        Ok(Self { alpha, c })
    }

    /// Skips the `C ≠ 0` and `α > 0` checks. Only meant for plumbing tests.
    #[doc(hidden)]
    pub fn unchecked(alpha: f64, c: Complex64) -> Self {
        Self { alpha, c }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> Complex64 {
        self.c
    }

    /// `(α, C)` as seen from `side`.
    pub fn on_side(&self, side: Side) -> (f64, Complex64) {
        match side {
            Side::Plus => (self.alpha, self.c),
            Side::Minus => (-self.alpha, -self.c),
        }
    }
}

fn model_on_grid(grid: &PolarGrid, alpha: f64, c: Complex64) -> FieldPair {
    let a = vec![sigma3() * re(alpha); grid.len()];
    let phi = vec![sigma3() * c; grid.len()];
    FieldPair {
        connection: UnitaryConnection::new(grid.clone(), Frame::DzOverZ, a).expect("grid sized"),
        higgs: HiggsField::new(grid.clone(), Frame::DzOverZ, phi).expect("grid sized"),
    }
}

/// `A = α σ₃ (dz/z − dz̄/z̄)`, `Φ = C σ₃ dz/z` on the chart, with the side's
/// sign convention.
pub fn model_pair(params: ModelParameters, chart: &AnnulusChart) -> Result<FieldPair> {
    let (alpha, c) = params.on_side(chart.side);
    Ok(model_on_grid(&chart.grid, alpha, c))
}

/// Both halves of a glued neck and the coefficient mismatch on the overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct GluedNeck {
    pub plus: FieldPair,
    pub minus: FieldPair,
    pub connection_mismatch: f64,
    pub higgs_mismatch: f64,
}

impl GluedNeck {
    pub fn mismatch(&self) -> f64 {
        self.connection_mismatch.max(self.higgs_mismatch)
    }
}

/// Glues the model pair across the neck `zw = t` and measures how well the
/// `+` side, pushed through the transition map, agrees with the `−` side.
pub fn glue_model_neck(
    params: ModelParameters,
    node: &NodeParameter,
    n_radial: usize,
    n_theta: usize,
) -> Result<GluedNeck> {
    glue_with_minus(params, params.on_side(Side::Minus), node, n_radial, n_theta)
}

/// As [`glue_model_neck`] with arbitrary `(α, C)` on the `−` side.
pub fn glue_with_minus(
    params: ModelParameters,
    minus: (f64, Complex64),
    node: &NodeParameter,
    n_radial: usize,
    n_theta: usize,
) -> Result<GluedNeck> {
    if node.is_pinched() {
        return Err(Error::CannotGlue);
    }
    let plus_chart = AnnulusChart::new(Side::Plus, node.rho(), n_radial, n_theta)?;
    let minus_chart = AnnulusChart::new(Side::Minus, node.rho(), n_radial, n_theta)?;
    let plus = model_pair(params, &plus_chart)?;
    let minus_pair = model_on_grid(&minus_chart.grid, minus.0, minus.1);

    let grid = &plus_chart.grid;
    let points: Vec<Complex64> = grid.interior_rows().flat_map(|i| (0..grid.n_theta()).map(move |j| grid.z(i, j))).collect();
    let pick = |v: &[M2]| -> Vec<M2> {
        grid.interior_rows().flat_map(|i| (0..grid.n_theta()).map(move |j| v[grid.index(i, j)])).collect()
    };
    let (a_plus, b_plus) = plus.connection.log_coefficients();
    let phi_plus = plus.higgs.log_coefficient();
    let push = |values: Vec<M2>, form_type| {
        transition_pushforward(
            &FormSamples { frame: Frame::DzOverZ, form_type, side: Side::Plus, points: points.clone(), values },
            node,
        )
    };
    let a_push = push(pick(&a_plus), FormType::Holomorphic)?;
    let b_push = push(pick(&b_plus), FormType::AntiHolomorphic)?;
    let phi_push = push(pick(&phi_plus), FormType::Holomorphic)?;

    // The model is constant in the cylindrical frame, so the `−` side is
    // evaluated in closed form at the image points.
    let a_minus = sigma3() * re(minus.0);
    let phi_minus = sigma3() * minus.1;
    let entry_sup = |m: &M2| m.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let connection_mismatch = a_push
        .values
        .iter()
        .map(|a| entry_sup(&(a - a_minus)))
        .chain(b_push.values.iter().map(|b| entry_sup(&(b + linalg::adj(&a_minus)))))
        .fold(0.0, f64::max);
    let higgs_mismatch = phi_push.values.iter().map(|p| entry_sup(&(p - phi_minus))).fold(0.0, f64::max);
    Ok(GluedNeck { plus, minus: minus_pair, connection_mismatch, higgs_mismatch })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `log(distance)` against `τ`.
    pub slope: f64,
    pub intercept: f64,
    pub non_decaying: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Proximity {
    ExactMatch,
    Fit(DecayFit),
}

/// Slope above which a distance profile counts as non-decaying.
pub const NON_DECAY_SLOPE: f64 = -0.05;

/// Fits the log of the distance (cylindrical frame, sup over θ) between a
/// neck pair and the model pair against `τ = log(1/|z|)`.
pub fn biquard_boalch_proximity(pair: &FieldPair, params: ModelParameters, side: Side) -> Result<Proximity> {
    let grid = pair.grid();
    let (alpha, c) = params.on_side(side);
    let (a, _) = pair.connection.log_coefficients();
    let phi = pair.higgs.log_coefficient();
    let a_mod = sigma3() * re(alpha);
    let phi_mod = sigma3() * c;
    let mut taus = Vec::new();
    let mut logs = Vec::new();
    let mut all_zero = true;
    for i in grid.interior_rows() {
        let d = (0..grid.n_theta())
            .map(|j| {
                let k = grid.index(i, j);
                linalg::norm(&(a[k] - a_mod)).max(linalg::norm(&(phi[k] - phi_mod)))
            })
            .fold(0.0, f64::max);
        if d > 0.0 {
            all_zero = false;
            taus.push(grid.tau(i));
            logs.push(d.ln());
        }
    }
    if all_zero {
        return Ok(Proximity::ExactMatch);
    }
    if taus.len() < 2 {
        return Err(Error::Resolution("too few nonzero distance samples to fit".into()));
    }
    let (slope, intercept) = least_squares_line(&taus, &logs);
    Ok(Proximity::Fit(DecayFit { slope, intercept, non_decaying: slope > NON_DECAY_SLOPE }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{residual_fixed_det, residual_full, BundleData, VolumeForm};
    use crate::grid::Stencil;
    use crate::linalg::c;

    fn chart() -> AnnulusChart {
        AnnulusChart::new(Side::Plus, 0.1, 64, 32).unwrap()
    }

    #[test]
    fn model_solves_fixed_determinant_system() {
        let pair = model_pair(ModelParameters::new(0.3, c(1.0, 0.0)).unwrap(), &chart()).unwrap();
        let r = residual_fixed_det(&pair.connection, &pair.higgs, Stencil::default()).unwrap();
        assert!(r.sup() <= 1e-10);
        let g = pair.grid();
        let full = residual_full(&pair.connection, &pair.higgs, BundleData { degree: 0 }, &VolumeForm::flat(g), Stencil::default()).unwrap();
        assert!(full.sup() <= 1e-10);
    }

    #[test]
    fn parameters_are_validated() {
        assert!(matches!(ModelParameters::new(0.3, c(0.0, 0.0)), Err(Error::AssumptionViolation(_))));
        assert!(ModelParameters::new(0.0, c(1.0, 0.0)).is_err());
        let p = ModelParameters::new(0.5, c(0.0, 1.0)).unwrap();
        assert_eq!(p.on_side(Side::Minus), (-0.5, c(0.0, -1.0)));
    }

    #[test]
    fn model_determinant_has_double_pole() {
        let pair = model_pair(ModelParameters::new(0.5, c(0.0, 1.0)).unwrap(), &chart()).unwrap();
        let q = crate::fields::det_higgs(&pair.higgs);
        assert!(q.values.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
        assert_eq!(crate::surface::pole_order_at_node(&q).unwrap().order, 2);
    }

    #[test]
    fn gluing_round_trip() {
        let node = NodeParameter::new(c(0.25, 0.0)).unwrap();
        let p = ModelParameters::new(0.3, c(1.0, 0.0)).unwrap();
        let glued = glue_model_neck(p, &node, 32, 16).unwrap();
        assert!(glued.mismatch() <= 1e-12);
        let wrong = glue_with_minus(p, (-0.3, c(1.0, 0.0)), &node, 32, 16).unwrap();
        assert!((wrong.higgs_mismatch - 2.0).abs() < 1e-12);
        assert!(wrong.connection_mismatch <= 1e-12);
        assert_eq!(glue_model_neck(p, &NodeParameter::pinched(), 32, 16), Err(Error::CannotGlue));
    }

    #[test]
    fn connection_only_gluing_flips_sign() {
        let node = NodeParameter::new(c(0.1, 0.2)).unwrap();
        let p = ModelParameters::unchecked(0.7, c(0.0, 0.0));
        let glued = glue_model_neck(p, &node, 16, 16).unwrap();
        assert!(glued.mismatch() <= 1e-12);
        let a_minus = glued.minus.connection.coefficient()[0];
        let a_plus = glued.plus.connection.coefficient()[0];
        assert!(linalg::norm(&(a_minus + a_plus)) < 1e-15);
    }

    #[test]
    fn proximity_fits() {
        let chart = AnnulusChart::new(Side::Plus, 1e-3, 96, 16).unwrap();
        let p = ModelParameters::new(0.3, c(1.0, 0.0)).unwrap();
        let pair = model_pair(p, &chart).unwrap();
        assert_eq!(biquard_boalch_proximity(&pair, p, Side::Plus).unwrap(), Proximity::ExactMatch);

        let g = &chart.grid;
        let bump = linalg::diag(c(0.01, 0.0), c(-0.02, 0.0));
        let decaying: Vec<M2> = (0..g.len()).map(|k| sigma3() + bump * re((-g.tau(g.row_col(k).0)).exp())).collect();
        let perturbed = FieldPair::new(pair.connection.clone(), HiggsField::new(g.clone(), Frame::DzOverZ, decaying).unwrap()).unwrap();
        match biquard_boalch_proximity(&perturbed, p, Side::Plus).unwrap() {
            Proximity::Fit(f) => {
                assert!((f.slope + 1.0).abs() < 0.05, "{f:?}");
                assert!(!f.non_decaying);
            }
            other => panic!("{other:?}"),
        }
        let constant: Vec<M2> = (0..g.len()).map(|_| sigma3() + bump).collect();
        let perturbed = FieldPair::new(pair.connection.clone(), HiggsField::new(g.clone(), Frame::DzOverZ, constant).unwrap()).unwrap();
        match biquard_boalch_proximity(&perturbed, p, Side::Plus).unwrap() {
            Proximity::Fit(f) => {
                assert!(f.slope.abs() < 1e-10);
                assert!(f.non_decaying);
            }
            other => panic!("{other:?}"),
        }
    }
}
