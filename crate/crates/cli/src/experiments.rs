//! One function per subcommand. Each takes its merged parameters and returns
//! an [`Outcome`] with named checks, tables and plots.

use std::f64::consts::PI;

use clap::Args;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use hitchin_core::fields::{det_higgs, residual_decoupled, residual_fixed_det, residual_rescaled, residual_rescaled_window, FieldPair};
use hitchin_core::fit::least_squares_line;
use hitchin_core::grid::{PolarGrid, Stencil};
use hitchin_core::linop::{
    assemble_b_family, graph_continuity_experiment, graph_projection, l2_divergence_scan, small_singular_values, BFamilyConfig,
    NodeCondition, OuterCap, Weight,
};
use hitchin_core::localsys::{build_local_system, euler_check, metric_pairing, twisted_cohomology, NeckLineBundleForm, SignMap};
use hitchin_core::models::{
    approximate_glue_desingularization, biquard_boalch_proximity, fiducial_pair, glue_model_neck, model_pair, Cutoff,
    FiducialOptions, ModelParameters, ProfileCache, Proximity, RadialProfile, ZeroProfile,
};
use hitchin_core::surface::{pole_order_at_node, AnnulusChart, NodeParameter, Side};

use crate::config::ComplexArg;
use crate::error::{CliError, CliResult};
use crate::output::{fmt, Check, Outcome, Plot, Series, Table};

/// Shared run context.
pub struct Context {
    pub seed: u64,
    pub cache: ProfileCache,
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, x: f64) -> CliResult<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(config_err(format!("{name} must be positive, got {x}")))
    }
}

/// Grid default of the annulus experiments.
pub const RADIAL: usize = 256;
pub const ANGULAR: usize = 128;

// ---------------------------------------------------------------- residual

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// Model solutions under the fixed-determinant system.
    Model,
    /// Fiducial pair under the rescaled system.
    Fiducial,
    /// `h ≡ 0` limiting pair under the decoupled system.
    Limit,
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualParams {
    /// model | fiducial | limit
    #[arg(long, value_parser = parse_serde::<PairKind>)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairKind>,
    /// Model α (a single draw when α or C is given).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Model C as RE or RE,IM.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<ComplexArg>,
    /// Number of random model draws.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    /// Scale parameter t for fiducial and limit pairs.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_inner: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_radial: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

/// `(α, C)` with `α ∈ [0.05, 1)`, `|C| ∈ [0.2, 2)`.
pub fn random_model(rng: &mut ChaCha8Rng) -> ModelParameters {
    let alpha = rng.gen_range(0.05..1.0);
    let modulus = rng.gen_range(0.2..2.0);
    let arg = rng.gen_range(0.0..2.0 * PI);
    ModelParameters::new(alpha, Complex64::from_polar(modulus, arg)).expect("valid by construction")
}

pub fn residual(p: &ResidualParams, ctx: &Context) -> CliResult<Outcome> {
    let kind = p.pair.unwrap_or(PairKind::Model);
    let (n_r, n_t) = (p.n_radial.unwrap_or(RADIAL), p.n_theta.unwrap_or(ANGULAR));
    let mut out = Outcome::default();
    let mut table = Table::new("residual", &["pair", "alpha", "c_re", "c_im", "t", "equation", "sup", "l2"]);
    let mut worst: f64 = 0.0;
    match kind {
        PairKind::Model => {
            let tol = p.tolerance.unwrap_or(1e-10);
            let chart = AnnulusChart::new(Side::Plus, p.r_inner.unwrap_or(0.1), n_r, n_t)?;
            let draws: Vec<ModelParameters> = if p.alpha.is_some() || p.c.is_some() {
                vec![ModelParameters::new(p.alpha.unwrap_or(0.3), p.c.map_or(Complex64::new(1.0, 0.0), |c| c.value()))?]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
                let n = p.draws.unwrap_or(20);
                if n == 0 {
                    return Err(config_err("draws must be at least 1"));
                }
                (0..n).map(|_| random_model(&mut rng)).collect()
            };
            for m in &draws {
                let pair = model_pair(*m, &chart)?;
                let r = residual_fixed_det(&pair.connection, &pair.higgs, Stencil::default())?;
                for d in &r.defects {
                    table.push(vec!["model".into(), fmt(m.alpha()), fmt(m.c().re), fmt(m.c().im), String::new(), d.equation.clone(), fmt(d.norms.sup), fmt(d.norms.l2)]);
                }
                worst = worst.max(r.sup());
            }
            out.checks.push(Check::at_most("model residual sup", worst, tol));
        }
        PairKind::Fiducial | PairKind::Limit => {
            let t = positive("t", p.t.unwrap_or(1.0))?;
            let grid = PolarGrid::annulus(p.r_inner.unwrap_or(0.05), 1.0, n_r, n_t)?;
            let (label, r) = if kind == PairKind::Fiducial {
                let tol = p.tolerance.unwrap_or(1e-6);
                let prof = ctx.cache.get_or_solve(t, 1.0, FiducialOptions::default())?;
                let pair = fiducial_pair(&prof, &grid)?;
                let r = residual_rescaled(&pair.connection, &pair.higgs, t, Stencil::high_order())?;
                out.checks.push(Check::at_most("fiducial residual sup", r.sup(), tol));
                ("fiducial", r)
            } else {
                let tol = p.tolerance.unwrap_or(1e-10);
                let pair = fiducial_pair(&ZeroProfile { t }, &grid)?;
                let r = residual_decoupled(&pair.connection, &pair.higgs, Stencil::high_order())?;
                out.checks.push(Check::at_most("decoupled residual sup", r.sup(), tol));
                ("limit", r)
            };
            for d in &r.defects {
                table.push(vec![label.into(), String::new(), String::new(), String::new(), fmt(t), d.equation.clone(), fmt(d.norms.sup), fmt(d.norms.l2)]);
            }
            worst = r.sup();
        }
    }
    out.summary.insert("residual_sup".into(), worst);
    out.result = json!({ "pair": kind, "residual_sup": worst });
    out.lines.push(format!("{kind:?} residual sup = {worst:.3e}"));
    out.tables.push(table);
    Ok(out)
}

// ------------------------------------------------------------------- model

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<ComplexArg>,
    /// Plumbing parameter t of the neck.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<ComplexArg>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_radial: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

pub fn model(p: &ModelParams, _ctx: &Context) -> CliResult<Outcome> {
    let params = ModelParameters::new(p.alpha.unwrap_or(0.3), p.c.map_or(Complex64::new(1.0, 0.0), |c| c.value()))?;
    let node = NodeParameter::new(p.node.map_or(Complex64::new(0.25, 0.0), |c| c.value()))?;
    let (n_r, n_t) = (p.n_radial.unwrap_or(64), p.n_theta.unwrap_or(32));
    let tol = p.tolerance.unwrap_or(1e-12);
    let glued = glue_model_neck(params, &node, n_r, n_t)?;
    let chart = AnnulusChart::new(Side::Plus, node.rho().max(1e-3), n_r, n_t)?;
    let pair = model_pair(params, &chart)?;
    let proximity = biquard_boalch_proximity(&pair, params, Side::Plus)?;
    let order = pole_order_at_node(&det_higgs(&pair.higgs))?;
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("connection mismatch", glued.connection_mismatch, tol));
    out.checks.push(Check::at_most("higgs mismatch", glued.higgs_mismatch, tol));
    out.checks.push(Check::flag("proximity is exact", proximity == Proximity::ExactMatch));
    out.checks.push(Check::equals("det pole order", f64::from(order.order), 2.0));
    out.summary.insert("mismatch".into(), glued.mismatch());
    out.result = json!({
        "alpha": params.alpha(), "c": ComplexArg { re: params.c().re, im: params.c().im },
        "connection_mismatch": glued.connection_mismatch, "higgs_mismatch": glued.higgs_mismatch,
        "proximity": proximity, "det_pole_order": order,
    });
    out.lines.push(format!("gluing mismatch = {:.3e}, det pole order = {}", glued.mismatch(), order.order));
    Ok(out)
}

// ---------------------------------------------------------------- fiducial

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiducialParams {
    /// Values of t, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_inner: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_radial: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    /// Residual tolerance.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub det_tolerance: Option<f64>,
    /// ODE tolerance of the profile solver.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode_tolerance: Option<f64>,
}

pub struct FiducialRow {
    pub t: f64,
    pub sup_h: f64,
    pub residual: f64,
    pub det_defect: f64,
    pub det_drift: f64,
    pub iterations: usize,
}

pub fn fiducial(p: &FiducialParams, ctx: &Context) -> CliResult<Outcome> {
    let ts = p.t.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]);
    if ts.is_empty() {
        return Err(config_err("empty list of t"));
    }
    for &t in &ts {
        positive("t", t)?;
    }
    let grid = PolarGrid::annulus(p.r_inner.unwrap_or(0.05), 1.0, p.n_radial.unwrap_or(RADIAL), p.n_theta.unwrap_or(ANGULAR))?;
    let tol = p.tolerance.unwrap_or(1e-6);
    let det_tol = p.det_tolerance.unwrap_or(1e-12);
    let options = FiducialOptions { tolerance: p.ode_tolerance.unwrap_or(FiducialOptions::default().tolerance), ..FiducialOptions::default() };

    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    let mut det_ref: Option<Vec<Complex64>> = None;
    for &t in &ts {
        let prof = ctx.cache.get_or_solve(t, 1.0, options)?;
        let pair = fiducial_pair(&prof, &grid)?;
        let r = residual_rescaled(&pair.connection, &pair.higgs, t, Stencil::high_order())?;
        let q = det_higgs(&pair.higgs);
        let pts = q.lattice().points;
        let det_defect = q.values.iter().zip(&pts).map(|(v, z)| (v + z).norm() / (1.0 + z.norm())).fold(0.0, f64::max);
        let det_drift = match &det_ref {
            None => {
                det_ref = Some(q.values.clone());
                0.0
            }
            Some(d) => d.iter().zip(&q.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max),
        };
        rows.push(FiducialRow { t, sup_h: prof.sup_on(0.5, 1.0), residual: r.sup(), det_defect, det_drift, iterations: prof.iterations() });
        profiles.push(prof);
    }

    let mut out = Outcome::default();
    let worst_res = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let worst_det = rows.iter().map(|r| r.det_defect.max(r.det_drift)).fold(0.0, f64::max);
    out.checks.push(Check::at_most("rescaled residual sup", worst_res, tol));
    out.checks.push(Check::at_most("det + z and t-drift", worst_det, det_tol));
    let mut sorted: Vec<&FiducialRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let decreasing = sorted.windows(2).all(|w| w[1].sup_h < w[0].sup_h);
    out.checks.push(Check::flag("sup |h_t| on [0.5, 1] strictly decreasing", decreasing));
    let positive_sups: Vec<&FiducialRow> = sorted.iter().copied().filter(|r| r.sup_h > 0.0).collect();
    let slope = if positive_sups.len() >= 2 {
        let xs: Vec<f64> = positive_sups.iter().map(|r| r.t).collect();
        let ys: Vec<f64> = positive_sups.iter().map(|r| r.sup_h.ln()).collect();
        least_squares_line(&xs, &ys).0
    } else {
        f64::NAN
    };

    let mut table = Table::new("summary", &["t", "sup_h", "residual", "det_defect", "det_drift", "iterations"]);
    for r in &rows {
        table.push(vec![fmt(r.t), fmt(r.sup_h), fmt(r.residual), fmt(r.det_defect), fmt(r.det_drift), r.iterations.to_string()]);
        out.lines.push(format!("t = {:<4} sup|h| = {:.6e}  residual = {:.3e}  det defect = {:.1e}", r.t, r.sup_h, r.residual, r.det_defect.max(r.det_drift)));
    }
    out.lines.push(format!("log-linear decay slope d log sup|h| / dt = {slope:.6}"));
    let mut prof_table = Table::new("profiles", &["r", "t", "h"]);
    let samples: Vec<f64> = (0..=100).map(|k| grid.r_inner() * (1.0 / grid.r_inner()).powf(k as f64 / 100.0)).collect();
    let mut series = Vec::new();
    for prof in &profiles {
        let pts: Vec<(f64, f64)> = samples.iter().map(|&r| (r, prof.h_at(r))).collect();
        for (r, h) in &pts {
            prof_table.push(vec![fmt(*r), fmt(prof.t()), fmt(*h)]);
        }
        series.push(Series { label: format!("t = {}", prof.t()), points: pts });
    }
    out.plots.push(Plot { name: "profiles".into(), title: "fiducial profiles h_t(r)".into(), x_label: "r".into(), y_label: "h".into(), log_y: false, series });
    out.plots.push(Plot {
        name: "decay".into(),
        title: "sup of |h_t| on [0.5, 1]".into(),
        x_label: "t".into(),
        y_label: "sup |h_t|".into(),
        log_y: true,
        series: vec![Series { label: format!("slope {slope:.3}"), points: sorted.iter().map(|r| (r.t, r.sup_h)).collect() }],
    });
    out.tables.push(table);
    out.tables.push(prof_table);
    out.summary.insert("sup_h".into(), rows[0].sup_h);
    out.summary.insert("residual".into(), worst_res);
    if slope.is_finite() {
        out.summary.insert("decay_slope".into(), slope);
    }
    out.result = json!({
        "rows": rows.iter().map(|r| json!({"t": r.t, "sup_h": r.sup_h, "residual": r.residual, "det_defect": r.det_defect, "det_drift": r.det_drift, "iterations": r.iterations})).collect::<Vec<_>>(),
        "decay_slope": slope,
        "decreasing": decreasing,
    });
    Ok(out)
}

// -------------------------------------------------------------------- glue

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlueParams {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Cutoff radius r_c in (0, 1/2).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_c: Option<f64>,
    /// cosine | polynomial
    #[arg(long, value_parser = parse_serde::<Cutoff>)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<Cutoff>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_radial: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    /// Residual tolerance away from the transition annulus.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

pub fn glue(p: &GlueParams, ctx: &Context) -> CliResult<Outcome> {
    let t = positive("t", p.t.unwrap_or(4.0))?;
    let r_c = p.r_c.unwrap_or(0.2);
    let cutoff = p.cutoff.unwrap_or(Cutoff::Cosine);
    let tol = p.tolerance.unwrap_or(1e-6);
    let grid = PolarGrid::annulus((0.25 * r_c).min(0.05), 1.0, p.n_radial.unwrap_or(RADIAL), p.n_theta.unwrap_or(ANGULAR))?;
    let prof = ctx.cache.get_or_solve(t, 1.0, FiducialOptions::default())?;
    let glue = approximate_glue_desingularization(&prof, r_c, cutoff, Some(&grid))?;
    // stencil reach on either side of [r_c, 2r_c]
    let margin = (6.0 * grid.ds()).exp();
    let (lo, hi) = (r_c / margin, 2.0 * r_c * margin);
    let pair: &FieldPair = &glue.pair;
    let inner = residual_rescaled_window(&pair.connection, &pair.higgs, t, Stencil::high_order(), grid.r_inner(), lo)?.sup();
    let outer = residual_rescaled_window(&pair.connection, &pair.higgs, t, Stencil::high_order(), hi, 1.0)?.sup();
    let transition = residual_rescaled_window(&pair.connection, &pair.higgs, t, Stencil::high_order(), lo, hi)?.sup();
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("residual inside r_c", inner, tol));
    out.checks.push(Check::at_most("residual outside 2 r_c", outer, tol));
    let mut table = Table::new("regions", &["region", "r_lo", "r_hi", "sup"]);
    table.push(vec!["inner".into(), fmt(grid.r_inner()), fmt(lo), fmt(inner)]);
    table.push(vec!["transition".into(), fmt(lo), fmt(hi), fmt(transition)]);
    table.push(vec!["outer".into(), fmt(hi), fmt(1.0), fmt(outer)]);
    out.tables.push(table);
    out.summary.insert("transition_residual".into(), transition);
    out.result = json!({ "t": t, "r_c": r_c, "cutoff": cutoff, "inner": inner, "transition": transition, "outer": outer });
    out.lines.push(format!("residual: inner {inner:.3e}, transition {transition:.3e}, outer {outer:.3e}"));
    Ok(out)
}

// -------------------------------------------------------------- cohomology

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohomologyParams {
    /// Genera, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genus: Option<Vec<i64>>,
    /// Punctures k (default 4(γ − 1)).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub punctures: Option<i64>,
    /// Use the trivial local system instead of the twisted one.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trivial: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohomologyRow {
    pub genus: i64,
    pub punctures: i64,
    pub h0: usize,
    pub h1: usize,
    pub h2: usize,
    pub chi: i64,
    pub expected: i64,
    pub matches: bool,
}

impl CohomologyRow {
    pub fn line(&self) -> String {
        format!(
            "({}, {}, {}, {}, {}, {}, {}, {})",
            self.genus,
            self.punctures,
            self.h0,
            self.h1,
            self.h2,
            self.chi,
            self.expected,
            if self.matches { "MATCH" } else { "MISMATCH" }
        )
    }
}

pub fn cohomology_row(genus: i64, punctures: i64, trivial: bool) -> CliResult<(CohomologyRow, bool)> {
    let signs = if trivial {
        if genus < 0 || punctures < 0 {
            return Err(config_err("genus and punctures must be nonnegative"));
        }
        Some(SignMap::trivial(genus as usize, punctures as usize))
    } else {
        None
    };
    let pres = build_local_system(genus, punctures, signs)?;
    let c = twisted_cohomology(&pres)?;
    let e = euler_check(&pres)?;
    let expected = 6 * (genus - 1);
    let row = CohomologyRow {
        genus,
        punctures,
        h0: c.betti.h0,
        h1: c.betti.h1,
        h2: c.betti.h2,
        chi: c.betti.euler(),
        expected,
        matches: c.betti.h1 as i64 == expected,
    };
    Ok((row, e.consistent))
}

pub fn cohomology(p: &CohomologyParams, _ctx: &Context) -> CliResult<Outcome> {
    let genera = p.genus.clone().unwrap_or_else(|| vec![2]);
    if genera.is_empty() {
        return Err(config_err("empty list of genera"));
    }
    let trivial = p.trivial.unwrap_or(false);
    let mut out = Outcome::default();
    let mut table = Table::new("cohomology", &["genus", "punctures", "h0", "h1", "h2", "chi", "expected", "match"]);
    let mut rows = Vec::new();
    for &g in &genera {
        let k = p.punctures.unwrap_or(4 * (g - 1));
        let (row, euler_ok) = cohomology_row(g, k, trivial)?;
        out.checks.push(Check::flag(format!("euler characteristic (γ = {g})"), euler_ok));
        if !trivial && k == 4 * (g - 1) {
            out.checks.push(Check::equals(format!("h1 = 6(γ−1) (γ = {g})"), row.h1 as f64, row.expected as f64));
            out.checks.push(Check::equals(format!("h0 + h2 (γ = {g})"), (row.h0 + row.h2) as f64, 0.0));
        }
        out.lines.push(row.line());
        table.push(vec![
            row.genus.to_string(),
            row.punctures.to_string(),
            row.h0.to_string(),
            row.h1.to_string(),
            row.h2.to_string(),
            row.chi.to_string(),
            row.expected.to_string(),
            if row.matches { "MATCH" } else { "MISMATCH" }.to_string(),
        ]);
        rows.push(row);
    }
    out.summary.insert("h1".into(), rows[0].h1 as f64);
    out.tables.push(table);
    out.result = json!({ "trivial": trivial, "rows": rows });
    Ok(out)
}

// ------------------------------------------------------------------ metric

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricParams {
    /// Inner radius ρ of the neck annulus.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_radial: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    /// Relative tolerance against the closed-form norm.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

pub fn metric(p: &MetricParams, _ctx: &Context) -> CliResult<Outcome> {
    let rho = p.rho.unwrap_or(0.01);
    if !(rho > 0.0 && rho < 1.0) {
        return Err(config_err(format!("rho = {rho} outside (0, 1)")));
    }
    let tol = p.tolerance.unwrap_or(1e-10);
    let grid = PolarGrid::annulus(rho, 1.0, p.n_radial.unwrap_or(RADIAL + 1), p.n_theta.unwrap_or(64))?;
    let standard = NeckLineBundleForm::real(&grid, |_, _| 1.0);
    let norm = metric_pairing(&standard, &standard)?;
    let want = 16.0 * PI * (1.0 / rho).ln();
    // A small basis of real forms α_s ds + α_θ dθ.
    type Component = fn(f64, f64) -> f64;
    let comps: Vec<(Component, Component)> = vec![
        (|_, _| 1.0, |_, _| 0.0),
        (|_, _| 0.0, |_, _| 1.0),
        (|s, _| s, |_, t| t.cos()),
        (|_, t| (2.0 * t).sin(), |s, _| (0.5 * s).exp()),
    ];
    let basis: Vec<NeckLineBundleForm> = comps
        .iter()
        .map(|(a, b)| NeckLineBundleForm::from_real_components(&grid, &grid.sample_log(a), &grid.sample_log(b)))
        .collect::<Result<_, _>>()?;
    let n = basis.len();
    let mut gram = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] = metric_pairing(&basis[i], &basis[j])?;
        }
    }
    let asym = (&gram - gram.transpose()).amax() / gram.amax();
    let eig = gram.clone().symmetric_eigenvalues();
    let min_eig = eig.min();
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("relative error of G(α, α) against 16π log(1/ρ)", (norm / want - 1.0).abs(), tol));
    out.checks.push(Check::at_most("Gram asymmetry", asym, 1e-14));
    out.checks.push(Check::at_least("Gram minimum eigenvalue", min_eig, f64::MIN_POSITIVE));
    let mut table = Table::new("gram", &["i", "j", "g"]);
    for i in 0..n {
        for j in 0..n {
            table.push(vec![i.to_string(), j.to_string(), fmt(gram[(i, j)])]);
        }
    }
    out.tables.push(table);
    out.summary.insert("norm".into(), norm);
    out.result = json!({ "rho": rho, "norm": norm, "expected": want, "gram_min_eigenvalue": min_eig, "gram_asymmetry": asym });
    out.lines.push(format!("G(α, α) = {norm:.10} (16π log(1/ρ) = {want:.10}), Gram λ_min = {min_eig:.3e}"));
    Ok(out)
}

// ---------------------------------------------------------------- spectrum

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumParams {
    /// Values of R = |t|², comma separated; 0 is the pinched neck.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial: Option<usize>,
    /// dirichlet | aps
    #[arg(long, value_parser = parse_serde::<OuterCap>)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<OuterCap>,
    /// matching | dirichlet
    #[arg(long, value_parser = parse_serde::<NodeCondition>)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeCondition>,
    /// radial | cylindrical
    #[arg(long, value_parser = parse_serde::<Weight>)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Weight>,
    /// Singular values reported per mode.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

pub const DEFAULT_RADII: [f64; 4] = [0.04, 0.01, 0.0025, 0.0];

fn b_config(r: f64, truncation: Option<f64>, modes: Option<usize>, radial: Option<usize>, cap: Option<OuterCap>, node: Option<NodeCondition>, weight: Option<Weight>) -> CliResult<BFamilyConfig> {
    let mut cfg = BFamilyConfig::new(r, truncation.unwrap_or(8.0), modes.unwrap_or(4), radial.unwrap_or(64))?;
    cfg.cap = cap.unwrap_or_default();
    cfg.node = node.unwrap_or_default();
    cfg.weight = weight.unwrap_or_default();
    Ok(cfg)
}

pub fn spectrum(p: &SpectrumParams, _ctx: &Context) -> CliResult<Outcome> {
    let radii = p.r.clone().unwrap_or_else(|| DEFAULT_RADII.to_vec());
    if radii.is_empty() {
        return Err(config_err("empty list of R"));
    }
    let count = p.count.unwrap_or(3);
    let mut out = Outcome::default();
    let mut spectra = Table::new("spectra", &["R", "mode", "index", "sigma"]);
    let mut counts = Table::new("counts", &["R", "near_kernel", "expected", "sigma_max", "threshold", "gap_ratio"]);
    let mut reports = Vec::new();
    for &r in &radii {
        let cfg = b_config(r, p.truncation, p.modes, p.radial, p.cap, p.node, p.weight)?;
        let rep = small_singular_values(&assemble_b_family(&cfg)?, count)?;
        for m in &rep.modes {
            for (i, s) in m.smallest.iter().enumerate() {
                spectra.push(vec![fmt(r), m.n.to_string(), i.to_string(), fmt(*s)]);
            }
        }
        counts.push(vec![fmt(r), rep.near_kernel_count.to_string(), rep.expected_count.to_string(), fmt(rep.sigma_max), fmt(rep.threshold), fmt(rep.gap_ratio)]);
        out.checks.push(Check::equals(format!("near-kernel count matches oracle (R = {r})"), rep.near_kernel_count as f64, rep.expected_count as f64));
        out.lines.push(format!("R = {r:<8} near-kernel {} (oracle {}), gap ratio {:.3e}", rep.near_kernel_count, rep.expected_count, rep.gap_ratio));
        reports.push(rep);
    }
    let first = reports[0].near_kernel_count;
    out.checks.push(Check::flag("near-kernel count constant across R", reports.iter().all(|r| r.near_kernel_count == first)));
    out.summary.insert("near_kernel".into(), first as f64);
    out.tables.push(counts);
    out.tables.push(spectra);
    out.result = serde_json::to_value(&reports)?;
    Ok(out)
}

// --------------------------------------------------------------- graphcont

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphcontParams {
    /// Values of R > 0, comma separated, compared with R = 0.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
    /// Common window length T_c on each side.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial: Option<usize>,
    #[arg(long, value_parser = parse_serde::<OuterCap>)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<OuterCap>,
    #[arg(long, value_parser = parse_serde::<Weight>)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Weight>,
    /// Tolerance of the idempotency and symmetry audits.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

pub fn graphcont(p: &GraphcontParams, _ctx: &Context) -> CliResult<Outcome> {
    let radii = p.r.clone().unwrap_or_else(|| DEFAULT_RADII[..3].to_vec());
    if radii.is_empty() {
        return Err(config_err("empty list of R"));
    }
    if radii.iter().any(|&r| r <= 0.0) {
        return Err(config_err("graphcont compares R > 0 against R = 0; drop R = 0 from the list"));
    }
    let window = p.window.unwrap_or(1.5);
    let tol = p.tolerance.unwrap_or(1e-10);
    let base = b_config(0.0, p.truncation, p.modes, p.radial, p.cap, None, p.weight)?;

    let mut idem: f64 = 0.0;
    let mut sym: f64 = 0.0;
    let mut ill = false;
    for r in std::iter::once(0.0).chain(radii.iter().copied()) {
        for b in &assemble_b_family(&base.with_r(r)?)?.blocks {
            let g = graph_projection(&b.matrix)?;
            idem = idem.max(g.idempotency);
            sym = sym.max(g.symmetry);
            ill |= g.ill_conditioned;
        }
    }
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("graph projection ‖P² − P‖", idem, tol));
    out.checks.push(Check::at_most("graph projection ‖P − Pᵀ‖", sym, tol));

    let mut table = Table::new("distances", &["R", "distance", "window", "worst_mode"]);
    let mut result_rows = Vec::new();
    let mut series = Vec::new();
    for w in [window, 0.5 * window] {
        let rows = graph_continuity_experiment(&base, &radii, w)?;
        for row in &rows {
            table.push(vec![fmt(row.r), fmt(row.distance), fmt(w), row.worst_mode.to_string()]);
            ill |= row.ill_conditioned;
        }
        let mut by_r: Vec<_> = rows.iter().collect();
        by_r.sort_by(|a, b| b.r.total_cmp(&a.r));
        let decreasing = by_r.windows(2).all(|x| x[1].distance < x[0].distance);
        out.lines.push(format!(
            "window {w}: distances {} ({})",
            by_r.iter().map(|r| format!("R={} → {:.4e}", r.r, r.distance)).collect::<Vec<_>>().join(", "),
            if decreasing { "decreasing" } else { "not monotone" }
        ));
        series.push(Series { label: format!("window {w}"), points: by_r.iter().map(|r| (r.r, r.distance)).collect() });
        result_rows.push(json!({ "window": w, "rows": rows, "decreasing": decreasing }));
    }
    if ill {
        out.lines.push("warning: ill-conditioned normal matrix in at least one block".into());
    }
    out.plots.push(Plot { name: "distances".into(), title: "windowed graph distance to R = 0".into(), x_label: "R".into(), y_label: "distance".into(), log_y: true, series });
    out.tables.push(table);
    out.summary.insert("idempotency".into(), idem);
    out.result = json!({ "idempotency": idem, "symmetry": sym, "ill_conditioned": ill, "windows": result_rows });
    Ok(out)
}

// -------------------------------------------------------------- divergence

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceParams {
    /// Residue u_* as RE or RE,IM.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ustar: Option<ComplexArg>,
    /// Inner radii ε; a single value means the decades 1e-1 down to it.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    /// Relative tolerance of the slope against 2π|u_*|².
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

fn eps_list(eps: Option<&Vec<f64>>) -> CliResult<Vec<f64>> {
    let list = match eps {
        None => vec![1e-1, 1e-2, 1e-3, 1e-4],
        Some(v) if v.len() == 1 => {
            let e = v[0];
            if !(e > 0.0 && e < 0.1) {
                return Err(config_err(format!("single eps {e} must lie in (0, 0.1)")));
            }
            let decades = (-e.log10()).floor() as i32;
            let mut d: Vec<f64> = (1..=decades).map(|k| 10f64.powi(-k)).collect();
            if (d.last().copied().unwrap_or(1.0) / e - 1.0).abs() > 1e-12 {
                d.push(e);
            }
            d
        }
        Some(v) => v.clone(),
    };
    if list.len() < 2 || list.iter().any(|&e| !(e > 0.0 && e < 1.0)) || list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(config_err("eps must be a decreasing sequence of at least two values in (0, 1)"));
    }
    Ok(list)
}

pub fn divergence(p: &DivergenceParams, _ctx: &Context) -> CliResult<Outcome> {
    let u = p.ustar.map_or(Complex64::new(1.0, 0.0), |c| c.value());
    let eps = eps_list(p.eps.as_ref())?;
    let tol = p.tolerance.unwrap_or(0.01);
    let scan = l2_divergence_scan(u, &eps);
    let mut out = Outcome::default();
    if u.norm() > 0.0 {
        out.checks.push(Check::at_most("relative slope error", scan.relative_error(), tol));
    } else {
        out.checks.push(Check::flag("partial norms finite and zero", scan.partial.iter().all(|x| x.is_finite() && *x == 0.0)));
    }
    let mut table = Table::new("partial", &["eps", "log_inv_eps", "partial_norm"]);
    for (e, n) in scan.eps.iter().zip(&scan.partial) {
        table.push(vec![fmt(*e), fmt(-e.ln()), fmt(*n)]);
    }
    out.tables.push(table);
    out.plots.push(Plot {
        name: "partial".into(),
        title: "partial L² norm of u*/z".into(),
        x_label: "log(1/ε)".into(),
        y_label: "norm²".into(),
        log_y: false,
        series: vec![Series { label: format!("|u*| = {}", u.norm()), points: scan.eps.iter().zip(&scan.partial).map(|(e, n)| (-e.ln(), *n)).collect() }],
    });
    out.summary.insert("slope".into(), scan.slope);
    out.lines.push(format!("fitted slope = {:.4} (2π|u*|² = {:.4})", scan.slope, scan.expected_slope));
    out.result = serde_json::to_value(&scan)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> (tempfile::TempDir, Context) {
        let dir = tempfile::tempdir().unwrap();
        let cache = ProfileCache::new(dir.path());
        (dir, Context { seed: 1, cache })
    }

    #[test]
    fn cohomology_row_format() {
        let (row, ok) = cohomology_row(2, 4, false).unwrap();
        assert!(ok);
        assert_eq!(row.line(), "(2, 4, 0, 6, 0, -6, 6, MATCH)");
        assert!(matches!(cohomology_row(2, 3, false), Err(CliError::Config(_))));
    }

    #[test]
    fn eps_lists() {
        assert_eq!(eps_list(Some(&vec![1e-4])).unwrap(), vec![1e-1, 1e-2, 1e-3, 1e-4]);
        assert_eq!(eps_list(Some(&vec![5e-3])).unwrap(), vec![1e-1, 1e-2, 5e-3]);
        assert!(eps_list(Some(&vec![0.5])).is_err());
        assert!(eps_list(Some(&vec![1e-2, 1e-1])).is_err());
    }

    #[test]
    fn divergence_default() {
        let (_d, c) = ctx();
        let out = divergence(&DivergenceParams { ustar: Some(ComplexArg { re: 1.0, im: 0.0 }), eps: Some(vec![1e-4]), tolerance: None }, &c).unwrap();
        assert!(out.passed());
        assert!((out.summary["slope"] - 2.0 * PI).abs() < 0.01 * 2.0 * PI);
    }

    #[test]
    fn metric_default() {
        let (_d, c) = ctx();
        let out = metric(&MetricParams::default(), &c).unwrap();
        assert!(out.passed(), "{:?}", out.checks);
    }

    #[test]
    fn model_default() {
        let (_d, c) = ctx();
        let out = model(&ModelParams::default(), &c).unwrap();
        assert!(out.passed(), "{:?}", out.checks);
    }

    #[test]
    fn empty_ranges_are_config_errors() {
        let (_d, c) = ctx();
        assert!(matches!(spectrum(&SpectrumParams { r: Some(vec![]), ..Default::default() }, &c), Err(CliError::Config(_))));
        assert!(matches!(fiducial(&FiducialParams { t: Some(vec![]), ..Default::default() }, &c), Err(CliError::Config(_))));
    }
}
