//! Invariants checked over random inputs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hitchin_core::fields::{det_higgs, gauge_act, residual_fixed_det, GaugeFlavor, GaugeTransformation, HiggsField};
use hitchin_core::grid::{PolarGrid, Stencil};
use hitchin_core::linalg::{self, random_su2_group, M2};
use hitchin_core::linop::{
    assemble_b_family, graph_projection, l2_divergence_scan, linearized_apply, small_singular_values, BFamilyConfig, LinearizedInput,
    OuterCap, SmoothOneForm, Weight,
};
use hitchin_core::localsys::{build_local_system, euler_check, metric_pairing, twisted_cohomology, NeckLineBundleForm, SignMap};
use hitchin_core::models::{model_pair, ModelParameters};
use hitchin_core::surface::{AnnulusChart, Side};

fn grid() -> PolarGrid {
    PolarGrid::annulus(0.2, 1.0, 40, 24).unwrap()
}

/// A connection that solves nothing, paired with a model Higgs field.
fn generic_pair(seed: u64, alpha: f64, c: Complex64) -> (hitchin_core::fields::UnitaryConnection, HiggsField) {
    let g = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = SmoothOneForm::random(&mut rng, 2, 0.5).as_connection(&g).unwrap();
    let chart = AnnulusChart::with_grid(Side::Plus, g).unwrap();
    let phi = model_pair(ModelParameters::new(alpha, c).unwrap(), &chart).unwrap().higgs;
    (a.in_frame(phi.frame()), phi)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn residual_is_invariant_under_constant_unitary_gauge(seed in any::<u64>(), alpha in 0.05f64..0.95, re in -1.5f64..1.5, im in -1.5f64..1.5) {
        let (a, phi) = generic_pair(seed, alpha, Complex64::new(re, im));
        let g = GaugeTransformation::constant(a.grid(), GaugeFlavor::Unitary, random_su2_group(&mut ChaCha8Rng::seed_from_u64(seed ^ 1))).unwrap();
        let (a2, phi2) = gauge_act(&g, &a, &phi, Stencil::default()).unwrap();
        let r1 = residual_fixed_det(&a, &phi, Stencil::default()).unwrap();
        let r2 = residual_fixed_det(&a2, &phi2, Stencil::default()).unwrap();
        for (d1, d2) in r1.defects.iter().zip(&r2.defects) {
            prop_assert!(rel(d1.norms.sup, d2.norms.sup) < 1e-12, "{} {} vs {}", d1.equation, d1.norms.sup, d2.norms.sup);
            prop_assert!(rel(d1.norms.l2, d2.norms.l2) < 1e-12);
        }
    }

    #[test]
    fn det_is_invariant_under_complex_gauge(seed in any::<u64>(), alpha in 0.05f64..0.95, re in -1.5f64..1.5) {
        let (a, phi) = generic_pair(seed, alpha, Complex64::new(re, 0.3));
        let m = linalg::random_matrix(&mut ChaCha8Rng::seed_from_u64(seed ^ 2), 1.0);
        // [[a, b], [c, (1 + bc)/a]] has determinant one
        let a0 = m[(0, 0)] + Complex64::new(2.0, 0.0);
        let g = linalg::off_diag(m[(0, 1)], m[(1, 0)]) + linalg::diag(a0, (Complex64::new(1.0, 0.0) + m[(0, 1)] * m[(1, 0)]) / a0);
        let g = GaugeTransformation::constant(a.grid(), GaugeFlavor::Complex, g).unwrap();
        let (_, phi2) = gauge_act(&g, &a, &phi, Stencil::default()).unwrap();
        let (q1, q2) = (det_higgs(&phi), det_higgs(&phi2));
        for (x, y) in q1.values.iter().zip(&q2.values) {
            prop_assert!((x - y).norm() <= 1e-12 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn linearization_is_linear(seed in any::<u64>(), lambda in -3.0f64..3.0) {
        let (a, phi) = generic_pair(seed, 0.4, Complex64::new(0.7, -0.2));
        let g = a.grid().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let input = |rng: &mut ChaCha8Rng| {
            let (alpha, _) = SmoothOneForm::random(rng, 2, 1.0).sample(&g);
            let p: Vec<M2> = (0..g.len()).map(|_| linalg::trace_free(&linalg::random_matrix(rng, 1.0))).collect();
            LinearizedInput::new(alpha, p).unwrap()
        };
        let (x, y) = (input(&mut rng), input(&mut rng));
        let lx = linearized_apply(&a, &phi, &x, Stencil::default()).unwrap();
        let ly = linearized_apply(&a, &phi, &y, Stencil::default()).unwrap();
        let lxy = linearized_apply(&a, &phi, &x.scaled_add(lambda, &y), Stencil::default()).unwrap();
        let scale = lx.first.iter().chain(&ly.first).chain(&lx.second).chain(&ly.second).map(linalg::norm).fold(1.0, f64::max);
        for k in 0..g.len() {
            let d1 = lxy.first[k] - lx.first[k] - ly.first[k] * linalg::re(lambda);
            let d2 = lxy.second[k] - lx.second[k] - ly.second[k] * linalg::re(lambda);
            prop_assert!(linalg::norm(&d1).max(linalg::norm(&d2)) <= 1e-12 * scale * (1.0 + lambda.abs()));
        }
    }

    #[test]
    fn euler_characteristic_for_any_consistent_signs(genus in 2usize..5, half_k in 0usize..5, bits in any::<u32>()) {
        let k = 2 * half_k;
        let bit = |i: usize| if bits >> (i % 32) & 1 == 1 { -1i8 } else { 1 };
        let mut signs = SignMap {
            a: (0..genus).map(bit).collect(),
            b: (genus..2 * genus).map(bit).collect(),
            c: (0..k).map(|j| bit(2 * genus + j)).collect(),
        };
        // the surface relation forces Π ε(c_j) = 1
        if signs.c.iter().filter(|&&e| e < 0).count() % 2 == 1 {
            signs.c[0] = -signs.c[0];
        }
        let trivial = signs.is_trivial();
        let pres = build_local_system(genus as i64, k as i64, Some(signs)).unwrap();
        prop_assert!(euler_check(&pres).unwrap().consistent);
        let b = twisted_cohomology(&pres).unwrap().betti;
        prop_assert_eq!(b.h0, usize::from(trivial));
        if k > 0 {
            prop_assert_eq!(b.h2, 0);
        }
    }

    #[test]
    fn fiber_metric_is_symmetric_and_positive(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, w in 0.1f64..2.0, m in 1i32..4) {
        let g = PolarGrid::annulus(0.05, 1.0, 96, 32).unwrap();
        let x = NeckLineBundleForm::from_real_components(&g, &g.sample_log(|s, _| c1 + (w * s).sin()), &g.sample_log(|_, t| c2 * (f64::from(m) * t).cos())).unwrap();
        let y = NeckLineBundleForm::from_real_components(&g, &g.sample_log(|s, t| s * t.sin()), &g.sample_log(|s, _| (0.3 * s).exp())).unwrap();
        let (xy, yx) = (metric_pairing(&x, &y).unwrap(), metric_pairing(&y, &x).unwrap());
        prop_assert!(rel(xy, yx) < 1e-13);
        prop_assert!(metric_pairing(&x, &x).unwrap() > 0.0);
        prop_assert!(metric_pairing(&y, &y).unwrap() > 0.0);
    }

    #[test]
    fn near_kernel_count_is_stable(r in 1e-4f64..0.05, aps in any::<bool>(), cylindrical in any::<bool>()) {
        let mut cfg = BFamilyConfig::new(r, 8.0, 4, 64).unwrap();
        cfg.cap = if aps { OuterCap::Aps } else { OuterCap::Dirichlet };
        cfg.weight = if cylindrical { Weight::Cylindrical } else { Weight::Radial };
        let at_r = small_singular_values(&assemble_b_family(&cfg).unwrap(), 2).unwrap();
        let at_0 = small_singular_values(&assemble_b_family(&cfg.with_r(0.0).unwrap()).unwrap(), 2).unwrap();
        prop_assert_eq!(at_r.near_kernel_count, at_r.expected_count);
        prop_assert_eq!(at_r.near_kernel_count, at_0.near_kernel_count);
    }

    #[test]
    fn divergence_slope_matches_residue(re in -3.0f64..3.0, im in -3.0f64..3.0) {
        prop_assume!(re.hypot(im) > 0.05);
        let scan = l2_divergence_scan(Complex64::new(re, im), &[1e-1, 1e-2, 1e-3, 1e-4]);
        prop_assert!(scan.relative_error() < 0.01);
        prop_assert!(scan.partial.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn graph_projection_fixes_the_graph(rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-2.0..2.0));
        let g = graph_projection(&d).unwrap();
        prop_assert!(g.idempotency <= 1e-10 && g.symmetry <= 1e-10);
        let x = nalgebra::DVector::from_fn(cols, |_, _| rng.gen_range(-1.0..1.0));
        let v = nalgebra::DVector::from_iterator(cols + rows, x.iter().copied().chain((&d * &x).iter().copied()));
        prop_assert!((&g.p * &v - &v).amax() <= 1e-10 * (1.0 + v.amax()));
    }
}
