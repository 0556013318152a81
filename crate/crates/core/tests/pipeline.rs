//! End-to-end paths through the public API.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hitchin_core::fields::{det_higgs, residual_rescaled};
use hitchin_core::fit::least_squares_line;
use hitchin_core::grid::{PolarGrid, Stencil};
use hitchin_core::io::{FieldDocument, SurfaceDocument};
use hitchin_core::linop::{hodge_identity_check_exact, SmoothOneForm};
use hitchin_core::localsys::fiber_dimension;
use hitchin_core::models::{fiducial_pair, FiducialOptions, ProfileCache};
use hitchin_core::surface::build_plumbing;

#[test]
fn fiber_dimension_is_six_genus_minus_six() {
    for g in 2..=8 {
        assert_eq!(fiber_dimension(g).unwrap() as i64, 6 * (g - 1));
    }
    assert!(fiber_dimension(1).is_err());
}

#[test]
fn cached_profile_reproduces_the_solved_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ProfileCache::new(dir.path());
    let fresh = cache.get_or_solve(2.0, 1.0, FiducialOptions::default()).unwrap();
    let loaded = cache.get_or_solve(2.0, 1.0, FiducialOptions::default()).unwrap();
    assert_eq!(fresh.values(), loaded.values());

    let grid = PolarGrid::annulus(0.05, 1.0, 128, 64).unwrap();
    let pair = fiducial_pair(&loaded, &grid).unwrap();
    let r = residual_rescaled(&pair.connection, &pair.higgs, 2.0, Stencil::high_order()).unwrap();
    assert!(r.sup() <= 1e-6, "{}", r.sup());
    for (q, z) in det_higgs(&pair.higgs).values.iter().zip(det_higgs(&pair.higgs).lattice().points) {
        assert!((q + z).norm() <= 1e-12 * (1.0 + z.norm()));
    }

    // documents round-trip the fields exactly
    let doc = FieldDocument::higgs(&pair.higgs);
    let back = FieldDocument::from_json(&doc.to_json().unwrap()).unwrap().into_higgs().unwrap();
    assert_eq!(back, pair.higgs);
}

#[test]
fn surface_document_round_trip() {
    let s = build_plumbing(2, &[Complex64::new(0.1, 0.0)]).unwrap();
    let doc = SurfaceDocument::new(&s, &[], None);
    let parts = SurfaceDocument::from_json(&doc.to_json().unwrap()).unwrap().into_parts().unwrap();
    assert_eq!(parts.surface, s);
}

#[test]
fn hodge_defect_converges_at_second_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let a_form = SmoothOneForm::random(&mut rng, 2, 0.5);
    let alpha_form = SmoothOneForm::random(&mut rng, 2, 1.0);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for n in [24, 48, 96, 192] {
        let g = PolarGrid::annulus((-1.0f64).exp(), 1.0, n, n).unwrap();
        let (alpha, dbar) = alpha_form.sample(&g);
        let e = hodge_identity_check_exact(&a_form.as_connection(&g).unwrap(), &alpha, &dbar, Stencil::second_order()).unwrap().max();
        xs.push(g.ds().ln());
        ys.push(e.ln());
    }
    let order = least_squares_line(&xs, &ys).0;
    assert!((order - 2.0).abs() < 0.3, "order {order}");
}
