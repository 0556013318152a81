//! Graph projections of the mode blocks and their continuity as the neck
//! pinches, measured on a fixed window next to the outer ends.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::bfamily::{assemble_b_family, BFamilyConfig, BOperatorFamily, Geometry, ModeBlock, RowKind};
use crate::error::{Error, Result};
use crate::exec;

/// Condition number of `I + DᵀD` above which the projection is flagged.
pub const ILL_CONDITIONED: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphProjection {
    pub p: DMatrix<f64>,
    /// `‖P² − P‖_F`.
    pub idempotency: f64,
    /// `‖P − Pᵀ‖_F`.
    pub symmetry: f64,
    pub condition: f64,
    pub ill_conditioned: bool,
}

/// Orthogonal projection onto the graph of `D` in `domain ⊕ codomain`.
pub fn graph_projection(d: &DMatrix<f64>) -> Result<GraphProjection> {
    let (m, n) = d.shape();
    let normal = DMatrix::identity(n, n) + d.transpose() * d;
    let eig = normal.clone().symmetric_eigenvalues();
    let condition = eig.max() / eig.min();
    let chol = normal.cholesky().ok_or_else(|| Error::Solver("I + DᵀD is not positive definite".into()))?;
    let ninv = chol.inverse();
    let dn = d * &ninv;
    let mut p = DMatrix::zeros(n + m, n + m);
    p.view_mut((0, 0), (n, n)).copy_from(&ninv);
    p.view_mut((0, n), (n, m)).copy_from(&dn.transpose());
    p.view_mut((n, 0), (m, n)).copy_from(&dn);
    p.view_mut((n, n), (m, m)).copy_from(&(&dn * d.transpose()));
    let idempotency = (&p * &p - &p).norm();
    let symmetry = (&p - p.transpose()).norm();
    Ok(GraphProjection { p, idempotency, symmetry, condition, ill_conditioned: condition > ILL_CONDITIONED })
}

/// Indices (into `domain ⊕ codomain`) and signs of the window degrees of
/// freedom, listed in the same order for both geometries: `+` nodes, `−`
/// nodes, then `+` cap, `+` box rows, `−` cap, `−` box rows.
fn window_map(family: &BOperatorFamily, block: &ModeBlock, cells_c: usize) -> Vec<(usize, f64)> {
    let ncols = block.matrix.ncols();
    let caps: Vec<usize> = (0..block.rows.len()).filter(|&i| block.rows[i] == RowKind::OuterCap).collect();
    let boxes: Vec<usize> = (0..block.rows.len()).filter(|&i| block.rows[i] == RowKind::Box).collect();
    let cap_at = |col: usize| caps.iter().copied().find(|&i| block.matrix[(i, col)] != 0.0);
    let mut out = Vec::new();
    match family.geometry {
        Geometry::Halves { cells } => {
            let v0 = cells + 1;
            out.extend((0..=cells_c).map(|k| (k, 1.0)));
            out.extend((0..=cells_c).map(|k| (v0 + k, 1.0)));
            if let Some(i) = cap_at(0) {
                out.push((ncols + i, 1.0));
            }
            out.extend(boxes[..cells_c].iter().map(|&i| (ncols + i, 1.0)));
            if let Some(i) = cap_at(v0) {
                out.push((ncols + i, 1.0));
            }
            out.extend(boxes[cells..cells + cells_c].iter().map(|&i| (ncols + i, 1.0)));
        }
        Geometry::Cylinder { cells } => {
            // v = −u on the − side; box rows keep their sign under σ = 2L − τ.
            out.extend((0..=cells_c).map(|k| (k, 1.0)));
            out.extend((0..=cells_c).map(|k| (cells - k, -1.0)));
            if let Some(i) = cap_at(0) {
                out.push((ncols + i, 1.0));
            }
            out.extend(boxes[..cells_c].iter().map(|&i| (ncols + i, 1.0)));
            if let Some(i) = cap_at(cells) {
                out.push((ncols + i, -1.0));
            }
            out.extend((0..cells_c).map(|k| (ncols + boxes[cells - 1 - k], 1.0)));
        }
    }
    out
}

fn compress(p: &DMatrix<f64>, map: &[(usize, f64)]) -> DMatrix<f64> {
    DMatrix::from_fn(map.len(), map.len(), |a, b| map[a].1 * map[b].1 * p[(map[a].0, map[b].0)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub r: f64,
    /// `max_n ‖Q_R − Q_0‖₂` on the window.
    pub distance: f64,
    pub worst_mode: i64,
    pub ill_conditioned: bool,
}

fn windowed(family: &BOperatorFamily, window: f64) -> Result<Vec<(i64, DMatrix<f64>, bool)>> {
    let cells_c = (window / family.spacing).round() as usize;
    let out = exec::map_slice(&family.blocks, |b| {
        let g = graph_projection(&b.matrix)?;
        Ok((b.n, compress(&g.p, &window_map(family, b, cells_c)), g.ill_conditioned))
    });
    out.into_iter().collect()
}

fn check_window(configs: &[BFamilyConfig], window: f64) -> Result<()> {
    let shortest = configs.iter().map(|c| c.half_length().min(c.truncation)).fold(f64::INFINITY, f64::min);
    if !(window > 0.0 && window < shortest) {
        return Err(Error::InvalidParameter(format!("window {window} must lie in (0, {shortest})")));
    }
    if configs.iter().any(|c| (window / c.spacing()).round() < 1.0) {
        return Err(Error::InvalidParameter(format!("window {window} is shorter than one cell")));
    }
    if configs.windows(2).any(|w| w[0].spacing() != w[1].spacing() || w[0].modes != w[1].modes) {
        return Err(Error::InvalidParameter("compared families need the same spacing and modes".into()));
    }
    Ok(())
}

fn distance(a: &[(i64, DMatrix<f64>, bool)], b: &[(i64, DMatrix<f64>, bool)], r: f64) -> Result<ContinuityRow> {
    let mut row = ContinuityRow { r, distance: 0.0, worst_mode: 0, ill_conditioned: false };
    for ((n, qa, bad_a), (_, qb, bad_b)) in a.iter().zip(b) {
        if qa.shape() != qb.shape() {
            return Err(Error::Solver(format!("window shapes differ in mode {n}")));
        }
        let d = (qa - qb).singular_values().max();
        if d > row.distance {
            row.distance = d;
            row.worst_mode = *n;
        }
        row.ill_conditioned |= *bad_a || *bad_b;
    }
    Ok(row)
}

/// `max_n ‖Q_a − Q_b‖₂` for two families on the same window.
pub fn window_distance(a: &BFamilyConfig, b: &BFamilyConfig, window: f64) -> Result<ContinuityRow> {
    check_window(&[*a, *b], window)?;
    let qa = windowed(&assemble_b_family(a)?, window)?;
    let qb = windowed(&assemble_b_family(b)?, window)?;
    distance(&qa, &qb, a.r)
}

/// Distance of the windowed graph projections at each `R` from the pinched
/// ones built with the same `T`, `N`, `M`.
pub fn graph_continuity_experiment(base: &BFamilyConfig, radii: &[f64], window: f64) -> Result<Vec<ContinuityRow>> {
    let mut configs = vec![base.with_r(0.0)?];
    for &r in radii {
        configs.push(base.with_r(r)?);
    }
    check_window(&configs, window)?;
    let reference = windowed(&assemble_b_family(&configs[0])?, window)?;
    configs[1..]
        .iter()
        .map(|c| {
            let q = windowed(&assemble_b_family(c)?, window)?;
            distance(&q, &reference, c.r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_is_orthogonal_and_idempotent() {
        let cfg = BFamilyConfig::new(0.01, 8.0, 4, 64).unwrap();
        let fam = assemble_b_family(&cfg).unwrap();
        for b in &fam.blocks {
            let g = graph_projection(&b.matrix).unwrap();
            assert!(g.idempotency <= 1e-10, "{}", g.idempotency);
            assert!(g.symmetry <= 1e-10);
            assert!(!g.ill_conditioned);
        }
    }

    #[test]
    fn zero_and_identity_oracles() {
        let zero = graph_projection(&DMatrix::zeros(3, 3)).unwrap();
        let mut expect = DMatrix::zeros(6, 6);
        expect.view_mut((0, 0), (3, 3)).fill_with_identity();
        assert_eq!(zero.p, expect);
        let id = graph_projection(&DMatrix::identity(3, 3)).unwrap();
        let half = DMatrix::from_fn(6, 6, |i, j| if i % 3 == j % 3 { 0.5 } else { 0.0 });
        assert!((id.p - half).amax() < 1e-15);
    }

    #[test]
    fn identical_r_has_zero_distance() {
        let cfg = BFamilyConfig::new(0.01, 8.0, 4, 64).unwrap();
        assert_eq!(window_distance(&cfg, &cfg, 1.5).unwrap().distance, 0.0);
    }

    #[test]
    fn projection_fixes_graph_vectors() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
        let g = graph_projection(&d).unwrap();
        let x = nalgebra::DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let dx = &d * &x;
        let v = nalgebra::DVector::from_iterator(5, x.iter().chain(dx.iter()).copied());
        assert!((&g.p * &v - &v).amax() < 1e-12);
    }

    #[test]
    fn window_identification_is_exact_on_a_long_neck() {
        // A neck much longer than T sees the same window as the halves, up
        // to the far-end constraints.
        let base = BFamilyConfig::new(0.0, 8.0, 4, 64).unwrap();
        let rows = graph_continuity_experiment(&base, &[0.04, 0.01, 0.0025], 1.5).unwrap();
        assert!(rows.iter().all(|r| r.distance.is_finite() && !r.ill_conditioned));
        assert!(rows[2].distance < rows[0].distance, "{rows:?}");
    }

    #[test]
    fn bad_window_is_rejected() {
        let base = BFamilyConfig::new(0.0, 8.0, 4, 64).unwrap();
        assert!(graph_continuity_experiment(&base, &[0.04], 5.0).is_err());
        assert!(graph_continuity_experiment(&base, &[0.04], 0.0).is_err());
    }
}
