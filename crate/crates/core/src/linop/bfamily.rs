//! Mode-wise discretization of `∂̄` on line-bundle coefficients `γ = u dz/z`
//! along a neck that pinches as `R = |t|² → 0`.
//!
//! Writing `u = Σ u_n(τ) e^{inθ}`, each Fourier mode satisfies the real ODE
//! `(∂_τ + n) u_n = 0` on the `+` side. For `R > 0` the neck is one cylinder
//! `σ ∈ [0, 2L]`, `L = ½ log(1/R)`, and the `−` side coefficient is `v = −u`.
//! For `R = 0` it splits into two half-cylinders of length `T`, with `u` on
//! the `+` half and `v` (mode `−n` in the `w` angle) on the `−` half, coupled
//! only through the matching condition `u(node) = −v(node)` in mode 0.
//!
//! Every piece is discretized with the box scheme on the common spacing
//! `h = T/(M − 1)`; constraint rows carry weight `1/h` to match the
//! derivative rows.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

/// Cap at the outer (non-nodal) ends of the neck.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterCap {
    /// `u = 0` at both outer ends for every `n ≠ 0`.
    #[default]
    Dirichlet,
    /// Spectral cap: only the modes decaying into the neck are fixed at each
    /// end (`n > 0` at the `+` end, `n < 0` at the `−` end).
    Aps,
}

/// Measure used for the `L²` norms of `u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    /// `dr∧dθ` with `r = e^{−τ}` measured from each outer end.
    #[default]
    Radial,
    /// `dτ∧dθ`.
    Cylindrical,
}

/// Condition at the node for `R = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeCondition {
    /// `u(node) + v(node) = 0` in mode 0, decay in the other modes.
    #[default]
    Matching,
    /// `u(node) = v(node) = 0` in every mode.
    Dirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BFamilyConfig {
    /// `R = |t|²`; 0 means pinched.
    pub r: f64,
    /// Truncation length `T` of each half-cylinder at `R = 0`.
    pub truncation: f64,
    /// Modes `−N..=N`.
    pub modes: usize,
    /// Nodes `M` per half-cylinder of length `T`.
    pub radial: usize,
    pub cap: OuterCap,
    pub node: NodeCondition,
    pub weight: Weight,
}

impl BFamilyConfig {
    pub fn new(r: f64, truncation: f64, modes: usize, radial: usize) -> Result<Self> {
        let c = Self { r, truncation, modes, radial, cap: OuterCap::default(), node: NodeCondition::default(), weight: Weight::default() };
        c.validate()?;
        Ok(c)
    }

    pub fn with_r(&self, r: f64) -> Result<Self> {
        let c = Self { r, ..*self };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !(self.truncation > 0.0 && self.truncation.is_finite()) {
            return Err(Error::InvalidParameter(format!("truncation length {} must be positive", self.truncation)));
        }
        if self.modes < 4 {
            return Err(Error::InvalidParameter(format!("mode range N = {} must be at least 4", self.modes)));
        }
        if self.radial < 32 {
            return Err(Error::InvalidParameter(format!("radial resolution M = {} must be at least 32", self.radial)));
        }
        if !(self.r >= 0.0 && self.r < 1.0) {
            return Err(Error::InvalidParameter(format!("R = {} outside [0, 1)", self.r)));
        }
        if self.r > 0.0 && (self.half_length() / self.spacing()).round() < 1.0 {
            return Err(Error::InvalidParameter(format!("neck for R = {} is shorter than one cell", self.r)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.truncation / (self.radial - 1) as f64
    }

    /// `L = ½ log(1/R)` (infinite at `R = 0`).
    pub fn half_length(&self) -> f64 {
        if self.r == 0.0 {
            f64::INFINITY
        } else {
            -0.5 * self.r.ln()
        }
    }

    pub fn mode_range(&self) -> impl Iterator<Item = i64> {
        let n = self.modes as i64;
        -n..=n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// One cylinder of `cells` cells (`2K`).
    Cylinder { cells: usize },
    /// Two half-cylinders of `cells` cells each.
    Halves { cells: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Box,
    OuterCap,
    Node,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeBlock {
    pub n: i64,
    pub matrix: DMatrix<f64>,
    pub rows: Vec<RowKind>,
    /// Nodal samples `u` enter the block as `col_scale · u`.
    pub col_scale: Vec<f64>,
}

impl ModeBlock {
    /// Largest box-row residual of the block applied to nodal samples of `u`.
    pub fn box_residual(&self, samples: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_iterator(samples.len(), samples.iter().zip(&self.col_scale).map(|(u, w)| u * w));
        let out = &self.matrix * v;
        self.rows.iter().zip(out.iter()).filter(|(k, _)| **k == RowKind::Box).map(|(_, x)| x.abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BOperatorFamily {
    pub config: BFamilyConfig,
    pub geometry: Geometry,
    pub spacing: f64,
    pub blocks: Vec<ModeBlock>,
}

struct Builder {
    rows: Vec<Vec<(usize, f64)>>,
    kinds: Vec<RowKind>,
}

impl Builder {
    fn new() -> Self {
        Self { rows: Vec::new(), kinds: Vec::new() }
    }

    fn push(&mut self, kind: RowKind, entries: Vec<(usize, f64)>) {
        self.rows.push(entries);
        self.kinds.push(kind);
    }

    /// `(U_{j+1} − U_j)/h + c (U_{j+1} + U_j)/2` on columns `(j, j+1)`.
    fn box_row(&mut self, j: usize, h: f64, c: f64) {
        self.push(RowKind::Box, vec![(j, -1.0 / h + 0.5 * c), (j + 1, 1.0 / h + 0.5 * c)]);
    }

    /// `tau[j]` is the distance of column `j` from its outer end; rows sit
    /// at the mean position of their columns.
    fn finish(self, n: i64, tau: &[f64], weight: Weight) -> ModeBlock {
        let sqrt_w = |t: f64| match weight {
            Weight::Radial => (-0.5 * t).exp(),
            Weight::Cylindrical => 1.0,
        };
        let col_scale: Vec<f64> = tau.iter().map(|&t| sqrt_w(t)).collect();
        let mut m = DMatrix::zeros(self.rows.len(), tau.len());
        for (i, row) in self.rows.iter().enumerate() {
            let at = row.iter().map(|&(j, _)| tau[j]).sum::<f64>() / row.len() as f64;
            let rw = sqrt_w(at);
            for &(j, v) in row {
                m[(i, j)] += rw * v / col_scale[j];
            }
        }
        ModeBlock { n, matrix: m, rows: self.kinds, col_scale }
    }
}

fn caps(cap: OuterCap, n: i64) -> (bool, bool) {
    match cap {
        OuterCap::Dirichlet => (n != 0, n != 0),
        OuterCap::Aps => (n > 0, n < 0),
    }
}

fn cylinder_block(config: &BFamilyConfig, n: i64, cells: usize, h: f64) -> ModeBlock {
    let nf = n as f64;
    let mut b = Builder::new();
    let (plus_cap, minus_cap) = caps(config.cap, n);
    if plus_cap {
        b.push(RowKind::OuterCap, vec![(0, 1.0 / h)]);
    }
    for j in 0..cells {
        b.box_row(j, h, nf);
    }
    if minus_cap {
        b.push(RowKind::OuterCap, vec![(cells, 1.0 / h)]);
    }
    let tau: Vec<f64> = (0..=cells).map(|j| j.min(cells - j) as f64 * h).collect();
    b.finish(n, &tau, config.weight)
}

fn halves_block(config: &BFamilyConfig, n: i64, cells: usize, h: f64) -> ModeBlock {
    let nf = n as f64;
    let v0 = cells + 1;
    let mut b = Builder::new();
    let (plus_cap, minus_cap) = caps(config.cap, n);
    if plus_cap {
        b.push(RowKind::OuterCap, vec![(0, 1.0 / h)]);
    }
    for k in 0..cells {
        b.box_row(k, h, nf);
    }
    if minus_cap {
        b.push(RowKind::OuterCap, vec![(v0, 1.0 / h)]);
    }
    for k in 0..cells {
        b.box_row(v0 + k, h, -nf);
    }
    match (n, config.node) {
        (0, NodeCondition::Matching) => b.push(RowKind::Node, vec![(cells, 1.0 / h), (v0 + cells, 1.0 / h)]),
        _ => {
            b.push(RowKind::Node, vec![(cells, 1.0 / h)]);
            b.push(RowKind::Node, vec![(v0 + cells, 1.0 / h)]);
        }
    }
    let tau: Vec<f64> = (0..2 * cells + 2).map(|j| (j % (cells + 1)) as f64 * h).collect();
    b.finish(n, &tau, config.weight)
}

pub fn assemble_b_family(config: &BFamilyConfig) -> Result<BOperatorFamily> {
    config.validate()?;
    let h = config.spacing();
    let geometry = if config.r == 0.0 {
        Geometry::Halves { cells: config.radial - 1 }
    } else {
        Geometry::Cylinder { cells: 2 * (config.half_length() / h).round() as usize }
    };
    let modes: Vec<i64> = config.mode_range().collect();
    let blocks = exec::map_slice(&modes, |&n| match geometry {
        Geometry::Cylinder { cells } => cylinder_block(config, n, cells, h),
        Geometry::Halves { cells } => halves_block(config, n, cells, h),
    });
    Ok(BOperatorFamily { config: *config, geometry, spacing: h, blocks })
}

/// Kernel dimension of mode `n` from the closed-form solutions `c e^{∓nτ}` on
/// each piece and the rank of the constraints they must satisfy.
pub fn analytic_kernel_dimension(config: &BFamilyConfig, n: i64) -> usize {
    let nf = n as f64;
    let (plus_cap, minus_cap) = caps(config.cap, n);
    let mut constraints: Vec<Vec<f64>> = Vec::new();
    let pieces = if config.r > 0.0 {
        let length = 2.0 * config.half_length();
        // basis e^{−nσ}
        if plus_cap {
            constraints.push(vec![1.0]);
        }
        if minus_cap {
            constraints.push(vec![(-nf * length).exp()]);
        }
        1
    } else {
        let t = config.truncation;
        // basis (e^{−nτ}, 0), (0, e^{nτ})
        if plus_cap {
            constraints.push(vec![1.0, 0.0]);
        }
        if minus_cap {
            constraints.push(vec![0.0, 1.0]);
        }
        match (n, config.node) {
            (0, NodeCondition::Matching) => constraints.push(vec![1.0, 1.0]),
            _ => {
                constraints.push(vec![(-nf * t).exp(), 0.0]);
                constraints.push(vec![0.0, (nf * t).exp()]);
            }
        }
        2
    };
    if constraints.is_empty() {
        return pieces;
    }
    let rows: Vec<f64> = constraints
        .iter()
        .flat_map(|r| {
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            r.iter().map(move |x| x / norm)
        })
        .collect();
    let m = DMatrix::from_row_slice(constraints.len(), pieces, &rows);
    let rank = m.singular_values().iter().filter(|&&s| s > 1e-10).count();
    pieces - rank
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    pub n: i64,
    /// Smallest singular values, ascending (zeros for missing rank).
    pub smallest: Vec<f64>,
    pub near_kernel: usize,
    pub expected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub r: f64,
    pub sigma_max: f64,
    pub threshold: f64,
    pub near_kernel_count: usize,
    pub expected_count: usize,
    /// Smallest singular value above the threshold over the largest below it.
    pub gap_ratio: f64,
    pub modes: Vec<ModeSpectrum>,
}

/// Relative kernel threshold.
pub const KERNEL_THRESHOLD: f64 = 1e-6;

fn padded_singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let svd = m.clone().try_svd(false, false, f64::EPSILON, 10_000).ok_or_else(|| Error::Solver("SVD did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.resize(m.ncols(), 0.0);
    s.sort_by(f64::total_cmp);
    Ok(s)
}

pub fn small_singular_values(family: &BOperatorFamily, count: usize) -> Result<SpectrumReport> {
    let spectra = exec::map_slice(&family.blocks, |b| padded_singular_values(&b.matrix));
    let spectra: Vec<Vec<f64>> = spectra.into_iter().collect::<Result<_>>()?;
    let sigma_max = spectra.iter().flat_map(|s| s.last().copied()).fold(0.0, f64::max);
    let threshold = KERNEL_THRESHOLD * sigma_max;
    let mut below_max: f64 = 0.0;
    let mut above_min = f64::INFINITY;
    let modes: Vec<ModeSpectrum> = family
        .blocks
        .iter()
        .zip(&spectra)
        .map(|(b, s)| {
            let near = s.iter().filter(|&&x| x < threshold).count();
            for &x in s {
                if x < threshold {
                    below_max = below_max.max(x);
                } else {
                    above_min = above_min.min(x);
                }
            }
            ModeSpectrum {
                n: b.n,
                smallest: s.iter().take(count).copied().collect(),
                near_kernel: near,
                expected: analytic_kernel_dimension(&family.config, b.n),
            }
        })
        .collect();
    let near_kernel_count = modes.iter().map(|m| m.near_kernel).sum();
    let expected_count = modes.iter().map(|m| m.expected).sum();
    let gap_ratio = if below_max > 0.0 { above_min / below_max } else { f64::INFINITY };
    Ok(SpectrumReport { r: family.config.r, sigma_max, threshold, near_kernel_count, expected_count, gap_ratio, modes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BFamilyConfig {
        BFamilyConfig::new(0.0, 8.0, 4, 64).unwrap()
    }

    #[test]
    fn validation() {
        assert!(BFamilyConfig::new(0.0, 0.0, 4, 64).is_err());
        assert!(BFamilyConfig::new(0.0, 8.0, 3, 64).is_err());
        assert!(BFamilyConfig::new(0.0, 8.0, 4, 16).is_err());
        assert!(BFamilyConfig::new(1.5, 8.0, 4, 64).is_err());
    }

    #[test]
    fn pinched_kernel_is_the_matched_constant() {
        let fam = assemble_b_family(&base()).unwrap();
        let rep = small_singular_values(&fam, 3).unwrap();
        assert_eq!(rep.near_kernel_count, 1);
        assert_eq!(rep.expected_count, 1);
        let m0 = rep.modes.iter().find(|m| m.n == 0).unwrap();
        assert_eq!(m0.near_kernel, 1);
        // kernel vector is (c, −c)
        let block = fam.blocks.iter().find(|b| b.n == 0).unwrap();
        let cells = 63;
        let mut v = vec![1.0; cells + 1];
        v.extend(vec![-1.0; cells + 1]);
        assert!(block.box_residual(&v) < 1e-12);
        let scaled: Vec<f64> = v.iter().zip(&block.col_scale).map(|(a, b)| a * b).collect();
        let out = &block.matrix * nalgebra::DVector::from_vec(scaled);
        assert!(out.amax() < 1e-12);
    }

    #[test]
    fn count_is_stable_in_r_and_resolution() {
        for (cap, weight) in [(OuterCap::Dirichlet, Weight::Radial), (OuterCap::Aps, Weight::Radial), (OuterCap::Dirichlet, Weight::Cylindrical)] {
            for (m, n) in [(64, 4), (128, 8)] {
                for r in [0.04, 0.01, 0.0025, 0.0] {
                    let mut cfg = BFamilyConfig::new(r, 8.0, n, m).unwrap();
                    cfg.cap = cap;
                    cfg.weight = weight;
                    let rep = small_singular_values(&assemble_b_family(&cfg).unwrap(), 2).unwrap();
                    assert_eq!(rep.near_kernel_count, 1, "{cap:?} {weight:?} R={r} M={m}");
                    assert_eq!(rep.expected_count, 1);
                    assert!(rep.gap_ratio > 1e6);
                }
            }
        }
    }

    #[test]
    fn dirichlet_node_drops_the_kernel() {
        let mut cfg = base();
        cfg.node = NodeCondition::Dirichlet;
        let rep = small_singular_values(&assemble_b_family(&cfg).unwrap(), 2).unwrap();
        assert_eq!(rep.near_kernel_count, 0);
        assert_eq!(rep.expected_count, 0);
    }

    #[test]
    fn nonzero_modes_are_bounded_below_uniformly_in_t() {
        // The weight conjugates ∂_τ + n into ∂_τ + n + ½ (radial) or leaves it
        // (cylindrical); the symbol of either is at least the shift.
        for (weight, bound) in [(Weight::Radial, 0.5), (Weight::Cylindrical, 1.0)] {
            let mut mins = Vec::new();
            for t in [4.0, 8.0, 16.0, 32.0] {
                let mut cfg = BFamilyConfig::new(0.0, t, 4, ((t / 8.0) * 63.0) as usize + 1).unwrap();
                cfg.weight = weight;
                let rep = small_singular_values(&assemble_b_family(&cfg).unwrap(), 1).unwrap();
                mins.push(rep.modes.iter().filter(|m| m.n != 0).map(|m| m.smallest[0]).fold(f64::INFINITY, f64::min));
            }
            assert!(mins.iter().all(|&m| m >= bound * (1.0 - 1e-9)), "{weight:?} {mins:?}");
            assert!(mins[3] < 1.1 * bound, "{weight:?} {mins:?}");
        }
    }

    #[test]
    fn blocks_match_exact_mode_solutions() {
        let cfg = base();
        let fam = assemble_b_family(&cfg).unwrap();
        let h = fam.spacing;
        for b in &fam.blocks {
            let nf = b.n as f64;
            let cells = cfg.radial - 1;
            let mut u: Vec<f64> = (0..=cells).map(|k| (-nf * k as f64 * h).exp()).collect();
            u.extend((0..=cells).map(|k| (nf * k as f64 * h).exp()));
            let scale = u.iter().fold(0.0f64, |a, &x| a.max(x));
            let truncation = h * h * nf.abs().powi(3) / 12.0 * scale;
            assert!(b.box_residual(&u) <= 10.0 * truncation + 1e-9 * scale, "mode {}", b.n);
        }
    }

    #[test]
    fn geometry_only_changes_length_and_constraints() {
        // unweighted, so the raw stencil entries are visible
        let mut cfg = base();
        cfg.weight = Weight::Cylindrical;
        let pinched = assemble_b_family(&cfg).unwrap();
        let smooth = assemble_b_family(&cfg.with_r(0.01).unwrap()).unwrap();
        let h = pinched.spacing;
        for (p, s) in pinched.blocks.iter().zip(&smooth.blocks) {
            let nf = p.n as f64;
            let entries = |b: &ModeBlock, i: usize| -> Vec<f64> { b.matrix.row(i).iter().copied().filter(|x| *x != 0.0).collect() };
            for (i, kind) in s.rows.iter().enumerate() {
                match kind {
                    RowKind::Box => assert_eq!(entries(s, i), vec![-1.0 / h + 0.5 * nf, 1.0 / h + 0.5 * nf]),
                    _ => assert_eq!(entries(s, i), vec![1.0 / h]),
                }
            }
            let plus: Vec<usize> = (0..p.rows.len()).filter(|&i| p.rows[i] == RowKind::Box).take(p.matrix.ncols() / 2 - 1).collect();
            for i in plus {
                assert_eq!(entries(p, i), vec![-1.0 / h + 0.5 * nf, 1.0 / h + 0.5 * nf]);
            }
            assert!(!s.rows.contains(&RowKind::Node));
        }
    }
}
