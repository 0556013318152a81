//! 2×2 complex matrix helpers shared by the field and operator modules.

use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::Rng;

pub type M2 = Matrix2<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn zero() -> M2 {
    M2::zeros()
}

pub fn identity() -> M2 {
    M2::identity()
}

/// σ₃ = diag(1, −1).
pub fn sigma3() -> M2 {
    M2::new(re(1.0), re(0.0), re(0.0), re(-1.0))
}

pub fn diag(a: Complex64, b: Complex64) -> M2 {
    M2::new(a, re(0.0), re(0.0), b)
}

pub fn off_diag(upper: Complex64, lower: Complex64) -> M2 {
    M2::new(re(0.0), upper, lower, re(0.0))
}

#[inline]
pub fn comm(a: &M2, b: &M2) -> M2 {
    a * b - b * a
}

#[inline]
pub fn adj(a: &M2) -> M2 {
    a.adjoint()
}

/// Frobenius norm.
#[inline]
pub fn norm(a: &M2) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[inline]
pub fn trace(a: &M2) -> Complex64 {
    a[(0, 0)] + a[(1, 1)]
}

#[inline]
pub fn det(a: &M2) -> Complex64 {
    a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]
}

/// Trace-free part `a − ½ Tr(a) id`.
pub fn trace_free(a: &M2) -> M2 {
    a - identity() * (trace(a) * 0.5)
}

pub fn inverse(a: &M2) -> Option<M2> {
    let d = det(a);
    if d.norm() == 0.0 || !d.is_finite() {
        return None;
    }
    Some(M2::new(a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]) / d)
}

/// A Gaussian matrix with independent complex entries.
pub fn random_matrix<R: Rng>(rng: &mut R, scale: f64) -> M2 {
    M2::from_fn(|_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
}

/// A random trace-free matrix (element of sl(2, ℂ)).
pub fn random_sl2<R: Rng>(rng: &mut R, scale: f64) -> M2 {
    trace_free(&random_matrix(rng, scale))
}

/// A random element of su(2).
pub fn random_su2<R: Rng>(rng: &mut R, scale: f64) -> M2 {
    let a = random_sl2(rng, scale);
    (a - adj(&a)) * re(0.5)
}

/// A random element of SU(2), built from a unit quaternion.
pub fn random_su2_group<R: Rng>(rng: &mut R) -> M2 {
    let mut q = [0.0f64; 4];
    loop {
        for x in q.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            for x in q.iter_mut() {
                *x /= n;
            }
            break;
        }
    }
    let a = c(q[0], q[1]);
    let b = c(q[2], q[3]);
    M2::new(a, -b.conj(), b, a.conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn su2_group_elements_are_unitary_with_unit_det() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let g = random_su2_group(&mut rng);
            assert!(norm(&(adj(&g) * g - identity())) < 1e-12);
            assert!((det(&g) - re(1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn inverse_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 1.0);
        let inv = inverse(&a).unwrap();
        assert!(norm(&(a * inv - identity())) < 1e-12);
        assert!(inverse(&zero()).is_none());
    }
}
