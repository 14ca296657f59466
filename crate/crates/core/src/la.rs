//! Shared dense linear-algebra kernels: Hermitian eigendecomposition,
//! positive-semidefiniteness tests, and small helpers.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub(crate) type CMat = DMatrix<Complex64>;

pub(crate) fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub(crate) fn scale(m: &CMat, s: f64) -> CMat {
    m * Complex64::new(s, 0.0)
}

/// Largest entrywise deviation from Hermitian symmetry.
pub(crate) fn hermitian_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for c in 0..n {
        for r in 0..=c {
            dev = dev.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    dev
}

/// Replace `m` by its Hermitian part `(m + m†)/2`.
pub(crate) fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Eigenvalues and eigenvectors of a Hermitian matrix, ascending.
/// Eigenvectors are the columns of the returned matrix.
pub(crate) fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 1 {
        return (vec![m[(0, 0)].re], identity(1));
    }
    let se = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Eigenvalues only (ascending) of a Hermitian matrix.
pub(crate) fn eigvalsh(m: &CMat) -> Vec<f64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)].re];
    }
    let mut vals: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

pub(crate) fn min_eigval(m: &CMat) -> f64 {
    eigvalsh(m)[0]
}

/// Whether a Hermitian matrix is positive semidefinite within an absolute
/// eigenvalue tolerance. Decided by a Cholesky factorization of `m + tol·I`,
/// which is several times cheaper than an eigendecomposition and certifies
/// the same predicate up to roundoff.
///
/// Hand-rolled: a complex square root exists for any diagonal pivot, so a
/// generic complex Cholesky cannot signal indefiniteness. This one fails on
/// the first non-positive real pivot.
pub(crate) fn psd_within(m: &CMat, tol: f64) -> bool {
    let n = m.nrows();
    let mut a = m + scale(&identity(n), tol);
    let data = a.as_mut_slice(); // column-major
    for j in 0..n {
        let d = data[j + j * n].re;
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let pivot = d.sqrt();
        let inv = Complex64::new(1.0 / pivot, 0.0);
        for r in (j + 1)..n {
            data[r + j * n] *= inv;
        }
        for c in (j + 1)..n {
            let f = data[c + j * n].conj();
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for r in c..n {
                let ljr = data[r + j * n];
                data[r + c * n] -= ljr * f;
            }
        }
    }
    true
}

/// Apply a real function to a Hermitian matrix through its eigenbasis.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn herm_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for (i, &v) in vals.iter().enumerate() {
        let col = vecs.column(i);
        let fv = Complex64::new(f(v), 0.0);
        for cc in 0..n {
            for rr in 0..n {
                out[(rr, cc)] += fv * col[rr] * col[cc].conj();
            }
        }
    }
    out
}

/// Hilbert–Schmidt inner product `tr(a† b)`.
pub(crate) fn hs_inner(a: &CMat, b: &CMat) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * y;
    }
    acc
}

pub(crate) fn frob_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Trace norm of a Hermitian matrix (sum of absolute eigenvalues).
pub(crate) fn trace_norm_hermitian(m: &CMat) -> f64 {
    eigvalsh(m).iter().map(|v| v.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_hermitian(n: usize, rng: &mut StdRng) -> CMat {
        let g = CMat::from_fn(n, n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        hermitian_part(&g)
    }

    #[test]
    fn eigh_reconstructs() {
        let mut rng = StdRng::seed_from_u64(7);
        let h = random_hermitian(12, &mut rng);
        let (vals, vecs) = eigh(&h);
        let mut rebuilt = CMat::zeros(12, 12);
        for (i, &v) in vals.iter().enumerate() {
            let col = vecs.column(i).clone_owned();
            rebuilt += col.clone() * col.adjoint() * Complex64::new(v, 0.0);
        }
        assert!(frob_norm(&(&rebuilt - &h)) < 1e-10);
        for w in vals.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn psd_predicate_matches_eigenvalues() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let h = random_hermitian(9, &mut rng);
            let shift = rng.random::<f64>() * 2.0 - 1.0;
            let m = &h + scale(&identity(9), shift);
            let min = min_eigval(&m);
            if min > 1e-7 {
                assert!(psd_within(&m, 1e-8));
            }
            if min < -1e-7 {
                assert!(!psd_within(&m, 1e-8));
            }
        }
    }

    #[test]
    fn herm_fn_exp_log_roundtrip() {
        let mut rng = StdRng::seed_from_u64(11);
        let h = random_hermitian(8, &mut rng);
        let e = herm_fn(&h, f64::exp);
        let back = herm_fn(&e, f64::ln);
        assert!(frob_norm(&(&back - &h)) < 1e-9);
    }
}
