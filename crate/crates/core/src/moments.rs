//! Exact k-fold Haar twirls via copy-permutation operators and the Gram
//! pseudo-inverse, plus Haar unitary sampling and a Monte-Carlo twirl used
//! as an independent oracle.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::channels::{self, ChannelRep, ChannelError, CondExpectation};
use crate::tensors::{CMat, SiteLayout, TensorError};
use crate::{K_CAP, STATE_DIM_CAP};

#[derive(Debug, Error)]
pub enum MomentsError {
    #[error("k = {k} exceeds the twirl-order cap {cap}")]
    KCapExceeded { k: usize, cap: usize },
    #[error("twirled block dimension {dim} exceeds the cap {cap}")]
    DimCapExceeded { dim: usize, cap: usize },
    #[error("site list is empty or repeats/exceeds the layout")]
    BadSites,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Enumerate all permutations of `{0..k-1}` (k! of them, `k ≤ 4` in practice).
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..k).collect();
    heap_recurse(k, &mut items, &mut out);
    out
}

fn heap_recurse(m: usize, items: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if m == 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..m {
        heap_recurse(m - 1, items, out);
        if m % 2 == 0 {
            items.swap(i, m - 1);
        } else {
            items.swap(0, m - 1);
        }
    }
}

fn compose(a: &[usize], b: &[usize]) -> Vec<usize> {
    // (a∘b)(x) = a(b(x))
    b.iter().map(|&x| a[x]).collect()
}

fn invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; p.len()];
    for (i, &v) in p.iter().enumerate() {
        inv[v] = i;
    }
    inv
}

fn cycle_count(p: &[usize]) -> usize {
    let mut seen = vec![false; p.len()];
    let mut cycles = 0;
    for start in 0..p.len() {
        if seen[start] {
            continue;
        }
        cycles += 1;
        let mut x = start;
        while !seen[x] {
            seen[x] = true;
            x = p[x];
        }
    }
    cycles
}

/// The unitary that permutes the `k` copies of a `d`-dimensional factor:
/// `P_σ |t_0,…,t_{k-1}⟩ = |t_{σ⁻¹(0)},…,t_{σ⁻¹(k-1)}⟩`, so that
/// `P_σ P_τ = P_{στ}`.
#[derive(Debug, Clone)]
pub struct PermutationOp {
    sigma: Vec<usize>,
    d: usize,
    index_map: Vec<usize>,
}

impl PermutationOp {
    pub fn new(sigma: Vec<usize>, d: usize) -> Self {
        let k = sigma.len();
        let dim = d.pow(k as u32);
        let sigma_inv = invert(&sigma);
        // strides: copy 0 most significant
        let mut strides = vec![1usize; k];
        for j in (0..k.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * d;
        }
        let mut index_map = vec![0usize; dim];
        for (i, slot) in index_map.iter_mut().enumerate() {
            let mut target = 0usize;
            for a in 0..k {
                let digit = (i / strides[sigma_inv[a]]) % d;
                target += digit * strides[a];
            }
            *slot = target;
        }
        PermutationOp { sigma, d, index_map }
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.index_map.len()
    }

    /// Basis map: `P_σ |j⟩ = |map[j]⟩`.
    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    pub fn cycles(&self) -> usize {
        cycle_count(&self.sigma)
    }

    /// `tr P_σ = d^{cycles(σ)}`.
    pub fn trace(&self) -> f64 {
        (self.d as f64).powi(self.cycles() as i32)
    }

    /// Dense `d^k × d^k` materialization.
    pub fn matrix(&self) -> CMat {
        let dim = self.dim();
        let mut m = CMat::zeros(dim, dim);
        for (j, &i) in self.index_map.iter().enumerate() {
            m[(i, j)] = Complex64::new(1.0, 0.0);
        }
        m
    }
}

/// Gram matrix `G_{στ} = d^{cycles(στ⁻¹)}` of the copy-permutation operators
/// under the Hilbert–Schmidt inner product, with its spectral pseudo-inverse.
/// Singular exactly when `d < k`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    k: usize,
    d: usize,
    matrix: DMatrix<f64>,
    pseudo_inverse: DMatrix<f64>,
}

impl GramMatrix {
    pub fn new(d: usize, k: usize) -> Self {
        let perms = permutations(k);
        let m = perms.len();
        let mut g = DMatrix::zeros(m, m);
        for (a, pa) in perms.iter().enumerate() {
            for (b, pb) in perms.iter().enumerate() {
                let rel = compose(pa, &invert(pb));
                g[(a, b)] = (d as f64).powi(cycle_count(&rel) as i32);
            }
        }
        let pinv = pseudo_inverse_sym(&g, 1e-9);
        GramMatrix { k, d, matrix: g, pseudo_inverse: pinv }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn pseudo_inverse(&self) -> &DMatrix<f64> {
        &self.pseudo_inverse
    }
}

/// Spectral pseudo-inverse of a symmetric PSD matrix with a relative cutoff.
fn pseudo_inverse_sym(g: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let se = nalgebra::SymmetricEigen::new(g.clone());
    let max = se.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cut = rel_cutoff * max;
    let n = g.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let v = se.eigenvalues[i];
        if v > cut {
            let col = se.eigenvectors.column(i);
            for c in 0..n {
                for r in 0..n {
                    out[(r, c)] += col[r] * col[c] / v;
                }
            }
        }
    }
    out
}

/// Precomputed data for applying the exact Haar k-fold twirl: the copy
/// permutations (as basis maps) and the Weingarten coefficient matrix
/// (Gram pseudo-inverse).
#[derive(Debug)]
pub struct TwirlData {
    pub d: usize,
    pub k: usize,
    pub perms: Vec<PermutationOp>,
    pub weingarten: DMatrix<f64>,
}

impl TwirlData {
    pub fn new(d: usize, k: usize) -> Result<Arc<Self>, MomentsError> {
        if k > K_CAP {
            return Err(MomentsError::KCapExceeded { k, cap: K_CAP });
        }
        let dim = d.checked_pow(k as u32).ok_or(MomentsError::DimCapExceeded {
            dim: usize::MAX,
            cap: STATE_DIM_CAP,
        })?;
        if dim > STATE_DIM_CAP {
            return Err(MomentsError::DimCapExceeded { dim, cap: STATE_DIM_CAP });
        }
        let gram = GramMatrix::new(d, k);
        let perms = permutations(k).into_iter().map(|s| PermutationOp::new(s, d)).collect();
        Ok(Arc::new(TwirlData { d, k, perms, weingarten: gram.pseudo_inverse().clone() }))
    }

    pub fn dim(&self) -> usize {
        self.d.pow(self.k as u32)
    }
}

/// The exact Haar k-fold twirl projector on a `d`-dimensional system, as a
/// verified conditional expectation. Acts as
/// `E(X) = Σ_{στ} W_{στ} tr(P_σ† X) P_τ`, the orthogonal projection onto the
/// span of the copy permutations.
pub fn haar_twirl_projector(d: usize, k: usize) -> Result<CondExpectation, MomentsError> {
    let channel = ChannelRep::haar_twirl(d, k)?;
    Ok(channels::validate_cond_expectation(&channel)?)
}

/// Haar twirl applied jointly to the `k` copies of `sites`, identity on the
/// other sites. Implemented as gather → twirl on the fused block → scatter.
pub fn local_twirl(layout: &SiteLayout, sites: &[usize]) -> Result<ChannelRep, MomentsError> {
    if sites.is_empty() {
        return Err(MomentsError::BadSites);
    }
    let mut seen = vec![false; layout.sites()];
    let mut block: usize = 1;
    for &s in sites {
        if s >= layout.sites() || seen[s] {
            return Err(MomentsError::BadSites);
        }
        seen[s] = true;
        block = block
            .checked_mul(layout.local_dim(s))
            .ok_or(MomentsError::DimCapExceeded { dim: usize::MAX, cap: STATE_DIM_CAP })?;
    }
    let twirl = ChannelRep::haar_twirl(block, layout.copies())?;
    Ok(ChannelRep::local(vec![(sites.to_vec(), twirl)], layout.clone())?)
}

/// Haar-distributed random unitary on `U(d)`: complex Ginibre matrix, QR,
/// then the phase correction that makes the distribution exactly invariant.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let normal = StandardNormal;
    let g = CMat::from_fn(d, d, |_, _| {
        let re: f64 = normal.sample(rng);
        let im: f64 = normal.sample(rng);
        Complex64::new(re, im) / Complex64::new(std::f64::consts::SQRT_2, 0.0)
    });
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = q;
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..d {
            u[(i, j)] *= phase;
        }
    }
    u
}

/// Seeded convenience wrapper around [`haar_unitary`].
pub fn haar_sample_unitary(d: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_unitary(d, &mut rng)
}

/// Monte-Carlo estimate of the k-fold Haar twirl of `x`, with the standard
/// error of the estimate in Frobenius norm. Used only as an independent
/// statistical oracle for the exact projector.
#[derive(Debug, Clone)]
pub struct McTwirl {
    pub estimate: CMat,
    pub frob_std_error: f64,
    pub samples: usize,
}

pub fn mc_twirl(x: &CMat, d: usize, k: usize, samples: usize, seed: u64) -> McTwirl {
    assert!(samples >= 1, "at least one sample required");
    let dim = d.pow(k as u32);
    assert_eq!(x.nrows(), dim, "input must be d^k x d^k");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = CMat::zeros(dim, dim);
    let mut second = DMatrix::<f64>::zeros(dim, dim);
    for _ in 0..samples {
        let u = haar_unitary(d, &mut rng);
        let mut uk = u.clone();
        for _ in 1..k {
            uk = uk.kronecker(&u);
        }
        let y = &uk * x * uk.adjoint();
        for (m, s, v) in itertools_zip(&mut mean, &mut second, &y) {
            *m += v;
            *s += v.norm_sqr();
        }
    }
    let inv = 1.0 / samples as f64;
    mean *= Complex64::new(inv, 0.0);
    // entrywise variance of the sampled conjugations
    let mut var_sum = 0.0;
    for (m, s) in mean.iter().zip(second.iter()) {
        var_sum += (s * inv - m.norm_sqr()).max(0.0);
    }
    let frob_std_error = (var_sum * inv).sqrt();
    McTwirl { estimate: mean, frob_std_error, samples }
}

fn itertools_zip<'a>(
    a: &'a mut CMat,
    b: &'a mut DMatrix<f64>,
    c: &'a CMat,
) -> impl Iterator<Item = (&'a mut Complex64, &'a mut f64, Complex64)> {
    a.iter_mut().zip(b.iter_mut()).zip(c.iter()).map(|((x, y), z)| (x, y, *z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::la;

    #[test]
    fn permutation_traces_and_products() {
        for k in 1..=4usize {
            for d in 2..=3usize {
                let perms = permutations(k);
                assert_eq!(perms.len(), (1..=k).product::<usize>());
                for pa in &perms {
                    let opa = PermutationOp::new(pa.clone(), d);
                    assert!((opa.matrix().trace().re - opa.trace()).abs() < 1e-12);
                    // unitarity
                    let m = opa.matrix();
                    let should_be_id = &m * m.adjoint();
                    assert!(la::frob_norm(&(should_be_id - la::identity(m.nrows()))) < 1e-12);
                }
                if k <= 3 {
                    for pa in &perms {
                        for pb in &perms {
                            let opa = PermutationOp::new(pa.clone(), d);
                            let opb = PermutationOp::new(pb.clone(), d);
                            let prod = PermutationOp::new(compose(pa, pb), d);
                            let lhs = opa.matrix() * opb.matrix();
                            assert!(la::frob_norm(&(lhs - prod.matrix())) < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gram_matches_hs_inner_products() {
        for (d, k) in [(2usize, 2usize), (2, 3), (3, 2)] {
            let gram = GramMatrix::new(d, k);
            let perms = permutations(k);
            for (a, pa) in perms.iter().enumerate() {
                for (b, pb) in perms.iter().enumerate() {
                    let ma = PermutationOp::new(pa.clone(), d).matrix();
                    let mb = PermutationOp::new(pb.clone(), d).matrix();
                    let ip = la::hs_inner(&mb, &ma).re;
                    assert!((gram.matrix()[(a, b)] - ip).abs() < 1e-9);
                }
            }
            // G G+ G = G
            let g = gram.matrix();
            let gp = gram.pseudo_inverse();
            let resid = g * gp * g - g;
            assert!(resid.iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn gram_singular_iff_d_below_k() {
        let g_ok = GramMatrix::new(3, 2);
        let det_ok = g_ok.matrix().clone().determinant();
        assert!(det_ok.abs() > 1e-6);
        let g_sing = GramMatrix::new(2, 3);
        let se = nalgebra::SymmetricEigen::new(g_sing.matrix().clone());
        let min = se.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min.abs() < 1e-8);
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in [1usize, 2, 5, 8] {
            let u = haar_unitary(d, &mut rng);
            let resid = &u * u.adjoint() - la::identity(d);
            assert!(la::frob_norm(&resid) < 1e-12);
        }
    }

    #[test]
    fn haar_mean_vanishes() {
        // ∫ U dU = 0; empirical mean over many samples stays near zero
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = 20_000;
        let mut mean = CMat::zeros(2, 2);
        for _ in 0..samples {
            mean += haar_unitary(2, &mut rng);
        }
        mean *= Complex64::new(1.0 / samples as f64, 0.0);
        assert!(mean.iter().all(|z| z.norm() < 0.02));
    }

    #[test]
    fn mc_twirl_fixes_commutant_exactly() {
        let swap = PermutationOp::new(vec![1, 0], 2);
        let res = mc_twirl(&swap.matrix(), 2, 2, 50, 77);
        assert!(crate::la::frob_norm(&(&res.estimate - &swap.matrix())) < 1e-12);
        // variance estimate carries O(ε_mach) cancellation noise
        assert!(res.frob_std_error < 1e-6);
    }

    #[test]
    fn seeded_unitary_is_reproducible() {
        let a = haar_sample_unitary(4, 99);
        let b = haar_sample_unitary(4, 99);
        assert_eq!(a, b);
        let c = haar_sample_unitary(4, 100);
        assert!(la::frob_norm(&(&a - &c)) > 1e-3);
        // d = 1: a unit-modulus scalar
        let s = haar_sample_unitary(1, 7);
        assert!((s[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mc_twirl_k1_depolarizes() {
        let layoutless = {
            let mut m = CMat::zeros(2, 2);
            m[(0, 0)] = Complex64::new(1.0, 0.0);
            m
        };
        let res = mc_twirl(&layoutless, 2, 1, 30_000, 3);
        let target = la::scale(&la::identity(2), 0.5);
        let err = la::frob_norm(&(&res.estimate - &target));
        assert!(err < 5.0 * res.frob_std_error + 1e-12, "err {err} vs se {}", res.frob_std_error);
    }
}
