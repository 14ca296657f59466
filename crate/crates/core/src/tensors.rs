//! Dense complex operators on multi-site, k-copy Hilbert spaces: index
//! layout, factor permutations, partial traces, and Hermitian matrix
//! functions restricted to supports.
//!
//! Factor convention: positions are copy-major (copy 0 carries sites
//! `0..n-1`, then copy 1, and so on), with an optional auxiliary factor in
//! the last position. Basis indices are mixed-radix with factor 0 most
//! significant, so `kron(a, b)` places `a` on the earlier factors.

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

use crate::la;
use crate::PSD_TOL;

/// Dense complex matrix type used throughout the crate.
pub type CMat = nalgebra::DMatrix<Complex64>;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("layout must have at least one site and one copy")]
    EmptyLayout,
    #[error("local dimension {dim} at site {site} is below 2")]
    BadLocalDim { site: usize, dim: usize },
    #[error("total dimension overflows usize")]
    DimOverflow,
    #[error("operator is {found}x{found} but the layout requires {expected}x{expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("not a permutation of {len} factor positions")]
    BadPermutation { len: usize },
    #[error("factor position {index} out of range ({count} factors)")]
    FactorOutOfRange { index: usize, count: usize },
    #[error("matrix is not Hermitian (asymmetry {max_dev:.3e})")]
    NotHermitian { max_dev: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },
    #[error("trace is {trace:.12e} but must be 1")]
    BadTrace { trace: f64 },
}

/// Shape of a multi-site, k-copy Hilbert space.
///
/// `n` sites of local dimensions `q_0..q_{n-1}` replicated over `copies`
/// copies, with an optional auxiliary factor (used for identity extensions
/// of channels). Total dimension is `(∏ q_i)^copies · aux_dim`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteLayout {
    local_dims: Vec<usize>,
    copies: usize,
    aux_dim: usize,
}

impl SiteLayout {
    /// Total dimension may overflow `usize` for large layouts; that is fine
    /// for graph-level bookkeeping and only rejected when a matrix of that
    /// size is actually requested.
    pub fn new(local_dims: Vec<usize>, copies: usize) -> Result<Self, TensorError> {
        if local_dims.is_empty() || copies == 0 {
            return Err(TensorError::EmptyLayout);
        }
        for (site, &dim) in local_dims.iter().enumerate() {
            if dim < 2 {
                return Err(TensorError::BadLocalDim { site, dim });
            }
        }
        Ok(SiteLayout { local_dims, copies, aux_dim: 1 })
    }

    /// `n` sites of equal local dimension `q`, `copies` copies.
    pub fn uniform(n: usize, q: usize, copies: usize) -> Result<Self, TensorError> {
        Self::new(vec![q; n], copies)
    }

    /// `n` qubits, `copies` copies.
    pub fn qubits(n: usize, copies: usize) -> Result<Self, TensorError> {
        Self::uniform(n, 2, copies)
    }

    /// Same sites and copies, extended by an auxiliary factor of dimension
    /// `aux_dim` in the final position. The auxiliary factor belongs to no
    /// copy; channels embedded on sites never touch it.
    pub fn with_aux(&self, aux_dim: usize) -> Result<Self, TensorError> {
        if aux_dim == 0 {
            return Err(TensorError::BadLocalDim { site: usize::MAX, dim: 0 });
        }
        Ok(SiteLayout { local_dims: self.local_dims.clone(), copies: self.copies, aux_dim })
    }

    pub fn checked_total_dim(&self) -> Result<usize, TensorError> {
        let mut d: usize = 1;
        for _ in 0..self.copies {
            for &q in &self.local_dims {
                d = d.checked_mul(q).ok_or(TensorError::DimOverflow)?;
            }
        }
        d.checked_mul(self.aux_dim).ok_or(TensorError::DimOverflow)
    }

    pub fn sites(&self) -> usize {
        self.local_dims.len()
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn aux_dim(&self) -> usize {
        self.aux_dim
    }

    pub fn local_dim(&self, site: usize) -> usize {
        self.local_dims[site]
    }

    pub fn local_dims(&self) -> &[usize] {
        &self.local_dims
    }

    /// Dimension of a single copy, `∏ q_i`.
    pub fn copy_dim(&self) -> usize {
        self.local_dims.iter().product()
    }

    /// Panics on overflow; use [`Self::checked_total_dim`] for layouts that
    /// may exceed matrix scale.
    pub fn total_dim(&self) -> usize {
        self.checked_total_dim().expect("layout dimension overflows usize")
    }

    /// Number of tensor factors: `n·copies`, plus one when an auxiliary
    /// factor is present.
    pub fn factor_count(&self) -> usize {
        self.sites() * self.copies + usize::from(self.aux_dim > 1)
    }

    /// Per-factor dimensions in copy-major order.
    pub fn factor_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.factor_count());
        for _ in 0..self.copies {
            dims.extend_from_slice(&self.local_dims);
        }
        if self.aux_dim > 1 {
            dims.push(self.aux_dim);
        }
        dims
    }

    /// Factor position of `(copy, site)`.
    pub fn factor_position(&self, copy: usize, site: usize) -> usize {
        debug_assert!(copy < self.copies && site < self.sites());
        copy * self.sites() + site
    }

    /// Gather permutation that moves all copies of `sites` to the front,
    /// grouped copy-major (copy 0 of the sites first, then copy 1, ...),
    /// followed by the remaining factors in their original order. Returned
    /// in the `perm[new] = old` convention of [`permute_factors`].
    pub fn gather_copies_of(&self, sites: &[usize]) -> Vec<usize> {
        let nf = self.factor_count();
        let mut perm = Vec::with_capacity(nf);
        let mut taken = vec![false; nf];
        for copy in 0..self.copies {
            for &s in sites {
                let p = self.factor_position(copy, s);
                perm.push(p);
                taken[p] = true;
            }
        }
        for (p, t) in taken.iter().enumerate() {
            if !t {
                perm.push(p);
            }
        }
        perm
    }
}

/// Precomputed strides (most-significant factor first).
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for j in (0..dims.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * dims[j + 1];
    }
    s
}

fn check_square(op: &CMat) -> Result<usize, TensorError> {
    if op.nrows() != op.ncols() {
        return Err(TensorError::NotSquare { rows: op.nrows(), cols: op.ncols() });
    }
    Ok(op.nrows())
}

fn check_dims(op: &CMat, layout: &SiteLayout) -> Result<usize, TensorError> {
    let d = check_square(op)?;
    let expected = layout.checked_total_dim()?;
    if d != expected {
        return Err(TensorError::DimMismatch { expected, found: d });
    }
    Ok(d)
}

/// Basis-index map induced by a factor permutation, `map[old] = new`.
///
/// Gather convention: the factor that lands in position `j` is the old
/// factor `perm[j]`, so the new digit at `j` is the old digit at `perm[j]`.
pub(crate) fn factor_index_map(dims: &[usize], perm: &[usize]) -> Result<Vec<usize>, TensorError> {
    let nf = dims.len();
    if perm.len() != nf {
        return Err(TensorError::BadPermutation { len: nf });
    }
    let mut seen = vec![false; nf];
    for &p in perm {
        if p >= nf || seen[p] {
            return Err(TensorError::BadPermutation { len: nf });
        }
        seen[p] = true;
    }
    let old_strides = strides(dims);
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let new_strides = strides(&new_dims);
    let total: usize = dims.iter().product();
    let mut map = vec![0usize; total];
    for (i, slot) in map.iter_mut().enumerate() {
        let mut idx = 0usize;
        for j in 0..nf {
            let digit = (i / old_strides[perm[j]]) % dims[perm[j]];
            idx += digit * new_strides[j];
        }
        *slot = idx;
    }
    Ok(map)
}

/// Conjugate an operator by the unitary reindexing induced by a factor
/// permutation: returns `P op P†`. `perm[new] = old`; involutive for
/// self-inverse permutations.
pub fn permute_factors(op: &CMat, layout: &SiteLayout, perm: &[usize]) -> Result<CMat, TensorError> {
    let d = check_dims(op, layout)?;
    let map = factor_index_map(&layout.factor_dims(), perm)?;
    let mut out = CMat::zeros(d, d);
    for c in 0..d {
        let mc = map[c];
        for r in 0..d {
            out[(map[r], mc)] = op[(r, c)];
        }
    }
    Ok(out)
}

/// Trace out every factor not listed in `keep`. Kept factors stay in their
/// original relative order; an empty `keep` returns the 1×1 matrix `[tr op]`.
pub fn partial_trace(op: &CMat, layout: &SiteLayout, keep: &[usize]) -> Result<CMat, TensorError> {
    let d = check_dims(op, layout)?;
    let dims = layout.factor_dims();
    let nf = dims.len();
    let mut kept_sorted: Vec<usize> = keep.to_vec();
    kept_sorted.sort_unstable();
    kept_sorted.dedup();
    for &p in &kept_sorted {
        if p >= nf {
            return Err(TensorError::FactorOutOfRange { index: p, count: nf });
        }
    }
    let is_kept: Vec<bool> = (0..nf).map(|p| kept_sorted.binary_search(&p).is_ok()).collect();
    let kept_dims: Vec<usize> = kept_sorted.iter().map(|&p| dims[p]).collect();
    let dk: usize = kept_dims.iter().product();

    let all_strides = strides(&dims);
    let kept_strides = strides(&kept_dims);
    // For each full basis index, its projected kept-index and traced-index.
    let mut kept_of = vec![0usize; d];
    let mut traced_of = vec![0usize; d];
    for i in 0..d {
        let mut ik = 0usize;
        let mut it = 0usize;
        let mut kpos = 0usize;
        for p in 0..nf {
            let digit = (i / all_strides[p]) % dims[p];
            if is_kept[p] {
                ik += digit * kept_strides[kpos];
                kpos += 1;
            } else {
                it = it * dims[p] + digit;
            }
        }
        kept_of[i] = ik;
        traced_of[i] = it;
    }

    let mut out = CMat::zeros(dk, dk);
    for c in 0..d {
        let (kc, tc) = (kept_of[c], traced_of[c]);
        for r in 0..d {
            if traced_of[r] == tc {
                out[(kept_of[r], kc)] += op[(r, c)];
            }
        }
    }
    Ok(out)
}

/// A Hermitian operator tied to a layout. Used for logarithms and other
/// spectral intermediates.
#[derive(Debug, Clone)]
pub struct HermitianOp {
    matrix: CMat,
    layout: SiteLayout,
}

impl HermitianOp {
    pub fn new(matrix: CMat, layout: SiteLayout) -> Result<Self, TensorError> {
        check_dims(&matrix, &layout)?;
        let dev = la::hermitian_deviation(&matrix);
        if dev > PSD_TOL {
            return Err(TensorError::NotHermitian { max_dev: dev });
        }
        Ok(HermitianOp { matrix: la::hermitian_part(&matrix), layout })
    }

    pub(crate) fn unchecked(matrix: CMat, layout: SiteLayout) -> Self {
        HermitianOp { matrix, layout }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }
}

/// Natural-log matrix logarithm of a PSD operator restricted to its support.
///
/// Eigenvalues at or below `tol` are treated as outside the support and
/// contribute nothing; eigenvalues below `-tol` signal a non-PSD input.
/// Returns the logarithm together with the support projector.
pub fn herm_log_on_support(
    op: &HermitianOp,
    tol: f64,
) -> Result<(HermitianOp, CMat), TensorError> {
    let (vals, vecs) = la::eigh(op.matrix());
    if vals[0] < -tol {
        return Err(TensorError::NotPsd { min_eig: vals[0] });
    }
    let n = vals.len();
    let mut log = CMat::zeros(n, n);
    let mut proj = CMat::zeros(n, n);
    for (i, &v) in vals.iter().enumerate() {
        if v <= tol {
            continue;
        }
        let col = vecs.column(i).clone_owned();
        let outer = &col * col.adjoint();
        log += &outer * Complex64::new(v.ln(), 0.0);
        proj += outer;
    }
    Ok((HermitianOp::unchecked(log, op.layout().clone()), proj))
}

/// A density matrix on a [`SiteLayout`]: Hermitian, positive semidefinite,
/// unit trace (all within [`PSD_TOL`]-scale tolerances).
#[derive(Debug, Clone)]
pub struct QState {
    matrix: CMat,
    layout: SiteLayout,
}

impl QState {
    pub fn new(matrix: CMat, layout: SiteLayout) -> Result<Self, TensorError> {
        Self::with_tol(matrix, layout, PSD_TOL)
    }

    pub fn with_tol(matrix: CMat, layout: SiteLayout, tol: f64) -> Result<Self, TensorError> {
        check_dims(&matrix, &layout)?;
        let dev = la::hermitian_deviation(&matrix);
        if dev > tol {
            return Err(TensorError::NotHermitian { max_dev: dev });
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > tol.max(1e-10) || tr.im.abs() > tol.max(1e-10) {
            return Err(TensorError::BadTrace { trace: tr.re });
        }
        let herm = la::hermitian_part(&matrix);
        let min = la::min_eigval(&herm);
        if min < -tol {
            return Err(TensorError::NotPsd { min_eig: min });
        }
        Ok(QState { matrix: herm, layout })
    }

    /// Skip the spectral test; for outputs whose positivity is guaranteed
    /// by construction (e.g. channel outputs of validated CPTP maps).
    pub(crate) fn unchecked(matrix: CMat, layout: SiteLayout) -> Self {
        QState { matrix, layout }
    }

    pub fn maximally_mixed(layout: SiteLayout) -> Self {
        let d = layout.total_dim();
        QState { matrix: la::scale(&la::identity(d), 1.0 / d as f64), layout }
    }

    /// Computational basis state `|index⟩⟨index|`.
    pub fn basis_state(layout: SiteLayout, index: usize) -> Result<Self, TensorError> {
        let d = layout.total_dim();
        if index >= d {
            return Err(TensorError::FactorOutOfRange { index, count: d });
        }
        let mut m = CMat::zeros(d, d);
        m[(index, index)] = Complex64::new(1.0, 0.0);
        Ok(QState { matrix: m, layout })
    }

    /// Pure state from a (not necessarily normalized) nonzero vector.
    pub fn pure(vector: &DVector<Complex64>, layout: SiteLayout) -> Result<Self, TensorError> {
        let d = layout.total_dim();
        if vector.len() != d {
            return Err(TensorError::DimMismatch { expected: d, found: vector.len() });
        }
        let norm = vector.norm();
        if norm == 0.0 {
            return Err(TensorError::BadTrace { trace: 0.0 });
        }
        let v = vector / Complex64::new(norm, 0.0);
        Ok(QState { matrix: &v * v.adjoint(), layout })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::la;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_op(d: usize, rng: &mut StdRng) -> CMat {
        CMat::from_fn(d, d, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn layout_dims() {
        let l = SiteLayout::new(vec![2, 3], 2).unwrap();
        assert_eq!(l.copy_dim(), 6);
        assert_eq!(l.total_dim(), 36);
        assert_eq!(l.factor_count(), 4);
        assert_eq!(l.factor_dims(), vec![2, 3, 2, 3]);
        assert_eq!(l.factor_position(1, 0), 2);
        let la = l.with_aux(5).unwrap();
        assert_eq!(la.total_dim(), 180);
        assert_eq!(la.factor_dims(), vec![2, 3, 2, 3, 5]);
    }

    #[test]
    fn permute_identity_and_involution() {
        let mut rng = StdRng::seed_from_u64(1);
        let layout = SiteLayout::qubits(2, 1).unwrap();
        let op = random_op(4, &mut rng);
        let same = permute_factors(&op, &layout, &[0, 1]).unwrap();
        assert_eq!(same, op);
        let swapped = permute_factors(&op, &layout, &[1, 0]).unwrap();
        let back = permute_factors(&swapped, &layout, &[1, 0]).unwrap();
        assert!(la::frob_norm(&(&back - &op)) < 1e-14);
    }

    #[test]
    fn permute_swaps_basis_state() {
        // |01⟩⟨01| on 2 qubits -> |10⟩⟨10| under the factor swap
        let layout = SiteLayout::qubits(2, 1).unwrap();
        let s01 = QState::basis_state(layout.clone(), 0b01).unwrap();
        let swapped = permute_factors(s01.matrix(), &layout, &[1, 0]).unwrap();
        let s10 = QState::basis_state(layout, 0b10).unwrap();
        assert!(la::frob_norm(&(&swapped - s10.matrix())) < 1e-15);
    }

    #[test]
    fn permute_is_star_isomorphism() {
        // preserves products, adjoints, traces, eigenvalues
        let mut rng = StdRng::seed_from_u64(2);
        let layout = SiteLayout::new(vec![2, 3, 2], 1).unwrap();
        let perm = [2usize, 0, 1];
        let a = random_op(12, &mut rng);
        let b = random_op(12, &mut rng);
        let pa = permute_factors(&a, &layout, &perm).unwrap();
        let pb = permute_factors(&b, &layout, &perm).unwrap();
        let pab = permute_factors(&(&a * &b), &layout, &perm).unwrap();
        assert!(la::frob_norm(&(&pa * &pb - &pab)) < 1e-12);
        let padj = permute_factors(&a.adjoint(), &layout, &perm).unwrap();
        assert!(la::frob_norm(&(pa.adjoint() - &padj)) < 1e-12);
        assert!((pa.trace() - a.trace()).norm() < 1e-12);
        let ha = la::hermitian_part(&a);
        let pha = permute_factors(&ha, &layout, &perm).unwrap();
        let ev_a = la::eigvalsh(&ha);
        let ev_p = la::eigvalsh(&pha);
        for (x, y) in ev_a.iter().zip(ev_p.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn partial_trace_product_state() {
        let mut rng = StdRng::seed_from_u64(3);
        let la2 = SiteLayout::new(vec![2, 3], 1).unwrap();
        let a = {
            let g = random_op(2, &mut rng);
            let h = &g * g.adjoint();
            la::scale(&h, 1.0 / h.trace().re)
        };
        let b = {
            let g = random_op(3, &mut rng);
            let h = &g * g.adjoint();
            la::scale(&h, 1.0 / h.trace().re)
        };
        let prod = a.kronecker(&b);
        let ra = partial_trace(&prod, &la2, &[0]).unwrap();
        assert!(la::frob_norm(&(&ra - &a)) < 1e-12);
        let rb = partial_trace(&prod, &la2, &[1]).unwrap();
        assert!(la::frob_norm(&(&rb - &b)) < 1e-12);
    }

    #[test]
    fn partial_trace_bell_state_is_mixed() {
        let layout = SiteLayout::qubits(2, 1).unwrap();
        let mut v = DVector::zeros(4);
        v[0] = Complex64::new(1.0, 0.0);
        v[3] = Complex64::new(1.0, 0.0);
        let bell = QState::pure(&v, layout.clone()).unwrap();
        let red = partial_trace(bell.matrix(), &layout, &[0]).unwrap();
        let half = la::scale(&la::identity(2), 0.5);
        assert!(la::frob_norm(&(&red - &half)) < 1e-14);
    }

    #[test]
    fn partial_trace_preserves_trace() {
        let mut rng = StdRng::seed_from_u64(4);
        let layout = SiteLayout::new(vec![2, 2, 3], 1).unwrap();
        let x = random_op(12, &mut rng);
        for keep in [&[][..], &[0][..], &[1, 2][..], &[0, 1, 2][..]] {
            let r = partial_trace(&x, &layout, keep).unwrap();
            assert!((r.trace() - x.trace()).norm() < 1e-12);
        }
        let scalar = partial_trace(&x, &layout, &[]).unwrap();
        assert_eq!(scalar.nrows(), 1);
    }

    #[test]
    fn log_of_maximally_mixed() {
        let layout = SiteLayout::qubits(2, 1).unwrap();
        let rho = QState::maximally_mixed(layout.clone());
        let op = HermitianOp::new(rho.matrix().clone(), layout).unwrap();
        let (log, proj) = herm_log_on_support(&op, PSD_TOL).unwrap();
        let expected = la::scale(&la::identity(4), -(4.0f64.ln()));
        assert!(la::frob_norm(&(log.matrix() - &expected)) < 1e-12);
        assert!(la::frob_norm(&(&proj - &la::identity(4))) < 1e-12);
    }

    #[test]
    fn log_of_rank_one_projector_is_zero_on_support() {
        let layout = SiteLayout::qubits(1, 1).unwrap();
        let s = QState::basis_state(layout.clone(), 0).unwrap();
        let op = HermitianOp::new(s.matrix().clone(), layout).unwrap();
        let (log, proj) = herm_log_on_support(&op, PSD_TOL).unwrap();
        assert!(la::frob_norm(log.matrix()) < 1e-12);
        assert!(la::frob_norm(&(&proj - s.matrix())) < 1e-12);
    }

    #[test]
    fn log_excludes_zero_eigenvalue() {
        let layout = SiteLayout::new(vec![3], 1).unwrap();
        let mut m = CMat::zeros(3, 3);
        m[(0, 0)] = Complex64::new(0.5, 0.0);
        m[(1, 1)] = Complex64::new(0.5, 0.0);
        let op = HermitianOp::new(m, layout).unwrap();
        let (_, proj) = herm_log_on_support(&op, PSD_TOL).unwrap();
        assert!((proj.trace().re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_rejects_negative_input() {
        let layout = SiteLayout::new(vec![2], 1).unwrap();
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        m[(1, 1)] = Complex64::new(-0.5, 0.0);
        let op = HermitianOp::new(m, layout).unwrap();
        assert!(matches!(
            herm_log_on_support(&op, PSD_TOL),
            Err(TensorError::NotPsd { .. })
        ));
    }

    #[test]
    fn log_inverts_exp() {
        let mut rng = StdRng::seed_from_u64(5);
        let layout = SiteLayout::new(vec![2, 3], 1).unwrap();
        for _ in 0..5 {
            let h = la::hermitian_part(&random_op(6, &mut rng)) * Complex64::new(5.0, 0.0);
            let e = la::herm_fn(&h, f64::exp);
            let op = HermitianOp::new(e, layout.clone()).unwrap();
            let (log, _) = herm_log_on_support(&op, PSD_TOL).unwrap();
            assert!(la::frob_norm(&(log.matrix() - &h)) < 1e-8);
        }
    }

    #[test]
    fn qstate_validation_rejects_bad_inputs() {
        let layout = SiteLayout::qubits(1, 1).unwrap();
        let mut not_herm = CMat::zeros(2, 2);
        not_herm[(0, 1)] = Complex64::new(1.0, 0.0);
        not_herm[(0, 0)] = Complex64::new(1.0, 0.0);
        assert!(QState::new(not_herm, layout.clone()).is_err());
        let bad_trace = la::identity(2);
        assert!(QState::new(bad_trace, layout.clone()).is_err());
        let mut neg = CMat::zeros(2, 2);
        neg[(0, 0)] = Complex64::new(1.5, 0.0);
        neg[(1, 1)] = Complex64::new(-0.5, 0.0);
        assert!(QState::new(neg, layout).is_err());
    }
}
