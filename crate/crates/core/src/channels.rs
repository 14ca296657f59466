//! Quantum channel representations, composition, complete-positivity order
//! checks, conditional-expectation validation, and the CB return time.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::la;
use crate::moments::TwirlData;
use crate::tensors::{self, CMat, QState, SiteLayout, TensorError};
use crate::{CHOI_DIM_CAP, CP_TOL};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("operator is {found}x{found}, channel expects {expected}x{expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("layouts differ between the channels/states involved")]
    LayoutMismatch,
    #[error("not trace preserving (deviation {dev:.3e})")]
    NotTracePreserving { dev: f64 },
    #[error("not completely positive (Choi eigenvalue {min_eig:.3e})")]
    NotCompletelyPositive { min_eig: f64 },
    #[error("Choi dimension {required} exceeds the cap {cap}")]
    CapacityExceeded { required: usize, cap: usize },
    #[error("channel is not unital (deviation {dev:.3e})")]
    NotUnital { dev: f64 },
    #[error("conditional expectation failed validation (idempotent={idempotent}, self_adjoint={self_adjoint})")]
    InvalidConditionalExpectation { idempotent: bool, self_adjoint: bool },
    #[error("mixture weights must be nonnegative and sum to 1 (sum {sum})")]
    BadWeights { sum: f64 },
    #[error("stage sites invalid or local channel dimension mismatch")]
    BadStage,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A quantum channel in one of several representations.
///
/// `Local` is the default for circuit layers: an ordered list of
/// `(sites, local channel)` stages, each acting jointly on all copies of its
/// sites. Its Choi matrix is materialized only on demand and below the
/// dimension cap, so layers on systems far beyond the Choi cap stay
/// applicable to states.
#[derive(Debug, Clone)]
pub enum ChannelRep {
    /// Kraus operators `Σ K ρ K†`.
    Kraus { ops: Vec<CMat>, layout: SiteLayout },
    /// Choi matrix `Σ_{ij} |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)` (input factor first).
    Choi { matrix: CMat, layout: SiteLayout },
    /// Ordered composition of local channels embedded on site subsets.
    Local { stages: Vec<(Vec<usize>, ChannelRep)>, layout: SiteLayout },
    /// Exact Haar k-fold twirl projector (Weingarten form).
    HaarTwirl { data: Arc<TwirlData>, layout: SiteLayout },
    /// Convex mixture of channels.
    Mixture { parts: Vec<(f64, ChannelRep)>, layout: SiteLayout },
}

impl ChannelRep {
    pub fn layout(&self) -> &SiteLayout {
        match self {
            ChannelRep::Kraus { layout, .. }
            | ChannelRep::Choi { layout, .. }
            | ChannelRep::Local { layout, .. }
            | ChannelRep::HaarTwirl { layout, .. }
            | ChannelRep::Mixture { layout, .. } => layout,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout().total_dim()
    }

    pub fn identity(layout: SiteLayout) -> Self {
        let d = layout.total_dim();
        ChannelRep::Kraus { ops: vec![la::identity(d)], layout }
    }

    pub fn unitary(u: CMat, layout: SiteLayout) -> Result<Self, ChannelError> {
        Self::kraus(vec![u], layout)
    }

    /// Kraus list; checked trace preserving within [`CP_TOL`].
    pub fn kraus(ops: Vec<CMat>, layout: SiteLayout) -> Result<Self, ChannelError> {
        let d = layout.total_dim();
        let mut acc = CMat::zeros(d, d);
        for k in &ops {
            if k.nrows() != d || k.ncols() != d {
                return Err(ChannelError::DimMismatch { expected: d, found: k.nrows() });
            }
            acc += k.adjoint() * k;
        }
        let dev = la::frob_norm(&(&acc - la::identity(d)));
        if dev > CP_TOL * (d as f64).sqrt().max(1.0) {
            return Err(ChannelError::NotTracePreserving { dev });
        }
        Ok(ChannelRep::Kraus { ops, layout })
    }

    /// Choi matrix; checked completely positive and trace preserving.
    pub fn choi_rep(matrix: CMat, layout: SiteLayout) -> Result<Self, ChannelError> {
        let d = layout.total_dim();
        if matrix.nrows() != d * d || matrix.ncols() != d * d {
            return Err(ChannelError::DimMismatch { expected: d * d, found: matrix.nrows() });
        }
        if !la::psd_within(&matrix, CP_TOL) {
            return Err(ChannelError::NotCompletelyPositive { min_eig: la::min_eigval(&matrix) });
        }
        // tr over the output factor must give the identity on the input
        let two_factor = SiteLayout::new(vec![d, d], 1)?;
        let tr_out = tensors::partial_trace(&matrix, &two_factor, &[0])?;
        let dev = la::frob_norm(&(&tr_out - la::identity(d)));
        if dev > CP_TOL * (d as f64) {
            return Err(ChannelError::NotTracePreserving { dev });
        }
        Ok(ChannelRep::Choi { matrix, layout })
    }

    /// Ordered composition of local channels. Each stage `(sites, ch)` embeds
    /// `ch` on all copies of `sites`; stages are applied first-to-last.
    pub fn local(
        stages: Vec<(Vec<usize>, ChannelRep)>,
        layout: SiteLayout,
    ) -> Result<Self, ChannelError> {
        for (sites, ch) in &stages {
            if sites.is_empty() {
                return Err(ChannelError::BadStage);
            }
            let mut seen = vec![false; layout.sites()];
            let mut block: usize = 1;
            for &s in sites {
                if s >= layout.sites() || seen[s] {
                    return Err(ChannelError::BadStage);
                }
                seen[s] = true;
                block *= layout.local_dim(s);
            }
            let block_total = block.pow(layout.copies() as u32);
            if ch.layout().total_dim() != block_total || ch.layout().aux_dim() != 1 {
                return Err(ChannelError::BadStage);
            }
        }
        Ok(ChannelRep::Local { stages, layout })
    }

    /// Exact Haar k-fold twirl on a single `d`-dimensional system.
    pub fn haar_twirl(d: usize, k: usize) -> Result<Self, crate::moments::MomentsError> {
        let data = TwirlData::new(d, k)?;
        let layout = SiteLayout::new(vec![d], k)?;
        Ok(ChannelRep::HaarTwirl { data, layout })
    }

    pub fn mixture(parts: Vec<(f64, ChannelRep)>, layout: SiteLayout) -> Result<Self, ChannelError> {
        let mut sum = 0.0;
        for (w, ch) in &parts {
            if *w < 0.0 || ch.layout() != &layout {
                return Err(ChannelError::BadWeights { sum: *w });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-10 {
            return Err(ChannelError::BadWeights { sum });
        }
        Ok(ChannelRep::Mixture { parts, layout })
    }

    /// Depolarizing channel `ρ ↦ (1-p)ρ + p·tr(ρ)·I/d` in Kraus form.
    pub fn depolarizing(layout: SiteLayout, p: f64) -> Result<Self, ChannelError> {
        assert!((0.0..=1.0).contains(&p), "p must lie in [0,1]");
        let d = layout.total_dim();
        let mut ops = Vec::with_capacity(d * d + 1);
        ops.push(la::scale(&la::identity(d), (1.0 - p).sqrt()));
        let amp = (p / d as f64).sqrt();
        for i in 0..d {
            for j in 0..d {
                let mut e = CMat::zeros(d, d);
                e[(i, j)] = Complex64::new(amp, 0.0);
                ops.push(e);
            }
        }
        Self::kraus(ops, layout)
    }

    /// Fully depolarizing channel `ρ ↦ tr(ρ)·I/d`.
    pub fn full_depolarizer(layout: SiteLayout) -> Result<Self, ChannelError> {
        Self::depolarizing(layout, 1.0)
    }

    /// Sequential composition: `self` first, then `after`.
    pub fn then(&self, after: &ChannelRep) -> Result<Self, ChannelError> {
        if self.layout() != after.layout() {
            return Err(ChannelError::LayoutMismatch);
        }
        let layout = self.layout().clone();
        let all: Vec<usize> = (0..layout.sites()).collect();
        ChannelRep::local(
            vec![(all.clone(), self.strip_aux()?), (all, after.strip_aux()?)],
            layout,
        )
    }

    /// The same channel viewed on a layout without the auxiliary factor.
    /// Stages embedded on sites never touch the auxiliary factor, so this is
    /// only valid for channels built on aux-free layouts (the common case).
    fn strip_aux(&self) -> Result<ChannelRep, ChannelError> {
        if self.layout().aux_dim() != 1 {
            return Err(ChannelError::LayoutMismatch);
        }
        Ok(self.clone())
    }

    /// Identity extension: the same channel acting on `layout ⊗ aux`.
    pub fn with_aux(&self, aux_dim: usize) -> Result<Self, ChannelError> {
        let base = self.layout().clone();
        let extended = base.with_aux(aux_dim)?;
        let all: Vec<usize> = (0..base.sites()).collect();
        ChannelRep::local(vec![(all, self.strip_aux()?)], extended)
    }

    /// Hilbert–Schmidt adjoint `Φ*`, built structurally per representation
    /// (Kraus adjoints, Choi transpose-swap, reversed local composition).
    pub fn adjoint(&self) -> ChannelRep {
        match self {
            ChannelRep::Kraus { ops, layout } => ChannelRep::Kraus {
                ops: ops.iter().map(|k| k.adjoint()).collect(),
                layout: layout.clone(),
            },
            ChannelRep::Choi { matrix, layout } => {
                let d = layout.total_dim();
                ChannelRep::Choi { matrix: choi_transpose_swap(matrix, d), layout: layout.clone() }
            }
            ChannelRep::Local { stages, layout } => ChannelRep::Local {
                stages: stages
                    .iter()
                    .rev()
                    .map(|(sites, ch)| (sites.clone(), ch.adjoint()))
                    .collect(),
                layout: layout.clone(),
            },
            // twirl projectors are HS self-adjoint
            ChannelRep::HaarTwirl { .. } => self.clone(),
            ChannelRep::Mixture { parts, layout } => ChannelRep::Mixture {
                parts: parts.iter().map(|(w, ch)| (*w, ch.adjoint())).collect(),
                layout: layout.clone(),
            },
        }
    }

    /// Apply the channel to an arbitrary operator (linear action).
    pub fn apply_op(&self, x: &CMat) -> Result<CMat, ChannelError> {
        let d = self.dim();
        if x.nrows() != d || x.ncols() != d {
            return Err(ChannelError::DimMismatch { expected: d, found: x.nrows() });
        }
        Ok(self.apply_unchecked(x))
    }

    fn apply_unchecked(&self, x: &CMat) -> CMat {
        match self {
            ChannelRep::Kraus { ops, .. } => {
                let d = x.nrows();
                let mut out = CMat::zeros(d, d);
                for k in ops {
                    out += k * x * k.adjoint();
                }
                out
            }
            ChannelRep::Choi { matrix, .. } => {
                let d = x.nrows();
                let mut out = CMat::zeros(d, d);
                for b in 0..d {
                    for a in 0..d {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for j in 0..d {
                            for i in 0..d {
                                acc += x[(i, j)] * matrix[(i * d + a, j * d + b)];
                            }
                        }
                        out[(a, b)] = acc;
                    }
                }
                out
            }
            ChannelRep::Local { stages, layout } => {
                let mut y = x.clone();
                for (sites, local) in stages {
                    y = apply_embedded(local, sites, &y, layout);
                }
                y
            }
            ChannelRep::HaarTwirl { data, .. } => weingarten_apply(data, x, 1),
            ChannelRep::Mixture { parts, .. } => {
                let d = x.nrows();
                let mut out = CMat::zeros(d, d);
                for (w, ch) in parts {
                    out += ch.apply_unchecked(x) * Complex64::new(*w, 0.0);
                }
                out
            }
        }
    }

    /// Apply to a state; the output is renormalized only by the Hermitian
    /// part (CPTP maps preserve trace and positivity by construction).
    pub fn apply(&self, rho: &QState) -> Result<QState, ChannelError> {
        if rho.layout() != self.layout() {
            return Err(ChannelError::LayoutMismatch);
        }
        let out = self.apply_op(rho.matrix())?;
        let out = la::hermitian_part(&out);
        Ok(QState::unchecked(out, rho.layout().clone()))
    }

    /// Choi matrix under the default dimension cap.
    pub fn choi(&self) -> Result<CMat, ChannelError> {
        self.choi_capped(CHOI_DIM_CAP)
    }

    /// Choi matrix `Σ_{ij} |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`; errors if `d²` exceeds `cap`.
    pub fn choi_capped(&self, cap: usize) -> Result<CMat, ChannelError> {
        let d = self.dim();
        let required = d.checked_mul(d).ok_or(ChannelError::CapacityExceeded {
            required: usize::MAX,
            cap,
        })?;
        if required > cap {
            return Err(ChannelError::CapacityExceeded { required, cap });
        }
        if let ChannelRep::Choi { matrix, .. } = self {
            return Ok(matrix.clone());
        }
        let mut c = CMat::zeros(required, required);
        let mut basis = CMat::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                basis[(i, j)] = Complex64::new(1.0, 0.0);
                let block = self.apply_unchecked(&basis);
                basis[(i, j)] = Complex64::new(0.0, 0.0);
                for b in 0..d {
                    for a in 0..d {
                        c[(i * d + a, j * d + b)] = block[(a, b)];
                    }
                }
            }
        }
        Ok(c)
    }

    /// Superoperator matrix in the matrix-unit basis: column `(i,j)` holds
    /// `vec(Φ(|i⟩⟨j|))` with row pairing `(a,b) ↦ a·d+b`.
    pub(crate) fn superop_capped(&self, cap: usize) -> Result<CMat, ChannelError> {
        let c = self.choi_capped(cap)?;
        let d = self.dim();
        Ok(reshuffle(&c, d))
    }
}

/// Reshuffle between Choi `C[(i·d+a),(j·d+b)]` and superoperator
/// `S[(a·d+b),(i·d+j)]` index pairings (an involution).
pub(crate) fn reshuffle(m: &CMat, d: usize) -> CMat {
    let n = d * d;
    let mut out = CMat::zeros(n, n);
    for j in 0..d {
        for i in 0..d {
            for b in 0..d {
                for a in 0..d {
                    out[(a * d + b, i * d + j)] = m[(i * d + a, j * d + b)];
                }
            }
        }
    }
    out
}

/// Choi matrix of the HS adjoint: swap the two tensor slots and conjugate.
fn choi_transpose_swap(c: &CMat, d: usize) -> CMat {
    let n = d * d;
    let mut out = CMat::zeros(n, n);
    for j in 0..d {
        for i in 0..d {
            for b in 0..d {
                for a in 0..d {
                    out[(a * d + i, b * d + j)] = c[(i * d + a, j * d + b)].conj();
                }
            }
        }
    }
    out
}

/// Embed `local` on all copies of `sites` inside `layout` and apply to `x`:
/// gather the block to the leading factor positions, act, scatter back.
fn apply_embedded(local: &ChannelRep, sites: &[usize], x: &CMat, layout: &SiteLayout) -> CMat {
    let d = layout.total_dim();
    let m = local.layout().total_dim();
    let r_dim = d / m;
    let perm = layout.gather_copies_of(sites);
    if perm.iter().enumerate().all(|(new, &old)| new == old) {
        // in-order whole-system stage (modulo a trailing auxiliary factor)
        return apply_on_leading_block(local, x, m, r_dim);
    }
    let map = tensors::factor_index_map(&layout.factor_dims(), &perm)
        .expect("gather permutation is a bijection");
    let mut gathered = CMat::zeros(d, d);
    for c in 0..d {
        let mc = map[c];
        for r in 0..d {
            gathered[(map[r], mc)] = x[(r, c)];
        }
    }
    let acted = apply_on_leading_block(local, &gathered, m, r_dim);
    let mut out = CMat::zeros(d, d);
    for c in 0..d {
        let mc = map[c];
        for r in 0..d {
            out[(r, c)] = acted[(map[r], mc)];
        }
    }
    out
}

/// Apply `local ⊗ Id` where `local` acts on the leading factor of dimension
/// `m` and the identity on the trailing dimension `r_dim`.
fn apply_on_leading_block(local: &ChannelRep, y: &CMat, m: usize, r_dim: usize) -> CMat {
    match local {
        ChannelRep::HaarTwirl { data, .. } => weingarten_apply(data, y, r_dim),
        ChannelRep::Kraus { ops, .. } => {
            let d = m * r_dim;
            let mut out = CMat::zeros(d, d);
            let mut tmp = CMat::zeros(d, d);
            for k in ops {
                // tmp = (K ⊗ I) y
                tmp.fill(Complex64::new(0.0, 0.0));
                for col in 0..d {
                    for u in 0..m {
                        for up in 0..m {
                            let kv = k[(u, up)];
                            if kv.norm_sqr() == 0.0 {
                                continue;
                            }
                            for p in 0..r_dim {
                                tmp[(u * r_dim + p, col)] += kv * y[(up * r_dim + p, col)];
                            }
                        }
                    }
                }
                // out += tmp (K ⊗ I)†
                for v in 0..m {
                    for vp in 0..m {
                        let kv = k[(v, vp)].conj();
                        if kv.norm_sqr() == 0.0 {
                            continue;
                        }
                        for q in 0..r_dim {
                            let colv = v * r_dim + q;
                            let colvp = vp * r_dim + q;
                            for row in 0..d {
                                out[(row, colv)] += tmp[(row, colvp)] * kv;
                            }
                        }
                    }
                }
            }
            out
        }
        ChannelRep::Local { stages, layout } => {
            // recurse: apply each stage embedded in the block, identity on the rest
            let mut cur = y.clone();
            for (sites, ch) in stages {
                let d = m * r_dim;
                // build the gather permutation of the block layout, extended by
                // the trailing factor
                let mut perm = layout.gather_copies_of(sites);
                let nf = perm.len();
                perm.push(nf); // trailing rest-factor stays last
                let mut dims = layout.factor_dims();
                dims.push(r_dim);
                let map = tensors::factor_index_map(&dims, &perm)
                    .expect("gather permutation is a bijection");
                let mut gathered = CMat::zeros(d, d);
                for c in 0..d {
                    for r in 0..d {
                        gathered[(map[r], map[c])] = cur[(r, c)];
                    }
                }
                let mm = ch.layout().total_dim();
                let acted = apply_on_leading_block(ch, &gathered, mm, d / mm);
                let mut back = CMat::zeros(d, d);
                for c in 0..d {
                    for r in 0..d {
                        back[(r, c)] = acted[(map[r], map[c])];
                    }
                }
                cur = back;
            }
            cur
        }
        ChannelRep::Mixture { parts, .. } => {
            let d = m * r_dim;
            let mut out = CMat::zeros(d, d);
            for (w, ch) in parts {
                out += apply_on_leading_block(ch, y, m, r_dim) * Complex64::new(*w, 0.0);
            }
            out
        }
        ChannelRep::Choi { .. } => {
            // generic fallback through the local superaction on block units
            let d = m * r_dim;
            let mut out = CMat::zeros(d, d);
            let mut unit = CMat::zeros(m, m);
            for v in 0..m {
                for u in 0..m {
                    // block (u,v) of y
                    let mut blk = CMat::zeros(r_dim, r_dim);
                    let mut nonzero = false;
                    for q in 0..r_dim {
                        for p in 0..r_dim {
                            let val = y[(u * r_dim + p, v * r_dim + q)];
                            if val.norm_sqr() > 0.0 {
                                nonzero = true;
                            }
                            blk[(p, q)] = val;
                        }
                    }
                    if !nonzero {
                        continue;
                    }
                    unit[(u, v)] = Complex64::new(1.0, 0.0);
                    let image = local.apply_unchecked(&unit);
                    unit[(u, v)] = Complex64::new(0.0, 0.0);
                    for vv in 0..m {
                        for uu in 0..m {
                            let coef = image[(uu, vv)];
                            if coef.norm_sqr() == 0.0 {
                                continue;
                            }
                            for q in 0..r_dim {
                                for p in 0..r_dim {
                                    out[(uu * r_dim + p, vv * r_dim + q)] += coef * blk[(p, q)];
                                }
                            }
                        }
                    }
                }
            }
            out
        }
    }
}

/// Weingarten application of the twirl projector on the leading block:
/// `E(X) = Σ_{στ} W_{στ} tr_blk(P_σ† X) P_τ`, carried out blockwise so only
/// `O(k!·m·r²)` work is done (the permutation operators are 0/1-sparse).
fn weingarten_apply(data: &TwirlData, y: &CMat, r_dim: usize) -> CMat {
    let m = data.dim();
    let d = m * r_dim;
    let nperm = data.perms.len();
    // M_σ = Σ_v  block(map_σ(v), v)
    let mut m_sigma: Vec<CMat> = Vec::with_capacity(nperm);
    for op in &data.perms {
        let map = op.index_map();
        let mut acc = CMat::zeros(r_dim, r_dim);
        for v in 0..m {
            let u = map[v];
            for q in 0..r_dim {
                for p in 0..r_dim {
                    acc[(p, q)] += y[(u * r_dim + p, v * r_dim + q)];
                }
            }
        }
        m_sigma.push(acc);
    }
    // N_τ = Σ_σ W_{στ} M_σ, then place N_τ on the support of P_τ
    let mut out = CMat::zeros(d, d);
    for (t, op) in data.perms.iter().enumerate() {
        let mut n_tau = CMat::zeros(r_dim, r_dim);
        for (s, ms) in m_sigma.iter().enumerate() {
            let w = data.weingarten[(s, t)];
            if w != 0.0 {
                n_tau += ms * Complex64::new(w, 0.0);
            }
        }
        let map = op.index_map();
        for v in 0..m {
            let u = map[v];
            for q in 0..r_dim {
                for p in 0..r_dim {
                    out[(u * r_dim + p, v * r_dim + q)] += n_tau[(p, q)];
                }
            }
        }
    }
    out
}

/// A channel checked for the two defining conditional-expectation properties.
#[derive(Debug, Clone)]
pub struct CondExpectation {
    channel: ChannelRep,
    pub idempotent: bool,
    pub self_adjoint: bool,
}

impl CondExpectation {
    pub fn channel(&self) -> &ChannelRep {
        &self.channel
    }

    pub fn is_valid(&self) -> bool {
        self.idempotent && self.self_adjoint
    }

    pub fn apply(&self, rho: &QState) -> Result<QState, ChannelError> {
        self.channel.apply(rho)
    }

    pub fn apply_op(&self, x: &CMat) -> Result<CMat, ChannelError> {
        self.channel.apply_op(x)
    }

    /// Identity extension on an auxiliary factor.
    pub fn with_aux(&self, aux_dim: usize) -> Result<CondExpectation, ChannelError> {
        Ok(CondExpectation {
            channel: self.channel.with_aux(aux_dim)?,
            idempotent: self.idempotent,
            self_adjoint: self.self_adjoint,
        })
    }
}

/// Numerically test idempotence and Hilbert–Schmidt self-adjointness.
///
/// Idempotence is tested on the full matrix-unit basis up to dimension 64
/// and on random probe operators above that; self-adjointness through Choi
/// symmetry when the Choi fits the cap, otherwise through inner-product
/// probes. Failed flags are reported, not raised.
pub fn validate_cond_expectation(ch: &ChannelRep) -> Result<CondExpectation, ChannelError> {
    let d = ch.dim();
    let tol = CP_TOL;
    let mut idempotent = true;
    if d <= 64 {
        let mut basis = CMat::zeros(d, d);
        'outer: for j in 0..d {
            for i in 0..d {
                basis[(i, j)] = Complex64::new(1.0, 0.0);
                let once = ch.apply_op(&basis)?;
                basis[(i, j)] = Complex64::new(0.0, 0.0);
                let twice = ch.apply_op(&once)?;
                if la::frob_norm(&(&twice - &once)) > tol {
                    idempotent = false;
                    break 'outer;
                }
            }
        }
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x1d3_u64);
        use rand::SeedableRng;
        for _ in 0..16 {
            let probe = random_operator(d, &mut rng);
            let once = ch.apply_op(&probe)?;
            let twice = ch.apply_op(&once)?;
            if la::frob_norm(&(&twice - &once)) > tol * la::frob_norm(&once).max(1.0) {
                idempotent = false;
                break;
            }
        }
    }

    let self_adjoint = if d * d <= CHOI_DIM_CAP {
        let c = ch.choi()?;
        let c_adj = choi_transpose_swap(&c, d);
        la::frob_norm(&(&c_adj - &c)) <= tol * la::frob_norm(&c).max(1.0)
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5ad_u64);
        use rand::SeedableRng;
        let mut ok = true;
        for _ in 0..16 {
            let x = random_operator(d, &mut rng);
            let y = random_operator(d, &mut rng);
            let lhs = la::hs_inner(&x, &ch.apply_op(&y)?);
            let rhs = la::hs_inner(&ch.apply_op(&x)?, &y);
            if (lhs - rhs).norm() > tol * (lhs.norm() + rhs.norm()).max(1.0) {
                ok = false;
                break;
            }
        }
        ok
    };

    Ok(CondExpectation { channel: ch.clone(), idempotent, self_adjoint })
}

/// Largest Frobenius defect of `A∘B - B∘A` over probe operators. Used to
/// check that a conditional expectation projects onto decoherence-free
/// structure of a channel (commutation is verified numerically; no recovery
/// map is constructed).
pub fn commutation_defect(a: &ChannelRep, b: &ChannelRep) -> Result<f64, ChannelError> {
    if a.layout() != b.layout() {
        return Err(ChannelError::LayoutMismatch);
    }
    let d = a.dim();
    let mut defect: f64 = 0.0;
    if d <= 64 {
        let mut basis = CMat::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                basis[(i, j)] = Complex64::new(1.0, 0.0);
                let ab = a.apply_op(&b.apply_op(&basis)?)?;
                let ba = b.apply_op(&a.apply_op(&basis)?)?;
                basis[(i, j)] = Complex64::new(0.0, 0.0);
                defect = defect.max(la::frob_norm(&(&ab - &ba)));
            }
        }
    } else {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xc0_u64);
        for _ in 0..16 {
            let probe = random_operator(d, &mut rng);
            let ab = a.apply_op(&b.apply_op(&probe)?)?;
            let ba = b.apply_op(&a.apply_op(&probe)?)?;
            defect = defect.max(la::frob_norm(&(&ab - &ba)));
        }
    }
    Ok(defect)
}

fn random_operator<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    CMat::from_fn(d, d, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}

/// Random CPTP map from a Haar Stinespring dilation with the given
/// environment dimension (Kraus rank).
pub fn random_kraus_channel<R: Rng + ?Sized>(
    layout: SiteLayout,
    env_dim: usize,
    rng: &mut R,
) -> ChannelRep {
    let d = layout.total_dim();
    let u = crate::moments::haar_unitary(d * env_dim, rng);
    let mut ops = Vec::with_capacity(env_dim);
    for e in 0..env_dim {
        let mut k = CMat::zeros(d, d);
        for b in 0..d {
            for a in 0..d {
                k[(a, b)] = u[(a * env_dim + e, b * env_dim)];
            }
        }
        ops.push(k);
    }
    ChannelRep::Kraus { ops, layout }
}

/// Two-sided relative-error comparison of channels under the completely
/// positive order.
#[derive(Debug, Clone)]
pub struct ComparabilityResult {
    /// Smallest `ε` with `Φ - (1-ε)Ψ` completely positive (within tolerance).
    pub eps_lower: f64,
    /// Smallest `δ` with `(1+δ)Ψ - Φ` completely positive (within tolerance).
    pub delta_upper: f64,
    /// Half-width of the final bisection bracket.
    pub bisection_tol: f64,
    /// False when a bracket could not be established.
    pub valid: bool,
}

pub const RELATIVE_ERROR_BISECTION_STEPS: usize = 60;

/// Find the tightest `ε`, `δ` with `(1+δ)Ψ ≻ Φ ≻ (1-ε)Ψ` by bisection on the
/// Choi positive-semidefiniteness predicate (tolerance `tol` on eigenvalues).
pub fn relative_error(
    phi: &ChannelRep,
    psi: &ChannelRep,
    tol: f64,
) -> Result<ComparabilityResult, ChannelError> {
    relative_error_capped(phi, psi, tol, RELATIVE_ERROR_BISECTION_STEPS, CHOI_DIM_CAP)
}

pub fn relative_error_capped(
    phi: &ChannelRep,
    psi: &ChannelRep,
    tol: f64,
    steps: usize,
    cap: usize,
) -> Result<ComparabilityResult, ChannelError> {
    if phi.layout() != psi.layout() {
        return Err(ChannelError::LayoutMismatch);
    }
    let c_phi = phi.choi_capped(cap)?;
    let c_psi = psi.choi_capped(cap)?;
    for c in [&c_phi, &c_psi] {
        if !la::psd_within(c, CP_TOL) {
            return Err(ChannelError::NotCompletelyPositive { min_eig: la::min_eigval(c) });
        }
    }

    let lower_ok = |eps: f64| {
        let m = &c_phi - la::scale(&c_psi, 1.0 - eps);
        la::psd_within(&m, tol)
    };
    let upper_ok = |delta: f64| {
        let m = la::scale(&c_psi, 1.0 + delta) - &c_phi;
        la::psd_within(&m, tol)
    };

    let mut valid = true;

    let eps_lower = if lower_ok(0.0) {
        0.0
    } else if !lower_ok(1.0) {
        valid = false;
        1.0
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..steps {
            let mid = 0.5 * (lo + hi);
            if lower_ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };

    let delta_upper = if upper_ok(0.0) {
        0.0
    } else {
        let mut hi = 1.0f64;
        let mut found = false;
        while hi < 2.0_f64.powi(30) {
            if upper_ok(hi) {
                found = true;
                break;
            }
            hi *= 2.0;
        }
        if !found {
            valid = false;
            f64::INFINITY
        } else {
            let mut lo = hi / 2.0;
            if hi == 1.0 {
                lo = 0.0;
            }
            for _ in 0..steps {
                let mid = 0.5 * (lo + hi);
                if upper_ok(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    };

    Ok(ComparabilityResult {
        eps_lower,
        delta_upper,
        bisection_tol: 0.5f64.powi(steps as i32),
        valid,
    })
}

/// Smallest `t ≤ t_max` with `0.9·E ⪯ (Φ*Φ)^t ⪯ 1.1·E` in the completely
/// positive order (Choi eigenvalue tests at 1e-9); `None` if not reached.
pub fn cb_return_time(
    phi: &ChannelRep,
    e: &CondExpectation,
    t_max: usize,
) -> Result<Option<usize>, ChannelError> {
    cb_return_time_with_band(phi, e, t_max, 0.9, 1.1, 1e-9)
}

pub fn cb_return_time_with_band(
    phi: &ChannelRep,
    e: &CondExpectation,
    t_max: usize,
    band_lo: f64,
    band_hi: f64,
    tol: f64,
) -> Result<Option<usize>, ChannelError> {
    if phi.layout() != e.channel().layout() {
        return Err(ChannelError::LayoutMismatch);
    }
    let d = phi.dim();
    // unitality
    let image_of_id = phi.apply_op(&la::identity(d))?;
    let dev = la::frob_norm(&(&image_of_id - la::identity(d)));
    if dev > CP_TOL * (d as f64).sqrt() {
        return Err(ChannelError::NotUnital { dev });
    }
    if !e.is_valid() {
        return Err(ChannelError::InvalidConditionalExpectation {
            idempotent: e.idempotent,
            self_adjoint: e.self_adjoint,
        });
    }

    let s_phi = phi.superop_capped(CHOI_DIM_CAP)?;
    let s_theta = s_phi.adjoint() * &s_phi;
    let c_e = e.channel().choi()?;
    let lo_target = la::scale(&c_e, band_lo);
    let hi_target = la::scale(&c_e, band_hi);

    let mut s_pow = s_theta.clone();
    for t in 1..=t_max {
        if t > 1 {
            s_pow = &s_pow * &s_theta;
        }
        let c_t = reshuffle(&s_pow, d);
        let lower = &c_t - &lo_target;
        let upper = &hi_target - &c_t;
        if la::psd_within(&lower, tol) && la::psd_within(&upper, tol) {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Entropy-decay constant guaranteed by a CB return time: `λ = 1/(2·t_cb)`.
pub fn sdpi_from_return_time(t_cb: usize) -> f64 {
    assert!(t_cb >= 1, "return time must be at least 1");
    1.0 / (2.0 * t_cb as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::local_twirl;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qubit() -> SiteLayout {
        SiteLayout::qubits(1, 1).unwrap()
    }

    fn random_state(layout: &SiteLayout, rng: &mut ChaCha8Rng) -> QState {
        let d = layout.total_dim();
        let g = random_operator(d, rng);
        let h = &g * g.adjoint();
        let tr = h.trace().re;
        QState::new(la::scale(&h, 1.0 / tr), layout.clone()).unwrap()
    }

    #[test]
    fn identity_channel_acts_trivially() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layout = SiteLayout::qubits(2, 1).unwrap();
        let id = ChannelRep::identity(layout.clone());
        let rho = random_state(&layout, &mut rng);
        let out = id.apply(&rho).unwrap();
        assert!(la::frob_norm(&(out.matrix() - rho.matrix())) < 1e-14);
    }

    #[test]
    fn full_depolarizer_hits_maximally_mixed() {
        let layout = qubit();
        let dep = ChannelRep::full_depolarizer(layout.clone()).unwrap();
        let zero = QState::basis_state(layout.clone(), 0).unwrap();
        let out = dep.apply(&zero).unwrap();
        let target = QState::maximally_mixed(layout);
        assert!(la::frob_norm(&(out.matrix() - target.matrix())) < 1e-12);
    }

    #[test]
    fn disjoint_local_stages_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layout = SiteLayout::qubits(2, 1).unwrap();
        let dep0 = local_twirl(&layout, &[0]).unwrap();
        let dep1 = local_twirl(&layout, &[1]).unwrap();
        let rho = random_state(&layout, &mut rng);
        let a = dep0.then(&dep1).unwrap().apply(&rho).unwrap();
        let b = dep1.then(&dep0).unwrap().apply(&rho).unwrap();
        assert!(la::frob_norm(&(a.matrix() - b.matrix())) < 1e-12);
    }

    #[test]
    fn choi_of_identity_and_depolarizer() {
        let layout = qubit();
        let id = ChannelRep::identity(layout.clone());
        let c = id.choi().unwrap();
        assert!((c.trace().re - 2.0).abs() < 1e-12);
        let ev = la::eigvalsh(&c);
        assert!((ev[3] - 2.0).abs() < 1e-12 && ev[2].abs() < 1e-12); // rank one

        let dep = ChannelRep::full_depolarizer(layout).unwrap();
        let cd = dep.choi().unwrap();
        let target = la::scale(&la::identity(4), 0.5);
        assert!(la::frob_norm(&(&cd - &target)) < 1e-12);
    }

    #[test]
    fn random_kraus_choi_is_cptp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = SiteLayout::qubits(2, 1).unwrap();
        let ch = random_kraus_channel(layout, 3, &mut rng);
        let c = ch.choi().unwrap();
        assert!(la::psd_within(&c, 1e-10));
        let two = SiteLayout::new(vec![4, 4], 1).unwrap();
        let tr_out = tensors::partial_trace(&c, &two, &[0]).unwrap();
        assert!(la::frob_norm(&(&tr_out - la::identity(4))) < 1e-10);
    }

    #[test]
    fn choi_agrees_between_kraus_and_local_forms() {
        let layout = SiteLayout::qubits(2, 1).unwrap();
        // single-qubit depolarizer on site 1, once as a local stage and once
        // as explicit Kraus operators on the whole space
        let p = 0.7;
        let local = ChannelRep::local(
            vec![(vec![1], ChannelRep::depolarizing(SiteLayout::new(vec![2], 1).unwrap(), p).unwrap())],
            layout.clone(),
        )
        .unwrap();
        let single = ChannelRep::depolarizing(SiteLayout::new(vec![2], 1).unwrap(), p).unwrap();
        let kraus_ops = match single {
            ChannelRep::Kraus { ops, .. } => ops,
            _ => unreachable!(),
        };
        let lifted: Vec<CMat> = kraus_ops.iter().map(|k| la::identity(2).kronecker(k)).collect();
        let global = ChannelRep::kraus(lifted, layout).unwrap();
        let c1 = local.choi().unwrap();
        let c2 = global.choi().unwrap();
        assert!(la::frob_norm(&(&c1 - &c2)) < 1e-10);
    }

    #[test]
    fn adjoint_satisfies_hs_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layout = SiteLayout::qubits(1, 1).unwrap();
        let ch = random_kraus_channel(layout, 2, &mut rng);
        let adj = ch.adjoint();
        for _ in 0..10 {
            let x = random_operator(2, &mut rng);
            let y = random_operator(2, &mut rng);
            let lhs = la::hs_inner(&ch.apply_op(&x).unwrap(), &y);
            let rhs = la::hs_inner(&x, &adj.apply_op(&y).unwrap());
            assert!((lhs - rhs).norm() < 1e-10);
        }
        // Choi transpose-swap route agrees
        let via_choi = ChannelRep::Choi {
            matrix: choi_transpose_swap(&ch.choi().unwrap(), 2),
            layout: ch.layout().clone(),
        };
        for _ in 0..5 {
            let y = random_operator(2, &mut rng);
            let a = adj.apply_op(&y).unwrap();
            let b = via_choi.apply_op(&y).unwrap();
            assert!(la::frob_norm(&(&a - &b)) < 1e-10);
        }
    }

    #[test]
    fn identity_extension_acts_as_tensor_product() {
        // (Φ ⊗ Id)(ρ ⊗ σ) = Φ(ρ) ⊗ σ for a composed local channel
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let layout = SiteLayout::qubits(2, 1).unwrap();
        let composed = local_twirl(&layout, &[0]).unwrap()
            .then(&local_twirl(&layout, &[0, 1]).unwrap())
            .unwrap();
        let extended = composed.with_aux(3).unwrap();
        let rho = random_state(&layout, &mut rng);
        let aux = {
            let g = random_operator(3, &mut rng);
            let h = &g * g.adjoint();
            la::scale(&h, 1.0 / h.trace().re)
        };
        let joint = rho.matrix().kronecker(&aux);
        let out = extended.apply_op(&joint).unwrap();
        let expect = composed.apply_op(rho.matrix()).unwrap().kronecker(&aux);
        assert!(la::frob_norm(&(&out - &expect)) < 1e-12);
    }

    #[test]
    fn out_of_order_full_span_stage_reorders_factors() {
        // a stage listing all sites in swapped order must act through the
        // swap, not the identity
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layout = SiteLayout::new(vec![2, 3], 1).unwrap();
        let swapped_layout = SiteLayout::new(vec![3, 2], 1).unwrap();
        // depolarize factor 1 (the qutrit listed first in swapped order)
        let dep3 = ChannelRep::depolarizing(SiteLayout::new(vec![3], 1).unwrap(), 1.0).unwrap();
        let local_on_swapped = ChannelRep::local(
            vec![(vec![0], dep3.clone())],
            swapped_layout,
        )
        .unwrap();
        let stage = ChannelRep::local(vec![(vec![1, 0], local_on_swapped)], layout.clone()).unwrap();
        let direct = ChannelRep::local(vec![(vec![1], dep3)], layout.clone()).unwrap();
        let rho = random_state(&layout, &mut rng);
        let a = stage.apply(&rho).unwrap();
        let b = direct.apply(&rho).unwrap();
        assert!(la::frob_norm(&(a.matrix() - b.matrix())) < 1e-12);
    }

    #[test]
    fn relative_error_identical_channels() {
        let layout = qubit();
        let dep = ChannelRep::full_depolarizer(layout).unwrap();
        let res = relative_error(&dep, &dep, 1e-9).unwrap();
        assert!(res.valid);
        assert!(res.eps_lower < 1e-12);
        assert!(res.delta_upper < 1e-12);
    }

    #[test]
    fn relative_error_depolarizing_vs_full() {
        // Φ = depolarizing(0.9), Ψ = full depolarizer: ε = 0.1, δ = 0.3.
        // Confirmed against the direct Choi eigenvalue oracle below.
        let layout = qubit();
        let phi = ChannelRep::depolarizing(layout.clone(), 0.9).unwrap();
        let psi = ChannelRep::full_depolarizer(layout).unwrap();
        let res = relative_error(&phi, &psi, 1e-9).unwrap();
        assert!(res.valid);
        assert!((res.eps_lower - 0.1).abs() < 1e-6, "eps {}", res.eps_lower);
        assert!((res.delta_upper - 0.3).abs() < 1e-6, "delta {}", res.delta_upper);

        // oracle: eigenvalues of Choi(Φ) - (1-ε)Choi(Ψ) computed directly
        let c_phi = phi.choi().unwrap();
        let c_psi = psi.choi().unwrap();
        for (eps, expect_psd) in [(0.11, true), (0.09, false)] {
            let m = &c_phi - la::scale(&c_psi, 1.0 - eps);
            assert_eq!(la::min_eigval(&m) >= -1e-12, expect_psd);
        }
        for (delta, expect_psd) in [(0.31, true), (0.29, false)] {
            let m = la::scale(&c_psi, 1.0 + delta) - &c_phi;
            assert_eq!(la::min_eigval(&m) >= -1e-12, expect_psd);
        }
    }

    #[test]
    fn relative_error_of_explicit_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = qubit();
        let psi = ChannelRep::full_depolarizer(layout.clone()).unwrap();
        let theta = random_kraus_channel(layout.clone(), 2, &mut rng);
        let a = 0.25;
        let mix = ChannelRep::mixture(vec![(1.0 - a, psi.clone()), (a, theta)], layout).unwrap();
        let res = relative_error(&mix, &psi, 1e-9).unwrap();
        assert!(res.eps_lower <= a + 1e-9, "eps {} > a", res.eps_lower);
    }

    #[test]
    fn cond_expectation_flags() {
        let layout = qubit();
        let dep = ChannelRep::full_depolarizer(layout.clone()).unwrap();
        let ce = validate_cond_expectation(&dep).unwrap();
        assert!(ce.idempotent && ce.self_adjoint);

        let half = ChannelRep::depolarizing(layout, 0.5).unwrap();
        let ce_half = validate_cond_expectation(&half).unwrap();
        assert!(!ce_half.idempotent);
        assert!(ce_half.self_adjoint);
    }

    #[test]
    fn twirl_commutes_with_averaged_unitaries() {
        let layout = qubit();
        let phi = ChannelRep::depolarizing(layout.clone(), 0.5).unwrap();
        let e = ChannelRep::full_depolarizer(layout.clone()).unwrap();
        assert!(commutation_defect(&phi, &e).unwrap() < 1e-10);
        // amplitude damping does not commute with the depolarizer
        let g: f64 = 0.4;
        let mut k0 = CMat::zeros(2, 2);
        k0[(0, 0)] = Complex64::new(1.0, 0.0);
        k0[(1, 1)] = Complex64::new((1.0 - g).sqrt(), 0.0);
        let mut k1 = CMat::zeros(2, 2);
        k1[(0, 1)] = Complex64::new(g.sqrt(), 0.0);
        let ad = ChannelRep::kraus(vec![k0, k1], layout).unwrap();
        assert!(commutation_defect(&ad, &e).unwrap() > 1e-3);
    }

    #[test]
    fn cb_return_time_of_projection_is_one() {
        let layout = qubit();
        let dep = ChannelRep::full_depolarizer(layout).unwrap();
        let ce = validate_cond_expectation(&dep).unwrap();
        let t = cb_return_time(&dep, &ce, 5).unwrap();
        assert_eq!(t, Some(1));
    }

    #[test]
    fn cb_return_time_depolarizing_half() {
        // (Φ*Φ)^t interpolates toward the projector with weight (1-p)^{2t};
        // the binding constraint is the upper band: (1-p)^{2t} ≤ 0.1/(d²-1),
        // giving t = 3 for p = 1/2 on a qubit.
        let layout = qubit();
        let phi = ChannelRep::depolarizing(layout.clone(), 0.5).unwrap();
        let e = validate_cond_expectation(&ChannelRep::full_depolarizer(layout).unwrap()).unwrap();
        let t = cb_return_time(&phi, &e, 10).unwrap();
        assert_eq!(t, Some(3));
    }

    #[test]
    fn cb_return_time_identity_never_contracts() {
        let layout = qubit();
        let id = ChannelRep::identity(layout.clone());
        let e = validate_cond_expectation(&ChannelRep::full_depolarizer(layout).unwrap()).unwrap();
        let t = cb_return_time(&id, &e, 10).unwrap();
        assert_eq!(t, None);
    }

    #[test]
    fn cb_return_time_monotone_in_band() {
        let layout = qubit();
        let phi = ChannelRep::depolarizing(layout.clone(), 0.5).unwrap();
        let e = validate_cond_expectation(&ChannelRep::full_depolarizer(layout).unwrap()).unwrap();
        let tight = cb_return_time_with_band(&phi, &e, 20, 0.9, 1.1, 1e-9).unwrap().unwrap();
        let loose = cb_return_time_with_band(&phi, &e, 20, 0.8, 1.2, 1e-9).unwrap().unwrap();
        assert!(loose <= tight);
    }

    #[test]
    fn sdpi_from_return_time_values() {
        assert!((sdpi_from_return_time(1) - 0.5).abs() < 1e-15);
        assert!((sdpi_from_return_time(3) - 1.0 / 6.0).abs() < 1e-15);
        assert!((sdpi_from_return_time(50) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn non_unital_rejected_by_cb_return_time() {
        // amplitude damping is not unital
        let layout = qubit();
        let g: f64 = 0.3;
        let mut k0 = CMat::zeros(2, 2);
        k0[(0, 0)] = Complex64::new(1.0, 0.0);
        k0[(1, 1)] = Complex64::new((1.0 - g).sqrt(), 0.0);
        let mut k1 = CMat::zeros(2, 2);
        k1[(0, 1)] = Complex64::new(g.sqrt(), 0.0);
        let ad = ChannelRep::kraus(vec![k0, k1], layout.clone()).unwrap();
        let e = validate_cond_expectation(&ChannelRep::full_depolarizer(layout).unwrap()).unwrap();
        assert!(matches!(cb_return_time(&ad, &e, 5), Err(ChannelError::NotUnital { .. })));
    }

    #[test]
    fn capacity_error_names_dimension() {
        let layout = SiteLayout::qubits(7, 1).unwrap(); // d = 128, d² = 16384
        let id = ChannelRep::identity(layout);
        match id.choi() {
            Err(ChannelError::CapacityExceeded { required, cap }) => {
                assert_eq!(required, 16384);
                assert_eq!(cap, CHOI_DIM_CAP);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }
}
