//! Umegaki relative entropy and the machinery built on it: the chain-rule
//! identity, per-state decay ratios, sampled decay-constant estimation,
//! the β comparison factor, Pinsker and continuity bounds, and the depth
//! needed to reach a target additive error.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channels::{ChannelError, ChannelRep, CondExpectation};
use crate::la;
use crate::tensors::{CMat, QState, SiteLayout, TensorError};
use crate::PSD_TOL;

/// Support leakage above this threshold makes a relative entropy infinite.
pub const SUPPORT_LEAK_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("states live on different layouts")]
    LayoutMismatch,
    #[error("conditional expectation does not fix the reference state (deviation {dev:.3e})")]
    NotFixedReference { dev: f64 },
    #[error("state is a fixed point: decay ratio undefined")]
    FixedPoint,
    #[error("all sampled states were fixed points: estimate undefined")]
    AllFixedPoints,
    #[error("decay constant must lie in (0,1), got {lambda}")]
    BadLambda { lambda: f64 },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Logarithm base for reported entropies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogBase {
    Natural,
    Two,
    /// Base `q`, the local dimension.
    Dim(usize),
}

impl LogBase {
    fn ln_of_base(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Two => std::f64::consts::LN_2,
            LogBase::Dim(q) => (q as f64).ln(),
        }
    }
}

/// A relative-entropy value; infinite exactly when a support violation was
/// detected.
#[derive(Debug, Clone, Copy)]
pub struct EntropyValue {
    pub value: f64,
    pub base: LogBase,
}

impl EntropyValue {
    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

/// Umegaki relative entropy `D(ρ‖σ) = tr(ρ(log ρ - log σ))` in the requested
/// base. Infinite when `supp(ρ) ⊄ supp(σ)` (leakage above
/// [`SUPPORT_LEAK_TOL`]).
pub fn relative_entropy(
    rho: &QState,
    sigma: &QState,
    base: LogBase,
) -> Result<EntropyValue, EntropyError> {
    if rho.layout() != sigma.layout() {
        return Err(EntropyError::LayoutMismatch);
    }
    let nats = relative_entropy_nats(rho.matrix(), sigma.matrix());
    Ok(EntropyValue { value: nats / base.ln_of_base(), base })
}

/// Natural-log relative entropy of density matrices (internal workhorse).
pub(crate) fn relative_entropy_nats(rho: &CMat, sigma: &CMat) -> f64 {
    let (svals, svecs) = la::eigh(sigma);
    // leakage of ρ outside supp(σ)
    let mut leak = 0.0;
    let mut cross = 0.0; // tr(ρ log σ)
    for (j, &s) in svals.iter().enumerate() {
        let col = svecs.column(j);
        let weight = quad_form(rho, &col); // ⟨v_j|ρ|v_j⟩
        if s <= PSD_TOL {
            leak += weight;
        } else {
            cross += weight * s.ln();
        }
    }
    if leak > SUPPORT_LEAK_TOL {
        return f64::INFINITY;
    }
    let rvals = la::eigvalsh(rho);
    let own: f64 = rvals.iter().filter(|&&p| p > PSD_TOL).map(|&p| p * p.ln()).sum();
    own - cross
}

fn quad_form(m: &CMat, v: &nalgebra::DVectorView<Complex64>) -> f64 {
    let n = m.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for c in 0..n {
        let vc = v[c];
        if vc.norm_sqr() == 0.0 {
            continue;
        }
        for r in 0..n {
            acc += v[r].conj() * m[(r, c)] * vc;
        }
    }
    acc.re
}

/// Trace distance `½‖ρ-σ‖₁` is not needed here; this is the full trace norm
/// of the (Hermitian) difference.
pub fn trace_norm_diff(rho: &QState, sigma: &QState) -> Result<f64, EntropyError> {
    if rho.layout() != sigma.layout() {
        return Err(EntropyError::LayoutMismatch);
    }
    Ok(la::trace_norm_hermitian(&(rho.matrix() - sigma.matrix())))
}

/// Residual of the exact chain-rule identity
/// `D(ρ‖ω) = D(ρ‖E(ρ)) + D(E(ρ)‖ω)` for a conditional expectation with
/// `E(ω) = ω`. Returns `|lhs - rhs|`; ≤ 1e-8 for valid inputs.
pub fn chain_rule_residual(
    rho: &QState,
    e: &CondExpectation,
    omega: &QState,
) -> Result<f64, EntropyError> {
    let e_omega = e.apply(omega)?;
    let dev = la::frob_norm(&(e_omega.matrix() - omega.matrix()));
    if dev > 1e-8 {
        return Err(EntropyError::NotFixedReference { dev });
    }
    let e_rho = e.apply(rho)?;
    let whole = relative_entropy_nats(rho.matrix(), omega.matrix());
    let near = relative_entropy_nats(rho.matrix(), e_rho.matrix());
    let far = relative_entropy_nats(e_rho.matrix(), omega.matrix());
    if whole.is_infinite() || near.is_infinite() || far.is_infinite() {
        // compare in the extended reals: both sides must agree on infinity
        return Ok(if whole.is_infinite() && (near + far).is_infinite() { 0.0 } else { f64::INFINITY });
    }
    Ok((whole - near - far).abs())
}

/// The per-state contraction ratio `D(Φρ‖ΦEρ)/D(ρ‖Eρ)`.
///
/// `None` when ρ is (numerically) a fixed point of `E`, where the ratio is
/// undefined. Data processing keeps the ratio ≤ 1 up to numerical noise.
pub fn decay_ratio(
    phi: &ChannelRep,
    e: &CondExpectation,
    rho: &QState,
) -> Result<Option<f64>, EntropyError> {
    let e_rho = e.apply(rho)?;
    let denom = relative_entropy_nats(rho.matrix(), e_rho.matrix());
    if denom <= 1e-10 {
        return Ok(None);
    }
    let phi_rho = phi.apply(rho)?;
    let phi_e_rho = phi.apply(&e_rho)?;
    let numer = relative_entropy_nats(phi_rho.matrix(), phi_e_rho.matrix());
    Ok(Some(numer / denom))
}

/// How sample states are drawn for decay estimation.
#[derive(Debug, Clone, Copy)]
pub enum StateSampler {
    /// Independent Haar-random pure state on every tensor factor.
    PureProduct,
    /// Globally Haar-random pure state.
    HaarPure,
    /// Rank-2 traceless perturbation of the fixed point `E(σ)` of a Haar
    /// state σ, scaled to stay positive. Probes the near-fixed-point ratio.
    NearFixedPoint { scale: f64 },
}

impl StateSampler {
    pub fn sample<R: Rng + ?Sized>(
        &self,
        layout: &SiteLayout,
        e: &CondExpectation,
        rng: &mut R,
    ) -> Result<QState, EntropyError> {
        let d = layout.total_dim();
        match self {
            StateSampler::PureProduct => {
                let dims = layout.factor_dims();
                let mut v = nalgebra::DVector::from_element(1, Complex64::new(1.0, 0.0));
                for &q in &dims {
                    let f = random_unit_vector(q, rng);
                    v = v.kronecker(&f);
                }
                Ok(QState::pure(&v, layout.clone())?)
            }
            StateSampler::HaarPure => {
                let v = random_unit_vector(d, rng);
                Ok(QState::pure(&v, layout.clone())?)
            }
            StateSampler::NearFixedPoint { scale } => {
                let v = random_unit_vector(d, rng);
                let seed_state = QState::pure(&v, layout.clone())?;
                let fixed = e.apply(&seed_state)?;
                let x = random_unit_vector(d, rng);
                let y = random_unit_vector(d, rng);
                // orthonormalize y against x
                let overlap = x.dotc(&y);
                let mut y_perp = y - &x * overlap;
                let norm = y_perp.norm();
                if norm < 1e-12 {
                    return Ok(fixed);
                }
                y_perp /= Complex64::new(norm, 0.0);
                let direction = &x * x.adjoint() - &y_perp * y_perp.adjoint();
                let min_eig = la::eigvalsh(fixed.matrix())[0];
                let t = scale * min_eig.max(0.0);
                let m = fixed.matrix() + direction * Complex64::new(t, 0.0);
                Ok(QState::with_tol(m, layout.clone(), 1e-9)?)
            }
        }
    }
}

fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> nalgebra::DVector<Complex64> {
    use rand_distr::{Distribution, StandardNormal};
    let normal = StandardNormal;
    let mut v = nalgebra::DVector::from_fn(d, |_, _| {
        let re: f64 = normal.sample(rng);
        let im: f64 = normal.sample(rng);
        Complex64::new(re, im)
    });
    let n = v.norm();
    v /= Complex64::new(n, 0.0);
    v
}

/// Sampled lower-confidence estimate of a decay constant.
///
/// `lambda_est = 1 - max ratio` over the sampled states only. This is a
/// heuristic probe of the decay constant, not a certificate: the true
/// constant is an infimum over all states (and all auxiliary extensions).
#[derive(Debug, Clone)]
pub struct DecayEstimate {
    pub lambda_est: f64,
    pub samples: usize,
    pub aux_dim: usize,
    pub worst_state: QState,
    pub ratios: Vec<Option<f64>>,
}

/// Estimate the decay constant of `Φ` toward `E` by sampling states on the
/// system extended by an `aux_dim`-dimensional auxiliary factor.
/// `aux_dim = 1` probes the plain constant; the conventional probe for the
/// identity-extended ("complete") constant sets `aux_dim` to the system
/// dimension. Whether any finite auxiliary dimension certifies the complete
/// constant is unknown, so estimates stay heuristic either way.
pub fn estimate_sdpi(
    phi: &ChannelRep,
    e: &CondExpectation,
    sampler: StateSampler,
    samples: usize,
    aux_dim: usize,
    seed: u64,
) -> Result<DecayEstimate, EntropyError> {
    assert!(samples >= 1 && aux_dim >= 1);
    let (phi_ext, e_ext, layout_ext);
    if aux_dim > 1 {
        phi_ext = phi.with_aux(aux_dim)?;
        e_ext = e.with_aux(aux_dim)?;
        layout_ext = phi_ext.layout().clone();
    } else {
        phi_ext = phi.clone();
        e_ext = e.clone();
        layout_ext = phi.layout().clone();
    }
    let mut ratios = Vec::with_capacity(samples);
    let mut worst: Option<(f64, QState)> = None;
    for i in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let rho = sampler.sample(&layout_ext, &e_ext, &mut rng)?;
        let ratio = decay_ratio(&phi_ext, &e_ext, &rho)?;
        if let Some(r) = ratio {
            if worst.as_ref().is_none_or(|(best, _)| r > *best) {
                worst = Some((r, rho));
            }
        }
        ratios.push(ratio);
    }
    let (max_ratio, worst_state) = worst.ok_or(EntropyError::AllFixedPoints)?;
    Ok(DecayEstimate {
        lambda_est: 1.0 - max_ratio,
        samples,
        aux_dim,
        worst_state,
        ratios,
    })
}

/// Which closed form produced a β value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaVariant {
    General,
    EqualEps,
    LinearBound,
    Floor,
}

/// The entropy-comparison factor β converting two-sided completely positive
/// closeness of projections into relative-entropy domination.
#[derive(Debug, Clone, Copy)]
pub struct BetaParams {
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    pub variant: BetaVariant,
}

/// Best available lower bound on β(ε, δ): the maximum over the general
/// closed form, the equal-argument closed form, the linear bound `1 - 12ε`,
/// and the floor `1/2` valid up to 1/10.
///
/// The true β is non-increasing in both arguments, so for ε ≠ δ the
/// equal-argument forms stay valid lower bounds when evaluated at the
/// dominating point `max(ε, δ)`; taking that maximum also keeps the returned
/// value monotone.
pub fn beta(eps: f64, delta: f64) -> BetaParams {
    assert!((0.0..1.0).contains(&eps) && (0.0..1.0).contains(&delta));
    let mut best = (beta_general(eps, delta), BetaVariant::General);
    let m = eps.max(delta);
    let eq = (1.0 - m) / (1.0 + m) - m / ((1.0 - m) * (2.0 * std::f64::consts::LN_2 - 1.0));
    if eq > best.0 {
        best = (eq, BetaVariant::EqualEps);
    }
    let lin = 1.0 - 12.0 * m;
    if lin > best.0 {
        best = (lin, BetaVariant::LinearBound);
    }
    if m <= 0.1 && 0.5 > best.0 {
        best = (0.5, BetaVariant::Floor);
    }
    BetaParams { eps, delta, beta: best.0, variant: best.1 }
}

fn beta_general(eps: f64, delta: f64) -> f64 {
    // middle term → 0 in both the δ→0 and ε→0 limits
    let middle = if delta == 0.0 || eps == 0.0 {
        0.0
    } else {
        let denom = (eps + delta) * ((1.0 + delta / eps).ln() - 1.0) + eps;
        2.0 * (1.0 + eps) * delta * delta / denom
    };
    (1.0 - middle - 4.0 * eps - eps * eps) / ((1.0 + eps) * (1.0 + delta))
}

/// Residual of the standard Pinsker inequality with natural-log entropy:
/// `‖ρ-σ‖₁² - 2·D(ρ‖σ)`. At most ~0 for all states; `-∞` when the entropy
/// is infinite.
pub fn pinsker_residual(rho: &QState, sigma: &QState) -> Result<f64, EntropyError> {
    let t1 = trace_norm_diff(rho, sigma)?;
    let d = relative_entropy_nats(rho.matrix(), sigma.matrix());
    Ok(t1 * t1 - 2.0 * d)
}

/// Binary entropy with natural logarithm.
pub fn binary_entropy_nat(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.ln() - (1.0 - x) * (1.0 - x).ln()
}

/// Continuity bound for relative entropy to a convex-subspace projection:
/// `ε·sup_d + (1+ε)·h(ε/(1+ε))`.
pub fn continuity_bound(eps: f64, sup_d: f64) -> f64 {
    assert!((0.0..=1.0).contains(&eps) && sup_d >= 0.0);
    eps * sup_d + (1.0 + eps) * binary_entropy_nat(eps / (1.0 + eps))
}

/// Number of channel applications after which λ-decay pushes the relative
/// entropy below `2ε²`, hence (via Pinsker) the trace distance below ε.
/// Uses the worst-case initial entropy `D_max = k·n·ln q`.
pub fn additive_depth(
    lambda: f64,
    n: usize,
    k: usize,
    q: usize,
    eps_target: f64,
) -> Result<usize, EntropyError> {
    if !(0.0..=1.0).contains(&lambda) || lambda <= 0.0 {
        return Err(EntropyError::BadLambda { lambda });
    }
    assert!((0.0..1.0).contains(&eps_target) && eps_target > 0.0);
    if lambda >= 1.0 {
        return Ok(1);
    }
    let d_max = (k * n) as f64 * (q as f64).ln();
    let need = (d_max / (2.0 * eps_target * eps_target)).ln();
    if need <= 0.0 {
        return Ok(1);
    }
    let per_step = -(1.0 - lambda).ln();
    Ok((need / per_step).ceil().max(1.0) as usize)
}
