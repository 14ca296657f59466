//! Property suite for the entropy machinery: the chain-rule identity across
//! twirl projections, the iterated chain inequalities, and data processing
//! as an upper bound on decay ratios.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qdecay_core::channels::{random_kraus_channel, validate_cond_expectation, CondExpectation};
use qdecay_core::entropy::{chain_rule_residual, decay_ratio, relative_entropy, LogBase};
use qdecay_core::moments::local_twirl;
use qdecay_core::tensors::{QState, SiteLayout};
use qdecay_core::CMat;

fn rand_state(layout: &SiteLayout, rng: &mut ChaCha8Rng) -> QState {
    let d = layout.total_dim();
    let g = CMat::from_fn(d, d, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let h = &g * g.adjoint();
    QState::new(h.clone() * Complex64::new(1.0 / h.trace().re, 0.0), layout.clone()).unwrap()
}

/// The twirl pool exercised by the chain-rule sweep: global and local twirls
/// over 2-3 qubits at one and two copies.
fn twirl_pool() -> Vec<(SiteLayout, CondExpectation)> {
    let mut pool = Vec::new();
    for (n, k) in [(2usize, 1usize), (3, 1), (2, 2), (3, 1)] {
        let layout = SiteLayout::qubits(n, k).unwrap();
        let all: Vec<usize> = (0..n).collect();
        for sites in [vec![0usize], all] {
            let ch = local_twirl(&layout, &sites).unwrap();
            pool.push((layout.clone(), validate_cond_expectation(&ch).unwrap()));
        }
    }
    // a 2-copy twirl over both qubits (dim 16 commutant projection)
    let layout22 = SiteLayout::qubits(2, 2).unwrap();
    let ch = local_twirl(&layout22, &[0, 1]).unwrap();
    pool.push((layout22, validate_cond_expectation(&ch).unwrap()));
    pool
}

#[test]
fn chain_rule_identity_two_hundred_triples() {
    let pool = twirl_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut max_resid: f64 = 0.0;
    for i in 0..200 {
        let (layout, e) = &pool[i % pool.len()];
        // any E-fixed full-rank reference works; take E of a random state
        let omega = e.apply(&rand_state(layout, &mut rng)).unwrap();
        let rho = rand_state(layout, &mut rng);
        let resid = chain_rule_residual(&rho, e, &omega).unwrap();
        max_resid = max_resid.max(resid);
    }
    assert!(max_resid <= 1e-8, "max chain-rule residual {max_resid}");
}

#[test]
fn iterated_chain_inequality_with_channel() {
    // D(ρ‖Ψρ) + D(ρ‖E'ρ) ≥ D(ρ‖E'Ψρ)
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let layout = SiteLayout::qubits(2, 1).unwrap();
    let e = validate_cond_expectation(&local_twirl(&layout, &[0]).unwrap()).unwrap();
    for _ in 0..50 {
        let psi = random_kraus_channel(layout.clone(), 3, &mut rng);
        let rho = rand_state(&layout, &mut rng);
        let psi_rho = psi.apply(&rho).unwrap();
        let e_psi_rho = e.apply(&psi_rho).unwrap();
        let e_rho = e.apply(&rho).unwrap();
        let lhs = relative_entropy(&rho, &psi_rho, LogBase::Natural).unwrap().value
            + relative_entropy(&rho, &e_rho, LogBase::Natural).unwrap().value;
        let rhs = relative_entropy(&rho, &e_psi_rho, LogBase::Natural).unwrap().value;
        if lhs.is_finite() && rhs.is_finite() {
            assert!(lhs >= rhs - 1e-8, "lhs {lhs} < rhs {rhs}");
        }
    }
}

#[test]
fn iterated_chain_inequality_over_twirl_chains() {
    // Σ_i D(ρ‖E_i ρ) ≥ D(ρ‖E_{j1}∘…∘E_{jm} ρ) for chains of local twirls
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for k in [1usize, 2] {
        let layout = SiteLayout::qubits(3, k).unwrap();
        let twirls: Vec<_> = [vec![0usize, 1], vec![1, 2], vec![0]]
            .into_iter()
            .map(|sites| {
                let ch = local_twirl(&layout, &sites).unwrap();
                validate_cond_expectation(&ch).unwrap()
            })
            .collect();
        for chain_len in [2usize, 3] {
            for _ in 0..15 {
                let rho = rand_state(&layout, &mut rng);
                let mut sum = 0.0;
                let mut composed = rho.clone();
                for e in twirls.iter().take(chain_len) {
                    let e_rho = e.apply(&rho).unwrap();
                    sum += relative_entropy(&rho, &e_rho, LogBase::Natural).unwrap().value;
                    composed = e.apply(&composed).unwrap();
                }
                let rhs = relative_entropy(&rho, &composed, LogBase::Natural).unwrap().value;
                assert!(sum >= rhs - 1e-8, "sum {sum} < composed {rhs} at k={k}");
            }
        }
    }
}

#[test]
fn decay_ratios_never_exceed_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let layout = SiteLayout::qubits(2, 1).unwrap();
    let e = validate_cond_expectation(&local_twirl(&layout, &[0, 1]).unwrap()).unwrap();
    for _ in 0..100 {
        let phi = random_kraus_channel(layout.clone(), 2, &mut rng);
        // mix with the projector so the channel commutes with E on average;
        // data processing bounds the ratio regardless
        let rho = rand_state(&layout, &mut rng);
        if let Some(r) = decay_ratio(&phi, &e, &rho).unwrap() {
            assert!(r <= 1.0 + 1e-8, "ratio {r}");
        }
    }
}
