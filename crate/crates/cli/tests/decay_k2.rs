//! End-to-end decay at k = 2: the two-copy brickwork channel contracts
//! relative entropy toward the nontrivial commutant projection, exercising
//! twirl embedding, entropy, and the return-time guarantee together.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qdecay_cli::circuit::{global_twirl, pass_channel, simulation_layout};
use qdecay_core::arch::brickwork;
use qdecay_core::channels::{cb_return_time, sdpi_from_return_time, validate_cond_expectation, ChannelRep};
use qdecay_core::entropy::{estimate_sdpi, relative_entropy, LogBase, StateSampler};

#[test]
fn two_copy_brickwork_contracts_toward_the_design_projection() {
    let spec = brickwork(3, 2).unwrap();
    let layout = simulation_layout(&spec, 2).unwrap();
    assert_eq!(layout.total_dim(), 64);
    let e = global_twirl(&layout).unwrap();
    assert!(e.is_valid());
    let pass = pass_channel(&spec, &layout).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for sample in 0..3 {
        let mut rho = StateSampler::HaarPure.sample(&layout, &e, &mut rng).unwrap();
        let d0 = relative_entropy(&rho, &e.apply(&rho).unwrap(), LogBase::Natural).unwrap().value;
        assert!(d0 > 0.1, "initial entropy {d0} too small to be informative");
        let mut prev = d0;
        let mut d2 = f64::NAN;
        for layer in 1..=30 {
            rho = pass.apply(&rho).unwrap();
            let d_t =
                relative_entropy(&rho, &e.apply(&rho).unwrap(), LogBase::Natural).unwrap().value;
            assert!(d_t <= prev + 1e-8, "sample {sample} layer {layer} rose");
            if layer == 2 {
                d2 = d_t;
            }
            prev = d_t;
        }
        assert!(d2 / d0 < 1.0, "no strict contraction after two layers");
        assert!(prev <= 1e-3, "entropy {prev:.3e} still large after 30 layers");
        println!("sample {sample}: D0 {d0:.4}, D2/D0 {:.4}, D30 {prev:.3e}", d2 / d0);
    }
}

#[test]
fn return_time_guarantee_is_respected_by_sampled_ratios() {
    // the certified constant 1/(2 t_cb) lower-bounds the true decay
    // constant, so no sampled ratio may undershoot it
    let layout = qdecay_core::tensors::SiteLayout::qubits(1, 1).unwrap();
    let phi = ChannelRep::depolarizing(layout.clone(), 0.5).unwrap();
    let e = validate_cond_expectation(&ChannelRep::full_depolarizer(layout).unwrap()).unwrap();
    let t_cb = cb_return_time(&phi, &e, 20).unwrap().unwrap();
    let certified = sdpi_from_return_time(t_cb);
    for aux in [1usize, 2] {
        for sampler in [StateSampler::HaarPure, StateSampler::NearFixedPoint { scale: 0.1 }] {
            let est = estimate_sdpi(&phi, &e, sampler, 40, aux, 5).unwrap();
            assert!(
                est.lambda_est >= certified - 1e-9,
                "sampled estimate {} beat the certified bound {certified} (aux {aux})",
                est.lambda_est
            );
        }
    }
}
