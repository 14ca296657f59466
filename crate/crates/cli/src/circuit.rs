//! Assemble applyable channels from architecture layers and run per-layer
//! relative-entropy trajectories.

use anyhow::{bail, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qdecay_core::channels::{validate_cond_expectation, ChannelRep, CondExpectation};
use qdecay_core::entropy::{relative_entropy, LogBase, StateSampler};
use qdecay_core::arch::{ArchitectureSpec, Layer};
use qdecay_core::moments::local_twirl;
use qdecay_core::tensors::SiteLayout;
use qdecay_core::STATE_DIM_CAP;

/// The k-copy layout of an architecture, checked against the state cap.
pub fn simulation_layout(spec: &ArchitectureSpec, k: usize) -> Result<SiteLayout> {
    let layout = SiteLayout::new(spec.layout().local_dims().to_vec(), k)?;
    match layout.checked_total_dim() {
        Ok(d) if d <= STATE_DIM_CAP => Ok(layout),
        Ok(d) => bail!("state dimension {d} exceeds the cap {STATE_DIM_CAP}"),
        Err(_) => bail!("state dimension overflows for n={} sites, k={k}", spec.sites()),
    }
}

/// One architecture layer as a channel on the k-copy layout.
pub fn layer_channel(layer: &Layer, layout: &SiteLayout) -> Result<ChannelRep> {
    match layer {
        Layer::Parallel { clusters } => {
            let mut stages = Vec::with_capacity(clusters.len());
            for cluster in clusters {
                let block: usize = cluster.iter().map(|&s| layout.local_dim(s)).product();
                let twirl = ChannelRep::haar_twirl(block, layout.copies())?;
                stages.push((cluster.clone(), twirl));
            }
            Ok(ChannelRep::local(stages, layout.clone())?)
        }
        Layer::Unstructured { edges } => {
            let parts = edges
                .iter()
                .map(|e| Ok((e.p, local_twirl(layout, &[e.i, e.j])?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(ChannelRep::mixture(parts, layout.clone())?)
        }
    }
}

/// All layers of a spec composed in order into a single pass.
pub fn pass_channel(spec: &ArchitectureSpec, layout: &SiteLayout) -> Result<ChannelRep> {
    let mut stages = Vec::new();
    for layer in spec.layers() {
        match layer_channel(layer, layout)? {
            ChannelRep::Local { stages: s, .. } => stages.extend(s),
            other => {
                // mixture layers cannot be flattened; compose via full-span stages
                let all: Vec<usize> = (0..layout.sites()).collect();
                stages.push((all, other));
            }
        }
    }
    Ok(ChannelRep::local(stages, layout.clone())?)
}

/// A spurious-layer realization (ordered list of activated pairs) as a
/// channel; overlapping pairs compose in ascending order.
pub fn spurious_layer_channel(pairs: &[(usize, usize)], layout: &SiteLayout) -> Result<ChannelRep> {
    let mut stages = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let block = layout.local_dim(i) * layout.local_dim(j);
        stages.push((vec![i, j], ChannelRep::haar_twirl(block, layout.copies())?));
    }
    Ok(ChannelRep::local(stages, layout.clone())?)
}

/// The projector onto the global k-design fixed points, embedded on the
/// layout.
pub fn global_twirl(layout: &SiteLayout) -> Result<CondExpectation> {
    let all: Vec<usize> = (0..layout.sites()).collect();
    let ch = local_twirl(layout, &all)?;
    Ok(validate_cond_expectation(&ch)?)
}

/// One trajectory row: entropy after `layer` applications and the ratio to
/// the previous layer (absent when the previous entropy already vanished).
#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub trial: usize,
    pub layer: usize,
    pub entropy: f64,
    pub ratio: Option<f64>,
}

/// Run `samples` trajectories of `layers` channel applications each,
/// recording `D(ρ_t ‖ E(ρ_t))` in base `q`. `channel_for(trial, layer)`
/// supplies the channel applied at each step, so per-trial circuit
/// realizations stay deterministic in the seed.
pub fn run_trajectories(
    layout: &SiteLayout,
    e: &CondExpectation,
    layers: usize,
    samples: usize,
    seed: u64,
    mut channel_for: impl FnMut(usize, usize) -> Result<ChannelRep>,
) -> Result<Vec<TrajectoryRow>> {
    let base = LogBase::Dim(layout.local_dim(0));
    let mut rows = Vec::with_capacity(samples * layers);
    for trial in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let mut rho = StateSampler::HaarPure.sample(layout, e, &mut rng)?;
        let mut prev = relative_entropy(&rho, &e.apply(&rho)?, base)?.value;
        for layer in 1..=layers {
            let ch = channel_for(trial, layer)?;
            rho = ch.apply(&rho)?;
            let entropy = relative_entropy(&rho, &e.apply(&rho)?, base)?.value;
            let ratio = if prev > 1e-12 { Some(entropy / prev) } else { None };
            rows.push(TrajectoryRow { trial, layer, entropy, ratio });
            prev = entropy;
        }
    }
    Ok(rows)
}

/// Derived per-trial stream for circuit-realization randomness, independent
/// of the state stream.
pub fn realization_seed(seed: u64, trial: usize) -> u64 {
    seed ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[cfg(test)]
mod tests {
    use super::*;
    use qdecay_core::arch::brickwork;

    #[test]
    fn brickwork_pass_collapses_k1_in_one_layer() {
        let spec = brickwork(4, 2).unwrap();
        let layout = simulation_layout(&spec, 1).unwrap();
        let e = global_twirl(&layout).unwrap();
        let pass = pass_channel(&spec, &layout).unwrap();
        let rows =
            run_trajectories(&layout, &e, 3, 2, 7, |_, _| Ok(pass.clone())).unwrap();
        assert_eq!(rows.len(), 6);
        for row in &rows {
            assert!(row.entropy <= 1e-9, "entropy {} at layer {}", row.entropy, row.layer);
        }
    }

    #[test]
    fn state_cap_enforced() {
        let spec = brickwork(12, 2).unwrap();
        assert!(simulation_layout(&spec, 1).is_err());
    }

    #[test]
    fn brickwork_pass_contracts_basis_state() {
        // one pass sends |0000⟩ to the fixed point: ratio 0, strictly below 1
        let spec = brickwork(4, 2).unwrap();
        let layout = simulation_layout(&spec, 1).unwrap();
        let e = global_twirl(&layout).unwrap();
        let pass = pass_channel(&spec, &layout).unwrap();
        let rho = qdecay_core::tensors::QState::basis_state(layout, 0).unwrap();
        let ratio = qdecay_core::entropy::decay_ratio(&pass, &e, &rho).unwrap().unwrap();
        assert!(ratio < 1.0);
        assert!(ratio.abs() < 1e-9);
    }
}
