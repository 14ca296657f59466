//! Verification suites behind `qdecay verify`: exact-identity sweeps,
//! projector validation, graph audits, and the gluing desk check.

use anyhow::Result;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qdecay_core::arch::{
    brickwork, chunk_partitions, cluster_graph, hamiltonian_path, lattice, validate_path,
    PathSearch,
};
use qdecay_core::bounds::glue_error;
use qdecay_core::channels::{
    random_kraus_channel, relative_error_capped, validate_cond_expectation,
    RELATIVE_ERROR_BISECTION_STEPS,
};
use qdecay_core::entropy::{chain_rule_residual, pinsker_residual, relative_entropy, LogBase};
use qdecay_core::moments::{haar_twirl_projector, local_twirl, mc_twirl, permutations, PermutationOp};
use qdecay_core::tensors::{QState, SiteLayout};
use qdecay_core::walks::{color_tree_edges, segment_walk, traversing_walk, Tree, WeightedGraph};
use qdecay_core::CMat;

/// Outcome of one suite: a pass flag and human-readable detail lines.
#[derive(Debug)]
pub struct SuiteReport {
    pub name: String,
    pub pass: bool,
    pub details: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        SuiteReport { name: name.to_string(), pass: true, details: Vec::new() }
    }

    fn check(&mut self, ok: bool, detail: String) {
        if !ok {
            self.pass = false;
        }
        self.details.push(format!("{} {detail}", if ok { "ok " } else { "FAIL" }));
    }
}

fn rand_state(layout: &SiteLayout, rng: &mut ChaCha8Rng) -> QState {
    let d = layout.total_dim();
    let g = CMat::from_fn(d, d, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let h = &g * g.adjoint();
    QState::new(h.clone() * Complex64::new(1.0 / h.trace().re, 0.0), layout.clone()).unwrap()
}

/// Chain rule, data processing, and Pinsker over random instances.
pub fn entropy_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("entropy");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // chain rule across twirl projections, n <= 3 qubits, k in {1,2}
    let mut pool = Vec::new();
    for (n, k, sites) in [
        (2usize, 1usize, vec![0usize]),
        (3, 1, vec![0, 1]),
        (2, 2, vec![0, 1]),
        (3, 1, vec![0, 1, 2]),
    ] {
        let layout = SiteLayout::qubits(n, k)?;
        let e = validate_cond_expectation(&local_twirl(&layout, &sites)?)?;
        pool.push((layout, e));
    }
    let mut max_resid: f64 = 0.0;
    for i in 0..trials {
        let (layout, e) = &pool[i % pool.len()];
        let omega = e.apply(&rand_state(layout, &mut rng))?;
        let rho = rand_state(layout, &mut rng);
        max_resid = max_resid.max(chain_rule_residual(&rho, e, &omega)?);
    }
    report.check(max_resid <= 1e-8, format!("chain-rule max residual {max_resid:.3e} <= 1e-8 over {trials} triples"));

    // data processing
    let layout = SiteLayout::qubits(2, 1)?;
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    for _ in 0..trials {
        let phi = random_kraus_channel(layout.clone(), 3, &mut rng);
        let rho = rand_state(&layout, &mut rng);
        let sigma = rand_state(&layout, &mut rng);
        let before = relative_entropy(&rho, &sigma, LogBase::Natural)?.value;
        let after = relative_entropy(&phi.apply(&rho)?, &phi.apply(&sigma)?, LogBase::Natural)?.value;
        worst_gap = worst_gap.max(after - before);
    }
    report.check(worst_gap <= 1e-8, format!("data-processing worst violation {worst_gap:.3e} <= 1e-8 over {trials} channels"));

    // Pinsker
    let mut worst_pinsker: f64 = f64::NEG_INFINITY;
    for _ in 0..trials {
        let rho = rand_state(&layout, &mut rng);
        let sigma = rand_state(&layout, &mut rng);
        worst_pinsker = worst_pinsker.max(pinsker_residual(&rho, &sigma)?);
    }
    report.check(worst_pinsker <= 1e-8, format!("pinsker worst residual {worst_pinsker:.3e} <= 1e-8 over {trials} pairs"));

    Ok(report)
}

fn random_bounded_tree(n: usize, max_degree: usize, rng: &mut ChaCha8Rng) -> Tree {
    let mut degree = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    for v in 1..n {
        let candidates: Vec<usize> = (0..v).filter(|&u| degree[u] < max_degree).collect();
        let parent = if candidates.is_empty() {
            rng.random_range(0..v)
        } else {
            candidates[rng.random_range(0..candidates.len())]
        };
        degree[parent] += 1;
        degree[v] += 1;
        edges.push((parent, v, rng.random::<f64>()));
    }
    Tree::from_graph(WeightedGraph::new(n, edges).unwrap()).unwrap()
}

/// Walk, segmentation, and edge-coloring audits over random trees.
pub fn walks_suite(trees: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("walks");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walk_ok = true;
    let mut seg_ok = true;
    let mut color_ok = true;
    for _ in 0..trees {
        let n = rng.random_range(2..=50);
        let cap = rng.random_range(2..=6);
        let tree = random_bounded_tree(n, cap, &mut rng);
        let walk = traversing_walk(&tree);
        walk_ok &= walk.validate();
        let target = rng.random_range(1..=walk.len());
        seg_ok &= segment_walk(&walk, target)?.validate();
        let edges: Vec<(usize, usize)> =
            tree.graph().edges().iter().map(|&(i, j, _)| (i, j)).collect();
        let layers = color_tree_edges(n, &edges)?;
        color_ok &= layers.len() <= tree.max_degree().max(1);
        for layer in &layers {
            let mut used = vec![false; n];
            for &(i, j) in layer {
                color_ok &= !used[i] && !used[j];
                used[i] = true;
                used[j] = true;
            }
        }
    }
    report.check(walk_ok, format!("traversing-walk invariants over {trees} trees"));
    report.check(seg_ok, format!("segment connectivity audits over {trees} trees"));
    report.check(color_ok, format!("proper edge colorings within max degree over {trees} trees"));
    Ok(report)
}

/// Projector validation plus the Monte-Carlo oracle at a configurable
/// sample count.
pub fn projector_suite(samples: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("projector");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (d, k) in [(2usize, 1usize), (3, 1), (2, 2), (3, 2), (2, 3)] {
        let e = haar_twirl_projector(d, k)?;
        report.check(e.is_valid(), format!("twirl (d={d}, k={k}) idempotent + self-adjoint"));
        let mut fixes = true;
        for sigma in permutations(k) {
            let p = PermutationOp::new(sigma, d).matrix();
            let image = e.apply_op(&p)?;
            fixes &= (&image - &p).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() <= 1e-10;
        }
        report.check(fixes, format!("twirl (d={d}, k={k}) fixes the commutant basis"));
        let dim = d.pow(k as u32);
        let x = CMat::from_fn(dim, dim, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let exact = e.apply_op(&x)?;
        let mc = mc_twirl(&x, d, k, samples, seed ^ (d * 10 + k) as u64);
        let err = (&mc.estimate - &exact).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        report.check(
            err <= 5.0 * mc.frob_std_error,
            format!("twirl (d={d}, k={k}) within 5 standard errors of the {samples}-sample oracle"),
        );
    }
    Ok(report)
}

/// Generator families produce connected bipartite overlap graphs with valid
/// Hamiltonian paths; chunk observations verified on a reference instance.
pub fn arch_suite() -> Result<SuiteReport> {
    let mut report = SuiteReport::new("arch");
    let mut paths_ok = true;
    for n in (3..=100).step_by(7) {
        let spec = brickwork(n, 2)?;
        let g = cluster_graph(&spec)?;
        paths_ok &= g.is_connected() && g.is_bipartite_by_layer();
        paths_ok &= matches!(hamiltonian_path(&spec, &g, 1_000_000), PathSearch::Found(ref p) if validate_path(&g, p));
    }
    report.check(paths_ok, "brickwork family: connected, bipartite, Hamiltonian".into());
    let mut lat_ok = true;
    for dims in 1..=3usize {
        for side in [4usize, 6, 8] {
            if side.pow(dims as u32) > 1000 {
                continue;
            }
            let spec = lattice(dims, side, 2)?;
            let g = cluster_graph(&spec)?;
            lat_ok &= g.is_connected() && g.is_bipartite_by_layer();
            lat_ok &= matches!(hamiltonian_path(&spec, &g, 10_000_000), PathSearch::Found(ref p) if validate_path(&g, p));
        }
    }
    report.check(lat_ok, "lattice family: connected, bipartite, Hamiltonian".into());

    let spec = brickwork(20, 2)?;
    let g = cluster_graph(&spec)?;
    let path = match hamiltonian_path(&spec, &g, 10_000) {
        PathSearch::Found(p) => p,
        other => anyhow::bail!("no path on the reference brickwork: {other:?}"),
    };
    let plan = chunk_partitions(&g, &path, 4)?;
    report.check(
        plan.observations.obs1_ok && plan.observations.obs2_ok && plan.observations.obs3_ok,
        format!(
            "chunk observations on brickwork(20), r=4 (min overlap {}, max span {})",
            plan.observations.obs1_min_overlap_sites, plan.observations.obs2_max_span
        ),
    );
    Ok(report)
}

/// The gluing desk check: twirls on two overlapping blocks compose to
/// within the closed-form relative error of the global twirl.
pub fn glue_suite(n: usize, k: usize, choi_cap: usize) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("glue");
    anyhow::ensure!(n >= 3, "need at least 3 sites");
    let layout = SiteLayout::qubits(n, k)?;
    let left: Vec<usize> = (0..n - 1).collect();
    let right: Vec<usize> = (1..n).collect();
    let bridge_dim = 2f64.powi(n as i32 - 2);
    let twirl_left = local_twirl(&layout, &left)?;
    let twirl_right = local_twirl(&layout, &right)?;
    let composed = twirl_left.then(&twirl_right)?;
    let global = local_twirl(&layout, &(0..n).collect::<Vec<_>>())?;
    let res = relative_error_capped(&composed, &global, 1e-9, RELATIVE_ERROR_BISECTION_STEPS, choi_cap)?;
    let bound = glue_error(0.0, 0.0, k, bridge_dim).primary();
    report.check(
        res.valid && res.eps_lower <= bound,
        format!("measured relative error {:.3e} <= glue bound {bound}", res.eps_lower),
    );
    Ok(report)
}
