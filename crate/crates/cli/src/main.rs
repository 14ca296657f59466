//! `qdecay`: bound calculators, entropy-decay simulations, verification
//! suites, and architecture-file tooling.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage/validation error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qdecay_cli::archfile;
use qdecay_cli::circuit::{
    global_twirl, pass_channel, realization_seed, simulation_layout, spurious_layer_channel,
};
use qdecay_cli::report;
use qdecay_cli::suites;
use qdecay_core::arch::{brickwork, lattice, spurious_circuit, unstructured_layer, ArchitectureSpec};
use qdecay_core::bounds::{self, BoundReport, CqkMode, ExpLog, Variant};

#[derive(Parser)]
#[command(name = "qdecay", version, about = "Random-circuit entropy decay toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a closed-form bound, optionally over a parameter sweep
    Bound(BoundArgs),
    /// Apply circuit layers to sampled states and record entropy trajectories
    Simulate(SimulateArgs),
    /// Run a verification suite
    Verify(VerifyArgs),
    /// Generate or validate architecture files
    Arch(ArchArgs),
}

#[derive(Args)]
struct BoundArgs {
    #[command(subcommand)]
    formula: Formula,
    /// Output path (stdout when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Sweep a parameter over comma-separated values, e.g. --sweep n=128,256,512
    #[arg(long = "sweep", global = true)]
    sweeps: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    AsStated,
    AsDerived,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::AsStated => Variant::AsStated,
            VariantArg::AsDerived => Variant::AsDerived,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExpLogArg {
    Natural,
    Two,
    BaseQ,
}

impl From<ExpLogArg> for ExpLog {
    fn from(v: ExpLogArg) -> ExpLog {
        match v {
            ExpLogArg::Natural => ExpLog::Natural,
            ExpLogArg::Two => ExpLog::Two,
            ExpLogArg::BaseQ => ExpLog::BaseQ,
        }
    }
}

#[derive(Subcommand)]
#[command(rename_all = "kebab-case")]
enum Formula {
    /// Gluing error across a bridge: (1+eps1)(1+eps2)(1+5k²/|B|) - 1
    Glue {
        #[arg(long)]
        eps1: f64,
        #[arg(long)]
        eps2: f64,
        #[arg(long)]
        k: usize,
        #[arg(long = "dimB")]
        dim_b: f64,
    },
    /// Accumulated gluing error along a chain of overlaps
    GlueChain {
        /// Comma-separated overlap dimensions
        #[arg(long, value_delimiter = ',')]
        dims: Vec<f64>,
        #[arg(long)]
        k: usize,
    },
    /// Chunk size sufficient for a target gluing error
    ParallelR {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value = "as-stated")]
        variant: VariantArg,
    },
    /// Two-sided error of the chunked twirl pair at chunk size r
    ParallelDelta {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, value_enum, default_value = "as-derived")]
        variant: VariantArg,
    },
    /// Per-double-layer decay constant of a 2-layer parallel architecture
    ParallelLambda {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long = "Ck")]
        c_k: f64,
    },
    /// Cluster constant C(q,k): general bound or override
    CQk {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        k: usize,
        #[arg(long = "override")]
        override_value: Option<f64>,
        #[arg(long, value_enum, default_value = "natural")]
        exp_log: ExpLogArg,
    },
    /// Relative-error design depth of an ell-layer parallel architecture
    ParallelDepth {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        ell: usize,
        #[arg(long = "Cqk")]
        c_qk: f64,
    },
    /// Decay constant of a tree-supported unstructured layer
    TreeLambda {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        ell: usize,
        #[arg(long = "epsPrime")]
        eps_prime: f64,
        #[arg(long = "minPLambda")]
        min_p_lambda: f64,
        #[arg(long = "Cqk")]
        c_qk: f64,
    },
    /// Decay constant for random gate placement on a connected graph
    RandomGraphLambda {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        ell: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long = "minPLambda")]
        min_p_lambda: f64,
        #[arg(long = "Cqk")]
        c_qk: f64,
        #[arg(long, value_enum, default_value = "as-derived")]
        variant: VariantArg,
    },
    /// Composed decay constant (min lambda)·beta(eps, delta)
    ComposeSdpi {
        /// Comma-separated decay constants
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Brickwork-on-qubits decay constant with the polylog cluster constant
    BrickworkLambda {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "1.0")]
        prefactor: f64,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[command(subcommand)]
    arch: SimArch,
}

#[derive(Args, Clone)]
struct SimCommon {
    /// Copies (twirl order)
    #[arg(long, default_value = "1")]
    k: usize,
    /// Number of circuit layers to apply
    #[arg(long, default_value = "20")]
    layers: usize,
    /// Number of sampled initial states
    #[arg(long, default_value = "10")]
    samples: usize,
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Output CSV path (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
#[command(rename_all = "kebab-case")]
enum SimArch {
    Brickwork {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "2")]
        q: usize,
        #[command(flatten)]
        common: SimCommon,
    },
    Lattice {
        #[arg(long)]
        dims: usize,
        #[arg(long)]
        side: usize,
        #[arg(long, default_value = "2")]
        q: usize,
        #[command(flatten)]
        common: SimCommon,
    },
    Spurious {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "2")]
        q: usize,
        /// Per-pair activation probability
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        common: SimCommon,
    },
    File {
        path: PathBuf,
        #[command(flatten)]
        common: SimCommon,
    },
}

#[derive(Args)]
struct VerifyArgs {
    #[command(subcommand)]
    suite: Suite,
}

#[derive(Subcommand)]
#[command(rename_all = "kebab-case")]
enum Suite {
    /// Chain rule, data processing, Pinsker
    Entropy {
        #[arg(long, default_value = "200")]
        trials: usize,
        #[arg(long, default_value = "1")]
        seed: u64,
    },
    /// Traversing walks, segmentation, edge coloring
    Walks {
        #[arg(long, default_value = "500")]
        trees: usize,
        #[arg(long, default_value = "1")]
        seed: u64,
    },
    /// Twirl projector validation against the Monte-Carlo oracle
    Projector {
        #[arg(long, default_value = "100000")]
        samples: usize,
        #[arg(long, default_value = "1")]
        seed: u64,
    },
    /// Generator families, Hamiltonian paths, chunk observations
    Arch,
    /// Gluing desk check on n qubits
    Glue {
        #[arg(long, default_value = "5")]
        n: usize,
        #[arg(long, default_value = "1")]
        k: usize,
    },
    /// Every suite with default parameters
    All {
        #[arg(long, default_value = "1")]
        seed: u64,
    },
}

#[derive(Args)]
struct ArchArgs {
    #[command(subcommand)]
    action: ArchAction,
}

#[derive(Subcommand)]
#[command(rename_all = "kebab-case")]
enum ArchAction {
    /// Emit an architecture file
    Generate {
        #[command(subcommand)]
        generator: GenArch,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Validate an architecture file, reporting violations with paths
    Validate { path: PathBuf },
}

#[derive(Subcommand)]
#[command(rename_all = "kebab-case")]
enum GenArch {
    Brickwork {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "2")]
        q: usize,
    },
    Lattice {
        #[arg(long)]
        dims: usize,
        #[arg(long)]
        side: usize,
        #[arg(long, default_value = "2")]
        q: usize,
    },
    /// Complete interaction graph with uniform weights
    Complete {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "2")]
        q: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Bound(args) => cmd_bound(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Arch(args) => cmd_arch(args),
    }
}

type Overrides = BTreeMap<String, f64>;

fn get(map: &Overrides, name: &str, default: f64) -> f64 {
    map.get(name).copied().unwrap_or(default)
}

fn get_usize(map: &Overrides, name: &str, default: usize) -> Result<usize> {
    let v = get(map, name, default as f64);
    if v < 0.0 || v.fract().abs() > 1e-9 {
        bail!("parameter {name} must be a nonnegative integer, got {v}");
    }
    Ok(v as usize)
}

/// Evaluate one formula under parameter overrides, pre-checking the hard
/// domain constraints so failures surface as usage errors.
fn eval_formula(f: &Formula, over: &Overrides) -> Result<BoundReport> {
    Ok(match f {
        Formula::Glue { eps1, eps2, k, dim_b } => {
            let dim_b = get(over, "dimB", *dim_b);
            if dim_b <= 0.0 {
                bail!("precondition failed: dimB must be positive");
            }
            bounds::glue_error(get(over, "eps1", *eps1), get(over, "eps2", *eps2), get_usize(over, "k", *k)?, dim_b)
        }
        Formula::GlueChain { dims, k } => {
            if dims.iter().any(|&d| d <= 0.0) {
                bail!("precondition failed: all overlap dims must be positive");
            }
            bounds::glue_chain(dims, get_usize(over, "k", *k)?)
        }
        Formula::ParallelR { q, k, n, eps, variant } => bounds::parallel_r(
            get_usize(over, "q", *q)?,
            get_usize(over, "k", *k)?,
            get_usize(over, "n", *n)?,
            get(over, "eps", *eps),
            (*variant).into(),
        ),
        Formula::ParallelDelta { q, k, n, r, variant } => bounds::parallel_delta(
            get_usize(over, "q", *q)?,
            get_usize(over, "k", *k)?,
            get_usize(over, "n", *n)?,
            get_usize(over, "r", *r)?,
            (*variant).into(),
        ),
        Formula::ParallelLambda { q, k, n, c_k } => bounds::parallel_lambda(
            get_usize(over, "q", *q)?,
            get_usize(over, "k", *k)?,
            get_usize(over, "n", *n)?,
            get(over, "Ck", *c_k),
        ),
        Formula::CQk { q, k, override_value, exp_log } => {
            let mode = match override_value {
                Some(v) => CqkMode::UserOverride(get(over, "override", *v)),
                None => CqkMode::GeneralBound { exp_log: (*exp_log).into() },
            };
            bounds::c_qk(get_usize(over, "q", *q)?, get_usize(over, "k", *k)?, mode)
        }
        Formula::ParallelDepth { q, k, n, eps, ell, c_qk } => bounds::parallel_depth(
            get_usize(over, "q", *q)?,
            get_usize(over, "k", *k)?,
            get_usize(over, "n", *n)?,
            get(over, "eps", *eps),
            get_usize(over, "ell", *ell)?,
            get(over, "Cqk", *c_qk),
        ),
        Formula::TreeLambda { q, k, n, ell, eps_prime, min_p_lambda, c_qk } => bounds::tree_lambda(
            get_usize(over, "q", *q)?,
            get_usize(over, "k", *k)?,
            get_usize(over, "n", *n)?,
            get_usize(over, "ell", *ell)?,
            get(over, "epsPrime", *eps_prime),
            get(over, "minPLambda", *min_p_lambda),
            get(over, "Cqk", *c_qk),
        ),
        Formula::RandomGraphLambda { q, k, n, ell, eps, min_p_lambda, c_qk, variant } => {
            bounds::random_graph_lambda(
                get_usize(over, "q", *q)?,
                get_usize(over, "k", *k)?,
                get_usize(over, "n", *n)?,
                get_usize(over, "ell", *ell)?,
                get(over, "eps", *eps),
                get(over, "minPLambda", *min_p_lambda),
                get(over, "Cqk", *c_qk),
                (*variant).into(),
            )
        }
        Formula::ComposeSdpi { lambdas, eps, delta } => {
            let eps = get(over, "eps", *eps);
            let delta = get(over, "delta", *delta);
            if lambdas.is_empty() {
                bail!("precondition failed: at least one lambda required");
            }
            if !(0.0..1.0).contains(&eps) || !(0.0..1.0).contains(&delta) {
                bail!("precondition failed: eps and delta must lie in [0,1)");
            }
            bounds::compose_sdpi(lambdas, eps, delta)
        }
        Formula::BrickworkLambda { n, k, prefactor } => bounds::brickwork_lambda(
            get_usize(over, "n", *n)?,
            get_usize(over, "k", *k)?,
            get(over, "prefactor", *prefactor),
        ),
    })
}

fn parse_sweeps(raw: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
    raw.iter()
        .map(|s| {
            let (name, values) = s
                .split_once('=')
                .with_context(|| format!("sweep '{s}' must look like name=v1,v2,..."))?;
            let values = values
                .split(',')
                .map(|v| v.parse::<f64>().with_context(|| format!("bad sweep value '{v}'")))
                .collect::<Result<Vec<f64>>>()?;
            if values.is_empty() {
                bail!("sweep '{s}' has no values");
            }
            Ok((name.to_string(), values))
        })
        .collect()
}

fn cmd_bound(args: BoundArgs) -> Result<ExitCode> {
    let sweeps = parse_sweeps(&args.sweeps)?;
    let mut grids: Vec<Overrides> = vec![Overrides::new()];
    for (name, values) in &sweeps {
        let mut next = Vec::with_capacity(grids.len() * values.len());
        for base in &grids {
            for &v in values {
                let mut m = base.clone();
                m.insert(name.clone(), v);
                next.push(m);
            }
        }
        grids = next;
    }
    let reports = grids
        .iter()
        .map(|over| eval_formula(&args.formula, over))
        .collect::<Result<Vec<_>>>()?;
    let text = match args.format {
        Format::Json => report::reports_to_json(&reports)? + "\n",
        Format::Csv => report::reports_to_csv(&reports),
    };
    report::emit(&text, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let (rows, common) = match args.arch {
        SimArch::Brickwork { n, q, common } => {
            let spec = brickwork(n, q)?;
            (run_fixed_circuit(&spec, &common)?, common)
        }
        SimArch::Lattice { dims, side, q, common } => {
            let spec = lattice(dims, side, q)?;
            (run_fixed_circuit(&spec, &common)?, common)
        }
        SimArch::File { path, common } => {
            let spec = archfile::load(&path)?;
            (run_fixed_circuit(&spec, &common)?, common)
        }
        SimArch::Spurious { n, q, alpha, common } => {
            if !(0.0..=1.0).contains(&alpha) {
                bail!("alpha must lie in [0,1]");
            }
            let base = unstructured_layer(
                &(0..n - 1).map(|i| (i, i + 1, 1.0)).collect::<Vec<_>>(),
                n,
                q,
            )?;
            let layout = simulation_layout(&base, common.k)?;
            let e = global_twirl(&layout)?;
            let mut per_trial: Vec<Vec<_>> = Vec::with_capacity(common.samples);
            for trial in 0..common.samples {
                let pairs =
                    spurious_circuit(n, common.layers, alpha, realization_seed(common.seed, trial));
                let channels = pairs
                    .iter()
                    .map(|p| spurious_layer_channel(p, &layout))
                    .collect::<Result<Vec<_>>>()?;
                per_trial.push(channels);
            }
            let rows = qdecay_cli::circuit::run_trajectories(
                &layout,
                &e,
                common.layers,
                common.samples,
                common.seed,
                |trial, layer| Ok(per_trial[trial][layer - 1].clone()),
            )?;
            (rows, common)
        }
    };
    report::emit(&report::trajectories_to_csv(&rows), common.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn run_fixed_circuit(
    spec: &ArchitectureSpec,
    common: &SimCommon,
) -> Result<Vec<qdecay_cli::circuit::TrajectoryRow>> {
    let layout = simulation_layout(spec, common.k)?;
    let e = global_twirl(&layout)?;
    let pass = pass_channel(spec, &layout)?;
    qdecay_cli::circuit::run_trajectories(
        &layout,
        &e,
        common.layers,
        common.samples,
        common.seed,
        |_, _| Ok(pass.clone()),
    )
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let cap = qdecay_cli::choi_dim_cap();
    let reports = match args.suite {
        Suite::Entropy { trials, seed } => vec![suites::entropy_suite(trials, seed)?],
        Suite::Walks { trees, seed } => vec![suites::walks_suite(trees, seed)?],
        Suite::Projector { samples, seed } => vec![suites::projector_suite(samples, seed)?],
        Suite::Arch => vec![suites::arch_suite()?],
        Suite::Glue { n, k } => vec![suites::glue_suite(n, k, cap)?],
        Suite::All { seed } => vec![
            suites::entropy_suite(200, seed)?,
            suites::walks_suite(500, seed)?,
            suites::projector_suite(20_000, seed)?,
            suites::arch_suite()?,
            suites::glue_suite(5, 1, cap)?,
        ],
    };
    let mut all_pass = true;
    for r in &reports {
        println!("suite {}: {}", r.name, if r.pass { "PASS" } else { "FAIL" });
        for d in &r.details {
            println!("  {d}");
        }
        all_pass &= r.pass;
    }
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_arch(args: ArchArgs) -> Result<ExitCode> {
    match args.action {
        ArchAction::Generate { generator, out } => {
            let spec = match generator {
                GenArch::Brickwork { n, q } => brickwork(n, q)?,
                GenArch::Lattice { dims, side, q } => lattice(dims, side, q)?,
                GenArch::Complete { n, q } => {
                    let mut edges = Vec::new();
                    for i in 0..n {
                        for j in (i + 1)..n {
                            edges.push((i, j, 1.0));
                        }
                    }
                    unstructured_layer(&edges, n, q)?
                }
            };
            let file = archfile::ArchFile::from_spec(&spec);
            let text = serde_json::to_string_pretty(&file)? + "\n";
            report::emit(&text, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        ArchAction::Validate { path } => {
            let spec = archfile::load(&path)?;
            let rep = spec.report();
            println!("valid: {} sites, {} layers", spec.sites(), spec.layers().len());
            if let Some(connected) = rep.cluster_graph_connected {
                println!("cluster graph connected: {connected}");
            }
            for (i, c) in rep.unstructured_connected.iter().enumerate() {
                println!("unstructured layer {i} connected: {c}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
