use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use lfn::calibration::{calibrate, CalibrationConfig};
use lfn::flows::{first_steady_step, SteadyStateParams};
use lfn::io::tables::{read_matrix, read_xi};
use lfn::io::{generate_synthetic, load_scenario, ResultWriter, RunResults, Scenario, SyntheticSpec};
use lfn::metrics::{matrix_jaccard_distance, weighted_clustering, FitReport};
use lfn::shocks::{run_experiment, ExperimentConfig, ShockKind, ShockSpec};
use lfn::suite::run_suite;
use lfn::{Dimension, FlowDensityMatrix, FlowTriple};

#[derive(Parser)]
#[command(name = "lfn", version, about = "Labour flow network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic input set and scenario file.
    Generate(GenerateArgs),
    /// Run one simulation per seed and write flows, logs and error histories.
    Simulate(SimulateArgs),
    /// Fit the similarity exponents to observed flows.
    Calibrate(CalibrateArgs),
    /// Compare shocked and baseline suites.
    Shock(ShockArgs),
    /// Compare two sets of flow matrices.
    Metrics(MetricsArgs),
    /// Find the first step at which an error history is steady.
    SteadyState(SteadyStateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 21)]
    regions: usize,
    #[arg(long, default_value_t = 21)]
    industries: usize,
    #[arg(long, default_value_t = 9)]
    occupations: usize,
    #[arg(long, default_value_t = 3500)]
    agents: usize,
    #[arg(long, default_value_t = 3600)]
    positions: usize,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; defaults to the scenario's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        load_scenario(&self.scenario).with_context(|| format!("loading {}", self.scenario.display()))
    }

    fn out_dir(&self, scenario: &Scenario) -> PathBuf {
        self.out.clone().unwrap_or_else(|| scenario.output_dir())
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated seeds; defaults to the scenario's seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Fixed warm-up length instead of steady-state detection.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    collection_steps: Option<usize>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Prefix of the observed flow CSVs: `<prefix>_region.csv` and so on.
    #[arg(long)]
    observed: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    m_sims: Option<usize>,
    /// Reuse the same seeds every iteration (the default).
    #[arg(long, conflicts_with = "fresh_seeds")]
    fixed_seeds: bool,
    /// Draw new seeds every iteration.
    #[arg(long)]
    fresh_seeds: bool,
    /// Average signed rather than absolute errors.
    #[arg(long)]
    signed: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Positional,
    WageUp,
    WageDown,
}

#[derive(Clone, Copy, ValueEnum)]
enum CharacteristicArg {
    Region,
    Occupation,
}

#[derive(Args)]
struct ShockArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated industry indices; defaults to the scenario's shock.
    #[arg(long, value_delimiter = ',')]
    industries: Vec<usize>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "region,occupation")]
    homogenise: Vec<CharacteristicArg>,
    /// Runs per suite.
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// Seed of the positional target draw.
    #[arg(long)]
    seed: Option<u64>,
    /// First baseline run seed; shocked runs follow.
    #[arg(long, default_value_t = 1)]
    first_seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct MetricsArgs {
    /// Prefix of the first flow set.
    #[arg(long)]
    a: PathBuf,
    /// Prefix of the second flow set.
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args)]
struct SteadyStateArgs {
    /// CSV with `step, xi` rows.
    #[arg(long)]
    xi: PathBuf,
    #[arg(long, default_value_t = 20)]
    window: usize,
    #[arg(long, default_value_t = 20)]
    lag: usize,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
}

fn read_flows(prefix: &Path) -> Result<FlowTriple> {
    let load = |dim: Dimension| -> Result<FlowDensityMatrix> {
        let path = PathBuf::from(format!("{}_{dim}.csv", prefix.display()));
        let (m, _) = read_matrix(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(FlowDensityMatrix(m))
    };
    Ok(FlowTriple {
        region: load(Dimension::Region)?,
        industry: load(Dimension::Industry)?,
        occupation: load(Dimension::Occupation)?,
    })
}

fn generate(args: GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec {
        dims: (args.regions, args.industries, args.occupations),
        n_agents: args.agents,
        n_positions: args.positions,
        seed: args.seed,
    };
    let data = generate_synthetic(spec)?;
    for path in data.write(&args.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let model = scenario.model()?;
    let seeds = if args.seeds.is_empty() {
        scenario.config.seeds.clone()
    } else {
        args.seeds.clone()
    };
    let mut template = scenario.run_config(0);
    template.burn_in = args.steps;
    template.record_log = true;
    if let Some(c) = args.collection_steps {
        template.collection_steps = c;
    }
    let outputs = run_suite(&model, &template, &seeds)?;
    for o in &outputs {
        info!("seed {}: collection started at step {}", o.seed, o.steady_state_step);
    }
    let runs: Vec<RunResults> = outputs
        .iter()
        .map(|o| RunResults {
            seed: o.seed,
            flows: &o.flows,
            transitions: &o.state.transition_log,
            xi: &o.xi_history,
        })
        .collect();
    let dir = args.scenario.out_dir(&scenario);
    let manifest = lfn::io::write_results(&dir, &scenario.config.hash(), Some(scenario.labels.clone()), &runs)?;
    println!("wrote {} files to {}", manifest.files.len() + 1, dir.display());
    Ok(())
}

fn run_calibration(args: CalibrateArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let model = scenario.model()?;
    let observed = read_flows(&args.observed)?;
    let mut config = scenario.config.calibration.clone().unwrap_or_else(|| CalibrationConfig {
        collection_steps: scenario.config.collection_steps,
        ..CalibrationConfig::default()
    });
    if let Some(t) = args.threshold {
        config.threshold = t;
    }
    if let Some(n) = args.max_iters {
        config.max_iterations = n;
    }
    if let Some(m) = args.m_sims {
        config.m_simulations = m;
        config.seeds.clear();
    }
    if args.fresh_seeds {
        config.fresh_seeds = true;
    }
    if args.fixed_seeds {
        config.fresh_seeds = false;
    }
    if args.signed {
        config.signed_error = true;
    }
    let result = calibrate(&observed, &config, &model, &scenario.run_config(0))?;

    let dir = args.scenario.out_dir(&scenario);
    let mut w = ResultWriter::new(&dir, scenario.config.hash(), Some(scenario.labels.clone()))?;
    w.nu(result.bundle.nu())?;
    w.calibration_history(&result.history)?;
    w.json("calibration_history.json", &result.history, None)?;
    let calibrated = model.with_bundle(Arc::new(result.bundle.clone()))?;
    let seeds = config.seeds_for(0);
    let template = lfn::engine::RunConfig {
        collection_steps: config.collection_steps,
        ..scenario.run_config(0)
    };
    let flows: Vec<FlowTriple> = run_suite(&calibrated, &template, &seeds)?
        .into_iter()
        .map(|o| o.flows)
        .collect();
    let mean = FlowTriple::mean(&flows)?;
    w.flows("calibrated_flows", &mean, None)?;
    w.json("fit_report.json", &FitReport::compare(&mean, &observed)?, None)?;
    w.finish()?;

    println!(
        "{} after {} iterations; best mean error {:.6} at iteration {} (initial {:.6})",
        if result.converged { "converged" } else { "threshold not reached" },
        result.history.len(),
        result.best_error(),
        result.best_iteration,
        result.initial_error()
    );
    Ok(())
}

fn shock(args: ShockArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let model = scenario.model()?;
    let mut spec = match (&scenario.config.shock, args.kind) {
        (_, Some(kind)) => {
            let kind = match kind {
                KindArg::Positional => ShockKind::Positional,
                KindArg::WageUp => ShockKind::WageUp,
                KindArg::WageDown => ShockKind::WageDown,
            };
            let homogenise = match kind {
                ShockKind::Positional => args
                    .homogenise
                    .iter()
                    .map(|c| match c {
                        CharacteristicArg::Region => Dimension::Region,
                        CharacteristicArg::Occupation => Dimension::Occupation,
                    })
                    .collect(),
                _ => Vec::new(),
            };
            ShockSpec {
                homogenise,
                ..ShockSpec::wage(kind, args.industries.clone())
            }
        }
        (Some(spec), None) => spec.clone(),
        (None, None) => bail!("no shock in the scenario; pass --kind and --industries"),
    };
    if !args.industries.is_empty() {
        spec.industries = args.industries.clone();
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let config = ExperimentConfig {
        m: args.m,
        run: scenario.run_config(0),
        first_seed: args.first_seed,
        alpha: args.alpha,
    };
    let report = run_experiment(&model, &spec, &config)?;
    let dir = args.scenario.out_dir(&scenario);
    let mut w = ResultWriter::new(&dir, scenario.config.hash(), Some(scenario.labels.clone()))?;
    w.shock_report(&report)?;
    w.finish()?;
    println!("fraction of positions shocked: {:.4}", report.fraction_shocked);
    for d in &report.dimensions {
        println!(
            "{:<10} jaccard {:.4} (paired {:.4}, baseline band {:.4}-{:.4}) clustering {:.4} -> {:.4}, {} flagged edges",
            d.dimension.name(),
            d.jaccard,
            d.paired_jaccard,
            d.baseline_band.0,
            d.baseline_band.1,
            d.clustering_baseline,
            d.clustering_shocked,
            d.flagged.len()
        );
    }
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let a = read_flows(&args.a)?;
    let b = read_flows(&args.b)?;
    let fit = FitReport::compare(&a, &b)?;
    let mut rows = Vec::new();
    for dim in Dimension::ALL {
        let (x, y) = (&a.get(dim).0, &b.get(dim).0);
        let d = fit.get(dim).expect("every dimension compared");
        rows.push(serde_json::json!({
            "dimension": dim,
            "pearson": d.pearson,
            "frobenius": d.frobenius,
            "jaccard": matrix_jaccard_distance(x, y)?,
            "clustering_a": weighted_clustering(x)?,
            "clustering_b": weighted_clustering(y)?,
        }));
    }
    let out = serde_json::json!({
        "pearson": fit.pearson,
        "frobenius": fit.frobenius,
        "dimensions": rows,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn steady_state(args: SteadyStateArgs) -> Result<()> {
    let xi = read_xi(&args.xi)?;
    let params = SteadyStateParams {
        window: args.window,
        lag: args.lag,
        epsilon: args.epsilon,
        max_steps: xi.len().max(args.window + args.lag),
        windowed_flows: false,
    };
    params.validate()?;
    match first_steady_step(&xi, &params)? {
        Some(k) => println!("steady at step {}", k + 1),
        None => println!("not steady within {} steps", xi.len()),
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => run_calibration(a),
        Command::Shock(a) => shock(a),
        Command::Metrics(a) => metrics(a),
        Command::SteadyState(a) => steady_state(a),
    }
}
