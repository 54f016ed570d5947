use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use relevant_fts::changepoint::{changepoint_test, changepoint_test_at, multi_cp_l2_test, MultiCpConfig, DEFAULT_TRIM};
use relevant_fts::cov_tests::{cov_changepoint_test, cov_changepoint_test_at, cov_two_sample_test};
use relevant_fts::dgp::{project_units, simulate, BasisFamily, BasisSpec, DgpSpec, MeanSpec, Process, SigmaProfile};
use relevant_fts::func_core::{
    read_curve_csv, read_raw_observations, units_on_common_grid, write_curve_csv, FunctionalSample, Grid,
    NormalizerKind, NuMeasure,
};
use relevant_fts::harness::{
    changepoint_histogram, default_methods, expand, pivot_kinds, run_methods, write_histogram_csv, ExperimentSpec,
    Manifest, Method, QuantileBook, TestKind,
};
use relevant_fts::longrun::{default_bandwidth, lrv_one_sample_test, lrv_one_sample_test_known_tau};
use relevant_fts::mean_tests::{
    decide, one_sample_equivalence_test, one_sample_test, two_sample_test, Direction, TestConfig, TestOutcome,
};
use relevant_fts::pivotal::{
    PivotKind, PivotalQuantiles, QuantileCache, DEFAULT_BM_STEPS, DEFAULT_PROBABILITIES, DEFAULT_REPLICATIONS,
    DEFAULT_SEED,
};
use relevant_fts::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_PRECONDITION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "fts-relevant",
    version,
    about = "Self-normalized relevant-hypothesis tests for functional time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and cache quantiles of a pivotal limit distribution.
    Quantiles(QuantilesArgs),
    /// Run a test on curve CSV files and write the result JSON.
    Test(TestArgs),
    /// Apply the decision rule to a given statistic and normalizer.
    Decide(DecideArgs),
    /// Turn long-format raw observations into a curve CSV.
    Ingest(IngestArgs),
    /// Simulate a sample from one of the data-generating processes.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo scenario and write rejection rates plus a manifest.
    Experiment(ExperimentArgs),
}

#[derive(Args, Clone)]
struct NuArgs {
    /// Uniform weights on {i/(k+1) : i = 1..k}.
    #[arg(long, value_name = "K", conflicts_with = "nu_file")]
    nu_atoms: Option<usize>,
    /// JSON file with `support` and `weights` arrays.
    #[arg(long, value_name = "PATH")]
    nu_file: Option<PathBuf>,
}

impl NuArgs {
    fn measure(&self) -> Result<NuMeasure, Error> {
        match (&self.nu_file, self.nu_atoms) {
            (Some(path), _) => Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?),
            (None, Some(k)) => NuMeasure::uniform_grid(k),
            (None, None) => Ok(NuMeasure::default()),
        }
    }
}

#[derive(Args, Clone)]
struct PivotArgs {
    /// Monte Carlo replications of the pivot.
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    reps: usize,
    /// Brownian-motion grid steps per replication.
    #[arg(long, default_value_t = DEFAULT_BM_STEPS)]
    bm_steps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Quantile table JSON to use instead of the simulated one.
    #[arg(long, value_name = "PATH")]
    quantile_file: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    #[value(name = "W")]
    W,
    #[value(name = "Wstar")]
    WStar,
    #[value(name = "Wstarstar")]
    WStarStar,
}

impl From<Dist> for PivotKind {
    fn from(d: Dist) -> Self {
        match d {
            Dist::W => PivotKind::W,
            Dist::WStar => PivotKind::WStar,
            Dist::WStarStar => PivotKind::WStarStar,
        }
    }
}

#[derive(Args)]
struct QuantilesArgs {
    #[arg(long, value_enum, default_value = "W")]
    dist: Dist,
    #[command(flatten)]
    nu: NuArgs,
    #[command(flatten)]
    pivot: PivotArgs,
    /// Probabilities to tabulate (comma separated).
    #[arg(long, value_delimiter = ',')]
    probs: Option<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum TestName {
    OneSample,
    OneSampleEquivalence,
    TwoSample,
    Changepoint,
    MultiCp,
    CovTwoSample,
    CovChangepoint,
    Lrv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Normalizer {
    Standard,
    Sup,
    Abs,
}

impl From<Normalizer> for NormalizerKind {
    fn from(n: Normalizer) -> Self {
        match n {
            Normalizer::Standard => NormalizerKind::Standard,
            Normalizer::Sup => NormalizerKind::Sup,
            Normalizer::Abs => NormalizerKind::Abs,
        }
    }
}

#[derive(Args)]
struct TestArgs {
    #[arg(value_enum)]
    test: TestName,
    /// Curve CSV (first sample for the two-sample tests).
    #[arg(long)]
    data: PathBuf,
    /// Second curve CSV for the two-sample tests.
    #[arg(long)]
    data2: Option<PathBuf>,
    /// Relevance threshold; must be strictly positive.
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "standard")]
    normalizer: Normalizer,
    #[command(flatten)]
    nu: NuArgs,
    #[command(flatten)]
    pivot: PivotArgs,
    /// Trimming fraction of the change-point search.
    #[arg(long, default_value_t = DEFAULT_TRIM)]
    trim: f64,
    /// Known change point index k (curves 1..=k form the first segment).
    #[arg(long)]
    break_index: Option<usize>,
    /// Number of breaks for the multiple change point test.
    #[arg(long)]
    k_breaks: Option<usize>,
    /// Known break indices for the multiple change point test.
    #[arg(long, value_delimiter = ',')]
    breaks: Option<Vec<usize>>,
    /// Bartlett bandwidth of the long-run variance estimate.
    #[arg(long)]
    bandwidth: Option<usize>,
    /// Known long-run standard deviation; replaces the estimate.
    #[arg(long)]
    tau: Option<f64>,
    /// Result JSON path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecideArgs {
    #[arg(long)]
    statistic: f64,
    #[arg(long)]
    normalizer_value: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "standard")]
    normalizer: Normalizer,
    /// Equivalence direction: reject when the statistic is below the threshold.
    #[arg(long)]
    equivalence: bool,
    #[command(flatten)]
    nu: NuArgs,
    #[command(flatten)]
    pivot: PivotArgs,
}

#[derive(Args)]
struct IngestArgs {
    /// Long CSV with columns unit_id, position, value.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Number of Fourier functions in the least-squares projection.
    #[arg(long, default_value_t = 49)]
    basis_dim: usize,
    /// Points of the output grid.
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    /// Keep the observed positions as the grid instead of projecting.
    #[arg(long)]
    identity: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Basis {
    Bspline,
    Fourier,
}

#[derive(Args)]
struct SimulateArgs {
    /// iid, fma1, far1, bb, heavy_t5, kraus_t5 or cov_scenario.
    #[arg(long, value_parser = parse_process)]
    dgp: Option<Process>,
    /// Full generator description as JSON; flags other than --seed and --output are ignored.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "bspline")]
    basis: Basis,
    #[arg(long, default_value_t = 21)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    #[arg(long, default_value_t = 0.7)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Mean `√(2δ) sin(2πt)` with `∫μ² = δ`.
    #[arg(long, conflicts_with = "parabola")]
    mean_delta: Option<f64>,
    /// Mean `a t(1−t)`.
    #[arg(long)]
    parabola: Option<f64>,
    /// Curve CSV; the generator description goes next to it as `.dgp.json`.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodSet {
    Auto,
    Standard,
    Normalizers,
    Lrv,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Scenario or group id.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Master seed of the replication seeds.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "auto")]
    methods: MethodSet,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
    #[command(flatten)]
    nu: NuArgs,
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    quantile_reps: usize,
    #[arg(long, default_value_t = DEFAULT_BM_STEPS)]
    bm_steps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    quantile_seed: u64,
    /// Also write a histogram of the estimated break fractions (change-point scenarios).
    #[arg(long)]
    histogram_bins: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn parse_process(s: &str) -> Result<Process, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn cache() -> QuantileCache {
    let dir = std::env::var_os("FTS_CACHE_DIR")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache").join("fts-relevant")))
        .unwrap_or_else(|| PathBuf::from(".fts-cache"));
    QuantileCache::new(dir)
}

fn probabilities(extra: &[f64]) -> Vec<f64> {
    let mut p = DEFAULT_PROBABILITIES.to_vec();
    p.extend_from_slice(extra);
    p
}

fn load_table(kind: PivotKind, nu: &NuMeasure, probs: &[f64], pivot: &PivotArgs) -> Result<PivotalQuantiles, Error> {
    if let Some(path) = &pivot.quantile_file {
        return PivotalQuantiles::from_json(&std::fs::read_to_string(path)?);
    }
    let cache = cache();
    let (table, hit) = cache.get_or_build(kind, nu, probs, pivot.reps, pivot.bm_steps, pivot.seed)?;
    if hit {
        log::debug!("{} quantiles read from {}", kind.as_str(), cache.dir().display());
    } else {
        log::info!(
            "built {} quantile table ({} replications) in {}",
            kind.as_str(),
            pivot.reps,
            cache.dir().display()
        );
    }
    Ok(table)
}

fn cmd_quantiles(args: QuantilesArgs) -> Result<(), Error> {
    let nu = args.nu.measure()?;
    let kind = PivotKind::from(args.dist);
    let probs = args.probs.unwrap_or_else(|| DEFAULT_PROBABILITIES.to_vec());
    let table = load_table(kind, &nu, &probs, &args.pivot)?;
    println!("p,{}", kind.as_str());
    for p in &probs {
        println!("{p},{}", table.quantile(*p)?);
    }
    Ok(())
}

fn read_second(args: &TestArgs) -> Result<FunctionalSample, Error> {
    let path = args
        .data2
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("two-sample tests need --data2".into()))?;
    read_curve_csv(path)
}

fn cmd_test(args: TestArgs) -> Result<(), Error> {
    let x = read_curve_csv(&args.data)?;
    let outcome = if args.test == TestName::Lrv {
        if args.delta == 0.0 {
            return Err(Error::ZeroThreshold);
        }
        match args.tau {
            Some(tau) => lrv_one_sample_test_known_tau(&x, args.delta, args.alpha, tau)?,
            None => {
                let bw = args.bandwidth.unwrap_or_else(|| default_bandwidth(x.n()));
                lrv_one_sample_test(&x, args.delta, args.alpha, bw)?
            }
        }
    } else {
        let config = test_config(&args)?;
        run_test(&args, &x, &config)?
    };
    let json = outcome.to_json()?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, json)?;
            println!(
                "reject={} statistic={} threshold={}",
                outcome.reject, outcome.statistic, outcome.threshold
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn test_config(args: &TestArgs) -> Result<TestConfig, Error> {
    if args.delta == 0.0 {
        return Err(Error::ZeroThreshold);
    }
    let nu = args.nu.measure()?;
    let kind = NormalizerKind::from(args.normalizer);
    let table = load_table(
        PivotKind::for_normalizer(kind),
        &nu,
        &probabilities(&[args.alpha, 1.0 - args.alpha]),
        &args.pivot,
    )?;
    TestConfig::new(args.delta, args.alpha, nu, kind, table)
}

fn run_test(args: &TestArgs, x: &FunctionalSample, config: &TestConfig) -> Result<TestOutcome, Error> {
    Ok(match args.test {
        TestName::OneSample => one_sample_test(x, config)?,
        TestName::OneSampleEquivalence => one_sample_equivalence_test(x, config)?,
        TestName::TwoSample => two_sample_test(x, &read_second(args)?, config)?,
        TestName::CovTwoSample => cov_two_sample_test(x, &read_second(args)?, config)?,
        TestName::Changepoint => match args.break_index {
            Some(k) => changepoint_test_at(x, config, k)?,
            None => changepoint_test(x, config, args.trim)?.0,
        },
        TestName::CovChangepoint => match args.break_index {
            Some(k) => cov_changepoint_test_at(x, config, k)?,
            None => cov_changepoint_test(x, config, args.trim)?.0,
        },
        TestName::MultiCp => {
            let k_breaks = match (args.k_breaks, &args.breaks) {
                (Some(k), _) => k,
                (None, Some(b)) => b.len(),
                (None, None) => return Err(Error::InvalidParameter("multi-cp needs --k-breaks or --breaks".into())),
            };
            multi_cp_l2_test(
                x,
                &MultiCpConfig {
                    k_breaks,
                    trim: args.trim,
                    test: config.clone(),
                    breaks: args.breaks.clone(),
                },
            )?
        }
        TestName::Lrv => unreachable!("handled without pivot tables"),
    })
}

fn cmd_decide(args: DecideArgs) -> Result<(), Error> {
    if args.delta == 0.0 {
        return Err(Error::ZeroThreshold);
    }
    let nu = args.nu.measure()?;
    let kind = NormalizerKind::from(args.normalizer);
    let table = load_table(
        PivotKind::for_normalizer(kind),
        &nu,
        &probabilities(&[args.alpha, 1.0 - args.alpha]),
        &args.pivot,
    )?;
    let config = TestConfig::new(args.delta, args.alpha, nu, kind, table)?;
    let direction = if args.equivalence {
        Direction::Equivalence
    } else {
        Direction::Relevant
    };
    let q = config.quantile_for(direction)?;
    let (threshold, reject) = decide(args.statistic, args.normalizer_value, q, args.delta, direction);
    let out = serde_json::json!({
        "statistic": args.statistic,
        "normalizer": args.normalizer_value,
        "delta": args.delta,
        "alpha": args.alpha,
        "quantile": q,
        "threshold": threshold,
        "direction": direction,
        "reject": reject,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<(), Error> {
    let units = read_raw_observations(&args.input)?;
    let count = units.len();
    let sample = if args.identity {
        units_on_common_grid(units)?
    } else {
        project_units(&units, args.basis_dim, Grid::new(args.resolution)?)?
    };
    write_curve_csv(&args.output, &sample)?;
    log::info!("wrote {count} curves to {}", args.output.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let spec = match &args.spec {
        Some(path) => DgpSpec {
            seed: args.seed,
            ..serde_json::from_str(&std::fs::read_to_string(path)?)?
        },
        None => {
            let process = args
                .dgp
                .ok_or_else(|| Error::InvalidParameter("simulate needs --dgp or --spec".into()))?;
            let family = match args.basis {
                Basis::Bspline => BasisFamily::Bspline,
                Basis::Fourier => BasisFamily::Fourier,
            };
            let mean = match (args.mean_delta, args.parabola) {
                (Some(d), _) => MeanSpec::SinSqrt2Delta(d),
                (None, Some(a)) => MeanSpec::Parabola(a),
                (None, None) => MeanSpec::Zero,
            };
            DgpSpec {
                process,
                basis: BasisSpec::new(family, args.dim, Grid::new(args.resolution)?)?,
                sigma: SigmaProfile::InvISq,
                kappa: args.kappa,
                mean,
                scale: args.scale,
                n: args.n,
                seed: args.seed,
                ..DgpSpec::default()
            }
        }
    };
    let sample = simulate(&spec)?;
    write_curve_csv(&args.output, &sample)?;
    std::fs::write(sidecar(&args.output), serde_json::to_string_pretty(&spec)?)?;
    Ok(())
}

fn sidecar(output: &Path) -> PathBuf {
    output.with_extension("dgp.json")
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), Error> {
    let members = expand(&args.scenario)?;
    let nu = args.nu.measure()?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut books: Vec<(Vec<PivotKind>, QuantileBook)> = Vec::new();
    for sc in &members {
        let mut spec = ExperimentSpec::new(sc.id, args.reps);
        spec.sweep = args.sweep.clone();
        spec.delta = args.delta;
        spec.n1 = args.n1;
        spec.n2 = args.n2;
        spec.nu = nu.clone();
        if let Some(a) = &args.alphas {
            spec.alphas = a.clone();
        }
        if let Some(s) = args.seed {
            spec.master_seed = s;
        }
        if let Some(r) = args.resolution {
            spec.resolution = r;
        }
        spec.validate()?;
        let methods = match args.methods {
            MethodSet::Auto => default_methods(sc.id),
            MethodSet::Standard => vec![Method::SnStandard],
            MethodSet::Normalizers => vec![Method::SnStandard, Method::SnSup, Method::SnAbs],
            MethodSet::Lrv => vec![Method::SnStandard, Method::LrvEstimated, Method::LrvTrue],
        };
        let kinds = pivot_kinds(&methods);
        let book = match books.iter().find(|(k, _)| *k == kinds) {
            Some((_, b)) => b.clone(),
            None => {
                let b = QuantileBook::from_cache(
                    &cache(),
                    &nu,
                    &kinds,
                    &spec.alphas,
                    args.quantile_reps,
                    args.bm_steps,
                    args.quantile_seed,
                )?;
                books.push((kinds, b.clone()));
                b
            }
        };
        let table = run_methods(&spec, &book, &methods)?;
        let csv_path = args.out_dir.join(format!("{}.csv", sc.id));
        table.write_csv(&csv_path)?;
        std::fs::write(
            args.out_dir.join(format!("{}.manifest.json", sc.id)),
            Manifest::new(&spec, &book, &methods).to_json()?,
        )?;
        let bins = match (args.histogram_bins, sc.id) {
            (Some(b), _) => Some(b),
            (None, "fig6_cp_histogram") => Some(20),
            _ => None,
        };
        if let Some(bins) = bins {
            if !matches!(sc.test, TestKind::ChangePoint | TestKind::CovChangePoint) {
                return Err(Error::InvalidParameter(format!(
                    "{} is not a change-point scenario",
                    sc.id
                )));
            }
            let rows = changepoint_histogram(&spec, bins)?;
            write_histogram_csv(&rows, &args.out_dir.join(format!("{}.histogram.csv", sc.id)))?;
        }
        log::info!("{}: {} rows written to {}", sc.id, table.rows.len(), csv_path.display());
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_precondition() {
        EXIT_PRECONDITION
    } else if matches!(
        e,
        Error::InvalidParameter(_) | Error::InvalidNu(_) | Error::UnknownScenario(_)
    ) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Quantiles(a) => cmd_quantiles(a),
        Command::Test(a) => cmd_test(a),
        Command::Decide(a) => cmd_decide(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
