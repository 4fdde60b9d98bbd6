//! Command-line front end: simulate benchmark fields, fit maps, draw
//! (conditional) samples, score held-out data, and run experiment grids.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/file error, 3 numeric
//! failure.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, CommandFactory, FromArgMatches, Parser, Subcommand};

use shrinktm::basegauss::{matcov_mle, FamilyKind, MatCovConfig};
use shrinktm::error::Error as ShrinkError;
use shrinktm::geometry::maximin_order;
use shrinktm::io as stm_io;
use shrinktm::mapkernel::{HyperParams, Method, RhoKind};
use shrinktm::model;
use shrinktm::optimize::{fit_ordered, FitConfig, OptimizerConfig};
use shrinktm::posterior::DataMatrix;
use shrinktm::score::{
    self, compare, records_to_csv, summarize, summary_to_csv, CompareConfig, FittedModel,
    MethodFit, RunRecord,
};
use shrinktm::simulate::{simulate, DesignKind, SimDesign};
use shrinktm::svg::render_heatmap;

#[derive(Parser, Debug)]
#[command(
    name = "shrinktm",
    about = "Shrinkage transport maps for spatial fields: simulate, fit, sample, score",
    version
)]
struct Cli {
    /// Cap on worker threads (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Key=value config file; flags take precedence over its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate benchmark fields and write locations.csv + data.csv.
    Simulate(SimulateArgs),
    /// Fit a model to data and save it with its optimization trace.
    Fit(FitArgs),
    /// Draw (conditional) samples from a saved model.
    Sample(SampleArgs),
    /// Score held-out data under a saved model.
    Score(ScoreArgs),
    /// Run a methods x sample-sizes x replications comparison.
    Experiment(ExperimentArgs),
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    /// Design: lr (Gaussian linear map), nr (adds a sine), gaussian-base.
    #[arg(long, default_value = "lr")]
    design: String,
    /// Grid as COLSxROWS, e.g. 30x30.
    #[arg(long, default_value = "30x30")]
    grid: String,
    /// Number of replicates.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for locations.csv and data.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long, default_value_t = 0.3)]
    range: f64,
    /// Sine amplitude for the nr design.
    #[arg(long, default_value_t = 2.0)]
    amplitude: f64,
    /// Sine frequency for the nr design.
    #[arg(long, default_value_t = 4.0)]
    frequency: f64,
}

#[derive(clap::Args, Debug)]
struct FitArgs {
    /// Replicate data CSV (one column per location id).
    #[arg(long)]
    data: PathBuf,
    /// Locations CSV (id,x[,y[,z]]).
    #[arg(long)]
    locs: PathBuf,
    #[arg(long, default_value = "shrinktm")]
    method: String,
    /// Base covariance family: matern or exponential.
    #[arg(long, default_value = "matern")]
    family: String,
    /// Kernel correlation: sqexp or matern32.
    #[arg(long, default_value = "sqexp")]
    rho: String,
    /// Optimizer iterations (objective evaluations at the iterate).
    #[arg(long, default_value_t = 200)]
    iters: usize,
    /// Initial Adam learning rate.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    /// Base conditioning-set size.
    #[arg(long, default_value_t = 30)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Trace CSV path (defaults to <out>.trace.csv).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Start the ordering at this location index instead of the centroid.
    #[arg(long)]
    first: Option<usize>,
}

#[derive(clap::Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of samples to draw.
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    seed: u64,
    /// Output samples CSV.
    #[arg(long)]
    out: PathBuf,
    /// Condition on the first --observed-k ordered values of this field.
    #[arg(long)]
    condition_on: Option<PathBuf>,
    /// Length of the observed (ordered) prefix for conditional sampling.
    #[arg(long, default_value_t = 100)]
    observed_k: usize,
    /// Also render each sample as an SVG heatmap next to the CSV.
    #[arg(long, action = ArgAction::SetTrue)]
    svg: bool,
}

#[derive(clap::Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    /// Held-out data CSV.
    #[arg(long)]
    data: PathBuf,
    /// Results CSV (printed to stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also evaluate conditional-simulation RMSE with this observed prefix.
    #[arg(long)]
    conditional_k: Option<usize>,
    /// Conditional draws per field for the RMSE predictor.
    #[arg(long, default_value_t = 50)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args, Debug)]
struct ExperimentArgs {
    #[arg(long, default_value = "lr")]
    design: String,
    #[arg(long, default_value = "30x30")]
    grid: String,
    /// Comma-separated methods.
    #[arg(long, default_value = "shrinktm,simpletm,matcov")]
    methods: String,
    /// Comma-separated training sizes.
    #[arg(long, default_value = "1,2,5,10")]
    ns: String,
    /// Replications per (method, n).
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Held-out test fields scored by every fit.
    #[arg(long, default_value_t = 50)]
    n_test: usize,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long, default_value_t = 0.3)]
    range: f64,
    /// Base covariance family for the fits.
    #[arg(long, default_value = "matern")]
    family: String,
    /// Results CSV, one row per (method, n, replication).
    #[arg(long)]
    out: PathBuf,
    /// Optional mean/sd summary CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv = match effective_argv() {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let matches = match Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            // clap prints help/version through the error path with exit 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Splice config-file entries (key=value, matching long flag names) between
/// the subcommand and the user's flags, so explicit flags win.
fn effective_argv() -> Result<Vec<String>, String> {
    let argv: Vec<String> = std::env::args().collect();
    let config_path = argv
        .iter()
        .position(|a| a == "--config")
        .and_then(|i| argv.get(i + 1))
        .cloned()
        .or_else(|| {
            argv.iter()
                .find_map(|a| a.strip_prefix("--config=").map(str::to_owned))
        });
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config file {path}: {e}"))?;
    let mut entries: HashMap<String, String> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", lineno + 1))?;
        entries.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    // find the subcommand token and the flags it accepts
    let cmd = Cli::command();
    let sub_pos = argv
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| cmd.find_subcommand(a.as_str()).is_some())
        .map(|(i, _)| i);
    let Some(sub_pos) = sub_pos else {
        return Ok(argv);
    };
    let sub = cmd.find_subcommand(&argv[sub_pos]).unwrap();
    let known: Vec<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_owned))
        .collect();
    let user_flags: Vec<&str> = argv[sub_pos + 1..]
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap())
        .collect();
    let mut spliced = argv[..=sub_pos].to_vec();
    for (k, v) in &entries {
        if known.contains(k) && !user_flags.contains(&k.as_str()) {
            spliced.push(format!("--{k}"));
            spliced.push(v.clone());
        }
    }
    spliced.extend_from_slice(&argv[sub_pos + 1..]);
    Ok(spliced)
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    if let Some(se) = e.downcast_ref::<ShrinkError>() {
        match se {
            ShrinkError::InvalidArgument(_) => 1,
            ShrinkError::Numeric { .. } | ShrinkError::OptimizerDiverged { .. } => 3,
            _ => 2,
        }
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        2
    } else {
        1
    }
}

fn run(cmd: Cmd) -> anyhow::Result<()> {
    match cmd {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Sample(a) => cmd_sample(a),
        Cmd::Score(a) => cmd_score(a),
        Cmd::Experiment(a) => cmd_experiment(a),
    }
}

fn parse_grid(s: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| ShrinkError::InvalidArgument(format!("grid must look like 30x30, got '{s}'")))?;
    let nx: usize = a
        .trim()
        .parse()
        .map_err(|_| ShrinkError::InvalidArgument(format!("bad grid width '{a}'")))?;
    let ny: usize = b
        .trim()
        .parse()
        .map_err(|_| ShrinkError::InvalidArgument(format!("bad grid height '{b}'")))?;
    Ok((nx, ny))
}

fn parse_family(s: &str) -> anyhow::Result<FamilyKind> {
    match s.to_ascii_lowercase().as_str() {
        "matern" => Ok(FamilyKind::Matern),
        "exponential" | "exp" => Ok(FamilyKind::Exponential),
        other => Err(ShrinkError::InvalidArgument(format!("unknown family '{other}'")).into()),
    }
}

fn parse_rho(s: &str) -> anyhow::Result<RhoKind> {
    match s.to_ascii_lowercase().as_str() {
        "sqexp" | "squared-exponential" => Ok(RhoKind::SquaredExponential),
        "matern32" => Ok(RhoKind::Matern32),
        other => Err(ShrinkError::InvalidArgument(format!("unknown rho '{other}'")).into()),
    }
}

fn design_from(kind: &str, grid: &str, seed: u64, variance: f64, range: f64) -> anyhow::Result<SimDesign> {
    Ok(SimDesign {
        kind: DesignKind::parse(kind)?,
        grid: parse_grid(grid)?,
        variance,
        range,
        seed,
        ..SimDesign::default()
    })
}

fn cmd_simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let mut design = design_from(&a.design, &a.grid, a.seed, a.variance, a.range)?;
    design.amplitude = a.amplitude;
    design.frequency = a.frequency;
    let sim = simulate(&design, a.n)?;
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("locations.csv"), stm_io::write_locations_csv(&sim.locs))?;
    std::fs::write(
        a.out.join("data.csv"),
        stm_io::write_data_csv(&sim.data, &sim.ordering, &sim.locs),
    )?;
    println!(
        "wrote {} replicates at {} locations to {}",
        a.n,
        sim.locs.len(),
        a.out.display()
    );
    Ok(())
}

fn read_inputs(
    data: &Path,
    locs: &Path,
) -> anyhow::Result<(shrinktm::Locations, ndarray::Array2<f64>)> {
    let locs = stm_io::read_locations_csv(&std::fs::read_to_string(locs)?)?;
    let original = stm_io::read_data_csv(&std::fs::read_to_string(data)?, &locs)?;
    Ok((locs, original))
}

fn cmd_fit(a: FitArgs) -> anyhow::Result<()> {
    let method = Method::parse(&a.method)?;
    let (locs, original) = read_inputs(&a.data, &a.locs)?;
    let ordering = maximin_order(&locs, a.first)?;
    let y = DataMatrix::from_original_order(&original, &ordering)?;

    let mut init = HyperParams::default();
    init.family = parse_family(&a.family)?;
    init.rho = parse_rho(&a.rho)?;
    init.m = a.m.min(ordering.m_max);
    let optimizer = OptimizerConfig {
        iterations: a.iters,
        learning_rate: a.lr,
        seed: a.seed,
        ..OptimizerConfig::default()
    };

    let (hp, fitted, trace_csv, objective) = match method {
        Method::ShrinkTm | Method::SimpleTm => {
            let cfg = FitConfig {
                method,
                init,
                optimizer,
                first: a.first,
                freeze: Vec::new(),
                multi_start: true,
                auto_bounds: true,
            };
            let result = fit_ordered(&y, &locs, &ordering, &cfg)?;
            println!(
                "fit {} in {} iterations, objective {:.6}, m' = {}",
                method.as_str(),
                result.trace.rows.len(),
                result.objective,
                result.map.m_prime
            );
            let csv = result.trace.to_csv();
            (result.hp, FittedModel::Map(result.map), csv, result.objective)
        }
        Method::MatCov => {
            let cfg = MatCovConfig { kind: init.family, optimizer, ..MatCovConfig::default() };
            let fit = matcov_mle(&y, &locs, &ordering, &cfg)?;
            let mut hp = init;
            hp.family = fit.family.kind;
            hp.log_variance = fit.family.log_variance;
            hp.log_range = fit.family.log_range;
            hp.log_smoothness = fit.family.log_smoothness;
            println!(
                "fit matcov: variance={:.6} range={:.6} smoothness={:.6} loglik={:.6}",
                fit.family.variance(),
                fit.family.range(),
                fit.family.smoothness(),
                fit.log_likelihood
            );
            let mut trace = fit.trace;
            trace.theta_names = shrinktm::optimize::theta_names(Method::MatCov, hp.family)
                .into_iter()
                .map(str::to_owned)
                .collect();
            let model = FittedModel::Gaussian(score::GaussianModel::new(
                fit.family, &locs, &ordering,
            )?);
            (hp, model, trace.to_csv(), fit.log_likelihood)
        }
    };
    let _ = objective;

    model::save(&a.out, method, &hp, &locs, &ordering, &fitted)?;
    let trace_path = a.trace.unwrap_or_else(|| {
        let mut p = a.out.as_os_str().to_owned();
        p.push(".trace.csv");
        PathBuf::from(p)
    });
    std::fs::write(&trace_path, trace_csv)?;
    println!("model -> {}, trace -> {}", a.out.display(), trace_path.display());
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> anyhow::Result<()> {
    let saved = model::load(&a.model)?;
    let observed: Vec<f64> = match &a.condition_on {
        Some(path) => {
            let original =
                stm_io::read_data_csv(&std::fs::read_to_string(path)?, &saved.locs)?;
            if original.nrows() == 0 {
                return Err(ShrinkError::InvalidArgument("conditioning file has no rows".into()).into());
            }
            let field = DataMatrix::from_original_order(&original, &saved.ordering)?;
            if a.observed_k > field.n_locations() {
                return Err(ShrinkError::InvalidArgument(format!(
                    "observed-k {} exceeds {} locations",
                    a.observed_k,
                    field.n_locations()
                ))
                .into());
            }
            field.row(0)[..a.observed_k].to_vec()
        }
        None => Vec::new(),
    };

    let samples = if a.n == 0 {
        DataMatrix::empty(saved.locs.len())
    } else {
        saved.model.conditional_sample(a.n, a.seed, &observed)?
    };
    std::fs::write(
        &a.out,
        stm_io::write_data_csv(&samples, &saved.ordering, &saved.locs),
    )?;
    println!("wrote {} samples -> {}", a.n, a.out.display());

    if a.svg {
        let (lo, hi) = match &saved.model {
            FittedModel::Map(m) => (m.train_lo, m.train_hi),
            FittedModel::Gaussian(g) => {
                let sd = g.family.variance().sqrt();
                (-2.5 * sd, 2.5 * sd)
            }
        };
        let original = samples.to_original_order(&saved.ordering);
        for r in 0..original.nrows() {
            let values: Vec<f64> = original.row(r).to_vec();
            let svg = render_heatmap(
                &saved.locs,
                &values,
                lo,
                hi,
                &format!("sample {r} ({})", saved.method.as_str()),
            );
            let path = a.out.with_extension(format!("{r:03}.svg"));
            std::fs::write(&path, svg)?;
        }
        println!("rendered {} heatmaps", original.nrows());
    }
    Ok(())
}

fn cmd_score(a: ScoreArgs) -> anyhow::Result<()> {
    let saved = model::load(&a.model)?;
    let original = stm_io::read_data_csv(&std::fs::read_to_string(&a.data)?, &saved.locs)?;
    let test = DataMatrix::from_original_order(&original, &saved.ordering)?;
    let t0 = std::time::Instant::now();
    let summary = score::log_score(&saved.model, &test)?;
    let seconds = t0.elapsed().as_secs_f64();

    let n_model = match &saved.model {
        FittedModel::Map(m) => m.n,
        FittedModel::Gaussian(_) => 0,
    };
    let mut records = vec![
        RunRecord {
            method: saved.method,
            n: n_model,
            replication: 0,
            metric: "log_score_field".into(),
            value: summary.per_field,
            seed: a.seed,
            seconds,
        },
        RunRecord {
            method: saved.method,
            n: n_model,
            replication: 0,
            metric: "log_score_location".into(),
            value: summary.per_location,
            seed: a.seed,
            seconds,
        },
    ];
    println!(
        "log score over {} fields: {:.6} per field, {:.6} per location",
        summary.n_fields, summary.per_field, summary.per_location
    );

    if let Some(k) = a.conditional_k {
        for r in 0..test.n_replicates() {
            let t0 = std::time::Instant::now();
            let truth = test.row(r);
            let rmse = score::conditional_rmse(&saved.model, &truth, k, a.draws, a.seed)?;
            records.push(RunRecord {
                method: saved.method,
                n: n_model,
                replication: r,
                metric: format!("conditional_rmse_k{k}"),
                value: rmse,
                seed: a.seed,
                seconds: t0.elapsed().as_secs_f64(),
            });
            println!("field {r}: conditional RMSE at {k} observed = {rmse:.6}");
        }
    }

    let csv = records_to_csv(&records);
    match &a.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> anyhow::Result<()> {
    let methods: Vec<Method> = a
        .methods
        .split(',')
        .map(|s| Method::parse(s.trim()))
        .collect::<Result<_, _>>()?;
    let ns: Vec<usize> = a
        .ns
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| ShrinkError::InvalidArgument(format!("bad n '{s}'")))
        })
        .collect::<Result<_, _>>()?;
    let design = design_from(&a.design, &a.grid, a.seed, a.variance, a.range)?;
    let mut fit = MethodFit::default();
    fit.init.family = parse_family(&a.family)?;
    fit.optimizer.iterations = a.iters;
    let cfg = CompareConfig {
        design,
        methods,
        ns,
        replications: a.reps,
        n_test: a.n_test,
        fit,
        per_location_rows: false,
    };
    let records = compare(&cfg)?;
    std::fs::write(&a.out, records_to_csv(&records))?;
    println!("wrote {} result rows -> {}", records.len(), a.out.display());
    if let Some(path) = &a.summary {
        let rows = summarize(&records);
        std::fs::write(path, summary_to_csv(&rows))?;
        for row in &rows {
            println!(
                "{:>9} n={:<3} {}: {:.4} +- {:.4} ({} runs)",
                row.method.as_str(),
                row.n,
                row.metric,
                row.mean,
                row.sd,
                row.count
            );
        }
    }
    Ok(())
}
