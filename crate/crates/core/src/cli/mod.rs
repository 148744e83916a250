//! The `sparsegp` command-line tool.
//!
//! Exit status is 0 on success, 2 for configuration errors, 3 for data
//! errors and 4 when the numerics fail. Failures print one JSON line on
//! stderr: `{"error":"data","message":"..."}`.

mod config;
mod data;
mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::bayes::{
    initial_state, mcmc_run, predict_conditional, Dataset, Draw, NoiseChoice, PosteriorSampleSet, UnconditionalSampler,
};
use crate::kernels::{y_kernel_eval, CoreKernelParams, Inputs, KernelHyperparameters, NoiseParams};
use crate::linalg::{assemble_covariance, write_matrix_market_annotated, SparseSymmetricMatrix};
use crate::synthetic::{derive_seed, generate_scenario_draw, run_benchmark, Scenario};
use crate::{Error, Result};

pub use config::{IoSection, McmcSection, ModelSection, PredictSection, PriorsSection, RunConfig, SolverSection};
pub use data::{read_dataset, read_inputs, read_query};
use output::{read_jsonl, sha256_file, sha256_hex, write_json, write_jsonl, write_trace, Staging};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "sparsegp", version, about = "Exact Gaussian processes with sparsity-discovering kernels")]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; also SPARSEGP_WORKERS.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sampler on a data file.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict at query points from stored posterior draws.
    Predict {
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        query: Option<PathBuf>,
        /// Output CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simulate from the prior under each draw instead of conditioning.
        #[arg(long)]
        unconditional: bool,
        /// Number of simulation columns.
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Write train/test files for a synthetic scenario.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the simulation study.
    Benchmark {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the covariance at fixed hyperparameters as Matrix Market.
    KernelExport {
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Export the sparse factor scaled to unit diagonal.
        #[arg(long)]
        normalized: bool,
    },
}

/// Runs the tool on the process arguments and returns the exit status.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                let first = e.to_string().lines().next().unwrap_or("").to_string();
                diagnostic("config", &first);
            }
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("SPARSEGP_LOG")
        .target(env_logger::Target::Stderr)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let (code, kind) = classify(&e);
            diagnostic(kind, &e.to_string());
            code
        }
    }
}

fn diagnostic(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": kind, "message": message }));
}

fn classify(e: &Error) -> (i32, &'static str) {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::UnsupportedSmoothness(_) => (2, "config"),
        Error::Data(_)
        | Error::DimensionMismatch { .. }
        | Error::IndexOutOfRange { .. }
        | Error::Io { .. }
        | Error::MatrixMarket(_) => (3, "data"),
        // Everything else is the numerics: non-finite kernels, failed
        // factorizations, solver breakdown, oversized dense problems.
        _ => (4, "numerical"),
    }
}

struct Context {
    config: RunConfig,
    config_hash: String,
    seed: u64,
    workers: usize,
}

fn load_context(cli: &Cli) -> Result<Context> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let config = RunConfig::parse(&text)?;
    let env_workers = match std::env::var("SPARSEGP_WORKERS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("SPARSEGP_WORKERS must be a count, got '{v}'")))?,
        ),
        Err(_) => None,
    };
    let workers = cli
        .workers
        .or(env_workers)
        .filter(|&w| w > 0)
        .unwrap_or(config.solver.workers);
    let workers = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    };
    Ok(Context {
        seed: cli.seed.unwrap_or(config.mcmc.seed),
        config_hash: sha256_hex(text.as_bytes()),
        config,
        workers,
    })
}

fn required(flag: Option<&PathBuf>, fallback: Option<&PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or(fallback)
        .cloned()
        .ok_or_else(|| Error::Config(format!("no {name} path: pass --{name} or set it under [io]")))
}

fn execute(cli: &Cli) -> Result<()> {
    let ctx = load_context(cli)?;
    let io = &ctx.config.io;
    match &cli.command {
        Command::Train { data, out } => train(
            &ctx,
            &required(data.as_ref(), io.data.as_ref(), "data")?,
            &required(out.as_ref(), io.output.as_ref(), "out")?,
        ),
        Command::Predict {
            samples,
            data,
            query,
            out,
            unconditional,
            draws,
        } => predict(
            &ctx,
            &required(samples.as_ref(), io.samples.as_ref(), "samples")?,
            &required(data.as_ref(), io.data.as_ref(), "data")?,
            &required(query.as_ref(), io.query.as_ref(), "query")?,
            &required(out.as_ref(), io.output.as_ref(), "out")?,
            *unconditional,
            draws.unwrap_or(ctx.config.predict.draws),
        ),
        Command::Simulate {
            scenario,
            replicates,
            out,
        } => simulate(&ctx, scenario, *replicates, &required(out.as_ref(), io.output.as_ref(), "out")?),
        Command::Benchmark { out } => benchmark(cli, &ctx, &required(out.as_ref(), io.output.as_ref(), "out")?),
        Command::KernelExport { inputs, out, normalized } => kernel_export(
            &ctx,
            &required(inputs.as_ref(), io.inputs.as_ref(), "inputs")?,
            &required(out.as_ref(), io.output.as_ref(), "out")?,
            *normalized,
        ),
    }
}

/// Runs the sampler as configured on `data`, returning every stored draw.
pub fn fit(config: &RunConfig, data: &Dataset, seed: u64, workers: usize) -> Result<PosteriorSampleSet> {
    let priors = config.model.priors.resolve(&data.bounds())?;
    let spec = config.model.spec();
    let mut mcmc = config.mcmc.to_config();
    if matches!(spec.noise, NoiseChoice::Fixed { .. }) {
        mcmc.infer_tau2 = false;
    }
    let mut settings = config.solver.settings(workers)?;
    settings.seed = seed;
    let (beta, theta) = initial_state(&spec, data, &priors, seed)?;
    log::info!("sampling {} iterations on {} observations", mcmc.iterations, data.len());
    mcmc_run(data, &priors, beta, theta, &mcmc, &settings, seed ^ 0x5EED)
}

fn train(ctx: &Context, data_path: &Path, out: &Path) -> Result<()> {
    let data = read_dataset(data_path)?;
    let set = fit(&ctx.config, &data, ctx.seed, ctx.workers)?;
    let manifest = json!({
        "command": "train",
        "version": VERSION,
        "seed": ctx.seed,
        "config_sha256": ctx.config_hash,
        "data_sha256": sha256_file(data_path)?,
        "observations": data.len(),
        "iterations": ctx.config.mcmc.iterations,
        "thin": ctx.config.mcmc.thin,
        "burn_in": set.burn_in,
        "retained": set.retained().len(),
        "acceptance": set.acceptance,
    });
    let mut staging = Staging::new();
    staging.write(&out.join("samples.jsonl"), |w| write_jsonl(w, set.retained()))?;
    staging.write(&out.join("trace.csv"), |w| write_trace(w, &set.draws, set.burn_in))?;
    staging.write(&out.join("manifest.json"), |w| write_json(w, &manifest))?;
    staging.commit()
}

/// `m` indices spread evenly over `0..n`, all of them when `m` is 0 or
/// at least `n`.
fn even_subset(n: usize, m: usize) -> Vec<usize> {
    if m == 0 || m >= n {
        (0..n).collect()
    } else {
        (0..m).map(|i| i * n / m).collect()
    }
}

struct Prediction {
    mean: Vec<f64>,
    sd: Vec<f64>,
    draws: Vec<Vec<f64>>,
}

fn predict(
    ctx: &Context,
    samples_path: &Path,
    data_path: &Path,
    query_path: &Path,
    out: &Path,
    unconditional: bool,
    k: usize,
) -> Result<()> {
    let all = read_jsonl(samples_path)?;
    if all.is_empty() {
        return Err(Error::Data(format!("{}: no posterior draws", samples_path.display())));
    }
    let samples: Vec<Draw> = even_subset(all.len(), ctx.config.predict.max_samples)
        .into_iter()
        .map(|i| all[i].clone())
        .collect();
    let data = read_dataset(data_path)?;
    let (query, w) = read_query(query_path, &data)?;
    let mut settings = ctx.config.solver.settings(ctx.workers)?;
    settings.seed = ctx.seed;

    let pred = if query.is_empty() {
        Prediction {
            mean: Vec::new(),
            sd: Vec::new(),
            draws: vec![Vec::new(); k],
        }
    } else if unconditional {
        prior_mixture(&samples, &query, &w, k, ctx.seed)?
    } else {
        let per = k.div_ceil(samples.len());
        let r = predict_conditional(&samples, &data, &query, &w, per, ctx.seed, &settings)?;
        // Simulations come grouped by posterior draw; interleave them so a
        // prefix of the columns spreads over all draws.
        let used = r.per_draw.len();
        let draws = if k == 0 || r.draws.is_empty() {
            Vec::new()
        } else {
            let order: Vec<usize> = (0..per).flat_map(|rep| (0..used).map(move |s| s * per + rep)).collect();
            (0..k).map(|j| r.draws[order[j % order.len()]].clone()).collect()
        };
        Prediction {
            mean: r.mean,
            sd: r.sd,
            draws,
        }
    };

    let mut staging = Staging::new();
    staging.write(out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Data(e.to_string());
        let mut header: Vec<String> = (1..=query.dim()).map(|j| format!("x{j}")).collect();
        header.extend(["post_mean".to_string(), "post_sd".to_string()]);
        header.extend((1..=k).map(|j| format!("draw_{j}")));
        csv.write_record(&header).map_err(err)?;
        for i in 0..query.len() {
            let mut row: Vec<String> = query.row(i).iter().map(|v| v.to_string()).collect();
            row.push(pred.mean[i].to_string());
            row.push(pred.sd[i].to_string());
            row.extend(pred.draws.iter().map(|d| d[i].to_string()));
            csv.write_record(&row).map_err(err)?;
        }
        csv.flush().map_err(|e| Error::Data(e.to_string()))
    })?;
    staging.commit()
}

/// Prior predictive under the posterior draws: mixture moments of
/// `N(W beta, C_y)` and `k` simulations assigned to draws round-robin.
fn prior_mixture(
    samples: &[Draw],
    query: &Inputs,
    w: &nalgebra::DMatrix<f64>,
    k: usize,
    seed: u64,
) -> Result<Prediction> {
    let m = query.len();
    let l = samples.len() as f64;
    let mut mean = vec![0.0; m];
    let mut second = vec![0.0; m];
    for d in samples {
        let mu = w * DVector::from_column_slice(&d.beta);
        for j in 0..m {
            let v = y_kernel_eval(&d.theta, query.point(j), query.point(j));
            mean[j] += mu[j] / l;
            second[j] += (v + mu[j] * mu[j]) / l;
        }
    }
    let sd = mean.iter().zip(&second).map(|(a, s)| (s - a * a).max(0.0).sqrt()).collect();
    let used = samples.len().min(k);
    let mut samplers = Vec::with_capacity(used);
    let mut rngs = Vec::with_capacity(used);
    for (s, d) in samples.iter().take(used).enumerate() {
        samplers.push(UnconditionalSampler::new(&d.beta, &d.theta, query, w)?);
        rngs.push(ChaCha8Rng::seed_from_u64(seed ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    }
    let draws = (0..k).map(|j| samplers[j % used].draw(&mut rngs[j % used])).collect();
    Ok(Prediction { mean, sd, draws })
}

fn simulate(ctx: &Context, tag: &str, replicates: usize, out: &Path) -> Result<()> {
    let scenario: Scenario = tag.parse()?;
    let spec = scenario.spec();
    let mut staging = Staging::new();
    for r in 0..replicates {
        let d = generate_scenario_draw(&spec, derive_seed(ctx.seed, scenario, r, 0))?;
        let stem = format!("{}_rep{r}", scenario.tag());
        staging.write(&out.join(format!("{stem}_train.csv")), |w| write_pairs(w, &d.train_x, &d.train_z, ["x1", "z"]))?;
        staging.write(&out.join(format!("{stem}_test.csv")), |w| write_pairs(w, &d.test_x, &d.test_truth, ["x1", "y"]))?;
    }
    staging.commit()
}

fn write_pairs(w: &mut dyn Write, xs: &[f64], ys: &[f64], names: [&str; 2]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Data(e.to_string());
    csv.write_record(names).map_err(err)?;
    for (x, y) in xs.iter().zip(ys) {
        csv.write_record([x.to_string(), y.to_string()]).map_err(err)?;
    }
    csv.flush().map_err(|e| Error::Data(e.to_string()))
}

fn benchmark(cli: &Cli, ctx: &Context, out: &Path) -> Result<()> {
    let mut cfg = ctx.config.benchmark.clone();
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.workers = ctx.workers;
    let table = run_benchmark(&cfg)?;
    let manifest = json!({
        "command": "benchmark",
        "version": VERSION,
        "seed": cfg.seed,
        "config_sha256": ctx.config_hash,
        "scenarios": cfg.scenarios.iter().map(|s| s.tag()).collect::<Vec<_>>(),
        "models": cfg.models.iter().map(|m| m.tag()).collect::<Vec<_>>(),
        "replicates": cfg.replicates,
        "iterations": cfg.mcmc.iterations,
    });
    let mut staging = Staging::new();
    staging.write(&out.join("scores.csv"), |w| table.write_raw_csv(w))?;
    staging.write(&out.join("summary.csv"), |w| table.write_summary_csv(w))?;
    staging.write(&out.join("manifest.json"), |w| write_json(w, &manifest))?;
    staging.commit()
}

/// `C_sparse` scaled to unit diagonal; the diagonal is set to exactly 1.
fn normalized_sparse(inputs: &Inputs, theta: &KernelHyperparameters, ctx: &Context) -> Result<SparseSymmetricMatrix> {
    let sparse_only = KernelHyperparameters {
        core: CoreKernelParams::Constant,
        sparse: theta.sparse.clone(),
        noise: NoiseParams::default(),
    };
    let plan = ctx.config.solver.settings(ctx.workers)?.plan;
    let c = assemble_covariance(inputs, &sparse_only, &plan, false)?;
    let diag = c.diagonal();
    if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::Data(format!("sparse kernel vanishes at input row {}; cannot normalize", i + 1)));
    }
    let s: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let scaled = c.scaled_symmetric(&s);
    let mut triplets = Vec::with_capacity(scaled.nnz());
    for i in 0..scaled.dim() {
        for (&j, &v) in scaled.row_cols(i).iter().zip(scaled.row_values(i)) {
            triplets.push((i, j, if i == j { 1.0 } else { v }));
        }
    }
    SparseSymmetricMatrix::from_triplets(scaled.dim(), triplets)
}

fn kernel_export(ctx: &Context, inputs_path: &Path, out: &Path, normalized: bool) -> Result<()> {
    let theta = ctx
        .config
        .kernel
        .as_ref()
        .ok_or_else(|| Error::Config("kernel-export needs hyperparameters under [kernel]".into()))?;
    let inputs = read_inputs(inputs_path)?;
    theta.validate(inputs.dim())?;
    let matrix = if normalized {
        normalized_sparse(&inputs, theta, ctx)?
    } else {
        let plan = ctx.config.solver.settings(ctx.workers)?.plan;
        assemble_covariance(&inputs, theta, &plan, false)?
    };
    let fraction = matrix.sparsity_fraction();
    let mut staging = Staging::new();
    staging.write(out, |w| {
        write_matrix_market_annotated(&matrix, &[format!("sparsity_fraction {fraction}")], w).map_err(|e| Error::io(out, e))
    })?;
    staging.commit()?;
    println!("sparsity_fraction {fraction}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_subset_spreads() {
        assert_eq!(even_subset(10, 0), (0..10).collect::<Vec<_>>());
        assert_eq!(even_subset(10, 5), vec![0, 2, 4, 6, 8]);
        assert_eq!(even_subset(3, 5), vec![0, 1, 2]);
    }

    #[test]
    fn exit_classes() {
        assert_eq!(classify(&Error::Config("x".into())).0, 2);
        assert_eq!(classify(&Error::Data("x".into())).0, 3);
        assert_eq!(classify(&Error::NotPositiveDefinite("x".into())).0, 4);
        assert_eq!(classify(&Error::TooLargeForDense { n: 1, limit: 0 }).0, 4);
    }
}
