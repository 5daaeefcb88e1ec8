//! Command-line front end: argument parsing, config layering and the six
//! subcommands. `main.rs` only maps the result to an exit code.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gbpn::config::RunConfig;
use gbpn::io::{read_raster, read_sparse, sample_sparse, write_raster, GUIDE_PGM_SCALE};
use gbpn::metrics::evaluate;
use gbpn::pipeline::{build_mrf, complete, sweep_density};
use gbpn::synth::{piecewise_planar, SynthConfig};
use gbpn::{oracle, DepthGrid64, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "GBPN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gbpn", version, about = "Depth completion by Gaussian belief propagation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Complete sparse depth; writes the posterior mean and precision.
    Complete {
        #[arg(long)]
        guide: PathBuf,
        #[arg(long)]
        sparse: PathBuf,
        #[arg(long)]
        out_mu: PathBuf,
        #[arg(long)]
        out_lambda: PathBuf,
        /// Write the per-iteration trace here instead of stdout.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Exact posterior mean of the MRF `complete` would build.
    Oracle {
        #[arg(long)]
        guide: PathBuf,
        #[arg(long)]
        sparse: PathBuf,
        #[arg(long)]
        out_mu: PathBuf,
        /// Relative residual bound for the linear solve.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Draw a uniform sparse sample from a dense ground truth.
    Sample {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Meters per unit for 16-bit PGM depth.
        #[arg(long, default_value_t = gbpn::io::KITTI_DEPTH_SCALE)]
        depth_scale: f64,
    },
    /// Score a prediction against ground truth.
    Eval {
        #[arg(long)]
        pred_mu: PathBuf,
        #[arg(long)]
        pred_lambda: Option<PathBuf>,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = gbpn::metrics::DEFAULT_THETAS)]
        thetas: Vec<f64>,
        #[arg(long, default_value_t = gbpn::metrics::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = gbpn::io::KITTI_DEPTH_SCALE)]
        depth_scale: f64,
        #[arg(long)]
        json: bool,
    },
    /// Seed-averaged metrics over several sample sizes, as a TSV table.
    SweepDensity {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        guide: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        points: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a piecewise-planar scene with exact depth.
    Synth {
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 160)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        regions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_guide: PathBuf,
        #[arg(long)]
        out_depth: PathBuf,
    },
}

/// Config file plus per-key overrides. Every [`RunConfig`] key has a flag.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// `key = value` file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the effective config here (default: stderr).
    #[arg(long)]
    pub echo_config: Option<PathBuf>,

    #[arg(long)]
    pub iterations: Option<String>,
    #[arg(long)]
    pub nonlocal_steps: Option<String>,
    #[arg(long)]
    pub epsilon_cavity: Option<String>,
    #[arg(long)]
    pub early_stop_tol: Option<String>,
    #[arg(long)]
    pub record_trace: Option<String>,
    #[arg(long)]
    pub w_meas: Option<String>,
    #[arg(long)]
    pub lambda_smooth: Option<String>,
    #[arg(long)]
    pub sigma_color: Option<String>,
    #[arg(long)]
    pub w_min: Option<String>,
    #[arg(long)]
    pub beta_const: Option<String>,
    #[arg(long)]
    pub connectivity: Option<String>,
    #[arg(long)]
    pub k_nonlocal: Option<String>,
    #[arg(long)]
    pub search_radius: Option<String>,
    #[arg(long)]
    pub patch_radius: Option<String>,
    #[arg(long)]
    pub min_distance: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub depth_scale: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub thetas: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 19] {
        [
            ("iterations", &self.iterations),
            ("nonlocal_steps", &self.nonlocal_steps),
            ("epsilon_cavity", &self.epsilon_cavity),
            ("early_stop_tol", &self.early_stop_tol),
            ("record_trace", &self.record_trace),
            ("w_meas", &self.w_meas),
            ("lambda_smooth", &self.lambda_smooth),
            ("sigma_color", &self.sigma_color),
            ("w_min", &self.w_min),
            ("beta_const", &self.beta_const),
            ("connectivity", &self.connectivity),
            ("k_nonlocal", &self.k_nonlocal),
            ("search_radius", &self.search_radius),
            ("patch_radius", &self.patch_radius),
            ("min_distance", &self.min_distance),
            ("seed", &self.seed),
            ("depth_scale", &self.depth_scale),
            ("alpha", &self.alpha),
            ("thetas", &self.thetas),
        ]
    }

    /// File values first, then flags, then validation.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                RunConfig::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v).map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    fn echo(&self, cfg: &RunConfig) -> Result<(), CliError> {
        let text = cfg.to_text();
        match &self.echo_config {
            Some(path) => fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
            None => {
                eprint!("# effective config\n{text}");
                Ok(())
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter(_) | Error::InvalidDimension { .. } => CliError::Usage(msg),
            Error::Singular(_) | Error::NotConverged(_) | Error::SizeExceeded(_) => CliError::Numeric(msg),
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::ShapeMismatch(_)
            | Error::Validation(_)
            | Error::EmptyValidSet
            | Error::InsufficientValid { .. } => CliError::Io(msg),
        }
    }
}

/// Sizes the global rayon pool from [`THREADS_ENV`], if set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Complete {
            guide,
            sparse,
            out_mu,
            out_lambda,
            trace_out,
            run,
        } => cmd_complete(&guide, &sparse, &out_mu, &out_lambda, trace_out.as_deref(), &run),
        Command::Oracle {
            guide,
            sparse,
            out_mu,
            tol,
            run,
        } => cmd_oracle(&guide, &sparse, &out_mu, tol, &run),
        Command::Sample {
            gt,
            points,
            seed,
            out,
            depth_scale,
        } => cmd_sample(&gt, points, seed, &out, depth_scale),
        Command::Eval {
            pred_mu,
            pred_lambda,
            gt,
            thetas,
            alpha,
            depth_scale,
            json,
        } => cmd_eval(&pred_mu, pred_lambda.as_deref(), &gt, &thetas, alpha, depth_scale, json),
        Command::SweepDensity {
            gt,
            guide,
            points,
            seeds,
            out,
            run,
        } => cmd_sweep_density(&gt, &guide, &points, seeds, out.as_deref(), &run),
        Command::Synth {
            height,
            width,
            regions,
            seed,
            out_guide,
            out_depth,
        } => cmd_synth(height, width, regions, seed, &out_guide, &out_depth),
    }
}

fn read_inputs(guide: &Path, sparse: &Path, cfg: &RunConfig) -> Result<(DepthGrid64, DepthGrid64), CliError> {
    let guide = read_raster::<f64>(guide, GUIDE_PGM_SCALE)?;
    let sparse = read_sparse::<f64>(sparse, guide.height(), guide.width(), cfg.depth_scale)?;
    Ok((guide, sparse))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

pub fn cmd_complete(
    guide: &Path,
    sparse: &Path,
    out_mu: &Path,
    out_lambda: &Path,
    trace_out: Option<&Path>,
    run: &RunArgs,
) -> Result<(), CliError> {
    let cfg = run.resolve()?;
    run.echo(&cfg)?;
    let (guide, sparse) = read_inputs(guide, sparse, &cfg)?;
    let done = complete(&guide, &sparse, &cfg)?;
    write_raster(out_mu, &done.mean, cfg.depth_scale)?;
    write_raster(out_lambda, &done.precision, 1.0)?;
    if cfg.record_trace {
        let mut text = String::from("iteration\tmax_delta_mu\tmean_lambda\telapsed_ms\n");
        for row in &done.solution.trace {
            writeln!(text, "{}", row.to_tsv()).unwrap();
        }
        write_text(trace_out, &text)?;
    }
    log::info!(
        "{} iterations, coverage {:.4}",
        done.solution.iterations_run,
        done.solution.beliefs.coverage()
    );
    Ok(())
}

pub fn cmd_oracle(guide: &Path, sparse: &Path, out_mu: &Path, tol: f64, run: &RunArgs) -> Result<(), CliError> {
    let cfg = run.resolve()?;
    run.echo(&cfg)?;
    let (guide, sparse) = read_inputs(guide, sparse, &cfg)?;
    let (graph, params) = build_mrf(&guide, &sparse, &cfg)?;
    let sys = oracle::assemble_system(&params, &graph)?;
    let mu = oracle::solve_exact(&sys, tol)?;
    let grid = DepthGrid64::from_values(guide.height(), guide.width(), mu)?;
    write_raster(out_mu, &grid, cfg.depth_scale)?;
    Ok(())
}

pub fn cmd_sample(gt: &Path, points: usize, seed: u64, out: &Path, depth_scale: f64) -> Result<(), CliError> {
    let gt = read_raster::<f64>(gt, depth_scale)?;
    let sparse = sample_sparse(&gt, points, seed)?;
    write_raster(out, &sparse, depth_scale)?;
    Ok(())
}

pub fn cmd_eval(
    pred_mu: &Path,
    pred_lambda: Option<&Path>,
    gt: &Path,
    thetas: &[f64],
    alpha: f64,
    depth_scale: f64,
    json: bool,
) -> Result<(), CliError> {
    if thetas.iter().any(|&t| !(t > 1.0)) {
        return Err(CliError::Usage("thetas must exceed 1".into()));
    }
    let mu = read_raster::<f64>(pred_mu, depth_scale)?;
    let lambda = pred_lambda.map(|p| read_raster::<f64>(p, 1.0)).transpose()?;
    let gt = read_raster::<f64>(gt, depth_scale)?;
    let report = evaluate(&mu, lambda.as_ref(), &gt, thetas, alpha)?;
    let text = if json {
        let map: serde_json::Map<String, serde_json::Value> = report
            .fields()
            .into_iter()
            .map(|(k, v)| (k, serde_json::Value::from(v)))
            .collect();
        format!("{}\n", serde_json::Value::Object(map))
    } else {
        report.to_key_value()
    };
    write_text(None, &text)
}

pub fn cmd_sweep_density(
    gt: &Path,
    guide: &Path,
    points: &[usize],
    seeds: usize,
    out: Option<&Path>,
    run: &RunArgs,
) -> Result<(), CliError> {
    if seeds == 0 {
        return Err(CliError::Usage("seeds must be at least 1".into()));
    }
    let cfg = run.resolve()?;
    run.echo(&cfg)?;
    let guide = read_raster::<f64>(guide, GUIDE_PGM_SCALE)?;
    let gt = read_raster::<f64>(gt, cfg.depth_scale)?;
    let rows = sweep_density(&gt, &guide, points, seeds, &cfg)?;
    write_text(out, &density_table(&rows))
}

/// Header plus one row per density: GBP metrics, then the nearest-fill
/// baseline's under an `nn_` prefix.
pub fn density_table(rows: &[gbpn::pipeline::DensityRow<f64>]) -> String {
    let mut text = String::new();
    let Some(first) = rows.first() else {
        return text;
    };
    let skip = |k: &str| k == "n_valid";
    let mut header = vec!["points".to_string(), "seeds".to_string()];
    header.extend(first.gbp.fields().into_iter().filter(|(k, _)| !skip(k)).map(|(k, _)| k));
    header.extend(
        first
            .nearest
            .fields()
            .into_iter()
            .filter(|(k, _)| !skip(k))
            .map(|(k, _)| format!("nn_{k}")),
    );
    writeln!(text, "{}", header.join("\t")).unwrap();
    for row in rows {
        let mut cells = vec![row.points.to_string(), row.seeds.to_string()];
        for report in [&row.gbp, &row.nearest] {
            cells.extend(
                report
                    .fields()
                    .into_iter()
                    .filter(|(k, _)| !skip(k))
                    .map(|(_, v)| v.to_string()),
            );
        }
        writeln!(text, "{}", cells.join("\t")).unwrap();
    }
    text
}

pub fn cmd_synth(
    height: usize,
    width: usize,
    regions: usize,
    seed: u64,
    out_guide: &Path,
    out_depth: &Path,
) -> Result<(), CliError> {
    let scene = piecewise_planar::<f64>(&SynthConfig {
        height,
        width,
        regions,
        seed,
        ..SynthConfig::default()
    })?;
    write_raster(out_guide, &scene.guide, GUIDE_PGM_SCALE)?;
    write_raster(out_depth, &scene.depth, gbpn::io::KITTI_DEPTH_SCALE)?;
    Ok(())
}
