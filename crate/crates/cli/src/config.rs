//! Command-line flags, the optional TOML config file, and their merge into
//! one resolved [`RunConfig`]. Flags override file values, which override
//! built-in defaults.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use episird_core::estimation::{FitConfig, GridSpec, MedianMode, ParamAxis};
use episird_core::ingest::{InputFormat, RegionCode};
use episird_core::prediction::DEFAULT_LEVEL;
use episird_core::report::DEFAULT_ZERO_THRESHOLD;
use episird_core::AlignPolicy;

use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "episird", version, about = "Dynamic SIR(D) fitting, forecasting and clustering of regional case counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Fit,
    Predict,
    Cluster,
    Report,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit daily parameters and write one estimates file per region.
    Fit(RunArgs),
    /// Forecast daily increments with empirical bands.
    Predict(RunArgs),
    /// Cluster regions by their reproduction-number trajectories.
    Cluster(RunArgs),
    /// Bin the latest reproduction number of every region.
    Report(RunArgs),
}

impl Command {
    pub fn split(self) -> (CommandKind, RunArgs) {
        match self {
            Command::Fit(a) => (CommandKind::Fit, a),
            Command::Predict(a) => (CommandKind::Predict, a),
            Command::Cluster(a) => (CommandKind::Cluster, a),
            Command::Report(a) => (CommandKind::Report, a),
        }
    }
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Fit => "fit",
            CommandKind::Predict => "predict",
            CommandKind::Cluster => "cluster",
            CommandKind::Report => "report",
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML file with any of the settings below (flag names with `_`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Case-count file (long or wide CSV).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `region,population` CSV.
    #[arg(long)]
    pub populations: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Input layout; detected from the header when omitted.
    #[arg(long, value_parser = ["long", "wide"])]
    pub format: Option<String>,
    /// Comma-separated region codes to process.
    #[arg(long, value_delimiter = ',')]
    pub regions: Option<Vec<String>>,
    /// First date to use (YYYY-MM-DD).
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Last date to use (YYYY-MM-DD).
    #[arg(long)]
    pub end: Option<NaiveDate>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub smooth_factor: Option<f64>,
    /// rolling7, rolling14 or cumulative.
    #[arg(long)]
    pub median: Option<String>,
    #[arg(long)]
    pub steps_per_day: Option<usize>,
    /// Coarse grid points per parameter axis.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Grid refinement levels.
    #[arg(long)]
    pub refinements: Option<usize>,
    /// Forecast horizon in days.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Forecast band level.
    #[arg(long)]
    pub level: Option<f64>,
    /// Fraction of one-step errors dropped from each tail before banding.
    #[arg(long)]
    pub trim: Option<f64>,
    /// One-year forecast; peaks are recorded in the run summary.
    #[arg(long)]
    pub long_term: bool,
    /// intersect or pad.
    #[arg(long)]
    pub align: Option<String>,
    /// Also write a flat cut into this many clusters.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// R0 values below this are reported as effectively zero.
    #[arg(long)]
    pub zero_threshold: Option<f64>,
    /// Report the latest value on or before this date.
    #[arg(long)]
    pub as_of: Option<NaiveDate>,
    /// Refit even when estimates already exist.
    #[arg(long)]
    pub refit: bool,
    /// Worker threads (regions processed in parallel).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileAxis {
    lower: Option<f64>,
    upper: Option<f64>,
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGrid {
    beta: Option<FileAxis>,
    nu: Option<FileAxis>,
    mu: Option<FileAxis>,
    points: Option<usize>,
    refinements: Option<usize>,
    shrink: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    populations: Option<PathBuf>,
    out: Option<PathBuf>,
    format: Option<String>,
    regions: Option<Vec<String>>,
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
    window: Option<usize>,
    smooth_factor: Option<f64>,
    median: Option<String>,
    steps_per_day: Option<usize>,
    grid: Option<FileGrid>,
    horizon: Option<usize>,
    level: Option<f64>,
    trim: Option<f64>,
    long_term: Option<bool>,
    align: Option<String>,
    clusters: Option<usize>,
    zero_threshold: Option<f64>,
    as_of: Option<NaiveDate>,
    refit: Option<bool>,
    jobs: Option<usize>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub populations: PathBuf,
    pub out: PathBuf,
    pub format: Option<InputFormat>,
    pub regions: Option<Vec<RegionCode>>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub fit: FitConfig,
    pub horizon: usize,
    pub level: f64,
    pub trim: Option<f64>,
    pub long_term: bool,
    pub align: AlignPolicy,
    pub clusters: Option<usize>,
    pub zero_threshold: f64,
    pub as_of: Option<NaiveDate>,
    pub refit: bool,
    /// Worker count does not affect outputs, so it is left out of the hash.
    #[serde(skip)]
    pub jobs: usize,
}

const DEFAULT_HORIZON: usize = 14;

impl RunConfig {
    pub fn resolve(args: RunArgs) -> Result<RunConfig, Failure> {
        let file = match &args.config {
            Some(path) => read_file_config(path)?,
            None => FileConfig::default(),
        };

        let required = |flag: Option<PathBuf>, file: Option<PathBuf>, name: &str| {
            flag.or(file).ok_or_else(|| Failure::config(format!("missing --{name}")))
        };
        let data = required(args.data, file.data, "data")?;
        let populations = required(args.populations, file.populations, "populations")?;
        let out = required(args.out, file.out, "out")?;
        for (path, what) in [(&data, "data"), (&populations, "populations")] {
            if !path.is_file() {
                return Err(Failure::config(format!("{what} file {} does not exist", path.display())));
            }
        }

        let format = args
            .format
            .or(file.format)
            .map(|f| f.parse::<InputFormat>().map_err(Failure::config))
            .transpose()?;
        let regions = args
            .regions
            .or(file.regions)
            .map(|list| {
                list.iter()
                    .map(|r| r.trim())
                    .filter(|r| !r.is_empty())
                    .map(|r| r.parse::<RegionCode>().map_err(|e| Failure::config(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;

        let mut fit = FitConfig::default();
        if let Some(w) = args.window.or(file.window) {
            fit.window = w;
        }
        if let Some(f) = args.smooth_factor.or(file.smooth_factor) {
            fit.smooth_factor = f;
        }
        if let Some(m) = args.median.or(file.median) {
            fit.median_mode = m.parse::<MedianMode>().map_err(Failure::config)?;
        }
        if let Some(s) = args.steps_per_day.or(file.steps_per_day) {
            fit.steps_per_day = s;
        }
        let file_grid = file.grid.unwrap_or_default();
        fit.grid = merge_grid(fit.grid, &file_grid, args.grid_points, args.refinements);
        fit.validate().map_err(|e| Failure::config(e.to_string()))?;

        let horizon = args.horizon.or(file.horizon).unwrap_or(DEFAULT_HORIZON);
        let long_term = args.long_term || file.long_term.unwrap_or(false);
        if horizon == 0 {
            return Err(Failure::config("horizon must be at least 1"));
        }
        let level = args.level.or(file.level).unwrap_or(DEFAULT_LEVEL);
        if !(level > 0.0 && level < 1.0) {
            return Err(Failure::config(format!("level must lie in (0, 1), got {level}")));
        }
        let trim = args.trim.or(file.trim);
        if let Some(t) = trim {
            if !(0.0..0.5).contains(&t) {
                return Err(Failure::config(format!("trim must lie in [0, 0.5), got {t}")));
            }
        }
        let align = args
            .align
            .or(file.align)
            .map(|a| a.parse::<AlignPolicy>().map_err(Failure::config))
            .transpose()?
            .unwrap_or_default();
        let clusters = args.clusters.or(file.clusters);
        if clusters == Some(0) {
            return Err(Failure::config("clusters must be at least 1"));
        }
        let zero_threshold = args.zero_threshold.or(file.zero_threshold).unwrap_or(DEFAULT_ZERO_THRESHOLD);
        if !(zero_threshold.is_finite() && zero_threshold >= 0.0) {
            return Err(Failure::config("zero threshold must be a non-negative number"));
        }
        let jobs = match args.jobs.or(file.jobs) {
            Some(0) => return Err(Failure::config("jobs must be at least 1")),
            Some(j) => j,
            None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        };

        Ok(RunConfig {
            data,
            populations,
            out,
            format,
            regions,
            start: args.start.or(file.start),
            end: args.end.or(file.end),
            fit,
            horizon,
            level,
            trim,
            long_term,
            align,
            clusters,
            zero_threshold,
            as_of: args.as_of.or(file.as_of),
            refit: args.refit || file.refit.unwrap_or(false),
            jobs,
        })
    }

    /// SHA-256 of the canonical JSON form of the settings.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn forecast_horizon(&self) -> usize {
        if self.long_term {
            episird_core::prediction::LONG_TERM_HORIZON
        } else {
            self.horizon
        }
    }
}

fn read_file_config(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::config(format!("invalid config {}: {e}", path.display())))
}

fn merge_grid(mut grid: GridSpec, file: &FileGrid, points: Option<usize>, refinements: Option<usize>) -> GridSpec {
    let apply = |axis: &mut ParamAxis, f: Option<FileAxis>| {
        if let Some(p) = points.or(file.points) {
            axis.points = p;
        }
        if let Some(f) = f {
            axis.lower = f.lower.unwrap_or(axis.lower);
            axis.upper = f.upper.unwrap_or(axis.upper);
            if points.is_none() {
                axis.points = f.points.unwrap_or(axis.points);
            }
        }
    };
    apply(&mut grid.beta, file.beta);
    apply(&mut grid.nu, file.nu);
    apply(&mut grid.mu, file.mu);
    if let Some(r) = refinements.or(file.refinements) {
        grid.refinements = r;
    }
    if let Some(s) = file.shrink {
        grid.shrink = s;
    }
    grid
}
