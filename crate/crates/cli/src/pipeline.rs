//! The four batch commands. Regions are processed by a worker pool; each
//! worker owns its region end to end, including its output files, and the
//! run summary is assembled once all workers have joined.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use episird_core::clustering::{align, cut, ward_cluster};
use episird_core::estimation::{fit_region, EstimateSeries};
use episird_core::ingest::{clean, parse_input, parse_populations, CleanReport, IngestError, RegionCode, RegionSeries};
use episird_core::prediction::{forecast, ForecastOptions};
use episird_core::report::{adjacent_agreement, R0Bin, R0Table, PUBLISHED_SPLIT};

use crate::config::{CommandKind, RunConfig};
use crate::failure::{Failure, EXIT_DATA, EXIT_OK, EXIT_PARTIAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionStatus {
    pub region: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(flatten)]
    pub details: BTreeMap<String, Value>,
}

impl RegionStatus {
    fn ok(region: &RegionCode, details: BTreeMap<String, Value>) -> Self {
        RegionStatus { region: region.to_string(), status: Status::Ok, message: None, details }
    }

    fn skipped(region: &RegionCode, message: impl Into<String>) -> Self {
        let message = message.into();
        log::warn!("{region}: skipped: {message}");
        RegionStatus { region: region.to_string(), status: Status::Skipped, message: Some(message), details: BTreeMap::new() }
    }

    fn failed(region: &RegionCode, message: impl Into<String>) -> Self {
        let message = message.into();
        log::error!("{region}: {message}");
        RegionStatus { region: region.to_string(), status: Status::Failed, message: Some(message), details: BTreeMap::new() }
    }
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    tool: &'static str,
    version: &'static str,
    command: CommandKind,
    config_hash: String,
    config: &'a RunConfig,
    wall_time_seconds: f64,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    regions: Vec<RegionStatus>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

/// A selected region after cleaning.
enum Prepared {
    Ready(RegionSeries),
    Done(RegionStatus),
}

pub fn run(kind: CommandKind, config: &RunConfig) -> Result<u8, Failure> {
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Failure::data(anyhow::anyhow!("cannot start worker pool: {e}")))?;

    let (prepared, report) = load(config)?;
    write_file(&config.out.join("clean_report.jsonl"), &report.to_json_lines()).map_err(Failure::data)?;
    log::info!("{} region(s) selected, {} cell repair(s)", prepared.len(), report.repairs.len());

    let outcome = pool.install(|| match kind {
        CommandKind::Fit => run_fit(config, &prepared),
        CommandKind::Predict => run_predict(config, &prepared),
        CommandKind::Cluster => run_cluster(config, &prepared),
        CommandKind::Report => run_report(config, &prepared),
    });

    let any_failed = outcome.regions.iter().any(|r| r.status == Status::Failed);
    let exit_code = match &outcome.fatal {
        Some(_) => EXIT_DATA,
        None if any_failed => EXIT_PARTIAL,
        None => EXIT_OK,
    };
    let summary = RunSummary {
        tool: "episird",
        version: env!("CARGO_PKG_VERSION"),
        command: kind,
        config_hash: config.hash(),
        config,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        exit_code,
        error: outcome.fatal.as_ref().map(|e| format!("{e:#}")),
        regions: outcome.regions,
        extra: outcome.extra,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&config.out.join(format!("{}_summary.json", kind.name())), &text).map_err(Failure::data)?;

    match outcome.fatal {
        Some(error) => Err(Failure { code: EXIT_DATA, error }),
        None => {
            if any_failed {
                eprintln!("error: some regions failed; see {}_summary.json", kind.name());
            }
            Ok(exit_code)
        }
    }
}

struct Outcome {
    regions: Vec<RegionStatus>,
    extra: BTreeMap<String, Value>,
    fatal: Option<anyhow::Error>,
}

impl Outcome {
    fn regions(regions: Vec<RegionStatus>) -> Self {
        Outcome { regions, extra: BTreeMap::new(), fatal: None }
    }
}

/// Parses, filters and cleans the input; region-level problems become
/// statuses, file-level problems end the run.
fn load(config: &RunConfig) -> Result<(Vec<(RegionCode, Prepared)>, CleanReport), Failure> {
    let mut tables = parse_input(&config.data, config.format).map_err(Failure::data)?;
    let populations = parse_populations(&config.populations).map_err(Failure::data)?;

    let wanted: BTreeSet<RegionCode> = match &config.regions {
        Some(list) => list.iter().cloned().collect(),
        None => tables.keys().cloned().collect(),
    };
    if !wanted.iter().any(|r| tables.contains_key(r)) {
        return Err(Failure::config("no regions selected"));
    }

    let mut report = CleanReport::default();
    let mut out = Vec::with_capacity(wanted.len());
    for region in wanted {
        let Some(mut table) = tables.remove(&region) else {
            out.push((region.clone(), Prepared::Done(RegionStatus::skipped(&region, "not present in data"))));
            continue;
        };
        table.restrict(config.start, config.end);
        let Some(&population) = populations.get(&region) else {
            out.push((region.clone(), Prepared::Done(RegionStatus::skipped(&region, "no population entry"))));
            continue;
        };
        let prepared = match clean(&table, population) {
            Ok((series, rep)) => {
                report.repairs.extend(rep.repairs);
                Prepared::Ready(series)
            }
            Err(e @ IngestError::TooShort { .. }) => Prepared::Done(RegionStatus::skipped(&region, e.to_string())),
            Err(e) => Prepared::Done(RegionStatus::failed(&region, e.to_string())),
        };
        out.push((region, prepared));
    }
    Ok((out, report))
}

fn estimates_path(config: &RunConfig, region: &RegionCode) -> PathBuf {
    config.out.join("estimates").join(format!("{region}.csv"))
}

/// Fits the region and writes its estimates file. The returned series is
/// parsed back from the written text so every consumer sees the same values.
fn fit_and_write(config: &RunConfig, series: &RegionSeries) -> anyhow::Result<(EstimateSeries, EstimateSeries)> {
    let fitted = fit_region(series, &config.fit)?;
    if fitted.is_empty() {
        anyhow::bail!("no window could be fitted");
    }
    let text = fitted.to_csv();
    write_file(&estimates_path(config, &series.region), &text)?;
    let stored = EstimateSeries::from_csv(&text)?;
    Ok((fitted, stored))
}

/// Existing estimates for the region, fitting first when absent.
fn estimates_for(config: &RunConfig, series: &RegionSeries) -> anyhow::Result<EstimateSeries> {
    let path = estimates_path(config, &series.region);
    if !config.refit && path.is_file() {
        log::info!("{}: reusing {}", series.region, path.display());
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        return EstimateSeries::from_csv(&text).with_context(|| format!("parsing {}", path.display()));
    }
    fit_and_write(config, series).map(|(_, stored)| stored)
}

/// Runs `work` on every ready region in parallel, keeping region order.
fn per_region<T: Send>(
    prepared: &[(RegionCode, Prepared)],
    work: impl Fn(&RegionSeries) -> anyhow::Result<T> + Sync,
) -> Vec<(RegionCode, Result<T, RegionStatus>)> {
    prepared
        .par_iter()
        .map(|(region, p)| {
            let result = match p {
                Prepared::Ready(series) => {
                    work(series).map_err(|e| RegionStatus::failed(region, format!("{e:#}")))
                }
                Prepared::Done(status) => Err(status.clone()),
            };
            (region.clone(), result)
        })
        .collect()
}

fn run_fit(config: &RunConfig, prepared: &[(RegionCode, Prepared)]) -> Outcome {
    let results = per_region(prepared, |series| {
        let (fitted, _) = fit_and_write(config, series)?;
        for (date, why) in &fitted.failures {
            log::warn!("{}: window ending {date} not fitted: {why}", series.region);
        }
        Ok(BTreeMap::from([
            ("fitted_days".to_string(), json!(fitted.len())),
            ("failed_days".to_string(), json!(fitted.failures.len())),
            ("saturated_days".to_string(), json!(fitted.saturated_count())),
            ("last_date".to_string(), json!(fitted.dates.last())),
        ]))
    });
    Outcome::regions(results.into_iter().map(|(r, res)| res.map_or_else(|s| s, |d| RegionStatus::ok(&r, d))).collect())
}

fn run_predict(config: &RunConfig, prepared: &[(RegionCode, Prepared)]) -> Outcome {
    let opts = ForecastOptions {
        horizon: config.forecast_horizon(),
        level: config.level,
        steps_per_day: config.fit.steps_per_day,
        trim: config.trim,
    };
    let results = per_region(prepared, |series| {
        let estimates = estimates_for(config, series)?;
        let f = forecast(series, &estimates, &opts)?;
        if f.bands.is_none() {
            log::warn!("{}: too few one-step errors for bands", series.region);
        }
        let path = config.out.join("forecasts").join(format!("{}.csv", series.region));
        write_file(&path, &f.to_csv(series.region.as_str()))?;
        Ok(BTreeMap::from([
            ("horizon".to_string(), json!(opts.horizon)),
            ("bands".to_string(), json!(f.bands.is_some())),
            ("one_step_errors".to_string(), json!(f.errors.as_ref().map_or(0, |e| e.len()))),
            ("constraint_repairs".to_string(), json!(f.point.constraint_repairs)),
            ("peak".to_string(), json!(f.peak)),
        ]))
    });
    let regions: Vec<RegionStatus> =
        results.into_iter().map(|(r, res)| res.map_or_else(|s| s, |d| RegionStatus::ok(&r, d))).collect();
    let mut extra = BTreeMap::new();
    if config.long_term {
        let peaks: BTreeMap<&str, &Value> = regions
            .iter()
            .filter_map(|r| r.details.get("peak").map(|p| (r.region.as_str(), p)))
            .collect();
        extra.insert("peaks".to_string(), json!(peaks));
    }
    Outcome { regions, extra, fatal: None }
}

fn run_cluster(config: &RunConfig, prepared: &[(RegionCode, Prepared)]) -> Outcome {
    let results = per_region(prepared, |series| estimates_for(config, series));
    let mut regions = Vec::new();
    let mut fitted = Vec::new();
    for (region, res) in results {
        match res {
            Ok(est) => {
                regions.push(RegionStatus::ok(&region, BTreeMap::new()));
                fitted.push((region.to_string(), est));
            }
            Err(status) => regions.push(status),
        }
    }
    let mut outcome = Outcome::regions(regions);
    match cluster_outputs(config, &fitted) {
        Ok(extra) => outcome.extra = extra,
        Err(e) => outcome.fatal = Some(e),
    }
    outcome
}

fn cluster_outputs(config: &RunConfig, fitted: &[(String, EstimateSeries)]) -> anyhow::Result<BTreeMap<String, Value>> {
    let pairs: Vec<(&str, &EstimateSeries)> = fitted.iter().map(|(r, e)| (r.as_str(), e)).collect();
    let matrix = align(&pairs, config.align)?;
    let dendrogram = ward_cluster(&matrix)?;
    write_file(&config.out.join("dendrogram.json"), &dendrogram.to_json())?;
    write_file(&config.out.join("dendrogram.nwk"), &dendrogram.to_newick())?;
    let mut extra = BTreeMap::from([
        ("aligned_dates".to_string(), json!(matrix.dates.len())),
        ("merges".to_string(), json!(dendrogram.merges.len())),
    ]);
    if let Some(k) = config.clusters {
        let labels = cut(&dendrogram, k)?;
        let mut text = String::from("region,cluster\n");
        for (region, label) in &labels {
            let _ = writeln!(text, "{region},{label}");
        }
        write_file(&config.out.join("clusters.csv"), &text)?;
        extra.insert("clusters".to_string(), json!(labels));
    }
    Ok(extra)
}

/// Latest robust R0 on or before `as_of`, with its date.
fn latest_r0(est: &EstimateSeries, as_of: Option<NaiveDate>) -> Option<(NaiveDate, Option<f64>)> {
    let idx = match as_of {
        Some(limit) => est.dates.iter().rposition(|d| *d <= limit)?,
        None => est.len().checked_sub(1)?,
    };
    Some((est.dates[idx], est.r0_robust[idx]))
}

fn run_report(config: &RunConfig, prepared: &[(RegionCode, Prepared)]) -> Outcome {
    let results = per_region(prepared, |series| estimates_for(config, series));
    let mut regions = Vec::new();
    let mut latest = Vec::new();
    let mut dates = BTreeMap::new();
    for (region, res) in results {
        let r0 = match res {
            Ok(est) => {
                let found = latest_r0(&est, config.as_of);
                let mut details = BTreeMap::new();
                if let Some((date, r0)) = found {
                    details.insert("date".to_string(), json!(date));
                    details.insert("r0_robust".to_string(), json!(r0));
                    dates.insert(region.to_string(), date);
                }
                regions.push(RegionStatus::ok(&region, details));
                found.and_then(|(_, r0)| r0)
            }
            // regions without estimates count as undefined
            Err(status) => {
                regions.push(status);
                None
            }
        };
        latest.push((region.to_string(), r0));
    }

    let table = R0Table::new(&latest, config.zero_threshold);
    let agreement = adjacent_agreement(&table.counts, &PUBLISHED_SPLIT);
    let deviations = table.deviations(&PUBLISHED_SPLIT);
    let counts: Vec<Value> = R0Bin::ALL
        .iter()
        .map(|b| json!({ "bin": b, "label": b.label(), "count": table.counts[b.index()] }))
        .collect();
    let per_region: Vec<Value> = table
        .regions
        .iter()
        .map(|r| json!({ "region": r.region, "date": dates.get(&r.region), "r0_robust": r.r0, "bin": r.bin }))
        .collect();
    let report = json!({
        "as_of": config.as_of,
        "zero_threshold": config.zero_threshold,
        "total": table.total(),
        "counts": counts,
        "regions": per_region,
        "reference_split": PUBLISHED_SPLIT,
        "adjacent_agreement": agreement,
        "deviations": deviations,
    });

    let mut outcome = Outcome::regions(regions);
    let written = write_file(&config.out.join("r0_table.csv"), &table.to_csv()).and_then(|_| {
        write_file(&config.out.join("report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))
    });
    if let Err(e) = written {
        outcome.fatal = Some(e);
    }
    outcome.extra = BTreeMap::from([
        ("adjacent_agreement".to_string(), json!(agreement)),
        ("deviations".to_string(), json!(deviations)),
    ]);
    outcome
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
