//! Sliding-window SIR(D) fitting.
//!
//! For each day `T` the parameters minimizing the pooled squared error of
//! daily infection, recovery and death increments over the preceding window
//! are found by nested grid search. The raw estimates are then smoothed with
//! normalized geometric weights, and the reproduction number implied by the
//! smoothed parameters is robustified by a running median.

use std::fmt::Write as _;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{RegionCode, RegionSeries};
use crate::numfmt::g6;
use crate::sird::{ModelError, SirdParams, Stepper, DEFAULT_STEPS_PER_DAY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("invalid fit configuration: {0}")]
    Config(String),
    #[error("need at least {needed} days of data, have {available}")]
    TooShort { needed: usize, available: usize },
    #[error("negative active count on {date}")]
    NegativeActive { date: NaiveDate },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("estimates csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// Search range and coarse resolution of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamAxis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl ParamAxis {
    pub fn new(lower: f64, upper: f64, points: usize) -> Self {
        ParamAxis { lower, upper, points }
    }

    fn spacing(&self) -> f64 {
        if self.points > 1 {
            (self.upper - self.lower) / (self.points - 1) as f64
        } else {
            0.0
        }
    }

    fn coarse(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points)
            .map(|k| if k + 1 == self.points && self.points > 1 { self.upper } else { self.lower + k as f64 * h })
            .collect()
    }

    /// `points` values centred on `center` at spacing `h`, restricted to the
    /// axis bounds.
    fn around(&self, center: f64, h: f64) -> Vec<f64> {
        let half = (self.points as f64 - 1.0) / 2.0;
        let slack = 1e-12 * (self.upper - self.lower).abs().max(1.0);
        let mut out: Vec<f64> = (0..self.points)
            .map(|k| center + (k as f64 - half) * h)
            .filter(|v| *v >= self.lower - slack && *v <= self.upper + slack)
            .map(|v| v.clamp(self.lower, self.upper))
            .collect();
        out.dedup();
        out
    }
}

/// Nested grid: a coarse grid followed by `refinements` re-centred grids of
/// the same point count, each `shrink` times finer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub beta: ParamAxis,
    pub nu: ParamAxis,
    pub mu: ParamAxis,
    pub refinements: usize,
    pub shrink: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            beta: ParamAxis::new(0.0, 1.5, 31),
            nu: ParamAxis::new(0.0, 0.5, 31),
            mu: ParamAxis::new(0.0, 0.2, 31),
            refinements: 3,
            shrink: 5.0,
        }
    }
}

impl GridSpec {
    fn axes(&self) -> [&ParamAxis; 3] {
        [&self.beta, &self.nu, &self.mu]
    }

    /// Spacing of the last refinement level, per parameter.
    pub fn final_spacing(&self) -> [f64; 3] {
        let scale = self.shrink.powi(self.refinements as i32);
        self.axes().map(|a| a.spacing() / scale)
    }

    pub fn validate(&self) -> Result<(), FitError> {
        for (name, a) in ["beta", "nu", "mu"].iter().zip(self.axes()) {
            if a.points == 0 {
                return Err(FitError::Config(format!("empty grid for {name}")));
            }
            if !(a.lower.is_finite() && a.upper.is_finite()) || a.lower < 0.0 || a.upper < a.lower {
                return Err(FitError::Config(format!(
                    "{name} bounds must be finite with 0 <= lower <= upper, got [{}, {}]",
                    a.lower, a.upper
                )));
            }
        }
        if !(self.shrink.is_finite() && self.shrink > 1.0) {
            return Err(FitError::Config(format!("grid shrink must exceed 1, got {}", self.shrink)));
        }
        Ok(())
    }

    fn contains(&self, p: &SirdParams) -> bool {
        self.axes().iter().zip(p.as_array()).all(|(a, v)| v >= a.lower && v <= a.upper)
    }
}

/// Window for the running median of the reproduction number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "days")]
pub enum MedianMode {
    /// Median of the last `k` days.
    Rolling(usize),
    /// Median of the whole history.
    Cumulative,
}

impl Default for MedianMode {
    fn default() -> Self {
        MedianMode::Rolling(7)
    }
}

impl FromStr for MedianMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cumulative" => Ok(MedianMode::Cumulative),
            other => other
                .strip_prefix("rolling")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|k| *k >= 1)
                .map(MedianMode::Rolling)
                .ok_or_else(|| format!("unknown median mode `{other}`")),
        }
    }
}

impl std::fmt::Display for MedianMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MedianMode::Rolling(k) => write!(f, "rolling{k}"),
            MedianMode::Cumulative => f.write_str("cumulative"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Days of increments per fit; also the smoothing span.
    pub window: usize,
    /// Geometric ratio of the smoother weights.
    pub smooth_factor: f64,
    pub median_mode: MedianMode,
    pub grid: GridSpec,
    pub steps_per_day: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            window: 7,
            smooth_factor: 0.75,
            median_mode: MedianMode::default(),
            grid: GridSpec::default(),
            steps_per_day: DEFAULT_STEPS_PER_DAY,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.window < 3 {
            return Err(FitError::Config(format!("window must be at least 3, got {}", self.window)));
        }
        if !(self.smooth_factor > 0.0 && self.smooth_factor < 1.0) {
            return Err(FitError::Config(format!(
                "smooth factor must lie in (0, 1), got {}",
                self.smooth_factor
            )));
        }
        if self.steps_per_day == 0 {
            return Err(FitError::Config("steps per day must be at least 1".into()));
        }
        if let MedianMode::Rolling(0) = self.median_mode {
            return Err(FitError::Config("rolling median window must be at least 1".into()));
        }
        self.grid.validate()
    }
}

/// Observed data for one window: the anchor state and the increments that
/// follow it.
struct WindowProblem {
    anchor: [f64; 4],
    observed: Vec<[f64; 3]>,
    population: f64,
    steps_per_day: usize,
}

impl WindowProblem {
    fn new(series: &RegionSeries, t: usize, window: usize, steps_per_day: usize) -> Result<Self, FitError> {
        if window == 0 || t < window || t >= series.len() {
            return Err(FitError::TooShort { needed: window + 1, available: t.min(series.len()) + 1 });
        }
        let start = t - window;
        let state = series.state_at(start).map_err(|e| match e {
            ModelError::InvalidState { name: "i", .. } => {
                FitError::NegativeActive { date: series.dates[start] }
            }
            other => FitError::Model(other),
        })?;
        let observed = (start + 1..=t)
            .map(|u| {
                [
                    series.confirmed[u] - series.confirmed[u - 1],
                    series.recovered[u] - series.recovered[u - 1],
                    series.deceased[u] - series.deceased[u - 1],
                ]
            })
            .collect();
        Ok(WindowProblem {
            anchor: [state.s, state.i, state.r, state.d],
            observed,
            population: series.population,
            steps_per_day,
        })
    }

    /// Pooled squared error, or `None` once the running sum exceeds `bound`.
    fn rss_bounded(&self, params: &SirdParams, bound: f64) -> Option<f64> {
        let stepper = Stepper::new(*params, self.population, self.steps_per_day);
        let mut x = self.anchor;
        let mut rss = 0.0;
        for obs in &self.observed {
            let (ever0, r0, d0) = (x[1] + x[2] + x[3], x[2], x[3]);
            stepper.advance_day(&mut x);
            let ei = (x[1] + x[2] + x[3] - ever0) - obs[0];
            let er = (x[2] - r0) - obs[1];
            let ed = (x[3] - d0) - obs[2];
            rss += ei * ei + er * er + ed * ed;
            if rss > bound {
                return None;
            }
        }
        Some(rss)
    }

    fn is_stationary(&self) -> bool {
        self.anchor[1] == 0.0
    }
}

/// Pooled squared error between model and observed daily increments over
/// the `window` days ending at day index `t`, integrating from the observed
/// state on day `t - window`.
pub fn window_rss(
    params: &SirdParams,
    series: &RegionSeries,
    t: usize,
    window: usize,
    steps_per_day: usize,
) -> Result<f64, FitError> {
    params.validate()?;
    if steps_per_day == 0 {
        return Err(FitError::Config("steps per day must be at least 1".into()));
    }
    let problem = WindowProblem::new(series, t, window, steps_per_day)?;
    Ok(problem.rss_bounded(params, f64::INFINITY).expect("unbounded"))
}

/// Result of one window fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowFit {
    pub params: SirdParams,
    pub rss: f64,
    /// The minimizer sits on an upper grid bound.
    pub saturated: bool,
}

#[derive(Clone, Copy)]
struct Best {
    params: [f64; 3],
    rss: f64,
}

impl Best {
    fn offer(&mut self, params: [f64; 3], rss: f64) {
        if rss < self.rss || (rss == self.rss && params < self.params) {
            self.params = params;
            self.rss = rss;
        }
    }
}

fn search_grid(problem: &WindowProblem, axes: &[Vec<f64>; 3], best: &mut Best) {
    for &beta in &axes[0] {
        for &nu in &axes[1] {
            for &mu in &axes[2] {
                let p = [beta, nu, mu];
                if let Some(rss) = problem.rss_bounded(&SirdParams::from_array(p), best.rss) {
                    best.offer(p, rss);
                }
            }
        }
    }
}

/// Minimizes [`window_rss`] at day index `t` by nested grid search. Ties go
/// to the lexicographically smallest `(beta, nu, mu)`.
pub fn fit_window(series: &RegionSeries, t: usize, config: &FitConfig) -> Result<WindowFit, FitError> {
    config.validate()?;
    let problem = WindowProblem::new(series, t, config.window, config.steps_per_day)?;
    Ok(search(&problem, &config.grid))
}

fn search(problem: &WindowProblem, grid: &GridSpec) -> WindowFit {
    let axes = grid.axes();
    let mut best = Best { params: [f64::INFINITY; 3], rss: f64::INFINITY };
    if problem.is_stationary() {
        // No active infections: every parameter set predicts zero increments.
        let corner = axes.map(|a| a.lower);
        let rss = problem.rss_bounded(&SirdParams::from_array(corner), f64::INFINITY).expect("unbounded");
        best.offer(corner, rss);
    } else {
        let coarse = axes.map(ParamAxis::coarse);
        search_grid(problem, &coarse, &mut best);
        let mut spacing = axes.map(ParamAxis::spacing);
        for _ in 0..grid.refinements {
            for h in spacing.iter_mut() {
                *h /= grid.shrink;
            }
            let fine = [
                axes[0].around(best.params[0], spacing[0]),
                axes[1].around(best.params[1], spacing[1]),
                axes[2].around(best.params[2], spacing[2]),
            ];
            search_grid(problem, &fine, &mut best);
        }
    }
    let saturated = axes.iter().zip(best.params).any(|(a, v)| a.upper > a.lower && v >= a.upper);
    WindowFit { params: SirdParams::from_array(best.params), rss: best.rss, saturated }
}

/// Normalized geometric smoothing: the value at `T` is the weighted mean of
/// `raw[T-span+1..=T]` with weights `factor^(T-j)`, the window shrinking to
/// what is available at the head.
pub fn smooth_series(raw: &[SirdParams], factor: f64, span: usize) -> Vec<SirdParams> {
    assert!(span >= 1, "smoothing span must be at least 1");
    (0..raw.len())
        .map(|t| {
            let from = (t + 1).saturating_sub(span);
            // Averaging deviations from the oldest value keeps a constant
            // input exactly constant.
            let anchor = raw[from].as_array();
            let mut acc = [0.0; 3];
            let mut total = 0.0;
            let mut w = 1.0;
            for j in (from..=t).rev() {
                let v = raw[j].as_array();
                for c in 0..3 {
                    acc[c] += w * (v[c] - anchor[c]);
                }
                total += w;
                w *= factor;
            }
            SirdParams::from_array(std::array::from_fn(|c| anchor[c] + acc[c] / total))
        })
        .collect()
}

/// Median with the mean-of-central-pair convention; `None` for no values.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Running median over the defined values of `r0_raw`.
pub fn robust_r0(r0_raw: &[Option<f64>], mode: MedianMode) -> Vec<Option<f64>> {
    let mut buf = Vec::new();
    (0..r0_raw.len())
        .map(|t| {
            let from = match mode {
                MedianMode::Rolling(k) => (t + 1).saturating_sub(k.max(1)),
                MedianMode::Cumulative => 0,
            };
            buf.clear();
            buf.extend(r0_raw[from..=t].iter().flatten().copied());
            median(&mut buf)
        })
        .collect()
}

/// Daily estimates for one region.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateSeries {
    pub region: Option<RegionCode>,
    pub dates: Vec<NaiveDate>,
    pub raw: Vec<SirdParams>,
    pub smoothed: Vec<SirdParams>,
    /// `r0_of(smoothed)`; `None` where `nu + mu = 0`.
    pub r0_raw: Vec<Option<f64>>,
    pub r0_robust: Vec<Option<f64>>,
    pub rss: Vec<f64>,
    pub saturated: Vec<bool>,
    /// Dates whose window fit failed and were left out.
    pub failures: Vec<(NaiveDate, String)>,
}

pub const ESTIMATES_HEADER: &str = "region,date,beta_raw,nu_raw,mu_raw,beta,nu,mu,r0_raw,r0_robust,rss";

impl EstimateSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn saturated_count(&self) -> usize {
        self.saturated.iter().filter(|s| **s).count()
    }

    /// CSV with six significant digits; undefined R0 is an empty field.
    pub fn to_csv(&self) -> String {
        let region = self.region.as_ref().map(RegionCode::as_str).unwrap_or("");
        let opt = |v: Option<f64>| v.map(g6).unwrap_or_default();
        let mut out = String::from(ESTIMATES_HEADER);
        out.push('\n');
        for t in 0..self.len() {
            let (r, s) = (&self.raw[t], &self.smoothed[t]);
            let _ = writeln!(
                out,
                "{region},{},{},{},{},{},{},{},{},{},{}",
                self.dates[t],
                g6(r.beta),
                g6(r.nu),
                g6(r.mu),
                g6(s.beta),
                g6(s.nu),
                g6(s.mu),
                opt(self.r0_raw[t]),
                opt(self.r0_robust[t]),
                g6(self.rss[t]),
            );
        }
        out
    }

    /// Parses the output of [`EstimateSeries::to_csv`].
    pub fn from_csv(text: &str) -> Result<EstimateSeries, FitError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some(ESTIMATES_HEADER) {
            return Err(FitError::Csv { line: 1, message: format!("expected header `{ESTIMATES_HEADER}`") });
        }
        let mut out = EstimateSeries::default();
        for (k, line) in lines.enumerate() {
            let line_no = k + 2;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| FitError::Csv { line: line_no, message };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(err("expected 11 fields".into()));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            if !f[0].is_empty() && out.region.is_none() {
                out.region = Some(f[0].parse().map_err(|e| err(format!("{e}")))?);
            }
            out.dates.push(
                NaiveDate::parse_from_str(f[1], "%Y-%m-%d").map_err(|_| err(format!("bad date `{}`", f[1])))?,
            );
            out.raw.push(SirdParams { beta: num(f[2])?, nu: num(f[3])?, mu: num(f[4])? });
            out.smoothed.push(SirdParams { beta: num(f[5])?, nu: num(f[6])?, mu: num(f[7])? });
            out.r0_raw.push(opt(f[8])?);
            out.r0_robust.push(opt(f[9])?);
            out.rss.push(num(f[10])?);
            out.saturated.push(false);
        }
        Ok(out)
    }
}

/// Refits every day from index `window` to the end, then smooths and
/// robustifies. Days whose window fit fails are recorded and skipped.
pub fn fit_region(series: &RegionSeries, config: &FitConfig) -> Result<EstimateSeries, FitError> {
    config.validate()?;
    if series.len() < config.window + 1 {
        return Err(FitError::TooShort { needed: config.window + 1, available: series.len() });
    }
    let mut out = EstimateSeries { region: Some(series.region.clone()), ..Default::default() };
    for t in config.window..series.len() {
        match WindowProblem::new(series, t, config.window, config.steps_per_day) {
            Ok(problem) => {
                let fit = search(&problem, &config.grid);
                debug_assert!(config.grid.contains(&fit.params));
                out.dates.push(series.dates[t]);
                out.raw.push(fit.params);
                out.rss.push(fit.rss);
                out.saturated.push(fit.saturated);
            }
            Err(e) => {
                log::warn!("{}: fit failed on {}: {e}", series.region, series.dates[t]);
                out.failures.push((series.dates[t], e.to_string()));
            }
        }
    }
    out.smoothed = smooth_series(&out.raw, config.smooth_factor, config.window);
    out.r0_raw = out.smoothed.iter().map(SirdParams::r0).collect();
    out.r0_robust = robust_r0(&out.r0_raw, config.median_mode);
    Ok(out)
}
