//! Reading and repairing per-region cumulative count tables.
//!
//! Two layouts are accepted:
//!
//! * **long**: header `date,region,confirmed,recovered,deceased`, one row per
//!   region and day with cumulative counts.
//! * **wide**: the covid19india `states_daily` layout. Columns `Date_YMD`
//!   (or `Date` as `14-Mar-20`), `Status` (`Confirmed`/`Recovered`/`Deceased`)
//!   and one column of *daily* counts per region code. `TT` (national total)
//!   and `UN` (unassigned) are ignored, `DD` is folded into `DN`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sird::{CompartmentState, IncrementSeries, ModelError};

/// One fit window plus one day.
pub const MIN_CLEAN_ROWS: usize = 8;

/// The 36 state and union-territory codes used by covid19india.
pub const REGION_CODES: [&str; 36] = [
    "AN", "AP", "AR", "AS", "BR", "CH", "CT", "DL", "DN", "GA", "GJ", "HP", "HR", "JH", "JK", "KA",
    "KL", "LA", "LD", "MH", "ML", "MN", "MP", "MZ", "NL", "OR", "PB", "PY", "RJ", "SK", "TG", "TN",
    "TR", "UP", "UT", "WB",
];

const WIDE_IGNORED: [&str; 2] = ["TT", "UN"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("unknown region code `{0}`")]
    UnknownRegion(String),
    #[error("duplicate entry for ({region}, {date})")]
    Duplicate { region: String, date: String },
    #[error("cannot determine input format from header `{0}`")]
    UnknownFormat(String),
    #[error("region {region}: only {rows} usable rows, need at least {MIN_CLEAN_ROWS}")]
    TooShort { region: RegionCode, rows: usize },
    #[error("region {region}: population {population} does not exceed confirmed count {confirmed}")]
    PopulationTooSmall { region: RegionCode, population: f64, confirmed: f64 },
    #[error("region {region}: {source}")]
    Model { region: RegionCode, source: ModelError },
}

impl From<csv::Error> for IngestError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        IngestError::Malformed { line, message: e.to_string() }
    }
}

/// A validated two-letter region code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RegionCode(String);

impl RegionCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for RegionCode {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        if REGION_CODES.contains(&up.as_str()) {
            Ok(RegionCode(up))
        } else {
            Err(IngestError::UnknownRegion(s.trim().to_string()))
        }
    }
}

impl TryFrom<String> for RegionCode {
    type Error = IngestError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RegionCode> for String {
    fn from(c: RegionCode) -> String {
        c.0
    }
}

impl fmt::Display for RegionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Long,
    Wide,
}

impl InputFormat {
    /// Guesses the layout from a header line.
    pub fn detect(header: &str) -> Option<InputFormat> {
        let cols: Vec<String> =
            header.trim().split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
        if cols.len() >= 2 && cols[0] == "date" && cols[1] == "region" {
            Some(InputFormat::Long)
        } else if cols.iter().any(|c| c == "status") {
            Some(InputFormat::Wide)
        } else {
            None
        }
    }
}

impl FromStr for InputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "long" | "long-csv" => Ok(InputFormat::Long),
            "wide" | "wide-csv" => Ok(InputFormat::Wide),
            other => Err(format!("unknown input format `{other}`")),
        }
    }
}

/// One raw day of cumulative counts; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub date: NaiveDate,
    pub confirmed: Option<f64>,
    pub recovered: Option<f64>,
    pub deceased: Option<f64>,
}

impl RawRow {
    fn cells(&self) -> [Option<f64>; 3] {
        [self.confirmed, self.recovered, self.deceased]
    }
}

/// Uncleaned rows for one region, sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub region: RegionCode,
    pub rows: Vec<RawRow>,
}

impl RawTable {
    /// Keeps rows within `[start, end]` (either bound optional).
    pub fn restrict(&mut self, start: Option<NaiveDate>, end: Option<NaiveDate>) {
        self.rows.retain(|r| {
            start.is_none_or(|s| r.date >= s) && end.is_none_or(|e| r.date <= e)
        });
    }
}

impl From<&RegionSeries> for RawTable {
    fn from(s: &RegionSeries) -> Self {
        let rows = (0..s.len())
            .map(|t| RawRow {
                date: s.dates[t],
                confirmed: Some(s.confirmed[t]),
                recovered: Some(s.recovered[t]),
                deceased: Some(s.deceased[t]),
            })
            .collect();
        RawTable { region: s.region.clone(), rows }
    }
}

pub fn parse_input(
    path: &Path,
    format: Option<InputFormat>,
) -> Result<BTreeMap<RegionCode, RawTable>, IngestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    parse_str(&text, format)
}

/// Parses file contents. With `format == None` the layout is detected from
/// the header.
pub fn parse_str(
    text: &str,
    format: Option<InputFormat>,
) -> Result<BTreeMap<RegionCode, RawTable>, IngestError> {
    let format = match format {
        Some(f) => f,
        None => {
            let header = text.lines().next().unwrap_or("");
            InputFormat::detect(header)
                .ok_or_else(|| IngestError::UnknownFormat(header.to_string()))?
        }
    };
    match format {
        InputFormat::Long => parse_long(text),
        InputFormat::Wide => parse_wide(text),
    }
}

fn parse_date(field: &str, line: u64) -> Result<NaiveDate, IngestError> {
    let field = field.trim();
    NaiveDate::parse_from_str(field, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(field, "%d-%b-%y"))
        .map_err(|_| IngestError::Malformed { line, message: format!("bad date `{field}`") })
}

fn parse_count(field: &str, line: u64, allow_negative: bool) -> Result<Option<f64>, IngestError> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    let v: f64 = field
        .parse()
        .map_err(|_| IngestError::Malformed { line, message: format!("bad count `{field}`") })?;
    if !v.is_finite() || (!allow_negative && v < 0.0) {
        return Err(IngestError::Malformed { line, message: format!("bad count `{field}`") });
    }
    Ok(Some(v))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes())
}

fn parse_long(text: &str) -> Result<BTreeMap<RegionCode, RawTable>, IngestError> {
    const HEADER: [&str; 5] = ["date", "region", "confirmed", "recovered", "deceased"];
    let mut rdr = reader(text);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(IngestError::Malformed {
            line: 1,
            message: format!("expected header `{}`", HEADER.join(",")),
        });
    }
    let mut tables: BTreeMap<RegionCode, BTreeMap<NaiveDate, RawRow>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != HEADER.len() {
            return Err(IngestError::Malformed { line, message: "wrong number of fields".into() });
        }
        let date = parse_date(&rec[0], line)?;
        let region: RegionCode = rec[1].parse()?;
        let row = RawRow {
            date,
            confirmed: parse_count(&rec[2], line, false)?,
            recovered: parse_count(&rec[3], line, false)?,
            deceased: parse_count(&rec[4], line, false)?,
        };
        let table = tables.entry(region.clone()).or_default();
        if table.insert(date, row).is_some() {
            return Err(IngestError::Duplicate { region: region.0, date: date.to_string() });
        }
    }
    Ok(tables
        .into_iter()
        .map(|(region, rows)| {
            let rows = rows.into_values().collect();
            (region.clone(), RawTable { region, rows })
        })
        .collect())
}

#[derive(Default, Clone, Copy)]
struct DailyCells {
    cells: [Option<f64>; 3],
    seen: [bool; 3],
}

fn parse_wide(text: &str) -> Result<BTreeMap<RegionCode, RawTable>, IngestError> {
    let mut rdr = reader(text);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = find("Date_YMD").or_else(|| find("Date")).ok_or(IngestError::Malformed {
        line: 1,
        message: "missing `Date_YMD` or `Date` column".into(),
    })?;
    let status_col = find("Status")
        .ok_or(IngestError::Malformed { line: 1, message: "missing `Status` column".into() })?;

    // column index -> region it contributes to
    let mut region_cols: Vec<(usize, RegionCode)> = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        if idx == date_col
            || idx == status_col
            || name.eq_ignore_ascii_case("Date")
            || name.eq_ignore_ascii_case("Date_YMD")
        {
            continue;
        }
        let up = name.to_ascii_uppercase();
        if WIDE_IGNORED.contains(&up.as_str()) {
            continue;
        }
        let code = if up == "DD" { "DN".to_string() } else { up };
        region_cols.push((idx, code.parse()?));
    }

    let mut by_date: BTreeMap<NaiveDate, BTreeMap<RegionCode, DailyCells>> = BTreeMap::new();
    let mut seen_status: BTreeMap<(NaiveDate, usize), ()> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != headers.len() {
            return Err(IngestError::Malformed { line, message: "wrong number of fields".into() });
        }
        let date = parse_date(&rec[date_col], line)?;
        let var = match rec[status_col].trim().to_ascii_lowercase().as_str() {
            "confirmed" => 0,
            "recovered" => 1,
            "deceased" => 2,
            other => {
                return Err(IngestError::Malformed { line, message: format!("bad status `{other}`") })
            }
        };
        if seen_status.insert((date, var), ()).is_some() {
            return Err(IngestError::Duplicate {
                region: "*".into(),
                date: format!("{date} {}", ["Confirmed", "Recovered", "Deceased"][var]),
            });
        }
        let day = by_date.entry(date).or_default();
        for (idx, code) in &region_cols {
            let v = parse_count(&rec[*idx], line, true)?;
            let cell = day.entry(code.clone()).or_default();
            cell.seen[var] = true;
            cell.cells[var] = match (cell.cells[var], v) {
                (Some(a), Some(b)) => Some(a + b),
                (a, b) => a.or(b),
            };
        }
    }

    let mut tables: BTreeMap<RegionCode, RawTable> = BTreeMap::new();
    let mut running: BTreeMap<RegionCode, [f64; 3]> = BTreeMap::new();
    for (date, regions) in by_date {
        for (code, daily) in regions {
            let acc = running.entry(code.clone()).or_insert([0.0; 3]);
            let mut cum = [None; 3];
            for v in 0..3 {
                if let Some(inc) = daily.cells[v] {
                    acc[v] += inc;
                    cum[v] = Some(acc[v]);
                }
            }
            let table = tables
                .entry(code.clone())
                .or_insert_with(|| RawTable { region: code.clone(), rows: Vec::new() });
            table.rows.push(RawRow { date, confirmed: cum[0], recovered: cum[1], deceased: cum[2] });
        }
    }
    Ok(tables)
}

/// Region → population table, header `region,population`.
pub fn parse_populations(path: &Path) -> Result<BTreeMap<RegionCode, f64>, IngestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    parse_populations_str(&text)
}

pub fn parse_populations_str(text: &str) -> Result<BTreeMap<RegionCode, f64>, IngestError> {
    let mut rdr = reader(text);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["region", "population"] {
        return Err(IngestError::Malformed {
            line: 1,
            message: "expected header `region,population`".into(),
        });
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(IngestError::Malformed { line, message: "wrong number of fields".into() });
        }
        let region: RegionCode = rec[0].parse()?;
        let pop = parse_count(&rec[1], line, false)?
            .filter(|p| *p > 0.0)
            .ok_or_else(|| IngestError::Malformed { line, message: "bad population".into() })?;
        if out.insert(region.clone(), pop).is_some() {
            return Err(IngestError::Duplicate { region: region.0, date: "-".into() });
        }
    }
    Ok(out)
}

/// Clean, gap-free daily cumulative counts for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSeries {
    pub region: RegionCode,
    pub dates: Vec<NaiveDate>,
    pub confirmed: Vec<f64>,
    pub recovered: Vec<f64>,
    pub deceased: Vec<f64>,
    pub population: f64,
}

impl RegionSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Model state implied by the observations on day `t`.
    pub fn state_at(&self, t: usize) -> Result<CompartmentState, ModelError> {
        CompartmentState::from_cumulative(
            self.confirmed[t],
            self.recovered[t],
            self.deceased[t],
            self.population,
        )
    }

    /// The first `len` days.
    pub fn truncated(&self, len: usize) -> RegionSeries {
        RegionSeries {
            region: self.region.clone(),
            dates: self.dates[..len].to_vec(),
            confirmed: self.confirmed[..len].to_vec(),
            recovered: self.recovered[..len].to_vec(),
            deceased: self.deceased[..len].to_vec(),
            population: self.population,
        }
    }

    /// Checks the clean-series invariants; returns a description of the
    /// first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.len();
        if [self.confirmed.len(), self.recovered.len(), self.deceased.len()] != [n, n, n] {
            return Err("column lengths differ".into());
        }
        for t in 1..n {
            if self.dates[t] != self.dates[t - 1] + Duration::days(1) {
                return Err(format!("date gap before {}", self.dates[t]));
            }
            for (name, col) in
                [("confirmed", &self.confirmed), ("recovered", &self.recovered), ("deceased", &self.deceased)]
            {
                if col[t] < col[t - 1] {
                    return Err(format!("{name} decreases on {}", self.dates[t]));
                }
            }
        }
        for t in 0..n {
            if self.recovered[t] + self.deceased[t] > self.confirmed[t] {
                return Err(format!("recovered + deceased exceeds confirmed on {}", self.dates[t]));
            }
        }
        if let Some(last) = self.confirmed.last() {
            if self.population <= *last {
                return Err("population does not exceed confirmed".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Confirmed,
    Recovered,
    Deceased,
    /// A whole missing day.
    All,
}

const CELL_VARS: [Variable; 3] = [Variable::Confirmed, Variable::Recovered, Variable::Deceased];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairRule {
    /// Missing day filled with the previous day's cumulative values.
    FillMissingDate,
    /// Missing cell filled with the previous day's value.
    CarryForward,
    /// Missing cell on the first day set to zero.
    LeadingZero,
    /// Decrease removed by taking the running maximum.
    RunningMaximum,
    /// Deceased capped at confirmed.
    CapDeceased,
    /// Recovered lowered so that recovered + deceased <= confirmed.
    ReduceRecovered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repair {
    pub region: RegionCode,
    pub date: NaiveDate,
    pub variable: Variable,
    pub original: Option<f64>,
    pub repaired: Option<f64>,
    pub rule: RepairRule,
}

/// Audit trail of every cell changed by [`clean`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CleanReport {
    pub repairs: Vec<Repair>,
}

impl CleanReport {
    pub fn is_empty(&self) -> bool {
        self.repairs.is_empty()
    }

    /// One JSON object per line with keys
    /// `region,date,variable,original,repaired,rule`.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.repairs {
            out.push_str(&serde_json::to_string(r).expect("repair serializes"));
            out.push('\n');
        }
        out
    }
}

/// Repairs a raw table into a [`RegionSeries`]:
///
/// 1. days missing between the first and last row copy the previous day;
///    missing cells carry the previous value forward;
/// 2. each cumulative column becomes its running maximum;
/// 3. deceased is capped at confirmed, then recovered is lowered to the
///    largest non-decreasing series with `recovered + deceased <= confirmed`.
///
/// Each changed cell is logged once, under the last rule that changed it.
pub fn clean(raw: &RawTable, population: f64) -> Result<(RegionSeries, CleanReport), IngestError> {
    let region = raw.region.clone();
    let usable = raw.rows.iter().filter(|r| r.cells().iter().any(Option::is_some)).count();
    if usable < MIN_CLEAN_ROWS {
        return Err(IngestError::TooShort { region, rows: usable });
    }
    let mut rows = raw.rows.clone();
    rows.sort_by_key(|r| r.date);
    let first = rows[0].date;
    let last = rows[rows.len() - 1].date;
    let days = (last - first).num_days() as usize + 1;

    let mut by_date: BTreeMap<NaiveDate, [Option<f64>; 3]> = BTreeMap::new();
    for r in &rows {
        by_date.insert(r.date, r.cells());
    }

    let mut dates = Vec::with_capacity(days);
    let mut original: Vec<Option<[Option<f64>; 3]>> = Vec::with_capacity(days);
    let mut values: Vec<[f64; 3]> = Vec::with_capacity(days);
    let mut rule: Vec<[Option<RepairRule>; 3]> = vec![[None; 3]; days];
    let mut report = CleanReport::default();

    for t in 0..days {
        let date = first + Duration::days(t as i64);
        dates.push(date);
        let cells = by_date.get(&date).copied();
        original.push(cells);
        match cells {
            None => {
                // t > 0 because the first row exists
                values.push(values[t - 1]);
                report.repairs.push(Repair {
                    region: region.clone(),
                    date,
                    variable: Variable::All,
                    original: None,
                    repaired: None,
                    rule: RepairRule::FillMissingDate,
                });
            }
            Some(cells) => {
                let mut row = [0.0; 3];
                for v in 0..3 {
                    row[v] = match cells[v] {
                        Some(x) => x,
                        None if t == 0 => {
                            rule[t][v] = Some(RepairRule::LeadingZero);
                            0.0
                        }
                        None => {
                            rule[t][v] = Some(RepairRule::CarryForward);
                            values[t - 1][v]
                        }
                    };
                }
                values.push(row);
            }
        }
    }

    for v in 0..3 {
        for t in 1..days {
            if values[t][v] < values[t - 1][v] {
                values[t][v] = values[t - 1][v];
                rule[t][v] = Some(RepairRule::RunningMaximum);
            }
        }
    }

    // confirmed is non-decreasing here, so min(deceased, confirmed) stays
    // non-decreasing.
    for t in 0..days {
        if values[t][2] > values[t][0] {
            values[t][2] = values[t][0];
            rule[t][2] = Some(RepairRule::CapDeceased);
        }
    }
    let mut room = f64::INFINITY;
    for t in (0..days).rev() {
        room = room.min(values[t][0] - values[t][2]);
        if values[t][1] > room {
            values[t][1] = room;
            rule[t][1] = Some(RepairRule::ReduceRecovered);
        }
    }

    let mut cell_repairs = Vec::new();
    for t in 0..days {
        let Some(cells) = original[t] else { continue };
        for v in 0..3 {
            let Some(r) = rule[t][v] else { continue };
            if cells[v] != Some(values[t][v]) {
                cell_repairs.push(Repair {
                    region: region.clone(),
                    date: dates[t],
                    variable: CELL_VARS[v],
                    original: cells[v],
                    repaired: Some(values[t][v]),
                    rule: r,
                });
            }
        }
    }
    report.repairs.extend(cell_repairs);
    report.repairs.sort_by(|a, b| a.date.cmp(&b.date).then(var_rank(a.variable).cmp(&var_rank(b.variable))));

    let confirmed_last = values[days - 1][0];
    if !(population.is_finite() && population > confirmed_last) {
        return Err(IngestError::PopulationTooSmall {
            region,
            population,
            confirmed: confirmed_last,
        });
    }
    let series = RegionSeries {
        region,
        dates,
        confirmed: values.iter().map(|r| r[0]).collect(),
        recovered: values.iter().map(|r| r[1]).collect(),
        deceased: values.iter().map(|r| r[2]).collect(),
        population,
    };
    Ok((series, report))
}

fn var_rank(v: Variable) -> u8 {
    match v {
        Variable::All => 0,
        Variable::Confirmed => 1,
        Variable::Recovered => 2,
        Variable::Deceased => 3,
    }
}

/// Long-format CSV of cleaned series, rows ordered by region then date.
/// Values are written at full precision so parsing them back is lossless.
pub fn to_long_csv(series: &[&RegionSeries]) -> String {
    let mut out = String::from("date,region,confirmed,recovered,deceased\n");
    for s in series {
        for t in 0..s.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.dates[t], s.region, s.confirmed[t], s.recovered[t], s.deceased[t]
            ));
        }
    }
    out
}

/// First differences of each cumulative column.
pub fn observed_increments(series: &RegionSeries) -> IncrementSeries {
    let diff = |col: &[f64]| col.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
    IncrementSeries {
        di: diff(&series.confirmed),
        dr: diff(&series.recovered),
        dd: diff(&series.deceased),
    }
}
