//! Noise-free regional series generated by the SIR(D) model itself.

use chrono::{Duration, NaiveDate};

use crate::ingest::{RegionCode, RegionSeries};
use crate::sird::{integrate, CompartmentState, ModelError, SirdParams, DEFAULT_STEPS_PER_DAY};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub region: RegionCode,
    pub start: NaiveDate,
    pub population: f64,
    pub initial: CompartmentState,
    pub steps_per_day: usize,
}

impl SyntheticSpec {
    /// A fresh outbreak: `initial_infected` active cases, nobody removed yet.
    pub fn outbreak(population: f64, initial_infected: f64) -> Self {
        SyntheticSpec {
            region: "DL".parse().expect("known code"),
            start: NaiveDate::from_ymd_opt(2020, 3, 14).expect("valid date"),
            population,
            initial: CompartmentState {
                s: population - initial_infected,
                i: initial_infected,
                r: 0.0,
                d: 0.0,
            },
            steps_per_day: DEFAULT_STEPS_PER_DAY,
        }
    }
}

/// Cumulative series of `schedule.len()` days. Day 0 is `spec.initial`;
/// day `t` follows from day `t - 1` by one day under `schedule[t]`.
pub fn simulate(spec: &SyntheticSpec, schedule: &[SirdParams]) -> Result<RegionSeries, ModelError> {
    let mut state = spec.initial;
    let mut series = RegionSeries {
        region: spec.region.clone(),
        dates: Vec::with_capacity(schedule.len()),
        confirmed: Vec::with_capacity(schedule.len()),
        recovered: Vec::with_capacity(schedule.len()),
        deceased: Vec::with_capacity(schedule.len()),
        population: spec.population,
    };
    for (t, params) in schedule.iter().enumerate() {
        if t > 0 {
            state = integrate(&state, params, spec.population, 1, spec.steps_per_day)?.days[0];
        }
        series.dates.push(spec.start + Duration::days(t as i64));
        series.confirmed.push(state.ever_infected());
        series.recovered.push(state.r);
        series.deceased.push(state.d);
    }
    Ok(series)
}
