use crate::ingest::RegionSeries;
use crate::sird::SirdParams;
use crate::synthetic::{simulate, SyntheticSpec};

pub(crate) fn synthetic_series(
    schedule: &[SirdParams],
    population: f64,
    initial_infected: f64,
    steps_per_day: usize,
) -> RegionSeries {
    let mut spec = SyntheticSpec::outbreak(population, initial_infected);
    spec.steps_per_day = steps_per_day;
    simulate(&spec, schedule).unwrap()
}
