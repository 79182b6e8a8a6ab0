//! The four-compartment SIR(D) system and its fixed-step RK4 solver.
//!
//! States are absolute head counts with an explicit population `N`:
//!
//! ```text
//! dS/dt = -beta * (S/N) * I
//! dI/dt =  beta * (S/N) * I - nu * I - mu * I
//! dR/dt =  nu * I
//! dD/dt =  mu * I
//! ```
//!
//! The right-hand sides sum to zero, so `S + I + R + D = N` is conserved.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default RK4 resolution.
pub const DEFAULT_STEPS_PER_DAY: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("population must be positive and finite, got {0}")]
    InvalidPopulation(f64),
    #[error("parameter {name} must be finite and non-negative, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("compartment {name} must be finite and non-negative, got {value}")]
    InvalidState { name: &'static str, value: f64 },
    #[error("horizon and steps per day must be at least 1")]
    InvalidResolution,
    #[error("reproduction number undefined: nu + mu = 0")]
    UndefinedR0,
}

/// Per-day rates `(beta, nu, mu)`: effective contact, recovery and fatality.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SirdParams {
    pub beta: f64,
    pub nu: f64,
    pub mu: f64,
}

impl SirdParams {
    pub const ZERO: SirdParams = SirdParams { beta: 0.0, nu: 0.0, mu: 0.0 };

    pub fn new(beta: f64, nu: f64, mu: f64) -> Result<Self, ModelError> {
        let p = SirdParams { beta, nu, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [("beta", self.beta), ("nu", self.nu), ("mu", self.mu)] {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    /// Total exit rate from the infected compartment.
    pub fn removal_rate(&self) -> f64 {
        self.nu + self.mu
    }

    /// `beta / (nu + mu)`, or `None` when the removal rate is zero.
    pub fn r0(&self) -> Option<f64> {
        r0_of(self).ok()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.beta, self.nu, self.mu]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        SirdParams { beta: a[0], nu: a[1], mu: a[2] }
    }
}

/// Reproduction number `beta / (nu + mu)`.
pub fn r0_of(params: &SirdParams) -> Result<f64, ModelError> {
    let removal = params.removal_rate();
    if removal > 0.0 {
        Ok(params.beta / removal)
    } else {
        Err(ModelError::UndefinedR0)
    }
}

/// Head counts at one instant. `i` is the active (not yet removed) count.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompartmentState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
    pub d: f64,
}

impl CompartmentState {
    pub fn new(s: f64, i: f64, r: f64, d: f64) -> Result<Self, ModelError> {
        let st = CompartmentState { s, i, r, d };
        st.validate()?;
        Ok(st)
    }

    /// Builds a state from cumulative confirmed/recovered/deceased counts.
    pub fn from_cumulative(
        confirmed: f64,
        recovered: f64,
        deceased: f64,
        population: f64,
    ) -> Result<Self, ModelError> {
        check_population(population)?;
        CompartmentState::new(
            population - confirmed,
            confirmed - recovered - deceased,
            recovered,
            deceased,
        )
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [("s", self.s), ("i", self.i), ("r", self.r), ("d", self.d)] {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::InvalidState { name, value });
            }
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.r + self.d
    }

    /// Cumulative ever-infected count `i + r + d`.
    pub fn ever_infected(&self) -> f64 {
        self.i + self.r + self.d
    }

    fn to_array(self) -> [f64; 4] {
        [self.s, self.i, self.r, self.d]
    }

    fn from_array(x: [f64; 4]) -> Self {
        CompartmentState { s: x[0], i: x[1], r: x[2], d: x[3] }
    }
}

/// Time derivative of a [`CompartmentState`], per day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub ds: f64,
    pub di: f64,
    pub dr: f64,
    pub dd: f64,
}

impl Rates {
    pub fn sum(&self) -> f64 {
        self.ds + self.di + self.dr + self.dd
    }
}

fn check_population(n: f64) -> Result<(), ModelError> {
    if n.is_finite() && n > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidPopulation(n))
    }
}

pub fn derivative(
    state: &CompartmentState,
    params: &SirdParams,
    population: f64,
) -> Result<Rates, ModelError> {
    check_population(population)?;
    state.validate()?;
    params.validate()?;
    let [ds, di, dr, dd] = rhs(&state.to_array(), params, population);
    Ok(Rates { ds, di, dr, dd })
}

#[inline(always)]
fn rhs(x: &[f64; 4], p: &SirdParams, n: f64) -> [f64; 4] {
    let infection = p.beta * (x[0] / n) * x[1];
    let recovery = p.nu * x[1];
    let death = p.mu * x[1];
    [-infection, infection - recovery - death, recovery, death]
}

/// Pulls every compartment back to `>= 0`. Mass added by clamping is taken
/// from `s`; if `s` cannot cover it, from `i`, and finally from `r` and `d`
/// in proportion, so the total stays at `N`.
#[inline]
fn clamp_non_negative(x: &mut [f64; 4]) {
    if x.iter().all(|v| *v >= 0.0) {
        return;
    }
    let mut added = 0.0;
    for v in x[1..].iter_mut() {
        if *v < 0.0 {
            added -= *v;
            *v = 0.0;
        }
    }
    x[0] -= added;
    if x[0] < 0.0 {
        let mut excess = -x[0];
        x[0] = 0.0;
        let take = excess.min(x[1]);
        x[1] -= take;
        excess -= take;
        let removed = x[2] + x[3];
        if excess > 0.0 && removed > 0.0 {
            let keep = ((removed - excess) / removed).max(0.0);
            x[2] *= keep;
            x[3] *= keep;
        }
    }
}

/// Largest `rate * h` an RK4 step may take; the method is stable on the
/// negative real axis up to about 2.78.
const MAX_STEP_STIFFNESS: f64 = 2.0;

/// One RK4 integrator bound to a parameter set. Callers must have validated
/// their inputs; the stepping loop itself does no checking.
///
/// Each nominal step is split into equal substeps when the parameters are
/// stiff enough to make a single RK4 step unstable. Ordinary parameter
/// ranges never trigger this.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stepper {
    params: SirdParams,
    population: f64,
    h: f64,
    steps_per_day: usize,
}

impl Stepper {
    pub(crate) fn new(params: SirdParams, population: f64, steps_per_day: usize) -> Self {
        let nominal = 1.0 / steps_per_day as f64;
        let stiffness = (params.beta + params.nu + params.mu) * nominal;
        let split = if stiffness > MAX_STEP_STIFFNESS {
            (stiffness / MAX_STEP_STIFFNESS).ceil() as usize
        } else {
            1
        };
        let steps = steps_per_day * split;
        Stepper { params, population, h: 1.0 / steps as f64, steps_per_day: steps }
    }

    #[inline]
    pub(crate) fn advance_day(&self, x: &mut [f64; 4]) {
        let (p, n, h) = (&self.params, self.population, self.h);
        for _ in 0..self.steps_per_day {
            let k1 = rhs(x, p, n);
            let y2 = add_scaled(x, &k1, 0.5 * h);
            let k2 = rhs(&y2, p, n);
            let y3 = add_scaled(x, &k2, 0.5 * h);
            let k3 = rhs(&y3, p, n);
            let y4 = add_scaled(x, &k3, h);
            let k4 = rhs(&y4, p, n);
            for c in 0..4 {
                x[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
            clamp_non_negative(x);
        }
    }
}

#[inline(always)]
fn add_scaled(x: &[f64; 4], k: &[f64; 4], a: f64) -> [f64; 4] {
    [x[0] + a * k[0], x[1] + a * k[1], x[2] + a * k[2], x[3] + a * k[3]]
}

/// Daily samples of an integrated solution, excluding the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: CompartmentState,
    pub days: Vec<CompartmentState>,
    pub population: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// State on day `t`, where day 0 is the initial state.
    pub fn state(&self, t: usize) -> &CompartmentState {
        if t == 0 {
            &self.initial
        } else {
            &self.days[t - 1]
        }
    }
}

/// Integrates `horizon_days` whole days with classical RK4 at step
/// `1 / steps_per_day`, clamping negative compartments after every step.
pub fn integrate(
    initial: &CompartmentState,
    params: &SirdParams,
    population: f64,
    horizon_days: usize,
    steps_per_day: usize,
) -> Result<Trajectory, ModelError> {
    check_population(population)?;
    initial.validate()?;
    params.validate()?;
    if horizon_days == 0 || steps_per_day == 0 {
        return Err(ModelError::InvalidResolution);
    }
    let stepper = Stepper::new(*params, population, steps_per_day);
    let mut x = initial.to_array();
    let mut days = Vec::with_capacity(horizon_days);
    for _ in 0..horizon_days {
        stepper.advance_day(&mut x);
        days.push(CompartmentState::from_array(x));
    }
    Ok(Trajectory { initial: *initial, days, population })
}

/// Daily new infections, recoveries and deaths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IncrementSeries {
    pub di: Vec<f64>,
    pub dr: Vec<f64>,
    pub dd: Vec<f64>,
}

impl IncrementSeries {
    pub fn len(&self) -> usize {
        self.di.len()
    }

    pub fn is_empty(&self) -> bool {
        self.di.is_empty()
    }
}

/// New infections are the change in ever-infected `i + r + d`.
pub fn daily_increments(traj: &Trajectory) -> IncrementSeries {
    let mut out = IncrementSeries {
        di: Vec::with_capacity(traj.len()),
        dr: Vec::with_capacity(traj.len()),
        dd: Vec::with_capacity(traj.len()),
    };
    let mut prev = &traj.initial;
    for cur in &traj.days {
        out.di.push(cur.ever_infected() - prev.ever_infected());
        out.dr.push(cur.r - prev.r);
        out.dd.push(cur.d - prev.d);
        prev = cur;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(s: f64, i: f64, r: f64, d: f64) -> CompartmentState {
        CompartmentState::new(s, i, r, d).unwrap()
    }

    /// Forward Euler with a tiny step; independent of the RK4 path.
    fn euler(x0: &CompartmentState, p: &SirdParams, n: f64, days: usize, h: f64) -> Vec<[f64; 4]> {
        let per_day = (1.0 / h).round() as usize;
        let mut x = [x0.s, x0.i, x0.r, x0.d];
        let mut out = Vec::new();
        for _ in 0..days {
            for _ in 0..per_day {
                let inf = p.beta * x[0] / n * x[1];
                let dx = [-inf, inf - (p.nu + p.mu) * x[1], p.nu * x[1], p.mu * x[1]];
                for c in 0..4 {
                    x[c] += h * dx[c];
                }
            }
            out.push(x);
        }
        out
    }

    /// Forward Euler at steps `h` and `2h` combined to cancel Euler's
    /// first-order error; plain Euler at 1e-4 is itself ~6e-5 off.
    pub(crate) fn euler_oracle(x0: &CompartmentState, p: &SirdParams, n: f64, days: usize) -> Vec<[f64; 4]> {
        let fine = euler(x0, p, n, days, 1e-4);
        let coarse = euler(x0, p, n, days, 2e-4);
        fine.iter()
            .zip(&coarse)
            .map(|(f, c)| std::array::from_fn(|k| 2.0 * f[k] - c[k]))
            .collect()
    }

    #[test]
    fn derivative_direct_substitution() {
        let p = SirdParams::new(0.5, 0.1, 0.05).unwrap();
        let r = derivative(&state(1000.0, 100.0, 0.0, 0.0), &p, 1100.0).unwrap();
        assert!((r.ds + 45.454_545_454_5).abs() < 1e-9);
        assert!((r.di - 30.454_545_454_5).abs() < 1e-9);
        assert_eq!(r.dr, 10.0);
        assert_eq!(r.dd, 5.0);
    }

    #[test]
    fn derivative_zero_rates() {
        let r = derivative(&state(10.0, 3.0, 2.0, 1.0), &SirdParams::ZERO, 16.0).unwrap();
        assert_eq!((r.ds, r.di, r.dr, r.dd), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn derivative_no_susceptibles() {
        let p = SirdParams::new(2.0, 0.2, 0.1).unwrap();
        let r = derivative(&state(0.0, 50.0, 10.0, 5.0), &p, 65.0).unwrap();
        assert_eq!(r.ds, 0.0);
        assert!((r.di + 15.0).abs() < 1e-12);
        assert_eq!(r.dr, 10.0);
        assert_eq!(r.dd, 5.0);
    }

    #[test]
    fn derivative_rejects_bad_inputs() {
        let s = state(1.0, 1.0, 0.0, 0.0);
        let p = SirdParams::ZERO;
        assert!(matches!(derivative(&s, &p, 0.0), Err(ModelError::InvalidPopulation(_))));
        assert!(derivative(&s, &p, f64::NAN).is_err());
        let bad = SirdParams { beta: f64::INFINITY, ..p };
        assert!(derivative(&s, &bad, 2.0).is_err());
        let bad_state = CompartmentState { s: f64::NAN, ..s };
        assert!(derivative(&bad_state, &p, 2.0).is_err());
    }

    #[test]
    fn integrate_zero_params_is_constant() {
        let x0 = state(900.0, 60.0, 30.0, 10.0);
        let traj = integrate(&x0, &SirdParams::ZERO, 1000.0, 10, 10).unwrap();
        assert_eq!(traj.len(), 10);
        assert!(traj.days.iter().all(|s| *s == x0));
    }

    #[test]
    fn integrate_matches_tiny_step_euler() {
        let x0 = state(999.0, 1.0, 0.0, 0.0);
        let p = SirdParams::new(0.4, 0.1, 0.02).unwrap();
        let traj = integrate(&x0, &p, 1000.0, 60, 10).unwrap();
        let oracle = euler_oracle(&x0, &p, 1000.0, 60);
        for (got, want) in traj.days.iter().zip(&oracle) {
            let got = [got.s, got.i, got.r, got.d];
            for c in 0..4 {
                let rel = (got[c] - want[c]).abs() / want[c].abs().max(1.0);
                assert!(rel < 1e-5, "component {c}: {} vs {}", got[c], want[c]);
            }
        }
    }

    #[test]
    fn integrate_pure_decay_matches_exponential() {
        let x0 = state(0.0, 100.0, 0.0, 0.0);
        let p = SirdParams::new(0.0, 0.1, 0.0).unwrap();
        let traj = integrate(&x0, &p, 100.0, 30, 10).unwrap();
        for (t, st) in traj.days.iter().enumerate() {
            let want = 100.0 * (-0.1 * (t + 1) as f64).exp();
            assert!((st.i - want).abs() / want < 1e-6);
        }
    }

    #[test]
    fn integrate_rejects_bad_resolution() {
        let x0 = state(1.0, 1.0, 0.0, 0.0);
        assert_eq!(
            integrate(&x0, &SirdParams::ZERO, 2.0, 0, 10),
            Err(ModelError::InvalidResolution)
        );
        assert!(integrate(&x0, &SirdParams { nu: f64::NAN, ..SirdParams::ZERO }, 2.0, 1, 1).is_err());
    }

    #[test]
    fn extreme_rates_stay_non_negative_and_conserve() {
        let x0 = state(1e6 - 10.0, 10.0, 0.0, 0.0);
        let p = SirdParams::new(50.0, 30.0, 30.0).unwrap();
        let traj = integrate(&x0, &p, 1e6, 40, 10).unwrap();
        for st in &traj.days {
            st.validate().unwrap();
            assert!((st.total() - 1e6).abs() <= 1e-9 * 1e6);
        }
    }

    #[test]
    fn stiff_removal_decays_instead_of_exploding() {
        let x0 = state(1e6 - 100.0, 100.0, 0.0, 0.0);
        let p = SirdParams::new(0.5, 40.0, 25.0).unwrap();
        let traj = integrate(&x0, &p, 1e6, 3, 10).unwrap();
        let last = traj.days.last().unwrap();
        assert!(last.i < 1e-12, "i = {}", last.i);
        assert!((last.r + last.d - 100.0).abs() < 1.0);
        assert!((last.r / last.d - 40.0 / 25.0).abs() < 1e-6);
    }

    #[test]
    fn increments_of_constant_trajectory_are_zero() {
        let x0 = state(5.0, 5.0, 5.0, 5.0);
        let traj = integrate(&x0, &SirdParams::ZERO, 20.0, 4, 1).unwrap();
        let inc = daily_increments(&traj);
        assert_eq!(inc.len(), 4);
        assert!(inc.di.iter().chain(&inc.dr).chain(&inc.dd).all(|v| *v == 0.0));
    }

    #[test]
    fn increments_by_definition() {
        let traj = Trajectory {
            initial: state(888.0, 100.0, 10.0, 2.0),
            days: vec![state(878.0, 105.0, 14.0, 3.0)],
            population: 1000.0,
        };
        let inc = daily_increments(&traj);
        assert_eq!(inc.dr, vec![4.0]);
        assert_eq!(inc.dd, vec![1.0]);
        assert_eq!(inc.di, vec![10.0]);
    }

    #[test]
    fn increments_telescope() {
        let x0 = state(999.0, 1.0, 0.0, 0.0);
        let p = SirdParams::new(0.4, 0.1, 0.02).unwrap();
        let traj = integrate(&x0, &p, 1000.0, 60, 10).unwrap();
        let inc = daily_increments(&traj);
        let last = traj.days.last().unwrap();
        let sum_r: f64 = inc.dr.iter().sum();
        let sum_i: f64 = inc.di.iter().sum();
        assert!((sum_r - (last.r - x0.r)).abs() < 1e-9);
        assert!((sum_i - (last.ever_infected() - x0.ever_infected())).abs() < 1e-9);
    }

    #[test]
    fn r0_examples() {
        assert_eq!(r0_of(&SirdParams::new(0.2, 0.1, 0.1).unwrap()), Ok(1.0));
        assert_eq!(r0_of(&SirdParams::new(0.0, 0.1, 0.05).unwrap()), Ok(0.0));
        let r = r0_of(&SirdParams::new(0.3, 0.1, 0.05).unwrap()).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert_eq!(r0_of(&SirdParams::new(0.3, 0.0, 0.0).unwrap()), Err(ModelError::UndefinedR0));
    }

    fn arb_case() -> impl Strategy<Value = (CompartmentState, SirdParams, f64)> {
        (1.0e2..1.0e7f64, 0.0..1.0f64, 0.0..0.2f64, 0.0..0.2f64, 0.0..1.5f64, 0.0..0.5f64, 0.0..0.2f64)
            .prop_map(|(n, fi, fr, fd, beta, nu, mu)| {
                let i = n * fi * 0.1;
                let r = n * fr * 0.5;
                let d = n * fd * 0.1;
                let s = n - i - r - d;
                (CompartmentState { s, i, r, d }, SirdParams { beta, nu, mu }, n)
            })
    }

    proptest! {
        #[test]
        fn derivative_components_sum_to_zero((x, p, n) in arb_case()) {
            let r = derivative(&x, &p, n).unwrap();
            let scale = r.ds.abs() + r.di.abs() + r.dr.abs() + r.dd.abs();
            prop_assert!(r.sum().abs() <= 4.0 * f64::EPSILON * scale.max(1.0));
        }

        #[test]
        fn trajectories_conserve_and_stay_monotone((x, p, n) in arb_case()) {
            let traj = integrate(&x, &p, n, 120, 10).unwrap();
            let mut prev = x;
            for st in &traj.days {
                prop_assert!((st.total() - n).abs() <= 1e-9 * n);
                prop_assert!(st.r >= prev.r && st.d >= prev.d && st.s <= prev.s);
                prev = *st;
            }
        }
    }
}
