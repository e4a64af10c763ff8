//! Double-ended passenger–taxi matching queue.
//!
//! Passengers and taxis accumulate in two coupled queues and are matched one
//! pair at a time at rate `mu` whenever both sides are nonempty. The joint
//! count `(i, j)` — `i` passengers, `j` taxis — is a level-dependent CTMC on
//! `{0..=passenger_cap} x {0..=pool_cap}`, linearized level-major with the
//! passenger count as the level. Taxis arriving at a full pool are lost; the
//! passenger side is unbounded in the model and bounded here only by the
//! probability-tail truncation chosen upstream.

use crate::ctmc::{self, EventRate, Generator, Transition, TransientState};
use crate::error::{Error, Result};
use crate::rates::RateProfile;

#[derive(Debug, Clone)]
pub struct TaxiParams {
    /// Passenger arrivals (per minute).
    pub lambda_x: RateProfile,
    /// Taxi arrivals into the pool (per minute).
    pub lambda_t: RateProfile,
    /// Matching rate when both queues are nonempty (matches per minute).
    pub mu: f64,
    /// Maximum taxis waiting in the pool.
    pub pool_cap: usize,
    /// Passenger-count truncation level (from `ctmc::choose_truncation`).
    pub passenger_cap: usize,
}

impl TaxiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("taxi.mu", "matching rate must be positive"));
        }
        if self.pool_cap < 1 {
            return Err(Error::invalid("taxi.pool_cap", "need room for at least one taxi"));
        }
        if self.passenger_cap < 1 {
            return Err(Error::invalid("taxi.passenger_cap", "truncation level must be >= 1"));
        }
        Ok(())
    }
}

/// Joint distribution over `(passengers, taxis)` with the linearization
/// bookkeeping needed to take marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxiState {
    pub inner: TransientState,
    pub passenger_cap: usize,
    pub pool_cap: usize,
}

impl TaxiState {
    /// Point mass at `(passengers, taxis)`.
    pub fn point_mass(
        passenger_cap: usize,
        pool_cap: usize,
        passengers: usize,
        taxis: usize,
        t: f64,
    ) -> Result<Self> {
        if passengers > passenger_cap || taxis > pool_cap {
            return Err(Error::invalid(
                "taxi state",
                format!("initial ({passengers}, {taxis}) outside ({passenger_cap}, {pool_cap})"),
            ));
        }
        let dim = (passenger_cap + 1) * (pool_cap + 1);
        let inner = TransientState::point_mass(dim, index_of(pool_cap, passengers, taxis), t)?;
        Ok(TaxiState { inner, passenger_cap, pool_cap })
    }

    pub fn from_inner(inner: TransientState, passenger_cap: usize, pool_cap: usize) -> Result<Self> {
        if inner.dim() != (passenger_cap + 1) * (pool_cap + 1) {
            return Err(Error::invalid(
                "taxi state",
                format!(
                    "vector of {} entries does not fill a {}x{} grid",
                    inner.dim(),
                    passenger_cap + 1,
                    pool_cap + 1
                ),
            ));
        }
        Ok(TaxiState { inner, passenger_cap, pool_cap })
    }

    /// Marginal distribution of the passenger count.
    pub fn passenger_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.passenger_cap + 1];
        for (idx, p) in self.inner.probs().iter().enumerate() {
            m[idx / (self.pool_cap + 1)] += p;
        }
        m
    }

    /// Marginal distribution of the taxi-pool count.
    pub fn taxi_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.pool_cap + 1];
        for (idx, p) in self.inner.probs().iter().enumerate() {
            m[idx % (self.pool_cap + 1)] += p;
        }
        m
    }
}

/// Level-major linear index of `(passengers, taxis)`.
pub fn index_of(pool_cap: usize, passengers: usize, taxis: usize) -> usize {
    passengers * (pool_cap + 1) + taxis
}

/// Build the matching-queue generator: passenger arrivals move `(i,j)` to
/// `(i+1,j)` at `lambda_x(t)`, taxi arrivals to `(i,j+1)` at `lambda_t(t)`
/// while the pool has room, and matching to `(i-1,j-1)` at `mu` whenever both
/// coordinates are positive.
pub fn build_taxi_generator(params: &TaxiParams) -> Result<Generator> {
    params.validate()?;
    let (cap, pool) = (params.passenger_cap, params.pool_cap);
    let dim = (cap + 1) * (pool + 1);
    let mut gen = Generator::new(dim, "taxi");

    let mut pax_arrivals = Vec::with_capacity(cap * (pool + 1));
    for i in 0..cap {
        for j in 0..=pool {
            pax_arrivals.push(Transition {
                src: index_of(pool, i, j) as u32,
                dst: index_of(pool, i + 1, j) as u32,
                weight: 1.0,
            });
        }
    }
    gen.add_family(EventRate::Profile(params.lambda_x.clone()), pax_arrivals)?;

    let mut taxi_arrivals = Vec::with_capacity((cap + 1) * pool);
    for i in 0..=cap {
        for j in 0..pool {
            taxi_arrivals.push(Transition {
                src: index_of(pool, i, j) as u32,
                dst: index_of(pool, i, j + 1) as u32,
                weight: 1.0,
            });
        }
    }
    gen.add_family(EventRate::Profile(params.lambda_t.clone()), taxi_arrivals)?;

    let mut matches = Vec::with_capacity(cap * pool);
    for i in 1..=cap {
        for j in 1..=pool {
            matches.push(Transition {
                src: index_of(pool, i, j) as u32,
                dst: index_of(pool, i - 1, j - 1) as u32,
                weight: 1.0,
            });
        }
    }
    gen.add_family(EventRate::Constant(params.mu), matches)?;

    Ok(gen)
}

/// Expected number of waiting passengers.
pub fn taxi_queue_length(state: &TaxiState) -> f64 {
    let stride = state.pool_cap + 1;
    ctmc::expected_count(&state.inner, |idx| (idx / stride) as f64)
}

/// Expected number of taxis idling in the pool.
pub fn taxi_pool_length(state: &TaxiState) -> f64 {
    let stride = state.pool_cap + 1;
    ctmc::expected_count(&state.inner, |idx| (idx % stride) as f64)
}

/// Passenger sojourn time by Little's law, `W = L / lambda`. An empty queue
/// waits zero regardless of the arrival rate; a nonempty queue with zero
/// arrivals has no defined wait and the caller substitutes its sentinel.
pub fn taxi_sojourn_time(queue_length: f64, lambda_x_now: f64) -> Result<f64> {
    if queue_length <= 1e-12 {
        return Ok(0.0);
    }
    if lambda_x_now <= 0.0 {
        return Err(Error::UndefinedWait { chain: "taxi".into(), queued: queue_length });
    }
    Ok(queue_length / lambda_x_now)
}
