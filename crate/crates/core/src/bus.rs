//! Two-stage bus model.
//!
//! Stage one is an M/M/c/K ticket office fed by the offline-ticket fraction
//! of bus demand. Stage two is the departure process: passengers board the
//! waiting bus, which leaves when either `N` passengers are aboard or a
//! timer of `T` minutes since the previous departure fires. The waiting time
//! of that second stage follows a fill-or-timeout formula built on the
//! Erlang distribution of the `N - m0`-th arrival; the expected number
//! waiting aboard is tracked by an exact discrete-time recursion over the
//! joint (aboard count, timer age) distribution with Poisson arrival counts
//! per slice.

use crate::ctmc::{self, EventRate, Generator, TransientState};
use crate::error::{Error, Result};
use crate::rates::RateProfile;

#[derive(Debug, Clone)]
pub struct BusParams {
    /// Total bus-bound demand (per minute).
    pub lambda_b: RateProfile,
    /// Probability a passenger buys at the ticket office.
    pub q_b: f64,
    /// Per-counter ticketing rate (passengers per minute).
    pub mu_b: f64,
    /// Ticket counters.
    pub c_b: usize,
    /// Ticket-queue truncation level.
    pub k_b: usize,
    /// Bus capacity: departure when this many are aboard.
    pub n: usize,
    /// Maximum headway: departure when this much time has passed (minutes).
    pub t_max: f64,
}

impl BusParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q_b) {
            return Err(Error::invalid("bus.q_b", "must lie in [0, 1]"));
        }
        if !(self.mu_b > 0.0 && self.mu_b.is_finite()) {
            return Err(Error::invalid("bus.mu_b", "ticketing rate must be positive"));
        }
        if self.c_b < 1 {
            return Err(Error::invalid("bus.c_b", "need at least one counter"));
        }
        if self.n < 1 {
            return Err(Error::invalid("bus.n", "bus capacity must be >= 1"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::invalid("bus.t_max", "max headway must be positive"));
        }
        Ok(())
    }

    /// Ticket-stage utilization at rate `lambda_b1` — diagnostic only.
    pub fn utilization(&self, lambda_b1: f64) -> f64 {
        lambda_b1 / (self.c_b as f64 * self.mu_b)
    }

    /// Offline-ticket arrival profile `q_B * lambda_B(t)`.
    pub fn ticket_profile(&self) -> RateProfile {
        self.lambda_b.scale(self.q_b)
    }

    /// Profile of the rate reaching the departure gate,
    /// `lambda_B(t) (1 - q_B) + min(q_B lambda_B(t), c_B mu_B)`.
    pub fn downstream_profile(&self) -> RateProfile {
        let (q, cap) = (self.q_b, self.c_b as f64 * self.mu_b);
        self.lambda_b.map(|l| l * (1.0 - q) + (q * l).min(cap))
    }
}

/// Point summary of the departure process: expected passengers aboard and
/// expected time since the last departure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalState {
    pub m0: f64,
    pub t0: f64,
}

/// Rate into the ticket office.
pub fn ticket_arrival_rate(lambda_b_now: f64, q_b: f64) -> f64 {
    q_b * lambda_b_now
}

/// M/M/c/K generator for the ticket office.
pub fn build_ticket_generator(params: &BusParams) -> Result<Generator> {
    params.validate()?;
    ctmc::birth_death_generator(
        EventRate::Profile(params.ticket_profile()),
        params.mu_b,
        params.c_b,
        params.k_b,
        "bus-ticket",
    )
}

/// Rate reaching the departure gate: online buyers bypass the office, the
/// office itself forwards at most its service capacity.
pub fn downstream_rate(
    lambda_b_now: f64,
    lambda_b1_now: f64,
    q_b: f64,
    mu_b: f64,
    c_b: usize,
) -> f64 {
    lambda_b_now * (1.0 - q_b) + lambda_b1_now.min(c_b as f64 * mu_b)
}

/// CDF of the n-stage Erlang distribution with the given rate,
/// `F_n(t) = 1 - sum_{j<n} (rate t)^j e^{-rate t} / j!`, accumulated by the
/// running-term recurrence so large `n` never touches a factorial.
pub fn erlang_cdf(n: usize, rate: f64, t: f64) -> f64 {
    assert!(n >= 1, "Erlang order must be >= 1");
    assert!(rate > 0.0 && rate.is_finite());
    assert!(t >= 0.0);
    let x = rate * t;
    let mut term = (-x).exp();
    let mut below = term;
    for j in 1..n {
        term *= x / j as f64;
        below += term;
    }
    (1.0 - below).clamp(0.0, 1.0)
}

/// Expected remaining wait of the fill-or-timeout departure stage.
///
/// With `F = erlang_cdf(N - m0, lambda_bar, T - t0)`, the wait is
/// `(N+1)/(2 lambda_bar) * F + T/2 * (1 - F)`: the fill branch weighted by
/// the probability the bus fills before the timer, the timeout branch by its
/// complement. A full bus departs immediately (0); with no inflow the timer
/// branch is certain (T/2). Fractional expected aboard counts round to the
/// nearest integer Erlang order.
pub fn renewal_wait(renewal: &RenewalState, lambda_b2_bar: f64, n: usize, t_max: f64) -> f64 {
    assert!(lambda_b2_bar >= 0.0);
    if renewal.m0 >= n as f64 {
        return 0.0;
    }
    if lambda_b2_bar == 0.0 {
        return t_max / 2.0;
    }
    let order = ((n as f64 - renewal.m0).round() as usize).max(1);
    let remaining = (t_max - renewal.t0).max(0.0);
    let f = erlang_cdf(order, lambda_b2_bar, remaining);
    (n as f64 + 1.0) / (2.0 * lambda_b2_bar) * f + t_max / 2.0 * (1.0 - f)
}

/// Total bus sojourn: ticket-office wait by Little's law plus the departure
/// wait. With no office traffic the first term vanishes.
pub fn bus_total_sojourn(
    ticket_state: &TransientState,
    params: &BusParams,
    renewal: &RenewalState,
    lambda_b1_now: f64,
    lambda_b2_bar: f64,
) -> f64 {
    let l_b1 = ctmc::expected_count(ticket_state, |n| n as f64);
    let ticket_term = if lambda_b1_now > 0.0 && l_b1 > 1e-12 { l_b1 / lambda_b1_now } else { 0.0 };
    ticket_term + renewal_wait(renewal, lambda_b2_bar, params.n, params.t_max)
}

/// Joint distribution of (passengers aboard, timer age) for the departure
/// process, advanced slice by slice.
///
/// Aboard counts live in `0..N` (reaching `N` departs within the slice);
/// timer age is discretized to `step`-sized slices, `fire_steps * step = T`
/// exactly. Per slice the arrival count is Poisson with the profile's
/// integrated mass over the slice, truncated at upper tail 1e-9 and
/// renormalized. A departure inside a slice re-enters at age 0, so sub-slice
/// timing is resolved no finer than `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct AboardProcess {
    n: usize,
    step: f64,
    fire_steps: usize,
    /// probs[m * (fire_steps + 1) + k], m in 0..n, k in 0..=fire_steps.
    probs: Vec<f64>,
    t: f64,
}

impl AboardProcess {
    /// Start from a known point (m0 aboard, timer age t0) at time `t`.
    /// `step_hint` is snapped so an integer number of slices spans `t_max`.
    pub fn from_point(
        m0: usize,
        t0: f64,
        n: usize,
        t_max: f64,
        step_hint: f64,
        t: f64,
    ) -> Result<Self> {
        if n < 1 {
            return Err(Error::invalid("bus.n", "bus capacity must be >= 1"));
        }
        if !(t_max > 0.0) || !(step_hint > 0.0) {
            return Err(Error::invalid("renewal", "headway and step must be positive"));
        }
        if m0 > n {
            return Err(Error::invalid("renewal.m0", format!("{m0} exceeds capacity {n}")));
        }
        if !(0.0..=t_max).contains(&t0) {
            return Err(Error::invalid("renewal.t0", format!("{t0} outside [0, {t_max}]")));
        }
        let fire_steps = ((t_max / step_hint).round() as usize).max(1);
        let step = t_max / fire_steps as f64;
        let width = fire_steps + 1;
        let mut probs = vec![0.0; n * width];
        // A bus already full, or a timer already expired, departs right away.
        let (m_init, k_init) = if m0 >= n || t0 >= t_max {
            (0, 0)
        } else {
            (m0, (t0 / step).round() as usize)
        };
        probs[m_init * width + k_init.min(fire_steps)] = 1.0;
        Ok(AboardProcess { n, step, fire_steps, probs, t })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Advance to `t_end` under downstream arrivals `lambda_b2`. `t_end`
    /// must sit on the slice grid (within round-off), which the scenario
    /// layer guarantees by aligning horizons to the slice width.
    pub fn advance(&mut self, lambda_b2: &RateProfile, t_end: f64) -> Result<()> {
        if t_end < self.t - 1e-9 {
            return Err(Error::invalid("renewal", "cannot advance backwards"));
        }
        let n_steps_f = (t_end - self.t) / self.step;
        let n_steps = n_steps_f.round() as usize;
        if (n_steps_f - n_steps as f64).abs() > 1e-6 {
            return Err(Error::invalid(
                "renewal",
                format!("horizon {t_end} is not a multiple of the slice width {}", self.step),
            ));
        }
        let width = self.fire_steps + 1;
        let mut next = vec![0.0; self.probs.len()];
        for s in 0..n_steps {
            let t_lo = self.t + s as f64 * self.step;
            let mass = lambda_b2.mean_extended(t_lo, t_lo + self.step)? * self.step;
            let pmf = poisson_pmf_truncated(mass, 1e-9);
            // Timer firing at the slice start: age reached T, bus departs now.
            for m in 0..self.n {
                let p = self.probs[m * width + self.fire_steps];
                if p > 0.0 {
                    self.probs[m * width + self.fire_steps] = 0.0;
                    self.probs[0] += p; // (m=0, k=0)
                }
            }
            next.iter_mut().for_each(|x| *x = 0.0);
            for m in 0..self.n {
                for k in 0..self.fire_steps {
                    let p = self.probs[m * width + k];
                    if p == 0.0 {
                        continue;
                    }
                    for (a, w) in pmf.iter().enumerate() {
                        let mut m_new = m + a;
                        let mut departed = false;
                        while m_new >= self.n {
                            m_new -= self.n;
                            departed = true;
                        }
                        let k_new = if departed { 0 } else { k + 1 };
                        next[m_new * width + k_new] += p * w;
                    }
                }
            }
            std::mem::swap(&mut self.probs, &mut next);
        }
        self.t = t_end;
        Ok(())
    }

    /// Expected passengers waiting aboard.
    pub fn expected_aboard(&self) -> f64 {
        let width = self.fire_steps + 1;
        self.probs
            .iter()
            .enumerate()
            .map(|(idx, p)| (idx / width) as f64 * p)
            .sum()
    }

    /// Expected timer age (minutes since the last departure).
    pub fn expected_age(&self) -> f64 {
        let width = self.fire_steps + 1;
        self.probs
            .iter()
            .enumerate()
            .map(|(idx, p)| (idx % width) as f64 * self.step * p)
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn summary(&self) -> RenewalState {
        RenewalState { m0: self.expected_aboard(), t0: self.expected_age() }
    }
}

/// Poisson pmf truncated where the upper tail drops below `tail_eps`,
/// renormalized to total mass one.
fn poisson_pmf_truncated(mean: f64, tail_eps: f64) -> Vec<f64> {
    assert!(mean >= 0.0);
    if mean == 0.0 {
        return vec![1.0];
    }
    let mut pmf = Vec::with_capacity(8);
    let mut term = (-mean).exp();
    let mut cum = term;
    pmf.push(term);
    let mut a = 0usize;
    while 1.0 - cum >= tail_eps {
        a += 1;
        term *= mean / a as f64;
        cum += term;
        pmf.push(term);
    }
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

/// Stranded bus passengers: expected ticket queue plus expected aboard.
pub fn bus_stranded_count(ticket_state: &TransientState, aboard: &AboardProcess) -> f64 {
    ctmc::expected_count(ticket_state, |n| n as f64) + aboard.expected_aboard()
}
