//! The assembled ground-access network: taxi, bus, and subway submodels
//! advanced together over a horizon, and the congestion criteria read off
//! at the end of it.
//!
//! A [`NetworkState`] is a snapshot of every chain at one instant. `predict`
//! is snapshot-in, snapshot-out: it never mutates its input, and advancing
//! by `h1` then `h2` reproduces advancing by `h1 + h2` exactly — the solver
//! step is snapped to a power-of-two fraction of a minute so both paths
//! walk identical grids.

use crate::bus::{self, AboardProcess, RenewalState};
use crate::choice;
use crate::ctmc::{self, TransientState};
use crate::error::{Error, Result};
use crate::rates::{self, ModeStreams, ShareVector};
use crate::scenario::Scenario;
use crate::subway;
use crate::taxi::{self, TaxiState};

/// Snapshot of all queueing chains at one time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub taxi: TaxiState,
    /// Bus ticket-office chain.
    pub ticket: TransientState,
    /// Joint aboard-count / timer-age distribution of the waiting bus.
    pub aboard: AboardProcess,
    /// Subway security chain.
    pub security: TransientState,
    /// Subway ticketing chain.
    pub subway_ticket: TransientState,
    pub t: f64,
}

impl NetworkState {
    /// Point summary of the bus departure process.
    pub fn renewal(&self) -> RenewalState {
        self.aboard.summary()
    }
}

/// Waiting times, stranded counts, and the two congestion criteria at one
/// evaluation instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CongestionReport {
    pub t: f64,
    pub w_x: f64,
    pub w_b: f64,
    pub w_s: f64,
    pub l_x: f64,
    pub l_b: f64,
    pub l_s: f64,
    /// Share-weighted mean sojourn time.
    pub w_mean: f64,
    /// Largest stranded count across the three modes.
    pub l_max: f64,
    /// Shares in force when the report was taken.
    pub shares: ShareVector,
}

/// Assemble a report from per-mode waits and stranded counts.
pub fn congestion_criteria(
    t: f64,
    w: [f64; 3],
    l: [f64; 3],
    shares: &ShareVector,
) -> CongestionReport {
    let s = shares.as_array();
    CongestionReport {
        t,
        w_x: w[0],
        w_b: w[1],
        w_s: w[2],
        l_x: l[0],
        l_b: l[1],
        l_s: l[2],
        w_mean: s[0] * w[0] + s[1] * w[1] + s[2] * w[2],
        l_max: l[0].max(l[1]).max(l[2]),
        shares: shares.clone(),
    }
}

/// Write reports as CSV rows `t,W_X,W_B,W_S,L_X,L_B,L_S,W_mean,L_max`.
/// Plain `Display` float formatting keeps the bytes reproducible.
pub fn write_report_csv<W: std::io::Write>(out: &mut W, reports: &[CongestionReport]) -> Result<()> {
    writeln!(out, "t,W_X,W_B,W_S,L_X,L_B,L_S,W_mean,L_max")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.t, r.w_x, r.w_b, r.w_s, r.l_x, r.l_b, r.l_s, r.w_mean, r.l_max
        )?;
    }
    Ok(())
}

/// Largest power-of-two fraction of a minute not exceeding the requested
/// step. Dyadic steps make every grid point exactly representable, so a
/// horizon split into pieces retraces the identical step sequence.
pub fn snap_step(dt: f64) -> f64 {
    let k = (1.0 / dt).log2().ceil().max(0.0) as i32;
    (0.5f64).powi(k)
}

/// Build the network state the scenario describes at its `t0`. The taxi
/// passenger level is truncated at the initial queue plus a Poisson upper
/// quantile of the worst-case arrival mass over the longest horizon any
/// command will run.
pub fn initial_state(scenario: &Scenario) -> Result<NetworkState> {
    let t0 = scenario.horizon.t0;
    let arrivals = scenario.arrivals();
    let window = scenario.max_horizon();
    let mass = arrivals.mean_extended(t0, t0 + window)? * window;
    let passenger_cap = (scenario.initial.taxi_queue
        + ctmc::poisson_upper_quantile(mass, scenario.solver.tail_eps))
    .max(1);
    let init = &scenario.initial;
    Ok(NetworkState {
        taxi: TaxiState::point_mass(
            passenger_cap,
            scenario.taxi.pool_cap,
            init.taxi_queue,
            init.pool,
            t0,
        )?,
        ticket: TransientState::point_mass(scenario.bus.k + 1, init.ticket_queue, t0)?,
        aboard: AboardProcess::from_point(
            init.aboard,
            init.timer_age,
            scenario.bus.n,
            scenario.bus.t,
            scenario.solver.renewal_step,
            t0,
        )?,
        security: TransientState::point_mass(scenario.subway.k1 + 1, init.security_queue, t0)?,
        subway_ticket: TransientState::point_mass(
            scenario.subway.k2 + 1,
            init.subway_ticket_queue,
            t0,
        )?,
        t: t0,
    })
}

fn check_dims(initial: &NetworkState, scenario: &Scenario) -> Result<()> {
    if initial.taxi.pool_cap != scenario.taxi.pool_cap {
        return Err(Error::invalid("state", "taxi pool capacity differs from the scenario"));
    }
    if initial.ticket.dim() != scenario.bus.k + 1 {
        return Err(Error::invalid("state", "bus ticket chain size differs from the scenario"));
    }
    if initial.security.dim() != scenario.subway.k1 + 1
        || initial.subway_ticket.dim() != scenario.subway.k2 + 1
    {
        return Err(Error::invalid("state", "subway chain size differs from the scenario"));
    }
    Ok(())
}

/// Advance every chain by `horizon` minutes under the given mode shares and
/// report the congestion criteria at the final instant.
pub fn predict(
    initial: &NetworkState,
    shares: &ShareVector,
    scenario: &Scenario,
    horizon: f64,
) -> Result<(NetworkState, CongestionReport)> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon", "must be positive and finite"));
    }
    shares.validate()?;
    check_dims(initial, scenario)?;
    let t_end = initial.t + horizon;
    let dt = snap_step(scenario.solver.dt);
    let streams = rates::split_streams(&scenario.arrivals(), shares)?;

    let tp = scenario.taxi_params(streams.taxi.clone(), initial.taxi.passenger_cap);
    let taxi_gen = taxi::build_taxi_generator(&tp)?;
    let taxi_inner = ctmc::advance(&taxi_gen, &initial.taxi.inner, t_end, dt)?;
    let taxi_state = TaxiState::from_inner(taxi_inner, tp.passenger_cap, tp.pool_cap)?;

    let bp = scenario.bus_params(streams.bus.clone());
    let ticket_gen = bus::build_ticket_generator(&bp)?;
    let ticket = ctmc::advance(&ticket_gen, &initial.ticket, t_end, dt)?;
    let mut aboard = initial.aboard.clone();
    aboard.advance(&bp.downstream_profile(), t_end)?;

    let sp = scenario.subway_params(streams.subway.clone());
    let security_gen = subway::build_security_generator(&sp)?;
    let security = ctmc::advance(&security_gen, &initial.security, t_end, dt)?;
    let subway_ticket_gen = subway::build_subway_ticket_generator(&sp)?;
    let subway_ticket = ctmc::advance(&subway_ticket_gen, &initial.subway_ticket, t_end, dt)?;

    let next = NetworkState { taxi: taxi_state, ticket, aboard, security, subway_ticket, t: t_end };
    let report = report_at(&next, shares, scenario, &streams)?;
    Ok((next, report))
}

/// Congestion criteria of a snapshot without advancing it.
pub fn report_now(
    state: &NetworkState,
    shares: &ShareVector,
    scenario: &Scenario,
) -> Result<CongestionReport> {
    shares.validate()?;
    check_dims(state, scenario)?;
    let streams = rates::split_streams(&scenario.arrivals(), shares)?;
    report_at(state, shares, scenario, &streams)
}

/// Congestion criteria of an existing snapshot under the given streams.
fn report_at(
    state: &NetworkState,
    shares: &ShareVector,
    scenario: &Scenario,
    streams: &ModeStreams,
) -> Result<CongestionReport> {
    let t = state.t;

    let l_x = taxi::taxi_queue_length(&state.taxi);
    let w_x = taxi::taxi_sojourn_time(l_x, streams.taxi.eval_clamped(t))?;

    let bp = scenario.bus_params(streams.bus.clone());
    let lambda_b1_now = bus::ticket_arrival_rate(streams.bus.eval_clamped(t), bp.q_b);
    let renewal = state.aboard.summary();
    let downstream = bp.downstream_profile();
    // Single exponential parameter for the fill phase: time-average the
    // downstream rate over the remaining headway.
    let window = (bp.t_max - renewal.t0).max(0.0);
    let lambda_b2_bar = if window > 1e-9 {
        downstream.mean_extended(t, t + window)?
    } else {
        downstream.eval_clamped(t)
    };
    let w_b = bus::bus_total_sojourn(&state.ticket, &bp, &renewal, lambda_b1_now, lambda_b2_bar);
    let l_b = bus::bus_stranded_count(&state.ticket, &state.aboard);

    let sp = scenario.subway_params(streams.subway.clone());
    let lambda_s_now = streams.subway.eval_clamped(t);
    let (_, lambda_s2_now) = subway::subway_stage_rates(&sp, lambda_s_now);
    let l_s1 = ctmc::expected_count(&state.security, |n| n as f64);
    let l_s2 = ctmc::expected_count(&state.subway_ticket, |n| n as f64);
    let w_s = match subway::subway_sojourn(
        &state.security,
        &state.subway_ticket,
        &sp,
        lambda_s_now,
        lambda_s2_now,
    ) {
        Ok(w) => w,
        // Empty stages with no inflow: only the train wait remains.
        Err(Error::UndefinedWait { .. }) if l_s1 + l_s2 <= 1e-9 => sp.m,
        Err(e) => return Err(e),
    };

    Ok(congestion_criteria(t, [w_x, w_b, w_s], [l_x, l_b, l_s1 + l_s2], shares))
}

/// Shares used when none are pinned in the scenario: the static no-wait
/// logit split.
pub fn baseline_shares(scenario: &Scenario, tolls: &choice::TollScheme) -> ShareVector {
    match scenario.initial.shares {
        Some(s) => ShareVector::from_array(s).expect("validated at load"),
        None => choice::aggregate_shares(&scenario.utility_params(), [0.0; 3], tolls),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::TollScheme;
    use crate::scenario::load_scenario;
    use std::io::Write as _;

    fn scenario_toml(arrival_values: &str, supply_values: &str) -> String {
        format!(
            r#"
name = "net-unit"

[horizon]
minutes = 15.0

[rates.arrivals]
breakpoints = [0.0, 5.0, 10.0, 20.0]
values = {arrival_values}

[rates.taxi_supply]
breakpoints = [0.0, 20.0]
values = {supply_values}

[taxi]
mu = 3.0
pool_cap = 6

[bus]
q = 0.5
mu = 1.0
c = 2
k = 60
n = 25
t = 8.0

[subway]
q = 0.3
mu1 = 8.0
mu2 = 1.0
c1 = 2
c2 = 2
k1 = 90
k2 = 40
m = 2.0

[choice]
[[choice.classes]]
pi = 1.0
o = [1.0, 0.2, 0.5]
w_t = [1.0, 1.0, 1.0]
w_o = [1.2, 0.7, 1.0]
w_j = [0.6, 0.7, 0.7]

[initial]
taxi_queue = 20
ticket_queue = 4
aboard = 3
timer_age = 2.0
security_queue = 12
subway_ticket_queue = 3

[solver]
dt = 0.0078125
"#
        )
    }

    fn load(body: &str) -> Scenario {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        load_scenario(&path).unwrap()
    }

    #[test]
    fn snap_step_returns_dyadic_fractions() {
        assert_eq!(snap_step(0.005), 1.0 / 256.0);
        assert_eq!(snap_step(0.25), 0.25);
        assert_eq!(snap_step(1.0), 1.0);
        assert_eq!(snap_step(0.0078125), 0.0078125);
        assert!(snap_step(0.003) <= 0.003);
    }

    #[test]
    fn criteria_arithmetic() {
        let shares = ShareVector::new(1.0, 0.0, 0.0).unwrap();
        let r = congestion_criteria(0.0, [4.0, 10.0, 6.0], [1.0, 2.0, 3.0], &shares);
        assert_eq!(r.w_mean, 4.0);
        let r2 = congestion_criteria(
            0.0,
            [5.0, 5.0, 5.0],
            [137.0, 6.0, 84.0],
            &ShareVector::new(0.2, 0.3, 0.5).unwrap(),
        );
        assert_eq!(r2.l_max, 137.0);
        assert!((r2.w_mean - 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_network_with_no_arrivals_reaches_its_fixed_point() {
        let mut body = scenario_toml("[0.0, 0.0, 0.0]", "[0.0]");
        body = body
            .replace("taxi_queue = 20", "taxi_queue = 0")
            .replace("ticket_queue = 4", "ticket_queue = 0")
            .replace("aboard = 3", "aboard = 0")
            .replace("timer_age = 2.0", "timer_age = 0.0")
            .replace("security_queue = 12", "security_queue = 0")
            .replace("subway_ticket_queue = 3", "subway_ticket_queue = 0");
        let scenario = load(&body);
        let initial = initial_state(&scenario).unwrap();
        let shares = ShareVector::new(0.4, 0.3, 0.3).unwrap();
        let (state, report) = predict(&initial, &shares, &scenario, 6.0).unwrap();
        assert_eq!(state.t, 6.0);
        assert!(report.l_x.abs() < 1e-12);
        assert!(report.l_b.abs() < 1e-12);
        assert!(report.l_s.abs() < 1e-12);
        assert_eq!(report.w_x, 0.0);
        assert_eq!(report.w_b, 4.0); // half the 8-minute headway
        assert_eq!(report.w_s, 2.0); // the train wait
    }

    #[test]
    fn split_horizons_retrace_the_direct_run_exactly() {
        let scenario = load(&scenario_toml("[6.0, 9.0, 7.0]", "[2.0]"));
        let initial = initial_state(&scenario).unwrap();
        let shares = baseline_shares(&scenario, &TollScheme::ZERO);

        let (mid, _) = predict(&initial, &shares, &scenario, 5.0).unwrap();
        let (split, split_report) = predict(&mid, &shares, &scenario, 10.0).unwrap();
        let (direct, direct_report) = predict(&initial, &shares, &scenario, 15.0).unwrap();

        assert_eq!(split.t, direct.t);
        let max_dev = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max)
        };
        assert!(max_dev(split.taxi.inner.probs(), direct.taxi.inner.probs()) < 1e-12);
        assert!(max_dev(split.ticket.probs(), direct.ticket.probs()) < 1e-12);
        assert!(max_dev(split.security.probs(), direct.security.probs()) < 1e-12);
        assert!(max_dev(split.subway_ticket.probs(), direct.subway_ticket.probs()) < 1e-12);
        assert_eq!(split.aboard, direct.aboard);
        assert!((split_report.l_max - direct_report.l_max).abs() < 1e-12);
        assert!((split_report.w_mean - direct_report.w_mean).abs() < 1e-12);
    }

    #[test]
    fn near_idle_arrivals_let_the_backlog_drain_monotonically() {
        // A trickle of demand keeps every waiting time defined while the
        // initial backlog drains against far larger service capacity.
        let scenario = load(&scenario_toml("[0.05, 0.05, 0.05]", "[2.0]"));
        let initial = initial_state(&scenario).unwrap();
        let shares = ShareVector::new(0.4, 0.3, 0.3).unwrap();
        let mut state = initial;
        let (mut last_x, mut last_s) = (f64::INFINITY, f64::INFINITY);
        for _ in 0..7 {
            let (next, report) = predict(&state, &shares, &scenario, 2.0).unwrap();
            assert!(report.l_x <= last_x + 1e-9);
            assert!(report.l_s <= last_s + 1e-9);
            last_x = report.l_x;
            last_s = report.l_s;
            state = next;
        }
        // Supply keeps flowing with nobody arriving: the queue empties.
        assert!(last_x < 1.0);
    }

    #[test]
    fn report_rows_serialize_with_header() {
        let shares = ShareVector::new(0.4, 0.3, 0.3).unwrap();
        let r = congestion_criteria(3.0, [1.0, 2.0, 3.0], [4.0, 5.0, 6.0], &shares);
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,W_X,W_B,W_S,L_X,L_B,L_S,W_mean,L_max");
        assert!(lines.next().unwrap().starts_with("3,1,2,3,"));
    }

    #[test]
    fn mismatched_state_and_scenario_dimensions_are_rejected() {
        let scenario = load(&scenario_toml("[6.0, 9.0, 7.0]", "[2.0]"));
        let other = load(&scenario_toml("[6.0, 9.0, 7.0]", "[2.0]").replace("k = 60", "k = 50"));
        let initial = initial_state(&other).unwrap();
        let shares = ShareVector::new(0.4, 0.3, 0.3).unwrap();
        assert!(predict(&initial, &shares, &scenario, 5.0).is_err());
    }
}
