//! Tandem subway stages: security check and ticketing, each an M/M/c/K
//! chain, followed by a fixed wait for the next train.
//!
//! The two stages are treated as independent chains coupled only through
//! their arrival rates. Which stage comes first is configurable; the rate
//! reaching the second stage is throttled by the first stage's service
//! capacity, and only the on-spot-ticket fraction `q_S` passes through the
//! ticketing stage at all.

use crate::ctmc::{self, EventRate, Generator, TransientState};
use crate::error::{Error, Result};
use crate::rates::RateProfile;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageOrder {
    #[default]
    SecurityFirst,
    TicketFirst,
}

#[derive(Debug, Clone)]
pub struct SubwayParams {
    /// Total subway-bound demand (per minute).
    pub lambda_s: RateProfile,
    /// Probability a passenger buys a ticket on the spot.
    pub q_s: f64,
    /// Per-lane security screening rate (passengers per minute).
    pub mu_s1: f64,
    /// Per-window ticketing rate (passengers per minute).
    pub mu_s2: f64,
    pub c_s1: usize,
    pub c_s2: usize,
    pub k_s1: usize,
    pub k_s2: usize,
    /// Minutes until the next train departs.
    pub m: f64,
    pub order: StageOrder,
}

impl SubwayParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q_s) {
            return Err(Error::invalid("subway.q_s", "must lie in [0, 1]"));
        }
        for (name, rate) in [("subway.mu_s1", self.mu_s1), ("subway.mu_s2", self.mu_s2)] {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::invalid(name, "service rate must be positive"));
            }
        }
        if self.c_s1 < 1 || self.c_s2 < 1 {
            return Err(Error::invalid("subway.c", "need at least one server per stage"));
        }
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(Error::invalid("subway.m", "train wait must be nonnegative"));
        }
        Ok(())
    }

    /// Stage utilizations at rate `lambda_s_now` — diagnostic only.
    pub fn utilizations(&self, lambda_s_now: f64) -> (f64, f64) {
        let (l1, l2) = subway_stage_rates(self, lambda_s_now);
        (l1 / (self.c_s1 as f64 * self.mu_s1), l2 / (self.c_s2 as f64 * self.mu_s2))
    }

    /// Arrival profile of the security stage.
    pub fn security_profile(&self) -> RateProfile {
        match self.order {
            StageOrder::SecurityFirst => self.lambda_s.clone(),
            StageOrder::TicketFirst => {
                let (q, cap2) = (self.q_s, self.c_s2 as f64 * self.mu_s2);
                self.lambda_s.map(|l| (q * l).min(cap2) + (1.0 - q) * l)
            }
        }
    }

    /// Arrival profile of the ticketing stage.
    pub fn ticket_profile(&self) -> RateProfile {
        match self.order {
            StageOrder::SecurityFirst => {
                let (q, cap1) = (self.q_s, self.c_s1 as f64 * self.mu_s1);
                self.lambda_s.map(|l| q * l.min(cap1))
            }
            StageOrder::TicketFirst => self.lambda_s.scale(self.q_s),
        }
    }
}

/// Arrival rates (security, ticketing) seen by the two stages at one
/// instant. The downstream stage receives at most the upstream service
/// capacity; the fraction that skips the ticket window bypasses that stage
/// entirely.
pub fn subway_stage_rates(params: &SubwayParams, lambda_s_now: f64) -> (f64, f64) {
    let cap1 = params.c_s1 as f64 * params.mu_s1;
    let cap2 = params.c_s2 as f64 * params.mu_s2;
    match params.order {
        StageOrder::SecurityFirst => {
            (lambda_s_now, params.q_s * lambda_s_now.min(cap1))
        }
        StageOrder::TicketFirst => {
            let l2 = params.q_s * lambda_s_now;
            (l2.min(cap2) + (1.0 - params.q_s) * lambda_s_now, l2)
        }
    }
}

/// M/M/c/K generator for the security stage.
pub fn build_security_generator(params: &SubwayParams) -> Result<Generator> {
    params.validate()?;
    ctmc::birth_death_generator(
        EventRate::Profile(params.security_profile()),
        params.mu_s1,
        params.c_s1,
        params.k_s1,
        "subway-security",
    )
}

/// M/M/c/K generator for the ticketing stage.
pub fn build_subway_ticket_generator(params: &SubwayParams) -> Result<Generator> {
    params.validate()?;
    ctmc::birth_death_generator(
        EventRate::Profile(params.ticket_profile()),
        params.mu_s2,
        params.c_s2,
        params.k_s2,
        "subway-ticket",
    )
}

/// Subway sojourn time: security wait by Little's law on the whole inflow,
/// ticket wait weighted by the on-spot fraction, plus the train wait `M`.
pub fn subway_sojourn(
    sec_state: &TransientState,
    tick_state: &TransientState,
    params: &SubwayParams,
    lambda_s_now: f64,
    lambda_s2_now: f64,
) -> Result<f64> {
    let l_s1 = ctmc::expected_count(sec_state, |n| n as f64);
    let l_s2 = ctmc::expected_count(tick_state, |n| n as f64);
    if lambda_s_now <= 0.0 {
        return Err(Error::UndefinedWait { chain: "subway".into(), queued: l_s1 + l_s2 });
    }
    let ticket_term =
        if lambda_s2_now > 0.0 { params.q_s * l_s2 / lambda_s2_now } else { 0.0 };
    Ok(l_s1 / lambda_s_now + ticket_term + params.m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(order: StageOrder, q_s: f64) -> SubwayParams {
        SubwayParams {
            lambda_s: RateProfile::constant(6.0, 0.0, 60.0).unwrap(),
            q_s,
            mu_s1: 8.0,
            mu_s2: 1.0,
            c_s1: 2,
            c_s2: 2,
            k_s1: 80,
            k_s2: 80,
            m: 2.0,
            order,
        }
    }

    #[test]
    fn security_first_with_no_onspot_buyers_idles_the_ticket_stage() {
        let p = params(StageOrder::SecurityFirst, 0.0);
        let (l1, l2) = subway_stage_rates(&p, 6.0);
        assert_eq!(l1, 6.0);
        assert_eq!(l2, 0.0);
    }

    #[test]
    fn security_first_throttles_the_ticket_stage_at_screening_capacity() {
        let mut p = params(StageOrder::SecurityFirst, 0.5);
        p.mu_s1 = 8.0;
        p.c_s1 = 2; // capacity 16 < arrival 20
        let (l1, l2) = subway_stage_rates(&p, 20.0);
        assert_eq!(l1, 20.0);
        assert_eq!(l2, 8.0);
    }

    #[test]
    fn ticket_first_with_everyone_buying_forwards_the_full_flow() {
        let mut p = params(StageOrder::TicketFirst, 1.0);
        p.mu_s2 = 4.0;
        p.c_s2 = 2; // capacity 8 >= arrival 6
        let (l1, l2) = subway_stage_rates(&p, 6.0);
        assert_eq!(l2, 6.0);
        assert_eq!(l1, 6.0);
    }

    #[test]
    fn stage_profiles_agree_with_pointwise_rates() {
        for order in [StageOrder::SecurityFirst, StageOrder::TicketFirst] {
            let mut p = params(order, 0.5);
            p.lambda_s = RateProfile::new(vec![0.0, 10.0, 60.0], vec![20.0, 4.0]).unwrap();
            let sec = p.security_profile();
            let tick = p.ticket_profile();
            for t in [0.0, 5.0, 10.0, 30.0] {
                let lam = p.lambda_s.eval_rate(t).unwrap();
                let (l1, l2) = subway_stage_rates(&p, lam);
                assert!((sec.eval_rate(t).unwrap() - l1).abs() < 1e-12);
                assert!((tick.eval_rate(t).unwrap() - l2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sojourn_of_empty_stages_is_the_train_wait() {
        let p = params(StageOrder::SecurityFirst, 0.3);
        let sec = TransientState::point_mass(81, 0, 0.0).unwrap();
        let tick = TransientState::point_mass(81, 0, 0.0).unwrap();
        let w = subway_sojourn(&sec, &tick, &p, 6.0, 1.8).unwrap();
        assert_eq!(w, 2.0);
    }

    #[test]
    fn sojourn_arithmetic_and_zero_rate_edges() {
        let p = params(StageOrder::SecurityFirst, 0.0);
        let sec = TransientState::point_mass(81, 57, 0.0).unwrap();
        let tick = TransientState::point_mass(81, 6, 0.0).unwrap();
        // q_S = 0: ticket term vanishes regardless of L_S2.
        let w = subway_sojourn(&sec, &tick, &p, 6.0, 0.0).unwrap();
        assert!((w - (9.5 + 2.0)).abs() < 1e-12);

        let p2 = params(StageOrder::SecurityFirst, 0.3);
        let w2 = subway_sojourn(&sec, &tick, &p2, 6.0, 1.8).unwrap();
        assert!((w2 - (9.5 + 0.3 * 6.0 / 1.8 + 2.0)).abs() < 1e-12);

        // Dead inflow: waiting time undefined, surfaced as an error.
        assert!(matches!(
            subway_sojourn(&sec, &tick, &p2, 0.0, 0.0),
            Err(Error::UndefinedWait { ref chain, .. }) if chain == "subway"
        ));
    }

    #[test]
    fn sojourn_without_a_security_station_reduces_to_the_ticket_terms() {
        let p = params(StageOrder::TicketFirst, 0.5);
        let sec = TransientState::point_mass(81, 0, 0.0).unwrap();
        let tick = TransientState::point_mass(81, 6, 0.0).unwrap();
        let w = subway_sojourn(&sec, &tick, &p, 6.0, 3.0).unwrap();
        assert!((w - (0.5 * 6.0 / 3.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn sojourn_never_undershoots_the_train_wait() {
        let p = params(StageOrder::SecurityFirst, 0.7);
        for (n1, n2) in [(0usize, 0usize), (3, 0), (0, 9), (40, 17)] {
            let sec = TransientState::point_mass(81, n1, 0.0).unwrap();
            let tick = TransientState::point_mass(81, n2, 0.0).unwrap();
            let w = subway_sojourn(&sec, &tick, &p, 4.0, 1.0).unwrap();
            assert!(w >= p.m);
            if n1 == 0 && n2 == 0 {
                assert_eq!(w, p.m);
            }
        }
    }

    #[test]
    fn transient_stage_chains_stay_on_the_simplex() {
        let p = params(StageOrder::SecurityFirst, 0.5);
        let sec_gen = build_security_generator(&p).unwrap();
        let tick_gen = build_subway_ticket_generator(&p).unwrap();
        let sec0 = TransientState::point_mass(p.k_s1 + 1, 57, 0.0).unwrap();
        let tick0 = TransientState::point_mass(p.k_s2 + 1, 6, 0.0).unwrap();
        let sec = ctmc::advance(&sec_gen, &sec0, 15.0, 0.01).unwrap();
        let tick = ctmc::advance(&tick_gen, &tick0, 15.0, 0.01).unwrap();
        assert!((sec.total_mass() - 1.0).abs() < 1e-9);
        assert!((tick.total_mass() - 1.0).abs() < 1e-9);
        // Screening capacity 16 with inflow 6 drains the backlog fast.
        assert!(ctmc::expected_count(&sec, |n| n as f64) < 1.0);
    }

    #[test]
    fn params_validation_rejects_degenerate_configs() {
        let mut p = params(StageOrder::SecurityFirst, 0.5);
        assert!(p.validate().is_ok());
        p.q_s = 1.5;
        assert!(p.validate().is_err());
        p.q_s = 0.5;
        p.mu_s2 = 0.0;
        assert!(p.validate().is_err());
        p.mu_s2 = 1.0;
        p.m = -1.0;
        assert!(p.validate().is_err());
    }
}
