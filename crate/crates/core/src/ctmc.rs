//! Transient solver for finite continuous-time Markov chains with
//! time-varying rates.
//!
//! A [`Generator`] is stored as a list of event families rather than a
//! matrix: each family couples one rate (constant or a [`RateProfile`]) to a
//! set of `(src, dst, weight)` transitions. The probability-flow derivative
//! p′ = pQ(t) is accumulated as flux per transition — mass leaving `src`
//! exactly equals mass entering `dst` — so row sums of the implied matrix are
//! zero by construction and total probability is conserved up to float
//! round-off. Stepping is classical fixed-step RK4; accuracy is controlled by
//! `dt` alone and no renormalization is ever applied: if a step leaves the
//! simplex beyond tolerance the solver reports instability instead of hiding
//! it.

use crate::error::{Error, Result};
use crate::rates::RateProfile;

/// Probability that a step may leave slightly negative before the solver
/// declares the run unstable.
pub const NEGATIVE_TOL: f64 = -1e-10;
/// Allowed deviation of a stepped vector's total mass from 1.
pub const MASS_DRIFT_TOL: f64 = 1e-6;
/// Allowed deviation from 1 for externally constructed state vectors.
pub const STATE_SUM_TOL: f64 = 1e-8;

/// Rate attached to one event family.
#[derive(Debug, Clone)]
pub enum EventRate {
    Constant(f64),
    Profile(RateProfile),
}

impl EventRate {
    /// Rate at `t`. Profile lookups clamp at the horizon edges: the RK4
    /// stage at the final step evaluates exactly at the horizon end, where
    /// the half-open profile's last value is the right-continuous limit.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            EventRate::Constant(c) => *c,
            EventRate::Profile(p) => p.eval_clamped(t),
        }
    }
}

/// One state-to-state transition within an event family. `weight` is the
/// state-dependent multiplier on the family rate (e.g. `min(n, c)` for a
/// multi-server service event).
#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub src: u32,
    pub dst: u32,
    pub weight: f64,
}

#[derive(Debug, Clone)]
struct EventFamily {
    rate: EventRate,
    transitions: Vec<Transition>,
}

/// Sparse action of a time-dependent generator matrix Q(t) on row vectors.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    label: String,
    families: Vec<EventFamily>,
}

impl Generator {
    pub fn new(dim: usize, label: impl Into<String>) -> Self {
        assert!(dim >= 1, "generator needs at least one state");
        Generator { dim, label: label.into(), families: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Attach an event family. Transitions must stay inside the state space,
    /// never self-loop, and carry nonnegative weights; a constant rate must
    /// be nonnegative and finite.
    pub fn add_family(&mut self, rate: EventRate, transitions: Vec<Transition>) -> Result<()> {
        if let EventRate::Constant(c) = &rate {
            if !(c.is_finite() && *c >= 0.0) {
                return Err(Error::invalid("event rate", "constant rate must be finite and >= 0"));
            }
        }
        for tr in &transitions {
            if tr.src as usize >= self.dim || tr.dst as usize >= self.dim {
                return Err(Error::invalid(
                    "transition",
                    format!("({} -> {}) outside state space of size {}", tr.src, tr.dst, self.dim),
                ));
            }
            if tr.src == tr.dst {
                return Err(Error::invalid("transition", "self-loops are not representable"));
            }
            if !(tr.weight.is_finite() && tr.weight >= 0.0) {
                return Err(Error::invalid("transition", "weight must be finite and >= 0"));
            }
        }
        self.families.push(EventFamily { rate, transitions });
        Ok(())
    }

    /// Derivative of the probability row vector: `out = p Q(t)`.
    pub fn apply(&self, probs: &[f64], t: f64, out: &mut [f64]) {
        debug_assert_eq!(probs.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        out.fill(0.0);
        for fam in &self.families {
            let r = fam.rate.eval(t);
            if r == 0.0 {
                continue;
            }
            for tr in &fam.transitions {
                let flux = r * tr.weight * probs[tr.src as usize];
                out[tr.src as usize] -= flux;
                out[tr.dst as usize] += flux;
            }
        }
    }

    /// Materialize Q(t) as a dense row-major matrix (diagonal = negative row
    /// sum). Intended for small chains: cross-checks and stationary solves.
    pub fn to_dense(&self, t: f64) -> Vec<f64> {
        let n = self.dim;
        let mut q = vec![0.0; n * n];
        for fam in &self.families {
            let r = fam.rate.eval(t);
            for tr in &fam.transitions {
                q[tr.src as usize * n + tr.dst as usize] += r * tr.weight;
            }
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|j| *j != i).map(|j| q[i * n + j]).sum();
            q[i * n + i] = -off;
        }
        q
    }
}

/// Probability vector over the truncated state space at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientState {
    pub t: f64,
    probs: Vec<f64>,
}

impl TransientState {
    /// Validating constructor: entries within `[-1e-10, 1]`-ish and total
    /// mass within [`STATE_SUM_TOL`] of 1.
    pub fn new(t: f64, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("state", "empty probability vector"));
        }
        let min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min >= NEGATIVE_TOL) {
            return Err(Error::invalid("state", format!("entry {min} below {NEGATIVE_TOL}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STATE_SUM_TOL {
            return Err(Error::invalid("state", format!("mass {sum} deviates from 1")));
        }
        Ok(TransientState { t, probs })
    }

    /// Point mass on `index`.
    pub fn point_mass(dim: usize, index: usize, t: f64) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid("state", format!("point mass at {index} in space of {dim}")));
        }
        let mut probs = vec![0.0; dim];
        probs[index] = 1.0;
        Ok(TransientState { t, probs })
    }

    pub(crate) fn from_validated(t: f64, probs: Vec<f64>) -> Self {
        TransientState { t, probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Expectation of `weight(index)` under the state's distribution.
pub fn expected_count(state: &TransientState, weight: impl Fn(usize) -> f64) -> f64 {
    state.probs.iter().enumerate().map(|(i, p)| p * weight(i)).sum()
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(dim: usize) -> Self {
        Rk4Scratch {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

fn rk4_into(
    gen: &Generator,
    probs: &[f64],
    t: f64,
    dt: f64,
    s: &mut Rk4Scratch,
    out: &mut Vec<f64>,
) {
    let n = probs.len();
    gen.apply(probs, t, &mut s.k1);
    for i in 0..n {
        s.tmp[i] = probs[i] + 0.5 * dt * s.k1[i];
    }
    gen.apply(&s.tmp, t + 0.5 * dt, &mut s.k2);
    for i in 0..n {
        s.tmp[i] = probs[i] + 0.5 * dt * s.k2[i];
    }
    gen.apply(&s.tmp, t + 0.5 * dt, &mut s.k3);
    for i in 0..n {
        s.tmp[i] = probs[i] + dt * s.k3[i];
    }
    gen.apply(&s.tmp, t + dt, &mut s.k4);
    out.clear();
    out.extend(
        (0..n).map(|i| probs[i] + dt / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i])),
    );
}

fn check_step(gen: &Generator, t_next: f64, probs: &[f64]) -> Result<()> {
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    for p in probs {
        min = min.min(*p);
        sum += *p;
    }
    if min < NEGATIVE_TOL {
        return Err(Error::Instability {
            chain: gen.label().to_string(),
            t: t_next,
            what: format!("probability {min} fell below {NEGATIVE_TOL}"),
        });
    }
    if (sum - 1.0).abs() > MASS_DRIFT_TOL {
        return Err(Error::Instability {
            chain: gen.label().to_string(),
            t: t_next,
            what: format!("total mass drifted to {sum}"),
        });
    }
    Ok(())
}

/// One RK4 step of `p′ = p Q(t)` from `state.t` over `dt`. The result is
/// validated, never renormalized.
pub fn rk4_step(gen: &Generator, state: &TransientState, dt: f64) -> Result<TransientState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive and finite"));
    }
    if state.dim() != gen.dim() {
        return Err(Error::invalid(
            "state",
            format!("dimension {} does not match generator {}", state.dim(), gen.dim()),
        ));
    }
    let mut s = Rk4Scratch::new(state.dim());
    let mut out = Vec::with_capacity(state.dim());
    rk4_into(gen, state.probs(), state.t, dt, &mut s, &mut out);
    check_step(gen, state.t + dt, &out)?;
    Ok(TransientState::from_validated(state.t + dt, out))
}

fn run_steps(
    gen: &Generator,
    initial: &TransientState,
    t_end: f64,
    dt: f64,
    mut on_state: impl FnMut(&TransientState),
) -> Result<TransientState> {
    if !(t_end > initial.t) {
        return Err(Error::invalid("t_end", format!("{t_end} must exceed initial t {}", initial.t)));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive and finite"));
    }
    if initial.dim() != gen.dim() {
        return Err(Error::invalid(
            "state",
            format!("dimension {} does not match generator {}", initial.dim(), gen.dim()),
        ));
    }
    let span = t_end - initial.t;
    // Steps are laid out multiplicatively from the initial time so the grid
    // does not accumulate float drift; a short remainder step lands exactly
    // on t_end.
    let n_full = (span / dt + 1e-9).floor() as u64;
    let remainder = span - n_full as f64 * dt;
    let mut scratch = Rk4Scratch::new(gen.dim());
    let mut probs = initial.probs().to_vec();
    let mut next = Vec::with_capacity(gen.dim());
    let mut current = TransientState::from_validated(initial.t, probs.clone());
    on_state(&current);
    for k in 0..n_full {
        let t_k = initial.t + k as f64 * dt;
        rk4_into(gen, &probs, t_k, dt, &mut scratch, &mut next);
        check_step(gen, t_k + dt, &next)?;
        std::mem::swap(&mut probs, &mut next);
        let t_next = if k + 1 == n_full && remainder <= 1e-9 * dt { t_end } else { t_k + dt };
        current = TransientState::from_validated(t_next, probs.clone());
        on_state(&current);
    }
    if remainder > 1e-9 * dt {
        let t_k = initial.t + n_full as f64 * dt;
        rk4_into(gen, &probs, t_k, remainder, &mut scratch, &mut next);
        check_step(gen, t_end, &next)?;
        std::mem::swap(&mut probs, &mut next);
        current = TransientState::from_validated(t_end, probs.clone());
        on_state(&current);
    } else if current.t != t_end {
        // Span smaller than a step's round-off: no dynamics to integrate,
        // but the returned stamp must still be t_end.
        current = TransientState::from_validated(t_end, probs.clone());
        on_state(&current);
    }
    Ok(current)
}

/// Solve to `t_end`, returning the state at the initial time and at every
/// step boundary (the last lands exactly on `t_end`).
pub fn solve_transient(
    gen: &Generator,
    initial: &TransientState,
    t_end: f64,
    dt: f64,
) -> Result<Vec<TransientState>> {
    let mut states = Vec::new();
    run_steps(gen, initial, t_end, dt, |s| states.push(s.clone()))?;
    Ok(states)
}

/// Solve to `t_end`, keeping only the final state. Same stepping as
/// [`solve_transient`], without storing the trajectory.
pub fn advance(
    gen: &Generator,
    initial: &TransientState,
    t_end: f64,
    dt: f64,
) -> Result<TransientState> {
    run_steps(gen, initial, t_end, dt, |_| {})
}

/// State-space size for a growth-bounded chain: initial occupancy plus the
/// smallest count whose Poisson(total expected arrivals) upper tail is below
/// `tail_eps`. Ignoring service (the `service_capacity` argument documents
/// the discarded drain) makes the bound an honest worst case: the count can
/// never exceed initial + arrivals.
pub fn choose_truncation(
    initial_count: usize,
    arrival_profile: &RateProfile,
    horizon: f64,
    _service_capacity: f64,
    tail_eps: f64,
) -> Result<usize> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon", "must be positive and finite"));
    }
    if !(tail_eps > 0.0 && tail_eps < 1.0) {
        return Err(Error::invalid("tail_eps", "must lie in (0, 1)"));
    }
    let start = arrival_profile.start();
    let mass = arrival_profile.mean_extended(start, start + horizon)? * horizon;
    Ok(initial_count + poisson_upper_quantile(mass, tail_eps))
}

/// Smallest `k >= mode` with `P(Poisson(mean) > k) < eps`, for small `eps`
/// (the quantile of interest always sits above the mode). Computed from pmf
/// terms scaled relative to the mode, so it stays usable far beyond the range
/// where `exp(-mean)` underflows.
pub fn poisson_upper_quantile(mean: f64, eps: f64) -> usize {
    assert!(mean >= 0.0 && mean.is_finite());
    assert!(eps > 0.0 && eps < 0.5, "quantile walk only covers the upper tail");
    if mean == 0.0 {
        return 0;
    }
    let mode = mean.floor() as usize;
    // Unnormalized pmf with value 1 at the mode; terms decay superexponentially
    // away from it, so cutting at 1e-22 leaves relative error far below eps.
    const CUT: f64 = 1e-22;
    let mut above = Vec::new(); // pmf at indices mode+1, mode+2, ...
    let mut term = 1.0f64;
    let mut k = mode;
    loop {
        k += 1;
        term *= mean / k as f64;
        if term < CUT {
            break;
        }
        above.push(term);
    }
    let mut below_sum = 0.0f64; // pmf mass at indices mode-1 .. 0
    term = 1.0;
    let mut j = mode;
    while j > 0 {
        term *= j as f64 / mean;
        if term < CUT {
            break;
        }
        below_sum += term;
        j -= 1;
    }
    let above_total: f64 = above.iter().rev().sum();
    let total = below_sum + 1.0 + above_total;
    // tail(mode + i) = sum of above[j] for j >= i. Walk inward from the far
    // end, keeping the smallest index whose tail stays under the bound.
    let limit = eps * total;
    let mut suffix = 0.0f64;
    let mut quantile = mode + above.len();
    for i in (0..above.len()).rev() {
        suffix += above[i];
        if suffix < limit {
            quantile = mode + i;
        } else {
            break;
        }
    }
    quantile
}

/// Birth–death generator over `0..=capacity`: births at `arrival`, deaths at
/// `min(n, servers) * mu`. Covers M/M/c/K ticket offices and truncated M/M/c
/// station stages.
pub fn birth_death_generator(
    arrival: EventRate,
    mu: f64,
    servers: usize,
    capacity: usize,
    label: impl Into<String>,
) -> Result<Generator> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid("mu", "service rate must be finite and >= 0"));
    }
    if servers == 0 {
        return Err(Error::invalid("servers", "need at least one server"));
    }
    let mut gen = Generator::new(capacity + 1, label);
    if capacity > 0 {
        let births = (0..capacity)
            .map(|n| Transition { src: n as u32, dst: n as u32 + 1, weight: 1.0 })
            .collect();
        gen.add_family(arrival, births)?;
        let deaths = (1..=capacity)
            .map(|n| Transition {
                src: n as u32,
                dst: n as u32 - 1,
                weight: n.min(servers) as f64,
            })
            .collect();
        gen.add_family(EventRate::Constant(mu), deaths)?;
    }
    Ok(gen)
}

/// Append sparse trajectory rows `t,index,prob` for one snapshot, skipping
/// entries below `min_prob`.
pub fn append_snapshot_csv<W: std::io::Write>(
    state: &TransientState,
    min_prob: f64,
    w: &mut W,
) -> Result<()> {
    for (i, p) in state.probs().iter().enumerate() {
        if *p >= min_prob {
            writeln!(w, "{},{},{}", state.t, i, p)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flip_generator() -> Generator {
        let mut g = Generator::new(2, "flip");
        g.add_family(
            EventRate::Constant(1.0),
            vec![
                Transition { src: 0, dst: 1, weight: 1.0 },
                Transition { src: 1, dst: 0, weight: 1.0 },
            ],
        )
        .unwrap();
        g
    }

    #[test]
    fn zero_generator_leaves_state_unchanged() {
        let g = Generator::new(2, "absorbing");
        let s0 = TransientState::new(0.0, vec![0.3, 0.7]).unwrap();
        let s = advance(&g, &s0, 5.0, 0.01).unwrap();
        assert_eq!(s.probs(), &[0.3, 0.7]);
        assert_eq!(s.t, 5.0);
    }

    #[test]
    fn two_state_flip_matches_closed_form() {
        // For symmetric rate 1 both ways, p0(t) = 0.5 + 0.5 exp(-2t).
        let g = flip_generator();
        let s0 = TransientState::point_mass(2, 0, 0.0).unwrap();
        let s = advance(&g, &s0, 5.0, 0.005).unwrap();
        let expect0 = 0.5 + 0.5 * (-10.0f64).exp();
        assert!((s.probs()[0] - expect0).abs() < 1e-6);
        assert!((s.probs()[1] - (1.0 - expect0)).abs() < 1e-6);
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let g = flip_generator();
        let s0 = TransientState::point_mass(2, 0, 0.0).unwrap();
        let exact = 0.5 + 0.5 * (-2.0f64).exp();
        let err = |dt: f64| {
            let s = advance(&g, &s0, 1.0, dt).unwrap();
            (s.probs()[0] - exact).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 / e2 >= 12.0, "halving dt shrank error only {}x", e1 / e2);
    }

    #[test]
    fn mm1_relaxes_to_stationary_mean() {
        // M/M/1 truncated at K=50, lambda=0.5, mu=1, empty start. The spectral
        // gap is (1 - sqrt(1/2))^2 ~ 0.086, so the transient mean is still
        // 7.3e-3 away from stationary at t=30 and enters the 1e-4 band only
        // around t~90. Both facts are pinned: t=30 against a high-accuracy
        // reference integration, t=90 against the stationary linear solve.
        let g = birth_death_generator(EventRate::Constant(0.5), 1.0, 1, 50, "mm1").unwrap();
        let s0 = TransientState::point_mass(51, 0, 0.0).unwrap();
        let states = solve_transient(&g, &s0, 90.0, 0.005).unwrap();
        let mean_at = |t: f64| {
            let s = states.iter().find(|s| (s.t - t).abs() < 1e-9).unwrap();
            expected_count(s, |i| i as f64)
        };
        assert!((mean_at(30.0) - 0.992_744_98).abs() < 1e-6);

        // Stationary mean of the truncated chain by linear solve: pi Q = 0.
        let q = g.to_dense(0.0);
        let n = 51;
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(j, i)] = q[i * n + j]; // transpose: solve Q^T pi = 0
            }
        }
        for i in 0..n {
            a[(n - 1, i)] = 1.0; // replace last equation with normalization
        }
        let mut b = nalgebra::DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        let pi = a.lu().solve(&b).unwrap();
        let stat_mean: f64 = (0..n).map(|i| pi[i] * i as f64).sum();
        assert!((stat_mean - 1.0).abs() < 1e-6, "truncated stationary mean {stat_mean}");
        assert!((mean_at(90.0) - stat_mean).abs() < 1e-4);
    }

    #[test]
    fn solver_grid_lands_exactly_on_t_end() {
        let g = flip_generator();
        let s0 = TransientState::point_mass(2, 0, 0.0).unwrap();
        let states = solve_transient(&g, &s0, 1.0, 0.3).unwrap();
        let ts: Vec<f64> = states.iter().map(|s| s.t).collect();
        assert_eq!(ts.len(), 5); // 0, .3, .6, .9, 1.0
        assert_eq!(*ts.last().unwrap(), 1.0);
        let s_adv = advance(&g, &s0, 1.0, 0.3).unwrap();
        assert_eq!(s_adv.probs(), states.last().unwrap().probs());
    }

    #[test]
    fn oversized_dt_reports_instability_not_garbage() {
        let g = birth_death_generator(EventRate::Constant(0.0), 50.0, 1, 5, "stiff").unwrap();
        let s0 = TransientState::point_mass(6, 5, 0.0).unwrap();
        let r = advance(&g, &s0, 10.0, 1.0);
        match r {
            Err(Error::Instability { chain, .. }) => assert_eq!(chain, "stiff"),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn truncation_uses_the_poisson_tail_of_total_inflow() {
        // Frozen quantiles computed independently from the regularized
        // gamma/Poisson survival function: P(Poisson(90) > 152) = 9.7e-10 is
        // the first below 1e-9 (151 gives 1.66e-9); Poisson(360) crosses at 479.
        let p3 = RateProfile::constant(3.0, 0.0, 30.0).unwrap();
        assert_eq!(choose_truncation(0, &p3, 30.0, 4.0, 1e-9).unwrap(), 152);
        let p12 = RateProfile::constant(12.0, 0.0, 30.0).unwrap();
        let k12 = choose_truncation(0, &p12, 30.0, 4.0, 1e-9).unwrap();
        assert_eq!(k12, 479);
        assert!(k12 >= 360);
        let zero = RateProfile::constant(0.0, 0.0, 30.0).unwrap();
        assert_eq!(choose_truncation(5, &zero, 30.0, 4.0, 1e-9).unwrap(), 5);
    }

    #[test]
    fn poisson_quantile_matches_direct_summation_for_small_means() {
        // Small means stay inside plain f64 pmf arithmetic, so sum directly.
        for &(mean, eps) in &[(3.0, 1e-6), (0.5, 1e-9), (7.2, 1e-4)] {
            let mut term = (-mean as f64).exp();
            let mut cdf = term;
            let mut k = 0usize;
            while 1.0 - cdf >= eps {
                k += 1;
                term *= mean / k as f64;
                cdf += term;
            }
            assert_eq!(poisson_upper_quantile(mean, eps), k, "mean={mean} eps={eps}");
        }
    }

    #[test]
    fn dense_form_has_zero_row_sums() {
        let g = birth_death_generator(EventRate::Constant(2.0), 1.5, 3, 10, "bd").unwrap();
        let q = g.to_dense(0.0);
        for i in 0..11 {
            let row: f64 = (0..11).map(|j| q[i * 11 + j]).sum();
            assert!(row.abs() < 1e-12);
        }
    }

    #[test]
    fn snapshot_csv_skips_negligible_entries() {
        let s = TransientState::new(2.0, vec![0.5, 0.5, 0.0]).unwrap();
        let mut buf = Vec::new();
        append_snapshot_csv(&s, 1e-12, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "2,0,0.5\n2,1,0.5\n");
    }

    #[test]
    fn state_constructor_rejects_bad_vectors() {
        assert!(TransientState::new(0.0, vec![0.5, 0.6]).is_err());
        assert!(TransientState::new(0.0, vec![-1e-3, 1.001]).is_err());
        assert!(TransientState::new(0.0, vec![]).is_err());
        assert!(TransientState::new(0.0, vec![1.0 - 5e-9, 5e-9]).is_ok());
    }

    fn arb_bd() -> impl Strategy<Value = (Generator, usize)> {
        (2usize..30, 0.0f64..8.0, 0.1f64..8.0, 1usize..4).prop_map(|(cap, lam, mu, c)| {
            let profile = RateProfile::new(
                vec![0.0, 1.0, 2.0, 40.0],
                vec![lam, lam * 0.3, lam * 1.7],
            )
            .unwrap();
            (
                birth_death_generator(EventRate::Profile(profile), mu, c, cap, "prop-bd").unwrap(),
                cap,
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn derivative_conserves_total_mass((gen, cap) in arb_bd(), seed in 0u64..1000, t in 0.0f64..39.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut p: Vec<f64> = (0..=cap).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= total);
            let mut d = vec![0.0; cap + 1];
            gen.apply(&p, t, &mut d);
            let dsum: f64 = d.iter().sum();
            prop_assert!(dsum.abs() < 1e-12, "derivative mass leak {dsum}");
        }

        #[test]
        fn trajectories_stay_on_the_simplex((gen, cap) in arb_bd(), start in 0usize..5) {
            let s0 = TransientState::point_mass(cap + 1, start.min(cap), 0.0).unwrap();
            let states = solve_transient(&gen, &s0, 5.0, 0.01).unwrap();
            for s in &states {
                prop_assert!((s.total_mass() - 1.0).abs() < 1e-9);
                let min = s.probs().iter().cloned().fold(f64::INFINITY, f64::min);
                prop_assert!(min >= NEGATIVE_TOL);
            }
        }
    }
}
