//! Share equilibrium by the method of successive weighted averages.
//!
//! Predicted waiting times feed the logit share model, whose output feeds
//! the next waiting-time prediction; iterates are blended with a decaying
//! step size so the feedback loop settles instead of oscillating. Every
//! iteration re-predicts from the same initial network snapshot — the
//! planning instant is fixed, only the assumed shares move.

use crate::choice::{self, TollScheme};
use crate::error::{Error, Result};
use crate::network::{self, CongestionReport, NetworkState};
use crate::rates::ShareVector;
use crate::scenario::Scenario;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MswaConfig {
    /// Step-size exponent: higher values weight late iterates more.
    #[serde(default = "default_d")]
    pub d: f64,
    /// Relative-change convergence threshold.
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Evaluation horizon in minutes: waiting times are predicted this far
    /// ahead of the initial snapshot.
    #[serde(default = "default_t_e")]
    pub t_e: f64,
}

fn default_d() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    1e-4
}
fn default_max_iter() -> usize {
    100
}
fn default_t_e() -> f64 {
    15.0
}

impl Default for MswaConfig {
    fn default() -> Self {
        MswaConfig {
            d: default_d(),
            eps: default_eps(),
            max_iter: default_max_iter(),
            t_e: default_t_e(),
        }
    }
}

impl MswaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(Error::invalid("mswa.d", "exponent must be nonnegative"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("mswa.eps", "threshold must be positive"));
        }
        if self.max_iter < 1 {
            return Err(Error::invalid("mswa.max_iter", "need at least one iteration"));
        }
        if !(self.t_e > 0.0 && self.t_e.is_finite()) {
            return Err(Error::invalid("mswa.t_e", "evaluation horizon must be positive"));
        }
        Ok(())
    }
}

/// Blending weight of iteration `l >= 1`: `l^d / (1^d + ... + l^d)`.
pub fn step_size(l: usize, d: f64) -> f64 {
    assert!(l >= 1, "step size is defined from iteration 1");
    let num = (l as f64).powf(d);
    let den: f64 = (1..=l).map(|k| (k as f64).powf(d)).sum();
    num / den
}

/// One iteration record: the blended shares, the waits they produce, and
/// the relative change from the previous iterate (NaN for the start row).
#[derive(Debug, Clone, PartialEq)]
pub struct MswaRow {
    pub iter: usize,
    pub shares: ShareVector,
    pub w: [f64; 3],
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MswaTrace {
    pub rows: Vec<MswaRow>,
    pub converged: bool,
}

impl MswaTrace {
    /// CSV rows `iter,alpha,beta,gamma,W_X,W_B,W_S,error`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "iter,alpha,beta,gamma,W_X,W_B,W_S,error")?;
        for row in &self.rows {
            let s = row.shares.as_array();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.iter, s[0], s[1], s[2], row.w[0], row.w[1], row.w[2], row.error
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MswaOutcome {
    pub shares: ShareVector,
    pub report: CongestionReport,
    pub trace: MswaTrace,
}

fn relative_change(next: &[f64; 3], prev: &[f64; 3]) -> f64 {
    let diff_sq: f64 = next.iter().zip(prev).map(|(a, b)| (a - b) * (a - b)).sum();
    let l1: f64 = prev.iter().map(|x| x.abs()).sum();
    diff_sq.sqrt() / l1
}

/// Iterate share prediction against queueing evaluation to the lower-level
/// equilibrium under the given tolls.
///
/// Starts from the no-wait logit split, blends each logit response into the
/// running shares with [`step_size`], and stops when the relative change
/// drops to `eps`. Hitting `max_iter` is not an error: the best iterate by
/// relative change is returned, flagged unconverged in the trace.
pub fn mswa_solve(
    initial: &NetworkState,
    scenario: &Scenario,
    tolls: &TollScheme,
    cfg: &MswaConfig,
) -> Result<MswaOutcome> {
    cfg.validate()?;
    tolls.validate()?;
    let params = scenario.utility_params();

    let mut shares = choice::aggregate_shares(&params, [0.0; 3], tolls);
    let (_, mut report) = network::predict(initial, &shares, scenario, cfg.t_e)?;
    let wait_of = |r: &CongestionReport| [r.w_x, r.w_b, r.w_s];
    let mut rows =
        vec![MswaRow { iter: 0, shares: shares.clone(), w: wait_of(&report), error: f64::NAN }];
    let mut reports = vec![report.clone()];
    let mut converged = false;

    for l in 1..=cfg.max_iter {
        let response = choice::aggregate_shares(&params, wait_of(&report), tolls);
        let chi = step_size(l, cfg.d);
        let prev = shares.as_array();
        let resp = response.as_array();
        let mut blended = [0.0f64; 3];
        for i in 0..3 {
            blended[i] = prev[i] + chi * (resp[i] - prev[i]);
        }
        let error = relative_change(&blended, &prev);
        shares = ShareVector::from_array(blended)?;
        let (_, next_report) = network::predict(initial, &shares, scenario, cfg.t_e)?;
        report = next_report;
        rows.push(MswaRow { iter: l, shares: shares.clone(), w: wait_of(&report), error });
        reports.push(report.clone());
        if error <= cfg.eps {
            converged = true;
            break;
        }
    }

    if !converged {
        // Whole trace kept; the returned point is the steadiest one seen.
        let best = rows
            .iter()
            .skip(1)
            .min_by(|a, b| a.error.total_cmp(&b.error))
            .map(|r| r.iter)
            .unwrap_or(rows.len() - 1);
        shares = rows[best].shares.clone();
        report = reports[best].clone();
    }
    Ok(MswaOutcome { shares, report, trace: MswaTrace { rows, converged } })
}
