//! Upper-level toll search with an ant lion optimizer.
//!
//! Toll candidates live in a three-dimensional box. Each iteration, every
//! ant walks randomly inside two shrinking traps — one around a
//! roulette-selected antlion, one around the elite — and lands at the mean
//! of the two walks; ants that beat their antlion replace it, and the best
//! antlion becomes the elite. The objective of a candidate is the maximum
//! stranded-passenger count at the lower-level share equilibrium under
//! those tolls.
//!
//! Every random draw happens on the coordinating thread, in a fixed order,
//! before candidates are evaluated; the evaluations themselves are pure and
//! run in parallel, so thread count can never change the result.

use crate::choice::TollScheme;
use crate::equilibrium::{self, MswaConfig};
use crate::error::{Error, Result};
use crate::network::NetworkState;
use crate::rates::ShareVector;
use crate::scenario::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AloConfig {
    #[serde(default = "default_pop")]
    pub n_ants: usize,
    #[serde(default = "default_pop")]
    pub n_antlions: usize,
    /// Search iterations; also the random-walk length.
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    /// Per-dimension toll lower bounds.
    #[serde(default = "default_cl")]
    pub cl: [f64; 3],
    /// Per-dimension toll upper bounds.
    #[serde(default = "default_cu")]
    pub cu: [f64; 3],
}

fn default_pop() -> usize {
    20
}
fn default_t_max() -> usize {
    8
}
fn default_cl() -> [f64; 3] {
    [0.0; 3]
}
fn default_cu() -> [f64; 3] {
    [10.0; 3]
}

impl Default for AloConfig {
    fn default() -> Self {
        AloConfig {
            n_ants: default_pop(),
            n_antlions: default_pop(),
            t_max: default_t_max(),
            cl: default_cl(),
            cu: default_cu(),
        }
    }
}

impl AloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ants < 2 || self.n_antlions < 2 {
            return Err(Error::invalid("alo.populations", "need at least 2 ants and 2 antlions"));
        }
        if self.t_max < 1 {
            return Err(Error::invalid("alo.t_max", "need at least one iteration"));
        }
        for d in 0..3 {
            if !(self.cl[d].is_finite() && self.cu[d].is_finite() && self.cl[d] <= self.cu[d]) {
                return Err(Error::invalid(
                    "alo.bounds",
                    format!("dimension {d}: need finite cl <= cu"),
                ));
            }
        }
        Ok(())
    }
}

/// Lower-level outcome attached to a toll candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessEval {
    /// Maximum stranded count — the quantity being minimized.
    pub objective: f64,
    pub stranded: [f64; 3],
    pub shares: ShareVector,
}

/// Evaluate one toll candidate: solve the share equilibrium under the tolls
/// and read off the maximum stranded count. A candidate whose evaluation
/// fails is kept but can never win or be selected.
pub fn fitness(
    tolls: &TollScheme,
    scenario: &Scenario,
    initial: &NetworkState,
    mswa_cfg: &MswaConfig,
) -> FitnessEval {
    match equilibrium::mswa_solve(initial, scenario, tolls, mswa_cfg) {
        Ok(out) => FitnessEval {
            objective: out.report.l_max,
            stranded: [out.report.l_x, out.report.l_b, out.report.l_s],
            shares: out.shares,
        },
        Err(_) => FitnessEval {
            objective: f64::INFINITY,
            stranded: [f64::NAN; 3],
            shares: ShareVector::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0).expect("uniform"),
        },
    }
}

/// Cumulative sum of `steps` fair ±1 increments, starting at 0.
pub fn random_walk(steps: usize, rng: &mut impl Rng) -> Vec<f64> {
    assert!(steps >= 1);
    let mut walk = Vec::with_capacity(steps + 1);
    let mut x = 0.0f64;
    walk.push(x);
    for _ in 0..steps {
        x += if rng.gen::<bool>() { 1.0 } else { -1.0 };
        walk.push(x);
    }
    walk
}

/// Affine map of a walk's range onto `[lo, hi]`; a constant walk collapses
/// to `lo`.
pub fn normalize_walk(walk: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let min = walk.iter().copied().fold(f64::INFINITY, f64::min);
    let max = walk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return vec![lo; walk.len()];
    }
    walk.iter().map(|x| (x - min) * (hi - lo) / (max - min) + lo).collect()
}

/// Trap-shrink exponent for iteration fraction `t / t_max`.
pub fn w_exponent(t: usize, t_max: usize) -> f64 {
    let f = t as f64 / t_max as f64;
    if f > 0.95 {
        6.0
    } else if f > 0.9 {
        5.0
    } else if f > 0.75 {
        4.0
    } else if f > 0.5 {
        3.0
    } else if f > 0.1 {
        2.0
    } else {
        1.0
    }
}

/// One dimension of the shrinking trap around an antlion. `sign_lo` and
/// `sign_hi` are the pre-drawn random orientations of the two offsets; the
/// result is clamped into `[cl, cu]` and ordered.
pub fn trap_bounds(
    antlion: f64,
    cl: f64,
    cu: f64,
    t: usize,
    t_max: usize,
    sign_lo: bool,
    sign_hi: bool,
) -> (f64, f64) {
    let shrink = if t == 0 {
        1.0
    } else {
        10f64.powf(w_exponent(t, t_max)) * t as f64 / t_max as f64
    };
    let off = |sign: bool, bound: f64| if sign { bound / shrink } else { -bound / shrink };
    let a = (antlion + off(sign_lo, cl)).clamp(cl, cu);
    let b = (antlion + off(sign_hi, cu)).clamp(cl, cu);
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Roulette index over objectives (smaller is fitter): weight
/// `1 / (f - best + delta)` with a relative floor `delta`, drawn at the
/// pre-sampled uniform `u` in [0, 1). Unevaluable (+inf) candidates get
/// weight zero.
pub fn roulette_select(objectives: &[f64], u: f64) -> usize {
    assert!(!objectives.is_empty());
    let best = objectives.iter().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return 0;
    }
    let delta = 1e-9 * (1.0 + best.abs());
    let weights: Vec<f64> =
        objectives.iter().map(|f| if f.is_finite() { 1.0 / (f - best + delta) } else { 0.0 }).collect();
    let total: f64 = weights.iter().sum();
    let mut target = u * total;
    for (i, w) in weights.iter().enumerate() {
        target -= w;
        if target < 0.0 {
            return i;
        }
    }
    objectives.len() - 1
}

/// Per-iteration record of the elite.
#[derive(Debug, Clone, PartialEq)]
pub struct AloHistoryRow {
    pub iter: usize,
    pub tolls: TollScheme,
    pub objective: f64,
    pub stranded: [f64; 3],
    pub shares: ShareVector,
}

#[derive(Debug, Clone)]
pub struct AloOutcome {
    pub tolls: TollScheme,
    pub eval: FitnessEval,
    pub history: Vec<AloHistoryRow>,
}

impl AloOutcome {
    /// CSV rows `iter,J_X,J_B,J_S,fitness,L_X,L_B,L_S,alpha,beta,gamma`.
    pub fn write_history_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "iter,J_X,J_B,J_S,fitness,L_X,L_B,L_S,alpha,beta,gamma")?;
        for row in &self.history {
            let j = row.tolls.as_array();
            let s = row.shares.as_array();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                row.iter,
                j[0],
                j[1],
                j[2],
                row.objective,
                row.stranded[0],
                row.stranded[1],
                row.stranded[2],
                s[0],
                s[1],
                s[2]
            )?;
        }
        Ok(())
    }
}

struct Draws {
    roulette_u: f64,
    /// Per dimension: trap orientation signs for the selected antlion and
    /// the elite, then the two walks.
    dims: [DimDraws; 3],
}

struct DimDraws {
    antlion_signs: (bool, bool),
    elite_signs: (bool, bool),
    antlion_walk: Vec<f64>,
    elite_walk: Vec<f64>,
}

/// Core search loop over an arbitrary objective; `alo_optimize` supplies the
/// queueing objective. Exposed for benchmarking against analytic functions.
pub fn alo_run(
    cfg: &AloConfig,
    seed: u64,
    eval: &(impl Fn(&TollScheme) -> FitnessEval + Sync),
) -> Result<AloOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform_box = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        std::array::from_fn(|d| cfg.cl[d] + rng.gen::<f64>() * (cfg.cu[d] - cfg.cl[d]))
    };

    let mut antlions: Vec<[f64; 3]> = (0..cfg.n_antlions).map(|_| uniform_box(&mut rng)).collect();
    let ants0: Vec<[f64; 3]> = (0..cfg.n_ants).map(|_| uniform_box(&mut rng)).collect();

    let evaluate = |positions: &[[f64; 3]]| -> Vec<FitnessEval> {
        positions.par_iter().map(|p| eval(&TollScheme::from_array(*p))).collect()
    };
    let mut antlion_evals = evaluate(&antlions);
    let ant0_evals = evaluate(&ants0);
    replace_fitter(&mut antlions, &mut antlion_evals, &ants0, &ant0_evals);

    let mut elite = best_index(&antlion_evals);
    let mut history = vec![history_row(0, &antlions[elite], &antlion_evals[elite])];

    for t in 1..=cfg.t_max {
        // All randomness for the iteration is drawn here, in ant order.
        let objectives: Vec<f64> = antlion_evals.iter().map(|e| e.objective).collect();
        let draws: Vec<Draws> = (0..cfg.n_ants)
            .map(|_| Draws {
                roulette_u: rng.gen::<f64>(),
                dims: std::array::from_fn(|_| DimDraws {
                    antlion_signs: (rng.gen(), rng.gen()),
                    elite_signs: (rng.gen(), rng.gen()),
                    antlion_walk: random_walk(cfg.t_max, &mut rng),
                    elite_walk: random_walk(cfg.t_max, &mut rng),
                }),
            })
            .collect();

        let candidates: Vec<[f64; 3]> = draws
            .iter()
            .map(|draw| {
                let guide = antlions[roulette_select(&objectives, draw.roulette_u)];
                std::array::from_fn(|d| {
                    let dd = &draw.dims[d];
                    let (lo_a, hi_a) = trap_bounds(
                        guide[d],
                        cfg.cl[d],
                        cfg.cu[d],
                        t,
                        cfg.t_max,
                        dd.antlion_signs.0,
                        dd.antlion_signs.1,
                    );
                    let (lo_e, hi_e) = trap_bounds(
                        antlions[elite][d],
                        cfg.cl[d],
                        cfg.cu[d],
                        t,
                        cfg.t_max,
                        dd.elite_signs.0,
                        dd.elite_signs.1,
                    );
                    let r_a = normalize_walk(&dd.antlion_walk, lo_a, hi_a)[t];
                    let r_e = normalize_walk(&dd.elite_walk, lo_e, hi_e)[t];
                    ((r_a + r_e) / 2.0).clamp(cfg.cl[d], cfg.cu[d])
                })
            })
            .collect();

        let candidate_evals = evaluate(&candidates);
        replace_fitter(&mut antlions, &mut antlion_evals, &candidates, &candidate_evals);
        let best = best_index(&antlion_evals);
        if antlion_evals[best].objective < antlion_evals[elite].objective {
            elite = best;
        }
        history.push(history_row(t, &antlions[elite], &antlion_evals[elite]));
    }

    Ok(AloOutcome {
        tolls: TollScheme::from_array(antlions[elite]),
        eval: antlion_evals[elite].clone(),
        history,
    })
}

fn history_row(iter: usize, pos: &[f64; 3], eval: &FitnessEval) -> AloHistoryRow {
    AloHistoryRow {
        iter,
        tolls: TollScheme::from_array(*pos),
        objective: eval.objective,
        stranded: eval.stranded,
        shares: eval.shares.clone(),
    }
}

fn best_index(evals: &[FitnessEval]) -> usize {
    let mut best = 0;
    for (i, e) in evals.iter().enumerate().skip(1) {
        if e.objective < evals[best].objective {
            best = i;
        }
    }
    best
}

/// Each ant challenges the antlion at its index modulo the population;
/// the fitter of the pair keeps the slot.
fn replace_fitter(
    antlions: &mut [[f64; 3]],
    antlion_evals: &mut [FitnessEval],
    ants: &[[f64; 3]],
    ant_evals: &[FitnessEval],
) {
    for (i, (pos, eval)) in ants.iter().zip(ant_evals).enumerate() {
        let j = i % antlions.len();
        if eval.objective < antlion_evals[j].objective {
            antlions[j] = *pos;
            antlion_evals[j] = eval.clone();
        }
    }
}

/// Search toll schemes minimizing the equilibrium maximum stranded count.
/// The seed comes from the scenario's solver section so a scenario file
/// pins its whole toll program.
pub fn alo_optimize(
    scenario: &Scenario,
    initial: &NetworkState,
    cfg: &AloConfig,
    mswa_cfg: &MswaConfig,
) -> Result<AloOutcome> {
    let eval = |tolls: &TollScheme| fitness(tolls, scenario, initial, mswa_cfg);
    alo_run(cfg, scenario.solver.seed, &eval)
}
