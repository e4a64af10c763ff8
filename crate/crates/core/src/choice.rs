//! Multinomial-logit mode choice over taxi, bus, and subway.
//!
//! Each passenger class weighs a mode's static attractiveness against its
//! predicted queueing time and any queue toll in force. Queue time and toll
//! enter as disutilities — congestion repels passengers — and waiting
//! minutes are converted to utility units by the time scale `tau`. Class
//! shares are the class-proportion-weighted average of per-class logit
//! probabilities.

use crate::error::{Error, Result};
use crate::rates::ShareVector;
use serde::{Deserialize, Serialize};

/// One passenger class: proportion and per-mode utility coefficients,
/// indexed taxi, bus, subway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerClass {
    /// Fraction of all passengers in this class.
    pub pi: f64,
    /// Static utility per mode.
    pub o: [f64; 3],
    /// Queue-time weight per mode.
    pub w_t: [f64; 3],
    /// Static-utility weight per mode.
    pub w_o: [f64; 3],
    /// Toll weight per mode.
    pub w_j: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassUtilityParams {
    pub classes: Vec<PassengerClass>,
    /// Minutes of queueing worth one unit of disutility.
    pub tau: f64,
}

impl ClassUtilityParams {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("choice.classes", "need at least one class"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("choice.tau", "time scale must be positive"));
        }
        let total: f64 = self.classes.iter().map(|c| c.pi).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "choice.classes",
                format!("class proportions sum to {total}, expected 1"),
            ));
        }
        for (h, class) in self.classes.iter().enumerate() {
            if !(class.pi >= 0.0) {
                return Err(Error::invalid("choice.classes", format!("class {h} has pi < 0")));
            }
            let weights = class.w_t.iter().chain(&class.w_o).chain(&class.w_j);
            if !weights.into_iter().all(|w| w.is_finite() && *w >= 0.0) {
                return Err(Error::invalid(
                    "choice.classes",
                    format!("class {h} has a negative or non-finite weight"),
                ));
            }
            if !class.o.iter().all(|o| o.is_finite()) {
                return Err(Error::invalid(
                    "choice.classes",
                    format!("class {h} has a non-finite static utility"),
                ));
            }
        }
        Ok(())
    }
}

/// Per-mode queue tolls, in currency units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TollScheme {
    pub j_x: f64,
    pub j_b: f64,
    pub j_s: f64,
}

impl TollScheme {
    pub const ZERO: TollScheme = TollScheme { j_x: 0.0, j_b: 0.0, j_s: 0.0 };

    pub fn as_array(&self) -> [f64; 3] {
        [self.j_x, self.j_b, self.j_s]
    }

    pub fn from_array(j: [f64; 3]) -> Self {
        TollScheme { j_x: j[0], j_b: j[1], j_s: j[2] }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.as_array().iter().all(|j| j.is_finite() && *j >= 0.0) {
            return Err(Error::invalid("tolls", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Systematic utility of one mode for one class. `weights` is
/// (static, queue-time, toll); waiting minutes are scaled by `tau` before
/// the queue-time weight applies, and queue time and toll subtract.
pub fn systematic_utility(
    o: f64,
    wait_minutes: f64,
    toll: f64,
    weights: (f64, f64, f64),
    tau: f64,
) -> f64 {
    let (w_o, w_t, w_j) = weights;
    w_o * o - w_t * (wait_minutes / tau) - w_j * toll
}

/// Logit probabilities from per-mode utilities, max-subtracted so extreme
/// utilities cannot overflow the exponentials.
pub fn mnl_probabilities(v: [f64; 3]) -> ShareVector {
    let m = v[0].max(v[1]).max(v[2]);
    let e = [(v[0] - m).exp(), (v[1] - m).exp(), (v[2] - m).exp()];
    let z = e[0] + e[1] + e[2];
    ShareVector::from_array([e[0] / z, e[1] / z, e[2] / z])
        .expect("logit probabilities lie on the simplex")
}

/// Class-weighted aggregate mode shares for the given waiting times
/// (minutes, per mode) and tolls.
pub fn aggregate_shares(
    params: &ClassUtilityParams,
    wait_minutes: [f64; 3],
    tolls: &TollScheme,
) -> ShareVector {
    let j = tolls.as_array();
    let mut agg = [0.0f64; 3];
    for class in &params.classes {
        let mut v = [0.0f64; 3];
        for i in 0..3 {
            v[i] = systematic_utility(
                class.o[i],
                wait_minutes[i],
                j[i],
                (class.w_o[i], class.w_t[i], class.w_j[i]),
                params.tau,
            );
        }
        let p = mnl_probabilities(v).as_array();
        for i in 0..3 {
            agg[i] += class.pi * p[i];
        }
    }
    // Convex combination of simplex points; round-off stays far inside the
    // simplex tolerance.
    ShareVector::from_array(agg).expect("class-weighted shares lie on the simplex")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_class(o: [f64; 3]) -> ClassUtilityParams {
        ClassUtilityParams {
            classes: vec![PassengerClass {
                pi: 1.0,
                o,
                w_t: [1.0; 3],
                w_o: [1.0; 3],
                w_j: [1.0; 3],
            }],
            tau: 10.0,
        }
    }

    #[test]
    fn utility_arithmetic() {
        // Zero wait and toll: only the static term survives.
        assert_eq!(systematic_utility(2.0, 0.0, 0.0, (1.2, 1.0, 0.6), 10.0), 2.4);
        // Half a time unit of waiting, toll 2.3.
        let v = systematic_utility(1.0, 5.0, 2.3, (1.2, 1.0, 0.6), 10.0);
        assert!((v - (1.2 - 0.5 - 1.38)).abs() < 1e-12);
        assert!((v - (-0.68)).abs() < 1e-12);
        // Longer waits strictly hurt.
        let shorter = systematic_utility(1.0, 5.0, 0.0, (1.2, 1.0, 0.6), 10.0);
        let longer = systematic_utility(1.0, 6.0, 0.0, (1.2, 1.0, 0.6), 10.0);
        assert!(longer < shorter);
    }

    #[test]
    fn logit_closed_forms() {
        let thirds = mnl_probabilities([0.0, 0.0, 0.0]).as_array();
        for p in thirds {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = mnl_probabilities([(2.0f64).ln(), 0.0, 0.0]).as_array();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.25).abs() < 1e-12);
        assert!((p[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn logit_survives_extreme_utilities() {
        let p = mnl_probabilities([1000.0, 1000.0, 999.0]).as_array();
        assert!(p.iter().all(|x| x.is_finite()));
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // After max subtraction: exp(0), exp(0), exp(-1).
        let z = 2.0 + (-1.0f64).exp();
        assert!((p[0] - 1.0 / z).abs() < 1e-12);
        assert!((p[2] - (-1.0f64).exp() / z).abs() < 1e-12);
    }

    #[test]
    fn one_class_aggregation_is_plain_logit() {
        let params = single_class([0.5, 1.0, 0.3]);
        let agg = aggregate_shares(&params, [0.0; 3], &TollScheme::ZERO).as_array();
        let direct = mnl_probabilities([0.5, 1.0, 0.3]).as_array();
        for i in 0..3 {
            assert!((agg[i] - direct[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_classes_collapse_to_one() {
        let mut params = single_class([0.5, 1.0, 0.3]);
        let mut c = params.classes[0].clone();
        c.pi = 0.5;
        params.classes[0].pi = 0.5;
        params.classes.push(c);
        params.validate().unwrap();
        let two = aggregate_shares(&params, [4.0, 2.0, 7.0], &TollScheme::ZERO).as_array();
        let one = aggregate_shares(&single_class([0.5, 1.0, 0.3]), [4.0, 2.0, 7.0], &TollScheme::ZERO)
            .as_array();
        for i in 0..3 {
            assert!((two[i] - one[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn two_class_aggregate_is_the_mean_of_per_class_logits() {
        // Distinct static utilities per class, equal proportions.
        let params = ClassUtilityParams {
            classes: vec![
                PassengerClass {
                    pi: 0.5,
                    o: [0.5, 1.0, 0.3],
                    w_t: [1.0; 3],
                    w_o: [1.0; 3],
                    w_j: [1.0; 3],
                },
                PassengerClass {
                    pi: 0.5,
                    o: [0.2, 0.8, 0.2],
                    w_t: [1.0; 3],
                    w_o: [1.0; 3],
                    w_j: [1.0; 3],
                },
            ],
            tau: 10.0,
        };
        params.validate().unwrap();
        let agg = aggregate_shares(&params, [0.0; 3], &TollScheme::ZERO).as_array();
        let p1 = mnl_probabilities([0.5, 1.0, 0.3]).as_array();
        let p2 = mnl_probabilities([0.2, 0.8, 0.2]).as_array();
        for i in 0..3 {
            assert!((agg[i] - 0.5 * (p1[i] + p2[i])).abs() < 1e-15);
        }
        // Hand-recomputed with literal exponentials.
        let z1 = (0.5f64).exp() + (1.0f64).exp() + (0.3f64).exp();
        assert!((p1[0] - (0.5f64).exp() / z1).abs() < 1e-15);
    }

    #[test]
    fn params_validation_names_the_offending_field() {
        let mut params = single_class([0.0; 3]);
        params.classes[0].pi = 0.7;
        let err = params.validate().unwrap_err().to_string();
        assert!(err.contains("choice.classes"));
        let mut bad_tau = single_class([0.0; 3]);
        bad_tau.tau = 0.0;
        assert!(bad_tau.validate().is_err());
        assert!(TollScheme { j_x: -1.0, j_b: 0.0, j_s: 0.0 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn translation_invariance(base in proptest::array::uniform3(-20.0f64..20.0), c in -50.0f64..50.0) {
            let p = mnl_probabilities(base).as_array();
            let shifted = mnl_probabilities([base[0] + c, base[1] + c, base[2] + c]).as_array();
            for i in 0..3 {
                prop_assert!((p[i] - shifted[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn aggregate_stays_on_the_simplex(
            o1 in proptest::array::uniform3(-3.0f64..3.0),
            o2 in proptest::array::uniform3(-3.0f64..3.0),
            w in proptest::array::uniform3(0.0f64..90.0),
            j in proptest::array::uniform3(0.0f64..10.0),
            pi in 0.0f64..1.0,
        ) {
            let params = ClassUtilityParams {
                classes: vec![
                    PassengerClass { pi, o: o1, w_t: [1.0; 3], w_o: [1.2, 0.7, 1.0], w_j: [0.6, 0.7, 0.7] },
                    PassengerClass { pi: 1.0 - pi, o: o2, w_t: [1.0; 3], w_o: [1.0; 3], w_j: [0.7; 3] },
                ],
                tau: 10.0,
            };
            let shares = aggregate_shares(&params, w, &TollScheme::from_array(j));
            let arr = shares.as_array();
            prop_assert!(arr.iter().all(|p| *p >= 0.0));
            prop_assert!((arr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn raising_one_toll_repels_from_that_mode_only(
            j_x in 0.0f64..8.0,
            bump in 0.01f64..5.0,
            w in proptest::array::uniform3(0.0f64..60.0),
        ) {
            let params = ClassUtilityParams {
                classes: vec![PassengerClass {
                    pi: 1.0,
                    o: [1.0, 0.2, 0.5],
                    w_t: [1.0; 3],
                    w_o: [1.2, 0.7, 1.0],
                    w_j: [0.6, 0.7, 0.7],
                }],
                tau: 10.0,
            };
            let before = aggregate_shares(&params, w, &TollScheme { j_x, j_b: 1.0, j_s: 0.5 }).as_array();
            let after =
                aggregate_shares(&params, w, &TollScheme { j_x: j_x + bump, j_b: 1.0, j_s: 0.5 }).as_array();
            prop_assert!(after[0] <= before[0] + 1e-15);
            prop_assert!(after[1] >= before[1] - 1e-15);
            prop_assert!(after[2] >= before[2] - 1e-15);
        }
    }
}
