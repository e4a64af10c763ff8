//! Piecewise-constant arrival-rate profiles and their bookkeeping.
//!
//! All demand entering the model is described by a [`RateProfile`]: a
//! right-continuous step function over a half-open horizon `[start, end)`,
//! in units of passengers (or vehicles) per minute. Flight timetables are
//! flattened onto such profiles by spreading each flight's passengers
//! uniformly over a walk-in window. A [`ShareVector`] splits the total
//! passenger profile into the three mode streams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-continuous step function on `[start, end)`.
///
/// `breakpoints` are the `n + 1` ascending interval edges; `values[i]` is the
/// rate on `[breakpoints[i], breakpoints[i+1])`. Rates are nonnegative and
/// finite. The right endpoint is outside the domain: evaluating there is an
/// error, which keeps abutting profiles from double-counting an instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl RateProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 {
            return Err(Error::invalid(
                "profile",
                format!(
                    "need one more breakpoint than value, got {} breakpoints for {} values",
                    breakpoints.len(),
                    values.len()
                ),
            ));
        }
        if values.is_empty() {
            return Err(Error::invalid("profile", "at least one interval required"));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("profile", "breakpoints must be strictly ascending"));
        }
        if !breakpoints.iter().all(|b| b.is_finite()) {
            return Err(Error::invalid("profile", "breakpoints must be finite"));
        }
        if !values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::invalid("profile", "rates must be finite and nonnegative"));
        }
        Ok(RateProfile { breakpoints, values })
    }

    /// Constant rate over `[start, end)`.
    pub fn constant(rate: f64, start: f64, end: f64) -> Result<Self> {
        RateProfile::new(vec![start, end], vec![rate])
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rate at `t`. Right-continuous: at an interior breakpoint the new
    /// interval's value applies. `t` outside `[start, end)` is an error.
    pub fn eval_rate(&self, t: f64) -> Result<f64> {
        if !(t >= self.start() && t < self.end()) {
            return Err(Error::TimeOutOfProfile { t, start: self.start(), end: self.end() });
        }
        // partition_point returns the count of edges <= t; that count is >= 1
        // because t >= start, and <= n because t < end.
        let idx = self.breakpoints.partition_point(|b| *b <= t) - 1;
        Ok(self.values[idx])
    }

    /// Rate with `t` clamped into the horizon; the closed right end takes the
    /// final interval's value. Used when reporting at the horizon end, where
    /// the strict half-open lookup would reject `t = end`.
    pub fn eval_clamped(&self, t: f64) -> f64 {
        if t <= self.start() {
            self.values[0]
        } else if t >= self.end() {
            *self.values.last().unwrap()
        } else {
            self.values[self.breakpoints.partition_point(|b| *b <= t) - 1]
        }
    }

    /// Exact integral of the step function over `[a, b]`, `a <= b`, both
    /// inside the closed horizon.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        if !(a <= b) {
            return Err(Error::invalid("integration window", format!("a={a} > b={b}")));
        }
        if a < self.start() || b > self.end() {
            return Err(Error::TimeOutOfProfile {
                t: if a < self.start() { a } else { b },
                start: self.start(),
                end: self.end(),
            });
        }
        let mut total = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let lo = self.breakpoints[i].max(a);
            let hi = self.breakpoints[i + 1].min(b);
            if hi > lo {
                total += v * (hi - lo);
            }
        }
        Ok(total)
    }

    /// Mean rate over `[a, b]` where the window may extend past the horizon
    /// end; the final interval's value is held constant beyond it. Used for
    /// the residual-window average a renewal computation needs when the
    /// window outlives the forecast horizon.
    pub fn mean_extended(&self, a: f64, b: f64) -> Result<f64> {
        if !(b > a) {
            return Err(Error::invalid("averaging window", format!("a={a} >= b={b}")));
        }
        let inside_hi = b.min(self.end());
        let mut mass = self.integrate(a.min(self.end()), inside_hi)?;
        if b > self.end() {
            mass += self.values.last().unwrap() * (b - self.end());
        }
        Ok(mass / (b - a))
    }

    /// Largest rate over the horizon.
    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Pointwise transform of the rates; breakpoints unchanged. The image
    /// must stay a valid rate (nonnegative, finite) — asserted because every
    /// in-crate use is a composition of min/scale/affine maps that preserve
    /// that.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> RateProfile {
        let values: Vec<f64> = self.values.iter().map(|v| f(*v)).collect();
        assert!(
            values.iter().all(|v| v.is_finite() && *v >= 0.0),
            "profile map produced a negative or non-finite rate"
        );
        RateProfile { breakpoints: self.breakpoints.clone(), values }
    }

    /// Scale every rate by `k >= 0`.
    pub fn scale(&self, k: f64) -> RateProfile {
        assert!(k >= 0.0 && k.is_finite(), "scale factor must be a nonnegative finite number");
        self.map(|v| v * k)
    }
}

/// Fractions of total demand choosing taxi / bus / subway. A point on the
/// 3-simplex: each share in `[0, 1]`, shares summing to 1 within 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShareVector {
    pub taxi: f64,
    pub bus: f64,
    pub subway: f64,
}

impl ShareVector {
    pub const SIMPLEX_TOL: f64 = 1e-12;

    pub fn new(taxi: f64, bus: f64, subway: f64) -> Result<Self> {
        let v = ShareVector { taxi, bus, subway };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |x: f64| (0.0..=1.0).contains(&x);
        if !(in_range(self.taxi) && in_range(self.bus) && in_range(self.subway)) {
            return Err(Error::invalid("shares", "each share must lie in [0, 1]"));
        }
        let sum = self.taxi + self.bus + self.subway;
        if (sum - 1.0).abs() > Self::SIMPLEX_TOL {
            return Err(Error::invalid("shares", format!("shares sum to {sum}, expected 1")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.taxi, self.bus, self.subway]
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self> {
        ShareVector::new(a[0], a[1], a[2])
    }
}

/// Per-mode arrival-rate profiles, all sharing the total profile's horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeStreams {
    pub taxi: RateProfile,
    pub bus: RateProfile,
    pub subway: RateProfile,
}

/// Split a total passenger profile into mode streams by constant shares.
/// Pointwise, `taxi + bus + subway` reproduces the input up to float
/// round-off (relative 1e-12).
pub fn split_streams(total: &RateProfile, shares: &ShareVector) -> Result<ModeStreams> {
    shares.validate()?;
    Ok(ModeStreams {
        taxi: total.scale(shares.taxi),
        bus: total.scale(shares.bus),
        subway: total.scale(shares.subway),
    })
}

/// One flight in a timetable: scheduled time (minutes) and how many of its
/// passengers enter this model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flight {
    pub time_min: f64,
    pub passengers: f64,
}

/// Flatten a flight timetable onto a piecewise-constant profile.
///
/// Each flight's passengers are spread uniformly over
/// `[time_min, time_min + spread_window)` and accumulated into bins of
/// `bin_width` anchored at integer multiples of `bin_width`. Total passenger
/// mass is conserved. An empty timetable yields a single zero bin at the
/// origin rather than an error, so downstream profile algebra stays total.
pub fn timetable_to_profile(
    flights: &[Flight],
    spread_window: f64,
    bin_width: f64,
) -> Result<RateProfile> {
    if !(spread_window > 0.0 && spread_window.is_finite()) {
        return Err(Error::invalid("spread_window", "must be positive and finite"));
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::invalid("bin_width", "must be positive and finite"));
    }
    if flights.is_empty() {
        return RateProfile::new(vec![0.0, bin_width], vec![0.0]);
    }
    for f in flights {
        if !(f.passengers >= 0.0 && f.passengers.is_finite() && f.time_min.is_finite()) {
            return Err(Error::invalid(
                "timetable",
                format!("flight at t={} with count {} is not usable", f.time_min, f.passengers),
            ));
        }
    }

    let first = flights.iter().map(|f| f.time_min).fold(f64::INFINITY, f64::min);
    let last = flights.iter().map(|f| f.time_min + spread_window).fold(f64::NEG_INFINITY, f64::max);
    let bin_lo = (first / bin_width).floor() as i64;
    let bin_hi = (last / bin_width).ceil() as i64;
    let n_bins = (bin_hi - bin_lo).max(1) as usize;

    let mut mass = vec![0.0f64; n_bins];
    for f in flights {
        if f.passengers == 0.0 {
            continue;
        }
        let density = f.passengers / spread_window;
        let (w_lo, w_hi) = (f.time_min, f.time_min + spread_window);
        for (i, m) in mass.iter_mut().enumerate() {
            let b_lo = (bin_lo + i as i64) as f64 * bin_width;
            let b_hi = b_lo + bin_width;
            let overlap = w_hi.min(b_hi) - w_lo.max(b_lo);
            if overlap > 0.0 {
                *m += density * overlap;
            }
        }
    }

    let breakpoints: Vec<f64> =
        (0..=n_bins).map(|i| (bin_lo + i as i64) as f64 * bin_width).collect();
    let values: Vec<f64> = mass.iter().map(|m| m / bin_width).collect();
    RateProfile::new(breakpoints, values)
}

/// Read a flight timetable from CSV with header `time_min,passengers`.
pub fn read_timetable_csv<R: std::io::Read>(reader: R, path: &str) -> Result<Vec<Flight>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv { path: path.to_string(), what: e.to_string() })?
        .clone();
    let expect = ["time_min", "passengers"];
    if headers.iter().map(str::trim).ne(expect) {
        return Err(Error::Csv {
            path: path.to_string(),
            what: format!("expected header time_min,passengers, got {headers:?}"),
        });
    }
    let mut flights = Vec::new();
    for (i, rec) in rdr.deserialize::<Flight>().enumerate() {
        let f: Flight =
            rec.map_err(|e| Error::Csv { path: path.to_string(), what: format!("row {}: {e}", i + 2) })?;
        flights.push(f);
    }
    Ok(flights)
}

/// Write a profile as CSV rows `t_start,t_end,rate`, one per interval.
pub fn write_profile_csv<W: std::io::Write>(profile: &RateProfile, mut w: W) -> Result<()> {
    writeln!(w, "t_start,t_end,rate")?;
    for (i, v) in profile.values().iter().enumerate() {
        writeln!(w, "{},{},{}", profile.breakpoints()[i], profile.breakpoints()[i + 1], v)?;
    }
    Ok(())
}
