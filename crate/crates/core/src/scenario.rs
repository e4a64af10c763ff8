//! Scenario files: every model parameter, demand profile, and solver knob
//! for one planning situation, stored as a hand-editable TOML document.
//!
//! Demand enters either as an inline piecewise-constant profile or as a
//! reference to a flight-timetable CSV that is flattened at load time.
//! Loading resolves all references and defaults, so a loaded scenario can
//! be written back out as a fully explicit document; reloading that
//! document yields an identical scenario.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bus::BusParams;
use crate::choice::{ClassUtilityParams, PassengerClass};
use crate::equilibrium::MswaConfig;
use crate::error::{Error, Result};
use crate::rates::{self, RateProfile};
use crate::subway::{StageOrder, SubwayParams};
use crate::taxi::TaxiParams;
use crate::tollopt::AloConfig;

/// Demand profile, either inline or referencing a timetable CSV. After
/// [`Scenario`] loading only the inline form remains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSource {
    /// Timetable CSV path, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timetable: Option<String>,
    /// Minutes over which each flight's passengers spread into the system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread_window: Option<f64>,
    /// Profile bin width in minutes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    /// Multiplier applied to the resolved rates (e.g. vehicles per
    /// departing passenger for the taxi feed). Folded in at load time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl ProfileSource {
    fn resolve(&mut self, field: &str, base_dir: &Path) -> Result<()> {
        let profile = match (&self.timetable, &self.breakpoints, &self.values) {
            (Some(path), None, None) => {
                let window = self.spread_window.ok_or_else(|| {
                    Error::invalid(field, "timetable form requires spread_window")
                })?;
                let bin = self.bin_width.unwrap_or(5.0);
                let full = base_dir.join(path);
                let file = std::fs::File::open(&full)
                    .map_err(|e| Error::scenario(&full.display().to_string(), e.to_string()))?;
                let flights = rates::read_timetable_csv(file, &full.display().to_string())?;
                rates::timetable_to_profile(&flights, window, bin)?
            }
            (None, Some(b), Some(v)) => RateProfile::new(b.clone(), v.clone())?,
            _ => {
                return Err(Error::invalid(
                    field,
                    "give either timetable/spread_window or breakpoints/values",
                ))
            }
        };
        let profile = match self.scale {
            Some(k) if k >= 0.0 && k.is_finite() => profile.scale(k),
            Some(_) => return Err(Error::invalid(field, "scale must be finite and nonnegative")),
            None => profile,
        };
        self.breakpoints = Some(profile.breakpoints().to_vec());
        self.values = Some(profile.values().to_vec());
        self.timetable = None;
        self.spread_window = None;
        self.bin_width = None;
        self.scale = None;
        Ok(())
    }

    /// The resolved profile. Only valid after scenario loading.
    pub fn profile(&self) -> Result<RateProfile> {
        match (&self.breakpoints, &self.values) {
            (Some(b), Some(v)) => RateProfile::new(b.clone(), v.clone()),
            _ => Err(Error::invalid("profile", "unresolved demand profile")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    /// Clock minute treated as "now".
    #[serde(default)]
    pub t0: f64,
    /// Default prediction horizon in minutes.
    pub minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    /// Passengers entering the ground-access system, per minute.
    pub arrivals: ProfileSource,
    /// Vacant taxis reaching the rank, per minute.
    pub taxi_supply: ProfileSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxiSection {
    /// Pax-taxi matching rate (passengers per minute).
    pub mu: f64,
    /// Taxi-pool truncation: vacant taxis beyond this are turned away.
    pub pool_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSection {
    /// Offline ticket-purchase probability.
    pub q: f64,
    pub mu: f64,
    pub c: usize,
    /// Ticket-queue waiting-area size.
    pub k: usize,
    /// Departure when this many passengers are aboard.
    pub n: usize,
    /// Departure after this many minutes regardless of load.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubwaySection {
    /// On-spot ticket-purchase probability.
    pub q: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub c1: usize,
    pub c2: usize,
    pub k1: usize,
    pub k2: usize,
    /// Minutes until the next train departs.
    pub m: f64,
    #[serde(default)]
    pub order: StageOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceSection {
    /// Waiting minutes per unit of disutility.
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub classes: Vec<PassengerClass>,
}

fn default_tau() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Passengers waiting at the taxi rank.
    pub taxi_queue: usize,
    /// Vacant taxis in the pool.
    #[serde(default)]
    pub pool: usize,
    /// Passengers in the bus ticket queue.
    pub ticket_queue: usize,
    /// Passengers already aboard the waiting bus.
    pub aboard: usize,
    /// Minutes since the last bus departure.
    pub timer_age: f64,
    /// Passengers in the security queue.
    pub security_queue: usize,
    /// Passengers in the subway ticket queue.
    pub subway_ticket_queue: usize,
    /// Mode shares to use for plain prediction; omitted means the static
    /// no-wait logit split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_tail_eps")]
    pub tail_eps: f64,
    /// Slice width of the bus-departure recursion, minutes.
    #[serde(default = "default_renewal_step")]
    pub renewal_step: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub mswa: MswaConfig,
    #[serde(default)]
    pub alo: AloConfig,
}

fn default_dt() -> f64 {
    0.005
}
fn default_tail_eps() -> f64 {
    1e-9
}
fn default_renewal_step() -> f64 {
    0.25
}
fn default_seed() -> u64 {
    42
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            dt: default_dt(),
            tail_eps: default_tail_eps(),
            renewal_step: default_renewal_step(),
            seed: default_seed(),
            mswa: MswaConfig::default(),
            alo: AloConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub horizon: HorizonSection,
    pub rates: RatesSection,
    pub taxi: TaxiSection,
    pub bus: BusSection,
    pub subway: SubwaySection,
    pub choice: ChoiceSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub solver: SolverSection,
}

/// Load, resolve, and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::scenario(path.display().to_string(), e.to_string()))?;
    let mut scenario: Scenario = toml::from_str(&text)
        .map_err(|e| Error::scenario(path.display().to_string(), e.to_string()))?;
    let base_dir = path.parent().map(PathBuf::from).unwrap_or_default();
    scenario.resolve(&base_dir)?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    fn resolve(&mut self, base_dir: &Path) -> Result<()> {
        self.rates.arrivals.resolve("rates.arrivals", base_dir)?;
        self.rates.taxi_supply.resolve("rates.taxi_supply", base_dir)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("name", "scenario name must be nonempty"));
        }
        if !(self.horizon.minutes > 0.0) {
            return Err(Error::invalid("horizon.minutes", "must be positive"));
        }
        self.rates.arrivals.profile()?;
        self.rates.taxi_supply.profile()?;
        // Component params validate through their own constructors; build
        // each once against a trivial stream to surface bad fields now.
        let probe = RateProfile::constant(0.0, self.horizon.t0, self.horizon.t0 + 1.0)?;
        self.taxi_params(probe.clone(), self.initial.taxi_queue + 1).validate()?;
        self.bus_params(probe.clone()).validate()?;
        self.subway_params(probe).validate()?;
        self.utility_params().validate()?;
        if let Some(shares) = self.initial.shares {
            crate::rates::ShareVector::from_array(shares)?;
        }
        if self.initial.ticket_queue > self.bus.k {
            return Err(Error::invalid(
                "initial.ticket_queue",
                format!("exceeds bus waiting area {}", self.bus.k),
            ));
        }
        if self.initial.aboard > self.bus.n {
            return Err(Error::invalid("initial.aboard", "exceeds bus capacity"));
        }
        if self.initial.security_queue > self.subway.k1 {
            return Err(Error::invalid("initial.security_queue", "exceeds security area"));
        }
        if self.initial.subway_ticket_queue > self.subway.k2 {
            return Err(Error::invalid("initial.subway_ticket_queue", "exceeds ticket area"));
        }
        if self.initial.pool > self.taxi.pool_cap {
            return Err(Error::invalid("initial.pool", "exceeds taxi pool capacity"));
        }
        if !(self.solver.dt > 0.0 && self.solver.dt <= 1.0) {
            return Err(Error::invalid("solver.dt", "must lie in (0, 1] minutes"));
        }
        if !(self.solver.tail_eps > 0.0 && self.solver.tail_eps < 0.5) {
            return Err(Error::invalid("solver.tail_eps", "must lie in (0, 0.5)"));
        }
        if !(self.solver.renewal_step > 0.0 && self.solver.renewal_step <= self.bus.t) {
            return Err(Error::invalid("solver.renewal_step", "must lie in (0, bus.t]"));
        }
        self.solver.mswa.validate()?;
        self.solver.alo.validate()?;
        Ok(())
    }

    /// Write the resolved scenario back out as a fully explicit document.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::scenario(path.as_ref().display().to_string(), e.to_string()))?;
        std::fs::write(path.as_ref(), text)
            .map_err(|e| Error::scenario(path.as_ref().display().to_string(), e.to_string()))?;
        Ok(())
    }

    pub fn arrivals(&self) -> RateProfile {
        self.rates.arrivals.profile().expect("resolved at load")
    }

    pub fn taxi_supply(&self) -> RateProfile {
        self.rates.taxi_supply.profile().expect("resolved at load")
    }

    pub fn utility_params(&self) -> ClassUtilityParams {
        ClassUtilityParams { classes: self.choice.classes.clone(), tau: self.choice.tau }
    }

    pub fn taxi_params(&self, lambda_x: RateProfile, passenger_cap: usize) -> TaxiParams {
        TaxiParams {
            lambda_x,
            lambda_t: self.taxi_supply(),
            mu: self.taxi.mu,
            pool_cap: self.taxi.pool_cap,
            passenger_cap,
        }
    }

    pub fn bus_params(&self, lambda_b: RateProfile) -> BusParams {
        BusParams {
            lambda_b,
            q_b: self.bus.q,
            mu_b: self.bus.mu,
            c_b: self.bus.c,
            k_b: self.bus.k,
            n: self.bus.n,
            t_max: self.bus.t,
        }
    }

    pub fn subway_params(&self, lambda_s: RateProfile) -> SubwayParams {
        SubwayParams {
            lambda_s,
            q_s: self.subway.q,
            mu_s1: self.subway.mu1,
            mu_s2: self.subway.mu2,
            c_s1: self.subway.c1,
            c_s2: self.subway.c2,
            k_s1: self.subway.k1,
            k_s2: self.subway.k2,
            m: self.subway.m,
            order: self.subway.order,
        }
    }

    /// Longest horizon any command will advance from the initial state:
    /// sizing bound for the taxi truncation level.
    pub fn max_horizon(&self) -> f64 {
        self.horizon.minutes.max(self.solver.mswa.t_e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn minimal_toml() -> String {
        r#"
name = "unit"

[horizon]
minutes = 10.0

[rates.arrivals]
breakpoints = [0.0, 10.0]
values = [4.0]

[rates.taxi_supply]
breakpoints = [0.0, 10.0]
values = [1.0]

[taxi]
mu = 3.0
pool_cap = 8

[bus]
q = 0.5
mu = 1.0
c = 2
k = 40
n = 20
t = 10.0

[subway]
q = 0.3
mu1 = 8.0
mu2 = 1.0
c1 = 2
c2 = 2
k1 = 60
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
taxi_queue = 12
ticket_queue = 3
aboard = 2
timer_age = 4.0
security_queue = 9
subway_ticket_queue = 2
"#
        .to_string()
    }

    fn write_scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn loads_and_applies_solver_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_scenario(dir.path(), "unit.toml", &minimal_toml());
        let s = load_scenario(&path).unwrap();
        assert_eq!(s.solver.dt, 0.005);
        assert_eq!(s.solver.seed, 42);
        assert_eq!(s.solver.mswa.max_iter, 100);
        assert_eq!(s.subway.order, StageOrder::SecurityFirst);
        assert_eq!(s.arrivals().eval_rate(3.0).unwrap(), 4.0);
    }

    #[test]
    fn round_trips_to_an_identical_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_scenario(dir.path(), "unit.toml", &minimal_toml());
        let loaded = load_scenario(&path).unwrap();
        let echo = dir.path().join("echo.toml");
        loaded.save(&echo).unwrap();
        let reloaded = load_scenario(&echo).unwrap();
        assert_eq!(loaded, reloaded);
    }

    #[test]
    fn timetable_reference_resolves_and_clears() {
        let dir = tempfile::tempdir().unwrap();
        write_scenario(
            dir.path(),
            "flights.csv",
            "time_min,passengers\n0.0,40\n5.0,60\n",
        );
        let body = minimal_toml().replace(
            "[rates.arrivals]\nbreakpoints = [0.0, 10.0]\nvalues = [4.0]",
            "[rates.arrivals]\ntimetable = \"flights.csv\"\nspread_window = 10.0\nbin_width = 5.0",
        );
        let path = write_scenario(dir.path(), "unit.toml", &body);
        let s = load_scenario(&path).unwrap();
        assert!(s.rates.arrivals.timetable.is_none());
        let profile = s.arrivals();
        // 100 passengers total, conserved by the flattening.
        let mass = profile.integrate(profile.start(), profile.end()).unwrap();
        assert!((mass - 100.0).abs() < 1e-9);
    }

    #[test]
    fn supply_scale_folds_into_the_resolved_profile() {
        let dir = tempfile::tempdir().unwrap();
        let body = minimal_toml().replace(
            "[rates.taxi_supply]\nbreakpoints = [0.0, 10.0]\nvalues = [1.0]",
            "[rates.taxi_supply]\nbreakpoints = [0.0, 10.0]\nvalues = [20.0]\nscale = 0.05",
        );
        let path = write_scenario(dir.path(), "unit.toml", &body);
        let s = load_scenario(&path).unwrap();
        assert!(s.rates.taxi_supply.scale.is_none());
        assert_eq!(s.taxi_supply().eval_rate(1.0).unwrap(), 1.0);
    }

    #[test]
    fn validation_names_the_offending_field() {
        let dir = tempfile::tempdir().unwrap();
        let body = minimal_toml().replace("q = 0.5", "q = 1.3");
        let path = write_scenario(dir.path(), "unit.toml", &body);
        let err = load_scenario(&path).unwrap_err().to_string();
        assert!(err.contains("bus.q"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = minimal_toml().replace("mu = 3.0", "mu = 3.0\nmystery = 1");
        let path = write_scenario(dir.path(), "unit.toml", &body);
        assert!(load_scenario(&path).is_err());
    }

    #[test]
    fn initial_counts_must_fit_their_waiting_areas() {
        let dir = tempfile::tempdir().unwrap();
        let body = minimal_toml().replace("ticket_queue = 3", "ticket_queue = 99");
        let path = write_scenario(dir.path(), "unit.toml", &body);
        let err = load_scenario(&path).unwrap_err().to_string();
        assert!(err.contains("ticket_queue"), "{err}");
    }
}
