//! Flat key-value scenario configuration.
//!
//! One dotted key per line (`plant.L = 1e-3`), `#` comments, and an
//! `events = [t=0.5 G=0.03]` list for timed parameter steps. The same
//! `set_key` path serves file parsing and command-line overrides, so the
//! precedence rule is simply "last write wins". `resolve()` turns the raw
//! surface into a validated `ScenarioConfig`, filling the derived defaults
//! (filter resonance from the line frequency, scaled-error gain from the
//! baseline gain, excitation window from the line period).

use crate::controller::ControllerGains;
use crate::error::Error;
use crate::estimator::EstimatorGains;
use crate::plant::PlantParams;

/// Which control path closes the loop.
///
/// `Baseline` and `Observer` share identical dynamics: the controller runs
/// on true parameters and the measured current while the observer watches
/// passively. The names differ so scenario intent reads off the config.
/// `Adaptive` closes the loop on estimates alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Baseline,
    Observer,
    Adaptive,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode, Error> {
        match s {
            "baseline" | "baseline-known-parameters" => Ok(Mode::Baseline),
            "observer" | "observer-only" => Ok(Mode::Observer),
            "adaptive" | "adaptive-sensorless" => Ok(Mode::Adaptive),
            other => Err(Error::Config(format!(
                "unknown controller.mode {other:?}; use baseline, observer, or adaptive"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Observer => "observer",
            Mode::Adaptive => "adaptive",
        }
    }
}

/// Timed parameter step; either value may change at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub g: Option<f64>,
    pub e: Option<f64>,
}

/// Raw configuration surface: every key the file format and the CLI expose.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub plant: PlantParams,
    pub estimator_k: f64,
    pub estimator_j1: f64,
    pub estimator_j2: f64,
    pub estimator_d1: f64,
    pub estimator_d2: f64,
    pub mode: Mode,
    pub controller_a: f64,
    /// 0 selects the resonance coefficient itself.
    pub controller_b: f64,
    pub controller_c: f64,
    /// 0 selects `c / E`.
    pub controller_d: f64,
    pub controller_ell: f64,
    pub controller_v_d: f64,
    pub controller_v_min: f64,
    /// Power on the line frequency in the filter denominator; 2 is the
    /// resonant form, 1 reproduces a dimensionally odd variant kept for
    /// comparison runs.
    pub denom_exponent: i32,
    pub dt: f64,
    pub duration: f64,
    pub stride: usize,
    pub switched: bool,
    pub carrier_hz: f64,
    pub init_i: f64,
    /// Defaults to the source amplitude when unset.
    pub init_v: Option<f64>,
    pub init_u: f64,
    /// Defaults to one line period when unset.
    pub pe_t0: Option<f64>,
    pub events: Vec<Event>,
    pub out_trace: Option<String>,
    pub out_metrics: Option<String>,
    pub name: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            plant: PlantParams::bench(),
            estimator_k: 3e-3,
            estimator_j1: 1.0,
            estimator_j2: 1e-4,
            estimator_d1: 1.0,
            estimator_d2: 1.0,
            mode: Mode::Adaptive,
            controller_a: 450.0,
            controller_b: 0.0,
            controller_c: 1500.0,
            controller_d: 0.0,
            controller_ell: 1.5,
            controller_v_d: 200.0,
            controller_v_min: 1.0,
            denom_exponent: 2,
            dt: 1e-5,
            duration: 1.0,
            stride: 10,
            switched: false,
            carrier_hz: 20_000.0,
            init_i: 0.0,
            init_v: None,
            init_u: 0.0,
            pe_t0: None,
            events: Vec::new(),
            out_trace: None,
            out_metrics: None,
            name: "scenario".into(),
        }
    }
}

/// Validated, fully resolved scenario ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub plant: PlantParams,
    pub estimator: EstimatorGains,
    pub controller: ControllerGains,
    /// Squared-frequency coefficient in the filter denominator.
    pub resonance: f64,
    pub mode: Mode,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub switched: bool,
    pub carrier_hz: f64,
    /// Excitation window rounded to the step grid.
    pub pe_window_steps: usize,
    pub pe_t0: f64,
    pub events: Vec<Event>,
    pub init_i: f64,
    pub init_v: f64,
    pub init_u: f64,
    pub name: String,
    pub out_trace: Option<String>,
    pub out_metrics: Option<String>,
}

impl ScenarioConfig {
    /// Plant parameters in force at time `t`: initial values with every
    /// event at or before `t` applied. Matches the engine rule that a step
    /// scheduled at `tau` takes effect on the first integration step whose
    /// start time has reached it.
    pub fn plant_at(&self, t: f64) -> PlantParams {
        let mut p = self.plant;
        for ev in &self.events {
            if ev.t > t {
                break;
            }
            if let Some(g) = ev.g {
                p.g = g;
            }
            if let Some(e) = ev.e {
                p.e = e;
            }
        }
        p
    }

    /// Plant parameters after all events.
    pub fn final_plant(&self) -> PlantParams {
        self.plant_at(f64::INFINITY)
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, Error> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {value:?}")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, Error> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, Error> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

fn parse_events(value: &str) -> Result<Vec<Event>, Error> {
    let trimmed = value.trim();
    let inner = trimmed
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| {
            Error::Config(format!(
                "events: expected a bracketed list like [t=0.5 G=0.03], got {value:?}"
            ))
        })?;
    let mut events = Vec::new();
    for entry in inner.split(',') {
        let entry = entry.trim();
        if entry.is_empty() {
            continue;
        }
        let mut t = None;
        let mut g = None;
        let mut e = None;
        for token in entry.split_whitespace() {
            let (k, v) = token.split_once('=').ok_or_else(|| {
                Error::Config(format!("events: malformed entry token {token:?}"))
            })?;
            match k {
                "t" => t = Some(parse_f64("events.t", v)?),
                "G" => g = Some(parse_f64("events.G", v)?),
                "E" => e = Some(parse_f64("events.E", v)?),
                other => {
                    return Err(Error::Config(format!(
                        "events: unknown field {other:?}; use t, G, E"
                    )))
                }
            }
        }
        let t = t.ok_or_else(|| {
            Error::Config(format!("events: entry {entry:?} is missing its time t"))
        })?;
        if g.is_none() && e.is_none() {
            return Err(Error::Config(format!(
                "events: entry {entry:?} changes nothing; set G or E"
            )));
        }
        events.push(Event { t, g, e });
    }
    Ok(events)
}

impl Config {
    /// Apply one dotted key. Shared by the file parser and CLI overrides.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), Error> {
        match key {
            "plant.L" => self.plant.l = parse_f64(key, value)?,
            "plant.C" => self.plant.c = parse_f64(key, value)?,
            "plant.G" => self.plant.g = parse_f64(key, value)?,
            "plant.E" => self.plant.e = parse_f64(key, value)?,
            "plant.omega" => self.plant.omega = parse_f64(key, value)?,
            "plant.R_s" => self.plant.r_s = parse_f64(key, value)?,
            "estimator.k" => self.estimator_k = parse_f64(key, value)?,
            "estimator.j1" => self.estimator_j1 = parse_f64(key, value)?,
            "estimator.j2" => self.estimator_j2 = parse_f64(key, value)?,
            "estimator.d1" => self.estimator_d1 = parse_f64(key, value)?,
            "estimator.d2" => self.estimator_d2 = parse_f64(key, value)?,
            "controller.mode" => self.mode = Mode::parse(value)?,
            "controller.a" => self.controller_a = parse_f64(key, value)?,
            "controller.b" => self.controller_b = parse_f64(key, value)?,
            "controller.c" => self.controller_c = parse_f64(key, value)?,
            "controller.d" => self.controller_d = parse_f64(key, value)?,
            "controller.ell" => self.controller_ell = parse_f64(key, value)?,
            "controller.V_d" => self.controller_v_d = parse_f64(key, value)?,
            "controller.v_min" => self.controller_v_min = parse_f64(key, value)?,
            "controller.denom_exponent" => {
                self.denom_exponent = value.parse::<i32>().map_err(|_| {
                    Error::Config(format!("{key}: expected an integer, got {value:?}"))
                })?
            }
            "sim.dt" => self.dt = parse_f64(key, value)?,
            "sim.duration" => self.duration = parse_f64(key, value)?,
            "sim.stride" => self.stride = parse_usize(key, value)?,
            "sim.switched" => self.switched = parse_bool(key, value)?,
            "sim.carrier_hz" => self.carrier_hz = parse_f64(key, value)?,
            "init.i" => self.init_i = parse_f64(key, value)?,
            "init.v" => self.init_v = Some(parse_f64(key, value)?),
            "init.u" => self.init_u = parse_f64(key, value)?,
            "pe.T0" => self.pe_t0 = Some(parse_f64(key, value)?),
            "events" => self.events = parse_events(value)?,
            "out.trace" => self.out_trace = Some(value.to_string()),
            "out.metrics" => self.out_metrics = Some(value.to_string()),
            "scenario.name" => self.name = value.to_string(),
            _ => {
                return Err(Error::Config(format!("unknown configuration key {key:?}")));
            }
        }
        Ok(())
    }

    /// Parse a whole config file on top of the defaults.
    pub fn from_text(text: &str) -> Result<Config, Error> {
        let mut cfg = Config::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Apply config-file lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), Error> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            self.set_key(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Validate everything and fill derived defaults.
    pub fn resolve(&self) -> Result<ScenarioConfig, Error> {
        self.plant.validate()?;
        let estimator = EstimatorGains::diagonal(
            self.estimator_k,
            self.estimator_j1,
            self.estimator_j2,
            self.estimator_d1,
            self.estimator_d2,
        )?;
        if !matches!(self.denom_exponent, 1 | 2) {
            return Err(Error::Config(format!(
                "controller.denom_exponent must be 1 or 2, got {}",
                self.denom_exponent
            )));
        }
        let resonance = self.plant.omega.powi(self.denom_exponent);
        let b = if self.controller_b == 0.0 {
            resonance
        } else {
            self.controller_b
        };
        let d = if self.controller_d == 0.0 {
            self.controller_c / self.plant.e
        } else {
            self.controller_d
        };
        let controller = ControllerGains {
            a: self.controller_a,
            b,
            c: self.controller_c,
            d,
            ell: self.controller_ell,
            v_d: self.controller_v_d,
            v_min: self.controller_v_min,
        };
        controller.validate(self.plant.e)?;

        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!(
                "sim.dt must be finite and positive, got {}",
                self.dt
            )));
        }
        let period = self.plant.line_period();
        if !(self.duration.is_finite() && self.duration >= 10.0 * period - 1e-9) {
            return Err(Error::Config(format!(
                "sim.duration must cover at least ten line periods ({:.6} s), got {}",
                10.0 * period,
                self.duration
            )));
        }
        let steps = (self.duration / self.dt).round() as usize;
        if self.stride == 0 {
            return Err(Error::Config("sim.stride must be at least 1".into()));
        }
        if self.switched {
            if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
                return Err(Error::Config(format!(
                    "sim.carrier_hz must be finite and positive, got {}",
                    self.carrier_hz
                )));
            }
            if 1.0 / self.carrier_hz < 10.0 * self.dt {
                return Err(Error::Config(format!(
                    "sim.dt {} is too coarse for the {} Hz carrier; need at least ten steps per carrier period",
                    self.dt, self.carrier_hz
                )));
            }
        }

        let mut last_t = 0.0;
        for ev in &self.events {
            if !(ev.t.is_finite() && ev.t > 0.0 && ev.t < self.duration) {
                return Err(Error::Config(format!(
                    "events: time {} must sit strictly inside the run (0, {})",
                    ev.t, self.duration
                )));
            }
            if ev.t <= last_t {
                return Err(Error::Config(
                    "events: times must be strictly increasing".into(),
                ));
            }
            last_t = ev.t;
            if let Some(g) = ev.g {
                if !(g.is_finite() && g > 0.0) {
                    return Err(Error::Config(format!(
                        "events: stepped G must be finite and positive, got {g}"
                    )));
                }
            }
            if let Some(e) = ev.e {
                if !(e.is_finite() && e > 0.0) {
                    return Err(Error::Config(format!(
                        "events: stepped E must be finite and positive, got {e}"
                    )));
                }
                if self.controller_v_d <= e {
                    return Err(Error::Config(format!(
                        "events: stepped E {e} V reaches the regulation target {} V",
                        self.controller_v_d
                    )));
                }
            }
        }

        let pe_t0 = self.pe_t0.unwrap_or(period);
        if !(pe_t0.is_finite() && pe_t0 > 0.0) {
            return Err(Error::Config(format!(
                "pe.T0 must be finite and positive, got {pe_t0}"
            )));
        }
        let pe_window_steps = (pe_t0 / self.dt).round().max(1.0) as usize;
        if pe_window_steps > steps {
            return Err(Error::Config(format!(
                "pe.T0 {pe_t0} s does not fit inside the run"
            )));
        }

        let init_v = self.init_v.unwrap_or(self.plant.e);
        for (name, value) in [
            ("init.i", self.init_i),
            ("init.v", init_v),
            ("init.u", self.init_u),
        ] {
            if !value.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {value}")));
            }
        }
        if self.init_u.abs() > 1.0 {
            return Err(Error::Config(format!(
                "init.u must sit in [-1, 1], got {}",
                self.init_u
            )));
        }

        Ok(ScenarioConfig {
            plant: self.plant,
            estimator,
            controller,
            resonance,
            mode: self.mode,
            dt: self.dt,
            steps,
            stride: self.stride,
            switched: self.switched,
            carrier_hz: self.carrier_hz,
            pe_window_steps,
            pe_t0,
            events: self.events.clone(),
            init_i: self.init_i,
            init_v,
            init_u: self.init_u,
            name: self.name.clone(),
            out_trace: self.out_trace.clone(),
            out_metrics: self.out_metrics.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let sc = Config::default().resolve().unwrap();
        assert_eq!(sc.mode, Mode::Adaptive);
        assert_eq!(sc.steps, 100_000);
        let omega = sc.plant.omega;
        assert_eq!(sc.resonance, omega * omega);
        assert_eq!(sc.controller.b, sc.resonance);
        assert!((sc.controller.d - sc.controller.c / sc.plant.e).abs() < 1e-15);
        assert_eq!(sc.init_v, sc.plant.e);
        assert!((sc.pe_t0 - sc.plant.line_period()).abs() < 1e-15);
        assert_eq!(sc.pe_window_steps, 1667);
    }

    #[test]
    fn file_text_round_trip() {
        let text = "\
# bench with a heavier load and a mid-run load step
plant.G = 0.04
controller.mode = observer
sim.duration = 0.5
init.v = 120.0
events = [t=0.25 G=0.06]
scenario.name = load-step
";
        let cfg = Config::from_text(text).unwrap();
        assert_eq!(cfg.plant.g, 0.04);
        assert_eq!(cfg.mode, Mode::Observer);
        assert_eq!(cfg.duration, 0.5);
        assert_eq!(cfg.init_v, Some(120.0));
        assert_eq!(cfg.events.len(), 1);
        assert_eq!(cfg.events[0].t, 0.25);
        assert_eq!(cfg.events[0].g, Some(0.06));
        assert_eq!(cfg.events[0].e, None);
        assert_eq!(cfg.name, "load-step");
        cfg.resolve().unwrap();
    }

    #[test]
    fn later_writes_win() {
        let mut cfg = Config::default();
        cfg.set_key("plant.L", "2e-3").unwrap();
        cfg.set_key("plant.L", "3e-3").unwrap();
        assert_eq!(cfg.plant.l, 3e-3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = Config::default();
        assert!(cfg.set_key("plant.X", "1").is_err());
        assert!(cfg.set_key("plant.l", "1").is_err());
        assert!(Config::from_text("nonsense\n").is_err());
    }

    #[test]
    fn mode_aliases() {
        assert_eq!(Mode::parse("baseline-known-parameters").unwrap(), Mode::Baseline);
        assert_eq!(Mode::parse("observer-only").unwrap(), Mode::Observer);
        assert_eq!(Mode::parse("adaptive-sensorless").unwrap(), Mode::Adaptive);
        assert!(Mode::parse("fuzzy").is_err());
    }

    #[test]
    fn event_list_parsing() {
        let evs = parse_events("[t=0.5 G=0.03, t=0.7 E=140.0 G=0.01]").unwrap();
        assert_eq!(evs.len(), 2);
        assert_eq!(evs[0].g, Some(0.03));
        assert_eq!(evs[1].e, Some(140.0));
        assert_eq!(evs[1].g, Some(0.01));
        assert!(parse_events("[]").unwrap().is_empty());
        assert!(parse_events("t=0.5").is_err());
        assert!(parse_events("[t=0.5]").is_err());
        assert!(parse_events("[G=0.03]").is_err());
        assert!(parse_events("[t=0.5 Q=1]").is_err());
    }

    #[test]
    fn resolve_rejects_a_short_run() {
        let mut cfg = Config::default();
        cfg.duration = 0.05;
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn resolve_rejects_an_unreachable_target() {
        let mut cfg = Config::default();
        cfg.controller_v_d = 100.0;
        assert!(cfg.resolve().is_err());
        let mut cfg = Config::default();
        cfg.events = vec![Event {
            t: 0.5,
            g: None,
            e: Some(250.0),
        }];
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn resolve_rejects_misordered_events() {
        let mut cfg = Config::default();
        cfg.events = vec![
            Event {
                t: 0.5,
                g: Some(0.03),
                e: None,
            },
            Event {
                t: 0.4,
                g: Some(0.04),
                e: None,
            },
        ];
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn resolve_rejects_a_coarse_switched_grid() {
        let mut cfg = Config::default();
        cfg.switched = true;
        cfg.dt = 1e-5;
        cfg.carrier_hz = 20_000.0;
        assert!(cfg.resolve().is_err());
        cfg.dt = 1e-6;
        assert!(cfg.resolve().is_ok());
    }

    #[test]
    fn resolve_rejects_the_odd_denominator_exponents() {
        let mut cfg = Config::default();
        cfg.denom_exponent = 3;
        assert!(cfg.resolve().is_err());
        cfg.denom_exponent = 1;
        let sc = cfg.resolve().unwrap();
        assert_eq!(sc.resonance, sc.plant.omega);
    }

    #[test]
    fn plant_at_applies_events_in_order() {
        let mut cfg = Config::default();
        cfg.events = vec![
            Event {
                t: 0.3,
                g: Some(0.03),
                e: None,
            },
            Event {
                t: 0.6,
                g: None,
                e: Some(140.0),
            },
        ];
        let sc = cfg.resolve().unwrap();
        assert_eq!(sc.plant_at(0.1).g, 0.02);
        assert_eq!(sc.plant_at(0.3).g, 0.03);
        assert_eq!(sc.plant_at(0.5).e, 155.563);
        assert_eq!(sc.plant_at(0.9).e, 140.0);
        assert_eq!(sc.final_plant().g, 0.03);
        assert_eq!(sc.final_plant().e, 140.0);
    }

    #[test]
    fn explicit_values_override_the_derived_defaults() {
        let mut cfg = Config::default();
        cfg.controller_b = 5.0e4;
        cfg.controller_d = 7.5;
        cfg.pe_t0 = Some(0.05);
        let sc = cfg.resolve().unwrap();
        assert_eq!(sc.controller.b, 5.0e4);
        assert_eq!(sc.controller.d, 7.5);
        assert_eq!(sc.pe_t0, 0.05);
        assert_eq!(sc.pe_window_steps, 5000);
    }
}
