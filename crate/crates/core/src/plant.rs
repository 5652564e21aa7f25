//! Ground-truth converter model.
//!
//! Single-phase full-bridge boost rectifier behind an AC source:
//!
//! ```text
//!   L di/dt = -u v + E sin(wt) - R_s i
//!   C dv/dt =  u i - G v
//! ```
//!
//! `u` is the averaged duty ratio in [-1, 1]; the exact switched model
//! replaces it with the discrete bridge level `delta` in {-1, 0, +1}. The
//! series resistance `R_s` is a plant-side disturbance only: the observer and
//! the controller never see it.

use crate::error::Error;

/// Physical constants of the converter bench.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    /// Boost inductance (H).
    pub l: f64,
    /// DC-bus capacitance (F).
    pub c: f64,
    /// Load conductance (S).
    pub g: f64,
    /// AC source amplitude (V).
    pub e: f64,
    /// Line angular frequency (rad/s).
    pub omega: f64,
    /// AC-side series resistance (ohm). Zero on the nominal bench.
    pub r_s: f64,
}

impl PlantParams {
    /// Nominal bench: 110 V RMS line at 60 Hz, 1 mH / 2000 uF power stage,
    /// 0.02 S load.
    pub fn bench() -> Self {
        Self {
            l: 1e-3,
            c: 2000e-6,
            g: 0.02,
            e: 155.563,
            omega: 2.0 * std::f64::consts::PI * 60.0,
            r_s: 0.0,
        }
    }

    pub fn line_period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    pub fn validate(&self) -> Result<(), Error> {
        let positive = [
            ("plant.L", self.l),
            ("plant.C", self.c),
            ("plant.G", self.g),
            ("plant.E", self.e),
            ("plant.omega", self.omega),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        if !(self.r_s.is_finite() && self.r_s >= 0.0) {
            return Err(Error::Config(format!(
                "plant.R_s must be finite and non-negative, got {}",
                self.r_s
            )));
        }
        Ok(())
    }
}

impl Default for PlantParams {
    fn default() -> Self {
        Self::bench()
    }
}

/// Converter state: inductor current and DC-bus voltage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    /// Inductor (line-side) current (A).
    pub i: f64,
    /// DC-bus voltage (V).
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantDerivative {
    pub di_dt: f64,
    pub dv_dt: f64,
}

/// Instantaneous source voltage `E sin(wt)`.
pub fn source_voltage(t: f64, e: f64, omega: f64) -> f64 {
    e * (omega * t).sin()
}

/// Averaged-model state derivative under duty ratio `u`.
pub fn plant_derivative(state: &PlantState, u: f64, t: f64, p: &PlantParams) -> PlantDerivative {
    let v_i = source_voltage(t, p.e, p.omega);
    PlantDerivative {
        di_dt: (-u * state.v + v_i - p.r_s * state.i) / p.l,
        dv_dt: (u * state.i - p.g * state.v) / p.c,
    }
}

/// Exact switched-model derivative under bridge level `delta` in {-1, 0, +1}.
pub fn switched_derivative(
    state: &PlantState,
    delta: i8,
    t: f64,
    p: &PlantParams,
) -> Result<PlantDerivative, Error> {
    if !matches!(delta, -1 | 0 | 1) {
        return Err(Error::Domain(format!(
            "bridge level must be -1, 0, or +1, got {delta}"
        )));
    }
    Ok(plant_derivative(state, f64::from(delta), t, p))
}

/// Bipolar PWM comparator: +1 while the shifted duty `(u+1)/2` sits at or
/// above the carrier phase in [0, 1), else -1.
pub fn pwm_sample(u: f64, carrier_phase: f64) -> i8 {
    if (u + 1.0) / 2.0 >= carrier_phase {
        1
    } else {
        -1
    }
}
