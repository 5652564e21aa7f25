//! Closed-form steady-state analysis for a postulated sinusoidal line
//! current.
//!
//! With `i(t) = I_s sin(wt - dr)` imposed on the converter, everything else
//! follows in closed form: the control voltage `u v` needed to hold that
//! current, the DC level the bus settles to, and the second-harmonic ripple
//! riding on `v^2`. These formulas are the ground truth the simulation
//! results are checked against.

use crate::error::Error;
use crate::plant::PlantParams;

/// A steady operating point: current amplitude and its phase lag behind the
/// source voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    /// Phase lag of the line current behind the source (rad), in
    /// (-pi/2, pi/2).
    pub delta_rho: f64,
    /// Line current amplitude (A). Zero is the quiescent (degenerate) point.
    pub i_s: f64,
}

impl OperatingPoint {
    pub fn new(delta_rho: f64, i_s: f64) -> Result<Self, Error> {
        if !delta_rho.is_finite() || delta_rho.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Domain(format!(
                "phase lag must sit strictly inside (-pi/2, pi/2), got {delta_rho} rad"
            )));
        }
        if !i_s.is_finite() || i_s < 0.0 {
            return Err(Error::Domain(format!(
                "current amplitude must be finite and non-negative, got {i_s}"
            )));
        }
        Ok(Self { delta_rho, i_s })
    }
}

/// Everything the steady-state analysis predicts for one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateSummary {
    /// DC component of the bus voltage (V).
    pub v_s: f64,
    /// Minimum current amplitude that can hold `v_d` (A), reached at zero
    /// phase lag.
    pub i_0: f64,
    /// Second-harmonic drive, cosine channel (V*A).
    pub d1: f64,
    /// Second-harmonic drive, sine channel (V*A).
    pub d2: f64,
    /// Ripple amplitude of `v^2` (V^2).
    pub a: f64,
    /// Ripple phase (rad); 0 by convention at the quiescent point.
    pub eps: f64,
    /// Control-voltage amplitude (V).
    pub b: f64,
    /// Control-voltage phase lead over the source (rad).
    pub delta: f64,
    /// True when `i_s = 0`: no ripple exists and `eps` defaults to 0.
    pub ripple_degenerate: bool,
}

/// Current amplitude that regulates the bus to `v_d` at phase lag
/// `delta_rho`.
pub fn steady_current_amplitude(delta_rho: f64, g: f64, v_d: f64, e: f64) -> Result<f64, Error> {
    if !delta_rho.is_finite() || delta_rho.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::Domain(format!(
            "phase lag {delta_rho} rad admits no operating point; need |delta_rho| < pi/2"
        )));
    }
    Ok(2.0 * g * v_d * v_d / (e * delta_rho.cos()))
}

/// Smallest current amplitude that can hold `v_d`: the zero-lag value.
pub fn min_current_amplitude(g: f64, v_d: f64, e: f64) -> f64 {
    2.0 * g * v_d * v_d / e
}

/// DC bus level produced by a given current amplitude and phase lag.
pub fn dc_output_voltage(delta_rho: f64, i_s: f64, e: f64, g: f64) -> Result<f64, Error> {
    let radicand = e * i_s * delta_rho.cos() / (2.0 * g);
    if !(radicand > 0.0) {
        return Err(Error::Domain(format!(
            "no positive dc level: e*i_s*cos(delta_rho)/(2 g) = {radicand}"
        )));
    }
    Ok(radicand.sqrt())
}

/// Quadrature components of the second-harmonic power drive on the bus.
pub fn harmonic_coefficients(op: &OperatingPoint, e: f64, l: f64, omega: f64) -> (f64, f64) {
    let lw = l * omega;
    let d1 = 0.5 * op.i_s * (e * op.delta_rho.cos() - lw * op.i_s * (2.0 * op.delta_rho).sin());
    let d2 = 0.5 * op.i_s * (e * op.delta_rho.sin() + lw * op.i_s * (2.0 * op.delta_rho).cos());
    (d1, d2)
}

/// Amplitude and phase of the `v^2` ripple at twice the line frequency.
///
/// The bus obeys `(C/2) d(v^2)/dt + G v^2 = drive`; the harmonic part of the
/// drive is `-d1 cos(2wt) - d2 sin(2wt)`, and the forced response written as
/// `A sin(2wt + eps)` gives the pair returned here. At the quiescent point
/// there is no ripple to phase-reference, so `eps` is reported as 0.
pub fn ripple_amplitude_phase(
    op: &OperatingPoint,
    e: f64,
    l: f64,
    omega: f64,
    g: f64,
    c: f64,
) -> (f64, f64) {
    let (d1, d2) = harmonic_coefficients(op, e, l, omega);
    let cw = c * omega;
    let det = g * g + cw * cw;
    let a_cos = (cw * d2 - g * d1) / det;
    let a_sin = -(g * d2 + cw * d1) / det;
    let a = (a_cos * a_cos + a_sin * a_sin).sqrt();
    let eps = if op.i_s == 0.0 {
        0.0
    } else {
        a_cos.atan2(a_sin)
    };
    (a, eps)
}

/// Steady-state `v^2(t)`: DC level plus the second-harmonic ripple.
pub fn steady_v_squared(t: f64, op: &OperatingPoint, p: &PlantParams) -> f64 {
    let (a, eps) = ripple_amplitude_phase(op, p.e, p.l, p.omega, p.g, p.c);
    let dc = p.e * op.i_s * op.delta_rho.cos() / (2.0 * p.g);
    dc + a * (2.0 * p.omega * t + eps).sin()
}

/// Amplitude and phase of the steady control voltage `u v = B sin(wt +
/// delta)`.
///
/// Holding `i(t) = I_s sin(wt - dr)` takes `u v = E sin(wt) - Lw I_s
/// cos(wt - dr)`; the current slope subtracts from the in-phase drive and
/// injects a quadrature term, so `delta` is strictly negative whenever the
/// current is nonzero. That sign change of `u v` over each cycle is what
/// keeps the estimator's regressor exciting.
pub fn control_voltage_envelope(op: &OperatingPoint, e: f64, l: f64, omega: f64) -> (f64, f64) {
    let lwi = l * omega * op.i_s;
    let b_sin = e - lwi * op.delta_rho.sin();
    let b_cos = -lwi * op.delta_rho.cos();
    let b = (b_sin * b_sin + b_cos * b_cos).sqrt();
    let delta = b_cos.atan2(b_sin);
    (b, delta)
}

/// Full prediction set for one operating point against a target bus voltage.
pub fn summarize(
    op: &OperatingPoint,
    p: &PlantParams,
    v_d: f64,
) -> Result<SteadyStateSummary, Error> {
    p.validate()?;
    if !(v_d.is_finite() && v_d > 0.0) {
        return Err(Error::Domain(format!(
            "target bus voltage must be finite and positive, got {v_d}"
        )));
    }
    let degenerate = op.i_s == 0.0;
    let v_s = if degenerate {
        0.0
    } else {
        dc_output_voltage(op.delta_rho, op.i_s, p.e, p.g)?
    };
    let (d1, d2) = harmonic_coefficients(op, p.e, p.l, p.omega);
    let (a, eps) = ripple_amplitude_phase(op, p.e, p.l, p.omega, p.g, p.c);
    let (b, delta) = control_voltage_envelope(op, p.e, p.l, p.omega);
    Ok(SteadyStateSummary {
        v_s,
        i_0: min_current_amplitude(p.g, v_d, p.e),
        d1,
        d2,
        a,
        eps,
        b,
        delta,
        ripple_degenerate: degenerate,
    })
}
