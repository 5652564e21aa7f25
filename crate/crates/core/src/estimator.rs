//! Adaptive observer for the converter: estimates the source amplitude, the
//! load conductance, and the line current from the bus voltage and the duty
//! ratio alone.
//!
//! The construction works in a filtered coordinate `iota = i - mu' theta`,
//! where the filter pair `mu` soaks up the products of unknowns, leaving the
//! bus dynamics linear in the lumped state `eta = (iota, E, G)`. The
//! observer integrates a shifted copy `zeta` of that state; adding the
//! voltage-dependent shaping term `beta` recovers the estimate. The error
//! `eta_bar` then obeys a linear flow whose weighted energy never grows,
//! which is what the diagnostics here track.

use crate::error::Error;
use crate::linalg::{Mat2, Mat3, Vec2, Vec3};
use crate::plant::PlantParams;

/// Observer gains: scalar rate `k` and the weight matrices `J` and `D`.
///
/// `J` shapes how fast each parameter channel moves and cancels out of the
/// error energy; `D` reweights the regressor inside the energy decay rate.
/// Keeping `D` isotropic preserves the sign guarantee on the decay rate, so
/// per-channel shaping belongs in `J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorGains {
    pub k: f64,
    pub j: Mat2,
    pub d: Mat2,
}

impl EstimatorGains {
    pub fn new(k: f64, j: Mat2, d: Mat2) -> Result<Self, Error> {
        let g = Self { k, j, d };
        g.validate()?;
        Ok(g)
    }

    /// Diagonal weights, the only shape the configuration surface exposes.
    pub fn diagonal(k: f64, j1: f64, j2: f64, d1: f64, d2: f64) -> Result<Self, Error> {
        Self::new(k, Mat2::diag(j1, j2), Mat2::diag(d1, d2))
    }

    /// Default tuning for the nominal bench. The anisotropic J compensates
    /// the scale gap between the two regressor channels: the load channel
    /// sees the full bus voltage over C while the source channel only sees
    /// the modulated filter state, four decades smaller. An isotropic J at
    /// a rate the fast channel tolerates leaves the slow one useless.
    pub fn bench() -> Self {
        Self {
            k: 3e-3,
            j: Mat2::diag(1.0, 1e-4),
            d: Mat2::identity(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::Config(format!(
                "estimator.k must be finite and positive, got {}",
                self.k
            )));
        }
        if !self.j.is_spd(1e-12) {
            return Err(Error::Config(
                "estimator weight J must be symmetric positive definite".into(),
            ));
        }
        if !self.d.is_spd(1e-12) {
            return Err(Error::Config(
                "estimator weight D must be symmetric positive definite".into(),
            ));
        }
        Ok(())
    }
}

impl Default for EstimatorGains {
    fn default() -> Self {
        Self::bench()
    }
}

/// Observer memory: the filter pair and the shifted state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorState {
    pub mu: Vec2,
    pub zeta: Vec3,
}

/// Known signals multiplying the unknowns in the bus dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regressor {
    /// Drive on the current channel: (sin(wt)/L, 0).
    pub phi1: Vec2,
    /// Drive on the voltage channel: (0, -v/C).
    pub phi0: Vec2,
    /// Coefficient of the filtered current in the bus equation: u/C.
    pub c1: f64,
    /// Coefficient of the parameter vector in the bus equation.
    pub c2: Vec2,
}

/// What the observer reports: reconstructed current and parameter pair
/// (source amplitude, load conductance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimates {
    pub i_hat: f64,
    pub theta_hat: Vec2,
}

impl Estimates {
    pub fn e_hat(&self) -> f64 {
        self.theta_hat.0
    }

    pub fn g_hat(&self) -> f64 {
        self.theta_hat.1
    }
}

/// Ground-truth error bookkeeping; only tests and instrumented runs can fill
/// this in, since `eta_bar` needs the true parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorDiagnostics {
    pub eta_bar: Vec3,
    pub v: f64,
    pub v_dot: f64,
}

/// Sliding-window excitation check setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PEConfig {
    /// Window length (s).
    pub t0: f64,
    /// Sample spacing (s).
    pub stride: f64,
}

impl PEConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.t0.is_finite() && self.t0 > 0.0) {
            return Err(Error::Config(format!(
                "pe.T0 must be finite and positive, got {}",
                self.t0
            )));
        }
        if !(self.stride.is_finite() && self.stride > 0.0 && self.stride <= self.t0) {
            return Err(Error::Config(format!(
                "pe sample spacing must be positive and no longer than the window, got {}",
                self.stride
            )));
        }
        Ok(())
    }
}

/// Regressor at one instant.
pub fn build_regressor(v: f64, u: f64, mu: Vec2, t: f64, p: &PlantParams) -> Regressor {
    let phi0 = Vec2(0.0, -v / p.c);
    Regressor {
        phi1: Vec2((p.omega * t).sin() / p.l, 0.0),
        phi0,
        c1: u / p.c,
        c2: mu * (u / p.c) + phi0,
    }
}

/// Shaping term `beta(v, u, mu)`: the voltage integral of the weighted
/// regressor, in closed form.
pub fn beta(v: f64, u: f64, mu: Vec2, g: &EstimatorGains, p: &PlantParams) -> Vec3 {
    let beta1 = g.k * u * v / p.c;
    let beta2 = (g.j * (g.d * (mu * u - Vec2(0.0, 0.5 * v)))) * (g.k * v / p.c);
    Vec3::join(beta1, beta2)
}

/// Filter-pair dynamics. The choice cancels the regressor coupling out of
/// the error flow's off-diagonal blocks.
pub fn mu_derivative(mu: Vec2, v: f64, u: f64, t: f64, g: &EstimatorGains, p: &PlantParams) -> Vec2 {
    let r = build_regressor(v, u, mu, t, p);
    ((Mat2::identity() + g.d) * r.c2) * (-g.k * r.c1) + r.phi1
}

/// Shifted-state dynamics. `u_dot` comes from the controller's own law and
/// `mu_dot` from `mu_derivative`; both feed the explicit time-partial of
/// `beta`.
#[allow(clippy::too_many_arguments)]
pub fn zeta_derivative(
    zeta: Vec3,
    v: f64,
    u: f64,
    u_dot: f64,
    mu: Vec2,
    mu_dot: Vec2,
    t: f64,
    g: &EstimatorGains,
    p: &PlantParams,
) -> Vec3 {
    let r = build_regressor(v, u, mu, t, p);
    let jd_c2 = g.j * (g.d * r.c2);
    let dbeta_dv = Vec3::join(g.k * r.c1, jd_c2 * g.k);
    let shifted = zeta + beta(v, u, mu, g, p);
    let (_, shifted_tail) = shifted.split();
    // Drift block: only the current channel sees the parameters, through
    // phi1 - mu_dot.
    let drift = Vec3((r.phi1 - mu_dot).dot(shifted_tail), 0.0, 0.0);
    let projection = r.c1 * shifted.0 + r.c2.dot(shifted_tail);
    let dbeta_dt = Vec3::join(
        g.k * v * u_dot / p.c,
        (g.j * (g.d * (mu * u_dot + mu_dot * u))) * (g.k * v / p.c),
    );
    drift - dbeta_dv * projection + Vec3(-(u / p.l) * v, 0.0, 0.0) - dbeta_dt
}

/// Read the estimates out of the shifted state.
pub fn estimates(
    zeta: Vec3,
    v: f64,
    u: f64,
    mu: Vec2,
    g: &EstimatorGains,
    p: &PlantParams,
) -> Estimates {
    let b = beta(v, u, mu, g, p);
    let eta_hat = zeta + b;
    let (iota_hat, theta_hat) = eta_hat.split();
    Estimates {
        i_hat: iota_hat + mu.dot(theta_hat),
        theta_hat,
    }
}

/// System matrix of the linear error flow `eta_bar' = M(t) eta_bar`.
pub fn error_matrix(r: &Regressor, g: &EstimatorGains) -> Mat3 {
    let d_c2 = g.d * r.c2;
    let jd_c2 = g.j * d_c2;
    Mat3::from_blocks(
        r.c1 * r.c1,
        d_c2 * (-r.c1),
        jd_c2 * r.c1,
        jd_c2.outer(r.c2),
    )
    .scale(-g.k)
}

/// Weighted error energy. The `J` weight on the parameter channels is what
/// makes the energy decay independent of `J` itself.
pub fn lyapunov_value(eta_bar: Vec3, j: &Mat2) -> Result<f64, Error> {
    if !j.is_spd(1e-12) {
        return Err(Error::Domain(
            "error energy needs a symmetric positive definite J weight".into(),
        ));
    }
    let j_inv = j.inverse().expect("spd matrix is invertible");
    let (head, tail) = eta_bar.split();
    Ok(0.5 * (head * head + tail.dot(j_inv * tail)))
}

/// Decay rate of the weighted error energy along the error flow.
///
/// `J` cancels exactly; with an isotropic `D` the rate is a negative sum of
/// squares, so it can never be positive. Anisotropic `D` forfeits that sign
/// guarantee, which is why the bench tuning keeps `D = I`.
pub fn lyapunov_rate(eta_bar: Vec3, r: &Regressor, g: &EstimatorGains) -> f64 {
    let (head, tail) = eta_bar.split();
    let current_channel = r.c1 * r.c1 * head * head;
    let parameter_channel = tail.dot(g.d * r.c2) * r.c2.dot(tail);
    -g.k * (current_channel + parameter_channel)
}

/// Bundle the error bookkeeping for one instant.
pub fn diagnostics(
    eta_bar: Vec3,
    r: &Regressor,
    g: &EstimatorGains,
) -> Result<ErrorDiagnostics, Error> {
    Ok(ErrorDiagnostics {
        eta_bar,
        v: lyapunov_value(eta_bar, &g.j)?,
        v_dot: lyapunov_rate(eta_bar, r, g),
    })
}

/// Windowed excitation Gram of the parameter regressor: trapezoid integral
/// of `C2 C2'` over the trailing window of length `t0`, plus its smallest
/// eigenvalue. A strictly positive eigenvalue on every window is what turns
/// bounded error energy into exponential convergence.
pub fn pe_gram(c2_samples: &[Vec2], cfg: &PEConfig) -> Result<(Mat2, f64), Error> {
    cfg.validate()?;
    let intervals = (cfg.t0 / cfg.stride).round() as usize;
    if intervals == 0 || c2_samples.len() < intervals + 1 {
        let span = cfg.stride * c2_samples.len().saturating_sub(1) as f64;
        return Err(Error::Domain(format!(
            "excitation window needs {} s of samples, got {span} s",
            cfg.t0
        )));
    }
    let tail = &c2_samples[c2_samples.len() - 1 - intervals..];
    let mut acc = Mat2::ZERO;
    for (idx, s) in tail.iter().enumerate() {
        let w = if idx == 0 || idx == intervals { 0.5 } else { 1.0 };
        acc = acc + s.outer(*s).scale(w);
    }
    let gram = acc.scale(cfg.stride);
    let (min_eig, _) = gram.sym_eigenvalues();
    Ok((gram, min_eig))
}
