//! Fixed-step simulation of the closed loop.
//!
//! One state bundle carries the plant, the observer, the duty command, and
//! the resonant filter:
//!
//! ```text
//! [i, v, mu1, mu2, zeta1, zeta2, zeta3, u, x1, x2]
//! ```
//!
//! The integrator is classical fourth-order Runge-Kutta on a fixed grid
//! `t_n = n * dt`; times come from the index, never from accumulation, so
//! runs are bit-reproducible. Parameter step events take effect at the
//! first step whose start time has reached the event time, which keeps all
//! earlier rows bit-identical to an event-free run.
//!
//! The duty command lives in [-1, 1]. Integration clamps it there; while
//! it sits on a bound and the loop pushes further out, the step is taken
//! with the duty rate and the filter state frozen (anti-windup hold), and
//! the observer sees the zero duty rate that is actually applied.

use crate::config::{Mode, ScenarioConfig};
use crate::controller;
use crate::controller::ControllerGains;
use crate::error::Error;
use crate::estimator;
use crate::estimator::EstimatorGains;
use crate::linalg::{Mat2, Vec2, Vec3};
use crate::metrics::{compute_metrics, Metrics};
use crate::plant;
use crate::plant::{PlantParams, PlantState};
use crate::steady_state;
use crate::trace::TraceRow;

/// One classical Runge-Kutta step. The derivative may reject a state (an
/// abort condition); non-finite stage derivatives abort as well.
pub fn rk4_step<const N: usize, F>(
    f: &mut F,
    state: &[f64; N],
    t: f64,
    dt: f64,
) -> Result<[f64; N], Error>
where
    F: FnMut(&[f64; N], f64) -> Result<[f64; N], Error>,
{
    fn finite<const N: usize>(k: &[f64; N], t: f64) -> Result<(), Error> {
        if k.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numerical {
                t,
                what: "non-finite derivative".into(),
            })
        }
    }
    fn offset<const N: usize>(s: &[f64; N], k: &[f64; N], h: f64) -> [f64; N] {
        let mut out = *s;
        for n in 0..N {
            out[n] += h * k[n];
        }
        out
    }

    let k1 = f(state, t)?;
    finite(&k1, t)?;
    let k2 = f(&offset(state, &k1, 0.5 * dt), t + 0.5 * dt)?;
    finite(&k2, t)?;
    let k3 = f(&offset(state, &k2, 0.5 * dt), t + 0.5 * dt)?;
    finite(&k3, t)?;
    let k4 = f(&offset(state, &k3, dt), t + dt)?;
    finite(&k4, t)?;

    let mut out = *state;
    for n in 0..N {
        out[n] += dt / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
    }
    Ok(out)
}

pub(crate) const S_I: usize = 0;
pub(crate) const S_V: usize = 1;
pub(crate) const S_MU1: usize = 2;
pub(crate) const S_MU2: usize = 3;
pub(crate) const S_Z1: usize = 4;
pub(crate) const S_Z2: usize = 5;
pub(crate) const S_Z3: usize = 6;
pub(crate) const S_U: usize = 7;
pub(crate) const S_X1: usize = 8;
pub(crate) const S_X2: usize = 9;

/// Everything a derivative evaluation needs besides the state. `p` is the
/// plant with any past events already applied.
#[derive(Clone, Copy)]
pub(crate) struct StepCtx<'a> {
    pub p: PlantParams,
    pub est: &'a EstimatorGains,
    pub ctl: &'a ControllerGains,
    pub resonance: f64,
    pub mode: Mode,
    pub switched: bool,
    pub carrier_hz: f64,
    pub hold: bool,
}

pub(crate) struct LoopEval {
    pub u_dot: f64,
    pub x_dot: Vec2,
    /// Raw tracking error in baseline and observer modes, scaled error
    /// estimate in adaptive mode.
    pub error_signal: f64,
    pub i_hat: f64,
    pub theta_hat: Vec2,
}

/// Evaluate the control path at one state: observer output, error signal,
/// filter drive, duty rate. The anti-windup hold zeroes the integrating
/// rates but leaves the reported signals untouched.
pub(crate) fn closed_loop(s: &[f64; 10], t: f64, ctx: &StepCtx) -> Result<LoopEval, Error> {
    let i = s[S_I];
    let v = s[S_V];
    let mu = Vec2(s[S_MU1], s[S_MU2]);
    let zeta = Vec3(s[S_Z1], s[S_Z2], s[S_Z3]);
    let u = s[S_U];
    let x = Vec2(s[S_X1], s[S_X2]);

    let est = estimator::estimates(zeta, v, u, mu, ctx.est, &ctx.p);
    let (u_dot_raw, x_dot_raw, error_signal) = match ctx.mode {
        Mode::Baseline | Mode::Observer => {
            let v_i = plant::source_voltage(t, ctx.p.e, ctx.p.omega);
            let i0 = steady_state::min_current_amplitude(ctx.p.g, ctx.ctl.v_d, ctx.p.e);
            let (i_d, di_d_dt) = controller::desired_current(t, i0, ctx.p.omega);
            let e = controller::tracking_error(v_i, i, i_d, di_d_dt, u, v, ctx.ctl.ell, ctx.p.l);
            let (x_dot, w) =
                controller::resonant_filter_step(x, e, ctx.ctl.a, ctx.ctl.b, ctx.ctl.c, ctx.resonance);
            let u_dot = controller::u_derivative(u, v, i, w, ctx.p.c, ctx.ctl.v_min)?;
            (u_dot, x_dot, e)
        }
        Mode::Adaptive => {
            let (e_hat, _) = controller::scaled_error_estimate(
                t,
                est.e_hat(),
                est.g_hat(),
                est.i_hat,
                u,
                v,
                ctx.ctl,
                ctx.p.l,
                ctx.p.omega,
            );
            let (x_dot, w_hat) =
                controller::resonant_filter_step(x, e_hat, ctx.ctl.a, ctx.ctl.b, ctx.ctl.d, ctx.resonance);
            let u_dot =
                controller::adaptive_u_derivative(u, v, est.i_hat, w_hat, ctx.p.c, ctx.ctl.v_min)?;
            (u_dot, x_dot, e_hat)
        }
    };
    let (u_dot, x_dot) = if ctx.hold {
        (0.0, Vec2::ZERO)
    } else {
        (u_dot_raw, x_dot_raw)
    };
    Ok(LoopEval {
        u_dot,
        x_dot,
        error_signal,
        i_hat: est.i_hat,
        theta_hat: est.theta_hat,
    })
}

/// Full closed-loop derivative over the ten-state bundle.
pub(crate) fn bundle_derivative(s: &[f64; 10], t: f64, ctx: &StepCtx) -> Result<[f64; 10], Error> {
    let eval = closed_loop(s, t, ctx)?;
    let v = s[S_V];
    let u = s[S_U];
    let mu = Vec2(s[S_MU1], s[S_MU2]);
    let zeta = Vec3(s[S_Z1], s[S_Z2], s[S_Z3]);

    let mu_dot = estimator::mu_derivative(mu, v, u, t, ctx.est, &ctx.p);
    let zeta_dot =
        estimator::zeta_derivative(zeta, v, u, eval.u_dot, mu, mu_dot, t, ctx.est, &ctx.p);

    let ps = PlantState { i: s[S_I], v };
    let pd = if ctx.switched {
        let phase = (t * ctx.carrier_hz).fract();
        let delta = plant::pwm_sample(u, phase);
        plant::switched_derivative(&ps, delta, t, &ctx.p)?
    } else {
        plant::plant_derivative(&ps, u, t, &ctx.p)
    };

    Ok([
        pd.di_dt, pd.dv_dt, mu_dot.0, mu_dot.1, zeta_dot.0, zeta_dot.1, zeta_dot.2, eval.u_dot,
        eval.x_dot.0, eval.x_dot.1,
    ])
}

/// A run's full output: the strided trace, tail metrics, and the plant
/// parameters in force at the end (after any events).
#[derive(Debug, Clone)]
pub struct SimResult {
    pub trace: Vec<TraceRow>,
    pub metrics: Metrics,
    pub final_plant: PlantParams,
}

fn numerical(e: Error, t: f64) -> Error {
    match e {
        Error::Domain(what) => Error::Numerical { t, what },
        other => other,
    }
}

/// Run one scenario to completion or abort.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimResult, Error> {
    let dt = cfg.dt;
    let mut state = [0.0f64; 10];
    state[S_I] = cfg.init_i;
    state[S_V] = cfg.init_v;
    state[S_U] = cfg.init_u;

    let mut p = cfg.plant;
    let mut next_event = 0usize;

    // Windowed-excitation bookkeeping: a prefix trapezoid integral of the
    // regressor outer product at every step, with a ring of past prefixes
    // so the trailing-window Gram is one matrix subtraction.
    let w_steps = cfg.pe_window_steps;
    let mut prefix_ring = vec![Mat2::ZERO; w_steps + 1];
    let mut cum = Mat2::ZERO;
    let mut prev_outer = Mat2::ZERO;

    let mut trace = Vec::with_capacity(cfg.steps / cfg.stride + 2);

    for n in 0..=cfg.steps {
        let t = n as f64 * dt;
        while next_event < cfg.events.len() && cfg.events[next_event].t <= t {
            let ev = &cfg.events[next_event];
            if let Some(g) = ev.g {
                p.g = g;
            }
            if let Some(e) = ev.e {
                p.e = e;
            }
            next_event += 1;
        }

        if !state.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical {
                t,
                what: "non-finite state".into(),
            });
        }
        if state[S_V] <= 0.0 {
            return Err(Error::Numerical {
                t,
                what: format!("bus voltage collapsed to {:.3} V", state[S_V]),
            });
        }

        let r = estimator::build_regressor(
            state[S_V],
            state[S_U],
            Vec2(state[S_MU1], state[S_MU2]),
            t,
            &p,
        );
        let outer = r.c2.outer(r.c2);
        if n > 0 {
            cum = cum + (prev_outer + outer).scale(0.5 * dt);
        }
        prefix_ring[n % (w_steps + 1)] = cum;
        prev_outer = outer;

        // One evaluation decides the anti-windup hold for this step and
        // feeds the trace row when one is due.
        let mut ctx = StepCtx {
            p,
            est: &cfg.estimator,
            ctl: &cfg.controller,
            resonance: cfg.resonance,
            mode: cfg.mode,
            switched: cfg.switched,
            carrier_hz: cfg.carrier_hz,
            hold: false,
        };
        let eval = closed_loop(&state, t, &ctx).map_err(|e| numerical(e, t))?;
        let u = state[S_U];
        let hold = (u >= 1.0 && eval.u_dot > 0.0) || (u <= -1.0 && eval.u_dot < 0.0);
        ctx.hold = hold;

        if n % cfg.stride == 0 || n == cfg.steps {
            let theta = Vec2(p.e, p.g);
            let mu = Vec2(state[S_MU1], state[S_MU2]);
            let beta = estimator::beta(state[S_V], state[S_U], mu, &cfg.estimator, &p);
            let iota = state[S_I] - mu.dot(theta);
            let eta_bar = Vec3(
                iota - state[S_Z1] - beta.0,
                theta.0 - eval.theta_hat.0,
                theta.1 - eval.theta_hat.1,
            );
            let v_lyap = estimator::lyapunov_value(eta_bar, &cfg.estimator.j)?;
            let v_lyap_rate = estimator::lyapunov_rate(eta_bar, &r, &cfg.estimator);
            let pe_min_eig = if n >= w_steps {
                let window = cum + prefix_ring[(n - w_steps) % (w_steps + 1)].scale(-1.0);
                window.sym_eigenvalues().0
            } else {
                0.0
            };
            trace.push(TraceRow {
                t,
                i: state[S_I],
                v: state[S_V],
                u: state[S_U],
                i_hat: eval.i_hat,
                e_hat: eval.theta_hat.0,
                g_hat: eval.theta_hat.1,
                mu1: state[S_MU1],
                mu2: state[S_MU2],
                zeta1: state[S_Z1],
                zeta2: state[S_Z2],
                zeta3: state[S_Z3],
                v_lyap,
                v_lyap_rate,
                e_or_e_hat: eval.error_signal,
                pe_min_eig,
                saturated: hold,
            });
        }

        if n == cfg.steps {
            break;
        }
        let mut f = |s: &[f64; 10], tt: f64| bundle_derivative(s, tt, &ctx);
        state = rk4_step(&mut f, &state, t, dt).map_err(|e| numerical(e, t))?;
        state[S_U] = state[S_U].clamp(-1.0, 1.0);
    }

    let metrics = compute_metrics(&trace, cfg)?;
    Ok(SimResult {
        trace,
        metrics,
        final_plant: p,
    })
}
