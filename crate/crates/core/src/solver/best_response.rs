use super::{closed_form_no_dr, fb_merit, EquilibriumSolution, NewtonOutcome, SolveStatus};
use crate::equilibrium::{assemble_dr_per_period, assemble_no_dr};
use crate::error::{Error, Result};
use crate::market::{inverse_demand, MarketMode, PeriodDemand, SigmoidConfig, ThermalParams};
use crate::scenario::Scenario;

const MAX_SWEEPS: usize = 10_000;

/// Gauss–Seidel best-response iteration, period by period.
///
/// Periods are treated as independent games (no balance constraint). Each
/// sweep replaces thermal output by its best reply to the current hydro
/// output, then hydro output by its best reply to the new thermal output,
/// starting from the closed-form no-DR point. Replies are exact in no-DR mode
/// and found by [`local_best_response`] in DR mode. Stops once no quantity
/// moves by more than `tol`.
pub fn best_response_equilibrium(s: &Scenario, tol: f64) -> Result<EquilibriumSolution> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(crate::error::invalid("tol", "must be > 0"));
    }
    let system = match s.mode {
        MarketMode::NoDr => assemble_no_dr(s)?,
        MarketMode::Dr => assemble_dr_per_period(s)?,
    };
    let lay = *system.layout();
    let eta = s.hydro.production.slope();
    let h_cap = s.hydro.energy_cap();
    let mut z = vec![0.0; lay.len()];
    let mut sweeps_used = 0;

    for (t, pd) in s.periods.iter().enumerate() {
        let cf = closed_form_no_dr(pd, &s.thermal, &s.hydro);
        let (mut r, mut h) = (cf.r, cf.h);
        let mut converged = false;
        let mut last_move = f64::INFINITY;
        for sweep in 1..=MAX_SWEEPS {
            let rn = thermal_best_response(s, pd, r, h);
            let hn = hydro_best_response(s, pd, rn, h, h_cap);
            last_move = (rn - r).abs().max((hn - h).abs());
            r = rn;
            h = hn;
            if last_move < tol {
                sweeps_used = sweeps_used.max(sweep);
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::BestResponseDiverged {
                sweeps: MAX_SWEEPS,
                last_move,
            });
        }
        let w = if h >= h_cap {
            s.hydro.w_max
        } else {
            s.hydro.production.release_for(h)
        };
        let d = inverse_demand(pd, &s.sigmoid, s.mode, r + h);
        let thermal_row = -(d.price + d.slope * r) + s.thermal.marginal_cost(r);
        let hydro_row = -eta * (d.price + d.slope * h);
        z[lay.r(t)] = r;
        z[lay.w(t)] = w;
        z[lay.mu_t(t)] = if r >= s.thermal.r_max {
            (-thermal_row).max(0.0)
        } else {
            0.0
        };
        z[lay.mu_h(t)] = if h >= h_cap { (-hydro_row).max(0.0) } else { 0.0 };
    }
    let merit = fb_merit(&system, &z)?;
    Ok(EquilibriumSolution::from_point(
        &system,
        NewtonOutcome {
            z,
            status: SolveStatus::Converged,
            iterations: sweeps_used,
            restarts: 0,
            merit,
            merit_history: vec![merit],
        },
    ))
}

fn thermal_best_response(s: &Scenario, pd: &PeriodDemand, r: f64, h: f64) -> f64 {
    match s.mode {
        MarketMode::NoDr => {
            ((pd.intercept - s.thermal.c1 - pd.gamma * h) / (2.0 * pd.gamma + s.thermal.c2)).clamp(0.0, s.thermal.r_max)
        }
        MarketMode::Dr => {
            let marginal = |x: f64| thermal_marginal_profit(&s.thermal, pd, &s.sigmoid, x, h);
            local_best_response(marginal, r, 0.0, s.thermal.r_max, 1.0 / s.sigmoid.alpha)
        }
    }
}

fn hydro_best_response(s: &Scenario, pd: &PeriodDemand, r: f64, h: f64, h_cap: f64) -> f64 {
    match s.mode {
        MarketMode::NoDr => ((pd.intercept - pd.gamma * r) / (2.0 * pd.gamma)).clamp(0.0, h_cap),
        MarketMode::Dr => {
            let marginal = |x: f64| {
                let d = inverse_demand(pd, &s.sigmoid, MarketMode::Dr, r + x);
                d.price + d.slope * x
            };
            local_best_response(marginal, h, 0.0, h_cap, 1.0 / s.sigmoid.alpha)
        }
    }
}

fn thermal_marginal_profit(tp: &ThermalParams, pd: &PeriodDemand, sc: &SigmoidConfig, r: f64, h: f64) -> f64 {
    let d = inverse_demand(pd, sc, MarketMode::Dr, r + h);
    d.price + d.slope * r - tp.marginal_cost(r)
}

/// Local maximiser of a one-dimensional profit on `[lo, hi]`, reached by
/// moving uphill from `start`.
///
/// `marginal` is the profit derivative. The first sign change in the ascent
/// direction is bracketed with steps that double up to `max_step`, then
/// located by bisection to floating-point resolution. Where the derivative
/// vanishes on a whole interval, the leftmost point of the bracket wins.
pub fn local_best_response(marginal: impl Fn(f64) -> f64, start: f64, lo: f64, hi: f64, max_step: f64) -> f64 {
    let x0 = start.clamp(lo, hi);
    let g0 = marginal(x0);
    let mut step = (1e-3 * (hi - lo)).max(f64::EPSILON).min(max_step);
    if g0 > 0.0 {
        let mut a = x0;
        loop {
            if a >= hi {
                return hi;
            }
            let b = (a + step).min(hi);
            if marginal(b) <= 0.0 {
                return bisect(&marginal, a, b);
            }
            a = b;
            step = (2.0 * step).min(max_step);
        }
    } else if g0 < 0.0 {
        let mut b = x0;
        loop {
            if b <= lo {
                return lo;
            }
            let a = (b - step).max(lo);
            if marginal(a) > 0.0 {
                return bisect(&marginal, a, b);
            }
            b = a;
            step = (2.0 * step).min(max_step);
        }
    } else {
        x0
    }
}

/// Root of `g` in `[a, b]` given `g(a) > 0 >= g(b)`.
fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    loop {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return b;
        }
        if g(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
}
