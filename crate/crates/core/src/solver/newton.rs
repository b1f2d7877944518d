//! Semismooth Newton method on the Fischer–Burmeister reformulation.
//!
//! Each pair `(z_i, F_i)` is mapped to a scalar `Φ_i` that vanishes exactly
//! when the pair satisfies its complementarity condition:
//!
//! * lower bound only: `φ(z_i - l_i, F_i)`
//! * upper bound only: `-φ(u_i - z_i, -F_i)`
//! * both bounds: `φ(z_i - l_i, φ(u_i - z_i, -F_i))`
//! * free: `F_i`
//!
//! with `φ(a, b) = √(a² + b²) - a - b`. The merit `½‖Φ‖²` is minimised by
//! Newton steps on an element of the generalized Jacobian of `Φ`, safeguarded
//! by an Armijo line search and a gradient fallback when the Newton direction
//! is unusable.

use nalgebra::{DMatrix, DVector};

use super::{default_start, initial_point, EquilibriumSolution, Restart, SolveStatus, SolverConfig, RESTARTS};
use crate::equilibrium::{check_jacobian, ComplementarityProblem, Coupling, McpSystem};
use crate::error::{Error, Result};
use crate::market::MarketMode;

/// `φ(a, b) = √(a² + b²) - a - b`.
pub fn fischer_burmeister(a: f64, b: f64) -> f64 {
    a.hypot(b) - a - b
}

/// Partial derivatives of `φ`; at the kink `(0, 0)` the element along
/// direction `(1, 1)/√2` is used.
fn fb_partials(a: f64, b: f64) -> (f64, f64) {
    let norm = a.hypot(b);
    if norm == 0.0 {
        let d = std::f64::consts::FRAC_1_SQRT_2 - 1.0;
        (d, d)
    } else {
        (a / norm - 1.0, b / norm - 1.0)
    }
}

/// Per-row value of `Φ` with the coefficients of its generalized gradient
/// `da * e_i + db * ∇F_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeritDetail {
    pub phi: f64,
    pub da: f64,
    pub db: f64,
}

fn reformulate(z: f64, f: f64, lo: f64, hi: f64) -> MeritDetail {
    match (lo.is_finite(), hi.is_finite()) {
        (false, false) => MeritDetail {
            phi: f,
            da: 0.0,
            db: 1.0,
        },
        (true, false) => {
            let (a, b) = (z - lo, f);
            let (da, db) = fb_partials(a, b);
            MeritDetail {
                phi: fischer_burmeister(a, b),
                da,
                db,
            }
        }
        (false, true) => {
            let (a, b) = (hi - z, -f);
            let (da, db) = fb_partials(a, b);
            MeritDetail {
                phi: -fischer_burmeister(a, b),
                da,
                db,
            }
        }
        (true, true) => {
            let (ua, ub) = (hi - z, -f);
            let inner = fischer_burmeister(ua, ub);
            let (ia, ib) = fb_partials(ua, ub);
            let (a, b) = (z - lo, inner);
            let (da, db) = fb_partials(a, b);
            MeritDetail {
                phi: fischer_burmeister(a, b),
                da: da - db * ia,
                db: -db * ib,
            }
        }
    }
}

fn phi_vector(lower: &[f64], upper: &[f64], z: &[f64], f: &[f64]) -> Vec<MeritDetail> {
    (0..z.len())
        .map(|i| reformulate(z[i], f[i], lower[i], upper[i]))
        .collect()
}

fn half_norm_sq(details: &[MeritDetail]) -> f64 {
    0.5 * details.iter().map(|d| d.phi * d.phi).sum::<f64>()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `½‖Φ(z)‖²`; zero exactly at solutions of the complementarity problem.
pub fn fb_merit<P: ComplementarityProblem + ?Sized>(p: &P, z: &[f64]) -> Result<f64> {
    let f = p.residual(z)?;
    Ok(half_norm_sq(&phi_vector(p.lower(), p.upper(), z, &f)))
}

/// Raw result of a Newton run on any complementarity problem.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub z: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub restarts: usize,
    pub merit: f64,
    pub merit_history: Vec<f64>,
}

fn project(z: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &u) in z.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, u);
    }
}

/// Semismooth Newton on a generic complementarity problem, starting from `z0`.
pub fn solve_mcp<P: ComplementarityProblem + ?Sized>(p: &P, cfg: &SolverConfig, z0: &[f64]) -> Result<NewtonOutcome> {
    cfg.validate()?;
    let n = p.dim();
    if z0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: z0.len(),
        });
    }
    let (guard_lo, guard_hi) = p.safeguard();
    let mut z = z0.to_vec();
    project(&mut z, &guard_lo, &guard_hi);

    let f0 = p.residual(&z)?;
    let mut details = phi_vector(p.lower(), p.upper(), &z, &f0);
    let mut merit = half_norm_sq(&details);
    let mut history = vec![merit];
    let armijo = cfg.armijo;

    for iter in 0..cfg.max_iter {
        let phi: Vec<f64> = details.iter().map(|d| d.phi).collect();
        if inf_norm(&phi) <= cfg.tol * (1.0 + inf_norm(&z)) {
            return Ok(NewtonOutcome {
                z,
                status: SolveStatus::Converged,
                iterations: iter,
                restarts: 0,
                merit,
                merit_history: history,
            });
        }

        let jac = p.jacobian(&z)?;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            let d = details[i];
            for j in 0..n {
                h[(i, j)] = d.db * jac[(i, j)];
            }
            h[(i, i)] += d.da;
        }
        let phi_v = DVector::from_vec(phi);
        let grad = h.transpose() * &phi_v;

        let newton_dir = h
            .clone()
            .lu()
            .solve(&(-&phi_v))
            .filter(|d| d.iter().all(|x| x.is_finite()));
        let dir = match newton_dir {
            Some(d) if grad.dot(&d) <= -1e-8 * d.norm().powf(2.1) => d,
            _ => -&grad,
        };
        let slope = grad.dot(&dir);

        let mut step = 1.0;
        let accepted = loop {
            let mut trial: Vec<f64> = z.iter().zip(dir.iter()).map(|(a, b)| a + step * b).collect();
            project(&mut trial, &guard_lo, &guard_hi);
            let f_trial = p.residual(&trial)?;
            let d_trial = phi_vector(p.lower(), p.upper(), &trial, &f_trial);
            let m_trial = half_norm_sq(&d_trial);
            if m_trial.is_finite() && m_trial < merit && m_trial <= merit + armijo.sufficient_decrease * step * slope {
                break Some((trial, d_trial, m_trial));
            }
            step *= armijo.backtrack;
            if step < armijo.min_step {
                break None;
            }
        };
        match accepted {
            Some((zn, dn, mn)) => {
                z = zn;
                details = dn;
                merit = mn;
                history.push(merit);
            }
            None => {
                return Ok(NewtonOutcome {
                    z,
                    status: SolveStatus::LineSearchStall,
                    iterations: iter + 1,
                    restarts: 0,
                    merit,
                    merit_history: history,
                });
            }
        }
    }
    let phi: Vec<f64> = details.iter().map(|d| d.phi).collect();
    let status = if inf_norm(&phi) <= cfg.tol * (1.0 + inf_norm(&z)) {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIter
    };
    Ok(NewtonOutcome {
        z,
        status,
        iterations: cfg.max_iter,
        restarts: 0,
        merit,
        merit_history: history,
    })
}

/// Solves an assembled market system. `z0` defaults to the start point
/// chosen by `cfg.start` (see [`super::StartPoint`]).
///
/// Systems without a balance constraint are split into their independent
/// periods, each solved on its own. A run that fails is retried up to
/// `cfg.restarts` times from the moved start points listed in
/// [`super::RESTARTS`]. The first converged attempt is returned; if none
/// converges, the attempt with the lowest merit is returned with its status.
pub fn solve(m: &McpSystem, cfg: &SolverConfig, z0: Option<&[f64]>) -> Result<EquilibriumSolution> {
    cfg.validate()?;
    let start = match z0 {
        Some(z) => {
            if z.len() != m.layout().len() {
                return Err(Error::DimensionMismatch {
                    expected: m.layout().len(),
                    found: z.len(),
                });
            }
            z.to_vec()
        }
        None => initial_point(m, cfg.start.unwrap_or_else(|| default_start(m))),
    };
    if cfg.fd_check {
        let check = check_jacobian(m, &start)?;
        if check.max_rel_error.is_nan() || check.max_rel_error > 1e-6 {
            return Err(Error::JacobianMismatch {
                max_rel_error: check.max_rel_error,
                row: check.row,
                col: check.col,
            });
        }
    }
    let run = match m.coupling() {
        Coupling::None if m.layout().periods() > 1 => solve_periods(m, cfg, &start)?,
        _ => solve_with_restarts(m, cfg, &start)?,
    };
    Ok(EquilibriumSolution::from_point(m, run))
}

fn solve_with_restarts(m: &McpSystem, cfg: &SolverConfig, start: &[f64]) -> Result<NewtonOutcome> {
    let mut best = solve_mcp(m, cfg, start)?;
    let mut iterations = best.iterations;
    let mut tried = vec![start.to_vec()];
    for (k, &restart) in RESTARTS.iter().take(cfg.restarts).enumerate() {
        if best.status == SolveStatus::Converged {
            break;
        }
        best.restarts = k + 1;
        let z0 = restart_point(m, start, restart);
        if tried.contains(&z0) {
            continue;
        }
        let run = solve_mcp(m, cfg, &z0)?;
        tried.push(z0);
        iterations += run.iterations;
        if run.status == SolveStatus::Converged || run.merit < best.merit {
            best = NewtonOutcome { restarts: k + 1, ..run };
        }
    }
    best.iterations = iterations;
    Ok(best)
}

/// `z` with quantities moved according to `restart` and capacity duals cleared.
fn restart_point(m: &McpSystem, z: &[f64], restart: Restart) -> Vec<f64> {
    let lay = m.layout();
    let sc = m.sigmoid();
    let prod = m.hydro().production;
    let mut out = z.to_vec();
    for t in 0..lay.periods() {
        let q = z[lay.r(t)] + prod.energy(z[lay.w(t)]);
        let factor = match restart {
            Restart::Scale(f) => f,
            Restart::Threshold(widths) if m.mode() == MarketMode::Dr && m.periods()[t].p2 > 0.0 && q > 0.0 => {
                (sc.xi + widths / sc.alpha).max(0.0) / q
            }
            Restart::Threshold(_) => 1.0,
        };
        out[lay.r(t)] *= factor;
        out[lay.w(t)] *= factor;
        out[lay.mu_t(t)] = 0.0;
        out[lay.mu_h(t)] = 0.0;
    }
    out
}

/// Solves each period of an uncoupled system separately and stacks the results.
///
/// The merit history is the sum of the per-period histories, each held at its
/// final value once that period stops, so it decreases strictly as long as any
/// period is still iterating.
fn solve_periods(m: &McpSystem, cfg: &SolverConfig, start: &[f64]) -> Result<NewtonOutcome> {
    let lay = *m.layout();
    let mut z = start.to_vec();
    let mut status = SolveStatus::Converged;
    let mut iterations = 0;
    let mut restarts = 0;
    let mut histories = Vec::with_capacity(lay.periods());
    for t in 0..lay.periods() {
        let block = m.period_block(t)?;
        let bl = *block.layout();
        let pick = |v: &[f64]| vec![v[lay.r(t)], v[lay.w(t)], v[lay.mu_t(t)], v[lay.mu_h(t)]];
        let mut block_start = vec![0.0; bl.len()];
        for (i, v) in [bl.r(0), bl.w(0), bl.mu_t(0), bl.mu_h(0)].into_iter().zip(pick(start)) {
            block_start[i] = v;
        }
        let run = solve_with_restarts(&block, cfg, &block_start)?;
        z[lay.r(t)] = run.z[bl.r(0)];
        z[lay.w(t)] = run.z[bl.w(0)];
        z[lay.mu_t(t)] = run.z[bl.mu_t(0)];
        z[lay.mu_h(t)] = run.z[bl.mu_h(0)];
        if status == SolveStatus::Converged {
            status = run.status;
        }
        iterations = iterations.max(run.iterations);
        restarts += run.restarts;
        histories.push(run.merit_history);
    }
    let len = histories.iter().map(Vec::len).max().unwrap_or(1);
    let merit_history: Vec<f64> = (0..len)
        .map(|k| histories.iter().map(|h| h[k.min(h.len() - 1)]).sum())
        .collect();
    Ok(NewtonOutcome {
        merit: fb_merit(m, &z)?,
        z,
        status,
        iterations,
        restarts,
        merit_history,
    })
}
