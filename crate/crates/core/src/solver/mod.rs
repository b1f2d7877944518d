//! Equilibrium solvers.
//!
//! [`solve`] runs a semismooth Newton method on the Fischer–Burmeister
//! reformulation of an [`McpSystem`]. [`closed_form_no_dr`] and
//! [`best_response_equilibrium`] compute the same equilibria by independent
//! routes and serve as oracles; [`verify_nash`] scans unilateral deviations.

mod best_response;
mod closed_form;
mod nash;
mod newton;

pub use best_response::{best_response_equilibrium, local_best_response};
pub use closed_form::{closed_form_no_dr, ClosedFormPoint};
pub use nash::{verify_nash, verify_profile, Deviation, DeviationGrid, NashReport, Player};
pub use newton::{fb_merit, fischer_burmeister, solve, solve_mcp, MeritDetail, NewtonOutcome};

use crate::equilibrium::{assemble_dr, assemble_dr_per_period, assemble_no_dr, McpSystem, SystemKind};
use crate::error::{Error, Result};
use crate::market::{price, MarketMode};
use crate::scenario::Scenario;

/// Backtracking parameters of the Armijo line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams {
    pub sufficient_decrease: f64,
    pub backtrack: f64,
    pub min_step: f64,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            sufficient_decrease: 1e-4,
            backtrack: 0.5,
            min_step: 1e-12,
        }
    }
}

/// Where Newton iterations start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartPoint {
    /// Closed-form no-DR equilibrium of every period, duals and multipliers zero.
    NoDr,
    /// Like [`StartPoint::NoDr`], but every rebate period whose no-DR consumption
    /// lies past the knee of the blended demand curve (`xi + KNEE_WIDTHS / alpha`)
    /// is scaled back onto the knee.
    RebateKnee,
    /// All zeros.
    Zero,
}

/// Distance of the rebate knee above the threshold, in units of `1/alpha`.
pub const KNEE_WIDTHS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: ArmijoParams,
    /// Compare the analytic Jacobian against finite differences at the start point.
    pub fd_check: bool,
    /// `None` picks [`StartPoint::RebateKnee`] for balance-constrained DR systems
    /// and [`StartPoint::NoDr`] otherwise.
    pub start: Option<StartPoint>,
    /// Further attempts after a failed run, each from the start point moved
    /// as described by the next entry of [`RESTARTS`].
    pub restarts: usize,
}

/// How a restart moves the start point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Restart {
    /// Every quantity multiplied by the factor.
    Scale(f64),
    /// In rebate periods of DR systems, quantities rescaled so that the
    /// period's consumption sits this many `1/alpha` widths from `xi`;
    /// other periods unchanged.
    Threshold(f64),
}

/// Restart sequence. Threshold moves come first since failures cluster where
/// the start lies across the sigmoid transition from the solution.
pub const RESTARTS: [Restart; 10] = [
    Restart::Threshold(-3.0),
    Restart::Threshold(3.0),
    Restart::Threshold(-6.0),
    Restart::Threshold(6.0),
    Restart::Scale(0.9),
    Restart::Scale(1.1),
    Restart::Threshold(-1.0),
    Restart::Threshold(1.0),
    Restart::Scale(0.7),
    Restart::Scale(0.5),
];

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            armijo: ArmijoParams::default(),
            fd_check: false,
            start: None,
            restarts: RESTARTS.len(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(crate::error::invalid("tol", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(crate::error::invalid("max_iter", "must be >= 1"));
        }
        if self.restarts > RESTARTS.len() {
            return Err(crate::error::invalid(
                "restarts",
                format!("at most {} supported", RESTARTS.len()),
            ));
        }
        let a = &self.armijo;
        if !(a.sufficient_decrease > 0.0 && a.sufficient_decrease < 1.0) {
            return Err(crate::error::invalid("armijo.sufficient_decrease", "must be in (0, 1)"));
        }
        if !(a.backtrack > 0.0 && a.backtrack < 1.0) {
            return Err(crate::error::invalid("armijo.backtrack", "must be in (0, 1)"));
        }
        if !(a.min_step > 0.0 && a.min_step < 1.0) {
            return Err(crate::error::invalid("armijo.min_step", "must be in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LineSearchStall,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::LineSearchStall => "line_search_stall",
        }
    }
}

/// Equilibrium quantities of one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodOutcome {
    /// Thermal output, MWh.
    pub r: f64,
    /// Water release, acre-ft/h.
    pub w: f64,
    /// Hydro output `H(w)`, MWh.
    pub h: f64,
    /// Delivered energy `r + H(w)`, MWh.
    pub q: f64,
    /// Market price, $/MWh.
    pub price: f64,
    pub mu_t: f64,
    pub mu_h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub kind: SystemKind,
    pub mode: MarketMode,
    pub periods: Vec<PeriodOutcome>,
    /// Balance multipliers (empty without a balance constraint).
    pub multipliers: Vec<f64>,
    pub d_net: Option<f64>,
    pub status: SolveStatus,
    /// Newton iterations, summed over restarts; for period-by-period solves the
    /// largest count of any period.
    pub iterations: usize,
    /// Restarts needed, summed over periods for period-by-period solves.
    pub restarts: usize,
    /// Final value of `½‖Φ(z)‖²`.
    pub merit: f64,
    /// Merit after each accepted iterate of the final attempt, starting with
    /// its initial point.
    pub merit_history: Vec<f64>,
    /// Stacked variable vector in [`crate::equilibrium::VariableLayout`] order.
    pub z: Vec<f64>,
}

impl EquilibriumSolution {
    /// Decodes the final point of a run on `system` into per-period outcomes.
    pub fn from_point(system: &McpSystem, run: NewtonOutcome) -> Self {
        let NewtonOutcome {
            z,
            status,
            iterations,
            restarts,
            merit,
            merit_history,
        } = run;
        let lay = *system.layout();
        let periods = (0..lay.periods())
            .map(|t| {
                let r = z[lay.r(t)];
                let w = z[lay.w(t)];
                let h = system.hydro().production.energy(w);
                let q = r + h;
                PeriodOutcome {
                    r,
                    w,
                    h,
                    q,
                    price: price(&system.periods()[t], system.sigmoid(), system.mode(), q),
                    mu_t: z[lay.mu_t(t)],
                    mu_h: z[lay.mu_h(t)],
                }
            })
            .collect();
        let multipliers = (0..lay.multipliers()).map(|k| z[lay.multiplier(k)]).collect();
        Self {
            kind: system.kind(),
            mode: system.mode(),
            periods,
            multipliers,
            d_net: system.d_net(),
            status,
            iterations,
            restarts,
            merit,
            merit_history,
            z,
        }
    }

    pub fn is_converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    pub fn total_q(&self) -> f64 {
        self.periods.iter().map(|p| p.q).sum()
    }

    pub fn thermal_output(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.r).collect()
    }

    pub fn releases(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.w).collect()
    }
}

/// Default start point for `system`.
pub fn default_start(system: &McpSystem) -> StartPoint {
    match system.kind() {
        SystemKind::DrBalanced => StartPoint::RebateKnee,
        SystemKind::NoDr | SystemKind::DrPerPeriod => StartPoint::NoDr,
    }
}

/// Builds the initial vector for `start`.
pub fn initial_point(system: &McpSystem, start: StartPoint) -> Vec<f64> {
    let lay = *system.layout();
    let mut z = vec![0.0; lay.len()];
    if start == StartPoint::Zero {
        return z;
    }
    let sc = system.sigmoid();
    let knee = sc.xi + KNEE_WIDTHS / sc.alpha;
    for (t, pd) in system.periods().iter().enumerate() {
        let cf = closed_form_no_dr(pd, system.thermal(), system.hydro());
        let (mut r, mut h) = (cf.r, cf.h);
        let q = r + h;
        if start == StartPoint::RebateKnee && system.mode() == MarketMode::Dr && pd.p2 > 0.0 && q > knee {
            let scale = knee / q;
            r *= scale;
            h *= scale;
        }
        z[lay.r(t)] = r;
        z[lay.w(t)] = system.hydro().production.release_for(h);
    }
    z
}

/// Solves `s` in its own mode. In DR mode the balance constraint uses
/// `s.d_net`, or the total consumption of a no-DR solve when absent.
pub fn solve_scenario(s: &Scenario, cfg: &SolverConfig) -> Result<EquilibriumSolution> {
    match s.mode {
        MarketMode::NoDr => solve(&assemble_no_dr(s)?, cfg, None),
        MarketMode::Dr => {
            let d_net = match s.d_net {
                Some(d) => d,
                None => net_demand(s, cfg)?,
            };
            solve(&assemble_dr(s, d_net, s.multiplier_mode)?, cfg, None)
        }
    }
}

/// Solves the DR-mode scenario with every period as an independent game.
pub fn solve_per_period(s: &Scenario, cfg: &SolverConfig) -> Result<EquilibriumSolution> {
    solve(&assemble_dr_per_period(&s.with_mode(MarketMode::Dr))?, cfg, None)
}

/// Total consumption of the no-DR equilibrium of `s`.
pub fn net_demand(s: &Scenario, cfg: &SolverConfig) -> Result<f64> {
    let base = solve(&assemble_no_dr(&s.with_mode(MarketMode::NoDr))?, cfg, None)?;
    if !base.is_converged() {
        return Err(Error::NotConverged(base.status));
    }
    Ok(base.total_q())
}
