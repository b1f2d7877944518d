//! Surplus accounting, no-DR vs DR comparisons and the incentive sweep.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::{
    hydro_profit, rebate, softplus, thermal_profit, HydroParams, MarketMode, PeriodDemand, RebateContext,
    SigmoidConfig, ThermalParams,
};
use crate::scenario::Scenario;
use crate::solver::{closed_form_no_dr, solve_per_period, EquilibriumSolution, SolverConfig};

/// Area under the inverse demand curve up to `q`, minus the bill `p_star * q`.
///
/// The sigmoid curve integrates in closed form through the softplus
/// function: the rebate term contributes `(p2/alpha) * [softplus(alpha(q - xi))
/// - softplus(-alpha xi)]`.
pub fn consumer_surplus(pd: &PeriodDemand, sc: &SigmoidConfig, mode: MarketMode, q: f64, p_star: f64) -> f64 {
    let linear = pd.intercept * q - 0.5 * pd.gamma * q * q;
    let area = match mode {
        MarketMode::NoDr => linear,
        MarketMode::Dr => {
            let shift = pd.p2 / sc.alpha * (softplus(sc.alpha * (q - sc.xi)) - softplus(-sc.alpha * sc.xi));
            linear - shift
        }
    };
    area - p_star * q
}

/// Thermal and hydro profit of every period, $.
pub fn producer_surplus(s: &Scenario, sol: &EquilibriumSolution) -> Result<Vec<(f64, f64)>> {
    check_horizon(s.horizon(), sol.horizon())?;
    Ok(s.periods
        .iter()
        .zip(&sol.periods)
        .map(|(pd, p)| {
            (
                thermal_profit(&s.thermal, pd, &s.sigmoid, sol.mode, p.r, p.h),
                hydro_profit(&s.hydro, pd, &s.sigmoid, sol.mode, p.w, p.r),
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SurplusRow {
    pub q: f64,
    pub price: f64,
    pub cs: f64,
    pub ps_thermal: f64,
    pub ps_hydro: f64,
    pub rebate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurplusReport {
    pub rows: Vec<SurplusRow>,
    /// Column sums; `price` holds the consumption-weighted mean price.
    pub totals: SurplusRow,
}

/// Per-period surplus and rebate payouts of `sol`.
///
/// Rebates are paid against a baseline equal to the no-DR equilibrium
/// consumption of the same period, and are zero for no-DR solutions.
pub fn surplus_report(s: &Scenario, sol: &EquilibriumSolution) -> Result<SurplusReport> {
    let ps = producer_surplus(s, sol)?;
    let rows: Vec<SurplusRow> = s
        .periods
        .iter()
        .zip(&sol.periods)
        .zip(ps)
        .map(|((pd, p), (ps_thermal, ps_hydro))| {
            let paid = match sol.mode {
                MarketMode::NoDr => 0.0,
                MarketMode::Dr => {
                    let baseline = closed_form_no_dr(pd, &s.thermal, &s.hydro).q;
                    rebate(&RebateContext { baseline, p2: pd.p2 }, p.q)
                }
            };
            SurplusRow {
                q: p.q,
                price: p.price,
                cs: consumer_surplus(pd, &s.sigmoid, sol.mode, p.q, p.price),
                ps_thermal,
                ps_hydro,
                rebate: paid,
            }
        })
        .collect();
    let mut totals = rows.iter().fold(SurplusRow::default(), |acc, r| SurplusRow {
        q: acc.q + r.q,
        price: acc.price + r.price * r.q,
        cs: acc.cs + r.cs,
        ps_thermal: acc.ps_thermal + r.ps_thermal,
        ps_hydro: acc.ps_hydro + r.ps_hydro,
        rebate: acc.rebate + r.rebate,
    });
    totals.price = if totals.q != 0.0 { totals.price / totals.q } else { 0.0 };
    Ok(SurplusReport { rows, totals })
}

/// `100 * (after - before) / before`; zero when both vanish.
pub fn percent_change(before: f64, after: f64) -> f64 {
    if before == after {
        0.0
    } else {
        100.0 * (after - before) / before
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub q_no_dr: f64,
    pub q_dr: f64,
    /// `q_dr - q_no_dr`, MWh.
    pub delta_q: f64,
    pub price_no_dr: f64,
    pub price_dr: f64,
    pub delta_price: f64,
    /// Consumption cut relative to no-DR, %.
    pub reduction_pct: f64,
    pub price_change_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Periods with a positive rebate price.
    pub peak_periods: Vec<usize>,
    /// Aggregate consumption cut over the peak periods, %.
    pub peak_reduction_pct: f64,
    /// Sum of `delta_q`; zero when both runs deliver the same net demand.
    pub total_delta_q: f64,
    pub surplus_no_dr: SurplusReport,
    pub surplus_dr: SurplusReport,
}

impl Comparison {
    /// Percent reduction of thermal and hydro profit in period `t`.
    pub fn producer_reduction_pct(&self, t: usize) -> (f64, f64) {
        let (a, b) = (&self.surplus_no_dr.rows[t], &self.surplus_dr.rows[t]);
        (
            -percent_change(a.ps_thermal, b.ps_thermal),
            -percent_change(a.ps_hydro, b.ps_hydro),
        )
    }
}

/// Period-by-period differences between a no-DR and a DR solution of `s`.
pub fn compare_runs(s: &Scenario, no_dr: &EquilibriumSolution, dr: &EquilibriumSolution) -> Result<Comparison> {
    check_horizon(no_dr.horizon(), dr.horizon())?;
    check_horizon(s.horizon(), no_dr.horizon())?;
    let rows: Vec<ComparisonRow> = no_dr
        .periods
        .iter()
        .zip(&dr.periods)
        .map(|(a, b)| ComparisonRow {
            q_no_dr: a.q,
            q_dr: b.q,
            delta_q: b.q - a.q,
            price_no_dr: a.price,
            price_dr: b.price,
            delta_price: b.price - a.price,
            reduction_pct: -percent_change(a.q, b.q),
            price_change_pct: percent_change(a.price, b.price),
        })
        .collect();
    let peak_periods: Vec<usize> = s.rebate_periods().collect();
    let peak_before: f64 = peak_periods.iter().map(|&t| rows[t].q_no_dr).sum();
    let peak_after: f64 = peak_periods.iter().map(|&t| rows[t].q_dr).sum();
    Ok(Comparison {
        peak_reduction_pct: -percent_change(peak_before, peak_after),
        total_delta_q: rows.iter().map(|r| r.delta_q).sum(),
        rows,
        peak_periods,
        surplus_no_dr: surplus_report(&s.with_mode(no_dr.mode), no_dr)?,
        surplus_dr: surplus_report(&s.with_mode(dr.mode), dr)?,
    })
}

fn check_horizon(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::HorizonMismatch { left, right });
    }
    Ok(())
}

/// Equilibrium of the single-period game at one rebate price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub r: f64,
    pub h: f64,
    pub q: f64,
    pub price: f64,
    pub cs: f64,
    /// Thermal plus hydro profit, $.
    pub ps: f64,
    /// Consumption cut relative to the baseline, %.
    pub reduction_pct: f64,
    pub price_change_pct: f64,
    pub cs_change_pct: f64,
    pub ps_change_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p2: f64,
    /// The equilibrium, or why none was found.
    pub outcome: std::result::Result<SweepPoint, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// No-DR equilibrium the percentages are measured against.
    pub baseline: SweepPoint,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Solves the single-period DR game for every rebate price in `p2_grid`.
///
/// No balance constraint applies. Grid points are solved in parallel and
/// returned in grid order; a point that fails to converge is recorded in its
/// row without affecting the others.
pub fn incentive_sweep(
    pd: &PeriodDemand,
    sc: &SigmoidConfig,
    tp: &ThermalParams,
    hp: &HydroParams,
    p2_grid: &[f64],
    cfg: &SolverConfig,
) -> Result<SweepTable> {
    let base = pd.with_rebate(0.0);
    let scenario = Scenario::new(vec![base], *sc, *tp, *hp, MarketMode::Dr)?;
    cfg.validate()?;
    for &p2 in p2_grid {
        base.with_rebate(p2)
            .validate()
            .map_err(|_| crate::error::invalid("p2", format!("must be >= 0, got {p2}")))?;
    }

    let cf = closed_form_no_dr(&base, tp, hp);
    let ps0 = thermal_profit(tp, &base, sc, MarketMode::NoDr, cf.r, cf.h)
        + hydro_profit(hp, &base, sc, MarketMode::NoDr, cf.w, cf.r);
    let cs0 = consumer_surplus(&base, sc, MarketMode::NoDr, cf.q, cf.price);
    let point = |r: f64, h: f64, w: f64, pd: &PeriodDemand, mode: MarketMode| {
        let q = r + h;
        let price = crate::market::price(pd, sc, mode, q);
        let cs = consumer_surplus(pd, sc, mode, q, price);
        let ps = thermal_profit(tp, pd, sc, mode, r, h) + hydro_profit(hp, pd, sc, mode, w, r);
        SweepPoint {
            r,
            h,
            q,
            price,
            cs,
            ps,
            reduction_pct: -percent_change(cf.q, q),
            price_change_pct: percent_change(cf.price, price),
            cs_change_pct: percent_change(cs0, cs),
            ps_change_pct: percent_change(ps0, ps),
        }
    };
    let baseline = point(cf.r, cf.h, cf.w, &base, MarketMode::NoDr);
    debug_assert_eq!(baseline.ps, ps0);

    let rows = p2_grid
        .par_iter()
        .map(|&p2| {
            let mut s = scenario.clone();
            s.periods[0] = base.with_rebate(p2);
            let outcome = match solve_per_period(&s, cfg) {
                Ok(sol) if sol.is_converged() => {
                    let p = sol.periods[0];
                    Ok(point(p.r, p.h, p.w, &s.periods[0], MarketMode::Dr))
                }
                Ok(sol) => Err(format!("solver stopped with status {}", sol.status.name())),
                Err(e) => Err(e.to_string()),
            };
            SweepRow { p2, outcome }
        })
        .collect();
    Ok(SweepTable { baseline, rows })
}
