mod common;

use common::{close, random_scenario, rng, table1, HOUR_20};
use cournot_dr::market::price;
use cournot_dr::{
    compare_runs, consumer_surplus, incentive_sweep, percent_change, producer_surplus, solve_per_period,
    solve_scenario, surplus_report, Error, MarketMode, PeriodDemand, SigmoidConfig, SolverConfig,
};
use proptest::prelude::*;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rule(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn go(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = rule(fa, flm, fm, a, m);
        let right = rule(fm, frm, fb, m, b);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        go(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + go(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    go(f, a, b, fa, fm, fb, rule(fa, fm, fb, a, b), tol, 50)
}

#[test]
fn surplus_totals_add_up() {
    let s = table1(MarketMode::Dr);
    let sol = solve_scenario(&s, &cfg()).unwrap();
    let rep = surplus_report(&s, &sol).unwrap();
    let sum = |f: fn(&cournot_dr::SurplusRow) -> f64| rep.rows.iter().map(f).sum::<f64>();
    assert!(close(rep.totals.q, sum(|r| r.q), 1e-12));
    assert!(close(rep.totals.cs, sum(|r| r.cs), 1e-12));
    assert!(close(rep.totals.ps_thermal, sum(|r| r.ps_thermal), 1e-12));
    assert!(close(rep.totals.ps_hydro, sum(|r| r.ps_hydro), 1e-12));
    assert!(close(rep.totals.rebate, sum(|r| r.rebate), 1e-12));
    let weighted: f64 = rep.rows.iter().map(|r| r.price * r.q).sum::<f64>() / rep.totals.q;
    assert!(close(rep.totals.price, weighted, 1e-12));
}

#[test]
fn rebates_are_paid_only_in_peak_hours_below_baseline() {
    let s = table1(MarketMode::Dr);
    let sol = solve_scenario(&s, &cfg()).unwrap();
    let rep = surplus_report(&s, &sol).unwrap();
    let no_dr = solve_scenario(&s.with_mode(MarketMode::NoDr), &cfg()).unwrap();
    for (t, row) in rep.rows.iter().enumerate() {
        let cut = no_dr.periods[t].q - row.q;
        let expected = if cut > 0.0 { s.periods[t].p2 * cut } else { 0.0 };
        assert!(close(row.rebate, expected, 1e-9), "hour {t}");
    }
    assert!(rep.rows[HOUR_20].rebate > 0.0);

    let plain = surplus_report(&s.with_mode(MarketMode::NoDr), &no_dr).unwrap();
    assert_eq!(plain.totals.rebate, 0.0);
}

#[test]
fn table1_peak_hour_surplus_shifts() {
    let s = table1(MarketMode::Dr);
    let no_dr = solve_scenario(&s.with_mode(MarketMode::NoDr), &cfg()).unwrap();
    let dr = solve_scenario(&s, &cfg()).unwrap();
    let c = compare_runs(&s, &no_dr, &dr).unwrap();
    assert_eq!(c.peak_periods, vec![18, 19, 20]);
    assert!((c.peak_reduction_pct - 21.5).abs() < 2.0, "{}", c.peak_reduction_pct);
    let (thermal, hydro) = c.producer_reduction_pct(HOUR_20);
    assert!((hydro - 30.4).abs() < 2.0, "{hydro}");
    assert!((thermal - 23.8).abs() < 2.0, "{thermal}");
    // energy only moves between hours
    assert!(c.total_delta_q.abs() < 1e-6);
}

#[test]
fn comparing_a_run_with_itself_gives_zero_deltas() {
    let s = table1(MarketMode::NoDr);
    let sol = solve_scenario(&s, &cfg()).unwrap();
    let c = compare_runs(&s, &sol, &sol).unwrap();
    for r in &c.rows {
        assert_eq!(
            (r.delta_q, r.delta_price, r.reduction_pct, r.price_change_pct),
            (0.0, 0.0, 0.0, 0.0)
        );
    }
    assert_eq!(c.peak_reduction_pct, 0.0);
}

#[test]
fn comparing_different_horizons_fails() {
    let s = table1(MarketMode::NoDr);
    let sol = solve_scenario(&s, &cfg()).unwrap();
    let mut short = sol.clone();
    short.periods.pop();
    assert!(matches!(
        compare_runs(&s, &sol, &short),
        Err(Error::HorizonMismatch { .. })
    ));
    assert!(producer_surplus(&s, &short).is_err());
}

#[test]
fn percent_change_examples() {
    assert_eq!(percent_change(200.0, 150.0), -25.0);
    assert_eq!(percent_change(0.0, 0.0), 0.0);
    assert_eq!(percent_change(4.0, 4.0), 0.0);
    assert!(percent_change(0.0, 1.0).is_infinite());
}

#[test]
fn sweep_is_monotone_and_anchored_at_zero() {
    let s = table1(MarketMode::Dr);
    let pd = s.periods[HOUR_20].with_rebate(0.0);
    let grid: Vec<f64> = (0..=40).map(|i| 0.5 * i as f64).collect();
    let t = incentive_sweep(&pd, &s.sigmoid, &s.thermal, &s.hydro, &grid, &cfg()).unwrap();
    assert_eq!(t.failures(), 0);
    let points: Vec<_> = t.rows.iter().map(|r| r.outcome.clone().unwrap()).collect();
    let first = points[0];
    assert_eq!(
        (
            first.reduction_pct,
            first.price_change_pct,
            first.cs_change_pct,
            first.ps_change_pct
        ),
        (0.0, 0.0, 0.0, 0.0)
    );
    assert!(close(first.q, t.baseline.q, 1e-9));
    for w in points.windows(2) {
        assert!(w[1].q <= w[0].q && w[1].price <= w[0].price);
        assert!(w[1].cs >= w[0].cs && w[1].ps <= w[0].ps);
    }
    let ten = points[20];
    assert!((ten.price - 43.67).abs() < 0.5 && (ten.reduction_pct - 8.6).abs() < 0.5);
    assert!((ten.cs_change_pct - 3.8).abs() < 0.5 && (ten.ps_change_pct + 16.1).abs() < 0.5);
}

#[test]
fn sweep_points_match_single_period_solves() {
    let s = table1(MarketMode::Dr);
    let pd = s.periods[HOUR_20];
    let grid = [0.0, 7.5, 20.0];
    let t = incentive_sweep(&pd, &s.sigmoid, &s.thermal, &s.hydro, &grid, &cfg()).unwrap();
    for (row, p2) in t.rows.iter().zip(grid) {
        let one =
            cournot_dr::Scenario::new(vec![pd.with_rebate(p2)], s.sigmoid, s.thermal, s.hydro, MarketMode::Dr).unwrap();
        let q = solve_per_period(&one, &cfg()).unwrap().periods[0].q;
        assert_eq!(row.outcome.as_ref().unwrap().q, q);
    }
}

#[test]
fn sweep_rejects_negative_rebates() {
    let s = table1(MarketMode::Dr);
    let pd = s.periods[0];
    assert!(incentive_sweep(&pd, &s.sigmoid, &s.thermal, &s.hydro, &[1.0, -1.0], &cfg()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn consumer_surplus_matches_quadrature(
        gamma in 0.01f64..0.1,
        intercept in 50.0f64..200.0,
        p2 in 0.0f64..30.0,
        alpha in 0.01f64..1.0,
        xi in 200.0f64..1800.0,
        q in 0.0f64..2500.0,
        p_star in 0.0f64..80.0,
        dr in any::<bool>(),
    ) {
        let pd = PeriodDemand::new(gamma, intercept, p2).unwrap();
        let sc = SigmoidConfig::new(alpha, xi).unwrap();
        let mode = if dr { MarketMode::Dr } else { MarketMode::NoDr };
        let area = simpson(&|x| price(&pd, &sc, mode, x), 0.0, q, 1e-10);
        let cs = consumer_surplus(&pd, &sc, mode, q, p_star);
        prop_assert!(close(cs + p_star * q, area, 1e-8), "{} vs {}", cs + p_star * q, area);
    }

    #[test]
    fn producer_surplus_is_revenue_minus_cost(seed in any::<u64>(), dr in any::<bool>()) {
        let mode = if dr { MarketMode::Dr } else { MarketMode::NoDr };
        let s = random_scenario(&mut rng(seed), mode, dr);
        let sol = if dr { solve_per_period(&s, &cfg()).unwrap() } else { solve_scenario(&s, &cfg()).unwrap() };
        let ps = producer_surplus(&s, &sol).unwrap();
        for (p, (th, hy)) in sol.periods.iter().zip(ps) {
            let cost = s.thermal.c1 * p.r + 0.5 * s.thermal.c2 * p.r * p.r + s.thermal.c3;
            prop_assert!(close(th, p.price * p.r - cost, 1e-9));
            prop_assert!(close(hy, p.price * p.h - s.hydro.c4, 1e-9));
        }
    }
}
