//! Reproduction targets for the shipped table1 scenario and the single-period
//! incentive sweep. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

mod common;

use std::process::ExitCode;

use common::{random_scenario, rng, table1, HOUR_20};
use cournot_dr::market::{gross_utility, hydro_profit, price_dr, price_dr_linear, price_no_dr, thermal_profit};
use cournot_dr::{
    assemble_dr, assemble_dr_per_period, assemble_no_dr, best_response_equilibrium, check_jacobian, compare_runs,
    incentive_sweep, solve, solve_per_period, solve_scenario, verify_nash, DeviationGrid, EquilibriumSolution,
    MarketMode, McpSystem, MultiplierMode, PeriodDemand, Scenario, SolverConfig, SystemKind,
};
use rand::Rng;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn main() -> ExitCode {
    let cfg = SolverConfig::default();
    let mut rep = Report { failed: 0 };

    let no_dr_s = table1(MarketMode::NoDr);
    let dr_s = table1(MarketMode::Dr);
    let no_dr = solve_scenario(&no_dr_s, &cfg).expect("no-DR solve");
    let dr = solve_scenario(&dr_s, &cfg).expect("DR solve");
    let cmp = compare_runs(&dr_s, &no_dr, &dr).expect("comparison");

    // 1
    let q20 = no_dr.periods[HOUR_20].q;
    let total = no_dr.total_q();
    rep.line(
        1,
        "no-DR hour-20 energy 1351 +- 1, 24-hour total 25476.4 +- 0.5",
        no_dr.is_converged() && within(q20, 1351.0, 1.0) && within(total, 25476.4, 0.5),
        format!(
            "status {}, hour 20 {q20:.3} MWh, total {total:.3} MWh",
            no_dr.status.name()
        ),
    );

    // 2
    let dq20 = dr.periods[HOUR_20].q;
    let cut20 = q20 - dq20;
    rep.line(
        2,
        "DR hour-20 energy 1046 +- 3%, reduction 305 +- 10%, peak cutback 21.5 +- 2 pp",
        dr.is_converged()
            && within(dq20, 1046.0, 0.03 * 1046.0)
            && within(cut20, 305.0, 0.1 * 305.0)
            && within(cmp.peak_reduction_pct, 21.5, 2.0),
        format!(
            "status {}, hour 20 {dq20:.3} MWh, reduction {cut20:.3} MWh, peak cutback {:.3}%",
            dr.status.name(),
            cmp.peak_reduction_pct
        ),
    );

    // 3
    let (thermal_cut, hydro_cut) = cmp.producer_reduction_pct(HOUR_20);
    rep.line(
        3,
        "hour-20 surplus reduction hydro 30.4 +- 2 pp, thermal 23.8 +- 2 pp",
        within(hydro_cut, 30.4, 2.0) && within(thermal_cut, 23.8, 2.0),
        format!("hydro {hydro_cut:.3}%, thermal {thermal_cut:.3}%"),
    );

    // 4
    let pd = PeriodDemand::new(0.054, 120.35, 0.0).unwrap();
    let sweep = incentive_sweep(&pd, &dr_s.sigmoid, &dr_s.thermal, &dr_s.hydro, &[0.0, 10.0], &cfg).expect("sweep");
    match &sweep.rows[1].outcome {
        Ok(p) => rep.line(
            4,
            "sweep at p2 = 10: price 43.67 +- 0.5, reduction 8.6 +- 0.5 pp, CS +3.8 +- 0.5 pp, PS -16.1 +- 1 pp",
            within(p.price, 43.67, 0.5)
                && within(p.reduction_pct, 8.6, 0.5)
                && within(p.cs_change_pct, 3.8, 0.5)
                && within(p.ps_change_pct, -16.1, 1.0),
            format!(
                "price {:.3}, reduction {:.3}%, CS {:+.3}%, PS {:+.3}%",
                p.price, p.reduction_pct, p.cs_change_pct, p.ps_change_pct
            ),
        ),
        Err(e) => rep.line(4, "sweep at p2 = 10", false, e.clone()),
    }

    // 5
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut r = rng(5);
    let mut cases = vec![("table1".to_string(), no_dr_s.clone())];
    for k in 0..20 {
        let mode = if k % 2 == 0 { MarketMode::NoDr } else { MarketMode::Dr };
        cases.push((
            format!("random #{k} ({})", mode.name()),
            random_scenario(&mut r, mode, true),
        ));
    }
    for (name, s) in &cases {
        let newton = match s.mode {
            MarketMode::NoDr => solve_scenario(s, &cfg),
            MarketMode::Dr => solve_per_period(s, &cfg),
        };
        let (newton, oracle) = match (newton, best_response_equilibrium(s, 1e-12)) {
            (Ok(a), Ok(b)) if a.is_converged() => (a, b),
            (a, b) => {
                failures.push(format!(
                    "{name}: newton {:?} / oracle {:?}",
                    a.map(|x| x.status),
                    b.err()
                ));
                continue;
            }
        };
        checked += 1;
        for (a, b) in newton.periods.iter().zip(&oracle.periods) {
            for (x, y) in [(a.r, b.r), (a.w, b.w)] {
                worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(1.0));
            }
        }
    }
    rep.line(
        5,
        "Newton vs best-response oracle within 1e-4 relative (table1 + 20 random)",
        failures.is_empty() && worst <= 1e-4,
        format!("{checked} scenarios, worst relative gap {worst:.2e}; failures: {failures:?}"),
    );

    // 6
    let mut r = rng(6);
    let d_net = dr.d_net.expect("balanced DR solution records d_net");
    let systems: Vec<(&str, McpSystem)> = vec![
        ("no_dr", assemble_no_dr(&no_dr_s).unwrap()),
        ("dr_per_period", assemble_dr_per_period(&dr_s).unwrap()),
        ("dr_shared", assemble_dr(&dr_s, d_net, MultiplierMode::Shared).unwrap()),
        (
            "dr_per_player",
            assemble_dr(&dr_s, d_net, MultiplierMode::per_player()).unwrap(),
        ),
    ];
    let mut summary = Vec::new();
    let mut ok = true;
    for (name, sys) in &systems {
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let z = random_point(&mut r, sys);
            worst = worst.max(check_jacobian(sys, &z).unwrap().max_rel_error);
        }
        ok &= worst <= 1e-6;
        summary.push(format!("{name} {worst:.1e}"));
    }
    rep.line(
        6,
        "analytic Jacobian vs central differences <= 1e-6 at 20 random points per mode",
        ok,
        summary.join(", "),
    );

    // 7
    let mut r = rng(7);
    let mut summary = Vec::new();
    let mut ok = true;
    for (name, sys) in &systems {
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let z = random_point(&mut r, sys);
            worst = worst.max(profit_gradient_gap(sys, &z));
        }
        ok &= worst <= 1e-6;
        summary.push(format!("{name} {worst:.1e}"));
    }
    rep.line(
        7,
        "stationarity rows vs finite-difference profit gradients <= 1e-6",
        ok,
        summary.join(", "),
    );

    // 8
    let grid = DeviationGrid::default();
    let mut details = Vec::new();
    let mut ok = true;
    for (name, s, sol) in [("no-DR", &no_dr_s, &no_dr), ("DR", &dr_s, &dr)] {
        match verify_nash(s, sol, &grid) {
            Ok(nash) => {
                ok &= nash.is_nash();
                let worst = nash.best.map_or("none".to_string(), |d| {
                    let offset = d
                        .counterpart
                        .map_or(String::new(), |j| format!(", offset at hour {}", j + 1));
                    format!(
                        "{} {:+} MWh at hour {}{offset}, gains {:.4} $",
                        d.player.name(),
                        d.delta,
                        d.period + 1,
                        d.gain
                    )
                });
                details.push(format!(
                    "{name}: {} deviations, {} improving (best: {worst})",
                    nash.checked,
                    nash.violations.len()
                ));
            }
            Err(e) => {
                ok = false;
                details.push(format!("{name}: {e}"));
            }
        }
    }
    rep.line(
        8,
        "no improving unilateral deviation on +-{1,10,50} MWh, both table1 solutions",
        ok,
        details.join("; "),
    );

    // 9
    let zero_rebate = Scenario {
        periods: dr_s.periods.iter().map(|p| p.with_rebate(0.0)).collect(),
        ..dr_s.clone()
    };
    let collapsed = solve_per_period(&zero_rebate, &cfg).unwrap();
    let plain = solve(
        &assemble_no_dr(&zero_rebate.with_mode(MarketMode::NoDr)).unwrap(),
        &cfg,
        None,
    )
    .unwrap();
    let collapse_gap = max_primal_gap(&collapsed, &plain);
    let sc = dr_s.sigmoid;
    let midpoint_exact = dr_s
        .periods
        .iter()
        .all(|pd| price_dr(pd, &sc, sc.xi) == 0.5 * (price_no_dr(pd, sc.xi) + price_dr_linear(pd, sc.xi)));
    let mut r = rng(9);
    let utility_zero = (0..1000).all(|_| {
        let pd = PeriodDemand::new(r.random_range(1e-3..1.0), r.random_range(1.0..500.0), 0.0).unwrap();
        gross_utility(&pd, r.random_range(-100.0..200.0), 0.0) == 0.0
    });
    rep.line(
        9,
        "zero-rebate collapse <= 1e-8, sigmoid midpoint at xi exact, G(0) = 0",
        collapsed.is_converged() && collapse_gap <= 1e-8 && midpoint_exact && utility_zero,
        format!(
            "collapse gap {collapse_gap:.1e}, midpoint exact {midpoint_exact}, G(0) = 0 on 1000 draws {utility_zero}"
        ),
    );

    // 10
    rep.line(
        10,
        "sum of energy shifts between paired runs 0 +- 0.5 MWh",
        dr.kind == SystemKind::DrBalanced && within(cmp.total_delta_q, 0.0, 0.5),
        format!("sum delta q {:.3e} MWh (d_net {d_net:.3} MWh)", cmp.total_delta_q),
    );

    println!("{} of 10 criteria passed", 10 - rep.failed);
    if rep.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// Quantities within capacity, duals in `[0, 50]`, multipliers in `[-20, 20]`.
fn random_point(r: &mut impl Rng, sys: &McpSystem) -> Vec<f64> {
    let lay = *sys.layout();
    let mut z = vec![0.0; lay.len()];
    for t in 0..lay.periods() {
        z[lay.r(t)] = r.random_range(0.0..sys.thermal().r_max);
        z[lay.w(t)] = r.random_range(0.0..sys.hydro().w_max);
        z[lay.mu_t(t)] = r.random_range(0.0..50.0);
        z[lay.mu_h(t)] = r.random_range(0.0..50.0);
    }
    for k in 0..lay.multipliers() {
        z[lay.multiplier(k)] = r.random_range(-20.0..20.0);
    }
    z
}

/// Largest relative gap between the assembled stationarity rows and minus the
/// central-difference gradient of each player's total profit, plus its dual
/// and balance multiplier.
fn profit_gradient_gap(sys: &McpSystem, z: &[f64]) -> f64 {
    let lay = *sys.layout();
    let f = sys.residual(z).unwrap();
    let (pds, sc, tp, hp, mode) = (sys.periods(), sys.sigmoid(), sys.thermal(), sys.hydro(), sys.mode());
    let eta = hp.production.slope();
    let (l_r, l_h) = match lay.multipliers() {
        0 => (0.0, 0.0),
        1 => (z[lay.multiplier(0)], z[lay.multiplier(0)]),
        _ => (z[lay.multiplier(0)], z[lay.multiplier(1)]),
    };
    let step = 1e-4;
    let mut worst = 0.0f64;
    for t in 0..lay.periods() {
        let (r, w) = (z[lay.r(t)], z[lay.w(t)]);
        let h = hp.production.energy(w);
        let thermal = |x: f64| thermal_profit(tp, &pds[t], sc, mode, x, h);
        let hydro = |x: f64| hydro_profit(hp, &pds[t], sc, mode, x, r);
        let d_thermal = (thermal(r + step) - thermal(r - step)) / (2.0 * step);
        let d_hydro = (hydro(w + step) - hydro(w - step)) / (2.0 * step);
        let expect_r = -d_thermal + z[lay.mu_t(t)] + l_r;
        let expect_w = -d_hydro + z[lay.mu_h(t)] + eta * l_h;
        for (row, expect) in [(f[lay.r(t)], expect_r), (f[lay.w(t)], expect_w)] {
            worst = worst.max((row - expect).abs() / row.abs().max(1.0));
        }
    }
    worst
}

fn max_primal_gap(a: &EquilibriumSolution, b: &EquilibriumSolution) -> f64 {
    a.periods
        .iter()
        .zip(&b.periods)
        .flat_map(|(x, y)| [(x.r - y.r).abs(), (x.w - y.w).abs()])
        .fold(0.0, f64::max)
}
