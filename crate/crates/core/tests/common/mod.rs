//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use cournot_dr::{
    parse_scenario, HydroParams, MarketMode, PeriodDemand, Production, Scenario, SigmoidConfig, ThermalParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TABLE1: &str = include_str!("../../../../scenarios/table1.scenario");

/// Hour 20 of the shipped scenario, as a zero-based index.
pub const HOUR_20: usize = 19;

pub fn table1(mode: MarketMode) -> Scenario {
    parse_scenario(TABLE1).unwrap().with_mode(mode)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A valid scenario with 1 to 24 periods and parameters spread around the
/// shipped ones. `rebates` controls whether any period carries a rebate.
pub fn random_scenario(rng: &mut impl Rng, mode: MarketMode, rebates: bool) -> Scenario {
    let n = rng.random_range(1..=24);
    let periods = (0..n)
        .map(|_| {
            let p2 = if rebates && rng.random_bool(0.5) {
                rng.random_range(0.0..25.0)
            } else {
                0.0
            };
            PeriodDemand::new(rng.random_range(0.03..0.09), rng.random_range(60.0..150.0), p2).unwrap()
        })
        .collect();
    let production = if rng.random_bool(0.3) {
        Production::Linear {
            efficiency: rng.random_range(0.5..1.5),
        }
    } else {
        Production::Identity
    };
    Scenario::new(
        periods,
        SigmoidConfig::new(rng.random_range(0.05..0.3), rng.random_range(600.0..1400.0)).unwrap(),
        ThermalParams {
            c1: rng.random_range(0.0..40.0),
            c2: rng.random_range(0.0..0.06),
            c3: rng.random_range(0.0..100.0),
            r_max: rng.random_range(200.0..900.0),
        },
        HydroParams {
            c4: rng.random_range(0.0..100.0),
            w_max: rng.random_range(300.0..1500.0),
            production,
        },
        mode,
    )
    .unwrap()
}

/// `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
