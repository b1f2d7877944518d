//! Fixtures shared by the solver benchmarks.

use cournot_dr::{parse_scenario, MarketMode, Scenario};

/// The shipped 24-hour scenario in the requested mode.
pub fn table1(mode: MarketMode) -> Scenario {
    parse_scenario(include_str!("../../../scenarios/table1.scenario"))
        .expect("shipped scenario parses")
        .with_mode(mode)
}
