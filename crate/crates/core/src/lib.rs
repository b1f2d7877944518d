//! Nash–Cournot equilibria of a two-generator (thermal + hydro) electricity
//! market in which consumers respond to a peak-time rebate.
//!
//! The rebate enters through a sigmoid blend of the plain linear inverse
//! demand and its rebate-shifted copy. The joint first-order conditions of
//! both generators, optionally coupled by a horizon-wide net-demand balance,
//! are assembled as a mixed complementarity problem ([`equilibrium`]) and
//! solved by a semismooth Newton method ([`solver`]). [`analysis`] turns
//! solutions into surplus, comparison and sweep tables; [`io`] reads scenario
//! files and writes CSV.
//!
//! ```
//! use cournot_dr::{parse_scenario, solve_scenario, MarketMode, SolverConfig};
//!
//! let text = include_str!("../../../scenarios/table1.scenario");
//! let s = parse_scenario(text).unwrap().with_mode(MarketMode::NoDr);
//! let sol = solve_scenario(&s, &SolverConfig::default()).unwrap();
//! assert!(sol.is_converged());
//! assert!((sol.periods[19].q - 1351.03).abs() < 0.01);
//! ```

pub mod analysis;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod market;
pub mod scenario;
pub mod solver;

pub use analysis::{
    compare_runs, consumer_surplus, incentive_sweep, percent_change, producer_surplus, surplus_report, Comparison,
    ComparisonRow, SurplusReport, SurplusRow, SweepPoint, SweepRow, SweepTable,
};
pub use equilibrium::{
    assemble_dr, assemble_dr_per_period, assemble_no_dr, check_jacobian, ComplementarityProblem, Coupling,
    JacobianCheck, McpSystem, MultiplierMode, SystemKind, VariableLayout,
};
pub use error::{Error, Result};
pub use io::{format_number, load_scenario, parse_scenario, to_toml_string};
pub use market::{HydroParams, MarketMode, PeriodDemand, Production, RebateContext, SigmoidConfig, ThermalParams};
pub use scenario::Scenario;
pub use solver::{
    best_response_equilibrium, closed_form_no_dr, net_demand, solve, solve_per_period, solve_scenario, verify_nash,
    DeviationGrid, EquilibriumSolution, NashReport, PeriodOutcome, SolveStatus, SolverConfig, StartPoint,
};
