//! Scenario files and CSV result tables.
//!
//! Scenarios are TOML documents; see `scenarios/table1.scenario` for a
//! complete example. Result tables are comma-separated with a header row,
//! LF line endings and `#` comment lines carrying run metadata.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{Comparison, SurplusReport, SweepTable};
use crate::equilibrium::{MultiplierMode, DEFAULT_PER_PLAYER_EPSILON};
use crate::error::{Error, Result};
use crate::market::{HydroParams, MarketMode, PeriodDemand, SigmoidConfig, ThermalParams};
use crate::scenario::Scenario;
use crate::solver::EquilibriumSolution;

/// Significant digits printed by default.
pub const DEFAULT_PRECISION: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierName {
    Shared,
    PerPlayer,
}

/// On-disk layout of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub horizon: usize,
    pub mode: MarketMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier_mode: Option<MultiplierName>,
    /// Regularization weight of the per-player multiplier rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_player_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_net: Option<f64>,
    pub alpha: f64,
    pub xi: f64,
    pub gamma: Vec<f64>,
    pub intercept: Vec<f64>,
    pub p2: Vec<f64>,
    pub thermal: ThermalParams,
    pub hydro: HydroParams,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        for (field, v) in [("gamma", &self.gamma), ("intercept", &self.intercept), ("p2", &self.p2)] {
            if v.len() != self.horizon {
                return Err(Error::LengthMismatch {
                    field: field.into(),
                    expected: self.horizon,
                    found: v.len(),
                });
            }
        }
        let multiplier_mode = match (self.multiplier_mode, self.per_player_epsilon) {
            (None | Some(MultiplierName::Shared), None) => MultiplierMode::Shared,
            (Some(MultiplierName::PerPlayer), eps) => MultiplierMode::PerPlayer {
                epsilon: eps.unwrap_or(DEFAULT_PER_PLAYER_EPSILON),
            },
            (_, Some(_)) => {
                return Err(crate::error::invalid(
                    "per_player_epsilon",
                    "only allowed with multiplier_mode = \"per_player\"",
                ))
            }
        };
        let periods = (0..self.horizon)
            .map(|t| PeriodDemand {
                gamma: self.gamma[t],
                intercept: self.intercept[t],
                p2: self.p2[t],
            })
            .collect();
        let s = Scenario {
            periods,
            sigmoid: SigmoidConfig {
                alpha: self.alpha,
                xi: self.xi,
            },
            thermal: self.thermal,
            hydro: self.hydro,
            mode: self.mode,
            d_net: self.d_net,
            multiplier_mode,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let (multiplier_mode, per_player_epsilon) = match s.multiplier_mode {
            MultiplierMode::Shared => (MultiplierName::Shared, None),
            MultiplierMode::PerPlayer { epsilon } => (MultiplierName::PerPlayer, Some(epsilon)),
        };
        Self {
            horizon: s.horizon(),
            mode: s.mode,
            multiplier_mode: Some(multiplier_mode),
            per_player_epsilon,
            d_net: s.d_net,
            alpha: s.sigmoid.alpha,
            xi: s.sigmoid.xi,
            gamma: s.periods.iter().map(|p| p.gamma).collect(),
            intercept: s.periods.iter().map(|p| p.intercept).collect(),
            p2: s.periods.iter().map(|p| p.p2).collect(),
            thermal: s.thermal,
            hydro: s.hydro,
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_scenario()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

/// Canonical TOML dump; [`parse_scenario`] reads it back unchanged.
pub fn to_toml_string(s: &Scenario) -> Result<String> {
    toml::to_string(&ScenarioFile::from_scenario(s)).map_err(|e| Error::Parse(e.to_string()))
}

/// Formats `x` with `digits` significant digits, in the style of C's `%g`.
///
/// Fixed notation is used for decimal exponents in `[-4, digits)`, scientific
/// notation otherwise; trailing zeros are dropped either way.
pub fn format_number(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Header of the per-period result table.
pub const RESULT_COLUMNS: [&str; 12] = [
    "hour",
    "r_mwh",
    "w",
    "h_mwh",
    "q_mwh",
    "price",
    "mu_t",
    "mu_h",
    "cs",
    "ps_thermal",
    "ps_hydro",
    "rebate",
];

struct Csv {
    out: String,
    digits: usize,
}

impl Csv {
    fn new(digits: usize) -> Self {
        Self {
            out: String::new(),
            digits,
        }
    }

    fn comment(&mut self, line: &str) {
        for l in line.lines() {
            let _ = writeln!(self.out, "# {l}");
        }
    }

    fn header(&mut self, cols: &[&str]) {
        self.out.push_str(&cols.join(","));
        self.out.push('\n');
    }

    /// One row: a label followed by numbers; `None` leaves the cell empty.
    fn row(&mut self, label: &str, values: &[Option<f64>]) {
        let mut cells = vec![label.to_string()];
        cells.extend(
            values
                .iter()
                .map(|v| v.map_or(String::new(), |v| format_number(v, self.digits))),
        );
        self.cells(&cells);
    }

    fn cells(&mut self, cells: &[String]) {
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
    }
}

/// Per-period equilibrium table with surplus columns and a TOTAL row.
///
/// Hours are numbered from 1. The TOTAL row sums quantities and money and
/// leaves price and dual columns empty. `meta` lines are emitted as comments
/// after the status line.
pub fn result_csv(sol: &EquilibriumSolution, surplus: &SurplusReport, digits: usize, meta: &[String]) -> String {
    let mut csv = Csv::new(digits);
    csv.comment(&format!(
        "status: {} after {} iterations, merit {:e}",
        sol.status.name(),
        sol.iterations,
        sol.merit
    ));
    csv.comment(&format!("mode: {}", sol.mode.name()));
    if let Some(d) = sol.d_net {
        csv.comment(&format!("d_net: {d} MWh"));
    }
    if !sol.multipliers.is_empty() {
        let l: Vec<String> = sol.multipliers.iter().map(|v| format_number(*v, digits)).collect();
        csv.comment(&format!("balance multipliers: {}", l.join(" ")));
    }
    for m in meta {
        csv.comment(m);
    }
    csv.comment("units: r_mwh h_mwh q_mwh MWh; w acre-ft/h; price mu_t mu_h $/MWh; cs ps_thermal ps_hydro rebate $");
    csv.header(&RESULT_COLUMNS);
    for (t, (p, s)) in sol.periods.iter().zip(&surplus.rows).enumerate() {
        csv.row(
            &(t + 1).to_string(),
            &[
                Some(p.r),
                Some(p.w),
                Some(p.h),
                Some(p.q),
                Some(p.price),
                Some(p.mu_t),
                Some(p.mu_h),
                Some(s.cs),
                Some(s.ps_thermal),
                Some(s.ps_hydro),
                Some(s.rebate),
            ],
        );
    }
    let sum = |f: fn(&crate::solver::PeriodOutcome) -> f64| Some(sol.periods.iter().map(f).sum());
    let tot = &surplus.totals;
    csv.row(
        "TOTAL",
        &[
            sum(|p| p.r),
            sum(|p| p.w),
            sum(|p| p.h),
            sum(|p| p.q),
            None,
            None,
            None,
            Some(tot.cs),
            Some(tot.ps_thermal),
            Some(tot.ps_hydro),
            Some(tot.rebate),
        ],
    );
    csv.out
}

pub const COMPARE_COLUMNS: [&str; 16] = [
    "hour",
    "q_no_dr",
    "q_dr",
    "delta_q",
    "reduction_pct",
    "price_no_dr",
    "price_dr",
    "delta_price",
    "price_change_pct",
    "cs_no_dr",
    "cs_dr",
    "ps_thermal_no_dr",
    "ps_thermal_dr",
    "ps_hydro_no_dr",
    "ps_hydro_dr",
    "rebate",
];

/// Side-by-side no-DR and DR table, one row per hour plus TOTAL.
pub fn compare_csv(c: &Comparison, digits: usize, meta: &[String]) -> String {
    let mut csv = Csv::new(digits);
    for m in meta {
        csv.comment(m);
    }
    let hours: Vec<String> = c.peak_periods.iter().map(|t| (t + 1).to_string()).collect();
    csv.comment(&format!(
        "peak hours {}: consumption cut {}%",
        hours.join(" "),
        format_number(c.peak_reduction_pct, digits)
    ));
    csv.comment(&format!(
        "sum of delta_q: {} MWh",
        format_number(c.total_delta_q, digits)
    ));
    csv.comment("units: q delta_q MWh; price delta_price $/MWh; cs ps rebate $; *_pct %");
    csv.header(&COMPARE_COLUMNS);
    let (a, b) = (&c.surplus_no_dr, &c.surplus_dr);
    for (t, row) in c.rows.iter().enumerate() {
        let (sa, sb) = (&a.rows[t], &b.rows[t]);
        csv.row(
            &(t + 1).to_string(),
            &[
                Some(row.q_no_dr),
                Some(row.q_dr),
                Some(row.delta_q),
                Some(row.reduction_pct),
                Some(row.price_no_dr),
                Some(row.price_dr),
                Some(row.delta_price),
                Some(row.price_change_pct),
                Some(sa.cs),
                Some(sb.cs),
                Some(sa.ps_thermal),
                Some(sb.ps_thermal),
                Some(sa.ps_hydro),
                Some(sb.ps_hydro),
                Some(sb.rebate),
            ],
        );
    }
    let (ta, tb) = (&a.totals, &b.totals);
    csv.row(
        "TOTAL",
        &[
            Some(ta.q),
            Some(tb.q),
            Some(c.total_delta_q),
            Some(-crate::analysis::percent_change(ta.q, tb.q)),
            None,
            None,
            None,
            None,
            Some(ta.cs),
            Some(tb.cs),
            Some(ta.ps_thermal),
            Some(tb.ps_thermal),
            Some(ta.ps_hydro),
            Some(tb.ps_hydro),
            Some(tb.rebate),
        ],
    );
    csv.out
}

pub const SWEEP_COLUMNS: [&str; 13] = [
    "p2",
    "status",
    "r_mwh",
    "h_mwh",
    "q_mwh",
    "price",
    "reduction_pct",
    "price_change_pct",
    "cs",
    "cs_change_pct",
    "ps",
    "ps_change_pct",
    "error",
];

/// Incentive sweep table; failed rows keep their `p2` and carry the error.
pub fn sweep_csv(t: &SweepTable, digits: usize, meta: &[String]) -> String {
    let mut csv = Csv::new(digits);
    for m in meta {
        csv.comment(m);
    }
    let b = &t.baseline;
    csv.comment(&format!(
        "baseline without DR: q {} MWh, price {} $/MWh, cs {} $, ps {} $",
        format_number(b.q, digits),
        format_number(b.price, digits),
        format_number(b.cs, digits),
        format_number(b.ps, digits)
    ));
    csv.comment("units: p2 price $/MWh; r h q MWh; cs ps $; *_pct % relative to the baseline");
    csv.header(&SWEEP_COLUMNS);
    for row in &t.rows {
        let p2 = format_number(row.p2, digits);
        match &row.outcome {
            Ok(p) => {
                let mut cells = vec![p2, "ok".to_string()];
                cells.extend(
                    [
                        p.r,
                        p.h,
                        p.q,
                        p.price,
                        p.reduction_pct,
                        p.price_change_pct,
                        p.cs,
                        p.cs_change_pct,
                        p.ps,
                        p.ps_change_pct,
                    ]
                    .map(|v| format_number(v, digits)),
                );
                cells.push(String::new());
                csv.cells(&cells);
            }
            Err(e) => {
                let mut cells = vec![p2, "failed".to_string()];
                cells.extend(std::iter::repeat_n(String::new(), 10));
                cells.push(e.replace([',', '\n'], ";"));
                csv.cells(&cells);
            }
        }
    }
    csv.out
}
