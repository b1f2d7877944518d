//! Demand-side and supply-side primitives.
//!
//! Consumption in period `t` is priced by one of three inverse demand curves:
//!
//! * the plain linear curve `p(q) = intercept - gamma * q`,
//! * the rebate-shifted line `p(q) - p2`, which applies below the baseline,
//! * a sigmoid blend of the two, `p(q) - p2 * sigma(q)` with
//!   `sigma(q) = 1 / (1 + exp(alpha * (xi - q)))`.
//!
//! All evaluators are total functions on validated parameters. Prices may
//! come out negative for `q` past the choke quantity; callers decide what
//! that means.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Per-period demand curve parameters.
///
/// Stored as the slope and the choke price `gamma * qbar`; the reference
/// quantity `qbar` is derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodDemand {
    /// Slope of the inverse demand curve, $/MWh².
    pub gamma: f64,
    /// Choke price `gamma * qbar`, $/MWh.
    pub intercept: f64,
    /// Rebate price paid per MWh of reduction, $/MWh.
    pub p2: f64,
}

impl PeriodDemand {
    pub fn new(gamma: f64, intercept: f64, p2: f64) -> Result<Self> {
        let pd = Self { gamma, intercept, p2 };
        pd.validate()?;
        Ok(pd)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(invalid("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        if !(self.intercept.is_finite() && self.intercept > 0.0) {
            return Err(invalid("intercept", format!("must be > 0, got {}", self.intercept)));
        }
        if !(self.p2.is_finite() && self.p2 >= 0.0) {
            return Err(invalid("p2", format!("must be >= 0, got {}", self.p2)));
        }
        Ok(())
    }

    /// Reference quantity `qbar = intercept / gamma`, where the plain price hits zero.
    pub fn reference_quantity(&self) -> f64 {
        self.intercept / self.gamma
    }

    /// Same demand with a different rebate price.
    pub fn with_rebate(self, p2: f64) -> Self {
        Self { p2, ..self }
    }
}

/// Smoothness and threshold of the demand-response blend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidConfig {
    /// Smoothness, 1/MWh.
    pub alpha: f64,
    /// Threshold consumption above which the rebate line takes over, MWh.
    pub xi: f64,
}

impl SigmoidConfig {
    pub fn new(alpha: f64, xi: f64) -> Result<Self> {
        let sc = Self { alpha, xi };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(invalid("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return Err(invalid("xi", format!("must be >= 0, got {}", self.xi)));
        }
        Ok(())
    }

    /// Blend weight `sigma(q)`, evaluated without overflow for any finite `q`.
    pub fn weight(&self, q: f64) -> f64 {
        logistic(self.alpha * (q - self.xi))
    }

    /// `sigma(q) * (1 - sigma(q))`, computed without cancellation far from `xi`.
    pub fn weight_spread(&self, q: f64) -> f64 {
        let e = (-(self.alpha * (q - self.xi)).abs()).exp();
        e / ((1.0 + e) * (1.0 + e))
    }
}

/// Logistic function `1 / (1 + exp(-x))`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Quadratic-cost thermal generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalParams {
    /// Linear cost, $/MWh.
    pub c1: f64,
    /// Quadratic cost coefficient, $/MWh²; the cost term is `c2/2 * r²`.
    pub c2: f64,
    /// Fixed cost, $.
    pub c3: f64,
    /// Capacity per period, MWh.
    pub r_max: f64,
}

impl ThermalParams {
    pub fn validate(&self) -> Result<()> {
        check_finite("thermal.c1", self.c1)?;
        check_finite("thermal.c2", self.c2)?;
        check_finite("thermal.c3", self.c3)?;
        check_finite("thermal.r_max", self.r_max)?;
        if self.c1 < 0.0 {
            return Err(invalid("thermal.c1", "must be nonnegative"));
        }
        if self.c2 < 0.0 {
            return Err(invalid("thermal.c2", "must be nonnegative"));
        }
        if self.r_max <= 0.0 {
            return Err(invalid("thermal.r_max", "must be > 0"));
        }
        Ok(())
    }

    pub fn cost(&self, r: f64) -> f64 {
        self.c1 * r + 0.5 * self.c2 * r * r + self.c3
    }

    pub fn marginal_cost(&self, r: f64) -> f64 {
        self.c1 + self.c2 * r
    }
}

/// Conversion of water release into energy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Production {
    /// `H(w) = w`.
    #[default]
    Identity,
    /// `H(w) = efficiency * w`, MWh per acre-ft.
    Linear { efficiency: f64 },
}

impl Production {
    pub fn energy(&self, w: f64) -> f64 {
        w * self.slope()
    }

    /// `dH/dw`, constant for both supported maps.
    pub fn slope(&self) -> f64 {
        match *self {
            Production::Identity => 1.0,
            Production::Linear { efficiency } => efficiency,
        }
    }

    /// Release needed to produce `h` MWh.
    pub fn release_for(&self, h: f64) -> f64 {
        h / self.slope()
    }
}

/// Fixed-cost hydro generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroParams {
    /// Fixed cost, $.
    pub c4: f64,
    /// Release bound per period, acre-ft/h.
    pub w_max: f64,
    #[serde(default)]
    pub production: Production,
}

impl HydroParams {
    pub fn validate(&self) -> Result<()> {
        check_finite("hydro.c4", self.c4)?;
        check_finite("hydro.w_max", self.w_max)?;
        if self.w_max <= 0.0 {
            return Err(invalid("hydro.w_max", "must be > 0"));
        }
        if let Production::Linear { efficiency } = self.production {
            if !(efficiency.is_finite() && efficiency > 0.0) {
                return Err(invalid(
                    "hydro.production",
                    format!("efficiency must be > 0, got {efficiency}"),
                ));
            }
        }
        Ok(())
    }

    /// Largest energy the hydro unit can deliver in one period.
    pub fn energy_cap(&self) -> f64 {
        self.production.energy(self.w_max)
    }
}

/// Household-side rebate terms for one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RebateContext {
    /// Counterfactual consumption, MWh.
    pub baseline: f64,
    /// Rebate price, $/MWh.
    pub p2: f64,
}

/// Which inverse demand curve the generators anticipate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketMode {
    NoDr,
    Dr,
}

impl MarketMode {
    pub fn name(self) -> &'static str {
        match self {
            MarketMode::NoDr => "no_dr",
            MarketMode::Dr => "dr",
        }
    }
}

/// Inverse demand value with its first two derivatives in `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandPoint {
    pub price: f64,
    pub slope: f64,
    pub curvature: f64,
}

/// Plain linear inverse demand.
pub fn price_no_dr(pd: &PeriodDemand, q: f64) -> f64 {
    pd.intercept - pd.gamma * q
}

/// Inverse demand shifted down by the full rebate.
pub fn price_dr_linear(pd: &PeriodDemand, q: f64) -> f64 {
    price_no_dr(pd, q) - pd.p2
}

/// Sigmoid blend of [`price_no_dr`] and [`price_dr_linear`].
pub fn price_dr(pd: &PeriodDemand, sc: &SigmoidConfig, q: f64) -> f64 {
    price_no_dr(pd, q) - pd.p2 * sc.weight(q)
}

/// `d price_dr / dq`; strictly negative.
pub fn price_dr_slope(pd: &PeriodDemand, sc: &SigmoidConfig, q: f64) -> f64 {
    -pd.gamma - pd.p2 * sc.alpha * sc.weight_spread(q)
}

/// `d² price_dr / dq²`.
pub fn price_dr_curvature(pd: &PeriodDemand, sc: &SigmoidConfig, q: f64) -> f64 {
    let s = sc.weight(q);
    -pd.p2 * sc.alpha * sc.alpha * sc.weight_spread(q) * (1.0 - 2.0 * s)
}

/// Price and derivatives of the curve selected by `mode`.
pub fn inverse_demand(pd: &PeriodDemand, sc: &SigmoidConfig, mode: MarketMode, q: f64) -> DemandPoint {
    match mode {
        MarketMode::NoDr => DemandPoint {
            price: price_no_dr(pd, q),
            slope: -pd.gamma,
            curvature: 0.0,
        },
        MarketMode::Dr => DemandPoint {
            price: price_dr(pd, sc, q),
            slope: price_dr_slope(pd, sc, q),
            curvature: price_dr_curvature(pd, sc, q),
        },
    }
}

/// Price at `q` under `mode`.
pub fn price(pd: &PeriodDemand, sc: &SigmoidConfig, mode: MarketMode, q: f64) -> f64 {
    match mode {
        MarketMode::NoDr => price_no_dr(pd, q),
        MarketMode::Dr => price_dr(pd, sc, q),
    }
}

/// Quadratic gross utility expanded around the reference quantity.
///
/// Evaluated in the factored form `q * (intercept + p* - gamma*q/2)`, which is
/// algebraically identical to `-(gamma/2)(q - qbar)² + p*(q - qbar) + k` with
/// `k = qbar * (gamma*qbar/2 + p*)` and vanishes exactly at `q = 0`.
pub fn gross_utility(pd: &PeriodDemand, p_star: f64, q: f64) -> f64 {
    q * (pd.intercept + p_star - 0.5 * pd.gamma * q)
}

/// Marginal utility `-gamma (q - qbar) + p*`.
pub fn marginal_utility(pd: &PeriodDemand, p_star: f64, q: f64) -> f64 {
    pd.intercept - pd.gamma * q + p_star
}

/// The constant `k` that makes the expanded utility vanish at zero.
pub fn utility_constant(pd: &PeriodDemand, p_star: f64) -> f64 {
    let qbar = pd.reference_quantity();
    qbar * (0.5 * pd.gamma * qbar + p_star)
}

/// Consumer payoff: gross utility minus the energy bill `p* q`.
pub fn payoff(pd: &PeriodDemand, p_star: f64, q: f64) -> f64 {
    gross_utility(pd, p_star, q) - p_star * q
}

/// Rebate paid for consuming below the baseline.
pub fn rebate(rc: &RebateContext, q: f64) -> f64 {
    if q < rc.baseline {
        rc.p2 * (rc.baseline - q)
    } else {
        0.0
    }
}

/// Thermal profit in one period with the rival delivering `h` MWh.
pub fn thermal_profit(
    tp: &ThermalParams,
    pd: &PeriodDemand,
    sc: &SigmoidConfig,
    mode: MarketMode,
    r: f64,
    h: f64,
) -> f64 {
    price(pd, sc, mode, r + h) * r - tp.cost(r)
}

/// Hydro profit in one period for release `w` with the rival producing `r` MWh.
pub fn hydro_profit(hp: &HydroParams, pd: &PeriodDemand, sc: &SigmoidConfig, mode: MarketMode, w: f64, r: f64) -> f64 {
    let h = hp.production.energy(w);
    price(pd, sc, mode, r + h) * h - hp.c4
}

fn check_finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite, got {v}")))
    }
}
