use crate::equilibrium::MultiplierMode;
use crate::error::{invalid, Error, Result};
use crate::market::{HydroParams, MarketMode, PeriodDemand, SigmoidConfig, ThermalParams};

/// A complete market instance over a horizon of hourly periods.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub periods: Vec<PeriodDemand>,
    pub sigmoid: SigmoidConfig,
    pub thermal: ThermalParams,
    pub hydro: HydroParams,
    pub mode: MarketMode,
    /// Net demand over the horizon, MWh. In DR mode a missing value is
    /// filled in from a no-DR solve of the same scenario.
    pub d_net: Option<f64>,
    pub multiplier_mode: MultiplierMode,
}

impl Scenario {
    /// Builds and validates a scenario.
    pub fn new(
        periods: Vec<PeriodDemand>,
        sigmoid: SigmoidConfig,
        thermal: ThermalParams,
        hydro: HydroParams,
        mode: MarketMode,
    ) -> Result<Self> {
        let s = Self {
            periods,
            sigmoid,
            thermal,
            hydro,
            mode,
            d_net: None,
            multiplier_mode: MultiplierMode::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods.is_empty() {
            return Err(invalid("horizon", "must be at least 1"));
        }
        for (t, pd) in self.periods.iter().enumerate() {
            pd.validate().map_err(|e| match e {
                Error::InvalidParameter { field, reason } => Error::InvalidParameter {
                    field: format!("{field}[{t}]"),
                    reason,
                },
                other => other,
            })?;
        }
        self.sigmoid.validate()?;
        self.thermal.validate()?;
        self.hydro.validate()?;
        if let Some(d) = self.d_net {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidNetDemand(d));
            }
        }
        if let MultiplierMode::PerPlayer { epsilon } = self.multiplier_mode {
            if !(epsilon.is_finite() && epsilon > 0.0) {
                return Err(invalid("multiplier_mode", "per-player regularization must be > 0"));
            }
        }
        Ok(())
    }

    pub fn with_mode(&self, mode: MarketMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn with_d_net(&self, d_net: Option<f64>) -> Self {
        Self { d_net, ..self.clone() }
    }

    /// Periods with a positive rebate price.
    pub fn rebate_periods(&self) -> impl Iterator<Item = usize> + '_ {
        self.periods
            .iter()
            .enumerate()
            .filter(|(_, pd)| pd.p2 > 0.0)
            .map(|(t, _)| t)
    }
}
