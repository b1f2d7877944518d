use super::EquilibriumSolution;
use crate::equilibrium::SystemKind;
use crate::error::{Error, Result};
use crate::market::{hydro_profit, thermal_profit, MarketMode};
use crate::scenario::Scenario;

/// Deviation sizes in MWh, applied with both signs.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationGrid {
    pub steps: Vec<f64>,
}

impl Default for DeviationGrid {
    fn default() -> Self {
        Self {
            steps: vec![1.0, 10.0, 50.0],
        }
    }
}

impl DeviationGrid {
    pub fn new(steps: Vec<f64>) -> Result<Self> {
        if steps.is_empty() || steps.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(crate::error::invalid("grid", "steps must be positive and finite"));
        }
        Ok(Self { steps })
    }

    fn signed(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().flat_map(|&d| [d, -d])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Player {
    Thermal,
    Hydro,
}

impl Player {
    pub fn name(self) -> &'static str {
        match self {
            Player::Thermal => "thermal",
            Player::Hydro => "hydro",
        }
    }
}

/// A unilateral change of one player's energy output.
///
/// `delta` MWh is added at `period`; with a `counterpart` the same amount is
/// taken away there, leaving the player's total unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub player: Player,
    pub period: usize,
    pub counterpart: Option<usize>,
    pub delta: f64,
    /// Profit after deviating minus profit before, $.
    pub gain: f64,
    /// Total profit over the horizon before deviating, $.
    pub base_profit: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NashReport {
    /// Number of feasible deviations evaluated.
    pub checked: usize,
    /// Most profitable improving deviation per player and period.
    pub violations: Vec<Deviation>,
    /// Most profitable improving deviation overall.
    pub best: Option<Deviation>,
}

impl NashReport {
    pub fn is_nash(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scans unilateral deviations from a converged solution of `s`.
///
/// Solutions without a balance constraint are probed period by period.
/// Balance-constrained solutions are probed with transfers between every
/// ordered pair of periods, so a deviation never changes the player's total
/// output. A deviation counts when it raises the player's total profit by
/// more than `1e-6 * (1 + |profit|)`.
pub fn verify_nash(s: &Scenario, sol: &EquilibriumSolution, grid: &DeviationGrid) -> Result<NashReport> {
    if !sol.is_converged() {
        return Err(Error::NotConverged(sol.status));
    }
    verify_profile(s, sol.kind, sol.mode, &sol.thermal_output(), &sol.releases(), grid)
}

/// [`verify_nash`] for an arbitrary strategy profile.
pub fn verify_profile(
    s: &Scenario,
    kind: SystemKind,
    mode: MarketMode,
    r: &[f64],
    w: &[f64],
    grid: &DeviationGrid,
) -> Result<NashReport> {
    let n = s.horizon();
    for (field, v) in [("r", r), ("w", w)] {
        if v.len() != n {
            return Err(Error::LengthMismatch {
                field: field.into(),
                expected: n,
                found: v.len(),
            });
        }
    }
    let prod = s.hydro.production;
    let h: Vec<f64> = w.iter().map(|&x| prod.energy(x)).collect();
    let h_cap = s.hydro.energy_cap();

    // per-period profit of `player` when its own energy output is `x`
    let profit = |player: Player, t: usize, x: f64| -> f64 {
        let pd = &s.periods[t];
        match player {
            Player::Thermal => thermal_profit(&s.thermal, pd, &s.sigmoid, mode, x, h[t]),
            Player::Hydro => hydro_profit(&s.hydro, pd, &s.sigmoid, mode, prod.release_for(x), r[t]),
        }
    };

    let mut report = NashReport::default();
    for (player, own, cap) in [(Player::Thermal, r, s.thermal.r_max), (Player::Hydro, &h[..], h_cap)] {
        let base: Vec<f64> = (0..n).map(|t| profit(player, t, own[t])).collect();
        let total: f64 = base.iter().sum();
        let threshold = 1e-6 * (1.0 + total.abs());
        let feasible = |x: f64| (0.0..=cap).contains(&x);

        for i in 0..n {
            let mut worst: Option<Deviation> = None;
            let mut consider = |counterpart: Option<usize>, delta: f64, gain: f64| {
                report.checked += 1;
                if gain > threshold && worst.is_none_or(|d| gain > d.gain) {
                    worst = Some(Deviation {
                        player,
                        period: i,
                        counterpart,
                        delta,
                        gain,
                        base_profit: total,
                    });
                }
            };
            for delta in grid.signed() {
                let xi = own[i] + delta;
                if !feasible(xi) {
                    continue;
                }
                match kind {
                    SystemKind::NoDr | SystemKind::DrPerPeriod => {
                        consider(None, delta, profit(player, i, xi) - base[i]);
                    }
                    SystemKind::DrBalanced => {
                        for j in (0..n).filter(|&j| j != i) {
                            let xj = own[j] - delta;
                            if !feasible(xj) {
                                continue;
                            }
                            let gain = profit(player, i, xi) - base[i] + profit(player, j, xj) - base[j];
                            consider(Some(j), delta, gain);
                        }
                    }
                }
            }
            if let Some(d) = worst {
                if report.best.is_none_or(|b| d.gain > b.gain) {
                    report.best = Some(d);
                }
                report.violations.push(d);
            }
        }
    }
    Ok(report)
}
