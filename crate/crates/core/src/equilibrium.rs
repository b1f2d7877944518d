//! Joint KKT conditions of the thermal and hydro producers, posed as a mixed
//! complementarity problem (MCP).
//!
//! Variables are laid out as `[r_0..r_n, w_0..w_n, muT_0..muT_n, muH_0..muH_n,
//! multipliers]`. Each variable pairs with the residual row of the same index:
//!
//! | variable | bounds     | row                                           |
//! |----------|------------|-----------------------------------------------|
//! | `r_t`    | `[0, inf)` | `-d(thermal profit)/dr_t + muT_t + l_r`       |
//! | `w_t`    | `[0, inf)` | `-d(hydro profit)/dw_t + muH_t + l_h H'(w_t)` |
//! | `muT_t`  | `[0, inf)` | `r_max - r_t`                                 |
//! | `muH_t`  | `[0, inf)` | `w_max - w_t`                                 |
//! | `l`      | free       | `sum_t (r_t + H(w_t)) - d_net`                |
//!
//! Without a balance constraint the periods are fully decoupled.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::market::{inverse_demand, HydroParams, MarketMode, PeriodDemand, SigmoidConfig, ThermalParams};
use crate::scenario::Scenario;

/// Default proximal weight used to pin the two per-player balance multipliers together.
pub const DEFAULT_PER_PLAYER_EPSILON: f64 = 1e-8;

/// How the balance constraint's multiplier enters the two players' conditions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MultiplierMode {
    /// One free multiplier shared by both players and one balance row.
    #[default]
    Shared,
    /// A multiplier per player, each with its own copy of the balance row.
    ///
    /// The duplicated rows are regularized as
    /// `balance + epsilon (l_r - l_h)` and `balance + epsilon (l_h - l_r)`.
    PerPlayer { epsilon: f64 },
}

impl MultiplierMode {
    pub fn per_player() -> Self {
        MultiplierMode::PerPlayer {
            epsilon: DEFAULT_PER_PLAYER_EPSILON,
        }
    }

    pub fn count(&self) -> usize {
        match self {
            MultiplierMode::Shared => 1,
            MultiplierMode::PerPlayer { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MultiplierMode::Shared => "shared",
            MultiplierMode::PerPlayer { .. } => "per_player",
        }
    }
}

/// Inter-period coupling of a system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// Periods are independent games.
    None,
    /// Total delivered energy must equal `d_net`.
    Balance { d_net: f64, multipliers: MultiplierMode },
}

/// The three system families the crate assembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    NoDr,
    /// Sigmoid demand, each period an independent game.
    DrPerPeriod,
    /// Sigmoid demand with the horizon-wide balance constraint.
    DrBalanced,
}

/// Index map of the stacked variable vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    periods: usize,
    multipliers: usize,
}

impl VariableLayout {
    pub fn new(periods: usize, multipliers: usize) -> Self {
        Self { periods, multipliers }
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn multipliers(&self) -> usize {
        self.multipliers
    }

    pub fn len(&self) -> usize {
        4 * self.periods + self.multipliers
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn r(&self, t: usize) -> usize {
        t
    }

    pub fn w(&self, t: usize) -> usize {
        self.periods + t
    }

    pub fn mu_t(&self, t: usize) -> usize {
        2 * self.periods + t
    }

    pub fn mu_h(&self, t: usize) -> usize {
        3 * self.periods + t
    }

    pub fn multiplier(&self, k: usize) -> usize {
        debug_assert!(k < self.multipliers);
        4 * self.periods + k
    }
}

/// A box-constrained complementarity problem `l <= z <= u  ⟂  F(z)`.
pub trait ComplementarityProblem {
    fn dim(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn residual(&self, z: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>>;

    /// Box that solver iterates are projected onto. Defaults to `[-inf, inf]`.
    fn safeguard(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
    }
}

/// Assembled equilibrium conditions for one scenario in one market mode.
#[derive(Debug, Clone)]
pub struct McpSystem {
    layout: VariableLayout,
    lower: Vec<f64>,
    upper: Vec<f64>,
    mode: MarketMode,
    coupling: Coupling,
    periods: Vec<PeriodDemand>,
    sigmoid: SigmoidConfig,
    thermal: ThermalParams,
    hydro: HydroParams,
    fingerprint: u64,
}

/// Relative slack added to the capacities when projecting solver iterates.
pub const SAFEGUARD_SLACK: f64 = 0.1;

/// Conditions of the market without demand response.
pub fn assemble_no_dr(s: &Scenario) -> Result<McpSystem> {
    require_mode(s, MarketMode::NoDr)?;
    McpSystem::build(s, MarketMode::NoDr, Coupling::None)
}

/// Conditions of the market with demand response and the net-demand balance.
pub fn assemble_dr(s: &Scenario, d_net: f64, multipliers: MultiplierMode) -> Result<McpSystem> {
    require_mode(s, MarketMode::Dr)?;
    if !(d_net.is_finite() && d_net > 0.0) {
        return Err(Error::InvalidNetDemand(d_net));
    }
    if let MultiplierMode::PerPlayer { epsilon } = multipliers {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(crate::error::invalid(
                "multiplier_mode",
                "per-player regularization must be > 0",
            ));
        }
    }
    McpSystem::build(s, MarketMode::Dr, Coupling::Balance { d_net, multipliers })
}

/// Sigmoid-demand conditions with every period solved as its own game.
pub fn assemble_dr_per_period(s: &Scenario) -> Result<McpSystem> {
    require_mode(s, MarketMode::Dr)?;
    McpSystem::build(s, MarketMode::Dr, Coupling::None)
}

fn require_mode(s: &Scenario, expected: MarketMode) -> Result<()> {
    s.validate()?;
    if s.mode != expected {
        return Err(Error::ModeMismatch {
            expected: expected.name(),
            found: s.mode.name(),
        });
    }
    Ok(())
}

impl McpSystem {
    fn build(s: &Scenario, mode: MarketMode, coupling: Coupling) -> Result<Self> {
        let n = s.horizon();
        let multipliers = match coupling {
            Coupling::None => 0,
            Coupling::Balance { multipliers, .. } => multipliers.count(),
        };
        let layout = VariableLayout::new(n, multipliers);
        let mut lower = vec![0.0; layout.len()];
        let mut upper = vec![f64::INFINITY; layout.len()];
        for k in 0..multipliers {
            lower[layout.multiplier(k)] = f64::NEG_INFINITY;
            upper[layout.multiplier(k)] = f64::INFINITY;
        }
        let fingerprint = fingerprint(s, mode, coupling);
        Ok(Self {
            layout,
            lower,
            upper,
            mode,
            coupling,
            periods: s.periods.clone(),
            sigmoid: s.sigmoid,
            thermal: s.thermal,
            hydro: s.hydro,
            fingerprint,
        })
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn mode(&self) -> MarketMode {
        self.mode
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn kind(&self) -> SystemKind {
        match (self.mode, self.coupling) {
            (MarketMode::NoDr, _) => SystemKind::NoDr,
            (MarketMode::Dr, Coupling::None) => SystemKind::DrPerPeriod,
            (MarketMode::Dr, Coupling::Balance { .. }) => SystemKind::DrBalanced,
        }
    }

    pub fn d_net(&self) -> Option<f64> {
        match self.coupling {
            Coupling::None => None,
            Coupling::Balance { d_net, .. } => Some(d_net),
        }
    }

    pub fn periods(&self) -> &[PeriodDemand] {
        &self.periods
    }

    pub fn sigmoid(&self) -> &SigmoidConfig {
        &self.sigmoid
    }

    pub fn thermal(&self) -> &ThermalParams {
        &self.thermal
    }

    pub fn hydro(&self) -> &HydroParams {
        &self.hydro
    }

    /// Hash of the scenario data and mode the system was assembled from.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.layout.len() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.len(),
                found: z.len(),
            });
        }
        Ok(())
    }

    /// Multiplier seen by the thermal rows and by the hydro rows.
    fn balance_multipliers(&self, z: &[f64]) -> (f64, f64) {
        match self.coupling {
            Coupling::None => (0.0, 0.0),
            Coupling::Balance {
                multipliers: MultiplierMode::Shared,
                ..
            } => {
                let l = z[self.layout.multiplier(0)];
                (l, l)
            }
            Coupling::Balance {
                multipliers: MultiplierMode::PerPlayer { .. },
                ..
            } => (z[self.layout.multiplier(0)], z[self.layout.multiplier(1)]),
        }
    }

    /// Residual `F(z)`.
    pub fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z)?;
        let lay = &self.layout;
        let n = lay.periods();
        let eta = self.hydro.production.slope();
        let (l_r, l_h) = self.balance_multipliers(z);
        let mut f = vec![0.0; lay.len()];
        let mut total = 0.0;
        for t in 0..n {
            let r = z[lay.r(t)];
            let w = z[lay.w(t)];
            let h = self.hydro.production.energy(w);
            let q = r + h;
            total += q;
            let d = inverse_demand(&self.periods[t], &self.sigmoid, self.mode, q);
            f[lay.r(t)] = -(d.price + d.slope * r) + self.thermal.marginal_cost(r) + z[lay.mu_t(t)] + l_r;
            f[lay.w(t)] = -eta * (d.price + d.slope * h) + z[lay.mu_h(t)] + eta * l_h;
            f[lay.mu_t(t)] = self.thermal.r_max - r;
            f[lay.mu_h(t)] = self.hydro.w_max - w;
        }
        if let Coupling::Balance { d_net, multipliers } = self.coupling {
            let gap = total - d_net;
            match multipliers {
                MultiplierMode::Shared => f[lay.multiplier(0)] = gap,
                MultiplierMode::PerPlayer { epsilon } => {
                    f[lay.multiplier(0)] = gap + epsilon * (l_r - l_h);
                    f[lay.multiplier(1)] = gap + epsilon * (l_h - l_r);
                }
            }
        }
        Ok(f)
    }

    /// Analytic Jacobian `dF/dz` as a dense matrix.
    pub fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(z)?;
        let lay = &self.layout;
        let n = lay.periods();
        let eta = self.hydro.production.slope();
        let mut jac = DMatrix::zeros(lay.len(), lay.len());
        let thermal_l = (lay.multipliers() > 0).then(|| lay.multiplier(0));
        let hydro_l = match self.coupling {
            Coupling::None => None,
            Coupling::Balance {
                multipliers: MultiplierMode::Shared,
                ..
            } => Some(lay.multiplier(0)),
            Coupling::Balance {
                multipliers: MultiplierMode::PerPlayer { .. },
                ..
            } => Some(lay.multiplier(1)),
        };
        for t in 0..n {
            let r = z[lay.r(t)];
            let h = self.hydro.production.energy(z[lay.w(t)]);
            let d = inverse_demand(&self.periods[t], &self.sigmoid, self.mode, r + h);
            let (ir, iw) = (lay.r(t), lay.w(t));

            jac[(ir, ir)] = -2.0 * d.slope - d.curvature * r + self.thermal.c2;
            jac[(ir, iw)] = -eta * (d.slope + d.curvature * r);
            jac[(ir, lay.mu_t(t))] = 1.0;

            jac[(iw, ir)] = -eta * (d.slope + d.curvature * h);
            jac[(iw, iw)] = -eta * eta * (2.0 * d.slope + d.curvature * h);
            jac[(iw, lay.mu_h(t))] = 1.0;

            jac[(lay.mu_t(t), ir)] = -1.0;
            jac[(lay.mu_h(t), iw)] = -1.0;

            if let Some(l) = thermal_l {
                jac[(ir, l)] = 1.0;
            }
            if let Some(l) = hydro_l {
                jac[(iw, l)] = eta;
            }
        }
        if let Coupling::Balance { multipliers, .. } = self.coupling {
            for k in 0..multipliers.count() {
                let row = lay.multiplier(k);
                for t in 0..n {
                    jac[(row, lay.r(t))] = 1.0;
                    jac[(row, lay.w(t))] = eta;
                }
            }
            if let MultiplierMode::PerPlayer { epsilon } = multipliers {
                let (a, b) = (lay.multiplier(0), lay.multiplier(1));
                jac[(a, a)] = epsilon;
                jac[(a, b)] = -epsilon;
                jac[(b, a)] = -epsilon;
                jac[(b, b)] = epsilon;
            }
        }
        Ok(jac)
    }

    /// The single-period system of period `t`, for systems without coupling.
    pub(crate) fn period_block(&self, t: usize) -> Result<McpSystem> {
        debug_assert!(matches!(self.coupling, Coupling::None));
        let s = Scenario {
            periods: vec![self.periods[t]],
            sigmoid: self.sigmoid,
            thermal: self.thermal,
            hydro: self.hydro,
            mode: self.mode,
            d_net: None,
            multiplier_mode: MultiplierMode::default(),
        };
        McpSystem::build(&s, self.mode, Coupling::None)
    }

    /// Projection box for solver iterates: quantities stay within
    /// `[0, (1 + SAFEGUARD_SLACK) * capacity]`, duals nonnegative.
    pub fn safeguard_box(&self) -> (Vec<f64>, Vec<f64>) {
        let lay = &self.layout;
        let mut lo = self.lower.clone();
        let mut hi = self.upper.clone();
        for t in 0..lay.periods() {
            hi[lay.r(t)] = (1.0 + SAFEGUARD_SLACK) * self.thermal.r_max;
            hi[lay.w(t)] = (1.0 + SAFEGUARD_SLACK) * self.hydro.w_max;
            lo[lay.r(t)] = 0.0;
            lo[lay.w(t)] = 0.0;
        }
        (lo, hi)
    }
}

impl ComplementarityProblem for McpSystem {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        McpSystem::residual(self, z)
    }

    fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        McpSystem::jacobian(self, z)
    }

    fn safeguard(&self) -> (Vec<f64>, Vec<f64>) {
        self.safeguard_box()
    }
}

/// Worst entry of a finite-difference Jacobian comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianCheck {
    /// `max |J_ij - FD_ij| / max(1, |J_ij|)`.
    pub max_rel_error: f64,
    pub row: usize,
    pub col: usize,
}

/// Compares the analytic Jacobian with central differences of the residual,
/// using step `1e-6 * max(1, |z_i|)` per column.
pub fn check_jacobian<P: ComplementarityProblem + ?Sized>(p: &P, z: &[f64]) -> Result<JacobianCheck> {
    let analytic = p.jacobian(z)?;
    let mut worst = JacobianCheck {
        max_rel_error: 0.0,
        row: 0,
        col: 0,
    };
    let mut zp = z.to_vec();
    for j in 0..z.len() {
        let h = 1e-6 * z[j].abs().max(1.0);
        zp[j] = z[j] + h;
        let fp = p.residual(&zp)?;
        zp[j] = z[j] - h;
        let fm = p.residual(&zp)?;
        zp[j] = z[j];
        for i in 0..z.len() {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            let a = analytic[(i, j)];
            let err = (a - fd).abs() / a.abs().max(1.0);
            if err > worst.max_rel_error || err.is_nan() {
                worst = JacobianCheck {
                    max_rel_error: err,
                    row: i,
                    col: j,
                };
            }
        }
    }
    Ok(worst)
}

fn fingerprint(s: &Scenario, mode: MarketMode, coupling: Coupling) -> u64 {
    let mut h = DefaultHasher::new();
    mode.hash(&mut h);
    for pd in &s.periods {
        for v in [pd.gamma, pd.intercept, pd.p2] {
            v.to_bits().hash(&mut h);
        }
    }
    let th = &s.thermal;
    let hy = &s.hydro;
    for v in [
        s.sigmoid.alpha,
        s.sigmoid.xi,
        th.c1,
        th.c2,
        th.c3,
        th.r_max,
        hy.c4,
        hy.w_max,
        hy.production.slope(),
    ] {
        v.to_bits().hash(&mut h);
    }
    if let Coupling::Balance { d_net, multipliers } = coupling {
        d_net.to_bits().hash(&mut h);
        multipliers.name().hash(&mut h);
    }
    h.finish()
}
