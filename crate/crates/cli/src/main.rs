use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::builder::TypedValueParser;
use clap::{Parser, Subcommand, ValueEnum};
use cournot_dr::io::{compare_csv, result_csv, sweep_csv, DEFAULT_PRECISION};
use cournot_dr::market::{price_dr, price_dr_linear, price_no_dr};
use cournot_dr::{
    assemble_dr, assemble_no_dr, check_jacobian, compare_runs, format_number, incentive_sweep, load_scenario,
    net_demand, parse_scenario, solve, surplus_report, verify_nash, DeviationGrid, EquilibriumSolution, MarketMode,
    McpSystem, MultiplierMode, PeriodDemand, Scenario, SigmoidConfig, SolverConfig, StartPoint,
};

/// Producer data used by `sweep` when no scenario is given.
const TABLE1: &str = include_str!("../../../scenarios/table1.scenario");

/// Environment variable overriding the worker count of parallel sweeps.
const THREADS_VAR: &str = "COURNOT_DR_THREADS";

/// Largest acceptable relative error of the analytic Jacobian under `--check`.
const JACOBIAN_TOL: f64 = 1e-6;

/// Relative gap above which shared and per-player multiplier runs are reported as different.
const MULTIPLIER_GAP: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "cournot-dr",
    version,
    allow_negative_numbers = true,
    about = "Cournot equilibria of a thermal + hydro market with demand response"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write the per-hour result table.
    Solve(SolveArgs),
    /// Solve a scenario with and without demand response and write the differences.
    Compare(CompareArgs),
    /// Single-period equilibria across a range of rebate prices.
    Sweep(SweepArgs),
    /// Inverse demand curves of one period over a range of quantities.
    Curve(CurveArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "no_dr")]
    NoDr,
    Dr,
}

impl From<ModeArg> for MarketMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::NoDr => MarketMode::NoDr,
            ModeArg::Dr => MarketMode::Dr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MultiplierArg {
    Shared,
    #[value(name = "per_player")]
    PerPlayer,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartArg {
    #[value(name = "no_dr")]
    NoDr,
    #[value(name = "rebate_knee")]
    RebateKnee,
    Zero,
}

impl From<StartArg> for StartPoint {
    fn from(s: StartArg) -> Self {
        match s {
            StartArg::NoDr => StartPoint::NoDr,
            StartArg::RebateKnee => StartPoint::RebateKnee,
            StartArg::Zero => StartPoint::Zero,
        }
    }
}

#[derive(clap::Args)]
struct Output {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Significant digits of every number written.
    #[arg(long, default_value_t = DEFAULT_PRECISION, value_parser = clap::value_parser!(u16).range(1..=17).map(usize::from))]
    precision: usize,
}

#[derive(clap::Args)]
struct SolveArgs {
    scenario: PathBuf,
    /// Market mode; defaults to the scenario's own.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Balance multiplier layout; defaults to the scenario's own.
    #[arg(long, value_enum)]
    multiplier: Option<MultiplierArg>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Newton start point; by default chosen from the system.
    #[arg(long, value_enum)]
    start: Option<StartArg>,
    /// Also verify the Jacobian and unilateral deviations at the solution.
    #[arg(long)]
    check: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(clap::Args)]
struct CompareArgs {
    scenario: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 0.054)]
    gamma: f64,
    #[arg(long, default_value_t = 120.35)]
    intercept: f64,
    #[arg(long, default_value_t = 1000.0)]
    xi: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    p2_min: f64,
    #[arg(long, default_value_t = 20.0)]
    p2_max: f64,
    /// Number of grid points, ends included.
    #[arg(long, default_value_t = 21)]
    steps: usize,
    /// Take thermal and hydro data from this scenario instead of the bundled table1 scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(clap::Args)]
struct CurveArgs {
    #[arg(long, default_value_t = 0.054)]
    gamma: f64,
    #[arg(long, default_value_t = 120.35)]
    intercept: f64,
    #[arg(long, default_value_t = 20.0)]
    p2: f64,
    #[arg(long, default_value_t = 1000.0)]
    xi: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    q_min: f64,
    #[arg(long, default_value_t = 2000.0)]
    q_max: f64,
    #[arg(long, default_value_t = 201)]
    steps: usize,
    #[command(flatten)]
    output: Output,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            // a solve that an input depends on did not converge
            let solver_failure = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<cournot_dr::Error>(),
                    Some(cournot_dr::Error::NotConverged(_))
                )
            });
            ExitCode::from(if solver_failure { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    configure_threads()?;
    match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Curve(a) => cmd_curve(a),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn solver_config(tol: f64, start: Option<StartArg>) -> Result<SolverConfig> {
    let cfg = SolverConfig {
        tol,
        start: start.map(StartPoint::from),
        ..SolverConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    load_scenario(path).with_context(|| format!("reading scenario {}", path.display()))
}

fn write_output(out: &Output, text: &str) -> Result<()> {
    match &out.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Assembles the system `s` is solved on, deriving the net demand when needed.
fn system_for(s: &Scenario, cfg: &SolverConfig) -> Result<McpSystem> {
    Ok(match s.mode {
        MarketMode::NoDr => assemble_no_dr(s)?,
        MarketMode::Dr => {
            let d_net = match s.d_net {
                Some(d) => d,
                None => net_demand(s, cfg)?,
            };
            assemble_dr(s, d_net, s.multiplier_mode)?
        }
    })
}

fn warn_negative_prices(label: &str, sol: &EquilibriumSolution) {
    for (t, p) in sol.periods.iter().enumerate() {
        if p.price < 0.0 {
            eprintln!("warning: {label}negative price {:.6} $/MWh at hour {}", p.price, t + 1);
        }
    }
}

fn warn_unconverged(label: &str, sol: &EquilibriumSolution) {
    if !sol.is_converged() {
        eprintln!(
            "warning: {label}solver stopped with status {} after {} iterations (merit {:e})",
            sol.status.name(),
            sol.iterations,
            sol.merit
        );
    }
}

fn cmd_solve(a: SolveArgs) -> Result<ExitCode> {
    let cfg = solver_config(a.tol, a.start)?;
    let mut s = read_scenario(&a.scenario)?;
    if let Some(m) = a.mode {
        s = s.with_mode(m.into());
    }
    match a.multiplier {
        Some(MultiplierArg::Shared) => s.multiplier_mode = MultiplierMode::Shared,
        Some(MultiplierArg::PerPlayer) if !matches!(s.multiplier_mode, MultiplierMode::PerPlayer { .. }) => {
            s.multiplier_mode = MultiplierMode::per_player()
        }
        _ => {}
    }
    let system = system_for(&s, &cfg)?;
    let sol = solve(&system, &cfg, None)?;
    let surplus = surplus_report(&s, &sol)?;

    let mut meta = vec![
        format!("scenario: {}", a.scenario.display()),
        "p* in consumer surplus is each hour's own equilibrium price".to_string(),
    ];
    if sol.restarts > 0 {
        meta.push(format!("restarts: {}", sol.restarts));
    }
    let mut failed = !sol.is_converged();
    if a.check && sol.is_converged() {
        failed |= !run_checks(&s, &system, &sol, &cfg, &mut meta)?;
    }
    write_output(&a.output, &result_csv(&sol, &surplus, a.output.precision, &meta))?;
    warn_unconverged("", &sol);
    warn_negative_prices("", &sol);
    Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

/// Runs the `--check` verifications, reporting each on stderr and in `meta`.
fn run_checks(
    s: &Scenario,
    system: &McpSystem,
    sol: &EquilibriumSolution,
    cfg: &SolverConfig,
    meta: &mut Vec<String>,
) -> Result<bool> {
    let jac = check_jacobian(system, &sol.z)?;
    let jac_ok = jac.max_rel_error <= JACOBIAN_TOL;
    let line = format!(
        "check jacobian: {} (max relative error {:e} at row {}, column {})",
        if jac_ok { "pass" } else { "FAIL" },
        jac.max_rel_error,
        jac.row,
        jac.col
    );
    eprintln!("{line}");
    meta.push(line);

    let nash = verify_nash(s, sol, &DeviationGrid::default())?;
    let line = match &nash.best {
        None => format!("check nash: pass ({} deviations, none profitable)", nash.checked),
        Some(d) => {
            let moved = match d.counterpart {
                Some(c) if d.delta >= 0.0 => {
                    format!("shifting {} MWh from hour {} to hour {}", d.delta, c + 1, d.period + 1)
                }
                Some(c) => format!("shifting {} MWh from hour {} to hour {}", -d.delta, d.period + 1, c + 1),
                None => format!("changing hour {} output by {} MWh", d.period + 1, d.delta),
            };
            format!(
                "check nash: FAIL ({} of {} player-hours improvable; best: {} {moved} gains ${:.2})",
                nash.violations.len(),
                nash.checked,
                d.player.name(),
                d.gain
            )
        }
    };
    eprintln!("{line}");
    meta.push(line);

    if s.mode == MarketMode::Dr {
        let mut other = s.clone();
        other.multiplier_mode = match s.multiplier_mode {
            MultiplierMode::Shared => MultiplierMode::per_player(),
            MultiplierMode::PerPlayer { .. } => MultiplierMode::Shared,
        };
        let alt = solve(&system_for(&other, cfg)?, cfg, None)?;
        let gap = sol
            .periods
            .iter()
            .zip(&alt.periods)
            .map(|(a, b)| (a.q - b.q).abs() / a.q.abs().max(1.0))
            .fold(0.0, f64::max);
        if !alt.is_converged() || gap > MULTIPLIER_GAP {
            let line = format!(
                "note: {} multipliers give a different point (status {}, max relative q gap {gap:e})",
                other.multiplier_mode.name(),
                alt.status.name()
            );
            eprintln!("{line}");
            meta.push(line);
        }
    }
    Ok(jac_ok && nash.is_nash())
}

fn cmd_compare(a: CompareArgs) -> Result<ExitCode> {
    let cfg = solver_config(a.tol, None)?;
    let s = read_scenario(&a.scenario)?;
    let plain = s.with_mode(MarketMode::NoDr);
    let no_dr = solve(&assemble_no_dr(&plain)?, &cfg, None)?;
    warn_unconverged("no-DR run: ", &no_dr);
    if !no_dr.is_converged() && s.d_net.is_none() {
        bail!("no-DR run did not converge, so the net demand of the DR run is undefined");
    }
    let with_dr = s.with_mode(MarketMode::Dr);
    let d_net = s.d_net.unwrap_or_else(|| no_dr.total_q());
    let dr = solve(&assemble_dr(&with_dr, d_net, s.multiplier_mode)?, &cfg, None)?;
    warn_unconverged("DR run: ", &dr);
    warn_negative_prices("no-DR run: ", &no_dr);
    warn_negative_prices("DR run: ", &dr);

    let c = compare_runs(&s, &no_dr, &dr)?;
    let meta = vec![
        format!("scenario: {}", a.scenario.display()),
        format!(
            "no-DR status {}, DR status {}, d_net {} MWh, {} multipliers",
            no_dr.status.name(),
            dr.status.name(),
            format_number(d_net, a.output.precision),
            s.multiplier_mode.name()
        ),
    ];
    write_output(&a.output, &compare_csv(&c, a.output.precision, &meta))?;
    let ok = no_dr.is_converged() && dr.is_converged();
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

/// `steps` evenly spaced points from `lo` to `hi`, ends included.
fn grid(lo: f64, hi: f64, steps: usize, what: &str) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite()) {
        bail!("{what} range must be finite");
    }
    if lo > hi {
        bail!("{what} minimum {lo} exceeds maximum {hi}");
    }
    if steps < 2 {
        bail!("--steps must be at least 2, got {steps}");
    }
    let h = (hi - lo) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| if i + 1 == steps { hi } else { lo + h * i as f64 })
        .collect())
}

fn cmd_sweep(a: SweepArgs) -> Result<ExitCode> {
    let cfg = solver_config(a.tol, None)?;
    let p2 = grid(a.p2_min, a.p2_max, a.steps, "p2")?;
    let producers = match &a.scenario {
        Some(p) => read_scenario(p)?,
        None => parse_scenario(TABLE1).context("bundled table1 scenario")?,
    };
    let pd = PeriodDemand::new(a.gamma, a.intercept, 0.0)?;
    let sc = SigmoidConfig::new(a.alpha, a.xi)?;
    let table = incentive_sweep(&pd, &sc, &producers.thermal, &producers.hydro, &p2, &cfg)?;
    let meta = vec![format!(
        "single-period game: gamma {}, intercept {}, xi {}, alpha {}",
        a.gamma, a.intercept, a.xi, a.alpha
    )];
    write_output(&a.output, &sweep_csv(&table, a.output.precision, &meta))?;
    let failed = table.failures();
    if failed > 0 {
        eprintln!("warning: {failed} of {} sweep points failed", table.rows.len());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_curve(a: CurveArgs) -> Result<ExitCode> {
    let q = grid(a.q_min, a.q_max, a.steps, "q")?;
    let pd = PeriodDemand::new(a.gamma, a.intercept, a.p2)?;
    let sc = SigmoidConfig::new(a.alpha, a.xi)?;
    let d = a.output.precision;
    let mut out = format!(
        "# gamma {}, intercept {}, p2 {}, xi {}, alpha {}\n# units: q MWh; prices $/MWh\nq,price_no_dr,price_rebate,price_dr,weight\n",
        a.gamma, a.intercept, a.p2, a.xi, a.alpha
    );
    for q in q {
        let cells = [
            q,
            price_no_dr(&pd, q),
            price_dr_linear(&pd, q),
            price_dr(&pd, &sc, q),
            sc.weight(q),
        ];
        let cells: Vec<String> = cells.iter().map(|v| format_number(*v, d)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_output(&a.output, &out)?;
    Ok(ExitCode::SUCCESS)
}
