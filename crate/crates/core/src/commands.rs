//! The experiment commands behind the CLI. Each command writes its outputs
//! into a directory and returns the outcome of the scenario's checks.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dynamics::{aggregability_probe, integrate, Trajectory};
use crate::equilibrium::{assumption_diagnostics, solve_damped_br, DampedBrConfig};
use crate::potential::{feasible_direction, gradient_check, worst_drop, PotentialSpec};
use crate::scenario::{random_state, CheckSpec, ScenarioConfig, ScenarioError};
use crate::typegrid::{aggregate, TypeGrid};
use crate::Error;

/// Relative gradient errors below this are roundoff, too small to carry an
/// order estimate.
pub const ORDER_NOISE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Equilibrium,
    PotentialCheck,
    AggregabilityDemo,
    Assumptions,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Equilibrium => "equilibrium",
            Command::PotentialCheck => "potential-check",
            Command::AggregabilityDemo => "aggregability-demo",
            Command::Assumptions => "assumptions",
        }
    }

    fn owns(self, check: &CheckSpec) -> bool {
        use CheckSpec::*;
        match check {
            Simplex { .. }
            | Lyapunov { .. }
            | WelfareMonotone { .. }
            | PcNonnegative { .. }
            | TerminalResidual { .. }
            | TerminalAggregate { .. } => self == Command::Simulate,
            BrViolation { .. } => self == Command::Equilibrium,
            Gradient { .. } => self == Command::PotentialCheck,
            SpreadAbove { .. } | SpreadBelow { .. } => self == Command::AggregabilityDemo,
            FiniteAssumptions => self == Command::Assumptions,
        }
    }
}

/// Command-line overrides of scenario fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

/// Applies overrides and revalidates. A seed override replaces both the
/// diagnostics seed and the seed of a random initial state.
pub fn apply_overrides(cfg: &mut ScenarioConfig, o: &Overrides) -> Result<(), ScenarioError> {
    if let Some(seed) = o.seed {
        cfg.seed = seed;
        if let crate::scenario::InitialState::Random { seed: s } = &mut cfg.initial_state {
            *s = Some(seed);
        }
    }
    if let Some(dt) = o.dt {
        cfg.integrator.dt = dt;
    }
    if let Some(t) = o.t_end {
        cfg.integrator.t_end = t;
    }
    let errors = cfg.validate();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ScenarioError { errors })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
    pub detail: String,
}

impl CheckOutcome {
    fn new(check: &str, passed: bool, value: Option<f64>, limit: Option<f64>, detail: String) -> Self {
        CheckOutcome {
            check: check.to_string(),
            passed,
            value,
            limit,
            detail,
        }
    }

    fn at_most(check: &str, value: f64, limit: f64, what: &str) -> Self {
        let passed = value <= limit;
        let detail = format!("{what} = {value:e} (limit {limit:e})");
        Self::new(check, passed, Some(value), Some(limit), detail)
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: Command,
    pub checks: Vec<CheckOutcome>,
    pub results: Value,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Runs `command` on `cfg`, writing outputs into `out_dir`. Check failures
/// are reported in the outcome; only configuration, numerical setup and I/O
/// problems are errors.
pub fn run(command: Command, cfg: &ScenarioConfig, out_dir: &Path) -> anyhow::Result<Outcome> {
    fs::create_dir_all(out_dir)?;
    let grid = cfg.build_grid()?;
    let checks: Vec<&CheckSpec> = cfg.checks.iter().filter(|c| command.owns(c)).collect();
    let mut files = Vec::new();
    let (outcomes, results) = match command {
        Command::Simulate => simulate(cfg, &grid, &checks, out_dir, &mut files)?,
        Command::Equilibrium => equilibrium(cfg, &grid, &checks, out_dir, &mut files)?,
        Command::PotentialCheck => potential_check(cfg, &grid, &checks)?,
        Command::AggregabilityDemo => aggregability(cfg, &grid, &checks)?,
        Command::Assumptions => assumptions(cfg, &grid, &checks)?,
    };
    let outcome = Outcome {
        command,
        checks: outcomes,
        results,
        files,
    };
    let summary = json!({
        "command": command.name(),
        "scenario": cfg.name,
        "passed": outcome.passed(),
        "results": outcome.results,
        "checks": outcome.checks,
        "failures": outcome.failures(),
    });
    let path = out_dir.join("summary.json");
    write_json(&path, &summary)?;
    let mut outcome = outcome;
    outcome.files.push(path);
    Ok(outcome)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

type CommandResult = anyhow::Result<(Vec<CheckOutcome>, Value)>;

fn simulate(
    cfg: &ScenarioConfig,
    grid: &TypeGrid,
    checks: &[&CheckSpec],
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> CommandResult {
    let assignment = cfg.build_assignment(grid)?;
    let state0 = cfg.build_initial_state(grid)?;
    let mut icfg = cfg.integrator.clone();
    icfg.tie_tol = cfg.tolerances.tie_tol;
    let protocols: Vec<Value> = assignment
        .specs()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nodes = assignment.indices().iter().filter(|j| **j == i).count();
            json!({"label": p.label(), "spec": p, "nodes": nodes})
        })
        .collect();

    let traj = match integrate(&cfg.game, &assignment, &state0, grid, &icfg) {
        Ok(t) => t,
        Err(e @ (Error::StepSizeFailure { .. } | Error::NonFiniteState { .. })) => {
            let failure = CheckOutcome::new("integration", false, None, None, e.to_string());
            let results = json!({"protocols": protocols, "error": e.to_string()});
            return Ok((vec![failure], results));
        }
        Err(e) => return Err(e.into()),
    };

    if cfg.outputs.trajectory {
        let path = out_dir.join("trajectory.csv");
        write_trajectory(&path, &traj)?;
        files.push(path);
    }
    if cfg.outputs.diagnostics {
        let path = out_dir.join("diagnostics.csv");
        write_diagnostics(&path, &traj, grid)?;
        files.push(path);
    }

    let last = traj.final_diagnostics();
    let xbar = aggregate(traj.final_state(), grid)?;
    let potential_drop = traj.potential_series().map(|v| worst_drop(&v));
    let welfare_drop = traj.welfare_series().map(|v| worst_drop(&v));
    let min_pc = traj.diagnostics.iter().map(|d| d.pc).fold(f64::INFINITY, f64::min);

    let mut outcomes = Vec::new();
    for check in checks {
        outcomes.push(match check {
            CheckSpec::Simplex {
                max_deviation,
                max_renorm,
            } => {
                let passed = traj.max_simplex_deviation <= *max_deviation && traj.total_renorm <= *max_renorm;
                CheckOutcome::new(
                    check.name(),
                    passed,
                    Some(traj.max_simplex_deviation),
                    Some(*max_deviation),
                    format!(
                        "max simplex deviation {:e} (limit {max_deviation:e}), total renormalization {:e} (limit {max_renorm:e})",
                        traj.max_simplex_deviation, traj.total_renorm
                    ),
                )
            }
            CheckSpec::Lyapunov { slack } => match potential_drop {
                Some(d) => CheckOutcome::at_most(check.name(), d, *slack, "worst potential drop"),
                None => CheckOutcome::new(
                    check.name(),
                    false,
                    None,
                    Some(*slack),
                    no_potential_reason(cfg, grid),
                ),
            },
            CheckSpec::WelfareMonotone { slack } => match welfare_drop {
                Some(d) => CheckOutcome::at_most(check.name(), d, *slack, "worst welfare drop"),
                None => CheckOutcome::new(
                    check.name(),
                    false,
                    None,
                    Some(*slack),
                    "welfare is only defined for aggregate games".into(),
                ),
            },
            CheckSpec::PcNonnegative { slack } => {
                let passed = min_pc >= -slack;
                CheckOutcome::new(
                    check.name(),
                    passed,
                    Some(min_pc),
                    Some(-slack),
                    format!("smallest sampled pc {min_pc:e} (floor {:e})", -slack),
                )
            }
            CheckSpec::TerminalResidual { max } => {
                CheckOutcome::at_most(check.name(), last.residual, *max, "terminal residual")
            }
            CheckSpec::TerminalAggregate { strategy, target, tol } => {
                let err = (xbar[*strategy] - target).abs();
                CheckOutcome::new(
                    check.name(),
                    err <= *tol,
                    Some(err),
                    Some(*tol),
                    format!(
                        "terminal aggregate of strategy {strategy} is {} (target {target}, error {err:e}, limit {tol:e})",
                        xbar[*strategy]
                    ),
                )
            }
            _ => unreachable!("check not owned by simulate"),
        });
    }

    let results = json!({
        "protocols": protocols,
        "method": icfg.method,
        "dt": icfg.dt,
        "t_end": icfg.t_end,
        "steps": traj.steps,
        "terminal": {
            "time": traj.times.last(),
            "aggregate": xbar,
            "residual": last.residual,
            "pc": last.pc,
            "potential": last.potential,
            "welfare": last.welfare,
        },
        "potential_monotone": potential_drop.map(|d| d <= crate::potential::MONOTONE_SLACK),
        "potential_worst_drop": potential_drop,
        "welfare_worst_drop": welfare_drop,
        "min_pc": min_pc,
        "total_renorm": traj.total_renorm,
        "max_simplex_deviation": traj.max_simplex_deviation,
        "max_rate": traj.max_rate,
    });
    Ok((outcomes, results))
}

fn no_potential_reason(cfg: &ScenarioConfig, grid: &TypeGrid) -> String {
    match PotentialSpec::from_game(&cfg.game, grid) {
        Ok(_) => "potential unavailable".into(),
        Err(e) => format!("game has no potential: {e}"),
    }
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time", "node_index", "strategy_index", "x", "v"])?;
    for ((t, state), v) in traj.times.iter().zip(&traj.states).zip(&traj.velocities) {
        for k in 0..state.nodes() {
            for (s, (x, vs)) in state.row(k).iter().zip(v.row(k)).enumerate() {
                w.serialize((t, k, s, x, vs))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_diagnostics(path: &Path, traj: &Trajectory, grid: &TypeGrid) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let strategies = traj.final_state().strategies();
    let mut header: Vec<String> = ["time", "potential", "pc", "residual", "renorm", "welfare", "max_rate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..strategies).map(|s| format!("xbar_{s}")));
    w.write_record(&header)?;
    for ((t, d), state) in traj.times.iter().zip(&traj.diagnostics).zip(&traj.states) {
        let mut row = vec![Some(*t), d.potential, Some(d.pc), Some(d.residual), Some(d.renorm), d.welfare, Some(d.max_rate)];
        row.extend(aggregate(state, grid)?.into_iter().map(Some));
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn equilibrium(
    cfg: &ScenarioConfig,
    grid: &TypeGrid,
    checks: &[&CheckSpec],
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> CommandResult {
    let initial = cfg.build_initial_state(grid)?;
    let solver = DampedBrConfig {
        damping: cfg.equilibrium.damping,
        max_iters: cfg.equilibrium.max_iters,
        tol: cfg.equilibrium.tol,
        tie_tol: cfg.tolerances.tie_tol,
    };
    let report = solve_damped_br(&cfg.game, grid, &solver, Some(&initial))?;
    let path = out_dir.join("equilibrium.json");
    write_json(&path, &report)?;
    files.push(path);

    let outcomes = checks
        .iter()
        .map(|check| match check {
            CheckSpec::BrViolation { max } => {
                let passed = report.converged && report.br_violation <= *max;
                CheckOutcome::new(
                    check.name(),
                    passed,
                    Some(report.br_violation),
                    Some(*max),
                    format!(
                        "best-response violation {:e} (limit {max:e}) after {} iterations, converged: {}",
                        report.br_violation, report.iterations, report.converged
                    ),
                )
            }
            _ => unreachable!("check not owned by equilibrium"),
        })
        .collect();
    let results = json!({
        "aggregate": aggregate(&report.state, grid)?,
        "residual": report.residual,
        "br_violation": report.br_violation,
        "iterations": report.iterations,
        "converged": report.converged,
    });
    Ok((outcomes, results))
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientSummary {
    pub pairs: usize,
    pub h: f64,
    pub max_error: f64,
    pub order_h: f64,
    /// Pairs whose error at `order_h` clears the roundoff floor.
    pub measured_pairs: usize,
    /// Smallest observed order among measured pairs.
    pub min_order: Option<f64>,
}

/// Finite-difference gradient checks at seeded random states and directions.
pub fn gradient_summary(
    pspec: &PotentialSpec,
    cfg: &ScenarioConfig,
    grid: &TypeGrid,
) -> crate::Result<GradientSummary> {
    let settings = &cfg.potential_check;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = cfg.game.strategies();
    let (mut max_error, mut measured, mut min_order) = (0.0_f64, 0, None::<f64>);
    for i in 0..settings.pairs {
        let state = random_state(grid.len(), s, cfg.seed.wrapping_add(i as u64 + 1));
        let dir = feasible_direction(&state, settings.order_h.max(settings.h), &mut rng)?;
        let e = gradient_check(pspec, &cfg.game, &state, &dir, settings.h, grid)?;
        max_error = max_error.max(e);
        let coarse = gradient_check(pspec, &cfg.game, &state, &dir, settings.order_h, grid)?;
        if coarse > ORDER_NOISE_FLOOR {
            let fine = gradient_check(pspec, &cfg.game, &state, &dir, settings.order_h / 2.0, grid)?;
            let order = (coarse / fine).log2();
            measured += 1;
            min_order = Some(min_order.map_or(order, |m| m.min(order)));
        }
    }
    Ok(GradientSummary {
        pairs: settings.pairs,
        h: settings.h,
        max_error,
        order_h: settings.order_h,
        measured_pairs: measured,
        min_order,
    })
}

fn potential_check(cfg: &ScenarioConfig, grid: &TypeGrid, checks: &[&CheckSpec]) -> CommandResult {
    let pspec = match PotentialSpec::from_game(&cfg.game, grid) {
        Ok(p) => p,
        Err(e @ (Error::SymmetryViolation(_) | Error::UnsupportedGame(_))) => {
            let detail = format!("game has no potential: {e}");
            let outcomes = checks
                .iter()
                .map(|c| CheckOutcome::new(c.name(), false, None, None, detail.clone()))
                .collect();
            return Ok((outcomes, json!({"potential": null, "reason": detail})));
        }
        Err(e) => return Err(e.into()),
    };
    let summary = gradient_summary(&pspec, cfg, grid)?;
    let outcomes = checks
        .iter()
        .map(|check| match check {
            CheckSpec::Gradient { max_error, min_order } => {
                let order_ok = summary.min_order.is_none_or(|o| o >= *min_order);
                let order = match summary.min_order {
                    Some(o) => format!("minimum order {o:.3} over {} pairs (floor {min_order})", summary.measured_pairs),
                    None => "errors at roundoff for every pair; finite differences are exact".into(),
                };
                CheckOutcome::new(
                    check.name(),
                    summary.max_error <= *max_error && order_ok,
                    Some(summary.max_error),
                    Some(*max_error),
                    format!("max relative error {:e} (limit {max_error:e}); {order}", summary.max_error),
                )
            }
            _ => unreachable!("check not owned by potential-check"),
        })
        .collect();
    Ok((outcomes, json!({"potential": potential_kind(&pspec), "gradient": summary})))
}

fn potential_kind(p: &PotentialSpec) -> &'static str {
    match p {
        PotentialSpec::Asag { .. } => "asag",
        PotentialSpec::Welfare { .. } => "welfare",
        PotentialSpec::RandomMatching { .. } => "random_matching",
        PotentialSpec::Structured { .. } => "structured",
    }
}

fn aggregability(cfg: &ScenarioConfig, grid: &TypeGrid, checks: &[&CheckSpec]) -> CommandResult {
    let assignment = cfg.build_assignment(grid)?;
    let target = match &cfg.aggregability.target {
        Some(t) => t.clone(),
        None => aggregate(&cfg.build_initial_state(grid)?, grid)?,
    };
    let report = aggregability_probe(
        &cfg.game,
        &assignment,
        grid,
        &target,
        cfg.aggregability.n_states,
        cfg.seed,
    )?;
    let outcomes = checks
        .iter()
        .map(|check| match check {
            CheckSpec::SpreadAbove { min } => CheckOutcome::new(
                check.name(),
                report.spread > *min,
                Some(report.spread),
                Some(*min),
                format!("spread {:e} (must exceed {min:e})", report.spread),
            ),
            CheckSpec::SpreadBelow { max } => {
                CheckOutcome::at_most(check.name(), report.spread, *max, "spread")
            }
            _ => unreachable!("check not owned by aggregability-demo"),
        })
        .collect();
    Ok((outcomes, serde_json::to_value(&report)?))
}

fn assumptions(cfg: &ScenarioConfig, grid: &TypeGrid, checks: &[&CheckSpec]) -> CommandResult {
    let assignment = cfg.build_assignment(grid)?;
    let report = assumption_diagnostics(&cfg.game, &assignment, grid, cfg.assumptions.samples, cfg.seed)?;
    let finite = [report.lipschitz_ratio_max, report.rate_bound, report.br_band_ratio_max]
        .iter()
        .all(|v| v.is_finite());
    let outcomes = checks
        .iter()
        .map(|check| match check {
            CheckSpec::FiniteAssumptions => CheckOutcome::new(
                check.name(),
                finite,
                None,
                None,
                format!(
                    "lipschitz ratio {:e}, rate bound {:e}, best-response band ratio {:e}",
                    report.lipschitz_ratio_max, report.rate_bound, report.br_band_ratio_max
                ),
            ),
            _ => unreachable!("check not owned by assumptions"),
        })
        .collect();
    let protocols: Vec<Value> = assignment
        .specs()
        .iter()
        .map(|p| {
            json!({
                "label": p.label(),
                "admissible": p.is_admissible(),
                "imitative": p.is_imitative(),
                "exact_optimization": p.is_exact_optimization(),
            })
        })
        .collect();
    Ok((outcomes, json!({"diagnostics": report, "protocols": protocols})))
}
