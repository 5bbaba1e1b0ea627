//! Equilibrium computation and the stationarity, correlation and regularity
//! diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{Field, FieldEval};
use crate::error::{Error, Result};
use crate::games::{best_response_set, lowest_best_response, GameSpec, PayoffProfile, DEFAULT_TIE_TOL};
use crate::protocols::{random_simplex_point, ProtocolAssignment, ProtocolSpec};
use crate::typegrid::{weighted_l1, ConditionalState, Rows, TypeGrid};

/// Default tolerance on the mass of types allowed off their best responses.
pub const DEFAULT_MASS_TOL: f64 = 1e-8;
const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub state: ConditionalState,
    /// Variational norm of the Smith field at `state`.
    pub residual: f64,
    /// Mass of types playing strategies outside their best response set.
    pub br_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Mass `sum_k w_k (1 - sum_{s in BR_k} x_ks)` over nodes whose shortfall
/// exceeds `tie_tol`.
pub fn br_violation(payoffs: &PayoffProfile, state: &ConditionalState, grid: &TypeGrid, tie_tol: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..grid.len() {
        let row = state.row(k);
        let on_br: f64 = best_response_set(payoffs.row(k), tie_tol)
            .iter()
            .map(|&s| row[s])
            .sum();
        let shortfall = 1.0 - on_br;
        if shortfall > tie_tol {
            total += grid.weight(k) * shortfall;
        }
    }
    total.clamp(0.0, 1.0)
}

fn smith_residual(game: &GameSpec, state: &ConditionalState, grid: &TypeGrid, tie_tol: f64) -> Result<(FieldEval, f64)> {
    let smith = ProtocolAssignment::uniform(ProtocolSpec::Smith, grid.len());
    let e = Field::new(game, &smith, grid, tie_tol)?.eval(state)?;
    let r = e.residual(grid);
    Ok((e, r))
}

/// Checks the equilibrium conditions at `state`: every type puts all but
/// `tie_tol` of its mass on best responses. Mixtures over tied best
/// responses are allowed.
pub fn check_equilibrium(
    game: &GameSpec,
    state: &ConditionalState,
    grid: &TypeGrid,
    tie_tol: f64,
    mass_tol: f64,
) -> Result<EquilibriumReport> {
    let (e, residual) = smith_residual(game, state, grid, tie_tol)?;
    let violation = br_violation(&e.payoffs, state, grid, tie_tol);
    Ok(EquilibriumReport {
        state: state.clone(),
        residual,
        br_violation: violation,
        iterations: 0,
        converged: violation <= mass_tol,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DampedBrConfig {
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub tie_tol: f64,
}

impl Default for DampedBrConfig {
    fn default() -> Self {
        DampedBrConfig {
            damping: 0.5,
            max_iters: 10_000,
            tol: 1e-10,
            tie_tol: DEFAULT_TIE_TOL,
        }
    }
}

/// Damped best response iteration `x <- (1 - damping) x + damping BR(x)`,
/// where `BR` puts each node on its lowest-index best response. Starts from
/// `initial` or the barycenter. Stops once the update's variational norm is
/// at most `tol * damping`; failure to get there is reported, not raised.
pub fn solve_damped_br(
    game: &GameSpec,
    grid: &TypeGrid,
    cfg: &DampedBrConfig,
    initial: Option<&ConditionalState>,
) -> Result<EquilibriumReport> {
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::param("damping", format!("must lie in (0, 1], got {}", cfg.damping)));
    }
    if !(cfg.tol.is_finite() && cfg.tol > 0.0) {
        return Err(Error::param("tol", format!("must be positive, got {}", cfg.tol)));
    }
    let s = game.strategies();
    let mut x = match initial {
        Some(x0) => x0.clone(),
        None => ConditionalState::barycenter(grid.len(), s),
    };
    let evaluator = game.evaluator(grid)?;
    let mut iterations = 0;
    let mut settled = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let pi = evaluator.payoffs(&x)?;
        let mut target = Rows::zeros(grid.len(), s);
        for k in 0..grid.len() {
            target.row_mut(k)[lowest_best_response(pi.row(k), cfg.tie_tol)] = 1.0;
        }
        let update = target.axpy(-1.0, x.rows()).scaled(cfg.damping);
        let size = weighted_l1(&update, grid);
        let mut next = x.rows().axpy(1.0, &update);
        next.as_mut_slice().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        x = ConditionalState::new(next)?;
        if size <= cfg.tol * cfg.damping {
            settled = true;
            break;
        }
    }
    let mut report = check_equilibrium(game, &x, grid, cfg.tie_tol, cfg.tol)?;
    report.iterations = iterations;
    report.converged = settled && report.converged;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdSolution {
    /// Mass of entrants.
    pub aggregate: f64,
    /// Cost below which a type enters.
    pub threshold: f64,
}

/// Continuum equilibrium of a binary entry game with scalar entry costs:
/// the root of `cost_cdf(profit(y)) - y` on `[0, 1]`, found by bisection.
pub fn solve_binary_threshold(
    profit: impl Fn(f64) -> f64,
    cost_cdf: impl Fn(f64) -> f64,
) -> Result<ThresholdSolution> {
    let h = |y: f64| cost_cdf(profit(y)) - y;
    let (h0, h1) = (h(0.0), h(1.0));
    if !h0.is_finite() || !h1.is_finite() {
        return Err(Error::NonFinite("threshold equation".into()));
    }
    let done = |y: f64| ThresholdSolution {
        aggregate: y,
        threshold: profit(y),
    };
    if h0 == 0.0 {
        return Ok(done(0.0));
    }
    if h1 == 0.0 {
        return Ok(done(1.0));
    }
    if h0.signum() == h1.signum() {
        return Err(Error::NoSignChange { h0, h1 });
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut best = (f64::INFINITY, 0.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let hm = h(mid);
        if hm.abs() < best.0 {
            best = (hm.abs(), mid);
        }
        if hm == 0.0 || hi - lo <= f64::EPSILON {
            break;
        }
        if hm.signum() == h0.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 > BISECTION_TOL {
        return Err(Error::param(
            "threshold",
            format!("bisection stalled with |h| = {:.3e}; is the cost CDF continuous?", best.0),
        ));
    }
    Ok(done(best.1))
}

/// CDF of a distribution uniform on disjoint pieces with the given masses.
pub fn piecewise_uniform_cdf(intervals: &[[f64; 2]], masses: Option<&[f64]>) -> impl Fn(f64) -> f64 {
    let masses: Vec<f64> = match masses {
        Some(m) => m.to_vec(),
        None => intervals.iter().map(|[a, b]| b - a).collect(),
    };
    let total: f64 = masses.iter().sum();
    let pieces: Vec<([f64; 2], f64)> = intervals
        .iter()
        .copied()
        .zip(masses.into_iter().map(move |m| m / total))
        .collect();
    move |c: f64| {
        pieces
            .iter()
            .map(|([a, b], m)| m * ((c - a) / (b - a)).clamp(0.0, 1.0))
            .sum()
    }
}

/// Variational norm of the field at `state`.
pub fn stationarity_residual(
    game: &GameSpec,
    assignment: &ProtocolAssignment,
    state: &ConditionalState,
    grid: &TypeGrid,
) -> Result<f64> {
    Ok(Field::new(game, assignment, grid, DEFAULT_TIE_TOL)?
        .eval(state)?
        .residual(grid))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcReport {
    pub per_node: Vec<f64>,
    pub aggregate: f64,
}

/// `pi_k . v_k` per node and its grid-weighted sum.
pub fn pc_inner_product(
    game: &GameSpec,
    assignment: &ProtocolAssignment,
    state: &ConditionalState,
    grid: &TypeGrid,
) -> Result<PcReport> {
    let e = Field::new(game, assignment, grid, DEFAULT_TIE_TOL)?.eval(state)?;
    Ok(PcReport {
        aggregate: e.pc(grid),
        per_node: e.pc_per_node(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Pairs actually evaluated.
    pub samples: usize,
    /// Largest `max_{k,s} |pi'_ks - pi_ks| / |x' - x|`.
    pub lipschitz_ratio_max: f64,
    /// Largest switching rate realized at any sampled state.
    pub rate_bound: f64,
    /// Largest (mass of nodes whose best response set changes) / `|x' - x|`.
    pub br_band_ratio_max: f64,
}

/// Pairs closer than this are redrawn: on a grid the best response band of a
/// tiny move is dominated by the node spacing.
pub const MIN_PAIR_DISTANCE: f64 = 0.2;
const MAX_REDRAWS: usize = 100;

/// Empirical regularity constants over `n_samples` seeded state pairs.
///
/// Each pair is a random state `x` and a convex move `x' = x + a (y - x)`
/// towards another random state, with `a` drawn from `[0.1, 1]`. Even
/// samples draw every node's mixture independently; odd samples give all
/// nodes the same mixture, which moves the aggregate coherently.
pub fn assumption_diagnostics(
    game: &GameSpec,
    assignment: &ProtocolAssignment,
    grid: &TypeGrid,
    n_samples: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    if n_samples < 2 {
        return Err(Error::param("n_samples", format!("need at least 2, got {n_samples}")));
    }
    let field = Field::new(game, assignment, grid, DEFAULT_TIE_TOL)?;
    let (k, s) = (grid.len(), game.strategies());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_state = |rng: &mut ChaCha8Rng, common: bool| {
        let mut rows = Rows::zeros(k, s);
        let shared = random_simplex_point(rng, s);
        for node in 0..k {
            if common {
                rows.row_mut(node).copy_from_slice(&shared);
            } else {
                rows.row_mut(node).copy_from_slice(&random_simplex_point(rng, s));
            }
        }
        rows
    };
    let mut report = AssumptionReport {
        samples: 0,
        lipschitz_ratio_max: 0.0,
        rate_bound: 0.0,
        br_band_ratio_max: 0.0,
    };
    for i in 0..n_samples {
        let common = i % 2 == 1;
        let mut pair = None;
        for _ in 0..MAX_REDRAWS {
            let x = random_state(&mut rng, common);
            let y = random_state(&mut rng, common);
            let a = rng.gen_range(0.1..=1.0);
            let moved = x.axpy(a, &y.axpy(-1.0, &x));
            let dist = weighted_l1(&moved.axpy(-1.0, &x), grid);
            if dist >= MIN_PAIR_DISTANCE {
                pair = Some((x, moved, dist));
                break;
            }
        }
        let Some((x, moved, dist)) = pair else {
            continue;
        };
        let e0 = field.eval(&ConditionalState::new(x)?)?;
        let e1 = field.eval(&ConditionalState::new(moved)?)?;
        let dpi = e0
            .payoffs
            .rows()
            .as_slice()
            .iter()
            .zip(e1.payoffs.rows().as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let band: f64 = (0..k)
            .filter(|&node| {
                best_response_set(e0.payoffs.row(node), DEFAULT_TIE_TOL)
                    != best_response_set(e1.payoffs.row(node), DEFAULT_TIE_TOL)
            })
            .map(|node| grid.weight(node))
            .sum();
        report.samples += 1;
        report.lipschitz_ratio_max = report.lipschitz_ratio_max.max(dpi / dist);
        report.br_band_ratio_max = report.br_band_ratio_max.max(band / dist);
        report.rate_bound = report
            .rate_bound
            .max(e0.realized_max_rate)
            .max(e1.realized_max_rate);
    }
    Ok(report)
}
