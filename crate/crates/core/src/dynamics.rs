//! The heterogeneous vector field on the grid and its fixed-step integration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{GameEvaluator, GameSpec, PayoffProfile, DEFAULT_TIE_TOL};
use crate::potential::{welfare, PotentialSpec};
use crate::protocols::{ProtocolAssignment, RateScratch};
use crate::typegrid::{
    simplex_deviation, weighted_l1, weighted_row_sum, ConditionalState, Rows, TypeGrid,
    SIMPLEX_TOL,
};

/// States closer than this entrywise count as one in the aggregability probe.
const DISTINCT_TOL: f64 = 1e-12;

/// Total renormalization (variational norm) a run may accumulate before it
/// is rejected as a step-size failure.
pub const RENORM_LIMIT: f64 = 1e-3;

/// Velocity density of the field together with the payoffs that produced it.
#[derive(Debug, Clone)]
pub struct FieldEval {
    pub v: Rows,
    pub payoffs: PayoffProfile,
    pub realized_max_rate: f64,
}

impl FieldEval {
    /// Variational norm of the velocity.
    pub fn residual(&self, grid: &TypeGrid) -> f64 {
        weighted_l1(&self.v, grid)
    }

    /// Per-node `pi_k . v_k`.
    pub fn pc_per_node(&self) -> Vec<f64> {
        self.payoffs
            .rows()
            .iter_rows()
            .zip(self.v.iter_rows())
            .map(|(p, v)| p.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `sum_k w_k pi_k . v_k`, the rate of change of a potential along the flow.
    pub fn pc(&self, grid: &TypeGrid) -> f64 {
        self.pc_per_node()
            .iter()
            .zip(grid.weights())
            .map(|(p, w)| p * w)
            .sum()
    }

    /// Induced aggregate velocity `sum_k w_k v_k`.
    pub fn aggregate_velocity(&self, grid: &TypeGrid) -> Vec<f64> {
        weighted_row_sum(&self.v, grid)
    }
}

/// A game, protocol assignment and grid bound together for repeated field
/// evaluation.
pub struct Field<'a> {
    evaluator: GameEvaluator<'a>,
    assignment: &'a ProtocolAssignment,
    tie_tol: f64,
}

impl<'a> Field<'a> {
    pub fn new(
        game: &'a GameSpec,
        assignment: &'a ProtocolAssignment,
        grid: &'a TypeGrid,
        tie_tol: f64,
    ) -> Result<Self> {
        if !(tie_tol.is_finite() && tie_tol >= 0.0) {
            return Err(Error::param("tie_tol", format!("must be nonnegative, got {tie_tol}")));
        }
        grid.check_nodes(assignment.nodes(), "protocol assignment")?;
        Ok(Field {
            evaluator: game.evaluator(grid)?,
            assignment,
            tie_tol,
        })
    }

    pub fn grid(&self) -> &TypeGrid {
        self.evaluator.grid()
    }

    pub fn game(&self) -> &GameSpec {
        self.evaluator.game()
    }

    pub fn eval(&self, state: &ConditionalState) -> Result<FieldEval> {
        let payoffs = self.evaluator.payoffs(state)?;
        let (k, s) = (state.nodes(), state.strategies());
        let mut v = Rows::zeros(k, s);
        let mut scratch = RateScratch::default();
        let mut max_rate = 0.0_f64;
        for node in 0..k {
            let r = scratch.mean_dynamic_into(
                self.assignment.protocol(node),
                payoffs.row(node),
                state.row(node),
                self.tie_tol,
                v.row_mut(node),
            );
            max_rate = max_rate.max(r);
        }
        if !v.is_finite() {
            return Err(Error::NonFinite("field".into()));
        }
        Ok(FieldEval {
            v,
            payoffs,
            realized_max_rate: max_rate,
        })
    }

    fn velocity(&self, rows: &Rows) -> Result<(Rows, f64)> {
        let e = self.eval(&ConditionalState::new_unchecked(rows.clone()))?;
        Ok((e.v, e.realized_max_rate))
    }
}

/// Field at `state` with the default tie tolerance.
pub fn field(
    game: &GameSpec,
    assignment: &ProtocolAssignment,
    state: &ConditionalState,
    grid: &TypeGrid,
) -> Result<FieldEval> {
    Field::new(game, assignment, grid, DEFAULT_TIE_TOL)?.eval(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_clamp_tol")]
    pub clamp_tol: f64,
    /// Set from the scenario tolerances rather than the integrator block.
    #[serde(skip, default = "default_tie_tol")]
    pub tie_tol: f64,
}

fn default_dt() -> f64 {
    0.01
}

fn default_sample_every() -> usize {
    10
}

fn default_clamp_tol() -> f64 {
    1e-12
}

fn default_tie_tol() -> f64 {
    DEFAULT_TIE_TOL
}

impl IntegratorConfig {
    pub fn new(method: Method, dt: f64, t_end: f64) -> Self {
        IntegratorConfig {
            method,
            dt,
            t_end,
            sample_every: default_sample_every(),
            clamp_tol: default_clamp_tol(),
            tie_tol: default_tie_tol(),
        }
    }

    pub fn validate(&self, path: &str, errs: &mut Vec<String>) {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            errs.push(format!("{path}.dt: must be positive, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            errs.push(format!("{path}.t_end: must be positive, got {}", self.t_end));
        } else if self.dt > self.t_end {
            errs.push(format!("{path}.dt: {} exceeds t_end {}", self.dt, self.t_end));
        }
        if self.sample_every == 0 {
            errs.push(format!("{path}.sample_every: must be positive"));
        }
        if !(self.clamp_tol.is_finite() && self.clamp_tol >= 0.0) {
            errs.push(format!("{path}.clamp_tol: must be nonnegative"));
        }
        if !(self.tie_tol.is_finite() && self.tie_tol >= 0.0) {
            errs.push(format!("{path}.tie_tol: must be nonnegative"));
        }
    }

    fn check(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.validate("integrator", &mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::param("integrator", errs.join("; ")))
        }
    }

    /// Step sizes covering `[0, t_end]`; the last step absorbs any remainder.
    fn steps(&self) -> (usize, f64) {
        let n = ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize;
        let last = self.t_end - (n - 1) as f64 * self.dt;
        (n, last)
    }
}

/// Diagnostics recorded at each sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Potential value, for potential games (welfare for priced games).
    pub potential: Option<f64>,
    /// Total unpriced payoff, for aggregate games.
    pub welfare: Option<f64>,
    /// `sum_k w_k pi_k . v_k`
    pub pc: f64,
    /// Variational norm of the field.
    pub residual: f64,
    /// Cumulative renormalization so far.
    pub renorm: f64,
    pub max_rate: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ConditionalState>,
    pub velocities: Vec<Rows>,
    pub diagnostics: Vec<Diagnostics>,
    /// Cumulative variational norm of all clamping/renormalization corrections.
    pub total_renorm: f64,
    /// Largest simplex deviation of any raw step result, before correction.
    pub max_simplex_deviation: f64,
    /// Largest switching rate used at any stage of any step.
    pub max_rate: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &ConditionalState {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn final_diagnostics(&self) -> &Diagnostics {
        self.diagnostics.last().expect("trajectory has at least one sample")
    }

    pub fn potential_series(&self) -> Option<Vec<f64>> {
        self.diagnostics.iter().map(|d| d.potential).collect()
    }

    pub fn welfare_series(&self) -> Option<Vec<f64>> {
        self.diagnostics.iter().map(|d| d.welfare).collect()
    }
}

/// One explicit step of size `dt` from `rows`. Returns the raw new state
/// and the largest rate used.
pub fn step(field: &Field, rows: &Rows, dt: f64, method: Method) -> Result<(Rows, f64)> {
    match method {
        Method::Euler => {
            let (k1, r) = field.velocity(rows)?;
            Ok((rows.axpy(dt, &k1), r))
        }
        Method::Rk4 => {
            let (k1, r1) = field.velocity(rows)?;
            let (k2, r2) = field.velocity(&rows.axpy(0.5 * dt, &k1))?;
            let (k3, r3) = field.velocity(&rows.axpy(0.5 * dt, &k2))?;
            let (k4, r4) = field.velocity(&rows.axpy(dt, &k3))?;
            let next = rows
                .axpy(dt / 6.0, &k1)
                .axpy(dt / 3.0, &k2)
                .axpy(dt / 3.0, &k3)
                .axpy(dt / 6.0, &k4);
            Ok((next, r1.max(r2).max(r3).max(r4)))
        }
    }
}

/// Clamps entries to `[0, 1]` and renormalizes rows whose sum drifts by more
/// than `clamp_tol`. Returns the variational norm of the correction.
fn correct(rows: &mut Rows, grid: &TypeGrid, clamp_tol: f64) -> f64 {
    let before = rows.clone();
    for k in 0..rows.nrows() {
        let row = rows.row_mut(k);
        row.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > clamp_tol && sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
    weighted_l1(&rows.axpy(-1.0, &before), grid)
}

struct Recorder<'a> {
    potential: Option<PotentialSpec>,
    welfare_game: Option<&'a GameSpec>,
}

impl Recorder<'_> {
    fn record(
        &self,
        field: &Field,
        state: &ConditionalState,
        renorm: f64,
        traj: &mut Trajectory,
        time: f64,
    ) -> Result<()> {
        let grid = field.grid();
        let e = field.eval(state)?;
        let potential = match &self.potential {
            Some(p) => Some(p.value(state, grid)?),
            None => None,
        };
        let welfare = match self.welfare_game {
            Some(g) => Some(welfare(g, state, grid)?),
            None => None,
        };
        traj.diagnostics.push(Diagnostics {
            potential,
            welfare,
            pc: e.pc(grid),
            residual: e.residual(grid),
            renorm,
            max_rate: e.realized_max_rate,
        });
        traj.max_rate = traj.max_rate.max(e.realized_max_rate);
        traj.times.push(time);
        traj.states.push(state.clone());
        traj.velocities.push(e.v);
        Ok(())
    }
}

/// Integrates from `state0` over `[0, t_end]` with fixed steps.
///
/// The potential (or welfare, for priced games) is recorded whenever the game
/// admits one on this grid.
pub fn integrate(
    game: &GameSpec,
    assignment: &ProtocolAssignment,
    state0: &ConditionalState,
    grid: &TypeGrid,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.check()?;
    grid.check_nodes(state0.nodes(), "initial state")?;
    if state0.strategies() != game.strategies() {
        return Err(Error::DimensionMismatch {
            context: "initial state strategies",
            expected: game.strategies(),
            actual: state0.strategies(),
        });
    }
    let field = Field::new(game, assignment, grid, cfg.tie_tol)?;
    let recorder = Recorder {
        potential: PotentialSpec::from_game(game, grid).ok(),
        welfare_game: game.is_asag().then_some(game),
    };
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        velocities: Vec::new(),
        diagnostics: Vec::new(),
        total_renorm: 0.0,
        max_simplex_deviation: state0.simplex_deviation(),
        max_rate: 0.0,
        steps: 0,
    };
    recorder.record(&field, state0, 0.0, &mut traj, 0.0)?;

    let (n, last) = cfg.steps();
    let mut rows = state0.rows().clone();
    let mut time = 0.0;
    for i in 1..=n {
        let h = if i == n { last } else { cfg.dt };
        let (mut next, rate) = step(&field, &rows, h, cfg.method)?;
        time = if i == n { cfg.t_end } else { i as f64 * cfg.dt };
        if !next.is_finite() {
            return Err(Error::NonFiniteState { time });
        }
        traj.max_rate = traj.max_rate.max(rate);
        traj.max_simplex_deviation = traj.max_simplex_deviation.max(simplex_deviation(&next));
        traj.total_renorm += correct(&mut next, grid, cfg.clamp_tol);
        if traj.total_renorm > RENORM_LIMIT {
            return Err(Error::StepSizeFailure {
                total: traj.total_renorm,
                limit: RENORM_LIMIT,
                time,
            });
        }
        rows = next;
        traj.steps = i;
        if i % cfg.sample_every == 0 || i == n {
            let state = ConditionalState::new(rows.clone())?;
            recorder.record(&field, &state, traj.total_renorm, &mut traj, time)?;
        }
    }
    debug_assert_eq!(time, cfg.t_end);
    Ok(traj)
}

/// Fills nodes in `node_order` with the aggregate budget `xbar`, taking
/// strategies in `strategy_order`. The result has aggregate `xbar`; at most
/// one node per strategy boundary is mixed.
pub fn greedy_disaggregation(
    grid: &TypeGrid,
    xbar: &[f64],
    node_order: &[usize],
    strategy_order: &[usize],
) -> Result<ConditionalState> {
    check_target(xbar)?;
    let s_count = xbar.len();
    let mut budget = xbar.to_vec();
    let mut rows = Rows::zeros(grid.len(), s_count);
    let mut cursor = 0;
    for &k in node_order {
        let mut need = grid.weight(k);
        while need > 0.0 && cursor < s_count {
            let s = strategy_order[cursor];
            let take = need.min(budget[s]);
            rows.row_mut(k)[s] += take / grid.weight(k);
            budget[s] -= take;
            need -= take;
            if budget[s] <= 1e-15 {
                cursor += 1;
            }
        }
        if need > 0.0 {
            // Roundoff left a sliver of this node unassigned.
            let s = strategy_order[s_count - 1];
            rows.row_mut(k)[s] += need / grid.weight(k);
        }
    }
    for k in 0..grid.len() {
        let row = rows.row_mut(k);
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
    ConditionalState::new(rows)
}

fn check_target(xbar: &[f64]) -> Result<()> {
    let sum: f64 = xbar.iter().sum();
    if xbar.is_empty()
        || xbar.iter().any(|v| !v.is_finite() || *v < 0.0)
        || (sum - 1.0).abs() > SIMPLEX_TOL
    {
        return Err(Error::InfeasibleTarget(format!("{xbar:?} is not in the simplex")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregabilityReport {
    pub target: Vec<f64>,
    pub states: Vec<ConditionalState>,
    pub aggregate_velocities: Vec<Vec<f64>>,
    /// Largest L1 distance between two aggregate velocities.
    pub spread: f64,
}

/// Evaluates the field on up to `n_states` distinct states sharing the
/// aggregate `xbar_target` and reports how far apart the induced aggregate
/// velocities are. A positive spread shows the aggregate dynamic is not a
/// function of the aggregate alone.
///
/// The candidates are the state where every node plays `xbar_target`,
/// greedy fills over rotated and reversed node and strategy orders, and
/// seeded mass swaps between node pairs. A grid that admits fewer distinct
/// states yields fewer.
pub fn aggregability_probe(
    game: &GameSpec,
    assignment: &ProtocolAssignment,
    grid: &TypeGrid,
    xbar_target: &[f64],
    n_states: usize,
    seed: u64,
) -> Result<AggregabilityReport> {
    if n_states < 2 {
        return Err(Error::param("n_states", format!("need at least 2, got {n_states}")));
    }
    check_target(xbar_target)?;
    if xbar_target.len() != game.strategies() {
        return Err(Error::DimensionMismatch {
            context: "aggregate target",
            expected: game.strategies(),
            actual: xbar_target.len(),
        });
    }
    let field = Field::new(game, assignment, grid, DEFAULT_TIE_TOL)?;
    let (k, s) = (grid.len(), xbar_target.len());

    let mut candidates = vec![ConditionalState::uniform_rows(k, xbar_target)?];
    let forward: Vec<usize> = (0..k).collect();
    let backward: Vec<usize> = (0..k).rev().collect();
    let strategy_orders: Vec<Vec<usize>> = (0..s)
        .map(|r| (0..s).map(|i| (i + r) % s).collect())
        .collect();
    let mut node_orders = vec![forward.clone(), backward];
    for r in 1..k.min(8) {
        node_orders.push((0..k).map(|i| (i + r * k.div_ceil(8).max(1)) % k).collect());
    }
    'fill: for nodes in &node_orders {
        for strategies in &strategy_orders {
            if candidates.len() >= 4 * n_states {
                break 'fill;
            }
            candidates.push(greedy_disaggregation(grid, xbar_target, nodes, strategies)?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if k >= 2 && s >= 2 {
        for _ in 0..n_states {
            let base = &candidates[rng.gen_range(0..candidates.len())];
            if let Some(p) = mass_swap(base, grid, &mut rng) {
                candidates.push(p);
            }
        }
    }

    let mut states: Vec<ConditionalState> = Vec::new();
    for c in candidates {
        let fresh = states.iter().all(|st| {
            st.rows()
                .as_slice()
                .iter()
                .zip(c.rows().as_slice())
                .any(|(a, b)| (a - b).abs() > DISTINCT_TOL)
        });
        if fresh {
            states.push(c);
            if states.len() == n_states {
                break;
            }
        }
    }

    let mut velocities = Vec::with_capacity(states.len());
    for st in &states {
        velocities.push(field.eval(st)?.aggregate_velocity(grid));
    }
    let mut spread = 0.0_f64;
    for (i, a) in velocities.iter().enumerate() {
        for b in &velocities[i + 1..] {
            spread = spread.max(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum());
        }
    }
    Ok(AggregabilityReport {
        target: xbar_target.to_vec(),
        states,
        aggregate_velocities: velocities,
        spread,
    })
}

/// Moves mass `eps` from strategy `t` to `s` at node `a` and back at node
/// `b`, keeping every row in the simplex and the aggregate unchanged.
fn mass_swap(
    base: &ConditionalState,
    grid: &TypeGrid,
    rng: &mut ChaCha8Rng,
) -> Option<ConditionalState> {
    let (k, n) = (base.nodes(), base.strategies());
    let a = rng.gen_range(0..k);
    let b = (a + rng.gen_range(1..k)) % k;
    let s = rng.gen_range(0..n);
    let t = (s + rng.gen_range(1..n)) % n;
    let (wa, wb) = (grid.weight(a), grid.weight(b));
    // Limits from x_a,t >= 0, x_a,s <= 1, x_b,s >= 0, x_b,t <= 1.
    let cap = (base.row(a)[t] * wa)
        .min((1.0 - base.row(a)[s]) * wa)
        .min(base.row(b)[s] * wb)
        .min((1.0 - base.row(b)[t]) * wb);
    if cap <= 1e-12 {
        return None;
    }
    let eps = cap * rng.gen_range(0.2..1.0);
    let mut rows = base.rows().clone();
    rows.row_mut(a)[s] += eps / wa;
    rows.row_mut(a)[t] -= eps / wa;
    rows.row_mut(b)[s] -= eps / wb;
    rows.row_mut(b)[t] += eps / wb;
    for k in [a, b] {
        let row = rows.row_mut(k);
        row.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    ConditionalState::new(rows).ok()
}
