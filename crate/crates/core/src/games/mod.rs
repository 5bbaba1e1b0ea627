//! Heterogeneous population games on a type grid.
//!
//! Three classes are supported:
//!
//! * additively separable aggregate games (ASAG): `F[X](theta) = F0(xbar) + theta`,
//!   where `theta` enters through an [`IdiosyncraticMap`];
//! * random matching with type-dependent payoff matrices
//!   `F[X](theta) = sum_l w_l U(theta, theta_l) x_l`;
//! * structured populations with an interaction kernel
//!   `F[X](theta) = sum_l w_l g(theta, theta_l) F0(x(theta), x_l)`.
//!
//! Payoff functions come from closed-form families (see [`families`]) so that
//! a scenario file describes a game completely.

pub mod families;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::typegrid::{aggregate, ConditionalState, Rows, TypeGrid};

pub use families::{
    CommonPayoff, IdiosyncraticMap, Kernel, Matrix, PairMatrix, PairVector, ScalarProfile,
    TwoPopulationPayoff,
};

/// Default tolerance for treating two payoffs as tied.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;
/// Step used for finite-difference Jacobians of the common payoff.
pub const DEFAULT_FD_STEP: f64 = 1e-6;
/// Largest number of `U(theta_k, theta_l)` entries cached by an evaluator.
pub const DEFAULT_CACHE_ENTRIES: usize = 1 << 22;
/// Tolerance for the symmetry conditions behind potentials.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsagGame {
    pub strategies: usize,
    pub common: CommonPayoff,
    #[serde(default)]
    pub idiosyncratic: IdiosyncraticMap,
    /// Subtract the dynamic Pigouvian price from every payoff row.
    #[serde(default)]
    pub pricing: bool,
}

/// Random matching with `U(theta, theta') = U0(theta, theta') + 1 r(theta, theta')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingGame {
    pub strategies: usize,
    pub u0: PairMatrix,
    /// Own-strategy-independent part `r`; adds `r_{s'}` to every `u_{s s'}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<PairVector>,
}

impl MatchingGame {
    /// Full matrix `U(t, u)` as a row-major `S x S` block.
    pub fn u_into(&self, t: f64, u: f64, out: &mut [f64]) {
        self.u0.eval_into(t, u, out);
        if let Some(r) = &self.r {
            let rv = r.eval(t, u);
            let s = self.strategies;
            for i in 0..s {
                for j in 0..s {
                    out[i * s + j] += rv[j];
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredGame {
    pub strategies: usize,
    pub base: TwoPopulationPayoff,
    pub kernel: Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum GameSpec {
    Asag(AsagGame),
    RandomMatching(MatchingGame),
    Structured(StructuredGame),
}

/// Payoff vector of every type node; row `k` is `F[X](theta_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffProfile(Rows);

impl PayoffProfile {
    pub fn new(rows: Rows) -> Result<Self> {
        if !rows.is_finite() {
            return Err(Error::NonFinite("payoff profile".into()));
        }
        Ok(PayoffProfile(rows))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Rows::from_rows(rows)?)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.0.row(k)
    }

    pub fn rows(&self) -> &Rows {
        &self.0
    }

    pub fn nodes(&self) -> usize {
        self.0.nrows()
    }
}

impl GameSpec {
    pub fn strategies(&self) -> usize {
        match self {
            GameSpec::Asag(g) => g.strategies,
            GameSpec::RandomMatching(g) => g.strategies,
            GameSpec::Structured(g) => g.strategies,
        }
    }

    pub fn is_asag(&self) -> bool {
        matches!(self, GameSpec::Asag(_))
    }

    /// Structural validation; every problem is reported as `path: message`.
    /// `type_dim` is the dimension of the grid's type points, if known.
    pub fn validate(&self, type_dim: Option<usize>, path: &str) -> Vec<String> {
        let mut errs = Vec::new();
        let s = self.strategies();
        if s == 0 {
            errs.push(format!("{path}.strategies: must be positive"));
            return errs;
        }
        match self {
            GameSpec::Asag(g) => {
                g.common.validate(s, &format!("{path}.common"), &mut errs);
                g.idiosyncratic
                    .validate(s, &format!("{path}.idiosyncratic"), &mut errs);
                if let Some(d) = type_dim {
                    let need = g.idiosyncratic.input_dim().unwrap_or(s);
                    if need != d {
                        errs.push(format!(
                            "{path}.idiosyncratic: expects type points of dimension {need}, grid has {d}"
                        ));
                    }
                }
            }
            GameSpec::RandomMatching(g) => {
                g.u0.validate(s, &format!("{path}.u0"), &mut errs);
                if let Some(r) = &g.r {
                    r.validate(s, &format!("{path}.r"), &mut errs);
                }
            }
            GameSpec::Structured(g) => {
                g.base.validate(s, &format!("{path}.base"), &mut errs);
                g.kernel.validate(&format!("{path}.kernel"), &mut errs);
            }
        }
        errs
    }

    pub(crate) fn check(&self, grid: &TypeGrid) -> Result<()> {
        let errs = self.validate(Some(grid.dim()), "game");
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::param("game", errs.join("; ")))
        }
    }

    pub fn evaluator<'a>(&'a self, grid: &'a TypeGrid) -> Result<GameEvaluator<'a>> {
        GameEvaluator::new(self, grid, DEFAULT_CACHE_ENTRIES)
    }

    /// Worst violation over all node pairs of the symmetry conditions that
    /// make the game a potential game (0 for ASAG).
    pub fn potential_asymmetry(&self, grid: &TypeGrid) -> f64 {
        match self {
            GameSpec::Asag(g) => match &g.common {
                CommonPayoff::Linear { a, .. } => families::max_asymmetry(a),
                _ => 0.0,
            },
            GameSpec::RandomMatching(g) => {
                let s = g.strategies;
                let mut a = vec![0.0; s * s];
                let mut b = vec![0.0; s * s];
                let mut worst = 0.0_f64;
                for (k, tk) in grid.nodes().iter().enumerate() {
                    for tl in &grid.nodes()[k..] {
                        g.u0.eval_into(tk[0], tl[0], &mut a);
                        g.u0.eval_into(tl[0], tk[0], &mut b);
                        for i in 0..s {
                            for j in 0..s {
                                worst = worst
                                    .max((a[i * s + j] - a[j * s + i]).abs())
                                    .max((a[i * s + j] - b[i * s + j]).abs());
                            }
                        }
                    }
                }
                worst
            }
            GameSpec::Structured(g) => {
                let mut worst = families::max_asymmetry(&g.base.cross);
                if let Some(own) = &g.base.own {
                    worst = worst.max(families::max_asymmetry(own));
                }
                for (k, a) in grid.nodes().iter().enumerate() {
                    for b in &grid.nodes()[k + 1..] {
                        worst = worst.max((g.kernel.eval(a, b) - g.kernel.eval(b, a)).abs());
                    }
                }
                worst
            }
        }
    }
}

/// A game bound to a grid, with per-node quantities precomputed.
pub struct GameEvaluator<'a> {
    game: &'a GameSpec,
    grid: &'a TypeGrid,
    /// ASAG: idiosyncratic payoff vector per node.
    idio: Vec<Vec<f64>>,
    /// Random matching: `w_l U(theta_k, theta_l)` blocks, `K*K*S*S`, when within the cap.
    pair_cache: Option<Vec<f64>>,
    /// Structured: `w_l g(theta_k, theta_l)`, `K*K`.
    kernel: Vec<f64>,
}

impl<'a> GameEvaluator<'a> {
    pub fn new(game: &'a GameSpec, grid: &'a TypeGrid, cache_entries: usize) -> Result<Self> {
        game.check(grid)?;
        let k = grid.len();
        let mut ev = GameEvaluator {
            game,
            grid,
            idio: Vec::new(),
            pair_cache: None,
            kernel: Vec::new(),
        };
        match game {
            GameSpec::Asag(g) => {
                ev.idio = grid.nodes().iter().map(|t| g.idiosyncratic.apply(t)).collect();
                if let Some(i) = ev.idio.iter().position(|v| v.iter().any(|x| !x.is_finite())) {
                    return Err(Error::NonFinite(format!("idiosyncratic payoff of node {i}")));
                }
            }
            GameSpec::RandomMatching(g) => {
                let s = g.strategies;
                if k * k * s * s <= cache_entries {
                    let mut cache = vec![0.0; k * k * s * s];
                    for (a, ta) in grid.nodes().iter().enumerate() {
                        for (b, tb) in grid.nodes().iter().enumerate() {
                            let block = &mut cache[(a * k + b) * s * s..(a * k + b + 1) * s * s];
                            g.u_into(ta[0], tb[0], block);
                            let w = grid.weight(b);
                            block.iter_mut().for_each(|v| *v *= w);
                        }
                    }
                    if cache.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("matching payoff matrix".into()));
                    }
                    ev.pair_cache = Some(cache);
                }
            }
            GameSpec::Structured(g) => {
                ev.kernel = Vec::with_capacity(k * k);
                for a in grid.nodes() {
                    for (b, tb) in grid.nodes().iter().enumerate() {
                        ev.kernel.push(grid.weight(b) * g.kernel.eval(a, tb));
                    }
                }
                if ev.kernel.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("interaction kernel".into()));
                }
            }
        }
        Ok(ev)
    }

    pub fn game(&self) -> &GameSpec {
        self.game
    }

    pub fn grid(&self) -> &TypeGrid {
        self.grid
    }

    pub fn has_pair_cache(&self) -> bool {
        self.pair_cache.is_some()
    }

    pub fn payoffs(&self, state: &ConditionalState) -> Result<PayoffProfile> {
        let k = self.grid.len();
        let s = self.game.strategies();
        self.grid.check_nodes(state.nodes(), "payoff profile")?;
        if state.strategies() != s {
            return Err(Error::DimensionMismatch {
                context: "payoff profile strategies",
                expected: s,
                actual: state.strategies(),
            });
        }
        let mut out = Rows::zeros(k, s);
        match self.game {
            GameSpec::Asag(g) => {
                let xbar = aggregate(state, self.grid)?;
                let mut common = g.common.eval(&xbar);
                if g.pricing {
                    let t = pigou_prices(&g.common, &xbar, DEFAULT_FD_STEP)?;
                    for (c, p) in common.iter_mut().zip(&t) {
                        *c -= p;
                    }
                }
                for (node, idio) in self.idio.iter().enumerate() {
                    for ((o, c), i) in out.row_mut(node).iter_mut().zip(&common).zip(idio) {
                        *o = c + i;
                    }
                }
            }
            GameSpec::RandomMatching(g) => {
                let mut block = vec![0.0; s * s];
                for a in 0..k {
                    let row = out.row_mut(a);
                    for b in 0..k {
                        let u: &[f64] = match &self.pair_cache {
                            Some(cache) => &cache[(a * k + b) * s * s..(a * k + b + 1) * s * s],
                            None => {
                                g.u_into(self.grid.node(a)[0], self.grid.node(b)[0], &mut block);
                                let w = self.grid.weight(b);
                                block.iter_mut().for_each(|v| *v *= w);
                                &block
                            }
                        };
                        let xb = state.row(b);
                        for i in 0..s {
                            row[i] += families::dot(&u[i * s..(i + 1) * s], xb);
                        }
                    }
                }
            }
            GameSpec::Structured(g) => {
                // F0 is affine in the opponent mixture, so the kernel sum
                // factors through the kernel-weighted mean opponent mixture.
                let mut opp = vec![0.0; s];
                let mut scratch = vec![0.0; s];
                for a in 0..k {
                    opp.iter_mut().for_each(|v| *v = 0.0);
                    let mut mass = 0.0;
                    for b in 0..k {
                        let gw = self.kernel[a * k + b];
                        mass += gw;
                        for (o, x) in opp.iter_mut().zip(state.row(b)) {
                            *o += gw * x;
                        }
                    }
                    let xa = state.row(a);
                    let zero = vec![0.0; s];
                    g.base.eval_into(xa, &zero, &mut scratch);
                    let cross = families::mat_vec(&g.base.cross, &opp);
                    for ((o, c), own) in out.row_mut(a).iter_mut().zip(&cross).zip(&scratch) {
                        *o = c + mass * own;
                    }
                }
            }
        }
        PayoffProfile::new(out)
    }
}

/// `F[X](theta_k)` for every node.
pub fn payoff_profile(
    game: &GameSpec,
    state: &ConditionalState,
    grid: &TypeGrid,
) -> Result<PayoffProfile> {
    game.evaluator(grid)?.payoffs(state)
}

/// Strategies within `tie_tol` of the row maximum, in increasing index order.
pub fn best_response_set(payoffs: &[f64], tie_tol: f64) -> Vec<usize> {
    let max = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    payoffs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= max - tie_tol)
        .map(|(s, _)| s)
        .collect()
}

/// Lowest-index member of the best-response set.
pub fn lowest_best_response(payoffs: &[f64], tie_tol: f64) -> usize {
    let max = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    payoffs
        .iter()
        .position(|&p| p >= max - tie_tol)
        .unwrap_or(0)
}

pub fn best_response_sets(profile: &PayoffProfile, tie_tol: f64) -> Vec<Vec<usize>> {
    profile
        .rows()
        .iter_rows()
        .map(|row| best_response_set(row, tie_tol))
        .collect()
}

/// Central-difference Jacobian `J[s][s'] = dF0_s / dxbar_s'`.
pub fn finite_difference_jacobian(common: &CommonPayoff, xbar: &[f64], step: f64) -> Matrix {
    let n = xbar.len();
    let mut jac = vec![vec![0.0; n]; n];
    let mut probe = xbar.to_vec();
    for col in 0..n {
        probe[col] = xbar[col] + step;
        let up = common.eval(&probe);
        probe[col] = xbar[col] - step;
        let down = common.eval(&probe);
        probe[col] = xbar[col];
        for row in 0..n {
            jac[row][col] = (up[row] - down[row]) / (2.0 * step);
        }
    }
    jac
}

/// Dynamic Pigouvian price `T_s = -sum_s' xbar_s' dF0_s'/dxbar_s`.
///
/// Uses the family's analytic Jacobian when it has one, else central
/// differences with step `fd_step`.
pub fn pigou_prices(common: &CommonPayoff, xbar: &[f64], fd_step: f64) -> Result<Vec<f64>> {
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(Error::param("fd_step", format!("must be positive, got {fd_step}")));
    }
    let jac = common
        .jacobian(xbar)
        .unwrap_or_else(|| finite_difference_jacobian(common, xbar, fd_step));
    if jac.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("payoff Jacobian".into()));
    }
    let n = xbar.len();
    Ok((0..n)
        .map(|s| -(0..n).map(|sp| xbar[sp] * jac[sp][s]).sum::<f64>())
        .collect())
}

/// Returns the ASAG with Pigouvian pricing switched on or off.
pub fn apply_pricing(game: &GameSpec, enabled: bool) -> Result<GameSpec> {
    match game {
        GameSpec::Asag(g) => Ok(GameSpec::Asag(AsagGame {
            pricing: enabled,
            ..g.clone()
        })),
        _ => Err(Error::UnsupportedGame(
            "pricing applies to additively separable aggregate games only".into(),
        )),
    }
}
