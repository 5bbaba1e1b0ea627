//! Potential functions of heterogeneous potential games and the checks that
//! tie them to the payoffs and the dynamics.
//!
//! A potential `f` on grid states satisfies
//! `f(x') = f(x) + sum_k w_k pi_k . (x'_k - x_k) + o(|x' - x|)`,
//! so `pi` is its gradient with respect to the grid inner product.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::games::{
    families::dot,
    payoff_profile, CommonPayoff, GameSpec, IdiosyncraticMap, Kernel, PairMatrix,
    TwoPopulationPayoff, SYMMETRY_TOL,
};
use crate::protocols::random_simplex_point;
use crate::typegrid::{aggregate, ConditionalState, DeltaState, Rows, TypeGrid};

/// Slack allowed per step when judging a series nondecreasing.
pub const MONOTONE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    /// `f0(xbar) + sum_k w_k theta_k . x_k`
    Asag {
        common: CommonPayoff,
        idiosyncratic: IdiosyncraticMap,
    },
    /// Total unpriced payoff of an aggregate game; the potential of the
    /// Pigouvian-priced game.
    Welfare {
        common: CommonPayoff,
        idiosyncratic: IdiosyncraticMap,
    },
    /// `0.5 sum_k sum_l w_k w_l x_k . U0(theta_k, theta_l) x_l`
    RandomMatching { u0: PairMatrix },
    /// `0.5 sum_k sum_l w_k w_l f0(x_k, x_l) g(theta_k, theta_l)`
    Structured {
        base: TwoPopulationPayoff,
        kernel: Kernel,
    },
}

impl PotentialSpec {
    /// Potential of `game`, after checking on every node pair of `grid` the
    /// symmetry conditions that make it one.
    pub fn from_game(game: &GameSpec, grid: &TypeGrid) -> Result<Self> {
        let asym = game.potential_asymmetry(grid);
        if asym > SYMMETRY_TOL {
            return Err(Error::SymmetryViolation(format!(
                "largest asymmetry {asym:.3e} exceeds {SYMMETRY_TOL:.0e}"
            )));
        }
        Ok(match game {
            GameSpec::Asag(g) if g.pricing => PotentialSpec::Welfare {
                common: g.common.clone(),
                idiosyncratic: g.idiosyncratic.clone(),
            },
            GameSpec::Asag(g) => PotentialSpec::Asag {
                common: g.common.clone(),
                idiosyncratic: g.idiosyncratic.clone(),
            },
            GameSpec::RandomMatching(g) => PotentialSpec::RandomMatching { u0: g.u0.clone() },
            GameSpec::Structured(g) => PotentialSpec::Structured {
                base: g.base.clone(),
                kernel: g.kernel.clone(),
            },
        })
    }

    pub fn value(&self, state: &ConditionalState, grid: &TypeGrid) -> Result<f64> {
        grid.check_nodes(state.nodes(), "potential")?;
        let w = grid.weights();
        let v = match self {
            PotentialSpec::Asag {
                common,
                idiosyncratic,
            } => {
                let xbar = aggregate(state, grid)?;
                common.potential(&xbar) + idiosyncratic_term(idiosyncratic, state, grid)
            }
            PotentialSpec::Welfare {
                common,
                idiosyncratic,
            } => {
                let xbar = aggregate(state, grid)?;
                dot(&common.eval(&xbar), &xbar) + idiosyncratic_term(idiosyncratic, state, grid)
            }
            PotentialSpec::RandomMatching { u0 } => {
                let s = state.strategies();
                let mut m = vec![0.0; s * s];
                let mut total = 0.0;
                for k in 0..grid.len() {
                    let tk = grid.node(k)[0];
                    let xk = state.row(k);
                    let mut inner = 0.0;
                    for l in 0..grid.len() {
                        u0.eval_into(tk, grid.node(l)[0], &mut m);
                        let xl = state.row(l);
                        let mut q = 0.0;
                        for i in 0..s {
                            q += xk[i] * dot(&m[i * s..(i + 1) * s], xl);
                        }
                        inner += w[l] * q;
                    }
                    total += w[k] * inner;
                }
                0.5 * total
            }
            PotentialSpec::Structured { base, kernel } => {
                let mut total = 0.0;
                for k in 0..grid.len() {
                    let mut inner = 0.0;
                    for l in 0..grid.len() {
                        inner += w[l]
                            * kernel.eval(grid.node(k), grid.node(l))
                            * base.potential(state.row(k), state.row(l));
                    }
                    total += w[k] * inner;
                }
                0.5 * total
            }
        };
        if !v.is_finite() {
            return Err(Error::NonFinite("potential".into()));
        }
        Ok(v)
    }
}

fn idiosyncratic_term(map: &IdiosyncraticMap, state: &ConditionalState, grid: &TypeGrid) -> f64 {
    grid.nodes()
        .iter()
        .zip(grid.weights())
        .enumerate()
        .map(|(k, (t, w))| w * dot(&map.apply(t), state.row(k)))
        .sum()
}

pub fn potential_value(pspec: &PotentialSpec, state: &ConditionalState, grid: &TypeGrid) -> Result<f64> {
    pspec.value(state, grid)
}

/// Total unpriced payoff `sum_k w_k (F0(xbar) + theta_k) . x_k` of an aggregate game.
pub fn welfare(game: &GameSpec, state: &ConditionalState, grid: &TypeGrid) -> Result<f64> {
    match game {
        GameSpec::Asag(g) => PotentialSpec::Welfare {
            common: g.common.clone(),
            idiosyncratic: g.idiosyncratic.clone(),
        }
        .value(state, grid),
        _ => Err(Error::UnsupportedGame(
            "welfare is defined for additively separable aggregate games".into(),
        )),
    }
}

fn shifted(state: &ConditionalState, direction: &DeltaState, h: f64) -> Result<ConditionalState> {
    const SLACK: f64 = 1e-15;
    let rows = state.rows().axpy(h, direction.rows());
    if let Some(v) = rows.as_slice().iter().find(|v| **v < -SLACK || **v > 1.0 + SLACK) {
        return Err(Error::InfeasiblePerturbation(format!(
            "step {h} leaves [0, 1] (entry {v})"
        )));
    }
    let mut clamped = rows;
    clamped.as_mut_slice().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    ConditionalState::new(clamped)
}

/// Relative error between the central difference of the potential along
/// `direction` and the payoff inner product `sum_k w_k pi_k . direction_k`.
pub fn gradient_check(
    pspec: &PotentialSpec,
    game: &GameSpec,
    state: &ConditionalState,
    direction: &DeltaState,
    h: f64,
    grid: &TypeGrid,
) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::param("h", format!("must be positive, got {h}")));
    }
    if direction.nodes() != state.nodes() || direction.strategies() != state.strategies() {
        return Err(Error::DimensionMismatch {
            context: "gradient direction",
            expected: state.nodes() * state.strategies(),
            actual: direction.nodes() * direction.strategies(),
        });
    }
    let up = shifted(state, direction, h)?;
    let down = shifted(state, direction, -h)?;
    let fd = (pspec.value(&up, grid)? - pspec.value(&down, grid)?) / (2.0 * h);
    let pi = payoff_profile(game, state, grid)?;
    let exact: f64 = (0..grid.len())
        .map(|k| grid.weight(k) * dot(pi.row(k), direction.row(k)))
        .sum();
    Ok((fd - exact).abs() / exact.abs().max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub values: Vec<f64>,
    /// No sample falls below its predecessor by more than the slack.
    pub monotone: bool,
    /// Largest decrease between consecutive samples (0 if none).
    pub worst_drop: f64,
    /// `reference - f(t_end)`, when a reference maximum was supplied.
    pub terminal_gap: Option<f64>,
}

/// Largest decrease between consecutive entries of `series`.
pub fn worst_drop(series: &[f64]) -> f64 {
    series
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0, f64::max)
}

/// Potential along the sampled states of a trajectory.
pub fn lyapunov_series(
    pspec: &PotentialSpec,
    trajectory: &Trajectory,
    grid: &TypeGrid,
    reference: Option<f64>,
) -> Result<LyapunovReport> {
    let values = trajectory
        .states
        .iter()
        .map(|s| pspec.value(s, grid))
        .collect::<Result<Vec<_>>>()?;
    let drop = worst_drop(&values);
    Ok(LyapunovReport {
        monotone: drop <= MONOTONE_SLACK,
        worst_drop: drop,
        terminal_gap: reference.zip(values.last()).map(|(r, v)| r - v),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalMaxReport {
    pub directions: usize,
    /// Largest first-order rate of change of the potential over the sampled
    /// feasible directions.
    pub max_directional_derivative: f64,
}

/// First-order local maximality of a state: samples directions `y - x`
/// towards seeded random states `y` and reports the largest
/// `sum_k w_k pi_k . (y_k - x_k)`.
pub fn local_max_check(
    game: &GameSpec,
    state: &ConditionalState,
    grid: &TypeGrid,
    directions: usize,
    seed: u64,
) -> Result<LocalMaxReport> {
    let pi = payoff_profile(game, state, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = state.strategies();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..directions {
        let mut d = 0.0;
        for k in 0..grid.len() {
            let y = random_simplex_point(&mut rng, s);
            let step: Vec<f64> = y.iter().zip(state.row(k)).map(|(a, b)| a - b).collect();
            d += grid.weight(k) * dot(pi.row(k), &step);
        }
        worst = worst.max(d);
    }
    Ok(LocalMaxReport {
        directions,
        max_directional_derivative: worst,
    })
}

/// Seeded direction `y - x` with `y` a random state, scaled so that
/// `x +- h * direction` stays in `[0, 1]`.
pub fn feasible_direction(
    state: &ConditionalState,
    h: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DeltaState> {
    let (k, s) = (state.nodes(), state.strategies());
    let mut rows = Rows::zeros(k, s);
    for node in 0..k {
        let y = random_simplex_point(rng, s);
        for (r, (a, b)) in rows.row_mut(node).iter_mut().zip(y.iter().zip(state.row(node))) {
            *r = a - b;
        }
    }
    // Backward room: x - h d >= 0 and <= 1 needs |d| bounded by the distance
    // to the faces.
    let mut scale = 1.0_f64;
    for (d, x) in rows.as_slice().iter().zip(state.rows().as_slice()) {
        if d.abs() > 0.0 {
            scale = scale.min(x.min(1.0 - x) / (h * d.abs()));
        }
    }
    if scale <= 0.0 {
        return Err(Error::InfeasiblePerturbation(
            "state touches the boundary; no two-sided direction".into(),
        ));
    }
    let scale = scale.min(1.0);
    DeltaState::new(rows.scaled(scale))
}
