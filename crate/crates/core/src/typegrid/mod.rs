//! Quadrature discretization of the type distribution.
//!
//! A [`TypeGrid`] stands in for the probability space of persistent agent
//! types: a finite set of nodes in `R^d` with positive weights summing to one.
//! Distributions over strategies and types are then represented by a
//! [`ConditionalState`], the per-node strategy mixture, whose weighted sum
//! gives the aggregate strategy distribution.

pub mod quadrature;
mod state;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use state::{ConditionalState, DeltaState, Rows, SIMPLEX_TOL};
pub(crate) use state::simplex_deviation;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A scalar or vector type point in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Point {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            Point::Scalar(v) => vec![*v],
            Point::Vector(v) => v.clone(),
        }
    }
}

/// Description of the type distribution to discretize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistSpec {
    /// Piecewise uniform on one or more intervals. Piece masses default to
    /// proportional-to-length. Discretized by the midpoint rule.
    Uniform {
        intervals: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        masses: Option<Vec<f64>>,
    },
    /// Finitely many atoms. The node count is ignored.
    Discrete {
        points: Vec<Point>,
        masses: Vec<f64>,
    },
    /// Normal distribution, discretized by Gauss–Hermite.
    Gaussian { mean: f64, stdev: f64 },
    /// Independent marginals; `n_nodes` applies per axis.
    Product { marginals: Vec<DistSpec> },
}

/// Quadrature nodes and weights for the type distribution. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeGrid {
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TypeGrid {
    /// Builds a grid from explicit nodes and positive weights; weights are
    /// normalized to sum to one.
    pub fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidDistribution("grid has no nodes".into()));
        }
        if nodes.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "grid weights",
                expected: nodes.len(),
                actual: weights.len(),
            });
        }
        let dim = nodes[0].len();
        if dim == 0 {
            return Err(Error::InvalidDistribution("type points have dimension 0".into()));
        }
        for (k, node) in nodes.iter().enumerate() {
            if node.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "type point dimension",
                    expected: dim,
                    actual: node.len(),
                });
            }
            if node.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDistribution(format!("node {k} is not finite")));
            }
        }
        if let Some(k) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "mass {} at node {k} is not positive",
                weights[k]
            )));
        }
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| {
            nodes[a]
                .iter()
                .zip(&nodes[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if let Some(pair) = order.windows(2).find(|p| nodes[p[0]] == nodes[p[1]]) {
            return Err(Error::InvalidDistribution(format!(
                "nodes {} and {} coincide",
                pair[0], pair[1]
            )));
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() <= WEIGHT_SUM_TOL);
        Ok(TypeGrid { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub(crate) fn check_nodes(&self, rows: usize, context: &'static str) -> Result<()> {
        if rows != self.len() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.len(),
                actual: rows,
            });
        }
        Ok(())
    }
}

/// Discretizes `dist` into a quadrature grid.
pub fn build_grid(dist: &DistSpec, n_nodes: usize) -> Result<TypeGrid> {
    if n_nodes == 0 {
        return Err(Error::InvalidDistribution("n_nodes must be positive".into()));
    }
    let (nodes, weights) = discretize(dist, n_nodes)?;
    TypeGrid::new(nodes, weights)
}

type Rule = (Vec<Vec<f64>>, Vec<f64>);

fn discretize(dist: &DistSpec, n: usize) -> Result<Rule> {
    match dist {
        DistSpec::Uniform { intervals, masses } => uniform_rule(intervals, masses.as_deref(), n),
        DistSpec::Discrete { points, masses } => {
            if points.is_empty() {
                return Err(Error::InvalidDistribution("no atoms".into()));
            }
            if points.len() != masses.len() {
                return Err(Error::DimensionMismatch {
                    context: "discrete masses",
                    expected: points.len(),
                    actual: masses.len(),
                });
            }
            check_masses(masses)?;
            Ok((points.iter().map(Point::to_vec).collect(), masses.clone()))
        }
        DistSpec::Gaussian { mean, stdev } => {
            if !(stdev.is_finite() && *stdev > 0.0) || !mean.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "gaussian needs finite mean and positive stdev, got ({mean}, {stdev})"
                )));
            }
            let (z, w) = quadrature::gauss_hermite(n);
            let nodes = z
                .iter()
                .map(|z| vec![mean + 2f64.sqrt() * stdev * z])
                .collect();
            let weights = w.iter().map(|w| w / PI.sqrt()).collect();
            Ok((nodes, weights))
        }
        DistSpec::Product { marginals } => {
            if marginals.is_empty() {
                return Err(Error::InvalidDistribution("product has no marginals".into()));
            }
            let mut acc: Rule = (vec![Vec::new()], vec![1.0]);
            for marginal in marginals {
                let (mn, mw) = discretize(marginal, n)?;
                let mut nodes = Vec::with_capacity(acc.0.len() * mn.len());
                let mut weights = Vec::with_capacity(nodes.capacity());
                for (an, aw) in acc.0.iter().zip(&acc.1) {
                    for (bn, bw) in mn.iter().zip(&mw) {
                        let mut p = an.clone();
                        p.extend_from_slice(bn);
                        nodes.push(p);
                        weights.push(aw * bw);
                    }
                }
                acc = (nodes, weights);
            }
            Ok(acc)
        }
    }
}

fn check_masses(masses: &[f64]) -> Result<()> {
    match masses.iter().position(|m| !(m.is_finite() && *m > 0.0)) {
        Some(i) => Err(Error::InvalidDistribution(format!(
            "mass {} at index {i} is not positive",
            masses[i]
        ))),
        None => Ok(()),
    }
}

fn uniform_rule(intervals: &[[f64; 2]], masses: Option<&[f64]>, n: usize) -> Result<Rule> {
    if intervals.is_empty() {
        return Err(Error::InvalidDistribution("uniform has no intervals".into()));
    }
    for [lo, hi] in intervals {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "midpoint rule needs bounded support, got [{lo}, {hi}]"
            )));
        }
        if hi <= lo {
            return Err(Error::InvalidDistribution(format!("empty interval [{lo}, {hi}]")));
        }
    }
    let masses: Vec<f64> = match masses {
        Some(m) => {
            if m.len() != intervals.len() {
                return Err(Error::DimensionMismatch {
                    context: "uniform piece masses",
                    expected: intervals.len(),
                    actual: m.len(),
                });
            }
            check_masses(m)?;
            m.to_vec()
        }
        None => intervals.iter().map(|[lo, hi]| hi - lo).collect(),
    };
    if n < intervals.len() {
        return Err(Error::InvalidDistribution(format!(
            "{n} nodes cannot cover {} uniform pieces",
            intervals.len()
        )));
    }
    let counts = allocate_nodes(&masses, n);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for ([lo, hi], (&mass, &count)) in intervals.iter().zip(masses.iter().zip(&counts)) {
        let h = (hi - lo) / count as f64;
        for i in 0..count {
            nodes.push(vec![lo + (i as f64 + 0.5) * h]);
            weights.push(mass / count as f64);
        }
    }
    Ok((nodes, weights))
}

/// Largest-remainder allocation of `n` nodes to pieces in proportion to
/// their masses, at least one node per piece.
fn allocate_nodes(masses: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = masses.iter().sum();
    let spare = n - masses.len();
    let ideal: Vec<f64> = masses.iter().map(|m| m / total * spare as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|v| 1 + v.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Aggregate strategy distribution: the grid-weighted mean of the node mixtures.
pub fn aggregate(state: &ConditionalState, grid: &TypeGrid) -> Result<Vec<f64>> {
    grid.check_nodes(state.nodes(), "aggregate")?;
    Ok(weighted_row_sum(state.rows(), grid))
}

pub(crate) fn weighted_row_sum(rows: &Rows, grid: &TypeGrid) -> Vec<f64> {
    let mut out = vec![0.0; rows.ncols()];
    for (row, w) in rows.iter_rows().zip(grid.weights()) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += w * v;
        }
    }
    out
}

/// Variational norm of a grid-supported signed measure: the weighted L1 norm
/// `sum_k w_k sum_s |m_ks|` of its density.
pub fn variational_norm(delta: &DeltaState, grid: &TypeGrid) -> Result<f64> {
    grid.check_nodes(delta.nodes(), "variational norm")?;
    Ok(weighted_l1(delta.rows(), grid))
}

pub(crate) fn weighted_l1(rows: &Rows, grid: &TypeGrid) -> f64 {
    rows.iter_rows()
        .zip(grid.weights())
        .map(|(row, w)| w * row.iter().map(|v| v.abs()).sum::<f64>())
        .sum()
}
