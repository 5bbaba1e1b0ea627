use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for row sums of strategy mixtures.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Dense row-major `K x S` matrix: one row per type node, one column per strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rows {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Rows {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Rows {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row length",
                    expected: ncols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Rows {
            nrows: rows.len(),
            ncols,
            data,
        })
    }

    pub fn from_flat(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                context: "flat matrix length",
                expected: nrows * ncols,
                actual: data.len(),
            });
        }
        Ok(Rows { nrows, ncols, data })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.ncols..(k + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.ncols..(k + 1) * self.ncols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size.
        self.data.chunks_exact(self.ncols.max(1)).take(self.nrows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }

    /// `self + c * other`, elementwise.
    pub fn axpy(&self, c: f64, other: &Rows) -> Rows {
        debug_assert_eq!(self.data.len(), other.data.len());
        Rows {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Rows {
        Rows {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(|a| c * a).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn same_shape(&self, other: &Rows, context: &'static str) -> Result<()> {
        if self.nrows != other.nrows {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.nrows,
                actual: other.nrows,
            });
        }
        if self.ncols != other.ncols {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.ncols,
                actual: other.ncols,
            });
        }
        Ok(())
    }
}

/// Type-conditional strategy distribution: row `k` is the mixture played by
/// the agents of type node `k`. It is the density of the joint
/// strategy–type distribution with respect to the grid weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ConditionalState(Rows);

impl ConditionalState {
    pub fn new(rows: Rows) -> Result<Self> {
        if rows.ncols() == 0 {
            return Err(Error::InvalidState("no strategies".into()));
        }
        for (k, row) in rows.iter_rows().enumerate() {
            if let Some(s) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidState(format!(
                    "node {k}: entry {s} = {} is not a nonnegative number",
                    row[s]
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidState(format!(
                    "node {k}: row sums to {sum}, expected 1"
                )));
            }
        }
        Ok(ConditionalState(rows))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Rows::from_rows(rows)?)
    }

    /// Wraps a matrix without checking simplex membership. Used for the
    /// intermediate stages of an integrator step, which may leave the simplex
    /// by roundoff-sized amounts.
    pub(crate) fn new_unchecked(rows: Rows) -> Self {
        ConditionalState(rows)
    }

    /// Every node plays the same mixture.
    pub fn uniform_rows(nodes: usize, mix: &[f64]) -> Result<Self> {
        let mut rows = Rows::zeros(nodes, mix.len());
        for k in 0..nodes {
            rows.row_mut(k).copy_from_slice(mix);
        }
        Self::new(rows)
    }

    /// Every node mixes uniformly over all strategies.
    pub fn barycenter(nodes: usize, strategies: usize) -> Self {
        let mix = vec![1.0 / strategies as f64; strategies];
        Self::uniform_rows(nodes, &mix).expect("barycenter is in the simplex")
    }

    /// Every node plays strategy `s`.
    pub fn pure(nodes: usize, strategies: usize, s: usize) -> Result<Self> {
        if s >= strategies {
            return Err(Error::param(
                "strategy",
                format!("index {s} out of range for {strategies} strategies"),
            ));
        }
        let mut mix = vec![0.0; strategies];
        mix[s] = 1.0;
        Self::uniform_rows(nodes, &mix)
    }

    pub fn nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn strategies(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.0.row(k)
    }

    pub fn rows(&self) -> &Rows {
        &self.0
    }

    pub fn into_rows(self) -> Rows {
        self.0
    }

    pub fn difference(&self, other: &ConditionalState) -> Result<DeltaState> {
        self.0.same_shape(&other.0, "state difference")?;
        Ok(DeltaState(self.0.axpy(-1.0, &other.0)))
    }

    /// Largest deviation of any row from the simplex: the max over rows of
    /// `|sum - 1|` and of the magnitude of any negative entry.
    pub fn simplex_deviation(&self) -> f64 {
        simplex_deviation(&self.0)
    }
}

pub(crate) fn simplex_deviation(rows: &Rows) -> f64 {
    rows.iter_rows()
        .map(|row| {
            let sum: f64 = row.iter().sum();
            let neg = row.iter().fold(0.0_f64, |m, v| m.max(-v));
            (sum - 1.0).abs().max(neg)
        })
        .fold(0.0, f64::max)
}

impl TryFrom<Vec<Vec<f64>>> for ConditionalState {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<ConditionalState> for Vec<Vec<f64>> {
    fn from(state: ConditionalState) -> Self {
        state.0.to_nested()
    }
}

/// A direction in state space: rows sum to zero, entries may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaState(Rows);

impl DeltaState {
    pub fn new(rows: Rows) -> Result<Self> {
        if !rows.is_finite() {
            return Err(Error::NonFinite("direction".into()));
        }
        for (k, row) in rows.iter_rows().enumerate() {
            let sum: f64 = row.iter().sum();
            if sum.abs() > SIMPLEX_TOL {
                return Err(Error::InvalidState(format!(
                    "node {k}: direction row sums to {sum}, expected 0"
                )));
            }
        }
        Ok(DeltaState(rows))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Rows::from_rows(rows)?)
    }

    pub fn zeros(nodes: usize, strategies: usize) -> Self {
        DeltaState(Rows::zeros(nodes, strategies))
    }

    pub fn rows(&self) -> &Rows {
        &self.0
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.0.row(k)
    }

    pub fn nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn strategies(&self) -> usize {
        self.0.ncols()
    }

    pub fn scaled(&self, c: f64) -> DeltaState {
        DeltaState(self.0.scaled(c))
    }
}
