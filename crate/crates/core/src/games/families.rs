//! Closed-form payoff families that a scenario file can describe.

use serde::{Deserialize, Serialize};

use crate::typegrid::quadrature::integrate_legendre;

pub type Matrix = Vec<Vec<f64>>;

/// Points used for line integrals of profiles without a closed-form antiderivative.
pub const LINE_INTEGRAL_POINTS: usize = 64;

pub(crate) fn mat_vec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_matrix(m: &Matrix, rows: usize, cols: usize, path: &str, errs: &mut Vec<String>) {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        errs.push(format!("{path}: expected a {rows}x{cols} matrix"));
    } else if m.iter().flatten().any(|v| !v.is_finite()) {
        errs.push(format!("{path}: entries must be finite"));
    }
}

pub(crate) fn check_vector(v: &[f64], len: usize, path: &str, errs: &mut Vec<String>) {
    if v.len() != len {
        errs.push(format!("{path}: expected length {len}, got {}", v.len()));
    } else if v.iter().any(|x| !x.is_finite()) {
        errs.push(format!("{path}: entries must be finite"));
    }
}

pub(crate) fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.len();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[i][j] - m[j][i]).abs());
        }
    }
    worst
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn horner_derivative(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (j, c)| acc * x + j as f64 * c)
}

fn horner_antiderivative(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (j, c)| acc * x + c / (j + 1) as f64)
        * x
}

/// Scalar payoff of the "enter" strategy as a function of the entrant mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarProfile {
    /// `intercept + slope * y`
    Linear { intercept: f64, slope: f64 },
    /// `sum_j coefficients[j] * y^j`
    Polynomial { coefficients: Vec<f64> },
    /// Ratio of two polynomials in `y` (ascending coefficients). No analytic
    /// derivative or antiderivative is provided.
    Rational {
        numerator: Vec<f64>,
        denominator: Vec<f64>,
    },
}

impl ScalarProfile {
    pub fn value(&self, y: f64) -> f64 {
        match self {
            ScalarProfile::Linear { intercept, slope } => intercept + slope * y,
            ScalarProfile::Polynomial { coefficients } => horner(coefficients, y),
            ScalarProfile::Rational {
                numerator,
                denominator,
            } => horner(numerator, y) / horner(denominator, y),
        }
    }

    pub fn derivative(&self, y: f64) -> Option<f64> {
        match self {
            ScalarProfile::Linear { slope, .. } => Some(*slope),
            ScalarProfile::Polynomial { coefficients } => Some(horner_derivative(coefficients, y)),
            ScalarProfile::Rational { .. } => None,
        }
    }

    /// `int_0^y value(u) du`, in closed form where available.
    pub fn integral(&self, y: f64) -> f64 {
        match self {
            ScalarProfile::Linear { intercept, slope } => intercept * y + 0.5 * slope * y * y,
            ScalarProfile::Polynomial { coefficients } => horner_antiderivative(coefficients, y),
            ScalarProfile::Rational { .. } => {
                integrate_legendre(|u| self.value(u), 0.0, y, LINE_INTEGRAL_POINTS)
            }
        }
    }

    pub(crate) fn validate(&self, path: &str, errs: &mut Vec<String>) {
        match self {
            ScalarProfile::Linear { intercept, slope } => {
                if !intercept.is_finite() || !slope.is_finite() {
                    errs.push(format!("{path}: coefficients must be finite"));
                }
            }
            ScalarProfile::Polynomial { coefficients } => {
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    errs.push(format!("{path}.coefficients: need finite coefficients"));
                }
            }
            ScalarProfile::Rational {
                numerator,
                denominator,
            } => {
                if numerator.is_empty() || denominator.is_empty() {
                    errs.push(format!("{path}: numerator and denominator must be non-empty"));
                }
                // Sampled check that the profile is finite on [0, 1].
                if (0..=64).any(|i| !self.value(i as f64 / 64.0).is_finite()) {
                    errs.push(format!("{path}: profile is not finite on [0, 1]"));
                }
            }
        }
    }
}

/// Common payoff `F0(xbar)` shared by every type in an additively separable
/// aggregate game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommonPayoff {
    /// `F0 == 0`.
    Zero,
    /// `F0(xbar) = A xbar + b`.
    Linear { a: Matrix, b: Vec<f64> },
    /// Binary entry game, strategies `[in, out]`: `F0_in = profile(xbar_in)`, `F0_out = 0`.
    EntryExit { profile: ScalarProfile },
    /// `F0_s(xbar) = sum_j coefficients[s][j] * xbar_s^j`; each strategy's
    /// payoff depends only on its own mass (congestion form).
    Separable { coefficients: Matrix },
}

impl CommonPayoff {
    pub fn eval(&self, xbar: &[f64]) -> Vec<f64> {
        match self {
            CommonPayoff::Zero => vec![0.0; xbar.len()],
            CommonPayoff::Linear { a, b } => {
                let mut out = mat_vec(a, xbar);
                for (o, bi) in out.iter_mut().zip(b) {
                    *o += bi;
                }
                out
            }
            CommonPayoff::EntryExit { profile } => vec![profile.value(xbar[0]), 0.0],
            CommonPayoff::Separable { coefficients } => coefficients
                .iter()
                .zip(xbar)
                .map(|(c, &x)| horner(c, x))
                .collect(),
        }
    }

    /// Analytic Jacobian `J[s][s'] = dF0_s / dxbar_s'`, when the family has one.
    pub fn jacobian(&self, xbar: &[f64]) -> Option<Matrix> {
        let n = xbar.len();
        match self {
            CommonPayoff::Zero => Some(vec![vec![0.0; n]; n]),
            CommonPayoff::Linear { a, .. } => Some(a.clone()),
            CommonPayoff::EntryExit { profile } => {
                let d = profile.derivative(xbar[0])?;
                Some(vec![vec![d, 0.0], vec![0.0, 0.0]])
            }
            CommonPayoff::Separable { coefficients } => {
                let mut j = vec![vec![0.0; n]; n];
                for (s, (c, &x)) in coefficients.iter().zip(xbar).enumerate() {
                    j[s][s] = horner_derivative(c, x);
                }
                Some(j)
            }
        }
    }

    /// Potential `f0` with `grad f0 = F0`, when one exists for this family.
    /// Linear payoffs need a symmetric `A`; the caller checks that.
    pub fn potential(&self, xbar: &[f64]) -> f64 {
        match self {
            CommonPayoff::Zero => 0.0,
            CommonPayoff::Linear { a, b } => 0.5 * dot(xbar, &mat_vec(a, xbar)) + dot(b, xbar),
            CommonPayoff::EntryExit { profile } => profile.integral(xbar[0]),
            CommonPayoff::Separable { coefficients } => coefficients
                .iter()
                .zip(xbar)
                .map(|(c, &x)| horner_antiderivative(c, x))
                .sum(),
        }
    }

    pub(crate) fn validate(&self, strategies: usize, path: &str, errs: &mut Vec<String>) {
        match self {
            CommonPayoff::Zero => {}
            CommonPayoff::Linear { a, b } => {
                check_matrix(a, strategies, strategies, &format!("{path}.a"), errs);
                check_vector(b, strategies, &format!("{path}.b"), errs);
            }
            CommonPayoff::EntryExit { profile } => {
                if strategies != 2 {
                    errs.push(format!(
                        "{path}: entry_exit needs exactly 2 strategies, game declares {strategies}"
                    ));
                }
                profile.validate(&format!("{path}.profile"), errs);
            }
            CommonPayoff::Separable { coefficients } => {
                if coefficients.len() != strategies {
                    errs.push(format!(
                        "{path}.coefficients: expected {strategies} rows, got {}",
                        coefficients.len()
                    ));
                }
                if coefficients.iter().flatten().any(|c| !c.is_finite()) {
                    errs.push(format!("{path}.coefficients: entries must be finite"));
                }
            }
        }
    }
}

/// Map from a type point to the idiosyncratic payoff vector in `R^S`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IdiosyncraticMap {
    /// The type point is the payoff vector (`d == S`).
    #[default]
    Identity,
    /// `M theta + offset` with `M` of shape `S x d`.
    Linear {
        matrix: Matrix,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<Vec<f64>>,
    },
}

impl IdiosyncraticMap {
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            IdiosyncraticMap::Identity => theta.to_vec(),
            IdiosyncraticMap::Linear { matrix, offset } => {
                let mut out = mat_vec(matrix, theta);
                if let Some(off) = offset {
                    for (o, b) in out.iter_mut().zip(off) {
                        *o += b;
                    }
                }
                out
            }
        }
    }

    pub(crate) fn validate(&self, strategies: usize, path: &str, errs: &mut Vec<String>) {
        if let IdiosyncraticMap::Linear { matrix, offset } = self {
            let cols = matrix.first().map_or(0, Vec::len);
            check_matrix(matrix, strategies, cols, &format!("{path}.matrix"), errs);
            if let Some(off) = offset {
                check_vector(off, strategies, &format!("{path}.offset"), errs);
            }
        }
    }

    pub(crate) fn input_dim(&self) -> Option<usize> {
        match self {
            IdiosyncraticMap::Identity => None,
            IdiosyncraticMap::Linear { matrix, .. } => matrix.first().map(Vec::len),
        }
    }
}

/// Type-dependent `S x S` matrix `base + t*own + t'*other + t*t'*product`,
/// where `t`, `t'` are the first coordinates of the two type points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMatrix {
    pub base: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<Matrix>,
}

impl PairMatrix {
    pub fn eval_into(&self, t: f64, u: f64, out: &mut [f64]) {
        let s = self.base.len();
        for i in 0..s {
            for j in 0..s {
                let mut v = self.base[i][j];
                if let Some(m) = &self.own {
                    v += t * m[i][j];
                }
                if let Some(m) = &self.other {
                    v += u * m[i][j];
                }
                if let Some(m) = &self.product {
                    v += t * u * m[i][j];
                }
                out[i * s + j] = v;
            }
        }
    }

    pub fn eval(&self, t: f64, u: f64) -> Matrix {
        let s = self.base.len();
        let mut flat = vec![0.0; s * s];
        self.eval_into(t, u, &mut flat);
        flat.chunks(s).map(<[f64]>::to_vec).collect()
    }

    pub(crate) fn validate(&self, strategies: usize, path: &str, errs: &mut Vec<String>) {
        check_matrix(&self.base, strategies, strategies, &format!("{path}.base"), errs);
        for (name, m) in [("own", &self.own), ("other", &self.other), ("product", &self.product)] {
            if let Some(m) = m {
                check_matrix(m, strategies, strategies, &format!("{path}.{name}"), errs);
            }
        }
    }
}

/// Type-dependent row vector `base + t*own + t'*other`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVector {
    pub base: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<Vec<f64>>,
}

impl PairVector {
    pub fn eval(&self, t: f64, u: f64) -> Vec<f64> {
        (0..self.base.len())
            .map(|j| {
                self.base[j]
                    + self.own.as_ref().map_or(0.0, |o| t * o[j])
                    + self.other.as_ref().map_or(0.0, |o| u * o[j])
            })
            .collect()
    }

    pub(crate) fn validate(&self, strategies: usize, path: &str, errs: &mut Vec<String>) {
        check_vector(&self.base, strategies, &format!("{path}.base"), errs);
        for (name, v) in [("own", &self.own), ("other", &self.other)] {
            if let Some(v) = v {
                check_vector(v, strategies, &format!("{path}.{name}"), errs);
            }
        }
    }
}

/// Symmetric-or-not interaction weight between two subgroups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Constant { value: f64 },
    /// `scale * exp(-|theta - theta'|^2 / (2 bandwidth^2))`
    Gaussian { scale: f64, bandwidth: f64 },
    /// `constant + own*t + other*t' + product*t*t'` on first coordinates.
    Bilinear {
        constant: f64,
        #[serde(default)]
        own: f64,
        #[serde(default)]
        other: f64,
        #[serde(default)]
        product: f64,
    },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Constant { value } => *value,
            Kernel::Gaussian { scale, bandwidth } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                scale * (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
            Kernel::Bilinear {
                constant,
                own,
                other,
                product,
            } => constant + own * a[0] + other * b[0] + product * a[0] * b[0],
        }
    }

    pub(crate) fn validate(&self, path: &str, errs: &mut Vec<String>) {
        match self {
            Kernel::Constant { value } if !value.is_finite() => {
                errs.push(format!("{path}.value: must be finite"))
            }
            Kernel::Gaussian { scale, bandwidth } => {
                if !scale.is_finite() {
                    errs.push(format!("{path}.scale: must be finite"));
                }
                if !(bandwidth.is_finite() && *bandwidth > 0.0) {
                    errs.push(format!("{path}.bandwidth: must be positive, got {bandwidth}"));
                }
            }
            _ => {}
        }
    }
}

/// Two-population base game
/// `F0(x, x') = cross x' + own x + constant + [sum_j own_poly[s][j] x_s^j]_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPopulationPayoff {
    pub cross: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own_poly: Option<Matrix>,
}

impl TwoPopulationPayoff {
    pub fn eval_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            let mut v = dot(&self.cross[s], y);
            if let Some(m) = &self.own {
                v += dot(&m[s], x);
            }
            if let Some(c) = &self.constant {
                v += c[s];
            }
            if let Some(p) = &self.own_poly {
                v += horner(&p[s], x[s]);
            }
            *o = v;
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, y, &mut out);
        out
    }

    /// `f0(x, x')` with `grad_1 f0 (x, x') = F0(x, x')` and
    /// `grad_2 f0 (x, x') = F0(x', x)`; needs symmetric `cross` and `own`.
    pub fn potential(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut v = dot(x, &mat_vec(&self.cross, y));
        if let Some(m) = &self.own {
            v += 0.5 * (dot(x, &mat_vec(m, x)) + dot(y, &mat_vec(m, y)));
        }
        if let Some(c) = &self.constant {
            v += dot(c, x) + dot(c, y);
        }
        if let Some(p) = &self.own_poly {
            for (s, coeffs) in p.iter().enumerate() {
                v += horner_antiderivative(coeffs, x[s]) + horner_antiderivative(coeffs, y[s]);
            }
        }
        v
    }

    pub(crate) fn validate(&self, strategies: usize, path: &str, errs: &mut Vec<String>) {
        check_matrix(&self.cross, strategies, strategies, &format!("{path}.cross"), errs);
        if let Some(m) = &self.own {
            check_matrix(m, strategies, strategies, &format!("{path}.own"), errs);
        }
        if let Some(c) = &self.constant {
            check_vector(c, strategies, &format!("{path}.constant"), errs);
        }
        if let Some(p) = &self.own_poly {
            if p.len() != strategies {
                errs.push(format!("{path}.own_poly: expected {strategies} rows, got {}", p.len()));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_helpers() {
        let c = [1.0, -2.0, 3.0];
        assert_abs_diff_eq!(horner(&c, 2.0), 1.0 - 4.0 + 12.0);
        assert_abs_diff_eq!(horner_derivative(&c, 2.0), -2.0 + 12.0);
        assert_abs_diff_eq!(horner_antiderivative(&c, 2.0), 2.0 - 4.0 + 8.0);
    }

    #[test]
    fn entry_profile_integral() {
        let p = ScalarProfile::Linear {
            intercept: 1.0,
            slope: -1.0,
        };
        assert_abs_diff_eq!(p.integral(0.5), 0.375, epsilon = 1e-15);
        // Same profile written as a rational function goes through quadrature.
        let r = ScalarProfile::Rational {
            numerator: vec![1.0, -1.0],
            denominator: vec![1.0],
        };
        assert_abs_diff_eq!(r.integral(0.5), 0.375, epsilon = 1e-14);
        let r = ScalarProfile::Rational {
            numerator: vec![1.0],
            denominator: vec![1.0, 1.0],
        };
        assert_abs_diff_eq!(r.integral(1.0), 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn two_population_potential_gradient() {
        let f = TwoPopulationPayoff {
            cross: vec![vec![1.0, 0.5], vec![0.5, 2.0]],
            own: Some(vec![vec![-1.0, 0.2], vec![0.2, -0.5]]),
            constant: Some(vec![0.1, -0.3]),
            own_poly: Some(vec![vec![0.0, 0.0, 1.0], vec![0.5, -1.0, 0.0, 2.0]]),
        };
        let x = [0.3, 0.7];
        let y = [0.6, 0.4];
        let h = 1e-6;
        for s in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[s] += h;
            xm[s] -= h;
            let d1 = (f.potential(&xp, &y) - f.potential(&xm, &y)) / (2.0 * h);
            assert_abs_diff_eq!(d1, f.eval(&x, &y)[s], epsilon = 1e-8);
            let mut yp = y;
            let mut ym = y;
            yp[s] += h;
            ym[s] -= h;
            let d2 = (f.potential(&x, &yp) - f.potential(&x, &ym)) / (2.0 * h);
            assert_abs_diff_eq!(d2, f.eval(&y, &x)[s], epsilon = 1e-8);
        }
    }
}
