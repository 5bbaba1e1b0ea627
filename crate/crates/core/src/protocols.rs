//! Revision protocols and the per-type mean dynamic.
//!
//! A protocol maps a payoff vector (and, for observational protocols, the
//! mixture of the agent's own type) to switching rates `rho[s][s']`. The mean
//! dynamic of a type's mixture is inflow minus outflow:
//! `v_s = sum_s' x_s' rho[s'][s] - x_s sum_s' rho[s][s']`.
//!
//! Exact optimization protocols (standard and tempered BRD) need a rule at
//! ties. Agents whose current strategy is within `tie_tol` of the best payoff
//! stay put; everyone else moves to the lowest-index best response.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::lowest_best_response;
use crate::typegrid::TypeGrid;

/// Gain function of a pairwise comparison protocol, applied to the payoff gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    /// `[q]+`, which gives the Smith dynamic.
    Linear,
    /// `[q]+^2`
    Quadratic,
}

impl Gain {
    fn apply(self, q: f64) -> f64 {
        let q = q.max(0.0);
        match self {
            Gain::Linear => q,
            Gain::Quadratic => q * q,
        }
    }
}

/// Conditional switching rate `Q(q)` of a tempered best response protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tempering {
    /// `min(slope * q, 1)`
    Capped { slope: f64 },
    /// `1 - exp(-rate * q)`
    Exponential { rate: f64 },
}

impl Tempering {
    pub fn apply(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        match *self {
            Tempering::Capped { slope } => (slope * q).min(1.0),
            Tempering::Exponential { rate } => -(-rate * q).exp_m1(),
        }
    }

    fn validate(&self, path: &str, errs: &mut Vec<String>) {
        let (name, p) = match *self {
            Tempering::Capped { slope } => ("slope", slope),
            Tempering::Exponential { rate } => ("rate", rate),
        };
        if !(p.is_finite() && p > 0.0) {
            errs.push(format!("{path}.{name}: must be positive, got {p}"));
            return;
        }
        let ok = self.apply(0.0) == 0.0
            && [1e-6, 1e-3, 0.1, 1.0, 10.0, 1e3]
                .iter()
                .all(|&q| (0.0..=1.0).contains(&self.apply(q)) && self.apply(q) > 0.0);
        if !ok {
            errs.push(format!("{path}: tempering function must map q > 0 into (0, 1]"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolSpec {
    Smith,
    PairwiseComparison { gain: Gain },
    Logit { noise: f64 },
    /// Excess-payoff protocol comparing against the average payoff of the
    /// agent's own type.
    Bnn,
    /// Imitate a randomly met agent of the same type if it earns more.
    ReplicatorPairwise,
    /// Imitate at rate `[aspiration - pi_s]+`. Best response stationarity
    /// needs an aspiration level above every attainable payoff.
    ReplicatorDissatisfaction { aspiration: f64 },
    /// Imitate strategy `s'` at rate proportional to `[pi_s' - baseline]+`.
    ReplicatorSuccess { baseline: f64 },
    StandardBrd,
    TemperedBrd { tempering: Tempering },
}

impl ProtocolSpec {
    pub fn label(&self) -> String {
        match self {
            ProtocolSpec::Smith => "smith".into(),
            ProtocolSpec::PairwiseComparison { gain } => match gain {
                Gain::Linear => "pairwise_comparison(linear)".into(),
                Gain::Quadratic => "pairwise_comparison(quadratic)".into(),
            },
            ProtocolSpec::Logit { noise } => format!("logit(noise={noise})"),
            ProtocolSpec::Bnn => "bnn".into(),
            ProtocolSpec::ReplicatorPairwise => "replicator_pairwise".into(),
            ProtocolSpec::ReplicatorDissatisfaction { aspiration } => {
                format!("replicator_dissatisfaction(aspiration={aspiration})")
            }
            ProtocolSpec::ReplicatorSuccess { baseline } => {
                format!("replicator_success(baseline={baseline})")
            }
            ProtocolSpec::StandardBrd => "standard_brd".into(),
            ProtocolSpec::TemperedBrd { tempering } => match tempering {
                Tempering::Capped { slope } => format!("tempered_brd(capped, slope={slope})"),
                Tempering::Exponential { rate } => {
                    format!("tempered_brd(exponential, rate={rate})")
                }
            },
        }
    }

    /// Protocols with both best response stationarity and positive
    /// correlation. Imitative protocols qualify on interior states only.
    pub fn is_admissible(&self) -> bool {
        !matches!(self, ProtocolSpec::Logit { .. })
    }

    pub fn is_imitative(&self) -> bool {
        matches!(
            self,
            ProtocolSpec::ReplicatorPairwise
                | ProtocolSpec::ReplicatorDissatisfaction { .. }
                | ProtocolSpec::ReplicatorSuccess { .. }
        )
    }

    pub fn is_exact_optimization(&self) -> bool {
        matches!(self, ProtocolSpec::StandardBrd | ProtocolSpec::TemperedBrd { .. })
    }

    pub fn validate(&self, path: &str, errs: &mut Vec<String>) {
        match self {
            ProtocolSpec::Logit { noise } if !(noise.is_finite() && *noise > 0.0) => {
                errs.push(format!("{path}.noise: must be positive, got {noise}"));
            }
            ProtocolSpec::ReplicatorDissatisfaction { aspiration } if !aspiration.is_finite() => {
                errs.push(format!("{path}.aspiration: must be finite"));
            }
            ProtocolSpec::ReplicatorSuccess { baseline } if !baseline.is_finite() => {
                errs.push(format!("{path}.baseline: must be finite"));
            }
            ProtocolSpec::TemperedBrd { tempering } => {
                tempering.validate(&format!("{path}.tempering"), errs);
            }
            _ => {}
        }
    }

    fn check(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.validate("protocol", &mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::param("protocol", errs.join("; ")))
        }
    }

    /// Writes the row-major `S x S` rate matrix into `out`; the diagonal is zero.
    fn fill_rates(&self, pi: &[f64], x: &[f64], tie_tol: f64, out: &mut [f64]) {
        let n = pi.len();
        out.iter_mut().for_each(|r| *r = 0.0);
        match self {
            ProtocolSpec::Smith => fill_pairwise(pi, out, |q| q.max(0.0)),
            ProtocolSpec::PairwiseComparison { gain } => fill_pairwise(pi, out, |q| gain.apply(q)),
            ProtocolSpec::Logit { noise } => {
                let max = pi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = pi.iter().map(|p| ((p - max) / noise).exp()).collect();
                let total: f64 = e.iter().sum();
                for s in 0..n {
                    for t in 0..n {
                        if s != t {
                            out[s * n + t] = e[t] / total;
                        }
                    }
                }
            }
            ProtocolSpec::Bnn => {
                let avg: f64 = pi.iter().zip(x).map(|(p, q)| p * q).sum();
                for s in 0..n {
                    for t in 0..n {
                        if s != t {
                            out[s * n + t] = (pi[t] - avg).max(0.0);
                        }
                    }
                }
            }
            ProtocolSpec::ReplicatorPairwise => {
                fill_pairwise(pi, out, |q| q.max(0.0));
                for s in 0..n {
                    for t in 0..n {
                        out[s * n + t] *= x[t];
                    }
                }
            }
            ProtocolSpec::ReplicatorDissatisfaction { aspiration } => {
                for s in 0..n {
                    let d = (aspiration - pi[s]).max(0.0);
                    for t in 0..n {
                        if s != t {
                            out[s * n + t] = x[t] * d;
                        }
                    }
                }
            }
            ProtocolSpec::ReplicatorSuccess { baseline } => {
                for s in 0..n {
                    for t in 0..n {
                        if s != t {
                            out[s * n + t] = x[t] * (pi[t] - baseline).max(0.0);
                        }
                    }
                }
            }
            ProtocolSpec::StandardBrd | ProtocolSpec::TemperedBrd { .. } => {
                let best = lowest_best_response(pi, tie_tol);
                let top = pi[best];
                for s in 0..n {
                    let gap = top - pi[s];
                    if gap > tie_tol {
                        out[s * n + best] = match self {
                            ProtocolSpec::TemperedBrd { tempering } => tempering.apply(gap),
                            _ => 1.0,
                        };
                    }
                }
            }
        }
    }
}

fn fill_pairwise(pi: &[f64], out: &mut [f64], phi: impl Fn(f64) -> f64) {
    let n = pi.len();
    for s in 0..n {
        for t in 0..n {
            if s != t {
                out[s * n + t] = phi(pi[t] - pi[s]);
            }
        }
    }
}

fn check_inputs(pi: &[f64], x: &[f64]) -> Result<()> {
    if x.len() != pi.len() {
        return Err(Error::DimensionMismatch {
            context: "protocol mixture",
            expected: pi.len(),
            actual: x.len(),
        });
    }
    if pi.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("payoff vector".into()));
    }
    Ok(())
}

/// Switching rates `rho[s][s']` from `s` to `s'`, diagonal set to zero.
pub fn switch_rates(
    protocol: &ProtocolSpec,
    pi: &[f64],
    x_obs: &[f64],
    tie_tol: f64,
) -> Result<Vec<Vec<f64>>> {
    protocol.check()?;
    check_inputs(pi, x_obs)?;
    let n = pi.len();
    let mut flat = vec![0.0; n * n];
    protocol.fill_rates(pi, x_obs, tie_tol, &mut flat);
    Ok(flat.chunks(n.max(1)).map(<[f64]>::to_vec).collect())
}

/// Reusable buffer for evaluating many mean dynamics without reallocating.
#[derive(Debug, Default)]
pub(crate) struct RateScratch {
    rates: Vec<f64>,
}

impl RateScratch {
    /// Writes `v` into `out` and returns the largest rate used. Inputs are
    /// assumed valid.
    pub(crate) fn mean_dynamic_into(
        &mut self,
        protocol: &ProtocolSpec,
        pi: &[f64],
        x: &[f64],
        tie_tol: f64,
        out: &mut [f64],
    ) -> f64 {
        let n = pi.len();
        self.rates.resize(n * n, 0.0);
        protocol.fill_rates(pi, x, tie_tol, &mut self.rates);
        let rho = &self.rates;
        let mut max_rate = 0.0_f64;
        for s in 0..n {
            let mut inflow = 0.0;
            let mut outflow = 0.0;
            for t in 0..n {
                inflow += x[t] * rho[t * n + s];
                outflow += rho[s * n + t];
                max_rate = max_rate.max(rho[s * n + t]);
            }
            out[s] = inflow - x[s] * outflow;
        }
        max_rate
    }
}

/// Velocity of one type's mixture: inflow minus outflow.
pub fn mean_dynamic(
    protocol: &ProtocolSpec,
    pi: &[f64],
    x: &[f64],
    tie_tol: f64,
) -> Result<Vec<f64>> {
    protocol.check()?;
    check_inputs(pi, x)?;
    let mut v = vec![0.0; pi.len()];
    RateScratch::default().mean_dynamic_into(protocol, pi, x, tie_tol, &mut v);
    Ok(v)
}

/// Largest switching rate seen over the corners of the payoff box
/// `[lo, hi]^S` and `samples` seeded random payoff/mixture pairs in it.
pub fn rate_bound_on_box(
    protocol: &ProtocolSpec,
    strategies: usize,
    lo: f64,
    hi: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    protocol.check()?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::param("payoff box", format!("need finite lo <= hi, got [{lo}, {hi}]")));
    }
    if strategies == 0 {
        return Err(Error::param("strategies", "must be positive"));
    }
    let n = strategies;
    let mut rates = vec![0.0; n * n];
    let mut worst = 0.0_f64;
    let mut visit = |pi: &[f64], x: &[f64], rates: &mut [f64]| {
        protocol.fill_rates(pi, x, crate::games::DEFAULT_TIE_TOL, rates);
        worst = rates.iter().copied().fold(worst, f64::max);
    };
    let uniform = vec![1.0 / n as f64; n];
    let corners = if n <= 12 { 1usize << n } else { 0 };
    for mask in 0..corners {
        let pi: Vec<f64> = (0..n).map(|s| if mask >> s & 1 == 1 { hi } else { lo }).collect();
        visit(&pi, &uniform, &mut rates);
        for s in 0..n {
            let mut e = vec![0.0; n];
            e[s] = 1.0;
            visit(&pi, &e, &mut rates);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let pi: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
        let x = random_simplex_point(&mut rng, n);
        visit(&pi, &x, &mut rates);
    }
    Ok(worst)
}

/// Uniform draw from the simplex via normalized exponentials.
pub(crate) fn random_simplex_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// How protocols are assigned to type nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssignmentRule {
    Uniform { protocol: usize },
    /// One protocol index per node, in grid order.
    ByNode { protocols: Vec<usize> },
    /// `below` where `theta[coordinate] < threshold`, else `at_or_above`.
    Threshold {
        #[serde(default)]
        coordinate: usize,
        threshold: f64,
        below: usize,
        at_or_above: usize,
    },
}

impl AssignmentRule {
    /// Protocol indices the rule refers to.
    pub fn referenced(&self) -> Vec<usize> {
        match self {
            AssignmentRule::Uniform { protocol } => vec![*protocol],
            AssignmentRule::ByNode { protocols } => protocols.clone(),
            AssignmentRule::Threshold {
                below, at_or_above, ..
            } => vec![*below, *at_or_above],
        }
    }
}

/// Protocol followed by each type node.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolAssignment {
    specs: Vec<ProtocolSpec>,
    node_protocol: Vec<usize>,
}

impl ProtocolAssignment {
    pub fn uniform(protocol: ProtocolSpec, nodes: usize) -> Self {
        ProtocolAssignment {
            specs: vec![protocol],
            node_protocol: vec![0; nodes],
        }
    }

    pub fn nodes(&self) -> usize {
        self.node_protocol.len()
    }

    pub fn specs(&self) -> &[ProtocolSpec] {
        &self.specs
    }

    pub fn index(&self, k: usize) -> usize {
        self.node_protocol[k]
    }

    pub fn protocol(&self, k: usize) -> &ProtocolSpec {
        &self.specs[self.node_protocol[k]]
    }

    pub fn indices(&self) -> &[usize] {
        &self.node_protocol
    }

    pub fn all_admissible(&self) -> bool {
        self.used().all(ProtocolSpec::is_admissible)
    }

    pub fn any_imitative(&self) -> bool {
        self.used().any(ProtocolSpec::is_imitative)
    }

    fn used(&self) -> impl Iterator<Item = &ProtocolSpec> {
        self.specs
            .iter()
            .enumerate()
            .filter(|(i, _)| self.node_protocol.contains(i))
            .map(|(_, p)| p)
    }
}

pub fn assign_protocols(
    grid: &TypeGrid,
    protocols: &[ProtocolSpec],
    rule: &AssignmentRule,
) -> Result<ProtocolAssignment> {
    if protocols.is_empty() {
        return Err(Error::param("protocols", "list is empty"));
    }
    for p in protocols {
        p.check()?;
    }
    if let Some(&i) = rule.referenced().iter().find(|&&i| i >= protocols.len()) {
        return Err(Error::param(
            "assignment",
            format!("protocol index {i} out of range for {} protocols", protocols.len()),
        ));
    }
    let k = grid.len();
    let node_protocol = match rule {
        AssignmentRule::Uniform { protocol } => vec![*protocol; k],
        AssignmentRule::ByNode { protocols } => {
            if protocols.len() > k {
                return Err(Error::NodeOutOfRange {
                    node: k,
                    nodes: k,
                });
            }
            if protocols.len() < k {
                return Err(Error::DimensionMismatch {
                    context: "per-node protocol list",
                    expected: k,
                    actual: protocols.len(),
                });
            }
            protocols.clone()
        }
        AssignmentRule::Threshold {
            coordinate,
            threshold,
            below,
            at_or_above,
        } => {
            if *coordinate >= grid.dim() {
                return Err(Error::param(
                    "assignment.coordinate",
                    format!("{coordinate} out of range for {}-dimensional types", grid.dim()),
                ));
            }
            grid.nodes()
                .iter()
                .map(|t| if t[*coordinate] < *threshold { *below } else { *at_or_above })
                .collect()
        }
    };
    Ok(ProtocolAssignment {
        specs: protocols.to_vec(),
        node_protocol,
    })
}
