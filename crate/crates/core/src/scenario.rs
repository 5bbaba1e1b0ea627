//! Scenario files: a complete, serializable description of one experiment.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::IntegratorConfig;
use crate::equilibrium::DEFAULT_MASS_TOL;
use crate::games::{GameSpec, DEFAULT_TIE_TOL};
use crate::protocols::{assign_protocols, AssignmentRule, ProtocolAssignment, ProtocolSpec};
use crate::typegrid::{build_grid, ConditionalState, DistSpec, Rows, TypeGrid, SIMPLEX_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dist: DistSpec,
    pub n_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// Every node mixes uniformly.
    #[default]
    Uniform,
    /// Every node plays one strategy.
    Pure { strategy: usize },
    /// Every node plays the same mixture.
    Mixture { mix: Vec<f64> },
    /// Explicit per-node rows.
    Rows { rows: Vec<Vec<f64>> },
    /// Each node's mixture drawn uniformly from the simplex with a
    /// ChaCha8 generator seeded by `seed`.
    Random {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(default = "yes")]
    pub trajectory: bool,
    #[serde(default = "yes")]
    pub diagnostics: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: None,
            trajectory: true,
            diagnostics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tie_tol")]
    pub tie_tol: f64,
    #[serde(default = "default_mass_tol")]
    pub mass_tol: f64,
}

fn default_tie_tol() -> f64 {
    DEFAULT_TIE_TOL
}

fn default_mass_tol() -> f64 {
    DEFAULT_MASS_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tie_tol: DEFAULT_TIE_TOL,
            mass_tol: DEFAULT_MASS_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSettings {
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_solver_tol")]
    pub tol: f64,
}

fn default_damping() -> f64 {
    0.5
}

fn default_max_iters() -> usize {
    10_000
}

fn default_solver_tol() -> f64 {
    1e-10
}

impl Default for EquilibriumSettings {
    fn default() -> Self {
        EquilibriumSettings {
            damping: default_damping(),
            max_iters: default_max_iters(),
            tol: default_solver_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialCheckSettings {
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Step used for the accuracy check.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Step used for the order check, alongside its half.
    #[serde(default = "default_order_h")]
    pub order_h: f64,
}

fn default_pairs() -> usize {
    100
}

fn default_h() -> f64 {
    1e-4
}

fn default_order_h() -> f64 {
    1e-2
}

impl Default for PotentialCheckSettings {
    fn default() -> Self {
        PotentialCheckSettings {
            pairs: default_pairs(),
            h: default_h(),
            order_h: default_order_h(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregabilitySettings {
    /// Aggregate shared by the probed states; defaults to the aggregate of
    /// the initial state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    #[serde(default = "default_n_states")]
    pub n_states: usize,
}

fn default_n_states() -> usize {
    8
}

impl Default for AggregabilitySettings {
    fn default() -> Self {
        AggregabilitySettings {
            target: None,
            n_states: default_n_states(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionSettings {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    200
}

impl Default for AssumptionSettings {
    fn default() -> Self {
        AssumptionSettings {
            samples: default_samples(),
        }
    }
}

/// A pass/fail criterion evaluated by the command it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum CheckSpec {
    /// simulate: every raw step stays within `max_deviation` of the simplex
    /// and total renormalization stays within `max_renorm`.
    Simplex {
        #[serde(default = "default_simplex_deviation")]
        max_deviation: f64,
        #[serde(default = "default_renorm")]
        max_renorm: f64,
    },
    /// simulate: the potential never drops by more than `slack` between samples.
    Lyapunov {
        #[serde(default = "default_slack")]
        slack: f64,
    },
    /// simulate: welfare never drops by more than `slack` between samples.
    WelfareMonotone {
        #[serde(default = "default_slack")]
        slack: f64,
    },
    /// simulate: the velocity-weighted payoff never falls below `-slack`.
    PcNonnegative {
        #[serde(default = "default_pc_slack")]
        slack: f64,
    },
    /// simulate: variational norm of the field at `t_end`.
    TerminalResidual {
        #[serde(default = "default_residual")]
        max: f64,
    },
    /// simulate: terminal aggregate mass of `strategy` is within `tol` of `target`.
    TerminalAggregate {
        strategy: usize,
        target: f64,
        #[serde(default = "default_aggregate_tol")]
        tol: f64,
    },
    /// equilibrium: the solver converged with at most `max` mass off best responses.
    BrViolation {
        #[serde(default = "default_mass_tol")]
        max: f64,
    },
    /// potential-check: relative gradient error and convergence order.
    Gradient {
        #[serde(default = "default_gradient_error")]
        max_error: f64,
        #[serde(default = "default_order")]
        min_order: f64,
    },
    /// aggregability-demo: the spread exceeds `min`.
    SpreadAbove { min: f64 },
    /// aggregability-demo: the spread is at most `max`.
    SpreadBelow { max: f64 },
    /// assumptions: every reported constant is finite.
    FiniteAssumptions,
}

fn default_simplex_deviation() -> f64 {
    1e-6
}

fn default_renorm() -> f64 {
    1e-3
}

fn default_slack() -> f64 {
    1e-8
}

fn default_pc_slack() -> f64 {
    1e-10
}

fn default_residual() -> f64 {
    1e-6
}

fn default_aggregate_tol() -> f64 {
    1e-3
}

fn default_gradient_error() -> f64 {
    1e-6
}

fn default_order() -> f64 {
    1.9
}

impl CheckSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CheckSpec::Simplex { .. } => "simplex",
            CheckSpec::Lyapunov { .. } => "lyapunov",
            CheckSpec::WelfareMonotone { .. } => "welfare_monotone",
            CheckSpec::PcNonnegative { .. } => "pc_nonnegative",
            CheckSpec::TerminalResidual { .. } => "terminal_residual",
            CheckSpec::TerminalAggregate { .. } => "terminal_aggregate",
            CheckSpec::BrViolation { .. } => "br_violation",
            CheckSpec::Gradient { .. } => "gradient",
            CheckSpec::SpreadAbove { .. } => "spread_above",
            CheckSpec::SpreadBelow { .. } => "spread_below",
            CheckSpec::FiniteAssumptions => "finite_assumptions",
        }
    }
}

fn default_assignment() -> AssignmentRule {
    AssignmentRule::Uniform { protocol: 0 }
}

fn default_integrator() -> IntegratorConfig {
    IntegratorConfig::new(Default::default(), 0.01, 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridConfig,
    pub game: GameSpec,
    pub protocols: Vec<ProtocolSpec>,
    #[serde(default = "default_assignment")]
    pub assignment: AssignmentRule,
    #[serde(default)]
    pub initial_state: InitialState,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Seed for the randomized diagnostics.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub equilibrium: EquilibriumSettings,
    #[serde(default)]
    pub potential_check: PotentialCheckSettings,
    #[serde(default)]
    pub aggregability: AggregabilitySettings,
    #[serde(default)]
    pub assumptions: AssumptionSettings,
}

/// Every problem found in a scenario, each as `path: message`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub errors: Vec<String>,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid scenario ({} problem(s)):", self.errors.len())?;
        for e in &self.errors {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ScenarioError {}

/// Parses and validates a scenario, reporting all problems at once.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ScenarioError {
            errors: vec![format!("{path}: {}", e.into_inner())],
        }
    })?;
    let errors = cfg.validate();
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ScenarioError { errors })
    }
}

impl ScenarioConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// All validation problems, each prefixed by its field path.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.name.trim().is_empty() {
            errs.push("name: must not be empty".into());
        }
        let grid = match build_grid(&self.grid.dist, self.grid.n_nodes) {
            Ok(g) => Some(g),
            Err(e) => {
                errs.push(format!("grid: {e}"));
                None
            }
        };
        let s = self.game.strategies();
        errs.extend(self.game.validate(grid.as_ref().map(TypeGrid::dim), "game"));

        if self.protocols.is_empty() {
            errs.push("protocols: need at least one protocol".into());
        }
        for (i, p) in self.protocols.iter().enumerate() {
            p.validate(&format!("protocols[{i}]"), &mut errs);
        }
        for i in self.assignment.referenced() {
            if i >= self.protocols.len() {
                errs.push(format!(
                    "assignment: protocol index {i} out of range for {} protocols",
                    self.protocols.len()
                ));
            }
        }
        if let Some(g) = &grid {
            match &self.assignment {
                AssignmentRule::ByNode { protocols } if protocols.len() != g.len() => {
                    errs.push(format!(
                        "assignment.protocols: {} entries for a grid of {} nodes",
                        protocols.len(),
                        g.len()
                    ));
                }
                AssignmentRule::Threshold { coordinate, .. } if *coordinate >= g.dim() => {
                    errs.push(format!(
                        "assignment.coordinate: {coordinate} out of range for {}-dimensional types",
                        g.dim()
                    ));
                }
                _ => {}
            }
        }

        self.validate_initial_state(s, grid.as_ref(), &mut errs);
        self.integrator.validate("integrator", &mut errs);

        for (name, v) in [("tie_tol", self.tolerances.tie_tol), ("mass_tol", self.tolerances.mass_tol)] {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("tolerances.{name}: must be nonnegative, got {v}"));
            }
        }
        let eq = &self.equilibrium;
        if !(eq.damping > 0.0 && eq.damping <= 1.0) {
            errs.push(format!("equilibrium.damping: must lie in (0, 1], got {}", eq.damping));
        }
        if !(eq.tol.is_finite() && eq.tol > 0.0) {
            errs.push(format!("equilibrium.tol: must be positive, got {}", eq.tol));
        }
        let pc = &self.potential_check;
        for (name, v) in [("h", pc.h), ("order_h", pc.order_h)] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("potential_check.{name}: must be positive, got {v}"));
            }
        }
        if let Some(t) = &self.aggregability.target {
            let sum: f64 = t.iter().sum();
            if t.len() != s {
                errs.push(format!(
                    "aggregability.target: has {} entries but game.strategies is {s}",
                    t.len()
                ));
            } else if t.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOL {
                errs.push("aggregability.target: not in the simplex".into());
            }
        }
        if self.aggregability.n_states < 2 {
            errs.push("aggregability.n_states: need at least 2".into());
        }
        if self.assumptions.samples < 2 {
            errs.push("assumptions.samples: need at least 2".into());
        }
        for (i, c) in self.checks.iter().enumerate() {
            if let CheckSpec::TerminalAggregate { strategy, .. } = c {
                if *strategy >= s {
                    errs.push(format!(
                        "checks[{i}].strategy: {strategy} out of range; game.strategies is {s}"
                    ));
                }
            }
        }
        errs
    }

    fn validate_initial_state(&self, s: usize, grid: Option<&TypeGrid>, errs: &mut Vec<String>) {
        match &self.initial_state {
            InitialState::Uniform => {}
            InitialState::Pure { strategy } => {
                if *strategy >= s {
                    errs.push(format!(
                        "initial_state.strategy: {strategy} out of range; game.strategies is {s}"
                    ));
                }
            }
            InitialState::Mixture { mix } => {
                if mix.len() != s {
                    errs.push(format!(
                        "initial_state.mix: has {} entries but game.strategies is {s}",
                        mix.len()
                    ));
                } else if let Err(e) = ConditionalState::uniform_rows(1, mix) {
                    errs.push(format!("initial_state.mix: {e}"));
                }
            }
            InitialState::Rows { rows } => {
                if let Some(g) = grid {
                    if rows.len() != g.len() {
                        errs.push(format!(
                            "initial_state.rows: {} rows for a grid of {} nodes",
                            rows.len(),
                            g.len()
                        ));
                    }
                }
                if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != s) {
                    errs.push(format!(
                        "initial_state.rows[{k}]: has {} strategies but game.strategies is {s}",
                        r.len()
                    ));
                } else if let Err(e) = ConditionalState::from_rows(rows) {
                    errs.push(format!("initial_state.rows: {e}"));
                }
            }
            InitialState::Random { seed } => {
                if seed.is_none() {
                    errs.push("initial_state.seed: required for random initial states".into());
                }
            }
        }
    }

    pub fn build_grid(&self) -> crate::Result<TypeGrid> {
        build_grid(&self.grid.dist, self.grid.n_nodes)
    }

    pub fn build_assignment(&self, grid: &TypeGrid) -> crate::Result<ProtocolAssignment> {
        assign_protocols(grid, &self.protocols, &self.assignment)
    }

    pub fn build_initial_state(&self, grid: &TypeGrid) -> crate::Result<ConditionalState> {
        let (k, s) = (grid.len(), self.game.strategies());
        match &self.initial_state {
            InitialState::Uniform => Ok(ConditionalState::barycenter(k, s)),
            InitialState::Pure { strategy } => ConditionalState::pure(k, s, *strategy),
            InitialState::Mixture { mix } => ConditionalState::uniform_rows(k, mix),
            InitialState::Rows { rows } => ConditionalState::from_rows(rows),
            InitialState::Random { seed } => {
                let seed = seed.ok_or_else(|| {
                    crate::Error::param("initial_state.seed", "required for random initial states")
                })?;
                Ok(random_state(k, s, seed))
            }
        }
    }
}

/// Seeded state with every node's mixture uniform on the simplex.
pub fn random_state(nodes: usize, strategies: usize, seed: u64) -> ConditionalState {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Rows::zeros(nodes, strategies);
    for k in 0..nodes {
        rows.row_mut(k)
            .copy_from_slice(&crate::protocols::random_simplex_point(&mut rng, strategies));
    }
    ConditionalState::new(rows).expect("normalized draws lie in the simplex")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "minimal",
        "grid": {"dist": {"kind": "discrete", "points": [[0.0, 0.0]], "masses": [1.0]}, "n_nodes": 1},
        "game": {"class": "asag", "strategies": 2, "common": {"kind": "zero"}},
        "protocols": [{"kind": "smith"}]
    }"#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        assert_eq!(cfg.integrator.dt, 0.01);
        assert_eq!(cfg.tolerances.tie_tol, 1e-9);
        assert_eq!(cfg.tolerances.mass_tol, 1e-8);
        assert_eq!(cfg.initial_state, InitialState::Uniform);
        assert_eq!(cfg.assignment, AssignmentRule::Uniform { protocol: 0 });
    }

    #[test]
    fn round_trip() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        assert_eq!(parse_scenario(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn zero_noise_logit_names_the_field() {
        let text = MINIMAL.replace(r#"{"kind": "smith"}"#, r#"{"kind": "logit", "noise": 0.0}"#);
        let err = parse_scenario(&text).unwrap_err();
        assert_eq!(err.errors.len(), 1);
        assert!(err.errors[0].starts_with("protocols[0].noise"), "{err}");
    }

    #[test]
    fn strategy_mismatch_lists_both_locations() {
        let text = MINIMAL.replace(
            r#""protocols""#,
            r#""initial_state": {"kind": "rows", "rows": [[0.2, 0.3, 0.5]]}, "protocols""#,
        );
        let err = parse_scenario(&text).unwrap_err();
        let msg = err.errors.join("\n");
        assert!(msg.contains("initial_state.rows[0]") && msg.contains("game.strategies"), "{msg}");
    }

    #[test]
    fn all_problems_are_reported() {
        let text = MINIMAL
            .replace(r#"{"kind": "smith"}"#, r#"{"kind": "logit", "noise": -1.0}"#)
            .replace(r#""n_nodes": 1"#, r#""n_nodes": 1}, "integrator": {"t_end": 5.0, "dt": 0.0"#);
        let err = parse_scenario(&text).unwrap_err();
        assert_eq!(err.errors.len(), 2, "{err}");
    }

    #[test]
    fn unknown_variant_is_rejected_with_path() {
        let text = MINIMAL.replace(r#""smith""#, r#""smiht""#);
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.errors[0].starts_with("protocols"), "{err}");
        assert!(err.errors[0].contains("smiht"), "{err}");
    }

    #[test]
    fn random_state_needs_a_seed() {
        let text = MINIMAL.replace(
            r#""protocols""#,
            r#""initial_state": {"kind": "random"}, "protocols""#,
        );
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.errors[0].starts_with("initial_state.seed"));
    }
}
