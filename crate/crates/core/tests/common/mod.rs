#![allow(dead_code)]

use std::path::PathBuf;

use heterodyn::protocols::{Gain, ProtocolSpec, Tempering};
use heterodyn::scenario::{parse_scenario, ScenarioConfig};
use rand::Rng;

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn load_scenario(name: &str) -> ScenarioConfig {
    let path = scenarios_dir().join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_scenario(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Every shipped scenario, sorted by name.
pub fn shipped_scenarios() -> Vec<ScenarioConfig> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .expect("scenarios directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| load_scenario(p.file_stem().unwrap().to_str().unwrap()))
        .collect()
}

/// The admissible protocols, with imitation parameters chosen to bracket
/// payoffs in `[-bound, bound]`.
pub fn admissible_protocols(bound: f64) -> Vec<ProtocolSpec> {
    vec![
        ProtocolSpec::Smith,
        ProtocolSpec::PairwiseComparison { gain: Gain::Quadratic },
        ProtocolSpec::Bnn,
        ProtocolSpec::StandardBrd,
        ProtocolSpec::TemperedBrd {
            tempering: Tempering::Capped { slope: 1.0 },
        },
        ProtocolSpec::TemperedBrd {
            tempering: Tempering::Exponential { rate: 2.0 },
        },
        ProtocolSpec::ReplicatorPairwise,
        ProtocolSpec::ReplicatorDissatisfaction { aspiration: 2.0 * bound },
        ProtocolSpec::ReplicatorSuccess { baseline: -2.0 * bound },
    ]
}

pub fn is_replicator(p: &ProtocolSpec) -> bool {
    matches!(
        p,
        ProtocolSpec::ReplicatorPairwise
            | ProtocolSpec::ReplicatorDissatisfaction { .. }
            | ProtocolSpec::ReplicatorSuccess { .. }
    )
}

/// Uniform draw from the simplex via normalized exponentials.
pub fn simplex_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// `sum_k w_k sum_s |a_ks - b_ks|`
pub fn weighted_distance(a: &[Vec<f64>], b: &[Vec<f64>], w: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((ra, rb), wk)| wk * ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum()
}
