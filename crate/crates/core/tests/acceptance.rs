//! Acceptance harness: prints one PASS/FAIL line per criterion and exits
//! nonzero on any failure other than the documented BNN shortfall in
//! criterion 4.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use heterodyn::commands::gradient_summary;
use heterodyn::dynamics::{aggregability_probe, field, integrate, IntegratorConfig, Method};
use heterodyn::equilibrium::{check_equilibrium, solve_binary_threshold, stationarity_residual};
use heterodyn::games::{AsagGame, CommonPayoff, GameSpec, IdiosyncraticMap, ScalarProfile};
use heterodyn::potential::{welfare, worst_drop, PotentialSpec};
use heterodyn::protocols::{mean_dynamic, ProtocolAssignment, ProtocolSpec, Tempering};
use heterodyn::scenario::{random_state, ScenarioConfig};
use heterodyn::typegrid::{aggregate, build_grid, ConditionalState, DistSpec, TypeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{admissible_protocols, is_replicator, shipped_scenarios, simplex_point, weighted_distance};

struct Verdict {
    id: u32,
    title: &'static str,
    passed: bool,
    detail: String,
    /// Failure consists solely of the known algebraic BNN convergence.
    documented_shortfall: bool,
}

impl Verdict {
    fn new(id: u32, title: &'static str, passed: bool, detail: String) -> Self {
        Verdict {
            id,
            title,
            passed,
            detail,
            documented_shortfall: false,
        }
    }
}

fn main() {
    let criteria: [fn() -> Verdict; 10] = [
        simplex_conservation,
        stationarity_equivalence,
        positive_correlation,
        lyapunov_monotonicity,
        free_entry,
        gradient_property,
        pigouvian_pricing,
        nonaggregability,
        integrator_order,
        oracle_equivalence,
    ];
    let mut unexpected = 0;
    for c in criteria {
        let start = Instant::now();
        let v = c();
        let mark = if v.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {mark} {} ({:.1}s): {}",
            v.id,
            v.title,
            start.elapsed().as_secs_f64(),
            v.detail
        );
        if !v.passed && !v.documented_shortfall {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criterion/criteria failed");
        std::process::exit(1);
    }
}

fn run_config(cfg: &ScenarioConfig) -> (TypeGrid, heterodyn::dynamics::Trajectory) {
    let grid = cfg.build_grid().unwrap();
    let assignment = cfg.build_assignment(&grid).unwrap();
    let x0 = cfg.build_initial_state(&grid).unwrap();
    let mut icfg = cfg.integrator.clone();
    icfg.tie_tol = cfg.tolerances.tie_tol;
    let traj = integrate(&cfg.game, &assignment, &x0, &grid, &icfg).unwrap();
    (grid, traj)
}

fn protocol_kind(p: &ProtocolSpec) -> String {
    let v = serde_json::to_value(p).unwrap();
    let mut kind = v["kind"].as_str().unwrap().to_string();
    if let Some(g) = v.get("gain") {
        kind = format!("{kind}/{}", g.as_str().unwrap());
    }
    if let Some(t) = v.get("tempering") {
        kind = format!("{kind}/{}", t["kind"].as_str().unwrap());
    }
    kind
}

fn game_class(g: &GameSpec) -> &'static str {
    match g {
        GameSpec::Asag(_) => "asag",
        GameSpec::RandomMatching(_) => "random_matching",
        GameSpec::Structured(_) => "structured",
    }
}

fn simplex_conservation() -> Verdict {
    let required_protocols: BTreeSet<&str> = [
        "smith",
        "pairwise_comparison/linear",
        "pairwise_comparison/quadratic",
        "logit",
        "bnn",
        "replicator_pairwise",
        "replicator_dissatisfaction",
        "replicator_success",
        "standard_brd",
        "tempered_brd/capped",
        "tempered_brd/exponential",
    ]
    .into_iter()
    .collect();
    let mut protocols = BTreeSet::new();
    let mut classes = BTreeSet::new();
    let mut problems = Vec::new();
    let mut slowest = 0.0_f64;
    let scenarios = shipped_scenarios();
    for cfg in &scenarios {
        let grid = cfg.build_grid().unwrap();
        let s = cfg.game.strategies();
        if grid.len() > 200 || s > 4 || cfg.integrator.t_end > 100.0 || cfg.integrator.dt != 0.01 {
            problems.push(format!("{}: outside K<=200, S<=4, t_end<=100, dt=0.01", cfg.name));
        }
        let assignment = cfg.build_assignment(&grid).unwrap();
        for k in 0..grid.len() {
            protocols.insert(protocol_kind(assignment.protocol(k)));
        }
        classes.insert(game_class(&cfg.game));

        let start = Instant::now();
        let (_, traj) = run_config(cfg);
        let secs = start.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        let sampled_dev = traj
            .states
            .iter()
            .flat_map(|x| x.rows().to_nested())
            .map(|row| {
                let neg = row.iter().fold(0.0_f64, |m, v| m.max(-v));
                neg.max((row.iter().sum::<f64>() - 1.0).abs())
            })
            .fold(0.0_f64, f64::max);
        if traj.max_simplex_deviation > 1e-6 || sampled_dev > 1e-6 || traj.total_renorm > 1e-3 || secs > 60.0 {
            problems.push(format!(
                "{}: raw deviation {:e}, sampled deviation {sampled_dev:e}, renorm {:e}, {secs:.1}s",
                cfg.name, traj.max_simplex_deviation, traj.total_renorm
            ));
        }
    }
    let missing: Vec<_> = required_protocols.iter().filter(|p| !protocols.contains(**p)).collect();
    if !missing.is_empty() {
        problems.push(format!("protocols not covered: {missing:?}"));
    }
    if classes.len() < 3 {
        problems.push(format!("game classes covered: {classes:?}"));
    }
    if scenarios.len() < 6 {
        problems.push(format!("only {} shipped scenarios", scenarios.len()));
    }
    let detail = if problems.is_empty() {
        format!(
            "{} scenarios, {} protocol kinds, {} game classes, slowest run {slowest:.2}s",
            scenarios.len(),
            protocols.len(),
            classes.len()
        )
    } else {
        problems.join("; ")
    };
    Verdict::new(1, "simplex conservation", problems.is_empty(), detail)
}

/// Random linear aggregate game with an equilibrium built in: types are
/// chosen so that `eq` puts every node on its best responses.
struct Instance {
    game: GameSpec,
    grid: TypeGrid,
    eq: ConditionalState,
    off: Vec<ConditionalState>,
}

fn random_instance(rng: &mut ChaCha8Rng, interior: bool) -> Instance {
    let s = rng.gen_range(2..=4);
    let k = rng.gen_range(1..=6);
    let a: Vec<Vec<f64>> = (0..s).map(|_| (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let b: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);

    let mut rows = Vec::new();
    let mut supports = Vec::new();
    for _ in 0..k {
        let support: Vec<bool> = if interior {
            vec![true; s]
        } else {
            let mut sup: Vec<bool> = (0..s).map(|_| rng.gen_bool(0.4)).collect();
            if !sup.iter().any(|v| *v) {
                sup[rng.gen_range(0..s)] = true;
            }
            sup
        };
        let p = simplex_point(rng, s);
        let mut row: Vec<f64> = p.iter().zip(&support).map(|(v, on)| if *on { *v } else { 0.0 }).collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
        rows.push(row);
        supports.push(support);
    }
    let xbar: Vec<f64> = (0..s).map(|j| (0..k).map(|n| w[n] * rows[n][j]).sum()).collect();
    let common: Vec<f64> = (0..s).map(|i| b[i] + (0..s).map(|j| a[i][j] * xbar[j]).sum::<f64>()).collect();
    let nodes: Vec<Vec<f64>> = supports
        .iter()
        .map(|sup| {
            // A node-specific level shift keeps nodes distinct without
            // changing best responses.
            let level = rng.gen_range(-1.0..1.0);
            (0..s)
                .map(|j| level - common[j] + if sup[j] { 0.0 } else { -rng.gen_range(0.05..1.0) })
                .collect()
        })
        .collect();
    let grid = TypeGrid::new(nodes, w).unwrap();
    let game = GameSpec::Asag(AsagGame {
        strategies: s,
        common: CommonPayoff::Linear { a, b },
        idiosyncratic: IdiosyncraticMap::Identity,
        pricing: false,
    });
    let eq = ConditionalState::from_rows(&rows).unwrap();
    let random: Vec<Vec<f64>> = (0..k).map(|_| simplex_point(rng, s)).collect();
    let mixed: Vec<Vec<f64>> = rows
        .iter()
        .zip(&random)
        .map(|(r, q)| r.iter().zip(q).map(|(x, y)| 0.8 * x + 0.2 * y).collect())
        .collect();
    let off = vec![
        ConditionalState::from_rows(&random).unwrap(),
        ConditionalState::from_rows(&mixed).unwrap(),
    ];
    Instance { game, grid, eq, off }
}

fn stationarity_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counterexamples = Vec::new();
    let (mut n_eq, mut n_off) = (0, 0);
    // Payoffs stay within |A| + |b| + |theta| < 9.
    for protocol in admissible_protocols(9.0) {
        let interior = is_replicator(&protocol);
        for _ in 0..30 {
            let inst = random_instance(&mut rng, interior);
            let assignment = ProtocolAssignment::uniform(protocol.clone(), inst.grid.len());
            for x in std::iter::once(&inst.eq).chain(&inst.off) {
                let br = check_equilibrium(&inst.game, x, &inst.grid, 1e-9, 1e-8).unwrap().br_violation;
                let res = stationarity_residual(&inst.game, &assignment, x, &inst.grid).unwrap();
                if br <= 1e-10 {
                    n_eq += 1;
                } else {
                    n_off += 1;
                }
                if (br <= 1e-10) != (res <= 1e-8) {
                    counterexamples.push(format!("{}: br {br:e} residual {res:e}", protocol.label()));
                }
            }
        }
    }
    let passed = counterexamples.is_empty() && n_eq >= 20 * 9 && n_off >= 20 * 9;
    let detail = if counterexamples.is_empty() {
        format!("9 protocols x 30 instances: {n_eq} equilibrium and {n_off} non-equilibrium states, 0 counterexamples")
    } else {
        format!("{} counterexamples, first: {}", counterexamples.len(), counterexamples[0])
    };
    Verdict::new(2, "stationarity equivalence", passed, detail)
}

fn positive_correlation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut problems = Vec::new();
    let mut worst = f64::INFINITY;
    for protocol in admissible_protocols(1.0) {
        for _ in 0..10_000 {
            let s = rng.gen_range(2..=4);
            let mut pi: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if rng.gen_bool(0.2) {
                pi[1] = pi[0];
            }
            let mut x = simplex_point(&mut rng, s);
            if rng.gen_bool(0.3) {
                x[rng.gen_range(0..s)] = 0.0;
                let sum: f64 = x.iter().sum();
                x.iter_mut().for_each(|v| *v /= sum);
            }
            let v = mean_dynamic(&protocol, &pi, &x, 1e-9).unwrap();
            let pc: f64 = pi.iter().zip(&v).map(|(a, b)| a * b).sum();
            let norm: f64 = v.iter().map(|a| a.abs()).sum();
            worst = worst.min(pc);
            if pc < -1e-12 || (norm > 1e-8 && pc <= 0.0) {
                problems.push(format!("{}: pi {pi:?} x {x:?} pc {pc:e} |v| {norm:e}", protocol.label()));
            }
        }
    }
    let detail = if problems.is_empty() {
        format!("9 protocols x 10000 samples, smallest pi.v {worst:e}")
    } else {
        format!("{} violations, first: {}", problems.len(), problems[0])
    };
    Verdict::new(3, "positive correlation", problems.is_empty(), detail)
}

fn lyapunov_monotonicity() -> Verdict {
    let mut monotone_failures = Vec::new();
    let mut residual_failures = Vec::new();
    let mut runs = 0;
    for cfg in shipped_scenarios() {
        let grid = cfg.build_grid().unwrap();
        if PotentialSpec::from_game(&cfg.game, &grid).is_err() {
            continue;
        }
        let mut variants = vec![(cfg.clone(), "as shipped".to_string())];
        for p in admissible_protocols(5.0) {
            let mut v = cfg.clone();
            v.protocols = vec![p.clone()];
            v.assignment = heterodyn::protocols::AssignmentRule::Uniform { protocol: 0 };
            variants.push((v, p.label()));
        }
        for (v, label) in variants {
            runs += 1;
            let (_, traj) = run_config(&v);
            let series = traj.potential_series().expect("potential recorded");
            let drop = worst_drop(&series);
            let residual = traj.final_diagnostics().residual;
            if drop > 1e-8 {
                monotone_failures.push(format!("{} [{label}] drop {drop:e}", cfg.name));
            }
            if residual > 1e-6 {
                residual_failures.push((cfg.name.clone(), label, residual));
            }
        }
    }
    let passed = monotone_failures.is_empty() && residual_failures.is_empty();
    let only_bnn = monotone_failures.is_empty() && residual_failures.iter().all(|(_, l, _)| l == "bnn");
    let mut detail = format!(
        "{runs} runs; potential nondecreasing in {} of them",
        runs - monotone_failures.len()
    );
    if !monotone_failures.is_empty() {
        detail += &format!("; monotonicity failures: {}", monotone_failures.join(", "));
    }
    if !residual_failures.is_empty() {
        let list: Vec<String> = residual_failures
            .iter()
            .map(|(n, l, r)| format!("{n} [{l}] {r:.1e}"))
            .collect();
        detail += &format!("; terminal residual above 1e-6: {}", list.join(", "));
        if only_bnn {
            detail += " (BNN approaches strict pure equilibria at rate 1/t)";
        }
    }
    Verdict {
        documented_shortfall: !passed && only_bnn,
        ..Verdict::new(4, "Lyapunov monotonicity", passed, detail)
    }
}

/// Bisection for the entry fixed point `y = G(1 - y)` with `G` the uniform
/// cost CDF on [0, 1].
fn entry_oracle() -> f64 {
    let g = |c: f64| c.clamp(0.0, 1.0);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(1.0 - mid) - mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn free_entry() -> Verdict {
    let start = Instant::now();
    let oracle = entry_oracle();
    let library = solve_binary_threshold(|y| 1.0 - y, |c| c.clamp(0.0, 1.0)).unwrap().aggregate;
    let grid = build_grid(
        &DistSpec::Uniform {
            intervals: vec![[0.0, 1.0]],
            masses: None,
        },
        100,
    )
    .unwrap();
    let game = GameSpec::Asag(AsagGame {
        strategies: 2,
        common: CommonPayoff::EntryExit {
            profile: ScalarProfile::Linear {
                intercept: 1.0,
                slope: -1.0,
            },
        },
        idiosyncratic: IdiosyncraticMap::Linear {
            matrix: vec![vec![-1.0], vec![0.0]],
            offset: None,
        },
        pricing: false,
    });
    let inits = [
        ("all-in", ConditionalState::pure(100, 2, 0).unwrap()),
        ("all-out", ConditionalState::pure(100, 2, 1).unwrap()),
        ("uniform", ConditionalState::barycenter(100, 2)),
        ("random 11", random_state(100, 2, 11)),
        ("random 12", random_state(100, 2, 12)),
    ];
    let protocols = [
        ProtocolSpec::Smith,
        ProtocolSpec::TemperedBrd {
            tempering: Tempering::Capped { slope: 1.0 },
        },
        ProtocolSpec::Bnn,
    ];
    let mut cfg = IntegratorConfig::new(Method::Rk4, 0.25, 1000.0);
    cfg.sample_every = 1000;
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    for p in &protocols {
        let assignment = ProtocolAssignment::uniform(p.clone(), grid.len());
        for (name, x0) in &inits {
            let traj = integrate(&game, &assignment, x0, &grid, &cfg).unwrap();
            let xbar = aggregate(traj.final_state(), &grid).unwrap()[0];
            let err = (xbar - oracle).abs();
            worst = worst.max(err);
            if err > 1e-3 {
                failures.push(format!("{} from {name}: {xbar}", p.label()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = failures.is_empty() && (oracle - 0.5).abs() < 1e-12 && (library - oracle).abs() < 1e-9 && secs <= 30.0;
    let detail = format!(
        "oracle {oracle}, library threshold {library}, 15 runs to t=1000 (dt 0.25), worst |xbar - oracle| {worst:.2e}, {secs:.1}s{}",
        if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
    );
    Verdict::new(5, "free-entry equilibrium", passed, detail)
}

fn gradient_property() -> Verdict {
    let mut lines = Vec::new();
    let mut passed = true;
    let mut measured_any = false;
    for cfg in shipped_scenarios() {
        let grid = cfg.build_grid().unwrap();
        let Ok(pspec) = PotentialSpec::from_game(&cfg.game, &grid) else {
            continue;
        };
        let mut c = cfg.clone();
        c.potential_check.pairs = 100;
        let g = gradient_summary(&pspec, &c, &grid).unwrap();
        let order_ok = g.min_order.map_or(true, |o| o >= 1.9);
        passed &= g.max_error <= 1e-6 && order_ok;
        measured_any |= g.measured_pairs > 0;
        lines.push(match g.min_order {
            Some(o) => format!("{} err {:.1e} order {o:.3} ({} pairs)", cfg.name, g.max_error, g.measured_pairs),
            None => format!("{} err {:.1e} (quadratic, exact)", cfg.name, g.max_error),
        });
    }
    Verdict::new(6, "gradient property", passed && measured_any, lines.join("; "))
}

/// Welfare maximum over aggregates on a grid of step 1/n, each aggregate
/// disaggregated assortatively: lowest types on strategy 2, highest on 0.
fn pigou_oracle(types: &[(f64, f64)], c: [f64; 3], offset: [f64; 3], n: usize) -> f64 {
    let mut sorted = types.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut cum_mass = vec![0.0];
    let mut cum_a = vec![0.0];
    for (a, w) in &sorted {
        cum_mass.push(cum_mass.last().unwrap() + w);
        cum_a.push(cum_a.last().unwrap() + w * a);
    }
    // Integral of the type over the lowest `m` units of mass.
    let low_integral = |m: f64| -> f64 {
        let i = cum_mass.partition_point(|v| *v <= m).clamp(1, sorted.len());
        cum_a[i - 1] + (m - cum_mass[i - 1]) * sorted[i - 1].0
    };
    let total_a = *cum_a.last().unwrap();
    let mut best = f64::NEG_INFINITY;
    for i in 0..=n {
        for j in 0..=(n - i) {
            let x2 = i as f64 / n as f64;
            let x1 = j as f64 / n as f64;
            let x0 = 1.0 - x1 - x2;
            let congestion = -(c[0] * x0 * x0 + c[1] * x1 * x1 + c[2] * x2 * x2);
            let ia2 = low_integral(x2);
            let ia12 = low_integral(x1 + x2);
            let idio = offset[2] * x2 - ia2 + offset[1] * x1 + offset[0] * x0 + (total_a - ia12);
            best = best.max(congestion + idio);
        }
    }
    best
}

fn pigouvian_pricing() -> Verdict {
    let cfg = common::load_scenario("pigouvian_congestion");
    let (grid, traj) = run_config(&cfg);
    let series = traj.welfare_series().expect("welfare recorded");
    let drop = worst_drop(&series);
    let terminal = welfare(&cfg.game, traj.final_state(), &grid).unwrap();
    let types: Vec<(f64, f64)> = (0..grid.len()).map(|k| (grid.node(k)[0], grid.weight(k))).collect();
    let oracle = pigou_oracle(&types, [1.0, 2.0, 3.0], [0.0, 1.4, 1.35], 2000);
    let gap = (terminal - oracle).abs();
    let passed = grid.len() == 50 && drop <= 1e-8 && gap <= 1e-3;
    Verdict::new(
        7,
        "Pigouvian implementation",
        passed,
        format!("K={}, worst welfare drop {drop:e}, terminal welfare {terminal:.6}, grid-search maximum {oracle:.6}, gap {gap:.1e}", grid.len()),
    )
}

fn nonaggregability() -> Verdict {
    let spread_of = |name: &str| {
        let cfg = common::load_scenario(name);
        let grid = cfg.build_grid().unwrap();
        let assignment = cfg.build_assignment(&grid).unwrap();
        let target = cfg.aggregability.target.clone().unwrap();
        aggregability_probe(&cfg.game, &assignment, &grid, &target, cfg.aggregability.n_states, cfg.seed)
            .unwrap()
            .spread
    };
    // Two states with aggregate (1/2, 1/2): the sorted assignment, where each
    // node already plays its best response (velocity 0), and the swapped
    // one, where Smith moves node 1 at rate 1.5 and node 2 at rate 0.5.
    let swapped_velocity = [0.5 * (-1.5 + 0.5), 0.5 * (1.5 - 0.5)];
    let oracle = swapped_velocity.iter().map(|v: &f64| v.abs()).sum::<f64>();
    let two = spread_of("two_node_smith");
    let one = spread_of("single_node_control");
    let passed = two > 0.1 && two >= oracle - 1e-12 && one <= 1e-12;
    Verdict::new(
        8,
        "nonaggregability",
        passed,
        format!("two-node spread {two} (hand-computed pair {oracle}), single-node spread {one:e}"),
    )
}

fn integrator_order() -> Verdict {
    let mut cfg = common::load_scenario("matching_logit_bnn");
    cfg.protocols = vec![ProtocolSpec::Logit { noise: 0.2 }];
    cfg.assignment = heterodyn::protocols::AssignmentRule::Uniform { protocol: 0 };
    let grid = cfg.build_grid().unwrap();
    let finals: Vec<Vec<Vec<f64>>> = [0.1, 0.05, 0.025]
        .iter()
        .map(|dt| {
            let mut c = cfg.clone();
            c.integrator = IntegratorConfig::new(Method::Rk4, *dt, 10.0);
            run_config(&c).1.final_state().rows().to_nested()
        })
        .collect();
    let e1 = weighted_distance(&finals[0], &finals[1], grid.weights());
    let e2 = weighted_distance(&finals[1], &finals[2], grid.weights());
    let order = (e1 / e2).log2();
    Verdict::new(
        9,
        "integrator order",
        order >= 3.5,
        format!("logit matching game, t_end 10: differences {e1:.2e}, {e2:.2e}, order {order:.3}"),
    )
}

fn oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0_f64;
    let mut count = 0;
    for protocol in [ProtocolSpec::Smith, ProtocolSpec::Logit { noise: 0.3 }, ProtocolSpec::Bnn] {
        for _ in 0..100 {
            let s = rng.gen_range(2..=4);
            let a: Vec<Vec<f64>> = (0..s).map(|_| (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let b: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let theta: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = simplex_point(&mut rng, s);
            let pi: Vec<f64> = (0..s)
                .map(|i| b[i] + theta[i] + (0..s).map(|j| a[i][j] * x[j]).sum::<f64>())
                .collect();
            let expected = homogeneous(&protocol, &pi, &x);

            let grid = TypeGrid::new(vec![theta.clone()], vec![1.0]).unwrap();
            let game = GameSpec::Asag(AsagGame {
                strategies: s,
                common: CommonPayoff::Linear { a, b },
                idiosyncratic: IdiosyncraticMap::Identity,
                pricing: false,
            });
            let assignment = ProtocolAssignment::uniform(protocol.clone(), 1);
            let state = ConditionalState::from_rows(&[x]).unwrap();
            let got = field(&game, &assignment, &state, &grid).unwrap();
            for (g, e) in got.v.row(0).iter().zip(&expected) {
                worst = worst.max((g - e).abs());
            }
            count += 1;
        }
    }
    Verdict::new(
        10,
        "homogeneous oracle equivalence",
        worst <= 1e-12,
        format!("{count} states over Smith, logit, BNN; largest elementwise difference {worst:e}"),
    )
}

/// Textbook single-population dynamics.
fn homogeneous(protocol: &ProtocolSpec, pi: &[f64], x: &[f64]) -> Vec<f64> {
    let s = pi.len();
    match protocol {
        ProtocolSpec::Smith => (0..s)
            .map(|i| {
                let inflow: f64 = (0..s).map(|j| x[j] * (pi[i] - pi[j]).max(0.0)).sum();
                let outflow: f64 = (0..s).map(|j| (pi[j] - pi[i]).max(0.0)).sum();
                inflow - x[i] * outflow
            })
            .collect(),
        ProtocolSpec::Logit { noise } => {
            let m = pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = pi.iter().map(|p| ((p - m) / noise).exp()).collect();
            let z: f64 = e.iter().sum();
            (0..s).map(|i| e[i] / z - x[i]).collect()
        }
        ProtocolSpec::Bnn => {
            let avg: f64 = pi.iter().zip(x).map(|(p, q)| p * q).sum();
            let excess: Vec<f64> = pi.iter().map(|p| (p - avg).max(0.0)).collect();
            let total: f64 = excess.iter().sum();
            (0..s).map(|i| excess[i] - x[i] * total).collect()
        }
        _ => unreachable!(),
    }
}
