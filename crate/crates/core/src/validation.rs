//! The acceptance suite: each check runs one scenario against its oracle and
//! reports pass/fail with the measured error.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::curvature::{count_linear_pieces, CurvatureEngine, CurvatureError, GammaKind};
use crate::flow::{
    edge_drift, evaluate, integrate, total_weight, EventKind, FlowConfig, FlowError, FlowMode,
    FlowTrajectory, Integrator, Termination,
};
use crate::graph::{GraphError, WeightedGraph};
use crate::oracles::{
    eigenvalues_2x2, path2_solution, path_curvature_expected, star_expected, transport_bruteforce,
    unnormalized_path2_matrix, unnormalized_path2_solution, OracleError, Path2Regime,
};
use crate::surgery::{run_flow_with_surgery, SurgeryConfig, SurgeryError};
use crate::transport::{min_cost_transport, w1_dual, TransportError, TransportProblem};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Surgery(#[from] SurgeryError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub seed: u64,
    /// Added to every LP curvature inside the star check. Zero in real runs;
    /// anything else must make that check fail.
    pub star_kappa_mutation: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            seed: 2024,
            star_kappa_mutation: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {}: {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

type CheckFn = fn(&ValidationOptions) -> Result<(bool, String), ValidationError>;

pub const CHECKS: [(usize, &str, CheckFn); 10] = [
    (1, "constant-regime", constant_regime),
    (2, "stable-regime", stable_regime),
    (3, "collapsing-regime", collapsing_regime),
    (4, "path-curvature", path_curvature),
    (5, "star-convergence", star_convergence),
    (6, "unnormalized-collapse", unnormalized_collapse),
    (7, "transport-oracle", transport_oracle),
    (8, "curvature-bounds", curvature_bounds),
    (9, "conservation", conservation),
    (10, "limit-consistency", limit_consistency),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.1).collect()
}

pub fn run_check(id: usize, options: &ValidationOptions) -> Option<CheckOutcome> {
    let &(id, name, check) = CHECKS.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = match check(options) {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(CheckOutcome {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every check whose name contains `filter` (all when `None`).
pub fn run_validation(options: &ValidationOptions, filter: Option<&str>) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .filter(|c| filter.map_or(true, |f| c.1.contains(f)))
        .filter_map(|c| run_check(c.0, options))
        .collect()
}

/// Random connected graph: a random recursive tree plus each remaining pair
/// with probability `extra`, weights uniform in `[lo, hi)`.
pub fn random_connected_graph(rng: &mut impl Rng, n: usize, extra: f64, lo: f64, hi: f64) -> WeightedGraph {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.push((u, v, rng.gen_range(lo..hi)));
    }
    for u in 0..n {
        for v in u + 1..n {
            if !edges.iter().any(|e| e.0 == u && e.1 == v) && rng.gen_bool(extra) {
                edges.push((u, v, rng.gen_range(lo..hi)));
            }
        }
    }
    WeightedGraph::new(n, edges).expect("tree plus chords is connected and simple")
}

/// Replaces every edge weight by the distance between its endpoints, so all
/// edges are geodesics.
pub fn metric_closure(g: &WeightedGraph) -> WeightedGraph {
    let d = g.all_pairs_distances();
    let w: Vec<f64> = g.edges().iter().map(|e| d.get(e.u, e.v)).collect();
    g.with_weights(&w).expect("distances are positive")
}

pub fn unit_weights(g: &WeightedGraph) -> WeightedGraph {
    g.with_weights(&vec![1.0; g.edge_count()]).expect("unit weights are positive")
}

fn path(weights: &[f64]) -> Result<WeightedGraph, GraphError> {
    WeightedGraph::new(
        weights.len() + 1,
        weights.iter().enumerate().map(|(i, &w)| (i, i + 1, w)),
    )
}

fn star(weights: &[f64]) -> Result<WeightedGraph, GraphError> {
    WeightedGraph::new(
        weights.len() + 1,
        weights.iter().enumerate().map(|(i, &w)| (0, i + 1, w)),
    )
}

fn simplex_point(rng: &mut impl Rng, k: usize, lo: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(lo..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

fn rk4(gamma: GammaKind, horizon: f64, output_interval: f64) -> FlowConfig {
    FlowConfig {
        gamma,
        integrator: Integrator::Rk4,
        h: 1e-3,
        horizon,
        tolerance: 0.0,
        output_interval,
        ..FlowConfig::default()
    }
}

fn sample_at(traj: &FlowTrajectory, t: f64) -> Option<&crate::flow::Sample> {
    traj.samples.iter().find(|s| (s.t - t).abs() < 1e-9)
}

fn constant_regime(_: &ValidationOptions) -> Result<(bool, String), ValidationError> {
    let w0 = [0.3, 0.7];
    let traj = integrate(&path(&w0)?, &rk4(GammaKind::Reciprocal, 10.0, 0.01))?;
    let mut drift: f64 = 0.0;
    let mut kappa_err: f64 = 0.0;
    for s in &traj.samples {
        for (w, w0) in s.w.iter().zip(w0) {
            drift = drift.max((w - w0).abs());
        }
        for k in &s.kappa {
            kappa_err = kappa_err.max((k - 1.0).abs());
        }
    }
    let reached = traj.final_state.t == 10.0;
    Ok((
        reached && drift <= 1e-8 && kappa_err <= 1e-9,
        format!("t_end={} max drift {drift:.2e}, max |κ−1| {kappa_err:.2e}", traj.final_state.t),
    ))
}

fn stable_regime(_: &ValidationOptions) -> Result<(bool, String), ValidationError> {
    let traj = integrate(&path(&[0.2, 0.8])?, &rk4(GammaKind::Identity, 5.0, 0.5))?;
    let mut worst: f64 = 0.0;
    for t in [0.5, 1.0, 2.0, 5.0] {
        let Some(s) = sample_at(&traj, t) else {
            return Ok((false, format!("no sample at t={t}")));
        };
        worst = worst.max((s.w[0] - (0.5 - 0.3 * (-2.0 * t).exp())).abs());
    }
    Ok((worst <= 1e-6, format!("max |w_xz − closed form| {worst:.2e}")))
}

fn collapsing_regime(_: &ValidationOptions) -> Result<(bool, String), ValidationError> {
    let mut config = rk4(GammaKind::ReciprocalSquare, 200.0, 0.01);
    config.mt = 1e-3;
    let traj = integrate(&path(&[0.6, 0.4])?, &config)?;
    let series = traj.weight_series(1);
    let monotone = series.windows(2).all(|p| p[1].1 < p[0].1);
    let Termination::Event(event) = traj.termination else {
        return Ok((false, format!("no event before t={}", traj.final_state.t)));
    };
    let contract = event.kind == EventKind::Contract && (event.u, event.v) == (1, 2);
    let kappa_xz = traj.final_kappa.first().copied().unwrap_or(f64::NAN);
    let kappa_yz = traj.final_kappa.get(1).copied().unwrap_or(f64::NAN);
    // the reference integration must agree on the crossing state too
    let (ref_xz, _) = path2_solution(Path2Regime::Collapsing, (0.6, 0.4), event.t)?;
    let reference_ok = (ref_xz - traj.final_state.w[0]).abs() <= 1e-6;
    let passed = monotone && contract && reference_ok && (kappa_xz - 2.0).abs() <= 1e-3;
    Ok((
        passed,
        format!(
            "w_yz monotone={monotone}, {} ({},{}) at t={:.4} with w_yz={:.3e}; κ_xz={kappa_xz:.6} (|κ_xz−2|={:.3e}), κ_yz={kappa_yz:.6}; reference gap {:.1e}",
            event.kind,
            event.u,
            event.v,
            event.t,
            traj.final_state.w[1],
            (kappa_xz - 2.0).abs(),
            (ref_xz - traj.final_state.w[0]).abs()
        ),
    ))
}

fn path_curvature(options: &ValidationOptions) -> Result<(bool, String), ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 4);
    let expected = path_curvature_expected(6);
    let mut kappa_err: f64 = 0.0;
    let mut failures = Vec::new();
    let mut worst_rate: f64 = 0.0;
    for trial in 0..10 {
        let g = path(&simplex_point(&mut rng, 6, 0.05))?;
        let kappa = CurvatureEngine::new(&g, GammaKind::Reciprocal).all_edges()?;
        for (k, e) in kappa.iter().zip(&expected) {
            kappa_err = kappa_err.max((k - e).abs());
        }
        let config = SurgeryConfig {
            flow: FlowConfig {
                gamma: GammaKind::Reciprocal,
                integrator: Integrator::Rk45,
                mt: 1e-3,
                renormalize: true,
                output_interval: 1.0,
                ..FlowConfig::default()
            },
            ..SurgeryConfig::default()
        };
        let r = run_flow_with_surgery(&g, &config)?;
        let rate = evaluate(&r.final_graph, &config.flow, &r.final_graph.weights())?.max_abs();
        worst_rate = worst_rate.max(rate);
        let is_path2 = r.final_graph.edge_count() == 2
            && r.final_graph.vertex_count() == 3
            && r.final_graph.vertices().all(|v| r.final_graph.degree(v) <= 2);
        if !is_path2 || rate >= 1e-10 {
            failures.push(trial);
        }
    }
    Ok((
        kappa_err <= 1e-9 && failures.is_empty(),
        format!(
            "max |κ − pattern| {kappa_err:.2e}; final max|dw/dt| {worst_rate:.2e}; runs not ending at a stationary path-2: {failures:?}"
        ),
    ))
}

fn sign_class(x: f64) -> i8 {
    if x.abs() <= 1e-10 {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

fn star_convergence(options: &ValidationOptions) -> Result<(bool, String), ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 5);
    let mut weight_err: f64 = 0.0;
    let mut kappa_err: f64 = 0.0;
    let mut sign_flips = 0;
    for d in [3usize, 5, 8] {
        for _ in 0..5 {
            let w0 = simplex_point(&mut rng, d, 0.1);
            let config = FlowConfig {
                integrator: Integrator::Rk45,
                horizon: 50.0,
                tolerance: 0.0,
                output_interval: 0.5,
                ..FlowConfig::default()
            };
            let traj = integrate(&star(&w0)?, &config)?;
            if traj.final_state.t != 50.0 {
                return Ok((false, format!("d={d}: stopped at t={}", traj.final_state.t)));
            }
            for w in &traj.final_state.w {
                weight_err = weight_err.max((w - 1.0 / d as f64).abs());
            }
            let f0: Vec<i8> = star_expected(d, &w0)?.drift.into_iter().map(sign_class).collect();
            for s in &traj.samples {
                let kappa: Vec<f64> = s.kappa.iter().map(|k| k + options.star_kappa_mutation).collect();
                let expected = star_expected(d, &s.w)?;
                for (k, e) in kappa.iter().zip(&expected.kappa) {
                    kappa_err = kappa_err.max((k - e).abs());
                }
                for (f, s0) in edge_drift(&kappa, &s.w).into_iter().zip(&f0) {
                    let now = sign_class(f);
                    // decaying into the zero band is convergence, not a sign change
                    if now != *s0 && !(now == 0 && *s0 != 0) {
                        sign_flips += 1;
                    }
                }
            }
        }
    }
    Ok((
        weight_err <= 1e-5 && kappa_err <= 1e-9 && sign_flips == 0,
        format!(
            "max |w − 1/d| at t=50 {weight_err:.2e}; max |κ_LP − κ_formula| {kappa_err:.2e}; F sign changes {sign_flips}"
        ),
    ))
}

fn unnormalized_collapse(_: &ValidationOptions) -> Result<(bool, String), ValidationError> {
    let w0 = (0.5, 0.5);
    let mut config = rk4(GammaKind::Reciprocal, 2.0, 0.5);
    config.mode = FlowMode::Unnormalized;
    let traj = integrate(&path(&[w0.0, w0.1])?, &config)?;
    let mut worst: f64 = 0.0;
    for t in [1.0, 2.0] {
        let Some(s) = sample_at(&traj, t) else {
            return Ok((false, format!("no sample at t={t}")));
        };
        let (a, b) = unnormalized_path2_solution(w0, t)?;
        worst = worst.max((s.w[0] - a).abs()).max((s.w[1] - b).abs());
    }
    let mut eig_err: f64 = 0.0;
    for a_x in [0.5, 0.1, 0.3, 0.9] {
        match eigenvalues_2x2(unnormalized_path2_matrix(a_x)) {
            Some((l1, l2)) => eig_err = eig_err.max((l1 + 1.0).abs()).max((l2 + 2.0).abs()),
            None => eig_err = f64::INFINITY,
        }
    }
    Ok((
        worst <= 1e-6 && eig_err <= 1e-12,
        format!("max |w − w0 e^(−t)| {worst:.2e}; eigenvalue error {eig_err:.2e}"),
    ))
}

fn transport_oracle(options: &ValidationOptions) -> Result<(bool, String), ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 7);
    let mut primal_err: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=6);
        let g = random_connected_graph(&mut rng, n, 0.3, 0.1, 1.0);
        let metric = g.all_pairs_distances();
        let vertices: Vec<usize> = (0..n).collect();
        let pick = |rng: &mut ChaCha8Rng| {
            let k = rng.gen_range(1..=n.min(4));
            let chosen: Vec<usize> = vertices.choose_multiple(rng, k).copied().collect();
            chosen.into_iter().zip(simplex_point(rng, k, 0.05)).collect::<Vec<_>>()
        };
        let sources = pick(&mut rng);
        let sinks = pick(&mut rng);
        let p = TransportProblem::new(sources, sinks, &metric)?;
        let primal = min_cost_transport(&p)?.cost;
        primal_err = primal_err.max((primal - transport_bruteforce(&p)?).abs());
        gap = gap.max((primal - w1_dual(&p)?).abs());
    }
    Ok((
        primal_err <= 1e-10 && gap <= 1e-7,
        format!("200 problems: max |SSP − brute force| {primal_err:.2e}, max duality gap {gap:.2e}"),
    ))
}

fn curvature_bounds(options: &ValidationOptions) -> Result<(bool, String), ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 8);
    let gammas = [GammaKind::Reciprocal, GammaKind::Identity, GammaKind::ReciprocalSquare];
    let mut violations = 0;
    let mut edges = 0;
    let mut min_slack = f64::INFINITY;
    for i in 0..50 {
        let n = rng.gen_range(2..=10);
        let g = metric_closure(&random_connected_graph(&mut rng, n, 0.3, 0.1, 1.0));
        let engine = CurvatureEngine::new(&g, gammas[i % gammas.len()]);
        for e in g.edges() {
            let k = engine.lly_curvature(e.u, e.v)?;
            let b = engine.bounds(e.u, e.v)?;
            edges += 1;
            min_slack = min_slack.min(k - b.coupling_lower);
            if k < b.generic_lower - 1e-9 || k > b.upper + 1e-9 || b.coupling_lower > k + 1e-9 {
                violations += 1;
            }
        }
    }
    Ok((
        violations == 0,
        format!("{edges} edges on 50 graphs, {violations} violations; min κ − coupling bound {min_slack:.2e}"),
    ))
}

fn conservation(options: &ValidationOptions) -> Result<(bool, String), ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 9);
    let w0 = simplex_point(&mut rng, 4, 0.1);
    let g = star(&w0)?;
    let mut normalized = rk4(GammaKind::Reciprocal, 10.0, 0.5);
    normalized.conserve_total = false;
    let traj = integrate(&g, &normalized)?;
    let mut mass_err: f64 = 0.0;
    for s in &traj.samples {
        mass_err = mass_err.max((total_weight(&s.w) - 1.0).abs());
    }
    let unnormalized = FlowConfig {
        mode: FlowMode::Unnormalized,
        ..normalized.clone()
    };
    let raw = integrate(&g, &unnormalized)?;
    let mut map_err: f64 = 0.0;
    for t in [1.0, 5.0, 10.0] {
        let (Some(a), Some(b)) = (sample_at(&traj, t), sample_at(&raw, t)) else {
            return Ok((false, format!("no sample at t={t}")));
        };
        let total = total_weight(&b.w);
        for (x, y) in a.w.iter().zip(&b.w) {
            map_err = map_err.max((x - y / total).abs());
        }
    }
    Ok((
        mass_err <= 1e-8 && map_err <= 1e-5,
        format!("max |Σw − 1| {mass_err:.2e}; max |w − w̃/Σw̃| {map_err:.2e}"),
    ))
}

fn limit_consistency(options: &ValidationOptions) -> Result<(bool, String), ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 10);
    let grid = [0.99, 0.995, 0.999, 0.9995, 0.9999];
    let alphas: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
    let mut limit_err: f64 = 0.0;
    let mut max_pieces = 0;
    let mut edges = 0;
    for i in 0..20 {
        let n = rng.gen_range(2..=8);
        let base = random_connected_graph(&mut rng, n, 0.35, 0.1, 1.0);
        let g = metric_closure(&base);
        let gamma = [GammaKind::Reciprocal, GammaKind::Identity][i % 2];
        let engine = CurvatureEngine::new(&g, gamma);
        for e in g.edges() {
            let lp = engine.lly_curvature(e.u, e.v)?;
            let ex = engine.lly_curvature_extrapolated(e.u, e.v, &grid)?;
            limit_err = limit_err.max((lp - ex).abs());
            edges += 1;
        }
        let unit = unit_weights(&base);
        let engine = CurvatureEngine::new(&unit, GammaKind::Reciprocal);
        for e in unit.edges() {
            let points = alphas
                .iter()
                .map(|&a| Ok((a, engine.alpha_ricci(e.u, e.v, a)?)))
                .collect::<Result<Vec<_>, CurvatureError>>()?;
            max_pieces = max_pieces.max(count_linear_pieces(&points, 1e-9));
        }
    }
    Ok((
        limit_err <= 1e-5 && max_pieces <= 3,
        format!("{edges} edges: max |κ_LP − κ_extrapolated| {limit_err:.2e}; max linear pieces {max_pieces}"),
    ))
}
