//! Normalized and unnormalized continuous Ricci flow on edge weights, with
//! fixed-step and adaptive integrators and surgery-event monitoring.
//!
//! Curvature is re-evaluated from scratch at every integrator stage. Events
//! are checked at accepted step boundaries only; the flow itself never edits
//! the graph.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvature::{CurvatureEngine, CurvatureError, GammaKind};
use crate::graph::{GraphError, WeightedGraph};
use crate::tolerance::DISTANCE_CONDITION_TOL;

const MAX_HALVINGS: usize = 40;
const CALM_STEPS: usize = 10;

/// Human-readable statement of how deletion is triggered, stored with every
/// trajectory.
pub const DELETE_CONDITION: &str =
    "delete uv when w_uv exceeds the shortest u-v path avoiding uv by more than 1e-12";

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("step size underflow at t = {t}: weights cannot stay positive")]
    StepUnderflow { t: f64 },
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowMode {
    Normalized,
    Unnormalized,
}

impl FromStr for FlowMode {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normalized" => Ok(FlowMode::Normalized),
            "unnormalized" => Ok(FlowMode::Unnormalized),
            _ => Err(FlowError::InvalidConfig(format!("unknown mode `{s}`"))),
        }
    }
}

impl fmt::Display for FlowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowMode::Normalized => "normalized",
            FlowMode::Unnormalized => "unnormalized",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
    Rk45,
}

impl FromStr for Integrator {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            "rk45" => Ok(Integrator::Rk45),
            _ => Err(FlowError::InvalidConfig(format!("unknown integrator `{s}`"))),
        }
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
            Integrator::Rk45 => "rk45",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub mode: FlowMode,
    pub gamma: GammaKind,
    pub integrator: Integrator,
    /// Fixed step, or the first trial step for `Rk45`.
    pub h: f64,
    /// Merge threshold: an edge lighter than this is contracted.
    pub mt: f64,
    pub renormalize: bool,
    /// Length of one integration segment.
    pub horizon: f64,
    /// Convergence threshold on max |dw/dt|; zero disables convergence.
    pub tolerance: f64,
    /// Absolute and relative error target for `Rk45`.
    pub adaptive_tol: f64,
    pub max_step: f64,
    pub output_interval: f64,
    /// In normalized mode, rescale each accepted state back to Σw = 1 when
    /// the segment starts there. The constraint surface is invariant but
    /// repelling (Σw − 1 grows like exp(∫Σκw)), so round-off would
    /// otherwise swamp long runs.
    pub conserve_total: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            mode: FlowMode::Normalized,
            gamma: GammaKind::Reciprocal,
            integrator: Integrator::Rk4,
            h: 1e-3,
            mt: 1e-3,
            renormalize: false,
            horizon: 100.0,
            tolerance: 1e-10,
            adaptive_tol: 1e-10,
            max_step: 0.5,
            output_interval: 0.1,
            conserve_total: true,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let positive = [
            ("h", self.h),
            ("mt", self.mt),
            ("horizon", self.horizon),
            ("adaptive tolerance", self.adaptive_tol),
            ("max step", self.max_step),
            ("output interval", self.output_interval),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(FlowError::InvalidConfig(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.tolerance >= 0.0) {
            return Err(FlowError::InvalidConfig(format!(
                "tolerance must be non-negative, got {}",
                self.tolerance
            )));
        }
        self.gamma.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub w: Vec<f64>,
}

/// Right-hand side at one state, with the curvatures it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub dw: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl Derivative {
    pub fn max_abs(&self) -> f64 {
        self.dw.iter().fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// Per-edge drift `F_e = Σ_h κ_h w_h − κ_e`.
pub fn edge_drift(kappa: &[f64], w: &[f64]) -> Vec<f64> {
    let s: f64 = kappa.iter().zip(w).map(|(k, w)| k * w).sum();
    kappa.iter().map(|k| s - k).collect()
}

pub fn total_weight(w: &[f64]) -> f64 {
    w.iter().sum()
}

fn curvatures(g: &WeightedGraph, gamma: GammaKind, w: &[f64]) -> Result<Vec<f64>, FlowError> {
    let gw = g.with_weights(w)?;
    Ok(CurvatureEngine::new(&gw, gamma).all_edges()?)
}

/// `dw_e/dt = −κ_e w_e + w_e Σ_h κ_h w_h` on the topology of `g`.
pub fn rhs_normalized(g: &WeightedGraph, gamma: GammaKind, w: &[f64]) -> Result<Derivative, FlowError> {
    let kappa = curvatures(g, gamma, w)?;
    let dw = edge_drift(&kappa, w).iter().zip(w).map(|(f, w)| w * f).collect();
    Ok(Derivative { dw, kappa })
}

/// `dw_e/dt = −κ_e w_e`.
pub fn rhs_unnormalized(g: &WeightedGraph, gamma: GammaKind, w: &[f64]) -> Result<Derivative, FlowError> {
    let kappa = curvatures(g, gamma, w)?;
    let dw = kappa.iter().zip(w).map(|(k, w)| -k * w).collect();
    Ok(Derivative { dw, kappa })
}

pub fn evaluate(g: &WeightedGraph, config: &FlowConfig, w: &[f64]) -> Result<Derivative, FlowError> {
    match config.mode {
        FlowMode::Normalized => rhs_normalized(g, config.gamma, w),
        FlowMode::Unnormalized => rhs_unnormalized(g, config.gamma, w),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Delete,
    Contract,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Delete => "delete",
            EventKind::Contract => "contract",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub t: f64,
    pub kind: EventKind,
    pub u: usize,
    pub v: usize,
}

/// First edge (in lexicographic order) that must be deleted or contracted.
/// Deletion takes precedence when one edge meets both conditions.
pub fn detect_event(g: &WeightedGraph, mt: f64, t: f64) -> Option<FlowEvent> {
    g.edges().iter().enumerate().find_map(|(i, e)| {
        let kind = if e.w - g.alternative_distance(i) > DISTANCE_CONDITION_TOL {
            EventKind::Delete
        } else if e.w < mt {
            EventKind::Contract
        } else {
            return None;
        };
        Some(FlowEvent {
            t,
            kind,
            u: e.u,
            v: e.v,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub w: Vec<f64>,
    pub kappa: Vec<f64>,
    pub max_derivative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "lowercase")]
pub enum Termination {
    Horizon,
    Converged,
    Event(FlowEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub mode: FlowMode,
    pub gamma: String,
    pub integrator: Integrator,
    pub h: f64,
    pub mt: f64,
    pub delete_condition: String,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    /// Edge keys, in the order of every weight vector below.
    pub edges: Vec<(usize, usize)>,
    pub samples: Vec<Sample>,
    pub termination: Termination,
    pub final_state: FlowState,
    /// Curvatures at the final state; empty when it ended on a deletion
    /// event, where curvature is undefined.
    pub final_kappa: Vec<f64>,
    pub final_max_derivative: f64,
    pub metadata: TrajectoryMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: f64,
    pub edge_u: usize,
    pub edge_v: usize,
    pub w: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsDocument {
    pub events: Vec<FlowEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<TrajectoryMetadata>,
}

impl FlowTrajectory {
    pub fn events(&self) -> Vec<FlowEvent> {
        match self.termination {
            Termination::Event(e) => vec![e],
            _ => Vec::new(),
        }
    }

    /// Sample closest to time `t`.
    pub fn sample_at(&self, t: f64) -> Option<&Sample> {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    pub fn weight_series(&self, edge: usize) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.w[edge])).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FlowError> {
        let mut writer = csv::Writer::from_writer(out);
        for s in &self.samples {
            for (i, &(u, v)) in self.edges.iter().enumerate() {
                writer.serialize(CsvRow {
                    t: s.t,
                    edge_u: u,
                    edge_v: v,
                    w: s.w[i],
                    kappa: s.kappa.get(i).copied().unwrap_or(f64::NAN),
                })?;
            }
        }
        writer.flush()?;
        Ok(())
    }

    pub fn events_document(&self) -> EventsDocument {
        EventsDocument {
            events: self.events(),
            metadata: Some(self.metadata.clone()),
        }
    }
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, FlowError> {
    let mut reader = csv::Reader::from_reader(input);
    let rows = reader.deserialize().collect::<Result<Vec<CsvRow>, _>>()?;
    Ok(rows)
}

// Dormand–Prince 5(4) tableau
const DP_A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn combine(w: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = w.to_vec();
    for &(c, k) in terms {
        if c != 0.0 {
            for (o, d) in out.iter_mut().zip(k) {
                *o += h * c * d;
            }
        }
    }
    out
}

struct Attempt {
    w: Vec<f64>,
    deriv: Option<Derivative>,
    h: f64,
    next_h: f64,
}

struct Stepper<'a> {
    graph: &'a WeightedGraph,
    config: &'a FlowConfig,
    rejected: usize,
}

impl Stepper<'_> {
    /// Derivative at a trial state, or `None` if the state is inadmissible
    /// (a non-positive weight or a broken distance condition).
    fn trial(&self, w: &[f64]) -> Result<Option<Derivative>, FlowError> {
        if w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Ok(None);
        }
        match evaluate(self.graph, self.config, w) {
            Ok(d) => Ok(Some(d)),
            Err(FlowError::Curvature(CurvatureError::DistanceConditionViolated { .. })) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn admissible(w: &[f64]) -> bool {
        w.iter().all(|x| *x > 0.0 && x.is_finite())
    }

    fn fixed(&self, w: &[f64], k1: &Derivative, h: f64) -> Result<Option<Vec<f64>>, FlowError> {
        match self.config.integrator {
            Integrator::Euler => Ok(Some(combine(w, h, &[(1.0, &k1.dw)]))),
            Integrator::Rk4 => {
                let Some(k2) = self.trial(&combine(w, h, &[(0.5, &k1.dw)]))? else {
                    return Ok(None);
                };
                let Some(k3) = self.trial(&combine(w, h, &[(0.5, &k2.dw)]))? else {
                    return Ok(None);
                };
                let Some(k4) = self.trial(&combine(w, h, &[(1.0, &k3.dw)]))? else {
                    return Ok(None);
                };
                Ok(Some(combine(
                    w,
                    h,
                    &[
                        (1.0 / 6.0, &k1.dw),
                        (1.0 / 3.0, &k2.dw),
                        (1.0 / 3.0, &k3.dw),
                        (1.0 / 6.0, &k4.dw),
                    ],
                )))
            }
            Integrator::Rk45 => unreachable!("adaptive steps go through `adaptive`"),
        }
    }

    /// One Dormand–Prince trial: the fifth-order state, its derivative and
    /// the scaled error norm, or `None` if a stage was inadmissible.
    fn dormand_prince(
        &self,
        w: &[f64],
        k1: &Derivative,
        h: f64,
    ) -> Result<Option<(Vec<f64>, Derivative, f64)>, FlowError> {
        let mut ks: Vec<Vec<f64>> = vec![k1.dw.clone()];
        let mut last = None;
        for row in DP_A {
            let terms: Vec<(f64, &[f64])> =
                row.iter().zip(&ks).map(|(&a, k)| (a, k.as_slice())).collect();
            let stage = combine(w, h, &terms);
            let Some(d) = self.trial(&stage)? else {
                return Ok(None);
            };
            ks.push(d.dw.clone());
            last = Some((stage, d));
        }
        let (y5, d7) = last.expect("tableau has stages");
        let tol = self.config.adaptive_tol;
        let mut err: f64 = 0.0;
        for i in 0..w.len() {
            let e: f64 = h * DP_E.iter().zip(&ks).map(|(c, k)| c * k[i]).sum::<f64>();
            let scale = tol + tol * w[i].abs().max(y5[i].abs());
            err = err.max(e.abs() / scale);
        }
        Ok(Some((y5, d7, err)))
    }

    fn step(&mut self, w: &[f64], k1: &Derivative, h: f64, t: f64) -> Result<Attempt, FlowError> {
        if self.config.integrator == Integrator::Rk45 {
            return self.adaptive(w, k1, h, t);
        }
        let mut h = h;
        for _ in 0..=MAX_HALVINGS {
            if let Some(next) = self.fixed(w, k1, h)? {
                if Self::admissible(&next) {
                    return Ok(Attempt {
                        w: next,
                        deriv: None,
                        h,
                        next_h: self.config.h,
                    });
                }
            }
            self.rejected += 1;
            h *= 0.5;
        }
        Err(FlowError::StepUnderflow { t })
    }

    fn adaptive(&mut self, w: &[f64], k1: &Derivative, h: f64, t: f64) -> Result<Attempt, FlowError> {
        let mut h = h;
        let mut halvings = 0;
        loop {
            match self.dormand_prince(w, k1, h)? {
                Some((next, d, err)) if err <= 1.0 && Self::admissible(&next) => {
                    let grow = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    return Ok(Attempt {
                        w: next,
                        deriv: Some(d),
                        h,
                        next_h: (h * grow).min(self.config.max_step),
                    });
                }
                Some((next, _, err)) if Self::admissible(&next) && err.is_finite() => {
                    self.rejected += 1;
                    h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                }
                _ => {
                    self.rejected += 1;
                    halvings += 1;
                    h *= 0.5;
                }
            }
            if halvings > MAX_HALVINGS || h <= f64::EPSILON * t.abs().max(1.0) {
                return Err(FlowError::StepUnderflow { t });
            }
        }
    }
}

/// One accepted integrator step of nominal size `config.h`.
pub fn step(state: &FlowState, config: &FlowConfig, g: &WeightedGraph) -> Result<FlowState, FlowError> {
    config.validate()?;
    let mut stepper = Stepper {
        graph: g,
        config,
        rejected: 0,
    };
    let k1 = evaluate(g, config, &state.w)?;
    let a = stepper.step(&state.w, &k1, config.h, state.t)?;
    Ok(FlowState {
        t: state.t + a.h,
        w: a.w,
    })
}

pub fn integrate(g: &WeightedGraph, config: &FlowConfig) -> Result<FlowTrajectory, FlowError> {
    integrate_from(g, config, 0.0)
}

/// Integrates from the weights of `g` at time `t0` until `t0 + horizon`,
/// convergence, or the first surgery event.
pub fn integrate_from(g: &WeightedGraph, config: &FlowConfig, t0: f64) -> Result<FlowTrajectory, FlowError> {
    config.validate()?;
    let edges: Vec<(usize, usize)> = g.edges().iter().map(|e| e.key()).collect();
    let end = t0 + config.horizon;
    let mut stepper = Stepper {
        graph: g,
        config,
        rejected: 0,
    };
    let mut accepted = 0;
    let mut w = g.weights();
    let mut t = t0;
    let mut samples = Vec::new();
    let project = config.conserve_total
        && config.mode == FlowMode::Normalized
        && (total_weight(&w) - 1.0).abs() <= 1e-9;

    let finish = |samples: Vec<Sample>,
                  t: f64,
                  w: Vec<f64>,
                  deriv: Option<&Derivative>,
                  termination: Termination,
                  accepted: usize,
                  rejected: usize| FlowTrajectory {
        edges: edges.clone(),
        samples,
        termination,
        final_state: FlowState { t, w },
        final_kappa: deriv.map(|d| d.kappa.clone()).unwrap_or_default(),
        final_max_derivative: deriv.map_or(f64::NAN, Derivative::max_abs),
        metadata: TrajectoryMetadata {
            mode: config.mode,
            gamma: config.gamma.to_string(),
            integrator: config.integrator,
            h: config.h,
            mt: config.mt,
            delete_condition: DELETE_CONDITION.to_string(),
            accepted_steps: accepted,
            rejected_steps: rejected,
        },
    };
    let sample = |t: f64, w: &[f64], d: Option<&Derivative>| Sample {
        t,
        w: w.to_vec(),
        kappa: d.map(|d| d.kappa.clone()).unwrap_or_default(),
        max_derivative: d.map_or(f64::NAN, Derivative::max_abs),
    };

    if let Some(event) = detect_event(&g.with_weights(&w)?, config.mt, t) {
        let deriv = stepper.trial(&w)?;
        samples.push(sample(t, &w, deriv.as_ref()));
        return Ok(finish(samples, t, w, deriv.as_ref(), Termination::Event(event), 0, 0));
    }
    let mut deriv = evaluate(g, config, &w)?;
    samples.push(sample(t, &w, Some(&deriv)));
    let mut sample_index = 1usize;
    let mut next_sample = t0 + config.output_interval;
    let mut h = config.h.min(config.max_step);
    let mut calm = 0;

    loop {
        let target = next_sample.min(end);
        let remaining = target - t;
        let clipped = remaining <= h * (1.0 + 1e-6);
        let trial_h = if clipped { remaining } else { h };
        let a = stepper.step(&w, &deriv, trial_h, t)?;
        accepted += 1;
        t = if clipped && a.h == remaining { target } else { t + a.h };
        if config.integrator == Integrator::Rk45 && !(clipped && a.h == remaining) {
            h = a.next_h;
        } else if config.integrator == Integrator::Rk45 {
            h = h.max(a.next_h.min(config.max_step));
        }
        w = a.w;
        let mut fresh = a.deriv;
        if project {
            let s = total_weight(&w);
            w.iter_mut().for_each(|x| *x /= s);
            fresh = None;
        }

        if let Some(event) = detect_event(&g.with_weights(&w)?, config.mt, t) {
            let d = stepper.trial(&w)?;
            samples.push(sample(t, &w, d.as_ref()));
            let rejected = stepper.rejected;
            return Ok(finish(samples, t, w, d.as_ref(), Termination::Event(event), accepted, rejected));
        }
        deriv = match fresh {
            Some(d) => d,
            None => evaluate(g, config, &w)?,
        };

        let at_sample = t == next_sample;
        if at_sample {
            samples.push(sample(t, &w, Some(&deriv)));
            sample_index += 1;
            next_sample = t0 + sample_index as f64 * config.output_interval;
        }
        calm = if deriv.max_abs() < config.tolerance { calm + 1 } else { 0 };
        let termination = if calm >= CALM_STEPS {
            Some(Termination::Converged)
        } else if t >= end {
            Some(Termination::Horizon)
        } else {
            None
        };
        if let Some(termination) = termination {
            if !at_sample {
                samples.push(sample(t, &w, Some(&deriv)));
            }
            let rejected = stepper.rejected;
            return Ok(finish(samples, t, w, Some(&deriv), termination, accepted, rejected));
        }
    }
}
