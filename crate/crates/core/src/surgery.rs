//! The flow-with-surgery driver: integrate, cut or contract the offending
//! edge, restart, and label surviving edges by hierarchy level.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvature::{CurvatureEngine, CurvatureError, CurvatureReport};
use crate::flow::{integrate_from, EventKind, FlowConfig, FlowError, Termination};
use crate::graph::{GraphDocument, GraphError, MergeMap, WeightedGraph};

const PERTURBATION: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SurgeryError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("no convergence or surgery within horizon {horizon} (segment started at t = {start})")]
    NonConvergence { horizon: f64, start: f64 },
    #[error("surgery limit of {0} reached")]
    SurgeryLimit(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryConfig {
    pub flow: FlowConfig,
    /// On a horizon without convergence, jitter the segment's starting
    /// weights by a seeded factor in [1 − 1e-6, 1 + 1e-6] and retry once.
    pub perturb: bool,
    pub seed: u64,
    pub max_surgeries: usize,
}

impl Default for SurgeryConfig {
    fn default() -> Self {
        SurgeryConfig {
            flow: FlowConfig::default(),
            perturb: false,
            seed: 0,
            max_surgeries: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurgeryEvent {
    pub t: f64,
    pub kind: EventKind,
    pub u: usize,
    pub v: usize,
    pub level: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeLabel {
    pub u: usize,
    pub v: usize,
    pub level: usize,
}

#[derive(Debug, Clone)]
pub struct HierarchyResult {
    pub initial: WeightedGraph,
    pub final_graph: WeightedGraph,
    pub labels: Vec<EdgeLabel>,
    pub merges: MergeMap,
    pub events: Vec<SurgeryEvent>,
    pub curvature: CurvatureReport,
    pub levels: usize,
    pub final_time: f64,
    pub perturbed: bool,
}

/// JSON form of a [`HierarchyResult`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub final_graph: GraphDocument,
    pub events: Vec<SurgeryEvent>,
    pub labels: Vec<EdgeLabel>,
    pub communities: Vec<Vec<usize>>,
    pub levels: usize,
    pub final_time: f64,
    pub perturbed: bool,
    pub curvature: CurvatureReport,
}

impl HierarchyResult {
    pub fn communities(&self) -> Vec<Vec<usize>> {
        communities(self)
    }

    pub fn report(&self) -> HierarchyReport {
        HierarchyReport {
            final_graph: self.final_graph.to_document(),
            events: self.events.clone(),
            labels: self.labels.clone(),
            communities: self.communities(),
            levels: self.levels,
            final_time: self.final_time,
            perturbed: self.perturbed,
            curvature: self.curvature.clone(),
        }
    }
}

/// Original vertices grouped by the vertex they were contracted into.
pub fn communities(result: &HierarchyResult) -> Vec<Vec<usize>> {
    result.merges.groups()
}

fn apply(
    g: &WeightedGraph,
    merges: &MergeMap,
    kind: EventKind,
    u: usize,
    v: usize,
) -> Result<(WeightedGraph, MergeMap), GraphError> {
    match kind {
        EventKind::Delete => Ok((g.delete_edge(u, v)?, merges.clone())),
        EventKind::Contract => g.contract_edge(u.min(v), u.max(v), merges),
    }
}

/// Applies the logged surgeries to `g`, ignoring weights.
pub fn replay_events(
    g: &WeightedGraph,
    events: &[SurgeryEvent],
) -> Result<(WeightedGraph, MergeMap), GraphError> {
    let mut graph = g.clone();
    let mut merges = MergeMap::identity(g.id_count());
    for e in events {
        (graph, merges) = apply(&graph, &merges, e.kind, e.u, e.v)?;
    }
    Ok((graph, merges))
}

fn perturb(g: &WeightedGraph, rng: &mut ChaCha8Rng) -> Result<WeightedGraph, GraphError> {
    let w: Vec<f64> = g
        .weights()
        .iter()
        .map(|w| w * rng.gen_range(1.0 - PERTURBATION..=1.0 + PERTURBATION))
        .collect();
    g.with_weights(&w)
}

/// Flow with surgery until a level finishes without any surgery, or the
/// graph is down to a single edge.
pub fn run_flow_with_surgery(
    g: &WeightedGraph,
    config: &SurgeryConfig,
) -> Result<HierarchyResult, SurgeryError> {
    config.flow.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut graph = g.clone();
    let mut merges = MergeMap::identity(g.id_count());
    let mut events = Vec::new();
    let mut labels: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut t = 0.0;
    let mut level = 1;
    let mut perturbed = false;

    loop {
        let mut surgery = false;
        let mut terminal = false;
        loop {
            if graph.edge_count() <= 1 {
                terminal = true;
                break;
            }
            if config.flow.renormalize {
                graph = graph.normalized();
            }
            let traj = integrate_from(&graph, &config.flow, t)?;
            match traj.termination {
                Termination::Event(e) => {
                    let moved = graph.with_weights(&traj.final_state.w)?;
                    (graph, merges) = apply(&moved, &merges, e.kind, e.u, e.v)?;
                    t = traj.final_state.t;
                    events.push(SurgeryEvent {
                        t,
                        kind: e.kind,
                        u: e.u,
                        v: e.v,
                        level,
                    });
                    surgery = true;
                    if events.len() >= config.max_surgeries {
                        return Err(SurgeryError::SurgeryLimit(config.max_surgeries));
                    }
                }
                Termination::Converged => {
                    graph = graph.with_weights(&traj.final_state.w)?;
                    t = traj.final_state.t;
                    break;
                }
                Termination::Horizon => {
                    if config.perturb && !perturbed {
                        perturbed = true;
                        graph = perturb(&graph, &mut rng)?;
                    } else {
                        return Err(SurgeryError::NonConvergence {
                            horizon: config.flow.horizon,
                            start: t,
                        });
                    }
                }
            }
        }
        if level == 1 || surgery {
            for e in graph.edges() {
                labels.insert(e.key(), level);
            }
        }
        if terminal || !surgery {
            break;
        }
        level += 1;
    }

    let curvature = CurvatureEngine::new(&graph, config.flow.gamma).report(&[])?;
    let labels = graph
        .edges()
        .iter()
        .map(|e| EdgeLabel {
            u: e.u,
            v: e.v,
            level: labels.get(&e.key()).copied().unwrap_or(level),
        })
        .collect();
    Ok(HierarchyResult {
        initial: g.clone(),
        final_graph: graph,
        labels,
        merges,
        events,
        curvature,
        levels: level,
        final_time: t,
        perturbed,
    })
}
