//! Wasserstein-1 distance between finitely supported measures on a graph.
//!
//! The primal is solved as a min-cost flow on the bipartite support graph by
//! successive shortest paths; the dual is the Lipschitz-potential program
//! over the joint support, solved with the dense simplex.

use thiserror::Error;

use crate::graph::DistanceMatrix;
use crate::lp::{LinearProgram, LpError, Relation};
use crate::tolerance::MASS_TOL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("unbalanced masses: sources sum to {sources}, sinks sum to {sinks}")]
    Unbalanced { sources: f64, sinks: f64 },
    #[error("negative or non-finite mass {mass} at vertex {vertex}")]
    InvalidMass { vertex: usize, mass: f64 },
    #[error("non-finite transport cost between {0} and {1}")]
    InfiniteCost(usize, usize),
    #[error("shortest-path augmentation did not terminate")]
    NoProgress,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Transportation problem between two probability measures, with costs
/// pulled from a graph metric.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    sources: Vec<(usize, f64)>,
    sinks: Vec<(usize, f64)>,
    cost: Vec<Vec<f64>>,
    support: Vec<usize>,
    support_dist: Vec<Vec<f64>>,
}

impl TransportProblem {
    pub fn new(
        sources: Vec<(usize, f64)>,
        sinks: Vec<(usize, f64)>,
        metric: &DistanceMatrix,
    ) -> Result<Self, TransportError> {
        for &(vertex, mass) in sources.iter().chain(&sinks) {
            if !(mass >= 0.0) || !mass.is_finite() {
                return Err(TransportError::InvalidMass { vertex, mass });
            }
        }
        let a: f64 = sources.iter().map(|s| s.1).sum();
        let b: f64 = sinks.iter().map(|s| s.1).sum();
        if (a - 1.0).abs() > MASS_TOL || (b - 1.0).abs() > MASS_TOL {
            return Err(TransportError::Unbalanced {
                sources: a,
                sinks: b,
            });
        }
        let mut support: Vec<usize> = sources.iter().chain(&sinks).map(|s| s.0).collect();
        support.sort_unstable();
        support.dedup();
        let support_dist: Vec<Vec<f64>> = support
            .iter()
            .map(|&p| support.iter().map(|&q| metric.get(p, q)).collect())
            .collect();
        for (i, &p) in support.iter().enumerate() {
            for (j, &q) in support.iter().enumerate() {
                if !support_dist[i][j].is_finite() {
                    return Err(TransportError::InfiniteCost(p, q));
                }
            }
        }
        let cost = sources
            .iter()
            .map(|&(p, _)| sinks.iter().map(|&(q, _)| metric.get(p, q)).collect())
            .collect();
        Ok(TransportProblem {
            sources,
            sinks,
            cost,
            support,
            support_dist,
        })
    }

    pub fn sources(&self) -> &[(usize, f64)] {
        &self.sources
    }

    pub fn sinks(&self) -> &[(usize, f64)] {
        &self.sinks
    }

    /// Cost matrix, sources by sinks.
    pub fn cost(&self) -> &[Vec<f64>] {
        &self.cost
    }
}

/// Optimal coupling `A(x, y)` indexed by source and sink position.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub coupling: Vec<Vec<f64>>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.coupling.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.coupling.first().map_or(0, |r| r.len());
        (0..n)
            .map(|j| self.coupling.iter().map(|r| r[j]).sum())
            .collect()
    }
}

const RESIDUAL_EPS: f64 = 1e-15;

/// Exact optimal transport by successive shortest augmenting paths.
///
/// Every augmentation exhausts a supply, a demand or a reverse residual arc,
/// and paths are found with Bellman-Ford because reverse arcs carry negative
/// cost.
pub fn min_cost_transport(p: &TransportProblem) -> Result<TransportPlan, TransportError> {
    let m = p.sources.len();
    let n = p.sinks.len();
    let mut supply: Vec<f64> = p.sources.iter().map(|s| s.1).collect();
    let mut demand: Vec<f64> = p.sinks.iter().map(|s| s.1).collect();
    let mut flow = vec![vec![0.0; n]; m];

    #[derive(Clone, Copy)]
    enum Pred {
        None,
        Root,
        // reached sink j from source i along a forward arc
        Forward(usize),
        // reached source i from sink j along a reverse arc
        Backward(usize),
    }

    let max_rounds = 4 * (m + 1) * (n + 1) + 64;
    for _ in 0..max_rounds {
        let remaining: f64 = supply.iter().sum::<f64>().min(demand.iter().sum());
        if remaining <= 1e-14 {
            break;
        }
        let mut dist_src = vec![f64::INFINITY; m];
        let mut dist_snk = vec![f64::INFINITY; n];
        let mut pred_src = vec![Pred::None; m];
        let mut pred_snk = vec![Pred::None; n];
        for i in 0..m {
            if supply[i] > RESIDUAL_EPS {
                dist_src[i] = 0.0;
                pred_src[i] = Pred::Root;
            }
        }
        for _ in 0..(m + n + 1) {
            let mut changed = false;
            for i in 0..m {
                if !dist_src[i].is_finite() {
                    continue;
                }
                for j in 0..n {
                    let d = dist_src[i] + p.cost[i][j];
                    if d < dist_snk[j] - 1e-15 {
                        dist_snk[j] = d;
                        pred_snk[j] = Pred::Forward(i);
                        changed = true;
                    }
                }
            }
            for j in 0..n {
                if !dist_snk[j].is_finite() {
                    continue;
                }
                for i in 0..m {
                    if flow[i][j] > RESIDUAL_EPS {
                        let d = dist_snk[j] - p.cost[i][j];
                        if d < dist_src[i] - 1e-15 {
                            dist_src[i] = d;
                            pred_src[i] = Pred::Backward(j);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let target = (0..n)
            .filter(|&j| demand[j] > RESIDUAL_EPS && dist_snk[j].is_finite())
            .min_by(|&a, &b| dist_snk[a].total_cmp(&dist_snk[b]));
        let Some(target) = target else {
            return Err(TransportError::NoProgress);
        };

        // walk back to the root source collecting the path
        let mut arcs = Vec::new();
        let mut bottleneck = demand[target];
        let mut j = target;
        let origin;
        loop {
            let Pred::Forward(i) = pred_snk[j] else {
                return Err(TransportError::NoProgress);
            };
            arcs.push((i, j));
            match pred_src[i] {
                Pred::Root => {
                    origin = i;
                    break;
                }
                Pred::Backward(prev) => {
                    bottleneck = bottleneck.min(flow[i][prev]);
                    arcs.push((i, prev));
                    j = prev;
                }
                _ => return Err(TransportError::NoProgress),
            }
            if arcs.len() > 2 * (m + n) {
                return Err(TransportError::NoProgress);
            }
        }
        bottleneck = bottleneck.min(supply[origin]);
        // arcs alternate forward (even positions) and reverse (odd positions)
        for (k, &(i, j)) in arcs.iter().enumerate() {
            if k % 2 == 0 {
                flow[i][j] += bottleneck;
            } else {
                flow[i][j] -= bottleneck;
                if flow[i][j] < RESIDUAL_EPS {
                    flow[i][j] = 0.0;
                }
            }
        }
        supply[origin] -= bottleneck;
        demand[target] -= bottleneck;
        if supply[origin] < RESIDUAL_EPS {
            supply[origin] = 0.0;
        }
        if demand[target] < RESIDUAL_EPS {
            demand[target] = 0.0;
        }
    }
    let remaining: f64 = supply.iter().sum::<f64>().min(demand.iter().sum());
    if remaining > 1e-14 {
        return Err(TransportError::NoProgress);
    }
    let cost = flow
        .iter()
        .zip(&p.cost)
        .map(|(fr, cr)| fr.iter().zip(cr).map(|(f, c)| f * c).sum::<f64>())
        .sum();
    Ok(TransportPlan {
        coupling: flow,
        cost,
    })
}

/// Kantorovich–Rubinstein dual: the supremum over 1-Lipschitz potentials `f`
/// of `Σ f(x) (μ₁(x) − μ₂(x))`, with the gauge `f(v₀) = 0`.
pub fn w1_dual(p: &TransportProblem) -> Result<f64, TransportError> {
    let k = p.support.len();
    let index = |v: usize| p.support.binary_search(&v).unwrap_or_else(|_| unreachable!());
    let mut net = vec![0.0; k];
    for &(v, m) in &p.sources {
        net[index(v)] += m;
    }
    for &(v, m) in &p.sinks {
        net[index(v)] -= m;
    }
    let mut lp = LinearProgram::new(k);
    lp.fix(0, 0.0);
    for a in 0..k {
        lp.set_cost(a, -net[a]);
        if a > 0 {
            lp.set_lower(a, Some(-p.support_dist[0][a]));
        }
        for b in a + 1..k {
            let d = p.support_dist[a][b];
            lp.add_constraint(&[(a, 1.0), (b, -1.0)], Relation::Le, d);
            lp.add_constraint(&[(b, 1.0), (a, -1.0)], Relation::Le, d);
        }
    }
    let sol = lp.solve()?;
    Ok(-sol.objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;
    use crate::oracles::transport_bruteforce;
    use proptest::prelude::*;

    /// 4-cycle s1–t1–s2–t2–s1 whose metric reproduces the cost rows
    /// [[1, 3], [2, 5]] between sources {0, 2} and sinks {1, 3}.
    fn two_by_two() -> TransportProblem {
        let g = WeightedGraph::new(4, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 5.0), (3, 0, 3.0)]).unwrap();
        let d = g.all_pairs_distances();
        TransportProblem::new(vec![(0, 0.4), (2, 0.6)], vec![(1, 0.7), (3, 0.3)], &d).unwrap()
    }

    fn path3() -> DistanceMatrix {
        WeightedGraph::new(3, [(0, 1, 0.3), (1, 2, 0.7)])
            .unwrap()
            .all_pairs_distances()
    }

    #[test]
    fn identical_point_masses() {
        let p = TransportProblem::new(vec![(1, 1.0)], vec![(1, 1.0)], &path3()).unwrap();
        assert_eq!(min_cost_transport(&p).unwrap().cost, 0.0);
        assert!(w1_dual(&p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn dirac_to_dirac_is_distance() {
        let p = TransportProblem::new(vec![(0, 1.0)], vec![(2, 1.0)], &path3()).unwrap();
        assert!((min_cost_transport(&p).unwrap().cost - 1.0).abs() < 1e-15);
        assert!((w1_dual(&p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_instance() {
        let p = two_by_two();
        assert_eq!(p.cost(), &[vec![1.0, 3.0], vec![2.0, 5.0]]);
        let plan = min_cost_transport(&p).unwrap();
        assert!((plan.cost - 2.2).abs() < 1e-12);
        assert!((w1_dual(&p).unwrap() - 2.2).abs() < 1e-9);
        assert!((transport_bruteforce(&p).unwrap() - 2.2).abs() < 1e-12);
        for (got, want) in plan.row_sums().iter().zip([0.4, 0.6]) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in plan.column_sums().iter().zip([0.7, 0.3]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_unbalanced() {
        let r = TransportProblem::new(vec![(0, 0.5)], vec![(2, 1.0)], &path3());
        assert!(matches!(r, Err(TransportError::Unbalanced { .. })));
        let r = TransportProblem::new(vec![(0, 1.5), (1, -0.5)], vec![(2, 1.0)], &path3());
        assert!(matches!(r, Err(TransportError::InvalidMass { .. })));
    }

    fn masses(raw: &[f64]) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    }

    proptest! {
        #[test]
        fn primal_dual_and_bruteforce_agree(
            weights in prop::collection::vec(0.1f64..2.0, 6),
            src in prop::collection::vec((0usize..5, 0.05f64..1.0), 1..5),
            snk in prop::collection::vec((0usize..5, 0.05f64..1.0), 1..5),
        ) {
            // 5-cycle with one chord
            let g = WeightedGraph::new(5, [
                (0, 1, weights[0]), (1, 2, weights[1]), (2, 3, weights[2]),
                (3, 4, weights[3]), (4, 0, weights[4]), (0, 2, weights[5]),
            ]).unwrap();
            let d = g.all_pairs_distances();
            let a = masses(&src.iter().map(|s| s.1).collect::<Vec<_>>());
            let b = masses(&snk.iter().map(|s| s.1).collect::<Vec<_>>());
            let sources: Vec<_> = src.iter().zip(&a).map(|(s, &m)| (s.0, m)).collect();
            let sinks: Vec<_> = snk.iter().zip(&b).map(|(s, &m)| (s.0, m)).collect();
            let p = TransportProblem::new(sources, sinks, &d).unwrap();
            let plan = min_cost_transport(&p).unwrap();
            let dual = w1_dual(&p).unwrap();
            prop_assert!((plan.cost - dual).abs() <= 1e-7);
            prop_assert!((plan.cost - transport_bruteforce(&p).unwrap()).abs() <= 1e-10);
            for (got, want) in plan.row_sums().iter().zip(&a) {
                prop_assert!((got - want).abs() <= 1e-10);
            }
            for (got, want) in plan.column_sums().iter().zip(&b) {
                prop_assert!((got - want).abs() <= 1e-10);
            }
            prop_assert!(plan.coupling.iter().flatten().all(|&x| x >= 0.0));
        }
    }
}
