//! Lazy random-walk measures, α-Ricci curvature and the Lin–Lu–Yau limit
//! curvature on weighted graphs.
//!
//! The limit curvature is computed exactly from the Laplacian formulation
//!
//! ```text
//! κ(x, y) = inf { ∇_xy Δf : f 1-Lipschitz, f(y) − f(x) = d(x, y) }
//! ```
//!
//! as a linear program over the values of `f` on the closed neighbourhoods of
//! `x` and `y`. A 1-Lipschitz function on that set extends to the whole graph,
//! and `Δf(x)`, `Δf(y)` read nothing else. The α → 1 extrapolation of
//! `κ_α / (1 − α)` is kept as an independent cross-check.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DistanceMatrix, WeightedGraph};
use crate::lp::{LinearProgram, LpError, Relation};
use crate::tolerance::DISTANCE_CONDITION_TOL;
use crate::transport::{min_cost_transport, TransportError, TransportProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurvatureError {
    #[error("({0}, {1}) is not an edge")]
    NotAnEdge(usize, usize),
    #[error("vertex {0} is not in the graph")]
    InvalidVertex(usize),
    #[error("idleness {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("invalid gamma: {0}")]
    InvalidGamma(String),
    #[error("edge ({u}, {v}) has weight {weight} but the endpoints are {distance} apart")]
    DistanceConditionViolated {
        u: usize,
        v: usize,
        weight: f64,
        distance: f64,
    },
    #[error("invalid extrapolation grid: {0}")]
    InvalidGrid(String),
    #[error("κ_α/(1−α) is not constant on the grid (spread {residual:.3e}); move the grid closer to 1")]
    NonLinearTail { residual: f64 },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Reweighting γ applied to edge weights when building the walk measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaKind {
    /// γ(x) = 1/x
    Reciprocal,
    /// γ(x) = x
    Identity,
    /// γ(x) = 1/x²
    ReciprocalSquare,
    /// γ(x) = x^k, k ≠ 0
    Power(f64),
}

impl GammaKind {
    pub fn exponent(self) -> f64 {
        match self {
            GammaKind::Reciprocal => -1.0,
            GammaKind::Identity => 1.0,
            GammaKind::ReciprocalSquare => -2.0,
            GammaKind::Power(k) => k,
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            GammaKind::Reciprocal => 1.0 / x,
            GammaKind::Identity => x,
            GammaKind::ReciprocalSquare => 1.0 / (x * x),
            GammaKind::Power(k) => x.powf(k),
        }
    }

    /// γ must be one-to-one, so `Power(0)` is rejected.
    pub fn validate(self) -> Result<(), CurvatureError> {
        let k = self.exponent();
        if k == 0.0 || !k.is_finite() {
            return Err(CurvatureError::InvalidGamma(format!(
                "power {k} is not one-to-one"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for GammaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaKind::Reciprocal => write!(f, "reciprocal"),
            GammaKind::Identity => write!(f, "identity"),
            GammaKind::ReciprocalSquare => write!(f, "reciprocal-square"),
            GammaKind::Power(k) => write!(f, "power:{k}"),
        }
    }
}

impl FromStr for GammaKind {
    type Err = CurvatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let g = match s {
            "reciprocal" => GammaKind::Reciprocal,
            "identity" => GammaKind::Identity,
            "reciprocal-square" => GammaKind::ReciprocalSquare,
            _ => match s.strip_prefix("power:") {
                Some(k) => GammaKind::Power(
                    k.parse()
                        .map_err(|_| CurvatureError::InvalidGamma(format!("bad exponent `{k}`")))?,
                ),
                None => return Err(CurvatureError::InvalidGamma(format!("unknown gamma `{s}`"))),
            },
        };
        g.validate()?;
        Ok(g)
    }
}

/// The lazy walk distribution μ_x^α: mass α at the centre, the rest split
/// over neighbours in proportion to γ of the edge weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMeasure {
    pub center: usize,
    pub alpha: f64,
    /// Non-zero masses, centre first, then neighbours in adjacency order.
    pub masses: Vec<(usize, f64)>,
}

impl ProbMeasure {
    pub fn total(&self) -> f64 {
        self.masses.iter().map(|m| m.1).sum()
    }

    pub fn mass(&self, v: usize) -> f64 {
        self.masses
            .iter()
            .filter(|m| m.0 == v)
            .map(|m| m.1)
            .sum()
    }
}

/// Upper and certified lower bounds on κ(u, v).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureBounds {
    /// `−2 D(G) / d(u, v)` with D(G) the largest edge weight.
    pub generic_lower: f64,
    /// Value of the explicit ∗-coupling built from the neighbours of u and v.
    pub coupling_lower: f64,
    pub upper: f64,
}

impl CurvatureBounds {
    pub fn lower(&self) -> f64 {
        self.generic_lower.max(self.coupling_lower)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSample {
    pub alpha: f64,
    pub kappa_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCurvature {
    pub u: usize,
    pub v: usize,
    pub kappa: f64,
    pub lower: f64,
    pub upper: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha_samples: Vec<AlphaSample>,
}

/// Per-edge curvature with bounds; serializes as `{"edges": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub edges: Vec<EdgeCurvature>,
}

/// Curvature queries against one immutable graph snapshot and its metric.
#[derive(Debug, Clone)]
pub struct CurvatureEngine<'g> {
    graph: &'g WeightedGraph,
    metric: DistanceMatrix,
    gamma: GammaKind,
}

impl<'g> CurvatureEngine<'g> {
    pub fn new(graph: &'g WeightedGraph, gamma: GammaKind) -> Self {
        CurvatureEngine {
            graph,
            metric: graph.all_pairs_distances(),
            gamma,
        }
    }

    pub fn graph(&self) -> &WeightedGraph {
        self.graph
    }

    pub fn metric(&self) -> &DistanceMatrix {
        &self.metric
    }

    pub fn gamma(&self) -> GammaKind {
        self.gamma
    }

    /// Normaliser `Σ_{z∼x} γ(w_xz)`.
    fn gamma_total(&self, x: usize) -> f64 {
        self.graph
            .neighbors(x)
            .iter()
            .map(|&(_, ei)| self.gamma.eval(self.graph.edge(ei).w))
            .sum()
    }

    /// `(neighbour, transition probability)` of the non-lazy walk at `x`.
    fn transitions(&self, x: usize) -> Vec<(usize, f64)> {
        let total = self.gamma_total(x);
        self.graph
            .neighbors(x)
            .iter()
            .map(|&(z, ei)| (z, self.gamma.eval(self.graph.edge(ei).w) / total))
            .collect()
    }

    pub fn measure(&self, x: usize, alpha: f64) -> Result<ProbMeasure, CurvatureError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CurvatureError::InvalidAlpha(alpha));
        }
        if !self.graph.is_alive(x) {
            return Err(CurvatureError::InvalidVertex(x));
        }
        let mut masses = Vec::with_capacity(self.graph.degree(x) + 1);
        if alpha > 0.0 {
            masses.push((x, alpha));
        }
        if alpha < 1.0 {
            masses.extend(
                self.transitions(x)
                    .into_iter()
                    .map(|(z, p)| (z, (1.0 - alpha) * p)),
            );
        }
        Ok(ProbMeasure {
            center: x,
            alpha,
            masses,
        })
    }

    fn check_edge(&self, x: usize, y: usize) -> Result<f64, CurvatureError> {
        for v in [x, y] {
            if !self.graph.is_alive(v) {
                return Err(CurvatureError::InvalidVertex(v));
            }
        }
        self.graph
            .weight(x, y)
            .ok_or(CurvatureError::NotAnEdge(x, y))
    }

    /// `κ_α(x, y) = 1 − W(μ_x^α, μ_y^α) / d(x, y)`.
    pub fn alpha_ricci(&self, x: usize, y: usize, alpha: f64) -> Result<f64, CurvatureError> {
        self.check_edge(x, y)?;
        let mx = self.measure(x, alpha)?;
        let my = self.measure(y, alpha)?;
        let p = TransportProblem::new(mx.masses, my.masses, &self.metric)?;
        let w = min_cost_transport(&p)?.cost;
        Ok(1.0 - w / self.metric.get(x, y))
    }

    /// Exact limit curvature from the Laplacian linear program.
    pub fn lly_curvature(&self, x: usize, y: usize) -> Result<f64, CurvatureError> {
        let weight = self.check_edge(x, y)?;
        let dxy = self.metric.get(x, y);
        if weight - dxy > DISTANCE_CONDITION_TOL {
            return Err(CurvatureError::DistanceConditionViolated {
                u: x.min(y),
                v: x.max(y),
                weight,
                distance: dxy,
            });
        }

        let mut support: Vec<usize> = vec![x, y];
        support.extend(self.graph.neighbors(x).iter().map(|n| n.0));
        support.extend(self.graph.neighbors(y).iter().map(|n| n.0));
        support.sort_unstable();
        support.dedup();
        let pos = |v: usize| support.binary_search(&v).unwrap_or_else(|_| unreachable!());
        let (ix, iy) = (pos(x), pos(y));

        let mut lp = LinearProgram::new(support.len());
        lp.fix(ix, 0.0).fix(iy, dxy);
        for (i, &v) in support.iter().enumerate() {
            if i != ix && i != iy {
                // implied by the Lipschitz rows against x; keeps columns non-negative
                lp.set_lower(i, Some(-self.metric.get(x, v)));
            }
        }
        // (Δf(x) − Δf(y)) / d with Δf(x) = Σ p_x(z) f(z) − f(x)
        let mut cost = vec![0.0; support.len()];
        cost[ix] -= 1.0;
        cost[iy] += 1.0;
        for (z, p) in self.transitions(x) {
            cost[pos(z)] += p;
        }
        for (z, p) in self.transitions(y) {
            cost[pos(z)] -= p;
        }
        for (i, c) in cost.iter().enumerate() {
            lp.set_cost(i, c / dxy);
        }
        for a in 0..support.len() {
            for b in a + 1..support.len() {
                if (a == ix || a == iy) && (b == ix || b == iy) {
                    continue;
                }
                let d = self.metric.get(support[a], support[b]);
                lp.add_constraint(&[(a, 1.0), (b, -1.0)], Relation::Le, d);
                lp.add_constraint(&[(b, 1.0), (a, -1.0)], Relation::Le, d);
            }
        }
        Ok(lp.solve()?.objective)
    }

    /// Slope of `κ_α` against `1 − α` on the top linear segment of the grid.
    ///
    /// Grid points are taken closest to 1 first; the segment is the longest
    /// run whose ratios `κ_α / (1 − α)` agree to 1e-9. If fewer than two
    /// points agree the whole grid is fitted through the origin, provided the
    /// ratios spread by at most 1e-3.
    pub fn lly_curvature_extrapolated(
        &self,
        x: usize,
        y: usize,
        alpha_grid: &[f64],
    ) -> Result<f64, CurvatureError> {
        if alpha_grid.len() < 3 {
            return Err(CurvatureError::InvalidGrid(format!(
                "need at least 3 points, got {}",
                alpha_grid.len()
            )));
        }
        if let Some(a) = alpha_grid.iter().find(|a| !(0.9..1.0).contains(*a)) {
            return Err(CurvatureError::InvalidGrid(format!("{a} outside [0.9, 1)")));
        }
        let mut points = alpha_grid
            .iter()
            .map(|&a| Ok((1.0 - a, self.alpha_ricci(x, y, a)?)))
            .collect::<Result<Vec<_>, CurvatureError>>()?;
        points.sort_by(|p, q| p.0.total_cmp(&q.0));

        let ratios: Vec<f64> = points.iter().map(|(s, k)| k / s).collect();
        let lead = ratios[0];
        let run = ratios
            .iter()
            .take_while(|r| (*r - lead).abs() <= 1e-9 * lead.abs().max(1.0))
            .count();
        let fit = |pts: &[(f64, f64)]| {
            let num: f64 = pts.iter().map(|(s, k)| s * k).sum();
            let den: f64 = pts.iter().map(|(s, _)| s * s).sum();
            num / den
        };
        if run >= 2 {
            return Ok(fit(&points[..run]));
        }
        let residual = ratios.iter().map(|r| (r - lead).abs()).fold(0.0, f64::max);
        if residual > 1e-3 {
            return Err(CurvatureError::NonLinearTail { residual });
        }
        Ok(fit(&points))
    }

    pub fn bounds(&self, u: usize, v: usize) -> Result<CurvatureBounds, CurvatureError> {
        self.check_edge(u, v)?;
        let duv = self.metric.get(u, v);
        let generic_lower = -2.0 * self.graph.max_weight() / duv;
        // ∗-coupling: B(u, v) = 2, B(x, v) = −μ_u(x) for x ∈ N(u)∖{v},
        // B(u, y) = −μ_v(y) for y ∈ N(v)∖{u}; the diagonal entries cost nothing
        let mut total = 2.0 * duv;
        for (x, p) in self.transitions(u) {
            if x != v {
                total -= p * self.metric.get(x, v);
            }
        }
        for (y, p) in self.transitions(v) {
            if y != u {
                total -= p * self.metric.get(u, y);
            }
        }
        Ok(CurvatureBounds {
            generic_lower,
            coupling_lower: total / duv,
            upper: 2.0,
        })
    }

    /// Limit curvature of every edge, in edge order.
    pub fn all_edges(&self) -> Result<Vec<f64>, CurvatureError> {
        self.graph
            .edges()
            .par_iter()
            .map(|e| self.lly_curvature(e.u, e.v))
            .collect()
    }

    /// Curvature, bounds and optional α samples for every edge.
    pub fn report(&self, alphas: &[f64]) -> Result<CurvatureReport, CurvatureError> {
        let edges = self
            .graph
            .edges()
            .par_iter()
            .map(|e| {
                let kappa = self.lly_curvature(e.u, e.v)?;
                let b = self.bounds(e.u, e.v)?;
                let alpha_samples = alphas
                    .iter()
                    .map(|&alpha| {
                        Ok(AlphaSample {
                            alpha,
                            kappa_alpha: self.alpha_ricci(e.u, e.v, alpha)?,
                        })
                    })
                    .collect::<Result<Vec<_>, CurvatureError>>()?;
                Ok(EdgeCurvature {
                    u: e.u,
                    v: e.v,
                    kappa,
                    lower: b.lower(),
                    upper: b.upper,
                    alpha_samples,
                })
            })
            .collect::<Result<Vec<_>, CurvatureError>>()?;
        Ok(CurvatureReport { edges })
    }
}

pub fn measure(
    g: &WeightedGraph,
    gamma: GammaKind,
    x: usize,
    alpha: f64,
) -> Result<ProbMeasure, CurvatureError> {
    CurvatureEngine::new(g, gamma).measure(x, alpha)
}

pub fn alpha_ricci(
    g: &WeightedGraph,
    gamma: GammaKind,
    x: usize,
    y: usize,
    alpha: f64,
) -> Result<f64, CurvatureError> {
    CurvatureEngine::new(g, gamma).alpha_ricci(x, y, alpha)
}

pub fn lly_curvature_lp(
    g: &WeightedGraph,
    gamma: GammaKind,
    x: usize,
    y: usize,
) -> Result<f64, CurvatureError> {
    CurvatureEngine::new(g, gamma).lly_curvature(x, y)
}

pub fn lly_curvature_extrapolated(
    g: &WeightedGraph,
    gamma: GammaKind,
    x: usize,
    y: usize,
    alpha_grid: &[f64],
) -> Result<f64, CurvatureError> {
    CurvatureEngine::new(g, gamma).lly_curvature_extrapolated(x, y, alpha_grid)
}

pub fn curvature_bounds(
    g: &WeightedGraph,
    gamma: GammaKind,
    u: usize,
    v: usize,
) -> Result<CurvatureBounds, CurvatureError> {
    CurvatureEngine::new(g, gamma).bounds(u, v)
}

/// Minimum number of contiguous pieces, each collinear within `tol`, that
/// cover the sample points (sorted by abscissa).
pub fn count_linear_pieces(points: &[(f64, f64)], tol: f64) -> usize {
    let mut pieces = 0;
    let mut start = 0;
    while start < points.len() {
        pieces += 1;
        if start + 1 >= points.len() {
            break;
        }
        let (x0, y0) = points[start];
        let (x1, y1) = points[start + 1];
        let slope = (y1 - y0) / (x1 - x0);
        let mut end = start + 2;
        while end < points.len() {
            let (x, y) = points[end];
            if (y0 + slope * (x - x0) - y).abs() > tol {
                break;
            }
            end += 1;
        }
        if end >= points.len() {
            break;
        }
        // the first point off the line starts the next piece
        start = end;
    }
    pieces
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{path_curvature_expected, star_expected};
    use proptest::prelude::*;

    fn k2(w: f64) -> WeightedGraph {
        WeightedGraph::new(2, [(0, 1, w)]).unwrap()
    }

    fn path(weights: &[f64]) -> WeightedGraph {
        WeightedGraph::new(
            weights.len() + 1,
            weights.iter().enumerate().map(|(i, &w)| (i, i + 1, w)),
        )
        .unwrap()
    }

    fn star(weights: &[f64]) -> WeightedGraph {
        WeightedGraph::new(
            weights.len() + 1,
            weights.iter().enumerate().map(|(i, &w)| (0, i + 1, w)),
        )
        .unwrap()
    }

    #[test]
    fn gamma_parsing() {
        assert_eq!("reciprocal".parse::<GammaKind>().unwrap(), GammaKind::Reciprocal);
        assert_eq!("power:2.5".parse::<GammaKind>().unwrap(), GammaKind::Power(2.5));
        assert!("power:0".parse::<GammaKind>().is_err());
        assert!("cubic".parse::<GammaKind>().is_err());
        for g in [
            GammaKind::Reciprocal,
            GammaKind::Identity,
            GammaKind::ReciprocalSquare,
            GammaKind::Power(-3.0),
        ] {
            assert_eq!(g.to_string().parse::<GammaKind>().unwrap(), g);
        }
    }

    #[test]
    fn measures() {
        let g = star(&[0.5, 0.3, 0.2]);
        let m = measure(&g, GammaKind::Reciprocal, 0, 1.0).unwrap();
        assert_eq!(m.masses, vec![(0, 1.0)]);

        let m = measure(&g, GammaKind::Reciprocal, 0, 0.0).unwrap();
        for (v, want) in [(1, 6.0 / 31.0), (2, 10.0 / 31.0), (3, 15.0 / 31.0)] {
            assert!((m.mass(v) - want).abs() < 1e-15);
        }
        assert_eq!(m.mass(0), 0.0);

        let p = path(&[0.3, 0.7]);
        for gamma in [GammaKind::Reciprocal, GammaKind::Identity, GammaKind::Power(3.0)] {
            let m = measure(&p, gamma, 0, 0.0).unwrap();
            assert_eq!(m.masses, vec![(1, 1.0)]);
        }
        assert!(matches!(
            measure(&p, GammaKind::Reciprocal, 0, 1.5),
            Err(CurvatureError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn alpha_ricci_examples() {
        let g = k2(0.7);
        for alpha in [0.0, 0.25, 0.5, 0.6, 0.9, 1.0] {
            let k = alpha_ricci(&g, GammaKind::Reciprocal, 0, 1, alpha).unwrap();
            assert!((k - (1.0 - (2.0 * alpha - 1.0f64).abs())).abs() < 1e-12);
        }
        let p = path(&[0.3, 0.7]);
        assert!(alpha_ricci(&p, GammaKind::Reciprocal, 0, 1, 1.0).unwrap().abs() < 1e-15);
        let k = alpha_ricci(&p, GammaKind::Reciprocal, 0, 1, 0.9).unwrap();
        assert!((k / 0.1 - 1.0).abs() < 0.05);
    }

    #[test]
    fn k2_curvature_is_two() {
        for w in [0.01, 0.4, 1.0, 17.0] {
            for gamma in [GammaKind::Reciprocal, GammaKind::Identity, GammaKind::Power(2.0)] {
                let k = lly_curvature_lp(&k2(w), gamma, 0, 1).unwrap();
                assert!((k - 2.0).abs() < 1e-12);
                let k = lly_curvature_lp(&k2(w), gamma, 1, 0).unwrap();
                assert!((k - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn path_curvatures() {
        let p = path(&[0.3, 0.7]);
        for (u, v) in [(0, 1), (1, 2)] {
            let k = lly_curvature_lp(&p, GammaKind::Reciprocal, u, v).unwrap();
            assert!((k - 1.0).abs() < 1e-12);
        }
        let weights = [0.11, 0.3, 0.07, 0.2, 0.15, 0.17];
        let p6 = path(&weights);
        let got = CurvatureEngine::new(&p6, GammaKind::Reciprocal).all_edges().unwrap();
        for (k, want) in got.iter().zip(path_curvature_expected(6)) {
            assert!((k - want).abs() < 1e-12, "{got:?}");
        }
        let p3 = path(&[0.2, 0.5, 0.3]);
        let got = CurvatureEngine::new(&p3, GammaKind::Reciprocal).all_edges().unwrap();
        for (k, want) in got.iter().zip([1.0, 0.0, 1.0]) {
            assert!((k - want).abs() < 1e-12);
        }
    }

    #[test]
    fn path2_matches_reduced_formula() {
        // κ_xz = 1 + a_x − a_y w_yz / w_xz with a_x the share z sends to x
        let (wxz, wyz) = (0.3, 0.7);
        for gamma in [GammaKind::Identity, GammaKind::ReciprocalSquare, GammaKind::Power(0.5)] {
            let (gx, gy) = (gamma.eval(wxz), gamma.eval(wyz));
            let (ax, ay) = (gx / (gx + gy), gy / (gx + gy));
            let k = lly_curvature_lp(&path(&[wxz, wyz]), gamma, 0, 1).unwrap();
            assert!((k - (1.0 + ax - ay * wyz / wxz)).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_star() {
        let g = star(&[1.0 / 3.0; 3]);
        for v in 1..=3 {
            let k = lly_curvature_lp(&g, GammaKind::Reciprocal, 0, v).unwrap();
            assert!((k - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn star_matches_closed_form() {
        let w = [0.5, 0.3, 0.2, 0.05, 0.9];
        let expected = star_expected(5, &w).unwrap();
        let got = CurvatureEngine::new(&star(&w), GammaKind::Reciprocal).all_edges().unwrap();
        for (k, e) in got.iter().zip(&expected.kappa) {
            assert!((k - e).abs() < 1e-9);
        }
    }

    #[test]
    fn distance_condition_is_enforced() {
        let g = WeightedGraph::new(3, [(0, 1, 0.2), (1, 2, 0.2), (0, 2, 0.9)]).unwrap();
        assert!(matches!(
            lly_curvature_lp(&g, GammaKind::Reciprocal, 0, 2),
            Err(CurvatureError::DistanceConditionViolated { u: 0, v: 2, .. })
        ));
        assert!(lly_curvature_lp(&g, GammaKind::Reciprocal, 0, 1).is_ok());
        assert!(matches!(
            lly_curvature_lp(&path(&[0.3, 0.7]), GammaKind::Reciprocal, 0, 2),
            Err(CurvatureError::NotAnEdge(0, 2))
        ));
    }

    #[test]
    fn extrapolation() {
        let grid = [0.99, 0.995, 0.999];
        let k = lly_curvature_extrapolated(&k2(0.4), GammaKind::Reciprocal, 0, 1, &grid).unwrap();
        assert!((k - 2.0).abs() < 1e-9);
        let k = lly_curvature_extrapolated(&path(&[0.3, 0.7]), GammaKind::Reciprocal, 0, 1, &grid)
            .unwrap();
        assert!((k - 1.0).abs() < 1e-6);
        let tri = WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let lp = lly_curvature_lp(&tri, GammaKind::Identity, 0, 1).unwrap();
        let ex = lly_curvature_extrapolated(&tri, GammaKind::Identity, 0, 1, &grid).unwrap();
        assert!((lp - ex).abs() < 1e-6);
        assert!((lp - 1.5).abs() < 1e-12);
        assert!(matches!(
            lly_curvature_extrapolated(&tri, GammaKind::Identity, 0, 1, &[0.99, 0.995]),
            Err(CurvatureError::InvalidGrid(_))
        ));
        assert!(matches!(
            lly_curvature_extrapolated(&tri, GammaKind::Identity, 0, 1, &[0.5, 0.99, 0.995]),
            Err(CurvatureError::InvalidGrid(_))
        ));
    }

    #[test]
    fn bounds_examples() {
        let b = curvature_bounds(&k2(1.0), GammaKind::Reciprocal, 0, 1).unwrap();
        assert_eq!((b.generic_lower, b.upper), (-2.0, 2.0));
        assert!((b.coupling_lower - 2.0).abs() < 1e-15);

        let b = curvature_bounds(&path(&[0.3, 0.7]), GammaKind::Reciprocal, 0, 1).unwrap();
        assert!((b.generic_lower + 2.0 * 0.7 / 0.3).abs() < 1e-12);

        let g = star(&[0.5, 0.3, 0.2]);
        let engine = CurvatureEngine::new(&g, GammaKind::Reciprocal);
        for v in 1..=3 {
            let b = engine.bounds(0, v).unwrap();
            let k = engine.lly_curvature(0, v).unwrap();
            assert!(b.coupling_lower <= k + 1e-12 && k <= 2.0 + 1e-9);
            assert!(b.generic_lower <= k);
        }
    }

    #[test]
    fn report_serializes() {
        let g = path(&[0.3, 0.7]);
        let r = CurvatureEngine::new(&g, GammaKind::Reciprocal).report(&[]).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["edges"].as_array().unwrap().len(), 2);
        for key in ["u", "v", "kappa", "lower", "upper"] {
            assert!(json["edges"][0].get(key).is_some());
        }
        assert!(json["edges"][0].get("alpha_samples").is_none());
        let back: CurvatureReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn linear_pieces() {
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let a = i as f64 / 19.0;
                let y = if a < 0.3 {
                    2.0 * a
                } else if a < 0.7 {
                    0.6 + 0.2 * (a - 0.3)
                } else {
                    0.68 - (a - 0.7)
                };
                (a, y)
            })
            .collect();
        assert_eq!(count_linear_pieces(&pts, 1e-9), 3);
        let line: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 * i as f64)).collect();
        assert_eq!(count_linear_pieces(&line, 1e-9), 1);
    }

    proptest! {
        #[test]
        fn measure_masses_sum_to_one(
            weights in prop::collection::vec(0.01f64..5.0, 3..7),
            alpha in 0.0f64..=1.0,
            k in prop::sample::select(vec![-2.0, -1.0, 0.5, 1.0, 2.0]),
        ) {
            let g = star(&weights);
            let e = CurvatureEngine::new(&g, GammaKind::Power(k));
            for x in g.vertices() {
                prop_assert!((e.measure(x, alpha).unwrap().total() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn scale_invariance_for_power_gamma(
            weights in prop::collection::vec(1.0f64..1.9, 5),
            k in prop::sample::select(vec![-2.0, -1.0, 1.0, 2.0]),
            c in prop::sample::select(vec![0.5, 2.0]),
        ) {
            // 4-cycle plus a pendant edge; weights in [1, 2) keep every edge geodesic
            let g = WeightedGraph::new(5, [
                (0, 1, weights[0]), (1, 2, weights[1]), (2, 3, weights[2]),
                (3, 0, weights[3]), (3, 4, weights[4]),
            ]).unwrap();
            let gamma = GammaKind::Power(k);
            let base = CurvatureEngine::new(&g, gamma).all_edges().unwrap();
            let scaled_graph = g.scaled(c).unwrap();
            let scaled = CurvatureEngine::new(&scaled_graph, gamma).all_edges().unwrap();
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
