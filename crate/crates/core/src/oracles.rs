//! Closed-form solutions and brute-force solvers used as independent
//! references for the curvature, transport and flow code.
//!
//! Nothing in here calls the LP solvers or the flow integrator.

use thiserror::Error;

use crate::transport::TransportProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("closed form needs equal initial weights, got ({0}, {1})")]
    RegimeMismatch(f64, f64),
    #[error("star formulas need at least three leaves, got {0}")]
    DegreeTooSmall(usize),
    #[error("brute force supports at most 4 sources and 4 sinks, got {0}x{1}")]
    SupportTooLarge(usize, usize),
    #[error("initial weights must be positive and sum to one, got ({0}, {1})")]
    InvalidInitial(f64, f64),
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("no feasible basis found")]
    NoFeasibleBasis,
}

/// The three behaviours of the normalized flow on the path x–z–y, keyed by
/// how the centre z splits its walk between x and y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Path2Regime {
    /// `a_x = w_yz`, i.e. γ(x) = 1/x: weights frozen.
    Constant,
    /// `a_x = w_xz`, i.e. γ(x) = x: both weights relax to 1/2.
    Stable,
    /// `a_x = w_yz² / (w_xz² + w_yz²)`, i.e. γ(x) = 1/x²: the shorter edge
    /// collapses.
    Collapsing,
}

impl Path2Regime {
    /// Share of z's walk that goes to x.
    pub fn a_x(self, w_xz: f64, w_yz: f64) -> f64 {
        match self {
            Path2Regime::Constant => w_yz / (w_xz + w_yz),
            Path2Regime::Stable => w_xz / (w_xz + w_yz),
            Path2Regime::Collapsing => w_yz * w_yz / (w_xz * w_xz + w_yz * w_yz),
        }
    }
}

/// `(w_xz(t), w_yz(t))` under the normalized flow from `w0`, which must sum
/// to one.
///
/// The collapsing regime has no closed form; it is integrated from the
/// reduced scalar equation `dw_xz/dt = w_yz − a_x` with an adaptive
/// Runge–Kutta–Fehlberg 4(5) scheme at tolerance 1e-10.
pub fn path2_solution(regime: Path2Regime, w0: (f64, f64), t: f64) -> Result<(f64, f64), OracleError> {
    let (a, b) = w0;
    if !(a > 0.0 && b > 0.0) || (a + b - 1.0).abs() > 1e-12 {
        return Err(OracleError::InvalidInitial(a, b));
    }
    Ok(match regime {
        Path2Regime::Constant => w0,
        Path2Regime::Stable => {
            let decay = (-2.0 * t).exp();
            (0.5 - (0.5 - a) * decay, 0.5 - (0.5 - b) * decay)
        }
        Path2Regime::Collapsing => {
            let rhs = |w_xz: f64| {
                let w_yz = 1.0 - w_xz;
                w_yz - Path2Regime::Collapsing.a_x(w_xz, w_yz)
            };
            let w_xz = rkf45_scalar(rhs, a, t, 1e-10);
            (w_xz, 1.0 - w_xz)
        }
    })
}

fn rkf45_scalar(f: impl Fn(f64) -> f64, y0: f64, t_end: f64, tol: f64) -> f64 {
    let mut t = 0.0;
    let mut y = y0;
    let mut h = (t_end / 100.0).clamp(1e-6, 0.05);
    while t < t_end {
        h = h.min(t_end - t);
        let k1 = f(y);
        let k2 = f(y + h * k1 / 4.0);
        let k3 = f(y + h * (3.0 * k1 + 9.0 * k2) / 32.0);
        let k4 = f(y + h * (1932.0 * k1 - 7200.0 * k2 + 7296.0 * k3) / 2197.0);
        let k5 = f(y + h * (439.0 / 216.0 * k1 - 8.0 * k2 + 3680.0 / 513.0 * k3 - 845.0 / 4104.0 * k4));
        let k6 = f(y + h
            * (-8.0 / 27.0 * k1 + 2.0 * k2 - 3544.0 / 2565.0 * k3 + 1859.0 / 4104.0 * k4
                - 11.0 / 40.0 * k5));
        let y4 = y + h * (25.0 / 216.0 * k1 + 1408.0 / 2565.0 * k3 + 2197.0 / 4104.0 * k4 - k5 / 5.0);
        let y5 = y + h
            * (16.0 / 135.0 * k1 + 6656.0 / 12825.0 * k3 + 28561.0 / 56430.0 * k4 - 9.0 / 50.0 * k5
                + 2.0 / 55.0 * k6);
        let err = (y5 - y4).abs();
        let scale = tol * (1.0 + y.abs());
        if err <= scale {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 {
            4.0
        } else {
            (0.9 * (scale / err).powf(0.2)).clamp(0.1, 4.0)
        };
        h *= factor;
    }
    y
}

/// Unnormalized flow on the path with equal initial weights: both edges
/// decay as `w(0) e^{−t}`.
pub fn unnormalized_path2_solution(w0: (f64, f64), t: f64) -> Result<(f64, f64), OracleError> {
    if (w0.0 - w0.1).abs() > 1e-12 {
        return Err(OracleError::RegimeMismatch(w0.0, w0.1));
    }
    let decay = (-t).exp();
    Ok((w0.0 * decay, w0.1 * decay))
}

/// Matrix of the linear system `d/dt (w_xz, w_yz) = M (w_xz, w_yz)` of the
/// unnormalized flow on the path, given z's split `a_x` (with `a_y = 1 − a_x`).
pub fn unnormalized_path2_matrix(a_x: f64) -> [[f64; 2]; 2] {
    let a_y = 1.0 - a_x;
    [[-(1.0 + a_x), a_y], [a_x, -(1.0 + a_y)]]
}

/// Real eigenvalues of a 2x2 matrix, larger first. Returns `None` for a
/// complex pair.
pub fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> Option<(f64, f64)> {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc < 0.0 {
        return None;
    }
    let r = disc.sqrt();
    Some((tr / 2.0 + r, tr / 2.0 - r))
}

/// Curvature of each edge of a path with γ(x) = 1/x: 1 on the two leaf
/// edges and 0 inside, independent of the weights. A single edge has 2.
pub fn path_curvature_expected(edges: usize) -> Vec<f64> {
    match edges {
        0 => Vec::new(),
        1 => vec![2.0],
        n => (0..n)
            .map(|i| if i == 0 || i == n - 1 { 1.0 } else { 0.0 })
            .collect(),
    }
}

/// Closed-form curvature, drift and fixed point of a star with γ(x) = 1/x.
#[derive(Debug, Clone, PartialEq)]
pub struct StarExpectation {
    pub kappa: Vec<f64>,
    /// `F_e = Σ_h κ_h w_h − κ_e`; the normalized flow is `dw_e/dt = w_e F_e`.
    pub drift: Vec<f64>,
    pub fixed_point: f64,
    pub fixed_point_kappa: f64,
}

/// Evaluates the star formulas for centre degree `d_u` and leaf weights.
///
/// With `D_u = Σ 1/w`: `κ_e = 1 + (2 − d_u) / (w_e D_u)` and
/// `F_e = (Σw − 1) + (d_u − 2)/D_u · (1/w_e − d_u)`, where the first term
/// vanishes on the normalized simplex.
pub fn star_expected(degree: usize, weights: &[f64]) -> Result<StarExpectation, OracleError> {
    if degree < 3 {
        return Err(OracleError::DegreeTooSmall(degree));
    }
    if weights.len() != degree {
        return Err(OracleError::WeightCount {
            expected: degree,
            got: weights.len(),
        });
    }
    let d = degree as f64;
    let big_d: f64 = weights.iter().map(|w| 1.0 / w).sum();
    let total: f64 = weights.iter().sum();
    let kappa = weights
        .iter()
        .map(|w| 1.0 + (2.0 - d) / (w * big_d))
        .collect();
    let drift = weights
        .iter()
        .map(|w| (total - 1.0) + (d - 2.0) / big_d * (1.0 / w - d))
        .collect();
    Ok(StarExpectation {
        kappa,
        drift,
        fixed_point: 1.0 / d,
        fixed_point_kappa: 2.0 / d,
    })
}

/// Minimum transport cost by enumerating every spanning-tree basis of the
/// bipartite transportation polytope and keeping the feasible ones.
pub fn transport_bruteforce(p: &TransportProblem) -> Result<f64, OracleError> {
    let m = p.sources().len();
    let n = p.sinks().len();
    if m > 4 || n > 4 {
        return Err(OracleError::SupportTooLarge(m, n));
    }
    let cells = m * n;
    let basis_size = m + n - 1;
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << cells) {
        if mask.count_ones() as usize != basis_size {
            continue;
        }
        let chosen: Vec<(usize, usize)> = (0..cells)
            .filter(|c| mask & (1 << c) != 0)
            .map(|c| (c / n, c % n))
            .collect();
        if !is_spanning_tree(m, n, &chosen) {
            continue;
        }
        let Some(values) = basic_solution(p, &chosen) else {
            continue;
        };
        if values.iter().any(|&x| x < -1e-12) {
            continue;
        }
        let cost: f64 = chosen
            .iter()
            .zip(&values)
            .map(|(&(i, j), x)| x * p.cost()[i][j])
            .sum();
        best = Some(best.map_or(cost, |b: f64| b.min(cost)));
    }
    best.ok_or(OracleError::NoFeasibleBasis)
}

fn is_spanning_tree(m: usize, n: usize, cells: &[(usize, usize)]) -> bool {
    // rows are nodes 0..m, columns m..m+n
    let mut parent: Vec<usize> = (0..m + n).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in cells {
        let a = root(&mut parent, i);
        let b = root(&mut parent, m + j);
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    // m + n − 1 acyclic edges on m + n nodes form a spanning tree
    true
}

/// Solves the tree basis by peeling leaves: a row or column touched by a
/// single unresolved cell fixes that cell to its remaining mass.
fn basic_solution(p: &TransportProblem, cells: &[(usize, usize)]) -> Option<Vec<f64>> {
    let m = p.sources().len();
    let mut left: Vec<f64> = p
        .sources()
        .iter()
        .chain(p.sinks())
        .map(|s| s.1)
        .collect();
    let mut values = vec![f64::NAN; cells.len()];
    let mut unresolved = cells.len();
    while unresolved > 0 {
        let mut progressed = false;
        for node in 0..left.len() {
            let touching: Vec<usize> = (0..cells.len())
                .filter(|&k| values[k].is_nan())
                .filter(|&k| cells[k].0 == node || m + cells[k].1 == node)
                .collect();
            if touching.len() != 1 {
                continue;
            }
            let k = touching[0];
            let x = left[node];
            values[k] = x;
            left[cells[k].0] -= x;
            left[m + cells[k].1] -= x;
            unresolved -= 1;
            progressed = true;
        }
        if !progressed {
            return None;
        }
    }
    Some(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;

    #[test]
    fn path2_regimes() {
        assert_eq!(
            path2_solution(Path2Regime::Constant, (0.3, 0.7), 100.0).unwrap(),
            (0.3, 0.7)
        );
        let (a, b) = path2_solution(Path2Regime::Stable, (0.2, 0.8), 60.0).unwrap();
        assert!((a - 0.5).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
        let (a, _) = path2_solution(Path2Regime::Stable, (0.2, 0.8), 1.0).unwrap();
        assert!((a - (0.5 - 0.3 * (-2.0f64).exp())).abs() < 1e-15);
        let (a, b) = path2_solution(Path2Regime::Collapsing, (0.6, 0.4), 60.0).unwrap();
        assert!(a > 0.999 && b < 1e-3, "({a}, {b})");
        assert!(path2_solution(Path2Regime::Stable, (0.2, 0.7), 1.0).is_err());
    }

    #[test]
    fn collapsing_reference_is_monotone() {
        let mut prev = 0.4;
        for k in 1..=40 {
            let (_, b) = path2_solution(Path2Regime::Collapsing, (0.6, 0.4), k as f64 * 0.5).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn collapsing_reference_against_fine_rk4() {
        let f = |w: f64| {
            let y = 1.0 - w;
            y - y * y / (w * w + y * y)
        };
        let (mut w, h) = (0.6, 1e-4);
        for _ in 0..20_000 {
            let k1 = f(w);
            let k2 = f(w + h * k1 / 2.0);
            let k3 = f(w + h * k2 / 2.0);
            let k4 = f(w + h * k3);
            w += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        }
        let (a, _) = path2_solution(Path2Regime::Collapsing, (0.6, 0.4), 2.0).unwrap();
        assert!((a - w).abs() < 1e-9, "{a} vs {w}");
    }

    #[test]
    fn unnormalized_decay() {
        let (a, b) = unnormalized_path2_solution((0.5, 0.5), 1.0).unwrap();
        assert_eq!(a, 0.5 * (-1.0f64).exp());
        assert_eq!(a, b);
        assert_eq!(unnormalized_path2_solution((0.5, 0.5), 0.0).unwrap(), (0.5, 0.5));
        assert!(matches!(
            unnormalized_path2_solution((0.3, 0.7), 1.0),
            Err(OracleError::RegimeMismatch(..))
        ));
    }

    #[test]
    fn system_matrix_eigenvalues() {
        for a_x in [0.5, 0.1, 0.9, 0.37] {
            let (l1, l2) = eigenvalues_2x2(unnormalized_path2_matrix(a_x)).unwrap();
            assert!((l1 + 1.0).abs() < 1e-12 && (l2 + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn path_patterns() {
        assert_eq!(path_curvature_expected(6), vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(path_curvature_expected(2), vec![1.0, 1.0]);
        assert_eq!(path_curvature_expected(3), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn star_formulas() {
        let s = star_expected(3, &[1.0 / 3.0; 3]).unwrap();
        for (k, f) in s.kappa.iter().zip(&s.drift) {
            assert!((k - 2.0 / 3.0).abs() < 1e-15);
            assert!(f.abs() < 1e-15);
        }
        // D_u = 31/3, (d_u − 2)/D_u = 3/31, 1/w − 3 = (−1, 1/3, 2)
        let s = star_expected(3, &[0.5, 0.3, 0.2]).unwrap();
        let want = [-3.0 / 31.0, 1.0 / 31.0, 6.0 / 31.0];
        for (f, w) in s.drift.iter().zip(want) {
            assert!((f - w).abs() < 1e-15);
        }
        assert!(matches!(star_expected(2, &[0.5, 0.5]), Err(OracleError::DegreeTooSmall(2))));
    }

    #[test]
    fn star_drift_matches_definition() {
        for w in [[0.5, 0.3, 0.2, 0.7], [0.1, 0.1, 0.1, 0.1], [2.0, 0.3, 0.9, 0.25]] {
            let s = star_expected(4, &w).unwrap();
            let sum: f64 = s.kappa.iter().zip(&w).map(|(k, w)| k * w).sum();
            for (k, f) in s.kappa.iter().zip(&s.drift) {
                assert!((sum - k - f).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn bruteforce_small_cases() {
        let g = WeightedGraph::new(3, [(0, 1, 0.3), (1, 2, 0.7)]).unwrap();
        let d = g.all_pairs_distances();
        let p = TransportProblem::new(vec![(0, 1.0)], vec![(2, 1.0)], &d).unwrap();
        assert!((transport_bruteforce(&p).unwrap() - 1.0).abs() < 1e-15);

        // symmetric 2x2 with matching diagonal: stay put
        let p = TransportProblem::new(vec![(0, 0.5), (2, 0.5)], vec![(0, 0.5), (2, 0.5)], &d).unwrap();
        assert_eq!(transport_bruteforce(&p).unwrap(), 0.0);

        let many: Vec<_> = (0..5).map(|_| (0, 0.2)).collect();
        let p = TransportProblem::new(many, vec![(2, 1.0)], &d).unwrap();
        assert!(matches!(transport_bruteforce(&p), Err(OracleError::SupportTooLarge(5, 1))));
    }
}
