//! Weighted graph model, shortest-path metric and minor operations.
//!
//! A [`WeightedGraph`] is an immutable snapshot: deleting or contracting an
//! edge returns a new graph. Vertex ids are never reused; vertices removed by
//! contraction are tombstoned so that ids stay stable across surgery.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid JSON graph: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read graph file: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("edge ({u}, {v}) has non-positive weight {w}")]
    NonPositiveWeight { u: usize, v: usize, w: f64 },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("parallel edge between {0} and {1}")]
    ParallelEdge(usize, usize),
    #[error("vertex {vertex} out of range ({count} vertex ids)")]
    VertexOutOfRange { vertex: usize, count: usize },
    #[error("graph has no edges")]
    NoEdges,
    #[error("no edge between {0} and {1}")]
    MissingEdge(usize, usize),
    #[error("deleting edge ({0}, {1}) would disconnect the graph")]
    WouldDisconnect(usize, usize),
    #[error("weight vector has {got} entries but the graph has {expected} edges")]
    WeightCount { expected: usize, got: usize },
}

/// Undirected edge stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

impl Edge {
    pub fn key(&self) -> (usize, usize) {
        (self.u, self.v)
    }

    /// The endpoint opposite to `x`.
    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

fn ordered(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    alive: Vec<bool>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl WeightedGraph {
    /// Builds and validates a graph on vertex ids `0..vertex_count`.
    pub fn new<I>(vertex_count: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut map = BTreeMap::new();
        for (u, v, w) in edges {
            for x in [u, v] {
                if x >= vertex_count {
                    return Err(GraphError::VertexOutOfRange {
                        vertex: x,
                        count: vertex_count,
                    });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(GraphError::NonPositiveWeight { u, v, w });
            }
            let key = ordered(u, v);
            if map.insert(key, w).is_some() {
                return Err(GraphError::ParallelEdge(key.0, key.1));
            }
        }
        Self::from_parts(vec![true; vertex_count], map)
    }

    fn from_parts(alive: Vec<bool>, map: BTreeMap<(usize, usize), f64>) -> Result<Self, GraphError> {
        if map.is_empty() {
            return Err(GraphError::NoEdges);
        }
        let edges: Vec<Edge> = map.into_iter().map(|((u, v), w)| Edge { u, v, w }).collect();
        let mut adjacency = vec![Vec::new(); alive.len()];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.u].push((e.v, i));
            adjacency[e.v].push((e.u, i));
        }
        let g = WeightedGraph {
            alive,
            edges,
            adjacency,
        };
        let components = g.component_count();
        if components != 1 {
            return Err(GraphError::DisconnectedGraph { components });
        }
        Ok(g)
    }

    fn component_count(&self) -> usize {
        let mut seen = vec![false; self.alive.len()];
        let mut components = 0;
        for start in self.vertices() {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(x) = stack.pop() {
                for &(y, _) in &self.adjacency[x] {
                    if !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        components
    }

    /// Number of vertex ids ever allocated, including tombstoned ones.
    pub fn id_count(&self) -> usize {
        self.alive.len()
    }

    pub fn is_alive(&self, x: usize) -> bool {
        self.alive.get(x).copied().unwrap_or(false)
    }

    /// Live vertex ids in increasing order.
    pub fn vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.alive
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
    }

    pub fn vertex_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    /// Edges sorted lexicographically by `(u, v)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, index: usize) -> &Edge {
        &self.edges[index]
    }

    pub fn find_edge(&self, u: usize, v: usize) -> Option<usize> {
        self.edges
            .binary_search_by(|e| e.key().cmp(&ordered(u, v)))
            .ok()
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        self.find_edge(u, v).map(|i| self.edges[i].w)
    }

    /// `(neighbor, edge index)` pairs of `x`.
    pub fn neighbors(&self, x: usize) -> &[(usize, usize)] {
        &self.adjacency[x]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.adjacency[x].len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.w).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).sum()
    }

    /// Largest edge weight, written D(G) in the curvature bounds.
    pub fn max_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).fold(0.0, f64::max)
    }

    /// Same topology with the weights replaced, in edge order.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self, GraphError> {
        if weights.len() != self.edges.len() {
            return Err(GraphError::WeightCount {
                expected: self.edges.len(),
                got: weights.len(),
            });
        }
        let mut g = self.clone();
        for (e, &w) in g.edges.iter_mut().zip(weights) {
            if !(w > 0.0) || !w.is_finite() {
                return Err(GraphError::NonPositiveWeight { u: e.u, v: e.v, w });
            }
            e.w = w;
        }
        Ok(g)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, GraphError> {
        let w: Vec<f64> = self.edges.iter().map(|e| e.w * factor).collect();
        self.with_weights(&w)
    }

    /// Rescales the weights so that they sum to one.
    pub fn normalized(&self) -> Self {
        let total = self.total_weight();
        let mut g = self.clone();
        for e in &mut g.edges {
            e.w /= total;
        }
        g
    }

    fn dijkstra(&self, source: usize, skip_edge: Option<usize>) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.alive.len()];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(HeapEntry {
            dist: 0.0,
            vertex: source,
        });
        while let Some(HeapEntry { dist: d, vertex: x }) = heap.pop() {
            if d > dist[x] {
                continue;
            }
            for &(y, ei) in &self.adjacency[x] {
                if Some(ei) == skip_edge {
                    continue;
                }
                let nd = d + self.edges[ei].w;
                if nd < dist[y] {
                    dist[y] = nd;
                    heap.push(HeapEntry { dist: nd, vertex: y });
                }
            }
        }
        dist
    }

    /// Exact weighted shortest-path distances, one Dijkstra run per live vertex.
    pub fn all_pairs_distances(&self) -> DistanceMatrix {
        let n = self.alive.len();
        let mut d = vec![f64::INFINITY; n * n];
        for s in self.vertices() {
            let row = self.dijkstra(s, None);
            d[s * n..(s + 1) * n].copy_from_slice(&row);
        }
        DistanceMatrix { n, d }
    }

    /// Length of the shortest path between the endpoints of edge `index`
    /// that does not use the edge itself; infinite for a bridge.
    pub fn alternative_distance(&self, index: usize) -> f64 {
        let e = self.edges[index];
        self.dijkstra(e.u, Some(index))[e.v]
    }

    /// Removes edge `uv`. Fails if the edge is a bridge.
    pub fn delete_edge(&self, u: usize, v: usize) -> Result<Self, GraphError> {
        let index = self.find_edge(u, v).ok_or(GraphError::MissingEdge(u, v))?;
        let map: BTreeMap<_, _> = self
            .edges
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != index)
            .map(|(_, e)| (e.key(), e.w))
            .collect();
        match Self::from_parts(self.alive.clone(), map) {
            Err(GraphError::DisconnectedGraph { .. }) | Err(GraphError::NoEdges) => {
                let (a, b) = ordered(u, v);
                Err(GraphError::WouldDisconnect(a, b))
            }
            other => other,
        }
    }

    /// Merges `v` into `u`. Edges of `v` are re-attached to `u`; when that
    /// creates a parallel edge the shorter weight is kept, and the self-loop
    /// left by the contracted edge is dropped.
    pub fn contract_edge(
        &self,
        u: usize,
        v: usize,
        merges: &MergeMap,
    ) -> Result<(Self, MergeMap), GraphError> {
        self.find_edge(u, v).ok_or(GraphError::MissingEdge(u, v))?;
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in &self.edges {
            let a = if e.u == v { u } else { e.u };
            let b = if e.v == v { u } else { e.v };
            if a == b {
                continue;
            }
            map.entry(ordered(a, b))
                .and_modify(|w| *w = w.min(e.w))
                .or_insert(e.w);
        }
        let mut alive = self.alive.clone();
        alive[v] = false;
        let g = Self::from_parts(alive, map)?;
        let mut merges = merges.clone();
        merges.merge(v, u);
        Ok((g, merges))
    }

    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut triples = Vec::new();
        let mut max_id = None::<usize>;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| GraphError::Parse {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(parse_err(format!(
                    "expected `u v w`, found {} fields",
                    fields.len()
                )));
            }
            let u: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad vertex id `{}`", fields[0])))?;
            let v: usize = fields[1]
                .parse()
                .map_err(|_| parse_err(format!("bad vertex id `{}`", fields[1])))?;
            let w: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad weight `{}`", fields[2])))?;
            max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
            triples.push((u, v, w));
        }
        let count = max_id.map_or(0, |m| m + 1);
        Self::new(count, triples)
    }

    pub fn from_json_str(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDocument = serde_json::from_str(text)?;
        Self::new(doc.vertices, doc.edges.into_iter().map(|e| (e.u, e.v, e.w)))
    }

    /// Loads a graph file; JSON is recognised by a leading `{`, anything
    /// else is read as an edge list.
    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            Self::from_json_str(&text)
        } else {
            Self::parse_edge_list(&text)
        }
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            vertices: self.id_count(),
            edges: self.edges.clone(),
        }
    }
}

/// Serialized graph: `{"vertices": N, "edges": [{"u", "v", "w"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDocument {
    pub vertices: usize,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| self.vertex.cmp(&other.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dense shortest-path distances indexed by vertex id. Entries involving
/// tombstoned vertices are infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.d[u * self.n + v]
    }

    pub fn size(&self) -> usize {
        self.n
    }
}

/// Union-find record of contractions: original vertex -> surviving representative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeMap {
    parent: Vec<usize>,
}

impl MergeMap {
    pub fn identity(n: usize) -> Self {
        MergeMap {
            parent: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        r
    }

    /// Records that `from` was merged into `into`, then compresses every path
    /// so that each entry points straight at its representative.
    pub fn merge(&mut self, from: usize, into: usize) {
        let a = self.find(from);
        let b = self.find(into);
        if a != b {
            self.parent[a] = b;
        }
        for x in 0..self.parent.len() {
            self.parent[x] = self.find(x);
        }
    }

    /// Original vertices grouped by representative, in representative order.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut by_rep: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for x in 0..self.parent.len() {
            by_rep.entry(self.find(x)).or_default().push(x);
        }
        by_rep.into_values().collect()
    }
}
