//! Matchings on static graphs: Edmonds' blossom algorithm for maximum
//! cardinality, an exhaustive reference matcher, and greedy maximal matching.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{Edge, VertexId};

/// Simple undirected graph with sorted vertex and edge lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticGraph {
    vertices: Vec<VertexId>,
    edges: Vec<Edge>,
}

impl StaticGraph {
    /// Rejects self-loops, parallel edges, duplicate vertices and edges
    /// touching undeclared vertices.
    pub fn new(vertices: impl IntoIterator<Item = VertexId>, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut vertices: Vec<VertexId> = vertices.into_iter().collect();
        vertices.sort();
        if vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph("duplicate vertex".into()));
        }
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        edges.sort();
        for w in edges.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidGraph(format!("parallel edge {}", w[0])));
            }
        }
        for e in &edges {
            if e.is_loop() {
                return Err(Error::InvalidGraph(format!("self-loop {e}")));
            }
            for x in [e.u(), e.v()] {
                if vertices.binary_search(&x).is_err() {
                    return Err(Error::InvalidGraph(format!("edge {e} touches unknown vertex {x}")));
                }
            }
        }
        Ok(StaticGraph { vertices, edges })
    }

    /// Builds from lists already known to be sorted, unique and consistent.
    pub(crate) fn from_sorted_unchecked(vertices: Vec<VertexId>, edges: Vec<Edge>) -> Self {
        debug_assert!(vertices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        StaticGraph { vertices, edges }
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains_edge(&self, e: Edge) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    fn position(&self, v: VertexId) -> usize {
        self.vertices
            .binary_search(&v)
            .expect("edge endpoints are graph vertices")
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            let (u, v) = (self.position(e.u()), self.position(e.v()));
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }
}

/// A set of pairwise vertex-disjoint edges, kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matching(Vec<Edge>);

impl Matching {
    pub fn empty() -> Self {
        Matching(Vec::new())
    }

    pub fn new(edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        edges.sort();
        let mut seen = Vec::with_capacity(edges.len() * 2);
        for e in &edges {
            if e.is_loop() {
                return Err(Error::InvalidGraph(format!("self-loop {e} in matching")));
            }
            for x in [e.u(), e.v()] {
                if seen.contains(&x) {
                    return Err(Error::InvalidGraph(format!("vertex {x} matched twice")));
                }
                seen.push(x);
            }
        }
        Ok(Matching(edges))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.0
    }

    pub fn covers(&self, v: VertexId) -> bool {
        self.0.iter().any(|e| e.touches(v))
    }

    /// `V(M)`, ascending.
    pub fn vertices(&self) -> Vec<VertexId> {
        let mut vs: Vec<VertexId> = self.0.iter().flat_map(|e| [e.u(), e.v()]).collect();
        vs.sort();
        vs
    }

    /// Every edge belongs to `g` (disjointness is a type invariant).
    pub fn is_valid_in(&self, g: &StaticGraph) -> bool {
        self.0.iter().all(|e| g.contains_edge(*e))
    }

    /// No edge of `g` can be added without breaking disjointness.
    pub fn is_maximal_in(&self, g: &StaticGraph) -> bool {
        g.edges().iter().all(|e| self.covers(e.u()) || self.covers(e.v()))
    }

    pub(crate) fn push_unchecked(&mut self, e: Edge) {
        debug_assert!(!self.covers(e.u()) && !self.covers(e.v()));
        let pos = self.0.binary_search(&e).unwrap_or_else(|p| p);
        self.0.insert(pos, e);
    }

    pub(crate) fn extend_unchecked(&mut self, other: &Matching) {
        for e in other.edges() {
            self.push_unchecked(*e);
        }
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for Matching {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[u32; 2]> = self.0.iter().map(|e| [e.u().0, e.v().0]).collect();
        pairs.serialize(serializer)
    }
}

const NONE: usize = usize::MAX;

/// Edmonds' blossom algorithm on an adjacency list, returning mates.
struct Blossom<'a> {
    adj: &'a [Vec<usize>],
    mate: Vec<usize>,
    parent: Vec<usize>,
    base: Vec<usize>,
    used: Vec<bool>,
    in_blossom: Vec<bool>,
    on_path: Vec<bool>,
    queue: VecDeque<usize>,
}

impl<'a> Blossom<'a> {
    fn new(adj: &'a [Vec<usize>]) -> Self {
        let n = adj.len();
        Blossom {
            adj,
            mate: vec![NONE; n],
            parent: vec![NONE; n],
            base: (0..n).collect(),
            used: vec![false; n],
            in_blossom: vec![false; n],
            on_path: vec![false; n],
            queue: VecDeque::with_capacity(n),
        }
    }

    fn solve(mut self) -> Vec<usize> {
        for root in 0..self.adj.len() {
            if self.mate[root] == NONE {
                if let Some(end) = self.find_augmenting_path(root) {
                    self.augment(end);
                }
            }
        }
        self.mate
    }

    fn lowest_common_ancestor(&mut self, mut a: usize, mut b: usize) -> usize {
        self.on_path.fill(false);
        loop {
            a = self.base[a];
            self.on_path[a] = true;
            if self.mate[a] == NONE {
                break;
            }
            a = self.parent[self.mate[a]];
        }
        loop {
            b = self.base[b];
            if self.on_path[b] {
                return b;
            }
            b = self.parent[self.mate[b]];
        }
    }

    fn mark_path(&mut self, mut v: usize, b: usize, mut child: usize) {
        while self.base[v] != b {
            self.in_blossom[self.base[v]] = true;
            self.in_blossom[self.base[self.mate[v]]] = true;
            self.parent[v] = child;
            child = self.mate[v];
            v = self.parent[self.mate[v]];
        }
    }

    fn find_augmenting_path(&mut self, root: usize) -> Option<usize> {
        let n = self.adj.len();
        self.used.fill(false);
        self.parent.fill(NONE);
        for (i, b) in self.base.iter_mut().enumerate() {
            *b = i;
        }
        self.used[root] = true;
        self.queue.clear();
        self.queue.push_back(root);

        while let Some(v) = self.queue.pop_front() {
            for k in 0..self.adj[v].len() {
                let to = self.adj[v][k];
                if self.base[v] == self.base[to] || self.mate[v] == to {
                    continue;
                }
                if to == root || (self.mate[to] != NONE && self.parent[self.mate[to]] != NONE) {
                    // Odd cycle: contract the blossom onto its base.
                    let cur = self.lowest_common_ancestor(v, to);
                    self.in_blossom.fill(false);
                    self.mark_path(v, cur, to);
                    self.mark_path(to, cur, v);
                    for i in 0..n {
                        if self.in_blossom[self.base[i]] {
                            self.base[i] = cur;
                            if !self.used[i] {
                                self.used[i] = true;
                                self.queue.push_back(i);
                            }
                        }
                    }
                } else if self.parent[to] == NONE {
                    self.parent[to] = v;
                    if self.mate[to] == NONE {
                        return Some(to);
                    }
                    let next = self.mate[to];
                    self.used[next] = true;
                    self.queue.push_back(next);
                }
            }
        }
        None
    }

    fn augment(&mut self, mut v: usize) {
        while v != NONE {
            let pv = self.parent[v];
            let next = self.mate[pv];
            self.mate[v] = pv;
            self.mate[pv] = v;
            v = next;
        }
    }
}

/// Maximum cardinality matching of a general graph.
pub fn max_matching(g: &StaticGraph) -> Matching {
    let adj = g.adjacency();
    let mate = Blossom::new(&adj).solve();
    let edges = mate
        .iter()
        .enumerate()
        .filter(|&(i, &j)| j != NONE && i < j)
        .map(|(i, &j)| Edge::new(g.vertices[i], g.vertices[j]));
    Matching(edges.collect::<Vec<_>>()).sorted()
}

/// Size of a maximum matching on dense indices `0..n`.
pub(crate) fn max_matching_size_indexed(n: usize, edges: &[(usize, usize)]) -> usize {
    if edges.is_empty() {
        return 0;
    }
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mate = Blossom::new(&adj).solve();
    mate.iter().filter(|&&m| m != NONE).count() / 2
}

impl Matching {
    fn sorted(mut self) -> Self {
        self.0.sort();
        self
    }
}

/// Largest edge count accepted by [`brute_force_max_matching`].
/// `K_10` has 45 edges.
pub const BRUTE_FORCE_MAX_EDGES: usize = 45;

/// Exhaustive maximum matching size by pruned edge-inclusion recursion.
pub fn brute_force_max_matching(g: &StaticGraph) -> Result<usize> {
    let m = g.edges().len();
    if m > BRUTE_FORCE_MAX_EDGES {
        return Err(Error::CapExceeded {
            what: "edge count for brute-force matching",
            count: m as u128,
            cap: BRUTE_FORCE_MAX_EDGES as u128,
            hint: "",
        });
    }
    let mut compact: HashMap<VertexId, u32> = HashMap::new();
    let masks: Vec<u64> = g
        .edges()
        .iter()
        .map(|e| {
            let mut mask = 0u64;
            for x in [e.u(), e.v()] {
                let next = compact.len() as u32;
                mask |= 1u64.checked_shl(*compact.entry(x).or_insert(next)).unwrap_or(0);
            }
            mask
        })
        .collect();
    if compact.len() > 64 {
        return Err(Error::CapExceeded {
            what: "endpoint count for brute-force matching",
            count: compact.len() as u128,
            cap: 64,
            hint: "",
        });
    }
    let cap = g.vertices().len() / 2;
    let mut best = 0;
    search(&masks, 0, 0, 0, cap, &mut best);
    Ok(best)
}

fn search(masks: &[u64], i: usize, used: u64, size: usize, cap: usize, best: &mut usize) {
    if size > *best {
        *best = size;
    }
    if i == masks.len() || *best == cap || size + (masks.len() - i) <= *best {
        return;
    }
    if masks[i] & used == 0 {
        search(masks, i + 1, used | masks[i], size + 1, cap, best);
    }
    search(masks, i + 1, used, size, cap, best);
}

/// Scans edges in `order` (ascending by default) and keeps every edge
/// disjoint from those already taken. `order` must list edges of `g`.
pub fn greedy_maximal_matching(g: &StaticGraph, order: Option<&[Edge]>) -> Result<Matching> {
    let order = order.unwrap_or(g.edges());
    let mut taken: Vec<VertexId> = Vec::new();
    let mut matching = Vec::new();
    for e in order {
        if !g.contains_edge(*e) {
            return Err(Error::InvalidGraph(format!("ordering lists {e}, which is not an edge")));
        }
        if !taken.contains(&e.u()) && !taken.contains(&e.v()) {
            taken.extend([e.u(), e.v()]);
            matching.push(*e);
        }
    }
    Ok(Matching(matching).sorted())
}
