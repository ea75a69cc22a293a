//! Stochastic arrival-departure models.
//!
//! A model is an underlying simple graph whose vertices carry a known arrival
//! timestep, a known deadline, and an independent distribution over their
//! actual death time. Timesteps start at 1; timestep 0 is the empty pre-state.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{rational_from_f64, Prob, Rational, FLOAT_TOLERANCE};

pub type Timestep = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for VertexId {
    fn from(id: u32) -> Self {
        VertexId(id)
    }
}

/// Unordered vertex pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(VertexId, VertexId);

impl Edge {
    pub fn new(u: impl Into<VertexId>, v: impl Into<VertexId>) -> Self {
        let (u, v) = (u.into(), v.into());
        if u <= v {
            Edge(u, v)
        } else {
            Edge(v, u)
        }
    }

    pub fn u(&self) -> VertexId {
        self.0
    }

    pub fn v(&self) -> VertexId {
        self.1
    }

    pub fn is_loop(&self) -> bool {
        self.0 == self.1
    }

    pub fn touches(&self, x: VertexId) -> bool {
        self.0 == x || self.1 == x
    }

    pub fn shares_vertex(&self, other: &Edge) -> bool {
        self.touches(other.0) || self.touches(other.1)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0, self.1)
    }
}

/// A vertex with its life interval `[arrival, deadline]` and death distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSpec {
    pub id: VertexId,
    pub arrival: Timestep,
    pub deadline: Timestep,
    /// `death_dist[i]` is the probability of dying at `arrival + i`.
    pub death_dist: Vec<f64>,
    /// Optional exact counterpart of `death_dist`, used in rational mode.
    pub death_dist_exact: Option<Vec<Rational>>,
}

impl VertexSpec {
    pub fn new(id: impl Into<VertexId>, arrival: Timestep, deadline: Timestep, death_dist: Vec<f64>) -> Self {
        VertexSpec {
            id: id.into(),
            arrival,
            deadline,
            death_dist,
            death_dist_exact: None,
        }
    }

    /// Vertex that is alive exactly during `[arrival, deadline]`.
    pub fn certain(id: impl Into<VertexId>, arrival: Timestep, deadline: Timestep) -> Self {
        let len = (deadline - arrival + 1) as usize;
        let mut dist = vec![0.0; len];
        dist[len - 1] = 1.0;
        let mut exact = vec![Rational::zero(); len];
        exact[len - 1] = Rational::from_integer(1.into());
        VertexSpec::new(id, arrival, deadline, dist).with_exact(exact)
    }

    pub fn with_exact(mut self, exact: Vec<Rational>) -> Self {
        self.death_dist_exact = Some(exact);
        self
    }

    pub fn interval_len(&self) -> usize {
        (self.deadline.saturating_sub(self.arrival) + 1) as usize
    }

    pub fn mass(&self, t: Timestep) -> f64 {
        if t < self.arrival || t > self.deadline {
            return 0.0;
        }
        self.death_dist.get((t - self.arrival) as usize).copied().unwrap_or(0.0)
    }

    /// Exact mass; falls back to the exact binary value of the float entry.
    pub fn exact_mass(&self, t: Timestep) -> Rational {
        if t < self.arrival || t > self.deadline {
            return Rational::zero();
        }
        let i = (t - self.arrival) as usize;
        match &self.death_dist_exact {
            Some(exact) => exact.get(i).cloned().unwrap_or_else(Rational::zero),
            None => self
                .death_dist
                .get(i)
                .map(|&p| rational_from_f64(p))
                .unwrap_or_else(Rational::zero),
        }
    }

    /// Timesteps with positive death mass, ascending.
    pub fn support(&self) -> Vec<Timestep> {
        (self.arrival..=self.deadline)
            .filter(|&t| self.mass(t) > 0.0 || self.exact_mass_positive(t))
            .collect()
    }

    fn exact_mass_positive(&self, t: Timestep) -> bool {
        match &self.death_dist_exact {
            Some(_) => self.exact_mass(t) > Rational::zero(),
            None => false,
        }
    }

    /// Earliest timestep the vertex can die at.
    pub fn min_death(&self) -> Timestep {
        self.support().first().copied().unwrap_or(self.deadline)
    }

    pub fn is_point(&self) -> bool {
        self.support().len() <= 1
    }

    pub fn survival(&self, t: Timestep) -> f64 {
        <f64 as Prob>::survival(self, t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AliveSet(BTreeSet<VertexId>);

impl AliveSet {
    pub fn new() -> Self {
        AliveSet::default()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.0.contains(&v)
    }

    pub fn insert(&mut self, v: VertexId) -> bool {
        self.0.insert(v)
    }

    pub fn remove(&mut self, v: VertexId) -> bool {
        self.0.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.0.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<VertexId> {
        self.iter().collect()
    }
}

impl FromIterator<VertexId> for AliveSet {
    fn from_iter<I: IntoIterator<Item = VertexId>>(iter: I) -> Self {
        AliveSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a AliveSet {
    type Item = VertexId;
    type IntoIter = std::iter::Copied<std::collections::btree_set::Iter<'a, VertexId>>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter().copied()
    }
}

impl fmt::Display for AliveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

/// Underlying graph plus per-vertex life intervals and death distributions.
///
/// Vertices are kept sorted by id and edges sorted lexicographically, so all
/// iteration is ascending-id. Construction does not validate; use
/// [`StochasticModel::validated`] or [`validate_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticModel {
    vertices: Vec<VertexSpec>,
    edges: Vec<Edge>,
    lifetime: Timestep,
    index: HashMap<VertexId, usize>,
}

impl StochasticModel {
    pub fn new(mut vertices: Vec<VertexSpec>, edges: impl IntoIterator<Item = Edge>) -> Self {
        vertices.sort_by_key(|v| v.id);
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        edges.sort();
        let mut index = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            index.entry(v.id).or_insert(i);
        }
        let lifetime = vertices.iter().map(|v| v.deadline).max().unwrap_or(0);
        StochasticModel {
            vertices,
            edges,
            lifetime,
            index,
        }
    }

    pub fn validated(vertices: Vec<VertexSpec>, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let model = StochasticModel::new(vertices, edges);
        validate_model(&model).into_result()?;
        Ok(model)
    }

    pub fn empty() -> Self {
        StochasticModel::new(Vec::new(), Vec::new())
    }

    pub fn vertices(&self) -> &[VertexSpec] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// `T = max_v b_v`, zero for the empty model.
    pub fn lifetime(&self) -> Timestep {
        self.lifetime
    }

    pub fn index_of(&self, id: VertexId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn vertex(&self, id: VertexId) -> Option<&VertexSpec> {
        self.index_of(id).map(|i| &self.vertices[i])
    }

    pub fn contains_edge(&self, e: Edge) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    /// Ids of vertices arriving exactly at `t`.
    pub fn arrivals_at(&self, t: Timestep) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().filter(move |v| v.arrival == t).map(|v| v.id)
    }

    /// Edges of `E(s)`: both endpoints in `alive`.
    pub fn induced_edges(&self, alive: &AliveSet) -> Vec<Edge> {
        self.edges
            .iter()
            .copied()
            .filter(|e| alive.contains(e.u()) && alive.contains(e.v()))
            .collect()
    }

    /// Copy with the given vertices and all their incident edges removed.
    pub fn without_vertices(&self, removed: &[VertexId]) -> Self {
        let keep = |id: &VertexId| !removed.contains(id);
        StochasticModel::new(
            self.vertices.iter().filter(|v| keep(&v.id)).cloned().collect(),
            self.edges.iter().copied().filter(|e| keep(&e.u()) && keep(&e.v())),
        )
    }

    /// True when every vertex has a single possible death time.
    pub fn is_deterministic(&self) -> bool {
        self.vertices.iter().all(VertexSpec::is_point)
    }

    /// Bit-level fingerprint usable as a memo key for decisions on this model.
    pub fn canonical_key(&self) -> Vec<u64> {
        let mut key = Vec::with_capacity(self.vertices.len() * 6 + self.edges.len());
        key.push(self.vertices.len() as u64);
        for v in &self.vertices {
            key.push(v.id.0 as u64);
            key.push(((v.arrival as u64) << 32) | v.deadline as u64);
            key.extend(v.death_dist.iter().map(|p| p.to_bits()));
        }
        key.push(u64::MAX);
        key.extend(self.edges.iter().map(|e| ((e.u().0 as u64) << 32) | e.v().0 as u64));
        key
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// The vertex or edge the rule applies to, e.g. `vertex 3` or `edge (0,1)`.
    pub subject: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.rule)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidModel(self.to_string()))
        }
    }

    fn push(&mut self, subject: String, rule: impl Into<String>) {
        self.violations.push(Violation {
            subject,
            rule: rule.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural and probabilistic invariant of a model.
pub fn validate_model(m: &StochasticModel) -> ValidationReport {
    let mut report = ValidationReport::default();

    for pair in m.vertices.windows(2) {
        if pair[0].id == pair[1].id {
            report.push(format!("vertex {}", pair[0].id), "duplicate vertex id");
        }
    }

    for v in &m.vertices {
        let subject = format!("vertex {}", v.id);
        if v.arrival < 1 {
            report.push(subject.clone(), "arrival before timestep 1");
        }
        if v.arrival > v.deadline {
            report.push(
                subject.clone(),
                format!("arrival {} after deadline {}", v.arrival, v.deadline),
            );
            continue;
        }
        let len = v.interval_len();
        if v.death_dist.len() != len {
            report.push(
                subject.clone(),
                format!(
                    "distribution length ≠ interval length ({} ≠ {})",
                    v.death_dist.len(),
                    len
                ),
            );
            continue;
        }
        if v.death_dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
            report.push(subject.clone(), "distribution has a negative or non-finite entry");
            continue;
        }
        let sum: f64 = v.death_dist.iter().sum();
        if (sum - 1.0).abs() > FLOAT_TOLERANCE {
            report.push(subject.clone(), format!("distribution sums to {sum}"));
        }
        if let Some(exact) = &v.death_dist_exact {
            if exact.len() != len {
                report.push(
                    subject.clone(),
                    format!("exact distribution length ≠ interval length ({} ≠ {len})", exact.len()),
                );
            } else if exact.iter().any(|p| *p < Rational::zero()) {
                report.push(subject.clone(), "exact distribution has a negative entry");
            } else {
                let total = exact.iter().fold(Rational::zero(), |acc, p| acc + p);
                if total != crate::prob::rational_one() {
                    report.push(subject.clone(), format!("exact distribution sums to {total}"));
                }
                let drift = exact
                    .iter()
                    .zip(&v.death_dist)
                    .any(|(q, p)| (Prob::to_f64(q) - p).abs() > FLOAT_TOLERANCE);
                if drift {
                    report.push(subject, "exact distribution disagrees with death_dist");
                }
            }
        }
    }

    for pair in m.edges.windows(2) {
        if pair[0] == pair[1] {
            report.push(format!("edge {}", pair[0]), "duplicate edge");
        }
    }
    for e in &m.edges {
        let subject = format!("edge {e}");
        if e.is_loop() {
            report.push(subject, "self-loop");
            continue;
        }
        let (u, v) = match (m.vertex(e.u()), m.vertex(e.v())) {
            (Some(u), Some(v)) => (u, v),
            (None, _) => {
                report.push(subject, format!("unknown vertex {}", e.u()));
                continue;
            }
            (_, None) => {
                report.push(subject, format!("unknown vertex {}", e.v()));
                continue;
            }
        };
        if u.arrival.max(v.arrival) > u.deadline.min(v.deadline) {
            report.push(subject, "disjoint life intervals");
        }
    }

    report
}

/// Probability that both endpoints of `e` are alive at the later arrival.
pub fn edge_presence<P: Prob>(m: &StochasticModel, e: Edge) -> Result<P> {
    if !m.contains_edge(e) {
        return Err(Error::UnknownEdge(e));
    }
    let u = m.vertex(e.u()).ok_or(Error::UnknownVertex(e.u()))?;
    let v = m.vertex(e.v()).ok_or(Error::UnknownVertex(e.v()))?;
    let start = u.arrival.max(v.arrival);
    Ok(P::survival(u, start) * P::survival(v, start))
}

pub fn edge_presence_probability(m: &StochasticModel, e: Edge) -> Result<f64> {
    edge_presence::<f64>(m, e)
}

/// Builds the model restarted at timestep `t` with survivors `alive`.
///
/// Survivors get arrival `t` and their death distribution conditioned on
/// `d_v >= t`; vertices that arrived before `t` and are not alive are dropped
/// with their edges.
pub fn conditioned_submodel(m: &StochasticModel, alive: &AliveSet, t: Timestep) -> Result<StochasticModel> {
    let mut vertices = Vec::with_capacity(m.len());
    for id in alive {
        let v = m.vertex(id).ok_or(Error::UnknownVertex(id))?;
        if v.arrival > t || t > v.deadline {
            return Err(Error::Conditioning {
                vertex: id,
                t,
                reason: format!("life interval [{},{}] does not contain t", v.arrival, v.deadline),
            });
        }
    }

    for v in &m.vertices {
        if alive.contains(v.id) {
            vertices.push(condition_on_survival(v, t)?);
        } else if v.arrival >= t {
            vertices.push(v.clone());
        }
    }

    let kept: BTreeSet<VertexId> = vertices.iter().map(|v| v.id).collect();
    let by_id: HashMap<VertexId, &VertexSpec> = vertices.iter().map(|v| (v.id, v)).collect();
    let edges: Vec<Edge> = m
        .edges
        .iter()
        .copied()
        .filter(|e| kept.contains(&e.u()) && kept.contains(&e.v()))
        .filter(|e| {
            let (u, v) = (by_id[&e.u()], by_id[&e.v()]);
            u.arrival.max(v.arrival) <= u.deadline.min(v.deadline)
        })
        .collect();
    Ok(StochasticModel::new(vertices, edges))
}

fn condition_on_survival(v: &VertexSpec, t: Timestep) -> Result<VertexSpec> {
    if t <= v.arrival {
        return Ok(VertexSpec {
            arrival: v.arrival.max(t),
            ..v.clone()
        });
    }
    let tail = v.survival(t);
    let exact_tail = v.death_dist_exact.as_ref().map(|_| <Rational as Prob>::survival(v, t));
    let zero_tail = match &exact_tail {
        Some(exact) => exact.is_zero(),
        None => tail <= 0.0,
    };
    if zero_tail {
        return Err(Error::Conditioning {
            vertex: v.id,
            t,
            reason: "survival probability is zero".into(),
        });
    }
    let dist = (t..=v.deadline).map(|tau| v.mass(tau) / tail).collect();
    let exact = exact_tail.map(|tail| (t..=v.deadline).map(|tau| v.exact_mass(tau) / tail.clone()).collect());
    Ok(VertexSpec {
        id: v.id,
        arrival: t,
        deadline: v.deadline,
        death_dist: dist,
        death_dist_exact: exact,
    })
}
