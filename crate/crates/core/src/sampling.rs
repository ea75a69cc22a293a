//! Instantiations: sampling, the induced static graph, realizations, and
//! exhaustive enumeration of the instantiation space.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::limits::Limits;
use crate::matching::StaticGraph;
use crate::model::{AliveSet, Edge, StochasticModel, Timestep, VertexId};
use crate::prob::Prob;

/// One death time per vertex, listed in the model's ascending-id order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Instantiation {
    death_times: Vec<(VertexId, Timestep)>,
}

impl Instantiation {
    /// Builds from `(vertex, death time)` pairs covering every vertex of `m`.
    pub fn new(m: &StochasticModel, deaths: impl IntoIterator<Item = (VertexId, Timestep)>) -> Result<Self> {
        let mut death_times: Vec<(VertexId, Timestep)> = deaths.into_iter().collect();
        death_times.sort();
        let inst = Instantiation { death_times };
        inst.check(m)?;
        Ok(inst)
    }

    pub(crate) fn from_aligned(m: &StochasticModel, deaths: &[Timestep]) -> Self {
        Instantiation {
            death_times: m.vertices().iter().map(|v| v.id).zip(deaths.iter().copied()).collect(),
        }
    }

    /// Every vertex alive until its deadline.
    pub fn full_survival(m: &StochasticModel) -> Self {
        Instantiation {
            death_times: m.vertices().iter().map(|v| (v.id, v.deadline)).collect(),
        }
    }

    pub fn death_time(&self, v: VertexId) -> Option<Timestep> {
        self.death_times
            .binary_search_by_key(&v, |&(id, _)| id)
            .ok()
            .map(|i| self.death_times[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, Timestep)> + '_ {
        self.death_times.iter().copied()
    }

    /// Death times aligned with `m.vertices()`.
    pub(crate) fn aligned(&self) -> impl Iterator<Item = Timestep> + '_ {
        self.death_times.iter().map(|&(_, d)| d)
    }

    fn check(&self, m: &StochasticModel) -> Result<()> {
        if self.death_times.len() != m.len() {
            return Err(Error::Precondition(format!(
                "instantiation lists {} vertices, model has {}",
                self.death_times.len(),
                m.len()
            )));
        }
        for (spec, &(id, d)) in m.vertices().iter().zip(&self.death_times) {
            if spec.id != id {
                return Err(Error::UnknownVertex(id));
            }
            if d < spec.arrival || d > spec.deadline || spec.mass(d) <= 0.0 {
                return Err(Error::Precondition(format!(
                    "death time {d} of vertex {id} has zero probability"
                )));
            }
        }
        Ok(())
    }
}

/// Alive sets for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realization {
    snapshots: Vec<AliveSet>,
}

impl Realization {
    pub fn alive(&self, t: Timestep) -> Option<&AliveSet> {
        (t as usize).checked_sub(1).and_then(|i| self.snapshots.get(i))
    }

    pub fn snapshots(&self) -> &[AliveSet] {
        &self.snapshots
    }
}

/// Per-vertex death-time samplers, built once per model.
pub struct Sampler<'m> {
    model: &'m StochasticModel,
    dists: Vec<Option<WeightedIndex<f64>>>,
}

impl<'m> Sampler<'m> {
    pub fn new(model: &'m StochasticModel) -> Result<Self> {
        let dists = model
            .vertices()
            .iter()
            .map(|v| {
                if v.is_point() {
                    Ok(None)
                } else {
                    WeightedIndex::new(v.death_dist.iter().copied())
                        .map(Some)
                        .map_err(|e| Error::InvalidModel(format!("vertex {}: {e}", v.id)))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Sampler { model, dists })
    }

    /// Writes one death time per vertex, drawn from stream `index` of `seed`.
    pub fn draw_into(&self, seed: u64, index: u64, out: &mut Vec<Timestep>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        out.clear();
        for (spec, dist) in self.model.vertices().iter().zip(&self.dists) {
            let d = match dist {
                Some(dist) => spec.arrival + dist.sample(&mut rng) as Timestep,
                None => spec.min_death(),
            };
            out.push(d);
        }
    }

    pub fn draw(&self, seed: u64, index: u64) -> Instantiation {
        let mut deaths = Vec::with_capacity(self.model.len());
        self.draw_into(seed, index, &mut deaths);
        Instantiation::from_aligned(self.model, &deaths)
    }
}

/// Samples an instantiation; a pure function of `(m, seed, index)`.
pub fn sample_instantiation(m: &StochasticModel, seed: u64, index: u64) -> Result<Instantiation> {
    Ok(Sampler::new(m)?.draw(seed, index))
}

/// Static graph of edges whose endpoints' realized lifetimes intersect.
pub fn instantiation_graph(m: &StochasticModel, inst: &Instantiation) -> StaticGraph {
    let deaths: Vec<Timestep> = inst.aligned().collect();
    let edges = IndexedModel::new(m)
        .present_edges(&deaths, |_| true)
        .map(|(i, j)| Edge::new(m.vertices()[i].id, m.vertices()[j].id))
        .collect();
    StaticGraph::from_sorted_unchecked(m.vertices().iter().map(|v| v.id).collect(), edges)
}

pub fn realization_of(m: &StochasticModel, inst: &Instantiation) -> Realization {
    let snapshots = (1..=m.lifetime())
        .map(|t| {
            m.vertices()
                .iter()
                .zip(inst.aligned())
                .filter(|(v, d)| v.arrival <= t && t <= *d)
                .map(|(v, _)| v.id)
                .collect()
        })
        .collect();
    Realization { snapshots }
}

/// Edge endpoints resolved to vertex positions, for hot loops.
pub(crate) struct IndexedModel {
    pub(crate) n: usize,
    pub(crate) arrival: Vec<Timestep>,
    pub(crate) edges: Vec<(usize, usize)>,
}

impl IndexedModel {
    pub(crate) fn new(m: &StochasticModel) -> Self {
        let edges = m
            .edges()
            .iter()
            .filter_map(|e| Some((m.index_of(e.u())?, m.index_of(e.v())?)))
            .collect();
        IndexedModel {
            n: m.len(),
            arrival: m.vertices().iter().map(|v| v.arrival).collect(),
            edges,
        }
    }

    /// Present edges between kept vertices, given aligned death times.
    pub(crate) fn present_edges<'a>(
        &'a self,
        deaths: &'a [Timestep],
        keep: impl Fn(usize) -> bool + 'a,
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        self.edges.iter().copied().filter(move |&(i, j)| {
            keep(i) && keep(j) && self.arrival[i].max(self.arrival[j]) <= deaths[i].min(deaths[j])
        })
    }
}

/// Iterator over every positive-probability instantiation of a model.
pub struct Enumeration<'m, P> {
    model: &'m StochasticModel,
    supports: Vec<Vec<(Timestep, P)>>,
    cursor: Vec<usize>,
    done: bool,
}

impl<'m, P: Prob> Iterator for Enumeration<'m, P> {
    type Item = (Instantiation, P);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.done {
                return None;
            }
            let mut prob = P::one();
            let mut deaths = Vec::with_capacity(self.cursor.len());
            for (support, &c) in self.supports.iter().zip(&self.cursor) {
                let (d, p) = &support[c];
                deaths.push(*d);
                prob = prob * p.clone();
            }
            self.advance();
            if !prob.is_zero() {
                return Some((Instantiation::from_aligned(self.model, &deaths), prob));
            }
        }
    }
}

impl<'m, P> Enumeration<'m, P> {
    fn advance(&mut self) {
        for (c, support) in self.cursor.iter_mut().zip(&self.supports).rev() {
            *c += 1;
            if *c < support.len() {
                return;
            }
            *c = 0;
        }
        self.done = true;
    }
}

/// Number of death-time vectors an enumeration would visit.
pub fn instantiation_count(m: &StochasticModel) -> u128 {
    m.vertices()
        .iter()
        .map(|v| v.support().len() as u128)
        .try_fold(1u128, |acc, k| acc.checked_mul(k))
        .unwrap_or(u128::MAX)
}

/// Streams `(instantiation, probability)` over the whole instantiation space.
///
/// Instantiations with equal static graphs but different death times are
/// listed separately.
pub fn enumerate_instantiations<'m, P: Prob>(m: &'m StochasticModel, limits: &Limits) -> Result<Enumeration<'m, P>> {
    let count = instantiation_count(m);
    if count > limits.max_instantiations {
        return Err(Error::CapExceeded {
            what: "instantiation count",
            count,
            cap: limits.max_instantiations,
            hint: "; use Monte-Carlo estimation instead",
        });
    }
    let supports: Vec<Vec<(Timestep, P)>> = m
        .vertices()
        .iter()
        .map(|v| {
            v.support()
                .into_iter()
                .map(|t| (t, P::death_mass(v, t)))
                .filter(|(_, p)| !p.is_zero())
                .collect()
        })
        .collect();
    let done = supports.iter().any(Vec::is_empty);
    Ok(Enumeration {
        model: m,
        cursor: vec![0; supports.len()],
        supports,
        done,
    })
}
