//! Model generators: the `S_n` family, a three-timestep six-vertex example, and
//! seeded random models for experiments and tests.

use num_bigint::BigInt;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Edge, StochasticModel, Timestep, VertexSpec};
use crate::prob::{rational_from_f64, Prob, Rational};

/// `S_n`: a clique `L` of vertices alive on days 1-2 that each die after day 1
/// with probability 1/2, plus pendant vertices `U` present only on day 2.
///
/// Ids: `ℓ_i = i - 1`, `u_i = n + i - 1` for `i` in `1..=n`.
pub fn make_sn_family(n: usize) -> Result<StochasticModel> {
    if n == 0 {
        return Err(Error::Precondition("S_n requires n >= 1".into()));
    }
    let half = Rational::new(BigInt::one(), BigInt::from(2));
    let mut vertices = Vec::with_capacity(2 * n);
    for i in 0..n {
        vertices.push(VertexSpec::new(i as u32, 1, 2, vec![0.5, 0.5]).with_exact(vec![half.clone(), half.clone()]));
    }
    for i in 0..n {
        vertices.push(VertexSpec::certain((n + i) as u32, 2, 2));
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2 + n);
    for i in 0..n {
        for j in i + 1..n {
            edges.push(Edge::new(i as u32, j as u32));
        }
        edges.push(Edge::new(i as u32, (n + i) as u32));
    }
    StochasticModel::validated(vertices, edges)
}

/// Three early vertices `u_1..u_3` (days 1-3, death distribution
/// `(eps, eps, 1 - 2 eps)`) and three late vertices `v_1..v_3` (day 3 only).
/// Edges: `u_i v_i`, `u_2 u_3` and `v_1 v_2`. Hindsight optimum is 3 when
/// every `u` reaches day 3 and 2 otherwise; for small `eps` the optimal
/// policy waits at day 1 and matches `u_2 u_3` at day 2 once a `u` has died.
///
/// Ids: `u_i = i - 1`, `v_i = i + 2`.
pub fn make_six_vertex_model(eps: f64) -> Result<StochasticModel> {
    if !(0.0..=0.5).contains(&eps) {
        return Err(Error::Precondition(format!("eps must lie in [0, 1/2], got {eps}")));
    }
    let e = rational_from_f64(eps);
    let rest = Rational::one() - e.clone() - e.clone();
    let mut vertices = Vec::with_capacity(6);
    for i in 0..3u32 {
        vertices.push(
            VertexSpec::new(i, 1, 3, vec![eps, eps, Prob::to_f64(&rest)]).with_exact(vec![
                e.clone(),
                e.clone(),
                rest.clone(),
            ]),
        );
    }
    for i in 3..6u32 {
        vertices.push(VertexSpec::certain(i, 3, 3));
    }
    let edges = [(0, 3), (1, 4), (2, 5), (1, 2), (3, 4)]
        .into_iter()
        .map(|(u, v)| Edge::new(u, v));
    StochasticModel::validated(vertices, edges)
}

/// Parameters for [`random_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomModelConfig {
    pub vertices: usize,
    pub lifetime: Timestep,
    /// Probability of including each pair with intersecting life intervals.
    pub edge_prob: f64,
    /// Death-mass weights are drawn uniformly from `1..=max_weight`, so
    /// every day of a vertex's interval has positive probability.
    pub max_weight: u32,
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        RandomModelConfig {
            vertices: 6,
            lifetime: 3,
            edge_prob: 0.5,
            max_weight: 3,
        }
    }
}

/// Seeded random model. Death distributions are integer weights normalized
/// exactly, so every random model is usable in rational mode.
pub fn random_model(cfg: &RandomModelConfig, seed: u64) -> Result<StochasticModel> {
    if cfg.lifetime == 0 {
        return Err(Error::Precondition("lifetime must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.edge_prob) {
        return Err(Error::Precondition("edge_prob must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = Vec::with_capacity(cfg.vertices);
    for id in 0..cfg.vertices as u32 {
        let arrival = rng.gen_range(1..=cfg.lifetime);
        // Max of two draws: later deadlines give longer, more random lives.
        let deadline = rng
            .gen_range(arrival..=cfg.lifetime)
            .max(rng.gen_range(arrival..=cfg.lifetime));
        let len = (deadline - arrival + 1) as usize;
        let weights: Vec<u32> = (0..len).map(|_| rng.gen_range(1..=cfg.max_weight.max(1))).collect();
        let total: u32 = weights.iter().sum();
        let exact: Vec<Rational> = weights
            .iter()
            .map(|&w| Rational::new(BigInt::from(w), BigInt::from(total)))
            .collect();
        let dist = weights.iter().map(|&w| w as f64 / total as f64).collect();
        vertices.push(VertexSpec::new(id, arrival, deadline, dist).with_exact(exact));
    }
    let mut edges = Vec::new();
    for i in 0..vertices.len() {
        for j in i + 1..vertices.len() {
            let (u, v) = (&vertices[i], &vertices[j]);
            if u.arrival.max(v.arrival) <= u.deadline.min(v.deadline) && rng.gen_bool(cfg.edge_prob) {
                edges.push(Edge::new(u.id, v.id));
            }
        }
    }
    StochasticModel::validated(vertices, edges)
}
