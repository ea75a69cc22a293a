//! Expected hindsight-optimal matching size: Monte-Carlo estimators with
//! median amplification, and their exact enumerative counterparts.
//!
//! Three quantities are covered, each relative to the model's first
//! timestep `t0` (1 for top-level models):
//!
//! * `opt`: expected maximum matching of a random instantiation;
//! * `opt | e`: one plus `opt` of the model without the endpoints of `e`;
//! * `opt | ∅`: `opt` after removing every vertex alive only at `t0`.

use log::warn;
use petgraph::graph::UnGraph;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::limits::Limits;
use crate::matching::max_matching_size_indexed;
use crate::model::{Edge, StochasticModel, Timestep};
use crate::prob::Prob;
use crate::sampling::{enumerate_instantiations, IndexedModel, Instantiation, Sampler};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub epsilon: f64,
    pub delta: f64,
    /// Samples per run; `None` means `ceil(n^4 / epsilon^2)`.
    pub sample_override: Option<u64>,
    pub seed: u64,
    /// Runs are `ceil(amplification * ln(1/delta))`.
    pub amplification: f64,
    /// Log a warning when the per-run sample count exceeds this.
    pub sample_budget: Option<u64>,
}

impl EstimatorConfig {
    pub fn new(epsilon: f64, delta: f64, seed: u64) -> Self {
        EstimatorConfig {
            epsilon,
            delta,
            sample_override: None,
            seed,
            amplification: 18.0,
            sample_budget: Some(10_000_000),
        }
    }

    pub fn with_samples(mut self, k: u64) -> Self {
        self.sample_override = Some(k);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if self.sample_override == Some(0) {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        if self.amplification.is_nan() || self.amplification <= 0.0 {
            return Err(Error::Config("amplification constant must be positive".into()));
        }
        Ok(())
    }

    pub fn runs(&self) -> usize {
        ((self.amplification * (1.0 / self.delta).ln()).ceil() as usize).max(1)
    }

    /// Samples per run for a model with `n` vertices.
    pub fn samples_for(&self, n: usize) -> u64 {
        self.sample_override.unwrap_or_else(|| {
            let k = (n as f64).powi(4) / (self.epsilon * self.epsilon);
            k.ceil().max(1.0).min(u64::MAX as f64) as u64
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Total samples across all runs.
    pub samples_used: u64,
    pub runs: usize,
    /// The zero-probability test fired and the estimate was forced to 0.
    pub degenerate_zero: bool,
    /// Upper bound on `Pr[X = 0]` used by the zero test.
    pub zero_probability: f64,
    pub run_values: Vec<f64>,
    /// Largest per-run sample standard deviation.
    pub max_run_std_dev: f64,
}

impl Estimate {
    fn shifted(mut self, by: f64) -> Self {
        self.value += by;
        for v in &mut self.run_values {
            *v += by;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transform {
    Identity,
    /// Remove vertices arriving at `t0` that also die at `t0`.
    DropStartOnly(Timestep),
}

impl Transform {
    fn keeps(self, arrival: Timestep, death: Timestep) -> bool {
        match self {
            Transform::Identity => true,
            Transform::DropStartOnly(t0) => !(arrival == t0 && death == t0),
        }
    }
}

/// Maximum matching size of one instantiation: a single sample of `X`.
pub fn sample_value(m: &StochasticModel, inst: &Instantiation) -> usize {
    sample_value_with(
        &IndexedModel::new(m),
        &inst.aligned().collect::<Vec<_>>(),
        Transform::Identity,
    )
}

/// Single sample of the `opt | ∅` estimator (start timestep 1).
pub fn sample_value_given_empty(m: &StochasticModel, inst: &Instantiation) -> usize {
    sample_value_with(
        &IndexedModel::new(m),
        &inst.aligned().collect::<Vec<_>>(),
        Transform::DropStartOnly(1),
    )
}

fn sample_value_with(idx: &IndexedModel, deaths: &[Timestep], transform: Transform) -> usize {
    let edges: Vec<(usize, usize)> = idx
        .present_edges(deaths, |i| transform.keeps(idx.arrival[i], deaths[i]))
        .collect();
    max_matching_size_indexed(idx.n, &edges)
}

fn exact_with<P: Prob>(m: &StochasticModel, transform: Transform, limits: &Limits) -> Result<P> {
    let idx = IndexedModel::new(m);
    let mut total = P::zero();
    let mut deaths = Vec::with_capacity(m.len());
    for (inst, p) in enumerate_instantiations::<P>(m, limits)? {
        deaths.clear();
        deaths.extend(inst.aligned());
        let size = sample_value_with(&idx, &deaths, transform);
        if size > 0 {
            total = total + p * P::from_count(size);
        }
    }
    Ok(total)
}

/// `opt(G) = Σ_I Pr(I) · opt(I)` by enumeration.
pub fn exact_opt<P: Prob>(m: &StochasticModel, limits: &Limits) -> Result<P> {
    exact_with(m, Transform::Identity, limits)
}

pub fn exact_opt_given_edge<P: Prob>(m: &StochasticModel, e: Edge, limits: &Limits) -> Result<P> {
    exact_opt_given_edge_at(m, e, 1, limits)
}

pub fn exact_opt_given_empty<P: Prob>(m: &StochasticModel, limits: &Limits) -> Result<P> {
    exact_opt_given_empty_at(m, 1, limits)
}

pub(crate) fn exact_opt_given_edge_at<P: Prob>(
    m: &StochasticModel,
    e: Edge,
    t0: Timestep,
    limits: &Limits,
) -> Result<P> {
    let residual = residual_without_edge(m, e, t0)?;
    Ok(P::one() + exact_opt::<P>(&residual, limits)?)
}

pub(crate) fn exact_opt_given_empty_at<P: Prob>(m: &StochasticModel, t0: Timestep, limits: &Limits) -> Result<P> {
    exact_with(m, Transform::DropStartOnly(t0), limits)
}

fn residual_without_edge(m: &StochasticModel, e: Edge, t0: Timestep) -> Result<StochasticModel> {
    if !m.contains_edge(e) {
        return Err(Error::UnknownEdge(e));
    }
    for x in [e.u(), e.v()] {
        let spec = m.vertex(x).ok_or(Error::UnknownVertex(x))?;
        if spec.arrival != t0 {
            return Err(Error::Precondition(format!(
                "edge {e} is not present at timestep {t0}: vertex {x} arrives at {}",
                spec.arrival
            )));
        }
    }
    Ok(m.without_vertices(&[e.u(), e.v()]))
}

/// Monte-Carlo estimate of `opt(G)`.
pub fn estimate_opt(m: &StochasticModel, cfg: &EstimatorConfig) -> Result<Estimate> {
    estimate_with(m, cfg, Transform::Identity)
}

/// Estimate of `opt(G | e)` for an edge whose endpoints both arrive at timestep 1.
pub fn estimate_opt_given_edge(m: &StochasticModel, e: Edge, cfg: &EstimatorConfig) -> Result<Estimate> {
    estimate_opt_given_edge_at(m, e, 1, cfg)
}

pub fn estimate_opt_given_empty(m: &StochasticModel, cfg: &EstimatorConfig) -> Result<Estimate> {
    estimate_with(m, cfg, Transform::DropStartOnly(1))
}

pub(crate) fn estimate_opt_given_edge_at(
    m: &StochasticModel,
    e: Edge,
    t0: Timestep,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    let residual = residual_without_edge(m, e, t0)?;
    Ok(estimate_with(&residual, cfg, Transform::Identity)?.shifted(1.0))
}

pub(crate) fn estimate_opt_given_empty_at(
    m: &StochasticModel,
    t0: Timestep,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    estimate_with(m, cfg, Transform::DropStartOnly(t0))
}

/// Presence probability of `e` once the transform has removed vertices.
fn transformed_presence(m: &StochasticModel, e: Edge, transform: Transform) -> f64 {
    let (Some(u), Some(v)) = (m.vertex(e.u()), m.vertex(e.v())) else {
        return 0.0;
    };
    let start = u.arrival.max(v.arrival);
    [u, v]
        .iter()
        .map(|w| {
            let needed = match transform {
                Transform::DropStartOnly(t0) if w.arrival == t0 => start.max(t0 + 1),
                _ => start,
            };
            w.survival(needed)
        })
        .product()
}

/// Probability that no edge of the most-likely matching appears, which
/// upper-bounds `Pr[X = 0]`.
///
/// The matching maximizes `Σ -ln(1 - p_e)`, i.e. minimizes `Π (1 - p_e)`.
fn zero_probability_bound(m: &StochasticModel, transform: Transform) -> Result<f64> {
    const SCALE: f64 = 1e12;
    let mut graph: UnGraph<(), i128> = UnGraph::with_capacity(m.len(), m.edges().len());
    let nodes: Vec<_> = (0..m.len()).map(|_| graph.add_node(())).collect();
    let mut miss = Vec::with_capacity(m.edges().len());
    for &e in m.edges() {
        let p = transformed_presence(m, e, transform).clamp(0.0, 1.0);
        if p >= 1.0 {
            return Ok(0.0);
        }
        if p <= 0.0 {
            continue;
        }
        let (Some(i), Some(j)) = (m.index_of(e.u()), m.index_of(e.v())) else {
            continue;
        };
        let weight = (-(1.0 - p).ln() * SCALE).round() as i128;
        graph.add_edge(nodes[i], nodes[j], weight.max(1));
        miss.push(((i.min(j), i.max(j)), 1.0 - p));
    }
    let chosen = rustworkx_core::max_weight_matching::max_weight_matching(
        &graph,
        false,
        |edge: petgraph::graph::EdgeReference<'_, i128>| Ok::<i128, std::convert::Infallible>(*edge.weight()),
        false,
    )
    .unwrap_or_else(|never| match never {});
    let mut q = 1.0;
    for (a, b) in chosen {
        let key = (a.min(b), a.max(b));
        if let Some((_, miss_p)) = miss.iter().find(|(k, _)| *k == key) {
            q *= miss_p;
        }
    }
    Ok(q)
}

fn run_seed(seed: u64, run: usize) -> u64 {
    // splitmix64 finalizer over (seed, run)
    let mut z = seed.wrapping_add((run as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Lower median, so the output is always one of the run values.
    sorted[(sorted.len() - 1) / 2]
}

fn estimate_with(m: &StochasticModel, cfg: &EstimatorConfig, transform: Transform) -> Result<Estimate> {
    cfg.validate()?;
    let n = m.len();
    let runs = cfg.runs();
    let q = zero_probability_bound(m, transform)?;
    let threshold = if n == 0 { 0.0 } else { 1.0 - 1.0 / n as f64 };
    if q > threshold {
        return Ok(Estimate {
            value: 0.0,
            samples_used: 0,
            runs,
            degenerate_zero: true,
            zero_probability: q,
            run_values: vec![0.0; runs],
            max_run_std_dev: 0.0,
        });
    }

    let k = cfg.samples_for(n);
    if let Some(budget) = cfg.sample_budget {
        if k > budget {
            warn!("{k} samples per run exceeds the budget of {budget}; this may take a long time");
        }
    }

    let idx = IndexedModel::new(m);
    let sampler = Sampler::new(m)?;
    let bound = (n / 2) as f64 + 1.0;

    let mut run_values = Vec::with_capacity(runs);
    let mut max_std = 0.0f64;
    if m.is_deterministic() {
        // Every draw yields the same instantiation, hence the same sample.
        let mut deaths = Vec::new();
        sampler.draw_into(cfg.seed, 0, &mut deaths);
        let x = sample_value_with(&idx, &deaths, transform) as f64;
        run_values.resize(runs, x);
    } else {
        for run in 0..runs {
            let seed = run_seed(cfg.seed, run);
            let (sum, sum_sq) = (0..k)
                .into_par_iter()
                .map_init(Vec::new, |deaths, i| {
                    sampler.draw_into(seed, i, deaths);
                    let x = sample_value_with(&idx, deaths, transform) as u64;
                    (x, x * x)
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            let mean = sum as f64 / k as f64;
            let std = if k > 1 {
                let var = (sum_sq as f64 - k as f64 * mean * mean) / (k - 1) as f64;
                var.max(0.0).sqrt()
            } else {
                0.0
            };
            assert!(
                std <= bound,
                "sample standard deviation {std} exceeds floor(n/2)+1 = {bound}"
            );
            max_std = max_std.max(std);
            run_values.push(mean);
        }
    }

    Ok(Estimate {
        value: median(&run_values),
        samples_used: k.saturating_mul(runs as u64),
        runs,
        degenerate_zero: false,
        zero_probability: q,
        run_values,
        max_run_std_dev: max_std,
    })
}
