//! Adaptive matching: the timestep-by-timestep runner, concrete policies,
//! and exact / Monte-Carlo evaluation of a policy's expected matching size.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_opt_given_edge_at, estimate_opt_given_empty_at, exact_opt_given_edge_at, exact_opt_given_empty_at,
    EstimatorConfig,
};
use crate::exact_dp::{chi_star, DpTable};
use crate::limits::Limits;
use crate::matching::{max_matching, Matching, StaticGraph};
use crate::model::{conditioned_submodel, AliveSet, Edge, StochasticModel, Timestep, VertexId};
use crate::prob::Prob;
use crate::sampling::{enumerate_instantiations, Instantiation, Sampler};

/// Everything a policy may look at when deciding at timestep `t`.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    /// The conditioned submodel for the current snapshot.
    pub submodel: &'a StochasticModel,
    pub t: Timestep,
    pub alive: &'a AliveSet,
    /// `E(s)`, ascending.
    pub edges: &'a [Edge],
}

pub trait Policy: Send + Sync {
    fn name(&self) -> String;

    /// Chooses `M_t ⊆ E(s)` to match irrevocably.
    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Matching>;

    /// Deterministic policies are a function of the context alone.
    fn is_deterministic(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub t: Timestep,
    pub arrivals: Vec<VertexId>,
    /// Snapshot the policy decided on.
    pub alive: Vec<VertexId>,
    pub decision: Matching,
    /// Unmatched vertices of the snapshot that die at `t`.
    pub deaths: Vec<VertexId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyTrace {
    pub steps: Vec<TraceStep>,
    matching: Matching,
}

impl PolicyTrace {
    /// Final matching: the union of every step's decision.
    pub fn matching(&self) -> &Matching {
        &self.matching
    }

    pub fn step(&self, t: Timestep) -> Option<&TraceStep> {
        self.steps.iter().find(|s| s.t == t)
    }
}

/// Simulates a policy on one instantiation. The policy never sees death times.
pub fn run_adaptive(m: &StochasticModel, policy: &dyn Policy, inst: &Instantiation) -> Result<PolicyTrace> {
    let mut alive = AliveSet::new();
    let mut matching = Matching::empty();
    let mut steps = Vec::with_capacity(m.lifetime() as usize);
    for t in 1..=m.lifetime() {
        let arrivals: Vec<VertexId> = m.arrivals_at(t).collect();
        for &v in &arrivals {
            alive.insert(v);
        }
        let submodel = conditioned_submodel(m, &alive, t)?;
        let edges = m.induced_edges(&alive);
        let ctx = DecisionContext {
            submodel: &submodel,
            t,
            alive: &alive,
            edges: &edges,
        };
        let decision = policy.decide(&ctx)?;
        if let Some(bad) = decision.edges().iter().find(|e| edges.binary_search(e).is_err()) {
            return Err(Error::IllegalDecision {
                policy: policy.name(),
                t,
                reason: format!("edge {bad} is not in E(s)"),
            });
        }
        let snapshot = alive.to_vec();
        for v in decision.vertices() {
            alive.remove(v);
        }
        let deaths: Vec<VertexId> = alive.iter().filter(|&v| inst.death_time(v) == Some(t)).collect();
        for &v in &deaths {
            alive.remove(v);
        }
        matching.extend_unchecked(&decision);
        steps.push(TraceStep {
            t,
            arrivals,
            alive: snapshot,
            decision,
            deaths,
        });
    }
    Ok(PolicyTrace { steps, matching })
}

fn snapshot_graph(ctx: &DecisionContext<'_>) -> StaticGraph {
    StaticGraph::new(ctx.alive.iter(), ctx.edges.iter().copied()).expect("snapshot edges join alive vertices")
}

/// Never matches anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmptyPolicy;

impl Policy for EmptyPolicy {
    fn name(&self) -> String {
        "empty".into()
    }

    fn decide(&self, _ctx: &DecisionContext<'_>) -> Result<Matching> {
        Ok(Matching::empty())
    }
}

/// Maximum matching of every snapshot.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyPolicy;

impl Policy for GreedyPolicy {
    fn name(&self) -> String {
        "greedy".into()
    }

    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Matching> {
        Ok(max_matching(&snapshot_graph(ctx)))
    }
}

/// Waits until the last timestep of the current model, then max-matches.
#[derive(Debug, Clone, Copy, Default)]
pub struct PatientPolicy;

impl Policy for PatientPolicy {
    fn name(&self) -> String {
        "patient".into()
    }

    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Matching> {
        if ctx.t < ctx.submodel.lifetime() {
            Ok(Matching::empty())
        } else {
            Ok(max_matching(&snapshot_graph(ctx)))
        }
    }
}

/// How Split-Matching evaluates `opt(· | e)` and `opt(· | ∅)`.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleMode {
    /// Exact enumeration on the conditioned submodel.
    Exact(Limits),
    /// Monte-Carlo estimators; seeds are derived from the configured seed and
    /// the decision point, so the policy stays a function of its context.
    Fpras(EstimatorConfig),
}

/// Builds `M_t` one edge at a time: commit the edge with the largest
/// `opt(· | e)` on the residual snapshot until `opt(· | ∅)` strictly beats
/// every edge.
pub struct SplitMatching {
    mode: OracleMode,
    cache: Mutex<HashMap<(Vec<u64>, Timestep), Matching>>,
}

impl SplitMatching {
    pub fn new(mode: OracleMode) -> Self {
        SplitMatching {
            mode,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn exact(limits: Limits) -> Self {
        SplitMatching::new(OracleMode::Exact(limits))
    }

    pub fn fpras(cfg: EstimatorConfig) -> Self {
        SplitMatching::new(OracleMode::Fpras(cfg))
    }

    fn value_given_empty(&self, residual: &StochasticModel, t: Timestep) -> Result<f64> {
        match &self.mode {
            OracleMode::Exact(limits) => exact_opt_given_empty_at::<f64>(residual, t, limits),
            OracleMode::Fpras(cfg) => {
                let cfg = cfg.clone().with_seed(decision_seed(cfg.seed, residual, t, None));
                Ok(estimate_opt_given_empty_at(residual, t, &cfg)?.value)
            }
        }
    }

    fn value_given_edge(&self, residual: &StochasticModel, e: Edge, t: Timestep) -> Result<f64> {
        match &self.mode {
            OracleMode::Exact(limits) => exact_opt_given_edge_at::<f64>(residual, e, t, limits),
            OracleMode::Fpras(cfg) => {
                let cfg = cfg.clone().with_seed(decision_seed(cfg.seed, residual, t, Some(e)));
                Ok(estimate_opt_given_edge_at(residual, e, t, &cfg)?.value)
            }
        }
    }

    fn compute(&self, ctx: &DecisionContext<'_>) -> Result<Matching> {
        let mut residual = ctx.submodel.clone();
        let mut edges = ctx.edges.to_vec();
        let mut chosen = Matching::empty();
        while !edges.is_empty() {
            let wait = self.value_given_empty(&residual, ctx.t)?;
            let mut best: Option<(f64, Edge)> = None;
            for &e in &edges {
                let value = self.value_given_edge(&residual, e, ctx.t)?;
                if best.is_none_or(|(incumbent, _)| value.exceeds(&incumbent)) {
                    best = Some((value, e));
                }
            }
            let (best_value, best_edge) = best.expect("edge list is non-empty");
            if wait.exceeds(&best_value) {
                break;
            }
            chosen.push_unchecked(best_edge);
            residual = residual.without_vertices(&[best_edge.u(), best_edge.v()]);
            edges.retain(|e| !e.shares_vertex(&best_edge));
        }
        Ok(chosen)
    }
}

fn decision_seed(seed: u64, residual: &StochasticModel, t: Timestep, edge: Option<Edge>) -> u64 {
    let mut hasher = Fnv64::default();
    seed.hash(&mut hasher);
    t.hash(&mut hasher);
    residual.canonical_key().hash(&mut hasher);
    edge.hash(&mut hasher);
    hasher.finish()
}

/// FNV-1a; stable across processes, unlike the std default hasher.
struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for Fnv64 {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

impl Policy for SplitMatching {
    fn name(&self) -> String {
        match self.mode {
            OracleMode::Exact(_) => "split-matching-exact".into(),
            OracleMode::Fpras(_) => "split-matching-fpras".into(),
        }
    }

    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Matching> {
        let key = (ctx.submodel.canonical_key(), ctx.t);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let decision = self.compute(ctx)?;
        self.cache.lock().expect("cache lock").insert(key, decision.clone());
        Ok(decision)
    }
}

/// Plays the argmax matchings stored in an exact DP table.
pub struct ExactDpPolicy {
    table: DpTable<f64>,
}

impl ExactDpPolicy {
    pub fn new(m: &StochasticModel, limits: &Limits) -> Result<Self> {
        let (_, table) = chi_star::<f64>(m, limits)?;
        Ok(ExactDpPolicy { table })
    }

    pub fn table(&self) -> &DpTable<f64> {
        &self.table
    }
}

impl Policy for ExactDpPolicy {
    fn name(&self) -> String {
        "exact-dp".into()
    }

    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Matching> {
        self.table
            .get(ctx.alive, ctx.t)
            .map(|entry| entry.choice.clone())
            .ok_or_else(|| {
                Error::Precondition(format!(
                    "state ({}, t={}) is not in the DP table; was the policy built for another model?",
                    ctx.alive, ctx.t
                ))
            })
    }
}

pub const POLICY_NAMES: [&str; 6] = [
    "split-matching-exact",
    "split-matching-fpras",
    "greedy",
    "patient",
    "exact-dp",
    "empty",
];

/// Builds a policy by name. `exact-dp` solves the DP for `m` up front.
pub fn policy_by_name(
    name: &str,
    m: &StochasticModel,
    estimator: &EstimatorConfig,
    limits: &Limits,
) -> Result<Box<dyn Policy>> {
    Ok(match name {
        "split-matching-exact" => Box::new(SplitMatching::exact(*limits)),
        "split-matching-fpras" => Box::new(SplitMatching::fpras(estimator.clone())),
        "greedy" => Box::new(GreedyPolicy),
        "patient" => Box::new(PatientPolicy),
        "exact-dp" => Box::new(ExactDpPolicy::new(m, limits)?),
        "empty" => Box::new(EmptyPolicy),
        other => {
            return Err(Error::Config(format!(
                "unknown policy `{other}`; expected one of {}",
                POLICY_NAMES.join(", ")
            )))
        }
    })
}

/// `χ_A(G) = Σ_I Pr(I) · A(I)` by enumeration.
pub fn evaluate_policy_exact<P: Prob>(m: &StochasticModel, policy: &dyn Policy, limits: &Limits) -> Result<P> {
    if !policy.is_deterministic() {
        return Err(Error::Precondition(format!(
            "policy `{}` is randomized; average exact evaluations over policy seeds instead",
            policy.name()
        )));
    }
    let mut total = P::zero();
    for (inst, p) in enumerate_instantiations::<P>(m, limits)? {
        let size = run_adaptive(m, policy, &inst)?.matching().len();
        if size > 0 {
            total = total + p * P::from_count(size);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Mean final matching size over `samples` sampled instantiations.
pub fn evaluate_policy_mc(m: &StochasticModel, policy: &dyn Policy, samples: u64, seed: u64) -> Result<PolicyEstimate> {
    if samples == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let sampler = Sampler::new(m)?;
    let (sum, sum_sq) = (0..samples)
        .into_par_iter()
        .map(|i| {
            let size = run_adaptive(m, policy, &sampler.draw(seed, i))?.matching().len() as u64;
            Ok((size, size * size))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    let k = samples as f64;
    let mean = sum as f64 / k;
    let var = if samples > 1 {
        ((sum_sq as f64 - k * mean * mean) / (k - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(PolicyEstimate {
        mean,
        std_error: (var / k).sqrt(),
        samples,
    })
}
