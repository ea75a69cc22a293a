//! Exact optimal adaptive value by memoized Bellman recursion over
//! `(alive set, timestep)` states, plus the metrics built on top of it.
//!
//! A state at timestep `t` holds the snapshot after the arrivals of `t`.
//! Its value is the best expected number of edges still to be matched:
//!
//! ```text
//! V(s, t) = max_{M ⊆ E(s)} |M| + Σ_{s'} Pr_M(s → s') · V(s', t + 1),   V(·, t > T) = 0
//! ```
//!
//! Successors are the survivors of `s \ V(M)` plus the arrivals of `t + 1`;
//! each unmatched vertex dies at `t` independently with its conditional
//! hazard `P_v(t) / Pr[d_v >= t]`.

use std::collections::HashMap;

use serde_json::json;

use crate::error::{Error, Result};
use crate::estimators::exact_opt;
use crate::limits::Limits;
use crate::matching::{max_matching, Matching, StaticGraph};
use crate::model::{AliveSet, Edge, StochasticModel, Timestep, VertexId};
use crate::policies::{run_adaptive, Policy};
use crate::prob::Prob;
use crate::sampling::enumerate_instantiations;

pub const MAX_DP_VERTICES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DpEntry<P> {
    pub value: P,
    /// Lexicographically first maximizing matching.
    pub choice: Matching,
}

/// Memoized values and optimal decisions for every reachable state.
#[derive(Debug, Clone)]
pub struct DpTable<P> {
    ids: Vec<VertexId>,
    entries: HashMap<(u64, Timestep), DpEntry<P>>,
    value: P,
}

impl<P: Prob> DpTable<P> {
    /// `χ*` of the whole model, i.e. the value of the empty state at time 0.
    pub fn value(&self) -> &P {
        &self.value
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, alive: &AliveSet, t: Timestep) -> Option<&DpEntry<P>> {
        let mask = self.mask_of(alive)?;
        self.entries.get(&(mask, t))
    }

    fn mask_of(&self, alive: &AliveSet) -> Option<u64> {
        let mut mask = 0u64;
        for v in alive {
            let i = self.ids.binary_search(&v).ok()?;
            mask |= 1 << i;
        }
        Some(mask)
    }

    fn alive_of(&self, mask: u64) -> AliveSet {
        self.ids
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &v)| v)
            .collect()
    }

    /// States in `(t, alive)` order.
    pub fn states(&self) -> Vec<(AliveSet, Timestep, &DpEntry<P>)> {
        let mut rows: Vec<_> = self
            .entries
            .iter()
            .map(|(&(mask, t), entry)| (self.alive_of(mask), t, entry))
            .collect();
        rows.sort_by_key(|a| (a.1, a.0.to_vec()));
        rows
    }

    pub fn to_json(&self) -> serde_json::Value {
        let states: Vec<_> = self
            .states()
            .into_iter()
            .map(|(alive, t, entry)| {
                json!({
                    "t": t,
                    "alive": alive.to_vec(),
                    "value": entry.value.to_f64(),
                    "exact": entry.value.to_string(),
                    "choice": entry.choice,
                })
            })
            .collect();
        json!({
            "value": self.value.to_f64(),
            "exact": self.value.to_string(),
            "states": states,
        })
    }
}

struct Solver<'m, P> {
    lifetime: Timestep,
    edges: Vec<(usize, usize)>,
    edge_ids: Vec<Edge>,
    /// `arrivals[t]`: mask of vertices arriving at `t`, for `t` in `0..=T+1`.
    arrivals: Vec<u64>,
    /// `hazard[v][t - a_v]`.
    hazard: Vec<Vec<P>>,
    arrival: Vec<Timestep>,
    memo: HashMap<(u64, Timestep), DpEntry<P>>,
    continuation: HashMap<(u64, Timestep), P>,
    limits: &'m Limits,
}

impl<'m, P: Prob> Solver<'m, P> {
    fn new(m: &StochasticModel, limits: &'m Limits) -> Result<Self> {
        if m.len() > MAX_DP_VERTICES {
            return Err(Error::CapExceeded {
                what: "vertex count for exact DP",
                count: m.len() as u128,
                cap: MAX_DP_VERTICES as u128,
                hint: "",
            });
        }
        let lifetime = m.lifetime();
        let mut arrivals = vec![0u64; lifetime as usize + 2];
        for (i, v) in m.vertices().iter().enumerate() {
            arrivals[v.arrival as usize] |= 1 << i;
        }
        let hazard = m
            .vertices()
            .iter()
            .map(|v| (v.arrival..=v.deadline).map(|t| P::hazard(v, t)).collect())
            .collect();
        let edges = m
            .edges()
            .iter()
            .filter_map(|e| Some((m.index_of(e.u())?, m.index_of(e.v())?)))
            .collect();
        Ok(Solver {
            lifetime,
            edges,
            edge_ids: m.edges().to_vec(),
            arrivals,
            hazard,
            arrival: m.vertices().iter().map(|v| v.arrival).collect(),
            memo: HashMap::new(),
            continuation: HashMap::new(),
            limits,
        })
    }

    fn hazard(&self, v: usize, t: Timestep) -> &P {
        &self.hazard[v][(t - self.arrival[v]) as usize]
    }

    /// Every matching of the induced edges, in lexicographic order of
    /// ascending edge-index lists (the empty matching first).
    fn matchings(&self, alive: u64) -> Result<Vec<Vec<usize>>> {
        let local: Vec<usize> = (0..self.edges.len())
            .filter(|&k| {
                let (i, j) = self.edges[k];
                alive >> i & 1 == 1 && alive >> j & 1 == 1
            })
            .collect();
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.collect_matchings(&local, 0, 0, &mut stack, &mut out)?;
        Ok(out)
    }

    fn collect_matchings(
        &self,
        local: &[usize],
        start: usize,
        covered: u64,
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) -> Result<()> {
        out.push(stack.clone());
        if out.len() as u64 > self.limits.max_matchings_per_state {
            return Err(Error::CapExceeded {
                what: "matchings in one DP state",
                count: out.len() as u128,
                cap: self.limits.max_matchings_per_state as u128,
                hint: "",
            });
        }
        for pos in start..local.len() {
            let (i, j) = self.edges[local[pos]];
            let bits = (1u64 << i) | (1u64 << j);
            if covered & bits == 0 {
                stack.push(local[pos]);
                self.collect_matchings(local, pos + 1, covered | bits, stack, out)?;
                stack.pop();
            }
        }
        Ok(())
    }

    fn covered(&self, matching: &[usize]) -> u64 {
        matching
            .iter()
            .map(|&k| (1u64 << self.edges[k].0) | (1u64 << self.edges[k].1))
            .fold(0, |a, b| a | b)
    }

    fn value(&mut self, alive: u64, t: Timestep) -> Result<P> {
        if t > self.lifetime {
            return Ok(P::zero());
        }
        if let Some(entry) = self.memo.get(&(alive, t)) {
            return Ok(entry.value.clone());
        }
        if self.memo.len() >= self.limits.max_states {
            return Err(Error::CapExceeded {
                what: "DP state count",
                count: self.memo.len() as u128 + 1,
                cap: self.limits.max_states as u128,
                hint: "; reduce the model or raise the state cap",
            });
        }
        let mut best: Option<(P, Vec<usize>)> = None;
        for matching in self.matchings(alive)? {
            let rest = alive & !self.covered(&matching);
            let value = P::from_count(matching.len()) + self.expected_next(rest, t)?;
            let better = match &best {
                None => true,
                Some((incumbent, _)) => value.exceeds(incumbent),
            };
            if better {
                best = Some((value, matching));
            }
        }
        let (value, matching) = best.expect("the empty matching is always enumerated");
        let choice = Matching::new(matching.iter().map(|&k| self.edge_ids[k]))?;
        self.memo.insert(
            (alive, t),
            DpEntry {
                value: value.clone(),
                choice,
            },
        );
        Ok(value)
    }

    /// Expected value at `t + 1` when `rest` is left unmatched at `t`.
    fn expected_next(&mut self, rest: u64, t: Timestep) -> Result<P> {
        if t >= self.lifetime {
            return Ok(P::zero());
        }
        if let Some(v) = self.continuation.get(&(rest, t)) {
            return Ok(v.clone());
        }
        let mut sure = self.arrivals[t as usize + 1];
        let mut at_risk = Vec::new();
        for v in 0..self.arrival.len() {
            if rest >> v & 1 == 0 {
                continue;
            }
            let h = self.hazard(v, t);
            if h.is_zero() {
                sure |= 1 << v;
            } else if !h.is_one() {
                at_risk.push(v);
            }
        }
        let mut total = P::zero();
        for subset in 0u64..(1u64 << at_risk.len()) {
            let mut prob = P::one();
            let mut next = sure;
            for (k, &v) in at_risk.iter().enumerate() {
                let h = self.hazard(v, t).clone();
                if subset >> k & 1 == 1 {
                    next |= 1 << v;
                    prob = prob * (P::one() - h);
                } else {
                    prob = prob * h;
                }
            }
            if prob.is_zero() {
                continue;
            }
            let child = self.value(next, t + 1)?;
            total = total + prob * child;
        }
        self.continuation.insert((rest, t), total.clone());
        Ok(total)
    }
}

/// `χ*(G)` and the table defining a deterministic optimal policy.
pub fn chi_star<P: Prob>(m: &StochasticModel, limits: &Limits) -> Result<(P, DpTable<P>)> {
    let mut solver = Solver::<P>::new(m, limits)?;
    let value = if m.lifetime() >= 1 {
        solver.value(solver.arrivals[1], 1)?
    } else {
        P::zero()
    };
    let mut entries = solver.memo;
    entries.insert(
        (0, 0),
        DpEntry {
            value: value.clone(),
            choice: Matching::empty(),
        },
    );
    let table = DpTable {
        ids: m.vertices().iter().map(|v| v.id).collect(),
        entries,
        value: value.clone(),
    };
    Ok((value, table))
}

/// Recomputes every stored state from its children's stored values and
/// returns the largest disagreement with the stored value.
pub fn bellman_residual<P: Prob>(m: &StochasticModel, table: &DpTable<P>, limits: &Limits) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut solver = Solver::<P>::new(m, limits)?;
    // Seed the solver with the table so children resolve to stored values.
    solver.memo = table.entries.clone();
    for (&(mask, t), entry) in &table.entries {
        if t == 0 {
            continue;
        }
        let mut best: Option<P> = None;
        for matching in solver.matchings(mask)? {
            let rest = mask & !solver.covered(&matching);
            let value = P::from_count(matching.len()) + solver.expected_next(rest, t)?;
            if best.as_ref().is_none_or(|b| value > *b) {
                best = Some(value);
            }
        }
        let best = best.expect("the empty matching is always enumerated");
        worst = worst.max((best.to_f64() - entry.value.to_f64()).abs());
    }
    Ok(worst)
}

/// Probability that snapshot `next` appears at `t + 1` after matching `matching` in `alive` at `t`.
pub fn transition_probability<P: Prob>(
    m: &StochasticModel,
    alive: &AliveSet,
    matching: &Matching,
    t: Timestep,
    next: &AliveSet,
) -> Result<P> {
    for e in matching.edges() {
        if !m.contains_edge(*e) || !alive.contains(e.u()) || !alive.contains(e.v()) {
            return Err(Error::Precondition(format!("matched edge {e} is not in E(s)")));
        }
    }
    let arrivals: AliveSet = m.arrivals_at(t + 1).collect();
    for v in &arrivals {
        if !next.contains(v) {
            return Err(Error::Precondition(format!("successor is missing arrival {v}")));
        }
    }
    for v in next {
        if arrivals.contains(v) {
            continue;
        }
        if !alive.contains(v) || matching.covers(v) {
            return Err(Error::Precondition(format!(
                "successor contains vertex {v}, which is matched or not alive at t={t}"
            )));
        }
        let spec = m.vertex(v).ok_or(Error::UnknownVertex(v))?;
        if spec.deadline <= t {
            return Err(Error::Precondition(format!(
                "successor contains vertex {v}, whose deadline {} has passed",
                spec.deadline
            )));
        }
    }
    let mut prob = P::one();
    for v in alive {
        if matching.covers(v) {
            continue;
        }
        let spec = m.vertex(v).ok_or(Error::UnknownVertex(v))?;
        let h = P::hazard(spec, t);
        prob = prob * if next.contains(v) { P::one() - h } else { h };
    }
    Ok(prob)
}

/// `χ*(G) / opt(G)`.
pub fn stochasticity_ratio<P: Prob>(m: &StochasticModel, limits: &Limits) -> Result<P> {
    let opt = exact_opt::<P>(m, limits)?;
    if opt.is_zero() {
        return Err(Error::Undefined("stochasticity ratio with opt(G) = 0".into()));
    }
    let (chi, _) = chi_star::<P>(m, limits)?;
    Ok(chi / opt)
}

/// How instantiations with `opt(I) = 0` enter the ratio objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroOptConvention {
    /// Any algorithm is optimal there: ratio 1.
    #[default]
    CountAsOne,
    /// Exclude them and renormalize over the remaining mass.
    Skip,
}

/// `ρ_A(G) = Σ_I Pr(I) · A(I) / opt(I)`.
pub fn rho_metric<P: Prob>(
    m: &StochasticModel,
    policy: &dyn Policy,
    convention: ZeroOptConvention,
    limits: &Limits,
) -> Result<P> {
    if !policy.is_deterministic() {
        return Err(Error::Precondition(format!(
            "policy `{}` is randomized; exact evaluation needs a deterministic policy",
            policy.name()
        )));
    }
    let mut total = P::zero();
    let mut mass = P::zero();
    for (inst, p) in enumerate_instantiations::<P>(m, limits)? {
        let opt = crate::estimators::sample_value(m, &inst);
        if opt == 0 {
            if convention == ZeroOptConvention::CountAsOne {
                total = total + p.clone();
                mass = mass + p;
            }
            continue;
        }
        let achieved = run_adaptive(m, policy, &inst)?.matching().len();
        total = total + p.clone() * P::from_count(achieved) / P::from_count(opt);
        mass = mass + p;
    }
    if mass.is_zero() {
        return Err(Error::Undefined("every instantiation has opt(I) = 0".into()));
    }
    Ok(total / mass)
}

/// `opt(I)`: maximum matching size of an instantiation graph.
pub fn opt_hindsight(g: &StaticGraph) -> usize {
    max_matching(g).len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::make_sn_family;
    use crate::model::VertexSpec;
    use crate::prob::Rational;

    fn ids(v: &[u32]) -> AliveSet {
        v.iter().map(|&i| VertexId(i)).collect()
    }

    #[test]
    fn chi_star_sn() {
        let lim = Limits::default();
        let (v2, _) = chi_star::<Rational>(&make_sn_family(2).unwrap(), &lim).unwrap();
        assert_eq!(v2, Rational::from_integer(1.into()));
        let (v6, _) = chi_star::<Rational>(&make_sn_family(6).unwrap(), &lim).unwrap();
        assert_eq!(v6, Rational::from_integer(3.into()));
    }

    #[test]
    fn single_timestep_chi_star_is_max_matching() {
        let vertices = (0..5).map(|i| VertexSpec::certain(i, 1, 1)).collect();
        let edges = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)].map(|(u, v)| Edge::new(u, v));
        let m = StochasticModel::validated(vertices, edges).unwrap();
        let (v, _) = chi_star::<f64>(&m, &Limits::default()).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn empty_model() {
        let (v, table) = chi_star::<f64>(&StochasticModel::empty(), &Limits::default()).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn forced_deaths_give_a_unique_successor() {
        let m = make_sn_family(2).unwrap();
        // At t = 2 every vertex has reached its deadline, but T = 2 so use a
        // three-step model instead.
        let m3 = StochasticModel::validated(
            vec![
                VertexSpec::certain(0, 1, 1),
                VertexSpec::certain(1, 1, 1),
                VertexSpec::certain(2, 2, 2),
            ],
            [Edge::new(0, 1)],
        )
        .unwrap();
        let p: Rational = transition_probability(&m3, &ids(&[0, 1]), &Matching::empty(), 1, &ids(&[2])).unwrap();
        assert_eq!(p, Rational::from_integer(1.into()));
        assert!(transition_probability::<f64>(&m3, &ids(&[0, 1]), &Matching::empty(), 1, &ids(&[0, 2])).is_err());

        let matched = Matching::new([Edge::new(0, 1)]).unwrap();
        assert!(transition_probability::<f64>(&m, &ids(&[0, 1]), &matched, 1, &ids(&[0, 2, 3])).is_err());
    }

    #[test]
    fn sn_transition_is_uniform_over_survivor_sets() {
        let n = 3;
        let m = make_sn_family(n).unwrap();
        let alive = ids(&[0, 1, 2]);
        let arrivals = [3u32, 4, 5];
        let mut total = Rational::from_integer(0.into());
        for subset in 0..(1u32 << n) {
            let mut next: Vec<u32> = arrivals.to_vec();
            next.extend((0..n as u32).filter(|i| subset >> i & 1 == 1));
            let p: Rational = transition_probability(&m, &alive, &Matching::empty(), 1, &ids(&next)).unwrap();
            assert_eq!(p, Rational::new(1.into(), 8.into()));
            total += p;
        }
        assert_eq!(total, Rational::from_integer(1.into()));
    }

    #[test]
    fn table_is_bellman_consistent_and_deterministic() {
        let lim = Limits::default();
        let m = make_sn_family(3).unwrap();
        let (_, table) = chi_star::<Rational>(&m, &lim).unwrap();
        assert_eq!(bellman_residual(&m, &table, &lim).unwrap(), 0.0);
        let (_, again) = chi_star::<Rational>(&m, &lim).unwrap();
        assert_eq!(table.to_json(), again.to_json());
    }

    #[test]
    fn ratio_examples() {
        let lim = Limits::default();
        let det = StochasticModel::validated(
            vec![
                VertexSpec::certain(0, 1, 2),
                VertexSpec::certain(1, 2, 2),
                VertexSpec::certain(2, 2, 3),
            ],
            [Edge::new(0, 1), Edge::new(1, 2)],
        )
        .unwrap();
        assert_eq!(stochasticity_ratio::<f64>(&det, &lim).unwrap(), 1.0);
        let r4: Rational = stochasticity_ratio(&make_sn_family(4).unwrap(), &lim).unwrap();
        assert_eq!(r4, Rational::new(8.into(), 11.into()));
        let no_edges = StochasticModel::validated(vec![VertexSpec::certain(0, 1, 1)], []).unwrap();
        assert!(matches!(
            stochasticity_ratio::<f64>(&no_edges, &lim),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn state_cap_reports_count() {
        let lim = Limits {
            max_states: 2,
            ..Limits::default()
        };
        let err = chi_star::<f64>(&make_sn_family(3).unwrap(), &lim).unwrap_err();
        assert!(err.is_resource_cap());
        assert!(err.to_string().contains("DP state count"), "{err}");
    }

    #[test]
    fn six_vertex_example() {
        use crate::families::make_six_vertex_model;
        use crate::sampling::{instantiation_graph, Instantiation};

        let lim = Limits::default();
        let m = make_six_vertex_model(0.01).unwrap();
        // opt(I) is 3 iff every u reaches day 3.
        for mask in 0..8u32 {
            let deaths = (0..3).map(|i| (VertexId(i), if mask >> i & 1 == 1 { 3 } else { 2 }));
            let inst = Instantiation::new(&m, deaths.chain((3..6).map(|i| (VertexId(i), 3)))).unwrap();
            let expected = if mask == 7 { 3 } else { 2 };
            assert_eq!(opt_hindsight(&instantiation_graph(&m, &inst)), expected, "mask {mask}");
        }
        // Small eps: wait on day 1; match u2u3 on day 2 once u1 is gone.
        let (_, table) = chi_star::<f64>(&m, &lim).unwrap();
        assert!(table.get(&ids(&[0, 1, 2]), 1).unwrap().choice.is_empty());
        assert_eq!(table.get(&ids(&[1, 2]), 2).unwrap().choice.edges(), &[Edge::new(1, 2)]);
    }
}
