//! Maximum-cardinality matching in stochastic arrival-departure graphs.
//!
//! Vertices arrive at known timesteps and die at random times drawn from
//! independent per-vertex distributions. The crate provides:
//!
//! * the model itself, conditioned submodels and the `S_n` family ([`model`], [`families`]);
//! * sampling and exhaustive enumeration of instantiations ([`sampling`]);
//! * general-graph maximum matching ([`matching`]);
//! * Monte-Carlo and exact expected hindsight optimum ([`estimators`]);
//! * adaptive policies including Split-Matching ([`policies`]);
//! * the exact optimal adaptive value by Bellman recursion ([`exact_dp`]).

pub mod error;
pub mod estimators;
pub mod exact_dp;
pub mod families;
pub mod limits;
pub mod matching;
pub mod model;
pub mod policies;
pub mod prob;
pub mod sampling;
pub mod scenario;

pub use error::{Error, Result};
pub use estimators::{
    estimate_opt, estimate_opt_given_edge, estimate_opt_given_empty, exact_opt, exact_opt_given_edge,
    exact_opt_given_empty, sample_value, sample_value_given_empty, Estimate, EstimatorConfig,
};
pub use exact_dp::{chi_star, opt_hindsight, rho_metric, stochasticity_ratio, transition_probability, DpTable};
pub use families::{make_six_vertex_model, make_sn_family, random_model, RandomModelConfig};
pub use limits::Limits;
pub use matching::{brute_force_max_matching, greedy_maximal_matching, max_matching, Matching, StaticGraph};
pub use model::{
    conditioned_submodel, edge_presence_probability, validate_model, AliveSet, Edge, StochasticModel, Timestep,
    ValidationReport, VertexId, VertexSpec,
};
pub use policies::{evaluate_policy_exact, evaluate_policy_mc, policy_by_name, run_adaptive, Policy, PolicyTrace};
pub use prob::{Prob, Rational};
pub use sampling::{
    enumerate_instantiations, instantiation_graph, realization_of, sample_instantiation, Instantiation, Realization,
};
pub use scenario::{parse_scenario, serialize_scenario};
