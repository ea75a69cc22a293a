//! JSON scenario files.
//!
//! ```json
//! {
//!   "vertices": [
//!     {"id": 0, "arrival": 1, "deadline": 2, "death_dist": [0.5, 0.5],
//!      "death_dist_rational": ["1/2", "1/2"]}
//!   ],
//!   "edges": [[0, 1]]
//! }
//! ```
//!
//! `death_dist_rational` is optional. Unknown fields are rejected. Canonical
//! output lists vertices and edges in ascending id order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_model, Edge, StochasticModel, Timestep, VertexSpec};
use crate::prob::parse_rational;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    vertices: Vec<VertexRecord>,
    edges: Vec<[u32; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexRecord {
    id: u32,
    arrival: Timestep,
    deadline: Timestep,
    death_dist: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    death_dist_rational: Option<Vec<String>>,
}

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<StochasticModel> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut vertices = Vec::with_capacity(file.vertices.len());
    for record in file.vertices {
        let mut spec = VertexSpec::new(record.id, record.arrival, record.deadline, record.death_dist);
        if let Some(entries) = record.death_dist_rational {
            let exact = entries
                .iter()
                .map(|s| {
                    parse_rational(s)
                        .ok_or_else(|| Error::InvalidModel(format!("vertex {}: malformed rational {s:?}", record.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            spec = spec.with_exact(exact);
        }
        vertices.push(spec);
    }
    let edges = file.edges.iter().map(|[u, v]| Edge::new(*u, *v));
    let model = StochasticModel::new(vertices, edges);
    validate_model(&model).into_result()?;
    Ok(model)
}

/// Canonical pretty-printed JSON.
pub fn serialize_scenario(m: &StochasticModel) -> String {
    let file = ScenarioFile {
        vertices: m
            .vertices()
            .iter()
            .map(|v| VertexRecord {
                id: v.id.0,
                arrival: v.arrival,
                deadline: v.deadline,
                death_dist: v.death_dist.clone(),
                death_dist_rational: v
                    .death_dist_exact
                    .as_ref()
                    .map(|exact| exact.iter().map(|q| q.to_string()).collect()),
            })
            .collect(),
        edges: m.edges().iter().map(|e| [e.u().0, e.v().0]).collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("scenario serialization is infallible");
    text.push('\n');
    text
}
