//! JSON documents for scenarios and deployments.
//!
//! Both documents carry `format_version` and reject unknown fields. Scenario
//! services are stored as event lists; matrices are always recompiled on load.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Deployment, Direction, Invocation, Link, MicroserviceType, ModelError, NetworkTopology, Node,
    NodeId, NodeKind, PayloadTable, Scenario, ServiceDraft, TypeId,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub format_version: u32,
    pub packet_size_kb: f64,
    pub rng_seed: u64,
    pub nodes: Vec<NodeDoc>,
    pub links: Vec<LinkDoc>,
    pub microservices: Vec<MicroserviceDoc>,
    pub payloads: Vec<PayloadDoc>,
    pub services: Vec<ServiceDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub cpu: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub mem_mb: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arrival_rates: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub a: NodeId,
    pub b: NodeId,
    pub bandwidth_mbps: f64,
    pub delay_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroserviceDoc {
    pub id: TypeId,
    pub cpu: f64,
    pub mem_mb: f64,
    pub instances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadDoc {
    pub caller: TypeId,
    pub callee: TypeId,
    pub request_kb: f64,
    pub response_kb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    pub events: Vec<EventDoc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDoc {
    pub kind: Direction,
    pub from: TypeId,
    pub to: TypeId,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl From<&Scenario> for ScenarioDoc {
    fn from(s: &Scenario) -> Self {
        let topo = s.topology();
        ScenarioDoc {
            format_version: FORMAT_VERSION,
            packet_size_kb: s.packet_size_kb(),
            rng_seed: s.rng_seed(),
            nodes: topo
                .nodes()
                .iter()
                .map(|n| NodeDoc {
                    id: n.id,
                    kind: n.kind,
                    cpu: n.cpu_capacity,
                    mem_mb: n.mem_capacity,
                    arrival_rates: n.arrival_rates.clone(),
                })
                .collect(),
            links: topo
                .links()
                .iter()
                .map(|l| LinkDoc { a: l.a, b: l.b, bandwidth_mbps: l.bandwidth, delay_s: l.propagation_delay })
                .collect(),
            microservices: s.catalog()[1..]
                .iter()
                .map(|t| MicroserviceDoc {
                    id: t.id,
                    cpu: t.cpu_demand,
                    mem_mb: t.mem_demand,
                    instances: t.instance_count,
                })
                .collect(),
            payloads: s
                .payloads()
                .iter()
                .map(|((caller, callee), p)| PayloadDoc {
                    caller,
                    callee,
                    request_kb: p.request_kb,
                    response_kb: p.response_kb,
                })
                .collect(),
            services: s
                .services()
                .iter()
                .map(|svc| ServiceDoc {
                    weight: Some(svc.weight()),
                    events: svc
                        .events()
                        .iter()
                        .map(|e| EventDoc { kind: e.direction, from: e.from, to: e.to })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl ScenarioDoc {
    pub fn into_scenario(self) -> Result<Scenario, FormatError> {
        if self.format_version != FORMAT_VERSION {
            return Err(FormatError::Version(self.format_version));
        }
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| Node {
                id: n.id,
                kind: n.kind,
                cpu_capacity: n.cpu,
                mem_capacity: n.mem_mb,
                arrival_rates: n.arrival_rates,
            })
            .collect();
        let links = self
            .links
            .into_iter()
            .map(|l| Link::new(l.a, l.b, l.bandwidth_mbps, l.delay_s))
            .collect();
        let topology = NetworkTopology::new(nodes, links)?;
        let types = self
            .microservices
            .into_iter()
            .map(|m| MicroserviceType {
                id: m.id,
                cpu_demand: m.cpu,
                mem_demand: m.mem_mb,
                instance_count: m.instances,
            })
            .collect();
        let mut payloads = PayloadTable::new();
        for p in self.payloads {
            payloads.insert(p.caller, p.callee, p.request_kb, p.response_kb);
        }
        let services = self
            .services
            .into_iter()
            .map(|s| ServiceDraft {
                weight: s.weight,
                events: s
                    .events
                    .into_iter()
                    .map(|e| Invocation { from: e.from, to: e.to, direction: e.kind })
                    .collect(),
            })
            .collect();
        Ok(Scenario::assemble(topology, types, payloads, services, self.packet_size_kb, self.rng_seed)?)
    }
}

pub fn scenario_to_json(s: &Scenario) -> String {
    let mut out = serde_json::to_string_pretty(&ScenarioDoc::from(s)).expect("scenario serializes");
    out.push('\n');
    out
}

pub fn scenario_from_json(text: &str) -> Result<Scenario, FormatError> {
    serde_json::from_str::<ScenarioDoc>(text)?.into_scenario()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentDoc {
    pub format_version: u32,
    /// Host nodes per microservice type, excluding the pinned head.
    pub placements: Vec<PlacementDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementDoc {
    #[serde(rename = "type")]
    pub microservice: TypeId,
    pub nodes: Vec<NodeId>,
}

pub fn deployment_to_json(d: &Deployment) -> String {
    let doc = DeploymentDoc {
        format_version: FORMAT_VERSION,
        placements: (1..d.type_count())
            .map(|t| PlacementDoc { microservice: t, nodes: d.hosts(t).to_vec() })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("deployment serializes");
    out.push('\n');
    out
}

/// Parses a deployment document for `scenario`, pinning the head.
pub fn deployment_from_json(text: &str, scenario: &Scenario) -> Result<Deployment, FormatError> {
    let doc: DeploymentDoc = serde_json::from_str(text)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(FormatError::Version(doc.format_version));
    }
    let types = scenario.type_count();
    let mut placed = vec![None; types.saturating_sub(1)];
    for p in doc.placements {
        if p.microservice == 0 || p.microservice >= types {
            return Err(ModelError::UnknownType(p.microservice).into());
        }
        if placed[p.microservice - 1].replace(p.nodes).is_some() {
            return Err(ModelError::DimensionMismatch(format!("type {} listed twice", p.microservice)).into());
        }
    }
    let placed = placed
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| ModelError::DimensionMismatch(format!("type {} missing", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Deployment::pinned(scenario, placed))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
      "format_version": 1,
      "packet_size_kb": 1.5,
      "rng_seed": 4,
      "nodes": [
        {"id": 0, "kind": "access", "arrival_rates": [30.0]},
        {"id": 1, "kind": "routing"},
        {"id": 2, "kind": "compute", "cpu": 8.0, "mem_mb": 8000.0}
      ],
      "links": [
        {"a": 0, "b": 1, "bandwidth_mbps": 100.0, "delay_s": 1e-5},
        {"a": 1, "b": 2, "bandwidth_mbps": 100.0, "delay_s": 1e-5}
      ],
      "microservices": [{"id": 1, "cpu": 0.2, "mem_mb": 200.0, "instances": 1}],
      "payloads": [{"caller": 0, "callee": 1, "request_kb": 20.0, "response_kb": 50.0}],
      "services": [{"events": [
        {"kind": "request", "from": 0, "to": 1},
        {"kind": "response", "from": 1, "to": 0}
      ]}]
    }"#;

    #[test]
    fn loads_sample_and_round_trips() {
        let s = scenario_from_json(SAMPLE).unwrap();
        assert_eq!(s.services()[0].weight(), 1.0);
        assert_eq!(s.compute_nodes(), &[2]);
        let text = scenario_to_json(&s);
        assert_eq!(scenario_from_json(&text).unwrap(), s);
    }

    #[test]
    fn rejects_unknown_fields_and_versions() {
        let extra = SAMPLE.replace("\"rng_seed\": 4,", "\"rng_seed\": 4, \"colour\": 1,");
        assert!(matches!(scenario_from_json(&extra), Err(FormatError::Json(_))));
        let nested = SAMPLE.replace("{\"id\": 1, \"kind\": \"routing\"}", "{\"id\": 1, \"kind\": \"routing\", \"x\": 2}");
        assert!(matches!(scenario_from_json(&nested), Err(FormatError::Json(_))));
        let v2 = SAMPLE.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(scenario_from_json(&v2), Err(FormatError::Version(2))));
    }

    #[test]
    fn deployment_documents() {
        let s = scenario_from_json(SAMPLE).unwrap();
        let d = Deployment::pinned(&s, vec![vec![2]]);
        let text = deployment_to_json(&d);
        assert_eq!(deployment_from_json(&text, &s).unwrap(), d);
        let missing = r#"{"format_version": 1, "placements": []}"#;
        assert!(deployment_from_json(missing, &s).is_err());
        let head = r#"{"format_version": 1, "placements": [{"type": 0, "nodes": [0]}]}"#;
        assert!(deployment_from_json(head, &s).is_err());
    }
}
