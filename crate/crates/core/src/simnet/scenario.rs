//! Scenario files: versioned JSON describing genesis, topology and a
//! timed workload script. Validation reports the offending field path so
//! schema problems surface before any simulation work starts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::provider_by_name;
use crate::state::FeeParams;
use crate::trust_graph::EntityType;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

impl ScenarioError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Must be 1.
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Master seed; every random stream in the run derives from it.
    pub seed: u64,
    pub duration_ms: u64,
    pub genesis: GenesisConfig,
    pub topology: Topology,
    #[serde(default)]
    pub workload: Vec<TimedAction>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisConfig {
    /// Crypto provider name: "ed-curve" or "mock".
    pub provider: String,
    #[serde(default)]
    pub fee_params: FeeParamsConfig,
    #[serde(default = "default_round_ms")]
    pub round_ms: u64,
    #[serde(default = "default_global_cap")]
    pub global_cap: u8,
    #[serde(default = "default_auth_ttl_ms")]
    pub auth_ttl_ms: u64,
    /// Light nodes refresh automatically at this period; 0 means manual
    /// refresh via workload actions only.
    #[serde(default)]
    pub refresh_interval_ms: u64,
    #[serde(default)]
    pub initial_balances: BTreeMap<String, u64>,
    /// Per-verifier trust anchor sets, by node name.
    #[serde(default)]
    pub anchors: BTreeMap<String, Vec<String>>,
    /// Consensus rotation order; every entry must name a full node.
    pub validators: Vec<String>,
}

fn default_round_ms() -> u64 {
    1000
}

fn default_global_cap() -> u8 {
    6
}

fn default_auth_ttl_ms() -> u64 {
    5000
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FeeParamsConfig {
    #[serde(default = "default_tx_fee")]
    pub tx_fee: u64,
    #[serde(default = "default_entity_reserve")]
    pub entity_reserve: u64,
    #[serde(default = "default_confirmation_reserve")]
    pub confirmation_reserve: u64,
    #[serde(default = "default_block_reward")]
    pub block_reward: u64,
}

fn default_tx_fee() -> u64 {
    1
}

fn default_entity_reserve() -> u64 {
    5
}

fn default_confirmation_reserve() -> u64 {
    5
}

fn default_block_reward() -> u64 {
    10
}

impl Default for FeeParamsConfig {
    fn default() -> Self {
        FeeParamsConfig {
            tx_fee: default_tx_fee(),
            entity_reserve: default_entity_reserve(),
            confirmation_reserve: default_confirmation_reserve(),
            block_reward: default_block_reward(),
        }
    }
}

impl From<FeeParamsConfig> for FeeParams {
    fn from(c: FeeParamsConfig) -> Self {
        FeeParams {
            tx_fee: c.tx_fee,
            entity_reserve: c.entity_reserve,
            confirmation_reserve: c.confirmation_reserve,
            block_reward: c.block_reward,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub nodes: Vec<NodeDecl>,
    #[serde(default)]
    pub links: Vec<LinkDecl>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleDecl {
    Full,
    Light,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDecl {
    pub name: String,
    pub role: RoleDecl,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDecl {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub latency: LatencySpec,
    /// Per-message loss probability in [0, 1], each direction.
    #[serde(default)]
    pub loss: f64,
}

/// Exactly one of `fixed` or `uniform` (inclusive bounds), in sim-ms.
/// Defaults to fixed 0.
#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LatencySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<[u64; 2]>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimedAction {
    pub at: u64,
    pub action: Action,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// Submits an entity registration from the node's account;
    /// `entity_type` defaults by role, `identity` to the node name.
    RegisterEntity {
        node: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        identity: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        entity_type: Option<String>,
    },
    Confirm {
        from: String,
        to: String,
        max_path_len: u8,
    },
    RevokeEntity {
        node: String,
    },
    RevokeConfirmation {
        from: String,
        to: String,
    },
    Transfer {
        from: String,
        to: String,
        amount: u64,
    },
    AuthAttempt {
        verifier: String,
        target: String,
    },
    LightRefresh {
        node: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        peer: Option<String>,
    },
    Crash {
        node: String,
    },
    Recover {
        node: String,
    },
    PartitionStart {
        groups: Vec<Vec<String>>,
    },
    PartitionStop,
    DropLink {
        a: String,
        b: String,
    },
}

/// Faults injectable into a scenario under construction.
#[derive(Debug, Clone)]
pub enum Fault {
    Crash { node: String },
    Recover { node: String },
    Partition { groups: Vec<Vec<String>> },
    DropLink { a: String, b: String },
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(json)
            .map_err(|e| ScenarioError::new("$", e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    /// Appends a fault to the workload script.
    pub fn inject_fault(&mut self, fault: Fault, at: u64) -> Result<(), ScenarioError> {
        if at > self.duration_ms {
            return Err(ScenarioError::new(
                "workload",
                format!("fault time {at} exceeds duration {}", self.duration_ms),
            ));
        }
        let action = match fault {
            Fault::Crash { node } => Action::Crash { node },
            Fault::Recover { node } => Action::Recover { node },
            Fault::Partition { groups } => Action::PartitionStart { groups },
            Fault::DropLink { a, b } => Action::DropLink { a, b },
        };
        let timed = TimedAction { at, action };
        let index = self.workload.len();
        self.workload.push(timed);
        if let Err(e) = self.validate_action(index) {
            self.workload.pop();
            return Err(e);
        }
        Ok(())
    }

    pub fn node_names(&self) -> BTreeSet<&str> {
        self.topology.nodes.iter().map(|n| n.name.as_str()).collect()
    }

    fn role_of(&self, name: &str) -> Option<RoleDecl> {
        self.topology
            .nodes
            .iter()
            .find(|n| n.name == name)
            .map(|n| n.role)
    }

    fn check_node(&self, path: &str, name: &str) -> Result<(), ScenarioError> {
        if self.role_of(name).is_none() {
            return Err(ScenarioError::new(
                path,
                format!("unknown node `{name}`"),
            ));
        }
        Ok(())
    }

    fn validate_action(&self, index: usize) -> Result<(), ScenarioError> {
        let timed = &self.workload[index];
        let path = format!("workload[{index}]");
        if timed.at > self.duration_ms {
            return Err(ScenarioError::new(
                format!("{path}.at"),
                format!("time {} exceeds duration {}", timed.at, self.duration_ms),
            ));
        }
        match &timed.action {
            Action::RegisterEntity {
                node, entity_type, ..
            } => {
                self.check_node(&format!("{path}.register_entity.node"), node)?;
                if let Some(t) = entity_type {
                    if EntityType::from_str_name(t).is_none() {
                        return Err(ScenarioError::new(
                            format!("{path}.register_entity.entity_type"),
                            format!("unknown entity type `{t}` (drone|ground_station|other)"),
                        ));
                    }
                }
            }
            Action::Confirm {
                from,
                to,
                max_path_len,
            } => {
                self.check_node(&format!("{path}.confirm.from"), from)?;
                self.check_node(&format!("{path}.confirm.to"), to)?;
                if *max_path_len == 0 {
                    return Err(ScenarioError::new(
                        format!("{path}.confirm.max_path_len"),
                        "must be at least 1",
                    ));
                }
            }
            Action::RevokeEntity { node } => {
                self.check_node(&format!("{path}.revoke_entity.node"), node)?
            }
            Action::RevokeConfirmation { from, to } => {
                self.check_node(&format!("{path}.revoke_confirmation.from"), from)?;
                self.check_node(&format!("{path}.revoke_confirmation.to"), to)?;
            }
            Action::Transfer { from, to, .. } => {
                self.check_node(&format!("{path}.transfer.from"), from)?;
                self.check_node(&format!("{path}.transfer.to"), to)?;
            }
            Action::AuthAttempt { verifier, target } => {
                self.check_node(&format!("{path}.auth_attempt.verifier"), verifier)?;
                self.check_node(&format!("{path}.auth_attempt.target"), target)?;
            }
            Action::LightRefresh { node, peer } => {
                self.check_node(&format!("{path}.light_refresh.node"), node)?;
                if self.role_of(node) != Some(RoleDecl::Light) {
                    return Err(ScenarioError::new(
                        format!("{path}.light_refresh.node"),
                        format!("`{node}` is not a light node"),
                    ));
                }
                if let Some(peer) = peer {
                    self.check_node(&format!("{path}.light_refresh.peer"), peer)?;
                }
            }
            Action::Crash { node } | Action::Recover { node } => {
                self.check_node(&format!("{path}.node"), node)?
            }
            Action::PartitionStart { groups } => {
                let mut seen = BTreeSet::new();
                for (gi, group) in groups.iter().enumerate() {
                    for name in group {
                        self.check_node(&format!("{path}.partition_start.groups[{gi}]"), name)?;
                        if !seen.insert(name.clone()) {
                            return Err(ScenarioError::new(
                                format!("{path}.partition_start.groups[{gi}]"),
                                format!("node `{name}` appears in more than one group"),
                            ));
                        }
                    }
                }
            }
            Action::PartitionStop => {}
            Action::DropLink { a, b } => {
                let exists = self
                    .topology
                    .links
                    .iter()
                    .any(|l| (l.a == *a && l.b == *b) || (l.a == *b && l.b == *a));
                if !exists {
                    return Err(ScenarioError::new(
                        format!("{path}.drop_link"),
                        format!("no link between `{a}` and `{b}`"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(ScenarioError::new(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCENARIO_SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        if self.duration_ms == 0 {
            return Err(ScenarioError::new("duration_ms", "must be positive"));
        }
        provider_by_name(&self.genesis.provider)
            .map_err(|e| ScenarioError::new("genesis.provider", e.to_string()))?;
        if self.genesis.round_ms == 0 {
            return Err(ScenarioError::new("genesis.round_ms", "must be positive"));
        }
        if self.genesis.global_cap == 0 {
            return Err(ScenarioError::new("genesis.global_cap", "must be at least 1"));
        }
        if self.genesis.auth_ttl_ms == 0 {
            return Err(ScenarioError::new("genesis.auth_ttl_ms", "must be positive"));
        }
        if self.genesis.fee_params.entity_reserve == 0 {
            return Err(ScenarioError::new(
                "genesis.fee_params.entity_reserve",
                "must be at least 1 (a live entity always holds a reservation)",
            ));
        }
        if self.genesis.fee_params.confirmation_reserve == 0 {
            return Err(ScenarioError::new(
                "genesis.fee_params.confirmation_reserve",
                "must be at least 1 (a live edge always holds a reservation)",
            ));
        }

        let mut names = BTreeSet::new();
        for (i, node) in self.topology.nodes.iter().enumerate() {
            if node.name.is_empty() {
                return Err(ScenarioError::new(
                    format!("topology.nodes[{i}].name"),
                    "must not be empty",
                ));
            }
            if !names.insert(node.name.clone()) {
                return Err(ScenarioError::new(
                    format!("topology.nodes[{i}].name"),
                    format!("duplicate node name `{}`", node.name),
                ));
            }
        }
        if names.is_empty() {
            return Err(ScenarioError::new("topology.nodes", "must not be empty"));
        }

        for (i, link) in self.topology.links.iter().enumerate() {
            self.check_node(&format!("topology.links[{i}].a"), &link.a)?;
            self.check_node(&format!("topology.links[{i}].b"), &link.b)?;
            if link.a == link.b {
                return Err(ScenarioError::new(
                    format!("topology.links[{i}]"),
                    "a link must join two distinct nodes",
                ));
            }
            if !(0.0..=1.0).contains(&link.loss) || !link.loss.is_finite() {
                return Err(ScenarioError::new(
                    format!("topology.links[{i}].loss"),
                    "must be within [0, 1]",
                ));
            }
            match (link.latency.fixed, link.latency.uniform) {
                (Some(_), None) | (None, None) => {}
                (None, Some([lo, hi])) => {
                    if lo > hi {
                        return Err(ScenarioError::new(
                            format!("topology.links[{i}].latency.uniform"),
                            "lower bound exceeds upper bound",
                        ));
                    }
                }
                (Some(_), Some(_)) => {
                    return Err(ScenarioError::new(
                        format!("topology.links[{i}].latency"),
                        "specify either fixed or uniform, not both",
                    ));
                }
            }
        }

        if self.genesis.validators.is_empty() {
            return Err(ScenarioError::new(
                "genesis.validators",
                "must name at least one full node",
            ));
        }
        let mut seen_validators = BTreeSet::new();
        for (i, v) in self.genesis.validators.iter().enumerate() {
            let path = format!("genesis.validators[{i}]");
            self.check_node(&path, v)?;
            if self.role_of(v) != Some(RoleDecl::Full) {
                return Err(ScenarioError::new(
                    path,
                    format!("validator `{v}` must be a full node"),
                ));
            }
            if !seen_validators.insert(v.clone()) {
                return Err(ScenarioError::new(path, format!("duplicate validator `{v}`")));
            }
        }

        for name in self.genesis.initial_balances.keys() {
            self.check_node(&format!("genesis.initial_balances.{name}"), name)?;
        }
        for (owner, anchor_list) in &self.genesis.anchors {
            self.check_node(&format!("genesis.anchors.{owner}"), owner)?;
            for anchor in anchor_list {
                self.check_node(&format!("genesis.anchors.{owner}[]"), anchor)?;
            }
        }

        for i in 0..self.workload.len() {
            self.validate_action(i)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "schema_version": 1,
            "seed": 1,
            "duration_ms": 10000,
            "genesis": {
                "provider": "mock",
                "validators": ["gs1"],
                "initial_balances": {"gs1": 100, "d1": 100}
            },
            "topology": {
                "nodes": [
                    {"name": "gs1", "role": "full"},
                    {"name": "d1", "role": "light"}
                ],
                "links": [
                    {"a": "gs1", "b": "d1", "latency": {"fixed": 5}, "loss": 0.0}
                ]
            },
            "workload": [
                {"at": 1000, "action": {"register_entity": {"node": "d1"}}},
                {"at": 2000, "action": "partition_stop"}
            ]
        }"#
        .to_string()
    }

    #[test]
    fn minimal_scenario_parses_and_validates() {
        let s = Scenario::from_json(&minimal_json()).unwrap();
        assert_eq!(s.genesis.round_ms, 1000);
        assert_eq!(s.genesis.fee_params.block_reward, 10);
        assert_eq!(s.workload.len(), 2);
    }

    #[test]
    fn missing_schema_version_names_the_field() {
        let json = minimal_json().replacen("\"schema_version\": 1,", "", 1);
        let err = Scenario::from_json(&json).unwrap_err();
        assert!(err.message.contains("schema_version"), "{err}");
    }

    #[test]
    fn unknown_node_reference_reports_path() {
        let json = minimal_json().replace("\"node\": \"d1\"", "\"node\": \"ghost\"");
        let err = Scenario::from_json(&json).unwrap_err();
        assert!(err.path.contains("workload[0]"), "{err}");
        assert!(err.message.contains("ghost"), "{err}");
    }

    #[test]
    fn light_validator_rejected() {
        let json = minimal_json().replace("\"validators\": [\"gs1\"]", "\"validators\": [\"d1\"]");
        let err = Scenario::from_json(&json).unwrap_err();
        assert!(err.message.contains("full node"), "{err}");
    }

    #[test]
    fn loss_out_of_range_rejected() {
        let json = minimal_json().replace("\"loss\": 0.0", "\"loss\": 1.5");
        let err = Scenario::from_json(&json).unwrap_err();
        assert!(err.path.contains("loss"), "{err}");
    }

    #[test]
    fn latency_must_pick_one_shape() {
        let json = minimal_json().replace(
            "{\"fixed\": 5}",
            "{\"fixed\": 5, \"uniform\": [1, 2]}",
        );
        let err = Scenario::from_json(&json).unwrap_err();
        assert!(err.message.contains("not both"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let json = minimal_json().replace("\"seed\": 1,", "\"seed\": 1, \"sneed\": 2,");
        assert!(Scenario::from_json(&json).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let s = Scenario::from_json(&minimal_json()).unwrap();
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(s.to_json(), again.to_json());
    }

    #[test]
    fn inject_fault_appends_validated_actions() {
        let mut s = Scenario::from_json(&minimal_json()).unwrap();
        s.inject_fault(
            Fault::Crash {
                node: "gs1".into(),
            },
            3000,
        )
        .unwrap();
        assert!(matches!(
            s.workload.last().unwrap().action,
            Action::Crash { .. }
        ));
        let err = s
            .inject_fault(
                Fault::Crash {
                    node: "nope".into(),
                },
                3000,
            )
            .unwrap_err();
        assert!(err.message.contains("nope"));
        let err = s
            .inject_fault(
                Fault::DropLink {
                    a: "gs1".into(),
                    b: "gs1".into(),
                },
                99999999,
            )
            .unwrap_err();
        assert!(err.message.contains("duration"));
    }
}
