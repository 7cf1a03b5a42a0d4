//! Simulation report: authentication outcomes, latencies, network and
//! crypto operation counters (the energy proxies), per-node breakdowns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_name: Option<String>,
    pub seed: u64,
    pub duration_ms: u64,
    /// Real elapsed time for the run; excluded from determinism checks.
    pub wall_clock_ms: u64,
    pub auth: AuthMetrics,
    pub tx: TxMetrics,
    pub network: NetworkMetrics,
    pub crypto: CryptoMetrics,
    pub per_node: BTreeMap<String, NodeReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuthMetrics {
    pub attempts: u64,
    pub accepted: u64,
    /// Keyed by rejection reason; timeouts count under "expired".
    pub rejected_by_reason: BTreeMap<String, u64>,
    /// accepted / attempts; absent when no attempts were made.
    pub probability_of_authentication: Option<f64>,
    /// Challenge-to-acceptance round trip, over accepted attempts.
    pub latency_ms: Option<LatencyStats>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TxMetrics {
    pub submitted: u64,
    pub rejected_at_submit: u64,
    pub committed: u64,
    pub commit_latency_ms: Option<LatencyStats>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetrics {
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_lost: u64,
    pub bytes_sent: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CryptoMetrics {
    pub signatures_created: u64,
    pub signatures_verified: u64,
    pub hashes_computed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub role: String,
    pub height: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_digest: Option<String>,
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub signatures_created: u64,
    pub signatures_verified: u64,
    pub hashes_computed: u64,
    pub auth_attempts: u64,
    pub auth_accepted: u64,
    pub malformed_dropped: u64,
    pub delta_rejections: u64,
}

/// Order statistics over integer millisecond samples: lower median,
/// ceiling-index p95, max.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median: u64,
    pub p95: u64,
    pub max: u64,
}

pub fn latency_stats(samples: &[u64]) -> Option<LatencyStats> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let p95_index = ((n - 1) * 95).div_ceil(100);
    Some(LatencyStats {
        median: sorted[(n - 1) / 2],
        p95: sorted[p95_index],
        max: sorted[n - 1],
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// Serialized form with the wall clock zeroed; two runs of the same
    /// scenario and seed must produce byte-identical keys.
    pub fn determinism_key(&self) -> String {
        let mut copy = self.clone();
        copy.wall_clock_ms = 0;
        copy.to_json()
    }

    /// Flat key,value summary plus one row per node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("key,value\n");
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push(',');
            out.push_str(&v);
            out.push('\n');
        };
        push("seed", self.seed.to_string());
        push("duration_ms", self.duration_ms.to_string());
        push("wall_clock_ms", self.wall_clock_ms.to_string());
        push("auth.attempts", self.auth.attempts.to_string());
        push("auth.accepted", self.auth.accepted.to_string());
        for (reason, count) in &self.auth.rejected_by_reason {
            push(&format!("auth.rejected.{reason}"), count.to_string());
        }
        push(
            "auth.probability_of_authentication",
            self.auth
                .probability_of_authentication
                .map(|p| format!("{p:.6}"))
                .unwrap_or_else(|| "".into()),
        );
        if let Some(l) = &self.auth.latency_ms {
            push("auth.latency_ms.median", l.median.to_string());
            push("auth.latency_ms.p95", l.p95.to_string());
            push("auth.latency_ms.max", l.max.to_string());
        }
        push("tx.submitted", self.tx.submitted.to_string());
        push("tx.rejected_at_submit", self.tx.rejected_at_submit.to_string());
        push("tx.committed", self.tx.committed.to_string());
        if let Some(l) = &self.tx.commit_latency_ms {
            push("tx.commit_latency_ms.median", l.median.to_string());
            push("tx.commit_latency_ms.p95", l.p95.to_string());
            push("tx.commit_latency_ms.max", l.max.to_string());
        }
        push("network.messages_sent", self.network.messages_sent.to_string());
        push(
            "network.messages_delivered",
            self.network.messages_delivered.to_string(),
        );
        push("network.messages_lost", self.network.messages_lost.to_string());
        push("network.bytes_sent", self.network.bytes_sent.to_string());
        push(
            "crypto.signatures_created",
            self.crypto.signatures_created.to_string(),
        );
        push(
            "crypto.signatures_verified",
            self.crypto.signatures_verified.to_string(),
        );
        push("crypto.hashes_computed", self.crypto.hashes_computed.to_string());
        for (name, node) in &self.per_node {
            push(&format!("node.{name}.role"), node.role.clone());
            push(&format!("node.{name}.height"), node.height.to_string());
            push(
                &format!("node.{name}.messages_sent"),
                node.messages_sent.to_string(),
            );
            push(&format!("node.{name}.bytes_sent"), node.bytes_sent.to_string());
            push(
                &format!("node.{name}.auth_attempts"),
                node.auth_attempts.to_string(),
            );
            push(
                &format!("node.{name}.auth_accepted"),
                node.auth_accepted.to_string(),
            );
        }
        out
    }
}
