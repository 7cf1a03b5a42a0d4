//! Seeded discrete-event simulation of drone and ground-station nodes over
//! a lossy, latent message fabric.
//!
//! Virtual time only: the event queue pops in (timestamp, insertion
//! sequence) order, every random draw comes from a labeled stream derived
//! from the master seed, and node logic never touches a wall clock, so a
//! scenario plus seed fixes the whole run bit-for-bit.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha20Rng;

use crate::auth::{issue_challenge, respond, verify_response, AuthResponse, Challenge};
use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{
    provider_by_name, CryptoError, CryptoProvider, Digest, KeyPair, PrivateKey, PublicKey,
    Signature,
};
use crate::ledger::{Transaction, TxPayload};
use crate::node::{Envelope, FullNode, GenesisSetup, LightNode, Node, WireMessage};
use crate::state::FeeParams;
use crate::trust_graph::EntityType;

use super::metrics::{
    latency_stats, AuthMetrics, CryptoMetrics, MetricsReport, NetworkMetrics, NodeReport,
    TxMetrics,
};
use super::rng::{derive_seed, next_f64, next_range, stream};
use super::scenario::{Action, LatencySpec, RoleDecl, Scenario, ScenarioError};

/// Operation counters shared with a [`CountingProvider`].
#[derive(Debug, Default)]
pub struct CryptoCounters {
    pub signatures_created: AtomicU64,
    pub signatures_verified: AtomicU64,
    pub hashes_computed: AtomicU64,
}

impl CryptoCounters {
    fn snapshot(&self) -> (u64, u64, u64) {
        (
            self.signatures_created.load(Ordering::Relaxed),
            self.signatures_verified.load(Ordering::Relaxed),
            self.hashes_computed.load(Ordering::Relaxed),
        )
    }
}

/// Wraps a provider, counting operations as energy proxies. One instance
/// per simulated node attributes costs to the node that incurred them.
pub struct CountingProvider {
    inner: Arc<dyn CryptoProvider>,
    counters: Arc<CryptoCounters>,
}

impl CountingProvider {
    pub fn new(inner: Arc<dyn CryptoProvider>, counters: Arc<CryptoCounters>) -> Self {
        CountingProvider { inner, counters }
    }
}

impl CryptoProvider for CountingProvider {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn generate_keypair(&self, seed: &[u8; 32]) -> KeyPair {
        self.inner.generate_keypair(seed)
    }

    fn sign(&self, key: &PrivateKey, message: &[u8]) -> Result<Signature, CryptoError> {
        self.counters
            .signatures_created
            .fetch_add(1, Ordering::Relaxed);
        self.inner.sign(key, message)
    }

    fn verify(&self, key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
        self.counters
            .signatures_verified
            .fetch_add(1, Ordering::Relaxed);
        self.inner.verify(key, message, signature)
    }

    fn hash(&self, data: &[u8]) -> Digest {
        self.counters.hashes_computed.fetch_add(1, Ordering::Relaxed);
        self.inner.hash(data)
    }
}

/// Everything the fabric carries: node protocol messages plus the
/// authentication handshake riding the same links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimMessage {
    Wire(WireMessage),
    AuthChallenge(Challenge),
    AuthResponse(AuthResponse),
}

impl SimMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            SimMessage::Wire(w) => w.kind(),
            SimMessage::AuthChallenge(_) => "auth_challenge",
            SimMessage::AuthResponse(_) => "auth_response",
        }
    }

    pub fn encode_canonical(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            SimMessage::Wire(msg) => {
                w.put_u8(0);
                w.put_raw(&msg.encode_canonical());
            }
            SimMessage::AuthChallenge(c) => {
                w.put_u8(1);
                encode_challenge(&mut w, c);
            }
            SimMessage::AuthResponse(r) => {
                w.put_u8(2);
                encode_challenge(&mut w, &r.challenge);
                w.put_signature(&r.responder_auth_sig);
            }
        }
        w.into_bytes()
    }

    pub fn decode(provider: &dyn CryptoProvider, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tag = r.get_u8()?;
        let msg = match tag {
            0 => {
                let rest = bytes[1..].to_vec();
                return WireMessage::decode(provider, &rest).map(SimMessage::Wire);
            }
            1 => SimMessage::AuthChallenge(decode_challenge(&mut r)?),
            2 => {
                let challenge = decode_challenge(&mut r)?;
                let responder_auth_sig = r.get_signature()?;
                SimMessage::AuthResponse(AuthResponse {
                    challenge,
                    responder_auth_sig,
                })
            }
            other => {
                return Err(DecodeError::UnknownTag {
                    what: "sim message",
                    tag: other,
                })
            }
        };
        r.finish()?;
        Ok(msg)
    }
}

fn encode_challenge(w: &mut Writer, c: &Challenge) {
    w.put_raw(&c.nonce);
    w.put_public_key(&c.verifier_account);
    w.put_public_key(&c.target_account);
    w.put_u64(c.issued_at);
    w.put_u64(c.ttl);
}

fn decode_challenge(r: &mut Reader<'_>) -> Result<Challenge, DecodeError> {
    let mut nonce = [0u8; 32];
    for byte in &mut nonce {
        *byte = r.get_u8()?;
    }
    Ok(Challenge {
        nonce,
        verifier_account: r.get_public_key()?,
        target_account: r.get_public_key()?,
        issued_at: r.get_u64()?,
        ttl: r.get_u64()?,
    })
}

enum Payload {
    /// Encoded once at send time; decoded by the receiving node.
    WireBytes(Vec<u8>),
    Challenge(Challenge),
    Response(AuthResponse),
}

enum EventKind {
    RoundTick { node: usize },
    RefreshTick { node: usize },
    Workload { index: usize },
    Deliver { from: usize, to: usize, payload: Payload },
    AuthTimeout { nonce: [u8; 32] },
}

struct Event {
    at: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

struct LinkState {
    latency: LatencySpec,
    loss: f64,
    loss_rng: ChaCha20Rng,
    latency_rng: ChaCha20Rng,
}

struct NodeSlot {
    node: Node,
    role: RoleDecl,
    crashed: bool,
    account: KeyPair,
    auth: KeyPair,
    counters: Arc<CryptoCounters>,
    provider: Arc<CountingProvider>,
    genesis: GenesisSetup,
    full_peers: Vec<String>,
    auth_rng: ChaCha20Rng,
    messages_sent: u64,
    bytes_sent: u64,
    auth_attempts: u64,
    auth_accepted: u64,
}

struct Outstanding {
    challenge: Challenge,
    verifier: usize,
}

struct Sim<'a> {
    scenario: &'a Scenario,
    fee_params: FeeParams,
    nodes: Vec<NodeSlot>,
    name_to_idx: BTreeMap<String, usize>,
    key_to_idx: BTreeMap<PublicKey, usize>,
    links: BTreeMap<(usize, usize), LinkState>,
    dead_links: BTreeSet<(usize, usize)>,
    partition: Option<Vec<Option<usize>>>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    driver_seq: BTreeMap<PublicKey, u64>,
    outstanding: BTreeMap<[u8; 32], Outstanding>,
    submit_times: BTreeMap<Digest, u64>,
    commit_times: BTreeMap<Digest, u64>,
    last_height: Vec<u64>,
    auth: AuthMetrics,
    auth_latencies: Vec<u64>,
    tx: TxMetrics,
    commit_latencies: Vec<u64>,
    net: NetworkMetrics,
    trace: Option<&'a mut dyn FnMut(&str)>,
}

/// Report plus the artifacts a run leaves behind: each ground station's
/// persisted chain file.
pub struct SimOutcome {
    pub report: MetricsReport,
    pub chain_files: BTreeMap<String, Vec<u8>>,
}

/// Runs a validated scenario to completion and reports the metrics.
pub fn run_scenario(scenario: &Scenario) -> Result<MetricsReport, ScenarioError> {
    run_scenario_traced(scenario, None)
}

/// Like [`run_scenario`], emitting one JSON line per simulation event to
/// the given sink.
pub fn run_scenario_traced<'a>(
    scenario: &'a Scenario,
    trace: Option<&'a mut dyn FnMut(&str)>,
) -> Result<MetricsReport, ScenarioError> {
    run_scenario_outcome(scenario, trace).map(|o| o.report)
}

/// Full-outcome variant returning the chain files alongside the report.
pub fn run_scenario_outcome<'a>(
    scenario: &'a Scenario,
    trace: Option<&'a mut dyn FnMut(&str)>,
) -> Result<SimOutcome, ScenarioError> {
    scenario.validate()?;
    let wall = Instant::now();
    let mut sim = Sim::build(scenario, trace)?;
    sim.run();
    let chain_files = sim
        .nodes
        .iter()
        .filter_map(|slot| {
            slot.node
                .as_full()
                .map(|full| (full.name().to_string(), full.chain_file_bytes().to_vec()))
        })
        .collect();
    let report = sim.into_report(wall.elapsed().as_millis() as u64);
    Ok(SimOutcome {
        report,
        chain_files,
    })
}

impl<'a> Sim<'a> {
    fn build(
        scenario: &'a Scenario,
        trace: Option<&'a mut dyn FnMut(&str)>,
    ) -> Result<Self, ScenarioError> {
        let base = provider_by_name(&scenario.genesis.provider)
            .map_err(|e| ScenarioError::new("genesis.provider", e.to_string()))?;
        let fee_params: FeeParams = scenario.genesis.fee_params.into();
        let seed = scenario.seed;

        let mut name_to_idx = BTreeMap::new();
        for (i, node) in scenario.topology.nodes.iter().enumerate() {
            name_to_idx.insert(node.name.clone(), i);
        }

        // keys first: the genesis setup needs every account key
        let mut accounts = Vec::new();
        let mut auths = Vec::new();
        for decl in &scenario.topology.nodes {
            let account_seed = derive_seed(seed, &["account-key", &decl.name]);
            let auth_seed = derive_seed(seed, &["auth-key", &decl.name]);
            accounts.push(base.generate_keypair(&account_seed));
            auths.push(base.generate_keypair(&auth_seed));
        }

        let allocations: Vec<(PublicKey, u64)> = scenario
            .genesis
            .initial_balances
            .iter()
            .map(|(name, amount)| (accounts[name_to_idx[name]].public.clone(), *amount))
            .collect();
        let validators: Vec<(String, PublicKey)> = scenario
            .genesis
            .validators
            .iter()
            .map(|name| (name.clone(), accounts[name_to_idx[name]].public.clone()))
            .collect();

        // per-node linked full peers, in link declaration order
        let mut full_peers: Vec<Vec<String>> = vec![Vec::new(); scenario.topology.nodes.len()];
        for link in &scenario.topology.links {
            let a = name_to_idx[&link.a];
            let b = name_to_idx[&link.b];
            if scenario.topology.nodes[b].role == RoleDecl::Full
                && !full_peers[a].contains(&link.b)
            {
                full_peers[a].push(link.b.clone());
            }
            if scenario.topology.nodes[a].role == RoleDecl::Full
                && !full_peers[b].contains(&link.a)
            {
                full_peers[b].push(link.a.clone());
            }
        }

        let mut key_to_idx = BTreeMap::new();
        let mut nodes = Vec::new();
        for (i, decl) in scenario.topology.nodes.iter().enumerate() {
            let counters = Arc::new(CryptoCounters::default());
            let provider = Arc::new(CountingProvider::new(base.clone(), counters.clone()));
            let genesis = GenesisSetup {
                provider: provider.clone(),
                allocations: allocations.clone(),
                validators: validators.clone(),
                fee_params,
                round_ms: scenario.genesis.round_ms,
                global_cap: scenario.genesis.global_cap,
            };
            let anchors: BTreeSet<PublicKey> = scenario
                .genesis
                .anchors
                .get(&decl.name)
                .map(|list| {
                    list.iter()
                        .map(|n| accounts[name_to_idx[n]].public.clone())
                        .collect()
                })
                .unwrap_or_default();
            let node = match decl.role {
                RoleDecl::Full => Node::Full(Box::new(FullNode::new(
                    decl.name.clone(),
                    accounts[i].clone(),
                    &genesis,
                    full_peers[i].clone(),
                ))),
                RoleDecl::Light => Node::Light(Box::new(LightNode::new(
                    decl.name.clone(),
                    accounts[i].clone(),
                    &genesis,
                    anchors,
                    full_peers[i].clone(),
                ))),
            };
            key_to_idx.insert(accounts[i].public.clone(), i);
            nodes.push(NodeSlot {
                node,
                role: decl.role,
                crashed: false,
                account: accounts[i].clone(),
                auth: auths[i].clone(),
                counters,
                provider,
                genesis,
                full_peers: full_peers[i].clone(),
                auth_rng: stream(seed, &["auth-nonce", &decl.name]),
                messages_sent: 0,
                bytes_sent: 0,
                auth_attempts: 0,
                auth_accepted: 0,
            });
        }

        let mut links = BTreeMap::new();
        for link in &scenario.topology.links {
            let a = name_to_idx[&link.a];
            let b = name_to_idx[&link.b];
            for (from, to, fname, tname) in
                [(a, b, &link.a, &link.b), (b, a, &link.b, &link.a)]
            {
                links.insert(
                    (from, to),
                    LinkState {
                        latency: link.latency,
                        loss: link.loss,
                        loss_rng: stream(seed, &["link", fname, tname, "loss"]),
                        latency_rng: stream(seed, &["link", fname, tname, "latency"]),
                    },
                );
            }
        }

        let last_height = vec![0u64; nodes.len()];
        let mut sim = Sim {
            scenario,
            fee_params,
            nodes,
            name_to_idx,
            key_to_idx,
            links,
            dead_links: BTreeSet::new(),
            partition: None,
            queue: BinaryHeap::new(),
            seq: 0,
            driver_seq: BTreeMap::new(),
            outstanding: BTreeMap::new(),
            submit_times: BTreeMap::new(),
            commit_times: BTreeMap::new(),
            last_height,
            auth: AuthMetrics::default(),
            auth_latencies: Vec::new(),
            tx: TxMetrics::default(),
            commit_latencies: Vec::new(),
            net: NetworkMetrics::default(),
            trace,
        };

        for i in 0..sim.nodes.len() {
            match sim.nodes[i].role {
                RoleDecl::Full => sim.schedule(0, EventKind::RoundTick { node: i }),
                RoleDecl::Light => {
                    let interval = scenario.genesis.refresh_interval_ms;
                    if interval > 0 {
                        sim.schedule(interval, EventKind::RefreshTick { node: i });
                    }
                }
            }
        }
        for (index, timed) in scenario.workload.iter().enumerate() {
            sim.schedule(timed.at, EventKind::Workload { index });
        }
        Ok(sim)
    }

    fn schedule(&mut self, at: u64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Event { at, seq, kind }));
    }

    fn emit(&mut self, line: String) {
        if let Some(trace) = self.trace.as_mut() {
            trace(&line);
        }
    }

    fn trace_event(&mut self, at: u64, event: &str, detail: serde_json::Value) {
        if self.trace.is_some() {
            let line = serde_json::json!({
                "t": at,
                "event": event,
                "detail": detail,
            })
            .to_string();
            self.emit(line);
        }
    }

    fn run(&mut self) {
        let duration = self.scenario.duration_ms;
        while let Some(Reverse(event)) = self.queue.pop() {
            if event.at > duration {
                self.queue.push(Reverse(event));
                break;
            }
            self.dispatch(event);
        }
        self.drain();
    }

    fn dispatch(&mut self, event: Event) {
        let at = event.at;
        match event.kind {
            EventKind::RoundTick { node } => {
                self.schedule(at + self.scenario.genesis.round_ms, EventKind::RoundTick { node });
                if self.nodes[node].crashed {
                    return;
                }
                let outs = self.nodes[node]
                    .node
                    .as_full_mut()
                    .expect("round ticks target full nodes")
                    .consensus_step(at);
                self.route(node, outs, at);
                self.scan_commits(at);
            }
            EventKind::RefreshTick { node } => {
                self.schedule(
                    at + self.scenario.genesis.refresh_interval_ms,
                    EventKind::RefreshTick { node },
                );
                if self.nodes[node].crashed {
                    return;
                }
                if let Ok(outs) = self.nodes[node]
                    .node
                    .as_light_mut()
                    .expect("refresh ticks target light nodes")
                    .start_refresh(None)
                {
                    self.route(node, outs, at);
                }
            }
            EventKind::Workload { index } => {
                let action = self.scenario.workload[index].action.clone();
                self.apply_action(&action, at);
                self.scan_commits(at);
            }
            EventKind::Deliver { from, to, payload } => {
                if self.nodes[to].crashed {
                    self.net.messages_lost += 1;
                    self.trace_event(
                        at,
                        "lost",
                        serde_json::json!({"to": self.nodes[to].node.name(), "reason": "crashed"}),
                    );
                    return;
                }
                self.net.messages_delivered += 1;
                match payload {
                    Payload::WireBytes(bytes) => {
                        let from_name = self.nodes[from].node.name().to_string();
                        let outs = self.nodes[to].node.handle_raw(&from_name, &bytes, at);
                        self.route(to, outs, at);
                        self.scan_commits(at);
                    }
                    Payload::Challenge(challenge) => {
                        let slot = &self.nodes[to];
                        let response =
                            respond(slot.provider.as_ref(), &challenge, &slot.auth.clone())
                                .expect("auth keys sign");
                        let Some(&verifier_idx) =
                            self.key_to_idx.get(&challenge.verifier_account)
                        else {
                            return;
                        };
                        self.send(to, verifier_idx, SimMessage::AuthResponse(response), at);
                    }
                    Payload::Response(response) => {
                        self.decide_auth(response, at);
                    }
                }
            }
            EventKind::AuthTimeout { nonce } => {
                if self.outstanding.remove(&nonce).is_some() {
                    *self
                        .auth
                        .rejected_by_reason
                        .entry("expired".to_string())
                        .or_default() += 1;
                    self.trace_event(at, "auth_timeout", serde_json::json!({}));
                }
            }
        }
    }

    fn decide_auth(&mut self, response: AuthResponse, at: u64) {
        let Some(outstanding) = self.outstanding.remove(&response.challenge.nonce) else {
            return; // stale or duplicate response
        };
        let verifier = outstanding.verifier;
        let slot = &self.nodes[verifier];
        let anchors = match slot.node.as_light() {
            Some(light) => light.anchors().clone(),
            None => self
                .scenario
                .genesis
                .anchors
                .get(slot.node.name())
                .map(|list| {
                    list.iter()
                        .map(|n| self.nodes[self.name_to_idx[n]].account.public.clone())
                        .collect()
                })
                .unwrap_or_default(),
        };
        let decision = verify_response(
            slot.provider.as_ref(),
            &outstanding.challenge,
            &response,
            slot.node.trust_view(),
            &anchors,
            at,
            self.scenario.genesis.global_cap,
        );
        if decision.accepted {
            self.auth.accepted += 1;
            self.nodes[verifier].auth_accepted += 1;
            self.auth_latencies
                .push(at - outstanding.challenge.issued_at);
        } else {
            *self
                .auth
                .rejected_by_reason
                .entry(decision.reason.name().to_string())
                .or_default() += 1;
        }
        let verifier_name = self.nodes[verifier].node.name().to_string();
        self.trace_event(
            at,
            "auth_decision",
            serde_json::json!({
                "verifier": verifier_name,
                "accepted": decision.accepted,
                "reason": decision.reason.name(),
            }),
        );
    }

    fn route(&mut self, from: usize, envelopes: Vec<Envelope>, at: u64) {
        for env in envelopes {
            let Some(&to) = self.name_to_idx.get(&env.to) else {
                continue; // address book references only topology nodes
            };
            self.send(from, to, SimMessage::Wire(env.msg), at);
        }
    }

    /// Samples loss and latency on the (from, to) link and either
    /// schedules delivery or counts the loss.
    fn send(&mut self, from: usize, to: usize, msg: SimMessage, at: u64) {
        let encoded = msg.encode_canonical();
        self.net.messages_sent += 1;
        self.net.bytes_sent += encoded.len() as u64;
        self.nodes[from].messages_sent += 1;
        self.nodes[from].bytes_sent += encoded.len() as u64;
        let kind = msg.kind();
        if self.trace.is_some() {
            let detail = serde_json::json!({
                "from": self.nodes[from].node.name(),
                "to": self.nodes[to].node.name(),
                "kind": kind,
                "bytes": encoded.len(),
            });
            self.trace_event(at, "send", detail);
        }

        let lost_reason = self.delivery_obstacle(from, to);
        if let Some(reason) = lost_reason {
            self.net.messages_lost += 1;
            self.trace_event(at, "lost", serde_json::json!({"reason": reason}));
            return;
        }
        let link = self
            .links
            .get_mut(&(from, to))
            .expect("delivery_obstacle verified the link");
        if link.loss > 0.0 && next_f64(&mut link.loss_rng) < link.loss {
            self.net.messages_lost += 1;
            self.trace_event(at, "lost", serde_json::json!({"reason": "loss"}));
            return;
        }
        let latency = match (link.latency.fixed, link.latency.uniform) {
            (Some(ms), _) => ms,
            (None, Some([lo, hi])) => next_range(&mut link.latency_rng, lo, hi),
            (None, None) => 0,
        };
        let payload = match msg {
            // the sim envelope is [tag 0] ++ wire bytes; nodes decode the
            // wire bytes alone
            SimMessage::Wire(_) => Payload::WireBytes(encoded[1..].to_vec()),
            SimMessage::AuthChallenge(c) => Payload::Challenge(c),
            SimMessage::AuthResponse(r) => Payload::Response(r),
        };
        self.schedule(at + latency, EventKind::Deliver { from, to, payload });
    }

    fn delivery_obstacle(&self, from: usize, to: usize) -> Option<&'static str> {
        if !self.links.contains_key(&(from, to)) {
            return Some("no_link");
        }
        let norm = (from.min(to), from.max(to));
        if self.dead_links.contains(&norm) {
            return Some("link_down");
        }
        if let Some(groups) = &self.partition {
            match (groups[from], groups[to]) {
                (Some(a), Some(b)) if a == b => {}
                _ => return Some("partitioned"),
            }
        }
        None
    }

    fn scan_commits(&mut self, at: u64) {
        for idx in 0..self.nodes.len() {
            let new_blocks = {
                let Some(full) = self.nodes[idx].node.as_full() else {
                    continue;
                };
                let tip = full.height();
                let mut infos = Vec::new();
                let mut h = self.last_height[idx];
                while h < tip {
                    h += 1;
                    let block = &full.chain()[h as usize];
                    let ids: Vec<Digest> = block.transactions.iter().map(|tx| tx.id).collect();
                    infos.push((h, full.name().to_string(), ids));
                }
                self.last_height[idx] = tip;
                infos
            };
            for (height, name, ids) in new_blocks {
                self.trace_event(
                    at,
                    "commit",
                    serde_json::json!({"node": name, "height": height, "txs": ids.len()}),
                );
                for id in ids {
                    if let Some(&t0) = self.submit_times.get(&id) {
                        if self.commit_times.insert(id, at).is_none() {
                            self.commit_latencies.push(at - t0);
                            self.tx.committed += 1;
                        }
                    }
                }
            }
        }
    }

    fn build_tx(&mut self, sender: usize, fee: u64, payload: TxPayload) -> Transaction {
        let key = self.nodes[sender].account.clone();
        let seq_entry = self.driver_seq.entry(key.public.clone()).or_insert(0);
        let seq = *seq_entry;
        *seq_entry += 1;
        Transaction::build_signed(self.nodes[sender].provider.as_ref(), &key, seq, fee, payload)
    }

    fn submit(&mut self, origin: usize, tx: Transaction, at: u64) {
        self.tx.submitted += 1;
        self.submit_times.entry(tx.id).or_insert(at);
        if self.nodes[origin].crashed {
            self.tx.rejected_at_submit += 1;
            return;
        }
        let outcome = match &mut self.nodes[origin].node {
            Node::Full(full) => full.submit_transaction(tx).map(|_| Vec::new()),
            Node::Light(light) => light
                .submit_transaction(tx)
                .map(|env| vec![env])
                .map_err(|_| crate::state::TxError::BadSignature),
        };
        match outcome {
            Ok(outs) => self.route(origin, outs, at),
            Err(_) => self.tx.rejected_at_submit += 1,
        }
    }

    fn apply_action(&mut self, action: &Action, at: u64) {
        if self.trace.is_some() {
            let detail = serde_json::to_value(action).expect("actions serialize");
            self.trace_event(at, "workload", detail);
        }
        match action {
            Action::RegisterEntity {
                node,
                identity,
                entity_type,
            } => {
                let idx = self.name_to_idx[node];
                let entity_type = entity_type
                    .as_deref()
                    .and_then(EntityType::from_str_name)
                    .unwrap_or(match self.nodes[idx].role {
                        RoleDecl::Full => EntityType::GroundStation,
                        RoleDecl::Light => EntityType::Drone,
                    });
                let slot = &self.nodes[idx];
                let possession = slot
                    .provider
                    .sign(&slot.auth.private, slot.account.public.as_bytes())
                    .expect("auth key signs");
                let payload = TxPayload::Entity {
                    identity_name: identity.clone().unwrap_or_else(|| node.clone()),
                    entity_type,
                    auth_public_key: slot.auth.public.0.clone(),
                    possession_sig: possession,
                };
                let tx = self.build_tx(idx, self.fee_params.tx_fee, payload);
                self.submit(idx, tx, at);
            }
            Action::Confirm {
                from,
                to,
                max_path_len,
            } => {
                let idx = self.name_to_idx[from];
                let subject = self.nodes[self.name_to_idx[to]].account.public.clone();
                let tx = self.build_tx(
                    idx,
                    self.fee_params.tx_fee,
                    TxPayload::Confirmation {
                        subject,
                        max_path_len: *max_path_len,
                    },
                );
                self.submit(idx, tx, at);
            }
            Action::RevokeEntity { node } => {
                let idx = self.name_to_idx[node];
                let tx = self.build_tx(idx, self.fee_params.tx_fee, TxPayload::RevokeEntity);
                self.submit(idx, tx, at);
            }
            Action::RevokeConfirmation { from, to } => {
                let idx = self.name_to_idx[from];
                let subject = self.nodes[self.name_to_idx[to]].account.public.clone();
                let tx = self.build_tx(
                    idx,
                    self.fee_params.tx_fee,
                    TxPayload::Revocation { subject },
                );
                self.submit(idx, tx, at);
            }
            Action::Transfer { from, to, amount } => {
                let idx = self.name_to_idx[from];
                let recipient = self.nodes[self.name_to_idx[to]].account.public.clone();
                let tx = self.build_tx(
                    idx,
                    self.fee_params.tx_fee,
                    TxPayload::TokenTransfer {
                        recipient,
                        amount: *amount,
                    },
                );
                self.submit(idx, tx, at);
            }
            Action::AuthAttempt { verifier, target } => {
                let v = self.name_to_idx[verifier];
                let t = self.name_to_idx[target];
                if self.nodes[v].crashed {
                    return;
                }
                self.auth.attempts += 1;
                self.nodes[v].auth_attempts += 1;
                let ttl = self.scenario.genesis.auth_ttl_ms;
                let verifier_key = self.nodes[v].account.public.clone();
                let target_key = self.nodes[t].account.public.clone();
                let challenge = {
                    let slot = &mut self.nodes[v];
                    issue_challenge(&verifier_key, &target_key, at, ttl, &mut slot.auth_rng)
                        .expect("validated ttl is positive")
                };
                self.outstanding.insert(
                    challenge.nonce,
                    Outstanding {
                        challenge: challenge.clone(),
                        verifier: v,
                    },
                );
                // fires strictly after the last still-valid arrival instant
                self.schedule(at + ttl + 1, EventKind::AuthTimeout { nonce: challenge.nonce });
                self.send(v, t, SimMessage::AuthChallenge(challenge), at);
            }
            Action::LightRefresh { node, peer } => {
                let idx = self.name_to_idx[node];
                if self.nodes[idx].crashed {
                    return;
                }
                if let Ok(outs) = self.nodes[idx]
                    .node
                    .as_light_mut()
                    .expect("validated as light")
                    .start_refresh(peer.as_deref())
                {
                    self.route(idx, outs, at);
                }
            }
            Action::Crash { node } => {
                let idx = self.name_to_idx[node];
                self.nodes[idx].crashed = true;
            }
            Action::Recover { node } => {
                let idx = self.name_to_idx[node];
                self.nodes[idx].crashed = false;
                let slot = &mut self.nodes[idx];
                if let Some(full) = slot.node.as_full() {
                    // a recovering station restarts from its own persisted
                    // chain; the replayed digest must equal the pre-crash one
                    let file = full.chain_file_bytes().to_vec();
                    let restarted = FullNode::restart_from_chain(
                        full.name().to_string(),
                        slot.account.clone(),
                        &slot.genesis,
                        slot.full_peers.clone(),
                        &file,
                    )
                    .expect("own chain file replays");
                    self.last_height[idx] = restarted.height();
                    slot.node = Node::Full(Box::new(restarted));
                }
            }
            Action::PartitionStart { groups } => {
                let mut assignment = vec![None; self.nodes.len()];
                for (gi, group) in groups.iter().enumerate() {
                    for name in group {
                        assignment[self.name_to_idx[name]] = Some(gi);
                    }
                }
                self.partition = Some(assignment);
            }
            Action::PartitionStop => {
                self.partition = None;
            }
            Action::DropLink { a, b } => {
                let ai = self.name_to_idx[a];
                let bi = self.name_to_idx[b];
                self.dead_links.insert((ai.min(bi), ai.max(bi)));
            }
        }
    }

    /// After the horizon: undelivered messages count as lost, undecided
    /// authentication attempts as expired, so every counter reconciles.
    fn drain(&mut self) {
        let events: Vec<Reverse<Event>> = self.queue.drain().collect();
        for Reverse(event) in events {
            if let EventKind::Deliver { .. } = event.kind {
                self.net.messages_lost += 1;
            }
        }
        let expired = self.outstanding.len() as u64;
        self.outstanding.clear();
        if expired > 0 {
            *self
                .auth
                .rejected_by_reason
                .entry("expired".to_string())
                .or_default() += expired;
        }
    }

    fn into_report(mut self, wall_clock_ms: u64) -> MetricsReport {
        self.auth.probability_of_authentication = if self.auth.attempts > 0 {
            Some(self.auth.accepted as f64 / self.auth.attempts as f64)
        } else {
            None
        };
        self.auth.latency_ms = latency_stats(&self.auth_latencies);
        self.tx.commit_latency_ms = latency_stats(&self.commit_latencies);

        let mut crypto = CryptoMetrics::default();
        let mut per_node = BTreeMap::new();
        for slot in &self.nodes {
            let (created, verified, hashed) = slot.counters.snapshot();
            crypto.signatures_created += created;
            crypto.signatures_verified += verified;
            crypto.hashes_computed += hashed;
            let (state_digest, malformed, delta_rejections) = match &slot.node {
                Node::Full(full) => (
                    Some(full.state_digest().to_hex()),
                    full.malformed_dropped,
                    0,
                ),
                Node::Light(light) => (None, light.malformed_dropped, light.delta_rejections),
            };
            per_node.insert(
                slot.node.name().to_string(),
                NodeReport {
                    role: match slot.role {
                        RoleDecl::Full => "full".into(),
                        RoleDecl::Light => "light".into(),
                    },
                    height: slot.node.height(),
                    state_digest,
                    messages_sent: slot.messages_sent,
                    bytes_sent: slot.bytes_sent,
                    signatures_created: created,
                    signatures_verified: verified,
                    hashes_computed: hashed,
                    auth_attempts: slot.auth_attempts,
                    auth_accepted: slot.auth_accepted,
                    malformed_dropped: malformed,
                    delta_rejections,
                },
            );
        }

        MetricsReport {
            schema_version: 1,
            scenario_name: self.scenario.name.clone(),
            seed: self.scenario.seed,
            duration_ms: self.scenario.duration_ms,
            wall_clock_ms,
            auth: self.auth,
            tx: self.tx,
            network: self.net,
            crypto,
            per_node,
        }
    }
}
