//! Directed trust graph backing the authentication service.
//!
//! Nodes bind an account to an identity and an authentication public key;
//! a directed edge records that the source vouches for the target's
//! identity-key binding and carries the maximal allowed path length for
//! chains that route through it. A verifier trusts a target when the
//! target is one of its anchors or when some simple directed path
//! `a0 -> a1 -> ... -> ak` exists with `a0` an anchor, `ak` the target,
//! `k <= global_cap`, and every edge `e_i` satisfying
//! `limit(e_i) >= k - i + 1` — each edge's limit must cover the number of
//! edges from it through the target, inclusive. A limit-1 edge therefore
//! grants direct trust only.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::crypto::PublicKey;

/// Coarse classification carried in the identity record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntityType {
    Drone,
    GroundStation,
    Other,
}

impl EntityType {
    pub fn tag(&self) -> u8 {
        match self {
            EntityType::Drone => 0,
            EntityType::GroundStation => 1,
            EntityType::Other => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(EntityType::Drone),
            1 => Some(EntityType::GroundStation),
            2 => Some(EntityType::Other),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityType::Drone => "drone",
            EntityType::GroundStation => "ground_station",
            EntityType::Other => "other",
        }
    }

    pub fn from_str_name(s: &str) -> Option<Self> {
        match s {
            "drone" => Some(EntityType::Drone),
            "ground_station" => Some(EntityType::GroundStation),
            "other" => Some(EntityType::Other),
            _ => None,
        }
    }
}

/// Identity record registered by an entity transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRecord {
    pub account: PublicKey,
    pub auth_public_key: Vec<u8>,
    pub identity_name: String,
    pub entity_type: EntityType,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node not present in trust graph")]
    MissingNode,
    #[error("edge not present in trust graph")]
    MissingEdge,
    #[error("node already present in trust graph")]
    DuplicateNode,
    #[error("self edges are not allowed")]
    SelfEdge,
    #[error("edge path length limit must be at least 1")]
    ZeroLimit,
}

/// Immutable-snapshot directed graph; mutation happens on owned copies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrustGraph {
    nodes: BTreeMap<PublicKey, EntityRecord>,
    edges: BTreeMap<(PublicKey, PublicKey), u8>,
}

impl TrustGraph {
    pub fn new() -> Self {
        TrustGraph::default()
    }

    pub fn node(&self, key: &PublicKey) -> Option<&EntityRecord> {
        self.nodes.get(key)
    }

    pub fn contains_node(&self, key: &PublicKey) -> bool {
        self.nodes.contains_key(key)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &EntityRecord> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge(&self, from: &PublicKey, to: &PublicKey) -> Option<u8> {
        self.edges.get(&(from.clone(), to.clone())).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&PublicKey, &PublicKey, u8)> {
        self.edges.iter().map(|((f, t), l)| (f, t, *l))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn out_edges<'a>(
        &'a self,
        from: &'a PublicKey,
    ) -> impl Iterator<Item = (&'a PublicKey, u8)> + 'a {
        let lo = (from.clone(), PublicKey(Vec::new()));
        self.edges
            .range(lo..)
            .take_while(move |((f, _), _)| f == from)
            .map(|((_, t), l)| (t, *l))
    }

    pub fn in_edges(&self, to: &PublicKey) -> Vec<(PublicKey, u8)> {
        self.edges
            .iter()
            .filter(|((_, t), _)| t == to)
            .map(|((f, _), l)| (f.clone(), *l))
            .collect()
    }

    pub fn add_node(&mut self, record: EntityRecord) -> Result<(), GraphError> {
        if self.nodes.contains_key(&record.account) {
            return Err(GraphError::DuplicateNode);
        }
        self.nodes.insert(record.account.clone(), record);
        Ok(())
    }

    /// Removes the node and every incoming and outgoing edge.
    pub fn remove_node(&mut self, key: &PublicKey) -> Result<EntityRecord, GraphError> {
        let record = self.nodes.remove(key).ok_or(GraphError::MissingNode)?;
        self.edges.retain(|(f, t), _| f != key && t != key);
        Ok(record)
    }

    /// Creates the edge or replaces its path length limit.
    pub fn set_edge(
        &mut self,
        from: &PublicKey,
        to: &PublicKey,
        max_path_len: u8,
    ) -> Result<(), GraphError> {
        if max_path_len == 0 {
            return Err(GraphError::ZeroLimit);
        }
        if from == to {
            return Err(GraphError::SelfEdge);
        }
        if !self.nodes.contains_key(from) || !self.nodes.contains_key(to) {
            return Err(GraphError::MissingNode);
        }
        self.edges.insert((from.clone(), to.clone()), max_path_len);
        Ok(())
    }

    pub fn remove_edge(&mut self, from: &PublicKey, to: &PublicKey) -> Result<(), GraphError> {
        self.edges
            .remove(&(from.clone(), to.clone()))
            .ok_or(GraphError::MissingEdge)?;
        Ok(())
    }

    /// DOT text export; nodes labeled name/type, edges labeled with their
    /// path length limit. Output is stable: keys are emitted in byte order.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph trust {\n");
        for record in self.nodes.values() {
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{}/{}\"];",
                record.account.to_hex(),
                record.identity_name,
                record.entity_type.as_str()
            );
        }
        for ((from, to), limit) in &self.edges {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"L={}\"];",
                from.to_hex(),
                to.to_hex(),
                limit
            );
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustReason {
    DirectAnchor,
    PathFound,
    NoPath,
    UnknownTarget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustDecision {
    pub trusted: bool,
    /// Anchor-to-target node sequence; empty for direct anchors.
    pub witness_path: Vec<PublicKey>,
    pub reason: TrustReason,
}

impl TrustDecision {
    fn untrusted(reason: TrustReason) -> Self {
        TrustDecision {
            trusted: false,
            witness_path: Vec::new(),
            reason,
        }
    }
}

/// Per-depth sets of nodes that can still reach the target: `feasible[j]`
/// holds every node from which some walk of exactly `j` edges reaches the
/// target with each edge's limit covering its distance from the target.
fn feasible_layers(
    graph: &TrustGraph,
    target: &PublicKey,
    global_cap: u8,
) -> Vec<BTreeSet<PublicKey>> {
    let cap = global_cap as usize;
    let mut layers: Vec<BTreeSet<PublicKey>> = Vec::with_capacity(cap + 1);
    layers.push(BTreeSet::from([target.clone()]));
    for j in 1..=cap {
        let prev = &layers[j - 1];
        let mut layer = BTreeSet::new();
        for ((from, to), limit) in &graph.edges {
            // The first edge of a j-edge walk sits j hops from the target.
            if *limit as usize >= j && prev.contains(to) {
                layer.insert(from.clone());
            }
        }
        layers.push(layer);
    }
    layers
}

/// Lexicographically smallest valid simple path of exactly `k` edges from
/// any anchor to the target, if one exists.
fn lex_smallest_path(
    graph: &TrustGraph,
    anchors: &BTreeSet<PublicKey>,
    target: &PublicKey,
    k: usize,
    layers: &[BTreeSet<PublicKey>],
) -> Option<Vec<PublicKey>> {
    fn descend(
        graph: &TrustGraph,
        target: &PublicKey,
        layers: &[BTreeSet<PublicKey>],
        path: &mut Vec<PublicKey>,
        remaining: usize,
    ) -> bool {
        let current = path.last().expect("path is seeded with the anchor").clone();
        if remaining == 0 {
            return current == *target;
        }
        for (next, limit) in graph.out_edges(&current) {
            if (limit as usize) < remaining {
                continue;
            }
            if !layers[remaining - 1].contains(next) {
                continue;
            }
            if path.contains(next) {
                continue;
            }
            path.push(next.clone());
            if descend(graph, target, layers, path, remaining - 1) {
                return true;
            }
            path.pop();
        }
        false
    }

    for anchor in anchors {
        if !layers[k].contains(anchor) {
            continue;
        }
        let mut path = vec![anchor.clone()];
        if descend(graph, target, layers, &mut path, k) {
            return Some(path);
        }
    }
    None
}

/// Decide whether a verifier holding `anchors` should trust `target`'s
/// identity-key binding. The witness is the shortest valid path; among
/// equal-length paths the lexicographically smallest node sequence wins.
pub fn evaluate_trust(
    graph: &TrustGraph,
    anchors: &BTreeSet<PublicKey>,
    target: &PublicKey,
    global_cap: u8,
) -> TrustDecision {
    if anchors.contains(target) {
        return TrustDecision {
            trusted: true,
            witness_path: Vec::new(),
            reason: TrustReason::DirectAnchor,
        };
    }
    if !graph.contains_node(target) {
        return TrustDecision::untrusted(TrustReason::UnknownTarget);
    }
    if anchors.is_empty() || global_cap == 0 {
        return TrustDecision::untrusted(TrustReason::NoPath);
    }

    let layers = feasible_layers(graph, target, global_cap);
    for k in 1..=global_cap as usize {
        if anchors.iter().any(|a| layers[k].contains(a)) {
            if let Some(path) = lex_smallest_path(graph, anchors, target, k, &layers) {
                return TrustDecision {
                    trusted: true,
                    witness_path: path,
                    reason: TrustReason::PathFound,
                };
            }
        }
    }
    TrustDecision::untrusted(TrustReason::NoPath)
}

/// Minimal subgraph a verifier with `anchors` actually needs: every node
/// and edge lying on at least one valid path, plus the anchors themselves.
/// Trust decisions over the result equal decisions over the full graph.
pub fn relevant_subgraph(
    graph: &TrustGraph,
    anchors: &BTreeSet<PublicKey>,
    global_cap: u8,
) -> TrustGraph {
    let mut keep_nodes: BTreeSet<PublicKey> = BTreeSet::new();
    let mut keep_edges: BTreeSet<(PublicKey, PublicKey)> = BTreeSet::new();

    for anchor in anchors {
        if graph.contains_node(anchor) {
            keep_nodes.insert(anchor.clone());
        }
    }

    // Enumerate valid simple paths of every length; each complete path
    // marks its nodes and edges. Prefix pruning keeps this tractable: an
    // edge used i steps into a k-edge path must carry a limit of at least
    // k - i + 1.
    fn walk(
        graph: &TrustGraph,
        path: &mut Vec<PublicKey>,
        remaining: usize,
        keep_nodes: &mut BTreeSet<PublicKey>,
        keep_edges: &mut BTreeSet<(PublicKey, PublicKey)>,
    ) {
        if remaining == 0 {
            for pair in path.windows(2) {
                keep_edges.insert((pair[0].clone(), pair[1].clone()));
            }
            for node in path.iter() {
                keep_nodes.insert(node.clone());
            }
            return;
        }
        let current = path.last().expect("path starts at an anchor").clone();
        for (next, limit) in graph.out_edges(&current) {
            if (limit as usize) < remaining || path.contains(next) {
                continue;
            }
            path.push(next.clone());
            walk(graph, path, remaining - 1, keep_nodes, keep_edges);
            path.pop();
        }
    }

    for k in 1..=global_cap as usize {
        for anchor in anchors {
            if !graph.contains_node(anchor) {
                continue;
            }
            let mut path = vec![anchor.clone()];
            walk(graph, &mut path, k, &mut keep_nodes, &mut keep_edges);
        }
    }

    let mut sub = TrustGraph::new();
    for key in &keep_nodes {
        let record = graph.node(key).expect("marked node exists").clone();
        sub.add_node(record).expect("no duplicates in marked set");
    }
    for (from, to) in &keep_edges {
        let limit = graph.edge(from, to).expect("marked edge exists");
        sub.set_edge(from, to, limit).expect("endpoints marked");
    }
    sub
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(id: u8) -> PublicKey {
        PublicKey(vec![id; 4])
    }

    fn record(id: u8) -> EntityRecord {
        EntityRecord {
            account: key(id),
            auth_public_key: vec![0xa0, id],
            identity_name: format!("entity-{id}"),
            entity_type: EntityType::Drone,
        }
    }

    fn graph_with_nodes(ids: &[u8]) -> TrustGraph {
        let mut g = TrustGraph::new();
        for &id in ids {
            g.add_node(record(id)).unwrap();
        }
        g
    }

    fn anchors(ids: &[u8]) -> BTreeSet<PublicKey> {
        ids.iter().map(|&id| key(id)).collect()
    }

    #[test]
    fn remove_node_cascades_all_incident_edges() {
        let mut g = graph_with_nodes(&[0, 1, 2, 3, 4, 5, 6]);
        // three in-edges, two out-edges on node 0, one unrelated edge
        g.set_edge(&key(1), &key(0), 2).unwrap();
        g.set_edge(&key(2), &key(0), 2).unwrap();
        g.set_edge(&key(3), &key(0), 2).unwrap();
        g.set_edge(&key(0), &key(4), 2).unwrap();
        g.set_edge(&key(0), &key(5), 2).unwrap();
        g.set_edge(&key(5), &key(6), 2).unwrap();

        g.remove_node(&key(0)).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge(&key(5), &key(6)), Some(2));
        assert!(!g.contains_node(&key(0)));
    }

    #[test]
    fn set_edge_replaces_limit() {
        let mut g = graph_with_nodes(&[1, 2]);
        g.set_edge(&key(1), &key(2), 2).unwrap();
        g.set_edge(&key(1), &key(2), 7).unwrap();
        assert_eq!(g.edge(&key(1), &key(2)), Some(7));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn remove_then_set_edge() {
        let mut g = graph_with_nodes(&[1, 2]);
        g.set_edge(&key(1), &key(2), 3).unwrap();
        g.remove_edge(&key(1), &key(2)).unwrap();
        assert_eq!(g.edge(&key(1), &key(2)), None);
        g.set_edge(&key(1), &key(2), 5).unwrap();
        assert_eq!(g.edge(&key(1), &key(2)), Some(5));
    }

    #[test]
    fn graph_mutation_errors() {
        let mut g = graph_with_nodes(&[1]);
        assert_eq!(g.add_node(record(1)), Err(GraphError::DuplicateNode));
        assert_eq!(g.remove_node(&key(9)).unwrap_err(), GraphError::MissingNode);
        assert_eq!(
            g.set_edge(&key(1), &key(9), 1),
            Err(GraphError::MissingNode)
        );
        assert_eq!(g.set_edge(&key(1), &key(1), 1), Err(GraphError::SelfEdge));
        assert_eq!(g.set_edge(&key(1), &key(1), 0), Err(GraphError::ZeroLimit));
        assert_eq!(
            g.remove_edge(&key(1), &key(1)),
            Err(GraphError::MissingEdge)
        );
    }

    #[test]
    fn anchor_is_directly_trusted() {
        let g = TrustGraph::new();
        let d = evaluate_trust(&g, &anchors(&[1]), &key(1), 6);
        assert!(d.trusted);
        assert_eq!(d.reason, TrustReason::DirectAnchor);
        assert!(d.witness_path.is_empty());
    }

    #[test]
    fn unknown_target_reported() {
        let g = graph_with_nodes(&[1]);
        let d = evaluate_trust(&g, &anchors(&[1]), &key(2), 6);
        assert!(!d.trusted);
        assert_eq!(d.reason, TrustReason::UnknownTarget);
    }

    #[test]
    fn single_edge_with_limit_one_suffices() {
        let mut g = graph_with_nodes(&[1, 2]);
        g.set_edge(&key(1), &key(2), 1).unwrap();
        let d = evaluate_trust(&g, &anchors(&[1]), &key(2), 6);
        assert!(d.trusted);
        assert_eq!(d.reason, TrustReason::PathFound);
        assert_eq!(d.witness_path, vec![key(1), key(2)]);
    }

    #[test]
    fn two_hop_chain_needs_first_edge_limit_two() {
        let mut g = graph_with_nodes(&[1, 2, 3]);
        g.set_edge(&key(1), &key(2), 1).unwrap();
        g.set_edge(&key(2), &key(3), 1).unwrap();
        // first edge limit 1 cannot cover a 2-edge chain
        let d = evaluate_trust(&g, &anchors(&[1]), &key(3), 6);
        assert!(!d.trusted);
        assert_eq!(d.reason, TrustReason::NoPath);

        g.set_edge(&key(1), &key(2), 2).unwrap();
        let d = evaluate_trust(&g, &anchors(&[1]), &key(3), 6);
        assert!(d.trusted);
        assert_eq!(d.witness_path, vec![key(1), key(2), key(3)]);
    }

    #[test]
    fn global_cap_bounds_path_length() {
        let mut g = graph_with_nodes(&[1, 2, 3, 4]);
        g.set_edge(&key(1), &key(2), 3).unwrap();
        g.set_edge(&key(2), &key(3), 2).unwrap();
        g.set_edge(&key(3), &key(4), 1).unwrap();
        assert!(evaluate_trust(&g, &anchors(&[1]), &key(4), 3).trusted);
        assert!(!evaluate_trust(&g, &anchors(&[1]), &key(4), 2).trusted);
    }

    #[test]
    fn witness_prefers_shortest_then_lexicographic() {
        let mut g = graph_with_nodes(&[1, 2, 3, 4]);
        // two 2-edge routes from 1 to 4: via 2 and via 3; lex prefers via 2
        g.set_edge(&key(1), &key(2), 2).unwrap();
        g.set_edge(&key(2), &key(4), 1).unwrap();
        g.set_edge(&key(1), &key(3), 2).unwrap();
        g.set_edge(&key(3), &key(4), 1).unwrap();
        let d = evaluate_trust(&g, &anchors(&[1]), &key(4), 6);
        assert_eq!(d.witness_path, vec![key(1), key(2), key(4)]);

        // add a direct edge; shortest wins over lex
        g.set_edge(&key(1), &key(4), 1).unwrap();
        let d = evaluate_trust(&g, &anchors(&[1]), &key(4), 6);
        assert_eq!(d.witness_path, vec![key(1), key(4)]);
    }

    #[test]
    fn subgraph_of_edgeless_graph_keeps_anchor_nodes_only() {
        let g = graph_with_nodes(&[1, 2, 3]);
        let sub = relevant_subgraph(&g, &anchors(&[1]), 6);
        assert_eq!(sub.node_count(), 1);
        assert!(sub.contains_node(&key(1)));
        assert_eq!(sub.edge_count(), 0);
    }

    #[test]
    fn subgraph_excludes_underpowered_edges() {
        let mut g = graph_with_nodes(&[1, 2, 3]);
        // 1 -> 2 reachable; 2 -> 3 requires the first edge to carry limit 2
        g.set_edge(&key(1), &key(2), 1).unwrap();
        g.set_edge(&key(2), &key(3), 9).unwrap();
        let sub = relevant_subgraph(&g, &anchors(&[1]), 6);
        assert!(sub.contains_node(&key(2)));
        assert!(!sub.contains_node(&key(3)));
        assert_eq!(sub.edge(&key(1), &key(2)), Some(1));
        assert_eq!(sub.edge_count(), 1);
    }

    #[test]
    fn dot_export_is_stable_and_labeled() {
        let mut g = graph_with_nodes(&[1, 2]);
        g.set_edge(&key(1), &key(2), 3).unwrap();
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph trust {"));
        assert!(dot.contains("entity-1/drone"));
        assert!(dot.contains("L=3"));
        assert_eq!(dot, g.to_dot());
    }
}
