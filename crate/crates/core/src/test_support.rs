//! Test-only oracles and generators, compiled behind the `test-support`
//! feature. Everything here restates contracts naively and independently
//! of the implementation paths it checks.

use std::collections::BTreeSet;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::PublicKey;
use crate::trust_graph::{EntityRecord, EntityType, TrustGraph};

/// Literal restatement of the chain rule over one candidate path: at most
/// `global_cap` edges, and the edge entering hop `i` (1-based) of a
/// `k`-edge path must carry a limit of at least `k - i + 1`.
fn path_is_valid(graph: &TrustGraph, path: &[PublicKey], global_cap: u8) -> bool {
    let k = path.len() - 1;
    if k == 0 || k > global_cap as usize {
        return false;
    }
    for i in 1..=k {
        match graph.edge(&path[i - 1], &path[i]) {
            Some(limit) => {
                if (limit as usize) < k - i + 1 {
                    return false;
                }
            }
            None => return false,
        }
    }
    true
}

/// Every valid simple path from any anchor to the target, by exhaustive
/// depth-first enumeration of all simple paths up to the cap.
pub fn oracle_valid_paths(
    graph: &TrustGraph,
    anchors: &BTreeSet<PublicKey>,
    target: &PublicKey,
    global_cap: u8,
) -> Vec<Vec<PublicKey>> {
    fn extend(
        graph: &TrustGraph,
        path: &mut Vec<PublicKey>,
        target: &PublicKey,
        global_cap: u8,
        found: &mut Vec<Vec<PublicKey>>,
    ) {
        let current = path.last().expect("seeded with anchor").clone();
        if path.len() > global_cap as usize + 1 {
            return;
        }
        if current == *target && path.len() > 1 && path_is_valid(graph, path, global_cap) {
            found.push(path.clone());
        }
        if path.len() == global_cap as usize + 1 {
            return;
        }
        let next_hops: Vec<PublicKey> = graph
            .out_edges(&current)
            .map(|(to, _)| to.clone())
            .collect();
        for next in next_hops {
            if path.contains(&next) {
                continue;
            }
            path.push(next);
            extend(graph, path, target, global_cap, found);
            path.pop();
        }
    }

    let mut found = Vec::new();
    for anchor in anchors {
        if !graph.contains_node(anchor) {
            continue;
        }
        let mut path = vec![anchor.clone()];
        extend(graph, &mut path, target, global_cap, &mut found);
    }
    found
}

/// Oracle decision: trusted iff the target is an anchor or some valid
/// path exists; the witness is the shortest valid path, ties broken by
/// the lexicographically smallest node sequence.
pub fn oracle_decision(
    graph: &TrustGraph,
    anchors: &BTreeSet<PublicKey>,
    target: &PublicKey,
    global_cap: u8,
) -> (bool, Vec<PublicKey>) {
    if anchors.contains(target) {
        return (true, Vec::new());
    }
    let mut paths = oracle_valid_paths(graph, anchors, target, global_cap);
    if paths.is_empty() {
        return (false, Vec::new());
    }
    paths.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    (true, paths[0].clone())
}

/// Oracle subgraph: the union of all valid paths to every target, plus
/// the anchors that are graph nodes.
pub fn oracle_relevant_union(
    graph: &TrustGraph,
    anchors: &BTreeSet<PublicKey>,
    global_cap: u8,
) -> (BTreeSet<PublicKey>, BTreeSet<(PublicKey, PublicKey)>) {
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for anchor in anchors {
        if graph.contains_node(anchor) {
            nodes.insert(anchor.clone());
        }
    }
    let targets: Vec<PublicKey> = graph.nodes().map(|r| r.account.clone()).collect();
    for target in targets {
        for path in oracle_valid_paths(graph, anchors, &target, global_cap) {
            for node in &path {
                nodes.insert(node.clone());
            }
            for pair in path.windows(2) {
                edges.insert((pair[0].clone(), pair[1].clone()));
            }
        }
    }
    (nodes, edges)
}

pub fn graph_key(id: u8) -> PublicKey {
    PublicKey(vec![0xf0, id])
}

/// Random digraph over `node_count` entities with edge probability
/// `edge_per_mille`/1000 and limits drawn from `[1, max_limit]`.
pub fn random_graph(
    rng: &mut ChaCha20Rng,
    node_count: u8,
    edge_per_mille: u32,
    max_limit: u8,
) -> TrustGraph {
    let mut graph = TrustGraph::new();
    for id in 0..node_count {
        graph
            .add_node(EntityRecord {
                account: graph_key(id),
                auth_public_key: vec![0xaa, id],
                identity_name: format!("n{id}"),
                entity_type: EntityType::Drone,
            })
            .expect("ids are unique");
    }
    for from in 0..node_count {
        for to in 0..node_count {
            if from == to {
                continue;
            }
            if rng.next_u32() % 1000 < edge_per_mille {
                let limit = (rng.next_u32() % max_limit as u32) as u8 + 1;
                graph
                    .set_edge(&graph_key(from), &graph_key(to), limit)
                    .expect("nodes exist");
            }
        }
    }
    graph
}

pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
