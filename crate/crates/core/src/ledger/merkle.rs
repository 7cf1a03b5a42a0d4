//! Merkle commitment over ordered transaction ids, with inclusion proofs
//! that let a header-only node check that a transaction was committed.
//!
//! Layer rules: the empty list commits to `hash("")`; leaves are
//! `hash(0x00 ++ id)`; internal nodes are `hash(0x01 ++ left ++ right)`;
//! a layer of odd width duplicates its last node. The 0x00/0x01 domain
//! separation prevents leaf/node confusion forgeries.

use thiserror::Error;

use crate::crypto::{CryptoProvider, Digest};

use super::block::{Block, BlockHeader};

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;

fn leaf_hash(provider: &dyn CryptoProvider, id: &Digest) -> Digest {
    let mut bytes = Vec::with_capacity(33);
    bytes.push(LEAF_PREFIX);
    bytes.extend_from_slice(&id.0);
    provider.hash(&bytes)
}

fn node_hash(provider: &dyn CryptoProvider, left: &Digest, right: &Digest) -> Digest {
    let mut bytes = Vec::with_capacity(65);
    bytes.push(NODE_PREFIX);
    bytes.extend_from_slice(&left.0);
    bytes.extend_from_slice(&right.0);
    provider.hash(&bytes)
}

/// Root of the commitment tree over the ids, in order.
pub fn merkle_root(provider: &dyn CryptoProvider, ids: &[Digest]) -> Digest {
    if ids.is_empty() {
        return provider.hash(b"");
    }
    let mut layer: Vec<Digest> = ids.iter().map(|id| leaf_hash(provider, id)).collect();
    while layer.len() > 1 {
        if layer.len() % 2 == 1 {
            layer.push(*layer.last().expect("nonempty layer"));
        }
        layer = layer
            .chunks(2)
            .map(|pair| node_hash(provider, &pair[0], &pair[1]))
            .collect();
    }
    layer[0]
}

/// Which side of the running hash the sibling sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn tag(&self) -> u8 {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Side::Left),
            1 => Some(Side::Right),
            _ => None,
        }
    }
}

/// Path from one transaction id up to the header's commitment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InclusionProof {
    pub tx_id: Digest,
    pub index: u64,
    pub path: Vec<(Digest, Side)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error("transaction not present in block")]
    AbsentTx,
}

/// Proof that `tx_id` is committed by the block's header.
pub fn prove_inclusion(
    provider: &dyn CryptoProvider,
    block: &Block,
    tx_id: &Digest,
) -> Result<InclusionProof, ProofError> {
    let index = block
        .transactions
        .iter()
        .position(|tx| tx.id == *tx_id)
        .ok_or(ProofError::AbsentTx)?;

    let mut layer: Vec<Digest> = block
        .transactions
        .iter()
        .map(|tx| leaf_hash(provider, &tx.id))
        .collect();
    let mut path = Vec::new();
    let mut pos = index;
    while layer.len() > 1 {
        if layer.len() % 2 == 1 {
            layer.push(*layer.last().expect("nonempty layer"));
        }
        let (sibling, side) = if pos % 2 == 0 {
            (layer[pos + 1], Side::Right)
        } else {
            (layer[pos - 1], Side::Left)
        };
        path.push((sibling, side));
        layer = layer
            .chunks(2)
            .map(|pair| node_hash(provider, &pair[0], &pair[1]))
            .collect();
        pos /= 2;
    }

    Ok(InclusionProof {
        tx_id: *tx_id,
        index: index as u64,
        path,
    })
}

/// Folds the id up the path and compares with the header commitment.
/// Returns false (never panics) on any malformed input.
pub fn verify_inclusion(
    provider: &dyn CryptoProvider,
    header: &BlockHeader,
    tx_id: &Digest,
    proof: &InclusionProof,
) -> bool {
    if proof.tx_id != *tx_id {
        return false;
    }
    // The side flags encode the index bits from the leaf level up; a proof
    // whose claimed index disagrees with its own path is malformed.
    let mut index_from_path: u64 = 0;
    for (level, (_, side)) in proof.path.iter().enumerate() {
        if level >= 64 {
            return false;
        }
        if matches!(side, Side::Left) {
            index_from_path |= 1 << level;
        }
    }
    if index_from_path != proof.index {
        return false;
    }

    let mut acc = leaf_hash(provider, tx_id);
    for (sibling, side) in &proof.path {
        acc = match side {
            Side::Left => node_hash(provider, sibling, &acc),
            Side::Right => node_hash(provider, &acc, sibling),
        };
    }
    acc == header.tx_commitment
}
