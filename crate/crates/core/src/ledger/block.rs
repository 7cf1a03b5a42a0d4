//! Blocks, headers, hash links and quorum certificates.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{CryptoProvider, Digest, KeyPair, PublicKey, Signature};

use super::merkle::merkle_root;
use super::transaction::Transaction;

/// One validator's signature over the header-sans-cert bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuorumSig {
    pub validator: PublicKey,
    pub signature: Signature,
}

/// Header committing to a block's transactions and its parent.
///
/// `header_digest` covers every other field including the quorum cert, so
/// the digest a child links to pins the exact certified bytes. Votes sign
/// the header-sans-cert bytes, which lets validators sign before the cert
/// exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub height: u64,
    /// All-zero for the genesis block.
    pub parent_digest: Digest,
    /// Merkle root over the ordered transaction ids.
    pub tx_commitment: Digest,
    /// Simulated milliseconds supplied by the proposer.
    pub timestamp: u64,
    /// Empty for the genesis block.
    pub proposer: PublicKey,
    /// More than 2/3 of the validator set; empty for genesis and for
    /// uncertified proposals.
    pub quorum_cert: Vec<QuorumSig>,
    pub header_digest: Digest,
}

impl BlockHeader {
    /// Bytes covered by validator votes: everything except the cert and
    /// the digest.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.height);
        w.put_digest(&self.parent_digest);
        w.put_digest(&self.tx_commitment);
        w.put_u64(self.timestamp);
        w.put_public_key(&self.proposer);
        w.into_bytes()
    }

    fn bytes_sans_digest(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_raw(&self.signing_bytes());
        w.put_len(self.quorum_cert.len());
        for qs in &self.quorum_cert {
            w.put_public_key(&qs.validator);
            w.put_signature(&qs.signature);
        }
        w.into_bytes()
    }

    pub fn compute_digest(&self, provider: &dyn CryptoProvider) -> Digest {
        provider.hash(&self.bytes_sans_digest())
    }

    /// Replaces the quorum cert and recomputes the digest.
    pub fn with_quorum_cert(mut self, cert: Vec<QuorumSig>, provider: &dyn CryptoProvider) -> Self {
        self.quorum_cert = cert;
        self.header_digest = self.compute_digest(provider);
        self
    }

    pub fn encode_canonical(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_raw(&self.bytes_sans_digest());
        w.put_digest(&self.header_digest);
        w.into_bytes()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let height = r.get_u64()?;
        let parent_digest = r.get_digest()?;
        let tx_commitment = r.get_digest()?;
        let timestamp = r.get_u64()?;
        let proposer = r.get_public_key()?;
        let cert_len = r.get_len()?;
        let mut quorum_cert = Vec::with_capacity(cert_len.min(1024));
        for _ in 0..cert_len {
            quorum_cert.push(QuorumSig {
                validator: r.get_public_key()?,
                signature: r.get_signature()?,
            });
        }
        let header_digest = r.get_digest()?;
        Ok(BlockHeader {
            height,
            parent_digest,
            tx_commitment,
            timestamp,
            proposer,
            quorum_cert,
            header_digest,
        })
    }
}

/// Header plus the ordered transactions it commits to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn encode_canonical(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_raw(&self.header.encode_canonical());
        w.put_len(self.transactions.len());
        for tx in &self.transactions {
            w.put_bytes(&tx.encode_canonical());
        }
        w.into_bytes()
    }

    pub fn decode(provider: &dyn CryptoProvider, r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let header = BlockHeader::decode(r)?;
        let count = r.get_len()?;
        let mut transactions = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let bytes = r.get_bytes()?;
            let mut tr = Reader::new(&bytes);
            let tx = Transaction::decode(provider, &mut tr)?;
            tr.finish()?;
            transactions.push(tx);
        }
        Ok(Block {
            header,
            transactions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("parent link mismatch (height or parent digest)")]
    LinkMismatch,
    #[error("transaction commitment mismatch")]
    CommitmentMismatch,
    #[error("duplicate transaction id within block")]
    DuplicateTx,
    #[error("header digest does not match header bytes")]
    BadDigest,
    #[error("quorum certificate invalid: {0}")]
    BadQuorum(&'static str),
    #[error("transaction {0} is unsigned or malformed")]
    MalformedTx(usize),
    #[error("unexpected proposer for this height and round")]
    WrongProposer,
}

/// Assembles an uncertified block on top of `parent`. The quorum cert is
/// left empty for consensus to fill.
pub fn build_block(
    provider: &dyn CryptoProvider,
    parent: &BlockHeader,
    transactions: Vec<Transaction>,
    proposer: &KeyPair,
    timestamp: u64,
) -> Result<Block, BlockError> {
    for (i, tx) in transactions.iter().enumerate() {
        if !tx.verify_signature(provider) {
            return Err(BlockError::MalformedTx(i));
        }
    }
    let ids: Vec<Digest> = transactions.iter().map(|tx| tx.id).collect();
    let mut header = BlockHeader {
        height: parent.height + 1,
        parent_digest: parent.header_digest,
        tx_commitment: merkle_root(provider, &ids),
        timestamp,
        proposer: proposer.public.clone(),
        quorum_cert: Vec::new(),
        header_digest: Digest::ZERO,
    };
    header.header_digest = header.compute_digest(provider);
    Ok(Block {
        header,
        transactions,
    })
}

/// The genesis block: height 0, all-zero parent, no proposer, no cert,
/// one coinbase per initial allocation (sorted by recipient key).
pub fn genesis_block(provider: &dyn CryptoProvider, allocations: &[(PublicKey, u64)]) -> Block {
    let mut sorted: Vec<(PublicKey, u64)> = allocations.to_vec();
    sorted.sort();
    let transactions: Vec<Transaction> = sorted
        .into_iter()
        .map(|(recipient, amount)| Transaction::coinbase(provider, recipient, amount))
        .collect();
    let ids: Vec<Digest> = transactions.iter().map(|tx| tx.id).collect();
    let mut header = BlockHeader {
        height: 0,
        parent_digest: Digest::ZERO,
        tx_commitment: merkle_root(provider, &ids),
        timestamp: 0,
        proposer: PublicKey(Vec::new()),
        quorum_cert: Vec::new(),
        header_digest: Digest::ZERO,
    };
    header.header_digest = header.compute_digest(provider);
    Block {
        header,
        transactions,
    }
}

fn check_structure(provider: &dyn CryptoProvider, parent: &BlockHeader, block: &Block) -> Result<(), BlockError> {
    let header = &block.header;
    if header.height != parent.height + 1 || header.parent_digest != parent.header_digest {
        return Err(BlockError::LinkMismatch);
    }
    let mut seen = BTreeSet::new();
    for tx in &block.transactions {
        if !seen.insert(tx.id) {
            return Err(BlockError::DuplicateTx);
        }
    }
    let ids: Vec<Digest> = block.transactions.iter().map(|tx| tx.id).collect();
    if merkle_root(provider, &ids) != header.tx_commitment {
        return Err(BlockError::CommitmentMismatch);
    }
    if header.compute_digest(provider) != header.header_digest {
        return Err(BlockError::BadDigest);
    }
    Ok(())
}

/// Full check of a certified block against its parent and the validator
/// set: link, commitment, digest, and a quorum cert carrying valid
/// signatures from strictly more than 2/3 of the validators.
pub fn validate_block(
    provider: &dyn CryptoProvider,
    parent: &BlockHeader,
    block: &Block,
    validators: &BTreeSet<PublicKey>,
) -> Result<(), BlockError> {
    check_structure(provider, parent, block)?;
    let cert = &block.header.quorum_cert;
    let mut signers = BTreeSet::new();
    let vote_bytes = block.header.signing_bytes();
    for qs in cert {
        if !validators.contains(&qs.validator) {
            return Err(BlockError::BadQuorum("signer is not a validator"));
        }
        if !signers.insert(qs.validator.clone()) {
            return Err(BlockError::BadQuorum("duplicate signer"));
        }
        if !provider.verify(&qs.validator, &vote_bytes, &qs.signature) {
            return Err(BlockError::BadQuorum("signature does not verify"));
        }
    }
    if 3 * signers.len() <= 2 * validators.len() {
        return Err(BlockError::BadQuorum("not more than 2/3 of validators"));
    }
    Ok(())
}

/// Structural check of an uncertified proposal: everything except the
/// quorum cert, plus the expected proposer identity.
pub fn validate_proposal(
    provider: &dyn CryptoProvider,
    parent: &BlockHeader,
    block: &Block,
    expected_proposer: &PublicKey,
) -> Result<(), BlockError> {
    check_structure(provider, parent, block)?;
    if !block.header.quorum_cert.is_empty() {
        return Err(BlockError::BadQuorum("proposal must be uncertified"));
    }
    if block.header.proposer != *expected_proposer {
        return Err(BlockError::WrongProposer);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{CryptoProvider, MockProvider};
    use crate::ledger::merkle::{prove_inclusion, verify_inclusion};
    use crate::ledger::transaction::TxPayload;

    fn provider() -> MockProvider {
        MockProvider
    }

    fn keys(fill: u8) -> KeyPair {
        provider().generate_keypair(&[fill; 32])
    }

    fn transfer(from: &KeyPair, to: u8, seq: u64, amount: u64) -> Transaction {
        Transaction::build_signed(
            &provider(),
            from,
            seq,
            1,
            TxPayload::TokenTransfer {
                recipient: keys(to).public,
                amount,
            },
        )
    }

    fn certified(
        p: &dyn CryptoProvider,
        parent: &BlockHeader,
        txs: Vec<Transaction>,
        proposer: &KeyPair,
        validators: &[&KeyPair],
        timestamp: u64,
    ) -> Block {
        let block = build_block(p, parent, txs, proposer, timestamp).unwrap();
        let bytes = block.header.signing_bytes();
        let mut cert: Vec<QuorumSig> = validators
            .iter()
            .map(|kp| QuorumSig {
                validator: kp.public.clone(),
                signature: p.sign(&kp.private, &bytes).unwrap(),
            })
            .collect();
        cert.sort_by(|a, b| a.validator.cmp(&b.validator));
        let header = block.header.clone().with_quorum_cert(cert, p);
        Block {
            header,
            transactions: block.transactions,
        }
    }

    #[test]
    fn empty_block_on_genesis() {
        let p = provider();
        let genesis = genesis_block(&p, &[]);
        assert_eq!(genesis.header.height, 0);
        assert_eq!(genesis.header.parent_digest, Digest::ZERO);
        assert_eq!(genesis.header.tx_commitment, p.hash(b""));

        let block = build_block(&p, &genesis.header, vec![], &keys(1), 5).unwrap();
        assert_eq!(block.header.height, 1);
        assert_eq!(block.header.parent_digest, genesis.header.header_digest);
        assert_eq!(block.header.tx_commitment, p.hash(b""));
    }

    #[test]
    fn chain_of_ten_links_by_digest() {
        let p = provider();
        let proposer = keys(1);
        let mut parent = genesis_block(&p, &[]).header;
        for i in 0..10 {
            let block = build_block(&p, &parent, vec![], &proposer, i).unwrap();
            assert_eq!(block.header.parent_digest, parent.header_digest);
            assert_eq!(block.header.height, parent.height + 1);
            parent = block.header;
        }
    }

    #[test]
    fn certified_block_validates() {
        let p = provider();
        let v: Vec<KeyPair> = (1..=3).map(keys).collect();
        let genesis = genesis_block(&p, &[(keys(9).public, 50)]);
        let sender = keys(9);
        let block = certified(
            &p,
            &genesis.header,
            vec![transfer(&sender, 5, 0, 3)],
            &v[0],
            &[&v[0], &v[1], &v[2]],
            10,
        );
        let validators: BTreeSet<PublicKey> = v.iter().map(|k| k.public.clone()).collect();
        validate_block(&p, &genesis.header, &block, &validators).unwrap();
    }

    #[test]
    fn quorum_threshold_is_strictly_more_than_two_thirds() {
        // Enumerate every signer subset of a 3-validator set; only the
        // full set exceeds 2/3.
        let p = provider();
        let v: Vec<KeyPair> = (1..=3).map(keys).collect();
        let validators: BTreeSet<PublicKey> = v.iter().map(|k| k.public.clone()).collect();
        let genesis = genesis_block(&p, &[]);

        for mask in 0u8..8 {
            let subset: Vec<&KeyPair> = (0..3).filter(|i| mask & (1 << i) != 0).map(|i| &v[i]).collect();
            let block = certified(&p, &genesis.header, vec![], &v[0], &subset, 1);
            let result = validate_block(&p, &genesis.header, &block, &validators);
            if subset.len() == 3 {
                assert!(result.is_ok(), "mask {mask}");
            } else {
                assert!(
                    matches!(result, Err(BlockError::BadQuorum(_))),
                    "mask {mask} with {} signers",
                    subset.len()
                );
            }
        }
    }

    #[test]
    fn reordered_transactions_break_commitment() {
        let p = provider();
        let v = keys(1);
        let sender = keys(9);
        let genesis = genesis_block(&p, &[(sender.public.clone(), 50)]);
        let block = certified(
            &p,
            &genesis.header,
            vec![transfer(&sender, 5, 0, 3), transfer(&sender, 6, 1, 4)],
            &v,
            &[&v],
            1,
        );
        let mut tampered = block.clone();
        tampered.transactions.swap(0, 1);
        let validators: BTreeSet<PublicKey> = [v.public.clone()].into();
        assert_eq!(
            validate_block(&p, &genesis.header, &tampered, &validators),
            Err(BlockError::CommitmentMismatch)
        );
    }

    #[test]
    fn unsigned_transaction_rejected_at_build() {
        let p = provider();
        let sender = keys(9);
        let mut tx = transfer(&sender, 5, 0, 3);
        tx.signature = Signature::empty();
        let genesis = genesis_block(&p, &[]);
        assert_eq!(
            build_block(&p, &genesis.header, vec![tx], &keys(1), 1),
            Err(BlockError::MalformedTx(0))
        );
    }

    #[test]
    fn every_byte_tamper_changes_recomputed_digest() {
        // Flipping any byte of the certified block's encoding must change
        // the recomputed header digest or break decoding entirely.
        let p = provider();
        let v: Vec<KeyPair> = (1..=3).map(keys).collect();
        let sender = keys(9);
        let genesis = genesis_block(&p, &[(sender.public.clone(), 50)]);
        let block = certified(
            &p,
            &genesis.header,
            vec![transfer(&sender, 5, 0, 3)],
            &v[0],
            &[&v[0], &v[1], &v[2]],
            10,
        );
        let validators: BTreeSet<PublicKey> = v.iter().map(|k| k.public.clone()).collect();
        let bytes = block.encode_canonical();
        for i in 0..bytes.len() {
            let mut tampered_bytes = bytes.clone();
            tampered_bytes[i] ^= 0x01;
            let mut r = Reader::new(&tampered_bytes);
            let decoded = Block::decode(&p, &mut r).and_then(|b| {
                r.finish()?;
                Ok(b)
            });
            match decoded {
                Err(_) => {} // tamper detected at decode
                Ok(b) => {
                    assert!(
                        validate_block(&p, &genesis.header, &b, &validators).is_err()
                            || b.transactions.iter().any(|tx| !tx.verify_signature(&p)),
                        "tamper at byte {i} undetected"
                    );
                }
            }
        }
    }

    #[test]
    fn block_decode_round_trip() {
        let p = provider();
        let v: Vec<KeyPair> = (1..=3).map(keys).collect();
        let sender = keys(9);
        let genesis = genesis_block(&p, &[(sender.public.clone(), 50)]);
        let block = certified(
            &p,
            &genesis.header,
            vec![transfer(&sender, 5, 0, 3)],
            &v[0],
            &[&v[0], &v[1], &v[2]],
            10,
        );
        let bytes = block.encode_canonical();
        let mut r = Reader::new(&bytes);
        let decoded = Block::decode(&p, &mut r).unwrap();
        r.finish().unwrap();
        assert_eq!(decoded, block);
    }

    #[test]
    fn inclusion_proofs_for_every_transaction_in_seven_tx_block() {
        let p = provider();
        let sender = keys(9);
        let genesis = genesis_block(&p, &[(sender.public.clone(), 500)]);
        let txs: Vec<Transaction> = (0..7).map(|i| transfer(&sender, 5, i, i + 1)).collect();
        let block = build_block(&p, &genesis.header, txs, &keys(1), 1).unwrap();
        for tx in &block.transactions {
            let proof = prove_inclusion(&p, &block, &tx.id).unwrap();
            assert!(verify_inclusion(&p, &block.header, &tx.id, &proof));
        }
    }

    #[test]
    fn single_tx_block_has_empty_path() {
        let p = provider();
        let sender = keys(9);
        let genesis = genesis_block(&p, &[(sender.public.clone(), 50)]);
        let block = build_block(&p, &genesis.header, vec![transfer(&sender, 5, 0, 1)], &keys(1), 1)
            .unwrap();
        let id = block.transactions[0].id;
        let proof = prove_inclusion(&p, &block, &id).unwrap();
        assert!(proof.path.is_empty());
        assert!(verify_inclusion(&p, &block.header, &id, &proof));
    }

    #[test]
    fn proofs_do_not_transfer_between_blocks() {
        let p = provider();
        let sender = keys(9);
        let genesis = genesis_block(&p, &[(sender.public.clone(), 500)]);
        let blocks: Vec<Block> = (0..3)
            .map(|b| {
                let txs: Vec<Transaction> =
                    (0..4).map(|i| transfer(&sender, 5, b * 4 + i, i + 1)).collect();
                build_block(&p, &genesis.header, txs, &keys(1), b).unwrap()
            })
            .collect();
        for (bi, block) in blocks.iter().enumerate() {
            for tx in &block.transactions {
                let proof = prove_inclusion(&p, block, &tx.id).unwrap();
                for (oi, other) in blocks.iter().enumerate() {
                    let ok = verify_inclusion(&p, &other.header, &tx.id, &proof);
                    assert_eq!(ok, bi == oi, "proof from block {bi} against header {oi}");
                }
            }
        }
    }

    #[test]
    fn corrupted_proof_elements_fail() {
        let p = provider();
        let sender = keys(9);
        let genesis = genesis_block(&p, &[(sender.public.clone(), 500)]);
        let txs: Vec<Transaction> = (0..5).map(|i| transfer(&sender, 5, i, i + 1)).collect();
        let block = build_block(&p, &genesis.header, txs, &keys(1), 1).unwrap();
        let id = block.transactions[3].id;
        let proof = prove_inclusion(&p, &block, &id).unwrap();
        for i in 0..proof.path.len() {
            let mut bad = proof.clone();
            bad.path[i].0 .0[0] ^= 0xff;
            assert!(!verify_inclusion(&p, &block.header, &id, &bad), "element {i}");
        }
        let mut bad = proof.clone();
        bad.index ^= 1;
        assert!(!verify_inclusion(&p, &block.header, &id, &bad));
    }

    #[test]
    fn absent_tx_yields_error() {
        let p = provider();
        let genesis = genesis_block(&p, &[]);
        let block = build_block(&p, &genesis.header, vec![], &keys(1), 1).unwrap();
        assert_eq!(
            prove_inclusion(&p, &block, &Digest([9; 32])),
            Err(ProofError::AbsentTx)
        );
    }

    use crate::ledger::merkle::ProofError;
}
