//! Tamper-proof storage service node state machines.
//!
//! Full nodes (ground stations) hold the whole chain, replicate the ledger
//! state, run the rotating-proposer quorum consensus and serve headers,
//! blocks and proof-backed trust subgraph deltas. Light nodes (drones)
//! hold the quorum-certified header chain plus the trust subgraph relevant
//! to their anchors, every element backed by a verified inclusion proof.
//!
//! Consensus, one round per `round_ms` of simulated time: the proposer for
//! height `h` in round `r` is `validators[(h + r) % n]`, so a failed round
//! hands the same height to the next validator. The proposer broadcasts an
//! uncertified block, validators reply with votes over the header bytes,
//! and once the proposer holds strictly more than 2/3 of the validator set
//! it assembles the canonical quorum certificate and broadcasts the
//! certified block. One block per height; forks are not modeled.
//!
//! Every node is a deterministic single-threaded state machine driven by
//! `(message, time)` events; all interaction is by value through
//! [`Envelope`]s, which makes inbox replay reproduce state digests
//! bit-exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{CryptoProvider, Digest, KeyPair, PublicKey, Signature};
use crate::ledger::{
    append_block, build_block, chain_file_header, genesis_block, prove_inclusion,
    read_chain_file, validate_block, validate_proposal, verify_inclusion, Block, BlockHeader,
    InclusionProof, QuorumSig, Side, Transaction, TxPayload,
};
use crate::state::{FeeParams, LedgerState, TxError};
use crate::trust_graph::{relevant_subgraph, TrustGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Full,
    Light,
}

/// Network-independent genesis configuration shared by every node.
#[derive(Clone)]
pub struct GenesisSetup {
    pub provider: Arc<dyn CryptoProvider>,
    /// Initial coinbase allocations.
    pub allocations: Vec<(PublicKey, u64)>,
    /// Validator rotation order: (node name, account key). All full nodes.
    pub validators: Vec<(String, PublicKey)>,
    pub fee_params: FeeParams,
    pub round_ms: u64,
    pub global_cap: u8,
}

impl GenesisSetup {
    pub fn genesis_block(&self) -> Block {
        genesis_block(self.provider.as_ref(), &self.allocations)
    }

    pub fn validator_keys(&self) -> BTreeSet<PublicKey> {
        self.validators.iter().map(|(_, k)| k.clone()).collect()
    }
}

/// A transaction committed at (height, index) proving a subgraph element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaEntry {
    pub tx: Transaction,
    pub height: u64,
    pub proof: InclusionProof,
}

/// Everything that travels between nodes. Self-describing via a 1-byte tag
/// under the canonical encoding conventions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    SubmitTx {
        tx: Transaction,
    },
    /// Uncertified (empty cert): a proposal soliciting votes. Certified:
    /// a commit announcement.
    NewBlock {
        block: Block,
    },
    Vote {
        height: u64,
        /// Digest of the uncertified proposal header.
        header_digest: Digest,
        voter: PublicKey,
        /// Over the header-sans-cert bytes.
        signature: Signature,
    },
    HeaderRequest {
        from_height: u64,
    },
    HeaderResponse {
        headers: Vec<BlockHeader>,
    },
    EntityQuery {
        anchors: Vec<PublicKey>,
        /// Present to narrow the query to one target's paths; a full
        /// refresh leaves it empty.
        target: Option<PublicKey>,
    },
    EntityResponse {
        entries: Vec<DeltaEntry>,
        /// Quorum-certified headers covering every entry height.
        headers: Vec<BlockHeader>,
    },
    /// Catch-up for full nodes that discover a gap after a crash.
    BlockRequest {
        from_height: u64,
    },
    BlockResponse {
        blocks: Vec<Block>,
    },
}

impl WireMessage {
    pub fn tag(&self) -> u8 {
        match self {
            WireMessage::SubmitTx { .. } => 0,
            WireMessage::NewBlock { .. } => 1,
            WireMessage::Vote { .. } => 2,
            WireMessage::HeaderRequest { .. } => 3,
            WireMessage::HeaderResponse { .. } => 4,
            WireMessage::EntityQuery { .. } => 5,
            WireMessage::EntityResponse { .. } => 6,
            WireMessage::BlockRequest { .. } => 7,
            WireMessage::BlockResponse { .. } => 8,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::SubmitTx { .. } => "submit_tx",
            WireMessage::NewBlock { .. } => "new_block",
            WireMessage::Vote { .. } => "vote",
            WireMessage::HeaderRequest { .. } => "header_request",
            WireMessage::HeaderResponse { .. } => "header_response",
            WireMessage::EntityQuery { .. } => "entity_query",
            WireMessage::EntityResponse { .. } => "entity_response",
            WireMessage::BlockRequest { .. } => "block_request",
            WireMessage::BlockResponse { .. } => "block_response",
        }
    }

    pub fn encode_canonical(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(self.tag());
        match self {
            WireMessage::SubmitTx { tx } => w.put_raw(&tx.encode_canonical()),
            WireMessage::NewBlock { block } => w.put_raw(&block.encode_canonical()),
            WireMessage::Vote {
                height,
                header_digest,
                voter,
                signature,
            } => {
                w.put_u64(*height);
                w.put_digest(header_digest);
                w.put_public_key(voter);
                w.put_signature(signature);
            }
            WireMessage::HeaderRequest { from_height } | WireMessage::BlockRequest { from_height } => {
                w.put_u64(*from_height)
            }
            WireMessage::HeaderResponse { headers } => {
                w.put_len(headers.len());
                for h in headers {
                    w.put_raw(&h.encode_canonical());
                }
            }
            WireMessage::EntityQuery { anchors, target } => {
                w.put_len(anchors.len());
                for a in anchors {
                    w.put_public_key(a);
                }
                match target {
                    Some(t) => w.put_public_key(t),
                    None => w.put_bytes(&[]),
                }
            }
            WireMessage::EntityResponse { entries, headers } => {
                w.put_len(entries.len());
                for e in entries {
                    w.put_raw(&e.tx.encode_canonical());
                    w.put_u64(e.height);
                    encode_proof(&mut w, &e.proof);
                }
                w.put_len(headers.len());
                for h in headers {
                    w.put_raw(&h.encode_canonical());
                }
            }
            WireMessage::BlockResponse { blocks } => {
                w.put_len(blocks.len());
                for b in blocks {
                    w.put_raw(&b.encode_canonical());
                }
            }
        }
        w.into_bytes()
    }

    pub fn decode(provider: &dyn CryptoProvider, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tag = r.get_u8()?;
        let msg = match tag {
            0 => WireMessage::SubmitTx {
                tx: Transaction::decode(provider, &mut r)?,
            },
            1 => WireMessage::NewBlock {
                block: Block::decode(provider, &mut r)?,
            },
            2 => WireMessage::Vote {
                height: r.get_u64()?,
                header_digest: r.get_digest()?,
                voter: r.get_public_key()?,
                signature: r.get_signature()?,
            },
            3 => WireMessage::HeaderRequest {
                from_height: r.get_u64()?,
            },
            4 => {
                let count = r.get_len()?;
                let mut headers = Vec::with_capacity(count.min(4096));
                for _ in 0..count {
                    headers.push(BlockHeader::decode(&mut r)?);
                }
                WireMessage::HeaderResponse { headers }
            }
            5 => {
                let count = r.get_len()?;
                let mut anchors = Vec::with_capacity(count.min(4096));
                for _ in 0..count {
                    anchors.push(r.get_public_key()?);
                }
                let target_bytes = r.get_bytes()?;
                let target = if target_bytes.is_empty() {
                    None
                } else {
                    Some(PublicKey(target_bytes))
                };
                WireMessage::EntityQuery { anchors, target }
            }
            6 => {
                let count = r.get_len()?;
                let mut entries = Vec::with_capacity(count.min(4096));
                for _ in 0..count {
                    let tx = Transaction::decode(provider, &mut r)?;
                    let height = r.get_u64()?;
                    let proof = decode_proof(&mut r)?;
                    entries.push(DeltaEntry { tx, height, proof });
                }
                let hcount = r.get_len()?;
                let mut headers = Vec::with_capacity(hcount.min(4096));
                for _ in 0..hcount {
                    headers.push(BlockHeader::decode(&mut r)?);
                }
                WireMessage::EntityResponse { entries, headers }
            }
            7 => WireMessage::BlockRequest {
                from_height: r.get_u64()?,
            },
            8 => {
                let count = r.get_len()?;
                let mut blocks = Vec::with_capacity(count.min(4096));
                for _ in 0..count {
                    blocks.push(Block::decode(provider, &mut r)?);
                }
                WireMessage::BlockResponse { blocks }
            }
            other => {
                return Err(DecodeError::UnknownTag {
                    what: "wire message",
                    tag: other,
                })
            }
        };
        r.finish()?;
        Ok(msg)
    }
}

fn encode_proof(w: &mut Writer, proof: &InclusionProof) {
    w.put_digest(&proof.tx_id);
    w.put_u64(proof.index);
    w.put_len(proof.path.len());
    for (digest, side) in &proof.path {
        w.put_digest(digest);
        w.put_u8(side.tag());
    }
}

fn decode_proof(r: &mut Reader<'_>) -> Result<InclusionProof, DecodeError> {
    let tx_id = r.get_digest()?;
    let index = r.get_u64()?;
    let count = r.get_len()?;
    let mut path = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let digest = r.get_digest()?;
        let side = Side::from_tag(r.get_u8()?).ok_or(DecodeError::Invalid {
            what: "proof side flag",
        })?;
        path.push((digest, side));
    }
    Ok(InclusionProof { tx_id, index, path })
}

/// Outbound message addressed to a node by name; the transport decides
/// whether it arrives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub to: String,
    pub msg: WireMessage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error("light node has no reachable full-node peer")]
    NoPeer,
    #[error(transparent)]
    Tx(#[from] TxError),
}

struct PendingProposal {
    block: Block,
    votes: BTreeMap<PublicKey, Signature>,
    round: u64,
}

/// Ground station: full replica, consensus participant, proof server.
pub struct FullNode {
    name: String,
    provider: Arc<dyn CryptoProvider>,
    keypair: KeyPair,
    params: FeeParams,
    round_ms: u64,
    global_cap: u8,
    validators: Vec<(String, PublicKey)>,
    validator_set: BTreeSet<PublicKey>,
    /// Linked full nodes (certified block fan-out), by name.
    full_peers: Vec<String>,
    chain: Vec<Block>,
    ledger: LedgerState,
    /// Committed state plus the mempool applied in order.
    speculative: LedgerState,
    mempool: Vec<Transaction>,
    mempool_ids: BTreeSet<Digest>,
    pending: Option<PendingProposal>,
    last_proposed_round: Option<u64>,
    last_vote: Option<(u64, u64)>,
    /// Live backing transaction per trust-graph element.
    entity_backing: BTreeMap<PublicKey, Digest>,
    confirmation_backing: BTreeMap<(PublicKey, PublicKey), Digest>,
    tx_locations: BTreeMap<Digest, (u64, u64)>,
    chain_file: Vec<u8>,
    pub malformed_dropped: u64,
}

impl FullNode {
    pub fn new(
        name: impl Into<String>,
        keypair: KeyPair,
        genesis: &GenesisSetup,
        full_peers: Vec<String>,
    ) -> Self {
        let provider = genesis.provider.clone();
        let genesis_block = genesis.genesis_block();
        let ledger = LedgerState::from_genesis_block(
            provider.as_ref(),
            &genesis_block,
            &genesis.fee_params,
        )
        .expect("genesis block carries only coinbase allocations");
        let mut chain_file = chain_file_header(provider.as_ref(), &genesis.fee_params);
        append_block(&mut chain_file, &genesis_block);
        FullNode {
            name: name.into(),
            provider,
            keypair,
            params: genesis.fee_params,
            round_ms: genesis.round_ms,
            global_cap: genesis.global_cap,
            validators: genesis.validators.clone(),
            validator_set: genesis.validator_keys(),
            full_peers,
            speculative: ledger.clone(),
            ledger,
            chain: vec![genesis_block],
            mempool: Vec::new(),
            mempool_ids: BTreeSet::new(),
            pending: None,
            last_proposed_round: None,
            last_vote: None,
            entity_backing: BTreeMap::new(),
            confirmation_backing: BTreeMap::new(),
            tx_locations: BTreeMap::new(),
            chain_file: Vec::new(),
            malformed_dropped: 0,
        }
        .with_rebuilt_file()
    }

    fn with_rebuilt_file(mut self) -> Self {
        let mut file = chain_file_header(self.provider.as_ref(), &self.params);
        for block in &self.chain {
            append_block(&mut file, block);
        }
        self.chain_file = file;
        // backing maps for whatever the chain already contains
        let blocks: Vec<Block> = self.chain.clone();
        for block in &blocks {
            self.index_block(block);
        }
        self
    }

    /// Rebuilds a node from its persisted chain file, replaying every
    /// block; the resulting state digest must match the pre-restart one.
    pub fn restart_from_chain(
        name: impl Into<String>,
        keypair: KeyPair,
        genesis: &GenesisSetup,
        full_peers: Vec<String>,
        chain_file: &[u8],
    ) -> Result<Self, String> {
        let parsed = read_chain_file(chain_file).map_err(|e| e.to_string())?;
        if parsed.provider_name != genesis.provider.name() {
            return Err("chain file provider does not match genesis".into());
        }
        if parsed.fee_params != genesis.fee_params {
            return Err("chain file fee parameters do not match genesis".into());
        }
        let provider = genesis.provider.clone();
        let expected_genesis = genesis.genesis_block();
        let Some(first) = parsed.blocks.first() else {
            return Err("chain file holds no blocks".into());
        };
        if *first != expected_genesis {
            return Err("chain file genesis does not match configuration".into());
        }
        // verify links and certs before trusting the replayed state
        for pair in parsed.blocks.windows(2) {
            validate_block(
                provider.as_ref(),
                &pair[0].header,
                &pair[1],
                &genesis.validator_keys(),
            )
            .map_err(|e| format!("block {}: {e}", pair[1].header.height))?;
        }
        let ledger = LedgerState::replay_chain(provider.as_ref(), &parsed.blocks, &genesis.fee_params)
            .map_err(|e| e.to_string())?;
        Ok(FullNode {
            name: name.into(),
            provider,
            keypair,
            params: genesis.fee_params,
            round_ms: genesis.round_ms,
            global_cap: genesis.global_cap,
            validators: genesis.validators.clone(),
            validator_set: genesis.validator_keys(),
            full_peers,
            speculative: ledger.clone(),
            ledger,
            chain: parsed.blocks,
            mempool: Vec::new(),
            mempool_ids: BTreeSet::new(),
            pending: None,
            last_proposed_round: None,
            last_vote: None,
            entity_backing: BTreeMap::new(),
            confirmation_backing: BTreeMap::new(),
            tx_locations: BTreeMap::new(),
            chain_file: Vec::new(),
            malformed_dropped: 0,
        }
        .with_rebuilt_file())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.keypair.public
    }

    pub fn tip(&self) -> &BlockHeader {
        &self.chain.last().expect("chain holds genesis").header
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn ledger(&self) -> &LedgerState {
        &self.ledger
    }

    pub fn state_digest(&self) -> Digest {
        self.ledger.digest(self.provider.as_ref())
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn chain_file_bytes(&self) -> &[u8] {
        &self.chain_file
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    fn is_validator(&self) -> bool {
        self.validator_set.contains(&self.keypair.public)
    }

    fn proposer_for(&self, height: u64, round: u64) -> &(String, PublicKey) {
        let n = self.validators.len() as u64;
        &self.validators[((height + round) % n) as usize]
    }

    /// Admits a transaction against the speculative state (committed state
    /// plus mempool in order), so dependent transactions can queue within
    /// one round.
    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<(), TxError> {
        if matches!(tx.payload, TxPayload::Coinbase { .. }) {
            // minting is the proposer's privilege; user coinbases are
            // unsigned by construction
            return Err(TxError::BadSignature);
        }
        if self.mempool_ids.contains(&tx.id) {
            return Ok(()); // duplicate submission, single entry
        }
        let next = self
            .speculative
            .apply_transaction(self.provider.as_ref(), &tx, &self.params)?;
        self.speculative = next;
        self.mempool_ids.insert(tx.id);
        self.mempool.push(tx);
        Ok(())
    }

    /// Round driver; call at every round boundary.
    pub fn consensus_step(&mut self, now: u64) -> Vec<Envelope> {
        let round = now / self.round_ms;
        if let Some(pending) = &self.pending {
            if pending.round < round {
                self.pending = None; // proposal expired without quorum
            }
        }
        if !self.is_validator() {
            return Vec::new();
        }
        let height = self.height() + 1;
        let (_, proposer_key) = self.proposer_for(height, round);
        if *proposer_key != self.keypair.public || self.last_proposed_round == Some(round) {
            return Vec::new();
        }
        self.last_proposed_round = Some(round);

        let mut txs = vec![Transaction::coinbase(
            self.provider.as_ref(),
            self.keypair.public.clone(),
            self.params.block_reward,
        )];
        // revalidate the mempool in order against the committed state;
        // anything that no longer applies is dropped for good
        let mut scratch = self.ledger.clone();
        let mut kept = Vec::new();
        for tx in std::mem::take(&mut self.mempool) {
            match scratch.apply_transaction(self.provider.as_ref(), &tx, &self.params) {
                Ok(next) => {
                    scratch = next;
                    txs.push(tx.clone());
                    kept.push(tx);
                }
                Err(_) => {
                    self.mempool_ids.remove(&tx.id);
                }
            }
        }
        self.mempool = kept;

        let block = build_block(self.provider.as_ref(), self.tip(), txs, &self.keypair, now)
            .expect("mempool transactions are signature-valid");
        let own_sig = self
            .provider
            .sign(&self.keypair.private, &block.header.signing_bytes())
            .expect("own key signs");
        let proposal_digest = block.header.header_digest;
        let height = block.header.height;
        self.pending = Some(PendingProposal {
            block,
            votes: BTreeMap::from([(self.keypair.public.clone(), own_sig)]),
            round,
        });

        let mut out = self.try_finalize();
        if self.pending.is_some() {
            // still gathering votes: solicit them
            let proposal = WireMessage::NewBlock {
                block: self.pending.as_ref().expect("pending set above").block.clone(),
            };
            for (name, key) in self.validators.clone() {
                if key != self.keypair.public {
                    out.push(Envelope {
                        to: name,
                        msg: proposal.clone(),
                    });
                }
            }
        }
        let _ = (proposal_digest, height);
        out
    }

    /// Assembles the canonical cert and commits once quorum is reached.
    fn try_finalize(&mut self) -> Vec<Envelope> {
        let quorum = match &self.pending {
            Some(p) => 3 * p.votes.len() > 2 * self.validators.len(),
            None => false,
        };
        if !quorum {
            return Vec::new();
        }
        let pending = self.pending.take().expect("checked above");
        let cert: Vec<QuorumSig> = pending
            .votes
            .into_iter()
            .map(|(validator, signature)| QuorumSig {
                validator,
                signature,
            })
            .collect();
        let header = pending
            .block
            .header
            .clone()
            .with_quorum_cert(cert, self.provider.as_ref());
        let block = Block {
            header,
            transactions: pending.block.transactions,
        };
        if self.commit_block(block.clone()).is_err() {
            // a block this node built and validated must apply
            self.malformed_dropped += 1;
            return Vec::new();
        }
        self.full_peers
            .clone()
            .into_iter()
            .filter(|peer| *peer != self.name)
            .map(|peer| Envelope {
                to: peer,
                msg: WireMessage::NewBlock {
                    block: block.clone(),
                },
            })
            .collect()
    }

    fn commit_block(&mut self, block: Block) -> Result<(), String> {
        validate_block(
            self.provider.as_ref(),
            self.tip(),
            &block,
            &self.validator_set,
        )
        .map_err(|e| e.to_string())?;
        let next = self
            .ledger
            .apply_block(self.provider.as_ref(), &block, &self.params)
            .map_err(|e| e.to_string())?;
        self.ledger = next;
        append_block(&mut self.chain_file, &block);
        self.index_block(&block);
        self.chain.push(block);
        self.prune_mempool();
        self.pending = None;
        Ok(())
    }

    fn index_block(&mut self, block: &Block) {
        let height = block.header.height;
        for (index, tx) in block.transactions.iter().enumerate() {
            self.tx_locations.insert(tx.id, (height, index as u64));
            let Some(sender) = &tx.sender else { continue };
            match &tx.payload {
                TxPayload::Entity { .. } => {
                    self.entity_backing.insert(sender.clone(), tx.id);
                }
                TxPayload::RevokeEntity => {
                    self.entity_backing.remove(sender);
                    self.confirmation_backing
                        .retain(|(f, t), _| f != sender && t != sender);
                }
                TxPayload::Confirmation { subject, .. } => {
                    self.confirmation_backing
                        .insert((sender.clone(), subject.clone()), tx.id);
                }
                TxPayload::Revocation { subject } => {
                    self.confirmation_backing
                        .remove(&(sender.clone(), subject.clone()));
                }
                TxPayload::Coinbase { .. } | TxPayload::TokenTransfer { .. } => {}
            }
        }
    }

    fn prune_mempool(&mut self) {
        let mut scratch = self.ledger.clone();
        let mut kept = Vec::new();
        let mut kept_ids = BTreeSet::new();
        for tx in std::mem::take(&mut self.mempool) {
            if self.tx_locations.contains_key(&tx.id) {
                continue; // committed
            }
            if let Ok(next) = scratch.apply_transaction(self.provider.as_ref(), &tx, &self.params) {
                scratch = next;
                kept_ids.insert(tx.id);
                kept.push(tx);
            }
        }
        self.mempool = kept;
        self.mempool_ids = kept_ids;
        self.speculative = scratch;
    }

    /// Pure transition on one inbound message.
    pub fn handle_message(&mut self, from: &str, msg: WireMessage, now: u64) -> Vec<Envelope> {
        match msg {
            WireMessage::SubmitTx { tx } => {
                let _ = self.submit_transaction(tx);
                Vec::new()
            }
            WireMessage::NewBlock { block } => {
                if block.header.quorum_cert.is_empty() {
                    self.handle_proposal(from, block, now)
                } else {
                    self.handle_certified(from, block)
                }
            }
            WireMessage::Vote {
                height,
                header_digest,
                voter,
                signature,
            } => self.handle_vote(height, header_digest, voter, signature),
            WireMessage::HeaderRequest { from_height } => {
                let headers: Vec<BlockHeader> = self
                    .chain
                    .iter()
                    .skip(from_height as usize)
                    .map(|b| b.header.clone())
                    .collect();
                vec![Envelope {
                    to: from.to_string(),
                    msg: WireMessage::HeaderResponse { headers },
                }]
            }
            WireMessage::BlockRequest { from_height } => {
                let blocks: Vec<Block> = self
                    .chain
                    .iter()
                    .skip(from_height as usize)
                    .cloned()
                    .collect();
                vec![Envelope {
                    to: from.to_string(),
                    msg: WireMessage::BlockResponse { blocks },
                }]
            }
            WireMessage::EntityQuery { anchors, target } => {
                vec![Envelope {
                    to: from.to_string(),
                    msg: self.entity_response(&anchors.into_iter().collect(), target.as_ref()),
                }]
            }
            WireMessage::BlockResponse { blocks } => {
                for block in blocks {
                    if block.header.height == self.height() + 1 {
                        if self.commit_block(block).is_err() {
                            self.malformed_dropped += 1;
                            break;
                        }
                    }
                }
                Vec::new()
            }
            WireMessage::HeaderResponse { .. } | WireMessage::EntityResponse { .. } => {
                // full nodes never ask for these
                self.malformed_dropped += 1;
                Vec::new()
            }
        }
    }

    fn handle_proposal(&mut self, from: &str, block: Block, now: u64) -> Vec<Envelope> {
        if !self.is_validator() {
            return Vec::new();
        }
        let round = now / self.round_ms;
        let height = self.height() + 1;
        if block.header.height != height {
            return Vec::new(); // stale or future proposal
        }
        let (proposer_name, proposer_key) = self.proposer_for(height, round).clone();
        if validate_proposal(self.provider.as_ref(), self.tip(), &block, &proposer_key).is_err() {
            self.malformed_dropped += 1;
            return Vec::new();
        }
        // every transaction must apply; otherwise this round's proposal is
        // simply not voted for
        if self
            .ledger
            .apply_block(self.provider.as_ref(), &block, &self.params)
            .is_err()
        {
            self.malformed_dropped += 1;
            return Vec::new();
        }
        if self.last_vote == Some((height, round)) {
            return Vec::new();
        }
        self.last_vote = Some((height, round));
        let signature = self
            .provider
            .sign(&self.keypair.private, &block.header.signing_bytes())
            .expect("own key signs");
        let _ = from;
        vec![Envelope {
            to: proposer_name,
            msg: WireMessage::Vote {
                height,
                header_digest: block.header.header_digest,
                voter: self.keypair.public.clone(),
                signature,
            },
        }]
    }

    fn handle_certified(&mut self, from: &str, block: Block) -> Vec<Envelope> {
        let height = block.header.height;
        if height <= self.height() {
            return Vec::new(); // already have it
        }
        if height > self.height() + 1 {
            // gap: catch up from the sender
            return vec![Envelope {
                to: from.to_string(),
                msg: WireMessage::BlockRequest {
                    from_height: self.height() + 1,
                },
            }];
        }
        if self.commit_block(block).is_err() {
            self.malformed_dropped += 1;
        }
        Vec::new()
    }

    fn handle_vote(
        &mut self,
        height: u64,
        header_digest: Digest,
        voter: PublicKey,
        signature: Signature,
    ) -> Vec<Envelope> {
        let Some(pending) = &mut self.pending else {
            return Vec::new();
        };
        if pending.block.header.height != height
            || pending.block.header.header_digest != header_digest
        {
            return Vec::new();
        }
        if !self.validator_set.contains(&voter) {
            self.malformed_dropped += 1;
            return Vec::new();
        }
        if !self.provider.verify(
            &voter,
            &pending.block.header.signing_bytes(),
            &signature,
        ) {
            self.malformed_dropped += 1;
            return Vec::new();
        }
        pending.votes.insert(voter, signature);
        self.try_finalize()
    }

    /// Builds the proof-backed subgraph delta for a light node's anchors.
    fn entity_response(
        &self,
        anchors: &BTreeSet<PublicKey>,
        target: Option<&PublicKey>,
    ) -> WireMessage {
        // `target` narrows nothing today: the full relevant subgraph for
        // the anchors is always a correct superset of one target's paths.
        let _ = target;
        let relevant = relevant_subgraph(&self.ledger.graph, anchors, self.global_cap);
        let mut tx_ids = BTreeSet::new();
        for record in relevant.nodes() {
            if let Some(id) = self.entity_backing.get(&record.account) {
                tx_ids.insert(*id);
            }
        }
        for (f, t, _) in relevant.edges() {
            if let Some(id) = self.confirmation_backing.get(&(f.clone(), t.clone())) {
                tx_ids.insert(*id);
            }
        }
        let mut entries = Vec::new();
        let mut heights = BTreeSet::new();
        for id in tx_ids {
            let (height, index) = self.tx_locations[&id];
            let block = &self.chain[height as usize];
            let proof = prove_inclusion(self.provider.as_ref(), block, &id)
                .expect("indexed transaction is in its block");
            entries.push(DeltaEntry {
                tx: block.transactions[index as usize].clone(),
                height,
                proof,
            });
            heights.insert(height);
        }
        entries.sort_by_key(|e| (e.height, e.proof.index));
        let headers = heights
            .into_iter()
            .map(|h| self.chain[h as usize].header.clone())
            .collect();
        WireMessage::EntityResponse { entries, headers }
    }
}

/// Drone: header chain plus the verified relevant trust subgraph.
pub struct LightNode {
    name: String,
    provider: Arc<dyn CryptoProvider>,
    keypair: KeyPair,
    anchors: BTreeSet<PublicKey>,
    global_cap: u8,
    validator_set: BTreeSet<PublicKey>,
    headers: Vec<BlockHeader>,
    local_view: TrustGraph,
    full_peers: Vec<String>,
    rotation: usize,
    pub malformed_dropped: u64,
    pub delta_rejections: u64,
}

impl LightNode {
    pub fn new(
        name: impl Into<String>,
        keypair: KeyPair,
        genesis: &GenesisSetup,
        anchors: BTreeSet<PublicKey>,
        full_peers: Vec<String>,
    ) -> Self {
        let genesis_header = genesis.genesis_block().header;
        LightNode {
            name: name.into(),
            provider: genesis.provider.clone(),
            keypair,
            anchors,
            global_cap: genesis.global_cap,
            validator_set: genesis.validator_keys(),
            headers: vec![genesis_header],
            local_view: TrustGraph::new(),
            full_peers,
            rotation: 0,
            malformed_dropped: 0,
            delta_rejections: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.keypair.public
    }

    pub fn height(&self) -> u64 {
        self.headers.last().expect("genesis header").height
    }

    pub fn headers(&self) -> &[BlockHeader] {
        &self.headers
    }

    pub fn local_view(&self) -> &TrustGraph {
        &self.local_view
    }

    pub fn anchors(&self) -> &BTreeSet<PublicKey> {
        &self.anchors
    }

    fn pick_peer(&mut self) -> Result<String, NodeError> {
        if self.full_peers.is_empty() {
            return Err(NodeError::NoPeer);
        }
        let peer = self.full_peers[self.rotation % self.full_peers.len()].clone();
        self.rotation += 1;
        Ok(peer)
    }

    /// Forwards a transaction to a full node for processing.
    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<Envelope, NodeError> {
        let peer = self.pick_peer()?;
        Ok(Envelope {
            to: peer,
            msg: WireMessage::SubmitTx { tx },
        })
    }

    /// Starts a view refresh against `peer` (or the rotation's next pick):
    /// header sync plus a proof-backed subgraph query for our anchors.
    pub fn start_refresh(&mut self, peer: Option<&str>) -> Result<Vec<Envelope>, NodeError> {
        let peer = match peer {
            Some(p) => p.to_string(),
            None => self.pick_peer()?,
        };
        Ok(vec![
            Envelope {
                to: peer.clone(),
                msg: WireMessage::HeaderRequest {
                    from_height: self.headers.len() as u64,
                },
            },
            Envelope {
                to: peer,
                msg: WireMessage::EntityQuery {
                    anchors: self.anchors.iter().cloned().collect(),
                    target: None,
                },
            },
        ])
    }

    fn header_acceptable(&self, header: &BlockHeader, parent: &BlockHeader) -> bool {
        header.height == parent.height + 1
            && header.parent_digest == parent.header_digest
            && self.certified(header)
    }

    /// Quorum check against the static validator set; any certified header
    /// is authentic regardless of position.
    fn certified(&self, header: &BlockHeader) -> bool {
        if header.compute_digest(self.provider.as_ref()) != header.header_digest {
            return false;
        }
        if header.height == 0 {
            // genesis is exempt; it must simply be byte-identical to ours
            return *header == self.headers[0];
        }
        let bytes = header.signing_bytes();
        let mut signers = BTreeSet::new();
        for qs in &header.quorum_cert {
            if !self.validator_set.contains(&qs.validator) {
                return false;
            }
            if !signers.insert(qs.validator.clone()) {
                return false;
            }
            if !self.provider.verify(&qs.validator, &bytes, &qs.signature) {
                return false;
            }
        }
        3 * signers.len() > 2 * self.validator_set.len()
    }

    pub fn handle_message(&mut self, _from: &str, msg: WireMessage, _now: u64) -> Vec<Envelope> {
        match msg {
            WireMessage::HeaderResponse { headers } => {
                for header in headers {
                    let tip = self.headers.last().expect("genesis header");
                    if header.height != tip.height + 1 {
                        continue; // overlap or gap; keep what links
                    }
                    if self.header_acceptable(&header, tip) {
                        self.headers.push(header);
                    } else {
                        self.malformed_dropped += 1;
                        break;
                    }
                }
                Vec::new()
            }
            WireMessage::EntityResponse { entries, headers } => {
                match self.verify_delta(&entries, &headers) {
                    Ok(folded) => {
                        self.local_view =
                            relevant_subgraph(&folded, &self.anchors, self.global_cap);
                    }
                    Err(()) => {
                        self.delta_rejections += 1;
                    }
                }
                Vec::new()
            }
            _ => {
                // light nodes never receive anything else
                self.malformed_dropped += 1;
                Vec::new()
            }
        }
    }

    /// Rebuilds a graph from the delta, accepting nothing without a valid
    /// inclusion proof under a quorum-certified header consistent with our
    /// stored chain. Any inconsistency rejects the whole delta.
    fn verify_delta(
        &self,
        entries: &[DeltaEntry],
        headers: &[BlockHeader],
    ) -> Result<TrustGraph, ()> {
        let mut by_height: BTreeMap<u64, &BlockHeader> = BTreeMap::new();
        for header in headers {
            if !self.certified(header) {
                return Err(());
            }
            if let Some(stored) = self.headers.get(header.height as usize) {
                if stored.header_digest != header.header_digest {
                    return Err(());
                }
            }
            by_height.insert(header.height, header);
        }

        let mut ordered: Vec<&DeltaEntry> = entries.iter().collect();
        ordered.sort_by_key(|e| (e.height, e.proof.index));

        let mut folded = TrustGraph::new();
        let mut seen = BTreeSet::new();
        for entry in ordered {
            // a stored header may vouch for heights the sparse set lacks
            let header = match by_height.get(&entry.height) {
                Some(h) => *h,
                None => self.headers.get(entry.height as usize).ok_or(())?,
            };
            if !seen.insert((entry.height, entry.proof.index, entry.tx.id)) {
                continue;
            }
            if !verify_inclusion(self.provider.as_ref(), header, &entry.tx.id, &entry.proof) {
                return Err(());
            }
            if !entry.tx.verify_signature(self.provider.as_ref()) {
                return Err(());
            }
            let Some(sender) = &entry.tx.sender else {
                return Err(()); // coinbase has no place in a trust delta
            };
            match &entry.tx.payload {
                TxPayload::Entity {
                    identity_name,
                    entity_type,
                    auth_public_key,
                    ..
                } => {
                    // a second registration models revoke-then-register
                    let _ = folded.remove_node(sender);
                    folded
                        .add_node(crate::trust_graph::EntityRecord {
                            account: sender.clone(),
                            auth_public_key: auth_public_key.clone(),
                            identity_name: identity_name.clone(),
                            entity_type: *entity_type,
                        })
                        .map_err(|_| ())?;
                }
                TxPayload::RevokeEntity => {
                    let _ = folded.remove_node(sender);
                }
                TxPayload::Confirmation {
                    subject,
                    max_path_len,
                } => {
                    folded
                        .set_edge(sender, subject, *max_path_len)
                        .map_err(|_| ())?;
                }
                TxPayload::Revocation { subject } => {
                    let _ = folded.remove_edge(sender, subject);
                }
                TxPayload::Coinbase { .. } | TxPayload::TokenTransfer { .. } => {
                    return Err(()); // not graph-relevant; honest peers never send these
                }
            }
        }
        Ok(folded)
    }
}

/// Role-dispatching wrapper used by the simulator and test harnesses.
pub enum Node {
    Full(Box<FullNode>),
    Light(Box<LightNode>),
}

impl Node {
    pub fn name(&self) -> &str {
        match self {
            Node::Full(n) => n.name(),
            Node::Light(n) => n.name(),
        }
    }

    pub fn role(&self) -> NodeRole {
        match self {
            Node::Full(_) => NodeRole::Full,
            Node::Light(_) => NodeRole::Light,
        }
    }

    pub fn public_key(&self) -> &PublicKey {
        match self {
            Node::Full(n) => n.public_key(),
            Node::Light(n) => n.public_key(),
        }
    }

    pub fn height(&self) -> u64 {
        match self {
            Node::Full(n) => n.height(),
            Node::Light(n) => n.height(),
        }
    }

    pub fn handle_message(&mut self, from: &str, msg: WireMessage, now: u64) -> Vec<Envelope> {
        match self {
            Node::Full(n) => n.handle_message(from, msg, now),
            Node::Light(n) => n.handle_message(from, msg, now),
        }
    }

    /// Byte-level entry point: undecodable input is dropped and counted,
    /// never a crash.
    pub fn handle_raw(&mut self, from: &str, bytes: &[u8], now: u64) -> Vec<Envelope> {
        let provider = match self {
            Node::Full(n) => n.provider.clone(),
            Node::Light(n) => n.provider.clone(),
        };
        match WireMessage::decode(provider.as_ref(), bytes) {
            Ok(msg) => self.handle_message(from, msg, now),
            Err(_) => {
                match self {
                    Node::Full(n) => n.malformed_dropped += 1,
                    Node::Light(n) => n.malformed_dropped += 1,
                }
                Vec::new()
            }
        }
    }

    pub fn trust_view(&self) -> &TrustGraph {
        match self {
            Node::Full(n) => &n.ledger().graph,
            Node::Light(n) => n.local_view(),
        }
    }

    pub fn as_full(&self) -> Option<&FullNode> {
        match self {
            Node::Full(n) => Some(n),
            Node::Light(_) => None,
        }
    }

    pub fn as_full_mut(&mut self) -> Option<&mut FullNode> {
        match self {
            Node::Full(n) => Some(n),
            Node::Light(_) => None,
        }
    }

    pub fn as_light(&self) -> Option<&LightNode> {
        match self {
            Node::Light(n) => Some(n),
            Node::Full(_) => None,
        }
    }

    pub fn as_light_mut(&mut self) -> Option<&mut LightNode> {
        match self {
            Node::Light(n) => Some(n),
            Node::Full(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::provider_by_name;

    fn setup(names: &[&str]) -> (GenesisSetup, Vec<KeyPair>) {
        let provider = provider_by_name("mock").unwrap();
        let keys: Vec<KeyPair> = names
            .iter()
            .enumerate()
            .map(|(i, _)| provider.generate_keypair(&[i as u8 + 1; 32]))
            .collect();
        let validators = names
            .iter()
            .zip(&keys)
            .map(|(n, k)| (n.to_string(), k.public.clone()))
            .collect();
        let allocations = keys.iter().map(|k| (k.public.clone(), 1000)).collect();
        (
            GenesisSetup {
                provider,
                allocations,
                validators,
                fee_params: FeeParams::default(),
                round_ms: 1000,
                global_cap: 6,
            },
            keys,
        )
    }

    #[test]
    fn wire_messages_round_trip() {
        let (genesis, keys) = setup(&["a", "b"]);
        let p = genesis.provider.clone();
        let tx = Transaction::build_signed(
            p.as_ref(),
            &keys[0],
            0,
            1,
            TxPayload::TokenTransfer {
                recipient: keys[1].public.clone(),
                amount: 5,
            },
        );
        let block = genesis.genesis_block();
        let proof = prove_inclusion(p.as_ref(), &block, &block.transactions[0].id).unwrap();
        let messages = vec![
            WireMessage::SubmitTx { tx: tx.clone() },
            WireMessage::NewBlock {
                block: block.clone(),
            },
            WireMessage::Vote {
                height: 3,
                header_digest: Digest([7; 32]),
                voter: keys[0].public.clone(),
                signature: Signature(vec![1, 2, 3]),
            },
            WireMessage::HeaderRequest { from_height: 2 },
            WireMessage::HeaderResponse {
                headers: vec![block.header.clone()],
            },
            WireMessage::EntityQuery {
                anchors: vec![keys[0].public.clone()],
                target: Some(keys[1].public.clone()),
            },
            WireMessage::EntityQuery {
                anchors: vec![],
                target: None,
            },
            WireMessage::EntityResponse {
                entries: vec![DeltaEntry {
                    tx,
                    height: 0,
                    proof,
                }],
                headers: vec![block.header.clone()],
            },
            WireMessage::BlockRequest { from_height: 1 },
            WireMessage::BlockResponse {
                blocks: vec![block],
            },
        ];
        for msg in messages {
            let bytes = msg.encode_canonical();
            let decoded = WireMessage::decode(p.as_ref(), &bytes).unwrap();
            assert_eq!(decoded, msg);
        }
    }

    #[test]
    fn malformed_bytes_dropped_and_counted() {
        let (genesis, keys) = setup(&["a"]);
        let mut node = Node::Full(Box::new(FullNode::new(
            "a",
            keys[0].clone(),
            &genesis,
            vec![],
        )));
        let out = node.handle_raw("x", &[0xff, 0x00, 0x01], 0);
        assert!(out.is_empty());
        assert_eq!(node.as_full().unwrap().malformed_dropped, 1);
    }

    #[test]
    fn solo_validator_commits_immediately() {
        let (genesis, keys) = setup(&["a"]);
        let mut node = FullNode::new("a", keys[0].clone(), &genesis, vec![]);
        assert_eq!(node.height(), 0);
        let out = node.consensus_step(0);
        assert!(out.is_empty()); // no peers to notify
        assert_eq!(node.height(), 1);
        assert_eq!(node.ledger().balance(&keys[0].public), 1010);
    }

    #[test]
    fn duplicate_submission_keeps_single_mempool_entry() {
        let (genesis, keys) = setup(&["a", "b"]);
        let mut node = FullNode::new("a", keys[0].clone(), &genesis, vec![]);
        let tx = Transaction::build_signed(
            genesis.provider.as_ref(),
            &keys[1],
            0,
            1,
            TxPayload::TokenTransfer {
                recipient: keys[0].public.clone(),
                amount: 5,
            },
        );
        node.submit_transaction(tx.clone()).unwrap();
        node.submit_transaction(tx).unwrap();
        assert_eq!(node.mempool_len(), 1);
    }

    #[test]
    fn user_submitted_coinbase_rejected() {
        let (genesis, keys) = setup(&["a"]);
        let mut node = FullNode::new("a", keys[0].clone(), &genesis, vec![]);
        let coinbase =
            Transaction::coinbase(genesis.provider.as_ref(), keys[0].public.clone(), 10);
        assert_eq!(
            node.submit_transaction(coinbase).unwrap_err(),
            TxError::BadSignature
        );
    }

    #[test]
    fn light_node_without_peers_reports_no_peer() {
        let (genesis, keys) = setup(&["a"]);
        let mut light = LightNode::new("d", keys[0].clone(), &genesis, BTreeSet::new(), vec![]);
        let tx = Transaction::build_signed(
            genesis.provider.as_ref(),
            &keys[0],
            0,
            1,
            TxPayload::RevokeEntity,
        );
        assert_eq!(light.submit_transaction(tx).unwrap_err(), NodeError::NoPeer);
        assert_eq!(light.start_refresh(None).unwrap_err(), NodeError::NoPeer);
    }

    #[test]
    fn light_rejects_header_with_broken_parent_link() {
        let (genesis, keys) = setup(&["a"]);
        let mut full = FullNode::new("a", keys[0].clone(), &genesis, vec![]);
        full.consensus_step(0);
        let mut good = full.chain()[1].header.clone();

        let mut light = LightNode::new(
            "d",
            keys[0].clone(),
            &genesis,
            BTreeSet::new(),
            vec!["a".into()],
        );
        good.parent_digest = Digest([9; 32]);
        light.handle_message(
            "a",
            WireMessage::HeaderResponse {
                headers: vec![good],
            },
            0,
        );
        assert_eq!(light.height(), 0);
        assert_eq!(light.malformed_dropped, 1);

        light.handle_message(
            "a",
            WireMessage::HeaderResponse {
                headers: vec![full.chain()[1].header.clone()],
            },
            0,
        );
        assert_eq!(light.height(), 1);
    }

    #[test]
    fn full_node_restart_reproduces_state_digest() {
        let (genesis, keys) = setup(&["a"]);
        let mut node = FullNode::new("a", keys[0].clone(), &genesis, vec![]);
        for round in 0..5 {
            let tx = Transaction::build_signed(
                genesis.provider.as_ref(),
                &keys[0],
                round,
                1,
                TxPayload::TokenTransfer {
                    recipient: keys[0].public.clone(),
                    amount: 1,
                },
            );
            node.submit_transaction(tx).unwrap();
            node.consensus_step(round * 1000);
        }
        let digest_before = node.state_digest();
        let file = node.chain_file_bytes().to_vec();
        let restarted =
            FullNode::restart_from_chain("a", keys[0].clone(), &genesis, vec![], &file).unwrap();
        assert_eq!(restarted.state_digest(), digest_before);
        assert_eq!(restarted.height(), node.height());
    }
}
