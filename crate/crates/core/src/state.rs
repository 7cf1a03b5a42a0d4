//! Deterministic account-and-token state machine.
//!
//! Applies the six transaction variants with fee and reservation
//! accounting and keeps the trust graph in lockstep with the reserved
//! token bookkeeping. Fees are burned; coinbase mints. The conservation
//! law `sum(balances) + sum(reservations) = total_minted - total_burned`
//! holds exactly after every applied block.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::Writer;
use crate::crypto::{CryptoProvider, Digest, PublicKey};
use crate::ledger::{Block, Transaction, TxPayload};
use crate::trust_graph::{EntityRecord, TrustGraph};

/// Protocol economics, fixed in the genesis configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeeParams {
    /// Default fee attached by transaction builders.
    pub tx_fee: u64,
    /// Tokens reserved by an entity registration. Must be at least 1.
    pub entity_reserve: u64,
    /// Tokens reserved per confirmation edge. Must be at least 1.
    pub confirmation_reserve: u64,
    /// Amount minted to the proposer by each block's coinbase.
    pub block_reward: u64,
}

impl Default for FeeParams {
    fn default() -> Self {
        FeeParams {
            tx_fee: 1,
            entity_reserve: 5,
            confirmation_reserve: 5,
            block_reward: 10,
        }
    }
}

/// Per-account balances, reservations and replay protection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccountState {
    pub balance: u64,
    /// Tokens locked by the live entity registration; zero iff none.
    pub reserved_entity: u64,
    /// Tokens locked per outgoing confirmation edge, keyed by subject.
    pub reserved_confirmations: BTreeMap<PublicKey, u64>,
    pub has_entity: bool,
    /// Next expected sequence number.
    pub seq: u64,
}

impl AccountState {
    pub fn total_reserved(&self) -> u64 {
        self.reserved_entity + self.reserved_confirmations.values().sum::<u64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("signature or transaction shape invalid")]
    BadSignature,
    #[error("sequence number mismatch (expected {expected}, got {got})")]
    BadSeq { expected: u64, got: u64 },
    #[error("insufficient balance")]
    InsufficientBalance,
    #[error("account already has a live entity registration")]
    DuplicateEntity,
    #[error("account has no live entity registration")]
    NoEntity,
    #[error("confirmation subject is not a registered entity")]
    UnknownSubject,
    #[error("no confirmation edge from sender to subject")]
    NoSuchEdge,
    #[error("an account cannot confirm itself")]
    SelfConfirmation,
    #[error("authentication key possession proof invalid")]
    BadPossessionProof,
}

impl TxError {
    /// Stable snake_case name, used for metric attribution.
    pub fn name(&self) -> &'static str {
        match self {
            TxError::BadSignature => "bad_signature",
            TxError::BadSeq { .. } => "bad_seq",
            TxError::InsufficientBalance => "insufficient_balance",
            TxError::DuplicateEntity => "duplicate_entity",
            TxError::NoEntity => "no_entity",
            TxError::UnknownSubject => "unknown_subject",
            TxError::NoSuchEdge => "no_such_edge",
            TxError::SelfConfirmation => "self_confirmation",
            TxError::BadPossessionProof => "bad_possession_proof",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockApplyError {
    #[error("coinbase missing from first position or present elsewhere")]
    InvalidCoinbasePosition,
    #[error("coinbase amount {got} does not match block reward {expected}")]
    BadCoinbaseAmount { expected: u64, got: u64 },
    #[error("transaction {index}: {source}")]
    Tx { index: usize, source: TxError },
}

/// Full replicated state: accounts, the trust graph derived from them,
/// and the mint/burn totals backing the conservation law.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LedgerState {
    pub accounts: BTreeMap<PublicKey, AccountState>,
    pub graph: TrustGraph,
    pub total_minted: u64,
    pub total_burned_fees: u64,
}

/// Pays `fee` preferring a reservation pot, overflowing into the balance.
/// Returns the unspent remainder of the reservation, which the caller
/// credits back to the balance. Errors when the fee cannot be covered.
fn settle_fee_from_reservation(
    reservation: u64,
    balance: &mut u64,
    fee: u64,
) -> Result<u64, TxError> {
    if fee <= reservation {
        Ok(reservation - fee)
    } else {
        let shortfall = fee - reservation;
        if *balance < shortfall {
            return Err(TxError::InsufficientBalance);
        }
        *balance -= shortfall;
        Ok(0)
    }
}

impl LedgerState {
    pub fn new() -> Self {
        LedgerState::default()
    }

    /// Builds the state at height 0. Every genesis transaction must be a
    /// coinbase allocation.
    pub fn from_genesis_block(
        provider: &dyn CryptoProvider,
        genesis: &Block,
        params: &FeeParams,
    ) -> Result<Self, BlockApplyError> {
        let mut state = LedgerState::new();
        for (index, tx) in genesis.transactions.iter().enumerate() {
            if !matches!(tx.payload, TxPayload::Coinbase { .. }) {
                return Err(BlockApplyError::InvalidCoinbasePosition);
            }
            state = state
                .apply_transaction(provider, tx, params)
                .map_err(|source| BlockApplyError::Tx { index, source })?;
        }
        Ok(state)
    }

    pub fn account(&self, key: &PublicKey) -> Option<&AccountState> {
        self.accounts.get(key)
    }

    pub fn balance(&self, key: &PublicKey) -> u64 {
        self.accounts.get(key).map(|a| a.balance).unwrap_or(0)
    }

    pub fn next_seq(&self, key: &PublicKey) -> u64 {
        self.accounts.get(key).map(|a| a.seq).unwrap_or(0)
    }

    /// Applies one transaction, all-or-nothing: on any error the receiver
    /// is left untouched and no partial effect escapes.
    pub fn apply_transaction(
        &self,
        provider: &dyn CryptoProvider,
        tx: &Transaction,
        params: &FeeParams,
    ) -> Result<LedgerState, TxError> {
        if !tx.verify_signature(provider) {
            return Err(TxError::BadSignature);
        }

        let mut next = self.clone();

        if let TxPayload::Coinbase { recipient, amount } = &tx.payload {
            let account = next.accounts.entry(recipient.clone()).or_default();
            account.balance = account
                .balance
                .checked_add(*amount)
                .ok_or(TxError::InsufficientBalance)?;
            next.total_minted = next
                .total_minted
                .checked_add(*amount)
                .ok_or(TxError::InsufficientBalance)?;
            return Ok(next);
        }

        let sender = tx.sender.clone().ok_or(TxError::BadSignature)?;
        let expected_seq = next.next_seq(&sender);
        if tx.seq != expected_seq {
            return Err(TxError::BadSeq {
                expected: expected_seq,
                got: tx.seq,
            });
        }

        match &tx.payload {
            TxPayload::Coinbase { .. } => unreachable!("handled above"),

            TxPayload::TokenTransfer { recipient, amount } => {
                let cost = amount
                    .checked_add(tx.fee)
                    .ok_or(TxError::InsufficientBalance)?;
                let sender_account = next.accounts.entry(sender.clone()).or_default();
                if sender_account.balance < cost {
                    return Err(TxError::InsufficientBalance);
                }
                sender_account.balance -= cost;
                let recipient_account = next.accounts.entry(recipient.clone()).or_default();
                recipient_account.balance = recipient_account
                    .balance
                    .checked_add(*amount)
                    .ok_or(TxError::InsufficientBalance)?;
            }

            TxPayload::Entity {
                identity_name,
                entity_type,
                auth_public_key,
                possession_sig,
            } => {
                if next
                    .accounts
                    .get(&sender)
                    .map(|a| a.has_entity)
                    .unwrap_or(false)
                {
                    return Err(TxError::DuplicateEntity);
                }
                if auth_public_key.is_empty()
                    || !provider.verify(
                        &PublicKey(auth_public_key.clone()),
                        sender.as_bytes(),
                        possession_sig,
                    )
                {
                    return Err(TxError::BadPossessionProof);
                }
                let cost = tx
                    .fee
                    .checked_add(params.entity_reserve)
                    .ok_or(TxError::InsufficientBalance)?;
                let account = next.accounts.entry(sender.clone()).or_default();
                if account.balance < cost {
                    return Err(TxError::InsufficientBalance);
                }
                account.balance -= cost;
                account.reserved_entity = params.entity_reserve;
                account.has_entity = true;
                next.graph
                    .add_node(EntityRecord {
                        account: sender.clone(),
                        auth_public_key: auth_public_key.clone(),
                        identity_name: identity_name.clone(),
                        entity_type: *entity_type,
                    })
                    .expect("has_entity tracked the graph node");
            }

            TxPayload::RevokeEntity => {
                let account = next.accounts.entry(sender.clone()).or_default();
                if !account.has_entity {
                    return Err(TxError::NoEntity);
                }
                let refund =
                    settle_fee_from_reservation(account.reserved_entity, &mut account.balance, tx.fee)?;
                account.balance += refund;
                account.reserved_entity = 0;
                account.has_entity = false;

                // The sender's own outgoing reservations come back to it...
                let own_refund: u64 = account.reserved_confirmations.values().sum();
                account.balance += own_refund;
                account.reserved_confirmations.clear();

                // ...and every account holding an edge toward the destroyed
                // node gets its reservation back in full.
                let holders: Vec<PublicKey> = next
                    .graph
                    .in_edges(&sender)
                    .into_iter()
                    .map(|(from, _)| from)
                    .collect();
                for holder in holders {
                    let holder_account = next
                        .accounts
                        .get_mut(&holder)
                        .expect("edge owner has an account");
                    if let Some(reserved) = holder_account.reserved_confirmations.remove(&sender) {
                        holder_account.balance += reserved;
                    }
                }

                next.graph
                    .remove_node(&sender)
                    .expect("has_entity tracked the graph node");
            }

            TxPayload::Confirmation {
                subject,
                max_path_len,
            } => {
                if *subject == sender {
                    return Err(TxError::SelfConfirmation);
                }
                if !next
                    .accounts
                    .get(&sender)
                    .map(|a| a.has_entity)
                    .unwrap_or(false)
                {
                    return Err(TxError::NoEntity);
                }
                if !next
                    .accounts
                    .get(subject)
                    .map(|a| a.has_entity)
                    .unwrap_or(false)
                {
                    return Err(TxError::UnknownSubject);
                }
                let edge_exists = next.graph.edge(&sender, subject).is_some();
                let cost = if edge_exists {
                    tx.fee
                } else {
                    tx.fee
                        .checked_add(params.confirmation_reserve)
                        .ok_or(TxError::InsufficientBalance)?
                };
                let account = next.accounts.entry(sender.clone()).or_default();
                if account.balance < cost {
                    return Err(TxError::InsufficientBalance);
                }
                account.balance -= cost;
                if !edge_exists {
                    account
                        .reserved_confirmations
                        .insert(subject.clone(), params.confirmation_reserve);
                }
                next.graph
                    .set_edge(&sender, subject, *max_path_len)
                    .expect("both endpoints registered");
            }

            TxPayload::Revocation { subject } => {
                if next.graph.edge(&sender, subject).is_none() {
                    return Err(TxError::NoSuchEdge);
                }
                let account = next.accounts.entry(sender.clone()).or_default();
                let reservation = account
                    .reserved_confirmations
                    .get(subject)
                    .copied()
                    .expect("edge carries a reservation");
                let refund =
                    settle_fee_from_reservation(reservation, &mut account.balance, tx.fee)?;
                account.balance += refund;
                account.reserved_confirmations.remove(subject);
                next.graph
                    .remove_edge(&sender, subject)
                    .expect("edge presence checked");
            }
        }

        next.total_burned_fees += tx.fee;
        let sender_account = next.accounts.entry(sender).or_default();
        sender_account.seq += 1;
        Ok(next)
    }

    /// True iff `apply_transaction` would succeed; never mutates anything.
    pub fn validate_candidate(
        &self,
        provider: &dyn CryptoProvider,
        tx: &Transaction,
        params: &FeeParams,
    ) -> Result<(), TxError> {
        self.apply_transaction(provider, tx, params).map(|_| ())
    }

    /// Applies a structurally valid block. Beyond genesis, the first
    /// transaction must be the coinbase minting exactly the block reward
    /// and no other coinbase may appear. Any transaction error aborts the
    /// whole block.
    pub fn apply_block(
        &self,
        provider: &dyn CryptoProvider,
        block: &Block,
        params: &FeeParams,
    ) -> Result<LedgerState, BlockApplyError> {
        if block.header.height == 0 {
            return LedgerState::from_genesis_block(provider, block, params);
        }

        match block.transactions.first().map(|tx| &tx.payload) {
            Some(TxPayload::Coinbase { amount, .. }) => {
                if *amount != params.block_reward {
                    return Err(BlockApplyError::BadCoinbaseAmount {
                        expected: params.block_reward,
                        got: *amount,
                    });
                }
            }
            _ => return Err(BlockApplyError::InvalidCoinbasePosition),
        }

        let mut state = self.clone();
        for (index, tx) in block.transactions.iter().enumerate() {
            if index > 0 && matches!(tx.payload, TxPayload::Coinbase { .. }) {
                return Err(BlockApplyError::InvalidCoinbasePosition);
            }
            state = state
                .apply_transaction(provider, tx, params)
                .map_err(|source| BlockApplyError::Tx { index, source })?;
        }
        debug_assert!(state.conservation_holds(), "token conservation violated");
        debug_assert!(
            state.graph_reservations_consistent(),
            "trust graph and reservations diverged"
        );
        Ok(state)
    }

    /// Replays a whole chain from its genesis block.
    pub fn replay_chain(
        provider: &dyn CryptoProvider,
        blocks: &[Block],
        params: &FeeParams,
    ) -> Result<LedgerState, BlockApplyError> {
        let mut state = LedgerState::new();
        for block in blocks {
            state = state.apply_block(provider, block, params)?;
        }
        Ok(state)
    }

    /// Canonical encoding: accounts sorted by key bytes, graph nodes and
    /// edges sorted lexicographically, then the mint/burn totals.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_len(self.accounts.len());
        for (key, account) in &self.accounts {
            w.put_public_key(key);
            w.put_u64(account.balance);
            w.put_u64(account.reserved_entity);
            w.put_len(account.reserved_confirmations.len());
            for (subject, amount) in &account.reserved_confirmations {
                w.put_public_key(subject);
                w.put_u64(*amount);
            }
            w.put_bool(account.has_entity);
            w.put_u64(account.seq);
        }
        let nodes: Vec<&EntityRecord> = self.graph.nodes().collect();
        w.put_len(nodes.len());
        for record in nodes {
            w.put_public_key(&record.account);
            w.put_bytes(&record.auth_public_key);
            w.put_str(&record.identity_name);
            w.put_u8(record.entity_type.tag());
        }
        let edges: Vec<(&PublicKey, &PublicKey, u8)> = self.graph.edges().collect();
        w.put_len(edges.len());
        for (from, to, limit) in edges {
            w.put_public_key(from);
            w.put_public_key(to);
            w.put_u8(limit);
        }
        w.put_u64(self.total_minted);
        w.put_u64(self.total_burned_fees);
        w.into_bytes()
    }

    /// State digest used to compare replicas bit-exactly.
    pub fn digest(&self, provider: &dyn CryptoProvider) -> Digest {
        provider.hash(&self.canonical_bytes())
    }

    fn conservation_holds(&self) -> bool {
        let mut circulating: u64 = 0;
        for account in self.accounts.values() {
            circulating += account.balance + account.total_reserved();
        }
        circulating == self.total_minted - self.total_burned_fees
    }

    fn graph_reservations_consistent(&self) -> bool {
        let mut reserved_edges = Vec::new();
        for (owner, account) in &self.accounts {
            for subject in account.reserved_confirmations.keys() {
                reserved_edges.push((owner.clone(), subject.clone()));
            }
        }
        let mut graph_edges: Vec<(PublicKey, PublicKey)> = self
            .graph
            .edges()
            .map(|(f, t, _)| (f.clone(), t.clone()))
            .collect();
        reserved_edges.sort();
        graph_edges.sort();
        reserved_edges == graph_edges
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{KeyPair, MockProvider};
    use crate::ledger::genesis_block;
    use crate::trust_graph::EntityType;

    fn provider() -> MockProvider {
        MockProvider
    }

    fn keys(fill: u8) -> KeyPair {
        provider().generate_keypair(&[fill; 32])
    }

    fn auth_keys(fill: u8) -> KeyPair {
        provider().generate_keypair(&[fill ^ 0xaa; 32])
    }

    fn entity_tx(account: &KeyPair, seq: u64, fee: u64) -> Transaction {
        let p = provider();
        let auth = auth_keys(account.public.0[0]);
        let possession = p.sign(&auth.private, account.public.as_bytes()).unwrap();
        Transaction::build_signed(
            &p,
            account,
            seq,
            fee,
            TxPayload::Entity {
                identity_name: format!("e{}", account.public.0[0]),
                entity_type: EntityType::Drone,
                auth_public_key: auth.public.0.clone(),
                possession_sig: possession,
            },
        )
    }

    fn genesis_state(allocs: &[(u8, u64)], params: &FeeParams) -> LedgerState {
        let p = provider();
        let allocations: Vec<(PublicKey, u64)> = allocs
            .iter()
            .map(|&(fill, amount)| (keys(fill).public, amount))
            .collect();
        let block = genesis_block(&p, &allocations);
        LedgerState::from_genesis_block(&p, &block, params).unwrap()
    }

    #[test]
    fn second_entity_registration_rejected() {
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let state = genesis_state(&[(1, 100)], &params);
        let state = state
            .apply_transaction(&p, &entity_tx(&a, 0, 1), &params)
            .unwrap();
        let err = state
            .apply_transaction(&p, &entity_tx(&a, 1, 1), &params)
            .unwrap_err();
        assert_eq!(err, TxError::DuplicateEntity);
    }

    #[test]
    fn reregistration_after_revoke_is_allowed() {
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let state = genesis_state(&[(1, 100)], &params);
        let state = state
            .apply_transaction(&p, &entity_tx(&a, 0, 1), &params)
            .unwrap();
        let revoke = Transaction::build_signed(&p, &a, 1, 1, TxPayload::RevokeEntity);
        let state = state.apply_transaction(&p, &revoke, &params).unwrap();
        assert!(!state.account(&a.public).unwrap().has_entity);
        let state = state
            .apply_transaction(&p, &entity_tx(&a, 2, 1), &params)
            .unwrap();
        assert!(state.account(&a.public).unwrap().has_entity);
    }

    #[test]
    fn revocation_of_missing_edge_rejected() {
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let state = genesis_state(&[(1, 100), (2, 100)], &params);
        let state = state
            .apply_transaction(&p, &entity_tx(&a, 0, 1), &params)
            .unwrap();
        let revoke = Transaction::build_signed(
            &p,
            &a,
            1,
            1,
            TxPayload::Revocation {
                subject: keys(2).public,
            },
        );
        assert_eq!(
            state.apply_transaction(&p, &revoke, &params).unwrap_err(),
            TxError::NoSuchEdge
        );
    }

    #[test]
    fn entity_then_revoke_fee_accounting_round_trip() {
        // balance 10, Entity (fee 1, reserve 5), RevokeEntity (fee 1):
        // 10 - 1 - 5 + (5 - 1) = 8 with the reservation released, and
        // conservation requires it: 10 minted - 2 burned = 8 circulating.
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let state = genesis_state(&[(1, 10)], &params);
        let state = state
            .apply_transaction(&p, &entity_tx(&a, 0, 1), &params)
            .unwrap();
        assert_eq!(state.balance(&a.public), 4);
        assert_eq!(state.account(&a.public).unwrap().reserved_entity, 5);

        let revoke = Transaction::build_signed(&p, &a, 1, 1, TxPayload::RevokeEntity);
        let state = state.apply_transaction(&p, &revoke, &params).unwrap();
        assert_eq!(state.balance(&a.public), 8);
        assert_eq!(state.account(&a.public).unwrap().reserved_entity, 0);
        assert_eq!(state.total_burned_fees, 2);
        assert_eq!(state.total_minted, 10);
    }

    #[test]
    fn confirmation_update_replaces_limit_without_new_reservation() {
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let b = keys(2);
        let mut state = genesis_state(&[(1, 100), (2, 100)], &params);
        state = state
            .apply_transaction(&p, &entity_tx(&a, 0, 1), &params)
            .unwrap();
        state = state
            .apply_transaction(&p, &entity_tx(&b, 0, 1), &params)
            .unwrap();

        let confirm = |seq, limit| {
            Transaction::build_signed(
                &p,
                &a,
                seq,
                1,
                TxPayload::Confirmation {
                    subject: b.public.clone(),
                    max_path_len: limit,
                },
            )
        };
        let state1 = state.apply_transaction(&p, &confirm(1, 2), &params).unwrap();
        let balance_after_create = state1.balance(&a.public);
        assert_eq!(
            state1
                .account(&a.public)
                .unwrap()
                .reserved_confirmations
                .get(&b.public),
            Some(&5)
        );
        assert_eq!(state1.graph.edge(&a.public, &b.public), Some(2));

        let state2 = state1.apply_transaction(&p, &confirm(2, 4), &params).unwrap();
        assert_eq!(state2.graph.edge(&a.public, &b.public), Some(4));
        assert_eq!(state2.balance(&a.public), balance_after_create - 1);
        assert_eq!(
            state2
                .account(&a.public)
                .unwrap()
                .reserved_confirmations
                .get(&b.public),
            Some(&5)
        );
    }

    #[test]
    fn revoke_entity_refunds_third_party_edge_reservations() {
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let b = keys(2);
        let mut state = genesis_state(&[(1, 100), (2, 100)], &params);
        state = state
            .apply_transaction(&p, &entity_tx(&a, 0, 1), &params)
            .unwrap();
        state = state
            .apply_transaction(&p, &entity_tx(&b, 0, 1), &params)
            .unwrap();
        // b confirms a, reserving 5 of b's tokens
        let confirm = Transaction::build_signed(
            &p,
            &b,
            1,
            1,
            TxPayload::Confirmation {
                subject: a.public.clone(),
                max_path_len: 3,
            },
        );
        state = state.apply_transaction(&p, &confirm, &params).unwrap();
        let b_balance_before = state.balance(&b.public);

        // a revokes its entity; b's reservation must come back in full
        let revoke = Transaction::build_signed(&p, &a, 1, 1, TxPayload::RevokeEntity);
        state = state.apply_transaction(&p, &revoke, &params).unwrap();
        assert_eq!(state.balance(&b.public), b_balance_before + 5);
        assert!(state
            .account(&b.public)
            .unwrap()
            .reserved_confirmations
            .is_empty());
        assert_eq!(state.graph.edge_count(), 0);
        assert!(!state.graph.contains_node(&a.public));
    }

    #[test]
    fn sequence_gap_rejected() {
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let state = genesis_state(&[(1, 100)], &params);
        let tx = Transaction::build_signed(
            &p,
            &a,
            1, // expected 0
            1,
            TxPayload::TokenTransfer {
                recipient: keys(2).public,
                amount: 1,
            },
        );
        assert_eq!(
            state.apply_transaction(&p, &tx, &params).unwrap_err(),
            TxError::BadSeq {
                expected: 0,
                got: 1
            }
        );
    }

    #[test]
    fn transfer_of_whole_balance_with_fee_rejected() {
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let state = genesis_state(&[(1, 50)], &params);
        let tx = Transaction::build_signed(
            &p,
            &a,
            0,
            1,
            TxPayload::TokenTransfer {
                recipient: keys(2).public,
                amount: 50,
            },
        );
        assert_eq!(
            state.apply_transaction(&p, &tx, &params).unwrap_err(),
            TxError::InsufficientBalance
        );
    }

    #[test]
    fn failed_transaction_leaves_state_digest_unchanged() {
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let state = genesis_state(&[(1, 50)], &params);
        let before = state.digest(&p);
        let tx = Transaction::build_signed(
            &p,
            &a,
            0,
            1,
            TxPayload::TokenTransfer {
                recipient: keys(2).public,
                amount: 50,
            },
        );
        assert!(state.apply_transaction(&p, &tx, &params).is_err());
        assert_eq!(state.digest(&p), before);
    }

    #[test]
    fn validate_candidate_matches_apply() {
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let state = genesis_state(&[(1, 50)], &params);
        let good = Transaction::build_signed(
            &p,
            &a,
            0,
            1,
            TxPayload::TokenTransfer {
                recipient: keys(2).public,
                amount: 5,
            },
        );
        state.validate_candidate(&p, &good, &params).unwrap();
        state.apply_transaction(&p, &good, &params).unwrap();

        let bad = Transaction::build_signed(&p, &a, 0, 1, TxPayload::RevokeEntity);
        assert_eq!(
            state.validate_candidate(&p, &bad, &params).unwrap_err(),
            state.apply_transaction(&p, &bad, &params).unwrap_err()
        );
    }

    #[test]
    fn possession_proof_with_account_key_rejected() {
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let state = genesis_state(&[(1, 100)], &params);
        // signs possession with the ACCOUNT key instead of the auth key
        let possession = p.sign(&a.private, a.public.as_bytes()).unwrap();
        let tx = Transaction::build_signed(
            &p,
            &a,
            0,
            1,
            TxPayload::Entity {
                identity_name: "bad".into(),
                entity_type: EntityType::Drone,
                auth_public_key: auth_keys(1).public.0.clone(),
                possession_sig: possession,
            },
        );
        assert_eq!(
            state.apply_transaction(&p, &tx, &params).unwrap_err(),
            TxError::BadPossessionProof
        );
    }

    #[test]
    fn confirmation_preconditions() {
        let p = provider();
        let params = FeeParams::default();
        let a = keys(1);
        let b = keys(2);
        let state = genesis_state(&[(1, 100), (2, 100)], &params);

        let confirm_self = Transaction::build_signed(
            &p,
            &a,
            0,
            1,
            TxPayload::Confirmation {
                subject: a.public.clone(),
                max_path_len: 1,
            },
        );
        assert_eq!(
            state.apply_transaction(&p, &confirm_self, &params).unwrap_err(),
            TxError::SelfConfirmation
        );

        let confirm_b = Transaction::build_signed(
            &p,
            &a,
            0,
            1,
            TxPayload::Confirmation {
                subject: b.public.clone(),
                max_path_len: 1,
            },
        );
        // sender not registered
        assert_eq!(
            state.apply_transaction(&p, &confirm_b, &params).unwrap_err(),
            TxError::NoEntity
        );

        let state = state
            .apply_transaction(&p, &entity_tx(&a, 0, 1), &params)
            .unwrap();
        let confirm_b = Transaction::build_signed(
            &p,
            &a,
            1,
            1,
            TxPayload::Confirmation {
                subject: b.public.clone(),
                max_path_len: 1,
            },
        );
        // subject not registered
        assert_eq!(
            state.apply_transaction(&p, &confirm_b, &params).unwrap_err(),
            TxError::UnknownSubject
        );
    }

    #[test]
    fn block_with_only_coinbase_mints_reward_to_proposer() {
        let p = provider();
        let params = FeeParams::default();
        let proposer = keys(7);
        let state = genesis_state(&[], &params);
        let genesis = genesis_block(&p, &[]);
        let block = crate::ledger::build_block(
            &p,
            &genesis.header,
            vec![Transaction::coinbase(&p, proposer.public.clone(), params.block_reward)],
            &proposer,
            1,
        )
        .unwrap();
        let next = state.apply_block(&p, &block, &params).unwrap();
        assert_eq!(next.balance(&proposer.public), params.block_reward);
        assert_eq!(next.total_minted, params.block_reward);
    }

    #[test]
    fn wrong_reward_and_misplaced_coinbase_rejected() {
        let p = provider();
        let params = FeeParams::default();
        let proposer = keys(7);
        let state = genesis_state(&[], &params);
        let genesis = genesis_block(&p, &[]);

        let wrong_amount = crate::ledger::build_block(
            &p,
            &genesis.header,
            vec![Transaction::coinbase(&p, proposer.public.clone(), 99)],
            &proposer,
            1,
        )
        .unwrap();
        assert_eq!(
            state.apply_block(&p, &wrong_amount, &params).unwrap_err(),
            BlockApplyError::BadCoinbaseAmount {
                expected: 10,
                got: 99
            }
        );

        let no_coinbase = crate::ledger::build_block(&p, &genesis.header, vec![], &proposer, 1).unwrap();
        assert_eq!(
            state.apply_block(&p, &no_coinbase, &params).unwrap_err(),
            BlockApplyError::InvalidCoinbasePosition
        );

        let two_coinbase = crate::ledger::build_block(
            &p,
            &genesis.header,
            vec![
                Transaction::coinbase(&p, proposer.public.clone(), params.block_reward),
                Transaction::coinbase(&p, keys(8).public, params.block_reward),
            ],
            &proposer,
            1,
        )
        .unwrap();
        assert_eq!(
            state.apply_block(&p, &two_coinbase, &params).unwrap_err(),
            BlockApplyError::InvalidCoinbasePosition
        );
    }

    #[test]
    fn replaying_a_chain_twice_is_bit_identical() {
        let p = provider();
        let params = FeeParams::default();
        let proposer = keys(7);
        let a = keys(1);
        let genesis = genesis_block(&p, &[(a.public.clone(), 100)]);
        let tx = Transaction::build_signed(
            &p,
            &a,
            0,
            1,
            TxPayload::TokenTransfer {
                recipient: keys(2).public,
                amount: 5,
            },
        );
        let block = crate::ledger::build_block(
            &p,
            &genesis.header,
            vec![
                Transaction::coinbase(&p, proposer.public.clone(), params.block_reward),
                tx,
            ],
            &proposer,
            1,
        )
        .unwrap();
        let chain = vec![genesis, block];
        let s1 = LedgerState::replay_chain(&p, &chain, &params).unwrap();
        let s2 = LedgerState::replay_chain(&p, &chain, &params).unwrap();
        assert_eq!(s1.canonical_bytes(), s2.canonical_bytes());
        assert_eq!(s1.digest(&p), s2.digest(&p));
    }
}
