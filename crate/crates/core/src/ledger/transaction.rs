//! Signed, fee-bearing transactions and their six payload variants.

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{CryptoProvider, Digest, KeyPair, PublicKey, Signature};
use crate::trust_graph::EntityType;

/// Payload variant; the 1-byte transaction type tag is derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxPayload {
    /// Mints tokens; block reward or genesis allocation. Unsigned.
    Coinbase { recipient: PublicKey, amount: u64 },
    TokenTransfer {
        recipient: PublicKey,
        amount: u64,
    },
    /// Registers an identity and its authentication key, creating a trust
    /// graph node. `possession_sig` is made with the authentication key
    /// over the sender's account key, proving control of both.
    Entity {
        identity_name: String,
        entity_type: EntityType,
        auth_public_key: Vec<u8>,
        possession_sig: Signature,
    },
    /// Destroys the sender's trust graph node and all incident edges.
    RevokeEntity,
    /// Vouches for `subject`, creating or relabeling the directed edge
    /// sender -> subject with the maximal allowed path length.
    Confirmation { subject: PublicKey, max_path_len: u8 },
    /// Withdraws the sender's confirmation of `subject`.
    Revocation { subject: PublicKey },
}

impl TxPayload {
    pub fn tag(&self) -> u8 {
        match self {
            TxPayload::Coinbase { .. } => 0,
            TxPayload::TokenTransfer { .. } => 1,
            TxPayload::Entity { .. } => 2,
            TxPayload::RevokeEntity => 3,
            TxPayload::Confirmation { .. } => 4,
            TxPayload::Revocation { .. } => 5,
        }
    }

    fn encode_into(&self, w: &mut Writer) {
        match self {
            TxPayload::Coinbase { recipient, amount }
            | TxPayload::TokenTransfer { recipient, amount } => {
                w.put_public_key(recipient);
                w.put_u64(*amount);
            }
            TxPayload::Entity {
                identity_name,
                entity_type,
                auth_public_key,
                possession_sig,
            } => {
                w.put_str(identity_name);
                w.put_u8(entity_type.tag());
                w.put_bytes(auth_public_key);
                w.put_signature(possession_sig);
            }
            TxPayload::RevokeEntity => {}
            TxPayload::Confirmation {
                subject,
                max_path_len,
            } => {
                w.put_public_key(subject);
                w.put_u8(*max_path_len);
            }
            TxPayload::Revocation { subject } => {
                w.put_public_key(subject);
            }
        }
    }

    fn decode(tag: u8, r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match tag {
            0 => Ok(TxPayload::Coinbase {
                recipient: r.get_public_key()?,
                amount: r.get_u64()?,
            }),
            1 => Ok(TxPayload::TokenTransfer {
                recipient: r.get_public_key()?,
                amount: r.get_u64()?,
            }),
            2 => {
                let identity_name = r.get_str()?;
                let entity_type = EntityType::from_tag(r.get_u8()?)
                    .ok_or(DecodeError::Invalid { what: "entity type" })?;
                Ok(TxPayload::Entity {
                    identity_name,
                    entity_type,
                    auth_public_key: r.get_bytes()?,
                    possession_sig: r.get_signature()?,
                })
            }
            3 => Ok(TxPayload::RevokeEntity),
            4 => {
                let subject = r.get_public_key()?;
                let max_path_len = r.get_u8()?;
                if max_path_len == 0 {
                    return Err(DecodeError::Invalid {
                        what: "confirmation path length limit",
                    });
                }
                Ok(TxPayload::Confirmation {
                    subject,
                    max_path_len,
                })
            }
            5 => Ok(TxPayload::Revocation {
                subject: r.get_public_key()?,
            }),
            other => Err(DecodeError::UnknownTag {
                what: "transaction payload",
                tag: other,
            }),
        }
    }
}

/// Signed unit of change. The id is the hash of the canonical encoding
/// minus the signature, so it recomputes from content; the signature
/// covers the same bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: Digest,
    /// Absent for coinbase transactions.
    pub sender: Option<PublicKey>,
    pub seq: u64,
    pub fee: u64,
    pub payload: TxPayload,
    pub signature: Signature,
}

impl Transaction {
    pub fn tx_type(&self) -> u8 {
        self.payload.tag()
    }

    /// Canonical encoding minus the signature: what gets hashed and signed.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(self.payload.tag());
        match &self.sender {
            Some(key) => w.put_public_key(key),
            None => w.put_bytes(&[]),
        }
        w.put_u64(self.seq);
        w.put_u64(self.fee);
        self.payload.encode_into(&mut w);
        w.into_bytes()
    }

    pub fn encode_canonical(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_raw(&self.signing_bytes());
        w.put_signature(&self.signature);
        w.into_bytes()
    }

    pub fn decode(provider: &dyn CryptoProvider, r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let tag = r.get_u8()?;
        let sender_bytes = r.get_bytes()?;
        let sender = if sender_bytes.is_empty() {
            None
        } else {
            Some(PublicKey(sender_bytes))
        };
        let seq = r.get_u64()?;
        let fee = r.get_u64()?;
        let payload = TxPayload::decode(tag, r)?;
        let signature = r.get_signature()?;
        let mut tx = Transaction {
            id: Digest::ZERO,
            sender,
            seq,
            fee,
            payload,
            signature,
        };
        tx.id = provider.hash(&tx.signing_bytes());
        Ok(tx)
    }

    /// Builds and signs a transaction with the sender's account key.
    pub fn build_signed(
        provider: &dyn CryptoProvider,
        sender: &KeyPair,
        seq: u64,
        fee: u64,
        payload: TxPayload,
    ) -> Transaction {
        let mut tx = Transaction {
            id: Digest::ZERO,
            sender: Some(sender.public.clone()),
            seq,
            fee,
            payload,
            signature: Signature::empty(),
        };
        let bytes = tx.signing_bytes();
        tx.id = provider.hash(&bytes);
        tx.signature = provider
            .sign(&sender.private, &bytes)
            .expect("signing with a generated key");
        tx
    }

    /// Unsigned minting transaction.
    pub fn coinbase(provider: &dyn CryptoProvider, recipient: PublicKey, amount: u64) -> Transaction {
        let mut tx = Transaction {
            id: Digest::ZERO,
            sender: None,
            seq: 0,
            fee: 0,
            payload: TxPayload::Coinbase { recipient, amount },
            signature: Signature::empty(),
        };
        tx.id = provider.hash(&tx.signing_bytes());
        tx
    }

    /// Structural authenticity: id recomputes from content and the
    /// signature verifies under the sender key. Coinbase transactions must
    /// instead be unsigned, senderless and fee-free.
    pub fn verify_signature(&self, provider: &dyn CryptoProvider) -> bool {
        let bytes = self.signing_bytes();
        if self.id != provider.hash(&bytes) {
            return false;
        }
        if matches!(self.payload, TxPayload::Coinbase { .. }) {
            return self.sender.is_none() && self.signature.is_empty() && self.fee == 0;
        }
        let Some(sender) = &self.sender else {
            return false;
        };
        provider.verify(sender, &bytes, &self.signature)
    }
}
