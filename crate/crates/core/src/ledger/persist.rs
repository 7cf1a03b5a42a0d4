//! Append-only chain persistence: a self-describing file header followed
//! by length-prefixed canonical block encodings. Re-reading reproduces
//! every digest bit-exactly. The file header carries its own checksum so
//! that tampering with the provider name or fee parameters is detected
//! just like tampering with a block.

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{provider_by_name, CryptoProvider, CryptoError};
use crate::state::FeeParams;

use super::block::Block;

pub const CHAIN_MAGIC: &[u8; 8] = b"DRNCHAIN";
pub const CHAIN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainFileError {
    #[error("not a chain file (bad magic)")]
    BadMagic,
    #[error("unsupported chain file version {0}")]
    BadVersion(u32),
    #[error("file header checksum mismatch")]
    BadChecksum,
    #[error("crypto provider: {0}")]
    Crypto(#[from] CryptoError),
    #[error("block {index}: {source}")]
    BadBlock { index: usize, source: DecodeError },
    #[error("truncated file at block {0}")]
    Truncated(usize),
}

/// Serialized file header for a new chain file.
pub fn chain_file_header(provider: &dyn CryptoProvider, params: &FeeParams) -> Vec<u8> {
    let mut w = Writer::new();
    w.put_raw(CHAIN_MAGIC);
    w.put_raw(&CHAIN_VERSION.to_be_bytes());
    w.put_bytes(provider.name().as_bytes());
    w.put_u64(params.tx_fee);
    w.put_u64(params.entity_reserve);
    w.put_u64(params.confirmation_reserve);
    w.put_u64(params.block_reward);
    let checksum = provider.hash(w.peek());
    let mut bytes = w.into_bytes();
    bytes.extend_from_slice(&checksum.0);
    bytes
}

/// Appends one block as a length-prefixed canonical encoding.
pub fn append_block(buf: &mut Vec<u8>, block: &Block) {
    let encoded = block.encode_canonical();
    buf.extend_from_slice(&(encoded.len() as u32).to_be_bytes());
    buf.extend_from_slice(&encoded);
}

/// Fully parsed chain file.
#[derive(Debug)]
pub struct ParsedChain {
    pub provider_name: String,
    pub fee_params: FeeParams,
    pub blocks: Vec<Block>,
}

/// Parses and checksums the file header, resolves the provider, then
/// decodes every block strictly (each block must consume its slice
/// exactly). Integrity of hash links is the caller's concern.
pub fn read_chain_file(bytes: &[u8]) -> Result<ParsedChain, ChainFileError> {
    let mut r = Reader::new(bytes);
    let magic = take_fixed::<8>(&mut r).ok_or(ChainFileError::BadMagic)?;
    if &magic != CHAIN_MAGIC {
        return Err(ChainFileError::BadMagic);
    }
    let version_bytes = take_fixed::<4>(&mut r).ok_or(ChainFileError::BadMagic)?;
    let version = u32::from_be_bytes(version_bytes);
    if version != CHAIN_VERSION {
        return Err(ChainFileError::BadVersion(version));
    }
    let provider_name = r
        .get_str()
        .map_err(|_| ChainFileError::BadChecksum)?;
    let tx_fee = r.get_u64().map_err(|_| ChainFileError::BadChecksum)?;
    let entity_reserve = r.get_u64().map_err(|_| ChainFileError::BadChecksum)?;
    let confirmation_reserve = r.get_u64().map_err(|_| ChainFileError::BadChecksum)?;
    let block_reward = r.get_u64().map_err(|_| ChainFileError::BadChecksum)?;
    let fee_params = FeeParams {
        tx_fee,
        entity_reserve,
        confirmation_reserve,
        block_reward,
    };
    let provider = provider_by_name(&provider_name)?;
    let header_len = bytes.len() - r.remaining();
    let checksum = r.get_digest().map_err(|_| ChainFileError::BadChecksum)?;
    if provider.hash(&bytes[..header_len]) != checksum {
        return Err(ChainFileError::BadChecksum);
    }

    let mut blocks = Vec::new();
    while !r.is_empty() {
        let index = blocks.len();
        let block_bytes = r
            .get_bytes()
            .map_err(|_| ChainFileError::Truncated(index))?;
        let mut br = Reader::new(&block_bytes);
        let block = Block::decode(provider.as_ref(), &mut br)
            .and_then(|b| {
                br.finish()?;
                Ok(b)
            })
            .map_err(|source| ChainFileError::BadBlock { index, source })?;
        blocks.push(block);
    }
    Ok(ParsedChain {
        provider_name,
        fee_params,
        blocks,
    })
}

fn take_fixed<const N: usize>(r: &mut Reader<'_>) -> Option<[u8; N]> {
    let mut out = [0u8; N];
    for byte in &mut out {
        *byte = r.get_u8().ok()?;
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("block {height}: {detail}")]
pub struct ChainIntegrityError {
    pub height: u64,
    pub detail: String,
}

/// Offline audit of a decoded chain: heights, hash links, commitments,
/// header digests, transaction and certificate signatures. Quorum
/// fractions need the genesis validator set and are checked online.
pub fn verify_chain_integrity(
    provider: &dyn CryptoProvider,
    blocks: &[Block],
) -> Result<(), ChainIntegrityError> {
    use std::collections::BTreeSet;

    let bad = |height: u64, detail: &str| ChainIntegrityError {
        height,
        detail: detail.to_string(),
    };
    for (i, block) in blocks.iter().enumerate() {
        let height = i as u64;
        let header = &block.header;
        if header.height != height {
            return Err(bad(height, "height does not match file position"));
        }
        if i == 0 {
            if header.parent_digest != crate::crypto::Digest::ZERO {
                return Err(bad(height, "genesis parent digest must be zero"));
            }
        } else if header.parent_digest != blocks[i - 1].header.header_digest {
            return Err(bad(height, "parent link broken"));
        }
        let mut seen = BTreeSet::new();
        for tx in &block.transactions {
            if !seen.insert(tx.id) {
                return Err(bad(height, "duplicate transaction id"));
            }
            if !tx.verify_signature(provider) {
                return Err(bad(height, "transaction signature invalid"));
            }
        }
        let ids: Vec<crate::crypto::Digest> = block.transactions.iter().map(|tx| tx.id).collect();
        if super::merkle::merkle_root(provider, &ids) != header.tx_commitment {
            return Err(bad(height, "transaction commitment mismatch"));
        }
        if header.compute_digest(provider) != header.header_digest {
            return Err(bad(height, "header digest mismatch"));
        }
        let vote_bytes = header.signing_bytes();
        let mut signers = BTreeSet::new();
        for qs in &header.quorum_cert {
            if !signers.insert(qs.validator.clone()) {
                return Err(bad(height, "duplicate quorum signer"));
            }
            if !provider.verify(&qs.validator, &vote_bytes, &qs.signature) {
                return Err(bad(height, "quorum signature invalid"));
            }
        }
    }
    Ok(())
}
