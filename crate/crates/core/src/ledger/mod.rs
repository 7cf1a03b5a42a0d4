//! Hash-linked block data structure: canonical encodings, Merkle
//! transaction commitments, block construction and validation, inclusion
//! proofs, and the append-only chain persistence format.

mod block;
mod merkle;
mod persist;
mod transaction;

pub use block::{
    build_block, genesis_block, validate_block, validate_proposal, Block, BlockError, BlockHeader,
    QuorumSig,
};
pub use merkle::{merkle_root, prove_inclusion, verify_inclusion, InclusionProof, ProofError, Side};
pub use persist::{
    append_block, chain_file_header, read_chain_file, verify_chain_integrity, ChainFileError,
    ChainIntegrityError, ParsedChain,
};
pub use transaction::{Transaction, TxPayload};
