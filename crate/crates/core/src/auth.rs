//! Challenge-response authentication bound to the trust graph.
//!
//! The verifier issues a nonce challenge; the target answers with a
//! signature made by its registered authentication key over the nonce and
//! both account identities. Acceptance requires, in order: the response
//! matches an outstanding challenge, it arrived within the ttl, the
//! target's identity-key binding is trusted, and the signature verifies
//! under the authentication key the trust view records for the target.

use rand_core::RngCore;
use thiserror::Error;

use std::collections::BTreeSet;

use crate::codec::Writer;
use crate::crypto::{CryptoProvider, CryptoError, KeyPair, PublicKey, Signature};
use crate::trust_graph::{evaluate_trust, TrustGraph};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Challenge {
    pub nonce: [u8; 32],
    pub verifier_account: PublicKey,
    pub target_account: PublicKey,
    /// Simulated milliseconds.
    pub issued_at: u64,
    pub ttl: u64,
}

impl Challenge {
    /// Bytes the responder signs: nonce, then both identities.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_raw(&self.nonce);
        w.put_public_key(&self.verifier_account);
        w.put_public_key(&self.target_account);
        w.into_bytes()
    }

    pub fn expires_at(&self) -> u64 {
        self.issued_at + self.ttl
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("challenge ttl must be positive")]
    ZeroTtl,
    #[error("crypto provider: {0}")]
    Crypto(#[from] CryptoError),
}

/// Draws a fresh nonce from the caller's seeded stream. Nonce uniqueness
/// within a run is the stream owner's responsibility (one stream per
/// verifier).
pub fn issue_challenge(
    verifier_account: &PublicKey,
    target_account: &PublicKey,
    now: u64,
    ttl: u64,
    rng: &mut impl RngCore,
) -> Result<Challenge, AuthError> {
    if ttl == 0 {
        return Err(AuthError::ZeroTtl);
    }
    let mut nonce = [0u8; 32];
    rng.fill_bytes(&mut nonce);
    Ok(Challenge {
        nonce,
        verifier_account: verifier_account.clone(),
        target_account: target_account.clone(),
        issued_at: now,
        ttl,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthResponse {
    pub challenge: Challenge,
    /// Signature by the responder's authentication key (not its account
    /// key) over the challenge's signing bytes.
    pub responder_auth_sig: Signature,
}

/// Honest responder: signs the challenge with its authentication key.
pub fn respond(
    provider: &dyn CryptoProvider,
    challenge: &Challenge,
    auth_keypair: &KeyPair,
) -> Result<AuthResponse, AuthError> {
    let sig = provider.sign(&auth_keypair.private, &challenge.signing_bytes())?;
    Ok(AuthResponse {
        challenge: challenge.clone(),
        responder_auth_sig: sig,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthReason {
    Ok,
    Untrusted,
    BadSignature,
    Expired,
    WrongTarget,
}

impl AuthReason {
    pub fn name(&self) -> &'static str {
        match self {
            AuthReason::Ok => "ok",
            AuthReason::Untrusted => "untrusted",
            AuthReason::BadSignature => "bad_signature",
            AuthReason::Expired => "expired",
            AuthReason::WrongTarget => "wrong_target",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthDecision {
    pub accepted: bool,
    pub reason: AuthReason,
    /// Witness path from the trust evaluation; empty for anchors.
    pub trust_witness: Option<Vec<PublicKey>>,
}

impl AuthDecision {
    fn reject(reason: AuthReason) -> Self {
        AuthDecision {
            accepted: false,
            reason,
            trust_witness: None,
        }
    }
}

/// Decides a response against the verifier's issued challenge and its
/// current trust view. Checks run in a fixed order so metric attribution
/// is deterministic: challenge match, expiry, trust, then signature; the
/// first failure names the reason.
pub fn verify_response(
    provider: &dyn CryptoProvider,
    issued: &Challenge,
    response: &AuthResponse,
    trust_view: &TrustGraph,
    anchors: &BTreeSet<PublicKey>,
    now: u64,
    global_cap: u8,
) -> AuthDecision {
    if response.challenge != *issued {
        return AuthDecision::reject(AuthReason::WrongTarget);
    }
    if now > issued.expires_at() {
        return AuthDecision::reject(AuthReason::Expired);
    }
    let decision = evaluate_trust(trust_view, anchors, &issued.target_account, global_cap);
    if !decision.trusted {
        return AuthDecision::reject(AuthReason::Untrusted);
    }
    let Some(record) = trust_view.node(&issued.target_account) else {
        // Trusted as a bare anchor but never registered: there is no
        // authentication key on record to verify against.
        return AuthDecision::reject(AuthReason::BadSignature);
    };
    let auth_key = PublicKey(record.auth_public_key.clone());
    if !provider.verify(
        &auth_key,
        &issued.signing_bytes(),
        &response.responder_auth_sig,
    ) {
        return AuthDecision::reject(AuthReason::BadSignature);
    }
    AuthDecision {
        accepted: true,
        reason: AuthReason::Ok,
        trust_witness: Some(decision.witness_path),
    }
}
