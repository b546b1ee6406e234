// Licensed under the Apache-2.0 license

//! Fixed primitive suite shared by every party.
//!
//! SHA3-384 for all digests, AES-256-GCM for authenticated encryption,
//! Ed25519 signatures and X25519 key agreement. Asymmetric keys are
//! single 32-byte Ed25519 seeds; the key-agreement role uses the same
//! key mapped onto the Montgomery curve, so one public encoding serves
//! as `PK_USER`, `PK_DEV` and `PK_TTP` in both roles.

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::RngCore;
use sha3::{Digest as _, Sha3_384};
use thiserror::Error;
use x25519_dalek::{PublicKey as XPublic, StaticSecret};

pub const DIGEST_LEN: usize = 48;
pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const PUBLIC_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

/// Label used by [`pke_seal`] / [`pke_open`] key derivation.
pub const PKE_LABEL: &[u8] = b"RCTEE-PKE-V1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("authentication failed")]
    AuthFail,
    #[error("invalid public key encoding")]
    BadPoint,
    #[error("drbg seed must not be empty")]
    EmptySeed,
}

/// A SHA3-384 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Digest)
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Digest({})", hex(&self.0))
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// 256-bit symmetric key with a short context label (for diagnostics only;
/// the label never enters any computation).
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey {
    key: [u8; KEY_LEN],
    label: Vec<u8>,
}

impl SymmetricKey {
    pub fn new(key: [u8; KEY_LEN], label: &[u8]) -> Self {
        SymmetricKey {
            key,
            label: label.to_vec(),
        }
    }

    pub fn random(rng: &mut impl RngCore, label: &[u8]) -> Self {
        let mut key = [0u8; KEY_LEN];
        rng.fill_bytes(&mut key);
        Self::new(key, label)
    }

    pub fn bytes(&self) -> &[u8; KEY_LEN] {
        &self.key
    }

    pub fn label(&self) -> &[u8] {
        &self.label
    }
}

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymmetricKey")
            .field("label", &String::from_utf8_lossy(&self.label))
            .finish_non_exhaustive()
    }
}

/// Signing view of an asymmetric key.
#[derive(Clone, PartialEq, Eq)]
pub struct SignKeyPair {
    pub secret: [u8; 32],
    pub public: [u8; PUBLIC_LEN],
}

/// Key-agreement view of an asymmetric key. `public` is the same
/// encoding as the signing public key.
#[derive(Clone, PartialEq, Eq)]
pub struct DhKeyPair {
    pub secret: [u8; 32],
    pub public: [u8; PUBLIC_LEN],
}

impl SignKeyPair {
    pub fn from_secret(secret: [u8; 32]) -> Self {
        let public = SigningKey::from_bytes(&secret).verifying_key().to_bytes();
        SignKeyPair { secret, public }
    }

    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Self::from_secret(secret)
    }

    pub fn as_dh(&self) -> DhKeyPair {
        DhKeyPair {
            secret: self.secret,
            public: self.public,
        }
    }
}

impl DhKeyPair {
    pub fn as_sign(&self) -> SignKeyPair {
        SignKeyPair {
            secret: self.secret,
            public: self.public,
        }
    }
}

impl std::fmt::Debug for SignKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SignKeyPair(public={})", hex(&self.public))
    }
}

impl std::fmt::Debug for DhKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DhKeyPair(public={})", hex(&self.public))
    }
}

/// Public-key certificate issued by the TTP: signature over
/// `subject_id || subject_public`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub subject_id: Vec<u8>,
    pub subject_public: [u8; PUBLIC_LEN],
    pub signature: [u8; SIGNATURE_LEN],
}

impl Certificate {
    pub fn issue(issuer: &SignKeyPair, subject_id: &[u8], subject_public: [u8; PUBLIC_LEN]) -> Self {
        let signature = sign(&issuer.secret, &Self::signed_bytes(subject_id, &subject_public));
        Certificate {
            subject_id: subject_id.to_vec(),
            subject_public,
            signature,
        }
    }

    pub fn verify(&self, issuer_public: &[u8; PUBLIC_LEN]) -> bool {
        verify(
            issuer_public,
            &Self::signed_bytes(&self.subject_id, &self.subject_public),
            &self.signature,
        )
    }

    fn signed_bytes(subject_id: &[u8], subject_public: &[u8; PUBLIC_LEN]) -> Vec<u8> {
        let mut msg = Vec::with_capacity(subject_id.len() + PUBLIC_LEN);
        msg.extend_from_slice(subject_id);
        msg.extend_from_slice(subject_public);
        msg
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha3_384::digest(data).into())
}

/// Hash of the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha3_384::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

pub fn aead_seal(key: &SymmetricKey, nonce: &[u8; NONCE_LEN], aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let cipher = Aes256Gcm::new(key.bytes().into());
    cipher
        .encrypt(Nonce::from_slice(nonce), Payload { msg: plaintext, aad })
        .expect("AES-GCM encryption is infallible for in-range lengths")
}

pub fn aead_open(
    key: &SymmetricKey,
    nonce: &[u8; NONCE_LEN],
    aad: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes256Gcm::new(key.bytes().into());
    cipher
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ciphertext, aad })
        .map_err(|_| CryptoError::AuthFail)
}

pub fn sign(secret: &[u8; 32], message: &[u8]) -> [u8; SIGNATURE_LEN] {
    SigningKey::from_bytes(secret).sign(message).to_bytes()
}

pub fn verify(public: &[u8; PUBLIC_LEN], message: &[u8], signature: &[u8; SIGNATURE_LEN]) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(public) else {
        return false;
    };
    key.verify_strict(message, &Signature::from_bytes(signature)).is_ok()
}

/// Checks that `public` decodes to a usable (non-small-order) curve point.
pub fn is_valid_public(public: &[u8; PUBLIC_LEN]) -> bool {
    VerifyingKey::from_bytes(public).is_ok_and(|k| !k.is_weak())
}

pub fn dh_keygen(seed: &[u8; 32]) -> DhKeyPair {
    SignKeyPair::from_secret(*seed).as_dh()
}

pub fn dh_agree(secret: &[u8; 32], peer_public: &[u8; PUBLIC_LEN]) -> Result<[u8; 32], CryptoError> {
    let peer = VerifyingKey::from_bytes(peer_public).map_err(|_| CryptoError::BadPoint)?;
    if peer.is_weak() {
        return Err(CryptoError::BadPoint);
    }
    let scalar = StaticSecret::from(SigningKey::from_bytes(secret).to_scalar_bytes());
    let shared = scalar.diffie_hellman(&XPublic::from(peer.to_montgomery().to_bytes()));
    if !shared.was_contributory() {
        return Err(CryptoError::BadPoint);
    }
    Ok(shared.to_bytes())
}

/// `hash(label || shared)` truncated to 32 bytes.
pub fn kdf(shared: &[u8; 32], label: &[u8]) -> SymmetricKey {
    let digest = hash_parts(&[label, shared]);
    let mut key = [0u8; KEY_LEN];
    key.copy_from_slice(&digest.0[..KEY_LEN]);
    SymmetricKey::new(key, label)
}

/// Hash-counter DRBG: block `n` of the stream is `hash(seed || n)` with
/// `n` as an 8-byte big-endian counter starting at zero.
#[derive(Clone)]
pub struct Drbg {
    seed: Vec<u8>,
    counter: u64,
    block: [u8; DIGEST_LEN],
    pos: usize,
}

impl Drbg {
    pub fn new(seed: &[u8]) -> Result<Self, CryptoError> {
        if seed.is_empty() {
            return Err(CryptoError::EmptySeed);
        }
        Ok(Drbg {
            seed: seed.to_vec(),
            counter: 0,
            block: [0; DIGEST_LEN],
            pos: DIGEST_LEN,
        })
    }

    fn refill(&mut self) {
        self.block = hash_parts(&[&self.seed, &self.counter.to_be_bytes()]).0;
        self.counter += 1;
        self.pos = 0;
    }

    pub fn take(&mut self, n: usize) -> Vec<u8> {
        let mut out = vec![0u8; n];
        self.fill_bytes(&mut out);
        out
    }

    pub fn array<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        self.fill_bytes(&mut out);
        out
    }
}

impl RngCore for Drbg {
    fn next_u32(&mut self) -> u32 {
        u32::from_be_bytes(self.array())
    }

    fn next_u64(&mut self) -> u64 {
        u64::from_be_bytes(self.array())
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        let mut filled = 0;
        while filled < dst.len() {
            if self.pos == DIGEST_LEN {
                self.refill();
            }
            let n = (DIGEST_LEN - self.pos).min(dst.len() - filled);
            dst[filled..filled + n].copy_from_slice(&self.block[self.pos..self.pos + n]);
            self.pos += n;
            filled += n;
        }
    }
}

/// Hybrid public-key encryption: fresh ephemeral key agreement with the
/// recipient, then AEAD under a zero nonce (each ephemeral key is used once).
/// Envelope layout: `ephemeral_public (32) || ciphertext-with-tag`.
///
/// The ephemeral public encoding is the AEAD associated data: the Edwards
/// sign bit does not reach the Montgomery coordinate, so without it a
/// flipped sign bit would still open.
pub fn pke_seal(
    recipient_public: &[u8; PUBLIC_LEN],
    plaintext: &[u8],
    rng: &mut impl RngCore,
) -> Result<Vec<u8>, CryptoError> {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let ephemeral = dh_keygen(&seed);
    let shared = dh_agree(&ephemeral.secret, recipient_public)?;
    let key = kdf(&shared, PKE_LABEL);
    let mut envelope = ephemeral.public.to_vec();
    envelope.extend(aead_seal(&key, &[0u8; NONCE_LEN], &ephemeral.public, plaintext));
    Ok(envelope)
}

pub fn pke_open(recipient_secret: &[u8; 32], envelope: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if envelope.len() < PUBLIC_LEN + TAG_LEN {
        return Err(CryptoError::AuthFail);
    }
    let (eph, ct) = envelope.split_at(PUBLIC_LEN);
    let eph: [u8; PUBLIC_LEN] = eph.try_into().unwrap();
    let shared = dh_agree(recipient_secret, &eph).map_err(|_| CryptoError::AuthFail)?;
    aead_open(&kdf(&shared, PKE_LABEL), &[0u8; NONCE_LEN], &eph, ct)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
