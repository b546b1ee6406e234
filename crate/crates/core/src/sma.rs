// Licensed under the Apache-2.0 license

//! Secure Management Application: the TA that answers attestation,
//! installs user bitstreams and relays IP invocations.

use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::codec::{Reader, Writer};
use crate::crypto::{
    aead_open, aead_seal, dh_agree, dh_keygen, hash, hash_parts, pke_seal, sign, verify, Certificate, DhKeyPair,
    Digest, Drbg, SymmetricKey, NONCE_LEN, PUBLIC_LEN, SIGNATURE_LEN,
};
use crate::device::{decode_outputs, encode_outputs, DeviceError, IpInvocation, Soc, World, DEVICE_ID_LEN};
use crate::image::IpId;
use crate::puf::{random_challenge, seed_from_response, Challenge, SEED_CHALLENGE_PAIRS};
use crate::wire::message::types::DEPLOY_DATA;
use crate::wire::{ErrorCode, Message};

pub const SESSION_LABEL: &[u8] = b"RCTEE-SESSION-V1";
pub const ARTIFACT_MAGIC: &[u8; 5] = b"RCSMA";
pub const ARTIFACT_VERSION: u16 = 1;

pub const DEPLOY_NONCE_LABEL: &[u8; 3] = b"DEP";
pub const INVOKE_NONCE_LABEL: &[u8; 3] = b"INV";
pub const RESPONSE_NONCE_LABEL: &[u8; 3] = b"INR";
pub const DEPLOY_AAD: &[u8] = b"deploy";
pub const INVOKE_AAD: &[u8] = b"invoke";

pub const OP_PING: u8 = 0;
pub const OP_INVOKE: u8 = 1;

/// `ε` plaintext: `#DI (16) || α (48) || PK_DEV (32)`.
pub const EPSILON_PLAINTEXT_LEN: usize = DEVICE_ID_LEN + 48 + PUBLIC_LEN;

/// `label (3) || counter u64 BE || 0x00`
pub fn session_nonce(label: &[u8; 3], counter: u64) -> [u8; NONCE_LEN] {
    let mut n = [0u8; NONCE_LEN];
    n[..3].copy_from_slice(label);
    n[3..11].copy_from_slice(&counter.to_be_bytes());
    n
}

/// `α = H(H_BOOT || #DI)`
pub fn alpha(h_boot: &[u8], device_id: &[u8; DEVICE_ID_LEN]) -> Digest {
    hash_parts(&[h_boot, device_id])
}

/// Step-10 credential `H(R(C) || #DI)` over the packed response bits.
pub fn credential_digest(packed_response: &[u8], device_id: &[u8]) -> Digest {
    hash_parts(&[packed_response, device_id])
}

pub fn session_key(own_secret: &[u8; 32], peer_public: &[u8; PUBLIC_LEN]) -> Result<SymmetricKey, crate::crypto::CryptoError> {
    Ok(crate::crypto::kdf(&dh_agree(own_secret, peer_public)?, SESSION_LABEL))
}

/// The SMA binary as shipped in the LINUX partition: it pins PK_TTP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmaArtifact {
    pub pk_ttp: [u8; PUBLIC_LEN],
}

impl SmaArtifact {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(ARTIFACT_MAGIC).u16(ARTIFACT_VERSION).field16(&self.pk_ttp);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let mut r = Reader::new(bytes);
        if r.raw(5).ok()? != ARTIFACT_MAGIC || r.u16().ok()? != ARTIFACT_VERSION {
            return None;
        }
        let pk_ttp = r.fixed16("pk_ttp").ok()?;
        r.finish().ok()?;
        Some(SmaArtifact { pk_ttp })
    }
}

/// Time source mixed into the PUF seed challenge.
pub trait Clock: Send {
    fn now_nanos(&mut self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_nanos(&mut self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos() as u64)
    }
}

/// Deterministic clock advancing by `step` per reading.
pub struct StepClock {
    pub now: u64,
    pub step: u64,
}

impl Clock for StepClock {
    fn now_nanos(&mut self) -> u64 {
        self.now += self.step;
        self.now
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Idle,
    AwaitChallenge,
    Established,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    SignatureCheck { ok: bool },
    AeadOpen { purpose: &'static str, ok: bool },
    Program { ok: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmaError {
    #[error("user certificate invalid")]
    CertInvalid,
    #[error("SMA state {0:?} does not accept this message")]
    BadState(SessionState),
    #[error("bitstream signature mismatch")]
    SigMismatch,
    #[error("session AEAD authentication failed")]
    AuthFail,
    #[error("malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

impl SmaError {
    pub fn code(&self) -> ErrorCode {
        match self {
            SmaError::CertInvalid => ErrorCode::CertInvalid,
            SmaError::BadState(_) => ErrorCode::BadState,
            SmaError::SigMismatch => ErrorCode::SigMismatch,
            SmaError::AuthFail => ErrorCode::AuthFail,
            SmaError::Malformed(_) => ErrorCode::Malformed,
            SmaError::Device(DeviceError::NotRunning) => ErrorCode::NotBooted,
            SmaError::Device(e) => e.code(),
        }
    }
}

struct Session {
    dev: DhKeyPair,
    key: Option<SymmetricKey>,
    pk_user: [u8; PUBLIC_LEN],
    deploy_ctr: u64,
    invoke_ctr: u64,
}

pub struct Sma {
    pk_ttp: [u8; PUBLIC_LEN],
    clock: Box<dyn Clock>,
    state: SessionState,
    session: Option<Session>,
    trace: Vec<TraceEvent>,
}

impl Sma {
    /// Authenticates `artifact` against PK_TA and starts it in the TOS.
    pub fn start(soc: &Soc, artifact: &[u8], signature: &[u8; SIGNATURE_LEN], clock: Box<dyn Clock>) -> Result<Self, SmaError> {
        soc.start_ta(artifact, signature)?;
        let parsed = SmaArtifact::decode(artifact).ok_or_else(|| SmaError::Malformed("SMA artifact".into()))?;
        Ok(Sma { pk_ttp: parsed.pk_ttp, clock, state: SessionState::Idle, session: None, trace: Vec::new() })
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn pk_dev(&self) -> Option<[u8; PUBLIC_LEN]> {
        self.session.as_ref().map(|s| s.dev.public)
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.trace)
    }

    fn entropy(&mut self, soc: &Soc) -> [u8; 32] {
        let t = hash(&self.clock.now_nanos().to_be_bytes());
        std::array::from_fn(|i| soc.boot_nonce()[i] ^ t.0[i])
    }

    /// Returns `(δ, ε)`; nothing changes on failure.
    pub fn handle_attest_request(&mut self, soc: &mut Soc, cert_user: &Certificate) -> Result<([u8; SIGNATURE_LEN], Vec<u8>), SmaError> {
        if !cert_user.verify(&self.pk_ttp) {
            return Err(SmaError::CertInvalid);
        }
        let mut drbg = Drbg::new(&self.entropy(soc)).expect("non-empty seed");
        let seed_challenge = random_challenge(&mut drbg, soc.puf_oscillators(), SEED_CHALLENGE_PAIRS);
        let response = soc.syscall_get_hw_puf_response(World::Tos, &seed_challenge)?;
        let dev = dh_keygen(&seed_from_response(&response).map_err(DeviceError::from)?);

        let h_boot = soc.syscall_get_boot_hash(World::Tos)?;
        let device_id = *soc.device_id();
        let a = alpha(&h_boot, &device_id);
        let delta = sign(&dev.secret, &a.0);
        let key = session_key(&dev.secret, &cert_user.subject_public).map_err(|_| SmaError::CertInvalid)?;

        let mut pt = Vec::with_capacity(EPSILON_PLAINTEXT_LEN);
        pt.extend_from_slice(&device_id);
        pt.extend_from_slice(&a.0);
        pt.extend_from_slice(&dev.public);
        let epsilon = pke_seal(&self.pk_ttp, &pt, &mut drbg).map_err(|_| SmaError::Malformed("PK_TTP".into()))?;

        self.session = Some(Session {
            dev,
            key: Some(key),
            pk_user: cert_user.subject_public,
            deploy_ctr: 0,
            invoke_ctr: 0,
        });
        self.state = SessionState::AwaitChallenge;
        Ok((delta, epsilon))
    }

    /// Answers the TTP challenge with `H(R(C) || #DI)`.
    pub fn handle_challenge(&mut self, soc: &mut Soc, challenge: &Challenge) -> Result<Digest, SmaError> {
        if self.state != SessionState::AwaitChallenge {
            return Err(SmaError::BadState(self.state));
        }
        let response = soc.syscall_get_hw_puf_response(World::Tos, challenge)?;
        self.state = SessionState::Established;
        Ok(credential_digest(&response.pack(), soc.device_id()))
    }

    fn established(&mut self) -> Result<&mut Session, SmaError> {
        match (self.state, self.session.as_mut()) {
            (SessionState::Established, Some(s)) => Ok(s),
            (state, _) => Err(SmaError::BadState(state)),
        }
    }

    /// The encrypted bitstream is taken from shared memory,
    /// where the proxy left the `DeployData` payload.
    pub fn handle_deploy(&mut self, soc: &mut Soc, sig: &[u8; SIGNATURE_LEN]) -> Result<(), SmaError> {
        self.established()?;
        let staged = soc.take_shared(World::Tos)?;
        let session = self.established()?;
        let ctr = session.deploy_ctr;
        session.deploy_ctr += 1;
        let (pk_user, key) = (session.pk_user, session.key.clone().expect("established"));

        let enc_bin = match Message::decode_payload(DEPLOY_DATA, &staged) {
            Ok(Message::DeployData { enc_bin }) if !enc_bin.is_empty() => enc_bin,
            _ => return Err(SmaError::Malformed("no bitstream staged in shared memory".into())),
        };
        let sig_ok = verify(&pk_user, &hash(&enc_bin).0, sig);
        self.trace.push(TraceEvent::SignatureCheck { ok: sig_ok });
        if !sig_ok {
            return Err(SmaError::SigMismatch);
        }
        let opened = aead_open(&key, &session_nonce(DEPLOY_NONCE_LABEL, ctr), DEPLOY_AAD, &enc_bin);
        self.trace.push(TraceEvent::AeadOpen { purpose: "deploy", ok: opened.is_ok() });
        let plaintext = opened.map_err(|_| SmaError::AuthFail)?;
        let programmed = soc.syscall_program_user_hw(World::Tos, &plaintext);
        self.trace.push(TraceEvent::Program { ok: programmed.is_ok() });
        Ok(programmed?)
    }

    /// Errors after decryption are sealed like results.
    pub fn handle_invoke(&mut self, soc: &mut Soc, sealed: &[u8]) -> Result<Vec<u8>, SmaError> {
        let session = self.established()?;
        let ctr = session.invoke_ctr;
        session.invoke_ctr += 1;
        let key = session.key.clone().expect("established");

        let opened = aead_open(&key, &session_nonce(INVOKE_NONCE_LABEL, ctr), INVOKE_AAD, sealed);
        self.trace.push(TraceEvent::AeadOpen { purpose: "invoke", ok: opened.is_ok() });
        let body = match opened {
            Ok(pt) => match execute(soc, &pt) {
                Ok(out) => encode_body(ErrorCode::Ok, &out),
                Err(e) => encode_body(e.code(), e.to_string().as_bytes()),
            },
            Err(_) => encode_body(ErrorCode::AuthFail, b"invoke request failed authentication"),
        };
        Ok(aead_seal(&key, &session_nonce(RESPONSE_NONCE_LABEL, ctr), INVOKE_AAD, &body))
    }

    /// Dispatches one decoded message from the proxy.
    pub fn handle(&mut self, soc: &mut Soc, msg: Message) -> Option<Message> {
        let reply = match msg {
            Message::AttestRequest { cert } => self
                .handle_attest_request(soc, &cert)
                .map(|(delta, epsilon)| Message::AttestResponse { delta, epsilon }),
            Message::ChallengeForward { challenge } => {
                self.handle_challenge(soc, &challenge).map(|digest| Message::ChallengeAnswer { digest })
            }
            Message::DeployRequest { sig } => {
                let status = match self.handle_deploy(soc, &sig) {
                    Ok(()) => ErrorCode::Ok,
                    Err(e) => e.code(),
                };
                Ok(Message::DeployAck { status: status.as_u16() })
            }
            Message::InvokeRequest { sealed } => {
                self.handle_invoke(soc, &sealed).map(|sealed| Message::InvokeResponse { sealed })
            }
            other => Ok(Message::error(ErrorCode::UnknownType, format!("SMA does not accept type {:#04x}", other.msg_type()))),
        };
        Some(reply.unwrap_or_else(|e| Message::error(e.code(), e.to_string())))
    }
}

fn encode_body(status: ErrorCode, rest: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u16(status.as_u16()).raw(rest);
    w.finish()
}

fn execute(soc: &mut Soc, body: &[u8]) -> Result<Vec<u8>, SmaError> {
    let mut r = Reader::new(body);
    let malformed = |e: crate::codec::DecodeError| SmaError::Malformed(e.to_string());
    match r.u8().map_err(malformed)? {
        OP_PING => Ok(r.rest().to_vec()),
        OP_INVOKE => {
            let ip_id = IpId(r.array().map_err(malformed)?);
            let invocation = IpInvocation::decode(&mut r).map_err(malformed)?;
            r.finish().map_err(malformed)?;
            let outputs = soc.syscall_usr_def_ip(World::Tos, &ip_id, &invocation)?;
            let mut w = Writer::new();
            encode_outputs(&mut w, &outputs);
            Ok(w.finish())
        }
        op => Err(SmaError::Malformed(format!("unknown op {op}"))),
    }
}

/// Plaintext of a sealed invoke-channel request.
pub fn encode_ping(payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(OP_PING).raw(payload);
    w.finish()
}

pub fn encode_invoke(ip_id: &IpId, invocation: &IpInvocation) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(OP_INVOKE).raw(&ip_id.0);
    invocation.encode(&mut w);
    w.finish()
}

/// Splits an opened response body into status and remainder.
pub fn decode_body(body: &[u8]) -> Result<(u16, &[u8]), crate::codec::DecodeError> {
    let mut r = Reader::new(body);
    let status = r.u16()?;
    Ok((status, r.rest()))
}

pub fn decode_invoke_outputs(rest: &[u8]) -> Result<Vec<(u64, Vec<u8>)>, crate::codec::DecodeError> {
    let mut r = Reader::new(rest);
    let out = decode_outputs(&mut r)?;
    r.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests;
