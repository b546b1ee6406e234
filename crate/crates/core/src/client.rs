// Licensed under the Apache-2.0 license

//! User side of the protocol: enrollment, attestation with device
//! authentication, bitstream deployment and IP invocation.

use std::io::{Read, Write};

use serde::Deserialize;
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{
    aead_open, aead_seal, hash, is_valid_public, sign, Certificate, Digest, Drbg, SignKeyPair, SymmetricKey, PUBLIC_LEN,
    SIGNATURE_LEN,
};
use crate::device::IpInvocation;
use crate::image::{encode_bitstream, BitstreamContainer, IpDescriptor, IpId};
use crate::memmap::{PL_REGION, SECURE_REGION};
use crate::puf::Challenge;
use crate::sma::{
    decode_body, decode_invoke_outputs, encode_invoke, encode_ping, session_key, session_nonce, DEPLOY_AAD,
    DEPLOY_NONCE_LABEL, INVOKE_AAD, INVOKE_NONCE_LABEL, RESPONSE_NONCE_LABEL,
};
use crate::wire::{Connection, ErrorCode, Message, WireError};

pub const IDENTITY_MAGIC: &[u8; 4] = b"RCUI";
pub const SESSION_MAGIC: &[u8; 4] = b"RCUS";
const FILE_VERSION: u16 = 1;
/// Register stride used when the manifest leaves addresses out.
pub const ADDRESS_STRIDE: u64 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("TTP rejected the attestation: {}", ErrorCode::describe(*.0))]
    TtpRejected(u16),
    #[error("certificate does not verify under PK_TTP")]
    CertInvalid,
    #[error("device answer does not match the TTP credential")]
    DeviceAuthFail,
    #[error("sealed response failed authentication")]
    AuthFail,
    #[error("manifest invalid: {0}")]
    ManifestInvalid(String),
    #[error("{} from peer: {}", ErrorCode::describe(*.0), .1)]
    Rejected(u16, String),
    #[error("unexpected reply: {0}")]
    Unexpected(String),
    #[error("network: {0}")]
    Network(String),
    #[error("local state: {0}")]
    Storage(String),
}

impl ClientError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::CertInvalid | ClientError::DeviceAuthFail | ClientError::AuthFail => 3,
            ClientError::Rejected(code, _) if is_auth_code(*code) => 3,
            ClientError::Network(_) => 4,
            _ => 2,
        }
    }

    pub fn code(&self) -> ErrorCode {
        match self {
            ClientError::TtpRejected(_) => ErrorCode::TtpRejected,
            ClientError::CertInvalid => ErrorCode::CertInvalid,
            ClientError::DeviceAuthFail => ErrorCode::DeviceAuthFail,
            ClientError::AuthFail => ErrorCode::AuthFail,
            ClientError::Rejected(c, _) => ErrorCode::from_u16(*c).unwrap_or(ErrorCode::Malformed),
            ClientError::Network(_) => ErrorCode::Network,
            ClientError::ManifestInvalid(_) | ClientError::Unexpected(_) | ClientError::Storage(_) => ErrorCode::Malformed,
        }
    }
}

fn is_auth_code(code: u16) -> bool {
    [ErrorCode::AuthFail, ErrorCode::SigMismatch, ErrorCode::CertInvalid]
        .iter()
        .any(|c| c.as_u16() == code)
}

impl From<WireError> for ClientError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Io(e) => ClientError::Network(e.to_string()),
            WireError::Codec(c) => ClientError::Rejected(c.code().as_u16(), c.to_string()),
        }
    }
}

impl From<DecodeError> for ClientError {
    fn from(e: DecodeError) -> Self {
        ClientError::Storage(e.to_string())
    }
}

fn unexpected(msg: Message) -> ClientError {
    match msg {
        Message::Error { code, detail } => ClientError::Rejected(code, detail),
        other => ClientError::Unexpected(format!("message type {:#04x}", other.msg_type())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserIdentity {
    pub uid: Vec<u8>,
    /// Signs bitstream hashes and, as X25519, derives SessKey.
    pub keys: SignKeyPair,
    pub cert: Certificate,
    pub pk_ttp: [u8; PUBLIC_LEN],
}

fn put_cert(w: &mut Writer, c: &Certificate) {
    w.field16(&c.subject_id).field16(&c.subject_public).field16(&c.signature);
}

fn get_cert(r: &mut Reader<'_>) -> Result<Certificate, DecodeError> {
    Ok(Certificate {
        subject_id: r.field16()?.to_vec(),
        subject_public: r.fixed16("subject public")?,
        signature: r.fixed16("signature")?,
    })
}

impl UserIdentity {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(IDENTITY_MAGIC).u16(FILE_VERSION).field16(&self.uid).field16(&self.keys.secret);
        put_cert(&mut w, &self.cert);
        w.field16(&self.pk_ttp);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ClientError> {
        let mut r = Reader::new(bytes);
        if r.raw(4)? != IDENTITY_MAGIC || r.u16()? != FILE_VERSION {
            return Err(ClientError::Storage("not an identity file".into()));
        }
        let uid = r.field16()?.to_vec();
        let keys = SignKeyPair::from_secret(r.fixed16("secret")?);
        let cert = get_cert(&mut r)?;
        let pk_ttp = r.fixed16("pk_ttp")?;
        r.finish()?;
        Ok(UserIdentity { uid, keys, cert, pk_ttp })
    }
}

/// Client view of an established device session.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSession {
    pub pk_dev: [u8; PUBLIC_LEN],
    pub cert_dev: Certificate,
    pub challenge: Challenge,
    pub credential: Digest,
    pub key: SymmetricKey,
    pub deploy_ctr: u64,
    pub invoke_ctr: u64,
    /// Manifest of the last deployed design.
    pub deployed: Vec<IpDescriptor>,
}

impl DeviceSession {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(SESSION_MAGIC).u16(FILE_VERSION).field16(&self.pk_dev);
        put_cert(&mut w, &self.cert_dev);
        w.field16(&self.challenge.to_wire()).field16(&self.credential.0).field16(self.key.bytes());
        w.u64(self.deploy_ctr).u64(self.invoke_ctr);
        let manifest = if self.deployed.is_empty() {
            Vec::new()
        } else {
            BitstreamContainer { ips: self.deployed.clone(), payload: Vec::new() }.encode().unwrap_or_default()
        };
        w.field64(&manifest);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ClientError> {
        let mut r = Reader::new(bytes);
        if r.raw(4)? != SESSION_MAGIC || r.u16()? != FILE_VERSION {
            return Err(ClientError::Storage("not a session file".into()));
        }
        let pk_dev = r.fixed16("pk_dev")?;
        let cert_dev = get_cert(&mut r)?;
        let challenge = Challenge::from_wire(r.field16()?).map_err(|e| ClientError::Storage(e.to_string()))?;
        let credential = Digest(r.fixed16("credential")?);
        let key = SymmetricKey::new(r.fixed16("key")?, crate::sma::SESSION_LABEL);
        let deploy_ctr = r.u64()?;
        let invoke_ctr = r.u64()?;
        let manifest = r.field64()?;
        let deployed = if manifest.is_empty() {
            Vec::new()
        } else {
            BitstreamContainer::decode(manifest).map_err(|e| ClientError::Storage(e.to_string()))?.ips
        };
        r.finish()?;
        Ok(DeviceSession { pk_dev, cert_dev, challenge, credential, key, deploy_ctr, invoke_ctr, deployed })
    }

    pub fn find_ip(&self, name: &str) -> Option<&IpDescriptor> {
        let id = IpId::from_name(name)?;
        self.deployed.iter().find(|ip| ip.ip_id == id)
    }
}

/// Registers a freshly generated keypair with the TTP.
pub fn enroll<S: Read + Write>(ttp: &mut Connection<S>, rng: &mut impl rand::RngCore) -> Result<UserIdentity, ClientError> {
    let keys = SignKeyPair::generate(rng);
    match ttp.call(&Message::EnrollUserRequest { public: keys.public })? {
        Message::EnrollUserResponse { cert, uid, pk_ttp } => {
            if cert.subject_public != keys.public || !cert.verify(&pk_ttp) {
                return Err(ClientError::CertInvalid);
            }
            Ok(UserIdentity { uid, keys, cert, pk_ttp })
        }
        other => Err(unexpected(other)),
    }
}

/// Remote attestation from the user side. A session is returned only when the
/// device's PUF answer matches the TTP credential.
pub fn attest<D: Read + Write, T: Read + Write>(
    identity: &UserIdentity,
    device: &mut Connection<D>,
    ttp: &mut Connection<T>,
) -> Result<DeviceSession, ClientError> {
    let (delta, epsilon) = match device.call(&Message::AttestRequest { cert: identity.cert.clone() })? {
        Message::AttestResponse { delta, epsilon } => (delta, epsilon),
        other => return Err(unexpected(other)),
    };
    let (cert_dev, challenge, credential) = match ttp.call(&Message::TtpVerifyRequest { delta, epsilon })? {
        Message::TtpVerifyResponse { cert_dev, challenge, credential } => (cert_dev, challenge, credential),
        Message::TtpReject { reason } => return Err(ClientError::TtpRejected(reason)),
        other => return Err(unexpected(other)),
    };
    if !cert_dev.verify(&identity.pk_ttp) || !is_valid_public(&cert_dev.subject_public) {
        return Err(ClientError::CertInvalid);
    }
    let pk_dev = cert_dev.subject_public;
    let key = session_key(&identity.keys.secret, &pk_dev).map_err(|_| ClientError::CertInvalid)?;
    let digest = match device.call(&Message::ChallengeForward { challenge: challenge.clone() })? {
        Message::ChallengeAnswer { digest } => digest,
        other => return Err(unexpected(other)),
    };
    if digest != credential {
        return Err(ClientError::DeviceAuthFail);
    }
    Ok(DeviceSession {
        pk_dev,
        cert_dev,
        challenge,
        credential,
        key,
        deploy_ctr: 0,
        invoke_ctr: 0,
        deployed: Vec::new(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(default = "default_filler")]
    filler_len: usize,
    #[serde(rename = "ip", default)]
    ips: Vec<ManifestIp>,
}

fn default_filler() -> usize {
    4096
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestIp {
    id: String,
    kernel: String,
    #[serde(default = "yes")]
    secure: bool,
    status: Option<u64>,
    #[serde(default)]
    inputs: Option<usize>,
    #[serde(default)]
    outputs: Option<usize>,
    input_addrs: Option<Vec<u64>>,
    output_addrs: Option<Vec<u64>>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub filler_len: usize,
    pub ips: Vec<IpDescriptor>,
}

/// Parses a TOML manifest. Addresses left out are assigned sequentially
/// from the base of the secure region (secure IPs) or the PL window.
pub fn parse_manifest(text: &str) -> Result<Manifest, ClientError> {
    let invalid = |m: String| ClientError::ManifestInvalid(m);
    let file: ManifestFile = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
    let mut next_secure = SECURE_REGION.start;
    let mut next_pl = PL_REGION.start;
    let mut ips = Vec::with_capacity(file.ips.len());
    for ip in file.ips {
        if !crate::device::kernels::KNOWN.contains(&ip.kernel.as_str()) || ip.kernel == crate::device::kernels::RO_PUF {
            return Err(invalid(format!("unknown kernel {:?}", ip.kernel)));
        }
        let ip_id = IpId::from_name(&ip.id).ok_or_else(|| invalid(format!("ip id {:?} must be 1-16 bytes", ip.id)))?;
        let cursor = if ip.secure { &mut next_secure } else { &mut next_pl };
        let mut take = || {
            let a = *cursor;
            *cursor += ADDRESS_STRIDE;
            a
        };
        let status_addr = ip.status.unwrap_or_else(&mut take);
        let inputs = match ip.input_addrs {
            Some(a) => a,
            None => (0..ip.inputs.unwrap_or(1)).map(|_| take()).collect(),
        };
        let outputs = match ip.output_addrs {
            Some(a) => a,
            None => (0..ip.outputs.unwrap_or(1)).map(|_| take()).collect(),
        };
        ips.push(IpDescriptor { ip_id, kernel: ip.kernel, secure: ip.secure, status_addr, inputs, outputs });
    }
    crate::image::validate_manifest(&ips).map_err(|e| invalid(e.to_string()))?;
    Ok(Manifest { filler_len: file.filler_len, ips })
}

/// Phase ④: encodes, seals under SessKey and signs `H(Enc{Bin})`.
/// Purely local; the manifest is checked before anything is sent.
pub fn prepare_bitstream(
    identity: &UserIdentity,
    session: &DeviceSession,
    manifest: &Manifest,
    filler: &mut Drbg,
) -> Result<(Vec<u8>, [u8; SIGNATURE_LEN]), ClientError> {
    let bin = encode_bitstream(&manifest.ips, manifest.filler_len, filler)
        .map_err(|e| ClientError::ManifestInvalid(e.to_string()))?;
    Ok(seal_bitstream(identity, session, &bin))
}

pub fn seal_bitstream(identity: &UserIdentity, session: &DeviceSession, bin: &[u8]) -> (Vec<u8>, [u8; SIGNATURE_LEN]) {
    let enc_bin = aead_seal(&session.key, &session_nonce(DEPLOY_NONCE_LABEL, session.deploy_ctr), DEPLOY_AAD, bin);
    let sig = sign(&identity.keys.secret, &hash(&enc_bin).0);
    (enc_bin, sig)
}

/// Sends the sealed bitstream, then the signature. The deploy counter advances with every attempt,
/// mirroring the SMA.
pub fn deploy<D: Read + Write>(
    session: &mut DeviceSession,
    device: &mut Connection<D>,
    enc_bin: Vec<u8>,
    sig: [u8; SIGNATURE_LEN],
    manifest: &[IpDescriptor],
) -> Result<(), ClientError> {
    device.send(&Message::DeployData { enc_bin })?;
    device.send(&Message::DeployRequest { sig })?;
    session.deploy_ctr += 1;
    match device.recv()? {
        Message::DeployAck { status: 0 } => {
            session.deployed = manifest.to_vec();
            Ok(())
        }
        Message::DeployAck { status } => Err(ClientError::Rejected(status, "deploy refused".into())),
        other => Err(unexpected(other)),
    }
}

fn sealed_call<D: Read + Write>(session: &mut DeviceSession, device: &mut Connection<D>, body: &[u8]) -> Result<Vec<u8>, ClientError> {
    let ctr = session.invoke_ctr;
    session.invoke_ctr += 1;
    let sealed = aead_seal(&session.key, &session_nonce(INVOKE_NONCE_LABEL, ctr), INVOKE_AAD, body);
    let reply = match device.call(&Message::InvokeRequest { sealed })? {
        Message::InvokeResponse { sealed } => sealed,
        other => return Err(unexpected(other)),
    };
    let body = open_invoke_response(&session.key, ctr, &reply)?;
    let (status, rest) = decode_body(&body).map_err(|e| ClientError::Unexpected(e.to_string()))?;
    if status != 0 {
        return Err(ClientError::Rejected(status, String::from_utf8_lossy(rest).into_owned()));
    }
    Ok(rest.to_vec())
}

pub fn open_invoke_response(key: &SymmetricKey, ctr: u64, sealed: &[u8]) -> Result<Vec<u8>, ClientError> {
    aead_open(key, &session_nonce(RESPONSE_NONCE_LABEL, ctr), INVOKE_AAD, sealed).map_err(|_| ClientError::AuthFail)
}

/// Sealed echo over the invoke channel; proves both ends hold SessKey.
pub fn ping<D: Read + Write>(session: &mut DeviceSession, device: &mut Connection<D>, payload: &[u8]) -> Result<Vec<u8>, ClientError> {
    sealed_call(session, device, &encode_ping(payload))
}

/// One input record per declared input address, in order.
pub fn invoke<D: Read + Write>(
    session: &mut DeviceSession,
    device: &mut Connection<D>,
    ip: &IpDescriptor,
    inputs: &[Vec<u8>],
) -> Result<Vec<(u64, Vec<u8>)>, ClientError> {
    if inputs.len() != ip.inputs.len() {
        return Err(ClientError::ManifestInvalid(format!(
            "{} takes {} inputs, got {}",
            ip.ip_id.display(),
            ip.inputs.len(),
            inputs.len()
        )));
    }
    let invocation = IpInvocation {
        inputs: ip.inputs.iter().copied().zip(inputs.iter().cloned()).collect(),
        status_addr: ip.status_addr,
        outputs: ip.outputs.clone(),
    };
    let rest = sealed_call(session, device, &encode_invoke(&ip.ip_id, &invocation))?;
    decode_invoke_outputs(&rest).map_err(|e| ClientError::Unexpected(e.to_string()))
}
