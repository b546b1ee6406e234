// Licensed under the Apache-2.0 license

use crate::codec::{Reader, Writer};
use crate::crypto::{Certificate, Digest, DIGEST_LEN, PUBLIC_LEN, SIGNATURE_LEN};
use crate::puf::Challenge;

use super::{CodecError, RawFrame};

/// Every protocol message. Each payload field carries its own length
/// prefix: 2 bytes for small fields, 8 bytes for bulk fields (bitstreams,
/// sealed blobs, bus data).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    AttestRequest { cert: Certificate },
    AttestResponse { delta: [u8; SIGNATURE_LEN], epsilon: Vec<u8> },
    TtpVerifyRequest { delta: [u8; SIGNATURE_LEN], epsilon: Vec<u8> },
    TtpVerifyResponse { cert_dev: Certificate, challenge: Challenge, credential: Digest },
    TtpReject { reason: u16 },
    ChallengeForward { challenge: Challenge },
    ChallengeAnswer { digest: Digest },
    DeployData { enc_bin: Vec<u8> },
    DeployRequest { sig: [u8; SIGNATURE_LEN] },
    DeployAck { status: u16 },
    InvokeRequest { sealed: Vec<u8> },
    InvokeResponse { sealed: Vec<u8> },
    Error { code: u16, detail: String },
    EnrollUserRequest { public: [u8; PUBLIC_LEN] },
    EnrollUserResponse { cert: Certificate, uid: Vec<u8>, pk_ttp: [u8; PUBLIC_LEN] },
    Control(ControlMessage),
}

/// Harness control endpoint vocabulary (types 0x20-0x2F). Bus reads,
/// bus writes and PCAP readback are always issued from the REE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlMessage {
    PowerOn,
    PowerOff,
    InjectTamper { partition: u8, offset: u64 },
    SetFirmware { standard: bool },
    StageQuery,
    StageReport { phase: String, stages: Vec<StageEntry> },
    Ack { status: u16, detail: String },
    BusRead { addr: u64, len: u64 },
    BusWrite { addr: u64, data: Vec<u8> },
    PcapReadback,
    Data { data: Vec<u8> },
    StartTa { artifact: Vec<u8>, sig: [u8; SIGNATURE_LEN] },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageEntry {
    pub stage: String,
    pub ocm_slot_nonzero: bool,
}

pub mod types {
    pub const ATTEST_REQUEST: u8 = 0x01;
    pub const ATTEST_RESPONSE: u8 = 0x02;
    pub const TTP_VERIFY_REQUEST: u8 = 0x03;
    pub const TTP_VERIFY_RESPONSE: u8 = 0x04;
    pub const TTP_REJECT: u8 = 0x05;
    pub const CHALLENGE_FORWARD: u8 = 0x06;
    pub const CHALLENGE_ANSWER: u8 = 0x07;
    pub const DEPLOY_DATA: u8 = 0x08;
    pub const DEPLOY_REQUEST: u8 = 0x09;
    pub const DEPLOY_ACK: u8 = 0x0A;
    pub const INVOKE_REQUEST: u8 = 0x0B;
    pub const INVOKE_RESPONSE: u8 = 0x0C;
    pub const ERROR: u8 = 0x0D;
    pub const ENROLL_USER_REQUEST: u8 = 0x10;
    pub const ENROLL_USER_RESPONSE: u8 = 0x11;
    pub const CTL_POWER_ON: u8 = 0x20;
    pub const CTL_POWER_OFF: u8 = 0x21;
    pub const CTL_INJECT_TAMPER: u8 = 0x22;
    pub const CTL_SET_FIRMWARE: u8 = 0x23;
    pub const CTL_STAGE_QUERY: u8 = 0x24;
    pub const CTL_STAGE_REPORT: u8 = 0x25;
    pub const CTL_ACK: u8 = 0x26;
    pub const CTL_BUS_READ: u8 = 0x27;
    pub const CTL_BUS_WRITE: u8 = 0x28;
    pub const CTL_PCAP_READBACK: u8 = 0x29;
    pub const CTL_DATA: u8 = 0x2A;
    pub const CTL_START_TA: u8 = 0x2B;
}

use types::*;

fn put_u16(w: &mut Writer, v: u16) {
    w.field16(&v.to_be_bytes());
}

fn put_u64(w: &mut Writer, v: u64) {
    w.field16(&v.to_be_bytes());
}

fn put_cert(w: &mut Writer, c: &Certificate) {
    let mut inner = Writer::new();
    inner.field16(&c.subject_id).field16(&c.subject_public).field16(&c.signature);
    w.field16(&inner.finish());
}

fn get_u16(r: &mut Reader<'_>) -> Result<u16, CodecError> {
    Ok(u16::from_be_bytes(r.fixed16("u16")?))
}

fn get_u64(r: &mut Reader<'_>) -> Result<u64, CodecError> {
    Ok(u64::from_be_bytes(r.fixed16("u64")?))
}

fn get_bool(r: &mut Reader<'_>) -> Result<bool, CodecError> {
    match r.fixed16::<1>("bool")?[0] {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(CodecError::Malformed("bool".into())),
    }
}

fn get_string(bytes: &[u8]) -> Result<String, CodecError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| CodecError::Malformed("utf-8".into()))
}

fn get_cert(r: &mut Reader<'_>) -> Result<Certificate, CodecError> {
    let mut inner = Reader::new(r.field16()?);
    let subject_id = inner.field16()?.to_vec();
    let subject_public = inner.fixed16::<PUBLIC_LEN>("subject public")?;
    let signature = inner.fixed16::<SIGNATURE_LEN>("signature")?;
    inner.finish()?;
    Ok(Certificate { subject_id, subject_public, signature })
}

fn get_challenge(r: &mut Reader<'_>) -> Result<Challenge, CodecError> {
    Challenge::from_wire(r.field16()?).map_err(|_| CodecError::Malformed("challenge".into()))
}

fn get_digest(r: &mut Reader<'_>) -> Result<Digest, CodecError> {
    Ok(Digest(r.fixed16::<DIGEST_LEN>("digest")?))
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::AttestRequest { .. } => ATTEST_REQUEST,
            Message::AttestResponse { .. } => ATTEST_RESPONSE,
            Message::TtpVerifyRequest { .. } => TTP_VERIFY_REQUEST,
            Message::TtpVerifyResponse { .. } => TTP_VERIFY_RESPONSE,
            Message::TtpReject { .. } => TTP_REJECT,
            Message::ChallengeForward { .. } => CHALLENGE_FORWARD,
            Message::ChallengeAnswer { .. } => CHALLENGE_ANSWER,
            Message::DeployData { .. } => DEPLOY_DATA,
            Message::DeployRequest { .. } => DEPLOY_REQUEST,
            Message::DeployAck { .. } => DEPLOY_ACK,
            Message::InvokeRequest { .. } => INVOKE_REQUEST,
            Message::InvokeResponse { .. } => INVOKE_RESPONSE,
            Message::Error { .. } => ERROR,
            Message::EnrollUserRequest { .. } => ENROLL_USER_REQUEST,
            Message::EnrollUserResponse { .. } => ENROLL_USER_RESPONSE,
            Message::Control(c) => match c {
                ControlMessage::PowerOn => CTL_POWER_ON,
                ControlMessage::PowerOff => CTL_POWER_OFF,
                ControlMessage::InjectTamper { .. } => CTL_INJECT_TAMPER,
                ControlMessage::SetFirmware { .. } => CTL_SET_FIRMWARE,
                ControlMessage::StageQuery => CTL_STAGE_QUERY,
                ControlMessage::StageReport { .. } => CTL_STAGE_REPORT,
                ControlMessage::Ack { .. } => CTL_ACK,
                ControlMessage::BusRead { .. } => CTL_BUS_READ,
                ControlMessage::BusWrite { .. } => CTL_BUS_WRITE,
                ControlMessage::PcapReadback => CTL_PCAP_READBACK,
                ControlMessage::Data { .. } => CTL_DATA,
                ControlMessage::StartTa { .. } => CTL_START_TA,
            },
        }
    }

    pub fn error(code: super::ErrorCode, detail: impl Into<String>) -> Self {
        Message::Error { code: code.as_u16(), detail: detail.into() }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Message::AttestRequest { cert } => put_cert(&mut w, cert),
            Message::AttestResponse { delta, epsilon } | Message::TtpVerifyRequest { delta, epsilon } => {
                w.field16(delta).field16(epsilon);
            }
            Message::TtpVerifyResponse { cert_dev, challenge, credential } => {
                put_cert(&mut w, cert_dev);
                w.field16(&challenge.to_wire()).field16(&credential.0);
            }
            Message::TtpReject { reason } => put_u16(&mut w, *reason),
            Message::ChallengeForward { challenge } => {
                w.field16(&challenge.to_wire());
            }
            Message::ChallengeAnswer { digest } => {
                w.field16(&digest.0);
            }
            Message::DeployData { enc_bin } => {
                w.field64(enc_bin);
            }
            Message::DeployRequest { sig } => {
                w.field16(sig);
            }
            Message::DeployAck { status } => put_u16(&mut w, *status),
            Message::InvokeRequest { sealed } | Message::InvokeResponse { sealed } => {
                w.field64(sealed);
            }
            Message::Error { code, detail } => {
                put_u16(&mut w, *code);
                w.field16(detail.as_bytes());
            }
            Message::EnrollUserRequest { public } => {
                w.field16(public);
            }
            Message::EnrollUserResponse { cert, uid, pk_ttp } => {
                put_cert(&mut w, cert);
                w.field16(uid).field16(pk_ttp);
            }
            Message::Control(c) => match c {
                ControlMessage::PowerOn | ControlMessage::PowerOff | ControlMessage::StageQuery | ControlMessage::PcapReadback => {}
                ControlMessage::InjectTamper { partition, offset } => {
                    w.field16(&[*partition]);
                    put_u64(&mut w, *offset);
                }
                ControlMessage::SetFirmware { standard } => {
                    w.field16(&[*standard as u8]);
                }
                ControlMessage::StageReport { phase, stages } => {
                    w.field16(phase.as_bytes());
                    put_u16(&mut w, stages.len() as u16);
                    for s in stages {
                        w.field16(s.stage.as_bytes()).field16(&[s.ocm_slot_nonzero as u8]);
                    }
                }
                ControlMessage::Ack { status, detail } => {
                    put_u16(&mut w, *status);
                    w.field16(detail.as_bytes());
                }
                ControlMessage::BusRead { addr, len } => {
                    put_u64(&mut w, *addr);
                    put_u64(&mut w, *len);
                }
                ControlMessage::BusWrite { addr, data } => {
                    put_u64(&mut w, *addr);
                    w.field64(data);
                }
                ControlMessage::Data { data } => {
                    w.field64(data);
                }
                ControlMessage::StartTa { artifact, sig } => {
                    w.field64(artifact).field16(sig);
                }
            },
        }
        w.finish()
    }

    pub fn to_frame(&self) -> RawFrame {
        RawFrame::new(self.msg_type(), self.encode_payload())
    }

    pub fn decode_payload(msg_type: u8, payload: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(payload);
        let r = &mut r;
        let msg = match msg_type {
            ATTEST_REQUEST => Message::AttestRequest { cert: get_cert(r)? },
            ATTEST_RESPONSE | TTP_VERIFY_REQUEST => {
                let delta = r.fixed16("delta")?;
                let epsilon = r.field16()?.to_vec();
                if msg_type == ATTEST_RESPONSE {
                    Message::AttestResponse { delta, epsilon }
                } else {
                    Message::TtpVerifyRequest { delta, epsilon }
                }
            }
            TTP_VERIFY_RESPONSE => Message::TtpVerifyResponse {
                cert_dev: get_cert(r)?,
                challenge: get_challenge(r)?,
                credential: get_digest(r)?,
            },
            TTP_REJECT => Message::TtpReject { reason: get_u16(r)? },
            CHALLENGE_FORWARD => Message::ChallengeForward { challenge: get_challenge(r)? },
            CHALLENGE_ANSWER => Message::ChallengeAnswer { digest: get_digest(r)? },
            DEPLOY_DATA => Message::DeployData { enc_bin: r.field64()?.to_vec() },
            DEPLOY_REQUEST => Message::DeployRequest { sig: r.fixed16("sig")? },
            DEPLOY_ACK => Message::DeployAck { status: get_u16(r)? },
            INVOKE_REQUEST => Message::InvokeRequest { sealed: r.field64()?.to_vec() },
            INVOKE_RESPONSE => Message::InvokeResponse { sealed: r.field64()?.to_vec() },
            ERROR => Message::Error {
                code: get_u16(r)?,
                detail: get_string(r.field16()?)?,
            },
            ENROLL_USER_REQUEST => Message::EnrollUserRequest { public: r.fixed16("public")? },
            ENROLL_USER_RESPONSE => Message::EnrollUserResponse {
                cert: get_cert(r)?,
                uid: r.field16()?.to_vec(),
                pk_ttp: r.fixed16("pk_ttp")?,
            },
            CTL_POWER_ON => Message::Control(ControlMessage::PowerOn),
            CTL_POWER_OFF => Message::Control(ControlMessage::PowerOff),
            CTL_STAGE_QUERY => Message::Control(ControlMessage::StageQuery),
            CTL_PCAP_READBACK => Message::Control(ControlMessage::PcapReadback),
            CTL_INJECT_TAMPER => Message::Control(ControlMessage::InjectTamper {
                partition: r.fixed16::<1>("partition")?[0],
                offset: get_u64(r)?,
            }),
            CTL_SET_FIRMWARE => Message::Control(ControlMessage::SetFirmware { standard: get_bool(r)? }),
            CTL_STAGE_REPORT => {
                let phase = get_string(r.field16()?)?;
                let n = get_u16(r)?;
                let stages = (0..n)
                    .map(|_| {
                        Ok(StageEntry {
                            stage: get_string(r.field16()?)?,
                            ocm_slot_nonzero: get_bool(r)?,
                        })
                    })
                    .collect::<Result<_, CodecError>>()?;
                Message::Control(ControlMessage::StageReport { phase, stages })
            }
            CTL_ACK => Message::Control(ControlMessage::Ack {
                status: get_u16(r)?,
                detail: get_string(r.field16()?)?,
            }),
            CTL_BUS_READ => Message::Control(ControlMessage::BusRead { addr: get_u64(r)?, len: get_u64(r)? }),
            CTL_BUS_WRITE => Message::Control(ControlMessage::BusWrite {
                addr: get_u64(r)?,
                data: r.field64()?.to_vec(),
            }),
            CTL_DATA => Message::Control(ControlMessage::Data { data: r.field64()?.to_vec() }),
            CTL_START_TA => Message::Control(ControlMessage::StartTa {
                artifact: r.field64()?.to_vec(),
                sig: r.fixed16("sig")?,
            }),
            other => return Err(CodecError::UnknownType(other)),
        };
        r.finish()?;
        Ok(msg)
    }
}
