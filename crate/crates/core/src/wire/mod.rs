// Licensed under the Apache-2.0 license

//! Framing, message codec and the REE proxy.
//!
//! Frame: `length u32 BE (type + payload) | type u8 | payload`. Length is
//! capped at 64 MiB.

pub mod message;
pub mod proxy;

use std::io::{self, Read, Write};

use thiserror::Error;

pub use message::{ControlMessage, Message, StageEntry};

pub const MAX_FRAME_LEN: usize = 64 * 1024 * 1024;

/// Numeric codes carried in `Error`, `TtpReject` and `DeployAck` messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum ErrorCode {
    Ok = 0x0000,
    Malformed = 0x0001,
    Oversize = 0x0002,
    UnknownType = 0x0003,
    SmaUnavailable = 0x0004,
    SharedMemOverflow = 0x0005,
    Network = 0x0006,
    CertInvalid = 0x0010,
    NotBooted = 0x0011,
    BadState = 0x0012,
    SigMismatch = 0x0013,
    AuthFail = 0x0014,
    UnknownIp = 0x0015,
    AddrMismatch = 0x0016,
    KernelFault = 0x0017,
    WorldViolation = 0x0018,
    PufNotPresent = 0x0019,
    SameIndex = 0x001A,
    AddrOutOfRegion = 0x001B,
    AddrCollision = 0x001C,
    PcapDisabled = 0x001D,
    ProtViolation = 0x001E,
    TaAuthFail = 0x001F,
    NotRunning = 0x0020,
    BootAuthFail = 0x0021,
    BadParams = 0x0022,
    Unmapped = 0x0023,
    UnknownDevice = 0x0030,
    MeasurementMismatch = 0x0031,
    BadReport = 0x0032,
    CrpExhausted = 0x0033,
    DecryptFail = 0x0034,
    BadKey = 0x0035,
    DuplicateDevice = 0x0036,
    DeviceAuthFail = 0x0040,
    TtpRejected = 0x0041,
}

impl ErrorCode {
    const ALL: [ErrorCode; 36] = [
        ErrorCode::Ok,
        ErrorCode::Malformed,
        ErrorCode::Oversize,
        ErrorCode::UnknownType,
        ErrorCode::SmaUnavailable,
        ErrorCode::SharedMemOverflow,
        ErrorCode::Network,
        ErrorCode::CertInvalid,
        ErrorCode::NotBooted,
        ErrorCode::BadState,
        ErrorCode::SigMismatch,
        ErrorCode::AuthFail,
        ErrorCode::UnknownIp,
        ErrorCode::AddrMismatch,
        ErrorCode::KernelFault,
        ErrorCode::WorldViolation,
        ErrorCode::PufNotPresent,
        ErrorCode::SameIndex,
        ErrorCode::AddrOutOfRegion,
        ErrorCode::AddrCollision,
        ErrorCode::PcapDisabled,
        ErrorCode::ProtViolation,
        ErrorCode::TaAuthFail,
        ErrorCode::NotRunning,
        ErrorCode::BootAuthFail,
        ErrorCode::BadParams,
        ErrorCode::Unmapped,
        ErrorCode::UnknownDevice,
        ErrorCode::MeasurementMismatch,
        ErrorCode::BadReport,
        ErrorCode::CrpExhausted,
        ErrorCode::DecryptFail,
        ErrorCode::BadKey,
        ErrorCode::DuplicateDevice,
        ErrorCode::DeviceAuthFail,
        ErrorCode::TtpRejected,
    ];

    pub fn from_u16(v: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|c| *c as u16 == v)
    }

    pub fn as_u16(self) -> u16 {
        self as u16
    }

    pub fn name(self) -> &'static str {
        use ErrorCode::*;
        match self {
            Ok => "OK",
            Malformed => "MALFORMED",
            Oversize => "OVERSIZE",
            UnknownType => "UNKNOWN_TYPE",
            SmaUnavailable => "SMA_UNAVAILABLE",
            SharedMemOverflow => "SHARED_MEM_OVERFLOW",
            Network => "NETWORK",
            CertInvalid => "CERT_INVALID",
            NotBooted => "NOT_BOOTED",
            BadState => "BAD_STATE",
            SigMismatch => "SIG_MISMATCH",
            AuthFail => "AUTH_FAIL",
            UnknownIp => "UNKNOWN_IP",
            AddrMismatch => "ADDR_MISMATCH",
            KernelFault => "KERNEL_FAULT",
            WorldViolation => "WORLD_VIOLATION",
            PufNotPresent => "PUF_NOT_PRESENT",
            SameIndex => "SAME_INDEX",
            AddrOutOfRegion => "ADDR_OUT_OF_REGION",
            AddrCollision => "ADDR_COLLISION",
            PcapDisabled => "PCAP_DISABLED",
            ProtViolation => "PROT_VIOLATION",
            TaAuthFail => "TA_AUTH_FAIL",
            NotRunning => "NOT_RUNNING",
            BootAuthFail => "BOOT_AUTH_FAIL",
            BadParams => "BAD_PARAMS",
            Unmapped => "UNMAPPED",
            UnknownDevice => "UNKNOWN_DEVICE",
            MeasurementMismatch => "MEASUREMENT_MISMATCH",
            BadReport => "BAD_REPORT",
            CrpExhausted => "CRP_EXHAUSTED",
            DecryptFail => "DECRYPT_FAIL",
            BadKey => "BAD_KEY",
            DuplicateDevice => "DUPLICATE_DEVICE",
            DeviceAuthFail => "DEVICE_AUTH_FAIL",
            TtpRejected => "TTP_REJECTED",
        }
    }

    /// Name for a raw code, falling back to hex for unassigned values.
    pub fn describe(v: u16) -> String {
        Self::from_u16(v).map_or_else(|| format!("0x{v:04x}"), |c| c.name().to_string())
    }
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("frame length {0} exceeds limit")]
    Oversize(u64),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
}

impl CodecError {
    pub fn code(&self) -> ErrorCode {
        match self {
            CodecError::Malformed(_) => ErrorCode::Malformed,
            CodecError::Oversize(_) => ErrorCode::Oversize,
            CodecError::UnknownType(_) => ErrorCode::UnknownType,
        }
    }
}

impl From<crate::codec::DecodeError> for CodecError {
    fn from(e: crate::codec::DecodeError) -> Self {
        CodecError::Malformed(e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// A frame whose payload has not been interpreted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub msg_type: u8,
    pub payload: Vec<u8>,
}

impl RawFrame {
    pub fn new(msg_type: u8, payload: Vec<u8>) -> Self {
        RawFrame { msg_type, payload }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.extend_from_slice(&((self.payload.len() + 1) as u32).to_be_bytes());
        out.push(self.msg_type);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses exactly one frame occupying all of `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < 5 {
            return Err(CodecError::Malformed("short frame".into()));
        }
        let declared = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as u64;
        if declared as usize > MAX_FRAME_LEN {
            return Err(CodecError::Oversize(declared));
        }
        if declared == 0 || declared != (bytes.len() - 4) as u64 {
            return Err(CodecError::Malformed(format!(
                "declared length {declared}, have {}",
                bytes.len() - 4
            )));
        }
        Ok(RawFrame {
            msg_type: bytes[4],
            payload: bytes[5..].to_vec(),
        })
    }

    pub fn decode(&self) -> Result<Message, CodecError> {
        Message::decode_payload(self.msg_type, &self.payload)
    }
}

pub fn read_frame(r: &mut impl Read) -> Result<RawFrame, WireError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let declared = u32::from_be_bytes(len) as usize;
    if declared > MAX_FRAME_LEN {
        return Err(CodecError::Oversize(declared as u64).into());
    }
    if declared == 0 {
        return Err(CodecError::Malformed("zero-length frame".into()).into());
    }
    let mut msg_type = [0u8; 1];
    r.read_exact(&mut msg_type)?;
    let mut payload = vec![0u8; declared - 1];
    r.read_exact(&mut payload)?;
    Ok(RawFrame {
        msg_type: msg_type[0],
        payload,
    })
}

pub fn write_frame(w: &mut impl Write, frame: &RawFrame) -> io::Result<()> {
    w.write_all(&((frame.payload.len() + 1) as u32).to_be_bytes())?;
    w.write_all(&[frame.msg_type])?;
    w.write_all(&frame.payload)?;
    w.flush()
}

pub fn encode(msg: &Message) -> Vec<u8> {
    msg.to_frame().to_bytes()
}

pub fn decode(bytes: &[u8]) -> Result<Message, CodecError> {
    RawFrame::from_bytes(bytes)?.decode()
}

/// Blocking request/response helper over any byte stream.
pub struct Connection<S> {
    stream: S,
}

impl<S: Read + Write> Connection<S> {
    pub fn new(stream: S) -> Self {
        Connection { stream }
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), WireError> {
        write_frame(&mut self.stream, &msg.to_frame())?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Message, WireError> {
        Ok(read_frame(&mut self.stream)?.decode()?)
    }

    pub fn call(&mut self, msg: &Message) -> Result<Message, WireError> {
        self.send(msg)?;
        self.recv()
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}
