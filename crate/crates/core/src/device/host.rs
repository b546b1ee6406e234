// Licensed under the Apache-2.0 license

//! One simulated board: the SoC, its boot medium, the running SMA and the
//! harness control endpoint. All access goes through a single mutex, so
//! syscalls against the device are serialized.

use std::io::{BufReader, BufWriter, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};

use super::{BusAccess, DeviceError, Phase, Soc, World};
use crate::image::{BootableImage, PartitionKind};
use crate::sma::{Clock, Sma, StepClock, SystemClock};
use crate::wire::proxy::SmaEndpoint;
use crate::wire::{read_frame, write_frame, ControlMessage, ErrorCode, Message, RawFrame, StageEntry, WireError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    System,
    /// Reproducible readings; each boot starts a fresh second.
    Deterministic,
}

pub struct HostState {
    pub soc: Soc,
    pub sma: Option<Sma>,
    /// Encoded RCBI image on the boot medium.
    pub medium: Vec<u8>,
    clock: ClockMode,
    boots: u64,
}

impl HostState {
    fn clock(&self) -> Box<dyn Clock> {
        match self.clock {
            ClockMode::System => Box::new(SystemClock),
            ClockMode::Deterministic => Box::new(StepClock { now: self.boots * 1_000_000_000, step: 1_000 }),
        }
    }

    /// Boots from the medium; on success the ROS starts the SMA found in
    /// the LINUX partition.
    pub fn power_on(&mut self) -> Result<(), DeviceError> {
        self.sma = None;
        self.boots += 1;
        self.soc.power_on(&self.medium)?;
        let (artifact, sig) = self.soc.sma_image().cloned().expect("running device has an SMA image");
        self.sma = Some(Sma::start(&self.soc, &artifact, &sig, self.clock()).map_err(|e| match e {
            crate::sma::SmaError::Device(d) => d,
            other => DeviceError::Malformed(other.to_string()),
        })?);
        Ok(())
    }

    pub fn power_off(&mut self) {
        self.sma = None;
        self.soc.power_off();
    }

    /// Flips one ciphertext byte of `kind` on the boot medium.
    pub fn inject_tamper(&mut self, kind: PartitionKind, offset: u64) -> Result<(), DeviceError> {
        let mut image = BootableImage::decode(&self.medium).map_err(|e| DeviceError::MalformedImage(e.to_string()))?;
        let ct = &mut image.record_mut(kind).ciphertext;
        if ct.is_empty() {
            return Err(DeviceError::MalformedImage("empty partition".into()));
        }
        let at = (offset % ct.len() as u64) as usize;
        ct[at] ^= 0x01;
        self.medium = image.encode();
        Ok(())
    }

    /// Handles one control request; every device access is issued from the ROS.
    pub fn control(&mut self, msg: ControlMessage) -> ControlMessage {
        let ack = |r: Result<(), DeviceError>| match r {
            Ok(()) => ControlMessage::Ack { status: 0, detail: String::new() },
            Err(e) => ControlMessage::Ack { status: e.code().as_u16(), detail: e.to_string() },
        };
        let data = |r: Result<Vec<u8>, DeviceError>| match r {
            Ok(data) => ControlMessage::Data { data },
            Err(e) => ControlMessage::Ack { status: e.code().as_u16(), detail: e.to_string() },
        };
        match msg {
            ControlMessage::PowerOn => ack(self.power_on()),
            ControlMessage::PowerOff => {
                self.power_off();
                ack(Ok(()))
            }
            ControlMessage::InjectTamper { partition, offset } => match PartitionKind::from_byte(partition) {
                Some(kind) => ack(self.inject_tamper(kind, offset)),
                None => ack(Err(DeviceError::Malformed(format!("partition kind {partition}")))),
            },
            ControlMessage::SetFirmware { standard } => {
                self.soc.set_firmware_override(Some(standard));
                ack(Ok(()))
            }
            ControlMessage::StageQuery => {
                let phase = match self.soc.phase() {
                    Phase::BootFailed(e) => format!("boot_failed:{}", e.code()),
                    p => p.name().to_string(),
                };
                let stages = self
                    .soc
                    .stage_log()
                    .iter()
                    .map(|s| StageEntry { stage: s.stage.name().to_string(), ocm_slot_nonzero: s.ocm_slot_nonzero })
                    .collect();
                ControlMessage::StageReport { phase, stages }
            }
            ControlMessage::BusRead { addr, len } => {
                data(self.soc.bus_access(BusAccess::read(World::Ros, addr, len as usize)))
            }
            ControlMessage::BusWrite { addr, data: bytes } => {
                ack(self.soc.bus_access(BusAccess::write(World::Ros, addr, bytes)).map(|_| ()))
            }
            ControlMessage::PcapReadback => data(self.soc.pcap_readback(World::Ros)),
            ControlMessage::StartTa { artifact, sig } => {
                let started = Sma::start(&self.soc, &artifact, &sig, self.clock());
                ack(match started {
                    Ok(sma) => {
                        self.sma = Some(sma);
                        Ok(())
                    }
                    Err(crate::sma::SmaError::Device(e)) => Err(e),
                    Err(e) => Err(DeviceError::Malformed(e.to_string())),
                })
            }
            other => ControlMessage::Ack {
                status: ErrorCode::UnknownType.as_u16(),
                detail: format!("not a control request: {other:?}"),
            },
        }
    }
}

pub struct DeviceHost {
    state: Mutex<HostState>,
}

impl DeviceHost {
    pub fn new(soc: Soc, medium: Vec<u8>, clock: ClockMode) -> Arc<Self> {
        Arc::new(DeviceHost { state: Mutex::new(HostState { soc, sma: None, medium, clock, boots: 0 }) })
    }

    pub fn lock(&self) -> MutexGuard<'_, HostState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn control(&self, msg: ControlMessage) -> ControlMessage {
        self.lock().control(msg)
    }

    /// Answers one control-port frame.
    pub fn control_frame(&self, frame: &RawFrame) -> RawFrame {
        match frame.decode() {
            Ok(Message::Control(c)) => Message::Control(self.control(c)).to_frame(),
            Ok(other) => Message::error(ErrorCode::UnknownType, format!("type {:#04x} on control port", other.msg_type())).to_frame(),
            Err(e) => Message::error(e.code(), e.to_string()).to_frame(),
        }
    }

    pub fn serve_control(self: &Arc<Self>, listener: TcpListener) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
        let addr = listener.local_addr()?;
        let host = self.clone();
        let handle = thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let host = host.clone();
                thread::spawn(move || {
                    let _ = host.control_connection(stream);
                });
            }
        });
        Ok((addr, handle))
    }

    fn control_connection(&self, stream: TcpStream) -> Result<(), WireError> {
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = BufWriter::new(stream);
        loop {
            let frame = match read_frame(&mut reader) {
                Ok(f) => f,
                Err(WireError::Io(e)) if e.kind() == ErrorKind::UnexpectedEof => return Ok(()),
                Err(WireError::Codec(e)) => {
                    write_frame(&mut writer, &Message::error(e.code(), e.to_string()).to_frame())?;
                    return Ok(());
                }
                Err(e) => return Err(e),
            };
            write_frame(&mut writer, &self.control_frame(&frame))?;
        }
    }
}

impl SmaEndpoint for DeviceHost {
    fn write_shared(&self, data: &[u8]) -> Result<(), ErrorCode> {
        let mut st = self.lock();
        if st.sma.is_none() {
            return Err(ErrorCode::SmaUnavailable);
        }
        st.soc.write_shared(data).map_err(|e| match e {
            DeviceError::NotRunning => ErrorCode::SmaUnavailable,
            _ => ErrorCode::SharedMemOverflow,
        })
    }

    fn deliver(&self, frame: RawFrame) -> Result<Option<RawFrame>, ErrorCode> {
        let mut guard = self.lock();
        let st = &mut *guard;
        let (Some(sma), Phase::Running) = (st.sma.as_mut(), st.soc.phase()) else {
            return Err(ErrorCode::SmaUnavailable);
        };
        // the frame is parsed here, inside the TEE, not by the proxy
        let reply = match frame.decode() {
            Ok(msg) => sma.handle(&mut st.soc, msg),
            Err(e) => Some(Message::error(e.code(), e.to_string())),
        };
        Ok(reply.map(|m| m.to_frame()))
    }
}
