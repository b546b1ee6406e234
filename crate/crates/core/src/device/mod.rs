// Licensed under the Apache-2.0 license

//! Simulated FPGA-SoC: staged boot chain, world-tagged bus, OCM and
//! reserved secure memory, PL configuration and the TOS syscalls.

pub mod host;
pub mod kernels;

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::codec::{Reader, Writer};
use crate::crypto::{verify, SymmetricKey, PUBLIC_LEN, SIGNATURE_LEN};
use crate::image::{
    BitstreamContainer, BootableImage, ImageError, IpDescriptor, IpId, Partition, PartitionKind, H_BOOT_LEN,
};
use crate::memmap::{self, OCM_MEASUREMENT_CHUNK, OCM_SIZE, SHARED_MEMORY_SIZE, SHARED_REGION};
use crate::puf::{Challenge, PufError, Response, RoPufModel};
use crate::wire::ErrorCode;

pub const DEVICE_ID_LEN: usize = 16;

pub const STATUS_IDLE: u32 = 0;
pub const STATUS_RUNNING: u32 = 1;
pub const STATUS_DONE: u32 = 2;
pub const STATUS_FAULT: u32 = 3;

pub const PUF_IP_NAME: &str = "ro_puf";
pub const PUF_STATUS_ADDR: u64 = 0x7000_0000;
pub const PUF_INPUT_ADDR: u64 = 0x7000_0008;
pub const PUF_OUTPUT_ADDR: u64 = 0x7000_0010;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum World {
    Tos,
    Ros,
}

/// AxPROT security bit of a bus transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prot {
    Secure,
    NonSecure,
}

impl From<World> for Prot {
    fn from(w: World) -> Self {
        match w {
            World::Tos => Prot::Secure,
            World::Ros => Prot::NonSecure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BusOp {
    /// `len == 0` reads a whole register.
    Read { len: usize },
    Write { data: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusAccess {
    pub addr: u64,
    pub prot: Prot,
    pub op: BusOp,
}

impl BusAccess {
    pub fn read(world: World, addr: u64, len: usize) -> Self {
        BusAccess { addr, prot: world.into(), op: BusOp::Read { len } }
    }

    pub fn write(world: World, addr: u64, data: Vec<u8>) -> Self {
        BusAccess { addr, prot: world.into(), op: BusOp::Write { data } }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeviceError {
    #[error("device not running")]
    NotRunning,
    #[error("bad state: {0}")]
    BadState(&'static str),
    #[error("boot authentication failed at {0:?}")]
    BootAuthFail(PartitionKind),
    #[error("malformed boot image: {0}")]
    MalformedImage(String),
    #[error("call not permitted from the rich world")]
    WorldViolation,
    #[error("PUF IP no longer present in the PL")]
    PufNotPresent,
    #[error("PUF: {0}")]
    Puf(#[from] PufError),
    #[error("bitstream rejected: {0}")]
    Bitstream(ImageError),
    #[error("PCAP access disabled by PMU firmware")]
    PcapDisabled,
    #[error("unknown IP {0}")]
    UnknownIp(String),
    #[error("address {0:#x} not in the IP's map")]
    AddrMismatch(u64),
    #[error("kernel fault: {0}")]
    KernelFault(String),
    #[error("non-secure access to secure address {0:#x}")]
    ProtViolation(u64),
    #[error("TA signature rejected")]
    TaAuthFail,
    #[error("address {0:#x} is not mapped")]
    Unmapped(u64),
    #[error("malformed: {0}")]
    Malformed(String),
}

impl DeviceError {
    pub fn code(&self) -> ErrorCode {
        match self {
            DeviceError::NotRunning => ErrorCode::NotRunning,
            DeviceError::BadState(_) => ErrorCode::BadState,
            DeviceError::BootAuthFail(_) => ErrorCode::BootAuthFail,
            DeviceError::MalformedImage(_) | DeviceError::Malformed(_) => ErrorCode::Malformed,
            DeviceError::WorldViolation => ErrorCode::WorldViolation,
            DeviceError::PufNotPresent => ErrorCode::PufNotPresent,
            DeviceError::Puf(PufError::SameIndex) => ErrorCode::SameIndex,
            DeviceError::Puf(PufError::Malformed) => ErrorCode::Malformed,
            DeviceError::Puf(_) => ErrorCode::BadParams,
            DeviceError::Bitstream(ImageError::AddrOutOfRegion(_)) => ErrorCode::AddrOutOfRegion,
            DeviceError::Bitstream(ImageError::AddrCollision(_)) => ErrorCode::AddrCollision,
            DeviceError::Bitstream(_) => ErrorCode::Malformed,
            DeviceError::PcapDisabled => ErrorCode::PcapDisabled,
            DeviceError::UnknownIp(_) => ErrorCode::UnknownIp,
            DeviceError::AddrMismatch(_) => ErrorCode::AddrMismatch,
            DeviceError::KernelFault(_) => ErrorCode::KernelFault,
            DeviceError::ProtViolation(_) => ErrorCode::ProtViolation,
            DeviceError::TaAuthFail => ErrorCode::TaAuthFail,
            DeviceError::Unmapped(_) => ErrorCode::Unmapped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Phase {
    PoweredOff,
    BootFailed(DeviceError),
    Running,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::PoweredOff => "powered_off",
            Phase::BootFailed(_) => "boot_failed",
            Phase::Running => "running",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementLocation {
    Cleared,
    InOcm,
    InSecureMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootStage {
    PmuRom,
    CsuRom,
    Fsbl,
    FsblMeasure,
    PlConfig,
    Atf,
    TeeBoot,
    Uboot,
    Ros,
}

impl BootStage {
    pub fn name(self) -> &'static str {
        match self {
            BootStage::PmuRom => "pmu_rom",
            BootStage::CsuRom => "csu_rom",
            BootStage::Fsbl => "fsbl",
            BootStage::FsblMeasure => "fsbl_measure",
            BootStage::PlConfig => "pl_config",
            BootStage::Atf => "atf",
            BootStage::TeeBoot => "tee_boot",
            BootStage::Uboot => "uboot",
            BootStage::Ros => "ros",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageRecord {
    pub stage: BootStage,
    pub ocm_slot_nonzero: bool,
    pub location: MeasurementLocation,
}

pub type BootHook = Box<dyn FnMut(BootStage, &Soc) + Send>;

/// Input side of one `syscall_usr_def_ip` call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpInvocation {
    pub inputs: Vec<(u64, Vec<u8>)>,
    pub status_addr: u64,
    pub outputs: Vec<u64>,
}

/// `count u16 | (addr u64, len u64, data)* | status u64 | count u16 | addr u64*`
impl IpInvocation {
    pub fn encode(&self, w: &mut Writer) {
        w.u16(self.inputs.len() as u16);
        for (addr, data) in &self.inputs {
            w.u64(*addr).field64(data);
        }
        w.u64(self.status_addr).u16(self.outputs.len() as u16);
        for a in &self.outputs {
            w.u64(*a);
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, crate::codec::DecodeError> {
        let n = r.u16()?;
        let inputs = (0..n)
            .map(|_| Ok((r.u64()?, r.field64()?.to_vec())))
            .collect::<Result<_, crate::codec::DecodeError>>()?;
        let status_addr = r.u64()?;
        let n = r.u16()?;
        let outputs = (0..n).map(|_| r.u64()).collect::<Result<_, _>>()?;
        Ok(IpInvocation { inputs, status_addr, outputs })
    }
}

pub fn encode_outputs(w: &mut Writer, records: &[(u64, Vec<u8>)]) {
    w.u16(records.len() as u16);
    for (addr, data) in records {
        w.u64(*addr).field64(data);
    }
}

pub fn decode_outputs(r: &mut Reader<'_>) -> Result<Vec<(u64, Vec<u8>)>, crate::codec::DecodeError> {
    let n = r.u16()?;
    (0..n).map(|_| Ok((r.u64()?, r.field64()?.to_vec()))).collect()
}

/// The design shipped in the BIT partition: one secure RO-PUF IP.
pub fn initial_design() -> Vec<IpDescriptor> {
    vec![IpDescriptor {
        ip_id: IpId::from_name(PUF_IP_NAME).expect("short name"),
        kernel: kernels::RO_PUF.to_string(),
        secure: true,
        status_addr: PUF_STATUS_ADDR,
        inputs: vec![PUF_INPUT_ADDR],
        outputs: vec![PUF_OUTPUT_ADDR],
    }]
}

pub struct DeviceConfig {
    pub device_id: [u8; DEVICE_ID_LEN],
    pub bbram_key: SymmetricKey,
    pub puf: RoPufModel,
    /// Seeds PUF noise and the per-boot nonce.
    pub noise_seed: [u8; 32],
}

struct PlConfig {
    bytes: Vec<u8>,
    container: BitstreamContainer,
}

pub struct Soc {
    device_id: [u8; DEVICE_ID_LEN],
    bbram_key: SymmetricKey,
    puf: RoPufModel,
    rng: ChaCha20Rng,
    phase: Phase,
    ocm: Vec<u8>,
    /// IP registers, keyed by physical address (secure region and PL window).
    regs: BTreeMap<u64, Vec<u8>>,
    secure_measurements: Option<[u8; H_BOOT_LEN]>,
    location: MeasurementLocation,
    shared: Vec<u8>,
    pl: Option<PlConfig>,
    pcap_direct_access: bool,
    firmware_override: Option<bool>,
    pk_ta: Option<[u8; PUBLIC_LEN]>,
    sma_image: Option<(Vec<u8>, [u8; SIGNATURE_LEN])>,
    boot_nonce: [u8; 32],
    stage_log: Vec<StageRecord>,
    hook: Option<BootHook>,
}

impl Soc {
    pub fn new(config: DeviceConfig) -> Self {
        Soc {
            device_id: config.device_id,
            bbram_key: config.bbram_key,
            puf: config.puf,
            rng: ChaCha20Rng::from_seed(config.noise_seed),
            phase: Phase::PoweredOff,
            ocm: vec![0; OCM_SIZE],
            regs: BTreeMap::new(),
            secure_measurements: None,
            location: MeasurementLocation::Cleared,
            shared: Vec::new(),
            pl: None,
            pcap_direct_access: false,
            firmware_override: None,
            pk_ta: None,
            sma_image: None,
            boot_nonce: [0; 32],
            stage_log: Vec::new(),
            hook: None,
        }
    }

    pub fn device_id(&self) -> &[u8; DEVICE_ID_LEN] {
        &self.device_id
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn measurement_location(&self) -> MeasurementLocation {
        self.location
    }

    pub fn ocm_slot(&self) -> &[u8] {
        &self.ocm[OCM_MEASUREMENT_CHUNK]
    }

    pub fn stage_log(&self) -> &[StageRecord] {
        &self.stage_log
    }

    pub fn pcap_direct_access(&self) -> bool {
        self.pcap_direct_access
    }

    pub fn pl_container(&self) -> Option<&BitstreamContainer> {
        self.pl.as_ref().map(|p| &p.container)
    }

    /// Size of the RO array behind the PUF IP.
    pub fn puf_oscillators(&self) -> usize {
        self.puf.oscillators()
    }

    pub fn boot_nonce(&self) -> &[u8; 32] {
        &self.boot_nonce
    }

    /// SMA artifact and signature as found in the LINUX partition.
    pub fn sma_image(&self) -> Option<&(Vec<u8>, [u8; SIGNATURE_LEN])> {
        self.sma_image.as_ref()
    }

    pub fn set_boot_hook(&mut self, hook: Option<BootHook>) {
        self.hook = hook;
    }

    /// Forces the PMU firmware's PCAP flag on the next boot; `Some(true)`
    /// loads standard firmware, `Some(false)` custom firmware.
    pub fn set_firmware_override(&mut self, standard: Option<bool>) {
        self.firmware_override = standard;
    }

    fn stage(&mut self, stage: BootStage) {
        let ocm_slot_nonzero = self.ocm_slot().iter().any(|b| *b != 0);
        self.stage_log.push(StageRecord { stage, ocm_slot_nonzero, location: self.location });
        if let Some(mut hook) = self.hook.take() {
            hook(stage, self);
            self.hook = Some(hook);
        }
    }

    fn fail(&mut self, e: DeviceError) -> DeviceError {
        self.phase = Phase::BootFailed(e.clone());
        e
    }

    fn clear_volatile(&mut self) {
        self.ocm.fill(0);
        self.regs.clear();
        self.secure_measurements = None;
        self.location = MeasurementLocation::Cleared;
        self.shared.clear();
        self.pl = None;
        self.pcap_direct_access = false;
        self.pk_ta = None;
        self.sma_image = None;
        self.boot_nonce = [0; 32];
        self.stage_log.clear();
    }

    pub fn power_off(&mut self) {
        self.clear_volatile();
        self.phase = Phase::PoweredOff;
    }

    /// Runs the boot chain over an encoded RCBI image. Any partition that
    /// fails authentication halts boot.
    pub fn power_on(&mut self, image: &[u8]) -> Result<(), DeviceError> {
        if self.phase != Phase::PoweredOff {
            return Err(DeviceError::BadState("power_on requires a powered-off device"));
        }
        self.clear_volatile();
        self.stage(BootStage::PmuRom);
        self.stage(BootStage::CsuRom);

        let image = BootableImage::decode(image).map_err(|e| self.fail(DeviceError::MalformedImage(e.to_string())))?;
        let key = self.bbram_key.clone();
        let decrypt = |kind: PartitionKind| {
            image.record(kind).decrypt(&key).map_err(|_| DeviceError::BootAuthFail(kind))
        };

        // CSU ROM decrypts the FSBL; the FSBL then takes care of the rest
        let fsbl = decrypt(PartitionKind::Fsbl).map_err(|e| self.fail(e))?;
        self.stage(BootStage::Fsbl);
        let mut loaded: Vec<Partition> = vec![fsbl];
        for kind in [
            PartitionKind::Bit,
            PartitionKind::PmuFw,
            PartitionKind::Atf,
            PartitionKind::Tee,
            PartitionKind::Uboot,
            PartitionKind::Linux,
        ] {
            let mut p = decrypt(kind).map_err(|e| self.fail(e))?;
            if kind == PartitionKind::PmuFw {
                if let (Some(standard), Some(flag)) = (self.firmware_override, p.payload.first_mut()) {
                    *flag = standard as u8;
                }
            }
            loaded.push(p);
        }
        let ms = crate::image::golden_measurements(&loaded).map_err(|e| self.fail(DeviceError::MalformedImage(e.to_string())))?;
        let start = OCM_MEASUREMENT_CHUNK.start;
        self.ocm[start..start + H_BOOT_LEN].copy_from_slice(&ms.h_boot());
        self.location = MeasurementLocation::InOcm;
        self.stage(BootStage::FsblMeasure);

        let part = |kind: PartitionKind| loaded.iter().find(|p| p.kind == kind).expect("all kinds loaded");
        let malformed = |e: ImageError| DeviceError::MalformedImage(e.to_string());
        let bit = part(PartitionKind::Bit).payload.clone();
        let container = BitstreamContainer::decode(&bit).map_err(|e| self.fail(malformed(e)))?;
        let pcap = part(PartitionKind::PmuFw).pcap_direct_access().map_err(|e| self.fail(malformed(e)))?;
        let pk_ta = part(PartitionKind::Tee).pk_ta().map_err(|e| self.fail(malformed(e)))?;
        let sma = part(PartitionKind::Linux).sma().map_err(|e| self.fail(malformed(e)))?;
        self.install_design(bit, container);
        self.pcap_direct_access = pcap;
        self.stage(BootStage::PlConfig);
        self.stage(BootStage::Atf);

        self.pk_ta = Some(pk_ta);
        let mut copy = [0u8; H_BOOT_LEN];
        copy.copy_from_slice(&self.ocm[start..start + H_BOOT_LEN]);
        self.secure_measurements = Some(copy);
        self.ocm[OCM_MEASUREMENT_CHUNK].fill(0);
        self.location = MeasurementLocation::InSecureMemory;
        self.stage(BootStage::TeeBoot);
        self.stage(BootStage::Uboot);

        self.sma_image = Some(sma);
        self.rng.fill_bytes(&mut self.boot_nonce);
        self.phase = Phase::Running;
        self.stage(BootStage::Ros);
        Ok(())
    }

    fn require_running(&self) -> Result<(), DeviceError> {
        match self.phase {
            Phase::Running => Ok(()),
            _ => Err(DeviceError::NotRunning),
        }
    }

    fn require_tos(&self, world: World) -> Result<(), DeviceError> {
        self.require_running()?;
        match world {
            World::Tos => Ok(()),
            World::Ros => Err(DeviceError::WorldViolation),
        }
    }

    fn install_design(&mut self, bytes: Vec<u8>, container: BitstreamContainer) {
        if let Some(old) = &self.pl {
            for addr in old.container.ips.iter().flat_map(|ip| ip.addresses()) {
                self.regs.remove(&addr);
            }
        }
        for ip in &container.ips {
            self.regs.insert(ip.status_addr, STATUS_IDLE.to_be_bytes().to_vec());
        }
        self.pl = Some(PlConfig { bytes, container });
    }

    fn set_status(&mut self, addr: u64, status: u32) {
        self.regs.insert(addr, status.to_be_bytes().to_vec());
    }

    pub fn syscall_get_boot_hash(&self, world: World) -> Result<[u8; H_BOOT_LEN], DeviceError> {
        self.require_tos(world)?;
        self.secure_measurements.ok_or(DeviceError::BadState("measurements missing"))
    }

    /// Drives the PUF IP through its registers and returns the response.
    pub fn syscall_get_hw_puf_response(&mut self, world: World, challenge: &Challenge) -> Result<Response, DeviceError> {
        self.require_tos(world)?;
        let ip = self
            .pl_container()
            .and_then(|c| c.ips.iter().find(|ip| ip.kernel == kernels::RO_PUF))
            .cloned()
            .ok_or(DeviceError::PufNotPresent)?;
        if challenge.is_empty() {
            return Err(PufError::BadParams.into());
        }
        let (input, output) = match (ip.inputs.first(), ip.outputs.first()) {
            (Some(i), Some(o)) => (*i, *o),
            _ => return Err(DeviceError::PufNotPresent),
        };
        self.regs.insert(input, challenge.to_wire());
        self.set_status(ip.status_addr, STATUS_RUNNING);
        match self.puf.evaluate(challenge, &mut self.rng) {
            Ok(r) => {
                self.regs.insert(output, r.to_wire());
                self.set_status(ip.status_addr, STATUS_DONE);
                Ok(r)
            }
            Err(e) => {
                self.set_status(ip.status_addr, STATUS_FAULT);
                Err(e.into())
            }
        }
    }

    /// Replaces the PL design; on any error the old design stays.
    pub fn syscall_program_user_hw(&mut self, world: World, bitstream: &[u8]) -> Result<(), DeviceError> {
        self.require_tos(world)?;
        let container = BitstreamContainer::decode(bitstream).map_err(DeviceError::Bitstream)?;
        self.install_design(bitstream.to_vec(), container);
        Ok(())
    }

    pub fn syscall_usr_def_ip(
        &mut self,
        world: World,
        ip_id: &IpId,
        invocation: &IpInvocation,
    ) -> Result<Vec<(u64, Vec<u8>)>, DeviceError> {
        self.require_tos(world)?;
        let ip = self
            .pl_container()
            .and_then(|c| c.find(ip_id))
            .filter(|ip| ip.kernel != kernels::RO_PUF)
            .cloned()
            .ok_or_else(|| DeviceError::UnknownIp(ip_id.display()))?;
        if invocation.status_addr != ip.status_addr {
            return Err(DeviceError::AddrMismatch(invocation.status_addr));
        }
        if let Some((a, _)) = invocation.inputs.iter().find(|(a, _)| !ip.inputs.contains(a)) {
            return Err(DeviceError::AddrMismatch(*a));
        }
        if let Some(a) = invocation.outputs.iter().find(|a| !ip.outputs.contains(a)) {
            return Err(DeviceError::AddrMismatch(*a));
        }
        if invocation.outputs.is_empty() {
            return Err(DeviceError::KernelFault("no output address".into()));
        }
        for (addr, data) in &invocation.inputs {
            self.regs.insert(*addr, data.clone());
        }
        self.set_status(ip.status_addr, STATUS_RUNNING);
        let inputs: Vec<&[u8]> = invocation.inputs.iter().map(|(_, d)| d.as_slice()).collect();
        let result = match kernels::run(&ip.kernel, &inputs) {
            Ok(r) => r,
            Err(e) => {
                self.set_status(ip.status_addr, STATUS_FAULT);
                return Err(DeviceError::KernelFault(e));
            }
        };
        for addr in &invocation.outputs {
            self.regs.insert(*addr, result.clone());
        }
        self.set_status(ip.status_addr, STATUS_DONE);
        Ok(invocation.outputs.iter().map(|a| (*a, result.clone())).collect())
    }

    /// Direct PCAP read of the configuration memory; only standard PMU
    /// firmware leaves this path open.
    pub fn pcap_readback(&self, _world: World) -> Result<Vec<u8>, DeviceError> {
        self.require_running()?;
        if !self.pcap_direct_access {
            return Err(DeviceError::PcapDisabled);
        }
        Ok(self.pl.as_ref().map(|p| p.bytes.clone()).unwrap_or_default())
    }

    pub fn bus_access(&mut self, access: BusAccess) -> Result<Vec<u8>, DeviceError> {
        self.require_running()?;
        let addr = access.addr;
        if memmap::is_secure(addr) && access.prot != Prot::Secure {
            return Err(DeviceError::ProtViolation(addr));
        }
        if memmap::is_shared(addr) {
            let off = (addr - SHARED_REGION.start) as usize;
            return match access.op {
                BusOp::Read { len } => {
                    if off + len > SHARED_MEMORY_SIZE {
                        return Err(DeviceError::Unmapped(addr + len as u64));
                    }
                    let mut out = vec![0u8; len];
                    let avail = self.shared.len().saturating_sub(off).min(len);
                    out[..avail].copy_from_slice(&self.shared[off..off + avail]);
                    Ok(out)
                }
                BusOp::Write { data } => {
                    let end = off + data.len();
                    if end > SHARED_MEMORY_SIZE {
                        return Err(DeviceError::Unmapped(addr + data.len() as u64));
                    }
                    if self.shared.len() < end {
                        self.shared.resize(end, 0);
                    }
                    self.shared[off..end].copy_from_slice(&data);
                    Ok(Vec::new())
                }
            };
        }
        if !memmap::is_secure(addr) && !memmap::is_pl(addr) {
            return Err(DeviceError::Unmapped(addr));
        }
        match access.op {
            BusOp::Read { len } => {
                let mut v = self.regs.get(&addr).cloned().unwrap_or_default();
                if len > 0 {
                    v.resize(len, 0);
                }
                Ok(v)
            }
            BusOp::Write { data } => {
                self.regs.insert(addr, data);
                Ok(Vec::new())
            }
        }
    }

    /// Shared-memory contents written so far (REE side of the buffer).
    pub fn shared_len(&self) -> usize {
        self.shared.len()
    }

    /// Replaces the shared buffer with `data` (REE write at the region base).
    pub fn write_shared(&mut self, data: &[u8]) -> Result<(), DeviceError> {
        self.require_running()?;
        if data.len() > SHARED_MEMORY_SIZE {
            return Err(DeviceError::Unmapped(SHARED_REGION.end));
        }
        self.shared.clear();
        self.shared.extend_from_slice(data);
        Ok(())
    }

    /// TOS copy of the whole shared buffer into TA memory.
    pub fn take_shared(&mut self, world: World) -> Result<Vec<u8>, DeviceError> {
        self.require_tos(world)?;
        Ok(std::mem::take(&mut self.shared))
    }

    /// Authenticates a TA against the PK_TA baked into the TEE partition.
    pub fn start_ta(&self, artifact: &[u8], signature: &[u8; SIGNATURE_LEN]) -> Result<(), DeviceError> {
        self.require_running()?;
        let pk = self.pk_ta.ok_or(DeviceError::BadState("no PK_TA"))?;
        if !verify(&pk, artifact, signature) {
            return Err(DeviceError::TaAuthFail);
        }
        Ok(())
    }
}
