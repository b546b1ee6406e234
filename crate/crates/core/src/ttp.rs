// Licensed under the Apache-2.0 license

//! Trusted Third Party: device and user enrollment, boot-report
//! verification and credential issuance.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{
    hash_parts, is_valid_public, pke_open, sign, verify, Certificate, Digest, Drbg, SignKeyPair, SymmetricKey,
    PUBLIC_LEN, SIGNATURE_LEN,
};
use crate::device::{initial_design, DEVICE_ID_LEN};
use crate::image::{
    encode_bitstream, golden_measurements, package, BootableImage, MeasurementSet, Partition, PartitionKind,
};
use crate::puf::{enroll_crps, instantiate, Challenge, Crp, CrpSet, PufParams, Response};
use crate::sma::{alpha, credential_digest, SmaArtifact, EPSILON_PLAINTEXT_LEN};
use crate::wire::{read_frame, write_frame, ErrorCode, Message, WireError};

pub const DEFAULT_CRP_COUNT: usize = 1024;
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"RCTD";
pub const SNAPSHOT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TtpError {
    #[error("device already enrolled")]
    DuplicateDevice,
    #[error("unknown device")]
    UnknownDevice,
    #[error("boot measurements do not match the golden reference")]
    MeasurementMismatch,
    #[error("secure boot report signature invalid")]
    BadReport,
    #[error("all CRPs for this device are consumed")]
    CrpExhausted,
    #[error("epsilon could not be decrypted")]
    DecryptFail,
    #[error("invalid public key")]
    BadKey,
    #[error("enrollment failed: {0}")]
    Enrollment(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

impl TtpError {
    pub fn code(&self) -> ErrorCode {
        match self {
            TtpError::DuplicateDevice => ErrorCode::DuplicateDevice,
            TtpError::UnknownDevice => ErrorCode::UnknownDevice,
            TtpError::MeasurementMismatch => ErrorCode::MeasurementMismatch,
            TtpError::BadReport => ErrorCode::BadReport,
            TtpError::CrpExhausted => ErrorCode::CrpExhausted,
            TtpError::DecryptFail => ErrorCode::DecryptFail,
            TtpError::BadKey => ErrorCode::BadKey,
            TtpError::Enrollment(_) | TtpError::Snapshot(_) => ErrorCode::Malformed,
        }
    }
}

impl From<DecodeError> for TtpError {
    fn from(e: DecodeError) -> Self {
        TtpError::Snapshot(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceRecord {
    pub device_id: [u8; DEVICE_ID_LEN],
    pub csp_id: Vec<u8>,
    pub board_version: Vec<u8>,
    pub bbram_key: SymmetricKey,
    pub ta_keys: SignKeyPair,
    pub crps: CrpSet,
    pub golden: MeasurementSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub uid: Vec<u8>,
    pub pk_user: [u8; PUBLIC_LEN],
}

#[derive(Debug, Clone)]
pub struct EnrollOptions {
    /// Ship the standard PMU firmware (PCAP left open) instead of the custom one.
    pub standard_firmware: bool,
    pub crp_count: usize,
    pub puf: PufParams,
    /// Configuration filler bytes in the initial design.
    pub bit_filler: usize,
}

impl Default for EnrollOptions {
    fn default() -> Self {
        EnrollOptions { standard_firmware: false, crp_count: DEFAULT_CRP_COUNT, puf: PufParams::default(), bit_filler: 256 }
    }
}

/// What the manufacturer hands over for one board: the image to flash,
/// the key to burn into BBRAM, and the plaintext build inputs.
#[derive(Debug, Clone)]
pub struct Enrollment {
    pub device_id: [u8; DEVICE_ID_LEN],
    pub bbram_key: SymmetricKey,
    pub image: BootableImage,
    pub partitions: Vec<Partition>,
    pub sma_artifact: Vec<u8>,
    pub sma_signature: [u8; SIGNATURE_LEN],
}

/// `#DI` is bound to the device seed, so re-enrolling a board is detected.
pub fn device_id_for(device_seed: &[u8; 32]) -> [u8; DEVICE_ID_LEN] {
    let d = hash_parts(&[b"RCTEE-DI", device_seed]);
    d.0[..DEVICE_ID_LEN].try_into().expect("16 bytes")
}

/// Builds the seven partitions of a device image.
pub fn build_partitions(
    device_id: &[u8; DEVICE_ID_LEN],
    pk_ta: [u8; PUBLIC_LEN],
    sma_artifact: &[u8],
    sma_signature: &[u8; SIGNATURE_LEN],
    standard_firmware: bool,
    bit_filler: usize,
) -> Result<Vec<Partition>, TtpError> {
    let tag = |name: &str| {
        let mut v = format!("{name} build for ").into_bytes();
        v.extend_from_slice(device_id);
        v
    };
    let mut filler = Drbg::new(&hash_parts(&[b"RCTEE-BIT", device_id]).0).expect("non-empty seed");
    let bit = encode_bitstream(&initial_design(), bit_filler, &mut filler).map_err(|e| TtpError::Enrollment(e.to_string()))?;
    Ok(vec![
        Partition::opaque(PartitionKind::Fsbl, tag("fsbl")),
        Partition::pmu_fw(standard_firmware, &tag(if standard_firmware { "pmufw-standard" } else { "pmufw-custom" })),
        Partition::bit(&bit),
        Partition::opaque(PartitionKind::Atf, tag("atf")),
        Partition::tee(pk_ta, &tag("optee")),
        Partition::opaque(PartitionKind::Uboot, tag("u-boot")),
        Partition::linux(sma_artifact, sma_signature, &tag("rootfs")),
    ])
}

pub struct Attestation {
    pub cert_dev: Certificate,
    pub challenge: Challenge,
    pub credential: Digest,
}

pub struct Ttp {
    keys: SignKeyPair,
    rng: Mutex<ChaCha20Rng>,
    devices: RwLock<BTreeMap<[u8; DEVICE_ID_LEN], Arc<Mutex<DeviceRecord>>>>,
    users: RwLock<BTreeMap<Vec<u8>, UserRecord>>,
    snapshot: Option<PathBuf>,
    save_lock: Mutex<()>,
}

impl Ttp {
    pub fn new(seed: [u8; 32]) -> Self {
        let mut rng = ChaCha20Rng::from_seed(seed);
        let keys = SignKeyPair::generate(&mut rng);
        Ttp {
            keys,
            rng: Mutex::new(rng),
            devices: RwLock::new(BTreeMap::new()),
            users: RwLock::new(BTreeMap::new()),
            snapshot: None,
            save_lock: Mutex::new(()),
        }
    }

    /// Persists the database to `path` after every state change.
    pub fn with_snapshot(mut self, path: impl Into<PathBuf>) -> Self {
        self.snapshot = Some(path.into());
        self
    }

    pub fn public(&self) -> [u8; PUBLIC_LEN] {
        self.keys.public
    }

    fn random<const N: usize>(&self) -> [u8; N] {
        let mut out = [0u8; N];
        self.rng.lock().unwrap_or_else(|p| p.into_inner()).fill_bytes(&mut out);
        out
    }

    fn persist(&self) -> Result<(), TtpError> {
        match &self.snapshot {
            Some(path) => self.save(path),
            None => Ok(()),
        }
    }

    pub fn enroll_device(
        &self,
        csp_id: &[u8],
        board_version: &[u8],
        device_seed: [u8; 32],
        opts: &EnrollOptions,
    ) -> Result<Enrollment, TtpError> {
        let device_id = device_id_for(&device_seed);
        if self.devices.read().unwrap().contains_key(&device_id) {
            return Err(TtpError::DuplicateDevice);
        }
        let bbram_key = SymmetricKey::new(self.random(), b"BBRAM");
        let ta_keys = SignKeyPair::from_secret(self.random());

        let model = instantiate(device_seed, opts.puf).map_err(|e| TtpError::Enrollment(e.to_string()))?;
        let mut challenges = Drbg::new(&hash_parts(&[b"RCTEE-CRP", &device_id, &self.random::<32>()]).0).expect("non-empty");
        let mut noise = ChaCha20Rng::from_seed(self.random());
        let crps = enroll_crps(&model, opts.crp_count, &mut challenges, &mut noise);

        let sma_artifact = SmaArtifact { pk_ttp: self.keys.public }.encode();
        let sma_signature = sign(&ta_keys.secret, &sma_artifact);
        let partitions = build_partitions(
            &device_id,
            ta_keys.public,
            &sma_artifact,
            &sma_signature,
            opts.standard_firmware,
            opts.bit_filler,
        )?;
        let mut nonces = ChaCha20Rng::from_seed(self.random());
        let image = package(&partitions, &bbram_key, &mut nonces).map_err(|e| TtpError::Enrollment(e.to_string()))?;
        let golden = golden_measurements(&partitions).map_err(|e| TtpError::Enrollment(e.to_string()))?;

        let record = DeviceRecord {
            device_id,
            csp_id: csp_id.to_vec(),
            board_version: board_version.to_vec(),
            bbram_key: bbram_key.clone(),
            ta_keys,
            crps,
            golden,
        };
        {
            let mut devices = self.devices.write().unwrap();
            if devices.contains_key(&device_id) {
                return Err(TtpError::DuplicateDevice);
            }
            devices.insert(device_id, Arc::new(Mutex::new(record)));
        }
        self.persist()?;
        Ok(Enrollment { device_id, bbram_key, image, partitions, sma_artifact, sma_signature })
    }

    /// Returns `(Ca(PK_USER), #UID, PK_TTP)`.
    pub fn enroll_user(&self, pk_user: &[u8; PUBLIC_LEN]) -> Result<(Certificate, Vec<u8>, [u8; PUBLIC_LEN]), TtpError> {
        if !is_valid_public(pk_user) {
            return Err(TtpError::BadKey);
        }
        let uid = {
            let mut users = self.users.write().unwrap();
            let uid = format!("user-{:06}", users.len() + 1).into_bytes();
            users.insert(uid.clone(), UserRecord { uid: uid.clone(), pk_user: *pk_user });
            uid
        };
        self.persist()?;
        Ok((Certificate::issue(&self.keys, &uid, *pk_user), uid, self.keys.public))
    }

    fn record(&self, device_id: &[u8; DEVICE_ID_LEN]) -> Result<Arc<Mutex<DeviceRecord>>, TtpError> {
        self.devices.read().unwrap().get(device_id).cloned().ok_or(TtpError::UnknownDevice)
    }

    /// Checks α against the golden set, then hands out one fresh CRP.
    pub fn verify_attestation(&self, delta: &[u8; SIGNATURE_LEN], epsilon: &[u8]) -> Result<Attestation, TtpError> {
        let pt = pke_open(&self.keys.secret, epsilon).map_err(|_| TtpError::DecryptFail)?;
        if pt.len() != EPSILON_PLAINTEXT_LEN {
            return Err(TtpError::DecryptFail);
        }
        let device_id: [u8; DEVICE_ID_LEN] = pt[..16].try_into().expect("16");
        let reported_alpha = &pt[16..64];
        let pk_dev: [u8; PUBLIC_LEN] = pt[64..].try_into().expect("32");

        let record = self.record(&device_id)?;
        let crp = {
            let mut rec = record.lock().unwrap_or_else(|p| p.into_inner());
            if alpha(&rec.golden.h_boot(), &device_id).0 != reported_alpha {
                return Err(TtpError::MeasurementMismatch);
            }
            if !is_valid_public(&pk_dev) || !verify(&pk_dev, reported_alpha, delta) {
                return Err(TtpError::BadReport);
            }
            rec.crps.take_next().ok_or(TtpError::CrpExhausted)?
        };
        self.persist()?;
        Ok(Attestation {
            cert_dev: Certificate::issue(&self.keys, &device_id, pk_dev),
            credential: credential_digest(&crp.response.pack(), &device_id),
            challenge: crp.challenge,
        })
    }

    /// `(total, consumed)` CRP counts.
    pub fn crp_ledger_status(&self, device_id: &[u8; DEVICE_ID_LEN]) -> Result<(usize, usize), TtpError> {
        let record = self.record(device_id)?;
        let rec = record.lock().unwrap_or_else(|p| p.into_inner());
        Ok((rec.crps.len(), rec.crps.consumed()))
    }

    pub fn device_ids(&self) -> Vec<[u8; DEVICE_ID_LEN]> {
        self.devices.read().unwrap().keys().copied().collect()
    }

    pub fn device_record(&self, device_id: &[u8; DEVICE_ID_LEN]) -> Result<DeviceRecord, TtpError> {
        Ok(self.record(device_id)?.lock().unwrap_or_else(|p| p.into_inner()).clone())
    }

    /// The TTP's whole message vocabulary. Anything carrying session,
    /// bitstream or IP data is refused.
    pub fn handle(&self, msg: Message) -> Message {
        match msg {
            Message::TtpVerifyRequest { delta, epsilon } => match self.verify_attestation(&delta, &epsilon) {
                Ok(a) => Message::TtpVerifyResponse { cert_dev: a.cert_dev, challenge: a.challenge, credential: a.credential },
                Err(e) => Message::TtpReject { reason: e.code().as_u16() },
            },
            Message::EnrollUserRequest { public } => match self.enroll_user(&public) {
                Ok((cert, uid, pk_ttp)) => Message::EnrollUserResponse { cert, uid, pk_ttp },
                Err(e) => Message::error(e.code(), e.to_string()),
            },
            other => Message::error(ErrorCode::UnknownType, format!("TTP does not accept type {:#04x}", other.msg_type())),
        }
    }

    pub fn serve(self: &Arc<Self>, listener: TcpListener) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
        let addr = listener.local_addr()?;
        let ttp = self.clone();
        let handle = thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let ttp = ttp.clone();
                thread::spawn(move || {
                    let _ = ttp.connection(stream);
                });
            }
        });
        Ok((addr, handle))
    }

    fn connection(&self, stream: TcpStream) -> Result<(), WireError> {
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
            let reply = match frame.decode() {
                Ok(msg) => self.handle(msg),
                Err(e) => Message::error(e.code(), e.to_string()),
            };
            write_frame(&mut writer, &reply.to_frame())?;
        }
    }

    pub fn encode_snapshot(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(SNAPSHOT_MAGIC).u16(SNAPSHOT_VERSION).field16(&self.keys.secret);
        let users = self.users.read().unwrap();
        w.u32(users.len() as u32);
        for u in users.values() {
            w.field16(&u.uid).field16(&u.pk_user);
        }
        let devices = self.devices.read().unwrap();
        w.u32(devices.len() as u32);
        for rec in devices.values() {
            let rec = rec.lock().unwrap_or_else(|p| p.into_inner());
            w.field16(&rec.device_id)
                .field16(&rec.csp_id)
                .field16(&rec.board_version)
                .field16(rec.bbram_key.bytes())
                .field16(&rec.ta_keys.secret)
                .field16(&rec.golden.h_boot());
            w.u32(rec.crps.len() as u32);
            for crp in &rec.crps.entries {
                w.field16(&crp.challenge.to_wire()).field16(&crp.response.to_wire()).u8(crp.consumed as u8);
            }
        }
        w.finish()
    }

    pub fn decode_snapshot(bytes: &[u8], rng_seed: [u8; 32]) -> Result<Self, TtpError> {
        let mut r = Reader::new(bytes);
        if r.raw(4)? != SNAPSHOT_MAGIC || r.u16()? != SNAPSHOT_VERSION {
            return Err(TtpError::Snapshot("bad header".into()));
        }
        let keys = SignKeyPair::from_secret(r.fixed16("ttp secret")?);
        let mut users = BTreeMap::new();
        for _ in 0..r.u32()? {
            let uid = r.field16()?.to_vec();
            let pk_user = r.fixed16("pk_user")?;
            users.insert(uid.clone(), UserRecord { uid, pk_user });
        }
        let bad = |what: &str| TtpError::Snapshot(what.to_string());
        let mut devices = BTreeMap::new();
        for _ in 0..r.u32()? {
            let device_id: [u8; DEVICE_ID_LEN] = r.fixed16("device id")?;
            let csp_id = r.field16()?.to_vec();
            let board_version = r.field16()?.to_vec();
            let bbram_key = SymmetricKey::new(r.fixed16("bbram key")?, b"BBRAM");
            let ta_keys = SignKeyPair::from_secret(r.fixed16("ta secret")?);
            let golden = MeasurementSet::from_h_boot(r.field16()?).ok_or_else(|| bad("golden measurements"))?;
            let n = r.u32()?;
            let mut entries = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let challenge = Challenge::from_wire(r.field16()?).map_err(|_| bad("challenge"))?;
                let response = Response::from_wire(r.field16()?).map_err(|_| bad("response"))?;
                let consumed = match r.u8()? {
                    0 => false,
                    1 => true,
                    _ => return Err(bad("consumed flag")),
                };
                entries.push(Crp { challenge, response, consumed });
            }
            let rec = DeviceRecord { device_id, csp_id, board_version, bbram_key, ta_keys, crps: CrpSet { entries }, golden };
            devices.insert(device_id, Arc::new(Mutex::new(rec)));
        }
        r.finish()?;
        Ok(Ttp {
            keys,
            rng: Mutex::new(ChaCha20Rng::from_seed(rng_seed)),
            devices: RwLock::new(devices),
            users: RwLock::new(users),
            snapshot: None,
            save_lock: Mutex::new(()),
        })
    }

    /// Writes the snapshot next to `path` and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), TtpError> {
        let io = |e: std::io::Error| TtpError::Snapshot(e.to_string());
        let _guard = self.save_lock.lock().unwrap_or_else(|p| p.into_inner());
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(io)?;
            f.write_all(&self.encode_snapshot()).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path, rng_seed: [u8; 32]) -> Result<Self, TtpError> {
        let bytes = fs::read(path).map_err(|e| TtpError::Snapshot(e.to_string()))?;
        Ok(Self::decode_snapshot(&bytes, rng_seed)?.with_snapshot(path))
    }
}
