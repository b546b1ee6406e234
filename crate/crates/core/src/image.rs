// Licensed under the Apache-2.0 license

//! Offline artifacts: the encrypted bootable image ("RCBI"), the PL
//! bitstream container ("RCTB") and boot measurements.
//!
//! Both formats are big-endian.
//!
//! ```text
//! RCBI: "RCBI" | version u16 | 7 x { kind u8 | nonce [12] | len u64 | ciphertext+tag }
//! RCTB: "RCTB" | version u16 | ip_count u16 | ip_count x IpDescriptor | len u64 | payload
//! IpDescriptor: ip_id [16] | name_len u16 | name | secure u8 | status u64
//!               | n_in u16 | n_in x u64 | n_out u16 | n_out x u64
//! ```

use std::collections::HashSet;

use rand::RngCore;
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{aead_open, aead_seal, hash, Digest, Drbg, SymmetricKey, DIGEST_LEN, NONCE_LEN, PUBLIC_LEN, SIGNATURE_LEN};
use crate::memmap;

pub const IMAGE_MAGIC: &[u8; 4] = b"RCBI";
pub const IMAGE_VERSION: u16 = 1;
pub const BITSTREAM_MAGIC: &[u8; 4] = b"RCTB";
pub const BITSTREAM_VERSION: u16 = 1;
pub const H_BOOT_LEN: usize = 7 * DIGEST_LEN;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("missing partition {0:?}")]
    MissingPartition(PartitionKind),
    #[error("duplicate partition {0:?}")]
    DuplicatePartition(PartitionKind),
    #[error("partition {0:?} failed authentication")]
    AuthFail(PartitionKind),
    #[error("malformed: {0}")]
    Malformed(String),
    #[error("address {0:#x} outside the IP's permitted region")]
    AddrOutOfRegion(u64),
    #[error("address {0:#x} used more than once")]
    AddrCollision(u64),
}

impl From<DecodeError> for ImageError {
    fn from(e: DecodeError) -> Self {
        ImageError::Malformed(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum PartitionKind {
    Fsbl = 1,
    PmuFw = 2,
    Bit = 3,
    Atf = 4,
    Tee = 5,
    Uboot = 6,
    Linux = 7,
}

impl PartitionKind {
    /// Canonical image order.
    pub const ALL: [PartitionKind; 7] = [
        PartitionKind::Fsbl,
        PartitionKind::PmuFw,
        PartitionKind::Bit,
        PartitionKind::Atf,
        PartitionKind::Tee,
        PartitionKind::Uboot,
        PartitionKind::Linux,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.get((b as usize).wrapping_sub(1)).copied()
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            PartitionKind::Fsbl => "fsbl",
            PartitionKind::PmuFw => "pmu_fw",
            PartitionKind::Bit => "bit",
            PartitionKind::Atf => "atf",
            PartitionKind::Tee => "tee",
            PartitionKind::Uboot => "uboot",
            PartitionKind::Linux => "linux",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(name))
    }
}

/// One boot partition. Payloads are opaque except for three structured
/// prefixes:
///
/// * `PMU_FW`: `pcap_direct_access u8 | firmware`
/// * `TEE`: `PK_TA [32] | os image`
/// * `LINUX`: `sma_len u64 | sma artifact | signature [64] | rootfs`
/// * `BIT`: an RCTB container
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub kind: PartitionKind,
    pub payload: Vec<u8>,
}

impl Partition {
    pub fn opaque(kind: PartitionKind, payload: Vec<u8>) -> Self {
        Partition { kind, payload }
    }

    pub fn pmu_fw(pcap_direct_access: bool, firmware: &[u8]) -> Self {
        let mut payload = vec![pcap_direct_access as u8];
        payload.extend_from_slice(firmware);
        Partition { kind: PartitionKind::PmuFw, payload }
    }

    pub fn tee(pk_ta: [u8; PUBLIC_LEN], os: &[u8]) -> Self {
        let mut payload = pk_ta.to_vec();
        payload.extend_from_slice(os);
        Partition { kind: PartitionKind::Tee, payload }
    }

    pub fn linux(sma_artifact: &[u8], sma_signature: &[u8; SIGNATURE_LEN], rootfs: &[u8]) -> Self {
        let mut w = Writer::new();
        w.field64(sma_artifact).raw(sma_signature).raw(rootfs);
        Partition { kind: PartitionKind::Linux, payload: w.finish() }
    }

    pub fn bit(container: &[u8]) -> Self {
        Partition { kind: PartitionKind::Bit, payload: container.to_vec() }
    }

    fn expect_kind(&self, kind: PartitionKind) -> Result<(), ImageError> {
        if self.kind != kind {
            return Err(ImageError::Malformed(format!("expected {kind:?}, got {:?}", self.kind)));
        }
        Ok(())
    }

    pub fn pcap_direct_access(&self) -> Result<bool, ImageError> {
        self.expect_kind(PartitionKind::PmuFw)?;
        match self.payload.first() {
            Some(0) => Ok(false),
            Some(1) => Ok(true),
            _ => Err(ImageError::Malformed("pmu_fw flag".into())),
        }
    }

    pub fn pk_ta(&self) -> Result<[u8; PUBLIC_LEN], ImageError> {
        self.expect_kind(PartitionKind::Tee)?;
        self.payload
            .get(..PUBLIC_LEN)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| ImageError::Malformed("tee pk_ta".into()))
    }

    pub fn sma(&self) -> Result<(Vec<u8>, [u8; SIGNATURE_LEN]), ImageError> {
        self.expect_kind(PartitionKind::Linux)?;
        let mut r = Reader::new(&self.payload);
        let artifact = r.field64()?.to_vec();
        let sig = r.array::<SIGNATURE_LEN>()?;
        Ok((artifact, sig))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionRecord {
    pub kind: PartitionKind,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootableImage {
    pub version: u16,
    pub records: Vec<PartitionRecord>,
}

/// Orders `partitions` canonically, rejecting gaps and duplicates.
pub fn canonicalize(partitions: &[Partition]) -> Result<Vec<&Partition>, ImageError> {
    let mut slots: [Option<&Partition>; 7] = [None; 7];
    for p in partitions {
        let slot = &mut slots[p.kind.index()];
        if slot.is_some() {
            return Err(ImageError::DuplicatePartition(p.kind));
        }
        *slot = Some(p);
    }
    PartitionKind::ALL
        .iter()
        .zip(slots)
        .map(|(k, s)| s.ok_or(ImageError::MissingPartition(*k)))
        .collect()
}

pub fn package(
    partitions: &[Partition],
    bbram_key: &SymmetricKey,
    nonce_source: &mut impl RngCore,
) -> Result<BootableImage, ImageError> {
    let records = canonicalize(partitions)?
        .into_iter()
        .map(|p| {
            let mut nonce = [0u8; NONCE_LEN];
            nonce_source.fill_bytes(&mut nonce);
            PartitionRecord {
                kind: p.kind,
                nonce,
                ciphertext: aead_seal(bbram_key, &nonce, &[p.kind as u8], &p.payload),
            }
        })
        .collect();
    Ok(BootableImage { version: IMAGE_VERSION, records })
}

impl PartitionRecord {
    pub fn decrypt(&self, bbram_key: &SymmetricKey) -> Result<Partition, ImageError> {
        let payload = aead_open(bbram_key, &self.nonce, &[self.kind as u8], &self.ciphertext)
            .map_err(|_| ImageError::AuthFail(self.kind))?;
        Ok(Partition { kind: self.kind, payload })
    }
}

impl BootableImage {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(IMAGE_MAGIC).u16(self.version);
        for r in &self.records {
            w.u8(r.kind as u8).raw(&r.nonce).field64(&r.ciphertext);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut r = Reader::new(bytes);
        if r.raw(4)? != IMAGE_MAGIC {
            return Err(ImageError::Malformed("bad magic".into()));
        }
        let version = r.u16()?;
        if version != IMAGE_VERSION {
            return Err(ImageError::Malformed(format!("unsupported version {version}")));
        }
        let mut records = Vec::with_capacity(7);
        for expected in PartitionKind::ALL {
            let kind_byte = r.u8()?;
            if kind_byte != expected as u8 {
                return Err(ImageError::Malformed(format!("partition {kind_byte} out of order")));
            }
            let nonce = r.array::<NONCE_LEN>()?;
            let ciphertext = r.field64()?.to_vec();
            records.push(PartitionRecord { kind: expected, nonce, ciphertext });
        }
        r.finish()?;
        Ok(BootableImage { version, records })
    }

    pub fn record(&self, kind: PartitionKind) -> &PartitionRecord {
        &self.records[kind.index()]
    }

    pub fn record_mut(&mut self, kind: PartitionKind) -> &mut PartitionRecord {
        &mut self.records[kind.index()]
    }
}

pub fn unpack_and_measure(
    image: &BootableImage,
    bbram_key: &SymmetricKey,
) -> Result<(Vec<Partition>, MeasurementSet), ImageError> {
    if image.records.len() != 7 || image.records.iter().zip(PartitionKind::ALL).any(|(r, k)| r.kind != k) {
        return Err(ImageError::Malformed("partition table".into()));
    }
    let partitions = image
        .records
        .iter()
        .map(|r| r.decrypt(bbram_key))
        .collect::<Result<Vec<_>, _>>()?;
    let measurements = golden_measurements(&partitions)?;
    Ok((partitions, measurements))
}

/// Ordered per-partition digests; `H_BOOT` is their concatenation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementSet {
    pub entries: [(PartitionKind, Digest); 7],
}

pub fn golden_measurements(partitions: &[Partition]) -> Result<MeasurementSet, ImageError> {
    let ordered = canonicalize(partitions)?;
    let entries = std::array::from_fn(|i| (ordered[i].kind, hash(&ordered[i].payload)));
    Ok(MeasurementSet { entries })
}

impl MeasurementSet {
    pub fn h_boot(&self) -> [u8; H_BOOT_LEN] {
        let mut out = [0u8; H_BOOT_LEN];
        for (i, (_, d)) in self.entries.iter().enumerate() {
            out[i * DIGEST_LEN..(i + 1) * DIGEST_LEN].copy_from_slice(&d.0);
        }
        out
    }

    /// Inverse of [`MeasurementSet::h_boot`].
    pub fn from_h_boot(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != H_BOOT_LEN {
            return None;
        }
        let entries = std::array::from_fn(|i| {
            (
                PartitionKind::ALL[i],
                Digest::from_slice(&bytes[i * DIGEST_LEN..(i + 1) * DIGEST_LEN]).unwrap(),
            )
        });
        Some(MeasurementSet { entries })
    }

    pub fn get(&self, kind: PartitionKind) -> &Digest {
        &self.entries[kind.index()].1
    }

    /// Kinds whose digests differ from `other`.
    pub fn diff(&self, other: &MeasurementSet) -> Vec<PartitionKind> {
        self.entries
            .iter()
            .zip(&other.entries)
            .filter(|(a, b)| a.1 != b.1)
            .map(|(a, _)| a.0)
            .collect()
    }
}

pub fn h_boot(ms: &MeasurementSet) -> [u8; H_BOOT_LEN] {
    ms.h_boot()
}

/// 16-byte IP identifier; human names are zero-padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IpId(pub [u8; 16]);

impl IpId {
    pub fn from_name(name: &str) -> Option<Self> {
        let bytes = name.as_bytes();
        if bytes.is_empty() || bytes.len() > 16 {
            return None;
        }
        let mut id = [0u8; 16];
        id[..bytes.len()].copy_from_slice(bytes);
        Some(IpId(id))
    }

    pub fn display(&self) -> String {
        let end = self.0.iter().rposition(|b| *b != 0).map_or(0, |p| p + 1);
        match std::str::from_utf8(&self.0[..end]) {
            Ok(s) if self.0[..end].iter().all(|b| b.is_ascii_graphic()) => s.to_string(),
            _ => crate::crypto::hex(&self.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpDescriptor {
    pub ip_id: IpId,
    pub kernel: String,
    pub secure: bool,
    pub status_addr: u64,
    pub inputs: Vec<u64>,
    pub outputs: Vec<u64>,
}

impl IpDescriptor {
    pub fn addresses(&self) -> impl Iterator<Item = u64> + '_ {
        std::iter::once(self.status_addr)
            .chain(self.inputs.iter().copied())
            .chain(self.outputs.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitstreamContainer {
    pub ips: Vec<IpDescriptor>,
    pub payload: Vec<u8>,
}

/// Secure IPs must sit in reserved secure memory, non-secure IPs in the
/// PL window; no address may appear twice in one container.
pub fn validate_manifest(ips: &[IpDescriptor]) -> Result<(), ImageError> {
    if ips.is_empty() || ips.len() > u16::MAX as usize {
        return Err(ImageError::Malformed("ip_count".into()));
    }
    let mut seen = HashSet::new();
    let mut ids = HashSet::new();
    for ip in ips {
        if !ids.insert(ip.ip_id) {
            return Err(ImageError::Malformed(format!("duplicate ip_id {}", ip.ip_id.display())));
        }
        for addr in ip.addresses() {
            let in_region = if ip.secure { memmap::is_secure(addr) } else { memmap::is_pl(addr) };
            if !in_region {
                return Err(ImageError::AddrOutOfRegion(addr));
            }
            if !seen.insert(addr) {
                return Err(ImageError::AddrCollision(addr));
            }
        }
    }
    Ok(())
}

impl BitstreamContainer {
    pub fn find(&self, ip_id: &IpId) -> Option<&IpDescriptor> {
        self.ips.iter().find(|ip| ip.ip_id == *ip_id)
    }

    pub fn encode(&self) -> Result<Vec<u8>, ImageError> {
        validate_manifest(&self.ips)?;
        let mut w = Writer::with_capacity(self.payload.len() + 64 * self.ips.len() + 16);
        w.raw(BITSTREAM_MAGIC).u16(BITSTREAM_VERSION).u16(self.ips.len() as u16);
        for ip in &self.ips {
            if ip.kernel.len() > u16::MAX as usize || ip.inputs.len() > u16::MAX as usize || ip.outputs.len() > u16::MAX as usize {
                return Err(ImageError::Malformed("descriptor field too long".into()));
            }
            w.raw(&ip.ip_id.0).field16(ip.kernel.as_bytes()).u8(ip.secure as u8).u64(ip.status_addr);
            w.u16(ip.inputs.len() as u16);
            for a in &ip.inputs {
                w.u64(*a);
            }
            w.u16(ip.outputs.len() as u16);
            for a in &ip.outputs {
                w.u64(*a);
            }
        }
        w.field64(&self.payload);
        Ok(w.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut r = Reader::new(bytes);
        if r.raw(4)? != BITSTREAM_MAGIC {
            return Err(ImageError::Malformed("bad magic".into()));
        }
        if r.u16()? != BITSTREAM_VERSION {
            return Err(ImageError::Malformed("unsupported version".into()));
        }
        let count = r.u16()? as usize;
        let mut ips = Vec::with_capacity(count);
        for _ in 0..count {
            let ip_id = IpId(r.array()?);
            let kernel = String::from_utf8(r.field16()?.to_vec())
                .map_err(|_| ImageError::Malformed("kernel name not UTF-8".into()))?;
            let secure = match r.u8()? {
                0 => false,
                1 => true,
                _ => return Err(ImageError::Malformed("secure flag".into())),
            };
            let status_addr = r.u64()?;
            let n_in = r.u16()?;
            let inputs = (0..n_in).map(|_| r.u64()).collect::<Result<_, _>>()?;
            let n_out = r.u16()?;
            let outputs = (0..n_out).map(|_| r.u64()).collect::<Result<_, _>>()?;
            ips.push(IpDescriptor { ip_id, kernel, secure, status_addr, inputs, outputs });
        }
        let payload = r.field64()?.to_vec();
        r.finish()?;
        validate_manifest(&ips)?;
        Ok(BitstreamContainer { ips, payload })
    }
}

/// Encodes `manifest` with `filler_len` bytes of DRBG filler as configuration payload.
pub fn encode_bitstream(manifest: &[IpDescriptor], filler_len: usize, drbg: &mut Drbg) -> Result<Vec<u8>, ImageError> {
    validate_manifest(manifest)?;
    BitstreamContainer { ips: manifest.to_vec(), payload: drbg.take(filler_len) }.encode()
}

pub fn decode_bitstream(bytes: &[u8]) -> Result<BitstreamContainer, ImageError> {
    BitstreamContainer::decode(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sample_partitions() -> Vec<Partition> {
        vec![
            Partition::opaque(PartitionKind::Fsbl, b"fsbl-code".to_vec()),
            Partition::pmu_fw(false, b"pmu"),
            Partition::bit(b"RCTB-ish"),
            Partition::opaque(PartitionKind::Atf, b"atf".to_vec()),
            Partition::tee([7; 32], b"optee"),
            Partition::opaque(PartitionKind::Uboot, b"uboot".to_vec()),
            Partition::linux(b"sma", &[9; 64], b"rootfs"),
        ]
    }

    fn key() -> SymmetricKey {
        SymmetricKey::new([1; 32], b"bbram")
    }

    #[test]
    fn package_round_trip() {
        let parts = sample_partitions();
        let img = package(&parts, &key(), &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        let bytes = img.encode();
        assert_eq!(&bytes[..4], b"RCBI");
        let decoded = BootableImage::decode(&bytes).unwrap();
        assert_eq!(decoded, img);
        let (out, ms) = unpack_and_measure(&decoded, &key()).unwrap();
        assert_eq!(out, parts);
        assert_eq!(ms, golden_measurements(&parts).unwrap());
        assert_eq!(ms.get(PartitionKind::Atf), &hash(b"atf"));
        assert!(out[1].pcap_direct_access().is_ok_and(|f| !f));
        assert_eq!(out[4].pk_ta().unwrap(), [7; 32]);
        assert_eq!(out[6].sma().unwrap(), (b"sma".to_vec(), [9; 64]));
    }

    #[test]
    fn partition_order_independent_input() {
        let mut parts = sample_partitions();
        parts.reverse();
        let img = package(&parts, &key(), &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        let kinds: Vec<_> = img.records.iter().map(|r| r.kind).collect();
        assert_eq!(kinds, PartitionKind::ALL);
    }

    #[test]
    fn missing_and_duplicate_partitions() {
        let mut parts = sample_partitions();
        parts.remove(3);
        assert_eq!(
            package(&parts, &key(), &mut ChaCha20Rng::seed_from_u64(1)),
            Err(ImageError::MissingPartition(PartitionKind::Atf))
        );
        let mut parts = sample_partitions();
        parts.push(Partition::opaque(PartitionKind::Uboot, vec![]));
        assert_eq!(
            package(&parts, &key(), &mut ChaCha20Rng::seed_from_u64(1)),
            Err(ImageError::DuplicatePartition(PartitionKind::Uboot))
        );
    }

    #[test]
    fn every_ciphertext_byte_flip_detected() {
        let img = package(&sample_partitions(), &key(), &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        for kind in PartitionKind::ALL {
            for i in 0..img.record(kind).ciphertext.len() {
                let mut bad = img.clone();
                bad.record_mut(kind).ciphertext[i] ^= 0x40;
                assert_eq!(unpack_and_measure(&bad, &key()).unwrap_err(), ImageError::AuthFail(kind));
            }
            let mut bad = img.clone();
            bad.record_mut(kind).nonce[0] ^= 1;
            assert_eq!(unpack_and_measure(&bad, &key()).unwrap_err(), ImageError::AuthFail(kind));
        }
        let wrong = SymmetricKey::new([2; 32], b"bbram");
        assert_eq!(unpack_and_measure(&img, &wrong).unwrap_err(), ImageError::AuthFail(PartitionKind::Fsbl));
    }

    #[test]
    fn truncated_image_is_malformed() {
        let bytes = package(&sample_partitions(), &key(), &mut ChaCha20Rng::seed_from_u64(3)).unwrap().encode();
        for cut in [0, 3, 6, 20, bytes.len() - 1] {
            assert!(matches!(BootableImage::decode(&bytes[..cut]), Err(ImageError::Malformed(_))));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(BootableImage::decode(&extra), Err(ImageError::Malformed(_))));
    }

    #[test]
    fn h_boot_is_ordered_concatenation() {
        let ms = golden_measurements(&sample_partitions()).unwrap();
        let hb = h_boot(&ms);
        assert_eq!(hb.len(), 336);
        let mut expected = Vec::new();
        for p in sample_partitions() {
            expected.extend_from_slice(&hash(&p.payload).0);
        }
        assert_eq!(hb.to_vec(), expected);
        let mut swapped = ms.clone();
        swapped.entries.swap(0, 1);
        assert_ne!(swapped.h_boot(), hb);
        assert_eq!(MeasurementSet::from_h_boot(&hb).unwrap(), ms);

        let mut parts = sample_partitions();
        parts[5].payload.push(0);
        let changed = golden_measurements(&parts).unwrap();
        assert_eq!(changed.diff(&ms), vec![PartitionKind::Uboot]);
    }

    fn ip(name: &str, secure: bool, base: u64) -> IpDescriptor {
        IpDescriptor {
            ip_id: IpId::from_name(name).unwrap(),
            kernel: "add32".into(),
            secure,
            status_addr: base,
            inputs: vec![base + 8, base + 16],
            outputs: vec![base + 24],
        }
    }

    #[test]
    fn bitstream_round_trip_and_region_checks() {
        let ips = vec![ip("adder", true, 0x7000_1000), ip("plain", false, 0x8000_0000)];
        let bytes = encode_bitstream(&ips, 100, &mut Drbg::new(b"f").unwrap()).unwrap();
        let c = decode_bitstream(&bytes).unwrap();
        assert_eq!(c.ips, ips);
        assert_eq!(c.payload.len(), 100);
        assert_eq!(c.encode().unwrap(), bytes);

        let low = vec![ip("adder", true, 0x6fff_f000)];
        assert_eq!(
            encode_bitstream(&low, 0, &mut Drbg::new(b"f").unwrap()),
            Err(ImageError::AddrOutOfRegion(0x6fff_f000))
        );
        let mut clash = vec![ip("a", true, 0x7000_1000), ip("b", true, 0x7000_2000)];
        clash[1].status_addr = 0x7000_1000;
        assert_eq!(
            BitstreamContainer { ips: clash, payload: vec![] }.encode(),
            Err(ImageError::AddrCollision(0x7000_1000))
        );
        assert!(matches!(
            BitstreamContainer { ips: vec![], payload: vec![] }.encode(),
            Err(ImageError::Malformed(_))
        ));
    }

    #[test]
    fn decode_rejects_out_of_region_secure_ip() {
        // Build the bytes by hand so the encoder's validation is bypassed.
        let mut w = Writer::new();
        w.raw(b"RCTB").u16(1).u16(1);
        w.raw(&IpId::from_name("x").unwrap().0).field16(b"echo").u8(1).u64(0x1000);
        w.u16(0).u16(0).field64(&[]);
        assert_eq!(decode_bitstream(&w.finish()), Err(ImageError::AddrOutOfRegion(0x1000)));
    }

    #[test]
    fn ip_id_names() {
        let id = IpId::from_name("adder").unwrap();
        assert_eq!(&id.0[..5], b"adder");
        assert_eq!(id.display(), "adder");
        assert!(IpId::from_name("").is_none());
        assert!(IpId::from_name("seventeen-chars!!").is_none());
        assert_eq!(PartitionKind::from_byte(3), Some(PartitionKind::Bit));
        assert_eq!(PartitionKind::from_byte(0), None);
        assert_eq!(PartitionKind::from_name("PMU_FW"), Some(PartitionKind::PmuFw));
    }
}
