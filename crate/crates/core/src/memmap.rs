// Licensed under the Apache-2.0 license

//! Physical address map of the simulated SoC.

use std::ops::Range;

/// Reserved secure memory holding secure IP registers; TrustZone-protected.
pub const SECURE_REGION: Range<u64> = 0x7000_0000..0x7010_0000;

/// REE <-> TEE shared buffer.
pub const SHARED_REGION: Range<u64> = 0x6000_0000..0x6000_0000 + SHARED_MEMORY_SIZE as u64;
pub const SHARED_MEMORY_SIZE: usize = 64 * 1024 * 1024;

/// Non-secure AXI window for PL IPs.
pub const PL_REGION: Range<u64> = 0x8000_0000..0x8010_0000;

pub const OCM_SIZE: usize = 256 * 1024;
/// Last OCM chunk, where the FSBL leaves the boot measurements.
pub const OCM_MEASUREMENT_CHUNK: Range<usize> = OCM_SIZE - 4096..OCM_SIZE;

pub fn is_secure(addr: u64) -> bool {
    SECURE_REGION.contains(&addr)
}

pub fn is_shared(addr: u64) -> bool {
    SHARED_REGION.contains(&addr)
}

pub fn is_pl(addr: u64) -> bool {
    PL_REGION.contains(&addr)
}
