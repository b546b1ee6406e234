// Licensed under the Apache-2.0 license

//! Ring-oscillator PUF model.
//!
//! Each simulated device owns `N` oscillators whose nominal frequencies
//! are fixed by its device seed (manufacturing variation). A response bit
//! compares the noisy oscillation counts of one selected pair over a fixed
//! counting interval; `K` repeated trials are majority-voted.

use std::collections::HashSet;

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::crypto::{hash, Drbg};

pub const DEFAULT_OSCILLATORS: usize = 64;
pub const DEFAULT_BASE_FREQUENCY: f64 = 100e6;
pub const DEFAULT_SPREAD: f64 = 1e6;
pub const DEFAULT_NOISE_SIGMA: f64 = 2e3;
pub const DEFAULT_INTERVAL: f64 = 1e-3;
pub const DEFAULT_VOTES: u32 = 11;

/// Pairs per enrolled authentication challenge.
pub const CRP_CHALLENGE_PAIRS: usize = 64;
/// Pairs per seed-extraction challenge.
pub const SEED_CHALLENGE_PAIRS: usize = 256;
pub const MAX_CHALLENGE_PAIRS: usize = 256;
/// Repeated majority evaluations a pair must answer identically before
/// it is accepted into an enrolled challenge.
pub const DEFAULT_STABILITY_ROUNDS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PufError {
    #[error("invalid PUF parameters")]
    BadParams,
    #[error("challenge selects the same oscillator twice")]
    SameIndex,
    #[error("oscillator index out of range")]
    IndexOutOfRange,
    #[error("malformed challenge or response encoding")]
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PufParams {
    pub oscillators: usize,
    pub base_frequency: f64,
    pub spread: f64,
    pub noise_sigma: f64,
    pub interval: f64,
    pub votes: u32,
}

impl Default for PufParams {
    fn default() -> Self {
        PufParams {
            oscillators: DEFAULT_OSCILLATORS,
            base_frequency: DEFAULT_BASE_FREQUENCY,
            spread: DEFAULT_SPREAD,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            interval: DEFAULT_INTERVAL,
            votes: DEFAULT_VOTES,
        }
    }
}

impl PufParams {
    pub fn noiseless() -> Self {
        PufParams {
            noise_sigma: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoPufModel {
    device_seed: [u8; 32],
    frequencies: Vec<f64>,
    noise_sigma: f64,
    interval: f64,
    votes: u32,
}

/// Oscillator pair selectors, one pair per response bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Challenge {
    pub pairs: Vec<(u8, u8)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Response {
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crp {
    pub challenge: Challenge,
    pub response: Response,
    pub consumed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CrpSet {
    pub entries: Vec<Crp>,
}

/// Maps 8 stream bytes to a uniform value in `[-1, 1)`.
fn unit_interval(bytes: [u8; 8]) -> f64 {
    let mantissa = u64::from_be_bytes(bytes) >> 11;
    (mantissa as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

pub fn instantiate(device_seed: [u8; 32], params: PufParams) -> Result<RoPufModel, PufError> {
    let PufParams {
        oscillators,
        base_frequency,
        spread,
        noise_sigma,
        interval,
        votes,
    } = params;
    let valid = (2..=256).contains(&oscillators)
        && votes % 2 == 1
        && noise_sigma.is_finite()
        && noise_sigma >= 0.0
        && interval.is_finite()
        && interval > 0.0
        && spread.is_finite()
        && spread >= 0.0
        && base_frequency - spread > 0.0;
    if !valid {
        return Err(PufError::BadParams);
    }
    let mut stream = Drbg::new(&device_seed).expect("seed is non-empty");
    let frequencies = (0..oscillators)
        .map(|_| base_frequency + spread * unit_interval(stream.array()))
        .collect();
    Ok(RoPufModel {
        device_seed,
        frequencies,
        noise_sigma,
        interval,
        votes,
    })
}

impl RoPufModel {
    pub fn with_frequencies(frequencies: Vec<f64>, noise_sigma: f64, interval: f64, votes: u32) -> Result<Self, PufError> {
        if frequencies.len() < 2
            || frequencies.len() > 256
            || frequencies.iter().any(|f| f.is_nan() || *f <= 0.0)
            || votes.is_multiple_of(2)
            || noise_sigma.is_nan()
            || noise_sigma < 0.0
            || interval.is_nan()
            || interval <= 0.0
        {
            return Err(PufError::BadParams);
        }
        Ok(RoPufModel {
            device_seed: [0; 32],
            frequencies,
            noise_sigma,
            interval,
            votes,
        })
    }

    pub fn device_seed(&self) -> &[u8; 32] {
        &self.device_seed
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn oscillators(&self) -> usize {
        self.frequencies.len()
    }

    pub fn votes(&self) -> u32 {
        self.votes
    }

    fn count(&self, index: usize, rng: &mut dyn RngCore) -> i64 {
        let noise = if self.noise_sigma > 0.0 {
            Normal::new(0.0, self.noise_sigma)
                .expect("sigma validated at construction")
                .sample(rng)
        } else {
            0.0
        };
        ((self.frequencies[index] + noise) * self.interval).floor() as i64
    }

    fn check_pair(&self, i: u8, j: u8) -> Result<(usize, usize), PufError> {
        let (i, j) = (i as usize, j as usize);
        if i == j {
            return Err(PufError::SameIndex);
        }
        if i >= self.oscillators() || j >= self.oscillators() {
            return Err(PufError::IndexOutOfRange);
        }
        Ok((i, j))
    }

    /// One counting trial: 1 iff oscillator `i` counted strictly more edges.
    pub fn evaluate_bit(&self, i: u8, j: u8, rng: &mut dyn RngCore) -> Result<bool, PufError> {
        let (i, j) = self.check_pair(i, j)?;
        Ok(self.count(i, rng) > self.count(j, rng))
    }

    fn majority_bit(&self, i: u8, j: u8, rng: &mut dyn RngCore) -> Result<bool, PufError> {
        let mut ones = 0;
        for _ in 0..self.votes {
            if self.evaluate_bit(i, j, rng)? {
                ones += 1;
            }
        }
        Ok(ones * 2 > self.votes)
    }

    pub fn evaluate(&self, challenge: &Challenge, rng: &mut dyn RngCore) -> Result<Response, PufError> {
        if challenge.pairs.is_empty() || challenge.pairs.len() > MAX_CHALLENGE_PAIRS {
            return Err(PufError::BadParams);
        }
        for &(i, j) in &challenge.pairs {
            self.check_pair(i, j)?;
        }
        let bits = challenge
            .pairs
            .iter()
            .map(|&(i, j)| self.majority_bit(i, j, rng))
            .collect::<Result<_, _>>()?;
        Ok(Response { bits })
    }
}

/// Draws an oscillator index uniformly from the stream.
fn draw_index(stream: &mut Drbg, n: usize) -> u8 {
    let limit = (256 / n) * n;
    loop {
        let b = stream.array::<1>()[0] as usize;
        if b < limit {
            return (b % n) as u8;
        }
    }
}

/// Draws a challenge of `len` pairs with distinct indices per pair.
pub fn random_challenge(stream: &mut Drbg, oscillators: usize, len: usize) -> Challenge {
    let mut pairs = Vec::with_capacity(len);
    while pairs.len() < len {
        let i = draw_index(stream, oscillators);
        let j = draw_index(stream, oscillators);
        if i != j {
            pairs.push((i, j));
        }
    }
    Challenge { pairs }
}

/// Enrolls `count` distinct challenges of [`CRP_CHALLENGE_PAIRS`] pairs.
///
/// A candidate pair is kept only if `stability_rounds` majority evaluations
/// agree; the agreed value becomes the enrolled bit.
pub fn enroll_crps_with(
    model: &RoPufModel,
    count: usize,
    challenge_source: &mut Drbg,
    noise: &mut dyn RngCore,
    stability_rounds: u32,
) -> CrpSet {
    let n = model.oscillators();
    let mut seen = HashSet::with_capacity(count);
    let mut entries = Vec::with_capacity(count);
    while entries.len() < count {
        let mut pairs = Vec::with_capacity(CRP_CHALLENGE_PAIRS);
        let mut bits = Vec::with_capacity(CRP_CHALLENGE_PAIRS);
        while pairs.len() < CRP_CHALLENGE_PAIRS {
            let i = draw_index(challenge_source, n);
            let j = draw_index(challenge_source, n);
            if i == j {
                continue;
            }
            let first = model.majority_bit(i, j, noise).expect("indices drawn in range");
            let stable = (1..stability_rounds.max(1))
                .all(|_| model.majority_bit(i, j, noise).expect("indices drawn in range") == first);
            if stable {
                pairs.push((i, j));
                bits.push(first);
            }
        }
        let challenge = Challenge { pairs };
        if seen.insert(challenge.clone()) {
            entries.push(Crp {
                challenge,
                response: Response { bits },
                consumed: false,
            });
        }
    }
    CrpSet { entries }
}

pub fn enroll_crps(model: &RoPufModel, count: usize, challenge_source: &mut Drbg, noise: &mut dyn RngCore) -> CrpSet {
    enroll_crps_with(model, count, challenge_source, noise, DEFAULT_STABILITY_ROUNDS)
}

/// Hash of the packed response to a 256-pair challenge, truncated to 32 bytes.
pub fn seed_from_response(response: &Response) -> Result<[u8; 32], PufError> {
    if response.bits.len() != SEED_CHALLENGE_PAIRS {
        return Err(PufError::BadParams);
    }
    let digest = hash(&response.pack());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest.0[..32]);
    Ok(seed)
}

pub fn seed_from_puf(model: &RoPufModel, challenge: &Challenge, rng: &mut dyn RngCore) -> Result<[u8; 32], PufError> {
    if challenge.pairs.len() != SEED_CHALLENGE_PAIRS {
        return Err(PufError::BadParams);
    }
    seed_from_response(&model.evaluate(challenge, rng)?)
}

impl Challenge {
    pub fn new(pairs: Vec<(u8, u8)>) -> Self {
        Challenge { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `count (u16 BE) || (i, j)*`
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + 2 * self.pairs.len());
        out.extend_from_slice(&(self.pairs.len() as u16).to_be_bytes());
        for &(i, j) in &self.pairs {
            out.push(i);
            out.push(j);
        }
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, PufError> {
        let (count, rest) = split_u16(bytes)?;
        if rest.len() != count as usize * 2 {
            return Err(PufError::Malformed);
        }
        Ok(Challenge {
            pairs: rest.chunks_exact(2).map(|p| (p[0], p[1])).collect(),
        })
    }
}

impl Response {
    /// Bits packed MSB-first; trailing pad bits are zero.
    pub fn pack(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (k, &bit) in self.bits.iter().enumerate() {
            if bit {
                out[k / 8] |= 0x80 >> (k % 8);
            }
        }
        out
    }

    pub fn unpack(packed: &[u8], bit_count: usize) -> Result<Self, PufError> {
        if packed.len() != bit_count.div_ceil(8) {
            return Err(PufError::Malformed);
        }
        let bits = (0..bit_count).map(|k| packed[k / 8] & (0x80 >> (k % 8)) != 0).collect();
        Ok(Response { bits })
    }

    /// `bit count (u16 BE) || packed bits`
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = (self.bits.len() as u16).to_be_bytes().to_vec();
        out.extend(self.pack());
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, PufError> {
        let (count, rest) = split_u16(bytes)?;
        let r = Self::unpack(rest, count as usize)?;
        if r.pack() != rest {
            // nonzero pad bits
            return Err(PufError::Malformed);
        }
        Ok(r)
    }

    pub fn hamming_distance(&self, other: &Response) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }
}

fn split_u16(bytes: &[u8]) -> Result<(u16, &[u8]), PufError> {
    if bytes.len() < 2 {
        return Err(PufError::Malformed);
    }
    Ok((u16::from_be_bytes([bytes[0], bytes[1]]), &bytes[2..]))
}

impl CrpSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn consumed(&self) -> usize {
        self.entries.iter().filter(|e| e.consumed).count()
    }

    /// Marks the first unconsumed entry consumed and returns it.
    pub fn take_next(&mut self) -> Option<Crp> {
        let entry = self.entries.iter_mut().find(|e| !e.consumed)?;
        entry.consumed = true;
        Some(entry.clone())
    }
}
