//! BPSK over AWGN and the channel LLR front end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::code::{BitVector, CodeError};
use crate::math::mix64;

/// Channel LLRs are clipped to `±LLR_MAX` (natural log units).
pub const LLR_MAX: f64 = 40.0;

pub type LlrVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub ebn0_db: f64,
    pub code_rate: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl ChannelParams {
    pub fn new(ebn0_db: f64, code_rate: f64, seed: u64) -> Result<Self, CodeError> {
        let sigma = ebn0_to_sigma(ebn0_db, code_rate)?;
        Ok(Self { ebn0_db, code_rate, sigma, seed })
    }
}

/// Noise standard deviation for unit-energy BPSK at the given Eb/N0 and rate.
pub fn ebn0_to_sigma(ebn0_db: f64, code_rate: f64) -> Result<f64, CodeError> {
    if !(code_rate > 0.0 && code_rate <= 1.0) {
        return Err(CodeError::Description(format!("code rate {code_rate} outside (0, 1]")));
    }
    Ok((1.0 / (2.0 * code_rate * 10f64.powf(ebn0_db / 10.0))).sqrt())
}

/// `2y / sigma^2`, clipped.
#[inline]
pub fn llr_of(y: f64, sigma: f64) -> f64 {
    (2.0 * y / (sigma * sigma)).clamp(-LLR_MAX, LLR_MAX)
}

/// Modulate, add noise drawn from the generator seeded by `params.seed`,
/// and return clipped LLRs.
pub fn transmit(codeword: &BitVector, params: &ChannelParams) -> LlrVector {
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
    transmit_with(codeword, params.sigma, &mut rng)
}

pub fn transmit_with<R: Rng + ?Sized>(codeword: &BitVector, sigma: f64, rng: &mut R) -> LlrVector {
    codeword
        .as_slice()
        .iter()
        .map(|&x| {
            let s = 1.0 - 2.0 * f64::from(x);
            let n: f64 = rng.sample(StandardNormal);
            llr_of(s + sigma * n, sigma)
        })
        .collect()
}

/// Independent generator for frame `frame_index` of a run seeded with
/// `master_seed`. The stream depends only on the pair, never on scheduling.
pub fn frame_rng(master_seed: u64, frame_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(mix64(master_seed));
    rng.set_stream(frame_index);
    rng
}

/// Derived per-frame seed for callers that prefer plain integers.
pub fn frame_seed(master_seed: u64, frame_index: u64) -> u64 {
    mix64(mix64(master_seed) ^ frame_index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}
