//! Code construction, polar encoding, CRC handling and the critical set.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::math::bit_reverse;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum CodeError {
    #[error("block length {0} is not a power of two >= 2")]
    NotPowerOfTwo(usize),
    #[error("k_info {k} out of range for block length {n} (crc width {crc_width})")]
    KOutOfRange { k: usize, n: usize, crc_width: usize },
    #[error("unsupported crc: {0}")]
    InvalidCrc(String),
    #[error("length mismatch: expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("bit vector must be non-empty and contain only 0/1")]
    NonBinary,
    #[error("invalid information set: {0}")]
    InvalidInfoSet(String),
    #[error("code description: {0}")]
    Description(String),
}

/// Non-empty sequence of bits stored one per byte.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct BitVector(Vec<u8>);

impl BitVector {
    pub fn new(bits: Vec<u8>) -> Result<Self, CodeError> {
        if bits.is_empty() || bits.iter().any(|&b| b > 1) {
            return Err(CodeError::NonBinary);
        }
        Ok(Self(bits))
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "bit vector length must be positive");
        Self(vec![0; len])
    }

    /// Bits of `value`, most significant first, `len` of them.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len > 0 && len <= 64);
        Self((0..len).map(|i| ((value >> (len - 1 - i)) & 1) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }

    pub fn get(&self, index: usize) -> u8 {
        self.0[index]
    }

    pub fn flip(&mut self, index: usize) {
        self.0[index] ^= 1;
    }

    pub fn xor(&self, other: &BitVector) -> BitVector {
        assert_eq!(self.len(), other.len());
        BitVector(self.0.iter().zip(&other.0).map(|(a, b)| a ^ b).collect())
    }

    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }
}

impl TryFrom<Vec<u8>> for BitVector {
    type Error = CodeError;

    fn try_from(bits: Vec<u8>) -> Result<Self, Self::Error> {
        BitVector::new(bits)
    }
}

impl From<BitVector> for Vec<u8> {
    fn from(v: BitVector) -> Self {
        v.0
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector(")?;
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        write!(f, ")")
    }
}

/// Bitwise CRC, MSB first, generator given without its leading `x^width` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrcSpec {
    pub width: usize,
    pub poly: u32,
    pub init: u32,
}

impl CrcSpec {
    /// The 24-bit polynomial `0x864CFB` used for transport blocks in LTE/NR.
    pub const fn crc24a() -> Self {
        Self { width: 24, poly: 0x86_4CFB, init: 0 }
    }

    /// CCITT polynomial `x^16 + x^12 + x^5 + 1`.
    pub const fn crc16() -> Self {
        Self { width: 16, poly: 0x1021, init: 0 }
    }

    /// `x^8 + x^7 + x^4 + x^3 + x + 1`, the NR CRC-8 generator.
    pub const fn crc8() -> Self {
        Self { width: 8, poly: 0x9B, init: 0 }
    }

    pub fn validate(&self) -> Result<(), CodeError> {
        if ![8, 16, 24].contains(&self.width) {
            return Err(CodeError::InvalidCrc(format!("width {} not in {{8, 16, 24}}", self.width)));
        }
        let mask = self.mask();
        if self.poly & !mask != 0 || self.init & !mask != 0 {
            return Err(CodeError::InvalidCrc(format!(
                "poly {:#x} / init {:#x} wider than {} bits",
                self.poly, self.init, self.width
            )));
        }
        if self.poly & 1 == 0 {
            return Err(CodeError::InvalidCrc("generator must have a constant term".into()));
        }
        Ok(())
    }

    fn mask(&self) -> u32 {
        ((1u64 << self.width) - 1) as u32
    }

    /// CRC register after shifting in `bits`.
    pub fn remainder(&self, bits: &[u8]) -> u32 {
        let mask = self.mask();
        let top_shift = self.width - 1;
        let mut reg = self.init;
        for &b in bits {
            let top = ((reg >> top_shift) & 1) ^ u32::from(b & 1);
            reg = (reg << 1) & mask;
            if top == 1 {
                reg ^= self.poly;
            }
        }
        reg
    }

    /// Payload followed by its `width` CRC bits.
    pub fn attach(&self, payload: &BitVector) -> BitVector {
        let reg = self.remainder(payload.as_slice());
        let mut bits = payload.as_slice().to_vec();
        bits.extend((0..self.width).rev().map(|i| ((reg >> i) & 1) as u8));
        BitVector(bits)
    }

    pub fn check(&self, codeblock: &[u8]) -> bool {
        if codeblock.len() <= self.width {
            return false;
        }
        let split = codeblock.len() - self.width;
        let reg = self.remainder(&codeblock[..split]);
        codeblock[split..].iter().enumerate().all(|(i, &b)| u32::from(b) == (reg >> (self.width - 1 - i)) & 1)
    }
}

/// Append the CRC of `payload`.
pub fn crc_attach(payload: &BitVector, crc: &CrcSpec) -> BitVector {
    crc.attach(payload)
}

/// True iff the trailing `crc.width` bits are the CRC of the leading bits.
pub fn crc_check(codeblock: &BitVector, crc: &CrcSpec) -> bool {
    crc.check(codeblock.as_slice())
}

/// Static description of an (N, K) polar code with optional outer CRC.
///
/// `k_info` counts the CRC bits. Indices in `info_set` and `critical_set`
/// are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCode {
    n_bits: usize,
    k_info: usize,
    info_set: Vec<usize>,
    frozen_mask: Vec<bool>,
    crc: Option<CrcSpec>,
    critical_set: Vec<usize>,
    design_snr_db: f64,
    info_rank: Vec<Option<usize>>,
}

impl PolarCode {
    /// Pick the `k_info` most reliable synthetic channels under the Gaussian
    /// approximation at Eb/N0 = `design_snr_db`, rate `k_info / n_bits`.
    pub fn construct(
        n_bits: usize,
        k_info: usize,
        crc: Option<CrcSpec>,
        design_snr_db: f64,
    ) -> Result<Self, CodeError> {
        check_dimensions(n_bits, k_info, crc.as_ref())?;
        let rate = k_info as f64 / n_bits as f64;
        let means = ga_channel_means(n_bits, design_snr_db, rate);
        let mut order: Vec<usize> = (0..n_bits).collect();
        // Most reliable first; equal means resolved towards higher indices.
        order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(b.cmp(&a)));
        let mut info_set: Vec<usize> = order[..k_info].iter().map(|&i| i + 1).collect();
        info_set.sort_unstable();
        Self::build(n_bits, info_set, crc, design_snr_db)
    }

    /// Code with an explicit information set.
    pub fn with_info_set(
        n_bits: usize,
        info_set: Vec<usize>,
        crc: Option<CrcSpec>,
        design_snr_db: f64,
    ) -> Result<Self, CodeError> {
        check_dimensions(n_bits, info_set.len(), crc.as_ref())?;
        Self::build(n_bits, info_set, crc, design_snr_db)
    }

    fn build(
        n_bits: usize,
        mut info_set: Vec<usize>,
        crc: Option<CrcSpec>,
        design_snr_db: f64,
    ) -> Result<Self, CodeError> {
        info_set.sort_unstable();
        if info_set.windows(2).any(|w| w[0] == w[1]) {
            return Err(CodeError::InvalidInfoSet("duplicate index".into()));
        }
        if info_set.iter().any(|&i| i == 0 || i > n_bits) {
            return Err(CodeError::InvalidInfoSet(format!("indices must lie in 1..={n_bits}")));
        }
        let mut frozen_mask = vec![true; n_bits];
        let mut info_rank = vec![None; n_bits];
        for (rank, &i) in info_set.iter().enumerate() {
            frozen_mask[i - 1] = false;
            info_rank[i - 1] = Some(rank);
        }
        let critical_set = rate_one_leaders(&frozen_mask);
        Ok(Self { n_bits, k_info: info_set.len(), info_set, frozen_mask, crc, critical_set, design_snr_db, info_rank })
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn k_info(&self) -> usize {
        self.k_info
    }

    pub fn stages(&self) -> u32 {
        self.n_bits.trailing_zeros()
    }

    pub fn info_set(&self) -> &[usize] {
        &self.info_set
    }

    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen_mask
    }

    /// Whether 1-based position `index` is frozen.
    pub fn is_frozen(&self, index: usize) -> bool {
        self.frozen_mask[index - 1]
    }

    /// Position of 1-based `index` within the information set.
    pub fn info_rank(&self, index: usize) -> Option<usize> {
        self.info_rank.get(index.wrapping_sub(1)).copied().flatten()
    }

    pub fn crc(&self) -> Option<&CrcSpec> {
        self.crc.as_ref()
    }

    pub fn crc_width(&self) -> usize {
        self.crc.map_or(0, |c| c.width)
    }

    pub fn payload_len(&self) -> usize {
        self.k_info - self.crc_width()
    }

    pub fn critical_set(&self) -> &[usize] {
        &self.critical_set
    }

    pub fn design_snr_db(&self) -> f64 {
        self.design_snr_db
    }

    pub fn rate(&self) -> f64 {
        self.k_info as f64 / self.n_bits as f64
    }

    /// Attach the code's CRC (identity when the code has none).
    pub fn crc_attach(&self, payload: &BitVector) -> Result<BitVector, CodeError> {
        if payload.len() != self.payload_len() {
            return Err(CodeError::LengthMismatch { expected: self.payload_len(), got: payload.len() });
        }
        Ok(match &self.crc {
            Some(crc) => crc.attach(payload),
            None => payload.clone(),
        })
    }

    /// CRC verdict on a K-bit message; codes without a CRC always pass.
    pub fn crc_check(&self, message: &[u8]) -> bool {
        match &self.crc {
            Some(crc) => message.len() == self.k_info && crc.check(message),
            None => true,
        }
    }

    /// Scatter a K-bit message into the N-bit `u` vector (frozen = 0).
    pub fn expand(&self, message: &BitVector) -> Result<BitVector, CodeError> {
        if message.len() != self.k_info {
            return Err(CodeError::LengthMismatch { expected: self.k_info, got: message.len() });
        }
        let mut u = vec![0u8; self.n_bits];
        for (&pos, &b) in self.info_set.iter().zip(message.as_slice()) {
            u[pos - 1] = b;
        }
        Ok(BitVector(u))
    }

    /// Gather the information positions of an N-bit vector.
    pub fn extract(&self, u: &[u8]) -> BitVector {
        BitVector(self.info_set.iter().map(|&p| u[p - 1]).collect())
    }

    /// `x = u F^{⊗n} B_N` for a K-bit message placed on the information set.
    pub fn encode(&self, message: &BitVector) -> Result<BitVector, CodeError> {
        let u = self.expand(message)?;
        Ok(polar_transform(&u))
    }

    /// Sorted first leaves of the maximal rate-1 subtrees.
    pub fn critical_set_of(&self) -> Vec<usize> {
        rate_one_leaders(&self.frozen_mask)
    }

    /// Short stable hash of the critical set, used to fingerprint weight files.
    pub fn critical_set_hash(&self) -> String {
        let text = self.critical_set.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn description(&self) -> CodeDescription {
        CodeDescription {
            format_version: CodeDescription::VERSION,
            n_bits: self.n_bits,
            k_info: self.k_info,
            info_set: self.info_set.clone(),
            crc: self.crc,
            critical_set: self.critical_set.clone(),
            design_snr_db: self.design_snr_db,
        }
    }

    pub fn from_description(desc: &CodeDescription) -> Result<Self, CodeError> {
        if desc.format_version != CodeDescription::VERSION {
            return Err(CodeError::Description(format!("unsupported format_version {}", desc.format_version)));
        }
        if desc.info_set.len() != desc.k_info {
            return Err(CodeError::Description("k_info disagrees with info_set".into()));
        }
        let code = Self::with_info_set(desc.n_bits, desc.info_set.clone(), desc.crc, desc.design_snr_db)?;
        if code.critical_set != desc.critical_set {
            return Err(CodeError::Description("critical_set inconsistent with info_set".into()));
        }
        Ok(code)
    }
}

fn check_dimensions(n: usize, k: usize, crc: Option<&CrcSpec>) -> Result<(), CodeError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(CodeError::NotPowerOfTwo(n));
    }
    let crc_width = crc.map_or(0, |c| c.width);
    if let Some(c) = crc {
        c.validate()?;
    }
    if k == 0 || k > n || crc_width >= k {
        return Err(CodeError::KOutOfRange { k, n, crc_width });
    }
    Ok(())
}

/// Versioned JSON form of a [`PolarCode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeDescription {
    pub format_version: u32,
    pub n_bits: usize,
    pub k_info: usize,
    pub info_set: Vec<usize>,
    pub crc: Option<CrcSpec>,
    pub critical_set: Vec<usize>,
    pub design_snr_db: f64,
}

impl CodeDescription {
    pub const VERSION: u32 = 1;
}

/// In-place butterfly for `u F^{⊗n}` followed by the bit-reversal permutation.
pub fn polar_transform(u: &BitVector) -> BitVector {
    let n = u.len();
    assert!(n.is_power_of_two(), "length must be a power of two");
    let mut v = u.as_slice().to_vec();
    let mut half = 1;
    while half < n {
        for block in v.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter()) {
                *a ^= *b;
            }
        }
        half *= 2;
    }
    let bits = n.trailing_zeros();
    BitVector((0..n).map(|i| v[bit_reverse(i, bits)]).collect())
}

/// Encode a full N-bit `u` vector.
pub fn encode_u(u: &BitVector) -> BitVector {
    polar_transform(u)
}

fn rate_one_leaders(frozen_mask: &[bool]) -> Vec<usize> {
    fn walk(mask: &[bool], offset: usize, out: &mut Vec<usize>) {
        if mask.iter().all(|&f| !f) {
            out.push(offset + 1);
        } else if mask.len() > 1 {
            let (left, right) = mask.split_at(mask.len() / 2);
            walk(left, offset, out);
            walk(right, offset + left.len(), out);
        }
    }
    let mut out = Vec::new();
    walk(frozen_mask, 0, &mut out);
    out
}

/// Per-position mean LLR of the synthetic channels under the Gaussian
/// approximation, natural (non bit-reversed) order.
pub fn ga_channel_means(n_bits: usize, ebn0_db: f64, rate: f64) -> Vec<f64> {
    let sigma2 = 1.0 / (2.0 * rate * 10f64.powf(ebn0_db / 10.0));
    let mut means = vec![2.0 / sigma2];
    while means.len() < n_bits {
        // Every node splits into its check-node (left) and variable-node
        // (right) child, matching the order the decoder visits subtrees.
        means = means.iter().flat_map(|&m| [ga_check_node(m), 2.0 * m]).collect();
    }
    means
}

/// `phi^{-1}(1 - (1 - phi(m))^2)` in log domain.
fn ga_check_node(m: f64) -> f64 {
    let lp = ln_phi(m);
    let target = lp + (2.0 - lp.exp()).ln();
    inv_ln_phi(target)
}

/// `ln phi(x)` using Chung's two-piece approximation.
fn ln_phi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < 10.0 {
        -0.4527 * x.powf(0.86) + 0.0218
    } else {
        0.5 * (std::f64::consts::PI / x).ln() - x / 4.0 + (1.0 - 10.0 / (7.0 * x)).ln()
    }
}

fn inv_ln_phi(target: f64) -> f64 {
    if target >= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while ln_phi(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ln_phi(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions() {
        assert_eq!(PolarCode::construct(12, 4, None, 2.0), Err(CodeError::NotPowerOfTwo(12)));
        assert!(matches!(PolarCode::construct(8, 9, None, 2.0), Err(CodeError::KOutOfRange { .. })));
        assert!(matches!(PolarCode::construct(8, 0, None, 2.0), Err(CodeError::KOutOfRange { .. })));
        assert!(matches!(
            PolarCode::construct(64, 24, Some(CrcSpec::crc24a()), 2.0),
            Err(CodeError::KOutOfRange { .. })
        ));
        let bad = CrcSpec { width: 12, poly: 0x80F, init: 0 };
        assert!(matches!(PolarCode::construct(64, 32, Some(bad), 2.0), Err(CodeError::InvalidCrc(_))));
    }

    #[test]
    fn canonical_8_4_construction() {
        let code = PolarCode::construct(8, 4, None, 2.0).unwrap();
        assert_eq!(code.info_set(), &[4, 6, 7, 8]);
        assert_eq!(code.critical_set(), &[4, 6, 7]);
    }

    #[test]
    fn rate_one_code() {
        let code = PolarCode::construct(16, 16, None, 2.0).unwrap();
        assert_eq!(code.info_set(), (1..=16).collect::<Vec<_>>().as_slice());
        assert!(code.frozen_mask().iter().all(|&f| !f));
        assert_eq!(code.critical_set(), &[1]);
    }

    #[test]
    fn n2_transform() {
        assert_eq!(polar_transform(&BitVector::new(vec![1, 0]).unwrap()).as_slice(), &[1, 0]);
        assert_eq!(polar_transform(&BitVector::new(vec![1, 1]).unwrap()).as_slice(), &[0, 1]);
    }

    #[test]
    fn last_row_is_all_ones() {
        let mut u = vec![0u8; 8];
        u[7] = 1;
        assert_eq!(polar_transform(&BitVector::new(u).unwrap()).as_slice(), &[1; 8]);
    }

    #[test]
    fn encode_rejects_wrong_length() {
        let code = PolarCode::construct(8, 4, None, 2.0).unwrap();
        assert_eq!(code.encode(&BitVector::zeros(3)), Err(CodeError::LengthMismatch { expected: 4, got: 3 }));
    }

    #[test]
    fn crc_zero_payload_gives_zero_crc() {
        let out = CrcSpec::crc24a().attach(&BitVector::zeros(232));
        assert_eq!(out.len(), 256);
        assert_eq!(out.weight(), 0);
    }

    #[test]
    fn crc_attach_checks_payload_length() {
        let code = PolarCode::construct(512, 256, Some(CrcSpec::crc24a()), 2.0).unwrap();
        assert!(code.crc_attach(&BitVector::zeros(232)).is_ok());
        assert_eq!(code.crc_attach(&BitVector::zeros(256)), Err(CodeError::LengthMismatch { expected: 232, got: 256 }));
    }

    #[test]
    fn crc_nonzero_init_round_trip() {
        let crc = CrcSpec { width: 16, poly: 0x1021, init: 0xFFFF };
        let payload = BitVector::from_u64(0xDEAD_BEEF, 32);
        let block = crc.attach(&payload);
        assert!(crc.check(block.as_slice()));
        let mut bad = block.clone();
        bad.flip(3);
        assert!(!crc.check(bad.as_slice()));
    }

    #[test]
    fn bit_vector_validation() {
        assert_eq!(BitVector::new(vec![]), Err(CodeError::NonBinary));
        assert_eq!(BitVector::new(vec![0, 2]), Err(CodeError::NonBinary));
        let v: Result<BitVector, _> = serde_json::from_str("[0,1,3]");
        assert!(v.is_err());
    }

    #[test]
    fn description_round_trip() {
        let code = PolarCode::construct(64, 32, Some(CrcSpec::crc8()), 2.0).unwrap();
        let json = serde_json::to_string(&code.description()).unwrap();
        let back: CodeDescription = serde_json::from_str(&json).unwrap();
        assert_eq!(PolarCode::from_description(&back).unwrap(), code);

        let mut tampered = code.description();
        tampered.critical_set.pop();
        assert!(PolarCode::from_description(&tampered).is_err());
    }

    #[test]
    fn ga_means_are_monotone_in_snr() {
        let lo = ga_channel_means(64, 0.0, 0.5);
        let hi = ga_channel_means(64, 3.0, 0.5);
        assert!(lo.iter().zip(&hi).all(|(a, b)| a < b));
    }
}
