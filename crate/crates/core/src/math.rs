//! Scalar kernels shared by the decoders and the metric code.

/// `ln(1 + e^x)` without overflow for large `|x|`.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Check-node update, exact form of `2 atanh(tanh(a/2) tanh(b/2))`.
///
/// Written as the min-sum term plus the two Jacobian corrections so that it
/// stays finite for any pair of finite inputs.
#[inline]
pub(crate) fn f_exact(a: f64, b: f64) -> f64 {
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    let (x, y) = ((a + b).abs(), (a - b).abs());
    let base = sign * a.abs().min(b.abs());
    // Both correction terms are below 1e-16 here and cancel to within 1e-18.
    if x > 38.0 && y > 38.0 {
        return base;
    }
    let (ex, ey) = ((-x).exp(), (-y).exp());
    base + ((ex - ey) / (1.0 + ey)).ln_1p()
}

#[inline]
pub(crate) fn f_min_sum(a: f64, b: f64) -> f64 {
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    sign * a.abs().min(b.abs())
}

/// Variable-node update given the partial sum of the left branch.
#[inline]
pub(crate) fn g(a: f64, b: f64, left: u8) -> f64 {
    if left == 0 {
        b + a
    } else {
        b - a
    }
}

/// Numerically stable `ln Σ e^{x_i}`. Empty input gives `-inf`.
pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Reverse the low `bits` bits of `index`.
#[inline]
pub(crate) fn bit_reverse(index: usize, bits: u32) -> usize {
    if bits == 0 {
        return 0;
    }
    index.reverse_bits() >> (usize::BITS - bits)
}

/// SplitMix64 finaliser; used to derive independent per-frame seeds.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
