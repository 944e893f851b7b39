//! Code construction and critical-set extraction against independent oracles.

use polarflip::channel::{ebn0_to_sigma, frame_rng, transmit_with};
use polarflip::{BitVector, PolarCode};
use proptest::prelude::*;
use rand::Rng;

/// Bhattacharyya parameters of the synthetic channels, 1-based order
/// matching the decoder (z -> [2z - z^2, z^2] per level).
fn bhattacharyya(n: usize, ebn0_db: f64, rate: f64) -> Vec<f64> {
    let snr = 2.0 * rate * 10f64.powf(ebn0_db / 10.0);
    let mut z = vec![(-snr / 2.0).exp()];
    while z.len() < n {
        z = z.iter().flat_map(|&v| [2.0 * v - v * v, v * v]).collect();
    }
    z
}

fn best_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (1..=scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a - 1].total_cmp(&scores[b - 1]).then(b.cmp(&a)));
    let mut set = idx[..k].to_vec();
    set.sort_unstable();
    set
}

fn f(a: f64, b: f64) -> f64 {
    2.0 * ((a / 2.0).tanh() * (b / 2.0).tanh()).clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh()
}

/// Genie-aided SC on all-frozen-known input `u`: records, per position,
/// whether the hard decision from the channel LLRs (natural order) is wrong.
fn genie_errors(llr: &[f64], u: &[u8], errors: &mut [u64]) -> Vec<u8> {
    let n = llr.len();
    if n == 1 {
        errors[0] += u64::from((llr[0] < 0.0) as u8 != u[0]);
        return vec![u[0]];
    }
    let h = n / 2;
    let left: Vec<f64> = (0..h).map(|j| f(llr[j], llr[h + j])).collect();
    let bl = genie_errors(&left, &u[..h], &mut errors[..h]);
    let right: Vec<f64> = (0..h).map(|j| llr[h + j] + (1.0 - 2.0 * f64::from(bl[j])) * llr[j]).collect();
    let br = genie_errors(&right, &u[h..], &mut errors[h..]);
    bl.iter().zip(&br).map(|(a, b)| a ^ b).chain(br.iter().copied()).collect()
}

#[test]
fn eight_four_code_at_two_db() {
    let code = PolarCode::construct(8, 4, None, 2.0).unwrap();
    assert_eq!(code.info_set(), &[4, 6, 7, 8]);
    assert_eq!(code.critical_set(), &[4, 6, 7]);
    assert_eq!(best_k(&bhattacharyya(8, 2.0, 0.5), 4), vec![4, 6, 7, 8]);
}

#[test]
fn genie_aided_error_rates_pick_the_same_set() {
    let n = 8;
    let sigma = ebn0_to_sigma(2.0, 0.5).unwrap();
    let code = PolarCode::construct(n, n, None, 2.0).unwrap();
    let mut errors = vec![0u64; n];
    for frame in 0..40_000 {
        let mut rng = frame_rng(77, frame);
        let u = BitVector::new((0..n).map(|_| rng.random_range(0..2u8)).collect()).unwrap();
        let llr = transmit_with(&code.encode(&u).unwrap(), sigma, &mut rng);
        // Undo the output bit reversal so the recursion runs in natural order.
        let natural: Vec<f64> = (0..n).map(|j| llr[j.reverse_bits() >> (usize::BITS - 3)]).collect();
        genie_errors(&natural, u.as_slice(), &mut errors);
    }
    let rates: Vec<f64> = errors.iter().map(|&e| e as f64).collect();
    assert_eq!(best_k(&rates, 4), PolarCode::construct(8, 4, None, 2.0).unwrap().info_set());
}

#[test]
fn larger_codes_overlap_the_bhattacharyya_ranking() {
    for (n, k) in [(64, 32), (512, 256)] {
        let code = PolarCode::construct(n, k, None, 2.0).unwrap();
        let oracle = best_k(&bhattacharyya(n, 2.0, k as f64 / n as f64), k);
        let common = code.info_set().iter().filter(|i| oracle.contains(i)).count();
        assert!(common as f64 >= 0.95 * k as f64, "N={n}: {common}/{k} shared");
    }
}

#[test]
fn rate_one_critical_set() {
    let code = PolarCode::construct(32, 32, None, 2.0).unwrap();
    assert_eq!(code.critical_set(), &[1]);
}

#[test]
fn construction_is_deterministic() {
    let a = PolarCode::construct(512, 256, Some(polarflip::CrcSpec::crc24a()), 2.0).unwrap();
    let b = PolarCode::construct(512, 256, Some(polarflip::CrcSpec::crc24a()), 2.0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.critical_set_hash(), b.critical_set_hash());
}

/// Brute force: every aligned dyadic block whose leaves are all information
/// bits and whose parent block is not; report its first leaf.
fn critical_set_by_enumeration(n: usize, info: &[usize]) -> Vec<usize> {
    let is_info = |i: usize| info.binary_search(&i).is_ok();
    let all_info = |start: usize, size: usize| (start..start + size).all(is_info);
    let mut out = Vec::new();
    let mut size = 1;
    while size <= n {
        for start in (1..=n).step_by(size) {
            if !all_info(start, size) {
                continue;
            }
            let parent_size = 2 * size;
            let parent_start = (start - 1) / parent_size * parent_size + 1;
            if parent_size > n || !all_info(parent_start, parent_size) {
                out.push(start);
            }
        }
        size *= 2;
    }
    out.sort_unstable();
    out
}

fn info_set(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::btree_set(1..=n, 1..=n).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #[test]
    fn critical_set_matches_enumeration(info in info_set(32)) {
        let code = PolarCode::with_info_set(32, info.clone(), None, 0.0).unwrap();
        prop_assert_eq!(code.critical_set().to_vec(), critical_set_by_enumeration(32, &info));
    }

    #[test]
    fn critical_set_properties(info in info_set(64)) {
        let code = PolarCode::with_info_set(64, info.clone(), None, 0.0).unwrap();
        let cs = code.critical_set();
        prop_assert!(cs.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(cs.iter().all(|c| info.contains(c)));
        prop_assert_eq!(code.critical_set_of(), cs.to_vec());
    }
}

#[test]
fn reference_code_sizes() {
    let code = PolarCode::construct(512, 256, Some(polarflip::CrcSpec::crc24a()), 2.0).unwrap();
    let cs = code.critical_set();
    let buckets = polarflip::flip::BucketMap::new(&code, 8).num_buckets();
    println!("(512,256) CRC-24 at 2 dB: |CS| = {}, flip buckets = {buckets}", cs.len());
    assert_eq!(buckets, cs.iter().filter(|&&c| c > code.info_set()[2]).count() + 1);
    assert_eq!(code.info_set().len(), 256);
}
