//! Recurrent ranker: golden outputs from an independent numpy forward pass,
//! weight-file compatibility checks, and an analytic-gradient probe.

use std::path::PathBuf;

use polarflip::code::CodeDescription;
use polarflip::lstm::{count_ops, Fingerprint};
use polarflip::{LstmError, LstmWeights, PolarCode};
use proptest::prelude::*;
use serde::Deserialize;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn toy_code() -> PolarCode {
    let text = std::fs::read_to_string(data("toy_code.json")).unwrap();
    let desc: CodeDescription = serde_json::from_str(&text).unwrap();
    PolarCode::from_description(&desc).unwrap()
}

#[derive(Deserialize)]
struct Golden {
    list_size: usize,
    cases: Vec<GoldenCase>,
}

#[derive(Deserialize)]
struct GoldenCase {
    metrics: Vec<f64>,
    probs: Vec<f64>,
    argmax: usize,
}

fn golden() -> Golden {
    serde_json::from_str(&std::fs::read_to_string(data("toy_ranker_golden.json")).unwrap()).unwrap()
}

#[test]
fn golden_file_matches_reference_forward_pass() {
    let code = toy_code();
    let g = golden();
    let w = LstmWeights::load(&data("toy_ranker.json"), &code, g.list_size).unwrap();
    assert_eq!(w.hidden_size, 3);
    for case in &g.cases {
        let dist = w.rank(&w.normalize(&case.metrics)).unwrap();
        for (a, b) in dist.probs.iter().zip(&case.probs) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert_eq!(dist.argmax(), case.argmax);
        assert!((dist.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn ranker_code_must_match_the_live_code() {
    let code = toy_code();
    let path = data("toy_ranker.json");
    let wrong_list = LstmWeights::load(&path, &code, 4).unwrap_err();
    assert!(matches!(wrong_list, LstmError::FingerprintMismatch { .. }), "{wrong_list:?}");

    let other = PolarCode::construct(32, 16, Some(polarflip::CrcSpec::crc8()), 0.0).unwrap();
    if other.critical_set() != code.critical_set() {
        let err = LstmWeights::load(&path, &other, 2).unwrap_err();
        assert!(matches!(err, LstmError::FingerprintMismatch { .. }));
    }
    let bigger = PolarCode::construct(64, 32, Some(polarflip::CrcSpec::crc8()), 2.0).unwrap();
    assert!(matches!(LstmWeights::load(&path, &bigger, 2).unwrap_err(), LstmError::FingerprintMismatch { .. }));
}

#[test]
fn saved_weights_reload_identically() {
    let code = toy_code();
    let w = LstmWeights::load(&data("toy_ranker.json"), &code, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.json");
    w.save(&path).unwrap();
    assert_eq!(LstmWeights::load(&path, &code, 2).unwrap(), w);
}

#[test]
fn wrong_sequence_length_is_rejected() {
    let code = toy_code();
    let w = LstmWeights::load(&data("toy_ranker.json"), &code, 2).unwrap();
    assert_eq!(w.rank(&[0.0; 14]).unwrap_err(), LstmError::SequenceLength { expected: 15, got: 14 });
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gradients of -ln softmax(W_out h_T + b_out)[label] by backpropagation
/// through time, in the same flat layouts as the weight file.
struct Grads {
    w_input: Vec<f64>,
    w_recurrent: Vec<f64>,
    b_gate: Vec<f64>,
    w_out: Vec<f64>,
    b_out: Vec<f64>,
}

#[allow(clippy::needless_range_loop)]
fn analytic_gradient(w: &LstmWeights, seq: &[f64], label: usize) -> Grads {
    let h = w.hidden_size;
    let s = w.output_size;
    // Forward, keeping every step.
    let mut hs = vec![vec![0.0; h]];
    let mut cs = vec![vec![0.0; h]];
    let mut acts = Vec::new(); // (i, f, g, o) per step
    for &x in seq {
        let (hp, cp) = (hs.last().unwrap().clone(), cs.last().unwrap().clone());
        let z: Vec<f64> = (0..4 * h)
            .map(|r| w.b_gate[r] + w.w_input[r] * x + (0..h).map(|k| w.w_recurrent[r * h + k] * hp[k]).sum::<f64>())
            .collect();
        let i: Vec<f64> = (0..h).map(|u| logistic(z[u])).collect();
        let f: Vec<f64> = (0..h).map(|u| logistic(z[h + u])).collect();
        let g: Vec<f64> = (0..h).map(|u| z[2 * h + u].tanh()).collect();
        let o: Vec<f64> = (0..h).map(|u| logistic(z[3 * h + u])).collect();
        let c: Vec<f64> = (0..h).map(|u| f[u] * cp[u] + i[u] * g[u]).collect();
        let hn: Vec<f64> = (0..h).map(|u| o[u] * c[u].tanh()).collect();
        acts.push((i, f, g, o));
        hs.push(hn);
        cs.push(c);
    }
    let h_t = hs.last().unwrap();
    let logits: Vec<f64> =
        (0..s).map(|j| w.b_out[j] + (0..h).map(|k| w.w_out[j * h + k] * h_t[k]).sum::<f64>()).collect();
    let m = logits.iter().copied().fold(f64::MIN, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let p: Vec<f64> = logits.iter().map(|l| (l - m).exp() / z).collect();

    let mut grads = Grads {
        w_input: vec![0.0; 4 * h],
        w_recurrent: vec![0.0; 4 * h * h],
        b_gate: vec![0.0; 4 * h],
        w_out: vec![0.0; s * h],
        b_out: vec![0.0; s],
    };
    let dlogit: Vec<f64> = (0..s).map(|j| p[j] - f64::from(j == label)).collect();
    let mut dh = vec![0.0; h];
    for j in 0..s {
        grads.b_out[j] = dlogit[j];
        for k in 0..h {
            grads.w_out[j * h + k] = dlogit[j] * h_t[k];
            dh[k] += dlogit[j] * w.w_out[j * h + k];
        }
    }
    let mut dc = vec![0.0; h];
    for t in (0..seq.len()).rev() {
        let (i, f, g, o) = &acts[t];
        let (c, cp, hp) = (&cs[t + 1], &cs[t], &hs[t]);
        let mut dz = vec![0.0; 4 * h];
        for u in 0..h {
            let tc = c[u].tanh();
            let dcu = dc[u] + dh[u] * o[u] * (1.0 - tc * tc);
            dz[u] = dcu * g[u] * i[u] * (1.0 - i[u]);
            dz[h + u] = dcu * cp[u] * f[u] * (1.0 - f[u]);
            dz[2 * h + u] = dcu * i[u] * (1.0 - g[u] * g[u]);
            dz[3 * h + u] = dh[u] * tc * o[u] * (1.0 - o[u]);
            dc[u] = dcu * f[u];
        }
        let mut dh_prev = vec![0.0; h];
        for r in 0..4 * h {
            grads.b_gate[r] += dz[r];
            grads.w_input[r] += dz[r] * seq[t];
            for k in 0..h {
                grads.w_recurrent[r * h + k] += dz[r] * hp[k];
                dh_prev[k] += dz[r] * w.w_recurrent[r * h + k];
            }
        }
        dh = dh_prev;
    }
    grads
}

fn probe_model() -> LstmWeights {
    let fp = Fingerprint { n_bits: 16, k_info: 8, list_size: 2, cs_hash: "toy".into() };
    let mut w = LstmWeights::zeros(4, 1, 5, fp);
    let mut state = 0x9E37_79B9_7F4A_7C15_u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for v in w.w_input.iter_mut().chain(&mut w.w_recurrent).chain(&mut w.b_gate) {
        *v = 1.4 * next();
    }
    for v in w.w_out.iter_mut().chain(&mut w.b_out) {
        *v = 2.0 * next();
    }
    w
}

#[test]
fn finite_differences_match_backpropagation() {
    let w = probe_model();
    let seq = [0.3, -1.2, 0.8, 0.05, 1.7, -0.4, 0.9];
    let label = 3;
    let g = analytic_gradient(&w, &seq, label);
    let tensors: [(&str, &Vec<f64>); 5] = [
        ("w_input", &g.w_input),
        ("w_recurrent", &g.w_recurrent),
        ("b_gate", &g.b_gate),
        ("w_out", &g.w_out),
        ("b_out", &g.b_out),
    ];
    let mut checked = 0;
    for (name, grad) in tensors {
        for (idx, &analytic) in grad.iter().enumerate() {
            let numeric = w.finite_difference_gradient(&seq, label, name, idx, 1e-5).unwrap();
            let scale = analytic.abs().max(1e-3);
            assert!((numeric - analytic).abs() / scale < 1e-5, "{name}[{idx}]: numeric {numeric} analytic {analytic}");
            checked += 1;
        }
    }
    assert_eq!(checked, 16 + 64 + 16 + 20 + 5);
}

#[test]
fn instrumented_multiplies_follow_the_closed_form() {
    for hidden in [10usize, 100] {
        let buckets = 62;
        let fp = Fingerprint { n_bits: 512, k_info: 256, list_size: 8, cs_hash: "x".into() };
        let w = LstmWeights::zeros(hidden, 1, buckets, fp);
        let (_, ops) = w.rank_counted(&vec![0.1; 253]).unwrap();
        let per_step = ops.per_step_with_head().mults;
        let formula = count_ops(hidden as u64, buckets as u64, 8, 256, true).mults;
        println!("H={hidden}: counted {per_step} (+{} softmax), closed form {formula}", ops.softmax.mults);
        assert!(per_step <= formula);
        assert!(per_step + ops.softmax.mults <= formula + buckets as u64);
    }
}

proptest! {
    #[test]
    fn distributions_are_normalised_and_pure(seq in prop::collection::vec(-30.0f64..30.0, 15)) {
        let code = toy_code();
        let w = LstmWeights::load(&data("toy_ranker.json"), &code, 2).unwrap();
        let a = w.rank(&seq).unwrap();
        let b = w.rank(&seq).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.probs.iter().all(|&p| p >= 0.0));
        prop_assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
