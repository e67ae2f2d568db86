#![allow(clippy::excessive_precision)]

mod common;

use fwqa::encoder::{bilstm_encode, init_lstm, LstmVars};
use fwqa::graph::Graph;
use fwqa::model::{answer_question, attention_maps, init_params, score_qa, ModelConfig, ModelKind};
use fwqa::params::{GradSet, ParamStore};
use fwqa::pipeline::random_example;
use fwqa::tensor::{self, Tensor};
use fwqa::train::{adam_step, AdamConfig, AdamPreset, AdamState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{max_abs_diff, to_mat};

const KINDS: [ModelKind; 4] = [
    ModelKind::Rewatcher,
    ModelKind::Rereader,
    ModelKind::Forgettable,
    ModelKind::Straightforward,
];

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (m, k, n) = (
            rng.random_range(1..7),
            rng.random_range(1..7),
            rng.random_range(1..7),
        );
        let a = Tensor::uniform(&[m, k], 2.0, &mut rng);
        let b = Tensor::uniform(&[k, n], 2.0, &mut rng);
        let c = a.matmul(&b).unwrap();
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..k {
                    s += a.get2(i, l) * b.get2(l, j);
                }
                assert!((c.get2(i, j) - s).abs() <= 1e-14, "({i},{j})");
            }
        }
        let mut g = Graph::new();
        let (va, vb) = (g.leaf(a.clone()), g.leaf(b.transpose().unwrap()));
        let ct = g.matmul_t(va, vb).unwrap();
        assert!(max_abs_diff(g.value(ct).data(), c.data()) <= 1e-14);
    }
}

/// Sum of exponentials with compensated summation, relative to the maximum.
fn careful_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let (mut s, mut comp) = (0.0f64, 0.0f64);
    for &x in &e {
        let t = s + x;
        comp += if s.abs() >= x.abs() {
            (s - t) + x
        } else {
            (x - t) + s
        };
        s = t;
    }
    let total = s + comp;
    e.iter().map(|x| x / total).collect()
}

#[test]
fn softmax_matches_compensated_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let n = rng.random_range(1..40);
        let scale = [1.0, 30.0, 700.0][rng.random_range(0..3)];
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        let got = tensor::softmax(&v).unwrap();
        let want = careful_softmax(&v);
        for (a, b) in got.iter().zip(&want) {
            assert!(
                (a - b).abs() <= 1e-15 + 4.0 * f64::EPSILON * b,
                "{a} vs {b}"
            );
        }
    }
    assert_eq!(tensor::softmax(&[1000.0, 1000.0]).unwrap(), [0.5, 0.5]);
}

#[test]
fn lstm_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..50 {
        let (input, hidden, steps) = (
            rng.random_range(1..5),
            rng.random_range(1..5),
            rng.random_range(1..7),
        );
        let mut p = ParamStore::new();
        init_lstm(&mut p, "f", input, hidden, &mut rng);
        init_lstm(&mut p, "b", input, hidden, &mut rng);
        for (_, t) in p.iter_mut() {
            t.data_mut()
                .iter_mut()
                .for_each(|x| *x += rng.random_range(-0.5..0.5));
        }
        let seq = Tensor::uniform(&[steps, input], 1.5, &mut rng);

        let mut g = Graph::new();
        let lv = |g: &mut Graph, d: &str| {
            let t = |n: &str| p.get(&format!("{d}.{n}")).unwrap().clone();
            LstmVars::from_tensors(g, t("w"), t("u"), t("b")).unwrap()
        };
        let (fwd, bwd) = (lv(&mut g, "f"), lv(&mut g, "b"));
        let x = g.constant(seq.clone());
        let enc = bilstm_encode(&mut g, x, &fwd, &bwd).unwrap();

        let xs = to_mat(&seq);
        let m = |n: &str| common::mat(&p, n);
        let want_f = common::lstm(&m("f.w"), &m("f.u"), &common::vec_of(&p, "f.b"), &xs);
        let rev: Vec<_> = xs.iter().rev().cloned().collect();
        let mut want_b = common::lstm(&m("b.w"), &m("b.u"), &common::vec_of(&p, "b.b"), &rev);
        want_b.reverse();
        for t in 0..steps {
            assert!(
                max_abs_diff(g.value(enc.fwd[t]).data(), &want_f[t]) <= 1e-13,
                "trial {trial}"
            );
            assert!(
                max_abs_diff(g.value(enc.bwd[t]).data(), &want_b[t]) <= 1e-13,
                "trial {trial}"
            );
        }
    }
}

#[test]
fn reversed_input_swaps_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut p = ParamStore::new();
    init_lstm(&mut p, "f", 3, 2, &mut rng);
    init_lstm(&mut p, "b", 3, 2, &mut rng);
    let seq = Tensor::uniform(&[5, 3], 1.0, &mut rng);
    let rows: Vec<Vec<f64>> = (0..5).rev().map(|r| seq.row(r).to_vec()).collect();
    let reversed = Tensor::from_rows(&rows).unwrap();

    let run = |seq: &Tensor, first: &str, second: &str| {
        let mut g = Graph::new();
        let lv = |g: &mut Graph, d: &str| {
            let t = |n: &str| p.get(&format!("{d}.{n}")).unwrap().clone();
            LstmVars::from_tensors(g, t("w"), t("u"), t("b")).unwrap()
        };
        let (a, b) = (lv(&mut g, first), lv(&mut g, second));
        let x = g.constant(seq.clone());
        let enc = bilstm_encode(&mut g, x, &a, &b).unwrap();
        let f: Vec<Vec<f64>> = enc
            .fwd
            .iter()
            .map(|&v| g.value(v).data().to_vec())
            .collect();
        let b: Vec<Vec<f64>> = enc
            .bwd
            .iter()
            .map(|&v| g.value(v).data().to_vec())
            .collect();
        (f, b)
    };
    let (f, b) = run(&seq, "f", "b");
    let (f2, b2) = run(&reversed, "b", "f");
    for t in 0..5 {
        assert_eq!(f[t], b2[4 - t]);
        assert_eq!(b[t], f2[4 - t]);
    }
}

#[test]
fn full_models_match_reference() {
    for kind in KINDS {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cfg = ModelConfig::toy();
            if seed % 2 == 1 {
                cfg.encoder.video_input = None;
                cfg.encoder.text_input = None;
            }
            let p = init_params(kind, &cfg, &mut rng).unwrap();
            let ex = random_example(&cfg, 2 + seed as usize % 4, 1 + seed as usize % 5, &mut rng)
                .unwrap();
            for qa in &ex.sentences[..3] {
                let want = common::score(kind, &p, &ex.video, qa);
                let got = attention_maps(kind, &p, &ex.video, qa).unwrap();
                assert!(
                    (got.score - want.score).abs() <= 1e-12,
                    "{kind} seed {seed}"
                );
                assert_eq!(score_qa(kind, &p, &ex.video, qa).unwrap(), got.score);
                for (a, b) in [(&got.rewatch, &want.rewatch), (&got.reread, &want.reread)] {
                    assert_eq!(a.is_some(), b.is_some());
                    if let (Some(a), Some(b)) = (a, b) {
                        for (ra, rb) in a.iter().zip(b) {
                            assert!(max_abs_diff(ra, rb) <= 1e-12);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn rewatcher_scalar_trace() {
    // d_j = d_m = d_r = 1 without input projections, two frames, one token.
    let mut p = ParamStore::new();
    let s = |x: f64| Tensor::matrix(1, 1, vec![x]).unwrap();
    // Video and text LSTMs that output fixed values: zero recurrent and input
    // weights and a closed forget gate, so h = sigmoid(0) * tanh(sigmoid(0) * tanh(1)).
    for side in ["video", "text"] {
        for d in ["fwd", "bwd"] {
            p.insert(format!("{side}.{d}.w"), Tensor::zeros(&[4, 1]));
            p.insert(format!("{side}.{d}.u"), Tensor::zeros(&[4, 1]));
            p.insert(
                format!("{side}.{d}.b"),
                Tensor::vector(&[0.0, -1000.0, 0.0, 1.0]),
            );
        }
        p.insert(
            format!("{side}.out"),
            Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap(),
        );
    }
    for (n, v) in [
        ("w_vm", 1.0),
        ("w_cm", 1.0),
        ("w_rm", 0.5),
        ("w_rr", 1.0),
        ("w_vr", 2.0),
    ] {
        p.insert(format!("att.{n}"), s(v));
    }
    p.insert("att.w_ms", Tensor::vector(&[1.0]));
    p.insert("head.w_rg", s(1.0));
    p.insert("head.w_cg", s(0.0));
    p.insert("head.fc0.w", s(1.0));
    p.insert("head.fc0.b", Tensor::vector(&[0.0]));

    let video = Tensor::matrix(2, 1, vec![0.3, -0.7]).unwrap();
    let qa = Tensor::matrix(1, 1, vec![0.1]).unwrap();
    let maps = attention_maps(ModelKind::Rewatcher, &p, &video, &qa).unwrap();

    // Every LSTM output is y = 0.5 * tanh(0.5 * tanh(1)), in both directions
    // and on both sides, so the two frames look the same and attention is
    // uniform. The memory is then W_vr * y + tanh(W_rr * 0) = 2y.
    let y = 0.5 * (0.5 * 1f64.tanh()).tanh();
    let rows = maps.rewatch.unwrap();
    assert_eq!(rows, [vec![0.5, 0.5]]);
    let r = maps.rewatch_memory.unwrap()[0];
    assert!((r - 2.0 * y).abs() < 1e-15);
    assert!((maps.score - (2.0 * y).tanh()).abs() < 1e-15);
    // Frozen: 0.5 * tanh(0.5 * tanh(1)) = 0.18170...
    assert!((y - 0.181_699_742_194_526_25).abs() < 1e-15, "{y}");
}

#[test]
fn uniform_scores_give_log_eight() {
    let cfg = ModelConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = init_params(ModelKind::Straightforward, &cfg, &mut rng).unwrap();
    let last = cfg.fc.len();
    p.get_mut(&format!("head.fc{last}.w"))
        .unwrap()
        .data_mut()
        .fill(0.0);
    let ex = random_example(&cfg, 3, 4, &mut rng).unwrap();
    let a = answer_question(ModelKind::Straightforward, &p, &ex.video, &ex.sentences).unwrap();
    let loss = fwqa::model::qa_loss(&a.probabilities, ex.gt_index).unwrap();
    assert!((loss - 2.079_441_541_679_835_8).abs() < 1e-15);
}

fn adam_trace(preset: AdamPreset) -> Vec<Vec<f64>> {
    let mut p = ParamStore::new();
    p.insert("x", Tensor::vector(&[1.0, -0.5, 0.25]));
    let mut state = AdamState::new(AdamConfig::preset(preset, 0.002), &p);
    let mut out = Vec::new();
    for g in [[0.1, -0.2, 0.0], [0.3, 0.05, -1.5]] {
        let mut grads = GradSet::zeros_like(&p);
        grads.tensors.insert("x".into(), Tensor::vector(&g));
        adam_step(&mut p, &grads, &mut state).unwrap();
        out.push(p.get("x").unwrap().data().to_vec());
    }
    out
}

#[test]
fn adam_two_step_hand_trace() {
    let step1 = [0.998_000_000_199_999_98, -0.498_000_000_099_999_995, 0.25];
    let standard = [
        0.996_164_438_044_111_785,
        -0.497_061_063_822_008_930,
        0.251_488_273_633_105_905,
    ];
    let paper = [
        0.996_120_377_645_264_018,
        -0.499_082_826_060_768_105,
        0.251_819_090_669_798_414,
    ];
    for (preset, step2) in [(AdamPreset::Standard, standard), (AdamPreset::Paper, paper)] {
        let t = adam_trace(preset);
        assert!(
            max_abs_diff(&t[0], &step1) <= 1e-12,
            "{preset:?} {:?}",
            t[0]
        );
        assert!(
            max_abs_diff(&t[1], &step2) <= 1e-12,
            "{preset:?} {:?}",
            t[1]
        );
    }
}
