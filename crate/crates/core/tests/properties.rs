use std::collections::HashSet;

use fwqa::checkpoint;
use fwqa::dataset::{
    gen_candidates, number_word, parse_number_word, record_rng, split_of, Pools, QaRecord,
    QuestionType, COUNT_WORDS, DEFAULT_RATIOS,
};
use fwqa::embeddings::EmbeddingTable;
use fwqa::features::{sample_frames, VideoFeatures};
use fwqa::metrics::{wups, Taxonomy};
use fwqa::params::{GradSet, ParamStore};
use fwqa::synth::{generate, SynthConfig, SynthTask};
use fwqa::tensor::{softmax, Tensor};
use fwqa::train::clip_gradients;
use proptest::prelude::*;

fn finite_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 1..max_len)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(v in finite_vec(30), shift in -100.0f64..100.0) {
        let p = softmax(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let q = softmax(&shifted).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_frames_are_ordered_and_in_range(n_raw in 1usize..200, n in 1usize..40) {
        let idx = sample_frames(n_raw, n);
        prop_assert_eq!(idx.len(), n);
        prop_assert!(idx.iter().all(|&i| i < n_raw));
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        if n_raw < n {
            prop_assert!(idx[n_raw..].iter().all(|&i| i == n_raw - 1));
        } else {
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn checkpoint_round_trips(shapes in prop::collection::vec(prop::collection::vec(1usize..4, 1..3), 1..6), seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        for (i, s) in shapes.iter().enumerate() {
            p.insert(format!("p{i}"), Tensor::uniform(s, 3.0, &mut rng));
        }
        let bytes = checkpoint::encode(&p).unwrap();
        let back = checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(checkpoint::encode(&back).unwrap(), bytes);
        for ((a, x), (b, y)) in p.iter().zip(back.iter()) {
            prop_assert_eq!(a, b);
            prop_assert_eq!(x.shape(), y.shape());
            prop_assert!(x.data().iter().zip(y.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn feature_files_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tensor::uniform(&[rows, cols], 10.0, &mut rng);
        t.round_to_f32();
        let f = VideoFeatures::new("vid", t).unwrap();
        prop_assert_eq!(VideoFeatures::decode("vid", &f.encode()).unwrap(), f);
    }

    #[test]
    fn embedding_text_round_trips(vectors in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..8)) {
        let mut t = EmbeddingTable::new(3).unwrap();
        for (i, v) in vectors.iter().enumerate() {
            t.insert(format!("w{i}"), v.clone()).unwrap();
        }
        prop_assert_eq!(EmbeddingTable::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn clipping_bounds_norm_and_is_idempotent(v in prop::collection::vec(-100.0f64..100.0, 1..20), max in 0.1f64..20.0) {
        let mut g = GradSet::default();
        g.tensors.insert("a".into(), Tensor::vector(&v));
        let before = g.global_norm();
        prop_assert_eq!(clip_gradients(&mut g, max), before);
        let after = g.global_norm();
        prop_assert!(after <= max * (1.0 + 1e-12));
        if before <= max {
            prop_assert_eq!(g.tensors["a"].data(), v.as_slice());
        }
        let once = g.tensors["a"].data().to_vec();
        clip_gradients(&mut g, max);
        for (a, b) in once.iter().zip(g.tensors["a"].data()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn number_words_parse_back(n in 0u32..100) {
        prop_assert_eq!(parse_number_word(&number_word(n).unwrap()), Some(n));
    }

    #[test]
    fn how_many_candidates_are_the_count_words(n in 1u32..=8, noun in "[a-z]{2,8}", seed in any::<u64>()) {
        let record = QaRecord {
            video_id: "v".into(),
            description: String::new(),
            question: format!("how many {noun} are there?"),
            answer: format!("{n} {noun}"),
            question_type: None,
        };
        let inst = gen_candidates(&record, &Pools::default(), &mut record_rng(seed, 0)).unwrap();
        let got: HashSet<String> = inst.candidates.iter().cloned().collect();
        let want: HashSet<String> = COUNT_WORDS.iter().map(|w| format!("{w} {noun}")).collect();
        prop_assert_eq!(got, want);
        prop_assert_eq!(inst.ground_truth(), format!("{} {noun}", number_word(n).unwrap()));
        prop_assert_eq!(inst.question_type, QuestionType::HowMany);
    }

    #[test]
    fn split_is_a_function_of_video_and_seed(id in "[a-z0-9]{1,12}", seed in any::<u64>()) {
        let s = split_of(&id, &DEFAULT_RATIOS, seed);
        prop_assert!(s < 3);
        prop_assert_eq!(s, split_of(&id, &DEFAULT_RATIOS, seed));
        prop_assert_eq!(split_of(&id, &[1.0, 0.0, 0.0], seed), 0);
        prop_assert_eq!(split_of(&id, &[0.0, 0.0, 1.0], seed), 2);
    }
}

fn answer_strategy() -> impl Strategy<Value = String> {
    let words = Taxonomy::demo().leaves_under("entity");
    prop::collection::vec(prop::sample::select(words), 1..3).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wups_is_monotone_bounded_and_order_free(
        pairs in prop::collection::vec((answer_strategy(), answer_strategy()), 1..12),
        lo in 0.0f64..1.0,
        hi in 0.0f64..1.0,
    ) {
        let tax = Taxonomy::demo();
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let (p, t): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
        let a = wups(&p, &t, lo, &tax).unwrap();
        let b = wups(&p, &t, hi, &tax).unwrap();
        prop_assert!((0.0..=100.0).contains(&a) && (0.0..=100.0).contains(&b));
        prop_assert!(a >= b - 1e-12);
        let (rp, rt): (Vec<String>, Vec<String>) = pairs.iter().rev().cloned().unzip();
        prop_assert!((wups(&rp, &rt, lo, &tax).unwrap() - a).abs() < 1e-9);
        prop_assert!((wups(&t, &t, hi, &tax).unwrap() - 100.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Counting the entities laid out in each video independently of the
    /// generator must give the ground-truth number.
    #[test]
    fn how_many_answers_match_a_recount(seed in any::<u64>(), cap in 1usize..4, appearances in 1usize..3) {
        let cfg = SynthConfig {
            task: SynthTask::HowMany,
            videos: 30,
            frames: 8,
            per_frame_cap: cap,
            appearances,
            seed,
            ..SynthConfig::default()
        };
        prop_assume!(cfg.validate().is_ok());
        let data = generate(&cfg).unwrap();
        for (inst, layout) in data.instances.iter().zip(&data.layout) {
            prop_assert!(layout.iter().all(|f| f.len() <= cap));
            let distinct: HashSet<usize> = layout.iter().flatten().copied().collect();
            for e in &distinct {
                prop_assert_eq!(layout.iter().filter(|f| f.contains(e)).count(), appearances);
            }
            let word = inst.ground_truth().split_whitespace().next().unwrap();
            prop_assert_eq!(parse_number_word(word), Some(distinct.len() as u32));
        }
    }
}
