use ndarray::{array, Array1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{generate_corpus, CorpusSpec, Split};

fn tiny_spec() -> CorpusSpec {
    let mut spec = CorpusSpec::default();
    for e in &mut spec.emotions {
        e.count = 2;
    }
    spec.t_text_min = 2;
    spec.t_text_max = 4;
    spec.frames_per_token = 3;
    spec.d_mc = 4;
    for (i, e) in spec.emotions.iter_mut().enumerate() {
        e.mc_offset = (0..4).map(|j| 0.3 * ((i + j) as f64).sin()).collect();
    }
    spec.n_phones = 6;
    spec.seed = 11;
    spec
}

fn tiny_config(mode: Mode, d_tok: usize) -> ModelConfig {
    ModelConfig {
        d_phone: 4,
        d_tone: 2,
        d_pos: 2,
        d_text: 5,
        d_ref: 3,
        d_tok,
        mode,
        ..ModelConfig::default()
    }
    .fit_corpus(&tiny_spec())
}

fn tiny_batch() -> Vec<Utterance> {
    let mut c = generate_corpus(&tiny_spec()).unwrap();
    for (i, u) in c.utterances.iter_mut().enumerate() {
        u.labeled = i % 3 != 1;
    }
    c.utterances
}

/// Central difference of the total loss with respect to one coordinate.
fn numeric(
    params: &ModelParams,
    batch: &[&Utterance],
    lambda: f64,
    array: usize,
    idx: usize,
) -> f64 {
    let h = 1e-5;
    let mut plus = params.clone();
    plus.tensors_mut()[array].data[idx] += h;
    let mut minus = params.clone();
    minus.tensors_mut()[array].data[idx] -= h;
    (loss(&plus, batch, lambda).unwrap().total - loss(&minus, batch, lambda).unwrap().total)
        / (2.0 * h)
}

fn check_fd(mode: Mode, d_tok: usize, batch: &[&Utterance], lambda: f64) {
    let params = init_params(&tiny_config(mode, d_tok), 5);
    let grad = gradients(&params, batch, lambda).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let tensors = grad.tensors();
    for (a, t) in tensors.iter().enumerate() {
        for _ in 0..25 {
            let idx = rng.random_range(0..t.data.len());
            let an = t.data[idx];
            let nu = numeric(&params, batch, lambda, a, idx);
            let rel = (an - nu).abs() / an.abs().max(nu.abs()).max(1e-8);
            assert!(
                rel < 1e-4,
                "{mode} {}[{idx}]: analytic {an} numeric {nu}",
                t.name
            );
        }
    }
}

#[test]
fn init_is_deterministic_with_zero_biases() {
    let cfg = ModelConfig::default();
    let a = init_params(&cfg, 3);
    assert_eq!(a, init_params(&cfg, 3));
    assert_ne!(a, init_params(&cfg, 4));
    assert!(a
        .text_b
        .iter()
        .chain(&a.ref_b)
        .chain(&a.dec_b)
        .all(|&b| b == 0.0));
    for t in a.tensors() {
        if t.shape.len() == 2 {
            let bound = glorot_bound(t.shape[0], t.shape[1]);
            assert!(t.data.iter().all(|w| w.abs() <= bound), "{}", t.name);
        }
    }
}

#[test]
fn projection_only_when_widths_differ() {
    assert!(ModelParams::zeros(&tiny_config(Mode::SemiGst, 5))
        .proj
        .is_none());
    let p = ModelParams::zeros(&tiny_config(Mode::SemiGst, 3));
    assert_eq!(p.proj.as_ref().unwrap().dim(), (5, 3));
}

#[test]
fn text_encoder_shapes_and_zero_params() {
    let batch = tiny_batch();
    let zero = ModelParams::zeros(&tiny_config(Mode::SemiGst, 5));
    let h = encode_text(&zero, &batch[0].tokens[..1]).unwrap();
    assert_eq!(h.dim(), (1, 5));
    assert!(encode_text(&zero, &batch[0].tokens)
        .unwrap()
        .iter()
        .all(|&x| x == 0.0));
}

#[test]
fn text_encoder_lookup_error() {
    let params = init_params(&tiny_config(Mode::SemiGst, 5), 1);
    let bad = [TextToken {
        phone_id: 99,
        tone_id: 0,
        position_id: 0,
    }];
    match encode_text(&params, &bad) {
        Err(Error::Lookup { table, index, .. }) => assert_eq!((table, index), ("phone", 99)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn text_encoder_is_per_position() {
    let params = init_params(&tiny_config(Mode::SemiGst, 5), 1);
    let batch = tiny_batch();
    let full = encode_text(&params, &batch[0].tokens).unwrap();
    for (t, tok) in batch[0].tokens.iter().enumerate() {
        let single = encode_text(&params, std::slice::from_ref(tok)).unwrap();
        assert_eq!(single.row(0), full.row(t));
    }
}

#[test]
fn reference_encoder_properties() {
    let params = init_params(&tiny_config(Mode::SemiGst, 5), 2);
    let frames = &tiny_batch()[0].frames;
    let r = encode_reference(&params, frames).unwrap();

    let mut doubled = frames.clone();
    doubled.extend(frames.iter().cloned());
    let r2 = encode_reference(&params, &doubled).unwrap();
    for (a, b) in r.iter().zip(&r2) {
        assert!((a - b).abs() < 1e-12);
    }

    let mut reversed = frames.clone();
    reversed.reverse();
    let r3 = encode_reference(&params, &reversed).unwrap();
    for (a, b) in r.iter().zip(&r3) {
        assert!((a - b).abs() < 1e-12);
    }

    let single = encode_reference(&params, &frames[..1]).unwrap();
    let f = Array1::from(frames[0].to_vec());
    let expected = (params.ref_w.dot(&f) + &params.ref_b).mapv(f64::tanh);
    assert_eq!(single, expected);

    assert!(matches!(
        encode_reference(&params, &[]),
        Err(Error::Empty(_))
    ));

    let zero = ModelParams::zeros(&params.config);
    let zero_frame = AcousticFrame::unvoiced(vec![0.0; 4]);
    assert!(encode_reference(&zero, &[zero_frame])
        .unwrap()
        .iter()
        .all(|&x| x == 0.0));
}

#[test]
fn softmax_closed_forms() {
    let w = TokenWeights::from_logits(array![0.3, 0.3, 0.3, 0.3].view());
    for &x in w.as_slice() {
        assert!((x - 0.25).abs() < 1e-15);
    }
    let w = TokenWeights::from_logits(array![2f64.ln(), 0.0, 0.0, 0.0].view());
    for (x, e) in w.as_slice().iter().zip([0.4, 0.2, 0.2, 0.2]) {
        assert!((x - e).abs() < 1e-15);
    }
    let z = array![1.0, -2.0, 0.5, 3.0];
    let a = TokenWeights::from_logits(z.view());
    let b = TokenWeights::from_logits((&z + 123.0).view());
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((x - y).abs() < 1e-15);
    }
    let big = TokenWeights::from_logits(array![1000.0, 0.0].view());
    assert_eq!(big.as_slice(), &[1.0, 0.0]);
}

#[test]
fn argmax_prefers_lowest_index_on_ties() {
    let w = TokenWeights::from_logits(array![0.0, 0.0, -1.0, -5.0].view());
    assert_eq!(w.argmax(), 0);
}

#[test]
fn emotion_embedding_cases() {
    let params = init_params(&tiny_config(Mode::SemiGst, 5), 3);
    for k in 0..4 {
        let e = emotion_embedding(&params, EmotionInput::Weights(&TokenWeights::one_hot(k, 4)))
            .unwrap();
        assert_eq!(e, params.tokens.row(k).mapv(f64::tanh));
    }

    let mut same = params.clone();
    for mut row in same.tokens.rows_mut() {
        row.assign(&array![0.1, -0.4, 0.9, 0.0, 2.0]);
    }
    let uniform = TokenWeights::from_logits(array![0.0, 0.0, 0.0, 0.0].view());
    let e = emotion_embedding(&same, EmotionInput::Weights(&uniform)).unwrap();
    for (a, b) in e.iter().zip(same.tokens.row(0).mapv(f64::tanh).iter()) {
        assert!((a - b).abs() < 1e-15);
    }

    assert!(matches!(
        emotion_embedding(&params, EmotionInput::Label(EmotionId(0))),
        Err(Error::Contract(_))
    ));

    let semi = init_params(&tiny_config(Mode::SemiEi, 5), 3);
    let z = emotion_embedding(&semi, EmotionInput::Unlabeled).unwrap();
    assert!(z.iter().all(|&x| x == 0.0));
    assert_eq!(
        emotion_embedding(&semi, EmotionInput::Label(EmotionId(2))).unwrap(),
        semi.emotion_emb.row(2)
    );

    let ei = init_params(&tiny_config(Mode::Ei, 5), 3);
    assert!(matches!(
        emotion_embedding(&ei, EmotionInput::Unlabeled),
        Err(Error::Contract(_))
    ));
}

#[test]
fn forward_zero_params_and_shape() {
    let batch = tiny_batch();
    for mode in Mode::ALL {
        let zero = ModelParams::zeros(&tiny_config(mode, 5));
        for u in &batch {
            let out = forward(&zero, u, Some(u.emotion)).unwrap();
            assert_eq!(out.dim(), (u.tokens.len() * 3, 6));
            assert!(out.iter().all(|&x| x == 0.0));
        }
    }
}

#[test]
fn forward_requires_label_for_ei_training() {
    let ei = init_params(&tiny_config(Mode::Ei, 5), 3);
    let mut u = tiny_batch().remove(0);
    u.labeled = false;
    assert!(matches!(forward(&ei, &u, None), Err(Error::Contract(_))));
    assert!(forward(&ei, &u, Some(u.emotion)).is_ok());
}

#[test]
fn inference_matches_training_when_attention_is_one_hot() {
    let mut params = init_params(&tiny_config(Mode::SemiGst, 5), 8);
    let u = &tiny_batch()[0];
    // saturate the query so softmax underflows to an exact one-hot
    params.query_w.mapv_inplace(|w| w * 1e5);
    let w = utterance_weights(&params, &u.frames).unwrap();
    let k = w.argmax();
    assert_eq!(w.as_slice()[k], 1.0);
    assert!(w
        .as_slice()
        .iter()
        .enumerate()
        .all(|(i, &x)| i == k || x == 0.0));
    let train = forward(&params, u, None).unwrap();
    let infer = forward(&params, u, Some(EmotionId(k))).unwrap();
    for (a, b) in train.iter().zip(&infer) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn loss_matches_forward() {
    let batch = tiny_batch();
    let refs: Vec<&Utterance> = batch.iter().collect();
    let params = init_params(&tiny_config(Mode::SemiEi, 5), 9);
    let mut sse = 0.0;
    let mut n = 0.0;
    for u in &batch {
        let pred = forward(&params, u, None).unwrap();
        for (row, f) in pred.rows().into_iter().zip(&u.frames) {
            for (p, t) in row.iter().zip(f.to_vec()) {
                sse += (p - t) * (p - t);
                n += 1.0;
            }
        }
    }
    let l = loss(&params, &refs, 1.0).unwrap();
    assert!((l.recon - sse / n).abs() < 1e-12);
    assert_eq!(l.ce, 0.0);
    assert_eq!(l.total, l.recon);
}

#[test]
fn loss_cross_entropy_cases() {
    let uniform = TokenWeights::from_logits(array![0.0, 0.0, 0.0, 0.0].view());
    assert!((token_cross_entropy(&uniform, EmotionId(2)) - 4f64.ln()).abs() < 1e-12);
    let w = TokenWeights::from_logits(
        array![0.1f64.ln(), 0.7f64.ln(), 0.1f64.ln(), 0.1f64.ln()].view(),
    );
    assert!((token_cross_entropy(&w, EmotionId(1)) - 0.356675).abs() < 1e-6);
    let hard = TokenWeights::one_hot(0, 4);
    assert!((token_cross_entropy(&hard, EmotionId(1)) + CE_EPSILON.ln()).abs() < 1e-9);

    // zero tokens make attention uniform, so every labeled CE is ln 4
    let mut params = init_params(&tiny_config(Mode::SemiGst, 5), 4);
    params.tokens.fill(0.0);
    let batch = tiny_batch();
    let refs: Vec<&Utterance> = batch.iter().collect();
    let l = loss(&params, &refs, 2.0).unwrap();
    assert!((l.ce - 4f64.ln()).abs() < 1e-12);
    assert!((l.total - (l.recon + 2.0 * l.ce)).abs() < 1e-12);
}

#[test]
fn unlabeled_batch_has_no_ce() {
    let mut batch = tiny_batch();
    for u in &mut batch {
        u.labeled = false;
    }
    let refs: Vec<&Utterance> = batch.iter().collect();
    let params = init_params(&tiny_config(Mode::SemiGst, 5), 4);
    let l = loss(&params, &refs, 3.0).unwrap();
    assert_eq!(l.ce, 0.0);
    assert_eq!(l.total, l.recon);
    assert_eq!(
        gradients(&params, &refs, 3.0).unwrap(),
        gradients(&params, &refs, 0.0).unwrap()
    );
}

#[test]
fn off_path_gradients_are_zero() {
    let batch = tiny_batch();
    let refs: Vec<&Utterance> = batch.iter().collect();
    let gst = init_params(&tiny_config(Mode::SemiGst, 5), 4);
    let g = gradients(&gst, &refs, 1.0).unwrap();
    assert!(g.emotion_emb.iter().all(|&x| x == 0.0));

    let ei = init_params(&tiny_config(Mode::Ei, 5), 4);
    let labeled: Vec<Utterance> = batch
        .iter()
        .cloned()
        .map(|mut u| {
            u.labeled = true;
            u
        })
        .collect();
    let refs: Vec<&Utterance> = labeled.iter().collect();
    let g = gradients(&ei, &refs, 1.0).unwrap();
    for arr in [&g.tokens, &g.query_w, &g.ref_w] {
        assert!(arr.iter().all(|&x| x == 0.0));
    }
    assert!(g.ref_b.iter().all(|&x| x == 0.0));
}

#[test]
fn gradients_match_central_differences() {
    let batch = tiny_batch();
    let refs: Vec<&Utterance> = batch.iter().collect();
    check_fd(Mode::SemiGst, 5, &refs, 1.0);
    check_fd(Mode::SemiGst, 3, &refs, 0.7);
    check_fd(Mode::SemiEi, 5, &refs, 1.0);
    let labeled: Vec<Utterance> = batch
        .iter()
        .cloned()
        .map(|mut u| {
            u.labeled = true;
            u
        })
        .collect();
    let refs: Vec<&Utterance> = labeled.iter().collect();
    check_fd(Mode::Ei, 5, &refs, 1.0);
    check_fd(Mode::SemiGst, 5, &refs, 1.0);
}

#[test]
fn gradient_is_linear_in_lambda() {
    let batch = tiny_batch();
    let refs: Vec<&Utterance> = batch.iter().collect();
    let params = init_params(&tiny_config(Mode::SemiGst, 5), 6);
    let g0 = gradients(&params, &refs, 0.0).unwrap();
    let g1 = gradients(&params, &refs, 1.0).unwrap();
    let g2 = gradients(&params, &refs, 2.0).unwrap();
    for ((a, b), c) in g0.tensors().iter().zip(g1.tensors()).zip(g2.tensors()) {
        for i in 0..a.data.len() {
            let lhs = c.data[i] - a.data[i];
            let rhs = 2.0 * (b.data[i] - a.data[i]);
            assert!(
                (lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()),
                "{}[{i}]",
                a.name
            );
        }
    }
}

#[test]
fn to_frames_thresholds_voicing() {
    let pred = array![[0.5, -0.5, 5.3, 0.7], [0.1, 0.2, 5.0, 0.2]];
    let frames = to_frames(&pred);
    assert!(frames[0].voiced && (frames[0].log_f0 - 5.3).abs() < 1e-6);
    assert!(!frames[1].voiced && frames[1].log_f0 == 0.0);
    assert_eq!(frames[1].mc, vec![0.1f32, 0.2]);
}

#[test]
fn checkpoint_round_trip_and_errors() {
    for d_tok in [5, 3] {
        let params = init_params(&tiny_config(Mode::SemiEi, d_tok), 12);
        let bytes = write_checkpoint(&params);
        assert_eq!(&bytes[..4], b"EMOT");
        let back = read_checkpoint(&bytes, std::path::Path::new("mem")).unwrap();
        assert_eq!(back, params);
        assert_eq!(write_checkpoint(&back), bytes);

        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(
            read_checkpoint(&bad, std::path::Path::new("mem")),
            Err(Error::Magic { .. })
        ));
        assert!(matches!(
            read_checkpoint(&bytes[..bytes.len() - 1], std::path::Path::new("mem")),
            Err(Error::Truncated { .. })
        ));
    }
    let _ = Split::Train;
}
