//! Objective evaluation and emotion recognition on the test split.

mod dtw;
mod metrics;
mod report;

pub use dtw::{dtw_align, euclidean, fastdtw_align, AlignmentPath};
pub use metrics::{f0_metrics, frame_mcd, mcd, F0Metrics, PairStats, FFE_DEVIATION, MCD_SCALE};
pub use report::{ConfusionReport, MetricsReport, MetricsRow};

use crate::corpus::{AcousticFrame, Corpus, EmotionId, Utterance};
use crate::error::{Error, Result};
use crate::model::{forward, to_frames, utterance_weights, Mode, ModelParams, TokenWeights};

/// FastDTW radius used for evaluation alignment.
pub const EVAL_RADIUS: usize = 1;

/// Cepstral part of each frame, the only channels used for alignment.
pub fn mc_sequence(frames: &[AcousticFrame]) -> Vec<Vec<f64>> {
    frames
        .iter()
        .map(|f| f.mc.iter().map(|&x| x as f64).collect())
        .collect()
}

/// Aligns `predicted` to `natural` with FastDTW and accumulates pair stats.
pub fn compare_frames(natural: &[AcousticFrame], predicted: &[AcousticFrame]) -> Result<PairStats> {
    let (_, path) = fastdtw_align(&mc_sequence(natural), &mc_sequence(predicted), EVAL_RADIUS)?;
    Ok(PairStats::from_path(
        natural,
        predicted,
        &path,
        FFE_DEVIATION,
    ))
}

/// Scores an arbitrary predictor on the test split.
pub fn evaluate_with<F>(corpus: &Corpus, mut predict: F) -> Result<MetricsReport>
where
    F: FnMut(&Utterance) -> Result<Vec<AcousticFrame>>,
{
    let k = corpus.emotion_count();
    let mut per_emotion = vec![PairStats::default(); k];
    let mut counts = vec![0usize; k];
    let mut any = false;
    for u in corpus.test() {
        any = true;
        let predicted = predict(u)?;
        let stats = compare_frames(&u.frames, &predicted)?;
        per_emotion[u.emotion.index()].merge(&stats);
        counts[u.emotion.index()] += 1;
    }
    if !any {
        return Err(Error::Empty("test split"));
    }
    Ok(MetricsReport::from_stats(
        corpus.emotion_names(),
        &per_emotion,
        &counts,
    ))
}

/// Synthesises every test utterance from its text with the true emotion's
/// token (SemiGST) or embedding (EI, SemiEI) and scores it against the
/// natural frames.
pub fn evaluate_model(params: &ModelParams, corpus: &Corpus) -> Result<MetricsReport> {
    evaluate_with(corpus, |u| {
        Ok(to_frames(&forward(params, u, Some(u.emotion))?))
    })
}

/// Recognised emotion = argmax of the token weights for each test
/// utterance's frames.
pub fn recognize_emotions(params: &ModelParams, corpus: &Corpus) -> Result<ConfusionReport> {
    if params.config.mode != Mode::SemiGst {
        return Err(Error::Contract(format!(
            "emotion recognition needs a SemiGST model, got {}",
            params.config.mode
        )));
    }
    let mut test: Vec<&Utterance> = corpus.test().collect();
    test.sort_by(|a, b| a.id.cmp(&b.id));
    let observed = test
        .into_iter()
        .map(|u| Ok((u.emotion, utterance_weights(params, &u.frames)?)))
        .collect::<Result<Vec<_>>>()?;
    if observed.is_empty() {
        return Err(Error::Empty("test split"));
    }
    ConfusionReport::from_weights(corpus.emotion_names(), &observed)
}

/// Convenience for callers holding `(true emotion, weights)` pairs.
pub fn confusion(
    names: Vec<String>,
    observed: &[(EmotionId, TokenWeights)],
) -> Result<ConfusionReport> {
    ConfusionReport::from_weights(names, observed)
}
