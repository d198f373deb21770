//! Miniature acoustic model with an emotion token layer.
//!
//! Text tokens are embedded (phone, tone and position tables concatenated)
//! and mapped per position through an affine + tanh encoder. An emotion
//! vector is added to every encoder state, and a duration-known decoder
//! emits `frames_per_token` frames per state. The emotion vector comes from
//! one of three sources depending on [`Mode`]:
//!
//! * `SemiGst`: the utterance's own frames are mean-pooled into a reference
//!   vector that queries the token bank with single-head scaled dot-product
//!   attention; the emotion vector is the weighted sum of `tanh(token)`.
//! * `Ei`: a row of the emotion embedding table selected by the label.
//! * `SemiEi`: as `Ei` for labeled utterances, zero for unlabeled ones.

mod checkpoint;
mod config;
mod loss;
mod params;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use config::{Mode, ModelConfig};
pub use loss::{
    gradients, loss, loss_and_gradients, token_cross_entropy, LossBreakdown, CE_EPSILON,
};
pub use params::{glorot_bound, init_params, Gradients, ModelParams, Tensor, TensorMut};

use crate::corpus::{AcousticFrame, EmotionId, TextToken, Utterance};
use crate::error::{Error, Result};

/// Softmax attention weights over the token bank; always on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenWeights(Array1<f64>);

impl TokenWeights {
    pub fn from_logits(logits: ArrayView1<'_, f64>) -> Self {
        TokenWeights(softmax(logits))
    }

    /// Weight 1 on token `k`, 0 elsewhere.
    pub fn one_hot(k: usize, len: usize) -> Self {
        let mut w = Array1::zeros(len);
        w[k] = 1.0;
        TokenWeights(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("contiguous")
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest weight; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &w) in self.0.iter().enumerate() {
            if w > self.0[best] {
                best = k;
            }
        }
        best
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = z.mapv(|v| (v - max).exp());
    let sum = e.sum();
    e / sum
}

/// Where the emotion vector comes from.
#[derive(Debug, Clone, Copy)]
pub enum EmotionInput<'a> {
    Weights(&'a TokenWeights),
    Label(EmotionId),
    Unlabeled,
}

fn lookup(table: &'static str, index: usize, size: usize) -> Result<usize> {
    if index < size {
        Ok(index)
    } else {
        Err(Error::Lookup { table, index, size })
    }
}

/// Concatenated phone/tone/position embeddings, one row per token.
pub(crate) fn text_inputs(params: &ModelParams, tokens: &[TextToken]) -> Result<Array2<f64>> {
    let c = &params.config;
    let mut x = Array2::zeros((tokens.len(), c.text_input_width()));
    for (t, tok) in tokens.iter().enumerate() {
        let p = lookup("phone", tok.phone_id as usize, c.n_phones)?;
        let tn = lookup("tone", tok.tone_id as usize, c.n_tones)?;
        let ps = lookup("position", tok.position_id as usize, c.pos_buckets)?;
        let mut row = x.row_mut(t);
        row.slice_mut(s![..c.d_phone])
            .assign(&params.phone_emb.row(p));
        row.slice_mut(s![c.d_phone..c.d_phone + c.d_tone])
            .assign(&params.tone_emb.row(tn));
        row.slice_mut(s![c.d_phone + c.d_tone..])
            .assign(&params.pos_emb.row(ps));
    }
    Ok(x)
}

/// Text states `tanh(W_t x_t + b_t)`, shape `T_text x d_text`.
pub fn encode_text(params: &ModelParams, tokens: &[TextToken]) -> Result<Array2<f64>> {
    let x = text_inputs(params, tokens)?;
    Ok((x.dot(&params.text_w.t()) + &params.text_b).mapv(f64::tanh))
}

/// Time-average of the flattened frames.
pub fn mean_frame(frames: &[AcousticFrame]) -> Result<Array1<f64>> {
    let first = frames.first().ok_or(Error::Empty("reference frames"))?;
    let mut acc = Array1::zeros(first.channels());
    for f in frames {
        acc += &Array1::from(f.to_vec());
    }
    Ok(acc / frames.len() as f64)
}

/// Fixed-length reference vector `tanh(W_r mean(frames) + b_r)`.
pub fn encode_reference(params: &ModelParams, frames: &[AcousticFrame]) -> Result<Array1<f64>> {
    let m = mean_frame(frames)?;
    if m.len() != params.config.channels() {
        return Err(Error::Contract(format!(
            "frames have {} channels, model expects {}",
            m.len(),
            params.config.channels()
        )));
    }
    Ok((params.ref_w.dot(&m) + &params.ref_b).mapv(f64::tanh))
}

/// Attention logits `(W_q r) . tanh(g_k) / sqrt(d_tok)`.
pub fn token_logits(params: &ModelParams, reference: &Array1<f64>) -> Array1<f64> {
    let q = params.query_w.dot(reference);
    let scale = (params.config.d_tok as f64).sqrt();
    params.tokens.mapv(f64::tanh).dot(&q) / scale
}

pub fn token_attention(params: &ModelParams, reference: &Array1<f64>) -> TokenWeights {
    TokenWeights::from_logits(token_logits(params, reference).view())
}

/// Token weights for an utterance's frames (reference encoder + attention).
pub fn utterance_weights(params: &ModelParams, frames: &[AcousticFrame]) -> Result<TokenWeights> {
    Ok(token_attention(params, &encode_reference(params, frames)?))
}

/// The `d_tok` emotion vector for the configured mode.
pub fn emotion_embedding(params: &ModelParams, input: EmotionInput<'_>) -> Result<Array1<f64>> {
    let c = &params.config;
    match (c.mode, input) {
        (Mode::SemiGst, EmotionInput::Weights(w)) => {
            if w.len() != c.k {
                return Err(Error::Contract(format!(
                    "{} token weights for {} tokens",
                    w.len(),
                    c.k
                )));
            }
            Ok(params.tokens.mapv(f64::tanh).t().dot(&w.view()))
        }
        (Mode::Ei | Mode::SemiEi, EmotionInput::Label(id)) => {
            let k = lookup("emotion", id.index(), c.k)?;
            Ok(params.emotion_emb.row(k).to_owned())
        }
        (Mode::SemiEi, EmotionInput::Unlabeled) => Ok(Array1::zeros(c.d_tok)),
        (mode, input) => Err(Error::Contract(format!(
            "{mode} model cannot take {input:?} as emotion input"
        ))),
    }
}

/// Emotion vector mapped to text-state width.
pub(crate) fn project(params: &ModelParams, e: &Array1<f64>) -> Array1<f64> {
    match &params.proj {
        Some(p) => p.dot(e),
        None => e.clone(),
    }
}

/// Conditioned states `H + U e` and per-token decoder base `W_dh (H + U e) + b_d`.
pub(crate) fn decode_base(
    params: &ModelParams,
    text: &Array2<f64>,
    shift: &Array1<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let d_text = params.config.d_text;
    let conditioned = text + &shift.view().insert_axis(Axis(0));
    let base = conditioned.dot(&params.dec_w.slice(s![.., ..d_text]).t()) + &params.dec_b;
    (conditioned, base)
}

/// Decoder output for local frame `j` of a token with decoder base `base`.
#[inline]
pub(crate) fn frame_value(params: &ModelParams, base: f64, channel: usize, j: usize) -> f64 {
    base + params.dec_w[[channel, params.config.d_text + j]]
}

/// Predicted frames given text tokens and an emotion vector.
pub fn decode(
    params: &ModelParams,
    tokens: &[TextToken],
    emotion: &Array1<f64>,
) -> Result<Array2<f64>> {
    let c = &params.config;
    let text = encode_text(params, tokens)?;
    let (_, base) = decode_base(params, &text, &project(params, emotion));
    let fpt = c.frames_per_token;
    let mut out = Array2::zeros((tokens.len() * fpt, c.channels()));
    for t in 0..tokens.len() {
        for j in 0..fpt {
            for ch in 0..c.channels() {
                out[[t * fpt + j, ch]] = frame_value(params, base[[t, ch]], ch, j);
            }
        }
    }
    Ok(out)
}

/// Emotion vector used for `utt` in training, or for synthesis when
/// `inference_token` is set.
pub fn utterance_emotion(
    params: &ModelParams,
    utt: &Utterance,
    inference_token: Option<EmotionId>,
) -> Result<Array1<f64>> {
    let c = &params.config;
    match (c.mode, inference_token) {
        (Mode::SemiGst, Some(k)) => {
            let k = lookup("token", k.index(), c.k)?;
            emotion_embedding(
                params,
                EmotionInput::Weights(&TokenWeights::one_hot(k, c.k)),
            )
        }
        (Mode::SemiGst, None) => {
            let w = utterance_weights(params, &utt.frames)?;
            emotion_embedding(params, EmotionInput::Weights(&w))
        }
        (_, Some(k)) => emotion_embedding(params, EmotionInput::Label(k)),
        (Mode::Ei, None) => match utt.label() {
            Some(k) => emotion_embedding(params, EmotionInput::Label(k)),
            None => Err(Error::Contract(format!(
                "EI model needs a label for utterance `{}`",
                utt.id
            ))),
        },
        (Mode::SemiEi, None) => match utt.label() {
            Some(k) => emotion_embedding(params, EmotionInput::Label(k)),
            None => emotion_embedding(params, EmotionInput::Unlabeled),
        },
    }
}

/// Predicted frames for `utt`, `T_text * frames_per_token` rows of
/// `[mc.., log_f0, voiced]`.
///
/// Without `inference_token` this is the training path (SemiGST reads its
/// reference from the utterance's own frames). With it, the emotion vector
/// is the selected token (or table row).
pub fn forward(
    params: &ModelParams,
    utt: &Utterance,
    inference_token: Option<EmotionId>,
) -> Result<Array2<f64>> {
    let e = utterance_emotion(params, utt, inference_token)?;
    decode(params, &utt.tokens, &e)
}

/// Converts decoder output into frames: voiced when the voicing channel is
/// at least 0.5, log-F0 zeroed on unvoiced frames.
pub fn to_frames(pred: &Array2<f64>) -> Vec<AcousticFrame> {
    let ch = pred.ncols();
    pred.rows()
        .into_iter()
        .map(|row| {
            let voiced = row[ch - 1] >= 0.5;
            AcousticFrame {
                mc: row.slice(s![..ch - 2]).iter().map(|&x| x as f32).collect(),
                log_f0: if voiced { row[ch - 2] as f32 } else { 0.0 },
                voiced,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
