//! Multi-task objective and its analytic gradient.
//!
//! `total = recon + lambda_ce * ce` where `recon` is the mean squared error
//! over every frame and channel of the batch and `ce` is the mean, over
//! labeled utterances, of `-ln max(w_label, CE_EPSILON)` on the token
//! weights. Unlabeled utterances contribute only to `recon`.

use ndarray::{Array1, Array2, Axis};

use super::{
    decode_base, frame_value, project, softmax, text_inputs, Gradients, Mode, ModelParams,
    TokenWeights,
};
use crate::corpus::{EmotionId, Utterance};
use crate::error::{Error, Result};

/// Clamp applied to token weights inside the logarithm.
pub const CE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub recon: f64,
    pub ce: f64,
    pub total: f64,
}

/// `acc += a b^T`
fn add_outer(acc: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai != 0.0 {
            acc.row_mut(i).scaled_add(ai, b);
        }
    }
}

/// `-ln max(w_label, CE_EPSILON)`: cross-entropy of a one-hot label against
/// token weights.
pub fn token_cross_entropy(weights: &TokenWeights, label: EmotionId) -> f64 {
    -weights.as_slice()[label.index()].max(CE_EPSILON).ln()
}

/// Neumaier-compensated running sum. Keeps the loss smooth enough for
/// central differences on small gradients.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

enum EmotionPath {
    Token {
        mean: Array1<f64>,
        reference: Array1<f64>,
        query: Array1<f64>,
        weights: Array1<f64>,
    },
    Table(usize),
    Zero,
}

pub fn loss(params: &ModelParams, batch: &[&Utterance], lambda_ce: f64) -> Result<LossBreakdown> {
    evaluate(params, batch, lambda_ce, false).map(|(l, _)| l)
}

pub fn gradients(params: &ModelParams, batch: &[&Utterance], lambda_ce: f64) -> Result<Gradients> {
    evaluate(params, batch, lambda_ce, true).map(|(_, g)| g.expect("requested"))
}

pub fn loss_and_gradients(
    params: &ModelParams,
    batch: &[&Utterance],
    lambda_ce: f64,
) -> Result<(LossBreakdown, Gradients)> {
    evaluate(params, batch, lambda_ce, true).map(|(l, g)| (l, g.expect("requested")))
}

fn evaluate(
    params: &ModelParams,
    batch: &[&Utterance],
    lambda_ce: f64,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<Gradients>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let cfg = &params.config;
    let ch = cfg.channels();
    let fpt = cfg.frames_per_token;
    let d_text = cfg.d_text;
    let scale = 1.0 / (cfg.d_tok as f64).sqrt();

    for u in batch {
        if u.frames.len() != u.tokens.len() * fpt {
            return Err(Error::Contract(format!(
                "utterance `{}` has {} frames for {} tokens",
                u.id,
                u.frames.len(),
                u.tokens.len()
            )));
        }
        if u.frames.iter().any(|f| f.channels() != ch) {
            return Err(Error::Contract(format!("utterance `{}` frame width", u.id)));
        }
        if u.labeled && u.emotion.index() >= cfg.k {
            return Err(Error::Lookup {
                table: "emotion",
                index: u.emotion.index(),
                size: cfg.k,
            });
        }
    }
    let n_values = (batch.iter().map(|u| u.frames.len()).sum::<usize>() * ch) as f64;
    let n_labeled = match cfg.mode {
        Mode::SemiGst => batch.iter().filter(|u| u.labeled).count(),
        Mode::Ei | Mode::SemiEi => 0,
    };

    let tanh_tokens = params.tokens.mapv(f64::tanh);
    let mut grad = want_grad.then(|| params.zeros_like());
    let mut d_tanh_tokens = Array2::<f64>::zeros(tanh_tokens.raw_dim());
    let mut sse = CompensatedSum::default();
    let mut ce_sum = 0.0;

    for u in batch {
        let inputs = text_inputs(params, &u.tokens)?;
        let text = (inputs.dot(&params.text_w.t()) + &params.text_b).mapv(f64::tanh);

        let path = match cfg.mode {
            Mode::SemiGst => {
                let mean = super::mean_frame(&u.frames)?;
                let reference = (params.ref_w.dot(&mean) + &params.ref_b).mapv(f64::tanh);
                let query = params.query_w.dot(&reference);
                let weights = softmax((tanh_tokens.dot(&query) * scale).view());
                EmotionPath::Token {
                    mean,
                    reference,
                    query,
                    weights,
                }
            }
            Mode::Ei => match u.label() {
                Some(k) => EmotionPath::Table(k.index()),
                None => {
                    return Err(Error::Contract(format!(
                        "EI model needs a label for utterance `{}`",
                        u.id
                    )))
                }
            },
            Mode::SemiEi => match u.label() {
                Some(k) => EmotionPath::Table(k.index()),
                None => EmotionPath::Zero,
            },
        };
        let emotion = match &path {
            EmotionPath::Token { weights, .. } => tanh_tokens.t().dot(weights),
            EmotionPath::Table(k) => params.emotion_emb.row(*k).to_owned(),
            EmotionPath::Zero => Array1::zeros(cfg.d_tok),
        };
        let shift = project(params, &emotion);
        let (conditioned, base) = decode_base(params, &text, &shift);

        if let (EmotionPath::Token { weights, .. }, Some(label)) = (&path, u.label()) {
            ce_sum -= weights[label.index()].max(CE_EPSILON).ln();
        }

        let Some(g) = grad.as_mut() else {
            for (f, frame) in u.frames.iter().enumerate() {
                let (t, j) = (f / fpt, f % fpt);
                for (c, target) in frame.to_vec().into_iter().enumerate() {
                    let diff = frame_value(params, base[[t, c]], c, j) - target;
                    sse.add(diff * diff);
                }
            }
            continue;
        };

        // decoder
        let mut d_base = Array2::<f64>::zeros(base.raw_dim());
        for (f, frame) in u.frames.iter().enumerate() {
            let (t, j) = (f / fpt, f % fpt);
            for (c, target) in frame.to_vec().into_iter().enumerate() {
                let diff = frame_value(params, base[[t, c]], c, j) - target;
                sse.add(diff * diff);
                let gd = 2.0 * diff / n_values;
                d_base[[t, c]] += gd;
                g.dec_w[[c, d_text + j]] += gd;
            }
        }
        g.dec_b += &d_base.sum_axis(Axis(0));
        {
            let mut dw = g.dec_w.slice_mut(ndarray::s![.., ..d_text]);
            dw += &d_base.t().dot(&conditioned);
        }
        let d_conditioned = d_base.dot(&params.dec_w.slice(ndarray::s![.., ..d_text]));

        // text encoder
        let d_shift = d_conditioned.sum_axis(Axis(0));
        let d_pre = &d_conditioned * &text.mapv(|h| 1.0 - h * h);
        g.text_w += &d_pre.t().dot(&inputs);
        g.text_b += &d_pre.sum_axis(Axis(0));
        let d_inputs = d_pre.dot(&params.text_w);
        let (dp, dt) = (cfg.d_phone, cfg.d_tone);
        for (t, tok) in u.tokens.iter().enumerate() {
            let row = d_inputs.row(t);
            let mut pe = g.phone_emb.row_mut(tok.phone_id as usize);
            pe += &row.slice(ndarray::s![..dp]);
            let mut te = g.tone_emb.row_mut(tok.tone_id as usize);
            te += &row.slice(ndarray::s![dp..dp + dt]);
            let mut pos = g.pos_emb.row_mut(tok.position_id as usize);
            pos += &row.slice(ndarray::s![dp + dt..]);
        }

        // emotion vector
        let d_emotion = match (&params.proj, g.proj.as_mut()) {
            (Some(p), Some(gp)) => {
                add_outer(gp, &d_shift, &emotion);
                p.t().dot(&d_shift)
            }
            _ => d_shift,
        };
        match path {
            EmotionPath::Zero => {}
            EmotionPath::Table(k) => {
                let mut row = g.emotion_emb.row_mut(k);
                row += &d_emotion;
            }
            EmotionPath::Token {
                mean,
                reference,
                query,
                weights,
            } => {
                add_outer(&mut d_tanh_tokens, &weights, &d_emotion);
                let mut d_weights = tanh_tokens.dot(&d_emotion);
                if let Some(label) = u.label() {
                    let w = weights[label.index()];
                    if w > CE_EPSILON {
                        d_weights[label.index()] -= lambda_ce / (n_labeled as f64 * w);
                    }
                }
                let inner = weights.dot(&d_weights);
                let d_logits = &weights * &d_weights.mapv(|x| x - inner);
                add_outer(&mut d_tanh_tokens, &d_logits, &(&query * scale));
                let d_query = tanh_tokens.t().dot(&d_logits) * scale;
                add_outer(&mut g.query_w, &d_query, &reference);
                let d_reference = params.query_w.t().dot(&d_query);
                let d_ref_pre = &d_reference * &reference.mapv(|r| 1.0 - r * r);
                add_outer(&mut g.ref_w, &d_ref_pre, &mean);
                g.ref_b += &d_ref_pre;
            }
        }
    }

    if let Some(g) = grad.as_mut() {
        g.tokens = &d_tanh_tokens * &tanh_tokens.mapv(|t| 1.0 - t * t);
    }
    let recon = sse.value() / n_values;
    let ce = if n_labeled > 0 {
        ce_sum / n_labeled as f64
    } else {
        0.0
    };
    Ok((
        LossBreakdown {
            recon,
            ce,
            total: recon + lambda_ce * ce,
        },
        grad,
    ))
}
