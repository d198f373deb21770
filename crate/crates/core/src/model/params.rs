use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::ModelConfig;

/// Every learnable array of the acoustic model.
///
/// The same struct doubles as the gradient container; see [`Gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub phone_emb: Array2<f64>,
    pub tone_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    /// `d_text x (d_phone + d_tone + d_pos)`
    pub text_w: Array2<f64>,
    pub text_b: Array1<f64>,
    /// `d_ref x channels`
    pub ref_w: Array2<f64>,
    pub ref_b: Array1<f64>,
    /// `d_tok x d_ref`
    pub query_w: Array2<f64>,
    /// Token bank, `k x d_tok`.
    pub tokens: Array2<f64>,
    /// Label-indexed emotion embeddings for the EI baselines, `k x d_tok`.
    pub emotion_emb: Array2<f64>,
    /// `channels x (d_text + frames_per_token)`
    pub dec_w: Array2<f64>,
    pub dec_b: Array1<f64>,
    /// `d_text x d_tok`; present only when `d_tok != d_text`.
    pub proj: Option<Array2<f64>>,
}

/// Gradient of the loss, shaped like the parameters.
pub type Gradients = ModelParams;

/// A named, flattened view of one parameter array.
#[derive(Debug)]
pub struct Tensor<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct TensorMut<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

fn tensor<'a, D: ndarray::Dimension>(
    name: &'static str,
    a: &'a ndarray::Array<f64, D>,
) -> Tensor<'a> {
    Tensor {
        name,
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

fn tensor_mut<'a, D: ndarray::Dimension>(
    name: &'static str,
    a: &'a mut ndarray::Array<f64, D>,
) -> TensorMut<'a> {
    TensorMut {
        name,
        shape: a.shape().to_vec(),
        data: a.as_slice_mut().expect("standard layout"),
    }
}

/// Glorot-uniform bound for an array with the given fan sizes.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ModelParams {
    /// All-zero parameters for `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let c = config;
        let ch = c.channels();
        Self {
            config: c.clone(),
            phone_emb: Array2::zeros((c.n_phones, c.d_phone)),
            tone_emb: Array2::zeros((c.n_tones, c.d_tone)),
            pos_emb: Array2::zeros((c.pos_buckets, c.d_pos)),
            text_w: Array2::zeros((c.d_text, c.text_input_width())),
            text_b: Array1::zeros(c.d_text),
            ref_w: Array2::zeros((c.d_ref, ch)),
            ref_b: Array1::zeros(c.d_ref),
            query_w: Array2::zeros((c.d_tok, c.d_ref)),
            tokens: Array2::zeros((c.k, c.d_tok)),
            emotion_emb: Array2::zeros((c.k, c.d_tok)),
            dec_w: Array2::zeros((ch, c.d_text + c.frames_per_token)),
            dec_b: Array1::zeros(ch),
            proj: (c.d_tok != c.d_text).then(|| Array2::zeros((c.d_text, c.d_tok))),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Arrays in checkpoint order; `proj` last when present.
    pub fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = vec![
            tensor("phone_emb", &self.phone_emb),
            tensor("tone_emb", &self.tone_emb),
            tensor("pos_emb", &self.pos_emb),
            tensor("text_w", &self.text_w),
            tensor("text_b", &self.text_b),
            tensor("ref_w", &self.ref_w),
            tensor("ref_b", &self.ref_b),
            tensor("query_w", &self.query_w),
            tensor("tokens", &self.tokens),
            tensor("emotion_emb", &self.emotion_emb),
            tensor("dec_w", &self.dec_w),
            tensor("dec_b", &self.dec_b),
        ];
        if let Some(p) = &self.proj {
            out.push(tensor("proj", p));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = vec![
            tensor_mut("phone_emb", &mut self.phone_emb),
            tensor_mut("tone_emb", &mut self.tone_emb),
            tensor_mut("pos_emb", &mut self.pos_emb),
            tensor_mut("text_w", &mut self.text_w),
            tensor_mut("text_b", &mut self.text_b),
            tensor_mut("ref_w", &mut self.ref_w),
            tensor_mut("ref_b", &mut self.ref_b),
            tensor_mut("query_w", &mut self.query_w),
            tensor_mut("tokens", &mut self.tokens),
            tensor_mut("emotion_emb", &mut self.emotion_emb),
            tensor_mut("dec_w", &mut self.dec_w),
            tensor_mut("dec_b", &mut self.dec_b),
        ];
        if let Some(p) = &mut self.proj {
            out.push(tensor_mut("proj", p));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

/// Glorot-uniform weights, zero biases, deterministic in `seed`.
pub fn init_params(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut params = ModelParams::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in params.tensors_mut() {
        if t.shape.len() != 2 {
            continue;
        }
        let a = glorot_bound(t.shape[1], t.shape[0]);
        let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
        for x in t.data.iter_mut() {
            *x = dist.sample(&mut rng);
        }
    }
    params
}
