use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::config::{KeyValues, KvWriter};
use crate::corpus::{CorpusSpec, TONE_COUNT};
use crate::error::{Error, Result};

/// How the emotion vector added to the text states is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Emotion token layer driven by the reference audio; cross-entropy on
    /// the labeled subset.
    SemiGst,
    /// Emotion embedding table indexed by the label; every utterance must be
    /// labeled.
    Ei,
    /// Emotion embedding table for labeled utterances, zero vector otherwise.
    SemiEi,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::SemiGst, Mode::SemiEi, Mode::Ei];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SemiGst => "SemiGST",
            Mode::Ei => "EI",
            Mode::SemiEi => "SemiEI",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "semigst" => Ok(Mode::SemiGst),
            "ei" => Ok(Mode::Ei),
            "semiei" => Ok(Mode::SemiEi),
            _ => Err(format!(
                "unknown mode `{s}` (expected SemiGST, EI or SemiEI)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_phone: usize,
    pub d_tone: usize,
    pub d_pos: usize,
    pub d_text: usize,
    pub d_ref: usize,
    pub d_tok: usize,
    /// Token count, equal to the number of emotions.
    pub k: usize,
    pub d_mc: usize,
    pub frames_per_token: usize,
    pub n_phones: usize,
    pub n_tones: usize,
    pub pos_buckets: usize,
    pub lambda_ce: f64,
    pub mode: Mode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_phone: 32,
            d_tone: 8,
            d_pos: 8,
            d_text: 16,
            d_ref: 16,
            d_tok: 16,
            k: 4,
            d_mc: 12,
            frames_per_token: 4,
            n_phones: 40,
            n_tones: TONE_COUNT,
            pos_buckets: 4,
            lambda_ce: 1.0,
            mode: Mode::SemiGst,
        }
    }
}

impl ModelConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Copies the corpus-determined sizes (emotion count, frame layout,
    /// vocabularies) into this config.
    pub fn fit_corpus(mut self, spec: &CorpusSpec) -> Self {
        self.k = spec.emotions.len();
        self.d_mc = spec.d_mc;
        self.frames_per_token = spec.frames_per_token;
        self.n_phones = spec.n_phones;
        self.n_tones = TONE_COUNT;
        self.pos_buckets = spec.pos_buckets;
        self
    }

    /// Width of a flattened frame: cepstra, log-F0 and voicing.
    pub fn channels(&self) -> usize {
        self.d_mc + 2
    }

    pub fn text_input_width(&self) -> usize {
        self.d_phone + self.d_tone + self.d_pos
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("d_phone", self.d_phone),
            ("d_tone", self.d_tone),
            ("d_pos", self.d_pos),
            ("d_text", self.d_text),
            ("d_ref", self.d_ref),
            ("d_tok", self.d_tok),
            ("k", self.k),
            ("d_mc", self.d_mc),
            ("frames_per_token", self.frames_per_token),
            ("n_phones", self.n_phones),
            ("n_tones", self.n_tones),
            ("pos_buckets", self.pos_buckets),
        ] {
            if v == 0 {
                return Err(Error::validation(field, "must be >= 1"));
            }
        }
        if !(self.lambda_ce >= 0.0 && self.lambda_ce.is_finite()) {
            return Err(Error::validation("lambda_ce", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn from_key_values(mut kv: KeyValues) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            d_phone: kv.take("d_phone")?.unwrap_or(d.d_phone),
            d_tone: kv.take("d_tone")?.unwrap_or(d.d_tone),
            d_pos: kv.take("d_pos")?.unwrap_or(d.d_pos),
            d_text: kv.take("d_text")?.unwrap_or(d.d_text),
            d_ref: kv.take("d_ref")?.unwrap_or(d.d_ref),
            d_tok: kv.take("d_tok")?.unwrap_or(d.d_tok),
            k: kv.take("k")?.unwrap_or(d.k),
            d_mc: kv.take("d_mc")?.unwrap_or(d.d_mc),
            frames_per_token: kv.take("frames_per_token")?.unwrap_or(d.frames_per_token),
            n_phones: kv.take("n_phones")?.unwrap_or(d.n_phones),
            n_tones: kv.take("n_tones")?.unwrap_or(d.n_tones),
            pos_buckets: kv.take("pos_buckets")?.unwrap_or(d.pos_buckets),
            lambda_ce: kv.take("lambda_ce")?.unwrap_or(d.lambda_ce),
            mode: kv.take("mode")?.unwrap_or(d.mode),
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_key_values(KeyValues::read(path)?)
    }

    pub fn to_config_string(&self) -> String {
        let mut w = KvWriter::default();
        w.put("mode", self.mode)
            .put("lambda_ce", self.lambda_ce)
            .put("d_phone", self.d_phone)
            .put("d_tone", self.d_tone)
            .put("d_pos", self.d_pos)
            .put("d_text", self.d_text)
            .put("d_ref", self.d_ref)
            .put("d_tok", self.d_tok)
            .put("k", self.k)
            .put("d_mc", self.d_mc)
            .put("frames_per_token", self.frames_per_token)
            .put("n_phones", self.n_phones)
            .put("n_tones", self.n_tones)
            .put("pos_buckets", self.pos_buckets);
        w.finish()
    }
}
