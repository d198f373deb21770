use std::path::Path;

use crate::config::{KeyValues, KvWriter};
use crate::error::{Error, Result};

pub const DEFAULT_EMOTIONS: [&str; 4] = ["neutral", "happy", "sad", "angry"];

/// Per-emotion prosody prototype and utterance count.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionPrototype {
    pub name: String,
    pub count: usize,
    /// Hz.
    pub f0_mean: f64,
    /// Hz.
    pub f0_std: f64,
    pub mc_offset: Vec<f64>,
    pub noise_std: f64,
}

impl EmotionPrototype {
    /// Built-in prototype for emotion `index` (F0 in Hz). Happy and angry
    /// get higher, more variable F0; sad the lowest and flattest.
    pub fn default_for(name: &str, index: usize, d_mc: usize) -> Self {
        let (f0_mean, f0_std) = match name {
            "neutral" => (180.0, 15.0),
            "happy" => (260.0, 30.0),
            "sad" => (160.0, 10.0),
            "angry" => (240.0, 35.0),
            _ => (200.0, 20.0),
        };
        Self {
            name: name.to_string(),
            count: 100,
            f0_mean,
            f0_std,
            mc_offset: default_offset(index, d_mc),
            noise_std: 0.25,
        }
    }
}

fn default_offset(index: usize, d_mc: usize) -> Vec<f64> {
    if index == 0 {
        return vec![0.0; d_mc];
    }
    (0..d_mc)
        .map(|i| 0.8 * (index as f64 * (i as f64 + 1.0) * 0.9).sin())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub emotions: Vec<EmotionPrototype>,
    pub t_text_min: usize,
    pub t_text_max: usize,
    pub frames_per_token: usize,
    pub d_mc: usize,
    pub n_phones: usize,
    pub pos_buckets: usize,
    /// Fraction of the phone inventory that is voiced.
    pub voicing_rate: f64,
    /// Standard deviation of the per-phone cepstral patterns.
    pub phone_spread: f64,
    /// Test utterances per emotion applied by `split_corpus` at generation time.
    pub test_per_emotion: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        let d_mc = 12;
        Self {
            emotions: DEFAULT_EMOTIONS
                .iter()
                .enumerate()
                .map(|(i, n)| EmotionPrototype::default_for(n, i, d_mc))
                .collect(),
            t_text_min: 5,
            t_text_max: 15,
            frames_per_token: 4,
            d_mc,
            n_phones: 40,
            pos_buckets: 4,
            voicing_rate: 0.7,
            phone_spread: 1.0,
            test_per_emotion: 30,
            seed: 20190101,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: usize| {
            if v == 0 {
                Err(Error::validation(field, "must be >= 1"))
            } else {
                Ok(())
            }
        };
        if self.emotions.is_empty() {
            return Err(Error::validation(
                "emotions",
                "at least one emotion required",
            ));
        }
        positive("t_text_min", self.t_text_min)?;
        positive("frames_per_token", self.frames_per_token)?;
        positive("d_mc", self.d_mc)?;
        positive("n_phones", self.n_phones)?;
        positive("pos_buckets", self.pos_buckets)?;
        if self.t_text_max < self.t_text_min {
            return Err(Error::validation("t_text_max", "smaller than t_text_min"));
        }
        if !(self.voicing_rate > 0.0 && self.voicing_rate <= 1.0) {
            return Err(Error::validation("voicing_rate", "must lie in (0, 1]"));
        }
        if !(self.phone_spread >= 0.0 && self.phone_spread.is_finite()) {
            return Err(Error::validation("phone_spread", "must be finite and >= 0"));
        }
        for (i, e) in self.emotions.iter().enumerate() {
            let field = |f: &str| format!("{f}.{}", e.name);
            if e.name.is_empty() || e.name.contains(char::is_whitespace) {
                return Err(Error::validation(
                    "emotions",
                    format!("bad name `{}`", e.name),
                ));
            }
            if self.emotions[..i].iter().any(|o| o.name == e.name) {
                return Err(Error::validation(
                    "emotions",
                    format!("duplicate `{}`", e.name),
                ));
            }
            positive(&field("count"), e.count)?;
            if !(e.f0_mean > 0.0 && e.f0_mean.is_finite()) {
                return Err(Error::validation(
                    field("f0_mean"),
                    "must be finite and > 0",
                ));
            }
            if !(e.f0_std >= 0.0 && e.f0_std.is_finite()) {
                return Err(Error::validation(
                    field("f0_std"),
                    "must be finite and >= 0",
                ));
            }
            if !(e.noise_std >= 0.0 && e.noise_std.is_finite()) {
                return Err(Error::validation(
                    field("noise_std"),
                    "must be finite and >= 0",
                ));
            }
            if e.mc_offset.len() != self.d_mc || e.mc_offset.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(
                    field("mc_offset"),
                    format!("need {} finite values", self.d_mc),
                ));
            }
        }
        Ok(())
    }

    /// Reads a corpus config; absent keys fall back to the defaults.
    pub fn from_key_values(mut kv: KeyValues) -> Result<Self> {
        let base = Self::default();
        let d_mc = kv.take("d_mc")?.unwrap_or(base.d_mc);
        let names: Vec<String> = kv
            .take_list("emotions")?
            .unwrap_or_else(|| DEFAULT_EMOTIONS.iter().map(|s| s.to_string()).collect());
        let shared_count: Option<usize> = kv.take("utterances_per_emotion")?;
        let mut emotions = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let mut e = EmotionPrototype::default_for(name, i, d_mc);
            if let Some(c) = shared_count {
                e.count = c;
            }
            if let Some(c) = kv.take(&format!("count.{name}"))? {
                e.count = c;
            }
            if let Some(v) = kv.take(&format!("f0_mean.{name}"))? {
                e.f0_mean = v;
            }
            if let Some(v) = kv.take(&format!("f0_std.{name}"))? {
                e.f0_std = v;
            }
            if let Some(v) = kv.take(&format!("noise_std.{name}"))? {
                e.noise_std = v;
            }
            if let Some(v) = kv.take_list(&format!("mc_offset.{name}"))? {
                e.mc_offset = v;
            }
            emotions.push(e);
        }
        let spec = Self {
            emotions,
            t_text_min: kv.take("t_text_min")?.unwrap_or(base.t_text_min),
            t_text_max: kv.take("t_text_max")?.unwrap_or(base.t_text_max),
            frames_per_token: kv
                .take("frames_per_token")?
                .unwrap_or(base.frames_per_token),
            d_mc,
            n_phones: kv.take("n_phones")?.unwrap_or(base.n_phones),
            pos_buckets: kv.take("pos_buckets")?.unwrap_or(base.pos_buckets),
            voicing_rate: kv.take("voicing_rate")?.unwrap_or(base.voicing_rate),
            phone_spread: kv.take("phone_spread")?.unwrap_or(base.phone_spread),
            test_per_emotion: kv
                .take("test_per_emotion")?
                .unwrap_or(base.test_per_emotion),
            seed: kv.take("seed")?.unwrap_or(base.seed),
        };
        kv.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_key_values(KeyValues::read(path)?)
    }

    /// Full config text; every value is written so the spec round-trips exactly.
    pub fn to_config_string(&self) -> String {
        let mut w = KvWriter::default();
        w.put("seed", self.seed);
        let names: Vec<&str> = self.emotions.iter().map(|e| e.name.as_str()).collect();
        w.put_list("emotions", &names)
            .put("t_text_min", self.t_text_min)
            .put("t_text_max", self.t_text_max)
            .put("frames_per_token", self.frames_per_token)
            .put("d_mc", self.d_mc)
            .put("n_phones", self.n_phones)
            .put("pos_buckets", self.pos_buckets)
            .put("voicing_rate", self.voicing_rate)
            .put("phone_spread", self.phone_spread)
            .put("test_per_emotion", self.test_per_emotion);
        for e in &self.emotions {
            w.put(&format!("count.{}", e.name), e.count)
                .put(&format!("f0_mean.{}", e.name), e.f0_mean)
                .put(&format!("f0_std.{}", e.name), e.f0_std)
                .put(&format!("noise_std.{}", e.name), e.noise_std)
                .put_list(&format!("mc_offset.{}", e.name), &e.mc_offset);
        }
        w.finish()
    }
}
