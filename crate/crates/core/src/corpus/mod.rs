//! Synthetic emotional acoustic-feature corpus.
//!
//! Each utterance is a sequence of abstract text tokens (phone, tone,
//! relative position) and a frame matrix of mel-cepstrum-like coefficients
//! plus explicit log-F0 and voicing channels. Frames are generated per token
//! from a phone pattern, a shared within-token glide, the emotion's cepstral
//! offset and Gaussian noise; F0 is drawn per token from the emotion's
//! prosody prototype.

mod io;
mod spec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub use io::{load_corpus, read_frame_file, save_corpus, write_frame_file, FRAME_MAGIC};
pub use spec::{CorpusSpec, EmotionPrototype, DEFAULT_EMOTIONS};

use crate::error::{Error, Result};

/// Number of distinct tone ids (five lexical tones plus neutral).
pub const TONE_COUNT: usize = 6;

/// Relative F0 shift applied per tone id; zero-mean over the tone inventory.
const TONE_F0_SHIFT: [f64; TONE_COUNT] = [0.0, 0.08, -0.04, -0.08, 0.04, 0.0];

/// Lowest F0 the generator will emit, in Hz.
const F0_FLOOR_HZ: f64 = 40.0;

const SPLIT_SALT: u64 = 0x5350_4c49_545f_5631;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmotionId(pub usize);

impl EmotionId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TextToken {
    pub phone_id: u32,
    pub tone_id: u8,
    pub position_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticFrame {
    pub mc: Vec<f32>,
    /// Natural log of F0 in Hz; 0.0 on unvoiced frames.
    pub log_f0: f32,
    pub voiced: bool,
}

impl AcousticFrame {
    pub fn unvoiced(mc: Vec<f32>) -> Self {
        Self {
            mc,
            log_f0: 0.0,
            voiced: false,
        }
    }

    /// Channel count of the flattened frame: `d_mc` coefficients, log-F0, voicing.
    pub fn channels(&self) -> usize {
        self.mc.len() + 2
    }

    /// Flattened `[mc.., log_f0, voiced]` in double precision.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.mc.iter().map(|&x| x as f64).collect();
        v.push(self.log_f0 as f64);
        v.push(if self.voiced { 1.0 } else { 0.0 });
        v
    }

    pub fn f0_hz(&self) -> f64 {
        if self.voiced {
            (self.log_f0 as f64).exp()
        } else {
            0.0
        }
    }

    fn is_consistent(&self) -> bool {
        (self.log_f0 <= 0.0 || self.voiced) && (self.voiced || self.log_f0 == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub emotion: EmotionId,
    pub labeled: bool,
    pub tokens: Vec<TextToken>,
    pub frames: Vec<AcousticFrame>,
    pub split: Split,
}

impl Utterance {
    /// The emotion label when it is visible to training.
    pub fn label(&self) -> Option<EmotionId> {
        self.labeled.then_some(self.emotion)
    }

    pub fn frames_per_token(&self) -> usize {
        self.frames.len() / self.tokens.len().max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn emotion_count(&self) -> usize {
        self.spec.emotions.len()
    }

    pub fn emotion_name(&self, id: EmotionId) -> &str {
        &self.spec.emotions[id.0].name
    }

    pub fn emotion_names(&self) -> Vec<String> {
        self.spec.emotions.iter().map(|e| e.name.clone()).collect()
    }

    pub fn emotion_by_name(&self, name: &str) -> Option<EmotionId> {
        self.spec
            .emotions
            .iter()
            .position(|e| e.name == name)
            .map(EmotionId)
    }

    pub fn train(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(|u| u.split == Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(|u| u.split == Split::Test)
    }

    /// Checks the per-utterance frame and id invariants.
    pub fn validate(&self) -> Result<()> {
        let k = self.emotion_count();
        let fpt = self.spec.frames_per_token;
        for u in &self.utterances {
            if u.emotion.0 >= k {
                return Err(Error::validation(&u.id, "emotion index out of range"));
            }
            if u.tokens.is_empty() {
                return Err(Error::validation(&u.id, "no text tokens"));
            }
            if u.frames.len() != u.tokens.len() * fpt {
                return Err(Error::validation(
                    &u.id,
                    format!(
                        "{} frames for {} tokens at {} frames per token",
                        u.frames.len(),
                        u.tokens.len(),
                        fpt
                    ),
                ));
            }
            for t in &u.tokens {
                if t.phone_id as usize >= self.spec.n_phones
                    || t.tone_id as usize >= TONE_COUNT
                    || t.position_id as usize >= self.spec.pos_buckets
                {
                    return Err(Error::validation(
                        &u.id,
                        format!("token {t:?} out of range"),
                    ));
                }
            }
            for f in &u.frames {
                if f.mc.len() != self.spec.d_mc {
                    return Err(Error::validation(&u.id, "frame width differs from d_mc"));
                }
                if !f.is_consistent() {
                    return Err(Error::validation(&u.id, "voicing/log_f0 mismatch"));
                }
            }
        }
        Ok(())
    }
}

/// Bucketed relative position of token `t` in an utterance of `len` tokens.
pub fn position_bucket(t: usize, len: usize, buckets: usize) -> u32 {
    ((t * buckets) / len.max(1)).min(buckets - 1) as u32
}

/// Deterministically generates a corpus from `spec`; every utterance starts
/// labeled and in the train split.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.d_mc;
    let fpt = spec.frames_per_token;

    let pattern = Normal::new(0.0, spec.phone_spread)
        .map_err(|e| Error::validation("phone_spread", e.to_string()))?;
    let phone_patterns: Vec<Vec<f64>> = (0..spec.n_phones)
        .map(|_| (0..d).map(|_| pattern.sample(&mut rng)).collect())
        .collect();
    let glide: Vec<f64> = (0..d)
        .map(|_| 0.2 * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut order: Vec<usize> = (0..spec.n_phones).collect();
    order.shuffle(&mut rng);
    let n_voiced = ((spec.voicing_rate * spec.n_phones as f64).round() as usize).max(1);
    let mut phone_voiced = vec![false; spec.n_phones];
    for &p in &order[..n_voiced.min(spec.n_phones)] {
        phone_voiced[p] = true;
    }

    let centre = (fpt as f64 - 1.0) / 2.0;
    let mut utterances = Vec::new();
    for (k, proto) in spec.emotions.iter().enumerate() {
        for n in 0..proto.count {
            let t_text = rng.random_range(spec.t_text_min..=spec.t_text_max);
            let mut tokens = Vec::with_capacity(t_text);
            let mut frames = Vec::with_capacity(t_text * fpt);
            for t in 0..t_text {
                let token = TextToken {
                    phone_id: rng.random_range(0..spec.n_phones) as u32,
                    tone_id: rng.random_range(0..TONE_COUNT) as u8,
                    position_id: position_bucket(t, t_text, spec.pos_buckets),
                };
                let z: f64 = rng.sample(StandardNormal);
                let f0 = (proto.f0_mean * (1.0 + TONE_F0_SHIFT[token.tone_id as usize])
                    + proto.f0_std * z)
                    .max(F0_FLOOR_HZ);
                let voiced = phone_voiced[token.phone_id as usize];
                let base = &phone_patterns[token.phone_id as usize];
                for j in 0..fpt {
                    let offset_j = j as f64 - centre;
                    let mc = (0..d)
                        .map(|i| {
                            let noise: f64 = rng.sample(StandardNormal);
                            (base[i]
                                + glide[i] * offset_j
                                + proto.mc_offset[i]
                                + proto.noise_std * noise) as f32
                        })
                        .collect();
                    frames.push(AcousticFrame {
                        mc,
                        log_f0: if voiced { f0.ln() as f32 } else { 0.0 },
                        voiced,
                    });
                }
                tokens.push(token);
            }
            utterances.push(Utterance {
                id: format!("{}_{:04}", proto.name, n),
                emotion: EmotionId(k),
                labeled: true,
                tokens,
                frames,
                split: Split::Train,
            });
        }
    }
    Ok(Corpus {
        spec: spec.clone(),
        utterances,
    })
}

fn indices_by_emotion(corpus: &Corpus, filter: impl Fn(&Utterance) -> bool) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); corpus.emotion_count()];
    for (i, u) in corpus.utterances.iter().enumerate() {
        if filter(u) {
            groups[u.emotion.0].push(i);
        }
    }
    // order by id so the selection does not depend on utterance order
    for g in &mut groups {
        g.sort_by(|&a, &b| corpus.utterances[a].id.cmp(&corpus.utterances[b].id));
    }
    groups
}

/// Re-tags exactly `test_per_emotion` utterances of each emotion as test,
/// chosen by a shuffle seeded from the corpus seed. All others become train.
pub fn split_corpus(mut corpus: Corpus, test_per_emotion: usize) -> Result<Corpus> {
    let groups = indices_by_emotion(&corpus, |_| true);
    for (k, g) in groups.iter().enumerate() {
        if g.len() < test_per_emotion {
            return Err(Error::InsufficientUtterances {
                emotion: corpus.spec.emotions[k].name.clone(),
                available: g.len(),
                requested: test_per_emotion,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(corpus.spec.seed ^ SPLIT_SALT);
    for mut g in groups {
        g.shuffle(&mut rng);
        for (rank, &i) in g.iter().enumerate() {
            corpus.utterances[i].split = if rank < test_per_emotion {
                Split::Test
            } else {
                Split::Train
            };
        }
    }
    Ok(corpus)
}

/// Number of train utterances that keep their label at `fraction`.
pub fn labeled_count(fraction: f64, n_train: usize) -> usize {
    // tolerance absorbs products like 0.29 * 100 = 28.999999999999996
    ((fraction * n_train as f64 + 1e-9).floor() as usize).min(n_train)
}

/// Keeps `floor(fraction * n)` labels per emotion among train utterances
/// (seeded, stratified choice) and hides the rest. Test labels are untouched.
pub fn mask_labels(mut corpus: Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::validation(
            "fraction",
            format!("{fraction} not in [0, 1]"),
        ));
    }
    let groups = indices_by_emotion(&corpus, |u| u.split == Split::Train);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for mut g in groups {
        let keep = labeled_count(fraction, g.len());
        g.shuffle(&mut rng);
        for (rank, &i) in g.iter().enumerate() {
            corpus.utterances[i].labeled = rank < keep;
        }
    }
    Ok(corpus)
}
