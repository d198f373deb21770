//! Train the three model variants and compare their objective metrics on the
//! test split. The token model and the semi-supervised embedding table see 5%
//! of the labels; the full embedding table sees all of them.

use emotion_tokens::corpus::{generate_corpus, mask_labels, split_corpus, CorpusSpec};
use emotion_tokens::eval::evaluate_model;
use emotion_tokens::model::{Mode, ModelConfig};
use emotion_tokens::training::{train, TrainConfig};
use emotion_tokens::Result;

pub fn run(epochs: usize) -> Result<()> {
    let spec = CorpusSpec::default();
    let corpus = split_corpus(generate_corpus(&spec)?, spec.test_per_emotion)?;
    let train_config = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    for (mode, fraction) in [(Mode::SemiGst, 0.05), (Mode::SemiEi, 0.05), (Mode::Ei, 1.0)] {
        let masked = mask_labels(corpus.clone(), fraction, 1)?;
        let config = ModelConfig::default().fit_corpus(&spec).with_mode(mode);
        let (params, _) = train(&masked, &config, &train_config)?;
        let report = evaluate_model(&params, &masked)?;
        println!("== {mode} ({:.0}% labels)", fraction * 100.0);
        print!("{}", report.to_table());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run(TrainConfig::default().epochs)
}
