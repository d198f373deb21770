//! Recognise the emotion of held-out utterances from the token weights of a
//! model trained with 5% labels.

use emotion_tokens::corpus::{generate_corpus, mask_labels, split_corpus, CorpusSpec};
use emotion_tokens::eval::recognize_emotions;
use emotion_tokens::model::ModelConfig;
use emotion_tokens::training::{train, TrainConfig};
use emotion_tokens::Result;

pub fn run(fraction: f64, epochs: usize) -> Result<()> {
    let spec = CorpusSpec::default();
    let corpus = mask_labels(
        split_corpus(generate_corpus(&spec)?, spec.test_per_emotion)?,
        fraction,
        1,
    )?;
    let train_config = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let (params, _) = train(
        &corpus,
        &ModelConfig::default().fit_corpus(&spec),
        &train_config,
    )?;
    let report = recognize_emotions(&params, &corpus)?;
    print!("{}", report.to_table());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let fraction = std::env::args()
        .nth(1)
        .map_or(Ok(0.05), |s| s.parse())
        .expect("fraction");
    run(fraction, TrainConfig::default().epochs)
}
