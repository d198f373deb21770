//! Sweep the labeled fraction for the token model and print per-fraction
//! medians.
//!
//! cargo run --release --example label_sweep -- [seeds]

use emotion_tokens::cli::{run_sweep, summarize, summary_tsv, SweepSpec};
use emotion_tokens::corpus::{generate_corpus, split_corpus, CorpusSpec};
use emotion_tokens::model::{Mode, ModelConfig};
use emotion_tokens::training::TrainConfig;
use emotion_tokens::Result;

pub fn run(seeds: u64, epochs: usize) -> Result<()> {
    let spec = CorpusSpec::default();
    let corpus = split_corpus(generate_corpus(&spec)?, spec.test_per_emotion)?;
    let sweep = SweepSpec {
        seeds: (1..=seeds).collect(),
        modes: vec![Mode::SemiGst, Mode::SemiEi],
        ..SweepSpec::default()
    };
    let train_config = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let result = run_sweep(&corpus, &sweep, &ModelConfig::default(), &train_config, 0)?;
    for f in &result.failures {
        eprintln!(
            "cell {} / {} / {} failed: {}",
            f.fraction, f.seed, f.mode, f.error
        );
    }
    print!("{}", summary_tsv(&summarize(&sweep, &result.rows)));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let seeds = std::env::args()
        .nth(1)
        .map_or(Ok(1), |s| s.parse())
        .expect("seed count");
    run(seeds, TrainConfig::default().epochs)
}
