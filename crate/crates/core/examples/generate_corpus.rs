//! Generate the default synthetic corpus, write it to disk and read it back.
//!
//! cargo run --example generate_corpus -- [out_dir]

use std::path::PathBuf;

use emotion_tokens::corpus::{generate_corpus, load_corpus, save_corpus, split_corpus, CorpusSpec};
use emotion_tokens::Result;

pub fn run(out: PathBuf) -> Result<()> {
    let spec = CorpusSpec::default();
    let corpus = split_corpus(generate_corpus(&spec)?, spec.test_per_emotion)?;
    save_corpus(&corpus, &out)?;
    let loaded = load_corpus(&out)?;
    assert_eq!(loaded, corpus);

    println!(
        "{} utterances in {}",
        corpus.utterances.len(),
        out.display()
    );
    println!(
        "{:<8} {:>6} {:>5} {:>10} {:>8}",
        "emotion", "train", "test", "F0 (Hz)", "voiced"
    );
    for (k, name) in corpus.emotion_names().iter().enumerate() {
        let utts: Vec<_> = corpus
            .utterances
            .iter()
            .filter(|u| u.emotion.index() == k)
            .collect();
        let train = utts.iter().filter(|u| u.split.as_str() == "train").count();
        let frames: Vec<_> = utts.iter().flat_map(|u| &u.frames).collect();
        let voiced: Vec<_> = frames.iter().filter(|f| f.voiced).collect();
        let f0 = voiced.iter().map(|f| f.f0_hz()).sum::<f64>() / voiced.len() as f64;
        println!(
            "{name:<8} {train:>6} {:>5} {f0:>10.1} {:>7.1}%",
            utts.len() - train,
            100.0 * voiced.len() as f64 / frames.len() as f64
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("emotok-corpus"));
    run(out)
}
