//! Train the token model with 5% of the labels and checkpoint it.

use emotion_tokens::corpus::{generate_corpus, mask_labels, split_corpus, CorpusSpec};
use emotion_tokens::model::{load_checkpoint, save_checkpoint, ModelConfig};
use emotion_tokens::training::{train, TrainConfig};
use emotion_tokens::Result;

pub fn run(epochs: usize) -> Result<()> {
    let spec = CorpusSpec::default();
    let corpus = split_corpus(generate_corpus(&spec)?, spec.test_per_emotion)?;
    let corpus = mask_labels(corpus, 0.05, 1)?;
    let labeled = corpus.train().filter(|u| u.labeled).count();
    println!(
        "{labeled} of {} train utterances labeled",
        corpus.train().count()
    );

    let model_config = ModelConfig::default().fit_corpus(&spec);
    let train_config = TrainConfig {
        epochs,
        probe: true,
        ..TrainConfig::default()
    };
    let (params, history) = train(&corpus, &model_config, &train_config)?;
    println!("epoch  recon      ce         total      probe acc");
    let every = (epochs / 10).max(1);
    for rec in history
        .epochs
        .iter()
        .filter(|r| r.epoch % every == 0 || r.epoch == 1)
    {
        println!(
            "{:>5}  {:.6}  {:.6}  {:.6}  {:.3}",
            rec.epoch,
            rec.loss.recon,
            rec.loss.ce,
            rec.loss.total,
            rec.probe_accuracy.unwrap_or(f64::NAN)
        );
    }

    let path = std::env::temp_dir().join("emotok-semigst.ckpt");
    save_checkpoint(&params, &path)?;
    assert_eq!(load_checkpoint(&path)?, params);
    println!(
        "{} parameters saved to {}",
        params.parameter_count(),
        path.display()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run(TrainConfig::default().epochs)
}
