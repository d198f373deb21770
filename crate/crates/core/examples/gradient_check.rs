//! Central-difference check of the hand-written gradients for every mode.

use emotion_tokens::cli::{label_patterns, pattern_name};
use emotion_tokens::model::{Mode, ModelConfig};
use emotion_tokens::training::{grad_check, BatchSpec};
use emotion_tokens::Result;

pub fn run() -> Result<()> {
    for mode in Mode::ALL {
        for &labels in label_patterns(mode) {
            let spec = BatchSpec {
                labels,
                ..BatchSpec::default()
            };
            let report = grad_check(&ModelConfig::default().with_mode(mode), &spec, 1e-5, 1e-4)?;
            println!(
                "{mode:<8} {:<12} {:>4} coords  max rel err {:.2e}  {}",
                pattern_name(labels),
                report.checked,
                report.max_rel_err,
                if report.passed() { "ok" } else { "FAIL" }
            );
            for (name, n, worst) in &report.arrays {
                println!("    {name:<12} {n:>3}  {worst:.2e}");
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
