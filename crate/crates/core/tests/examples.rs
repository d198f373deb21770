//! Runs the cheaper examples so they stay in sync with the library.

#[path = "../examples/evaluate_metrics.rs"]
mod evaluate_metrics;
#[path = "../examples/fastdtw_alignment.rs"]
mod fastdtw_alignment;
#[path = "../examples/generate_corpus.rs"]
mod generate_corpus;
#[path = "../examples/gradient_check.rs"]
mod gradient_check;
#[path = "../examples/label_sweep.rs"]
mod label_sweep;
#[path = "../examples/recognize_emotions.rs"]
mod recognize_emotions;
#[path = "../examples/train_semi_gst.rs"]
mod train_semi_gst;

#[test]
fn generate_corpus_runs() {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus::run(dir.path().join("c")).unwrap();
}

#[test]
fn training_examples_run() {
    train_semi_gst::run(3).unwrap();
    evaluate_metrics::run(2).unwrap();
    recognize_emotions::run(0.2, 2).unwrap();
    label_sweep::run(1, 1).unwrap();
}

#[test]
fn gradient_check_runs() {
    gradient_check::run().unwrap();
}

#[test]
fn fastdtw_alignment_runs() {
    fastdtw_alignment::run(20).unwrap();
}
