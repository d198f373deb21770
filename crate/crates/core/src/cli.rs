//! Batch commands behind the `emotok` binary.
//!
//! Each `cmd_*` function is usable on its own; [`main`] only parses flags,
//! resolves config files and maps errors to exit codes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{KeyValues, KvWriter};
use crate::corpus::{
    generate_corpus, load_corpus, mask_labels, save_corpus, split_corpus, Corpus, CorpusSpec,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, recognize_emotions, ConfusionReport, MetricsReport};
use crate::model::{load_checkpoint, save_checkpoint, Mode, ModelConfig, ModelParams};
use crate::training::{
    grad_check, train, BatchSpec, GradCheckReport, LabelPattern, TrainConfig, TrainHistory,
};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.tsv";
pub const SWEEP_FILE: &str = "sweep.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const FAILURES_FILE: &str = "failures.tsv";

/// Generates, splits and writes a corpus.
pub fn cmd_gen(spec: &CorpusSpec, out_dir: &Path) -> Result<Corpus> {
    let corpus = split_corpus(generate_corpus(spec)?, spec.test_per_emotion)?;
    save_corpus(&corpus, out_dir)?;
    Ok(corpus)
}

/// Masks labels down to `fraction` (seeded by the train seed), trains, and
/// writes the checkpoint and history into `out_dir`.
pub fn cmd_train(
    corpus_dir: &Path,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    fraction: f64,
    out_dir: &Path,
) -> Result<(ModelParams, TrainHistory)> {
    let corpus = load_corpus(corpus_dir)?;
    let corpus = mask_labels(corpus, fraction, train_config.seed)?;
    let model_config = model_config.clone().fit_corpus(&corpus.spec);
    let (params, history) = train(&corpus, &model_config, train_config)?;
    fs::create_dir_all(out_dir)?;
    save_checkpoint(&params, &out_dir.join(CHECKPOINT_FILE))?;
    fs::write(out_dir.join(HISTORY_FILE), history.to_tsv())?;
    Ok((params, history))
}

pub fn cmd_eval(checkpoint: &Path, corpus_dir: &Path, out_dir: &Path) -> Result<MetricsReport> {
    let params = load_checkpoint(checkpoint)?;
    let corpus = load_corpus(corpus_dir)?;
    let report = evaluate_model(&params, &corpus)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("metrics.tsv"), report.to_tsv())?;
    fs::write(out_dir.join("metrics.txt"), report.to_table())?;
    Ok(report)
}

pub fn cmd_recognize(
    checkpoint: &Path,
    corpus_dir: &Path,
    out_dir: &Path,
) -> Result<ConfusionReport> {
    let params = load_checkpoint(checkpoint)?;
    let corpus = load_corpus(corpus_dir)?;
    let report = recognize_emotions(&params, &corpus)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("confusion.tsv"), report.to_tsv())?;
    fs::write(out_dir.join("confusion.txt"), report.to_table())?;
    Ok(report)
}

/// Grid of label fractions, seeds and model variants.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            fractions: vec![0.02, 0.05, 0.10, 0.20],
            seeds: vec![1, 2, 3],
            modes: Mode::ALL.to_vec(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::validation("fractions", "must not be empty"));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::validation(
                "fractions",
                format!("{f} is outside [0, 1]"),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "must not be empty"));
        }
        if self.modes.is_empty() {
            return Err(Error::validation("modes", "must not be empty"));
        }
        Ok(())
    }

    pub fn from_key_values(mut kv: KeyValues) -> Result<Self> {
        let mut s = Self::default();
        if let Some(v) = kv.take_list("fractions")? {
            s.fractions = v;
        }
        if let Some(v) = kv.take_list("seeds")? {
            s.seeds = v;
        }
        if let Some(v) = kv.take_list("modes")? {
            s.modes = v;
        }
        kv.finish()?;
        s.validate()?;
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_key_values(KeyValues::read(path)?)
    }

    pub fn to_config_string(&self) -> String {
        let mut w = KvWriter::default();
        w.put_list("fractions", &self.fractions)
            .put_list("seeds", &self.seeds)
            .put_list("modes", &self.modes);
        w.finish()
    }

    /// Cells in reduction order: fraction, then seed, then mode.
    pub fn cells(&self) -> Vec<(f64, u64, Mode)> {
        let mut cells =
            Vec::with_capacity(self.fractions.len() * self.seeds.len() * self.modes.len());
        for &f in &self.fractions {
            for &s in &self.seeds {
                for &m in &self.modes {
                    cells.push((f, s, m));
                }
            }
        }
        cells
    }
}

/// One trained and evaluated sweep cell. Recognition fields are `None` for
/// the embedding-table variants.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub fraction: f64,
    pub seed: u64,
    pub mode: Mode,
    pub accuracy: Option<f64>,
    pub mean_w_bar: Option<f64>,
    pub mcd: f64,
    pub f0_rmse: f64,
    pub vuv: f64,
    pub ffe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub fraction: f64,
    pub seed: u64,
    pub mode: Mode,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

/// Trains and scores one cell. EI is the fully labeled upper bound, so its
/// cells ignore `fraction` and train on every label.
pub fn run_cell(
    corpus: &Corpus,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    fraction: f64,
    seed: u64,
    mode: Mode,
) -> Result<SweepRow> {
    let effective = if mode == Mode::Ei { 1.0 } else { fraction };
    let masked = mask_labels(corpus.clone(), effective, seed)?;
    let mc = model_config
        .clone()
        .fit_corpus(&corpus.spec)
        .with_mode(mode);
    let tc = TrainConfig {
        seed,
        init_seed: seed,
        probe: false,
        ..train_config.clone()
    };
    let (params, _) = train(&masked, &mc, &tc)?;
    let metrics = evaluate_model(&params, &masked)?;
    let (accuracy, mean_w_bar) = if mode == Mode::SemiGst {
        let r = recognize_emotions(&params, &masked)?;
        (Some(r.accuracy), Some(r.mean_w_bar()))
    } else {
        (None, None)
    };
    Ok(SweepRow {
        fraction,
        seed,
        mode,
        accuracy,
        mean_w_bar,
        mcd: metrics.overall.mcd_db,
        f0_rmse: metrics.overall.f0_rmse_hz,
        vuv: metrics.overall.vuv_pct,
        ffe: metrics.overall.ffe_pct,
    })
}

/// Runs every cell on a pool of `jobs` threads (0 = all cores). Output
/// order is the cell order regardless of scheduling.
pub fn run_sweep(
    corpus: &Corpus,
    spec: &SweepSpec,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    jobs: usize,
) -> Result<SweepResult> {
    spec.validate()?;
    model_config.clone().fit_corpus(&corpus.spec).validate()?;
    train_config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| {
        spec.cells()
            .into_par_iter()
            .map(|(f, s, m)| {
                let r = run_cell(corpus, model_config, train_config, f, s, m);
                match &r {
                    Ok(row) => {
                        log::info!("cell fraction={f} seed={s} mode={m}: mcd {:.3}", row.mcd)
                    }
                    Err(e) => log::error!("cell fraction={f} seed={s} mode={m} failed: {e}"),
                }
                ((f, s, m), r)
            })
            .collect()
    });
    let mut result = SweepResult::default();
    for ((fraction, seed, mode), r) in outcomes {
        match r {
            Ok(row) => result.rows.push(row),
            Err(e) => result.failures.push(SweepFailure {
                fraction,
                seed,
                mode,
                error: e.to_string(),
            }),
        }
    }
    Ok(result)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

const ROW_HEADER: &str = "fraction\tseed\tmode\taccuracy\tmean_w_bar\tmcd\tf0_rmse\tvuv\tffe\n";

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from(ROW_HEADER);
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.fraction,
            r.seed,
            r.mode,
            opt(r.accuracy),
            opt(r.mean_w_bar),
            r.mcd,
            r.f0_rmse,
            r.vuv,
            r.ffe
        );
    }
    out
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Median over seeds of every metric, one row per (fraction, mode).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub fraction: f64,
    pub mode: Mode,
    pub cells: usize,
    pub accuracy: Option<f64>,
    pub mean_w_bar: Option<f64>,
    pub mcd: f64,
    pub f0_rmse: f64,
    pub vuv: f64,
    pub ffe: f64,
}

pub fn summarize(spec: &SweepSpec, rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &fraction in &spec.fractions {
        for &mode in &spec.modes {
            let cell: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.fraction == fraction && r.mode == mode)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let med = |f: &dyn Fn(&SweepRow) -> Option<f64>| {
                let mut v: Vec<f64> = cell.iter().filter_map(|r| f(r)).collect();
                median(&mut v)
            };
            out.push(SummaryRow {
                fraction,
                mode,
                cells: cell.len(),
                accuracy: med(&|r| r.accuracy),
                mean_w_bar: med(&|r| r.mean_w_bar),
                mcd: med(&|r| Some(r.mcd)).unwrap_or(f64::NAN),
                f0_rmse: med(&|r| Some(r.f0_rmse)).unwrap_or(f64::NAN),
                vuv: med(&|r| Some(r.vuv)).unwrap_or(f64::NAN),
                ffe: med(&|r| Some(r.ffe)).unwrap_or(f64::NAN),
            });
        }
    }
    out
}

pub fn summary_tsv(rows: &[SummaryRow]) -> String {
    let mut out =
        String::from("fraction\tmode\tcells\taccuracy\tmean_w_bar\tmcd\tf0_rmse\tvuv\tffe\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.fraction,
            r.mode,
            r.cells,
            opt(r.accuracy),
            opt(r.mean_w_bar),
            r.mcd,
            r.f0_rmse,
            r.vuv,
            r.ffe
        );
    }
    out
}

/// Runs the sweep and writes the long-format table, the median summary
/// and, when needed, the failure list. Any failed cell turns into an error
/// after the files are written.
pub fn cmd_sweep(
    corpus_dir: &Path,
    spec: &SweepSpec,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    jobs: usize,
    out_dir: &Path,
) -> Result<(SweepResult, Vec<SummaryRow>)> {
    let corpus = load_corpus(corpus_dir)?;
    let result = run_sweep(&corpus, spec, model_config, train_config, jobs)?;
    let summary = summarize(spec, &result.rows);
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(SWEEP_FILE), sweep_tsv(&result.rows))?;
    fs::write(out_dir.join(SUMMARY_FILE), summary_tsv(&summary))?;
    let failures_path = out_dir.join(FAILURES_FILE);
    if result.failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path)?;
        }
        Ok((result, summary))
    } else {
        let mut text = String::from("fraction\tseed\tmode\terror\n");
        for f in &result.failures {
            let _ = writeln!(text, "{}\t{}\t{}\t{}", f.fraction, f.seed, f.mode, f.error);
        }
        fs::write(failures_path, text)?;
        Err(Error::CellsFailed {
            failed: result.failures.len(),
            total: result.rows.len() + result.failures.len(),
        })
    }
}

/// Label patterns valid for `mode`: EI cannot see unlabeled utterances.
pub fn label_patterns(mode: Mode) -> &'static [LabelPattern] {
    match mode {
        Mode::Ei => &[LabelPattern::All],
        _ => &[
            LabelPattern::All,
            LabelPattern::None,
            LabelPattern::Alternating,
        ],
    }
}

pub fn pattern_name(p: LabelPattern) -> &'static str {
    match p {
        LabelPattern::All => "all",
        LabelPattern::None => "none",
        LabelPattern::Alternating => "alternating",
    }
}

/// Finite-difference check of every mode on labeled, unlabeled and mixed
/// batches. `seed` replaces both batch seeds when given.
pub fn cmd_gradcheck(
    model_config: &ModelConfig,
    seed: Option<u64>,
    h: f64,
    tol: f64,
    out_dir: Option<&Path>,
) -> Result<Vec<(Mode, LabelPattern, GradCheckReport)>> {
    let mut reports = Vec::new();
    for mode in Mode::ALL {
        for &labels in label_patterns(mode) {
            let mut spec = BatchSpec {
                labels,
                ..BatchSpec::default()
            };
            if let Some(s) = seed {
                spec.init_seed = s;
                spec.sample_seed = s;
            }
            let report = grad_check(&model_config.clone().with_mode(mode), &spec, h, tol)?;
            reports.push((mode, labels, report));
        }
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut text = String::from("mode\tlabels\tarray\tcoords\tmax_rel_err\n");
        for (mode, labels, r) in &reports {
            for (name, n, worst) in &r.arrays {
                let _ = writeln!(
                    text,
                    "{mode}\t{}\t{name}\t{n}\t{worst:e}",
                    pattern_name(*labels)
                );
            }
        }
        fs::write(dir.join("gradcheck.tsv"), text)?;
    }
    if let Some((mode, labels, r)) = reports.iter().find(|(_, _, r)| !r.passed()) {
        return Err(Error::GradientMismatch(format!(
            "{mode}/{} max rel err {:e} in {:?}",
            pattern_name(*labels),
            r.max_rel_err,
            r.failing_arrays()
        )));
    }
    Ok(reports)
}

#[derive(Debug, Parser)]
#[command(
    name = "emotok",
    version,
    about = "Semi-supervised emotion tokens on a synthetic corpus"
)]
pub struct Cli {
    /// Overrides the seed of the command's config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for `sweep` (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Model config file.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    /// Training config file.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<(ModelConfig, TrainConfig)> {
        let model = match &self.model_config {
            Some(p) => ModelConfig::read(p)?,
            None => ModelConfig::default(),
        };
        let train = match &self.train_config {
            Some(p) => TrainConfig::read(p)?,
            None => TrainConfig::default(),
        };
        Ok((model, train))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus directory.
    Gen {
        /// Corpus config file; defaults are used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one model on a corpus with a fraction of its labels.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        configs: ConfigArgs,
        /// Fraction of train utterances per emotion that keep their label.
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        /// Overrides the mode of the model config.
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Objective metrics of a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Emotion recognition from token weights on the test split.
    Recognize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train and score every (fraction, seed, mode) cell.
    Sweep {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        configs: ConfigArgs,
        /// Sweep config file with `fractions`, `seeds`, `modes`.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<Mode>>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

fn out_or(cli_out: &Option<PathBuf>, default: &str) -> PathBuf {
    cli_out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// Executes a parsed command line, printing reports to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen { config } => {
            let mut spec = match config {
                Some(p) => CorpusSpec::read(p)?,
                None => CorpusSpec::default(),
            };
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let out = out_or(&cli.out, "corpus");
            let corpus = cmd_gen(&spec, &out)?;
            println!(
                "wrote {} utterances to {}",
                corpus.utterances.len(),
                out.display()
            );
        }
        Command::Train {
            corpus,
            configs,
            fraction,
            mode,
        } => {
            let (mut model, mut train_cfg) = configs.load()?;
            if let Some(m) = mode {
                model.mode = *m;
            }
            if let Some(s) = cli.seed {
                train_cfg.seed = s;
                train_cfg.init_seed = s;
            }
            let out = out_or(&cli.out, "run");
            let (_, history) = cmd_train(corpus, &model, &train_cfg, *fraction, &out)?;
            let last = history.final_loss();
            println!(
                "{} epochs, final recon {:.5} ce {:.5} total {:.5}; wrote {}",
                history.epochs.len(),
                last.recon,
                last.ce,
                last.total,
                out.display()
            );
        }
        Command::Eval { checkpoint, corpus } => {
            let report = cmd_eval(checkpoint, corpus, &out_or(&cli.out, "eval"))?;
            print!("{}", report.to_table());
        }
        Command::Recognize { checkpoint, corpus } => {
            let report = cmd_recognize(checkpoint, corpus, &out_or(&cli.out, "recognize"))?;
            print!("{}", report.to_table());
        }
        Command::Sweep {
            corpus,
            configs,
            spec,
            fractions,
            seeds,
            modes,
        } => {
            let (model, train_cfg) = configs.load()?;
            let mut sweep = match spec {
                Some(p) => SweepSpec::read(p)?,
                None => SweepSpec::default(),
            };
            if let Some(s) = cli.seed {
                sweep.seeds = (0..3).map(|i| s + i).collect();
            }
            if let Some(v) = fractions {
                sweep.fractions = v.clone();
            }
            if let Some(v) = seeds {
                sweep.seeds = v.clone();
            }
            if let Some(v) = modes {
                sweep.modes = v.clone();
            }
            let out = out_or(&cli.out, "sweep");
            let (_, summary) = cmd_sweep(corpus, &sweep, &model, &train_cfg, cli.jobs, &out)?;
            print!("{}", summary_tsv(&summary));
        }
        Command::Gradcheck {
            model_config,
            h,
            tol,
        } => {
            let model = match model_config {
                Some(p) => ModelConfig::read(p)?,
                None => ModelConfig::default(),
            };
            let out = cli.out.as_deref();
            let reports = cmd_gradcheck(&model, cli.seed, *h, *tol, out)?;
            for (mode, labels, r) in &reports {
                println!(
                    "{mode:<8} {:<12} coords {:>5} max rel err {:.3e}",
                    pattern_name(*labels),
                    r.checked,
                    r.max_rel_err
                );
            }
        }
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> u8 {
    if err.is_usage() {
        2
    } else {
        1
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
