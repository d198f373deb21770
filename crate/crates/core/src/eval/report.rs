use std::fmt::Write as _;

use super::PairStats;
use crate::corpus::EmotionId;
use crate::error::{Error, Result};
use crate::model::TokenWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub name: String,
    pub utterances: usize,
    pub pairs: usize,
    pub voiced_pairs: usize,
    pub mcd_db: f64,
    pub f0_rmse_hz: f64,
    pub vuv_pct: f64,
    pub ffe_pct: f64,
}

impl MetricsRow {
    fn new(name: &str, s: &PairStats, utterances: usize) -> Self {
        Self {
            name: name.to_string(),
            utterances,
            pairs: s.pairs,
            voiced_pairs: s.voiced_pairs,
            mcd_db: s.mcd_db(),
            f0_rmse_hz: s.f0_rmse_hz(),
            vuv_pct: s.vuv_pct(),
            ffe_pct: s.ffe_pct(),
        }
    }
}

/// One row per emotion plus a frame-weighted overall row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub overall: MetricsRow,
}

impl MetricsReport {
    pub fn from_stats(names: Vec<String>, stats: &[PairStats], utterances: &[usize]) -> Self {
        let mut total = PairStats::default();
        for s in stats {
            total.merge(s);
        }
        Self {
            rows: names
                .iter()
                .zip(stats)
                .zip(utterances)
                .map(|((n, s), &u)| MetricsRow::new(n, s, u))
                .collect(),
            overall: MetricsRow::new("overall", &total, utterances.iter().sum()),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "emotion\tutterances\tpairs\tvoiced_pairs\tmcd_db\tf0_rmse_hz\tvuv_pct\tffe_pct\n",
        );
        for r in self.rows.iter().chain([&self.overall]) {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.name,
                r.utterances,
                r.pairs,
                r.voiced_pairs,
                r.mcd_db,
                r.f0_rmse_hz,
                r.vuv_pct,
                r.ffe_pct
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>8} {:>12} {:>8} {:>8}\n",
            "Emotion", "MCD(dB)", "F0RMSE(Hz)", "V/UV(%)", "FFE(%)"
        );
        for r in self.rows.iter().chain([&self.overall]) {
            let _ = writeln!(
                out,
                "{:<10} {:>8.2} {:>12.2} {:>8.2} {:>8.2}",
                r.name, r.mcd_db, r.f0_rmse_hz, r.vuv_pct, r.ffe_pct
            );
        }
        out
    }
}

/// Recognition counts (row = true emotion, column = recognised) and the
/// mean weight of each true emotion's own token.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionReport {
    pub names: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    pub w_bar: Vec<f64>,
    pub accuracy: f64,
}

impl ConfusionReport {
    pub fn from_weights(
        names: Vec<String>,
        observed: &[(EmotionId, TokenWeights)],
    ) -> Result<Self> {
        let k = names.len();
        let mut counts = vec![vec![0usize; k]; k];
        let mut w_sum = vec![0.0; k];
        for (truth, w) in observed {
            if w.len() != k || truth.index() >= k {
                return Err(Error::Contract(format!(
                    "{} weights / label {} for {k} emotions",
                    w.len(),
                    truth.index()
                )));
            }
            counts[truth.index()][w.argmax()] += 1;
            w_sum[truth.index()] += w.as_slice()[truth.index()];
        }
        let w_bar = counts
            .iter()
            .zip(&w_sum)
            .map(|(row, s)| {
                let n: usize = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    s / n as f64
                }
            })
            .collect();
        let correct: usize = (0..k).map(|i| counts[i][i]).sum();
        let accuracy = if observed.is_empty() {
            0.0
        } else {
            correct as f64 / observed.len() as f64
        };
        Ok(Self {
            names,
            counts,
            w_bar,
            accuracy,
        })
    }

    pub fn mean_w_bar(&self) -> f64 {
        self.w_bar.iter().sum::<f64>() / self.w_bar.len().max(1) as f64
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("true_label");
        for n in &self.names {
            out.push('\t');
            out.push_str(n);
        }
        out.push_str("\tw_bar\n");
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&self.names[i]);
            for c in row {
                let _ = write!(out, "\t{c}");
            }
            let _ = writeln!(out, "\t{:.4}", self.w_bar[i]);
        }
        out
    }

    /// Aligned table: true labels as rows, recognised labels as columns,
    /// trailing w̄ column.
    pub fn to_table(&self) -> String {
        let width = self
            .names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(4)
            .max(10);
        let mut out = format!("{:<width$}", "true\\recog");
        for n in &self.names {
            let _ = write!(out, " {n:>width$}");
        }
        // `w̄` is two chars but one column wide.
        let _ = writeln!(out, " {:>9}", "w̄");
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{:<width$}", self.names[i]);
            for c in row {
                let _ = write!(out, " {c:>width$}");
            }
            let _ = writeln!(out, " {:>8.4}", self.w_bar[i]);
        }
        let _ = writeln!(out, "accuracy {:.4}", self.accuracy);
        out
    }
}
