//! Frame-level distortion metrics over an alignment path.
//!
//! `A` is the natural sequence and `B` the prediction. All metrics are
//! accumulated per aligned pair in [`PairStats`], so utterance, emotion and
//! corpus figures are frame-weighted by construction.

use std::f64::consts::LN_10;

use super::AlignmentPath;
use crate::corpus::AcousticFrame;

/// `(10 / ln 10) * sqrt(2)`: dB scale of the mel-cepstral distortion.
pub const MCD_SCALE: f64 = 10.0 / LN_10 * std::f64::consts::SQRT_2;

/// Default relative F0 deviation that counts as a gross pitch error.
pub const FFE_DEVIATION: f64 = 0.20;

/// Mel-cepstral distortion of one frame pair, in dB.
pub fn frame_mcd(a: &AcousticFrame, b: &AcousticFrame) -> f64 {
    let sq: f64 =
        a.mc.iter()
            .zip(&b.mc)
            .map(|(&x, &y)| {
                let d = x as f64 - y as f64;
                d * d
            })
            .sum();
    MCD_SCALE * sq.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairStats {
    pub pairs: usize,
    pub mcd_sum: f64,
    pub vuv_errors: usize,
    pub ffe_errors: usize,
    pub voiced_pairs: usize,
    pub f0_sq_sum: f64,
}

impl PairStats {
    pub fn from_path(
        a: &[AcousticFrame],
        b: &[AcousticFrame],
        path: &AlignmentPath,
        deviation: f64,
    ) -> Self {
        let mut s = PairStats::default();
        for &(i, j) in path.pairs() {
            s.add_pair(&a[i], &b[j], deviation);
        }
        s
    }

    pub fn add_pair(&mut self, a: &AcousticFrame, b: &AcousticFrame, deviation: f64) {
        self.add(
            frame_mcd(a, b),
            (a.voiced, a.f0_hz()),
            (b.voiced, b.f0_hz()),
            deviation,
        );
    }

    /// Adds one aligned pair given its MCD and `(voiced, f0_hz)` on each side.
    pub fn add(&mut self, mcd_db: f64, a: (bool, f64), b: (bool, f64), deviation: f64) {
        self.pairs += 1;
        self.mcd_sum += mcd_db;
        let ((va, fa), (vb, fb)) = (a, b);
        if va != vb {
            self.vuv_errors += 1;
            self.ffe_errors += 1;
        } else if va {
            self.voiced_pairs += 1;
            self.f0_sq_sum += (fb - fa) * (fb - fa);
            if (fb - fa).abs() > deviation * fa {
                self.ffe_errors += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &PairStats) {
        self.pairs += other.pairs;
        self.mcd_sum += other.mcd_sum;
        self.vuv_errors += other.vuv_errors;
        self.ffe_errors += other.ffe_errors;
        self.voiced_pairs += other.voiced_pairs;
        self.f0_sq_sum += other.f0_sq_sum;
    }

    pub fn mcd_db(&self) -> f64 {
        ratio(self.mcd_sum, self.pairs)
    }

    /// Zero when no pair is voiced on both sides (see `voiced_pairs`).
    pub fn f0_rmse_hz(&self) -> f64 {
        ratio(self.f0_sq_sum, self.voiced_pairs).sqrt()
    }

    pub fn vuv_pct(&self) -> f64 {
        100.0 * ratio(self.vuv_errors as f64, self.pairs)
    }

    pub fn ffe_pct(&self) -> f64 {
        100.0 * ratio(self.ffe_errors as f64, self.pairs)
    }
}

fn ratio(num: f64, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

/// Mean per-pair MCD in dB along `path`.
pub fn mcd(a: &[AcousticFrame], b: &[AcousticFrame], path: &AlignmentPath) -> f64 {
    PairStats::from_path(a, b, path, FFE_DEVIATION).mcd_db()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Metrics {
    pub f0_rmse_hz: f64,
    pub vuv_pct: f64,
    pub ffe_pct: f64,
    /// Pairs voiced on both sides; `f0_rmse_hz` is 0 when this is 0.
    pub voiced_pairs: usize,
}

pub fn f0_metrics(
    a: &[AcousticFrame],
    b: &[AcousticFrame],
    path: &AlignmentPath,
    deviation: f64,
) -> F0Metrics {
    let s = PairStats::from_path(a, b, path, deviation);
    F0Metrics {
        f0_rmse_hz: s.f0_rmse_hz(),
        vuv_pct: s.vuv_pct(),
        ffe_pct: s.ffe_pct(),
        voiced_pairs: s.voiced_pairs,
    }
}
