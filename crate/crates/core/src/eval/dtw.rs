//! Exact and multi-resolution (FastDTW) dynamic time warping.
//!
//! Both use Euclidean frame distance and the symmetric step set
//! `{(1,0), (0,1), (1,1)}`. When several predecessors share the minimal
//! cumulative cost the diagonal wins, then the `(i-1, j)` step.

use crate::error::{Error, Result};

/// Monotone, continuous warping path from `(0, 0)` to `(|A|-1, |B|-1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentPath(pub Vec<(usize, usize)>);

impl AlignmentPath {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Boundary, monotonicity and continuity against sequence lengths.
    pub fn is_valid(&self, len_a: usize, len_b: usize) -> bool {
        let p = &self.0;
        if p.first() != Some(&(0, 0)) || p.last() != Some(&(len_a - 1, len_b - 1)) {
            return false;
        }
        p.windows(2).all(|w| {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
        })
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Inclusive column range allowed in each row.
type Window = Vec<(usize, usize)>;

#[derive(Clone, Copy)]
enum Step {
    Start,
    Diagonal,
    Up,
    Left,
}

fn windowed_dtw<S: AsRef<[f64]>>(a: &[S], b: &[S], window: &Window) -> (f64, AlignmentPath) {
    let n = a.len();
    let mut cost: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut steps: Vec<Vec<Step>> = Vec::with_capacity(n);
    let at = |cost: &Vec<Vec<f64>>, i: usize, j: usize| -> f64 {
        let (lo, hi) = window[i];
        if j < lo || j > hi {
            f64::INFINITY
        } else {
            cost[i][j - lo]
        }
    };
    for i in 0..n {
        let (lo, hi) = window[i];
        let mut row = Vec::with_capacity(hi - lo + 1);
        let mut row_steps = Vec::with_capacity(hi - lo + 1);
        for j in lo..=hi {
            let d = euclidean(a[i].as_ref(), b[j].as_ref());
            let (prev, step) = if i == 0 && j == 0 {
                (0.0, Step::Start)
            } else {
                let mut best = (f64::INFINITY, Step::Start);
                if i > 0 && j > 0 {
                    best = (at(&cost, i - 1, j - 1), Step::Diagonal);
                }
                if i > 0 {
                    let up = at(&cost, i - 1, j);
                    if up < best.0 {
                        best = (up, Step::Up);
                    }
                }
                if j > 0 {
                    let left = if j > lo {
                        row[j - 1 - lo]
                    } else {
                        f64::INFINITY
                    };
                    if left < best.0 {
                        best = (left, Step::Left);
                    }
                }
                best
            };
            row.push(d + prev);
            row_steps.push(step);
        }
        cost.push(row);
        steps.push(row_steps);
    }

    let m = b.len();
    let total = at(&cost, n - 1, m - 1);
    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    loop {
        path.push((i, j));
        match steps[i][j - window[i].0] {
            Step::Start => break,
            Step::Diagonal => {
                i -= 1;
                j -= 1;
            }
            Step::Up => i -= 1,
            Step::Left => j -= 1,
        }
    }
    path.reverse();
    (total, AlignmentPath(path))
}

fn check_nonempty(len_a: usize, len_b: usize) -> Result<()> {
    if len_a == 0 || len_b == 0 {
        Err(Error::Empty("alignment sequence"))
    } else {
        Ok(())
    }
}

/// Exact DTW: minimal total Euclidean distance along a warping path.
pub fn dtw_align<S: AsRef<[f64]>>(a: &[S], b: &[S]) -> Result<(f64, AlignmentPath)> {
    check_nonempty(a.len(), b.len())?;
    let window = vec![(0, b.len() - 1); a.len()];
    Ok(windowed_dtw(a, b, &window))
}

/// Halves the resolution by averaging adjacent frames; an odd tail is kept.
fn coarsen<S: AsRef<[f64]>>(x: &[S]) -> Vec<Vec<f64>> {
    x.chunks(2)
        .map(|c| {
            let width = c[0].as_ref().len();
            (0..width)
                .map(|k| c.iter().map(|f| f.as_ref()[k]).sum::<f64>() / c.len() as f64)
                .collect()
        })
        .collect()
}

/// Projects a low-resolution path to the next resolution and widens it by
/// `radius` low-resolution cells on every side.
fn expand_window(path: &AlignmentPath, len_a: usize, len_b: usize, radius: usize) -> Window {
    let mut window = vec![(usize::MAX, 0usize); len_a];
    let r = radius as isize;
    for &(i, j) in path.pairs() {
        let (i, j) = (i as isize, j as isize);
        let lo = (2 * (j - r)).max(0) as usize;
        let hi = ((2 * (j + r) + 1) as usize).min(len_b - 1);
        for ci in (i - r)..=(i + r) {
            for fine in [2 * ci, 2 * ci + 1] {
                if fine < 0 || fine as usize >= len_a {
                    continue;
                }
                let w = &mut window[fine as usize];
                w.0 = w.0.min(lo);
                w.1 = w.1.max(hi);
            }
        }
    }
    window
}

/// FastDTW: recursive coarsening to length `radius + 2`, exact DTW at the
/// base, then path projection and refinement inside a `radius` window at
/// each finer level. Exact whenever `radius >= max(|A|, |B|)`.
pub fn fastdtw_align<S: AsRef<[f64]>>(
    a: &[S],
    b: &[S],
    radius: usize,
) -> Result<(f64, AlignmentPath)> {
    check_nonempty(a.len(), b.len())?;
    let min_size = radius + 2;
    if a.len() <= min_size || b.len() <= min_size {
        return dtw_align(a, b);
    }
    let (_, low) = fastdtw_align(&coarsen(a), &coarsen(b), radius)?;
    let window = expand_window(&low, a.len(), b.len(), radius);
    Ok(windowed_dtw(a, b, &window))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    /// Every monotone path by recursion; returns the minimal cost.
    fn brute_force(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        fn go(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, j: usize) -> f64 {
            let d = euclidean(&a[i], &b[j]);
            if i == 0 && j == 0 {
                return d;
            }
            let mut best = f64::INFINITY;
            if i > 0 && j > 0 {
                best = best.min(go(a, b, i - 1, j - 1));
            }
            if i > 0 {
                best = best.min(go(a, b, i - 1, j));
            }
            if j > 0 {
                best = best.min(go(a, b, i, j - 1));
            }
            d + best
        }
        go(a, b, a.len() - 1, b.len() - 1)
    }

    #[test]
    fn identical_sequences_align_diagonally() {
        let a = seq(&[0.0, 1.0, 3.0, 2.0]);
        let (cost, path) = dtw_align(&a, &a).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(path.0, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn small_golden_case() {
        let (cost, path) = dtw_align(&seq(&[0.0, 0.0, 1.0]), &seq(&[0.0, 1.0])).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(path.0, vec![(0, 0), (1, 0), (2, 1)]);
        assert_eq!(brute_force(&seq(&[0.0, 0.0, 1.0]), &seq(&[0.0, 1.0])), 0.0);
    }

    #[test]
    fn empty_is_error() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(dtw_align(&empty, &seq(&[1.0])).is_err());
        assert!(fastdtw_align(&seq(&[1.0]), &empty, 1).is_err());
    }

    #[test]
    fn single_frame_sequences() {
        let (cost, path) = dtw_align(&seq(&[1.0]), &seq(&[0.0, 2.0, 4.0])).unwrap();
        assert_eq!(cost, 1.0 + 1.0 + 3.0);
        assert_eq!(path.0, vec![(0, 0), (0, 1), (0, 2)]);
    }

    #[test]
    fn coarsen_keeps_odd_tail() {
        let c = coarsen(&seq(&[1.0, 3.0, 5.0]));
        assert_eq!(c, vec![vec![2.0], vec![5.0]]);
    }

    proptest! {
        #[test]
        fn exact_matches_brute_force(
            a in prop::collection::vec(-3.0f64..3.0, 1..7),
            b in prop::collection::vec(-3.0f64..3.0, 1..7),
        ) {
            let (a, b) = (seq(&a), seq(&b));
            let (cost, path) = dtw_align(&a, &b).unwrap();
            prop_assert!((cost - brute_force(&a, &b)).abs() < 1e-9);
            prop_assert!(path.is_valid(a.len(), b.len()));
            let along: f64 = path.pairs().iter().map(|&(i, j)| euclidean(&a[i], &b[j])).sum();
            prop_assert!((along - cost).abs() < 1e-9);
        }

        #[test]
        fn fast_paths_are_valid_and_never_cheaper(
            a in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..40),
            b in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..40),
            radius in 0usize..4,
        ) {
            let (exact, _) = dtw_align(&a, &b).unwrap();
            let (fast, path) = fastdtw_align(&a, &b, radius).unwrap();
            prop_assert!(path.is_valid(a.len(), b.len()));
            prop_assert!(fast >= exact - 1e-9);
            let along: f64 = path.pairs().iter().map(|&(i, j)| euclidean(&a[i], &b[j])).sum();
            prop_assert!((along - fast).abs() < 1e-9);
        }

        #[test]
        fn exact_cost_is_symmetric(
            a in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 1..20),
            b in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 1..20),
        ) {
            let ab = dtw_align(&a, &b).unwrap().0;
            let ba = dtw_align(&b, &a).unwrap().0;
            prop_assert!((ab - ba).abs() < 1e-9);
        }
    }
}
