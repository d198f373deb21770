//! Exact DTW against the multi-resolution approximation on random walks.

use emotion_tokens::eval::{dtw_align, fastdtw_align};
use emotion_tokens::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn walk(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut x = vec![0.0; dim];
    (0..len)
        .map(|_| {
            for v in &mut x {
                *v += rng.random_range(-1.0..1.0);
            }
            x.clone()
        })
        .collect()
}

pub fn run(pairs: usize) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data: Vec<_> = (0..pairs)
        .map(|_| {
            let (la, lb) = (rng.random_range(8..=64), rng.random_range(8..=64));
            (walk(&mut rng, la, 12), walk(&mut rng, lb, 12))
        })
        .collect();
    println!("radius  mean cost ratio  within 5%  identical paths");
    for radius in [0, 1, 2, 4, 64] {
        let (mut ratio, mut close, mut same) = (0.0, 0, 0);
        for (a, b) in &data {
            let (exact, exact_path) = dtw_align(a, b)?;
            let (fast, fast_path) = fastdtw_align(a, b, radius)?;
            let r = fast / exact;
            ratio += r;
            close += usize::from(r <= 1.05);
            same += usize::from(fast_path == exact_path);
        }
        println!(
            "{radius:>6}  {:>15.4}  {:>8}/{pairs}  {:>7}/{pairs}",
            ratio / pairs as f64,
            close,
            same
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run(200)
}
