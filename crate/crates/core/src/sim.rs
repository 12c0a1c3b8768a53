//! Deterministic chunked Monte Carlo.
//!
//! Trials are split into fixed-size chunks; chunk `c` draws from the ChaCha8
//! stream `c` of the seed, so results do not depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::mass::Mass;
use crate::source::JointSource;

pub const CHUNK_TRIALS: u64 = 1 << 16;

/// Run `trials` trials in chunks; `f(rng, count)` handles one chunk and the
/// per-chunk results are returned in chunk order.
pub fn run_chunks<T, F>(trials: u64, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let count = CHUNK_TRIALS.min(trials - c * CHUNK_TRIALS);
            f(&mut rng, count)
        })
        .collect()
}

/// Inverse-CDF sampler over the joint support.
#[derive(Debug, Clone)]
pub struct JointSampler {
    cdf: Vec<f64>,
    pairs: Vec<(usize, usize)>,
}

impl JointSampler {
    pub fn new<P: Mass>(src: &JointSource<P>) -> Self {
        let mut cdf = Vec::new();
        let mut pairs = Vec::new();
        let mut acc = 0.0;
        for y in 0..src.y_len() {
            for x in 0..src.x_len() {
                let m = src.joint(x, y).to_f64();
                if m > 0.0 {
                    acc += m;
                    cdf.push(acc);
                    pairs.push((x, y));
                }
            }
        }
        for c in &mut cdf {
            *c /= acc;
        }
        JointSampler { cdf, pairs }
    }

    /// Index into [`Self::pairs`] of one draw.
    pub fn draw_index<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        self.pairs[self.draw_index(rng)]
    }

    pub fn draw_block<R: Rng>(&self, rng: &mut R, xs: &mut [usize], ys: &mut [usize]) {
        for (x, y) in xs.iter_mut().zip(ys.iter_mut()) {
            (*x, *y) = self.draw(rng);
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// Mean and standard error from exact integer moments.
pub fn mean_and_stderr(sum: f64, sum_sq: f64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (f64::NAN, f64::NAN);
    }
    let t = trials as f64;
    let mean = sum / t;
    let var = if trials > 1 {
        ((sum_sq - sum * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / t).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn chunk_results_are_seed_determined() {
        let f = |rng: &mut ChaCha8Rng, count: u64| (0..count).map(|_| rng.gen::<u32>() as u64).sum::<u64>();
        let a = run_chunks(200_000, 7, f);
        let b = run_chunks(200_000, 7, f);
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_ne!(a, run_chunks(200_000, 8, f));
    }

    #[test]
    fn sampler_matches_marginals() {
        let src = fixtures::binary_pair();
        let s = JointSampler::new(&src);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits = [0u64; 2];
        for _ in 0..200_000 {
            hits[s.draw(&mut rng).1] += 1;
        }
        let f = hits[0] as f64 / 200_000.0;
        assert!((f - 1.0 / 3.0).abs() < 0.005, "{f}");
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_and_stderr(10.0, 10.0, 10), (1.0, 0.0));
    }
}
