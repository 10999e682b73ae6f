use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{StreamRng, Streams};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { mean: value, se: 0.0, n: 0 }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = pairwise_sum(xs) / n as f64;
        if n == 1 {
            return Estimate { mean, se: 0.0, n };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Estimate { mean, se: (var / n as f64).sqrt(), n }
    }

    /// Binomial proportion with the plug-in standard error.
    pub fn proportion(successes: usize, n: usize) -> Self {
        let p = successes as f64 / n as f64;
        Estimate { mean: p, se: (p * (1.0 - p) / n as f64).sqrt(), n }
    }

    pub fn z_against(&self, other: &Estimate) -> f64 {
        z_score(self.mean, self.se, other.mean, other.se)
    }
}

/// `(a - b) / sqrt(se_a^2 + se_b^2)`, with 0 when the two agree exactly and
/// both errors vanish.
pub fn z_score(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let diff = a - b;
    let se = (se_a * se_a + se_b * se_b).sqrt();
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Runs `f(i, rng_i)` for `i in 0..m` in parallel and returns results in index
/// order. Each replicate uses its own stream, so the output is independent of
/// the number of worker threads.
pub fn replicate_map<T, F>(streams: &Streams, m: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut StreamRng) -> T + Sync,
{
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.rng(i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// Like [`replicate_map`] with per-worker scratch state (e.g. a rate cache).
/// The scratch must not influence results.
pub fn replicate_map_init<T, S, I, F>(streams: &Streams, m: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut StreamRng) -> T + Sync + Send,
{
    (0..m)
        .into_par_iter()
        .map_init(init, |state, i| {
            let mut rng = streams.rng(i as u64);
            f(state, i, &mut rng)
        })
        .collect()
}
