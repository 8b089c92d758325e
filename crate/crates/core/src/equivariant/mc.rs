use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::SlidingBlockCode;
use crate::ctools::CostSpec;
use crate::error::{validation, Result};
use crate::model::SourceSpec;

const SHARDS: usize = 16;

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Self {
            count,
            mean: self.mean + delta * other.count as f64 / count as f64,
            m2: self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / count as f64,
        }
    }
}

/// Estimate of `E c(X_0, S_0(X))` from `samples` independent stationary windows.
///
/// Samples are split over a fixed number of shards, each with its own
/// ChaCha stream, so the result depends only on `seed`.
pub fn coupling_cost_mc(
    source: &SourceSpec,
    code: &SlidingBlockCode,
    cost: &CostSpec,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 100 {
        return Err(validation("Monte Carlo needs at least 100 samples"));
    }
    code.check_alphabet(source.alphabet())?;
    let r = code.radius();
    let span = 2 * r + 1;
    let sampler = source.sampler()?;
    let shards: Vec<Moments> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| -> Result<Moments> {
            let quota = samples / SHARDS + usize::from(shard < samples % SHARDS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard as u64);
            let mut window = Vec::with_capacity(span);
            let mut acc = Moments::default();
            for _ in 0..quota {
                sampler.window(span, &mut rng, &mut window);
                let x0 = source.alphabet().symbol(window[r]);
                acc.push(cost.eval(x0, code.output(&window))?);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = shards.into_iter().fold(Moments::default(), Moments::merge);
    let variance = if total.count > 1 { total.m2 / (total.count - 1) as f64 } else { 0.0 };
    Ok(McEstimate {
        estimate: total.mean,
        standard_error: (variance.max(0.0) / total.count as f64).sqrt(),
        samples: total.count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_merge_matches_direct() {
        let data: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut all = Moments::default();
        data.iter().for_each(|v| all.push(*v));
        let mut a = Moments::default();
        let mut b = Moments::default();
        data[..17].iter().for_each(|v| a.push(*v));
        data[17..].iter().for_each(|v| b.push(*v));
        let m = a.merge(b);
        assert_eq!(m.count, all.count);
        assert!((m.mean - all.mean).abs() < 1e-13);
        assert!((m.m2 - all.m2).abs() < 1e-10);
    }
}
