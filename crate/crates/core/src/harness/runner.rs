use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::oracle::ScoreOracle;
use crate::sampler::{run_sampler, SamplerConfig, TrajectoryRecord};
use crate::schedule::TimeSchedule;

/// Seed of chain `chain` in a run with `master_seed`; chain `i` of seed `s` is chain 0 of
/// seed `s + i`, so any chain can be replayed on its own.
pub fn chain_seed(master_seed: u64, chain: usize) -> u64 {
    master_seed.wrapping_add(chain as u64)
}

/// Initial point `x_0 ~ N(0, t0² I)` for one chain.
pub fn chain_init(seed: u64, dim: usize, t0: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            t0 * z
        })
        .collect()
}

pub fn chain_inits(master_seed: u64, n_chains: usize, dim: usize, t0: f64) -> Vec<Vec<f64>> {
    (0..n_chains).map(|c| chain_init(chain_seed(master_seed, c), dim, t0)).collect()
}

/// Samples every initial point, in parallel, returning records in input order.
///
/// `threads = None` uses the global rayon pool; `Some(n)` runs on a dedicated pool of `n`
/// workers. The results do not depend on the thread count.
pub fn run_chains<O: ScoreOracle + ?Sized>(
    oracle: &O,
    schedule: &TimeSchedule,
    config: &SamplerConfig,
    inits: &[Vec<f64>],
    threads: Option<usize>,
) -> Result<Vec<TrajectoryRecord>> {
    config.validate()?;
    let work = || inits.par_iter().map(|x| run_sampler(oracle, schedule, config, x)).collect::<Result<Vec<_>>>();
    match threads {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?
            .install(work),
    }
}
