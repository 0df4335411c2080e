//! Seeding and parallel execution of independent replicas.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;

/// Replicas handled sequentially by one task; fixes the merge order.
const CHUNK: usize = 16;

/// The generator of replica `replica`: stream `replica` of the ChaCha8 key derived from `master_seed`.
pub fn replica_rng(master_seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replica);
    rng
}

/// Runs `count` replicas in parallel and folds them into an accumulator.
///
/// Replicas are folded in fixed-size chunks that are merged in index order,
/// so the result does not depend on the number of threads.
pub fn run_replicas<A, I, F, M>(count: usize, master_seed: u64, init: I, step: F, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, u64, &mut ChaCha8Rng) -> Result<()> + Sync,
    M: Fn(&mut A, A),
{
    let chunks = count.div_ceil(CHUNK);
    let partials: Vec<Result<A>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for r in c * CHUNK..((c + 1) * CHUNK).min(count) {
                let mut rng = replica_rng(master_seed, r as u64);
                step(&mut acc, r as u64, &mut rng)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = init();
    for p in partials {
        merge(&mut total, p?);
    }
    Ok(total)
}
