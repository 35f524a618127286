//! Replicate-level parallelism with deterministic result order.

use rayon::prelude::*;

use crate::{Error, Result};

/// Runs `f(replicate_id)` for every id in `0..count` on a pool of `threads` workers
/// (0 means the rayon default) and returns the results ordered by id.
pub fn map_replicates<T, F>(threads: usize, count: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    if threads == 1 {
        return Ok((0..count).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, StreamRole};

    #[test]
    fn order_and_values_independent_of_thread_count() {
        let job = |id: u64| derive_stream(5, id, StreamRole::Noise).standard_normal();
        let one = map_replicates(1, 100, job).unwrap();
        for t in [2, 4, 8] {
            assert_eq!(map_replicates(t, 100, job).unwrap(), one);
        }
    }

    #[test]
    fn empty_range() {
        assert!(map_replicates(3, 0, |id| id).unwrap().is_empty());
    }
}
