//! Data-parallel helpers with a sequential fallback.
//!
//! Results are always collected in index order, so output never depends on
//! the worker count. Without the `parallel` feature every call runs on the
//! calling thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Execution policy for the embarrassingly parallel loops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            Exec::Parallel => par_map(n, f),
        }
    }

    /// Lowest index for which `pred` holds.
    pub fn position_first<F>(self, n: usize, pred: F) -> Option<usize>
    where
        F: Fn(usize) -> bool + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).position(pred),
            Exec::Parallel => par_position_first(n, pred),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_position_first<F>(n: usize, pred: F) -> Option<usize>
where
    F: Fn(usize) -> bool + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().position_first(pred)
}

#[cfg(not(feature = "parallel"))]
fn par_position_first<F>(n: usize, pred: F) -> Option<usize>
where
    F: Fn(usize) -> bool + Sync + Send,
{
    (0..n).position(pred)
}

/// Runs `f` on a pool with `jobs` workers (or inline when parallelism is
/// compiled out).
#[cfg(feature = "parallel")]
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<R: Send>(_jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

/// Independent generator for sample `index` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream.rotate_left(32));
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn map_is_ordered() {
        let a = Exec::Parallel.map(100, |i| i * i);
        let b = Exec::Sequential.map(100, |i| i * i);
        assert_eq!(a, b);
    }

    #[test]
    fn position_first_is_lowest() {
        assert_eq!(Exec::Parallel.position_first(1000, |i| i % 7 == 3 && i > 10), Some(17));
        assert_eq!(Exec::Sequential.position_first(10, |_| false), None);
    }

    #[test]
    fn streams_are_reproducible() {
        let x: u64 = stream_rng(5, 1, 9).random();
        let y: u64 = stream_rng(5, 1, 9).random();
        let z: u64 = stream_rng(5, 1, 10).random();
        assert_eq!(x, y);
        assert_ne!(x, z);
    }
}
