//! Data-parallel helpers. With the `parallel` feature [`map_indices`] and
//! [`map_chunks`] use rayon; without it they run sequentially. Both
//! variants are always exported so they can be compared side by side.
//!
//! Every task receives its own index and must derive any randomness from
//! it, which keeps results identical across the two execution modes.

/// Applies `f` to `0..n` in order on the calling thread.
pub fn map_indices_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Applies `f` to `0..n` on the rayon pool; output order matches input order.
#[cfg(feature = "parallel")]
pub fn map_indices_par<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices_par<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indices_seq(n, f)
}

/// Default execution mode for the crate.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indices_par(n, f)
}

/// Splits `total` work items into chunks of `chunk` and maps each chunk
/// `(index, len)` through `f`.
pub fn map_chunks<T, F>(total: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n = total.div_ceil(chunk);
    map_indices(n, |i| f(i, chunk.min(total - i * chunk)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt();
        assert_eq!(map_indices_seq(100, f), map_indices_par(100, f));
    }

    #[test]
    fn chunks_cover_total() {
        let lens = map_chunks(1003, 100, |_, len| len);
        assert_eq!(lens.len(), 11);
        assert_eq!(lens.iter().sum::<usize>(), 1003);
    }
}
