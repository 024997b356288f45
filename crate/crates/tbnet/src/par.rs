//! Data-parallel dispatch.
//!
//! Hot loops fan out over rayon when the `parallel` feature is on and fall
//! back to plain loops otherwise. Every call site partitions its output into
//! disjoint chunks computed independently, with each chunk's arithmetic in
//! the same order as the sequential path, so results are bit-identical
//! between the two builds.

/// Applies `f(chunk_index, chunk)` over disjoint `chunk_len`-sized pieces
/// of `data`. The final chunk may be shorter.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_chunk_mut<E, F>(data: &mut [E], chunk_len: usize, f: F)
where
    E: Send,
    F: Fn(usize, &mut [E]) + Sync,
{
    use rayon::prelude::*;
    data.par_chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, chunk)| f(i, chunk));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_chunk_mut<E, F>(data: &mut [E], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [E]),
{
    for (i, chunk) in data.chunks_mut(chunk_len).enumerate() {
        f(i, chunk);
    }
}

/// Maps `f` over `0..n`, preserving index order in the output.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
