//! Optional data parallelism over fixed-size chunks.
//!
//! Every chunk is written by exactly one closure call, so the output does not
//! depend on scheduling. Reductions over the results stay sequential.

#[cfg(feature = "parallel")]
const MIN_CHUNKS_PER_TASK: usize = 64;

pub(crate) fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, parallel: bool, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .with_min_len(MIN_CHUNKS_PER_TASK)
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = parallel;
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}
