//! Scoped-thread work splitting for batch kernels.

/// Process `work` items (one per fixed-size batch chunk) on up to `threads`
/// workers. Items are assigned round-robin by index, so the mapping of chunk
/// to output is identical regardless of worker count; only wall time changes.
pub(crate) fn run_chunks<T, F>(work: Vec<T>, threads: usize, f: F)
where
    T: Send,
    F: Fn(usize, T) + Sync,
{
    let threads = threads.max(1).min(work.len().max(1));
    if threads <= 1 {
        for (i, item) in work.into_iter().enumerate() {
            f(i, item);
        }
        return;
    }
    let mut buckets: Vec<Vec<(usize, T)>> = (0..threads).map(|_| Vec::new()).collect();
    for (i, item) in work.into_iter().enumerate() {
        buckets[i % threads].push((i, item));
    }
    let f = &f;
    std::thread::scope(|s| {
        for bucket in buckets {
            s.spawn(move || {
                for (i, item) in bucket {
                    f(i, item);
                }
            });
        }
    });
}
