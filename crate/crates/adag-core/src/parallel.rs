//! Deterministic fan-out over domain indices.
//!
//! Results are collected into a vector indexed by input position and reduced
//! by callers in that fixed order, so outputs are bit-identical for every
//! worker count.

/// Applies `f` to `0..count`, using up to `threads` scoped workers over
/// contiguous chunks. Equivalent to a sequential map when `threads <= 1`.
pub fn parallel_map<T, F>(count: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if count == 0 {
        return Vec::new();
    }
    let workers = threads.max(1).min(count);
    if workers == 1 {
        return (0..count).map(f).collect();
    }
    let chunk = count.div_ceil(workers);
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (chunk_idx, slot_chunk) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                let base = chunk_idx * chunk;
                for (offset, slot) in slot_chunk.iter_mut().enumerate() {
                    *slot = Some(f(base + offset));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.unwrap()).collect()
}
