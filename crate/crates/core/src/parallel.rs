//! Deterministic data-parallel execution.
//!
//! Work is split into a fixed number of partitions and results are merged in
//! partition index order, so outputs do not depend on how many worker
//! threads actually ran. `DROPLAB_THREADS` caps the worker count.

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Fixed partition count for batch-parallel gradient and statistics merges.
/// Changing this changes floating-point summation order, so it is a build
/// constant rather than a config key.
pub const GRAD_PARTITIONS: usize = 4;

/// Worker cap from `DROPLAB_THREADS`, clamped to `[1, limit]`.
pub fn worker_count(limit: usize) -> usize {
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = std::env::var("DROPLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(hw);
    cap.min(limit).max(1)
}

/// Split `0..len` into `parts` near-even contiguous ranges (fewer if `len`
/// is small). Ranges are returned in order and cover the whole span.
pub fn partition_ranges(len: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.max(1).min(len.max(1));
    let base = len / parts;
    let rem = len % parts;
    let mut ranges = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let size = base + usize::from(p < rem);
        ranges.push(start..start + size);
        start += size;
    }
    ranges
}

/// Run `work(partition_index, range)` over every partition and return the
/// results in partition order. Worker threads pull partition indices from a
/// shared counter; the merge order is fixed by the returned Vec.
pub fn run_partitioned<T, F>(ranges: &[Range<usize>], work: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, Range<usize>) -> T + Sync,
{
    let workers = worker_count(ranges.len());
    if workers <= 1 || ranges.len() <= 1 {
        return ranges
            .iter()
            .enumerate()
            .map(|(i, r)| work(i, r.clone()))
            .collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = ranges.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= ranges.len() {
                    break;
                }
                let out = work(i, ranges[i].clone());
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("partition not executed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partitions_cover_range_in_order() {
        let ranges = partition_ranges(10, 4);
        assert_eq!(ranges, vec![0..3, 3..6, 6..8, 8..10]);
        let ranges = partition_ranges(2, 4);
        assert_eq!(ranges, vec![0..1, 1..2]);
        assert_eq!(partition_ranges(0, 4), vec![0..0]);
    }

    #[test]
    fn results_arrive_in_partition_order() {
        let ranges = partition_ranges(97, GRAD_PARTITIONS);
        let sums = run_partitioned(&ranges, |_, r| r.sum::<usize>());
        let total: usize = sums.iter().sum();
        assert_eq!(total, (0..97).sum::<usize>());
        // first partition holds the smallest indices
        assert!(sums[0] < sums[GRAD_PARTITIONS - 1]);
    }
}
