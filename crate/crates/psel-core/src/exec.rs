//! Internal fan-out helpers for data-parallel Monte-Carlo work.
//!
//! Work is always split into an explicit list of jobs (batches, blocks) whose
//! results are combined in job order, so the numbers are bit-identical
//! however many threads run them — including the fully sequential build
//! without the `parallel` feature.

/// Map `f` over `0..jobs` on the ambient rayon pool (global, or whatever
/// scoped pool the caller is already inside). Sequential when the `parallel`
/// feature is off or there is only one job.
pub(crate) fn map_collect_ambient<T, F>(jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if jobs > 1 {
            use rayon::prelude::*;
            return (0..jobs).into_par_iter().map(f).collect();
        }
    }
    (0..jobs).map(f).collect()
}

/// Map `f` over `0..jobs` with an explicit worker budget: `workers ≤ 1` runs
/// sequentially on the calling thread, otherwise a scoped pool of that many
/// threads is used (when the `parallel` feature is on).
pub(crate) fn map_collect<T, F>(workers: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers > 1 && jobs > 1 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                use rayon::prelude::*;
                return pool.install(|| (0..jobs).into_par_iter().map(f).collect());
            }
        }
    }
    let _ = workers;
    (0..jobs).map(f).collect()
}

/// Split `total` items into `parts` contiguous ranges whose lengths differ by
/// at most one (earlier ranges get the remainder).
pub(crate) fn split_ranges(total: u64, parts: usize) -> Vec<std::ops::Range<u64>> {
    let parts = parts.clamp(1, total.max(1) as usize);
    let base = total / parts as u64;
    let extra = (total % parts as u64) as usize;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = base + u64::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_everything_once() {
        for (total, parts) in [(100u64, 32usize), (7, 32), (32, 32), (33, 4), (0, 8)] {
            let ranges = split_ranges(total, parts);
            let mut expect = 0;
            for r in &ranges {
                assert_eq!(r.start, expect);
                expect = r.end;
            }
            assert_eq!(expect, total);
            let lens: Vec<u64> = ranges.iter().map(|r| r.end - r.start).collect();
            let min = lens.iter().min().copied().unwrap_or(0);
            let max = lens.iter().max().copied().unwrap_or(0);
            assert!(max - min <= 1, "uneven split for {total}/{parts}: {lens:?}");
        }
    }

    #[test]
    fn map_collect_orders_results_by_job() {
        let out = map_collect(4, 16, |i| i * i);
        assert_eq!(out, (0..16).map(|i| i * i).collect::<Vec<_>>());
        let seq = map_collect(1, 16, |i| i * i);
        assert_eq!(out, seq);
        let ambient = map_collect_ambient(16, |i| i * i);
        assert_eq!(out, ambient);
    }
}
