//! Fold-level parallelism.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use mermix_core::cv::{fold_config, run_fold, split_by_session, CvReport};
use mermix_core::{Dataset, FusionConfig, TrainConfig};

pub const THREADS_ENV: &str = "MERMIX_THREADS";

/// Worker count: `MERMIX_THREADS` if set to a positive integer, otherwise
/// the machine's available parallelism.
pub fn thread_limit() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to every item on up to `threads` scoped workers and returns
/// the results in input order.
pub fn map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = threads.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                slots.lock().expect("no worker panicked while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

/// Leave-one-session-out CV with folds trained concurrently. Results are
/// identical to the sequential driver for any thread count.
pub fn run_cv(dataset: &Dataset, model: &FusionConfig, cfg: &TrainConfig, threads: usize) -> mermix_core::Result<CvReport> {
    let folds = split_by_session(dataset)?;
    let reports = map(&folds, threads, |f| run_fold(dataset, f, model, &fold_config(cfg, f.id)));
    CvReport::from_folds(reports.into_iter().collect::<mermix_core::Result<Vec<_>>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_keeps_order() {
        let items: Vec<u64> = (0..37).collect();
        for threads in [1, 3, 64] {
            assert_eq!(map(&items, threads, |x| x * x), items.iter().map(|x| x * x).collect::<Vec<_>>());
        }
        assert!(map(&[] as &[u8], 4, |x| *x).is_empty());
    }
}
