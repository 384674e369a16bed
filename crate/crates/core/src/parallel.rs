//! Schedule-independent parallel map, capped by `EVTFAIR_THREADS`.

use std::sync::OnceLock;

use rayon::prelude::*;

pub const THREADS_ENV: &str = "EVTFAIR_THREADS";

enum Mode {
    Sequential,
    Global,
    Pool(rayon::ThreadPool),
}

fn mode() -> &'static Mode {
    static MODE: OnceLock<Mode> = OnceLock::new();
    MODE.get_or_init(|| match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(0) => Mode::Sequential,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Mode::Pool)
            .unwrap_or(Mode::Sequential),
        None => Mode::Global,
    })
}

/// `(0..n).map(f)` with results in index order regardless of scheduling.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode() {
        Mode::Sequential => (0..n).map(f).collect(),
        Mode::Global => (0..n).into_par_iter().map(f).collect(),
        Mode::Pool(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn preserves_order() {
        let v = super::map_indexed(100, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }
}
