//! Per-atom evaluation.
//!
//! All level-wide sweeps go through [`tabulate`]. With the `parallel` feature
//! (default) large sweeps run on the rayon pool; every output slot is computed
//! independently, so results do not depend on scheduling. [`sequential`] forces
//! the single-threaded path for the current thread, which is what the benches
//! use to compare the two.

use std::cell::Cell;

/// Sweeps shorter than this stay on the calling thread.
pub const PAR_MIN_LEN: usize = 1 << 10;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with parallel sweeps disabled on this thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    struct Reset(bool);
    impl Drop for Reset {
        fn drop(&mut self) {
            FORCE_SEQUENTIAL.with(|c| c.set(self.0));
        }
    }
    let _reset = Reset(FORCE_SEQUENTIAL.with(|c| c.replace(true)));
    f()
}

/// True when a sweep of `len` items would run in parallel.
pub fn parallel_enabled(len: usize) -> bool {
    cfg!(feature = "parallel") && len >= PAR_MIN_LEN && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// `(0..len).map(f).collect()`, in parallel when enabled.
pub fn tabulate<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled(len) {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    (0..len).map(f).collect()
}
