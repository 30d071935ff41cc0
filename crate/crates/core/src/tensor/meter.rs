//! Scalar-operation counter used to cross-check the analytic cost model.
//!
//! When metering is enabled on the current thread, every kernel adds the
//! number of scalar floating-point operations it actually executes
//! (multiply-accumulate = 2, compares/divides/exp/ln/sqrt = 1 each; pure data
//! movement such as reshape, permute, slicing, padding and nearest-neighbor
//! upsampling counts 0). Kernels fall back to their sequential path while a
//! meter is active so the count lands on the calling thread.

use std::cell::Cell;

thread_local! {
    static ACTIVE: Cell<bool> = const { Cell::new(false) };
    static COUNT: Cell<u64> = const { Cell::new(0) };
}

#[inline(always)]
pub fn active() -> bool {
    ACTIVE.with(|a| a.get())
}

#[inline(always)]
pub(crate) fn bump(n: u64) {
    if active() {
        COUNT.with(|c| c.set(c.get() + n));
    }
}

/// Runs `f` with metering enabled and returns its result plus the number of
/// scalar FLOPs executed on this thread.
pub fn metered<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let was_active = ACTIVE.with(|a| a.replace(true));
    let before = COUNT.with(|c| c.get());
    let out = f();
    let counted = COUNT.with(|c| c.get()) - before;
    ACTIVE.with(|a| a.set(was_active));
    (out, counted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meter_counts_only_inside_scope() {
        bump(10); // inactive, ignored
        let ((), n) = metered(|| bump(7));
        assert_eq!(n, 7);
        let ((), n) = metered(|| {
            bump(1);
            let ((), inner) = metered(|| bump(2));
            assert_eq!(inner, 2);
        });
        assert_eq!(n, 3);
    }
}
