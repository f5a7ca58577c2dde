//! Thread-local instrumentation: a FLOP counter bumped by every forward op and
//! a live/peak byte counter fed by [`Tensor`](crate::tensor::Tensor) allocations.
//!
//! Counting conventions: a multiply-add is 2 FLOPs, any other binary
//! arithmetic op is 1, and a transcendental (`exp`, `ln`, `sqrt`, sigmoid) is 4.

use std::cell::Cell;

pub const TRANSCENDENTAL: u64 = 4;

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
    static LIVE: Cell<usize> = const { Cell::new(0) };
    static PEAK: Cell<usize> = const { Cell::new(0) };
}

#[inline]
pub fn add_flops(n: u64) {
    FLOPS.with(|c| c.set(c.get() + n));
}

pub fn flops() -> u64 {
    FLOPS.with(Cell::get)
}

/// Runs `f` and returns its result with the number of FLOPs it recorded.
pub fn count_flops_of<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let start = flops();
    let out = f();
    (out, flops() - start)
}

#[inline]
pub(crate) fn acquire(bytes: usize) {
    LIVE.with(|live| {
        let now = live.get() + bytes;
        live.set(now);
        PEAK.with(|p| {
            if now > p.get() {
                p.set(now)
            }
        });
    });
}

#[inline]
pub(crate) fn release(bytes: usize) {
    LIVE.with(|live| live.set(live.get().saturating_sub(bytes)));
}

pub fn live_bytes() -> usize {
    LIVE.with(Cell::get)
}

/// High-water mark of live tensor bytes while `f` runs, measured relative to
/// the bytes already live when it starts.
pub fn track_peak_memory<T>(f: impl FnOnce() -> T) -> (T, usize) {
    let base = live_bytes();
    let saved_peak = PEAK.with(Cell::get);
    PEAK.with(|p| p.set(base));
    let out = f();
    let peak = PEAK.with(Cell::get);
    PEAK.with(|p| p.set(saved_peak.max(peak)));
    (out, peak - base)
}

/// Raw allocation hook for payloads that are not tensors but should still be
/// visible to [`track_peak_memory`].
pub struct Tracked(usize);

impl Tracked {
    pub fn new(bytes: usize) -> Self {
        acquire(bytes);
        Tracked(bytes)
    }
}

impl Drop for Tracked {
    fn drop(&mut self) {
        release(self.0);
    }
}
