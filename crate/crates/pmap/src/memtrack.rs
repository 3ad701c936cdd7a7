//! Allocation tracking for memory-scaling measurements.
//!
//! [`TrackingAllocator`] wraps the system allocator and keeps two atomic
//! counters: bytes currently live and the high-water mark since the last
//! [`reset_peak`].  Binaries that want the numbers opt in explicitly:
//!
//! ```ignore
//! #[global_allocator]
//! static ALLOC: pmap::memtrack::TrackingAllocator = pmap::memtrack::TrackingAllocator;
//! ```
//!
//! Without that registration the counters simply stay at zero, so library
//! users pay nothing.  The benchmark harness resets the peak before each run
//! and reads it afterwards to verify that peak memory grows linearly — not
//! quadratically — in the number of samples.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

/// Pass-through allocator that counts live and peak bytes.
pub struct TrackingAllocator;

fn record_alloc(size: usize) {
    let now = CURRENT.fetch_add(size, Ordering::Relaxed) + size;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

fn record_dealloc(size: usize) {
    CURRENT.fetch_sub(size, Ordering::Relaxed);
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let ptr = System.alloc(layout);
        if !ptr.is_null() {
            record_alloc(layout.size());
        }
        ptr
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let ptr = System.alloc_zeroed(layout);
        if !ptr.is_null() {
            record_alloc(layout.size());
        }
        ptr
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        record_dealloc(layout.size());
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let new_ptr = System.realloc(ptr, layout, new_size);
        if !new_ptr.is_null() {
            record_dealloc(layout.size());
            record_alloc(new_size);
        }
        new_ptr
    }
}

/// Bytes currently allocated (zero unless the tracking allocator is the
/// registered global allocator).
pub fn current_bytes() -> usize {
    CURRENT.load(Ordering::Relaxed)
}

/// High-water mark of allocated bytes since the last [`reset_peak`].
pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// Restart peak measurement from the current live total.
pub fn reset_peak() {
    PEAK.store(CURRENT.load(Ordering::Relaxed), Ordering::Relaxed);
}

#[cfg(test)]
mod tests {
    use super::*;

    // The crate's unit-test binary registers TrackingAllocator (see lib.rs),
    // so allocations made here are visible in the counters.
    #[test]
    fn peak_rises_with_a_large_allocation_and_current_falls_after_drop() {
        reset_peak();
        let before = current_bytes();
        let size = 1 << 20;
        let buf = vec![0u8; size];
        assert!(
            current_bytes() >= before + size,
            "live bytes must include the 1 MiB buffer"
        );
        assert!(
            peak_bytes() >= before + size,
            "peak must capture the 1 MiB buffer"
        );
        drop(buf);
        assert!(
            current_bytes() < before + size,
            "live bytes must fall back after the drop"
        );
        // The peak keeps the high-water mark until explicitly reset.
        assert!(peak_bytes() >= before + size);
        reset_peak();
        assert!(peak_bytes() <= before + size);
    }
}
