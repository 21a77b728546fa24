//! Global thread-pool configuration.
//!
//! `UXNET_THREADS=n` caps the rayon pool. Kernels are written so any thread
//! count produces bitwise-identical results; the cap only trades latency for
//! CPU share.

use std::sync::OnceLock;

static CONFIGURED: OnceLock<usize> = OnceLock::new();

/// Builds the global rayon pool once, honoring `UXNET_THREADS` when set and
/// parseable. Returns the thread count in effect. Safe to call repeatedly;
/// later calls are no-ops.
pub fn configure_from_env() -> usize {
    *CONFIGURED.get_or_init(|| {
        let requested = std::env::var("UXNET_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0);
        if let Some(n) = requested {
            // Ignore the error: some other component may have built the pool
            // first, in which case its size wins.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        rayon::current_num_threads()
    })
}
