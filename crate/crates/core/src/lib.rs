//! Differentiable volume rendering of single-space and multi-space radiance
//! fields, with an analytic mirror-scene generator for ground truth.

pub mod autodiff;
pub mod cli;
pub mod encoding;
pub mod fields;
pub mod gradcheck;
pub mod math;
pub mod rendering;
pub mod image;
pub mod io;
pub mod metrics;
pub mod scene;
pub mod training;

/// Keeps freed buffers in the heap instead of handing them back to the
/// kernel. A training step allocates and drops many tensors of a few
/// megabytes each; with glibc's defaults every one of them is a fresh
/// `mmap`, and the page faults cost a sizeable share of the step. Creating
/// a trainer calls this; repeated calls are no-ops. Does nothing on other
/// platforms.
pub fn retain_heap_memory() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    {
        static ONCE: std::sync::Once = std::sync::Once::new();
        // SAFETY: mallopt only adjusts allocator tuning parameters.
        ONCE.call_once(|| unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
            libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
            libc::mallopt(libc::M_TOP_PAD, 64 << 20);
        });
    }
}
