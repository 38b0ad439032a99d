//! Fixtures shared by the benchmarks.

use ustat_core::{catalog_kernel, center, Kernel, ProcessSpec, Role, StreamKey};

pub const SEED: u64 = 7;

pub fn normal_sample(n: usize) -> Vec<f64> {
    ProcessSpec::iid_normal(0.0, 1.0)
        .and_then(|s| s.sample_path(n, StreamKey::new(SEED, Role::Path)))
        .expect("valid fixture")
}

/// A catalog kernel centred under N(0, 1).
pub fn centred_kernel(name: &str) -> Kernel {
    let spec = ProcessSpec::iid_normal(0.0, 1.0).expect("valid fixture");
    let k = catalog_kernel(name, Some(&spec)).expect("catalog kernel");
    center(&k, &spec, 10_000, StreamKey::new(SEED, Role::Oracle)).expect("centring")
}
