//! Shared fixtures for the solver benchmarks.

use greeneq_core::{CompactSet, Complex64};

/// Uniform candidate grid on [1, 2].
pub fn unit_grid(n: usize) -> Vec<Complex64> {
    CompactSet::segments(&[(1.0, 2.0)])
        .expect("valid segment")
        .uniform_grid(n)
}
