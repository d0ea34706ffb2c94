//! Closed-form Green functions and dense kernel matrices.
//!
//! Two domains are supported, both with explicit kernels:
//!
//! * right half-plane `Re z > 0`:  `g(z, w) = ln |(z + conj(w)) / (z - w)|`
//! * unit disk `|z| < 1`:          `g(z, w) = ln |(1 - z conj(w)) / (z - w)|`
//!
//! Both are symmetric, positive for distinct interior points, `+inf` on the
//! diagonal, and split as `g = ln(1/|z - w|) + h(z, w)` with `h` continuous
//! up to and including the diagonal.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance below which two nodes are treated as the same point during
/// matrix assembly. Guards against log overflow masquerading as data.
pub const DUPLICATE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GreenDomain {
    RightHalfPlane,
    UnitDisk,
}

impl GreenDomain {
    /// Strict interior membership; boundary points are rejected.
    pub fn contains(&self, z: Complex64) -> bool {
        match self {
            GreenDomain::RightHalfPlane => z.re > 0.0,
            GreenDomain::UnitDisk => z.norm_sqr() < 1.0,
        }
    }

    fn check(&self, z: Complex64) -> Result<()> {
        if self.contains(z) {
            Ok(())
        } else {
            Err(Error::outside_domain(z))
        }
    }
}

/// Green function value; `+inf` exactly on the diagonal.
///
/// The two norms are computed the same way under argument exchange, so the
/// result is bitwise symmetric in `(z, w)`.
pub fn green_eval(domain: GreenDomain, z: Complex64, w: Complex64) -> Result<f64> {
    domain.check(z)?;
    domain.check(w)?;
    let num = match domain {
        GreenDomain::RightHalfPlane => (z + w.conj()).norm(),
        GreenDomain::UnitDisk => (Complex64::new(1.0, 0.0) - z * w.conj()).norm(),
    };
    Ok((num / (z - w).norm()).ln())
}

/// Truncated kernel `min(g, cutoff)`; finite everywhere, including `z = w`.
pub fn green_truncated(domain: GreenDomain, cutoff: f64, z: Complex64, w: Complex64) -> Result<f64> {
    assert!(cutoff > 0.0, "truncation level must be positive");
    Ok(green_eval(domain, z, w)?.min(cutoff))
}

/// The regular part `h` of the split `g = ln(1/|z - w|) + h(z, w)`.
///
/// `h(z, w) = ln|z + conj(w)|` on the half-plane and `ln|1 - z conj(w)|` on
/// the disk; both extend continuously to the diagonal.
pub fn kernel_split_h(domain: GreenDomain, z: Complex64, w: Complex64) -> Result<f64> {
    domain.check(z)?;
    domain.check(w)?;
    let v = match domain {
        GreenDomain::RightHalfPlane => (z + w.conj()).norm(),
        GreenDomain::UnitDisk => (Complex64::new(1.0, 0.0) - z * w.conj()).norm(),
    };
    Ok(v.ln())
}

/// Symmetric dense kernel matrix with zero diagonal.
///
/// The diagonal is stored as 0 rather than `+inf`: no energy formula reads
/// it, and the zero makes the quadratic form `m G m^t` the off-diagonal pair
/// sum directly.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    nodes: Vec<Complex64>,
    entries: Vec<f64>, // row-major, size n*n
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.nodes.len() + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.nodes.len();
        &self.entries[i * n..(i + 1) * n]
    }

    /// Restriction to a subset of node indices, preserving order.
    pub fn submatrix(&self, idx: &[usize]) -> KernelMatrix {
        let n = idx.len();
        let mut entries = vec![0.0; n * n];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                entries[a * n + b] = self.entry(i, j);
            }
        }
        KernelMatrix {
            nodes: idx.iter().map(|&i| self.nodes[i]).collect(),
            entries,
        }
    }
}

/// Assemble the dense matrix `G[i][j] = g(x_i, x_j)`, zero diagonal.
///
/// Nodes must be pairwise distinct points of the open domain; pairs closer
/// than [`DUPLICATE_TOL`] are rejected, naming the colliding indices.
pub fn assemble_kernel_matrix(domain: GreenDomain, nodes: &[Complex64]) -> Result<KernelMatrix> {
    let n = nodes.len();
    for &z in nodes {
        domain.check(z)?;
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            if (nodes[i] - nodes[j]).norm() <= DUPLICATE_TOL {
                return Err(Error::DuplicateNodes { i, j, tol: DUPLICATE_TOL });
            }
            let g = green_eval(domain, nodes[i], nodes[j])?;
            entries[i * n + j] = g;
            entries[j * n + i] = g;
        }
    }
    Ok(KernelMatrix { nodes: nodes.to_vec(), entries })
}
