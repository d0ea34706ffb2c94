//! Discrete measures, potentials, energies, reference-measure partitions and
//! upper-constrained discretization.
//!
//! A [`WeightedConfiguration`] is the measure `(1/N) sum_j m_j delta_{z_j}`
//! with masses in `[0, R]`. The convention `0 * inf = 0` is honored
//! throughout: zero-mass atoms never contribute, even where the kernel or the
//! field is infinite.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ExternalField;
use crate::geometry::{CompactSet, Piece};
use crate::kernel::{green_eval, GreenDomain};
use crate::quad::{gauss_legendre, poly_eval, poly_integral};

const MASS_SLACK: f64 = 1e-12;

/// `N` points with masses in `[0, R]`, inducing `(1/N) sum m_j delta_{z_j}`.
///
/// The number of atoms may differ from the normalization `N` (deleting a
/// zero-mass atom keeps the induced measure and its energy unchanged).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedConfiguration {
    points: Vec<Complex64>,
    masses: Vec<f64>,
    mass_cap: f64,
    normalization: usize,
}

impl WeightedConfiguration {
    pub fn new(
        points: Vec<Complex64>,
        masses: Vec<f64>,
        mass_cap: f64,
        normalization: usize,
    ) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        if !mass_cap.is_finite() || mass_cap <= 0.0 {
            return Err(Error::InvalidInput("mass cap must be positive".into()));
        }
        if normalization == 0 {
            return Err(Error::InvalidInput("normalization must be >= 1".into()));
        }
        let mut clamped = masses;
        for (j, m) in clamped.iter_mut().enumerate() {
            if !(*m >= -MASS_SLACK && *m <= mass_cap + MASS_SLACK) {
                return Err(Error::InvalidInput(format!(
                    "mass {m} at atom {j} outside [0, {mass_cap}]"
                )));
            }
            *m = m.clamp(0.0, mass_cap);
        }
        Ok(WeightedConfiguration { points, masses: clamped, mass_cap, normalization })
    }

    /// The zero measure on no atoms.
    pub fn empty(mass_cap: f64, normalization: usize) -> Self {
        WeightedConfiguration { points: Vec::new(), masses: Vec::new(), mass_cap, normalization }
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass_cap(&self) -> f64 {
        self.mass_cap
    }

    pub fn normalization(&self) -> usize {
        self.normalization
    }

    /// Total mass of the induced measure, `(1/N) sum m_j`.
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum::<f64>() / self.normalization as f64
    }

    pub fn positive_atom_count(&self) -> usize {
        self.masses.iter().filter(|&&m| m > 0.0).count()
    }
}

/// Green potential `(1/N) sum_j m_j g(z, z_j)`; `+inf` at positive atoms.
pub fn green_potential(
    domain: GreenDomain,
    cfg: &WeightedConfiguration,
    z: Complex64,
) -> Result<f64> {
    let mut acc = 0.0;
    for (&p, &m) in cfg.points.iter().zip(&cfg.masses) {
        if m > 0.0 {
            acc += m * green_eval(domain, z, p)?;
        }
    }
    Ok(acc / cfg.normalization as f64)
}

/// Green potential skipping atoms within `excl_tol` of `z`.
///
/// This is the discrete stand-in for evaluating the potential at a support
/// point: the atom's own (infinite) self-term is removed.
pub fn green_potential_excluding(
    domain: GreenDomain,
    cfg: &WeightedConfiguration,
    z: Complex64,
    excl_tol: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for (&p, &m) in cfg.points.iter().zip(&cfg.masses) {
        if m > 0.0 && (p - z).norm() > excl_tol {
            acc += m * green_eval(domain, z, p)?;
        }
    }
    Ok(acc / cfg.normalization as f64)
}

/// Logarithmic potential `(1/N) sum_j m_j ln(1/|z - z_j|)`.
pub fn log_potential(cfg: &WeightedConfiguration, z: Complex64) -> f64 {
    let mut acc = 0.0;
    for (&p, &m) in cfg.points.iter().zip(&cfg.masses) {
        if m > 0.0 {
            acc -= m * (z - p).norm().ln();
        }
    }
    acc / cfg.normalization as f64
}

/// Discrete energy
/// `2 sum_{i<j} m_i m_j g(z_i, z_j) + 2 N sum_j m_j f(z_j)`.
///
/// Returns `+inf` when two positive-mass atoms coincide or a positive-mass
/// atom sits where `f = +inf`.
pub fn discrete_energy(
    domain: GreenDomain,
    field: &ExternalField,
    cfg: &WeightedConfiguration,
) -> Result<f64> {
    let n = cfg.points.len();
    let mut pair = 0.0;
    for i in 0..n {
        if cfg.masses[i] == 0.0 {
            continue;
        }
        for j in (i + 1)..n {
            if cfg.masses[j] == 0.0 {
                continue;
            }
            pair += cfg.masses[i] * cfg.masses[j] * green_eval(domain, cfg.points[i], cfg.points[j])?;
        }
    }
    let mut fsum = 0.0;
    for (&p, &m) in cfg.points.iter().zip(&cfg.masses) {
        if m > 0.0 {
            fsum += m * field.eval(p)?;
        }
    }
    Ok(2.0 * pair + 2.0 * cfg.normalization as f64 * fsum)
}

/// `E / N^2`, the plug-in estimate of the continuous energy functional of the
/// induced measure.
pub fn discrete_jf_estimate(
    domain: GreenDomain,
    field: &ExternalField,
    cfg: &WeightedConfiguration,
) -> Result<f64> {
    let n = cfg.normalization as f64;
    Ok(discrete_energy(domain, field, cfg)? / (n * n))
}

/// One partition cell: a natural-parameter subinterval of a set piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub piece: usize,
    pub t_lo: f64,
    pub t_hi: f64,
}

/// A compact set partitioned into cells with midpoint nodes and the uniform
/// (normalized arclength) reference measure.
///
/// Construction guarantees: cells are pairwise disjoint with union `K`;
/// `lambda(V_j) <= 1/N`; all cell diameters `<= kappa = L/N`; nodes are
/// pairwise separated by at least `L/(2N)` on segment unions.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedSet {
    set: CompactSet,
    cells: Vec<Cell>,
    nodes: Vec<Complex64>,
    lambda_masses: Vec<f64>,
    n: usize,
    kappa: f64,
    min_separation: f64,
}

impl PartitionedSet {
    pub fn set(&self) -> &CompactSet {
        &self.set
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn lambda_masses(&self) -> &[f64] {
        &self.lambda_masses
    }

    /// The `N` used in the construction (cell count may differ).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn min_separation(&self) -> f64 {
        self.min_separation
    }

    /// The separation constant `C` in `|x_i - x_j| >= C/N`.
    pub fn separation_constant(&self) -> f64 {
        self.min_separation * self.n as f64
    }
}

/// Split every piece of `K` into cells of arclength `L/N` (the last cell of
/// a piece may be shorter), nodes at cell midpoints.
///
/// The cell count is `sum_i ceil(N len_i / L)`, which can exceed `N` when
/// piece lengths are not commensurate with `L/N`.
pub fn build_interval_partition(set: &CompactSet, n: usize) -> Result<PartitionedSet> {
    let length = set.total_length();
    let delta = length / n as f64;
    let min_len = set.min_piece_length();
    if delta >= min_len || !delta.is_finite() {
        return Err(Error::NTooSmall { n, delta, min_len });
    }

    let mut cells = Vec::new();
    let mut nodes = Vec::new();
    let mut lambda_masses = Vec::new();
    let mut kappa: f64 = 0.0;

    for (pi, piece) in set.pieces().iter().enumerate() {
        let (lo, hi) = piece.param_range();
        let x = n as f64 * piece.length() / length;
        let rho = (x * (1.0 - 1e-12)).ceil() as usize;
        for k in 0..rho {
            let t_lo = lo + k as f64 * delta;
            let t_hi = if k + 1 == rho { hi } else { lo + (k + 1) as f64 * delta };
            debug_assert!(t_hi > t_lo);
            cells.push(Cell { piece: pi, t_lo, t_hi });
            nodes.push(piece.point_at(0.5 * (t_lo + t_hi)));
            lambda_masses.push((t_hi - t_lo) / length);
            kappa = kappa.max(t_hi - t_lo);
        }
    }

    let mut min_separation = f64::INFINITY;
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            min_separation = min_separation.min((nodes[i] - nodes[j]).norm());
        }
    }

    Ok(PartitionedSet { set: set.clone(), cells, nodes, lambda_masses, n, kappa, min_separation })
}

/// Piecewise-polynomial density with respect to the reference measure
/// `lambda` (normalized arclength), expressed in the natural parameter.
/// Value is 0 outside the listed pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub pieces: Vec<DensityPiece>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl Density {
    pub fn zero() -> Self {
        Density { pieces: Vec::new() }
    }

    /// Constant density `c` on the whole set.
    pub fn constant_on(set: &CompactSet, c: f64) -> Self {
        Density {
            pieces: set
                .pieces()
                .iter()
                .map(|p| {
                    let (lo, hi) = p.param_range();
                    DensityPiece { lo, hi, coeffs: vec![c] }
                })
                .collect(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        for p in &self.pieces {
            if t >= p.lo && t <= p.hi {
                return poly_eval(&p.coeffs, t);
            }
        }
        0.0
    }

    /// Exact `int_{t_lo}^{t_hi} u(t) dt`.
    pub fn integral(&self, t_lo: f64, t_hi: f64) -> f64 {
        let mut acc = 0.0;
        for p in &self.pieces {
            let a = p.lo.max(t_lo);
            let b = p.hi.min(t_hi);
            if b > a {
                acc += poly_integral(&p.coeffs, a, b);
            }
        }
        acc
    }
}

/// Cell masses `m_j = N mu(V_j)` for a measure `mu = u d lambda` with
/// `0 <= u <= R`; nodes are the partition nodes, normalization the cell
/// count.
pub fn discretize_upper_constrained(
    density: &Density,
    partition: &PartitionedSet,
    cap: f64,
) -> Result<WeightedConfiguration> {
    let length = partition.set().total_length();
    let n = partition.n() as f64;
    let mut masses = Vec::with_capacity(partition.len());
    for (j, cell) in partition.cells().iter().enumerate() {
        let mu_cell = density.integral(cell.t_lo, cell.t_hi) / length;
        let m = n * mu_cell;
        if m > cap + MASS_SLACK {
            return Err(Error::ConstraintViolated { index: j, mass: m, cap });
        }
        masses.push(m.clamp(0.0, cap));
    }
    WeightedConfiguration::new(partition.nodes().to_vec(), masses, cap, partition.len())
}

/// The second measure of a weak-star comparison.
pub enum MeasureLike<'a> {
    Discrete(&'a WeightedConfiguration),
    Continuous { density: &'a Density, set: &'a CompactSet },
}

fn extend_box(b: &mut [f64; 4], z: Complex64) {
    b[0] = b[0].min(z.re);
    b[1] = b[1].max(z.re);
    b[2] = b[2].min(z.im);
    b[3] = b[3].max(z.im);
}

fn piece_sample_box(b: &mut [f64; 4], piece: &Piece, t_lo: f64, t_hi: f64) {
    // endpoints plus interior samples; exact for segments, conservative
    // (within the arc's chordal hull) for arcs
    let steps = 16;
    for k in 0..=steps {
        let t = t_lo + (t_hi - t_lo) * k as f64 / steps as f64;
        extend_box(b, piece.point_at(t));
    }
}

/// Max over `{Re w^k, Im w^k : 0 <= k <= k_max}` of the moment gap between
/// two measures, coordinates affinely rescaled to `[-1, 1]` over the common
/// bounding box first.
pub fn weakstar_discrepancy(
    a: &WeightedConfiguration,
    b: &MeasureLike<'_>,
    k_max: usize,
) -> f64 {
    let mut bx = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for &z in a.points() {
        extend_box(&mut bx, z);
    }
    match b {
        MeasureLike::Discrete(cfg) => {
            for &z in cfg.points() {
                extend_box(&mut bx, z);
            }
        }
        MeasureLike::Continuous { density, set } => {
            for dp in &density.pieces {
                for piece in set.pieces() {
                    let (lo, hi) = piece.param_range();
                    let (s, e) = (dp.lo.max(lo), dp.hi.min(hi));
                    if e > s {
                        piece_sample_box(&mut bx, piece, s, e);
                    }
                }
            }
        }
    }
    if !bx[0].is_finite() {
        // both measures carry no atoms / no pieces: only the mass moment
        bx = [0.0, 0.0, 0.0, 0.0];
    }
    let (cx, cy) = (0.5 * (bx[0] + bx[1]), 0.5 * (bx[2] + bx[3]));
    let sx = if bx[1] > bx[0] { 0.5 * (bx[1] - bx[0]) } else { 1.0 };
    let sy = if bx[3] > bx[2] { 0.5 * (bx[3] - bx[2]) } else { 1.0 };
    let rescale = |z: Complex64| Complex64::new((z.re - cx) / sx, (z.im - cy) / sy);

    let discrete_moment = |cfg: &WeightedConfiguration, k: usize| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&z, &m) in cfg.points().iter().zip(cfg.masses()) {
            if m > 0.0 {
                acc += m * rescale(z).powu(k as u32);
            }
        }
        acc / cfg.normalization() as f64
    };

    let continuous_moment = |density: &Density, set: &CompactSet, k: usize| -> Complex64 {
        let length = set.total_length();
        let mut acc = Complex64::new(0.0, 0.0);
        for dp in &density.pieces {
            for piece in set.pieces() {
                let (lo, hi) = piece.param_range();
                let (s, e) = (dp.lo.max(lo), dp.hi.min(hi));
                if e <= s {
                    continue;
                }
                // polynomial integrand on segments (exact); smooth on arcs
                let order = (k + dp.coeffs.len() + 2).max(16);
                let (nodes, weights) = gauss_legendre(order);
                let c = 0.5 * (e - s);
                let d = 0.5 * (e + s);
                for (&x, &w) in nodes.iter().zip(&weights) {
                    let t = c * x + d;
                    let u = poly_eval(&dp.coeffs, t);
                    acc += w * c * u * rescale(piece.point_at(t)).powu(k as u32);
                }
            }
        }
        acc / length
    };

    let mut worst: f64 = 0.0;
    for k in 0..=k_max {
        let ma = discrete_moment(a, k);
        let mb = match b {
            MeasureLike::Discrete(cfg) => discrete_moment(cfg, k),
            MeasureLike::Continuous { density, set } => continuous_moment(density, set, k),
        };
        worst = worst.max((ma.re - mb.re).abs()).max((ma.im - mb.im).abs());
    }
    worst
}
