//! Compact sets `K`: finite unions of real segments (right half-plane) or
//! circular arcs centered at the origin (unit disk).
//!
//! Every piece is parametrized by a scalar "natural parameter" `t`:
//! the real coordinate `x` for a segment, the absolute arclength `r * theta`
//! for an arc. Field values, densities and partitions are all expressed in
//! this parameter, which makes one-dimensional integrals exact for
//! piecewise-polynomial data.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::GreenDomain;

/// Tolerance used when locating a complex point on `K`.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// One connected piece of `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Piece {
    /// `[a, b]` on the positive real axis.
    Segment { a: f64, b: f64 },
    /// Arc of the circle `|z| = radius`, angles in radians, `theta0 < theta1`.
    Arc { radius: f64, theta0: f64, theta1: f64 },
}

impl Piece {
    pub fn length(&self) -> f64 {
        match *self {
            Piece::Segment { a, b } => b - a,
            Piece::Arc { radius, theta0, theta1 } => radius * (theta1 - theta0),
        }
    }

    /// Natural-parameter range `[t_lo, t_hi]`.
    pub fn param_range(&self) -> (f64, f64) {
        match *self {
            Piece::Segment { a, b } => (a, b),
            Piece::Arc { radius, theta0, theta1 } => (radius * theta0, radius * theta1),
        }
    }

    /// Point at natural parameter `t`.
    pub fn point_at(&self, t: f64) -> Complex64 {
        match *self {
            Piece::Segment { .. } => Complex64::new(t, 0.0),
            Piece::Arc { radius, .. } => Complex64::from_polar(radius, t / radius),
        }
    }

    /// Natural parameter of `z` if `z` lies on this piece (within tolerance).
    pub fn locate(&self, z: Complex64) -> Option<f64> {
        match *self {
            Piece::Segment { a, b } => {
                if z.im.abs() <= MEMBERSHIP_TOL
                    && z.re >= a - MEMBERSHIP_TOL
                    && z.re <= b + MEMBERSHIP_TOL
                {
                    Some(z.re.clamp(a, b))
                } else {
                    None
                }
            }
            Piece::Arc { radius, theta0, theta1 } => {
                if (z.norm() - radius).abs() > MEMBERSHIP_TOL {
                    return None;
                }
                let ang_tol = MEMBERSHIP_TOL / radius;
                let theta = z.arg();
                // try theta and theta +- 2*pi to cover wrap-around
                for cand in [theta, theta + std::f64::consts::TAU, theta - std::f64::consts::TAU] {
                    if cand >= theta0 - ang_tol && cand <= theta1 + ang_tol {
                        return Some(radius * cand.clamp(theta0, theta1));
                    }
                }
                None
            }
        }
    }
}

/// A compact set inside a Green domain, as an ordered disjoint union of pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSet {
    domain: GreenDomain,
    pieces: Vec<Piece>,
}

impl CompactSet {
    /// Union of real segments in the right half-plane. Segments must be
    /// ordered, disjoint, with `0 <= a_1 < b_1 < a_2 < ...`. The left
    /// endpoint of the first segment may sit on the boundary `Re z = 0`;
    /// kernel evaluations at that single point are still rejected.
    pub fn segments(intervals: &[(f64, f64)]) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidInput("K needs at least one segment".into()));
        }
        let mut prev_b = f64::NEG_INFINITY;
        for &(a, b) in intervals {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidInput(format!(
                    "segment [{a}, {b}] must satisfy a < b with finite endpoints"
                )));
            }
            if a < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "segment [{a}, {b}] leaves the closed right half-plane"
                )));
            }
            if a <= prev_b {
                return Err(Error::InvalidInput(
                    "segments must be ordered and pairwise disjoint".into(),
                ));
            }
            prev_b = b;
        }
        Ok(CompactSet {
            domain: GreenDomain::RightHalfPlane,
            pieces: intervals.iter().map(|&(a, b)| Piece::Segment { a, b }).collect(),
        })
    }

    /// Union of arcs of origin-centered circles strictly inside the unit disk.
    pub fn arcs(arcs: &[(f64, f64, f64)]) -> Result<Self> {
        if arcs.is_empty() {
            return Err(Error::InvalidInput("K needs at least one arc".into()));
        }
        for &(r, t0, t1) in arcs {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "arc radius {r} must lie strictly inside the unit disk"
                )));
            }
            if !(t0 < t1 && t1 - t0 <= std::f64::consts::TAU) {
                return Err(Error::InvalidInput(format!(
                    "arc angles ({t0}, {t1}) must be increasing and span at most 2*pi"
                )));
            }
        }
        Ok(CompactSet {
            domain: GreenDomain::UnitDisk,
            pieces: arcs
                .iter()
                .map(|&(radius, theta0, theta1)| Piece::Arc { radius, theta0, theta1 })
                .collect(),
        })
    }

    pub fn domain(&self) -> GreenDomain {
        self.domain
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn total_length(&self) -> f64 {
        self.pieces.iter().map(|p| p.length()).sum()
    }

    pub fn min_piece_length(&self) -> f64 {
        self.pieces.iter().map(|p| p.length()).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.pieces.iter().any(|p| p.locate(z).is_some())
    }

    /// Piece index and natural parameter of `z`, or `PointOutsideK`.
    pub fn locate(&self, z: Complex64) -> Result<(usize, f64)> {
        for (i, p) in self.pieces.iter().enumerate() {
            if let Some(t) = p.locate(z) {
                return Ok((i, t));
            }
        }
        Err(Error::outside_k(z))
    }

    /// Deterministic grid of roughly `total` points, spread per piece
    /// proportionally to arclength, endpoints included.
    pub fn uniform_grid(&self, total: usize) -> Vec<Complex64> {
        let length = self.total_length();
        let mut grid = Vec::with_capacity(total + self.pieces.len() * 2);
        for p in &self.pieces {
            let share = ((total as f64) * p.length() / length).round() as usize;
            let n = share.max(2);
            let (lo, hi) = p.param_range();
            for k in 0..n {
                let t = lo + (hi - lo) * (k as f64) / ((n - 1) as f64);
                grid.push(p.point_at(t));
            }
        }
        grid
    }

    /// Grid in natural-parameter space, same layout as `uniform_grid`.
    pub fn uniform_param_grid(&self, total: usize) -> Vec<(usize, f64)> {
        let length = self.total_length();
        let mut grid = Vec::new();
        for (i, p) in self.pieces.iter().enumerate() {
            let share = ((total as f64) * p.length() / length).round() as usize;
            let n = share.max(2);
            let (lo, hi) = p.param_range();
            for k in 0..n {
                grid.push((i, lo + (hi - lo) * (k as f64) / ((n - 1) as f64)));
            }
        }
        grid
    }
}

/// Merge, sort by natural parameter and deduplicate candidate points on `K`.
///
/// Only meaningful for sets whose pieces do not overlap in parameter space
/// (guaranteed by the constructors). Points closer than `tol` collapse to the
/// first one.
pub fn merge_grids(set: &CompactSet, grids: &[&[Complex64]], tol: f64) -> Result<Vec<Complex64>> {
    let mut keyed: Vec<(usize, f64, Complex64)> = Vec::new();
    for g in grids {
        for &z in *g {
            let (i, t) = set.locate(z)?;
            keyed.push((i, t, z));
        }
    }
    keyed.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
    let mut out: Vec<Complex64> = Vec::with_capacity(keyed.len());
    let mut last: Option<(usize, f64)> = None;
    for (i, t, z) in keyed {
        if let Some((li, lt)) = last {
            if li == i && (t - lt).abs() <= tol {
                continue;
            }
        }
        out.push(z);
        last = Some((i, t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_set_accepts_boundary_touch() {
        let k = CompactSet::segments(&[(0.0, 1.0), (2.0, 3.0)]).unwrap();
        assert_eq!(k.total_length(), 2.0);
        assert!(k.contains(Complex64::new(0.0, 0.0)));
        assert!(k.contains(Complex64::new(2.5, 0.0)));
        assert!(!k.contains(Complex64::new(1.5, 0.0)));
    }

    #[test]
    fn segment_set_rejects_overlap_and_reversal() {
        assert!(CompactSet::segments(&[(2.0, 1.0)]).is_err());
        assert!(CompactSet::segments(&[(0.0, 1.0), (0.5, 2.0)]).is_err());
        assert!(CompactSet::segments(&[(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn locate_round_trips_on_arcs() {
        let k = CompactSet::arcs(&[(0.5, 0.0, 1.0)]).unwrap();
        let p = k.pieces()[0];
        let z = p.point_at(0.5 * 0.7);
        let (i, t) = k.locate(z).unwrap();
        assert_eq!(i, 0);
        assert!((t - 0.35).abs() < 1e-12);
        assert!(k.locate(Complex64::new(0.9, 0.0)).is_err());
    }

    #[test]
    fn uniform_grid_covers_endpoints() {
        let k = CompactSet::segments(&[(1.0, 2.0)]).unwrap();
        let g = k.uniform_grid(5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], Complex64::new(1.0, 0.0));
        assert_eq!(g[4], Complex64::new(2.0, 0.0));
    }
}
