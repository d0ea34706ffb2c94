//! External fields `f` on `K`: piecewise constant or polynomial in the
//! natural parameter, with optional `+inf` regions.
//!
//! Lower semicontinuity is guaranteed by construction: where several piece
//! regions overlap (including shared endpoints) the pointwise minimum of the
//! matching values is taken, and `+inf` only appears as an explicit piece or
//! default value. The admissibility requirement is that at least one region
//! of positive length on `K` carries finite values; this is a computable
//! proxy for positive capacity, which a grid representation cannot certify.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CompactSet;
use crate::quad::poly_eval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldValue {
    Constant(f64),
    /// Coefficients `c_0 + c_1 t + c_2 t^2 + ...` in the natural parameter.
    Polynomial(Vec<f64>),
    Infinite,
}

impl FieldValue {
    fn eval(&self, t: f64) -> f64 {
        match self {
            FieldValue::Constant(c) => *c,
            FieldValue::Polynomial(coeffs) => poly_eval(coeffs, t),
            FieldValue::Infinite => f64::INFINITY,
        }
    }

    fn is_finite_kind(&self) -> bool {
        !matches!(self, FieldValue::Infinite)
    }
}

/// A field piece: value on a natural-parameter interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPiece {
    pub lo: f64,
    pub hi: f64,
    pub value: FieldValue,
}

const REGION_TOL: f64 = 1e-12;

impl FieldPiece {
    fn covers(&self, t: f64) -> bool {
        t >= self.lo - REGION_TOL && t <= self.hi + REGION_TOL
    }
}

/// An external field on a fixed compact set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalField {
    set: CompactSet,
    pieces: Vec<FieldPiece>,
    default: FieldValue,
}

impl ExternalField {
    pub fn new(set: CompactSet, pieces: Vec<FieldPiece>, default: FieldValue) -> Result<Self> {
        for p in &pieces {
            if !(p.lo.is_finite() && p.hi.is_finite() && p.lo <= p.hi) {
                return Err(Error::InvalidInput(format!(
                    "field region [{}, {}] must satisfy lo <= hi",
                    p.lo, p.hi
                )));
            }
        }
        let field = ExternalField { set, pieces, default };
        if !field.admissible() {
            return Err(Error::InadmissibleField);
        }
        Ok(field)
    }

    /// Constant field on the whole set.
    pub fn constant(set: CompactSet, value: f64) -> Result<Self> {
        Self::new(set, Vec::new(), FieldValue::Constant(value))
    }

    pub fn set(&self) -> &CompactSet {
        &self.set
    }

    /// Some region of positive length on `K` must carry finite values.
    fn admissible(&self) -> bool {
        if self.default.is_finite_kind() {
            return true;
        }
        for piece in &self.pieces {
            if !piece.value.is_finite_kind() {
                continue;
            }
            for kp in self.set.pieces() {
                let (lo, hi) = kp.param_range();
                if piece.hi.min(hi) - piece.lo.max(lo) > 0.0 {
                    return true;
                }
            }
        }
        false
    }

    /// Value at natural parameter `t` (membership in `K` already resolved).
    pub fn eval_param(&self, t: f64) -> f64 {
        let mut value = f64::INFINITY;
        let mut matched = false;
        for piece in &self.pieces {
            if piece.covers(t) {
                matched = true;
                value = value.min(piece.value.eval(t));
            }
        }
        if matched {
            value
        } else {
            self.default.eval(t)
        }
    }

    /// `f(z)` for `z` on `K`; `+inf` is a legitimate value.
    pub fn eval(&self, z: Complex64) -> Result<f64> {
        let (_, t) = self.set.locate(z)?;
        Ok(self.eval_param(t))
    }
}

/// Minimum of `f` over a grid on `K` together with the first argmin.
///
/// Infinite values are skipped; ties are broken by grid order.
pub fn field_min(f: &ExternalField, grid: &[Complex64]) -> Result<(f64, Complex64)> {
    let mut best: Option<(f64, Complex64)> = None;
    for &z in grid {
        let v = f.eval(z)?;
        if v.is_finite() {
            match best {
                Some((b, _)) if b <= v => {}
                _ => best = Some((v, z)),
            }
        }
    }
    best.ok_or(Error::AllInfinite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn two_piece_counterexample() -> ExternalField {
        // 0 on [0,1], -1 on [2,3]
        let set = CompactSet::segments(&[(0.0, 1.0), (2.0, 3.0)]).unwrap();
        ExternalField::new(
            set,
            vec![
                FieldPiece { lo: 0.0, hi: 1.0, value: FieldValue::Constant(0.0) },
                FieldPiece { lo: 2.0, hi: 3.0, value: FieldValue::Constant(-1.0) },
            ],
            FieldValue::Infinite,
        )
        .unwrap()
    }

    #[test]
    fn constant_field_evaluates() {
        let set = CompactSet::segments(&[(1.0, 2.0)]).unwrap();
        let f = ExternalField::constant(set, -1.0).unwrap();
        assert_eq!(f.eval(c(1.5)).unwrap(), -1.0);
        assert!(matches!(f.eval(c(2.5)), Err(Error::PointOutsideK { .. })));
    }

    #[test]
    fn piecewise_field_and_infinite_default() {
        let f = two_piece_counterexample();
        assert_eq!(f.eval(c(2.5)).unwrap(), -1.0);
        assert_eq!(f.eval(c(0.5)).unwrap(), 0.0);

        let set = CompactSet::segments(&[(1.0, 2.0)]).unwrap();
        let g = ExternalField::new(
            set,
            vec![FieldPiece { lo: 1.0, hi: 1.5, value: FieldValue::Constant(0.5) }],
            FieldValue::Infinite,
        )
        .unwrap();
        assert!(g.eval(c(1.8)).unwrap().is_infinite());
    }

    #[test]
    fn all_infinite_field_rejected() {
        let set = CompactSet::segments(&[(1.0, 2.0)]).unwrap();
        let err = ExternalField::new(set, Vec::new(), FieldValue::Infinite).unwrap_err();
        assert_eq!(err, Error::InadmissibleField);
    }

    #[test]
    fn min_of_constant_field() {
        let set = CompactSet::segments(&[(1.0, 2.0)]).unwrap();
        let f = ExternalField::constant(set.clone(), -1.0).unwrap();
        let grid = set.uniform_grid(11);
        let (beta, arg) = field_min(&f, &grid).unwrap();
        assert_eq!(beta, -1.0);
        assert_eq!(arg, grid[0]);
    }

    #[test]
    fn min_of_counterexample_field_sits_in_second_interval() {
        let f = two_piece_counterexample();
        let grid = f.set().uniform_grid(20);
        let (beta, arg) = field_min(&f, &grid).unwrap();
        assert_eq!(beta, -1.0);
        // first grid point of [2,3]
        assert_eq!(arg, c(2.0));
    }

    #[test]
    fn linear_field_minimum_at_left_endpoint() {
        let set = CompactSet::segments(&[(1.0, 2.0)]).unwrap();
        let f = ExternalField::new(
            set.clone(),
            vec![FieldPiece { lo: 1.0, hi: 2.0, value: FieldValue::Polynomial(vec![-1.5, 1.0]) }],
            FieldValue::Infinite,
        )
        .unwrap();
        let grid = set.uniform_grid(101);
        assert_eq!(grid.len(), 101);
        let (beta, arg) = field_min(&f, &grid).unwrap();
        assert_abs_diff_eq!(beta, -0.5, epsilon = 1e-15);
        assert_eq!(arg, c(1.0));
    }

    #[test]
    fn refinement_never_increases_min() {
        let f = two_piece_counterexample();
        let coarse = f.set().uniform_grid(6);
        let fine = f.set().uniform_grid(60);
        let (b_coarse, _) = field_min(&f, &coarse).unwrap();
        let (b_fine, _) = field_min(&f, &fine).unwrap();
        assert!(b_fine <= b_coarse);
    }

    #[test]
    fn all_infinite_grid_errors() {
        let set = CompactSet::segments(&[(1.0, 2.0)]).unwrap();
        let f = ExternalField::new(
            set,
            vec![FieldPiece { lo: 1.0, hi: 1.2, value: FieldValue::Constant(0.0) }],
            FieldValue::Infinite,
        )
        .unwrap();
        let grid = [c(1.5), c(1.9)];
        assert_eq!(field_min(&f, &grid).unwrap_err(), Error::AllInfinite);
    }

    #[test]
    fn overlapping_pieces_take_min_at_shared_boundary() {
        let set = CompactSet::segments(&[(0.0, 2.0)]).unwrap();
        let f = ExternalField::new(
            set,
            vec![
                FieldPiece { lo: 0.0, hi: 1.0, value: FieldValue::Constant(0.0) },
                FieldPiece { lo: 1.0, hi: 2.0, value: FieldValue::Constant(-1.0) },
            ],
            FieldValue::Infinite,
        )
        .unwrap();
        assert_eq!(f.eval(c(1.0)).unwrap(), -1.0);
    }
}
