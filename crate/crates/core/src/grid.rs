//! Uniform quadrature grid on [0, 1] with composite trapezoid weights.

use serde::{Deserialize, Serialize};

use crate::error::{FacdError, Result};
use crate::scalar::Scalar;

pub const DEFAULT_GRID_SIZE: usize = 201;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct Grid<T: Scalar> {
    points: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    pub fn uniform(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(FacdError::InvalidConfig(format!(
                "quadrature grid needs at least 2 points, got {size}"
            )));
        }
        let intervals = T::of_usize(size - 1);
        let h = T::one() / intervals;
        let half = T::of(0.5);
        let points = (0..size)
            .map(|a| {
                if a == size - 1 {
                    T::one()
                } else {
                    T::of_usize(a) / intervals
                }
            })
            .collect();
        let weights = (0..size)
            .map(|a| if a == 0 || a == size - 1 { h * half } else { h })
            .collect();
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn integrate(&self, values: &[T]) -> T {
        debug_assert_eq!(values.len(), self.len());
        values
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&v, &w)| acc + v * w)
    }

    pub fn inner(&self, f: &[T], g: &[T]) -> T {
        f.iter()
            .zip(g)
            .zip(&self.weights)
            .fold(T::zero(), |acc, ((&a, &b), &w)| acc + a * b * w)
    }

    pub fn norm_sq(&self, f: &[T]) -> T {
        self.inner(f, f)
    }

    /// Linear interpolation of grid values at `t`; `t` is clamped to [0, 1].
    pub fn interpolate(&self, values: &[T], t: T) -> T {
        let (lo, frac) = self.locate(t);
        if frac == T::zero() {
            values[lo]
        } else {
            values[lo] + (values[lo + 1] - values[lo]) * frac
        }
    }

    /// Index of the left cell end and the fractional offset inside it.
    pub fn locate(&self, t: T) -> (usize, T) {
        let n = self.len();
        let t = t.max(T::zero()).min(T::one());
        let scaled = t * T::of_usize(n - 1);
        let mut lo = scaled.floor().to_usize().unwrap_or(0);
        if lo >= n - 1 {
            lo = n - 2;
        }
        let frac = (scaled - T::of_usize(lo)).max(T::zero()).min(T::one());
        (lo, frac)
    }
}
