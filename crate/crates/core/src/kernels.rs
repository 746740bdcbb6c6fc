//! Aggregated raw second moments and their bivariate spline smoothing.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{pair_subjects, CenteredResiduals};
use crate::error::{FacdError, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;
use crate::spline::{select_nu_gcv_bivariate, PenalizedFit, RoughnessPenalty, SmoothingConfig, SplineBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    X,
    Y,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::X => "X",
            Side::Y => "Y",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw moment of one subject at one unordered within-subject time pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawMomentSample<T: Scalar> {
    pub subject: usize,
    pub pair: (T, T),
    pub value: T,
    /// Smoothing weight `1 / (n N_i (N_i - 1) / 2)`, so the weights of one
    /// subject sum to `1 / n`.
    pub weight: T,
}

/// Raw moments of the `own` side, aggregated against the paired `other`
/// side. `subject` indexes `own.subjects`.
pub fn raw_moments<T: Scalar>(
    own: &CenteredResiduals<T>,
    other: &CenteredResiduals<T>,
) -> Result<Vec<RawMomentSample<T>>> {
    let pairs = pair_subjects(own, other)?;
    let pq = T::of_usize(own.n_features * other.n_features);
    let contributing = own.subjects.iter().filter(|s| s.n_times() >= 2).count();
    if contributing == 0 {
        return Ok(Vec::new());
    }
    let n = T::of_usize(contributing);
    let per_subject: Vec<Vec<RawMomentSample<T>>> = pairs
        .par_iter()
        .map(|&(io, ix)| {
            let mine = &own.subjects[io];
            let theirs = &other.subjects[ix];
            let m = mine.n_times();
            if m < 2 {
                return Vec::new();
            }
            // (1/N') Σ_h ‖r'(h)‖²
            let energy = theirs.residuals.iter().fold(T::zero(), |acc, &v| acc + v * v)
                / T::of_usize(theirs.n_times());
            let scale = energy / pq;
            let count = m * (m - 1) / 2;
            let weight = T::one() / (n * T::of_usize(count));
            let mut out = Vec::with_capacity(count);
            for g1 in 0..m {
                let r1 = mine.residuals.row(g1);
                for g2 in (g1 + 1)..m {
                    let dot = r1.dot(&mine.residuals.row(g2));
                    out.push(RawMomentSample {
                        subject: io,
                        pair: (mine.times[g1], mine.times[g2]),
                        value: dot * scale,
                        weight,
                    });
                }
            }
            out
        })
        .collect();
    Ok(per_subject.into_iter().flatten().collect())
}

pub fn raw_moments_x<T: Scalar>(
    resid_x: &CenteredResiduals<T>,
    resid_y: &CenteredResiduals<T>,
) -> Result<Vec<RawMomentSample<T>>> {
    raw_moments(resid_x, resid_y)
}

pub fn raw_moments_y<T: Scalar>(
    resid_x: &CenteredResiduals<T>,
    resid_y: &CenteredResiduals<T>,
) -> Result<Vec<RawMomentSample<T>>> {
    raw_moments(resid_y, resid_x)
}

/// Smoothed symmetric kernel surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct KernelEstimate<T: Scalar> {
    pub side: Side,
    pub basis: SplineBasis<T>,
    pub fit: PenalizedFit<T>,
    #[serde(default)]
    #[serde(with = "crate::scalar::nonfinite::trace")]
    pub gcv_trace: Vec<(T, T)>,
}

impl<T: Scalar> KernelEstimate<T> {
    pub fn eval(&self, t1: T, t2: T) -> T {
        self.basis.eval_surface(&self.fit.coefficients, t1, t2)
    }

    /// Surface values at every pair of grid points.
    pub fn eval_grid(&self, grid: &Grid<T>) -> DMatrix<T> {
        let l = self.basis.dimension();
        let basis = self.basis.evaluate(grid.points()).expect("grid points lie in [0, 1]");
        let coef = DMatrix::from_row_slice(l, l, &self.fit.coefficients);
        let raw = &basis * coef * basis.transpose();
        (&raw + raw.transpose()) * T::of(0.5)
    }
}

fn canonical_order<T: Scalar>(a: &RawMomentSample<T>, b: &RawMomentSample<T>) -> Ordering {
    let key = |s: &RawMomentSample<T>| [s.pair.0, s.pair.1, s.value, s.weight];
    key(a)
        .iter()
        .zip(key(b).iter())
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Tensor-product penalized spline fit of the raw moments with GCV-selected
/// smoothing.
pub fn estimate_kernel<T: Scalar>(
    samples: &[RawMomentSample<T>],
    side: Side,
    config: &SmoothingConfig,
) -> Result<KernelEstimate<T>> {
    let first = samples.first().ok_or_else(|| {
        FacdError::DegenerateDesign(format!(
            "no subject on side {side} has two or more observation times"
        ))
    })?;
    let same = |a: (T, T), b: (T, T)| (a.0 == b.0 && a.1 == b.1) || (a.0 == b.1 && a.1 == b.0);
    if samples.iter().all(|s| same(s.pair, first.pair)) {
        return Err(FacdError::DegenerateDesign(format!(
            "every raw moment on side {side} sits at the same time pair"
        )));
    }
    // A canonical order makes the fit independent of subject order.
    let mut sorted = samples.to_vec();
    sorted.sort_by(canonical_order);
    let points: Vec<(T, T)> = sorted.iter().map(|s| s.pair).collect();
    let values: Vec<T> = sorted.iter().map(|s| s.value).collect();
    let weights: Vec<T> = sorted.iter().map(|s| s.weight).collect();

    let basis: SplineBasis<T> = config.basis()?;
    let grid: Vec<T> = config.grid()?;
    let penalty = RoughnessPenalty::bivariate(&basis);
    let sel = select_nu_gcv_bivariate(&basis, &penalty, &points, &values, &weights, &grid)?;
    Ok(KernelEstimate {
        side,
        basis,
        fit: sel.fit,
        gcv_trace: sel.trace,
    })
}
