//! Block cross-covariance between the two sides in the truncated eigenbases.
//!
//! Each subject's matrix is an outer product `left_i right_iᵀ`, so only the
//! factors are kept. Entry `k * p + j` of `left_i` is
//! `(1/N_i) Σ_g r_j(T_ig) ψ_k(T_ig)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{pair_subjects, CenteredResiduals, SubjectResiduals};
use crate::error::{FacdError, Result};
use crate::scalar::Scalar;
use crate::spectral::EigenSystem;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCrossCov<T: Scalar> {
    pub p: usize,
    pub q: usize,
    pub kappa_x: usize,
    pub kappa_y: usize,
    /// Row `i` is `left_i`, length `p * kappa_x`.
    pub left: DMatrix<T>,
    /// Row `i` is `right_i`, length `q * kappa_y`.
    pub right: DMatrix<T>,
    /// Mean of the per-subject matrices.
    pub pooled: DMatrix<T>,
    /// Subject ids in row order (the X side's order).
    pub subject_ids: Vec<String>,
}

impl<T: Scalar> BlockCrossCov<T> {
    pub fn n_subjects(&self) -> usize {
        self.left.nrows()
    }

    pub fn per_subject(&self, i: usize) -> DMatrix<T> {
        self.left.row(i).transpose() * self.right.row(i)
    }
}

/// Projection of one subject's residuals onto the retained eigenfunctions,
/// averaged over its times.
pub fn project_subject<T: Scalar>(resid: &SubjectResiduals<T>, eig: &EigenSystem<T>) -> DVector<T> {
    let p = resid.residuals.ncols();
    let kappa = eig.kappa;
    let mut out = DVector::zeros(p * kappa);
    let n = resid.n_times();
    if n == 0 {
        return out;
    }
    for g in 0..n {
        let psi = eig.eval_retained(resid.times[g]);
        let row = resid.residuals.row(g);
        for (k, &v) in psi.iter().enumerate() {
            for j in 0..p {
                out[k * p + j] += row[j] * v;
            }
        }
    }
    out / T::of_usize(n)
}

pub fn assemble<T: Scalar>(
    resid_x: &CenteredResiduals<T>,
    resid_y: &CenteredResiduals<T>,
    eig_x: &EigenSystem<T>,
    eig_y: &EigenSystem<T>,
) -> Result<BlockCrossCov<T>> {
    for (eig, side) in [(eig_x, "X"), (eig_y, "Y")] {
        if eig.kappa == 0 || eig.kappa > eig.n_positive() {
            return Err(FacdError::EmptySpectrum(format!(
                "side {side} retains {} of {} positive eigenfunctions",
                eig.kappa,
                eig.n_positive()
            )));
        }
    }
    let pairs = pair_subjects(resid_x, resid_y)?;
    let (p, q) = (resid_x.n_features, resid_y.n_features);
    let rows: Vec<(DVector<T>, DVector<T>)> = pairs
        .par_iter()
        .map(|&(ix, iy)| {
            (
                project_subject(&resid_x.subjects[ix], eig_x),
                project_subject(&resid_y.subjects[iy], eig_y),
            )
        })
        .collect();
    let n = rows.len();
    let mut left = DMatrix::zeros(n, p * eig_x.kappa);
    let mut right = DMatrix::zeros(n, q * eig_y.kappa);
    for (i, (l, r)) in rows.iter().enumerate() {
        left.set_row(i, &l.transpose());
        right.set_row(i, &r.transpose());
    }
    let pooled = if n == 0 {
        DMatrix::zeros(left.ncols(), right.ncols())
    } else {
        left.transpose() * &right / T::of_usize(n)
    };
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(FacdError::Numerical("cross-covariance has non-finite entries".into()));
    }
    Ok(BlockCrossCov {
        p,
        q,
        kappa_x: eig_x.kappa,
        kappa_y: eig_y.kappa,
        left,
        right,
        pooled,
        subject_ids: pairs.iter().map(|&(ix, _)| resid_x.subjects[ix].id.clone()).collect(),
    })
}
