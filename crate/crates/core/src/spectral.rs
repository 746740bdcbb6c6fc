//! Eigenfunctions of a smoothed kernel on the quadrature grid and the choice
//! of truncation level.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{FacdError, Result};
use crate::grid::Grid;
use crate::kernels::KernelEstimate;
use crate::scalar::Scalar;

pub const DEFAULT_KAPPA_THRESHOLD: f64 = 0.95;
pub const DEFAULT_MEMORY_BOUND: usize = 2_000_000;
pub const MIN_GRID_SIZE: usize = 10;

const POSITIVE_RELATIVE: f64 = 1e-12;

/// Eigenpairs of a kernel, eigenfunctions stored as grid values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct EigenSystem<T: Scalar> {
    pub grid: Grid<T>,
    /// All eigenvalues, descending, negatives clipped to zero.
    pub eigenvalues: Vec<T>,
    /// Eigenfunctions of the positive eigenvalues, in the same order.
    pub eigenfunctions: Vec<Vec<T>>,
    /// Number of eigenfunctions retained downstream.
    pub kappa: usize,
    /// `∫ H(t, t) dt`.
    pub trace_total: T,
}

impl<T: Scalar> EigenSystem<T> {
    pub fn n_positive(&self) -> usize {
        self.eigenfunctions.len()
    }

    /// Values of the first `kappa` eigenfunctions at `t` by linear
    /// interpolation.
    pub fn eval_retained(&self, t: T) -> Vec<T> {
        let (lo, frac) = self.grid.locate(t);
        self.eigenfunctions[..self.kappa]
            .iter()
            .map(|psi| {
                if frac == T::zero() {
                    psi[lo]
                } else {
                    psi[lo] + (psi[lo + 1] - psi[lo]) * frac
                }
            })
            .collect()
    }

    /// `ζ_k - ζ_{k+1}` over the positive part of the spectrum.
    pub fn eigen_gaps(&self) -> Vec<T> {
        let k = self.n_positive();
        (0..k)
            .map(|i| {
                let next = self.eigenvalues.get(i + 1).copied().unwrap_or(T::zero());
                self.eigenvalues[i] - next
            })
            .collect()
    }
}

/// Eigendecomposition of `W^{1/2} K W^{1/2}` on a uniform grid.
pub fn eigendecompose<T: Scalar>(kernel: &KernelEstimate<T>, grid_size: usize) -> Result<EigenSystem<T>> {
    if grid_size < MIN_GRID_SIZE {
        return Err(FacdError::InvalidConfig(format!(
            "eigen grid needs at least {MIN_GRID_SIZE} points, got {grid_size}"
        )));
    }
    let grid = Grid::uniform(grid_size)?;
    let values = kernel.eval_grid(&grid);
    eigendecompose_values(&values, grid)
}

/// Same as [`eigendecompose`] for a kernel already tabulated on `grid`.
pub fn eigendecompose_values<T: Scalar>(values: &DMatrix<T>, grid: Grid<T>) -> Result<EigenSystem<T>> {
    let m = grid.len();
    if m < MIN_GRID_SIZE {
        return Err(FacdError::InvalidConfig(format!(
            "eigen grid needs at least {MIN_GRID_SIZE} points, got {m}"
        )));
    }
    if values.nrows() != m || values.ncols() != m {
        return Err(FacdError::InvalidInput(format!(
            "kernel table is {}x{}, grid has {m} points",
            values.nrows(),
            values.ncols()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FacdError::Numerical("kernel table has non-finite entries".into()));
    }
    let w = grid.weights();
    let sqrt_w: Vec<T> = w.iter().map(|&x| x.sqrt()).collect();
    let mut s = DMatrix::from_fn(m, m, |a, b| sqrt_w[a] * values[(a, b)] * sqrt_w[b]);
    s = (&s + s.transpose()) * T::of(0.5);
    let trace_total = (0..m).fold(T::zero(), |acc, a| acc + w[a] * values[(a, a)]);

    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let eigenvalues: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i].max(T::zero())).collect();
    let top = eigenvalues.first().copied().unwrap_or(T::zero());
    let cutoff = top * T::of(POSITIVE_RELATIVE);
    let n_pos = eigenvalues.iter().take_while(|&&v| v > cutoff && v > T::zero()).count();

    let eigenfunctions = order[..n_pos]
        .iter()
        .map(|&i| {
            let mut psi: Vec<T> = (0..m).map(|a| eig.eigenvectors[(a, i)] / sqrt_w[a]).collect();
            orient(&grid, &mut psi);
            psi
        })
        .collect();

    Ok(EigenSystem {
        grid,
        eigenvalues,
        eigenfunctions,
        kappa: 0,
        trace_total,
    })
}

/// Makes `∫ψ ≥ 0`; for (numerically) zero-mean functions, makes the first
/// value of maximal magnitude positive instead.
fn orient<T: Scalar>(grid: &Grid<T>, psi: &mut [T]) {
    let integral = grid.integrate(psi);
    let flip = if integral.abs() >= T::of(1e-10) {
        integral < T::zero()
    } else {
        let peak = psi.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let bar = peak * (T::one() - T::of(1e-8));
        psi.iter().find(|v| v.abs() >= bar).is_some_and(|&v| v < T::zero())
    };
    if flip {
        psi.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Smallest κ whose cumulative share of the trace exceeds `threshold`,
/// capped at the number of positive eigenvalues.
pub fn select_kappa<T: Scalar>(system: &EigenSystem<T>, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(FacdError::InvalidConfig(format!(
            "variance threshold {threshold} is outside (0, 1]"
        )));
    }
    let n_pos = system.n_positive();
    if n_pos == 0 {
        return Err(FacdError::EmptySpectrum("kernel has no positive eigenvalue".into()));
    }
    let trace = system.trace_total.as_f64();
    if trace > 0.0 {
        let mut cum = 0.0;
        for (k, v) in system.eigenvalues[..n_pos].iter().enumerate() {
            cum += v.as_f64();
            if cum / trace > threshold {
                return Ok(k + 1);
            }
        }
    }
    Ok(n_pos)
}

/// Largest κ keeping `n_features * κ` within `memory_bound` entries.
pub fn memory_cap(n_features: usize, memory_bound: usize) -> usize {
    (memory_bound / n_features.max(1)).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tabulate(grid: &Grid<f64>, f: impl Fn(f64, f64) -> f64) -> DMatrix<f64> {
        let p = grid.points();
        DMatrix::from_fn(grid.len(), grid.len(), |a, b| f(p[a], p[b]))
    }

    #[test]
    fn rank_one_legendre_kernel() {
        let grid = Grid::<f64>::uniform(201).unwrap();
        let phi = |t: f64| 3f64.sqrt() * (2.0 * t - 1.0);
        let k = tabulate(&grid, |a, b| phi(a) * phi(b));
        let sys = eigendecompose_values(&k, grid.clone()).unwrap();
        let phi_grid: Vec<f64> = grid.points().iter().map(|&t| phi(t)).collect();
        let discrete_norm = grid.norm_sq(&phi_grid);
        assert!((sys.eigenvalues[0] - discrete_norm).abs() < 1e-10);
        assert!((sys.eigenvalues[0] - 1.0).abs() < 1e-4);
        assert!(sys.eigenvalues[1] < 1e-8);
        assert_eq!(sys.n_positive(), 1);
        // zero integral: the first extreme value (t = 0) is made positive
        let psi = &sys.eigenfunctions[0];
        assert!(psi[0] > 0.0);
        let scale = discrete_norm.sqrt();
        for (v, f) in psi.iter().zip(&phi_grid) {
            assert!((v + f / scale).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_kernel_has_empty_spectrum() {
        let grid = Grid::<f64>::uniform(31).unwrap();
        let sys = eigendecompose_values(&DMatrix::zeros(31, 31), grid).unwrap();
        assert!(sys.eigenvalues.iter().all(|&v| v == 0.0));
        assert!(matches!(select_kappa(&sys, 0.95), Err(FacdError::EmptySpectrum(_))));
    }

    #[test]
    fn two_cosine_kernel() {
        let grid = Grid::<f64>::uniform(201).unwrap();
        let c = |k: f64, t: f64| 2f64.sqrt() * (k * PI * t).cos();
        let k = tabulate(&grid, |a, b| c(1.0, a) * c(1.0, b) + 0.5 * c(2.0, a) * c(2.0, b));
        let sys = eigendecompose_values(&k, grid.clone()).unwrap();
        assert!((sys.eigenvalues[0] - 1.0).abs() < 1e-6);
        assert!((sys.eigenvalues[1] - 0.5).abs() < 1e-6);
        for (idx, freq) in [(0usize, 1.0), (1, 2.0)] {
            let truth: Vec<f64> = grid.points().iter().map(|&t| c(freq, t)).collect();
            let psi = &sys.eigenfunctions[idx];
            let sign = if grid.inner(psi, &truth) < 0.0 { -1.0 } else { 1.0 };
            let diff: Vec<f64> = psi.iter().zip(&truth).map(|(a, b)| a - sign * b).collect();
            assert!(grid.norm_sq(&diff).sqrt() < 1e-4);
        }
        assert!((sys.trace_total - 1.5).abs() < 1e-6);
    }

    #[test]
    fn sign_convention_positive_integral() {
        let grid = Grid::<f64>::uniform(101).unwrap();
        let f = |t: f64| -(1.0 + t);
        let sys = eigendecompose_values(&tabulate(&grid, |a, b| f(a) * f(b)), grid.clone()).unwrap();
        assert!(grid.integrate(&sys.eigenfunctions[0]) > 0.0);
    }

    #[test]
    fn orthonormal_and_reconstructs() {
        let grid = Grid::<f64>::uniform(121).unwrap();
        let k = tabulate(&grid, |a, b| (-(a - b).powi(2) / 0.1).exp() + a * b);
        let sys = eigendecompose_values(&k, grid.clone()).unwrap();
        let n = sys.n_positive();
        assert!(n >= 5);
        for i in 0..n.min(12) {
            for j in 0..n.min(12) {
                let ip = grid.inner(&sys.eigenfunctions[i], &sys.eigenfunctions[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((ip - target).abs() < 1e-8, "({i},{j}) -> {ip}");
            }
        }
        let mut recon = DMatrix::<f64>::zeros(121, 121);
        for k in 0..n {
            let psi = &sys.eigenfunctions[k];
            for a in 0..121 {
                for b in 0..121 {
                    recon[(a, b)] += sys.eigenvalues[k] * psi[a] * psi[b];
                }
            }
        }
        assert!((&recon - &k).norm() < 1e-6 * k.norm());
        let total: f64 = sys.eigenvalues.iter().sum();
        assert!((total - sys.trace_total).abs() <= 0.02 * sys.trace_total);
        assert!(sys.eigen_gaps().iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn negative_eigenvalues_are_clipped() {
        let grid = Grid::<f64>::uniform(51).unwrap();
        let c = |k: f64, t: f64| 2f64.sqrt() * (k * PI * t).cos();
        let k = tabulate(&grid, |a, b| c(1.0, a) * c(1.0, b) - 0.3 * c(2.0, a) * c(2.0, b));
        let sys = eigendecompose_values(&k, grid).unwrap();
        assert!(sys.eigenvalues.iter().all(|&v| v >= 0.0));
        assert_eq!(sys.n_positive(), 1);
    }

    fn synthetic(eigenvalues: Vec<f64>, trace: f64) -> EigenSystem<f64> {
        let grid = Grid::uniform(11).unwrap();
        let n_pos = eigenvalues.iter().filter(|&&v| v > 0.0).count();
        EigenSystem {
            eigenfunctions: vec![vec![0.0; 11]; n_pos],
            grid,
            eigenvalues,
            kappa: 0,
            trace_total: trace,
        }
    }

    #[test]
    fn kappa_selection() {
        assert_eq!(select_kappa(&synthetic(vec![1.0, 0.0, 0.0], 1.0), 0.95).unwrap(), 1);
        assert_eq!(select_kappa(&synthetic(vec![0.6, 0.3, 0.1], 1.0), 0.95).unwrap(), 3);
        assert_eq!(select_kappa(&synthetic(vec![0.6, 0.3, 0.1], 1.0), 0.85).unwrap(), 2);
        // trace larger than the positive part: capped at the positive count
        assert_eq!(select_kappa(&synthetic(vec![0.5, 0.2], 1.0), 0.95).unwrap(), 2);
        assert!(select_kappa(&synthetic(vec![0.5], 1.0), 0.0).is_err());
        assert_eq!(DEFAULT_KAPPA_THRESHOLD, 0.95);
    }

    #[test]
    fn tiny_grids_are_rejected() {
        let grid = Grid::<f64>::uniform(9).unwrap();
        assert!(matches!(
            eigendecompose_values(&DMatrix::zeros(9, 9), grid),
            Err(FacdError::InvalidConfig(_))
        ));
    }

    #[test]
    fn memory_cap_bounds_kappa() {
        assert_eq!(memory_cap(1000, 2_000_000), 2000);
        assert_eq!(memory_cap(3_000_000, 2_000_000), 1);
    }

    #[test]
    fn retained_evaluation_interpolates() {
        let grid = Grid::<f64>::uniform(201).unwrap();
        let c = |t: f64| 2f64.sqrt() * (PI * t).cos();
        let mut sys = eigendecompose_values(&tabulate(&grid, |a, b| c(a) * c(b)), grid).unwrap();
        sys.kappa = 1;
        let v = sys.eval_retained(0.3137);
        assert!((v[0].abs() - c(0.3137).abs()).abs() < 1e-4);
    }
}
