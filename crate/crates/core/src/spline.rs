//! Clamped B-spline bases on [0, 1], roughness penalties, and penalized
//! least-squares smoothing (univariate and symmetric tensor-product) with
//! GCV selection of the smoothing parameter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{FacdError, Result};
use crate::scalar::Scalar;

pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_DIMENSION: usize = 10;
pub const GCV_GRID_LEN: usize = 30;
pub const GCV_GRID_MIN: f64 = 1e-8;
pub const GCV_GRID_MAX: f64 = 1e2;

/// Ridge added to singular normal equations.
const FALLBACK_RIDGE: f64 = 1e-10;

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

pub fn default_gcv_grid() -> Vec<f64> {
    log_grid(GCV_GRID_MIN, GCV_GRID_MAX, GCV_GRID_LEN)
}

/// Basis size, order and GCV grid for one family of smoothers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub dimension: usize,
    pub order: usize,
    pub gcv_grid: Vec<f64>,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
            order: DEFAULT_ORDER,
            gcv_grid: default_gcv_grid(),
        }
    }
}

impl SmoothingConfig {
    pub fn basis<T: Scalar>(&self) -> Result<SplineBasis<T>> {
        SplineBasis::new(self.dimension, self.order)
    }

    pub fn grid<T: Scalar>(&self) -> Result<Vec<T>> {
        if let Some(bad) = self.gcv_grid.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(FacdError::InvalidConfig(format!("GCV grid value {bad} is not a nonnegative number")));
        }
        Ok(self.gcv_grid.iter().map(|&v| T::of(v)).collect())
    }
}

/// B-spline basis of a given order with equally spaced interior knots and
/// boundary knots repeated `order` times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct SplineBasis<T: Scalar> {
    order: usize,
    dimension: usize,
    knots: Vec<T>,
}

impl<T: Scalar> SplineBasis<T> {
    pub fn new(dimension: usize, order: usize) -> Result<Self> {
        if order < 2 {
            return Err(FacdError::InvalidConfig(format!(
                "spline order must be at least 2, got {order}"
            )));
        }
        if dimension < order {
            return Err(FacdError::InvalidConfig(format!(
                "spline dimension {dimension} is smaller than its order {order}"
            )));
        }
        let interior = dimension - order;
        let intervals = T::of_usize(interior + 1);
        let mut knots = Vec::with_capacity(dimension + order);
        knots.extend(std::iter::repeat_n(T::zero(), order));
        knots.extend((1..=interior).map(|i| T::of_usize(i) / intervals));
        knots.extend(std::iter::repeat_n(T::one(), order));
        Ok(Self {
            order,
            dimension,
            knots,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[T] {
        &self.knots[self.order..self.dimension]
    }

    fn check_domain(t: T) -> Result<()> {
        if t >= T::zero() && t <= T::one() {
            Ok(())
        } else {
            Err(FacdError::Domain(t.as_f64()))
        }
    }

    /// Knot span `mu` with `knots[mu] <= t < knots[mu + 1]`; the right end
    /// belongs to the last non-empty span.
    fn span(&self, t: T) -> usize {
        let lo = self.order - 1;
        let hi = self.dimension - 1;
        let upto = self.knots[..=hi].partition_point(|&k| k <= t);
        upto.saturating_sub(1).clamp(lo, hi)
    }

    /// Values of the `order` basis functions that can be nonzero at `t`,
    /// together with the index of the first of them.
    pub fn nonzero(&self, t: T) -> Result<(usize, Vec<T>)> {
        Self::check_domain(t)?;
        Ok(self.nonzero_unchecked(t))
    }

    pub(crate) fn nonzero_unchecked(&self, t: T) -> (usize, Vec<T>) {
        let degree = self.order - 1;
        let mu = self.span(t);
        let u = &self.knots;
        let mut n = vec![T::zero(); self.order];
        let mut left = vec![T::zero(); self.order];
        let mut right = vec![T::zero(); self.order];
        n[0] = T::one();
        for j in 1..=degree {
            left[j] = t - u[mu + 1 - j];
            right[j] = u[mu + j] - t;
            let mut saved = T::zero();
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (mu + 1 - self.order, n)
    }

    /// Derivatives of order `0..=nderiv` of the nonzero basis functions at
    /// `t`; `out[k][r]` is the k-th derivative of basis `first + r`.
    pub fn nonzero_derivatives(&self, t: T, nderiv: usize) -> (usize, Vec<Vec<T>>) {
        let p = self.order - 1;
        let mu = self.span(t);
        let u = &self.knots;
        let zero = T::zero();

        let mut ndu = vec![vec![zero; p + 1]; p + 1];
        let mut left = vec![zero; p + 1];
        let mut right = vec![zero; p + 1];
        ndu[0][0] = T::one();
        for j in 1..=p {
            left[j] = t - u[mu + 1 - j];
            right[j] = u[mu + j] - t;
            let mut saved = zero;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![zero; p + 1]; nderiv + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let top = nderiv.min(p);
        let mut a = vec![vec![zero; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = T::one();
            for k in 1..=top {
                let mut d = zero;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if rk >= 0 {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = T::of_usize(p);
        for k in 1..=top {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= T::of_usize(p - k);
        }
        (mu + 1 - self.order, ders)
    }

    /// Full design matrix, one row per point.
    pub fn evaluate(&self, points: &[T]) -> Result<DMatrix<T>> {
        let mut out = DMatrix::zeros(points.len(), self.dimension);
        for (row, &t) in points.iter().enumerate() {
            let (first, vals) = self.nonzero(t)?;
            for (r, v) in vals.into_iter().enumerate() {
                out[(row, first + r)] = v;
            }
        }
        Ok(out)
    }

    /// Value of the spline with the given coefficients; `t` is clamped.
    pub fn eval(&self, coefficients: &[T], t: T) -> T {
        let t = t.max(T::zero()).min(T::one());
        let (first, vals) = self.nonzero_unchecked(t);
        vals.iter()
            .enumerate()
            .fold(T::zero(), |acc, (r, &v)| acc + v * coefficients[first + r])
    }

    /// Value of the tensor-product surface with coefficients laid out as
    /// `c[k * L + l]` for `B_k(t1) B_l(t2)`.
    pub fn eval_surface(&self, coefficients: &[T], t1: T, t2: T) -> T {
        let l = self.dimension;
        let (f1, v1) = self.nonzero_unchecked(t1.max(T::zero()).min(T::one()));
        let (f2, v2) = self.nonzero_unchecked(t2.max(T::zero()).min(T::one()));
        let mut acc = T::zero();
        for (a, &x) in v1.iter().enumerate() {
            for (b, &y) in v2.iter().enumerate() {
                acc += x * y * coefficients[(f1 + a) * l + f2 + b];
            }
        }
        acc
    }

    /// Greville abscissae: the coefficients that reproduce `f(t) = t`.
    pub fn greville(&self) -> Vec<T> {
        let deg = T::of_usize(self.order - 1);
        (0..self.dimension)
            .map(|i| {
                self.knots[i + 1..i + self.order]
                    .iter()
                    .fold(T::zero(), |acc, &k| acc + k)
                    / deg
            })
            .collect()
    }

    /// Gram matrix of the `deriv`-th derivatives, exact up to rounding.
    pub(crate) fn derivative_gram(&self, deriv: usize) -> DMatrix<T> {
        let (nodes, weights) = gauss_legendre(self.order + 1);
        let l = self.dimension;
        let mut gram = DMatrix::zeros(l, l);
        let half = T::of(0.5);
        for mu in (self.order - 1)..self.dimension {
            let (a, b) = (self.knots[mu], self.knots[mu + 1]);
            if b <= a {
                continue;
            }
            let (mid, rad) = ((a + b) * half, (b - a) * half);
            for (&x, &w) in nodes.iter().zip(&weights) {
                let t = mid + rad * T::of(x);
                let (first, ders) = self.nonzero_derivatives(t, deriv);
                let d = &ders[deriv];
                let wt = rad * T::of(w);
                for r in 0..self.order {
                    for s in 0..self.order {
                        gram[(first + r, first + s)] += wt * d[r] * d[s];
                    }
                }
            }
        }
        gram
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] via Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyKind {
    Univariate,
    BivariateSeparable,
}

/// Quadratic roughness penalty on spline coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct RoughnessPenalty<T: Scalar> {
    matrix: DMatrix<T>,
    kind: PenaltyKind,
}

impl<T: Scalar> RoughnessPenalty<T> {
    /// `∫ f''(t)^2 dt`.
    pub fn univariate(basis: &SplineBasis<T>) -> Self {
        Self {
            matrix: symmetrize(basis.derivative_gram(2)),
            kind: PenaltyKind::Univariate,
        }
    }

    /// `∫∫ (∂²f/∂t1²)² + (∂²f/∂t2²)² dt1 dt2` on the tensor-product space.
    pub fn bivariate(basis: &SplineBasis<T>) -> Self {
        let second = basis.derivative_gram(2);
        let mass = basis.derivative_gram(0);
        let m = second.kronecker(&mass) + mass.kronecker(&second);
        Self {
            matrix: symmetrize(m),
            kind: PenaltyKind::BivariateSeparable,
        }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn quadratic_form(&self, coefficients: &[T]) -> T {
        let c = DVector::from_column_slice(coefficients);
        c.dot(&(&self.matrix * &c))
    }
}

fn symmetrize<T: Scalar>(m: DMatrix<T>) -> DMatrix<T> {
    let t = m.transpose();
    (m + t) * T::of(0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct PenalizedFit<T: Scalar> {
    pub coefficients: Vec<T>,
    pub nu: T,
    #[serde(with = "crate::scalar::nonfinite")]
    pub gcv_score: T,
    pub edf: T,
    /// Weighted residual sum of squares.
    pub rss: T,
    pub n_obs: usize,
    /// Whether the ridge fallback was needed to solve the normal equations.
    pub ridged: bool,
}

#[derive(Clone, Debug)]
pub struct GcvSelection<T: Scalar> {
    pub nu: T,
    pub fit: PenalizedFit<T>,
    /// `(nu, gcv)` for every grid point, in grid order.
    pub trace: Vec<(T, T)>,
}

/// Sparse design rows with a fixed number of nonzeros per row.
struct PenalizedProblem<'a, T: Scalar> {
    nnz: usize,
    idx: Vec<usize>,
    val: Vec<T>,
    values: &'a [T],
    weights: &'a [T],
    gram: DMatrix<T>,
    rhs: DVector<T>,
    penalty: &'a DMatrix<T>,
}

impl<'a, T: Scalar> PenalizedProblem<'a, T> {
    fn new(
        ncols: usize,
        nnz: usize,
        idx: Vec<usize>,
        val: Vec<T>,
        values: &'a [T],
        weights: &'a [T],
        penalty: &'a DMatrix<T>,
    ) -> Self {
        let mut gram = DMatrix::zeros(ncols, ncols);
        let mut rhs = DVector::zeros(ncols);
        for row in 0..values.len() {
            let cols = &idx[row * nnz..(row + 1) * nnz];
            let vals = &val[row * nnz..(row + 1) * nnz];
            let w = weights[row];
            for (a, (&ia, &va)) in cols.iter().zip(vals).enumerate() {
                let wv = w * va;
                rhs[ia] += wv * values[row];
                for (&ib, &vb) in cols[a..].iter().zip(&vals[a..]) {
                    gram[(ia, ib)] += wv * vb;
                }
            }
        }
        // Only one triangle was accumulated when the column indices are
        // sorted; mirror whichever side holds the sums.
        for i in 0..ncols {
            for j in (i + 1)..ncols {
                let s = gram[(i, j)] + gram[(j, i)];
                gram[(i, j)] = s;
                gram[(j, i)] = s;
            }
        }
        Self {
            nnz,
            idx,
            val,
            values,
            weights,
            gram,
            rhs,
            penalty,
        }
    }

    fn solve(&self, nu: T) -> Result<PenalizedFit<T>> {
        let a = &self.gram + self.penalty * nu;
        let (chol, ridged) = factor_with_fallback(a)?;
        let coef = chol.solve(&self.rhs);
        let edf = chol.solve(&self.gram).trace();
        let mut rss = T::zero();
        for row in 0..self.values.len() {
            let cols = &self.idx[row * self.nnz..(row + 1) * self.nnz];
            let vals = &self.val[row * self.nnz..(row + 1) * self.nnz];
            let fitted = cols
                .iter()
                .zip(vals)
                .fold(T::zero(), |acc, (&c, &v)| acc + v * coef[c]);
            let r = self.values[row] - fitted;
            rss += self.weights[row] * r * r;
        }
        let n = T::of_usize(self.values.len());
        // edf reaches n only up to rounding when the fit interpolates.
        let gcv_score = if n - edf > n * T::of(1e-8) {
            n * rss / ((n - edf) * (n - edf))
        } else {
            T::one() / T::zero()
        };
        Ok(PenalizedFit {
            coefficients: coef.iter().copied().collect(),
            nu,
            gcv_score,
            edf,
            rss,
            n_obs: self.values.len(),
            ridged,
        })
    }

    fn select(&self, grid: &[T]) -> Result<GcvSelection<T>> {
        if grid.is_empty() {
            return Err(FacdError::InvalidConfig("GCV grid is empty".into()));
        }
        let mut best: Option<PenalizedFit<T>> = None;
        let mut trace = Vec::with_capacity(grid.len());
        for &nu in grid {
            let fit = self.solve(nu)?;
            trace.push((nu, fit.gcv_score));
            if !fit.gcv_score.is_finite() {
                continue;
            }
            if best.as_ref().is_none_or(|b| fit.gcv_score < b.gcv_score) {
                best = Some(fit);
            }
        }
        match best {
            Some(fit) => Ok(GcvSelection {
                nu: fit.nu,
                fit,
                trace,
            }),
            None => Err(FacdError::DegenerateDesign(format!(
                "every GCV grid value leaves at least as many effective parameters as the {} observations",
                self.values.len()
            ))),
        }
    }
}

fn factor_with_fallback<T: Scalar>(a: DMatrix<T>) -> Result<(Cholesky<T, Dyn>, bool)> {
    let n = a.nrows();
    let max_diag = (0..n).fold(T::zero(), |m, i| m.max(a[(i, i)].abs()));
    let well_posed = |c: &Cholesky<T, Dyn>| {
        let l = c.l_dirty();
        let min_pivot = (0..n).fold(T::max_value().unwrap_or(T::one()), |m, i| {
            m.min(l[(i, i)] * l[(i, i)])
        });
        min_pivot > max_diag * T::eps() * T::of_usize(n)
    };
    if let Some(c) = Cholesky::new(a.clone()) {
        if well_posed(&c) {
            return Ok((c, false));
        }
    }
    // Single precision cannot resolve an absolute 1e-10 shift on large
    // diagonals.
    let ridge = if T::eps() > T::of(1e-10) {
        T::of(FALLBACK_RIDGE).max(max_diag * T::eps() * T::of(10.0))
    } else {
        T::of(FALLBACK_RIDGE)
    };
    let mut shifted = a;
    for i in 0..n {
        shifted[(i, i)] += ridge;
    }
    Cholesky::new(shifted)
        .map(|c| (c, true))
        .ok_or_else(|| FacdError::Numerical("penalized normal equations are not positive definite".into()))
}

fn check_inputs<T: Scalar>(n_points: usize, values: &[T], weights: &[T], nu: Option<T>) -> Result<()> {
    if n_points == 0 {
        return Err(FacdError::InvalidInput("no observations to fit".into()));
    }
    if values.len() != n_points || weights.len() != n_points {
        return Err(FacdError::InvalidInput(format!(
            "{} points, {} values and {} weights",
            n_points,
            values.len(),
            weights.len()
        )));
    }
    if let Some(bad) = weights.iter().find(|w| !(**w > T::zero() && w.is_finite())) {
        return Err(FacdError::InvalidInput(format!("weight {bad} is not positive")));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(FacdError::InvalidInput(format!("value {bad} is not finite")));
    }
    if let Some(nu) = nu {
        if !(nu >= T::zero()) {
            return Err(FacdError::InvalidInput(format!("smoothing parameter {nu} is negative")));
        }
    }
    Ok(())
}

fn univariate_problem<'a, T: Scalar>(
    basis: &SplineBasis<T>,
    penalty: &'a RoughnessPenalty<T>,
    times: &[T],
    values: &'a [T],
    weights: &'a [T],
) -> Result<PenalizedProblem<'a, T>> {
    if penalty.kind != PenaltyKind::Univariate || penalty.matrix.nrows() != basis.dimension() {
        return Err(FacdError::InvalidInput("penalty does not match a univariate basis".into()));
    }
    let z = basis.order();
    let mut idx = Vec::with_capacity(times.len() * z);
    let mut val = Vec::with_capacity(times.len() * z);
    for &t in times {
        let (first, v) = basis.nonzero(t)?;
        idx.extend(first..first + z);
        val.extend(v);
    }
    Ok(PenalizedProblem::new(
        basis.dimension(),
        z,
        idx,
        val,
        values,
        weights,
        penalty.matrix(),
    ))
}

/// Weighted penalized least squares on the univariate spline space.
pub fn fit_penalized<T: Scalar>(
    basis: &SplineBasis<T>,
    penalty: &RoughnessPenalty<T>,
    times: &[T],
    values: &[T],
    weights: &[T],
    nu: T,
) -> Result<PenalizedFit<T>> {
    check_inputs(times.len(), values, weights, Some(nu))?;
    univariate_problem(basis, penalty, times, values, weights)?.solve(nu)
}

/// Picks the grid value minimizing `n * RSS / (n - edf)^2`; ties go to the
/// earlier grid entry.
pub fn select_nu_gcv<T: Scalar>(
    basis: &SplineBasis<T>,
    penalty: &RoughnessPenalty<T>,
    times: &[T],
    values: &[T],
    weights: &[T],
    grid: &[T],
) -> Result<GcvSelection<T>> {
    check_inputs(times.len(), values, weights, None)?;
    univariate_problem(basis, penalty, times, values, weights)?.select(grid)
}

/// Symmetric tensor-product inputs: each `(t1, t2, v)` enters the objective
/// as the pair of mirrored points `(t1, t2)` and `(t2, t1)` with half weight.
struct MirroredData<T: Scalar> {
    idx: Vec<usize>,
    val: Vec<T>,
    values: Vec<T>,
    weights: Vec<T>,
}

fn mirrored_data<T: Scalar>(
    basis: &SplineBasis<T>,
    points: &[(T, T)],
    values: &[T],
    weights: &[T],
) -> Result<MirroredData<T>> {
    let z = basis.order();
    let l = basis.dimension();
    let nnz = z * z;
    let half = T::of(0.5);
    let n = points.len() * 2;
    let mut idx = Vec::with_capacity(n * nnz);
    let mut val = Vec::with_capacity(n * nnz);
    let mut vs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for (k, &(t1, t2)) in points.iter().enumerate() {
        let (f1, v1) = basis.nonzero(t1)?;
        let (f2, v2) = basis.nonzero(t2)?;
        for (fa, va, fb, vb) in [(f1, &v1, f2, &v2), (f2, &v2, f1, &v1)] {
            for (a, &x) in va.iter().enumerate() {
                for (b, &y) in vb.iter().enumerate() {
                    idx.push((fa + a) * l + fb + b);
                    val.push(x * y);
                }
            }
            vs.push(values[k]);
            ws.push(weights[k] * half);
        }
    }
    Ok(MirroredData {
        idx,
        val,
        values: vs,
        weights: ws,
    })
}

fn bivariate_check<T: Scalar>(basis: &SplineBasis<T>, penalty: &RoughnessPenalty<T>) -> Result<()> {
    let l = basis.dimension();
    if penalty.kind != PenaltyKind::BivariateSeparable || penalty.matrix.nrows() != l * l {
        return Err(FacdError::InvalidInput("penalty does not match a tensor-product basis".into()));
    }
    Ok(())
}

fn symmetrize_surface<T: Scalar>(mut fit: PenalizedFit<T>, l: usize) -> PenalizedFit<T> {
    let half = T::of(0.5);
    for k in 0..l {
        for m in (k + 1)..l {
            let avg = (fit.coefficients[k * l + m] + fit.coefficients[m * l + k]) * half;
            fit.coefficients[k * l + m] = avg;
            fit.coefficients[m * l + k] = avg;
        }
    }
    fit
}

/// Weighted penalized least squares on the tensor-product space; the fitted
/// surface is symmetric in its two arguments.
pub fn fit_penalized_bivariate<T: Scalar>(
    basis: &SplineBasis<T>,
    penalty: &RoughnessPenalty<T>,
    points: &[(T, T)],
    values: &[T],
    weights: &[T],
    nu: T,
) -> Result<PenalizedFit<T>> {
    check_inputs(points.len(), values, weights, Some(nu))?;
    bivariate_check(basis, penalty)?;
    let m = mirrored_data(basis, points, values, weights)?;
    let l = basis.dimension();
    let z = basis.order();
    let problem = PenalizedProblem::new(l * l, z * z, m.idx, m.val, &m.values, &m.weights, penalty.matrix());
    Ok(symmetrize_surface(problem.solve(nu)?, l))
}

pub fn select_nu_gcv_bivariate<T: Scalar>(
    basis: &SplineBasis<T>,
    penalty: &RoughnessPenalty<T>,
    points: &[(T, T)],
    values: &[T],
    weights: &[T],
    grid: &[T],
) -> Result<GcvSelection<T>> {
    check_inputs(points.len(), values, weights, None)?;
    bivariate_check(basis, penalty)?;
    let m = mirrored_data(basis, points, values, weights)?;
    let l = basis.dimension();
    let z = basis.order();
    let problem = PenalizedProblem::new(l * l, z * z, m.idx, m.val, &m.values, &m.weights, penalty.matrix());
    let mut sel = problem.select(grid)?;
    sel.fit = symmetrize_surface(sel.fit, l);
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook recursive Cox–de Boor evaluation, independent of the
    /// triangular scheme used by the basis.
    fn cox_de_boor(knots: &[f64], i: usize, k: usize, t: f64, last: usize) -> f64 {
        if k == 1 {
            let (a, b) = (knots[i], knots[i + 1]);
            if (a <= t && t < b) || (t == 1.0 && i == last) {
                return 1.0;
            }
            return 0.0;
        }
        let mut out = 0.0;
        let d1 = knots[i + k - 1] - knots[i];
        if d1 > 0.0 {
            out += (t - knots[i]) / d1 * cox_de_boor(knots, i, k - 1, t, last);
        }
        let d2 = knots[i + k] - knots[i + 1];
        if d2 > 0.0 {
            out += (knots[i + k] - t) / d2 * cox_de_boor(knots, i + 1, k - 1, t, last);
        }
        out
    }

    fn oracle_row(basis: &SplineBasis<f64>, t: f64) -> Vec<f64> {
        // index of the last non-degenerate order-1 interval
        let last = basis.dimension() - 1;
        (0..basis.dimension())
            .map(|i| cox_de_boor(basis.knots(), i, basis.order(), t, last))
            .collect()
    }

    #[test]
    fn rejects_dimension_below_order() {
        assert!(matches!(SplineBasis::<f64>::new(3, 4), Err(FacdError::InvalidConfig(_))));
        assert!(SplineBasis::<f64>::new(4, 4).is_ok());
    }

    #[test]
    fn single_interval_cubic_interpolates_the_left_end() {
        let b = SplineBasis::<f64>::new(4, 4).unwrap();
        let row = b.evaluate(&[0.0]).unwrap();
        assert_eq!(row.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        assert!(b.interior_knots().is_empty());
    }

    #[test]
    fn clamped_ends() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let m = b.evaluate(&[0.0, 1.0]).unwrap();
        for l in 0..10 {
            assert_eq!(m[(0, l)], if l == 0 { 1.0 } else { 0.0 });
            assert_eq!(m[(1, l)], if l == 9 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn dimension_counts_interior_knots() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        assert_eq!(b.interior_knots().len(), 6);
        assert_eq!(b.knots().len(), 14);
        let sum: f64 = b.evaluate(&[0.37]).unwrap().row(0).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_cox_de_boor_oracle() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        for &t in &[0.0, 0.25, 0.5, 0.61, 0.999, 1.0] {
            let row = b.evaluate(&[t]).unwrap();
            let oracle = oracle_row(&b, t);
            for l in 0..10 {
                assert!((row[(0, l)] - oracle[l]).abs() < 1e-12, "t={t} l={l}");
            }
        }
        for order in 2..=6 {
            let b = SplineBasis::<f64>::new(order + 5, order).unwrap();
            for &t in &[0.1, 0.33, 0.8] {
                let row = b.evaluate(&[t]).unwrap();
                let oracle = oracle_row(&b, t);
                for l in 0..b.dimension() {
                    assert!((row[(0, l)] - oracle[l]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = SplineBasis::<f64>::new(9, 4).unwrap();
        let h = 1e-5;
        for &t in &[0.11, 0.42, 0.73] {
            let (first, ders) = b.nonzero_derivatives(t, 2);
            let (f_lo, lo) = b.nonzero_unchecked(t - h);
            let (f_hi, hi) = b.nonzero_unchecked(t + h);
            let (f_mid, mid) = b.nonzero_unchecked(t);
            assert_eq!((first, f_lo, f_hi), (f_mid, f_mid, f_mid));
            for r in 0..4 {
                let d1 = (hi[r] - lo[r]) / (2.0 * h);
                let d2 = (hi[r] - 2.0 * mid[r] + lo[r]) / (h * h);
                assert!((ders[0][r] - mid[r]).abs() < 1e-14);
                assert!((ders[1][r] - d1).abs() < 1e-6);
                assert!((ders[2][r] - d2).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn outside_domain_is_an_error() {
        let b = SplineBasis::<f64>::new(6, 4).unwrap();
        assert!(matches!(b.evaluate(&[1.2]), Err(FacdError::Domain(_))));
        assert!(matches!(b.evaluate(&[-1e-9]), Err(FacdError::Domain(_))));
    }

    #[test]
    fn penalty_is_symmetric_and_kills_lines() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let m = p.matrix();
        for i in 0..10 {
            for j in 0..10 {
                assert!((m[(i, j)] - m[(j, i)]).abs() < 1e-10);
            }
        }
        let ones = vec![1.0; 10];
        assert!(p.quadratic_form(&ones).abs() < 1e-8);
        let g = b.greville();
        let line: Vec<f64> = g.iter().map(|x| 2.0 - 3.0 * x).collect();
        assert!(p.quadratic_form(&line).abs() < 1e-8);
    }

    #[test]
    fn penalty_of_a_parabola_is_four() {
        // t^2 lies in the cubic spline space; recover its coefficients by
        // interpolation and evaluate the penalty: ∫ (2)^2 = 4.
        let b = SplineBasis::<f64>::new(8, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let ts: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let ys: Vec<f64> = ts.iter().map(|t| t * t).collect();
        let w = vec![1.0; ts.len()];
        let fit = fit_penalized(&b, &p, &ts, &ys, &w, 0.0).unwrap();
        assert!((p.quadratic_form(&fit.coefficients) - 4.0).abs() < 1e-8);
    }

    #[test]
    fn bivariate_penalty_kills_bilinear_surfaces() {
        let b = SplineBasis::<f64>::new(6, 4).unwrap();
        let p = RoughnessPenalty::bivariate(&b);
        let g = b.greville();
        let l = 6;
        let c: Vec<f64> = (0..l * l)
            .map(|i| {
                let (x, y) = (g[i / l], g[i % l]);
                1.0 + 2.0 * x - y + 0.5 * x * y
            })
            .collect();
        assert!(p.quadratic_form(&c).abs() < 1e-8);
    }

    #[test]
    fn constants_are_reproduced_for_any_nu() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ts: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        let ys = vec![2.5; 30];
        let ws: Vec<f64> = (0..30).map(|_| rng.random_range(0.5..2.0)).collect();
        for nu in [0.0, 1e-4, 1.0, 1e2, 1e4] {
            let fit = fit_penalized(&b, &p, &ts, &ys, &ws, nu).unwrap();
            for k in 0..=20 {
                let t = k as f64 / 20.0;
                // rounding in the penalty's null space leaks in proportion to nu
                let tol = 1e-10 * nu.max(1.0);
                assert!((b.eval(&fit.coefficients, t) - 2.5).abs() < tol, "nu={nu}");
            }
        }
    }

    #[test]
    fn unpenalized_fit_matches_normal_equations_oracle() {
        let b = SplineBasis::<f64>::new(7, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ts: Vec<f64> = (0..60).map(|_| rng.random()).collect();
        let ys: Vec<f64> = ts.iter().map(|t| (5.0 * t).sin() + rng.random_range(-0.1..0.1)).collect();
        let ws: Vec<f64> = (0..60).map(|_| rng.random_range(0.2..1.0)).collect();
        let fit = fit_penalized(&b, &p, &ts, &ys, &ws, 0.0).unwrap();

        // Independent oracle: dense design, weighted normal equations, LU.
        let x = DMatrix::from_fn(60, 7, |i, j| oracle_row(&b, ts[i])[j]);
        let w = DMatrix::from_diagonal(&DVector::from_vec(ws.clone()));
        let lhs = x.transpose() * &w * &x;
        let rhs = x.transpose() * &w * DVector::from_vec(ys.clone());
        let c = lhs.lu().solve(&rhs).unwrap();
        for j in 0..7 {
            assert!((fit.coefficients[j] - c[j]).abs() < 1e-8);
        }
        assert!(!fit.ridged);
    }

    #[test]
    fn spline_space_data_is_reproduced_without_penalty() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let truth: Vec<f64> = (0..10).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ts: Vec<f64> = (0..80).map(|_| rng.random()).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| b.eval(&truth, t)).collect();
        let ws = vec![1.0 / 80.0; 80];
        let fit = fit_penalized(&b, &p, &ts, &ys, &ws, 0.0).unwrap();
        for (&t, &y) in ts.iter().zip(&ys) {
            assert!((b.eval(&fit.coefficients, t) - y).abs() < 1e-8);
        }
    }

    #[test]
    fn rank_deficient_design_falls_back_to_ridge() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let fit = fit_penalized(&b, &p, &[0.2, 0.5], &[1.0, 2.0], &[1.0, 1.0], 0.0).unwrap();
        assert!(fit.ridged);
        assert!(fit.coefficients.iter().all(|c| c.is_finite()));
        assert!(matches!(
            fit_penalized(&b, &p, &[], &[], &[], 0.0),
            Err(FacdError::InvalidInput(_))
        ));
    }

    #[test]
    fn huge_penalty_gives_the_weighted_linear_fit() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ts: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let ys: Vec<f64> = ts.iter().map(|t| (6.0 * t).cos() + t).collect();
        let ws = vec![1.0; 50];
        let fit = fit_penalized(&b, &p, &ts, &ys, &ws, 1e6).unwrap();
        // ordinary least-squares line
        let n = 50.0;
        let (sx, sy) = (ts.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxx: f64 = ts.iter().map(|t| t * t).sum();
        let sxy: f64 = ts.iter().zip(&ys).map(|(t, y)| t * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icpt = (sy - slope * sx) / n;
        for &t in &ts {
            assert!((b.eval(&fit.coefficients, t) - (icpt + slope * t)).abs() < 1e-4);
        }
    }

    #[test]
    fn residual_norm_grows_with_nu() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ts: Vec<f64> = (0..70).map(|_| rng.random()).collect();
        let ys: Vec<f64> = ts.iter().map(|t| (9.0 * t).sin() + rng.random_range(-0.3..0.3)).collect();
        let ws = vec![1.0 / 70.0; 70];
        let mut prev = -1.0;
        for nu in log_grid(1e-8, 1e2, 15) {
            let fit = fit_penalized(&b, &p, &ts, &ys, &ws, nu).unwrap();
            assert!(fit.rss >= prev - 1e-15);
            prev = fit.rss;
        }
    }

    #[test]
    fn fitted_coefficients_are_a_local_minimum() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ts: Vec<f64> = (0..40).map(|_| rng.random()).collect();
        let ys: Vec<f64> = ts.iter().map(|t| t * t + rng.random_range(-0.2..0.2)).collect();
        let ws: Vec<f64> = (0..40).map(|_| rng.random_range(0.1..1.0)).collect();
        let nu = 1e-3;
        let fit = fit_penalized(&b, &p, &ts, &ys, &ws, nu).unwrap();
        let objective = |c: &[f64]| {
            let data: f64 = ts
                .iter()
                .zip(&ys)
                .zip(&ws)
                .map(|((&t, &y), &w)| w * (y - b.eval(c, t)).powi(2))
                .sum();
            data + nu * p.quadratic_form(c)
        };
        let best = objective(&fit.coefficients);
        for _ in 0..50 {
            let c: Vec<f64> = fit.coefficients.iter().map(|c| c + rng.random_range(-1e-3..1e-3)).collect();
            assert!(best <= objective(&c));
        }
    }

    #[test]
    fn gcv_single_grid_point() {
        let b = SplineBasis::<f64>::new(6, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let ts: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let ys: Vec<f64> = ts.iter().map(|t| t.sin()).collect();
        let ws = vec![1.0; 20];
        let sel = select_nu_gcv(&b, &p, &ts, &ys, &ws, &[0.3]).unwrap();
        assert_eq!(sel.nu, 0.3);
        assert!(matches!(
            select_nu_gcv(&b, &p, &ts, &ys, &ws, &[]),
            Err(FacdError::InvalidConfig(_))
        ));
    }

    #[test]
    fn gcv_prefers_least_smoothing_on_noiseless_spline_data() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let truth: Vec<f64> = vec![0.0, 1.5, -1.0, 2.0, 0.5, -2.0, 1.0, 0.0, 2.5, -0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ts: Vec<f64> = (0..120).map(|_| rng.random()).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| b.eval(&truth, t)).collect();
        let ws = vec![1.0 / 120.0; 120];
        let grid = default_gcv_grid();
        let sel = select_nu_gcv(&b, &p, &ts, &ys, &ws, &grid).unwrap();
        // exhaustive evaluation
        let scores: Vec<f64> = grid
            .iter()
            .map(|&nu| fit_penalized(&b, &p, &ts, &ys, &ws, nu).unwrap().gcv_score)
            .collect();
        let argmin = scores
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmin, 0);
        assert_eq!(sel.nu, grid[0]);
    }

    #[test]
    fn gcv_beats_interpolation_on_noisy_constants() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let grid = default_gcv_grid();
        let probe: Vec<f64> = (0..=50).map(|k| k as f64 / 50.0).collect();
        let error = |c: &[f64]| probe.iter().map(|&t| (b.eval(c, t) - 1.0).powi(2)).sum::<f64>();
        let mut wins = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let normal = rand_distr::Normal::new(0.0, 3.0).unwrap();
            let ts: Vec<f64> = (0..100).map(|_| rng.random()).collect();
            let ys: Vec<f64> = (0..100).map(|_| 1.0 + rng.sample(normal)).collect();
            let ws = vec![0.01; 100];
            let sel = select_nu_gcv(&b, &p, &ts, &ys, &ws, &grid).unwrap();
            let rough = fit_penalized(&b, &p, &ts, &ys, &ws, grid[0]).unwrap();
            if error(&sel.fit.coefficients) <= error(&rough.coefficients) {
                wins += 1;
            }
        }
        assert!(wins >= 90, "GCV fit beat the roughest fit in only {wins}/100 replicates");
    }

    #[test]
    fn gcv_is_deterministic() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ts: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let ys: Vec<f64> = ts.iter().map(|t| (4.0 * t).sin() + rng.random_range(-0.5..0.5)).collect();
        let ws = vec![1.0; 50];
        let grid = default_gcv_grid();
        let a = select_nu_gcv(&b, &p, &ts, &ys, &ws, &grid).unwrap();
        let c = select_nu_gcv(&b, &p, &ts, &ys, &ws, &grid).unwrap();
        assert_eq!(a.nu.to_bits(), c.nu.to_bits());
        assert_eq!(a.fit, c.fit);
    }

    #[test]
    fn gcv_degenerate_design_is_reported() {
        let b = SplineBasis::<f64>::new(10, 4).unwrap();
        let p = RoughnessPenalty::univariate(&b);
        let err = select_nu_gcv(&b, &p, &[0.1, 0.9], &[1.0, 3.0], &[1.0, 1.0], &[1e-8]).unwrap_err();
        assert!(matches!(err, FacdError::DegenerateDesign(_)));
    }

    fn bivariate_setup(l: usize) -> (SplineBasis<f64>, RoughnessPenalty<f64>) {
        let b = SplineBasis::<f64>::new(l, 4).unwrap();
        let p = RoughnessPenalty::bivariate(&b);
        (b, p)
    }

    #[test]
    fn bivariate_constant_surface() {
        let (b, p) = bivariate_setup(6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<(f64, f64)> = (0..80).map(|_| (rng.random(), rng.random())).collect();
        let vs = vec![-1.25; 80];
        let ws = vec![1.0; 80];
        let fit = fit_penalized_bivariate(&b, &p, &pts, &vs, &ws, 1e-3).unwrap();
        for i in 0..=10 {
            for j in 0..=10 {
                let v = b.eval_surface(&fit.coefficients, i as f64 / 10.0, j as f64 / 10.0);
                assert!((v + 1.25).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn bivariate_reproduces_separable_spline_truth() {
        let (b, p) = bivariate_setup(6);
        let g = [0.3, -1.0, 2.0, 0.5, 1.0, -0.7];
        let f = |t: f64| b.eval(&g, t);
        let n = 25;
        let pts: Vec<(f64, f64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64)))
            .collect();
        let vs: Vec<f64> = pts.iter().map(|&(x, y)| f(x) * f(y)).collect();
        let ws = vec![1.0; pts.len()];
        let fit = fit_penalized_bivariate(&b, &p, &pts, &vs, &ws, 0.0).unwrap();
        for (&(x, y), &v) in pts.iter().zip(&vs) {
            assert!((b.eval_surface(&fit.coefficients, x, y) - v).abs() < 1e-6);
        }
    }

    #[test]
    fn bivariate_fit_is_symmetric() {
        let (b, p) = bivariate_setup(7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pts = Vec::new();
        let mut vs = Vec::new();
        for _ in 0..60 {
            let (x, y): (f64, f64) = (rng.random(), rng.random());
            let v = (3.0 * x).sin() * (3.0 * y).sin() + x + y + rng.random_range(-0.1..0.1);
            pts.push((x, y));
            vs.push(v);
            pts.push((y, x));
            vs.push(v);
        }
        let ws = vec![1.0; pts.len()];
        let fit = fit_penalized_bivariate(&b, &p, &pts, &vs, &ws, 1e-4).unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let (x, y) = (i as f64 / 20.0, j as f64 / 20.0);
                let d = b.eval_surface(&fit.coefficients, x, y) - b.eval_surface(&fit.coefficients, y, x);
                assert!(d.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn f32_basis_is_a_partition_of_unity() {
        let b = SplineBasis::<f32>::new(10, 4).unwrap();
        let m = b.evaluate(&[0.0, 0.3, 0.71, 1.0]).unwrap();
        for r in 0..4 {
            assert!((m.row(r).sum() - 1.0).abs() < 1e-6);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partition_of_unity(t in 0.0f64..=1.0, extra in 0usize..8, order in 2usize..6) {
                let b = SplineBasis::<f64>::new(order + extra, order).unwrap();
                let row = b.evaluate(&[t]).unwrap();
                prop_assert!((row.row(0).sum() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }

            #[test]
            fn local_support(t in 0.0f64..=1.0) {
                let b = SplineBasis::<f64>::new(12, 4).unwrap();
                let row = b.evaluate(&[t]).unwrap();
                let nz: Vec<usize> = (0..12).filter(|&l| row[(0, l)] != 0.0).collect();
                prop_assert!(nz.len() <= 4);
                if let (Some(a), Some(z)) = (nz.first(), nz.last()) {
                    prop_assert!(z - a < 4);
                }
            }
        }
    }
}
