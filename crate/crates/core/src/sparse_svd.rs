//! Group-sparse rank-one factorization of a cross-covariance operator,
//! deflation, and cross-validated choice of the two sparsity levels.

use nalgebra::{DMatrix, DVector, SVD};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FacdError, Result};
use crate::scalar::Scalar;
use crate::spline::log_grid;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_RHO_GRID_LEN: usize = 8;
pub const RHO_GRID_MIN: f64 = 1e-4;
pub const RHO_GRID_MAX: f64 = 1.0;

const LANCZOS_STEPS: usize = 50;

/// Linear operator view of a (possibly implicit) cross-covariance matrix.
pub trait CrossCovOperator<T: Scalar>: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `Γ b`.
    fn apply(&self, b: &DVector<T>) -> DVector<T>;
    /// `Γᵀ a`.
    fn apply_t(&self, a: &DVector<T>) -> DVector<T>;
    fn frobenius_sq(&self) -> T;
    fn row_norms_sq(&self) -> Vec<T>;
    fn col_norms_sq(&self) -> Vec<T>;
}

impl<T: Scalar> CrossCovOperator<T> for DMatrix<T> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, b: &DVector<T>) -> DVector<T> {
        self * b
    }

    fn apply_t(&self, a: &DVector<T>) -> DVector<T> {
        self.tr_mul(a)
    }

    fn frobenius_sq(&self) -> T {
        self.norm_squared()
    }

    fn row_norms_sq(&self) -> Vec<T> {
        self.row_iter().map(|r| r.norm_squared()).collect()
    }

    fn col_norms_sq(&self) -> Vec<T> {
        self.column_iter().map(|c| c.norm_squared()).collect()
    }
}

/// A removed rank-one term `eta a bᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct DeflationTerm<T: Scalar> {
    pub eta: T,
    pub a: DVector<T>,
    pub b: DVector<T>,
}

/// `(1/m) Σ_i left_i right_iᵀ - Σ_r eta_r a_r b_rᵀ` over `m` subjects,
/// never formed densely.
#[derive(Clone, Debug)]
pub struct FactoredOperator<T: Scalar> {
    left: DMatrix<T>,
    right: DMatrix<T>,
    inv_m: T,
    terms: Vec<DeflationTerm<T>>,
    base_frob_sq: T,
    frob_sq: T,
}

impl<T: Scalar> FactoredOperator<T> {
    pub fn new(left: DMatrix<T>, right: DMatrix<T>) -> Self {
        assert_eq!(left.nrows(), right.nrows(), "factor row counts differ");
        let m = left.nrows();
        let inv_m = if m == 0 { T::zero() } else { T::one() / T::of_usize(m) };
        let gl = &left * left.transpose();
        let gr = &right * right.transpose();
        let base = gl.component_mul(&gr).sum() * inv_m * inv_m;
        Self {
            left,
            right,
            inv_m,
            terms: Vec::new(),
            base_frob_sq: base,
            frob_sq: base,
        }
    }

    /// Operator over the subjects in `rows`, carrying the given deflation.
    pub fn from_rows(left: &DMatrix<T>, right: &DMatrix<T>, rows: &[usize], terms: &[DeflationTerm<T>]) -> Self {
        let l = left.select_rows(rows);
        let r = right.select_rows(rows);
        let mut op = Self::new(l, r);
        for t in terms {
            op.push_term(t.clone());
        }
        op
    }

    pub fn terms(&self) -> &[DeflationTerm<T>] {
        &self.terms
    }

    pub fn deflate(&mut self, triple: &SingularTriple<T>) {
        self.push_term(triple.as_term());
    }

    fn push_term(&mut self, term: DeflationTerm<T>) {
        self.terms.push(term);
        let mut f = self.base_frob_sq;
        for (r, t) in self.terms.iter().enumerate() {
            f -= T::of(2.0) * t.eta * self.base_bilinear(&t.a, &t.b);
            for s in &self.terms[..r] {
                f += T::of(2.0) * t.eta * s.eta * t.a.dot(&s.a) * t.b.dot(&s.b);
            }
            f += t.eta * t.eta * t.a.norm_squared() * t.b.norm_squared();
        }
        self.frob_sq = f.max(T::zero());
    }

    fn base_bilinear(&self, a: &DVector<T>, b: &DVector<T>) -> T {
        (&self.left * a).dot(&(&self.right * b)) * self.inv_m
    }

    fn base_apply(&self, b: &DVector<T>) -> DVector<T> {
        self.left.tr_mul(&(&self.right * b)) * self.inv_m
    }

    fn base_apply_t(&self, a: &DVector<T>) -> DVector<T> {
        self.right.tr_mul(&(&self.left * a)) * self.inv_m
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut d = self.left.transpose() * &self.right * self.inv_m;
        for t in &self.terms {
            d -= &t.a * t.b.transpose() * t.eta;
        }
        d
    }

    /// Diagonal of `Γ Γᵀ` with `Γ = base - Σ eta a bᵀ`, where `own`/`other`
    /// are the factors on the output/contracted side.
    fn side_norms(
        &self,
        own: &DMatrix<T>,
        other: &DMatrix<T>,
        own_vec: impl Fn(&DeflationTerm<T>) -> &DVector<T>,
        other_vec: impl Fn(&DeflationTerm<T>) -> &DVector<T>,
        base_apply: impl Fn(&DVector<T>) -> DVector<T>,
    ) -> Vec<T> {
        let g = other * other.transpose();
        let t = &g * own;
        let scale = self.inv_m * self.inv_m;
        let mut out: Vec<T> = (0..own.ncols())
            .map(|u| own.column(u).dot(&t.column(u)) * scale)
            .collect();
        for tr in &self.terms {
            let gb = base_apply(other_vec(tr));
            let ar = own_vec(tr);
            for (u, o) in out.iter_mut().enumerate() {
                *o -= T::of(2.0) * tr.eta * gb[u] * ar[u];
            }
            for ts in &self.terms {
                let c = tr.eta * ts.eta * other_vec(tr).dot(other_vec(ts));
                let as_ = own_vec(ts);
                for (u, o) in out.iter_mut().enumerate() {
                    *o += c * ar[u] * as_[u];
                }
            }
        }
        out.into_iter().map(|v| v.max(T::zero())).collect()
    }
}

impl<T: Scalar> CrossCovOperator<T> for FactoredOperator<T> {
    fn nrows(&self) -> usize {
        self.left.ncols()
    }

    fn ncols(&self) -> usize {
        self.right.ncols()
    }

    fn apply(&self, b: &DVector<T>) -> DVector<T> {
        let mut out = self.base_apply(b);
        for t in &self.terms {
            out.axpy(-t.eta * t.b.dot(b), &t.a, T::one());
        }
        out
    }

    fn apply_t(&self, a: &DVector<T>) -> DVector<T> {
        let mut out = self.base_apply_t(a);
        for t in &self.terms {
            out.axpy(-t.eta * t.a.dot(a), &t.b, T::one());
        }
        out
    }

    fn frobenius_sq(&self) -> T {
        self.frob_sq
    }

    fn row_norms_sq(&self) -> Vec<T> {
        self.side_norms(&self.left, &self.right, |t| &t.a, |t| &t.b, |b| self.base_apply(b))
    }

    fn col_norms_sq(&self) -> Vec<T> {
        self.side_norms(&self.right, &self.left, |t| &t.b, |t| &t.a, |a| self.base_apply_t(a))
    }
}

/// Group structure of a stacked loading vector: entry `k * n_features + j`
/// belongs to feature `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupLayout {
    pub n_features: usize,
    pub kappa: usize,
}

impl GroupLayout {
    pub fn new(n_features: usize, kappa: usize) -> Self {
        Self { n_features, kappa }
    }

    pub fn len(&self) -> usize {
        self.n_features * self.kappa
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group_norms_sq<T: Scalar>(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_features];
        for (i, &x) in v.iter().enumerate() {
            out[i % self.n_features] += x * x;
        }
        out
    }

    /// Features whose group is not exactly zero.
    pub fn support<T: Scalar>(&self, v: &[T]) -> Vec<usize> {
        self.group_norms_sq(v)
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > T::zero())
            .map(|(j, _)| j)
            .collect()
    }

    /// Largest group norm of the blocks of a vector of per-entry squared
    /// norms (row or column norms of an operator).
    pub fn max_group_norm<T: Scalar>(&self, entry_norms_sq: &[T]) -> T {
        let mut groups = vec![T::zero(); self.n_features];
        for (i, &x) in entry_norms_sq.iter().enumerate() {
            groups[i % self.n_features] += x;
        }
        groups.into_iter().fold(T::zero(), |m, v| m.max(v)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rank1Options {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Rank1Options {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct SingularTriple<T: Scalar> {
    pub eta: T,
    pub a: DVector<T>,
    pub b: DVector<T>,
    pub support_x: Vec<usize>,
    pub support_y: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest observed increase of the penalized objective between
    /// iterations; zero for a monotone run.
    pub max_objective_increase: T,
    pub warning: Option<String>,
}

impl<T: Scalar> SingularTriple<T> {
    pub fn zero(nrows: usize, ncols: usize, warning: Option<String>) -> Self {
        Self {
            eta: T::zero(),
            a: DVector::zeros(nrows),
            b: DVector::zeros(ncols),
            support_x: Vec::new(),
            support_y: Vec::new(),
            iterations: 0,
            converged: true,
            max_objective_increase: T::zero(),
            warning,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.eta == T::zero() && self.a.iter().all(|v| *v == T::zero())
    }

    pub fn as_term(&self) -> DeflationTerm<T> {
        DeflationTerm {
            eta: self.eta,
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }

    pub fn flip(&mut self) {
        self.a.neg_mut();
        self.b.neg_mut();
    }
}

/// Leading singular pair estimate used to start the alternation.
#[derive(Clone, Debug, PartialEq)]
pub struct Rank1Init<T: Scalar> {
    pub a: DVector<T>,
    pub b: DVector<T>,
    pub sigma: T,
}

fn orthogonalize<T: Scalar>(w: &mut DVector<T>, basis: &[DVector<T>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(w);
            w.axpy(-c, q, T::one());
        }
    }
}

/// Golub–Kahan–Lanczos bidiagonalization with full reorthogonalization,
/// started at the largest-norm row. `None` for a zero operator.
pub fn lanczos_init<T: Scalar, O: CrossCovOperator<T> + ?Sized>(op: &O) -> Option<Rank1Init<T>> {
    let (nr, nc) = (op.nrows(), op.ncols());
    if nr == 0 || nc == 0 {
        return None;
    }
    let norms = op.row_norms_sq();
    let (u_star, top) = norms
        .iter()
        .enumerate()
        .fold((0, T::zero()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    if top <= T::zero() {
        return None;
    }
    let mut e = DVector::zeros(nr);
    e[u_star] = T::one();
    let mut v = op.apply_t(&e);
    let vn = v.norm();
    if !(vn > T::zero()) {
        return None;
    }
    v /= vn;

    let steps = LANCZOS_STEPS.min(nr).min(nc);
    let scale = op.frobenius_sq().sqrt();
    let tiny = scale * T::eps() * T::of(16.0);
    let mut us: Vec<DVector<T>> = Vec::with_capacity(steps);
    let mut vs: Vec<DVector<T>> = vec![v];
    let mut alphas: Vec<T> = Vec::with_capacity(steps);
    let mut betas: Vec<T> = Vec::with_capacity(steps);

    let mut u = op.apply(&vs[0]);
    let alpha = u.norm();
    if !(alpha > T::zero()) {
        return None;
    }
    u /= alpha;
    us.push(u);
    alphas.push(alpha);

    while alphas.len() < steps {
        let j = alphas.len() - 1;
        let mut w = op.apply_t(&us[j]);
        w.axpy(-alphas[j], &vs[j], T::one());
        orthogonalize(&mut w, &vs);
        let beta = w.norm();
        if beta <= tiny {
            break;
        }
        w /= beta;
        let mut z = op.apply(&w);
        z.axpy(-beta, &us[j], T::one());
        orthogonalize(&mut z, &us);
        let alpha = z.norm();
        if alpha <= tiny {
            break;
        }
        z /= alpha;
        vs.push(w);
        us.push(z);
        betas.push(beta);
        alphas.push(alpha);
    }

    let k = alphas.len();
    let mut bmat = DMatrix::zeros(k, k);
    for i in 0..k {
        bmat[(i, i)] = alphas[i];
        if i + 1 < k {
            bmat[(i, i + 1)] = betas[i];
        }
    }
    let svd = SVD::new(bmat, true, true);
    let (idx, sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, T::zero()), |(bi, bv), (i, &s)| if s > bv { (i, s) } else { (bi, bv) });
    let left = svd.u.as_ref()?.column(idx).clone_owned();
    let right = svd.v_t.as_ref()?.row(idx).transpose();
    let mut a = DVector::zeros(nr);
    for (i, ui) in us.iter().enumerate() {
        a.axpy(left[i], ui, T::one());
    }
    let mut b = DVector::zeros(nc);
    for (i, vi) in vs.iter().enumerate() {
        b.axpy(right[i], vi, T::one());
    }
    let (an, bn) = (a.norm(), b.norm());
    if !(an > T::zero() && bn > T::zero()) {
        return None;
    }
    a /= an;
    b /= bn;
    if largest_entry_negative(&a) {
        a.neg_mut();
        b.neg_mut();
    }
    Some(Rank1Init { a, b, sigma })
}

fn largest_entry_negative<T: Scalar>(v: &DVector<T>) -> bool {
    let mut best = T::zero();
    let mut neg = false;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            neg = x < T::zero();
        }
    }
    neg
}

/// Group soft-thresholding at `threshold`, then scaling to unit norm. The
/// zero vector is returned when every group is shrunk away.
fn shrink_normalize<T: Scalar>(c: DVector<T>, threshold: T, layout: GroupLayout) -> DVector<T> {
    let mut v = c;
    if threshold > T::zero() {
        let norms = layout.group_norms_sq(v.as_slice());
        let factors: Vec<T> = norms
            .iter()
            .map(|&n2| {
                let n = n2.sqrt();
                if n > threshold {
                    T::one() - threshold / n
                } else {
                    T::zero()
                }
            })
            .collect();
        for (i, x) in v.iter_mut().enumerate() {
            let f = factors[i % layout.n_features];
            *x = if f == T::zero() { T::zero() } else { *x * f };
        }
    }
    let n = v.norm();
    if n > T::zero() {
        v / n
    } else {
        DVector::zeros(v.len())
    }
}

fn group_penalty<T: Scalar>(v: &DVector<T>, layout: GroupLayout) -> T {
    layout
        .group_norms_sq(v.as_slice())
        .into_iter()
        .fold(T::zero(), |acc, n| acc + n.sqrt())
}

/// Penalized rank-one fit by alternating group-thresholded power steps.
pub fn rank1_sparse<T: Scalar, O: CrossCovOperator<T> + ?Sized>(
    op: &O,
    rho_x: f64,
    rho_y: f64,
    layout_x: GroupLayout,
    layout_y: GroupLayout,
    options: &Rank1Options,
    init: Option<&Rank1Init<T>>,
) -> Result<SingularTriple<T>> {
    for (rho, side) in [(rho_x, "X"), (rho_y, "Y")] {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(FacdError::InvalidInput(format!("sparsity level {rho} for side {side} is not a nonnegative number")));
        }
    }
    if layout_x.len() != op.nrows() || layout_y.len() != op.ncols() {
        return Err(FacdError::InvalidInput(format!(
            "group layouts cover {}x{} entries, operator is {}x{}",
            layout_x.len(),
            layout_y.len(),
            op.nrows(),
            op.ncols()
        )));
    }
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(FacdError::InvalidConfig("rank-one options need tol > 0 and max_iter >= 1".into()));
    }
    let computed;
    let init = match init {
        Some(i) => i,
        None => match lanczos_init(op) {
            Some(i) => {
                computed = i;
                &computed
            }
            None => {
                return Ok(SingularTriple::zero(
                    op.nrows(),
                    op.ncols(),
                    Some("cross-covariance operator is zero".into()),
                ))
            }
        },
    };

    let thr_x = T::of(rho_x / 2.0);
    let thr_y = T::of(rho_y / 2.0);
    let frob = op.frobenius_sq();
    let objective = |a: &DVector<T>, b: &DVector<T>, gb: &DVector<T>| {
        frob - T::of(2.0) * a.dot(gb)
            + a.norm_squared() * b.norm_squared()
            + T::of(rho_x) * group_penalty(a, layout_x)
            + T::of(rho_y) * group_penalty(b, layout_y)
    };

    let mut a = init.a.clone();
    let mut b = init.b.clone();
    let mut gb = op.apply(&b);
    let mut prev = objective(&a, &b, &gb);
    let mut max_increase = T::zero();
    let mut converged = false;
    let mut iterations = 0;
    let tol = T::of(options.tol);
    while iterations < options.max_iter {
        iterations += 1;
        let a_new = shrink_normalize(gb.clone(), thr_x, layout_x);
        let b_new = if a_new.iter().all(|v| *v == T::zero()) {
            DVector::zeros(b.len())
        } else {
            shrink_normalize(op.apply_t(&a_new), thr_y, layout_y)
        };
        gb = op.apply(&b_new);
        let obj = objective(&a_new, &b_new, &gb);
        max_increase = max_increase.max(obj - prev);
        prev = obj;
        let delta = (&a_new - &a).norm().max((&b_new - &b).norm());
        a = a_new;
        b = b_new;
        if delta < tol {
            converged = true;
            break;
        }
    }
    let eta = a.dot(&gb).max(T::zero());
    if largest_entry_negative(&a) {
        a.neg_mut();
        b.neg_mut();
    }
    Ok(SingularTriple {
        eta,
        support_x: layout_x.support(a.as_slice()),
        support_y: layout_y.support(b.as_slice()),
        a,
        b,
        iterations,
        converged,
        max_objective_increase: max_increase,
        warning: (!converged).then(|| format!("no convergence within {} iterations", options.max_iter)),
    })
}

/// `Γ - eta a bᵀ`.
pub fn deflate<T: Scalar>(gamma: &DMatrix<T>, triple: &SingularTriple<T>) -> DMatrix<T> {
    gamma - &triple.a * triple.b.transpose() * triple.eta
}

/// `len x len` pairs, log-spaced over `[1e-4, 1]` times the largest group
/// norm on each side.
pub fn default_rho_grid<T: Scalar, O: CrossCovOperator<T> + ?Sized>(
    op: &O,
    layout_x: GroupLayout,
    layout_y: GroupLayout,
    len: usize,
) -> Vec<(f64, f64)> {
    let mx = layout_x.max_group_norm(&op.row_norms_sq()).as_f64();
    let my = layout_y.max_group_norm(&op.col_norms_sq()).as_f64();
    let gx = log_grid(RHO_GRID_MIN, RHO_GRID_MAX, len);
    let mut out = Vec::with_capacity(len * len);
    for &x in &gx {
        for &y in &gx {
            out.push((x * mx, y * my));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct SparsityTuning<T: Scalar> {
    pub rho_x: f64,
    pub rho_y: f64,
    #[serde(with = "crate::scalar::nonfinite")]
    pub cv_objective: T,
    pub grid: Vec<(f64, f64)>,
    /// Objective of every grid pair, in grid order.
    #[serde(with = "crate::scalar::nonfinite::list")]
    pub objectives: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub n_folds: usize,
    pub seed: u64,
    pub rank1: Rank1Options,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            n_folds: DEFAULT_FOLDS,
            seed: 0,
            rank1: Rank1Options::default(),
        }
    }
}

/// Seeded shuffle, then round-robin: `folds[g]` lists held-out subjects.
pub fn fold_assignment(n: usize, n_folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); n_folds];
    for (pos, &i) in order.iter().enumerate() {
        folds[pos % n_folds].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// Chooses the sparsity pair maximizing the summed held-out fit
/// `Σ_g a⁽⁻ᵍ⁾ᵀ Γ_g b⁽⁻ᵍ⁾`, where `Γ_g` is the mean of the held-out subjects'
/// matrices (deflated by `terms`). Ties go to the larger `rho_x + rho_y`.
#[allow(clippy::too_many_arguments)]
pub fn select_rho_cv<T: Scalar>(
    left: &DMatrix<T>,
    right: &DMatrix<T>,
    terms: &[DeflationTerm<T>],
    layout_x: GroupLayout,
    layout_y: GroupLayout,
    grid: &[(f64, f64)],
    options: &CvOptions,
) -> Result<SparsityTuning<T>> {
    if grid.is_empty() {
        return Err(FacdError::InvalidConfig("sparsity grid is empty".into()));
    }
    let n = left.nrows();
    if options.n_folds < 2 {
        return Err(FacdError::InvalidConfig(format!("need at least 2 folds, got {}", options.n_folds)));
    }
    if n < options.n_folds {
        return Err(FacdError::InvalidInput(format!(
            "{n} subjects cannot fill {} folds",
            options.n_folds
        )));
    }
    let folds = fold_assignment(n, options.n_folds, options.seed);
    let mut objectives = vec![T::zero(); grid.len()];
    for held in &folds {
        let mut is_held = vec![false; n];
        held.iter().for_each(|&i| is_held[i] = true);
        let train: Vec<usize> = (0..n).filter(|&i| !is_held[i]).collect();
        let train_op = FactoredOperator::from_rows(left, right, &train, terms);
        let test_op = FactoredOperator::from_rows(left, right, held, terms);
        let Some(init) = lanczos_init(&train_op) else {
            continue;
        };
        let scores: Vec<Result<T>> = grid
            .par_iter()
            .map(|&(rx, ry)| {
                let t = rank1_sparse(&train_op, rx, ry, layout_x, layout_y, &options.rank1, Some(&init))?;
                Ok(t.a.dot(&test_op.apply(&t.b)))
            })
            .collect();
        for (acc, s) in objectives.iter_mut().zip(scores) {
            *acc += s?;
        }
    }
    let mut best = 0;
    for (i, &v) in objectives.iter().enumerate().skip(1) {
        let bv = objectives[best];
        let larger = grid[i].0 + grid[i].1 > grid[best].0 + grid[best].1;
        if v > bv || (v == bv && larger) {
            best = i;
        }
    }
    Ok(SparsityTuning {
        rho_x: grid[best].0,
        rho_y: grid[best].1,
        cv_objective: objectives[best],
        grid: grid.to_vec(),
        objectives,
    })
}
