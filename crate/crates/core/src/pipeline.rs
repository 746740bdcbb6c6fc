//! End-to-end decomposition: means, kernels, eigenbases, block
//! cross-covariance, sparse components, loadings and scores.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::crosscov::{assemble, BlockCrossCov};
use crate::data::{center, estimate_means, pair_subjects, CenteredResiduals, LongitudinalDataset, MeanFunctions, TimeMap};
use crate::error::{FacdError, Result, StageExt};
use crate::grid::{Grid, DEFAULT_GRID_SIZE};
use crate::kernels::{estimate_kernel, raw_moments_x, raw_moments_y, KernelEstimate, Side};
use crate::scalar::Scalar;
use crate::sparse_svd::{
    default_rho_grid, rank1_sparse, select_rho_cv, CvOptions, FactoredOperator, GroupLayout, Rank1Options,
    SingularTriple, SparsityTuning, DEFAULT_FOLDS, DEFAULT_RHO_GRID_LEN,
};
use crate::spectral::{eigendecompose, memory_cap, select_kappa, EigenSystem, DEFAULT_KAPPA_THRESHOLD, DEFAULT_MEMORY_BOUND};
use crate::spline::SmoothingConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sparsity {
    /// The same pair for every component.
    Fixed { rho_x: f64, rho_y: f64 },
    /// Fresh K-fold CV per component. Without an explicit grid, a
    /// `grid_len x grid_len` log grid scaled by the operator's group norms.
    CrossValidated {
        n_folds: usize,
        grid_len: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<(f64, f64)>>,
    },
}

impl Default for Sparsity {
    fn default() -> Self {
        Sparsity::CrossValidated {
            n_folds: DEFAULT_FOLDS,
            grid_len: DEFAULT_RHO_GRID_LEN,
            grid: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FacdConfig {
    pub mean_smoothing: SmoothingConfig,
    pub kernel_smoothing: SmoothingConfig,
    pub grid_size: usize,
    pub kappa_threshold: f64,
    /// Fixed truncation levels, bypassing the variance threshold.
    #[serde(default)]
    pub kappa_x: Option<usize>,
    #[serde(default)]
    pub kappa_y: Option<usize>,
    /// Upper bound on `p * kappa_x` and `q * kappa_y`.
    pub memory_bound: usize,
    pub n_components: usize,
    pub sparsity: Sparsity,
    pub rank1: Rank1Options,
    pub seed: u64,
}

impl Default for FacdConfig {
    fn default() -> Self {
        Self {
            mean_smoothing: SmoothingConfig::default(),
            kernel_smoothing: SmoothingConfig::default(),
            grid_size: DEFAULT_GRID_SIZE,
            kappa_threshold: DEFAULT_KAPPA_THRESHOLD,
            kappa_x: None,
            kappa_y: None,
            memory_bound: DEFAULT_MEMORY_BOUND,
            n_components: 1,
            sparsity: Sparsity::default(),
            rank1: Rank1Options::default(),
            seed: 0,
        }
    }
}

impl FacdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FacdError::InvalidConfig(m));
        if self.n_components == 0 {
            return bad("at least one component must be requested".into());
        }
        if self.grid_size < crate::spectral::MIN_GRID_SIZE {
            return bad(format!("grid size {} is below {}", self.grid_size, crate::spectral::MIN_GRID_SIZE));
        }
        if !(self.kappa_threshold > 0.0 && self.kappa_threshold <= 1.0) {
            return bad(format!("kappa threshold {} is outside (0, 1]", self.kappa_threshold));
        }
        if self.kappa_x == Some(0) || self.kappa_y == Some(0) {
            return bad("fixed kappa must be positive".into());
        }
        if self.memory_bound == 0 {
            return bad("memory bound must be positive".into());
        }
        match &self.sparsity {
            Sparsity::Fixed { rho_x, rho_y } => {
                if !(*rho_x >= 0.0 && *rho_y >= 0.0 && rho_x.is_finite() && rho_y.is_finite()) {
                    return bad(format!("sparsity levels ({rho_x}, {rho_y}) must be nonnegative"));
                }
            }
            Sparsity::CrossValidated { n_folds, grid_len, grid } => {
                if *n_folds < 2 {
                    return bad(format!("{n_folds} folds; need at least 2"));
                }
                match grid {
                    Some(g) if g.is_empty() => return bad("sparsity grid is empty".into()),
                    Some(g) if g.iter().any(|&(x, y)| !(x >= 0.0 && y >= 0.0)) => {
                        return bad("sparsity grid has negative entries".into())
                    }
                    None if *grid_len == 0 => return bad("sparsity grid length is zero".into()),
                    _ => {}
                }
            }
        }
        if !(self.rank1.tol > 0.0) || self.rank1.max_iter == 0 {
            return bad("rank-one options need tol > 0 and max_iter >= 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct CanonicalComponent<T: Scalar> {
    pub rank_index: usize,
    pub eta: T,
    pub rho_x: f64,
    pub rho_y: f64,
    /// Stacked coefficient vectors, entry `k * p + j`.
    pub a: Vec<T>,
    pub b: Vec<T>,
    /// `loadings_x[j]` holds feature `j`'s loading on the model grid.
    pub loadings_x: Vec<Vec<T>>,
    pub loadings_y: Vec<Vec<T>>,
    pub scores_x: Vec<T>,
    pub scores_y: Vec<T>,
    pub support_x: Vec<usize>,
    pub support_y: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<SparsityTuning<T>>,
    pub iterations: usize,
    pub converged: bool,
    pub max_objective_increase: T,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct Diagnostics<T: Scalar> {
    pub warnings: Vec<String>,
    pub eigen_gaps_x: Vec<T>,
    pub eigen_gaps_y: Vec<T>,
    /// Truncation levels before the memory cap.
    pub kappa_requested_x: usize,
    pub kappa_requested_y: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct FacdModel<T: Scalar> {
    pub config: FacdConfig,
    pub feature_names_x: Vec<String>,
    pub feature_names_y: Vec<String>,
    pub subject_ids: Vec<String>,
    pub time_map: TimeMap,
    pub grid: Grid<T>,
    pub means_x: MeanFunctions<T>,
    pub means_y: MeanFunctions<T>,
    pub kernel_x: KernelEstimate<T>,
    pub kernel_y: KernelEstimate<T>,
    pub eig_x: EigenSystem<T>,
    pub eig_y: EigenSystem<T>,
    pub components: Vec<CanonicalComponent<T>>,
    pub diagnostics: Diagnostics<T>,
    /// Whether features were z-scored on ingestion.
    #[serde(default)]
    pub standardized: bool,
}

impl<T: Scalar> FacdModel<T> {
    pub fn p(&self) -> usize {
        self.feature_names_x.len()
    }

    pub fn q(&self) -> usize {
        self.feature_names_y.len()
    }
}

fn check_pairing<T: Scalar>(x: &LongitudinalDataset<T>, y: &LongitudinalDataset<T>) -> Result<()> {
    let ids_x: HashSet<&str> = x.subjects().iter().map(|s| s.id.as_str()).collect();
    let ids_y: HashSet<&str> = y.subjects().iter().map(|s| s.id.as_str()).collect();
    if ids_x != ids_y {
        let only_x = ids_x.difference(&ids_y).count();
        let only_y = ids_y.difference(&ids_x).count();
        return Err(FacdError::PairedData(format!(
            "{only_x} subjects appear only on side X and {only_y} only on side Y"
        )));
    }
    Ok(())
}

fn choose_kappa<T: Scalar>(
    eig: &mut EigenSystem<T>,
    fixed: Option<usize>,
    threshold: f64,
    n_features: usize,
    memory_bound: usize,
    side: Side,
    warnings: &mut Vec<String>,
) -> Result<usize> {
    let wanted = match fixed {
        Some(k) => {
            if eig.n_positive() == 0 {
                return Err(FacdError::EmptySpectrum(format!("kernel {side} has no positive eigenvalue")));
            }
            if k > eig.n_positive() {
                warnings.push(format!(
                    "side {side}: fixed kappa {k} exceeds the {} positive eigenvalues",
                    eig.n_positive()
                ));
            }
            k.min(eig.n_positive())
        }
        None => select_kappa(eig, threshold)?,
    };
    let cap = memory_cap(n_features, memory_bound);
    if wanted > cap {
        warnings.push(format!("side {side}: kappa {wanted} capped at {cap} by the memory bound"));
    }
    eig.kappa = wanted.min(cap);
    Ok(wanted)
}

/// Grid values of every feature's loading, `Σ_k coef[k * p + j] ψ_k`.
pub fn reconstruct_loadings<T: Scalar>(coef: &[T], eig: &EigenSystem<T>, n_features: usize) -> Vec<Vec<T>> {
    let m = eig.grid.len();
    (0..n_features)
        .map(|j| {
            let mut out = vec![T::zero(); m];
            for k in 0..eig.kappa {
                let c = coef[k * n_features + j];
                if c == T::zero() {
                    continue;
                }
                for (o, &psi) in out.iter_mut().zip(&eig.eigenfunctions[k]) {
                    *o += c * psi;
                }
            }
            out
        })
        .collect()
}

/// `Σ_j (1/N_i) Σ_g A_j(T_ig) r_j(T_ig)` per subject, loadings interpolated
/// linearly on `grid`. Subjects follow `order`.
pub fn subject_scores<T: Scalar>(
    resid: &CenteredResiduals<T>,
    order: impl Iterator<Item = usize>,
    loadings: &[Vec<T>],
    grid: &Grid<T>,
) -> Vec<T> {
    let active: Vec<usize> = (0..loadings.len())
        .filter(|&j| loadings[j].iter().any(|v| *v != T::zero()))
        .collect();
    order
        .map(|i| {
            let s = &resid.subjects[i];
            let n = s.n_times();
            if n == 0 {
                return T::zero();
            }
            let mut total = T::zero();
            for g in 0..n {
                let (lo, frac) = grid.locate(s.times[g]);
                for &j in &active {
                    let l = &loadings[j];
                    let v = if frac == T::zero() { l[lo] } else { l[lo] + (l[lo + 1] - l[lo]) * frac };
                    total += v * s.residuals[(g, j)];
                }
            }
            total / T::of_usize(n)
        })
        .collect()
}

fn stacked_integral<T: Scalar>(coef: &DVector<T>, eig: &EigenSystem<T>, n_features: usize) -> T {
    let mut total = T::zero();
    for k in 0..eig.kappa {
        let int_k = eig.grid.integrate(&eig.eigenfunctions[k]);
        let block = coef.rows(k * n_features, n_features).sum();
        total += block * int_k;
    }
    total
}

pub fn fit<T: Scalar>(
    data_x: &LongitudinalDataset<T>,
    data_y: &LongitudinalDataset<T>,
    config: &FacdConfig,
) -> Result<FacdModel<T>> {
    fit_with_time_map(data_x, data_y, config, TimeMap::identity())
}

pub fn fit_with_time_map<T: Scalar>(
    data_x: &LongitudinalDataset<T>,
    data_y: &LongitudinalDataset<T>,
    config: &FacdConfig,
    time_map: TimeMap,
) -> Result<FacdModel<T>> {
    config.validate()?;
    check_pairing(data_x, data_y)?;
    let mut warnings = Vec::new();

    let means_x = estimate_means(data_x, &config.mean_smoothing).stage("mean estimation (X)")?;
    let means_y = estimate_means(data_y, &config.mean_smoothing).stage("mean estimation (Y)")?;
    let resid_x = center(data_x, &means_x).stage("centering (X)")?;
    let resid_y = center(data_y, &means_y).stage("centering (Y)")?;

    let u_x = raw_moments_x(&resid_x, &resid_y).stage("raw moments (X)")?;
    let u_y = raw_moments_y(&resid_x, &resid_y).stage("raw moments (Y)")?;
    let kernel_x = estimate_kernel(&u_x, Side::X, &config.kernel_smoothing).stage("kernel estimation (X)")?;
    let kernel_y = estimate_kernel(&u_y, Side::Y, &config.kernel_smoothing).stage("kernel estimation (Y)")?;

    let mut eig_x = eigendecompose(&kernel_x, config.grid_size).stage("eigendecomposition (X)")?;
    let mut eig_y = eigendecompose(&kernel_y, config.grid_size).stage("eigendecomposition (Y)")?;
    let (p, q) = (data_x.n_features(), data_y.n_features());
    let kappa_requested_x = choose_kappa(
        &mut eig_x,
        config.kappa_x,
        config.kappa_threshold,
        p,
        config.memory_bound,
        Side::X,
        &mut warnings,
    )
    .stage("truncation (X)")?;
    let kappa_requested_y = choose_kappa(
        &mut eig_y,
        config.kappa_y,
        config.kappa_threshold,
        q,
        config.memory_bound,
        Side::Y,
        &mut warnings,
    )
    .stage("truncation (Y)")?;

    let block = assemble(&resid_x, &resid_y, &eig_x, &eig_y).stage("cross-covariance assembly")?;
    let pairs = pair_subjects(&resid_x, &resid_y).stage("cross-covariance assembly")?;
    let components = extract_components(&block, &resid_x, &resid_y, &pairs, &eig_x, &eig_y, config, &mut warnings)?;

    Ok(FacdModel {
        config: config.clone(),
        feature_names_x: data_x.feature_names().to_vec(),
        feature_names_y: data_y.feature_names().to_vec(),
        subject_ids: block.subject_ids.clone(),
        time_map,
        grid: eig_x.grid.clone(),
        diagnostics: Diagnostics {
            warnings,
            eigen_gaps_x: eig_x.eigen_gaps(),
            eigen_gaps_y: eig_y.eigen_gaps(),
            kappa_requested_x,
            kappa_requested_y,
        },
        means_x,
        means_y,
        kernel_x,
        kernel_y,
        eig_x,
        eig_y,
        components,
        standardized: false,
    })
}

#[allow(clippy::too_many_arguments)]
fn extract_components<T: Scalar>(
    block: &BlockCrossCov<T>,
    resid_x: &CenteredResiduals<T>,
    resid_y: &CenteredResiduals<T>,
    pairs: &[(usize, usize)],
    eig_x: &EigenSystem<T>,
    eig_y: &EigenSystem<T>,
    config: &FacdConfig,
    warnings: &mut Vec<String>,
) -> Result<Vec<CanonicalComponent<T>>> {
    let (p, q) = (block.p, block.q);
    let lx = GroupLayout::new(p, block.kappa_x);
    let ly = GroupLayout::new(q, block.kappa_y);
    let mut op = FactoredOperator::new(block.left.clone(), block.right.clone());
    let mut components = Vec::new();
    for r in 0..config.n_components {
        let (rho_x, rho_y, tuning) = match &config.sparsity {
            Sparsity::Fixed { rho_x, rho_y } => (*rho_x, *rho_y, None),
            Sparsity::CrossValidated { n_folds, grid_len, grid } => {
                let grid = match grid {
                    Some(g) => g.clone(),
                    None => default_rho_grid(&op, lx, ly, *grid_len),
                };
                let cv = CvOptions {
                    n_folds: *n_folds,
                    seed: config.seed.wrapping_add(r as u64),
                    rank1: config.rank1,
                };
                let t = select_rho_cv(&block.left, &block.right, op.terms(), lx, ly, &grid, &cv)
                    .stage("sparsity cross-validation")?;
                (t.rho_x, t.rho_y, Some(t))
            }
        };
        let mut triple: SingularTriple<T> =
            rank1_sparse(&op, rho_x, rho_y, lx, ly, &config.rank1, None).stage("sparse rank-one fit")?;
        if let Some(w) = &triple.warning {
            warnings.push(format!("component {}: {w}", r + 1));
        }
        if triple.eta == T::zero() {
            warnings.push(format!("component {}: zero singular value, stopping", r + 1));
            break;
        }
        if stacked_integral(&triple.a, eig_x, p) < T::zero() {
            triple.flip();
        }
        op.deflate(&triple);

        let a: Vec<T> = triple.a.iter().copied().collect();
        let b: Vec<T> = triple.b.iter().copied().collect();
        let loadings_x = reconstruct_loadings(&a, eig_x, p);
        let loadings_y = reconstruct_loadings(&b, eig_y, q);
        let scores_x = subject_scores(resid_x, pairs.iter().map(|&(ix, _)| ix), &loadings_x, &eig_x.grid);
        let scores_y = subject_scores(resid_y, pairs.iter().map(|&(_, iy)| iy), &loadings_y, &eig_y.grid);
        components.push(CanonicalComponent {
            rank_index: r + 1,
            eta: triple.eta,
            rho_x,
            rho_y,
            a,
            b,
            loadings_x,
            loadings_y,
            scores_x,
            scores_y,
            support_x: triple.support_x,
            support_y: triple.support_y,
            tuning,
            iterations: triple.iterations,
            converged: triple.converged,
            max_objective_increase: triple.max_objective_increase,
        });
    }
    Ok(components)
}

/// Scores of every fitted component on (possibly new) paired data, centered
/// with the model's means. Subjects follow `data_x`'s order.
pub fn scores<T: Scalar>(
    model: &FacdModel<T>,
    data_x: &LongitudinalDataset<T>,
    data_y: &LongitudinalDataset<T>,
) -> Result<ComponentScores<T>> {
    if data_x.n_features() != model.p() || data_y.n_features() != model.q() {
        return Err(FacdError::InvalidInput(format!(
            "data has {}/{} features, model expects {}/{}",
            data_x.n_features(),
            data_y.n_features(),
            model.p(),
            model.q()
        )));
    }
    let resid_x = center(data_x, &model.means_x)?;
    let resid_y = center(data_y, &model.means_y)?;
    let pairs = pair_subjects(&resid_x, &resid_y)?;
    let per_component = model
        .components
        .iter()
        .map(|c| {
            (
                subject_scores(&resid_x, pairs.iter().map(|&(ix, _)| ix), &c.loadings_x, &model.grid),
                subject_scores(&resid_y, pairs.iter().map(|&(_, iy)| iy), &c.loadings_y, &model.grid),
            )
        })
        .collect();
    Ok(ComponentScores {
        subject_ids: pairs.iter().map(|&(ix, _)| resid_x.subjects[ix].id.clone()).collect(),
        per_component,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentScores<T: Scalar> {
    pub subject_ids: Vec<String>,
    /// `(scores_x, scores_y)` per component.
    pub per_component: Vec<(Vec<T>, Vec<T>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationNetwork<T: Scalar> {
    /// `p x q` matrix of time-integrated correlations.
    pub rho: DMatrix<T>,
    /// Entries whose denominator vanished (set to zero).
    pub degenerate: Vec<(usize, usize)>,
}

/// Correlation between the rank-`r` reconstructions `A_j(t) z_i` of the two
/// sides, integrated over time and pooled over subjects.
pub fn time_integrated_correlation<T: Scalar>(model: &FacdModel<T>, r: usize) -> Result<CorrelationNetwork<T>> {
    let c = r
        .checked_sub(1)
        .and_then(|i| model.components.get(i))
        .ok_or_else(|| FacdError::InvalidInput(format!("component {r} does not exist")))?;
    let n = T::of_usize(c.scores_x.len().max(1));
    let mean = |v: T| v / n;
    let zxy = mean(c.scores_x.iter().zip(&c.scores_y).fold(T::zero(), |a, (x, y)| a + *x * *y));
    let zxx = mean(c.scores_x.iter().fold(T::zero(), |a, x| a + *x * *x));
    let zyy = mean(c.scores_y.iter().fold(T::zero(), |a, y| a + *y * *y));
    let grid = &model.grid;
    let norms_x: Vec<T> = c.loadings_x.iter().map(|l| grid.norm_sq(l)).collect();
    let norms_y: Vec<T> = c.loadings_y.iter().map(|l| grid.norm_sq(l)).collect();
    let (p, q) = (c.loadings_x.len(), c.loadings_y.len());
    let mut rho = DMatrix::zeros(p, q);
    let mut degenerate = Vec::new();
    for j in 0..p {
        for m in 0..q {
            let denom = (zxx * norms_x[j] * zyy * norms_y[m]).sqrt();
            if denom > T::zero() {
                let v = zxy * grid.inner(&c.loadings_x[j], &c.loadings_y[m]) / denom;
                rho[(j, m)] = v.max(-T::one()).min(T::one());
            } else {
                degenerate.push((j, m));
            }
        }
    }
    Ok(CorrelationNetwork { rho, degenerate })
}
