//! Paired longitudinal data with known loadings, scores and supports.
//!
//! `x_ijg = Σ_r A_rj(T_ig) z_ir + τ_ijg`, loadings spanned by orthonormal
//! shifted Legendre polynomials on the first `n_active` features.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LongitudinalDataset, Observation, SubjectRecord};
use crate::error::{FacdError, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    /// `N_i` uniform on `min..=max`, times i.i.d. uniform on [0, 1].
    Uniform { min: usize, max: usize },
    /// Every subject observed at the same `points` times, the midpoints of
    /// equal cells of [0, 1].
    Regular { points: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sd: f64,
    /// Latent factors shared across features.
    pub n_factors: usize,
    /// Fraction of each feature's noise variance carried by the factors.
    pub factor_share: f64,
    /// AR(1) coefficient along each subject's ordered times.
    pub ar_coef: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sd: 1.0,
            n_factors: 3,
            factor_share: 0.5,
            ar_coef: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub n_components: usize,
    pub n_active: usize,
    pub n_basis: usize,
    pub design: Design,
    /// `Cov(z_r^X, z_r^Y) = decay_scale / r`.
    pub decay_scale: f64,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 200,
            p: 100,
            q: 100,
            n_components: 20,
            n_active: 10,
            n_basis: 10,
            design: Design::Uniform { min: 5, max: 8 },
            decay_scale: 0.9,
            noise: NoiseConfig::default(),
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FacdError::InvalidConfig(m));
        if self.n == 0 || self.p == 0 || self.q == 0 || self.n_components == 0 || self.n_active == 0 || self.n_basis == 0 {
            return bad("n, p, q, components, active features and basis size must be positive".into());
        }
        if self.n_active > self.p.min(self.q) {
            return bad(format!("{} active features exceed min(p, q) = {}", self.n_active, self.p.min(self.q)));
        }
        if self.n_components > self.n_active * self.n_basis {
            return bad(format!(
                "{} orthonormal components do not fit in {} x {} coefficients",
                self.n_components, self.n_active, self.n_basis
            ));
        }
        match self.design {
            Design::Uniform { min, max } if min == 0 || min > max => {
                return bad(format!("time count range {min}..={max} is empty or contains 0"))
            }
            Design::Regular { points: 0 } => return bad("regular design needs at least one point".into()),
            _ => {}
        }
        if !(self.decay_scale > 0.0 && self.decay_scale <= 1.0) {
            return bad(format!("decay scale {} is outside (0, 1]", self.decay_scale));
        }
        let nz = &self.noise;
        if !(nz.sd >= 0.0 && nz.sd.is_finite()) {
            return bad(format!("noise sd {} is negative", nz.sd));
        }
        if !(0.0..=1.0).contains(&nz.factor_share) || (nz.n_factors == 0 && nz.factor_share > 0.0) {
            return bad("factor share must lie in [0, 1] and needs at least one factor".into());
        }
        if !(nz.ar_coef.abs() < 1.0) {
            return bad(format!("AR coefficient {} is not stationary", nz.ar_coef));
        }
        Ok(())
    }

    pub fn decay(&self, r: usize) -> f64 {
        self.decay_scale / (r + 1) as f64
    }
}

/// `√(2k+1) P_k(2t - 1)` for `k < n`, orthonormal on [0, 1].
pub fn legendre(n: usize, t: f64) -> Vec<f64> {
    let x = 2.0 * t - 1.0;
    let mut p = Vec::with_capacity(n);
    for k in 0..n {
        let v = match k {
            0 => 1.0,
            1 => x,
            _ => ((2 * k - 1) as f64 * x * p[k - 1] - (k - 1) as f64 * p[k - 2]) / k as f64,
        };
        p.push(v);
    }
    p.iter().enumerate().map(|(k, v)| v * ((2 * k + 1) as f64).sqrt()).collect()
}

/// One side's loadings. `coefficients[r]` is `n_active x n_basis` over the
/// active features; every other feature's loading is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideTruth {
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub support: Vec<usize>,
    pub coefficients: Vec<DMatrix<f64>>,
}

impl SideTruth {
    /// Loading values of every feature at `t`.
    pub fn eval(&self, r: usize, t: f64) -> Vec<f64> {
        let c = &self.coefficients[r];
        let basis = legendre(c.ncols(), t);
        let mut out = vec![0.0; self.n_features];
        for (a, &j) in self.support.iter().enumerate() {
            out[j] = c.row(a).iter().zip(&basis).map(|(x, y)| x * y).sum();
        }
        out
    }

    /// `out[j]` holds feature `j`'s loading on `grid`.
    pub fn on_grid<T: Scalar>(&self, r: usize, grid: &Grid<T>) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); grid.len()]; self.n_features];
        for (g, &t) in grid.points().iter().enumerate() {
            for (j, v) in self.eval(r, t.as_f64()).into_iter().enumerate() {
                out[j][g] = T::of(v);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub x: SideTruth,
    pub y: SideTruth,
    pub subject_ids: Vec<String>,
    /// `scores_x[i][r]`.
    pub scores_x: Vec<Vec<f64>>,
    pub scores_y: Vec<Vec<f64>>,
    pub cross_covariances: Vec<f64>,
}

impl GroundTruth {
    pub fn n_components(&self) -> usize {
        self.cross_covariances.len()
    }

    pub fn score_column(scores: &[Vec<f64>], r: usize) -> Vec<f64> {
        scores.iter().map(|s| s[r]).collect()
    }
}

/// Independent normal coefficients, Gram–Schmidt across components so the
/// stacked loadings are orthonormal in `L²` summed over features.
fn orthonormal_coefficients(rng: &mut ChaCha8Rng, r: usize, n_active: usize, n_basis: usize) -> Vec<DMatrix<f64>> {
    let mut done: Vec<DVector<f64>> = Vec::with_capacity(r);
    while done.len() < r {
        let mut v = DVector::from_fn(n_active * n_basis, |_, _| StandardNormal.sample(&mut *rng));
        for _ in 0..2 {
            for u in &done {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            done.push(v / norm);
        }
    }
    done.into_iter()
        .map(|v| DMatrix::from_row_slice(n_active, n_basis, v.as_slice()))
        .collect()
}

/// Rows scaled so each feature's factor variance is `share`.
fn factor_loadings(rng: &mut ChaCha8Rng, n_features: usize, n_factors: usize, share: f64) -> DMatrix<f64> {
    let mut b = DMatrix::from_fn(n_features, n_factors, |_, _| StandardNormal.sample(&mut *rng));
    for mut row in b.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row *= share.sqrt() / norm;
        }
    }
    b
}

struct SideSpec<'a> {
    truth: &'a SideTruth,
    factors: &'a DMatrix<f64>,
}

fn draw_times(rng: &mut ChaCha8Rng, design: &Design) -> Vec<f64> {
    match *design {
        Design::Uniform { min, max } => {
            let n = rng.random_range(min..=max);
            let mut t: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            t.sort_by(f64::total_cmp);
            t
        }
        Design::Regular { points } => (0..points).map(|g| (g as f64 + 0.5) / points as f64).collect(),
    }
}

fn draw_side<T: Scalar>(
    rng: &mut ChaCha8Rng,
    spec: &SideSpec,
    scores: &[f64],
    config: &SimulationConfig,
) -> Vec<Observation<T>> {
    let times = draw_times(rng, &config.design);
    let nz = &config.noise;
    let p = spec.truth.n_features;
    let idio = (1.0 - nz.factor_share).sqrt();
    let innovation_scale = (1.0 - nz.ar_coef * nz.ar_coef).sqrt();
    let mut tau = vec![0.0; p];
    times
        .iter()
        .enumerate()
        .map(|(g, &t)| {
            let f: Vec<f64> = (0..nz.n_factors).map(|_| StandardNormal.sample(&mut *rng)).collect();
            for (j, tj) in tau.iter_mut().enumerate() {
                let e: f64 = StandardNormal.sample(&mut *rng);
                let shared: f64 = spec.factors.row(j).iter().zip(&f).map(|(b, f)| b * f).sum();
                let v = shared + idio * e;
                *tj = if g == 0 { v } else { nz.ar_coef * *tj + innovation_scale * v };
            }
            let mut values: Vec<f64> = tau.iter().map(|v| nz.sd * v).collect();
            for (r, &z) in scores.iter().enumerate() {
                for (j, a) in spec.truth.eval(r, t).into_iter().enumerate() {
                    if a != 0.0 {
                        values[j] += a * z;
                    }
                }
            }
            Observation::new(T::of(t), values.into_iter().map(T::of).collect())
        })
        .collect()
}

/// Seeded draw; subject `i` uses its own ChaCha8 stream, so the output is
/// independent of thread scheduling.
pub fn generate<T: Scalar>(config: &SimulationConfig) -> Result<(LongitudinalDataset<T>, LongitudinalDataset<T>, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (r, act, nb) = (config.n_components, config.n_active, config.n_basis);
    let support: Vec<usize> = (0..act).collect();
    let truth_x = SideTruth {
        n_features: config.p,
        feature_names: Vec::new(),
        support: support.clone(),
        coefficients: orthonormal_coefficients(&mut rng, r, act, nb),
    };
    let truth_y = SideTruth {
        n_features: config.q,
        feature_names: Vec::new(),
        support,
        coefficients: orthonormal_coefficients(&mut rng, r, act, nb),
    };
    let nz = &config.noise;
    let fx = factor_loadings(&mut rng, config.p, nz.n_factors, nz.factor_share);
    let fy = factor_loadings(&mut rng, config.q, nz.n_factors, nz.factor_share);
    let decay: Vec<f64> = (0..r).map(|k| config.decay(k)).collect();
    let sx = SideSpec { truth: &truth_x, factors: &fx };
    let sy = SideSpec { truth: &truth_y, factors: &fy };

    type Drawn<T> = (Vec<f64>, Vec<f64>, Vec<Observation<T>>, Vec<Observation<T>>);
    let subjects: Vec<Drawn<T>> = (0..config.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            let (zx, zy): (Vec<f64>, Vec<f64>) = decay
                .iter()
                .map(|&c| {
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    (a, c * a + (1.0 - c * c).sqrt() * b)
                })
                .unzip();
            let ox = draw_side(&mut rng, &sx, &zx, config);
            let oy = draw_side(&mut rng, &sy, &zy, config);
            (zx, zy, ox, oy)
        })
        .collect();

    let ids: Vec<String> = (0..config.n).map(|i| format!("s{:0width$}", i + 1, width = digits(config.n))).collect();
    let mut rec_x = Vec::with_capacity(config.n);
    let mut rec_y = Vec::with_capacity(config.n);
    let mut scores_x = Vec::with_capacity(config.n);
    let mut scores_y = Vec::with_capacity(config.n);
    for (id, (zx, zy, ox, oy)) in ids.iter().zip(subjects) {
        rec_x.push(SubjectRecord { id: id.clone(), observations: ox });
        rec_y.push(SubjectRecord { id: id.clone(), observations: oy });
        scores_x.push(zx);
        scores_y.push(zy);
    }
    let x = LongitudinalDataset::with_generated_names("x", config.p, rec_x)?;
    let y = LongitudinalDataset::with_generated_names("y", config.q, rec_y)?;
    let truth = GroundTruth {
        x: SideTruth { feature_names: x.feature_names().to_vec(), ..truth_x },
        y: SideTruth { feature_names: y.feature_names().to_vec(), ..truth_y },
        subject_ids: ids,
        scores_x,
        scores_y,
        cross_covariances: decay,
    };
    Ok((x, y, truth))
}

fn digits(n: usize) -> usize {
    n.max(1).to_string().len()
}
