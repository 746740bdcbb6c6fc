//! Loading error, variable-selection rates and score accuracy against a
//! simulated ground truth.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{FacdError, Result};
use crate::grid::Grid;
use crate::pipeline::FacdModel;
use crate::scalar::Scalar;
use crate::simulate::GroundTruth;

/// A feature is selected when its loading's `L²` norm exceeds this.
pub const SELECTION_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rank_index: usize,
    pub loading_error_x: f64,
    pub loading_error_y: f64,
    pub fpr_x: f64,
    pub fpr_y: f64,
    pub fnr_x: f64,
    pub fnr_y: f64,
    pub score_corr_x: f64,
    pub score_corr_y: f64,
    /// Whether the estimate was sign-flipped to match the truth.
    pub flipped: bool,
}

/// One estimated component on `grid`, from this crate or an external method.
#[derive(Clone, Copy, Debug)]
pub struct Estimate<'a, T: Scalar> {
    pub grid: &'a Grid<T>,
    pub loadings_x: &'a [Vec<T>],
    pub loadings_y: &'a [Vec<T>],
    pub subject_ids: &'a [String],
    pub scores_x: &'a [T],
    pub scores_y: &'a [T],
}

/// Sample Pearson correlation; 0 when either side has no spread.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

fn rates(norms: &[f64], support: &[usize]) -> (f64, f64) {
    let mut active = vec![false; norms.len()];
    support.iter().for_each(|&j| active[j] = true);
    let (mut fp, mut fneg) = (0usize, 0usize);
    for (j, &nrm) in norms.iter().enumerate() {
        let selected = nrm > SELECTION_THRESHOLD;
        match (active[j], selected) {
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            _ => {}
        }
    }
    let inactive = norms.len() - support.len();
    let pct = |k: usize, d: usize| if d == 0 { 0.0 } else { 100.0 * k as f64 / d as f64 };
    (pct(fp, inactive), pct(fneg, support.len()))
}

/// Compares an estimate with truth component `r` (1-based). The estimate is
/// flipped jointly on both sides when its stacked inner product with the
/// truth is negative.
pub fn evaluate<T: Scalar>(est: &Estimate<T>, truth: &GroundTruth, r: usize) -> Result<EvaluationReport> {
    if r == 0 || r > truth.n_components() {
        return Err(FacdError::InvalidInput(format!(
            "component {r} is outside 1..={}",
            truth.n_components()
        )));
    }
    if est.loadings_x.len() != truth.x.n_features || est.loadings_y.len() != truth.y.n_features {
        return Err(FacdError::InvalidInput(format!(
            "estimate has {}/{} features, truth has {}/{}",
            est.loadings_x.len(),
            est.loadings_y.len(),
            truth.x.n_features,
            truth.y.n_features
        )));
    }
    let grid = est.grid;
    let m = grid.len();
    if est.loadings_x.iter().chain(est.loadings_y).any(|l| l.len() != m) {
        return Err(FacdError::InvalidInput("loading length differs from the grid".into()));
    }
    let w: Vec<f64> = grid.weights().iter().map(|v| v.as_f64()).collect();
    let k = r - 1;
    let tx = truth.x.on_grid(k, grid);
    let ty = truth.y.on_grid(k, grid);
    let to64 = |l: &[Vec<T>]| -> Vec<Vec<f64>> { l.iter().map(|v| v.iter().map(|x| x.as_f64()).collect()).collect() };
    let (ex, ey) = (to64(est.loadings_x), to64(est.loadings_y));
    let (tx, ty) = (to64(&tx), to64(&ty));
    let inner = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(&w).map(|((x, y), w)| x * y * w).sum::<f64>();
    let cross: f64 = ex.iter().zip(&tx).chain(ey.iter().zip(&ty)).map(|(a, b)| inner(a, b)).sum();
    let flipped = cross < 0.0;
    let s = if flipped { -1.0 } else { 1.0 };
    let error = |e: &[Vec<f64>], t: &[Vec<f64>]| -> f64 {
        e.iter()
            .zip(t)
            .map(|(a, b)| {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| s * x - y).collect();
                inner(&d, &d)
            })
            .sum()
    };
    let norms = |e: &[Vec<f64>]| -> Vec<f64> { e.iter().map(|a| inner(a, a).max(0.0).sqrt()).collect() };
    let (fpr_x, fnr_x) = rates(&norms(&ex), &truth.x.support);
    let (fpr_y, fnr_y) = rates(&norms(&ey), &truth.y.support);

    let index: HashMap<&str, usize> = truth.subject_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let (mut zx, mut zy, mut hx, mut hy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (pos, id) in est.subject_ids.iter().enumerate() {
        let Some(&i) = index.get(id.as_str()) else {
            return Err(FacdError::InvalidInput(format!("subject `{id}` is not in the truth")));
        };
        zx.push(truth.scores_x[i][k]);
        zy.push(truth.scores_y[i][k]);
        hx.push(s * est.scores_x[pos].as_f64());
        hy.push(s * est.scores_y[pos].as_f64());
    }
    Ok(EvaluationReport {
        rank_index: r,
        loading_error_x: error(&ex, &tx),
        loading_error_y: error(&ey, &ty),
        fpr_x,
        fpr_y,
        fnr_x,
        fnr_y,
        score_corr_x: pearson(&hx, &zx),
        score_corr_y: pearson(&hy, &zy),
        flipped,
    })
}

/// Model component `r` against truth component `r`.
pub fn evaluate_model<T: Scalar>(model: &FacdModel<T>, truth: &GroundTruth, r: usize) -> Result<EvaluationReport> {
    let c = r
        .checked_sub(1)
        .and_then(|i| model.components.get(i))
        .ok_or_else(|| FacdError::InvalidInput(format!("model has no component {r}")))?;
    evaluate(
        &Estimate {
            grid: &model.grid,
            loadings_x: &c.loadings_x,
            loadings_y: &c.loadings_y,
            subject_ids: &model.subject_ids,
            scores_x: &c.scores_x,
            scores_y: &c.scores_y,
        },
        truth,
        r,
    )
}
