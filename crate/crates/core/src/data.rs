//! Paired irregular longitudinal data, mean estimation and centering.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FacdError, Result};
use crate::scalar::Scalar;
use crate::spline::{select_nu_gcv, PenalizedFit, RoughnessPenalty, SmoothingConfig, SplineBasis};

/// Affine map from raw observation times onto [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub min: f64,
    pub max: f64,
}

impl TimeMap {
    pub fn identity() -> Self {
        Self { min: 0.0, max: 1.0 }
    }

    /// Map covering every time in `times`; `None` when `times` is empty.
    pub fn spanning(times: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut it = times.into_iter();
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t)));
        Some(Self { min, max })
    }

    /// A degenerate span sends every time to 0.
    pub fn to_unit(&self, raw: f64) -> f64 {
        if self.max > self.min {
            (raw - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }

    pub fn from_unit(&self, unit: f64) -> f64 {
        self.min + unit * (self.max - self.min)
    }
}

/// One time point of one subject; `missing[j]` marks entry `j` as absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct Observation<T: Scalar> {
    pub time: T,
    pub values: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing: Option<Vec<bool>>,
}

impl<T: Scalar> Observation<T> {
    pub fn new(time: T, values: Vec<T>) -> Self {
        Self {
            time,
            values,
            missing: None,
        }
    }

    pub fn with_mask(time: T, values: Vec<T>, missing: Vec<bool>) -> Self {
        Self {
            time,
            values,
            missing: Some(missing),
        }
    }

    #[inline]
    pub fn is_observed(&self, j: usize) -> bool {
        self.missing.as_ref().is_none_or(|m| !m[j])
    }

    pub fn is_fully_missing(&self) -> bool {
        (0..self.values.len()).all(|j| !self.is_observed(j))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct SubjectRecord<T: Scalar> {
    pub id: String,
    pub observations: Vec<Observation<T>>,
}

/// One side (X or Y) of a paired study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct LongitudinalDataset<T: Scalar> {
    label: String,
    feature_names: Vec<String>,
    subjects: Vec<SubjectRecord<T>>,
}

impl<T: Scalar> LongitudinalDataset<T> {
    pub fn new(
        label: impl Into<String>,
        feature_names: Vec<String>,
        subjects: Vec<SubjectRecord<T>>,
    ) -> Result<Self> {
        let p = feature_names.len();
        if p == 0 {
            return Err(FacdError::InvalidInput("dataset has no features".into()));
        }
        let mut ids = HashSet::new();
        for s in &subjects {
            if !ids.insert(s.id.as_str()) {
                return Err(FacdError::InvalidInput(format!("duplicate subject id `{}`", s.id)));
            }
            if s.observations.is_empty() {
                return Err(FacdError::InvalidInput(format!("subject `{}` has no observations", s.id)));
            }
            for obs in &s.observations {
                if !(obs.time >= T::zero() && obs.time <= T::one()) {
                    return Err(FacdError::Domain(obs.time.as_f64()));
                }
                if obs.values.len() != p {
                    return Err(FacdError::InvalidInput(format!(
                        "subject `{}`: observation has {} values, expected {p}",
                        s.id,
                        obs.values.len()
                    )));
                }
                if obs.missing.as_ref().is_some_and(|m| m.len() != p) {
                    return Err(FacdError::InvalidInput(format!(
                        "subject `{}`: mask length differs from {p}",
                        s.id
                    )));
                }
                for (j, v) in obs.values.iter().enumerate() {
                    if obs.is_observed(j) && !v.is_finite() {
                        return Err(FacdError::InvalidInput(format!(
                            "subject `{}`: non-finite value for feature `{}`",
                            s.id, feature_names[j]
                        )));
                    }
                }
            }
        }
        Ok(Self {
            label: label.into(),
            feature_names,
            subjects,
        })
    }

    /// Convenience constructor with generated feature names `{prefix}{j}`.
    pub fn with_generated_names(
        label: impl Into<String>,
        n_features: usize,
        subjects: Vec<SubjectRecord<T>>,
    ) -> Result<Self> {
        let label = label.into();
        let names = (1..=n_features).map(|j| format!("{label}{j}")).collect();
        Self::new(label, names, subjects)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn subjects(&self) -> &[SubjectRecord<T>] {
        &self.subjects
    }

    pub fn into_subjects(self) -> Vec<SubjectRecord<T>> {
        self.subjects
    }

    /// Times, values and weights `1/(n_j N_ij)` of the observed entries of
    /// feature `j`, where `n_j` counts subjects with any observed entry.
    fn feature_samples(&self, j: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
        let per_subject: Vec<usize> = self
            .subjects
            .iter()
            .map(|s| s.observations.iter().filter(|o| o.is_observed(j)).count())
            .collect();
        let contributing = per_subject.iter().filter(|&&c| c > 0).count();
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut weights = Vec::new();
        for (s, &count) in self.subjects.iter().zip(&per_subject) {
            if count == 0 {
                continue;
            }
            let w = T::one() / T::of_usize(contributing * count);
            for o in s.observations.iter().filter(|o| o.is_observed(j)) {
                times.push(o.time);
                values.push(o.values[j]);
                weights.push(w);
            }
        }
        (times, values, weights)
    }
}

/// Per-feature smoothed mean curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
pub struct MeanFunctions<T: Scalar> {
    pub basis: SplineBasis<T>,
    pub fits: Vec<PenalizedFit<T>>,
    /// `(nu, gcv)` per grid point, per feature.
    #[serde(default)]
    #[serde(with = "crate::scalar::nonfinite::traces")]
    pub gcv_traces: Vec<Vec<(T, T)>>,
}

impl<T: Scalar> MeanFunctions<T> {
    /// Identically zero means for `n_features` features.
    pub fn zero(basis: SplineBasis<T>, n_features: usize) -> Self {
        let fit = PenalizedFit {
            coefficients: vec![T::zero(); basis.dimension()],
            nu: T::zero(),
            gcv_score: T::zero(),
            edf: T::zero(),
            rss: T::zero(),
            n_obs: 0,
            ridged: false,
        };
        Self {
            basis,
            fits: vec![fit; n_features],
            gcv_traces: Vec::new(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.fits.len()
    }

    pub fn eval(&self, j: usize, t: T) -> T {
        self.basis.eval(&self.fits[j].coefficients, t)
    }

    pub fn eval_all(&self, t: T) -> Vec<T> {
        self.fits.iter().map(|f| self.basis.eval(&f.coefficients, t)).collect()
    }
}

/// Fits every feature's mean curve by weighted penalized splines with its own
/// GCV-selected smoothing parameter.
pub fn estimate_means<T: Scalar>(
    data: &LongitudinalDataset<T>,
    config: &SmoothingConfig,
) -> Result<MeanFunctions<T>> {
    let basis: SplineBasis<T> = config.basis()?;
    let grid: Vec<T> = config.grid()?;
    let penalty = RoughnessPenalty::univariate(&basis);
    if let Some(j) = (0..data.n_features())
        .find(|&j| data.subjects.iter().all(|s| s.observations.iter().all(|o| !o.is_observed(j))))
    {
        return Err(FacdError::FeatureEmpty {
            feature: data.feature_names[j].clone(),
        });
    }
    let results: Vec<Result<_>> = (0..data.n_features())
        .into_par_iter()
        .map(|j| {
            let (times, values, weights) = data.feature_samples(j);
            select_nu_gcv(&basis, &penalty, &times, &values, &weights, &grid)
        })
        .collect();
    let mut fits = Vec::with_capacity(results.len());
    let mut gcv_traces = Vec::with_capacity(results.len());
    for r in results {
        let sel = r?;
        gcv_traces.push(sel.trace);
        fits.push(sel.fit);
    }
    Ok(MeanFunctions {
        basis,
        fits,
        gcv_traces,
    })
}

/// Residuals of one subject: row `g` holds `x_g - mu(T_g)`; masked entries
/// are stored as zero so that they drop out of every product sum.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectResiduals<T: Scalar> {
    pub id: String,
    pub times: Vec<T>,
    pub residuals: DMatrix<T>,
}

impl<T: Scalar> SubjectResiduals<T> {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CenteredResiduals<T: Scalar> {
    pub label: String,
    pub n_features: usize,
    pub subjects: Vec<SubjectResiduals<T>>,
}

impl<T: Scalar> CenteredResiduals<T> {
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }
}

/// Subtracts the fitted means. Observations with every entry masked are
/// dropped, and so are subjects left without observations.
pub fn center<T: Scalar>(
    data: &LongitudinalDataset<T>,
    means: &MeanFunctions<T>,
) -> Result<CenteredResiduals<T>> {
    let p = data.n_features();
    if means.n_features() != p {
        return Err(FacdError::InvalidInput(format!(
            "means cover {} features but dataset `{}` has {p}",
            means.n_features(),
            data.label
        )));
    }
    let subjects = data
        .subjects
        .iter()
        .filter_map(|s| {
            let kept: Vec<&Observation<T>> =
                s.observations.iter().filter(|o| !o.is_fully_missing()).collect();
            if kept.is_empty() {
                return None;
            }
            let mut residuals = DMatrix::zeros(kept.len(), p);
            for (g, o) in kept.iter().enumerate() {
                for j in 0..p {
                    if o.is_observed(j) {
                        residuals[(g, j)] = o.values[j] - means.eval(j, o.time);
                    }
                }
            }
            Some(SubjectResiduals {
                id: s.id.clone(),
                times: kept.iter().map(|o| o.time).collect(),
                residuals,
            })
        })
        .collect();
    Ok(CenteredResiduals {
        label: data.label.clone(),
        n_features: p,
        subjects,
    })
}

/// Index pairs `(ix, iy)` matching subjects of the two sides by id, ordered
/// as the X side.
pub fn pair_subjects<T: Scalar>(
    x: &CenteredResiduals<T>,
    y: &CenteredResiduals<T>,
) -> Result<Vec<(usize, usize)>> {
    let y_index: HashMap<&str, usize> =
        y.subjects.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    if x.subjects.len() != y.subjects.len() {
        return Err(FacdError::PairedData(format!(
            "{} subjects on side {} but {} on side {}",
            x.subjects.len(),
            x.label,
            y.subjects.len(),
            y.label
        )));
    }
    x.subjects
        .iter()
        .enumerate()
        .map(|(ix, s)| {
            y_index.get(s.id.as_str()).map(|&iy| (ix, iy)).ok_or_else(|| {
                FacdError::PairedData(format!("subject `{}` is missing from side {}", s.id, y.label))
            })
        })
        .collect()
}
