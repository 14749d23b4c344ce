//! Per-participant Target / Non-Target classification from epochs.
//!
//! Trial covariances (OAS-shrunk) are mapped to the tangent space at the
//! Fréchet mean of the participant's epochs. A weighted L2 logistic
//! regression is trained where behaviourally incorrect or missed trials get a
//! weight of exactly zero: their epochs still shape the geometry, never the
//! decision boundary.

pub mod crossval;
pub mod logreg;

use nalgebra::DMatrix;
use thiserror::Error;

pub use crossval::{crossval_predict, fit_subset, CvOutcome, CvTrial, FeatureSource};
pub use logreg::{decision_function, fit_weighted_logreg, LinearModel, DEFAULT_C};

use crate::domain::{CellKey, Label};
use crate::signal::Epoch;
use crate::spd::{self, SpdError, SpdMatrix, TangentSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error(transparent)]
    Spd(#[from] SpdError),

    #[error("epoch needs at least two samples per channel, got {0}")]
    TooFewSamples(usize),

    #[error("epoch has zero variance")]
    ZeroVariance,

    #[error("all samples have zero weight")]
    AllZeroWeight,

    #[error("only one class has positive-weight samples")]
    SingleClass,

    #[error("sample weights must be finite and non-negative")]
    InvalidWeight,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("solver stopped after {iterations} iterations with gradient norm {grad_norm:.3e}")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("weight vector is zero; signed distance undefined")]
    UndefinedScore,

    #[error("no fold count in the fallback chain gives every training split both classes")]
    FoldsInfeasible,

    #[error("empty input")]
    Empty,
}

/// Sample covariance `(1/n) X Xᵀ` of mean-centred channels.
pub fn sample_covariance(e: &Epoch) -> Result<DMatrix<f64>, ClassifierError> {
    let p = e.channels();
    let n = e.samples_per_channel;
    if n < 2 {
        return Err(ClassifierError::TooFewSamples(n));
    }
    let mut x = DMatrix::zeros(p, n);
    for c in 0..p {
        let ch = e.channel(c);
        let mean = ch.iter().sum::<f64>() / n as f64;
        for (t, v) in ch.iter().enumerate() {
            x[(c, t)] = v - mean;
        }
    }
    let mut s = &x * x.transpose();
    s /= n as f64;
    Ok(s)
}

/// OAS shrinkage intensity for a sample covariance built from `n` samples.
pub fn oas_shrinkage(s: &DMatrix<f64>, n: usize) -> f64 {
    let p = s.nrows() as f64;
    let n = n as f64;
    let tr = s.trace();
    let tr2 = s.component_mul(s).sum(); // tr(S²) for symmetric S
    let num = (1.0 - 2.0 / p) * tr2 + tr * tr;
    let den = (n + 1.0 - 2.0 / p) * (tr2 - tr * tr / p);
    if den <= 0.0 {
        1.0
    } else {
        (num / den).min(1.0)
    }
}

/// Shrinks `s` toward `(tr S / p) I` with the OAS intensity.
pub fn oas_shrink(s: &DMatrix<f64>, n: usize) -> Result<(SpdMatrix, f64), ClassifierError> {
    let p = s.nrows();
    let tr = s.trace();
    if !(tr > 0.0) {
        return Err(ClassifierError::ZeroVariance);
    }
    let rho = oas_shrinkage(s, n);
    let mut out = s * (1.0 - rho);
    let mu = tr / p as f64;
    for k in 0..p {
        out[(k, k)] += rho * mu;
    }
    Ok((SpdMatrix::new(out)?, rho))
}

/// OAS covariance of one epoch.
pub fn oas_covariance(e: &Epoch) -> Result<SpdMatrix, ClassifierError> {
    let s = sample_covariance(e)?;
    oas_shrink(&s, e.samples_per_channel).map(|(m, _)| m)
}

/// One trial as seen by the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrial {
    pub trial_id: u32,
    pub truth: Label,
    pub human_correct: bool,
    pub missed: bool,
    pub rt_s: Option<f64>,
}

/// 1.0 for behaviourally correct responses, 0.0 for incorrect or missed.
pub fn quarantine_weights(trials: &[LabeledTrial]) -> Vec<f64> {
    trials
        .iter()
        .map(|t| if t.human_correct && !t.missed { 1.0 } else { 0.0 })
        .collect()
}

/// Reference point and tangent features for a set of covariances. The
/// reference is the Fréchet mean of all of them, without any filtering.
pub fn build_feature_set(covs: &[SpdMatrix]) -> Result<(TangentSpace, Vec<Vec<f64>>), ClassifierError> {
    if covs.is_empty() {
        return Err(ClassifierError::Empty);
    }
    let mean = spd::frechet_mean(covs, spd::FRECHET_TOL, spd::FRECHET_MAX_ITER)?;
    if !mean.converged {
        log::warn!(
            "Fréchet mean stopped at residual {:.3e} after {} iterations",
            mean.residual,
            mean.iterations
        );
    }
    let space = TangentSpace::new(mean.mean)?;
    let features = covs
        .iter()
        .map(|c| space.project(c).map(|v| v.components))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((space, features))
}

/// Per-trial classifier output.
#[derive(Debug, Clone, PartialEq)]
pub struct BciPrediction {
    pub trial_id: u32,
    pub label: Label,
    /// Signed distance to the separating hyperplane.
    pub raw_score: f64,
    /// Min-max normalized |raw_score|, in [0, 1].
    pub conf_norm: f64,
    pub fold: usize,
    pub in_cell: bool,
    pub cell: Option<CellKey>,
}

impl BciPrediction {
    pub fn from_score(trial_id: u32, raw_score: f64, fold: usize) -> Self {
        Self {
            trial_id,
            label: Label::from_score(raw_score),
            raw_score,
            conf_norm: 0.5,
            fold,
            in_cell: true,
            cell: None,
        }
    }
}

/// Sets `conf_norm` to the min-max scaled |raw_score| over the given set.
/// A degenerate range (single prediction or all equal) maps to 0.5.
pub fn normalize_confidence(preds: &mut [BciPrediction]) {
    let (lo, hi) = preds.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let a = p.raw_score.abs();
        (lo.min(a), hi.max(a))
    });
    let range = hi - lo;
    for p in preds.iter_mut() {
        p.conf_norm = if range > 0.0 {
            ((p.raw_score.abs() - lo) / range).clamp(0.0, 1.0)
        } else {
            0.5
        };
    }
}

/// Mean of per-class recall over the trials where `mask` is set. Classes
/// absent from the masked set are skipped; returns `None` if none remain.
pub fn balanced_accuracy(pred: &[Label], truth: &[Label], mask: &[bool]) -> Option<f64> {
    let mut hits = [0usize; 2];
    let mut totals = [0usize; 2];
    for ((p, t), m) in pred.iter().zip(truth).zip(mask) {
        if !m {
            continue;
        }
        let k = (*t == Label::NonTarget) as usize;
        totals[k] += 1;
        hits[k] += (p == t) as usize;
    }
    let recalls: Vec<f64> = (0..2)
        .filter(|&k| totals[k] > 0)
        .map(|k| hits[k] as f64 / totals[k] as f64)
        .collect();
    if recalls.is_empty() {
        None
    } else {
        Some(recalls.iter().sum::<f64>() / recalls.len() as f64)
    }
}
