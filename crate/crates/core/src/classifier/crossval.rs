//! Stratified k-fold cross-validation producing held-out scores.

use rand::seq::SliceRandom;

use super::{build_feature_set, fit_weighted_logreg, BciPrediction, ClassifierError, LinearModel};
use crate::domain::Label;
use crate::seed;
use crate::spd::SpdMatrix;

/// Where tangent features come from.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSource<'a> {
    /// Features precomputed at one reference over every trial.
    Global(&'a [Vec<f64>]),
    /// Raw covariances; each training split gets its own Fréchet reference.
    PerFold(&'a [SpdMatrix]),
}

impl FeatureSource<'_> {
    pub fn len(&self) -> usize {
        match self {
            FeatureSource::Global(f) => f.len(),
            FeatureSource::PerFold(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-trial inputs to cross-validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvTrial {
    pub trial_id: u32,
    pub truth: Label,
    /// Quarantine weight, used only when the trial is in a training split.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    /// One prediction per input trial, in input order.
    pub predictions: Vec<BciPrediction>,
    pub requested_folds: usize,
    pub folds_used: usize,
}

impl CvOutcome {
    pub fn fell_back(&self) -> bool {
        self.folds_used != self.requested_folds
    }
}

/// Assigns trials to `k` folds: shuffle with `seed`, then deal each stratum
/// (class × positive weight) round-robin, continuing the dealer position
/// across strata so fold sizes stay balanced.
pub fn assign_folds(trials: &[CvTrial], k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.shuffle(&mut seed::rng_from_seed(seed));
    let stratum = |t: &CvTrial| (t.truth == Label::NonTarget) as usize * 2 + (t.weight > 0.0) as usize;
    let mut fold = vec![0; trials.len()];
    let mut dealer = 0;
    for s in 0..4 {
        for &i in order.iter().filter(|&&i| stratum(&trials[i]) == s) {
            fold[i] = dealer % k;
            dealer += 1;
        }
    }
    fold
}

fn fold_feasible(trials: &[CvTrial], folds: &[usize], k: usize) -> bool {
    // Totals of positive-weight samples per class, minus those held out.
    let mut total = [0usize; 2];
    let mut held = vec![[0usize; 2]; k];
    let mut sizes = vec![0usize; k];
    for (t, &f) in trials.iter().zip(folds) {
        sizes[f] += 1;
        if t.weight > 0.0 {
            let c = (t.truth == Label::NonTarget) as usize;
            total[c] += 1;
            held[f][c] += 1;
        }
    }
    (0..k).all(|f| sizes[f] > 0 && total[0] > held[f][0] && total[1] > held[f][1])
}

/// Picks a fold count from the chain `k → 3 → n` (leave-one-out) and
/// returns the assignment, or an error when none is feasible.
pub fn choose_folds(trials: &[CvTrial], k: usize, seed: u64) -> Result<(usize, Vec<usize>), ClassifierError> {
    let n = trials.len();
    let mut chain = vec![k];
    if k > 3 {
        chain.push(3);
    }
    chain.push(n);
    for kk in chain {
        if kk < 2 || kk > n {
            continue;
        }
        let folds = if kk == n {
            (0..n).collect()
        } else {
            assign_folds(trials, kk, seed)
        };
        if fold_feasible(trials, &folds, kk) {
            return Ok((kk, folds));
        }
    }
    Err(ClassifierError::FoldsInfeasible)
}

/// Trains on the `train` indices. In per-fold mode the returned tangent
/// space is the one the model lives in.
pub fn fit_subset(
    source: FeatureSource<'_>,
    trials: &[CvTrial],
    train: &[usize],
    c: f64,
) -> Result<(LinearModel, Option<crate::spd::TangentSpace>), ClassifierError> {
    let (space, xs) = match source {
        FeatureSource::Global(f) => (None, train.iter().map(|&i| f[i].clone()).collect::<Vec<_>>()),
        FeatureSource::PerFold(covs) => {
            let sub: Vec<SpdMatrix> = train.iter().map(|&i| covs[i].clone()).collect();
            let (space, xs) = build_feature_set(&sub)?;
            (Some(space), xs)
        }
    };
    let y: Vec<Label> = train.iter().map(|&i| trials[i].truth).collect();
    let w: Vec<f64> = train.iter().map(|&i| trials[i].weight).collect();
    let model = fit_weighted_logreg(&xs, &y, &w, c)?;
    Ok((model, space))
}

/// Projects trial `i` into the geometry a model was trained in.
pub fn features_for(
    source: FeatureSource<'_>,
    space: Option<&crate::spd::TangentSpace>,
    i: usize,
) -> Result<Vec<f64>, ClassifierError> {
    match (source, space) {
        (FeatureSource::Global(f), _) => Ok(f[i].clone()),
        (FeatureSource::PerFold(covs), Some(s)) => Ok(s.project(&covs[i])?.components),
        (FeatureSource::PerFold(_), None) => Err(ClassifierError::Empty),
    }
}

/// Held-out predictions for every trial. Confidence is left at the neutral
/// value; callers normalize over the set they report.
pub fn crossval_predict(
    source: FeatureSource<'_>,
    trials: &[CvTrial],
    k: usize,
    c: f64,
    seed: u64,
) -> Result<CvOutcome, ClassifierError> {
    if trials.is_empty() {
        return Err(ClassifierError::Empty);
    }
    if source.len() != trials.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: trials.len(),
            actual: source.len(),
        });
    }
    let (used, folds) = choose_folds(trials, k, seed)?;
    if used != k {
        log::info!("cross-validation fell back from {k} to {used} folds");
    }
    let mut preds: Vec<Option<BciPrediction>> = vec![None; trials.len()];
    for f in 0..used {
        let train: Vec<usize> = (0..trials.len()).filter(|&i| folds[i] != f).collect();
        let (model, space) = fit_subset(source, trials, &train, c)?;
        for i in (0..trials.len()).filter(|&i| folds[i] == f) {
            let x = features_for(source, space.as_ref(), i)?;
            preds[i] = Some(BciPrediction::from_score(trials[i].trial_id, model.score(&x), f));
        }
    }
    Ok(CvOutcome {
        predictions: preds.into_iter().map(|p| p.expect("partition covers every trial")).collect(),
        requested_folds: k,
        folds_used: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::DEFAULT_C;

    fn trial(i: u32, truth: Label, weight: f64) -> CvTrial {
        CvTrial { trial_id: i, truth, weight }
    }

    #[test]
    fn loo_on_separable_quartet() {
        let x = vec![vec![10.0, 0.0], vec![12.0, 0.5], vec![-10.0, 0.0], vec![-12.0, -0.5]];
        let t: Vec<CvTrial> = [Label::Target, Label::Target, Label::NonTarget, Label::NonTarget]
            .iter()
            .enumerate()
            .map(|(i, &l)| trial(i as u32, l, 1.0))
            .collect();
        let out = crossval_predict(FeatureSource::Global(&x), &t, 4, DEFAULT_C, 11).unwrap();
        assert_eq!(out.folds_used, 4);
        for (p, tr) in out.predictions.iter().zip(&t) {
            assert_eq!(p.label, tr.truth);
        }
    }

    #[test]
    fn identical_features_predict_majority() {
        let x = vec![vec![1.0, 1.0]; 10];
        let t: Vec<CvTrial> = (0..10)
            .map(|i| trial(i, if i < 7 { Label::NonTarget } else { Label::Target }, 1.0))
            .collect();
        let out = crossval_predict(FeatureSource::Global(&x), &t, 5, DEFAULT_C, 3).unwrap();
        let correct = out.predictions.iter().zip(&t).filter(|(p, t)| p.label == t.truth).count();
        assert_eq!(correct, 7);
    }

    #[test]
    fn partition_and_fallback() {
        // Only two positive-weight Targets: 5 and 3 folds are infeasible
        // whenever both land in the same held-out fold, LOO always works.
        let mut t: Vec<CvTrial> = (0..12).map(|i| trial(i, Label::NonTarget, 1.0)).collect();
        t.push(trial(12, Label::Target, 1.0));
        t.push(trial(13, Label::Target, 1.0));
        let folds = assign_folds(&t, 5, 1);
        let mut counts = [0; 5];
        for f in &folds {
            counts[*f] += 1;
        }
        assert!(counts.iter().all(|&c| c == 2 || c == 3));
        let (k, _) = choose_folds(&t, 5, 1).unwrap();
        assert_eq!(k, 5);

        let mut lone = t.clone();
        lone[13].weight = 0.0;
        assert!(matches!(choose_folds(&lone, 5, 1), Err(ClassifierError::FoldsInfeasible)));
    }

    #[test]
    fn each_trial_predicted_once_per_fold_model() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 2) as f64 * 2.0 - 1.0 + 0.01 * i as f64]).collect();
        let t: Vec<CvTrial> = (0..30)
            .map(|i| trial(i, if i % 2 == 1 { Label::Target } else { Label::NonTarget }, (i % 7 != 0) as u8 as f64))
            .collect();
        let out = crossval_predict(FeatureSource::Global(&x), &t, 5, DEFAULT_C, 5).unwrap();
        let ids: Vec<u32> = out.predictions.iter().map(|p| p.trial_id).collect();
        assert_eq!(ids, (0..30).collect::<Vec<_>>());
        assert!(out.predictions.iter().all(|p| p.fold < 5));
    }
}
