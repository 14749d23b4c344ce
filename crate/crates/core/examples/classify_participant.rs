//! Cross-validated tangent-space classification of one participant's
//! sessions, trained only on behaviourally correct trials.

use neurofuse::classifier::crossval::{crossval_predict, CvTrial, FeatureSource};
use neurofuse::classifier::{balanced_accuracy, build_feature_set, quarantine_weights, DEFAULT_C};
use neurofuse::cohort::{self, CohortConfig};
use neurofuse::domain::{Condition, Label};
use neurofuse::pipeline::{self, EpochLayout};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = CohortConfig {
        n_participants: 3,
        ..CohortConfig::default()
    };
    let rows = cohort::generate_trials(&cfg)?;
    let templates = cohort::participant_templates(&cfg)?;
    let layout = EpochLayout {
        labels: cfg.epoch.channel_labels(),
        sample_rate: cfg.epoch.sample_rate,
    };

    for c in Condition::ALL {
        let session: Vec<_> = rows.iter().filter(|r| r.participant_id == 1 && r.condition == c).cloned().collect();
        let store = cohort::generate_epochs(&cfg, &templates[0], &session)?;
        let covs = pipeline::session_covariances(&store, &layout, &layout.labels)?;
        let (_, features) = build_feature_set(&covs)?;

        let labeled: Vec<_> = session.iter().map(|r| r.labeled()).collect();
        let weights = quarantine_weights(&labeled);
        let cv: Vec<CvTrial> = labeled
            .iter()
            .zip(&weights)
            .map(|(t, &w)| CvTrial { trial_id: t.trial_id, truth: t.truth, weight: w })
            .collect();
        let out = crossval_predict(FeatureSource::Global(&features), &cv, 5, DEFAULT_C, 42)?;

        let pred: Vec<Label> = out.predictions.iter().map(|p| p.label).collect();
        let truth: Vec<Label> = labeled.iter().map(|t| t.truth).collect();
        let all = vec![true; truth.len()];
        let fast: Vec<bool> = labeled.iter().map(|t| t.rt_s.is_some_and(|rt| rt <= 0.8)).collect();
        println!(
            "{c}: {} trials, {} training-eligible, {} folds, balanced accuracy {:.3} (rt <= 0.8 s: {:.3})",
            truth.len(),
            weights.iter().filter(|&&w| w > 0.0).count(),
            out.folds_used,
            balanced_accuracy(&pred, &truth, &all).unwrap_or(f64::NAN),
            balanced_accuracy(&pred, &truth, &fast).unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
