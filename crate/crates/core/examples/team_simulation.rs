//! End-to-end in memory: cohort, per-session classification, then every
//! team of each size voted with each fusion rule.

use neurofuse::cohort::{self, CohortConfig};
use neurofuse::domain::Condition;
use neurofuse::oracle::OracleConfig;
use neurofuse::pipeline::{self, EpochLayout, PredictionRecord};
use neurofuse::team::{self, Method, RtWeight, Subset};
use rayon::prelude::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = CohortConfig {
        n_participants: 10,
        ..CohortConfig::default()
    };
    let rows = cohort::generate_trials(&cfg)?;
    let templates = cohort::participant_templates(&cfg)?;
    let layout = EpochLayout {
        labels: cfg.epoch.channel_labels(),
        sample_rate: cfg.epoch.sample_rate,
    };
    let sessions = neurofuse::app::sessions(&rows);
    let preds: Vec<PredictionRecord> = sessions
        .par_iter()
        .map(|(pid, s)| {
            let store = cohort::generate_epochs(&cfg, &templates[*pid as usize - 1], s)?;
            let out = pipeline::process_session(s, &store, &layout, &layout.labels, &OracleConfig::default(), cfg.master_seed)?;
            Ok(out.records())
        })
        .collect::<Result<Vec<_>, Box<dyn std::error::Error + Send + Sync>>>()
        .map_err(|e| e as Box<dyn std::error::Error>)?
        .into_iter()
        .flatten()
        .collect();

    let sizes = [2, 4, 6];
    let shown = [Method::MajorityHuman, Method::RtWeightedHuman, Method::BciConfWeighted, Method::RtPlusBci];
    for c in Condition::ALL {
        let data = pipeline::build_condition_data(&rows, &preds, c, RtWeight::Inverse)?;
        let results = team::simulate(&data, &shown, &sizes)?;
        println!("{c}, trials where the assistant was wrong ({} trials)", data.ai_correct.iter().filter(|&&a| !a).count());
        print!("{:<22}", "method");
        for m in sizes {
            print!(" {:>7}", format!("N={m}"));
        }
        println!();
        for method in shown {
            print!("{:<22}", method.name());
            for m in sizes {
                let r = results
                    .iter()
                    .find(|r| r.method == method && r.team_size == m && r.subset == Subset::AiDeceptive)
                    .unwrap();
                print!(" {:>6.1}%", 100.0 * r.mean_accuracy);
            }
            println!();
        }
    }
    Ok(())
}
