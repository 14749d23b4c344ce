//! The 15-cell phase × RT-bound sweep for one session, followed by the
//! held-out prediction pass in the chosen cell.

use neurofuse::cohort::{self, CohortConfig};
use neurofuse::domain::Condition;
use neurofuse::oracle::{CellStatus, OracleConfig};
use neurofuse::pipeline::{self, EpochLayout};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let condition = match std::env::args().nth(1).as_deref() {
        Some("SA") => Condition::Sa,
        _ => Condition::Fla,
    };
    let cfg = CohortConfig {
        n_participants: 2,
        ..CohortConfig::default()
    };
    let rows = cohort::generate_trials(&cfg)?;
    let templates = cohort::participant_templates(&cfg)?;
    let session: Vec<_> = rows.iter().filter(|r| r.participant_id == 1 && r.condition == condition).cloned().collect();
    let store = cohort::generate_epochs(&cfg, &templates[0], &session)?;
    let layout = EpochLayout {
        labels: cfg.epoch.channel_labels(),
        sample_rate: cfg.epoch.sample_rate,
    };

    let out = pipeline::process_session(&session, &store, &layout, &layout.labels, &OracleConfig::default(), cfg.master_seed)?;
    println!("participant 1, {condition}");
    println!("{:<6} {:>8} {:>9} {:>10}", "phase", "bound", "retained", "score");
    for (i, c) in out.report.grid.iter().enumerate() {
        let score = match &c.status {
            CellStatus::Scored(s) => format!("{s:.3}"),
            CellStatus::TooFewTrials => "too few".into(),
            CellStatus::TooFewPerClass => "unbalanced".into(),
            CellStatus::Failed(e) => format!("failed: {e}"),
        };
        let mark = if out.report.selected == Some(i) { " <" } else { "" };
        println!("{:<6} {:>8} {:>9} {:>10}{mark}", c.cell.phase.to_string(), c.cell.bound.to_string(), c.retained, score);
    }
    let inside = out.predictions.iter().filter(|p| p.in_cell).count();
    println!("{} predictions, {inside} held out inside the selected cell", out.predictions.len());
    Ok(())
}
