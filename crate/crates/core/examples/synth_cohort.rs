//! Generate a synthetic cohort and print its behavioural profile.

use neurofuse::cohort::{self, CohortConfig};
use neurofuse::domain::Condition;

fn pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{:.1}%", 100.0 * x))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = CohortConfig::default();
    let rows = cohort::generate_trials(&cfg)?;
    println!("{} participants, {} trial rows", cfg.n_participants, rows.len());
    println!("{:<5} {:>8} {:>10} {:>12} {:>8}", "cond", "overall", "ai_correct", "ai_deceptive", "misses");
    for c in Condition::ALL {
        let of = |f: &dyn Fn(&cohort::TrialRecord) -> bool| cohort::pooled_accuracy(&rows, |r| r.condition == c && f(r));
        let misses = rows.iter().filter(|r| r.condition == c && r.missed()).count();
        println!(
            "{:<5} {:>8} {:>10} {:>12} {:>8}",
            c.to_string(),
            pct(of(&|_| true)),
            pct(of(&|r| r.ai_correct)),
            pct(of(&|r| !r.ai_correct)),
            misses
        );
    }

    let templates = cohort::participant_templates(&cfg)?;
    let p1: Vec<_> = rows.iter().filter(|r| r.participant_id == 1 && r.condition == Condition::Sa).cloned().collect();
    let store = cohort::generate_epochs(&cfg, &templates[0], &p1)?;
    println!("participant 1 SA epochs: {}", store.trial_count());

    let mut out = Vec::new();
    cohort::write_trials(&mut out, &rows[..4])?;
    print!("{}", String::from_utf8(out)?);
    Ok(())
}
