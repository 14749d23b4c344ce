//! Every stage through the library `Runner`, the same path the binary takes.
//!
//! ```text
//! cargo run --release --example full_run -- /tmp/nf-run
//! ```

use std::path::PathBuf;

use neurofuse::app::{RunConfig, Runner};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let workdir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("neurofuse-example"));
    let mut cfg = RunConfig {
        workdir,
        ..RunConfig::default()
    };
    // a smaller cohort keeps this to a few seconds
    cfg.set("cohort.n_participants", "8")?;
    cfg.set("simulate.sizes", "2,4")?;
    cfg.report.svg = true;

    let mut runner = Runner::new(cfg, false)?;
    for (stage, outcome) in runner.run_all()? {
        println!("{stage:<9} {outcome:?}");
    }
    println!("outputs in {}", runner.workdir().display());
    if let Some(s) = runner.summary() {
        print!("{s}");
    }
    Ok(())
}
