#![allow(dead_code)]

use std::path::Path;

use nalgebra::DMatrix;
use neurofuse::app::RunConfig;
use neurofuse::spd::{self, SpdMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

/// Symmetric matrix with N(0, scale²) entries.
pub fn random_symmetric<R: Rng>(p: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    (&a + a.transpose()) * 0.5
}

/// exp of a random symmetric matrix: eigenvalues roughly within e^{±2·scale}.
pub fn random_spd<R: Rng>(p: usize, scale: f64, rng: &mut R) -> SpdMatrix {
    spd::matrix_exp(&random_symmetric(p, scale, rng)).unwrap()
}

/// Max-entry difference relative to the larger max-entry magnitude.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1e-300)
}

/// A cohort small enough for end-to-end tests: 6 participants, 2 blocks of
/// 40 trials per condition, teams of 2 and 3.
pub fn small_config(workdir: &Path) -> RunConfig {
    let mut c = RunConfig {
        workdir: workdir.to_path_buf(),
        ..RunConfig::default()
    };
    for (k, v) in [
        ("cohort.n_participants", "6"),
        ("cohort.blocks", "2"),
        ("cohort.trials_per_block", "40"),
        ("cohort.targets_per_block", "16"),
        ("cohort.epoch.channels", "8"),
        ("cohort.epoch.sample_rate", "250"),
        ("simulate.sizes", "2,3"),
    ] {
        c.set(k, v).unwrap();
    }
    c
}
