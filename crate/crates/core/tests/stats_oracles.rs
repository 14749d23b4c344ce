//! Special functions and tests checked against statrs and brute force.

use neurofuse::stats;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

#[test]
fn t_tail_matches_statrs() {
    for df in [1.0, 2.0, 4.0, 9.0, 29.0, 150.0, 24_309.0] {
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        for t in [0.0, 0.1, 0.7, 1.5, 2.3, 4.2426, 8.0] {
            let want = 2.0 * (1.0 - dist.cdf(t));
            let got = stats::student_t_two_sided(t, df);
            assert!((got - want).abs() < 1e-9, "df {df} t {t}: {got} vs {want}");
        }
    }
}

#[test]
fn chi_square_tail_matches_statrs() {
    for df in [1.0, 2.0, 3.0, 7.0] {
        let dist = ChiSquared::new(df).unwrap();
        for x in [0.01, 0.5, 1.0, 3.84, 6.667, 15.0] {
            let want = 1.0 - dist.cdf(x);
            let got = stats::chi_square_sf(x, df);
            assert!((got - want).abs() < 1e-9, "df {df} x {x}: {got} vs {want}");
        }
    }
    // df = 1 via the error-function identity.
    for x in [0.2f64, 2.0, 6.667, 12.0] {
        assert!((stats::erfc((x / 2.0).sqrt()) - stats::chi_square_sf(x, 1.0)).abs() < 1e-12);
    }
}

#[test]
fn paired_t_example_against_statrs() {
    let r = stats::paired_t_diffs(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let dist = StudentsT::new(0.0, 1.0, 4.0).unwrap();
    let want = 2.0 * (1.0 - dist.cdf(r.statistic));
    assert!((r.p_value - want).abs() < 1e-10);
}

/// Two-sided p by listing every sign assignment.
fn brute_force_p(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
    let n = nz.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| nz[a].abs().total_cmp(&nz[b].abs()));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[idx[j + 1]].abs() == nz[idx[i]].abs() {
            j += 1;
        }
        for &k in &idx[i..=j] {
            ranks[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    let total: f64 = ranks.iter().sum();
    let wp: f64 = (0..n).filter(|&k| nz[k] > 0.0).map(|k| ranks[k]).sum();
    let w = wp.min(total - wp);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        if s <= w + 1e-9 {
            hits += 1;
        }
    }
    (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
}

#[test]
fn exact_wilcoxon_matches_enumeration() {
    let mut rng = neurofuse::seed::rng_from_seed(5);
    for _ in 0..40 {
        let n = rng.random_range(1..13);
        let d: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-4i32..5))).collect();
        if d.iter().all(|&x| x == 0.0) {
            continue;
        }
        let got = stats::wilcoxon_diffs(&d).unwrap().p_value;
        assert!((got - brute_force_p(&d)).abs() < 1e-12, "{d:?}");
    }
}

#[test]
fn wilcoxon_switches_to_normal_above_twenty() {
    let d: Vec<f64> = (1..=25).map(|i| if i % 4 == 0 { -(i as f64) } else { i as f64 }).collect();
    let r = stats::wilcoxon_diffs(&d).unwrap();
    assert_eq!(r.n, 25);
    assert!(r.p_value > 0.0 && r.p_value < 0.05);
}
