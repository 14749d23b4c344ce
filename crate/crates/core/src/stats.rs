//! Significance tests for method comparisons.
//!
//! Special functions are evaluated with Lentz continued fractions and
//! power series to roughly 1e-12 relative accuracy.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} pairs, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("differences have zero variance")]
    ZeroVariance,
    #[error("all differences are zero")]
    AllZero,
    #[error("contingency table has an empty row or column")]
    ZeroMarginal,
    #[error("family size {m} is smaller than the number of tests {k}")]
    FamilyTooSmall { m: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    PairedT,
    Wilcoxon,
    ChiSquare,
    /// Identical inputs; no test run.
    Degenerate,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::PairedT => "paired_t",
            TestKind::Wilcoxon => "wilcoxon",
            TestKind::ChiSquare => "chi_square",
            TestKind::Degenerate => "none",
        })
    }
}

impl std::str::FromStr for TestKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paired_t" => Ok(TestKind::PairedT),
            "wilcoxon" => Ok(TestKind::Wilcoxon),
            "chi_square" => Ok(TestKind::ChiSquare),
            "none" => Ok(TestKind::Degenerate),
            other => Err(format!("unknown test {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub test: TestKind,
}

const EPS: f64 = 1e-15;
const TINY: f64 = 1e-300;

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_front = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // Series for P, then complement.
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..10_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        1.0 - sum * ln_front.exp()
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        ln_front.exp() * h
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        2.0 - gamma_q(0.5, x * x)
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Survival function of χ² with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0).clamp(0.0, 1.0)
}

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Paired t-test on `a − b`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    let d = differences(a, b)?;
    paired_t_diffs(&d)
}

pub fn paired_t_diffs(d: &[f64]) -> Result<TestResult, StatsError> {
    let n = d.len();
    if n < 2 {
        return Err(StatsError::TooFew { need: 2, got: n });
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    let t = mean / (var / n as f64).sqrt();
    Ok(TestResult {
        statistic: t,
        p_value: student_t_two_sided(t, (n - 1) as f64),
        n,
        test: TestKind::PairedT,
    })
}

/// Ranks of `|d|` (1-based, ties averaged) and the tie-group sizes.
fn signed_ranks(d: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs()));
    let mut ranks = vec![0.0; d.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && d[idx[j + 1]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

pub const WILCOXON_EXACT_MAX_N: usize = 20;

/// Exact two-sided p of `min(W⁺, W⁻) = w` by enumerating all sign patterns
/// of the given ranks (ranks are doubled to stay integral).
pub fn wilcoxon_exact_p(ranks: &[f64], w: f64) -> f64 {
    let twice: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = twice.iter().sum();
    let mut dist = vec![0f64; total + 1];
    dist[0] = 1.0;
    for &r in &twice {
        for s in (r..=total).rev() {
            dist[s] += dist[s - r];
        }
    }
    let patterns = 2f64.powi(ranks.len() as i32);
    let limit = (2.0 * w).round() as usize;
    let tail: f64 = dist[..=limit.min(total)].iter().sum();
    (2.0 * tail / patterns).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
pub fn wilcoxon_normal_p(n: usize, ties: &[usize], w: f64) -> f64 {
    let n = n as f64;
    let mean = n * (n + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum::<f64>() / 48.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Wilcoxon signed-rank test on `a − b`; zero differences are dropped.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    let d = differences(a, b)?;
    wilcoxon_diffs(&d)
}

pub fn wilcoxon_diffs(d: &[f64]) -> Result<TestResult, StatsError> {
    let nz: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
    if nz.is_empty() {
        return Err(StatsError::AllZero);
    }
    let (ranks, ties) = signed_ranks(&nz);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).fold(0.0, |a, (_, r)| a + r);
    let w_minus: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x < 0.0).fold(0.0, |a, (_, r)| a + r);
    let w = w_plus.min(w_minus);
    let p = if nz.len() <= WILCOXON_EXACT_MAX_N {
        wilcoxon_exact_p(&ranks, w)
    } else {
        wilcoxon_normal_p(nz.len(), &ties, w)
    };
    Ok(TestResult {
        statistic: w,
        p_value: p,
        n: nz.len(),
        test: TestKind::Wilcoxon,
    })
}

/// Pearson χ² on a 2×2 table, no continuity correction, df = 1.
pub fn chi_square_2x2(t: [[u64; 2]; 2]) -> Result<TestResult, StatsError> {
    let rows = [t[0][0] + t[0][1], t[1][0] + t[1][1]];
    let cols = [t[0][0] + t[1][0], t[0][1] + t[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(StatsError::ZeroMarginal);
    }
    let total = (rows[0] + rows[1]) as f64;
    let mut chi = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] as f64 * cols[j] as f64 / total;
            chi += (t[i][j] as f64 - e).powi(2) / e;
        }
    }
    Ok(TestResult {
        statistic: chi,
        p_value: erfc((chi / 2.0).sqrt()).clamp(0.0, 1.0),
        n: total as usize,
        test: TestKind::ChiSquare,
    })
}

/// `min(1, m·p)` for each p.
pub fn bonferroni(p: &[f64], m: usize) -> Result<Vec<f64>, StatsError> {
    if m < p.len() {
        return Err(StatsError::FamilyTooSmall { m, k: p.len() });
    }
    Ok(p.iter().map(|&x| (x * m as f64).min(1.0)).collect())
}

/// Hybrid-minus-behavioural comparison over paired team accuracies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescueDelta {
    /// Percentage points.
    pub delta_pp: f64,
    pub test: TestResult,
}

/// Share of zero differences above which the rank test is used instead of t.
pub const HEAVY_TIE_SHARE: f64 = 0.5;

/// Mean difference in points and its paired test. Identical inputs give a
/// delta of 0 with p = 1 and a degenerate test tag.
pub fn rescue_delta(hybrid: &[f64], behavioural: &[f64]) -> Result<RescueDelta, StatsError> {
    let d = differences(hybrid, behavioural)?;
    if d.is_empty() {
        return Err(StatsError::TooFew { need: 1, got: 0 });
    }
    let delta_pp = 100.0 * d.iter().sum::<f64>() / d.len() as f64;
    let zeros = d.iter().filter(|&&x| x == 0.0).count();
    if zeros == d.len() {
        return Ok(RescueDelta {
            delta_pp: 0.0,
            test: TestResult {
                statistic: 0.0,
                p_value: 1.0,
                n: d.len(),
                test: TestKind::Degenerate,
            },
        });
    }
    let heavily_tied = zeros as f64 / d.len() as f64 > HEAVY_TIE_SHARE;
    let test = if heavily_tied {
        wilcoxon_diffs(&d)?
    } else {
        match paired_t_diffs(&d) {
            Ok(t) => t,
            Err(StatsError::ZeroVariance) | Err(StatsError::TooFew { .. }) => wilcoxon_diffs(&d)?,
            Err(e) => return Err(e),
        }
    };
    Ok(RescueDelta { delta_pp, test })
}

/// One stats.csv row.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub comparison: String,
    pub condition: String,
    pub team_size: usize,
    pub subset: String,
    pub delta_pp: f64,
    pub test: TestResult,
    pub p_corrected: f64,
}

pub const STATS_HEADER: &str = "comparison,condition,team_size,subset,delta_pp,test,statistic,p_raw,p_corrected,n_pairs";

pub fn write_stats<W: Write>(mut w: W, rows: &[ComparisonRow]) -> io::Result<()> {
    writeln!(w, "{STATS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.4},{},{:.6},{:.6e},{:.6e},{}",
            r.comparison,
            r.condition,
            r.team_size,
            r.subset,
            r.delta_pp,
            r.test.test,
            r.test.statistic,
            r.test.p_value,
            r.p_corrected,
            r.test.n
        )?;
    }
    Ok(())
}

pub fn read_stats<R: io::BufRead>(r: R) -> Result<Vec<ComparisonRow>, String> {
    let mut lines = r.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h == STATS_HEADER => {}
        Some((_, Ok(h))) => return Err(format!("unexpected stats header {h:?}")),
        Some((_, Err(e))) => return Err(e.to_string()),
        None => return Err("empty stats file".into()),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| e.to_string())?;
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| format!("stats line {}: bad {what}", i + 1);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(bad("field count"));
        }
        let num = |k: usize, what: &str| f[k].parse::<f64>().map_err(|_| bad(what));
        out.push(ComparisonRow {
            comparison: f[0].to_string(),
            condition: f[1].to_string(),
            team_size: f[2].parse().map_err(|_| bad("team_size"))?,
            subset: f[3].to_string(),
            delta_pp: num(4, "delta_pp")?,
            test: TestResult {
                statistic: num(6, "statistic")?,
                p_value: num(7, "p_raw")?,
                n: f[9].parse().map_err(|_| bad("n_pairs"))?,
                test: f[5].parse().map_err(|_| bad("test"))?,
            },
            p_corrected: num(8, "p_corrected")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn special_function_identities() {
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
        assert!((erfc(0.0) - 1.0).abs() < 1e-14);
        assert!((erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-13);
        assert!((erfc(-1.0) - 1.842_700_792_949_714_9).abs() < 1e-13);
        // I_x(1, 1) = x; I_x(a, b) = 1 − I_{1−x}(b, a).
        assert!((inc_beta(1.0, 1.0, 0.3) - 0.3).abs() < 1e-14);
        assert!((inc_beta(2.5, 1.5, 0.4) + inc_beta(1.5, 2.5, 0.6) - 1.0).abs() < 1e-13);
        // χ²(df = 2) survival is exp(−x/2).
        assert!((chi_square_sf(3.0, 2.0) - (-1.5f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn paired_t_examples() {
        assert!(matches!(paired_t_diffs(&[1.0, 1.0, 1.0]), Err(StatsError::ZeroVariance)));
        let sym = paired_t_diffs(&[-1.0, 1.0]).unwrap();
        assert_eq!(sym.statistic, 0.0);
        assert!((sym.p_value - 1.0).abs() < 1e-12);
        let r = paired_t(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
        assert!((r.statistic - 3.0 * 5f64.sqrt() / 2.5f64.sqrt()).abs() < 1e-12);
        assert!((r.statistic - 4.2426).abs() < 1e-4);
        assert!((r.p_value - 0.0132).abs() < 1e-4);
    }

    #[test]
    fn wilcoxon_examples() {
        let r = wilcoxon_diffs(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.25).abs() < 1e-15);
        let s = wilcoxon_diffs(&[-2.0, 2.0]).unwrap();
        assert_eq!(s.p_value, 1.0);
        assert!(matches!(wilcoxon_diffs(&[0.0, 0.0]), Err(StatsError::AllZero)));
    }

    #[test]
    fn wilcoxon_paths_agree_at_boundary() {
        let d: Vec<f64> = (1..=20).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 * 1.01 }).collect();
        let (ranks, ties) = signed_ranks(&d);
        let wp: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).fold(0.0, |a, (_, r)| a + r);
        let wm: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x < 0.0).fold(0.0, |a, (_, r)| a + r);
        let w = wp.min(wm);
        let exact = wilcoxon_exact_p(&ranks, w);
        let approx = wilcoxon_normal_p(20, &ties, w);
        assert!((exact - approx).abs() < 0.02, "{exact} vs {approx}");
    }

    #[test]
    fn chi_square_examples() {
        let z = chi_square_2x2([[10, 10], [10, 10]]).unwrap();
        assert_eq!(z.statistic, 0.0);
        assert!((z.p_value - 1.0).abs() < 1e-14);
        let r = chi_square_2x2([[20, 10], [10, 20]]).unwrap();
        assert!((r.statistic - 20.0 / 3.0).abs() < 1e-9);
        assert!((r.p_value - 0.0098).abs() < 1e-3);
        assert!((r.p_value - chi_square_sf(r.statistic, 1.0)).abs() < 1e-12);
        let d = chi_square_2x2([[40, 20], [20, 40]]).unwrap();
        assert!((d.statistic - 2.0 * r.statistic).abs() < 1e-9);
        assert!(matches!(chi_square_2x2([[0, 0], [3, 4]]), Err(StatsError::ZeroMarginal)));
    }

    #[test]
    fn bonferroni_examples() {
        assert!((bonferroni(&[0.01], 4).unwrap()[0] - 0.04).abs() < 1e-15);
        assert_eq!(bonferroni(&[0.5], 3).unwrap(), vec![1.0]);
        assert_eq!(bonferroni(&[0.2, 0.3], 2).unwrap(), vec![0.4, 0.6]);
        assert_eq!(bonferroni(&[0.2], 1).unwrap(), vec![0.2]);
        assert!(bonferroni(&[0.1, 0.2], 1).is_err());
    }

    #[test]
    fn rescue_delta_cases() {
        let same = rescue_delta(&[0.5, 0.7], &[0.5, 0.7]).unwrap();
        assert_eq!(same.delta_pp, 0.0);
        assert_eq!(same.test.p_value, 1.0);
        assert_eq!(same.test.test, TestKind::Degenerate);
        let r = rescue_delta(&[0.9, 0.8, 0.85, 0.95], &[0.7, 0.7, 0.7, 0.72]).unwrap();
        assert!((r.delta_pp - 17.0).abs() < 1e-9);
        assert_eq!(r.test.test, TestKind::PairedT);
        let tied = rescue_delta(&[0.5, 0.5, 0.5, 0.9], &[0.5, 0.5, 0.5, 0.6]).unwrap();
        assert_eq!(tied.test.test, TestKind::Wilcoxon);
        assert!(rescue_delta(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn stats_csv_round_trip() {
        let row = ComparisonRow {
            comparison: "RtPlusBci-vs-RtWeightedHuman".into(),
            condition: "FLA".into(),
            team_size: 8,
            subset: "ai_deceptive".into(),
            delta_pp: 7.5,
            test: TestResult {
                statistic: 12.25,
                p_value: 1e-30,
                n: 24310,
                test: TestKind::PairedT,
            },
            p_corrected: 1.2e-29,
        };
        let mut buf = Vec::new();
        write_stats(&mut buf, std::slice::from_ref(&row)).unwrap();
        let back = read_stats(&buf[..]).unwrap();
        assert_eq!(back, vec![row]);
    }
}
