//! Paired comparison of two team-accuracy vectors, plus the other tests
//! the stats module offers.

use neurofuse::stats;

fn main() -> Result<(), stats::StatsError> {
    // accuracy of the same eight teams under two fusion rules
    let hybrid = [0.92, 0.88, 0.95, 0.90, 0.97, 0.85, 0.91, 0.93];
    let human = [0.70, 0.72, 0.69, 0.80, 0.75, 0.71, 0.68, 0.74];

    let r = stats::rescue_delta(&hybrid, &human)?;
    println!("rescue delta {:+.2} pts via {} (p = {:.3e})", r.delta_pp, r.test.test, r.test.p_value);

    let w = stats::wilcoxon_signed_rank(&hybrid, &human)?;
    println!("wilcoxon W = {} over {} pairs, p = {:.4}", w.statistic, w.n, w.p_value);

    // mostly tied differences switch the rescue test to Wilcoxon
    let tied = stats::rescue_delta(&[0.9, 0.9, 0.9, 0.9, 0.95], &[0.9, 0.9, 0.9, 0.9, 0.80])?;
    println!("heavily tied: {} (p = {:.3})", tied.test.test, tied.test.p_value);

    let chi = stats::chi_square_2x2([[45, 5], [30, 20]])?;
    println!("chi-square 2x2 = {:.3}, p = {:.4}", chi.statistic, chi.p_value);

    let adj = stats::bonferroni(&[0.01, 0.02, 0.04], 12)?;
    println!("bonferroni over 12: {adj:?}");
    Ok(())
}
