//! Summary text and SVG accuracy charts.

use std::fmt::Write as _;

use crate::domain::Condition;
use crate::stats::ComparisonRow;
use crate::team::{Method, Subset, TeamResult};

/// Largest rescue delta per condition, if the condition has any rows.
pub fn max_rescue(rows: &[ComparisonRow], condition: Condition) -> Option<&ComparisonRow> {
    rows.iter()
        .filter(|r| r.condition == condition.code())
        .max_by(|a, b| a.delta_pp.total_cmp(&b.delta_pp))
}

fn accuracy_table(out: &mut String, results: &[TeamResult], condition: Condition, subset: Subset) {
    let mut sizes: Vec<usize> = results.iter().map(|r| r.team_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let _ = write!(out, "{:<24}", "method");
    for s in &sizes {
        let _ = write!(out, " {:>8}", format!("N={s}"));
    }
    out.push('\n');
    for m in Method::ALL {
        let row: Vec<&TeamResult> = results
            .iter()
            .filter(|r| r.method == m && r.condition == condition && r.subset == subset)
            .collect();
        if row.is_empty() {
            continue;
        }
        let _ = write!(out, "{:<24}", m.name());
        for s in &sizes {
            match row.iter().find(|r| r.team_size == *s) {
                Some(r) => {
                    let _ = write!(out, " {:>8.2}", 100.0 * r.mean_accuracy);
                }
                None => {
                    let _ = write!(out, " {:>8}", "-");
                }
            }
        }
        out.push('\n');
    }
}

pub fn summary_text(results: &[TeamResult], stats: &[ComparisonRow]) -> String {
    let mut out = String::from("neurofuse run summary\n\n");
    for c in Condition::ALL {
        match max_rescue(stats, c) {
            Some(r) => {
                let _ = writeln!(
                    out,
                    "{c}: max rescue delta {:+.2} pts ({}, N={}, {}, corrected p = {:.3e})",
                    r.delta_pp, r.comparison, r.team_size, r.subset, r.p_corrected
                );
            }
            None => {
                let _ = writeln!(out, "{c}: no comparisons");
            }
        }
    }
    for c in Condition::ALL {
        for s in Subset::ALL {
            if !results.iter().any(|r| r.condition == c && r.subset == s) {
                continue;
            }
            let _ = writeln!(out, "\n{c} team accuracy (%), trials: {s}");
            accuracy_table(&mut out, results, c, s);
        }
    }
    out
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Line chart of accuracy against team size, one line per method.
pub fn accuracy_svg(results: &[TeamResult], condition: Condition, subset: Subset) -> String {
    let rows: Vec<&TeamResult> = results
        .iter()
        .filter(|r| r.condition == condition && r.subset == subset)
        .collect();
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (60.0, 220.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.team_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let (smin, smax) = (
        *sizes.first().unwrap_or(&1) as f64,
        *sizes.last().unwrap_or(&2) as f64,
    );
    let lo = rows
        .iter()
        .map(|r| 100.0 * r.mean_accuracy)
        .fold(100.0f64, f64::min);
    let ymin = ((lo / 10.0).floor() * 10.0).clamp(0.0, 90.0);
    let ymax = 100.0;
    let x = |s: f64| {
        if smax > smin {
            left + pw * (s - smin) / (smax - smin)
        } else {
            left + pw / 2.0
        }
    };
    let y = |a: f64| top + ph * (1.0 - (a - ymin) / (ymax - ymin));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">Team accuracy, {condition} ({subset} trials)</text>"#,
        left + pw / 2.0
    );
    let mut tick = ymin;
    while tick <= ymax + 1e-9 {
        let yy = y(tick);
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{yy:.1}\" x2=\"{:.1}\" y2=\"{yy:.1}\" stroke=\"#ddd\"/><text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{tick:.0}</text>",
            left + pw,
            left - 6.0,
            yy + 4.0
        );
        tick += 10.0;
    }
    for &sz in &sizes {
        let xx = x(sz as f64);
        let _ = writeln!(
            s,
            r#"<text x="{xx:.1}" y="{:.1}" text-anchor="middle">{sz}</text>"#,
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">team size</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">accuracy (%)</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    let mut legend = 0usize;
    for (i, m) in Method::ALL.iter().enumerate() {
        let mut pts: Vec<(usize, f64)> = rows
            .iter()
            .filter(|r| r.method == *m)
            .map(|r| (r.team_size, 100.0 * r.mean_accuracy))
            .collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by_key(|p| p.0);
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(sz, a)| format!("{:.1},{:.1}", x(sz as f64), y(a))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for &(sz, a) in &pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                x(sz as f64),
                y(a)
            );
        }
        let ly = top + 14.0 * legend as f64;
        let lx = left + pw + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            m.name()
        );
        legend += 1;
    }
    s.push_str("</svg>\n");
    s
}
