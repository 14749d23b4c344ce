//! Exhaustive team simulation.
//!
//! Every combination of `m` participants decides every shared trial under
//! every aggregation method. Member evidence is quantized to a fixed-point
//! grid before summation, so team sums are exact integers: the decision does
//! not depend on member order or on how work is split across threads.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{Condition, Label, Response};

#[derive(Debug, Error, PartialEq)]
pub enum TeamError {
    #[error("team size {m} is not in 1..={n}")]
    BadSize { m: usize, n: usize },
    #[error("participant {participant} has no prediction for trial {trial}")]
    Coverage { participant: u32, trial: u32 },
    #[error("participants disagree on the ground truth of trial {0}")]
    TruthMismatch(u32),
    #[error("unknown aggregation method {0:?}")]
    UnknownMethod(String),
    #[error("no shared trials in condition {0}")]
    NoTrials(Condition),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    MajorityHuman,
    RtWeightedHuman,
    SubjConfWeightedHuman,
    BciConfWeighted,
    RtPlusBci,
    SubjConfPlusBci,
    RtSubjConfPlusBci,
    BestIndividual,
    WorstIndividual,
    AverageIndividual,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::MajorityHuman,
        Method::RtWeightedHuman,
        Method::SubjConfWeightedHuman,
        Method::BciConfWeighted,
        Method::RtPlusBci,
        Method::SubjConfPlusBci,
        Method::RtSubjConfPlusBci,
        Method::BestIndividual,
        Method::WorstIndividual,
        Method::AverageIndividual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MajorityHuman => "MajorityHuman",
            Method::RtWeightedHuman => "RtWeightedHuman",
            Method::SubjConfWeightedHuman => "SubjConfWeightedHuman",
            Method::BciConfWeighted => "BciConfWeighted",
            Method::RtPlusBci => "RtPlusBci",
            Method::SubjConfPlusBci => "SubjConfPlusBci",
            Method::RtSubjConfPlusBci => "RtSubjConfPlusBci",
            Method::BestIndividual => "BestIndividual",
            Method::WorstIndividual => "WorstIndividual",
            Method::AverageIndividual => "AverageIndividual",
        }
    }

    /// Accuracy baselines rather than evidence-summing rules.
    pub fn is_baseline(self) -> bool {
        matches!(
            self,
            Method::BestIndividual | Method::WorstIndividual | Method::AverageIndividual
        )
    }

    /// The behavioural method a hybrid is compared against.
    pub fn behavioural_counterpart(self) -> Option<Method> {
        match self {
            Method::RtPlusBci => Some(Method::RtWeightedHuman),
            Method::SubjConfPlusBci => Some(Method::SubjConfWeightedHuman),
            Method::RtSubjConfPlusBci => Some(Method::RtWeightedHuman),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = TeamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| TeamError::UnknownMethod(s.to_string()))
    }
}

/// Trial subsets reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subset {
    All,
    AiCorrect,
    AiDeceptive,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::All, Subset::AiCorrect, Subset::AiDeceptive];

    pub fn name(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::AiCorrect => "ai_correct",
            Subset::AiDeceptive => "ai_deceptive",
        }
    }

    pub fn admits(self, ai_correct: bool) -> bool {
        match self {
            Subset::All => true,
            Subset::AiCorrect => ai_correct,
            Subset::AiDeceptive => !ai_correct,
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subset::ALL
            .iter()
            .copied()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown trial subset {s:?}"))
    }
}

/// Direction of the RT weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtWeight {
    /// Faster responses weigh more: `1 − minmax(rt)`.
    Inverse,
    /// Slower responses weigh more: `minmax(rt)`.
    Direct,
}

impl FromStr for RtWeight {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inverse" => Ok(RtWeight::Inverse),
            "direct" => Ok(RtWeight::Direct),
            other => Err(format!("unknown rt weight {other:?}")),
        }
    }
}

impl fmt::Display for RtWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RtWeight::Inverse => "inverse",
            RtWeight::Direct => "direct",
        })
    }
}

/// One member's information on one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemberVote {
    pub participant_id: u32,
    pub human: Response,
    pub rt_score: f64,
    pub subj_score: f64,
    pub bci_label: Label,
    pub bci_conf: f64,
}

/// Min-max scaling with the neutral 0.5 for degenerate ranges. `None`
/// entries stay `None`.
pub fn minmax(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let (lo, hi) = values
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    values
        .iter()
        .map(|v| {
            v.map(|x| {
                if hi > lo {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
        })
        .collect()
}

/// Normalized RT and subjective-confidence scores of one participant's
/// session. Missed trials get `None`.
pub fn normalize_behavior(
    rts: &[Option<f64>],
    subj: &[Option<f64>],
    direction: RtWeight,
) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let rt = minmax(rts)
        .into_iter()
        .map(|v| {
            v.map(|x| match direction {
                RtWeight::Inverse => 1.0 - x,
                RtWeight::Direct => x,
            })
        })
        .collect();
    (rt, minmax(subj))
}

fn side(ev: f64, label: Label) -> (f64, f64) {
    match label {
        Label::Target => (ev, 0.0),
        Label::NonTarget => (0.0, ev),
    }
}

/// Evidence `(for Target, for NonTarget)` contributed by one member. A miss
/// contributes no human evidence. Baseline methods contribute nothing.
pub fn member_evidence(method: Method, v: &MemberVote) -> (f64, f64) {
    let human = |score: f64| match v.human {
        Response::Press(l) => side(score, l),
        Response::Miss => (0.0, 0.0),
    };
    let bci = |w: f64| side(w * v.bci_conf, v.bci_label);
    let add = |a: (f64, f64), b: (f64, f64)| (a.0 + b.0, a.1 + b.1);
    match method {
        Method::MajorityHuman => human(1.0),
        Method::RtWeightedHuman => human(v.rt_score),
        Method::SubjConfWeightedHuman => human(v.subj_score),
        Method::BciConfWeighted => bci(1.0),
        Method::RtPlusBci => add(human(0.5 * v.rt_score), bci(0.5)),
        Method::SubjConfPlusBci => add(human(0.5 * v.subj_score), bci(0.5)),
        Method::RtSubjConfPlusBci => add(human(0.5 * (v.rt_score + v.subj_score) / 2.0), bci(0.5)),
        Method::BestIndividual | Method::WorstIndividual | Method::AverageIndividual => (0.0, 0.0),
    }
}

/// Fixed-point scale for evidence sums.
const EVIDENCE_SCALE: f64 = (1u64 << 40) as f64;

fn quantize(v: f64) -> i64 {
    (v * EVIDENCE_SCALE).round() as i64
}

/// Signed, quantized evidence (Target minus NonTarget) of one member.
pub fn signed_evidence(method: Method, v: &MemberVote) -> i64 {
    let (t, n) = member_evidence(method, v);
    quantize(t) - quantize(n)
}

/// Team decision by summed evidence; ties go to Target.
pub fn team_decision(method: Method, votes: &[MemberVote]) -> Label {
    let total: i64 = votes.iter().map(|v| signed_evidence(method, v)).sum();
    if total >= 0 {
        Label::Target
    } else {
        Label::NonTarget
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Best,
    Worst,
    Average,
}

/// Per-trial baseline. `overall` holds each member's overall accuracy in
/// the condition, `correct` their correctness on this trial (a miss counts
/// as incorrect). Members are identified by their id for tie-breaking.
pub fn baseline_individual(kind: BaselineKind, ids: &[u32], overall: &[f64], correct: &[bool]) -> f64 {
    let pick = |better: fn(f64, f64) -> bool| {
        let mut best = 0;
        for i in 1..ids.len() {
            let (a, b) = (overall[i], overall[best]);
            if better(a, b) || (a == b && ids[i] < ids[best]) {
                best = i;
            }
        }
        correct[best] as u8 as f64
    };
    match kind {
        BaselineKind::Best => pick(|a, b| a > b),
        BaselineKind::Worst => pick(|a, b| a < b),
        BaselineKind::Average => correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64,
    }
}

/// Binomial coefficient, exact for the sizes used here.
pub fn n_choose_k(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Streaming lexicographic enumeration of `m`-subsets of `0..n`.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn starting_at(n: usize, current: Vec<usize>) -> Self {
        Self {
            n,
            done: current.is_empty() && n > 0,
            current,
        }
    }

    /// Advances in place; returns false after the last combination.
    pub fn advance(&mut self) -> bool {
        let m = self.current.len();
        let mut i = m;
        while i > 0 {
            i -= 1;
            if self.current[i] < self.n - m + i {
                self.current[i] += 1;
                for j in i + 1..m {
                    self.current[j] = self.current[j - 1] + 1;
                }
                return true;
            }
        }
        self.done = true;
        false
    }

    pub fn current(&self) -> &[usize] {
        &self.current
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        self.advance();
        Some(out)
    }
}

/// All `m`-member teams from `n` participants in lexicographic order.
pub fn enumerate_teams(n: usize, m: usize) -> Result<Combinations, TeamError> {
    if m == 0 || m > n {
        return Err(TeamError::BadSize { m, n });
    }
    Ok(Combinations::starting_at(n, (0..m).collect()))
}

/// The combination at lexicographic `rank`.
pub fn unrank_combination(n: usize, m: usize, mut rank: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    let mut next = 0;
    for slot in 0..m {
        let mut x = next;
        loop {
            let count = n_choose_k(n - x - 1, m - slot - 1);
            if rank < count {
                break;
            }
            rank -= count;
            x += 1;
        }
        out.push(x);
        next = x + 1;
    }
    out
}

/// Everything the simulator needs for one condition, indexed
/// `[participant][trial]` over the trials shared by the whole cohort.
#[derive(Debug, Clone)]
pub struct ConditionData {
    pub condition: Condition,
    pub participant_ids: Vec<u32>,
    pub trial_numbers: Vec<u32>,
    pub truth: Vec<Label>,
    pub ai_correct: Vec<bool>,
    pub votes: Vec<Vec<MemberVote>>,
}

impl ConditionData {
    pub fn n_participants(&self) -> usize {
        self.participant_ids.len()
    }

    pub fn n_trials(&self) -> usize {
        self.truth.len()
    }

    /// Overall accuracy of each participant over responded trials.
    pub fn overall_accuracy(&self) -> Vec<f64> {
        self.votes
            .iter()
            .map(|vs| {
                let (h, n) = vs
                    .iter()
                    .zip(&self.truth)
                    .filter(|(v, _)| v.human != Response::Miss)
                    .fold((0, 0), |(h, n), (v, &t)| (h + v.human.is_correct(t) as usize, n + 1));
                if n == 0 {
                    0.0
                } else {
                    h as f64 / n as f64
                }
            })
            .collect()
    }
}

/// Per-team correct-decision counts for one (method, size, condition), one
/// vector per subset, in lexicographic team order. The average baseline
/// counts fractional correctness, scaled by the team size to stay integral.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamScores {
    pub method: Method,
    pub team_size: usize,
    pub condition: Condition,
    /// Trials per subset.
    pub n_trials: [usize; 3],
    /// `[subset][team]` correct counts (× team size for AverageIndividual).
    pub correct: [Vec<u32>; 3],
}

impl TeamScores {
    fn scale(&self) -> f64 {
        if self.method == Method::AverageIndividual {
            self.team_size as f64
        } else {
            1.0
        }
    }

    /// Accuracy of each team on a subset.
    pub fn team_accuracies(&self, subset: Subset) -> Vec<f64> {
        let k = subset as usize;
        let denom = self.n_trials[k] as f64 * self.scale();
        self.correct[k].iter().map(|&c| c as f64 / denom).collect()
    }

    pub fn mean_accuracy(&self, subset: Subset) -> f64 {
        let k = subset as usize;
        let total: u64 = self.correct[k].iter().map(|&c| c as u64).sum();
        total as f64 / (self.correct[k].len() as f64 * self.n_trials[k] as f64 * self.scale())
    }
}

/// One results.csv row.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamResult {
    pub method: Method,
    pub team_size: usize,
    pub condition: Condition,
    pub subset: Subset,
    pub mean_accuracy: f64,
    pub n_teams: u64,
    pub n_trials: usize,
    pub n_decisions: u64,
}

/// Precomputed per-(method, trial, member) quantities.
struct Tables {
    /// `[method][trial * n + participant]`
    evidence: Vec<Vec<i64>>,
    /// `[trial * n + participant]`
    correct: Vec<bool>,
    truth_is_target: Vec<bool>,
    overall: Vec<f64>,
    n: usize,
}

impl Tables {
    fn build(data: &ConditionData, methods: &[Method]) -> Self {
        let n = data.n_participants();
        let t = data.n_trials();
        let mut evidence = Vec::with_capacity(methods.len());
        for &m in methods {
            let mut e = vec![0i64; t * n];
            if !m.is_baseline() {
                for tr in 0..t {
                    for p in 0..n {
                        e[tr * n + p] = signed_evidence(m, &data.votes[p][tr]);
                    }
                }
            }
            evidence.push(e);
        }
        let mut correct = vec![false; t * n];
        for tr in 0..t {
            for p in 0..n {
                correct[tr * n + p] = data.votes[p][tr].human.is_correct(data.truth[tr]);
            }
        }
        Self {
            evidence,
            correct,
            truth_is_target: data.truth.iter().map(|&l| l == Label::Target).collect(),
            overall: data.overall_accuracy(),
            n,
        }
    }
}

/// Index of the best / worst member of a team by overall accuracy, ties to
/// the lower participant index.
fn extreme_member(team: &[usize], overall: &[f64], best: bool) -> usize {
    let mut pick = team[0];
    for &p in &team[1..] {
        let better = if best {
            overall[p] > overall[pick]
        } else {
            overall[p] < overall[pick]
        };
        if better {
            pick = p;
        }
    }
    pick
}

fn score_team(
    team: &[usize],
    method_idx: usize,
    method: Method,
    tables: &Tables,
    subset_of: &[[bool; 3]],
    out: &mut [u32; 3],
) {
    let n = tables.n;
    *out = [0; 3];
    let fixed = match method {
        Method::BestIndividual => Some(extreme_member(team, &tables.overall, true)),
        Method::WorstIndividual => Some(extreme_member(team, &tables.overall, false)),
        _ => None,
    };
    for (tr, subs) in subset_of.iter().enumerate() {
        let row = tr * n;
        let score = match method {
            Method::BestIndividual | Method::WorstIndividual => {
                tables.correct[row + fixed.expect("baseline member")] as u32
            }
            Method::AverageIndividual => team.iter().filter(|&&p| tables.correct[row + p]).count() as u32,
            _ => {
                let ev = &tables.evidence[method_idx];
                let total: i64 = team.iter().map(|&p| ev[row + p]).sum();
                ((total >= 0) == tables.truth_is_target[tr]) as u32
            }
        };
        for k in 0..3 {
            if subs[k] {
                out[k] += score;
            }
        }
    }
}

const RANK_CHUNK: u64 = 512;

/// Per-team scores for every requested method at one team size.
pub fn simulate_size(data: &ConditionData, methods: &[Method], m: usize) -> Result<Vec<TeamScores>, TeamError> {
    let n = data.n_participants();
    if m == 0 || m > n {
        return Err(TeamError::BadSize { m, n });
    }
    if data.n_trials() == 0 {
        return Err(TeamError::NoTrials(data.condition));
    }
    let tables = Tables::build(data, methods);
    let subset_of: Vec<[bool; 3]> = data
        .ai_correct
        .iter()
        .map(|&c| [Subset::All.admits(c), Subset::AiCorrect.admits(c), Subset::AiDeceptive.admits(c)])
        .collect();
    let mut n_trials = [0usize; 3];
    for s in &subset_of {
        for k in 0..3 {
            n_trials[k] += s[k] as usize;
        }
    }
    let total = n_choose_k(n, m);
    let chunks: Vec<u64> = (0..total.div_ceil(RANK_CHUNK)).collect();
    // Each chunk returns its slice of counts; concatenation in chunk order
    // reproduces lexicographic team order for any thread count.
    let parts: Vec<Vec<[u32; 3]>> = chunks
        .par_iter()
        .map(|&c| {
            let start = c * RANK_CHUNK;
            let len = RANK_CHUNK.min(total - start) as usize;
            let mut comb = Combinations::starting_at(n, unrank_combination(n, m, start));
            let mut out = vec![[0u32; 3]; len * methods.len()];
            for t in 0..len {
                let team = comb.current().to_vec();
                for (mi, &method) in methods.iter().enumerate() {
                    score_team(&team, mi, method, &tables, &subset_of, &mut out[t * methods.len() + mi]);
                }
                comb.advance();
            }
            out
        })
        .collect();
    let mut scores: Vec<TeamScores> = methods
        .iter()
        .map(|&method| TeamScores {
            method,
            team_size: m,
            condition: data.condition,
            n_trials,
            correct: [
                Vec::with_capacity(total as usize),
                Vec::with_capacity(total as usize),
                Vec::with_capacity(total as usize),
            ],
        })
        .collect();
    for part in parts {
        for row in part.chunks_exact(methods.len()) {
            for (mi, counts) in row.iter().enumerate() {
                for k in 0..3 {
                    scores[mi].correct[k].push(counts[k]);
                }
            }
        }
    }
    Ok(scores)
}

/// Result rows for every (method, size, subset) of one condition.
pub fn simulate(data: &ConditionData, methods: &[Method], sizes: &[usize]) -> Result<Vec<TeamResult>, TeamError> {
    let mut out = Vec::new();
    for &m in sizes {
        for s in simulate_size(data, methods, m)? {
            out.extend(results_from_scores(&s));
        }
    }
    Ok(out)
}

pub fn results_from_scores(s: &TeamScores) -> Vec<TeamResult> {
    Subset::ALL
        .iter()
        .map(|&subset| {
            let k = subset as usize;
            let n_teams = s.correct[k].len() as u64;
            TeamResult {
                method: s.method,
                team_size: s.team_size,
                condition: s.condition,
                subset,
                mean_accuracy: s.mean_accuracy(subset),
                n_teams,
                n_trials: s.n_trials[k],
                n_decisions: n_teams * s.n_trials[k] as u64,
            }
        })
        .collect()
}

pub const RESULTS_HEADER: &str = "method,team_size,condition,trial_subset,mean_accuracy,n_teams,n_trials,n_decisions";
pub const PLOTDATA_HEADER: &str = "condition,trial_subset,method,team_size,accuracy_pct";

pub fn write_results<W: Write>(mut w: W, rows: &[TeamResult]) -> io::Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.6},{},{},{}",
            r.method, r.team_size, r.condition, r.subset, r.mean_accuracy, r.n_teams, r.n_trials, r.n_decisions
        )?;
    }
    Ok(())
}

/// Long-format series (one row per point) sorted for plotting.
pub fn write_plotdata<W: Write>(mut w: W, rows: &[TeamResult]) -> io::Result<()> {
    let mut sorted: Vec<&TeamResult> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (a.condition, a.subset, a.method, a.team_size).cmp(&(b.condition, b.subset, b.method, b.team_size))
    });
    writeln!(w, "{PLOTDATA_HEADER}")?;
    for r in sorted {
        writeln!(
            w,
            "{},{},{},{},{:.4}",
            r.condition,
            r.subset,
            r.method,
            r.team_size,
            100.0 * r.mean_accuracy
        )?;
    }
    Ok(())
}

/// Parses results.csv written by [`write_results`].
pub fn read_results<R: io::BufRead>(r: R) -> Result<Vec<TeamResult>, String> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if i == 0 {
            if line != RESULTS_HEADER {
                return Err(format!("unexpected results header {line:?}"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(format!("line {}: expected 8 fields", i + 1));
        }
        let bad = |e: String| format!("line {}: {e}", i + 1);
        out.push(TeamResult {
            method: f[0].parse().map_err(|e: TeamError| bad(e.to_string()))?,
            team_size: f[1].parse().map_err(|e| bad(format!("{e}")))?,
            condition: f[2].parse().map_err(bad)?,
            subset: f[3].parse().map_err(bad)?,
            mean_accuracy: f[4].parse().map_err(|e| bad(format!("{e}")))?,
            n_teams: f[5].parse().map_err(|e| bad(format!("{e}")))?,
            n_trials: f[6].parse().map_err(|e| bad(format!("{e}")))?,
            n_decisions: f[7].parse().map_err(|e| bad(format!("{e}")))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vote(human: Response, rt: f64, subj: f64, bci: Label, conf: f64) -> MemberVote {
        MemberVote {
            participant_id: 0,
            human,
            rt_score: rt,
            subj_score: subj,
            bci_label: bci,
            bci_conf: conf,
        }
    }

    const T: Label = Label::Target;
    const N: Label = Label::NonTarget;

    #[test]
    fn team_counts() {
        for (m, c) in [(2, 136), (4, 2380), (6, 12376), (8, 24310)] {
            assert_eq!(enumerate_teams(17, m).unwrap().count() as u64, c);
            assert_eq!(n_choose_k(17, m), c);
        }
        let small: Vec<Vec<usize>> = enumerate_teams(4, 2).unwrap().collect();
        assert_eq!(
            small,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert!(matches!(enumerate_teams(3, 4), Err(TeamError::BadSize { .. })));
        assert_eq!(enumerate_teams(3, 3).unwrap().count(), 1);
    }

    #[test]
    fn unrank_matches_enumeration() {
        for (r, c) in enumerate_teams(9, 4).unwrap().enumerate() {
            assert_eq!(unrank_combination(9, 4, r as u64), c);
        }
    }

    #[test]
    fn behaviour_normalization() {
        let (rt, subj) = normalize_behavior(
            &[Some(0.4), Some(0.8), Some(1.2), None],
            &[Some(0.0), Some(50.0), Some(100.0), None],
            RtWeight::Inverse,
        );
        let close = |a: &[Option<f64>], b: &[Option<f64>]| {
            a.iter().zip(b).all(|(x, y)| match (x, y) {
                (Some(x), Some(y)) => (x - y).abs() < 1e-12,
                (None, None) => true,
                _ => false,
            })
        };
        assert!(close(&rt, &[Some(1.0), Some(0.5), Some(0.0), None]));
        assert_eq!(subj, vec![Some(0.0), Some(0.5), Some(1.0), None]);
        let (flat, _) = normalize_behavior(&[Some(0.7); 3], &[None; 3], RtWeight::Inverse);
        assert!(flat.iter().all(|v| *v == Some(0.5)));
    }

    #[test]
    fn evidence_arithmetic() {
        let v = vote(Response::Press(T), 0.6, 0.0, N, 0.8);
        let (t, n) = member_evidence(Method::RtPlusBci, &v);
        assert!((t - 0.30).abs() < 1e-15 && (n - 0.40).abs() < 1e-15);
        let v = vote(Response::Press(N), 0.1, 0.1, T, 0.9);
        assert_eq!(member_evidence(Method::BciConfWeighted, &v), (0.9, 0.0));
        let v = vote(Response::Press(T), 1.0, 0.0, T, 0.5);
        let (t, n) = member_evidence(Method::RtSubjConfPlusBci, &v);
        assert!((t - 0.5).abs() < 1e-15 && n == 0.0);
        let miss = vote(Response::Miss, 0.0, 0.0, N, 0.4);
        assert_eq!(member_evidence(Method::RtPlusBci, &miss), (0.0, 0.2));
        assert_eq!(member_evidence(Method::MajorityHuman, &miss), (0.0, 0.0));
    }

    #[test]
    fn decisions_and_ties() {
        let all_t = [vote(Response::Press(T), 0.3, 0.3, T, 0.3); 3];
        assert_eq!(team_decision(Method::MajorityHuman, &all_t), T);
        let tie = [vote(Response::Press(T), 0.5, 0.5, T, 0.5), vote(Response::Press(N), 0.5, 0.5, N, 0.5)];
        for m in [Method::MajorityHuman, Method::RtWeightedHuman, Method::RtPlusBci] {
            assert_eq!(team_decision(m, &tie), T);
        }
        let with_miss = [vote(Response::Press(N), 0.2, 0.2, N, 0.2), vote(Response::Miss, 0.0, 0.0, T, 0.2)];
        assert_eq!(team_decision(Method::MajorityHuman, &with_miss), N);
        // Order invariance of awkward decimal sums.
        let a = vote(Response::Press(T), 0.1, 0.0, T, 0.2);
        let b = vote(Response::Press(T), 0.2, 0.0, T, 0.1);
        let c = vote(Response::Press(N), 0.3, 0.0, N, 0.0);
        let d = vote(Response::Press(N), 0.0, 0.0, N, 0.3);
        for m in [Method::RtWeightedHuman, Method::RtPlusBci] {
            assert_eq!(team_decision(m, &[a, b, c, d]), team_decision(m, &[d, c, b, a]));
        }
    }

    #[test]
    fn baselines() {
        assert_eq!(baseline_individual(BaselineKind::Best, &[3], &[0.7], &[true]), 1.0);
        assert_eq!(baseline_individual(BaselineKind::Worst, &[3], &[0.7], &[true]), 1.0);
        assert_eq!(baseline_individual(BaselineKind::Average, &[1, 2], &[0.7, 0.8], &[true, false]), 0.5);
        let best_ab = baseline_individual(BaselineKind::Best, &[1, 2], &[0.8, 0.8], &[true, false]);
        let best_ba = baseline_individual(BaselineKind::Best, &[2, 1], &[0.8, 0.8], &[false, true]);
        assert_eq!(best_ab, best_ba);
    }

    fn clone_cohort(n: usize) -> ConditionData {
        let truth = vec![T, N, T, N, N, T, N];
        let base: Vec<MemberVote> = vec![
            vote(Response::Press(T), 0.9, 0.4, T, 0.2),
            vote(Response::Press(T), 0.1, 0.6, N, 0.9),
            vote(Response::Miss, 0.0, 0.0, N, 0.5),
            vote(Response::Press(N), 0.5, 0.5, T, 0.0),
            vote(Response::Press(N), 0.3, 1.0, N, 0.7),
            vote(Response::Press(N), 0.0, 0.0, T, 1.0),
            vote(Response::Press(T), 0.6, 0.2, T, 0.3),
        ];
        ConditionData {
            condition: Condition::Fla,
            participant_ids: (1..=n as u32).collect(),
            trial_numbers: (1..=truth.len() as u32).collect(),
            ai_correct: vec![true, false, true, true, false, true, true],
            truth,
            votes: vec![base; n],
        }
    }

    #[test]
    fn clone_teams_match_the_individual() {
        let data = clone_cohort(6);
        let single = simulate_size(&data, &Method::ALL, 1).unwrap();
        for m in [2, 3, 5] {
            let teams = simulate_size(&data, &Method::ALL, m).unwrap();
            for (s, t) in single.iter().zip(&teams) {
                for subset in Subset::ALL {
                    assert!(
                        (s.mean_accuracy(subset) - t.mean_accuracy(subset)).abs() < 1e-12,
                        "{} size {m}",
                        s.method
                    );
                }
            }
        }
    }

    #[test]
    fn label_flip_symmetry() {
        let data = clone_cohort(1);
        let flip = |v: &MemberVote| MemberVote {
            human: match v.human {
                Response::Press(l) => Response::Press(l.flipped()),
                Response::Miss => Response::Miss,
            },
            bci_label: v.bci_label.flipped(),
            ..*v
        };
        for method in Method::ALL.iter().filter(|m| !m.is_baseline()) {
            for votes in &data.votes {
                for v in votes {
                    let a = signed_evidence(*method, v);
                    let b = signed_evidence(*method, &flip(v));
                    assert_eq!(a, -b);
                    let (da, db) = (team_decision(*method, &[*v]), team_decision(*method, &[flip(v)]));
                    if a != 0 {
                        assert_eq!(da, db.flipped());
                    } else {
                        assert_eq!((da, db), (T, T));
                    }
                }
            }
        }
    }

    #[test]
    fn results_round_trip() {
        let data = clone_cohort(4);
        let rows = simulate(&data, &Method::ALL, &[2, 4]).unwrap();
        assert_eq!(rows.len(), 10 * 2 * 3);
        let mut buf = Vec::new();
        write_results(&mut buf, &rows).unwrap();
        let back = read_results(io::Cursor::new(buf)).unwrap();
        assert_eq!(back.len(), rows.len());
        assert!(back.iter().zip(&rows).all(|(a, b)| (a.mean_accuracy - b.mean_accuracy).abs() < 1e-6));
        assert_eq!(rows[0].n_teams, 6);
        assert_eq!(rows[0].n_decisions, 6 * 7);
    }
}
