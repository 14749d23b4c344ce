//! The phase × reaction-time oracle.
//!
//! A session is cut into chronological thirds and each third is filtered by
//! a closed RT upper bound. Every one of the 15 cells is scored by
//! cross-validated balanced accuracy on its quarantine-positive trials, and
//! the best cell supplies the training set for the final predictions.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::classifier::{
    self, balanced_accuracy, build_feature_set, crossval_predict, fit_subset, normalize_confidence, quarantine_weights,
    BciPrediction, ClassifierError, CvTrial, FeatureSource, LabeledTrial,
};
use crate::domain::{CellKey, Condition, Label, Phase, RtBound};
use crate::seed;
use crate::spd::SpdMatrix;

/// How the tangent reference is chosen when producing final predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryMode {
    /// One reference over all of the participant's epochs.
    Global,
    /// Reference recomputed from each training split.
    PerFold,
}

impl std::str::FromStr for GeometryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(GeometryMode::Global),
            "per-fold" => Ok(GeometryMode::PerFold),
            other => Err(format!("unknown geometry mode {other:?}")),
        }
    }
}

impl std::fmt::Display for GeometryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeometryMode::Global => "global",
            GeometryMode::PerFold => "per-fold",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub folds: usize,
    pub reg_c: f64,
    pub min_cell_trials: usize,
    pub min_per_class: usize,
    pub geometry: GeometryMode,
    pub bounds: Vec<RtBound>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            reg_c: classifier::DEFAULT_C,
            min_cell_trials: 20,
            min_per_class: 5,
            geometry: GeometryMode::PerFold,
            bounds: RtBound::GRID.to_vec(),
        }
    }
}

/// Phase index of each trial: contiguous thirds, remainder to earlier phases.
pub fn phase_assignment(n: usize) -> Vec<Phase> {
    let base = n / 3;
    let extra = n % 3;
    let sizes = [base + (extra > 0) as usize, base + (extra > 1) as usize, base];
    Phase::ALL
        .iter()
        .zip(sizes)
        .flat_map(|(&p, s)| std::iter::repeat_n(p, s))
        .collect()
}

/// Contiguous thirds of a time-ordered list.
pub fn split_phases<T: Clone>(trials: &[T]) -> [Vec<T>; 3] {
    let phases = phase_assignment(trials.len());
    let mut out: [Vec<T>; 3] = Default::default();
    for (t, p) in trials.iter().zip(phases) {
        out[p.index()].push(t.clone());
    }
    out
}

/// Non-missed trials whose RT is within the closed bound.
pub fn filter_by_rt(trials: &[LabeledTrial], bound: RtBound) -> Vec<LabeledTrial> {
    trials
        .iter()
        .filter(|t| !t.missed && t.rt_s.is_some_and(|rt| bound.admits(rt)))
        .cloned()
        .collect()
}

/// Indices (into the session) of the trials in `cell`.
pub fn cell_members(trials: &[LabeledTrial], cell: CellKey) -> Vec<bool> {
    let phases = phase_assignment(trials.len());
    trials
        .iter()
        .zip(phases)
        .map(|(t, p)| p == cell.phase && !t.missed && t.rt_s.is_some_and(|rt| cell.bound.admits(rt)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Scored(f64),
    TooFewTrials,
    TooFewPerClass,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellScore {
    pub cell: CellKey,
    pub retained: usize,
    pub status: CellStatus,
}

impl CellScore {
    pub fn score(&self) -> Option<f64> {
        match self.status {
            CellStatus::Scored(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    /// Phase-major, bounds in grid order.
    pub grid: Vec<CellScore>,
    pub selected: Option<usize>,
}

impl OracleReport {
    pub fn selected_cell(&self) -> Option<&CellScore> {
        self.selected.map(|i| &self.grid[i])
    }
}

fn bound_index(bounds: &[RtBound], b: RtBound) -> u64 {
    bounds.iter().position(|&x| x == b).unwrap_or(0) as u64
}

/// CV seed for a cell, derived from the participant-condition seed.
pub fn cell_seed(base: u64, cell: CellKey, bounds: &[RtBound]) -> u64 {
    seed::derive(base, &[cell.phase.index() as u64, bound_index(bounds, cell.bound)])
}

fn cv_trials(trials: &[LabeledTrial], idx: &[usize]) -> Vec<CvTrial> {
    let sub: Vec<LabeledTrial> = idx.iter().map(|&i| trials[i].clone()).collect();
    let w = quarantine_weights(&sub);
    sub.iter()
        .zip(w)
        .map(|(t, weight)| CvTrial {
            trial_id: t.trial_id,
            truth: t.truth,
            weight,
        })
        .collect()
}

/// Scores one cell from precomputed session-wide tangent features.
fn score_cell(
    trials: &[LabeledTrial],
    features: &[Vec<f64>],
    members: &[bool],
    cell: CellKey,
    cfg: &OracleConfig,
    base_seed: u64,
) -> CellScore {
    let idx: Vec<usize> = (0..trials.len()).filter(|&i| members[i]).collect();
    let retained = idx.len();
    let cv = cv_trials(trials, &idx);
    let mut per_class = [0usize; 2];
    for t in cv.iter().filter(|t| t.weight > 0.0) {
        per_class[(t.truth == Label::NonTarget) as usize] += 1;
    }
    let status = if retained < cfg.min_cell_trials {
        CellStatus::TooFewTrials
    } else if per_class.iter().any(|&c| c < cfg.min_per_class) {
        CellStatus::TooFewPerClass
    } else {
        let feats: Vec<Vec<f64>> = idx.iter().map(|&i| features[i].clone()).collect();
        match crossval_predict(
            FeatureSource::Global(&feats),
            &cv,
            cfg.folds,
            cfg.reg_c,
            cell_seed(base_seed, cell, &cfg.bounds),
        ) {
            Ok(out) => {
                let pred: Vec<Label> = out.predictions.iter().map(|p| p.label).collect();
                let truth: Vec<Label> = cv.iter().map(|t| t.truth).collect();
                let mask: Vec<bool> = cv.iter().map(|t| t.weight > 0.0).collect();
                match balanced_accuracy(&pred, &truth, &mask) {
                    Some(s) => CellStatus::Scored(s),
                    None => CellStatus::TooFewPerClass,
                }
            }
            Err(e) => CellStatus::Failed(e.to_string()),
        }
    };
    CellScore { cell, retained, status }
}

/// Index of the best scored cell: accuracy, then retained trials, then the
/// wider bound, then the earlier phase.
pub fn select_cell(grid: &[CellScore]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in grid.iter().enumerate() {
        let Some(s) = c.score() else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let o = &grid[b];
                let os = o.score().unwrap_or(f64::NEG_INFINITY);
                if s != os {
                    s > os
                } else if c.retained != o.retained {
                    c.retained > o.retained
                } else if c.cell.bound.width() != o.cell.bound.width() {
                    c.cell.bound.width() > o.cell.bound.width()
                } else {
                    c.cell.phase < o.cell.phase
                }
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Runs the 15-cell sweep for one participant-condition. Geometry for the
/// sweep is computed once over every epoch of the session.
pub fn oracle_sweep(
    trials: &[LabeledTrial],
    covs: &[SpdMatrix],
    cfg: &OracleConfig,
    base_seed: u64,
) -> Result<OracleReport, ClassifierError> {
    if trials.len() != covs.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: trials.len(),
            actual: covs.len(),
        });
    }
    let (_, features) = build_feature_set(covs)?;
    let cells: Vec<CellKey> = Phase::ALL
        .iter()
        .flat_map(|&phase| cfg.bounds.iter().map(move |&bound| CellKey { phase, bound }))
        .collect();
    let grid: Vec<CellScore> = cells
        .par_iter()
        .map(|&cell| {
            let members = cell_members(trials, cell);
            score_cell(trials, &features, &members, cell, cfg, base_seed)
        })
        .collect();
    let selected = select_cell(&grid);
    Ok(OracleReport { grid, selected })
}

/// Predictions for every trial of the session: held-out CV scores inside the
/// selected cell, a single full-cell model elsewhere. Confidence is
/// normalized over the whole session.
pub fn final_predictions(
    trials: &[LabeledTrial],
    covs: &[SpdMatrix],
    members: &[bool],
    cell: CellKey,
    cfg: &OracleConfig,
    base_seed: u64,
) -> Result<Vec<BciPrediction>, ClassifierError> {
    let n = trials.len();
    if covs.len() != n || members.len() != n {
        return Err(ClassifierError::DimensionMismatch {
            expected: n,
            actual: covs.len().min(members.len()),
        });
    }
    let idx: Vec<usize> = (0..n).filter(|&i| members[i]).collect();
    if idx.is_empty() {
        return Err(ClassifierError::Empty);
    }
    let cv = cv_trials(trials, &idx);
    let cell_covs: Vec<SpdMatrix> = idx.iter().map(|&i| covs[i].clone()).collect();
    let global_feats = match cfg.geometry {
        GeometryMode::Global => Some(build_feature_set(covs)?.1),
        GeometryMode::PerFold => None,
    };
    let cell_feats: Vec<Vec<f64>>;
    let source = match &global_feats {
        None => FeatureSource::PerFold(&cell_covs),
        Some(f) => {
            cell_feats = idx.iter().map(|&i| f[i].clone()).collect();
            FeatureSource::Global(&cell_feats)
        }
    };
    let outcome = crossval_predict(source, &cv, cfg.folds, cfg.reg_c, cell_seed(base_seed, cell, &cfg.bounds))?;

    let mut out: Vec<Option<BciPrediction>> = vec![None; n];
    for (&i, mut p) in idx.iter().zip(outcome.predictions) {
        p.in_cell = true;
        p.cell = Some(cell);
        out[i] = Some(p);
    }
    if idx.len() < n {
        let all: Vec<usize> = (0..cv.len()).collect();
        let (model, space) = fit_subset(source, &cv, &all, cfg.reg_c)?;
        let full_fold = outcome.folds_used;
        for i in (0..n).filter(|&i| !members[i]) {
            let x = match (&global_feats, &space) {
                (Some(f), _) => f[i].clone(),
                (None, Some(s)) => s.project(&covs[i])?.components,
                (None, None) => return Err(ClassifierError::Empty),
            };
            let mut p = BciPrediction::from_score(trials[i].trial_id, model.score(&x), full_fold);
            p.in_cell = false;
            p.cell = Some(cell);
            out[i] = Some(p);
        }
    }
    let mut preds: Vec<BciPrediction> = out.into_iter().map(|p| p.expect("every trial scored")).collect();
    normalize_confidence(&mut preds);
    Ok(preds)
}

pub const ORACLE_REPORT_HEADER: &str = "participant_id,condition,phase,rt_bound,retained,cv_balanced_accuracy,selected";

/// Appends the 15 grid rows of one report. Infeasible cells have an empty
/// accuracy field.
pub fn write_report_rows<W: Write>(
    mut w: W,
    participant: u32,
    condition: Condition,
    report: &OracleReport,
) -> io::Result<()> {
    for (i, c) in report.grid.iter().enumerate() {
        let acc = c.score().map(|s| format!("{s:.6}")).unwrap_or_default();
        writeln!(
            w,
            "{participant},{condition},{},{},{},{acc},{}",
            c.cell.phase,
            c.cell.bound,
            c.retained,
            (report.selected == Some(i)) as u8
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lt(id: u32, rt: Option<f64>) -> LabeledTrial {
        LabeledTrial {
            trial_id: id,
            truth: Label::Target,
            human_correct: rt.is_some(),
            missed: rt.is_none(),
            rt_s: rt,
        }
    }

    #[test]
    fn phase_sizes() {
        let sizes = |n: usize| {
            let s = split_phases(&(0..n).collect::<Vec<_>>());
            [s[0].len(), s[1].len(), s[2].len()]
        };
        assert_eq!(sizes(9), [3, 3, 3]);
        assert_eq!(sizes(10), [4, 3, 3]);
        assert_eq!(sizes(11), [4, 4, 3]);
        assert_eq!(sizes(2), [1, 1, 0]);
        let s = split_phases(&(0..10).collect::<Vec<_>>());
        assert_eq!(s[0], vec![0, 1, 2, 3]);
    }

    #[test]
    fn rt_filter() {
        let t = vec![lt(0, Some(0.5)), lt(1, Some(0.9)), lt(2, None)];
        let ids = |v: Vec<LabeledTrial>| v.iter().map(|t| t.trial_id).collect::<Vec<_>>();
        assert_eq!(ids(filter_by_rt(&t, RtBound::Seconds(0.8))), vec![0]);
        assert_eq!(ids(filter_by_rt(&t, RtBound::Unlimited)), vec![0, 1]);
        assert_eq!(ids(filter_by_rt(&[lt(3, Some(0.8))], RtBound::Seconds(0.8))), vec![3]);
    }

    #[test]
    fn selection_tie_chain() {
        let cell = |phase, bound, retained, s: f64| CellScore {
            cell: CellKey { phase, bound },
            retained,
            status: CellStatus::Scored(s),
        };
        let grid = vec![
            cell(Phase::Early, RtBound::Seconds(0.8), 30, 0.9),
            cell(Phase::Early, RtBound::Seconds(1.0), 40, 0.9),
            cell(Phase::Mid, RtBound::Seconds(1.0), 40, 0.9),
            cell(Phase::Mid, RtBound::Seconds(0.8), 40, 0.9),
            CellScore {
                cell: CellKey {
                    phase: Phase::Late,
                    bound: RtBound::Unlimited,
                },
                retained: 50,
                status: CellStatus::TooFewPerClass,
            },
        ];
        assert_eq!(select_cell(&grid), Some(1));
        let mut g2 = grid.clone();
        g2[0].status = CellStatus::Scored(0.95);
        assert_eq!(select_cell(&g2), Some(0));
        assert_eq!(select_cell(&grid[4..]), None);
    }

    #[test]
    fn report_rows() {
        let report = OracleReport {
            grid: vec![CellScore {
                cell: CellKey {
                    phase: Phase::Mid,
                    bound: RtBound::Seconds(1.2),
                },
                retained: 33,
                status: CellStatus::Scored(0.75),
            }],
            selected: Some(0),
        };
        let mut buf = Vec::new();
        write_report_rows(&mut buf, 4, Condition::Sa, &report).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "4,SA,Mid,1.2,33,0.750000,1\n");
    }
}
