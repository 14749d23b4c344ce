//! Per-session processing (epochs → covariances → oracle → predictions),
//! the predictions table, and assembly of simulator inputs.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::{oas_covariance, BciPrediction, ClassifierError, LabeledTrial};
use crate::cohort::TrialRecord;
use crate::domain::{CellKey, Condition, Label, Phase, RtBound};
use crate::oracle::{cell_members, final_predictions, oracle_sweep, OracleConfig, OracleReport};
use crate::seed;
use crate::signal::formats::EpochStore;
use crate::signal::{apply_channel_mask, baseline_correct, SignalError, BASELINE_WINDOW, EPOCH_WINDOW};
use crate::spd::SpdMatrix;
use crate::team::{normalize_behavior, ConditionData, MemberVote, RtWeight, TeamError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("participant {participant} {condition}: {source}")]
    Classifier {
        participant: u32,
        condition: Condition,
        #[source]
        source: ClassifierError,
    },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("participant {participant} {condition}: {trials} trial rows but {epochs} epochs")]
    EpochCount {
        participant: u32,
        condition: Condition,
        trials: usize,
        epochs: usize,
    },
    #[error("participant {participant} {condition}: no oracle cell is feasible")]
    NoFeasibleCell { participant: u32, condition: Condition },
    #[error("predictions line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Team(#[from] TeamError),
}

/// Channel layout of the stored epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLayout {
    pub labels: Vec<String>,
    pub sample_rate: f64,
}

impl TrialRecord {
    pub fn labeled(&self) -> LabeledTrial {
        LabeledTrial {
            trial_id: self.trial_number,
            truth: self.truth,
            human_correct: self.is_correct(),
            missed: self.missed(),
            rt_s: self.rt_s,
        }
    }
}

/// Baseline-corrected, masked OAS covariance of every stored epoch.
pub fn session_covariances<S: AsRef<str> + Sync>(
    store: &EpochStore,
    layout: &EpochLayout,
    mask: &[S],
) -> Result<Vec<SpdMatrix>, PipelineError> {
    (0..store.trial_count())
        .into_par_iter()
        .map(|k| {
            let e = store.epoch(k, &layout.labels, layout.sample_rate, EPOCH_WINDOW.0);
            let e = baseline_correct(&e, BASELINE_WINDOW)?;
            let e = apply_channel_mask(&e, mask)?;
            oas_covariance(&e).map_err(|source| PipelineError::Classifier {
                participant: 0,
                condition: Condition::Fla,
                source,
            })
        })
        .collect()
}

/// Oracle report and predictions of one participant-condition.
#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub participant_id: u32,
    pub condition: Condition,
    pub report: OracleReport,
    /// One per trial row, in session order.
    pub predictions: Vec<BciPrediction>,
}

/// Seed of one session's cross-validation shuffles.
pub fn session_seed(master: u64, participant: u32, condition: Condition) -> u64 {
    seed::derive(master, &[8, participant as u64, condition.index()])
}

/// Runs the oracle and the final prediction pass for one session. `rows`
/// are the session's trials in time order, matching the store.
pub fn process_session<S: AsRef<str> + Sync>(
    rows: &[TrialRecord],
    store: &EpochStore,
    layout: &EpochLayout,
    mask: &[S],
    cfg: &OracleConfig,
    master_seed: u64,
) -> Result<SessionOutput, PipelineError> {
    let (participant, condition) = match rows.first() {
        Some(r) => (r.participant_id, r.condition),
        None => {
            return Err(PipelineError::EpochCount {
                participant: 0,
                condition: Condition::Fla,
                trials: 0,
                epochs: store.trial_count(),
            })
        }
    };
    if rows.len() != store.trial_count() {
        return Err(PipelineError::EpochCount {
            participant,
            condition,
            trials: rows.len(),
            epochs: store.trial_count(),
        });
    }
    let wrap = |source| PipelineError::Classifier {
        participant,
        condition,
        source,
    };
    let covs = session_covariances(store, layout, mask).map_err(|e| match e {
        PipelineError::Classifier { source, .. } => wrap(source),
        other => other,
    })?;
    let trials: Vec<LabeledTrial> = rows.iter().map(TrialRecord::labeled).collect();
    let base = session_seed(master_seed, participant, condition);
    let report = oracle_sweep(&trials, &covs, cfg, base).map_err(wrap)?;
    let cell = report
        .selected_cell()
        .ok_or(PipelineError::NoFeasibleCell {
            participant,
            condition,
        })?
        .cell;
    let members = cell_members(&trials, cell);
    let predictions = final_predictions(&trials, &covs, &members, cell, cfg, base).map_err(wrap)?;
    Ok(SessionOutput {
        participant_id: participant,
        condition,
        report,
        predictions,
    })
}

/// One predictions.csv row.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub participant_id: u32,
    pub condition: Condition,
    pub trial_number: u32,
    pub bci_label: Label,
    pub raw_score: f64,
    pub conf_norm: f64,
    pub fold: usize,
    pub in_cell: bool,
    pub cell: CellKey,
}

impl SessionOutput {
    pub fn records(&self) -> Vec<PredictionRecord> {
        let cell = self.report.selected_cell().map(|c| c.cell);
        self.predictions
            .iter()
            .map(|p| PredictionRecord {
                participant_id: self.participant_id,
                condition: self.condition,
                trial_number: p.trial_id,
                bci_label: p.label,
                raw_score: p.raw_score,
                conf_norm: p.conf_norm,
                fold: p.fold,
                in_cell: p.in_cell,
                cell: p.cell.or(cell).expect("predictions come from a selected cell"),
            })
            .collect()
    }
}

pub const PREDICTIONS_HEADER: &str =
    "participant_id,condition,trial_number,bci_label,raw_score,conf_norm,fold,in_cell,phase,rt_bound";

pub fn write_predictions<W: Write>(mut w: W, rows: &[PredictionRecord]) -> io::Result<()> {
    writeln!(w, "{PREDICTIONS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.9},{:.9},{},{},{},{}",
            r.participant_id,
            r.condition,
            r.trial_number,
            r.bci_label,
            r.raw_score,
            r.conf_norm,
            r.fold,
            r.in_cell as u8,
            r.cell.phase,
            r.cell.bound
        )?;
    }
    Ok(())
}

pub fn read_predictions<R: BufRead>(r: R) -> Result<Vec<PredictionRecord>, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| PipelineError::Parse {
            line: 1,
            reason: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != PREDICTIONS_HEADER {
        return Err(PipelineError::Parse {
            line: 1,
            reason: format!("unexpected header {:?}", header.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |reason: String| PipelineError::Parse { line, reason };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 10 {
            return Err(bad(format!("expected 10 fields, got {}", rec.len())));
        }
        fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            rec[k].parse::<T>().map_err(|e| format!("field {}: {e}", k + 1))
        }
        let in_cell = match &rec[7] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("in_cell {other:?}"))),
        };
        out.push(PredictionRecord {
            participant_id: field(&rec, 0).map_err(bad)?,
            condition: field(&rec, 1).map_err(bad)?,
            trial_number: field(&rec, 2).map_err(bad)?,
            bci_label: field(&rec, 3).map_err(bad)?,
            raw_score: field(&rec, 4).map_err(bad)?,
            conf_norm: field(&rec, 5).map_err(bad)?,
            fold: field(&rec, 6).map_err(bad)?,
            in_cell,
            cell: CellKey {
                phase: field::<Phase>(&rec, 8).map_err(bad)?,
                bound: field::<RtBound>(&rec, 9).map_err(bad)?,
            },
        });
    }
    Ok(out)
}

/// Vote tables for one condition. A trial is used only if every
/// participant has a row for it; every such row must have a prediction.
pub fn build_condition_data(
    trials: &[TrialRecord],
    predictions: &[PredictionRecord],
    condition: Condition,
    rt_weight: RtWeight,
) -> Result<ConditionData, PipelineError> {
    let mut by_pid: Vec<(u32, Vec<&TrialRecord>)> = Vec::new();
    for r in trials.iter().filter(|r| r.condition == condition) {
        match by_pid.iter_mut().find(|(p, _)| *p == r.participant_id) {
            Some((_, v)) => v.push(r),
            None => by_pid.push((r.participant_id, vec![r])),
        }
    }
    by_pid.sort_by_key(|(p, _)| *p);
    if by_pid.is_empty() {
        return Err(TeamError::NoTrials(condition).into());
    }

    // Trials shared by everyone, in trial-number order.
    let mut shared: Vec<u32> = by_pid[0].1.iter().map(|r| r.trial_number).collect();
    for (_, rows) in &by_pid[1..] {
        shared.retain(|t| rows.iter().any(|r| r.trial_number == *t));
    }
    shared.sort_unstable();
    if shared.is_empty() {
        return Err(TeamError::NoTrials(condition).into());
    }

    let pred_index: HashMap<(u32, u32), &PredictionRecord> = predictions
        .iter()
        .filter(|p| p.condition == condition)
        .map(|p| ((p.participant_id, p.trial_number), p))
        .collect();

    let lookup: Vec<HashMap<u32, &TrialRecord>> = by_pid
        .iter()
        .map(|(_, rows)| rows.iter().map(|r| (r.trial_number, *r)).collect())
        .collect();
    let first = &lookup[0];
    let truth: Vec<Label> = shared.iter().map(|t| first[t].truth).collect();
    let ai_correct: Vec<bool> = shared.iter().map(|t| first[t].ai_correct).collect();

    let mut votes = Vec::with_capacity(by_pid.len());
    for ((pid, _), rows) in by_pid.iter().zip(&lookup) {
        let session: Vec<&TrialRecord> = shared.iter().map(|t| rows[t]).collect();
        for (r, &tr) in session.iter().zip(&truth) {
            if r.truth != tr {
                return Err(TeamError::TruthMismatch(r.trial_number).into());
            }
        }
        let rts: Vec<Option<f64>> = session.iter().map(|r| r.rt_s).collect();
        let subj: Vec<Option<f64>> = session.iter().map(|r| r.subj_conf).collect();
        let (rt_n, subj_n) = normalize_behavior(&rts, &subj, rt_weight);
        let mut row = Vec::with_capacity(session.len());
        for (k, r) in session.iter().enumerate() {
            let p = pred_index.get(&(*pid, r.trial_number)).ok_or(TeamError::Coverage {
                participant: *pid,
                trial: r.trial_number,
            })?;
            row.push(MemberVote {
                participant_id: *pid,
                human: r.response,
                rt_score: rt_n[k].unwrap_or(0.0),
                subj_score: subj_n[k].unwrap_or(0.0),
                bci_label: p.bci_label,
                bci_conf: p.conf_norm,
            });
        }
        votes.push(row);
    }
    Ok(ConditionData {
        condition,
        participant_ids: by_pid.iter().map(|(p, _)| *p).collect(),
        trial_numbers: shared,
        truth,
        ai_correct,
        votes,
    })
}
