//! Synthetic operator cohort.
//!
//! Behaviour and neural data are generated from separate seed streams: the
//! epoch of a trial depends on its ground truth, the participant's
//! covariance templates and (through the signal window) the reaction time,
//! never on which button was pressed.
//!
//! Stream paths passed to [`seed::derive`]:
//!
//! | stream                     | path                                    |
//! |----------------------------|-----------------------------------------|
//! | block schedule             | `[1, condition, block]`                 |
//! | AI advice for a block      | `[2, condition, block]`                 |
//! | participant skill offsets  | `[3]`                                   |
//! | behaviour of a session     | `[4, participant, condition]`           |
//! | shared covariance template | `[5]`                                   |
//! | participant template       | `[6, participant]`                      |
//! | epoch of a trial           | `[7, participant, condition, trial]`    |
//!
//! `condition` is 0 for FLA and 1 for SA; participants, blocks and trial
//! numbers are 1-based.

use std::io::{self, BufRead, Write};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{Condition, Label, Response};
use crate::seed;
use crate::signal::{formats::EpochStore, Epoch, DEFAULT_MASK, EPOCH_WINDOW};
use crate::spd::{self, SpdError};

/// Responses later than this are misses.
pub const RESPONSE_WINDOW_S: f64 = 2.5;
const MIN_RT_S: f64 = 0.15;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("invalid cohort config: {0}")]
    Config(String),
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("trials.csv line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AiRegime {
    pub reliability: f64,
    pub latency_min_s: f64,
    pub latency_max_s: f64,
}

/// Lognormal reaction-time component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtMode {
    pub median_s: f64,
    pub sigma: f64,
}

impl RtMode {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        LogNormal::new(self.median_s.ln(), self.sigma)
            .expect("validated rt mode")
            .sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorModel {
    /// Target accuracies on AI-correct and deceptive trials, per regime.
    pub fla_correct_acc: f64,
    pub fla_deceptive_acc: f64,
    pub sa_correct_acc: f64,
    pub sa_deceptive_acc: f64,
    /// Standard deviation of per-participant accuracy offsets.
    pub skill_spread: f64,
    pub miss_rate: f64,
    /// Copying instant advice.
    pub compliance_rt: RtMode,
    /// Own judgement under the fast assistant.
    pub own_rt_fast: RtMode,
    /// Own judgement under the slow assistant, AI-correct trials.
    pub own_rt_slow: RtMode,
    /// Time after the slow advice arrives, when the operator kept their own percept.
    pub conflict_kept_rt: RtMode,
    /// Time after the slow advice arrives, when the operator was swayed.
    pub conflict_swayed_rt: RtMode,
    /// Logistic gain and noise of the subjective-confidence map.
    pub conf_gain: f64,
    pub conf_noise: f64,
}

impl Default for BehaviorModel {
    fn default() -> Self {
        Self {
            fla_correct_acc: 0.871,
            fla_deceptive_acc: 0.502,
            sa_correct_acc: 0.903,
            sa_deceptive_acc: 0.611,
            skill_spread: 0.04,
            miss_rate: 0.01,
            compliance_rt: RtMode {
                median_s: 0.55,
                sigma: 0.2,
            },
            own_rt_fast: RtMode {
                median_s: 0.9,
                sigma: 0.3,
            },
            own_rt_slow: RtMode {
                median_s: 0.95,
                sigma: 0.3,
            },
            conflict_kept_rt: RtMode {
                median_s: 0.2,
                sigma: 0.3,
            },
            conflict_swayed_rt: RtMode {
                median_s: 0.9,
                sigma: 0.25,
            },
            conf_gain: 1.5,
            conf_noise: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochModel {
    pub channels: usize,
    pub sample_rate: f64,
    /// Geodesic half-separation scale between class templates.
    pub separation: f64,
    /// Log-normal spread of the per-participant separation.
    pub separation_spread: f64,
    /// Scale of the per-trial random covariance perturbation.
    pub trial_jitter: f64,
    /// Scale of the per-participant perturbation of the shared base covariance.
    pub participant_jitter: f64,
    /// Weight of the participant-specific part of the class direction.
    pub direction_jitter: f64,
    /// Under the fast assistant the class signal survives only up to this RT.
    pub fast_signal_max_rt_s: f64,
    /// Signal fraction left in trials outside the fast window (and misses).
    pub fast_residual: f64,
    /// Signal fraction in slow-assistant trials.
    pub slow_snr: f64,
    /// Linear decay of the signal across a session when enabled.
    pub phase_drift: bool,
    pub drift_strength: f64,
}

impl Default for EpochModel {
    fn default() -> Self {
        Self {
            channels: 16,
            sample_rate: 500.0,
            separation: 1.0,
            separation_spread: 0.2,
            trial_jitter: 0.0,
            participant_jitter: 0.3,
            direction_jitter: 0.5,
            fast_signal_max_rt_s: 0.8,
            fast_residual: 0.0,
            slow_snr: 1.0,
            phase_drift: false,
            drift_strength: 0.6,
        }
    }
}

impl EpochModel {
    pub fn samples_per_epoch(&self) -> usize {
        ((EPOCH_WINDOW.1 - EPOCH_WINDOW.0) * self.sample_rate).round() as usize
    }

    pub fn channel_labels(&self) -> Vec<String> {
        if self.channels == DEFAULT_MASK.len() {
            DEFAULT_MASK.iter().map(|s| s.to_string()).collect()
        } else {
            (1..=self.channels).map(|i| format!("Ch{i}")).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortConfig {
    pub n_participants: usize,
    pub blocks_per_condition: usize,
    pub trials_per_block: usize,
    pub targets_per_block: usize,
    pub ai_fast: AiRegime,
    pub ai_slow: AiRegime,
    pub behavior: BehaviorModel,
    pub epoch: EpochModel,
    pub master_seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n_participants: 17,
            blocks_per_condition: 3,
            trials_per_block: 50,
            targets_per_block: 20,
            ai_fast: AiRegime {
                reliability: 0.78,
                latency_min_s: 0.0,
                latency_max_s: 0.0,
            },
            ai_slow: AiRegime {
                reliability: 0.90,
                latency_min_s: 0.9,
                latency_max_s: 1.6,
            },
            behavior: BehaviorModel::default(),
            epoch: EpochModel::default(),
            master_seed: 20_240_917,
        }
    }
}

fn check_prob(name: &str, v: f64) -> Result<(), CohortError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CohortError::Config(format!("{name} = {v} is not a probability")))
    }
}

impl CohortConfig {
    pub fn regime(&self, c: Condition) -> &AiRegime {
        match c {
            Condition::Fla => &self.ai_fast,
            Condition::Sa => &self.ai_slow,
        }
    }

    pub fn trials_per_condition(&self) -> usize {
        self.blocks_per_condition * self.trials_per_block
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        if self.n_participants == 0 || self.blocks_per_condition == 0 || self.trials_per_block == 0 {
            return Err(CohortError::Config("cohort dimensions must be positive".into()));
        }
        if self.targets_per_block > self.trials_per_block {
            return Err(CohortError::Config("more targets than trials per block".into()));
        }
        let b = &self.behavior;
        for (n, v) in [
            ("ai_fast.reliability", self.ai_fast.reliability),
            ("ai_slow.reliability", self.ai_slow.reliability),
            ("behavior.fla_correct_acc", b.fla_correct_acc),
            ("behavior.fla_deceptive_acc", b.fla_deceptive_acc),
            ("behavior.sa_correct_acc", b.sa_correct_acc),
            ("behavior.sa_deceptive_acc", b.sa_deceptive_acc),
            ("behavior.miss_rate", b.miss_rate),
            ("epoch.fast_residual", self.epoch.fast_residual),
        ] {
            check_prob(n, v)?;
        }
        for r in [&self.ai_fast, &self.ai_slow] {
            if !(r.latency_min_s >= 0.0 && r.latency_max_s >= r.latency_min_s) {
                return Err(CohortError::Config("AI latency range is invalid".into()));
            }
        }
        for m in [
            b.compliance_rt,
            b.own_rt_fast,
            b.own_rt_slow,
            b.conflict_kept_rt,
            b.conflict_swayed_rt,
        ] {
            if !(m.median_s > 0.0 && m.sigma > 0.0) {
                return Err(CohortError::Config("rt modes need positive median and sigma".into()));
            }
        }
        if self.epoch.channels < 2 || !(self.epoch.sample_rate > 0.0) {
            return Err(CohortError::Config("epoch model needs ≥ 2 channels and a positive rate".into()));
        }
        Ok(())
    }
}

/// One scheduled stimulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledTrial {
    pub truth: Label,
    pub lateral_m: i32,
    pub rotation_deg: u32,
}

/// A block of `n` trials with exactly `n_targets` Targets, seed-shuffled.
pub fn generate_trial_schedule(n: usize, n_targets: usize, seed: u64) -> Vec<ScheduledTrial> {
    const LATERAL: [i32; 5] = [-30, -15, 0, 15, 30];
    const ROTATION: [u32; 4] = [0, 90, 180, 270];
    let mut rng = seed::rng_from_seed(seed);
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i < n_targets { Label::Target } else { Label::NonTarget })
        .collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .map(|truth| ScheduledTrial {
            truth,
            lateral_m: LATERAL[rng.random_range(0..LATERAL.len())],
            rotation_deg: ROTATION[rng.random_range(0..ROTATION.len())],
        })
        .collect()
}

/// Advice equals the truth with probability `reliability`; latency uniform
/// over the regime's range.
pub fn sample_ai_advice<R: Rng>(truth: Label, regime: &AiRegime, rng: &mut R) -> (Label, f64) {
    let correct = rng.random::<f64>() < regime.reliability;
    let latency = if regime.latency_max_s > regime.latency_min_s {
        rng.random_range(regime.latency_min_s..=regime.latency_max_s)
    } else {
        regime.latency_min_s
    };
    (if correct { truth } else { truth.flipped() }, latency)
}

/// Shared per-trial stimulus + advice, identical for every participant.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrial {
    pub block: u32,
    pub trial_number: u32,
    pub stimulus: ScheduledTrial,
    pub ai_advice: Label,
    pub ai_latency_s: f64,
}

impl SessionTrial {
    pub fn ai_correct(&self) -> bool {
        self.ai_advice == self.stimulus.truth
    }
}

fn round_to(v: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

/// The session every participant experiences under one condition.
pub fn session_schedule(cfg: &CohortConfig, condition: Condition) -> Vec<SessionTrial> {
    let c = condition.index();
    let mut out = Vec::with_capacity(cfg.trials_per_condition());
    for block in 1..=cfg.blocks_per_condition as u64 {
        let sched = generate_trial_schedule(
            cfg.trials_per_block,
            cfg.targets_per_block,
            seed::derive(cfg.master_seed, &[1, c, block]),
        );
        let mut rng = seed::rng_for(cfg.master_seed, &[2, c, block]);
        for st in sched {
            let (advice, latency) = sample_ai_advice(st.truth, cfg.regime(condition), &mut rng);
            out.push(SessionTrial {
                block: block as u32,
                trial_number: out.len() as u32 + 1,
                stimulus: st,
                ai_advice: advice,
                ai_latency_s: round_to(latency, 4),
            });
        }
    }
    out
}

/// One row of trials.csv.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub participant_id: u32,
    pub condition: Condition,
    pub block: u32,
    pub trial_number: u32,
    pub truth: Label,
    pub ai_advice: Label,
    pub ai_correct: bool,
    pub ai_latency_s: f64,
    pub response: Response,
    pub rt_s: Option<f64>,
    pub subj_conf: Option<f64>,
}

impl TrialRecord {
    pub fn is_correct(&self) -> bool {
        self.response.is_correct(self.truth)
    }

    pub fn missed(&self) -> bool {
        self.response == Response::Miss
    }
}

/// How a response came about; drives RT and confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseMode {
    /// Copied the instant advice.
    Comply,
    /// Own judgement.
    Own,
    /// Slow deceptive advice contradicted the percept; the percept won.
    ConflictKept,
    /// Slow deceptive advice contradicted the percept; the advice won.
    ConflictSwayed,
}

/// Internal evidence behind a response, mapped to 0–100 confidence.
fn evidence(mode: ResponseMode, correct: bool) -> f64 {
    match (mode, correct) {
        (ResponseMode::Comply, _) => 1.6,
        (ResponseMode::Own, true) => 1.0,
        (ResponseMode::Own, false) => 0.1,
        (ResponseMode::ConflictKept, _) => 0.2,
        (ResponseMode::ConflictSwayed, _) => -0.4,
    }
}

fn sample_rt<R: Rng>(mode: &RtMode, offset: f64, rng: &mut R) -> Option<f64> {
    // Bounded rejection keeps the stream length data-independent enough
    // while respecting the response window.
    for _ in 0..64 {
        let rt = offset + mode.sample(rng);
        if (MIN_RT_S..=RESPONSE_WINDOW_S).contains(&rt) {
            return Some(rt);
        }
    }
    None
}

/// Draws the behavioural outcome of one trial given its mode and
/// correctness. Returns (response, rt, subjective confidence).
pub fn sample_human_response<R: Rng>(
    truth: Label,
    trial: &SessionTrial,
    mode: ResponseMode,
    correct: bool,
    model: &BehaviorModel,
    rng: &mut R,
) -> (Response, Option<f64>, Option<f64>) {
    let (rt_mode, offset) = match mode {
        ResponseMode::Comply => (&model.compliance_rt, 0.0),
        ResponseMode::Own if trial.ai_latency_s > 0.0 => (&model.own_rt_slow, 0.0),
        ResponseMode::Own => (&model.own_rt_fast, 0.0),
        ResponseMode::ConflictKept => (&model.conflict_kept_rt, trial.ai_latency_s),
        ResponseMode::ConflictSwayed => (&model.conflict_swayed_rt, trial.ai_latency_s),
    };
    let noise: f64 = rng.sample(StandardNormal);
    let Some(rt) = sample_rt(rt_mode, offset, rng) else {
        return (Response::Miss, None, None);
    };
    let label = match mode {
        ResponseMode::Comply | ResponseMode::ConflictSwayed => trial.ai_advice,
        _ if correct => truth,
        _ => truth.flipped(),
    };
    let z = model.conf_gain * evidence(mode, correct) + model.conf_noise * noise;
    let conf = 100.0 / (1.0 + (-z).exp());
    (Response::Press(label), Some(round_to(rt, 4)), Some(round_to(conf, 1)))
}

/// Splits `total` units among participants in proportion to `weights`
/// (largest remainder, ties to the lower index).
fn apportion(total: usize, weights: &[f64], caps: &[usize]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let raw: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<usize> = raw.iter().zip(caps).map(|(r, &c)| (r.floor() as usize).min(c)).collect();
    let mut left = total.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    while left > 0 {
        let mut progressed = false;
        for &i in &order {
            if left == 0 {
                break;
            }
            if out[i] < caps[i] {
                out[i] += 1;
                left -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    out
}

/// Per-participant accuracy offsets, centred so the cohort mean is exact.
fn skill_offsets(cfg: &CohortConfig) -> Vec<[f64; 4]> {
    let mut rng = seed::rng_for(cfg.master_seed, &[3]);
    let n = cfg.n_participants;
    let mut offs: Vec<[f64; 4]> = (0..n)
        .map(|_| {
            let mut o = [0.0; 4];
            for v in o.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = z * cfg.behavior.skill_spread;
            }
            o
        })
        .collect();
    for k in 0..4 {
        let mean = offs.iter().map(|o| o[k]).sum::<f64>() / n as f64;
        for o in offs.iter_mut() {
            o[k] -= mean;
        }
    }
    offs
}

/// Behaviour plan for one participant-condition: which trials are missed,
/// which are answered correctly, and by which mode.
struct SessionPlan {
    missed: Vec<bool>,
    correct: Vec<bool>,
}

/// Generates all trial rows, participants in id order, FLA before SA.
pub fn generate_trials(cfg: &CohortConfig) -> Result<Vec<TrialRecord>, CohortError> {
    cfg.validate()?;
    let offs = skill_offsets(cfg);
    let mut rows = Vec::with_capacity(cfg.n_participants * 2 * cfg.trials_per_condition());
    let mut per_condition: Vec<Vec<Vec<TrialRecord>>> = Vec::new();
    for condition in Condition::ALL {
        let session = session_schedule(cfg, condition);
        let b = &cfg.behavior;
        let (acc_v, acc_d) = match condition {
            Condition::Fla => (b.fla_correct_acc, b.fla_deceptive_acc),
            Condition::Sa => (b.sa_correct_acc, b.sa_deceptive_acc),
        };
        let k = condition.index() as usize * 2;

        // Misses first, so the accuracy quotas apply to responded trials.
        let mut rngs: Vec<Xoshiro256PlusPlus> = (1..=cfg.n_participants as u64)
            .map(|p| seed::rng_for(cfg.master_seed, &[4, p, condition.index()]))
            .collect();
        let missed: Vec<Vec<bool>> = rngs
            .iter_mut()
            .map(|rng| session.iter().map(|_| rng.random::<f64>() < b.miss_rate).collect())
            .collect();

        // Cohort-level quotas for each subset, apportioned by participant skill.
        let mut correct: Vec<Vec<bool>> = vec![vec![false; session.len()]; cfg.n_participants];
        for (subset_ai_correct, acc, off_k) in [(true, acc_v, k), (false, acc_d, k + 1)] {
            let members: Vec<Vec<usize>> = missed
                .iter()
                .map(|m| {
                    (0..session.len())
                        .filter(|&i| !m[i] && session[i].ai_correct() == subset_ai_correct)
                        .collect()
                })
                .collect();
            let caps: Vec<usize> = members.iter().map(Vec::len).collect();
            let total_n: usize = caps.iter().sum();
            let quota = (acc * total_n as f64).round() as usize;
            let weights: Vec<f64> = caps
                .iter()
                .zip(&offs)
                .map(|(&n, o)| n as f64 * (acc + o[off_k]).clamp(0.02, 0.999))
                .collect();
            let counts = apportion(quota, &weights, &caps);
            for (p, mut idx) in members.into_iter().enumerate() {
                idx.shuffle(&mut rngs[p]);
                for &i in idx.iter().take(counts[p]) {
                    correct[p][i] = true;
                }
            }
        }

        let mut cond_rows = Vec::with_capacity(cfg.n_participants);
        for p in 0..cfg.n_participants {
            let plan = SessionPlan {
                missed: missed[p].clone(),
                correct: correct[p].clone(),
            };
            let compliance = (acc_v + offs[p][k] - acc_d - offs[p][k + 1]).clamp(0.0, 1.0);
            cond_rows.push(realize_session(
                cfg,
                condition,
                p as u32 + 1,
                &session,
                &plan,
                compliance,
                &mut rngs[p],
            ));
        }
        per_condition.push(cond_rows);
    }
    for p in 0..cfg.n_participants {
        for cond in &per_condition {
            rows.extend(cond[p].iter().cloned());
        }
    }
    Ok(rows)
}

fn realize_session(
    cfg: &CohortConfig,
    condition: Condition,
    participant_id: u32,
    session: &[SessionTrial],
    plan: &SessionPlan,
    compliance: f64,
    rng: &mut Xoshiro256PlusPlus,
) -> Vec<TrialRecord> {
    let b = &cfg.behavior;
    // Share of deceptive errors attributable to copying the advice, and share
    // of AI-correct hits that were copies.
    let n_dec = (0..session.len()).filter(|&i| !plan.missed[i] && !session[i].ai_correct()).count();
    let n_dec_wrong = (0..session.len())
        .filter(|&i| !plan.missed[i] && !session[i].ai_correct() && !plan.correct[i])
        .count();
    let comply_given_wrong = if n_dec_wrong > 0 {
        (compliance * n_dec as f64 / n_dec_wrong as f64).min(1.0)
    } else {
        0.0
    };
    let acc_v = match condition {
        Condition::Fla => b.fla_correct_acc,
        Condition::Sa => b.sa_correct_acc,
    };
    let comply_given_hit = (compliance / acc_v.max(1e-9)).min(1.0);

    session
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let truth = st.stimulus.truth;
            let u: f64 = rng.random();
            let base = TrialRecord {
                participant_id,
                condition,
                block: st.block,
                trial_number: st.trial_number,
                truth,
                ai_advice: st.ai_advice,
                ai_correct: st.ai_correct(),
                ai_latency_s: st.ai_latency_s,
                response: Response::Miss,
                rt_s: None,
                subj_conf: None,
            };
            if plan.missed[i] {
                return base;
            }
            let correct = plan.correct[i];
            let mode = match (condition, st.ai_correct(), correct) {
                (Condition::Fla, false, false) if u < comply_given_wrong => ResponseMode::Comply,
                (Condition::Fla, true, true) if u < comply_given_hit => ResponseMode::Comply,
                (Condition::Fla, _, _) => ResponseMode::Own,
                (Condition::Sa, true, _) => ResponseMode::Own,
                (Condition::Sa, false, true) => ResponseMode::ConflictKept,
                (Condition::Sa, false, false) => ResponseMode::ConflictSwayed,
            };
            let (response, rt_s, subj_conf) = sample_human_response(truth, st, mode, correct, b, rng);
            TrialRecord {
                response,
                rt_s,
                subj_conf,
                ..base
            }
        })
        .collect()
}

pub const TRIALS_HEADER: &str =
    "participant_id,condition,block,trial_number,truth,ai_advice,ai_correct,ai_latency_s,response,rt_s,subj_conf";

pub fn write_trials<W: Write>(mut w: W, rows: &[TrialRecord]) -> io::Result<()> {
    writeln!(w, "{TRIALS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:.4},{},{},{}",
            r.participant_id,
            r.condition,
            r.block,
            r.trial_number,
            r.truth,
            r.ai_advice,
            r.ai_correct as u8,
            r.ai_latency_s,
            r.response.code(),
            r.rt_s.map(|v| format!("{v:.4}")).unwrap_or_default(),
            r.subj_conf.map(|v| format!("{v:.1}")).unwrap_or_default(),
        )?;
    }
    Ok(())
}

pub fn read_trials<R: BufRead>(r: R) -> Result<Vec<TrialRecord>, CohortError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr
        .headers()
        .map_err(|e| CohortError::Parse {
            line: 1,
            reason: e.to_string(),
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != TRIALS_HEADER {
        return Err(CohortError::Parse {
            line: 1,
            reason: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let perr = |reason: String| CohortError::Parse { line, reason };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.len() != 11 {
            return Err(perr(format!("expected 11 fields, got {}", rec.len())));
        }
        let num = |k: usize| -> Result<u32, CohortError> { rec[k].parse().map_err(|e| perr(format!("field {k}: {e}"))) };
        let real = |k: usize| -> Result<Option<f64>, CohortError> {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                rec[k].parse().map(Some).map_err(|e| perr(format!("field {k}: {e}")))
            }
        };
        let response: Response = rec[8].parse().map_err(perr)?;
        let rt_s = real(9)?;
        if (response == Response::Miss) != rt_s.is_none() {
            return Err(perr("rt_s must be empty exactly when the response is MISS".into()));
        }
        out.push(TrialRecord {
            participant_id: num(0)?,
            condition: rec[1].parse().map_err(perr)?,
            block: num(2)?,
            trial_number: num(3)?,
            truth: rec[4].parse().map_err(perr)?,
            ai_advice: rec[5].parse().map_err(perr)?,
            ai_correct: match &rec[6] {
                "1" => true,
                "0" => false,
                other => return Err(perr(format!("ai_correct {other:?}"))),
            },
            ai_latency_s: real(7)?.ok_or_else(|| perr("missing ai_latency_s".into()))?,
            response,
            rt_s,
            subj_conf: real(10)?,
        });
    }
    Ok(out)
}

/// Class-conditional covariance templates of one participant.
#[derive(Debug, Clone)]
pub struct ParticipantTemplate {
    /// `B^{1/2}` of the participant's base covariance.
    base_sqrt: DMatrix<f64>,
    /// Unit-Frobenius class direction in the tangent space at `B`.
    direction: DMatrix<f64>,
    /// Half-separation along `direction`.
    pub separation: f64,
}

fn random_symmetric<R: Rng>(p: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = (&a + a.transpose()) * 0.5;
    let n = s.norm();
    if n > 0.0 {
        s * (scale / n)
    } else {
        s
    }
}

impl ParticipantTemplate {
    /// Template covariance for a class at full signal.
    pub fn class_covariance(&self, truth: Label) -> Result<spd::SpdMatrix, SpdError> {
        self.trial_covariance(truth, 1.0, None)
    }

    fn trial_covariance(&self, truth: Label, snr: f64, jitter: Option<&DMatrix<f64>>) -> Result<spd::SpdMatrix, SpdError> {
        let mut t = &self.direction * (truth.sign() * self.separation * snr);
        if let Some(j) = jitter {
            t += j;
        }
        let e = spd::matrix_exp(&t)?;
        spd::SpdMatrix::new(&self.base_sqrt * e.as_matrix() * &self.base_sqrt)
    }
}

/// Templates for every participant (index `p - 1`).
pub fn participant_templates(cfg: &CohortConfig) -> Result<Vec<ParticipantTemplate>, CohortError> {
    let m = &cfg.epoch;
    let p = m.channels;
    let mut rng = seed::rng_for(cfg.master_seed, &[5]);
    let base = spd::matrix_exp(&random_symmetric(p, 3.0, &mut rng))?;
    let base_sqrt = spd::matrix_sqrt(&base)?;
    let shared_dir = random_symmetric(p, 1.0, &mut rng);
    (1..=cfg.n_participants as u64)
        .map(|pid| {
            let mut rng = seed::rng_for(cfg.master_seed, &[6, pid]);
            let w = random_symmetric(p, m.participant_jitter, &mut rng);
            let inner = spd::matrix_exp(&w)?;
            let bp = spd::SpdMatrix::new(base_sqrt.as_matrix() * inner.as_matrix() * base_sqrt.as_matrix())?;
            let mut dir = &shared_dir + random_symmetric(p, m.direction_jitter, &mut rng);
            let n = dir.norm();
            dir /= n;
            let z: f64 = rng.sample(StandardNormal);
            Ok(ParticipantTemplate {
                base_sqrt: spd::matrix_sqrt(&bp)?.into_matrix(),
                direction: dir,
                separation: m.separation * (m.separation_spread * z).exp(),
            })
        })
        .collect()
}

/// Fraction of the class signal present in an epoch.
pub fn snr_by_rt(model: &EpochModel, condition: Condition, rt_s: Option<f64>) -> f64 {
    match condition {
        Condition::Fla => match rt_s {
            Some(rt) if rt <= model.fast_signal_max_rt_s => 1.0,
            _ => model.fast_residual,
        },
        Condition::Sa => model.slow_snr,
    }
}

/// Zero-mean Gaussian epoch whose covariance is the participant's class
/// template with the signal scaled by `snr`.
pub fn sample_epoch<R: Rng>(
    truth: Label,
    template: &ParticipantTemplate,
    snr: f64,
    model: &EpochModel,
    trial_id: u32,
    rng: &mut R,
) -> Result<Epoch, CohortError> {
    let p = model.channels;
    let jitter = (model.trial_jitter > 0.0).then(|| random_symmetric(p, model.trial_jitter, rng));
    let cov = template.trial_covariance(truth, snr, jitter.as_ref())?;
    let l = cov
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(SpdError::NotPositiveDefinite { min: 0.0, max: 0.0 })?
        .l();
    let n = model.samples_per_epoch();
    let z = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = l * z;
    let mut data = Vec::with_capacity(p * n);
    for c in 0..p {
        data.extend(x.row(c).iter().copied());
    }
    Ok(Epoch {
        trial_id,
        labels: model.channel_labels(),
        sample_rate: model.sample_rate,
        t0_offset_s: EPOCH_WINDOW.0,
        samples_per_channel: n,
        data,
    })
}

/// Epoch store for one participant-condition. `rows` must be that
/// session's trials in time order.
pub fn generate_epochs(
    cfg: &CohortConfig,
    template: &ParticipantTemplate,
    rows: &[TrialRecord],
) -> Result<EpochStore, CohortError> {
    let m = &cfg.epoch;
    let n = rows.len().max(1) as f64;
    let epochs: Vec<Epoch> = rows
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = seed::rng_for(
                cfg.master_seed,
                &[7, r.participant_id as u64, r.condition.index(), r.trial_number as u64],
            );
            let mut snr = snr_by_rt(m, r.condition, r.rt_s);
            if m.phase_drift {
                snr *= 1.0 - m.drift_strength * i as f64 / n;
            }
            sample_epoch(r.truth, template, snr, m, r.trial_number, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let mut store = EpochStore::new(m.channels, m.samples_per_epoch());
    for e in &epochs {
        store.push(e).expect("uniform epoch shape");
    }
    Ok(store)
}

/// Pooled accuracy over responded trials matching `filter`.
pub fn pooled_accuracy<F: Fn(&TrialRecord) -> bool>(rows: &[TrialRecord], filter: F) -> Option<f64> {
    let (hit, n) = rows
        .iter()
        .filter(|r| !r.missed() && filter(r))
        .fold((0usize, 0usize), |(h, n), r| (h + r.is_correct() as usize, n + 1));
    (n > 0).then(|| hit as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_counts_and_determinism() {
        let a = generate_trial_schedule(50, 20, 9);
        assert_eq!(a.iter().filter(|t| t.truth == Label::Target).count(), 20);
        assert_eq!(a, generate_trial_schedule(50, 20, 9));
        let distinct = (0..10u64)
            .map(|s| generate_trial_schedule(50, 20, s))
            .filter(|s| s.iter().map(|t| t.truth).ne(a.iter().map(|t| t.truth)))
            .count();
        assert!(distinct >= 1);
        assert!(a.iter().all(|t| [0, 90, 180, 270].contains(&t.rotation_deg)));
    }

    #[test]
    fn advice_reliability() {
        let regime = CohortConfig::default().ai_fast;
        let mut rng = seed::rng_from_seed(1);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_ai_advice(Label::Target, &regime, &mut rng).0 == Label::Target)
            .count();
        assert!((hits as f64 / n as f64 - 0.78).abs() < 0.01);

        let slow = CohortConfig::default().ai_slow;
        for _ in 0..1000 {
            let (_, lat) = sample_ai_advice(Label::NonTarget, &slow, &mut rng);
            assert!((0.9..=1.6).contains(&lat));
        }
        let perfect = AiRegime {
            reliability: 1.0,
            ..slow
        };
        assert!((0..1000).all(|_| sample_ai_advice(Label::NonTarget, &perfect, &mut rng).0 == Label::NonTarget));
    }

    #[test]
    fn forced_copy_of_always_wrong_advice() {
        let mut cfg = CohortConfig::default();
        cfg.n_participants = 3;
        cfg.ai_fast.reliability = 0.0;
        cfg.behavior.fla_deceptive_acc = 0.0;
        cfg.behavior.skill_spread = 0.0;
        cfg.behavior.miss_rate = 0.0;
        let rows = generate_trials(&cfg).unwrap();
        let fla: Vec<_> = rows.iter().filter(|r| r.condition == Condition::Fla).collect();
        assert!(fla.iter().all(|r| !r.is_correct()));
    }

    #[test]
    fn default_calibration_and_shape() {
        let cfg = CohortConfig::default();
        let rows = generate_trials(&cfg).unwrap();
        assert_eq!(rows.len(), 17 * 300);
        let acc = |c: Condition, ai: bool| pooled_accuracy(&rows, |r| r.condition == c && r.ai_correct == ai).unwrap();
        assert!((acc(Condition::Fla, true) - 0.871).abs() < 0.005);
        assert!((acc(Condition::Sa, true) - 0.903).abs() < 0.005);
        assert!((acc(Condition::Fla, false) - 0.502).abs() < 0.005);
        assert!((acc(Condition::Sa, false) - 0.611).abs() < 0.005);

        let mean_rt = |ai: bool| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.condition == Condition::Sa && r.ai_correct == ai)
                .filter_map(|r| r.rt_s)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean_rt(false) > mean_rt(true));
        assert!(rows.iter().filter_map(|r| r.rt_s).all(|rt| rt > 0.0 && rt <= RESPONSE_WINDOW_S));
    }

    #[test]
    fn trials_csv_round_trip() {
        let mut cfg = CohortConfig::default();
        cfg.n_participants = 2;
        let rows = generate_trials(&cfg).unwrap();
        let mut buf = Vec::new();
        write_trials(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(TRIALS_HEADER));
        let back = read_trials(io::Cursor::new(buf)).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn apportion_respects_total_and_caps() {
        let out = apportion(10, &[1.0, 1.0, 1.0], &[5, 5, 5]);
        assert_eq!(out.iter().sum::<usize>(), 10);
        assert_eq!(out, vec![4, 3, 3]);
        let capped = apportion(9, &[10.0, 1.0, 1.0], &[3, 5, 5]);
        assert_eq!(capped.iter().sum::<usize>(), 9);
        assert_eq!(capped[0], 3);
    }

    #[test]
    fn epoch_nearer_its_own_template() {
        let mut cfg = CohortConfig::default();
        cfg.n_participants = 1;
        let t = &participant_templates(&cfg).unwrap()[0];
        let ct = t.class_covariance(Label::Target).unwrap();
        let cn = t.class_covariance(Label::NonTarget).unwrap();
        let mut rng = seed::rng_from_seed(4);
        let mut hits = 0;
        for k in 0..100 {
            let truth = if k % 2 == 0 { Label::Target } else { Label::NonTarget };
            let e = sample_epoch(truth, t, 1.0, &cfg.epoch, k, &mut rng).unwrap();
            let c = crate::classifier::oas_covariance(&e).unwrap();
            let (own, other) = if truth == Label::Target { (&ct, &cn) } else { (&cn, &ct) };
            if spd::geodesic_distance(&c, own).unwrap() < spd::geodesic_distance(&c, other).unwrap() {
                hits += 1;
            }
        }
        assert!(hits >= 90, "{hits}");
    }

    #[test]
    fn epochs_ignore_the_response() {
        let mut cfg = CohortConfig::default();
        cfg.n_participants = 1;
        let mut rows: Vec<TrialRecord> = generate_trials(&cfg)
            .unwrap()
            .into_iter()
            .filter(|r| r.condition == Condition::Sa)
            .take(6)
            .collect();
        let t = &participant_templates(&cfg).unwrap()[0];
        let a = generate_epochs(&cfg, t, &rows).unwrap();
        for r in rows.iter_mut() {
            if let Response::Press(l) = r.response {
                r.response = Response::Press(l.flipped());
            }
            r.subj_conf = Some(3.0);
        }
        assert_eq!(generate_epochs(&cfg, t, &rows).unwrap(), a);
    }
}
