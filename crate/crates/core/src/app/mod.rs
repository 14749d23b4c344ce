//! Staged runs on a working directory: synth → pipeline → simulate →
//! stats → report. Each stage records its outputs in the manifest and is
//! skipped when its configuration and inputs are unchanged.

pub mod config;
pub mod manifest;
pub mod report;

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::cohort::{self, CohortError, TrialRecord};
use crate::domain::Condition;
use crate::oracle::{write_report_rows, ORACLE_REPORT_HEADER};
use crate::pipeline::{
    build_condition_data, process_session, read_predictions, write_predictions, EpochLayout, PipelineError,
    PredictionRecord,
};
use crate::signal::formats::{EpochStore, FormatError};
use crate::stats::{self, bonferroni, rescue_delta, ComparisonRow};
use crate::team::{self, ConditionData, Method, Subset, TeamError, TeamResult};

pub use config::{ConfigError, RunConfig};
pub use manifest::Manifest;

pub const STAGES: [&str; 5] = ["synth", "pipeline", "simulate", "stats", "report"];

pub const TRIALS_FILE: &str = "trials.csv";
pub const ORACLE_FILE: &str = "oracle_report.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const PLOTDATA_FILE: &str = "plotdata.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Hybrid methods compared against their behavioural counterparts.
pub const HYBRIDS: [Method; 3] = [Method::RtPlusBci, Method::SubjConfPlusBci, Method::RtSubjConfPlusBci];

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("missing input {0} (run the earlier stages first)")]
    MissingInput(PathBuf),
    #[error("{0} has no data rows")]
    EmptyInput(PathBuf),
    #[error("{0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl AppError {
    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numeric(_) => 4,
            _ => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl From<PipelineError> for AppError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Classifier { .. } => AppError::Numeric(e.to_string()),
            PipelineError::Signal(_) => AppError::Data(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<TeamError> for AppError {
    fn from(e: TeamError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<ClassifierError> for AppError {
    fn from(e: ClassifierError) -> Self {
        AppError::Numeric(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    /// Configuration and inputs unchanged since the recorded run.
    Skipped,
}

pub fn epoch_store_name(participant: u32, condition: Condition) -> String {
    format!("p{participant:02}_{condition}.nfep")
}

/// A run over one working directory.
pub struct Runner {
    pub cfg: RunConfig,
    pub force: bool,
    manifest: Manifest,
}

impl Runner {
    pub fn new(cfg: RunConfig, force: bool) -> Result<Self, AppError> {
        cfg.validate()?;
        let wd = cfg.workdir.clone();
        if !wd.exists() {
            log::info!("creating workdir {}", wd.display());
        }
        fs::create_dir_all(&wd).map_err(io_err(&wd))?;
        let manifest = Manifest::load(&wd).map_err(io_err(&wd.join(manifest::MANIFEST_FILE)))?;
        Ok(Self { cfg, force, manifest })
    }

    pub fn workdir(&self) -> &Path {
        &self.cfg.workdir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn rel_dataset(&self, name: &str) -> String {
        format!("{}/{name}", self.cfg.dataset_dir)
    }

    fn rel_epochs(&self, participant: u32, condition: Condition) -> String {
        self.rel_dataset(&format!("epochs/{}", epoch_store_name(participant, condition)))
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.workdir.join(rel)
    }

    fn prefixes(stage: &str) -> &'static [&'static str] {
        match stage {
            "synth" => &["cohort.", "paths.dataset"],
            "pipeline" => &["cohort.", "pipeline."],
            "simulate" | "stats" => &["pipeline.rt_weight", "simulate."],
            _ => &["simulate.", "report."],
        }
    }

    /// Runs `body` unless the stage is current. `inputs` are workdir
    /// relative paths whose digests join the stage key; `body` returns the
    /// relative paths it wrote.
    fn stage<F>(&mut self, name: &str, inputs: &[String], body: F) -> Result<StageOutcome, AppError>
    where
        F: FnOnce(&Self) -> Result<Vec<String>, AppError>,
    {
        let mut digests = Vec::new();
        for rel in inputs {
            let p = self.path(rel);
            if !p.exists() {
                return Err(AppError::MissingInput(p));
            }
            digests.push((rel.clone(), manifest::file_digest(&p).map_err(io_err(&p))?));
        }
        let key = manifest::stage_key(name, &self.cfg.hash_of(Self::prefixes(name)), &digests);
        if !self.force && self.manifest.is_current(&self.cfg.workdir, name, &key) {
            log::info!("{name}: up to date, skipping");
            return Ok(StageOutcome::Skipped);
        }
        log::info!("{name}: running");
        let written = body(self)?;
        let mut outputs = Vec::with_capacity(written.len());
        for rel in written {
            let p = self.path(&rel);
            outputs.push((rel, manifest::file_digest(&p).map_err(io_err(&p))?));
        }
        self.manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        self.manifest.config_hash = self.cfg.config_hash();
        self.manifest.upsert(
            manifest::StageRecord {
                name: name.to_string(),
                key,
                outputs,
            },
            &STAGES,
        );
        let wd = self.cfg.workdir.clone();
        self.manifest.save(&wd).map_err(io_err(&wd.join(manifest::MANIFEST_FILE)))?;
        Ok(StageOutcome::Ran)
    }

    pub fn synth(&mut self) -> Result<StageOutcome, AppError> {
        self.stage("synth", &[], |r| r.do_synth())
    }

    fn do_synth(&self) -> Result<Vec<String>, AppError> {
        let cfg = &self.cfg.cohort;
        let cohort_err = |e: CohortError| match e {
            CohortError::Config(m) => AppError::Config(ConfigError::Invalid(m)),
            CohortError::Spd(e) => AppError::Numeric(e.to_string()),
            other => AppError::Data(other.to_string()),
        };
        let rows = cohort::generate_trials(cfg).map_err(cohort_err)?;
        let templates = cohort::participant_templates(cfg).map_err(cohort_err)?;
        let epoch_dir = self.path(&self.rel_dataset("epochs"));
        fs::create_dir_all(&epoch_dir).map_err(io_err(&epoch_dir))?;

        let trials_rel = self.rel_dataset(TRIALS_FILE);
        write_file(&self.path(&trials_rel), |w| cohort::write_trials(w, &rows))?;
        let mut written = vec![trials_rel];
        for (pid, rows) in sessions(&rows) {
            let cond = rows[0].condition;
            let store = cohort::generate_epochs(cfg, &templates[pid as usize - 1], &rows).map_err(cohort_err)?;
            let rel = self.rel_epochs(pid, cond);
            write_file(&self.path(&rel), |w| {
                store.write(w).map_err(|e| match e {
                    FormatError::Io(e) => e,
                    other => io::Error::other(other.to_string()),
                })
            })?;
            written.push(rel);
        }
        Ok(written)
    }

    fn load_trials(&self) -> Result<Vec<TrialRecord>, AppError> {
        let p = self.path(&self.rel_dataset(TRIALS_FILE));
        let f = fs::File::open(&p).map_err(|_| AppError::MissingInput(p.clone()))?;
        let rows = cohort::read_trials(BufReader::new(f)).map_err(|e| AppError::Data(format!("{}: {e}", p.display())))?;
        if rows.is_empty() {
            return Err(AppError::EmptyInput(p));
        }
        Ok(rows)
    }

    fn dataset_inputs(&self) -> Result<Vec<String>, AppError> {
        let mut inputs = vec![self.rel_dataset(TRIALS_FILE)];
        let rows = self.load_trials()?;
        for (pid, rows) in sessions(&rows) {
            inputs.push(self.rel_epochs(pid, rows[0].condition));
        }
        Ok(inputs)
    }

    pub fn pipeline(&mut self) -> Result<StageOutcome, AppError> {
        let inputs = self.dataset_inputs()?;
        self.stage("pipeline", &inputs, |r| r.do_pipeline())
    }

    fn do_pipeline(&self) -> Result<Vec<String>, AppError> {
        let rows = self.load_trials()?;
        let e = &self.cfg.cohort.epoch;
        let layout = EpochLayout {
            labels: e.channel_labels(),
            sample_rate: e.sample_rate,
        };
        let mask = if self.cfg.pipeline.channel_mask.is_empty() {
            layout.labels.clone()
        } else {
            self.cfg.pipeline.channel_mask.clone()
        };
        let oracle_cfg = self.cfg.pipeline.oracle();
        let seed = self.cfg.cohort.master_seed;
        let groups = sessions(&rows);
        let outputs = groups
            .par_iter()
            .map(|(pid, session)| {
                let p = self.path(&self.rel_epochs(*pid, session[0].condition));
                let f = fs::File::open(&p).map_err(|_| AppError::MissingInput(p.clone()))?;
                let store = EpochStore::read(BufReader::new(f))
                    .map_err(|e| AppError::Data(format!("{}: {e}", p.display())))?;
                Ok(process_session(session, &store, &layout, &mask, &oracle_cfg, seed)?)
            })
            .collect::<Result<Vec<_>, AppError>>()?;

        let report_rel = ORACLE_FILE.to_string();
        write_file(&self.path(&report_rel), |mut w| {
            writeln!(w, "{ORACLE_REPORT_HEADER}")?;
            for o in &outputs {
                write_report_rows(&mut w, o.participant_id, o.condition, &o.report)?;
            }
            Ok(())
        })?;
        let records: Vec<PredictionRecord> = outputs.iter().flat_map(|o| o.records()).collect();
        let pred_rel = PREDICTIONS_FILE.to_string();
        write_file(&self.path(&pred_rel), |w| write_predictions(w, &records))?;
        Ok(vec![report_rel, pred_rel])
    }

    /// Vote tables for both conditions, from the files on disk.
    pub fn condition_data(&self) -> Result<Vec<ConditionData>, AppError> {
        let trials = self.load_trials()?;
        let p = self.path(PREDICTIONS_FILE);
        let f = fs::File::open(&p).map_err(|_| AppError::MissingInput(p.clone()))?;
        let preds = read_predictions(BufReader::new(f))?;
        if preds.is_empty() {
            return Err(AppError::EmptyInput(p));
        }
        Condition::ALL
            .iter()
            .map(|&c| Ok(build_condition_data(&trials, &preds, c, self.cfg.pipeline.rt_weight)?))
            .collect()
    }

    pub fn simulate(&mut self) -> Result<StageOutcome, AppError> {
        let inputs = vec![self.rel_dataset(TRIALS_FILE), PREDICTIONS_FILE.to_string()];
        self.stage("simulate", &inputs, |r| r.do_simulate())
    }

    fn do_simulate(&self) -> Result<Vec<String>, AppError> {
        let data = self.condition_data()?;
        let sim = &self.cfg.simulate;
        let mut results: Vec<TeamResult> = Vec::new();
        for d in &data {
            for &m in &sim.sizes {
                for s in team::simulate_size(d, &sim.methods, m)? {
                    results.extend(
                        team::results_from_scores(&s)
                            .into_iter()
                            .filter(|r| sim.subsets.contains(&r.subset)),
                    );
                }
            }
        }
        write_file(&self.path(RESULTS_FILE), |w| team::write_results(w, &results))?;
        write_file(&self.path(PLOTDATA_FILE), |w| team::write_plotdata(w, &results))?;
        Ok(vec![RESULTS_FILE.into(), PLOTDATA_FILE.into()])
    }

    pub fn stats(&mut self) -> Result<StageOutcome, AppError> {
        let inputs = vec![self.rel_dataset(TRIALS_FILE), PREDICTIONS_FILE.to_string()];
        self.stage("stats", &inputs, |r| r.do_stats())
    }

    fn do_stats(&self) -> Result<Vec<String>, AppError> {
        let data = self.condition_data()?;
        let rows = comparisons(&data, &self.cfg.simulate.sizes, &self.cfg.simulate.subsets)?;
        write_file(&self.path(STATS_FILE), |w| stats::write_stats(w, &rows))?;
        Ok(vec![STATS_FILE.into()])
    }

    pub fn report(&mut self) -> Result<StageOutcome, AppError> {
        let inputs = vec![RESULTS_FILE.to_string(), STATS_FILE.to_string()];
        self.stage("report", &inputs, |r| r.do_report())
    }

    fn do_report(&self) -> Result<Vec<String>, AppError> {
        let rp = self.path(RESULTS_FILE);
        let f = fs::File::open(&rp).map_err(|_| AppError::MissingInput(rp.clone()))?;
        let results = team::read_results(BufReader::new(f)).map_err(|e| AppError::Data(format!("{}: {e}", rp.display())))?;
        if results.is_empty() {
            return Err(AppError::EmptyInput(rp));
        }
        let sp = self.path(STATS_FILE);
        let f = fs::File::open(&sp).map_err(|_| AppError::MissingInput(sp.clone()))?;
        let rows = stats::read_stats(BufReader::new(f)).map_err(|e| AppError::Data(format!("{}: {e}", sp.display())))?;

        let text = report::summary_text(&results, &rows);
        fs::write(self.path(SUMMARY_FILE), &text).map_err(io_err(&self.path(SUMMARY_FILE)))?;
        let mut written = vec![SUMMARY_FILE.to_string()];
        if self.cfg.report.svg {
            let subset = if self.cfg.simulate.subsets.contains(&Subset::AiDeceptive) {
                Subset::AiDeceptive
            } else {
                self.cfg.simulate.subsets[0]
            };
            for c in Condition::ALL {
                let rel = format!("accuracy_{c}.svg");
                let svg = report::accuracy_svg(&results, c, subset);
                fs::write(self.path(&rel), svg).map_err(io_err(&self.path(&rel)))?;
                written.push(rel);
            }
        }
        Ok(written)
    }

    pub fn summary(&self) -> Option<String> {
        fs::read_to_string(self.path(SUMMARY_FILE)).ok()
    }

    pub fn run_all(&mut self) -> Result<Vec<(&'static str, StageOutcome)>, AppError> {
        Ok(vec![
            ("synth", self.synth()?),
            ("pipeline", self.pipeline()?),
            ("simulate", self.simulate()?),
            ("stats", self.stats()?),
            ("report", self.report()?),
        ])
    }
}

/// Trial rows grouped by session, keeping first-appearance order.
pub fn sessions(rows: &[TrialRecord]) -> Vec<(u32, Vec<TrialRecord>)> {
    let mut out: Vec<(u32, Vec<TrialRecord>)> = Vec::new();
    for r in rows {
        match out
            .iter_mut()
            .find(|(p, s)| *p == r.participant_id && s[0].condition == r.condition)
        {
            Some((_, s)) => s.push(r.clone()),
            None => out.push((r.participant_id, vec![r.clone()])),
        }
    }
    out
}

fn write_file<F>(path: &Path, f: F) -> Result<(), AppError>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
{
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn comparison_name(hybrid: Method, behavioural: Method) -> String {
    format!("{hybrid}-vs-{behavioural}")
}

/// Rescue deltas of every hybrid method against its behavioural
/// counterpart, paired by team. The Bonferroni family of a row is all
/// hybrids × all sizes of its condition and subset.
pub fn comparisons(data: &[ConditionData], sizes: &[usize], subsets: &[Subset]) -> Result<Vec<ComparisonRow>, AppError> {
    let mut methods: Vec<Method> = HYBRIDS.to_vec();
    for h in HYBRIDS {
        let b = h.behavioural_counterpart().expect("hybrids have counterparts");
        if !methods.contains(&b) {
            methods.push(b);
        }
    }
    let mut out = Vec::new();
    for d in data {
        let mut per_subset: Vec<Vec<ComparisonRow>> = vec![Vec::new(); subsets.len()];
        for &m in sizes {
            let scores = team::simulate_size(d, &methods, m)?;
            let find = |method: Method| scores.iter().find(|s| s.method == method).expect("simulated");
            for h in HYBRIDS {
                let b = h.behavioural_counterpart().expect("hybrids have counterparts");
                let (hs, bs) = (find(h), find(b));
                for (k, &subset) in subsets.iter().enumerate() {
                    let ha = hs.team_accuracies(subset);
                    let ba = bs.team_accuracies(subset);
                    if ha.is_empty() || hs.n_trials[subset as usize] == 0 {
                        continue;
                    }
                    let r = rescue_delta(&ha, &ba).map_err(|e| AppError::Numeric(e.to_string()))?;
                    per_subset[k].push(ComparisonRow {
                        comparison: comparison_name(h, b),
                        condition: d.condition.code().to_string(),
                        team_size: m,
                        subset: subset.name().to_string(),
                        delta_pp: r.delta_pp,
                        test: r.test,
                        p_corrected: r.test.p_value,
                    });
                }
            }
        }
        for mut family in per_subset {
            let raw: Vec<f64> = family.iter().map(|r| r.test.p_value).collect();
            let adj = bonferroni(&raw, HYBRIDS.len() * sizes.len()).map_err(|e| AppError::Numeric(e.to_string()))?;
            for (r, p) in family.iter_mut().zip(adj) {
                r.p_corrected = p;
            }
            out.extend(family);
        }
    }
    Ok(out)
}

/// Runs `f` on a pool capped at `threads` workers (all cores when `None`).
pub fn with_threads<T: Send, F: FnOnce() -> T + Send>(threads: Option<usize>, f: F) -> Result<T, AppError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n.max(1));
    }
    let pool = b
        .build()
        .map_err(|e| AppError::Config(ConfigError::Invalid(format!("thread pool: {e}"))))?;
    Ok(pool.install(f))
}
