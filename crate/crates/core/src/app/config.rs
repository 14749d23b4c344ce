//! Run configuration.
//!
//! Files are line oriented: `key = value`, one per line, with dotted keys
//! (`cohort.epoch.separation = 0.6`). `#` starts a comment; blank lines are
//! ignored. Lists are comma separated. Any key may also be given on the
//! command line as `--key value` or `--key=value`, which wins over the file.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cohort::CohortConfig;
use crate::oracle::{GeometryMode, OracleConfig};
use crate::team::{Method, RtWeight, Subset};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {key}: cannot parse {value:?}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Settings of the classification stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSettings {
    pub cv_folds: usize,
    pub geometry: GeometryMode,
    pub min_cell_trials: usize,
    pub min_per_class: usize,
    pub reg_c: f64,
    pub rt_weight: RtWeight,
    /// Channels used for features; empty means every stored channel.
    pub channel_mask: Vec<String>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        let o = OracleConfig::default();
        Self {
            cv_folds: o.folds,
            geometry: o.geometry,
            min_cell_trials: o.min_cell_trials,
            min_per_class: o.min_per_class,
            reg_c: o.reg_c,
            rt_weight: RtWeight::Inverse,
            channel_mask: Vec::new(),
        }
    }
}

impl PipelineSettings {
    pub fn oracle(&self) -> OracleConfig {
        OracleConfig {
            folds: self.cv_folds,
            reg_c: self.reg_c,
            min_cell_trials: self.min_cell_trials,
            min_per_class: self.min_per_class,
            geometry: self.geometry,
            ..OracleConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSettings {
    pub sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub subsets: Vec<Subset>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            sizes: vec![2, 4, 6, 8],
            methods: Method::ALL.to_vec(),
            subsets: Subset::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportSettings {
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub workdir: PathBuf,
    /// Dataset directory, relative to the workdir.
    pub dataset_dir: String,
    pub cohort: CohortConfig,
    pub pipeline: PipelineSettings,
    pub simulate: SimulateSettings,
    pub report: ReportSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("neurofuse-run"),
            dataset_dir: "dataset".into(),
            cohort: CohortConfig::default(),
            pipeline: PipelineSettings::default(),
            simulate: SimulateSettings::default(),
            report: ReportSettings::default(),
        }
    }
}

trait ConfigValue {
    fn set(&mut self, s: &str) -> Result<(), String>;
    fn render(&self) -> String;
}

struct Scalar<'a, T>(&'a mut T);

impl<T> ConfigValue for Scalar<'_, T>
where
    T: FromStr + Display,
    T::Err: Display,
{
    fn set(&mut self, s: &str) -> Result<(), String> {
        *self.0 = s.parse().map_err(|e: T::Err| e.to_string())?;
        Ok(())
    }

    fn render(&self) -> String {
        self.0.to_string()
    }
}

struct List<'a, T>(&'a mut Vec<T>);

impl<T> ConfigValue for List<'_, T>
where
    T: FromStr + Display,
    T::Err: Display,
{
    fn set(&mut self, s: &str) -> Result<(), String> {
        *self.0 = s
            .split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| x.parse().map_err(|e: T::Err| e.to_string()))
            .collect::<Result<_, _>>()?;
        Ok(())
    }

    fn render(&self) -> String {
        self.0.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }
}

struct PathSlot<'a>(&'a mut PathBuf);

impl ConfigValue for PathSlot<'_> {
    fn set(&mut self, s: &str) -> Result<(), String> {
        *self.0 = PathBuf::from(s);
        Ok(())
    }

    fn render(&self) -> String {
        self.0.display().to_string()
    }
}

macro_rules! slots {
    ($($key:literal => $wrap:ident($field:expr)),* $(,)?) => {
        vec![$(($key, Box::new($wrap(&mut $field)) as Box<dyn ConfigValue + '_>)),*]
    };
}

impl RunConfig {
    fn slots(&mut self) -> Vec<(&'static str, Box<dyn ConfigValue + '_>)> {
        let c = &mut self.cohort;
        let b = &mut c.behavior;
        let e = &mut c.epoch;
        let p = &mut self.pipeline;
        let s = &mut self.simulate;
        slots![
            "paths.workdir" => PathSlot(self.workdir),
            "paths.dataset" => Scalar(self.dataset_dir),
            "cohort.n_participants" => Scalar(c.n_participants),
            "cohort.blocks" => Scalar(c.blocks_per_condition),
            "cohort.trials_per_block" => Scalar(c.trials_per_block),
            "cohort.targets_per_block" => Scalar(c.targets_per_block),
            "cohort.master_seed" => Scalar(c.master_seed),
            "cohort.ai_fast.reliability" => Scalar(c.ai_fast.reliability),
            "cohort.ai_fast.latency_min_s" => Scalar(c.ai_fast.latency_min_s),
            "cohort.ai_fast.latency_max_s" => Scalar(c.ai_fast.latency_max_s),
            "cohort.ai_slow.reliability" => Scalar(c.ai_slow.reliability),
            "cohort.ai_slow.latency_min_s" => Scalar(c.ai_slow.latency_min_s),
            "cohort.ai_slow.latency_max_s" => Scalar(c.ai_slow.latency_max_s),
            "cohort.behavior.fla_correct_acc" => Scalar(b.fla_correct_acc),
            "cohort.behavior.fla_deceptive_acc" => Scalar(b.fla_deceptive_acc),
            "cohort.behavior.sa_correct_acc" => Scalar(b.sa_correct_acc),
            "cohort.behavior.sa_deceptive_acc" => Scalar(b.sa_deceptive_acc),
            "cohort.behavior.skill_spread" => Scalar(b.skill_spread),
            "cohort.behavior.miss_rate" => Scalar(b.miss_rate),
            "cohort.behavior.compliance_rt.median_s" => Scalar(b.compliance_rt.median_s),
            "cohort.behavior.compliance_rt.sigma" => Scalar(b.compliance_rt.sigma),
            "cohort.behavior.own_rt_fast.median_s" => Scalar(b.own_rt_fast.median_s),
            "cohort.behavior.own_rt_fast.sigma" => Scalar(b.own_rt_fast.sigma),
            "cohort.behavior.own_rt_slow.median_s" => Scalar(b.own_rt_slow.median_s),
            "cohort.behavior.own_rt_slow.sigma" => Scalar(b.own_rt_slow.sigma),
            "cohort.behavior.conflict_kept_rt.median_s" => Scalar(b.conflict_kept_rt.median_s),
            "cohort.behavior.conflict_kept_rt.sigma" => Scalar(b.conflict_kept_rt.sigma),
            "cohort.behavior.conflict_swayed_rt.median_s" => Scalar(b.conflict_swayed_rt.median_s),
            "cohort.behavior.conflict_swayed_rt.sigma" => Scalar(b.conflict_swayed_rt.sigma),
            "cohort.behavior.conf_gain" => Scalar(b.conf_gain),
            "cohort.behavior.conf_noise" => Scalar(b.conf_noise),
            "cohort.epoch.channels" => Scalar(e.channels),
            "cohort.epoch.sample_rate" => Scalar(e.sample_rate),
            "cohort.epoch.separation" => Scalar(e.separation),
            "cohort.epoch.separation_spread" => Scalar(e.separation_spread),
            "cohort.epoch.trial_jitter" => Scalar(e.trial_jitter),
            "cohort.epoch.participant_jitter" => Scalar(e.participant_jitter),
            "cohort.epoch.direction_jitter" => Scalar(e.direction_jitter),
            "cohort.epoch.fast_signal_max_rt_s" => Scalar(e.fast_signal_max_rt_s),
            "cohort.epoch.fast_residual" => Scalar(e.fast_residual),
            "cohort.epoch.slow_snr" => Scalar(e.slow_snr),
            "cohort.epoch.phase_drift" => Scalar(e.phase_drift),
            "cohort.epoch.drift_strength" => Scalar(e.drift_strength),
            "pipeline.cv_folds" => Scalar(p.cv_folds),
            "pipeline.geometry" => Scalar(p.geometry),
            "pipeline.min_cell_trials" => Scalar(p.min_cell_trials),
            "pipeline.min_per_class" => Scalar(p.min_per_class),
            "pipeline.reg_c" => Scalar(p.reg_c),
            "pipeline.rt_weight" => Scalar(p.rt_weight),
            "pipeline.channel_mask" => List(p.channel_mask),
            "simulate.sizes" => List(s.sizes),
            "simulate.methods" => List(s.methods),
            "simulate.subsets" => List(s.subsets),
            "report.svg" => Scalar(self.report.svg),
        ]
    }

    /// Every key known to the parser.
    pub fn keys() -> Vec<&'static str> {
        RunConfig::default().slots().into_iter().map(|(k, _)| k).collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut slots = self.slots();
        let (_, slot) = slots
            .iter_mut()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        slot.set(value.trim()).map_err(|reason| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason,
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries().into_iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    /// `(key, rendered value)` for every key, in declaration order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut copy = self.clone();
        copy.slots().into_iter().map(|(k, v)| (k, v.render())).collect()
    }

    /// Applies a config file's contents on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, v) in parse_lines(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// The resolved configuration in file syntax.
    pub fn render(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hex SHA-256 over the keys starting with any of `prefixes`; the
    /// workdir never contributes.
    pub fn hash_of(&self, prefixes: &[&str]) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if k != "paths.workdir" && prefixes.iter().any(|p| k.starts_with(p)) {
                h.update(k.as_bytes());
                h.update(b"=");
                h.update(v.as_bytes());
                h.update(b"\n");
            }
        }
        hex::encode(h.finalize())
    }

    pub fn config_hash(&self) -> String {
        self.hash_of(&[""])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.cohort.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let p = &self.pipeline;
        if p.cv_folds < 2 {
            return Err(ConfigError::Invalid("pipeline.cv_folds must be at least 2".into()));
        }
        if p.min_cell_trials == 0 || p.min_per_class == 0 {
            return Err(ConfigError::Invalid("pipeline cell minimums must be positive".into()));
        }
        if !(p.reg_c > 0.0 && p.reg_c.is_finite()) {
            return Err(ConfigError::Invalid("pipeline.reg_c must be positive".into()));
        }
        let s = &self.simulate;
        if s.sizes.is_empty() || s.methods.is_empty() || s.subsets.is_empty() {
            return Err(ConfigError::Invalid("simulate lists must be non-empty".into()));
        }
        let n = self.cohort.n_participants;
        if let Some(bad) = s.sizes.iter().find(|&&m| m == 0 || m > n) {
            return Err(ConfigError::Invalid(format!(
                "team size {bad} is outside 1..={n}"
            )));
        }
        if self.dataset_dir.is_empty() {
            return Err(ConfigError::Invalid("paths.dataset is empty".into()));
        }
        Ok(())
    }
}

/// Splits config text into `(key, value)` pairs.
pub fn parse_lines(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let k = k.trim();
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Pulls `--dotted.key value` and `--dotted.key=value` overrides out of an
/// argument list, returning them and the remaining arguments.
pub fn extract_overrides<I: IntoIterator<Item = String>>(
    args: I,
) -> Result<(Vec<(String, String)>, Vec<String>), ConfigError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--").filter(|b| b.split('=').next().is_some_and(|k| k.contains('.'))) else {
            rest.push(a);
            continue;
        };
        match body.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| ConfigError::BadValue {
                    key: body.to_string(),
                    value: String::new(),
                    reason: "missing value".into(),
                })?;
                overrides.push((body.to_string(), v));
            }
        }
    }
    Ok((overrides, rest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_then_parse_is_identity() {
        let mut c = RunConfig::default();
        c.set("cohort.epoch.separation", "0.65").unwrap();
        c.set("simulate.sizes", "2, 8").unwrap();
        c.set("pipeline.geometry", "global").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.render()).unwrap();
        assert_eq!(c, d);
        assert_eq!(d.simulate.sizes, vec![2, 8]);
        assert_eq!(c.config_hash(), d.config_hash());
    }

    #[test]
    fn errors_name_the_problem() {
        let mut c = RunConfig::default();
        assert_eq!(c.set("cohort.nope", "1"), Err(ConfigError::UnknownKey("cohort.nope".into())));
        assert!(matches!(
            c.set("simulate.methods", "MajorityHuman,Telepathy"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(parse_lines("a = 1\nnot a pair\n"), Err(ConfigError::Syntax { line: 2, .. })));
        c.set("simulate.sizes", "2,30").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let kv = parse_lines("# top\n\ncohort.master_seed = 7 # trailing\n").unwrap();
        assert_eq!(kv, vec![("cohort.master_seed".to_string(), "7".to_string())]);
    }

    #[test]
    fn workdir_does_not_change_hash() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.workdir = PathBuf::from("/elsewhere");
        assert_eq!(a.config_hash(), b.config_hash());
        b.cohort.master_seed += 1;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.hash_of(&["simulate."]), b.hash_of(&["simulate."]));
    }

    #[test]
    fn override_extraction() {
        let args = ["run-all", "--cohort.master_seed=9", "--force", "--simulate.sizes", "2,4", "--workdir", "w"]
            .map(String::from);
        let (o, rest) = extract_overrides(args).unwrap();
        assert_eq!(
            o,
            vec![
                ("cohort.master_seed".to_string(), "9".to_string()),
                ("simulate.sizes".to_string(), "2,4".to_string())
            ]
        );
        assert_eq!(rest, ["run-all", "--force", "--workdir", "w"]);
    }
}
