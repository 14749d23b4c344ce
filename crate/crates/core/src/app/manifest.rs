//! Run manifest: which stages ran under which inputs, and the digest of
//! every file they wrote.
//!
//! Text format, one record per line:
//! `tool_version <v>`, `config_hash <hex>`, `stage <name> <key>` and
//! `file <stage> <relative path> <sha256>`. File records follow their stage.

use std::fs;
use std::io::{self, Read};
use std::path::Path;

use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    pub name: String,
    /// Hash of the stage's configuration and input digests.
    pub key: String,
    /// `(path relative to the workdir, sha256)` in write order.
    pub outputs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
}

pub fn file_digest(path: &Path) -> io::Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Key of a stage run: its name, the tool version, a config hash and the
/// digests of its inputs.
pub fn stage_key(name: &str, config_hash: &str, inputs: &[(String, String)]) -> String {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update(b"\n");
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update(b"\n");
    h.update(config_hash.as_bytes());
    for (p, d) in inputs {
        h.update(b"\n");
        h.update(p.as_bytes());
        h.update(b" ");
        h.update(d.as_bytes());
    }
    hex::encode(h.finalize())
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut m = Manifest::default();
        for (i, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || format!("manifest line {}: {line:?}", i + 1);
            match f.as_slice() {
                [] => {}
                ["tool_version", v] => m.tool_version = v.to_string(),
                ["config_hash", v] => m.config_hash = v.to_string(),
                ["stage", name, key] => m.stages.push(StageRecord {
                    name: name.to_string(),
                    key: key.to_string(),
                    outputs: Vec::new(),
                }),
                ["file", stage, path, digest] => {
                    let s = m.stages.last_mut().filter(|s| s.name == *stage).ok_or_else(bad)?;
                    s.outputs.push((path.to_string(), digest.to_string()));
                }
                _ => return Err(bad()),
            }
        }
        Ok(m)
    }

    pub fn render(&self) -> String {
        let mut s = format!("tool_version {}\nconfig_hash {}\n", self.tool_version, self.config_hash);
        for st in &self.stages {
            s.push_str(&format!("stage {} {}\n", st.name, st.key));
            for (p, d) in &st.outputs {
                s.push_str(&format!("file {} {} {}\n", st.name, p, d));
            }
        }
        s
    }

    /// Reads `<workdir>/manifest.txt`; a missing file is an empty manifest.
    pub fn load(workdir: &Path) -> io::Result<Self> {
        match fs::read_to_string(workdir.join(MANIFEST_FILE)) {
            Ok(t) => Manifest::parse(&t).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, workdir: &Path) -> io::Result<()> {
        fs::write(workdir.join(MANIFEST_FILE), self.render())
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Replaces or appends a stage record, keeping `order` for placement.
    pub fn upsert(&mut self, rec: StageRecord, order: &[&str]) {
        self.stages.retain(|s| s.name != rec.name);
        self.stages.push(rec);
        let rank = |n: &str| order.iter().position(|o| *o == n).unwrap_or(usize::MAX);
        self.stages.sort_by_key(|s| rank(&s.name));
    }

    /// True when the stage ran with `key` and all its outputs are on disk
    /// with the recorded digests.
    pub fn is_current(&self, workdir: &Path, name: &str, key: &str) -> bool {
        let Some(rec) = self.stage(name) else {
            return false;
        };
        rec.key == key
            && rec
                .outputs
                .iter()
                .all(|(p, d)| file_digest(&workdir.join(p)).is_ok_and(|x| &x == d))
    }

    pub fn digest_of(&self, rel: &str) -> Option<&str> {
        self.stages
            .iter()
            .flat_map(|s| &s.outputs)
            .find(|(p, _)| p == rel)
            .map(|(_, d)| d.as_str())
    }
}
