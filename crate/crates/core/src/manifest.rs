//! What one `run` invocation reads and where it writes.
//!
//! ```toml
//! config = "config.toml"
//! rules = "rules.xml"
//! output = "out"
//! store = "store"          # optional persistent store directory
//!
//! [[patient]]
//! id = "p-001"
//! ecg = "p-001/ecg.csv"
//! respiration = "p-001/resp.csv"
//! measurements = "p-001/measurements.csv"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientFiles {
    pub id: String,
    pub ecg: Option<PathBuf>,
    pub respiration: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub store: Option<PathBuf>,
    #[serde(default, rename = "patient")]
    pub patients: Vec<PatientFiles>,
}

impl RunManifest {
    /// Reads a manifest file; relative paths are taken from its directory.
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        let mut m: RunManifest = toml::from_str(&text)
            .map_err(|e| Error::Semantic(format!("manifest: {}", e.message())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        fix(&mut m.config);
        fix(&mut m.rules);
        fix(&mut m.output);
        fix(&mut m.store);
        for p in &mut m.patients {
            fix(&mut p.ecg);
            fix(&mut p.respiration);
            fix(&mut p.measurements);
        }
        Ok(m)
    }

    /// Problems that make the run impossible before any work starts: no
    /// patients, empty or repeated ids, no rules or output, unreadable inputs.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.patients.is_empty() {
            out.push("no patients to run".to_string());
        }
        if self.rules.is_none() {
            out.push("no rule file given".to_string());
        }
        if self.output.is_none() {
            out.push("no output directory given".to_string());
        }
        let mut ids: Vec<&str> = self.patients.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        if ids.iter().any(|i| i.is_empty()) {
            out.push("empty patient id".to_string());
        }
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            out.push(format!("patient `{}` listed twice", w[0]));
        }
        let files = self.config.iter().chain(&self.rules).chain(
            self.patients
                .iter()
                .flat_map(|p| p.ecg.iter().chain(&p.respiration).chain(&p.measurements)),
        );
        for f in files {
            if std::fs::File::open(f).is_err() || !f.is_file() {
                out.push(format!("cannot read `{}`", f.display()));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_and_problems() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("r.xml"), "<rules/>").unwrap();
        let path = dir.path().join("m.toml");
        std::fs::write(
            &path,
            "rules = \"r.xml\"\noutput = \"out\"\n[[patient]]\nid = \"a\"\necg = \"missing.csv\"\n",
        )
        .unwrap();
        let m = RunManifest::load(&path).unwrap();
        assert_eq!(m.rules.as_deref(), Some(dir.path().join("r.xml").as_path()));
        let problems = m.problems();
        assert_eq!(problems.len(), 1, "{problems:?}");
        assert!(problems[0].contains("missing.csv"));
        assert!(!RunManifest::default().problems().is_empty());
    }
}
