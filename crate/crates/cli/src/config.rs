//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//! beam_size = 5
//! convention = "both"
//!
//! [paths]
//! corpus = "train.jsonl"
//! val = "dev.jsonl"
//!
//! [train]
//! epochs = 50
//! learning_rate = 0.001
//!
//! [train.model]
//! boundary = "both"
//! aggregation = "average"
//! ```
//!
//! Every key is optional except `schema_version`; unknown keys are errors.
//! Command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rstsplit::eval::Convention;
use rstsplit::model::hash_json;
use rstsplit::TrainConfig;

use crate::exit::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub relation_map: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub beam_size: usize,
    pub convention: Convention,
    pub jobs: Option<usize>,
    pub paths: Paths,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: Some(SCHEMA_VERSION),
            beam_size: 5,
            convention: Convention::Both,
            jobs: None,
            paths: Paths::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        match config.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(CliError::config(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
            None => return Err(CliError::config("missing schema_version")),
        }
        Ok(config)
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).at(path))?;
        let config = Self::parse(&text).map_err(|e| e.at(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(config.resolve_paths(base))
    }

    /// Makes relative paths in the file relative to the file's directory.
    fn resolve_paths(mut self, base: &Path) -> Self {
        let p = &mut self.paths;
        for slot in [&mut p.corpus, &mut p.val, &mut p.embeddings, &mut p.relation_map, &mut p.out] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        self
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.beam_size == 0 {
            return Err(CliError::config("beam_size must be at least 1"));
        }
        if self.jobs == Some(0) {
            return Err(CliError::config("jobs must be at least 1"));
        }
        self.train.validate().map_err(CliError::from)
    }

    /// SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        hash_json(&serde_json::to_string(self).expect("config serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rstsplit::{Aggregation, BoundaryMode};

    #[test]
    fn minimal_file_uses_defaults() {
        let c = RunConfig::parse("schema_version = 1\n").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn nested_sections() {
        let c = RunConfig::parse(
            "schema_version = 1\nbeam_size = 3\n[train]\nepochs = 7\n[train.model]\nboundary = \"left\"\naggregation = \"gru-attentive\"\n",
        )
        .unwrap();
        assert_eq!(c.beam_size, 3);
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.model.boundary, BoundaryMode::Left);
        assert_eq!(c.train.model.aggregation, Aggregation::GruAttentive);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        for bad in [
            "schema_version = 1\nbeam = 3\n",
            "schema_version = 1\n[train]\nepoch = 3\n",
            "schema_version = 1\n[train.model]\nwidth = 3\n",
            "schema_version = 2\n",
            "beam_size = 2\n",
        ] {
            let err = RunConfig::parse(bad).unwrap_err();
            assert_eq!(err.code, crate::exit::CONFIG, "{bad}");
        }
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "schema_version = 1\n[paths]\ncorpus = \"c.jsonl\"\nout = \"/abs/m.ckpt\"\n").unwrap();
        let c = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(c.paths.corpus.unwrap(), dir.path().join("c.jsonl"));
        assert_eq!(c.paths.out.unwrap(), PathBuf::from("/abs/m.ckpt"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.train.seed += 1;
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
    }
}
