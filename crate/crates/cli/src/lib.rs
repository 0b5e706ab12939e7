//! Pipeline orchestration: configuration, the collect / train /
//! counterfactual / report stages, and report emission.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod svg;

use std::path::{Path, PathBuf};

use thiserror::Error;

use oboe_agents::AgentError;
use oboe_core::datasets::DatasetError;
use oboe_core::GameKind;
use oboe_models::ModelError;

pub use config::RunConfig;
pub use pipeline::{run_stage, Stage};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {path}: {what}")]
    Missing { path: PathBuf, what: String },
    #[error("{stage}: {source}")]
    Dataset {
        stage: &'static str,
        #[source]
        source: DatasetError,
    },
    #[error("{stage}: {source}")]
    Model {
        stage: &'static str,
        #[source]
        source: ModelError,
    },
    #[error("{stage}: {source}")]
    Agent {
        stage: &'static str,
        #[source]
        source: AgentError,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Process exit status: 1 configuration, 2 missing upstream artifact,
    /// 3 anything that failed while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Missing { .. } => 2,
            _ => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

/// Where each artifact of a run lives.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn observational(&self, game: GameKind) -> PathBuf {
        self.root.join("observational").join(game.name())
    }

    pub fn counterfactual(&self, game: GameKind) -> PathBuf {
        self.root.join("counterfactual").join(game.name())
    }

    pub fn models(&self, game: GameKind) -> PathBuf {
        self.root.join("models").join(game.name())
    }

    pub fn checkpoint(&self, game: GameKind, arch: oboe_models::Architecture) -> PathBuf {
        self.models(game).join(format!("{}.json.gz", arch.name()))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    /// Wall-clock timings; the only file whose contents vary between
    /// identical runs.
    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.json")
    }
}
