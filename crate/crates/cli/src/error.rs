use std::fmt;
use std::path::PathBuf;

use skelrig::curation::{CurationError, SplitError};
use skelrig::density::DensityError;
use skelrig::groups::{GroupError, LabelError, TaxonomyError};
use skelrig::json::JsonFileError;
use skelrig::mesh::MeshError;
use skelrig::metrics::MetricsError;
use skelrig::normalize::NormalizeError;
use skelrig::skeleton::SkeletonError;
use skelrig::synth::SynthError;
use skelrig::tokenizer::{DecodeError, EncodeError, TokenFileError};
use skelrig::Category;
use skelrig_armodel::ModelError;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Curate,
    Split,
    Tokenize,
    Train,
    Generate,
    Detokenize,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Curate,
        Stage::Split,
        Stage::Tokenize,
        Stage::Train,
        Stage::Generate,
        Stage::Detokenize,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Curate => "curate",
            Stage::Split => "split",
            Stage::Tokenize => "tokenize",
            Stage::Train => "train",
            Stage::Generate => "generate",
            Stage::Detokenize => "detokenize",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("path does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("MissingLabel: {category} rig {id} has no labels file")]
    MissingLabel { id: String, category: Category },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {cause}")]
    Stage { stage: Stage, cause: Box<CliError> },
    #[error(transparent)]
    Json(#[from] JsonFileError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    TokenFile(#[from] TokenFileError),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// The failing stage and the underlying error, if this came from the pipeline.
    pub fn stage(&self) -> Option<(Stage, &CliError)> {
        match self {
            CliError::Stage { stage, cause } => Some((*stage, cause)),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
