use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skelrig::curation::{CurationRules, DEFAULT_TEST_FRACTION};
use skelrig::metrics::DEFAULT_TAU_MATCH;
use skelrig::DEFAULT_RESOLUTION;
use skelrig_armodel::{GenerateConfig, ModelConfig, Sampling, ShapeEncoderConfig, TrainConfig};

use crate::error::{CliError, Result};

/// Toy model, optimizer, shape encoder and generation settings in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Defaults to the model width when absent.
    pub encoder: Option<ShapeEncoderConfig>,
    pub max_gen_len: usize,
    pub sampling: Sampling,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            encoder: None,
            max_gen_len: 1024,
            sampling: Sampling::Greedy,
        }
    }
}

impl ToyConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = skelrig::json::read(path)?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn encoder_config(&self) -> ShapeEncoderConfig {
        self.encoder.unwrap_or(ShapeEncoderConfig {
            width: self.model.width,
            ..Default::default()
        })
    }

    pub fn generate_config(&self) -> GenerateConfig {
        GenerateConfig {
            sampling: self.sampling,
            max_len: self.max_gen_len,
        }
    }
}

/// Settings for a full curate → eval run. Relative paths resolve against the workdir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub resolution: u32,
    pub tau_match: f64,
    /// Serialized density binner; default levels are used when absent.
    pub density_params: Option<PathBuf>,
    /// A [`ToyConfig`] file; defaults are used when absent.
    pub model_config: Option<PathBuf>,
    pub seed: u64,
    pub test_fraction: f64,
    pub curation: CurationRules,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus"),
            out: PathBuf::from("run"),
            resolution: DEFAULT_RESOLUTION,
            tau_match: DEFAULT_TAU_MATCH,
            density_params: None,
            model_config: None,
            seed: 0,
            test_fraction: DEFAULT_TEST_FRACTION,
            curation: CurationRules::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(skelrig::json::read(path)?)
    }

    /// Resolves every path against `workdir` and checks each input exists.
    pub fn resolve(&self, workdir: &Path) -> Result<PipelineConfig> {
        let mut r = self.clone();
        r.corpus = workdir.join(&self.corpus);
        r.out = workdir.join(&self.out);
        r.density_params = self.density_params.as_ref().map(|p| workdir.join(p));
        r.model_config = self.model_config.as_ref().map(|p| workdir.join(p));
        let inputs = [Some(&r.corpus), r.density_params.as_ref(), r.model_config.as_ref()];
        if let Some(missing) = inputs.into_iter().flatten().find(|p| !p.exists()) {
            return Err(CliError::MissingPath(missing.clone()));
        }
        if !(r.resolution >= 2 && r.tau_match > 0.0 && (0.0..1.0).contains(&r.test_fraction)) {
            return Err(CliError::Config(format!(
                "resolution {} must be at least 2, tau_match {} positive, test_fraction {} in [0, 1)",
                r.resolution, r.tau_match, r.test_fraction
            )));
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_files_fill_defaults() {
        let t: ToyConfig = serde_json::from_str(r#"{"model": {"width": 32, "heads": 2}, "max_gen_len": 50}"#).unwrap();
        assert_eq!(t.model.width, 32);
        assert_eq!(t.model.layers, ModelConfig::default().layers);
        assert_eq!(t.encoder_config().width, 32);
        assert_eq!(t.generate_config().max_len, 50);
        let p: PipelineConfig = serde_json::from_str(r#"{"corpus": "c", "seed": 3}"#).unwrap();
        assert_eq!((p.seed, p.resolution), (3, 256));
    }

    #[test]
    fn missing_inputs_abort() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            model_config: Some("nope.json".into()),
            ..Default::default()
        };
        std::fs::create_dir(dir.path().join("corpus")).unwrap();
        match cfg.resolve(dir.path()) {
            Err(CliError::MissingPath(p)) => assert!(p.ends_with("nope.json")),
            other => panic!("{other:?}"),
        }
        let ok = PipelineConfig::default().resolve(dir.path()).unwrap();
        assert_eq!(ok.out, dir.path().join("run"));
    }
}
