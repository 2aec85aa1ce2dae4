use std::path::{Path, PathBuf};

use aqp_core::nnet::LabelNormKind;
use serde::Deserialize;

/// Optional settings file (`--config`). Command-line flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub metrics: MetricsSettings,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    pub lstm_units: Option<usize>,
    pub dense_units: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub label_norm: Option<LabelNormKind>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSettings {
    pub warmup: Option<usize>,
    pub reps: Option<usize>,
    pub workers: Option<usize>,
    pub batch_sizes: Option<Vec<usize>>,
}

impl PipelineConfig {
    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data, &mut cfg.schema, &mut cfg.template, &mut cfg.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(
            &path,
            r#"{"data": "d.csv", "schema": "/abs/s.json", "seed": 9, "model": {"lstm_units": 16, "label_norm": "min_max"}}"#,
        )
        .unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.data.unwrap(), dir.path().join("d.csv"));
        assert_eq!(cfg.schema.unwrap(), PathBuf::from("/abs/s.json"));
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.model.lstm_units, Some(16));
        assert_eq!(cfg.model.label_norm, Some(LabelNormKind::MinMax));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"sede": 1}"#).unwrap();
        assert!(PipelineConfig::load(&path).is_err());
    }
}
