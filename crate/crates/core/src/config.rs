//! Run configuration: one plain-text file with a `[section]` per
//! subsystem and `key = value` lines inside (TOML syntax). Every key is
//! optional — omitted keys take the defaults baked into each section's
//! type — while unknown keys are rejected so typos surface immediately.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::generator::GenConfig;
use crate::pipeline::ModelConfig;
use crate::train::TrainConfig;

/// Orchestration knobs that belong to no subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Worker threads for scene generation (scenes are independently
    /// seeded, so any count produces identical output).
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { workers: 1 }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("run: workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything a run can configure, one field per file section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub gen: GenConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub run: RunConfig,
}

impl FileConfig {
    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.train.validate()?;
        self.eval.tracker.validate()?;
        self.run.validate()?;
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<FileConfig> {
    let cfg: FileConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Serializes a configuration back to file syntax, every key spelled
/// out — written next to run outputs for provenance.
pub fn render_config(cfg: &FileConfig) -> String {
    toml::to_string_pretty(cfg).expect("configs always serialize")
}

/// The complete default configuration as a file.
pub fn default_config_text() -> String {
    render_config(&FileConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::EvalMode;
    use crate::generator::{MaskNoise, TemplateFamily};
    use crate::track::ScoreMode;

    #[test]
    fn empty_text_yields_the_defaults() {
        assert_eq!(parse_config("").unwrap(), FileConfig::default());
    }

    #[test]
    fn rendered_defaults_parse_back_to_themselves() {
        let text = default_config_text();
        assert_eq!(parse_config(&text).unwrap(), FileConfig::default());
        // every section is spelled out for provenance
        for section in ["[gen]", "[model]", "[train]", "[eval]", "[run]"] {
            assert!(text.contains(section), "missing {section} in:\n{text}");
        }
    }

    #[test]
    fn partial_sections_override_only_their_keys() {
        let cfg = parse_config(
            r#"
            [gen]
            scenes = 7
            mask_noise = "erode_dilate"
            families = ["attribute", "motion"]

            [train]
            epochs = 3

            [eval]
            mode = "per_frame"

            [eval.tracker]
            score_mode = "max"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.gen.scenes, 7);
        assert_eq!(cfg.gen.mask_noise, MaskNoise::ErodeDilate);
        assert_eq!(
            cfg.gen.families,
            vec![TemplateFamily::Attribute, TemplateFamily::Motion]
        );
        assert_eq!(cfg.gen.width, GenConfig::default().width);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.eval.mode, EvalMode::PerFrame);
        assert_eq!(cfg.eval.tracker.score_mode, ScoreMode::Max);
        assert_eq!(cfg.model, ModelConfig::default());
    }

    #[test]
    fn unknown_sections_are_rejected() {
        let err = parse_config("[generator]\nscenes = 5\n").unwrap_err();
        assert!(err.to_string().contains("generator"), "{err}");
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(parse_config("[gen]\nscenes = 0\n").is_err());
        assert!(parse_config("[train]\nflip_prob = 1.5\n").is_err());
        assert!(parse_config("[run]\nworkers = 0\n").is_err());
        assert!(parse_config("[eval.tracker]\ngamma = -1.0\n").is_err());
    }

    #[test]
    fn type_errors_name_the_offending_key() {
        let err = parse_config("[gen]\nscenes = \"many\"\n").unwrap_err();
        assert!(err.to_string().contains("scenes"), "{err}");
    }
}
