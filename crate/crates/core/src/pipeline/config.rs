use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crop::Perspective;
use crate::error::{Error, Result};
use crate::eval::PreprocessSpec;
use crate::person_filter::PersonFilterConfig;
use crate::posture::PostureConfig;
use crate::split::{SplitLabel, SplitRatios};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: SplitRatios::default(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Exported ONNX model. The eval stage is skipped when absent.
    pub model: Option<PathBuf>,
    pub split: SplitLabel,
    pub perspective: Perspective,
    pub preprocess: PreprocessSpec,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            model: None,
            split: SplitLabel::Test,
            perspective: Perspective::FullBody,
            preprocess: PreprocessSpec::default(),
        }
    }
}

/// Whole-pipeline configuration, loadable from a single JSON file.
///
/// Relative paths in a config file are resolved against the file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    /// Base directory for relative `image_path`s; defaults to the
    /// manifest's directory.
    pub image_root: Option<PathBuf>,
    pub person_filter: PersonFilterConfig,
    pub posture: PostureConfig,
    pub split: SplitConfig,
    pub perspectives: Vec<Perspective>,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.jsonl"),
            output_dir: PathBuf::from("out"),
            image_root: None,
            person_filter: PersonFilterConfig::default(),
            posture: PostureConfig::default(),
            split: SplitConfig::default(),
            perspectives: Perspective::ALL.to_vec(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest);
        fix(&mut self.output_dir);
        if let Some(p) = self.image_root.as_mut() {
            fix(p);
        }
        if let Some(p) = self.eval.model.as_mut() {
            fix(p);
        }
    }

    pub fn image_root(&self) -> PathBuf {
        self.image_root.clone().unwrap_or_else(|| {
            self.manifest
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default()
        })
    }

    /// Value checks that need no filesystem access.
    pub fn validate(&self) -> Result<()> {
        self.split.ratios.validate()?;
        self.person_filter.validate()?;
        self.posture.validate()?;
        self.eval.preprocess.validate()?;
        if self.perspectives.is_empty() {
            return Err(Error::InvalidConfig("no perspectives requested".into()));
        }
        let mut seen = self.perspectives.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.perspectives.len() {
            return Err(Error::InvalidConfig("duplicate perspective".into()));
        }
        if self.eval.model.is_some() && !self.perspectives.contains(&self.eval.perspective) {
            return Err(Error::InvalidConfig(format!(
                "eval perspective {} is not among the generated perspectives",
                self.eval.perspective
            )));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus existence of referenced inputs.
    pub fn validate_for_run(&self) -> Result<()> {
        self.validate()?;
        if !self.manifest.is_file() {
            return Err(Error::InvalidConfig(format!(
                "manifest {} does not exist",
                self.manifest.display()
            )));
        }
        if let Some(m) = &self.eval.model {
            if !m.is_file() {
                return Err(Error::InvalidConfig(format!("model {} does not exist", m.display())));
            }
        }
        Ok(())
    }
}
