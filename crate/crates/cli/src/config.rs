use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spectrasep::clinical::{default_dictionary, load_dictionary, ParameterDictionary};
use spectrasep::eval::{ForestPipeline, DEFAULT_BOOTSTRAPS, REPETITIONS};
use spectrasep::forest::ForestParams;
use spectrasep::index::{default_index_config, load_index_config, FeatureConfig, RoiStatistic};
use spectrasep::scores::{default_vis_weights, load_vis_weights, MissingPolicy, VisWeights};
use spectrasep::{Error, Result};

/// Settings read from `--config`. Every field is optional; relative paths
/// are resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub forest: ForestParams,
    pub repetitions: usize,
    pub n_bootstrap: usize,
    pub indices: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub vis_weights: Option<PathBuf>,
    pub include_spectrum: bool,
    pub statistic: RoiStatistic,
    pub missing_policy: MissingPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            forest: ForestParams::default(),
            repetitions: REPETITIONS,
            n_bootstrap: DEFAULT_BOOTSTRAPS,
            indices: None,
            dictionary: None,
            vis_weights: None,
            include_spectrum: false,
            statistic: RoiStatistic::Median,
            missing_policy: MissingPolicy::SkipRule,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.indices, &mut cfg.dictionary, &mut cfg.vis_weights]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.forest.n_trees == 0 {
            return Err(Error::Config("forest.n_trees must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()));
        }
        if self.n_bootstrap == 0 {
            return Err(Error::Config("n_bootstrap must be positive".into()));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> ForestPipeline {
        ForestPipeline {
            forest: self.forest.clone(),
            repetitions: self.repetitions,
            n_bootstrap: self.n_bootstrap,
        }
    }

    pub fn feature_config(&self) -> Result<FeatureConfig> {
        Ok(FeatureConfig {
            indices: match &self.indices {
                Some(p) => load_index_config(p)?,
                None => default_index_config(),
            },
            include_spectrum: self.include_spectrum,
            statistic: self.statistic,
        })
    }

    pub fn dictionary(&self) -> Result<ParameterDictionary> {
        match &self.dictionary {
            Some(p) => load_dictionary(p),
            None => Ok(default_dictionary()),
        }
    }

    pub fn vis_weights(&self) -> Result<VisWeights> {
        match &self.vis_weights {
            Some(p) => load_vis_weights(p),
            None => Ok(default_vis_weights()),
        }
    }

    /// Files the run depends on besides its direct inputs.
    pub fn referenced_files(&self) -> Vec<&Path> {
        [&self.indices, &self.dictionary, &self.vis_weights]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path)
            .collect()
    }
}
