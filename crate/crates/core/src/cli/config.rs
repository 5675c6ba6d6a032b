//! Flat `key = value` run configuration shared by `train` and `evaluate`.

use std::fs;
use std::path::Path;

use crate::dataset::LoadOptions;
use crate::error::{Error, Result};
use crate::pipeline::{parse_kv_lines, PipelineConfig};

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub load: LoadOptions,
}

impl RunConfig {
    /// Applies one setting. Loader keys are `missing_tokens` (comma
    /// separated) and `column.<field> = <csv header>`; everything else goes
    /// to the pipeline config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "missing_tokens" {
            self.load.missing_tokens = value.split(',').map(|t| t.trim().to_string()).collect();
            return Ok(());
        }
        if let Some(field) = key.strip_prefix("column.") {
            return self.load.columns.set(field, value.trim());
        }
        self.pipeline.set(key, value)?;
        self.load.targets = self.pipeline.targets;
        Ok(())
    }

    /// Reads an optional config file, then applies `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (k, v) in parse_kv_lines(&text)? {
                config.set(&k, &v)?;
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{o}`")))?;
            config.set(k.trim(), v.trim())?;
        }
        config.pipeline.validate()?;
        Ok(config)
    }
}
