//! JSON tracker configuration. Every field has a default, unknown keys are
//! rejected and numeric ranges are checked at load time.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tracker::TrackerConfig;

pub fn parse_config(text: &str) -> Result<TrackerConfig> {
    let config: TrackerConfig = serde_json::from_str(text)?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<TrackerConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: TrackerConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}
