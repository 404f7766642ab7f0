use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::toy::{SyntheticDataSpec, TrainConfig};

/// JSON run document. Field names match the config structs; unknown keys
/// are rejected at every level.
///
/// ```json
/// { "data": { "num_classes": 10 },
///   "train": { "steps": 5000, "kmeans": { "k": 20 }, "hallucination": { "lambda": 0.8 } } }
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigDocument {
    pub data: SyntheticDataSpec,
    pub train: TrainConfig,
}

impl RunConfigDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RunConfigDocument = serde_json::from_str(text)?;
        doc.data.validate()?;
        doc.train.validate()?;
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn read_config(path: impl AsRef<Path>) -> Result<RunConfigDocument> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfigDocument::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let doc = RunConfigDocument::default();
        assert_eq!(RunConfigDocument::from_json(&doc.to_json()).unwrap(), doc);
        assert_eq!(RunConfigDocument::from_json("{}").unwrap(), doc);
    }

    #[test]
    fn unknown_keys_rejected_at_depth() {
        for text in [
            r#"{"bogus": 1}"#,
            r#"{"train": {"bogus": 1}}"#,
            r#"{"train": {"kmeans": {"bogus": 1}}}"#,
            r#"{"train": {"hallucination": {"bogus": 1}}}"#,
            r#"{"data": {"bogus": 1}}"#,
        ] {
            assert!(matches!(RunConfigDocument::from_json(text), Err(Error::ConfigParse(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_rejected() {
        let r = RunConfigDocument::from_json(r#"{"train": {"momentum_m": 1.5}}"#);
        assert!(matches!(r, Err(Error::ConfigInvalid(_))));
    }
}
