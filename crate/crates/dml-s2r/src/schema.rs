//! Dataset schema descriptors.
//!
//! A schema is a small TOML file naming the target column and the feature
//! columns of a CSV file, plus the parsing quirks needed to read it:
//!
//! ```toml
//! name = "boston"
//! file = "boston_house_prices.csv"
//! target = "MEDV"
//! skip_rows = 1
//! expected_features = 13
//! unlabeled = 200
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

fn default_delimiter() -> char {
    ','
}

fn default_unlabeled() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub name: String,
    /// Default CSV file name, resolved against the data directory.
    #[serde(default)]
    pub file: Option<String>,
    pub target: String,
    /// Explicit feature columns, in order. Empty means every named column
    /// except the target and the `drop` list.
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default)]
    pub drop: Vec<String>,
    /// Missing-value marker; rows containing it are removed.
    #[serde(default)]
    pub sentinel: Option<f64>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Cells use ',' as the decimal separator.
    #[serde(default)]
    pub decimal_comma: bool,
    /// Lines before the header row.
    #[serde(default)]
    pub skip_rows: usize,
    #[serde(default)]
    pub expected_features: Option<usize>,
    /// Size of the unlabeled set in benchmark runs.
    #[serde(default = "default_unlabeled")]
    pub unlabeled: usize,
}

impl Schema {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let s: Schema = toml::from_str(text).map_err(|e| AppError::parse(origin, e))?;
        if !s.delimiter.is_ascii() {
            return Err(AppError::parse(origin, "delimiter must be a single ASCII character"));
        }
        if s.decimal_comma && s.delimiter == ',' {
            return Err(AppError::parse(origin, "decimal_comma requires a delimiter other than ','"));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    /// The CSV location for this schema under `data_dir`.
    pub fn data_file(&self, data_dir: &Path) -> Result<PathBuf> {
        match &self.file {
            Some(f) => Ok(data_dir.join(f)),
            None => Err(AppError::Usage(format!("schema '{}' names no data file", self.name))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_schema_gets_defaults() {
        let s = Schema::from_toml_str("name = \"t\"\ntarget = \"y\"\n", Path::new("t.toml")).unwrap();
        assert_eq!(s.delimiter, ',');
        assert_eq!(s.unlabeled, 1000);
        assert!(s.features.is_empty());
        assert_eq!(s.sentinel, None);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = Schema::from_toml_str("name = \"t\"\ntarget = \"y\"\ntraget = 1\n", Path::new("t.toml"));
        assert!(e.is_err());
    }

    #[test]
    fn decimal_comma_needs_other_delimiter() {
        let e = Schema::from_toml_str("name = \"t\"\ntarget = \"y\"\ndecimal_comma = true\n", Path::new("t.toml"));
        assert!(e.is_err());
    }
}
