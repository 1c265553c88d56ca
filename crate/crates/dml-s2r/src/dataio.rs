//! CSV loading and the prepared-dataset file.

use std::path::Path;

use dml_s2r_core::data::{apply_minmax, clean_sentinels, fit_minmax};
use dml_s2r_core::{Dataset, Matrix, NormParams};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::formats;
use crate::schema::Schema;

pub const PREPARED_FORMAT_VERSION: u32 = 1;

fn parse_cell(raw: &str, decimal_comma: bool) -> Option<f64> {
    let v = if decimal_comma {
        raw.replace(',', ".").parse::<f64>()
    } else {
        raw.parse::<f64>()
    };
    v.ok().filter(|x| x.is_finite())
}

/// Reads the columns named by `schema` as real numbers. Lines before the
/// header are skipped, unnamed trailing columns and blank rows are ignored.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    load_csv_bytes(&bytes, path, schema)
}

pub fn load_csv_bytes(bytes: &[u8], origin: &Path, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut records = rdr.records();
    for _ in 0..schema.skip_rows {
        if records.next().transpose().map_err(|e| AppError::parse(origin, e))?.is_none() {
            return Err(dml_s2r_core::Error::NoRows.into());
        }
    }
    let header = match records.next().transpose().map_err(|e| AppError::parse(origin, e))? {
        Some(h) => h,
        None => return Err(dml_s2r_core::Error::NoRows.into()),
    };
    let names: Vec<&str> = header.iter().collect();
    let find = |col: &str| {
        names
            .iter()
            .position(|n| *n == col)
            .ok_or_else(|| AppError::parse(origin, format!("column '{col}' not in header")))
    };
    let target_col = find(&schema.target)?;
    let feature_cols: Vec<usize> = if schema.features.is_empty() {
        for d in &schema.drop {
            find(d)?;
        }
        (0..names.len())
            .filter(|&j| !names[j].is_empty() && j != target_col && !schema.drop.iter().any(|d| d == names[j]))
            .collect()
    } else {
        schema.features.iter().map(|f| find(f)).collect::<Result<_>>()?
    };
    if let Some(want) = schema.expected_features {
        if feature_cols.len() != want {
            return Err(AppError::parse(
                origin,
                format!("schema expects {want} features, header yields {}", feature_cols.len()),
            ));
        }
    }
    let width = feature_cols.len();
    let mut values = Vec::new();
    let mut targets = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| AppError::parse(origin, e))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |j: usize| -> Result<f64> {
            let raw = rec.get(j).ok_or_else(|| {
                AppError::parse(origin, format!("line {line}: {} columns, header has {}", rec.len(), names.len()))
            })?;
            parse_cell(raw, schema.decimal_comma)
                .ok_or_else(|| AppError::parse(origin, format!("line {line}, column '{}': cannot parse '{raw}'", names[j])))
        };
        for &j in &feature_cols {
            values.push(cell(j)?);
        }
        targets.push(cell(target_col)?);
    }
    if targets.is_empty() {
        return Err(dml_s2r_core::Error::NoRows.into());
    }
    let features = Matrix::from_vec(targets.len(), width, values)?;
    let feature_names = feature_cols.iter().map(|&j| names[j].to_string()).collect();
    Ok(Dataset::new(schema.name.clone(), features, targets, feature_names)?)
}

/// Loads, then drops sentinel rows if the schema declares a sentinel.
/// Returns the cleaned dataset and the raw row count.
pub fn load_clean(path: &Path, schema: &Schema) -> Result<(Dataset, usize)> {
    let raw = load_csv(path, schema)?;
    let raw_rows = raw.n_samples();
    let d = match schema.sentinel {
        Some(s) => clean_sentinels(&raw, s)?,
        None => raw,
    };
    Ok((d, raw_rows))
}

/// A cleaned dataset plus its min-max parameters, as written by `prepare`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub format_version: u32,
    pub name: String,
    pub raw_rows: usize,
    pub rows: usize,
    pub unlabeled: usize,
    pub norm: NormParams,
    /// Features already normalized with `norm`; targets in raw units.
    pub dataset: Dataset,
}

impl PreparedDataset {
    pub fn build(path: &Path, schema: &Schema) -> Result<Self> {
        let (clean, raw_rows) = load_clean(path, schema)?;
        let norm = fit_minmax(&clean)?;
        let dataset = apply_minmax(&clean, &norm)?;
        Ok(PreparedDataset {
            format_version: PREPARED_FORMAT_VERSION,
            name: schema.name.clone(),
            raw_rows,
            rows: dataset.n_samples(),
            unlabeled: schema.unlabeled,
            norm,
            dataset,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: PreparedDataset = formats::read_json(path)?;
        if p.format_version != PREPARED_FORMAT_VERSION {
            return Err(AppError::parse(path, format!("unsupported prepared format {}", p.format_version)));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(text: &str) -> Schema {
        Schema::from_toml_str(text, Path::new("s.toml")).unwrap()
    }

    const SEMI: &str = "Date;Time;A;B(GT);Y;;\n\
        10/03/2004;18.00.00;2,6;1360;11,9;;\n\
        10/03/2004;19.00.00;-200;1292;9,4;;\n\
        ;;;;;;\n\
        11/03/2004;20.00.00;2,2;1402;9,0;;\n";

    #[test]
    fn semicolon_decimal_comma_with_trailing_columns() {
        let s = schema("name = \"aq\"\ntarget = \"Y\"\ndrop = [\"Date\", \"Time\"]\ndelimiter = \";\"\ndecimal_comma = true\nsentinel = -200.0\n");
        let d = load_csv_bytes(SEMI.as_bytes(), Path::new("aq.csv"), &s).unwrap();
        assert_eq!(d.n_samples(), 3);
        assert_eq!(d.feature_names, vec!["A", "B(GT)"]);
        assert_eq!(d.features.row(0), &[2.6, 1360.0]);
        assert_eq!(d.targets, vec![11.9, 9.4, 9.0]);
        let c = clean_sentinels(&d, -200.0).unwrap();
        assert_eq!(c.n_samples(), 2);
    }

    #[test]
    fn skip_rows_and_explicit_features() {
        let text = "3,2,,\nx1,x2,x3,y\n1,2,3,4\n5,6,7,8\n";
        let s = schema("name = \"t\"\ntarget = \"y\"\nfeatures = [\"x3\", \"x1\"]\nskip_rows = 1\n");
        let d = load_csv_bytes(text.as_bytes(), Path::new("t.csv"), &s).unwrap();
        assert_eq!(d.features.as_slice(), &[3.0, 1.0, 7.0, 5.0]);
        assert_eq!(d.targets, vec![4.0, 8.0]);
    }

    #[test]
    fn empty_file_is_no_rows() {
        let s = schema("name = \"t\"\ntarget = \"y\"\n");
        let e = load_csv_bytes(b"", Path::new("t.csv"), &s).unwrap_err();
        assert_eq!(e.to_string(), "no rows");
        let e = load_csv_bytes(b"x,y\n", Path::new("t.csv"), &s).unwrap_err();
        assert_eq!(e.to_string(), "no rows");
    }

    #[test]
    fn bad_cell_names_line_and_column() {
        let s = schema("name = \"t\"\ntarget = \"y\"\n");
        let e = load_csv_bytes(b"x,y\n1,2\nabc,3\n", Path::new("t.csv"), &s).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 3") && msg.contains("'x'") && msg.contains("abc"), "{msg}");
    }

    #[test]
    fn feature_count_mismatch_is_reported() {
        let s = schema("name = \"t\"\ntarget = \"y\"\nexpected_features = 3\n");
        let e = load_csv_bytes(b"a,b,y\n1,2,3\n", Path::new("t.csv"), &s).unwrap_err();
        assert!(e.to_string().contains("expects 3 features"), "{e}");
    }

    #[test]
    fn missing_columns_and_short_rows() {
        let s = schema("name = \"t\"\ntarget = \"z\"\n");
        assert!(load_csv_bytes(b"a,y\n1,2\n", Path::new("t.csv"), &s).is_err());
        let s = schema("name = \"t\"\ntarget = \"y\"\n");
        assert!(load_csv_bytes(b"a,y\n1\n", Path::new("t.csv"), &s).is_err());
    }

    #[test]
    fn missing_file_maps_to_usage_exit() {
        let s = schema("name = \"t\"\ntarget = \"y\"\n");
        let e = load_csv(Path::new("/definitely/not/here.csv"), &s).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
