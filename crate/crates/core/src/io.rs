//! File formats: numeric CSV matrices, single-column label files, and the
//! run manifest written next to every output.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrimapError};
use crate::optimizer::EmbedConfig;

fn io_err(path: &Path, source: std::io::Error) -> TrimapError {
    TrimapError::Io { path: path.to_path_buf(), source }
}

/// Parses a rectangular numeric table from text. A first row with any
/// non-numeric cell is treated as a header and skipped; blank lines are
/// ignored. `source_name` only labels error messages.
pub fn parse_matrix_csv(text: &str, delimiter: char, source_name: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut saw_content = false;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(delimiter).map(str::trim).collect();

        if !saw_content {
            saw_content = true;
            // Header auto-detection: any cell that fails to parse makes the
            // first content row a header.
            if cells.iter().any(|c| c.parse::<f64>().is_err()) {
                continue;
            }
        }

        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(TrimapError::Parse {
                    source_name: source_name.to_string(),
                    line: line_no,
                    message: format!("expected {w} columns, found {}", cells.len()),
                });
            }
            _ => {}
        }

        let mut row = Vec::with_capacity(cells.len());
        for (col, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| TrimapError::Parse {
                source_name: source_name.to_string(),
                line: line_no,
                message: format!("column {}: '{cell}' is not a number", col + 1),
            })?;
            if !value.is_finite() {
                return Err(TrimapError::Parse {
                    source_name: source_name.to_string(),
                    line: line_no,
                    message: format!("column {}: non-finite value", col + 1),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(TrimapError::EmptyInput(format!(
            "{source_name} holds no data rows"
        )));
    }
    let (n, d) = (rows.len(), width.unwrap());
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, d), flat).expect("rectangular rows"))
}

/// Reads a numeric CSV file; see [`parse_matrix_csv`].
pub fn load_matrix_csv(path: &Path, delimiter: char) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_matrix_csv(&text, delimiter, &path.display().to_string())
}

/// Renders a coordinate matrix as CSV with 17 significant decimal digits per
/// value (enough to reproduce every f64 bit-exactly), no header.
pub fn matrix_to_csv(points: ArrayView2<'_, f64>) -> Result<String> {
    if points.nrows() == 0 || points.ncols() == 0 {
        return Err(TrimapError::EmptyInput(
            "refusing to write an empty matrix".into(),
        ));
    }
    let mut out = String::with_capacity(points.nrows() * points.ncols() * 26);
    for row in points.rows() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:.16e}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes a coordinate matrix to `path`; see [`matrix_to_csv`].
pub fn save_matrix_csv(points: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    let csv = matrix_to_csv(points)?;
    std::fs::write(path, csv).map_err(|e| io_err(path, e))
}

/// Parses one integer label per line; blank lines are ignored.
pub fn parse_labels(text: &str, source_name: &str) -> Result<Vec<i64>> {
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        labels.push(trimmed.parse::<i64>().map_err(|_| TrimapError::Parse {
            source_name: source_name.to_string(),
            line: idx + 1,
            message: format!("'{trimmed}' is not an integer label"),
        })?);
    }
    if labels.is_empty() {
        return Err(TrimapError::EmptyInput(format!(
            "{source_name} holds no labels"
        )));
    }
    Ok(labels)
}

/// Reads a label file; see [`parse_labels`].
pub fn load_labels(path: &Path) -> Result<Vec<i64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_labels(&text, &path.display().to_string())
}

/// Everything needed to replay a CLI run bit-for-bit, written alongside its
/// outputs. Timestamps are informational; the seed and config are the
/// replayable part.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: EmbedConfig,
    pub input_paths: Vec<PathBuf>,
    pub output_paths: Vec<PathBuf>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub seed: u64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| TrimapError::Parse {
            source_name: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

pub fn unix_ms_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn parses_plain_table() {
        let m = parse_matrix_csv("0,0\n1,0\n0,1\n", ',', "test").unwrap();
        assert_eq!(m, array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn skips_header_row() {
        let with = parse_matrix_csv("a,b\n1,2\n3,4\n", ',', "test").unwrap();
        let without = parse_matrix_csv("1,2\n3,4\n", ',', "test").unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn ragged_rows_report_the_line() {
        let err = parse_matrix_csv("1,2\n3,4,5\n", ',', "test").unwrap_err();
        match err {
            TrimapError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let err = parse_matrix_csv("1,2\n3,oops\n", ',', "test").unwrap_err();
        match err {
            TrimapError::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("column 2"), "{message}");
            }
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_matrix_csv("", ',', "test"),
            Err(TrimapError::EmptyInput(_))
        ));
        assert!(matches!(
            parse_matrix_csv("a,b\n", ',', "test"),
            Err(TrimapError::EmptyInput(_))
        ));
    }

    #[test]
    fn refuses_to_write_empty_matrices() {
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            matrix_to_csv(empty.view()),
            Err(TrimapError::EmptyInput(_))
        ));
    }

    #[test]
    fn single_cell_round_trip() {
        let m = array![[std::f64::consts::PI]];
        let csv = matrix_to_csv(m.view()).unwrap();
        assert_eq!(csv.lines().count(), 1);
        let back = parse_matrix_csv(&csv, ',', "test").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn write_failures_carry_the_path() {
        let m = array![[1.0]];
        let err = save_matrix_csv(m.view(), Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        match err {
            TrimapError::Io { path, .. } => {
                assert_eq!(path, Path::new("/nonexistent-dir/x.csv"))
            }
            other => panic!("expected Io, got {other:?}"),
        }
    }

    #[test]
    fn labels_parse_and_reject_garbage() {
        assert_eq!(parse_labels("1\n2\n\n-3\n", "l").unwrap(), vec![1, 2, -3]);
        assert!(parse_labels("1\nx\n", "l").is_err());
        assert!(parse_labels("", "l").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run_manifest.json");
        let manifest = RunManifest {
            command: "embed".into(),
            config: EmbedConfig::default(),
            input_paths: vec![PathBuf::from("x.csv")],
            output_paths: vec![PathBuf::from("y.csv")],
            started_unix_ms: 1,
            finished_unix_ms: 2,
            seed: 42,
        };
        manifest.write(&path).unwrap();
        let back = RunManifest::read(&path).unwrap();
        assert_eq!(back.config, manifest.config);
        assert_eq!(back.seed, 42);
    }

    proptest! {
        // Save/load reproduces every coordinate exactly.
        #[test]
        fn csv_round_trip_identity(
            values in proptest::collection::vec(-1e12f64..1e12, 1..60),
            cols in 1usize..6,
        ) {
            let n = values.len() / cols;
            prop_assume!(n >= 1);
            let m = Array2::from_shape_vec(
                (n, cols),
                values[..n * cols].to_vec(),
            ).unwrap();
            let csv = matrix_to_csv(m.view()).unwrap();
            let back = parse_matrix_csv(&csv, ',', "prop").unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
