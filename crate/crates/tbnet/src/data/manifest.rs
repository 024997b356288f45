//! Manifest loading: `manifest.csv` (header `path,label`) plus a
//! companion `classes.txt` with one class name per line, line index =
//! label.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    /// As written in the CSV; relative paths resolve against `root`.
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    /// Directory of the manifest file.
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
    pub classes: Vec<String>,
}

impl DatasetManifest {
    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.root.join(&record.path)
        }
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }
}

/// Loads and validates a manifest: header must be `path,label`, labels
/// must index into `classes.txt`, and every image path must resolve.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let classes_path = root.join("classes.txt");
    let classes_text =
        std::fs::read_to_string(&classes_path).map_err(|e| Error::io(&classes_path, e))?;
    let classes: Vec<String> = classes_text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if classes.is_empty() {
        return Err(Error::ManifestParse {
            path: classes_path,
            line: 1,
            message: "classes.txt has no class names".into(),
        });
    }

    let parse_err = |line: u64, message: String| Error::ManifestParse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => parse_err(1, e.to_string()),
        })?;
    {
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
        let expected = ["path", "label"];
        if headers.len() != 2 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
            return Err(parse_err(
                1,
                format!("expected header `path,label`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            ));
        }
    }

    let mut records = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| {
            parse_err(e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", record.len())));
        }
        let img_path = PathBuf::from(record[0].trim());
        let label: usize = record[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("invalid label `{}`", &record[1])))?;
        if label >= classes.len() {
            return Err(parse_err(
                line,
                format!("label {label} out of range for {} classes", classes.len()),
            ));
        }
        let resolved = if img_path.is_absolute() {
            img_path.clone()
        } else {
            root.join(&img_path)
        };
        if !resolved.is_file() {
            return Err(parse_err(
                line,
                format!("image not found: {}", resolved.display()),
            ));
        }
        records.push(ManifestRecord {
            path: img_path,
            label,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }

    Ok(DatasetManifest {
        root,
        records,
        classes,
    })
}
