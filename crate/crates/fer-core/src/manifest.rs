//! Dataset manifests: a CSV of `path,label` rows next to a `categories.txt`
//! file that fixes the label order.

use std::path::{Path, PathBuf};

use ndarray::Array3;
use thiserror::Error;

use crate::category::{CategoryError, CategorySet};

pub const MANIFEST_HEADER: &str = "path,label";
pub const CATEGORIES_FILE: &str = "categories.txt";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("manifest line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error(transparent)]
    Category(#[from] CategoryError),
    #[error("image {path}: {message}")]
    ImageDecode { path: PathBuf, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// One manifest row: an image path relative to the manifest root plus its
/// label string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: String,
    pub label: String,
}

/// A validated dataset description. Labels are stored as strings and
/// resolved to indices against `categories` so files stay human-auditable.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    pub root: PathBuf,
    pub categories: CategorySet,
}

/// Parses a manifest CSV body against a known category set.
///
/// Pure function over the text: no filesystem access, so it accepts rows
/// whose image files do not exist. [`load_manifest`] adds the existence
/// checks.
pub fn parse_manifest_csv(text: &str, categories: &CategorySet) -> Result<Vec<ManifestRow>, DataError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == MANIFEST_HEADER => {}
        Some((_, header)) => {
            return Err(DataError::Format {
                line: 1,
                message: format!("expected header {MANIFEST_HEADER:?}, got {header:?}"),
            })
        }
        None => {
            return Err(DataError::Format {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (ix, raw) in lines {
        let line_no = ix + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (path, label) = line.split_once(',').ok_or_else(|| DataError::Format {
            line: line_no,
            message: "expected two comma-separated fields".into(),
        })?;
        if path.is_empty() {
            return Err(DataError::Format {
                line: line_no,
                message: "empty path field".into(),
            });
        }
        let label = label.trim().to_lowercase();
        if categories.index_of(&label).is_none() {
            return Err(DataError::UnknownLabel {
                line: line_no,
                label,
            });
        }
        rows.push(ManifestRow {
            path: path.to_string(),
            label,
        });
    }
    Ok(rows)
}

/// Loads and validates a manifest CSV with its sibling `categories.txt`.
///
/// Row order is preserved. Every row's image path must resolve to a
/// readable file under the manifest's directory.
pub fn load_manifest(csv_path: &Path) -> Result<DatasetManifest, DataError> {
    if !csv_path.is_file() {
        return Err(DataError::MissingFile(csv_path.to_path_buf()));
    }
    let root = csv_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let categories_path = root.join(CATEGORIES_FILE);
    if !categories_path.is_file() {
        return Err(DataError::MissingFile(categories_path));
    }
    let cat_text = std::fs::read_to_string(&categories_path).map_err(|source| DataError::Io {
        path: categories_path.clone(),
        source,
    })?;
    let categories = CategorySet::parse(&cat_text)?;
    let text = std::fs::read_to_string(csv_path).map_err(|source| DataError::Io {
        path: csv_path.to_path_buf(),
        source,
    })?;
    let rows = parse_manifest_csv(&text, &categories)?;
    for row in &rows {
        let img = root.join(&row.path);
        if !img.is_file() {
            return Err(DataError::MissingFile(img));
        }
    }
    Ok(DatasetManifest {
        rows,
        root,
        categories,
    })
}

/// Writes `manifest.csv` and `categories.txt` into `dir` and returns the
/// CSV path. Paths containing commas are rejected because the CSV format
/// is unquoted.
pub fn save_manifest(manifest: &DatasetManifest, dir: &Path) -> Result<PathBuf, DataError> {
    std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut body = String::from(MANIFEST_HEADER);
    body.push('\n');
    for (ix, row) in manifest.rows.iter().enumerate() {
        if row.path.contains(',') {
            return Err(DataError::Format {
                line: ix + 2,
                message: format!("path {:?} contains a comma", row.path),
            });
        }
        body.push_str(&row.path);
        body.push(',');
        body.push_str(&row.label);
        body.push('\n');
    }
    let csv_path = dir.join("manifest.csv");
    std::fs::write(&csv_path, body).map_err(|source| DataError::Io {
        path: csv_path.clone(),
        source,
    })?;
    manifest
        .categories
        .save(&dir.join(CATEGORIES_FILE))
        .map_err(|source| DataError::Io {
            path: dir.join(CATEGORIES_FILE),
            source,
        })?;
    Ok(csv_path)
}

impl DatasetManifest {
    /// Label indices in row order, resolved against the category set.
    pub fn label_indices(&self) -> Vec<usize> {
        self.rows
            .iter()
            .map(|r| {
                self.categories
                    .index_of(&r.label)
                    .expect("labels validated at construction")
            })
            .collect()
    }
}

/// One decoded training/evaluation sample.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Channel-major image, values in `[0, 1]`, shape `(ch, H, W)`.
    pub image: Array3<f64>,
    /// Label index into the owning dataset's category set.
    pub label: usize,
    pub source_id: String,
}

/// An in-memory dataset: decoded samples plus the category set.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub samples: Vec<Sample>,
    pub categories: CategorySet,
}

impl LoadedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

/// Decodes every manifest image into memory as CHW f64 in `[0, 1]`.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<LoadedDataset, DataError> {
    let labels = manifest.label_indices();
    let mut samples = Vec::with_capacity(manifest.rows.len());
    for (row, label) in manifest.rows.iter().zip(labels) {
        let path = manifest.root.join(&row.path);
        let img = image::open(&path).map_err(|e| DataError::ImageDecode {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let mut array = Array3::<f64>::zeros((3, h as usize, w as usize));
        for (x, y, pixel) in rgb.enumerate_pixels() {
            for c in 0..3 {
                array[[c, y as usize, x as usize]] = f64::from(pixel.0[c]) / 255.0;
            }
        }
        samples.push(Sample {
            image: array,
            label,
            source_id: row.path.clone(),
        });
    }
    Ok(LoadedDataset {
        samples,
        categories: manifest.categories.clone(),
    })
}
