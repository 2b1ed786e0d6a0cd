//! Deterministic synthetic dataset generator.
//!
//! Each category gets a striped-blob texture with a class-specific stripe
//! orientation, frequency, and color tint; per-image phase/position jitter
//! and pixel noise come from a seeded RNG. The neutral category, when
//! present, always uses the zero-orientation pattern. Identical inputs
//! reproduce byte-identical image files.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::category::CategorySet;
use crate::derive_seed;
use crate::manifest::{save_manifest, DataError, DatasetManifest, ManifestRow};

pub const SUPPORTED_SIZES: [usize; 4] = [32, 64, 112, 224];

/// Per-class tints keep classes linearly separable even under heavy
/// downsampling; values are RGB multipliers.
const TINTS: [[f64; 3]; 8] = [
    [1.00, 0.72, 0.72],
    [0.72, 1.00, 0.72],
    [0.72, 0.72, 1.00],
    [1.00, 1.00, 0.66],
    [1.00, 0.66, 1.00],
    [0.66, 1.00, 1.00],
    [1.00, 0.88, 0.62],
    [0.85, 0.85, 0.85],
];

/// Stripe parameters for one class.
#[derive(Debug, Clone, Copy)]
struct ClassPattern {
    orientation: f64,
    frequency: f64,
    tint: [f64; 3],
}

fn class_pattern(categories: &CategorySet, class: usize) -> ClassPattern {
    let tint = TINTS[class % TINTS.len()];
    if categories.neutral_index() == Some(class) {
        // zero-orientation pattern reserved for neutral
        return ClassPattern {
            orientation: 0.0,
            frequency: 4.0,
            tint,
        };
    }
    // remaining orientations spread over (0, pi), skipping 0
    let non_neutral_rank = (0..class)
        .filter(|&c| categories.neutral_index() != Some(c))
        .count();
    let non_neutral_total = categories.len() - usize::from(categories.neutral_index().is_some());
    let orientation =
        std::f64::consts::PI * (non_neutral_rank + 1) as f64 / (non_neutral_total + 1) as f64;
    ClassPattern {
        orientation,
        frequency: 3.0 + 2.0 * (non_neutral_rank % 3) as f64,
        tint,
    }
}

fn render_image(pattern: ClassPattern, size: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let s = size as f64;
    let phase: f64 = rng.gen_range(-0.3..0.3);
    let cx = s / 2.0 + rng.gen_range(-s / 8.0..s / 8.0);
    let cy = s / 2.0 + rng.gen_range(-s / 8.0..s / 8.0);
    let sigma = s / 3.0;
    let (sin_t, cos_t) = pattern.orientation.sin_cos();
    let mut pixels = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let xf = x as f64;
            let yf = y as f64;
            let along = (xf * cos_t + yf * sin_t) / s;
            let stripe = (2.0 * std::f64::consts::PI * pattern.frequency * along + phase).sin();
            let d2 = (xf - cx).powi(2) + (yf - cy).powi(2);
            let blob = (-d2 / (2.0 * sigma * sigma)).exp();
            for c in 0..3 {
                let noise: f64 = rng.gen_range(-0.04..0.04);
                // the tint scales both a flat offset and the stripes, so
                // class identity survives global pooling as well as
                // spatial detail
                let v = 0.30 + pattern.tint[c] * (0.22 + 0.28 * stripe * blob) + noise;
                pixels.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    pixels
}

/// Generates `per_class` images per category under `out_dir`, writes
/// `manifest.csv` and `categories.txt` alongside, and returns the manifest.
pub fn generate_synthetic(
    categories: &CategorySet,
    per_class: usize,
    image_size: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest, DataError> {
    assert!(per_class >= 1, "per_class must be at least 1");
    assert!(
        SUPPORTED_SIZES.contains(&image_size),
        "image_size must be one of {SUPPORTED_SIZES:?}"
    );
    std::fs::create_dir_all(out_dir).map_err(|source| DataError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::with_capacity(categories.len() * per_class);
    for class in 0..categories.len() {
        let name = categories.name(class).to_string();
        let class_dir = out_dir.join(&name);
        std::fs::create_dir_all(&class_dir).map_err(|source| DataError::Io {
            path: class_dir.clone(),
            source,
        })?;
        let pattern = class_pattern(categories, class);
        for img_ix in 0..per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                "synthetic",
                &[class as u64, img_ix as u64],
            ));
            let pixels = render_image(pattern, image_size, &mut rng);
            let rel = format!("{name}/{name}_{img_ix:04}.png");
            let path = out_dir.join(&rel);
            image::save_buffer(
                &path,
                &pixels,
                image_size as u32,
                image_size as u32,
                image::ColorType::Rgb8,
            )
            .map_err(|e| DataError::Io {
                path: path.clone(),
                source: std::io::Error::other(e.to_string()),
            })?;
            rows.push(ManifestRow {
                path: rel,
                label: name.clone(),
            });
        }
    }
    let manifest = DatasetManifest {
        rows,
        root: out_dir.to_path_buf(),
        categories: categories.clone(),
    };
    save_manifest(&manifest, out_dir)?;
    Ok(manifest)
}

/// Sha-256 of every generated image file, keyed by relative path, for
/// determinism checks.
pub fn dataset_checksums(manifest: &DatasetManifest) -> Result<Vec<(String, String)>, DataError> {
    use sha2::{Digest, Sha256};
    let mut out = Vec::with_capacity(manifest.rows.len());
    for row in &manifest.rows {
        let path: PathBuf = manifest.root.join(&row.path);
        let bytes = std::fs::read(&path).map_err(|source| DataError::Io {
            path: path.clone(),
            source,
        })?;
        out.push((row.path.clone(), crate::to_hex(&Sha256::digest(&bytes))));
    }
    Ok(out)
}
