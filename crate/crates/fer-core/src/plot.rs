//! 2-D embedding plot: a seeded principal-component reduction of the
//! representations, written as a scatter image plus a coordinate CSV for
//! headless verification.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::derive_seed;
use crate::manifest::{load_dataset, DataError, DatasetManifest};
use crate::nn::NnError;
use crate::train::{assemble_batch, Model, TrainError};

/// Guard against accidentally plotting an entire large dataset.
pub const MAX_PLOT_SAMPLES: usize = 10_000;

const POWER_ITERATIONS: usize = 200;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has {0} samples, more than the plot guard {MAX_PLOT_SAMPLES}")]
    TooManySamples(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Shape(#[from] NnError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Top principal direction of centered rows via seeded power iteration.
fn principal_direction(x: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let d = x.ncols();
    let mut v = Array1::<f64>::zeros(d);
    for e in v.iter_mut() {
        *e = rng.gen_range(-1.0..1.0);
    }
    let norm = v.dot(&v).sqrt().max(f64::MIN_POSITIVE);
    v /= norm;
    for _ in 0..POWER_ITERATIONS {
        let projected = x.dot(&v); // n
        let mut next = x.t().dot(&projected); // d
        let norm = next.dot(&next).sqrt();
        if norm <= 1e-30 {
            break;
        }
        next /= norm;
        v = next;
    }
    // canonical sign: largest-magnitude component positive
    let mut extreme = 0usize;
    for i in 1..d {
        if v[i].abs() > v[extreme].abs() {
            extreme = i;
        }
    }
    if v[extreme] < 0.0 {
        v = -v;
    }
    v
}

/// Reduces rows to two seeded principal components.
pub fn reduce_to_2d(reps: &Array2<f64>, seed: u64) -> Array2<f64> {
    let n = reps.nrows();
    let mean = reps.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let mut centered = reps.clone();
    for mut row in centered.rows_mut() {
        row -= &mean;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "plot-reduce", &[]));
    let v1 = principal_direction(&centered, &mut rng);
    let c1 = centered.dot(&v1); // n
    // deflate and repeat for the second component
    let mut deflated = centered.clone();
    for (mut row, &score) in deflated.rows_mut().into_iter().zip(c1.iter()) {
        row.scaled_add(-score, &v1);
    }
    let v2 = principal_direction(&deflated, &mut rng);
    let c2 = centered.dot(&v2);
    let mut out = Array2::<f64>::zeros((n, 2));
    for i in 0..n {
        out[[i, 0]] = c1[i];
        out[[i, 1]] = c2[i];
    }
    out
}

const PALETTE: [[u8; 3]; 10] = [
    [214, 39, 40],
    [31, 119, 180],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

fn render_scatter(coords: &Array2<f64>, labels: &[usize], size: u32) -> Vec<u8> {
    let margin = 24.0;
    let span = f64::from(size) - 2.0 * margin;
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in coords.rows() {
        min_x = min_x.min(row[0]);
        max_x = max_x.max(row[0]);
        min_y = min_y.min(row[1]);
        max_y = max_y.max(row[1]);
    }
    let width_x = (max_x - min_x).max(1e-12);
    let width_y = (max_y - min_y).max(1e-12);
    let mut pixels = vec![255u8; (size * size * 3) as usize];
    for (row, &label) in coords.rows().into_iter().zip(labels) {
        let px = margin + (row[0] - min_x) / width_x * span;
        let py = margin + (row[1] - min_y) / width_y * span;
        let color = PALETTE[label % PALETTE.len()];
        let (cx, cy) = (px.round() as i64, (f64::from(size) - py).round() as i64);
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as u32) < size && (y as u32) < size {
                    let base = ((y as u32 * size + x as u32) * 3) as usize;
                    pixels[base..base + 3].copy_from_slice(&color);
                }
            }
        }
    }
    pixels
}

/// Encodes representations for every manifest sample, reduces them to two
/// dimensions, and writes `<out_prefix>.png` and `<out_prefix>.csv`.
pub fn emit_embedding_plot(
    model: &Model,
    manifest: &DatasetManifest,
    seed: u64,
    out_prefix: &Path,
) -> Result<(PathBuf, PathBuf), PlotError> {
    let dataset = load_dataset(manifest)?;
    if dataset.is_empty() {
        return Err(PlotError::EmptyDataset);
    }
    if dataset.len() > MAX_PLOT_SAMPLES {
        return Err(PlotError::TooManySamples(dataset.len()));
    }
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut reps: Option<Array2<f64>> = None;
    let mut labels = Vec::with_capacity(dataset.len());
    for chunk in indices.chunks(64) {
        let batch = assemble_batch(&dataset, chunk, None);
        let r = model.reps(&batch.images)?;
        reps = Some(match reps {
            None => r,
            Some(acc) => ndarray::concatenate(ndarray::Axis(0), &[acc.view(), r.view()])
                .expect("matching widths"),
        });
        labels.extend(batch.labels);
    }
    let reps = reps.expect("dataset is non-empty");
    let coords = reduce_to_2d(&reps, seed);

    let csv_path = out_prefix.with_extension("csv");
    let mut csv = String::from("x,y,label,category\n");
    for (row, &label) in coords.rows().into_iter().zip(&labels) {
        csv.push_str(&format!(
            "{:.9e},{:.9e},{},{}\n",
            row[0],
            row[1],
            label,
            dataset.categories.name(label)
        ));
    }
    std::fs::write(&csv_path, csv).map_err(|source| PlotError::Io {
        path: csv_path.clone(),
        source,
    })?;

    let png_path = out_prefix.with_extension("png");
    let size = 640u32;
    let pixels = render_scatter(&coords, &labels, size);
    image::save_buffer(&png_path, &pixels, size, size, image::ColorType::Rgb8).map_err(|e| {
        PlotError::Io {
            path: png_path.clone(),
            source: std::io::Error::other(e.to_string()),
        }
    })?;
    Ok((png_path, csv_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_is_deterministic_and_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..50 * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let reps = Array2::from_shape_vec((50, 6), data).unwrap();
        let a = reduce_to_2d(&reps, 7);
        let b = reduce_to_2d(&reps, 7);
        assert_eq!(a, b);
        assert_eq!(a.dim(), (50, 2));
    }

    #[test]
    fn first_component_captures_the_dominant_direction() {
        // points strung along (1, 1, 0, ...) with small noise
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut reps = Array2::<f64>::zeros((80, 5));
        for mut row in reps.rows_mut() {
            let t: f64 = rng.gen_range(-10.0..10.0);
            row[0] = t + rng.gen_range(-0.01..0.01);
            row[1] = t + rng.gen_range(-0.01..0.01);
            row[2] = rng.gen_range(-0.01..0.01);
        }
        let coords = reduce_to_2d(&reps, 0);
        // variance along the first component dwarfs the second
        let var = |col: usize| {
            let mean: f64 = coords.column(col).sum() / 80.0;
            coords
                .column(col)
                .iter()
                .map(|&x| (x - mean).powi(2))
                .sum::<f64>()
        };
        assert!(var(0) > 100.0 * var(1));
    }
}
