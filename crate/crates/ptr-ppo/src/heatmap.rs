//! Renders a priority-history matrix to a grayscale PNG, one pixel per cell:
//! rows are training iterations, columns are memory slots, brighter means
//! higher priority.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use thiserror::Error;

use crate::metrics::{read_matrix, MetricsError};

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error(transparent)]
    Matrix(#[from] MetricsError),
    #[error("png encoding failed: {0}")]
    Encode(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Renders `heatmap.csv` to `output`; returns the image size as
/// `(width, height) = (columns, rows)`.
pub fn render(input: &Path, output: &Path) -> Result<(u32, u32), HeatmapError> {
    let matrix = read_matrix(input)?;
    let height = matrix.len() as u32;
    let width = matrix[0].len() as u32;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in &matrix {
        for &v in row {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let range = hi - lo;
    let mut pixels = Vec::with_capacity((width * height) as usize);
    for row in &matrix {
        for &v in row {
            // A constant matrix renders mid-gray.
            let level = if range > 0.0 { (v - lo) / range } else { 0.5 };
            pixels.push((level * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }

    let file = File::create(output)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| HeatmapError::Encode(e.to_string()))?;
    writer
        .write_image_data(&pixels)
        .map_err(|e| HeatmapError::Encode(e.to_string()))?;
    Ok((width, height))
}

/// Reads back the pixel dimensions of a PNG; used by shape checks.
pub fn png_dimensions(path: &Path) -> Result<(u32, u32), HeatmapError> {
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let reader = decoder
        .read_info()
        .map_err(|e| HeatmapError::Encode(e.to_string()))?;
    let info = reader.info();
    Ok((info.width, info.height))
}
