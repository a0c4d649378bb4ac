//! File formats: PGM images, raw `f64` arrays with JSON sidecars, and CSV traces.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::PnmDecoder;
use image::ImageDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alm::TraceRow;
use crate::denoise::{DenoiseError, IntensityGrid, IterationMetrics};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Grid(#[from] DenoiseError),
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Grey levels normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub levels: Vec<f64>,
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, IoError> {
    let file = File::open(path).map_err(file_err(path))?;
    let image_err = |source| IoError::Image {
        path: path.to_path_buf(),
        source,
    };
    let decoder = PnmDecoder::new(BufReader::new(file)).map_err(image_err)?;
    let (width, height) = decoder.dimensions();
    let color = decoder.color_type();
    let mut buf = vec![0u8; decoder.total_bytes() as usize];
    decoder.read_image(&mut buf).map_err(image_err)?;
    let levels = match color {
        image::ColorType::L8 => buf.iter().map(|&b| b as f64 / 255.0).collect(),
        image::ColorType::L16 => buf
            .chunks_exact(2)
            .map(|c| u16::from_ne_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect(),
        other => return Err(format_err(path, format!("expected a greyscale image, found {other:?}"))),
    };
    Ok(GrayImage {
        width: width as usize,
        height: height as usize,
        levels,
    })
}

/// Writes `values` as binary PGM, mapping `[lo, hi]` linearly onto the full grey range.
pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64], lo: f64, hi: f64, depth: BitDepth) -> Result<(), IoError> {
    if values.len() != width * height {
        return Err(format_err(path, format!("{} values for a {width}x{height} image", values.len())));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let level = |v: f64| ((v - lo) / span).clamp(0.0, 1.0);
    let maxval = match depth {
        BitDepth::Eight => 255u16,
        BitDepth::Sixteen => 65535,
    };
    let mut out = BufWriter::new(File::create(path).map_err(file_err(path))?);
    write!(out, "P5\n{width} {height}\n{maxval}\n").map_err(file_err(path))?;
    for &v in values {
        let q = (level(v) * maxval as f64).round() as u16;
        match depth {
            BitDepth::Eight => out.write_all(&[q as u8]),
            BitDepth::Sixteen => out.write_all(&q.to_be_bytes()),
        }
        .map_err(file_err(path))?;
    }
    out.flush().map_err(file_err(path))
}

/// Reads a square PGM as an intensity whose brightest possible grey level
/// expects `peak_count` photons per pixel.
pub fn intensity_from_pgm(path: &Path, peak_count: f64) -> Result<IntensityGrid, IoError> {
    let img = read_pgm(path)?;
    if img.width != img.height {
        return Err(format_err(path, format!("image is {}x{}, expected a square", img.width, img.height)));
    }
    let means = img.levels.iter().map(|l| l * peak_count).collect();
    Ok(IntensityGrid::from_pixel_means(img.width, means)?)
}

/// Finite-element mesh description stored next to nodal arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshInfo {
    pub cells_per_side: usize,
    pub mesh_width: f64,
    /// Which nodes the array holds.
    pub nodes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSidecar {
    /// Side length of the square array.
    pub n: usize,
    pub dtype: String,
    pub order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshInfo>,
}

impl RawSidecar {
    pub fn square(n: usize) -> Self {
        Self {
            n,
            dtype: "f64".into(),
            order: "row-major".into(),
            mesh: None,
        }
    }
}

pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("json")
}

/// Writes little-endian `f64` values to `path` and the sidecar to `path` with a `.json` extension.
pub fn write_raw(path: &Path, values: &[f64], sidecar: &RawSidecar) -> Result<(), IoError> {
    if values.len() != sidecar.n * sidecar.n {
        return Err(format_err(path, format!("{} values for side {}", values.len(), sidecar.n)));
    }
    let mut out = BufWriter::new(File::create(path).map_err(file_err(path))?);
    for v in values {
        out.write_all(&v.to_le_bytes()).map_err(file_err(path))?;
    }
    out.flush().map_err(file_err(path))?;
    write_json(&sidecar_path(path), sidecar)
}

pub fn read_raw(path: &Path) -> Result<(RawSidecar, Vec<f64>), IoError> {
    let meta_path = sidecar_path(path);
    let text = std::fs::read_to_string(&meta_path).map_err(file_err(&meta_path))?;
    let sidecar: RawSidecar = serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: meta_path.clone(),
        source,
    })?;
    if sidecar.dtype != "f64" || sidecar.order != "row-major" {
        return Err(format_err(&meta_path, format!("unsupported layout {} / {}", sidecar.dtype, sidecar.order)));
    }
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(file_err(path))?;
    if bytes.len() != 8 * sidecar.n * sidecar.n {
        return Err(format_err(path, format!("{} bytes for side {}", bytes.len(), sidecar.n)));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight")))
        .collect();
    Ok((sidecar, values))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(file_err(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, IoError> {
    let file = File::create(path).map_err(file_err(path))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(file_err(path))
}

pub const ALM_TRACE_HEADER: [&str; 5] = ["k", "inner_iters", "rho", "V", "f"];
pub const CONTROL_TRACE_HEADER: [&str; 4] = ["k", "ell", "rho", "V"];
pub const DENOISE_METRICS_HEADER: [&str; 7] = [
    "k",
    "f",
    "violated_fraction",
    "max_rel_violation",
    "mean_rel_violation",
    "V",
    "rho",
];
pub const QUANTILE_SAMPLES_HEADER: [&str; 2] = ["replication", "m_n"];

pub fn write_alm_trace(path: &Path, trace: &[TraceRow]) -> Result<(), IoError> {
    write_rows(
        path,
        &ALM_TRACE_HEADER,
        trace.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.inner_iterations.to_string(),
                r.rho.to_string(),
                r.feasibility.to_string(),
                r.f.to_string(),
            ]
        }),
    )
}

pub fn write_control_trace(path: &Path, trace: &[TraceRow]) -> Result<(), IoError> {
    write_rows(
        path,
        &CONTROL_TRACE_HEADER,
        trace.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.inner_iterations.to_string(),
                r.rho.to_string(),
                r.feasibility.to_string(),
            ]
        }),
    )
}

pub fn write_denoise_metrics(path: &Path, metrics: &[IterationMetrics]) -> Result<(), IoError> {
    write_rows(
        path,
        &DENOISE_METRICS_HEADER,
        metrics.iter().map(|m| {
            vec![
                m.k.to_string(),
                m.f.to_string(),
                m.violated_fraction.to_string(),
                m.max_rel_violation.to_string(),
                m.mean_rel_violation.to_string(),
                m.feasibility.to_string(),
                m.rho.to_string(),
            ]
        }),
    )
}

pub fn write_quantile_samples(path: &Path, samples: &[f64]) -> Result<(), IoError> {
    write_rows(
        path,
        &QUANTILE_SAMPLES_HEADER,
        samples.iter().enumerate().map(|(i, s)| vec![i.to_string(), s.to_string()]),
    )
}
