//! Grid codecs: CSV matrices and PNG/BMP/JPEG images, with an optional JSON
//! sidecar (`<file>.meta.json`) carrying axis calibration and the intensity
//! mapping used when real values were quantized into an integer image.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AxisCalibration, Grid};
use crate::scalar::Scalar;

pub const SIDECAR_SUFFIX: &str = ".meta.json";
const SIDECAR_VERSION: u32 = 1;

/// Channel weights applied to colour images (`r, g, b`). Alpha is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LuminancePolicy {
    pub weights: [f64; 3],
}

impl Default for LuminancePolicy {
    fn default() -> Self {
        LuminancePolicy {
            weights: [1.0 / 3.0; 3],
        }
    }
}

impl LuminancePolicy {
    /// ITU-R BT.601 luma weights.
    pub fn rec601() -> Self {
        LuminancePolicy {
            weights: [0.299, 0.587, 0.114],
        }
    }

    #[inline]
    fn apply(&self, rgb: [f64; 3]) -> f64 {
        self.weights[0] * rgb[0] + self.weights[1] * rgb[1] + self.weights[2] * rgb[2]
    }
}

/// On-disk encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridEncoding {
    Csv,
    Png8,
    Png16,
    Bmp,
    Jpeg,
}

impl GridEncoding {
    /// Encoding implied by a file extension; PNG defaults to 16-bit.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "csv" | "txt" => Ok(GridEncoding::Csv),
            "png" => Ok(GridEncoding::Png16),
            "bmp" => Ok(GridEncoding::Bmp),
            "jpg" | "jpeg" => Ok(GridEncoding::Jpeg),
            other => Err(Error::InvalidParameter(format!(
                "unsupported grid file extension {other:?}"
            ))),
        }
    }

    fn bit_max(self) -> Option<f64> {
        match self {
            GridEncoding::Png8 | GridEncoding::Bmp | GridEncoding::Jpeg => Some(255.0),
            GridEncoding::Png16 => Some(65535.0),
            GridEncoding::Csv => None,
        }
    }
}

/// Linear map from stored sample to intensity: `value = offset + scale * sample`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityMapping {
    pub offset: f64,
    pub scale: f64,
}

impl Default for IntensityMapping {
    fn default() -> Self {
        IntensityMapping {
            offset: 0.0,
            scale: 1.0,
        }
    }
}

/// Sidecar document stored next to a grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub version: u32,
    pub axes: AxisCalibration<f64>,
    #[serde(default)]
    pub intensity: IntensityMapping,
}

impl GridMetadata {
    pub fn new(axes: AxisCalibration<f64>, intensity: IntensityMapping) -> Self {
        GridMetadata {
            version: SIDECAR_VERSION,
            axes,
            intensity,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let meta: GridMetadata = serde_json::from_str(text)?;
        if meta.version != SIDECAR_VERSION {
            return Err(Error::parse(
                "grid metadata",
                1,
                format!("unsupported version {}", meta.version),
            ));
        }
        meta.axes.validate()?;
        if !(meta.intensity.offset.is_finite() && meta.intensity.scale.is_finite()) {
            return Err(Error::NonFinite("intensity mapping"));
        }
        Ok(meta)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(SIDECAR_SUFFIX);
    PathBuf::from(s)
}

/// Loads a grid from a CSV or image file. A sidecar, when present, supplies
/// axis calibration and the intensity mapping; otherwise pixel units apply.
pub fn load_grid<T: Scalar>(path: &Path, policy: &LuminancePolicy) -> Result<Grid<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let encoding = GridEncoding::from_path(path)?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        Some(GridMetadata::from_json(&text)?)
    } else {
        None
    };
    decode_grid(&bytes, encoding, policy, meta.as_ref())
}

/// Decodes an in-memory grid document.
pub fn decode_grid<T: Scalar>(
    bytes: &[u8],
    encoding: GridEncoding,
    policy: &LuminancePolicy,
    meta: Option<&GridMetadata>,
) -> Result<Grid<T>> {
    let (rows, cols, raw) = match encoding {
        GridEncoding::Csv => parse_csv(bytes)?,
        _ => decode_image(bytes, policy)?,
    };
    let mapping = meta.map(|m| m.intensity).unwrap_or_default();
    let axes = meta.map(|m| m.axes).unwrap_or_default();
    let values = raw
        .into_iter()
        .map(|v| {
            let v = if mapping == IntensityMapping::default() {
                v
            } else {
                mapping.offset + mapping.scale * v
            };
            T::from_f64(v).ok_or(Error::NonFinite("grid values"))
        })
        .collect::<Result<Vec<T>>>()?;
    let axes = AxisCalibration {
        axis1_origin: T::lit(axes.axis1_origin),
        axis1_step: T::lit(axes.axis1_step),
        axis2_origin: T::lit(axes.axis2_origin),
        axis2_step: T::lit(axes.axis2_step),
    };
    let grid = Grid::new(rows, cols, values, axes)?;
    grid.validate_intensities()?;
    Ok(grid)
}

fn parse_csv(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse("csv grid", 1, format!("not utf-8: {e}")))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut n = 0;
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| Error::parse("csv grid", i + 1, format!("{field:?}: {e}")))?;
            values.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::InvalidGrid(format!(
                    "non-rectangular csv: line {} has {n} fields, expected {c}",
                    i + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::InvalidGrid("empty csv".into()))?;
    Ok((rows, cols, values))
}

fn decode_image(bytes: &[u8], policy: &LuminancePolicy) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::load_from_memory(bytes)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::InvalidGrid("zero-sized image".into()));
    }
    let values: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageRgb16(b) => b
            .pixels()
            .map(|p| policy.apply(p.0.map(f64::from)))
            .collect(),
        DynamicImage::ImageRgba16(b) => b
            .pixels()
            .map(|p| policy.apply([p.0[0], p.0[1], p.0[2]].map(f64::from)))
            .collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| policy.apply(p.0.map(f64::from)))
            .collect(),
    };
    Ok((h, w, values))
}

/// Chooses the intensity mapping for an integer encoding: identity when all
/// values are already integers in range, otherwise a min/max rescale.
fn quantization_mapping<T: Scalar>(grid: &Grid<T>, max_code: f64) -> IntensityMapping {
    let vals = grid.values();
    let fits = vals.iter().all(|v| {
        let v = v.as_f64();
        v >= 0.0 && v <= max_code && v.fract() == 0.0
    });
    if fits {
        return IntensityMapping::default();
    }
    let lo = grid.min_value().as_f64();
    let hi = grid.max_value().as_f64();
    let scale = if hi > lo { (hi - lo) / max_code } else { 1.0 };
    IntensityMapping { offset: lo, scale }
}

/// Encodes a grid; returns the file bytes and the sidecar metadata.
pub fn encode_grid<T: Scalar>(
    grid: &Grid<T>,
    encoding: GridEncoding,
) -> Result<(Vec<u8>, GridMetadata)> {
    let a = grid.axes();
    let axes = AxisCalibration {
        axis1_origin: a.axis1_origin.as_f64(),
        axis1_step: a.axis1_step.as_f64(),
        axis2_origin: a.axis2_origin.as_f64(),
        axis2_step: a.axis2_step.as_f64(),
    };
    let Some(max_code) = encoding.bit_max() else {
        let mut out = String::with_capacity(grid.values().len() * 8);
        for r in 0..grid.rows() {
            let row: Vec<String> = grid.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        return Ok((
            out.into_bytes(),
            GridMetadata::new(axes, IntensityMapping::default()),
        ));
    };
    let mapping = quantization_mapping(grid, max_code);
    let code = |v: T| -> f64 {
        ((v.as_f64() - mapping.offset) / mapping.scale)
            .round()
            .clamp(0.0, max_code)
    };
    let (w, h) = (grid.cols() as u32, grid.rows() as u32);
    let mut buf = Cursor::new(Vec::new());
    match encoding {
        GridEncoding::Png16 => {
            let data: Vec<u16> = grid.values().iter().map(|&v| code(v) as u16).collect();
            let img: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w, h, data).expect("buffer matches dimensions");
            img.write_to(&mut buf, ImageFormat::Png)?;
        }
        _ => {
            let data: Vec<u8> = grid.values().iter().map(|&v| code(v) as u8).collect();
            let img: ImageBuffer<Luma<u8>, Vec<u8>> =
                ImageBuffer::from_raw(w, h, data).expect("buffer matches dimensions");
            let format = match encoding {
                GridEncoding::Bmp => ImageFormat::Bmp,
                GridEncoding::Jpeg => ImageFormat::Jpeg,
                _ => ImageFormat::Png,
            };
            if format == ImageFormat::Bmp {
                // BMP has no 8-bit grey writer; store grey as RGB.
                DynamicImage::ImageLuma8(img)
                    .to_rgb8()
                    .write_to(&mut buf, format)?;
            } else {
                img.write_to(&mut buf, format)?;
            }
        }
    }
    Ok((buf.into_inner(), GridMetadata::new(axes, mapping)))
}

/// Saves a grid with the encoding implied by the extension, plus its sidecar.
pub fn save_grid<T: Scalar>(grid: &Grid<T>, path: &Path) -> Result<()> {
    save_grid_as(grid, path, GridEncoding::from_path(path)?)
}

pub fn save_grid_as<T: Scalar>(grid: &Grid<T>, path: &Path, encoding: GridEncoding) -> Result<()> {
    let (bytes, meta) = encode_grid(grid, encoding)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    fs::write(&side, meta.to_json()).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_direct_parse() {
        let g: Grid<f64> = decode_grid(
            b"0,1\n2,3\n",
            GridEncoding::Csv,
            &LuminancePolicy::default(),
            None,
        )
        .unwrap();
        assert_eq!(g.values(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(*g.axes(), AxisCalibration::pixel_units());
    }

    #[test]
    fn csv_non_rectangular_rejected() {
        let r: Result<Grid<f64>> = decode_grid(
            b"0,1\n2\n",
            GridEncoding::Csv,
            &LuminancePolicy::default(),
            None,
        );
        assert!(matches!(r, Err(Error::InvalidGrid(_))));
        let r: Result<Grid<f64>> =
            decode_grid(b"", GridEncoding::Csv, &LuminancePolicy::default(), None);
        assert!(r.is_err());
        let r: Result<Grid<f64>> = decode_grid(
            b"0,x\n1,2\n",
            GridEncoding::Csv,
            &LuminancePolicy::default(),
            None,
        );
        assert!(matches!(r, Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn grey_png_identity_decode() {
        let img: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(2, 2, vec![0, 10, 20, 30]).unwrap();
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png).unwrap();
        let g: Grid<f64> = decode_grid(
            buf.get_ref(),
            GridEncoding::Png8,
            &LuminancePolicy::default(),
            None,
        )
        .unwrap();
        assert_eq!(g.values(), &[0.0, 10.0, 20.0, 30.0]);
    }

    #[test]
    fn rgb_equal_weights() {
        let img: ImageBuffer<image::Rgb<u8>, Vec<u8>> =
            ImageBuffer::from_raw(2, 2, vec![255, 0, 0, 0, 255, 0, 0, 0, 255, 30, 60, 90]).unwrap();
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png).unwrap();
        let g: Grid<f64> = decode_grid(
            buf.get_ref(),
            GridEncoding::Png8,
            &LuminancePolicy::default(),
            None,
        )
        .unwrap();
        // oracle: explicit weighted sum
        let w = 1.0 / 3.0;
        assert!((g.get(0, 0) - 255.0 * w).abs() < 1e-12);
        assert!((g.get(0, 0) - 85.0).abs() < 1e-12);
        assert!((g.get(1, 1) - (30.0 * w + 60.0 * w + 90.0 * w)).abs() < 1e-12);
        let g601: Grid<f64> = decode_grid(
            buf.get_ref(),
            GridEncoding::Png8,
            &LuminancePolicy::rec601(),
            None,
        )
        .unwrap();
        assert!((g601.get(0, 0) - 255.0 * 0.299).abs() < 1e-12);
    }

    #[test]
    fn garbage_image_is_an_error() {
        let r: Result<Grid<f64>> = decode_grid(
            b"not an image",
            GridEncoding::Png8,
            &LuminancePolicy::default(),
            None,
        );
        assert!(matches!(r, Err(Error::Image(_))));
    }

    #[test]
    fn sidecar_version_checked() {
        let mut meta = GridMetadata::new(Default::default(), Default::default());
        meta.version = 7;
        assert!(GridMetadata::from_json(&meta.to_json()).is_err());
    }

    #[test]
    fn quantized_png8_within_one_code() {
        let g = Grid::from_fn(5, 7, AxisCalibration::default(), |r, c| {
            0.37 * (r * 7 + c) as f64 + 1.25
        })
        .unwrap();
        let (bytes, meta) = encode_grid(&g, GridEncoding::Png8).unwrap();
        let back: Grid<f64> = decode_grid(
            &bytes,
            GridEncoding::Png8,
            &LuminancePolicy::default(),
            Some(&meta),
        )
        .unwrap();
        let range = g.max_value() - g.min_value();
        for (a, b) in g.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= range / 255.0);
        }
    }
}
