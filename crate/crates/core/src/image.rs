//! Grayscale image container, file I/O and synthetic noise.
//!
//! Intensities live on the 0–255 scale as `f64` and are never clamped while
//! processing. Clamping and rounding happen only when writing 8-bit files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{GsrcError, Result};

/// Row-major grayscale image with real-valued intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(GsrcError::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(GsrcError::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GsrcError::NonFinite("image data"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_dims(&self, other: &Image) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(GsrcError::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            })
        }
    }

    /// Pointwise combination of two equally sized images.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.check_dims(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Image::new(self.width, self.height, data)
    }

    /// Quantized 8-bit view: round half away from zero, clamp to [0, 255].
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn max_abs_diff(&self, other: &Image) -> Result<f64> {
        self.check_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// AWGN parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(GsrcError::InvalidParameter(format!(
                "noise sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self { sigma, seed })
    }
}

/// Adds i.i.d. N(0, sigma²) noise to every pixel, without clamping.
///
/// Samples come from ChaCha8 seeded with `spec.seed` (via `seed_from_u64`) and
/// are drawn in row-major pixel order, so identical inputs give bit-identical
/// outputs on every platform.
pub fn add_awgn(img: &Image, spec: NoiseSpec) -> Image {
    if spec.sigma == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = img
        .data
        .iter()
        .map(|&v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            v + spec.sigma * n
        })
        .collect();
    Image {
        width: img.width,
        height: img.height,
        data,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FileKind {
    Pgm,
    Png,
}

fn kind_from_extension(path: &Path) -> Result<FileKind> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") => Ok(FileKind::Pgm),
        Some("png") => Ok(FileKind::Png),
        _ => Err(GsrcError::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "expected a .pgm or .png extension".into(),
        }),
    }
}

/// Loads an 8-bit binary PGM (P5) or an 8-bit grayscale/RGB PNG.
///
/// The format is sniffed from the file's magic bytes. RGB is reduced with
/// BT.601 luma (0.299 R + 0.587 G + 0.114 B); alpha is ignored.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| GsrcError::io(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(path, &bytes)
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(path, &bytes)
    } else if bytes.starts_with(b"P2") {
        Err(GsrcError::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "ASCII PGM (P2) is not supported; use binary P5".into(),
        })
    } else {
        Err(GsrcError::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "not a PGM (P5) or PNG file".into(),
        })
    }
}

fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<Image> {
    let corrupt = |reason: &str| GsrcError::CorruptHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    // Header: magic, width, height, maxval, separated by whitespace and
    // optional `#` comments, followed by exactly one whitespace byte.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(corrupt("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt("expected a decimal number"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).map_err(|_| corrupt("bad number"))?;
        *field = text.parse().map_err(|_| corrupt("number out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(corrupt("missing whitespace after maxval")),
    }

    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(corrupt("zero dimension"));
    }
    if maxval != 255 {
        return Err(GsrcError::UnsupportedBitDepth {
            path: path.to_path_buf(),
            detail: format!("maxval {maxval}, only 255 is supported"),
        });
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    let pixels = bytes
        .get(pos..pos + n)
        .ok_or_else(|| corrupt("pixel data shorter than width*height"))?;
    Image::new(
        width,
        height,
        pixels.iter().map(|&b| f64::from(b)).collect(),
    )
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<Image> {
    use image::{DynamicImage, ImageFormat};

    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| {
        GsrcError::CorruptHeader {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let luma =
        |r: u8, g: u8, b: u8| 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageRgb8(buf) => {
            buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect()
        }
        DynamicImage::ImageRgba8(buf) => {
            buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect()
        }
        other => {
            return Err(GsrcError::UnsupportedBitDepth {
                path: path.to_path_buf(),
                detail: format!("{:?}, only 8-bit channels are supported", other.color()),
            })
        }
    };
    Image::new(width, height, data)
}

/// Writes `img` as P5 PGM or 8-bit PNG depending on the extension.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = img.to_bytes();
    match kind_from_extension(path)? {
        FileKind::Pgm => {
            let file = fs::File::create(path).map_err(|e| GsrcError::io(path, e))?;
            let mut out = BufWriter::new(file);
            write!(out, "P5\n{} {}\n255\n", img.width, img.height)
                .and_then(|_| out.write_all(&bytes))
                .and_then(|_| out.flush())
                .map_err(|e| GsrcError::io(path, e))
        }
        FileKind::Png => {
            let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, bytes)
                .ok_or_else(|| GsrcError::InvalidImage("buffer size mismatch".into()))?;
            buf.save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| GsrcError::io(path, e))
        }
    }
}

/// Magic bytes of the unclamped sidecar format.
pub const RAW_MAGIC: [u8; 8] = *b"GSRCF64\0";

/// Writes the lossless sidecar: 8-byte magic `GSRCF64\0`, width and height as
/// little-endian `u32`, then `width*height` little-endian `f64` in row-major order.
pub fn save_raw(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(16 + 8 * img.data.len());
    buf.extend_from_slice(&RAW_MAGIC);
    buf.extend_from_slice(&(img.width as u32).to_le_bytes());
    buf.extend_from_slice(&(img.height as u32).to_le_bytes());
    for v in &img.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| GsrcError::io(path, e))
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| GsrcError::io(path, e))?;
    let corrupt = |reason: &str| GsrcError::CorruptHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 || bytes[..8] != RAW_MAGIC {
        return Err(corrupt("missing GSRCF64 magic"));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != width * height * 8 {
        return Err(corrupt("payload length does not match dimensions"));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Image::new(width, height, data)
}

/// Loads any supported file: the raw sidecar by magic, otherwise PGM/PNG.
pub fn load_any(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let mut head = [0u8; 8];
    let is_raw = fs::File::open(path)
        .and_then(|mut f| std::io::Read::read_exact(&mut f, &mut head))
        .map(|_| head == RAW_MAGIC)
        .unwrap_or(false);
    if is_raw {
        load_raw(path)
    } else {
        load_image(path)
    }
}
