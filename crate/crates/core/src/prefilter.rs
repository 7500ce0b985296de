//! Guide image production: external pre-filter outputs or a built-in
//! overlapping block-DCT hard-threshold filter.

use std::path::PathBuf;

use nalgebra::DMatrix;

use crate::error::{GsrcError, Result};
use crate::image::{load_any, Image};
use crate::patch::{exemplar_grid, Aggregator, PatchIndex};

/// Classical hard-threshold multiple of sigma for transform-domain denoising.
pub const DEFAULT_DCT_THRESHOLD_FACTOR: f64 = 2.7;
pub const DEFAULT_DCT_BLOCK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum PrefilterSpec {
    /// Use an image produced elsewhere (e.g. a BM3D or EPLL result).
    External(PathBuf),
    BlockDct {
        block: usize,
        threshold_factor: f64,
    },
}

impl Default for PrefilterSpec {
    fn default() -> Self {
        PrefilterSpec::BlockDct {
            block: DEFAULT_DCT_BLOCK,
            threshold_factor: DEFAULT_DCT_THRESHOLD_FACTOR,
        }
    }
}

impl PrefilterSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PrefilterSpec::External(path) if path.as_os_str().is_empty() => Err(
                GsrcError::InvalidParameter("external prefilter needs a path".into()),
            ),
            PrefilterSpec::External(_) => Ok(()),
            PrefilterSpec::BlockDct {
                block,
                threshold_factor,
            } => {
                if *block < 4 {
                    return Err(GsrcError::InvalidParameter(format!(
                        "dct block must be >= 4, got {block}"
                    )));
                }
                if !(*threshold_factor > 0.0) {
                    return Err(GsrcError::InvalidParameter(format!(
                        "dct threshold factor must be > 0, got {threshold_factor}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Short tag used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            PrefilterSpec::External(_) => "external",
            PrefilterSpec::BlockDct { .. } => "dct",
        }
    }
}

pub fn prefilter(noisy: &Image, spec: &PrefilterSpec, sigma: f64) -> Result<Image> {
    spec.validate()?;
    match spec {
        PrefilterSpec::External(path) => {
            let guide = load_any(path)?;
            noisy.check_dims(&guide)?;
            Ok(guide)
        }
        PrefilterSpec::BlockDct {
            block,
            threshold_factor,
        } => block_dct_denoise(noisy, *block, threshold_factor * sigma),
    }
}

/// Orthonormal DCT-II matrix: row `u` holds basis function `u`.
pub fn dct_matrix(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |u, x| {
        let alpha = if u == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        alpha * (std::f64::consts::PI * (2.0 * x as f64 + 1.0) * u as f64 / (2.0 * nf)).cos()
    })
}

/// Sliding block DCT at half-block stride; non-DC coefficients with magnitude
/// below `threshold` are zeroed and overlapping reconstructions averaged.
pub fn block_dct_denoise(noisy: &Image, block: usize, threshold: f64) -> Result<Image> {
    let (w, h) = (noisy.width(), noisy.height());
    let positions = exemplar_grid(w, h, block, (block / 2).max(1))?;
    let dct = dct_matrix(block);
    let mut acc = Aggregator::new(w, h, block)?;
    let mut patch = DMatrix::zeros(block, block);
    for &PatchIndex { row, col } in &positions {
        for c in 0..block {
            for r in 0..block {
                patch[(r, c)] = noisy.get(row + r, col + c);
            }
        }
        let mut coeffs = &dct * &patch * dct.transpose();
        for (i, v) in coeffs.iter_mut().enumerate() {
            if i != 0 && v.abs() < threshold {
                *v = 0.0;
            }
        }
        let restored = dct.transpose() * coeffs * &dct;
        // Column-major storage matches the patch vectorization order.
        let column = DMatrix::from_column_slice(block * block, 1, restored.as_slice());
        acc.add(&[PatchIndex { row, col }], &column)?;
    }
    acc.finish()
}
