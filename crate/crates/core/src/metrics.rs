//! MSE, PSNR and box-window SSIM on unclamped intensities.

use crate::error::{GsrcError, Result};
use crate::image::Image;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

const PEAK: f64 = 255.0;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_dims(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// Uniform-window SSIM parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 8,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(GsrcError::InvalidParameter(format!(
                "ssim window must be >= 2, got {}",
                self.window
            )));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(GsrcError::InvalidParameter(
                "ssim k1, k2 and dynamic_range must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Mean SSIM over every fully interior `window × window` box.
///
/// Window statistics use population moments (divide by the pixel count).
pub fn ssim(a: &Image, b: &Image, p: &SsimParams) -> Result<f64> {
    p.validate()?;
    a.check_dims(b)?;
    let (w, h, win) = (a.width(), a.height(), p.window);
    if w < win || h < win {
        return Err(GsrcError::TooSmall {
            width: w,
            height: h,
            side: win,
            what: "ssim window",
        });
    }
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let n = (win * win) as f64;
    let (da, db) = (a.data(), b.data());

    let mut total = 0.0;
    for r0 in 0..=h - win {
        for c0 in 0..=w - win {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + win {
                let row = r * w;
                for idx in row + c0..row + c0 + win {
                    let (x, y) = (da[idx], db[idx]);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    let windows = ((h - win + 1) * (w - win + 1)) as f64;
    Ok(total / windows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, data: &[f64]) -> Image {
        Image::new(w, h, data.to_vec()).unwrap()
    }

    #[test]
    fn mse_examples() {
        assert_eq!(
            mse(&img(2, 1, &[0.0, 0.0]), &img(2, 1, &[3.0, 4.0])).unwrap(),
            12.5
        );
        let a = Image::filled(4, 4, 10.0).unwrap();
        let b = Image::filled(4, 4, 26.0).unwrap();
        assert_eq!(mse(&a, &b).unwrap(), 256.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let a = Image::filled(4, 4, 0.0).unwrap();
        let b = Image::filled(4, 5, 0.0).unwrap();
        assert!(matches!(
            mse(&a, &b),
            Err(GsrcError::DimensionMismatch { .. })
        ));
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b, &SsimParams::default()).is_err());
    }

    #[test]
    fn psnr_closed_forms() {
        let a = Image::filled(4, 4, 10.0).unwrap();
        let b = Image::filled(4, 4, 26.0).unwrap();
        // 10·log10(65025 / 256)
        assert!((psnr(&a, &b).unwrap() - 24.048404).abs() < 1e-6);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        assert_eq!(psnr_from_mse(65025.0), 0.0);
    }

    #[test]
    fn psnr_monotone_in_mse() {
        let mut last = f64::INFINITY;
        for m in [0.5, 1.0, 4.0, 100.0, 1e4] {
            let v = psnr_from_mse(m);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn ssim_of_opposing_constants_is_tiny() {
        let p = SsimParams::default();
        let a = Image::filled(16, 16, 0.0).unwrap();
        let b = Image::filled(16, 16, 255.0).unwrap();
        // Both windows flat: luminance term only, C1 / (255² + C1).
        let c1 = (0.01f64 * 255.0).powi(2);
        let expected = c1 / (255.0 * 255.0 + c1);
        let got = ssim(&a, &b, &p).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!(got < 0.01);
    }

    #[test]
    fn ssim_identity_and_negation() {
        let a = Image::from_fn(20, 17, |r, c| ((r * 31 + c * 17) % 256) as f64).unwrap();
        let p = SsimParams::default();
        assert_eq!(ssim(&a, &a, &p).unwrap(), 1.0);
        let neg = Image::from_fn(20, 17, |r, c| 255.0 - a.get(r, c)).unwrap();
        assert!(ssim(&a, &neg, &p).unwrap() < 0.0);
    }

    #[test]
    fn ssim_rejects_small_images_and_bad_params() {
        let a = Image::filled(5, 5, 1.0).unwrap();
        assert!(matches!(
            ssim(&a, &a, &SsimParams::default()),
            Err(GsrcError::TooSmall { .. })
        ));
        let bad = SsimParams {
            k1: 0.0,
            ..SsimParams::default()
        };
        assert!(ssim(&a, &a, &bad).is_err());
    }
}
