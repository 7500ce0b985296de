//! Pooled statistics of group sparsity residuals: histogram, Gaussian and
//! Laplacian maximum-likelihood fits, and excess kurtosis.

use std::f64::consts::PI;

use crate::error::{GsrcError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub mean: f64,
    pub std: f64,
}

impl GaussianFit {
    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        (-0.5 * z * z).exp() / (self.std * (2.0 * PI).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacianFit {
    pub median: f64,
    /// Mean absolute deviation from the median (the ML scale).
    pub scale: f64,
}

impl LaplacianFit {
    pub fn pdf(&self, x: f64) -> f64 {
        (-(x - self.median).abs() / self.scale).exp() / (2.0 * self.scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Samples that fell outside `[lo, hi]`.
    pub outside: u64,
    pub n: u64,
    pub gaussian: GaussianFit,
    pub laplacian: LaplacianFit,
    /// `None` when the sample has zero variance.
    pub excess_kurtosis: Option<f64>,
    pub gaussian_loglik: Option<f64>,
    pub laplacian_loglik: Option<f64>,
}

impl ResidualHistogram {
    pub fn degenerate(&self) -> bool {
        self.excess_kurtosis.is_none()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.bin_width()
    }

    /// Expected bin counts under each fit: `n · width · pdf(center)`.
    pub fn fitted_counts(&self, i: usize) -> (f64, f64) {
        if self.degenerate() {
            return (0.0, 0.0);
        }
        let x = self.bin_center(i);
        let mass = self.n as f64 * self.bin_width();
        (mass * self.gaussian.pdf(x), mass * self.laplacian.pdf(x))
    }

    /// CSV with header `bin_center,count,gaussian_fit,laplacian_fit`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center,count,gaussian_fit,laplacian_fit\n");
        for (i, count) in self.counts.iter().enumerate() {
            let (g, l) = self.fitted_counts(i);
            out.push_str(&format!(
                "{:.6},{},{:.6},{:.6}\n",
                self.bin_center(i),
                count,
                g,
                l
            ));
        }
        out
    }
}

pub fn residual_histogram<I>(
    residuals: I,
    bins: usize,
    range: (f64, f64),
) -> Result<ResidualHistogram>
where
    I: IntoIterator<Item = f64>,
{
    let (lo, hi) = range;
    if bins < 2 {
        return Err(GsrcError::InvalidParameter("need at least 2 bins".into()));
    }
    if !(lo < hi) {
        return Err(GsrcError::InvalidParameter(format!(
            "histogram range must satisfy lo < hi, got ({lo}, {hi})"
        )));
    }
    let mut samples: Vec<f64> = residuals.into_iter().collect();
    if samples.is_empty() {
        return Err(GsrcError::EmptySample);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(GsrcError::NonFinite("residual sample"));
    }

    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut outside = 0;
    for &x in &samples {
        if x < lo || x > hi {
            outside += 1;
        } else {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
    }

    let nf = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let std = m2.sqrt();

    samples.sort_unstable_by(f64::total_cmp);
    let n = samples.len();
    let median = if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    };
    let scale = samples.iter().map(|x| (x - median).abs()).sum::<f64>() / nf;

    let degenerate = m2 == 0.0 || scale == 0.0;
    let (excess_kurtosis, gaussian_loglik, laplacian_loglik) = if degenerate {
        (None, None, None)
    } else {
        (
            Some(m4 / (m2 * m2) - 3.0),
            // Both at their ML parameters, so the sums collapse to closed forms.
            Some(-0.5 * nf * ((2.0 * PI * m2).ln() + 1.0)),
            Some(-nf * ((2.0 * scale).ln() + 1.0)),
        )
    };

    Ok(ResidualHistogram {
        lo,
        hi,
        counts,
        outside,
        n: n as u64,
        gaussian: GaussianFit { mean, std },
        laplacian: LaplacianFit { median, scale },
        excess_kurtosis,
        gaussian_loglik,
        laplacian_loglik,
    })
}
