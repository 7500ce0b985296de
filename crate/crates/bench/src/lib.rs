//! Fixtures shared by the benchmarks.

use gsrc_core::{add_awgn, prefilter, Image, NoiseSpec, PrefilterSpec};

/// Smooth gradients plus a few edges, so patch search has structure to find.
pub fn synthetic(width: usize, height: usize) -> Image {
    Image::from_fn(width, height, |r, c| {
        let (x, y) = (c as f64 / width as f64, r as f64 / height as f64);
        let base = 60.0 + 120.0 * x * y + 30.0 * (12.0 * x).sin();
        if (r / 16 + c / 16) % 3 == 0 {
            base + 40.0
        } else {
            base
        }
    })
    .expect("fixture dimensions are non-zero")
}

/// `(clean, noisy, guide)` at noise level `sigma`.
pub fn noisy_case(width: usize, height: usize, sigma: f64) -> (Image, Image, Image) {
    let clean = synthetic(width, height);
    let noisy = add_awgn(&clean, NoiseSpec::new(sigma, 7).expect("valid sigma"));
    let guide = prefilter(&noisy, &PrefilterSpec::default(), sigma).expect("prefilter");
    (clean, noisy, guide)
}
