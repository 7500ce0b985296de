//! Grayscale image denoising by group sparsity residual constraint.
//!
//! Noisy patch groups are coded under per-group PCA dictionaries and their
//! codes are soft-thresholded toward the codes of the same patches taken from
//! a pre-filtered guide image. The outer loop adds iterative regularization,
//! noise re-estimation and an SSIM-driven choice of the patch search image.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod image;
pub mod metrics;
pub mod patch;
pub mod pipeline;
pub mod prefilter;
pub mod residual;
pub mod sparse;

pub use error::{GsrcError, Result};
pub use image::{add_awgn, load_any, load_image, load_raw, save_image, save_raw, Image, NoiseSpec};
pub use metrics::{mse, psnr, ssim, SsimParams, PSNR_CAP_DB};
pub use patch::{aggregate, exemplar_grid, extract_group, knn_search, PatchGroup, PatchIndex};
pub use pipeline::{
    aps_select, default_config, denoise, first_iteration_residuals, iterative_regularize,
    log_to_csv, reestimate_sigma, ApsMode, DenoiseConfig, DenoiseOutput, IterationLog,
    IterationState, LambdaGranularity, PrefilterKind, ResidualKind, ResidualSpread, SearchTarget,
};
pub use prefilter::{prefilter, PrefilterSpec};
pub use residual::{residual_histogram, ResidualHistogram};
pub use sparse::{
    compute_lambdas, decode, encode, estimate_row_sigmas, gsrc_shrink, learn_pca_dictionary,
    soft_threshold, Dictionary, GroupCode, LambdaSchedule,
};
