use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use gsrc_core::{
    add_awgn, default_config, denoise, first_iteration_residuals, load_any, log_to_csv, prefilter,
    psnr, residual_histogram, save_image, save_raw, ssim, DenoiseConfig, GsrcError, Image,
    NoiseSpec, PrefilterKind, PrefilterSpec, SsimParams,
};

use crate::args::{
    AddNoiseArgs, BuiltinFilter, ConfigArgs, DctArgs, DenoiseArgs, GuideArgs, MetricsArgs,
    PrefilterArgs, ResidualHistArgs,
};

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flag values or configuration (exit 2).
    Usage(String),
    /// Anything that went wrong while running (exit 1).
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<GsrcError> for Failure {
    fn from(e: GsrcError) -> Self {
        match e {
            GsrcError::InvalidParameter(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

pub type CmdResult = std::result::Result<(), Failure>;

/// Writes `img` as PGM/PNG, or as the unclamped sidecar for a `.f64` path.
pub fn write_image(img: &Image, path: &Path) -> gsrc_core::Result<()> {
    if path.extension().is_some_and(|e| e == "f64") {
        save_raw(img, path)
    } else {
        save_image(img, path)
    }
}

fn write_text(path: &Path, text: &str) -> std::result::Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn sidecar_path(out: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| out.with_extension("f64"))
}

pub fn add_noise(args: &AddNoiseArgs) -> CmdResult {
    let spec = NoiseSpec::new(args.sigma, args.seed)?;
    let clean = load_any(&args.input)?;
    let noisy = add_awgn(&clean, spec);
    write_image(&noisy, &args.out)?;
    if args.out.extension().is_none_or(|e| e != "f64") {
        save_raw(&noisy, sidecar_path(&args.out, &args.raw_out))?;
    }
    Ok(())
}

fn dct_spec(dct: &DctArgs) -> PrefilterSpec {
    PrefilterSpec::BlockDct {
        block: dct.dct_block,
        threshold_factor: dct.dct_threshold,
    }
}

fn check_sigma(sigma: f64) -> CmdResult {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "--sigma must be positive, got {sigma}"
        )))
    }
}

pub fn prefilter_cmd(args: &PrefilterArgs) -> CmdResult {
    check_sigma(args.sigma)?;
    let spec = dct_spec(&args.dct);
    spec.validate()?;
    let noisy = load_any(&args.input)?;
    let guide = prefilter(&noisy, &spec, args.sigma)?;
    write_image(&guide, &args.out)?;
    if let Some(raw) = &args.raw_out {
        save_raw(&guide, raw)?;
    }
    Ok(())
}

/// Resolves the guide and the schedule column that goes with it.
pub fn resolve_guide(
    noisy: &Image,
    sigma: f64,
    args: &GuideArgs,
) -> std::result::Result<(Image, PrefilterKind), Failure> {
    let (spec, default_kind) = match (&args.guide, args.prefilter) {
        (Some(path), _) => (
            PrefilterSpec::External(path.clone()),
            PrefilterKind::Bm3dLike,
        ),
        (None, Some(BuiltinFilter::Dct)) => (dct_spec(&args.dct), PrefilterKind::BlockDct),
        (None, None) => return Err(Failure::Usage("need --guide or --prefilter".into())),
    };
    spec.validate()?;
    let guide = prefilter(noisy, &spec, sigma)?;
    Ok((guide, args.schedule.unwrap_or(default_kind)))
}

/// Schedule defaults for `sigma`, then the explicit overrides.
pub fn build_config(
    sigma: f64,
    kind: PrefilterKind,
    o: &ConfigArgs,
) -> std::result::Result<DenoiseConfig, Failure> {
    let mut cfg = default_config(sigma, kind)?;
    macro_rules! apply {
        ($($field:ident),*) => { $( if let Some(v) = o.$field { cfg.$field = v; } )* };
    }
    apply!(
        c, delta, gamma, tau, iterations, patch_side, group_size, window, stride, spread, epsilon,
        aps, early_stop
    );
    if let Some(v) = o.lambda {
        cfg.lambda_granularity = v;
    }
    if let Some(v) = o.ssim_window {
        cfg.ssim.window = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn denoise_cmd(args: &DenoiseArgs) -> CmdResult {
    check_sigma(args.sigma)?;
    let noisy = load_any(&args.input)?;
    let (guide, kind) = resolve_guide(&noisy, args.sigma, &args.guide)?;
    let cfg = build_config(args.sigma, kind, &args.config)?;
    let reference = args.reference.as_ref().map(load_any).transpose()?;
    let out = denoise(&noisy, &guide, &cfg, reference.as_ref())?;
    write_image(&out.image, &args.out)?;
    if let Some(raw) = &args.raw_out {
        save_raw(&out.image, raw)?;
    }
    if let Some(path) = &args.log {
        write_text(path, &log_to_csv(&out.log))?;
    }
    if let Some(r) = &reference {
        println!(
            "psnr={:.6} ssim={:.6}",
            psnr(&out.image, r)?,
            ssim(&out.image, r, &cfg.ssim)?
        );
    }
    Ok(())
}

pub fn metrics_cmd(args: &MetricsArgs) -> CmdResult {
    let params = SsimParams {
        window: args.ssim_window,
        ..SsimParams::default()
    };
    params.validate()?;
    let a = load_any(&args.input)?;
    let b = load_any(&args.reference)?;
    println!(
        "psnr={:.6} ssim={:.6}",
        psnr(&a, &b)?,
        ssim(&a, &b, &params)?
    );
    Ok(())
}

pub fn residual_hist_cmd(args: &ResidualHistArgs) -> CmdResult {
    check_sigma(args.sigma)?;
    if let Some(l) = args.limit {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Failure::Usage(format!("--limit must be positive, got {l}")));
        }
    }
    let noisy = load_any(&args.input)?;
    let (guide, kind) = resolve_guide(&noisy, args.sigma, &args.guide)?;
    let cfg = build_config(args.sigma, kind, &args.config)?;
    let residuals = first_iteration_residuals(&noisy, &guide, &cfg, args.kind)?;
    let limit = args.limit.unwrap_or_else(|| {
        let n = residuals.len().max(1) as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let sd = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            5.0 * sd
        } else {
            1.0
        }
    });
    let hist = residual_histogram(residuals.iter().copied(), args.bins, (-limit, limit))?;
    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"));
    let summary = format!(
        "n={} outside={} excess_kurtosis={} gaussian_loglik={} laplacian_loglik={}",
        hist.n,
        hist.outside,
        fmt_opt(hist.excess_kurtosis),
        fmt_opt(hist.gaussian_loglik),
        fmt_opt(hist.laplacian_loglik)
    );
    match &args.out {
        Some(path) => {
            write_text(path, &hist.to_csv())?;
            println!("{summary}");
        }
        None => {
            print!("{}", hist.to_csv());
            eprintln!("{summary}");
        }
    }
    Ok(())
}
