//! The outer denoising loop: iterative regularization, noise re-estimation,
//! adaptive patch search and per-group residual shrinkage.

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{GsrcError, Result};
use crate::image::Image;
use crate::metrics::{mse, psnr, ssim, SsimParams};
use crate::patch::{exemplar_grid, extract_group, knn_search, Aggregator, PatchIndex};
use crate::sparse::{
    compute_lambdas, decode, encode, estimate_group_sigma, estimate_row_sigmas, gsrc_shrink,
    learn_pca_dictionary, GroupCode, LambdaSchedule,
};

/// Which parameter column of the schedule to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefilterKind {
    Bm3dLike,
    EpllLike,
    /// The built-in block-DCT filter; weaker than the other two, so it
    /// gets larger thresholds.
    BlockDct,
}

impl FromStr for PrefilterKind {
    type Err = GsrcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm3d" | "bm3d-like" => Ok(PrefilterKind::Bm3dLike),
            "epll" | "epll-like" => Ok(PrefilterKind::EpllLike),
            "dct" | "block-dct" => Ok(PrefilterKind::BlockDct),
            other => Err(GsrcError::InvalidParameter(format!(
                "unknown prefilter kind '{other}' (expected bm3d, epll or dct)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaGranularity {
    /// One threshold per dictionary atom, from that row's residual spread.
    PerRow,
    /// One threshold per group, from the spread of all residual entries.
    PerGroup,
}

impl FromStr for LambdaGranularity {
    type Err = GsrcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-row" | "row" => Ok(LambdaGranularity::PerRow),
            "per-group" | "group" => Ok(LambdaGranularity::PerGroup),
            other => Err(GsrcError::InvalidParameter(format!(
                "unknown lambda granularity '{other}'"
            ))),
        }
    }
}

/// Which spread sets the per-row scale `σ_r` in the threshold `c·2√2·σ_l²/σ_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualSpread {
    /// Deviation of the guide code `B`: atoms the guide barely uses get large
    /// thresholds.
    GuideCode,
    /// Deviation of the observed residual `Dᵀ(y − m) − B`.
    Observed,
}

impl FromStr for ResidualSpread {
    type Err = GsrcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "guide" | "guide-code" => Ok(ResidualSpread::GuideCode),
            "observed" | "residual" => Ok(ResidualSpread::Observed),
            other => Err(GsrcError::InvalidParameter(format!(
                "unknown residual spread '{other}' (expected guide or observed)"
            ))),
        }
    }
}

/// How the similar-patch search target is chosen each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApsMode {
    /// Guide on the first iteration, then the SSIM-difference rule.
    Adaptive,
    /// Always search on the guide.
    GuideOnly,
    /// Always search on the current regularized iterate (no adaptive search).
    IterateOnly,
}

impl FromStr for ApsMode {
    type Err = GsrcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" | "on" => Ok(ApsMode::Adaptive),
            "guide" => Ok(ApsMode::GuideOnly),
            "iterate" | "off" => Ok(ApsMode::IterateOnly),
            other => Err(GsrcError::InvalidParameter(format!(
                "unknown APS mode '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchTarget {
    Guide,
    Iterate,
}

impl fmt::Display for SearchTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchTarget::Guide => "guide",
            SearchTarget::Iterate => "iterate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    /// Noise standard deviation of the input, on the 0–255 scale.
    pub sigma: f64,
    pub c: f64,
    /// Iterative-regularization step.
    pub delta: f64,
    /// Noise re-estimation factor.
    pub gamma: f64,
    /// Adaptive patch search threshold on the SSIM difference.
    pub tau: f64,
    pub iterations: usize,
    pub patch_side: usize,
    pub group_size: usize,
    pub window: usize,
    pub stride: usize,
    pub lambda_granularity: LambdaGranularity,
    pub spread: ResidualSpread,
    /// Floor for residual deviations.
    pub epsilon: f64,
    pub aps: ApsMode,
    /// Stop once the MSE between successive estimates drops below this; 0 disables.
    pub early_stop: f64,
    pub ssim: SsimParams,
}

/// Row of the (c, δ, γ, τ) schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ScheduleRow {
    upper: f64,
    bm3d: [f64; 4],
    epll: [f64; 4],
    /// Only `c` differs from the bm3d column.
    dct_c: f64,
}

const SCHEDULE: [ScheduleRow; 6] = [
    ScheduleRow {
        upper: 20.0,
        bm3d: [0.2, 0.2, 0.7, 1e-4],
        epll: [0.3, 0.1, 0.5, 5e-4],
        dct_c: 0.5,
    },
    ScheduleRow {
        upper: 30.0,
        bm3d: [0.4, 0.1, 0.5, 7e-4],
        epll: [0.3, 0.1, 0.5, 5e-4],
        dct_c: 0.7,
    },
    ScheduleRow {
        upper: 40.0,
        bm3d: [0.2, 0.2, 0.7, 6e-5],
        epll: [0.3, 0.1, 0.5, 6e-4],
        dct_c: 0.9,
    },
    ScheduleRow {
        upper: 50.0,
        bm3d: [0.5, 0.1, 0.4, 6e-5],
        epll: [0.5, 0.1, 0.4, 4e-4],
        dct_c: 1.1,
    },
    ScheduleRow {
        upper: 75.0,
        bm3d: [0.9, 0.1, 0.3, 6e-5],
        epll: [0.9, 0.1, 0.3, 1e-4],
        dct_c: 2.0,
    },
    ScheduleRow {
        upper: 100.0,
        bm3d: [1.0, 0.1, 0.3, 2e-4],
        epll: [0.9, 0.1, 0.3, 2e-4],
        dct_c: 2.4,
    },
];

pub const DEFAULT_ITERATIONS: usize = 8;
pub const DEFAULT_STRIDE: usize = 4;
pub const DEFAULT_WINDOW: usize = 30;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_EARLY_STOP: f64 = 1e-4;

/// Parameter schedule for a noise level and pre-filter family.
pub fn default_config(sigma: f64, kind: PrefilterKind) -> Result<DenoiseConfig> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(GsrcError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if sigma > 100.0 {
        warn!("sigma {sigma} is above the tuned range; reusing the sigma <= 100 parameters");
    }
    let row = SCHEDULE
        .iter()
        .find(|r| sigma <= r.upper)
        .unwrap_or(&SCHEDULE[SCHEDULE.len() - 1]);
    let [c, delta, gamma, tau] = match kind {
        PrefilterKind::Bm3dLike => row.bm3d,
        PrefilterKind::EpllLike => row.epll,
        PrefilterKind::BlockDct => {
            let [_, d, g, t] = row.bm3d;
            [row.dct_c, d, g, t]
        }
    };
    let patch_side = match sigma {
        s if s <= 20.0 => 6,
        s if s <= 50.0 => 7,
        s if s <= 75.0 => 8,
        _ => 9,
    };
    let group_size = match sigma {
        s if s <= 50.0 => 60,
        s if s <= 75.0 => 80,
        _ => 90,
    };
    Ok(DenoiseConfig {
        sigma,
        c,
        delta,
        gamma,
        tau,
        iterations: DEFAULT_ITERATIONS,
        patch_side,
        group_size,
        window: DEFAULT_WINDOW,
        stride: DEFAULT_STRIDE,
        lambda_granularity: LambdaGranularity::PerRow,
        spread: ResidualSpread::GuideCode,
        epsilon: DEFAULT_EPSILON,
        aps: ApsMode::Adaptive,
        early_stop: DEFAULT_EARLY_STOP,
        ssim: SsimParams::default(),
    })
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GsrcError::InvalidParameter(msg));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad(format!("c must be >= 0, got {}", self.c));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad(format!("delta must lie in [0, 1], got {}", self.delta));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.patch_side == 0 || self.group_size == 0 || self.stride == 0 {
            return bad("patch side, group size and stride must be >= 1".into());
        }
        if self.window < self.patch_side {
            return bad(format!(
                "search window {} is smaller than patch side {}",
                self.window, self.patch_side
            ));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.early_stop >= 0.0) {
            return bad(format!(
                "early stop tolerance must be >= 0, got {}",
                self.early_stop
            ));
        }
        self.ssim.validate()
    }
}

/// Loop state carried between iterations.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub y_reg: Image,
    pub x_hat: Image,
    pub sigma_l: f64,
    pub ssim_prev: Option<f64>,
    pub aps_target: SearchTarget,
}

/// `x_hat + delta · (y − x_hat)`.
pub fn iterative_regularize(y: &Image, x_hat: &Image, delta: f64) -> Result<Image> {
    x_hat.zip_map(y, |x, y| x + delta * (y - x))
}

/// `gamma · sqrt(max(sigma0² − mse(y, x_hat), 0))`, with the squared norm
/// taken per pixel.
pub fn reestimate_sigma(sigma0: f64, y: &Image, x_hat: &Image, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(GsrcError::InvalidParameter(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    let residual = mse(y, x_hat)?;
    Ok(gamma * (sigma0 * sigma0 - residual).max(0.0).sqrt())
}

fn decide(ssim_next: f64, ssim_curr: f64, tau: f64) -> SearchTarget {
    if ssim_next - ssim_curr < tau {
        SearchTarget::Iterate
    } else {
        SearchTarget::Guide
    }
}

/// Adaptive patch search: the guide on the first iteration; afterwards the
/// iterate when `SSIM(y_next, z) − SSIM(y_curr, z) < tau`, else the guide.
pub fn aps_select(
    z: &Image,
    y_next: &Image,
    y_curr: &Image,
    tau: f64,
    first_iteration: bool,
) -> Result<SearchTarget> {
    z.check_dims(y_next)?;
    z.check_dims(y_curr)?;
    if first_iteration {
        return Ok(SearchTarget::Guide);
    }
    let p = SsimParams::default();
    Ok(decide(ssim(y_next, z, &p)?, ssim(y_curr, z, &p)?, tau))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub sigma_l: f64,
    pub aps_target: SearchTarget,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DenoiseOutput {
    pub image: Image,
    pub log: Vec<IterationLog>,
}

/// CSV rendering of an iteration log; metrics are empty without a reference.
pub fn log_to_csv(log: &[IterationLog]) -> String {
    let mut out = String::from("iteration,sigma_l,aps_target,psnr,ssim\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for entry in log {
        out.push_str(&format!(
            "{},{:.6},{},{},{}\n",
            entry.iteration,
            entry.sigma_l,
            entry.aps_target,
            opt(entry.psnr),
            opt(entry.ssim)
        ));
    }
    out
}

/// Which residual to pool when inspecting code statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    /// `A − B` with `A` the shrunk code actually used for reconstruction.
    Shrunk,
    /// `Dᵀ(y − mean) − B`, before shrinkage.
    Raw,
}

impl FromStr for ResidualKind {
    type Err = GsrcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shrunk" => Ok(ResidualKind::Shrunk),
            "raw" => Ok(ResidualKind::Raw),
            other => Err(GsrcError::InvalidParameter(format!(
                "unknown residual kind '{other}' (expected shrunk or raw)"
            ))),
        }
    }
}

const CHUNK: usize = 256;

struct GroupResult {
    members: Vec<PatchIndex>,
    restored: DMatrix<f64>,
    residual: Option<Vec<f64>>,
}

fn process_group(
    exemplar: PatchIndex,
    data: &Image,
    guide: &Image,
    target: &Image,
    sched: &LambdaSchedule,
    cfg: &DenoiseConfig,
    capture: Option<ResidualKind>,
) -> Result<GroupResult> {
    let side = cfg.patch_side;
    let members = knn_search(target, exemplar, cfg.group_size, side, cfg.window)?;
    let noisy_group = extract_group(data, &members, side)?;
    let guide_group = extract_group(guide, &members, side)?;
    let dict = learn_pca_dictionary(&noisy_group.matrix)?;
    let current = encode(&dict, &noisy_group.matrix)?;
    let guide_code = encode(&dict, &guide_group.matrix)?;
    let zero;
    let (spread_of, relative_to) = match cfg.spread {
        ResidualSpread::Observed => (&current, &guide_code),
        ResidualSpread::GuideCode => {
            let (r, c) = guide_code.shape();
            zero = GroupCode(DMatrix::zeros(r, c));
            (&guide_code, &zero)
        }
    };
    let sigmas = match cfg.lambda_granularity {
        LambdaGranularity::PerRow => estimate_row_sigmas(spread_of, relative_to, cfg.epsilon)?,
        LambdaGranularity::PerGroup => estimate_group_sigma(spread_of, relative_to, cfg.epsilon)?,
    };
    let lambdas = compute_lambdas(sched, &sigmas)?;
    let shrunk = gsrc_shrink(&current, &guide_code, &lambdas)?;
    let exemplar_residual = |code: &GroupCode| -> Vec<f64> {
        code.0
            .column(0)
            .iter()
            .zip(guide_code.0.column(0).iter())
            .map(|(a, b)| a - b)
            .collect()
    };
    let residual = capture.map(|kind| match kind {
        ResidualKind::Shrunk => exemplar_residual(&shrunk),
        ResidualKind::Raw => exemplar_residual(&current),
    });
    let restored = decode(&dict, &shrunk)?;
    Ok(GroupResult {
        members,
        restored,
        residual,
    })
}

/// One pass over all exemplar groups. Groups are computed in parallel and
/// aggregated in exemplar order, so the result does not depend on thread count.
fn group_pass(
    data: &Image,
    guide: &Image,
    target: &Image,
    sigma_l: f64,
    cfg: &DenoiseConfig,
    capture: Option<ResidualKind>,
) -> Result<(Image, Vec<f64>)> {
    let (w, h) = (data.width(), data.height());
    let exemplars = exemplar_grid(w, h, cfg.patch_side, cfg.stride)?;
    let sched = LambdaSchedule::new(cfg.c, sigma_l, cfg.epsilon)?;
    let mut acc = Aggregator::new(w, h, cfg.patch_side)?;
    let mut residuals = Vec::new();
    for chunk in exemplars.chunks(CHUNK) {
        let results: Vec<GroupResult> = chunk
            .par_iter()
            .map(|&ex| process_group(ex, data, guide, target, &sched, cfg, capture))
            .collect::<Result<_>>()?;
        for r in results {
            acc.add(&r.members, &r.restored)?;
            if let Some(res) = r.residual {
                residuals.extend(res);
            }
        }
    }
    Ok((acc.finish()?, residuals))
}

/// Runs the full iterative scheme on noisy `y` with guide `z`.
///
/// When `reference` is given, each log entry carries PSNR/SSIM of the
/// iteration's estimate against it.
pub fn denoise(
    y: &Image,
    z: &Image,
    cfg: &DenoiseConfig,
    reference: Option<&Image>,
) -> Result<DenoiseOutput> {
    cfg.validate()?;
    y.check_dims(z)?;
    if let Some(r) = reference {
        y.check_dims(r)?;
    }
    if cfg.patch_side > y.width().min(y.height()) {
        return Err(GsrcError::TooSmall {
            width: y.width(),
            height: y.height(),
            side: cfg.patch_side,
            what: "patch",
        });
    }
    let ssim_usable = y.width() >= cfg.ssim.window && y.height() >= cfg.ssim.window;

    let mut state = IterationState {
        y_reg: y.clone(),
        x_hat: y.clone(),
        sigma_l: cfg.sigma,
        ssim_prev: None,
        aps_target: SearchTarget::Guide,
    };
    let mut log = Vec::with_capacity(cfg.iterations);

    for iteration in 1..=cfg.iterations {
        let y_next = iterative_regularize(y, &state.x_hat, cfg.delta)?;
        let sigma_l = reestimate_sigma(cfg.sigma, y, &state.x_hat, cfg.gamma)?;

        let mut ssim_next = None;
        let target = match cfg.aps {
            ApsMode::GuideOnly => SearchTarget::Guide,
            ApsMode::IterateOnly => SearchTarget::Iterate,
            ApsMode::Adaptive if iteration == 1 || !ssim_usable => SearchTarget::Guide,
            ApsMode::Adaptive => {
                let prev = match state.ssim_prev {
                    Some(v) => v,
                    None => ssim(&state.y_reg, z, &cfg.ssim)?,
                };
                let next = ssim(&y_next, z, &cfg.ssim)?;
                ssim_next = Some(next);
                decide(next, prev, cfg.tau)
            }
        };
        if cfg.aps == ApsMode::Adaptive && ssim_usable && ssim_next.is_none() {
            ssim_next = Some(ssim(&y_next, z, &cfg.ssim)?);
        }

        let search_on = match target {
            SearchTarget::Guide => z,
            SearchTarget::Iterate => &y_next,
        };
        let (x_new, _) = group_pass(&y_next, z, search_on, sigma_l, cfg, None)?;

        let (p, s) = match reference {
            Some(r) if ssim_usable => (Some(psnr(&x_new, r)?), Some(ssim(&x_new, r, &cfg.ssim)?)),
            Some(r) => (Some(psnr(&x_new, r)?), None),
            None => (None, None),
        };
        log.push(IterationLog {
            iteration,
            sigma_l,
            aps_target: target,
            psnr: p,
            ssim: s,
        });

        let change = mse(&x_new, &state.x_hat)?;
        state = IterationState {
            y_reg: y_next,
            x_hat: x_new,
            sigma_l,
            ssim_prev: ssim_next,
            aps_target: target,
        };
        if change < cfg.early_stop {
            break;
        }
    }

    Ok(DenoiseOutput {
        image: state.x_hat,
        log,
    })
}

/// Pooled exemplar-column residuals of the first iteration's groups.
pub fn first_iteration_residuals(
    y: &Image,
    z: &Image,
    cfg: &DenoiseConfig,
    kind: ResidualKind,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    y.check_dims(z)?;
    let y_next = iterative_regularize(y, y, cfg.delta)?;
    let sigma_l = reestimate_sigma(cfg.sigma, y, y, cfg.gamma)?;
    let target = match cfg.aps {
        ApsMode::IterateOnly => &y_next,
        _ => z,
    };
    let (_, residuals) = group_pass(&y_next, z, target, sigma_l, cfg, Some(kind))?;
    Ok(residuals)
}
