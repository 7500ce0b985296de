//! Image × noise-level sweeps with CSV and Markdown reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gsrc_core::{
    add_awgn, default_config, denoise, load_any, prefilter, psnr, save_raw, ssim, ApsMode, Image,
    NoiseSpec, PrefilterKind, PrefilterSpec,
};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::args::BenchArgs;
use crate::commands::{CmdResult, Failure};

#[derive(Debug, Clone, PartialEq)]
pub enum GuideSource {
    Dct,
    /// Directory holding `<stem>_s<sigma>.{f64,pgm,png}`.
    Dir(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub images: Vec<PathBuf>,
    pub sigmas: Vec<f64>,
    pub seed: u64,
    pub guide: GuideSource,
    pub schedule: Option<PrefilterKind>,
    pub iterations: Option<usize>,
    pub aps_ablation: bool,
    pub output: PathBuf,
    pub write_noisy: Option<PathBuf>,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse_guide(s: &str) -> Result<GuideSource, Failure> {
    match s {
        "dct" => Ok(GuideSource::Dct),
        _ => match s.strip_prefix("dir:") {
            Some(dir) if !dir.is_empty() => Ok(GuideSource::Dir(PathBuf::from(dir))),
            _ => Err(usage(format!(
                "prefilter must be 'dct' or 'dir:<path>', got '{s}'"
            ))),
        },
    }
}

fn parse_sigmas(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("bad sigma '{t}'")))
        })
        .collect()
}

/// Reads the flat `key=value` format. `#` starts a comment line; relative
/// image paths resolve against the file's directory.
pub fn parse_config(text: &str, base: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key=value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        const KEYS: [&str; 9] = [
            "images",
            "sigmas",
            "seed",
            "prefilter",
            "schedule",
            "iterations",
            "aps_ablation",
            "output",
            "write_noisy",
        ];
        if !KEYS.contains(&k) {
            return Err(usage(format!("config line {}: unknown key '{k}'", i + 1)));
        }
        let v = if k == "images" {
            v.split(',')
                .map(|p| base.join(p.trim()).display().to_string())
                .collect::<Vec<_>>()
                .join(",")
        } else {
            v.to_string()
        };
        map.insert(k.to_string(), v);
    }
    Ok(map)
}

impl BenchSpec {
    pub fn from_args(args: &BenchArgs) -> Result<Self, Failure> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
                parse_config(&text, path.parent().unwrap_or(Path::new(".")))?
            }
            None => BTreeMap::new(),
        };
        let get = |k: &str| file.get(k).map(String::as_str);

        let images = if !args.images.is_empty() {
            args.images.clone()
        } else {
            get("images")
                .map(|v| v.split(',').map(PathBuf::from).collect())
                .unwrap_or_default()
        };
        let sigmas = if !args.sigmas.is_empty() {
            args.sigmas.clone()
        } else {
            get("sigmas")
                .map(parse_sigmas)
                .transpose()?
                .unwrap_or_default()
        };
        let seed = match (args.seed, get("seed")) {
            (Some(s), _) => s,
            (None, Some(v)) => v.parse().map_err(|_| usage(format!("bad seed '{v}'")))?,
            (None, None) => 0,
        };
        let guide = match (&args.prefilter, get("prefilter")) {
            (Some(s), _) => parse_guide(s)?,
            (None, Some(s)) => parse_guide(s)?,
            (None, None) => GuideSource::Dct,
        };
        let schedule = match (args.schedule, get("schedule")) {
            (Some(k), _) => Some(k),
            (None, Some(v)) => Some(v.parse::<PrefilterKind>()?),
            (None, None) => None,
        };
        let iterations = match (args.iterations, get("iterations")) {
            (Some(k), _) => Some(k),
            (None, Some(v)) => Some(
                v.parse()
                    .map_err(|_| usage(format!("bad iterations '{v}'")))?,
            ),
            (None, None) => None,
        };
        let aps_ablation = args.aps_ablation
            || match get("aps_ablation") {
                Some("true" | "1" | "yes") => true,
                Some("false" | "0" | "no") | None => false,
                Some(v) => return Err(usage(format!("bad aps_ablation '{v}'"))),
            };
        let output = args
            .out
            .clone()
            .or_else(|| get("output").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("bench.csv"));
        let write_noisy = args
            .write_noisy
            .clone()
            .or_else(|| get("write_noisy").map(PathBuf::from));

        let spec = BenchSpec {
            images,
            sigmas,
            seed,
            guide,
            schedule,
            iterations,
            aps_ablation,
            output,
            write_noisy,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.images.is_empty() {
            return Err(usage("bench needs at least one image"));
        }
        if self.sigmas.is_empty() {
            return Err(usage("bench needs at least one sigma"));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(usage(format!("sigmas must be positive, got {s}")));
        }
        if self.iterations == Some(0) {
            return Err(usage("iterations must be >= 1"));
        }
        Ok(())
    }
}

fn image_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn image_stem(path: &Path) -> String {
    path.file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| image_name(path))
}

/// First 8 bytes (little-endian) of SHA-256 over the base seed, the image file
/// name and the bit pattern of sigma.
pub fn case_seed(base: u64, image: &str, sigma: f64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((image.len() as u64).to_le_bytes());
    h.update(image.as_bytes());
    h.update(sigma.to_bits().to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
struct Metrics {
    noisy_psnr: f64,
    prefilter_psnr: f64,
    prefilter_ssim: f64,
    gsrc_psnr: f64,
    gsrc_ssim: f64,
}

#[derive(Debug, Clone)]
struct Row {
    image: String,
    sigma: f64,
    seed: u64,
    aps: &'static str,
    outcome: Result<Metrics, String>,
}

fn find_guide(dir: &Path, stem: &str, sigma: f64) -> Result<PathBuf, String> {
    let base = format!("{stem}_s{sigma}");
    ["f64", "pgm", "png"]
        .iter()
        .map(|ext| dir.join(format!("{base}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| format!("no guide {base}.{{f64,pgm,png}} in {}", dir.display()))
}

fn run_case(spec: &BenchSpec, path: &Path, sigma: f64) -> Vec<Row> {
    let name = image_name(path);
    let seed = case_seed(spec.seed, &name, sigma);
    let variants: &[(&'static str, ApsMode)] = if spec.aps_ablation {
        &[("on", ApsMode::Adaptive), ("off", ApsMode::IterateOnly)]
    } else {
        &[("on", ApsMode::Adaptive)]
    };
    let row = |aps, outcome| Row {
        image: name.clone(),
        sigma,
        seed,
        aps,
        outcome,
    };

    let prepared = (|| -> Result<(Image, Image, Image, PrefilterKind), String> {
        let clean = load_any(path).map_err(|e| e.to_string())?;
        let noisy = add_awgn(
            &clean,
            NoiseSpec::new(sigma, seed).map_err(|e| e.to_string())?,
        );
        if let Some(dir) = &spec.write_noisy {
            save_raw(
                &noisy,
                dir.join(format!("{}_s{sigma}.f64", image_stem(path))),
            )
            .map_err(|e| e.to_string())?;
        }
        let (guide_spec, default_kind) = match &spec.guide {
            GuideSource::Dct => (PrefilterSpec::default(), PrefilterKind::BlockDct),
            GuideSource::Dir(dir) => (
                PrefilterSpec::External(find_guide(dir, &image_stem(path), sigma)?),
                PrefilterKind::Bm3dLike,
            ),
        };
        let guide = prefilter(&noisy, &guide_spec, sigma).map_err(|e| e.to_string())?;
        Ok((clean, noisy, guide, spec.schedule.unwrap_or(default_kind)))
    })();
    let (clean, noisy, guide, kind) = match prepared {
        Ok(p) => p,
        Err(e) => {
            return variants
                .iter()
                .map(|(tag, _)| row(*tag, Err(e.clone())))
                .collect()
        }
    };

    variants
        .iter()
        .map(|&(tag, aps)| {
            let outcome = (|| -> gsrc_core::Result<Metrics> {
                let mut cfg = default_config(sigma, kind)?;
                cfg.aps = aps;
                if let Some(k) = spec.iterations {
                    cfg.iterations = k;
                }
                let out = denoise(&noisy, &guide, &cfg, None)?;
                Ok(Metrics {
                    noisy_psnr: psnr(&noisy, &clean)?,
                    prefilter_psnr: psnr(&guide, &clean)?,
                    prefilter_ssim: ssim(&guide, &clean, &cfg.ssim)?,
                    gsrc_psnr: psnr(&out.image, &clean)?,
                    gsrc_ssim: ssim(&out.image, &clean, &cfg.ssim)?,
                })
            })();
            row(tag, outcome.map_err(|e| e.to_string()))
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

fn to_csv(rows: &[Row]) -> String {
    let mut out = String::from(
        "image,sigma,seed,aps,noisy_psnr,prefilter_psnr,prefilter_ssim,gsrc_psnr,gsrc_ssim,gain_db,status\n",
    );
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},",
            csv_field(&r.image),
            r.sigma,
            r.seed,
            r.aps
        );
        match &r.outcome {
            Ok(m) => {
                let _ = writeln!(
                    out,
                    "{:.4},{:.4},{:.6},{:.4},{:.6},{:.4},ok",
                    m.noisy_psnr,
                    m.prefilter_psnr,
                    m.prefilter_ssim,
                    m.gsrc_psnr,
                    m.gsrc_ssim,
                    m.gsrc_psnr - m.prefilter_psnr
                );
            }
            Err(e) => {
                let _ = writeln!(out, ",,,,,,error: {}", csv_field(e));
            }
        }
    }
    out
}

fn to_markdown(rows: &[Row], spec: &BenchSpec) -> String {
    let label = match &spec.guide {
        GuideSource::Dct => "DCT",
        GuideSource::Dir(_) => "external",
    };
    let mut out = format!(
        "| image | σ | APS | noisy PSNR | {label} PSNR | {label} SSIM | GSRC PSNR | GSRC SSIM | gain (dB) |\n\
         |---|---|---|---|---|---|---|---|---|\n"
    );
    for r in rows {
        match &r.outcome {
            Ok(m) => {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {:.2} | {:.2} | {:.4} | {:.2} | {:.4} | {:+.2} |",
                    r.image,
                    r.sigma,
                    r.aps,
                    m.noisy_psnr,
                    m.prefilter_psnr,
                    m.prefilter_ssim,
                    m.gsrc_psnr,
                    m.gsrc_ssim,
                    m.gsrc_psnr - m.prefilter_psnr
                );
            }
            Err(e) => {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | failed: {e} | | | | | |",
                    r.image, r.sigma, r.aps
                );
            }
        }
    }

    let _ = write!(
        out,
        "\n**Average**\n\n| σ | APS | cases | {label} PSNR | {label} SSIM | GSRC PSNR | GSRC SSIM | gain (dB) |\n\
         |---|---|---|---|---|---|---|---|\n"
    );
    for &sigma in &spec.sigmas {
        for aps in ["on", "off"] {
            let ok: Vec<&Metrics> = rows
                .iter()
                .filter(|r| r.sigma == sigma && r.aps == aps)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            if ok.is_empty() {
                continue;
            }
            let n = ok.len() as f64;
            let avg = |f: fn(&Metrics) -> f64| ok.iter().map(|m| f(m)).sum::<f64>() / n;
            let (pp, gp) = (avg(|m| m.prefilter_psnr), avg(|m| m.gsrc_psnr));
            let _ = writeln!(
                out,
                "| {sigma} | {aps} | {} | {pp:.2} | {:.4} | {gp:.2} | {:.4} | {:+.2} |",
                ok.len(),
                avg(|m| m.prefilter_ssim),
                avg(|m| m.gsrc_ssim),
                gp - pp
            );
        }
    }
    out
}

pub fn run(spec: &BenchSpec) -> CmdResult {
    if let Some(dir) = &spec.write_noisy {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    let cases: Vec<(usize, usize)> = (0..spec.images.len())
        .flat_map(|i| (0..spec.sigmas.len()).map(move |s| (i, s)))
        .collect();
    let rows: Vec<Row> = cases
        .par_iter()
        .map(|&(i, s)| run_case(spec, &spec.images[i], spec.sigmas[s]))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let markdown = to_markdown(&rows, spec);
    let md_path = spec.output.with_extension("md");
    for (path, text) in [(&spec.output, to_csv(&rows)), (&md_path, markdown.clone())] {
        fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    }
    print!("{markdown}");

    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!(
            "{failed} of {} bench rows failed",
            rows.len()
        )));
    }
    Ok(())
}

pub fn bench_cmd(args: &BenchArgs) -> CmdResult {
    run(&BenchSpec::from_args(args)?)
}
