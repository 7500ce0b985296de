//! Denoises an image at a chosen noise level and prints the per-iteration log.
//!
//! `cargo run --release -p gsrc-core --example desk_run -- [sigma] [seed] [image] [key=value...]`
//!
//! Keys: `c`, `delta`, `gamma`, `tau`, `k` (iterations), `spread`, `aps`.

use std::time::Instant;

use gsrc_core::{
    add_awgn, default_config, denoise, load_image, log_to_csv, prefilter, psnr, NoiseSpec,
    PrefilterKind, PrefilterSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let sigma: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30.0);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let path = args.next().unwrap_or_else(|| {
        concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cameraman256.pgm").into()
    });

    let clean = load_image(&path)?;
    let noisy = add_awgn(&clean, NoiseSpec::new(sigma, seed)?);
    let guide = prefilter(&noisy, &PrefilterSpec::default(), sigma)?;
    println!("noisy  psnr={:.4}", psnr(&noisy, &clean)?);
    println!("guide  psnr={:.4}", psnr(&guide, &clean)?);

    let mut cfg = default_config(sigma, PrefilterKind::BlockDct)?;
    for kv in args {
        let (key, value) = kv.split_once('=').ok_or("expected key=value")?;
        match key {
            "c" => cfg.c = value.parse()?,
            "delta" => cfg.delta = value.parse()?,
            "gamma" => cfg.gamma = value.parse()?,
            "tau" => cfg.tau = value.parse()?,
            "k" => cfg.iterations = value.parse()?,
            "spread" => cfg.spread = value.parse()?,
            "aps" => cfg.aps = value.parse()?,
            other => return Err(format!("unknown key {other}").into()),
        }
    }
    let start = Instant::now();
    let out = denoise(&noisy, &guide, &cfg, Some(&clean))?;
    println!(
        "gsrc   psnr={:.4}  ({:.1?})",
        psnr(&out.image, &clean)?,
        start.elapsed()
    );
    print!("{}", log_to_csv(&out.log));
    Ok(())
}
