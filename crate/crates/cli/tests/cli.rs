use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gsrc_core::{add_awgn, load_image, load_raw, save_image, Image, NoiseSpec};
use tempfile::TempDir;

fn gsrc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsrc"))
        .args(args)
        .output()
        .expect("failed to spawn gsrc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn cameraman() -> Image {
    load_image(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/tests/data/cameraman256.pgm"
    ))
    .unwrap()
}

/// 64×64 crops keep the end-to-end runs short.
fn write_crop(dir: &Path, name: &str, top: usize, left: usize) -> PathBuf {
    let full = cameraman();
    let crop = Image::from_fn(64, 64, |r, c| full.get(top + r, left + c)).unwrap();
    let path = dir.join(name);
    save_image(&crop, &path).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_on_every_subcommand() {
    for sub in [
        "add-noise",
        "prefilter",
        "denoise",
        "metrics",
        "residual-hist",
        "bench",
    ] {
        let o = gsrc(&[sub, "--help"]);
        assert!(o.status.success(), "{sub} --help failed");
        assert!(stdout(&o).contains("Usage"));
    }
}

#[test]
fn add_noise_writes_image_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let clean = write_crop(dir.path(), "clean.pgm", 60, 90);
    let out = dir.path().join("noisy.pgm");
    let o = gsrc(&[
        "add-noise",
        "--in",
        s(&clean),
        "--sigma",
        "30",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let expected = add_awgn(
        &load_image(&clean).unwrap(),
        NoiseSpec::new(30.0, 1).unwrap(),
    );
    let raw = load_raw(dir.path().join("noisy.f64")).unwrap();
    assert_eq!(raw, expected);
    let exported = load_image(&out).unwrap();
    assert!(exported.data().iter().all(|v| (0.0..=255.0).contains(v)));
}

#[test]
fn add_noise_usage_errors() {
    let dir = TempDir::new().unwrap();
    let clean = write_crop(dir.path(), "clean.pgm", 0, 0);
    let out = dir.path().join("n.pgm");
    let missing = gsrc(&[
        "add-noise",
        "--in",
        s(&clean),
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    let negative = gsrc(&[
        "add-noise",
        "--in",
        s(&clean),
        "--sigma",
        "-5",
        "--out",
        s(&out),
    ]);
    assert_eq!(negative.status.code(), Some(2));
    assert!(stderr(&negative).contains("sigma"));
    let unreadable = gsrc(&[
        "add-noise",
        "--in",
        "/no/such.pgm",
        "--sigma",
        "5",
        "--out",
        s(&out),
    ]);
    assert_eq!(unreadable.status.code(), Some(1));
}

#[test]
fn denoise_with_builtin_prefilter_and_reference() {
    let dir = TempDir::new().unwrap();
    let clean = write_crop(dir.path(), "clean.pgm", 60, 90);
    let noisy = dir.path().join("noisy.pgm");
    assert!(gsrc(&[
        "add-noise",
        "--in",
        s(&clean),
        "--sigma",
        "30",
        "--seed",
        "3",
        "--out",
        s(&noisy)
    ])
    .status
    .success());
    let den = dir.path().join("den.pgm");
    let log = dir.path().join("log.csv");
    let o = gsrc(&[
        "denoise",
        "--in",
        s(&dir.path().join("noisy.f64")),
        "--sigma",
        "30",
        "--prefilter",
        "dct",
        "--ref",
        s(&clean),
        "--out",
        s(&den),
        "--log",
        s(&log),
        "--iterations",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(
        line.starts_with("psnr=") && line.contains(" ssim="),
        "{line}"
    );
    let log_text = fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = log_text.lines().collect();
    assert_eq!(lines[0], "iteration,sigma_l,aps_target,psnr,ssim");
    assert!(lines.len() >= 2 && lines.len() <= 4);
    assert!(lines[1].starts_with("1,15.000000,guide,"));
    assert_eq!(load_image(&den).unwrap().width(), 64);

    // Without a reference nothing is printed.
    let quiet = gsrc(&[
        "denoise",
        "--in",
        s(&noisy),
        "--sigma",
        "30",
        "--prefilter",
        "dct",
        "--out",
        s(&den),
        "--iterations",
        "1",
    ]);
    assert!(quiet.status.success());
    assert!(stdout(&quiet).is_empty());
}

#[test]
fn denoise_guide_dimension_mismatch() {
    let dir = TempDir::new().unwrap();
    let clean = write_crop(dir.path(), "clean.pgm", 0, 0);
    let small = dir.path().join("small.pgm");
    save_image(&Image::filled(10, 12, 7.0).unwrap(), &small).unwrap();
    let o = gsrc(&[
        "denoise",
        "--in",
        s(&clean),
        "--sigma",
        "30",
        "--guide",
        s(&small),
        "--out",
        s(&dir.path().join("d.pgm")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("64x64") && err.contains("10x12"), "{err}");
}

#[test]
fn denoise_rejects_bad_overrides_and_missing_guide() {
    let dir = TempDir::new().unwrap();
    let clean = write_crop(dir.path(), "clean.pgm", 0, 0);
    let out = dir.path().join("d.pgm");
    let no_guide = gsrc(&[
        "denoise",
        "--in",
        s(&clean),
        "--sigma",
        "30",
        "--out",
        s(&out),
    ]);
    assert_eq!(no_guide.status.code(), Some(2));
    let bad_delta = gsrc(&[
        "denoise",
        "--in",
        s(&clean),
        "--sigma",
        "30",
        "--prefilter",
        "dct",
        "--delta",
        "2",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad_delta.status.code(), Some(2));
    let bad_aps = gsrc(&[
        "denoise",
        "--in",
        s(&clean),
        "--sigma",
        "30",
        "--prefilter",
        "dct",
        "--aps",
        "maybe",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad_aps.status.code(), Some(2));
}

#[test]
fn metrics_output_format() {
    let dir = TempDir::new().unwrap();
    let a = write_crop(dir.path(), "a.pgm", 0, 0);
    let same = gsrc(&["metrics", "--in", s(&a), "--ref", s(&a)]);
    assert_eq!(stdout(&same).trim(), "psnr=99.000000 ssim=1.000000");

    let b = dir.path().join("b.pgm");
    let shifted = load_image(&a).unwrap();
    let shifted = Image::from_fn(64, 64, |r, c| (shifted.get(r, c) + 16.0).min(255.0)).unwrap();
    save_image(&shifted, &b).unwrap();
    let o = gsrc(&["metrics", "--in", s(&a), "--ref", s(&b)]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("psnr="));
}

#[test]
fn residual_hist_csv() {
    let dir = TempDir::new().unwrap();
    let clean = write_crop(dir.path(), "clean.pgm", 60, 90);
    let noisy = dir.path().join("noisy.pgm");
    assert!(gsrc(&[
        "add-noise",
        "--in",
        s(&clean),
        "--sigma",
        "30",
        "--out",
        s(&noisy)
    ])
    .status
    .success());
    let csv = dir.path().join("h.csv");
    let o = gsrc(&[
        "residual-hist",
        "--in",
        s(&noisy),
        "--sigma",
        "30",
        "--prefilter",
        "dct",
        "--bins",
        "21",
        "--out",
        s(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("excess_kurtosis="));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("bin_center,count,gaussian_fit,laplacian_fit")
    );
    assert_eq!(text.lines().count(), 22);
}

fn bench_images(dir: &Path) -> (PathBuf, PathBuf) {
    (
        write_crop(dir, "one.pgm", 40, 80),
        write_crop(dir, "two.pgm", 150, 20),
    )
}

#[test]
fn bench_is_deterministic_and_reports_averages() {
    let dir = TempDir::new().unwrap();
    let (one, two) = bench_images(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = gsrc(&[
            "bench",
            "--image",
            s(&one),
            "--image",
            s(&two),
            "--sigmas",
            "20,50",
            "--seed",
            "4",
            "--iterations",
            "1",
            "--out",
            s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (
            fs::read_to_string(&out).unwrap(),
            fs::read_to_string(out.with_extension("md")).unwrap(),
        )
    };
    let (csv_a, md_a) = run("a.csv");
    let (csv_b, md_b) = run("b.csv");
    assert_eq!(csv_a, csv_b);
    assert_eq!(md_a, md_b);

    let rows: Vec<&str> = csv_a.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].contains("prefilter_psnr") && rows[0].contains("gsrc_psnr"));
    assert!(rows[1].starts_with("one.pgm,20,"));
    assert!(rows[2].starts_with("one.pgm,50,"));
    assert!(rows[3].starts_with("two.pgm,20,"));
    assert!(rows[4].starts_with("two.pgm,50,"));
    assert!(rows[1..].iter().all(|r| r.ends_with(",ok")));
    assert!(md_a.contains("| 20 | on | 2 |") && md_a.contains("| 50 | on | 2 |"));
}

#[test]
fn bench_config_file_matches_flags() {
    let dir = TempDir::new().unwrap();
    let (_one, _two) = bench_images(dir.path());
    let cfg = dir.path().join("bench.cfg");
    fs::write(
        &cfg,
        "# desk sweep\nimages = one.pgm,two.pgm\nsigmas = 30\nseed = 4\niterations = 1\naps_ablation = true\n",
    )
    .unwrap();
    let from_file = dir.path().join("file.csv");
    let o = gsrc(&["bench", "--config", s(&cfg), "--out", s(&from_file)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let from_flags = dir.path().join("flags.csv");
    let o = gsrc(&[
        "bench",
        "--image",
        s(&dir.path().join("one.pgm")),
        "--image",
        s(&dir.path().join("two.pgm")),
        "--sigmas",
        "30",
        "--seed",
        "4",
        "--iterations",
        "1",
        "--aps-ablation",
        "--out",
        s(&from_flags),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read_to_string(&from_file).unwrap();
    assert_eq!(a, fs::read_to_string(&from_flags).unwrap());
    let aps: Vec<&str> = a
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap())
        .collect();
    assert_eq!(aps, ["on", "off", "on", "off"]);
}

#[test]
fn bench_failures() {
    let dir = TempDir::new().unwrap();
    let (one, _) = bench_images(dir.path());
    let out = dir.path().join("r.csv");
    let o = gsrc(&[
        "bench",
        "--image",
        s(&one),
        "--image",
        "/no/such.pgm",
        "--sigmas",
        "20",
        "--iterations",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",ok"));
    assert!(csv.lines().nth(2).unwrap().contains("error:"));

    let none = gsrc(&["bench", "--sigmas", "20", "--out", s(&out)]);
    assert_eq!(none.status.code(), Some(2));
    let bad_sigma = gsrc(&[
        "bench",
        "--image",
        s(&one),
        "--sigmas",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad_sigma.status.code(), Some(2));
    let bad_key = dir.path().join("bad.cfg");
    fs::write(&bad_key, "colour=red\n").unwrap();
    assert_eq!(
        gsrc(&["bench", "--config", s(&bad_key)]).status.code(),
        Some(2)
    );
}
