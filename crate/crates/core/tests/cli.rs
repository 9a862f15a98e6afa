//! End-to-end runs of the `ctv` binary on a small grid.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctv::geometry::{Volume, VoxelGrid};
use ctv::io::{read_pgm, read_sinogram, read_volume, write_volume, Provenance};
use ctv::metrics::psnr;

const SMALL: &str = r#"
seed = 5
method = "ctv"

[grid]
nx = 24
ny = 24
nz = 4

[solver]
max_iters = 40
"#;

fn ctv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctv")).args(args).output().expect("run ctv")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(o: &Output, key: &str) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_owned))
        .unwrap_or_else(|| panic!("no {key} in output:\n{}", stdout(o)))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn simulate(dir: &Path, cfg: &Path, out: &str) -> PathBuf {
    let out_dir = dir.join(out);
    let o = ctv(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "simulate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out_dir
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = simulate(dir.path(), &cfg, "a");
    let b = simulate(dir.path(), &cfg, "b");
    for name in [
        "phantom.f32",
        "phantom.toml",
        "sinogram_clean.f32",
        "sinogram_clean.toml",
        "sinogram_noisy.f32",
        "sinogram_noisy.toml",
    ] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    // a different seed changes only the noisy sinogram
    let o = ctv(&[
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "6",
        "--out",
        dir.path().join("c").to_str().unwrap(),
        "simulate",
    ]);
    assert!(o.status.success());
    let c = dir.path().join("c");
    assert_eq!(fs::read(a.join("sinogram_clean.f32")).unwrap(), fs::read(c.join("sinogram_clean.f32")).unwrap());
    assert_ne!(fs::read(a.join("sinogram_noisy.f32")).unwrap(), fs::read(c.join("sinogram_noisy.f32")).unwrap());
}

#[test]
fn zero_noise_leaves_sinogram_clean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}\n[noise]\nrelative_sigma = 0.0\n"));
    let out = simulate(dir.path(), &cfg, "o");
    assert_eq!(fs::read(out.join("sinogram_clean.f32")).unwrap(), fs::read(out.join("sinogram_noisy.f32")).unwrap());
}

#[test]
fn paper_scale_sinogram_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let o = ctv(&["--paper-scale", "--out", out.to_str().unwrap(), "simulate"]);
    assert!(o.status.success());
    let (sino, _) = read_sinogram(&out.join("sinogram_noisy.f32")).unwrap();
    let g = sino.geometry();
    assert_eq!((g.num_views(), g.num_rows), (4, 100));
    assert_eq!(g.angles, vec![18.0, 162.0, 234.0, 306.0]);
    assert_eq!(g.detector_spacing, 0.049);
    assert_eq!(field(&o, "volume_shape"), "[121, 121, 100]");
}

#[test]
fn reconstruct_and_evaluate_agree_with_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = simulate(dir.path(), &cfg, "o");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    for method in ["tv", "ctv", "none"] {
        let r = ctv(&["--config", c, "--out", o, "--method", method, "reconstruct"]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        assert_eq!(field(&r, "iterations"), "40");
        let recon = out.join(format!("recon_{method}.f32"));
        let log = fs::read_to_string(out.join(format!("recon_{method}.log"))).unwrap();
        assert_eq!(log.lines().count(), 41);

        let e = ctv(&["evaluate", recon.to_str().unwrap(), out.join("phantom.f32").to_str().unwrap()]);
        assert!(e.status.success());
        let (rv, header) = read_volume(&recon).unwrap();
        let (truth, _) = read_volume(&out.join("phantom.f32")).unwrap();
        let want = psnr(&rv, &truth).unwrap();
        let got: f64 = field(&e, "psnr_db").parse().unwrap();
        assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        assert_eq!(field(&e, "wall_time_s"), header.provenance["wall_time_s"]);
        assert_eq!(field(&e, "method"), method);
        assert_eq!(header.provenance["method"], method);
    }
}

#[test]
fn warm_start_from_truth_fits_better_at_iteration_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = simulate(dir.path(), &cfg, "o");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    let cold = ctv(&["--config", c, "--out", o, "--iters", "1", "reconstruct"]);
    let truth = out.join("phantom.f32");
    let warm =
        ctv(&["--config", c, "--out", o, "--iters", "1", "--warm-start", truth.to_str().unwrap(), "reconstruct"]);
    assert!(cold.status.success() && warm.status.success());
    let cold_fit: f64 = field(&cold, "initial_data_fit").parse().unwrap();
    let warm_fit: f64 = field(&warm, "initial_data_fit").parse().unwrap();
    assert!(warm_fit < cold_fit, "{warm_fit} vs {cold_fit}");
}

#[test]
fn geometry_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = simulate(dir.path(), &cfg, "o");
    let other = write_config(dir.path(), &SMALL.replace("[grid]", "[scan]\nangles = [0.0, 90.0]\n\n[grid]"));
    let r = ctv(&["--config", other.to_str().unwrap(), "--out", out.to_str().unwrap(), "reconstruct"]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("geometry mismatch") && err.contains("angles"), "{err}");
}

#[test]
fn evaluate_reports_sentinel_and_twenty_db() {
    let dir = tempfile::tempdir().unwrap();
    let g = VoxelGrid::centered(6, 5, 3, 0.1).unwrap();
    let (a, b) = (dir.path().join("a.f32"), dir.path().join("b.f32"));
    write_volume(&a, &Volume::filled(g, 1.0), Provenance::new()).unwrap();
    write_volume(&b, &Volume::filled(g, 1.1), Provenance::new()).unwrap();
    let same = ctv(&["evaluate", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert_eq!(field(&same, "psnr_db"), "inf");
    let off = ctv(&["evaluate", b.to_str().unwrap(), a.to_str().unwrap()]);
    let p: f64 = field(&off, "psnr_db").parse().unwrap();
    assert!((p - 20.0).abs() < 1e-5, "{p}");

    let c = dir.path().join("c.f32");
    write_volume(&c, &Volume::zeros(VoxelGrid::centered(6, 5, 4, 0.1).unwrap()), Provenance::new()).unwrap();
    let bad = ctv(&["evaluate", c.to_str().unwrap(), a.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn export_slices_writes_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let g = VoxelGrid::centered(7, 5, 4, 0.1).unwrap();
    let v = dir.path().join("flat.f32");
    write_volume(&v, &Volume::filled(g, 0.3), Provenance::new()).unwrap();
    let out = dir.path().join("png");
    let o =
        ctv(&["--out", out.to_str().unwrap(), "export-slices", v.to_str().unwrap(), "--index", "0", "--index", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let img = read_pgm(&out.join("flat_z3.pgm")).unwrap();
    assert_eq!((img.width, img.height, img.max_value), (7, 5, 255));
    assert!(img.pixels.iter().all(|&p| p == 127));

    let o = ctv(&["--out", out.to_str().unwrap(), "export-slices", v.to_str().unwrap(), "--axis", "x", "--bits", "16"]);
    assert!(o.status.success());
    let img = read_pgm(&out.join("flat_x3.pgm")).unwrap();
    assert_eq!((img.width, img.height, img.max_value), (5, 4, 65535));

    let o = ctv(&["--out", out.to_str().unwrap(), "export-slices", v.to_str().unwrap(), "--index", "4"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(ctv(&["--help"]).status.code(), Some(0));
    assert_eq!(ctv(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ctv(&["--method", "mbir", "simulate"]).status.code(), Some(1));
    assert_eq!(ctv(&["--config", "/nonexistent/run.toml", "simulate"]).status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let o = ctv(&["selftest"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(field(&o, "selftest"), "pass");
}
