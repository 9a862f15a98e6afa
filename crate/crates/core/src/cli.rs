//! Command-line front end: argument parsing and the subcommands.
//!
//! Every command writes `key=value` lines to the given writer. Exit codes are
//! 0 on success, 1 for usage, configuration and I/O errors, and 2 for
//! numerical failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Method, RunConfig};
use crate::diffops::{CartesianOperators, CylindricalOperators, LocalFrame};
use crate::error::{Error, Result};
use crate::experiment::Scenario;
use crate::geometry::{Volume, VoxelGrid};
use crate::io::{self, BitDepth, Provenance, SliceAxis};
use crate::linop::{adjoint_mismatch, DenseMatrix, LinearOperator};
use crate::metrics::{homogeneous_mask, mean_abs_angular_gradient, mse, psnr};
use crate::projector::{ParallelBeamProjector, ScanGeometry};
use crate::regularizer::Regularizer;
use crate::solver::{solve, PdhgConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ctv", version, about = "Sparse-view CT reconstruction with cylindrical total variation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct GlobalArgs {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, global = true, value_name = "N")]
    pub iters: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Initial volume for `reconstruct`.
    #[arg(long, global = true, value_name = "PATH")]
    pub warm_start: Option<PathBuf>,
    /// Use the 121 x 121 x 100 grid.
    #[arg(long, global = true)]
    pub paper_scale: bool,
    /// Log every solver iteration to stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Tv,
    Ctv,
    None,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Tv => Method::Tv,
            MethodArg::Ctv => Method::Ctv,
            MethodArg::None => Method::None,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the phantom and its clean and noisy sinograms.
    Simulate,
    /// Reconstruct a sinogram with the configured method.
    Reconstruct {
        /// Sinogram to reconstruct (default: <out>/sinogram_noisy.f32).
        #[arg(long, value_name = "PATH")]
        sinogram: Option<PathBuf>,
    },
    /// Compare a reconstruction against a reference volume.
    Evaluate { recon: PathBuf, reference: PathBuf },
    /// Write volume slices as PGM images.
    ExportSlices {
        volume: PathBuf,
        #[arg(long, default_value = "z")]
        axis: String,
        /// Slice indices (default: the middle slice).
        #[arg(long = "index", value_name = "N")]
        indices: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        bits: u32,
        /// Gray window; defaults to the volume's min and max.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        window: Option<Vec<f64>>,
    },
    /// Run the operator and solver self-checks.
    Selftest,
}

/// Applies the config file and flag overrides.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if global.paper_scale {
        cfg = cfg.paper_scale();
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(m) = global.method {
        cfg.method = m.into();
    }
    if let Some(n) = global.iters {
        cfg.solver.max_iters = n;
    }
    if let Some(dir) = &global.out {
        cfg.out_dir = dir.clone();
    }
    if let Some(p) = &global.warm_start {
        cfg.input.warm_start = Some(p.clone());
    }
    cfg.solver.verbose |= global.verbose;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Simulate => cmd_simulate(&resolve_config(&cli.global)?, out).map(|_| EXIT_OK),
        Command::Reconstruct { sinogram } => {
            let mut cfg = resolve_config(&cli.global)?;
            if let Some(p) = sinogram {
                cfg.input.sinogram = Some(p.clone());
            }
            cmd_reconstruct(&cfg, out).map(|_| EXIT_OK)
        }
        Command::Evaluate { recon, reference } => cmd_evaluate(recon, reference, out).map(|_| EXIT_OK),
        Command::ExportSlices { volume, axis, indices, bits, window } => {
            let out_dir = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let opts = ExportOptions {
                axis: axis.parse()?,
                indices: indices.clone(),
                depth: BitDepth::from_bits(*bits)?,
                window: window.as_ref().map(|w| (w[0], w[1])),
                out_dir,
            };
            cmd_export_slices(volume, &opts, out).map(|_| EXIT_OK)
        }
        Command::Selftest => Ok(if cmd_selftest(out)? { EXIT_OK } else { EXIT_NUMERICAL }),
    }
}

fn random_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn emit(out: &mut dyn Write, key: &str, value: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{key}={value}").map_err(|e| Error::io("<stdout>", e))
}

fn fmt_f(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn provenance(pairs: &[(&str, String)]) -> Provenance {
    let mut p: Provenance = pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    p.insert("generator".into(), format!("ctv {}", env!("CARGO_PKG_VERSION")));
    p
}

pub struct SimulateOutputs {
    pub phantom: PathBuf,
    pub clean: PathBuf,
    pub noisy: PathBuf,
}

/// Writes `phantom.f32`, `sinogram_clean.f32`, `sinogram_noisy.f32` (each
/// with a sidecar) and the resolved `config.toml` into the output
/// directory. Nothing time-dependent is recorded, so reruns are
/// byte-identical.
pub fn cmd_simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<SimulateOutputs> {
    let scenario = Scenario::from_config(cfg)?;
    create_dir(&cfg.out_dir)?;
    let files = SimulateOutputs {
        phantom: cfg.out_dir.join("phantom.f32"),
        clean: cfg.out_dir.join("sinogram_clean.f32"),
        noisy: cfg.out_dir.join("sinogram_noisy.f32"),
    };
    let source = match &cfg.phantom.volume {
        Some(p) => p.display().to_string(),
        None => "cracked column phantom".into(),
    };
    io::write_volume(&files.phantom, &scenario.truth, provenance(&[("source", source)]))?;
    io::write_sinogram(&files.clean, &scenario.clean, provenance(&[("noise", "none".into())]))?;
    let noisy_prov = provenance(&[
        ("noise", "gaussian".into()),
        ("relative_sigma", cfg.noise.relative_sigma.to_string()),
        ("sigma", scenario.noise_sigma.to_string()),
        ("seed", cfg.seed.to_string()),
    ]);
    io::write_sinogram(&files.noisy, &scenario.noisy, noisy_prov)?;
    let cfg_path = cfg.out_dir.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;

    let g = scenario.geometry.clone();
    emit(out, "volume_shape", format!("{:?}", scenario.grid.dims()))?;
    emit(out, "sinogram_shape", format!("{:?}", [g.num_views(), g.num_rows, g.num_channels]))?;
    emit(out, "noise_sigma", format!("{:.6e}", scenario.noise_sigma))?;
    emit(out, "seed", cfg.seed)?;
    emit(out, "phantom", files.phantom.display())?;
    emit(out, "sinogram_clean", files.clean.display())?;
    emit(out, "sinogram_noisy", files.noisy.display())?;
    Ok(files)
}

fn check_scan_matches(file: &ScanGeometry, cfg: &ScanGeometry, path: &Path) -> Result<()> {
    let mut problems = Vec::new();
    if file.angles != cfg.angles {
        problems.push(format!("angles {:?} vs configured {:?}", file.angles, cfg.angles));
    }
    if file.num_rows != cfg.num_rows {
        problems.push(format!("{} rows vs {} grid slices", file.num_rows, cfg.num_rows));
    }
    if file.num_channels != cfg.num_channels {
        problems.push(format!("{} channels vs configured {}", file.num_channels, cfg.num_channels));
    }
    if (file.detector_spacing - cfg.detector_spacing).abs() > 1e-12 * cfg.detector_spacing {
        problems.push(format!("detector spacing {} vs configured {}", file.detector_spacing, cfg.detector_spacing));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::GeometryMismatch(format!("{}: {}", path.display(), problems.join("; "))))
    }
}

fn regularizer_description(reg: &Regularizer) -> Vec<(&'static str, String)> {
    match reg {
        Regularizer::None => vec![],
        Regularizer::Tv(w) => vec![
            ("lambda_x", w.lambda_x.to_string()),
            ("lambda_y", w.lambda_y.to_string()),
            ("lambda_z", w.lambda_z.to_string()),
        ],
        Regularizer::Ctv(w) => vec![
            ("lambda_p", w.lambda_p.to_string()),
            ("lambda_r", w.lambda_r.to_string()),
            ("lambda_z", w.lambda_z.to_string()),
        ],
    }
}

pub struct ReconstructOutputs {
    pub volume: PathBuf,
    pub log: PathBuf,
    pub initial_data_fit: f64,
    pub final_objective: f64,
}

/// Reconstructs the configured sinogram into `recon_<method>.f32` and
/// writes the per-iteration log to `recon_<method>.log`.
///
/// `method = none` solves the unregularized (nonnegative) least-squares
/// problem, which is useful as a diagnostic.
pub fn cmd_reconstruct(cfg: &RunConfig, out: &mut dyn Write) -> Result<ReconstructOutputs> {
    let grid = cfg.grid()?;
    let sino_path = cfg.sinogram_path();
    let (sino, _) = io::read_sinogram(&sino_path)?;
    let expected = cfg.scan_geometry()?;
    check_scan_matches(sino.geometry(), &expected, &sino_path)?;
    let init = match &cfg.input.warm_start {
        Some(p) => {
            let (v, _) = io::read_volume(p)?;
            v.ensure_same_grid(&grid, "warm start")?;
            v
        }
        None => Volume::zeros(grid),
    };
    let projector = ParallelBeamProjector::new(&grid, sino.geometry())?;
    let reg = cfg.regularizer();
    let initial_data_fit = {
        let ax = projector.apply_vec(init.values());
        0.5 * ax.iter().zip(sino.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };

    let start = Instant::now();
    let res = solve(&projector, sino.values(), &reg, &cfg.solver, &init)?;
    let wall = start.elapsed().as_secs_f64();

    create_dir(&cfg.out_dir)?;
    let name = format!("recon_{}", cfg.method.name());
    let vol_path = cfg.out_dir.join(format!("{name}.f32"));
    let log_path = cfg.out_dir.join(format!("{name}.log"));
    let mut prov = vec![
        ("method", cfg.method.name().to_string()),
        ("iterations", res.iterations.to_string()),
        ("wall_time_s", format!("{wall:.3}")),
        ("final_objective", format!("{:.9e}", res.final_objective())),
        ("tau", res.tau.to_string()),
        ("sigma", res.sigma.to_string()),
        ("op_norm", res.op_norm.to_string()),
        ("sinogram", sino_path.display().to_string()),
        ("warm_start", cfg.input.warm_start.as_ref().map_or("none".into(), |p| p.display().to_string())),
    ];
    prov.extend(regularizer_description(&reg));
    io::write_volume(&vol_path, &res.volume, provenance(&prov))?;

    let mut log = format!("iter=0 objective={:.9e} data_fit={initial_data_fit:.9e}\n", res.initial_objective);
    for rec in &res.history {
        log.push_str(&rec.to_string());
        log.push('\n');
    }
    fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;

    emit(out, "method", cfg.method.name())?;
    for (k, v) in regularizer_description(&reg) {
        emit(out, k, v)?;
    }
    emit(out, "iterations", res.iterations)?;
    emit(out, "initial_data_fit", format!("{initial_data_fit:.9e}"))?;
    emit(out, "initial_objective", format!("{:.9e}", res.initial_objective))?;
    emit(out, "final_objective", format!("{:.9e}", res.final_objective()))?;
    emit(out, "wall_time_s", format!("{wall:.3}"))?;
    emit(out, "volume", vol_path.display())?;
    emit(out, "log", log_path.display())?;
    Ok(ReconstructOutputs { volume: vol_path, log: log_path, initial_data_fit, final_objective: res.final_objective() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub psnr_db: f64,
    pub mse: f64,
    pub wall_time_s: Option<f64>,
}

/// PSNR and MSE of `recon` against `reference`, plus the solver wall time
/// recorded in the reconstruction's sidecar. Prints `psnr_db=inf` for an
/// exact match.
pub fn cmd_evaluate(recon: &Path, reference: &Path, out: &mut dyn Write) -> Result<Evaluation> {
    let (r, header) = io::read_volume(recon)?;
    let (t, _) = io::read_volume(reference)?;
    if r.grid().dims() != t.grid().dims() {
        return Err(Error::GeometryMismatch(format!(
            "{} has shape {:?} but {} has {:?}",
            recon.display(),
            r.grid().dims(),
            reference.display(),
            t.grid().dims()
        )));
    }
    let ev = Evaluation {
        psnr_db: psnr(&r, &t)?,
        mse: mse(&r, &t)?,
        wall_time_s: header.provenance.get("wall_time_s").and_then(|s| s.parse().ok()),
    };
    emit(out, "psnr_db", fmt_f(ev.psnr_db))?;
    emit(out, "mse", format!("{:.9e}", ev.mse))?;
    emit(out, "wall_time_s", ev.wall_time_s.map_or("unknown".into(), |w| format!("{w:.3}")))?;
    for key in ["method", "iterations"] {
        if let Some(v) = header.provenance.get(key) {
            emit(out, key, v)?;
        }
    }
    let mask = homogeneous_mask(&t);
    if mask.iter().any(|&m| m) {
        emit(out, "homogeneous_angular_gradient", format!("{:.6e}", mean_abs_angular_gradient(&r, &mask)?))?;
    }
    Ok(ev)
}

pub struct ExportOptions {
    pub axis: SliceAxis,
    /// Empty means the middle slice.
    pub indices: Vec<usize>,
    pub depth: BitDepth,
    pub window: Option<(f64, f64)>,
    pub out_dir: PathBuf,
}

/// Writes `<stem>_<axis><index>.pgm` for each requested slice.
pub fn cmd_export_slices(volume: &Path, opts: &ExportOptions, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let (vol, _) = io::read_volume(volume)?;
    let g = vol.grid();
    let (axis_name, extent) = match opts.axis {
        SliceAxis::X => ("x", g.nx),
        SliceAxis::Y => ("y", g.ny),
        SliceAxis::Z => ("z", g.nz),
    };
    let indices = if opts.indices.is_empty() { vec![extent / 2] } else { opts.indices.clone() };
    for &i in &indices {
        if i >= extent {
            return Err(Error::invalid(format!("slice index {i} out of range 0..{extent} along {axis_name}")));
        }
    }
    let window = opts.window.unwrap_or_else(|| vol.min_max());
    create_dir(&opts.out_dir)?;
    let stem = volume.file_stem().and_then(|s| s.to_str()).unwrap_or("volume");
    let mut written = Vec::new();
    for i in indices {
        let (w, h, values) = io::extract_slice(&vol, opts.axis, i)?;
        let img = io::window_to_gray(&values, w, h, window, opts.depth);
        let path = opts.out_dir.join(format!("{stem}_{axis_name}{i}.pgm"));
        io::write_pgm(&path, &img)?;
        emit(out, "slice", path.display())?;
        written.push(path);
    }
    emit(out, "window", format!("{} {}", window.0, window.1))?;
    Ok(written)
}

/// Adjoint, rotation-identity and solver checks on small problems. Returns
/// whether every check passed.
pub fn cmd_selftest(out: &mut dyn Write) -> Result<bool> {
    let mut all = true;
    let mut check = |out: &mut dyn Write, name: &str, value: f64, tol: f64| -> Result<()> {
        let ok = value <= tol;
        all &= ok;
        writeln!(out, "check={name} value={value:.3e} tol={tol:.0e} status={}", if ok { "pass" } else { "FAIL" })
            .map_err(|e| Error::io("<stdout>", e))
    };

    let grids = [
        VoxelGrid::centered(8, 8, 3, 0.1)?,
        VoxelGrid::new(13, 9, 4, 0.097, (0.5, -1.0))?,
        VoxelGrid::centered(20, 20, 2, 0.097)?,
    ];
    for (n, grid) in grids.iter().enumerate() {
        let geom = ScanGeometry::covering(grid, vec![18.0, 162.0, 234.0, 306.0], grid.spacing / 2.0)?;
        let a = ParallelBeamProjector::new(grid, &geom)?;
        check(out, &format!("adjoint_projector_{n}"), adjoint_mismatch(&a, n as u64), 1e-6)?;
        let cyl = CylindricalOperators::for_grid(*grid);
        for (label, op) in [("cp", &cyl.angular as &dyn LinearOperator), ("cr", &cyl.radial), ("cz", &cyl.axial)] {
            check(out, &format!("adjoint_{label}_{n}"), adjoint_mismatch(op, 10 + n as u64), 1e-10)?;
        }
    }

    // |C_p x|^2 + |C_r x|^2 = |D_x x|^2 + |D_y x|^2 voxelwise
    let grid = VoxelGrid::new(17, 15, 3, 0.097, (1.0, 0.0))?;
    let x = random_vector(grid.len(), 99);
    let cyl = CylindricalOperators::new(grid, &LocalFrame::for_grid(&grid))?;
    let cart = CartesianOperators::new(grid);
    let (cp, cr) = (cyl.angular.apply_vec(&x), cyl.radial.apply_vec(&x));
    let (dx, dy) = (cart.x.apply_vec(&x), cart.y.apply_vec(&x));
    let worst = (0..grid.len())
        .map(|i| {
            let lhs = cp[i] * cp[i] + cr[i] * cr[i];
            let rhs = dx[i] * dx[i] + dy[i] * dy[i];
            (lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    check(out, "rotation_magnitude", worst, 1e-12)?;

    // unregularized PDHG on a well-conditioned explicit system
    let n = 24;
    let mut a = DenseMatrix::zeros(2 * n, n);
    let r = random_vector(n * n, 7);
    for c in 0..n {
        a.set(c, c, 1.0);
        for row in 0..n {
            a.set(n + row, c, r[row * n + c] / (n as f64).sqrt());
        }
    }
    let y = random_vector(2 * n, 8);
    let cfg = PdhgConfig { max_iters: 2000, nonneg: false, ..Default::default() };
    let res = solve(&a, &y, &Regularizer::None, &cfg, &Volume::zeros(VoxelGrid::centered(n, 1, 1, 1.0)?))?;
    // normal-equation residual relative to |A^T y|
    let ax = a.apply_vec(res.volume.values());
    let resid: Vec<f64> = ax.iter().zip(&y).map(|(p, q)| p - q).collect();
    let grad = a.apply_adjoint_vec(&resid);
    let scale = crate::linop::norm2(&a.apply_adjoint_vec(&y));
    check(out, "pdhg_least_squares", crate::linop::norm2(&grad) / scale, 1e-6)?;

    emit(out, "selftest", if all { "pass" } else { "FAIL" })?;
    Ok(all)
}
