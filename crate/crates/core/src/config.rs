//! Run configuration, read from and written to TOML.
//!
//! Every field has a default, so an empty file is a valid desk-scale run:
//!
//! ```toml
//! seed = 0
//! method = "ctv"          # none | tv | ctv
//! out_dir = "out"
//!
//! [grid]
//! nx = 64
//! ny = 64
//! nz = 32
//! spacing = 0.097         # mm
//! center = [0.0, 0.0]     # polar origin offset, in voxels
//!
//! [scan]
//! angles = [18.0, 162.0, 234.0, 306.0]   # degrees
//! detector_spacing = 0.049               # mm
//! # num_channels = 180                   # default: covers the grid diagonal
//!
//! [phantom]
//! # radius = 2.4          # mm, default 80% of the half-width
//! # volume = "truth.f32"  # use a stored volume instead of the phantom
//! # [[phantom.cracks]]    # default: the built-in crack set
//! # kind = "radial"
//! # angle = 18.0
//! # ...
//!
//! [noise]
//! relative_sigma = 0.02
//!
//! [weights.tv]
//! lambda_x = 0.0005
//! ...
//! [weights.ctv]
//! lambda_p = 0.04
//! ...
//!
//! [solver]
//! max_iters = 500
//! ...
//!
//! [input]
//! # sinogram = "out/sinogram_noisy.f32"
//! # warm_start = "init.f32"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::phantom::{default_column_radius, default_cracks, CrackSpec, NoiseSpec};
use crate::projector::{default_channel_count, ScanGeometry};
use crate::regularizer::{CtvWeights, Regularizer, TvWeights};
use crate::solver::PdhgConfig;

/// TOML integers are signed 64-bit.
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    None,
    Tv,
    #[default]
    Ctv,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Tv => "tv",
            Method::Ctv => "ctv",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Method::None),
            "tv" => Ok(Method::Tv),
            "ctv" => Ok(Method::Ctv),
            other => Err(Error::Config(format!("method must be none, tv or ctv, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub spacing: f64,
    pub center: [f64; 2],
}

impl Default for GridSection {
    fn default() -> Self {
        Self { nx: 64, ny: 64, nz: 32, spacing: 0.097, center: [0.0, 0.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub angles: Vec<f64>,
    pub detector_spacing: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_channels: Option<usize>,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self { angles: vec![18.0, 162.0, 234.0, 306.0], detector_spacing: 0.049, num_channels: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cracks: Option<Vec<CrackSpec>>,
    /// Stored ground-truth volume used in place of the generated phantom.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub relative_sigma: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { relative_sigma: NoiseSpec::default().relative_sigma }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub tv: TvWeights,
    pub ctv: CtvWeights,
}

/// Tuned on the default desk-scale scenario (see the `tv_vs_ctv` example).
pub const DEFAULT_TV: TvWeights = TvWeights { lambda_x: 0.0005, lambda_y: 0.0005, lambda_z: 0.003 };
pub const DEFAULT_CTV: CtvWeights = CtvWeights { lambda_p: 0.04, lambda_r: 0.0003, lambda_z: 0.003 };

impl Default for WeightsSection {
    fn default() -> Self {
        Self { tv: DEFAULT_TV, ctv: DEFAULT_CTV }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// Sinogram to reconstruct; defaults to `<out_dir>/sinogram_noisy.f32`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sinogram: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub method: Method,
    pub out_dir: PathBuf,
    pub grid: GridSection,
    pub scan: ScanSection,
    pub phantom: PhantomSection,
    pub noise: NoiseSection,
    pub weights: WeightsSection,
    pub solver: PdhgConfig,
    pub input: InputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            method: Method::default(),
            out_dir: PathBuf::from("out"),
            grid: GridSection::default(),
            scan: ScanSection::default(),
            phantom: PhantomSection::default(),
            noise: NoiseSection::default(),
            weights: WeightsSection::default(),
            solver: PdhgConfig::default(),
            input: InputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Switches to the full 121 x 121 x 100 grid.
    pub fn paper_scale(mut self) -> Self {
        self.grid.nx = 121;
        self.grid.ny = 121;
        self.grid.nz = 100;
        self
    }

    pub fn grid(&self) -> Result<VoxelGrid> {
        let g = &self.grid;
        VoxelGrid::new(g.nx, g.ny, g.nz, g.spacing, (g.center[0], g.center[1]))
            .map_err(|e| Error::Config(format!("[grid]: {e}")))
    }

    pub fn scan_geometry(&self) -> Result<ScanGeometry> {
        let grid = self.grid()?;
        let s = &self.scan;
        if !(s.detector_spacing > 0.0 && s.detector_spacing.is_finite()) {
            return Err(Error::Config(format!(
                "[scan]: detector_spacing must be positive, got {}",
                s.detector_spacing
            )));
        }
        let channels = s.num_channels.unwrap_or_else(|| default_channel_count(&grid, s.detector_spacing));
        ScanGeometry::new(s.angles.clone(), channels, grid.nz, s.detector_spacing)
            .map_err(|e| Error::Config(format!("[scan]: {e}")))
    }

    pub fn column_radius(&self) -> Result<f64> {
        Ok(self.phantom.radius.unwrap_or(default_column_radius(&self.grid()?)))
    }

    pub fn cracks(&self) -> Result<Vec<CrackSpec>> {
        match &self.phantom.cracks {
            Some(c) => Ok(c.clone()),
            None => Ok(default_cracks(&self.grid()?, self.column_radius()?)),
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec { relative_sigma: self.noise.relative_sigma, seed: self.seed }
    }

    pub fn regularizer(&self) -> Regularizer {
        match self.method {
            Method::None => Regularizer::None,
            Method::Tv => Regularizer::Tv(self.weights.tv),
            Method::Ctv => Regularizer::Ctv(self.weights.ctv),
        }
    }

    pub fn sinogram_path(&self) -> PathBuf {
        self.input.sinogram.clone().unwrap_or_else(|| self.out_dir.join("sinogram_noisy.f32"))
    }

    /// Checks everything that can be checked without touching the output
    /// directory.
    pub fn validate(&self) -> Result<()> {
        for (what, seed) in [("seed", self.seed), ("solver.seed", self.solver.seed)] {
            if seed > MAX_SEED {
                return Err(Error::Config(format!("{what} must be at most {MAX_SEED}, got {seed}")));
            }
        }
        self.scan_geometry()?;
        if !(self.noise.relative_sigma >= 0.0 && self.noise.relative_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "[noise]: relative_sigma must be nonnegative, got {}",
                self.noise.relative_sigma
            )));
        }
        let tv = &self.weights.tv;
        TvWeights::new(tv.lambda_x, tv.lambda_y, tv.lambda_z)
            .map_err(|e| Error::Config(format!("[weights.tv]: {e}")))?;
        let ctv = &self.weights.ctv;
        CtvWeights::new(ctv.lambda_p, ctv.lambda_r, ctv.lambda_z)
            .map_err(|e| Error::Config(format!("[weights.ctv]: {e}")))?;
        let silent = match self.method {
            Method::Tv => tv.as_array().iter().all(|&w| w == 0.0),
            Method::Ctv => ctv.as_array().iter().all(|&w| w == 0.0),
            Method::None => false,
        };
        if silent {
            return Err(Error::Config(format!(
                "method {} selected but all of its weights are zero",
                self.method.name()
            )));
        }
        self.solver.step_sizes(1.0).map_err(|e| Error::Config(format!("[solver]: {e}")))?;
        if let Some(r) = self.phantom.radius {
            if !(r > 0.0) {
                return Err(Error::Config(format!("[phantom]: radius must be positive, got {r}")));
            }
        }
        for (what, path) in [("phantom.volume", &self.phantom.volume), ("input.warm_start", &self.input.warm_start)] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!("{what}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}
