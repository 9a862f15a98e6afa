//! End-to-end simulated experiment: phantom, sinograms, reconstructions and
//! weight searches.

use crate::config::RunConfig;
use crate::error::Result;
use crate::geometry::{Volume, VoxelGrid};
use crate::metrics::psnr;
use crate::phantom::{add_noise, make_column_phantom, noise_sigma, NoiseSpec};
use crate::projector::{ParallelBeamProjector, ScanGeometry, Sinogram};
use crate::regularizer::{CtvWeights, Regularizer, TvWeights};
use crate::solver::{solve, PdhgConfig, ReconResult};

pub struct Scenario {
    pub grid: VoxelGrid,
    pub geometry: ScanGeometry,
    pub projector: ParallelBeamProjector,
    pub truth: Volume,
    pub clean: Sinogram,
    pub noisy: Sinogram,
    pub noise_sigma: f64,
}

impl Scenario {
    pub fn new(truth: Volume, geometry: ScanGeometry, noise: &NoiseSpec) -> Result<Self> {
        let grid = *truth.grid();
        let projector = ParallelBeamProjector::new(&grid, &geometry)?;
        let clean = projector.project(&truth)?;
        let noisy = add_noise(&clean, noise)?;
        let noise_sigma = noise_sigma(&clean, noise);
        Ok(Self { grid, geometry, projector, truth, clean, noisy, noise_sigma })
    }

    /// Generated phantom (or the configured stored volume) under the
    /// configured scan and noise.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let truth = match &cfg.phantom.volume {
            Some(path) => {
                let (vol, _) = crate::io::read_volume(path)?;
                vol.ensure_same_grid(&cfg.grid()?, "phantom.volume")?;
                vol
            }
            None => make_column_phantom(&cfg.grid()?, cfg.column_radius()?, &cfg.cracks()?)?,
        };
        Self::new(truth, cfg.scan_geometry()?, &cfg.noise())
    }

    pub fn reconstruct(&self, reg: &Regularizer, cfg: &PdhgConfig, init: Option<&Volume>) -> Result<ReconResult> {
        let zero;
        let init = match init {
            Some(v) => v,
            None => {
                zero = Volume::zeros(self.grid);
                &zero
            }
        };
        solve(&self.projector, self.noisy.values(), reg, cfg, init)
    }

    pub fn psnr(&self, recon: &Volume) -> Result<f64> {
        psnr(recon, &self.truth)
    }
}

#[derive(Clone, Debug)]
pub struct SearchEntry {
    pub regularizer: Regularizer,
    pub psnr: f64,
    pub volume: Volume,
}

/// Reconstructs with every candidate and returns the entries sorted by
/// decreasing PSNR.
pub fn grid_search(
    scenario: &Scenario,
    candidates: &[Regularizer],
    cfg: &PdhgConfig,
    mut on_result: impl FnMut(&Regularizer, f64),
) -> Result<Vec<SearchEntry>> {
    let mut out = Vec::with_capacity(candidates.len());
    for reg in candidates {
        let res = scenario.reconstruct(reg, cfg, None)?;
        let p = scenario.psnr(&res.volume)?;
        on_result(reg, p);
        out.push(SearchEntry { regularizer: *reg, psnr: p, volume: res.volume });
    }
    out.sort_by(|a, b| b.psnr.total_cmp(&a.psnr));
    Ok(out)
}

/// Anisotropic TV candidates: shared in-plane weight crossed with the axial
/// weight.
pub fn tv_search_grid() -> Vec<Regularizer> {
    let mut out = Vec::new();
    for lxy in [0.0002, 0.0005, 0.001] {
        for lz in [0.001, 0.003, 0.01] {
            out.push(Regularizer::Tv(TvWeights { lambda_x: lxy, lambda_y: lxy, lambda_z: lz }));
        }
    }
    out
}

/// CTV candidates: angular, radial and axial weights.
pub fn ctv_search_grid() -> Vec<Regularizer> {
    let mut out = Vec::new();
    for lp in [0.02, 0.04, 0.08] {
        for lr in [0.0003, 0.001] {
            for lz in [0.003, 0.01] {
                out.push(Regularizer::Ctv(CtvWeights { lambda_p: lp, lambda_r: lr, lambda_z: lz }));
            }
        }
    }
    out
}
