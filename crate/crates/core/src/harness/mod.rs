//! Monte-Carlo campaigns: RMSE against Cramér-Rao bounds over a sweep axis
//! or a direction surface, and likelihood maps of single realizations.
//!
//! Every trial draws from its own generator seeded by a hash of the master
//! seed, the sweep point and the trial index; trial results are collected in
//! order before reduction, so outputs do not depend on the thread count.

mod config;
mod likemap;
mod output;
mod single;
mod sweep;

use nalgebra::DVector;
use sha2::{Digest, Sha256};

pub use config::{
    apply_override, AntennaSource, AxisKind, AxisLayoutRange, AxisSpec, EstimatorKind, ModelSpec, NoiseSpec,
    ScenarioSpec, SearchSpec, SurfaceSpec, SweepConfig, BOLTZMANN,
};
pub use likemap::{run_likelihood_map, LikelihoodMap, MapKind};
pub use output::{write_likelihood_map, write_surface, write_sweep, Sidecar, CSV_SCHEMA_VERSION};
pub use single::{
    crb_report, fit_report, simulate, BoundReport, EstimateReport, FitReport, SignalReport, SimulationReport,
};
pub use sweep::{angular_error, assign_min_permutation, run_surface, run_sweep, SurfaceRecord, SweepRecord};

use crate::basis::BasisSpec;
use crate::calibration::{synth_antenna, CalibrationSet, Slot};
use crate::error::{Error, Result};
use crate::estimators::{Fov, GainTable, OptimizerOptions, PolarimetricTable, ResponseTable};
use crate::response::{
    fit_ait, fit_wm, fit_wm_gain, truncation_order, ArrayResponse, GainResponse, IdealGeometry, PolarimetricModel,
    ResponseGains, ResponseModel, SectorLayout, WmGainModel, WmModel,
};
use crate::{BasisKind, Direction};

/// Gains from a dedicated power-pattern fit or from a complex model.
#[derive(Debug, Clone)]
pub enum GainModel {
    Wm(WmGainModel),
    Response(ResponseModel),
}

impl GainResponse for GainModel {
    fn num_ports(&self) -> usize {
        match self {
            Self::Wm(m) => m.num_ports(),
            Self::Response(m) => m.num_ports(),
        }
    }

    fn gain(&self, dir: Direction) -> Result<DVector<f64>> {
        match self {
            Self::Wm(m) => m.gain(dir),
            Self::Response(m) => ResponseGains(m).gain(dir),
        }
    }

    fn gain_grad(&self, dir: Direction) -> Result<(DVector<f64>, DVector<f64>)> {
        match self {
            Self::Wm(m) => m.gain_grad(dir),
            Self::Response(m) => ResponseGains(m).gain_grad(dir),
        }
    }

    fn contains(&self, dir: Direction) -> bool {
        match self {
            Self::Wm(m) => m.contains(dir),
            Self::Response(m) => m.contains(dir),
        }
    }
}

/// Calibration data plus the response that generates simulated data and
/// bounds: the exact pattern for synthetic antennas, a default wavefield fit
/// for measured ones.
#[derive(Debug, Clone)]
pub struct Antenna {
    pub calibration: CalibrationSet,
    pub truth: PolarimetricModel<ResponseModel>,
}

impl Antenna {
    pub fn load(source: &AntennaSource) -> Result<Self> {
        match source {
            AntennaSource::Synth(params) => {
                let (calibration, truth) = synth_antenna(params).map_err(|e| Error::Config(e.to_string()))?;
                let truth = PolarimetricModel::new(
                    ResponseModel::from(WmModel::from_truth(&truth, Slot::Co)),
                    ResponseModel::from(WmModel::from_truth(&truth, Slot::Cross)),
                )?;
                Ok(Self { calibration, truth })
            }
            AntennaSource::File(path) => {
                let calibration = CalibrationSet::load(path)?;
                let basis = default_basis(&calibration, None, None)?;
                let truth = PolarimetricModel::new(
                    ResponseModel::from(fit_wm(&calibration, basis, Slot::Co)?),
                    ResponseModel::from(fit_wm(&calibration, basis, Slot::Cross)?),
                )?;
                Ok(Self { calibration, truth })
            }
        }
    }

    pub fn is_planar(&self) -> bool {
        self.calibration.grid.is_planar()
    }
}

/// Wavefield basis for `cal`, defaulting to 1D Fourier on a cut and complex
/// spherical harmonics on the sphere, sized from the antenna extent.
pub fn default_basis(cal: &CalibrationSet, kind: Option<BasisKind>, size: Option<usize>) -> Result<BasisSpec> {
    let kind = kind.unwrap_or(if cal.grid.is_planar() {
        BasisKind::Fourier1d
    } else {
        BasisKind::ComplexSh
    });
    let size = size.unwrap_or_else(|| truncation_order(cal.kappa_rs(), kind));
    BasisSpec::new(kind, size)
}

/// Basis for the power pattern `|a|^2` of a response expanded in `basis`:
/// twice the angular bandwidth, real harmonics on the sphere.
pub fn gain_basis(basis: &BasisSpec) -> Result<BasisSpec> {
    match basis.kind {
        BasisKind::Fourier1d => BasisSpec::fourier1d(2 * basis.size - 1),
        BasisKind::Fourier2d => {
            let r = (basis.size as f64).sqrt().round() as usize;
            BasisSpec::fourier2d((2 * r - 1) * (2 * r - 1))
        }
        BasisKind::ComplexSh | BasisKind::RealSh => Ok(BasisSpec::real_sh(2 * basis.max_degree())),
    }
}

/// One configured model with everything the estimators need.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub name: String,
    pub co: ResponseModel,
    pub polarimetric: PolarimetricModel<ResponseModel>,
    pub gain: GainModel,
}

impl FittedModel {
    pub fn fit(spec: &ModelSpec, cal: &CalibrationSet) -> Result<Self> {
        match spec {
            ModelSpec::Wm { name, basis, size } => {
                let b = default_basis(cal, *basis, *size)?;
                let co = ResponseModel::from(fit_wm(cal, b, Slot::Co)?);
                let cross = ResponseModel::from(fit_wm(cal, b, Slot::Cross)?);
                let gain = GainModel::Wm(fit_wm_gain(cal, gain_basis(&b)?)?);
                Ok(Self {
                    name: name.clone(),
                    polarimetric: PolarimetricModel::new(co.clone(), cross)?,
                    co,
                    gain,
                })
            }
            ModelSpec::Ait {
                name,
                width_deg,
                overlap_deg,
                geometry,
            } => {
                let planar = cal.grid.is_planar();
                let theta_axis = config::ait_theta_axis(planar, *width_deg, *overlap_deg);
                let layout = if planar {
                    SectorLayout {
                        theta: theta_axis,
                        phi: None,
                    }
                } else {
                    SectorLayout::spherical(theta_axis, *width_deg, *overlap_deg)
                };
                let geometry = geometry.unwrap_or_else(|| IdealGeometry::default_for(cal));
                let co = ResponseModel::from(fit_ait(cal, layout, geometry, Slot::Co)?);
                let cross = ResponseModel::from(fit_ait(cal, layout, geometry, Slot::Cross)?);
                Ok(Self {
                    name: name.clone(),
                    polarimetric: PolarimetricModel::new(co.clone(), cross)?,
                    gain: GainModel::Response(co.clone()),
                    co,
                })
            }
        }
    }
}

/// Precomputed search tables of one model over one field of view.
#[derive(Debug, Clone, Default)]
pub struct Tables {
    pub response: Option<ResponseTable>,
    pub gain: Option<GainTable>,
    pub polarimetric: Option<PolarimetricTable>,
}

impl Tables {
    pub fn build(model: &FittedModel, estimators: &[EstimatorKind], opts: &OptimizerOptions) -> Result<Self> {
        let mut t = Self::default();
        if estimators.contains(&EstimatorKind::CMl) {
            t.response = Some(ResponseTable::build(&model.co, opts)?);
        }
        if estimators.iter().any(|e| e.is_noncoherent()) {
            t.gain = Some(GainTable::build(&model.gain, opts)?);
        }
        if estimators.contains(&EstimatorKind::PMl) {
            t.polarimetric = Some(PolarimetricTable::build(&model.polarimetric, opts)?);
        }
        Ok(t)
    }
}

/// The search regions of a campaign: the full field of view, or its two
/// halves (negative and non-negative inclination) when split.
#[derive(Debug, Clone)]
pub(crate) struct SearchRegions {
    pub options: Vec<OptimizerOptions>,
}

impl SearchRegions {
    pub fn new(cfg: &SweepConfig) -> Self {
        let fov = cfg.fov;
        let options = if cfg.split_fov {
            vec![
                cfg.search
                    .options(Fov::planar(fov.theta_min_deg, fov.theta_max_deg.min(0.0))),
                cfg.search
                    .options(Fov::planar(0.0f64.max(fov.theta_min_deg), fov.theta_max_deg)),
            ]
        } else {
            vec![cfg.search.options(fov)]
        };
        Self { options }
    }

    /// Index of the region searched for a signal at `theta` (radians).
    pub fn region_for(&self, theta: f64) -> usize {
        if self.options.len() == 2 && theta >= 0.0 {
            1
        } else {
            0
        }
    }
}

/// Everything shared read-only by the trials of a campaign.
pub struct Context {
    pub config: SweepConfig,
    pub antenna: Antenna,
    pub models: Vec<FittedModel>,
    /// `tables[model][region]`.
    pub tables: Vec<Vec<Tables>>,
    pub(crate) regions: SearchRegions,
    pub noise_power: f64,
    pub config_hash: String,
}

impl Context {
    pub fn new(config: &SweepConfig) -> Result<Self> {
        config.validate()?;
        let antenna = Antenna::load(&config.antenna)?;
        if antenna.is_planar() != config.fov.planar {
            return Err(Error::Config("field of view and antenna dimensionality differ".into()));
        }
        let models = config
            .models
            .iter()
            .map(|m| FittedModel::fit(m, &antenna.calibration))
            .collect::<Result<Vec<_>>>()?;
        let regions = SearchRegions::new(config);
        let tables = models
            .iter()
            .map(|m| {
                regions
                    .options
                    .iter()
                    .map(|o| Tables::build(m, &config.estimators, o))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            noise_power: config.noise.power(),
            config_hash: config.hash(),
            config: config.clone(),
            antenna,
            models,
            tables,
            regions,
        })
    }

    pub fn ports(&self) -> usize {
        self.antenna.truth.num_ports()
    }
}

/// Seed of one trial: the first 8 bytes of `SHA-256(master || point || trial)`.
pub fn trial_seed(master: u64, point: u64, trial: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(point.to_le_bytes());
    h.update(trial.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Runs `f` on a dedicated pool when a thread count is configured.
pub(crate) fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
