//! One-off runs behind the `fit`, `simulate` and `crb` commands.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{EstimatorKind, SweepConfig};
use super::sweep::{bound_for, draw_truth, estimate, kinds, realize, signal_power, Point};
use super::{trial_seed, Context, FittedModel};
use crate::calibration::{CalibrationSet, Slot};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::response::{ArrayResponse, PolarizationState, ResponseModel};
use crate::{Direction, C64};

/// Residual of one fitted slot against the calibration samples it covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub slot: Slot,
    /// Calibration directions inside the model's field of view.
    pub samples: usize,
    pub max_residual: f64,
    pub rms_residual: f64,
    /// RMS residual relative to the RMS sample magnitude.
    pub relative_rms: f64,
}

fn slot_report(name: &str, model: &ResponseModel, cal: &CalibrationSet, slot: Slot) -> Result<FitReport> {
    let data = cal.samples(slot);
    let (mut max, mut sq, mut norm, mut n) = (0.0f64, 0.0, 0.0, 0usize);
    for (q, dir) in cal.grid.directions().into_iter().enumerate() {
        if !model.contains(dir) {
            continue;
        }
        let a = model.response(dir)?;
        for m in 0..a.len() {
            let e = (a[m] - data[(m, q)]).norm();
            max = max.max(e);
            sq += e * e;
            norm += data[(m, q)].norm_sqr();
        }
        n += 1;
    }
    let count = (n * cal.num_ports()).max(1) as f64;
    Ok(FitReport {
        model: name.into(),
        slot,
        samples: n,
        max_residual: max,
        rms_residual: (sq / count).sqrt(),
        relative_rms: if norm > 0.0 { (sq / norm).sqrt() } else { 0.0 },
    })
}

/// Co- and cross-polar residuals of a fitted model.
pub fn fit_report(model: &FittedModel, cal: &CalibrationSet) -> Result<Vec<FitReport>> {
    Ok(vec![
        slot_report(&model.name, &model.co, cal, Slot::Co)?,
        slot_report(&model.name, &model.polarimetric.cross, cal, Slot::Cross)?,
    ])
}

/// Angles of one signal in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    pub theta_deg: f64,
    pub phi_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_deg: Option<f64>,
}

impl SignalReport {
    fn new(dir: Direction, pol: Option<PolarizationState>) -> Self {
        Self {
            theta_deg: dir.theta.to_degrees(),
            phi_deg: dir.phi.to_degrees(),
            gamma_deg: pol.map(|p| p.gamma.to_degrees()),
            beta_deg: pol.map(|p| p.beta.to_degrees()),
        }
    }
}

/// Output of one estimator on the simulated realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub model: String,
    pub estimator: String,
    pub signals: Vec<SignalReport>,
    pub objective: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub snr_db: f64,
    pub noise_power: f64,
    pub truth: Vec<SignalReport>,
    pub estimates: Vec<EstimateReport>,
}

fn truth_reports(dirs: &[Direction], pols: Option<&Vec<PolarizationState>>) -> Vec<SignalReport> {
    dirs.iter()
        .enumerate()
        .map(|(i, d)| SignalReport::new(*d, pols.map(|p| p[i])))
        .collect()
}

/// Draws one realization of the scenario (the first trial of the first
/// point) and runs every configured model and estimator on it.
pub fn simulate(config: &SweepConfig) -> Result<SimulationReport> {
    let ctx = Context::new(config)?;
    let seed = trial_seed(config.seed, 0, 0);
    let point = Point::base(config);
    let data = realize(&ctx, &point, seed)?;
    let mut estimates = Vec::new();
    for (m, model) in ctx.models.iter().enumerate() {
        for &e in &config.estimators {
            let report = match estimate(&ctx, m, e, &data) {
                Ok(r) => EstimateReport {
                    model: model.name.clone(),
                    estimator: e.id().into(),
                    signals: r
                        .signals
                        .iter()
                        .map(|s| SignalReport::new(s.direction(), s.polarization))
                        .collect(),
                    objective: r.objective,
                    converged: r.diagnostics.converged,
                    error: None,
                },
                Err(err) => EstimateReport {
                    model: model.name.clone(),
                    estimator: e.id().into(),
                    signals: Vec::new(),
                    objective: f64::NAN,
                    converged: false,
                    error: Some(err.to_string()),
                },
            };
            estimates.push(report);
        }
    }
    Ok(SimulationReport {
        seed,
        snr_db: point.snr_db,
        noise_power: ctx.noise_power,
        truth: truth_reports(&data.truth.dirs, data.truth.pols.as_ref()),
        estimates,
    })
}

/// Root-CRB of one parameter under one signal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub estimator: String,
    pub parameter: String,
    pub crb_std_deg: f64,
}

/// Bounds at the scenario truth with the nominal (uncorrelated) signal
/// covariance `diag(s_1, .., s_P)`. Estimators sharing a signal model
/// share a bound; `nc-rc` reports the bound with known noise power.
pub fn crb_report(config: &SweepConfig) -> Result<(Vec<SignalReport>, Vec<BoundReport>)> {
    if !(config.noise.power() > 0.0) {
        return Err(Error::Config("bounds need a positive noise power".into()));
    }
    let ctx = Context::new(config)?;
    let point = Point::base(config);
    let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(trial_seed(config.seed, 0, 0));
    let truth = draw_truth(&ctx, &point, &mut rng)?;
    let s1 = signal_power(ctx.noise_power, point.snr_db);
    let p = truth.dirs.len();
    let powers: Vec<f64> = (0..p)
        .map(|i| {
            if i == 0 {
                s1
            } else {
                s1 * 10f64.powf(config.scenario.second_power_db / 10.0)
            }
        })
        .collect();
    let rs: CMatrix = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            C64::new(powers[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let mut out = Vec::new();
    for &e in &config.estimators {
        if e.is_noncoherent() && p != 1 {
            continue;
        }
        let vars = bound_for(&ctx, e, &truth, &rs, &powers)?.unwrap_or_default();
        let labels = kinds(e, config.fov.planar)
            .into_iter()
            .flat_map(|k| (1..=p).map(move |i| if p == 1 { k.to_string() } else { format!("{k}_{i}") }));
        for (label, v) in labels.zip(vars) {
            out.push(BoundReport {
                estimator: EstimatorKind::id(e).into(),
                parameter: label,
                crb_std_deg: v.max(0.0).sqrt().to_degrees(),
            });
        }
    }
    Ok((truth_reports(&truth.dirs, truth.pols.as_ref()), out))
}
