//! Monte-Carlo trials and their reduction to RMSE / CRB records.

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AxisKind, EstimatorKind, SweepConfig};
use super::{trial_seed, with_threads, Context, CSV_SCHEMA_VERSION};
use crate::basis::wrap_pi;
use crate::bounds::{crb_coherent, crb_polarimetric, fim_noncoherent, AngleSet, CrbResult};
use crate::error::{Error, Result};
use crate::estimators::{
    c_ml_with_table, nc_ml_with_table, nc_rc_with_table, noise_power_estimate, p_ml_with_table, EstimationResult,
};
use crate::linalg::CMatrix;
use crate::response::{PolarizationState, ResponseGains};
use crate::signal::{
    gen_from_steering, gen_noise, polarimetric_steering, rss, sample_cov, steering_matrix, Scenario, SnapshotBlock,
};
use crate::Direction;

/// Aggregate over the trials of one sweep point, estimator, model and parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub schema_version: u32,
    pub config_hash: String,
    pub axis: String,
    pub axis_value: f64,
    pub estimator: String,
    pub model: String,
    pub parameter: String,
    pub rmse_deg: f64,
    /// Square root of the trial-averaged CRB variance.
    pub crb_std_deg: f64,
    /// `rmse / sqrt(mean CRB)`.
    pub ratio: f64,
    pub trials: usize,
    pub failures: usize,
    pub ambiguities: usize,
}

/// Long-format surface cell value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRecord {
    pub schema_version: u32,
    pub config_hash: String,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub estimator: String,
    pub model: String,
    pub parameter: String,
    /// `rmse_deg`, `crb_std_deg` or `ratio`.
    pub metric: String,
    pub value: f64,
}

/// Settings of one evaluation point.
#[derive(Debug, Clone, Copy)]
pub(super) struct Point {
    pub snr_db: f64,
    pub theta_deg: Option<f64>,
    pub phi_deg: Option<f64>,
    pub separation_deg: f64,
}

impl Point {
    pub fn base(cfg: &SweepConfig) -> Self {
        Self {
            snr_db: cfg.scenario.snr_db,
            theta_deg: cfg.scenario.theta_deg,
            phi_deg: cfg.scenario.phi_deg,
            separation_deg: cfg.scenario.separation_deg,
        }
    }

    fn on_axis(cfg: &SweepConfig, kind: AxisKind, value: f64) -> Self {
        let mut p = Self::base(cfg);
        match kind {
            AxisKind::Snr => p.snr_db = value,
            AxisKind::Theta => p.theta_deg = Some(value),
            AxisKind::Separation => p.separation_deg = value,
        }
        p
    }
}

/// Angular error `estimate - truth` for a parameter kind; periodic
/// parameters (and the signed in-plane angle) are wrapped to `(-pi, pi]`.
pub fn angular_error(kind: &str, estimate: f64, truth: f64, planar: bool) -> f64 {
    let d = estimate - truth;
    let periodic = match kind {
        "theta" => planar,
        "phi" | "beta" => true,
        _ => false,
    };
    if periodic {
        let w = wrap_pi(d);
        // wrap_pi maps to [-pi, pi); move -pi to pi
        if w <= -std::f64::consts::PI {
            w + std::f64::consts::TAU
        } else {
            w
        }
    } else {
        d
    }
}

/// Permutation `perm[p]` (estimate index for truth `p`) minimizing the total
/// squared angular error. Exhaustive over all orderings; meant for `P <= 3`.
pub fn assign_min_permutation(truth: &[Direction], estimates: &[Direction], planar: bool) -> Vec<usize> {
    let p = truth.len();
    let cost = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| {
                let dt = angular_error("theta", estimates[j].theta, truth[i].theta, planar);
                let dp = if planar {
                    0.0
                } else {
                    angular_error("phi", estimates[j].phi, truth[i].phi, planar)
                };
                dt * dt + dp * dp
            })
            .sum()
    };
    let mut best: Vec<usize> = (0..p).collect();
    let mut best_cost = cost(&best);
    let mut perm: Vec<usize> = (0..p).collect();
    permute(&mut perm, 0, &mut |candidate| {
        let c = cost(candidate);
        if c < best_cost {
            best_cost = c;
            best = candidate.to_vec();
        }
    });
    best
}

fn permute(v: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}

/// Parameter kinds reported for an estimator.
pub(super) fn kinds(est: EstimatorKind, planar: bool) -> Vec<&'static str> {
    let mut k = vec!["theta"];
    if !planar {
        k.push("phi");
    }
    if est == EstimatorKind::PMl {
        k.extend(["gamma", "beta"]);
    }
    k
}

/// Output labels: `theta` for one signal, `theta_1, theta_2, ...` otherwise.
fn labels(est: EstimatorKind, planar: bool, p: usize) -> Vec<String> {
    kinds(est, planar)
        .into_iter()
        .flat_map(|k| (1..=p).map(move |i| if p == 1 { k.to_string() } else { format!("{k}_{i}") }))
        .collect()
}

/// Result of one trial: per estimator kind the CRB variances, per model and
/// estimator the errors (radians), both in label order.
struct TrialOutcome {
    crb: Vec<Option<Vec<f64>>>,
    errors: Vec<Vec<Option<Vec<f64>>>>,
}

pub(super) struct Truth {
    pub dirs: Vec<Direction>,
    pub pols: Option<Vec<PolarizationState>>,
}

fn uniform(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub(super) fn draw_truth(ctx: &Context, point: &Point, rng: &mut ChaCha20Rng) -> Result<Truth> {
    let cfg = &ctx.config;
    let sc = &cfg.scenario;
    let region = sc.truth_region.unwrap_or(cfg.fov);
    let p = sc.num_signals;
    let span = point.separation_deg * (p as f64 - 1.0);
    let theta1 = match point.theta_deg {
        Some(t) => t,
        None => {
            let hi = region.theta_max_deg - span;
            if hi < region.theta_min_deg {
                return Err(Error::Config(format!(
                    "separation {} does not fit the truth region",
                    point.separation_deg
                )));
            }
            uniform(rng, region.theta_min_deg, hi)
        }
    };
    let phi = if region.planar {
        0.0
    } else {
        match point.phi_deg {
            Some(f) => f,
            None => uniform(rng, region.phi_min_deg, region.phi_max_deg),
        }
    };
    let dirs: Vec<Direction> = (0..p)
        .map(|i| {
            let t = (theta1 + i as f64 * point.separation_deg).to_radians();
            if region.planar {
                Direction::planar(t)
            } else {
                Direction::new(t, phi.to_radians())
            }
        })
        .collect();
    let pols = sc.gamma_deg.map(|[g0, g1]| {
        (0..p)
            .map(|_| {
                let g = uniform(rng, g0, g1).to_radians();
                let b = uniform(rng, sc.beta_deg[0], sc.beta_deg[1]).to_radians();
                PolarizationState::new(g, wrap_pi(b))
            })
            .collect()
    });
    Ok(Truth { dirs, pols })
}

pub(super) fn bound_for(
    ctx: &Context,
    est: EstimatorKind,
    truth: &Truth,
    rs: &CMatrix,
    powers: &[f64],
) -> Result<Option<Vec<f64>>> {
    let cfg = &ctx.config;
    if ctx.noise_power <= 0.0 {
        return Ok(None);
    }
    let planar = cfg.fov.planar;
    let angles = AngleSet::from_fov(&cfg.fov);
    let p = truth.dirs.len();
    let n = cfg.snapshots;
    let res: CrbResult = match est {
        EstimatorKind::CMl => crb_coherent(&ctx.antenna.truth.co, &truth.dirs, rs, ctx.noise_power, n, angles)?,
        EstimatorKind::PMl => {
            let pols = truth.pols.clone().unwrap_or_else(|| vec![PolarizationState::co(); p]);
            crb_polarimetric(&ctx.antenna.truth, &truth.dirs, &pols, rs, ctx.noise_power, n, angles)?
        }
        EstimatorKind::NcMl | EstimatorKind::NcRc => fim_noncoherent(
            &ResponseGains(&ctx.antenna.truth.co),
            truth.dirs[0],
            powers[0],
            ctx.noise_power,
            n,
            angles,
            est == EstimatorKind::NcRc,
        )?,
    };
    let noncoherent = est.is_noncoherent();
    let vars = kinds(est, planar)
        .into_iter()
        .flat_map(|k| (1..=p).map(move |i| if noncoherent { k.to_string() } else { format!("{k}_{i}") }))
        .map(|l| res.variance(&l).unwrap_or(f64::NAN))
        .collect();
    Ok(Some(vars))
}

fn errors_of(est: EstimatorKind, planar: bool, truth: &Truth, result: &EstimationResult) -> Vec<f64> {
    let dirs: Vec<Direction> = result.signals.iter().map(|s| s.direction()).collect();
    let perm = assign_min_permutation(&truth.dirs, &dirs, planar);
    let mut out = Vec::new();
    for k in kinds(est, planar) {
        for (i, t) in truth.dirs.iter().enumerate() {
            let s = &result.signals[perm[i]];
            let tp = truth.pols.as_ref().map(|v| v[i]).unwrap_or_else(PolarizationState::co);
            let sp = s.polarization.unwrap_or_else(PolarizationState::co);
            let (e, tv) = match k {
                "theta" => (s.theta, t.theta),
                "phi" => (s.phi, t.phi),
                "gamma" => (sp.gamma, tp.gamma),
                _ => (sp.beta, tp.beta),
            };
            out.push(angular_error(k, e, tv, planar));
        }
    }
    out
}

/// One realization: truth, snapshots and the side information estimators use.
pub(super) struct Realization {
    pub truth: Truth,
    pub block: SnapshotBlock,
    pub cov: CMatrix,
    pub power: DVector<f64>,
    pub noise_estimate: f64,
}

pub(super) fn signal_power(noise_power: f64, snr_db: f64) -> f64 {
    if noise_power > 0.0 {
        noise_power * 10f64.powf(snr_db / 10.0)
    } else {
        1.0
    }
}

pub(super) fn realize(ctx: &Context, point: &Point, seed: u64) -> Result<Realization> {
    let cfg = &ctx.config;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let truth = draw_truth(ctx, point, &mut rng)?;
    let data_seed = rng.next_u64();
    let noise_seed = rng.next_u64();
    let s1 = signal_power(ctx.noise_power, point.snr_db);
    let p = truth.dirs.len();
    let powers = (0..p)
        .map(|i| {
            if i == 0 {
                s1
            } else {
                s1 * 10f64.powf(cfg.scenario.second_power_db / 10.0)
            }
        })
        .collect();
    let scenario = Scenario {
        directions: truth.dirs.clone(),
        polarizations: truth.pols.clone(),
        powers,
        waveform: cfg.scenario.waveform,
        snapshots: cfg.snapshots,
        noise_power: ctx.noise_power,
    };
    scenario.validate()?;
    let a = match &truth.pols {
        Some(pols) => polarimetric_steering(&ctx.antenna.truth, &truth.dirs, pols)?,
        None => steering_matrix(&ctx.antenna.truth.co, &truth.dirs)?,
    };
    let block = gen_from_steering(&a, &scenario, data_seed);
    let noise_estimate = if cfg.estimators.contains(&EstimatorKind::NcRc) {
        noise_power_estimate(&gen_noise(ctx.ports(), cfg.snapshots, ctx.noise_power, noise_seed))?
    } else {
        0.0
    };
    Ok(Realization {
        cov: sample_cov(&block),
        power: rss(&block),
        truth,
        block,
        noise_estimate,
    })
}

/// Runs estimator `est` of model `m` on a realization.
pub(super) fn estimate(ctx: &Context, m: usize, est: EstimatorKind, data: &Realization) -> Result<EstimationResult> {
    let cfg = &ctx.config;
    let region = ctx.regions.region_for(data.truth.dirs[0].theta);
    let opts = &ctx.regions.options[region];
    let model = &ctx.models[m];
    let t = &ctx.tables[m][region];
    let p = data.truth.dirs.len();
    match est {
        EstimatorKind::CMl => c_ml_with_table(&data.cov, &model.co, t.response.as_ref().expect("table"), p, opts),
        EstimatorKind::PMl => p_ml_with_table(
            &data.cov,
            &model.polarimetric,
            t.polarimetric.as_ref().expect("table"),
            p,
            opts,
        ),
        EstimatorKind::NcMl => nc_ml_with_table(
            &data.power,
            &model.gain,
            t.gain.as_ref().expect("table"),
            cfg.snapshots,
            opts,
        ),
        EstimatorKind::NcRc => nc_rc_with_table(
            &data.power,
            data.noise_estimate,
            &model.gain,
            t.gain.as_ref().expect("table"),
            opts,
        ),
    }
}

fn run_trial(ctx: &Context, point: &Point, seed: u64) -> Result<TrialOutcome> {
    let cfg = &ctx.config;
    let data = realize(ctx, point, seed)?;
    let rs = data.block.signal_cov();
    let powers = data.block.signal_powers();
    let crb = cfg
        .estimators
        .iter()
        .map(|&e| bound_for(ctx, e, &data.truth, &rs, &powers))
        .collect::<Result<Vec<_>>>()?;
    let planar = cfg.fov.planar;
    let errors = (0..ctx.models.len())
        .map(|m| {
            cfg.estimators
                .iter()
                .map(|&e| {
                    estimate(ctx, m, e, &data)
                        .ok()
                        .map(|r| errors_of(e, planar, &data.truth, &r))
                })
                .collect()
        })
        .collect();
    Ok(TrialOutcome { crb, errors })
}

/// Aggregated statistics of one point: `[model][estimator][label]`.
struct PointStats {
    values: Vec<Vec<Vec<LabelStats>>>,
}

#[derive(Debug, Clone, Copy, Default)]
struct LabelStats {
    rmse: f64,
    crb_var: f64,
    trials: usize,
    failures: usize,
    ambiguities: usize,
}

fn run_point(ctx: &Context, point_index: u64, point: &Point) -> Result<PointStats> {
    let cfg = &ctx.config;
    let outcomes: Vec<Result<TrialOutcome>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(ctx, point, trial_seed(cfg.seed, point_index, t)))
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let p = cfg.scenario.num_signals;
    let planar = cfg.fov.planar;
    let threshold = cfg.ambiguity_deg.to_radians();
    let values = (0..ctx.models.len())
        .map(|m| {
            cfg.estimators
                .iter()
                .enumerate()
                .map(|(e, &kind)| {
                    let n_labels = labels(kind, planar, p).len();
                    (0..n_labels)
                        .map(|l| {
                            let mut st = LabelStats {
                                trials: outcomes.len(),
                                ..Default::default()
                            };
                            let (mut sq, mut ok, mut crb_sum, mut crb_n) = (0.0, 0usize, 0.0, 0usize);
                            for o in &outcomes {
                                if let Some(c) = &o.crb[e] {
                                    crb_sum += c[l];
                                    crb_n += 1;
                                }
                                match &o.errors[m][e] {
                                    Some(err) => {
                                        sq += err[l] * err[l];
                                        ok += 1;
                                        if err[l].abs() > threshold {
                                            st.ambiguities += 1;
                                        }
                                    }
                                    None => st.failures += 1,
                                }
                            }
                            st.rmse = if ok > 0 { (sq / ok as f64).sqrt() } else { f64::NAN };
                            st.crb_var = if crb_n > 0 { crb_sum / crb_n as f64 } else { f64::NAN };
                            st
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(PointStats { values })
}

fn for_each_stat(ctx: &Context, stats: &PointStats, mut f: impl FnMut(&str, &str, &str, &LabelStats)) {
    let cfg = &ctx.config;
    for (m, model) in ctx.models.iter().enumerate() {
        for (e, kind) in cfg.estimators.iter().enumerate() {
            for (l, label) in labels(*kind, cfg.fov.planar, cfg.scenario.num_signals)
                .iter()
                .enumerate()
            {
                f(&model.name, kind.id(), label, &stats.values[m][e][l]);
            }
        }
    }
}

fn ratio(st: &LabelStats) -> f64 {
    st.rmse / st.crb_var.sqrt()
}

/// Runs every point of the sweep axis (or the base scenario when no axis is
/// configured) and returns one record per point, model, estimator and
/// parameter.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRecord>> {
    let ctx = Context::new(config)?;
    with_threads(config.threads, || sweep_with(&ctx))?
}

fn sweep_with(ctx: &Context) -> Result<Vec<SweepRecord>> {
    let cfg = &ctx.config;
    let points: Vec<(String, f64, Point)> = match &cfg.axis {
        Some(axis) => {
            let name = serde_json::to_value(axis.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            axis.values()
                .into_iter()
                .map(|v| (name.clone(), v, Point::on_axis(cfg, axis.kind, v)))
                .collect()
        }
        None => vec![("none".into(), 0.0, Point::base(cfg))],
    };
    let mut out = Vec::new();
    for (i, (axis, value, point)) in points.iter().enumerate() {
        let stats = run_point(ctx, i as u64, point)?;
        for_each_stat(ctx, &stats, |model, est, label, st| {
            out.push(SweepRecord {
                schema_version: CSV_SCHEMA_VERSION,
                config_hash: ctx.config_hash.clone(),
                axis: axis.clone(),
                axis_value: *value,
                estimator: est.into(),
                model: model.into(),
                parameter: label.into(),
                rmse_deg: st.rmse.to_degrees(),
                crb_std_deg: st.crb_var.sqrt().to_degrees(),
                ratio: ratio(st),
                trials: st.trials,
                failures: st.failures,
                ambiguities: st.ambiguities,
            })
        });
    }
    Ok(out)
}

/// RMSE, bound and ratio on the `(theta, phi)` cells of `config.surface` at
/// the scenario SNR.
pub fn run_surface(config: &SweepConfig) -> Result<Vec<SurfaceRecord>> {
    let surface = config
        .surface
        .ok_or_else(|| Error::Config("surface campaign needs a `surface` section".into()))?;
    let ctx = Context::new(config)?;
    with_threads(config.threads, || {
        let mut out = Vec::new();
        let phis = if config.fov.planar {
            vec![0.0]
        } else {
            surface.phi.values()
        };
        let mut index = 0u64;
        for theta in surface.theta.values() {
            for &phi in &phis {
                let mut point = Point::base(config);
                point.theta_deg = Some(theta);
                point.phi_deg = Some(phi);
                let stats = run_point(&ctx, index, &point)?;
                index += 1;
                for_each_stat(&ctx, &stats, |model, est, label, st| {
                    for (metric, value) in [
                        ("rmse_deg", st.rmse.to_degrees()),
                        ("crb_std_deg", st.crb_var.sqrt().to_degrees()),
                        ("ratio", ratio(st)),
                    ] {
                        out.push(SurfaceRecord {
                            schema_version: CSV_SCHEMA_VERSION,
                            config_hash: ctx.config_hash.clone(),
                            theta_deg: theta,
                            phi_deg: phi,
                            estimator: est.into(),
                            model: model.into(),
                            parameter: label.into(),
                            metric: metric.into(),
                            value,
                        });
                    }
                });
            }
        }
        Ok(out)
    })?
}
