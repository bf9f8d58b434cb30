//! Estimators driven by per-port received signal strength only.

use nalgebra::DVector;

use super::optim::nelder_mead;
use super::{grid_starts, refine_best, Diagnostics, EstimationResult, GainTable, OptimizerOptions, SignalEstimate};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::response::GainResponse;
use crate::Direction;

/// Floor applied to estimated signal and noise powers (W).
pub const POWER_FLOOR: f64 = 1e-18;

/// Log-parameter step of the nuisance simplex.
const LOG_STEP: f64 = 0.25;
/// Looser tolerance for the per-cell nuisance fit of the grid stage.
const INNER_TOL: f64 = 1e-4;
const INNER_MAX_ITER: usize = 200;

/// Gaussian log-likelihood of the RSS vector `r` for gains `g`, without
/// constant terms: `-ln det S - (r - mu)^T S^{-1} (r - mu)`.
pub fn nc_loglik_gain(
    r: &DVector<f64>,
    g: &DVector<f64>,
    signal_power: f64,
    noise_power: f64,
    snapshots: usize,
) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise power must be positive, got {noise_power}"
        )));
    }
    if !(signal_power >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "signal power must be non-negative, got {signal_power}"
        )));
    }
    if r.len() != g.len() {
        return Err(Error::Dimension(format!(
            "{} RSS values for {} ports",
            r.len(),
            g.len()
        )));
    }
    Ok(loglik_unchecked(r, g, signal_power, noise_power, snapshots as f64))
}

fn loglik_unchecked(r: &DVector<f64>, g: &DVector<f64>, s: f64, s2: f64, n: f64) -> f64 {
    let mut total = 0.0;
    for (rm, gm) in r.iter().zip(g.iter()) {
        let mu = gm * s + s2;
        let var = (s2 * s2 + 2.0 * s2 * s * gm) / n;
        let d = rm - mu;
        total -= var.ln() + d * d / var;
    }
    total
}

/// [`nc_loglik_gain`] with the gains taken from `model` at `dir`.
pub fn nc_loglik<G: GainResponse + ?Sized>(
    r: &DVector<f64>,
    model: &G,
    dir: Direction,
    signal_power: f64,
    noise_power: f64,
    snapshots: usize,
) -> Result<f64> {
    let g = model.gain(dir)?;
    nc_loglik_gain(r, &g, signal_power, noise_power, snapshots)
}

/// Moment-based starting values `(s, sigma^2)` independent of direction.
fn moment_start(r: &DVector<f64>) -> (f64, f64) {
    let mean = r.mean();
    let min = r.min();
    let s = (mean - min).max(1e-3 * mean.abs()).max(POWER_FLOOR);
    (s, min.max(1e-3 * mean.abs()).max(POWER_FLOOR))
}

fn from_log(p: f64) -> f64 {
    p.exp().max(POWER_FLOOR)
}

/// Maximum-likelihood nuisance fit `(ln s, ln sigma^2, loglik)` for fixed gains.
fn fit_nuisance(r: &DVector<f64>, g: &DVector<f64>, start: (f64, f64), n: f64) -> (f64, f64, f64) {
    let m = nelder_mead(
        |p| -loglik_unchecked(r, g, from_log(p[0]), from_log(p[1]), n),
        &[start.0.ln(), start.1.ln()],
        &[LOG_STEP, LOG_STEP],
        INNER_TOL,
        INNER_MAX_ITER,
    );
    (m.x[0], m.x[1], -m.f)
}

/// Log-likelihood at gains `g` maximized over signal and noise power,
/// returned as `(s, sigma^2, loglik)`. Uses the grid-stage tolerance.
pub fn nc_profile_loglik(r: &DVector<f64>, g: &DVector<f64>, snapshots: usize) -> Result<(f64, f64, f64)> {
    if r.len() != g.len() {
        return Err(Error::Dimension(format!(
            "{} RSS values for {} ports",
            r.len(),
            g.len()
        )));
    }
    let (ls, ln, ll) = fit_nuisance(r, g, moment_start(r), snapshots as f64);
    Ok((from_log(ls), from_log(ln), ll))
}

fn check_ports(r: &DVector<f64>, ports: usize) -> Result<()> {
    if r.len() != ports {
        return Err(Error::Dimension(format!("{} RSS values for {ports} ports", r.len())));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("RSS vector".into()));
    }
    Ok(())
}

/// Non-coherent ML estimate of one direction plus signal and noise power.
pub fn nc_ml<G: GainResponse + ?Sized>(
    r: &DVector<f64>,
    model: &G,
    snapshots: usize,
    opts: &OptimizerOptions,
) -> Result<EstimationResult> {
    let table = GainTable::build(model, opts)?;
    nc_ml_with_table(r, model, &table, snapshots, opts)
}

/// [`nc_ml`] with a precomputed gain table.
pub fn nc_ml_with_table<G: GainResponse + ?Sized>(
    r: &DVector<f64>,
    model: &G,
    table: &GainTable,
    snapshots: usize,
    opts: &OptimizerOptions,
) -> Result<EstimationResult> {
    let ports = model.num_ports();
    if ports < 3 {
        return Err(Error::InvalidParameter(format!(
            "NC-ML needs at least 3 ports, got {ports}"
        )));
    }
    if snapshots == 0 {
        return Err(Error::InvalidParameter("snapshot count must be positive".into()));
    }
    check_ports(r, ports)?;
    let n = snapshots as f64;
    let start = moment_start(r);
    let fits: Vec<(f64, f64, f64)> = table.gains.iter().map(|g| fit_nuisance(r, g, start, n)).collect();
    let costs: Vec<f64> = fits.iter().map(|f| -f.2).collect();
    let cells = grid_starts(&costs, &table.dirs, opts);
    if cells.is_empty() {
        return Err(Error::NonFinite("NC-ML grid".into()));
    }

    let fov = opts.fov;
    let dims = fov.dims();
    let starts: Vec<Vec<f64>> = cells
        .iter()
        .map(|&c| {
            let mut x = fov.angles(table.dirs[c]);
            x.extend([fits[c].0, fits[c].1]);
            x
        })
        .collect();
    let mut steps = vec![opts.angle_step(); dims];
    steps.extend([LOG_STEP, LOG_STEP]);
    let objective = |p: &[f64]| -> f64 {
        let dir = fov.direction(&p[..dims]);
        if !model.contains(dir) {
            return f64::INFINITY;
        }
        match model.gain(dir) {
            Ok(g) => -loglik_unchecked(r, &g, from_log(p[dims]), from_log(p[dims + 1]), n),
            Err(_) => f64::INFINITY,
        }
    };
    let (k, m) = refine_best(objective, &starts, &steps, opts);
    let grid_dir = table.dirs[cells[k]];
    let dir = fov.direction(&m.x[..dims]);
    Ok(EstimationResult {
        signals: vec![SignalEstimate {
            theta: dir.theta,
            phi: dir.phi,
            polarization: None,
        }],
        signal_power: Some(from_log(m.x[dims])),
        noise_power: Some(from_log(m.x[dims + 1])),
        objective: -m.f,
        diagnostics: Diagnostics {
            grid_best: vec![grid_dir],
            iterations: m.iterations,
            converged: m.converged,
            condition: None,
            rank_deficient: false,
        },
    })
}

/// Noise power from a signal-free block: mean squared magnitude of all
/// entries.
pub fn noise_power_estimate(block: &CMatrix) -> Result<f64> {
    if block.is_empty() {
        return Err(Error::InvalidParameter("noise block is empty".into()));
    }
    Ok(block.iter().map(|z| z.norm_sqr()).sum::<f64>() / block.len() as f64)
}

/// Reduced-complexity cost `||(I - g g^T/||g||^2) r'||^2` with
/// `r' = r - sigma^2 1`. Zero gains leave `r'` unprojected.
pub fn nc_rc_cost(r_prime: &DVector<f64>, g: &DVector<f64>) -> f64 {
    let gg = g.norm_squared();
    let rr = r_prime.norm_squared();
    if gg < 1e-24 {
        return rr;
    }
    let gr = g.dot(r_prime);
    (rr - gr * gr / gg).max(0.0)
}

/// Reduced-complexity non-coherent estimate with known noise power.
pub fn nc_rc<G: GainResponse + ?Sized>(
    r: &DVector<f64>,
    noise_power: f64,
    model: &G,
    opts: &OptimizerOptions,
) -> Result<EstimationResult> {
    let table = GainTable::build(model, opts)?;
    nc_rc_with_table(r, noise_power, model, &table, opts)
}

/// [`nc_rc`] with a precomputed gain table.
pub fn nc_rc_with_table<G: GainResponse + ?Sized>(
    r: &DVector<f64>,
    noise_power: f64,
    model: &G,
    table: &GainTable,
    opts: &OptimizerOptions,
) -> Result<EstimationResult> {
    if !(noise_power >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise power must be non-negative, got {noise_power}"
        )));
    }
    check_ports(r, model.num_ports())?;
    let rp = r.add_scalar(-noise_power);
    let costs: Vec<f64> = table.gains.iter().map(|g| nc_rc_cost(&rp, g)).collect();
    let cells = grid_starts(&costs, &table.dirs, opts);
    if cells.is_empty() {
        return Err(Error::NonFinite("NC-RC grid".into()));
    }

    let fov = opts.fov;
    let dims = fov.dims();
    let starts: Vec<Vec<f64>> = cells.iter().map(|&c| fov.angles(table.dirs[c])).collect();
    let objective = |p: &[f64]| -> f64 {
        let dir = fov.direction(p);
        if !model.contains(dir) {
            return f64::INFINITY;
        }
        match model.gain(dir) {
            Ok(g) => nc_rc_cost(&rp, &g),
            Err(_) => f64::INFINITY,
        }
    };
    let (k, m) = refine_best(objective, &starts, &vec![opts.angle_step(); dims], opts);
    let grid_dir = table.dirs[cells[k]];
    let dir = fov.direction(&m.x);
    let g = model.gain(dir)?;
    let gg = g.norm_squared();
    let s = if gg > 0.0 { (g.dot(&rp) / gg).max(0.0) } else { 0.0 };
    Ok(EstimationResult {
        signals: vec![SignalEstimate {
            theta: dir.theta,
            phi: dir.phi,
            polarization: None,
        }],
        signal_power: Some(s),
        noise_power: Some(noise_power),
        objective: m.f,
        diagnostics: Diagnostics {
            grid_best: vec![grid_dir],
            iterations: m.iterations,
            converged: m.converged,
            condition: None,
            rank_deficient: false,
        },
    })
}
