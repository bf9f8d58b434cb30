//! Maximum-likelihood DoA estimators: non-coherent (NC-ML, NC-RC), coherent
//! (C-ML) and polarimetric (P-ML).
//!
//! Every estimator seeds local Nelder-Mead refinements from the best, mutually
//! separated points of a coarse direction grid and keeps the best refined
//! optimum. Grid evaluations of the antenna model are cached in tables that
//! may be built once and shared across calls.

mod coherent;
mod noncoherent;
pub mod optim;

use serde::{Deserialize, Serialize};

use crate::basis::{wrap_2pi, Direction};
use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::response::{ArrayResponse, GainResponse, PolarimetricModel, PolarizationState};

pub use coherent::{c_ml, c_ml_cost, c_ml_with_table, p_ml, p_ml_with_table, polarimetric_cost};
use nalgebra::DVector;
pub use noncoherent::{
    nc_loglik, nc_loglik_gain, nc_ml, nc_ml_with_table, nc_profile_loglik, nc_rc, nc_rc_cost, nc_rc_with_table,
    noise_power_estimate, POWER_FLOOR,
};

/// Angular search region, in degrees.
///
/// A planar region searches the signed in-plane angle only (`phi = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fov {
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    #[serde(default)]
    pub phi_min_deg: f64,
    #[serde(default = "full_turn")]
    pub phi_max_deg: f64,
    pub planar: bool,
}

fn full_turn() -> f64 {
    360.0
}

impl Fov {
    pub fn planar(theta_min_deg: f64, theta_max_deg: f64) -> Self {
        Self {
            theta_min_deg,
            theta_max_deg,
            phi_min_deg: 0.0,
            phi_max_deg: 0.0,
            planar: true,
        }
    }

    /// Spherical cap `theta in [min, max]` over all azimuths.
    pub fn spherical(theta_min_deg: f64, theta_max_deg: f64) -> Self {
        Self {
            theta_min_deg,
            theta_max_deg,
            phi_min_deg: 0.0,
            phi_max_deg: 360.0,
            planar: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.theta_min_deg <= self.theta_max_deg
            && (self.planar || (self.theta_min_deg >= 0.0 && self.theta_max_deg <= 180.0))
            && (self.planar || self.phi_min_deg <= self.phi_max_deg);
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid field of view {self:?}")));
        }
        Ok(())
    }

    /// Number of free angles per signal.
    pub fn dims(&self) -> usize {
        if self.planar {
            1
        } else {
            2
        }
    }

    fn phi_periodic(&self) -> bool {
        self.phi_max_deg - self.phi_min_deg >= 360.0 - 1e-9
    }

    pub fn contains(&self, dir: Direction) -> bool {
        let t = dir.theta.to_degrees();
        let t_ok = t >= self.theta_min_deg - 1e-9 && t <= self.theta_max_deg + 1e-9;
        if self.planar {
            return t_ok;
        }
        let p = dir.phi.to_degrees();
        t_ok && (self.phi_periodic() || (p >= self.phi_min_deg - 1e-9 && p <= self.phi_max_deg + 1e-9))
    }

    /// Direction from free angles (radians), projected onto the region.
    pub fn direction(&self, angles: &[f64]) -> Direction {
        let t = angles[0].clamp(self.theta_min_deg.to_radians(), self.theta_max_deg.to_radians());
        if self.planar {
            return Direction::planar(t);
        }
        let p = if self.phi_periodic() {
            wrap_2pi(angles[1])
        } else {
            angles[1].clamp(self.phi_min_deg.to_radians(), self.phi_max_deg.to_radians())
        };
        Direction::new(t, p)
    }

    /// Free angles of a direction.
    pub fn angles(&self, dir: Direction) -> Vec<f64> {
        if self.planar {
            vec![dir.theta]
        } else {
            vec![dir.theta, dir.phi]
        }
    }

    /// Grid points, theta-major with both axes ascending.
    pub fn grid(&self, step_deg: f64) -> Vec<Direction> {
        let axis = |lo: f64, hi: f64, include_end: bool| -> Vec<f64> {
            let n = ((hi - lo) / step_deg + 1e-9).floor() as usize;
            let mut v: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step_deg).collect();
            if !include_end && v.len() > 1 && (v[v.len() - 1] - hi).abs() < 1e-9 {
                v.pop();
            }
            v
        };
        let thetas = axis(self.theta_min_deg, self.theta_max_deg, true);
        if self.planar {
            return thetas.into_iter().map(|t| Direction::planar(t.to_radians())).collect();
        }
        let phis = axis(self.phi_min_deg, self.phi_max_deg, !self.phi_periodic());
        let mut out = Vec::with_capacity(thetas.len() * phis.len());
        for &t in &thetas {
            // a pole is a single point
            let ps: &[f64] = if t.abs() < 1e-9 || (t - 180.0).abs() < 1e-9 {
                &phis[..1]
            } else {
                &phis
            };
            for &p in ps {
                out.push(Direction::new(t.to_radians(), p.to_radians()));
            }
        }
        out
    }
}

/// Search and refinement settings shared by all estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub grid_step_deg: f64,
    /// Simplex convergence tolerance on every coordinate (radians for angles).
    pub tol: f64,
    pub max_iter: usize,
    pub fov: Fov,
    /// Alternating grid sweeps for multi-signal searches.
    pub sweeps: usize,
    /// Exhaustive pair grid instead of alternating sweeps (P = 2 only).
    #[serde(default)]
    pub brute_force: bool,
    /// Grid local minima refined for single-signal searches. Several starts
    /// guard against a likelihood peak narrower than the grid step losing
    /// to a broad secondary peak on the grid.
    #[serde(default = "default_starts")]
    pub starts: usize,
}

fn default_starts() -> usize {
    3
}

impl OptimizerOptions {
    pub fn new(fov: Fov) -> Self {
        Self {
            grid_step_deg: 1.0,
            tol: 1e-6,
            max_iter: 500,
            fov,
            sweeps: 3,
            brute_force: false,
            starts: default_starts(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fov.validate()?;
        if !(self.grid_step_deg > 0.0) || !(self.tol > 0.0) || self.max_iter == 0 || self.starts == 0 {
            return Err(Error::InvalidParameter(format!("invalid optimizer options {self:?}")));
        }
        Ok(())
    }

    fn angle_step(&self) -> f64 {
        self.grid_step_deg.to_radians()
    }
}

/// Cached complex responses on the search grid. Directions where the model
/// is undefined or has (near) zero norm are dropped.
#[derive(Debug, Clone)]
pub struct ResponseTable {
    pub dirs: Vec<Direction>,
    pub responses: Vec<CVector>,
}

impl ResponseTable {
    pub fn build<R: ArrayResponse + ?Sized>(model: &R, opts: &OptimizerOptions) -> Result<Self> {
        opts.validate()?;
        let mut dirs = Vec::new();
        let mut responses = Vec::new();
        for d in opts.fov.grid(opts.grid_step_deg) {
            if !model.contains(d) {
                continue;
            }
            let a = model.response(d)?;
            if a.norm() < 1e-12 {
                continue;
            }
            dirs.push(d);
            responses.push(a);
        }
        if dirs.is_empty() {
            return Err(Error::InvalidParameter("search grid has no usable direction".into()));
        }
        Ok(Self { dirs, responses })
    }
}

/// Cached gains on the search grid.
#[derive(Debug, Clone)]
pub struct GainTable {
    pub dirs: Vec<Direction>,
    pub gains: Vec<DVector<f64>>,
}

impl GainTable {
    pub fn build<G: GainResponse + ?Sized>(model: &G, opts: &OptimizerOptions) -> Result<Self> {
        opts.validate()?;
        let mut dirs = Vec::new();
        let mut gains = Vec::new();
        for d in opts.fov.grid(opts.grid_step_deg) {
            if !model.contains(d) {
                continue;
            }
            let g = model.gain(d)?;
            if g.norm() < 1e-12 {
                continue;
            }
            dirs.push(d);
            gains.push(g);
        }
        if dirs.is_empty() {
            return Err(Error::InvalidParameter("search grid has no usable direction".into()));
        }
        Ok(Self { dirs, gains })
    }
}

/// Cached co- and cross-polarized responses on the search grid.
#[derive(Debug, Clone)]
pub struct PolarimetricTable {
    pub dirs: Vec<Direction>,
    pub co: Vec<CVector>,
    pub cross: Vec<CVector>,
}

impl PolarimetricTable {
    pub fn build<R: ArrayResponse>(model: &PolarimetricModel<R>, opts: &OptimizerOptions) -> Result<Self> {
        opts.validate()?;
        let mut out = Self {
            dirs: Vec::new(),
            co: Vec::new(),
            cross: Vec::new(),
        };
        for d in opts.fov.grid(opts.grid_step_deg) {
            if !model.contains(d) {
                continue;
            }
            let (a, b) = model.partials(d)?;
            if a.norm() < 1e-12 && b.norm() < 1e-12 {
                continue;
            }
            out.dirs.push(d);
            out.co.push(a);
            out.cross.push(b);
        }
        if out.dirs.is_empty() {
            return Err(Error::InvalidParameter("search grid has no usable direction".into()));
        }
        Ok(out)
    }
}

/// Estimated parameters of one signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalEstimate {
    pub theta: f64,
    pub phi: f64,
    #[serde(default)]
    pub polarization: Option<PolarizationState>,
}

impl SignalEstimate {
    pub fn direction(&self) -> Direction {
        Direction {
            theta: self.theta,
            phi: self.phi,
        }
    }
}

/// Search diagnostics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Best grid directions before refinement.
    pub grid_best: Vec<Direction>,
    pub iterations: usize,
    pub converged: bool,
    /// Condition number of the estimated steering matrix (multi-signal).
    #[serde(default)]
    pub condition: Option<f64>,
    /// Estimated responses are numerically dependent.
    #[serde(default)]
    pub rank_deficient: bool,
}

/// Estimator output. `objective` is the estimator's own criterion at the
/// optimum: the log-likelihood for NC-ML (maximized), a cost otherwise
/// (minimized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub signals: Vec<SignalEstimate>,
    #[serde(default)]
    pub signal_power: Option<f64>,
    #[serde(default)]
    pub noise_power: Option<f64>,
    pub objective: f64,
    pub diagnostics: Diagnostics,
}

/// Smallest value with the first index on ties.
/// Grid neighbours of every cell: adjacent theta rows and phi columns
/// (periodic when the region covers a full turn); a pole neighbours its
/// whole adjacent row. Cells missing from `dirs` are skipped.
fn grid_neighbours(dirs: &[Direction], opts: &OptimizerOptions) -> Vec<Vec<usize>> {
    let step = opts.grid_step_deg;
    let fov = opts.fov;
    let key = |d: &Direction| -> (i64, i64) {
        let i = ((d.theta.to_degrees() - fov.theta_min_deg) / step).round() as i64;
        let j = if fov.planar {
            0
        } else {
            ((d.phi.to_degrees() - fov.phi_min_deg) / step).round() as i64
        };
        (i, j)
    };
    let is_pole =
        |d: &Direction| !fov.planar && (d.theta.abs() < 1e-9 || (d.theta - std::f64::consts::PI).abs() < 1e-9);
    let cols = if fov.planar {
        1
    } else {
        ((fov.phi_max_deg - fov.phi_min_deg) / step + 1e-9).floor() as i64 + 1
    };
    let periodic = !fov.planar && fov.phi_periodic();
    let period = if periodic { (360.0 / step).round() as i64 } else { cols };
    let mut index = std::collections::HashMap::with_capacity(dirs.len());
    let mut rows: std::collections::HashMap<i64, Vec<usize>> = std::collections::HashMap::new();
    for (k, d) in dirs.iter().enumerate() {
        let (i, j) = key(d);
        index.insert((i, if is_pole(d) { 0 } else { j }), k);
        rows.entry(i).or_default().push(k);
    }
    dirs.iter()
        .enumerate()
        .map(|(k, d)| {
            let (i, j) = key(d);
            let mut out = Vec::new();
            if is_pole(d) {
                for r in [i - 1, i + 1] {
                    out.extend(rows.get(&r).into_iter().flatten().copied());
                }
                return out;
            }
            for di in -1..=1 {
                for dj in -1..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let mut jj = j + dj;
                    if periodic {
                        jj = jj.rem_euclid(period);
                    }
                    if let Some(&n) = index
                        .get(&(i + di, jj))
                        .or_else(|| index.get(&(i + di, 0)).filter(|&&n| is_pole(&dirs[n])))
                    {
                        if n != k && !out.contains(&n) {
                            out.push(n);
                        }
                    }
                }
            }
            out
        })
        .collect()
}

/// Up to `opts.starts` grid cells that no neighbour undercuts, in order of
/// increasing cost; the first is the grid minimum. Non-finite cells are never
/// chosen.
pub(crate) fn grid_starts(costs: &[f64], dirs: &[Direction], opts: &OptimizerOptions) -> Vec<usize> {
    let neighbours = grid_neighbours(dirs, opts);
    let mut minima: Vec<usize> = (0..costs.len())
        .filter(|&i| costs[i].is_finite() && neighbours[i].iter().all(|&n| !(costs[n] < costs[i])))
        .collect();
    minima.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    minima.truncate(opts.starts);
    minima
}

/// Refines every start and keeps the lowest objective (the earliest start on
/// ties). A refinement that ends above its start falls back to the start.
pub(crate) fn refine_best<F: Fn(&[f64]) -> f64>(
    f: F,
    starts: &[Vec<f64>],
    steps: &[f64],
    opts: &OptimizerOptions,
) -> (usize, optim::Minimum) {
    let mut best: Option<(usize, optim::Minimum)> = None;
    for (k, x0) in starts.iter().enumerate() {
        let start_value = f(x0);
        let mut m = optim::nelder_mead(&f, x0, steps, opts.tol, opts.max_iter);
        if !(m.f <= start_value) {
            m.x = x0.clone();
            m.f = start_value;
        }
        if best.as_ref().is_none_or(|(_, b)| m.f < b.f) {
            best = Some((k, m));
        }
    }
    best.expect("at least one start")
}

pub(crate) fn argmin(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best
}
