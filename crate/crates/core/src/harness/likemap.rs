//! Normalized likelihood maps of a single noisy realization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SweepConfig;
use super::{trial_seed, with_threads, Context};
use crate::error::{Error, Result};
use crate::estimators::{c_ml_cost, nc_profile_loglik};
use crate::response::{ArrayResponse, GainResponse};
use crate::signal::{gen_snapshots, rss, sample_cov, Scenario};
use crate::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    /// Non-coherent log-likelihood, signal and noise power profiled out.
    NonCoherent,
    /// Negated C-ML cost.
    Coherent,
}

impl MapKind {
    pub fn id(self) -> &'static str {
        match self {
            Self::NonCoherent => "nc",
            Self::Coherent => "c",
        }
    }
}

/// Maps on a `theta x phi` grid (theta-major), normalized to `[-1, 0]`.
/// Cells outside the model are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodMap {
    pub thetas_deg: Vec<f64>,
    pub phis_deg: Vec<f64>,
    pub planar: bool,
    pub phi_periodic: bool,
    pub truth: Direction,
    pub noncoherent: Vec<f64>,
    pub coherent: Vec<f64>,
}

impl LikelihoodMap {
    pub fn values(&self, kind: MapKind) -> &[f64] {
        match kind {
            MapKind::NonCoherent => &self.noncoherent,
            MapKind::Coherent => &self.coherent,
        }
    }

    fn neighbours(&self, idx: usize) -> Vec<usize> {
        let np = self.phis_deg.len();
        let nt = self.thetas_deg.len();
        let (i, j) = (idx / np, idx % np);
        let mut out = Vec::with_capacity(8);
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let ii = i as i64 + di;
                let mut jj = j as i64 + dj;
                if ii < 0 || ii >= nt as i64 {
                    continue;
                }
                if self.phi_periodic {
                    jj = jj.rem_euclid(np as i64);
                } else if jj < 0 || jj >= np as i64 {
                    continue;
                }
                let k = ii as usize * np + jj as usize;
                if k != idx && !out.contains(&k) {
                    out.push(k);
                }
            }
        }
        out
    }

    /// Number of connected regions (8-neighbourhood) with values above
    /// `threshold`.
    pub fn regions_above(&self, kind: MapKind, threshold: f64) -> usize {
        let v = self.values(kind);
        let mut seen = vec![false; v.len()];
        let mut regions = 0;
        for start in 0..v.len() {
            if seen[start] || !(v[start] > threshold) {
                continue;
            }
            regions += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(k) = stack.pop() {
                for n in self.neighbours(k) {
                    if !seen[n] && v[n] > threshold {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        regions
    }

    /// Cells above `threshold` not exceeded by any neighbour.
    pub fn local_maxima_above(&self, kind: MapKind, threshold: f64) -> usize {
        let v = self.values(kind);
        (0..v.len())
            .filter(|&k| v[k] > threshold && self.neighbours(k).iter().all(|&n| !(v[n] > v[k])))
            .count()
    }

    /// Direction of the largest value.
    pub fn argmax(&self, kind: MapKind) -> Direction {
        let v = self.values(kind);
        let (k, _) =
            v.iter()
                .enumerate()
                .filter(|(_, x)| x.is_finite())
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (k, &x)| if x > best.1 { (k, x) } else { best },
                );
        self.direction(k)
    }

    pub fn direction(&self, k: usize) -> Direction {
        let np = self.phis_deg.len();
        let t = self.thetas_deg[k / np].to_radians();
        if self.planar {
            Direction::planar(t)
        } else {
            Direction::new(t, self.phis_deg[k % np].to_radians())
        }
    }
}

fn normalize(v: &mut [f64]) {
    let (lo, hi) = v
        .iter()
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let span = hi - lo;
    for x in v.iter_mut() {
        *x = if x.is_finite() {
            if span > 0.0 {
                (*x - hi) / span
            } else {
                0.0
            }
        } else {
            f64::NAN
        };
    }
}

/// Evaluates both maps for one realization of the scenario's fixed truth,
/// using the first configured model.
pub fn run_likelihood_map(config: &SweepConfig) -> Result<LikelihoodMap> {
    let sc = &config.scenario;
    let theta = sc
        .theta_deg
        .ok_or_else(|| Error::Config("likelihood map needs scenario.theta_deg".into()))?;
    if sc.num_signals != 1 {
        return Err(Error::Config("likelihood map supports one signal".into()));
    }
    let fov = config.fov;
    let truth = if fov.planar {
        Direction::planar(theta.to_radians())
    } else {
        Direction::new(theta.to_radians(), sc.phi_deg.unwrap_or(0.0).to_radians())
    };
    let ctx = Context::new(config)?;
    let model = &ctx.models[0];
    let noise = ctx.noise_power;
    let power = if noise > 0.0 {
        noise * 10f64.powf(sc.snr_db / 10.0)
    } else {
        1.0
    };
    let scenario = Scenario {
        waveform: sc.waveform,
        ..Scenario::single(truth, power, noise, config.snapshots)
    };
    let block = gen_snapshots(&scenario, &ctx.antenna.truth.co, trial_seed(config.seed, 0, 0))?;
    let cov = sample_cov(&block);
    let r = rss(&block);

    let step = config.search.grid_step_deg;
    let axis = |lo: f64, hi: f64, inclusive: bool| -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        let mut v: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
        if !inclusive && v.len() > 1 && (v[v.len() - 1] - hi).abs() < 1e-9 {
            v.pop();
        }
        v
    };
    let thetas = axis(fov.theta_min_deg, fov.theta_max_deg, true);
    let periodic = !fov.planar && fov.phi_max_deg - fov.phi_min_deg >= 360.0 - 1e-9;
    let phis = if fov.planar {
        vec![0.0]
    } else {
        axis(fov.phi_min_deg, fov.phi_max_deg, !periodic)
    };

    let rows: Vec<Vec<(f64, f64)>> = with_threads(config.threads, || {
        thetas
            .par_iter()
            .map(|&t| {
                phis.iter()
                    .map(|&f| {
                        let d = if fov.planar {
                            Direction::planar(t.to_radians())
                        } else {
                            Direction::new(t.to_radians(), f.to_radians())
                        };
                        let nc = if model.gain.contains(d) {
                            model
                                .gain
                                .gain(d)
                                .ok()
                                .and_then(|g| nc_profile_loglik(&r, &g, config.snapshots).ok())
                                .map_or(f64::NAN, |x| x.2)
                        } else {
                            f64::NAN
                        };
                        let c = if model.co.contains(d) {
                            model.co.response(d).map_or(f64::NAN, |a| -c_ml_cost(&cov, &[a]))
                        } else {
                            f64::NAN
                        };
                        (nc, c)
                    })
                    .collect()
            })
            .collect()
    })?;
    let mut noncoherent: Vec<f64> = rows.iter().flatten().map(|x| x.0).collect();
    let mut coherent: Vec<f64> = rows.iter().flatten().map(|x| x.1).collect();
    normalize(&mut noncoherent);
    normalize(&mut coherent);
    Ok(LikelihoodMap {
        thetas_deg: thetas,
        phis_deg: phis,
        planar: fov.planar,
        phi_periodic: periodic,
        truth,
        noncoherent,
        coherent,
    })
}
