//! Acceptance checks: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines are always shown.
//!
//! Scenario choices (antenna seeds, symmetry, SNR ranges) are pinned below;
//! everything that could be tuned is a named constant.

use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use mmadoa::basis::{basis_eval, basis_eval_real, basis_grad, basis_grad_real};
use mmadoa::bounds::{crb_coherent, crb_polarimetric, fim_noncoherent, AngleSet};
use mmadoa::calibration::{synth_antenna, Slot, SynthMode, SynthParams};
use mmadoa::estimators::Fov;
use mmadoa::harness::{
    run_likelihood_map, run_sweep, write_sweep, AntennaSource, AxisKind, AxisSpec, EstimatorKind, MapKind, ModelSpec,
    SweepConfig, SweepRecord,
};
use mmadoa::linalg::{CMatrix, CVector};
use mmadoa::response::{
    fit_wm, pad_columns, ArrayResponse, GainResponse, PolarimetricModel, PolarizationState, ResponseGains, WmModel,
};
use mmadoa::signal::{gen_snapshots, rss, Scenario};
use mmadoa::{BasisSpec, Direction, C64};

// basis
const GRAM_TOL: f64 = 1e-8;
const GRAM_MAX_DEGREE: usize = 5;
const DERIV_REL_TOL: f64 = 1e-6;
const DERIV_POINTS: usize = 1000;
const BASIS_BUDGET: Duration = Duration::from_secs(10);
// RSS moments
const MOMENT_TRIALS: usize = 10_000;
const MOMENT_SNAPSHOTS: usize = 1000;
const MOMENT_SE: f64 = 4.0;
const SKEW_TOL: f64 = 0.2;
const MOMENT_BUDGET: Duration = Duration::from_secs(30);
// WM exact interpolation
const WM_L_TRUTH: usize = 5;
const WM_GRID_DEG: f64 = 5.0;
const WM_U: usize = 64;
const WM_TOL: f64 = 1e-9;
// AIT floor
const FLOOR_TRIALS: usize = 200;
const FLOOR_WM_MAX: f64 = 1.3;
const FLOOR_AIT_MIN: f64 = 2.0;
const FLOOR_LOW_SNR_FACTOR: f64 = 2.0;
const CAMPAIGN_BUDGET: Duration = Duration::from_secs(600);
// efficiency
const EFF_TRIALS: usize = 500;
const EFF_RANGE: (f64, f64) = (0.9, 1.3);
const EFF_RC_RANGE: (f64, f64) = (0.9, 2.0);
// ambiguity
const AMB_SYMMETRY: f64 = 0.9;
const AMB_SNR: (f64, f64, f64) = (-10.0, 30.0, 2.0);
const AMB_TRIALS: usize = 200;
const AMB_THRESHOLD_FACTOR: f64 = 2.0;
const AMB_FOV_FACTOR: f64 = 3.0;
// two signals
const TWO_TRIALS: usize = 200;
const TWO_SECOND_DB: f64 = -6.0;
const TWO_RATIO_MAX: f64 = 1.5;
const TWO_GROWTH_MIN: f64 = 5.0;
// bounds
const CRB_NC_TOL: f64 = 1e-4;
const CRB_C_TOL: f64 = 1e-3;
const SCALING_TOL: f64 = 1e-12;
// polarimetric
const POL_TRIALS: usize = 200;
const POL_RATIO_MAX: f64 = 1.4;
// likelihood map
const MAP_SNR_DB: f64 = 15.0;
const MAP_THRESHOLD: f64 = -0.1;
const MAP_TRUTH_DEG: (f64, f64) = (30.0, 30.0);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn planar_config(trials: usize) -> SweepConfig {
    SweepConfig {
        trials,
        axis: None,
        ..SweepConfig::planar_default()
    }
}

fn spherical_config(trials: usize, symmetry: f64) -> SweepConfig {
    SweepConfig {
        antenna: AntennaSource::Synth(SynthParams::new(1, 4, 4, SynthMode::FullSphere3d, 5.0).with_symmetry(symmetry)),
        fov: Fov::spherical(0.0, 90.0),
        ..planar_config(trials)
    }
}

fn snr_axis(start: f64, stop: f64, step: f64) -> Option<AxisSpec> {
    Some(AxisSpec {
        kind: AxisKind::Snr,
        start,
        stop,
        step,
    })
}

fn record<'a>(recs: &'a [SweepRecord], axis: f64, model: &str, est: &str, param: &str) -> &'a SweepRecord {
    recs.iter()
        .find(|r| (r.axis_value - axis).abs() < 1e-9 && r.model == model && r.estimator == est && r.parameter == param)
        .unwrap_or_else(|| panic!("no record {axis} {model} {est} {param}"))
}

fn within(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

// ---------------------------------------------------------------- basis

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// three-term recurrence.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    let (mut q0, mut q1) = (1.0, x);
                    for k in 2..=n {
                        let q2 = ((2 * k - 1) as f64 * x * q1 - (k - 1) as f64 * q0) / k as f64;
                        q0 = q1;
                        q1 = q2;
                    }
                    let dq = n as f64 * (x * q1 - q0) / (x * x - 1.0);
                    return (x, 2.0 / ((1.0 - x * x) * dq * dq));
                }
            }
        })
        .collect()
}

fn gram_error(eval: &dyn Fn(Direction) -> DVector<C64>, u: usize) -> f64 {
    // exact for band limit 2 * GRAM_MAX_DEGREE in both angles
    let nodes = gauss_legendre(GRAM_MAX_DEGREE + 2);
    let n_phi = 4 * GRAM_MAX_DEGREE + 4;
    let mut gram = CMatrix::zeros(u, u);
    for &(x, w) in &nodes {
        for k in 0..n_phi {
            let phi = TAU * k as f64 / n_phi as f64;
            let b = eval(Direction::new(x.acos(), phi));
            gram += &b * b.adjoint() * C64::new(w * TAU / n_phi as f64, 0.0);
        }
    }
    (gram - CMatrix::identity(u, u))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn rel_vec_err(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    (a - b).norm() / a.norm().max(1e-300)
}

fn basis_correctness() -> Outcome {
    let t0 = Instant::now();
    let complex = BasisSpec::complex_sh(GRAM_MAX_DEGREE);
    let real = BasisSpec::real_sh(GRAM_MAX_DEGREE);
    let u = complex.size;
    let g_c = gram_error(&|d| basis_eval(&complex, d).unwrap(), u);
    let g_r = gram_error(&|d| basis_eval_real(&real, d).unwrap().map(|v| C64::new(v, 0.0)), u);

    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let specs = [
        complex,
        real,
        BasisSpec::fourier1d(21).unwrap(),
        BasisSpec::fourier2d(81).unwrap(),
    ];
    for _ in 0..DERIV_POINTS {
        let t = rng.random_range(0.1..PI - 0.1);
        let p = rng.random_range(0.0..TAU);
        for spec in &specs {
            let planar = spec.kind == mmadoa::BasisKind::Fourier1d;
            let at = |t: f64, p: f64| {
                if planar {
                    Direction::planar(t)
                } else {
                    Direction { theta: t, phi: p }
                }
            };
            let (gt, gp) = if spec.kind == mmadoa::BasisKind::RealSh {
                let (a, b) = basis_grad_real(spec, at(t, p)).unwrap();
                (a.map(|v| C64::new(v, 0.0)), b.map(|v| C64::new(v, 0.0)))
            } else {
                basis_grad(spec, at(t, p)).unwrap()
            };
            let ev = |t: f64, p: f64| -> DVector<C64> {
                if spec.kind == mmadoa::BasisKind::RealSh {
                    basis_eval_real(spec, at(t, p)).unwrap().map(|v| C64::new(v, 0.0))
                } else {
                    basis_eval(spec, at(t, p)).unwrap()
                }
            };
            let fd_t = (ev(t + h, p) - ev(t - h, p)) / C64::new(2.0 * h, 0.0);
            worst = worst.max(rel_vec_err(&gt, &fd_t));
            if !planar {
                let fd_p = (ev(t, p + h) - ev(t, p - h)) / C64::new(2.0 * h, 0.0);
                worst = worst.max(rel_vec_err(&gp, &fd_p));
            }
        }
    }
    let elapsed = t0.elapsed();
    Outcome::new(
        g_c < GRAM_TOL && g_r < GRAM_TOL && worst < DERIV_REL_TOL && elapsed < BASIS_BUDGET,
        format!(
            "Gram max|G-I| complex {g_c:.1e}, real {g_r:.1e} (tol {GRAM_TOL:.0e}); max derivative rel err {worst:.1e} over {DERIV_POINTS} points x 4 bases (tol {DERIV_REL_TOL:.0e}); {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- moments

fn rss_moments_match_model() -> Outcome {
    let t0 = Instant::now();
    let (_, truth) = synth_antenna(&SynthParams::new(1, 4, 4, SynthMode::XzCut2d, 1.0)).unwrap();
    let model = WmModel::from_truth(&truth, Slot::Co);
    let dir = Direction::planar(0.4);
    let (s, s2, n) = (1.0, 0.5, MOMENT_SNAPSHOTS);
    let g = ResponseGains(&model).gain(dir).unwrap();
    let scenario = Scenario::single(dir, s, s2, n);
    let samples: Vec<DVector<f64>> = (0..MOMENT_TRIALS as u64)
        .map(|t| rss(&gen_snapshots(&scenario, &model, 5000 + t).unwrap()))
        .collect();
    let tn = MOMENT_TRIALS as f64;
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    let mut worst_skew: f64 = 0.0;
    for m in 0..g.len() {
        let mu = g[m] * s + s2;
        let var = (s2 * s2 + 2.0 * s2 * s * g[m]) / n as f64;
        let xs: Vec<f64> = samples.iter().map(|r| r[m]).collect();
        let mean = xs.iter().sum::<f64>() / tn;
        let v = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (tn - 1.0);
        let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / tn;
        worst_mean = worst_mean.max((mean - mu).abs() / (var / tn).sqrt());
        worst_var = worst_var.max((v - var).abs() / (var * (2.0 / (tn - 1.0)).sqrt()));
        worst_skew = worst_skew.max((m3 / v.powf(1.5)).abs());
    }
    let elapsed = t0.elapsed();
    Outcome::new(
        worst_mean < MOMENT_SE && worst_var < MOMENT_SE && worst_skew < SKEW_TOL && elapsed < MOMENT_BUDGET,
        format!(
            "{MOMENT_TRIALS} trials, N={MOMENT_SNAPSHOTS}: max |mean dev| {worst_mean:.2} SE, max |var dev| {worst_var:.2} SE (tol {MOMENT_SE}), max |skew| {worst_skew:.3} (tol {SKEW_TOL}); {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- WM fit

fn wm_exact_interpolation() -> Outcome {
    let (cal, truth) = synth_antenna(&SynthParams::new(
        1,
        4,
        WM_L_TRUTH,
        SynthMode::FullSphere3d,
        WM_GRID_DEG,
    ))
    .unwrap();
    let basis = BasisSpec::new(mmadoa::BasisKind::ComplexSh, WM_U).unwrap();
    let model = fit_wm(&cal, basis, Slot::Co).unwrap();
    let mut residual: f64 = 0.0;
    for (q, d) in cal.grid.directions().into_iter().enumerate() {
        let a = model.response(d).unwrap();
        for m in 0..a.len() {
            residual = residual.max((a[m] - cal.co[(m, q)]).norm());
        }
    }
    let g_err = (&model.g - pad_columns(&truth.g_co, WM_U))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    Outcome::new(
        residual < WM_TOL && g_err < WM_TOL,
        format!(
            "L_truth={WM_L_TRUTH}, {WM_GRID_DEG} deg grid, U={WM_U}: max grid residual {residual:.1e}, max |G - G_truth| {g_err:.1e} (tol {WM_TOL:.0e})"
        ),
    )
}

// ---------------------------------------------------------------- campaigns

fn ait_error_floor() -> Outcome {
    let t0 = Instant::now();
    let cfg = SweepConfig {
        models: vec![
            ModelSpec::Wm {
                name: "wm".into(),
                basis: None,
                size: None,
            },
            ModelSpec::Ait {
                name: "ait".into(),
                width_deg: 30.0,
                overlap_deg: 15.0,
                geometry: None,
            },
        ],
        axis: snr_axis(0.0, 40.0, 5.0),
        ..planar_config(FLOOR_TRIALS)
    };
    let recs = run_sweep(&cfg).unwrap();
    let wm40 = record(&recs, 40.0, "wm", "c-ml", "theta").ratio;
    let ait40 = record(&recs, 40.0, "ait", "c-ml", "theta").ratio;
    let low: Vec<f64> = [0.0, 5.0]
        .iter()
        .map(|&snr| {
            let a = record(&recs, snr, "wm", "c-ml", "theta").rmse_deg;
            let b = record(&recs, snr, "ait", "c-ml", "theta").rmse_deg;
            a.max(b) / a.min(b)
        })
        .collect();
    let elapsed = t0.elapsed();
    Outcome::new(
        wm40 < FLOOR_WM_MAX
            && ait40 > FLOOR_AIT_MIN
            && low.iter().all(|f| *f <= FLOOR_LOW_SNR_FACTOR)
            && elapsed < CAMPAIGN_BUDGET,
        format!(
            "40 dB RMSE/sqrt(CRB): WM {wm40:.3} (< {FLOOR_WM_MAX}), AIT {ait40:.2} (> {FLOOR_AIT_MIN}); AIT/WM RMSE factor at 0/5 dB {:.2}/{:.2} (<= {FLOOR_LOW_SNR_FACTOR}); {:.1}s",
            low[0],
            low[1],
            elapsed.as_secs_f64()
        ),
    )
}

fn estimator_efficiency() -> Outcome {
    let t0 = Instant::now();
    let cfg = SweepConfig {
        estimators: vec![EstimatorKind::CMl, EstimatorKind::NcMl, EstimatorKind::NcRc],
        ..planar_config(EFF_TRIALS)
    };
    let recs = run_sweep(&cfg).unwrap();
    let ratio = |e: &str| record(&recs, 0.0, "wm", e, "theta").ratio;
    let (c, nc, rc) = (ratio("c-ml"), ratio("nc-ml"), ratio("nc-rc"));
    let elapsed = t0.elapsed();
    Outcome::new(
        within(c, EFF_RANGE) && within(nc, EFF_RANGE) && within(rc, EFF_RC_RANGE) && elapsed < CAMPAIGN_BUDGET,
        format!(
            "20 dB, theta uniform over [-85, 85], {EFF_TRIALS} trials: C-ML {c:.3}, NC-ML {nc:.3} (in {EFF_RANGE:?}), NC-RC {rc:.3} (in {EFF_RC_RANGE:?}); {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn threshold(recs: &[SweepRecord], est: &str) -> Option<f64> {
    let mut pts: Vec<&SweepRecord> = recs.iter().filter(|r| r.estimator == est).collect();
    pts.sort_by(|a, b| a.axis_value.total_cmp(&b.axis_value));
    pts.iter()
        .find(|r| r.rmse_deg < AMB_THRESHOLD_FACTOR * r.crb_std_deg)
        .map(|r| r.axis_value)
}

fn ambiguity_ordering() -> Outcome {
    let t0 = Instant::now();
    let (lo, hi, step) = AMB_SNR;
    let antenna = AntennaSource::Synth(SynthParams::new(1, 4, 4, SynthMode::XzCut2d, 1.0).with_symmetry(AMB_SYMMETRY));
    let full = SweepConfig {
        antenna: antenna.clone(),
        estimators: vec![EstimatorKind::CMl, EstimatorKind::NcMl],
        axis: snr_axis(lo, hi, step),
        ..planar_config(AMB_TRIALS)
    };
    let split = SweepConfig {
        estimators: vec![EstimatorKind::NcMl],
        split_fov: true,
        axis: snr_axis(lo, lo, step),
        ..full.clone()
    };
    let recs = run_sweep(&full).unwrap();
    let split_recs = run_sweep(&split).unwrap();
    let tc = threshold(&recs, "c-ml");
    let tn = threshold(&recs, "nc-ml");
    let wide = record(&recs, lo, "wm", "nc-ml", "theta").rmse_deg;
    let narrow = record(&split_recs, lo, "wm", "nc-ml", "theta").rmse_deg;
    let ordered = match (tc, tn) {
        (Some(c), Some(n)) => c < n,
        _ => false,
    };
    let elapsed = t0.elapsed();
    Outcome::new(
        ordered && wide >= AMB_FOV_FACTOR * narrow && elapsed < CAMPAIGN_BUDGET,
        format!(
            "symmetry {AMB_SYMMETRY}, SNR {lo}..{hi} dB: threshold (RMSE < {AMB_THRESHOLD_FACTOR} sqrt(CRB)) C-ML {tc:?} dB < NC-ML {tn:?} dB [reference values ~7 vs ~13 dB, not asserted]; NC-ML RMSE at {lo} dB: 170 deg FOV {wide:.2} vs 85 deg FOV {narrow:.2} deg = {:.1}x (>= {AMB_FOV_FACTOR}); {:.1}s",
            wide / narrow,
            elapsed.as_secs_f64()
        ),
    )
}

fn two_signal_separation() -> Outcome {
    let t0 = Instant::now();
    let mut cfg = SweepConfig {
        axis: Some(AxisSpec {
            kind: AxisKind::Separation,
            start: 5.0,
            stop: 40.0,
            step: 35.0,
        }),
        ..planar_config(TWO_TRIALS)
    };
    cfg.scenario.num_signals = 2;
    cfg.scenario.second_power_db = TWO_SECOND_DB;
    let recs = run_sweep(&cfg).unwrap();
    let r = |sep: f64, p: &str| record(&recs, sep, "wm", "c-ml", p);
    let ratios = [r(40.0, "theta_1").ratio, r(40.0, "theta_2").ratio];
    let growth = [
        r(5.0, "theta_1").rmse_deg / r(40.0, "theta_1").rmse_deg,
        r(5.0, "theta_2").rmse_deg / r(40.0, "theta_2").rmse_deg,
    ];
    let elapsed = t0.elapsed();
    Outcome::new(
        ratios.iter().all(|v| *v < TWO_RATIO_MAX) && growth.iter().all(|v| *v >= TWO_GROWTH_MIN) && elapsed < CAMPAIGN_BUDGET,
        format!(
            "P=2, second signal {TWO_SECOND_DB} dB, 20 dB: RMSE/sqrt(CRB) at 40 deg {:.3}/{:.3} (< {TWO_RATIO_MAX}); RMSE growth 40 -> 5 deg {:.1}x/{:.1}x (>= {TWO_GROWTH_MIN}); {:.1}s",
            ratios[0],
            ratios[1],
            growth[0],
            growth[1],
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- bounds

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Negative Hessian of the expected Gaussian log-likelihood of the RSS
/// vector, by central differences through the gain model only.
fn numeric_nc_fim(model: &dyn GainResponse, x0: &[f64], planar: bool, n: f64) -> DMatrix<f64> {
    let na = if planar { 1 } else { 2 };
    let moments = |x: &[f64]| {
        let d = if planar {
            Direction::planar(x[0])
        } else {
            Direction { theta: x[0], phi: x[1] }
        };
        let (s, s2) = (x[na], x[na + 1]);
        let g = model.gain(d).unwrap();
        let mu: Vec<f64> = g.iter().map(|gm| gm * s + s2).collect();
        let var: Vec<f64> = g.iter().map(|gm| (s2 * s2 + 2.0 * s2 * s * gm) / n).collect();
        (mu, var)
    };
    let (mu0, var0) = moments(x0);
    let expected = |x: &[f64]| -> f64 {
        let (mu, var) = moments(x);
        (0..mu.len())
            .map(|p| -0.5 * (var[p].ln() + (var0[p] + (mu0[p] - mu[p]).powi(2)) / var[p]))
            .sum()
    };
    let k = x0.len();
    let h: Vec<f64> = x0.iter().map(|v| 1e-4 * v.abs().max(1e-2)).collect();
    DMatrix::from_fn(k, k, |i, j| {
        let at = |si: f64, sj: f64| {
            let mut x = x0.to_vec();
            x[i] += si * h[i];
            x[j] += sj * h[j];
            expected(&x)
        };
        -(at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h[i] * h[j])
    })
}

/// CRB of the angle-like parameters of the deterministic-signal model
/// `r(n) = A(eta) s(n) + w(n)`: full FIM over `eta` and every waveform sample
/// by finite differences, waveforms removed by Schur complement.
fn numeric_coherent_crb(
    response: &dyn Fn(&[f64]) -> Vec<CVector>,
    eta: &[f64],
    s: &CMatrix,
    noise: f64,
) -> DMatrix<f64> {
    let (p, n) = (s.nrows(), s.ncols());
    let a0 = CMatrix::from_columns(&response(eta));
    let m = a0.nrows();
    let k = eta.len();
    let h = 1e-6;
    let mut cols: Vec<CVector> = Vec::new();
    for i in 0..k {
        let (mut xp, mut xm) = (eta.to_vec(), eta.to_vec());
        xp[i] += h;
        xm[i] -= h;
        let da =
            (CMatrix::from_columns(&response(&xp)) - CMatrix::from_columns(&response(&xm))) / C64::new(2.0 * h, 0.0);
        let dmu = da * s;
        cols.push(CVector::from_iterator(m * n, dmu.iter().cloned()));
    }
    for t in 0..n {
        for q in 0..p {
            for unit in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let mut v = CVector::zeros(m * n);
                for r in 0..m {
                    v[t * m + r] = a0[(r, q)] * unit;
                }
                cols.push(v);
            }
        }
    }
    let j = CMatrix::from_columns(&cols);
    let full = (j.adjoint() * &j).map(|z| 2.0 * z.re / noise);
    let jaa = full.view((0, 0), (k, k)).into_owned();
    let jab = full.view((0, k), (k, full.ncols() - k)).into_owned();
    let jbb = full.view((k, k), (full.nrows() - k, full.ncols() - k)).into_owned();
    (jaa - &jab * jbb.try_inverse().unwrap() * jab.transpose())
        .try_inverse()
        .unwrap()
}

fn min_eig_ratio(m: &DMatrix<f64>) -> f64 {
    let e = m.clone().symmetric_eigen().eigenvalues;
    let max = e.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    e.min() / max.max(1e-300)
}

fn waveforms(rng: &mut ChaCha20Rng, p: usize, n: usize) -> CMatrix {
    CMatrix::from_fn(p, n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn crb_validity() -> Outcome {
    let (_, t3) = synth_antenna(&SynthParams::new(21, 4, 4, SynthMode::FullSphere3d, 5.0)).unwrap();
    let (_, t2) = synth_antenna(&SynthParams::new(21, 4, 4, SynthMode::XzCut2d, 1.0)).unwrap();
    let co3 = WmModel::from_truth(&t3, Slot::Co);
    let pol3 = PolarimetricModel::new(co3.clone(), WmModel::from_truth(&t3, Slot::Cross)).unwrap();
    let co2 = WmModel::from_truth(&t2, Slot::Co);
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let (mut nc_err, mut c_err, mut p_err, mut min_eig, mut scale_err): (f64, f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 1.0, 0.0);

    for _ in 0..10 {
        let (s, s2) = (rng.random_range(0.5..3.0), rng.random_range(0.05..0.5));
        // non-coherent: 3D and planar
        let d3 = Direction::new(rng.random_range(0.3..2.8), rng.random_range(0.0..6.2));
        let f3 = fim_noncoherent(&ResponseGains(&co3), d3, s, s2, 1000, AngleSet::ThetaPhi, false).unwrap();
        nc_err = nc_err.max(rel_err(
            &f3.fim,
            &numeric_nc_fim(&ResponseGains(&co3), &[d3.theta, d3.phi, s, s2], false, 1000.0),
        ));
        let d2 = Direction::planar(rng.random_range(-1.4..1.4));
        let f2 = fim_noncoherent(&ResponseGains(&co2), d2, s, s2, 1000, AngleSet::Theta, false).unwrap();
        nc_err = nc_err.max(rel_err(
            &f2.fim,
            &numeric_nc_fim(&ResponseGains(&co2), &[d2.theta, s, s2], true, 1000.0),
        ));
        min_eig = min_eig.min(min_eig_ratio(&f3.crb)).min(min_eig_ratio(&f2.crb));
        // homogeneity: (s, sigma^2) -> k (s, sigma^2) leaves angles, scales powers by k^2
        let k = 3.0;
        let fk = fim_noncoherent(&ResponseGains(&co3), d3, k * s, k * s2, 1000, AngleSet::ThetaPhi, false).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let w = if i >= 2 { k } else { 1.0 } * if j >= 2 { k } else { 1.0 };
                let e = (fk.crb[(i, j)] - w * f3.crb[(i, j)]).abs() / (w * f3.crb[(i, j)]).abs().max(1e-300);
                scale_err = scale_err.max(e.min((fk.crb[(i, j)] - w * f3.crb[(i, j)]).abs() / (w * f3.crb.norm())));
            }
        }

        // coherent, P = 1 and 2
        for p in [1usize, 2] {
            let dirs: Vec<Direction> = (0..p)
                .map(|i| {
                    Direction::new(
                        0.6 + 1.2 * i as f64 + rng.random_range(0.0..0.3),
                        rng.random_range(0.0..6.0),
                    )
                })
                .collect();
            let n = 6;
            let w = waveforms(&mut rng, p, n);
            let rs = &w * w.adjoint() / C64::new(n as f64, 0.0);
            let crb = crb_coherent(&co3, &dirs, &rs, s2, n, AngleSet::ThetaPhi).unwrap();
            let eta: Vec<f64> = dirs.iter().map(|d| d.theta).chain(dirs.iter().map(|d| d.phi)).collect();
            let resp = |x: &[f64]| -> Vec<CVector> {
                (0..p)
                    .map(|i| {
                        co3.response(Direction {
                            theta: x[i],
                            phi: x[p + i],
                        })
                        .unwrap()
                    })
                    .collect()
            };
            c_err = c_err.max(rel_err(&crb.crb, &numeric_coherent_crb(&resp, &eta, &w, s2)));
            min_eig = min_eig.min(min_eig_ratio(&crb.crb));
            // exact 1/N and sigma^2 scaling at fixed R_s
            let c2n = crb_coherent(&co3, &dirs, &rs, s2, 2 * n, AngleSet::ThetaPhi).unwrap();
            let c2s = crb_coherent(&co3, &dirs, &rs, 2.0 * s2, n, AngleSet::ThetaPhi).unwrap();
            scale_err = scale_err
                .max(rel_err(&(c2n.crb * 2.0), &crb.crb))
                .max(rel_err(&(c2s.crb * 0.5), &crb.crb));
        }

        // polarimetric, P = 1
        let d = Direction::new(rng.random_range(0.4..2.6), rng.random_range(0.0..6.0));
        let pol = PolarizationState::new(rng.random_range(0.2..1.3), rng.random_range(-3.0..3.0));
        let n = 5;
        let w = waveforms(&mut rng, 1, n);
        let rs = &w * w.adjoint() / C64::new(n as f64, 0.0);
        let crb = crb_polarimetric(&pol3, &[d], &[pol], &rs, s2, n, AngleSet::ThetaPhi).unwrap();
        let resp = |x: &[f64]| {
            vec![pol3
                .response(Direction { theta: x[0], phi: x[1] }, PolarizationState::new(x[2], x[3]))
                .unwrap()]
        };
        p_err = p_err.max(rel_err(
            &crb.crb,
            &numeric_coherent_crb(&resp, &[d.theta, d.phi, pol.gamma, pol.beta], &w, s2),
        ));
        min_eig = min_eig.min(min_eig_ratio(&crb.crb));
        let c2n = crb_polarimetric(&pol3, &[d], &[pol], &rs, s2, 2 * n, AngleSet::ThetaPhi).unwrap();
        scale_err = scale_err.max(rel_err(&(c2n.crb * 2.0), &crb.crb));
    }
    Outcome::new(
        nc_err < CRB_NC_TOL && c_err < CRB_C_TOL && p_err < CRB_C_TOL && min_eig > -1e-12 && scale_err < SCALING_TOL,
        format!(
            "FIM/CRB vs numeric oracles: NC {nc_err:.1e} (< {CRB_NC_TOL:.0e}), coherent {c_err:.1e}, polarimetric {p_err:.1e} (< {CRB_C_TOL:.0e}); min eigenvalue / max {min_eig:.1e} (PSD); scaling error {scale_err:.1e} (< {SCALING_TOL:.0e})"
        ),
    )
}

// ---------------------------------------------------------------- polarimetric

fn polarimetric_recovery() -> Outcome {
    let t0 = Instant::now();
    let mut cfg = SweepConfig {
        estimators: vec![EstimatorKind::PMl],
        ..spherical_config(POL_TRIALS, 0.0)
    };
    cfg.scenario.truth_region = Some(Fov::spherical(0.0, 80.0));
    cfg.scenario.gamma_deg = Some([10.0, 80.0]);
    cfg.scenario.beta_deg = [-180.0, 180.0];
    let recs = run_sweep(&cfg).unwrap();
    let ratios: Vec<(String, f64)> = ["theta", "phi", "gamma", "beta"]
        .iter()
        .map(|p| (p.to_string(), record(&recs, 0.0, "wm", "p-ml", p).ratio))
        .collect();
    let elapsed = t0.elapsed();
    let list: Vec<String> = ratios.iter().map(|(p, r)| format!("{p} {r:.3}")).collect();
    Outcome::new(
        ratios.iter().all(|(_, r)| *r < POL_RATIO_MAX) && elapsed < CAMPAIGN_BUDGET,
        format!(
            "3D, 20 dB, {POL_TRIALS} trials, theta in [0, 80), phi in [0, 360), gamma in [10, 80], beta in [-180, 180): RMSE/sqrt(CRB) {} (< {POL_RATIO_MAX}); {:.1}s",
            list.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- likelihood map

fn map_config(theta: f64, phi: f64) -> SweepConfig {
    let mut cfg = spherical_config(1, AMB_SYMMETRY);
    cfg.scenario.snr_db = MAP_SNR_DB;
    cfg.scenario.theta_deg = Some(theta);
    cfg.scenario.phi_deg = Some(phi);
    cfg
}

fn likelihood_map_structure() -> Outcome {
    let (t, p) = MAP_TRUTH_DEG;
    let map = run_likelihood_map(&map_config(t, p)).unwrap();
    let c = map.regions_above(MapKind::Coherent, MAP_THRESHOLD);
    let nc = map.regions_above(MapKind::NonCoherent, MAP_THRESHOLD);
    let peak = map.argmax(MapKind::Coherent);
    let (pt, pp) = (peak.theta.to_degrees(), peak.phi.to_degrees());
    let near = (pt - t).abs() <= 1.0 + 1e-9 && ((pp - p + 180.0).rem_euclid(360.0) - 180.0).abs() <= 1.0 + 1e-9;
    // robustness over further truths, reported only
    let mut held = 0;
    let others = [20.0, 45.0, 60.0];
    let phis = [30.0, 120.0, 250.0];
    for &ot in &others {
        for &op in &phis {
            let m = run_likelihood_map(&map_config(ot, op)).unwrap();
            if m.regions_above(MapKind::Coherent, MAP_THRESHOLD) == 1
                && m.regions_above(MapKind::NonCoherent, MAP_THRESHOLD) >= 2
            {
                held += 1;
            }
        }
    }
    Outcome::new(
        c == 1 && nc >= 2 && near,
        format!(
            "3D, symmetry {AMB_SYMMETRY}, {MAP_SNR_DB} dB, truth ({t}, {p}) deg: regions above {MAP_THRESHOLD} coherent {c} (== 1), non-coherent {nc} (>= 2); coherent peak ({pt:.0}, {pp:.0}) deg; [info: both conditions hold for {held}/9 other truths]"
        ),
    )
}

// ---------------------------------------------------------------- determinism

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = SweepConfig {
        estimators: vec![EstimatorKind::CMl, EstimatorKind::NcMl, EstimatorKind::NcRc],
        axis: snr_axis(0.0, 10.0, 5.0),
        ..planar_config(50)
    };
    let mut files = Vec::new();
    for (k, threads) in [Some(1), Some(4), Some(4), None].into_iter().enumerate() {
        let cfg = SweepConfig {
            threads,
            ..base.clone()
        };
        let path = dir.path().join(format!("run{k}.csv"));
        write_sweep(&path, &run_sweep(&cfg).unwrap(), &cfg).unwrap();
        files.push((
            std::fs::read(&path).unwrap(),
            std::fs::read(path.with_extension("json")).unwrap(),
        ));
    }
    let same = files.windows(2).all(|w| w[0] == w[1]);
    Outcome::new(
        same,
        format!(
            "4 runs (threads 1, 4, 4, default), same seed: CSV and sidecar byte-identical = {same} ({} bytes)",
            files[0].0.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("basis correctness", basis_correctness),
        ("RSS moments", rss_moments_match_model),
        ("WM exact interpolation", wm_exact_interpolation),
        ("AIT vs WM error floor", ait_error_floor),
        ("estimator efficiency", estimator_efficiency),
        ("ambiguity ordering", ambiguity_ordering),
        ("two-signal separation", two_signal_separation),
        ("CRB validity", crb_validity),
        ("polarimetric recovery", polarimetric_recovery),
        ("likelihood-map structure", likelihood_map_structure),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = check();
        println!("{} [{name}] {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
