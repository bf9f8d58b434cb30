//! Covariance-based estimators: coherent ML (C-ML) and polarimetric ML (P-ML).
//!
//! Both minimize `Re tr{(I - A A^+) R}`. The grid stage works with
//! cost reductions `v^H R v` along the part of a candidate column orthogonal
//! to the columns already fixed, so each signal can be swept on its own.

use std::f64::consts::FRAC_PI_2;

use super::optim::{nelder_mead, Minimum};
use super::{
    argmin, grid_starts, refine_best, Diagnostics, EstimationResult, OptimizerOptions, PolarimetricTable,
    ResponseTable, SignalEstimate,
};
use crate::basis::wrap_pi;
use crate::error::{Error, Result};
use crate::linalg::{
    condition_number, max_generalized_eig_2x2, orthonormalize, quad_form, residual_power, CMatrix, CVector,
};
use crate::response::{ArrayResponse, PolarimetricModel, PolarizationState};
use crate::{Direction, C64};

/// Relative residual below which a column counts as linearly dependent.
const DEPENDENCE_TOL: f64 = 1e-9;
/// Initial simplex steps for the polarization angles (rad).
const POL_STEP: f64 = 0.05;
/// Brute-force pair search is limited to grids of this size.
const MAX_BRUTE_FORCE_CELLS: usize = 20_000;

/// `Re tr{(I - A A^+) R}` for the columns of `A`.
pub fn c_ml_cost(r: &CMatrix, columns: &[CVector]) -> f64 {
    let refs: Vec<&CVector> = columns.iter().collect();
    let (q, _) = orthonormalize(&refs, DEPENDENCE_TOL);
    residual_power(r, &q)
}

/// C-ML cost with polarimetric columns.
pub fn polarimetric_cost<R: ArrayResponse>(
    r: &CMatrix,
    model: &PolarimetricModel<R>,
    dirs: &[Direction],
    pols: &[PolarizationState],
) -> Result<f64> {
    if dirs.len() != pols.len() {
        return Err(Error::Dimension(format!(
            "{} directions, {} polarizations",
            dirs.len(),
            pols.len()
        )));
    }
    let cols = dirs
        .iter()
        .zip(pols)
        .map(|(d, p)| model.response(*d, *p))
        .collect::<Result<Vec<_>>>()?;
    Ok(c_ml_cost(r, &cols))
}

/// Part of `a` orthogonal to the orthonormal set `q`.
fn project_out(a: &CVector, q: &[CVector]) -> CVector {
    let mut v = a.clone();
    for qi in q {
        let c = qi.dotc(&v);
        v.axpy(-c, qi, C64::new(1.0, 0.0));
    }
    v
}

/// Cost reduction of adding column `a` to the fixed span `q`.
fn column_gain(r: &CMatrix, q: &[CVector], a: &CVector) -> Option<f64> {
    let v = project_out(a, q);
    let nn = v.norm_squared();
    if nn <= (DEPENDENCE_TOL * a.norm()).powi(2) || nn == 0.0 {
        return None;
    }
    Some(quad_form(r, &v) / nn)
}

/// Canonical polarization of a weight pair `h ~ (sin g e^{jb}, cos g)`.
fn polarization_from_weights(h: [C64; 2]) -> PolarizationState {
    let n = (h[0].norm_sqr() + h[1].norm_sqr()).sqrt();
    if n == 0.0 {
        return PolarizationState::co();
    }
    let (a0, a1) = (h[0].norm() / n, h[1].norm() / n);
    let gamma = a0.atan2(a1);
    // beta is unidentifiable when either component vanishes
    let beta = if a0 < 1e-12 || a1 < 1e-12 {
        0.0
    } else {
        wrap_pi((h[0] * h[1].conj()).arg())
    };
    PolarizationState::new(gamma, beta)
}

/// Best polarization for one direction given the fixed span `q`: the largest
/// eigenpair of the pencil `(B^H P R P B, B^H P B)` with `B = [a_co a_cross]`.
fn best_polarization(r: &CMatrix, q: &[CVector], co: &CVector, cross: &CVector) -> Option<(f64, PolarizationState)> {
    let pa = project_out(co, q);
    let pb = project_out(cross, q);
    let ra = r * &pa;
    let rb = r * &pb;
    let x = [[pa.dotc(&ra), pa.dotc(&rb)], [pb.dotc(&ra), pb.dotc(&rb)]];
    let y = [[pa.dotc(&pa), pa.dotc(&pb)], [pb.dotc(&pa), pb.dotc(&pb)]];
    let tr = y[0][0].re + y[1][1].re;
    let det = (y[0][0] * y[1][1] - y[0][1] * y[1][0]).re;
    let scale = co.norm_squared() + cross.norm_squared();
    if tr <= (DEPENDENCE_TOL * DEPENDENCE_TOL) * scale {
        return None;
    }
    if det > 1e-10 * tr * tr {
        let (lambda, h) = max_generalized_eig_2x2(&x, &y);
        return Some((lambda, polarization_from_weights(h)));
    }
    // the two partial responses are (nearly) parallel: use the stronger one
    if y[0][0].re >= y[1][1].re {
        Some((x[0][0].re / y[0][0].re, PolarizationState::co()))
    } else {
        Some((x[1][1].re / y[1][1].re, PolarizationState::new(0.0, 0.0)))
    }
}

/// Grid choice for every signal by greedy initialization and alternating
/// sweeps, or exhaustive pairs when requested for two signals.
///
/// `cell` returns the cost reduction and resulting column of a grid cell
/// given an orthonormal basis of the other signals' columns.
fn grid_search<F, T>(n_cells: usize, p: usize, opts: &OptimizerOptions, cell: F) -> Result<Vec<(usize, T)>>
where
    F: Fn(&[CVector], usize) -> Option<(f64, CVector, T)>,
    T: Clone,
{
    let best = |fixed: &[CVector]| -> Result<(usize, CVector, T)> {
        let mut vals: Vec<Option<(f64, CVector, T)>> = (0..n_cells).map(|i| cell(fixed, i)).collect();
        let (i, _) = argmin(vals.iter().map(|v| v.as_ref().map_or(f64::INFINITY, |v| -v.0)))
            .filter(|(_, v)| v.is_finite())
            .ok_or_else(|| Error::NonFinite("no admissible grid cell".into()))?;
        let (_, col, extra) = vals[i].take().expect("finite entry");
        Ok((i, col, extra))
    };
    let basis_of = |cols: &[CVector]| -> Vec<CVector> {
        let refs: Vec<&CVector> = cols.iter().collect();
        orthonormalize(&refs, DEPENDENCE_TOL).0
    };

    if p == 2 && opts.brute_force {
        if n_cells > MAX_BRUTE_FORCE_CELLS {
            return Err(Error::InvalidParameter(format!(
                "brute-force pair search over {n_cells} cells is not supported"
            )));
        }
        let mut best_pair: Option<(f64, [(usize, CVector, T); 2])> = None;
        for i in 0..n_cells {
            let Some((gi, ci, ti)) = cell(&[], i) else { continue };
            let qi = basis_of(std::slice::from_ref(&ci));
            for j in (i + 1)..n_cells {
                let Some((gj, cj, tj)) = cell(&qi, j) else { continue };
                let total = gi + gj;
                if best_pair.as_ref().is_none_or(|(b, _)| total > *b) {
                    best_pair = Some((total, [(i, ci.clone(), ti.clone()), (j, cj, tj)]));
                }
            }
        }
        let (_, pair) = best_pair.ok_or_else(|| Error::NonFinite("no admissible grid pair".into()))?;
        return Ok(pair.into_iter().map(|(i, _, t)| (i, t)).collect());
    }

    let mut chosen: Vec<(usize, CVector, T)> = Vec::with_capacity(p);
    for _ in 0..p {
        let cols: Vec<CVector> = chosen.iter().map(|c| c.1.clone()).collect();
        chosen.push(best(&basis_of(&cols))?);
    }
    if p > 1 {
        for _ in 0..opts.sweeps {
            for k in 0..p {
                let others: Vec<CVector> = chosen
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != k)
                    .map(|(_, c)| c.1.clone())
                    .collect();
                chosen[k] = best(&basis_of(&others))?;
            }
        }
    }
    Ok(chosen.into_iter().map(|(i, _, t)| (i, t)).collect())
}

fn check_covariance(r: &CMatrix, ports: usize, p: usize) -> Result<()> {
    if r.nrows() != ports || r.ncols() != ports {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, model has {ports} ports",
            r.nrows(),
            r.ncols()
        )));
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("covariance".into()));
    }
    if p == 0 || p >= ports {
        return Err(Error::InvalidParameter(format!(
            "need 0 < P < M, got P = {p}, M = {ports}"
        )));
    }
    Ok(())
}

fn finish(
    r: &CMatrix,
    mut signals: Vec<SignalEstimate>,
    columns: Vec<CVector>,
    grid_best: Vec<Direction>,
    m: &Minimum,
) -> EstimationResult {
    signals.sort_by(|a, b| a.theta.total_cmp(&b.theta).then(a.phi.total_cmp(&b.phi)));
    let refs: Vec<&CVector> = columns.iter().collect();
    let (_, dropped) = orthonormalize(&refs, DEPENDENCE_TOL);
    let condition = (columns.len() > 1).then(|| condition_number(&CMatrix::from_columns(&columns)));
    let power = {
        let p = columns.len() as f64;
        // mean per-signal power along the estimated columns
        Some(
            columns
                .iter()
                .map(|a| quad_form(r, a) / a.norm_squared().powi(2))
                .sum::<f64>()
                / p,
        )
    };
    EstimationResult {
        signals,
        signal_power: power,
        noise_power: None,
        objective: m.f,
        diagnostics: Diagnostics {
            grid_best,
            iterations: m.iterations,
            converged: m.converged,
            condition,
            rank_deficient: dropped > 0,
        },
    }
}

/// Coherent ML estimate of `p` directions from a sample covariance.
pub fn c_ml<R: ArrayResponse + ?Sized>(
    r: &CMatrix,
    model: &R,
    p: usize,
    opts: &OptimizerOptions,
) -> Result<EstimationResult> {
    let table = ResponseTable::build(model, opts)?;
    c_ml_with_table(r, model, &table, p, opts)
}

/// [`c_ml`] with a precomputed response table.
pub fn c_ml_with_table<R: ArrayResponse + ?Sized>(
    r: &CMatrix,
    model: &R,
    table: &ResponseTable,
    p: usize,
    opts: &OptimizerOptions,
) -> Result<EstimationResult> {
    check_covariance(r, model.num_ports(), p)?;
    let cell = |q: &[CVector], i: usize| {
        let a = &table.responses[i];
        column_gain(r, q, a).map(|g| (g, a.clone(), ()))
    };
    let starts: Vec<Vec<usize>> = if p == 1 {
        let costs: Vec<f64> = (0..table.dirs.len())
            .map(|i| cell(&[], i).map_or(f64::INFINITY, |c| -c.0))
            .collect();
        grid_starts(&costs, &table.dirs, opts)
            .into_iter()
            .map(|i| vec![i])
            .collect()
    } else {
        vec![grid_search(table.dirs.len(), p, opts, cell)?
            .into_iter()
            .map(|(i, _)| i)
            .collect()]
    };
    if starts.is_empty() {
        return Err(Error::NonFinite("no admissible grid cell".into()));
    }

    let fov = opts.fov;
    let dims = fov.dims();
    let x0s: Vec<Vec<f64>> = starts
        .iter()
        .map(|cells| cells.iter().flat_map(|&i| fov.angles(table.dirs[i])).collect())
        .collect();
    let steps = vec![opts.angle_step(); p * dims];
    let columns_at = |x: &[f64]| -> Option<Vec<CVector>> {
        x.chunks(dims)
            .map(|c| {
                let d = fov.direction(c);
                if model.contains(d) {
                    model.response(d).ok()
                } else {
                    None
                }
            })
            .collect()
    };
    let objective = |x: &[f64]| columns_at(x).map_or(f64::INFINITY, |cols| c_ml_cost(r, &cols));
    let (k, m) = refine_best(objective, &x0s, &steps, opts);
    let grid_best: Vec<Direction> = starts[k].iter().map(|&i| table.dirs[i]).collect();
    let signals =
        m.x.chunks(dims)
            .map(|c| {
                let d = fov.direction(c);
                SignalEstimate {
                    theta: d.theta,
                    phi: d.phi,
                    polarization: None,
                }
            })
            .collect();
    let columns = columns_at(&m.x).ok_or_else(|| Error::NonFinite("C-ML optimum outside model".into()))?;
    Ok(finish(r, signals, columns, grid_best, &m))
}

/// Polarimetric ML estimate of `p` directions and polarizations.
pub fn p_ml<R: ArrayResponse>(
    r: &CMatrix,
    model: &PolarimetricModel<R>,
    p: usize,
    opts: &OptimizerOptions,
) -> Result<EstimationResult> {
    let table = PolarimetricTable::build(model, opts)?;
    p_ml_with_table(r, model, &table, p, opts)
}

/// [`p_ml`] with a precomputed table of partial responses.
pub fn p_ml_with_table<R: ArrayResponse>(
    r: &CMatrix,
    model: &PolarimetricModel<R>,
    table: &PolarimetricTable,
    p: usize,
    opts: &OptimizerOptions,
) -> Result<EstimationResult> {
    let ports = model.num_ports();
    check_covariance(r, ports, p)?;
    let cell = |q: &[CVector], i: usize| {
        let (co, cross) = (&table.co[i], &table.cross[i]);
        best_polarization(r, q, co, cross).map(|(g, pol)| {
            let (wc, wx) = pol.weights();
            (g, co * wc + cross * wx, pol)
        })
    };
    let picks: Vec<Vec<(usize, PolarizationState)>> = if p == 1 {
        let cells: Vec<Option<(f64, CVector, PolarizationState)>> =
            (0..table.dirs.len()).map(|i| cell(&[], i)).collect();
        let costs: Vec<f64> = cells
            .iter()
            .map(|c| c.as_ref().map_or(f64::INFINITY, |c| -c.0))
            .collect();
        grid_starts(&costs, &table.dirs, opts)
            .into_iter()
            .map(|i| vec![(i, cells[i].as_ref().expect("finite cell").2)])
            .collect()
    } else {
        vec![grid_search(table.dirs.len(), p, opts, cell)?]
    };
    if picks.is_empty() {
        return Err(Error::NonFinite("no admissible grid cell".into()));
    }

    let fov = opts.fov;
    let dims = fov.dims();
    let width = dims + 2;
    let unpack = |c: &[f64]| -> (Direction, PolarizationState) {
        let d = fov.direction(&c[..dims]);
        let pol = PolarizationState::new(c[dims].clamp(0.0, FRAC_PI_2), wrap_pi(c[dims + 1]));
        (d, pol)
    };
    let columns_at = |x: &[f64]| -> Option<Vec<CVector>> {
        x.chunks(width)
            .map(|c| {
                let (d, pol) = unpack(c);
                if model.contains(d) {
                    model.response(d, pol).ok()
                } else {
                    None
                }
            })
            .collect()
    };
    let objective = |x: &[f64]| columns_at(x).map_or(f64::INFINITY, |cols| c_ml_cost(r, &cols));
    // direction search with the polarization concentrated out (P = 1)
    let conc = |x: &[f64]| -> f64 {
        let d = fov.direction(x);
        if !model.contains(d) {
            return f64::INFINITY;
        }
        match model.partials(d) {
            Ok((a, b)) => best_polarization(r, &[], &a, &b).map_or(f64::INFINITY, |(g, _)| r.trace().re - g),
            Err(_) => f64::INFINITY,
        }
    };
    let steps: Vec<f64> = (0..p)
        .flat_map(|_| {
            let mut s = vec![opts.angle_step(); dims];
            s.extend([POL_STEP, POL_STEP]);
            s
        })
        .collect();

    let mut best: Option<(usize, Minimum)> = None;
    for (k, cells) in picks.iter().enumerate() {
        let mut x0: Vec<f64> = Vec::with_capacity(width * p);
        for &(i, pol) in cells {
            x0.extend(fov.angles(table.dirs[i]));
            x0.extend([pol.gamma, pol.beta]);
        }
        let mut iterations = 0;
        if p == 1 {
            let start = fov.angles(table.dirs[cells[0].0]);
            let mc = nelder_mead(conc, &start, &vec![opts.angle_step(); dims], opts.tol, opts.max_iter);
            iterations += mc.iterations;
            if mc.f <= conc(&start) {
                let d = fov.direction(&mc.x);
                let (a, b) = model.partials(d)?;
                if let Some((_, pol)) = best_polarization(r, &[], &a, &b) {
                    x0 = mc.x.clone();
                    x0.extend([pol.gamma, pol.beta]);
                }
            }
        }
        let start_value = objective(&x0);
        let mut m = nelder_mead(objective, &x0, &steps, opts.tol, opts.max_iter);
        m.iterations += iterations;
        if !(m.f <= start_value) {
            m.x = x0;
            m.f = start_value;
        }
        if best.as_ref().is_none_or(|(_, b)| m.f < b.f) {
            best = Some((k, m));
        }
    }
    let (k, m) = best.expect("at least one start");
    let grid_best: Vec<Direction> = picks[k].iter().map(|(i, _)| table.dirs[*i]).collect();
    let signals =
        m.x.chunks(width)
            .map(|c| {
                let (d, pol) = unpack(c);
                SignalEstimate {
                    theta: d.theta,
                    phi: d.phi,
                    polarization: Some(pol),
                }
            })
            .collect();
    let columns = columns_at(&m.x).ok_or_else(|| Error::NonFinite("P-ML optimum outside model".into()))?;
    Ok(finish(r, signals, columns, grid_best, &m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{synth_antenna, Slot, SynthMode, SynthParams};
    use crate::estimators::Fov;
    use crate::linalg::projector_perp;
    use crate::response::WmModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn planar_models() -> (WmModel, WmModel) {
        let (_, truth) = synth_antenna(&SynthParams::new(5, 4, 4, SynthMode::XzCut2d, 1.0)).unwrap();
        (
            WmModel::from_truth(&truth, Slot::Co),
            WmModel::from_truth(&truth, Slot::Cross),
        )
    }

    fn outer(a: &CVector, s: f64) -> CMatrix {
        a * a.adjoint() * C64::new(s, 0.0)
    }

    #[test]
    fn cost_matches_projector_trace() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..20 {
            let rand_c = |rng: &mut ChaCha20Rng| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let a = CMatrix::from_fn(4, 2, |_, _| rand_c(&mut rng));
            let x = CMatrix::from_fn(4, 6, |_, _| rand_c(&mut rng));
            let r = &x * x.adjoint();
            let oracle = (projector_perp(&a) * &r).trace().re;
            let cols = vec![a.column(0).into_owned(), a.column(1).into_owned()];
            assert!((c_ml_cost(&r, &cols) - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn c_ml_noiseless_single() {
        let (co, _) = planar_models();
        let opts = OptimizerOptions::new(Fov::planar(-85.0, 85.0));
        for t in [-70.2f64, -3.3, 55.55] {
            let d = Direction::planar(t.to_radians());
            let r = outer(&co.response(d).unwrap(), 2.0);
            let est = c_ml(&r, &co, 1, &opts).unwrap();
            assert!((est.signals[0].theta - d.theta).abs() < 1e-5, "{t}");
            assert!(est.objective.abs() < 1e-9);
        }
    }

    #[test]
    fn c_ml_noiseless_pair_both_searches() {
        let (co, _) = planar_models();
        let (d1, d2) = (Direction::planar(-0.3), Direction::planar(0.4));
        let r = outer(&co.response(d1).unwrap(), 1.0) + outer(&co.response(d2).unwrap(), 0.25);
        let mut opts = OptimizerOptions::new(Fov::planar(-85.0, 85.0));
        for brute in [false, true] {
            opts.brute_force = brute;
            let est = c_ml(&r, &co, 2, &opts).unwrap();
            assert!((est.signals[0].theta + 0.3).abs() < 1e-5, "{brute}: {est:?}");
            assert!((est.signals[1].theta - 0.4).abs() < 1e-5);
            assert!(est.diagnostics.condition.unwrap() >= 1.0);
        }
    }

    #[test]
    fn p_ml_noiseless_recovers_polarization() {
        let (co, cross) = planar_models();
        let model = PolarimetricModel::new(co, cross).unwrap();
        let opts = OptimizerOptions::new(Fov::planar(-85.0, 85.0));
        let truth = PolarizationState::new(0.6, -1.1);
        let d = Direction::planar(0.25);
        let r = outer(&model.response(d, truth).unwrap(), 1.0);
        let est = p_ml(&r, &model, 1, &opts).unwrap();
        let s = est.signals[0];
        let pol = s.polarization.unwrap();
        assert!((s.theta - 0.25).abs() < 1e-5, "{est:?}");
        assert!(
            (pol.gamma - 0.6).abs() < 1e-5 && (pol.beta + 1.1).abs() < 1e-5,
            "{pol:?}"
        );
    }

    #[test]
    fn p_ml_co_polarized_matches_c_ml() {
        let (co, cross) = planar_models();
        let model = PolarimetricModel::new(co.clone(), cross).unwrap();
        let opts = OptimizerOptions::new(Fov::planar(-85.0, 85.0));
        let d = Direction::planar(-0.9);
        let a = model.response(d, PolarizationState::co()).unwrap();
        let noise = CMatrix::from_fn(4, 4, |i, j| C64::new(if i == j { 0.01 } else { 0.0 }, 0.0));
        let r = outer(&a, 1.0) + noise;
        let pe = p_ml(&r, &model, 1, &opts).unwrap();
        let ce = c_ml(&r, &co, 1, &opts).unwrap();
        assert!((pe.signals[0].theta - ce.signals[0].theta).abs() < 1e-5);
        assert!((pe.signals[0].polarization.unwrap().gamma - FRAC_PI_2).abs() < 1e-4);
    }

    #[test]
    fn polarization_canonical_form() {
        let pol = PolarizationState::new(0.3, 2.0);
        let (wc, wx) = pol.weights();
        let phase = C64::from_polar(1.0, -0.7);
        let back = polarization_from_weights([wc * phase * 3.0, wx * phase * 3.0]);
        assert!((back.gamma - 0.3).abs() < 1e-12 && (back.beta - 2.0).abs() < 1e-12);
        assert_eq!(
            polarization_from_weights([C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).gamma,
            0.0
        );
    }
}
