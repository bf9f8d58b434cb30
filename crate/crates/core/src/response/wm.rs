//! Wavefield modeling: `a(theta, phi) = G b(theta, phi)`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ArrayResponse, GainResponse};
use crate::basis::{
    basis_eval, basis_eval_real, basis_grad, basis_grad_real, wrap_2pi, BasisKind, BasisSpec, Direction, C64,
};
use crate::calibration::{CalibrationSet, Slot, SyntheticAntennaTruth};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, serde_cmatrix, serde_rmatrix, CMatrix, CVector};

/// Largest accepted condition number of `B B^H`.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Rule-of-thumb number of basis functions for an antenna enclosed by a
/// sphere of radius `R_s`, rounded up to a valid size for `kind`.
///
/// Fourier1D: `4 kR + 1` (odd); spherical harmonics: `8 (kR)^2 + 4 kR + 1`
/// (square); Fourier2D: `(4 kR + 1)^2` (odd square).
pub fn truncation_order(kappa_rs: f64, kind: BasisKind) -> usize {
    let up = |x: f64| (x - 1e-9).ceil().max(1.0) as usize;
    let odd = |n: usize| if n % 2 == 0 { n + 1 } else { n };
    match kind {
        BasisKind::Fourier1d => odd(up(4.0 * kappa_rs + 1.0)),
        BasisKind::ComplexSh | BasisKind::RealSh => {
            let u = up(8.0 * kappa_rs * kappa_rs + 4.0 * kappa_rs + 1.0);
            let r = up((u as f64).sqrt());
            r * r
        }
        BasisKind::Fourier2d => {
            let r = odd(up(4.0 * kappa_rs + 1.0));
            r * r
        }
    }
}

/// Options for the least-squares fits.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    /// Weight 3D samples by `sin(theta)` (area element). Off by default.
    #[serde(default)]
    pub area_weighting: bool,
}

/// Quality figures of a fit, evaluated on the calibration grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Condition number of `B B^H`.
    pub gram_condition: f64,
    pub max_residual: f64,
    pub rms_residual: f64,
    pub warnings: Vec<String>,
}

/// Sample directions used for a fit together with the grid column they copy.
///
/// Fourier2D on spherical data uses the torus extension
/// `a(2pi - theta, phi + pi) = a(theta, phi)` for samples off the poles.
fn fit_points(cal: &CalibrationSet, kind: BasisKind) -> Result<Vec<(Direction, usize)>> {
    let planar = cal.grid.is_planar();
    match (kind, planar) {
        (BasisKind::Fourier1d, false) => {
            return Err(Error::InvalidBasis(
                "Fourier1D needs a planar (phi_count = 1) grid".into(),
            ))
        }
        (BasisKind::Fourier2d, true) => return Err(Error::InvalidBasis("Fourier2D needs a spherical grid".into())),
        _ => {}
    }
    let mut pts: Vec<(Direction, usize)> = (0..cal.num_samples()).map(|q| (cal.grid.direction(q), q)).collect();
    if kind == BasisKind::Fourier2d {
        for q in 0..cal.num_samples() {
            let d = cal.grid.direction(q);
            if d.theta > 1e-9 && d.theta < PI - 1e-9 {
                pts.push((
                    Direction {
                        theta: TAU - d.theta,
                        phi: wrap_2pi(d.phi + PI),
                    },
                    q,
                ));
            }
        }
    }
    Ok(pts)
}

fn row_weight(cal: &CalibrationSet, opts: &FitOptions, d: Direction) -> f64 {
    if opts.area_weighting && !cal.grid.is_planar() {
        d.on_sphere().0.sin().sqrt()
    } else {
        1.0
    }
}

fn check_sizes(u: usize, q: usize, m: usize, warnings: &mut Vec<String>) -> Result<()> {
    if u > q {
        return Err(Error::InvalidParameter(format!(
            "basis size U = {u} exceeds the {q} fit samples"
        )));
    }
    if u < m {
        warnings.push(format!("U = {u} is smaller than the port count M = {m}"));
    }
    if 4 * u > q {
        warnings.push(format!("U = {u} is not much smaller than Q = {q} (U <= Q/4 advised)"));
    }
    Ok(())
}

fn check_condition(cond_b: f64) -> Result<f64> {
    let gram = cond_b * cond_b;
    if !(gram <= MAX_GRAM_CONDITION) {
        return Err(Error::RankDeficient { cond: gram });
    }
    Ok(gram)
}

/// Complex wavefield model of one polarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmModel {
    /// `M x U` sampling matrix.
    #[serde(with = "serde_cmatrix")]
    pub g: CMatrix,
    pub basis: BasisSpec,
    #[serde(default)]
    pub slot: Slot,
    #[serde(default)]
    pub diagnostics: FitDiagnostics,
}

impl WmModel {
    pub fn new(g: CMatrix, basis: BasisSpec) -> Self {
        Self {
            g,
            basis,
            slot: Slot::Co,
            diagnostics: FitDiagnostics::default(),
        }
    }

    /// The exact continuous response of a synthetic antenna.
    pub fn from_truth(truth: &SyntheticAntennaTruth, slot: Slot) -> Self {
        Self {
            g: truth.sampling_matrix(slot).clone(),
            basis: truth.basis,
            slot,
            diagnostics: FitDiagnostics::default(),
        }
    }
}

impl ArrayResponse for WmModel {
    fn num_ports(&self) -> usize {
        self.g.nrows()
    }

    fn response(&self, dir: Direction) -> Result<CVector> {
        Ok(&self.g * basis_eval(&self.basis, dir)?)
    }

    fn response_grad(&self, dir: Direction) -> Result<(CVector, CVector)> {
        let (bt, bp) = basis_grad(&self.basis, dir)?;
        Ok((&self.g * bt, &self.g * bp))
    }
}

pub fn fit_wm(cal: &CalibrationSet, basis: BasisSpec, slot: Slot) -> Result<WmModel> {
    fit_wm_with(cal, basis, slot, &FitOptions::default())
}

/// Least-squares sampling matrix `G = E B^H (B B^H)^{-1}`, solved via SVD.
pub fn fit_wm_with(cal: &CalibrationSet, basis: BasisSpec, slot: Slot, opts: &FitOptions) -> Result<WmModel> {
    basis.validate()?;
    if basis.kind == BasisKind::RealSh {
        return Err(Error::InvalidBasis("complex response needs a complex basis".into()));
    }
    let pts = fit_points(cal, basis.kind)?;
    let mut warnings = Vec::new();
    check_sizes(basis.size, pts.len(), cal.num_ports(), &mut warnings)?;
    let e = cal.samples(slot);
    let m = cal.num_ports();
    let mut bt = CMatrix::zeros(pts.len(), basis.size);
    let mut et = CMatrix::zeros(pts.len(), m);
    for (row, &(d, q)) in pts.iter().enumerate() {
        let w = row_weight(cal, opts, d);
        let b = basis_eval(&basis, d)?;
        for u in 0..basis.size {
            bt[(row, u)] = b[u] * w;
        }
        for k in 0..m {
            et[(row, k)] = e[(k, q)] * w;
        }
    }
    let (x, cond) = lstsq(&bt, &et)?;
    let gram_condition = check_condition(cond)?;
    let mut model = WmModel {
        g: x.transpose(),
        basis,
        slot,
        diagnostics: FitDiagnostics::default(),
    };
    let (max_residual, rms_residual) = grid_residual(cal, e, |d| model.response(d))?;
    model.diagnostics = FitDiagnostics {
        gram_condition,
        max_residual,
        rms_residual,
        warnings,
    };
    Ok(model)
}

pub(crate) fn grid_residual(
    cal: &CalibrationSet,
    e: &CMatrix,
    eval: impl Fn(Direction) -> Result<CVector>,
) -> Result<(f64, f64)> {
    let mut max = 0.0_f64;
    let mut sum = 0.0;
    for q in 0..cal.num_samples() {
        let a = eval(cal.grid.direction(q))?;
        for k in 0..a.len() {
            let r = (a[k] - e[(k, q)]).norm();
            max = max.max(r);
            sum += r * r;
        }
    }
    Ok((max, (sum / (cal.num_samples() * cal.num_ports()) as f64).sqrt()))
}

/// Real wavefield model of the port gains `g = G_r b_r(theta, phi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmGainModel {
    /// `M x U` real sampling matrix.
    #[serde(with = "serde_rmatrix")]
    pub g: DMatrix<f64>,
    pub basis: BasisSpec,
    #[serde(default)]
    pub diagnostics: FitDiagnostics,
}

impl WmGainModel {
    pub fn new(g: DMatrix<f64>, basis: BasisSpec) -> Self {
        Self {
            g,
            basis,
            diagnostics: FitDiagnostics::default(),
        }
    }
}

impl GainResponse for WmGainModel {
    fn num_ports(&self) -> usize {
        self.g.nrows()
    }

    fn gain(&self, dir: Direction) -> Result<DVector<f64>> {
        Ok(&self.g * basis_eval_real(&self.basis, dir)?)
    }

    fn gain_grad(&self, dir: Direction) -> Result<(DVector<f64>, DVector<f64>)> {
        let (bt, bp) = basis_grad_real(&self.basis, dir)?;
        Ok((&self.g * bt, &self.g * bp))
    }
}

pub fn fit_wm_gain(cal: &CalibrationSet, basis: BasisSpec) -> Result<WmGainModel> {
    fit_wm_gain_with(cal, basis, &FitOptions::default())
}

/// Least-squares fit of the co-polarized gains `|e_{m,q}|^2` on a real basis.
pub fn fit_wm_gain_with(cal: &CalibrationSet, basis: BasisSpec, opts: &FitOptions) -> Result<WmGainModel> {
    basis.validate()?;
    if basis.kind == BasisKind::ComplexSh {
        return Err(Error::InvalidBasis("gain fit needs a real basis".into()));
    }
    let pts = fit_points(cal, basis.kind)?;
    let mut warnings = Vec::new();
    check_sizes(basis.size, pts.len(), cal.num_ports(), &mut warnings)?;
    let m = cal.num_ports();
    let mut bt = DMatrix::zeros(pts.len(), basis.size);
    let mut gt = DMatrix::zeros(pts.len(), m);
    for (row, &(d, q)) in pts.iter().enumerate() {
        let w = row_weight(cal, opts, d);
        let b = basis_eval_real(&basis, d)?;
        for u in 0..basis.size {
            bt[(row, u)] = b[u] * w;
        }
        for k in 0..m {
            gt[(row, k)] = cal.co[(k, q)].norm_sqr() * w;
        }
    }
    let (x, cond) = lstsq(&bt, &gt)?;
    let gram_condition = check_condition(cond)?;
    let mut model = WmGainModel::new(x.transpose(), basis);
    let mut max = 0.0_f64;
    let mut sum = 0.0;
    for q in 0..cal.num_samples() {
        let g = model.gain(cal.grid.direction(q))?;
        for k in 0..m {
            let r = (g[k] - cal.co[(k, q)].norm_sqr()).abs();
            max = max.max(r);
            sum += r * r;
        }
    }
    model.diagnostics = FitDiagnostics {
        gram_condition,
        max_residual: max,
        rms_residual: (sum / (cal.num_samples() * m) as f64).sqrt(),
        warnings,
    };
    Ok(model)
}

/// `G` zero-padded (or truncated) to `u` columns in SH order.
pub fn pad_columns(g: &CMatrix, u: usize) -> CMatrix {
    CMatrix::from_fn(
        g.nrows(),
        u,
        |i, j| if j < g.ncols() { g[(i, j)] } else { C64::new(0.0, 0.0) },
    )
}
