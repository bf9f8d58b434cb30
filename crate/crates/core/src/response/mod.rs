//! Continuous antenna-response models fitted to calibration data.
//!
//! Two interpolation schemes are provided: wavefield modeling ([`WmModel`],
//! [`WmGainModel`]) and the sectorized array interpolation technique
//! ([`AitModel`]). [`PolarimetricModel`] combines a co- and a cross-polarized
//! model of either kind.

mod ait;
mod wm;

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::basis::{Direction, C64};
use crate::error::{Error, Result};
use crate::linalg::CVector;

pub use ait::{
    fit_ait, ideal_ula, ideal_ula_grad, ideal_ura, ideal_ura_grad, AitModel, AitSector, AxisLayout, IdealGeometry,
    SectorLayout,
};
pub use wm::{
    fit_wm, fit_wm_gain, fit_wm_gain_with, fit_wm_with, pad_columns, truncation_order, FitDiagnostics, FitOptions,
    WmGainModel, WmModel,
};

/// Format version of saved model files.
pub const MODEL_VERSION: u32 = 1;

/// A complex `M`-port response `a(theta, phi)` with angular derivatives.
pub trait ArrayResponse: Send + Sync {
    fn num_ports(&self) -> usize;

    fn response(&self, dir: Direction) -> Result<CVector>;

    /// `(da/dtheta, da/dphi)`.
    fn response_grad(&self, dir: Direction) -> Result<(CVector, CVector)>;

    /// Whether `dir` lies in the region where the model is defined.
    fn contains(&self, _dir: Direction) -> bool {
        true
    }
}

/// A real per-port gain pattern `g(theta, phi)` with angular derivatives.
pub trait GainResponse: Send + Sync {
    fn num_ports(&self) -> usize;

    fn gain(&self, dir: Direction) -> Result<DVector<f64>>;

    /// `(dg/dtheta, dg/dphi)`.
    fn gain_grad(&self, dir: Direction) -> Result<(DVector<f64>, DVector<f64>)>;

    fn contains(&self, _dir: Direction) -> bool {
        true
    }
}

/// Gains `|a_m|^2` of a complex response model.
#[derive(Debug, Clone, Copy)]
pub struct ResponseGains<'a, R: ?Sized>(pub &'a R);

impl<R: ArrayResponse + ?Sized> GainResponse for ResponseGains<'_, R> {
    fn num_ports(&self) -> usize {
        self.0.num_ports()
    }

    fn gain(&self, dir: Direction) -> Result<DVector<f64>> {
        Ok(self.0.response(dir)?.map(|z| z.norm_sqr()))
    }

    fn gain_grad(&self, dir: Direction) -> Result<(DVector<f64>, DVector<f64>)> {
        let a = self.0.response(dir)?;
        let (dt, dp) = self.0.response_grad(dir)?;
        let d = |da: &CVector| {
            DVector::from_iterator(a.len(), a.iter().zip(da.iter()).map(|(x, y)| 2.0 * (x.conj() * y).re))
        };
        Ok((d(&dt), d(&dp)))
    }

    fn contains(&self, dir: Direction) -> bool {
        self.0.contains(dir)
    }
}

/// Any fitted complex response model; the unit of model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResponseModel {
    Wm(WmModel),
    Ait(AitModel),
}

impl ArrayResponse for ResponseModel {
    fn num_ports(&self) -> usize {
        match self {
            Self::Wm(m) => m.num_ports(),
            Self::Ait(m) => m.num_ports(),
        }
    }

    fn response(&self, dir: Direction) -> Result<CVector> {
        match self {
            Self::Wm(m) => m.response(dir),
            Self::Ait(m) => m.response(dir),
        }
    }

    fn response_grad(&self, dir: Direction) -> Result<(CVector, CVector)> {
        match self {
            Self::Wm(m) => m.response_grad(dir),
            Self::Ait(m) => m.response_grad(dir),
        }
    }

    fn contains(&self, dir: Direction) -> bool {
        match self {
            Self::Wm(m) => m.contains(dir),
            Self::Ait(m) => m.contains(dir),
        }
    }
}

impl From<WmModel> for ResponseModel {
    fn from(m: WmModel) -> Self {
        Self::Wm(m)
    }
}

impl From<AitModel> for ResponseModel {
    fn from(m: AitModel) -> Self {
        Self::Ait(m)
    }
}

/// Polarization ellipse auxiliary angle `gamma` in `[0, pi/2]` and phase
/// difference `beta` in `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationState {
    pub gamma: f64,
    pub beta: f64,
}

impl PolarizationState {
    pub fn new(gamma: f64, beta: f64) -> Self {
        Self { gamma, beta }
    }

    /// Purely co-polarized wave (`gamma = pi/2`, `beta = 0`).
    pub fn co() -> Self {
        Self::new(std::f64::consts::FRAC_PI_2, 0.0)
    }

    /// Complex weights `(sin(gamma) e^{j beta}, cos(gamma))`.
    pub fn weights(&self) -> (C64, C64) {
        (
            C64::from_polar(self.gamma.sin(), self.beta),
            C64::new(self.gamma.cos(), 0.0),
        )
    }
}

/// Derivatives of the polarimetric response with respect to
/// `(theta, phi, gamma, beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarimetricGrad {
    pub theta: CVector,
    pub phi: CVector,
    pub gamma: CVector,
    pub beta: CVector,
}

/// `a(theta, phi, gamma, beta) = sin(gamma) e^{j beta} a_co + cos(gamma) a_cross`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarimetricModel<R = ResponseModel> {
    pub co: R,
    pub cross: R,
}

impl<R: ArrayResponse> PolarimetricModel<R> {
    pub fn new(co: R, cross: R) -> Result<Self> {
        if co.num_ports() != cross.num_ports() {
            return Err(Error::Dimension(format!(
                "co model has {} ports, cross model has {}",
                co.num_ports(),
                cross.num_ports()
            )));
        }
        Ok(Self { co, cross })
    }

    pub fn num_ports(&self) -> usize {
        self.co.num_ports()
    }

    pub fn contains(&self, dir: Direction) -> bool {
        self.co.contains(dir) && self.cross.contains(dir)
    }

    /// Co- and cross-polarized partial responses.
    pub fn partials(&self, dir: Direction) -> Result<(CVector, CVector)> {
        Ok((self.co.response(dir)?, self.cross.response(dir)?))
    }

    pub fn response(&self, dir: Direction, pol: PolarizationState) -> Result<CVector> {
        let (wc, wx) = pol.weights();
        let (a, b) = self.partials(dir)?;
        Ok(a * wc + b * wx)
    }

    pub fn response_grad(&self, dir: Direction, pol: PolarizationState) -> Result<PolarimetricGrad> {
        let (wc, wx) = pol.weights();
        let (a, b) = self.partials(dir)?;
        let (at, ap) = self.co.response_grad(dir)?;
        let (bt, bp) = self.cross.response_grad(dir)?;
        let (sg, cg) = pol.gamma.sin_cos();
        let e = C64::from_polar(1.0, pol.beta);
        Ok(PolarimetricGrad {
            theta: at * wc + bt * wx,
            phi: ap * wc + bp * wx,
            gamma: &a * (e * cg) - &b * C64::new(sg, 0.0),
            beta: a * (C64::new(0.0, 1.0) * wc),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile<T> {
    version: u32,
    model: T,
}

/// Writes any serializable model as versioned JSON.
pub fn save_model<T: Serialize>(model: &T, path: impl AsRef<Path>) -> Result<()> {
    let file = ModelFile {
        version: MODEL_VERSION,
        model,
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Reads a model written by [`save_model`].
pub fn load_model<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let file: ModelFile<T> =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if file.version != MODEL_VERSION {
        return Err(Error::Parse(format!("unsupported model version {}", file.version)));
    }
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSpec;
    use crate::linalg::CMatrix;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn toy() -> PolarimetricModel<WmModel> {
        let co = CMatrix::from_fn(3, 9, |i, j| {
            C64::new((i + 2 * j) as f64 * 0.1, (i as f64 - j as f64) * 0.05)
        });
        let cross = CMatrix::from_fn(3, 9, |i, j| C64::new(((i * j) % 5) as f64 * 0.2, 0.3));
        let spec = BasisSpec::complex_sh(2);
        PolarimetricModel::new(WmModel::new(co, spec), WmModel::new(cross, spec)).unwrap()
    }

    #[test]
    fn polarimetric_examples() {
        let pm = toy();
        let dir = Direction::new(0.8, 2.1);
        let (a, b) = pm.partials(dir).unwrap();
        let r = pm.response(dir, PolarizationState::new(FRAC_PI_2, 0.0)).unwrap();
        assert!((r - &a).norm() < 1e-15);
        let r = pm.response(dir, PolarizationState::new(0.0, 1.3)).unwrap();
        assert!((r - &b).norm() < 1e-15);
        let r = pm.response(dir, PolarizationState::new(FRAC_PI_4, FRAC_PI_2)).unwrap();
        let want = (&a * C64::new(0.0, 1.0) + &b) * C64::new(0.5_f64.sqrt(), 0.0);
        assert!((r - want).norm() < 1e-14);
    }

    #[test]
    fn polarimetric_gradients_match_fd() {
        let pm = toy();
        let dir = Direction::new(1.1, 0.7);
        let pol = PolarizationState::new(0.6, -0.9);
        let g = pm.response_grad(dir, pol).unwrap();
        let h = 1e-6;
        let f = |t: f64, p: f64, ga: f64, be: f64| {
            pm.response(Direction::new(t, p), PolarizationState::new(ga, be))
                .unwrap()
        };
        let fd = [
            (f(1.1 + h, 0.7, 0.6, -0.9) - f(1.1 - h, 0.7, 0.6, -0.9)) / C64::new(2.0 * h, 0.0),
            (f(1.1, 0.7 + h, 0.6, -0.9) - f(1.1, 0.7 - h, 0.6, -0.9)) / C64::new(2.0 * h, 0.0),
            (f(1.1, 0.7, 0.6 + h, -0.9) - f(1.1, 0.7, 0.6 - h, -0.9)) / C64::new(2.0 * h, 0.0),
            (f(1.1, 0.7, 0.6, -0.9 + h) - f(1.1, 0.7, 0.6, -0.9 - h)) / C64::new(2.0 * h, 0.0),
        ];
        for (an, num) in [&g.theta, &g.phi, &g.gamma, &g.beta].into_iter().zip(fd.iter()) {
            assert!((an - num).norm() <= 1e-6 * an.norm().max(1e-3), "{an} vs {num}");
        }
    }

    #[test]
    fn gains_of_response_match_fd() {
        let pm = toy();
        let gains = ResponseGains(&pm.co);
        let dir = Direction::new(0.9, 1.9);
        let (dt, dp) = gains.gain_grad(dir).unwrap();
        let h = 1e-6;
        let g = |t: f64, p: f64| gains.gain(Direction::new(t, p)).unwrap();
        let fdt = (g(0.9 + h, 1.9) - g(0.9 - h, 1.9)) / (2.0 * h);
        let fdp = (g(0.9, 1.9 + h) - g(0.9, 1.9 - h)) / (2.0 * h);
        assert!((dt - fdt).norm() < 1e-6 && (dp - fdp).norm() < 1e-6);
    }

    #[test]
    fn model_file_round_trip() {
        let pm = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model: ResponseModel = pm.co.clone().into();
        save_model(&model, &path).unwrap();
        let back: ResponseModel = load_model(&path).unwrap();
        assert_eq!(back, model);
    }
}
