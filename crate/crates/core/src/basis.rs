//! Basis-function families for wavefield modeling.
//!
//! Every family is orthonormal on its manifold: Fourier series on the circle
//! `[-pi, pi)`, spherical harmonics on the sphere, and the 2D Fourier (EADF)
//! basis on the torus. Associated Legendre functions carry the Condon-Shortley
//! phase `(-1)^m`.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Gradients closer than this to a pole (in radians) are rejected.
pub const POLE_EPS: f64 = 1e-6;

const DOMAIN_TOL: f64 = 1e-12;

/// Angle of arrival: inclination `theta` and azimuth `phi`, in radians.
///
/// Spherical directions keep `theta` in `[0, pi]` and `phi` in `[0, 2pi)`.
/// Directions in the x-z plane cut (see [`Direction::planar`]) use a signed
/// in-plane angle `theta` in `[-pi, pi)` with `phi = 0`; a negative angle is
/// the point `(|theta|, pi)` on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self {
            theta: theta.clamp(0.0, PI),
            phi: wrap_2pi(phi),
        }
    }

    pub fn planar(theta: f64) -> Self {
        Self {
            theta: wrap_pi(theta),
            phi: 0.0,
        }
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Self {
        Self::new(theta_deg.to_radians(), phi_deg.to_radians())
    }

    /// Point on the sphere as `(theta, phi, dtheta_sign)`, where the sign is
    /// the derivative of the spherical inclination with respect to `self.theta`.
    pub fn on_sphere(self) -> (f64, f64, f64) {
        if self.theta < 0.0 {
            (-self.theta, wrap_2pi(self.phi + PI), -1.0)
        } else if self.theta > PI {
            (TAU - self.theta, wrap_2pi(self.phi + PI), -1.0)
        } else {
            (self.theta, self.phi, 1.0)
        }
    }
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_2pi(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_pi(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(TAU);
    if w >= TAU {
        -PI
    } else {
        w - PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Fourier1d,
    ComplexSh,
    RealSh,
    Fourier2d,
}

/// Basis family together with its number of functions `U`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub size: usize,
}

impl BasisSpec {
    pub fn new(kind: BasisKind, size: usize) -> Result<Self> {
        let spec = Self { kind, size };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fourier1d(size: usize) -> Result<Self> {
        Self::new(BasisKind::Fourier1d, size)
    }

    pub fn fourier2d(size: usize) -> Result<Self> {
        Self::new(BasisKind::Fourier2d, size)
    }

    /// Complex spherical harmonics up to degree `max_degree`, `U = (L+1)^2`.
    pub fn complex_sh(max_degree: usize) -> Self {
        Self {
            kind: BasisKind::ComplexSh,
            size: (max_degree + 1).pow(2),
        }
    }

    pub fn real_sh(max_degree: usize) -> Self {
        Self {
            kind: BasisKind::RealSh,
            size: (max_degree + 1).pow(2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let u = self.size;
        if u == 0 {
            return Err(Error::InvalidBasis("size must be positive".into()));
        }
        match self.kind {
            BasisKind::Fourier1d if u % 2 == 0 => {
                Err(Error::InvalidBasis(format!("Fourier1D size must be odd, got {u}")))
            }
            BasisKind::ComplexSh | BasisKind::RealSh if perfect_sqrt(u).is_none() => Err(Error::InvalidBasis(format!(
                "spherical-harmonic size must be a square, got {u}"
            ))),
            BasisKind::Fourier2d => match perfect_sqrt(u) {
                Some(r) if r % 2 == 1 => Ok(()),
                _ => Err(Error::InvalidBasis(format!(
                    "Fourier2D size must be an odd square, got {u}"
                ))),
            },
            _ => Ok(()),
        }
    }

    /// Maximum degree `L` of a spherical-harmonic basis.
    pub fn max_degree(&self) -> usize {
        perfect_sqrt(self.size).unwrap_or(1) - 1
    }

    /// Largest Fourier index along one axis.
    pub fn max_harmonic(&self) -> i64 {
        match self.kind {
            BasisKind::Fourier2d => (perfect_sqrt(self.size).unwrap_or(1) as i64 - 1) / 2,
            _ => (self.size as i64 - 1) / 2,
        }
    }

    pub fn is_spherical_harmonic(&self) -> bool {
        matches!(self.kind, BasisKind::ComplexSh | BasisKind::RealSh)
    }
}

pub(crate) fn perfect_sqrt(u: usize) -> Option<usize> {
    let r = (u as f64).sqrt().round() as usize;
    (r * r == u).then_some(r)
}

fn check_x(x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > 1.0 + DOMAIN_TOL {
        return Err(Error::Domain { value: x });
    }
    Ok(x.clamp(-1.0, 1.0))
}

/// Legendre polynomial `P_l(x)` by upward recurrence.
pub fn legendre(l: usize, x: f64) -> Result<f64> {
    let x = check_x(x)?;
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return Ok(p0);
    }
    for n in 1..l {
        let n = n as f64;
        let p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
        p0 = p1;
        p1 = p2;
    }
    Ok(p1)
}

/// Associated Legendre function `P_l^m(x)` with the Condon-Shortley phase.
pub fn assoc_legendre(l: usize, m: usize, x: f64) -> Result<f64> {
    if m > l {
        return Err(Error::Index {
            l: l as i64,
            m: m as i64,
        });
    }
    let x = check_x(x)?;
    Ok(LegendreTable::new(l, x).get(l, m))
}

/// All `P_l^m(x)` for `0 <= m <= l <= lmax` at a single argument.
#[derive(Debug, Clone)]
pub(crate) struct LegendreTable {
    values: Vec<f64>,
}

impl LegendreTable {
    pub(crate) fn new(lmax: usize, x: f64) -> Self {
        let s = (1.0 - x * x).max(0.0).sqrt();
        let mut values = vec![0.0; (lmax + 1) * (lmax + 2) / 2];
        let mut pmm = 1.0;
        for m in 0..=lmax {
            if m > 0 {
                pmm *= -((2 * m - 1) as f64) * s;
            }
            values[tri(m, m)] = pmm;
            if m == lmax {
                break;
            }
            let mut prev = pmm;
            let mut cur = x * (2 * m + 1) as f64 * pmm;
            values[tri(m + 1, m)] = cur;
            for l in (m + 2)..=lmax {
                let next = ((2 * l - 1) as f64 * x * cur - (l + m - 1) as f64 * prev) / (l - m) as f64;
                prev = cur;
                cur = next;
                values[tri(l, m)] = cur;
            }
        }
        Self { values }
    }

    pub(crate) fn get(&self, l: usize, m: usize) -> f64 {
        self.values[tri(l, m)]
    }
}

fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// `N_l^m = sqrt((2l+1)/(4pi) (l-m)!/(l+m)!)` for `0 <= m <= l`.
pub fn sh_norm(l: usize, m: usize) -> f64 {
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

fn check_lm(l: usize, m: i64) -> Result<()> {
    if m.unsigned_abs() as usize > l {
        return Err(Error::Index { l: l as i64, m });
    }
    Ok(())
}

fn check_pole(theta: f64) -> Result<()> {
    if theta < POLE_EPS || theta > PI - POLE_EPS {
        return Err(Error::PoleProximity { theta, eps: POLE_EPS });
    }
    Ok(())
}

/// Complex spherical harmonic `Y_l^m(theta, phi)`, unit L2 norm on the sphere.
pub fn sh_complex(l: usize, m: i64, dir: Direction) -> Result<C64> {
    check_lm(l, m)?;
    let (theta, phi, _) = dir.on_sphere();
    let table = LegendreTable::new(l, theta.cos());
    Ok(ylm_from_table(&table, l, m, phi))
}

fn ylm_from_table(table: &LegendreTable, l: usize, m: i64, phi: f64) -> C64 {
    let ma = m.unsigned_abs() as usize;
    let y = C64::from_polar(sh_norm(l, ma) * table.get(l, ma), ma as f64 * phi);
    if m < 0 {
        let sign = if ma % 2 == 0 { 1.0 } else { -1.0 };
        y.conj() * sign
    } else {
        y
    }
}

/// `(dY/dtheta, dY/dphi)` of a complex spherical harmonic.
///
/// Uses `dY_l^m/dtheta = m cot(theta) Y_l^m + sqrt((l-m)(l+m+1)) e^{-j phi} Y_l^{m+1}`.
pub fn sh_complex_grad(l: usize, m: i64, dir: Direction) -> Result<(C64, C64)> {
    check_lm(l, m)?;
    let (theta, phi, sign) = dir.on_sphere();
    check_pole(theta)?;
    let table = LegendreTable::new(l, theta.cos());
    let y = ylm_from_table(&table, l, m, phi);
    let mut dtheta = y * (m as f64 / theta.tan());
    if m < l as i64 {
        let li = l as i64;
        let c = (((li - m) * (li + m + 1)) as f64).sqrt();
        dtheta += ylm_from_table(&table, l, m + 1, phi) * C64::from_polar(c, -phi);
    }
    Ok((dtheta * sign, C64::new(0.0, m as f64) * y))
}

/// Real spherical harmonic: `sqrt(2) N cos(m phi) P` for `m > 0`, `N P` for
/// `m = 0`, `sqrt(2) N sin(|m| phi) P^{|m|}` for `m < 0`.
pub fn sh_real(l: usize, m: i64, dir: Direction) -> Result<f64> {
    check_lm(l, m)?;
    let (theta, phi, _) = dir.on_sphere();
    let table = LegendreTable::new(l, theta.cos());
    Ok(real_ylm_from_table(&table, l, m, phi))
}

fn real_ylm_from_table(table: &LegendreTable, l: usize, m: i64, phi: f64) -> f64 {
    let ma = m.unsigned_abs() as usize;
    let np = sh_norm(l, ma) * table.get(l, ma);
    match m.signum() {
        0 => np,
        1 => std::f64::consts::SQRT_2 * np * (ma as f64 * phi).cos(),
        _ => std::f64::consts::SQRT_2 * np * (ma as f64 * phi).sin(),
    }
}

/// `dP_l^m(cos theta)/dtheta = ((l-m+1) P_{l+1}^m - (l+1) cos(theta) P_l^m) / sin(theta)`.
fn dplm_dtheta(table: &LegendreTable, l: usize, m: usize, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    ((l - m + 1) as f64 * table.get(l + 1, m) - (l + 1) as f64 * c * table.get(l, m)) / s
}

fn real_ylm_grad_from_table(table: &LegendreTable, l: usize, m: i64, theta: f64, phi: f64) -> (f64, f64) {
    let ma = m.unsigned_abs() as usize;
    let n = sh_norm(l, ma);
    let p = table.get(l, ma);
    let dp = dplm_dtheta(table, l, ma, theta);
    let r2 = std::f64::consts::SQRT_2;
    let mf = ma as f64;
    match m.signum() {
        0 => (n * dp, 0.0),
        1 => (r2 * n * (mf * phi).cos() * dp, -r2 * n * mf * (mf * phi).sin() * p),
        _ => (r2 * n * (mf * phi).sin() * dp, r2 * n * mf * (mf * phi).cos() * p),
    }
}

/// `(dY/dtheta, dY/dphi)` of a real spherical harmonic.
pub fn sh_real_grad(l: usize, m: i64, dir: Direction) -> Result<(f64, f64)> {
    check_lm(l, m)?;
    let (theta, phi, sign) = dir.on_sphere();
    check_pole(theta)?;
    let table = LegendreTable::new(l + 1, theta.cos());
    let (dt, dp) = real_ylm_grad_from_table(&table, l, m, theta, phi);
    Ok((dt * sign, dp))
}

fn fourier_indices(k: i64) -> impl Iterator<Item = i64> {
    -k..=k
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn require_complex(spec: &BasisSpec) -> Result<()> {
    spec.validate()?;
    if spec.kind == BasisKind::RealSh {
        return Err(Error::InvalidBasis(
            "RealSH is a real basis; use basis_eval_real".into(),
        ));
    }
    Ok(())
}

fn require_real(spec: &BasisSpec) -> Result<()> {
    spec.validate()?;
    if spec.kind == BasisKind::ComplexSh {
        return Err(Error::InvalidBasis("ComplexSH has no real form; use RealSH".into()));
    }
    Ok(())
}

/// Basis vector `b(theta, phi)` for the complex families.
///
/// Ordering: Fourier indices ascending; spherical harmonics by
/// `u = l(l+1) + m` (0-based); Fourier2D theta-major over phi.
pub fn basis_eval(spec: &BasisSpec, dir: Direction) -> Result<DVector<C64>> {
    require_complex(spec)?;
    Ok(match spec.kind {
        BasisKind::Fourier1d => {
            let k = spec.max_harmonic();
            DVector::from_iterator(
                spec.size,
                fourier_indices(k).map(|u| C64::from_polar(INV_SQRT_2PI, u as f64 * dir.theta)),
            )
        }
        BasisKind::Fourier2d => {
            let k = spec.max_harmonic();
            let mut out = Vec::with_capacity(spec.size);
            for ut in fourier_indices(k) {
                for up in fourier_indices(k) {
                    out.push(C64::from_polar(
                        INV_SQRT_2PI * INV_SQRT_2PI,
                        ut as f64 * dir.theta + up as f64 * dir.phi,
                    ));
                }
            }
            DVector::from_vec(out)
        }
        BasisKind::ComplexSh => {
            let (theta, phi, _) = dir.on_sphere();
            DVector::from_vec(all_sh(spec.max_degree(), theta, phi))
        }
        BasisKind::RealSh => unreachable!(),
    })
}

fn all_sh(lmax: usize, theta: f64, phi: f64) -> Vec<C64> {
    let table = LegendreTable::new(lmax, theta.cos());
    let mut out = vec![C64::new(0.0, 0.0); (lmax + 1).pow(2)];
    for l in 0..=lmax {
        let base = l * (l + 1);
        for m in 0..=l {
            let y = C64::from_polar(sh_norm(l, m) * table.get(l, m), m as f64 * phi);
            out[base + m] = y;
            if m > 0 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                out[base - m] = y.conj() * sign;
            }
        }
    }
    out
}

/// `(db/dtheta, db/dphi)` in the same ordering as [`basis_eval`].
pub fn basis_grad(spec: &BasisSpec, dir: Direction) -> Result<(DVector<C64>, DVector<C64>)> {
    require_complex(spec)?;
    let j = C64::new(0.0, 1.0);
    match spec.kind {
        BasisKind::Fourier1d => {
            let b = basis_eval(spec, dir)?;
            let k = spec.max_harmonic();
            let dt = DVector::from_iterator(
                spec.size,
                fourier_indices(k).zip(b.iter()).map(|(u, bu)| j * u as f64 * bu),
            );
            Ok((dt, DVector::zeros(spec.size)))
        }
        BasisKind::Fourier2d => {
            let b = basis_eval(spec, dir)?;
            let k = spec.max_harmonic();
            let side = (2 * k + 1) as usize;
            let mut dt = DVector::zeros(spec.size);
            let mut dp = DVector::zeros(spec.size);
            for (i, ut) in fourier_indices(k).enumerate() {
                for (h, up) in fourier_indices(k).enumerate() {
                    let idx = i * side + h;
                    dt[idx] = j * ut as f64 * b[idx];
                    dp[idx] = j * up as f64 * b[idx];
                }
            }
            Ok((dt, dp))
        }
        BasisKind::ComplexSh => {
            let (theta, phi, sign) = dir.on_sphere();
            check_pole(theta)?;
            let lmax = spec.max_degree();
            let y = all_sh(lmax, theta, phi);
            let cot = 1.0 / theta.tan();
            let e = C64::from_polar(1.0, -phi);
            let mut dt = DVector::zeros(spec.size);
            let mut dp = DVector::zeros(spec.size);
            for l in 0..=lmax as i64 {
                let base = l * (l + 1);
                for m in -l..=l {
                    let u = (base + m) as usize;
                    let mut d = y[u] * (m as f64 * cot);
                    if m < l {
                        let c = (((l - m) * (l + m + 1)) as f64).sqrt();
                        d += y[u + 1] * e * c;
                    }
                    dt[u] = d * sign;
                    dp[u] = j * m as f64 * y[u];
                }
            }
            Ok((dt, dp))
        }
        BasisKind::RealSh => unreachable!(),
    }
}

/// Real basis vector: real spherical harmonics, or the real-constrained Fourier
/// families in which each negative index is tied to the conjugate of the
/// positive one (cosine/sine pairs).
///
/// Real Fourier1D ordering: `[1, sqrt2 cos(u t), sqrt2 sin(u t)]_{u=1..K}`, all
/// divided by `sqrt(2pi)`. Real Fourier2D: constant term, then for each index
/// pair in the upper half-plane (theta-major) a cosine and a sine of
/// `u_t theta + u_p phi`, divided by `2pi`.
pub fn basis_eval_real(spec: &BasisSpec, dir: Direction) -> Result<DVector<f64>> {
    require_real(spec)?;
    let r2 = std::f64::consts::SQRT_2;
    Ok(match spec.kind {
        BasisKind::Fourier1d => {
            let k = spec.max_harmonic();
            let mut out = Vec::with_capacity(spec.size);
            out.push(INV_SQRT_2PI);
            for u in 1..=k {
                let (s, c) = (u as f64 * dir.theta).sin_cos();
                out.push(r2 * INV_SQRT_2PI * c);
                out.push(r2 * INV_SQRT_2PI * s);
            }
            DVector::from_vec(out)
        }
        BasisKind::Fourier2d => {
            let norm = INV_SQRT_2PI * INV_SQRT_2PI;
            let mut out = Vec::with_capacity(spec.size);
            out.push(norm);
            for (ut, up) in half_plane(spec.max_harmonic()) {
                let (s, c) = (ut as f64 * dir.theta + up as f64 * dir.phi).sin_cos();
                out.push(r2 * norm * c);
                out.push(r2 * norm * s);
            }
            DVector::from_vec(out)
        }
        BasisKind::RealSh => {
            let (theta, phi, _) = dir.on_sphere();
            let lmax = spec.max_degree();
            let table = LegendreTable::new(lmax, theta.cos());
            let mut out = Vec::with_capacity(spec.size);
            for l in 0..=lmax {
                for m in -(l as i64)..=(l as i64) {
                    out.push(real_ylm_from_table(&table, l, m, phi));
                }
            }
            DVector::from_vec(out)
        }
        BasisKind::ComplexSh => unreachable!(),
    })
}

fn half_plane(k: i64) -> impl Iterator<Item = (i64, i64)> {
    (-k..=k)
        .flat_map(move |ut| (-k..=k).map(move |up| (ut, up)))
        .filter(|&(ut, up)| ut > 0 || (ut == 0 && up > 0))
}

/// `(db/dtheta, db/dphi)` of [`basis_eval_real`].
pub fn basis_grad_real(spec: &BasisSpec, dir: Direction) -> Result<(DVector<f64>, DVector<f64>)> {
    require_real(spec)?;
    let r2 = std::f64::consts::SQRT_2;
    match spec.kind {
        BasisKind::Fourier1d => {
            let k = spec.max_harmonic();
            let mut dt = vec![0.0];
            for u in 1..=k {
                let uf = u as f64;
                let (s, c) = (uf * dir.theta).sin_cos();
                dt.push(-r2 * INV_SQRT_2PI * uf * s);
                dt.push(r2 * INV_SQRT_2PI * uf * c);
            }
            Ok((DVector::from_vec(dt), DVector::zeros(spec.size)))
        }
        BasisKind::Fourier2d => {
            let norm = INV_SQRT_2PI * INV_SQRT_2PI;
            let mut dt = vec![0.0];
            let mut dp = vec![0.0];
            for (ut, up) in half_plane(spec.max_harmonic()) {
                let (s, c) = (ut as f64 * dir.theta + up as f64 * dir.phi).sin_cos();
                dt.extend([-r2 * norm * ut as f64 * s, r2 * norm * ut as f64 * c]);
                dp.extend([-r2 * norm * up as f64 * s, r2 * norm * up as f64 * c]);
            }
            Ok((DVector::from_vec(dt), DVector::from_vec(dp)))
        }
        BasisKind::RealSh => {
            let (theta, phi, sign) = dir.on_sphere();
            check_pole(theta)?;
            let lmax = spec.max_degree();
            let table = LegendreTable::new(lmax + 1, theta.cos());
            let mut dt = Vec::with_capacity(spec.size);
            let mut dp = Vec::with_capacity(spec.size);
            for l in 0..=lmax {
                for m in -(l as i64)..=(l as i64) {
                    let (a, b) = real_ylm_grad_from_table(&table, l, m, theta, phi);
                    dt.push(a * sign);
                    dp.push(b);
                }
            }
            Ok((DVector::from_vec(dt), DVector::from_vec(dp)))
        }
        BasisKind::ComplexSh => unreachable!(),
    }
}
