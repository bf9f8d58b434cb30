//! Fisher information and Cramér-Rao bounds for the non-coherent, coherent
//! and polarimetric signal models. Angles are in radians.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Fov;
use crate::linalg::{projector_perp, serde_rmatrix, sym_psd_inverse, CMatrix, CVector};
use crate::response::{ArrayResponse, GainResponse, PolarimetricModel, PolarizationState};
use crate::Direction;

/// Which angles are free parameters. Planar scenarios carry `theta` only,
/// since the azimuth is not observable in a single cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngleSet {
    Theta,
    ThetaPhi,
}

impl AngleSet {
    pub fn from_fov(fov: &Fov) -> Self {
        if fov.planar {
            Self::Theta
        } else {
            Self::ThetaPhi
        }
    }

    /// Number of angle parameters per signal.
    pub fn count(self) -> usize {
        match self {
            Self::Theta => 1,
            Self::ThetaPhi => 2,
        }
    }
}

/// Fisher information and its (pseudo-)inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbResult {
    #[serde(with = "serde_rmatrix")]
    pub fim: DMatrix<f64>,
    #[serde(with = "serde_rmatrix")]
    pub crb: DMatrix<f64>,
    /// Square roots of the CRB diagonal.
    pub std_dev: Vec<f64>,
    pub labels: Vec<String>,
    /// The FIM was singular and a pseudo-inverse was used, or a parameter
    /// sits on a boundary where it is unidentifiable.
    pub degenerate: bool,
}

impl CrbResult {
    pub fn from_fim(fim: DMatrix<f64>, labels: Vec<String>) -> Self {
        let sym = (&fim + fim.transpose()) * 0.5;
        let (crb, degenerate) = sym_psd_inverse(&sym);
        let crb = (&crb + crb.transpose()) * 0.5;
        let std_dev = crb.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
        Self {
            fim: sym,
            crb,
            std_dev,
            labels,
            degenerate,
        }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// CRB variance of a labelled parameter.
    pub fn variance(&self, label: &str) -> Option<f64> {
        self.index_of(label).map(|i| self.crb[(i, i)])
    }
}

fn check_common(noise_power: f64, snapshots: usize) -> Result<()> {
    if !(noise_power > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise power must be positive, got {noise_power}"
        )));
    }
    if snapshots == 0 {
        return Err(Error::InvalidParameter("snapshot count must be positive".into()));
    }
    Ok(())
}

/// Non-coherent FIM for `zeta = [theta, (phi), s, sigma^2]`, or for
/// `zeta' = [theta, (phi), s]` when `reduced` (noise power known).
pub fn fim_noncoherent<G: GainResponse + ?Sized>(
    model: &G,
    dir: Direction,
    signal_power: f64,
    noise_power: f64,
    snapshots: usize,
    angles: AngleSet,
    reduced: bool,
) -> Result<CrbResult> {
    check_common(noise_power, snapshots)?;
    if !(signal_power >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "signal power must be non-negative, got {signal_power}"
        )));
    }
    let n = snapshots as f64;
    let (s, s2) = (signal_power, noise_power);
    let g = model.gain(dir)?;
    let (gt, gp) = model.gain_grad(dir)?;
    let m = g.len();

    let mut labels = vec!["theta".to_string()];
    let mut dg = vec![gt];
    if angles == AngleSet::ThetaPhi {
        labels.push("phi".into());
        dg.push(gp);
    }
    let na = labels.len();
    labels.push("signal_power".into());
    if !reduced {
        labels.push("noise_power".into());
    }
    let k = labels.len();

    // per-port derivatives of mean and variance, one row per parameter
    let mut dmu = DMatrix::<f64>::zeros(k, m);
    let mut dvar = DMatrix::<f64>::zeros(k, m);
    for p in 0..m {
        for (a, d) in dg.iter().enumerate() {
            dmu[(a, p)] = s * d[p];
            dvar[(a, p)] = 2.0 * s2 * s * d[p] / n;
        }
        dmu[(na, p)] = g[p];
        dvar[(na, p)] = 2.0 * s2 * g[p] / n;
        if !reduced {
            dmu[(na + 1, p)] = 1.0;
            dvar[(na + 1, p)] = (2.0 * s2 + 2.0 * s * g[p]) / n;
        }
    }
    let var: Vec<f64> = (0..m).map(|p| (s2 * s2 + 2.0 * s2 * s * g[p]) / n).collect();
    let fim = DMatrix::from_fn(k, k, |i, j| {
        (0..m)
            .map(|p| dmu[(i, p)] * dmu[(j, p)] / var[p] + 0.5 * dvar[(i, p)] * dvar[(j, p)] / (var[p] * var[p]))
            .sum()
    });
    Ok(CrbResult::from_fim(fim, labels))
}

/// Conditional (deterministic-signal) FIM `(2N/sigma^2) Re{D^H P D (.) Z^T R_s^T Z}`
/// for derivative blocks `blocks[k]` (M x P each, one per parameter kind).
fn coherent_fim(a: &CMatrix, blocks: &[CMatrix], rs: &CMatrix, noise_power: f64, snapshots: usize) -> DMatrix<f64> {
    let p = a.ncols();
    let d = CMatrix::from_columns(
        &blocks
            .iter()
            .flat_map(|b| b.column_iter().map(|c| c.into_owned()))
            .collect::<Vec<CVector>>(),
    );
    let h = d.adjoint() * projector_perp(a) * &d;
    let k = h.nrows();
    let scale = 2.0 * snapshots as f64 / noise_power;
    DMatrix::from_fn(k, k, |i, j| scale * (h[(i, j)] * rs[(j % p, i % p)]).re)
}

fn check_signal_cov(rs: &CMatrix, p: usize) -> Result<()> {
    if p == 0 || rs.nrows() != p || rs.ncols() != p {
        return Err(Error::Dimension(format!(
            "signal covariance is {}x{} for {p} signals",
            rs.nrows(),
            rs.ncols()
        )));
    }
    Ok(())
}

fn labels_for(kinds: &[&str], p: usize) -> Vec<String> {
    kinds
        .iter()
        .flat_map(|k| (1..=p).map(move |i| format!("{k}_{i}")))
        .collect()
}

/// Coherent CRB for the directions `dirs` with signal covariance `rs`
/// (P x P), parameters ordered `theta_1..theta_P, phi_1..phi_P`.
pub fn crb_coherent<R: ArrayResponse + ?Sized>(
    model: &R,
    dirs: &[Direction],
    rs: &CMatrix,
    noise_power: f64,
    snapshots: usize,
    angles: AngleSet,
) -> Result<CrbResult> {
    check_common(noise_power, snapshots)?;
    let p = dirs.len();
    check_signal_cov(rs, p)?;
    let mut cols = Vec::with_capacity(p);
    let mut dt = Vec::with_capacity(p);
    let mut dp = Vec::with_capacity(p);
    for d in dirs {
        cols.push(model.response(*d)?);
        let (t, f) = model.response_grad(*d)?;
        dt.push(t);
        dp.push(f);
    }
    let a = CMatrix::from_columns(&cols);
    let mut blocks = vec![CMatrix::from_columns(&dt)];
    let mut kinds = vec!["theta"];
    if angles == AngleSet::ThetaPhi {
        blocks.push(CMatrix::from_columns(&dp));
        kinds.push("phi");
    }
    let fim = coherent_fim(&a, &blocks, rs, noise_power, snapshots);
    Ok(CrbResult::from_fim(fim, labels_for(&kinds, p)))
}

/// Polarimetric CRB, parameters ordered (all theta, all phi, all gamma,
/// all beta). Polarizations on the boundary of `[0, pi/2]` are flagged.
pub fn crb_polarimetric<R: ArrayResponse>(
    model: &PolarimetricModel<R>,
    dirs: &[Direction],
    pols: &[PolarizationState],
    rs: &CMatrix,
    noise_power: f64,
    snapshots: usize,
    angles: AngleSet,
) -> Result<CrbResult> {
    check_common(noise_power, snapshots)?;
    let p = dirs.len();
    if pols.len() != p {
        return Err(Error::Dimension(format!(
            "{p} directions, {} polarizations",
            pols.len()
        )));
    }
    check_signal_cov(rs, p)?;
    let mut cols = Vec::with_capacity(p);
    let mut grads = Vec::with_capacity(p);
    for (d, pol) in dirs.iter().zip(pols) {
        cols.push(model.response(*d, *pol)?);
        grads.push(model.response_grad(*d, *pol)?);
    }
    let block = |f: &dyn Fn(&crate::response::PolarimetricGrad) -> CVector| {
        CMatrix::from_columns(&grads.iter().map(f).collect::<Vec<_>>())
    };
    let mut blocks = vec![block(&|g| g.theta.clone())];
    let mut kinds = vec!["theta"];
    if angles == AngleSet::ThetaPhi {
        blocks.push(block(&|g| g.phi.clone()));
        kinds.push("phi");
    }
    blocks.push(block(&|g| g.gamma.clone()));
    blocks.push(block(&|g| g.beta.clone()));
    kinds.extend(["gamma", "beta"]);
    let a = CMatrix::from_columns(&cols);
    let fim = coherent_fim(&a, &blocks, rs, noise_power, snapshots);
    let mut out = CrbResult::from_fim(fim, labels_for(&kinds, p));
    let edge = 1e-9;
    if pols
        .iter()
        .any(|q| q.gamma <= edge || q.gamma >= std::f64::consts::FRAC_PI_2 - edge)
    {
        out.degenerate = true;
    }
    Ok(out)
}
