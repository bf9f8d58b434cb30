//! Snapshot generation, received-signal-strength statistics and their moments.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{Direction, C64};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::response::{ArrayResponse, PolarimetricModel, PolarizationState};

/// Transmit waveform of every signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Waveform {
    /// `sqrt(p) e^{j psi}`, `psi` uniform: the realized power equals `p` exactly.
    #[default]
    UnitModulus,
    /// Circular complex Gaussian with variance `p`.
    Gaussian,
    /// `sqrt(p)` in every snapshot.
    Constant,
}

/// `P` plane waves observed over `N` snapshots in white noise of power `sigma^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub directions: Vec<Direction>,
    /// Per-signal polarization; `None` means purely co-polarized.
    #[serde(default)]
    pub polarizations: Option<Vec<PolarizationState>>,
    /// Signal powers in watts.
    pub powers: Vec<f64>,
    #[serde(default)]
    pub waveform: Waveform,
    pub snapshots: usize,
    pub noise_power: f64,
}

impl Scenario {
    /// One co-polarized signal.
    pub fn single(dir: Direction, power: f64, noise_power: f64, snapshots: usize) -> Self {
        Self {
            directions: vec![dir],
            polarizations: None,
            powers: vec![power],
            waveform: Waveform::UnitModulus,
            snapshots,
            noise_power,
        }
    }

    pub fn num_signals(&self) -> usize {
        self.directions.len()
    }

    /// Per-signal SNR `p / sigma^2` (relative to a unit-gain isotropic antenna).
    pub fn snr(&self) -> Vec<f64> {
        self.powers.iter().map(|p| p / self.noise_power).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.num_signals();
        if p == 0 {
            return Err(Error::InvalidScenario("need at least one signal".into()));
        }
        if self.powers.len() != p {
            return Err(Error::InvalidScenario(format!(
                "{p} directions but {} powers",
                self.powers.len()
            )));
        }
        if let Some(pol) = &self.polarizations {
            if pol.len() != p {
                return Err(Error::InvalidScenario(format!(
                    "{p} directions but {} polarizations",
                    pol.len()
                )));
            }
        }
        if self.snapshots == 0 {
            return Err(Error::InvalidScenario("snapshot count must be positive".into()));
        }
        if !(self.noise_power >= 0.0) || !self.noise_power.is_finite() {
            return Err(Error::InvalidScenario(format!(
                "noise power must be >= 0, got {}",
                self.noise_power
            )));
        }
        if let Some(bad) = self.powers.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidScenario(format!("signal power must be > 0, got {bad}")));
        }
        Ok(())
    }
}

/// Received snapshots `r(n) = A s(n) + w(n)` with the transmitted waveforms.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBlock {
    /// `M x N`.
    pub r: CMatrix,
    /// `P x N` transmitted symbols.
    pub signals: CMatrix,
    pub seed: u64,
}

impl SnapshotBlock {
    pub fn num_snapshots(&self) -> usize {
        self.r.ncols()
    }

    /// Realized signal covariance `(1/N) S S^H`.
    pub fn signal_cov(&self) -> CMatrix {
        &self.signals * self.signals.adjoint() / C64::new(self.signals.ncols() as f64, 0.0)
    }

    /// Realized per-signal power `(1/N) sum |s_p(n)|^2`.
    pub fn signal_powers(&self) -> Vec<f64> {
        let n = self.signals.ncols() as f64;
        self.signals
            .row_iter()
            .map(|row| row.iter().map(|z| z.norm_sqr()).sum::<f64>() / n)
            .collect()
    }
}

/// Steering matrix `[a(dir_1), ..., a(dir_P)]` of a co-polarized model.
pub fn steering_matrix<R: ArrayResponse + ?Sized>(model: &R, dirs: &[Direction]) -> Result<CMatrix> {
    let cols = dirs
        .iter()
        .map(|&d| {
            if !model.contains(d) {
                return Err(Error::OutOfFov {
                    theta: d.theta,
                    phi: d.phi,
                });
            }
            model.response(d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CMatrix::from_columns(&cols))
}

/// Steering matrix of a polarimetric model.
pub fn polarimetric_steering<R: ArrayResponse>(
    model: &PolarimetricModel<R>,
    dirs: &[Direction],
    pols: &[PolarizationState],
) -> Result<CMatrix> {
    let cols = dirs
        .iter()
        .zip(pols)
        .map(|(&d, &pol)| {
            if !model.contains(d) {
                return Err(Error::OutOfFov {
                    theta: d.theta,
                    phi: d.phi,
                });
            }
            model.response(d, pol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CMatrix::from_columns(&cols))
}

/// Snapshots for a co-polarized scenario. Polarizations in the scenario are
/// ignored; use [`gen_snapshots_polarimetric`] for those.
pub fn gen_snapshots<R: ArrayResponse + ?Sized>(scenario: &Scenario, model: &R, seed: u64) -> Result<SnapshotBlock> {
    scenario.validate()?;
    let a = steering_matrix(model, &scenario.directions)?;
    Ok(gen_from_steering(&a, scenario, seed))
}

pub fn gen_snapshots_polarimetric<R: ArrayResponse>(
    scenario: &Scenario,
    model: &PolarimetricModel<R>,
    seed: u64,
) -> Result<SnapshotBlock> {
    scenario.validate()?;
    let pols = scenario
        .polarizations
        .clone()
        .unwrap_or_else(|| vec![PolarizationState::co(); scenario.num_signals()]);
    let a = polarimetric_steering(model, &scenario.directions, &pols)?;
    Ok(gen_from_steering(&a, scenario, seed))
}

/// Draws waveforms and noise from ChaCha20 seeded with `seed`: first all
/// symbols (snapshot-major), then the noise.
pub fn gen_from_steering(a: &CMatrix, scenario: &Scenario, seed: u64) -> SnapshotBlock {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (p, n, m) = (scenario.num_signals(), scenario.snapshots, a.nrows());
    let mut s = CMatrix::zeros(p, n);
    for k in 0..n {
        for (i, &pw) in scenario.powers.iter().enumerate() {
            s[(i, k)] = match scenario.waveform {
                Waveform::UnitModulus => C64::from_polar(pw.sqrt(), rng.random::<f64>() * std::f64::consts::TAU),
                Waveform::Gaussian => complex_normal(&mut rng) * (pw / 2.0).sqrt(),
                Waveform::Constant => C64::new(pw.sqrt(), 0.0),
            };
        }
    }
    let mut r = a * &s;
    let sd = (scenario.noise_power / 2.0).sqrt();
    if sd > 0.0 {
        for k in 0..n {
            for i in 0..m {
                r[(i, k)] += complex_normal(&mut rng) * sd;
            }
        }
    }
    SnapshotBlock { r, signals: s, seed }
}

/// Signal-free `M x K` block of circular Gaussian noise with power `noise_power`.
pub fn gen_noise(ports: usize, samples: usize, noise_power: f64, seed: u64) -> CMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sd = (noise_power.max(0.0) / 2.0).sqrt();
    let mut w = CMatrix::zeros(ports, samples);
    for k in 0..samples {
        for i in 0..ports {
            w[(i, k)] = complex_normal(&mut rng) * sd;
        }
    }
    w
}

fn complex_normal<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im)
}

/// Per-port received signal strength `(1/N) sum_n |r_m(n)|^2`.
pub fn rss(block: &SnapshotBlock) -> DVector<f64> {
    rss_of(&block.r)
}

pub fn rss_of(r: &CMatrix) -> DVector<f64> {
    let n = r.ncols().max(1) as f64;
    DVector::from_iterator(
        r.nrows(),
        r.row_iter()
            .map(|row| row.iter().map(|z| z.norm_sqr()).sum::<f64>() / n),
    )
}

/// Sample covariance `(1/N) sum_n r(n) r(n)^H`.
pub fn sample_cov(block: &SnapshotBlock) -> CMatrix {
    sample_cov_of(&block.r)
}

pub fn sample_cov_of(r: &CMatrix) -> CMatrix {
    let n = r.ncols().max(1) as f64;
    let mut c = r * r.adjoint() / C64::new(n, 0.0);
    // exact Hermitian symmetry
    for i in 0..c.nrows() {
        c[(i, i)].im = 0.0;
        for j in 0..i {
            c[(j, i)] = c[(i, j)].conj();
        }
    }
    c
}

/// Gaussian approximation of the RSS distribution: mean and (diagonal) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RssMoments {
    /// `g_m s + sigma^2`.
    pub mean: DVector<f64>,
    /// `sigma^4/N + 2 sigma^2 s g_m / N`.
    pub var: DVector<f64>,
}

impl RssMoments {
    /// The covariance as a dense diagonal matrix.
    pub fn cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.var)
    }
}

pub fn rss_moments(gain: &DVector<f64>, signal_power: f64, noise_power: f64, snapshots: usize) -> RssMoments {
    let n = snapshots as f64;
    let s2 = noise_power;
    RssMoments {
        mean: gain.map(|g| g * signal_power + s2),
        var: gain.map(|g| s2 * s2 / n + 2.0 * s2 * signal_power * g / n),
    }
}

/// Noncentrality `Lambda = N g s` of the scaled RSS chi-square law.
pub fn noncentrality(gain: f64, signal_power: f64, snapshots: usize) -> f64 {
    snapshots as f64 * gain * signal_power
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSpec;
    use crate::response::WmModel;

    fn toy_model() -> WmModel {
        let g = CMatrix::from_fn(3, 4, |i, j| {
            C64::new(0.3 * (i + j) as f64, 0.1 * i as f64 - 0.2 * j as f64)
        });
        WmModel::new(g, BasisSpec::complex_sh(1))
    }

    #[test]
    fn noise_free_constant_signal_reproduces_response() {
        let m = toy_model();
        let d = Direction::new(0.7, 1.0);
        let mut scn = Scenario::single(d, 1.0, 0.0, 5);
        scn.waveform = Waveform::Constant;
        let b = gen_snapshots(&scn, &m, 1).unwrap();
        let a = m.response(d).unwrap();
        for k in 0..5 {
            assert!((b.r.column(k) - &a).norm() < 1e-15);
        }
        assert_eq!(b, gen_snapshots(&scn, &m, 1).unwrap());
        // rss equals gains for unit-modulus symbols
        scn.waveform = Waveform::UnitModulus;
        let r = rss(&gen_snapshots(&scn, &m, 2).unwrap());
        assert!((r - a.map(|z| z.norm_sqr())).amax() < 1e-14);
    }

    #[test]
    fn rss_and_cov_examples() {
        let zero = CMatrix::zeros(2, 3);
        assert_eq!(rss_of(&zero), DVector::zeros(2));
        assert_eq!(sample_cov_of(&zero), CMatrix::zeros(2, 2));
        let twos = CMatrix::from_element(2, 4, C64::new(2.0, 0.0));
        assert_eq!(rss_of(&twos), DVector::from_element(2, 4.0));
        let r = CMatrix::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let c = sample_cov_of(&r);
        assert_eq!(c[(0, 1)], C64::new(0.0, -1.0));
        assert_eq!(c[(1, 0)], C64::new(0.0, 1.0));
        assert_eq!(c[(1, 1)], C64::new(1.0, 0.0));
    }

    #[test]
    fn moment_examples() {
        let g = DVector::from_vec(vec![1.0, 0.5]);
        let z = rss_moments(&g, 2.0, 0.0, 10);
        assert_eq!(z.mean, &g * 2.0);
        assert_eq!(z.var, DVector::zeros(2));
        let m = rss_moments(&DVector::from_element(1, 1.0), 1.0, 1.0, 1);
        assert_eq!((m.mean[0], m.var[0]), (2.0, 3.0));
        assert_eq!(noncentrality(1.0, 0.0, 50), 0.0);
        assert_eq!(noncentrality(1.0, 1.0, 1000), 1000.0);
        assert_eq!(noncentrality(2.0, 3.0, 10), 60.0);
    }

    #[test]
    fn noise_variance_matches() {
        let m = WmModel::new(CMatrix::zeros(2, 4), BasisSpec::complex_sh(1));
        let scn = Scenario::single(Direction::new(1.0, 0.0), 1.0, 2.0, 100_000);
        let b = gen_snapshots(&scn, &m, 9).unwrap();
        for i in 0..2 {
            let v = b.r.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() / 1e5;
            // |w|^2 is exponential with mean 2 and std 2
            assert!((v - 2.0).abs() < 5.0 * 2.0 / 1e5_f64.sqrt());
        }
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = Scenario::single(Direction::new(1.0, 0.0), 1.0, 1.0, 10);
        s.powers.push(1.0);
        assert!(s.validate().is_err());
        let mut s = Scenario::single(Direction::new(1.0, 0.0), 1.0, -1.0, 10);
        assert!(s.validate().is_err());
        s.noise_power = 1.0;
        s.snapshots = 0;
        assert!(s.validate().is_err());
    }
}
