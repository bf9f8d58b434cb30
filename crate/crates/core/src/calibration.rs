//! Discrete calibration data `E` and a synthetic band-limited antenna generator.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{basis_eval, BasisSpec, Direction, C64};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// File format version written by [`CalibrationSet::save`].
pub const CALIBRATION_VERSION: u32 = 1;

/// Which partial response a model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    #[default]
    Co,
    Cross,
}

/// Regular angular sampling grid, enumerated theta-major.
///
/// Angles are kept in degrees, exactly as written to disk, so that a file
/// round trip is lossless; the accessors return radians. A grid with
/// `phi_count == 1` is an x-z plane cut whose in-plane angle covers `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub theta_start_deg: f64,
    pub theta_step_deg: f64,
    pub theta_count: usize,
    pub phi_start_deg: f64,
    pub phi_step_deg: f64,
    pub phi_count: usize,
}

impl CalibrationGrid {
    /// Full-sphere grid with `step` degree spacing: `theta` in `[0, 180]`,
    /// `phi` in `[0, 360)`.
    pub fn sphere(step_deg: f64) -> Result<Self> {
        let (tc, pc) = (steps_in(180.0, step_deg)?, steps_in(360.0, step_deg)?);
        Ok(Self {
            theta_start_deg: 0.0,
            theta_step_deg: step_deg,
            theta_count: tc + 1,
            phi_start_deg: 0.0,
            phi_step_deg: step_deg,
            phi_count: pc,
        })
    }

    /// Planar cut covering `[-180, 180)` degrees.
    pub fn planar(step_deg: f64) -> Result<Self> {
        Ok(Self {
            theta_start_deg: -180.0,
            theta_step_deg: step_deg,
            theta_count: steps_in(360.0, step_deg)?,
            phi_start_deg: 0.0,
            phi_step_deg: 0.0,
            phi_count: 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_count == 0 || self.phi_count == 0 {
            return Err(Error::Dimension("grid counts must be positive".into()));
        }
        let vals = [
            self.theta_start_deg,
            self.theta_step_deg,
            self.phi_start_deg,
            self.phi_step_deg,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid angles".into()));
        }
        Ok(())
    }

    /// Number of sample points `Q`.
    pub fn len(&self) -> usize {
        self.theta_count * self.phi_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_planar(&self) -> bool {
        self.phi_count == 1
    }

    /// Zero-based sample index of `(i_theta, i_phi)`.
    pub fn index(&self, i_theta: usize, i_phi: usize) -> usize {
        i_theta * self.phi_count + i_phi
    }

    /// Inverse of [`CalibrationGrid::index`].
    pub fn coords(&self, q: usize) -> (usize, usize) {
        (q / self.phi_count, q % self.phi_count)
    }

    pub fn theta(&self, i_theta: usize) -> f64 {
        (self.theta_start_deg + i_theta as f64 * self.theta_step_deg).to_radians()
    }

    pub fn phi(&self, i_phi: usize) -> f64 {
        (self.phi_start_deg + i_phi as f64 * self.phi_step_deg).to_radians()
    }

    pub fn direction(&self, q: usize) -> Direction {
        let (it, ip) = self.coords(q);
        if self.is_planar() {
            Direction::planar(self.theta(it))
        } else {
            Direction::new(self.theta(it), self.phi(ip))
        }
    }

    pub fn directions(&self) -> Vec<Direction> {
        (0..self.len()).map(|q| self.direction(q)).collect()
    }
}

fn steps_in(span: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid step must be positive, got {step}"
        )));
    }
    let n = span / step;
    if (n - n.round()).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "grid step {step} deg does not divide {span} deg"
        )));
    }
    Ok(n.round() as usize)
}

/// Co- and cross-polarized complex responses of `M` ports on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub frequency_hz: f64,
    pub enclosing_radius_m: f64,
    pub grid: CalibrationGrid,
    /// `M x Q`, reference polarization.
    pub co: CMatrix,
    /// `M x Q`, orthogonal polarization.
    pub cross: CMatrix,
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    version: u32,
    frequency_hz: f64,
    num_ports: usize,
    enclosing_radius_m: f64,
    grid: CalibrationGrid,
    ports: Vec<PortFile>,
}

#[derive(Serialize, Deserialize)]
struct PortFile {
    co: Vec<[f64; 2]>,
    cross: Vec<[f64; 2]>,
}

impl CalibrationSet {
    pub fn new(
        frequency_hz: f64,
        enclosing_radius_m: f64,
        grid: CalibrationGrid,
        co: CMatrix,
        cross: CMatrix,
    ) -> Result<Self> {
        let set = Self {
            frequency_hz,
            enclosing_radius_m,
            grid,
            co,
            cross,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let q = self.grid.len();
        if self.co.ncols() != q || self.cross.ncols() != q {
            return Err(Error::Dimension(format!(
                "grid has {q} points but data has {} (co) / {} (cross) columns",
                self.co.ncols(),
                self.cross.ncols()
            )));
        }
        if self.co.nrows() != self.cross.nrows() || self.co.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "co has {} ports, cross has {}",
                self.co.nrows(),
                self.cross.nrows()
            )));
        }
        if let Some(z) = self.co.iter().chain(self.cross.iter()).find(|z| !z.is_finite()) {
            return Err(Error::NonFinite(format!("calibration sample {z}")));
        }
        if !(self.kappa_rs() > 0.0) || !self.kappa_rs().is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa*R_s must be positive (f = {} Hz, R_s = {} m)",
                self.frequency_hz, self.enclosing_radius_m
            )));
        }
        Ok(())
    }

    pub fn num_ports(&self) -> usize {
        self.co.nrows()
    }

    pub fn num_samples(&self) -> usize {
        self.co.ncols()
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    /// Wavenumber `kappa = 2 pi / lambda`.
    pub fn kappa(&self) -> f64 {
        std::f64::consts::TAU / self.wavelength()
    }

    pub fn kappa_rs(&self) -> f64 {
        self.kappa() * self.enclosing_radius_m
    }

    pub fn samples(&self, slot: Slot) -> &CMatrix {
        match slot {
            Slot::Co => &self.co,
            Slot::Cross => &self.cross,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CalibrationFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.version != CALIBRATION_VERSION {
            return Err(Error::Parse(format!(
                "unsupported calibration version {}",
                file.version
            )));
        }
        if file.ports.len() != file.num_ports {
            return Err(Error::Dimension(format!(
                "num_ports = {} but {} port entries",
                file.num_ports,
                file.ports.len()
            )));
        }
        let q = file.grid.len();
        for (m, p) in file.ports.iter().enumerate() {
            for (field, v) in [("co", &p.co), ("cross", &p.cross)] {
                if v.len() != q {
                    return Err(Error::Dimension(format!(
                        "ports[{m}].{field} has {} entries, grid needs {q}",
                        v.len()
                    )));
                }
            }
        }
        let take = |f: fn(&PortFile) -> &Vec<[f64; 2]>| {
            CMatrix::from_fn(file.num_ports, q, |m, k| {
                let [re, im] = f(&file.ports[m])[k];
                C64::new(re, im)
            })
        };
        let co = take(|p| &p.co);
        let cross = take(|p| &p.cross);
        Self::new(file.frequency_hz, file.enclosing_radius_m, file.grid, co, cross)
    }

    pub fn to_json(&self) -> Result<String> {
        let row = |mat: &CMatrix, m: usize| mat.row(m).iter().map(|z| [z.re, z.im]).collect();
        let file = CalibrationFile {
            version: CALIBRATION_VERSION,
            frequency_hz: self.frequency_hz,
            num_ports: self.num_ports(),
            enclosing_radius_m: self.enclosing_radius_m,
            grid: self.grid,
            ports: (0..self.num_ports())
                .map(|m| PortFile {
                    co: row(&self.co, m),
                    cross: row(&self.cross, m),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Reference-polarization gain `|co_{m,q}|^2` (zero-based indices).
pub fn gain_of(set: &CalibrationSet, m: usize, q: usize) -> Result<f64> {
    if m >= set.num_ports() || q >= set.num_samples() {
        return Err(Error::OutOfRange(format!(
            "sample ({m}, {q}) outside {} ports x {} points",
            set.num_ports(),
            set.num_samples()
        )));
    }
    Ok(set.co[(m, q)].norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthMode {
    FullSphere3d,
    XzCut2d,
}

/// Parameters of [`synth_antenna`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub num_ports: usize,
    pub l_truth: usize,
    pub mode: SynthMode,
    pub grid_step_deg: f64,
    /// Blend in `[0, 1]` towards a pattern whose gains are mirror-symmetric
    /// about the y-z plane; `1` makes the response at the mirrored direction
    /// the complex conjugate of the original.
    #[serde(default)]
    pub symmetry: f64,
    #[serde(default = "default_frequency")]
    pub frequency_hz: f64,
}

fn default_frequency() -> f64 {
    7.25e9
}

impl SynthParams {
    pub fn new(seed: u64, num_ports: usize, l_truth: usize, mode: SynthMode, grid_step_deg: f64) -> Self {
        Self {
            seed,
            num_ports,
            l_truth,
            mode,
            grid_step_deg,
            symmetry: 0.0,
            frequency_hz: default_frequency(),
        }
    }

    pub fn with_symmetry(mut self, symmetry: f64) -> Self {
        self.symmetry = symmetry;
        self
    }
}

/// Continuous ground truth behind a synthetic calibration set:
/// `a(dir) = G b(dir)` with complex spherical harmonics of degree `L_truth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAntennaTruth {
    pub g_co: CMatrix,
    pub g_cross: CMatrix,
    pub basis: BasisSpec,
    pub params: SynthParams,
}

impl SyntheticAntennaTruth {
    pub fn response(&self, dir: Direction, slot: Slot) -> DVector<C64> {
        let b = basis_eval(&self.basis, dir).expect("complex SH basis is always valid");
        match slot {
            Slot::Co => &self.g_co * b,
            Slot::Cross => &self.g_cross * b,
        }
    }

    pub fn sampling_matrix(&self, slot: Slot) -> &CMatrix {
        match slot {
            Slot::Co => &self.g_co,
            Slot::Cross => &self.g_cross,
        }
    }
}

/// Coefficients of `conj(f(theta, pi - phi))` given those of `f`:
/// `H_{l,m} = (-1)^m conj(G_{l,m})`.
fn mirror_conj(g: &CMatrix, lmax: usize) -> CMatrix {
    let mut h = g.map(|z| z.conj());
    for l in 0..=lmax as i64 {
        for m in -l..=l {
            if m.rem_euclid(2) == 1 {
                let u = (l * (l + 1) + m) as usize;
                h.column_mut(u).neg_mut();
            }
        }
    }
    h
}

/// Draws a random band-limited multi-port antenna and samples it on a grid.
///
/// Entries of `G` are i.i.d. circular complex Gaussian with per-degree scale
/// `exp(-l/2)`; each port is then normalized to unit mean co-pol gain over the
/// grid. The enclosing radius follows from `kappa R_s = L_truth / 2`. The
/// random stream is ChaCha20 seeded with `seed`.
pub fn synth_antenna(params: &SynthParams) -> Result<(CalibrationSet, SyntheticAntennaTruth)> {
    let SynthParams {
        seed,
        num_ports,
        l_truth,
        mode,
        grid_step_deg,
        symmetry,
        frequency_hz,
    } = *params;
    if num_ports < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 ports, got {num_ports}"
        )));
    }
    if l_truth < 2 {
        return Err(Error::InvalidParameter(format!("L_truth must be >= 2, got {l_truth}")));
    }
    if !(0.0..=1.0).contains(&symmetry) {
        return Err(Error::InvalidParameter(format!(
            "symmetry must lie in [0, 1], got {symmetry}"
        )));
    }
    if !(frequency_hz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frequency must be positive, got {frequency_hz}"
        )));
    }
    let grid = match mode {
        SynthMode::FullSphere3d => CalibrationGrid::sphere(grid_step_deg)?,
        SynthMode::XzCut2d => CalibrationGrid::planar(grid_step_deg)?,
    };
    let basis = BasisSpec::complex_sh(l_truth);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scale: Vec<f64> = (0..=l_truth as i64)
        .flat_map(|l| (-l..=l).map(move |_| (-(l as f64) / 2.0).exp() * std::f64::consts::FRAC_1_SQRT_2))
        .collect();
    let draw = |rng: &mut ChaCha20Rng| {
        let mut g = CMatrix::zeros(num_ports, basis.size);
        for m in 0..num_ports {
            for (u, s) in scale.iter().enumerate() {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                g[(m, u)] = C64::new(re, im) * *s;
            }
        }
        if symmetry > 0.0 {
            let h = mirror_conj(&g, l_truth);
            g = &g + (h - &g) * C64::new(symmetry / 2.0, 0.0);
        }
        g
    };
    let mut g_co = draw(&mut rng);
    let mut g_cross = draw(&mut rng);

    let b = CMatrix::from_columns(
        &grid
            .directions()
            .into_iter()
            .map(|d| basis_eval(&basis, d))
            .collect::<Result<Vec<_>>>()?,
    );
    let co = &g_co * &b;
    for m in 0..num_ports {
        let mean_gain = co.row(m).iter().map(|z| z.norm_sqr()).sum::<f64>() / grid.len() as f64;
        let k = 1.0 / mean_gain.sqrt();
        g_co.row_mut(m).scale_mut(k);
        g_cross.row_mut(m).scale_mut(k);
    }
    let co = &g_co * &b;
    let cross = &g_cross * &b;
    let kappa = std::f64::consts::TAU * frequency_hz / SPEED_OF_LIGHT;
    let set = CalibrationSet::new(frequency_hz, l_truth as f64 / 2.0 / kappa, grid, co, cross)?;
    let truth = SyntheticAntennaTruth {
        g_co,
        g_cross,
        basis,
        params: *params,
    };
    Ok((set, truth))
}
