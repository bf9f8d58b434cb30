//! Python bindings: synthetic or measured antennas, fitted response models,
//! snapshot simulation, the four estimators, bounds and the campaign driver.
//! Angles cross the boundary in radians except in campaign records.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mmadoa::bounds::{crb_coherent, crb_polarimetric, fim_noncoherent, AngleSet, CrbResult};
use mmadoa::calibration::{synth_antenna, CalibrationSet, SynthMode, SynthParams};
use mmadoa::estimators::{c_ml, nc_ml, nc_rc, p_ml, EstimationResult, Fov, OptimizerOptions};
use mmadoa::harness::{self, FittedModel, ModelSpec, SweepConfig};
use mmadoa::linalg::CMatrix;
use mmadoa::response::{ArrayResponse, GainResponse, PolarizationState, ResponseGains};
use mmadoa::signal::{gen_snapshots, gen_snapshots_polarimetric, rss, sample_cov, Scenario, SnapshotBlock};
use mmadoa::{BasisKind, Direction, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidBasis(_) | Error::InvalidScenario(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_value<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn config_from(config_json: Option<&str>, overrides: Vec<String>) -> PyResult<SweepConfig> {
    let base = match config_json {
        Some(text) => SweepConfig::from_json(text).map_err(py_err)?,
        None => SweepConfig::planar_default(),
    };
    let cfg = base.with_overrides(&overrides).map_err(py_err)?;
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Calibrated antenna: complex co- and cross-polar responses on a grid.
#[pyclass(name = "Antenna", module = "mmadoa")]
struct PyAntenna {
    inner: CalibrationSet,
}

#[pymethods]
impl PyAntenna {
    /// Synthetic antenna with a band-limited random pattern. `mode` is
    /// `"xz-cut2d"` (planar) or `"full-sphere3d"`.
    #[staticmethod]
    #[pyo3(signature = (seed=1, num_ports=4, l_truth=4, mode="xz-cut2d", grid_step_deg=1.0, symmetry=0.0))]
    fn synthetic(
        seed: u64,
        num_ports: usize,
        l_truth: usize,
        mode: &str,
        grid_step_deg: f64,
        symmetry: f64,
    ) -> PyResult<Self> {
        let mode: SynthMode = serde_json::from_value(serde_json::Value::String(mode.into()))
            .map_err(|_| PyValueError::new_err(format!("unknown synthesis mode `{mode}`")))?;
        let params = SynthParams::new(seed, num_ports, l_truth, mode, grid_step_deg).with_symmetry(symmetry);
        let (inner, _) = synth_antenna(&params).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CalibrationSet::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn num_ports(&self) -> usize {
        self.inner.num_ports()
    }

    #[getter]
    fn num_samples(&self) -> usize {
        self.inner.num_samples()
    }

    #[getter]
    fn planar(&self) -> bool {
        self.inner.grid.is_planar()
    }

    /// Fits a wavefield model (`basis` one of `complex-sh`, `real-sh`,
    /// `fourier1d`, `fourier2d`; defaults follow the antenna size).
    #[pyo3(signature = (basis=None, size=None))]
    fn fit_wm(&self, basis: Option<&str>, size: Option<usize>) -> PyResult<PyModel> {
        let basis = basis
            .map(|b| {
                serde_json::from_value::<BasisKind>(serde_json::Value::String(b.into()))
                    .map_err(|_| PyValueError::new_err(format!("unknown basis `{b}`")))
            })
            .transpose()?;
        let spec = ModelSpec::Wm {
            name: "wm".into(),
            basis,
            size,
        };
        PyModel::fit(&spec, &self.inner)
    }

    /// Fits a sectorized array-interpolation model.
    #[pyo3(signature = (width_deg=30.0, overlap_deg=15.0))]
    fn fit_ait(&self, width_deg: f64, overlap_deg: f64) -> PyResult<PyModel> {
        let spec = ModelSpec::Ait {
            name: "ait".into(),
            width_deg,
            overlap_deg,
            geometry: None,
        };
        PyModel::fit(&spec, &self.inner)
    }
}

/// Fitted response model of an antenna.
#[pyclass(name = "Model", module = "mmadoa")]
struct PyModel {
    inner: FittedModel,
    planar: bool,
}

impl PyModel {
    fn fit(spec: &ModelSpec, cal: &CalibrationSet) -> PyResult<Self> {
        Ok(Self {
            inner: FittedModel::fit(spec, cal).map_err(py_err)?,
            planar: cal.grid.is_planar(),
        })
    }

    fn options(&self, fov: Option<(f64, f64)>, grid_step_deg: f64) -> OptimizerOptions {
        let (lo, hi) = fov.unwrap_or(if self.planar { (-85.0, 85.0) } else { (0.0, 90.0) });
        let fov = if self.planar {
            Fov::planar(lo, hi)
        } else {
            Fov::spherical(lo, hi)
        };
        OptimizerOptions {
            grid_step_deg,
            ..OptimizerOptions::new(fov)
        }
    }

    fn angles(&self) -> AngleSet {
        if self.planar {
            AngleSet::Theta
        } else {
            AngleSet::ThetaPhi
        }
    }
}

fn estimate_dict<'py>(py: Python<'py>, r: &EstimationResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let signals: Vec<Bound<'py, PyDict>> = r
        .signals
        .iter()
        .map(|s| {
            let e = PyDict::new(py);
            e.set_item("theta", s.theta)?;
            e.set_item("phi", s.phi)?;
            if let Some(p) = s.polarization {
                e.set_item("gamma", p.gamma)?;
                e.set_item("beta", p.beta)?;
            }
            Ok(e)
        })
        .collect::<PyResult<_>>()?;
    d.set_item("signals", signals)?;
    d.set_item("signal_power", r.signal_power)?;
    d.set_item("noise_power", r.noise_power)?;
    d.set_item("objective", r.objective)?;
    d.set_item("converged", r.diagnostics.converged)?;
    Ok(d)
}

fn crb_dict<'py>(py: Python<'py>, c: &CrbResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (i, label) in c.labels.iter().enumerate() {
        // one signal per call: `theta_1` -> `theta`
        d.set_item(label.strip_suffix("_1").unwrap_or(label), c.crb[(i, i)])?;
    }
    Ok(d)
}

#[pymethods]
impl PyModel {
    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn num_ports(&self) -> usize {
        self.inner.co.num_ports()
    }

    /// Complex co-polar response at `(theta, phi)`.
    #[pyo3(signature = (theta, phi=0.0))]
    fn response(&self, theta: f64, phi: f64) -> PyResult<Vec<num_complex::Complex64>> {
        let a = self.inner.co.response(Direction { theta, phi }).map_err(py_err)?;
        Ok(a.iter().copied().collect())
    }

    /// Response to a signal of polarization `(gamma, beta)`.
    fn polarimetric_response(
        &self,
        theta: f64,
        phi: f64,
        gamma: f64,
        beta: f64,
    ) -> PyResult<Vec<num_complex::Complex64>> {
        let a = self
            .inner
            .polarimetric
            .response(Direction { theta, phi }, PolarizationState::new(gamma, beta))
            .map_err(py_err)?;
        Ok(a.iter().copied().collect())
    }

    /// Per-port power gain `|a_m|^2`.
    #[pyo3(signature = (theta, phi=0.0))]
    fn gain(&self, theta: f64, phi: f64) -> PyResult<Vec<f64>> {
        let g = ResponseGains(&self.inner.co)
            .gain(Direction { theta, phi })
            .map_err(py_err)?;
        Ok(g.iter().copied().collect())
    }

    /// Coherent ML estimate of `num_signals` directions.
    #[pyo3(signature = (snapshots, num_signals=1, fov=None, grid_step_deg=1.0))]
    fn c_ml<'py>(
        &self,
        py: Python<'py>,
        snapshots: &PySnapshots,
        num_signals: usize,
        fov: Option<(f64, f64)>,
        grid_step_deg: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = sample_cov(&snapshots.inner);
        let est = c_ml(&r, &self.inner.co, num_signals, &self.options(fov, grid_step_deg)).map_err(py_err)?;
        estimate_dict(py, &est)
    }

    /// Polarimetric ML estimate (directions and polarizations).
    #[pyo3(signature = (snapshots, num_signals=1, fov=None, grid_step_deg=1.0))]
    fn p_ml<'py>(
        &self,
        py: Python<'py>,
        snapshots: &PySnapshots,
        num_signals: usize,
        fov: Option<(f64, f64)>,
        grid_step_deg: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = sample_cov(&snapshots.inner);
        let est = p_ml(
            &r,
            &self.inner.polarimetric,
            num_signals,
            &self.options(fov, grid_step_deg),
        )
        .map_err(py_err)?;
        estimate_dict(py, &est)
    }

    /// Non-coherent ML estimate from received signal strengths.
    #[pyo3(signature = (rss, snapshots, fov=None, grid_step_deg=1.0))]
    fn nc_ml<'py>(
        &self,
        py: Python<'py>,
        rss: Vec<f64>,
        snapshots: usize,
        fov: Option<(f64, f64)>,
        grid_step_deg: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = nalgebra::DVector::from_vec(rss);
        let est = nc_ml(&r, &self.inner.gain, snapshots, &self.options(fov, grid_step_deg)).map_err(py_err)?;
        estimate_dict(py, &est)
    }

    /// Reduced-complexity non-coherent estimate with known noise power.
    #[pyo3(signature = (rss, noise_power, fov=None, grid_step_deg=1.0))]
    fn nc_rc<'py>(
        &self,
        py: Python<'py>,
        rss: Vec<f64>,
        noise_power: f64,
        fov: Option<(f64, f64)>,
        grid_step_deg: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = nalgebra::DVector::from_vec(rss);
        let est = nc_rc(&r, noise_power, &self.inner.gain, &self.options(fov, grid_step_deg)).map_err(py_err)?;
        estimate_dict(py, &est)
    }

    /// Coherent CRB (variances, rad^2) for one signal of power `signal_power`.
    #[pyo3(signature = (theta, signal_power, noise_power, snapshots, phi=0.0))]
    fn crb_coherent<'py>(
        &self,
        py: Python<'py>,
        theta: f64,
        signal_power: f64,
        noise_power: f64,
        snapshots: usize,
        phi: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let rs = CMatrix::from_element(1, 1, signal_power.into());
        let c = crb_coherent(
            &self.inner.co,
            &[Direction { theta, phi }],
            &rs,
            noise_power,
            snapshots,
            self.angles(),
        )
        .map_err(py_err)?;
        crb_dict(py, &c)
    }

    /// Non-coherent CRB, including the power parameters.
    #[pyo3(signature = (theta, signal_power, noise_power, snapshots, phi=0.0, known_noise=false))]
    fn crb_noncoherent<'py>(
        &self,
        py: Python<'py>,
        theta: f64,
        signal_power: f64,
        noise_power: f64,
        snapshots: usize,
        phi: f64,
        known_noise: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let c = fim_noncoherent(
            &self.inner.gain,
            Direction { theta, phi },
            signal_power,
            noise_power,
            snapshots,
            self.angles(),
            known_noise,
        )
        .map_err(py_err)?;
        crb_dict(py, &c)
    }

    /// Polarimetric CRB for one signal.
    #[allow(clippy::too_many_arguments)]
    fn crb_polarimetric<'py>(
        &self,
        py: Python<'py>,
        theta: f64,
        phi: f64,
        gamma: f64,
        beta: f64,
        signal_power: f64,
        noise_power: f64,
        snapshots: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let rs = CMatrix::from_element(1, 1, signal_power.into());
        let c = crb_polarimetric(
            &self.inner.polarimetric,
            &[Direction { theta, phi }],
            &[PolarizationState::new(gamma, beta)],
            &rs,
            noise_power,
            snapshots,
            self.angles(),
        )
        .map_err(py_err)?;
        crb_dict(py, &c)
    }
}

/// One block of simulated array snapshots.
#[pyclass(name = "Snapshots", module = "mmadoa")]
struct PySnapshots {
    inner: SnapshotBlock,
}

#[pymethods]
impl PySnapshots {
    /// Single unit-modulus signal from `(theta, phi)` through `model` plus
    /// white noise; a polarization `(gamma, beta)` uses the polarimetric model.
    #[staticmethod]
    #[pyo3(signature = (model, theta, signal_power, noise_power, snapshots, seed, phi=0.0, polarization=None))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        model: &PyModel,
        theta: f64,
        signal_power: f64,
        noise_power: f64,
        snapshots: usize,
        seed: u64,
        phi: f64,
        polarization: Option<(f64, f64)>,
    ) -> PyResult<Self> {
        let mut scenario = Scenario::single(Direction { theta, phi }, signal_power, noise_power, snapshots);
        let inner = match polarization {
            Some((gamma, beta)) => {
                scenario.polarizations = Some(vec![PolarizationState::new(gamma, beta)]);
                gen_snapshots_polarimetric(&scenario, &model.inner.polarimetric, seed)
            }
            None => gen_snapshots(&scenario, &model.inner.co, seed),
        }
        .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_snapshots(&self) -> usize {
        self.inner.r.ncols()
    }

    /// Received signal strength per port (mean power over snapshots).
    fn rss(&self) -> Vec<f64> {
        rss(&self.inner).iter().copied().collect()
    }

    /// Sample covariance as a list of rows.
    fn covariance(&self) -> Vec<Vec<num_complex::Complex64>> {
        let c = sample_cov(&self.inner);
        c.row_iter().map(|row| row.iter().copied().collect()).collect()
    }
}

/// Runs a Monte-Carlo campaign; returns the sweep records as dicts.
/// `config` is JSON text (default: the planar reference campaign) and
/// `overrides` are `key=value` strings with dotted keys.
#[pyfunction]
#[pyo3(signature = (config=None, overrides=Vec::new()))]
fn run_sweep<'py>(py: Python<'py>, config: Option<&str>, overrides: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_from(config, overrides)?;
    let records = py.allow_threads(|| harness::run_sweep(&cfg)).map_err(py_err)?;
    json_value(py, &records)
}

/// All estimators on one realization of the configured scenario.
#[pyfunction]
#[pyo3(signature = (config=None, overrides=Vec::new()))]
fn simulate<'py>(py: Python<'py>, config: Option<&str>, overrides: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_from(config, overrides)?;
    let report = py.allow_threads(|| harness::simulate(&cfg)).map_err(py_err)?;
    json_value(py, &report)
}

/// The reference configuration as JSON text.
#[pyfunction]
fn default_config() -> PyResult<String> {
    serde_json::to_string_pretty(&SweepConfig::planar_default()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "mmadoa")]
fn mmadoa_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAntenna>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySnapshots>()?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
