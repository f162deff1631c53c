//! Python bindings: detector parameters, matrix construction, EME
//! reconstruction, metrics, and the click simulator.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use spad_recon::charfit::CharfitConfig;
use spad_recon::detector::{
    AfterpulseProfile, CycleWindow, DetectorParams as CoreParams, PhotonProfile, ValUnc,
};
use spad_recon::dist::{self, NumberDistribution};
use spad_recon::eme::{self, EmeConfig};
use spad_recon::pipeline;
use spad_recon::sim::{self, LightSource, SimConfig, SimMode};
use spad_recon::tags::{self, TagFormat};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Measurable detector parameters.
#[pyclass(name = "DetectorParams", from_py_object)]
#[derive(Clone)]
struct PyDetectorParams {
    inner: CoreParams,
}

#[pymethods]
impl PyDetectorParams {
    /// Build from scalar parameters and a hyperexponential afterpulse
    /// profile given as [(timescale_s, weight), ...].
    #[new]
    #[pyo3(signature = (eta0, r_b, ap_total, t_dead, t_reset, t_rec,
                        ap_decays = vec![(4e-9, 1.0)], ap_bin = 1e-9, ap_support = 2e-6))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        eta0: f64,
        r_b: f64,
        ap_total: f64,
        t_dead: f64,
        t_reset: f64,
        t_rec: f64,
        ap_decays: Vec<(f64, f64)>,
        ap_bin: f64,
        ap_support: f64,
    ) -> PyResult<Self> {
        let ap_profile = if ap_total > 0.0 {
            AfterpulseProfile::hyperexponential(ap_total, t_rec, ap_bin, &ap_decays, ap_support)
        } else {
            AfterpulseProfile::empty(ap_bin)
        };
        let inner = CoreParams {
            eta0: ValUnc::exact(eta0),
            r_b: ValUnc::exact(r_b),
            ap_total: ValUnc::exact(ap_total),
            ap_profile,
            t_dead: ValUnc::exact(t_dead),
            t_reset: ValUnc::exact(t_reset),
            t_rec: ValUnc::exact(t_rec),
        };
        inner.validate(spad_recon::TICK_SECONDS).map_err(value_err)?;
        Ok(PyDetectorParams { inner })
    }

    /// Parse the JSON emitted by `spad-recon characterize`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: CoreParams = serde_json_from(text)?;
        Ok(PyDetectorParams { inner })
    }

    #[getter]
    fn eta0(&self) -> f64 {
        self.inner.eta0.value
    }

    #[getter]
    fn t_rec(&self) -> f64 {
        self.inner.t_rec.value
    }

    fn __repr__(&self) -> String {
        format!(
            "DetectorParams(eta0={}, r_b={}, ap_total={}, t_rec={})",
            self.inner.eta0.value,
            self.inner.r_b.value,
            self.inner.ap_total.value,
            self.inner.t_rec.value
        )
    }
}

fn serde_json_from(text: &str) -> PyResult<CoreParams> {
    CoreParams::from_json(text).map_err(value_err)
}

/// Reconstruction output.
#[pyclass(name = "Reconstruction")]
struct PyReconstruction {
    #[pyo3(get)]
    probs: Vec<f64>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    nbar_fit: f64,
    #[pyo3(get)]
    tvd_to_fit: f64,
    #[pyo3(get)]
    g2: Option<f64>,
}

/// Poisson probabilities with mean `nbar` on the basis `0..=n_max`.
#[pyfunction]
fn poisson_pmf_vector(nbar: f64, n_max: usize) -> PyResult<Vec<f64>> {
    if nbar < 0.0 {
        return Err(PyValueError::new_err("nbar must be nonnegative"));
    }
    Ok(dist::poisson_pmf_vector(nbar, n_max).probs().to_vec())
}

/// Half the L1 distance between two distributions.
#[pyfunction]
fn total_variation_distance(p1: Vec<f64>, p2: Vec<f64>) -> PyResult<f64> {
    let a = NumberDistribution::normalize(&p1).map_err(value_err)?;
    let b = NumberDistribution::normalize(&p2).map_err(value_err)?;
    eme::total_variation_distance(&a, &b).map_err(value_err)
}

/// Pulse-averaged second-order autocorrelation of a number distribution.
#[pyfunction]
fn g2(probs: Vec<f64>) -> PyResult<f64> {
    let d = NumberDistribution::normalize(&probs).map_err(value_err)?;
    eme::g2_reconstructed(&d).map_err(value_err)
}

/// Least-squares Poissonian fit; returns (nbar_fit, tvd).
#[pyfunction]
fn fit_poissonian(probs: Vec<f64>) -> PyResult<(f64, f64)> {
    let d = NumberDistribution::normalize(&probs).map_err(value_err)?;
    Ok(eme::fit_poissonian(&d))
}

/// Build the detector matrix `D = A·R·B·L` for a flat pulse of `duration`
/// seconds (optionally zero-padded); returns it as a list of rows.
#[pyfunction]
#[pyo3(signature = (detector, duration, n_max, o_r, o_a = 2, pad = 0.0, bin_width = 1e-9))]
fn build_detector_matrix(
    detector: &PyDetectorParams,
    duration: f64,
    n_max: usize,
    o_r: usize,
    o_a: usize,
    pad: f64,
    bin_width: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let bins = (duration / bin_width).round().max(1.0) as usize;
    let gamma = PhotonProfile::flat(duration, bins).padded_to(duration + pad);
    let dm = spad_recon::detmat::build_detector_matrix(&detector.inner, &gamma, n_max, o_r, o_a)
        .map_err(runtime_err)?;
    Ok(dm.matrix.to_rows())
}

/// Reconstruct a photon-number distribution from a click distribution and a
/// detector matrix (rows).
#[pyfunction]
#[pyo3(signature = (clicks, matrix, alpha = 1e-3, epsilon = 1e-12, max_iter = 1_000_000))]
fn eme_reconstruct(
    clicks: Vec<f64>,
    matrix: Vec<Vec<f64>>,
    alpha: f64,
    epsilon: f64,
    max_iter: usize,
) -> PyResult<PyReconstruction> {
    let dim = matrix.len();
    let mut m = spad_recon::matrix::SquareMatrix::zeros(dim);
    for (r, row) in matrix.iter().enumerate() {
        if row.len() != dim {
            return Err(PyValueError::new_err("matrix must be square"));
        }
        for (c, &v) in row.iter().enumerate() {
            m.set(r, c, v);
        }
    }
    let clicks = NumberDistribution::normalize(&clicks).map_err(value_err)?;
    let cfg = EmeConfig { alpha, epsilon, max_iter, ml_poisson_fit: false };
    let out = eme::eme_reconstruct(&clicks, &m, &cfg, None).map_err(runtime_err)?;
    Ok(PyReconstruction {
        probs: out.distribution.probs().to_vec(),
        iterations: out.iterations,
        converged: out.converged,
        nbar_fit: out.fitted_nbar,
        tvd_to_fit: out.tvd_to_fit,
        g2: out.g2_recon,
    })
}

/// Simulate a flat coherent pulse and return the per-cycle click-number
/// tallies up to `n_max`.
#[pyfunction]
#[pyo3(signature = (detector, nbar, duration, cycles, seed, n_max, pad = 0.0, physical = false))]
#[allow(clippy::too_many_arguments)]
fn simulate_click_counts(
    detector: &PyDetectorParams,
    nbar: f64,
    duration: f64,
    cycles: usize,
    seed: u64,
    n_max: usize,
    pad: f64,
    physical: bool,
) -> PyResult<Vec<u64>> {
    let bins = (duration / 1e-9).round().max(1.0) as usize;
    let gamma = PhotonProfile::flat(duration, bins).padded_to(duration + pad);
    let window = gamma.window();
    let cfg = SimConfig::new(
        detector.inner.clone(),
        gamma,
        LightSource::Poisson { nbar },
        cycles,
        if physical { SimMode::Physical } else { SimMode::Faithful },
        seed,
    );
    let run = sim::simulate(&cfg);
    let cw = CycleWindow::new(0.0, window, 1e-9).map_err(value_err)?;
    let d = tags::click_number_distribution(&run.stream, &cw, Some(n_max))
        .map_err(runtime_err)?;
    let mut counts = d.counts;
    counts.resize(n_max + 1, 0);
    Ok(counts)
}

/// Reconstruct a tag file end to end; returns a Reconstruction.
#[pyfunction]
#[pyo3(signature = (tags_path, detector, t_start, t_end, o_r = 0, n_max = 0, nbar_expected = 0.0))]
fn reconstruct_file(
    tags_path: &str,
    detector: &PyDetectorParams,
    t_start: f64,
    t_end: f64,
    o_r: usize,
    n_max: usize,
    nbar_expected: f64,
) -> PyResult<PyReconstruction> {
    let stream = tags::read_time_tags(std::path::Path::new(tags_path), TagFormat::Auto)
        .map_err(value_err)?;
    let window = CycleWindow::new(t_start, t_end, spad_recon::DEFAULT_BIN_TICKS as f64 * spad_recon::TICK_SECONDS)
        .map_err(value_err)?;
    let opts = pipeline::ReconstructOptions {
        window,
        n_max: (n_max > 0).then_some(n_max),
        o_r: (o_r > 0).then_some(o_r),
        o_a: 2,
        eme: EmeConfig::default(),
        nbar_expected: (nbar_expected > 0.0).then_some(nbar_expected),
    };
    let out = pipeline::reconstruct_stream(&stream, &detector.inner, &opts)
        .map_err(runtime_err)?;
    Ok(PyReconstruction {
        probs: out.result.distribution.probs().to_vec(),
        iterations: out.result.iterations,
        converged: out.result.converged,
        nbar_fit: out.result.fitted_nbar,
        tvd_to_fit: out.result.tvd_to_fit,
        g2: out.result.g2_recon,
    })
}

/// Characterize a detector from dark and illuminated tag files; returns the
/// report as a JSON string.
#[pyfunction]
#[pyo3(signature = (dark_path, lit_paths, eta0 = 1.0, eta0_sigma = 0.0, bootstrap = 300))]
fn characterize_files(
    dark_path: &str,
    lit_paths: Vec<String>,
    eta0: f64,
    eta0_sigma: f64,
    bootstrap: usize,
) -> PyResult<String> {
    let dark = tags::read_time_tags(std::path::Path::new(dark_path), TagFormat::Auto)
        .map_err(value_err)?;
    let mut lit = Vec::new();
    for p in &lit_paths {
        lit.push(
            tags::read_time_tags(std::path::Path::new(p), TagFormat::Auto).map_err(value_err)?,
        );
    }
    let opts = pipeline::CharacterizeOptions {
        eta0: ValUnc::new(eta0, eta0_sigma),
        charfit: CharfitConfig { bootstrap_samples: bootstrap, ..CharfitConfig::default() },
        ..pipeline::CharacterizeOptions::default()
    };
    let report = pipeline::characterize(&dark, &lit, &opts).map_err(runtime_err)?;
    report.to_json().map_err(runtime_err)
}

#[pymodule]
fn spad_recon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDetectorParams>()?;
    m.add_class::<PyReconstruction>()?;
    m.add_function(wrap_pyfunction!(poisson_pmf_vector, m)?)?;
    m.add_function(wrap_pyfunction!(total_variation_distance, m)?)?;
    m.add_function(wrap_pyfunction!(g2, m)?)?;
    m.add_function(wrap_pyfunction!(fit_poissonian, m)?)?;
    m.add_function(wrap_pyfunction!(build_detector_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(eme_reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_click_counts, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct_file, m)?)?;
    m.add_function(wrap_pyfunction!(characterize_files, m)?)?;
    m.add("TICK_SECONDS", spad_recon::TICK_SECONDS)?;
    Ok(())
}
