//! Python bindings: datasets, masks, cascade models, metrics and the
//! config-driven pipeline.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use csrecon::cascade::{self, load_model, save_model, CascadeModel};
use csrecon::data::{self, KSpaceVolume, SynthConfig};
use csrecon::eval;
use csrecon::pipeline::{self, PipelineConfig, RunContext};
use csrecon::sampling::{self, SamplingMask};
use csrecon::transform::{ifft2c, sum_of_squares};
use csrecon::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ Error::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

type Image = (Vec<f32>, Vec<usize>);

fn combined(image: data::ImageVolume) -> Image {
    let t = image.combined().expect("combined image");
    (t.data().to_vec(), t.shape().to_vec())
}

/// Multi-coil k-space `[Ns, Nc, Ny, Nz]`.
#[pyclass(name = "Dataset", module = "csrecon_py")]
pub struct PyDataset {
    inner: KSpaceVolume,
}

#[pymethods]
impl PyDataset {
    /// Synthetic phantom volume, normalised to a unit-peak reference.
    #[staticmethod]
    #[pyo3(signature = (seed, ns, nc, ny, nz))]
    fn synthesize(seed: u64, ns: usize, nc: usize, ny: usize, nz: usize) -> PyResult<Self> {
        let (inner, _) = data::synthesize_phantom(&SynthConfig::new(seed, ns, nc, ny, nz)).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: data::load_dataset(path).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        data::save_dataset(path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> [usize; 4] {
        self.inner.meta().shape()
    }

    /// Fully sampled sum-of-squares image as `(flat values, shape)`.
    fn reference(&self) -> PyResult<Image> {
        Ok(combined(sum_of_squares(&ifft2c(&self.inner).map_err(py_err)?).map_err(py_err)?))
    }

    /// Zero-filled sum-of-squares image under `mask`.
    fn zero_filled(&self, mask: PyRef<'_, PyMask>) -> PyResult<Image> {
        Ok(combined(cascade::zero_filled(&self.inner, &mask.inner).map_err(py_err)?))
    }

    fn __repr__(&self) -> String {
        format!("Dataset(shape={:?})", self.inner.meta().shape())
    }
}

/// Binary k-space sampling mask.
#[pyclass(name = "Mask", module = "csrecon_py")]
pub struct PyMask {
    inner: SamplingMask,
}

#[pymethods]
impl PyMask {
    /// Poisson-disc mask with a fully sampled centre disc.
    #[staticmethod]
    #[pyo3(signature = (ny, nz, acceleration, center_radius = 16, seed = 0))]
    fn poisson(ny: usize, nz: usize, acceleration: f64, center_radius: usize, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: sampling::poisson_disc_mask(ny, nz, acceleration, center_radius, seed).map_err(py_err)? })
    }

    #[staticmethod]
    fn full(ny: usize, nz: usize) -> Self {
        Self { inner: SamplingMask::full(ny, nz) }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: sampling::load_mask(path).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        sampling::save_mask(path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.ny(), self.inner.nz())
    }

    #[getter]
    fn acceleration(&self) -> PyResult<f64> {
        self.inner.achieved_acceleration().map_err(py_err)
    }

    #[getter]
    fn fraction(&self) -> f64 {
        self.inner.achieved_fraction()
    }

    /// Row-major 0/1 grid.
    fn grid(&self) -> Vec<u8> {
        self.inner.grid().to_vec()
    }
}

/// Cascade of U-net (or Deep Cascade) blocks with data consistency.
#[pyclass(name = "Model", module = "csrecon_py")]
pub struct PyModel {
    inner: CascadeModel<f32>,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (spec, configuration = "mc", nc = 1, base_width = 8, seed = 0))]
    fn new(spec: &str, configuration: &str, nc: usize, base_width: usize, seed: u64) -> PyResult<Self> {
        let section =
            pipeline::ModelSection { spec: spec.into(), configuration: configuration.into(), base_width };
        Ok(Self { inner: pipeline::build_model(&section, nc, seed).map_err(py_err)? })
    }

    /// Loads a model manifest written by `save` or the `train` command.
    #[staticmethod]
    fn load(manifest: &str) -> PyResult<Self> {
        Ok(Self { inner: load_model(manifest).map_err(py_err)? })
    }

    /// Writes the manifest and the weights file (relative to the manifest's directory).
    fn save(&self, manifest: &str, weights: &str) -> PyResult<()> {
        save_model(&self.inner, manifest, weights).map_err(py_err)
    }

    #[getter]
    fn spec(&self) -> String {
        self.inner.spec().name()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn zero(&mut self) {
        self.inner.zero_all();
    }

    /// Sum-of-squares reconstruction of `dataset` undersampled by `mask`.
    fn reconstruct(&self, py: Python<'_>, dataset: PyRef<'_, PyDataset>, mask: PyRef<'_, PyMask>) -> PyResult<Image> {
        let (x, m) = (&dataset.inner, &mask.inner);
        let image = py.detach(|| cascade::reconstruct(&self.inner, x, m)).map_err(py_err)?;
        Ok(combined(image))
    }

    fn __repr__(&self) -> String {
        format!("Model(spec={:?}, params={})", self.inner.spec().name(), self.inner.param_count())
    }
}

#[pyfunction]
fn nrmse(recon: Vec<f32>, reference: Vec<f32>) -> PyResult<f64> {
    eval::nrmse_slice(&recon, &reference).map_err(py_err)
}

#[pyfunction]
fn psnr(recon: Vec<f32>, reference: Vec<f32>) -> PyResult<f64> {
    eval::psnr_slice(&recon, &reference).map_err(py_err)
}

#[pyfunction]
fn vif(recon: Vec<f32>, reference: Vec<f32>, ny: usize, nz: usize) -> PyResult<f64> {
    eval::vif_slice(&recon, &reference, ny, nz).map_err(py_err)
}

/// Friedman test over `scores[subject][method]`; returns `(chi2, p)`.
#[pyfunction]
fn friedman(scores: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let labels: Vec<String> = (0..scores.first().map_or(0, Vec::len)).map(|i| format!("m{i}")).collect();
    let r = eval::friedman_test(&scores, &labels).map_err(py_err)?;
    Ok((r.statistic, r.p_value))
}

/// Runs a pipeline subcommand with a TOML config; returns the output paths.
#[pyfunction]
#[pyo3(signature = (command, config = "", out = ".", deterministic = false, resume = false))]
fn run(py: Python<'_>, command: &str, config: &str, out: &str, deterministic: bool, resume: bool) -> PyResult<Vec<String>> {
    let command: pipeline::Command = command.parse().map_err(py_err)?;
    let config = PipelineConfig::from_text(config).map_err(py_err)?;
    let ctx = RunContext { deterministic, resume, ..RunContext::new(out) };
    let manifest = py.detach(|| pipeline::run_command(command, &config, &ctx)).map_err(py_err)?;
    Ok(manifest.outputs)
}

#[pymodule]
fn csrecon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(nrmse, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(vif, m)?)?;
    m.add_function(wrap_pyfunction!(friedman, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
