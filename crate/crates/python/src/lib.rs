//! Python bindings: the basis, CTF weights, simulation, covariance
//! estimation, eigenimages, Wiener denoising, FRC and MRC/report I/O.
//! Images are `(L, L)` float64 arrays, stacks `(N, L, L)`, coefficient
//! vectors complex128 arrays in basis index order.

use std::collections::BTreeMap;

use numpy::ndarray::{Array2, Array3};
use numpy::{Complex64, IntoPyArray, PyArray1, PyArray2, PyArray3, PyReadonlyArray1, PyReadonlyArray2, PyReadonlyArray3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use steercov::covariance::{eigenimages as top_eigenimages, EstimationReport};
use steercov::ctf::{check_wellposedness, ctf_to_weights, CtfParams};
use steercov::io::{load_report, read_mrc, save_report, write_mrc, MrcStack};
use steercov::metrics::frc as frc_curve;
use steercov::pipeline::{denoise_selection, estimate as run_estimate, prepare};
use steercov::simulate::{make_dataset, make_phantom, NoiseKind, SimulationConfig};
use steercov::{BasisConfig, BasisSpec, BlockDiagHermitian, CoeffVec, Dataset, Image};

fn err(e: steercov::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_image(a: &PyReadonlyArray2<'_, f64>, pixel_size: f64) -> PyResult<Image> {
    let v = a.as_array();
    let (rows, cols) = v.dim();
    if rows != cols {
        return Err(PyValueError::new_err(format!("image must be square, got {rows}x{cols}")));
    }
    Image::from_vec(rows, pixel_size, v.iter().copied().collect()).map_err(err)
}

fn image_array<'py>(py: Python<'py>, img: &Image) -> Bound<'py, PyArray2<f64>> {
    let l = img.size();
    Array2::from_shape_vec((l, l), img.data().to_vec())
        .expect("square image")
        .into_pyarray(py)
}

fn stack_array<'py>(py: Python<'py>, images: &[Image]) -> Bound<'py, PyArray3<f64>> {
    let l = images.first().map_or(0, Image::size);
    let data: Vec<f64> = images.iter().flat_map(|im| im.data().iter().copied()).collect();
    Array3::from_shape_vec((images.len(), l, l), data)
        .expect("equal image sizes")
        .into_pyarray(py)
}

fn stack_images(a: &PyReadonlyArray3<'_, f64>, pixel_size: f64) -> PyResult<Vec<Image>> {
    let v = a.as_array();
    let (n, rows, cols) = v.dim();
    if rows != cols {
        return Err(PyValueError::new_err(format!("images must be square, got {rows}x{cols}")));
    }
    (0..n)
        .map(|i| {
            let slice = v.index_axis(numpy::ndarray::Axis(0), i);
            Image::from_vec(rows, pixel_size, slice.iter().copied().collect()).map_err(err)
        })
        .collect()
}

/// Fourier-Bessel basis on the unit disk inscribed in an `size x size` grid.
#[pyclass(name = "Basis", module = "steercov", frozen)]
struct PyBasis {
    inner: BasisSpec,
}

#[pymethods]
impl PyBasis {
    #[new]
    #[pyo3(signature = (size, band_ratio = 1.0, pixel_size = 1.0))]
    fn new(size: usize, band_ratio: f64, pixel_size: f64) -> PyResult<Self> {
        let inner = BasisSpec::new(BasisConfig::new(size, band_ratio).with_pixel_size(pixel_size)).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn size(&self) -> usize {
        self.inner.grid_size()
    }

    #[getter]
    fn pixel_size(&self) -> f64 {
        self.inner.pixel_size()
    }

    #[getter]
    fn hash(&self) -> String {
        self.inner.hash_hex()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(n, k)` for every coefficient.
    fn indices(&self) -> Vec<(i32, u32)> {
        self.inner.indices().iter().map(|i| (i.n, i.k)).collect()
    }

    fn lambdas<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        PyArray1::from_vec(py, self.inner.lambdas().to_vec())
    }

    fn expand<'py>(&self, py: Python<'py>, image: PyReadonlyArray2<'py, f64>) -> PyResult<Bound<'py, PyArray1<Complex64>>> {
        let img = to_image(&image, self.inner.pixel_size())?;
        let a = self.inner.expand(&img).map_err(err)?;
        Ok(PyArray1::from_vec(py, a.into_vec()))
    }

    fn synthesize<'py>(&self, py: Python<'py>, coeffs: PyReadonlyArray1<'py, Complex64>) -> PyResult<Bound<'py, PyArray2<f64>>> {
        let a = CoeffVec::from_vec(coeffs.as_array().to_vec());
        Ok(image_array(py, &self.inner.synthesize(&a).map_err(err)?))
    }

    /// Coefficients of the image rotated so that `f'(r, t) = f(r, t + phi)`.
    fn steer<'py>(&self, py: Python<'py>, coeffs: PyReadonlyArray1<'py, Complex64>, phi: f64) -> PyResult<Bound<'py, PyArray1<Complex64>>> {
        let a = CoeffVec::from_vec(coeffs.as_array().to_vec());
        Ok(PyArray1::from_vec(py, self.inner.steer(&a, phi).map_err(err)?.into_vec()))
    }

    fn __repr__(&self) -> String {
        format!("Basis(size={}, len={})", self.inner.grid_size(), self.inner.len())
    }
}

/// CTF sampled at the basis frequencies.
#[pyfunction]
#[pyo3(signature = (basis, defocus_um, pixel_size, voltage_kv = 300.0, cs_mm = 2.0, amplitude_contrast = 0.1, b_factor = 0.0))]
fn ctf_weights<'py>(
    py: Python<'py>,
    basis: &PyBasis,
    defocus_um: f64,
    pixel_size: f64,
    voltage_kv: f64,
    cs_mm: f64,
    amplitude_contrast: f64,
    b_factor: f64,
) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let mut p = CtfParams::new(defocus_um, pixel_size);
    p.voltage = voltage_kv;
    p.spherical_aberration = cs_mm;
    p.amplitude_contrast = amplitude_contrast;
    p.b_factor = b_factor;
    p.validate().map_err(err)?;
    Ok(PyArray1::from_vec(py, ctf_to_weights(&p, &basis.inner).into_vec()))
}

/// Smallest frequency coverage over the basis for a list of CTF weight
/// vectors; 0 means some frequency pair is never observed.
#[pyfunction]
fn coverage(basis: &PyBasis, weights: Vec<Vec<f64>>) -> PyResult<f64> {
    let w: Vec<_> = weights.into_iter().map(steercov::RadialWeightVec::from_vec).collect();
    Ok(check_wellposedness(&w, &basis.inner).map_err(err)?.delta)
}

/// Simulated images with their groups, filters and ground truth.
#[pyclass(name = "Dataset", module = "steercov", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn images<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<f64>> {
        stack_array(py, &self.inner.images)
    }

    #[getter]
    fn clean<'py>(&self, py: Python<'py>) -> Option<Bound<'py, PyArray3<f64>>> {
        self.inner.clean.as_ref().map(|c| stack_array(py, c))
    }

    #[getter]
    fn group_of(&self) -> Vec<usize> {
        self.inner.group_of.clone()
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.inner.noise.variance
    }

    #[getter]
    fn measured_snr(&self) -> Option<f64> {
        self.inner.measured_snr
    }

    fn __len__(&self) -> usize {
        self.inner.num_images()
    }
}

/// Projections of a random blob phantom with CTFs and colored noise.
#[pyfunction]
#[pyo3(signature = (basis, num_images, num_groups, snr = Some(1.0), seed = 0, white_noise = false))]
fn simulate(
    basis: &PyBasis,
    num_images: usize,
    num_groups: usize,
    snr: Option<f64>,
    seed: u64,
    white_noise: bool,
) -> PyResult<PyDataset> {
    let volume = make_phantom(basis.inner.grid_size(), seed).map_err(err)?;
    let mut cfg = SimulationConfig::new(num_images, num_groups, snr, seed);
    if white_noise {
        cfg.noise = NoiseKind::White;
    }
    let inner = make_dataset(&basis.inner, &volume, &cfg).map_err(err)?;
    Ok(PyDataset { inner })
}

/// Block-diagonal Hermitian covariance, one block per angular frequency.
#[pyclass(name = "Covariance", module = "steercov", frozen)]
struct PyCovariance {
    inner: BlockDiagHermitian,
}

#[pymethods]
impl PyCovariance {
    #[getter]
    fn num_blocks(&self) -> usize {
        self.inner.num_blocks()
    }

    fn block<'py>(&self, py: Python<'py>, n: usize) -> PyResult<Bound<'py, PyArray2<Complex64>>> {
        if n >= self.inner.num_blocks() {
            return Err(PyValueError::new_err(format!("no block {n}")));
        }
        let d = self.inner.dim(n);
        Ok(Array2::from_shape_vec((d, d), self.inner.block(n).to_vec())
            .expect("square block")
            .into_pyarray(py))
    }

    fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }
}

/// Output of `estimate`.
#[pyclass(name = "Report", module = "steercov", frozen)]
struct PyReport {
    inner: EstimationReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn mean<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<Complex64>> {
        PyArray1::from_vec(py, self.inner.mean.values().to_vec())
    }

    #[getter]
    fn covariance(&self) -> PyCovariance {
        PyCovariance {
            inner: self.inner.covariance.clone(),
        }
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn shrink(&self) -> bool {
        self.inner.shrink
    }

    #[getter]
    fn timings(&self) -> BTreeMap<String, f64> {
        self.inner.timings.clone()
    }

    #[getter]
    fn basis_hash(&self) -> String {
        self.inner.basis_hash.clone()
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        save_report(&self.inner, path).map_err(err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_report(path).map_err(err)?,
        })
    }

    /// Top eigenimages as `(eigenvalue, n, image)` triples.
    fn eigenimages<'py>(&self, py: Python<'py>, basis: &PyBasis, top: usize) -> PyResult<Vec<(f64, usize, Bound<'py, PyArray2<f64>>)>> {
        let eig = top_eigenimages(&self.inner.covariance, &basis.inner, top).map_err(err)?;
        Ok(eig
            .into_iter()
            .map(|e| (e.eigenvalue, e.n, image_array(py, &e.image)))
            .collect())
    }
}

/// Mean and covariance of a dataset; `shrink=None` shrinks noisy data.
#[pyfunction]
#[pyo3(signature = (basis, dataset, shrink = None))]
fn estimate(py: Python<'_>, basis: &PyBasis, dataset: &PyDataset, shrink: Option<bool>) -> PyResult<PyReport> {
    let inner = py
        .detach(|| {
            let (prepared, timings) = prepare(&basis.inner, &dataset.inner)?;
            run_estimate(&basis.inner, &prepared, shrink, timings)
        })
        .map_err(err)?;
    Ok(PyReport { inner })
}

/// Wiener-denoised images for the given indices, as an `(n, L, L)` stack.
#[pyfunction]
fn denoise<'py>(
    py: Python<'py>,
    basis: &PyBasis,
    dataset: &PyDataset,
    report: &PyReport,
    indices: Vec<usize>,
) -> PyResult<Bound<'py, PyArray3<f64>>> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= dataset.inner.num_images()) {
        return Err(PyValueError::new_err(format!("index {bad} out of range")));
    }
    let images = py
        .detach(|| {
            let (prepared, _) = prepare(&basis.inner, &dataset.inner)?;
            denoise_selection(&basis.inner, &prepared, &report.inner, &indices)
        })
        .map_err(err)?;
    Ok(stack_array(py, &images))
}

/// Fourier ring correlation per integer radius.
#[pyfunction]
fn frc<'py>(py: Python<'py>, a: PyReadonlyArray2<'py, f64>, b: PyReadonlyArray2<'py, f64>) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let curve = frc_curve(&to_image(&a, 1.0)?, &to_image(&b, 1.0)?).map_err(err)?;
    Ok(PyArray1::from_vec(py, curve.values()))
}

#[pyfunction]
#[pyo3(signature = (path, images, pixel_size = 1.0))]
fn write_stack(path: std::path::PathBuf, images: PyReadonlyArray3<'_, f64>, pixel_size: f64) -> PyResult<()> {
    let imgs = stack_images(&images, pixel_size)?;
    write_mrc(&MrcStack::from_images(&imgs).map_err(err)?, path).map_err(err)
}

/// `(stack, pixel_size)` from an MRC file.
#[pyfunction]
fn read_stack<'py>(py: Python<'py>, path: std::path::PathBuf) -> PyResult<(Bound<'py, PyArray3<f64>>, f64)> {
    let stack = read_mrc(path).map_err(err)?;
    Ok((stack_array(py, &stack.to_images()), stack.pixel_size as f64))
}

#[pymodule(name = "steercov")]
fn steercov_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBasis>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyCovariance>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(ctf_weights, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(denoise, m)?)?;
    m.add_function(wrap_pyfunction!(frc, m)?)?;
    m.add_function(wrap_pyfunction!(write_stack, m)?)?;
    m.add_function(wrap_pyfunction!(read_stack, m)?)?;
    Ok(())
}
