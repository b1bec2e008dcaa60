//! Python bindings: coefficient fields, invariant measures, homogenized
//! matrices, Green-function masses, rate fits and the experiment runner.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use homolab::adjoint::{self, NullVectorMethod};
use homolab::field::{CellLaw, ConstantCoefficients, EllipticityParams, FieldDescriptor, Interpolation, Topology};
use homolab::green::{green_evolve, kernel_mass};
use homolab::harness::config::ExperimentConfig;
use homolab::homogenize::{estimate_abar as estimate, AbarMethod};
use homolab::parabolic::Scheme;
use homolab::{Coefficients, Error, Grid, SymMat};

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        4 => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn nodes_per_unit(h: f64) -> PyResult<usize> {
    homolab::harness::run::nodes_per_unit(h).map_err(to_py)
}

fn rows(a: &SymMat) -> Vec<Vec<f64>> {
    (0..a.dim).map(|i| (0..a.dim).map(|j| a.get(i, j)).collect()).collect()
}

fn point(x: &[f64]) -> PyResult<[f64; 2]> {
    match x {
        [a] => Ok([*a, 0.0]),
        [a, b] => Ok([*a, *b]),
        _ => Err(PyValueError::new_err("points have one or two coordinates")),
    }
}

/// A random coefficient field, or a constant matrix when built with `constant`.
#[pyclass(module = "homolab", frozen)]
struct CoefficientField {
    inner: Field,
}

enum Field {
    Random(homolab::CoefficientField),
    Constant(ConstantCoefficients),
}

impl Field {
    fn coeffs(&self) -> &dyn Coefficients {
        match self {
            Field::Random(f) => f,
            Field::Constant(c) => c,
        }
    }

    fn torus(&self, h: f64) -> PyResult<Grid> {
        match self {
            Field::Random(f) => match f.topology() {
                Topology::Torus { period } => Grid::torus(f.dim(), period as usize, nodes_per_unit(h)?).map_err(to_py),
                Topology::FreeSpace => Err(PyValueError::new_err("this operation needs a periodic field")),
            },
            Field::Constant(c) => Grid::torus(c.dim(), 3, nodes_per_unit(h)?).map_err(to_py),
        }
    }
}

#[pymethods]
impl CoefficientField {
    #[new]
    #[pyo3(signature = (seed, dim=2, lambda_=1.0, big_lambda=2.0, period=None, law="uniform", rho=0.25))]
    fn new(seed: u64, dim: usize, lambda_: f64, big_lambda: f64, period: Option<u32>, law: &str, rho: f64) -> PyResult<Self> {
        let law = match law {
            "uniform" => CellLaw::Uniform,
            "two-point" => CellLaw::TwoPoint { low: lambda_, high: big_lambda },
            "laminar" => CellLaw::Laminar {
                a: [lambda_, big_lambda],
                b: [lambda_, big_lambda],
            },
            other => return Err(PyValueError::new_err(format!("unknown law {other:?}"))),
        };
        let topology = period.map_or(Topology::FreeSpace, |period| Topology::Torus { period });
        let interpolation = if rho == 0.0 {
            Interpolation::PiecewiseConstant
        } else {
            Interpolation::Mollified { rho }
        };
        let f = FieldDescriptor::new(seed, EllipticityParams::new(lambda_, big_lambda), dim, topology)
            .with_law(law)
            .with_interpolation(interpolation)
            .build()
            .map_err(to_py)?;
        Ok(Self { inner: Field::Random(f) })
    }

    /// Constant field from a symmetric matrix given as nested lists.
    #[staticmethod]
    fn constant(matrix: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = match matrix.as_slice() {
            [r] if r.len() == 1 => SymMat::new1(r[0]),
            [r0, r1] if r0.len() == 2 && r1.len() == 2 && r0[1] == r1[0] => SymMat::new2(r0[0], r0[1], r1[1]),
            _ => return Err(PyValueError::new_err("expected a symmetric 1x1 or 2x2 matrix")),
        };
        if !m.is_spd() {
            return Err(PyValueError::new_err("matrix must be positive definite"));
        }
        Ok(Self {
            inner: Field::Constant(ConstantCoefficients(m)),
        })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        let f = homolab::CoefficientField::from_bytes(data).map_err(to_py)?;
        Ok(Self { inner: Field::Random(f) })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        match &self.inner {
            Field::Random(f) => Ok(PyBytes::new(py, &f.to_bytes())),
            Field::Constant(_) => Err(PyValueError::new_err("constant fields have no binary descriptor")),
        }
    }

    /// Descriptor as a JSON string.
    fn descriptor_json(&self) -> PyResult<Option<String>> {
        match &self.inner {
            Field::Random(f) => Ok(Some(
                serde_json::to_string(f.descriptor()).map_err(|e| PyValueError::new_err(e.to_string()))?,
            )),
            Field::Constant(_) => Ok(None),
        }
    }

    fn hash(&self) -> Option<String> {
        match &self.inner {
            Field::Random(f) => Some(f.descriptor_hash()),
            Field::Constant(_) => None,
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.coeffs().dim()
    }

    fn ellipticity(&self) -> (f64, f64) {
        self.inner.coeffs().ellipticity()
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.coeffs().coeff(point(&x)?)))
    }
}

/// Null vector of the transposed generator on a torus.
#[pyclass(module = "homolab", frozen)]
struct InvariantMeasure {
    inner: adjoint::InvariantDensity,
}

#[pymethods]
impl InvariantMeasure {
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    /// Node counts per axis.
    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.grid.n[..self.inner.grid.dim].to_vec()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.grid.h
    }

    #[getter]
    fn relative_residual(&self) -> f64 {
        self.inner.relative_residual
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn value_at(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.value_at(point(&x)?).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (field, h=0.5, method="auto"))]
fn invariant_measure(field: PyRef<'_, CoefficientField>, h: f64, method: &str) -> PyResult<InvariantMeasure> {
    let method = match method {
        "auto" => NullVectorMethod::Auto,
        "power-iteration" => NullVectorMethod::PowerIteration,
        "reduced-solve" => NullVectorMethod::ReducedSolve,
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    let grid = field.inner.torus(h)?;
    let op = homolab::operator::assemble_generator(field.inner.coeffs(), &grid).map_err(to_py)?;
    let inner = adjoint::stationary_measure_op(&op, method).map_err(to_py)?;
    Ok(InvariantMeasure { inner })
}

/// Homogenized matrix by `"delta"` (corrector ladder), `"measure"` (cube
/// averages of `m·A`) or `"closed"` (layered formula).
#[pyfunction]
#[pyo3(signature = (field, h=0.5, method="delta", ladder=None))]
fn estimate_abar(field: PyRef<'_, CoefficientField>, h: f64, method: &str, ladder: Option<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let grid = field.inner.torus(h)?;
    let method = match method {
        "delta" => AbarMethod::DeltaCorrector {
            deltas: ladder.unwrap_or_else(|| vec![0.5, 0.25, 0.125]),
        },
        "measure" => AbarMethod::MeasureAverage {
            sides: ladder.unwrap_or_else(|| vec![f64::INFINITY]),
        },
        "closed" => AbarMethod::ClosedForm,
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    let est = estimate(field.inner.coeffs(), &grid, &method).map_err(to_py)?;
    Ok(rows(&est.abar))
}

/// Masses `Σ P(t,·,y) h^d` of the discrete Green function at each time.
#[pyfunction]
#[pyo3(signature = (field, y, times, h=0.5))]
fn green_mass(field: PyRef<'_, CoefficientField>, y: Vec<f64>, times: Vec<f64>, h: f64) -> PyResult<Vec<f64>> {
    let grid = field.inner.torus(h)?;
    let snaps = green_evolve(field.inner.coeffs(), &grid, point(&y)?, &times, Scheme::Explicit).map_err(to_py)?;
    Ok(snaps.iter().map(kernel_mass).collect())
}

/// Least-squares decay exponent of `value ∝ scale^{−exponent}`; returns
/// `(exponent, prefactor, r_squared)`.
#[pyfunction]
#[pyo3(signature = (rows, window="all"))]
fn fit_rate(rows: Vec<(f64, f64)>, window: &str) -> PyResult<(f64, f64, f64)> {
    let window = match window {
        "all" => homolab::FitWindow::All,
        "tail-half" => homolab::FitWindow::TailHalf,
        other => return Err(PyValueError::new_err(format!("unknown window {other:?}"))),
    };
    let t = homolab::fit_rate(&rows, window).map_err(to_py)?;
    Ok((t.exponent, t.prefactor, t.r_squared))
}

/// Runs an experiment from its JSON configuration and returns the manifest as JSON.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let manifest = py
        .detach(|| homolab::harness::run_experiment(&cfg))
        .map_err(to_py)?;
    homolab::harness::io::to_json_string(&manifest).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "homolab")]
fn homolab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<CoefficientField>()?;
    m.add_class::<InvariantMeasure>()?;
    m.add_function(wrap_pyfunction!(invariant_measure, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_abar, m)?)?;
    m.add_function(wrap_pyfunction!(green_mass, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
