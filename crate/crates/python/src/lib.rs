//! Python bindings: grids, drivers, the Green series, diagnostics and the Poisson solver.

use pyo3::exceptions::{PyMemoryError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sheetlab::diagnostics::{fdd_test, moment_bound_probe, variance_convergence_report};
use sheetlab::green::{green_eval, green_l2_norm, green_mc_estimate, k_apply, lambda_sup};
use sheetlab::stats::ks_two_sample;
use sheetlab::{
    BoxIndicator, DiagConfig, Error, GreenSeries, GridField, GridSpec, LatticePoint, NoiseFamily,
    PoissonProblem, RngStream, SheetSample, SolveConfig, WosConfig,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::BudgetExceeded { .. } => PyMemoryError::new_err(e.to_string()),
        Error::NotConverged { .. } | Error::Stalled { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn family(name: &str) -> PyResult<NoiseFamily> {
    name.parse().map_err(py_err)
}

/// Uniform grid on a box `[0, T]`.
#[pyclass(name = "GridSpec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGridSpec {
    inner: GridSpec,
}

#[pymethods]
impl PyGridSpec {
    #[new]
    fn new(lengths: Vec<f64>, cells: Vec<usize>) -> PyResult<Self> {
        Ok(PyGridSpec {
            inner: GridSpec::new(lengths, cells).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn unit(d: usize, n: usize) -> PyResult<Self> {
        Ok(PyGridSpec {
            inner: GridSpec::unit(d, n).map_err(py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn lengths(&self) -> Vec<f64> {
        self.inner.lengths().to_vec()
    }

    #[getter]
    fn cells(&self) -> Vec<usize> {
        self.inner.cells().to_vec()
    }

    /// Node coordinates in row-major order.
    fn nodes(&self) -> Vec<Vec<f64>> {
        self.inner.nodes().map(|p| p.0).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "GridSpec(lengths={:?}, cells={:?})",
            self.inner.lengths(),
            self.inner.cells()
        )
    }
}

/// Truncated eigenfunction series of the Dirichlet Green function on the unit cube.
#[pyclass(name = "GreenSeries", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGreenSeries {
    inner: GreenSeries,
}

#[pymethods]
impl PyGreenSeries {
    #[new]
    #[pyo3(signature = (d, kmax=None))]
    fn new(d: usize, kmax: Option<usize>) -> PyResult<Self> {
        let inner = match kmax {
            Some(k) => GreenSeries::new(d, k),
            None => GreenSeries::default_for(d),
        }
        .map_err(py_err)?;
        Ok(PyGreenSeries { inner })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn kmax(&self) -> usize {
        self.inner.kmax
    }

    fn eval(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        green_eval(&self.inner, &x, &y).map_err(py_err)
    }

    fn l2_norm(&self, x: Vec<f64>) -> PyResult<f64> {
        green_l2_norm(&self.inner, &x).map_err(py_err)
    }

    fn tail_estimate(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        self.inner.tail_estimate(&x, &y).map_err(py_err)
    }

    /// Grid maximum of `‖K(x,·)‖₂` over the nodes of a unit grid with `cells` per axis.
    fn lambda_sup(&self, cells: usize) -> PyResult<f64> {
        let grid = GridSpec::unit(self.inner.d, cells).map_err(py_err)?;
        Ok(lambda_sup(&self.inner, &grid).map_err(py_err)?.value)
    }

    /// Spectral solve `∫ K φ` for node values `phi` on the unit grid with `cells` per axis.
    fn apply(&self, phi: Vec<f64>, cells: usize) -> PyResult<Vec<f64>> {
        let grid = GridSpec::unit(self.inner.d, cells).map_err(py_err)?;
        let field = GridField::new(grid, phi).map_err(py_err)?;
        Ok(k_apply(&self.inner, &field).map_err(py_err)?.values)
    }

    fn __repr__(&self) -> String {
        format!("GreenSeries(d={}, kmax={})", self.inner.d, self.inner.kmax)
    }
}

/// Node values of one Brownian sheet sample on `grid`.
#[pyfunction]
#[pyo3(signature = (grid, seed, stream=0))]
fn sheet_sample(grid: &PyGridSpec, seed: u64, stream: u64) -> Vec<f64> {
    SheetSample::sample(&grid.inner, &mut RngStream::new(seed, stream))
        .node_values()
        .values
}

/// Primitive `ζ_n` of one driver sample (`donsker[:law]`, `kac-stroock`, `sheet`) at the grid nodes.
#[pyfunction]
#[pyo3(signature = (family_name, n, grid, seed, stream=0))]
fn driver_primitive(
    family_name: &str,
    n: usize,
    grid: &PyGridSpec,
    seed: u64,
    stream: u64,
) -> PyResult<Vec<f64>> {
    let fam = family(family_name)?;
    let driver = fam
        .sample(grid.inner.lengths(), n, &mut RngStream::new(seed, stream))
        .map_err(py_err)?;
    let mu = driver.measure();
    Ok(grid.inner.nodes().map(|x| mu.primitive(&x)).collect())
}

/// Walk-on-spheres estimate of `K(x, y)`; returns `(value, std_error)`.
#[pyfunction]
#[pyo3(signature = (x, y, walks=100_000, seed=0))]
fn green_mc(x: Vec<f64>, y: Vec<f64>, walks: usize, seed: u64) -> PyResult<(f64, f64)> {
    let cfg = WosConfig {
        walks,
        ..WosConfig::default()
    };
    let est = green_mc_estimate(&x, &y, &cfg, &RngStream::new(seed, 0)).map_err(py_err)?;
    Ok((est.value, est.std_error))
}

/// Two-sample Kolmogorov-Smirnov test; returns `(statistic, p_value)`.
#[pyfunction]
fn ks_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = ks_two_sample(&a, &b).map_err(py_err)?;
    Ok((r.statistic, r.p_value))
}

/// Convergence diagnostic for the box indicator integrand; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (experiment, family_name, grid, n_list, replicates=1000, seed=0, probes=None))]
fn convergence_report(
    experiment: &str,
    family_name: &str,
    grid: &PyGridSpec,
    n_list: Vec<usize>,
    replicates: usize,
    seed: u64,
    probes: Option<Vec<Vec<f64>>>,
) -> PyResult<String> {
    let fam = family(family_name)?;
    let mut cfg = DiagConfig::new(grid.inner.clone(), n_list);
    cfg.replicates = replicates;
    if let Some(p) = probes {
        if p.is_empty() {
            return Err(PyValueError::new_err("probes must not be empty"));
        }
        cfg.probes = p.into_iter().map(LatticePoint::new).collect();
    }
    let rng = RngStream::new(seed, 0);
    let report = match experiment {
        "fdd" => fdd_test(&BoxIndicator, fam, &cfg, &rng),
        "variance" => variance_convergence_report(&BoxIndicator, fam, &cfg.probes[0], &cfg, &rng),
        "moment" => moment_bound_probe(&BoxIndicator, fam, &cfg, &rng),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown experiment '{other}'"
            )))
        }
    }
    .map_err(py_err)?;
    report.to_json().map_err(py_err)
}

/// Mild solution of the stochastic Poisson equation on the unit square or cube.
#[pyclass(name = "SolveResult", frozen, get_all)]
struct PySolveResult {
    u: Vec<f64>,
    iterations: usize,
    residual: f64,
    converged: bool,
    update_history: Vec<f64>,
}

#[pyfunction]
#[pyo3(signature = (
    nonlinearity, g, d=2, cells=32, family_name="sheet", n=32, seed=0,
    method="contraction", tolerance=1e-8, kmax=None
))]
#[allow(clippy::too_many_arguments)]
fn solve_poisson(
    nonlinearity: &str,
    g: f64,
    d: usize,
    cells: usize,
    family_name: &str,
    n: usize,
    seed: u64,
    method: &str,
    tolerance: f64,
    kmax: Option<usize>,
) -> PyResult<PySolveResult> {
    let f = nonlinearity.parse().map_err(py_err)?;
    let series = PyGreenSeries::new(d, kmax)?.inner;
    let grid = GridSpec::unit(d, cells).map_err(py_err)?;
    let problem = PoissonProblem::new(series, &GridField::from_fn(&grid, |_| g)).map_err(py_err)?;
    let eta = problem
        .noise_potential(family(family_name)?, n, &mut RngStream::new(seed, 0))
        .map_err(py_err)?;
    let cfg = SolveConfig {
        tolerance,
        ..SolveConfig::default()
    };
    let res = match method {
        "contraction" => problem.solve_contraction(&f, &eta, &cfg),
        "relaxed" => problem.solve_relaxed(&f, &eta, &cfg),
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    }
    .map_err(py_err)?;
    Ok(PySolveResult {
        u: res.u.values,
        iterations: res.iterations,
        residual: res.residual,
        converged: res.converged,
        update_history: res.update_history,
    })
}

#[pymodule]
fn sheetlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridSpec>()?;
    m.add_class::<PyGreenSeries>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(sheet_sample, m)?)?;
    m.add_function(wrap_pyfunction!(driver_primitive, m)?)?;
    m.add_function(wrap_pyfunction!(green_mc, m)?)?;
    m.add_function(wrap_pyfunction!(ks_test, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_report, m)?)?;
    m.add_function(wrap_pyfunction!(solve_poisson, m)?)?;
    Ok(())
}
