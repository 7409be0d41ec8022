//! Python bindings for `cjsrcert`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use cjsrcert::bounds::ModelKnowledge;
use cjsrcert::{
    baseline, bounds, enumerate_products, sampling, BoundContext, BoundVariant, Error, ObservationSet, SamplingConfig,
    ScenarioConfig, ScenarioSolution, SystemSpec,
};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn config(c_upper: f64, gamma_tol: f64, feas_tol: f64) -> ScenarioConfig {
    ScenarioConfig { c_upper, gamma_tol, feas_tol, ..ScenarioConfig::default() }
}

/// A constrained switching system: modes plus the automaton of admissible
/// switching sequences.
#[pyclass(name = "System", frozen)]
struct PySystem {
    inner: SystemSpec,
}

#[pymethods]
impl PySystem {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        SystemSpec::from_json(text).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn modes(&self) -> usize {
        self.inner.matrices().len()
    }

    /// `(entropy, lambda_max, node_count, diagonalizable)` of the automaton.
    fn entropy(&self) -> PyResult<(f64, f64, usize, bool)> {
        let s = self.inner.automaton().entropy().map_err(err)?;
        Ok((s.entropy, s.perron_eigenvalue, s.node_count, s.diagonalizable))
    }

    fn count_words(&self, length: usize) -> PyResult<u128> {
        self.inner.automaton().count_words(length).map_err(err)
    }

    /// `(distinct product count, p_min)` at length `length`.
    fn products(&self, length: usize) -> PyResult<(usize, f64)> {
        let ps = enumerate_products(&self.inner, length).map_err(err)?;
        Ok((ps.distinct_count(), ps.p_min()))
    }

    #[pyo3(signature = (samples, length, seed = 0))]
    fn synthesize(&self, samples: usize, length: usize, seed: u64) -> PyResult<PyObservations> {
        let data = sampling::synthesize(&self.inner, &SamplingConfig { samples, length, seed }).map_err(err)?;
        Ok(PyObservations { inner: data.stripped() })
    }

    #[pyo3(signature = (length, c_upper = 1e6, gamma_tol = 1e-6, feas_tol = 1e-8))]
    fn gamma_model(&self, length: usize, c_upper: f64, gamma_tol: f64, feas_tol: f64) -> PyResult<f64> {
        baseline::gamma_model(&self.inner, length, &config(c_upper, gamma_tol, feas_tol))
            .map(|(g, _)| g)
            .map_err(err)
    }

    /// `(lower, witness word)` from cycles up to `max_cycle_len`.
    fn cjsr_lower(&self, max_cycle_len: usize) -> PyResult<(f64, Vec<usize>)> {
        baseline::cjsr_lower(&self.inner, max_cycle_len).map_err(err)
    }

    /// `(lower, upper)` bracket on the constrained joint spectral radius.
    #[pyo3(signature = (length, c_upper = 1e6, gamma_tol = 1e-6, feas_tol = 1e-8))]
    fn bracket(&self, length: usize, c_upper: f64, gamma_tol: f64, feas_tol: f64) -> PyResult<(f64, f64)> {
        let b = baseline::cjsr_bracket(&self.inner, length, &config(c_upper, gamma_tol, feas_tol)).map_err(err)?;
        Ok((b.lower, b.upper))
    }
}

/// Endpoint pairs `(x0, xl)` with unit `x0`.
#[pyclass(name = "Observations", frozen)]
struct PyObservations {
    inner: ObservationSet,
}

#[pymethods]
impl PyObservations {
    #[new]
    fn new(x0: Vec<Vec<f64>>, xl: Vec<Vec<f64>>) -> PyResult<Self> {
        if x0.len() != xl.len() {
            return Err(PyValueError::new_err("x0 and xl must have the same length"));
        }
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = x0.into_iter().zip(xl).collect();
        ObservationSet::from_raw(&pairs).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        sampling::ingest(std::path::Path::new(path)).map(|inner| Self { inner }).map_err(err)
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv_file(std::path::Path::new(path)).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.dim()
    }

    fn prefix(&self, k: usize) -> Self {
        Self { inner: self.inner.prefix(k) }
    }
}

/// Optimum of the sampled program.
#[pyclass(name = "Solution", frozen)]
struct PySolution {
    inner: ScenarioSolution,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn gamma_star(&self) -> f64 {
        self.inner.gamma_star
    }

    #[getter]
    fn p_star(&self) -> Vec<Vec<f64>> {
        let p = &self.inner.p_star;
        (0..p.dim()).map(|i| (0..p.dim()).map(|j| p.get(i, j)).collect()).collect()
    }
}

#[pyfunction]
#[pyo3(signature = (observations, length, c_upper = 1e6, gamma_tol = 1e-6, feas_tol = 1e-8))]
fn solve(observations: &PyObservations, length: usize, c_upper: f64, gamma_tol: f64, feas_tol: f64) -> PyResult<PySolution> {
    cjsrcert::solve(&observations.inner, length, &config(c_upper, gamma_tol, feas_tol))
        .map(|inner| PySolution { inner })
        .map_err(err)
}

#[pyfunction]
fn epsilon(beta: f64, samples: usize, d: usize) -> PyResult<f64> {
    bounds::epsilon(beta, samples, d).map_err(err)
}

/// Certificate as a JSON string. Exactly one variant context must be given
/// unless `system` supplies it.
#[pyfunction]
#[pyo3(signature = (solution, beta, samples, length, variant = "uniform", system = None, p_min = None,
                    products = None, entropy = None, eig = None, nodes = None))]
#[allow(clippy::too_many_arguments)]
fn certify(
    solution: &PySolution,
    beta: f64,
    samples: usize,
    length: usize,
    variant: &str,
    system: Option<&PySystem>,
    p_min: Option<f64>,
    products: Option<f64>,
    entropy: Option<f64>,
    eig: Option<f64>,
    nodes: Option<usize>,
) -> PyResult<String> {
    let variant: BoundVariant = variant.parse().map_err(err)?;
    let given = match variant {
        BoundVariant::Exact => p_min.map(|p_min| BoundContext::Exact { p_min }),
        BoundVariant::Uniform => products.map(|product_count| BoundContext::Uniform { product_count }),
        BoundVariant::Entropy => entropy.map(|entropy| BoundContext::Entropy { entropy }),
        BoundVariant::Eigen => eig.zip(nodes).map(|(lambda_max, nodes)| BoundContext::Eigen {
            nodes,
            lambda_max,
            diagonalizable: None,
        }),
    };
    let (context, product_set) = match (given, system) {
        (Some(c), _) => (c, None),
        (None, Some(s)) => BoundContext::from_model(variant, &s.inner, length).map_err(err)?,
        (None, None) => return Err(PyValueError::new_err(format!("the {variant} variant needs its context or a system"))),
    };
    let knowledge = product_set.as_ref().map_or(ModelKnowledge::None, ModelKnowledge::Products);
    let cert = bounds::certify(&solution.inner, &context, beta, samples, length, &ScenarioConfig::default(), knowledge)
        .map_err(err)?;
    serde_json::to_string(&cert).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pycjsr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyObservations>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    Ok(())
}
