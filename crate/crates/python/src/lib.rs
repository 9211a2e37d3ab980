//! Python bindings for the `partdec` crate.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use partdec::cli::{self, CliError};
use partdec::config::{self, ConfigError, Overrides};
use partdec::dsp::DspDecomposition;
use partdec::entropy::{h_max_opt, h_min_opt, EntropyResult};
use partdec::experiments::{self, ConditionerPolicy, Mode};
use partdec::linalg::{CMat, Layout, Operator, TOL};
use partdec::sampling::RngStream;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Io { .. } | CliError::Config(ConfigError::Io { .. }) => PyIOError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

/// Direct-sum-product decomposition `⊕_j C^{l_j} ⊗ C^{r_j}`.
#[pyclass(name = "Decomposition", module = "partdec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDecomposition(DspDecomposition);

#[pymethods]
impl PyDecomposition {
    /// Accepts a literal such as `"J=[ (1,2), (2,1) ]"` or a list of `(l, r)` pairs.
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let d = if let Ok(text) = spec.extract::<String>() {
            text.parse().map_err(value_err)?
        } else {
            DspDecomposition::new(spec.extract::<Vec<(usize, usize)>>()?).map_err(value_err)?
        };
        Ok(Self(d))
    }

    #[staticmethod]
    fn uniform(blocks: usize, r: usize) -> PyResult<Self> {
        DspDecomposition::uniform(blocks, r).map(Self).map_err(value_err)
    }

    #[getter]
    fn blocks(&self) -> Vec<(usize, usize)> {
        self.0.blocks().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn star_dim(&self) -> usize {
        self.0.star_dim()
    }

    #[getter]
    fn num_blocks(&self) -> usize {
        self.0.num_blocks()
    }

    fn is_randomized_case(&self) -> bool {
        self.0.is_randomized_case()
    }

    fn literal(&self) -> String {
        self.0.literal()
    }

    fn __repr__(&self) -> String {
        format!("Decomposition('{}')", self.0.literal())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

#[pyclass(name = "ExperimentReport", module = "partdec", frozen)]
struct PyReport(experiments::ExperimentReport);

#[pymethods]
impl PyReport {
    #[getter]
    fn mode(&self) -> &'static str {
        self.0.mode.as_str()
    }

    #[getter]
    fn decomposition(&self) -> PyDecomposition {
        PyDecomposition(self.0.decomposition.clone())
    }

    #[getter(J)]
    fn blocks(&self) -> usize {
        self.0.j
    }

    #[getter]
    fn r(&self) -> usize {
        self.0.r
    }

    #[getter(N)]
    fn samples(&self) -> usize {
        self.0.samples
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn lhs_mean(&self) -> f64 {
        self.0.lhs_mean
    }

    #[getter]
    fn lhs_stderr(&self) -> f64 {
        self.0.lhs_stderr
    }

    #[getter]
    fn rhs_terms(&self) -> BTreeMap<String, f64> {
        self.0.rhs_terms.clone()
    }

    #[getter]
    fn rhs_total(&self) -> f64 {
        self.0.rhs_total
    }

    #[getter]
    fn margin(&self) -> f64 {
        self.0.margin
    }

    #[getter]
    fn retried(&self) -> bool {
        self.0.retried
    }

    #[getter]
    fn max_sdp_gap(&self) -> f64 {
        self.0.max_sdp_gap
    }

    fn passed(&self) -> bool {
        self.0.passed()
    }

    /// The report as the one-line JSON record the CLI writes.
    fn to_json(&self) -> String {
        cli::report_line(&self.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentReport(mode='{}', J={}, r={}, lhs_mean={:e}, rhs_total={:e}, margin={:e})",
            self.0.mode, self.0.j, self.0.r, self.0.lhs_mean, self.0.rhs_total, self.0.margin
        )
    }
}

/// Run one experiment described by TOML config text. `seed` and `samples`
/// override the file.
#[pyfunction]
#[pyo3(signature = (config, seed = None, samples = None))]
fn run_experiment(config: &str, seed: Option<u64>, samples: Option<usize>) -> PyResult<PyReport> {
    let mut cfg = config::parse_config_str(config, "<python>").map_err(value_err)?;
    Overrides { seed, samples }.apply(&mut cfg);
    config::validate(&cfg, "<python>").map_err(value_err)?;
    experiments::run_experiment(&cfg).map(PyReport).map_err(value_err)
}

/// Run `count` generated instances of `mode`, as a `[[random]]` suite batch does.
#[pyfunction]
#[pyo3(signature = (mode, count, seed = 0, samples = 2000, blocks = None, r = None))]
fn run_random(
    mode: &str,
    count: usize,
    seed: u64,
    samples: usize,
    blocks: Option<usize>,
    r: Option<usize>,
) -> PyResult<Vec<PyReport>> {
    let mode: Mode = mode.parse().map_err(value_err)?;
    (0..count)
        .map(|i| {
            let mut rng = RngStream::new(seed, u64::MAX - i as u64).rng();
            let inst = match mode {
                Mode::NonrandomizedPd => experiments::random_nonrandomized_instance(&mut rng),
                _ => {
                    let (jn, r) = cli::batch_shape(blocks, r, i);
                    experiments::random_randomized_instance(jn, r, &mut rng)
                }
            }
            .map_err(value_err)?;
            experiments::run_instance(
                mode,
                &inst,
                samples,
                seed.wrapping_add(i as u64),
                ConditionerPolicy::SdpOptimal,
                TOL.sdp_gap,
            )
            .map(PyReport)
            .map_err(value_err)
        })
        .collect()
}

/// Monte Carlo check of the twisted-twirl closed forms.
/// Returns `(max_distance, tolerance, passed)`.
#[pyfunction]
fn verify_twirl(decomposition: &PyDecomposition, samples: usize, seed: u64) -> PyResult<(f64, f64, bool)> {
    let rep = experiments::verify_twirl(&decomposition.0, samples, seed).map_err(value_err)?;
    Ok((rep.max_distance(), rep.tolerance, rep.passed()))
}

fn operator(matrix: Vec<Vec<Complex64>>, factors: Vec<(String, usize)>) -> PyResult<Operator> {
    let n = matrix.len();
    if matrix.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let m = CMat::from_fn(n, n, |i, j| matrix[i][j]);
    let layout = Layout::new(factors).map_err(value_err)?;
    Operator::new(m, layout).map_err(value_err)
}

fn interval(r: EntropyResult) -> (f64, f64, f64) {
    (r.value, r.lower, r.upper)
}

/// Optimized conditional min-entropy of `rho` given the `conditioning`
/// factors. Returns `(value, lower, upper)`.
#[pyfunction]
#[pyo3(signature = (matrix, factors, conditioning, tol = 1e-7))]
fn h_min(
    matrix: Vec<Vec<Complex64>>,
    factors: Vec<(String, usize)>,
    conditioning: Vec<String>,
    tol: f64,
) -> PyResult<(f64, f64, f64)> {
    let rho = operator(matrix, factors)?;
    let cond: Vec<&str> = conditioning.iter().map(String::as_str).collect();
    h_min_opt(&rho, &cond, tol).map(interval).map_err(value_err)
}

/// Optimized conditional max-entropy. Returns `(value, lower, upper)`.
#[pyfunction]
#[pyo3(signature = (matrix, factors, conditioning, tol = 1e-7))]
fn h_max(
    matrix: Vec<Vec<Complex64>>,
    factors: Vec<(String, usize)>,
    conditioning: Vec<String>,
    tol: f64,
) -> PyResult<(f64, f64, f64)> {
    let rho = operator(matrix, factors)?;
    let cond: Vec<&str> = conditioning.iter().map(String::as_str).collect();
    h_max_opt(&rho, &cond, tol).map(interval).map_err(value_err)
}

/// Same as `partdec verify`: writes reports and a manifest under `out`.
/// Returns `(exit_code, manifest_path)`.
#[pyfunction]
#[pyo3(signature = (config_path, out, seed = None, samples = None))]
fn verify(config_path: &str, out: &str, seed: Option<u64>, samples: Option<usize>) -> PyResult<(i32, String)> {
    let run = cli::verify(Path::new(config_path), Overrides { seed, samples }, Path::new(out)).map_err(cli_err)?;
    Ok((run.exit_code(), run.manifest_path.display().to_string()))
}

/// Same as `partdec sweep`. Returns `(exit_code, manifest_path)`.
#[pyfunction]
#[pyo3(signature = (suite_path, out, seed = None, samples = None))]
fn sweep(suite_path: &str, out: &str, seed: Option<u64>, samples: Option<usize>) -> PyResult<(i32, String)> {
    let run = cli::sweep(Path::new(suite_path), Overrides { seed, samples }, Path::new(out)).map_err(cli_err)?;
    Ok((run.exit_code(), run.manifest_path.display().to_string()))
}

/// CSV text for every report referenced by a manifest.
#[pyfunction]
fn plot_data(manifest_path: &str) -> PyResult<String> {
    cli::plot_data_csv(Path::new(manifest_path)).map_err(cli_err)
}

/// SHA-256 of the canonical form of a TOML config.
#[pyfunction]
fn config_hash(config: &str) -> PyResult<String> {
    let cfg = config::parse_config_str(config, "<python>").map_err(value_err)?;
    Ok(config::config_hash(&cfg))
}

#[pymodule]
#[pyo3(name = "partdec")]
fn partdec_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDecomposition>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_random, m)?)?;
    m.add_function(wrap_pyfunction!(verify_twirl, m)?)?;
    m.add_function(wrap_pyfunction!(h_min, m)?)?;
    m.add_function(wrap_pyfunction!(h_max, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(plot_data, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
