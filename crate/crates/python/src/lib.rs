//! Python module `polyvi`: thin wrappers over the Rust solver. Every result
//! object exposes a few typed getters and `to_json()` for the full record.

use polyvi::analysis::{self, CopositivityBudget};
use polyvi::stability::{self, GenericityMode};
use polyvi::SolveConfig;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(err)
}

/// Parses an optional JSON object of `SolveConfig` overrides; `seed` wins
/// over a seed given in the JSON.
fn config(json: Option<&str>, seed: Option<u64>) -> PyResult<SolveConfig> {
    let mut cfg: SolveConfig = match json {
        Some(s) => serde_json::from_str(s).map_err(err)?,
        None => SolveConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

#[pyclass(name = "PolynomialMap", module = "polyvi", frozen)]
struct PyPolynomialMap(polyvi::PolynomialMap);

#[pymethods]
impl PyPolynomialMap {
    /// `coeffs[l][j]` multiplies monomial `j` (graded, decreasing lex) in component `l`.
    #[new]
    fn new(n: usize, d: usize, coeffs: Vec<Vec<f64>>) -> PyResult<Self> {
        polyvi::PolynomialMap::from_rows(n, d, &coeffs).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        serde_json::from_str(s).map(Self).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.0.degree()
    }

    #[getter]
    fn coeffs(&self) -> Vec<Vec<f64>> {
        self.0.rows()
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.0.eval(&x).map_err(err)?.iter().copied().collect())
    }

    fn jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let j = self.0.jacobian(&x).map_err(err)?;
        Ok(j.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn __repr__(&self) -> String {
        format!("PolynomialMap(n={}, degree={})", self.0.n(), self.0.degree())
    }
}

#[pyclass(name = "PolyhedralSet", module = "polyvi", frozen)]
struct PyPolyhedralSet(polyvi::PolyhedralSet);

#[pymethods]
impl PyPolyhedralSet {
    /// `{x in R^n : C x <= b, E x = d}`.
    #[new]
    #[pyo3(signature = (n, C=None, b=None, E=None, d=None))]
    #[allow(non_snake_case)]
    fn new(
        n: usize,
        C: Option<Vec<Vec<f64>>>,
        b: Option<Vec<f64>>,
        E: Option<Vec<Vec<f64>>>,
        d: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let v = serde_json::json!({
            "C": C.unwrap_or_default(),
            "b": b.unwrap_or_default(),
            "E": E.unwrap_or_default(),
            "d": d.unwrap_or_default(),
        });
        polyvi::PolyhedralSet::from_json_value(v, n).map(Self).map_err(err)
    }

    #[staticmethod]
    fn nonnegative_orthant(n: usize) -> Self {
        Self(polyvi::fixtures::nonnegative_orthant(n))
    }

    #[staticmethod]
    fn from_json(s: &str, n: usize) -> PyResult<Self> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(err)?;
        polyvi::PolyhedralSet::from_json_value(v, n).map(Self).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn is_bounded(&self) -> bool {
        self.0.is_bounded()
    }

    #[pyo3(signature = (x, tol=1e-9))]
    fn contains(&self, x: Vec<f64>, tol: f64) -> bool {
        self.0.contains(&x, tol)
    }

    fn generators(&self) -> PyResult<String> {
        to_json(self.0.generators())
    }

    fn __repr__(&self) -> String {
        format!("PolyhedralSet(dim={})", self.0.dim())
    }
}

#[pyclass(name = "SolutionSet", module = "polyvi", frozen)]
struct PySolutionSet(polyvi::SolutionSet);

#[pymethods]
impl PySolutionSet {
    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.0.points.iter().map(|p| p.x.clone()).collect()
    }

    #[getter]
    fn faces(&self) -> Vec<Vec<usize>> {
        self.0.points.iter().map(|p| p.face.clone()).collect()
    }

    /// Sample points of each nonisolated component.
    #[getter]
    fn components(&self) -> Vec<Vec<Vec<f64>>> {
        self.0.components.iter().map(|c| c.samples.clone()).collect()
    }

    #[getter]
    fn nonisolated(&self) -> bool {
        self.0.nonisolated()
    }

    #[getter]
    fn status(&self) -> String {
        to_json(&self.0.status).unwrap_or_default().trim_matches('"').to_string()
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }

    fn __len__(&self) -> usize {
        self.0.points.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "SolutionSet(points={}, components={}, status={})",
            self.0.points.len(),
            self.0.components.len(),
            self.status()
        )
    }
}

/// Verdict objects share one shape: a status label, the full record as JSON,
/// and a few class-specific getters.
macro_rules! verdict_class {
    ($py:ident, $name:literal, $inner:ty, $label:expr $(, { $($extra:item)* })?) => {
        #[pyclass(name = $name, module = "polyvi", frozen)]
        struct $py($inner);

        #[pymethods]
        impl $py {
            #[getter]
            fn status(&self) -> String {
                let f: fn(&$inner) -> String = $label;
                f(&self.0)
            }

            fn to_json(&self) -> PyResult<String> {
                to_json(&self.0)
            }

            fn __repr__(&self) -> String {
                format!("{}({})", $name, self.status())
            }

            $($($extra)*)?
        }
    };
}

verdict_class!(PyR0Verdict, "R0Verdict", analysis::R0Verdict, |v| v.status.label().into(), {
    /// Unit witness `x` with `x in K^inf`, `P^inf(x) in (K^inf)*`, `<P^inf(x), x> = 0`.
    #[getter]
    fn witness(&self) -> Option<Vec<f64>> {
        match &self.0.status {
            analysis::R0Status::NotR0 { witness } => Some(witness.clone()),
            _ => None,
        }
    }
});
verdict_class!(PyCopositivityVerdict, "CopositivityVerdict", analysis::CopositivityVerdict, |v| v
    .status
    .label()
    .into());
verdict_class!(PyExistenceCertificate, "ExistenceCertificate", analysis::ExistenceCertificate, |v| {
    to_json(&v.conclusion).unwrap_or_default().trim_matches('"').to_string()
});
verdict_class!(
    PyHoelderFit,
    "HoelderFit",
    stability::HoelderFit,
    |v| match v.c {
        Some(c) => format!("c={c:.4}"),
        None => "degenerate".into(),
    },
    {
        #[getter]
        fn c(&self) -> Option<f64> {
            self.0.c
        }

        #[getter]
        fn l(&self) -> Option<f64> {
            self.0.l
        }

        #[getter]
        fn fit_residual(&self) -> Option<f64> {
            self.0.fit_residual
        }
    }
);
verdict_class!(
    PySweepResult,
    "SweepResult",
    stability::SweepResult,
    |v| v.cells.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join(","),
    {
        #[getter]
        fn cardinalities(&self) -> Vec<usize> {
            self.0.cells.iter().map(|c| c.cardinality).collect()
        }

        #[getter]
        fn labels(&self) -> Vec<String> {
            self.0.cells.iter().map(|c| c.label.clone()).collect()
        }
    }
);
verdict_class!(
    PyGenericityStats,
    "GenericityStats",
    stability::GenericityStats,
    |v| format!("{}/{}", v.count_positive, v.trials),
    {
        #[getter]
        fn count_positive(&self) -> usize {
            self.0.count_positive
        }
    }
);

fn problem(k: &PyPolyhedralSet, map: &PyPolynomialMap, p: Option<Vec<f64>>) -> PyResult<polyvi::VIProblem> {
    let p = p.unwrap_or_else(|| vec![0.0; map.0.n()]);
    polyvi::VIProblem::new(k.0.clone(), map.0.clone(), p).map_err(err)
}

/// Solution set of `VI(K, P + p)`. `config` is a JSON object of overrides.
#[pyfunction]
#[pyo3(signature = (k, map, p=None, seed=None, config=None))]
fn solve(
    py: Python<'_>,
    k: &PyPolyhedralSet,
    map: &PyPolynomialMap,
    p: Option<Vec<f64>>,
    seed: Option<u64>,
    config: Option<&str>,
) -> PyResult<PySolutionSet> {
    let prob = problem(k, map, p)?;
    let cfg = self::config(config, seed)?;
    py.detach(|| polyvi::solve(&prob, &cfg)).map(PySolutionSet).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (k, map, x, tol=1e-8, p=None))]
fn verify_solution(k: &PyPolyhedralSet, map: &PyPolynomialMap, x: Vec<f64>, tol: f64, p: Option<Vec<f64>>) -> PyResult<bool> {
    Ok(polyvi::verify_solution(&problem(k, map, p)?, &x, tol))
}

#[pyfunction]
#[pyo3(signature = (k, map, seed=None, config=None))]
fn is_r0_pair(
    py: Python<'_>,
    k: &PyPolyhedralSet,
    map: &PyPolynomialMap,
    seed: Option<u64>,
    config: Option<&str>,
) -> PyResult<PyR0Verdict> {
    let cfg = self::config(config, seed)?;
    py.detach(|| analysis::is_r0_pair(&k.0, &map.0, &cfg)).map(PyR0Verdict).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (k, map, seed=0, starts_per_face=16, iters=200))]
fn copositivity_check(
    py: Python<'_>,
    k: &PyPolyhedralSet,
    map: &PyPolynomialMap,
    seed: u64,
    starts_per_face: usize,
    iters: usize,
) -> PyResult<PyCopositivityVerdict> {
    let budget = CopositivityBudget {
        starts_per_face,
        iters,
        seed,
    };
    py.detach(|| analysis::copositivity_check(&map.0, &k.0, &budget))
        .map(PyCopositivityVerdict)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (k, map, p=None, seed=None, config=None))]
fn existence_certificate(
    py: Python<'_>,
    k: &PyPolyhedralSet,
    map: &PyPolynomialMap,
    p: Option<Vec<f64>>,
    seed: Option<u64>,
    config: Option<&str>,
) -> PyResult<PyExistenceCertificate> {
    let prob = problem(k, map, p)?;
    let cfg = self::config(config, seed)?;
    let budget = CopositivityBudget {
        seed: cfg.seed,
        ..CopositivityBudget::default()
    };
    py.detach(|| analysis::existence_certificate(&prob, &cfg, &budget))
        .map(PyExistenceCertificate)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (k, map, grid, seed=None, config=None))]
fn solution_map_sweep(
    py: Python<'_>,
    k: &PyPolyhedralSet,
    map: &PyPolynomialMap,
    grid: Vec<Vec<f64>>,
    seed: Option<u64>,
    config: Option<&str>,
) -> PyResult<PySweepResult> {
    let cfg = self::config(config, seed)?;
    Ok(PySweepResult(py.detach(|| stability::solution_map_sweep(&k.0, &map.0, &grid, &cfg))))
}

#[pyfunction]
#[pyo3(signature = (k, map, anchor, radii=vec![1e-1, 1e-2, 1e-3, 1e-4], samples_per_radius=16, seed=None, config=None))]
#[allow(clippy::too_many_arguments)]
fn hoelder_fit(
    py: Python<'_>,
    k: &PyPolyhedralSet,
    map: &PyPolynomialMap,
    anchor: Vec<f64>,
    radii: Vec<f64>,
    samples_per_radius: usize,
    seed: Option<u64>,
    config: Option<&str>,
) -> PyResult<PyHoelderFit> {
    let prob = problem(k, map, Some(anchor))?;
    let cfg = self::config(config, seed)?;
    py.detach(|| stability::hoelder_fit(&prob, &radii, samples_per_radius, &cfg))
        .map(PyHoelderFit)
        .map_err(err)
}

/// `mode` is `"finite_valued"` or `"r0"`.
#[pyfunction]
#[pyo3(signature = (n, d, k, trials, seed=0, mode="finite_valued"))]
fn genericity_experiment(
    py: Python<'_>,
    n: usize,
    d: usize,
    k: &PyPolyhedralSet,
    trials: usize,
    seed: u64,
    mode: &str,
) -> PyResult<PyGenericityStats> {
    let mode = match mode {
        "finite_valued" => GenericityMode::FiniteValued,
        "r0" => GenericityMode::R0,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let cfg = SolveConfig {
        seed,
        ..SolveConfig::default()
    };
    py.detach(|| stability::genericity_experiment(n, d, &k.0, trials, seed, mode, &cfg))
        .map(PyGenericityStats)
        .map_err(err)
}

#[pymodule]
#[pyo3(name = "polyvi")]
fn polyvi_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolynomialMap>()?;
    m.add_class::<PyPolyhedralSet>()?;
    m.add_class::<PySolutionSet>()?;
    m.add_class::<PyR0Verdict>()?;
    m.add_class::<PyCopositivityVerdict>()?;
    m.add_class::<PyExistenceCertificate>()?;
    m.add_class::<PyHoelderFit>()?;
    m.add_class::<PySweepResult>()?;
    m.add_class::<PyGenericityStats>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(verify_solution, m)?)?;
    m.add_function(wrap_pyfunction!(is_r0_pair, m)?)?;
    m.add_function(wrap_pyfunction!(copositivity_check, m)?)?;
    m.add_function(wrap_pyfunction!(existence_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(solution_map_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(hoelder_fit, m)?)?;
    m.add_function(wrap_pyfunction!(genericity_experiment, m)?)?;
    Ok(())
}
