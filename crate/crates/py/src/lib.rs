//! Python bindings for the observer toolkit.
//!
//! Exposes the plant model, gain synthesis, the single observer, the
//! subset bank, and windowed isolation as a `sentinel` extension module.
//! Matrices cross the boundary as row-major nested lists and vectors as
//! flat lists, so the module has no NumPy dependency; wrap the results in
//! `numpy.array` on the Python side when convenient.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sentinel_core::error::Error;
use sentinel_core::estimator::{build_bank as core_build_bank, BankRun, EstimatorBank};
use sentinel_core::harness::{resolve, tail_error as core_tail_error, Overrides, ResolvedScenario};
use sentinel_core::isolation::{isolate_run, IsolationReport, WindowTally};
use sentinel_core::model::{benchmark_plant, PlantModel, Trace as CoreTrace};
use sentinel_core::observer::{
    worst_envelope_violation as core_envelope_violation, Observer as CoreObserver,
};
use sentinel_core::synthesis::{
    design_at as core_design_at, synthesize as core_synthesize, ObserverDesign, SynthesisOptions,
};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn options(
    grid_step: Option<f64>,
    refine_step: Option<f64>,
    tol_feas: Option<f64>,
) -> SynthesisOptions {
    let mut opts = SynthesisOptions::default();
    if let Some(step) = grid_step {
        opts.coarse_step = step;
    }
    if let Some(step) = refine_step {
        opts.refine_step = step;
    }
    if let Some(tol) = tol_feas {
        opts.sdp.tol_feas = tol;
    }
    opts
}

/// Initial estimate: the given list, or the origin when omitted.
fn initial(n: usize, x_hat0: Option<Vec<f64>>) -> PyResult<DVector<f64>> {
    match x_hat0 {
        None => Ok(DVector::zeros(n)),
        Some(v) if v.len() == n => Ok(DVector::from_vec(v)),
        Some(v) => Err(PyValueError::new_err(format!(
            "initial estimate has {} entries, model has {} states",
            v.len(),
            n
        ))),
    }
}

/// Discrete-time plant with a componentwise monotone nonlinearity.
#[pyclass(module = "sentinel")]
struct Model {
    inner: PlantModel,
}

#[pymethods]
impl Model {
    /// The two-state benchmark plant at discretization step `delta`;
    /// `alpha` scales the nonlinear channel (0 gives a linear plant).
    #[staticmethod]
    fn benchmark(delta: f64, alpha: f64) -> Model {
        Model {
            inner: benchmark_plant(delta, alpha),
        }
    }

    /// State dimension.
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Sensor count.
    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    /// Nonlinearity dimension.
    #[getter]
    fn r(&self) -> usize {
        self.inner.r()
    }

    /// One plant step from state `x` under input `u`.
    fn step(&self, x: Vec<f64>, u: Vec<f64>) -> PyResult<Vec<f64>> {
        let next = self
            .inner
            .step(&DVector::from_vec(x), &DVector::from_vec(u))
            .map_err(err)?;
        Ok(to_vec(&next))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n={}, p={}, r={})",
            self.inner.n(),
            self.inner.p(),
            self.inner.r()
        )
    }
}

/// One simulated run: states, measurements, noise, attack, inputs.
#[pyclass(module = "sentinel")]
struct Trace {
    inner: CoreTrace,
}

#[pymethods]
impl Trace {
    /// States x(0..=K) as rows.
    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner.x.iter().map(to_vec).collect()
    }

    /// Measured outputs y(0..=K) as rows.
    #[getter]
    fn y(&self) -> Vec<Vec<f64>> {
        self.inner.y.iter().map(to_vec).collect()
    }

    /// Measurement noise m(0..=K) as rows.
    #[getter]
    fn m(&self) -> Vec<Vec<f64>> {
        self.inner.m.iter().map(to_vec).collect()
    }

    /// Attack signal a(0..=K) as rows.
    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        self.inner.a.iter().map(to_vec).collect()
    }

    /// Inputs u(0..=K) as rows.
    #[getter]
    fn u(&self) -> Vec<Vec<f64>> {
        self.inner.u.iter().map(to_vec).collect()
    }

    /// Final step index K.
    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn __len__(&self) -> usize {
        self.inner.x.len()
    }
}

/// A resolved scenario: the plant plus every run parameter pinned.
#[pyclass(module = "sentinel")]
struct Scenario {
    inner: ResolvedScenario,
}

#[pymethods]
impl Scenario {
    /// Parses scenario JSON text and fills mode defaults.
    #[new]
    fn new(text: &str) -> PyResult<Scenario> {
        let parsed = sentinel_core::harness::Scenario::from_json(text).map_err(err)?;
        let inner = resolve(&parsed, &Overrides::default()).map_err(err)?;
        Ok(Scenario { inner })
    }

    /// Reads and resolves a scenario file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Scenario> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        Scenario::new(&text)
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }

    #[getter]
    fn attacked(&self) -> Vec<usize> {
        self.inner.attacked.clone()
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    /// Attacked-sensor budget the bank defends against.
    #[getter]
    fn q(&self) -> usize {
        self.inner.q
    }

    /// The scenario's plant.
    fn model(&self) -> Model {
        Model {
            inner: self.inner.model.clone(),
        }
    }

    /// Simulates the scenario under one seed.
    fn trace(&self, seed: u64) -> PyResult<Trace> {
        Ok(Trace {
            inner: self.inner.trace(seed).map_err(err)?,
        })
    }
}

/// Synthesized gains for one sensor subset, with the stability certificate.
#[pyclass(module = "sentinel")]
struct Design {
    inner: ObserverDesign,
}

#[pymethods]
impl Design {
    /// 1-based sensor indices the observer listens to.
    #[getter]
    fn subset(&self) -> Vec<usize> {
        self.inner.subset.clone()
    }

    /// Decay parameter the gains were synthesized at.
    #[getter]
    fn c3(&self) -> f64 {
        self.inner.c3
    }

    /// Output-injection gain L as rows.
    #[getter]
    fn l(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.l)
    }

    /// Innovation gain K as rows.
    #[getter]
    fn k(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.k)
    }

    /// Lyapunov matrix P as rows.
    #[getter]
    fn p(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.p)
    }

    /// Transient amplification in the error envelope.
    #[getter]
    fn amplification(&self) -> f64 {
        self.inner.certificate.c
    }

    /// Per-step decay base of the error envelope.
    #[getter]
    fn decay(&self) -> f64 {
        self.inner.certificate.lambda
    }

    /// Gain from the disturbance running max to the error norm.
    #[getter]
    fn gain(&self) -> f64 {
        self.inner.certificate.gamma
    }

    fn __repr__(&self) -> String {
        format!(
            "Design(subset={:?}, c3={:.3}, gain={:.4})",
            self.inner.subset, self.inner.c3, self.inner.certificate.gamma
        )
    }
}

/// Searches the decay-rate grid and returns the minimum-gain design for
/// one sensor subset (1-based indices).
#[pyfunction]
#[pyo3(signature = (model, sensors, grid_step=None, refine_step=None, tol_feas=None))]
fn synthesize(
    model: &Model,
    sensors: Vec<usize>,
    grid_step: Option<f64>,
    refine_step: Option<f64>,
    tol_feas: Option<f64>,
) -> PyResult<Design> {
    let opts = options(grid_step, refine_step, tol_feas);
    let inner = core_synthesize(&model.inner, &sensors, &opts).map_err(err)?;
    Ok(Design { inner })
}

/// Solves the synthesis program at one fixed decay rate; returns None
/// when the program is infeasible there.
#[pyfunction]
#[pyo3(signature = (model, sensors, c3, tol_feas=None))]
fn design_at(
    model: &Model,
    sensors: Vec<usize>,
    c3: f64,
    tol_feas: Option<f64>,
) -> PyResult<Option<Design>> {
    let opts = options(None, None, tol_feas);
    let inner = core_design_at(&model.inner, &sensors, c3, &opts.sdp).map_err(err)?;
    Ok(inner.map(|inner| Design { inner }))
}

/// A single observer running one synthesized design.
#[pyclass(module = "sentinel")]
struct Observer {
    inner: CoreObserver,
}

#[pymethods]
impl Observer {
    #[new]
    fn new(model: &Model, design: &Design) -> PyResult<Observer> {
        Ok(Observer {
            inner: CoreObserver::new(&model.inner, design.inner.clone()).map_err(err)?,
        })
    }

    /// Runs over a trace and returns the state estimates as rows.
    #[pyo3(signature = (model, trace, x_hat0=None))]
    fn run(
        &self,
        model: &Model,
        trace: &Trace,
        x_hat0: Option<Vec<f64>>,
    ) -> PyResult<Vec<Vec<f64>>> {
        let start = initial(model.inner.n(), x_hat0)?;
        let estimates = self.inner.run(&model.inner, &trace.inner, &start).map_err(err)?;
        Ok(estimates.iter().map(to_vec).collect())
    }
}

/// Largest violation of the certificate envelope over a run
/// (nonpositive means the envelope held at every step).
#[pyfunction]
fn envelope_violation(design: &Design, estimates: Vec<Vec<f64>>, trace: &Trace) -> f64 {
    let estimates: Vec<DVector<f64>> = estimates.into_iter().map(DVector::from_vec).collect();
    core_envelope_violation(&design.inner, &estimates, &trace.inner)
}

/// One bank run: per-step winners, scores, and fused estimates.
#[pyclass(module = "sentinel")]
struct Run {
    inner: BankRun,
}

#[pymethods]
impl Run {
    /// Winning candidate index at each step.
    #[getter]
    fn sigmas(&self) -> Vec<usize> {
        self.inner.sigmas.clone()
    }

    /// Per-candidate vote scores at each step.
    #[getter]
    fn pis(&self) -> Vec<Vec<f64>> {
        self.inner.pis.clone()
    }

    /// Fused state estimate at each step, as rows.
    #[getter]
    fn estimates(&self) -> Vec<Vec<f64>> {
        self.inner.estimates.iter().map(to_vec).collect()
    }
}

/// One isolation window's tally.
#[pyclass(module = "sentinel")]
struct Window {
    inner: WindowTally,
}

#[pymethods]
impl Window {
    /// 1-based window index.
    #[getter]
    fn index(&self) -> usize {
        self.inner.index
    }

    /// Votes per candidate, in the bank's candidate order.
    #[getter]
    fn counters(&self) -> Vec<usize> {
        self.inner.counters.clone()
    }

    /// Winning candidate's position.
    #[getter]
    fn winner(&self) -> usize {
        self.inner.winner
    }

    /// Accused sensors (the winning subset's complement), ascending.
    #[getter]
    fn accused(&self) -> Vec<usize> {
        self.inner.accused.clone()
    }

    /// Whether the winner holds a strict majority of the window's votes.
    #[getter]
    fn decisive(&self) -> bool {
        self.inner.decisive
    }
}

/// Windowed voting report over a full run.
#[pyclass(module = "sentinel")]
struct Report {
    inner: IsolationReport,
}

#[pymethods]
impl Report {
    /// Window length in steps.
    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }

    /// Candidate subset labels fixing the counter column order.
    #[getter]
    fn candidate_labels(&self) -> Vec<String> {
        self.inner.candidate_labels.clone()
    }

    /// One tally per complete window.
    fn windows(&self) -> Vec<Window> {
        self.inner
            .windows
            .iter()
            .map(|w| Window { inner: w.clone() })
            .collect()
    }
}

/// Bank of subset observers with incremental vote selection.
#[pyclass(module = "sentinel")]
struct Bank {
    inner: EstimatorBank,
}

#[pymethods]
impl Bank {
    /// Attacked-sensor budget the bank defends against.
    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    /// Number of candidate subsets (sensor count minus q each).
    #[getter]
    fn candidate_count(&self) -> usize {
        self.inner.candidate_count()
    }

    /// Candidate subset labels in vote-column order.
    #[getter]
    fn candidate_labels(&self) -> Vec<String> {
        self.inner.candidate_labels()
    }

    /// Runs the bank over a trace.
    #[pyo3(signature = (model, trace, x_hat0=None))]
    fn run(&self, model: &Model, trace: &Trace, x_hat0: Option<Vec<f64>>) -> PyResult<Run> {
        let start = initial(model.inner.n(), x_hat0)?;
        Ok(Run {
            inner: self
                .inner
                .run(&model.inner, &trace.inner, &start)
                .map_err(err)?,
        })
    }

    /// Runs the bank and tallies fixed-length voting windows; returns the
    /// isolation report together with the underlying run.
    #[pyo3(signature = (model, trace, window, x_hat0=None))]
    fn isolate(
        &self,
        model: &Model,
        trace: &Trace,
        window: usize,
        x_hat0: Option<Vec<f64>>,
    ) -> PyResult<(Report, Run)> {
        let start = initial(model.inner.n(), x_hat0)?;
        let (report, run) =
            isolate_run(&model.inner, &self.inner, &trace.inner, &start, window).map_err(err)?;
        Ok((Report { inner: report }, Run { inner: run }))
    }
}

/// Synthesizes one observer per sensor subset of size p − q.
#[pyfunction]
#[pyo3(signature = (model, q, grid_step=None, refine_step=None, tol_feas=None))]
fn build_bank(
    model: &Model,
    q: usize,
    grid_step: Option<f64>,
    refine_step: Option<f64>,
    tol_feas: Option<f64>,
) -> PyResult<Bank> {
    let opts = options(grid_step, refine_step, tol_feas);
    Ok(Bank {
        inner: core_build_bank(&model.inner, q, &opts).map_err(err)?,
    })
}

/// Supremum of the fused error norm over the second half of a run.
#[pyfunction]
fn tail_error(run: &Run, trace: &Trace) -> f64 {
    core_tail_error(&run.inner, &trace.inner)
}

/// Robust state estimation under sensor attacks: gain synthesis,
/// subset-bank estimation, and windowed attack isolation.
#[pymodule]
fn sentinel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Model>()?;
    m.add_class::<Trace>()?;
    m.add_class::<Scenario>()?;
    m.add_class::<Design>()?;
    m.add_class::<Observer>()?;
    m.add_class::<Run>()?;
    m.add_class::<Window>()?;
    m.add_class::<Report>()?;
    m.add_class::<Bank>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(design_at, m)?)?;
    m.add_function(wrap_pyfunction!(build_bank, m)?)?;
    m.add_function(wrap_pyfunction!(envelope_violation, m)?)?;
    m.add_function(wrap_pyfunction!(tail_error, m)?)?;
    Ok(())
}
