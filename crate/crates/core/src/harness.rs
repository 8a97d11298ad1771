//! Scenario runner: one JSON description in, a reproducible artifact
//! bundle out.
//!
//! A scenario names one of the built-in benchmark setups (or a custom
//! plant), the signal parameters, and the seeds to run. The runner
//! synthesizes whatever designs the mode needs, simulates traces, runs the
//! estimator bank and the isolation voter where applicable, and writes
//! everything — designs as JSON, signals as CSV — next to a manifest that
//! pins seeds, tolerances, and versions. Reruns from the same scenario and
//! overrides are bitwise reproducible.
//!
//! Each mode also carries a few named checks (convergence envelopes, tail
//! error ceilings, vote counters); `run` reports them in the manifest and
//! the CLI turns any failure into a nonzero exit code.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::estimator::{write_bank_csv, BankRun, EstimatorBank};
use crate::isolation::{evaluate, isolate_run, write_isolation_csv};
use crate::model::{
    benchmark_plant, simulate_plant, subsets_of_size, write_trace_csv, Nonlinearity, PlantModel,
    Rho, SignalSpec, Trace,
};
use crate::observer::{error_norms, iss_envelope, worst_envelope_violation, Observer};
use crate::rng::SplitMix64;
use crate::synthesis::{synthesize, verify_design, ObserverDesign, SynthesisOptions};
use crate::{matio, Result};

/// Slack added to simulation-side envelope checks, absorbing accumulated
/// floating-point error in long runs.
pub const ENVELOPE_SLACK: f64 = 1e-6;

/// Sample count for design verification in `verify` runs.
const VERIFY_SAMPLES: usize = 2000;

/// Labels for the independent random streams derived from one run seed.
const X0_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const ATTACK_STREAM: u64 = 3;

/// Which built-in setup a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Full-sensor observer synthesis and convergence under noise.
    Example1,
    /// Estimator bank riding out an unbounded attack on one sensor.
    Example2,
    /// Windowed isolation of the attacked sensor.
    Example3,
    /// A user-supplied plant.
    Custom,
}

impl Mode {
    fn dir_name(self) -> &'static str {
        match self {
            Mode::Example1 => "example1",
            Mode::Example2 => "example2",
            Mode::Example3 => "example3",
            Mode::Custom => "custom",
        }
    }
}

/// Optional scenario parameters; anything omitted takes the mode's default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// Sampling step of the benchmark plant.
    pub delta: Option<f64>,
    /// Nonlinearity strength of the benchmark plant (0 = linear).
    pub alpha: Option<f64>,
    /// Attack magnitude: attacked channels get `a ∼ U(−b, b)`.
    pub b: Option<f64>,
    /// Attack tolerance the estimator bank is built for.
    pub q: Option<usize>,
    /// Actual attacked-sensor count the isolation bank is built for.
    pub q_star: Option<usize>,
    /// Isolation window length.
    #[serde(rename = "N")]
    pub window: Option<usize>,
    /// Steps to simulate.
    pub horizon: Option<usize>,
    /// Run seeds; every artifact set is produced once per seed.
    pub seeds: Option<Vec<u64>>,
    /// Attacked sensor channels (1-based).
    pub attacked: Option<Vec<usize>>,
    /// Measurement-noise magnitude: every channel gets `m ∼ U(−noise, noise)`.
    pub noise: Option<f64>,
}

/// A custom plant in the monotone form the library works with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// State map A, row-major.
    pub a: Vec<Vec<f64>>,
    /// Nonlinearity input map G, row-major.
    pub g: Vec<Vec<f64>>,
    /// Nonlinearity argument map H, row-major.
    pub h: Vec<Vec<f64>>,
    /// Sensor matrix C, row-major.
    pub c: Vec<Vec<f64>>,
    /// Componentwise nonlinearity, one per row of H.
    pub f: Vec<Nonlinearity>,
    /// Input drive.
    pub rho: Rho,
}

impl ModelConfig {
    fn build(&self) -> Result<PlantModel> {
        PlantModel::new(
            matio::from_rows(&self.a)?,
            matio::from_rows(&self.g)?,
            matio::from_rows(&self.h)?,
            matio::from_rows(&self.c)?,
            self.f.clone(),
            self.rho.clone(),
        )
    }
}

/// A scenario file: mode, optional parameters, optional output directory,
/// and (for `custom` mode only) the plant itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mode: Mode,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
}

impl Scenario {
    /// Parses a scenario from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a scenario file.
    pub fn from_file(path: &Path) -> Result<Self> {
        Scenario::from_json(&fs::read_to_string(path)?)
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces the scenario's seed list with this single seed.
    pub seed: Option<u64>,
    /// Replaces the output directory.
    pub out: Option<PathBuf>,
    /// Replaces the solver's feasibility tolerance.
    pub tol_feas: Option<f64>,
    /// Replaces the coarse decay-rate grid step.
    pub grid_step: Option<f64>,
    /// Replaces the attacked-sensor count the isolation bank is built for.
    pub q_star: Option<usize>,
    /// Replaces the isolation window length.
    pub window: Option<usize>,
}

/// A scenario with every parameter pinned and the plant built.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub mode: Mode,
    pub model: PlantModel,
    pub delta: f64,
    pub alpha: f64,
    pub b: f64,
    pub q: usize,
    pub q_star: usize,
    pub window: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub attacked: Vec<usize>,
    pub noise: f64,
    pub output: PathBuf,
    pub synthesis: SynthesisOptions,
}

/// Fills mode defaults, applies overrides, and validates cross-field rules.
pub fn resolve(scenario: &Scenario, overrides: &Overrides) -> Result<ResolvedScenario> {
    let p = &scenario.parameters;
    let mode = scenario.mode;

    if mode != Mode::Custom && scenario.model.is_some() {
        return Err(Error::invalid(
            "an inline model is only allowed in custom mode",
        ));
    }

    let delta = p.delta.unwrap_or(0.1);
    let alpha = p.alpha.unwrap_or(1.0);
    let model = match mode {
        Mode::Custom => scenario
            .model
            .as_ref()
            .ok_or_else(|| Error::invalid("custom mode needs an inline model"))?
            .build()?,
        _ => benchmark_plant(delta, alpha),
    };

    let b = p.b.unwrap_or(match mode {
        Mode::Example2 => 10.0,
        Mode::Example3 => 2.5,
        _ => 0.0,
    });
    let attacked = p.attacked.clone().unwrap_or(match mode {
        Mode::Example2 | Mode::Example3 => vec![3],
        _ => vec![],
    });
    let horizon = p.horizon.unwrap_or(match mode {
        Mode::Example3 => 1000,
        _ => 500,
    });
    let window = p.window.unwrap_or(100);
    let q = p.q.unwrap_or(1);
    let q_star = p.q_star.unwrap_or(1);
    let noise = p.noise.unwrap_or(0.5);
    let seeds = p.seeds.clone().unwrap_or_else(|| vec![1]);

    let mut resolved = ResolvedScenario {
        mode,
        model,
        delta,
        alpha,
        b,
        q,
        q_star,
        window,
        horizon,
        seeds,
        attacked,
        noise,
        output: scenario
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(mode.dir_name())),
        synthesis: SynthesisOptions::default(),
    };

    if let Some(seed) = overrides.seed {
        resolved.seeds = vec![seed];
    }
    if let Some(out) = &overrides.out {
        resolved.output = out.clone();
    }
    if let Some(tol) = overrides.tol_feas {
        if !(tol > 0.0) {
            return Err(Error::invalid("tol-feas must be positive"));
        }
        resolved.synthesis.sdp.tol_feas = tol;
    }
    if let Some(step) = overrides.grid_step {
        if !(step > 0.0 && step < 1.0) {
            return Err(Error::invalid("grid-step must be in (0, 1)"));
        }
        resolved.synthesis.coarse_step = step;
        resolved.synthesis.refine_step = (step / 10.0).max(1e-4);
    }
    if let Some(q_star) = overrides.q_star {
        resolved.q_star = q_star;
    }
    if let Some(window) = overrides.window {
        resolved.window = window;
    }

    if resolved.seeds.is_empty() {
        return Err(Error::invalid("the seed list must not be empty"));
    }
    if !(resolved.noise >= 0.0) || !(resolved.b >= 0.0) {
        return Err(Error::invalid("signal magnitudes must be nonnegative"));
    }
    if mode == Mode::Example3 && resolved.horizon < resolved.window {
        return Err(Error::invalid(format!(
            "isolation needs horizon ≥ N, got horizon {} < N {}",
            resolved.horizon, resolved.window
        )));
    }
    let sensors = resolved.model.p();
    if resolved.attacked.iter().any(|&i| i == 0 || i > sensors) {
        return Err(Error::invalid(format!(
            "attacked sensors must be 1-based indices ≤ {sensors}"
        )));
    }
    Ok(resolved)
}

impl ResolvedScenario {
    /// The sensor subsets whose designs this mode needs.
    pub fn design_subsets(&self) -> Vec<Vec<usize>> {
        let p = self.model.p();
        match self.mode {
            Mode::Example1 | Mode::Custom => vec![(1..=p).collect()],
            Mode::Example2 => bank_subsets(p, self.q),
            Mode::Example3 => bank_subsets(p, self.q_star),
        }
    }

    /// The measurement-noise signal for one run seed.
    pub fn noise_spec(&self, seed: u64) -> SignalSpec {
        if self.noise == 0.0 {
            SignalSpec::zero()
        } else {
            SignalSpec::uniform(-self.noise, self.noise, stream_seed(seed, NOISE_STREAM))
        }
    }

    /// The attack signal for one run seed. The attack stream depends only
    /// on the seed, so runs with different magnitudes see proportional
    /// attack records.
    pub fn attack_spec(&self, seed: u64) -> SignalSpec {
        if self.b == 0.0 || self.attacked.is_empty() {
            SignalSpec::zero()
        } else {
            SignalSpec::uniform_on(
                self.attacked.clone(),
                -self.b,
                self.b,
                stream_seed(seed, ATTACK_STREAM),
            )
        }
    }

    /// The initial state for one run seed: componentwise standard normal.
    pub fn initial_state(&self, seed: u64) -> DVector<f64> {
        let mut rng = SplitMix64::new(stream_seed(seed, X0_STREAM));
        DVector::from_fn(self.model.n(), |_, _| rng.standard_normal())
    }

    /// Simulates the scenario's plant for one seed.
    pub fn trace(&self, seed: u64) -> Result<Trace> {
        simulate_plant(
            &self.model,
            &self.initial_state(seed),
            None,
            &self.noise_spec(seed),
            &self.attack_spec(seed),
            self.horizon,
        )
    }
}

/// The subsets an estimator bank for `q` needs: cardinality `p − q` then
/// `p − 2q`, lexicographic within each block.
pub fn bank_subsets(p: usize, q: usize) -> Vec<Vec<usize>> {
    let mut out = subsets_of_size(p, p.saturating_sub(q));
    out.extend(subsets_of_size(p, p.saturating_sub(2 * q)));
    out
}

/// One independent stream seed derived from a run seed.
fn stream_seed(seed: u64, label: u64) -> u64 {
    SplitMix64::derive(seed, label).next_u64()
}

/// The outcome of one named check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, seed: Option<u64>, pass: bool, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            seed,
            pass,
            detail,
        }
    }
}

/// Tolerances pinned in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ManifestTolerances {
    pub tol_feas: f64,
    pub tol_obj: f64,
    pub coarse_step: f64,
    pub refine_step: f64,
    pub envelope_slack: f64,
}

/// The manifest written next to every artifact bundle.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub package: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub parameters: ManifestParameters,
    pub tolerances: ManifestTolerances,
    /// Artifact paths relative to the output directory, sorted.
    pub artifacts: Vec<String>,
    pub checks: Vec<CheckOutcome>,
}

/// The resolved parameter values a run actually used.
#[derive(Debug, Clone, Serialize)]
pub struct ManifestParameters {
    pub delta: f64,
    pub alpha: f64,
    pub b: f64,
    pub q: usize,
    pub q_star: usize,
    #[serde(rename = "N")]
    pub window: usize,
    pub horizon: usize,
    pub attacked: Vec<usize>,
    pub noise: f64,
}

/// What a finished run hands back to the caller.
#[derive(Debug)]
pub struct RunSummary {
    pub output: PathBuf,
    pub checks: Vec<CheckOutcome>,
    pub artifacts: Vec<String>,
}

impl RunSummary {
    /// True when every named check passed.
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn write_file(root: &Path, rel: &str, bytes: &[u8], artifacts: &mut Vec<String>) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    artifacts.push(rel.to_string());
    Ok(())
}

/// Synthesizes one design per mode-needed subset, in subset order.
pub fn synthesize_designs(resolved: &ResolvedScenario) -> Result<Vec<ObserverDesign>> {
    resolved
        .design_subsets()
        .iter()
        .map(|s| synthesize(&resolved.model, s, &resolved.synthesis))
        .collect()
}

fn write_designs(
    root: &Path,
    designs: &[ObserverDesign],
    artifacts: &mut Vec<String>,
) -> Result<()> {
    for design in designs {
        let label = design
            .subset
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("-");
        write_file(
            root,
            &format!("designs/design_{label}.json"),
            design.to_json()?.as_bytes(),
            artifacts,
        )?;
    }
    Ok(())
}

/// Writes an observer run as CSV: `k, xhat1..xhatn, e_norm, bound`, where
/// `bound` is the certificate envelope for the run's own disturbance record.
pub fn write_observer_csv<W: std::io::Write>(
    design: &ObserverDesign,
    estimates: &[DVector<f64>],
    trace: &Trace,
    out: W,
) -> Result<()> {
    let n = estimates[0].len();
    let errs = error_norms(estimates, &trace.x);
    let bounds = iss_envelope(design, errs[0], &trace.m);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("xhat{i}")));
    header.push("e_norm".to_string());
    header.push("bound".to_string());
    w.write_record(&header)?;
    for k in 0..estimates.len() {
        let mut rec = vec![k.to_string()];
        rec.extend(estimates[k].iter().map(|v| format!("{v:.17e}")));
        rec.push(format!("{:.17e}", errs[k]));
        rec.push(format!("{:.17e}", bounds[k]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// The ceiling the bank's tail error is held to: three times the worst
/// attack-free certificate gain, times the worst noise magnitude seen.
pub fn tail_error_ceiling(bank: &EstimatorBank, attacked: &[usize], trace: &Trace) -> Option<f64> {
    let worst_gamma = bank
        .observers()
        .iter()
        .filter(|o| o.subset().indices.iter().all(|i| !attacked.contains(i)))
        .map(|o| o.design().certificate.gamma)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst_gamma == f64::NEG_INFINITY {
        return None;
    }
    let noise_sup = trace.m.iter().map(DVector::norm).fold(0.0, f64::max);
    Some(3.0 * worst_gamma * noise_sup)
}

/// Largest fused-estimate error over the settled half of a bank run.
pub fn tail_error(run: &BankRun, trace: &Trace) -> f64 {
    let start = trace.horizon() / 2;
    run.estimates[start..]
        .iter()
        .zip(&trace.x[start..])
        .map(|(xh, x)| (xh - x).norm())
        .fold(0.0, f64::max)
}

/// Column dictionary for exactly the artifact kinds this invocation wrote
/// (the verb, not just the mode, decides what exists — `estimate` runs the
/// bank even on a single-observer scenario).
fn columns_dictionary(artifacts: &[String]) -> serde_json::Value {
    let written = |suffix: &str| artifacts.iter().any(|a| a.ends_with(suffix));
    let mut dict = serde_json::Map::new();
    if written("trace.csv") {
        dict.insert(
            "trace.csv".into(),
            serde_json::json!({
                "k": "step index",
                "x*": "true state components",
                "y*": "measured outputs (attack and noise included)",
                "a*": "attack injected per sensor",
                "m*": "measurement noise per sensor"
            }),
        );
    }
    if artifacts.iter().any(|a| a.starts_with("designs/design_")) {
        dict.insert(
            "designs/design_<subset>.json".into(),
            serde_json::json!({
                "subset": "1-based sensor indices the design listens to",
                "c3": "decay parameter the gains were synthesized at",
                "K": "innovation gain (row-major)",
                "L": "output-injection gain (row-major)",
                "P": "Lyapunov matrix (row-major)",
                "kappa": "multiplier scale",
                "mu": "inverse-eigenvalue bound on P",
                "mu1": "disturbance supply coefficient",
                "slope_bound": "componentwise slope bound used by the multiplier",
                "certificate": "error envelope constants {c, lambda, gamma}"
            }),
        );
    }
    if written("observer.csv") {
        dict.insert(
            "observer.csv".into(),
            serde_json::json!({
                "k": "step index",
                "xhat*": "observer estimate components",
                "e_norm": "estimate error |x̂(k) − x(k)|",
                "bound": "certificate envelope c·λ^k·|e(0)| + γ·max_{j≤k}|m(j)|"
            }),
        );
    }
    if written("bank.csv") {
        dict.insert(
            "bank.csv".into(),
            serde_json::json!({
                "k": "step index",
                "sigma": "winning candidate subset",
                "pi_<J>": "consistency score of candidate J",
                "xhat*": "fused estimate components",
                "e_norm": "fused estimate error |x̂(k) − x(k)|"
            }),
        );
    }
    if written("isolation.csv") {
        dict.insert(
            "isolation.csv".into(),
            serde_json::json!({
                "window_index": "1-based window number",
                "winner_subset": "candidate with the most votes",
                "accused_sensors": "complement of the winner",
                "n_<J>": "votes candidate J received in the window",
                "decisive": "whether the winner holds a strict majority"
            }),
        );
    }
    serde_json::Value::Object(dict)
}

/// What a CLI invocation asks the harness to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    /// Write the scenario's designs as JSON, one file per subset.
    Synthesize,
    /// Write simulated plant traces as CSV.
    Simulate,
    /// Synthesize a bank for `q` and log its run over each trace.
    Estimate,
    /// Synthesize a bank for `q*` and write windowed accusation reports.
    Isolate,
    /// Synthesize the scenario's designs and verify them independently.
    Verify,
    /// Full mode pipeline with named checks and all artifacts.
    Run,
}

impl Verb {
    fn name(self) -> &'static str {
        match self {
            Verb::Synthesize => "synthesize",
            Verb::Simulate => "simulate",
            Verb::Estimate => "estimate",
            Verb::Isolate => "isolate",
            Verb::Verify => "verify",
            Verb::Run => "run",
        }
    }
}

/// Executes one verb against a scenario and writes its artifact bundle plus
/// a manifest. Artifacts are always written, pass or fail; the summary's
/// checks decide the caller's exit code.
pub fn execute(verb: Verb, scenario: &Scenario, overrides: &Overrides) -> Result<RunSummary> {
    let resolved = resolve(scenario, overrides)?;
    let root = resolved.output.clone();
    fs::create_dir_all(&root)?;
    let mut artifacts = Vec::new();
    let mut checks = Vec::new();

    match verb {
        Verb::Synthesize => {
            let designs = synthesize_designs(&resolved)?;
            write_designs(&root, &designs, &mut artifacts)?;
        }
        Verb::Simulate => {
            for &seed in &resolved.seeds {
                let trace = resolved.trace(seed)?;
                let mut bytes = Vec::new();
                write_trace_csv(&trace, &mut bytes)?;
                write_file(&root, &format!("seed_{seed}/trace.csv"), &bytes, &mut artifacts)?;
            }
        }
        Verb::Estimate => {
            estimate_pipeline(&resolved, resolved.q, &root, &mut artifacts, None)?;
        }
        Verb::Isolate => {
            isolate_pipeline(&resolved, &root, &mut artifacts, &mut None)?;
        }
        Verb::Verify => {
            let designs = synthesize_designs(&resolved)?;
            write_designs(&root, &designs, &mut artifacts)?;
            let mut reports = Vec::new();
            for design in &designs {
                let report =
                    verify_design(&resolved.model, design, VERIFY_SAMPLES, resolved.seeds[0])?;
                checks.push(CheckOutcome::new(
                    "verification_report",
                    None,
                    report.ok(),
                    format!(
                        "subset {:?}: lmi_margin = {:.3e}, lyapunov_worst = {:.3e}",
                        design.subset, report.lmi_margin, report.lyapunov_worst
                    ),
                ));
                reports.push(report);
            }
            write_file(
                &root,
                "verification.json",
                serde_json::to_string_pretty(&reports)?.as_bytes(),
                &mut artifacts,
            )?;
        }
        Verb::Run => {
            run_pipeline(&resolved, &root, &mut artifacts, &mut checks)?;
        }
    }

    let dictionary = columns_dictionary(&artifacts);
    write_file(
        &root,
        "columns.json",
        serde_json::to_string_pretty(&dictionary)?.as_bytes(),
        &mut artifacts,
    )?;

    artifacts.sort();
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: verb.name(),
        mode: resolved.mode,
        seeds: resolved.seeds.clone(),
        parameters: ManifestParameters {
            delta: resolved.delta,
            alpha: resolved.alpha,
            b: resolved.b,
            q: resolved.q,
            q_star: resolved.q_star,
            window: resolved.window,
            horizon: resolved.horizon,
            attacked: resolved.attacked.clone(),
            noise: resolved.noise,
        },
        tolerances: ManifestTolerances {
            tol_feas: resolved.synthesis.sdp.tol_feas,
            tol_obj: resolved.synthesis.sdp.tol_obj,
            coarse_step: resolved.synthesis.coarse_step,
            refine_step: resolved.synthesis.refine_step,
            envelope_slack: ENVELOPE_SLACK,
        },
        artifacts,
        checks: checks.clone(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    fs::write(root.join("manifest.json"), &manifest_json)?;

    Ok(RunSummary {
        output: root,
        checks,
        artifacts: manifest.artifacts,
    })
}

/// Runs the full pipeline for a scenario (the `run` verb).
pub fn run_scenario(scenario: &Scenario, overrides: &Overrides) -> Result<RunSummary> {
    execute(Verb::Run, scenario, overrides)
}

/// Synthesizes a bank for `q`, runs it over every seed's trace, and writes
/// trace + bank logs. Returns the bank for callers that keep going.
fn estimate_pipeline(
    resolved: &ResolvedScenario,
    q: usize,
    root: &Path,
    artifacts: &mut Vec<String>,
    mut checks: Option<&mut Vec<CheckOutcome>>,
) -> Result<EstimatorBank> {
    let subsets = bank_subsets(resolved.model.p(), q);
    let designs = subsets
        .iter()
        .map(|s| synthesize(&resolved.model, s, &resolved.synthesis))
        .collect::<Result<Vec<_>>>()?;
    write_designs(root, &designs, artifacts)?;
    let bank = EstimatorBank::from_designs(&resolved.model, q, designs)?;
    for &seed in &resolved.seeds {
        let trace = resolved.trace(seed)?;
        let run = bank.run(&resolved.model, &trace, &DVector::zeros(resolved.model.n()))?;
        if let Some(checks) = checks.as_deref_mut() {
            let tail = tail_error(&run, &trace);
            match tail_error_ceiling(&bank, &resolved.attacked, &trace) {
                Some(ceiling) => checks.push(CheckOutcome::new(
                    "tail_error_ceiling",
                    Some(seed),
                    tail <= ceiling + ENVELOPE_SLACK,
                    format!("tail error = {tail:.4}, ceiling = {ceiling:.4}"),
                )),
                None => checks.push(CheckOutcome::new(
                    "tail_error_ceiling",
                    Some(seed),
                    false,
                    "no attack-free subset: attacked set exceeds the bank's tolerance".to_string(),
                )),
            }
        }
        let mut bytes = Vec::new();
        write_trace_csv(&trace, &mut bytes)?;
        write_file(root, &format!("seed_{seed}/trace.csv"), &bytes, artifacts)?;
        let mut bank_bytes = Vec::new();
        write_bank_csv(&bank, &run, &trace, &mut bank_bytes)?;
        write_file(root, &format!("seed_{seed}/bank.csv"), &bank_bytes, artifacts)?;
    }
    Ok(bank)
}

/// Synthesizes a bank for `q*`, isolates over every seed's trace, and writes
/// trace + bank + accusation logs.
fn isolate_pipeline(
    resolved: &ResolvedScenario,
    root: &Path,
    artifacts: &mut Vec<String>,
    checks: &mut Option<&mut Vec<CheckOutcome>>,
) -> Result<()> {
    let subsets = bank_subsets(resolved.model.p(), resolved.q_star);
    let designs = subsets
        .iter()
        .map(|s| synthesize(&resolved.model, s, &resolved.synthesis))
        .collect::<Result<Vec<_>>>()?;
    write_designs(root, &designs, artifacts)?;
    let bank = EstimatorBank::from_designs(&resolved.model, resolved.q_star, designs)?;
    let mut true_w = resolved.attacked.clone();
    true_w.sort_unstable();
    for &seed in &resolved.seeds {
        let trace = resolved.trace(seed)?;
        let (report, run) = isolate_run(
            &resolved.model,
            &bank,
            &trace,
            &DVector::zeros(resolved.model.n()),
            resolved.window,
        )?;
        if let Some(checks) = checks.as_deref_mut() {
            let conserved = report
                .windows
                .iter()
                .all(|w| w.counters.iter().sum::<usize>() == resolved.window);
            checks.push(CheckOutcome::new(
                "window_counters",
                Some(seed),
                conserved,
                format!("{} complete windows", report.windows.len()),
            ));
            let accuracy = evaluate(&report, &true_w);
            checks.push(CheckOutcome::new(
                "majority_isolation",
                Some(seed),
                accuracy.fraction >= 0.5,
                format!(
                    "accused {:?} in {:.0}% of {} windows",
                    true_w,
                    accuracy.fraction * 100.0,
                    report.windows.len()
                ),
            ));
        }
        let mut bytes = Vec::new();
        write_trace_csv(&trace, &mut bytes)?;
        write_file(root, &format!("seed_{seed}/trace.csv"), &bytes, artifacts)?;
        let mut bank_bytes = Vec::new();
        write_bank_csv(&bank, &run, &trace, &mut bank_bytes)?;
        write_file(root, &format!("seed_{seed}/bank.csv"), &bank_bytes, artifacts)?;
        let mut iso_bytes = Vec::new();
        write_isolation_csv(&report, &mut iso_bytes)?;
        write_file(root, &format!("seed_{seed}/isolation.csv"), &iso_bytes, artifacts)?;
    }
    Ok(())
}

/// The `run` verb's mode-specific pipeline and checks.
fn run_pipeline(
    resolved: &ResolvedScenario,
    root: &Path,
    artifacts: &mut Vec<String>,
    checks: &mut Vec<CheckOutcome>,
) -> Result<()> {
    match resolved.mode {
        Mode::Example1 | Mode::Custom => {
            let designs = synthesize_designs(resolved)?;
            write_designs(root, &designs, artifacts)?;
            let design = designs[0].clone();
            let gamma = design.certificate.gamma;
            checks.push(CheckOutcome::new(
                "gain_level",
                None,
                (0.85..=0.95).contains(&design.c3) && gamma <= 1.05,
                format!("c3 = {:.3}, gamma = {gamma:.6}", design.c3),
            ));
            if resolved.mode == Mode::Custom {
                let report =
                    verify_design(&resolved.model, &design, VERIFY_SAMPLES, resolved.seeds[0])?;
                checks.push(CheckOutcome::new(
                    "verification_report",
                    None,
                    report.ok(),
                    format!(
                        "lmi_margin = {:.3e}, lyapunov_worst = {:.3e}",
                        report.lmi_margin, report.lyapunov_worst
                    ),
                ));
                write_file(
                    root,
                    "verification.json",
                    serde_json::to_string_pretty(&report)?.as_bytes(),
                    artifacts,
                )?;
            }
            let observer = Observer::new(&resolved.model, design)?;
            for &seed in &resolved.seeds {
                let trace = resolved.trace(seed)?;
                let estimates =
                    observer.run(&resolved.model, &trace, &DVector::zeros(resolved.model.n()))?;
                let violation = worst_envelope_violation(observer.design(), &estimates, &trace);
                checks.push(CheckOutcome::new(
                    "error_envelope",
                    Some(seed),
                    violation <= ENVELOPE_SLACK,
                    format!("worst envelope violation = {violation:.3e}"),
                ));
                let mut csv_bytes = Vec::new();
                write_trace_csv(&trace, &mut csv_bytes)?;
                write_file(root, &format!("seed_{seed}/trace.csv"), &csv_bytes, artifacts)?;
                let mut obs_bytes = Vec::new();
                write_observer_csv(observer.design(), &estimates, &trace, &mut obs_bytes)?;
                write_file(
                    root,
                    &format!("seed_{seed}/observer.csv"),
                    &obs_bytes,
                    artifacts,
                )?;
            }
        }
        Mode::Example2 => {
            estimate_pipeline(resolved, resolved.q, root, artifacts, Some(checks))?;
        }
        Mode::Example3 => {
            isolate_pipeline(resolved, root, artifacts, &mut Some(checks))?;
        }
    }
    Ok(())
}
