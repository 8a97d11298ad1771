//! Plant models, sensor subsets, signal specifications, and simulation
//! traces.
//!
//! The plant class is
//!
//! ```text
//! x(k+1) = A x(k) + G f(H x(k)) + ρ(u(k))
//! y(k)   = C x(k) + m(k) + a(k)
//! ```
//!
//! with `f` applied componentwise, each component monotone nondecreasing
//! (nonnegative increments), `m` bounded measurement noise, and `a` an
//! additive attack supported on an unknown subset of sensors. Systems whose
//! nonlinearity is not monotone (e.g. a sine term) are brought into this
//! form by [`monotonize`], which moves a linear part of the state map into
//! the nonlinearity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::matio;
use crate::rng::SplitMix64;
use crate::Result;

/// Slack allowed in sampled monotonicity checks: increments may be negative
/// by at most this much relative to the argument increment.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Sampling range for the monotonicity spot check.
const MONOTONE_SAMPLE_RANGE: f64 = 50.0;

/// Number of sampled pairs used when validating a nonlinearity.
const MONOTONE_SAMPLES: usize = 10_000;

/// A scalar monotone nonlinearity component.
///
/// Each variant is a pure function of one variable with nonnegative
/// increments and a known (finite) upper bound on its slope, which the
/// design stage uses to build the incremental multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `f(v) = v`.
    Identity,
    /// `f(v) = v + sin(v)`, slope in [0, 2].
    VPlusSin,
    /// `f(v) = c·v` for a fixed coefficient.
    Scale { c: f64 },
}

impl Nonlinearity {
    /// Evaluates the component at `v`.
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Nonlinearity::Identity => v,
            Nonlinearity::VPlusSin => v + v.sin(),
            Nonlinearity::Scale { c } => c * v,
        }
    }

    /// Upper bound on the slope, used by the multiplier construction.
    pub fn slope_bound(&self) -> f64 {
        match self {
            Nonlinearity::Identity => 1.0,
            Nonlinearity::VPlusSin => 2.0,
            Nonlinearity::Scale { c } => c.max(0.0),
        }
    }
}

/// A raw (possibly non-monotone) scalar nonlinearity, the input of
/// [`monotonize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RawNonlinearity {
    /// `g(v) = sin(v)`.
    Sin,
    /// `g ≡ 0`.
    Zero,
    /// `g(v) = c·v`.
    Linear { c: f64 },
}

impl RawNonlinearity {
    /// The rewrite target `f(v) = v + g(v)`.
    fn shifted(&self) -> Nonlinearity {
        match self {
            RawNonlinearity::Sin => Nonlinearity::VPlusSin,
            RawNonlinearity::Zero => Nonlinearity::Identity,
            RawNonlinearity::Linear { c } => Nonlinearity::Scale { c: 1.0 + c },
        }
    }

    /// Evaluates the raw component at `v`.
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            RawNonlinearity::Sin => v.sin(),
            RawNonlinearity::Zero => 0.0,
            RawNonlinearity::Linear { c } => c * v,
        }
    }
}

/// Checks monotonicity of a component on sampled pairs.
///
/// Returns the worst increment ratio found; values at or above
/// `-MONOTONE_SLACK` count as monotone.
pub fn sampled_increment_floor(f: &Nonlinearity, samples: usize, seed: u64) -> f64 {
    let mut rng = SplitMix64::derive(seed, 0x6d6f6e6f);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let v = rng.uniform(-MONOTONE_SAMPLE_RANGE, MONOTONE_SAMPLE_RANGE);
        let w = rng.uniform(-MONOTONE_SAMPLE_RANGE, MONOTONE_SAMPLE_RANGE);
        if v == w {
            continue;
        }
        let ratio = (f.eval(v) - f.eval(w)) / (v - w);
        if ratio < worst {
            worst = ratio;
        }
    }
    worst
}

/// Additive input term ρ(u).
///
/// The built-in form is linear in the input, `ρ(u) = B·u`; scenarios with no
/// input use [`Rho::Zero`]. Output-dependent ρ is intentionally not modeled:
/// with attacked sensors the measured output is not a trustworthy argument,
/// and none of the built-in scenarios need it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rho {
    /// ρ ≡ 0.
    Zero,
    /// ρ(u) = B·u with B given row-major (n × n_u).
    LinearInput { b: Vec<Vec<f64>> },
}

impl Rho {
    fn eval(&self, n: usize, u: &DVector<f64>) -> Result<DVector<f64>> {
        // An empty input vector means "no drive" regardless of the map's
        // input dimension (traces read back from CSV carry no inputs).
        if u.len() == 0 {
            return Ok(DVector::zeros(n));
        }
        match self {
            Rho::Zero => Ok(DVector::zeros(n)),
            Rho::LinearInput { b } => {
                let bm = matio::from_rows(b)?;
                if bm.nrows() != n || bm.ncols() != u.len() {
                    return Err(Error::dim(format!(
                        "input map is {}x{}, expected {}x{}",
                        bm.nrows(),
                        bm.ncols(),
                        n,
                        u.len()
                    )));
                }
                Ok(&bm * u)
            }
        }
    }
}

/// A discrete-time plant with monotone componentwise nonlinearity and a full
/// sensor suite.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    /// State map A (n×n).
    pub a: DMatrix<f64>,
    /// Nonlinearity input map G (n×r).
    pub g: DMatrix<f64>,
    /// Nonlinearity argument map H (r×n).
    pub h: DMatrix<f64>,
    /// Full sensor matrix C (p×n).
    pub c: DMatrix<f64>,
    /// Componentwise nonlinearity, one entry per row of H.
    pub f: Vec<Nonlinearity>,
    /// Additive input term.
    pub rho: Rho,
}

impl PlantModel {
    /// Validates dimensions and monotonicity, returning the model.
    pub fn new(
        a: DMatrix<f64>,
        g: DMatrix<f64>,
        h: DMatrix<f64>,
        c: DMatrix<f64>,
        f: Vec<Nonlinearity>,
        rho: Rho,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dim("state map A must be square"));
        }
        let r = g.ncols();
        if g.nrows() != n {
            return Err(Error::dim("G must have n rows"));
        }
        if h.nrows() != r || h.ncols() != n {
            return Err(Error::dim("H must be r×n"));
        }
        if c.ncols() != n {
            return Err(Error::dim("C must have n columns"));
        }
        if f.len() != r {
            return Err(Error::dim("one nonlinearity component per row of H"));
        }
        for (i, fi) in f.iter().enumerate() {
            let floor = sampled_increment_floor(fi, MONOTONE_SAMPLES, 0);
            if floor < -MONOTONE_SLACK {
                return Err(Error::invalid(format!(
                    "nonlinearity component {i} has negative increments (worst ratio {floor:.3e})"
                )));
            }
        }
        Ok(PlantModel { a, g, h, c, f, rho })
    }

    /// State dimension n.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Nonlinearity channel count r.
    pub fn r(&self) -> usize {
        self.g.ncols()
    }

    /// Sensor count p.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Largest slope bound across nonlinearity components.
    pub fn slope_bound(&self) -> f64 {
        self.f
            .iter()
            .map(|fi| fi.slope_bound())
            .fold(0.0, f64::max)
    }

    /// Evaluates the componentwise nonlinearity at `v` (length r).
    pub fn f_eval(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.f.len(),
            self.f.iter().zip(v.iter()).map(|(fi, vi)| fi.eval(*vi)),
        )
    }

    /// Evaluates the input drive ρ(u); an empty `u` means no drive.
    pub fn rho_eval(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.rho.eval(self.n(), u)
    }

    /// One plant step `x⁺ = A x + G f(H x) + ρ(u)`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n() {
            return Err(Error::dim("state length"));
        }
        let fx = self.f_eval(&(&self.h * x));
        Ok(&self.a * x + &self.g * fx + self.rho.eval(self.n(), u)?)
    }

    /// Extracts the sensor subset with the given ascending 1-based indices.
    pub fn subset(&self, indices: &[usize]) -> Result<SensorSubset> {
        SensorSubset::new(self, indices)
    }
}

/// Rewrites `x⁺ = A_raw x + G g(H x) + ρ(u)` into the monotone form
/// `x⁺ = (A_raw − G H) x + G f(H x) + ρ(u)` with `f(v) = v + g(v)`.
///
/// The two systems are pointwise identical because `G·g(Hx) = G·(f(Hx) − Hx)`.
/// Fails if any rewritten component has negative increments, i.e. if the raw
/// nonlinearity's slope drops below −1 somewhere in the sampled range.
pub fn monotonize(
    a_raw: DMatrix<f64>,
    g: DMatrix<f64>,
    h: DMatrix<f64>,
    c: DMatrix<f64>,
    raw: Vec<RawNonlinearity>,
    rho: Rho,
) -> Result<PlantModel> {
    if raw.len() != h.nrows() {
        return Err(Error::dim("one raw component per row of H"));
    }
    let f: Vec<Nonlinearity> = raw.iter().map(RawNonlinearity::shifted).collect();
    let a = &a_raw - &g * &h;
    PlantModel::new(a, g, h, c, f, rho)
}

/// The two-state benchmark plant with four sensors used by the built-in
/// scenarios: a sampled oscillator-like system with one sine channel.
///
/// `delta` is the sampling step and `alpha` scales the nonlinearity input
/// map; `alpha = 0` yields a linear plant (G = 0).
pub fn benchmark_plant(delta: f64, alpha: f64) -> PlantModel {
    let a_raw = DMatrix::from_row_slice(2, 2, &[1.0, delta, 0.0, 1.0]);
    let g = DMatrix::from_row_slice(2, 1, &[0.5 * delta * alpha, delta * alpha]);
    let h = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let c = DMatrix::from_row_slice(
        4,
        2,
        &[3.0, 0.3, 3.0, 0.6, 6.0, 0.9, 1.2, 12.0],
    );
    let rho = Rho::LinearInput {
        b: vec![vec![delta], vec![delta]],
    };
    monotonize(a_raw, g, h, c, vec![RawNonlinearity::Sin], rho)
        .expect("benchmark plant is monotone by construction")
}

/// An ordered sensor subset and its stacked output matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSubset {
    /// Strictly increasing 1-based sensor indices.
    pub indices: Vec<usize>,
    /// Rows of the full C at those indices.
    pub c_j: DMatrix<f64>,
}

impl SensorSubset {
    /// Builds the subset, validating indices against the model.
    pub fn new(model: &PlantModel, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("sensor subset must be nonempty"));
        }
        let p = model.p();
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::invalid(
                    "sensor indices must be strictly increasing (duplicates not allowed)",
                ));
            }
        }
        if indices.iter().any(|&i| i < 1 || i > p) {
            return Err(Error::invalid(format!(
                "sensor index out of range 1..={p}"
            )));
        }
        let mut c_j = DMatrix::zeros(indices.len(), model.n());
        for (row, &i) in indices.iter().enumerate() {
            c_j.set_row(row, &model.c.row(i - 1));
        }
        Ok(SensorSubset {
            indices: indices.to_vec(),
            c_j,
        })
    }

    /// Number of sensors in the subset.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    /// True when the subset is empty (never for validated subsets).
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Slices a full output vector (length p) down to this subset.
    pub fn slice(&self, y_full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.indices.len(),
            self.indices.iter().map(|&i| y_full[i - 1]),
        )
    }

    /// Compact display form, e.g. `1-2-4`.
    pub fn label(&self) -> String {
        self.indices
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// All ascending `card`-element subsets of {1, …, p}.
pub fn subsets_of_size(p: usize, card: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, p: usize, card: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == card {
            out.push(cur.clone());
            return;
        }
        let remaining = card - cur.len();
        for i in start..=p {
            if p - i + 1 < remaining {
                break;
            }
            cur.push(i);
            rec(i + 1, p, card, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if card == 0 || card > p {
        return out;
    }
    rec(1, p, card, &mut Vec::new(), &mut out);
    out
}

/// A per-channel signal source: zero, seeded uniform noise, or an explicit
/// trace, optionally restricted to a support set of channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    #[serde(flatten)]
    pub kind: SignalKind,
    /// Seed for the sampled kinds; ignored by `Zero` and `Samples`.
    #[serde(default)]
    pub seed: u64,
    /// Channels (1-based) the signal may touch; `None` means all.
    #[serde(default)]
    pub support: Option<Vec<usize>>,
}

/// The signal families supported by scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    /// Identically zero.
    Zero,
    /// Independent per-step, per-channel uniform draws on (lo, hi).
    Uniform { lo: f64, hi: f64 },
    /// An explicit per-step table (each row length = channel count).
    Samples { values: Vec<Vec<f64>> },
}

impl SignalSpec {
    /// Zero signal.
    pub fn zero() -> Self {
        SignalSpec {
            kind: SignalKind::Zero,
            seed: 0,
            support: None,
        }
    }

    /// Uniform signal on (lo, hi) over all channels.
    pub fn uniform(lo: f64, hi: f64, seed: u64) -> Self {
        SignalSpec {
            kind: SignalKind::Uniform { lo, hi },
            seed,
            support: None,
        }
    }

    /// Uniform signal restricted to the given 1-based channels.
    pub fn uniform_on(support: Vec<usize>, lo: f64, hi: f64, seed: u64) -> Self {
        SignalSpec {
            kind: SignalKind::Uniform { lo, hi },
            seed,
            support: Some(support),
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if let SignalKind::Uniform { lo, hi } = self.kind {
            if !(lo < hi) {
                return Err(Error::invalid("uniform bounds must satisfy lo < hi"));
            }
        }
        if let Some(sup) = &self.support {
            if sup.iter().any(|&i| i < 1 || i > p) {
                return Err(Error::invalid(format!(
                    "signal support index out of range 1..={p}"
                )));
            }
        }
        Ok(())
    }

    /// Instantiates the per-step sampler. Draw order is: for each step, the
    /// supported channels in ascending order — so two specs differing only
    /// in their bounds consume identical underlying uniform draws.
    fn sampler(&self, p: usize) -> SignalSampler<'_> {
        SignalSampler {
            spec: self,
            p,
            rng: SplitMix64::derive(self.seed, 0x7369676e),
            k: 0,
        }
    }
}

struct SignalSampler<'a> {
    spec: &'a SignalSpec,
    p: usize,
    rng: SplitMix64,
    k: usize,
}

impl SignalSampler<'_> {
    fn next(&mut self) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(self.p);
        match &self.spec.kind {
            SignalKind::Zero => {}
            SignalKind::Uniform { lo, hi } => match &self.spec.support {
                None => {
                    for i in 0..self.p {
                        v[i] = self.rng.uniform(*lo, *hi);
                    }
                }
                Some(sup) => {
                    for &i in sup {
                        v[i - 1] = self.rng.uniform(*lo, *hi);
                    }
                }
            },
            SignalKind::Samples { values } => {
                let row = values.get(self.k).ok_or_else(|| {
                    Error::invalid(format!("sample table ends before step {}", self.k))
                })?;
                if row.len() != self.p {
                    return Err(Error::dim("sample row length"));
                }
                for i in 0..self.p {
                    v[i] = row[i];
                }
                if let Some(sup) = &self.spec.support {
                    for i in 1..=self.p {
                        if !sup.contains(&i) && v[i - 1] != 0.0 {
                            return Err(Error::invalid(
                                "sample table writes outside the declared support",
                            ));
                        }
                    }
                }
            }
        }
        self.k += 1;
        Ok(v)
    }
}

/// A simulated run: states, measured outputs, and the signal decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// States x(0..=K).
    pub x: Vec<DVector<f64>>,
    /// Measured outputs y(0..=K) = C x + m + a.
    pub y: Vec<DVector<f64>>,
    /// Noise m(0..=K).
    pub m: Vec<DVector<f64>>,
    /// Attack a(0..=K).
    pub a: Vec<DVector<f64>>,
    /// Inputs u(0..=K) (u(K) is recorded but unused by the final state).
    pub u: Vec<DVector<f64>>,
}

impl Trace {
    /// Horizon K (number of steps; vectors have length K+1).
    pub fn horizon(&self) -> usize {
        self.x.len() - 1
    }
}

/// Simulates the plant for `horizon` steps from `x0`.
///
/// `u_seq` is an optional per-step input table (defaults to zero input).
/// Deterministic: the same arguments produce a bitwise-identical trace.
pub fn simulate_plant(
    model: &PlantModel,
    x0: &DVector<f64>,
    u_seq: Option<&[DVector<f64>]>,
    noise: &SignalSpec,
    attack: &SignalSpec,
    horizon: usize,
) -> Result<Trace> {
    let n = model.n();
    let p = model.p();
    if x0.len() != n {
        return Err(Error::dim(format!("x0 length {} ≠ n = {}", x0.len(), n)));
    }
    noise.validate(p)?;
    attack.validate(p)?;
    let n_u = match &model.rho {
        Rho::Zero => 0,
        Rho::LinearInput { b } => b.first().map_or(0, Vec::len),
    };
    let u_at = |k: usize| -> Result<DVector<f64>> {
        match u_seq {
            None => Ok(DVector::zeros(n_u)),
            Some(seq) => seq
                .get(k)
                .cloned()
                .ok_or_else(|| Error::dim(format!("input sequence ends before step {k}"))),
        }
    };

    let mut noise_s = noise.sampler(p);
    let mut attack_s = attack.sampler(p);

    let mut tr = Trace {
        x: Vec::with_capacity(horizon + 1),
        y: Vec::with_capacity(horizon + 1),
        m: Vec::with_capacity(horizon + 1),
        a: Vec::with_capacity(horizon + 1),
        u: Vec::with_capacity(horizon + 1),
    };

    let mut x = x0.clone();
    for k in 0..=horizon {
        let m = noise_s.next()?;
        let a = attack_s.next()?;
        let u = u_at(k)?;
        let y = &model.c * &x + &m + &a;
        tr.x.push(x.clone());
        tr.y.push(y);
        tr.m.push(m);
        tr.a.push(a);
        tr.u.push(u.clone());
        if k < horizon {
            x = model.step(&x, &u)?;
        }
    }
    Ok(tr)
}

/// Writes a trace as CSV with header `k,x1..xn,y1..yp,a1..ap,m1..mp`.
pub fn write_trace_csv<W: std::io::Write>(trace: &Trace, out: W) -> Result<()> {
    let n = trace.x[0].len();
    let p = trace.y[0].len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=p).map(|i| format!("y{i}")));
    header.extend((1..=p).map(|i| format!("a{i}")));
    header.extend((1..=p).map(|i| format!("m{i}")));
    w.write_record(&header)?;
    for k in 0..trace.x.len() {
        let mut rec = vec![k.to_string()];
        rec.extend(trace.x[k].iter().map(|v| format!("{v:.17e}")));
        rec.extend(trace.y[k].iter().map(|v| format!("{v:.17e}")));
        rec.extend(trace.a[k].iter().map(|v| format!("{v:.17e}")));
        rec.extend(trace.m[k].iter().map(|v| format!("{v:.17e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace back from the CSV schema written by [`write_trace_csv`].
///
/// Inputs are not part of the schema, so `u` comes back as zeros.
pub fn read_trace_csv<R: std::io::Read>(n: usize, p: usize, input: R) -> Result<Trace> {
    let mut r = csv::Reader::from_reader(input);
    let expected = 1 + n + 3 * p;
    let mut tr = Trace {
        x: Vec::new(),
        y: Vec::new(),
        m: Vec::new(),
        a: Vec::new(),
        u: Vec::new(),
    };
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != expected {
            return Err(Error::dim(format!(
                "trace row has {} fields, expected {expected}",
                rec.len()
            )));
        }
        let nums: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|e| Error::invalid(e.to_string())))
            .collect::<Result<_>>()?;
        tr.x.push(DVector::from_column_slice(&nums[0..n]));
        tr.y.push(DVector::from_column_slice(&nums[n..n + p]));
        tr.a.push(DVector::from_column_slice(&nums[n + p..n + 2 * p]));
        tr.m.push(DVector::from_column_slice(&nums[n + 2 * p..n + 3 * p]));
        tr.u.push(DVector::zeros(0));
    }
    if tr.x.is_empty() {
        return Err(Error::invalid("trace CSV has no data rows"));
    }
    Ok(tr)
}
