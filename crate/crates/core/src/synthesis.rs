//! Observer-gain synthesis: a decay-rate line search over convex
//! matrix-inequality programs.
//!
//! For a sensor subset J with stacked output matrix `C_J`, the observer
//!
//! ```text
//! x̂⁺ = A x̂ + G f(H x̂ + K (C_J x̂ − y_J)) + L (C_J x̂ − y_J) + ρ(u)
//! ```
//!
//! has estimation-error dynamics driven by the measurement disturbance and
//! by the increment of the monotone nonlinearity. With `V(e) = eᵀPe`,
//! a decay parameter `c₃ ∈ (0, 1)`, and the incremental sector bound of
//! each nonlinearity component encoded through a multiplier scaled by `κ`,
//! the dissipation condition
//!
//! ```text
//! V(e⁺) ≤ (1 − c₃) V(e) + c₃ μ₁ |m|²
//! ```
//!
//! becomes one affine matrix inequality in `(P, Y, Y₂, κ, μ₁)` after the
//! substitutions `Y = P L` and `Y₂ = κ K`. A second inequality
//! `[[P, I], [I, μI]] ⪰ 0` turns `1/λmin(P)` into the variable `μ`, so the
//! ISS gain `γ = √(μ μ₁)` is minimized by the linear objective `μ + μ₁`
//! (the program is scale-invariant along `t·(P, Y, Y₂, κ, μ₁)`, `μ/t`, so
//! the optimum lands at `μ = μ₁ = γ`). Unrolling the dissipation yields
//!
//! ```text
//! |e(k)| ≤ c λᵏ |e(0)| + γ max_{j ≤ k} |m(j)|,
//! c = √(λmax(P)/λmin(P)),   λ = √(1 − c₃)
//! ```
//!
//! which is exactly the certificate attached to every design.
//!
//! `c₃` itself is not a program variable; [`synthesize`] scans a coarse
//! grid, keeps the feasible point with the smallest certified gain, and
//! refines around it with a ten-times finer step (clamped to the grid
//! bounds). Gain ties within [`GAMMA_TIE_TOL`] go to the smaller `c₃`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::matio;
use crate::model::{PlantModel, SensorSubset};
use crate::rng::SplitMix64;
use crate::sdp::{self, SdpBlock, SdpOptions, SdpProblem};
use crate::Result;

/// Strictification of the main inequality: `main + εI ⪯ 0`. Keeps accepted
/// solutions strictly inside the cone even though the solver tolerates a
/// small residual.
pub const STRICT_EPS: f64 = 1e-6;

/// Floor for `P ⪰ εI` and the scalar multipliers `κ, μ, μ₁ ≥ ε`.
pub const FLOOR_EPS: f64 = 1e-6;

/// Smallest and largest decay parameters on the search grid.
pub const C3_MIN: f64 = 0.05;
pub const C3_MAX: f64 = 0.95;

/// Gain levels closer than this count as a tie; the smaller `c₃` wins.
pub const GAMMA_TIE_TOL: f64 = 1e-9;

/// Settings for the decay-rate search.
#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    /// Coarse grid step over `c₃` (the CLI's `--grid-step`).
    pub coarse_step: f64,
    /// Refinement step around the coarse winner.
    pub refine_step: f64,
    /// Solver settings shared by every grid point.
    pub sdp: SdpOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            coarse_step: 0.05,
            refine_step: 0.005,
            sdp: SdpOptions::default(),
        }
    }
}

/// The ISS certificate attached to a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Transient amplification `√(λmax(P)/λmin(P))`.
    pub c: f64,
    /// Decay base `√(1 − c₃)`.
    pub lambda: f64,
    /// ISS gain `√(μ μ₁)` from the disturbance to the error norm.
    pub gamma: f64,
}

/// A synthesized observer for one sensor subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDesign {
    /// 1-based sensor indices the observer listens to.
    pub subset: Vec<usize>,
    /// Decay parameter the gains were synthesized at.
    pub c3: f64,
    /// Output-injection gain L (n × |J|).
    pub l: DMatrix<f64>,
    /// Innovation gain K inside the nonlinearity argument (r × |J|).
    pub k: DMatrix<f64>,
    /// Lyapunov matrix P (n × n, positive definite).
    pub p: DMatrix<f64>,
    /// Multiplier scale κ.
    pub kappa: f64,
    /// Inverse-eigenvalue bound: `P ⪰ (1/μ) I`.
    pub mu: f64,
    /// Disturbance supply rate coefficient.
    pub mu1: f64,
    /// Slope bound the multiplier was built with (largest component bound).
    pub slope_bound: f64,
    /// ISS constants implied by the pieces above.
    pub certificate: Certificate,
}

#[derive(Serialize, Deserialize)]
struct DesignJson {
    subset: Vec<usize>,
    c3: f64,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    l: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    kappa: f64,
    mu: f64,
    mu1: f64,
    slope_bound: f64,
    certificate: Certificate,
}

impl ObserverDesign {
    /// Serializes the design (row-major matrices).
    pub fn to_json(&self) -> Result<String> {
        let mirror = DesignJson {
            subset: self.subset.clone(),
            c3: self.c3,
            k: matio::to_rows(&self.k),
            l: matio::to_rows(&self.l),
            p: matio::to_rows(&self.p),
            kappa: self.kappa,
            mu: self.mu,
            mu1: self.mu1,
            slope_bound: self.slope_bound,
            certificate: self.certificate,
        };
        Ok(serde_json::to_string_pretty(&mirror)?)
    }

    /// Parses a design written by [`ObserverDesign::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        let mirror: DesignJson = serde_json::from_str(text)?;
        Ok(ObserverDesign {
            subset: mirror.subset,
            c3: mirror.c3,
            l: matio::from_rows(&mirror.l)?,
            k: matio::from_rows(&mirror.k)?,
            p: matio::from_rows(&mirror.p)?,
            kappa: mirror.kappa,
            mu: mirror.mu,
            mu1: mirror.mu1,
            slope_bound: mirror.slope_bound,
            certificate: mirror.certificate,
        })
    }
}

/// Packing of the decision variables into one flat vector:
/// lower triangle of P (column-major), then Y and Y₂ column-major,
/// then κ, μ, μ₁.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    ny: usize,
    r: usize,
}

/// The decision variables in matrix form.
struct Unpacked {
    p: DMatrix<f64>,
    y: DMatrix<f64>,
    y2: DMatrix<f64>,
    kappa: f64,
    mu: f64,
    mu1: f64,
}

impl Layout {
    fn p_len(self) -> usize {
        self.n * (self.n + 1) / 2
    }

    fn len(self) -> usize {
        self.p_len() + self.n * self.ny + self.r * self.ny + 3
    }

    fn mu_index(self) -> usize {
        self.p_len() + self.n * self.ny + self.r * self.ny + 1
    }

    fn mu1_index(self) -> usize {
        self.mu_index() + 1
    }

    fn unpack(self, z: &DVector<f64>) -> Unpacked {
        let mut p = DMatrix::zeros(self.n, self.n);
        let mut k = 0;
        for j in 0..self.n {
            for i in j..self.n {
                p[(i, j)] = z[k];
                p[(j, i)] = z[k];
                k += 1;
            }
        }
        let y = DMatrix::from_column_slice(self.n, self.ny, &z.as_slice()[k..k + self.n * self.ny]);
        k += self.n * self.ny;
        let y2 =
            DMatrix::from_column_slice(self.r, self.ny, &z.as_slice()[k..k + self.r * self.ny]);
        k += self.r * self.ny;
        Unpacked {
            p,
            y,
            y2,
            kappa: z[k],
            mu: z[k + 1],
            mu1: z[k + 2],
        }
    }
}

/// Writes block `b` at rows `r0..` and columns `c0..` of `mat`, mirroring it
/// across the diagonal so the result stays symmetric.
fn put(mat: &mut DMatrix<f64>, r0: usize, c0: usize, b: &DMatrix<f64>) {
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            mat[(r0 + i, c0 + j)] = b[(i, j)];
            mat[(c0 + j, r0 + i)] = b[(i, j)];
        }
    }
}

/// The main dissipation inequality as a symmetric matrix (to be ⪯ 0),
/// with rows/columns ordered error | state | disturbance | increment.
fn main_matrix(model: &PlantModel, cj: &DMatrix<f64>, c3: f64, u: &Unpacked) -> DMatrix<f64> {
    let (n, r) = (model.n(), model.r());
    let ny = cj.nrows();
    let dim = 2 * n + ny + r;
    let (e0, x0, m0, f0) = (0, n, 2 * n, 2 * n + ny);
    let mut mat = DMatrix::zeros(dim, dim);
    let pa_yc = &u.p * &model.a + &u.y * cj;
    put(&mut mat, e0, e0, &(-&u.p));
    put(&mut mat, e0, x0, &pa_yc);
    put(&mut mat, e0, m0, &(-&u.y));
    put(&mut mat, e0, f0, &(&u.p * &model.g));
    put(&mut mat, x0, x0, &(&u.p * (c3 - 1.0)));
    put(
        &mut mat,
        x0,
        f0,
        &(model.h.transpose() * u.kappa + cj.transpose() * u.y2.transpose()),
    );
    for i in 0..ny {
        mat[(m0 + i, m0 + i)] = -c3 * u.mu1;
    }
    put(&mut mat, m0, f0, &(-u.y2.transpose()));
    for (i, fi) in model.f.iter().enumerate() {
        mat[(f0 + i, f0 + i)] = -2.0 * u.kappa / fi.slope_bound();
    }
    mat
}

/// The eigenvalue-coupling inequality `[[P, I], [I, μI]] ⪰ 0`.
fn coupling_matrix(n: usize, u: &Unpacked) -> DMatrix<f64> {
    let mut mat = DMatrix::zeros(2 * n, 2 * n);
    put(&mut mat, 0, 0, &u.p);
    for i in 0..n {
        mat[(i, n + i)] = 1.0;
        mat[(n + i, i)] = 1.0;
        mat[(n + i, n + i)] = u.mu;
    }
    mat
}

/// Builds the full program for one subset and decay parameter. Every block
/// is affine in the packed variables, so coefficient matrices are recovered
/// exactly by probing unit vectors.
fn assemble_program(
    model: &PlantModel,
    cj: &DMatrix<f64>,
    c3: f64,
) -> Result<(SdpProblem, Layout)> {
    for (i, fi) in model.f.iter().enumerate() {
        if fi.slope_bound() <= 0.0 {
            return Err(Error::invalid(format!(
                "nonlinearity component {i} has slope bound {}, need > 0 to build the multiplier",
                fi.slope_bound()
            )));
        }
    }
    if !(c3 > 0.0 && c3 < 1.0) {
        return Err(Error::invalid(format!("decay parameter {c3} outside (0, 1)")));
    }
    let layout = Layout {
        n: model.n(),
        ny: cj.nrows(),
        r: model.r(),
    };
    let m = layout.len();
    let probe = |f: &dyn Fn(&Unpacked) -> DMatrix<f64>| -> SdpBlock {
        let f0 = f(&layout.unpack(&DVector::zeros(m)));
        let fs = (0..m)
            .map(|i| {
                let mut e = DVector::zeros(m);
                e[i] = 1.0;
                f(&layout.unpack(&e)) - &f0
            })
            .collect();
        SdpBlock { f0, fs }
    };

    let dim_main = 2 * layout.n + layout.ny + layout.r;
    let blocks = vec![
        // main + εI ⪯ 0, stated as −main − εI ⪰ 0.
        probe(&|u| -main_matrix(model, cj, c3, u) - DMatrix::identity(dim_main, dim_main) * STRICT_EPS),
        probe(&|u| {
            coupling_matrix(layout.n, u) - DMatrix::identity(2 * layout.n, 2 * layout.n) * STRICT_EPS
        }),
        probe(&|u| &u.p - DMatrix::identity(layout.n, layout.n) * FLOOR_EPS),
        probe(&|u| DMatrix::from_element(1, 1, u.kappa - FLOOR_EPS)),
        probe(&|u| DMatrix::from_element(1, 1, u.mu - FLOOR_EPS)),
        probe(&|u| DMatrix::from_element(1, 1, u.mu1 - FLOOR_EPS)),
    ];
    let mut objective = vec![0.0; m];
    objective[layout.mu_index()] = 1.0;
    objective[layout.mu1_index()] = 1.0;
    Ok((SdpProblem { objective, blocks }, layout))
}

/// Solves one grid point; `Ok(None)` means infeasible at this `c₃`.
fn solve_grid_point(
    model: &PlantModel,
    subset: &SensorSubset,
    c3: f64,
    sdp_opts: &SdpOptions,
    warm: Option<&DVector<f64>>,
) -> Result<Option<(ObserverDesign, DVector<f64>)>> {
    let (prob, layout) = assemble_program(model, &subset.c_j, c3)?;
    let opts = SdpOptions {
        warm_start: warm.cloned(),
        ..sdp_opts.clone()
    };
    let sol = sdp::solve(&prob, &opts)?;
    if !sol.is_optimal() {
        return Ok(None);
    }
    let u = layout.unpack(&sol.z);
    let design = recover_design(model, subset, c3, &u)?;
    Ok(Some((design, sol.z)))
}

fn recover_design(
    model: &PlantModel,
    subset: &SensorSubset,
    c3: f64,
    u: &Unpacked,
) -> Result<ObserverDesign> {
    let chol = u
        .p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("recovered Lyapunov matrix is not positive definite".into()))?;
    let l = chol.solve(&u.y);
    if u.kappa <= 0.0 {
        return Err(Error::Solver(format!(
            "recovered multiplier scale κ = {} is not positive",
            u.kappa
        )));
    }
    let k = &u.y2 / u.kappa;
    let eigs = u.p.clone().symmetric_eigen().eigenvalues;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &lam in eigs.iter() {
        lo = lo.min(lam);
        hi = hi.max(lam);
    }
    Ok(ObserverDesign {
        subset: subset.indices.clone(),
        c3,
        l,
        k,
        p: u.p.clone(),
        kappa: u.kappa,
        mu: u.mu,
        mu1: u.mu1,
        slope_bound: model.slope_bound(),
        certificate: Certificate {
            c: (hi / lo).sqrt(),
            lambda: (1.0 - c3).sqrt(),
            gamma: (u.mu * u.mu1).sqrt(),
        },
    })
}

/// Synthesizes gains for one `c₃` without any grid search.
/// `Ok(None)` means the program is infeasible at this decay rate.
pub fn design_at(
    model: &PlantModel,
    indices: &[usize],
    c3: f64,
    sdp_opts: &SdpOptions,
) -> Result<Option<ObserverDesign>> {
    let subset = model.subset(indices)?;
    Ok(solve_grid_point(model, &subset, c3, sdp_opts, None)?.map(|(d, _)| d))
}

fn is_better(gamma: f64, c3: f64, best_gamma: f64, best_c3: f64) -> bool {
    gamma < best_gamma - GAMMA_TIE_TOL
        || ((gamma - best_gamma).abs() <= GAMMA_TIE_TOL && c3 < best_c3)
}

/// Runs the full decay-rate search for one sensor subset and returns the
/// minimum-gain design. Grid points solve in parallel.
pub fn synthesize(
    model: &PlantModel,
    indices: &[usize],
    opts: &SynthesisOptions,
) -> Result<ObserverDesign> {
    if !(opts.coarse_step > 0.0 && opts.refine_step > 0.0) {
        return Err(Error::invalid("grid steps must be positive"));
    }
    let subset = model.subset(indices)?;

    let mut coarse_grid = Vec::new();
    let mut k = 0usize;
    loop {
        let c3 = C3_MIN + k as f64 * opts.coarse_step;
        if c3 > C3_MAX + 1e-9 {
            break;
        }
        coarse_grid.push(c3.min(C3_MAX));
        k += 1;
    }

    // The coarse pass runs sequentially so each point can warm-start from
    // its neighbor's solution — adjacent decay rates have nearby optima,
    // which cuts the solve cost far more than per-point parallelism would.
    let mut best: Option<(ObserverDesign, DVector<f64>)> = None;
    let mut chain: Option<DVector<f64>> = None;
    for &c3 in &coarse_grid {
        if let Some((design, z)) = solve_grid_point(model, &subset, c3, &opts.sdp, chain.as_ref())? {
            let replace = match &best {
                None => true,
                Some((b, _)) => is_better(design.certificate.gamma, design.c3, b.certificate.gamma, b.c3),
            };
            chain = Some(z.clone());
            if replace {
                best = Some((design, z));
            }
        }
    }
    let (mut best_design, warm) = best.ok_or_else(|| Error::Infeasible {
        subset: subset.label(),
        detail: format!(
            "no feasible decay rate in [{C3_MIN}, {C3_MAX}] with step {}",
            opts.coarse_step
        ),
    })?;

    // Refine one coarse step around the winner, clamped to the grid bounds.
    let steps = (opts.coarse_step / opts.refine_step).round() as i64;
    let mut refine_grid: Vec<f64> = Vec::new();
    for j in -steps..=steps {
        let c3 = (best_design.c3 + j as f64 * opts.refine_step).clamp(C3_MIN, C3_MAX);
        if refine_grid.iter().all(|&g| (g - c3).abs() > 1e-12) {
            refine_grid.push(c3);
        }
    }
    refine_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let refined: Vec<(f64, Option<(ObserverDesign, DVector<f64>)>)> = refine_grid
        .par_iter()
        .map(|&c3| Ok((c3, solve_grid_point(model, &subset, c3, &opts.sdp, Some(&warm))?)))
        .collect::<Result<_>>()?;

    for (_, out) in refined {
        if let Some((design, _)) = out {
            if is_better(
                design.certificate.gamma,
                design.c3,
                best_design.certificate.gamma,
                best_design.c3,
            ) {
                best_design = design;
            }
        }
    }
    Ok(best_design)
}

/// Independent checks of a finished design against its model.
#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    /// `−λmax(main)` with the design's gains substituted back; nonnegative
    /// means the dissipation inequality holds (the synthesis enforces a
    /// strict margin of [`STRICT_EPS`]).
    pub lmi_margin: f64,
    /// `λmin` of the eigenvalue-coupling inequality.
    pub coupling_margin: f64,
    /// Smallest eigenvalue of P.
    pub p_min_eigenvalue: f64,
    /// Worst sampled value of `V(e⁺) − (1 − c₃)V(e) − c₃ μ₁ |m|²`
    /// (must stay ≤ 0 up to rounding).
    pub lyapunov_worst: f64,
    /// Worst sampled slack of the incremental multiplier inequality
    /// (must stay ≥ 0 up to rounding).
    pub qc_worst: f64,
}

/// Acceptance thresholds for [`DesignReport::ok`].
const REPORT_LYAPUNOV_TOL: f64 = 1e-9;
const REPORT_QC_TOL: f64 = 1e-12;

impl DesignReport {
    /// True when every check passed its threshold.
    pub fn ok(&self) -> bool {
        self.lmi_margin >= 0.0
            && self.coupling_margin >= 0.0
            && self.p_min_eigenvalue > 0.0
            && self.lyapunov_worst <= REPORT_LYAPUNOV_TOL
            && self.qc_worst >= -REPORT_QC_TOL
    }
}

/// Re-derives the design's inequalities from its stored gains and samples
/// the dissipation and multiplier properties on random points.
pub fn verify_design(
    model: &PlantModel,
    design: &ObserverDesign,
    samples: usize,
    seed: u64,
) -> Result<DesignReport> {
    let subset = model.subset(&design.subset)?;
    let cj = &subset.c_j;
    let ny = cj.nrows();

    // Substitute Y = P L and Y₂ = κ K back into the inequalities.
    let u = Unpacked {
        p: design.p.clone(),
        y: &design.p * &design.l,
        y2: &design.k * design.kappa,
        kappa: design.kappa,
        mu: design.mu,
        mu1: design.mu1,
    };
    let main = main_matrix(model, cj, design.c3, &u);
    let lmi_margin = sdp::min_eigenvalue(&(-main));
    let coupling_margin = sdp::min_eigenvalue(&coupling_matrix(model.n(), &u));
    let p_min_eigenvalue = sdp::min_eigenvalue(&design.p);

    let mut rng = SplitMix64::derive(seed, 0x76657269);
    let n = model.n();
    let mut lyapunov_worst = f64::NEG_INFINITY;
    let mut qc_worst = f64::INFINITY;
    for _ in 0..samples {
        let x = DVector::from_fn(n, |_, _| rng.uniform(-5.0, 5.0));
        let e = DVector::from_fn(n, |_, _| rng.uniform(-2.0, 2.0));
        let m = DVector::from_fn(ny, |_, _| rng.uniform(-1.0, 1.0));
        let x_hat = &x + &e;
        // Innovation uses only the subset's sensors.
        let innov = cj * &x_hat - (cj * &x + &m);
        let q = &model.h * &x;
        let q_hat = &model.h * &x_hat + &design.k * &innov;
        let df = model.f_eval(&q_hat) - model.f_eval(&q);
        let dq = &q_hat - &q;

        let e_next = (&model.a + &design.l * cj) * &e - &design.l * &m + &model.g * &df;
        let v = (e.transpose() * &design.p * &e)[(0, 0)];
        let v_next = (e_next.transpose() * &design.p * &e_next)[(0, 0)];
        let supply = design.c3 * design.mu1 * m.norm_squared();
        lyapunov_worst = lyapunov_worst.max(v_next - (1.0 - design.c3) * v - supply);

        let mut qc = 2.0 * design.kappa * dq.dot(&df);
        for (i, fi) in model.f.iter().enumerate() {
            qc -= 2.0 * design.kappa / fi.slope_bound() * df[i] * df[i];
        }
        qc_worst = qc_worst.min(qc);
    }
    Ok(DesignReport {
        lmi_margin,
        coupling_margin,
        p_min_eigenvalue,
        lyapunov_worst,
        qc_worst,
    })
}
