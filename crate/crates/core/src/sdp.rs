//! A small dense semidefinite-program solver.
//!
//! Problems are stated in inequality form over a variable vector
//! `z ∈ R^m`:
//!
//! ```text
//! minimize    cᵀ z
//! subject to  F₀ᵇ + z₁ F₁ᵇ + … + z_m F_mᵇ ⪰ 0   for every block b
//! ```
//!
//! All constraint data are dense symmetric matrices. Scalar bounds are
//! expressed as 1×1 blocks.
//!
//! The solver answers the feasibility question "is there a `z` with
//! `cᵀz ≤ τ`?" by Douglas–Rachford splitting between two sets in the
//! lifted space `(z, X)`, where `X` carries one symmetric matrix per block:
//!
//! * the affine set `{ X_b = F₀ᵇ + Σ z_i F_iᵇ }` — a linear least-squares
//!   projection whose normal matrix is factored once per problem, and
//! * the product of the positive-semidefinite cones with the half-space
//!   `cᵀz ≤ τ` — eigenvalue clamping plus a rank-one correction.
//!
//! The distance between the two projections bounds every constraint
//! violation (the svec embedding is an isometry, so a Frobenius gap bounds
//! the spectral one), which gives a feasibility certificate without extra
//! eigendecompositions. Wrapping that oracle in a descent over the level
//! `τ` (probe down geometrically, then bisect) yields the minimum. The
//! method needs no feasible starting point, handles warm starts naturally,
//! and its per-step cost is a Cholesky back-solve plus one symmetric
//! eigendecomposition per block, which suits the small, repeatedly
//! re-solved programs produced by observer synthesis.
//!
//! The solver is heuristic about infeasibility: a level is declared
//! unreachable when the projection residual stops improving. It reports
//! [`SdpStatus::Infeasible`] without a dual certificate, and an objective
//! that keeps improving through every probe level ends the search with
//! [`SdpStatus::MaxIterations`] and a diagnostic.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::matio;
use crate::Result;

/// Default residual below which a lifted point counts as feasible.
pub const DEFAULT_TOL_FEAS: f64 = 1e-7;

/// Default relative width of the final objective bracket.
pub const DEFAULT_TOL_OBJ: f64 = 1e-6;

/// Default projection-iteration budget per level.
pub const DEFAULT_MAX_ITER: usize = 50_000;

/// Iterations between stall checks inside one level.
const STALL_WINDOW: usize = 500;

/// A level stalls when the best residual fails to improve by at least this
/// factor over a window.
const STALL_IMPROVEMENT: f64 = 0.98;

/// Probe levels tried (with geometric step growth) before concluding the
/// objective is unbounded below.
const MAX_PROBE_LEVELS: usize = 60;

/// Hard cap on bisection levels (the bracket halves each round, so this is
/// never the binding limit in practice).
const MAX_BISECT_LEVELS: usize = 256;

/// Symmetry slack accepted by [`SdpProblem::validate`], relative to the
/// largest entry.
const SYMMETRY_TOL: f64 = 1e-9;

/// One affine-matrix constraint `F₀ + Σ z_i F_i ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpBlock {
    /// Constant term F₀ (symmetric, d×d).
    pub f0: DMatrix<f64>,
    /// Coefficient matrices F₁ … F_m, one per variable, each symmetric d×d.
    pub fs: Vec<DMatrix<f64>>,
}

impl SdpBlock {
    /// Block dimension d.
    pub fn dim(&self) -> usize {
        self.f0.nrows()
    }

    /// Evaluates `F₀ + Σ z_i F_i`.
    pub fn value(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.f0.clone();
        for (zi, fi) in z.iter().zip(&self.fs) {
            s += fi * *zi;
        }
        s
    }
}

/// A complete program: objective plus PSD blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    /// Objective coefficients c (length m). All-zero means pure feasibility.
    pub objective: Vec<f64>,
    /// Constraint blocks.
    pub blocks: Vec<SdpBlock>,
}

/// Termination state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    /// A feasible point was found and the objective bracket closed.
    Optimal,
    /// The feasibility search stalled at a positive residual.
    Infeasible,
    /// An iteration or level budget ran out first (see the diagnostic).
    MaxIterations,
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Final iterate. Only meaningful as a solution when `status` is
    /// [`SdpStatus::Optimal`].
    pub z: DVector<f64>,
    /// `cᵀz` at the final iterate (NaN when no feasible point was found).
    pub objective: f64,
    /// Termination state.
    pub status: SdpStatus,
    /// Smallest eigenvalue over all blocks at the final iterate; values
    /// down to `-tol_feas` are expected for accepted solutions.
    pub psd_margin: f64,
    /// Total projection iterations across all levels.
    pub iterations: usize,
    /// Human-readable detail for non-optimal outcomes.
    pub diagnostic: Option<String>,
}

impl SdpSolution {
    /// True when the solver closed its objective bracket on a feasible point.
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

/// Solver knobs; [`Default`] gives the documented values.
#[derive(Debug, Clone)]
pub struct SdpOptions {
    /// Residual threshold for accepting a point as feasible.
    pub tol_feas: f64,
    /// Relative objective-bracket width at which bisection stops.
    pub tol_obj: f64,
    /// Projection-iteration budget per level.
    pub max_iter: usize,
    /// Starting point for the first level (defaults to the origin). Later
    /// levels always warm-start from the best feasible point so far.
    pub warm_start: Option<DVector<f64>>,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            tol_feas: DEFAULT_TOL_FEAS,
            tol_obj: DEFAULT_TOL_OBJ,
            max_iter: DEFAULT_MAX_ITER,
            warm_start: None,
        }
    }
}

impl SdpProblem {
    /// Number of variables m.
    pub fn nvars(&self) -> usize {
        self.objective.len()
    }

    /// Checks dimensions, symmetry, and finiteness of all data.
    pub fn validate(&self) -> Result<()> {
        let m = self.nvars();
        if self.blocks.is_empty() {
            return Err(Error::invalid("program has no constraint blocks"));
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            let d = blk.f0.nrows();
            if blk.f0.ncols() != d {
                return Err(Error::dim(format!("block {b}: F0 is not square")));
            }
            if blk.fs.len() != m {
                return Err(Error::dim(format!(
                    "block {b}: {} coefficient matrices for {m} variables",
                    blk.fs.len()
                )));
            }
            for (i, f) in std::iter::once(&blk.f0).chain(blk.fs.iter()).enumerate() {
                if f.nrows() != d || f.ncols() != d {
                    return Err(Error::dim(format!("block {b}, matrix {i}: wrong shape")));
                }
                let mut max_abs: f64 = 0.0;
                for v in f.iter() {
                    if !v.is_finite() {
                        return Err(Error::invalid(format!(
                            "block {b}, matrix {i}: non-finite entry"
                        )));
                    }
                    max_abs = max_abs.max(v.abs());
                }
                let skew = (f - f.transpose()).abs().max();
                if skew > SYMMETRY_TOL * (1.0 + max_abs) {
                    return Err(Error::invalid(format!(
                        "block {b}, matrix {i}: not symmetric (skew {skew:.3e})"
                    )));
                }
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("objective has a non-finite entry"));
        }
        Ok(())
    }

    /// Serializes the program as JSON (row-major matrices).
    pub fn to_json(&self) -> Result<String> {
        let mirror = ProblemJson {
            objective: self.objective.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockJson {
                    f0: matio::to_rows(&b.f0),
                    fs: b.fs.iter().map(matio::to_rows).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&mirror)?)
    }

    /// Parses a program from the JSON written by [`SdpProblem::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        let mirror: ProblemJson = serde_json::from_str(text)?;
        let blocks = mirror
            .blocks
            .iter()
            .map(|b| {
                Ok(SdpBlock {
                    f0: matio::from_rows(&b.f0)?,
                    fs: b
                        .fs
                        .iter()
                        .map(|f| matio::from_rows(f))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        let prob = SdpProblem {
            objective: mirror.objective,
            blocks,
        };
        prob.validate()?;
        Ok(prob)
    }
}

#[derive(Serialize, Deserialize)]
struct BlockJson {
    f0: Vec<Vec<f64>>,
    fs: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct ProblemJson {
    objective: Vec<f64>,
    blocks: Vec<BlockJson>,
}

/// Projects a matrix onto the PSD cone in the Frobenius norm: symmetrize,
/// then clamp negative eigenvalues to zero.
pub fn psd_project(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (&rebuilt + rebuilt.transpose()) * 0.5
}

/// Smallest eigenvalue of (the symmetric part of) a matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Length of the scaled lower-triangle vectorization of a d×d matrix.
fn svec_dim(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Scaled vectorization: lower triangle, column-major, off-diagonal entries
/// multiplied by √2 so that `‖svec(X)‖₂ = ‖X‖_F` for symmetric X.
fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let d = m.nrows();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut out = DVector::zeros(svec_dim(d));
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            out[k] = if i == j { m[(i, j)] } else { sqrt2 * m[(i, j)] };
            k += 1;
        }
    }
    out
}

/// Inverse of [`svec`].
fn smat(v: &DVector<f64>, d: usize) -> DMatrix<f64> {
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = DMatrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            let val = if i == j { v[k] } else { inv_sqrt2 * v[k] };
            out[(i, j)] = val;
            out[(j, i)] = val;
            k += 1;
        }
    }
    out
}

/// Clamps a block (given in svec form) onto the PSD cone and reports its
/// smallest eigenvalue before clamping.
fn clamp_svec(v: &DVector<f64>, d: usize) -> (DVector<f64>, f64) {
    if d == 1 {
        let lam = v[0];
        return (DVector::from_element(1, lam.max(0.0)), lam);
    }
    let eig = smat(v, d).symmetric_eigen();
    let lam_min = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let mut vals = eig.eigenvalues;
    for lam in vals.iter_mut() {
        if *lam < 0.0 {
            *lam = 0.0;
        }
    }
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (svec(&rebuilt), lam_min)
}

/// Outcome of one level-feasibility attempt.
enum Attempt {
    Feasible {
        z: DVector<f64>,
        obj: f64,
        iters: usize,
    },
    Stalled {
        z: DVector<f64>,
        iters: usize,
        residual: f64,
    },
    Exhausted {
        z: DVector<f64>,
        iters: usize,
        residual: f64,
    },
}

/// Precomputed projection machinery for one problem.
struct LevelSolver {
    c: DVector<f64>,
    c_norm2: f64,
    dims: Vec<usize>,
    /// Per block: svec of F₀.
    f0: Vec<DVector<f64>>,
    /// Per block: matrix whose i-th column is svec(F_i).
    a: Vec<DMatrix<f64>>,
    /// Cholesky factor of I + Σ AᵇᵀAᵇ.
    chol: Cholesky<f64, Dyn>,
}

impl LevelSolver {
    fn new(prob: &SdpProblem) -> Result<Self> {
        let m = prob.nvars();
        let dims: Vec<usize> = prob.blocks.iter().map(SdpBlock::dim).collect();
        let mut f0 = Vec::with_capacity(prob.blocks.len());
        let mut a = Vec::with_capacity(prob.blocks.len());
        let mut gram = DMatrix::identity(m, m);
        for blk in &prob.blocks {
            let rows = svec_dim(blk.dim());
            let mut ab = DMatrix::zeros(rows, m);
            for (i, fi) in blk.fs.iter().enumerate() {
                ab.set_column(i, &svec(fi));
            }
            gram += ab.transpose() * &ab;
            f0.push(svec(&blk.f0));
            a.push(ab);
        }
        let chol = Cholesky::new(gram)
            .ok_or_else(|| Error::Solver("projection normal matrix is not positive definite".into()))?;
        let c = DVector::from_column_slice(&prob.objective);
        let c_norm2 = c.norm_squared();
        Ok(LevelSolver {
            c,
            c_norm2,
            dims,
            f0,
            a,
            chol,
        })
    }

    /// Smallest block eigenvalue at `z`.
    fn psd_margin(&self, z: &DVector<f64>) -> f64 {
        let mut margin = f64::INFINITY;
        for (b, d) in self.dims.iter().enumerate() {
            let s = &self.a[b] * z + &self.f0[b];
            let lam = if *d == 1 {
                s[0]
            } else {
                smat(&s, *d)
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |x, &y| x.min(y))
            };
            margin = margin.min(lam);
        }
        margin
    }

    /// Looks for a feasible point with `cᵀz ≤ τ` (τ may be +∞) by
    /// Douglas–Rachford splitting started from `z0`.
    ///
    /// The governing pair `(w_z, w_X)` is projected onto the affine graph
    /// (giving the consistent point `a`), the reflection `2a − w` is
    /// projected onto the cones and the half-space (giving `b`), and the
    /// step `w ← w + b − a` is taken. The gap `‖a − b‖` bounds both the
    /// smallest block eigenvalue at `a` and its half-space violation, so it
    /// doubles as the acceptance residual.
    fn attempt(&self, tau: f64, z0: &DVector<f64>, tol_feas: f64, max_iter: usize) -> Attempt {
        let nb = self.dims.len();
        // The half-space violation of `a` is bounded by ‖a_z − b_z‖·‖c‖.
        let gap_scale = self.c_norm2.sqrt().max(1.0);
        let mut w_z = z0.clone();
        let mut w_x: Vec<DVector<f64>> = (0..nb)
            .map(|b| {
                let s = &self.a[b] * &w_z + &self.f0[b];
                clamp_svec(&s, self.dims[b]).0
            })
            .collect();
        let mut a_x: Vec<DVector<f64>> = w_x.clone();
        let mut z = w_z.clone();
        let mut rhs = DVector::zeros(w_z.len());
        let mut best = f64::INFINITY;
        let mut checkpoint = f64::INFINITY;
        for it in 1..=max_iter {
            // Projection of w onto the affine graph: least squares in (z, X).
            rhs.copy_from(&w_z);
            for b in 0..nb {
                let diff = &w_x[b] - &self.f0[b];
                rhs.gemv_tr(1.0, &self.a[b], &diff, 1.0);
            }
            self.chol.solve_mut(&mut rhs);
            std::mem::swap(&mut z, &mut rhs);
            for b in 0..nb {
                a_x[b].copy_from(&self.f0[b]);
                a_x[b].gemv(1.0, &self.a[b], &z, 1.0);
            }
            let obj = self.c.dot(&z);

            // Project the reflection 2a − w onto the cones and half-space,
            // accumulating the gap ‖b − a‖ and the step w ← w + b − a.
            let mut gap2 = 0.0;
            for b in 0..nb {
                let refl = &a_x[b] * 2.0 - &w_x[b];
                let (clamped, _) = clamp_svec(&refl, self.dims[b]);
                gap2 += (&clamped - &a_x[b]).norm_squared();
                w_x[b] += &clamped - &a_x[b];
            }
            let mut b_z = &z * 2.0 - &w_z;
            if tau.is_finite() && self.c_norm2 > 0.0 {
                let excess = self.c.dot(&b_z) - tau;
                if excess > 0.0 {
                    b_z.axpy(-excess / self.c_norm2, &self.c, 1.0);
                }
            }
            gap2 += (&b_z - &z).norm_squared() * gap_scale * gap_scale;
            w_z += &b_z - &z;

            let residual = gap2.sqrt();
            if residual <= tol_feas {
                let over = if tau.is_finite() {
                    (obj - tau).max(0.0)
                } else {
                    0.0
                };
                if over <= tol_feas {
                    return Attempt::Feasible { z, obj, iters: it };
                }
            }
            best = best.min(residual);
            if it % STALL_WINDOW == 0 {
                if best > checkpoint * STALL_IMPROVEMENT {
                    return Attempt::Stalled {
                        z,
                        iters: it,
                        residual: best,
                    };
                }
                checkpoint = best;
            }
        }
        Attempt::Exhausted {
            z,
            iters: max_iter,
            residual: best,
        }
    }
}

/// Minimizes `cᵀz` over the PSD constraints by level-set descent.
///
/// Phase 1 finds any feasible point; the level `τ` is then probed downward
/// geometrically until a level fails, and the resulting bracket is bisected
/// to relative width `tol_obj`. Every accepted point satisfies all blocks
/// up to `tol_feas`.
pub fn solve(prob: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    prob.validate()?;
    let m = prob.nvars();
    let ls = LevelSolver::new(prob)?;
    let z0 = match &opts.warm_start {
        Some(z) => {
            if z.len() != m {
                return Err(Error::dim(format!(
                    "warm start has length {}, expected {m}",
                    z.len()
                )));
            }
            z.clone()
        }
        None => DVector::zeros(m),
    };
    let mut total = 0usize;

    // Phase 1: plain feasibility.
    let (mut z_best, mut hi) = match ls.attempt(f64::INFINITY, &z0, opts.tol_feas, opts.max_iter) {
        Attempt::Feasible { z, obj, iters } => {
            total += iters;
            (z, obj)
        }
        Attempt::Stalled { z, iters, residual } => {
            return Ok(SdpSolution {
                psd_margin: ls.psd_margin(&z),
                z,
                objective: f64::NAN,
                status: SdpStatus::Infeasible,
                iterations: total + iters,
                diagnostic: Some(format!(
                    "feasibility search stalled at residual {residual:.3e}"
                )),
            });
        }
        Attempt::Exhausted { z, iters, residual } => {
            return Ok(SdpSolution {
                psd_margin: ls.psd_margin(&z),
                z,
                objective: f64::NAN,
                status: SdpStatus::MaxIterations,
                iterations: total + iters,
                diagnostic: Some(format!(
                    "feasibility search used the full iteration budget (residual {residual:.3e})"
                )),
            });
        }
    };

    if ls.c_norm2 == 0.0 {
        // Pure feasibility problem.
        return Ok(SdpSolution {
            psd_margin: ls.psd_margin(&z_best),
            objective: 0.0,
            z: z_best,
            status: SdpStatus::Optimal,
            iterations: total,
            diagnostic: None,
        });
    }

    // Probe downward until a level becomes unreachable. The initial step is
    // small — warm starts usually begin near the optimum — and grows
    // geometrically, so a cold start still crosses any span in a few levels.
    let mut lo = None;
    let mut step = (4.0 * opts.tol_obj).max(1e-3) * hi.abs().max(1.0);
    for _ in 0..MAX_PROBE_LEVELS {
        let tau = hi - step;
        match ls.attempt(tau, &z_best, opts.tol_feas, opts.max_iter) {
            Attempt::Feasible { z, obj, iters } => {
                total += iters;
                z_best = z;
                hi = obj;
                step *= 2.0;
            }
            Attempt::Stalled { iters, .. } | Attempt::Exhausted { iters, .. } => {
                total += iters;
                lo = Some(tau);
                break;
            }
        }
    }
    let Some(mut lo) = lo else {
        return Ok(SdpSolution {
            psd_margin: ls.psd_margin(&z_best),
            objective: hi,
            z: z_best,
            status: SdpStatus::MaxIterations,
            iterations: total,
            diagnostic: Some(
                "objective kept improving through every probe level; \
                 the problem looks unbounded below"
                    .into(),
            ),
        });
    };

    // Bisect the bracket [lo, hi].
    let mut levels = 0;
    while hi - lo > opts.tol_obj * hi.abs().max(1.0) && levels < MAX_BISECT_LEVELS {
        levels += 1;
        let mid = 0.5 * (hi + lo);
        match ls.attempt(mid, &z_best, opts.tol_feas, opts.max_iter) {
            Attempt::Feasible { z, obj, iters } => {
                total += iters;
                z_best = z;
                hi = obj;
            }
            Attempt::Stalled { iters, .. } | Attempt::Exhausted { iters, .. } => {
                total += iters;
                lo = mid;
            }
        }
    }

    Ok(SdpSolution {
        psd_margin: ls.psd_margin(&z_best),
        objective: ls.c.dot(&z_best),
        z: z_best,
        status: SdpStatus::Optimal,
        iterations: total,
        diagnostic: None,
    })
}
