//! Running one synthesized observer against measured outputs.
//!
//! The observer listens to its sensor subset only:
//!
//! ```text
//! x̂⁺ = A x̂ + G f(H x̂ + K (C_J x̂ − y_J)) + L (C_J x̂ − y_J) + ρ(u)
//! ```
//!
//! and its design certificate promises, for clean measurements
//! `y_J = C_J x + m_J`,
//!
//! ```text
//! |x̂(k) − x(k)| ≤ c λᵏ |x̂(0) − x(0)| + γ max_{j ≤ k} |m_J(j)|.
//! ```
//!
//! Attacked sensors inside J void that promise — handling them is the
//! estimator bank's job, which runs many of these observers side by side.

use nalgebra::DVector;

use crate::error::Error;
use crate::model::{PlantModel, SensorSubset, Trace};
use crate::synthesis::ObserverDesign;
use crate::Result;

/// One observer: a design bound to its sensor subset.
#[derive(Debug, Clone)]
pub struct Observer {
    design: ObserverDesign,
    subset: SensorSubset,
}

impl Observer {
    /// Binds a design to `model`, validating that the gain shapes match.
    pub fn new(model: &PlantModel, design: ObserverDesign) -> Result<Self> {
        let subset = model.subset(&design.subset)?;
        let ny = subset.len();
        if design.l.nrows() != model.n() || design.l.ncols() != ny {
            return Err(Error::dim(format!(
                "output-injection gain is {}x{}, expected {}x{ny}",
                design.l.nrows(),
                design.l.ncols(),
                model.n()
            )));
        }
        if design.k.nrows() != model.r() || design.k.ncols() != ny {
            return Err(Error::dim(format!(
                "innovation gain is {}x{}, expected {}x{ny}",
                design.k.nrows(),
                design.k.ncols(),
                model.r()
            )));
        }
        Ok(Observer { design, subset })
    }

    /// The bound design.
    pub fn design(&self) -> &ObserverDesign {
        &self.design
    }

    /// The sensor subset the observer listens to.
    pub fn subset(&self) -> &SensorSubset {
        &self.subset
    }

    /// One update from the full measurement vector `y` (length p); the
    /// observer slices out its own sensors.
    pub fn step(
        &self,
        model: &PlantModel,
        x_hat: &DVector<f64>,
        y: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if x_hat.len() != model.n() {
            return Err(Error::dim("estimate length"));
        }
        if y.len() != model.p() {
            return Err(Error::dim("measurement length"));
        }
        let innovation = &self.subset.c_j * x_hat - self.subset.slice(y);
        let q_hat = &model.h * x_hat + &self.design.k * &innovation;
        let drive = model.rho_eval(u)?;
        Ok(&model.a * x_hat
            + &model.g * model.f_eval(&q_hat)
            + &self.design.l * &innovation
            + drive)
    }

    /// Runs the observer along a trace, returning estimates `x̂(0..=K)`.
    pub fn run(&self, model: &PlantModel, trace: &Trace, x_hat0: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let horizon = trace.horizon();
        let mut estimates = Vec::with_capacity(horizon + 1);
        let mut x_hat = x_hat0.clone();
        estimates.push(x_hat.clone());
        for k in 0..horizon {
            x_hat = self.step(model, &x_hat, &trace.y[k], &trace.u[k])?;
            estimates.push(x_hat.clone());
        }
        Ok(estimates)
    }
}

/// Euclidean error norms `|x̂(k) − x(k)|` along a run.
pub fn error_norms(estimates: &[DVector<f64>], states: &[DVector<f64>]) -> Vec<f64> {
    estimates
        .iter()
        .zip(states)
        .map(|(xh, x)| (xh - x).norm())
        .collect()
}

/// The certificate's error envelope along a disturbance record:
/// `bound(k) = c λᵏ e0 + γ max_{j ≤ k} |m_J(j)|`, where `m_J` is the
/// disturbance restricted to the design's subset.
pub fn iss_envelope(design: &ObserverDesign, e0_norm: f64, disturbances: &[DVector<f64>]) -> Vec<f64> {
    let cert = &design.certificate;
    let mut running_sup: f64 = 0.0;
    let mut decay = 1.0;
    let mut out = Vec::with_capacity(disturbances.len());
    for m in disturbances {
        let m_j = DVector::from_iterator(
            design.subset.len(),
            design.subset.iter().map(|&i| m[i - 1]),
        );
        running_sup = running_sup.max(m_j.norm());
        out.push(cert.c * decay * e0_norm + cert.gamma * running_sup);
        decay *= cert.lambda;
    }
    out
}

/// Largest violation of the certificate envelope over a run:
/// `max_k (|e(k)| − bound(k))`. Nonpositive means the promise held.
pub fn worst_envelope_violation(
    design: &ObserverDesign,
    estimates: &[DVector<f64>],
    trace: &Trace,
) -> f64 {
    let errs = error_norms(estimates, &trace.x);
    let bounds = iss_envelope(design, errs[0], &trace.m);
    errs.iter()
        .zip(&bounds)
        .map(|(e, b)| e - b)
        .fold(f64::NEG_INFINITY, f64::max)
}
