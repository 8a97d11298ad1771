//! Accusing attacked sensors by windowed voting over the bank's winners.
//!
//! The voter watches which candidate subset wins the consistency vote at
//! each step. Votes are tallied over non-overlapping windows of `N` steps
//! aligned at `k = 1 + (i−1)·N`; at the end of window `i` the subset with
//! the most votes is declared the trustworthy one and its complement is
//! accused:
//!
//! ```text
//! n_J(i) = #{ k in window i : σ(k) = J },   J(i) = argmax_J n_J(i),
//! Ã(i) = {1, …, p} \ J(i).
//! ```
//!
//! The accusation is meaningful only when exactly `q*` sensors are under
//! attack (the bank must be built with that cardinality). When no single
//! subset dominates a window — the winner holds no strict majority — the
//! window is marked indecisive: the vote pattern is indistinguishable from
//! noise-driven scatter, so the accusation should not be trusted.

use crate::error::Error;
use crate::estimator::{BankRun, EstimatorBank};
use crate::model::{PlantModel, Trace};
use crate::Result;
use nalgebra::DVector;

/// One window's tally and verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTally {
    /// 1-based window index.
    pub index: usize,
    /// Votes per candidate, in the bank's candidate order.
    pub counters: Vec<usize>,
    /// Winning candidate's position (most votes, ties to the
    /// lexicographically first subset).
    pub winner: usize,
    /// Accused sensors: the complement of the winning subset, ascending.
    pub accused: Vec<usize>,
    /// Whether the winner holds a strict majority of the window's votes.
    pub decisive: bool,
}

/// The full isolation verdict over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationReport {
    /// Window length in steps.
    pub window: usize,
    /// Candidate subset labels, fixing the counter column order.
    pub candidate_labels: Vec<String>,
    /// One tally per complete window.
    pub windows: Vec<WindowTally>,
}

/// Accuracy of a report against the scenario's known attacked set.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationAccuracy {
    /// Fraction of windows whose accusation equals the true attacked set.
    pub fraction: f64,
    /// Per-window hit flags, for timeline plots.
    pub hits: Vec<bool>,
}

/// Index of the largest count; ties go to the earliest position.
fn argmax_index(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, c) in counts.iter().enumerate().skip(1) {
        if *c > counts[best] {
            best = i;
        }
    }
    best
}

/// Tallies a run's per-step winners into window verdicts.
///
/// `sigmas[k]` is the winning candidate at step `k`; the initial selection
/// at `k = 0` reflects only the common starting estimate, so voting starts
/// at `k = 1`. A trailing partial window is not reported.
pub fn tally(
    bank: &EstimatorBank,
    p: usize,
    sigmas: &[usize],
    window: usize,
) -> Result<IsolationReport> {
    if window == 0 {
        return Err(Error::invalid("window length must be at least 1"));
    }
    let candidate_count = bank.candidate_count();
    if let Some(&bad) = sigmas.iter().find(|&&s| s >= candidate_count) {
        return Err(Error::invalid(format!(
            "vote for candidate {bad} but the bank has {candidate_count}"
        )));
    }
    let votes = &sigmas[1..];
    let complete = votes.len() / window;
    let mut report = IsolationReport {
        window,
        candidate_labels: bank.candidate_labels(),
        windows: Vec::with_capacity(complete),
    };
    for i in 0..complete {
        let mut counters = vec![0usize; candidate_count];
        for &s in &votes[i * window..(i + 1) * window] {
            counters[s] += 1;
        }
        let winner = argmax_index(&counters);
        let trusted = &bank.candidates()[winner].subset().indices;
        let accused = (1..=p).filter(|i| !trusted.contains(i)).collect();
        report.windows.push(WindowTally {
            index: i + 1,
            decisive: 2 * counters[winner] > window,
            counters,
            winner,
            accused,
        });
    }
    Ok(report)
}

/// Runs the bank over a trace and tallies the windows. The bank must be
/// built for the actual attacked-sensor count `q*`, so each accusation has
/// exactly `q*` entries.
pub fn isolate_run(
    model: &PlantModel,
    bank: &EstimatorBank,
    trace: &Trace,
    x_hat0: &DVector<f64>,
    window: usize,
) -> Result<(IsolationReport, BankRun)> {
    let run = bank.run(model, trace, x_hat0)?;
    let report = tally(bank, model.p(), &run.sigmas, window)?;
    Ok((report, run))
}

/// Scores a report against the known attacked set (ascending 1-based
/// indices). Evaluation only — the algorithm itself never sees `true_w`.
pub fn evaluate(report: &IsolationReport, true_w: &[usize]) -> IsolationAccuracy {
    let hits: Vec<bool> = report
        .windows
        .iter()
        .map(|w| w.accused == true_w)
        .collect();
    let fraction = if hits.is_empty() {
        0.0
    } else {
        hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
    };
    IsolationAccuracy { fraction, hits }
}

/// Writes a report as CSV: `window_index, winner_subset, accused_sensors,
/// n_<J> per candidate, decisive`.
pub fn write_isolation_csv<W: std::io::Write>(report: &IsolationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "window_index".to_string(),
        "winner_subset".to_string(),
        "accused_sensors".to_string(),
    ];
    header.extend(report.candidate_labels.iter().map(|l| format!("n_{l}")));
    header.push("decisive".to_string());
    w.write_record(&header)?;
    for win in &report.windows {
        let mut rec = vec![
            win.index.to_string(),
            report.candidate_labels[win.winner].clone(),
            win.accused
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join("-"),
        ];
        rec.extend(win.counters.iter().map(usize::to_string));
        rec.push(win.decisive.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
