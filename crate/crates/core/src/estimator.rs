//! A bank of subset observers that rides out attacks on up to `q` sensors.
//!
//! One observer is synthesized for every sensor subset of cardinality `p − q`
//! (the candidates) and every subset of cardinality `p − 2q` (their
//! cross-checks). All start from a common estimate and advance in lockstep on
//! their own slices of the measured output. At each step every candidate `J`
//! gets a consistency score
//!
//! ```text
//! π_J(k) = max { |x̂_J(k) − x̂_S(k)| : S ⊂ J, card(S) = p − 2q }
//! ```
//!
//! and the bank's estimate is the candidate with the smallest score,
//! `x̂(k) = x̂_{σ(k)}(k)` with `σ(k) = argmin_J π_J(k)`. With at most `q`
//! attacked sensors, at least one candidate sees only clean measurements, and
//! any candidate that agrees with all of its cross-checks must itself be
//! close to one whose sensors are clean — so the selected estimate inherits
//! a noise-level error bound no matter how large the attack signals are.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::Error;
use crate::model::{subsets_of_size, PlantModel, Trace};
use crate::observer::Observer;
use crate::synthesis::{synthesize, ObserverDesign, SynthesisOptions};
use crate::Result;

/// The observer bank: candidates of cardinality `p − q`, cross-checks of
/// cardinality `p − 2q`, both in ascending lexicographic order.
#[derive(Debug, Clone)]
pub struct EstimatorBank {
    q: usize,
    /// Candidate observers first, then cross-check observers.
    observers: Vec<Observer>,
    /// Number of candidate observers (`C(p, p − q)`).
    candidate_count: usize,
    /// For each candidate, the positions in `observers` of its cross-checks.
    checks_of: Vec<Vec<usize>>,
}

/// The per-step outcome of the bank's consistency vote.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Position of the selected candidate in lexicographic candidate order.
    pub sigma: usize,
    /// Consistency score of every candidate, same order.
    pub pi: Vec<f64>,
}

/// A full bank run: per-step selections and the fused estimate.
#[derive(Debug, Clone)]
pub struct BankRun {
    /// Selected candidate position at each step.
    pub sigmas: Vec<usize>,
    /// Candidate scores at each step.
    pub pis: Vec<Vec<f64>>,
    /// Fused estimate `x̂(k)` at each step.
    pub estimates: Vec<DVector<f64>>,
}

/// Index of the smallest value; ties go to the earliest position, which is
/// the lexicographically smallest subset under the bank's ordering.
pub fn argmin_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Synthesizes the full bank for a plant that may have up to `q` of its `p`
/// sensors attacked. Requires `0 < q < p/2`; fails with the offending subset's
/// name if any required observer does not exist, which is how a workable `q`
/// is found in practice (retry with a smaller one).
pub fn build_bank(model: &PlantModel, q: usize, opts: &SynthesisOptions) -> Result<EstimatorBank> {
    let p = model.p();
    if q == 0 || 2 * q >= p {
        return Err(Error::invalid(format!(
            "attack tolerance q = {q} must satisfy 0 < q < p/2 with p = {p} sensors"
        )));
    }
    let mut designs = Vec::new();
    for card in [p - q, p - 2 * q] {
        for indices in subsets_of_size(p, card) {
            designs.push(synthesize(model, &indices, opts)?);
        }
    }
    EstimatorBank::from_designs(model, q, designs)
}

impl EstimatorBank {
    /// Assembles a bank from already-synthesized designs, which must cover
    /// exactly the required subsets (any order).
    pub fn from_designs(
        model: &PlantModel,
        q: usize,
        designs: Vec<ObserverDesign>,
    ) -> Result<Self> {
        let p = model.p();
        if q == 0 || 2 * q >= p {
            return Err(Error::invalid(format!(
                "attack tolerance q = {q} must satisfy 0 < q < p/2 with p = {p} sensors"
            )));
        }
        let mut required: Vec<Vec<usize>> = subsets_of_size(p, p - q);
        let candidate_count = required.len();
        required.extend(subsets_of_size(p, p - 2 * q));
        if designs.len() != required.len() {
            return Err(Error::invalid(format!(
                "bank needs {} designs, got {}",
                required.len(),
                designs.len()
            )));
        }

        let mut slots: Vec<Option<ObserverDesign>> = vec![None; required.len()];
        for design in designs {
            match required.iter().position(|r| *r == design.subset) {
                Some(i) if slots[i].is_none() => slots[i] = Some(design),
                Some(_) => {
                    return Err(Error::invalid(format!(
                        "duplicate design for subset {:?}",
                        design.subset
                    )))
                }
                None => {
                    return Err(Error::invalid(format!(
                        "design for subset {:?} does not belong in a q = {q} bank",
                        design.subset
                    )))
                }
            }
        }
        let observers = slots
            .into_iter()
            .map(|slot| Observer::new(model, slot.expect("all slots filled")))
            .collect::<Result<Vec<_>>>()?;

        let checks_of: Vec<Vec<usize>> = (0..candidate_count)
            .map(|i| {
                let j = &observers[i].subset().indices;
                (candidate_count..observers.len())
                    .filter(|&f| {
                        observers[f]
                            .subset()
                            .indices
                            .iter()
                            .all(|s| j.contains(s))
                    })
                    .collect()
            })
            .collect();
        if checks_of.iter().any(Vec::is_empty) {
            return Err(Error::invalid("a candidate subset has no cross-checks"));
        }

        Ok(EstimatorBank {
            q,
            observers,
            candidate_count,
            checks_of,
        })
    }

    /// The attack tolerance the bank was built for.
    pub fn q(&self) -> usize {
        self.q
    }

    /// All observers: candidates first, then cross-checks.
    pub fn observers(&self) -> &[Observer] {
        &self.observers
    }

    /// Number of candidate subsets.
    pub fn candidate_count(&self) -> usize {
        self.candidate_count
    }

    /// The candidate observers in selection order.
    pub fn candidates(&self) -> &[Observer] {
        &self.observers[..self.candidate_count]
    }

    /// Labels of the candidate subsets in selection order, e.g. `"1-2-4"`.
    pub fn candidate_labels(&self) -> Vec<String> {
        self.candidates()
            .iter()
            .map(|o| o.subset().label())
            .collect()
    }

    /// The common starting state, one copy per observer.
    pub fn initial_states(&self, x_hat0: &DVector<f64>) -> Vec<DVector<f64>> {
        vec![x_hat0.clone(); self.observers.len()]
    }

    /// Advances every observer one step on its slice of `y`. Updates are
    /// independent, so they run in parallel; the result does not depend on
    /// scheduling.
    pub fn advance(
        &self,
        model: &PlantModel,
        states: &mut [DVector<f64>],
        y: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<()> {
        if states.len() != self.observers.len() {
            return Err(Error::dim("bank state count"));
        }
        states
            .par_iter_mut()
            .zip(self.observers.par_iter())
            .try_for_each(|(x_hat, obs)| {
                *x_hat = obs.step(model, x_hat, y, u)?;
                Ok(())
            })
    }

    /// Consistency scores of all candidates at the given bank state.
    pub fn pi(&self, states: &[DVector<f64>]) -> Vec<f64> {
        (0..self.candidate_count)
            .map(|i| {
                self.checks_of[i]
                    .iter()
                    .map(|&f| (&states[i] - &states[f]).norm())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// Scores all candidates and picks the most consistent one.
    pub fn select(&self, states: &[DVector<f64>]) -> Selection {
        let pi = self.pi(states);
        Selection {
            sigma: argmin_index(&pi),
            pi,
        }
    }

    /// The fused estimate for a selection: the chosen candidate's state.
    pub fn fused<'a>(&self, states: &'a [DVector<f64>], selection: &Selection) -> &'a DVector<f64> {
        &states[selection.sigma]
    }

    /// One bank step: advance every observer, then re-run the vote.
    pub fn step(
        &self,
        model: &PlantModel,
        states: &mut [DVector<f64>],
        y: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<Selection> {
        self.advance(model, states, y, u)?;
        Ok(self.select(states))
    }

    /// Runs the bank along a trace from a common starting estimate,
    /// recording the vote and the fused estimate at every step.
    pub fn run(&self, model: &PlantModel, trace: &Trace, x_hat0: &DVector<f64>) -> Result<BankRun> {
        let horizon = trace.horizon();
        let mut states = self.initial_states(x_hat0);
        let mut run = BankRun {
            sigmas: Vec::with_capacity(horizon + 1),
            pis: Vec::with_capacity(horizon + 1),
            estimates: Vec::with_capacity(horizon + 1),
        };
        let first = self.select(&states);
        run.estimates.push(self.fused(&states, &first).clone());
        run.sigmas.push(first.sigma);
        run.pis.push(first.pi);
        for k in 0..horizon {
            let sel = self.step(model, &mut states, &trace.y[k], &trace.u[k])?;
            run.estimates.push(self.fused(&states, &sel).clone());
            run.sigmas.push(sel.sigma);
            run.pis.push(sel.pi);
        }
        Ok(run)
    }
}

/// Recomputes the vote from scratch: enumerate all candidate/cross-check
/// subset pairs, test inclusion on the index sets, and recompute every norm.
/// Shares no precomputed structure with [`EstimatorBank::select`]; the two
/// must agree exactly.
pub fn brute_force_select(
    model: &PlantModel,
    bank: &EstimatorBank,
    states: &[DVector<f64>],
) -> Selection {
    let p = model.p();
    let find = |indices: &[usize]| -> usize {
        bank.observers()
            .iter()
            .position(|o| o.subset().indices == indices)
            .expect("bank covers every required subset")
    };
    let candidates = subsets_of_size(p, p - bank.q());
    let checks = subsets_of_size(p, p - 2 * bank.q());
    let mut pi = Vec::with_capacity(candidates.len());
    for j in &candidates {
        let xj = &states[find(j)];
        let mut worst = 0.0f64;
        for s in &checks {
            if s.iter().all(|i| j.contains(i)) {
                worst = worst.max((xj - &states[find(s)]).norm());
            }
        }
        pi.push(worst);
    }
    let mut sigma = 0;
    for i in 1..pi.len() {
        if pi[i] < pi[sigma] {
            sigma = i;
        }
    }
    Selection { sigma, pi }
}

/// Writes a bank run as CSV: `k, sigma, pi_<J> per candidate, xhat1..xhatn,
/// e_norm`, where `sigma` is the winning subset's label and `e_norm` the
/// fused estimate's error against the trace's true state.
pub fn write_bank_csv<W: std::io::Write>(
    bank: &EstimatorBank,
    run: &BankRun,
    trace: &Trace,
    out: W,
) -> Result<()> {
    let n = run.estimates[0].len();
    let labels = bank.candidate_labels();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string(), "sigma".to_string()];
    header.extend(labels.iter().map(|l| format!("pi_{l}")));
    header.extend((1..=n).map(|i| format!("xhat{i}")));
    header.push("e_norm".to_string());
    w.write_record(&header)?;
    for k in 0..run.sigmas.len() {
        let mut rec = vec![k.to_string(), labels[run.sigmas[k]].clone()];
        rec.extend(run.pis[k].iter().map(|v| format!("{v:.17e}")));
        rec.extend(run.estimates[k].iter().map(|v| format!("{v:.17e}")));
        let e_norm = (&run.estimates[k] - &trace.x[k]).norm();
        rec.push(format!("{e_norm:.17e}"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A bank for the standard 4-sensor benchmark plant, shared across test
/// modules: every subset solved at one decay rate where all ten are feasible
/// (cheaper than the full grid search, which the acceptance tests cover).
#[cfg(test)]
pub(crate) fn benchmark_test_bank() -> &'static EstimatorBank {
    use crate::model::benchmark_plant;
    use crate::synthesis::design_at;
    static BANK: std::sync::OnceLock<EstimatorBank> = std::sync::OnceLock::new();
    BANK.get_or_init(|| {
        let model = benchmark_plant(0.1, 1.0);
        let c3 = 0.90;
        let opts = crate::sdp::SdpOptions::default();
        let mut designs = Vec::new();
        for card in [3, 2] {
            for s in subsets_of_size(4, card) {
                designs.push(
                    design_at(&model, &s, c3, &opts)
                        .unwrap()
                        .unwrap_or_else(|| panic!("subset {s:?} infeasible at {c3}")),
                );
            }
        }
        EstimatorBank::from_designs(&model, 1, designs).unwrap()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{benchmark_plant, simulate_plant, SignalSpec};
    use crate::rng::SplitMix64;
    use crate::synthesis::Certificate;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    /// A structurally valid design with zero gains — enough for vote-logic
    /// tests, which never consult gains or certificates.
    fn dummy_design(model: &PlantModel, subset: Vec<usize>) -> ObserverDesign {
        let ny = subset.len();
        ObserverDesign {
            subset,
            c3: 0.5,
            l: DMatrix::zeros(model.n(), ny),
            k: DMatrix::zeros(model.r(), ny),
            p: DMatrix::identity(model.n(), model.n()),
            kappa: 1.0,
            mu: 1.0,
            mu1: 1.0,
            slope_bound: model.slope_bound(),
            certificate: Certificate {
                c: 1.0,
                lambda: 0.5,
                gamma: 1.0,
            },
        }
    }

    fn dummy_bank(model: &PlantModel) -> EstimatorBank {
        let mut designs = Vec::new();
        for card in [3, 2] {
            for s in subsets_of_size(4, card) {
                designs.push(dummy_design(model, s));
            }
        }
        EstimatorBank::from_designs(model, 1, designs).unwrap()
    }

    fn solved_bank(_model: &PlantModel) -> &'static EstimatorBank {
        benchmark_test_bank()
    }

    #[test]
    fn bank_shape_matches_the_combinatorics() {
        let model = benchmark_plant(0.1, 1.0);
        let bank = dummy_bank(&model);
        assert_eq!(bank.observers().len(), 10); // C(4,3) + C(4,2)
        assert_eq!(bank.candidate_count(), 4);
        assert_eq!(
            bank.candidate_labels(),
            vec!["1-2-3", "1-2-4", "1-3-4", "2-3-4"]
        );
        // Each triple cross-checks against exactly its three pairs.
        for i in 0..4 {
            assert_eq!(bank.checks_of[i].len(), 3);
        }
    }

    #[test]
    fn rejects_out_of_range_tolerance_and_wrong_design_sets() {
        let model = benchmark_plant(0.1, 1.0);
        assert!(EstimatorBank::from_designs(&model, 0, vec![]).is_err());
        assert!(EstimatorBank::from_designs(&model, 2, vec![]).is_err());
        // Missing designs.
        assert!(EstimatorBank::from_designs(&model, 1, vec![dummy_design(&model, vec![1, 2, 3])])
            .is_err());
        // A design for a subset of the wrong cardinality.
        let mut designs = Vec::new();
        for card in [3, 2] {
            for s in subsets_of_size(4, card) {
                designs.push(dummy_design(&model, s));
            }
        }
        designs[9] = dummy_design(&model, vec![4]);
        assert!(EstimatorBank::from_designs(&model, 1, designs).is_err());
    }

    #[test]
    fn identical_states_tie_toward_the_first_candidate() {
        let model = benchmark_plant(0.1, 1.0);
        let bank = dummy_bank(&model);
        let states = bank.initial_states(&DVector::from_column_slice(&[0.3, -0.7]));
        let sel = bank.select(&states);
        assert_eq!(sel.sigma, 0, "ties must pick the lexicographically first");
        assert!(sel.pi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scores_report_the_largest_cross_check_gap() {
        let model = benchmark_plant(0.1, 1.0);
        let bank = dummy_bank(&model);
        let mut states = bank.initial_states(&DVector::zeros(2));
        // Perturb the pair {3,4} (last cross-check) by a unit vector: only
        // the candidates containing both 3 and 4 see it.
        states[9] = DVector::from_column_slice(&[1.0, 0.0]);
        let sel = bank.select(&states);
        assert_eq!(sel.pi, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(sel.sigma, 0);
    }

    #[test]
    fn selected_score_is_the_minimum_at_every_step() {
        let model = benchmark_plant(0.1, 1.0);
        let bank = solved_bank(&model);
        let x0 = DVector::from_column_slice(&[0.5, -0.2]);
        let noise = SignalSpec::uniform(-0.5, 0.5, 21);
        let attack = SignalSpec::uniform_on(vec![3], -10.0, 10.0, 22);
        let trace = simulate_plant(&model, &x0, None, &noise, &attack, 80).unwrap();
        let run = bank.run(&model, &trace, &DVector::zeros(2)).unwrap();
        for k in 0..=80 {
            let min = run.pis[k].iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(run.pis[k][run.sigmas[k]], min, "step {k}");
        }
    }

    #[test]
    fn attacked_sensor_is_voted_out_and_the_estimate_stays_tight() {
        let model = benchmark_plant(0.1, 1.0);
        let bank = solved_bank(&model);
        let x0 = DVector::from_column_slice(&[0.5, -0.2]);
        let noise = SignalSpec::uniform(-0.5, 0.5, 3);
        let attack = SignalSpec::uniform_on(vec![3], -10.0, 10.0, 4);
        let trace = simulate_plant(&model, &x0, None, &noise, &attack, 150).unwrap();
        let run = bank.run(&model, &trace, &DVector::zeros(2)).unwrap();

        // In the settled half, the winner should exclude sensor 3 nearly
        // always ({1,2,4} is candidate index 1).
        let tail = &run.sigmas[75..];
        let clean_votes = tail.iter().filter(|&&s| s == 1).count();
        assert!(
            clean_votes as f64 >= 0.9 * tail.len() as f64,
            "clean candidate won only {clean_votes}/{} settled votes",
            tail.len()
        );
        // And the fused error should sit at noise level, far below the
        // attack magnitude.
        let worst_tail = run.estimates[75..]
            .iter()
            .zip(&trace.x[75..])
            .map(|(xh, x)| (xh - x).norm())
            .fold(0.0, f64::max);
        assert!(worst_tail < 1.0, "tail error {worst_tail} not at noise level");
    }

    #[test]
    fn parallel_advance_matches_a_sequential_loop_exactly() {
        let model = benchmark_plant(0.1, 1.0);
        let bank = solved_bank(&model);
        let x0 = DVector::from_column_slice(&[0.1, 0.9]);
        let noise = SignalSpec::uniform(-0.5, 0.5, 7);
        let attack = SignalSpec::uniform_on(vec![2], -5.0, 5.0, 8);
        let trace = simulate_plant(&model, &x0, None, &noise, &attack, 40).unwrap();

        let mut par_states = bank.initial_states(&DVector::zeros(2));
        let mut seq_states = bank.initial_states(&DVector::zeros(2));
        for k in 0..40 {
            bank.advance(&model, &mut par_states, &trace.y[k], &trace.u[k])
                .unwrap();
            for (x_hat, obs) in seq_states.iter_mut().zip(bank.observers()) {
                *x_hat = obs.step(&model, x_hat, &trace.y[k], &trace.u[k]).unwrap();
            }
            assert_eq!(par_states, seq_states, "diverged at step {k}");
        }
    }

    #[test]
    fn brute_force_vote_matches_the_incremental_path() {
        let model = benchmark_plant(0.1, 1.0);
        let bank = dummy_bank(&model);
        let mut rng = SplitMix64::new(99);
        for _ in 0..50 {
            let states: Vec<DVector<f64>> = (0..10)
                .map(|_| DVector::from_fn(2, |_, _| rng.uniform(-3.0, 3.0)))
                .collect();
            let fast = bank.select(&states);
            let brute = brute_force_select(&model, &bank, &states);
            assert_eq!(fast, brute);
            assert_eq!(
                bank.fused(&states, &fast),
                &states[brute.sigma],
                "fused estimates disagree"
            );
        }
    }

    #[test]
    fn csv_export_has_the_documented_shape() {
        let model = benchmark_plant(0.1, 1.0);
        let bank = dummy_bank(&model);
        let x0 = DVector::from_column_slice(&[0.2, 0.4]);
        let trace =
            simulate_plant(&model, &x0, None, &SignalSpec::zero(), &SignalSpec::zero(), 3)
                .unwrap();
        let run = bank.run(&model, &trace, &DVector::zeros(2)).unwrap();
        let mut buf = Vec::new();
        write_bank_csv(&bank, &run, &trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,sigma,pi_1-2-3,pi_1-2-4,pi_1-3-4,pi_2-3-4,xhat1,xhat2,e_norm"
        );
        assert_eq!(lines.count(), 4);
    }

    proptest! {
        /// Scaling all scores by one positive constant never changes the vote.
        #[test]
        fn vote_is_scale_invariant(
            pi in proptest::collection::vec(0.0f64..100.0, 1..12),
            scale in 1e-6f64..1e6,
        ) {
            let scaled: Vec<f64> = pi.iter().map(|v| v * scale).collect();
            prop_assert_eq!(argmin_index(&pi), argmin_index(&scaled));
        }
    }
}
