//! The answering mechanism: per-round estimate-vs-dataset comparison,
//! mistake-budget enforcement, grid rounding, and transcript recording.
//!
//! Each round: estimate `û = ⟨q, y⟩/N` from the sketch; if the estimate is
//! off from `λ·q(S)` by more than `λε/2` and the sketch is within budget,
//! record a correction (scaled copy of the query) and answer the rounded
//! dataset mean; otherwise answer `û/λ`. The decision predicate uses a fixed
//! evaluation order so identical inputs give bit-identical runs.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::seedspace::{Dataset, Query, SeedSpace};
use crate::sketch::{batch_size, ip_est, BatchMode, EstimateParams, GradientSketch};

/// sign with sign(0) = +1.
#[inline]
pub fn sign_pm(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// `128/(λε)²`, the real-valued mistake budget. An update is allowed while
/// the integer sketch size is `<=` this value.
pub fn mistake_budget(lambda: f64, epsilon: f64) -> f64 {
    128.0 / ((lambda * epsilon) * (lambda * epsilon))
}

pub fn update_allowed(sketch_len: usize, lambda: f64, epsilon: f64) -> bool {
    (sketch_len as f64) <= mistake_budget(lambda, epsilon)
}

/// A value snapped to the ε/2 grid together with its integer index, so the
/// value can always be reconstructed exactly as `index · ε/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub value: f64,
    pub index: i64,
}

/// Nearest multiple of ε/2, ties away from zero, clamped to [-1, 1].
pub fn round_to_grid(v: f64, epsilon: f64) -> Result<GridPoint> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", "grid step must be positive"));
    }
    debug_assert!((-1.0..=1.0).contains(&v));
    let grid = epsilon * 0.5;
    // f64::round ties away from zero, which is the tie rule here.
    let mut index = (v / grid).round() as i64;
    let mut max_index = (1.0 / grid).floor() as i64;
    while max_index as f64 * grid > 1.0 {
        max_index -= 1;
    }
    index = index.clamp(-max_index, max_index);
    Ok(GridPoint {
        value: index as f64 * grid,
        index,
    })
}

/// Game-level parameters for one mechanism instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismParams {
    pub space: SeedSpace,
    /// Total rounds T.
    pub rounds: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    pub batch: BatchMode,
}

impl MechanismParams {
    pub fn new(
        space: SeedSpace,
        rounds: u64,
        epsilon: f64,
        delta: f64,
        lambda: f64,
        batch: BatchMode,
    ) -> Result<Self> {
        let params = MechanismParams {
            space,
            rounds,
            epsilon,
            delta,
            lambda,
            batch,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid("epsilon", "must lie in (0,1)"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", "must lie in (0,1)"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::invalid("lambda", "must lie in (0,1]"));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("rounds", "must be positive"));
        }
        Ok(())
    }

    /// Estimator configuration: accuracy `λε/8`, failure budget `δ/2T`,
    /// batch resolved from the configured mode.
    pub fn estimate_params(&self) -> Result<EstimateParams> {
        let eps_est = self.lambda * self.epsilon / 8.0;
        let delta_est = self.delta / (2.0 * self.rounds as f64);
        let batch = batch_size(eps_est, delta_est, self.rounds, self.batch)?;
        EstimateParams::new(eps_est, delta_est, batch)
    }

    pub fn mistake_budget(&self) -> f64 {
        mistake_budget(self.lambda, self.epsilon)
    }

    /// Update trigger `λε/2`.
    pub fn update_threshold(&self) -> f64 {
        self.lambda * self.epsilon / 2.0
    }
}

/// One recorded sketch update: the round, the grid index of the emitted
/// answer, and the sign of the correction. `query_hash` is a divergence
/// sentinel, not part of the counting argument; it strips cleanly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub round: u64,
    pub grid_index: i32,
    pub sign: i8,
    pub query_hash: Option<u64>,
}

/// What one round produced.
#[derive(Debug, Clone, Copy)]
pub struct RoundOutcome {
    pub round: u64,
    pub answer: f64,
    pub updated: bool,
    pub sign: Option<i8>,
    pub grid_index: Option<i64>,
    /// The estimate û.
    pub estimate: f64,
    /// The exact dataset mean q(S).
    pub dataset_mean: f64,
    pub sketch_len: usize,
}

/// Live mechanism state for one game.
pub struct Mechanism {
    params: MechanismParams,
    est: EstimateParams,
    dataset: Dataset,
    sketch: GradientSketch,
    entries: Vec<TranscriptEntry>,
    rng: RngStream,
    /// Next round to answer, 1-based.
    round: u64,
    threshold: f64,
    budget_real: f64,
    budget_exhausted: bool,
}

impl Mechanism {
    pub fn new(params: MechanismParams, dataset: Dataset, rng: RngStream) -> Result<Self> {
        params.validate()?;
        if dataset.space() != params.space {
            return Err(Error::invalid("dataset", "seed space mismatch"));
        }
        let est = params.estimate_params()?;
        let sketch = GradientSketch::new(params.space, params.lambda, params.epsilon)?;
        let threshold = params.update_threshold();
        let budget_real = params.mistake_budget();
        Ok(Mechanism {
            params,
            est,
            dataset,
            sketch,
            entries: Vec::new(),
            rng,
            round: 1,
            threshold,
            budget_real,
            budget_exhausted: false,
        })
    }

    pub fn params(&self) -> &MechanismParams {
        &self.params
    }

    pub fn estimate_params(&self) -> &EstimateParams {
        &self.est
    }

    pub fn sketch(&self) -> &GradientSketch {
        &self.sketch
    }

    pub fn transcript_entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    /// True once an update was wanted but the mistake budget blocked it.
    pub fn budget_exhausted(&self) -> bool {
        self.budget_exhausted
    }

    /// Mechanism-stream draws consumed so far.
    pub fn stream_counter(&self) -> u64 {
        self.rng.counter()
    }

    pub fn rounds_remaining(&self) -> u64 {
        self.params.rounds - (self.round - 1)
    }

    /// Answer one query. Errors once all T rounds are answered.
    pub fn answer(&mut self, q: &Query) -> Result<RoundOutcome> {
        if self.round > self.params.rounds {
            return Err(Error::GameOver(self.params.rounds));
        }
        if q.space() != self.params.space {
            return Err(Error::MalformedQuery {
                round: self.round,
                reason: "seed space mismatch".into(),
            });
        }
        let t = self.round;
        let dataset_mean = self.dataset.query_mean(q);
        let estimate = ip_est(q, &self.sketch, &self.est, &mut self.rng);
        debug_assert_eq!(self.rng.counter(), t * self.est.batch);

        let diff = estimate - self.params.lambda * dataset_mean;
        let err_exceeds = diff.abs() > self.threshold;
        let within_budget = (self.sketch.len() as f64) <= self.budget_real;

        let outcome = if err_exceeds && within_budget {
            let sign = sign_pm(diff);
            self.sketch.insert(sign, q.clone());
            let gp = round_to_grid(dataset_mean, self.params.epsilon)?;
            let grid_index = i32::try_from(gp.index).map_err(|_| {
                Error::invalid("epsilon", "grid index overflows transcript encoding")
            })?;
            self.entries.push(TranscriptEntry {
                round: t,
                grid_index,
                sign,
                query_hash: Some(q.id()),
            });
            RoundOutcome {
                round: t,
                answer: gp.value,
                updated: true,
                sign: Some(sign),
                grid_index: Some(gp.index),
                estimate,
                dataset_mean,
                sketch_len: self.sketch.len(),
            }
        } else {
            if err_exceeds {
                self.budget_exhausted = true;
            }
            let answer = (estimate / self.params.lambda).clamp(-1.0, 1.0);
            RoundOutcome {
                round: t,
                answer,
                updated: false,
                sign: None,
                grid_index: None,
                estimate,
                dataset_mean,
                sketch_len: self.sketch.len(),
            }
        };
        self.round += 1;
        Ok(outcome)
    }

    /// Sketch contents as CSV rows `(round, sign, query_id, coef)`.
    pub fn sketch_debug_csv(&self) -> String {
        let mut out = String::from("round,sign,query_id,coef\n");
        for (entry, sk) in self.entries.iter().zip(self.sketch.entries()) {
            out.push_str(&format!(
                "{},{},{:016x},{}\n",
                entry.round,
                entry.sign,
                sk.query.id(),
                sk.coef
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;
    use crate::seedspace::Distribution;

    fn space(n: u16) -> SeedSpace {
        SeedSpace::new(n).unwrap()
    }

    fn params(n: u16, rounds: u64, eps: f64, lambda: f64) -> MechanismParams {
        MechanismParams::new(
            space(n),
            rounds,
            eps,
            0.1,
            lambda,
            BatchMode::Fixed { batch: 64 },
        )
        .unwrap()
    }

    #[test]
    fn budget_formula() {
        assert_eq!(mistake_budget(0.5, 0.25), 8192.0);
        assert_eq!(mistake_budget(1.0, 1.0), 128.0);
        assert_eq!(mistake_budget(0.5, 0.5), 2048.0);
        // Real-comparison semantics at a non-integer threshold.
        let b = mistake_budget(0.3, 0.3);
        assert!((b - 15802.469).abs() < 1e-2);
        assert!(update_allowed(15802, 0.3, 0.3));
        assert!(!update_allowed(15803, 0.3, 0.3));
    }

    #[test]
    fn estimate_params_from_inputs() {
        let p = params(8, 1000, 0.2, 0.5);
        let est = p.estimate_params().unwrap();
        assert_eq!(est.eps_est, 0.0125);
        assert_eq!(est.delta_est, 0.1 / 2000.0);
        assert_eq!(est.batch, 64);
        assert_eq!(params(8, 10, 0.25, 0.5).mistake_budget(), 8192.0);
        assert_eq!(params(8, 10, 1.0 - f64::EPSILON, 1.0).mistake_budget().floor(), 128.0);
    }

    #[test]
    fn grid_rounding() {
        let g = round_to_grid(0.31, 0.25).unwrap();
        assert_eq!(g.index, 2);
        assert_eq!(g.value, 0.25);

        // Exact tie rounds away from zero.
        let g = round_to_grid(0.3125, 0.25).unwrap();
        assert_eq!(g.index, 3);
        assert_eq!(g.value, 0.375);
        let g = round_to_grid(-0.3125, 0.25).unwrap();
        assert_eq!(g.index, -3);

        // Clamped at the boundary: index 7 would exceed 1.
        let g = round_to_grid(1.0, 0.3).unwrap();
        assert_eq!(g.index, 6);
        assert!((g.value - 0.9).abs() < 1e-12);
        assert!(g.value <= 1.0);

        assert!(round_to_grid(0.5, 0.0).is_err());
    }

    #[test]
    fn grid_value_reconstructs_from_index() {
        for &eps in &[0.1, 0.2, 0.25, 0.3, 0.5] {
            for k in -40..=40 {
                let v = (k as f64) * 0.024;
                if !(-1.0..=1.0).contains(&v) {
                    continue;
                }
                let g = round_to_grid(v, eps).unwrap();
                assert_eq!(g.value, g.index as f64 * (eps * 0.5));
                assert!(g.value.abs() <= 1.0);
                assert!((g.value - v).abs() <= eps * 0.5 / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn first_round_zero_mean_no_update() {
        let s = space(4);
        let p = params(4, 10, 0.25, 0.5);
        let dataset = Dataset::new(s, vec![0, 1]).unwrap();
        // q(0) = 1, q(1) = -1 => q(S) = 0; empty sketch => û = 0.
        let q = Query::from_fn(s, |i| if i == 0 { 1 } else { -1 });
        let mut mech = Mechanism::new(p, dataset, RngStream::new(3, StreamId::Mechanism)).unwrap();
        let out = mech.answer(&q).unwrap();
        assert!(!out.updated);
        assert_eq!(out.answer, 0.0);
    }

    #[test]
    fn first_round_update_hand_executed() {
        // λ=1/2, ε=1/4, q(S)=0.5: |0 - 0.25| > 0.0625 => update, s = -1,
        // answer = 0.5 (already a grid multiple).
        let s = space(4);
        let p = params(4, 10, 0.25, 0.5);
        // 4 elements, 3 with q=+1 and 1 with q=-1 => mean 0.5.
        let dataset = Dataset::new(s, vec![0, 1, 2, 3]).unwrap();
        let q = Query::from_fn(s, |i| if i < 3 { 1 } else { -1 });
        let mut mech = Mechanism::new(p, dataset, RngStream::new(3, StreamId::Mechanism)).unwrap();
        let out = mech.answer(&q).unwrap();
        assert!(out.updated);
        assert_eq!(out.sign, Some(-1));
        assert_eq!(out.answer, 0.5);
        assert_eq!(out.grid_index, Some(4));
        assert_eq!(mech.transcript_entries().len(), 1);
        assert_eq!(mech.sketch().len(), 1);
        // Inserted coefficient: -λε·s/16 = +0.0078125.
        assert_eq!(mech.sketch().entries()[0].coef, 0.0078125);
    }

    #[test]
    fn rounds_exhaust() {
        let s = space(4);
        let p = params(4, 2, 0.25, 1.0);
        let dataset = Dataset::new(s, vec![0]).unwrap();
        let q = Query::constant(s, 1);
        let mut mech = Mechanism::new(p, dataset, RngStream::new(0, StreamId::Mechanism)).unwrap();
        assert_eq!(mech.rounds_remaining(), 2);
        mech.answer(&q).unwrap();
        mech.answer(&q).unwrap();
        assert_eq!(mech.rounds_remaining(), 0);
        assert!(matches!(mech.answer(&q), Err(Error::GameOver(2))));
    }

    #[test]
    fn else_branch_answer_is_estimate_over_lambda() {
        let s = space(6);
        let p = MechanismParams::new(
            s,
            50,
            0.5,
            0.1,
            0.5,
            BatchMode::Fixed { batch: 16 },
        )
        .unwrap();
        let d = Distribution::uniform(s);
        let mut env = RngStream::new(8, StreamId::Environment);
        let dataset = d.sample_dataset(64, &mut env).unwrap();
        let mut mech = Mechanism::new(p, dataset, RngStream::new(8, StreamId::Mechanism)).unwrap();
        let mut rng = RngStream::new(17, StreamId::Analyst);
        for _ in 0..50 {
            let q = Query::random(s, &mut rng);
            let out = mech.answer(&q).unwrap();
            if !out.updated {
                let expect = (out.estimate / 0.5).clamp(-1.0, 1.0);
                assert_eq!(out.answer, expect);
            } else {
                assert_eq!(out.answer, out.grid_index.unwrap() as f64 * (0.5 * 0.5));
            }
            assert!((-1.0..=1.0).contains(&out.answer));
        }
        // Transcript entries mirror sketch growth one to one.
        assert_eq!(mech.transcript_entries().len(), mech.sketch().len());
    }
}
