//! The gradient multiset and its randomized inner-product estimator, plus an
//! exact enumeration oracle and a standalone regret-bounded descent
//! simulator.
//!
//! The sketch is the mechanism's entire memory of past mistakes: scaled ±1
//! query vectors whose running sum `y` lives in the unit ball. Answers are
//! reconstructed from it by sampling `q(i)·y(i)` at uniform seeds, which
//! keeps every operation polylogarithmic in the domain size.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::seedspace::{Query, SeedSpace, ENUMERATION_CAP_BITS};

/// One stored gradient: `coef · q` with `|coef| = λε/16` exactly.
#[derive(Debug, Clone)]
pub struct SketchEntry {
    pub coef: f64,
    pub query: Query,
}

/// Ordered multiset of gradient vectors.
#[derive(Debug, Clone)]
pub struct GradientSketch {
    space: SeedSpace,
    lambda: f64,
    epsilon: f64,
    coef_magnitude: f64,
    budget: usize,
    entries: Vec<SketchEntry>,
}

impl GradientSketch {
    pub fn new(space: SeedSpace, lambda: f64, epsilon: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::invalid("lambda", "must lie in (0,1]"));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::invalid("epsilon", "must lie in (0,1]"));
        }
        // Computed once and stored; every entry reuses it bit-exactly.
        let coef_magnitude = lambda * epsilon / 16.0;
        let bound = 128.0 / ((lambda * epsilon) * (lambda * epsilon));
        let budget = bound as usize + 1;
        Ok(GradientSketch {
            space,
            lambda,
            epsilon,
            coef_magnitude,
            budget,
            entries: Vec::new(),
        })
    }

    /// Append `-λε·s·q/16`. Budget enforcement lives in the mechanism's
    /// update condition, not here.
    pub fn insert(&mut self, sign: i8, query: Query) {
        debug_assert!(sign == 1 || sign == -1);
        debug_assert_eq!(query.space(), self.space);
        let query = query.materialize_if_small();
        let coef = if sign == 1 {
            -self.coef_magnitude
        } else {
            self.coef_magnitude
        };
        self.entries.push(SketchEntry { coef, query });
    }

    /// `y(i) = Σ coef·q(i)`, summed in insertion order.
    #[inline]
    pub fn point_eval(&self, i: u64) -> f64 {
        let mut acc = 0.0;
        for e in &self.entries {
            acc += e.coef * f64::from(e.query.eval(i));
        }
        acc
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[SketchEntry] {
        &self.entries
    }

    pub fn space(&self) -> SeedSpace {
        self.space
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn coef_magnitude(&self) -> f64 {
        self.coef_magnitude
    }

    /// Largest entry count ever reachable under the update rule.
    pub fn budget(&self) -> usize {
        self.budget
    }
}

/// Estimator configuration. `batch` is held constant across all rounds of a
/// game so replay can resume the mechanism stream by counter arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateParams {
    pub eps_est: f64,
    pub delta_est: f64,
    pub batch: u64,
}

impl EstimateParams {
    pub fn new(eps_est: f64, delta_est: f64, batch: u64) -> Result<Self> {
        if !(eps_est > 0.0 && eps_est < 1.0) {
            return Err(Error::invalid("eps_est", "must lie in (0,1)"));
        }
        if !(delta_est > 0.0 && delta_est < 1.0) {
            return Err(Error::invalid("delta_est", "must lie in (0,1)"));
        }
        if batch == 0 {
            return Err(Error::invalid("batch", "must be positive"));
        }
        Ok(EstimateParams {
            eps_est,
            delta_est,
            batch,
        })
    }
}

/// Unbiased estimate of `⟨q, y⟩/N` from `batch` uniform point samples.
///
/// Always consumes exactly `batch` index draws, including when the sketch is
/// empty — replay depends on that.
pub fn ip_est(q: &Query, sketch: &GradientSketch, params: &EstimateParams, rng: &mut RngStream) -> f64 {
    let space = sketch.space();
    let mut acc = 0.0;
    if sketch.is_empty() {
        for _ in 0..params.batch {
            rng.next_index(space);
        }
        return 0.0;
    }
    for _ in 0..params.batch {
        let i = rng.next_index(space);
        acc += f64::from(q.eval(i)) * sketch.point_eval(i);
    }
    acc / params.batch as f64
}

/// Exact `⟨q, y⟩/N` by full enumeration. Test oracle for `ip_est`.
pub fn ip_exact(q: &Query, sketch: &GradientSketch) -> Result<f64> {
    let space = sketch.space();
    if space.bits() > ENUMERATION_CAP_BITS {
        return Err(Error::ExactOracleInfeasible(space.bits()));
    }
    let mut acc = 0.0;
    for i in 0..space.size() {
        acc += f64::from(q.eval(i)) * sketch.point_eval(i);
    }
    Ok(acc / space.size() as f64)
}

/// How the per-round sample count is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchMode {
    /// `⌈0.5·ε⁻²·T²·ln(2T/δ)⌉` — the sign-corrected literal formula. Kept
    /// for documentation; astronomically large for realistic parameters.
    PaperLiteral,
    /// `⌈R²·ln(2/δ)/(2ε²)⌉` for per-term range width `R` supplied by the
    /// caller (the worst-case width is `16/(λε)` at a full sketch, but a
    /// practical bound on `2·max|y|` is usually far smaller).
    HoeffdingTight { range: f64 },
    /// Explicit batch size pinned by the experiment config.
    Fixed { batch: u64 },
}

/// Resolve the per-round batch size for one game.
pub fn batch_size(eps_est: f64, delta_est: f64, rounds: u64, mode: BatchMode) -> Result<u64> {
    if !(eps_est > 0.0 && eps_est < 1.0) {
        return Err(Error::invalid("eps_est", "must lie in (0,1)"));
    }
    if !(delta_est > 0.0 && delta_est < 1.0) {
        return Err(Error::invalid("delta_est", "must lie in (0,1)"));
    }
    if rounds == 0 {
        return Err(Error::invalid("rounds", "must be positive"));
    }
    let raw = match mode {
        BatchMode::PaperLiteral => {
            let t = rounds as f64;
            0.5 * eps_est.powi(-2) * t * t * (2.0 * t / delta_est).ln()
        }
        BatchMode::HoeffdingTight { range } => {
            if !(range > 0.0 && range.is_finite()) {
                return Err(Error::invalid("range", "must be positive and finite"));
            }
            range * range * (2.0 / delta_est).ln() / (2.0 * eps_est * eps_est)
        }
        BatchMode::Fixed { batch } => {
            if batch == 0 {
                return Err(Error::invalid("batch", "must be positive"));
            }
            return Ok(batch);
        }
    };
    let b = raw.ceil();
    if !b.is_finite() || b > u64::MAX as f64 {
        return Err(Error::invalid("batch", format!("computed size {b} overflows")));
    }
    Ok((b as u64).max(1))
}

/// Loss `f(x) = |⟨grad, x⟩ − offset|` with `‖grad‖ ≤ 1`.
#[derive(Debug, Clone)]
pub struct AbsAffineLoss {
    pub grad: Vec<f64>,
    pub offset: f64,
}

impl AbsAffineLoss {
    pub fn value(&self, x: &[f64]) -> f64 {
        (dot(&self.grad, x) - self.offset).abs()
    }
}

#[derive(Debug, Clone)]
pub struct RegretReport {
    /// `x_t` used at each step, starting from the origin.
    pub iterates: Vec<Vec<f64>>,
    /// `Σ_t [f_t(x_t) − f_t(x*)]` against the supplied comparator.
    pub regret: f64,
    /// `1/(2α) + α·|T|/2`.
    pub bound: f64,
}

impl RegretReport {
    pub fn within_bound(&self) -> bool {
        self.regret <= self.bound + 1e-9
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Run unconstrained subgradient descent `x_{t+1} = x_t − α·∇f_t(x_t)` from
/// the origin over the given losses and report the regret against `x_star`
/// (which must lie in the unit ball) together with the `1/(2α) + α|T|/2`
/// bound it may never exceed.
pub fn ogd_regret_simulate(
    losses: &[AbsAffineLoss],
    alpha: f64,
    x_star: &[f64],
) -> Result<RegretReport> {
    if losses.is_empty() {
        return Err(Error::invalid("losses", "need at least one loss"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", "step size must be positive"));
    }
    let dim = losses[0].grad.len();
    for loss in losses {
        if loss.grad.len() != dim {
            return Err(Error::invalid("losses", "inconsistent dimensions"));
        }
        if norm(&loss.grad) > 1.0 + 1e-12 {
            return Err(Error::GradientNormExceedsOne);
        }
    }
    if x_star.len() != dim {
        return Err(Error::invalid("x_star", "dimension mismatch"));
    }
    if norm(x_star) > 1.0 + 1e-12 {
        return Err(Error::invalid("x_star", "comparator must lie in the unit ball"));
    }

    let mut x = vec![0.0; dim];
    let mut iterates = Vec::with_capacity(losses.len());
    let mut regret = 0.0;
    for loss in losses {
        iterates.push(x.clone());
        let h = dot(&loss.grad, &x) - loss.offset;
        regret += h.abs() - loss.value(x_star);
        // Subgradient of |h|: ±grad away from the kink; at h = 0 the
        // subdifferential contains 0, and picking it keeps a minimizer
        // stationary.
        let s = if h > 0.0 {
            1.0
        } else if h < 0.0 {
            -1.0
        } else {
            0.0
        };
        if s != 0.0 {
            for (xi, gi) in x.iter_mut().zip(&loss.grad) {
                *xi -= alpha * s * gi;
            }
        }
    }
    let bound = 1.0 / (2.0 * alpha) + alpha * losses.len() as f64 / 2.0;
    Ok(RegretReport {
        iterates,
        regret,
        bound,
    })
}
