//! Predicate singling-out harness: row isolation, predicate-class
//! classification, the end-of-game predicate protocol, and the closed-form
//! trivial-adversary baseline.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::game::{Analyst, HistoryItem};
use crate::mechanism::{Mechanism, MechanismParams};
use crate::rng::{RngStream, StreamId};
use crate::seedspace::{Dataset, Distribution, Query, SeedSpace, ENUMERATION_CAP_BITS};

const PRED_PROBES: u64 = 128;

type PredFn = dyn Fn(u64) -> bool + Send + Sync;

/// A {0,1}-valued predicate over the seed space.
#[derive(Clone)]
pub struct Predicate {
    space: SeedSpace,
    id: u64,
    repr: PredRepr,
}

#[derive(Clone)]
enum PredRepr {
    Never,
    Always,
    Singleton(u64),
    Func(Arc<PredFn>),
}

impl Predicate {
    fn fingerprint(space: SeedSpace, eval: &dyn Fn(u64) -> bool) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut fold = |x: u64| {
            h = (h ^ x).wrapping_mul(0x0000_0100_0000_01B3);
        };
        fold(space.bits() as u64);
        for j in 0..PRED_PROBES {
            let i = crate::rng::mix64(0x70DE_CAFE_0000_0000u64.wrapping_add(j)) & space.mask();
            fold(i ^ ((eval(i) as u64) << 63));
        }
        h
    }

    fn build(space: SeedSpace, repr: PredRepr) -> Predicate {
        let id = {
            let repr = repr.clone();
            Predicate::fingerprint(space, &move |i| match &repr {
                PredRepr::Never => false,
                PredRepr::Always => true,
                PredRepr::Singleton(s) => i == *s,
                PredRepr::Func(f) => f(i),
            })
        };
        Predicate { space, id, repr }
    }

    pub fn never(space: SeedSpace) -> Predicate {
        Predicate::build(space, PredRepr::Never)
    }

    pub fn always(space: SeedSpace) -> Predicate {
        Predicate::build(space, PredRepr::Always)
    }

    pub fn singleton(space: SeedSpace, seed: u64) -> Predicate {
        Predicate::build(space, PredRepr::Singleton(seed))
    }

    pub fn from_fn<F>(space: SeedSpace, f: F) -> Predicate
    where
        F: Fn(u64) -> bool + Send + Sync + 'static,
    {
        Predicate::build(space, PredRepr::Func(Arc::new(f)))
    }

    #[inline]
    pub fn eval(&self, i: u64) -> bool {
        match &self.repr {
            PredRepr::Never => false,
            PredRepr::Always => true,
            PredRepr::Singleton(s) => i == *s,
            PredRepr::Func(f) => f(i),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn space(&self) -> SeedSpace {
        self.space
    }

    /// Exact `p(D)` from the PMF. Singletons avoid the enumeration.
    pub fn mass_exact(&self, dist: &Distribution) -> Result<f64> {
        let pmf = dist
            .pmf()
            .ok_or(Error::GroundTruthUnavailable("distribution has no PMF"))?;
        match &self.repr {
            PredRepr::Never => Ok(0.0),
            PredRepr::Always => Ok(1.0),
            PredRepr::Singleton(s) => Ok(pmf[*s as usize]),
            PredRepr::Func(f) => {
                if self.space.bits() > ENUMERATION_CAP_BITS {
                    return Err(Error::ExactOracleInfeasible(self.space.bits()));
                }
                let mut acc = 0.0;
                for (i, p) in pmf.iter().enumerate() {
                    if f(i as u64) {
                        acc += p;
                    }
                }
                Ok(acc)
            }
        }
    }

    /// Monte-Carlo `p(D)` with a Hoeffding interval at the given confidence.
    pub fn mass_estimate(
        &self,
        dist: &Distribution,
        samples: u64,
        confidence: f64,
        rng: &mut RngStream,
    ) -> Result<(f64, f64)> {
        if samples == 0 {
            return Err(Error::GroundTruthUnavailable("zero-sample budget"));
        }
        if confidence <= 0.0 || confidence >= 1.0 {
            return Err(Error::invalid("confidence", "must lie in (0,1)"));
        }
        let mut hits = 0u64;
        for _ in 0..samples {
            if self.eval(dist.sample(rng)) {
                hits += 1;
            }
        }
        let mean = hits as f64 / samples as f64;
        let alpha = 1.0 - confidence;
        // Values in {0,1}: range width 1.
        let half_width = ((2.0 / alpha).ln() / (2.0 * samples as f64)).sqrt();
        Ok((mean, half_width))
    }
}

impl std::fmt::Debug for Predicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Predicate")
            .field("space", &self.space.bits())
            .field("id", &format_args!("{:016x}", self.id))
            .finish()
    }
}

/// True iff exactly one sample row satisfies the predicate, counting
/// multiset multiplicity — a repeated matching row does not isolate.
/// Exact counting; equivalent to `p(S) = 1/M` in rational arithmetic.
pub fn iso_check(p: &Predicate, dataset: &Dataset) -> bool {
    let mut matches = 0u64;
    for &i in dataset.elems() {
        if p.eval(i) {
            matches += 1;
            if matches > 1 {
                return false;
            }
        }
    }
    matches == 1
}

/// Finite-sample proxies for the asymptotic predicate classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredicateClass {
    /// `p(D) ≤ M^{-c_low}`.
    Low,
    /// `p(D) ≥ c_high·ln(M)/M`.
    High,
    Neither,
}

impl PredicateClass {
    pub fn label(self) -> &'static str {
        match self {
            PredicateClass::Low => "low",
            PredicateClass::High => "high",
            PredicateClass::Neither => "neither",
        }
    }
}

/// Class thresholds. The asymptotic classes admit no canonical finite
/// cutoff; these are explicit configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassThresholds {
    pub c_low: f64,
    pub c_high: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        ClassThresholds {
            c_low: 2.0,
            c_high: 10.0,
        }
    }
}

impl ClassThresholds {
    pub fn low_cutoff(&self, m: u64) -> f64 {
        (m as f64).powf(-self.c_low)
    }

    pub fn high_cutoff(&self, m: u64) -> f64 {
        self.c_high * (m as f64).ln() / m as f64
    }
}

/// Classify from an exact mass.
pub fn classify_mass(mass: f64, m: u64, thresholds: &ClassThresholds) -> PredicateClass {
    if mass <= thresholds.low_cutoff(m) {
        PredicateClass::Low
    } else if mass >= thresholds.high_cutoff(m) {
        PredicateClass::High
    } else {
        PredicateClass::Neither
    }
}

/// Classify from an interval; errors if the interval straddles a threshold.
pub fn classify_interval(
    lo: f64,
    hi: f64,
    m: u64,
    thresholds: &ClassThresholds,
) -> Result<PredicateClass> {
    let low_cut = thresholds.low_cutoff(m);
    let high_cut = thresholds.high_cutoff(m);
    if hi <= low_cut {
        Ok(PredicateClass::Low)
    } else if lo >= high_cut {
        Ok(PredicateClass::High)
    } else if lo > low_cut && hi < high_cut {
        Ok(PredicateClass::Neither)
    } else {
        Err(Error::InconclusiveClassification { lo, hi })
    }
}

/// Classify against an exact PMF.
pub fn classify_predicate(
    p: &Predicate,
    dist: &Distribution,
    m: u64,
    thresholds: &ClassThresholds,
) -> Result<PredicateClass> {
    Ok(classify_mass(p.mass_exact(dist)?, m, thresholds))
}

/// `M·p·(1−p)^{M−1}`: the probability that a fixed predicate of mass `p`
/// matches exactly one of `M` i.i.d. rows.
pub fn baseline_isolation_prob(p_mass: f64, m: u64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p_mass));
    debug_assert!(m >= 1);
    m as f64 * p_mass * (1.0 - p_mass).powf((m - 1) as f64)
}

/// log₁₀ of the security envelope `ε⁻¹·T^{128/(λε)²}·rate`, computed in log
/// space; the middle factor overflows any float directly.
pub fn pso_envelope_log10(epsilon: f64, lambda: f64, rounds: u64, rate: f64) -> f64 {
    let rate = rate.max(f64::MIN_POSITIVE);
    -epsilon.log10()
        + (128.0 / ((lambda * epsilon) * (lambda * epsilon))) * (rounds as f64).log10()
        + rate.log10()
}

/// An analyst that additionally emits a predicate after the last round.
pub trait PsoAdversary: Analyst {
    fn final_predicate(&mut self, history: &[HistoryItem], rng: &mut RngStream) -> Predicate;
}

/// Ignores all answers; emits a singleton predicate on a uniformly random
/// seed. The reference point the security bound is measured against.
pub struct TrivialAdversary {
    dist: Distribution,
}

impl TrivialAdversary {
    pub fn new(dist: Distribution) -> Self {
        TrivialAdversary { dist }
    }
}

impl Analyst for TrivialAdversary {
    fn name(&self) -> &str {
        "trivial"
    }

    fn choose_distribution(&mut self, _rng: &mut RngStream) -> Distribution {
        self.dist.clone()
    }

    fn next_query(&mut self, _history: &[HistoryItem], _rng: &mut RngStream) -> Query {
        Query::constant(self.dist.space(), 1)
    }
}

impl PsoAdversary for TrivialAdversary {
    fn final_predicate(&mut self, _history: &[HistoryItem], rng: &mut RngStream) -> Predicate {
        let space = self.dist.space();
        Predicate::singleton(space, rng.next_index(space))
    }
}

/// Answer-guided bisection: each round asks the ±1 indicator of the left
/// half of its current interval and keeps the half whose answer exceeded
/// the population expectation; emits a singleton inside the final interval.
pub struct BisectAdversary {
    dist: Distribution,
    lo: u64,
    hi: u64,
}

impl BisectAdversary {
    pub fn new(dist: Distribution) -> Self {
        let n = dist.space().size();
        BisectAdversary { dist, lo: 0, hi: n }
    }
}

impl Analyst for BisectAdversary {
    fn name(&self) -> &str {
        "bisect"
    }

    fn choose_distribution(&mut self, _rng: &mut RngStream) -> Distribution {
        self.dist.clone()
    }

    fn next_query(&mut self, history: &[HistoryItem], _rng: &mut RngStream) -> Query {
        let space = self.dist.space();
        // Digest the previous answer before asking the next question.
        if let Some(last) = history.last() {
            if self.hi - self.lo > 1 {
                let mid = self.lo + (self.hi - self.lo) / 2;
                let width = (mid - self.lo) as f64 / space.size() as f64;
                let expect = 2.0 * width - 1.0;
                if last.answer > expect {
                    self.hi = mid;
                } else {
                    self.lo = mid;
                }
            }
        }
        let (lo, hi) = (self.lo, self.lo + (self.hi - self.lo) / 2);
        Query::from_fn(space, move |i| if (lo..hi).contains(&i) { 1 } else { -1 })
    }
}

impl PsoAdversary for BisectAdversary {
    fn final_predicate(&mut self, _history: &[HistoryItem], rng: &mut RngStream) -> Predicate {
        let span = (self.hi - self.lo).max(1);
        let pick = self.lo + rng.next_u64() % span;
        Predicate::singleton(self.dist.space(), pick)
    }
}

/// Outcome of one PSO game.
#[derive(Debug, Clone)]
pub struct PsoOutcome {
    pub master_seed: u64,
    pub predicate_id: u64,
    pub isolated: bool,
    /// None when classification was inconclusive; such runs are excluded
    /// from success tallies.
    pub class: Option<PredicateClass>,
    pub p_mass: f64,
    /// isolated ∧ class == target; None when flagged inconclusive.
    pub success: Option<bool>,
    pub log10_envelope: f64,
    pub budget_exhausted: bool,
}

/// Run the T-round interaction, collect the final predicate, and evaluate
/// isolation and class membership against the target class.
pub fn run_pso_game(
    adversary: &mut dyn PsoAdversary,
    params: &MechanismParams,
    samples: u64,
    master_seed: u64,
    target: PredicateClass,
    thresholds: &ClassThresholds,
) -> Result<PsoOutcome> {
    params.validate()?;
    let mut rng_analyst = RngStream::new(master_seed, StreamId::Analyst);
    let rng_mech = RngStream::new(master_seed, StreamId::Mechanism);
    let mut rng_env = RngStream::new(master_seed, StreamId::Environment);

    let dist = adversary.choose_distribution(&mut rng_analyst);
    if dist.space() != params.space {
        return Err(Error::invalid("distribution", "seed space mismatch"));
    }
    let dataset = dist.sample_dataset(samples, &mut rng_env)?;
    let mut mech = Mechanism::new(params.clone(), dataset.clone(), rng_mech)?;

    let mut history: Vec<HistoryItem> = Vec::with_capacity(params.rounds as usize);
    for t in 1..=params.rounds {
        let q = adversary.next_query(&history, &mut rng_analyst);
        if q.space() != params.space {
            return Err(Error::MalformedQuery {
                round: t,
                reason: "seed space mismatch".into(),
            });
        }
        let out = mech.answer(&q)?;
        history.push(HistoryItem {
            query: q,
            answer: out.answer,
        });
    }
    let predicate = adversary.final_predicate(&history, &mut rng_analyst);
    let isolated = iso_check(&predicate, &dataset);
    let p_mass = predicate.mass_exact(&dist)?;
    let class = classify_mass(p_mass, samples, thresholds);
    let log10_envelope = pso_envelope_log10(
        params.epsilon,
        params.lambda,
        params.rounds,
        baseline_isolation_prob(p_mass, samples),
    );
    Ok(PsoOutcome {
        master_seed,
        predicate_id: predicate.id(),
        isolated,
        class: Some(class),
        p_mass,
        success: Some(isolated && class == target),
        log10_envelope,
        budget_exhausted: mech.budget_exhausted(),
    })
}
