//! The adaptive query game harness: analyst interface, attack library,
//! accuracy evaluation, and the naive empirical-mean baseline.
//!
//! The analyst interface is the information barrier: an analyst receives
//! only the query/answer history and its own random stream, never the
//! dataset. Streams are split per role (analyst / mechanism / environment)
//! from one master seed, so a whole game is a pure function of
//! `(params, M, analyst, master seed)`.

use std::collections::HashMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, MechanismParams};
use crate::replay::{analyst_id_bytes, Transcript, TranscriptHeader};
use crate::rng::{mix64, RngStream, StreamId};
use crate::seedspace::{Dataset, Distribution, Query, SeedSpace};

/// One completed exchange, as the analyst sees it.
#[derive(Debug, Clone)]
pub struct HistoryItem {
    pub query: Query,
    pub answer: f64,
}

/// An adaptive analyst. Structurally incapable of reading the dataset: it
/// only ever sees its own stream and the history.
pub trait Analyst {
    fn name(&self) -> &str;

    /// Pick the target distribution. Always called exactly once per game
    /// (and per replay) so stream usage stays aligned across modes.
    fn choose_distribution(&mut self, rng: &mut RngStream) -> Distribution;

    fn next_query(&mut self, history: &[HistoryItem], rng: &mut RngStream) -> Query;
}

/// Emits one fixed query every round.
pub struct StaticAnalyst {
    dist: Distribution,
    query: Query,
}

impl StaticAnalyst {
    pub fn new(dist: Distribution, query: Query) -> Self {
        StaticAnalyst { dist, query }
    }
}

impl Analyst for StaticAnalyst {
    fn name(&self) -> &str {
        "static"
    }

    fn choose_distribution(&mut self, _rng: &mut RngStream) -> Distribution {
        self.dist.clone()
    }

    fn next_query(&mut self, _history: &[HistoryItem], _rng: &mut RngStream) -> Query {
        self.query.clone()
    }
}

/// Fresh uniformly random ±1 query every round.
pub struct RandomAnalyst {
    dist: Distribution,
}

impl RandomAnalyst {
    pub fn new(dist: Distribution) -> Self {
        RandomAnalyst { dist }
    }
}

impl Analyst for RandomAnalyst {
    fn name(&self) -> &str {
        "random"
    }

    fn choose_distribution(&mut self, _rng: &mut RngStream) -> Distribution {
        self.dist.clone()
    }

    fn next_query(&mut self, _history: &[HistoryItem], rng: &mut RngStream) -> Query {
        Query::random(self.dist.space(), rng)
    }
}

/// The sign-aggregation overfitting attack: random probes for T−1 rounds,
/// then the answer-correlated aggregate `q*(i) = sign(Σ a_t·q_t(i))`.
pub struct OverfitAnalyst {
    dist: Distribution,
    rounds: u64,
}

impl OverfitAnalyst {
    pub fn new(dist: Distribution, rounds: u64) -> Self {
        OverfitAnalyst { dist, rounds }
    }
}

impl Analyst for OverfitAnalyst {
    fn name(&self) -> &str {
        "overfit"
    }

    fn choose_distribution(&mut self, _rng: &mut RngStream) -> Distribution {
        self.dist.clone()
    }

    fn next_query(&mut self, history: &[HistoryItem], rng: &mut RngStream) -> Query {
        let space = self.dist.space();
        if (history.len() as u64) < self.rounds - 1 {
            return Query::random(space, rng);
        }
        let terms: Vec<(f64, Query)> = history
            .iter()
            .map(|h| (h.answer, h.query.clone()))
            .collect();
        Query::aggregate_sign(space, &terms)
    }
}

/// A workload mixing the interesting regimes: fresh random probes (answered
/// off the sketch), biased subcube queries (which trigger updates), repeats
/// of earlier subcubes (answered from what the sketch learned), and
/// answer-correlated aggregates.
pub struct MixedAnalyst {
    dist: Distribution,
    asked_subcubes: Vec<(u64, u64)>,
}

impl MixedAnalyst {
    pub fn new(dist: Distribution) -> Self {
        MixedAnalyst {
            dist,
            asked_subcubes: Vec::new(),
        }
    }

    fn subcube(&mut self, rng: &mut RngStream) -> Query {
        let space = self.dist.space();
        let n = space.bits() as u64;
        let draw = rng.next_u64();
        let width = 1 + (draw % 5).min(n - 1);
        let mut mask = 0u64;
        let mut bits = mix64(draw);
        for _ in 0..width {
            mask |= 1 << (bits % n);
            bits = mix64(bits);
        }
        let pattern = rng.next_u64() & space.mask();
        self.asked_subcubes.push((mask, pattern));
        Query::subcube(space, mask, pattern)
    }
}

impl Analyst for MixedAnalyst {
    fn name(&self) -> &str {
        "mixed"
    }

    fn choose_distribution(&mut self, _rng: &mut RngStream) -> Distribution {
        self.dist.clone()
    }

    fn next_query(&mut self, history: &[HistoryItem], rng: &mut RngStream) -> Query {
        let space = self.dist.space();
        let roll = rng.next_u64() % 100;
        if roll < 40 {
            Query::random(space, rng)
        } else if roll < 70 {
            self.subcube(rng)
        } else if roll < 90 {
            if self.asked_subcubes.is_empty() {
                self.subcube(rng)
            } else {
                let pick = rng.next_u64() as usize % self.asked_subcubes.len();
                let (mask, pattern) = self.asked_subcubes[pick];
                Query::subcube(space, mask, pattern)
            }
        } else if history.is_empty() {
            Query::constant(space, 1)
        } else {
            let terms: Vec<(f64, Query)> = history
                .iter()
                .map(|h| (h.answer, h.query.clone()))
                .collect();
            Query::aggregate_sign(space, &terms)
        }
    }
}

/// Per-round record of a completed game.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: u64,
    pub query_id: u64,
    pub answer: f64,
    /// Exact dataset mean q(S).
    pub q_dataset: f64,
    /// Exact population mean q(D), when the distribution has a PMF.
    pub q_dist: Option<f64>,
    pub updated: bool,
    pub sign: Option<i8>,
    pub estimate: f64,
    pub sketch_size: usize,
    pub elapsed_micros: u64,
}

/// Everything one game produced.
#[derive(Debug, Clone)]
pub struct GameResult {
    pub master_seed: u64,
    pub analyst: String,
    pub rounds: Vec<RoundRecord>,
    pub queries: Vec<Query>,
    pub transcript: Transcript,
    pub budget_exhausted: bool,
    pub distribution: Distribution,
}

impl GameResult {
    /// CSV with one row per round:
    /// `round,answer,q_S,q_D,abs_err_D,updated,sketch_size`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,answer,q_S,q_D,abs_err_D,updated,sketch_size\n");
        for r in &self.rounds {
            let (qd, err) = match r.q_dist {
                Some(qd) => (qd.to_string(), (r.answer - qd).abs().to_string()),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.round, r.answer, r.q_dataset, qd, err, r.updated as u8, r.sketch_size
            ));
        }
        out
    }

    /// Extended debug CSV: `round,estimate,q_S,updated,sign,answer`.
    pub fn to_debug_csv(&self) -> String {
        let mut out = String::from("round,estimate,q_S,updated,sign,answer\n");
        for r in &self.rounds {
            let sign = r.sign.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.round, r.estimate, r.q_dataset, r.updated as u8, sign, r.answer
            ));
        }
        out
    }

    pub fn update_count(&self) -> usize {
        self.transcript.entries.len()
    }

    pub fn max_sketch_size(&self) -> usize {
        self.rounds.iter().map(|r| r.sketch_size).max().unwrap_or(0)
    }
}

/// Where the target distribution comes from.
#[derive(Debug, Clone)]
pub enum DistSource {
    /// Game line 1: the analyst picks it.
    AnalystChosen,
    /// Environment-chosen mode: the analyst is still consulted (stream
    /// alignment) but the harness uses this distribution.
    Environment(Distribution),
}

#[derive(Debug, Clone)]
pub struct GameSetup {
    pub source: DistSource,
    /// Compute exact per-round q(D) when a PMF is available.
    pub ground_truth: bool,
}

impl Default for GameSetup {
    fn default() -> Self {
        GameSetup {
            source: DistSource::AnalystChosen,
            ground_truth: true,
        }
    }
}

/// Run one adaptive query game: distribution choice, dataset sampling on the
/// environment stream, then T query/answer rounds.
pub fn run_aq_game(
    analyst: &mut dyn Analyst,
    params: &MechanismParams,
    samples: u64,
    master_seed: u64,
) -> Result<GameResult> {
    run_aq_game_with(analyst, params, samples, master_seed, &GameSetup::default())
}

pub fn run_aq_game_with(
    analyst: &mut dyn Analyst,
    params: &MechanismParams,
    samples: u64,
    master_seed: u64,
    setup: &GameSetup,
) -> Result<GameResult> {
    params.validate()?;
    let mut rng_analyst = RngStream::new(master_seed, StreamId::Analyst);
    let rng_mech = RngStream::new(master_seed, StreamId::Mechanism);
    let mut rng_env = RngStream::new(master_seed, StreamId::Environment);

    let chosen = analyst.choose_distribution(&mut rng_analyst);
    let dist = match &setup.source {
        DistSource::AnalystChosen => chosen,
        DistSource::Environment(d) => d.clone(),
    };
    if dist.space() != params.space {
        return Err(Error::invalid("distribution", "seed space mismatch"));
    }
    let dataset = dist.sample_dataset(samples, &mut rng_env)?;
    let mut mech = Mechanism::new(params.clone(), dataset, rng_mech)?;

    let mut history: Vec<HistoryItem> = Vec::with_capacity(params.rounds as usize);
    let mut records = Vec::with_capacity(params.rounds as usize);
    let mut queries = Vec::with_capacity(params.rounds as usize);
    let mut truth_cache: HashMap<u64, f64> = HashMap::new();

    for t in 1..=params.rounds {
        let started = Instant::now();
        let q = analyst.next_query(&history, &mut rng_analyst);
        if q.space() != params.space {
            return Err(Error::MalformedQuery {
                round: t,
                reason: "seed space mismatch".into(),
            });
        }
        let out = mech.answer(&q)?;
        let q_dist = if setup.ground_truth && dist.pmf().is_some() {
            let id = q.id();
            let v = match truth_cache.get(&id) {
                Some(v) => *v,
                None => {
                    let v = dist.query_mean_exact(&q)?;
                    truth_cache.insert(id, v);
                    v
                }
            };
            Some(v)
        } else {
            None
        };
        records.push(RoundRecord {
            round: t,
            query_id: q.id(),
            answer: out.answer,
            q_dataset: out.dataset_mean,
            q_dist,
            updated: out.updated,
            sign: out.sign,
            estimate: out.estimate,
            sketch_size: out.sketch_len,
            elapsed_micros: started.elapsed().as_micros() as u64,
        });
        queries.push(q.clone());
        history.push(HistoryItem {
            query: q,
            answer: out.answer,
        });
    }

    let header = TranscriptHeader {
        n: params.space.bits(),
        rounds: params.rounds,
        epsilon: params.epsilon,
        delta: params.delta,
        lambda: params.lambda,
        batch: mech.estimate_params().batch,
        master_seed,
        analyst_id: analyst_id_bytes(analyst.name()),
    };
    let budget_exhausted = mech.budget_exhausted();
    let transcript = Transcript::new(header, mech.transcript_entries().to_vec())?;
    Ok(GameResult {
        master_seed,
        analyst: analyst.name().to_string(),
        rounds: records,
        queries,
        transcript,
        budget_exhausted,
        distribution: dist,
    })
}

/// Accuracy of a completed game against the population values.
#[derive(Debug, Clone)]
pub struct AccuracyReport {
    pub max_error: f64,
    pub per_round: Vec<f64>,
    pub pass: bool,
    /// 1-based round attaining the max error.
    pub worst_round: u64,
}

/// Max-over-rounds |a_t − q_t(D)|; pass iff ≤ ε. Ground truth comes from the
/// PMF when present, else from a Monte-Carlo budget, else errors.
pub fn evaluate_accuracy(
    result: &GameResult,
    dist: &Distribution,
    epsilon: f64,
    mc_budget: Option<(u64, &mut RngStream)>,
) -> Result<AccuracyReport> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    let mut per_round = Vec::with_capacity(result.rounds.len());
    let mut truth_cache: HashMap<u64, f64> = HashMap::new();
    let mut mc = mc_budget;
    for (record, query) in result.rounds.iter().zip(&result.queries) {
        let id = query.id();
        let truth = match truth_cache.get(&id) {
            Some(v) => *v,
            None => {
                let v = if dist.pmf().is_some() {
                    dist.query_mean_exact(query)?
                } else if let Some((budget, rng)) = mc.as_mut() {
                    dist.query_mean_estimate(query, *budget, 0.999, rng)?.0
                } else {
                    return Err(Error::GroundTruthUnavailable(
                        "no PMF and no Monte-Carlo budget",
                    ));
                };
                truth_cache.insert(id, v);
                v
            }
        };
        per_round.push((record.answer - truth).abs());
    }
    let (worst_idx, max_error) = per_round
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("games have at least one round");
    Ok(AccuracyReport {
        max_error,
        per_round,
        pass: max_error <= epsilon,
        worst_round: worst_idx as u64 + 1,
    })
}

/// The naive mechanism: answer `q(S)` exactly, no sketch, no rounding.
pub fn baseline_empirical_mean(dataset: &Dataset, q: &Query) -> f64 {
    dataset.query_mean(q)
}

/// A game against the empirical-mean baseline, same protocol and streams.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub answers: Vec<f64>,
    pub queries: Vec<Query>,
    pub distribution: Distribution,
}

pub fn run_baseline_game(
    analyst: &mut dyn Analyst,
    space: SeedSpace,
    rounds: u64,
    samples: u64,
    master_seed: u64,
) -> Result<BaselineResult> {
    let mut rng_analyst = RngStream::new(master_seed, StreamId::Analyst);
    let mut rng_env = RngStream::new(master_seed, StreamId::Environment);
    let dist = analyst.choose_distribution(&mut rng_analyst);
    if dist.space() != space {
        return Err(Error::invalid("distribution", "seed space mismatch"));
    }
    let dataset = dist.sample_dataset(samples, &mut rng_env)?;
    let mut history = Vec::with_capacity(rounds as usize);
    let mut answers = Vec::with_capacity(rounds as usize);
    let mut queries = Vec::with_capacity(rounds as usize);
    for t in 1..=rounds {
        let q = analyst.next_query(&history, &mut rng_analyst);
        if q.space() != space {
            return Err(Error::MalformedQuery {
                round: t,
                reason: "seed space mismatch".into(),
            });
        }
        let a = baseline_empirical_mean(&dataset, &q);
        answers.push(a);
        queries.push(q.clone());
        history.push(HistoryItem { query: q, answer: a });
    }
    Ok(BaselineResult {
        answers,
        queries,
        distribution: dist,
    })
}
