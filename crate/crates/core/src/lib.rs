//! Adaptive query answering over dense seed-space distributions.
//!
//! A mechanism holds a sample from an unknown distribution over
//! `[N] = {0,1}^n` and answers adaptively chosen ±1 queries to within ε of
//! their population means, using a lazily updated gradient sketch instead of
//! per-query noise. The sketch caps its own update count, which makes the
//! whole interaction reconstructible from a succinct transcript plus frozen
//! randomness (`replay`), and that in turn drives both the sample-efficiency
//! and the predicate-singling-out measurements shipped here.
//!
//! Modules:
//! - [`seedspace`]: queries, datasets, distributions, and the pullback
//!   convention that reduces prior-generator queries to seed-space queries.
//! - [`rng`]: counter-based splittable random streams.
//! - [`sketch`]: the gradient multiset, randomized inner-product estimation
//!   with an exact oracle, batch sizing, and a regret-checked descent
//!   simulator.
//! - [`mechanism`]: the per-round answering rule.
//! - [`game`]: the adaptive query game harness and attack library.
//! - [`replay`]: transcript serialization and dataset-free reconstruction.
//! - [`dsq`]: the feature–label statistical query oracle reduction.
//! - [`pso`]: the predicate singling-out security harness.

pub mod dsq;
pub mod error;
pub mod game;
pub mod mechanism;
pub mod pso;
pub mod replay;
pub mod rng;
pub mod seedspace;
pub mod sketch;

pub use error::{Error, Result};
pub use game::{
    baseline_empirical_mean, evaluate_accuracy, run_aq_game, run_aq_game_with, Analyst,
    DistSource, GameResult, GameSetup, HistoryItem, MixedAnalyst, OverfitAnalyst, RandomAnalyst,
    StaticAnalyst,
};
pub use mechanism::{
    mistake_budget, round_to_grid, sign_pm, update_allowed, GridPoint, Mechanism, MechanismParams,
    RoundOutcome, TranscriptEntry,
};
pub use replay::{
    analyst_id_bytes, analyst_id_name, replay_run, transcript_count_bound_log2, ReplayResult,
    Transcript, TranscriptHeader,
};
pub use rng::{RngStream, StreamId};
pub use seedspace::{Dataset, Distribution, Query, SeedSpace};
pub use sketch::{
    batch_size, ip_est, ip_exact, ogd_regret_simulate, AbsAffineLoss, BatchMode, EstimateParams,
    GradientSketch, RegretReport,
};
