//! Statistical query oracle for feature–label distributions with a known
//! feature marginal and an unknown ±1 labeling.
//!
//! Seeds split as (feature seed, label bit): the low n−1 bits drive the
//! feature sampler `h`, the top bit encodes the label `y = 2r − 1`. Under
//! the uniform prior the true labeled distribution has density exactly 1/2,
//! so the answering mechanism applies directly. Real-valued queries
//! φ: (x, y) → [−1, 1] are reduced to ±1 queries by deterministic
//! hash-thresholding, which keeps each randomized query total over the whole
//! seed space with O(1) memory.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::rng::{mix64, RngStream};
use crate::seedspace::{Distribution, Query, SeedSpace, ENUMERATION_CAP_BITS};

type FeatureFn = dyn Fn(u64) -> u64 + Send + Sync;
type LabelFn = dyn Fn(u64) -> i8 + Send + Sync;

/// The (feature sampler, labeling) pair plus the seed encoding.
#[derive(Clone)]
pub struct LabeledPrior {
    space: SeedSpace,
    features: Arc<FeatureFn>,
    label: Arc<LabelFn>,
}

impl LabeledPrior {
    /// `n` total seed bits: n−1 feature-seed bits plus the label bit.
    pub fn new<H, F>(n: u16, features: H, label: F) -> Result<Self>
    where
        H: Fn(u64) -> u64 + Send + Sync + 'static,
        F: Fn(u64) -> i8 + Send + Sync + 'static,
    {
        if n < 2 {
            return Err(Error::invalid("n", "need at least one feature bit plus the label bit"));
        }
        Ok(LabeledPrior {
            space: SeedSpace::new(n)?,
            features: Arc::new(features),
            label: Arc::new(label),
        })
    }

    /// Features are the raw (n−1)-bit seeds.
    pub fn uniform_features<F>(n: u16, label: F) -> Result<Self>
    where
        F: Fn(u64) -> i8 + Send + Sync + 'static,
    {
        LabeledPrior::new(n, |r| r, label)
    }

    pub fn space(&self) -> SeedSpace {
        self.space
    }

    pub fn feature_bits(&self) -> u16 {
        self.space.bits() - 1
    }

    fn feature_mask(&self) -> u64 {
        (1u64 << self.feature_bits()) - 1
    }

    /// Seed → (feature, label), label from the top bit as y = 2r − 1.
    #[inline]
    pub fn decode(&self, seed: u64) -> (u64, i8) {
        let x = (self.features)(seed & self.feature_mask());
        let y = if (seed >> self.feature_bits()) & 1 == 1 {
            1
        } else {
            -1
        };
        (x, y)
    }

    #[inline]
    pub fn label_of(&self, feature: u64) -> i8 {
        (self.label)(feature)
    }

    fn encode(&self, feature_seed: u64, label: i8) -> u64 {
        feature_seed | (u64::from(label == 1) << self.feature_bits())
    }

    /// The uniform prior over seeds.
    pub fn prior_distribution(&self) -> Distribution {
        Distribution::uniform(self.space)
    }

    /// The true labeled distribution, pulled back to the seed space: a
    /// uniform feature seed with its correct label bit. Carries an explicit
    /// PMF when enumerable; sampling always costs one draw-unit.
    pub fn target_distribution(&self) -> Result<Distribution> {
        let mask = self.feature_mask();
        let this = self.clone();
        let sampler = move |rng: &mut RngStream| {
            let r = rng.next_u64() & mask;
            let y = this.label_of((this.features)(r));
            this.encode(r, y)
        };
        let pmf = if self.space.bits() <= ENUMERATION_CAP_BITS {
            let mut pmf = vec![0.0; self.space.size() as usize];
            let mass = 1.0 / (1u64 << self.feature_bits()) as f64;
            for r in 0..(1u64 << self.feature_bits()) {
                let y = self.label_of((self.features)(r));
                pmf[self.encode(r, y) as usize] += mass;
            }
            Some(pmf)
        } else {
            None
        };
        Distribution::from_sampler(self.space, sampler, pmf)
    }

    /// Exact `φ(D)` over the labeled distribution, by enumeration of the
    /// feature seeds.
    pub fn real_query_mean(&self, phi: &RealQuery) -> Result<f64> {
        if self.space.bits() > ENUMERATION_CAP_BITS {
            return Err(Error::ExactOracleInfeasible(self.space.bits()));
        }
        let count = 1u64 << self.feature_bits();
        let mut acc = 0.0;
        for r in 0..count {
            let x = (self.features)(r);
            acc += phi.eval(x, self.label_of(x));
        }
        Ok(acc / count as f64)
    }
}

impl std::fmt::Debug for LabeledPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LabeledPrior")
            .field("n", &self.space.bits())
            .finish()
    }
}

type RealFn = dyn Fn(u64, i8) -> f64 + Send + Sync;

/// A [−1, 1]-valued query over (feature, label) pairs.
#[derive(Clone)]
pub struct RealQuery {
    name: String,
    eval: Arc<RealFn>,
}

impl RealQuery {
    pub fn new<F>(name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(u64, i8) -> f64 + Send + Sync + 'static,
    {
        RealQuery {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, feature: u64, label: i8) -> f64 {
        (self.eval)(feature, label)
    }

    pub fn constant(c: f64) -> Self {
        RealQuery::new(format!("constant:{c}"), move |_, _| c)
    }

    /// φ(x, y) = y.
    pub fn label_mean() -> Self {
        RealQuery::new("label-mean", |_, y| f64::from(y))
    }

    /// φ(x, y) = y·χ_mask(x): correlation of the label with a character.
    pub fn character(mask: u64) -> Self {
        RealQuery::new(format!("character:{mask:#x}"), move |x, y| {
            let chi = if (x & mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            f64::from(y) * chi
        })
    }

    /// φ(x, y) = y·(2·|x ∧ mask|/k − 1): a genuinely fractional query.
    pub fn margin(mask: u64) -> Self {
        let k = mask.count_ones().max(1) as f64;
        RealQuery::new(format!("margin:{mask:#x}"), move |x, y| {
            let frac = (x & mask).count_ones() as f64 / k;
            f64::from(y) * (2.0 * frac - 1.0)
        })
    }

    /// Look up a catalog query by `name[:params]` spec.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let (kind, arg) = match spec.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (spec, None),
        };
        let parse_mask = |arg: Option<&str>| -> Result<u64> {
            let raw = arg.ok_or_else(|| Error::invalid("query", "missing mask"))?;
            let raw = raw.trim();
            let parsed = if let Some(hex) = raw.strip_prefix("0x") {
                u64::from_str_radix(hex, 16)
            } else {
                raw.parse()
            };
            parsed.map_err(|e| Error::invalid("query", format!("bad mask {raw}: {e}")))
        };
        match kind {
            "constant" => {
                let c: f64 = arg
                    .ok_or_else(|| Error::invalid("query", "missing constant"))?
                    .parse()
                    .map_err(|e| Error::invalid("query", format!("bad constant: {e}")))?;
                if !(-1.0..=1.0).contains(&c) {
                    return Err(Error::invalid("query", "constant outside [-1,1]"));
                }
                Ok(RealQuery::constant(c))
            }
            "label-mean" => Ok(RealQuery::label_mean()),
            "character" => Ok(RealQuery::character(parse_mask(arg)?)),
            "margin" => Ok(RealQuery::margin(parse_mask(arg)?)),
            other => Err(Error::invalid("query", format!("unknown query kind `{other}`"))),
        }
    }
}

impl std::fmt::Debug for RealQuery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RealQuery({})", self.name)
    }
}

fn threshold_u01(salt: u64, index: u64, feature: u64, label: i8) -> f64 {
    let mut h = mix64(salt ^ mix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    h = mix64(h ^ mix64(feature.wrapping_mul(0xA076_1D64_78BD_642F)));
    h = mix64(h ^ (label as u64).wrapping_mul(0xE703_7ED1_A0B4_28DB));
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    (h >> 11) as f64 * SCALE
}

/// The `index`-th Boolean randomization of φ: a total deterministic ±1 query
/// with `q(x,y) = +1` iff a pseudo-uniform draw hashed from
/// `(salt, index, x, y)` falls below `(1 + φ(x,y))/2`. Over indices the
/// pointwise mean is unbiased for φ. The range of φ is validated by
/// enumeration (or a probe sample above the enumeration cap).
pub fn booleanize_query(
    prior: &LabeledPrior,
    phi: &RealQuery,
    index: u64,
    salt: u64,
) -> Result<Query> {
    let space = prior.space();
    if space.bits() <= ENUMERATION_CAP_BITS {
        for seed in 0..space.size() {
            let (x, y) = prior.decode(seed);
            let v = phi.eval(x, y);
            if !v.is_finite() || v.abs() > 1.0 {
                return Err(Error::QueryRangeExceeded { point: seed, value: v });
            }
        }
    } else {
        let mut probe = salt.wrapping_add(0x1234_5678_9ABC_DEF0);
        for _ in 0..4096 {
            probe = mix64(probe);
            let seed = probe & space.mask();
            let (x, y) = prior.decode(seed);
            let v = phi.eval(x, y);
            if !v.is_finite() || v.abs() > 1.0 {
                return Err(Error::QueryRangeExceeded { point: seed, value: v });
            }
        }
    }
    let prior = prior.clone();
    let phi = phi.clone();
    let q = Query::from_fn(space, move |seed| {
        let (x, y) = prior.decode(seed);
        let v = phi.eval(x, y);
        if threshold_u01(salt, index, x, y) < (1.0 + v) / 2.0 {
            1
        } else {
            -1
        }
    });
    Ok(q.materialize_if_small())
}

/// Default randomization batch: `⌈2·(2/ε)²·ln(4T/δ)⌉` from a two-sided
/// Hoeffding bound at accuracy ε/2 with the failure budget split evenly
/// between randomization and the mechanism.
pub fn dsq_batch_size(epsilon: f64, delta: f64, queries: u64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon", "must lie in (0,1)"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", "must lie in (0,1)"));
    }
    if queries == 0 {
        return Err(Error::invalid("queries", "must be positive"));
    }
    let b = (2.0 * (2.0 / epsilon).powi(2) * (4.0 * queries as f64 / delta).ln()).ceil();
    Ok(b as u64)
}

/// Answer one real-valued query through the mechanism: submit `batch`
/// Boolean randomizations and average their answers.
pub fn dsq_answer(
    prior: &LabeledPrior,
    phi: &RealQuery,
    mech: &mut Mechanism,
    batch: u64,
    salt: u64,
) -> Result<f64> {
    if batch == 0 {
        return Err(Error::invalid("batch", "must be positive"));
    }
    if mech.rounds_remaining() < batch {
        return Err(Error::InsufficientRounds {
            needed: batch,
            remaining: mech.rounds_remaining(),
        });
    }
    let mut sum = 0.0;
    for j in 0..batch {
        let q = booleanize_query(prior, phi, j, salt)?;
        sum += mech.answer(&q)?.answer;
    }
    Ok(sum / batch as f64)
}
