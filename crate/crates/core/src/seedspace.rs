//! Seed-space domain types: the query/dataset/distribution vocabulary that
//! everything else is built on.
//!
//! The domain is `[N] = {0,1}^n`. Queries are ±1-valued functions over it,
//! evaluable pointwise; distributions optionally carry an explicit PMF, which
//! unlocks exact means and density checks. Queries over some other domain
//! reachable through a deterministic generator `g` are handled by pulling
//! them back to the seed space (`Query::pullback`).

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::{mix64, RngStream};

/// Hard cap for materialized ±1 vectors: above this only callable handles.
pub const DENSE_CAP_BITS: u16 = 20;
/// Below this, hot-path constructors materialize eagerly.
pub const AUTO_DENSE_BITS: u16 = 14;
/// Cap for exact enumeration (PMF means, exact inner products).
pub const ENUMERATION_CAP_BITS: u16 = 20;

const PROBE_COUNT: u64 = 128;
const PROBE_SALT: u64 = 0x5EED_5ACE_0F1A_6E55;

/// The domain `[N] = {0,1}^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpace {
    n: u16,
}

impl SeedSpace {
    pub fn new(n: u16) -> Result<Self> {
        if n == 0 || n > 63 {
            return Err(Error::invalid("n", format!("bit width {n} not in 1..=63")));
        }
        Ok(SeedSpace { n })
    }

    pub fn bits(self) -> u16 {
        self.n
    }

    /// `N = 2^n`.
    pub fn size(self) -> u64 {
        1u64 << self.n
    }

    pub fn mask(self) -> u64 {
        self.size() - 1
    }

    pub fn contains(self, i: u64) -> bool {
        i < self.size()
    }
}

type EvalFn = dyn Fn(u64) -> i8 + Send + Sync;

#[derive(Clone)]
enum Repr {
    Dense(Arc<[i8]>),
    Func(Arc<EvalFn>),
}

/// A ±1-valued query over the seed space, evaluable pointwise.
///
/// The `id` is a content fingerprint: the query's values at 128 fixed
/// pseudorandom probe points, hashed. Two handles for the same function get
/// the same id regardless of representation; distinct functions collide with
/// probability ~2^-64.
#[derive(Clone)]
pub struct Query {
    space: SeedSpace,
    id: u64,
    repr: Repr,
}

impl std::fmt::Debug for Query {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Query")
            .field("space", &self.space.bits())
            .field("id", &format_args!("{:016x}", self.id))
            .field("dense", &matches!(self.repr, Repr::Dense(_)))
            .finish()
    }
}

fn fingerprint(space: SeedSpace, eval: &dyn Fn(u64) -> i8) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut fold = |x: u64| {
        h = (h ^ x).wrapping_mul(0x0000_0100_0000_01B3);
    };
    fold(space.bits() as u64);
    for j in 0..PROBE_COUNT {
        let i = mix64(PROBE_SALT.wrapping_add(j.wrapping_mul(0x9E37_79B9_7F4A_7C15))) & space.mask();
        fold(i ^ ((eval(i) == 1) as u64) << 63);
    }
    h
}

impl Query {
    pub fn from_fn<F>(space: SeedSpace, f: F) -> Query
    where
        F: Fn(u64) -> i8 + Send + Sync + 'static,
    {
        let f = Arc::new(f);
        let id = fingerprint(space, &|i| f(i));
        Query {
            space,
            id,
            repr: Repr::Func(f),
        }
    }

    pub fn from_dense(space: SeedSpace, values: Vec<i8>) -> Result<Query> {
        if space.bits() > DENSE_CAP_BITS {
            return Err(Error::invalid(
                "dense",
                format!("materialized vectors capped at n <= {DENSE_CAP_BITS}"),
            ));
        }
        if values.len() as u64 != space.size() {
            return Err(Error::invalid(
                "dense",
                format!("expected {} values, got {}", space.size(), values.len()),
            ));
        }
        if let Some(v) = values.iter().find(|v| **v != 1 && **v != -1) {
            return Err(Error::invalid("dense", format!("value {v} not in {{-1,+1}}")));
        }
        let arc: Arc<[i8]> = values.into();
        let id = {
            let a = arc.clone();
            fingerprint(space, &move |i| a[i as usize])
        };
        Ok(Query {
            space,
            id,
            repr: Repr::Dense(arc),
        })
    }

    pub fn constant(space: SeedSpace, sign: i8) -> Query {
        debug_assert!(sign == 1 || sign == -1);
        Query::from_fn(space, move |_| sign)
    }

    /// +1 iff bit `bit` of the seed is set.
    pub fn sign_of_bit(space: SeedSpace, bit: u16) -> Query {
        Query::from_fn(space, move |i| if (i >> bit) & 1 == 1 { 1 } else { -1 })
    }

    /// Character over the masked bits: +1 iff their parity is even.
    pub fn parity(space: SeedSpace, mask: u64) -> Query {
        Query::from_fn(space, move |i| {
            if (i & mask).count_ones() % 2 == 0 {
                1
            } else {
                -1
            }
        })
    }

    /// +1 exactly on the subcube `{i : i & mask == pattern & mask}`.
    pub fn subcube(space: SeedSpace, mask: u64, pattern: u64) -> Query {
        let want = pattern & mask;
        Query::from_fn(space, move |i| if i & mask == want { 1 } else { -1 })
    }

    /// Fresh uniformly random ±1 query; consumes exactly one draw.
    pub fn random(space: SeedSpace, rng: &mut RngStream) -> Query {
        let key = rng.next_u64();
        let q = Query::from_fn(space, move |i| {
            if mix64(key ^ mix64(i.wrapping_add(1))) >> 63 == 1 {
                1
            } else {
                -1
            }
        });
        q.materialize_if_small()
    }

    /// Pull a query over the codomain of `g` back to this seed space:
    /// the result evaluates `outer(g(i))` at seed `i`.
    pub fn pullback<G>(space: SeedSpace, g: G, outer: &Query) -> Query
    where
        G: Fn(u64) -> u64 + Send + Sync + 'static,
    {
        let outer = outer.clone();
        Query::from_fn(space, move |i| outer.eval(g(i)))
    }

    /// sign(Σ coef·q(i)) over the given terms, with sign(0) = +1.
    pub fn aggregate_sign(space: SeedSpace, terms: &[(f64, Query)]) -> Query {
        let terms: Arc<[(f64, Query)]> = terms.to_vec().into();
        let q = Query::from_fn(space, move |i| {
            let mut acc = 0.0;
            for (c, q) in terms.iter() {
                acc += c * f64::from(q.eval(i));
            }
            if acc >= 0.0 {
                1
            } else {
                -1
            }
        });
        q.materialize_if_small()
    }

    #[inline]
    pub fn eval(&self, i: u64) -> i8 {
        debug_assert!(self.space.contains(i));
        match &self.repr {
            Repr::Dense(v) => v[i as usize],
            Repr::Func(f) => f(i),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn space(&self) -> SeedSpace {
        self.space
    }

    pub fn dense(&self) -> Option<&[i8]> {
        match &self.repr {
            Repr::Dense(v) => Some(v),
            Repr::Func(_) => None,
        }
    }

    /// Same function, dense representation. Identity if already dense.
    pub fn materialized(&self) -> Result<Query> {
        if self.space.bits() > DENSE_CAP_BITS {
            return Err(Error::invalid(
                "dense",
                format!("materialized vectors capped at n <= {DENSE_CAP_BITS}"),
            ));
        }
        if matches!(self.repr, Repr::Dense(_)) {
            return Ok(self.clone());
        }
        let values: Vec<i8> = (0..self.space.size()).map(|i| self.eval(i)).collect();
        Ok(Query {
            space: self.space,
            id: self.id,
            repr: Repr::Dense(values.into()),
        })
    }

    pub(crate) fn materialize_if_small(self) -> Query {
        if self.space.bits() <= AUTO_DENSE_BITS {
            self.materialized().expect("within dense cap")
        } else {
            self
        }
    }
}

/// A multiset of seed indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    space: SeedSpace,
    elems: Vec<u64>,
}

impl Dataset {
    pub fn new(space: SeedSpace, elems: Vec<u64>) -> Result<Self> {
        if elems.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(&bad) = elems.iter().find(|&&i| !space.contains(i)) {
            return Err(Error::invalid(
                "elems",
                format!("seed {bad} outside [0, {})", space.size()),
            ));
        }
        Ok(Dataset { space, elems })
    }

    /// Newline-delimited decimal seed indices.
    pub fn from_file(space: SeedSpace, path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut elems = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: u64 = line.parse().map_err(|e| {
                Error::invalid("dataset-file", format!("line {}: {e}", lineno + 1))
            })?;
            elems.push(v);
        }
        Dataset::new(space, elems)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for e in &self.elems {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn space(&self) -> SeedSpace {
        self.space
    }

    /// `M`, counting multiplicity.
    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    pub fn elems(&self) -> &[u64] {
        &self.elems
    }

    /// `q(S)`: exact integer accumulation, then one division.
    pub fn query_mean(&self, q: &Query) -> f64 {
        let sum: i64 = self.elems.iter().map(|&i| i64::from(q.eval(i))).sum();
        sum as f64 / self.elems.len() as f64
    }
}

type SamplerFn = dyn Fn(&mut RngStream) -> u64 + Send + Sync;

#[derive(Clone)]
enum Sampler {
    Uniform,
    Cdf(Arc<Vec<f64>>),
    Custom(Arc<SamplerFn>),
}

/// A distribution over the seed space: a sampler, optionally with an explicit
/// PMF. The PMF unlocks exact query means and density checks.
///
/// Every sampler consumes exactly one draw-unit per sample.
#[derive(Clone)]
pub struct Distribution {
    space: SeedSpace,
    pmf: Option<Arc<Vec<f64>>>,
    sampler: Sampler,
}

impl std::fmt::Debug for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Distribution")
            .field("space", &self.space.bits())
            .field("pmf", &self.pmf.is_some())
            .finish()
    }
}

const PMF_SUM_TOL: f64 = 1e-12;

impl Distribution {
    pub fn uniform(space: SeedSpace) -> Distribution {
        let pmf = if space.bits() <= ENUMERATION_CAP_BITS {
            let p = 1.0 / space.size() as f64;
            Some(Arc::new(vec![p; space.size() as usize]))
        } else {
            None
        };
        Distribution {
            space,
            pmf,
            sampler: Sampler::Uniform,
        }
    }

    pub fn from_pmf(space: SeedSpace, pmf: Vec<f64>) -> Result<Distribution> {
        if space.bits() > ENUMERATION_CAP_BITS {
            return Err(Error::invalid(
                "pmf",
                format!("explicit PMFs capped at n <= {ENUMERATION_CAP_BITS}"),
            ));
        }
        if pmf.len() as u64 != space.size() {
            return Err(Error::invalid(
                "pmf",
                format!("expected {} entries, got {}", space.size(), pmf.len()),
            ));
        }
        if let Some(p) = pmf.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid("pmf", format!("entry {p} not a probability")));
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::invalid(
                "pmf",
                format!("entries sum to {sum}, expected 1 within {PMF_SUM_TOL}"),
            ));
        }
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        Ok(Distribution {
            space,
            pmf: Some(Arc::new(pmf)),
            sampler: Sampler::Cdf(Arc::new(cdf)),
        })
    }

    pub fn point_mass(space: SeedSpace, at: u64) -> Result<Distribution> {
        if !space.contains(at) {
            return Err(Error::invalid("at", format!("seed {at} outside domain")));
        }
        let mut pmf = vec![0.0; space.size() as usize];
        pmf[at as usize] = 1.0;
        Distribution::from_pmf(space, pmf)
    }

    /// Custom sampler, optionally with its PMF. The sampler must consume
    /// exactly one draw-unit per sample.
    pub fn from_sampler<F>(space: SeedSpace, sampler: F, pmf: Option<Vec<f64>>) -> Result<Distribution>
    where
        F: Fn(&mut RngStream) -> u64 + Send + Sync + 'static,
    {
        let pmf = match pmf {
            Some(p) => {
                // Reuse the validation path.
                let d = Distribution::from_pmf(space, p)?;
                Some(d.pmf.unwrap())
            }
            None => None,
        };
        Ok(Distribution {
            space,
            pmf,
            sampler: Sampler::Custom(Arc::new(sampler)),
        })
    }

    /// Binary PMF file: 8-byte little-endian bit width `n`, then `2^n`
    /// IEEE-754 doubles, little-endian.
    pub fn from_pmf_file(path: impl AsRef<Path>) -> Result<Distribution> {
        let mut f = std::fs::File::open(path)?;
        let mut head = [0u8; 8];
        f.read_exact(&mut head)?;
        let n = u64::from_le_bytes(head);
        if n == 0 || n > ENUMERATION_CAP_BITS as u64 {
            return Err(Error::invalid(
                "pmf-file",
                format!("bit width {n} not in 1..={ENUMERATION_CAP_BITS}"),
            ));
        }
        let space = SeedSpace::new(n as u16)?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        if buf.len() as u64 != space.size() * 8 {
            return Err(Error::invalid(
                "pmf-file",
                format!("expected {} payload bytes, got {}", space.size() * 8, buf.len()),
            ));
        }
        let pmf: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Distribution::from_pmf(space, pmf)
    }

    pub fn write_pmf_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let pmf = self.pmf().ok_or(Error::DensityRequiresPmf)?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&(self.space.bits() as u64).to_le_bytes())?;
        for p in pmf {
            f.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn space(&self) -> SeedSpace {
        self.space
    }

    pub fn pmf(&self) -> Option<&[f64]> {
        self.pmf.as_deref().map(|v| v.as_slice())
    }

    /// One sample; exactly one draw-unit.
    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        match &self.sampler {
            Sampler::Uniform => rng.next_index(self.space),
            Sampler::Cdf(cdf) => {
                let u = rng.next_f64();
                let idx = cdf.partition_point(|&c| c <= u);
                idx.min(cdf.len() - 1) as u64
            }
            Sampler::Custom(f) => f(rng),
        }
    }

    /// `M` i.i.d. samples; advances the stream by exactly `M` draw-units.
    pub fn sample_dataset(&self, m: u64, rng: &mut RngStream) -> Result<Dataset> {
        if m == 0 {
            return Err(Error::invalid("M", "dataset size must be positive"));
        }
        let before = rng.counter();
        let elems: Vec<u64> = (0..m).map(|_| self.sample(rng)).collect();
        debug_assert_eq!(rng.counter(), before + m);
        Dataset::new(self.space, elems)
    }

    /// `q(D)` by exact enumeration over the PMF. Plain left-to-right
    /// summation up to 2^16 seeds, compensated (Kahan) above.
    pub fn query_mean_exact(&self, q: &Query) -> Result<f64> {
        let pmf = self
            .pmf()
            .ok_or(Error::GroundTruthUnavailable("distribution has no PMF"))?;
        if self.space.bits() <= 16 {
            let mut acc = 0.0;
            for (i, p) in pmf.iter().enumerate() {
                acc += p * f64::from(q.eval(i as u64));
            }
            Ok(acc)
        } else {
            let mut acc = 0.0;
            let mut carry = 0.0;
            for (i, p) in pmf.iter().enumerate() {
                let term = p * f64::from(q.eval(i as u64)) - carry;
                let next = acc + term;
                carry = (next - acc) - term;
                acc = next;
            }
            Ok(acc)
        }
    }

    /// Monte-Carlo `q(D)` estimate: `(mean, half_width)` where the Hoeffding
    /// half-width covers the true mean with the requested confidence.
    pub fn query_mean_estimate(
        &self,
        q: &Query,
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
        let mut sum: i64 = 0;
        for _ in 0..samples {
            sum += i64::from(q.eval(self.sample(rng)));
        }
        let mean = sum as f64 / samples as f64;
        let alpha = 1.0 - confidence;
        let half_width = (2.0 * (2.0 / alpha).ln() / samples as f64).sqrt();
        Ok((mean, half_width))
    }

    /// True iff `max_i pmf[i] <= 1/(λN)`, i.e. the distribution is λ-dense
    /// with respect to the uniform prior.
    pub fn is_dense(&self, lambda: f64) -> Result<bool> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::invalid("lambda", "must lie in (0,1]"));
        }
        let pmf = self.pmf().ok_or(Error::DensityRequiresPmf)?;
        let max = pmf.iter().cloned().fold(0.0, f64::max);
        Ok(max <= 1.0 / (lambda * self.space.size() as f64))
    }

    /// Largest λ at which the distribution is dense: `1/(N·max_i pmf[i])`.
    pub fn max_density(&self) -> Result<f64> {
        let pmf = self.pmf().ok_or(Error::DensityRequiresPmf)?;
        let max = pmf.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return Err(Error::invalid("pmf", "all-zero PMF"));
        }
        Ok(1.0 / (self.space.size() as f64 * max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;

    fn space(n: u16) -> SeedSpace {
        SeedSpace::new(n).unwrap()
    }

    #[test]
    fn seed_space_basics() {
        let s = space(4);
        assert_eq!(s.size(), 16);
        assert_eq!(s.mask(), 15);
        assert!(s.contains(15));
        assert!(!s.contains(16));
        assert!(SeedSpace::new(0).is_err());
        assert!(SeedSpace::new(64).is_err());
    }

    #[test]
    fn pullback_identity_matches_outer() {
        let s = space(6);
        let outer = Query::sign_of_bit(s, 0);
        let pulled = Query::pullback(s, |i| i, &outer);
        for i in 0..s.size() {
            assert_eq!(pulled.eval(i), outer.eval(i));
        }
    }

    #[test]
    fn pullback_constant_collapse() {
        let s = space(5);
        let outer = Query::constant(s, 1);
        let pulled = Query::pullback(s, |_| 3, &outer);
        for i in 0..s.size() {
            assert_eq!(pulled.eval(i), 1);
        }
    }

    #[test]
    fn pullback_mod_four_enumeration() {
        // g(i) = i mod 4, outer +1 exactly on 0 => +1 exactly on {0,4,8,12}.
        let s = space(4);
        let outer = Query::from_fn(s, |v| if v == 0 { 1 } else { -1 });
        let pulled = Query::pullback(s, |i| i % 4, &outer);
        for i in 0..16 {
            // Independent brute-force composition.
            let expect = if (i % 4) == 0 { 1 } else { -1 };
            assert_eq!(pulled.eval(i), expect, "seed {i}");
        }
    }

    #[test]
    fn dataset_mean_with_multiplicity() {
        let s = space(4);
        let d = Dataset::new(s, vec![3, 3, 7]).unwrap();
        let q = Query::from_fn(s, |i| if i == 7 { -1 } else { 1 });
        assert_eq!(d.query_mean(&q), 1.0 / 3.0);
        let one = Query::constant(s, 1);
        assert_eq!(d.query_mean(&one), 1.0);
    }

    #[test]
    fn dataset_mean_matches_independent_pass() {
        let s = space(8);
        let mut rng = RngStream::new(99, StreamId::Environment);
        let d = Distribution::uniform(s).sample_dataset(100, &mut rng).unwrap();
        let q = Query::sign_of_bit(s, 2);
        // Second, independent scalar recomputation.
        let mut sum = 0.0;
        for &i in d.elems() {
            sum += if (i >> 2) & 1 == 1 { 1.0 } else { -1.0 };
        }
        assert_eq!(d.query_mean(&q), sum / 100.0);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(
            Dataset::new(space(4), vec![]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn distribution_mean_symmetric_cancellation() {
        let s = space(2);
        let d = Distribution::uniform(s);
        let q = Query::from_dense(s, vec![1, 1, -1, -1]).unwrap();
        assert_eq!(d.query_mean_exact(&q).unwrap(), 0.0);
    }

    #[test]
    fn distribution_mean_point_mass() {
        let s = space(4);
        let d = Distribution::point_mass(s, 5).unwrap();
        let q = Query::sign_of_bit(s, 0);
        assert_eq!(d.query_mean_exact(&q).unwrap(), f64::from(q.eval(5)));
    }

    #[test]
    fn exact_mean_equals_plain_loop() {
        // Same summation order as the implementation below 2^16 seeds.
        let s = space(12);
        let n = s.size() as usize;
        let ramp: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
        let total: f64 = ramp.iter().sum();
        let pmf: Vec<f64> = ramp.iter().map(|v| v / total).collect();
        let d = Distribution::from_pmf(s, pmf.clone()).unwrap();
        let q = Query::sign_of_bit(s, 0);
        let mut acc = 0.0;
        for (i, p) in pmf.iter().enumerate() {
            acc += p * f64::from(q.eval(i as u64));
        }
        assert_eq!(d.query_mean_exact(&q).unwrap(), acc);
    }

    #[test]
    fn estimate_mode_requires_budget() {
        let s = space(4);
        let d = Distribution::uniform(s);
        let q = Query::constant(s, 1);
        let mut rng = RngStream::new(0, StreamId::Environment);
        assert!(matches!(
            d.query_mean_estimate(&q, 0, 0.99, &mut rng),
            Err(Error::GroundTruthUnavailable(_))
        ));
    }

    #[test]
    fn density_checks() {
        let s = space(2);
        let uniform = Distribution::uniform(s);
        assert!(uniform.is_dense(1.0).unwrap());
        let half = Distribution::from_pmf(s, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(half.is_dense(0.5).unwrap());
        assert!(!half.is_dense(0.6).unwrap());
        assert_eq!(half.max_density().unwrap(), 0.5);
        let no_pmf =
            Distribution::from_sampler(space(21), |r| r.next_u64() & ((1u64 << 21) - 1), None)
                .unwrap();
        assert!(matches!(no_pmf.is_dense(1.0), Err(Error::DensityRequiresPmf)));
    }

    #[test]
    fn sampling_is_deterministic_and_point_mass_degenerate() {
        let s = space(4);
        let d = Distribution::point_mass(s, 7).unwrap();
        let mut rng = RngStream::new(5, StreamId::Environment);
        let ds = d.sample_dataset(1, &mut rng).unwrap();
        assert_eq!(ds.elems(), &[7]);

        let u = Distribution::uniform(s);
        let mut r1 = RngStream::new(11, StreamId::Environment);
        let mut r2 = RngStream::new(11, StreamId::Environment);
        assert_eq!(
            u.sample_dataset(50, &mut r1).unwrap(),
            u.sample_dataset(50, &mut r2).unwrap()
        );
        assert!(u.sample_dataset(0, &mut r1).is_err());
    }

    #[test]
    fn uniform_sampling_concentrates() {
        // Each singleton count within 5 standard deviations of M/N.
        let s = space(8);
        let d = Distribution::uniform(s);
        let mut rng = RngStream::new(123, StreamId::Environment);
        let m = 100_000u64;
        let ds = d.sample_dataset(m, &mut rng).unwrap();
        let mut counts = vec![0u64; s.size() as usize];
        for &i in ds.elems() {
            counts[i as usize] += 1;
        }
        let p = 1.0 / s.size() as f64;
        let mean = m as f64 * p;
        let sd = (m as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - mean).abs() <= 5.0 * sd,
                "seed {i}: count {c} vs mean {mean:.1} (sd {sd:.2})"
            );
        }
    }

    #[test]
    fn query_purity_and_dense_agreement() {
        let s = space(10);
        let mut rng = RngStream::new(77, StreamId::Analyst);
        let q = Query::random(s, &mut rng);
        for i in (0..s.size()).step_by(17) {
            let v = q.eval(i);
            for _ in 0..10 {
                assert_eq!(q.eval(i), v);
            }
        }
        let dense = q.materialized().unwrap();
        assert_eq!(dense.id(), q.id());
        for i in 0..s.size() {
            assert_eq!(dense.eval(i), q.eval(i));
        }
    }

    #[test]
    fn dense_cap_enforced() {
        let s = space(21);
        let q = Query::constant(s, 1);
        assert!(q.materialized().is_err());
        assert!(Query::from_dense(s, vec![]).is_err());
    }

    #[test]
    fn pmf_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ramp.pmf");
        let s = space(6);
        let n = s.size() as usize;
        let ramp: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
        let total: f64 = ramp.iter().sum();
        let pmf: Vec<f64> = ramp.iter().map(|v| v / total).collect();
        let d = Distribution::from_pmf(s, pmf.clone()).unwrap();
        d.write_pmf_file(&path).unwrap();
        let back = Distribution::from_pmf_file(&path).unwrap();
        assert_eq!(back.space(), s);
        assert_eq!(back.pmf().unwrap(), pmf.as_slice());
    }

    #[test]
    fn dataset_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seeds.txt");
        let s = space(8);
        let d = Dataset::new(s, vec![3, 3, 7, 200]).unwrap();
        d.write_file(&path).unwrap();
        let back = Dataset::from_file(s, &path).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn estimate_mode_coverage() {
        // MC estimate within the reported half-width in >= 99% of trials.
        let s = space(12);
        let n = s.size() as usize;
        let ramp: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
        let total: f64 = ramp.iter().sum();
        let pmf: Vec<f64> = ramp.iter().map(|v| v / total).collect();
        let d = Distribution::from_pmf(s, pmf).unwrap();
        let q = Query::sign_of_bit(s, 0);
        let exact = d.query_mean_exact(&q).unwrap();
        let trials = 1000;
        let samples = 20_000; // scaled budget; coverage is what is asserted
        let mut covered = 0;
        for t in 0..trials {
            let mut rng = RngStream::new(5000 + t, StreamId::Environment);
            let (mean, hw) = d.query_mean_estimate(&q, samples, 0.99, &mut rng).unwrap();
            if (mean - exact).abs() <= hw {
                covered += 1;
            }
        }
        assert!(covered >= 990, "coverage {covered}/1000");
    }
}
