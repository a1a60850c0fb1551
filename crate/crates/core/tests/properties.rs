//! Property tests for the structural invariants: pullback homomorphism,
//! stream reproducibility and independence, grid geometry, coefficient
//! exactness, transcript round-trips under fuzz and corruption, and the
//! descent regret bound.

use proptest::prelude::*;

use ada_ogd_core::mechanism::{round_to_grid, TranscriptEntry};
use ada_ogd_core::replay::{analyst_id_bytes, Transcript, TranscriptHeader};
use ada_ogd_core::rng::{mix64, RngStream, StreamId};
use ada_ogd_core::seedspace::{Dataset, Query, SeedSpace};
use ada_ogd_core::sketch::{ogd_regret_simulate, AbsAffineLoss, GradientSketch};
use ada_ogd_core::Error;

#[test]
fn stream_reproducibility_long() {
    // Identical (seed, stream-id) agree on the first 10^6 outputs.
    let mut a = RngStream::new(0xDEAD_BEEF, StreamId::Analyst);
    let mut b = RngStream::new(0xDEAD_BEEF, StreamId::Analyst);
    for _ in 0..1_000_000 {
        assert_eq!(a.next_u64(), b.next_u64());
    }
}

#[test]
fn stream_independence_chi_square() {
    // Joint bucket counts of paired draws from the analyst and mechanism
    // streams pass a chi-square independence check at α = 0.01.
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    const BUCKETS: usize = 16;
    let mut a = RngStream::new(5150, StreamId::Analyst);
    let mut m = RngStream::new(5150, StreamId::Mechanism);
    let mut counts = [[0u64; BUCKETS]; BUCKETS];
    let draws = 100_000u64;
    for _ in 0..draws {
        let x = (a.next_u64() % BUCKETS as u64) as usize;
        let y = (m.next_u64() % BUCKETS as u64) as usize;
        counts[x][y] += 1;
    }
    let expected = draws as f64 / (BUCKETS * BUCKETS) as f64;
    let mut stat = 0.0;
    for row in &counts {
        for &c in row {
            let d = c as f64 - expected;
            stat += d * d / expected;
        }
    }
    let df = (BUCKETS * BUCKETS - 1) as f64;
    let critical = ChiSquared::new(df).unwrap().inverse_cdf(0.99);
    assert!(
        stat <= critical,
        "chi-square {stat:.1} exceeds critical {critical:.1} (df {df})"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pullback_homomorphism(
        n in 4u16..=12,
        g_key in any::<u64>(),
        q_key in any::<u64>(),
        elems in prop::collection::vec(any::<u64>(), 1..40),
    ) {
        // query_mean(pullback(q, g), S) == query_mean(q, g(S)) exactly.
        let space = SeedSpace::new(n).unwrap();
        let mask = space.mask();
        let g = move |i: u64| mix64(g_key ^ mix64(i)) & mask;
        let outer = Query::from_fn(space, move |i| {
            if mix64(q_key ^ mix64(i.wrapping_add(3))) >> 63 == 1 { 1 } else { -1 }
        });
        let pulled = Query::pullback(space, g, &outer);

        let elems: Vec<u64> = elems.into_iter().map(|e| e & mask).collect();
        let s = Dataset::new(space, elems.clone()).unwrap();
        let mapped = Dataset::new(space, elems.iter().map(|&e| g(e)).collect()).unwrap();
        prop_assert_eq!(s.query_mean(&pulled), mapped.query_mean(&outer));
    }

    #[test]
    fn query_eval_is_pure(n in 2u16..=10, key in any::<u64>(), seeds in prop::collection::vec(any::<u64>(), 1..20)) {
        let space = SeedSpace::new(n).unwrap();
        let q = Query::from_fn(space, move |i| {
            if mix64(key ^ i) & 1 == 1 { 1 } else { -1 }
        });
        for s in seeds {
            let i = s & space.mask();
            let first = q.eval(i);
            for _ in 0..10 {
                prop_assert_eq!(q.eval(i), first);
            }
            prop_assert!(first == 1 || first == -1);
        }
    }

    #[test]
    fn grid_rounding_geometry(v in -1.0f64..=1.0, eps in 0.01f64..0.9) {
        let g = round_to_grid(v, eps).unwrap();
        let grid = eps * 0.5;
        // Exact reconstruction from the index, always in range.
        prop_assert_eq!(g.value, g.index as f64 * grid);
        prop_assert!(g.value.abs() <= 1.0);
        // Off the clamp boundary the result is a nearest multiple.
        if (g.index as f64 * grid).abs() + grid <= 1.0 {
            prop_assert!((g.value - v).abs() <= grid / 2.0 + 1e-12);
        }
    }

    #[test]
    fn sketch_coefficients_bit_exact(
        lambda in 0.05f64..=1.0,
        eps in 0.05f64..=1.0,
        signs in prop::collection::vec(prop::bool::ANY, 1..20),
    ) {
        let space = SeedSpace::new(6).unwrap();
        let mut sketch = GradientSketch::new(space, lambda, eps).unwrap();
        let expect = lambda * eps / 16.0;
        for (k, up) in signs.iter().enumerate() {
            sketch.insert(if *up { 1 } else { -1 }, Query::parity(space, k as u64 & 63));
        }
        for (entry, up) in sketch.entries().iter().zip(&signs) {
            let want = if *up { -expect } else { expect };
            prop_assert_eq!(entry.coef, want);
            prop_assert_eq!(entry.coef.abs(), expect);
        }
    }

    #[test]
    fn regret_bound_fuzz(
        dim in 1usize..=8,
        steps in 1usize..=64,
        alpha in 0.05f64..2.0,
        seed in any::<u64>(),
    ) {
        // Random unit-bounded losses and a random comparator in the ball:
        // the 1/(2α) + α|T|/2 bound always holds.
        let mut key = Scrambler(seed);
        let losses: Vec<AbsAffineLoss> = (0..steps)
            .map(|_| {
                let scale = key.unit();
                AbsAffineLoss {
                    grad: key.ball_vec(dim, scale),
                    offset: key.unit() * 2.0 - 1.0,
                }
            })
            .collect();
        let scale = key.unit();
        let x_star = key.ball_vec(dim, scale);
        let report = ogd_regret_simulate(&losses, alpha, &x_star).unwrap();
        prop_assert!(report.within_bound(), "regret {} > bound {}", report.regret, report.bound);
    }
}

/// Tiny deterministic value source for fuzz fixtures.
struct Scrambler(u64);

impl Scrambler {
    fn next(&mut self) -> u64 {
        self.0 = mix64(self.0.wrapping_add(1));
        self.0
    }

    fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Vector of the given norm (≤ scale ≤ 1), uniformly oriented-ish.
    fn ball_vec(&mut self, dim: usize, scale: f64) -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| self.unit() * 2.0 - 1.0).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            v
        } else {
            v.iter().map(|x| x / n * scale).collect()
        }
    }
}

#[test]
fn transcript_fuzz_round_trip_and_corruption() {
    let mut rng = RngStream::new(0xFEED, StreamId::Environment);
    for case in 0..1000u64 {
        let n = 4 + (rng.next_u64() % 12) as u16;
        let rounds = 20 + rng.next_u64() % 200;
        let epsilon = 0.1 + (rng.next_u64() % 80) as f64 / 100.0;
        let delta = 0.05 + (rng.next_u64() % 90) as f64 / 100.0;
        let lambda = 0.25 + (rng.next_u64() % 75) as f64 / 100.0;
        let grid = epsilon * 0.5;
        let mut k_max = (1.0 / grid).floor() as i64;
        while k_max as f64 * grid > 1.0 {
            k_max -= 1;
        }
        let hashed = rng.next_u64() % 2 == 0;
        let mut entries = Vec::new();
        let mut round = 0u64;
        let count = rng.next_u64() % 12;
        for _ in 0..count {
            round += 1 + rng.next_u64() % (rounds / 12).max(1);
            if round > rounds {
                break;
            }
            let span = (2 * k_max + 1) as u64;
            entries.push(TranscriptEntry {
                round,
                grid_index: (rng.next_u64() % span) as i32 - k_max as i32,
                sign: if rng.next_u64() % 2 == 0 { 1 } else { -1 },
                query_hash: hashed.then(|| rng.next_u64()),
            });
        }
        let transcript = Transcript::new(
            TranscriptHeader {
                n,
                rounds,
                epsilon,
                delta,
                lambda,
                batch: 1 + rng.next_u64() % 4096,
                master_seed: rng.next_u64(),
                analyst_id: analyst_id_bytes("fuzz"),
            },
            entries,
        )
        .unwrap_or_else(|e| panic!("case {case}: fixture invalid: {e}"));

        let bytes = transcript.to_bytes();
        let back = Transcript::from_bytes(&bytes).expect("round trip");
        assert_eq!(back, transcript, "case {case}");

        // One random single-byte corruption per fuzz case: either the value
        // survives equal or deserialization reports a structured error.
        let pos = (rng.next_u64() as usize) % bytes.len();
        let delta_byte = 1 + (rng.next_u64() % 255) as u8;
        let mut corrupted = bytes.clone();
        corrupted[pos] = corrupted[pos].wrapping_add(delta_byte);
        match Transcript::from_bytes(&corrupted) {
            Ok(t) => assert_eq!(t, transcript, "case {case}: silent corruption at byte {pos}"),
            Err(Error::MalformedTranscript(_)) => {}
            Err(other) => panic!("case {case}: unexpected error {other}"),
        }
    }
}

#[test]
fn transcript_every_byte_corruption_detected() {
    // Exhaustive single-byte corruption of one representative transcript.
    let transcript = Transcript::new(
        TranscriptHeader {
            n: 10,
            rounds: 100,
            epsilon: 0.25,
            delta: 0.1,
            lambda: 0.5,
            batch: 64,
            master_seed: 99,
            analyst_id: analyst_id_bytes("mixed"),
        },
        vec![
            TranscriptEntry { round: 2, grid_index: 4, sign: -1, query_hash: Some(11) },
            TranscriptEntry { round: 57, grid_index: -8, sign: 1, query_hash: Some(13) },
        ],
    )
    .unwrap();
    let bytes = transcript.to_bytes();
    for pos in 0..bytes.len() {
        let mut corrupted = bytes.clone();
        corrupted[pos] ^= 0x41;
        match Transcript::from_bytes(&corrupted) {
            Ok(t) => assert_eq!(t, transcript, "silent corruption at byte {pos}"),
            Err(Error::MalformedTranscript(_)) => {}
            Err(other) => panic!("byte {pos}: unexpected error {other}"),
        }
    }
}
