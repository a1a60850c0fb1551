//! Reconstruct a full query/answer sequence from the succinct update
//! transcript plus frozen randomness — with no dataset access at all.
//!
//! The transcript holds one `(round, grid index, sign)` entry per sketch
//! update. Re-running the analyst on its own stream and the estimator on the
//! mechanism stream (resuming by counter arithmetic, which a fixed per-round
//! batch makes exact) reproduces every query and answer of the recorded run.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::game::{Analyst, HistoryItem};
use crate::mechanism::TranscriptEntry;
use crate::rng::{RngStream, StreamId};
use crate::seedspace::{Query, SeedSpace};
use crate::sketch::{EstimateParams, GradientSketch, ip_est};

pub const TRANSCRIPT_MAGIC: [u8; 4] = *b"AOGD";
pub const TRANSCRIPT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 2 + 8 + 8 + 8 + 8 + 8 + 8 + 32 + 4;
const ENTRY_LEN: usize = 8 + 4 + 1;
const ENTRY_LEN_HASHED: usize = ENTRY_LEN + 8;

/// Fixed-size analyst identifier: the analyst name, truncated/zero-padded.
pub fn analyst_id_bytes(name: &str) -> [u8; 32] {
    let mut id = [0u8; 32];
    let bytes = name.as_bytes();
    let len = bytes.len().min(32);
    id[..len].copy_from_slice(&bytes[..len]);
    id
}

pub fn analyst_id_name(id: &[u8; 32]) -> String {
    let end = id.iter().position(|&b| b == 0).unwrap_or(32);
    String::from_utf8_lossy(&id[..end]).into_owned()
}

/// Everything replay needs besides the entries themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptHeader {
    pub n: u16,
    pub rounds: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    pub batch: u64,
    pub master_seed: u64,
    pub analyst_id: [u8; 32],
}

/// The succinct update log of one recorded game.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub entries: Vec<TranscriptEntry>,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl Transcript {
    pub fn new(header: TranscriptHeader, entries: Vec<TranscriptEntry>) -> Result<Self> {
        let t = Transcript { header, entries };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.n == 0 || h.n > 63 {
            return Err(Error::MalformedTranscript(format!("bit width {}", h.n)));
        }
        if h.rounds == 0 {
            return Err(Error::MalformedTranscript("zero rounds".into()));
        }
        if !(h.epsilon > 0.0 && h.epsilon < 1.0) {
            return Err(Error::MalformedTranscript(format!("epsilon {}", h.epsilon)));
        }
        if !(h.delta > 0.0 && h.delta < 1.0) {
            return Err(Error::MalformedTranscript(format!("delta {}", h.delta)));
        }
        if !(h.lambda > 0.0 && h.lambda <= 1.0) {
            return Err(Error::MalformedTranscript(format!("lambda {}", h.lambda)));
        }
        if h.batch == 0 {
            return Err(Error::MalformedTranscript("zero batch".into()));
        }
        let budget = 128.0 / ((h.lambda * h.epsilon) * (h.lambda * h.epsilon));
        if self.entries.len() as f64 > budget + 1.0 {
            return Err(Error::MalformedTranscript(format!(
                "{} entries exceeds the mistake budget {budget}",
                self.entries.len()
            )));
        }
        let grid = h.epsilon * 0.5;
        let mut prev = 0u64;
        for e in &self.entries {
            if e.round == 0 || e.round > h.rounds {
                return Err(Error::MalformedTranscript(format!(
                    "round {} outside 1..={}",
                    e.round, h.rounds
                )));
            }
            if e.round <= prev {
                return Err(Error::MalformedTranscript(
                    "rounds not strictly increasing".into(),
                ));
            }
            prev = e.round;
            if e.sign != 1 && e.sign != -1 {
                return Err(Error::MalformedTranscript(format!("sign {}", e.sign)));
            }
            if (e.grid_index as f64 * grid).abs() > 1.0 {
                return Err(Error::MalformedTranscript(format!(
                    "grid index {} out of range",
                    e.grid_index
                )));
            }
        }
        Ok(())
    }

    /// Drop the query-hash sentinels (theory-mode size accounting).
    pub fn strip_hashes(&self) -> Transcript {
        Transcript {
            header: self.header.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| TranscriptEntry {
                    query_hash: None,
                    ..*e
                })
                .collect(),
        }
    }

    /// Serialize. Layout, all little-endian: magic `AOGD`, version u16, then
    /// n:u16, T:u64, ε:f64, δ:f64, λ:f64, B:u64, master_seed:u64,
    /// analyst_id:32 bytes, entry count u32, entries
    /// `(round:u64, grid_index:i32, sign:i8[, qhash:u64])`, and a trailing
    /// FNV-1a-64 checksum of all preceding bytes. Query hashes are written
    /// only when every entry carries one.
    pub fn to_bytes(&self) -> Vec<u8> {
        let hashed = !self.entries.is_empty() && self.entries.iter().all(|e| e.query_hash.is_some());
        let entry_len = if hashed { ENTRY_LEN_HASHED } else { ENTRY_LEN };
        let mut out = Vec::with_capacity(HEADER_LEN + self.entries.len() * entry_len + 8);
        out.extend_from_slice(&TRANSCRIPT_MAGIC);
        out.extend_from_slice(&TRANSCRIPT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.header.n.to_le_bytes());
        out.extend_from_slice(&self.header.rounds.to_le_bytes());
        out.extend_from_slice(&self.header.epsilon.to_le_bytes());
        out.extend_from_slice(&self.header.delta.to_le_bytes());
        out.extend_from_slice(&self.header.lambda.to_le_bytes());
        out.extend_from_slice(&self.header.batch.to_le_bytes());
        out.extend_from_slice(&self.header.master_seed.to_le_bytes());
        out.extend_from_slice(&self.header.analyst_id);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.round.to_le_bytes());
            out.extend_from_slice(&e.grid_index.to_le_bytes());
            out.extend_from_slice(&e.sign.to_le_bytes());
            if hashed {
                out.extend_from_slice(&e.query_hash.unwrap().to_le_bytes());
            }
        }
        let checksum = fnv1a64(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Transcript> {
        if bytes.len() < HEADER_LEN + 8 {
            return Err(Error::MalformedTranscript("truncated".into()));
        }
        let (payload, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        if fnv1a64(payload) != stored {
            return Err(Error::MalformedTranscript("checksum mismatch".into()));
        }
        struct Cursor<'a> {
            buf: &'a [u8],
            pos: usize,
        }
        impl<'a> Cursor<'a> {
            fn take(&mut self, n: usize) -> Result<&'a [u8]> {
                if self.buf.len() - self.pos < n {
                    return Err(Error::MalformedTranscript("truncated".into()));
                }
                let head = &self.buf[self.pos..self.pos + n];
                self.pos += n;
                Ok(head)
            }
            fn remaining(&self) -> usize {
                self.buf.len() - self.pos
            }
        }
        let mut cursor = Cursor { buf: payload, pos: 0 };
        let magic = cursor.take(4)?;
        if magic != TRANSCRIPT_MAGIC {
            return Err(Error::MalformedTranscript("bad magic".into()));
        }
        let version = u16::from_le_bytes(cursor.take(2)?.try_into().unwrap());
        if version != TRANSCRIPT_VERSION {
            return Err(Error::MalformedTranscript(format!("version {version}")));
        }
        let n = u16::from_le_bytes(cursor.take(2)?.try_into().unwrap());
        let rounds = u64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
        let epsilon = f64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
        let delta = f64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
        let lambda = f64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
        let batch = u64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
        let master_seed = u64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
        let analyst_id: [u8; 32] = cursor.take(32)?.try_into().unwrap();
        let count = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap()) as usize;

        let remaining = cursor.remaining();
        let hashed = if remaining == count * ENTRY_LEN_HASHED && count > 0 {
            true
        } else if remaining == count * ENTRY_LEN {
            false
        } else {
            return Err(Error::MalformedTranscript(format!(
                "{remaining} entry bytes for {count} entries"
            )));
        };
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let round = u64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
            let grid_index = i32::from_le_bytes(cursor.take(4)?.try_into().unwrap());
            let sign = i8::from_le_bytes(cursor.take(1)?.try_into().unwrap());
            let query_hash = if hashed {
                Some(u64::from_le_bytes(cursor.take(8)?.try_into().unwrap()))
            } else {
                None
            };
            entries.push(TranscriptEntry {
                round,
                grid_index,
                sign,
                query_hash,
            });
        }
        Transcript::new(
            TranscriptHeader {
                n,
                rounds,
                epsilon,
                delta,
                lambda,
                batch,
                master_seed,
                analyst_id,
            },
            entries,
        )
    }

    pub fn write_file(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<std::path::Path>) -> Result<Transcript> {
        Transcript::from_bytes(&std::fs::read(path)?)
    }
}

/// log₂ of the number of possible transcripts, `8·ε⁻¹·T^{128/(λε)²}`.
/// Computed in log space; the raw count overflows any float for real
/// parameter choices.
pub fn transcript_count_bound_log2(epsilon: f64, lambda: f64, rounds: u64) -> f64 {
    3.0 - epsilon.log2() + (128.0 / ((lambda * epsilon) * (lambda * epsilon))) * (rounds as f64).log2()
}

/// The reconstructed interaction.
#[derive(Debug, Clone)]
pub struct ReplayResult {
    pub queries: Vec<Query>,
    pub answers: Vec<f64>,
}

/// Re-run the interaction from the transcript and frozen randomness alone.
///
/// The analyst must be a fresh instance of the recorded analyst (same code,
/// same configuration); stream alignment plus the recorded update rounds
/// then reproduce every query and answer exactly. Divergence (a tampered
/// transcript or a mismatched analyst) is detected by comparing query
/// fingerprints against the recorded sentinels at update rounds.
///
/// There is deliberately no dataset parameter: no dataset means are
/// consulted anywhere on this path.
pub fn replay_run(
    transcript: &Transcript,
    analyst: &mut dyn Analyst,
    master_seed: u64,
) -> Result<ReplayResult> {
    transcript.validate()?;
    let header = &transcript.header;
    if master_seed != header.master_seed {
        return Err(Error::SeedMismatch);
    }
    let space = SeedSpace::new(header.n)?;
    let est = EstimateParams::new(
        header.lambda * header.epsilon / 8.0,
        header.delta / (2.0 * header.rounds as f64),
        header.batch,
    )?;
    let grid = header.epsilon * 0.5;

    let mut updates: BTreeMap<u64, TranscriptEntry> = BTreeMap::new();
    for e in &transcript.entries {
        updates.insert(e.round, *e);
    }

    let mut rng_analyst = RngStream::new(master_seed, StreamId::Analyst);
    let mut rng_mech = RngStream::new(master_seed, StreamId::Mechanism);
    // Mirror the recorded game's stream usage during distribution choice.
    let _ = analyst.choose_distribution(&mut rng_analyst);

    let mut sketch = GradientSketch::new(space, header.lambda, header.epsilon)?;
    let mut history: Vec<HistoryItem> = Vec::with_capacity(header.rounds as usize);
    let mut queries = Vec::with_capacity(header.rounds as usize);
    let mut answers = Vec::with_capacity(header.rounds as usize);

    for t in 1..=header.rounds {
        let q = analyst.next_query(&history, &mut rng_analyst);
        if q.space() != space {
            return Err(Error::MalformedQuery {
                round: t,
                reason: "seed space mismatch".into(),
            });
        }
        let estimate = ip_est(&q, &sketch, &est, &mut rng_mech);
        // The estimator consumes exactly `batch` draws per round, so the
        // stream position is a pure function of the round number.
        assert_eq!(
            rng_mech.counter(),
            t * est.batch,
            "mechanism stream misaligned at round {t}"
        );
        let answer = match updates.get(&t) {
            Some(entry) => {
                if let Some(expected) = entry.query_hash {
                    if q.id() != expected {
                        return Err(Error::ReplayDivergence { round: t });
                    }
                }
                sketch.insert(entry.sign, q.clone());
                entry.grid_index as f64 * grid
            }
            None => (estimate / header.lambda).clamp(-1.0, 1.0),
        };
        queries.push(q.clone());
        answers.push(answer);
        history.push(HistoryItem { query: q, answer });
    }
    Ok(ReplayResult { queries, answers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> TranscriptHeader {
        TranscriptHeader {
            n: 8,
            rounds: 100,
            epsilon: 0.25,
            delta: 0.1,
            lambda: 0.5,
            batch: 64,
            master_seed: 42,
            analyst_id: analyst_id_bytes("random"),
        }
    }

    #[test]
    fn empty_transcript_round_trips() {
        let t = Transcript::new(header(), vec![]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 8);
        assert_eq!(Transcript::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn entries_round_trip_field_for_field() {
        let entries = vec![
            TranscriptEntry { round: 3, grid_index: -4, sign: 1, query_hash: Some(7) },
            TranscriptEntry { round: 10, grid_index: 0, sign: -1, query_hash: Some(9) },
            TranscriptEntry { round: 99, grid_index: 8, sign: 1, query_hash: Some(11) },
        ];
        let t = Transcript::new(header(), entries).unwrap();
        let back = Transcript::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(back, t);

        let stripped = t.strip_hashes();
        assert!(stripped.entries.iter().all(|e| e.query_hash.is_none()));
        let back = Transcript::from_bytes(&stripped.to_bytes()).unwrap();
        assert_eq!(back, stripped);
        // Stripping shrinks each entry by the 8 sentinel bytes.
        assert_eq!(
            t.to_bytes().len() - stripped.to_bytes().len(),
            8 * t.entries.len()
        );
    }

    #[test]
    fn structural_validation() {
        let mut t = Transcript::new(header(), vec![]).unwrap();
        t.entries.push(TranscriptEntry { round: 5, grid_index: 0, sign: 1, query_hash: None });
        t.entries.push(TranscriptEntry { round: 5, grid_index: 0, sign: 1, query_hash: None });
        assert!(matches!(t.validate(), Err(Error::MalformedTranscript(_))));

        let t = Transcript::new(
            header(),
            vec![TranscriptEntry { round: 101, grid_index: 0, sign: 1, query_hash: None }],
        );
        assert!(t.is_err());

        let t = Transcript::new(
            header(),
            vec![TranscriptEntry { round: 1, grid_index: 99, sign: 1, query_hash: None }],
        );
        assert!(t.is_err());

        let t = Transcript::new(
            header(),
            vec![TranscriptEntry { round: 1, grid_index: 0, sign: 3, query_hash: None }],
        );
        assert!(t.is_err());
    }

    #[test]
    fn count_bound_values() {
        // ε=1, λ=1, T=2 -> log2(8·2^128) = 131.
        let v = transcript_count_bound_log2(1.0, 1.0, 2);
        assert!((v - 131.0).abs() < 1e-9);
        let v1 = transcript_count_bound_log2(1.0, 1.0, 1);
        assert!((v1 - 3.0).abs() < 1e-9);
        // Monotone in T and in 1/ε.
        assert!(transcript_count_bound_log2(0.5, 1.0, 2) > v);
        assert!(transcript_count_bound_log2(1.0, 1.0, 4) > v);
    }
}
