//! Tiny spec-string parsers: seed-space queries for the static analyst and
//! labeling functions for labeled distributions.

use ada_ogd_core::seedspace::{Query, SeedSpace};

use crate::error::{CliError, CliResult};

fn parse_u64(field: &'static str, raw: &str) -> CliResult<u64> {
    let raw = raw.trim();
    let parsed = if let Some(hex) = raw.strip_prefix("0x") {
        u64::from_str_radix(hex, 16)
    } else {
        raw.parse()
    };
    parsed.map_err(|e| CliError::validation(field, format!("bad integer `{raw}`: {e}")))
}

fn parse_sign(field: &'static str, raw: &str) -> CliResult<i8> {
    match raw.trim() {
        "+1" | "1" => Ok(1),
        "-1" => Ok(-1),
        other => Err(CliError::validation(field, format!("expected ±1, got `{other}`"))),
    }
}

/// `constant:±1`, `bit:K`, `parity:MASK`, `subcube:MASK:PATTERN`.
pub fn seed_query(spec: &str, space: SeedSpace) -> CliResult<Query> {
    let mut parts = spec.splitn(3, ':');
    let kind = parts.next().unwrap_or_default();
    match kind {
        "constant" => {
            let sign = parse_sign(
                "analyst.query",
                parts.next().ok_or_else(|| CliError::validation("analyst.query", "missing sign"))?,
            )?;
            Ok(Query::constant(space, sign))
        }
        "bit" => {
            let bit = parse_u64(
                "analyst.query",
                parts.next().ok_or_else(|| CliError::validation("analyst.query", "missing bit"))?,
            )?;
            if bit >= space.bits() as u64 {
                return Err(CliError::validation(
                    "analyst.query",
                    format!("bit {bit} outside 0..{}", space.bits()),
                ));
            }
            Ok(Query::sign_of_bit(space, bit as u16))
        }
        "parity" => {
            let mask = parse_u64(
                "analyst.query",
                parts.next().ok_or_else(|| CliError::validation("analyst.query", "missing mask"))?,
            )?;
            Ok(Query::parity(space, mask & space.mask()))
        }
        "subcube" => {
            let mask = parse_u64(
                "analyst.query",
                parts.next().ok_or_else(|| CliError::validation("analyst.query", "missing mask"))?,
            )?;
            let pattern = parse_u64(
                "analyst.query",
                parts
                    .next()
                    .ok_or_else(|| CliError::validation("analyst.query", "missing pattern"))?,
            )?;
            Ok(Query::subcube(space, mask & space.mask(), pattern))
        }
        other => Err(CliError::validation(
            "analyst.query",
            format!("unknown query kind `{other}`"),
        )),
    }
}

/// `parity[:MASK]`, `bit:K`, `majority:MASK`, `constant:±1` over features.
pub fn label_fn(
    spec: &str,
    feature_bits: u16,
) -> CliResult<Box<dyn Fn(u64) -> i8 + Send + Sync>> {
    let all = (1u64 << feature_bits) - 1;
    let (kind, arg) = match spec.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (spec, None),
    };
    match kind {
        "parity" => {
            let mask = match arg {
                Some(a) => parse_u64("distribution.label", a)? & all,
                None => all,
            };
            Ok(Box::new(move |x| {
                if (x & mask).count_ones() % 2 == 0 {
                    1
                } else {
                    -1
                }
            }))
        }
        "bit" => {
            let bit = parse_u64(
                "distribution.label",
                arg.ok_or_else(|| CliError::validation("distribution.label", "missing bit"))?,
            )?;
            if bit >= feature_bits as u64 {
                return Err(CliError::validation(
                    "distribution.label",
                    format!("bit {bit} outside 0..{feature_bits}"),
                ));
            }
            Ok(Box::new(move |x| if (x >> bit) & 1 == 1 { 1 } else { -1 }))
        }
        "majority" => {
            let mask = parse_u64(
                "distribution.label",
                arg.ok_or_else(|| CliError::validation("distribution.label", "missing mask"))?,
            )? & all;
            let k = mask.count_ones();
            Ok(Box::new(move |x| {
                if 2 * (x & mask).count_ones() >= k {
                    1
                } else {
                    -1
                }
            }))
        }
        "constant" => {
            let sign = parse_sign(
                "distribution.label",
                arg.ok_or_else(|| CliError::validation("distribution.label", "missing sign"))?,
            )?;
            Ok(Box::new(move |_| sign))
        }
        other => Err(CliError::validation(
            "distribution.label",
            format!("unknown label kind `{other}`"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_specs_parse() {
        let space = SeedSpace::new(8).unwrap();
        assert_eq!(seed_query("constant:+1", space).unwrap().eval(0), 1);
        assert_eq!(seed_query("bit:3", space).unwrap().eval(0b1000), 1);
        assert_eq!(seed_query("parity:0x3", space).unwrap().eval(0b11), 1);
        let q = seed_query("subcube:0x7:0x5", space).unwrap();
        assert_eq!(q.eval(0b101), 1);
        assert_eq!(q.eval(0b100), -1);
        assert!(seed_query("bit:99", space).is_err());
        assert!(seed_query("wat", space).is_err());
    }

    #[test]
    fn label_specs_parse() {
        let f = label_fn("parity", 4).unwrap();
        assert_eq!(f(0b11), 1);
        assert_eq!(f(0b1), -1);
        let f = label_fn("bit:1", 4).unwrap();
        assert_eq!(f(0b10), 1);
        let f = label_fn("majority:0x7", 4).unwrap();
        assert_eq!(f(0b110), 1);
        assert_eq!(f(0b100), -1);
        let f = label_fn("constant:-1", 4).unwrap();
        assert_eq!(f(0), -1);
        assert!(label_fn("nope", 4).is_err());
    }
}
