// SPDX-License-Identifier: Apache-2.0

//! Equivalence checking between a reference function and a candidate.
//!
//! For domains small enough to enumerate, the check is exhaustive and its
//! positive verdict is a proof. Anything else is `Unknown` — sampling never
//! upgrades to `Equivalent`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{Evaluator, ExecError, Outcome, DEFAULT_FUEL};
use crate::mir::Function;

/// Resource limits for a single equivalence query.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Budget {
    /// Largest input-domain cardinality that will be enumerated exhaustively.
    pub max_enumeration: u64,
    /// Fuel granted to each engine run per input.
    pub per_input_fuel: u64,
    /// Wall-clock ceiling for the whole query, in milliseconds.
    pub wall_limit_ms: u64,
}

impl Default for Budget {
    fn default() -> Budget {
        Budget {
            max_enumeration: 1 << 20,
            per_input_fuel: DEFAULT_FUEL,
            wall_limit_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquivalenceVerdict {
    Equivalent {
        inputs_checked: u64,
    },
    NotEquivalent {
        /// The first differing input in lexicographic unsigned order,
        /// rendered as signed values.
        input: Vec<i64>,
        reference: Outcome,
        candidate: Outcome,
    },
    Unknown {
        reason: String,
    },
}

impl EquivalenceVerdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, EquivalenceVerdict::Equivalent { .. })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EquivError {
    #[error("signature mismatch: reference {reference}, candidate {candidate}")]
    SignatureMismatch { reference: String, candidate: String },
    #[error("execution setup failed: {0}")]
    Exec(String),
}

fn signature_of(f: &Function) -> String {
    format!(
        "({}) -> {}",
        f.params
            .iter()
            .map(|(_, t)| t.name().to_string())
            .collect::<Vec<_>>()
            .join(", "),
        f.ret.name()
    )
}

fn domain_size(f: &Function) -> Option<u64> {
    let mut n: u64 = 1;
    for (_, ty) in &f.params {
        let per = 1u64.checked_shl(ty.width())?;
        n = n.checked_mul(per)?;
    }
    Some(n)
}

/// Exhaustively compare the two functions over the full input domain.
///
/// Inputs are enumerated in lexicographic order of the unsigned bit
/// patterns, leftmost parameter most significant; the first disagreement is
/// reported. Outcome comparison treats all traps as equal.
pub fn check_equivalence(
    reference: &Function,
    candidate: &Function,
    budget: &Budget,
) -> Result<EquivalenceVerdict, EquivError> {
    let (sr, sc) = (signature_of(reference), signature_of(candidate));
    if sr != sc {
        return Err(EquivError::SignatureMismatch {
            reference: sr,
            candidate: sc,
        });
    }
    let total = match domain_size(reference) {
        Some(n) if n <= budget.max_enumeration => n,
        _ => {
            return Ok(EquivalenceVerdict::Unknown {
                reason: "domain_too_large".into(),
            })
        }
    };

    let er = Evaluator::new(reference).map_err(|e: ExecError| EquivError::Exec(e.to_string()))?;
    let ec = Evaluator::new(candidate).map_err(|e: ExecError| EquivError::Exec(e.to_string()))?;
    let tys = reference.params.clone();
    let start = Instant::now();

    let mut bits = vec![0u64; tys.len()];
    for idx in 0..total {
        if idx % 4096 == 0 && start.elapsed().as_millis() as u64 > budget.wall_limit_ms {
            return Ok(EquivalenceVerdict::Unknown {
                reason: "wall_limit".into(),
            });
        }
        // Decode idx into per-parameter bit patterns, leftmost most
        // significant.
        let mut rem = idx;
        for (i, (_, ty)) in tys.iter().enumerate().rev() {
            let per = 1u64 << ty.width();
            bits[i] = rem % per;
            rem /= per;
        }
        let a = er
            .eval_bits(&bits, budget.per_input_fuel)
            .map_err(|e| EquivError::Exec(e.to_string()))?;
        let b = ec
            .eval_bits(&bits, budget.per_input_fuel)
            .map_err(|e| EquivError::Exec(e.to_string()))?;
        if !a.agrees_with(&b) {
            return Ok(EquivalenceVerdict::NotEquivalent {
                input: bits
                    .iter()
                    .zip(&tys)
                    .map(|(v, (_, ty))| ty.to_signed(*v))
                    .collect(),
                reference: a,
                candidate: b,
            });
        }
    }
    Ok(EquivalenceVerdict::Equivalent {
        inputs_checked: total,
    })
}

/// Randomized plus boundary-value differential testing.
///
/// This can only *refute* equivalence; when no disagreement is found the
/// verdict stays `Unknown("sampled")`, regardless of sample count.
pub fn sample_differential(
    reference: &Function,
    candidate: &Function,
    seed: u64,
    samples: u64,
    budget: &Budget,
) -> Result<EquivalenceVerdict, EquivError> {
    let (sr, sc) = (signature_of(reference), signature_of(candidate));
    if sr != sc {
        return Err(EquivError::SignatureMismatch {
            reference: sr,
            candidate: sc,
        });
    }
    let er = Evaluator::new(reference).map_err(|e: ExecError| EquivError::Exec(e.to_string()))?;
    let ec = Evaluator::new(candidate).map_err(|e: ExecError| EquivError::Exec(e.to_string()))?;
    let tys = reference.params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let boundary: Vec<Vec<u64>> = boundary_tuples(reference);
    let try_input = |bits: &[u64]| -> Result<Option<EquivalenceVerdict>, EquivError> {
        let a = er
            .eval_bits(bits, budget.per_input_fuel)
            .map_err(|e| EquivError::Exec(e.to_string()))?;
        let b = ec
            .eval_bits(bits, budget.per_input_fuel)
            .map_err(|e| EquivError::Exec(e.to_string()))?;
        Ok((!a.agrees_with(&b)).then(|| EquivalenceVerdict::NotEquivalent {
            input: bits
                .iter()
                .zip(&tys)
                .map(|(v, (_, ty))| ty.to_signed(*v))
                .collect(),
            reference: a,
            candidate: b,
        }))
    };
    for bits in &boundary {
        if let Some(v) = try_input(bits)? {
            return Ok(v);
        }
    }
    for _ in 0..samples {
        let bits: Vec<u64> = tys
            .iter()
            .map(|(_, ty)| rng.gen::<u64>() & ty.mask())
            .collect();
        if let Some(v) = try_input(&bits)? {
            return Ok(v);
        }
    }
    Ok(EquivalenceVerdict::Unknown {
        reason: "sampled".into(),
    })
}

/// Cross-product of per-parameter boundary values (0, 1, -1, min, max),
/// capped at 1024 tuples.
pub fn boundary_tuples(f: &Function) -> Vec<Vec<u64>> {
    let per_param: Vec<Vec<u64>> = f
        .params
        .iter()
        .map(|(_, ty)| {
            let mut vals = vec![
                0u64,
                1 & ty.mask(),
                ty.mask(),
                ty.from_signed(ty.min_signed()),
                ty.from_signed(ty.max_signed()),
            ];
            vals.sort_unstable();
            vals.dedup();
            vals
        })
        .collect();
    let mut tuples: Vec<Vec<u64>> = vec![vec![]];
    for vals in &per_param {
        let mut next = Vec::new();
        for t in &tuples {
            for v in vals {
                let mut t2 = t.clone();
                t2.push(*v);
                next.push(t2);
            }
        }
        tuples = next;
        if tuples.len() > 1024 {
            tuples.truncate(1024);
            break;
        }
    }
    tuples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mir::parse_mir;

    fn parse(src: &str) -> Function {
        parse_mir(src).unwrap()
    }

    #[test]
    fn equal_functions_are_equivalent() {
        let a = parse("func @f(%x: i8) -> i8 { entry: %y = add %x, const.i8 1 ret %y }");
        let b = parse("func @f(%q: i8) -> i8 { entry: %r = add const.i8 1, %q ret %r }");
        let v = check_equivalence(&a, &b, &Budget::default()).unwrap();
        assert_eq!(v, EquivalenceVerdict::Equivalent { inputs_checked: 256 });
    }

    #[test]
    fn first_mismatch_is_lexicographic() {
        // Differs for every x >= 1 (unsigned order starts at 0).
        let a = parse("func @f(%x: i8) -> i8 { entry: ret %x }");
        let b = parse(
            "func @f(%x: i8) -> i8 { entry: %y = mul %x, const.i8 2 ret %y }",
        );
        match check_equivalence(&a, &b, &Budget::default()).unwrap() {
            EquivalenceVerdict::NotEquivalent { input, .. } => assert_eq!(input, vec![1]),
            v => panic!("expected mismatch, got {:?}", v),
        }
    }

    #[test]
    fn trap_reasons_do_not_distinguish() {
        // One traps with div_zero, the other explicitly; still equivalent.
        let a = parse("func @f(%x: i8) -> i8 { entry: %q = sdiv const.i8 1, %x ret %q }");
        let b = "\
func @f(%x: i8) -> i8 {
entry:
  %z = icmp.eq %x, const.i8 0
  condbr %z, boom, ok
boom:
  trap
ok:
  %q = sdiv const.i8 1, %x
  ret %q
}
";
        let v = check_equivalence(&a, &parse(b), &Budget::default()).unwrap();
        assert!(v.is_equivalent(), "{:?}", v);
    }

    #[test]
    fn oversized_domain_is_unknown() {
        let a = parse("func @f(%x: i32) -> i32 { entry: ret %x }");
        let v = check_equivalence(&a, &a, &Budget::default()).unwrap();
        assert_eq!(
            v,
            EquivalenceVerdict::Unknown {
                reason: "domain_too_large".into()
            }
        );
    }

    #[test]
    fn two_i16_params_exceed_default_budget() {
        let a = parse("func @f(%x: i16, %y: i16) -> i16 { entry: ret %x }");
        let v = check_equivalence(&a, &a, &Budget::default()).unwrap();
        assert!(matches!(v, EquivalenceVerdict::Unknown { .. }));
        // A raised ceiling enumerates all 2^32... too slow here; instead an
        // i8 pair fits comfortably.
        let b = parse("func @g(%x: i8, %y: i8) -> i8 { entry: %s = add %x, %y ret %s }");
        let v = check_equivalence(&b, &b, &Budget::default()).unwrap();
        assert_eq!(
            v,
            EquivalenceVerdict::Equivalent {
                inputs_checked: 65536
            }
        );
    }

    #[test]
    fn signature_mismatch_is_an_error() {
        let a = parse("func @f(%x: i8) -> i8 { entry: ret %x }");
        let b = parse("func @f(%x: i16) -> i16 { entry: ret %x }");
        assert!(check_equivalence(&a, &b, &Budget::default()).is_err());
    }

    #[test]
    fn sampling_never_proves() {
        let a = parse("func @f(%x: i8) -> i8 { entry: ret %x }");
        let v = sample_differential(&a, &a, 42, 10_000, &Budget::default()).unwrap();
        assert_eq!(
            v,
            EquivalenceVerdict::Unknown {
                reason: "sampled".into()
            }
        );
    }

    #[test]
    fn sampling_hits_boundary_disagreements() {
        // Disagree only at the minimum signed value.
        let a = parse("func @f(%x: i16) -> i16 { entry: ret %x }");
        let b = "\
func @f(%x: i16) -> i16 {
entry:
  %m = icmp.eq %x, const.i16 -32768
  condbr %m, odd, norm
odd:
  ret const.i16 0
norm:
  ret %x
}
";
        let v = sample_differential(&a, &parse(b), 7, 10, &Budget::default()).unwrap();
        match v {
            EquivalenceVerdict::NotEquivalent { input, .. } => {
                assert_eq!(input, vec![-32768]);
            }
            other => panic!("expected refutation, got {:?}", other),
        }
    }
}
