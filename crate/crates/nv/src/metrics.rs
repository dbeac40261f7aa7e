// SPDX-License-Identifier: Apache-2.0

//! Diversity measurement over an accepted variant set.
//!
//! Static diversity: does a variant's compiled artifact hash differently
//! from the reference and from every other variant, and does that survive
//! optimization? Dynamic diversity: how similar are the opcode profiles the
//! variants exercise on the frozen test suite, measured as Jaccard
//! similarity against the reference.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compiler::{canonical_hash, compile, OptLevel};
use crate::harness::normalize_variant;
use crate::mir::{print_mir, Function};
use crate::validate::TestSuite;
use crate::vm::run_bytecode;

/// The comparison granularities, from raw IR text to fully optimized
/// bytecode.
pub const LEVEL_LABELS: [&str; 5] = ["ir", "O0", "O1", "O2", "O3"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelUniqueness {
    pub level: String,
    pub reference_key: String,
    pub variant_keys: Vec<String>,
    /// `unique[i]` is true when variant i's key differs from the reference
    /// and from every other variant.
    pub unique: Vec<bool>,
    pub unique_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub function: String,
    pub n_variants: usize,
    pub levels: Vec<LevelUniqueness>,
}

impl UniquenessReport {
    pub fn level(&self, label: &str) -> Option<&LevelUniqueness> {
        self.levels.iter().find(|l| l.level == label)
    }
}

fn uniqueness_at(label: &str, reference_key: String, variant_keys: Vec<String>) -> LevelUniqueness {
    let unique: Vec<bool> = variant_keys
        .iter()
        .enumerate()
        .map(|(i, k)| {
            *k != reference_key
                && variant_keys
                    .iter()
                    .enumerate()
                    .all(|(j, other)| i == j || k != other)
        })
        .collect();
    let unique_count = unique.iter().filter(|u| **u).count();
    LevelUniqueness {
        level: label.to_string(),
        reference_key,
        variant_keys,
        unique,
        unique_count,
    }
}

/// Compute uniqueness at the IR level (canonical printed text after
/// normalization) and at every optimization level (canonical bytecode hash).
pub fn static_uniqueness(
    reference: &Function,
    variants: &[Function],
) -> Result<UniquenessReport, String> {
    let mut levels = Vec::new();
    let norm_ref = normalize_variant(reference);
    let norm_vars: Vec<Function> = variants.iter().map(normalize_variant).collect();
    levels.push(uniqueness_at(
        "ir",
        print_mir(&norm_ref),
        norm_vars.iter().map(print_mir).collect(),
    ));
    for level in OptLevel::all() {
        let hash = |f: &Function| -> Result<String, String> {
            compile(f, level, None)
                .map(|u| canonical_hash(&u))
                .map_err(|e| e.to_string())
        };
        let rk = hash(&norm_ref)?;
        let vks = norm_vars.iter().map(hash).collect::<Result<Vec<_>, _>>()?;
        levels.push(uniqueness_at(LEVEL_LABELS[1 + level.level() as usize], rk, vks));
    }
    Ok(UniquenessReport {
        function: reference.name.clone(),
        n_variants: variants.len(),
        levels,
    })
}

/// Jaccard similarity of two sets; two empty sets count as identical (1.0).
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantDynamics {
    pub index: usize,
    pub profile: BTreeMap<String, u64>,
    pub jaccard_vs_reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicReport {
    pub function: String,
    pub inputs: usize,
    pub reference_profile: BTreeMap<String, u64>,
    pub variants: Vec<VariantDynamics>,
}

impl DynamicReport {
    pub fn mean_jaccard(&self) -> f64 {
        if self.variants.is_empty() {
            return 1.0;
        }
        self.variants
            .iter()
            .map(|v| v.jaccard_vs_reference)
            .sum::<f64>()
            / self.variants.len() as f64
    }
}

/// Run every version on the suite inputs under the traced interpreter at
/// level 0 and aggregate executed-opcode profiles.
pub fn dynamic_report(
    reference: &Function,
    variants: &[Function],
    suite: &TestSuite,
) -> Result<DynamicReport, String> {
    let profile_of = |f: &Function| -> Result<BTreeMap<String, u64>, String> {
        let unit = compile(f, OptLevel::O0, None).map_err(|e| e.to_string())?;
        let mut acc: BTreeMap<String, u64> = BTreeMap::new();
        for case in &suite.cases {
            let bits: Vec<u64> = case
                .args
                .iter()
                .zip(&unit.params)
                .map(|(v, ty)| ty.from_signed(*v))
                .collect();
            let (_, trace) = run_bytecode(&unit, &bits, suite.per_case_fuel, true)
                .map_err(|e| e.to_string())?;
            for (op, n) in trace.expect("tracing enabled").profile() {
                *acc.entry(op).or_insert(0) += n;
            }
        }
        Ok(acc)
    };
    let reference_profile = profile_of(reference)?;
    let ref_set: BTreeSet<String> = reference_profile.keys().cloned().collect();
    let mut out = Vec::new();
    for (i, v) in variants.iter().enumerate() {
        let profile = profile_of(v)?;
        let set: BTreeSet<String> = profile.keys().cloned().collect();
        out.push(VariantDynamics {
            index: i + 1,
            profile,
            jaccard_vs_reference: jaccard(&ref_set, &set),
        });
    }
    Ok(DynamicReport {
        function: reference.name.clone(),
        inputs: suite.cases.len(),
        reference_profile,
        variants: out,
    })
}

/// One `series,opcode,count` line per profile entry, reference first.
pub fn dynamic_csv(report: &DynamicReport) -> String {
    let mut s = String::from("series,opcode,count\n");
    for (op, n) in &report.reference_profile {
        s.push_str(&format!("reference,{},{}\n", op, n));
    }
    for v in &report.variants {
        for (op, n) in &v.profile {
            s.push_str(&format!("v{},{},{}\n", v.index, op, n));
        }
    }
    s
}

/// Persist `uniqueness.json` and `dynamic.csv` under `dir`.
pub fn write_reports(
    dir: &Path,
    uniqueness: &UniquenessReport,
    dynamics: &DynamicReport,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("uniqueness.json"),
        serde_json::to_string_pretty(uniqueness)?,
    )?;
    std::fs::write(dir.join("dynamic.csv"), dynamic_csv(dynamics))?;
    Ok(())
}
