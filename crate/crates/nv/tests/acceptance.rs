// SPDX-License-Identifier: Apache-2.0

//! The acceptance gate: one test per release criterion, each printing a
//! single pass/fail line. Run with `cargo test --test acceptance`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::process::Command;

use nv::compiler::{canonical_hash, compile, optimize, BugId, OptLevel};
use nv::diversify::{request_variants, DiversifyRequest, ProviderConfig};
use nv::equiv::{check_equivalence, Budget, EquivalenceVerdict};
use nv::exec::{eval_mir, DEFAULT_FUEL};
use nv::fixtures::{self, Fixture, CORPUS, WITNESSES};
use nv::frontends::{lower_ast, parse_source, Dialect};
use nv::harness::{assemble_nversion, lower_bundle, run_nversion_signed, write_bundle};
use nv::metrics::{dynamic_csv, dynamic_report, static_uniqueness};
use nv::mir::{validate_function, Function};
use nv::validate::{run_validation, BatchReport, Project, VariantReport};
use nv::vm::run_bytecode;

fn criterion(n: u32, name: &str, body: impl FnOnce() + UnwindSafe) {
    let result = catch_unwind(body);
    let verdict = if result.is_ok() { "pass" } else { "FAIL" };
    println!("acceptance criterion {} ({}): {}", n, name, verdict);
    if let Err(e) = result {
        resume_unwind(e);
    }
}

fn nv_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nv"))
}

fn lower(fx: &Fixture, d: Dialect) -> Function {
    fx.lower(d).unwrap()
}

/// Mock-generate n=10 variants for a fixture and return those that survive
/// the full funnel, together with the per-variant reports.
fn accepted_variants(
    fx: &Fixture,
    seed: u64,
    out_dialect: Dialect,
) -> (Project, Vec<VariantReport>, Vec<Function>) {
    let reference = lower(fx, Dialect::Cm);
    let project = Project::new(reference, 1);
    let mut req = DiversifyRequest::new(fx.cm, Dialect::Cm);
    req.out_dialect = out_dialect;
    let variants = request_variants(&ProviderConfig::Mock { seed }, &req).unwrap();
    let budget = Budget::default();
    let mut reports = Vec::new();
    let mut accepted = Vec::new();
    for v in &variants {
        let (report, func) = run_validation(&project, &v.text, v.dialect, &budget);
        if let Some(f) = func {
            accepted.push(f);
        }
        reports.push(VariantReport {
            index: v.index,
            filters: report.filters,
        });
    }
    (project, reports, accepted)
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_1_mitigation() {
    criterion(1, "mitigation", || {
        for bug in ["B1", "B2", "B3"] {
            let out = nv_bin()
                .args(["demo-mitigate", "--bug", bug])
                .output()
                .unwrap();
            assert!(out.status.success(), "{}: {:?}", bug, out);
            let report: serde_json::Value =
                serde_json::from_slice(&out.stdout).expect("demo emits JSON");
            assert_eq!(report["mitigated"], true, "{}", bug);
            assert!(report["affected_inputs"].as_u64().unwrap() > 0, "{}", bug);
            assert_eq!(report["silent_escapes"], 0, "{}", bug);
            assert_eq!(report["variant_misbehaviors"], 0, "{}", bug);
            let expected_n = if bug == "B3" { 3 } else { 11 };
            assert_eq!(report["n_versions"], expected_n, "{}", bug);
        }

        // Baseline vs hardened through the CLI, using B2 on its witness:
        // the buggy single-version run returns a wrong value with a clean
        // exit; the bundle run exits 42 with a divergence trap.
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("mul3.cm");
        std::fs::write(&src, fixtures::find("mul3").unwrap().cm).unwrap();
        std::fs::write(
            dir.path().join("nv.json"),
            r#"{
  "project": "acc",
  "target": "mul3",
  "source": { "file": "mul3.cm", "dialect": "cm" },
  "provider": { "kind": "mock", "seed": 3 }
}"#,
        )
        .unwrap();
        let out = nv_bin()
            .current_dir(dir.path())
            .args(["harness"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{:?}", out);

        let baseline = nv_bin()
            .current_dir(dir.path())
            .args(["run", "mul3.cm", "--args", "1", "--level", "2", "--inject", "B2"])
            .output()
            .unwrap();
        assert_eq!(baseline.status.code(), Some(0), "wrong value must be silent");
        assert_eq!(String::from_utf8_lossy(&baseline.stdout).trim(), "2"); // 3*1 miscompiled

        let hardened = nv_bin()
            .current_dir(dir.path())
            .args([
                "run", "bundle/mul3", "--bundle", "--args", "1", "--level", "2", "--inject",
                "B2",
            ])
            .output()
            .unwrap();
        assert_eq!(hardened.status.code(), Some(42), "{:?}", hardened);
        assert!(String::from_utf8_lossy(&hardened.stdout).contains("nversion_divergence"));
    });
}

#[test]
fn criterion_2_funnel() {
    criterion(2, "funnel", || {
        let mut any_rejection = false;
        for seed in 1..=5u64 {
            let mut functions_with_acceptance = 0usize;
            for fx in CORPUS {
                let (_, reports, accepted) = accepted_variants(fx, seed, Dialect::Cm);
                let batch = BatchReport::tally(fx.name, serde_json::json!({"seed": seed}), reports);
                let f = &batch.funnel;
                assert!(
                    f.isolation >= f.project && f.project >= f.tests && f.tests >= f.equivalence,
                    "{} seed {}: counts not monotone: {:?}",
                    fx.name,
                    seed,
                    f
                );
                // Filter results are always a funnel prefix: only the last
                // recorded filter may be the failing one.
                for v in &batch.variants {
                    for (i, fr) in v.filters.iter().enumerate() {
                        if !fr.passed {
                            assert_eq!(i + 1, v.filters.len(), "failure must be last");
                        }
                    }
                }
                if f.equivalence < batch.variants.len() {
                    any_rejection = true;
                }
                if !accepted.is_empty() {
                    functions_with_acceptance += 1;
                }
            }
            assert!(
                functions_with_acceptance * 10 >= CORPUS.len() * 8,
                "seed {}: only {}/{} functions kept a variant",
                seed,
                functions_with_acceptance,
                CORPUS.len()
            );
        }
        assert!(any_rejection, "the rejection path was never exercised");
    });
}

#[test]
fn criterion_3_equivalence_soundness() {
    criterion(3, "equivalence soundness", || {
        let budget = Budget::default();
        // Positive side: every fixture pair is Equivalent per the primary
        // checker, and an independent sweep through the *bytecode* engine
        // agrees on every point of the domain.
        for fx in fixtures::all() {
            let a = lower(fx, Dialect::Cm);
            let b = lower(fx, Dialect::Gm);
            let verdict = check_equivalence(&a, &b, &budget).unwrap();
            assert!(
                matches!(verdict, EquivalenceVerdict::Equivalent { .. }),
                "{}: {:?}",
                fx.name,
                verdict
            );
            let ua = compile(&a, OptLevel::O0, None).unwrap();
            let ub = compile(&b, OptLevel::O0, None).unwrap();
            let widths: Vec<u32> = a.params.iter().map(|(_, t)| t.width()).collect();
            let total: u64 = widths.iter().map(|w| 1u64 << w).product();
            for idx in 0..total {
                let mut rem = idx;
                let mut bits = vec![0u64; widths.len()];
                for (i, w) in widths.iter().enumerate().rev() {
                    bits[i] = rem % (1u64 << w);
                    rem /= 1u64 << w;
                }
                let (oa, _) = run_bytecode(&ua, &bits, DEFAULT_FUEL, false).unwrap();
                let (ob, _) = run_bytecode(&ub, &bits, DEFAULT_FUEL, false).unwrap();
                assert!(oa.agrees_with(&ob), "{} at {:?}", fx.name, bits);
            }
        }
        // Negative side: counterexamples replay exactly on both engines.
        let broken: &[(&str, &str)] = &[
            ("nz", "int16 nz(int16 x) { return (x != 0) ? 1 : 0; }"),
            (
                "abs16",
                "int16 abs16(int16 x) { if (x == 12345) { return 0; } return (x < 0) ? -x : x; }",
            ),
            ("mul3", "int8 mul3(int8 x) { return x + x; }"),
        ];
        for (name, src) in broken {
            let reference = lower(fixtures::find(name).unwrap(), Dialect::Cm);
            let candidate = lower_ast(&parse_source(src, Dialect::Cm).unwrap(), Dialect::Cm).unwrap();
            let EquivalenceVerdict::NotEquivalent {
                input,
                reference: ro,
                candidate: co,
            } = check_equivalence(&reference, &candidate, &budget).unwrap()
            else {
                panic!("{}: expected NotEquivalent", name);
            };
            assert_ne!(ro, co);
            assert_eq!(eval_mir(&reference, &input, DEFAULT_FUEL).unwrap(), ro);
            assert_eq!(eval_mir(&candidate, &input, DEFAULT_FUEL).unwrap(), co);
            let ur = compile(&reference, OptLevel::O0, None).unwrap();
            let uc = compile(&candidate, OptLevel::O0, None).unwrap();
            let bits: Vec<u64> = input
                .iter()
                .zip(&reference.params)
                .map(|(v, (_, t))| t.from_signed(*v))
                .collect();
            assert_eq!(run_bytecode(&ur, &bits, DEFAULT_FUEL, false).unwrap().0, ro);
            assert_eq!(run_bytecode(&uc, &bits, DEFAULT_FUEL, false).unwrap().0, co);
        }
    });
}

#[test]
fn criterion_4_optimizer() {
    criterion(4, "optimizer correctness and bug potency", || {
        let budget = Budget::default();
        // Clean optimization preserves semantics everywhere.
        for fx in fixtures::all() {
            for d in [Dialect::Cm, Dialect::Gm] {
                let f = lower(fx, d);
                for level in OptLevel::all() {
                    let g = optimize(&f, level, None);
                    assert!(validate_function(&g).is_empty(), "{} {:?}", fx.name, level);
                    let v = check_equivalence(&f, &g, &budget).unwrap();
                    assert!(
                        matches!(v, EquivalenceVerdict::Equivalent { .. }),
                        "{} ({:?}) at {:?}: {:?}",
                        fx.name,
                        d,
                        level,
                        v
                    );
                }
            }
        }
        // Each bug is potent on some fixture at its activation level, yet
        // stealthy: the miscompiled output still validates and compiles
        // without any diagnostic.
        let witnesses = [
            (BugId::B1, "remconst"),
            (BugId::B2, "mul3"),
            (BugId::B3, "truncflag"),
        ];
        for (bug, name) in witnesses {
            let f = lower(fixtures::find(name).unwrap(), Dialect::Cm);
            let level = bug.activation_level();
            let g = optimize(&f, level, Some(bug));
            assert!(validate_function(&g).is_empty(), "{:?} output must validate", bug);
            compile(&f, level, Some(bug)).expect("stealthy compilation succeeds");
            let v = check_equivalence(&f, &g, &budget).unwrap();
            assert!(
                matches!(v, EquivalenceVerdict::NotEquivalent { .. }),
                "{:?} on {}: expected a miscompilation, got {:?}",
                bug,
                name,
                v
            );
            // Below the activation level the bug is inert.
            if level.level() > 1 {
                let below = OptLevel::new(level.level() - 1).unwrap();
                let h = optimize(&f, below, Some(bug));
                let v = check_equivalence(&f, &h, &budget).unwrap();
                assert!(matches!(v, EquivalenceVerdict::Equivalent { .. }));
            }
        }
        assert!(WITNESSES.len() == 3);
    });
}

#[test]
fn criterion_5_static_uniqueness() {
    criterion(5, "static uniqueness", || {
        // A mock variant that is unique unoptimized but collapses onto its
        // siblings once the optimizer cleans up.
        let mut found_collapse = false;
        'outer: for fx in CORPUS {
            for seed in 1..=5u64 {
                let (_, _, accepted) = accepted_variants(fx, seed, Dialect::Cm);
                let reference = lower(fx, Dialect::Cm);
                let report = static_uniqueness(&reference, &accepted).unwrap();
                let o0 = report.level("O0").unwrap();
                for i in 0..accepted.len() {
                    let later_dup = ["O1", "O2", "O3"]
                        .iter()
                        .all(|l| !report.level(l).unwrap().unique[i]);
                    if o0.unique[i] && later_dup {
                        found_collapse = true;
                        break 'outer;
                    }
                }
            }
        }
        assert!(found_collapse, "no variant's uniqueness was undone by optimization");

        // A cm/gm pair stays unique at every level, deterministically.
        let fx = fixtures::find("nz").unwrap();
        let cm = lower(fx, Dialect::Cm);
        let gm = lower(fx, Dialect::Gm);
        let r1 = static_uniqueness(&cm, &[gm.clone()]).unwrap();
        for l in ["ir", "O0", "O1", "O2", "O3"] {
            assert_eq!(r1.level(l).unwrap().unique, vec![true], "{}", l);
        }
        let r2 = static_uniqueness(&cm, &[gm]).unwrap();
        assert_eq!(r1, r2);
    });
}

#[test]
fn criterion_6_dynamic_diversity() {
    criterion(6, "dynamic diversity", || {
        let mut cm_means = Vec::new();
        let mut gm_means = Vec::new();
        for fx in CORPUS {
            let reference = lower(fx, Dialect::Cm);
            let suite = nv::validate::TestSuite::generate(&reference, 1);

            // Reference against itself: identical profile, similarity 1.
            let self_report = dynamic_report(&reference, &[reference.clone()], &suite).unwrap();
            assert_eq!(self_report.variants[0].jaccard_vs_reference, 1.0);
            assert_eq!(self_report.variants[0].profile, self_report.reference_profile);

            for (out, store) in [(Dialect::Cm, &mut cm_means), (Dialect::Gm, &mut gm_means)] {
                let (_, _, accepted) = accepted_variants(fx, 1, out);
                assert!(!accepted.is_empty(), "{} ({:?})", fx.name, out);
                let report = dynamic_report(&reference, &accepted, &suite).unwrap();
                for v in &report.variants {
                    assert!(
                        (0.0..=1.0).contains(&v.jaccard_vs_reference),
                        "{}: {}",
                        fx.name,
                        v.jaccard_vs_reference
                    );
                }
                store.push(report.mean_jaccard());
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (cm, gm) = (mean(&cm_means), mean(&gm_means));
        assert!(
            cm > gm,
            "same-dialect variants must look more alike: cm {:.3} vs gm {:.3}",
            cm,
            gm
        );
    });
}

#[test]
fn criterion_7_transparency() {
    criterion(7, "transparency", || {
        for fx in CORPUS {
            let reference = lower(fx, Dialect::Cm);
            let (_, _, mut accepted) = accepted_variants(fx, 1, Dialect::Cm);
            accepted.push(lower(fx, Dialect::Gm));
            let bundle = assemble_nversion(&reference, &accepted).unwrap();
            let lb = lower_bundle(&bundle, OptLevel::O2, &[]).unwrap();
            // Exhaustive i8-range sweep per parameter.
            let arity = reference.params.len();
            let sweep: Vec<Vec<i64>> = match arity {
                1 => (-128..=127).map(|x| vec![x]).collect(),
                2 => (-128..=127)
                    .flat_map(|a| (-128..=127).map(move |b| vec![a, b]))
                    .collect(),
                n => panic!("unexpected arity {}", n),
            };
            for args in sweep {
                let want = eval_mir(&reference, &args, DEFAULT_FUEL).unwrap();
                let got = run_nversion_signed(&lb, &args, DEFAULT_FUEL).unwrap();
                assert!(
                    want.agrees_with(&got),
                    "{} at {:?}: {} vs {}",
                    fx.name,
                    args,
                    want.render(),
                    got.render()
                );
            }
        }
    });
}

#[test]
fn criterion_8_reproducibility() {
    criterion(8, "reproducibility", || {
        let run_once = || {
            let mut artifacts: Vec<String> = Vec::new();
            for fx in CORPUS.iter().take(3) {
                let reference = lower(fx, Dialect::Cm);
                let (_, reports, accepted) = accepted_variants(fx, 1, Dialect::Gm);
                let batch =
                    BatchReport::tally(fx.name, serde_json::json!({"seed": 1}), reports);
                artifacts.push(serde_json::to_string_pretty(&batch).unwrap());
                let uniq = static_uniqueness(&reference, &accepted).unwrap();
                artifacts.push(serde_json::to_string_pretty(&uniq).unwrap());
                let suite = nv::validate::TestSuite::generate(&reference, 1);
                let dyn_report = dynamic_report(&reference, &accepted, &suite).unwrap();
                artifacts.push(dynamic_csv(&dyn_report));
                let bundle = assemble_nversion(&reference, &accepted).unwrap();
                let dir = tempfile::tempdir().unwrap();
                for path in write_bundle(dir.path(), &bundle).unwrap() {
                    artifacts.push(std::fs::read_to_string(path).unwrap());
                }
                for level in OptLevel::all() {
                    artifacts.push(canonical_hash(&compile(&reference, level, None).unwrap()));
                }
            }
            artifacts
        };
        let first = run_once();
        let second = run_once();
        assert_eq!(first, second, "artifacts are not byte-identical across runs");

        // Hashes never collide across distinct corpus functions.
        let hashes: BTreeSet<String> = CORPUS
            .iter()
            .map(|fx| canonical_hash(&compile(&lower(fx, Dialect::Cm), OptLevel::O0, None).unwrap()))
            .collect();
        assert_eq!(hashes.len(), CORPUS.len());
    });
}
