// SPDX-License-Identifier: Apache-2.0

//! N-of-N bundle assembly and execution.
//!
//! Accepted variants are normalized to a dialect-free form, renamed to
//! `<target>__v<k>` (the reference is always `v1`), and fronted by a wrapper
//! that bears the original function name. The wrapper invokes every version,
//! lets any trap through unchanged, and traps with `nversion_divergence`
//! when the returned values disagree.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::{compile, BugId, BytecodeUnit, LoweringError, OptLevel};
use crate::exec::{Outcome, TrapReason};
use crate::mir::{
    validate_function_mode, Block, BranchTarget, CmpPred, DialectTag, Function, Instr, MirType,
    Op, Operand, ParseMode, Terminator, INTRINSIC_GM_DIVCHECK,
};
use crate::vm::run_bytecode;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum HarnessError {
    #[error("an N-version bundle needs at least two versions, got {0}")]
    TooFewVersions(usize),
    #[error("version {0} has a different signature than the reference")]
    SignatureMismatch(usize),
    #[error("wrapper synthesis produced invalid MIR: {0}")]
    BadWrapper(String),
    #[error("bytecode lowering failed: {0}")]
    Lowering(String),
}

/// Strip everything dialect-specific from an accepted variant:
///
/// - parameters are renamed `%a0`, `%a1`, ... in order;
/// - `gm.divcheck` guards are removed, uses rewired to the guarded value
///   (the division itself carries the same trap);
/// - the dialect tag is cleared.
///
/// The transformation is idempotent and preserves outcomes.
pub fn normalize_variant(f: &Function) -> Function {
    let mut f = f.clone();
    f.dialect = DialectTag::Raw;

    // Make room for the %a<i> names if any non-parameter register already
    // uses one.
    let targets: Vec<String> = (0..f.params.len()).map(|i| format!("a{}", i)).collect();
    let param_names: Vec<String> = f.params.iter().map(|(p, _)| p.clone()).collect();
    let mut evictions: HashMap<String, Operand> = HashMap::new();
    for b in &mut f.blocks {
        for (p, _) in &mut b.params {
            if targets.contains(p) && !param_names.contains(p) {
                let fresh = format!("{}__r", p);
                evictions.insert(p.clone(), Operand::Reg(fresh.clone()));
                *p = fresh;
            }
        }
        for i in &mut b.instrs {
            if targets.contains(&i.dest) && !param_names.contains(&i.dest) {
                let fresh = format!("{}__r", i.dest);
                evictions.insert(i.dest.clone(), Operand::Reg(fresh.clone()));
                i.dest = fresh;
            }
        }
    }
    substitute(&mut f, &evictions);

    let renames: HashMap<String, Operand> = f
        .params
        .iter()
        .zip(&targets)
        .filter(|((p, _), t)| p != *t)
        .map(|((p, _), t)| (p.clone(), Operand::Reg(t.clone())))
        .collect();
    for ((p, _), t) in f.params.iter_mut().zip(&targets) {
        *p = t.clone();
    }
    substitute(&mut f, &renames);

    // Drop divcheck guards, rewiring their uses to the guarded operand.
    let mut guard_map: HashMap<String, Operand> = HashMap::new();
    for b in &mut f.blocks {
        b.instrs.retain(|i| match &i.op {
            Op::Intrinsic { name, args } if name == INTRINSIC_GM_DIVCHECK => {
                guard_map.insert(i.dest.clone(), args[0].clone());
                false
            }
            _ => true,
        });
    }
    substitute(&mut f, &guard_map);
    f
}

fn substitute(f: &mut Function, map: &HashMap<String, Operand>) {
    if map.is_empty() {
        return;
    }
    let fix = |o: &mut Operand| {
        let mut guard = 0;
        while let Operand::Reg(r) = o {
            match map.get(r.as_str()) {
                Some(rep) => {
                    *o = rep.clone();
                    guard += 1;
                    if guard > map.len() {
                        break;
                    }
                }
                None => break,
            }
        }
    };
    for b in &mut f.blocks {
        for i in &mut b.instrs {
            for o in i.op.operands_mut() {
                fix(o);
            }
        }
        match &mut b.term {
            Terminator::Ret(v) => fix(v),
            Terminator::Trap => {}
            Terminator::Br(t) => t.args.iter_mut().for_each(&fix),
            Terminator::CondBr {
                cond,
                on_true,
                on_false,
            } => {
                fix(cond);
                on_true.args.iter_mut().for_each(&fix);
                on_false.args.iter_mut().for_each(&fix);
            }
        }
    }
}

/// A fully assembled N-of-N bundle: normalized versions plus the wrapper
/// that replaces the original function at its call sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bundle {
    pub target: String,
    pub wrapper: Function,
    pub versions: Vec<Function>,
}

impl Bundle {
    pub fn n(&self) -> usize {
        self.versions.len()
    }
}

/// Build a bundle from the reference (version 1) and accepted variants
/// (versions 2..). All functions must share the reference's signature.
pub fn assemble_nversion(
    reference: &Function,
    variants: &[Function],
) -> Result<Bundle, HarnessError> {
    let n = 1 + variants.len();
    if n < 2 {
        return Err(HarnessError::TooFewVersions(n));
    }
    let target = reference.name.clone();
    let sig = |f: &Function| {
        (
            f.params.iter().map(|(_, t)| *t).collect::<Vec<_>>(),
            f.ret,
        )
    };
    let mut versions = Vec::with_capacity(n);
    for (k, f) in std::iter::once(reference).chain(variants).enumerate() {
        if sig(f) != sig(reference) {
            return Err(HarnessError::SignatureMismatch(k + 1));
        }
        let mut v = normalize_variant(f);
        v.name = format!("{}__v{}", target, k + 1);
        versions.push(v);
    }
    let wrapper = synthesize_wrapper(&target, reference, n)?;
    Ok(Bundle {
        target,
        wrapper,
        versions,
    })
}

/// The wrapper: `callv` each version, compare all results against version 1,
/// return the agreed value or trap.
fn synthesize_wrapper(target: &str, reference: &Function, n: usize) -> Result<Function, HarnessError> {
    let params: Vec<(String, MirType)> = reference
        .params
        .iter()
        .enumerate()
        .map(|(i, (_, t))| (format!("a{}", i), *t))
        .collect();
    let mut instrs: Vec<Instr> = (1..=n)
        .map(|k| Instr {
            dest: format!("r{}", k),
            op: Op::Callv(k as u32),
        })
        .collect();
    let mut agree: Option<String> = None;
    for k in 2..=n {
        let eq = format!("e{}", k);
        instrs.push(Instr {
            dest: eq.clone(),
            op: Op::Icmp {
                pred: CmpPred::Eq,
                lhs: Operand::Reg("r1".into()),
                rhs: Operand::Reg(format!("r{}", k)),
            },
        });
        agree = Some(match agree {
            None => eq,
            Some(prev) => {
                let both = format!("g{}", k);
                instrs.push(Instr {
                    dest: both.clone(),
                    op: Op::Bin {
                        op: crate::mir::BinOp::And,
                        lhs: Operand::Reg(prev),
                        rhs: Operand::Reg(eq),
                    },
                });
                both
            }
        });
    }
    let wrapper = Function {
        name: target.to_string(),
        params,
        ret: reference.ret,
        dialect: DialectTag::Raw,
        blocks: vec![
            Block {
                label: "entry".into(),
                params: vec![],
                instrs,
                term: Terminator::CondBr {
                    cond: Operand::Reg(agree.expect("n >= 2")),
                    on_true: BranchTarget {
                        label: "agree".into(),
                        args: vec![],
                    },
                    on_false: BranchTarget {
                        label: "diverge".into(),
                        args: vec![],
                    },
                },
            },
            Block {
                label: "agree".into(),
                params: vec![],
                instrs: vec![],
                term: Terminator::Ret(Operand::Reg("r1".into())),
            },
            Block {
                label: "diverge".into(),
                params: vec![],
                instrs: vec![],
                term: Terminator::Trap,
            },
        ],
    };
    let diags = validate_function_mode(&wrapper, ParseMode::Bundle);
    if !diags.is_empty() {
        return Err(HarnessError::BadWrapper(diags[0].to_string()));
    }
    Ok(wrapper)
}

/// A bundle compiled to bytecode, one unit per version.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoweredBundle {
    pub target: String,
    pub params: Vec<MirType>,
    pub ret: MirType,
    pub units: Vec<BytecodeUnit>,
}

/// Compile every version independently. `inject` maps 1-based version
/// indices to the bug injected into that version's compilation.
pub fn lower_bundle(
    bundle: &Bundle,
    level: OptLevel,
    inject: &[(usize, BugId)],
) -> Result<LoweredBundle, HarnessError> {
    let units = bundle
        .versions
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let bug = inject
                .iter()
                .find(|(k, _)| *k == i + 1)
                .map(|(_, b)| *b);
            compile(f, level, bug)
        })
        .collect::<Result<Vec<_>, LoweringError>>()
        .map_err(|e| HarnessError::Lowering(e.to_string()))?;
    Ok(LoweredBundle {
        target: bundle.target.clone(),
        params: bundle.versions[0].params.iter().map(|(_, t)| *t).collect(),
        ret: bundle.versions[0].ret,
        units,
    })
}

/// The driver implementing the wrapper contract: invoke versions in order,
/// pass the first trap through, and compare all returned values against
/// version 1.
pub fn run_nversion(lb: &LoweredBundle, args: &[u64], fuel: u64) -> Result<Outcome, String> {
    let mut results: Vec<Outcome> = Vec::with_capacity(lb.units.len());
    for u in &lb.units {
        let (o, _) = run_bytecode(u, args, fuel, false).map_err(|e| e.to_string())?;
        if let Outcome::Trap(_) = o {
            return Ok(o);
        }
        results.push(o);
    }
    let first = &results[0];
    if results.iter().any(|r| r != first) {
        return Ok(Outcome::Trap(TrapReason::NVersionDivergence));
    }
    Ok(first.clone())
}

/// Signed-argument convenience mirroring `eval_mir`.
pub fn run_nversion_signed(lb: &LoweredBundle, args: &[i64], fuel: u64) -> Result<Outcome, String> {
    let bits: Vec<u64> = args
        .iter()
        .zip(&lb.params)
        .map(|(v, ty)| ty.from_signed(*v))
        .collect();
    run_nversion(lb, &bits, fuel)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleManifest {
    target: String,
    n: usize,
    params: Vec<String>,
    ret: String,
    wrapper: String,
    versions: Vec<String>,
}

/// Persist a bundle as `<dir>/<target>/v<k>.mir`, `wrapper.mir` and
/// `bundle.json`; returns all written paths.
pub fn write_bundle(dir: &Path, bundle: &Bundle) -> std::io::Result<Vec<PathBuf>> {
    use crate::mir::print_mir;
    let bdir = dir.join(&bundle.target);
    std::fs::create_dir_all(&bdir)?;
    let mut paths = Vec::new();
    let mut version_files = Vec::new();
    for (i, v) in bundle.versions.iter().enumerate() {
        let file = format!("v{}.mir", i + 1);
        let path = bdir.join(&file);
        std::fs::write(&path, print_mir(v))?;
        version_files.push(file);
        paths.push(path);
    }
    let wrapper_path = bdir.join("wrapper.mir");
    std::fs::write(&wrapper_path, print_mir(&bundle.wrapper))?;
    paths.push(wrapper_path);
    let manifest = BundleManifest {
        target: bundle.target.clone(),
        n: bundle.n(),
        params: bundle.versions[0]
            .params
            .iter()
            .map(|(_, t)| t.name().to_string())
            .collect(),
        ret: bundle.versions[0].ret.name().to_string(),
        wrapper: "wrapper.mir".into(),
        versions: version_files,
    };
    let manifest_path = bdir.join("bundle.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    paths.push(manifest_path);
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{eval_mir, DEFAULT_FUEL};
    use crate::fixtures;
    use crate::frontends::Dialect;
    use crate::mir::{parse_mir_mode, print_mir};

    fn pair(name: &str) -> (Function, Function) {
        let fx = fixtures::find(name).unwrap();
        (
            fx.lower(Dialect::Cm).unwrap(),
            fx.lower(Dialect::Gm).unwrap(),
        )
    }

    #[test]
    fn normalization_renames_params_and_drops_divcheck() {
        let (_, gm) = pair("remconst");
        let n = normalize_variant(&gm);
        assert_eq!(n.params[0].0, "a0");
        assert!(!print_mir(&n).contains(INTRINSIC_GM_DIVCHECK));
        assert_eq!(n.dialect, DialectTag::Raw);
        for x in [-128i64, -7, 0, 5, 127] {
            assert!(eval_mir(&gm, &[x], DEFAULT_FUEL)
                .unwrap()
                .agrees_with(&eval_mir(&n, &[x], DEFAULT_FUEL).unwrap()));
        }
    }

    #[test]
    fn normalization_is_idempotent() {
        for name in ["nz", "avg8", "remconst"] {
            let (cm, gm) = pair(name);
            for f in [cm, gm] {
                let once = normalize_variant(&f);
                let twice = normalize_variant(&once);
                assert_eq!(print_mir(&once), print_mir(&twice), "{}", name);
            }
        }
    }

    #[test]
    fn bundle_names_versions_and_wrapper() {
        let (cm, gm) = pair("max8");
        let b = assemble_nversion(&cm, &[gm]).unwrap();
        assert_eq!(b.n(), 2);
        assert_eq!(b.versions[0].name, "max8__v1");
        assert_eq!(b.versions[1].name, "max8__v2");
        assert_eq!(b.wrapper.name, "max8");
        let text = print_mir(&b.wrapper);
        assert!(text.contains("callv 1"));
        assert!(text.contains("callv 2"));
        // The printed wrapper round-trips under bundle-mode parsing.
        let reparsed = parse_mir_mode(&text, ParseMode::Bundle).unwrap();
        assert_eq!(print_mir(&reparsed), text);
    }

    #[test]
    fn single_version_bundle_is_rejected() {
        let (cm, _) = pair("nz");
        assert_eq!(
            assemble_nversion(&cm, &[]),
            Err(HarnessError::TooFewVersions(1))
        );
    }

    #[test]
    fn bundle_is_transparent_for_equivalent_versions() {
        let (cm, gm) = pair("avg8");
        let b = assemble_nversion(&cm, &[gm]).unwrap();
        let lb = lower_bundle(&b, OptLevel::O2, &[]).unwrap();
        for a in -128..=127i64 {
            for x in [-128i64, -1, 0, 63, 127] {
                let want = eval_mir(&cm, &[a, x], DEFAULT_FUEL).unwrap();
                let got = run_nversion_signed(&lb, &[a, x], DEFAULT_FUEL).unwrap();
                assert!(want.agrees_with(&got), "({}, {})", a, x);
            }
        }
    }

    #[test]
    fn divergence_is_a_fail_stop_trap() {
        let (cm, _) = pair("mul3");
        let b = assemble_nversion(&cm, &[cm.clone()]).unwrap();
        // Version 2 is compiled by the buggy optimizer; any x with
        // 3x != 2x (i.e. x != 0) must trap instead of returning either value.
        let lb = lower_bundle(&b, OptLevel::O2, &[(2, BugId::B2)]).unwrap();
        assert_eq!(
            run_nversion_signed(&lb, &[1], DEFAULT_FUEL).unwrap(),
            Outcome::Trap(TrapReason::NVersionDivergence)
        );
        assert_eq!(
            run_nversion_signed(&lb, &[0], DEFAULT_FUEL).unwrap(),
            eval_mir(&cm, &[0], DEFAULT_FUEL).unwrap()
        );
    }

    #[test]
    fn version_order_does_not_change_outcomes() {
        let (cm, gm) = pair("nz");
        let b1 = assemble_nversion(&cm, &[gm.clone(), cm.clone()]).unwrap();
        let b2 = assemble_nversion(&cm, &[cm.clone(), gm]).unwrap();
        let l1 = lower_bundle(&b1, OptLevel::O1, &[]).unwrap();
        let l2 = lower_bundle(&b2, OptLevel::O1, &[]).unwrap();
        for x in -100..100i64 {
            let a = run_nversion_signed(&l1, &[x], DEFAULT_FUEL).unwrap();
            let b = run_nversion_signed(&l2, &[x], DEFAULT_FUEL).unwrap();
            assert!(a.agrees_with(&b), "x={}", x);
        }
    }

    #[test]
    fn version_trap_passes_through() {
        // A version that traps (division) propagates its trap rather than
        // being outvoted — N-of-N, not majority.
        let trap_src = "\
func @t(%x: i8) -> i8 {
entry:
  %q = sdiv const.i8 1, %x
  ret %q
}
";
        let mut f = crate::mir::parse_mir(trap_src).unwrap();
        f.name = "t".into();
        let b = assemble_nversion(&f, &[f.clone()]).unwrap();
        let lb = lower_bundle(&b, OptLevel::O0, &[]).unwrap();
        assert!(matches!(
            run_nversion_signed(&lb, &[0], DEFAULT_FUEL).unwrap(),
            Outcome::Trap(_)
        ));
    }

    #[test]
    fn write_bundle_lays_out_the_directory() {
        let (cm, gm) = pair("nz");
        let b = assemble_nversion(&cm, &[gm]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_bundle(dir.path(), &b).unwrap();
        let names: Vec<String> = paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["v1.mir", "v2.mir", "wrapper.mir", "bundle.json"]);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&paths[3]).unwrap()).unwrap();
        assert_eq!(manifest["target"], "nz");
        assert_eq!(manifest["n"], 2);
    }
}
