// SPDX-License-Identifier: Apache-2.0

//! The middle-end and back-end: optimization passes at levels 0-3, lowering
//! to stack-machine bytecode, canonical hashing of compiled units, and the
//! three injectable miscompilation bugs.
//!
//! The buggy passes are silent by design: with a bug injected, compilation
//! still reports success and emits no diagnostics. Their misbehavior is only
//! observable by running the produced code.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::eval_bin;
use crate::mir::{
    BinOp, BranchTarget, CastKind, CmpPred, Function, MirType, Op, Operand, Terminator,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OptLevel(u8);

impl OptLevel {
    pub const O0: OptLevel = OptLevel(0);
    pub const O1: OptLevel = OptLevel(1);
    pub const O2: OptLevel = OptLevel(2);
    pub const O3: OptLevel = OptLevel(3);

    pub fn new(level: u8) -> Option<OptLevel> {
        (level <= 3).then_some(OptLevel(level))
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn all() -> [OptLevel; 4] {
        [Self::O0, Self::O1, Self::O2, Self::O3]
    }
}

/// The deliberately buggy passes. Each is off by default and activates only
/// at its documented optimization level.
///
/// - `B1` (level >= 1): constant folding of `sdiv`/`srem` with a negative
///   left operand rounds toward negative infinity instead of toward zero.
/// - `B2` (level >= 2): strength reduction erroneously rewrites
///   multiplication by 3 as a shift left by 1.
/// - `B3` (level 3): branch folding treats any `condbr` whose condition is
///   an `icmp` fed by a `trunc` as always false and deletes the true edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BugId {
    B1,
    B2,
    B3,
}

impl BugId {
    pub fn name(self) -> &'static str {
        match self {
            BugId::B1 => "B1",
            BugId::B2 => "B2",
            BugId::B3 => "B3",
        }
    }

    pub fn from_name(s: &str) -> Option<BugId> {
        match s {
            "B1" | "b1" => Some(BugId::B1),
            "B2" | "b2" => Some(BugId::B2),
            "B3" | "b3" => Some(BugId::B3),
            _ => None,
        }
    }

    pub fn activation_level(self) -> OptLevel {
        match self {
            BugId::B1 => OptLevel::O1,
            BugId::B2 => OptLevel::O2,
            BugId::B3 => OptLevel::O3,
        }
    }
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Run the pass pipeline for `level` over a validated function. Passes are
/// total; the output is again validated MIR. Without injection the output is
/// outcome-equivalent to the input.
pub fn optimize(f: &Function, level: OptLevel, inject: Option<BugId>) -> Function {
    let mut f = f.clone();
    let k = level.level();
    // Two sweeps of the fixed pass sequence; enough for the cascades the
    // test corpus exhibits while staying deterministic.
    for _ in 0..2 {
        if k >= 1 {
            constant_fold(&mut f, inject == Some(BugId::B1));
            algebraic_simplify(&mut f);
            dead_instruction_elim(&mut f);
        }
        if k >= 2 {
            instruction_combine(&mut f, inject == Some(BugId::B2));
            branch_fold(&mut f, k >= 3 && inject == Some(BugId::B3));
        }
        if k >= 3 {
            strength_reduce(&mut f);
            unreachable_block_elim(&mut f);
            merge_blocks(&mut f);
            dead_instruction_elim(&mut f);
        }
    }
    f
}

fn subst_uses(f: &mut Function, map: &HashMap<String, Operand>) {
    if map.is_empty() {
        return;
    }
    let fix = |o: &mut Operand| {
        // Chains can appear within one pass sweep.
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

/// Constant propagation and folding. With `floor_div_bug` set, folding of
/// signed division/remainder with a negative dividend uses floor rounding
/// (the B1 miscompilation).
fn constant_fold(f: &mut Function, floor_div_bug: bool) {
    let mut consts: HashMap<String, (MirType, u64)> = HashMap::new();
    let mut replace: HashMap<String, Operand> = HashMap::new();
    for b in &mut f.blocks {
        for i in &mut b.instrs {
            for o in i.op.operands_mut() {
                if let Operand::Reg(r) = o {
                    if let Some(&(ty, bits)) = consts.get(r.as_str()) {
                        *o = Operand::Const { ty, bits };
                    }
                }
            }
            let folded: Option<(MirType, u64)> = match &i.op {
                Op::Const { ty, bits } => Some((*ty, *bits)),
                Op::Bin { op, lhs, rhs } => match (lhs.as_const(), rhs.as_const()) {
                    (Some((ty, a)), Some((_, bv))) => {
                        fold_bin(*op, ty, a, bv, floor_div_bug).map(|r| (ty, r))
                    }
                    _ => None,
                },
                Op::Icmp { pred, lhs, rhs } => match (lhs.as_const(), rhs.as_const()) {
                    (Some((ty, a)), Some((_, bv))) => {
                        Some((MirType::I1, pred.eval(ty, a, bv) as u64))
                    }
                    _ => None,
                },
                Op::Select {
                    cond,
                    on_true,
                    on_false,
                } => cond.as_const().and_then(|(_, c)| {
                    let chosen = if c != 0 { on_true } else { on_false };
                    chosen.as_const()
                }),
                Op::Cast { kind, to, value } => value
                    .as_const()
                    .map(|(from, v)| (*to, crate::exec::eval_cast(*kind, from, *to, v))),
                Op::Intrinsic { args, .. } => {
                    // divcheck of a known nonzero constant is the identity.
                    match args[0].as_const() {
                        Some((ty, v)) if v != 0 => Some((ty, v)),
                        _ => None,
                    }
                }
                Op::Callv(_) => None,
            };
            if let Some((ty, bits)) = folded {
                consts.insert(i.dest.clone(), (ty, bits));
                i.op = Op::Const { ty, bits };
            }
            // Select with a constant condition but non-constant arms still
            // collapses to the chosen operand.
            if let Op::Select {
                cond,
                on_true,
                on_false,
            } = &i.op
            {
                if let Some((_, c)) = cond.as_const() {
                    let chosen = if c != 0 { on_true } else { on_false };
                    replace.insert(i.dest.clone(), chosen.clone());
                }
            }
        }
        // Propagate constants into terminators too.
        let fix = |o: &mut Operand| {
            if let Operand::Reg(r) = o {
                if let Some(&(ty, bits)) = consts.get(r.as_str()) {
                    *o = Operand::Const { ty, bits };
                }
            }
        };
        match &mut b.term {
            Terminator::Ret(v) => fix(v),
            Terminator::Trap => {}
            Terminator::Br(t) => t.args.iter_mut().for_each(fix),
            Terminator::CondBr {
                cond,
                on_true,
                on_false,
            } => {
                fix(cond);
                on_true.args.iter_mut().for_each(fix);
                on_false.args.iter_mut().for_each(fix);
            }
        }
    }
    subst_uses(f, &replace);
}

fn fold_bin(op: BinOp, ty: MirType, a: u64, b: u64, floor_div_bug: bool) -> Option<u64> {
    if floor_div_bug && matches!(op, BinOp::Sdiv | BinOp::Srem) {
        let (sa, sb) = (ty.to_signed(a), ty.to_signed(b));
        if sb != 0 && !(sa == ty.min_signed() && sb == -1) && sa < 0 {
            // Rounds toward negative infinity instead of toward zero.
            let q = sa.div_euclid(sb);
            let r = sa - q * sb;
            return Some(match op {
                BinOp::Sdiv => ty.from_signed(q),
                _ => ty.from_signed(r),
            });
        }
    }
    match eval_bin(op, ty, a, b) {
        Ok(v) => Some(v),
        Err(_) => None, // leave trapping computations to trap at runtime
    }
}

/// x+0, x*1, x|0, x&-1, x^0 (and mirrored forms) collapse to x.
fn algebraic_simplify(f: &mut Function) {
    let mut replace: HashMap<String, Operand> = HashMap::new();
    for b in &f.blocks {
        for i in &b.instrs {
            if let Op::Bin { op, lhs, rhs } = &i.op {
                let ident = |v: u64, ty: MirType| -> bool {
                    match op {
                        BinOp::Add | BinOp::Or | BinOp::Xor => v == 0,
                        BinOp::Mul => v == 1,
                        BinOp::And => v == ty.mask(),
                        _ => false,
                    }
                };
                let mut target: Option<&Operand> = None;
                if let Some((ty, v)) = rhs.as_const() {
                    if ident(v, ty)
                        || (*op == BinOp::Sub && v == 0)
                        || (matches!(op, BinOp::Shl | BinOp::Lshr | BinOp::Ashr) && v == 0)
                    {
                        target = Some(lhs);
                    }
                }
                if target.is_none() && op.is_commutative() {
                    if let Some((ty, v)) = lhs.as_const() {
                        if ident(v, ty) {
                            target = Some(rhs);
                        }
                    }
                }
                if let Some(t) = target {
                    replace.insert(i.dest.clone(), t.clone());
                }
            }
        }
    }
    if !replace.is_empty() {
        subst_uses(f, &replace);
        let dead: HashSet<&String> = replace.keys().collect();
        for b in &mut f.blocks {
            b.instrs.retain(|i| !dead.contains(&i.dest));
        }
    }
}

fn dead_instruction_elim(f: &mut Function) {
    loop {
        let mut used: HashSet<String> = HashSet::new();
        for b in &f.blocks {
            for i in &b.instrs {
                for o in i.op.operands() {
                    if let Some(r) = o.as_reg() {
                        used.insert(r.to_string());
                    }
                }
            }
            for o in b.term.operands() {
                if let Some(r) = o.as_reg() {
                    used.insert(r.to_string());
                }
            }
        }
        let mut removed = false;
        for b in &mut f.blocks {
            let before = b.instrs.len();
            b.instrs
                .retain(|i| used.contains(&i.dest) || i.op.may_trap());
            removed |= b.instrs.len() != before;
        }
        if !removed {
            break;
        }
    }
}

/// Level-2 combining: double negation, select-of-constants to arithmetic,
/// double xor with the same constant. With `mul3_bug` set, also performs the
/// B2 miscompilation (mul-by-3 rewritten to shift-left-by-1).
fn instruction_combine(f: &mut Function, mul3_bug: bool) {
    // def map for single-use pattern matching
    let defs: HashMap<String, Op> = f
        .blocks
        .iter()
        .flat_map(|b| b.instrs.iter().map(|i| (i.dest.clone(), i.op.clone())))
        .collect();
    let mut replace: HashMap<String, Operand> = HashMap::new();
    for b in &mut f.blocks {
        for i in &mut b.instrs {
            match &i.op {
                Op::Bin { op: BinOp::Sub, lhs, rhs } if lhs.as_const().map(|(_, v)| v) == Some(0) => {
                    // -(-x) => x
                    if let Some(inner) = rhs.as_reg().and_then(|r| defs.get(r)) {
                        if let Op::Bin {
                            op: BinOp::Sub,
                            lhs: il,
                            rhs: ir,
                        } = inner
                        {
                            if il.as_const().map(|(_, v)| v) == Some(0) {
                                replace.insert(i.dest.clone(), ir.clone());
                            }
                        }
                    }
                }
                Op::Bin { op: BinOp::Xor, lhs, rhs } => {
                    // (x ^ c) ^ c => x
                    if let (Some(r), Some((_, c))) = (lhs.as_reg(), rhs.as_const()) {
                        if let Some(Op::Bin {
                            op: BinOp::Xor,
                            lhs: il,
                            rhs: ir,
                        }) = defs.get(r)
                        {
                            if ir.as_const().map(|(_, v)| v) == Some(c) {
                                replace.insert(i.dest.clone(), il.clone());
                            }
                        }
                    }
                }
                Op::Select {
                    cond,
                    on_true,
                    on_false,
                } => {
                    // select c, 1, 0 => zext(c); select c, 0, 1 => zext(c ^ 1)
                    if let (Some((ty, tv)), Some((_, fv))) =
                        (on_true.as_const(), on_false.as_const())
                    {
                        if tv == 1 && fv == 0 {
                            i.op = if ty == MirType::I1 {
                                Op::Bin {
                                    op: BinOp::Or,
                                    lhs: cond.clone(),
                                    rhs: Operand::imm(MirType::I1, 0),
                                }
                            } else {
                                Op::Cast {
                                    kind: CastKind::Zext,
                                    to: ty,
                                    value: cond.clone(),
                                }
                            };
                        }
                    }
                }
                _ => {}
            }
            if mul3_bug {
                if let Op::Bin {
                    op: BinOp::Mul,
                    lhs,
                    rhs,
                } = &i.op
                {
                    let three_rhs = rhs.as_const().map(|(_, v)| v) == Some(3);
                    let three_lhs = lhs.as_const().map(|(_, v)| v) == Some(3);
                    if three_rhs || three_lhs {
                        let value = if three_rhs { lhs.clone() } else { rhs.clone() };
                        let ty = match &value {
                            Operand::Const { ty, .. } => *ty,
                            Operand::Reg(_) => match rhs.as_const().or(lhs.as_const()) {
                                Some((ty, _)) => ty,
                                None => continue,
                            },
                        };
                        i.op = Op::Bin {
                            op: BinOp::Shl,
                            lhs: value,
                            rhs: Operand::imm(ty, 1),
                        };
                    }
                }
            }
        }
    }
    subst_uses(f, &replace);
}

/// Fold conditional branches on constants (and on provably-equal targets).
/// With `trunc_bug` set, any condbr whose condition comes from an icmp fed
/// by a trunc is treated as always false (the B3 miscompilation).
fn branch_fold(f: &mut Function, trunc_bug: bool) {
    let defs: HashMap<String, Op> = f
        .blocks
        .iter()
        .flat_map(|b| b.instrs.iter().map(|i| (i.dest.clone(), i.op.clone())))
        .collect();
    for b in &mut f.blocks {
        let new_term = match &b.term {
            Terminator::CondBr {
                cond,
                on_true,
                on_false,
            } => {
                if let Some((_, c)) = cond.as_const() {
                    Some(Terminator::Br(if c != 0 {
                        on_true.clone()
                    } else {
                        on_false.clone()
                    }))
                } else if on_true == on_false {
                    Some(Terminator::Br(on_true.clone()))
                } else if trunc_bug && cond_fed_by_trunc(cond, &defs) {
                    Some(Terminator::Br(on_false.clone()))
                } else {
                    None
                }
            }
            _ => None,
        };
        if let Some(t) = new_term {
            b.term = t;
        }
    }
}

fn cond_fed_by_trunc(cond: &Operand, defs: &HashMap<String, Op>) -> bool {
    let Some(Op::Icmp { lhs, rhs, .. }) = cond.as_reg().and_then(|r| defs.get(r)) else {
        return false;
    };
    [lhs, rhs].iter().any(|o| {
        matches!(
            o.as_reg().and_then(|r| defs.get(r)),
            Some(Op::Cast {
                kind: CastKind::Trunc,
                ..
            })
        )
    })
}

/// mul by a power of two becomes a shift.
fn strength_reduce(f: &mut Function) {
    for b in &mut f.blocks {
        for i in &mut b.instrs {
            if let Op::Bin {
                op: BinOp::Mul,
                lhs,
                rhs,
            } = &i.op
            {
                let pick = |c: &Operand, other: &Operand| -> Option<(Operand, MirType, u32)> {
                    let (ty, v) = c.as_const()?;
                    if v.is_power_of_two() && v > 1 && (v.trailing_zeros() as u64) < ty.width() as u64
                    {
                        Some((other.clone(), ty, v.trailing_zeros()))
                    } else {
                        None
                    }
                };
                if let Some((value, ty, k)) = pick(rhs, lhs).or_else(|| pick(lhs, rhs)) {
                    i.op = Op::Bin {
                        op: BinOp::Shl,
                        lhs: value,
                        rhs: Operand::imm(ty, k as i64),
                    };
                }
            }
        }
    }
}

fn unreachable_block_elim(f: &mut Function) {
    let mut reachable: HashSet<String> = HashSet::new();
    let mut stack = vec![f.blocks[0].label.clone()];
    while let Some(l) = stack.pop() {
        if !reachable.insert(l.clone()) {
            continue;
        }
        if let Some(b) = f.block(&l) {
            for t in b.term.targets() {
                stack.push(t.label.clone());
            }
        }
    }
    f.blocks.retain(|b| reachable.contains(&b.label));
}

/// Inline single-predecessor blocks reached by an unconditional branch.
fn merge_blocks(f: &mut Function) {
    loop {
        // Count predecessors.
        let mut pred_count: HashMap<String, usize> = HashMap::new();
        for b in &f.blocks {
            for t in b.term.targets() {
                *pred_count.entry(t.label.clone()).or_insert(0) += 1;
            }
        }
        let mut merged = false;
        for bi in 0..f.blocks.len() {
            let target = match &f.blocks[bi].term {
                Terminator::Br(t)
                    if pred_count.get(&t.label) == Some(&1)
                        && f.block_index(&t.label) != Some(bi)
                        && f.block_index(&t.label) != Some(0) =>
                {
                    t.clone()
                }
                _ => continue,
            };
            let ti = f.block_index(&target.label).expect("target exists");
            let tb = f.blocks.remove(ti);
            let bi = if ti < bi { bi - 1 } else { bi };
            // Block params become direct substitutions of the branch args.
            let map: HashMap<String, Operand> = tb
                .params
                .iter()
                .map(|(p, _)| p.clone())
                .zip(target.args.iter().cloned())
                .collect();
            let mut instrs = tb.instrs;
            let mut term = tb.term;
            let fix = |o: &mut Operand| {
                if let Operand::Reg(r) = o {
                    if let Some(rep) = map.get(r.as_str()) {
                        *o = rep.clone();
                    }
                }
            };
            for i in &mut instrs {
                for o in i.op.operands_mut() {
                    fix(o);
                }
            }
            match &mut term {
                Terminator::Ret(v) => fix(v),
                Terminator::Trap => {}
                Terminator::Br(t) => t.args.iter_mut().for_each(fix),
                Terminator::CondBr {
                    cond,
                    on_true,
                    on_false,
                } => {
                    fix(cond);
                    on_true.args.iter_mut().for_each(fix);
                    on_false.args.iter_mut().for_each(fix);
                }
            }
            let b = &mut f.blocks[bi];
            b.instrs.extend(instrs);
            b.term = term;
            merged = true;
            break;
        }
        if !merged {
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// Bytecode
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BcOp {
    Push { ty: MirType, bits: u64 },
    LdLoc(u32),
    StLoc(u32),
    Bin { op: BinOp, ty: MirType },
    Cmp { pred: CmpPred, ty: MirType },
    Sel,
    Cast { kind: CastKind, from: MirType, to: MirType },
    Jmp(u32),
    Jz(u32),
    Ret,
    Trap,
}

impl BcOp {
    /// Mnemonic used for tracing and profiles: opcode name plus width
    /// suffixes, without operands.
    pub fn mnemonic(&self) -> String {
        match self {
            BcOp::Push { ty, .. } => format!("push.{}", ty.width()),
            BcOp::LdLoc(_) => "ldloc".into(),
            BcOp::StLoc(_) => "stloc".into(),
            BcOp::Bin { op, ty } => format!("{}.{}", op.name(), ty.width()),
            BcOp::Cmp { pred, ty } => format!("cmp.{}.{}", pred.name(), ty.width()),
            BcOp::Sel => "sel".into(),
            BcOp::Cast { kind, from, to } => {
                format!("{}.{}.{}", kind.name(), from.width(), to.width())
            }
            BcOp::Jmp(_) => "jmp".into(),
            BcOp::Jz(_) => "jz".into(),
            BcOp::Ret => "ret".into(),
            BcOp::Trap => "trap".into(),
        }
    }

    fn render(&self, slot_map: Option<&HashMap<u32, u32>>) -> String {
        let slot = |n: &u32| -> u32 {
            match slot_map {
                Some(m) => m[n],
                None => *n,
            }
        };
        match self {
            BcOp::Push { ty, bits } => format!("push.{} {}", ty.width(), ty.to_signed(*bits)),
            BcOp::LdLoc(n) => format!("ldloc {}", slot(n)),
            BcOp::StLoc(n) => format!("stloc {}", slot(n)),
            BcOp::Jmp(t) => format!("jmp {}", t),
            BcOp::Jz(t) => format!("jz {}", t),
            other => other.mnemonic(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BytecodeUnit {
    pub name: String,
    pub params: Vec<MirType>,
    pub ret: MirType,
    pub nlocals: u32,
    pub ops: Vec<BcOp>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LoweringError {
    #[error("internal lowering invariant breached: {0}")]
    Internal(String),
}

/// Lower a validated function to a statically verified bytecode unit.
pub fn lower_to_bytecode(f: &Function) -> Result<BytecodeUnit, LoweringError> {
    let rtypes = f.reg_types();
    let operand_ty = |o: &Operand| -> Result<MirType, LoweringError> {
        match o {
            Operand::Const { ty, .. } => Ok(*ty),
            Operand::Reg(r) => rtypes
                .get(r.as_str())
                .copied()
                .ok_or_else(|| LoweringError::Internal(format!("untyped %{}", r))),
        }
    };
    let mut slots: HashMap<&str, u32> = HashMap::new();
    for (i, (p, _)) in f.params.iter().enumerate() {
        slots.insert(p, i as u32);
    }
    let mut next = f.params.len() as u32;
    for b in &f.blocks {
        for (p, _) in &b.params {
            slots.entry(p).or_insert_with(|| {
                let s = next;
                next += 1;
                s
            });
        }
        for i in &b.instrs {
            slots.entry(&i.dest).or_insert_with(|| {
                let s = next;
                next += 1;
                s
            });
        }
    }

    let mut ops: Vec<BcOp> = vec![];
    let mut block_starts: HashMap<&str, u32> = HashMap::new();
    // (op index, label) pairs to patch once all block offsets are known.
    let mut patches: Vec<(usize, String)> = vec![];
    let mut need_trap_island = false;

    let push_operand = |o: &Operand, ops: &mut Vec<BcOp>| -> Result<(), LoweringError> {
        match o {
            Operand::Reg(r) => {
                let s = *slots
                    .get(r.as_str())
                    .ok_or_else(|| LoweringError::Internal(format!("no slot for %{}", r)))?;
                ops.push(BcOp::LdLoc(s));
            }
            Operand::Const { ty, bits } => ops.push(BcOp::Push {
                ty: *ty,
                bits: *bits,
            }),
        }
        Ok(())
    };

    // Parallel-move into a target block's parameter slots: push all argument
    // values first, then store in reverse.
    let emit_moves = |t: &BranchTarget, ops: &mut Vec<BcOp>| -> Result<(), LoweringError> {
        let target = f
            .block(&t.label)
            .ok_or_else(|| LoweringError::Internal(format!("unknown label {}", t.label)))?;
        for a in &t.args {
            push_operand(a, ops)?;
        }
        for (p, _) in target.params.iter().rev() {
            ops.push(BcOp::StLoc(slots[p.as_str()]));
        }
        Ok(())
    };

    for b in &f.blocks {
        block_starts.insert(&b.label, ops.len() as u32);
        for i in &b.instrs {
            let dest = slots[i.dest.as_str()];
            match &i.op {
                Op::Const { ty, bits } => {
                    ops.push(BcOp::Push {
                        ty: *ty,
                        bits: *bits,
                    });
                    ops.push(BcOp::StLoc(dest));
                }
                Op::Bin { op, lhs, rhs } => {
                    let ty = operand_ty(lhs)?;
                    push_operand(lhs, &mut ops)?;
                    push_operand(rhs, &mut ops)?;
                    ops.push(BcOp::Bin { op: *op, ty });
                    ops.push(BcOp::StLoc(dest));
                }
                Op::Icmp { pred, lhs, rhs } => {
                    let ty = operand_ty(lhs)?;
                    push_operand(lhs, &mut ops)?;
                    push_operand(rhs, &mut ops)?;
                    ops.push(BcOp::Cmp { pred: *pred, ty });
                    ops.push(BcOp::StLoc(dest));
                }
                Op::Select {
                    cond,
                    on_true,
                    on_false,
                } => {
                    push_operand(on_true, &mut ops)?;
                    push_operand(on_false, &mut ops)?;
                    push_operand(cond, &mut ops)?;
                    ops.push(BcOp::Sel);
                    ops.push(BcOp::StLoc(dest));
                }
                Op::Cast { kind, to, value } => {
                    let from = operand_ty(value)?;
                    push_operand(value, &mut ops)?;
                    ops.push(BcOp::Cast {
                        kind: *kind,
                        from,
                        to: *to,
                    });
                    ops.push(BcOp::StLoc(dest));
                }
                Op::Intrinsic { args, .. } => {
                    // gm.divcheck: trap if zero, else pass through.
                    need_trap_island = true;
                    push_operand(&args[0], &mut ops)?;
                    patches.push((ops.len(), "__trap".into()));
                    ops.push(BcOp::Jz(0));
                    push_operand(&args[0], &mut ops)?;
                    ops.push(BcOp::StLoc(dest));
                }
                Op::Callv(_) => {
                    return Err(LoweringError::Internal(
                        "callv has no direct bytecode form; bundles lower per version".into(),
                    ))
                }
            }
        }
        match &b.term {
            Terminator::Ret(v) => {
                push_operand(v, &mut ops)?;
                ops.push(BcOp::Ret);
            }
            Terminator::Trap => ops.push(BcOp::Trap),
            Terminator::Br(t) => {
                emit_moves(t, &mut ops)?;
                patches.push((ops.len(), t.label.clone()));
                ops.push(BcOp::Jmp(0));
            }
            Terminator::CondBr {
                cond,
                on_true,
                on_false,
            } => {
                push_operand(cond, &mut ops)?;
                let jz_at = ops.len();
                ops.push(BcOp::Jz(0));
                emit_moves(on_true, &mut ops)?;
                patches.push((ops.len(), on_true.label.clone()));
                ops.push(BcOp::Jmp(0));
                let else_at = ops.len() as u32;
                ops[jz_at] = BcOp::Jz(else_at);
                emit_moves(on_false, &mut ops)?;
                patches.push((ops.len(), on_false.label.clone()));
                ops.push(BcOp::Jmp(0));
            }
        }
    }
    if need_trap_island {
        block_starts.insert("__trap", ops.len() as u32);
        ops.push(BcOp::Trap);
    }
    for (at, label) in patches {
        let target = *block_starts
            .get(label.as_str())
            .ok_or_else(|| LoweringError::Internal(format!("unpatched label {}", label)))?;
        ops[at] = match ops[at] {
            BcOp::Jmp(_) => BcOp::Jmp(target),
            BcOp::Jz(_) => BcOp::Jz(target),
            _ => return Err(LoweringError::Internal("bad patch site".into())),
        };
    }

    let unit = BytecodeUnit {
        name: f.name.clone(),
        params: f.params.iter().map(|(_, t)| *t).collect(),
        ret: f.ret,
        nlocals: next,
        ops,
    };
    verify_stack_balance(&unit).map_err(LoweringError::Internal)?;
    Ok(unit)
}

/// Static verification: jump targets in range, no stack underflow, a
/// consistent depth at every merge point, and depth 1 at every `ret`.
pub fn verify_stack_balance(u: &BytecodeUnit) -> Result<(), String> {
    let n = u.ops.len();
    let mut depth_at: Vec<Option<i32>> = vec![None; n];
    let mut work = vec![(0usize, 0i32)];
    while let Some((pc, depth)) = work.pop() {
        if pc >= n {
            return Err(format!("pc {} out of range", pc));
        }
        match depth_at[pc] {
            Some(d) if d == depth => continue,
            Some(d) => {
                return Err(format!(
                    "inconsistent stack depth at {}: {} vs {}",
                    pc, d, depth
                ))
            }
            None => depth_at[pc] = Some(depth),
        }
        let op = &u.ops[pc];
        let (pops, pushes) = match op {
            BcOp::Push { .. } | BcOp::LdLoc(_) => (0, 1),
            BcOp::StLoc(_) => (1, 0),
            BcOp::Bin { .. } | BcOp::Cmp { .. } => (2, 1),
            BcOp::Sel => (3, 1),
            BcOp::Cast { .. } => (1, 1),
            BcOp::Jmp(_) => (0, 0),
            BcOp::Jz(_) => (1, 0),
            BcOp::Ret => (1, 0),
            BcOp::Trap => (0, 0),
        };
        if depth < pops {
            return Err(format!("stack underflow at {}", pc));
        }
        let next_depth = depth - pops + pushes;
        match op {
            BcOp::Jmp(t) => work.push((*t as usize, next_depth)),
            BcOp::Jz(t) => {
                work.push((*t as usize, next_depth));
                work.push((pc + 1, next_depth));
            }
            BcOp::Ret => {
                if next_depth != 0 {
                    return Err(format!("ret at {} leaves stack depth {}", pc, next_depth));
                }
            }
            BcOp::Trap => {}
            _ => work.push((pc + 1, next_depth)),
        }
    }
    Ok(())
}

/// Disassembly: one opcode per line, `#` comments in the header.
pub fn disassemble(u: &BytecodeUnit) -> String {
    let mut s = format!(
        "# func {} ({}) -> {}\n",
        u.name,
        u.params
            .iter()
            .map(|t| t.name().to_string())
            .collect::<Vec<_>>()
            .join(", "),
        u.ret.name()
    );
    for op in &u.ops {
        s.push_str(&op.render(None));
        s.push('\n');
    }
    s
}

/// Canonical disassembly used for hashing: local slots renumbered in
/// first-use order, no header, jump targets as instruction indices.
pub fn canonical_disassembly(u: &BytecodeUnit) -> String {
    let mut slot_map: HashMap<u32, u32> = HashMap::new();
    for op in &u.ops {
        if let BcOp::LdLoc(n) | BcOp::StLoc(n) = op {
            let next = slot_map.len() as u32;
            slot_map.entry(*n).or_insert(next);
        }
    }
    let mut s = String::new();
    for op in &u.ops {
        s.push_str(&op.render(Some(&slot_map)));
        s.push('\n');
    }
    s
}

/// SHA-256 (hex) of the canonical disassembly.
pub fn canonical_hash(u: &BytecodeUnit) -> String {
    let mut h = Sha256::new();
    h.update(canonical_disassembly(u).as_bytes());
    let digest = h.finalize();
    digest.iter().map(|b| format!("{:02x}", b)).collect()
}

/// Full compilation: optimize then lower.
pub fn compile(
    f: &Function,
    level: OptLevel,
    inject: Option<BugId>,
) -> Result<BytecodeUnit, LoweringError> {
    lower_to_bytecode(&optimize(f, level, inject))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{eval_mir, Outcome, DEFAULT_FUEL};
    use crate::mir::{parse_mir, print_mir, validate_function};

    fn parse(src: &str) -> Function {
        parse_mir(src).unwrap()
    }

    #[test]
    fn constant_program_is_a_fixed_point() {
        let f = parse("func @k() -> i32 { entry: ret const.i32 7 }");
        for level in OptLevel::all() {
            let g = optimize(&f, level, None);
            assert_eq!(print_mir(&f), print_mir(&g));
        }
    }

    #[test]
    fn add_zero_simplifies_away() {
        let f = parse("func @f(%x: i32) -> i32 { entry: %y = add %x, const.i32 0 ret %y }");
        let g = optimize(&f, OptLevel::O1, None);
        assert_eq!(
            print_mir(&g),
            "func @f(%x: i32) -> i32 {\nentry:\n  ret %x\n}\n"
        );
        for x in [-7i64, 0, 123] {
            assert_eq!(
                eval_mir(&f, &[x], DEFAULT_FUEL).unwrap(),
                eval_mir(&g, &[x], DEFAULT_FUEL).unwrap()
            );
        }
    }

    #[test]
    fn b1_folds_negative_srem_wrong() {
        let f = parse(
            "func @w(%x: i8) -> i8 { entry: %r = srem const.i8 -7, const.i8 3 %y = add %x, %r ret %y }",
        );
        let clean = optimize(&f, OptLevel::O1, None);
        let buggy = optimize(&f, OptLevel::O1, Some(BugId::B1));
        // -7 % 3 == -1 (trunc) but the bug folds to 2 (floor).
        assert_eq!(
            eval_mir(&clean, &[5], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 4)
        );
        assert_eq!(
            eval_mir(&buggy, &[5], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 7)
        );
        // Unoptimized evaluation agrees with the clean fold.
        assert_eq!(
            eval_mir(&f, &[5], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 4)
        );
    }

    #[test]
    fn b2_rewrites_mul_by_three() {
        let f = parse("func @m3(%x: i8) -> i8 { entry: %y = mul %x, const.i8 3 ret %y }");
        let clean = optimize(&f, OptLevel::O2, None);
        let buggy = optimize(&f, OptLevel::O2, Some(BugId::B2));
        assert_eq!(
            eval_mir(&clean, &[1], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 3)
        );
        assert_eq!(
            eval_mir(&buggy, &[1], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 2)
        );
        // B2 is inert below its activation level.
        let at_o1 = optimize(&f, OptLevel::O1, Some(BugId::B2));
        assert_eq!(
            eval_mir(&at_o1, &[1], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 3)
        );
    }

    #[test]
    fn b3_deletes_trunc_guarded_branch() {
        let src = "\
func @w(%x: i16) -> i16 {
entry:
  %lo = trunc.i8 %x
  %c = icmp.ne %lo, const.i8 0
  condbr %c, yes, no
yes:
  ret const.i16 1
no:
  ret const.i16 0
}
";
        let f = parse(src);
        let clean = optimize(&f, OptLevel::O3, None);
        let buggy = optimize(&f, OptLevel::O3, Some(BugId::B3));
        assert_eq!(
            eval_mir(&clean, &[1], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I16, 1)
        );
        assert_eq!(
            eval_mir(&buggy, &[1], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I16, 0)
        );
        // Below level 3 the bug is inert.
        let at_o2 = optimize(&f, OptLevel::O2, Some(BugId::B3));
        assert_eq!(
            eval_mir(&at_o2, &[1], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I16, 1)
        );
    }

    #[test]
    fn optimized_output_stays_valid() {
        let srcs = [
            "func @f(%x: i32) -> i32 { entry: %y = add %x, const.i32 0 %z = mul %y, const.i32 4 ret %z }",
            "func @g(%x: i8) -> i8 { entry: %c = icmp.sgt %x, const.i8 0 condbr %c, a, b a: ret %x b: %n = sub const.i8 0, %x ret %n }",
        ];
        for src in srcs {
            let f = parse(src);
            for level in OptLevel::all() {
                for inject in [None, Some(BugId::B1), Some(BugId::B2), Some(BugId::B3)] {
                    let g = optimize(&f, level, inject);
                    assert!(
                        validate_function(&g).is_empty(),
                        "invalid output for {:?} {:?}: {}",
                        level,
                        inject,
                        print_mir(&g)
                    );
                }
            }
        }
    }

    #[test]
    fn strength_reduction_uses_shift() {
        let f = parse("func @f(%x: i8) -> i8 { entry: %y = mul %x, const.i8 8 ret %y }");
        let g = optimize(&f, OptLevel::O3, None);
        assert!(print_mir(&g).contains("shl"));
        for x in -128..=127i64 {
            assert_eq!(
                eval_mir(&f, &[x], DEFAULT_FUEL).unwrap(),
                eval_mir(&g, &[x], DEFAULT_FUEL).unwrap()
            );
        }
    }

    #[test]
    fn branch_folding_collapses_constant_condition() {
        let src = "\
func @f(%x: i8) -> i8 {
entry:
  %c = icmp.eq const.i8 1, const.i8 1
  condbr %c, a, b
a:
  ret %x
b:
  ret const.i8 0
}
";
        let f = parse(src);
        let g = optimize(&f, OptLevel::O3, None);
        assert!(!print_mir(&g).contains("condbr"));
        assert_eq!(g.blocks.len(), 1);
    }

    #[test]
    fn identity_lowering_shape() {
        let f = parse("func @id(%x: i32) -> i32 { entry: ret %x }");
        let u = lower_to_bytecode(&f).unwrap();
        assert_eq!(u.ops, vec![BcOp::LdLoc(0), BcOp::Ret]);
    }

    #[test]
    fn trapping_div_is_not_dce_d() {
        let f = parse(
            "func @f(%x: i8, %y: i8) -> i8 { entry: %q = sdiv %x, %y ret %x }",
        );
        let g = optimize(&f, OptLevel::O3, None);
        assert!(print_mir(&g).contains("sdiv"));
        assert!(matches!(
            eval_mir(&g, &[1, 0], DEFAULT_FUEL).unwrap(),
            Outcome::Trap(_)
        ));
    }

    #[test]
    fn hash_is_deterministic_and_rename_invariant() {
        let a = parse("func @f(%x: i8) -> i8 { entry: %y = add %x, const.i8 1 ret %y }");
        let b = parse("func @f(%q: i8) -> i8 { entry: %z = add %q, const.i8 1 ret %z }");
        let (ua, ub) = (lower_to_bytecode(&a).unwrap(), lower_to_bytecode(&b).unwrap());
        assert_eq!(canonical_hash(&ua), canonical_hash(&ua));
        assert_eq!(canonical_hash(&ua), canonical_hash(&ub));
        assert_eq!(canonical_hash(&ua).len(), 64);
    }

    #[test]
    fn paired_dialect_lowerings_hash_differently() {
        use crate::frontends::{lower_ast, parse_source, Dialect};
        let fc = lower_ast(
            &parse_source("int16 nz(int16 x) { return (x != 0) ? -1 : 0; }", Dialect::Cm)
                .unwrap(),
            Dialect::Cm,
        )
        .unwrap();
        let fg = lower_ast(
            &parse_source(
                "func nz(x int16) int16 { if x != 0 { return -1 }; return 0 }",
                Dialect::Gm,
            )
            .unwrap(),
            Dialect::Gm,
        )
        .unwrap();
        let (uc, ug) = (lower_to_bytecode(&fc).unwrap(), lower_to_bytecode(&fg).unwrap());
        assert_ne!(canonical_hash(&uc), canonical_hash(&ug));
    }
}
