// SPDX-License-Identifier: Apache-2.0

//! Execution engines and outcomes. The MIR evaluator here is the reference
//! semantics; the bytecode interpreter (with tracing) lives in `vm` and the
//! two are cross-checked against each other.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mir::{
    BinOp, CastKind, Function, MirType, Op, Operand, Terminator, INTRINSIC_GM_DIVCHECK,
};

/// Default per-invocation step budget.
pub const DEFAULT_FUEL: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrapReason {
    DivZero,
    OverflowDiv,
    ShiftRange,
    ExplicitTrap,
    NVersionDivergence,
    FuelExhausted,
}

impl TrapReason {
    pub fn name(self) -> &'static str {
        match self {
            TrapReason::DivZero => "div_zero",
            TrapReason::OverflowDiv => "overflow_div",
            TrapReason::ShiftRange => "shift_range",
            TrapReason::ExplicitTrap => "explicit_trap",
            TrapReason::NVersionDivergence => "nversion_divergence",
            TrapReason::FuelExhausted => "fuel_exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Return { ty: MirType, bits: u64 },
    Trap(TrapReason),
}

impl Outcome {
    pub fn ret(ty: MirType, v: i64) -> Outcome {
        Outcome::Return {
            ty,
            bits: ty.from_signed(v),
        }
    }

    /// Outcome equality as used by the equivalence relation and the N-of-N
    /// wrapper: return values compare bitwise at the return width, any trap
    /// equals any trap, and a return never equals a trap.
    pub fn agrees_with(&self, other: &Outcome) -> bool {
        match (self, other) {
            (Outcome::Return { bits: a, .. }, Outcome::Return { bits: b, .. }) => a == b,
            (Outcome::Trap(_), Outcome::Trap(_)) => true,
            _ => false,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Outcome::Return { ty, bits } => format!("{}", ty.to_signed(*bits)),
            Outcome::Trap(r) => format!("trap({})", r.name()),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("argument mismatch: expected {expected} args, got {got}")]
    ArgMismatch { expected: usize, got: usize },
    #[error("malformed bytecode: {0}")]
    MalformedBytecode(String),
    #[error("ill-formed IR: {0}")]
    IllFormed(String),
}

/// Ordered record of executed opcode mnemonics plus the derived profile.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub opcodes: Vec<String>,
}

impl Trace {
    pub fn profile(&self) -> BTreeMap<String, u64> {
        let mut m = BTreeMap::new();
        for op in &self.opcodes {
            *m.entry(op.clone()).or_insert(0) += 1;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.opcodes.len() as u64
    }
}

// ---------------------------------------------------------------------------
// Resolved MIR evaluator
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Slot {
    Reg(usize),
    Imm(u64),
}

#[derive(Clone, Copy)]
enum RInstrKind {
    Const,
    Bin(BinOp, MirType),
    Icmp(crate::mir::CmpPred, MirType),
    Select,
    Cast(CastKind, MirType, MirType), // kind, from, to
    DivCheck,
}

struct RInstr {
    dest: usize,
    kind: RInstrKind,
    a: Slot,
    b: Slot,
    c: Slot,
}

struct RBlock {
    param_slots: Vec<usize>,
    instrs: Vec<RInstr>,
    term: RTerm,
}

enum RTerm {
    Ret(Slot),
    Trap,
    Br(usize, Vec<Slot>),
    CondBr {
        cond: Slot,
        t: (usize, Vec<Slot>),
        f: (usize, Vec<Slot>),
    },
}

/// Pre-resolved evaluator for a validated function: registers are numbered
/// into a dense slot vector once so repeated evaluation (exhaustive
/// equivalence enumeration) is cheap.
pub struct Evaluator {
    nslots: usize,
    param_slots: Vec<usize>,
    param_types: Vec<MirType>,
    ret: MirType,
    blocks: Vec<RBlock>,
}

impl Evaluator {
    pub fn new(f: &Function) -> Result<Evaluator, ExecError> {
        let types = f.reg_types();
        let mut slots: HashMap<&str, usize> = HashMap::new();
        let mut next = 0usize;
        let mut slot_of = |name: &str, slots: &mut HashMap<&str, usize>| -> usize {
            // Names are unique (SSA), so first sight assigns the slot.
            if let Some(&s) = slots.get(name) {
                return s;
            }
            let s = next;
            next += 1;
            s
        };
        // Two-phase: collect all definition names first.
        let mut order: Vec<&str> = vec![];
        for (p, _) in &f.params {
            order.push(p);
        }
        for b in &f.blocks {
            for (p, _) in &b.params {
                order.push(p);
            }
            for i in &b.instrs {
                order.push(&i.dest);
            }
        }
        for name in order {
            let s = slot_of(name, &mut slots);
            slots.insert(name, s);
        }
        let nslots = slots.len();

        let block_index: HashMap<&str, usize> = f
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.label.as_str(), i))
            .collect();

        let resolve = |o: &Operand| -> Result<Slot, ExecError> {
            match o {
                Operand::Reg(r) => slots
                    .get(r.as_str())
                    .map(|&s| Slot::Reg(s))
                    .ok_or_else(|| ExecError::IllFormed(format!("undefined register %{}", r))),
                Operand::Const { bits, .. } => Ok(Slot::Imm(*bits)),
            }
        };
        let resolve_target = |t: &crate::mir::BranchTarget| -> Result<(usize, Vec<Slot>), ExecError> {
            let bi = *block_index
                .get(t.label.as_str())
                .ok_or_else(|| ExecError::IllFormed(format!("unknown label {}", t.label)))?;
            let args = t.args.iter().map(&resolve).collect::<Result<_, _>>()?;
            Ok((bi, args))
        };

        let opty = |o: &Operand| -> Result<MirType, ExecError> {
            match o {
                Operand::Reg(r) => types
                    .get(r)
                    .copied()
                    .ok_or_else(|| ExecError::IllFormed(format!("untyped register %{}", r))),
                Operand::Const { ty, .. } => Ok(*ty),
            }
        };

        let mut blocks = vec![];
        for b in &f.blocks {
            let mut instrs = vec![];
            for i in &b.instrs {
                let dest = slots[i.dest.as_str()];
                let nil = Slot::Imm(0);
                let r = match &i.op {
                    Op::Const { bits, .. } => RInstr {
                        dest,
                        kind: RInstrKind::Const,
                        a: Slot::Imm(*bits),
                        b: nil,
                        c: nil,
                    },
                    Op::Bin { op, lhs, rhs } => RInstr {
                        dest,
                        kind: RInstrKind::Bin(*op, opty(lhs)?),
                        a: resolve(lhs)?,
                        b: resolve(rhs)?,
                        c: nil,
                    },
                    Op::Icmp { pred, lhs, rhs } => RInstr {
                        dest,
                        kind: RInstrKind::Icmp(*pred, opty(lhs)?),
                        a: resolve(lhs)?,
                        b: resolve(rhs)?,
                        c: nil,
                    },
                    Op::Select {
                        cond,
                        on_true,
                        on_false,
                    } => RInstr {
                        dest,
                        kind: RInstrKind::Select,
                        a: resolve(cond)?,
                        b: resolve(on_true)?,
                        c: resolve(on_false)?,
                    },
                    Op::Cast { kind, to, value } => RInstr {
                        dest,
                        kind: RInstrKind::Cast(*kind, opty(value)?, *to),
                        a: resolve(value)?,
                        b: nil,
                        c: nil,
                    },
                    Op::Intrinsic { name, args } => {
                        if name != INTRINSIC_GM_DIVCHECK || args.len() != 1 {
                            return Err(ExecError::IllFormed(format!(
                                "unsupported intrinsic '{}'",
                                name
                            )));
                        }
                        RInstr {
                            dest,
                            kind: RInstrKind::DivCheck,
                            a: resolve(&args[0])?,
                            b: nil,
                            c: nil,
                        }
                    }
                    Op::Callv(_) => {
                        return Err(ExecError::IllFormed(
                            "callv cannot be evaluated outside a bundle".into(),
                        ))
                    }
                };
                instrs.push(r);
            }
            let term = match &b.term {
                Terminator::Ret(v) => RTerm::Ret(resolve(v)?),
                Terminator::Trap => RTerm::Trap,
                Terminator::Br(t) => {
                    let (bi, args) = resolve_target(t)?;
                    RTerm::Br(bi, args)
                }
                Terminator::CondBr {
                    cond,
                    on_true,
                    on_false,
                } => RTerm::CondBr {
                    cond: resolve(cond)?,
                    t: resolve_target(on_true)?,
                    f: resolve_target(on_false)?,
                },
            };
            blocks.push(RBlock {
                param_slots: b.params.iter().map(|(p, _)| slots[p.as_str()]).collect(),
                instrs,
                term,
            });
        }

        Ok(Evaluator {
            nslots,
            param_slots: f.params.iter().map(|(p, _)| slots[p.as_str()]).collect(),
            param_types: f.params.iter().map(|(_, t)| *t).collect(),
            ret: f.ret,
            blocks,
        })
    }

    pub fn param_types(&self) -> &[MirType] {
        &self.param_types
    }

    pub fn ret_type(&self) -> MirType {
        self.ret
    }

    /// Evaluate with raw argument bit patterns (each already within its
    /// parameter's width).
    pub fn eval_bits(&self, args: &[u64], fuel: u64) -> Result<Outcome, ExecError> {
        if args.len() != self.param_slots.len() {
            return Err(ExecError::ArgMismatch {
                expected: self.param_slots.len(),
                got: args.len(),
            });
        }
        let mut regs = vec![0u64; self.nslots];
        for (&slot, &v) in self.param_slots.iter().zip(args) {
            regs[slot] = v;
        }
        let mut fuel_left = fuel;
        let mut bi = 0usize;
        let mut scratch: Vec<u64> = vec![];
        loop {
            let block = &self.blocks[bi];
            for i in &block.instrs {
                if fuel_left == 0 {
                    return Ok(Outcome::Trap(TrapReason::FuelExhausted));
                }
                fuel_left -= 1;
                let a = self.read(&regs, i.a);
                match i.kind {
                    RInstrKind::Const => regs[i.dest] = a,
                    RInstrKind::Bin(op, ty) => {
                        let b = self.read(&regs, i.b);
                        match eval_bin(op, ty, a, b) {
                            Ok(v) => regs[i.dest] = v,
                            Err(t) => return Ok(Outcome::Trap(t)),
                        }
                    }
                    RInstrKind::Icmp(pred, ty) => {
                        let b = self.read(&regs, i.b);
                        regs[i.dest] = pred.eval(ty, a, b) as u64;
                    }
                    RInstrKind::Select => {
                        let b = self.read(&regs, i.b);
                        let c = self.read(&regs, i.c);
                        regs[i.dest] = if a != 0 { b } else { c };
                    }
                    RInstrKind::Cast(kind, from, to) => {
                        regs[i.dest] = eval_cast(kind, from, to, a);
                    }
                    RInstrKind::DivCheck => {
                        if a == 0 {
                            return Ok(Outcome::Trap(TrapReason::DivZero));
                        }
                        regs[i.dest] = a;
                    }
                }
            }
            if fuel_left == 0 {
                return Ok(Outcome::Trap(TrapReason::FuelExhausted));
            }
            fuel_left -= 1;
            match &block.term {
                RTerm::Ret(s) => {
                    return Ok(Outcome::Return {
                        ty: self.ret,
                        bits: self.read(&regs, *s),
                    })
                }
                RTerm::Trap => return Ok(Outcome::Trap(TrapReason::ExplicitTrap)),
                RTerm::Br(target, args) => {
                    scratch.clear();
                    scratch.extend(args.iter().map(|s| self.read(&regs, *s)));
                    let tb = &self.blocks[*target];
                    for (&slot, &v) in tb.param_slots.iter().zip(&scratch) {
                        regs[slot] = v;
                    }
                    bi = *target;
                }
                RTerm::CondBr { cond, t, f } => {
                    let (target, args) = if self.read(&regs, *cond) != 0 { t } else { f };
                    scratch.clear();
                    scratch.extend(args.iter().map(|s| self.read(&regs, *s)));
                    let tb = &self.blocks[*target];
                    for (&slot, &v) in tb.param_slots.iter().zip(&scratch) {
                        regs[slot] = v;
                    }
                    bi = *target;
                }
            }
        }
    }

    #[inline]
    fn read(&self, regs: &[u64], s: Slot) -> u64 {
        match s {
            Slot::Reg(i) => regs[i],
            Slot::Imm(v) => v,
        }
    }
}

pub fn eval_bin(op: BinOp, ty: MirType, a: u64, b: u64) -> Result<u64, TrapReason> {
    let mask = ty.mask();
    let w = ty.width() as u64;
    Ok(match op {
        BinOp::Add => a.wrapping_add(b) & mask,
        BinOp::Sub => a.wrapping_sub(b) & mask,
        BinOp::Mul => a.wrapping_mul(b) & mask,
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Udiv => {
            if b == 0 {
                return Err(TrapReason::DivZero);
            }
            a / b
        }
        BinOp::Urem => {
            if b == 0 {
                return Err(TrapReason::DivZero);
            }
            a % b
        }
        BinOp::Sdiv | BinOp::Srem => {
            if b == 0 {
                return Err(TrapReason::DivZero);
            }
            let (sa, sb) = (ty.to_signed(a), ty.to_signed(b));
            if sa == ty.min_signed() && sb == -1 {
                return Err(TrapReason::OverflowDiv);
            }
            let r = if op == BinOp::Sdiv { sa / sb } else { sa % sb };
            ty.from_signed(r)
        }
        BinOp::Shl => {
            if b >= w {
                return Err(TrapReason::ShiftRange);
            }
            (a << b) & mask
        }
        BinOp::Lshr => {
            if b >= w {
                return Err(TrapReason::ShiftRange);
            }
            a >> b
        }
        BinOp::Ashr => {
            if b >= w {
                return Err(TrapReason::ShiftRange);
            }
            ty.from_signed(ty.to_signed(a) >> b)
        }
    })
}

pub fn eval_cast(kind: CastKind, from: MirType, to: MirType, v: u64) -> u64 {
    match kind {
        CastKind::Zext => v,
        CastKind::Sext => to.from_signed(from.to_signed(v)),
        CastKind::Trunc => v & to.mask(),
    }
}

/// Reference-semantics evaluation of a validated function.
pub fn eval_mir(f: &Function, args: &[i64], fuel: u64) -> Result<Outcome, ExecError> {
    let ev = Evaluator::new(f)?;
    if args.len() != f.params.len() {
        return Err(ExecError::ArgMismatch {
            expected: f.params.len(),
            got: args.len(),
        });
    }
    let bits: Vec<u64> = f
        .params
        .iter()
        .zip(args)
        .map(|((_, ty), &v)| ty.from_signed(v))
        .collect();
    ev.eval_bits(&bits, fuel)
}
