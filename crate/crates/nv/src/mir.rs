// SPDX-License-Identifier: Apache-2.0

//! The toolchain's intermediate representation: a small, pure, SSA-form IR
//! over fixed-width two's-complement integers, with a textual format, parser,
//! canonical printer, and well-formedness validator.
//!
//! Blocks carry optional typed parameters as the phi substitute; `br` and
//! `condbr` pass arguments to the target block's parameters.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on instructions per function (terminators included).
pub const MAX_INSTRUCTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MirType {
    I1,
    I8,
    I16,
    I32,
    I64,
}

impl MirType {
    pub fn width(self) -> u32 {
        match self {
            MirType::I1 => 1,
            MirType::I8 => 8,
            MirType::I16 => 16,
            MirType::I32 => 32,
            MirType::I64 => 64,
        }
    }

    pub fn mask(self) -> u64 {
        match self.width() {
            64 => u64::MAX,
            w => (1u64 << w) - 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MirType::I1 => "i1",
            MirType::I8 => "i8",
            MirType::I16 => "i16",
            MirType::I32 => "i32",
            MirType::I64 => "i64",
        }
    }

    pub fn from_name(s: &str) -> Option<MirType> {
        match s {
            "i1" => Some(MirType::I1),
            "i8" => Some(MirType::I8),
            "i16" => Some(MirType::I16),
            "i32" => Some(MirType::I32),
            "i64" => Some(MirType::I64),
            _ => None,
        }
    }

    /// Interpret `bits` (already masked to this width) as a signed value.
    pub fn to_signed(self, bits: u64) -> i64 {
        let w = self.width();
        if w == 64 {
            return bits as i64;
        }
        let sign = 1u64 << (w - 1);
        if bits & sign != 0 {
            (bits | !self.mask()) as i64
        } else {
            bits as i64
        }
    }

    /// Truncate a signed value into this width's bit pattern.
    pub fn from_signed(self, v: i64) -> u64 {
        (v as u64) & self.mask()
    }

    pub fn min_signed(self) -> i64 {
        -(1i64 << (self.width() - 1))
    }

    pub fn max_signed(self) -> i64 {
        (1i64 << (self.width() - 1)) - 1
    }
}

impl fmt::Display for MirType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpPred {
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
    Ult,
    Ule,
    Ugt,
    Uge,
}

impl CmpPred {
    pub fn name(self) -> &'static str {
        match self {
            CmpPred::Eq => "eq",
            CmpPred::Ne => "ne",
            CmpPred::Slt => "slt",
            CmpPred::Sle => "sle",
            CmpPred::Sgt => "sgt",
            CmpPred::Sge => "sge",
            CmpPred::Ult => "ult",
            CmpPred::Ule => "ule",
            CmpPred::Ugt => "ugt",
            CmpPred::Uge => "uge",
        }
    }

    pub fn from_name(s: &str) -> Option<CmpPred> {
        Some(match s {
            "eq" => CmpPred::Eq,
            "ne" => CmpPred::Ne,
            "slt" => CmpPred::Slt,
            "sle" => CmpPred::Sle,
            "sgt" => CmpPred::Sgt,
            "sge" => CmpPred::Sge,
            "ult" => CmpPred::Ult,
            "ule" => CmpPred::Ule,
            "ugt" => CmpPred::Ugt,
            "uge" => CmpPred::Uge,
            _ => return None,
        })
    }

    pub fn negate(self) -> CmpPred {
        match self {
            CmpPred::Eq => CmpPred::Ne,
            CmpPred::Ne => CmpPred::Eq,
            CmpPred::Slt => CmpPred::Sge,
            CmpPred::Sle => CmpPred::Sgt,
            CmpPred::Sgt => CmpPred::Sle,
            CmpPred::Sge => CmpPred::Slt,
            CmpPred::Ult => CmpPred::Uge,
            CmpPred::Ule => CmpPred::Ugt,
            CmpPred::Ugt => CmpPred::Ule,
            CmpPred::Uge => CmpPred::Ult,
        }
    }

    pub fn eval(self, ty: MirType, a: u64, b: u64) -> bool {
        let (sa, sb) = (ty.to_signed(a), ty.to_signed(b));
        match self {
            CmpPred::Eq => a == b,
            CmpPred::Ne => a != b,
            CmpPred::Slt => sa < sb,
            CmpPred::Sle => sa <= sb,
            CmpPred::Sgt => sa > sb,
            CmpPred::Sge => sa >= sb,
            CmpPred::Ult => a < b,
            CmpPred::Ule => a <= b,
            CmpPred::Ugt => a > b,
            CmpPred::Uge => a >= b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Sdiv,
    Udiv,
    Srem,
    Urem,
    And,
    Or,
    Xor,
    Shl,
    Lshr,
    Ashr,
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Sdiv => "sdiv",
            BinOp::Udiv => "udiv",
            BinOp::Srem => "srem",
            BinOp::Urem => "urem",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::Lshr => "lshr",
            BinOp::Ashr => "ashr",
        }
    }

    pub fn from_name(s: &str) -> Option<BinOp> {
        Some(match s {
            "add" => BinOp::Add,
            "sub" => BinOp::Sub,
            "mul" => BinOp::Mul,
            "sdiv" => BinOp::Sdiv,
            "udiv" => BinOp::Udiv,
            "srem" => BinOp::Srem,
            "urem" => BinOp::Urem,
            "and" => BinOp::And,
            "or" => BinOp::Or,
            "xor" => BinOp::Xor,
            "shl" => BinOp::Shl,
            "lshr" => BinOp::Lshr,
            "ashr" => BinOp::Ashr,
            _ => return None,
        })
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Mul | BinOp::And | BinOp::Or | BinOp::Xor
        )
    }

    /// True if evaluation can trap for some operand values.
    pub fn may_trap(self) -> bool {
        matches!(
            self,
            BinOp::Sdiv
                | BinOp::Udiv
                | BinOp::Srem
                | BinOp::Urem
                | BinOp::Shl
                | BinOp::Lshr
                | BinOp::Ashr
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CastKind {
    Zext,
    Sext,
    Trunc,
}

impl CastKind {
    pub fn name(self) -> &'static str {
        match self {
            CastKind::Zext => "zext",
            CastKind::Sext => "sext",
            CastKind::Trunc => "trunc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Reg(String),
    Const { ty: MirType, bits: u64 },
}

impl Operand {
    pub fn imm(ty: MirType, v: i64) -> Operand {
        Operand::Const {
            ty,
            bits: ty.from_signed(v),
        }
    }

    pub fn as_reg(&self) -> Option<&str> {
        match self {
            Operand::Reg(r) => Some(r),
            Operand::Const { .. } => None,
        }
    }

    pub fn as_const(&self) -> Option<(MirType, u64)> {
        match self {
            Operand::Const { ty, bits } => Some((*ty, *bits)),
            Operand::Reg(_) => None,
        }
    }
}

/// The registered dialect intrinsics. `gm.divcheck` traps on a zero argument
/// and otherwise passes it through.
pub const INTRINSIC_GM_DIVCHECK: &str = "gm.divcheck";

pub fn registered_intrinsics() -> &'static [&'static str] {
    &[INTRINSIC_GM_DIVCHECK]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Const { ty: MirType, bits: u64 },
    Bin { op: BinOp, lhs: Operand, rhs: Operand },
    Icmp { pred: CmpPred, lhs: Operand, rhs: Operand },
    Select { cond: Operand, on_true: Operand, on_false: Operand },
    Cast { kind: CastKind, to: MirType, value: Operand },
    Intrinsic { name: String, args: Vec<Operand> },
    /// Bundle-only: invoke version `k` of an N-version bundle with the
    /// wrapper's arguments. Rejected by the plain function validator.
    Callv(u32),
}

impl Op {
    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Op::Const { .. } | Op::Callv(_) => vec![],
            Op::Bin { lhs, rhs, .. } | Op::Icmp { lhs, rhs, .. } => vec![lhs, rhs],
            Op::Select {
                cond,
                on_true,
                on_false,
            } => vec![cond, on_true, on_false],
            Op::Cast { value, .. } => vec![value],
            Op::Intrinsic { args, .. } => args.iter().collect(),
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Op::Const { .. } | Op::Callv(_) => vec![],
            Op::Bin { lhs, rhs, .. } | Op::Icmp { lhs, rhs, .. } => vec![lhs, rhs],
            Op::Select {
                cond,
                on_true,
                on_false,
            } => vec![cond, on_true, on_false],
            Op::Cast { value, .. } => vec![value],
            Op::Intrinsic { args, .. } => args.iter_mut().collect(),
        }
    }

    pub fn may_trap(&self) -> bool {
        match self {
            Op::Bin { op, rhs, .. } => match op {
                BinOp::Sdiv | BinOp::Srem => !matches!(
                    rhs.as_const(),
                    Some((ty, bits)) if bits != 0 && ty.to_signed(bits) != -1
                ),
                BinOp::Udiv | BinOp::Urem => !matches!(rhs.as_const(), Some((_, bits)) if bits != 0),
                BinOp::Shl | BinOp::Lshr | BinOp::Ashr => {
                    !matches!(rhs.as_const(), Some((ty, bits)) if bits < ty.width() as u64)
                }
                _ => false,
            },
            Op::Intrinsic { .. } => true,
            Op::Callv(_) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instr {
    pub dest: String,
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchTarget {
    pub label: String,
    pub args: Vec<Operand>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminator {
    Ret(Operand),
    Trap,
    Br(BranchTarget),
    CondBr {
        cond: Operand,
        on_true: BranchTarget,
        on_false: BranchTarget,
    },
}

impl Terminator {
    pub fn targets(&self) -> Vec<&BranchTarget> {
        match self {
            Terminator::Ret(_) | Terminator::Trap => vec![],
            Terminator::Br(t) => vec![t],
            Terminator::CondBr {
                on_true, on_false, ..
            } => vec![on_true, on_false],
        }
    }

    pub fn targets_mut(&mut self) -> Vec<&mut BranchTarget> {
        match self {
            Terminator::Ret(_) | Terminator::Trap => vec![],
            Terminator::Br(t) => vec![t],
            Terminator::CondBr {
                on_true, on_false, ..
            } => vec![on_true, on_false],
        }
    }

    pub fn operands(&self) -> Vec<&Operand> {
        let mut out = vec![];
        match self {
            Terminator::Ret(v) => out.push(v),
            Terminator::Trap => {}
            Terminator::Br(t) => out.extend(t.args.iter()),
            Terminator::CondBr {
                cond,
                on_true,
                on_false,
            } => {
                out.push(cond);
                out.extend(on_true.args.iter());
                out.extend(on_false.args.iter());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub label: String,
    pub params: Vec<(String, MirType)>,
    pub instrs: Vec<Instr>,
    pub term: Terminator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DialectTag {
    Cm,
    Gm,
    Raw,
}

impl DialectTag {
    pub fn name(self) -> &'static str {
        match self {
            DialectTag::Cm => "cm",
            DialectTag::Gm => "gm",
            DialectTag::Raw => "raw",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub params: Vec<(String, MirType)>,
    pub ret: MirType,
    pub blocks: Vec<Block>,
    pub dialect: DialectTag,
}

impl Function {
    pub fn block(&self, label: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn instr_count(&self) -> usize {
        self.blocks.iter().map(|b| b.instrs.len() + 1).sum()
    }

    pub fn signature(&self) -> (Vec<MirType>, MirType) {
        (self.params.iter().map(|(_, t)| *t).collect(), self.ret)
    }

    /// Types of every defined register (params, block params, instr dests).
    /// Requires a validated function; falls back to best effort otherwise.
    pub fn reg_types(&self) -> HashMap<String, MirType> {
        let mut types: HashMap<String, MirType> = HashMap::new();
        for (name, ty) in &self.params {
            types.insert(name.clone(), *ty);
        }
        for b in &self.blocks {
            for (name, ty) in &b.params {
                types.insert(name.clone(), *ty);
            }
        }
        // Instruction results may reference registers defined in any block,
        // so iterate until stable.
        let mut changed = true;
        while changed {
            changed = false;
            for b in &self.blocks {
                for i in &b.instrs {
                    if types.contains_key(&i.dest) {
                        continue;
                    }
                    if let Some(ty) = self.result_type(&i.op, &types) {
                        types.insert(i.dest.clone(), ty);
                        changed = true;
                    }
                }
            }
        }
        types
    }

    fn operand_type(&self, o: &Operand, types: &HashMap<String, MirType>) -> Option<MirType> {
        match o {
            Operand::Reg(r) => types.get(r).copied(),
            Operand::Const { ty, .. } => Some(*ty),
        }
    }

    fn result_type(&self, op: &Op, types: &HashMap<String, MirType>) -> Option<MirType> {
        match op {
            Op::Const { ty, .. } => Some(*ty),
            Op::Bin { lhs, .. } => self.operand_type(lhs, types),
            Op::Icmp { .. } => Some(MirType::I1),
            Op::Select { on_true, .. } => self.operand_type(on_true, types),
            Op::Cast { to, .. } => Some(*to),
            Op::Intrinsic { args, .. } => {
                args.first().and_then(|a| self.operand_type(a, types))
            }
            Op::Callv(_) => Some(self.ret),
        }
    }
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

fn print_operand(o: &Operand, out: &mut String) {
    match o {
        Operand::Reg(r) => {
            out.push('%');
            out.push_str(r);
        }
        Operand::Const { ty, bits } => {
            out.push_str("const.");
            out.push_str(ty.name());
            out.push(' ');
            out.push_str(&ty.to_signed(*bits).to_string());
        }
    }
}

fn print_target(t: &BranchTarget, out: &mut String) {
    out.push_str(&t.label);
    if !t.args.is_empty() {
        out.push('(');
        for (i, a) in t.args.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            print_operand(a, out);
        }
        out.push(')');
    }
}

/// Canonical textual form. `parse_mir(print_mir(f))` is structurally equal
/// to `f` for every validated function.
pub fn print_mir(f: &Function) -> String {
    let mut s = String::new();
    s.push_str("func @");
    s.push_str(&f.name);
    s.push('(');
    for (i, (name, ty)) in f.params.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push('%');
        s.push_str(name);
        s.push_str(": ");
        s.push_str(ty.name());
    }
    s.push_str(") -> ");
    s.push_str(f.ret.name());
    s.push_str(" {\n");
    for b in &f.blocks {
        s.push_str(&b.label);
        if !b.params.is_empty() {
            s.push('(');
            for (i, (name, ty)) in b.params.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                s.push('%');
                s.push_str(name);
                s.push_str(": ");
                s.push_str(ty.name());
            }
            s.push(')');
        }
        s.push_str(":\n");
        for i in &b.instrs {
            s.push_str("  %");
            s.push_str(&i.dest);
            s.push_str(" = ");
            match &i.op {
                Op::Const { ty, bits } => {
                    s.push_str("const.");
                    s.push_str(ty.name());
                    s.push(' ');
                    s.push_str(&ty.to_signed(*bits).to_string());
                }
                Op::Bin { op, lhs, rhs } => {
                    s.push_str(op.name());
                    s.push(' ');
                    print_operand(lhs, &mut s);
                    s.push_str(", ");
                    print_operand(rhs, &mut s);
                }
                Op::Icmp { pred, lhs, rhs } => {
                    s.push_str("icmp.");
                    s.push_str(pred.name());
                    s.push(' ');
                    print_operand(lhs, &mut s);
                    s.push_str(", ");
                    print_operand(rhs, &mut s);
                }
                Op::Select {
                    cond,
                    on_true,
                    on_false,
                } => {
                    s.push_str("select ");
                    print_operand(cond, &mut s);
                    s.push_str(", ");
                    print_operand(on_true, &mut s);
                    s.push_str(", ");
                    print_operand(on_false, &mut s);
                }
                Op::Cast { kind, to, value } => {
                    s.push_str(kind.name());
                    s.push('.');
                    s.push_str(to.name());
                    s.push(' ');
                    print_operand(value, &mut s);
                }
                Op::Intrinsic { name, args } => {
                    s.push_str("intrinsic.");
                    s.push_str(name);
                    for (k, a) in args.iter().enumerate() {
                        s.push(if k == 0 { ' ' } else { ',' });
                        if k > 0 {
                            s.push(' ');
                        }
                        print_operand(a, &mut s);
                    }
                }
                Op::Callv(k) => {
                    s.push_str("callv ");
                    s.push_str(&k.to_string());
                }
            }
            s.push('\n');
        }
        s.push_str("  ");
        match &b.term {
            Terminator::Ret(v) => {
                s.push_str("ret ");
                print_operand(v, &mut s);
            }
            Terminator::Trap => s.push_str("trap"),
            Terminator::Br(t) => {
                s.push_str("br ");
                print_target(t, &mut s);
            }
            Terminator::CondBr {
                cond,
                on_true,
                on_false,
            } => {
                s.push_str("condbr ");
                print_operand(cond, &mut s);
                s.push_str(", ");
                print_target(on_true, &mut s);
                s.push_str(", ");
                print_target(on_false, &mut s);
            }
        }
        s.push('\n');
    }
    s.push_str("}\n");
    s
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at {line}:{col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Reg(String),
    FnName(String),
    Num(i128),
    Punct(char),
    Arrow,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn next_tok(&mut self) -> Result<(Tok, u32, u32), ParseError> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b';') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
        let (line, col) = (self.line, self.col);
        let c = match self.peek() {
            None => return Ok((Tok::Eof, line, col)),
            Some(c) => c,
        };
        let tok = match c {
            b'%' | b'@' => {
                self.bump();
                let ident = self.lex_ident()?;
                if c == b'%' {
                    Tok::Reg(ident)
                } else {
                    Tok::FnName(ident)
                }
            }
            b'-' => {
                self.bump();
                if self.peek() == Some(b'>') {
                    self.bump();
                    Tok::Arrow
                } else if self.peek().map_or(false, |d| d.is_ascii_digit()) {
                    let n = self.lex_number()?;
                    Tok::Num(-n)
                } else {
                    return Err(self.err("expected '>' or digit after '-'"));
                }
            }
            b'0'..=b'9' => Tok::Num(self.lex_number()?),
            b'(' | b')' | b'{' | b'}' | b',' | b':' | b'=' | b'.' => {
                self.bump();
                Tok::Punct(c as char)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => Tok::Ident(self.lex_ident()?),
            c => return Err(self.err(format!("unexpected character '{}'", c as char))),
        };
        Ok((tok, line, col))
    }

    fn lex_ident(&mut self) -> Result<String, ParseError> {
        let mut s = String::new();
        match self.peek() {
            Some(c) if c.is_ascii_alphanumeric() || c == b'_' => {}
            _ => return Err(self.err("expected identifier")),
        }
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                s.push(c as char);
                self.bump();
            } else {
                break;
            }
        }
        Ok(s)
    }

    fn lex_number(&mut self) -> Result<i128, ParseError> {
        let mut v: i128 = 0;
        let mut any = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                any = true;
                v = v
                    .checked_mul(10)
                    .and_then(|v| v.checked_add((c - b'0') as i128))
                    .ok_or_else(|| self.err("integer literal overflow"))?;
                self.bump();
            } else {
                break;
            }
        }
        if !any {
            return Err(self.err("expected number"));
        }
        Ok(v)
    }
}

/// Whether bundle-only constructs (`callv`) are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Plain,
    Bundle,
}

struct Parser<'a> {
    lx: Lexer<'a>,
    cur: Tok,
    line: u32,
    col: u32,
    mode: ParseMode,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, mode: ParseMode) -> Result<Self, ParseError> {
        let mut lx = Lexer::new(src);
        let (cur, line, col) = lx.next_tok()?;
        Ok(Parser {
            lx,
            cur,
            line,
            col,
            mode,
        })
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn advance(&mut self) -> Result<Tok, ParseError> {
        let (t, line, col) = self.lx.next_tok()?;
        self.line = line;
        self.col = col;
        Ok(std::mem::replace(&mut self.cur, t))
    }

    fn expect_punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.cur == Tok::Punct(c) {
            self.advance()?;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c)))
        }
    }

    fn eat_punct(&mut self, c: char) -> Result<bool, ParseError> {
        if self.cur == Tok::Punct(c) {
            self.advance()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.cur.clone() {
            Tok::Ident(s) => {
                self.advance()?;
                Ok(s)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        match &self.cur {
            Tok::Ident(s) if s == kw => {
                self.advance()?;
                Ok(())
            }
            _ => Err(self.err(format!("expected '{}'", kw))),
        }
    }

    fn parse_type(&mut self) -> Result<MirType, ParseError> {
        let name = self.expect_ident()?;
        MirType::from_name(&name).ok_or_else(|| self.err(format!("unknown type '{}'", name)))
    }

    fn parse_dotted_type(&mut self) -> Result<MirType, ParseError> {
        self.expect_punct('.')?;
        self.parse_type()
    }

    fn parse_int_for(&mut self, ty: MirType) -> Result<u64, ParseError> {
        match self.cur {
            Tok::Num(v) => {
                self.advance()?;
                let lo = ty.min_signed() as i128;
                let hi = ty.mask() as i128;
                if v < lo || v > hi {
                    return Err(self.err(format!("constant {} out of range for {}", v, ty)));
                }
                Ok((v as u64) & ty.mask())
            }
            _ => Err(self.err("expected integer")),
        }
    }

    fn parse_operand(&mut self) -> Result<Operand, ParseError> {
        match self.cur.clone() {
            Tok::Reg(r) => {
                self.advance()?;
                Ok(Operand::Reg(r))
            }
            Tok::Ident(s) if s == "const" => {
                self.advance()?;
                let ty = self.parse_dotted_type()?;
                let bits = self.parse_int_for(ty)?;
                Ok(Operand::Const { ty, bits })
            }
            _ => Err(self.err("expected register or constant operand")),
        }
    }

    fn parse_target(&mut self) -> Result<BranchTarget, ParseError> {
        let label = self.expect_ident()?;
        let mut args = vec![];
        if self.eat_punct('(')? {
            loop {
                args.push(self.parse_operand()?);
                if !self.eat_punct(',')? {
                    break;
                }
            }
            self.expect_punct(')')?;
        }
        Ok(BranchTarget { label, args })
    }

    fn parse_two_operands(&mut self) -> Result<(Operand, Operand), ParseError> {
        let a = self.parse_operand()?;
        self.expect_punct(',')?;
        let b = self.parse_operand()?;
        Ok((a, b))
    }

    fn parse_function(&mut self) -> Result<Function, ParseError> {
        self.expect_kw("func")?;
        let name = match self.cur.clone() {
            Tok::FnName(n) => {
                self.advance()?;
                n
            }
            _ => return Err(self.err("expected '@name'")),
        };
        self.expect_punct('(')?;
        let mut params = vec![];
        if self.cur != Tok::Punct(')') {
            loop {
                let reg = match self.cur.clone() {
                    Tok::Reg(r) => {
                        self.advance()?;
                        r
                    }
                    _ => return Err(self.err("expected parameter register")),
                };
                self.expect_punct(':')?;
                let ty = self.parse_type()?;
                params.push((reg, ty));
                if !self.eat_punct(',')? {
                    break;
                }
            }
        }
        self.expect_punct(')')?;
        if self.cur != Tok::Arrow {
            return Err(self.err("expected '->'"));
        }
        self.advance()?;
        let ret = self.parse_type()?;
        self.expect_punct('{')?;
        let mut blocks = vec![];
        let mut instr_total = 0usize;
        while self.cur != Tok::Punct('}') {
            let block = self.parse_block()?;
            instr_total += block.instrs.len() + 1;
            if instr_total > MAX_INSTRUCTIONS {
                return Err(self.err(format!(
                    "function exceeds {} instructions",
                    MAX_INSTRUCTIONS
                )));
            }
            blocks.push(block);
        }
        self.expect_punct('}')?;
        if blocks.is_empty() {
            return Err(self.err("function has no blocks"));
        }
        Ok(Function {
            name,
            params,
            ret,
            blocks,
            dialect: DialectTag::Raw,
        })
    }

    fn parse_block(&mut self) -> Result<Block, ParseError> {
        let label = self.expect_ident()?;
        let mut params = vec![];
        if self.eat_punct('(')? {
            loop {
                let reg = match self.cur.clone() {
                    Tok::Reg(r) => {
                        self.advance()?;
                        r
                    }
                    _ => return Err(self.err("expected block parameter register")),
                };
                self.expect_punct(':')?;
                let ty = self.parse_type()?;
                params.push((reg, ty));
                if !self.eat_punct(',')? {
                    break;
                }
            }
            self.expect_punct(')')?;
        }
        self.expect_punct(':')?;
        let mut instrs = vec![];
        loop {
            match self.cur.clone() {
                Tok::Ident(kw) if kw == "ret" => {
                    self.advance()?;
                    let v = self.parse_operand()?;
                    return Ok(Block {
                        label,
                        params,
                        instrs,
                        term: Terminator::Ret(v),
                    });
                }
                Tok::Ident(kw) if kw == "trap" => {
                    self.advance()?;
                    return Ok(Block {
                        label,
                        params,
                        instrs,
                        term: Terminator::Trap,
                    });
                }
                Tok::Ident(kw) if kw == "br" => {
                    self.advance()?;
                    let t = self.parse_target()?;
                    return Ok(Block {
                        label,
                        params,
                        instrs,
                        term: Terminator::Br(t),
                    });
                }
                Tok::Ident(kw) if kw == "condbr" => {
                    self.advance()?;
                    let cond = self.parse_operand()?;
                    self.expect_punct(',')?;
                    let on_true = self.parse_target()?;
                    self.expect_punct(',')?;
                    let on_false = self.parse_target()?;
                    return Ok(Block {
                        label,
                        params,
                        instrs,
                        term: Terminator::CondBr {
                            cond,
                            on_true,
                            on_false,
                        },
                    });
                }
                Tok::Reg(dest) => {
                    self.advance()?;
                    self.expect_punct('=')?;
                    let op = self.parse_op()?;
                    instrs.push(Instr { dest, op });
                }
                _ => return Err(self.err("expected instruction or terminator")),
            }
        }
    }

    fn parse_op(&mut self) -> Result<Op, ParseError> {
        let name = self.expect_ident()?;
        if let Some(op) = BinOp::from_name(&name) {
            let (lhs, rhs) = self.parse_two_operands()?;
            return Ok(Op::Bin { op, lhs, rhs });
        }
        match name.as_str() {
            "const" => {
                let ty = self.parse_dotted_type()?;
                let bits = self.parse_int_for(ty)?;
                Ok(Op::Const { ty, bits })
            }
            "icmp" => {
                self.expect_punct('.')?;
                let pred_name = self.expect_ident()?;
                let pred = CmpPred::from_name(&pred_name)
                    .ok_or_else(|| self.err(format!("unknown icmp predicate '{}'", pred_name)))?;
                let (lhs, rhs) = self.parse_two_operands()?;
                Ok(Op::Icmp { pred, lhs, rhs })
            }
            "select" => {
                let cond = self.parse_operand()?;
                self.expect_punct(',')?;
                let on_true = self.parse_operand()?;
                self.expect_punct(',')?;
                let on_false = self.parse_operand()?;
                Ok(Op::Select {
                    cond,
                    on_true,
                    on_false,
                })
            }
            "zext" | "sext" | "trunc" => {
                let kind = match name.as_str() {
                    "zext" => CastKind::Zext,
                    "sext" => CastKind::Sext,
                    _ => CastKind::Trunc,
                };
                let to = self.parse_dotted_type()?;
                let value = self.parse_operand()?;
                Ok(Op::Cast { kind, to, value })
            }
            "intrinsic" => {
                let mut iname = String::new();
                while self.eat_punct('.')? {
                    if !iname.is_empty() {
                        iname.push('.');
                    }
                    iname.push_str(&self.expect_ident()?);
                }
                if iname.is_empty() {
                    return Err(self.err("expected intrinsic name"));
                }
                let mut args = vec![self.parse_operand()?];
                while self.eat_punct(',')? {
                    args.push(self.parse_operand()?);
                }
                Ok(Op::Intrinsic { name: iname, args })
            }
            "callv" => {
                if self.mode != ParseMode::Bundle {
                    return Err(self.err("'callv' is only valid in bundle wrapper files"));
                }
                match self.cur {
                    Tok::Num(v) if v >= 1 => {
                        self.advance()?;
                        Ok(Op::Callv(v as u32))
                    }
                    _ => Err(self.err("expected version index after 'callv'")),
                }
            }
            other => Err(self.err(format!("unknown opcode '{}'", other))),
        }
    }
}

/// Parse a function in the plain (non-bundle) grammar and validate it.
pub fn parse_mir(text: &str) -> Result<Function, MirError> {
    parse_mir_mode(text, ParseMode::Plain)
}

pub fn parse_mir_mode(text: &str, mode: ParseMode) -> Result<Function, MirError> {
    let mut p = Parser::new(text, mode).map_err(MirError::Parse)?;
    let f = p.parse_function().map_err(MirError::Parse)?;
    if p.cur != Tok::Eof {
        return Err(MirError::Parse(p.err("trailing input after function")));
    }
    let diags = validate_function_mode(&f, mode);
    if !diags.is_empty() {
        return Err(MirError::Validation(diags));
    }
    Ok(f)
}

#[derive(Debug, Clone, Error)]
pub enum MirError {
    #[error(transparent)]
    Parse(ParseError),
    #[error("validation failed: {}", .0.iter().map(|d| d.message.as_str()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Diagnostic>),
}

// ---------------------------------------------------------------------------
// Validator
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub message: String,
}

impl Diagnostic {
    fn new(message: impl Into<String>) -> Self {
        Diagnostic {
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Empty result means the function is well-formed: SSA single assignment,
/// def-before-use (dominance-checked), terminator placement, branch-target
/// resolution, and per-opcode type agreement.
pub fn validate_function(f: &Function) -> Vec<Diagnostic> {
    validate_function_mode(f, ParseMode::Plain)
}

pub fn validate_function_mode(f: &Function, mode: ParseMode) -> Vec<Diagnostic> {
    let mut diags = vec![];
    if f.blocks.is_empty() {
        diags.push(Diagnostic::new("function has no blocks"));
        return diags;
    }
    if f.instr_count() > MAX_INSTRUCTIONS {
        diags.push(Diagnostic::new(format!(
            "function exceeds {} instructions",
            MAX_INSTRUCTIONS
        )));
    }

    // Unique labels.
    let mut labels: HashMap<&str, usize> = HashMap::new();
    for (i, b) in f.blocks.iter().enumerate() {
        if labels.insert(&b.label, i).is_some() {
            diags.push(Diagnostic::new(format!("duplicate label '{}'", b.label)));
        }
    }
    if !f.blocks[0].params.is_empty() {
        diags.push(Diagnostic::new("entry block must not take parameters"));
    }

    // SSA single assignment across params, block params, and dests.
    let mut defs: BTreeSet<&str> = BTreeSet::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut check_def = |name: &str, diags: &mut Vec<Diagnostic>| {
        if !seen.insert(name.to_string()) {
            diags.push(Diagnostic::new(format!("register %{} assigned twice", name)));
        }
    };
    for (name, _) in &f.params {
        check_def(name, &mut diags);
    }
    for b in &f.blocks {
        for (name, _) in &b.params {
            check_def(name, &mut diags);
        }
        for i in &b.instrs {
            check_def(&i.dest, &mut diags);
        }
    }
    drop(check_def);
    defs.extend(seen.iter().map(|s| s.as_str()));

    // Branch target resolution and argument arity/type agreement.
    let types = f.reg_types();
    let opty = |o: &Operand| -> Option<MirType> {
        match o {
            Operand::Reg(r) => types.get(r).copied(),
            Operand::Const { ty, .. } => Some(*ty),
        }
    };
    for b in &f.blocks {
        for t in b.term.targets() {
            match f.block(&t.label) {
                None => diags.push(Diagnostic::new(format!("unknown label '{}'", t.label))),
                Some(target) => {
                    if target.params.len() != t.args.len() {
                        diags.push(Diagnostic::new(format!(
                            "branch to '{}' passes {} args, block takes {}",
                            t.label,
                            t.args.len(),
                            target.params.len()
                        )));
                    } else {
                        for (a, (pname, pty)) in t.args.iter().zip(&target.params) {
                            if let Some(aty) = opty(a) {
                                if aty != *pty {
                                    diags.push(Diagnostic::new(format!(
                                        "branch arg for %{} has type {}, expected {}",
                                        pname, aty, pty
                                    )));
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    // Per-opcode type checks.
    for b in &f.blocks {
        for i in &b.instrs {
            match &i.op {
                Op::Const { .. } => {}
                Op::Bin { op, lhs, rhs } => match (opty(lhs), opty(rhs)) {
                    (Some(a), Some(bt)) => {
                        if a != bt {
                            diags.push(Diagnostic::new(format!(
                                "%{}: {} operand types differ ({} vs {})",
                                i.dest,
                                op.name(),
                                a,
                                bt
                            )));
                        }
                        if a == MirType::I1
                            && !matches!(op, BinOp::And | BinOp::Or | BinOp::Xor)
                        {
                            diags.push(Diagnostic::new(format!(
                                "%{}: {} not defined on i1",
                                i.dest,
                                op.name()
                            )));
                        }
                    }
                    _ => {}
                },
                Op::Icmp { lhs, rhs, .. } => {
                    if let (Some(a), Some(bt)) = (opty(lhs), opty(rhs)) {
                        if a != bt {
                            diags.push(Diagnostic::new(format!(
                                "%{}: icmp operand types differ ({} vs {})",
                                i.dest, a, bt
                            )));
                        }
                    }
                }
                Op::Select {
                    cond,
                    on_true,
                    on_false,
                } => {
                    if opty(cond) != Some(MirType::I1) {
                        diags.push(Diagnostic::new(format!(
                            "%{}: select condition must be i1",
                            i.dest
                        )));
                    }
                    if let (Some(a), Some(bt)) = (opty(on_true), opty(on_false)) {
                        if a != bt {
                            diags.push(Diagnostic::new(format!(
                                "%{}: select arm types differ ({} vs {})",
                                i.dest, a, bt
                            )));
                        }
                    }
                }
                Op::Cast { kind, to, value } => {
                    if let Some(from) = opty(value) {
                        match kind {
                            CastKind::Zext | CastKind::Sext => {
                                if to.width() <= from.width() {
                                    diags.push(Diagnostic::new(format!(
                                        "%{}: {} must widen strictly ({} -> {})",
                                        i.dest,
                                        kind.name(),
                                        from,
                                        to
                                    )));
                                }
                            }
                            CastKind::Trunc => {
                                if to.width() >= from.width() {
                                    diags.push(Diagnostic::new(format!(
                                        "%{}: trunc must narrow strictly ({} -> {})",
                                        i.dest, from, to
                                    )));
                                }
                            }
                        }
                    }
                }
                Op::Intrinsic { name, args } => {
                    if !registered_intrinsics().contains(&name.as_str()) {
                        diags.push(Diagnostic::new(format!(
                            "%{}: unknown intrinsic '{}'",
                            i.dest, name
                        )));
                    } else if args.len() != 1 {
                        diags.push(Diagnostic::new(format!(
                            "%{}: intrinsic '{}' takes one argument",
                            i.dest, name
                        )));
                    }
                }
                Op::Callv(_) => {
                    if mode != ParseMode::Bundle {
                        diags.push(Diagnostic::new(format!(
                            "%{}: callv is only valid in bundle wrappers",
                            i.dest
                        )));
                    }
                }
            }
        }
        match &b.term {
            Terminator::Ret(v) => {
                if let Some(t) = opty(v) {
                    if t != f.ret {
                        diags.push(Diagnostic::new(format!(
                            "ret type {} does not match function return type {}",
                            t, f.ret
                        )));
                    }
                }
            }
            Terminator::CondBr { cond, .. } => {
                if opty(cond) != Some(MirType::I1) {
                    diags.push(Diagnostic::new("condbr condition must be i1".to_string()));
                }
            }
            _ => {}
        }
    }

    // Def-before-use under dominance.
    diags.extend(check_def_before_use(f, &defs));
    diags
}

fn check_def_before_use(f: &Function, defs: &BTreeSet<&str>) -> Vec<Diagnostic> {
    let mut diags = vec![];
    let n = f.blocks.len();
    let index: HashMap<&str, usize> = f
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label.as_str(), i))
        .collect();

    let mut preds: Vec<Vec<usize>> = vec![vec![]; n];
    for (i, b) in f.blocks.iter().enumerate() {
        for t in b.term.targets() {
            if let Some(&j) = index.get(t.label.as_str()) {
                preds[j].push(i);
            }
        }
    }

    // Iterative dominator sets; fine at this scale.
    let all: BTreeSet<usize> = (0..n).collect();
    let mut dom: Vec<BTreeSet<usize>> = vec![all.clone(); n];
    dom[0] = BTreeSet::from([0]);
    let mut changed = true;
    while changed {
        changed = false;
        for i in 1..n {
            let mut new: Option<BTreeSet<usize>> = None;
            for &p in &preds[i] {
                new = Some(match new {
                    None => dom[p].clone(),
                    Some(acc) => acc.intersection(&dom[p]).copied().collect(),
                });
            }
            let mut new = new.unwrap_or_default();
            new.insert(i);
            if new != dom[i] {
                dom[i] = new;
                changed = true;
            }
        }
    }

    // Registers defined in each block (params + dests).
    let block_of_def: HashMap<&str, usize> = {
        let mut m = HashMap::new();
        for (i, b) in f.blocks.iter().enumerate() {
            for (p, _) in &b.params {
                m.insert(p.as_str(), i);
            }
            for ins in &b.instrs {
                m.insert(ins.dest.as_str(), i);
            }
        }
        m
    };

    for (bi, b) in f.blocks.iter().enumerate() {
        let mut local: BTreeSet<&str> = b.params.iter().map(|(p, _)| p.as_str()).collect();
        let check_use = |reg: &str, local: &BTreeSet<&str>, diags: &mut Vec<Diagnostic>| {
            if f.params.iter().any(|(p, _)| p == reg) {
                return;
            }
            if !defs.contains(reg) {
                diags.push(Diagnostic::new(format!("use before def: %{}", reg)));
                return;
            }
            if local.contains(reg) {
                return;
            }
            match block_of_def.get(reg) {
                Some(&db) if db != bi && dom[bi].contains(&db) => {}
                _ => diags.push(Diagnostic::new(format!("use before def: %{}", reg))),
            }
        };
        for ins in &b.instrs {
            for o in ins.op.operands() {
                if let Some(r) = o.as_reg() {
                    check_use(r, &local, &mut diags);
                }
            }
            local.insert(ins.dest.as_str());
        }
        for o in b.term.operands() {
            if let Some(r) = o.as_reg() {
                check_use(r, &local, &mut diags);
            }
        }
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_ok(src: &str) -> Function {
        parse_mir(src).expect("parse")
    }

    #[test]
    fn parses_identity() {
        let f = parse_ok("func @id(%x: i32) -> i32 { entry: ret %x }");
        assert_eq!(f.name, "id");
        assert_eq!(f.params.len(), 1);
        assert_eq!(f.blocks.len(), 1);
    }

    #[test]
    fn parses_add_with_immediate() {
        let f = parse_ok("func @f(%x: i32) -> i32 { entry: %y = add %x, const.i32 1 ret %y }");
        assert_eq!(f.blocks[0].instrs.len(), 1);
    }

    #[test]
    fn rejects_missing_operand() {
        let err = parse_mir("func @f(%x: i32) -> i32 { entry: %y = add %x }").unwrap_err();
        assert!(matches!(err, MirError::Parse(_)));
    }

    #[test]
    fn rejects_use_before_def() {
        let err = parse_mir("func @f(%x: i32) -> i32 { entry: %a = add %y, %x ret %a }")
            .unwrap_err();
        match err {
            MirError::Validation(diags) => {
                assert!(diags.iter().any(|d| d.message.contains("use before def: %y")))
            }
            other => panic!("expected validation error, got {:?}", other),
        }
    }

    #[test]
    fn rejects_unknown_label() {
        let err = parse_mir(
            "func @f(%x: i1) -> i32 { entry: condbr %x, a, nowhere a: ret const.i32 0 }",
        )
        .unwrap_err();
        match err {
            MirError::Validation(diags) => {
                assert!(diags.iter().any(|d| d.message.contains("unknown label")))
            }
            other => panic!("expected validation error, got {:?}", other),
        }
    }

    #[test]
    fn rejects_double_assignment() {
        let err = parse_mir(
            "func @f(%x: i32) -> i32 { entry: %a = add %x, %x %a = add %x, %x ret %a }",
        )
        .unwrap_err();
        match err {
            MirError::Validation(diags) => {
                assert!(diags.iter().any(|d| d.message.contains("assigned twice")))
            }
            other => panic!("expected validation error, got {:?}", other),
        }
    }

    #[test]
    fn rejects_callv_outside_bundle() {
        let err = parse_mir("func @f() -> i32 { entry: %a = callv 1 ret %a }").unwrap_err();
        assert!(matches!(err, MirError::Parse(_)));
    }

    #[test]
    fn accepts_callv_in_bundle_mode() {
        let f = parse_mir_mode(
            "func @f() -> i32 { entry: %a = callv 1 ret %a }",
            ParseMode::Bundle,
        )
        .expect("bundle parse");
        assert!(matches!(f.blocks[0].instrs[0].op, Op::Callv(1)));
    }

    #[test]
    fn round_trips_loop_with_block_params() {
        let src = "\
func @sum(%n: i8) -> i8 {
entry:
  br head(const.i8 0, const.i8 0)
head(%i: i8, %acc: i8):
  %c = icmp.slt %i, %n
  condbr %c, body, exit
body:
  %acc2 = add %acc, %i
  %i2 = add %i, const.i8 1
  br head(%i2, %acc2)
exit:
  ret %acc
}
";
        let f = parse_ok(src);
        let printed = print_mir(&f);
        let f2 = parse_ok(&printed);
        assert_eq!(f, f2);
        assert_eq!(printed, print_mir(&f2));
    }

    #[test]
    fn printer_is_canonical_under_whitespace() {
        let a = parse_ok("func @id(%x: i32) -> i32 { entry: ret %x }");
        let b = parse_ok("func   @id( %x :i32 )->i32 {\n entry:\n   ret   %x\n}");
        assert_eq!(print_mir(&a), print_mir(&b));
    }

    #[test]
    fn negative_constant_round_trips() {
        let f = parse_ok("func @f() -> i16 { entry: ret const.i16 -1 }");
        let printed = print_mir(&f);
        assert!(printed.contains("const.i16 -1"));
        assert_eq!(f, parse_ok(&printed));
    }

    #[test]
    fn rejects_out_of_range_constant() {
        assert!(parse_mir("func @f() -> i8 { entry: ret const.i8 300 }").is_err());
    }

    #[test]
    fn rejects_bad_cast_direction() {
        let err =
            parse_mir("func @f(%x: i8) -> i8 { entry: %y = zext.i8 %x ret %y }").unwrap_err();
        assert!(matches!(err, MirError::Validation(_)));
    }

    #[test]
    fn diamond_def_does_not_dominate_join() {
        // %v defined only on one arm; the join may not use it.
        let src = "\
func @f(%c: i1, %x: i8) -> i8 {
entry:
  condbr %c, a, b
a:
  %v = add %x, const.i8 1
  br join
b:
  br join
join:
  ret %v
}
";
        let err = parse_mir(src).unwrap_err();
        match err {
            MirError::Validation(diags) => {
                assert!(diags.iter().any(|d| d.message.contains("use before def: %v")))
            }
            other => panic!("expected validation error, got {:?}", other),
        }
    }
}
