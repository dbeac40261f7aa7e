// SPDX-License-Identifier: Apache-2.0

//! The two source dialects and their lowering to MIR.
//!
//! `Cm` is C-flavored: `int16 f(int16 x) { return x != 0 ? -1 : 0; }`.
//! `Gm` is Go-flavored: `func f(x int16) int16 { if x != 0 { return -1 }; return 0 }`.
//!
//! The dialects deliberately imprint different shapes on the IR: Gm has no
//! ternary operator (conditionals become branches), guards every division
//! with `gm.divcheck`, and traps on oversized shift amounts, while Cm lowers
//! conditionals to `select`, relies on the inherent division traps, and masks
//! shift amounts by width-1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mir::{
    BinOp, Block, BranchTarget, CmpPred, DialectTag, Function, Instr, MirType, Op, Operand,
    Terminator, INTRINSIC_GM_DIVCHECK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dialect {
    Cm,
    Gm,
}

impl Dialect {
    pub fn name(self) -> &'static str {
        match self {
            Dialect::Cm => "cm",
            Dialect::Gm => "gm",
        }
    }

    /// Display name used in prompts.
    pub fn display(self) -> &'static str {
        match self {
            Dialect::Cm => "Cm",
            Dialect::Gm => "Gm",
        }
    }

    pub fn from_name(s: &str) -> Option<Dialect> {
        match s {
            "cm" => Some(Dialect::Cm),
            "gm" => Some(Dialect::Gm),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        self.name()
    }

    pub fn tag(self) -> DialectTag {
        match self {
            Dialect::Cm => DialectTag::Cm,
            Dialect::Gm => DialectTag::Gm,
        }
    }
}

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AstBinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl AstBinOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            AstBinOp::Eq | AstBinOp::Ne | AstBinOp::Lt | AstBinOp::Le | AstBinOp::Gt | AstBinOp::Ge
        )
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            AstBinOp::Add | AstBinOp::Mul | AstBinOp::And | AstBinOp::Or | AstBinOp::Xor
        )
    }

    pub fn comparison_pred(self) -> Option<CmpPred> {
        Some(match self {
            AstBinOp::Eq => CmpPred::Eq,
            AstBinOp::Ne => CmpPred::Ne,
            AstBinOp::Lt => CmpPred::Slt,
            AstBinOp::Le => CmpPred::Sle,
            AstBinOp::Gt => CmpPred::Sgt,
            AstBinOp::Ge => CmpPred::Sge,
            _ => return None,
        })
    }

    fn token(self) -> &'static str {
        match self {
            AstBinOp::Add => "+",
            AstBinOp::Sub => "-",
            AstBinOp::Mul => "*",
            AstBinOp::Div => "/",
            AstBinOp::Rem => "%",
            AstBinOp::And => "&",
            AstBinOp::Or => "|",
            AstBinOp::Xor => "^",
            AstBinOp::Shl => "<<",
            AstBinOp::Shr => ">>",
            AstBinOp::Eq => "==",
            AstBinOp::Ne => "!=",
            AstBinOp::Lt => "<",
            AstBinOp::Le => "<=",
            AstBinOp::Gt => ">",
            AstBinOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AstUnOp {
    Neg,
    Not,
    BitNot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Lit(i128),
    Bool(bool),
    Var(String),
    Unary {
        op: AstUnOp,
        expr: Box<Expr>,
    },
    Bin {
        op: AstBinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Ternary {
        cond: Box<Expr>,
        on_true: Box<Expr>,
        on_false: Box<Expr>,
    },
    Cast {
        to: MirType,
        expr: Box<Expr>,
    },
}

impl Expr {
    pub fn bin(op: AstBinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stmt {
    VarDecl { name: String, ty: MirType, init: Expr },
    Assign { name: String, value: Expr },
    Return(Expr),
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    While { cond: Expr, body: Vec<Stmt> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceAst {
    pub name: String,
    pub params: Vec<(String, MirType)>,
    pub ret: MirType,
    pub body: Vec<Stmt>,
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FrontendError {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: u32, col: u32, msg: String },
    #[error("dialect error at {line}:{col}: {msg}")]
    Dialect { line: u32, col: u32, msg: String },
    #[error("lowering error: {0}")]
    Lowering(String),
}

// ---------------------------------------------------------------------------
// Lexer (shared by both dialects)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum STok {
    Ident(String),
    Num(i128),
    Op(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: STok,
    line: u32,
    col: u32,
    newline_before: bool,
}

fn lex_source(src: &str) -> Result<Vec<SpannedTok>, FrontendError> {
    let bytes = src.as_bytes();
    let mut toks = vec![];
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let mut newline_pending = false;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            newline_pending = true;
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        // Line comments: both `//` and `#`.
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') || c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let (tl, tc) = (line, col);
        let tok = if c.is_ascii_digit() {
            let mut v: i128 = 0;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                v = v
                    .checked_mul(10)
                    .and_then(|v| v.checked_add((bytes[i] - b'0') as i128))
                    .ok_or(FrontendError::Parse {
                        line: tl,
                        col: tc,
                        msg: "integer literal overflow".into(),
                    })?;
                i += 1;
                col += 1;
            }
            STok::Num(v)
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let mut s = String::new();
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                s.push(bytes[i] as char);
                i += 1;
                col += 1;
            }
            STok::Ident(s)
        } else {
            let two = if i + 1 < bytes.len() {
                &src[i..i + 2]
            } else {
                ""
            };
            let op2 = ["<<", ">>", "<=", ">=", "==", "!=", "&&", "||", ":="]
                .iter()
                .find(|&&o| o == two)
                .copied();
            if let Some(op) = op2 {
                i += 2;
                col += 2;
                STok::Op(op)
            } else {
                let one = match c {
                    b'+' => "+",
                    b'-' => "-",
                    b'*' => "*",
                    b'/' => "/",
                    b'%' => "%",
                    b'&' => "&",
                    b'|' => "|",
                    b'^' => "^",
                    b'~' => "~",
                    b'!' => "!",
                    b'<' => "<",
                    b'>' => ">",
                    b'=' => "=",
                    b'(' => "(",
                    b')' => ")",
                    b'{' => "{",
                    b'}' => "}",
                    b';' => ";",
                    b',' => ",",
                    b'?' => "?",
                    b':' => ":",
                    _ => {
                        return Err(FrontendError::Parse {
                            line: tl,
                            col: tc,
                            msg: format!("unexpected character '{}'", c as char),
                        })
                    }
                };
                i += 1;
                col += 1;
                STok::Op(one)
            }
        };
        toks.push(SpannedTok {
            tok,
            line: tl,
            col: tc,
            newline_before: newline_pending,
        });
        newline_pending = false;
    }
    toks.push(SpannedTok {
        tok: STok::Eof,
        line,
        col,
        newline_before: newline_pending,
    });
    Ok(toks)
}

fn type_from_source_name(s: &str) -> Option<MirType> {
    match s {
        "bool" => Some(MirType::I1),
        "int8" => Some(MirType::I8),
        "int16" => Some(MirType::I16),
        "int32" => Some(MirType::I32),
        "int64" => Some(MirType::I64),
        _ => None,
    }
}

fn type_to_source_name(t: MirType) -> &'static str {
    match t {
        MirType::I1 => "bool",
        MirType::I8 => "int8",
        MirType::I16 => "int16",
        MirType::I32 => "int32",
        MirType::I64 => "int64",
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct SParser {
    toks: Vec<SpannedTok>,
    pos: usize,
    dialect: Dialect,
}

impl SParser {
    fn cur(&self) -> &SpannedTok {
        &self.toks[self.pos]
    }

    fn err(&self, msg: impl Into<String>) -> FrontendError {
        let t = self.cur();
        FrontendError::Parse {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        }
    }

    fn dialect_err(&self, msg: impl Into<String>) -> FrontendError {
        let t = self.cur();
        FrontendError::Dialect {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> STok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(&self.cur().tok, STok::Op(o) if *o == op)
    }

    fn expect_op(&mut self, op: &str) -> Result<(), FrontendError> {
        if self.is_op(op) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", op)))
        }
    }

    fn is_ident(&self, kw: &str) -> bool {
        matches!(&self.cur().tok, STok::Ident(s) if s == kw)
    }

    fn expect_ident(&mut self) -> Result<String, FrontendError> {
        match self.cur().tok.clone() {
            STok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), FrontendError> {
        if self.is_ident(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", kw)))
        }
    }

    fn expect_type(&mut self) -> Result<MirType, FrontendError> {
        let name = self.expect_ident()?;
        type_from_source_name(&name).ok_or_else(|| self.err(format!("unknown type '{}'", name)))
    }

    fn peek_type(&self) -> Option<MirType> {
        match &self.cur().tok {
            STok::Ident(s) => type_from_source_name(s),
            _ => None,
        }
    }

    // --- expressions (shared precedence; ternary is Cm-only) ---

    fn parse_expr(&mut self) -> Result<Expr, FrontendError> {
        let cond = self.parse_bitor()?;
        if self.is_op("?") {
            if self.dialect == Dialect::Gm {
                return Err(
                    self.dialect_err("ternary conditional is a Cm construct, not valid in Gm")
                );
            }
            self.bump();
            let on_true = self.parse_expr()?;
            self.expect_op(":")?;
            let on_false = self.parse_expr()?;
            return Ok(Expr::Ternary {
                cond: Box::new(cond),
                on_true: Box::new(on_true),
                on_false: Box::new(on_false),
            });
        }
        Ok(cond)
    }

    fn parse_bitor(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.parse_bitxor()?;
        while self.is_op("|") {
            self.bump();
            e = Expr::bin(AstBinOp::Or, e, self.parse_bitxor()?);
        }
        Ok(e)
    }

    fn parse_bitxor(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.parse_bitand()?;
        while self.is_op("^") {
            self.bump();
            e = Expr::bin(AstBinOp::Xor, e, self.parse_bitand()?);
        }
        Ok(e)
    }

    fn parse_bitand(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.parse_equality()?;
        while self.is_op("&") {
            self.bump();
            e = Expr::bin(AstBinOp::And, e, self.parse_equality()?);
        }
        Ok(e)
    }

    fn parse_equality(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.parse_rel()?;
        loop {
            let op = if self.is_op("==") {
                AstBinOp::Eq
            } else if self.is_op("!=") {
                AstBinOp::Ne
            } else {
                break;
            };
            self.bump();
            e = Expr::bin(op, e, self.parse_rel()?);
        }
        Ok(e)
    }

    fn parse_rel(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.parse_shift()?;
        loop {
            let op = if self.is_op("<") {
                AstBinOp::Lt
            } else if self.is_op("<=") {
                AstBinOp::Le
            } else if self.is_op(">") {
                AstBinOp::Gt
            } else if self.is_op(">=") {
                AstBinOp::Ge
            } else {
                break;
            };
            self.bump();
            e = Expr::bin(op, e, self.parse_shift()?);
        }
        Ok(e)
    }

    fn parse_shift(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.parse_additive()?;
        loop {
            let op = if self.is_op("<<") {
                AstBinOp::Shl
            } else if self.is_op(">>") {
                AstBinOp::Shr
            } else {
                break;
            };
            self.bump();
            e = Expr::bin(op, e, self.parse_additive()?);
        }
        Ok(e)
    }

    fn parse_additive(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.parse_mult()?;
        loop {
            let op = if self.is_op("+") {
                AstBinOp::Add
            } else if self.is_op("-") {
                AstBinOp::Sub
            } else {
                break;
            };
            self.bump();
            e = Expr::bin(op, e, self.parse_mult()?);
        }
        Ok(e)
    }

    fn parse_mult(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.parse_unary()?;
        loop {
            let op = if self.is_op("*") {
                AstBinOp::Mul
            } else if self.is_op("/") {
                AstBinOp::Div
            } else if self.is_op("%") {
                AstBinOp::Rem
            } else {
                break;
            };
            self.bump();
            e = Expr::bin(op, e, self.parse_unary()?);
        }
        Ok(e)
    }

    fn parse_unary(&mut self) -> Result<Expr, FrontendError> {
        let op = if self.is_op("-") {
            Some(AstUnOp::Neg)
        } else if self.is_op("!") {
            Some(AstUnOp::Not)
        } else if self.is_op("~") {
            Some(AstUnOp::BitNot)
        } else {
            None
        };
        if let Some(op) = op {
            self.bump();
            return Ok(Expr::Unary {
                op,
                expr: Box::new(self.parse_unary()?),
            });
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> Result<Expr, FrontendError> {
        match self.cur().tok.clone() {
            STok::Num(v) => {
                self.bump();
                Ok(Expr::Lit(v))
            }
            STok::Ident(s) => {
                if s == "true" || s == "false" {
                    self.bump();
                    return Ok(Expr::Bool(s == "true"));
                }
                if let Some(ty) = type_from_source_name(&s) {
                    // Gm cast syntax: int8(expr).
                    if self.dialect == Dialect::Gm {
                        self.bump();
                        self.expect_op("(")?;
                        let inner = self.parse_expr()?;
                        self.expect_op(")")?;
                        return Ok(Expr::Cast {
                            to: ty,
                            expr: Box::new(inner),
                        });
                    }
                    return Err(self.err("unexpected type name in expression"));
                }
                self.bump();
                if self.is_op("(") {
                    return Err(self.err("calls not permitted"));
                }
                Ok(Expr::Var(s))
            }
            STok::Op("(") => {
                self.bump();
                // Cm cast syntax: (int8) expr.
                if self.dialect == Dialect::Cm {
                    if let Some(ty) = self.peek_type() {
                        self.bump();
                        self.expect_op(")")?;
                        let inner = self.parse_unary()?;
                        return Ok(Expr::Cast {
                            to: ty,
                            expr: Box::new(inner),
                        });
                    }
                } else if self.peek_type().is_some() {
                    return Err(self.dialect_err(
                        "C-style cast '(type)' is a Cm construct; Gm casts are written type(expr)",
                    ));
                }
                let e = self.parse_expr()?;
                self.expect_op(")")?;
                Ok(e)
            }
            _ => Err(self.err("expected expression")),
        }
    }

    // --- Cm statements ---

    fn parse_cm_block(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        self.expect_op("{")?;
        let mut stmts = vec![];
        while !self.is_op("}") {
            stmts.push(self.parse_cm_stmt()?);
        }
        self.expect_op("}")?;
        Ok(stmts)
    }

    fn parse_cm_stmt(&mut self) -> Result<Stmt, FrontendError> {
        if self.is_ident("return") {
            self.bump();
            let e = self.parse_expr()?;
            self.expect_op(";")?;
            return Ok(Stmt::Return(e));
        }
        if self.is_ident("if") {
            self.bump();
            self.expect_op("(")?;
            let cond = self.parse_expr()?;
            self.expect_op(")")?;
            let then_body = self.parse_cm_block()?;
            let else_body = if self.is_ident("else") {
                self.bump();
                if self.is_ident("if") {
                    vec![self.parse_cm_stmt()?]
                } else {
                    self.parse_cm_block()?
                }
            } else {
                vec![]
            };
            return Ok(Stmt::If {
                cond,
                then_body,
                else_body,
            });
        }
        if self.is_ident("while") {
            self.bump();
            self.expect_op("(")?;
            let cond = self.parse_expr()?;
            self.expect_op(")")?;
            let body = self.parse_cm_block()?;
            return Ok(Stmt::While { cond, body });
        }
        if self.is_ident("for") {
            return Err(self.dialect_err("'for' loops are a Gm construct; Cm uses 'while'"));
        }
        if self.is_ident("var") {
            return Err(self.dialect_err("'var' declarations are a Gm construct"));
        }
        if let Some(ty) = self.peek_type() {
            self.bump();
            let name = self.expect_ident()?;
            self.expect_op("=")?;
            let init = self.parse_expr()?;
            self.expect_op(";")?;
            return Ok(Stmt::VarDecl { name, ty, init });
        }
        let name = self.expect_ident()?;
        self.expect_op("=")?;
        let value = self.parse_expr()?;
        self.expect_op(";")?;
        Ok(Stmt::Assign { name, value })
    }

    fn parse_cm_unit(&mut self) -> Result<SourceAst, FrontendError> {
        if self.is_ident("func") {
            return Err(self.dialect_err("'func' definitions are Gm syntax; Cm uses 'type name(...)'"));
        }
        let ret = self.expect_type()?;
        let name = self.expect_ident()?;
        self.expect_op("(")?;
        let mut params = vec![];
        if !self.is_op(")") {
            loop {
                let ty = self.expect_type()?;
                let pname = self.expect_ident()?;
                params.push((pname, ty));
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        self.expect_op(")")?;
        let body = self.parse_cm_block()?;
        if self.cur().tok != STok::Eof {
            return Err(self.err(
                "trailing input after function (exactly one function per compilation unit)",
            ));
        }
        Ok(SourceAst {
            name,
            params,
            ret,
            body,
        })
    }

    // --- Gm statements ---

    fn gm_stmt_end(&mut self) -> Result<(), FrontendError> {
        if self.eat_op(";") {
            return Ok(());
        }
        if self.is_op("}") || self.cur().newline_before || self.cur().tok == STok::Eof {
            return Ok(());
        }
        Err(self.err("expected newline, ';' or '}' after statement"))
    }

    fn parse_gm_block(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        self.expect_op("{")?;
        let mut stmts = vec![];
        loop {
            while self.eat_op(";") {}
            if self.is_op("}") {
                break;
            }
            stmts.push(self.parse_gm_stmt()?);
        }
        self.expect_op("}")?;
        Ok(stmts)
    }

    fn parse_gm_stmt(&mut self) -> Result<Stmt, FrontendError> {
        if self.is_ident("return") {
            self.bump();
            let e = self.parse_expr()?;
            self.gm_stmt_end()?;
            return Ok(Stmt::Return(e));
        }
        if self.is_ident("if") {
            self.bump();
            let cond = self.parse_expr()?;
            let then_body = self.parse_gm_block()?;
            let else_body = if self.is_ident("else") {
                self.bump();
                if self.is_ident("if") {
                    vec![self.parse_gm_stmt()?]
                } else {
                    self.parse_gm_block()?
                }
            } else {
                vec![]
            };
            return Ok(Stmt::If {
                cond,
                then_body,
                else_body,
            });
        }
        if self.is_ident("for") {
            self.bump();
            let cond = self.parse_expr()?;
            let body = self.parse_gm_block()?;
            return Ok(Stmt::While { cond, body });
        }
        if self.is_ident("while") {
            return Err(self.dialect_err("'while' loops are a Cm construct; Gm uses 'for'"));
        }
        if self.is_ident("var") {
            self.bump();
            let name = self.expect_ident()?;
            let ty = self.expect_type()?;
            self.expect_op("=")?;
            let init = self.parse_expr()?;
            self.gm_stmt_end()?;
            return Ok(Stmt::VarDecl { name, ty, init });
        }
        let name = self.expect_ident()?;
        if self.is_op(":=") {
            return Err(self.err("':=' requires an explicit type here; use 'var name type = expr'"));
        }
        self.expect_op("=")?;
        let value = self.parse_expr()?;
        self.gm_stmt_end()?;
        Ok(Stmt::Assign { name, value })
    }

    fn parse_gm_unit(&mut self) -> Result<SourceAst, FrontendError> {
        if self.peek_type().is_some() {
            return Err(
                self.dialect_err("'type name(...)' definitions are Cm syntax; Gm uses 'func'")
            );
        }
        self.expect_kw("func")?;
        let name = self.expect_ident()?;
        self.expect_op("(")?;
        let mut params = vec![];
        if !self.is_op(")") {
            loop {
                let pname = self.expect_ident()?;
                let ty = self.expect_type()?;
                params.push((pname, ty));
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        self.expect_op(")")?;
        let ret = self.expect_type()?;
        let body = self.parse_gm_block()?;
        while self.eat_op(";") {}
        if self.cur().tok != STok::Eof {
            return Err(self.err(
                "trailing input after function (exactly one function per compilation unit)",
            ));
        }
        Ok(SourceAst {
            name,
            params,
            ret,
            body,
        })
    }
}

/// Parse one function definition; the AST is additionally lowered once to
/// surface type and literal-range errors at parse time.
pub fn parse_source(text: &str, dialect: Dialect) -> Result<SourceAst, FrontendError> {
    let toks = lex_source(text)?;
    let mut p = SParser {
        toks,
        pos: 0,
        dialect,
    };
    let ast = match dialect {
        Dialect::Cm => p.parse_cm_unit()?,
        Dialect::Gm => p.parse_gm_unit()?,
    };
    // Literal-range and type errors are reported at parse time.
    lower_ast(&ast, dialect).map_err(|e| match e {
        FrontendError::Lowering(msg) => FrontendError::Parse {
            line: 1,
            col: 1,
            msg,
        },
        other => other,
    })?;
    Ok(ast)
}

// ---------------------------------------------------------------------------
// Lowering
// ---------------------------------------------------------------------------

struct FuncBuilder {
    blocks: Vec<Block>,
    cur_label: String,
    cur_params: Vec<(String, MirType)>,
    cur_instrs: Vec<Instr>,
    tmp: u32,
    label: u32,
}

impl FuncBuilder {
    fn new() -> Self {
        FuncBuilder {
            blocks: vec![],
            cur_label: "entry".into(),
            cur_params: vec![],
            cur_instrs: vec![],
            tmp: 0,
            label: 0,
        }
    }

    fn fresh_tmp(&mut self) -> String {
        self.tmp += 1;
        format!("t{}", self.tmp)
    }

    fn fresh_label(&mut self, hint: &str) -> String {
        self.label += 1;
        format!("{}{}", hint, self.label)
    }

    fn emit(&mut self, op: Op) -> Operand {
        let dest = self.fresh_tmp();
        self.cur_instrs.push(Instr {
            dest: dest.clone(),
            op,
        });
        Operand::Reg(dest)
    }

    fn terminate(&mut self, term: Terminator) {
        self.blocks.push(Block {
            label: std::mem::take(&mut self.cur_label),
            params: std::mem::take(&mut self.cur_params),
            instrs: std::mem::take(&mut self.cur_instrs),
            term,
        });
    }

    fn start_block(&mut self, label: String, params: Vec<(String, MirType)>) {
        self.cur_label = label;
        self.cur_params = params;
        self.cur_instrs = vec![];
    }
}

struct Lowerer {
    b: FuncBuilder,
    dialect: Dialect,
    // Lexically scoped mutable variables: (name, type, current SSA value).
    env: Vec<(String, MirType, Operand)>,
    ret: MirType,
}

type LowerResult<T> = Result<T, FrontendError>;

fn lower_err(msg: impl Into<String>) -> FrontendError {
    FrontendError::Lowering(msg.into())
}

impl Lowerer {
    fn lookup(&self, name: &str) -> LowerResult<(MirType, Operand)> {
        self.env
            .iter()
            .rev()
            .find(|(n, _, _)| n == name)
            .map(|(_, t, v)| (*t, v.clone()))
            .ok_or_else(|| lower_err(format!("undefined variable '{}'", name)))
    }

    fn assign(&mut self, name: &str, value: Operand) -> LowerResult<MirType> {
        for (n, t, v) in self.env.iter_mut().rev() {
            if n == name {
                *v = value;
                return Ok(*t);
            }
        }
        Err(lower_err(format!("assignment to undefined variable '{}'", name)))
    }

    /// Infer the type of an expression bottom-up where possible. Bare
    /// literals have no intrinsic type; context supplies it.
    fn infer(&self, e: &Expr) -> Option<MirType> {
        match e {
            Expr::Lit(_) => None,
            Expr::Bool(_) => Some(MirType::I1),
            Expr::Var(n) => self.lookup(n).ok().map(|(t, _)| t),
            Expr::Unary { op, expr } => match op {
                AstUnOp::Not => Some(MirType::I1),
                _ => self.infer(expr),
            },
            Expr::Bin { op, lhs, rhs } => {
                if op.is_comparison() {
                    Some(MirType::I1)
                } else {
                    self.infer(lhs).or_else(|| self.infer(rhs))
                }
            }
            Expr::Ternary {
                on_true, on_false, ..
            } => self.infer(on_true).or_else(|| self.infer(on_false)),
            Expr::Cast { to, .. } => Some(*to),
        }
    }

    fn check_literal(&self, v: i128, ty: MirType) -> LowerResult<u64> {
        // Cm accepts the full unsigned bit range; Gm insists on the signed
        // range and rejects overflowing literals.
        let lo = ty.min_signed() as i128;
        let hi = match self.dialect {
            Dialect::Cm => ty.mask() as i128,
            Dialect::Gm => ty.max_signed() as i128,
        };
        if v < lo || v > hi {
            return Err(lower_err(format!(
                "integer literal {} out of range for {}",
                v,
                type_to_source_name(ty)
            )));
        }
        Ok((v as u64) & ty.mask())
    }

    fn lower_expr(&mut self, e: &Expr, expected: MirType) -> LowerResult<Operand> {
        match e {
            Expr::Lit(v) => {
                if expected == MirType::I1 {
                    return Err(lower_err(format!(
                        "integer literal {} used where bool expected",
                        v
                    )));
                }
                let bits = self.check_literal(*v, expected)?;
                Ok(Operand::Const { ty: expected, bits })
            }
            Expr::Bool(b) => {
                if expected != MirType::I1 {
                    return Err(lower_err("bool literal used where integer expected"));
                }
                Ok(Operand::Const {
                    ty: MirType::I1,
                    bits: *b as u64,
                })
            }
            Expr::Var(n) => {
                let (ty, v) = self.lookup(n)?;
                if ty != expected {
                    return Err(lower_err(format!(
                        "variable '{}' has type {}, expected {} (mixed-width arithmetic requires an explicit cast)",
                        n,
                        type_to_source_name(ty),
                        type_to_source_name(expected)
                    )));
                }
                Ok(v)
            }
            Expr::Unary { op, expr } => match op {
                AstUnOp::Neg => {
                    let v = self.lower_expr(expr, expected)?;
                    if let Some((ty, bits)) = v.as_const() {
                        // Fold negated literals directly so `-128` style
                        // minimum values are expressible.
                        return Ok(Operand::Const {
                            ty,
                            bits: ty.from_signed(ty.to_signed(bits).wrapping_neg()),
                        });
                    }
                    Ok(self.b.emit(Op::Bin {
                        op: BinOp::Sub,
                        lhs: Operand::imm(expected, 0),
                        rhs: v,
                    }))
                }
                AstUnOp::Not => {
                    if expected != MirType::I1 {
                        return Err(lower_err("'!' produces bool"));
                    }
                    let v = self.lower_expr(expr, MirType::I1)?;
                    Ok(self.b.emit(Op::Icmp {
                        pred: CmpPred::Eq,
                        lhs: v,
                        rhs: Operand::imm(MirType::I1, 0),
                    }))
                }
                AstUnOp::BitNot => {
                    let v = self.lower_expr(expr, expected)?;
                    Ok(self.b.emit(Op::Bin {
                        op: BinOp::Xor,
                        lhs: v,
                        rhs: Operand::imm(expected, -1),
                    }))
                }
            },
            Expr::Bin { op, lhs, rhs } => {
                if let Some(pred) = op.comparison_pred() {
                    if expected != MirType::I1 {
                        return Err(lower_err(format!(
                            "comparison '{}' produces bool, expected {}",
                            op.token(),
                            type_to_source_name(expected)
                        )));
                    }
                    let opty = self
                        .infer(lhs)
                        .or_else(|| self.infer(rhs))
                        .ok_or_else(|| lower_err("cannot infer comparison operand type"))?;
                    let a = self.lower_expr(lhs, opty)?;
                    let b = self.lower_expr(rhs, opty)?;
                    return Ok(self.b.emit(Op::Icmp { pred, lhs: a, rhs: b }));
                }
                if expected == MirType::I1 {
                    // Bool-typed &, |, ^ over comparisons.
                    let mir = match op {
                        AstBinOp::And => BinOp::And,
                        AstBinOp::Or => BinOp::Or,
                        AstBinOp::Xor => BinOp::Xor,
                        _ => {
                            return Err(lower_err(format!(
                                "operator '{}' not defined on bool",
                                op.token()
                            )))
                        }
                    };
                    let a = self.lower_expr(lhs, MirType::I1)?;
                    let bb = self.lower_expr(rhs, MirType::I1)?;
                    // i1 values stay within {0,1}, so the bitwise op applies
                    // directly.
                    return Ok(self.b.emit(Op::Bin {
                        op: mir,
                        lhs: a,
                        rhs: bb,
                    }));
                }
                match op {
                    AstBinOp::Shl | AstBinOp::Shr => {
                        let value = self.lower_expr(lhs, expected)?;
                        let amount = self.lower_expr(rhs, expected)?;
                        self.lower_shift(*op, expected, value, amount)
                    }
                    AstBinOp::Div | AstBinOp::Rem => {
                        let a = self.lower_expr(lhs, expected)?;
                        let mut d = self.lower_expr(rhs, expected)?;
                        if self.dialect == Dialect::Gm {
                            d = self.b.emit(Op::Intrinsic {
                                name: INTRINSIC_GM_DIVCHECK.into(),
                                args: vec![d],
                            });
                        }
                        let mir = if *op == AstBinOp::Div {
                            BinOp::Sdiv
                        } else {
                            BinOp::Srem
                        };
                        Ok(self.b.emit(Op::Bin {
                            op: mir,
                            lhs: a,
                            rhs: d,
                        }))
                    }
                    _ => {
                        let mir = match op {
                            AstBinOp::Add => BinOp::Add,
                            AstBinOp::Sub => BinOp::Sub,
                            AstBinOp::Mul => BinOp::Mul,
                            AstBinOp::And => BinOp::And,
                            AstBinOp::Or => BinOp::Or,
                            AstBinOp::Xor => BinOp::Xor,
                            _ => unreachable!(),
                        };
                        let a = self.lower_expr(lhs, expected)?;
                        let bb = self.lower_expr(rhs, expected)?;
                        Ok(self.b.emit(Op::Bin {
                            op: mir,
                            lhs: a,
                            rhs: bb,
                        }))
                    }
                }
            }
            Expr::Ternary {
                cond,
                on_true,
                on_false,
            } => {
                let c = self.lower_expr(cond, MirType::I1)?;
                let t = self.lower_expr(on_true, expected)?;
                let f = self.lower_expr(on_false, expected)?;
                Ok(self.b.emit(Op::Select {
                    cond: c,
                    on_true: t,
                    on_false: f,
                }))
            }
            Expr::Cast { to, expr } => {
                if *to != expected {
                    return Err(lower_err(format!(
                        "cast to {} used where {} expected",
                        type_to_source_name(*to),
                        type_to_source_name(expected)
                    )));
                }
                let from = self
                    .infer(expr)
                    .ok_or_else(|| lower_err("cast applied to untyped literal"))?;
                let v = self.lower_expr(expr, from)?;
                if from == *to {
                    return Ok(v);
                }
                let kind = if to.width() > from.width() {
                    // Signed dialects widen with sign extension; from=i1
                    // (bool) widens with zext.
                    if from == MirType::I1 {
                        crate::mir::CastKind::Zext
                    } else {
                        crate::mir::CastKind::Sext
                    }
                } else {
                    crate::mir::CastKind::Trunc
                };
                Ok(self.b.emit(Op::Cast {
                    kind,
                    to: *to,
                    value: v,
                }))
            }
        }
    }

    fn lower_shift(
        &mut self,
        op: AstBinOp,
        ty: MirType,
        value: Operand,
        amount: Operand,
    ) -> LowerResult<Operand> {
        let mir = if op == AstBinOp::Shl {
            BinOp::Shl
        } else {
            BinOp::Ashr
        };
        match self.dialect {
            Dialect::Cm => {
                // Hardware-like: mask the amount by width-1.
                let masked = self.b.emit(Op::Bin {
                    op: BinOp::And,
                    lhs: amount,
                    rhs: Operand::imm(ty, (ty.width() - 1) as i64),
                });
                Ok(self.b.emit(Op::Bin {
                    op: mir,
                    lhs: value,
                    rhs: masked,
                }))
            }
            Dialect::Gm => {
                // Go-like: trap when the amount is out of range.
                let too_big = self.b.emit(Op::Icmp {
                    pred: CmpPred::Uge,
                    lhs: amount.clone(),
                    rhs: Operand::imm(ty, ty.width() as i64),
                });
                let trap_l = self.b.fresh_label("shifttrap");
                let ok_l = self.b.fresh_label("shiftok");
                let env_snapshot = self.snapshot_env();
                self.b.terminate(Terminator::CondBr {
                    cond: too_big,
                    on_true: BranchTarget {
                        label: trap_l.clone(),
                        args: vec![],
                    },
                    on_false: BranchTarget {
                        label: ok_l.clone(),
                        args: vec![],
                    },
                });
                self.b.start_block(trap_l, vec![]);
                self.b.terminate(Terminator::Trap);
                self.b.start_block(ok_l, vec![]);
                self.restore_env(env_snapshot);
                Ok(self.b.emit(Op::Bin {
                    op: mir,
                    lhs: value,
                    rhs: amount,
                }))
            }
        }
    }

    fn snapshot_env(&self) -> Vec<(String, MirType, Operand)> {
        self.env.clone()
    }

    fn restore_env(&mut self, env: Vec<(String, MirType, Operand)>) {
        self.env = env;
    }

    /// Returns true if the statement list terminated (all paths returned or
    /// trapped).
    fn lower_stmts(&mut self, stmts: &[Stmt]) -> LowerResult<bool> {
        let scope_depth = self.env.len();
        for (i, s) in stmts.iter().enumerate() {
            if self.lower_stmt(s)? {
                if i + 1 != stmts.len() {
                    return Err(lower_err("unreachable statements after return"));
                }
                self.env.truncate(scope_depth);
                return Ok(true);
            }
        }
        self.env.truncate(scope_depth);
        Ok(false)
    }

    fn lower_stmt(&mut self, s: &Stmt) -> LowerResult<bool> {
        match s {
            Stmt::VarDecl { name, ty, init } => {
                if self.env.iter().any(|(n, _, _)| n == name) {
                    return Err(lower_err(format!(
                        "redeclaration of variable '{}' (shadowing is not supported)",
                        name
                    )));
                }
                let v = self.lower_expr(init, *ty)?;
                self.env.push((name.clone(), *ty, v));
                Ok(false)
            }
            Stmt::Assign { name, value } => {
                let (ty, _) = self.lookup(name)?;
                let v = self.lower_expr(value, ty)?;
                self.assign(name, v)?;
                Ok(false)
            }
            Stmt::Return(e) => {
                let v = self.lower_expr(e, self.ret)?;
                self.b.terminate(Terminator::Ret(v));
                Ok(true)
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                let c = self.lower_expr(cond, MirType::I1)?;
                let then_l = self.b.fresh_label("then");
                let else_l = self.b.fresh_label("else");
                let join_l = self.b.fresh_label("join");
                self.b.terminate(Terminator::CondBr {
                    cond: c,
                    on_true: BranchTarget {
                        label: then_l.clone(),
                        args: vec![],
                    },
                    on_false: BranchTarget {
                        label: else_l.clone(),
                        args: vec![],
                    },
                });
                let pre_env = self.snapshot_env();

                self.b.start_block(then_l, vec![]);
                let then_term = self.lower_stmts(then_body)?;
                let then_env = self.snapshot_env();
                let then_exit = if !then_term {
                    Some(self.current_env_values(&pre_env))
                } else {
                    None
                };
                if !then_term {
                    // Terminator filled in once join params are known.
                }

                // Park the unterminated then block; we need the env values
                // at its end to branch to the join.
                let join_params: Vec<(String, MirType)> = pre_env
                    .iter()
                    .map(|(n, t, _)| (format!("{}_j{}", n, self.b.label), *t))
                    .collect();
                if let Some(vals) = &then_exit {
                    self.b.terminate(Terminator::Br(BranchTarget {
                        label: join_l.clone(),
                        args: vals.clone(),
                    }));
                }
                let _ = then_env;

                self.restore_env(pre_env.clone());
                self.b.start_block(else_l, vec![]);
                let else_term = self.lower_stmts(else_body)?;
                let else_exit = if !else_term {
                    Some(self.current_env_values(&pre_env))
                } else {
                    None
                };
                if let Some(vals) = &else_exit {
                    self.b.terminate(Terminator::Br(BranchTarget {
                        label: join_l.clone(),
                        args: vals.clone(),
                    }));
                }

                if then_exit.is_none() && else_exit.is_none() {
                    // Both arms returned; no join block.
                    return Ok(true);
                }
                self.b.start_block(join_l, join_params.clone());
                // Rebind the environment to the join parameters.
                let mut new_env = vec![];
                for ((n, t, _), (p, _)) in pre_env.iter().zip(&join_params) {
                    new_env.push((n.clone(), *t, Operand::Reg(p.clone())));
                }
                self.restore_env(new_env);
                Ok(false)
            }
            Stmt::While { cond, body } => {
                let pre_env = self.snapshot_env();
                let head_l = self.b.fresh_label("head");
                let body_l = self.b.fresh_label("body");
                let exit_l = self.b.fresh_label("exit");
                let head_params: Vec<(String, MirType)> = pre_env
                    .iter()
                    .map(|(n, t, _)| (format!("{}_h{}", n, self.b.label), *t))
                    .collect();
                let entry_vals = self.current_env_values(&pre_env);
                self.b.terminate(Terminator::Br(BranchTarget {
                    label: head_l.clone(),
                    args: entry_vals,
                }));
                self.b.start_block(head_l.clone(), head_params.clone());
                let mut head_env = vec![];
                for ((n, t, _), (p, _)) in pre_env.iter().zip(&head_params) {
                    head_env.push((n.clone(), *t, Operand::Reg(p.clone())));
                }
                self.restore_env(head_env.clone());
                let c = self.lower_expr(cond, MirType::I1)?;
                self.b.terminate(Terminator::CondBr {
                    cond: c,
                    on_true: BranchTarget {
                        label: body_l.clone(),
                        args: vec![],
                    },
                    on_false: BranchTarget {
                        label: exit_l.clone(),
                        args: vec![],
                    },
                });
                self.b.start_block(body_l, vec![]);
                // The condition may itself have produced new blocks (Gm
                // shift guards), so re-anchor the env to the head params.
                self.restore_env(head_env.clone());
                let body_term = self.lower_stmts(body)?;
                if !body_term {
                    let back_vals = self.current_env_values(&head_env);
                    self.b.terminate(Terminator::Br(BranchTarget {
                        label: head_l,
                        args: back_vals,
                    }));
                }
                self.b.start_block(exit_l, vec![]);
                self.restore_env(head_env);
                Ok(false)
            }
        }
    }

    fn current_env_values(&self, shape: &[(String, MirType, Operand)]) -> Vec<Operand> {
        shape
            .iter()
            .map(|(n, _, _)| {
                self.env
                    .iter()
                    .rev()
                    .find(|(en, _, _)| en == n)
                    .map(|(_, _, v)| v.clone())
                    .expect("env shape preserved")
            })
            .collect()
    }
}

/// Lower a parsed AST to a validated MIR function.
pub fn lower_ast(ast: &SourceAst, dialect: Dialect) -> Result<Function, FrontendError> {
    let mut lw = Lowerer {
        b: FuncBuilder::new(),
        dialect,
        env: vec![],
        ret: ast.ret,
    };
    for (name, ty) in &ast.params {
        lw.env
            .push((name.clone(), *ty, Operand::Reg(name.clone())));
    }
    let terminated = lw.lower_stmts(&ast.body)?;
    if !terminated {
        return Err(lower_err("not all control paths return a value"));
    }
    let f = Function {
        name: ast.name.clone(),
        params: ast.params.clone(),
        ret: ast.ret,
        blocks: lw.b.blocks,
        dialect: dialect.tag(),
    };
    let diags = crate::mir::validate_function(&f);
    if !diags.is_empty() {
        return Err(lower_err(format!(
            "internal: lowering produced invalid MIR: {}",
            diags[0]
        )));
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Printers (used by the mock provider and fixture tooling)
// ---------------------------------------------------------------------------

fn print_expr(e: &Expr, dialect: Dialect, out: &mut String) -> Result<(), FrontendError> {
    match e {
        Expr::Lit(v) => out.push_str(&v.to_string()),
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Var(n) => out.push_str(n),
        Expr::Unary { op, expr } => {
            out.push_str(match op {
                AstUnOp::Neg => "-",
                AstUnOp::Not => "!",
                AstUnOp::BitNot => "~",
            });
            out.push('(');
            print_expr(expr, dialect, out)?;
            out.push(')');
        }
        Expr::Bin { op, lhs, rhs } => {
            out.push('(');
            print_expr(lhs, dialect, out)?;
            out.push(' ');
            out.push_str(op.token());
            out.push(' ');
            print_expr(rhs, dialect, out)?;
            out.push(')');
        }
        Expr::Ternary {
            cond,
            on_true,
            on_false,
        } => {
            if dialect == Dialect::Gm {
                return Err(lower_err(
                    "ternary conditional cannot be rendered in Gm",
                ));
            }
            out.push('(');
            print_expr(cond, dialect, out)?;
            out.push_str(" ? ");
            print_expr(on_true, dialect, out)?;
            out.push_str(" : ");
            print_expr(on_false, dialect, out)?;
            out.push(')');
        }
        Expr::Cast { to, expr } => match dialect {
            Dialect::Cm => {
                out.push('(');
                out.push_str(type_to_source_name(*to));
                out.push_str(") (");
                print_expr(expr, dialect, out)?;
                out.push(')');
            }
            Dialect::Gm => {
                out.push_str(type_to_source_name(*to));
                out.push('(');
                print_expr(expr, dialect, out)?;
                out.push(')');
            }
        },
    }
    Ok(())
}

fn print_stmts(
    stmts: &[Stmt],
    dialect: Dialect,
    indent: usize,
    out: &mut String,
) -> Result<(), FrontendError> {
    let pad = "    ".repeat(indent);
    for s in stmts {
        out.push_str(&pad);
        match s {
            Stmt::VarDecl { name, ty, init } => {
                match dialect {
                    Dialect::Cm => {
                        out.push_str(type_to_source_name(*ty));
                        out.push(' ');
                        out.push_str(name);
                    }
                    Dialect::Gm => {
                        out.push_str("var ");
                        out.push_str(name);
                        out.push(' ');
                        out.push_str(type_to_source_name(*ty));
                    }
                }
                out.push_str(" = ");
                print_expr(init, dialect, out)?;
                if dialect == Dialect::Cm {
                    out.push(';');
                }
                out.push('\n');
            }
            Stmt::Assign { name, value } => {
                out.push_str(name);
                out.push_str(" = ");
                print_expr(value, dialect, out)?;
                if dialect == Dialect::Cm {
                    out.push(';');
                }
                out.push('\n');
            }
            Stmt::Return(e) => {
                out.push_str("return ");
                print_expr(e, dialect, out)?;
                if dialect == Dialect::Cm {
                    out.push(';');
                }
                out.push('\n');
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                out.push_str("if ");
                if dialect == Dialect::Cm {
                    out.push('(');
                }
                print_expr(cond, dialect, out)?;
                if dialect == Dialect::Cm {
                    out.push(')');
                }
                out.push_str(" {\n");
                print_stmts(then_body, dialect, indent + 1, out)?;
                out.push_str(&pad);
                out.push('}');
                if !else_body.is_empty() {
                    out.push_str(" else {\n");
                    print_stmts(else_body, dialect, indent + 1, out)?;
                    out.push_str(&pad);
                    out.push('}');
                }
                out.push('\n');
            }
            Stmt::While { cond, body } => {
                match dialect {
                    Dialect::Cm => {
                        out.push_str("while (");
                        print_expr(cond, dialect, out)?;
                        out.push(')');
                    }
                    Dialect::Gm => {
                        out.push_str("for ");
                        print_expr(cond, dialect, out)?;
                    }
                }
                out.push_str(" {\n");
                print_stmts(body, dialect, indent + 1, out)?;
                out.push_str(&pad);
                out.push_str("}\n");
            }
        }
    }
    Ok(())
}

/// Render an AST as source text in the given dialect. Fails if the AST uses
/// a construct the dialect cannot express (a ternary in Gm).
pub fn print_source(ast: &SourceAst, dialect: Dialect) -> Result<String, FrontendError> {
    let mut out = String::new();
    match dialect {
        Dialect::Cm => {
            out.push_str(type_to_source_name(ast.ret));
            out.push(' ');
            out.push_str(&ast.name);
            out.push('(');
            for (i, (n, t)) in ast.params.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(type_to_source_name(*t));
                out.push(' ');
                out.push_str(n);
            }
            out.push_str(") {\n");
        }
        Dialect::Gm => {
            out.push_str("func ");
            out.push_str(&ast.name);
            out.push('(');
            for (i, (n, t)) in ast.params.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(n);
                out.push(' ');
                out.push_str(type_to_source_name(*t));
            }
            out.push_str(") ");
            out.push_str(type_to_source_name(ast.ret));
            out.push_str(" {\n");
        }
    }
    print_stmts(&ast.body, dialect, 1, &mut out)?;
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{eval_mir, Outcome, DEFAULT_FUEL};

    const NZ_CM: &str = "int16 nz(int16 x) { return (x != 0) ? -1 : 0; }";
    const NZ_GM: &str = "func nz(x int16) int16 { if x != 0 { return -1 }; return 0 }";

    #[test]
    fn parses_cm_nz() {
        let ast = parse_source(NZ_CM, Dialect::Cm).unwrap();
        assert_eq!(ast.name, "nz");
        assert!(matches!(ast.body[0], Stmt::Return(Expr::Ternary { .. })));
    }

    #[test]
    fn parses_gm_nz() {
        let ast = parse_source(NZ_GM, Dialect::Gm).unwrap();
        assert_eq!(ast.name, "nz");
        assert!(matches!(ast.body[0], Stmt::If { .. }));
    }

    #[test]
    fn cm_text_fails_in_gm() {
        assert!(matches!(
            parse_source(NZ_CM, Dialect::Gm),
            Err(FrontendError::Dialect { .. })
        ));
    }

    #[test]
    fn gm_text_fails_in_cm() {
        assert!(matches!(
            parse_source(NZ_GM, Dialect::Cm),
            Err(FrontendError::Dialect { .. })
        ));
    }

    #[test]
    fn ternary_rejected_in_gm() {
        let src = "func nz(x int16) int16 { return (x != 0) ? -1 : 0 }";
        assert!(matches!(
            parse_source(src, Dialect::Gm),
            Err(FrontendError::Dialect { .. })
        ));
    }

    #[test]
    fn calls_not_permitted() {
        let src = "int16 f(int16 x) { return helper(x); }";
        let err = parse_source(src, Dialect::Cm).unwrap_err();
        match err {
            FrontendError::Parse { msg, .. } => assert!(msg.contains("calls not permitted")),
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn cm_nz_lowers_to_select() {
        let ast = parse_source(NZ_CM, Dialect::Cm).unwrap();
        let f = lower_ast(&ast, Dialect::Cm).unwrap();
        let text = crate::mir::print_mir(&f);
        assert!(text.contains("icmp.ne"));
        assert!(text.contains("select"));
        assert_eq!(f.dialect, DialectTag::Cm);
    }

    #[test]
    fn gm_nz_lowers_to_condbr() {
        let ast = parse_source(NZ_GM, Dialect::Gm).unwrap();
        let f = lower_ast(&ast, Dialect::Gm).unwrap();
        let text = crate::mir::print_mir(&f);
        assert!(text.contains("icmp.ne"));
        assert!(text.contains("condbr"));
        assert!(!text.contains("select"));
    }

    #[test]
    fn lowered_pair_agrees_on_samples() {
        let fc = lower_ast(&parse_source(NZ_CM, Dialect::Cm).unwrap(), Dialect::Cm).unwrap();
        let fg = lower_ast(&parse_source(NZ_GM, Dialect::Gm).unwrap(), Dialect::Gm).unwrap();
        for x in [-32768i64, -5, -1, 0, 1, 2, 32767] {
            assert_eq!(
                eval_mir(&fc, &[x], DEFAULT_FUEL).unwrap(),
                eval_mir(&fg, &[x], DEFAULT_FUEL).unwrap(),
                "x={}",
                x
            );
        }
        assert_eq!(
            eval_mir(&fc, &[5], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I16, -1)
        );
    }

    #[test]
    fn gm_division_emits_divcheck() {
        let src = "func f(x int8, y int8) int8 { return x / y }";
        let f = lower_ast(&parse_source(src, Dialect::Gm).unwrap(), Dialect::Gm).unwrap();
        assert!(crate::mir::print_mir(&f).contains("intrinsic.gm.divcheck"));
    }

    #[test]
    fn cm_division_has_no_divcheck() {
        let src = "int8 f(int8 x, int8 y) { return x / y; }";
        let f = lower_ast(&parse_source(src, Dialect::Cm).unwrap(), Dialect::Cm).unwrap();
        assert!(!crate::mir::print_mir(&f).contains("divcheck"));
    }

    #[test]
    fn shift_semantics_diverge_between_dialects() {
        let cm = "int8 f(int8 x, int8 s) { return x << s; }";
        let gm = "func f(x int8, s int8) int8 { return x << s }";
        let fc = lower_ast(&parse_source(cm, Dialect::Cm).unwrap(), Dialect::Cm).unwrap();
        let fg = lower_ast(&parse_source(gm, Dialect::Gm).unwrap(), Dialect::Gm).unwrap();
        // In-range shifts agree.
        assert_eq!(
            eval_mir(&fc, &[3, 2], DEFAULT_FUEL).unwrap(),
            eval_mir(&fg, &[3, 2], DEFAULT_FUEL).unwrap()
        );
        // Oversized amount: Cm masks (9 & 7 == 1), Gm traps.
        assert_eq!(
            eval_mir(&fc, &[1, 9], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 2)
        );
        assert!(matches!(
            eval_mir(&fg, &[1, 9], DEFAULT_FUEL).unwrap(),
            Outcome::Trap(_)
        ));
    }

    #[test]
    fn gm_rejects_out_of_range_literal() {
        let src = "func f(x int8) int8 { return x & 255 }";
        assert!(parse_source(src, Dialect::Gm).is_err());
        // Cm accepts the full unsigned range.
        let src_cm = "int8 f(int8 x) { return x & 255; }";
        assert!(parse_source(src_cm, Dialect::Cm).is_ok());
    }

    #[test]
    fn loop_lowering_works() {
        let src = "int8 sum(int8 n) { int8 i = 0; int8 acc = 0; while (i < n) { acc = acc + i; i = i + 1; } return acc; }";
        let f = lower_ast(&parse_source(src, Dialect::Cm).unwrap(), Dialect::Cm).unwrap();
        assert_eq!(
            eval_mir(&f, &[10], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 45)
        );
    }

    #[test]
    fn gm_loop_lowering_works() {
        let src = "func sum(n int8) int8 {\n var i int8 = 0\n var acc int8 = 0\n for i < n {\n  acc = acc + i\n  i = i + 1\n }\n return acc\n}";
        let f = lower_ast(&parse_source(src, Dialect::Gm).unwrap(), Dialect::Gm).unwrap();
        assert_eq!(
            eval_mir(&f, &[10], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 45)
        );
    }

    #[test]
    fn cast_lowering_round_trip() {
        let cm = "int16 f(int16 x) { if ((int8) x != 0) { return 1; } return 0; }";
        let f = lower_ast(&parse_source(cm, Dialect::Cm).unwrap(), Dialect::Cm).unwrap();
        assert!(crate::mir::print_mir(&f).contains("trunc.i8"));
        assert_eq!(
            eval_mir(&f, &[256], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I16, 0)
        );
        assert_eq!(
            eval_mir(&f, &[257], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I16, 1)
        );
    }

    #[test]
    fn print_source_round_trips_both_dialects() {
        for (src, d) in [(NZ_CM, Dialect::Cm), (NZ_GM, Dialect::Gm)] {
            let ast = parse_source(src, d).unwrap();
            let printed = print_source(&ast, d).unwrap();
            let ast2 = parse_source(&printed, d).unwrap();
            assert_eq!(ast, ast2, "round trip in {}", d.name());
        }
    }

    #[test]
    fn missing_return_rejected() {
        let src = "int8 f(int8 x) { if (x > 0) { return 1; } }";
        assert!(parse_source(src, Dialect::Cm).is_err());
    }

    #[test]
    fn early_return_in_branch() {
        let src = "int8 f(int8 x) { if (x > 0) { return 1; } else { return -1; } }";
        let f = lower_ast(&parse_source(src, Dialect::Cm).unwrap(), Dialect::Cm).unwrap();
        assert_eq!(
            eval_mir(&f, &[5], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 1)
        );
        assert_eq!(
            eval_mir(&f, &[-5], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, -1)
        );
    }
}
