// SPDX-License-Identifier: Apache-2.0

//! Variant generation. A provider receives a prompt containing the reference
//! implementation and returns candidate substitutes as fenced code blocks.
//!
//! Two providers exist: an HTTP chat-completion client, and a deterministic
//! seeded mock that rewrites the reference AST. The mock exists so the whole
//! pipeline (including its failure modes — a fraction of mock variants are
//! deliberately corrupted) runs reproducibly offline.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontends::{parse_source, print_source, Dialect, Expr, SourceAst, Stmt};
use crate::frontends::{AstBinOp, AstUnOp};
use crate::mir::MirType;

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_N_VARIANTS: usize = 10;
pub const TOKEN_ENV_VAR: &str = "NV_PROVIDER_TOKEN";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    /// Deterministic offline provider.
    Mock { seed: u64 },
    /// OpenAI-style chat-completion endpoint. The bearer token is read from
    /// the `NV_PROVIDER_TOKEN` environment variable, never from config.
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default = "default_retries")]
        retries: u32,
    },
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversifyRequest {
    pub reference_source: String,
    pub in_dialect: Dialect,
    pub out_dialect: Dialect,
    pub n_variants: usize,
    pub temperature: f64,
}

impl DiversifyRequest {
    pub fn new(reference_source: impl Into<String>, in_dialect: Dialect) -> DiversifyRequest {
        DiversifyRequest {
            reference_source: reference_source.into(),
            in_dialect,
            out_dialect: in_dialect,
            n_variants: DEFAULT_N_VARIANTS,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSource {
    pub index: usize,
    pub dialect: Dialect,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum DiversifyError {
    #[error("reference does not parse: {0}")]
    BadReference(String),
    #[error("provider request failed: {0}")]
    Transport(String),
    #[error("provider response malformed: {0}")]
    BadResponse(String),
}

/// The instruction given to the provider, with the reference inlined. The
/// cross-dialect clause is present only when the output language differs.
pub fn build_prompt(req: &DiversifyRequest) -> String {
    let mut p = format!(
        "The following code is a reference implementation of a function in {}.\n\n{}\n\nCreate {} substitute implementation(s) of the function",
        req.in_dialect.display(),
        req.reference_source.trim_end(),
        req.n_variants
    );
    if req.out_dialect != req.in_dialect {
        p.push_str(&format!(" in the {} language", req.out_dialect.display()));
    }
    p.push_str(
        ", which are different but equivalent. It should be possible to directly replace the function with any substitute, and it should provide the same functionality. Do not output any other text apart from code. Do not create auxiliary or helper functions. Maintain the original function's signature.",
    );
    p
}

/// Extract candidate sources from a provider response: fenced code blocks
/// when present, otherwise blank-line separated chunks.
pub fn parse_variants(response: &str) -> Vec<String> {
    let mut out = Vec::new();
    if response.contains("```") {
        let mut in_block = false;
        let mut cur = String::new();
        for line in response.lines() {
            if line.trim_start().starts_with("```") {
                if in_block {
                    if !cur.trim().is_empty() {
                        out.push(cur.trim_end().to_string() + "\n");
                    }
                    cur.clear();
                }
                in_block = !in_block;
                continue;
            }
            if in_block {
                cur.push_str(line);
                cur.push('\n');
            }
        }
        return out;
    }
    response
        .split("\n\n")
        .map(|c| c.trim())
        .filter(|c| !c.is_empty())
        .map(|c| c.to_string() + "\n")
        .collect()
}

/// Ask the provider for variants and parse its response.
pub fn request_variants(
    provider: &ProviderConfig,
    req: &DiversifyRequest,
) -> Result<Vec<VariantSource>, DiversifyError> {
    let prompt = build_prompt(req);
    let response = match provider {
        ProviderConfig::Mock { seed } => mock_response(*seed, req)?,
        ProviderConfig::Http {
            endpoint,
            model,
            timeout_secs,
            retries,
        } => http_complete(endpoint, model, req.temperature, *timeout_secs, *retries, &prompt)?,
    };
    let texts = parse_variants(&response);
    if texts.is_empty() {
        return Err(DiversifyError::BadResponse("no code blocks in response".into()));
    }
    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| VariantSource {
            index: i + 1,
            dialect: req.out_dialect,
            text,
        })
        .collect())
}

fn http_complete(
    endpoint: &str,
    model: &str,
    temperature: f64,
    timeout_secs: u64,
    retries: u32,
    prompt: &str,
) -> Result<String, DiversifyError> {
    let token = std::env::var(TOKEN_ENV_VAR)
        .map_err(|_| DiversifyError::Transport(format!("{} is not set", TOKEN_ENV_VAR)))?;
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .build()
        .map_err(|e| DiversifyError::Transport(e.to_string()))?;
    let body = serde_json::json!({
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": temperature,
    });
    let mut last_err = String::new();
    for attempt in 0..=retries {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(500 * (1 << (attempt - 1))));
        }
        let resp = client
            .post(endpoint)
            .bearer_auth(&token)
            .json(&body)
            .send();
        match resp {
            Ok(r) if r.status().is_success() => {
                let v: serde_json::Value =
                    r.json().map_err(|e| DiversifyError::BadResponse(e.to_string()))?;
                return v["choices"][0]["message"]["content"]
                    .as_str()
                    .map(|s| s.to_string())
                    .ok_or_else(|| {
                        DiversifyError::BadResponse("missing choices[0].message.content".into())
                    });
            }
            Ok(r) => last_err = format!("status {}", r.status()),
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(DiversifyError::Transport(last_err))
}

// ---------------------------------------------------------------------------
// Mock provider
// ---------------------------------------------------------------------------

/// Upper bound on deliberately corrupted variants per batch: one in five,
/// at least room for one.
fn corruption_cap(n: usize) -> usize {
    n.div_ceil(5).min(2)
}

/// Produce a full chat-style response: one fenced code block per variant.
///
/// Every variant is first normalized (source-level constant folding, mul-3
/// and truncate-compare rewrites) and then perturbed by one to three seeded
/// rewrites. A seeded minority of variants additionally receives an
/// off-by-one corruption so the downstream funnel has something to reject.
pub fn mock_response(seed: u64, req: &DiversifyRequest) -> Result<String, DiversifyError> {
    let ast = parse_source(&req.reference_source, req.in_dialect)
        .map_err(|e| DiversifyError::BadReference(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    let mut corrupted = 0usize;
    for _ in 0..req.n_variants {
        let mut v = ast.clone();
        normalize(&mut v);
        if req.out_dialect == Dialect::Gm {
            eliminate_return_ternaries(&mut v.body);
        }
        let rewrites = rng.gen_range(1..=3);
        for _ in 0..rewrites {
            apply_random_rewrite(&mut v, req.out_dialect, &mut rng);
        }
        if corrupted < corruption_cap(req.n_variants) && rng.gen_ratio(1, 10) {
            corrupt_off_by_one(&mut v.body);
            corrupted += 1;
        }
        let text = print_source(&v, req.out_dialect)
            .map_err(|e| DiversifyError::BadResponse(e.to_string()))?;
        out.push_str("```\n");
        out.push_str(&text);
        out.push_str("```\n\n");
    }
    Ok(out)
}

/// Source-level canonicalization applied to every mock variant. Models the
/// input sensitivity of real generators: the emitted code avoids the exact
/// shapes the reference uses, even when semantically identical.
fn normalize(ast: &mut SourceAst) {
    let narrow_ok = ast.params.iter().all(|(_, t)| t.width() > 8);
    for s in &mut ast.body {
        visit_exprs_mut(s, &mut |e| {
            fold_consts(e);
            split_mul3(e);
            if narrow_ok {
                widen_trunc_compare(e);
            }
        });
    }
}

fn visit_exprs_mut(s: &mut Stmt, f: &mut impl FnMut(&mut Expr)) {
    match s {
        Stmt::VarDecl { init: e, .. } | Stmt::Assign { value: e, .. } | Stmt::Return(e) => {
            visit_expr_mut(e, f)
        }
        Stmt::If {
            cond,
            then_body,
            else_body,
        } => {
            visit_expr_mut(cond, f);
            for s in then_body.iter_mut().chain(else_body.iter_mut()) {
                visit_exprs_mut(s, f);
            }
        }
        Stmt::While { cond, body } => {
            visit_expr_mut(cond, f);
            for s in body {
                visit_exprs_mut(s, f);
            }
        }
    }
}

fn visit_expr_mut(e: &mut Expr, f: &mut impl FnMut(&mut Expr)) {
    match e {
        Expr::Lit(_) | Expr::Bool(_) | Expr::Var(_) => {}
        Expr::Unary { expr, .. } | Expr::Cast { expr, .. } => visit_expr_mut(expr, f),
        Expr::Bin { lhs, rhs, .. } => {
            visit_expr_mut(lhs, f);
            visit_expr_mut(rhs, f);
        }
        Expr::Ternary {
            cond,
            on_true,
            on_false,
        } => {
            visit_expr_mut(cond, f);
            visit_expr_mut(on_true, f);
            visit_expr_mut(on_false, f);
        }
    }
    f(e);
}

/// Fold literal arithmetic bottom-up (children are visited first).
fn fold_consts(e: &mut Expr) {
    let folded: Option<i128> = match e {
        Expr::Unary {
            op: AstUnOp::Neg,
            expr,
        } => match expr.as_ref() {
            Expr::Lit(v) => Some(-*v),
            _ => None,
        },
        Expr::Bin { op, lhs, rhs } => match (lhs.as_ref(), rhs.as_ref()) {
            (Expr::Lit(a), Expr::Lit(b)) => match op {
                AstBinOp::Add => Some(a + b),
                AstBinOp::Sub => Some(a - b),
                AstBinOp::Mul => Some(a * b),
                AstBinOp::Div if *b != 0 => Some(a / b),
                AstBinOp::Rem if *b != 0 => Some(a % b),
                AstBinOp::And => Some(a & b),
                AstBinOp::Or => Some(a | b),
                AstBinOp::Xor => Some(a ^ b),
                _ => None,
            },
            _ => None,
        },
        _ => None,
    };
    if let Some(v) = folded {
        *e = Expr::Lit(v);
    }
}

/// x * 3 (either side) becomes (x << 1) + x.
fn split_mul3(e: &mut Expr) {
    if let Expr::Bin {
        op: AstBinOp::Mul,
        lhs,
        rhs,
    } = e
    {
        let other = if matches!(rhs.as_ref(), Expr::Lit(3)) {
            Some(lhs.as_ref().clone())
        } else if matches!(lhs.as_ref(), Expr::Lit(3)) {
            Some(rhs.as_ref().clone())
        } else {
            None
        };
        if let Some(x) = other {
            *e = Expr::bin(
                AstBinOp::Add,
                Expr::bin(AstBinOp::Shl, x.clone(), Expr::Lit(1)),
                x,
            );
        }
    }
}

/// `int8(x) == k` against a literal becomes `(x & 255) == (k & 255)`,
/// comparing at the wider type. Only applied when all parameters are wider
/// than the cast target, so the mask literal stays in range.
fn widen_trunc_compare(e: &mut Expr) {
    let Expr::Bin { op, lhs, rhs } = e else {
        return;
    };
    if !matches!(op, AstBinOp::Eq | AstBinOp::Ne) {
        return;
    }
    let (cast_side, lit_side) = match (lhs.as_ref(), rhs.as_ref()) {
        (Expr::Cast { .. }, Expr::Lit(_)) => (lhs.as_ref().clone(), rhs.as_ref().clone()),
        (Expr::Lit(_), Expr::Cast { .. }) => (rhs.as_ref().clone(), lhs.as_ref().clone()),
        _ => return,
    };
    let (Expr::Cast { to, expr }, Expr::Lit(k)) = (cast_side, lit_side) else {
        return;
    };
    if to != MirType::I8 {
        return;
    }
    let mask = 0xff_i128;
    *e = Expr::bin(
        *op,
        Expr::bin(AstBinOp::And, expr.as_ref().clone(), Expr::Lit(mask)),
        Expr::Lit(k & mask),
    );
}

// --- seeded rewrites -------------------------------------------------------

fn apply_random_rewrite(ast: &mut SourceAst, out_dialect: Dialect, rng: &mut ChaCha8Rng) {
    // Try rules in a seeded rotation until one applies; every AST accepts at
    // least the redundant-identity rule.
    let start = rng.gen_range(0..5u32);
    for off in 0..5 {
        let applied = match (start + off) % 5 {
            0 => rewrite_commute(&mut ast.body),
            1 => rewrite_flip_ternary(&mut ast.body),
            2 => rewrite_ternary_if(&mut ast.body, out_dialect, rng),
            3 => rewrite_mul2_shl(&mut ast.body),
            4 => rewrite_redundant_identity(&mut ast.body, rng),
            _ => unreachable!(),
        };
        if applied {
            return;
        }
    }
}

fn first_expr_mut(body: &mut [Stmt], pred: &mut impl FnMut(&mut Expr) -> bool) -> bool {
    for s in body {
        let mut hit = false;
        visit_exprs_mut(s, &mut |e| {
            if !hit && pred(e) {
                hit = true;
            }
        });
        if hit {
            return true;
        }
    }
    false
}

/// Swap the operands of the first commutative binary expression.
fn rewrite_commute(body: &mut [Stmt]) -> bool {
    first_expr_mut(body, &mut |e| {
        if let Expr::Bin { op, lhs, rhs } = e {
            if (op.is_commutative() || matches!(op, AstBinOp::Eq | AstBinOp::Ne))
                && lhs != rhs
            {
                std::mem::swap(lhs, rhs);
                return true;
            }
        }
        false
    })
}

/// `c ? a : b` becomes `!c ? b : a`.
fn rewrite_flip_ternary(body: &mut [Stmt]) -> bool {
    first_expr_mut(body, &mut |e| {
        if let Expr::Ternary {
            cond,
            on_true,
            on_false,
        } = e
        {
            // A double flip would cancel out textually; that's acceptable.
            let flipped = Expr::Unary {
                op: AstUnOp::Not,
                expr: cond.clone(),
            };
            *cond = Box::new(flipped);
            std::mem::swap(on_true, on_false);
            return true;
        }
        false
    })
}

/// Convert between `return c ? a : b;` and `if c { return a } return b`,
/// whichever direction is available (ternary introduction only for Cm).
fn rewrite_ternary_if(body: &mut Vec<Stmt>, out_dialect: Dialect, rng: &mut ChaCha8Rng) -> bool {
    let prefer_intro = out_dialect == Dialect::Cm && rng.gen_bool(0.5);
    if prefer_intro && ternary_intro(body) {
        return true;
    }
    if ternary_elim_one(body) {
        return true;
    }
    out_dialect == Dialect::Cm && ternary_intro(body)
}

fn ternary_elim_one(body: &mut Vec<Stmt>) -> bool {
    for i in 0..body.len() {
        if let Stmt::Return(Expr::Ternary { .. }) = &body[i] {
            let Stmt::Return(Expr::Ternary {
                cond,
                on_true,
                on_false,
            }) = body.remove(i)
            else {
                unreachable!();
            };
            body.insert(
                i,
                Stmt::If {
                    cond: *cond,
                    then_body: vec![Stmt::Return(*on_true)],
                    else_body: vec![],
                },
            );
            body.insert(i + 1, Stmt::Return(*on_false));
            return true;
        }
        match &mut body[i] {
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                if ternary_elim_one(then_body) || ternary_elim_one(else_body) {
                    return true;
                }
            }
            Stmt::While { body, .. } => {
                if ternary_elim_one(body) {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}

fn ternary_intro(body: &mut Vec<Stmt>) -> bool {
    for i in 0..body.len().saturating_sub(1) {
        let pattern = matches!(
            (&body[i], &body[i + 1]),
            (
                Stmt::If {
                    then_body,
                    else_body,
                    ..
                },
                Stmt::Return(_)
            ) if then_body.len() == 1
                && matches!(then_body[0], Stmt::Return(_))
                && else_body.is_empty()
        );
        if pattern {
            let Stmt::Return(on_false) = body.remove(i + 1) else {
                unreachable!();
            };
            let Stmt::If {
                cond,
                mut then_body,
                ..
            } = body.remove(i)
            else {
                unreachable!();
            };
            let Stmt::Return(on_true) = then_body.remove(0) else {
                unreachable!();
            };
            body.insert(
                i,
                Stmt::Return(Expr::Ternary {
                    cond: Box::new(cond),
                    on_true: Box::new(on_true),
                    on_false: Box::new(on_false),
                }),
            );
            return true;
        }
    }
    false
}

/// `x * 2` <-> `x << 1`.
fn rewrite_mul2_shl(body: &mut [Stmt]) -> bool {
    first_expr_mut(body, &mut |e| {
        if let Expr::Bin { op, lhs, rhs } = e {
            if *op == AstBinOp::Mul && matches!(rhs.as_ref(), Expr::Lit(2)) {
                *op = AstBinOp::Shl;
                *rhs = Box::new(Expr::Lit(1));
                return true;
            }
            if *op == AstBinOp::Shl
                && matches!(rhs.as_ref(), Expr::Lit(1))
                && !matches!(lhs.as_ref(), Expr::Lit(_))
            {
                *op = AstBinOp::Mul;
                *rhs = Box::new(Expr::Lit(2));
                return true;
            }
        }
        false
    })
}

/// Wrap the expression of the last return in an identity (`^ 0`, `+ 0` or
/// `| 0`). Textually distinct, optimized away at level 1 and above.
fn rewrite_redundant_identity(body: &mut [Stmt], rng: &mut ChaCha8Rng) -> bool {
    let op = [AstBinOp::Xor, AstBinOp::Add, AstBinOp::Or][rng.gen_range(0..3)];
    for s in body.iter_mut().rev() {
        if let Stmt::Return(e) = s {
            if matches!(e, Expr::Ternary { .. } | Expr::Bool(_)) {
                continue;
            }
            let inner = std::mem::replace(e, Expr::Lit(0));
            *e = Expr::bin(op, inner, Expr::Lit(0));
            return true;
        }
    }
    false
}

/// The corruption the funnel is expected to catch: the last returned value
/// is off by one.
fn corrupt_off_by_one(body: &mut [Stmt]) {
    for s in body.iter_mut().rev() {
        if let Stmt::Return(e) = s {
            if matches!(e, Expr::Bool(_)) {
                continue;
            }
            let inner = std::mem::replace(e, Expr::Lit(0));
            *e = Expr::bin(AstBinOp::Add, inner, Expr::Lit(1));
            return;
        }
    }
}

/// Gm has no ternary operator; rewrite every return-position ternary into
/// if/return before printing.
fn eliminate_return_ternaries(body: &mut Vec<Stmt>) {
    while ternary_elim_one(body) {}
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Write variant sources to `<dir>/<function>/<k>.<ext>`; returns the paths.
pub fn write_variants(
    dir: &Path,
    function: &str,
    variants: &[VariantSource],
) -> std::io::Result<Vec<PathBuf>> {
    let fdir = dir.join(function);
    std::fs::create_dir_all(&fdir)?;
    let mut paths = Vec::new();
    for v in variants {
        let path = fdir.join(format!("{}.{}", v.index, v.dialect.extension()));
        std::fs::write(&path, &v.text)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equiv::{check_equivalence, Budget, EquivalenceVerdict};
    use crate::fixtures;
    use crate::frontends::lower_ast;

    fn mock_batch(name: &str, seed: u64, out: Dialect) -> Vec<VariantSource> {
        let fx = fixtures::find(name).unwrap();
        let in_dialect = Dialect::Cm;
        let mut req = DiversifyRequest::new(fx.cm, in_dialect);
        req.out_dialect = out;
        request_variants(&ProviderConfig::Mock { seed }, &req).unwrap()
    }

    #[test]
    fn prompt_contains_reference_and_count() {
        let req = DiversifyRequest::new("int8 f(int8 x) { return x; }", Dialect::Cm);
        let p = build_prompt(&req);
        assert!(p.starts_with("The following code is a reference implementation of a function in Cm."));
        assert!(p.contains("int8 f(int8 x) { return x; }"));
        assert!(p.contains("Create 10 substitute implementation(s)"));
        assert!(p.contains("Maintain the original function's signature."));
        assert!(!p.contains("language"));
    }

    #[test]
    fn cross_dialect_prompt_names_output_language() {
        let mut req = DiversifyRequest::new("int8 f(int8 x) { return x; }", Dialect::Cm);
        req.out_dialect = Dialect::Gm;
        assert!(build_prompt(&req).contains("in the Gm language"));
    }

    #[test]
    fn parse_variants_reads_fenced_blocks() {
        let resp = "```\nint8 a(int8 x) { return x; }\n```\nnoise\n```\nint8 b(int8 x) { return x; }\n```\n";
        let vs = parse_variants(resp);
        assert_eq!(vs.len(), 2);
        assert!(vs[0].contains("int8 a"));
        assert!(vs[1].contains("int8 b"));
    }

    #[test]
    fn parse_variants_falls_back_to_blank_lines() {
        let resp = "int8 a(int8 x) { return x; }\n\nint8 b(int8 x) { return x; }";
        assert_eq!(parse_variants(resp).len(), 2);
    }

    #[test]
    fn mock_is_deterministic() {
        let a = mock_batch("max8", 7, Dialect::Cm);
        let b = mock_batch("max8", 7, Dialect::Cm);
        assert_eq!(a, b);
        let c = mock_batch("max8", 8, Dialect::Cm);
        assert_ne!(a, c);
    }

    #[test]
    fn mock_returns_requested_count() {
        let vs = mock_batch("nz", 3, Dialect::Cm);
        assert_eq!(vs.len(), DEFAULT_N_VARIANTS);
    }

    #[test]
    fn mock_variants_mostly_pass_equivalence() {
        // At most the corruption cap may fail; everything else must be a
        // proven-equivalent, parseable substitute.
        for seed in [1u64, 2, 3] {
            let fx = fixtures::find("max8").unwrap();
            let reference = fx.lower(Dialect::Cm).unwrap();
            let vs = mock_batch("max8", seed, Dialect::Cm);
            let mut failures = 0;
            for v in &vs {
                let f = parse_source(&v.text, v.dialect)
                    .and_then(|ast| lower_ast(&ast, v.dialect))
                    .unwrap_or_else(|e| panic!("seed {} variant {}: {}", seed, v.index, e));
                match check_equivalence(&reference, &f, &Budget::default()).unwrap() {
                    EquivalenceVerdict::Equivalent { .. } => {}
                    _ => failures += 1,
                }
            }
            assert!(failures <= corruption_cap(vs.len()), "seed {}: {} failures", seed, failures);
            assert!(vs.len() - failures >= 8, "seed {}", seed);
        }
    }

    #[test]
    fn mock_gm_output_parses_as_gm() {
        for seed in [1u64, 5, 9] {
            let vs = mock_batch("nz", seed, Dialect::Gm);
            for v in &vs {
                assert!(!v.text.contains('?'), "ternary leaked into Gm: {}", v.text);
                parse_source(&v.text, Dialect::Gm)
                    .unwrap_or_else(|e| panic!("seed {} variant {}: {}\n{}", seed, v.index, e, v.text));
            }
        }
    }

    #[test]
    fn normalization_kills_bug_trigger_shapes() {
        // remconst: the constant remainder is folded at source level.
        let vs = mock_batch("remconst", 11, Dialect::Cm);
        for v in &vs {
            assert!(!v.text.contains('%'), "{}", v.text);
        }
        // mul3: multiplication by three is split into shift and add.
        let vs = mock_batch("mul3", 11, Dialect::Cm);
        for v in &vs {
            assert!(!v.text.contains("* 3") && !v.text.contains("3 *"), "{}", v.text);
        }
        // truncflag: the narrowing cast disappears from the compare.
        let vs = mock_batch("truncflag", 11, Dialect::Cm);
        for v in &vs {
            assert!(!v.text.contains("(int8)"), "{}", v.text);
        }
    }

    #[test]
    fn variants_differ_from_the_reference_text() {
        let fx = fixtures::find("max8").unwrap();
        let vs = mock_batch("max8", 21, Dialect::Cm);
        let differing = vs.iter().filter(|v| v.text != fx.cm).count();
        assert!(differing >= 8, "only {} of {} differ", differing, vs.len());
    }

    #[test]
    fn write_variants_places_files_by_index_and_dialect() {
        let dir = tempfile::tempdir().unwrap();
        let vs = mock_batch("nz", 1, Dialect::Gm);
        let paths = write_variants(dir.path(), "nz", &vs).unwrap();
        assert_eq!(paths.len(), vs.len());
        assert!(paths[0].ends_with("nz/1.gm"));
        assert_eq!(std::fs::read_to_string(&paths[2]).unwrap(), vs[2].text);
    }
}
