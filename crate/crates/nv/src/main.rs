// SPDX-License-Identifier: Apache-2.0

//! `nv` — the command-line front door to the N-version toolchain.
//!
//! Exit codes: 0 success, 1 operational failure, 2 usage error,
//! 41 executed program trapped, 42 the trap was an N-version divergence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use nv::compiler::{self, BugId, OptLevel};
use nv::diversify::{self, DiversifyRequest, ProviderConfig, VariantSource};
use nv::equiv::Budget;
use nv::exec::{eval_mir, Outcome, TrapReason, DEFAULT_FUEL};
use nv::fixtures;
use nv::frontends::{lower_ast, parse_source, Dialect};
use nv::harness::{self, LoweredBundle};
use nv::metrics;
use nv::mir::{parse_mir, print_mir, validate_function, Function};
use nv::validate::{run_validation, BatchReport, Project, VariantReport};
use nv::vm;

const EXIT_TRAP: u8 = 41;
const EXIT_DIVERGENCE: u8 = 42;

#[derive(Parser)]
#[command(name = "nv", version, about = "N-version hardening toolchain for pure functions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a source or MIR file and print canonical MIR.
    Parse(ParseArgs),
    /// Optimize and lower a function; print MIR, disassembly or a hash.
    Compile(CompileArgs),
    /// Execute a function (or an assembled bundle) on concrete arguments.
    Run(RunArgs),
    /// Generate candidate variants for the manifest's target function.
    Diversify(DiversifyArgs),
    /// Run generated variants through the validation funnel.
    Validate(ManifestArgs),
    /// Assemble accepted variants into an N-of-N bundle.
    Harness(HarnessArgs),
    /// Diversity metrics over the accepted variants.
    Metrics(MetricsArgs),
    /// End-to-end demonstration: inject a compiler bug into the reference
    /// version and show the bundle converting it into a fail-stop.
    DemoMitigate(DemoArgs),
}

#[derive(Args)]
struct ParseArgs {
    file: PathBuf,
    /// cm, gm or mir; inferred from the file extension when omitted.
    #[arg(long)]
    dialect: Option<String>,
}

#[derive(Args)]
struct CompileArgs {
    file: PathBuf,
    #[arg(long)]
    dialect: Option<String>,
    /// Optimization level 0-3.
    #[arg(long, default_value_t = 0)]
    level: u8,
    /// Inject a known-buggy pass: B1, B2 or B3.
    #[arg(long)]
    inject: Option<String>,
    /// mir, disasm or hash.
    #[arg(long, default_value = "mir")]
    emit: String,
}

#[derive(Args)]
struct RunArgs {
    /// A source/MIR file, or a bundle directory (with --bundle).
    file: PathBuf,
    /// Comma-separated signed integer arguments.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    args: Vec<i64>,
    #[arg(long)]
    dialect: Option<String>,
    #[arg(long, default_value_t = 0)]
    level: u8,
    #[arg(long)]
    inject: Option<String>,
    /// Print the executed-opcode profile after the result.
    #[arg(long)]
    trace: bool,
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    fuel: u64,
    /// Treat `file` as a bundle directory written by `nv harness`.
    #[arg(long)]
    bundle: bool,
}

#[derive(Args)]
struct ManifestArgs {
    /// Project manifest.
    #[arg(long, default_value = "nv.json")]
    manifest: PathBuf,
}

#[derive(Args)]
struct DiversifyArgs {
    #[command(flatten)]
    common: ManifestArgs,
    /// Override the manifest's variant count.
    #[arg(long)]
    n: Option<usize>,
    /// Override the output dialect (cm or gm).
    #[arg(long)]
    out_dialect: Option<String>,
    /// Override the provider seed (mock only).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct HarnessArgs {
    #[command(flatten)]
    common: ManifestArgs,
    #[arg(long, default_value_t = 2)]
    level: u8,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    common: ManifestArgs,
    /// static or dynamic.
    kind: String,
}

#[derive(Args)]
struct DemoArgs {
    /// B1, B2 or B3.
    #[arg(long)]
    bug: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    project: String,
    /// Name of the function being hardened.
    target: String,
    /// Reference implementation, path relative to the manifest.
    source: SourceRef,
    #[serde(default)]
    suite: SuiteConfig,
    provider: ProviderConfig,
    #[serde(default)]
    budget: BudgetConfig,
    #[serde(default)]
    workspace: WorkspaceConfig,
    #[serde(default = "default_n_variants")]
    n_variants: usize,
}

fn default_n_variants() -> usize {
    diversify::DEFAULT_N_VARIANTS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SourceRef {
    file: PathBuf,
    dialect: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SuiteConfig {
    seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct BudgetConfig {
    max_enumeration: u64,
    per_input_fuel: u64,
    wall_limit_ms: u64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        let b = Budget::default();
        BudgetConfig {
            max_enumeration: b.max_enumeration,
            per_input_fuel: b.per_input_fuel,
            wall_limit_ms: b.wall_limit_ms,
        }
    }
}

impl BudgetConfig {
    fn budget(&self) -> Budget {
        Budget {
            max_enumeration: self.max_enumeration,
            per_input_fuel: self.per_input_fuel,
            wall_limit_ms: self.wall_limit_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct WorkspaceConfig {
    variants: PathBuf,
    bundle: PathBuf,
    reports: PathBuf,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        WorkspaceConfig {
            variants: "variants".into(),
            bundle: "bundle".into(),
            reports: "reports".into(),
        }
    }
}

struct LoadedManifest {
    manifest: Manifest,
    root: PathBuf,
    dialect: Dialect,
    reference_source: String,
    reference: Function,
}

fn load_manifest(path: &Path) -> Result<LoadedManifest, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {}", path.display(), e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| format!("bad manifest: {}", e))?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let dialect = Dialect::from_name(&manifest.source.dialect)
        .ok_or_else(|| format!("unknown dialect '{}'", manifest.source.dialect))?;
    let src_path = root.join(&manifest.source.file);
    let reference_source = std::fs::read_to_string(&src_path)
        .map_err(|e| format!("cannot read {}: {}", src_path.display(), e))?;
    let reference = parse_source(&reference_source, dialect)
        .and_then(|ast| lower_ast(&ast, dialect))
        .map_err(|e| format!("reference does not compile: {}", e))?;
    if reference.name != manifest.target {
        return Err(format!(
            "manifest target is '{}' but the source defines '{}'",
            manifest.target, reference.name
        ));
    }
    Ok(LoadedManifest {
        manifest,
        root,
        dialect,
        reference_source,
        reference,
    })
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn dialect_for(file: &Path, flag: &Option<String>) -> Result<Option<Dialect>, String> {
    let name = match flag {
        Some(d) => d.clone(),
        None => file
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_string(),
    };
    match name.as_str() {
        "mir" => Ok(None),
        other => Dialect::from_name(other)
            .map(Some)
            .ok_or_else(|| format!("unknown dialect '{}' (expected cm, gm or mir)", other)),
    }
}

fn load_function(file: &Path, flag: &Option<String>) -> Result<Function, String> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| format!("cannot read {}: {}", file.display(), e))?;
    match dialect_for(file, flag)? {
        None => parse_mir(&text).map_err(|e| e.to_string()),
        Some(d) => parse_source(&text, d)
            .and_then(|ast| lower_ast(&ast, d))
            .map_err(|e| e.to_string()),
    }
}

fn parse_level(level: u8) -> Result<OptLevel, String> {
    OptLevel::new(level).ok_or_else(|| format!("optimization level {} out of range 0-3", level))
}

fn parse_bug(flag: &Option<String>) -> Result<Option<BugId>, String> {
    match flag {
        None => Ok(None),
        Some(s) => BugId::from_name(s)
            .map(Some)
            .ok_or_else(|| format!("unknown bug '{}' (expected B1, B2 or B3)", s)),
    }
}

/// Obtain the variant set for a manifest; used by validate/harness/metrics.
/// With the mock provider the set is regenerated from the recorded seed so
/// all commands agree on indices. With the http provider the files written
/// by `diversify` are read back instead of re-querying the endpoint.
fn manifest_variants(lm: &LoadedManifest) -> Result<Vec<VariantSource>, String> {
    if let ProviderConfig::Http { .. } = lm.manifest.provider {
        return read_variant_files(lm);
    }
    let req = DiversifyRequest {
        reference_source: lm.reference_source.clone(),
        in_dialect: lm.dialect,
        out_dialect: lm.dialect,
        n_variants: lm.manifest.n_variants,
        temperature: diversify::DEFAULT_TEMPERATURE,
    };
    diversify::request_variants(&lm.manifest.provider, &req).map_err(|e| e.to_string())
}

fn read_variant_files(lm: &LoadedManifest) -> Result<Vec<VariantSource>, String> {
    let dir = lm
        .root
        .join(&lm.manifest.workspace.variants)
        .join(&lm.manifest.target);
    let mut out = Vec::new();
    for index in 1.. {
        let mut found = None;
        for dialect in [Dialect::Cm, Dialect::Gm] {
            let path = dir.join(format!("{}.{}", index, dialect.extension()));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| format!("cannot read {}: {}", path.display(), e))?;
                found = Some(VariantSource {
                    index,
                    dialect,
                    text,
                });
                break;
            }
        }
        match found {
            Some(v) => out.push(v),
            None => break,
        }
    }
    if out.is_empty() {
        return Err(format!(
            "no variants found under {}; run `nv diversify` first",
            dir.display()
        ));
    }
    Ok(out)
}

fn validated_batch(
    lm: &LoadedManifest,
) -> Result<(Project, Vec<VariantSource>, BatchReport, Vec<Function>), String> {
    let project = Project::new(lm.reference.clone(), lm.manifest.suite.seed);
    let budget = lm.manifest.budget.budget();
    let variants = manifest_variants(lm)?;
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
    let config = serde_json::json!({
        "provider": lm.manifest.provider,
        "n_variants": lm.manifest.n_variants,
        "suite_seed": lm.manifest.suite.seed,
    });
    let batch = BatchReport::tally(&lm.manifest.target, config, reports);
    Ok((project, variants, batch, accepted))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_parse(a: &ParseArgs) -> Result<u8, String> {
    let f = load_function(&a.file, &a.dialect)?;
    let diags = validate_function(&f);
    if !diags.is_empty() {
        return Err(diags[0].to_string());
    }
    print!("{}", print_mir(&f));
    Ok(0)
}

fn cmd_compile(a: &CompileArgs) -> Result<u8, String> {
    let f = load_function(&a.file, &a.dialect)?;
    let level = parse_level(a.level)?;
    let inject = parse_bug(&a.inject)?;
    let optimized = compiler::optimize(&f, level, inject);
    match a.emit.as_str() {
        "mir" => print!("{}", print_mir(&optimized)),
        "disasm" | "bytecode" => {
            let unit = compiler::lower_to_bytecode(&optimized).map_err(|e| e.to_string())?;
            print!("{}", compiler::disassemble(&unit));
        }
        "hash" => {
            let unit = compiler::lower_to_bytecode(&optimized).map_err(|e| e.to_string())?;
            println!("{}", compiler::canonical_hash(&unit));
        }
        other => return Err(format!("unknown emit kind '{}'", other)),
    }
    Ok(0)
}

fn outcome_exit(o: &Outcome) -> u8 {
    match o {
        Outcome::Return { .. } => 0,
        Outcome::Trap(TrapReason::NVersionDivergence) => EXIT_DIVERGENCE,
        Outcome::Trap(_) => EXIT_TRAP,
    }
}

fn cmd_run(a: &RunArgs) -> Result<u8, String> {
    if a.bundle {
        return cmd_run_bundle(a);
    }
    let f = load_function(&a.file, &a.dialect)?;
    let level = parse_level(a.level)?;
    let inject = parse_bug(&a.inject)?;
    let optimized = compiler::optimize(&f, level, inject);
    if a.args.len() != optimized.params.len() {
        return Err(format!(
            "function takes {} argument(s), got {}",
            optimized.params.len(),
            a.args.len()
        ));
    }
    let outcome = if a.trace || a.level > 0 {
        let unit = compiler::lower_to_bytecode(&optimized).map_err(|e| e.to_string())?;
        let bits: Vec<u64> = a
            .args
            .iter()
            .zip(&unit.params)
            .map(|(v, ty)| ty.from_signed(*v))
            .collect();
        let (o, trace) = vm::run_bytecode(&unit, &bits, a.fuel, a.trace).map_err(|e| e.to_string())?;
        if let Some(t) = trace {
            let profile: BTreeMap<String, u64> = t.profile();
            for (op, n) in profile {
                eprintln!("{:>8}  {}", n, op);
            }
        }
        o
    } else {
        eval_mir(&optimized, &a.args, a.fuel).map_err(|e| e.to_string())?
    };
    println!("{}", outcome.render());
    Ok(outcome_exit(&outcome))
}

fn cmd_run_bundle(a: &RunArgs) -> Result<u8, String> {
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(a.file.join("bundle.json"))
            .map_err(|e| format!("not a bundle directory: {}", e))?,
    )
    .map_err(|e| e.to_string())?;
    let version_files = manifest["versions"]
        .as_array()
        .ok_or("bundle.json has no versions")?;
    let mut versions = Vec::new();
    for vf in version_files {
        let path = a.file.join(vf.as_str().ok_or("bad version entry")?);
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        versions.push(parse_mir(&text).map_err(|e| e.to_string())?);
    }
    let level = parse_level(a.level)?;
    // --inject applies to version 1 only, mirroring the mitigation demo.
    let inject = parse_bug(&a.inject)?;
    let units = versions
        .iter()
        .enumerate()
        .map(|(i, f)| compiler::compile(f, level, inject.filter(|_| i == 0)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let lb = LoweredBundle {
        target: manifest["target"].as_str().unwrap_or("").to_string(),
        params: versions[0].params.iter().map(|(_, t)| *t).collect(),
        ret: versions[0].ret,
        units,
    };
    let outcome = harness::run_nversion_signed(&lb, &a.args, a.fuel)?;
    println!("{}", outcome.render());
    Ok(outcome_exit(&outcome))
}

fn cmd_diversify(a: &DiversifyArgs) -> Result<u8, String> {
    let mut lm = load_manifest(&a.common.manifest)?;
    if let Some(n) = a.n {
        lm.manifest.n_variants = n;
    }
    if let Some(seed) = a.seed {
        if let ProviderConfig::Mock { seed: s } = &mut lm.manifest.provider {
            *s = seed;
        }
    }
    let mut req = DiversifyRequest {
        reference_source: lm.reference_source.clone(),
        in_dialect: lm.dialect,
        out_dialect: lm.dialect,
        n_variants: lm.manifest.n_variants,
        temperature: diversify::DEFAULT_TEMPERATURE,
    };
    if let Some(d) = &a.out_dialect {
        req.out_dialect =
            Dialect::from_name(d).ok_or_else(|| format!("unknown dialect '{}'", d))?;
    }
    let variants =
        diversify::request_variants(&lm.manifest.provider, &req).map_err(|e| e.to_string())?;
    let dir = lm.root.join(&lm.manifest.workspace.variants);
    let paths = diversify::write_variants(&dir, &lm.manifest.target, &variants)
        .map_err(|e| e.to_string())?;
    for p in &paths {
        println!("{}", p.display());
    }
    Ok(0)
}

fn cmd_validate(a: &ManifestArgs) -> Result<u8, String> {
    let lm = load_manifest(&a.manifest)?;
    let (_, _, batch, accepted) = validated_batch(&lm)?;
    let dir = lm.root.join(&lm.manifest.workspace.reports);
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    std::fs::write(
        dir.join("batch.json"),
        serde_json::to_string_pretty(&batch).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    println!(
        "{}: {} generated, funnel {}/{}/{}/{}, {} accepted",
        batch.function,
        batch.variants.len(),
        batch.funnel.isolation,
        batch.funnel.project,
        batch.funnel.tests,
        batch.funnel.equivalence,
        accepted.len()
    );
    Ok(0)
}

fn cmd_harness(a: &HarnessArgs) -> Result<u8, String> {
    let lm = load_manifest(&a.common.manifest)?;
    let level = parse_level(a.level)?;
    let (_, _, _, accepted) = validated_batch(&lm)?;
    if accepted.is_empty() {
        return Err("no variant survived the funnel; cannot assemble a bundle".into());
    }
    let bundle =
        harness::assemble_nversion(&lm.reference, &accepted).map_err(|e| e.to_string())?;
    harness::lower_bundle(&bundle, level, &[]).map_err(|e| e.to_string())?;
    let dir = lm.root.join(&lm.manifest.workspace.bundle);
    let paths = harness::write_bundle(&dir, &bundle).map_err(|e| e.to_string())?;
    println!("assembled {}-version bundle for {}", bundle.n(), bundle.target);
    for p in &paths {
        println!("{}", p.display());
    }
    Ok(0)
}

fn cmd_metrics(a: &MetricsArgs) -> Result<u8, String> {
    let lm = load_manifest(&a.common.manifest)?;
    let (project, _, _, accepted) = validated_batch(&lm)?;
    let dir = lm.root.join(&lm.manifest.workspace.reports);
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    match a.kind.as_str() {
        "static" => {
            let report = metrics::static_uniqueness(&lm.reference, &accepted)?;
            std::fs::write(
                dir.join("uniqueness.json"),
                serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?,
            )
            .map_err(|e| e.to_string())?;
            for l in &report.levels {
                println!("{:>3}: {}/{} unique", l.level, l.unique_count, report.n_variants);
            }
        }
        "dynamic" => {
            let report = metrics::dynamic_report(&lm.reference, &accepted, &project.suite)?;
            std::fs::write(dir.join("dynamic.csv"), metrics::dynamic_csv(&report))
                .map_err(|e| e.to_string())?;
            for v in &report.variants {
                println!("v{}: jaccard {:.3}", v.index, v.jaccard_vs_reference);
            }
            println!("mean: {:.3}", report.mean_jaccard());
        }
        other => return Err(format!("unknown metrics kind '{}'", other)),
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// demo-mitigate
// ---------------------------------------------------------------------------

struct DemoSpec {
    bug: BugId,
    fixture: &'static str,
    /// Versions in the final bundle, reference included.
    n: usize,
}

fn demo_spec(bug: BugId) -> DemoSpec {
    match bug {
        BugId::B1 => DemoSpec {
            bug,
            fixture: "remconst",
            n: 11,
        },
        BugId::B2 => DemoSpec {
            bug,
            fixture: "mul3",
            n: 11,
        },
        BugId::B3 => DemoSpec {
            bug,
            fixture: "truncflag",
            n: 3,
        },
    }
}

fn cmd_demo(a: &DemoArgs) -> Result<u8, String> {
    let bug = BugId::from_name(&a.bug).ok_or_else(|| format!("unknown bug '{}'", a.bug))?;
    let spec = demo_spec(bug);
    let level = bug.activation_level();
    let fx = fixtures::find(spec.fixture).expect("built-in fixture");
    let reference = fx.lower(Dialect::Cm).map_err(|e| e.to_string())?;
    let project = Project::new(reference.clone(), 1);
    let budget = Budget::default();

    // Collect enough accepted variants, drawing fresh batches as needed.
    let mut accepted: Vec<Function> = Vec::new();
    let mut seed = a.seed;
    while accepted.len() < spec.n - 1 && seed < a.seed + 5 {
        let req = DiversifyRequest::new(fx.cm, Dialect::Cm);
        let vs = diversify::request_variants(&ProviderConfig::Mock { seed }, &req)
            .map_err(|e| e.to_string())?;
        for v in vs {
            if accepted.len() == spec.n - 1 {
                break;
            }
            let (_, func) = run_validation(&project, &v.text, v.dialect, &budget);
            if let Some(f) = func {
                accepted.push(f);
            }
        }
        seed += 1;
    }
    if accepted.len() < spec.n - 1 {
        return Err(format!(
            "could not collect {} accepted variants",
            spec.n - 1
        ));
    }

    let bundle = harness::assemble_nversion(&reference, &accepted).map_err(|e| e.to_string())?;
    // The bug hits only the reference version's compilation.
    let buggy = harness::lower_bundle(&bundle, level, &[(1, spec.bug)]).map_err(|e| e.to_string())?;

    // Sweep the full (small) domain three ways: clean reference, the buggy
    // reference alone, and the bundle.
    let buggy_alone = compiler::compile(&bundle.versions[0], level, Some(spec.bug))
        .map_err(|e| e.to_string())?;
    let variant_units: Vec<_> = bundle.versions[1..]
        .iter()
        .map(|f| compiler::compile(f, level, Some(spec.bug)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;

    let tys: Vec<_> = reference.params.iter().map(|(_, t)| *t).collect();
    assert_eq!(tys.len(), 1, "demo fixtures are unary");
    let domain = 1u64 << tys[0].width();
    let mut affected = 0u64;
    let mut escaped = 0u64;
    let mut variants_affected = 0u64;
    for bits in 0..domain {
        let want = eval_mir(&reference, &[tys[0].to_signed(bits)], DEFAULT_FUEL)
            .map_err(|e| e.to_string())?;
        let (alone, _) = vm::run_bytecode(&buggy_alone, &[bits], DEFAULT_FUEL, false)
            .map_err(|e| e.to_string())?;
        let hit = !alone.agrees_with(&want);
        affected += hit as u64;
        for u in &variant_units {
            let (vo, _) = vm::run_bytecode(u, &[bits], DEFAULT_FUEL, false)
                .map_err(|e| e.to_string())?;
            variants_affected += !vo.agrees_with(&want) as u64;
        }
        let voted = harness::run_nversion(&buggy, &[bits], DEFAULT_FUEL)?;
        // An escape is the failure mode N-versioning exists to stop: a
        // silently wrong value. A divergence trap is the mitigation working.
        if !voted.agrees_with(&want) && !matches!(voted, Outcome::Trap(_)) {
            escaped += 1;
        }
    }
    let mitigated = affected > 0 && escaped == 0 && variants_affected == 0;
    let report = serde_json::json!({
        "bug": spec.bug.name(),
        "function": spec.fixture,
        "level": level.level(),
        "n_versions": bundle.n(),
        "domain": domain,
        "affected_inputs": affected,
        "variant_misbehaviors": variants_affected,
        "silent_escapes": escaped,
        "mitigated": mitigated,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    if mitigated {
        Ok(0)
    } else {
        Err("mitigation demonstration failed".into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Parse(a) => cmd_parse(a),
        Cmd::Compile(a) => cmd_compile(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Diversify(a) => cmd_diversify(a),
        Cmd::Validate(a) => cmd_validate(a),
        Cmd::Harness(a) => cmd_harness(a),
        Cmd::Metrics(a) => cmd_metrics(a),
        Cmd::DemoMitigate(a) => cmd_demo(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {}", msg);
            ExitCode::from(1)
        }
    }
}
