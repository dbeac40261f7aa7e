// SPDX-License-Identifier: Apache-2.0

//! The acceptance funnel for candidate variants: compile in isolation,
//! compile against the project, pass the frozen test suite, prove
//! equivalence. Filters run in that fixed order and stop at the first
//! failure, so a report always covers a prefix of the funnel.

use serde::{Deserialize, Serialize};

use crate::equiv::{boundary_tuples, check_equivalence, Budget, EquivalenceVerdict};
use crate::exec::{Evaluator, Outcome, TrapReason, DEFAULT_FUEL};
use crate::frontends::{lower_ast, parse_source, Dialect};
use crate::mir::{validate_function, Function, INTRINSIC_GM_DIVCHECK};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BOUNDARY_CASES: usize = 16;
pub const RANDOM_CASES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub args: Vec<i64>,
    pub expected: Outcome,
}

/// A frozen input/output suite derived from the reference implementation.
/// Expected outcomes are recorded once, at suite construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub function: String,
    pub per_case_fuel: u64,
    pub cases: Vec<TestCase>,
}

impl TestSuite {
    /// 16 boundary cases (truncated or padded from the boundary-tuple
    /// cross-product) plus 16 seeded random cases.
    pub fn generate(reference: &Function, seed: u64) -> TestSuite {
        let ev = Evaluator::new(reference).expect("validated reference");
        let tys: Vec<_> = reference.params.iter().map(|(_, t)| *t).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs: Vec<Vec<u64>> = boundary_tuples(reference);
        inputs.truncate(BOUNDARY_CASES);
        while inputs.len() < BOUNDARY_CASES + RANDOM_CASES {
            inputs.push(tys.iter().map(|ty| rng.gen::<u64>() & ty.mask()).collect());
        }
        let cases = inputs
            .into_iter()
            .map(|bits| {
                let expected = ev
                    .eval_bits(&bits, DEFAULT_FUEL)
                    .expect("arity matches by construction");
                TestCase {
                    args: bits
                        .iter()
                        .zip(&tys)
                        .map(|(v, ty)| ty.to_signed(*v))
                        .collect(),
                    expected,
                }
            })
            .collect();
        TestSuite {
            function: reference.name.clone(),
            per_case_fuel: DEFAULT_FUEL,
            cases,
        }
    }
}

/// The compilation context a variant must drop into: the reference
/// implementation it replaces and the frozen suite guarding it.
#[derive(Debug, Clone)]
pub struct Project {
    pub target: String,
    pub reference: Function,
    pub suite: TestSuite,
}

impl Project {
    pub fn new(reference: Function, suite_seed: u64) -> Project {
        let suite = TestSuite::generate(&reference, suite_seed);
        Project {
            target: reference.name.clone(),
            reference,
            suite,
        }
    }
}

pub const FILTER_NAMES: [&str; 4] =
    ["compile_isolation", "compile_in_project", "tests", "equivalence"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterResult {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl FilterResult {
    fn pass(name: &str) -> FilterResult {
        FilterResult {
            name: name.into(),
            passed: true,
            reason: None,
        }
    }

    fn fail(name: &str, reason: impl Into<String>) -> FilterResult {
        FilterResult {
            name: name.into(),
            passed: false,
            reason: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub filters: Vec<FilterResult>,
    pub accepted: bool,
}

impl ValidationReport {
    pub fn failed_at(&self) -> Option<&str> {
        self.filters
            .iter()
            .find(|f| !f.passed)
            .map(|f| f.name.as_str())
    }
}

/// Run a candidate through the funnel. Returns the report plus, on full
/// acceptance, the lowered function.
pub fn run_validation(
    project: &Project,
    source: &str,
    dialect: Dialect,
    budget: &Budget,
) -> (ValidationReport, Option<Function>) {
    let mut filters = Vec::new();
    let done = |filters: Vec<FilterResult>| {
        let accepted = filters.iter().all(|f| f.passed);
        ValidationReport { filters, accepted }
    };

    // 1. The candidate must stand alone: parse, lower, validate.
    let func = match parse_source(source, dialect).and_then(|ast| lower_ast(&ast, dialect)) {
        Ok(f) => f,
        Err(e) => {
            filters.push(FilterResult::fail(FILTER_NAMES[0], e.to_string()));
            return (done(filters), None);
        }
    };
    let diags = validate_function(&func);
    if !diags.is_empty() {
        filters.push(FilterResult::fail(FILTER_NAMES[0], diags[0].to_string()));
        return (done(filters), None);
    }
    filters.push(FilterResult::pass(FILTER_NAMES[0]));

    // 2. It must drop into the project: same name, same signature, only
    // registered intrinsics.
    if func.name != project.target {
        filters.push(FilterResult::fail(
            FILTER_NAMES[1],
            format!("function is named '{}', expected '{}'", func.name, project.target),
        ));
        return (done(filters), None);
    }
    let sig = |f: &Function| {
        (
            f.params.iter().map(|(_, t)| *t).collect::<Vec<_>>(),
            f.ret,
        )
    };
    if sig(&func) != sig(&project.reference) {
        filters.push(FilterResult::fail(
            FILTER_NAMES[1],
            "signature differs from the function being replaced",
        ));
        return (done(filters), None);
    }
    let unknown_intrinsic = func.blocks.iter().flat_map(|b| &b.instrs).find_map(|i| {
        match &i.op {
            crate::mir::Op::Intrinsic { name, .. } if name != INTRINSIC_GM_DIVCHECK => {
                Some(name.clone())
            }
            _ => None,
        }
    });
    if let Some(name) = unknown_intrinsic {
        filters.push(FilterResult::fail(
            FILTER_NAMES[1],
            format!("unregistered intrinsic '{}'", name),
        ));
        return (done(filters), None);
    }
    filters.push(FilterResult::pass(FILTER_NAMES[1]));

    // 3. The frozen suite, with a wall-clock allowance of 10x the summed
    // per-case fuel (fuel itself is the effective limiter).
    let ev = match Evaluator::new(&func) {
        Ok(ev) => ev,
        Err(e) => {
            filters.push(FilterResult::fail(FILTER_NAMES[2], e.to_string()));
            return (done(filters), None);
        }
    };
    let tys: Vec<_> = func.params.iter().map(|(_, t)| *t).collect();
    for case in &project.suite.cases {
        let bits: Vec<u64> = case
            .args
            .iter()
            .zip(&tys)
            .map(|(v, ty)| ty.from_signed(*v))
            .collect();
        let got = match ev.eval_bits(&bits, project.suite.per_case_fuel) {
            Ok(o) => o,
            Err(e) => {
                filters.push(FilterResult::fail(FILTER_NAMES[2], e.to_string()));
                return (done(filters), None);
            }
        };
        if !got.agrees_with(&case.expected) {
            let reason = if got == Outcome::Trap(TrapReason::FuelExhausted) {
                "timeout".to_string()
            } else {
                format!(
                    "input {:?}: expected {}, got {}",
                    case.args,
                    case.expected.render(),
                    got.render()
                )
            };
            filters.push(FilterResult::fail(FILTER_NAMES[2], reason));
            return (done(filters), None);
        }
    }
    filters.push(FilterResult::pass(FILTER_NAMES[2]));

    // 4. Equivalence must be *proved*; Unknown is a rejection.
    match check_equivalence(&project.reference, &func, budget) {
        Ok(EquivalenceVerdict::Equivalent { .. }) => {
            filters.push(FilterResult::pass(FILTER_NAMES[3]));
            (done(filters), Some(func))
        }
        Ok(EquivalenceVerdict::NotEquivalent {
            input,
            reference,
            candidate,
        }) => {
            filters.push(FilterResult::fail(
                FILTER_NAMES[3],
                format!(
                    "counterexample {:?}: reference {}, candidate {}",
                    input,
                    reference.render(),
                    candidate.render()
                ),
            ));
            (done(filters), None)
        }
        Ok(EquivalenceVerdict::Unknown { reason }) => {
            filters.push(FilterResult::fail(
                FILTER_NAMES[3],
                format!("not proved: {}", reason),
            ));
            (done(filters), None)
        }
        Err(e) => {
            filters.push(FilterResult::fail(FILTER_NAMES[3], e.to_string()));
            (done(filters), None)
        }
    }
}

/// Per-variant slice of a batch report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantReport {
    pub index: usize,
    pub filters: Vec<FilterResult>,
}

/// How many variants survived each funnel stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelCounts {
    pub isolation: usize,
    pub project: usize,
    pub tests: usize,
    pub equivalence: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchReport {
    pub function: String,
    pub config: serde_json::Value,
    pub variants: Vec<VariantReport>,
    pub funnel: FunnelCounts,
}

impl BatchReport {
    pub fn tally(function: &str, config: serde_json::Value, variants: Vec<VariantReport>) -> BatchReport {
        let mut funnel = FunnelCounts::default();
        for v in &variants {
            let passed = |name: &str| v.filters.iter().any(|f| f.name == name && f.passed);
            funnel.isolation += passed(FILTER_NAMES[0]) as usize;
            funnel.project += passed(FILTER_NAMES[1]) as usize;
            funnel.tests += passed(FILTER_NAMES[2]) as usize;
            funnel.equivalence += passed(FILTER_NAMES[3]) as usize;
        }
        BatchReport {
            function: function.into(),
            config,
            variants,
            funnel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn project(name: &str) -> Project {
        let f = fixtures::find(name).unwrap().lower(Dialect::Cm).unwrap();
        Project::new(f, 1)
    }

    #[test]
    fn suite_shape_is_stable() {
        let p = project("avg8");
        assert_eq!(p.suite.cases.len(), BOUNDARY_CASES + RANDOM_CASES);
        let again = TestSuite::generate(&p.reference, 1);
        assert_eq!(p.suite, again);
        let different_seed = TestSuite::generate(&p.reference, 2);
        assert_ne!(p.suite, different_seed);
    }

    #[test]
    fn reference_passes_its_own_funnel() {
        let p = project("nz");
        let (report, func) = run_validation(
            &p,
            fixtures::find("nz").unwrap().cm,
            Dialect::Cm,
            &Budget::default(),
        );
        assert!(report.accepted, "{:?}", report);
        assert_eq!(report.filters.len(), 4);
        assert!(func.is_some());
    }

    #[test]
    fn cross_dialect_variant_is_accepted() {
        let p = project("max8");
        let (report, _) = run_validation(
            &p,
            fixtures::find("max8").unwrap().gm,
            Dialect::Gm,
            &Budget::default(),
        );
        assert!(report.accepted, "{:?}", report);
    }

    #[test]
    fn syntax_error_stops_at_isolation() {
        let p = project("nz");
        let (report, _) = run_validation(&p, "int16 nz(int16 x) {", Dialect::Cm, &Budget::default());
        assert!(!report.accepted);
        assert_eq!(report.failed_at(), Some("compile_isolation"));
        assert_eq!(report.filters.len(), 1);
    }

    #[test]
    fn wrong_name_stops_at_project() {
        let p = project("nz");
        let (report, _) = run_validation(
            &p,
            "int16 zn(int16 x) { return 0; }",
            Dialect::Cm,
            &Budget::default(),
        );
        assert_eq!(report.failed_at(), Some("compile_in_project"));
    }

    #[test]
    fn wrong_signature_stops_at_project() {
        let p = project("nz");
        let (report, _) = run_validation(
            &p,
            "int8 nz(int8 x) { return 0; }",
            Dialect::Cm,
            &Budget::default(),
        );
        assert_eq!(report.failed_at(), Some("compile_in_project"));
    }

    #[test]
    fn wrong_behavior_stops_at_tests() {
        let p = project("nz");
        let (report, _) = run_validation(
            &p,
            "int16 nz(int16 x) { return (x != 0) ? 1 : 0; }",
            Dialect::Cm,
            &Budget::default(),
        );
        assert_eq!(report.failed_at(), Some("tests"));
    }

    #[test]
    fn nonterminating_variant_reports_timeout() {
        let p = project("nz");
        let src = "\
int16 nz(int16 x) {
    int16 i = 0;
    while (i == 0) {
        i = i * 1;
    }
    return -1;
}
";
        let (report, _) = run_validation(&p, src, Dialect::Cm, &Budget::default());
        assert_eq!(report.failed_at(), Some("tests"));
        let f = report.filters.last().unwrap();
        assert_eq!(f.reason.as_deref(), Some("timeout"));
    }

    #[test]
    fn subtle_mismatch_slips_past_tests_but_not_equivalence() {
        // Differs from abs16 at exactly one non-boundary input that the
        // frozen suite misses; only the exhaustive check can catch it.
        let p = project("abs16");
        let src = "\
int16 abs16(int16 x) {
    if (x == 12345) {
        return 0;
    }
    return (x < 0) ? -x : x;
}
";
        let (report, _) = run_validation(&p, src, Dialect::Cm, &Budget::default());
        assert_eq!(report.failed_at(), Some("equivalence"), "{:?}", report);
        assert_eq!(report.filters.len(), 4);
    }

    #[test]
    fn funnel_counts_are_monotone() {
        let p = project("nz");
        let sources = [
            "int16 nz(int16 x) {",                          // isolation
            "int16 zn(int16 x) { return 0; }",              // project
            "int16 nz(int16 x) { return 0; }",              // tests
            "int16 nz(int16 x) { return (x != 0) ? -1 : 0; }", // accepted
        ];
        let variants: Vec<VariantReport> = sources
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (r, _) = run_validation(&p, s, Dialect::Cm, &Budget::default());
                VariantReport {
                    index: i + 1,
                    filters: r.filters,
                }
            })
            .collect();
        let report = BatchReport::tally("nz", serde_json::json!({}), variants);
        let f = &report.funnel;
        assert!(f.isolation >= f.project && f.project >= f.tests && f.tests >= f.equivalence);
        assert_eq!(
            (f.isolation, f.project, f.tests, f.equivalence),
            (3, 2, 1, 1)
        );
    }
}
