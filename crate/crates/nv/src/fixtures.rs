// SPDX-License-Identifier: Apache-2.0

//! The built-in corpus: each function exists in both source dialects, with
//! identical observable behavior, over a domain small enough for the
//! exhaustive equivalence checker.

use crate::frontends::{lower_ast, parse_source, Dialect, FrontendError, SourceAst};
use crate::mir::Function;

#[derive(Debug, Clone, Copy)]
pub struct Fixture {
    pub name: &'static str,
    pub cm: &'static str,
    pub gm: &'static str,
}

impl Fixture {
    pub fn source(&self, dialect: Dialect) -> &'static str {
        match dialect {
            Dialect::Cm => self.cm,
            Dialect::Gm => self.gm,
        }
    }

    pub fn ast(&self, dialect: Dialect) -> Result<SourceAst, FrontendError> {
        parse_source(self.source(dialect), dialect)
    }

    pub fn lower(&self, dialect: Dialect) -> Result<Function, FrontendError> {
        lower_ast(&self.ast(dialect)?, dialect)
    }
}

macro_rules! fixture {
    ($name:literal) => {
        Fixture {
            name: $name,
            cm: include_str!(concat!("../fixtures/", $name, ".cm")),
            gm: include_str!(concat!("../fixtures/", $name, ".gm")),
        }
    };
}

/// Ordinary corpus functions used for funnel and metrics exercises.
pub const CORPUS: &[Fixture] = &[
    fixture!("nz"),
    fixture!("abs16"),
    fixture!("ctz8"),
    fixture!("popcount8"),
    fixture!("avg8"),
    fixture!("max8"),
];

/// Functions whose shape triggers one of the injectable compiler bugs:
/// `remconst` folds a negative remainder (B1), `mul3` multiplies by three
/// (B2), `truncflag` branches on a truncated compare (B3).
pub const WITNESSES: &[Fixture] = &[
    fixture!("remconst"),
    fixture!("mul3"),
    fixture!("truncflag"),
];

pub fn all() -> impl Iterator<Item = &'static Fixture> {
    CORPUS.iter().chain(WITNESSES.iter())
}

pub fn find(name: &str) -> Option<&'static Fixture> {
    all().find(|f| f.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equiv::{check_equivalence, Budget, EquivalenceVerdict};
    use crate::exec::{eval_mir, Outcome, DEFAULT_FUEL};
    use crate::mir::{validate_function, MirType};

    #[test]
    fn every_fixture_parses_and_validates_in_both_dialects() {
        for fx in all() {
            for d in [Dialect::Cm, Dialect::Gm] {
                let f = fx
                    .lower(d)
                    .unwrap_or_else(|e| panic!("{} ({:?}): {}", fx.name, d, e));
                assert!(validate_function(&f).is_empty(), "{} ({:?})", fx.name, d);
                assert_eq!(f.name, fx.name);
            }
        }
    }

    #[test]
    fn dialect_pairs_are_exhaustively_equivalent() {
        for fx in all() {
            let fc = fx.lower(Dialect::Cm).unwrap();
            let fg = fx.lower(Dialect::Gm).unwrap();
            let v = check_equivalence(&fc, &fg, &Budget::default()).unwrap();
            assert!(
                matches!(v, EquivalenceVerdict::Equivalent { .. }),
                "{}: {:?}",
                fx.name,
                v
            );
        }
    }

    #[test]
    fn spot_values_match_the_written_contracts() {
        let cases: &[(&str, &[i64], i64)] = &[
            ("nz", &[0], 0),
            ("nz", &[-5], -1),
            ("abs16", &[-7], 7),
            ("abs16", &[-32768], -32768),
            ("ctz8", &[20], 2),
            ("ctz8", &[0], 8),
            ("popcount8", &[-1], 8),
            ("popcount8", &[5], 2),
            ("avg8", &[7, 4], 5),
            ("avg8", &[-128, 127], -1),
            ("max8", &[-3, 2], 2),
            ("mul3", &[4], 12),
            ("remconst", &[5], 4),
            ("truncflag", &[256], 0),
            ("truncflag", &[257], 1),
        ];
        for (name, args, want) in cases {
            let fx = find(name).unwrap();
            let f = fx.lower(Dialect::Cm).unwrap();
            let got = eval_mir(&f, args, DEFAULT_FUEL).unwrap();
            assert_eq!(
                got,
                Outcome::ret(f.ret, *want),
                "{}({:?})",
                name,
                args
            );
        }
    }

    #[test]
    fn avg_never_overflows_where_naive_add_would() {
        let f = find("avg8").unwrap().lower(Dialect::Gm).unwrap();
        assert_eq!(
            eval_mir(&f, &[120, 120], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 120)
        );
    }
}
