// SPDX-License-Identifier: Apache-2.0

//! N-version hardening toolchain for pure functions.
//!
//! The pipeline: parse a reference function in one of two small dialects
//! (`Cm`, `Gm`), generate candidate variants via an LLM provider or a
//! deterministic mock, validate each candidate through a four-filter funnel
//! ending in an exhaustive equivalence check, assemble the survivors into an
//! N-of-N voting bundle at the IR level, and measure the static and dynamic
//! diversity of the result. Injectable miscompilation bugs in the optimizer
//! demonstrate the fault model the bundle mitigates.

pub mod compiler;
pub mod diversify;
pub mod equiv;
pub mod exec;
pub mod fixtures;
pub mod frontends;
pub mod harness;
pub mod metrics;
pub mod mir;
pub mod validate;
pub mod vm;
