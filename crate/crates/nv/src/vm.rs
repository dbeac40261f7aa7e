// SPDX-License-Identifier: Apache-2.0

//! Interpreter for the stack-machine bytecode produced by [`crate::compiler`].
//! Execution is fueled (each opcode costs one unit) and can record a trace of
//! executed mnemonics for dynamic diversity measurement.

use crate::compiler::{verify_stack_balance, BcOp, BytecodeUnit};
use crate::exec::{eval_bin, eval_cast, ExecError, Outcome, Trace, TrapReason};

/// Run a bytecode unit on raw (already masked) argument bits.
///
/// Returns the outcome plus, when `trace` is set, the sequence of executed
/// opcode mnemonics. Malformed units (bad jump targets, stack underflow) are
/// rejected up front by the static verifier.
pub fn run_bytecode(
    u: &BytecodeUnit,
    args: &[u64],
    fuel: u64,
    trace: bool,
) -> Result<(Outcome, Option<Trace>), ExecError> {
    if args.len() != u.params.len() {
        return Err(ExecError::ArgMismatch {
            expected: u.params.len(),
            got: args.len(),
        });
    }
    verify_stack_balance(u).map_err(ExecError::MalformedBytecode)?;

    let mut locals = vec![0u64; u.nlocals as usize];
    for (slot, (bits, ty)) in args.iter().zip(&u.params).enumerate() {
        locals[slot] = bits & ty.mask();
    }
    let mut stack: Vec<u64> = Vec::with_capacity(16);
    let mut tr = trace.then(Trace::default);
    let mut pc = 0usize;
    let mut fuel = fuel;

    loop {
        if fuel == 0 {
            return Ok((Outcome::Trap(TrapReason::FuelExhausted), tr));
        }
        fuel -= 1;
        let op = &u.ops[pc];
        if let Some(t) = tr.as_mut() {
            t.opcodes.push(op.mnemonic());
        }
        pc += 1;
        match op {
            BcOp::Push { ty, bits } => stack.push(bits & ty.mask()),
            BcOp::LdLoc(n) => stack.push(locals[*n as usize]),
            BcOp::StLoc(n) => locals[*n as usize] = stack.pop().expect("verified"),
            BcOp::Bin { op, ty } => {
                let b = stack.pop().expect("verified");
                let a = stack.pop().expect("verified");
                match eval_bin(*op, *ty, a, b) {
                    Ok(v) => stack.push(v),
                    Err(reason) => return Ok((Outcome::Trap(reason), tr)),
                }
            }
            BcOp::Cmp { pred, ty } => {
                let b = stack.pop().expect("verified");
                let a = stack.pop().expect("verified");
                stack.push(pred.eval(*ty, a, b) as u64);
            }
            BcOp::Sel => {
                let c = stack.pop().expect("verified");
                let f = stack.pop().expect("verified");
                let t = stack.pop().expect("verified");
                stack.push(if c != 0 { t } else { f });
            }
            BcOp::Cast { kind, from, to } => {
                let v = stack.pop().expect("verified");
                stack.push(eval_cast(*kind, *from, *to, v));
            }
            BcOp::Jmp(t) => pc = *t as usize,
            BcOp::Jz(t) => {
                if stack.pop().expect("verified") == 0 {
                    pc = *t as usize;
                }
            }
            BcOp::Ret => {
                let v = stack.pop().expect("verified");
                return Ok((
                    Outcome::Return {
                        ty: u.ret,
                        bits: v & u.ret.mask(),
                    },
                    tr,
                ));
            }
            BcOp::Trap => return Ok((Outcome::Trap(TrapReason::ExplicitTrap), tr)),
        }
    }
}

/// Convenience wrapper taking signed arguments, mirroring
/// [`crate::exec::eval_mir`].
pub fn run_bytecode_signed(
    u: &BytecodeUnit,
    args: &[i64],
    fuel: u64,
) -> Result<Outcome, ExecError> {
    let bits: Vec<u64> = args
        .iter()
        .zip(&u.params)
        .map(|(v, ty)| ty.from_signed(*v))
        .collect();
    if bits.len() != args.len() || args.len() != u.params.len() {
        return Err(ExecError::ArgMismatch {
            expected: u.params.len(),
            got: args.len(),
        });
    }
    run_bytecode(u, &bits, fuel, false).map(|(o, _)| o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{lower_to_bytecode, optimize, OptLevel};
    use crate::exec::{eval_mir, DEFAULT_FUEL};
    use crate::mir::{parse_mir, MirType};

    #[test]
    fn interpreter_matches_evaluator_on_branchy_code() {
        let src = "\
func @abs(%x: i16) -> i16 {
entry:
  %neg = icmp.slt %x, const.i16 0
  condbr %neg, flip(%x), keep(%x)
flip(%v: i16):
  %n = sub const.i16 0, %v
  br join(%n)
keep(%w: i16):
  br join(%w)
join(%r: i16):
  ret %r
}
";
        let f = parse_mir(src).unwrap();
        let u = lower_to_bytecode(&f).unwrap();
        for x in [-32768i64, -5, -1, 0, 1, 17, 32767] {
            let want = eval_mir(&f, &[x], DEFAULT_FUEL).unwrap();
            let got = run_bytecode_signed(&u, &[x], DEFAULT_FUEL).unwrap();
            assert!(want.agrees_with(&got), "x={}: {:?} vs {:?}", x, want, got);
        }
    }

    #[test]
    fn divcheck_traps_on_zero() {
        let src = "\
func @d(%x: i8, %y: i8) -> i8 {
entry:
  %yc = intrinsic.gm.divcheck %y
  %q = sdiv %x, %yc
  ret %q
}
";
        let f = parse_mir(src).unwrap();
        let u = lower_to_bytecode(&f).unwrap();
        assert!(matches!(
            run_bytecode_signed(&u, &[7, 0], DEFAULT_FUEL).unwrap(),
            Outcome::Trap(TrapReason::ExplicitTrap)
        ));
        assert_eq!(
            run_bytecode_signed(&u, &[7, 2], DEFAULT_FUEL).unwrap(),
            Outcome::ret(MirType::I8, 3)
        );
    }

    #[test]
    fn fuel_exhaustion_reports_trap() {
        let src = "\
func @spin(%x: i8) -> i8 {
entry:
  br loop(%x)
loop(%v: i8):
  %n = add %v, const.i8 1
  br loop(%n)
}
";
        // A loop that never returns must exhaust fuel, not hang.
        let f = parse_mir(src).unwrap();
        let u = lower_to_bytecode(&f).unwrap();
        assert!(matches!(
            run_bytecode_signed(&u, &[0], 1000).unwrap(),
            Outcome::Trap(TrapReason::FuelExhausted)
        ));
    }

    #[test]
    fn trace_profiles_count_mnemonics() {
        let src = "func @f(%x: i8) -> i8 { entry: %y = add %x, const.i8 1 ret %y }";
        let f = parse_mir(src).unwrap();
        let u = lower_to_bytecode(&f).unwrap();
        let (_, tr) = run_bytecode(&u, &[1], DEFAULT_FUEL, true).unwrap();
        let profile = tr.unwrap().profile();
        assert_eq!(profile.get("add.8"), Some(&1u64));
        assert_eq!(profile.get("ldloc"), Some(&2u64));
    }

    #[test]
    fn optimization_levels_preserve_interpreter_outcomes() {
        let src = "\
func @mix(%a: i8, %b: i8) -> i8 {
entry:
  %s = add %a, %b
  %m = mul %s, const.i8 2
  %c = icmp.sge %m, const.i8 0
  %r = select %c, %m, %s
  ret %r
}
";
        let f = parse_mir(src).unwrap();
        let base = lower_to_bytecode(&f).unwrap();
        for level in OptLevel::all() {
            let u = lower_to_bytecode(&optimize(&f, level, None)).unwrap();
            for a in (-128..=127).step_by(17) {
                for b in (-128..=127).step_by(13) {
                    let want = run_bytecode_signed(&base, &[a, b], DEFAULT_FUEL).unwrap();
                    let got = run_bytecode_signed(&u, &[a, b], DEFAULT_FUEL).unwrap();
                    assert!(want.agrees_with(&got));
                }
            }
        }
    }
}
