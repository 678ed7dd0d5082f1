//! Small example machines used by tests, the acceptance suite, and CLI
//! demos.

use super::{Action, Move, PrefixTmSpec};

/// Writes `0,1,0` (the logit +1/1) to its single output tape over three
/// steps and halts. Never moves the program head, so it consumes exactly
/// one program bit.
pub fn constant_unit() -> PrefixTmSpec {
    const_rational(&[0, 1, 0])
}

/// Writes a fixed bit string to its single output tape, one bit per step,
/// then halts. Consumes one program bit.
pub fn const_rational(bits: &[u8]) -> PrefixTmSpec {
    let n = bits.len();
    assert!(n >= 2, "need at least a sign and separator");
    let bits = bits.to_vec();
    PrefixTmSpec::from_fn(n, 1, 1, 1, move |state, _, _, _| Action {
        next_state: (state + 1).min(n - 1),
        output_writes: vec![Some(bits[state])],
        halt: state == n - 1,
        ..Action::stay(state, 1)
    })
    .unwrap()
}

/// The first program bit selects the sign of a constant +-1/1 logit.
/// Consumes exactly one program bit.
pub fn sign_select() -> PrefixTmSpec {
    PrefixTmSpec::from_fn(3, 1, 1, 1, |state, prog, _, _| match state {
        0 => Action {
            output_writes: vec![Some(prog)],
            next_state: 1,
            ..Action::stay(0, 1)
        },
        1 => Action {
            output_writes: vec![Some(1)],
            next_state: 2,
            ..Action::stay(1, 1)
        },
        _ => Action {
            output_writes: vec![Some(0)],
            halt: true,
            ..Action::stay(2, 1)
        },
    })
    .unwrap()
}

/// Counts leading 1s on the program tape: `z = 1^k 0` maps to the constant
/// logit `+k/1`. The head stops on the terminating 0, so exactly `k + 1`
/// bits are consumed and the accepted set is prefix-free.
pub fn prog_counter() -> PrefixTmSpec {
    PrefixTmSpec::from_fn(2, 1, 1, 1, |state, prog, _, _| match (state, prog) {
        (0, _) => Action {
            output_writes: vec![Some(0)],
            next_state: 1,
            ..Action::stay(0, 1)
        },
        (1, 1) => Action {
            output_writes: vec![Some(1)],
            prog_move: true,
            ..Action::stay(1, 1)
        },
        _ => Action {
            output_writes: vec![Some(0)],
            halt: true,
            ..Action::stay(1, 1)
        },
    })
    .unwrap()
}

/// Two-class parity machine: scans the input left to right and emits logit
/// 1 on output tape 0 for even inputs, or on tape 1 for odd inputs (the
/// other tape gets logit 0). Consumes one program bit.
pub fn parity_two_class() -> PrefixTmSpec {
    let vocab = 2usize;
    let end = (vocab + 1) as u8;
    PrefixTmSpec::from_fn(7, 1, vocab, 2, move |state, _, input, _| match state {
        // Write both sign bits and step off SEP onto the first symbol.
        0 => Action {
            output_writes: vec![Some(0), Some(0)],
            input_move: Some(Move::Right),
            next_state: 1,
            ..Action::stay(0, 2)
        },
        // Scanning with even parity so far.
        1 => {
            if input == end {
                Action {
                    next_state: 3,
                    ..Action::stay(1, 2)
                }
            } else {
                Action {
                    input_move: Some(Move::Right),
                    next_state: if input == 1 { 2 } else { 1 },
                    ..Action::stay(1, 2)
                }
            }
        }
        // Scanning with odd parity so far.
        2 => {
            if input == end {
                Action {
                    next_state: 5,
                    ..Action::stay(2, 2)
                }
            } else {
                Action {
                    input_move: Some(Move::Right),
                    next_state: if input == 1 { 1 } else { 2 },
                    ..Action::stay(2, 2)
                }
            }
        }
        // Even: tape 0 gets numerator 1, tape 1 goes straight to its
        // separator, then tape 0's separator ends the run.
        3 => Action {
            output_writes: vec![Some(1), Some(0)],
            next_state: 4,
            ..Action::stay(3, 2)
        },
        4 => Action {
            output_writes: vec![Some(0), None],
            halt: true,
            ..Action::stay(4, 2)
        },
        // Odd: mirrored.
        5 => Action {
            output_writes: vec![Some(0), Some(1)],
            next_state: 6,
            ..Action::stay(5, 2)
        },
        _ => Action {
            output_writes: vec![None, Some(0)],
            halt: true,
            ..Action::stay(6, 2)
        },
    })
    .unwrap()
}

/// Copies two program bits onto the work tape, reads them back, and emits
/// the logit `+popcount(z)/1`. Consumes exactly two program bits and
/// round-trips the work tape.
pub fn work_echo() -> PrefixTmSpec {
    PrefixTmSpec::from_fn(6, 3, 1, 1, |state, prog, _, work| match state {
        0 => Action {
            output_writes: vec![Some(0)],
            next_state: 1,
            ..Action::stay(0, 1)
        },
        1 => Action {
            work_write: Some(prog + 1),
            work_move: Some(Move::Right),
            prog_move: true,
            next_state: 2,
            ..Action::stay(1, 1)
        },
        2 => Action {
            work_write: Some(prog + 1),
            work_move: Some(Move::Left),
            next_state: 3,
            ..Action::stay(2, 1)
        },
        3 => Action {
            output_writes: vec![if work == 2 { Some(1) } else { None }],
            work_move: Some(Move::Right),
            next_state: 4,
            ..Action::stay(3, 1)
        },
        4 => Action {
            output_writes: vec![if work == 2 { Some(1) } else { None }],
            next_state: 5,
            ..Action::stay(4, 1)
        },
        _ => Action {
            output_writes: vec![Some(0)],
            halt: true,
            ..Action::stay(5, 1)
        },
    })
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::super::{decode_output_tapes, run, ProgramBits, RationalLogit, ResourceBound};
    use super::*;

    fn halt_value(tm: &PrefixTmSpec, z: &str, input: &[u8]) -> Vec<RationalLogit> {
        let out = run(
            tm,
            &ProgramBits::parse(z).unwrap(),
            input,
            &ResourceBound::new(40, 16),
        );
        decode_output_tapes(&out.halted().expect("halts").output_tapes).unwrap()
    }

    #[test]
    fn prog_counter_counts_leading_ones() {
        let tm = prog_counter();
        assert_eq!(halt_value(&tm, "0", &[])[0], RationalLogit::new(false, 0, 1));
        assert_eq!(halt_value(&tm, "110", &[])[0], RationalLogit::new(false, 2, 1));
    }

    #[test]
    fn parity_two_class_matches_popcount() {
        let tm = parity_two_class();
        for input in [vec![], vec![1], vec![1, 0, 1], vec![1, 1, 1]] {
            let logits = halt_value(&tm, "0", &input);
            let odd = input.iter().filter(|b| **b == 1).count() % 2 == 1;
            let expect = if odd {
                vec![RationalLogit::new(false, 0, 1), RationalLogit::new(false, 1, 1)]
            } else {
                vec![RationalLogit::new(false, 1, 1), RationalLogit::new(false, 0, 1)]
            };
            assert_eq!(logits, expect, "input {input:?}");
        }
    }

    #[test]
    fn work_echo_counts_program_ones() {
        let tm = work_echo();
        assert_eq!(halt_value(&tm, "00", &[])[0], RationalLogit::new(false, 0, 1));
        assert_eq!(halt_value(&tm, "10", &[])[0], RationalLogit::new(false, 1, 1));
        assert_eq!(halt_value(&tm, "11", &[])[0], RationalLogit::new(false, 2, 1));
    }
}
