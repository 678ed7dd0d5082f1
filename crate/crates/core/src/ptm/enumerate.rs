//! Brute-force enumeration of halting programs and the bounded codelength
//! oracles built on top of it.
//!
//! A program `z` is accepted when, for every probe input, the machine halts
//! within the bound with a grammatically valid output *and* has scanned all
//! `|z|` program bits. Requiring full consumption on every probe makes the
//! accepted set prefix-free, which is what Kraft's inequality and the
//! two-part/Bayesian oracle definitions rely on. Probes standing in for the
//! full (countable) input space is an explicit approximation; callers choose
//! the probe set.

use super::decode::{decode_output_tapes, RationalLogit};
use super::vm::{run, RunOutcome};
use super::{PrefixTmSpec, ProgramBits, ResourceBound};
use serde::Serialize;

/// A program accepted by the enumeration, with its decoded logits on every
/// probe input.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedProgram {
    pub bits: ProgramBits,
    /// One logit vector per probe input, in probe order.
    pub probe_logits: Vec<Vec<RationalLogit>>,
}

enum Verdict {
    /// Halted on every probe, scanned exactly `|z|` bits, outputs decode.
    Member(Vec<Vec<RationalLogit>>),
    /// Every probe ran past the end of `z`; extensions may succeed.
    Extend,
    /// No extension of `z` can be accepted.
    Dead,
}

fn classify(
    tm: &PrefixTmSpec,
    z: &ProgramBits,
    bound: &ResourceBound,
    probes: &[Vec<u8>],
) -> Verdict {
    let mut all_exhausted = true;
    let mut logits = Vec::with_capacity(probes.len());
    for probe in probes {
        match run(tm, z, probe, bound) {
            RunOutcome::ProgramExhausted => {
                // Cannot be a member, but extensions continue from here.
            }
            RunOutcome::Halted(info) => {
                all_exhausted = false;
                if info.program_bits_read != z.len() {
                    // Halted with unread trailing bits: this probe pins the
                    // consumed prefix, so no extension can ever consume more.
                    return Verdict::Dead;
                }
                match decode_output_tapes(&info.output_tapes) {
                    Ok(l) => logits.push(l),
                    // Extensions replay the same halting run, so an invalid
                    // output is just as fatal for them.
                    Err(_) => return Verdict::Dead,
                }
            }
            // The run never read past the end of z, so extensions replay it.
            RunOutcome::ResourceExceeded => return Verdict::Dead,
        }
    }
    if all_exhausted && !probes.is_empty() {
        Verdict::Extend
    } else if logits.len() == probes.len() {
        Verdict::Member(logits)
    } else {
        // Mixed halted/exhausted probes: the halted ones already consumed
        // fewer bits than any extension would have.
        Verdict::Dead
    }
}

/// Enumerates all programs of length at most `max_len` that halt with a
/// valid output on every probe input, consuming their bits exactly.
///
/// The result is prefix-free and listed in lexicographic order. An empty
/// result is valid. `max_len` must not exceed `bound.r_s`, since a program
/// longer than the register bound could never be fully scanned.
pub fn enumerate_halting_programs(
    tm: &PrefixTmSpec,
    bound: &ResourceBound,
    max_len: usize,
    probes: &[Vec<u8>],
) -> Vec<EnumeratedProgram> {
    assert!(
        max_len <= bound.r_s,
        "max_len {} exceeds register bound {}",
        max_len,
        bound.r_s
    );
    let mut members = Vec::new();
    let mut stack = vec![ProgramBits::empty()];
    while let Some(z) = stack.pop() {
        match classify(tm, &z, bound, probes) {
            Verdict::Member(probe_logits) => members.push(EnumeratedProgram {
                bits: z,
                probe_logits,
            }),
            Verdict::Extend => {
                if z.len() < max_len {
                    // Push 1 first so 0 pops first: lexicographic output.
                    stack.push(z.extended(1));
                    stack.push(z.extended(0));
                }
            }
            Verdict::Dead => {}
        }
    }
    members
}

/// Kraft sum `sum over z of 2^-|z|` for an enumerated set.
pub fn kraft_sum(programs: &[EnumeratedProgram]) -> f64 {
    programs.iter().map(|p| (-(p.bits.len() as f64)).exp2()).sum()
}

/// A labelled dataset: token-sequence inputs paired with class indices in
/// `0..num_output_tapes`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Vec<u8>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<u8>>, labels: Vec<usize>) -> Self {
        assert_eq!(inputs.len(), labels.len());
        Dataset { inputs, labels }
    }
}

/// Bounded two-part and Bayesian codelengths computed by exhaustive
/// enumeration. `None` fields mean the enumeration was empty (infinite
/// codelength).
#[derive(Debug, Clone, Serialize)]
pub struct BoundedCodelengths {
    pub two_part_bits: Option<f64>,
    pub bayes_bits: Option<f64>,
    pub argmin_program: Option<String>,
    pub kraft_sum: f64,
    pub num_programs: usize,
}

/// Negative log likelihood in bits of the labels under softmax-normalized
/// logits, summed over the dataset.
pub fn nll_bits(probe_logits: &[Vec<RationalLogit>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (logits, label) in probe_logits.iter().zip(labels) {
        let values: Vec<f64> = logits.iter().map(RationalLogit::value).collect();
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = values.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        total += -(values[*label] - log_z) / std::f64::consts::LN_2;
    }
    total
}

/// Computes the bounded two-part codelength, its Bayesian counterpart, and
/// the argmin program by enumerating all halting programs up to `max_len`
/// with the dataset inputs as probes.
///
/// The two-part codelength is the minimum over enumerated programs of
/// `|z| + NLL bits`; the Bayesian codelength is `-log2 sum over z of
/// 2^-|z| * p(Y|X; f_z)`, which never exceeds the two-part value.
pub fn bounded_codelength_oracles(
    tm: &PrefixTmSpec,
    bound: &ResourceBound,
    max_len: usize,
    dataset: &Dataset,
) -> BoundedCodelengths {
    let programs = enumerate_halting_programs(tm, bound, max_len, &dataset.inputs);
    let kraft = kraft_sum(&programs);
    if programs.is_empty() {
        return BoundedCodelengths {
            two_part_bits: None,
            bayes_bits: None,
            argmin_program: None,
            kraft_sum: kraft,
            num_programs: 0,
        };
    }

    let mut best: Option<(f64, &EnumeratedProgram)> = None;
    // log2 terms of the Bayesian mixture, combined by log-sum-exp.
    let mut log2_terms = Vec::with_capacity(programs.len());
    for prog in &programs {
        let nll = nll_bits(&prog.probe_logits, &dataset.labels);
        let two_part = prog.bits.len() as f64 + nll;
        if best.map_or(true, |(b, _)| two_part < b) {
            best = Some((two_part, prog));
        }
        log2_terms.push(-two_part);
    }
    let max_term = log2_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bayes = -(max_term
        + log2_terms
            .iter()
            .map(|t| (t - max_term).exp2())
            .sum::<f64>()
            .log2());

    let (two_part, argmin) = best.unwrap();
    BoundedCodelengths {
        two_part_bits: Some(two_part),
        bayes_bits: Some(bayes),
        argmin_program: Some(argmin.bits.to_string()),
        kraft_sum: kraft,
        num_programs: programs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Action, Move};
    use super::*;

    /// Machine whose first program bit selects the sign of a constant +-1/1
    /// logit. It scans exactly one program bit: the head never advances, so
    /// later steps re-read the same consumed cell.
    pub(crate) fn sign_select_machine() -> PrefixTmSpec {
        PrefixTmSpec::from_fn(4, 1, 1, 1, |state, prog, _, _| match state {
            // Write the sign bit from the program tape; the head stays put.
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

    #[test]
    fn sign_select_machine_enumerates_two_length_one_programs() {
        let tm = sign_select_machine();
        let probes = vec![vec![], vec![0]];
        let out = enumerate_halting_programs(&tm, &ResourceBound::new(10, 8), 4, &probes);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].bits.to_string(), "0");
        assert_eq!(out[1].bits.to_string(), "1");
        assert_eq!(out[0].probe_logits[0], vec![RationalLogit::new(false, 1, 1)]);
        assert_eq!(out[1].probe_logits[0], vec![RationalLogit::new(true, 1, 1)]);
        assert!((kraft_sum(&out) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_max_len_yields_empty_set() {
        // Any machine that takes a step scans program cell 0, so the empty
        // program is never fully consumable.
        let tm = sign_select_machine();
        let out = enumerate_halting_programs(&tm, &ResourceBound::new(10, 8), 0, &[vec![]]);
        assert!(out.is_empty());
    }

    #[test]
    fn enumeration_is_prefix_free_and_kraft_bounded() {
        // Machine that consumes program bits until it reads a 0, then halts
        // with a +1/1 logit; accepted programs are 0, 10, 110, ... The head
        // stops on the terminating 0 so that bit is the last one scanned.
        let tm = PrefixTmSpec::from_fn(4, 1, 1, 1, |state, prog, _, _| match (state, prog) {
            (0, 1) => Action {
                prog_move: true,
                ..Action::stay(0, 1)
            },
            (0, 0) => Action {
                output_writes: vec![Some(0)],
                next_state: 1,
                ..Action::stay(0, 1)
            },
            (1, _) => Action {
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
        .unwrap();
        let out = enumerate_halting_programs(&tm, &ResourceBound::new(20, 10), 6, &[vec![]]);
        let lengths: Vec<usize> = out.iter().map(|p| p.bits.len()).collect();
        assert_eq!(lengths, vec![1, 2, 3, 4, 5, 6]);
        for a in &out {
            for b in &out {
                assert!(!a.bits.is_proper_prefix_of(&b.bits));
            }
        }
        let kraft = kraft_sum(&out);
        assert!(kraft <= 1.0 + 1e-12, "kraft sum {kraft} exceeds 1");
    }

    #[test]
    fn resource_monotonicity_grows_the_set() {
        let tm = sign_select_machine();
        let probes = vec![vec![]];
        let small = enumerate_halting_programs(&tm, &ResourceBound::new(2, 4), 4, &probes);
        let large = enumerate_halting_programs(&tm, &ResourceBound::new(10, 8), 4, &probes);
        for p in &small {
            assert!(large.iter().any(|q| q.bits == p.bits));
        }
        assert!(small.len() <= large.len());
    }

    #[test]
    fn two_part_matches_hand_computation() {
        // Single dominating program: |z| = 1, and the machine's logit gives
        // the label probability; with one output tape softmax over a single
        // logit is 1, so NLL is 0 and the two-part codelength is 1 bit.
        let tm = sign_select_machine();
        let dataset = Dataset::new(vec![vec![]], vec![0]);
        let out = bounded_codelength_oracles(&tm, &ResourceBound::new(10, 8), 4, &dataset);
        assert_eq!(out.num_programs, 2);
        assert!((out.two_part_bits.unwrap() - 1.0).abs() < 1e-12);
        // Two programs of length 1 with identical (single-tape) likelihood:
        // bayes = -log2(2 * 2^-1 * 1) = 0.
        assert!(out.bayes_bits.unwrap().abs() < 1e-12);
        assert!(out.bayes_bits.unwrap() <= out.two_part_bits.unwrap());
    }

    #[test]
    fn empty_enumeration_reports_infinite_marker() {
        // A machine that never halts.
        let tm = PrefixTmSpec::from_fn(1, 1, 1, 1, |_, _, _, _| Action {
            prog_move: false,
            ..Action::stay(0, 1)
        })
        .unwrap();
        let dataset = Dataset::new(vec![vec![]], vec![0]);
        let out = bounded_codelength_oracles(&tm, &ResourceBound::new(10, 8), 4, &dataset);
        assert_eq!(out.num_programs, 0);
        assert!(out.two_part_bits.is_none());
        assert!(out.bayes_bits.is_none());
        assert!(out.argmin_program.is_none());
    }

    #[test]
    fn program_tape_counts_against_registers() {
        // The sign-select machine consumes one bit; r_s >= 1 suffices for
        // the program tape but the output tape needs 3 registers.
        let tm = sign_select_machine();
        let out = enumerate_halting_programs(&tm, &ResourceBound::new(10, 2), 2, &[vec![]]);
        assert!(out.is_empty());
        let out = enumerate_halting_programs(&tm, &ResourceBound::new(10, 3), 2, &[vec![]]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn input_walkoff_is_pruned() {
        // Machine walks left off the input tape immediately: dead for every
        // program, so nothing is enumerated.
        let tm = PrefixTmSpec::from_fn(1, 1, 1, 1, |_, _, _, _| Action {
            input_move: Some(Move::Left),
            ..Action::stay(0, 1)
        })
        .unwrap();
        let out = enumerate_halting_programs(&tm, &ResourceBound::new(10, 8), 4, &[vec![0]]);
        assert!(out.is_empty());
    }
}
