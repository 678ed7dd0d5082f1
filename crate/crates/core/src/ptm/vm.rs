//! Resource-bounded execution of prefix Turing machines.

use super::decode::{decode_output_tapes, RationalLogit};
use super::{Move, PrefixTmSpec, ProgramBits, ResourceBound};

/// Detail carried by a halting run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaltInfo {
    pub output_tapes: Vec<Vec<u8>>,
    pub steps: usize,
    /// Maximum registers used on any single tape.
    pub max_registers: usize,
    /// Number of program tape cells scanned. The program is fully consumed
    /// when this equals the program length.
    pub program_bits_read: usize,
}

/// Result of running a machine under a resource bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Halted(HaltInfo),
    /// Ran past the step budget, touched a register past `r_s` on some tape,
    /// or wedged a head off the edge of its tape.
    ResourceExceeded,
    /// Tried to read a program cell past the end of the supplied bits. The
    /// run would continue under some longer program with this one as prefix.
    ProgramExhausted,
}

impl RunOutcome {
    pub fn halted(&self) -> Option<&HaltInfo> {
        match self {
            RunOutcome::Halted(info) => Some(info),
            _ => None,
        }
    }
}

/// Runs `tm` with program `z` on `input` (token ids in `0..input_vocab`)
/// under `bound`.
///
/// Deterministic in all arguments. The input tape is laid out as
/// `SEP, input..., END` with the head starting on SEP.
pub fn run(
    tm: &PrefixTmSpec,
    z: &ProgramBits,
    input: &[u8],
    bound: &ResourceBound,
) -> RunOutcome {
    debug_assert!(
        input.iter().all(|t| (*t as usize) < tm.input_vocab),
        "input symbols must be within the input alphabet"
    );
    let mut input_tape = Vec::with_capacity(input.len() + 2);
    input_tape.push(tm.sep_symbol());
    input_tape.extend_from_slice(input);
    input_tape.push(tm.end_symbol());

    let mut state = 0usize;
    let mut prog_pos = 0usize;
    let mut prog_read = 0usize;
    let mut input_pos = 0usize;
    let mut input_high = 0usize;
    let mut work: Vec<u8> = vec![0];
    let mut work_pos = 0usize;
    let mut work_high = 0usize;
    let mut outputs: Vec<Vec<u8>> = vec![Vec::new(); tm.num_output_tapes];
    let mut steps = 0usize;

    loop {
        if steps == bound.r_t {
            return RunOutcome::ResourceExceeded;
        }
        // Read all heads. The program cell is consumed by the lookup itself,
        // so a lookup past the end of z is the exhaustion event.
        if prog_pos >= z.len() {
            return RunOutcome::ProgramExhausted;
        }
        prog_read = prog_read.max(prog_pos + 1);
        let prog_sym = z.bits()[prog_pos];
        let input_sym = input_tape[input_pos];
        let work_sym = work[work_pos];

        let action = tm.action(state, prog_sym, input_sym, work_sym).clone();
        steps += 1;

        if let Some(sym) = action.work_write {
            work[work_pos] = sym;
        }
        for (tape, bit) in outputs.iter_mut().zip(&action.output_writes) {
            if let Some(bit) = bit {
                tape.push(*bit);
            }
        }
        if action.prog_move {
            prog_pos += 1;
        }
        match action.input_move {
            Some(Move::Left) => {
                if input_pos == 0 {
                    // Walked off the input tape; the machine can never make
                    // progress again, so the step budget is already lost.
                    return RunOutcome::ResourceExceeded;
                }
                input_pos -= 1;
            }
            Some(Move::Right) => {
                if input_pos + 1 >= input_tape.len() {
                    return RunOutcome::ResourceExceeded;
                }
                input_pos += 1;
            }
            None => {}
        }
        input_high = input_high.max(input_pos);
        match action.work_move {
            Some(Move::Left) => {
                if work_pos == 0 {
                    return RunOutcome::ResourceExceeded;
                }
                work_pos -= 1;
            }
            Some(Move::Right) => {
                work_pos += 1;
                if work_pos >= work.len() {
                    work.push(0);
                }
            }
            None => {}
        }
        work_high = work_high.max(work_pos);

        let registers = [
            prog_read,
            input_high + 1,
            work_high + 1,
            outputs.iter().map(Vec::len).max().unwrap_or(0),
        ];
        let max_registers = registers.into_iter().max().unwrap();
        if max_registers > bound.r_s {
            return RunOutcome::ResourceExceeded;
        }

        state = action.next_state;
        if action.halt {
            return RunOutcome::Halted(HaltInfo {
                output_tapes: outputs,
                steps,
                max_registers,
                program_bits_read: prog_read,
            });
        }
    }
}

/// The model function computed by a machine with a fixed program under a
/// resource bound, evaluable at any input.
pub struct ModelFunction<'a> {
    tm: &'a PrefixTmSpec,
    z: ProgramBits,
    bound: ResourceBound,
}

impl ModelFunction<'_> {
    /// Runs and decodes. Returns `None` (undefined) for inputs where the run
    /// does not halt with a valid output within the bound.
    pub fn eval(&self, input: &[u8]) -> Option<Vec<RationalLogit>> {
        match run(self.tm, &self.z, input, &self.bound) {
            RunOutcome::Halted(info) => decode_output_tapes(&info.output_tapes).ok(),
            _ => None,
        }
    }
}

/// Builds the evaluable model function for `(tm, z, bound)`.
pub fn model_function<'a>(
    tm: &'a PrefixTmSpec,
    z: ProgramBits,
    bound: ResourceBound,
) -> ModelFunction<'a> {
    ModelFunction { tm, z, bound }
}

#[cfg(test)]
mod tests {
    use super::super::Action;
    use super::*;

    /// Machine that writes `0,1,0` to its single output tape over three
    /// steps and halts, never moving the program head. Hand simulation:
    /// state 0 writes the sign bit 0, state 1 writes the single numerator 1,
    /// state 2 writes the separator 0 and halts.
    fn constant_machine() -> PrefixTmSpec {
        PrefixTmSpec::from_fn(3, 1, 1, 1, |state, _, _, _| {
            let (bit, halt) = match state {
                0 => (0, false),
                1 => (1, false),
                _ => (0, true),
            };
            Action {
                next_state: (state + 1).min(2),
                output_writes: vec![Some(bit)],
                halt,
                ..Action::stay(state, 1)
            }
        })
        .unwrap()
    }

    #[test]
    fn constant_machine_halts_with_unit_logit() {
        let tm = constant_machine();
        let bound = ResourceBound::new(10, 8);
        for z in ["0", "1", "10", "111"] {
            let z = ProgramBits::parse(z).unwrap();
            for input in [&[][..], &[0][..], &[0, 0, 0][..]] {
                let out = run(&tm, &z, input, &bound);
                let info = out.halted().expect("must halt");
                assert_eq!(info.output_tapes, vec![vec![0, 1, 0]]);
                assert_eq!(info.steps, 3);
                let logits = decode_output_tapes(&info.output_tapes).unwrap();
                assert_eq!(logits, vec![RationalLogit::new(false, 1, 1)]);
            }
        }
    }

    #[test]
    fn zero_step_budget_exceeds() {
        let tm = constant_machine();
        let z = ProgramBits::parse("0").unwrap();
        let out = run(&tm, &z, &[0], &ResourceBound::new(0, 8));
        assert_eq!(out, RunOutcome::ResourceExceeded);
    }

    #[test]
    fn empty_program_exhausts_immediately() {
        let tm = constant_machine();
        let out = run(&tm, &ProgramBits::empty(), &[0], &ResourceBound::new(10, 8));
        assert_eq!(out, RunOutcome::ProgramExhausted);
    }

    #[test]
    fn runaway_work_head_exceeds_registers_at_step_four() {
        // Moves the work head right forever; with r_s = 4 the fifth work
        // register is touched on step 4.
        let tm = PrefixTmSpec::from_fn(1, 2, 1, 1, |state, _, _, _| Action {
            work_move: Some(Move::Right),
            ..Action::stay(state, 1)
        })
        .unwrap();
        let z = ProgramBits::parse("0").unwrap();
        let bound = ResourceBound::new(100, 4);
        assert_eq!(run(&tm, &z, &[], &bound), RunOutcome::ResourceExceeded);
        // Hand simulation: steps 1..3 reach registers 2..4; allow exactly 3
        // steps and the run is still within bounds (then the budget ends).
        assert_eq!(
            run(&tm, &z, &[], &ResourceBound::new(3, 4)),
            RunOutcome::ResourceExceeded
        );
    }

    #[test]
    fn model_function_is_constant_for_constant_machine() {
        let tm = constant_machine();
        let f = model_function(&tm, ProgramBits::parse("1").unwrap(), ResourceBound::new(10, 8));
        for input in [&[][..], &[0][..], &[0, 0][..]] {
            assert_eq!(f.eval(input), Some(vec![RationalLogit::new(false, 1, 1)]));
        }
    }

    #[test]
    fn model_function_undefined_when_budget_too_small() {
        let tm = constant_machine();
        let f = model_function(&tm, ProgramBits::parse("1").unwrap(), ResourceBound::new(2, 8));
        assert_eq!(f.eval(&[0]), None);
    }

    #[test]
    fn first_symbol_machine_reads_parity_of_first_symbol() {
        // SEP -> step right; write 0 (sign); write a numerator 1 iff the
        // first symbol is 1; write the separator 0 and halt. Hand simulation
        // runs 3 or 4 steps.
        let tm = PrefixTmSpec::from_fn(4, 1, 2, 1, |state, _, input, _| match state {
            0 => Action {
                input_move: Some(Move::Right),
                next_state: 1,
                ..Action::stay(0, 1)
            },
            1 => Action {
                output_writes: vec![Some(0)],
                next_state: if input == 1 { 2 } else { 3 },
                ..Action::stay(1, 1)
            },
            2 => Action {
                output_writes: vec![Some(1)],
                next_state: 3,
                ..Action::stay(2, 1)
            },
            _ => Action {
                output_writes: vec![Some(0)],
                halt: true,
                ..Action::stay(3, 1)
            },
        })
        .unwrap();
        let bound = ResourceBound::new(10, 8);
        let f = model_function(&tm, ProgramBits::parse("0").unwrap(), bound);
        assert_eq!(f.eval(&[1, 0]), Some(vec![RationalLogit::new(false, 1, 1)]));
        assert_eq!(f.eval(&[0, 1]), Some(vec![RationalLogit::new(false, 0, 1)]));
    }

    #[test]
    fn run_is_deterministic() {
        let tm = constant_machine();
        let z = ProgramBits::parse("10").unwrap();
        let bound = ResourceBound::new(10, 8);
        let a = run(&tm, &z, &[0, 0], &bound);
        let b = run(&tm, &z, &[0, 0], &bound);
        assert_eq!(a, b);
    }
}
