//! Multi-tape prefix Turing machine VM with resource-bounded execution.
//!
//! A machine has four kinds of tapes:
//!
//! - a binary, unidirectional, read-only *program* tape holding the program
//!   bits `z` (no blanks; reading past the end of `z` is observable),
//! - a read-only *input* tape holding `SEP, x_1, .., x_n, END`,
//! - a bidirectional, read-write *work* tape (symbol 0 is blank),
//! - `num_output_tapes` write-once, unidirectional *output* tapes.
//!
//! Each step the transition function reads the current state and the symbols
//! under the program, input, and work heads, then optionally writes to the
//! work tape, appends one bit to any output tapes, moves heads, and either
//! continues in a new state or halts. Output tapes encode one rational logit
//! each; see [`decode`] for the tape grammar.

mod decode;
mod enumerate;
mod io;
pub mod toy;
mod vm;

pub use decode::{decode_output_tapes, encode_rational, DecodeError, RationalLogit};
pub use enumerate::{
    bounded_codelength_oracles, enumerate_halting_programs, BoundedCodelengths, Dataset,
    EnumeratedProgram,
};
pub use io::machine_from_json;
pub use vm::{model_function, run, HaltInfo, ModelFunction, RunOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Head movement direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Move {
    Left,
    Right,
}

/// Everything a single transition does after reading the heads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub next_state: usize,
    /// Symbol written at the work head, if any.
    pub work_write: Option<u8>,
    /// Bit appended to each output tape this step (one slot per tape).
    pub output_writes: Vec<Option<u8>>,
    /// Advance the program head one cell to the right.
    pub prog_move: bool,
    pub input_move: Option<Move>,
    pub work_move: Option<Move>,
    pub halt: bool,
}

impl Action {
    /// A no-op action that keeps the machine in `state` forever.
    pub fn stay(state: usize, num_output_tapes: usize) -> Self {
        Action {
            next_state: state,
            work_write: None,
            output_writes: vec![None; num_output_tapes],
            prog_move: false,
            input_move: None,
            work_move: None,
            halt: false,
        }
    }
}

/// Transition table plus tape configuration for a multi-tape prefix Turing
/// machine.
///
/// The input tape alphabet is `0..input_vocab` for ordinary tokens, followed
/// by the delimiters `SEP = input_vocab` and `END = input_vocab + 1`. The
/// work tape alphabet is `0..work_symbols` with 0 as the blank. The table is
/// dense: it holds one [`Action`] for every
/// `(state, program bit, input symbol, work symbol)` tuple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrefixTmSpec {
    pub num_states: usize,
    pub work_symbols: usize,
    pub input_vocab: usize,
    pub num_output_tapes: usize,
    table: Vec<Action>,
}

/// Validation failures for a machine description.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MachineError {
    #[error("machine must have at least one state, one work symbol, and one output tape")]
    EmptyMachine,
    #[error("missing transition for state={state} prog={prog} input={input} work={work}")]
    MissingTransition {
        state: usize,
        prog: u8,
        input: u8,
        work: u8,
    },
    #[error("transition at state={state} refers to next_state {next} >= num_states {num_states}")]
    BadNextState {
        state: usize,
        next: usize,
        num_states: usize,
    },
    #[error("transition writes work symbol {symbol} >= work_symbols {work_symbols}")]
    BadWorkWrite { symbol: u8, work_symbols: usize },
    #[error("transition writes {got} output slots, machine has {want} output tapes")]
    BadOutputArity { got: usize, want: usize },
    #[error("output write {bit} is not a bit")]
    BadOutputBit { bit: u8 },
    #[error("malformed machine file: {0}")]
    Malformed(String),
}

impl PrefixTmSpec {
    /// Builds a machine from a closure giving the action for every read
    /// tuple. Input symbols run over `0..input_vocab + 2` (the last two are
    /// SEP and END).
    pub fn from_fn(
        num_states: usize,
        work_symbols: usize,
        input_vocab: usize,
        num_output_tapes: usize,
        mut f: impl FnMut(usize, u8, u8, u8) -> Action,
    ) -> Result<Self, MachineError> {
        let input_symbols = input_vocab + 2;
        let mut table = Vec::with_capacity(num_states * 2 * input_symbols * work_symbols);
        for state in 0..num_states {
            for prog in 0..2u8 {
                for input in 0..input_symbols as u8 {
                    for work in 0..work_symbols as u8 {
                        table.push(f(state, prog, input, work));
                    }
                }
            }
        }
        let spec = PrefixTmSpec {
            num_states,
            work_symbols,
            input_vocab,
            num_output_tapes,
            table,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn input_symbols(&self) -> usize {
        self.input_vocab + 2
    }

    pub fn sep_symbol(&self) -> u8 {
        self.input_vocab as u8
    }

    pub fn end_symbol(&self) -> u8 {
        self.input_vocab as u8 + 1
    }

    fn index(&self, state: usize, prog: u8, input: u8, work: u8) -> usize {
        ((state * 2 + prog as usize) * self.input_symbols() + input as usize) * self.work_symbols
            + work as usize
    }

    /// Looks up the action for a read tuple. Panics if indices are out of
    /// range; the VM only calls this with validated symbols.
    pub fn action(&self, state: usize, prog: u8, input: u8, work: u8) -> &Action {
        &self.table[self.index(state, prog, input, work)]
    }

    /// Checks the table is total over its declared domain and every action
    /// stays within the declared alphabets.
    pub fn validate(&self) -> Result<(), MachineError> {
        if self.num_states == 0 || self.work_symbols == 0 || self.num_output_tapes == 0 {
            return Err(MachineError::EmptyMachine);
        }
        let expect = self.num_states * 2 * self.input_symbols() * self.work_symbols;
        if self.table.len() != expect {
            return Err(MachineError::Malformed(format!(
                "transition table has {} entries, expected {}",
                self.table.len(),
                expect
            )));
        }
        for (i, action) in self.table.iter().enumerate() {
            let state = i / (2 * self.input_symbols() * self.work_symbols);
            if action.next_state >= self.num_states {
                return Err(MachineError::BadNextState {
                    state,
                    next: action.next_state,
                    num_states: self.num_states,
                });
            }
            if let Some(sym) = action.work_write {
                if sym as usize >= self.work_symbols {
                    return Err(MachineError::BadWorkWrite {
                        symbol: sym,
                        work_symbols: self.work_symbols,
                    });
                }
            }
            if action.output_writes.len() != self.num_output_tapes {
                return Err(MachineError::BadOutputArity {
                    got: action.output_writes.len(),
                    want: self.num_output_tapes,
                });
            }
            for bit in action.output_writes.iter().flatten() {
                if *bit > 1 {
                    return Err(MachineError::BadOutputBit { bit: *bit });
                }
            }
        }
        Ok(())
    }
}

/// Time and space resource bound.
///
/// `r_t` caps the number of transition steps and `r_s` caps the number of
/// registers used on any tape (highest index touched, plus one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceBound {
    pub r_t: usize,
    pub r_s: usize,
}

impl ResourceBound {
    pub fn new(r_t: usize, r_s: usize) -> Self {
        ResourceBound { r_t, r_s }
    }

    /// True when `self` grants no more resources than `other` in both
    /// dimensions.
    pub fn within(&self, other: &ResourceBound) -> bool {
        self.r_t <= other.r_t && self.r_s <= other.r_s
    }
}

/// A finite binary program for the program tape.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProgramBits {
    bits: Vec<u8>,
}

impl ProgramBits {
    pub fn new(bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|b| *b <= 1), "program bits must be 0 or 1");
        ProgramBits { bits }
    }

    pub fn empty() -> Self {
        ProgramBits { bits: Vec::new() }
    }

    /// Parses a string of `0`s and `1`s.
    pub fn parse(s: &str) -> Option<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(0),
                '1' => bits.push(1),
                _ => return None,
            }
        }
        Some(ProgramBits { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bit(&self, i: usize) -> Option<u8> {
        self.bits.get(i).copied()
    }

    pub fn extended(&self, bit: u8) -> Self {
        let mut bits = self.bits.clone();
        bits.push(bit);
        ProgramBits { bits }
    }

    /// True when `self` is a proper prefix of `other`.
    pub fn is_proper_prefix_of(&self, other: &ProgramBits) -> bool {
        self.len() < other.len() && other.bits[..self.len()] == self.bits[..]
    }
}

impl std::fmt::Display for ProgramBits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}
