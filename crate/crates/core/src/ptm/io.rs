//! Declarative JSON machine descriptions.
//!
//! A machine file lists transition entries as explicit tuples; `null` read
//! fields act as wildcards. Entries are applied in file order, so later
//! entries override earlier ones on overlapping tuples, which lets a file
//! give a broad default and then the specific cases.

use super::{Action, MachineError, Move, PrefixTmSpec};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct MachineFile {
    num_states: usize,
    work_symbols: usize,
    input_vocab: usize,
    num_output_tapes: usize,
    transitions: Vec<TransitionEntry>,
}

#[derive(Debug, Deserialize)]
struct TransitionEntry {
    state: Option<usize>,
    prog: Option<u8>,
    input: Option<u8>,
    work: Option<u8>,
    next_state: usize,
    #[serde(default)]
    work_write: Option<u8>,
    #[serde(default)]
    output_writes: Vec<Option<u8>>,
    #[serde(default)]
    prog_move: bool,
    #[serde(default)]
    input_move: Option<Move>,
    #[serde(default)]
    work_move: Option<Move>,
    #[serde(default)]
    halt: bool,
}

/// Parses a machine description from JSON text.
pub fn machine_from_json(json: &str) -> Result<PrefixTmSpec, MachineError> {
    let file: MachineFile =
        serde_json::from_str(json).map_err(|e| MachineError::Malformed(e.to_string()))?;
    let input_symbols = file.input_vocab + 2;
    let mut table: Vec<Option<Action>> =
        vec![None; file.num_states * 2 * input_symbols * file.work_symbols];

    for entry in &file.transitions {
        let mut output_writes = entry.output_writes.clone();
        if output_writes.is_empty() {
            output_writes = vec![None; file.num_output_tapes];
        }
        let action = Action {
            next_state: entry.next_state,
            work_write: entry.work_write,
            output_writes,
            prog_move: entry.prog_move,
            input_move: entry.input_move,
            work_move: entry.work_move,
            halt: entry.halt,
        };
        let states: Vec<usize> = match entry.state {
            Some(s) => vec![s],
            None => (0..file.num_states).collect(),
        };
        let progs: Vec<u8> = match entry.prog {
            Some(p) => vec![p],
            None => vec![0, 1],
        };
        let inputs: Vec<u8> = match entry.input {
            Some(i) => vec![i],
            None => (0..input_symbols as u8).collect(),
        };
        let works: Vec<u8> = match entry.work {
            Some(w) => vec![w],
            None => (0..file.work_symbols as u8).collect(),
        };
        for &s in &states {
            for &p in &progs {
                for &i in &inputs {
                    for &w in &works {
                        if s >= file.num_states
                            || p > 1
                            || (i as usize) >= input_symbols
                            || (w as usize) >= file.work_symbols
                        {
                            return Err(MachineError::Malformed(format!(
                                "transition entry out of range: state={s} prog={p} input={i} work={w}"
                            )));
                        }
                        let idx = ((s * 2 + p as usize) * input_symbols + i as usize)
                            * file.work_symbols
                            + w as usize;
                        table[idx] = Some(action.clone());
                    }
                }
            }
        }
    }

    let mut actions = Vec::with_capacity(table.len());
    for (idx, slot) in table.into_iter().enumerate() {
        match slot {
            Some(a) => actions.push(a),
            None => {
                let per_state = 2 * input_symbols * file.work_symbols;
                let state = idx / per_state;
                let rem = idx % per_state;
                let prog = (rem / (input_symbols * file.work_symbols)) as u8;
                let rem = rem % (input_symbols * file.work_symbols);
                return Err(MachineError::MissingTransition {
                    state,
                    prog,
                    input: (rem / file.work_symbols) as u8,
                    work: (rem % file.work_symbols) as u8,
                });
            }
        }
    }

    let spec = PrefixTmSpec {
        num_states: file.num_states,
        work_symbols: file.work_symbols,
        input_vocab: file.input_vocab,
        num_output_tapes: file.num_output_tapes,
        table: actions,
    };
    spec.validate()?;
    Ok(spec)
}
