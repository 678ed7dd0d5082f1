//! Emulation of single-tape Turing machines.
//!
//! The Transformer input sequence *is* the tape: each position is one
//! register, with the boundary tokens mapped to extra symbol classes the
//! machine can observe (`START`, `END`, and `SEP` get ids `num_symbols`,
//! `num_symbols + 1`, `num_symbols + 2`). One machine step runs per layer.
//! The head is a per-position indicator moved through relative attention;
//! moving right is blocked onto a START-class cell and moving left onto an
//! END-class cell, and a head that falls off the sequence vanishes, which
//! freezes the machine.

use crate::ptm::Move;
use crate::symprog::{
    head, var, AttentionHeadSpec, Cond, Rule, SymbolicProgram, TokenPredicate, VariableSpec,
};
use thiserror::Error;

/// One transition of a single-tape machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingleTapeAction {
    pub next_state: usize,
    /// Symbol written at the head (must be a writable machine symbol).
    pub write: Option<u8>,
    pub movement: Option<Move>,
    pub halt: bool,
}

impl SingleTapeAction {
    pub fn stay(state: usize) -> Self {
        SingleTapeAction {
            next_state: state,
            write: None,
            movement: None,
            halt: false,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SingleTapeError {
    #[error("next_state {0} out of range")]
    BadState(usize),
    #[error("written symbol {0} out of range")]
    BadWrite(u8),
}

/// A single-tape machine over `num_symbols` writable symbols, plus the three
/// read-only boundary classes.
#[derive(Debug, Clone)]
pub struct SingleTapeMachine {
    pub num_states: usize,
    pub num_symbols: usize,
    table: Vec<SingleTapeAction>,
}

impl SingleTapeMachine {
    pub const fn start_class(num_symbols: usize) -> usize {
        num_symbols
    }

    pub const fn end_class(num_symbols: usize) -> usize {
        num_symbols + 1
    }

    pub const fn sep_class(num_symbols: usize) -> usize {
        num_symbols + 2
    }

    /// Total number of observable symbol classes.
    pub fn symbol_classes(&self) -> usize {
        self.num_symbols + 3
    }

    /// Builds a machine from a closure over `(state, observed symbol)`.
    pub fn from_fn(
        num_states: usize,
        num_symbols: usize,
        mut f: impl FnMut(usize, usize) -> SingleTapeAction,
    ) -> Result<Self, SingleTapeError> {
        let classes = num_symbols + 3;
        let mut table = Vec::with_capacity(num_states * classes);
        for state in 0..num_states {
            for sym in 0..classes {
                let action = f(state, sym);
                if action.next_state >= num_states {
                    return Err(SingleTapeError::BadState(action.next_state));
                }
                if let Some(w) = action.write {
                    if w as usize >= num_symbols {
                        return Err(SingleTapeError::BadWrite(w));
                    }
                }
                table.push(action);
            }
        }
        Ok(SingleTapeMachine {
            num_states,
            num_symbols,
            table,
        })
    }

    pub fn action(&self, state: usize, symbol: usize) -> &SingleTapeAction {
        &self.table[state * self.symbol_classes() + symbol]
    }
}

/// Builds the emulator program: variables `halted`, `state`, `symbol`,
/// `head`, `one`, attention heads `head_symbol` / `head_left` /
/// `head_right`, and write/move/halt rules, one machine step per layer.
pub fn build_single_tape_tm_program(machine: &SingleTapeMachine) -> SymbolicProgram {
    let classes = machine.symbol_classes();
    let start_class = SingleTapeMachine::start_class(machine.num_symbols);
    let end_class = SingleTapeMachine::end_class(machine.num_symbols);
    let sep_class = SingleTapeMachine::sep_class(machine.num_symbols);

    let mut symbol = VariableSpec::categorical("symbol", classes, 0);
    for v in 0..machine.num_symbols as u8 {
        symbol = symbol.with_init(TokenPredicate::IsVocab(v), v as i64);
    }
    symbol = symbol
        .with_init(TokenPredicate::IsStart, start_class as i64)
        .with_init(TokenPredicate::IsEnd, end_class as i64)
        .with_init(TokenPredicate::IsSep, sep_class as i64);

    let variables = vec![
        VariableSpec::binary("halted", 0),
        VariableSpec::categorical("state", machine.num_states, 0),
        symbol,
        VariableSpec::binary("head", 0).with_init(TokenPredicate::IsStart, 1),
        VariableSpec::binary("one", 1),
    ];
    let heads = vec![
        AttentionHeadSpec::qkv("head_symbol", "one", "head", "symbol"),
        AttentionHeadSpec::relative("head_left", "head", -1),
        AttentionHeadSpec::relative("head_right", "head", 1),
    ];

    let mut rules = Vec::new();
    for state in 0..machine.num_states {
        for sym in 0..classes {
            let out = machine.action(state, sym);
            let base = || {
                vec![
                    Cond::Eq(var("halted"), 0),
                    Cond::Eq(var("state"), state),
                    Cond::Eq(head("head_symbol"), sym),
                ]
            };
            if out.next_state != state || out.halt {
                let mut rule = Rule::new(base());
                if out.next_state != state {
                    rule = rule.set("state", out.next_state);
                }
                if out.halt {
                    rule = rule.set("halted", 1);
                }
                rules.push(rule);
            }
            if let Some(w) = out.write {
                if w as usize != sym {
                    let mut conds = base();
                    conds.push(Cond::Eq(var("head"), 1));
                    conds.push(Cond::Eq(var("symbol"), sym));
                    rules.push(Rule::new(conds).set("symbol", w as usize));
                }
            }
            if let Some(movement) = out.movement {
                let mut clear = base();
                clear.push(Cond::Eq(var("head"), 1));
                rules.push(Rule::new(clear).set("head", 0));
                let mut take = base();
                take.push(Cond::Eq(var("head"), 0));
                match movement {
                    Move::Right => {
                        take.push(Cond::Eq(head("head_left"), 1));
                        take.push(Cond::Ne(var("symbol"), start_class));
                    }
                    Move::Left => {
                        take.push(Cond::Eq(head("head_right"), 1));
                        take.push(Cond::Ne(var("symbol"), end_class));
                    }
                }
                rules.push(Rule::new(take).set("head", 1));
            }
        }
    }

    SymbolicProgram {
        variables,
        heads,
        rules,
        outputs: vec!["symbol".to_string()],
        input_range: machine.num_symbols,
        num_layers_hint: 1,
    }
}

#[cfg(test)]
pub(crate) mod test_machines {
    use super::*;

    /// Moves right to the first tape cell (skipping SEP) and halts
    /// immediately without writing.
    pub fn halt_immediately() -> SingleTapeMachine {
        SingleTapeMachine::from_fn(1, 2, |_, _| SingleTapeAction {
            halt: true,
            ..SingleTapeAction::stay(0)
        })
        .unwrap()
    }

    /// Walks right past START and SEP, flips the first input symbol, halts.
    pub fn flip_first() -> SingleTapeMachine {
        let start = SingleTapeMachine::start_class(2);
        let sep = SingleTapeMachine::sep_class(2);
        SingleTapeMachine::from_fn(2, 2, |state, sym| match (state, sym) {
            (0, s) if s == start || s == sep => SingleTapeAction {
                movement: Some(Move::Right),
                next_state: if s == sep { 1 } else { 0 },
                ..SingleTapeAction::stay(0)
            },
            (1, 0) => SingleTapeAction {
                write: Some(1),
                halt: true,
                ..SingleTapeAction::stay(1)
            },
            (1, 1) => SingleTapeAction {
                write: Some(0),
                halt: true,
                ..SingleTapeAction::stay(1)
            },
            (s, _) => SingleTapeAction {
                halt: true,
                ..SingleTapeAction::stay(s)
            },
        })
        .unwrap()
    }

    /// Walks right to END and halts there, leaving the tape unchanged.
    pub fn seek_end() -> SingleTapeMachine {
        let end = SingleTapeMachine::end_class(2);
        SingleTapeMachine::from_fn(1, 2, |_, sym| {
            if sym == end {
                SingleTapeAction {
                    halt: true,
                    ..SingleTapeAction::stay(0)
                }
            } else {
                SingleTapeAction {
                    movement: Some(Move::Right),
                    ..SingleTapeAction::stay(0)
                }
            }
        })
        .unwrap()
    }

    /// Walks right overwriting every 1 with 0, halting at END.
    pub fn zero_all() -> SingleTapeMachine {
        let end = SingleTapeMachine::end_class(2);
        SingleTapeMachine::from_fn(1, 2, |_, sym| {
            if sym == end {
                SingleTapeAction {
                    halt: true,
                    ..SingleTapeAction::stay(0)
                }
            } else if sym == 1 {
                SingleTapeAction {
                    write: Some(0),
                    movement: Some(Move::Right),
                    ..SingleTapeAction::stay(0)
                }
            } else {
                SingleTapeAction {
                    movement: Some(Move::Right),
                    ..SingleTapeAction::stay(0)
                }
            }
        })
        .unwrap()
    }
}
