//! Sequential parity and copy-last programs.

use crate::symprog::{
    head, var, AttentionHeadSpec, Cond, Rule, SymbolicProgram, TokenPredicate, VariableSpec,
};

/// Sequential parity over binary inputs, iterating right to left one
/// position per layer so the answer lands on the SEP token.
///
/// Each position becomes `ready` once its right neighbor is ready, at which
/// point its `acc` holds the parity of the suffix starting there. After at
/// least `len + 2` layers the SEP position holds the parity of the whole
/// input: `acc = 0` for even, `1` for odd.
pub fn build_parity_program() -> SymbolicProgram {
    let variables = vec![
        VariableSpec::categorical("acc", 2, 0),
        VariableSpec::categorical("ready", 2, 0).with_init(TokenPredicate::IsEnd, 1),
        VariableSpec::categorical("tok", 2, 0).with_init(TokenPredicate::IsVocab(1), 1),
    ];
    let heads = vec![
        AttentionHeadSpec::relative("right_ready", "ready", 1),
        AttentionHeadSpec::relative("right_acc", "acc", 1),
    ];
    let mut rules = Vec::new();
    for suffix_acc in 0..2usize {
        for tok in 0..2usize {
            let conds = vec![
                Cond::Eq(var("ready"), 0),
                Cond::Eq(var("acc"), 0),
                Cond::Eq(head("right_ready"), 1),
                Cond::Eq(head("right_acc"), suffix_acc),
                Cond::Eq(var("tok"), tok),
            ];
            let mut rule = Rule::new(conds).set("ready", 1);
            if suffix_acc ^ tok == 1 {
                rule = rule.set("acc", 1);
            }
            rules.push(rule);
        }
    }
    SymbolicProgram {
        variables,
        heads,
        rules,
        outputs: vec!["acc".to_string()],
        input_range: 2,
        num_layers_hint: 42,
    }
}

/// Copies the last input token's class to the SEP position, travelling
/// leftward one position per layer. The value is captured from the position
/// whose right neighbor is END and then relayed left.
pub fn build_copy_last_program() -> SymbolicProgram {
    let variables = vec![
        VariableSpec::categorical("carry", 2, 0),
        VariableSpec::categorical("have", 2, 0).with_init(TokenPredicate::IsEnd, 1),
        VariableSpec::categorical("tok", 2, 0).with_init(TokenPredicate::IsVocab(1), 1),
        VariableSpec::categorical("is_end", 2, 0).with_init(TokenPredicate::IsEnd, 1),
    ];
    let heads = vec![
        AttentionHeadSpec::relative("right_have", "have", 1),
        AttentionHeadSpec::relative("right_end", "is_end", 1),
        AttentionHeadSpec::relative("right_carry", "carry", 1),
    ];
    let mut rules = Vec::new();
    for tok in 0..2usize {
        let conds = vec![
            Cond::Eq(var("have"), 0),
            Cond::Eq(var("carry"), 0),
            Cond::Eq(head("right_have"), 1),
            Cond::Eq(head("right_end"), 1),
            Cond::Eq(var("tok"), tok),
        ];
        let mut rule = Rule::new(conds).set("have", 1);
        if tok == 1 {
            rule = rule.set("carry", 1);
        }
        rules.push(rule);
    }
    for carried in 0..2usize {
        let conds = vec![
            Cond::Eq(var("have"), 0),
            Cond::Eq(var("carry"), 0),
            Cond::Eq(head("right_have"), 1),
            Cond::Eq(head("right_end"), 0),
            Cond::Eq(head("right_carry"), carried),
        ];
        let mut rule = Rule::new(conds).set("have", 1);
        if carried == 1 {
            rule = rule.set("carry", 1);
        }
        rules.push(rule);
    }
    SymbolicProgram {
        variables,
        heads,
        rules,
        outputs: vec!["carry".to_string()],
        input_range: 2,
        num_layers_hint: 42,
    }
}
