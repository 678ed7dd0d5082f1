//! Emulation of multi-tape prefix Turing machines.
//!
//! Tape layout inside the token sequence:
//!
//! - program tape: bit `i` is the `prog_bit` value at prompt position
//!   `p_{i+1}` (prompt column 0 once compiled),
//! - work tape: register `i` is the `wsym` value at prompt position
//!   `p_{i+1}`,
//! - input tape: the `SEP, x.., END` region, one register per position,
//! - output tapes: decoded on the fly instead of stored. The first bit
//!   written to tape `j` sets `sign_j`; each later `1` in the numerator
//!   phase adds +-1 to `sum_j` at the START position; the `0` separator
//!   moves to the denominator phase; each denominator `1` marks `key_j` at
//!   the next free prompt position (START is pre-marked). After the machine
//!   halts, a head averages `sum_j` over the `key_j = 1` positions, which
//!   equals numerator/denominator, and a one-shot rule copies that value
//!   into `out_j`.
//!
//! Heads vanish (freezing the machine) if moved off their region, mirroring
//! how the VM reports such runs as failures; equivalence holds for programs
//! that stay within the resource bound.
//!
//! Prompt embedding rows must be identical outside the program-bit column,
//! so the program/work/output head indicators cannot be initialized at
//! `p_1` through the embedding. Instead layer 1 is a bootstrap: the
//! position whose left neighbor is START plants all three indicators, and
//! the machine's first transition runs at layer 2. A run that halts after
//! `t` steps therefore needs `t + 3` layers including the readout copy.

use crate::ptm::{Move, PrefixTmSpec, ProgramBits};
use crate::symprog::{
    head, var, AttentionHeadSpec, Cond, Rule, SymbolicProgram, TokenPredicate, VariableSpec,
};

fn head_move_rules(
    base: &[Cond],
    indicator: &str,
    left_head: &str,
    right_head: &str,
    region_guard: &str,
    movement: Move,
    rules: &mut Vec<Rule>,
) {
    let mut clear = base.to_vec();
    clear.push(Cond::Eq(var(indicator), 1));
    rules.push(Rule::new(clear).set(indicator, 0));

    let mut take = base.to_vec();
    take.push(Cond::Eq(var(indicator), 0));
    match movement {
        Move::Right => take.push(Cond::Eq(head(left_head), 1)),
        Move::Left => take.push(Cond::Eq(head(right_head), 1)),
    }
    take.push(Cond::Eq(var(region_guard), 1));
    rules.push(Rule::new(take).set(indicator, 1));
}

/// Builds the emulator program for `machine` with `r_s` prompt positions
/// and program bits `z` baked into the `prog_bit` initialization.
///
/// One machine step runs per layer; running for the VM's halting step count
/// plus two layers guarantees the outputs are copied.
pub fn build_prefix_tm_program(
    machine: &PrefixTmSpec,
    r_s: usize,
    z: &ProgramBits,
) -> SymbolicProgram {
    assert!(z.len() <= r_s, "program longer than the prompt region");
    let vocab = machine.input_vocab;
    let isym_range = vocab + 2;
    let tapes = machine.num_output_tapes;

    let mut prog_bit = VariableSpec::binary("prog_bit", 0);
    for (i, bit) in z.bits().iter().enumerate() {
        prog_bit = prog_bit.with_init(TokenPredicate::IsPrompt(i), *bit as i64);
    }

    let mut isym = VariableSpec::categorical("isym", isym_range, 0)
        .with_init(TokenPredicate::IsSep, vocab as i64)
        .with_init(TokenPredicate::IsEnd, vocab as i64 + 1);
    for v in 0..vocab as u8 {
        isym = isym.with_init(TokenPredicate::IsVocab(v), v as i64);
    }

    let mut variables = vec![
        prog_bit,
        VariableSpec::categorical("state", machine.num_states, 0),
        VariableSpec::binary("halted", 0),
        VariableSpec::binary("copied", 0),
        VariableSpec::binary("booted", 0),
        VariableSpec::binary("one", 1),
        VariableSpec::binary("is_start", 0).with_init(TokenPredicate::IsStart, 1),
        VariableSpec::binary("is_prompt", 0).with_init(TokenPredicate::AnyPrompt, 1),
        VariableSpec::binary("iregion", 0)
            .with_init(TokenPredicate::AnyVocab, 1)
            .with_init(TokenPredicate::IsSep, 1)
            .with_init(TokenPredicate::IsEnd, 1),
        VariableSpec::binary("phead", 0),
        VariableSpec::binary("ihead", 0).with_init(TokenPredicate::IsSep, 1),
        VariableSpec::binary("whead", 0),
        VariableSpec::categorical("wsym", machine.work_symbols, 0),
        isym,
    ];
    for j in 0..tapes {
        variables.push(VariableSpec::binary(&format!("sign_{j}"), 0));
        variables.push(VariableSpec::categorical(&format!("phase_{j}"), 3, 0));
        variables.push(
            VariableSpec::binary(&format!("key_{j}"), 0).with_init(TokenPredicate::IsStart, 1),
        );
        variables.push(VariableSpec::binary(&format!("ohead_{j}"), 0));
        variables.push(VariableSpec::numerical(&format!("sum_{j}")));
        variables.push(VariableSpec::numerical(&format!("out_{j}")));
    }

    let mut heads = vec![
        AttentionHeadSpec::qkv("prog_read", "one", "phead", "prog_bit"),
        AttentionHeadSpec::qkv("input_read", "one", "ihead", "isym"),
        AttentionHeadSpec::qkv("work_read", "one", "whead", "wsym"),
        AttentionHeadSpec::relative("left_is_start", "is_start", -1),
        AttentionHeadSpec::relative("phead_left", "phead", -1),
        AttentionHeadSpec::relative("ihead_left", "ihead", -1),
        AttentionHeadSpec::relative("ihead_right", "ihead", 1),
        AttentionHeadSpec::relative("whead_left", "whead", -1),
        AttentionHeadSpec::relative("whead_right", "whead", 1),
    ];
    for j in 0..tapes {
        heads.push(AttentionHeadSpec::relative(
            &format!("ohead_left_{j}"),
            &format!("ohead_{j}"),
            -1,
        ));
        heads.push(AttentionHeadSpec::qkv(
            &format!("readout_{j}"),
            "halted",
            &format!("key_{j}"),
            &format!("sum_{j}"),
        ));
    }

    let mut rules = Vec::new();

    // Bootstrap layer: plant the program/work/output head indicators at the
    // position right of START (p_1). `booted` flips everywhere so these
    // rules fire exactly once even after the indicators move away.
    let boot = |indicator: &str| {
        Rule::new(vec![
            Cond::Eq(var("booted"), 0),
            Cond::Eq(head("left_is_start"), 1),
            Cond::Eq(var(indicator), 0),
        ])
        .set(indicator, 1)
    };
    rules.push(boot("phead"));
    rules.push(boot("whead"));
    for j in 0..tapes {
        rules.push(boot(&format!("ohead_{j}")));
    }
    rules.push(Rule::new(vec![Cond::Eq(var("booted"), 0)]).set("booted", 1));

    for state in 0..machine.num_states {
        for prog in 0..2u8 {
            for input in 0..isym_range as u8 {
                for work in 0..machine.work_symbols as u8 {
                    let action = machine.action(state, prog, input, work);
                    // The booted gate makes transition rules statically
                    // disjoint from the layer-1 bootstrap rules.
                    let base = vec![
                        Cond::Eq(var("booted"), 1),
                        Cond::Eq(var("halted"), 0),
                        Cond::Eq(var("state"), state),
                        Cond::Eq(head("prog_read"), prog as usize),
                        Cond::Eq(head("input_read"), input as usize),
                        Cond::Eq(head("work_read"), work as usize),
                    ];

                    if action.next_state != state || action.halt {
                        let mut rule = Rule::new(base.clone());
                        if action.next_state != state {
                            rule = rule.set("state", action.next_state);
                        }
                        if action.halt {
                            rule = rule.set("halted", 1);
                        }
                        rules.push(rule);
                    }

                    if let Some(w) = action.work_write {
                        if w != work {
                            let mut conds = base.clone();
                            conds.push(Cond::Eq(var("whead"), 1));
                            conds.push(Cond::Eq(var("wsym"), work as usize));
                            rules.push(Rule::new(conds).set("wsym", w as usize));
                        }
                    }

                    if action.prog_move {
                        head_move_rules(
                            &base,
                            "phead",
                            "phead_left",
                            "phead_left",
                            "is_prompt",
                            Move::Right,
                            &mut rules,
                        );
                    }
                    if let Some(movement) = action.input_move {
                        head_move_rules(
                            &base,
                            "ihead",
                            "ihead_left",
                            "ihead_right",
                            "iregion",
                            movement,
                            &mut rules,
                        );
                    }
                    if let Some(movement) = action.work_move {
                        head_move_rules(
                            &base,
                            "whead",
                            "whead_left",
                            "whead_right",
                            "is_prompt",
                            movement,
                            &mut rules,
                        );
                    }

                    for (j, bit) in action.output_writes.iter().enumerate() {
                        let Some(bit) = *bit else { continue };
                        let sign = format!("sign_{j}");
                        let phase = format!("phase_{j}");
                        let key = format!("key_{j}");
                        let ohead = format!("ohead_{j}");
                        let sum = format!("sum_{j}");

                        // First write: the sign bit.
                        let mut sign_conds = base.clone();
                        sign_conds.push(Cond::Eq(var(&phase), 0));
                        sign_conds.push(Cond::Eq(var(&sign), 0));
                        let mut sign_rule = Rule::new(sign_conds).set(&phase, 1);
                        if bit == 1 {
                            sign_rule = sign_rule.set(&sign, 1);
                        }
                        rules.push(sign_rule);

                        if bit == 1 {
                            // Numerator tally, accumulated at START.
                            for (sign_value, delta) in [(0usize, 1i64), (1, -1)] {
                                let mut conds = base.clone();
                                conds.push(Cond::Eq(var(&phase), 1));
                                conds.push(Cond::Eq(var("is_start"), 1));
                                conds.push(Cond::Eq(var(&sign), sign_value));
                                rules.push(Rule::new(conds).increment(&sum, delta));
                            }
                            // Denominator tally: mark the key at the output
                            // pointer and advance it.
                            let mut mark = base.clone();
                            mark.push(Cond::Eq(var(&phase), 2));
                            mark.push(Cond::Eq(var(&ohead), 1));
                            mark.push(Cond::Eq(var(&key), 0));
                            rules.push(Rule::new(mark).set(&key, 1));
                            let mut phase2 = base.clone();
                            phase2.push(Cond::Eq(var(&phase), 2));
                            head_move_rules(
                                &phase2,
                                &ohead,
                                &format!("ohead_left_{j}"),
                                &format!("ohead_left_{j}"),
                                "is_prompt",
                                Move::Right,
                                &mut rules,
                            );
                        } else {
                            // A 0 during the numerator phase is the
                            // separator; in the denominator phase it would
                            // be ungrammatical, so no rule exists for it.
                            let mut conds = base.clone();
                            conds.push(Cond::Eq(var(&phase), 1));
                            rules.push(Rule::new(conds).set(&phase, 2));
                        }
                    }
                }
            }
        }
    }

    // One-shot readout once the machine has halted.
    let copy_conds = vec![Cond::Eq(var("halted"), 1), Cond::Eq(var("copied"), 0)];
    for j in 0..tapes {
        rules.push(
            Rule::new(copy_conds.clone())
                .increment_by_head(&format!("out_{j}"), &format!("readout_{j}")),
        );
    }
    rules.push(Rule::new(copy_conds).set("copied", 1));

    SymbolicProgram {
        variables,
        heads,
        rules,
        outputs: (0..tapes).map(|j| format!("out_{j}")).collect(),
        input_range: vocab,
        num_layers_hint: r_s + 3,
    }
}

/// Layers needed to emulate a run that halts within `steps` VM steps:
/// one bootstrap layer, one layer per step, and one readout copy layer.
pub fn prefix_layers_for_steps(steps: usize) -> usize {
    steps + 2
}
