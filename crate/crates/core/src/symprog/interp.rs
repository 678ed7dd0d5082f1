//! Reference interpreter for symbolic programs.
//!
//! Execution is position-parallel within a layer: all heads read the
//! previous layer's variable values, then all rules fire simultaneously per
//! position. Rule order never matters because validation rejects programs
//! where two co-firing rules assign the same variable.

use super::rational::Rational;
use super::{AttentionHeadSpec, Cond, Operand, Rule, SymbolicProgram, Token, VarKind};
use thiserror::Error;

/// Runtime value of a variable or head output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Sym(usize),
    Num(Rational),
    /// Head output with no defined value (no match / off the edge).
    Undefined,
}

impl Value {
    pub fn sym(&self) -> Option<usize> {
        match self {
            Value::Sym(s) => Some(*s),
            _ => None,
        }
    }

    pub fn num(&self) -> Option<Rational> {
        match self {
            Value::Num(r) => Some(*r),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum InterpretError {
    #[error("program failed validation: {0}")]
    Invalid(String),
    #[error("input token {token} outside input range {range}")]
    BadToken { token: u8, range: usize },
    #[error("head `{head}` matched {matches} positions for a symbolic value at position {position}, layer {layer}")]
    AmbiguousMatch {
        head: String,
        position: usize,
        layer: usize,
        matches: usize,
    },
}

/// Final interpreter state.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpretation {
    /// `states[pos][var index]` after the last layer.
    pub states: Vec<Vec<Value>>,
    /// Encoded output vector read at the SEP position (or position 0 if the
    /// sequence has no SEP). Categorical outputs contribute a signed
    /// one-hot block, binary outputs one +-1 entry, numerical outputs and
    /// head outputs one raw value.
    pub outputs: Vec<f64>,
    /// Per-layer history of `states` when tracing is useful in tests.
    pub trace: Vec<Vec<Vec<Value>>>,
}

/// Builds the standard token layout `START, p_1.., SEP, x.., END`.
pub fn standard_tokens(input: &[u8], num_prompts: usize) -> Vec<Token> {
    let mut tokens = Vec::with_capacity(input.len() + num_prompts + 3);
    tokens.push(Token::Start);
    for i in 0..num_prompts {
        tokens.push(Token::Prompt(i));
    }
    tokens.push(Token::Sep);
    tokens.extend(input.iter().map(|t| Token::Vocab(*t)));
    tokens.push(Token::End);
    tokens
}

fn encode_output(value: &Value, kind: Option<VarKind>, out: &mut Vec<f64>) {
    match (value, kind) {
        (Value::Sym(s), Some(VarKind::Categorical { range })) => {
            for i in 0..range {
                out.push(if i == *s { 1.0 } else { -1.0 });
            }
        }
        (Value::Sym(s), Some(VarKind::Binary)) => {
            out.push(if *s == 1 { 1.0 } else { -1.0 });
        }
        (Value::Num(r), _) => out.push(r.to_f64()),
        (Value::Undefined, _) => out.push(0.0),
        (Value::Sym(_), _) => unreachable!("symbolic value with non-symbolic kind"),
    }
}

struct Machine<'p> {
    program: &'p SymbolicProgram,
    var_index: std::collections::HashMap<&'p str, usize>,
    head_index: std::collections::HashMap<&'p str, usize>,
}

impl<'p> Machine<'p> {
    fn new(program: &'p SymbolicProgram) -> Self {
        let var_index = program
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), i))
            .collect();
        let head_index = program
            .heads
            .iter()
            .enumerate()
            .map(|(i, h)| (h.name(), i))
            .collect();
        Machine {
            program,
            var_index,
            head_index,
        }
    }

    fn head_outputs(
        &self,
        states: &[Vec<Value>],
        layer: usize,
    ) -> Result<Vec<Vec<Value>>, InterpretError> {
        let n = states.len();
        let mut outputs = vec![Vec::with_capacity(self.program.heads.len()); n];
        for head in &self.program.heads {
            match head {
                AttentionHeadSpec::Qkv {
                    name,
                    query,
                    key,
                    value,
                } => {
                    let qi = self.var_index[query.as_str()];
                    let ki = self.var_index[key.as_str()];
                    let vi = self.var_index[value.as_str()];
                    let numeric = matches!(
                        self.program.variables[vi].kind,
                        VarKind::Numerical
                    );
                    for pos in 0..n {
                        let q = states[pos][qi].sym().expect("query is symbolic");
                        let matched: Vec<usize> = (0..n)
                            .filter(|j| states[*j][ki].sym() == Some(q))
                            .collect();
                        let out = if matched.is_empty() {
                            Value::Undefined
                        } else if numeric {
                            let mut sum = Rational::zero();
                            for j in &matched {
                                sum = sum.add(&states[*j][vi].num().expect("numeric value"));
                            }
                            Value::Num(sum.div_int(matched.len() as i64))
                        } else if matched.len() == 1 {
                            states[matched[0]][vi]
                        } else {
                            // Symbolic reads rely on a unique match; the
                            // standard-library programs guarantee it.
                            let all_equal = matched
                                .iter()
                                .all(|j| states[*j][vi] == states[matched[0]][vi]);
                            if all_equal {
                                states[matched[0]][vi]
                            } else {
                                return Err(InterpretError::AmbiguousMatch {
                                    head: name.clone(),
                                    position: pos,
                                    layer,
                                    matches: matched.len(),
                                });
                            }
                        };
                        outputs[pos].push(out);
                    }
                }
                AttentionHeadSpec::Relative { value, offset, .. } => {
                    let vi = self.var_index[value.as_str()];
                    for pos in 0..n {
                        let j = pos as isize + *offset as isize;
                        let out = if j < 0 || j as usize >= n {
                            Value::Undefined
                        } else {
                            states[j as usize][vi]
                        };
                        outputs[pos].push(out);
                    }
                }
            }
        }
        Ok(outputs)
    }

    fn operand_value(&self, op: &Operand, state: &[Value], heads: &[Value]) -> Value {
        match op {
            Operand::Var(name) => state[self.var_index[name.as_str()]],
            Operand::Head(name) => heads[self.head_index[name.as_str()]],
        }
    }

    fn rule_fires(&self, rule: &Rule, state: &[Value], heads: &[Value]) -> bool {
        rule.conds.iter().all(|cond| match cond {
            Cond::Eq(op, v) => self.operand_value(op, state, heads).sym() == Some(*v),
            Cond::Ne(op, v) => match self.operand_value(op, state, heads).sym() {
                Some(s) => s != *v,
                // Undefined operands never satisfy a condition.
                None => false,
            },
        })
    }
}

/// Runs `program` on a token sequence for `layers` rounds.
pub fn interpret(
    program: &SymbolicProgram,
    tokens: &[Token],
    layers: usize,
) -> Result<Interpretation, InterpretError> {
    interpret_traced(program, tokens, layers, false)
}

/// As [`interpret`], optionally keeping the per-layer state history.
pub fn interpret_traced(
    program: &SymbolicProgram,
    tokens: &[Token],
    layers: usize,
    keep_trace: bool,
) -> Result<Interpretation, InterpretError> {
    let diags = super::validate(program);
    if !diags.is_empty() {
        return Err(InterpretError::Invalid(diags[0].0.clone()));
    }
    for t in tokens {
        if let Token::Vocab(v) = t {
            if *v as usize >= program.input_range {
                return Err(InterpretError::BadToken {
                    token: *v,
                    range: program.input_range,
                });
            }
        }
    }

    let machine = Machine::new(program);
    let mut states: Vec<Vec<Value>> = tokens
        .iter()
        .map(|tok| {
            program
                .variables
                .iter()
                .map(|v| match v.kind {
                    VarKind::Numerical => Value::Num(Rational::integer(v.initial_value(*tok))),
                    _ => Value::Sym(v.initial_value(*tok) as usize),
                })
                .collect()
        })
        .collect();
    let mut trace = Vec::new();
    if keep_trace {
        trace.push(states.clone());
    }

    let mut final_heads: Vec<Vec<Value>> = vec![Vec::new(); tokens.len()];
    for layer in 0..layers {
        let heads = machine.head_outputs(&states, layer)?;
        let mut next = states.clone();
        for pos in 0..states.len() {
            for rule in &program.rules {
                if !rule.is_effectful() || !machine.rule_fires(rule, &states[pos], &heads[pos]) {
                    continue;
                }
                for (var, value) in &rule.sets {
                    next[pos][machine.var_index[var.as_str()]] = Value::Sym(*value);
                }
                for (var, amount) in &rule.increments {
                    let vi = machine.var_index[var.as_str()];
                    let old = next[pos][vi].num().expect("increment of numerical var");
                    next[pos][vi] = Value::Num(old.add(&Rational::integer(*amount)));
                }
                for (var, head) in &rule.head_increments {
                    let vi = machine.var_index[var.as_str()];
                    let hv = heads[pos][machine.head_index[head.as_str()]];
                    if let Value::Num(hv) = hv {
                        let old = next[pos][vi].num().expect("increment of numerical var");
                        next[pos][vi] = Value::Num(old.add(&hv));
                    }
                }
            }
        }
        states = next;
        if keep_trace {
            trace.push(states.clone());
        }
        final_heads = heads;
    }

    // Readout position: SEP, falling back to position 0.
    let read_pos = tokens
        .iter()
        .position(|t| *t == Token::Sep)
        .unwrap_or(0);
    let mut outputs = Vec::new();
    for name in &program.outputs {
        if let Some(vi) = machine.var_index.get(name.as_str()) {
            let kind = program.variables[*vi].kind;
            encode_output(&states[read_pos][*vi], Some(kind), &mut outputs);
        } else if let Some(hi) = machine.head_index.get(name.as_str()) {
            let value = final_heads
                .get(read_pos)
                .and_then(|h| h.get(*hi))
                .copied()
                .unwrap_or(Value::Undefined);
            let kind = program
                .head(name)
                .and_then(|h| program.variable(h.value_var()))
                .map(|v| v.kind);
            encode_output(&value, kind, &mut outputs);
        }
    }

    Ok(Interpretation {
        states,
        outputs,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{var, AttentionHeadSpec, Cond, Rule, SymbolicProgram, VariableSpec};
    use super::*;
    use crate::symprog::TokenPredicate;

    /// One-variable program that copies its right neighbor's `seen` flag,
    /// so a flag planted at END walks left one position per layer.
    fn walker() -> SymbolicProgram {
        SymbolicProgram {
            variables: vec![VariableSpec::binary("seen", 0)
                .with_init(TokenPredicate::IsEnd, 1)],
            heads: vec![AttentionHeadSpec::relative("right_seen", "seen", 1)],
            rules: vec![Rule::new(vec![
                Cond::Eq(var("seen"), 0),
                Cond::Eq(super::super::head("right_seen"), 1),
            ])
            .set("seen", 1)],
            outputs: vec!["seen".into()],
            input_range: 2,
            num_layers_hint: 8,
        }
    }

    #[test]
    fn flag_walks_left_one_layer_per_position() {
        let p = walker();
        let tokens = standard_tokens(&[0, 1], 0);
        // layout: START SEP 0 1 END; END at index 4, SEP at index 1.
        let after1 = interpret(&p, &tokens, 1).unwrap();
        let seen: Vec<usize> = after1.states.iter().map(|s| s[0].sym().unwrap()).collect();
        assert_eq!(seen, vec![0, 0, 0, 1, 1]);
        let after3 = interpret(&p, &tokens, 3).unwrap();
        let seen: Vec<usize> = after3.states.iter().map(|s| s[0].sym().unwrap()).collect();
        assert_eq!(seen, vec![0, 1, 1, 1, 1]);
        assert_eq!(after3.outputs, vec![1.0]);
    }

    #[test]
    fn unmatched_valuations_leave_variables_unchanged() {
        let p = walker();
        let tokens = vec![Token::Start, Token::Sep, Token::Vocab(0)];
        // no END token: nothing ever fires
        let out = interpret(&p, &tokens, 5).unwrap();
        let seen: Vec<usize> = out.states.iter().map(|s| s[0].sym().unwrap()).collect();
        assert_eq!(seen, vec![0, 0, 0]);
    }

    #[test]
    fn bad_token_is_rejected() {
        let p = walker();
        let tokens = standard_tokens(&[7], 0);
        assert_eq!(
            interpret(&p, &tokens, 1),
            Err(InterpretError::BadToken { token: 7, range: 2 })
        );
    }

    #[test]
    fn ambiguous_symbolic_match_is_a_runtime_diagnostic() {
        let p = SymbolicProgram {
            variables: vec![
                VariableSpec::binary("one", 1),
                VariableSpec::binary("marker", 1),
                VariableSpec::categorical("payload", 3, 0)
                    .with_init(TokenPredicate::IsStart, 1)
                    .with_init(TokenPredicate::IsEnd, 2),
            ],
            heads: vec![AttentionHeadSpec::qkv("read", "one", "marker", "payload")],
            rules: vec![],
            outputs: vec!["payload".into()],
            input_range: 2,
            num_layers_hint: 1,
        };
        // marker=1 everywhere with differing payloads: ambiguous.
        let err = interpret(&p, &standard_tokens(&[0], 0), 1).unwrap_err();
        assert!(matches!(err, InterpretError::AmbiguousMatch { .. }));
    }

    #[test]
    fn qkv_average_over_numeric_values_is_exact() {
        let p = SymbolicProgram {
            variables: vec![
                VariableSpec::binary("one", 1),
                VariableSpec::binary("key", 0)
                    .with_init(TokenPredicate::IsStart, 1)
                    .with_init(TokenPredicate::IsEnd, 1),
                {
                    let mut v = VariableSpec::numerical("count");
                    v.init.push(super::super::InitRule {
                        when: TokenPredicate::IsStart,
                        value: 3,
                    });
                    v
                },
            ],
            heads: vec![AttentionHeadSpec::qkv("avg", "one", "key", "count")],
            rules: vec![],
            outputs: vec!["avg".into()],
            input_range: 2,
            num_layers_hint: 1,
        };
        // matches at START (count 3) and END (count 0): average 3/2.
        let out = interpret(&p, &standard_tokens(&[0], 0), 1).unwrap();
        assert_eq!(out.outputs, vec![1.5]);
    }
}
