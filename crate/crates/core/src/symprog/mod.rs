//! Symbolic programs: per-position variables, attention heads, and a
//! feed-forward rule table, executed layer by layer.
//!
//! A program describes the same computation a compiled Transformer performs.
//! Each layer every position first reads its attention heads, then applies
//! every rule whose conditions match its current valuation. Rules assign
//! categorical/binary variables, add fixed scalars to numerical variables,
//! or add an attention head's value to a numerical variable. Unmatched
//! valuations leave variables unchanged.

mod builders;
mod interp;
mod rational;

pub use builders::{
    build_copy_last_program, build_parity_program, build_prefix_tm_program,
    build_single_tape_tm_program, prefix_layers_for_steps, SingleTapeAction, SingleTapeMachine,
};
pub use interp::{interpret, standard_tokens, InterpretError, Interpretation, Value};
pub use rational::Rational;

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

/// Special and ordinary tokens a program can see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token {
    Start,
    Sep,
    End,
    /// An input vocabulary token.
    Vocab(u8),
    /// Prompt token `p_{i+1}` (0-based index).
    Prompt(usize),
}

/// Predicate over tokens used by input-initialization rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenPredicate {
    Always,
    IsStart,
    IsSep,
    IsEnd,
    IsVocab(u8),
    AnyVocab,
    IsPrompt(usize),
    AnyPrompt,
}

impl TokenPredicate {
    pub fn matches(&self, token: Token) -> bool {
        match (self, token) {
            (TokenPredicate::Always, _) => true,
            (TokenPredicate::IsStart, Token::Start) => true,
            (TokenPredicate::IsSep, Token::Sep) => true,
            (TokenPredicate::IsEnd, Token::End) => true,
            (TokenPredicate::IsVocab(v), Token::Vocab(t)) => *v == t,
            (TokenPredicate::AnyVocab, Token::Vocab(_)) => true,
            (TokenPredicate::IsPrompt(i), Token::Prompt(j)) => *i == j,
            (TokenPredicate::AnyPrompt, Token::Prompt(_)) => true,
            _ => false,
        }
    }
}

/// Kind of a program variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    /// Value in `0..range`, compiled as a signed one-hot block.
    Categorical { range: usize },
    /// Value in `{0, 1}`, compiled as a single +-1 dimension.
    Binary,
    /// Exact integer-valued counter (rational after head averaging),
    /// compiled as a single raw dimension.
    Numerical,
}

/// First matching rule wins; variables with no matching rule take their
/// default value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitRule {
    pub when: TokenPredicate,
    pub value: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VarKind,
    pub default: i64,
    pub init: Vec<InitRule>,
}

impl VariableSpec {
    pub fn categorical(name: &str, range: usize, default: usize) -> Self {
        VariableSpec {
            name: name.to_string(),
            kind: VarKind::Categorical { range },
            default: default as i64,
            init: Vec::new(),
        }
    }

    pub fn binary(name: &str, default: usize) -> Self {
        VariableSpec {
            name: name.to_string(),
            kind: VarKind::Binary,
            default: default as i64,
            init: Vec::new(),
        }
    }

    pub fn numerical(name: &str) -> Self {
        VariableSpec {
            name: name.to_string(),
            kind: VarKind::Numerical,
            default: 0,
            init: Vec::new(),
        }
    }

    pub fn with_init(mut self, when: TokenPredicate, value: i64) -> Self {
        self.init.push(InitRule { when, value });
        self
    }

    /// Initial value of this variable at a position holding `token`.
    pub fn initial_value(&self, token: Token) -> i64 {
        self.init
            .iter()
            .find(|r| r.when.matches(token))
            .map(|r| r.value)
            .unwrap_or(self.default)
    }

    /// Number of symbolic values, if the kind is symbolic.
    pub fn range(&self) -> Option<usize> {
        match self.kind {
            VarKind::Categorical { range } => Some(range),
            VarKind::Binary => Some(2),
            VarKind::Numerical => None,
        }
    }
}

/// Attention head: either key/query matching or a fixed relative offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum AttentionHeadSpec {
    /// Averages `value` over all positions whose `key` equals this
    /// position's `query`. Symbolic values require the match to be unique.
    Qkv {
        name: String,
        query: String,
        key: String,
        value: String,
    },
    /// Reads `value` from the neighbor at `offset` (-1 or +1).
    Relative {
        name: String,
        value: String,
        offset: i8,
    },
}

impl AttentionHeadSpec {
    pub fn qkv(name: &str, query: &str, key: &str, value: &str) -> Self {
        AttentionHeadSpec::Qkv {
            name: name.to_string(),
            query: query.to_string(),
            key: key.to_string(),
            value: value.to_string(),
        }
    }

    pub fn relative(name: &str, value: &str, offset: i8) -> Self {
        AttentionHeadSpec::Relative {
            name: name.to_string(),
            value: value.to_string(),
            offset,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            AttentionHeadSpec::Qkv { name, .. } => name,
            AttentionHeadSpec::Relative { name, .. } => name,
        }
    }

    pub fn value_var(&self) -> &str {
        match self {
            AttentionHeadSpec::Qkv { value, .. } => value,
            AttentionHeadSpec::Relative { value, .. } => value,
        }
    }
}

/// Something a rule condition can read: a variable or a head output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Var(String),
    Head(String),
}

pub fn var(name: &str) -> Operand {
    Operand::Var(name.to_string())
}

pub fn head(name: &str) -> Operand {
    Operand::Head(name.to_string())
}

/// Condition on a symbolic operand value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cond {
    Eq(Operand, usize),
    Ne(Operand, usize),
}

impl Cond {
    pub fn operand(&self) -> &Operand {
        match self {
            Cond::Eq(op, _) | Cond::Ne(op, _) => op,
        }
    }
}

/// One feed-forward rule. Fires at a position when all conditions hold.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Rule {
    pub conds: Vec<Cond>,
    /// Symbolic assignments `var := value`.
    pub sets: Vec<(String, usize)>,
    /// Numerical increments `var += constant`.
    pub increments: Vec<(String, i64)>,
    /// Numerical increment by an attention head's value `var += head`.
    pub head_increments: Vec<(String, String)>,
}

impl Rule {
    pub fn new(conds: Vec<Cond>) -> Self {
        Rule {
            conds,
            ..Rule::default()
        }
    }

    pub fn set(mut self, var: &str, value: usize) -> Self {
        self.sets.push((var.to_string(), value));
        self
    }

    pub fn increment(mut self, var: &str, amount: i64) -> Self {
        self.increments.push((var.to_string(), amount));
        self
    }

    pub fn increment_by_head(mut self, var: &str, head: &str) -> Self {
        self.head_increments
            .push((var.to_string(), head.to_string()));
        self
    }

    pub fn is_effectful(&self) -> bool {
        !self.sets.is_empty() || !self.increments.is_empty() || !self.head_increments.is_empty()
    }
}

/// A full symbolic program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolicProgram {
    pub variables: Vec<VariableSpec>,
    pub heads: Vec<AttentionHeadSpec>,
    pub rules: Vec<Rule>,
    /// Names of variables or heads whose encoded values form the output.
    pub outputs: Vec<String>,
    /// Number of distinct input vocabulary tokens.
    pub input_range: usize,
    /// Layers needed for the intended semantics, as a hint to runners.
    pub num_layers_hint: usize,
}

impl SymbolicProgram {
    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn head(&self, name: &str) -> Option<&AttentionHeadSpec> {
        self.heads.iter().find(|h| h.name() == name)
    }

    /// Kind of an operand's value; `None` if the name is unknown.
    pub fn operand_kind(&self, op: &Operand) -> Option<VarKind> {
        match op {
            Operand::Var(name) => self.variable(name).map(|v| v.kind),
            Operand::Head(name) => self
                .head(name)
                .and_then(|h| self.variable(h.value_var()))
                .map(|v| v.kind),
        }
    }
}

/// A single validation finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic(pub String);

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn check_value_in_range(kind: VarKind, value: i64) -> bool {
    match kind {
        VarKind::Categorical { range } => value >= 0 && (value as usize) < range,
        VarKind::Binary => value == 0 || value == 1,
        VarKind::Numerical => true,
    }
}

/// Could both condition sets hold at the same position simultaneously?
/// Conservative: only definite contradictions rule a pair out.
fn conds_compatible(a: &[Cond], b: &[Cond]) -> bool {
    for ca in a.iter().chain(b.iter()) {
        for cb in a.iter().chain(b.iter()) {
            match (ca, cb) {
                (Cond::Eq(op1, v1), Cond::Eq(op2, v2)) if op1 == op2 && v1 != v2 => return false,
                (Cond::Eq(op1, v1), Cond::Ne(op2, v2)) if op1 == op2 && v1 == v2 => return false,
                _ => {}
            }
        }
    }
    true
}

/// Checks name references, value ranges, rule determinism, and the
/// old-value pinning needed to compile assignments. Returns an empty list
/// when the program is well formed.
pub fn validate(program: &SymbolicProgram) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut names: HashSet<&str> = HashSet::new();
    for v in &program.variables {
        if !names.insert(&v.name) {
            diags.push(Diagnostic(format!("duplicate name `{}`", v.name)));
        }
        if !check_value_in_range(v.kind, v.default) {
            diags.push(Diagnostic(format!(
                "default {} out of range for `{}`",
                v.default, v.name
            )));
        }
        for rule in &v.init {
            if !check_value_in_range(v.kind, rule.value) {
                diags.push(Diagnostic(format!(
                    "init value {} out of range for `{}`",
                    rule.value, v.name
                )));
            }
        }
    }
    for h in &program.heads {
        if !names.insert(h.name()) {
            diags.push(Diagnostic(format!("duplicate name `{}`", h.name())));
        }
        match h {
            AttentionHeadSpec::Qkv {
                name,
                query,
                key,
                value,
            } => {
                for v in [query, key, value] {
                    if program.variable(v).is_none() {
                        diags.push(Diagnostic(format!(
                            "head `{name}` references unknown variable `{v}`"
                        )));
                    }
                }
                if let (Some(q), Some(k)) = (program.variable(query), program.variable(key)) {
                    if q.range().is_none() || k.range().is_none() {
                        diags.push(Diagnostic(format!(
                            "head `{name}` must match on symbolic query/key variables"
                        )));
                    }
                }
            }
            AttentionHeadSpec::Relative {
                name,
                value,
                offset,
            } => {
                if program.variable(value).is_none() {
                    diags.push(Diagnostic(format!(
                        "head `{name}` references unknown variable `{value}`"
                    )));
                }
                if *offset != -1 && *offset != 1 {
                    diags.push(Diagnostic(format!(
                        "head `{name}` offset {offset} must be -1 or +1"
                    )));
                }
            }
        }
    }

    for (i, rule) in program.rules.iter().enumerate() {
        for cond in &rule.conds {
            match program.operand_kind(cond.operand()) {
                None => diags.push(Diagnostic(format!(
                    "rule {i} conditions on unknown operand {:?}",
                    cond.operand()
                ))),
                Some(VarKind::Numerical) => diags.push(Diagnostic(format!(
                    "rule {i} conditions on numerical operand {:?}",
                    cond.operand()
                ))),
                Some(kind) => {
                    let value = match cond {
                        Cond::Eq(_, v) | Cond::Ne(_, v) => *v,
                    };
                    if !check_value_in_range(kind, value as i64) {
                        diags.push(Diagnostic(format!(
                            "rule {i} condition value {value} out of range"
                        )));
                    }
                }
            }
        }
        for (var, value) in &rule.sets {
            match program.variable(var) {
                None => diags.push(Diagnostic(format!("rule {i} assigns unknown `{var}`"))),
                Some(v) => {
                    if v.kind == VarKind::Numerical {
                        diags.push(Diagnostic(format!(
                            "rule {i} assigns numerical `{var}` (use an increment)"
                        )));
                    } else if !check_value_in_range(v.kind, *value as i64) {
                        diags.push(Diagnostic(format!(
                            "rule {i} assigns {value} out of range to `{var}`"
                        )));
                    }
                    // Assignments compile to value deltas, so the old value
                    // must be pinned by an equality condition.
                    let pinned = rule
                        .conds
                        .iter()
                        .any(|c| matches!(c, Cond::Eq(Operand::Var(n), _) if n == var));
                    if !pinned {
                        diags.push(Diagnostic(format!(
                            "rule {i} assigns `{var}` without pinning its old value"
                        )));
                    }
                }
            }
        }
        for (var, _) in &rule.increments {
            match program.variable(var).map(|v| v.kind) {
                Some(VarKind::Numerical) => {}
                _ => diags.push(Diagnostic(format!(
                    "rule {i} increments non-numerical `{var}`"
                ))),
            }
        }
        for (var, head) in &rule.head_increments {
            match program.variable(var).map(|v| v.kind) {
                Some(VarKind::Numerical) => {}
                _ => diags.push(Diagnostic(format!(
                    "rule {i} head-increments non-numerical `{var}`"
                ))),
            }
            if program.head(head).is_none() {
                diags.push(Diagnostic(format!("rule {i} reads unknown head `{head}`")));
            }
        }
    }

    // Determinism: compatible rules must not assign the same variable.
    for i in 0..program.rules.len() {
        for j in i + 1..program.rules.len() {
            let (a, b) = (&program.rules[i], &program.rules[j]);
            if !conds_compatible(&a.conds, &b.conds) {
                continue;
            }
            let avars: HashSet<&String> = a.sets.iter().map(|(v, _)| v).collect();
            for (v, _) in &b.sets {
                if avars.contains(v) {
                    diags.push(Diagnostic(format!(
                        "rules {i} and {j} can both fire and both assign `{v}`"
                    )));
                }
            }
        }
    }

    let mut seen_outputs: HashMap<&str, usize> = HashMap::new();
    for out in &program.outputs {
        if program.variable(out).is_none() && program.head(out).is_none() {
            diags.push(Diagnostic(format!("output `{out}` is not defined")));
        }
        *seen_outputs.entry(out.as_str()).or_default() += 1;
    }
    if program.outputs.is_empty() {
        diags.push(Diagnostic("program declares no outputs".to_string()));
    }

    diags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_program() -> SymbolicProgram {
        SymbolicProgram {
            variables: vec![
                VariableSpec::binary("flag", 0),
                VariableSpec::categorical("sym", 3, 0),
            ],
            heads: vec![AttentionHeadSpec::relative("left_sym", "sym", -1)],
            rules: vec![Rule::new(vec![
                Cond::Eq(var("flag"), 0),
                Cond::Eq(head("left_sym"), 2),
            ])
            .set("flag", 1)],
            outputs: vec!["sym".into()],
            input_range: 3,
            num_layers_hint: 2,
        }
    }

    #[test]
    fn valid_program_has_no_diagnostics() {
        assert_eq!(validate(&tiny_program()), vec![]);
    }

    #[test]
    fn unknown_variable_reference_is_reported() {
        let mut p = tiny_program();
        p.rules.push(Rule::new(vec![Cond::Eq(var("ghost"), 0)]));
        let diags = validate(&p);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].0.contains("ghost"));
    }

    #[test]
    fn conflicting_assignments_are_reported() {
        let mut p = tiny_program();
        let conds = vec![Cond::Eq(var("flag"), 0)];
        p.rules = vec![
            Rule::new(conds.clone()).set("flag", 1),
            Rule::new(conds).set("flag", 0),
        ];
        let diags = validate(&p);
        assert!(diags.iter().any(|d| d.0.contains("both assign")));
    }

    #[test]
    fn incompatible_rules_do_not_conflict() {
        let mut p = tiny_program();
        p.rules = vec![
            Rule::new(vec![Cond::Eq(var("sym"), 0), Cond::Eq(var("flag"), 0)]).set("flag", 1),
            Rule::new(vec![Cond::Eq(var("sym"), 1), Cond::Eq(var("flag"), 0)]).set("flag", 1),
        ];
        assert_eq!(validate(&p), vec![]);
    }

    #[test]
    fn unpinned_assignment_is_reported() {
        let mut p = tiny_program();
        p.rules = vec![Rule::new(vec![Cond::Eq(var("sym"), 1)]).set("flag", 1)];
        let diags = validate(&p);
        assert!(diags.iter().any(|d| d.0.contains("pinning")));
    }

    #[test]
    fn program_round_trips_through_json() {
        let p = tiny_program();
        let json = serde_json::to_string(&p).unwrap();
        let back: SymbolicProgram = serde_json::from_str(&json).unwrap();
        assert_eq!(validate(&back), vec![]);
        assert_eq!(back.variables.len(), p.variables.len());
        assert_eq!(back.outputs, p.outputs);
    }
}
