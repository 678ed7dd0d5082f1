//! Residual stream layout for compiled programs.
//!
//! Dimensions are assigned in declaration order: first every variable, then
//! one scratch block per attention head sized like the head's value
//! variable. Categorical variables occupy signed one-hot blocks, binary
//! variables one +-1 dimension, numerical variables one raw dimension.

use crate::symprog::{SymbolicProgram, VarKind};
use std::collections::HashMap;

/// Width of a value encoding for a variable kind.
pub fn kind_width(kind: VarKind) -> usize {
    match kind {
        VarKind::Categorical { range } => range,
        VarKind::Binary | VarKind::Numerical => 1,
    }
}

/// Signed encoding of a symbolic value (or raw value for numericals).
pub fn encode_value(kind: VarKind, value: i64) -> Vec<f64> {
    match kind {
        VarKind::Categorical { range } => (0..range)
            .map(|i| if i as i64 == value { 1.0 } else { -1.0 })
            .collect(),
        VarKind::Binary => vec![if value == 1 { 1.0 } else { -1.0 }],
        VarKind::Numerical => vec![value as f64],
    }
}

/// Placement of one encoded block in the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub width: usize,
    pub kind: VarKind,
}

/// Full stream layout for a program.
#[derive(Debug, Clone)]
pub struct Layout {
    pub vars: Vec<Block>,
    pub scratch: Vec<Block>,
    pub model_dim_min: usize,
    var_by_name: HashMap<String, usize>,
    head_by_name: HashMap<String, usize>,
}

impl Layout {
    pub fn new(program: &SymbolicProgram) -> Self {
        let mut offset = 0usize;
        let mut vars = Vec::with_capacity(program.variables.len());
        let mut var_by_name = HashMap::new();
        for (i, v) in program.variables.iter().enumerate() {
            let width = kind_width(v.kind);
            vars.push(Block {
                offset,
                width,
                kind: v.kind,
            });
            var_by_name.insert(v.name.clone(), i);
            offset += width;
        }
        let mut scratch = Vec::with_capacity(program.heads.len());
        let mut head_by_name = HashMap::new();
        for (i, h) in program.heads.iter().enumerate() {
            let kind = program
                .variable(h.value_var())
                .expect("validated program")
                .kind;
            let width = kind_width(kind);
            scratch.push(Block {
                offset,
                width,
                kind,
            });
            head_by_name.insert(h.name().to_string(), i);
            offset += width;
        }
        Layout {
            vars,
            scratch,
            model_dim_min: offset,
            var_by_name,
            head_by_name,
        }
    }

    pub fn var_block(&self, name: &str) -> Block {
        self.vars[self.var_by_name[name]]
    }

    pub fn scratch_block(&self, head: &str) -> Block {
        self.scratch[self.head_by_name[head]]
    }

    pub fn operand_block(&self, op: &crate::symprog::Operand) -> Block {
        match op {
            crate::symprog::Operand::Var(name) => self.var_block(name),
            crate::symprog::Operand::Head(name) => self.scratch_block(name),
        }
    }
}
