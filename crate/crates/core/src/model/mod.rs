//! Model-definition files: `[section]` headers, `key = value` lines, `#`
//! comments, and an arithmetic expression language for the binding potential
//! and initial field profiles.

mod config;
pub mod expr;

pub use config::{
    parse_model, FieldPreset, GridSpec, InitialFields, IntegratorSpec, ModelConfig, Numerics, ParticleSpec, Vacuum,
};
pub use expr::{eval_expr, parse_expr, Bindings, EvalError, Expr, Program};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("line {line}, column {column}: lexical error: {message}")]
    Lexical { line: usize, column: usize, message: String },

    #[error("line {line}, column {column}: syntax error: expected {expected}, found {found}")]
    Syntax { line: usize, column: usize, expected: String, found: String },

    #[error("line {line}, column {column}: unknown identifier `{name}`")]
    UnknownIdentifier { line: usize, column: usize, name: String },

    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },

    #[error("line {line}: unknown key `{key}` in section [{section}]")]
    UnknownKey { line: usize, section: String, key: String },

    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },

    #[error("missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("{0}")]
    Semantic(String),

    #[error("expression evaluation failed: {0}")]
    Eval(#[from] EvalError),
}
