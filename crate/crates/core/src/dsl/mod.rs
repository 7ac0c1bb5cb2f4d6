//! The MUIT language: lexer, parser, checker, printer and interpreter.

pub mod ast;
pub mod check;
pub mod diag;
pub mod eval;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod types;

pub use ast::DslModule;
pub use diag::{has_errors, Code, Diagnostic, Severity, Span};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse, parse_named, parse_source};
pub use check::{analyze, check, Analysis};
pub use types::Type;
pub use pretty::pretty;
