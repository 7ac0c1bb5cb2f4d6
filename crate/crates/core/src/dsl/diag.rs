use std::fmt;

use serde::{Deserialize, Serialize};

/// A location in a source file. Lines and columns are 1-based, `len` is in
/// characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Span {
    pub offset: usize,
    pub line: u32,
    pub col: u32,
    pub len: u32,
}

impl Span {
    pub fn new(offset: usize, line: u32, col: u32, len: u32) -> Self {
        Span { offset, line, col, len }
    }

    /// Smallest span covering both `self` and `other`, assuming `other`
    /// starts at or after `self`.
    pub fn to(self, other: Span) -> Span {
        if other.line == self.line && other.col >= self.col {
            Span { len: other.col - self.col + other.len, ..self }
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => f.write_str("error"),
            Severity::Warning => f.write_str("warning"),
        }
    }
}

/// Stable diagnostic codes. Each semantic failure class has its own code so
/// tooling can match on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Code {
    UnterminatedString,
    UnknownCharacter,
    Syntax,
    NestingTooDeep,
    UnresolvedName,
    UnresolvedMember,
    UnresolvedWidget,
    TypeMismatch,
    DuplicateDeclaration,
    UnknownWidgetKind,
    UnknownTouchKind,
    Arity,
    InvalidContext,
    InvalidAssignment,
    AsyncCallback,
    DuplicateHeader,
    MissingImport,
    MisplacedHandler,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::UnterminatedString => "E0001",
            Code::UnknownCharacter => "E0002",
            Code::Syntax => "E0003",
            Code::NestingTooDeep => "E0004",
            Code::UnresolvedName => "E0101",
            Code::UnresolvedMember => "E0102",
            Code::UnresolvedWidget => "E0103",
            Code::TypeMismatch => "E0104",
            Code::DuplicateDeclaration => "E0105",
            Code::UnknownWidgetKind => "E0106",
            Code::UnknownTouchKind => "E0107",
            Code::Arity => "E0108",
            Code::InvalidContext => "E0109",
            Code::InvalidAssignment => "E0110",
            Code::AsyncCallback => "E0111",
            Code::DuplicateHeader => "E0112",
            Code::MisplacedHandler => "E0113",
            Code::MissingImport => "W0001",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: Code,
    pub message: String,
    pub span: Span,
}

impl Diagnostic {
    pub fn error(code: Code, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, code, message: message.into(), span }
    }

    pub fn warning(code: Code, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, code, message: message.into(), span }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// Editor-friendly `file:line:col: severity: message` rendering.
    pub fn render(&self, file: &str) -> String {
        format!(
            "{}:{}:{}: {}: {} [{}]",
            file,
            self.span.line,
            self.span.col,
            self.severity,
            self.message,
            self.code.as_str()
        )
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}
