//! The plain-text verification document: lexing, parsing with located
//! diagnostics, and name resolution into engine values.

mod diagnostics;
mod document;
mod lexer;
mod parser;

pub use diagnostics::{Diagnostic, DiagnosticKind, Pos};
pub use document::{CheckDirective, CheckSpec, SpecDocument, WeakCoverDecl, CHECK_KINDS};
pub use parser::{parse_spec, MAX_DEPTH, MAX_EXPONENT, MAX_TERMS};
