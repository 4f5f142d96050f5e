//! Polystore query language: the scoping grammar (`bdrel`, `bdarray`,
//! `bdtext`, `bdcast`) and the three island dialects.

pub mod ast;
mod compile;
mod lexer;
mod parser;
mod pretty;

pub use ast::*;
pub use compile::{compile_arr, compile_rel, compile_text};
pub use parser::parse;
