//! Formula language: parsing, rendering, copy-class normalization and
//! tree traversals.

mod ast;
mod normalize;
mod parser;
mod render;
mod traverse;

pub use ast::*;
pub use normalize::{normalize, shift, NormalizedFormula};
pub use parser::{is_name_token, is_numeric_text, parse, FormulaError};
pub use render::{render, sheet_needs_quotes};
pub use traverse::{constants_of, functions_of, refs_of, Constant, PathStep, RefItem};
