//! Spreadsheet risk triage.
//!
//! The pipeline follows a staged audit: an overall assessment gates on impact
//! and questionnaire-based likelihood before any workbook is opened; scoping
//! then measures the workbook and its set-up risks; a testing decision weighs
//! the amount at risk against the estimated inspection effort; and the
//! inspection rules flag individual cells for review.

pub mod a1;
pub mod address;
pub mod config;
pub mod corpus;
pub mod formula;
pub mod gate;
pub mod graph;
pub mod inspection;
pub mod pipeline;
pub mod report;
pub mod scoping;
pub mod setup;
pub mod severity;
pub mod workbook;

pub use address::{CellAddress, CellPos};
