//! Workbook model and its two loaders: OOXML containers and the canonical
//! JSON format.

mod canonical;
mod model;
mod ooxml;

use std::path::Path;

pub use canonical::{load_canonical, save_canonical, FORMAT_VERSION};
pub use model::*;
pub use ooxml::load_workbook_file;

#[derive(Debug, thiserror::Error)]
pub enum WorkbookError {
    #[error("not a zip container: {0}")]
    NotAZip(String),
    #[error("missing part: {0}")]
    MissingPart(String),
    #[error("malformed XML in {part}: {message}")]
    MalformedXml { part: String, message: String },
    #[error("sheet {sheet:?} declares dimension {dimension} beyond the format limits")]
    DimensionTooLarge { sheet: String, dimension: String },
    #[error("{path}: {message}")]
    Canonical { path: String, message: String },
    #[error("duplicate sheet name {0:?}")]
    DuplicateSheet(String),
    #[error("invalid defined name {0:?}")]
    InvalidName(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("sheet index {0} out of range")]
    SheetIndexOutOfRange(usize),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl WorkbookError {
    /// True for errors in the file's content, as opposed to schema errors in
    /// a canonical document.
    pub fn is_corrupt_workbook(&self) -> bool {
        !matches!(self, WorkbookError::Canonical { .. })
    }
}

/// Load a workbook by extension: `.sgwb` and `.json` are canonical, anything
/// else is treated as an OOXML container. The id is set to the file name when
/// the document does not provide one.
pub fn load_path(path: &Path) -> Result<Workbook, WorkbookError> {
    let bytes = std::fs::read(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let mut wb = match ext.as_deref() {
        Some("sgwb") | Some("json") => {
            let text = String::from_utf8(bytes).map_err(|_| WorkbookError::Canonical {
                path: ".".into(),
                message: "document is not UTF-8".into(),
            })?;
            load_canonical(&text)?
        }
        _ => load_workbook_file(&bytes)?,
    };
    if wb.id.is_empty() {
        wb.id = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(wb)
}
