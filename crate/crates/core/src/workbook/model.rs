use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::WorkbookError;
use crate::address::{CellAddress, CellPos};
use crate::formula::{self, ErrorKind, Expr, FormulaError};

/// A non-formula value. Formula results are cached as one of these.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Blank,
    Number(f64),
    Text(String),
    Bool(bool),
    Error(ErrorKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    /// Always starts with `=`.
    pub source: String,
    pub parsed: Result<Expr, FormulaError>,
    pub cached: Option<Scalar>,
}

impl Formula {
    pub fn new(source: &str, cached: Option<Scalar>) -> Self {
        let source = if source.starts_with('=') {
            source.to_string()
        } else {
            format!("={source}")
        };
        let parsed = formula::parse(&source);
        Formula {
            source,
            parsed,
            cached,
        }
    }

    pub fn ast(&self) -> Option<&Expr> {
        self.parsed.as_ref().ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellValue {
    Blank,
    Number(f64),
    Text(String),
    Bool(bool),
    Error(ErrorKind),
    Formula(Box<Formula>),
}

impl CellValue {
    pub fn formula(source: &str) -> Self {
        CellValue::Formula(Box::new(Formula::new(source, None)))
    }

    pub fn as_formula(&self) -> Option<&Formula> {
        match self {
            CellValue::Formula(f) => Some(f),
            _ => None,
        }
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, CellValue::Blank)
    }

    /// The error this cell shows, directly or through its cached result.
    pub fn error_kind(&self) -> Option<ErrorKind> {
        match self {
            CellValue::Error(k) => Some(*k),
            CellValue::Formula(f) => match f.cached {
                Some(Scalar::Error(k)) => Some(k),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            CellValue::Blank => "blank",
            CellValue::Number(_) => "number",
            CellValue::Text(_) => "text",
            CellValue::Bool(_) => "boolean",
            CellValue::Error(_) => "error",
            CellValue::Formula(_) => "formula",
        }
    }
}

impl From<Scalar> for CellValue {
    fn from(s: Scalar) -> Self {
        match s {
            Scalar::Blank => CellValue::Blank,
            Scalar::Number(n) => CellValue::Number(n),
            Scalar::Text(t) => CellValue::Text(t),
            Scalar::Bool(b) => CellValue::Bool(b),
            Scalar::Error(k) => CellValue::Error(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sheet {
    pub name: String,
    pub hidden: bool,
    pub protected: bool,
    cells: BTreeMap<CellPos, CellValue>,
    pub hidden_rows: BTreeSet<u32>,
    pub hidden_cols: BTreeSet<u32>,
}

impl Sheet {
    pub fn new(name: impl Into<String>) -> Self {
        Sheet {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Stores a value; storing `Blank` removes the cell.
    pub fn set(&mut self, pos: CellPos, value: CellValue) {
        if value.is_blank() {
            self.cells.remove(&pos);
        } else {
            self.cells.insert(pos, value);
        }
    }

    pub fn get(&self, pos: CellPos) -> Option<&CellValue> {
        self.cells.get(&pos)
    }

    /// Populated cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (CellPos, &CellValue)> + '_ {
        self.cells.iter().map(|(p, v)| (*p, v))
    }

    /// Populated cells inside the rectangle, row-major.
    pub fn cells_in(
        &self,
        top: u32,
        left: u32,
        bottom: u32,
        right: u32,
    ) -> impl Iterator<Item = (CellPos, &CellValue)> + '_ {
        self.cells
            .range(CellPos { row: top, col: 1 }..=CellPos { row: bottom, col: u32::MAX })
            .filter(move |(p, _)| p.col >= left && p.col <= right)
            .map(|(p, v)| (*p, v))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_hidden_pos(&self, pos: CellPos) -> bool {
        self.hidden || self.hidden_rows.contains(&pos.row) || self.hidden_cols.contains(&pos.col)
    }

    pub fn formula_count(&self) -> usize {
        self.cells.values().filter(|v| v.as_formula().is_some()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalcMode {
    #[default]
    Automatic,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkbookSettings {
    pub calc_mode: CalcMode,
    pub recalc_before_save: bool,
    pub iteration_enabled: bool,
    pub max_iterations: u32,
}

impl Default for WorkbookSettings {
    fn default() -> Self {
        WorkbookSettings {
            calc_mode: CalcMode::Automatic,
            recalc_before_save: true,
            iteration_enabled: false,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Features {
    pub has_vba: bool,
    pub has_pivot_tables: bool,
    pub has_scenarios: bool,
    pub has_data_consolidation: bool,
}

impl Features {
    pub fn set_flags(&self) -> Vec<&'static str> {
        [
            ("has_vba", self.has_vba),
            ("has_pivot_tables", self.has_pivot_tables),
            ("has_scenarios", self.has_scenarios),
            ("has_data_consolidation", self.has_data_consolidation),
        ]
        .into_iter()
        .filter_map(|(n, on)| on.then_some(n))
        .collect()
    }
}

/// One physical spreadsheet file. Immutable once built.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workbook {
    pub id: String,
    sheets: Vec<Sheet>,
    defined_names: BTreeMap<String, String>,
    link_records: Vec<String>,
    external_targets: Vec<String>,
    pub settings: WorkbookSettings,
    pub features: Features,
}

impl Workbook {
    /// Validates the parts and derives the external-target list from link
    /// records plus every workbook qualifier found in formulas.
    pub fn from_parts(
        id: impl Into<String>,
        sheets: Vec<Sheet>,
        defined_names: BTreeMap<String, String>,
        link_records: Vec<String>,
        settings: WorkbookSettings,
        features: Features,
    ) -> Result<Self, WorkbookError> {
        let mut seen = BTreeSet::new();
        for s in &sheets {
            if !seen.insert(s.name.to_lowercase()) {
                return Err(WorkbookError::DuplicateSheet(s.name.clone()));
            }
        }
        for name in defined_names.keys() {
            if !formula::is_name_token(name) {
                return Err(WorkbookError::InvalidName(name.clone()));
            }
        }
        if settings.iteration_enabled && settings.max_iterations < 1 {
            return Err(WorkbookError::InvalidSettings(
                "max_iterations must be at least 1 when iteration is enabled".into(),
            ));
        }
        let mut targets: BTreeSet<String> = link_records.iter().cloned().collect();
        for sheet in &sheets {
            for (_, v) in sheet.cells() {
                if let Some(ast) = v.as_formula().and_then(Formula::ast) {
                    for r in formula::refs_of(ast) {
                        let book = match r {
                            formula::RefItem::Cell(c) => c.workbook.as_deref(),
                            formula::RefItem::Range(r) => r.workbook(),
                            formula::RefItem::Name(n) => n.workbook.as_deref(),
                        };
                        if let Some(b) = book {
                            targets.insert(resolve_link_index(b, &link_records));
                        }
                    }
                }
            }
        }
        Ok(Workbook {
            id: id.into(),
            sheets,
            defined_names,
            link_records,
            external_targets: targets.into_iter().collect(),
            settings,
            features,
        })
    }

    pub fn sheets(&self) -> &[Sheet] {
        &self.sheets
    }

    pub fn sheet(&self, index: usize) -> Option<&Sheet> {
        self.sheets.get(index)
    }

    /// Case-insensitive sheet lookup.
    pub fn sheet_index(&self, name: &str) -> Option<usize> {
        self.sheets
            .iter()
            .position(|s| s.name.to_lowercase() == name.to_lowercase())
    }

    pub fn defined_names(&self) -> &BTreeMap<String, String> {
        &self.defined_names
    }

    /// Case-insensitive defined-name lookup.
    pub fn defined_name(&self, name: &str) -> Option<(&str, &str)> {
        self.defined_names
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// External workbook links recorded by the file itself, in file order.
    pub fn link_records(&self) -> &[String] {
        &self.link_records
    }

    /// Every distinct external workbook named by a link record or formula, sorted.
    pub fn external_targets(&self) -> &[String] {
        &self.external_targets
    }

    pub fn cell(&self, addr: CellAddress) -> Result<&CellValue, WorkbookError> {
        static BLANK: CellValue = CellValue::Blank;
        let sheet = self
            .sheets
            .get(addr.sheet)
            .ok_or(WorkbookError::SheetIndexOutOfRange(addr.sheet))?;
        Ok(sheet.get(addr.pos()).unwrap_or(&BLANK))
    }

    /// Like [`Workbook::cell`] but treats an out-of-range sheet as blank.
    pub fn value(&self, addr: CellAddress) -> &CellValue {
        static BLANK: CellValue = CellValue::Blank;
        self.sheets
            .get(addr.sheet)
            .and_then(|s| s.get(addr.pos()))
            .unwrap_or(&BLANK)
    }

    pub fn formula_cells(&self) -> impl Iterator<Item = (CellAddress, &Formula)> + '_ {
        self.sheets.iter().enumerate().flat_map(|(i, s)| {
            s.cells()
                .filter_map(move |(p, v)| v.as_formula().map(|f| (CellAddress::at(i, p), f)))
        })
    }
}

/// Stored formulas refer to linked workbooks by 1-based index (`[1]Sheet!A1`);
/// map such indices onto the link record they denote.
pub(crate) fn resolve_link_index(book: &str, link_records: &[String]) -> String {
    book.parse::<usize>()
        .ok()
        .and_then(|i| i.checked_sub(1))
        .and_then(|i| link_records.get(i))
        .cloned()
        .unwrap_or_else(|| book.to_string())
}
