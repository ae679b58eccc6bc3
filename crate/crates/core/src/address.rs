use std::fmt;

use serde::{Deserialize, Serialize};

use crate::a1;

/// Sheet-local position. Orders row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellPos {
    pub row: u32,
    pub col: u32,
}

impl CellPos {
    pub fn new(row: u32, col: u32) -> Self {
        debug_assert!(row >= 1 && col >= 1);
        CellPos { row, col }
    }

    pub fn parse(text: &str) -> Option<Self> {
        a1::parse_plain(text).map(|(row, col)| CellPos { row, col })
    }

    pub fn offset(self, drow: i64, dcol: i64) -> Option<Self> {
        let row = i64::from(self.row) + drow;
        let col = i64::from(self.col) + dcol;
        let ok = (1..=i64::from(crate::formula::MAX_ROW)).contains(&row)
            && (1..=i64::from(crate::formula::MAX_COL)).contains(&col);
        ok.then(|| CellPos::new(row as u32, col as u32))
    }
}

impl Serialize for CellPos {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellPos {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        CellPos::parse(&text)
            .ok_or_else(|| serde::de::Error::custom(format!("not an A1 address: {text:?}")))
    }
}

impl fmt::Display for CellPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&a1::render(self.row, self.col))
    }
}

/// A cell in a workbook: sheet index (0-based) plus 1-based row and column.
/// Orders by sheet, then row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellAddress {
    pub sheet: usize,
    pub row: u32,
    pub col: u32,
}

impl CellAddress {
    pub fn new(sheet: usize, row: u32, col: u32) -> Self {
        debug_assert!(row >= 1 && col >= 1);
        CellAddress { sheet, row, col }
    }

    pub fn at(sheet: usize, pos: CellPos) -> Self {
        CellAddress::new(sheet, pos.row, pos.col)
    }

    pub fn pos(&self) -> CellPos {
        CellPos::new(self.row, self.col)
    }

    /// Sheet-local A1 text, e.g. "B2".
    pub fn a1(&self) -> String {
        a1::render(self.row, self.col)
    }

    pub fn from_a1(sheet: usize, text: &str) -> Option<Self> {
        CellPos::parse(text).map(|p| CellAddress::at(sheet, p))
    }
}
